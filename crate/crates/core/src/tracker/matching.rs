use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::roi_codec::RoiSet;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// `o₁ × o₂` association costs; rows are earlier-frame ROIs, columns
/// later-frame ROIs. Infeasible pairs hold `+∞`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), rows * cols, "cost matrix shape mismatch");
        Self { rows, cols, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        let values: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, values)
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn transposed(&self) -> CostMatrix {
        let mut v = Vec::with_capacity(self.values.len());
        for c in 0..self.cols {
            for r in 0..self.rows {
                v.push(self.get(r, c));
            }
        }
        CostMatrix::new(self.cols, self.rows, v)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MatchResult {
    /// `(row, col, cost)` sorted by row.
    pub pairs: Vec<(usize, usize, f64)>,
    pub unmatched_rows: Vec<usize>,
    pub unmatched_cols: Vec<usize>,
}

impl MatchResult {
    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|p| p.2).sum()
    }

    fn from_pairs(rows: usize, cols: usize, mut pairs: Vec<(usize, usize, f64)>) -> Self {
        pairs.sort_by_key(|p| p.0);
        let mut row_used = vec![false; rows];
        let mut col_used = vec![false; cols];
        for &(r, c, _) in &pairs {
            row_used[r] = true;
            col_used[c] = true;
        }
        Self {
            pairs,
            unmatched_rows: (0..rows).filter(|&r| !row_used[r]).collect(),
            unmatched_cols: (0..cols).filter(|&c| !col_used[c]).collect(),
        }
    }
}

/// Center-distance costs restricted to the front/rear vicinity of each
/// earlier ROI's heading.
pub fn build_cost_matrix(prev: &RoiSet, next: &RoiSet, half_angle: f64) -> Result<CostMatrix> {
    if !(half_angle > 0.0 && half_angle <= FRAC_PI_2) {
        return Err(Error::invalid("half_angle must be in (0, π/2]"));
    }
    let (rows, cols) = (prev.rois.len(), next.rois.len());
    let mut values = Vec::with_capacity(rows * cols);
    for p in &prev.rois {
        for q in &next.rois {
            let (dx, dy) = (q.bbox.x - p.bbox.x, q.bbox.y - p.bbox.y);
            let dist = dx.hypot(dy);
            if dist == 0.0 {
                values.push(0.0);
                continue;
            }
            let off = wrap_angle(dy.atan2(dx) - p.bbox.heading).abs();
            let feasible = off <= half_angle || off >= PI - half_angle;
            values.push(if feasible { dist } else { f64::INFINITY });
        }
    }
    Ok(CostMatrix::new(rows, cols, values))
}

/// Greedy association: rows in ascending order of their minimum cost each
/// claim their cheapest free column, then pairs above `max_cost` are undone.
pub fn greedy_match(cost: &CostMatrix, max_cost: f64) -> MatchResult {
    let row_min = |r: usize| (0..cost.cols).map(|c| cost.get(r, c)).fold(f64::INFINITY, f64::min);
    let mut order: Vec<(f64, usize)> = (0..cost.rows).map(|r| (row_min(r), r)).collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut col_taken = vec![false; cost.cols];
    let mut pairs = Vec::new();
    for (_, r) in order {
        let mut best: Option<(usize, f64)> = None;
        for (c, &taken) in col_taken.iter().enumerate() {
            let v = cost.get(r, c);
            if taken || !v.is_finite() {
                continue;
            }
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((c, v));
            }
        }
        if let Some((c, v)) = best {
            col_taken[c] = true;
            pairs.push((r, c, v));
        }
    }
    pairs.retain(|p| p.2 <= max_cost);
    MatchResult::from_pairs(cost.rows, cost.cols, pairs)
}

/// Minimum-cost assignment (shortest augmenting paths) for `rows <= cols`.
/// Returns the column assigned to every row.
fn assign(cost: &CostMatrix) -> Vec<usize> {
    let (n, m) = (cost.rows, cost.cols);
    debug_assert!(n <= m);
    // 1-based potentials and matching, column 0 is the virtual start
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut col_of_row = vec![0usize; n];
    for j in 1..=m {
        if owner[j] != 0 {
            col_of_row[owner[j] - 1] = j - 1;
        }
    }
    col_of_row
}

/// Optimal assignment over the finite entries (as many pairs as possible,
/// then least total cost), followed by the same `max_cost` filter as
/// [`greedy_match`].
pub fn hungarian_match(cost: &CostMatrix, max_cost: f64) -> MatchResult {
    if cost.rows == 0 || cost.cols == 0 {
        return MatchResult::from_pairs(cost.rows, cost.cols, Vec::new());
    }
    // infeasible pairs become a penalty larger than any finite assignment
    let finite_sum: f64 = cost.values.iter().filter(|v| v.is_finite()).map(|v| v.abs()).sum();
    let big = 2.0 * finite_sum + 1.0;
    let sanitized = CostMatrix::new(
        cost.rows,
        cost.cols,
        cost.values.iter().map(|&v| if v.is_finite() { v } else { big }).collect(),
    );
    let transposed = cost.rows > cost.cols;
    let work = if transposed { sanitized.transposed() } else { sanitized };
    let mut pairs = Vec::new();
    for (r, c) in assign(&work).into_iter().enumerate() {
        let (row, col) = if transposed { (c, r) } else { (r, c) };
        let v = cost.get(row, col);
        if v.is_finite() && v <= max_cost {
            pairs.push((row, col, v));
        }
    }
    MatchResult::from_pairs(cost.rows, cost.cols, pairs)
}
