use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use serde::{Deserialize, Serialize};

/// Channel indices of the synthetic feature layout.
pub mod ch {
    pub const CONFIDENCE: usize = 0;
    /// Box-center offset from the cell center along x, in cells.
    pub const OFFSET_X: usize = 1;
    /// Box-center offset from the cell center along y, in cells.
    pub const OFFSET_Y: usize = 2;
    pub const LENGTH: usize = 3;
    pub const WIDTH: usize = 4;
    pub const COS: usize = 5;
    pub const SIN: usize = 6;
    /// First signature channel.
    pub const SIGNATURE: usize = 7;
}

/// Geometry of a BEV grid. Row `h` runs along +y, column `w` along +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell: f64,
    pub h: usize,
    pub w: usize,
    pub d: usize,
}

impl GridSpec {
    pub fn new(extent: (f64, f64, f64, f64), cell: f64, d: usize) -> Result<Self> {
        let (x_min, x_max, y_min, y_max) = extent;
        if !(cell > 0.0) || !(x_max > x_min) || !(y_max > y_min) {
            return Err(Error::invalid("grid extent and cell size must be positive"));
        }
        if d < ch::SIGNATURE {
            return Err(Error::invalid(format!("need at least {} channels, got {d}", ch::SIGNATURE)));
        }
        let count = |span: f64| -> Result<usize> {
            let n = span / cell;
            let r = n.round();
            if (n - r).abs() > 1e-6 || r < 1.0 {
                return Err(Error::invalid(format!("extent span {span} is not a whole number of {cell} m cells")));
            }
            Ok(r as usize)
        };
        Ok(Self { x_min, x_max, y_min, y_max, cell, w: count(x_max - x_min)?, h: count(y_max - y_min)?, d })
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn cell_center(&self, h: usize, w: usize) -> (f64, f64) {
        (self.x_min + (w as f64 + 0.5) * self.cell, self.y_min + (h as f64 + 0.5) * self.cell)
    }

    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let fw = ((x - self.x_min) / self.cell).floor();
        let fh = ((y - self.y_min) / self.cell).floor();
        if fw < 0.0 || fh < 0.0 || fw >= self.w as f64 || fh >= self.h as f64 {
            return None;
        }
        Some((fh as usize, fw as usize))
    }

    /// Cells whose centers lie inside `b`, in row-major order.
    pub fn footprint(&self, b: &OrientedBox) -> Vec<(usize, usize)> {
        let (bx0, bx1, by0, by1) = b.aabb();
        let lo = |v: f64, origin: f64| ((v - origin) / self.cell - 0.5).floor().max(0.0);
        let hi = |v: f64, origin: f64, n: usize| ((v - origin) / self.cell - 0.5).ceil().min(n as f64 - 1.0);
        let (h0, h1) = (lo(by0, self.y_min), hi(by1, self.y_min, self.h));
        let (w0, w1) = (lo(bx0, self.x_min), hi(bx1, self.x_min, self.w));
        let mut out = Vec::new();
        if h1 < h0 || w1 < w0 {
            return out;
        }
        for h in h0 as usize..=h1 as usize {
            for w in w0 as usize..=w1 as usize {
                let (cx, cy) = self.cell_center(h, w);
                if b.contains(cx, cy) {
                    out.push((h, w));
                }
            }
        }
        out
    }
}

/// Dense `H × W × D` feature map stored row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    pub spec: GridSpec,
    pub data: Vec<f32>,
}

impl BevGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { data: vec![0.0; spec.cells() * spec.d], spec }
    }

    #[inline]
    pub fn index(&self, h: usize, w: usize) -> usize {
        (h * self.spec.w + w) * self.spec.d
    }

    #[inline]
    pub fn cell(&self, h: usize, w: usize) -> &[f32] {
        let i = self.index(h, w);
        &self.data[i..i + self.spec.d]
    }

    #[inline]
    pub fn cell_mut(&mut self, h: usize, w: usize) -> &mut [f32] {
        let i = self.index(h, w);
        let d = self.spec.d;
        &mut self.data[i..i + d]
    }

    #[inline]
    pub fn confidence(&self, h: usize, w: usize) -> f32 {
        self.data[self.index(h, w) + ch::CONFIDENCE]
    }

    pub fn is_nonzero(&self, h: usize, w: usize) -> bool {
        self.cell(h, w).iter().any(|&v| v != 0.0)
    }

    /// Row-major list of cells with any nonzero channel.
    pub fn nonzero_cells(&self) -> Vec<(usize, usize)> {
        let d = self.spec.d;
        self.data
            .chunks_exact(d)
            .enumerate()
            .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
            .map(|(i, _)| (i / self.spec.w, i % self.spec.w))
            .collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.chunks_exact(self.spec.d).filter(|c| c.iter().any(|&v| v != 0.0)).count()
    }

    /// Zeroes every cell where `mask` is false.
    pub fn masked(&self, mask: &[bool]) -> BevGrid {
        assert_eq!(mask.len(), self.spec.cells());
        let mut out = self.clone();
        let d = self.spec.d;
        for (cell, &keep) in out.data.chunks_exact_mut(d).zip(mask) {
            if !keep {
                cell.fill(0.0);
            }
        }
        out
    }

    /// Decodes the box written into cell `(h, w)`, corrected by a side-channel
    /// residual `[dh, dw, dheading]` (cells, cells, radians).
    pub fn decode_cell(&self, h: usize, w: usize, residual: [f32; 3]) -> OrientedBox {
        let c = self.cell(h, w);
        let (cx, cy) = self.spec.cell_center(h, w);
        let cell = self.spec.cell;
        OrientedBox::new(
            c[ch::CONFIDENCE] as f64,
            cx + (c[ch::OFFSET_X] as f64 + residual[1] as f64) * cell,
            cy + (c[ch::OFFSET_Y] as f64 + residual[0] as f64) * cell,
            c[ch::LENGTH] as f64,
            c[ch::WIDTH] as f64,
            (c[ch::SIN] as f64).atan2(c[ch::COS] as f64) + residual[2] as f64,
        )
    }
}
