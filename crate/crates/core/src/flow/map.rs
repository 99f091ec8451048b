use super::predict::PosePrediction;
use crate::geometry::wrap_angle;
use crate::roi_codec::GridSpec;

/// Per-cell displacement `(dh, dw)` in cells, plus the rotation applied to
/// the ROI each cell belongs to. Both are zero outside ROI footprints.
#[derive(Debug, Clone, PartialEq)]
pub struct BevFlowMap {
    pub spec: GridSpec,
    pub vectors: Vec<[f64; 2]>,
    pub rotation: Vec<f64>,
}

impl BevFlowMap {
    pub fn zeros(spec: GridSpec) -> Self {
        Self { spec, vectors: vec![[0.0; 2]; spec.cells()], rotation: vec![0.0; spec.cells()] }
    }

    pub fn at(&self, h: usize, w: usize) -> [f64; 2] {
        self.vectors[h * self.spec.w + w]
    }

    pub fn is_zero(&self) -> bool {
        self.vectors.iter().all(|v| v[0] == 0.0 && v[1] == 0.0) && self.rotation.iter().all(|&r| r == 0.0)
    }
}

/// Rasterizes each prediction's rigid motion over its source footprint:
/// a cell center `p` moves to `R(Δα)(p - c_old) + c_new`. Cells claimed by
/// several ROIs go to the higher source confidence, then the earlier
/// prediction.
pub fn build_flow_map(predictions: &[PosePrediction], spec: &GridSpec) -> BevFlowMap {
    let mut map = BevFlowMap::zeros(*spec);
    let mut owner: Vec<Option<f64>> = vec![None; spec.cells()];
    for p in predictions {
        let src = p.source;
        let da = wrap_angle(p.heading - src.heading);
        let (s, c) = da.sin_cos();
        for (h, w) in spec.footprint(&src) {
            let i = h * spec.w + w;
            if owner[i].is_some_and(|conf| conf >= src.confidence) {
                continue;
            }
            owner[i] = Some(src.confidence);
            let (px, py) = spec.cell_center(h, w);
            let (rx, ry) = (px - src.x, py - src.y);
            let nx = c * rx - s * ry + p.x;
            let ny = s * rx + c * ry + p.y;
            map.vectors[i] = [(ny - py) / spec.cell, (nx - px) / spec.cell];
            map.rotation[i] = da;
        }
    }
    map
}
