//! Feature transport along flow maps, max-fusion and final decoding.

use crate::error::{Error, Result};
use crate::flow::{BevFlowMap, PosePrediction};
use crate::geometry::OrientedBox;
use crate::roi_codec::{ch, decode_boxes, BevGrid, RoiParams, RoiSet};

/// Where a cell's feature vector came from: (agent, source row, source column).
pub type Provenance = (u32, u32, u32);

/// A grid whose nonzero cells were relocated from a source grid.
///
/// `residual` holds, per cell, the sub-cell correction `[dh, dw, dheading]`
/// that the integer scatter could not express; the features themselves are
/// copied unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedGrid {
    pub grid: BevGrid,
    pub residual: Vec<[f32; 3]>,
    pub provenance: Vec<Option<Provenance>>,
}

impl WarpedGrid {
    /// Wraps a grid without moving it.
    pub fn identity(grid: BevGrid, agent: u32) -> Self {
        let spec = grid.spec;
        let mut provenance = vec![None; spec.cells()];
        for (h, w) in grid.nonzero_cells() {
            provenance[h * spec.w + w] = Some((agent, h as u32, w as u32));
        }
        Self { residual: vec![[0.0; 3]; spec.cells()], grid, provenance }
    }
}

/// Scatters every nonzero source cell `(h, w)` to
/// `(h + round(dh), w + round(dw))`. Targets off the grid are dropped; on
/// collision the larger confidence wins, then the earlier source cell.
pub fn warp_features(sparse: &BevGrid, flow: &BevFlowMap, agent: u32) -> Result<WarpedGrid> {
    let spec = sparse.spec;
    if flow.spec != spec {
        return Err(Error::invalid("feature grid and flow map use different grid specs"));
    }
    let mut out = WarpedGrid {
        grid: BevGrid::zeros(spec),
        residual: vec![[0.0; 3]; spec.cells()],
        provenance: vec![None; spec.cells()],
    };
    for (h, w) in sparse.nonzero_cells() {
        let i = h * spec.w + w;
        let [vh, vw] = flow.vectors[i];
        let (rh, rw) = (vh.round(), vw.round());
        let (th, tw) = (h as f64 + rh, w as f64 + rw);
        if th < 0.0 || tw < 0.0 || th >= spec.h as f64 || tw >= spec.w as f64 {
            continue;
        }
        let (th, tw) = (th as usize, tw as usize);
        let j = th * spec.w + tw;
        let src = sparse.cell(h, w);
        if out.provenance[j].is_some() && out.grid.confidence(th, tw) >= src[ch::CONFIDENCE] {
            continue;
        }
        out.grid.cell_mut(th, tw).copy_from_slice(src);
        // the decoded center must land on the rotated, translated box center
        let theta = flow.rotation[i];
        let (s, c) = theta.sin_cos();
        let (ox, oy) = (src[ch::OFFSET_X] as f64, src[ch::OFFSET_Y] as f64);
        let (rox, roy) = (c * ox - s * oy, s * ox + c * oy);
        out.residual[j] = [((vh - rh) + (roy - oy)) as f32, ((vw - rw) + (rox - ox)) as f32, theta as f32];
        out.provenance[j] = Some((agent, h as u32, w as u32));
    }
    Ok(out)
}

/// Replaces each ROI's box with its predicted pose. ROIs without a
/// prediction keep their box.
pub fn warp_boxes(roi_set: &RoiSet, predictions: &[PosePrediction]) -> RoiSet {
    let mut out = roi_set.clone();
    for roi in &mut out.rois {
        if let Some(p) = predictions.iter().find(|p| p.roi_id == roi.id) {
            roi.bbox = OrientedBox::new(roi.bbox.confidence, p.x, p.y, roi.bbox.length, roi.bbox.width, p.heading);
        }
    }
    out
}

/// Per-cell max-fusion of several grids at one timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedGrid {
    pub grid: BevGrid,
    pub residual: Vec<[f32; 3]>,
    pub provenance: Vec<Option<Provenance>>,
    /// Number of grids with a nonzero vector at each cell.
    pub contributors: Vec<u32>,
}

impl FusedGrid {
    pub fn as_warped(&self) -> WarpedGrid {
        WarpedGrid { grid: self.grid.clone(), residual: self.residual.clone(), provenance: self.provenance.clone() }
    }
}

/// Keeps, per cell, the contributing vector with the largest confidence;
/// ties go to the smallest provenance.
pub fn fuse(ego: &WarpedGrid, warped: &[WarpedGrid]) -> Result<FusedGrid> {
    let spec = ego.grid.spec;
    if warped.iter().any(|g| g.grid.spec != spec) {
        return Err(Error::invalid("fused grids must share one grid spec"));
    }
    let mut out = FusedGrid {
        grid: BevGrid::zeros(spec),
        residual: vec![[0.0; 3]; spec.cells()],
        provenance: vec![None; spec.cells()],
        contributors: vec![0; spec.cells()],
    };
    let d = spec.d;
    for g in std::iter::once(ego).chain(warped) {
        for (i, cell) in g.grid.data.chunks_exact(d).enumerate() {
            if cell.iter().all(|&v| v == 0.0) {
                continue;
            }
            out.contributors[i] += 1;
            let prov = g.provenance[i];
            let better = match out.provenance[i] {
                None => true,
                Some(cur) => {
                    let (a, b) = (cell[ch::CONFIDENCE], out.grid.data[i * d + ch::CONFIDENCE]);
                    a > b || (a == b && prov.is_some_and(|p| p < cur))
                }
            };
            if better {
                out.grid.data[i * d..(i + 1) * d].copy_from_slice(cell);
                out.residual[i] = g.residual[i];
                out.provenance[i] = prov;
            }
        }
    }
    Ok(out)
}

/// Thresholds, decodes and suppresses boxes from a fused grid.
pub fn decode_detections(fused: &FusedGrid, conf_threshold: f64, nms_iou: f64) -> Result<Vec<OrientedBox>> {
    let params = RoiParams { conf_threshold, nms_iou, max_rois: None };
    params.validate()?;
    Ok(decode_boxes(&fused.grid, Some(&fused.residual), &params))
}
