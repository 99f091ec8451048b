use super::grid::{ch, BevGrid};
use super::{Roi, RoiSet};
use crate::error::{Error, Result};
use crate::eval::rotated_iou;
use crate::geometry::OrientedBox;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Thresholds used to turn a dense grid into a set of regions of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiParams {
    pub conf_threshold: f64,
    pub nms_iou: f64,
    /// Keep at most this many ROIs (highest confidence first).
    pub max_rois: Option<usize>,
}

impl Default for RoiParams {
    fn default() -> Self {
        Self { conf_threshold: 0.5, nms_iou: 0.3, max_rois: None }
    }
}

impl RoiParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.conf_threshold > 0.0 && self.conf_threshold < 1.0) {
            return Err(Error::invalid("conf_threshold must be in (0, 1)"));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou < 1.0) {
            return Err(Error::invalid("nms_iou must be in (0, 1)"));
        }
        if self.max_rois == Some(0) {
            return Err(Error::invalid("max_rois must be at least 1"));
        }
        Ok(())
    }
}

/// Priority order of NMS: confidence descending, then x, y ascending; the
/// remaining fields only break exact ties so the order is total.
fn priority(a: &OrientedBox, b: &OrientedBox) -> Ordering {
    b.confidence
        .total_cmp(&a.confidence)
        .then(a.x.total_cmp(&b.x))
        .then(a.y.total_cmp(&b.y))
        .then(a.length.total_cmp(&b.length))
        .then(a.width.total_cmp(&b.width))
        .then(a.heading.total_cmp(&b.heading))
}

/// Greedy non-maximum suppression with rotated IoU.
///
/// A box is suppressed when its IoU with an already kept, higher-priority box
/// is at least `iou_threshold`.
pub fn nms(boxes: &[OrientedBox], iou_threshold: f64) -> Vec<OrientedBox> {
    let mut sorted: Vec<OrientedBox> = boxes.to_vec();
    sorted.sort_by(priority);
    // exact duplicates always suppress each other
    sorted.dedup_by(|a, b| priority(a, b) == Ordering::Equal);
    let mut kept: Vec<OrientedBox> = Vec::new();
    'outer: for b in sorted {
        for k in &kept {
            if k.center_distance(&b) <= k.circumradius() + b.circumradius() && rotated_iou(k, &b) >= iou_threshold {
                continue 'outer;
            }
        }
        kept.push(b);
    }
    kept
}

/// Candidate boxes from every cell whose confidence exceeds the threshold.
pub(crate) fn candidates(grid: &BevGrid, residual: Option<&[[f32; 3]]>, conf_threshold: f64) -> Vec<OrientedBox> {
    let spec = grid.spec;
    let thr = conf_threshold as f32;
    let mut out = Vec::new();
    for (i, c) in grid.data.chunks_exact(spec.d).enumerate() {
        if c[ch::CONFIDENCE] > thr {
            let (h, w) = (i / spec.w, i % spec.w);
            let r = residual.map_or([0.0; 3], |r| r[i]);
            out.push(grid.decode_cell(h, w, r));
        }
    }
    out
}

pub(crate) fn decode_boxes(grid: &BevGrid, residual: Option<&[[f32; 3]]>, params: &RoiParams) -> Vec<OrientedBox> {
    let mut kept = nms(&candidates(grid, residual, params.conf_threshold), params.nms_iou);
    if let Some(k) = params.max_rois {
        kept.truncate(k);
    }
    kept
}

/// Thresholds, decodes and suppresses candidate boxes, then masks the grid to
/// the union of the surviving ROI footprints.
pub fn generate_rois(grid: &BevGrid, timestamp: f64, params: &RoiParams) -> Result<(RoiSet, BevGrid)> {
    params.validate()?;
    let boxes = decode_boxes(grid, None, params);
    let rois = boxes.into_iter().enumerate().map(|(i, bbox)| Roi { id: i as u32, bbox }).collect();
    let roi_set = RoiSet { timestamp, rois };
    let sparse = grid.masked(&roi_set.footprint_mask(&grid.spec));
    Ok((roi_set, sparse))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roi_codec::{synthesize_grid, GridSpec};
    use crate::scene_sim::Observation;

    fn spec() -> GridSpec {
        GridSpec::new((-20.0, 20.0, -10.0, 10.0), 0.4, 15).unwrap()
    }

    fn obs(objects: Vec<OrientedBox>) -> Observation {
        Observation { agent_id: 0, timestamp: 0.0, objects, ground_truth: vec![] }
    }

    #[test]
    fn round_trip_single_box() {
        let b = OrientedBox::new(0.9, 3.17, -2.41, 4.3, 1.8, 0.61);
        let g = synthesize_grid(&obs(vec![b]), &spec(), 2);
        let (rois, sparse) = generate_rois(&g, 1.5, &RoiParams::default()).unwrap();
        assert_eq!(rois.rois.len(), 1);
        let r = rois.rois[0].bbox;
        assert!(r.center_distance(&b) < 1e-5);
        assert!((r.heading - b.heading).abs() < 1e-6);
        assert!((r.confidence - 0.9).abs() < 1e-6);
        assert_eq!(rois.timestamp, 1.5);
        for (h, w) in sparse.nonzero_cells() {
            let (x, y) = g.spec.cell_center(h, w);
            assert!(r.contains(x, y));
        }
    }

    #[test]
    fn empty_grid() {
        let g = BevGrid::zeros(spec());
        let (rois, sparse) = generate_rois(&g, 0.0, &RoiParams::default()).unwrap();
        assert!(rois.rois.is_empty());
        assert_eq!(sparse.count_nonzero(), 0);
    }

    #[test]
    fn nms_keeps_higher_confidence_duplicate() {
        let a = OrientedBox::new(0.9, 0.0, 0.0, 4.0, 2.0, 0.0);
        let mut b = a;
        b.confidence = 0.8;
        assert_eq!(nms(&[b, a], 0.3), vec![a]);
    }

    #[test]
    fn nms_trivial_cases() {
        let a = OrientedBox::new(0.9, 0.0, 0.0, 4.0, 2.0, 0.0);
        assert_eq!(nms(&[a], 0.5), vec![a]);
        let b = OrientedBox::new(0.7, 10.0, 0.0, 4.0, 2.0, 1.0);
        assert_eq!(nms(&[b, a], 0.5), vec![a, b]);
        assert!(nms(&[], 0.5).is_empty());
    }

    #[test]
    fn max_rois_caps_output() {
        let boxes: Vec<_> = (0..5)
            .map(|i| OrientedBox::new(0.6 + 0.05 * i as f64, -15.0 + 7.0 * i as f64, 0.0, 4.0, 2.0, 0.0))
            .collect();
        let g = synthesize_grid(&obs(boxes), &spec(), 2);
        let p = RoiParams { max_rois: Some(2), ..RoiParams::default() };
        let (rois, _) = generate_rois(&g, 0.0, &p).unwrap();
        assert_eq!(rois.rois.len(), 2);
        assert!(rois.rois[0].bbox.confidence > rois.rois[1].bbox.confidence);
    }

    #[test]
    fn rejects_bad_params() {
        let g = BevGrid::zeros(spec());
        let p = RoiParams { conf_threshold: 1.2, ..RoiParams::default() };
        assert!(generate_rois(&g, 0.0, &p).is_err());
    }
}
