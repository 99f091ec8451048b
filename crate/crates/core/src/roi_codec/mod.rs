//! Synthetic BEV feature codec: rasterizes observations into feature grids,
//! decodes regions of interest, masks grids to them and packs messages.

mod decode;
mod grid;
mod message;
mod synth;

pub(crate) use decode::decode_boxes;
pub use decode::{generate_rois, nms, RoiParams};
pub use grid::{ch, BevGrid, GridSpec};
pub use message::{decode_message, encode_message, read_message_log, write_message_log};
pub use synth::synthesize_grid;

use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use serde::{Deserialize, Serialize};

/// Voxels an ROI covers on average when converting a ROI budget to volume.
pub const VOXELS_PER_ROI: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Roi {
    pub id: u32,
    pub bbox: OrientedBox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiSet {
    pub timestamp: f64,
    pub rois: Vec<Roi>,
}

impl RoiSet {
    pub fn empty(timestamp: f64) -> Self {
        Self { timestamp, rois: Vec::new() }
    }

    pub fn boxes(&self) -> Vec<OrientedBox> {
        self.rois.iter().map(|r| r.bbox).collect()
    }

    pub fn get(&self, id: u32) -> Option<&Roi> {
        self.rois.iter().find(|r| r.id == id)
    }

    /// Binary mask `H` of the cells covered by any ROI.
    pub fn footprint_mask(&self, spec: &GridSpec) -> Vec<bool> {
        let mut mask = vec![false; spec.cells()];
        for r in &self.rois {
            for (h, w) in spec.footprint(&r.bbox) {
                mask[h * spec.w + w] = true;
            }
        }
        mask
    }
}

/// What a collaborator sends: its ROI set and the ROI-masked feature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CollabMessage {
    pub sender_id: u32,
    pub timestamp: f64,
    pub roi_set: RoiSet,
    pub sparse_grid: BevGrid,
}

impl CollabMessage {
    /// Runs ROI generation on a dense grid and packs the result.
    pub fn pack(sender_id: u32, timestamp: f64, dense: &BevGrid, params: &RoiParams) -> Result<Self> {
        let (roi_set, sparse_grid) = generate_rois(dense, timestamp, params)?;
        Ok(Self { sender_id, timestamp, roi_set, sparse_grid })
    }

    /// Checks that every nonzero cell lies inside some ROI footprint.
    pub fn check_sparsity(&self) -> Result<()> {
        let mask = self.roi_set.footprint_mask(&self.sparse_grid.spec);
        for (h, w) in self.sparse_grid.nonzero_cells() {
            if !mask[h * self.sparse_grid.spec.w + w] {
                return Err(Error::Format(format!("nonzero cell ({h}, {w}) outside every ROI")));
            }
        }
        Ok(())
    }
}

/// Fractional bits kept in the odd-part logarithm of [`comm_volume`].
const COMM_VOLUME_FRACTION_BITS: i32 = 40;

/// Communication volume, in log₂ voxels, of a message budget of `k_rois` ROIs.
///
/// `k = m · 2^e` with `m` odd; the logarithm of `40 m` is rounded to 40
/// fractional bits so adding the integer `e` is exact and doubling `k` adds
/// exactly 1.
pub fn comm_volume(k_rois: usize) -> Result<f64> {
    if k_rois < 1 {
        return Err(Error::invalid("comm_volume needs at least one ROI"));
    }
    let e = k_rois.trailing_zeros();
    let odd = (k_rois >> e) as f64;
    let scale = 2f64.powi(COMM_VOLUME_FRACTION_BITS);
    let base = ((VOXELS_PER_ROI * odd).log2() * scale).round() / scale;
    Ok(base + e as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comm_volume_values() {
        assert!((comm_volume(1).unwrap() - 5.321928094887363).abs() < 1e-12);
        assert!((comm_volume(10).unwrap() - 8.643856189774725).abs() < 1e-12);
        for k in 1..=2048usize {
            let v = comm_volume(k).unwrap();
            assert!((v - (40.0 * k as f64).log2()).abs() < 1e-12);
            assert_eq!(comm_volume(2 * k).unwrap() - v, 1.0);
        }
        assert!(comm_volume(0).is_err());
    }

    #[test]
    fn mask_is_idempotent() {
        let spec = GridSpec::new((-10.0, 10.0, -5.0, 5.0), 0.4, 9).unwrap();
        let obs = crate::scene_sim::Observation {
            agent_id: 1,
            timestamp: 0.0,
            objects: vec![
                OrientedBox::new(0.9, 1.0, 1.0, 4.0, 2.0, 0.3),
                OrientedBox::new(0.4, -5.0, 1.0, 4.0, 2.0, 0.3),
            ],
            ground_truth: vec![],
        };
        let dense = synthesize_grid(&obs, &spec, 1);
        let msg = CollabMessage::pack(1, 0.0, &dense, &RoiParams::default()).unwrap();
        msg.check_sparsity().unwrap();
        // the 0.4-confidence object is below threshold and masked away
        assert!(msg.sparse_grid.count_nonzero() < dense.count_nonzero());
        let again = msg.sparse_grid.masked(&msg.roi_set.footprint_mask(&spec));
        assert_eq!(again, msg.sparse_grid);
    }
}
