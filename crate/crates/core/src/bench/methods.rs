//! Runs every compensation method on one ego evaluation.

use super::config::{ExperimentConfig, Method};
use super::scene::{grid_for, EvalInputs};
use crate::error::{Error, Result};
use crate::flow::{build_flow_map, predict_latest, EstimatorParams, MotionModel, PosePrediction};
use crate::fusion::{decode_detections, fuse, warp_boxes, warp_features, WarpedGrid};
use crate::geometry::OrientedBox;
use crate::roi_codec::{nms, GridSpec};
use crate::tracker::TrackStore;

/// Motion models available to the methods.
#[derive(Debug, Clone)]
pub struct Models {
    pub attention: Option<MotionModel>,
    pub constant_velocity: MotionModel,
}

impl Models {
    pub fn new(attention: Option<EstimatorParams>) -> Self {
        Self { attention: attention.map(MotionModel::Attention), constant_velocity: MotionModel::ConstantVelocity }
    }

    fn attention(&self) -> Result<&MotionModel> {
        self.attention
            .as_ref()
            .ok_or_else(|| Error::invalid("method needs the attention estimator but none was provided"))
    }
}

/// Detections of each requested method, in the order given.
pub fn evaluate_methods(
    inputs: &EvalInputs,
    methods: &[Method],
    models: &Models,
    cfg: &ExperimentConfig,
    spec: &GridSpec,
) -> Result<Vec<Vec<OrientedBox>>> {
    let ego_grid = grid_for(&inputs.ego, spec, inputs.scene_seed);
    let ego = WarpedGrid::identity(ego_grid, inputs.ego.agent_id);
    let tracker = cfg.tracker_config();
    let mut stores = Vec::new();
    for col in &inputs.collaborators {
        let mut store = TrackStore::new(col.agent, cfg.history);
        for m in &col.history {
            store.ingest(&m.roi_set, &tracker)?;
        }
        stores.push(store);
    }
    let predict = |model: &MotionModel| -> Result<Vec<Vec<PosePrediction>>> {
        stores.iter().map(|s| predict_latest(s, inputs.ego_time, model)).collect()
    };
    let decode = |grids: Vec<WarpedGrid>| -> Result<Vec<OrientedBox>> {
        decode_detections(&fuse(&ego, &grids)?, cfg.conf_threshold, cfg.nms_iou)
    };
    let warped = |preds: &[Vec<PosePrediction>]| -> Result<Vec<WarpedGrid>> {
        let mut out = Vec::new();
        for (col, p) in inputs.collaborators.iter().zip(preds) {
            if let Some(latest) = col.latest() {
                let flow = build_flow_map(p, spec);
                out.push(warp_features(&latest.sparse_grid, &flow, col.agent)?);
            }
        }
        Ok(out)
    };
    let mut mha_preds = None;
    let mut out = Vec::with_capacity(methods.len());
    for &method in methods {
        let dets = match method {
            Method::NoCompensation => decode(
                inputs
                    .collaborators
                    .iter()
                    .filter_map(|c| c.latest().map(|m| WarpedGrid::identity(m.sparse_grid.clone(), c.agent)))
                    .collect(),
            )?,
            Method::SyncIdeal => {
                let mut grids = Vec::new();
                for c in &inputs.collaborators {
                    let m = c.sync.as_ref().ok_or_else(|| Error::invalid("synchronous messages were not generated"))?;
                    grids.push(WarpedGrid::identity(m.sparse_grid.clone(), c.agent));
                }
                decode(grids)?
            }
            Method::FeatureWarpCv => decode(warped(&predict(&models.constant_velocity)?)?)?,
            Method::FeatureWarpMha => {
                if mha_preds.is_none() {
                    mha_preds = Some(predict(models.attention()?)?);
                }
                decode(warped(mha_preds.as_ref().unwrap())?)?
            }
            Method::BoxWarp => {
                if mha_preds.is_none() {
                    mha_preds = Some(predict(models.attention()?)?);
                }
                let mut boxes = decode(Vec::new())?;
                for (c, p) in inputs.collaborators.iter().zip(mha_preds.as_ref().unwrap()) {
                    if let Some(latest) = c.latest() {
                        boxes.extend(warp_boxes(&latest.roi_set, p).boxes());
                    }
                }
                nms(&boxes, cfg.nms_iou)
            }
        };
        out.push(dets);
    }
    Ok(out)
}
