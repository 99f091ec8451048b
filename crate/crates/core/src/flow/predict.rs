use super::mha::{model_forward, ModelInput};
use super::params::EstimatorParams;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, OrientedBox};
use crate::tracker::{TrackState, TrackStore, Tracklet};
use serde::{Deserialize, Serialize};

/// Predicted pose of one tracklet at a query time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosePrediction {
    pub track_id: u64,
    /// Id of the ROI in the sender's latest frame, when known.
    pub roi_id: u32,
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    /// The ROI at its last observed pose.
    pub source: OrientedBox,
    /// Set when the history was too short and zero motion was assumed.
    pub fallback: bool,
}

impl PosePrediction {
    /// Zero-motion prediction: the tracklet's last pose.
    pub fn stationary(tracklet: &Tracklet, fallback: bool) -> Self {
        let b = tracklet.last_box;
        Self { track_id: tracklet.id, roi_id: 0, x: b.x, y: b.y, heading: b.heading, source: b, fallback }
    }

    /// The source box moved to the predicted pose, size and confidence kept.
    pub fn moved_box(&self) -> OrientedBox {
        OrientedBox::new(self.source.confidence, self.x, self.y, self.source.length, self.source.width, self.heading)
    }

    fn offset(tracklet: &Tracklet, dx: f64, dy: f64, da: f64) -> Self {
        let b = tracklet.last_box;
        Self {
            track_id: tracklet.id,
            roi_id: 0,
            x: b.x + dx,
            y: b.y + dy,
            heading: wrap_angle(b.heading + da),
            source: b,
            fallback: false,
        }
    }
}

/// Which motion model drives flow estimation.
#[derive(Debug, Clone, PartialEq)]
pub enum MotionModel {
    Attention(EstimatorParams),
    ConstantVelocity,
}

impl MotionModel {
    pub fn predict(&self, tracklet: &Tracklet, t_query: f64) -> Result<PosePrediction> {
        match self {
            MotionModel::Attention(p) => estimate_pose(tracklet, t_query, p),
            MotionModel::ConstantVelocity => estimate_pose_cv(tracklet, t_query),
        }
    }
}

/// Predicts every ROI of the store's latest frame at `t_query`.
pub fn predict_latest(store: &TrackStore, t_query: f64, model: &MotionModel) -> Result<Vec<PosePrediction>> {
    let Some(frame) = store.latest_frame() else {
        return Ok(Vec::new());
    };
    let mut out = Vec::with_capacity(frame.rois.len());
    for (i, roi) in frame.rois.iter().enumerate() {
        let tracklet =
            store.tracklet_for_latest(i).ok_or_else(|| Error::invalid(format!("ROI {} has no tracklet", roi.id)))?;
        let mut p = model.predict(tracklet, t_query)?;
        p.roi_id = roi.id;
        out.push(p);
    }
    Ok(out)
}

fn check_query(tracklet: &Tracklet, t_query: f64) -> Result<&TrackState> {
    let last = tracklet.states.last().ok_or_else(|| Error::invalid("cannot predict from an empty tracklet"))?;
    if !(t_query >= last.timestamp) {
        return Err(Error::invalid(format!(
            "query time {t_query} precedes the last observation at {}",
            last.timestamp
        )));
    }
    Ok(last)
}

/// Rotates `(x, y)` by `-angle`.
fn to_frame(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x + s * y, -s * x + c * y)
}

fn from_frame(x: f64, y: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (c * x - s * y, s * x + c * y)
}

/// Expresses the tracklet relative to its newest state, in the newest
/// state's heading frame, scaled by the model's position and time units.
pub(crate) fn model_input(states: &[TrackState], t_query: f64, params: &EstimatorParams) -> ModelInput {
    let last = states.last().expect("nonempty history");
    let mut tokens = Vec::with_capacity(states.len());
    let mut token_times = Vec::with_capacity(states.len());
    for s in states {
        let (rx, ry) = to_frame(s.x - last.x, s.y - last.y, last.heading);
        let da = wrap_angle(s.heading - last.heading);
        tokens.push([rx / params.pos_scale, ry / params.pos_scale, da.cos(), da.sin()]);
        token_times.push((s.timestamp - last.timestamp) / params.time_unit);
    }
    ModelInput { tokens, token_times, query_time: (t_query - last.timestamp) / params.time_unit }
}

/// Converts a raw model output to a world-frame `(dx, dy, da)`.
pub(crate) fn output_to_world(y: &[f64; 3], last: &TrackState, params: &EstimatorParams) -> (f64, f64, f64) {
    let (dx, dy) = from_frame(y[0] * params.pos_scale, y[1] * params.pos_scale, last.heading);
    (dx, dy, y[2])
}

/// Attention-based pose prediction at `t_query`. A query at the newest
/// timestamp returns the newest pose unchanged.
pub fn estimate_pose(tracklet: &Tracklet, t_query: f64, params: &EstimatorParams) -> Result<PosePrediction> {
    let last = *check_query(tracklet, t_query)?;
    if tracklet.len() < 2 {
        return Ok(PosePrediction::stationary(tracklet, true));
    }
    if t_query == last.timestamp {
        return Ok(PosePrediction::stationary(tracklet, false));
    }
    let layout = params.dims.layout();
    let input = model_input(&tracklet.states, t_query, params);
    let y = model_forward(params, &layout, &input).y;
    let (dx, dy, da) = output_to_world(&y, &last, params);
    Ok(PosePrediction::offset(tracklet, dx, dy, da))
}

/// Constant-velocity prediction: least-squares line through `x(t)`, `y(t)`
/// and the angular rate of the last two headings.
pub fn estimate_pose_cv(tracklet: &Tracklet, t_query: f64) -> Result<PosePrediction> {
    let last = *check_query(tracklet, t_query)?;
    if tracklet.len() < 2 {
        return Ok(PosePrediction::stationary(tracklet, true));
    }
    if t_query == last.timestamp {
        return Ok(PosePrediction::stationary(tracklet, false));
    }
    let s = &tracklet.states;
    let n = s.len() as f64;
    let t_mean = s.iter().map(|p| p.timestamp - last.timestamp).sum::<f64>() / n;
    let var: f64 = s.iter().map(|p| (p.timestamp - last.timestamp - t_mean).powi(2)).sum();
    let fit = |val: &dyn Fn(&TrackState) -> f64| {
        let mean = s.iter().map(val).sum::<f64>() / n;
        let cov: f64 = s.iter().map(|p| (p.timestamp - last.timestamp - t_mean) * (val(p) - mean)).sum();
        let slope = cov / var;
        mean + slope * (t_query - last.timestamp - t_mean)
    };
    let x = fit(&|p| p.x - last.x);
    let y = fit(&|p| p.y - last.y);
    let prev = s[s.len() - 2];
    let rate = wrap_angle(last.heading - prev.heading) / (last.timestamp - prev.timestamp);
    let da = rate * (t_query - last.timestamp);
    Ok(PosePrediction::offset(tracklet, x, y, da))
}
