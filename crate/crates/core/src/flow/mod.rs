//! Motion estimation for tracklets and the BEV flow maps derived from it.

mod map;
mod mha;
mod params;
mod predict;
mod time;
mod train;

pub use map::{build_flow_map, BevFlowMap};
pub use mha::{mha_forward, mha_norm_gradient};
pub use params::{EstimatorDims, EstimatorParams, HEAD_OUTPUT, TOKEN_INPUT};
pub use predict::{estimate_pose, estimate_pose_cv, predict_latest, MotionModel, PosePrediction};
pub use time::{time_encode, time_encode_units, TimeCode, DEFAULT_TIME_UNIT};
pub use train::{loss_and_gradient, train_estimator, LossWeights, TrainConfig, TrainedEstimator, TrainingSample};
