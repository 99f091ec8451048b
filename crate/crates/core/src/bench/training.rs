//! Estimator training data from held-out scenes.

use super::config::ExperimentConfig;
use super::scene::{tag, SceneRun};
use crate::error::{Error, Result};
use crate::flow::{train_estimator, EstimatorParams, TrainedEstimator, TrainingSample};
use crate::scene_sim::PoseNoiseSpec;
use crate::seed::derive;
use crate::tracker::TrackStore;

/// Labels every tracked ROI of the held-out scenes with its object's true
/// pose at the ego query time.
pub fn generate_training_set(cfg: &ExperimentConfig) -> Result<Vec<TrainingSample>> {
    let tcfg = &cfg.training;
    let tracker = cfg.tracker_config();
    let mut samples = Vec::new();
    for scene in 0..tcfg.scenes {
        let scene_seed = derive(tcfg.optimizer.seed, &[tag::TRAIN, scene as u64]);
        for &interval in &tcfg.intervals_ms {
            let run = SceneRun::new(cfg, scene as u64, scene_seed, interval, PoseNoiseSpec::none())
                .map_err(|e| e.context(format!("training scene {scene}")))?;
            for at in run.eval_times(cfg.warmup, tcfg.query_stride) {
                let inputs = run.inputs(at, false)?;
                let truth_now = run.world.state_at(at.time);
                for col in &inputs.collaborators {
                    let Some(latest) = col.latest() else { continue };
                    let mut store = TrackStore::new(col.agent, cfg.history);
                    for m in &col.history {
                        store.ingest(&m.roi_set, &tracker)?;
                    }
                    let truth_then = run.world.state_at(latest.timestamp);
                    let dt = at.time - latest.timestamp;
                    if !(dt > 0.0) {
                        continue;
                    }
                    for (i, roi) in latest.roi_set.rois.iter().enumerate() {
                        let Some(tracklet) = store.tracklet_for_latest(i) else { continue };
                        if tracklet.len() < 2 {
                            continue;
                        }
                        let b = roi.bbox;
                        let nearest = truth_then
                            .iter()
                            .map(|o| ((o.x - b.x).hypot(o.y - b.y), o.id))
                            .min_by(|a, b| a.0.total_cmp(&b.0));
                        let Some((dist, id)) = nearest else { continue };
                        if dist > tcfg.label_radius {
                            continue;
                        }
                        // tracklets that hopped between objects would teach the wrong motion
                        let consistent = tracklet.states.iter().all(|st| {
                            let truth = run.world.state_at(st.timestamp);
                            let o = &truth[id as usize];
                            (o.x - st.x).hypot(o.y - st.y) <= tcfg.label_radius
                        });
                        if !consistent {
                            continue;
                        }
                        let target = truth_now[id as usize];
                        // objects leaving through the wrapped world edge are not motion
                        if (target.x - b.x).hypot(target.y - b.y) > tracker.max_cost(dt) {
                            continue;
                        }
                        samples.push(TrainingSample {
                            tracklet: tracklet.clone(),
                            t_query: at.time,
                            target_x: target.x,
                            target_y: target.y,
                            target_heading: target.heading,
                        });
                    }
                }
            }
        }
    }
    if samples.len() > tcfg.max_samples {
        let n = samples.len();
        samples = (0..tcfg.max_samples).map(|i| samples[i * n / tcfg.max_samples].clone()).collect();
    }
    Ok(samples)
}

/// Trains an estimator for `cfg` from its held-out scenes.
pub fn train_for_config(cfg: &ExperimentConfig) -> Result<TrainedEstimator> {
    let samples = generate_training_set(cfg)?;
    if samples.is_empty() {
        return Err(Error::Config("held-out scenes produced no training samples".into()));
    }
    let mut opt = cfg.training.optimizer.clone();
    opt.time_encoding = cfg.time_encoding;
    opt.cell = cfg.scenario.grid.cell;
    train_estimator(&samples, &opt)
}

/// Loads the configured estimator, or trains one when no path is set.
pub fn provision_estimator(cfg: &ExperimentConfig) -> Result<EstimatorParams> {
    match &cfg.estimator_path {
        Some(path) => {
            let params = EstimatorParams::load(path)?;
            if params.time_encoding != cfg.time_encoding {
                return Err(Error::Config(format!(
                    "estimator at {} has time_encoding = {}, config asks for {}",
                    path.display(),
                    params.time_encoding,
                    cfg.time_encoding
                )));
            }
            Ok(params)
        }
        None => Ok(train_for_config(cfg)?.params),
    }
}
