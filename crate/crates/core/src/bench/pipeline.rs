use super::config::{ExperimentConfig, Method, NoiseLevel};
use super::methods::{evaluate_methods, Models};
use super::report::{ResultRow, RunReport};
use super::scene::{scene_seed, EvalInputs, SceneRun};
use super::training::provision_estimator;
use crate::error::{Error, Result};
use crate::eval::{average_precision, center_error_stats, EvalRecord};
use crate::flow::EstimatorParams;
use crate::roi_codec::{comm_volume, GridSpec};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads for sweep points; 0 or 1 runs inline.
    pub workers: usize,
    /// Directory of per-sweep-point completion markers; finished points
    /// found there with a matching config hash are not recomputed.
    pub progress_dir: Option<PathBuf>,
    /// Estimator to use instead of loading or training one.
    pub estimator: Option<EstimatorParams>,
}

/// One (interval, noise) combination of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub interval_ms: f64,
    pub noise: NoiseLevel,
}

impl SweepPoint {
    fn key(&self) -> String {
        format!("i{}_t{}_r{}", self.interval_ms, self.noise.sigma_t, self.noise.sigma_r_deg)
    }
}

#[derive(Serialize, Deserialize)]
struct Marker {
    config_hash: String,
    rows: Vec<ResultRow>,
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub fn parallel_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> Result<R> + Sync,
) -> Result<Vec<R>> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<R>>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers.min(items.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("no worker panicked")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("no worker panicked").into_iter().map(|r| r.expect("every item processed")).collect()
}

/// Records of each method over every scene and seed of one sweep point.
pub(crate) fn collect_records(
    cfg: &ExperimentConfig,
    spec: &GridSpec,
    models: &Models,
    point: SweepPoint,
    mut visit: impl FnMut(&SceneRun, &EvalInputs) -> Result<()>,
) -> Result<Vec<Vec<EvalRecord>>> {
    let with_sync = cfg.methods.contains(&Method::SyncIdeal);
    let mut records = vec![Vec::new(); cfg.methods.len()];
    let mut scene_index = 0u64;
    for &seed in &cfg.seeds {
        for scene in 0..cfg.scenes {
            let run =
                SceneRun::new(cfg, scene_index, scene_seed(seed, scene), point.interval_ms, point.noise.pose_noise())
                    .map_err(|e| e.context(format!("seed {seed} scene {scene}")))?;
            for at in run.eval_times(cfg.warmup, cfg.eval_stride) {
                let ctx = || format!("seed {seed} scene {scene} at t = {:.1} s", at.time);
                let inputs = run.inputs(at, with_sync).map_err(|e| e.context(ctx()))?;
                visit(&run, &inputs)?;
                let dets = evaluate_methods(&inputs, &cfg.methods, models, cfg, spec).map_err(|e| e.context(ctx()))?;
                for (slot, detections) in records.iter_mut().zip(dets) {
                    slot.push(EvalRecord {
                        scene: scene_index,
                        timestamp: at.time,
                        detections,
                        ground_truth: inputs.ground_truth.clone(),
                    });
                }
            }
            scene_index += 1;
        }
    }
    Ok(records)
}

/// Turns per-method records into CSV rows.
pub(crate) fn summarize(
    cfg: &ExperimentConfig,
    point: SweepPoint,
    records: &[Vec<EvalRecord>],
) -> Result<Vec<ResultRow>> {
    let volume = comm_volume(cfg.max_rois)?;
    Ok(cfg
        .methods
        .iter()
        .zip(records)
        .map(|(&method, recs)| ResultRow {
            interval_expectation_ms: point.interval_ms,
            sigma_t: point.noise.sigma_t,
            sigma_r: point.noise.sigma_r_deg,
            method,
            ap50: average_precision(recs, 0.5),
            ap70: average_precision(recs, 0.7),
            mean_center_err: center_error_stats(recs).map(|s| s.mean),
            comm_volume: volume,
        })
        .collect())
}

/// Evaluates one sweep point.
pub fn run_point(cfg: &ExperimentConfig, models: &Models, point: SweepPoint) -> Result<Vec<ResultRow>> {
    let records = point_records(cfg, models, point)?;
    summarize(cfg, point, &records)
}

/// Per-method evaluation records of one sweep point, in `cfg.methods` order.
pub fn point_records(cfg: &ExperimentConfig, models: &Models, point: SweepPoint) -> Result<Vec<Vec<EvalRecord>>> {
    let spec = cfg.scenario.grid_spec()?;
    collect_records(cfg, &spec, models, point, |_, _| Ok(()))
}

/// The sweep points of `cfg`, intervals outermost.
pub fn sweep_points(cfg: &ExperimentConfig) -> Vec<SweepPoint> {
    cfg.intervals_ms
        .iter()
        .flat_map(|&interval_ms| cfg.pose_noise.iter().map(move |&noise| SweepPoint { interval_ms, noise }))
        .collect()
}

/// Runs every sweep point of `cfg` and gathers the rows in sweep order.
pub fn run_pipeline(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    let start = Instant::now();
    let hash = cfg.hash();
    let estimator = match (&opts.estimator, cfg.needs_estimator()) {
        (Some(p), _) => {
            if p.time_encoding != cfg.time_encoding {
                return Err(Error::Config("provided estimator disagrees with time_encoding".into()));
            }
            Some(p.clone())
        }
        (None, true) => Some(provision_estimator(cfg)?),
        (None, false) => None,
    };
    let models = Models::new(estimator);
    if let Some(dir) = &opts.progress_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::from(e).context(format!("creating {}", dir.display())))?;
    }
    let points = sweep_points(cfg);
    let rows = parallel_map(&points, opts.workers, |point| {
        let marker = opts.progress_dir.as_ref().map(|d| d.join(format!("{}.json", point.key())));
        if let Some(path) = &marker {
            if let Ok(bytes) = std::fs::read(path) {
                if let Ok(m) = serde_json::from_slice::<Marker>(&bytes) {
                    if m.config_hash == hash {
                        return Ok(m.rows);
                    }
                }
            }
        }
        let rows = run_point(cfg, &models, *point)
            .map_err(|e| e.context(format!("sweep point {} ms, noise {:?}", point.interval_ms, point.noise)))?;
        if let Some(path) = &marker {
            let m = Marker { config_hash: hash.clone(), rows: rows.clone() };
            std::fs::write(path, serde_json::to_vec(&m)?)
                .map_err(|e| Error::from(e).context(format!("writing {}", path.display())))?;
        }
        Ok(rows)
    })?;
    Ok(RunReport {
        rows: rows.into_iter().flatten().collect(),
        wall_clock_s: start.elapsed().as_secs_f64(),
        config_hash: hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_keeps_order() {
        let items: Vec<u64> = (0..23).collect();
        let out = parallel_map(&items, 4, |x| Ok(x * x)).unwrap();
        assert_eq!(out, items.iter().map(|x| x * x).collect::<Vec<_>>());
        let err = parallel_map(&items, 3, |&x| if x == 5 { Err(Error::invalid("boom")) } else { Ok(x) });
        assert!(err.is_err());
    }

    #[test]
    fn sweep_order() {
        let cfg = ExperimentConfig {
            intervals_ms: vec![0.0, 300.0],
            pose_noise: vec![NoiseLevel::NONE, NoiseLevel::symmetric(0.2)],
            ..Default::default()
        };
        let keys: Vec<_> = sweep_points(&cfg).iter().map(|p| p.key()).collect();
        assert_eq!(keys, vec!["i0_t0_r0", "i0_t0.2_r0.2", "i300_t0_r0", "i300_t0.2_r0.2"]);
    }
}
