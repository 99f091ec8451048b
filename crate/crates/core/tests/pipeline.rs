//! End-to-end behavior of the experiment harness on small configurations.

use bevflow::bench::{
    emit_report, point_records, replay, run_pipeline, run_point, simulate, train_for_config, ExperimentConfig, Method,
    Models, NoiseLevel, RunOptions, SweepPoint, OBSERVATION_LOG,
};
use bevflow::flow::EstimatorParams;
use bevflow::geometry::OrientedBox;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("bevflow-pipeline-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig { scenes: 2, intervals_ms: vec![0.0, 300.0], ..Default::default() };
    cfg.scenario.horizon = 14.0;
    cfg.training.scenes = 1;
    cfg.training.max_samples = 150;
    cfg.training.optimizer.epochs = 20;
    cfg
}

fn estimator() -> &'static EstimatorParams {
    static PARAMS: OnceLock<EstimatorParams> = OnceLock::new();
    PARAMS.get_or_init(|| train_for_config(&small()).unwrap().params)
}

fn options() -> RunOptions {
    RunOptions { estimator: Some(estimator().clone()), ..Default::default() }
}

#[test]
fn repeated_runs_write_identical_csv() {
    let cfg = small();
    let a = run_pipeline(&cfg, &options()).unwrap();
    let b = run_pipeline(&cfg, &RunOptions { workers: 3, ..options() }).unwrap();
    assert_eq!(a.to_csv().unwrap(), b.to_csv().unwrap());
    assert_eq!(a.rows.len(), cfg.intervals_ms.len() * cfg.methods.len());
}

#[test]
fn report_files_are_written() {
    let cfg = small();
    let report = run_pipeline(&cfg, &options()).unwrap();
    let dir = scratch("report");
    let files = emit_report(&report, &cfg, &dir).unwrap();
    let csv = std::fs::read_to_string(&files.csv).unwrap();
    assert!(csv.starts_with("interval_expectation_ms,sigma_t,sigma_r,method,ap50,ap70,mean_center_err,comm_volume\n"));
    assert_eq!(csv.lines().count(), 1 + report.rows.len());
    assert!(!files.plots.is_empty());
    for plot in &files.plots {
        assert!(std::fs::read_to_string(plot).unwrap().contains("<svg"));
    }
    let config: serde_json::Value = serde_json::from_slice(&std::fs::read(&files.config).unwrap()).unwrap();
    assert_eq!(config["config_hash"], serde_json::json!(report.config_hash));
    assert!(config["config"].get("intervals_ms").is_some());
}

#[test]
fn replay_reproduces_the_live_evaluation() {
    let cfg = small();
    let point = SweepPoint { interval_ms: 300.0, noise: NoiseLevel::symmetric(0.2) };
    let dir = scratch("replay");
    let summary = simulate(&cfg, point, &dir).unwrap();
    assert_eq!(summary.scenes, 2);
    assert!(summary.messages > 0 && summary.evaluations > 0);
    assert!(dir.join(OBSERVATION_LOG).exists());
    let replayed = replay(&cfg, &dir, Some(estimator().clone())).unwrap();
    let live = run_point(&cfg, &Models::new(Some(estimator().clone())), point).unwrap();
    assert_eq!(replayed.rows, live);
}

#[test]
fn replay_rejects_a_truncated_message_log() {
    let cfg = small();
    let point = SweepPoint { interval_ms: 200.0, noise: NoiseLevel::NONE };
    let dir = scratch("truncated");
    simulate(&cfg, point, &dir).unwrap();
    let path = dir.join(bevflow::bench::message_log_name(0));
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 7]).unwrap();
    assert!(replay(&cfg, &dir, Some(estimator().clone())).is_err());
}

fn marker_files(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
}

#[test]
fn finished_points_are_not_recomputed() {
    let cfg = small();
    let dir = scratch("resume");
    let opts = RunOptions { progress_dir: Some(dir.clone()), ..options() };
    let first = run_pipeline(&cfg, &opts).unwrap();
    let markers = marker_files(&dir);
    assert_eq!(markers.len(), cfg.intervals_ms.len());

    // a doctored marker is trusted while the config hash matches
    let mut m: serde_json::Value = serde_json::from_slice(&std::fs::read(&markers[0]).unwrap()).unwrap();
    m["rows"][0]["ap50"] = serde_json::json!(0.125);
    std::fs::write(&markers[0], serde_json::to_vec(&m).unwrap()).unwrap();
    let resumed = run_pipeline(&cfg, &opts).unwrap();
    assert_eq!(resumed.rows.iter().filter(|r| r.ap50 == Some(0.125)).count(), 1);
    assert_eq!(resumed.rows[1..], first.rows[1..]);

    // a different config ignores the stale marker
    let mut changed = cfg.clone();
    changed.nms_iou = 0.31;
    let fresh = run_pipeline(&changed, &opts).unwrap();
    assert!(fresh.rows.iter().all(|r| r.ap50 != Some(0.125)));
}

#[test]
fn static_noiseless_scene_needs_no_compensation() {
    let mut cfg = small();
    cfg.scenario.objects.speed_mean_kmh = 1e-9;
    cfg.scenario.objects.yaw_rate_sigma = 0.0;
    cfg.scenario.detection = bevflow::scene_sim::DetectionNoise::none(0.9);
    cfg.intervals_ms = vec![400.0];
    cfg.methods = vec![Method::NoCompensation, Method::FeatureWarpCv];
    let point = SweepPoint { interval_ms: 400.0, noise: NoiseLevel::NONE };
    let recs = point_records(&cfg, &Models::new(None), point).unwrap();
    let mut boxes = 0;
    for (a, b) in recs[0].iter().zip(&recs[1]) {
        assert_eq!(a.detections.len(), b.detections.len());
        for (p, q) in a.detections.iter().zip(&b.detections) {
            let (p, q): (&OrientedBox, &OrientedBox) = (p, q);
            assert!(p.center_distance(q) < 1e-6 && (p.heading - q.heading).abs() < 1e-6);
            boxes += 1;
        }
    }
    assert!(boxes > 0);
}

#[test]
fn bundled_configs_load() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let standard = ExperimentConfig::load(&root.join("standard.toml")).unwrap();
    assert_eq!(standard.scenario, ExperimentConfig::default().scenario);
    assert_eq!(standard.training, ExperimentConfig::default().training);
    assert_eq!(standard.methods.len(), 5);
    let noise = ExperimentConfig::load(&root.join("pose_noise.toml")).unwrap();
    assert_eq!(noise.pose_noise.len(), 5);
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(ExperimentConfig::from_toml_str("intervals_ms = []", None).is_err());
    assert!(ExperimentConfig::from_toml_str("methods = [\"teleport\"]", None).is_err());
    assert!(ExperimentConfig::from_toml_str("seeds = \"seven\"", None).is_err());
    assert!(ExperimentConfig::from_toml_str("scenario_path = \"/nonexistent/scene.toml\"", None).is_err());
}
