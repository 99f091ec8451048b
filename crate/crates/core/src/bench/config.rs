use crate::error::{Error, Result};
use crate::flow::TrainConfig;
use crate::roi_codec::RoiParams;
use crate::scene_sim::Scenario;
use crate::tracker::{Matcher, TrackerConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};

/// Compensation strategies compared by the benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Fuse the latest received grids as they are.
    NoCompensation,
    /// Move decoded collaborator boxes instead of features.
    BoxWarp,
    /// Feature warping driven by constant-velocity extrapolation.
    FeatureWarpCv,
    /// Feature warping driven by the attention estimator.
    FeatureWarpMha,
    /// Zero-delay collaborator messages; an upper bound.
    SyncIdeal,
}

impl Method {
    pub const ALL: [Method; 5] =
        [Method::NoCompensation, Method::BoxWarp, Method::FeatureWarpCv, Method::FeatureWarpMha, Method::SyncIdeal];

    pub fn name(self) -> &'static str {
        match self {
            Method::NoCompensation => "no_compensation",
            Method::BoxWarp => "box_warp",
            Method::FeatureWarpCv => "feature_warp_cv",
            Method::FeatureWarpMha => "feature_warp_mha",
            Method::SyncIdeal => "sync_ideal",
        }
    }

    /// Whether the method needs the trained attention estimator.
    pub fn needs_estimator(self) -> bool {
        matches!(self, Method::BoxWarp | Method::FeatureWarpMha)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

/// One pose-noise sweep level: translation sigma in meters and rotation
/// sigma in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevel {
    pub sigma_t: f64,
    pub sigma_r_deg: f64,
}

impl NoiseLevel {
    pub const NONE: NoiseLevel = NoiseLevel { sigma_t: 0.0, sigma_r_deg: 0.0 };

    pub fn symmetric(level: f64) -> Self {
        Self { sigma_t: level, sigma_r_deg: level }
    }

    pub fn pose_noise(&self) -> crate::scene_sim::PoseNoiseSpec {
        crate::scene_sim::PoseNoiseSpec { sigma_t: self.sigma_t, sigma_r: self.sigma_r_deg.to_radians() }
    }
}

/// Held-out scenes used to fit the attention estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingSetConfig {
    pub scenes: usize,
    pub intervals_ms: Vec<f64>,
    /// Seconds between sampled query times within a scene.
    pub query_stride: f64,
    pub max_samples: usize,
    /// Largest ROI-to-object distance accepted when labelling, meters.
    pub label_radius: f64,
    pub optimizer: TrainConfig,
}

impl Default for TrainingSetConfig {
    fn default() -> Self {
        Self {
            scenes: 12,
            intervals_ms: vec![100.0, 200.0, 300.0, 400.0, 500.0],
            query_stride: 2.0,
            max_samples: 2000,
            label_radius: 1.5,
            optimizer: TrainConfig { seed: 0x7a1e, ..TrainConfig::default() },
        }
    }
}

/// Everything a benchmark sweep depends on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    /// Loaded in place of `scenario` when set.
    pub scenario_path: Option<PathBuf>,
    pub intervals_ms: Vec<f64>,
    pub pose_noise: Vec<NoiseLevel>,
    pub methods: Vec<Method>,
    pub matcher: Matcher,
    pub time_encoding: bool,
    /// Messages per collaborator kept for tracking.
    pub history: usize,
    /// ROI cap per message.
    pub max_rois: usize,
    pub conf_threshold: f64,
    pub nms_iou: f64,
    pub seeds: Vec<u64>,
    pub scenes: usize,
    /// Time of the first ego evaluation, seconds.
    pub warmup: f64,
    /// Seconds between ego evaluations.
    pub eval_stride: f64,
    pub tracker: TrackerConfig,
    pub training: TrainingSetConfig,
    /// Pre-trained estimator; trained on the fly when absent.
    pub estimator_path: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::default(),
            scenario_path: None,
            intervals_ms: vec![0.0, 100.0, 200.0, 300.0, 400.0, 500.0],
            pose_noise: vec![NoiseLevel::NONE],
            methods: vec![
                Method::NoCompensation,
                Method::BoxWarp,
                Method::FeatureWarpCv,
                Method::FeatureWarpMha,
                Method::SyncIdeal,
            ],
            matcher: Matcher::Greedy,
            time_encoding: true,
            history: 4,
            max_rois: 64,
            conf_threshold: 0.5,
            nms_iou: 0.3,
            seeds: vec![7],
            scenes: 20,
            warmup: 4.0,
            eval_stride: 4.0,
            tracker: TrackerConfig::default(),
            training: TrainingSetConfig::default(),
            estimator_path: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML, resolving `scenario_path` relative to `base_dir`.
    pub fn from_toml_str(s: &str, base_dir: Option<&Path>) -> Result<Self> {
        let mut cfg: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(p) = cfg.scenario_path.clone() {
            let p = match base_dir {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            };
            cfg.scenario = Scenario::load(&p)?;
        }
        if let (Some(b), Some(p)) = (base_dir, cfg.estimator_path.clone()) {
            if p.is_relative() {
                cfg.estimator_path = Some(b.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml_str(&text, path.parent()).map_err(|e| e.context(format!("loading {}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.intervals_ms.is_empty() || self.pose_noise.is_empty() || self.methods.is_empty() {
            return Err(Error::Config("intervals_ms, pose_noise and methods must be nonempty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let period_ms = self.scenario.clock.nominal_period * 1000.0;
        for &e in &self.intervals_ms {
            if !(0.0..=period_ms * 10.0 + 1e-9).contains(&e) {
                return Err(Error::Config(format!("interval expectation {e} ms outside [0, {}] ms", period_ms * 10.0)));
            }
        }
        if self.pose_noise.iter().any(|n| !(n.sigma_t >= 0.0) || !(n.sigma_r_deg >= 0.0)) {
            return Err(Error::Config("pose noise levels must be non-negative".into()));
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        if methods.len() != self.methods.len() {
            return Err(Error::Config("methods must not repeat".into()));
        }
        if self.history == 0 || self.max_rois == 0 || self.scenes == 0 {
            return Err(Error::Config("history, max_rois and scenes must be positive".into()));
        }
        if !(self.eval_stride > 0.0) || !(self.warmup >= 0.0) || self.warmup >= self.scenario.horizon {
            return Err(Error::Config("eval_stride must be positive and warmup inside the horizon".into()));
        }
        self.roi_params().validate()?;
        if self.training.scenes == 0 || self.training.intervals_ms.is_empty() || !(self.training.query_stride > 0.0) {
            return Err(Error::Config("training set needs scenes, intervals and a positive query stride".into()));
        }
        Ok(())
    }

    pub fn roi_params(&self) -> RoiParams {
        RoiParams { conf_threshold: self.conf_threshold, nms_iou: self.nms_iou, max_rois: Some(self.max_rois) }
    }

    pub fn tracker_config(&self) -> TrackerConfig {
        TrackerConfig { matcher: self.matcher, ..self.tracker }
    }

    pub fn needs_estimator(&self) -> bool {
        self.methods.iter().any(|m| m.needs_estimator())
    }

    /// SHA-256 of the canonical JSON form, ignoring where output goes.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_vec(&c).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
