use super::{step_world, DetectionNoise, FieldOfView, ObjectState, PoseNoiseSpec};
use crate::error::{Error, Result};
use crate::roi_codec::GridSpec;
use crate::seed;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObjectSpec {
    pub count_min: usize,
    pub count_max: usize,
    pub speed_mean_kmh: f64,
    pub speed_max_kmh: f64,
    /// Shape of the gamma speed distribution.
    pub speed_shape: f64,
    pub yaw_rate_sigma: f64,
    pub yaw_rate_max: f64,
    pub length_range: (f64, f64),
    pub width_range: (f64, f64),
    /// Minimum spawn separation between object centers, meters.
    pub min_separation: f64,
}

impl Default for ObjectSpec {
    fn default() -> Self {
        Self {
            count_min: 30,
            count_max: 60,
            speed_mean_kmh: 25.0,
            speed_max_kmh: 105.0,
            speed_shape: 2.0,
            yaw_rate_sigma: 0.15,
            yaw_rate_max: 0.5,
            length_range: (3.8, 5.0),
            width_range: (1.7, 2.1),
            min_separation: 7.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub fov_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub cell: f64,
    pub channels: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { x_min: -48.0, x_max: 48.0, y_min: -24.0, y_max: 24.0, cell: 0.4, channels: 15 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClockConfig {
    pub nominal_period: f64,
    /// Start offsets are drawn from U(−offset_bound, offset_bound).
    pub offset_bound: f64,
    pub turbulence_bound: f64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self { nominal_period: 0.1, offset_bound: 0.05, turbulence_bound: 0.01 }
    }
}

/// Scene description loaded from a TOML file.
///
/// ```toml
/// seed = 7
/// horizon = 40.0
/// [objects]
/// count_min = 30
/// count_max = 60
/// [[agents]]
/// id = 0
/// x = 0.0
/// y = 0.0
/// fov_radius = 30.0
/// ```
///
/// The frame-interval binomial uses `BINOMIAL_TRIALS = 10` trials; only its
/// success probability follows from the requested interval expectation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub seed: u64,
    /// Seconds of simulated time per scene.
    pub horizon: f64,
    /// Extra world margin around the BEV extent, meters. Objects wrap
    /// toroidally at the world boundary, outside every sensor's view.
    pub world_margin: f64,
    pub objects: ObjectSpec,
    /// Agent 0 is the ego agent.
    pub agents: Vec<AgentSpec>,
    pub grid: GridConfig,
    pub clock: ClockConfig,
    pub detection: DetectionNoise,
    pub pose_noise: PoseNoiseSpec,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            seed: 7,
            horizon: 40.0,
            world_margin: 16.0,
            objects: ObjectSpec::default(),
            agents: vec![
                AgentSpec { id: 0, x: 0.0, y: 0.0, fov_radius: 26.0 },
                AgentSpec { id: 1, x: -28.0, y: 6.0, fov_radius: 26.0 },
                AgentSpec { id: 2, x: 28.0, y: -6.0, fov_radius: 26.0 },
            ],
            grid: GridConfig::default(),
            clock: ClockConfig::default(),
            detection: DetectionNoise::default(),
            pose_noise: PoseNoiseSpec::default(),
        }
    }
}

impl Scenario {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let sc: Scenario = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::from(e).context(format!("reading {}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=5).contains(&self.agents.len()) {
            return Err(Error::Config(format!("agent count must be 2..=5, got {}", self.agents.len())));
        }
        if self.agents[0].id != 0 {
            return Err(Error::Config("the first agent must be the ego agent (id 0)".into()));
        }
        let mut ids: Vec<u32> = self.agents.iter().map(|a| a.id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.agents.len() {
            return Err(Error::Config("agent ids must be unique".into()));
        }
        if self.objects.count_min > self.objects.count_max {
            return Err(Error::Config("objects.count_min > objects.count_max".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::Config("horizon must be positive".into()));
        }
        if self.pose_noise.sigma_t < 0.0 || self.pose_noise.sigma_r < 0.0 {
            return Err(Error::Config("pose noise must be non-negative".into()));
        }
        self.grid_spec()?;
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let g = &self.grid;
        GridSpec::new((g.x_min, g.x_max, g.y_min, g.y_max), g.cell, g.channels)
    }

    pub fn field_of_view(&self, agent: &AgentSpec) -> FieldOfView {
        let g = &self.grid;
        FieldOfView {
            origin: (agent.x, agent.y),
            radius: agent.fov_radius,
            extent: (g.x_min, g.x_max, g.y_min, g.y_max),
        }
    }

    pub fn agent(&self, id: u32) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.id == id)
    }

    /// Draws the initial object population of scene `scene_seed`.
    pub fn build_world(&self, scene_seed: u64) -> Result<World> {
        let spec = &self.objects;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(scene_seed, &[0x0b1ec7]));
        let g = &self.grid;
        let bounds = (
            g.x_min - self.world_margin,
            g.x_max + self.world_margin,
            g.y_min - self.world_margin,
            g.y_max + self.world_margin,
        );
        let count = rng.random_range(spec.count_min..=spec.count_max);
        let kmh = 1.0 / 3.6;
        let gamma = Gamma::new(spec.speed_shape, spec.speed_mean_kmh / spec.speed_shape)
            .map_err(|e| Error::Config(e.to_string()))?;
        let yaw = Normal::new(0.0, spec.yaw_rate_sigma).map_err(|e| Error::Config(e.to_string()))?;

        let mut objects: Vec<ObjectState> = Vec::with_capacity(count);
        let mut attempts = 0;
        while objects.len() < count && attempts < count * 200 {
            attempts += 1;
            let x = rng.random_range(bounds.0..bounds.1);
            let y = rng.random_range(bounds.2..bounds.3);
            let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let speed = gamma.sample(&mut rng).min(spec.speed_max_kmh) * kmh;
            let yaw_rate = yaw.sample(&mut rng).clamp(-spec.yaw_rate_max, spec.yaw_rate_max);
            let length = rng.random_range(spec.length_range.0..=spec.length_range.1);
            let width = rng.random_range(spec.width_range.0..=spec.width_range.1);
            if objects.iter().any(|o| (o.x - x).hypot(o.y - y) < spec.min_separation) {
                continue;
            }
            objects.push(ObjectState {
                id: objects.len() as u32,
                x,
                y,
                heading: crate::geometry::wrap_angle(heading),
                speed,
                yaw_rate,
                length,
                width,
            });
        }
        Ok(World { initial: objects, bounds })
    }
}

/// Object population of one scene; states at any time are a pure function
/// of the initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub initial: Vec<ObjectState>,
    /// Toroidal world box `(x_min, x_max, y_min, y_max)`.
    pub bounds: (f64, f64, f64, f64),
}

impl World {
    pub fn static_objects(initial: Vec<ObjectState>, bounds: (f64, f64, f64, f64)) -> Self {
        let initial = initial
            .into_iter()
            .map(|mut o| {
                o.speed = 0.0;
                o.yaw_rate = 0.0;
                o
            })
            .collect();
        Self { initial, bounds }
    }

    pub fn state_at(&self, t: f64) -> Vec<ObjectState> {
        let (x0, x1, y0, y1) = self.bounds;
        let mut objs = step_world(&self.initial, t);
        for o in &mut objs {
            o.x = x0 + (o.x - x0).rem_euclid(x1 - x0);
            o.y = y0 + (o.y - y0).rem_euclid(y1 - y0);
        }
        objs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_is_valid() {
        let sc = Scenario::default();
        sc.validate().unwrap();
        let g = sc.grid_spec().unwrap();
        assert_eq!((g.h, g.w, g.d), (120, 240, 15));
    }

    #[test]
    fn world_is_deterministic_and_mean_speed_plausible() {
        let sc = Scenario::default();
        let a = sc.build_world(3).unwrap();
        assert_eq!(a, sc.build_world(3).unwrap());
        let n = a.initial.len();
        assert!((30..=60).contains(&n));
        let mut all = Vec::new();
        for s in 0..200 {
            all.extend(sc.build_world(s).unwrap().initial.into_iter().map(|o| o.speed * 3.6));
        }
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((mean - 25.0).abs() < 1.5, "mean speed {mean} km/h");
        assert!(all.iter().all(|&v| v <= 105.0 + 1e-9));
    }

    #[test]
    fn wrapped_states_stay_in_bounds() {
        let sc = Scenario::default();
        let w = sc.build_world(1).unwrap();
        for t in [0.0, 3.3, 17.0, 39.9] {
            for o in w.state_at(t) {
                assert!(o.x >= w.bounds.0 && o.x < w.bounds.1);
                assert!(o.y >= w.bounds.2 && o.y < w.bounds.3);
            }
        }
    }

    #[test]
    fn toml_round_trip() {
        let sc = Scenario::default();
        let text = toml::to_string(&sc).unwrap();
        assert_eq!(Scenario::from_toml_str(&text).unwrap(), sc);
        let partial = "seed = 3\nhorizon = 10.0\n";
        let p = Scenario::from_toml_str(partial).unwrap();
        assert_eq!(p.seed, 3);
        assert_eq!(p.agents.len(), 3);
    }

    #[test]
    fn rejects_bad_agent_count() {
        let mut sc = Scenario::default();
        sc.agents.truncate(1);
        assert!(sc.validate().is_err());
    }
}
