//! Per-scene message generation under a given asynchrony and noise setting.

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::geometry::OrientedBox;
use crate::roi_codec::{synthesize_grid, BevGrid, CollabMessage, GridSpec};
use crate::scene_sim::{
    observe, sample_schedule, AgentClock, AgentSpec, Observation, PoseNoiseSpec, Schedule, World, BINOMIAL_TRIALS,
};
use crate::seed::derive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

pub(crate) mod tag {
    pub const SCENE: u64 = 1;
    pub const SCHEDULE: u64 = 2;
    pub const OFFSET: u64 = 3;
    pub const DELAY: u64 = 4;
    pub const OBSERVE: u64 = 5;
    pub const GRID: u64 = 6;
    pub const TRAIN: u64 = 7;
}

/// Seed of scene `index` under base seed `seed`.
pub fn scene_seed(seed: u64, index: usize) -> u64 {
    derive(seed, &[tag::SCENE, index as u64])
}

/// A collaborator's view at one ego evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct CollaboratorInputs {
    pub agent: u32,
    pub delay: f64,
    /// Latest messages available at `ego_time - delay`, oldest first.
    pub history: Vec<CollabMessage>,
    /// Message captured exactly at the ego time, for the synchronous bound.
    pub sync: Option<CollabMessage>,
}

impl CollaboratorInputs {
    pub fn latest(&self) -> Option<&CollabMessage> {
        self.history.last()
    }
}

/// Everything one ego evaluation consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInputs {
    pub scene: u64,
    pub scene_seed: u64,
    pub frame: u64,
    pub ego_time: f64,
    pub ego: Observation,
    pub collaborators: Vec<CollaboratorInputs>,
    pub ground_truth: Vec<OrientedBox>,
}

/// An ego evaluation instant on the ego's nominal frame grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalTime {
    pub frame: u64,
    pub time: f64,
}

pub(crate) struct SceneRun<'a> {
    cfg: &'a ExperimentConfig,
    pub spec: GridSpec,
    pub scene: u64,
    pub scene_seed: u64,
    pub world: World,
    interval: f64,
    noise: PoseNoiseSpec,
    /// Collaborators with their message schedules.
    pub schedules: Vec<(AgentSpec, Schedule)>,
}

impl<'a> SceneRun<'a> {
    pub fn new(
        cfg: &'a ExperimentConfig,
        scene: u64,
        scene_seed: u64,
        interval_ms: f64,
        noise: PoseNoiseSpec,
    ) -> Result<Self> {
        let sc = &cfg.scenario;
        let spec = sc.grid_spec()?;
        let world = sc.build_world(scene_seed)?;
        let period = sc.clock.nominal_period;
        let interval = interval_ms / 1000.0;
        let mut schedules = Vec::new();
        for agent in &sc.agents[1..] {
            let clock = if interval == 0.0 {
                AgentClock::regular(agent.id, period)
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derive(scene_seed, &[tag::OFFSET, agent.id as u64]));
                let b = sc.clock.offset_bound;
                AgentClock {
                    agent_id: agent.id,
                    offset: if b > 0.0 { rng.random_range(-b..=b) } else { 0.0 },
                    turbulence_bound: sc.clock.turbulence_bound,
                    nominal_period: period,
                    interval_expectation: interval.max(period),
                }
            };
            let seed = derive(scene_seed, &[tag::SCHEDULE, agent.id as u64, interval_ms.to_bits()]);
            let schedule = sample_schedule(&clock, sc.horizon, seed)
                .map_err(|e| e.context(format!("schedule of agent {}", agent.id)))?;
            schedules.push((*agent, schedule));
        }
        Ok(Self { cfg, spec, scene, scene_seed, world, interval, noise, schedules })
    }

    /// Ego frames evaluated: every `stride` seconds from `warmup`, on the
    /// ego's nominal frame grid.
    pub fn eval_times(&self, warmup: f64, stride: f64) -> Vec<EvalTime> {
        let period = self.cfg.scenario.clock.nominal_period;
        let step = ((stride / period).round() as u64).max(1);
        let mut frame = (warmup / period).round() as u64;
        let mut out = Vec::new();
        loop {
            let time = period * frame as f64;
            if time >= self.cfg.scenario.horizon {
                break;
            }
            out.push(EvalTime { frame, time });
            frame += step;
        }
        out
    }

    /// Transmission delay of `agent`'s messages seen at ego frame `frame`.
    pub fn delay(&self, agent: u32, frame: u64) -> Result<f64> {
        if self.interval == 0.0 {
            return Ok(0.0);
        }
        let period = self.cfg.scenario.clock.nominal_period;
        let p = (self.interval / (period * BINOMIAL_TRIALS as f64)).clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(derive(
            self.scene_seed,
            &[tag::DELAY, agent as u64, frame, self.interval.to_bits()],
        ));
        let b = Binomial::new(BINOMIAL_TRIALS, p).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(period * b.sample(&mut rng) as f64)
    }

    /// Observation by `agent` at `t`. Draws are keyed by agent and time so the
    /// same capture is reproduced wherever it is needed, and pose noise of
    /// different magnitudes shares its random numbers.
    pub fn observe(&self, agent: &AgentSpec, t: f64) -> Observation {
        let sc = &self.cfg.scenario;
        let pose = if agent.id == sc.agents[0].id { PoseNoiseSpec::none() } else { self.noise };
        observe(
            &self.world.state_at(t),
            agent.id,
            t,
            &sc.field_of_view(agent),
            &sc.detection,
            &pose,
            derive(self.scene_seed, &[tag::OBSERVE, agent.id as u64, t.to_bits()]),
        )
    }

    pub fn message(&self, agent: &AgentSpec, t: f64) -> Result<CollabMessage> {
        let obs = self.observe(agent, t);
        let dense = grid_for(&obs, &self.spec, self.scene_seed);
        CollabMessage::pack(agent.id, t, &dense, &self.cfg.roi_params())
    }

    /// Objects inside the grid that at least one agent can see.
    pub fn ground_truth(&self, t: f64) -> Vec<OrientedBox> {
        let sc = &self.cfg.scenario;
        let fovs: Vec<_> = sc.agents.iter().map(|a| sc.field_of_view(a)).collect();
        self.world.state_at(t).iter().filter(|o| fovs.iter().any(|f| f.sees(o.x, o.y))).map(|o| o.to_box(1.0)).collect()
    }

    /// Timestamps of the latest `k` messages available at ego time `t`.
    pub fn history_times(&self, schedule: &Schedule, t: f64, delay: f64) -> Vec<f64> {
        match schedule.latest_at_or_before(t - delay) {
            None => Vec::new(),
            Some(i) => {
                let lo = (i + 1).saturating_sub(self.cfg.history);
                schedule.timestamps[lo..=i].to_vec()
            }
        }
    }

    pub fn inputs(&self, at: EvalTime, with_sync: bool) -> Result<EvalInputs> {
        let sc = &self.cfg.scenario;
        let ego = self.observe(&sc.agents[0], at.time);
        let mut collaborators = Vec::with_capacity(self.schedules.len());
        for (agent, schedule) in &self.schedules {
            let delay = self.delay(agent.id, at.frame)?;
            let history = self
                .history_times(schedule, at.time, delay)
                .into_iter()
                .map(|t| self.message(agent, t))
                .collect::<Result<Vec<_>>>()?;
            let sync = if with_sync { Some(self.message(agent, at.time)?) } else { None };
            collaborators.push(CollaboratorInputs { agent: agent.id, delay, history, sync });
        }
        Ok(EvalInputs {
            scene: self.scene,
            scene_seed: self.scene_seed,
            frame: at.frame,
            ego_time: at.time,
            ego,
            collaborators,
            ground_truth: self.ground_truth(at.time),
        })
    }
}

/// Rasterizes an observation with signatures keyed by agent and time.
pub(crate) fn grid_for(obs: &Observation, spec: &GridSpec, scene_seed: u64) -> BevGrid {
    synthesize_grid(obs, spec, derive(scene_seed, &[tag::GRID, obs.agent_id as u64, obs.timestamp.to_bits()]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        let mut c = ExperimentConfig::default();
        c.scenario.horizon = 12.0;
        c
    }

    #[test]
    fn synchronous_setting_aligns_everything() {
        let c = cfg();
        let run = SceneRun::new(&c, 0, 11, 0.0, PoseNoiseSpec::none()).unwrap();
        for at in run.eval_times(c.warmup, c.eval_stride) {
            let inputs = run.inputs(at, true).unwrap();
            for col in &inputs.collaborators {
                assert_eq!(col.delay, 0.0);
                let latest = col.latest().unwrap();
                assert_eq!(latest.timestamp, at.time);
                assert_eq!(Some(latest), col.sync.as_ref());
            }
        }
    }

    #[test]
    fn messages_respect_causality() {
        let c = cfg();
        let run = SceneRun::new(&c, 0, 12, 400.0, PoseNoiseSpec::none()).unwrap();
        for at in run.eval_times(c.warmup, 1.0) {
            let inputs = run.inputs(at, false).unwrap();
            for col in &inputs.collaborators {
                assert!(col.history.len() <= c.history);
                assert!(col.history.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
                for m in &col.history {
                    assert!(m.timestamp <= at.time - col.delay);
                }
            }
        }
    }

    #[test]
    fn eval_times_on_frame_grid() {
        let c = cfg();
        let run = SceneRun::new(&c, 0, 1, 0.0, PoseNoiseSpec::none()).unwrap();
        let times = run.eval_times(4.0, 4.0);
        assert_eq!(times.iter().map(|t| t.frame).collect::<Vec<_>>(), vec![40, 80]);
        assert_eq!(times[0].time, 0.1 * 40.0);
    }
}
