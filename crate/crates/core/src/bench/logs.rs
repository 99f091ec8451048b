//! Observation and message logs of a simulated sweep point, and their replay.

use super::config::{ExperimentConfig, Method};
use super::methods::{evaluate_methods, Models};
use super::pipeline::{summarize, SweepPoint};
use super::report::RunReport;
use super::scene::{scene_seed, CollaboratorInputs, EvalInputs, SceneRun};
use crate::error::{Error, Result};
use crate::eval::EvalRecord;
use crate::flow::EstimatorParams;
use crate::geometry::OrientedBox;
use crate::roi_codec::{read_message_log, write_message_log, CollabMessage};
use crate::scene_sim::Observation;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const OBSERVATION_LOG: &str = "observations.jsonl";

pub fn message_log_name(scene: u64) -> String {
    format!("messages_scene{scene}.bin")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollaboratorRecord {
    pub agent: u32,
    pub delay: f64,
    /// Timestamps of the messages used, oldest first.
    pub history: Vec<f64>,
    pub sync: Option<f64>,
}

/// One line of the observation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogRecord {
    Header {
        config_hash: String,
        interval_ms: f64,
        sigma_t: f64,
        sigma_r_deg: f64,
    },
    Observation {
        scene: u64,
        #[serde(flatten)]
        observation: Observation,
    },
    Evaluation {
        scene: u64,
        scene_seed: u64,
        frame: u64,
        ego_time: f64,
        collaborators: Vec<CollaboratorRecord>,
        ground_truth: Vec<OrientedBox>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationSummary {
    pub scenes: u64,
    pub evaluations: usize,
    pub messages: usize,
    pub files: Vec<PathBuf>,
}

fn write_line<W: Write>(out: &mut W, rec: &LogRecord) -> Result<()> {
    serde_json::to_writer(&mut *out, rec)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Generates every ego evaluation of one sweep point and logs the ego
/// observations, the messages each evaluation consumes and the ground truth.
pub fn simulate(cfg: &ExperimentConfig, point: SweepPoint, out_dir: &Path) -> Result<SimulationSummary> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::from(e).context(format!("creating {}", out_dir.display())))?;
    let log_path = out_dir.join(OBSERVATION_LOG);
    let mut log = BufWriter::new(std::fs::File::create(&log_path)?);
    write_line(
        &mut log,
        &LogRecord::Header {
            config_hash: cfg.hash(),
            interval_ms: point.interval_ms,
            sigma_t: point.noise.sigma_t,
            sigma_r_deg: point.noise.sigma_r_deg,
        },
    )?;
    let with_sync = cfg.methods.contains(&Method::SyncIdeal);
    let mut summary = SimulationSummary { scenes: 0, evaluations: 0, messages: 0, files: vec![log_path.clone()] };
    let mut scene_index = 0u64;
    for &seed in &cfg.seeds {
        for scene in 0..cfg.scenes {
            let run =
                SceneRun::new(cfg, scene_index, scene_seed(seed, scene), point.interval_ms, point.noise.pose_noise())?;
            let mut messages: Vec<CollabMessage> = Vec::new();
            let mut seen = HashSet::new();
            for at in run.eval_times(cfg.warmup, cfg.eval_stride) {
                let inputs = run.inputs(at, with_sync)?;
                write_line(&mut log, &LogRecord::Observation { scene: scene_index, observation: inputs.ego.clone() })?;
                let mut collaborators = Vec::new();
                for col in &inputs.collaborators {
                    for m in col.history.iter().chain(&col.sync) {
                        if seen.insert((m.sender_id, m.timestamp.to_bits())) {
                            let agent = cfg.scenario.agent(m.sender_id).expect("known sender");
                            let obs = run.observe(agent, m.timestamp);
                            write_line(&mut log, &LogRecord::Observation { scene: scene_index, observation: obs })?;
                            messages.push(m.clone());
                        }
                    }
                    collaborators.push(CollaboratorRecord {
                        agent: col.agent,
                        delay: col.delay,
                        history: col.history.iter().map(|m| m.timestamp).collect(),
                        sync: col.sync.as_ref().map(|m| m.timestamp),
                    });
                }
                write_line(
                    &mut log,
                    &LogRecord::Evaluation {
                        scene: scene_index,
                        scene_seed: inputs.scene_seed,
                        frame: at.frame,
                        ego_time: at.time,
                        collaborators,
                        ground_truth: inputs.ground_truth,
                    },
                )?;
                summary.evaluations += 1;
            }
            let path = out_dir.join(message_log_name(scene_index));
            write_message_log(BufWriter::new(std::fs::File::create(&path)?), &messages)
                .map_err(|e| e.context(format!("writing {}", path.display())))?;
            summary.messages += messages.len();
            summary.files.push(path);
            scene_index += 1;
        }
    }
    log.flush()?;
    summary.scenes = scene_index;
    Ok(summary)
}

/// Re-evaluates `cfg.methods` on a simulated log directory.
pub fn replay(cfg: &ExperimentConfig, dir: &Path, estimator: Option<EstimatorParams>) -> Result<RunReport> {
    let start = Instant::now();
    let spec = cfg.scenario.grid_spec()?;
    let estimator = match estimator {
        Some(p) => Some(p),
        None if cfg.needs_estimator() => Some(super::training::provision_estimator(cfg)?),
        None => None,
    };
    let models = Models::new(estimator);
    let log_path = dir.join(OBSERVATION_LOG);
    let file = std::fs::File::open(&log_path)
        .map_err(|e| Error::from(e).context(format!("opening {}", log_path.display())))?;
    let mut point = None;
    let mut hash = String::new();
    let mut current_scene = None;
    let mut messages: BTreeMap<(u32, u64), CollabMessage> = BTreeMap::new();
    let mut ego_obs: BTreeMap<u64, Observation> = BTreeMap::new();
    let mut records = vec![Vec::new(); cfg.methods.len()];
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: LogRecord = serde_json::from_str(&line)
            .map_err(|e| Error::from(e).context(format!("{} line {}", log_path.display(), n + 1)))?;
        match rec {
            LogRecord::Header { config_hash, interval_ms, sigma_t, sigma_r_deg } => {
                hash = config_hash;
                point = Some(SweepPoint { interval_ms, noise: super::config::NoiseLevel { sigma_t, sigma_r_deg } });
            }
            LogRecord::Observation { scene, observation } => {
                if current_scene != Some(scene) {
                    let path = dir.join(message_log_name(scene));
                    let f = std::fs::File::open(&path)
                        .map_err(|e| Error::from(e).context(format!("opening {}", path.display())))?;
                    messages = read_message_log(std::io::BufReader::new(f), &spec)
                        .map_err(|e| e.context(format!("reading {}", path.display())))?
                        .into_iter()
                        .map(|m| ((m.sender_id, m.timestamp.to_bits()), m))
                        .collect();
                    ego_obs.clear();
                    current_scene = Some(scene);
                }
                if observation.agent_id == cfg.scenario.agents[0].id {
                    ego_obs.insert(observation.timestamp.to_bits(), observation);
                }
            }
            LogRecord::Evaluation { scene, scene_seed, frame, ego_time, collaborators, ground_truth } => {
                if current_scene != Some(scene) {
                    return Err(Error::Format(format!("evaluation of scene {scene} precedes its observations")));
                }
                let lookup = |agent: u32, t: f64| -> Result<CollabMessage> {
                    messages
                        .get(&(agent, t.to_bits()))
                        .cloned()
                        .ok_or_else(|| Error::Format(format!("scene {scene}: no message from agent {agent} at {t}")))
                };
                let mut cols = Vec::new();
                for c in &collaborators {
                    cols.push(CollaboratorInputs {
                        agent: c.agent,
                        delay: c.delay,
                        history: c.history.iter().map(|&t| lookup(c.agent, t)).collect::<Result<_>>()?,
                        sync: c.sync.map(|t| lookup(c.agent, t)).transpose()?,
                    });
                }
                let ego = ego_obs
                    .get(&ego_time.to_bits())
                    .cloned()
                    .ok_or_else(|| Error::Format(format!("scene {scene}: no ego observation at {ego_time}")))?;
                let inputs = EvalInputs { scene, scene_seed, frame, ego_time, ego, collaborators: cols, ground_truth };
                let dets = evaluate_methods(&inputs, &cfg.methods, &models, cfg, &spec)
                    .map_err(|e| e.context(format!("replaying scene {scene} at t = {ego_time}")))?;
                for (slot, detections) in records.iter_mut().zip(dets) {
                    slot.push(EvalRecord {
                        scene,
                        timestamp: ego_time,
                        detections,
                        ground_truth: inputs.ground_truth.clone(),
                    });
                }
            }
        }
    }
    let point = point.ok_or_else(|| Error::Format("observation log has no header".into()))?;
    Ok(RunReport {
        rows: summarize(cfg, point, &records)?,
        wall_clock_s: start.elapsed().as_secs_f64(),
        config_hash: hash,
    })
}
