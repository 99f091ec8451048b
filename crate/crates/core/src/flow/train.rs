use super::mha::{model_backward, model_forward, ModelInput};
use super::params::{EstimatorDims, EstimatorParams};
use super::predict::model_input;
use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::tracker::Tracklet;
use serde::{Deserialize, Serialize};

/// A tracklet and the true pose of its object at `t_query`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSample {
    pub tracklet: Tracklet,
    pub t_query: f64,
    pub target_x: f64,
    pub target_y: f64,
    pub target_heading: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub dims: EstimatorDims,
    pub time_encoding: bool,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Weight of the squared heading error (radians²) against the squared
    /// position error (cells²).
    pub angle_weight: f64,
    /// Grid cell size in meters; position errors are measured in cells.
    pub cell: f64,
    pub pos_scale: f64,
    pub time_unit: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dims: EstimatorDims::default(),
            time_encoding: true,
            learning_rate: 1e-2,
            epochs: 600,
            angle_weight: 1.0,
            cell: 0.4,
            pos_scale: 4.0,
            time_unit: super::time::DEFAULT_TIME_UNIT,
            seed: 0,
        }
    }
}

/// Loss weighting shared by training and gradient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub angle_weight: f64,
    pub cell: f64,
}

impl From<&TrainConfig> for LossWeights {
    fn from(c: &TrainConfig) -> Self {
        Self { angle_weight: c.angle_weight, cell: c.cell }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEstimator {
    pub params: EstimatorParams,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Loss before each epoch's update.
    pub history: Vec<f64>,
}

struct Prepared {
    input: ModelInput,
    target: [f64; 3],
}

fn prepare(samples: &[TrainingSample], params: &EstimatorParams) -> Vec<Prepared> {
    samples
        .iter()
        .filter_map(|s| {
            let last = *s.tracklet.states.last()?;
            if s.tracklet.len() < 2 || !(s.t_query > last.timestamp) {
                return None;
            }
            let (s_a, c_a) = last.heading.sin_cos();
            let (dx, dy) = (s.target_x - last.x, s.target_y - last.y);
            let target = [
                (c_a * dx + s_a * dy) / params.pos_scale,
                (-s_a * dx + c_a * dy) / params.pos_scale,
                wrap_angle(s.target_heading - last.heading),
            ];
            Some(Prepared { input: model_input(&s.tracklet.states, s.t_query, params), target })
        })
        .collect()
}

fn evaluate(params: &EstimatorParams, data: &[Prepared], w: LossWeights, grad: Option<&mut [f64]>) -> f64 {
    let layout = params.dims.layout();
    let c2 = (params.pos_scale / w.cell).powi(2);
    let n = data.len() as f64;
    let mut total = 0.0;
    let mut grad = grad;
    for s in data {
        let cache = model_forward(params, &layout, &s.input);
        let e = [cache.y[0] - s.target[0], cache.y[1] - s.target[1], cache.y[2] - s.target[2]];
        total += c2 * (e[0] * e[0] + e[1] * e[1]) + w.angle_weight * e[2] * e[2];
        if let Some(g) = grad.as_deref_mut() {
            let gy = [2.0 * c2 * e[0] / n, 2.0 * c2 * e[1] / n, 2.0 * w.angle_weight * e[2] / n];
            model_backward(params, &layout, &s.input, &cache, &gy, g);
        }
    }
    total / n
}

/// Mean training loss and its gradient over `samples`. Samples the model
/// never sees (length-1 histories, queries at the newest timestamp) are
/// skipped.
pub fn loss_and_gradient(
    params: &EstimatorParams,
    samples: &[TrainingSample],
    w: LossWeights,
) -> Result<(f64, Vec<f64>)> {
    params.validate()?;
    let data = prepare(samples, params);
    if data.is_empty() {
        return Err(Error::invalid("no usable training samples"));
    }
    let mut grad = vec![0.0; params.len()];
    let loss = evaluate(params, &data, w, Some(&mut grad));
    Ok((loss, grad))
}

/// Fits the estimator with full-batch Adam at a fixed step size.
pub fn train_estimator(samples: &[TrainingSample], cfg: &TrainConfig) -> Result<TrainedEstimator> {
    if samples.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if !(cfg.learning_rate > 0.0) || !(cfg.cell > 0.0) || !(cfg.pos_scale > 0.0) || !(cfg.time_unit > 0.0) {
        return Err(Error::invalid("learning rate, cell, position scale and time unit must be positive"));
    }
    let mut params = EstimatorParams::init(cfg.dims, cfg.time_encoding, cfg.seed)?;
    params.pos_scale = cfg.pos_scale;
    params.time_unit = cfg.time_unit;
    let data = prepare(samples, &params);
    if data.is_empty() {
        return Err(Error::invalid("no usable training samples"));
    }
    let w = LossWeights::from(cfg);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut grad = vec![0.0; params.len()];
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = evaluate(&params, &data, w, Some(&mut grad));
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch, loss });
        }
        history.push(loss);
        let t = (epoch + 1) as i32;
        let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
        for i in 0..params.len() {
            m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
            v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
            params.values[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
    let final_loss = evaluate(&params, &data, w, None);
    if !final_loss.is_finite() {
        return Err(Error::Diverged { epoch: cfg.epochs, loss: final_loss });
    }
    let initial_loss = history.first().copied().unwrap_or(final_loss);
    Ok(TrainedEstimator { params, initial_loss, final_loss, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::TrackState;

    fn sample(pts: &[(f64, f64, f64)], heading: f64, t_query: f64, target: (f64, f64)) -> TrainingSample {
        let states = pts.iter().map(|&(t, x, y)| TrackState { timestamp: t, x, y, heading }).collect();
        TrainingSample {
            tracklet: Tracklet::from_states(0, states, (4.0, 2.0)).unwrap(),
            t_query,
            target_x: target.0,
            target_y: target.1,
            target_heading: heading,
        }
    }

    #[test]
    fn rejects_empty() {
        assert!(train_estimator(&[], &TrainConfig::default()).is_err());
        let only_short = [sample(&[(0.0, 0.0, 0.0)], 0.0, 1.0, (0.0, 0.0))];
        assert!(train_estimator(&only_short, &TrainConfig::default()).is_err());
    }

    #[test]
    fn stationary_set_converges() {
        let samples: Vec<_> = (0..12)
            .map(|i| {
                let x = i as f64 * 3.0 - 10.0;
                let t0 = i as f64 * 0.07;
                sample(&[(t0, x, 1.0), (t0 + 0.1, x, 1.0), (t0 + 0.3, x, 1.0)], 0.3 * i as f64, t0 + 0.5, (x, 1.0))
            })
            .collect();
        let cfg = TrainConfig { epochs: 200, ..TrainConfig::default() };
        let out = train_estimator(&samples, &cfg).unwrap();
        assert!(out.final_loss < 1e-3, "final loss {}", out.final_loss);
        assert!(out.final_loss <= out.initial_loss);
    }

    #[test]
    fn deterministic() {
        let samples = vec![sample(&[(0.0, 0.0, 0.0), (0.1, 1.0, 0.0)], 0.0, 0.3, (3.0, 0.0))];
        let cfg = TrainConfig { epochs: 20, ..TrainConfig::default() };
        assert_eq!(train_estimator(&samples, &cfg).unwrap(), train_estimator(&samples, &cfg).unwrap());
    }

    #[test]
    fn divergence_is_reported() {
        let samples = vec![sample(&[(0.0, 0.0, 0.0), (0.1, 1.0, 0.0)], 0.0, 0.3, (1e300, 0.0))];
        let cfg = TrainConfig { epochs: 5, ..TrainConfig::default() };
        assert!(matches!(train_estimator(&samples, &cfg), Err(Error::Diverged { .. })));
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let samples = vec![
            sample(&[(0.0, 0.0, 0.0), (0.1, 1.0, 0.2), (0.35, 3.0, 0.1)], 0.4, 0.6, (5.0, 1.0)),
            sample(&[(0.0, 2.0, 0.0), (0.2, 2.5, -0.5)], -1.0, 0.5, (3.0, -1.0)),
            sample(&[(0.0, -1.0, 1.0), (0.3, -1.0, 2.0), (0.4, -1.2, 2.4)], 2.0, 0.4, (-1.2, 2.4)),
        ];
        let w = LossWeights { angle_weight: 1.0, cell: 0.4 };
        let mut p = EstimatorParams::init(EstimatorDims { d: 8, n_heads: 2, hidden: 5 }, true, 4).unwrap();
        let (_, g) = loss_and_gradient(&p, &samples, w).unwrap();
        let eps = 1e-5;
        for i in 0..p.len() {
            let orig = p.values[i];
            p.values[i] = orig + eps;
            let up = loss_and_gradient(&p, &samples, w).unwrap().0;
            p.values[i] = orig - eps;
            let down = loss_and_gradient(&p, &samples, w).unwrap().0;
            p.values[i] = orig;
            let fd = (up - down) / (2.0 * eps);
            let scale = fd.abs().max(g[i].abs());
            assert!((fd - g[i]).abs() <= 1e-4 * scale + 1e-7, "param {i}: {fd} vs {}", g[i]);
        }
    }
}
