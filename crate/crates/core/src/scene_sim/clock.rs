use crate::error::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

/// Trials of the frame-interval binomial. The success probability is solved
/// from the requested interval expectation.
pub const BINOMIAL_TRIALS: u64 = 10;

/// Per-agent sampling clock.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentClock {
    pub agent_id: u32,
    /// Start offset in seconds.
    pub offset: f64,
    /// Half-width of the per-timestamp uniform trigger jitter, seconds.
    pub turbulence_bound: f64,
    pub nominal_period: f64,
    /// Expected gap between consecutive timestamps, seconds.
    pub interval_expectation: f64,
}

impl AgentClock {
    pub fn regular(agent_id: u32, period: f64) -> Self {
        Self { agent_id, offset: 0.0, turbulence_bound: 0.0, nominal_period: period, interval_expectation: period }
    }

    /// Success probability of the frame-skip binomial.
    pub fn skip_probability(&self) -> Result<f64> {
        if !(self.nominal_period > 0.0) {
            return Err(Error::invalid("nominal_period must be positive"));
        }
        if self.interval_expectation < self.nominal_period {
            return Err(Error::invalid(format!(
                "interval_expectation {} is below nominal_period {}",
                self.interval_expectation, self.nominal_period
            )));
        }
        let p = (self.interval_expectation / self.nominal_period - 1.0) / BINOMIAL_TRIALS as f64;
        if p > 1.0 {
            return Err(Error::invalid(format!(
                "interval_expectation {} exceeds {} nominal periods",
                self.interval_expectation,
                BINOMIAL_TRIALS + 1
            )));
        }
        Ok(p.clamp(0.0, 1.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub agent_id: u32,
    pub timestamps: Vec<f64>,
}

impl Schedule {
    /// Index of the latest timestamp `<= t`.
    pub fn latest_at_or_before(&self, t: f64) -> Option<usize> {
        let n = self.timestamps.partition_point(|&s| s <= t);
        n.checked_sub(1)
    }
}

/// Samples an irregular, strictly increasing timestamp sequence in
/// `[offset − bound, horizon)`.
///
/// Frame `k` sits at `offset + period · N_k + u_k` where `N_k` accumulates
/// `1 + B` with `B ~ Binomial(10, p)` and `u_k ~ U(−bound, bound)` is drawn
/// independently per timestamp.
pub fn sample_schedule(clock: &AgentClock, horizon: f64, rng_seed: u64) -> Result<Schedule> {
    if !(horizon > 0.0) {
        return Err(Error::invalid("horizon must be positive"));
    }
    let p = clock.skip_probability()?;
    if clock.turbulence_bound < 0.0 || 2.0 * clock.turbulence_bound >= clock.nominal_period {
        return Err(Error::invalid("turbulence_bound must be in [0, nominal_period / 2)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let binom = Binomial::new(BINOMIAL_TRIALS, p).map_err(|e| Error::invalid(e.to_string()))?;
    let mut timestamps = Vec::new();
    let mut frames: u64 = 0;
    loop {
        let jitter = if clock.turbulence_bound > 0.0 {
            rng.random_range(-clock.turbulence_bound..=clock.turbulence_bound)
        } else {
            0.0
        };
        let t = clock.offset + clock.nominal_period * frames as f64 + jitter;
        if t >= horizon {
            break;
        }
        timestamps.push(t);
        frames += 1 + binom.sample(&mut rng);
    }
    Ok(Schedule { agent_id: clock.agent_id, timestamps })
}
