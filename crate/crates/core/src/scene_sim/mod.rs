//! Synthetic multi-agent worlds: constant-turn-rate kinematics, irregular
//! message clocks and noisy local observations.

mod clock;
mod observe;
mod scenario;

pub use clock::{sample_schedule, AgentClock, Schedule, BINOMIAL_TRIALS};
pub use observe::{observe, DetectionNoise, FieldOfView, Observation, PoseNoiseSpec};
pub use scenario::{AgentSpec, ObjectSpec, Scenario, World};

use crate::geometry::{wrap_angle, OrientedBox};
use serde::{Deserialize, Serialize};

/// Exact state of one simulated object.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectState {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    /// Radians in (−π, π].
    pub heading: f64,
    /// Meters per second, non-negative.
    pub speed: f64,
    /// Radians per second.
    pub yaw_rate: f64,
    pub length: f64,
    pub width: f64,
}

impl ObjectState {
    pub fn to_box(&self, confidence: f64) -> OrientedBox {
        OrientedBox::new(confidence, self.x, self.y, self.length, self.width, self.heading)
    }

    /// Closed-form constant-turn-rate advance by `dt` seconds.
    pub fn advanced(&self, dt: f64) -> ObjectState {
        if dt == 0.0 {
            return *self;
        }
        let mut next = *self;
        let v = self.speed;
        let w = self.yaw_rate;
        if w.abs() < 1e-12 {
            let (s, c) = self.heading.sin_cos();
            next.x = self.x + v * c * dt;
            next.y = self.y + v * s * dt;
        } else {
            let th1 = self.heading + w * dt;
            next.x = self.x + v / w * (th1.sin() - self.heading.sin());
            next.y = self.y + v / w * (self.heading.cos() - th1.cos());
            next.heading = wrap_angle(th1);
        }
        next
    }
}

/// Advances every object by `dt` seconds along its constant-turn-rate arc.
/// `dt = 0` returns the input unchanged.
pub fn step_world(objects: &[ObjectState], dt: f64) -> Vec<ObjectState> {
    debug_assert!(dt >= 0.0, "step_world requires dt >= 0");
    objects.iter().map(|o| o.advanced(dt)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn obj(speed: f64, yaw_rate: f64) -> ObjectState {
        ObjectState { id: 3, x: 0.0, y: 0.0, heading: 0.0, speed, yaw_rate, length: 4.5, width: 1.9 }
    }

    #[test]
    fn straight_line() {
        let o = step_world(&[obj(10.0, 0.0)], 1.0)[0];
        assert!((o.x - 10.0).abs() < 1e-12);
        assert!(o.y.abs() < 1e-12);
        assert_eq!(o.id, 3);
    }

    #[test]
    fn zero_dt_is_identity() {
        let o = obj(7.0, 0.2);
        assert_eq!(step_world(&[o], 0.0)[0], o);
    }

    #[test]
    fn quarter_turn_matches_fine_integration() {
        let o = obj(10.0, PI / 2.0);
        let exact = o.advanced(1.0);
        // fine-step integration oracle
        let (mut x, mut y, mut th) = (0.0f64, 0.0f64, 0.0f64);
        let h = 1e-4;
        for _ in 0..10_000 {
            // midpoint rule on heading
            let mid = th + 0.5 * h * o.yaw_rate;
            x += o.speed * mid.cos() * h;
            y += o.speed * mid.sin() * h;
            th += h * o.yaw_rate;
        }
        assert!((exact.x - x).abs() < 1e-3 && (exact.y - y).abs() < 1e-3);
        assert!((exact.heading - PI / 2.0).abs() < 1e-12);
        let r = 10.0 / (PI / 2.0);
        assert!((exact.x - r).abs() < 1e-9 && (exact.y - r).abs() < 1e-9);
    }

    #[test]
    fn composition_of_steps() {
        let o = obj(12.0, 0.0);
        let a = o.advanced(0.3).advanced(0.45);
        let b = o.advanced(0.75);
        assert!((a.x - b.x).abs() < 1e-12 && (a.y - b.y).abs() < 1e-12);
        assert_eq!(a.heading, b.heading);

        let o = obj(12.0, 0.37);
        let a = o.advanced(0.3).advanced(0.45);
        let b = o.advanced(0.75);
        assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        assert!((wrap_angle(a.heading - b.heading)).abs() < 1e-12);
    }
}
