use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One nominal frame (100 ms) maps to 1.0 in the encoding's time argument.
pub const DEFAULT_TIME_UNIT: f64 = 0.1;

/// Sinusoidal code of a time value; entry `2e` is a sine and `2e + 1` the
/// matching cosine at frequency `10000^(-2e/d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeCode {
    pub values: Vec<f64>,
}

impl TimeCode {
    pub fn zeros(d: usize) -> Self {
        Self { values: vec![0.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Encodes `t` seconds using the default time unit.
pub fn time_encode(t: f64, d: usize) -> Result<TimeCode> {
    time_encode_units(t / DEFAULT_TIME_UNIT, d)
}

/// Encodes a time already expressed in encoding units.
pub fn time_encode_units(t: f64, d: usize) -> Result<TimeCode> {
    if d == 0 || !d.is_multiple_of(2) {
        return Err(Error::invalid(format!("time code dimension must be even and positive, got {d}")));
    }
    let mut values = vec![0.0; d];
    for e in 0..d / 2 {
        let period = 10000f64.powf((2 * e) as f64 / d as f64);
        let (s, c) = (t / period).sin_cos();
        values[2 * e] = s;
        values[2 * e + 1] = c;
    }
    Ok(TimeCode { values })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_time() {
        assert_eq!(time_encode(0.0, 4).unwrap().values, vec![0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn one_unit() {
        let u = time_encode(0.1, 4).unwrap().values;
        let expect = [1f64.sin(), 1f64.cos(), 0.01f64.sin(), 0.01f64.cos()];
        for (a, b) in u.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        }
        assert!((u[0] - 0.84147).abs() < 1e-5 && (u[3] - 0.99995).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_dims() {
        assert!(time_encode(1.0, 0).is_err());
        assert!(time_encode(1.0, 5).is_err());
    }

    #[test]
    fn pairs_have_unit_norm() {
        for i in 0..200 {
            let t = (i as f64 - 100.0) * 0.731;
            let u = time_encode(t, 16).unwrap().values;
            for p in u.chunks(2) {
                assert!((p[0] * p[0] + p[1] * p[1] - 1.0).abs() < 1e-12);
            }
        }
    }
}
