//! Planar geometry shared by every stage: angle wrapping and the oriented box.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Wraps an angle into (−π, π].
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// A 2D oriented rectangle with a detection confidence.
///
/// `length` runs along `heading`, `width` across it. Heading is measured
/// counterclockwise from the +x axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub confidence: f64,
    pub x: f64,
    pub y: f64,
    pub length: f64,
    pub width: f64,
    pub heading: f64,
}

impl OrientedBox {
    pub fn new(confidence: f64, x: f64, y: f64, length: f64, width: f64, heading: f64) -> Self {
        Self { confidence, x, y, length, width, heading: wrap_angle(heading) }
    }

    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.length > 0.0 && self.width > 0.0) || !self.x.is_finite() || !self.y.is_finite()
    }

    /// Corners in counterclockwise order.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let (s, c) = self.heading.sin_cos();
        let hl = 0.5 * self.length;
        let hw = 0.5 * self.width;
        let local = [(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)];
        // counterclockwise for a right-handed frame: (+,+) -> (-,+) -> (-,-) -> (+,-)
        local.map(|(u, v)| (self.x + c * u - s * v, self.y + s * u + c * v))
    }

    /// Point-in-rectangle test, boundary inclusive.
    pub fn contains(&self, px: f64, py: f64) -> bool {
        let (s, c) = self.heading.sin_cos();
        let dx = px - self.x;
        let dy = py - self.y;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= 0.5 * self.length && v.abs() <= 0.5 * self.width
    }

    /// Radius of the circumscribed circle.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }

    /// Axis-aligned bounds `(x_min, x_max, y_min, y_max)`.
    pub fn aabb(&self) -> (f64, f64, f64, f64) {
        let cs = self.corners();
        let mut b = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in cs {
            b.0 = b.0.min(x);
            b.1 = b.1.max(x);
            b.2 = b.2.min(y);
            b.3 = b.3.max(y);
        }
        b
    }

    pub fn center_distance(&self, other: &OrientedBox) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(2.0 * PI + 0.5) - 0.5).abs() < 1e-12);
        assert!((wrap_angle(-2.0 * PI - 0.5) + 0.5).abs() < 1e-12);
        for i in -1000..1000 {
            let w = wrap_angle(i as f64 * 0.037);
            assert!(w > -PI && w <= PI);
        }
    }

    #[test]
    fn contains_respects_heading() {
        let b = OrientedBox::new(1.0, 0.0, 0.0, 4.0, 2.0, PI / 2.0);
        assert!(b.contains(0.0, 1.9));
        assert!(!b.contains(1.9, 0.0));
        assert!(b.contains(0.9, 0.0));
    }

    #[test]
    fn corners_ccw() {
        let b = OrientedBox::new(1.0, 1.0, 2.0, 4.0, 2.0, 0.3);
        let c = b.corners();
        let mut area2 = 0.0;
        for i in 0..4 {
            let (x0, y0) = c[i];
            let (x1, y1) = c[(i + 1) % 4];
            area2 += x0 * y1 - x1 * y0;
        }
        assert!((area2 * 0.5 - 8.0).abs() < 1e-12);
    }
}
