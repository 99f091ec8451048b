use crate::geometry::OrientedBox;

type Pt = (f64, f64);

fn cross(o: Pt, a: Pt, b: Pt) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

fn polygon_area(poly: &[Pt]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % n];
        s += x0 * y1 - x1 * y0;
    }
    0.5 * s.abs()
}

/// Sutherland–Hodgman clipping of a convex polygon by a convex CCW clipper.
fn clip_convex(subject: &[Pt], clipper: &[Pt]) -> Vec<Pt> {
    let mut out: Vec<Pt> = subject.to_vec();
    let m = clipper.len();
    for i in 0..m {
        if out.is_empty() {
            break;
        }
        let a = clipper[i];
        let b = clipper[(i + 1) % m];
        let input = std::mem::take(&mut out);
        let n = input.len();
        for j in 0..n {
            let p = input[j];
            let q = input[(j + 1) % n];
            let cp = cross(a, b, p);
            let cq = cross(a, b, q);
            let p_in = cp >= 0.0;
            let q_in = cq >= 0.0;
            if p_in {
                out.push(p);
            }
            if p_in != q_in {
                let t = cp / (cp - cq);
                out.push((p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1)));
            }
        }
    }
    out
}

/// Exact intersection area of two oriented rectangles.
pub fn intersection_area(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.center_distance(b) > a.circumradius() + b.circumradius() {
        return 0.0;
    }
    polygon_area(&clip_convex(&a.corners(), &b.corners()))
}

fn same_rectangle(a: &OrientedBox, b: &OrientedBox) -> bool {
    if a.x != b.x || a.y != b.y {
        return false;
    }
    let d = (a.heading - b.heading).rem_euclid(std::f64::consts::PI);
    let aligned = d == 0.0;
    let quarter = (d - std::f64::consts::FRAC_PI_2) == 0.0;
    (aligned && a.length == b.length && a.width == b.width) || (quarter && a.length == b.width && a.width == b.length)
}

/// Rotated-box intersection over union in `[0, 1]`. Degenerate boxes give 0.
pub fn rotated_iou(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if a.is_degenerate() || b.is_degenerate() {
        return 0.0;
    }
    if same_rectangle(a, b) {
        return 1.0;
    }
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}
