//! Small planar geometry kit on top of `num_complex`.

use num_complex::Complex64;
use std::f64::consts::PI;

pub type C64 = Complex64;

pub const TAU: f64 = 2.0 * PI;

/// Reduce an angle to `(-π, π]`.
pub fn wrap(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}

/// Counterclockwise angle in `[0, 2π)` turning direction `from` into `to`.
pub fn ccw_angle(from: C64, to: C64) -> f64 {
    (to / from).arg().rem_euclid(TAU)
}

pub fn cross(a: C64, b: C64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Twice the signed area of the triangle (a, b, c).
pub fn orient(a: C64, b: C64, c: C64) -> f64 {
    cross(b - a, c - a)
}

pub fn signed_area(poly: &[C64]) -> f64 {
    let n = poly.len();
    (0..n).map(|k| cross(poly[k], poly[(k + 1) % n])).sum::<f64>() / 2.0
}

fn on_segment(p: C64, a: C64, b: C64, eps: f64) -> bool {
    orient(a, b, p).abs() <= eps * (b - a).norm().max(1.0)
        && (p.re - a.re.min(b.re)) >= -eps
        && (p.re - a.re.max(b.re)) <= eps
        && (p.im - a.im.min(b.im)) >= -eps
        && (p.im - a.im.max(b.im)) <= eps
}

/// Closed-segment intersection test (touching counts).
pub fn segments_meet(a: C64, b: C64, c: C64, d: C64, eps: f64) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > eps && d2 < -eps) || (d1 < -eps && d2 > eps))
        && ((d3 > eps && d4 < -eps) || (d3 < -eps && d4 > eps))
    {
        return true;
    }
    on_segment(a, c, d, eps) || on_segment(b, c, d, eps) || on_segment(c, a, b, eps) || on_segment(d, a, b, eps)
}

pub fn point_on_open_segment(p: C64, a: C64, b: C64, eps: f64) -> bool {
    on_segment(p, a, b, eps) && (p - a).norm() > eps && (p - b).norm() > eps
}

/// Kernel of a counterclockwise simple polygon: the points that see every
/// vertex. Computed by clipping with the left half-plane of each side;
/// empty when the polygon is not star-shaped.
pub fn polygon_kernel(poly: &[C64]) -> Vec<C64> {
    let n = poly.len();
    let mut ker = poly.to_vec();
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        let side = |p: C64| orient(a, b, p);
        let mut out = Vec::with_capacity(ker.len() + 1);
        for i in 0..ker.len() {
            let (p, q) = (ker[i], ker[(i + 1) % ker.len()]);
            let (sp, sq) = (side(p), side(q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp > 0.0 && sq < 0.0) || (sp < 0.0 && sq > 0.0) {
                out.push(p + (q - p) * (sp / (sp - sq)));
            }
        }
        ker = out;
        if ker.len() < 3 {
            return Vec::new();
        }
    }
    ker
}

/// Area centroid of a polygon (vertex mean when the area vanishes).
pub fn polygon_centroid(poly: &[C64]) -> C64 {
    let n = poly.len();
    let a = signed_area(poly);
    if a.abs() < 1e-300 {
        return poly.iter().sum::<C64>() / n as f64;
    }
    let mut c = C64::new(0.0, 0.0);
    for k in 0..n {
        let (p, q) = (poly[k], poly[(k + 1) % n]);
        c += (p + q) * cross(p, q);
    }
    c / (6.0 * a)
}

/// True when `p` lies strictly left of every side of the polygon.
pub fn strictly_in_kernel(poly: &[C64], p: C64, rel_eps: f64) -> bool {
    let n = poly.len();
    (0..n).all(|k| {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        orient(a, b, p) > rel_eps * (b - a).norm_sqr()
    })
}

/// Circumcenter of three points, `None` when (nearly) collinear.
pub fn circumcenter(a: C64, b: C64, c: C64) -> Option<C64> {
    let d = 2.0 * orient(a, b, c);
    if d.abs() < 1e-14 {
        return None;
    }
    let (b, c) = (b - a, c - a);
    let (nb, nc) = (b.norm_sqr(), c.norm_sqr());
    Some(a + C64::new(c.im * nb - b.im * nc, b.re * nc - c.re * nb) / d)
}

/// Inscribed-circle center and radius of a tangential quadrilateral, from the
/// four half-angle bisectors. Works for non-convex tangential quads too.
pub fn incircle(p: [C64; 4]) -> Option<(C64, f64)> {
    // bisector at vertex k: direction sum of unit vectors to neighbours
    let bis = |k: usize| {
        let a = p[(k + 3) % 4] - p[k];
        let b = p[(k + 1) % 4] - p[k];
        a / a.norm() + b / b.norm()
    };
    let (d0, d1) = (bis(0), bis(1));
    let den = cross(d0, d1);
    if den.abs() < 1e-14 {
        return None;
    }
    let t = cross(p[1] - p[0], d1) / den;
    let c = p[0] + d0 * t;
    let e = p[1] - p[0];
    let r = cross(e, c - p[0]).abs() / e.norm();
    Some((c, r))
}
