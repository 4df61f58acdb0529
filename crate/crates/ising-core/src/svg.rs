//! Deterministic SVG rendering of s-embeddings and scalar fields.

use crate::geom::C64;
use crate::planar_map::DualPair;
use crate::sembed::{properness_check, quad_geometry, SEmbedding};
use std::fmt::Write;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;
const LEGEND: f64 = 60.0;

/// Affine map from the bounding box of `pts` onto the canvas, y pointing up.
struct Viewport {
    lo: C64,
    scale: f64,
}

impl Viewport {
    fn fit(pts: impl Iterator<Item = C64>) -> Self {
        let (mut lo, mut hi) = (C64::new(f64::INFINITY, f64::INFINITY), C64::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
        for p in pts {
            lo = C64::new(lo.re.min(p.re), lo.im.min(p.im));
            hi = C64::new(hi.re.max(p.re), hi.im.max(p.im));
        }
        if !lo.re.is_finite() {
            return Viewport { lo: C64::new(0.0, 0.0), scale: 1.0 };
        }
        let span = (hi.re - lo.re).max(hi.im - lo.im).max(1e-300);
        Viewport { lo, scale: (SIZE - 2.0 * MARGIN) / span }
    }
    fn x(&self, p: C64) -> f64 {
        MARGIN + (p.re - self.lo.re) * self.scale
    }
    fn y(&self, p: C64) -> f64 {
        SIZE - MARGIN - (p.im - self.lo.im) * self.scale
    }
}

fn header(out: &mut String, height: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE:.0}" height="{height:.0}" viewBox="0 0 {SIZE:.6} {height:.6}">"#
    );
    let _ = writeln!(out, r#"<rect x="0" y="0" width="{SIZE:.6}" height="{height:.6}" fill="white"/>"#);
}

/// Output of [`sembedding_svg`]; `warning` is set when the embedding is not proper.
pub struct Rendered {
    pub svg: String,
    pub warning: bool,
}

/// One polygon per quad plus its inscribed circle; quads that are degenerate,
/// clockwise or overlapping are drawn in red.
pub fn sembedding_svg(s: &SEmbedding, dual: &DualPair) -> Rendered {
    let rep = properness_check(s, dual);
    let mut bad = vec![false; dual.quads.len()];
    for &z in rep.degenerate.iter().chain(&rep.clockwise) {
        bad[z] = true;
    }
    for &(a, b) in &rep.overlaps {
        bad[a] = true;
        bad[b] = true;
    }
    let vp = Viewport::fit(s.lambda().into_iter());
    let mut out = String::new();
    header(&mut out, SIZE);
    let _ = writeln!(
        out,
        r#"<metadata>{{"quads":{},"proper":{},"tangential_max":{:.6e}}}</metadata>"#,
        dual.quads.len(),
        rep.proper,
        rep.tangential_max
    );
    for z in 0..dual.quads.len() {
        let p = s.quad_points(dual, z);
        let pts: Vec<String> = p.iter().map(|&q| format!("{:.6},{:.6}", vp.x(q), vp.y(q))).collect();
        let (stroke, fill) = if bad[z] { ("red", "#ffd0d0") } else { ("black", "#eef3ff") };
        let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" stroke="{stroke}" stroke-width="1"/>"#, pts.join(" "));
        if let Ok(g) = quad_geometry(s, dual, z) {
            let c = s.center[z];
            let _ = writeln!(
                out,
                r##"<circle cx="{:.6}" cy="{:.6}" r="{:.6}" fill="none" stroke="#3060c0" stroke-width="0.6"/>"##,
                vp.x(c),
                vp.y(c),
                g.r * vp.scale
            );
        }
    }
    out.push_str("</svg>\n");
    Rendered { svg: out, warning: !rep.proper }
}

fn color(t: f64) -> String {
    // blue → white → red
    let t = t.clamp(0.0, 1.0);
    let (r, g, b) = if t < 0.5 {
        let s = t / 0.5;
        (s, s, 1.0)
    } else {
        let s = (1.0 - t) / 0.5;
        (1.0, s, s)
    };
    format!("#{:02x}{:02x}{:02x}", (r * 255.0).round() as u8, (g * 255.0).round() as u8, (b * 255.0).round() as u8)
}

/// Scalar field on points, drawn as colored dots with a legend bar.
pub fn field_svg(points: &[C64], values: &[f64], label: &str) -> String {
    let vp = Viewport::fit(points.iter().copied());
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let (lo, hi) = if lo.is_finite() { (lo, hi) } else { (0.0, 0.0) };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = String::new();
    header(&mut out, SIZE + LEGEND);
    let _ = writeln!(out, r#"<metadata>{{"points":{},"min":{lo:.6e},"max":{hi:.6e}}}</metadata>"#, points.len().min(values.len()));
    for (&p, &v) in points.iter().zip(values) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.6}" cy="{:.6}" r="5.000000" fill="{}" stroke="black" stroke-width="0.3"/>"#,
            vp.x(p),
            vp.y(p),
            color((v - lo) / span)
        );
    }
    let steps = 32;
    let w = (SIZE - 2.0 * MARGIN) / f64::from(steps);
    for k in 0..steps {
        let _ = writeln!(
            out,
            r#"<rect x="{:.6}" y="{:.6}" width="{:.6}" height="14.000000" fill="{}"/>"#,
            MARGIN + f64::from(k) * w,
            SIZE + 10.0,
            w,
            color((f64::from(k) + 0.5) / f64::from(steps))
        );
    }
    let label: String = label.chars().filter(|c| !matches!(c, '<' | '>' | '&' | '"')).collect();
    let _ = writeln!(out, r#"<text x="{MARGIN:.6}" y="{:.6}" font-size="12">{lo:.6}</text>"#, SIZE + 40.0);
    let _ = writeln!(out, r#"<text x="{:.6}" y="{:.6}" font-size="12" text-anchor="end">{hi:.6}</text>"#, SIZE - MARGIN, SIZE + 40.0);
    let _ = writeln!(out, r#"<text x="{:.6}" y="{:.6}" font-size="12" text-anchor="middle">{label}</text>"#, SIZE / 2.0, SIZE + 40.0);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::GridBoundary;
    use crate::isoradial::square_lattice;
    use crate::sembed::{build_sembedding, isoradial_pair};
    use crate::sholo::default_base;

    #[test]
    fn isoradial_embedding_renders_one_polygon_per_quad() {
        let iso = square_lattice(0.25, 4, 4, GridBoundary::Wired).unwrap();
        let (f1, f2) = isoradial_pair(&iso.map, &iso.dual).unwrap();
        let s = build_sembedding(&iso.dual, &iso.weights, &f1, &f2, default_base(&iso.dual)).unwrap();
        let r = sembedding_svg(&s, &iso.dual);
        assert!(!r.warning);
        assert_eq!(r.svg.matches("<polygon").count(), iso.dual.quads.len());
        assert_eq!(r.svg.matches("<circle").count(), iso.dual.quads.len());
        assert!(r.svg.contains(r#""proper":true"#));
        assert!(!r.svg.contains("red"));
        assert_eq!(r.svg, sembedding_svg(&s, &iso.dual).svg);
    }

    #[test]
    fn empty_field_is_legend_only() {
        let svg = field_svg(&[], &[], "H");
        assert_eq!(svg.matches("<circle").count(), 0);
        assert_eq!(svg.matches("<rect").count(), 33);
        let pts = [C64::new(0.0, 0.0), C64::new(1.0, 1.0)];
        let a = field_svg(&pts, &[0.0, 2.0], "H");
        assert_eq!(a.matches("<circle").count(), 2);
        assert_eq!(a, field_svg(&pts, &[0.0, 2.0], "H"));
    }
}
