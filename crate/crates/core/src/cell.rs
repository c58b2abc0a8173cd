//! Voronoi cell of the origin with respect to `{o} ∪ Y`, by successive
//! half-plane clipping of the window square.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};

/// Point-on-line tolerance in length units.
pub const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexCell {
    /// Counter-clockwise vertices.
    pub vertices: Vec<Point>,
    /// True iff no point outside the window can cut the cell.
    pub bounded_certificate: bool,
    pub circumradius: f64,
}

impl ConvexCell {
    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| self.vertices[i].cross(self.vertices[(i + 1) % n]))
            .sum::<f64>()
    }

    /// Closed containment test with the module tolerance.
    pub fn contains(&self, p: Point) -> bool {
        let n = self.vertices.len();
        (0..n).all(|i| {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            (b - a).cross(p - a) >= -EPS
        })
    }

    pub fn bounding_box(&self) -> Rect {
        let mut r = Rect::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            r.x0 = r.x0.min(v.x);
            r.y0 = r.y0.min(v.y);
            r.x1 = r.x1.max(v.x);
            r.y1 = r.y1.max(v.y);
        }
        r
    }

    /// Parameter interval `[t0, t1] ⊆ [0, 1]` of the segment `a + t (b - a)`
    /// inside the cell, or `None`.
    pub fn clip_segment(&self, a: Point, b: Point) -> Option<(f64, f64)> {
        let d = b - a;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        let n = self.vertices.len();
        for i in 0..n {
            let p = self.vertices[i];
            let e = self.vertices[(i + 1) % n] - p;
            // Inside: e x (x - p) >= -EPS, linear in t.
            let f0 = e.cross(a - p) + EPS;
            let df = e.cross(d);
            if df == 0.0 {
                if f0 < 0.0 {
                    return None;
                }
            } else {
                let t = -f0 / df;
                if df > 0.0 {
                    t0 = t0.max(t);
                } else {
                    t1 = t1.min(t);
                }
                if t0 > t1 {
                    return None;
                }
            }
        }
        Some((t0, t1))
    }
}

fn circumradius(vertices: &[Point]) -> f64 {
    vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

/// Keeps the part of a convex polygon with `normal . x <= offset`.
pub fn clip_half_plane(poly: &[Point], normal: Point, offset: f64) -> Vec<Point> {
    let side = |p: Point| normal.dot(p) - offset;
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let next = poly[(i + 1) % poly.len()];
        let (sc, sn) = (side(cur), side(next));
        let cur_in = sc <= EPS;
        let next_in = sn <= EPS;
        if cur_in {
            out.push(cur);
        }
        if cur_in != next_in && (sc.abs() > EPS && sn.abs() > EPS) {
            let t = sc / (sc - sn);
            out.push(cur + (next - cur) * t);
        }
    }
    out
}

/// Typical cell at the origin: the window square clipped by the bisector of
/// `(o, y)` for every pattern point `y`, nearest points first.
pub fn voronoi_cell_at_origin(points: &[Point], w: f64) -> Result<ConvexCell> {
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidParameter(format!("window half-width must be positive, got {w}")));
    }
    let mut sorted: Vec<(f64, Point)> = Vec::with_capacity(points.len());
    for &p in points {
        let d2 = p.norm_sq();
        if d2.sqrt() <= EPS {
            return Err(Error::DegeneratePoint);
        }
        sorted.push((d2, p));
    }
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut poly = vec![
        Point::new(-w, -w),
        Point::new(w, -w),
        Point::new(w, w),
        Point::new(-w, w),
    ];
    let mut radius = circumradius(&poly);
    for (d2, p) in sorted {
        // Bisector lies at distance |p| / 2 from o.
        if d2 > 4.0 * radius * radius {
            break;
        }
        poly = clip_half_plane(&poly, p, 0.5 * d2);
        radius = circumradius(&poly);
    }
    Ok(ConvexCell {
        bounded_certificate: radius <= w / 3.0,
        circumradius: radius,
        vertices: poly,
    })
}
