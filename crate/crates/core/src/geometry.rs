//! Planar geometry helpers: points, polylines with arc-length queries, and
//! polygons with holes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Vec2 {
    fn from(p: [f64; 2]) -> Self {
        Vec2 { x: p[0], y: p[1] }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(p: Vec2) -> Self {
        [p.x, p.y]
    }
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        Vec2::new(a.cos(), a.sin())
    }

    pub fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }

    pub fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }

    pub fn scale(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Vec2) -> f64 {
        self.sub(o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    /// Left-hand normal (counter-clockwise by 90 degrees).
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn lerp(self, o: Vec2, t: f64) -> Vec2 {
        self.add(o.sub(self).scale(t))
    }

    pub fn rotate(self, a: f64) -> Vec2 {
        let (s, c) = a.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

/// Open polyline with cumulative arc lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polyline {
    points: Vec<Vec2>,
    cum: Vec<f64>,
}

impl TryFrom<Vec<Vec2>> for Polyline {
    type Error = Error;

    fn try_from(points: Vec<Vec2>) -> Result<Self> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

/// Closest point of a polyline to a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length of the foot point.
    pub s: f64,
    pub point: Vec2,
    pub distance: f64,
}

impl Polyline {
    /// Consecutive duplicate points are dropped; at least two distinct points
    /// must remain.
    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        let mut pts: Vec<Vec2> = Vec::with_capacity(points.len());
        for p in points {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(Error::invalid("polyline point is not finite"));
            }
            if pts.last().is_none_or(|l| l.dist(p) > 1e-9) {
                pts.push(p);
            }
        }
        if pts.len() < 2 {
            return Err(Error::invalid("polyline needs at least two distinct points"));
        }
        let mut cum = Vec::with_capacity(pts.len());
        cum.push(0.0);
        for w in pts.windows(2) {
            cum.push(cum.last().unwrap() + w[0].dist(w[1]));
        }
        Ok(Polyline { points: pts, cum })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> Vec2 {
        self.points[0]
    }

    pub fn end(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    fn segment_at(&self, s: f64) -> usize {
        match self.cum.partition_point(|c| *c <= s) {
            0 => 0,
            i => (i - 1).min(self.points.len() - 2),
        }
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let s = s.clamp(0.0, self.length());
        let i = self.segment_at(s);
        let len = self.cum[i + 1] - self.cum[i];
        self.points[i].lerp(self.points[i + 1], ((s - self.cum[i]) / len).clamp(0.0, 1.0))
    }

    /// Heading of the segment containing arc length `s`.
    pub fn heading_at(&self, s: f64) -> f64 {
        let i = self.segment_at(s.clamp(0.0, self.length()));
        self.points[i + 1].sub(self.points[i]).angle()
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            point: self.points[0],
            distance: f64::INFINITY,
        };
        for i in 0..self.points.len() - 1 {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = b.sub(a);
            let t = (p.sub(a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
            let foot = a.lerp(b, t);
            let d = foot.dist(p);
            if d < best.distance {
                best = Projection {
                    s: self.cum[i] + t * (self.cum[i + 1] - self.cum[i]),
                    point: foot,
                    distance: d,
                };
            }
        }
        best
    }

    /// Points every `step` metres along the line, always including both ends.
    pub fn resample(&self, step: f64) -> Vec<Vec2> {
        let n = (self.length() / step).ceil().max(1.0) as usize;
        (0..=n).map(|i| self.point_at(self.length() * i as f64 / n as f64)).collect()
    }

    /// Parallel curve at signed lateral `offset` (positive to the left).
    pub fn offset(&self, offset: f64) -> Result<Polyline> {
        let n = self.points.len();
        let pts = (0..n)
            .map(|i| {
                let a = self.points[i.saturating_sub(1)];
                let b = self.points[(i + 1).min(n - 1)];
                let dir = b.sub(a);
                self.points[i].add(dir.scale(1.0 / dir.norm()).perp().scale(offset))
            })
            .collect();
        Polyline::new(pts)
    }
}

/// Corner-cutting smoothing; endpoints are kept.
pub fn chaikin(points: &[Vec2], rounds: usize) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    for _ in 0..rounds {
        if pts.len() < 3 {
            break;
        }
        let mut next = Vec::with_capacity(2 * pts.len());
        next.push(pts[0]);
        for w in pts.windows(2) {
            next.push(w[0].lerp(w[1], 0.25));
            next.push(w[0].lerp(w[1], 0.75));
        }
        next.push(*pts.last().unwrap());
        pts = next;
    }
    pts
}

/// Simple polygon ring; orientation is irrelevant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub outer: Vec<Vec2>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub holes: Vec<Vec<Vec2>>,
}

fn ring_contains(ring: &[Vec2], p: Vec2) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + n - 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

impl Polygon {
    pub fn new(outer: Vec<Vec2>) -> Self {
        Polygon { outer, holes: Vec::new() }
    }

    /// Thick band of half-width `half` around a centerline.
    pub fn band(center: &Polyline, half: f64) -> Result<Self> {
        let left = center.offset(half)?;
        let right = center.offset(-half)?;
        let mut outer = left.points().to_vec();
        outer.extend(right.points().iter().rev());
        Ok(Polygon::new(outer))
    }

    /// Annulus centred at `c`, sampled with `segments` vertices per ring.
    pub fn annulus(c: Vec2, inner: f64, outer: f64, segments: usize) -> Self {
        let ring = |r: f64| -> Vec<Vec2> {
            (0..segments)
                .map(|i| c.add(Vec2::from_angle(std::f64::consts::TAU * i as f64 / segments as f64).scale(r)))
                .collect()
        };
        Polygon {
            outer: ring(outer),
            holes: vec![ring(inner)],
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        ring_contains(&self.outer, p) && !self.holes.iter().any(|h| ring_contains(h, p))
    }

    pub fn rings(&self) -> impl Iterator<Item = &[Vec2]> {
        std::iter::once(self.outer.as_slice()).chain(self.holes.iter().map(|h| h.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l_shape() -> Polyline {
        Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(10.0, 0.0), Vec2::new(10.0, 5.0)]).unwrap()
    }

    #[test]
    fn arc_length_queries() {
        let p = l_shape();
        assert_eq!(p.length(), 15.0);
        assert_eq!(p.point_at(12.0), Vec2::new(10.0, 2.0));
        assert_eq!(p.point_at(99.0), Vec2::new(10.0, 5.0));
        assert_eq!(p.point_at(-1.0), Vec2::new(0.0, 0.0));
        assert!((p.heading_at(11.0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        let pr = p.project(Vec2::new(4.0, -3.0));
        assert_eq!((pr.s, pr.distance), (4.0, 3.0));
    }

    #[test]
    fn degenerate_polylines_are_rejected() {
        assert!(Polyline::new(vec![Vec2::new(1.0, 1.0)]).is_err());
        assert!(Polyline::new(vec![Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)]).is_err());
    }

    #[test]
    fn polygon_with_hole() {
        let a = Polygon::annulus(Vec2::new(0.0, 0.0), 2.0, 5.0, 64);
        assert!(a.contains(Vec2::new(3.5, 0.1)));
        assert!(!a.contains(Vec2::new(0.5, 0.0)));
        assert!(!a.contains(Vec2::new(6.0, 0.0)));
    }

    #[test]
    fn band_contains_centerline() {
        let b = Polygon::band(&l_shape(), 1.0).unwrap();
        assert!(b.contains(Vec2::new(5.0, 0.5)));
        assert!(!b.contains(Vec2::new(5.0, 1.5)));
    }

    proptest! {
        #[test]
        fn projection_matches_dense_sampling(x in -5.0..15.0f64, y in -5.0..10.0f64) {
            let p = l_shape();
            let q = Vec2::new(x, y);
            let pr = p.project(q);
            let dense = p.resample(0.001);
            let best = dense.iter().map(|d| d.dist(q)).fold(f64::INFINITY, f64::min);
            prop_assert!((pr.distance - best).abs() < 0.01);
            prop_assert!(p.point_at(pr.s).dist(pr.point) < 1e-9);
        }
    }
}
