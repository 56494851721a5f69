//! Ego-centric bird's-eye rasteriser.
//!
//! The ego sits at the image centre with its heading pointing up (towards
//! row 0); columns grow to the ego's right. A world point at ego-frame
//! `(forward, left)` maps to continuous pixel coordinates
//! `(col, row) = (S/2 - left/res, S/2 - forward/res)`; pixel `(r, c)` covers
//! `[c, c+1) x [r, r+1)` and is sampled at its centre.

use crate::geometry::{Polygon, Polyline, Vec2};
use crate::perception::{BevRaster, RasterSpec};
use crate::sim::expert::ego_frame;
use crate::sim::scene::Scene;
use crate::vehicle::{EgoState, VEHICLE_LENGTH, VEHICLE_WIDTH};

pub const CH_DRIVABLE: usize = 0;
pub const CH_LANES: usize = 1;
pub const CH_BOUNDARIES: usize = 2;
pub const CH_ADOS: usize = 3;
pub const CH_EGO: usize = 4;
/// Half-width of drawn polylines in metres (a 2-pixel stroke at 0.5 m/px).
pub const STROKE_HALF_WIDTH: f64 = 0.5;

struct Canvas<'a> {
    raster: &'a mut BevRaster,
    ego: EgoState,
    spec: RasterSpec,
}

impl Canvas<'_> {
    fn to_pixel(&self, p: Vec2) -> Vec2 {
        let (fwd, left) = ego_frame(&self.ego, p);
        let half = self.spec.size as f64 / 2.0;
        Vec2::new(half - left / self.spec.resolution, half - fwd / self.spec.resolution)
    }

    /// Even-odd scanline fill over all rings at once, so holes come out empty.
    fn fill(&mut self, channel: usize, rings: &[Vec<Vec2>]) {
        let size = self.spec.size;
        let px: Vec<Vec<Vec2>> = rings
            .iter()
            .map(|r| r.iter().map(|p| self.to_pixel(*p)).collect())
            .collect();
        let (lo, hi) = px
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.y), hi.max(p.y)));
        if hi < 0.0 || lo > size as f64 {
            return;
        }
        let mut xs = Vec::new();
        for row in 0..size {
            let yc = row as f64 + 0.5;
            if yc < lo || yc > hi {
                continue;
            }
            xs.clear();
            for ring in &px {
                let n = ring.len();
                for i in 0..n {
                    let (a, b) = (ring[i], ring[(i + 1) % n]);
                    if (a.y > yc) != (b.y > yc) {
                        xs.push(a.x + (yc - a.y) / (b.y - a.y) * (b.x - a.x));
                    }
                }
            }
            xs.sort_by(f64::total_cmp);
            for pair in xs.chunks_exact(2) {
                let c0 = (pair[0] - 0.5).ceil().max(0.0) as usize;
                let c1 = (pair[1] - 0.5).ceil().min(size as f64);
                if c1 <= 0.0 {
                    continue;
                }
                for col in c0..c1 as usize {
                    self.raster.set(channel, row, col);
                }
            }
        }
    }

    fn stroke(&mut self, channel: usize, line: &Polyline) {
        let size = self.spec.size as f64;
        let hw = STROKE_HALF_WIDTH / self.spec.resolution;
        let pts: Vec<Vec2> = line.points().iter().map(|p| self.to_pixel(*p)).collect();
        for w in pts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (x0, x1) = (a.x.min(b.x) - hw, a.x.max(b.x) + hw);
            let (y0, y1) = (a.y.min(b.y) - hw, a.y.max(b.y) + hw);
            if x1 < 0.0 || y1 < 0.0 || x0 > size || y0 > size {
                continue;
            }
            let ab = b.sub(a);
            let len2 = ab.dot(ab);
            let c_lo = (x0 - 0.5).ceil().max(0.0) as usize;
            let c_hi = ((x1 - 0.5).floor().min(size - 1.0)) as isize;
            let r_lo = (y0 - 0.5).ceil().max(0.0) as usize;
            let r_hi = ((y1 - 0.5).floor().min(size - 1.0)) as isize;
            for row in r_lo as isize..=r_hi {
                for col in c_lo as isize..=c_hi {
                    let p = Vec2::new(col as f64 + 0.5, row as f64 + 0.5);
                    let t = if len2 > 0.0 { (p.sub(a).dot(ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
                    if a.lerp(b, t).dist(p) <= hw {
                        self.raster.set(channel, row as usize, col as usize);
                    }
                }
            }
        }
    }
}

/// Corners of a vehicle rectangle centred at `center` with heading `yaw`.
pub fn footprint(center: Vec2, yaw: f64) -> Vec<Vec2> {
    let f = Vec2::from_angle(yaw).scale(VEHICLE_LENGTH / 2.0);
    let l = Vec2::from_angle(yaw).perp().scale(VEHICLE_WIDTH / 2.0);
    vec![
        center.add(f).add(l),
        center.add(f).sub(l),
        center.sub(f).sub(l),
        center.sub(f).add(l),
    ]
}

/// Rasterises the map, the ados at step `t` and the ego footprint.
pub fn rasterize(scene: &Scene, ego: &EgoState, t: usize, spec: RasterSpec) -> BevRaster {
    let mut raster = BevRaster::empty(spec);
    let mut canvas = Canvas {
        raster: &mut raster,
        ego: *ego,
        spec,
    };
    for poly in &scene.map.drivable {
        let rings: Vec<Vec<Vec2>> = Polygon::rings(poly).map(|r| r.to_vec()).collect();
        canvas.fill(CH_DRIVABLE, &rings);
    }
    for lane in &scene.map.lanes {
        canvas.stroke(CH_LANES, lane);
    }
    for b in &scene.map.boundaries {
        canvas.stroke(CH_BOUNDARIES, b);
    }
    for pose in scene.ado_poses(t) {
        canvas.fill(CH_ADOS, &[footprint(pose.position, pose.yaw)]);
    }
    canvas.fill(CH_EGO, &[footprint(ego.position, ego.yaw())]);
    raster
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::scene::{generate_scene, SceneKind};
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn ego_footprint_is_centred() {
        let s = generate_scene(SceneKind::Curve, 4).unwrap();
        let spec = RasterSpec::default();
        let r = rasterize(&s, &s.ego_init, 0, spec);
        // 4.5 m x 2 m at 0.5 m/px: 9 rows by 4 columns around the centre, the
        // outermost rows falling exactly on pixel centres
        let count = r.channel_count(CH_EGO);
        assert!((32..=40).contains(&count), "{count}");
        for row in 28..36 {
            for col in 30..34 {
                assert!(r.get(CH_EGO, row, col), "({row}, {col})");
            }
        }
    }

    #[test]
    fn no_ados_means_empty_ado_channel() {
        let mut s = generate_scene(SceneKind::Intersection, 9).unwrap();
        s.ados.clear();
        let r = rasterize(&s, &s.ego_init, 0, RasterSpec::default());
        assert_eq!(r.channel_count(CH_ADOS), 0);
        assert!(r.channel_count(CH_DRIVABLE) > 0);
        assert!(r.channel_count(CH_LANES) > 0);
    }

    #[test]
    fn rasterisation_is_pure() {
        let s = generate_scene(SceneKind::Roundabout, 2).unwrap();
        let e = s.expert[10].state;
        let a = rasterize(&s, &e, 10, RasterSpec::default());
        let b = rasterize(&s, &e, 10, RasterSpec::default());
        assert_eq!(a, b);
    }

    #[test]
    fn ego_rotation_rotates_the_image() {
        // A quarter turn of the ego to the left rotates the content a quarter
        // turn clockwise: new[c][S-1-r] = old[r][c].
        let s = generate_scene(SceneKind::Intersection, 11).unwrap();
        let spec = RasterSpec::default();
        let n = spec.size;
        let e0 = s.expert[12].state;
        let e1 = EgoState::new(e0.position, e0.yaw() + FRAC_PI_2, e0.speed, e0.yaw_rate);
        let a = rasterize(&s, &e0, 12, spec);
        let b = rasterize(&s, &e1, 12, spec);
        let near = |img: &BevRaster, ch: usize, r: usize, c: usize| {
            (r.saturating_sub(1)..=(r + 1).min(n - 1))
                .any(|rr| (c.saturating_sub(1)..=(c + 1).min(n - 1)).any(|cc| img.get(ch, rr, cc)))
        };
        for ch in [CH_DRIVABLE, CH_LANES, CH_BOUNDARIES, CH_ADOS] {
            assert!(a.channel_count(ch) > 0 || ch == CH_ADOS);
            for r in 0..n {
                for c in 0..n {
                    if a.get(ch, r, c) {
                        assert!(near(&b, ch, c, n - 1 - r), "channel {ch} pixel ({r}, {c})");
                    }
                    if b.get(ch, c, n - 1 - r) {
                        assert!(near(&a, ch, r, c), "channel {ch} pixel ({r}, {c})");
                    }
                }
            }
        }
    }
}
