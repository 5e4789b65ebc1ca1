//! Simulated spinning-LiDAR scans of simple labeled scenes.
//!
//! Rays leave a sensor at the origin on a regular beam × azimuth lattice and
//! hit the first of: a ground plane, a cylindrical enclosure (class 0),
//! spheres resting on the ground (class 1) and jittered boxes (class 2). The
//! enclosure guarantees every ray returns, so a scan has exactly
//! `beams × azimuth_steps` points.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::PointCloud;
use crate::math;

pub const CLASSES: usize = 3;
pub const CLASS_NAMES: [&str; CLASSES] = ["background", "sphere", "clutter"];

/// Raw ids used when synthetic scans are written as label files.
pub const LABEL_MAP: &str = "0 ignore unlabeled\n10 0 background\n20 1 sphere\n30 2 clutter\n";

pub fn label_map() -> crate::labels::LabelMap {
    crate::labels::LabelMap::parse(LABEL_MAP).expect("built-in label map")
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SceneConfig {
    pub beams: usize,
    pub azimuth_steps: usize,
    /// Degrees.
    pub fov_up: f64,
    /// Degrees.
    pub fov_down: f64,
    /// Meters above the ground plane.
    pub sensor_height: f64,
    /// Standard deviation of the range noise on every return.
    pub range_noise: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            beams: 64,
            azimuth_steps: 512,
            fov_up: 3.0,
            fov_down: -25.0,
            sensor_height: 1.73,
            range_noise: 0.01,
        }
    }
}

impl SceneConfig {
    pub fn with_azimuth_steps(mut self, steps: usize) -> Self {
        self.azimuth_steps = steps;
        self
    }

    pub fn points(&self) -> usize {
        self.beams * self.azimuth_steps
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Sphere { c: [f64; 3], r: f64 },
    Box { lo: [f64; 3], hi: [f64; 3] },
}

/// One scene, fully determined by `seed`.
pub fn scene(seed: u64, cfg: &SceneConfig) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ground = -cfg.sensor_height;
    let wall = rng.gen_range(22.0..32.0);
    let mut shapes = Vec::new();
    for _ in 0..rng.gen_range(4..8) {
        let r = rng.gen_range(0.8..2.0);
        let (d, a) = (rng.gen_range(4.0..16.0), rng.gen_range(-PI..PI));
        shapes.push(Shape::Sphere {
            c: [d * math::cos(a), d * math::sin(a), ground + r],
            r,
        });
    }
    for _ in 0..rng.gen_range(4..8) {
        let s = [rng.gen_range(0.4..1.2), rng.gen_range(0.4..1.2), rng.gen_range(0.5..2.5)];
        let (d, a) = (rng.gen_range(4.0..16.0), rng.gen_range(-PI..PI));
        let (x, y) = (d * math::cos(a), d * math::sin(a));
        shapes.push(Shape::Box {
            lo: [x - s[0], y - s[1], ground],
            hi: [x + s[0], y + s[1], ground + s[2]],
        });
    }

    let n = cfg.points();
    let mut xyz = Vec::with_capacity(n);
    let mut remission = Vec::with_capacity(n);
    let mut label = Vec::with_capacity(n);
    let (up, down) = (cfg.fov_up.to_radians(), cfg.fov_down.to_radians());
    for b in 0..cfg.beams {
        let pitch = up - (b as f64 + 0.5) / cfg.beams as f64 * (up - down);
        for j in 0..cfg.azimuth_steps {
            let yaw = PI * (1.0 - 2.0 * (j as f64 + 0.5) / cfg.azimuth_steps as f64);
            let dir = [
                math::cos(pitch) * math::cos(yaw),
                math::cos(pitch) * math::sin(yaw),
                math::sin(pitch),
            ];
            let (t, class) = cast(dir, ground, wall, &shapes);
            // Box faces are rough so clutter has a noisy surface.
            let jitter = if class == 2 { rng.gen_range(-0.05..0.05) } else { 0.0 };
            let t = t + jitter + cfg.range_noise * gaussian(&mut rng);
            xyz.push([t * dir[0], t * dir[1], t * dir[2]]);
            let base = [0.25, 0.6, 0.4][class];
            remission.push((base + rng.gen_range(-0.15..0.15_f64)).clamp(0.0, 1.0));
            label.push(class);
        }
    }
    PointCloud::new(xyz, remission)
        .and_then(|c| c.with_labels(label))
        .expect("generated scan is consistent")
}

/// `count` scenes with consecutive seeds.
pub fn scene_set(count: usize, seed: u64, cfg: &SceneConfig) -> Vec<PointCloud> {
    (0..count as u64).map(|i| scene(seed.wrapping_add(i), cfg)).collect()
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    math::sqrt(-2.0 * math::ln(u1)) * math::cos(2.0 * PI * u2)
}

fn cast(d: [f64; 3], ground: f64, wall: f64, shapes: &[Shape]) -> (f64, usize) {
    let horiz = math::sqrt(d[0] * d[0] + d[1] * d[1]);
    let mut best = (wall / horiz, 0);
    if d[2] < 0.0 {
        best.0 = best.0.min(ground / d[2]);
    }
    for s in shapes {
        let hit = match *s {
            Shape::Sphere { c, r } => ray_sphere(d, c, r),
            Shape::Box { lo, hi } => ray_box(d, lo, hi),
        };
        if let Some(t) = hit {
            if t < best.0 {
                best = (t, if matches!(s, Shape::Sphere { .. }) { 1 } else { 2 });
            }
        }
    }
    best
}

fn ray_sphere(d: [f64; 3], c: [f64; 3], r: f64) -> Option<f64> {
    let b = d[0] * c[0] + d[1] * c[1] + d[2] * c[2];
    let cc = c[0] * c[0] + c[1] * c[1] + c[2] * c[2] - r * r;
    let disc = b * b - cc;
    if disc < 0.0 {
        return None;
    }
    let t = b - math::sqrt(disc);
    (t > 0.0).then_some(t)
}

fn ray_box(d: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<f64> {
    let (mut near, mut far) = (0.0_f64, f64::INFINITY);
    for a in 0..3 {
        if d[a] == 0.0 {
            if lo[a] > 0.0 || hi[a] < 0.0 {
                return None;
            }
            continue;
        }
        let (t0, t1) = (lo[a] / d[a], hi[a] / d[a]);
        near = near.max(t0.min(t1));
        far = far.min(t0.max(t1));
    }
    (near <= far && near > 0.0).then_some(near)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{project, ProjectionConfig};

    #[test]
    fn every_ray_returns_one_point_per_pixel() {
        let cfg = SceneConfig::default();
        let c = scene(7, &cfg);
        assert_eq!(c.len(), 64 * 512);
        let img = project(&c, &ProjectionConfig::new(64, 512)).unwrap();
        assert_eq!(img.valid_count(), 64 * 512);
    }

    #[test]
    fn all_classes_present_and_deterministic() {
        let cfg = SceneConfig::default();
        let a = scene(3, &cfg);
        let labels = a.label.as_ref().unwrap();
        for class in 0..CLASSES {
            assert!(labels.iter().any(|&l| l == class), "class {class} missing");
        }
        assert_eq!(a, scene(3, &cfg));
        assert_ne!(a.xyz, scene(4, &cfg).xyz);
    }

    #[test]
    fn label_map_names_match() {
        let map = label_map();
        assert_eq!(map.num_classes(), CLASSES);
        assert_eq!(map.names(), CLASS_NAMES);
        assert_eq!(map.to_raw(2), Some(30));
    }
}
