//! Procedural two-domain street world.
//!
//! A pinhole camera looks over a flat road. Fronto-parallel boxes
//! (buildings on the sides, obstacles on the road) stand on the ground and
//! are z-buffered, so labels and depth agree by construction: sky sits at
//! `d_max`, road depth grows toward the horizon, nearer boxes occlude
//! farther ones. The target domain draws fresh geometry from the same
//! distribution and renders it with a hue/brightness/texture shift.

use ndarray::{Array2, Array3};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{preprocess_channel, ClassSet, Domain, Sample};

pub const SKY: u8 = 0;
pub const ROAD: u8 = 1;
pub const BUILDING: u8 = 2;
pub const OBSTACLE: u8 = 3;

/// Far plane of the toy world in meters; sky depth.
pub const TOY_D_MAX: f32 = 100.0;

const CAMERA_HEIGHT: f64 = 1.5;
const BASE_NOISE: f64 = 0.03;

/// Source→target appearance gap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyShift {
    /// Hue rotation in degrees.
    pub hue_delta: f64,
    /// Extra per-pixel Gaussian noise (std, on a [0, 1] intensity scale).
    pub texture_noise: f64,
    /// Additive brightness offset on a [0, 1] intensity scale.
    pub brightness_delta: f64,
}

impl ToyShift {
    pub const NONE: ToyShift = ToyShift {
        hue_delta: 0.0,
        texture_noise: 0.0,
        brightness_delta: 0.0,
    };

    pub fn is_null(&self) -> bool {
        *self == ToyShift::NONE
    }
}

impl Default for ToyShift {
    fn default() -> Self {
        ToyShift {
            hue_delta: 50.0,
            texture_noise: 0.04,
            brightness_delta: -0.08,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyWorldConfig {
    pub seed: u64,
    /// (height, width)
    pub image_size: (usize, usize),
    pub n_scenes: usize,
    #[serde(default)]
    pub shift: ToyShift,
}

impl Default for ToyWorldConfig {
    fn default() -> Self {
        ToyWorldConfig {
            seed: 0,
            image_size: (32, 64),
            n_scenes: 100,
            shift: ToyShift::default(),
        }
    }
}

impl ToyWorldConfig {
    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h < 8 || w < 8 {
            return Err(Error::Config(format!("toy image_size must be >= 8x8, got {h}x{w}")));
        }
        let s = &self.shift;
        if !(s.hue_delta.is_finite() && s.brightness_delta.is_finite())
            || !(s.texture_noise >= 0.0 && s.texture_noise.is_finite())
        {
            return Err(Error::Config(format!("invalid toy shift {s:?}")));
        }
        Ok(())
    }
}

/// Generates `config.n_scenes` scenes for `domain`. Source and target use
/// disjoint random streams, so they share the geometry distribution but not
/// the instances. Target samples keep their labels for evaluation only.
pub fn generate_toy(config: &ToyWorldConfig, domain: Domain) -> Result<Vec<Sample>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(match domain {
        Domain::Source => 0,
        Domain::Target => 1,
    });
    let shift = match domain {
        Domain::Source => ToyShift::NONE,
        Domain::Target => config.shift,
    };
    let tag = match domain {
        Domain::Source => "src",
        Domain::Target => "tgt",
    };
    (0..config.n_scenes)
        .map(|i| {
            let scene = Scene::random(config.image_size, &mut rng);
            let (image, depth, labels) = scene.render(&shift, &mut rng);
            Sample::new(format!("{tag}_{i:05}"), domain, image, Some(depth), Some(labels))
        })
        .collect()
}

pub fn toy_classes() -> ClassSet {
    ClassSet::toy()
}

#[derive(Debug, Clone)]
struct Box3 {
    class: u8,
    /// lateral center, width, height, distance (meters)
    x: f64,
    width: f64,
    height: f64,
    z: f64,
    tint: [f64; 3],
}

#[derive(Debug, Clone)]
struct Scene {
    h: usize,
    w: usize,
    horizon: f64,
    focal: f64,
    cx: f64,
    lane_offset: f64,
    light: f64,
    boxes: Vec<Box3>,
}

impl Scene {
    fn random((h, w): (usize, usize), rng: &mut ChaCha8Rng) -> Scene {
        let hf = h as f64;
        let wf = w as f64;
        let mut boxes = Vec::new();
        let tint = |rng: &mut ChaCha8Rng| {
            [
                rng.random_range(-0.06..0.06),
                rng.random_range(-0.06..0.06),
                rng.random_range(-0.06..0.06),
            ]
        };
        for _ in 0..rng.random_range(3..8) {
            let side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
            boxes.push(Box3 {
                class: BUILDING,
                x: side * rng.random_range(6.0..24.0),
                width: rng.random_range(6.0..16.0),
                height: rng.random_range(6.0..25.0),
                z: rng.random_range(10.0..70.0),
                tint: tint(rng),
            });
        }
        for _ in 0..rng.random_range(1..4) {
            boxes.push(Box3 {
                class: OBSTACLE,
                x: rng.random_range(-3.0..3.0),
                width: rng.random_range(1.8..2.6),
                height: rng.random_range(1.4..2.4),
                z: rng.random_range(4.0..35.0),
                tint: tint(rng),
            });
        }
        Scene {
            h,
            w,
            horizon: rng.random_range(0.35..0.5) * hf,
            focal: 0.8 * wf,
            cx: wf / 2.0 + rng.random_range(-0.1..0.1) * wf,
            lane_offset: rng.random_range(-1.0..1.0),
            light: rng.random_range(-0.05..0.05),
            boxes,
        }
    }

    /// Depth of the ground plane at pixel row `y` (center), or `None` at and
    /// above the horizon.
    fn ground_depth(&self, y: usize) -> Option<f64> {
        let dy = y as f64 + 0.5 - self.horizon;
        (dy > 0.0).then(|| (self.focal * CAMERA_HEIGHT / dy).min(TOY_D_MAX as f64))
    }

    fn render(&self, shift: &ToyShift, rng: &mut ChaCha8Rng) -> (Array3<f32>, Array2<f32>, Array2<u8>) {
        let (h, w) = (self.h, self.w);
        let d_max = TOY_D_MAX as f64;
        let mut depth = Array2::<f64>::from_elem((h, w), d_max);
        let mut labels = Array2::<u8>::from_elem((h, w), SKY);
        let mut owner = Array2::<usize>::from_elem((h, w), usize::MAX);

        for y in 0..h {
            if let Some(z) = self.ground_depth(y) {
                for x in 0..w {
                    depth[[y, x]] = z;
                    labels[[y, x]] = ROAD;
                }
            }
        }
        for (k, b) in self.boxes.iter().enumerate() {
            let u0 = self.cx + self.focal * (b.x - b.width / 2.0) / b.z;
            let u1 = self.cx + self.focal * (b.x + b.width / 2.0) / b.z;
            let top = self.horizon - self.focal * (b.height - CAMERA_HEIGHT) / b.z;
            let bottom = self.horizon + self.focal * CAMERA_HEIGHT / b.z;
            for y in 0..h {
                let yc = y as f64 + 0.5;
                if yc < top || yc >= bottom {
                    continue;
                }
                for x in 0..w {
                    let xc = x as f64 + 0.5;
                    if xc >= u0 && xc < u1 && b.z < depth[[y, x]] {
                        depth[[y, x]] = b.z;
                        labels[[y, x]] = b.class;
                        owner[[y, x]] = k;
                    }
                }
            }
        }

        let noise = Normal::new(0.0, BASE_NOISE + shift.texture_noise).expect("finite std");
        let rot = hue_matrix(shift.hue_delta);
        let mut image = Array3::<f32>::zeros((h, w, 3));
        for y in 0..h {
            for x in 0..w {
                let z = depth[[y, x]];
                let mut c = match labels[[y, x]] {
                    SKY => {
                        let t = (y as f64 / self.horizon.max(1.0)).min(1.0);
                        mix([0.30, 0.52, 0.88], [0.62, 0.78, 0.95], t)
                    }
                    ROAD => {
                        let lateral = (x as f64 + 0.5 - self.cx) * z / self.focal - self.lane_offset;
                        // dashed center line
                        if lateral.abs() < 0.15 && (z / 3.0).floor() as i64 % 2 == 0 {
                            [0.85, 0.85, 0.7]
                        } else {
                            [0.42, 0.30, 0.44]
                        }
                    }
                    BUILDING => {
                        let b = &self.boxes[owner[[y, x]]];
                        let lateral = (x as f64 + 0.5 - self.cx) * z / self.focal - b.x;
                        let height = CAMERA_HEIGHT - (y as f64 + 0.5 - self.horizon) * z / self.focal;
                        let window = (lateral.rem_euclid(3.0) < 1.4) && (height.rem_euclid(3.0) > 1.5);
                        let base = [0.72 + b.tint[0], 0.44 + b.tint[1], 0.28 + b.tint[2]];
                        if window {
                            scale(base, 0.6)
                        } else {
                            base
                        }
                    }
                    _ => {
                        let b = &self.boxes[owner[[y, x]]];
                        let height = CAMERA_HEIGHT - (y as f64 + 0.5 - self.horizon) * z / self.focal;
                        let base = [0.20 + b.tint[0], 0.62 + b.tint[1], 0.30 + b.tint[2]];
                        if height < 0.4 {
                            scale(base, 0.4)
                        } else {
                            base
                        }
                    }
                };
                // aerial perspective
                c = mix(c, [0.75, 0.75, 0.80], 0.5 * (1.0 - (-z / 60.0).exp()));
                let c = apply(&rot, c);
                for (ch, v) in c.iter().enumerate() {
                    let v = v + self.light + shift.brightness_delta + noise.sample(rng);
                    let q = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    image[[y, x, ch]] = preprocess_channel(q);
                }
            }
        }
        // centimeter quantization, so a 16-bit PNG round trip is exact
        let depth = depth.mapv(|d| ((d * 100.0).round() / 100.0) as f32);
        (image, depth, labels)
    }
}

fn mix(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|i| a[i] + (b[i] - a[i]) * t)
}

fn scale(a: [f64; 3], s: f64) -> [f64; 3] {
    a.map(|v| v * s)
}

fn apply(m: &[[f64; 3]; 3], c: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|i| m[i][0] * c[0] + m[i][1] * c[1] + m[i][2] * c[2])
}

/// Hue rotation about the gray axis (the SVG `feColorMatrix` hueRotate
/// matrix); grays are fixed points.
fn hue_matrix(degrees: f64) -> [[f64; 3]; 3] {
    let (s, c) = degrees.to_radians().sin_cos();
    [
        [0.213 + 0.787 * c - 0.213 * s, 0.715 - 0.715 * c - 0.715 * s, 0.072 - 0.072 * c + 0.928 * s],
        [0.213 - 0.213 * c + 0.143 * s, 0.715 + 0.285 * c + 0.140 * s, 0.072 - 0.072 * c - 0.283 * s],
        [0.213 - 0.213 * c - 0.787 * s, 0.715 - 0.715 * c + 0.715 * s, 0.072 + 0.928 * c + 0.072 * s],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(n: usize) -> ToyWorldConfig {
        ToyWorldConfig {
            seed: 11,
            image_size: (32, 64),
            n_scenes: n,
            shift: ToyShift::default(),
        }
    }

    #[test]
    fn identical_seed_identical_scenes() {
        let a = generate_toy(&cfg(5), Domain::Source).unwrap();
        let b = generate_toy(&cfg(5), Domain::Source).unwrap();
        assert_eq!(a, b);
        let t = generate_toy(&cfg(5), Domain::Target).unwrap();
        assert_ne!(a[0].labels, t[0].labels, "target must not reuse source instances");
    }

    #[test]
    fn sky_at_far_plane_and_all_classes_present() {
        let scenes = generate_toy(&cfg(20), Domain::Source).unwrap();
        let mut seen = [false; 4];
        for s in &scenes {
            s.validate(&ClassSet::toy()).unwrap();
            let (l, d) = (s.labels.as_ref().unwrap(), s.depth.as_ref().unwrap());
            for (&c, &z) in l.iter().zip(d.iter()) {
                seen[c as usize] = true;
                if c == SKY {
                    assert_eq!(z, TOY_D_MAX);
                } else {
                    assert!(z < TOY_D_MAX || c == ROAD);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn road_depth_monotone_in_row() {
        for s in generate_toy(&cfg(10), Domain::Source).unwrap() {
            let (l, d) = (s.labels.unwrap(), s.depth.unwrap());
            for x in 0..l.ncols() {
                let road: Vec<f32> = (0..l.nrows())
                    .filter(|&y| l[[y, x]] == ROAD)
                    .map(|y| d[[y, x]])
                    .collect();
                assert!(road.windows(2).all(|p| p[0] >= p[1]), "column {x}: {road:?}");
            }
        }
    }

    #[test]
    fn zero_hue_rotation_is_identity() {
        let m = hue_matrix(0.0);
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert!((v - if i == j { 1.0 } else { 0.0 }).abs() < 1e-3);
            }
        }
    }
}
