//! Synthetic annotated faces whose texture depends on age.
//!
//! Each face is an elliptical patch on a dark background. Inside it a
//! sinusoidal grating gets finer with age and the number of dark "wrinkle"
//! strokes grows with age. Sizes, roll, brightness and pixel noise vary at
//! random. The 68 landmarks follow the FG-NET eye layout (groups 27..=31 and
//! 32..=36), so the faces go through the regular normalization path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{rotate_point, write_landmark_file, LandmarkScheme, LandmarkSet, Point2};
use crate::image::{encode_pgm, to_u8, GrayImage};
use crate::store::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub count: usize,
    /// Faces are square with a side drawn uniformly from this range.
    pub min_size: usize,
    pub max_size: usize,
    pub min_age: f64,
    pub max_age: f64,
    /// Roll is drawn uniformly from `[-max_roll, max_roll]` radians.
    pub max_roll: f64,
    /// Face `i` belongs to person `i % persons`.
    pub persons: usize,
    pub noise_sigma: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            count: 200,
            min_size: 64,
            max_size: 128,
            min_age: 18.0,
            max_age: 93.0,
            max_roll: 0.2,
            persons: 200,
            noise_sigma: 4.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFace {
    pub id: String,
    pub image: GrayImage,
    pub landmarks: LandmarkSet,
    pub age: f64,
    pub person: String,
}

/// Texture parameters for a face of the given relative age `t ∈ [0, 1]`.
/// Returns (grating period as a fraction of the eye distance, wrinkle count).
pub fn texture_for_age(t: f64) -> (f64, usize) {
    let t = t.clamp(0.0, 1.0);
    // 18 px down to 8 px once the ROI is resampled to 120 px wide (= 2 eye distances).
    let period = (18.0 - 10.0 * t) / 60.0;
    let wrinkles = (3.0 + 25.0 * t).round() as usize;
    (period, wrinkles)
}

/// Landmarks in face coordinates: origin at the eye midpoint, unit = eye distance.
fn face_landmarks() -> Vec<(f64, f64)> {
    let mut pts = Vec::with_capacity(68);
    // 27 contour points on the face ellipse.
    for k in 0..27 {
        let a = std::f64::consts::TAU * k as f64 / 27.0;
        pts.push((0.95 * a.cos(), 0.6 + 1.25 * a.sin()));
    }
    for cx in [-0.5, 0.5] {
        for (du, dv) in [(-0.15, 0.0), (0.0, -0.07), (0.15, 0.0), (0.0, 0.07), (0.0, 0.0)] {
            pts.push((cx + du, dv));
        }
    }
    // Nose ridge and mouth.
    for k in 0..12 {
        pts.push((0.0, 0.15 + 0.5 * k as f64 / 11.0));
    }
    for k in 0..19 {
        let a = std::f64::consts::TAU * k as f64 / 19.0;
        pts.push((0.35 * a.cos(), 1.2 + 0.12 * a.sin()));
    }
    debug_assert_eq!(pts.len(), 68);
    pts
}

struct Stroke {
    a: (f64, f64),
    b: (f64, f64),
}

impl Stroke {
    fn distance(&self, p: (f64, f64)) -> f64 {
        let (dx, dy) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dx * dx + dy * dy;
        let t = (((p.0 - self.a.0) * dx + (p.1 - self.a.1) * dy) / len2).clamp(0.0, 1.0);
        (p.0 - self.a.0 - t * dx).hypot(p.1 - self.a.1 - t * dy)
    }
}

/// Render one face of side `size` with the given age and roll.
pub fn synth_face(age: f64, size: usize, roll: f64, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<SynthFace> {
    if size < 16 {
        return Err(Error::invalid(format!("synthetic face size {size} is too small")));
    }
    let t = (age - cfg.min_age) / (cfg.max_age - cfg.min_age).max(f64::MIN_POSITIVE);
    let (period, n_wrinkles) = texture_for_age(t);
    let s = size as f64;
    let l = 0.32 * s;
    let mid = Point2::new(s / 2.0 + rng.random_range(-0.03..0.03) * s, 0.36 * s);
    let orientation: f64 = rng.random_range(-0.25..0.25);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let skin = rng.random_range(110.0..140.0);
    let background = rng.random_range(30.0..70.0);
    let strokes: Vec<Stroke> = (0..n_wrinkles)
        .map(|_| {
            let c = (rng.random_range(-0.8..0.8), rng.random_range(-0.3..1.6));
            let a = rng.random_range(0.0..std::f64::consts::PI);
            let h = rng.random_range(0.15..0.3);
            Stroke {
                a: (c.0 - h * a.cos(), c.1 - h * a.sin()),
                b: (c.0 + h * a.cos(), c.1 + h * a.sin()),
            }
        })
        .collect();
    let noise = Normal::new(0.0, cfg.noise_sigma.max(0.0)).map_err(|e| Error::invalid(e.to_string()))?;
    let (ks, kc) = orientation.sin_cos();
    let wave = std::f64::consts::TAU / period;

    let mut image = GrayImage::filled(size, size, 0)?;
    for y in 0..size {
        for x in 0..size {
            let q = rotate_point(Point2::new(x as f64, y as f64), mid, -roll);
            let (u, v) = ((q.x - mid.x) / l, (q.y - mid.y) / l);
            let inside = (u / 0.95).powi(2) + ((v - 0.6) / 1.25).powi(2) <= 1.0;
            let mut val = if inside {
                let mut val = skin + 35.0 * (wave * (u * kc + v * ks) + phase).sin();
                for st in &strokes {
                    let d = st.distance((u, v));
                    if d < 0.04 {
                        val -= 45.0 * (1.0 - d / 0.04);
                    }
                }
                for cx in [-0.5, 0.5] {
                    if (u - cx).hypot(v) < 0.1 {
                        val = 25.0;
                    }
                }
                val
            } else {
                background
            };
            val += noise.sample(rng);
            image.set(x, y, to_u8(val));
        }
    }

    let points = face_landmarks()
        .into_iter()
        .map(|(u, v)| rotate_point(Point2::new(mid.x + u * l, mid.y + v * l), mid, roll))
        .collect();
    let landmarks = LandmarkSet::new(LandmarkScheme::fgnet68(), points)?;
    Ok(SynthFace {
        id: String::new(),
        image,
        landmarks,
        age,
        person: String::new(),
    })
}

/// Generate `cfg.count` faces. Face `i` uses its own ChaCha8 stream, so the
/// output depends only on `seed` and `cfg`.
pub fn generate(cfg: &SynthConfig, seed: u64) -> Result<Vec<SynthFace>> {
    if cfg.min_size < 16 || cfg.max_size < cfg.min_size {
        return Err(Error::invalid("synthetic size range must satisfy 16 <= min <= max"));
    }
    if !(cfg.min_age >= 0.0 && cfg.max_age > cfg.min_age) {
        return Err(Error::invalid("synthetic age range must satisfy 0 <= min < max"));
    }
    if cfg.persons == 0 {
        return Err(Error::invalid("synthetic data needs at least one person"));
    }
    (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let age = rng.random_range(cfg.min_age..=cfg.max_age);
            let size = rng.random_range(cfg.min_size..=cfg.max_size);
            let roll = if cfg.max_roll > 0.0 {
                rng.random_range(-cfg.max_roll..=cfg.max_roll)
            } else {
                0.0
            };
            let mut face = synth_face(age, size, roll, cfg, &mut rng)?;
            face.id = format!("face_{i:05}");
            face.person = format!("person_{:04}", i % cfg.persons);
            Ok(face)
        })
        .collect()
}

/// Write `images/<id>.pgm`, `landmarks/<id>.pts` and `manifest.csv` under
/// `dir`. Returns the manifest path.
pub fn write_dataset(dir: &Path, faces: &[SynthFace]) -> Result<PathBuf> {
    std::fs::create_dir_all(dir.join("images"))?;
    std::fs::create_dir_all(dir.join("landmarks"))?;
    let mut manifest = String::from("image_path,landmarks_path,age,person_id\n");
    for f in faces {
        let img = format!("images/{}.pgm", f.id);
        let pts = format!("landmarks/{}.pts", f.id);
        write_atomic(&dir.join(&img), &encode_pgm(&f.image))?;
        write_atomic(&dir.join(&pts), write_landmark_file(&f.landmarks).as_bytes())?;
        let _ = writeln!(manifest, "{img},{pts},{:.3},{}", f.age, f.person);
    }
    let path = dir.join("manifest.csv");
    write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}
