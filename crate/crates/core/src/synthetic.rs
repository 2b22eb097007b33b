//! Synthetic dermoscopy-like images with known lesion masks.
//!
//! Each image has a skin-toned background with a gentle illumination
//! gradient and pixel noise, a dark irregular elliptical lesion that is
//! darker toward its center, an optional set of thin dark hair strokes and
//! a vignette shadow in the corners.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::imagecore::{save_mask_png, save_rgb_png, BinaryMask, ImageRgb};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub width: usize,
    pub height: usize,
    /// Probability that an image gets hair strokes.
    pub hair_probability: f64,
    pub vignette: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            width: 512,
            height: 512,
            hair_probability: 0.5,
            vignette: true,
        }
    }
}

/// Geometry and appearance of one lesion, drawn from the generator RNG.
#[derive(Clone, Debug, PartialEq)]
pub struct LesionSpec {
    pub center: (f64, f64),
    pub semi_axes: (f64, f64),
    pub rotation: f64,
    /// Boundary modulation `(amplitude, frequency, phase)` terms.
    pub wobble: [(f64, f64, f64); 2],
    pub skin: [f64; 3],
    pub lesion: [f64; 3],
    pub hair: Vec<[(f64, f64); 3]>,
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub id: String,
    pub image: ImageRgb,
    pub truth: BinaryMask,
    pub has_hair: bool,
}

impl LesionSpec {
    pub fn random(rng: &mut impl Rng, width: usize, height: usize, with_hair: bool) -> Self {
        let (w, h) = (width as f64, height as f64);
        let side = w.min(h);
        let center = (
            w / 2.0 + rng.random_range(-0.06..=0.06) * side,
            h / 2.0 + rng.random_range(-0.06..=0.06) * side,
        );
        let a = rng.random_range(0.22..=0.32) * side;
        let b = a * rng.random_range(0.75..=1.0);
        let skin = [
            rng.random_range(205.0..=235.0),
            rng.random_range(160.0..=190.0),
            rng.random_range(135.0..=165.0),
        ];
        let lesion = [
            rng.random_range(90.0..=130.0),
            rng.random_range(55.0..=85.0),
            rng.random_range(40.0..=65.0),
        ];
        let rotation = rng.random_range(0.0..PI);
        let hair = if with_hair {
            let strokes = rng.random_range(3..=8);
            (0..strokes)
                .map(|_| {
                    // through a point of the lesion, reaching well into the skin
                    let (u, v) = (rng.random_range(-0.5..=0.5) * a, rng.random_range(-0.5..=0.5) * b);
                    let (s, c) = rotation.sin_cos();
                    let mid = (center.0 + c * u - s * v, center.1 + s * u + c * v);
                    let dir = rng.random_range(0.0..TAU);
                    let half = a * rng.random_range(1.2..=2.0);
                    let bend = half * rng.random_range(-0.3..=0.3);
                    let (dx, dy) = (dir.cos(), dir.sin());
                    [
                        (mid.0 - half * dx, mid.1 - half * dy),
                        (mid.0 - bend * dy, mid.1 + bend * dx),
                        (mid.0 + half * dx, mid.1 + half * dy),
                    ]
                })
                .collect()
        } else {
            Vec::new()
        };
        Self {
            center,
            semi_axes: (a, b),
            rotation,
            wobble: [
                (rng.random_range(0.02..=0.06), 3.0, rng.random_range(0.0..TAU)),
                (rng.random_range(0.01..=0.04), 5.0, rng.random_range(0.0..TAU)),
            ],
            skin,
            lesion,
            hair,
        }
    }

    /// Normalized radial coordinate: `< 1` inside the lesion.
    pub fn radial(&self, x: f64, y: f64) -> f64 {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let u = (c * dx + s * dy) / self.semi_axes.0;
        let v = (-s * dx + c * dy) / self.semi_axes.1;
        let angle = v.atan2(u);
        let boundary = 1.0
            + self
                .wobble
                .iter()
                .map(|&(amp, freq, phase)| amp * (freq * angle + phase).sin())
                .sum::<f64>();
        (u * u + v * v).sqrt() / boundary
    }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Renders the image and its ground-truth mask for `spec`.
pub fn render(spec: &LesionSpec, cfg: &SyntheticConfig, rng: &mut impl Rng) -> (ImageRgb, BinaryMask) {
    let (width, height) = (cfg.width, cfg.height);
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    let half_diag = cx.min(cy);
    let tilt = rng.random_range(0.0..TAU);
    let truth = BinaryMask::from_fn(width, height, |x, y| spec.radial(x as f64 + 0.5, y as f64 + 0.5) < 1.0);

    let mut img = ImageRgb::from_fn(width, height, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let shade = 1.0 + 0.04 * (((px - cx) * tilt.cos() + (py - cy) * tilt.sin()) / half_diag);
        let r = spec.radial(px, py);
        // soft edge a few pixels wide around the boundary
        let alpha = ((1.0 - r) / 0.03 + 0.5).clamp(0.0, 1.0);
        let depth = 0.8 + 0.2 * r.min(1.0);
        let vignette = if cfg.vignette {
            let d = ((px - cx).powi(2) + (py - cy).powi(2)).sqrt() / half_diag;
            1.0 - 0.75 * smoothstep(0.95, 1.4, d)
        } else {
            1.0
        };
        let mut rgb = [0u8; 3];
        for (c, out) in rgb.iter_mut().enumerate() {
            let base = spec.skin[c] * (1.0 - alpha) + spec.lesion[c] * depth * alpha;
            let noisy = base * shade * vignette + rng.random_range(-6.0..=6.0);
            *out = noisy.round().clamp(0.0, 255.0) as u8;
        }
        rgb
    });

    for stroke in &spec.hair {
        draw_hair(&mut img, stroke);
    }
    (img, truth)
}

/// One-pixel-wide quadratic Bézier stroke.
fn draw_hair(img: &mut ImageRgb, [p0, p1, p2]: &[(f64, f64); 3]) {
    let steps = 4 * (img.width() + img.height());
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let mt = 1.0 - t;
        let x = mt * mt * p0.0 + 2.0 * mt * t * p1.0 + t * t * p2.0;
        let y = mt * mt * p0.1 + 2.0 * mt * t * p1.1 + t * t * p2.1;
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set_pixel(x as usize, y as usize, [45, 32, 26]);
        }
    }
}

/// Generates `count` samples; the same seed always gives the same corpus.
pub fn generate(count: usize, seed: u64, cfg: &SyntheticConfig) -> Vec<SyntheticSample> {
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(master.random());
            let with_hair = rng.random_bool(cfg.hair_probability.clamp(0.0, 1.0));
            let spec = LesionSpec::random(&mut rng, cfg.width, cfg.height, with_hair);
            let (image, truth) = render(&spec, cfg, &mut rng);
            SyntheticSample {
                id: format!("synth_{i:04}"),
                image,
                truth,
                has_hair: with_hair,
            }
        })
        .collect()
}

/// Writes a corpus in the `pairs` layout: `<id>.png` and `<id>_mask.png`.
pub fn write_corpus(dir: impl AsRef<Path>, count: usize, seed: u64, cfg: &SyntheticConfig) -> Result<Vec<SyntheticSample>> {
    let dir = dir.as_ref();
    if cfg.width == 0 || cfg.height == 0 {
        return Err(Error::Config("synthetic image size must be positive".into()));
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let samples = generate(count, seed, cfg);
    for s in &samples {
        save_rgb_png(&s.image, dir.join(format!("{}.png", s.id)))?;
        save_mask_png(&s.truth, dir.join(format!("{}_mask.png", s.id)))?;
    }
    Ok(samples)
}
