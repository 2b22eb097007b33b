//! Simple Linear Iterative Clustering.
//!
//! Pixels are clustered with a localized k-means over color and position:
//! centers start on a regular grid with spacing `S = sqrt(N / k)`, each
//! assignment sweep only considers centers within `S` pixels on both axes,
//! and the distance is `d_color + (compactness / S) * d_spatial`. After the
//! fixed number of sweeps, [`enforce_connectivity`] splits disconnected
//! labels and absorbs fragments into a neighbor.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::imagecore::{rgb_to_lab, ImageRgb, LabelMap};

/// Feature space used for the color term of the clustering distance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ColorSpace {
    #[default]
    Lab,
    Rgb,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SlicConfig {
    /// Desired number of superpixels.
    pub k: usize,
    pub compactness: f64,
    pub iterations: usize,
    /// Fragments smaller than this fraction of the average superpixel area
    /// are absorbed during connectivity enforcement.
    pub min_region_factor: f64,
    pub color_space: ColorSpace,
}

impl Default for SlicConfig {
    fn default() -> Self {
        Self {
            k: 400,
            compactness: 10.0,
            iterations: 10,
            min_region_factor: 0.25,
            color_space: ColorSpace::Lab,
        }
    }
}

impl SlicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config(format!("slic k must be at least 2, got {}", self.k)));
        }
        if !(self.compactness > 0.0 && self.compactness.is_finite()) {
            return Err(Error::Config(format!(
                "slic compactness must be positive, got {}",
                self.compactness
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("slic iterations must be at least 1".into()));
        }
        if !(self.min_region_factor > 0.0 && self.min_region_factor < 1.0) {
            return Err(Error::Config(format!(
                "slic min_region_factor must lie in (0, 1), got {}",
                self.min_region_factor
            )));
        }
        Ok(())
    }

    pub fn validate_for(&self, width: usize, height: usize) -> Result<()> {
        self.validate()?;
        if self.k > width * height {
            return Err(Error::Config(format!(
                "slic k = {} exceeds the pixel count {}",
                self.k,
                width * height
            )));
        }
        Ok(())
    }
}

/// A cluster center in feature space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterCenter {
    pub color: [f64; 3],
    pub x: f64,
    pub y: f64,
}

/// Regular seeding grid derived from the image size and `k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct SeedGrid {
    pub nx: usize,
    pub ny: usize,
    pub step_x: f64,
    pub step_y: f64,
    /// Nominal superpixel spacing `sqrt(N / k)`.
    pub spacing: f64,
}

impl SeedGrid {
    pub fn new(width: usize, height: usize, k: usize) -> Self {
        let spacing = ((width * height) as f64 / k as f64).sqrt();
        let nx = ((width as f64 / spacing).round() as usize).clamp(1, width);
        let ny = ((height as f64 / spacing).round() as usize).clamp(1, height);
        Self {
            nx,
            ny,
            step_x: width as f64 / nx as f64,
            step_y: height as f64 / ny as f64,
            spacing,
        }
    }

    /// Seed pixel positions, row by row.
    pub fn seeds(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            for i in 0..self.nx {
                let x = ((i as f64 + 0.5) * self.step_x).floor() as usize;
                let y = ((j as f64 + 0.5) * self.step_y).floor() as usize;
                out.push((x, y));
            }
        }
        out
    }

    /// Index of the grid cell containing `(x, y)`.
    pub fn cell_of(&self, x: usize, y: usize) -> u32 {
        let i = ((x as f64 / self.step_x) as usize).min(self.nx - 1);
        let j = ((y as f64 / self.step_y) as usize).min(self.ny - 1);
        (j * self.nx + i) as u32
    }
}

pub(crate) fn color_features(img: &ImageRgb, space: ColorSpace) -> Vec<[f64; 3]> {
    match space {
        ColorSpace::Lab => rgb_to_lab(img),
        ColorSpace::Rgb => img
            .pixels()
            .map(|[r, g, b]| [r as f64, g as f64, b as f64])
            .collect(),
    }
}

#[inline]
fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d0 = a[0] - b[0];
    let d1 = a[1] - b[1];
    let d2 = a[2] - b[2];
    d0 * d0 + d1 * d1 + d2 * d2
}

/// Squared color gradient at `(x, y)` from central differences, with
/// coordinates clamped at the border.
fn gradient(features: &[[f64; 3]], width: usize, height: usize, x: usize, y: usize) -> f64 {
    let at = |x: usize, y: usize| &features[y * width + x];
    let (xl, xr) = (x.saturating_sub(1), (x + 1).min(width - 1));
    let (yu, yd) = (y.saturating_sub(1), (y + 1).min(height - 1));
    sq_dist(at(xr, y), at(xl, y)) + sq_dist(at(x, yd), at(x, yu))
}

/// Moves each seed to the lowest-gradient pixel of its 3×3 neighborhood.
/// Skipped when seeds are closer than three pixels apart, since the
/// neighborhoods would overlap and seeds could collide.
fn perturb_seeds(
    seeds: &mut [(usize, usize)],
    grid: &SeedGrid,
    features: &[[f64; 3]],
    width: usize,
    height: usize,
) {
    if grid.step_x < 3.0 || grid.step_y < 3.0 {
        return;
    }
    for seed in seeds.iter_mut() {
        let (sx, sy) = *seed;
        let mut best = (gradient(features, width, height, sx, sy), sx, sy);
        for ny in sy.saturating_sub(1)..=(sy + 1).min(height - 1) {
            for nx in sx.saturating_sub(1)..=(sx + 1).min(width - 1) {
                let g = gradient(features, width, height, nx, ny);
                if g < best.0 {
                    best = (g, nx, ny);
                }
            }
        }
        *seed = (best.1, best.2);
    }
}

/// Runs SLIC on `img` and returns a compact, 4-connected label map.
pub fn slic_segment(img: &ImageRgb, cfg: &SlicConfig) -> Result<LabelMap> {
    let (width, height) = img.dims();
    cfg.validate_for(width, height)?;
    let features = color_features(img, cfg.color_space);
    let labels = slic_assign(&features, width, height, cfg);
    let raw = LabelMap::new(width, height, labels)?;
    Ok(enforce_connectivity(&raw, cfg.min_region_factor))
}

/// The k-means phase: returns raw per-pixel center indices, before
/// connectivity enforcement.
pub(crate) fn slic_assign(features: &[[f64; 3]], width: usize, height: usize, cfg: &SlicConfig) -> Vec<u32> {
    let grid = SeedGrid::new(width, height, cfg.k);
    let spacing = grid.spacing;
    let spatial_weight = cfg.compactness / spacing;

    let mut seeds = grid.seeds();
    perturb_seeds(&mut seeds, &grid, features, width, height);
    let mut centers: Vec<ClusterCenter> = seeds
        .iter()
        .map(|&(x, y)| ClusterCenter {
            color: features[y * width + x],
            x: x as f64,
            y: y as f64,
        })
        .collect();

    let mut labels: Vec<u32> = (0..width * height)
        .map(|i| grid.cell_of(i % width, i / width))
        .collect();

    for _ in 0..cfg.iterations {
        // Assignment: every row reads the same frozen set of centers.
        let by_x = {
            let mut idx: Vec<u32> = (0..centers.len() as u32).collect();
            idx.sort_by(|&a, &b| {
                centers[a as usize]
                    .x
                    .total_cmp(&centers[b as usize].x)
                    .then(a.cmp(&b))
            });
            idx
        };
        labels
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| {
                let yf = y as f64;
                let candidates: Vec<u32> = by_x
                    .iter()
                    .copied()
                    .filter(|&c| (centers[c as usize].y - yf).abs() <= spacing)
                    .collect();
                let xs: Vec<f64> = candidates.iter().map(|&c| centers[c as usize].x).collect();
                for (x, label) in row.iter_mut().enumerate() {
                    let xf = x as f64;
                    let lo = xs.partition_point(|&cx| cx < xf - spacing);
                    let feat = &features[y * width + x];
                    let mut best: Option<(f64, u32)> = None;
                    for (&c, &cx) in candidates[lo..].iter().zip(&xs[lo..]) {
                        if cx > xf + spacing {
                            break;
                        }
                        let center = &centers[c as usize];
                        let dx = cx - xf;
                        let dy = center.y - yf;
                        let d = sq_dist(feat, &center.color).sqrt()
                            + spatial_weight * (dx * dx + dy * dy).sqrt();
                        let better = match best {
                            None => true,
                            Some((bd, bc)) => d < bd || (d == bd && c < bc),
                        };
                        if better {
                            best = Some((d, c));
                        }
                    }
                    if let Some((_, c)) = best {
                        *label = c;
                    }
                }
            });

        // Update: centers move to the mean of their members.
        let mut sums = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let s = &mut sums[l as usize];
            let f = &features[i];
            s[0] += f[0];
            s[1] += f[1];
            s[2] += f[2];
            s[3] += (i % width) as f64;
            s[4] += (i / width) as f64;
            s[5] += 1.0;
        }
        for (center, s) in centers.iter_mut().zip(&sums) {
            if s[5] > 0.0 {
                center.color = [s[0] / s[5], s[1] / s[5], s[2] / s[5]];
                center.x = s[3] / s[5];
                center.y = s[4] / s[5];
            }
        }
    }
    labels
}

/// Relabels so that every label is a single 4-connected component.
///
/// Components are visited in raster order. A component smaller than
/// `min_region_factor` times the average region area (pixels over distinct
/// input labels) takes the label of the most recently created component it
/// touches; otherwise it receives a fresh label. Output labels are dense.
/// Void pixels are left untouched and never absorb anything.
pub fn enforce_connectivity(labels: &LabelMap, min_region_factor: f64) -> LabelMap {
    const UNSET: u32 = u32::MAX - 1;
    let (width, height) = labels.dims();
    let src = labels.as_slice();
    let regions = labels.region_count().max(1);
    let live = src.iter().filter(|&&l| l != LabelMap::VOID).count();
    let min_size = min_region_factor * live as f64 / regions as f64;

    let mut out: Vec<u32> = src
        .iter()
        .map(|&l| if l == LabelMap::VOID { LabelMap::VOID } else { UNSET })
        .collect();
    let mut next = 0u32;
    let mut component = Vec::new();
    let mut stack = Vec::new();

    for start in 0..src.len() {
        if out[start] != UNSET {
            continue;
        }
        let original = src[start];
        component.clear();
        stack.push(start);
        // Mark members with a sentinel so they are not revisited.
        out[start] = UNSET - 1;
        let mut adjacent: Option<u32> = None;
        while let Some(p) = stack.pop() {
            component.push(p);
            let (x, y) = (p % width, p / width);
            let mut visit = |q: usize| {
                let lq = out[q];
                if lq == UNSET && src[q] == original {
                    out[q] = UNSET - 1;
                    stack.push(q);
                } else if lq < UNSET - 1 {
                    adjacent = Some(adjacent.map_or(lq, |a| a.max(lq)));
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < width {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - width);
            }
            if y + 1 < height {
                visit(p + width);
            }
        }
        let target = match adjacent {
            Some(a) if (component.len() as f64) < min_size => a,
            _ => {
                next += 1;
                next - 1
            }
        };
        for &p in &component {
            out[p] = target;
        }
    }
    LabelMap::new(width, height, out).expect("dimensions preserved")
}

/// Fills each superpixel with its mean color and draws its boundary in yellow.
pub fn render_superpixels(img: &ImageRgb, labels: &LabelMap) -> Result<ImageRgb> {
    crate::error::check_dims(img.dims(), labels.dims())?;
    let (width, height) = img.dims();
    let bound = labels.label_bound();
    let mut sums = vec![[0u64; 4]; bound];
    for (i, &l) in labels.as_slice().iter().enumerate() {
        if l != LabelMap::VOID {
            let p = img.pixel_at(i);
            let s = &mut sums[l as usize];
            s[0] += p[0] as u64;
            s[1] += p[1] as u64;
            s[2] += p[2] as u64;
            s[3] += 1;
        }
    }
    let mean = |l: u32| -> [u8; 3] {
        let s = sums[l as usize];
        let n = s[3].max(1);
        [(s[0] / n) as u8, (s[1] / n) as u8, (s[2] / n) as u8]
    };
    Ok(ImageRgb::from_fn(width, height, |x, y| {
        let l = labels.get(x, y);
        if l == LabelMap::VOID {
            return [0, 0, 0];
        }
        let edge = (x + 1 < width && labels.get(x + 1, y) != l)
            || (y + 1 < height && labels.get(x, y + 1) != l);
        if edge {
            [255, 255, 0]
        } else {
            mean(l)
        }
    }))
}
