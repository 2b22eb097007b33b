//! Turns the merged label image into the final lesion mask.
//!
//! Small regions are absorbed into their neighbors. The lesion region is
//! the one that best overlaps an Otsu segmentation of the contrast-equalized
//! gray image. That region then has its holes filled and is dilated with a
//! Euclidean disk.

use std::collections::BTreeMap;
use std::collections::VecDeque;

use crate::error::{check_dims, Error, Result};
use crate::imagecore::{to_gray, BinaryMask, GrayImage, ImageRgb, LabelMap};

/// Which Otsu class is taken as the lesion in the reference mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Polarity {
    /// Pixels at or below the threshold (lesions darker than skin).
    #[default]
    Dark,
    Bright,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PostprocessConfig {
    /// Regions smaller than this fraction of the image area are absorbed.
    pub min_area_fraction: f64,
    pub dilation_radius: usize,
    /// CLAHE clip limit as a fraction of the tile pixel count.
    pub clahe_clip_limit: f64,
    /// CLAHE tiles per image side.
    pub clahe_tiles: usize,
    pub polarity: Polarity,
}

impl Default for PostprocessConfig {
    fn default() -> Self {
        Self {
            min_area_fraction: 0.02,
            dilation_radius: 8,
            clahe_clip_limit: 0.01,
            clahe_tiles: 8,
            polarity: Polarity::Dark,
        }
    }
}

impl PostprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_area_fraction > 0.0 && self.min_area_fraction < 1.0) {
            return Err(Error::Config(format!(
                "min_area_fraction must lie in (0, 1), got {}",
                self.min_area_fraction
            )));
        }
        if !(self.clahe_clip_limit > 0.0 && self.clahe_clip_limit.is_finite()) {
            return Err(Error::Config(format!(
                "clahe clip limit must be positive, got {}",
                self.clahe_clip_limit
            )));
        }
        if self.clahe_tiles == 0 {
            return Err(Error::Config("clahe tiles must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dissolves every region smaller than `min_area_fraction` of the image
/// area into the neighbor it shares the most 4-adjacent pixel pairs with
/// (ties go to the smaller label). Regions are processed smallest first.
/// A region without any neighbor is kept. Output labels are compacted.
pub fn prune_small_regions(labels: &LabelMap, min_area_fraction: f64) -> LabelMap {
    let (width, height) = labels.dims();
    let min_area = min_area_fraction * (width * height) as f64;
    let bound = labels.label_bound();
    let lab = labels.as_slice();

    let mut size = vec![0u64; bound];
    let mut border: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); bound];
    for (i, &l) in lab.iter().enumerate() {
        if l == LabelMap::VOID {
            continue;
        }
        size[l as usize] += 1;
        let x = i % width;
        let mut touch = |q: usize| {
            let lq = lab[q];
            if lq != LabelMap::VOID && lq != l {
                *border[l as usize].entry(lq).or_default() += 1;
                *border[lq as usize].entry(l).or_default() += 1;
            }
        };
        if x + 1 < width {
            touch(i + 1);
        }
        if i / width + 1 < height {
            touch(i + width);
        }
    }

    let mut parent: Vec<u32> = (0..bound as u32).collect();
    loop {
        let victim = (0..bound)
            .filter(|&l| size[l] > 0 && (size[l] as f64) < min_area && !border[l].is_empty())
            .min_by_key(|&l| (size[l], l));
        let Some(victim) = victim else { break };
        let (&target, _) = border[victim]
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .expect("victim has a neighbor");

        let moved = std::mem::take(&mut border[victim]);
        for (n, c) in moved {
            border[n as usize].remove(&(victim as u32));
            if n != target {
                *border[n as usize].entry(target).or_default() += c;
                *border[target as usize].entry(n).or_default() += c;
            }
        }
        size[target as usize] += size[victim];
        size[victim] = 0;
        parent[victim] = target;
    }

    let root = |mut l: u32| {
        while parent[l as usize] != l {
            l = parent[l as usize];
        }
        l
    };
    let merged = lab
        .iter()
        .map(|&l| if l == LabelMap::VOID { l } else { root(l) })
        .collect();
    LabelMap::new(width, height, merged)
        .expect("dimensions preserved")
        .compact()
}

/// Reflect-101 index into `0..len` for a coordinate past the end.
fn reflect101(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * len - 2;
    let r = i % period;
    if r >= len {
        period - r
    } else {
        r
    }
}

/// Contrast-limited adaptive histogram equalization.
///
/// The image is reflect-padded to a multiple of the tile grid so that all
/// tiles have the same size. Each tile histogram is clipped at
/// `clip_limit × tile pixels` (at least 1), the excess is spread evenly
/// over all bins, and the resulting CDF gives a per-tile mapping. Output
/// pixels blend the mappings of the four nearest tile centers bilinearly.
pub fn adaptive_equalize(img: &GrayImage, cfg: &PostprocessConfig) -> Result<GrayImage> {
    let tiles = cfg.clahe_tiles;
    let (width, height) = img.dims();
    if tiles == 0 || width < tiles || height < tiles {
        return Err(Error::Config(format!(
            "image {width}x{height} is smaller than the {tiles}x{tiles} tile grid"
        )));
    }
    let tile_w = width.div_ceil(tiles);
    let tile_h = height.div_ceil(tiles);
    let tile_px = (tile_w * tile_h) as u64;
    let limit = ((cfg.clahe_clip_limit * tile_px as f64).floor() as u64).max(1);

    let mut luts = vec![[0u8; 256]; tiles * tiles];
    for ty in 0..tiles {
        for tx in 0..tiles {
            let mut hist = [0u64; 256];
            for y in ty * tile_h..(ty + 1) * tile_h {
                let sy = reflect101(y, height);
                for x in tx * tile_w..(tx + 1) * tile_w {
                    hist[img.get(reflect101(x, width), sy) as usize] += 1;
                }
            }
            clip_histogram(&mut hist, limit);
            let lut = &mut luts[ty * tiles + tx];
            let mut cdf = 0u64;
            for (v, &h) in hist.iter().enumerate() {
                cdf += h;
                lut[v] = ((cdf as f64 * 255.0 / tile_px as f64).round()).min(255.0) as u8;
            }
        }
    }

    // Tile centers in pixel-center coordinates.
    let center = |i: usize, size: usize| i as f64 * size as f64 + size as f64 / 2.0 - 0.5;
    let locate = |p: usize, size: usize| -> (usize, usize, f64) {
        let pf = p as f64;
        if pf <= center(0, size) {
            return (0, 0, 0.0);
        }
        if pf >= center(tiles - 1, size) {
            return (tiles - 1, tiles - 1, 0.0);
        }
        let i0 = ((pf - center(0, size)) / size as f64).floor() as usize;
        let i0 = i0.min(tiles - 2);
        (i0, i0 + 1, (pf - center(i0, size)) / size as f64)
    };
    let cols: Vec<(usize, usize, f64)> = (0..width).map(|x| locate(x, tile_w)).collect();

    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let (y0, y1, wy) = locate(y, tile_h);
        for (x, &(x0, x1, wx)) in cols.iter().enumerate() {
            let v = img.get(x, y) as usize;
            let m = |ty: usize, tx: usize| luts[ty * tiles + tx][v] as f64;
            let top = (1.0 - wx) * m(y0, x0) + wx * m(y0, x1);
            let bottom = (1.0 - wx) * m(y1, x0) + wx * m(y1, x1);
            out.push(((1.0 - wy) * top + wy * bottom).round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(width, height, out)
}

fn clip_histogram(hist: &mut [u64; 256], limit: u64) {
    let mut excess = 0u64;
    for h in hist.iter_mut() {
        if *h > limit {
            excess += *h - limit;
            *h = limit;
        }
    }
    let per_bin = excess / 256;
    let mut residual = excess % 256;
    for h in hist.iter_mut() {
        *h += per_bin;
    }
    if residual > 0 {
        let step = (256 / residual as usize).max(1);
        let mut i = 0;
        while i < 256 && residual > 0 {
            hist[i] += 1;
            residual -= 1;
            i += step;
        }
    }
}

/// `a * b` as a 256-bit value split into `(high, low)` halves.
fn mul_wide(a: u128, b: u64) -> (u128, u128) {
    let lo = (a as u64 as u128) * b as u128;
    let hi = (a >> 64) * b as u128;
    let low = lo.wrapping_add(hi << 64);
    let carry = u128::from(low < lo);
    ((hi >> 64) + carry, low)
}

/// Otsu threshold over the in-`roi` pixels of `img`.
///
/// Returns the `T` in `0..=254` maximizing the between-class variance of
/// `{p <= T}` and `{p > T}`; ties resolve to the smallest `T`. Scores are
/// compared exactly in integer arithmetic.
pub fn otsu_threshold(img: &GrayImage, roi: &BinaryMask) -> Result<u8> {
    check_dims(img.dims(), roi.dims())?;
    let mut hist = [0u64; 256];
    for (&v, &inside) in img.as_raw().iter().zip(roi.as_slice()) {
        if inside {
            hist[v as usize] += 1;
        }
    }
    if hist.iter().filter(|&&h| h > 0).count() < 2 {
        return Err(Error::Degenerate(
            "otsu threshold needs at least two distinct intensities in the region".into(),
        ));
    }
    let total_n: u64 = hist.iter().sum();
    let total_s: u64 = hist.iter().enumerate().map(|(v, &h)| v as u64 * h).sum();

    // Between-class variance is proportional to (n1*s0 - n0*s1)^2 / (n0*n1).
    let mut best: Option<(u8, u128, u64)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for t in 0..=254u8 {
        n0 += hist[t as usize];
        s0 += t as u64 * hist[t as usize];
        let (n1, s1) = (total_n - n0, total_s - s0);
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0u128, 1u64)
        } else {
            let diff = (n1 as i128 * s0 as i128 - n0 as i128 * s1 as i128).unsigned_abs();
            (diff * diff, n0 * n1)
        };
        let better = match best {
            None => true,
            Some((_, bnum, bden)) => mul_wide(num, bden) > mul_wide(bnum, den),
        };
        if better {
            best = Some((t, num, den));
        }
    }
    Ok(best.expect("at least one candidate").0)
}

/// Reference segmentation: Otsu on the equalized gray image, restricted to
/// `roi`, keeping the class selected by `cfg.polarity`.
pub fn otsu_reference_mask(img: &ImageRgb, roi: &BinaryMask, cfg: &PostprocessConfig) -> Result<BinaryMask> {
    check_dims(img.dims(), roi.dims())?;
    let equalized = adaptive_equalize(&to_gray(img), cfg)?;
    let t = otsu_threshold(&equalized, roi)?;
    let data = equalized
        .as_raw()
        .iter()
        .zip(roi.as_slice())
        .map(|(&v, &inside)| {
            inside
                && match cfg.polarity {
                    Polarity::Dark => v <= t,
                    Polarity::Bright => v > t,
                }
        })
        .collect();
    BinaryMask::new(img.width(), img.height(), data)
}

/// Intersection over union; 1 when both masks are empty.
pub fn jaccard(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    check_dims(a.dims(), b.dims())?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        inter += u64::from(x && y);
        union += u64::from(x || y);
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Indicator mask of the region with the highest Jaccard index against
/// `reference`; ties go to the smaller label.
pub fn select_lesion_label(labels: &LabelMap, reference: &BinaryMask) -> Result<BinaryMask> {
    check_dims(labels.dims(), reference.dims())?;
    let bound = labels.label_bound();
    let mut inter = vec![0u64; bound];
    let mut size = vec![0u64; bound];
    for (&l, &r) in labels.as_slice().iter().zip(reference.as_slice()) {
        if l != LabelMap::VOID {
            size[l as usize] += 1;
            inter[l as usize] += u64::from(r);
        }
    }
    let ref_count = reference.count() as u64;
    let mut best: Option<(u32, u64, u64)> = None;
    for l in 0..bound {
        if size[l] == 0 {
            continue;
        }
        let union = size[l] + ref_count - inter[l];
        let better = match best {
            None => true,
            Some((_, bi, bu)) => (inter[l] as u128) * (bu as u128) > (bi as u128) * (union as u128),
        };
        if better {
            best = Some((l as u32, inter[l], union));
        }
    }
    let (label, _, _) =
        best.ok_or_else(|| Error::Degenerate("label map has no regions to select from".into()))?;
    Ok(labels.region_mask(label))
}

/// Sets every background pixel that is not 4-connected to the image border.
pub fn fill_holes(mask: &BinaryMask) -> BinaryMask {
    let (width, height) = mask.dims();
    let src = mask.as_slice();
    let mut outside = vec![false; src.len()];
    let mut queue = VecDeque::new();
    let seed = |i: usize, outside: &mut Vec<bool>, queue: &mut VecDeque<usize>| {
        if !src[i] && !outside[i] {
            outside[i] = true;
            queue.push_back(i);
        }
    };
    for x in 0..width {
        seed(x, &mut outside, &mut queue);
        seed((height - 1) * width + x, &mut outside, &mut queue);
    }
    for y in 0..height {
        seed(y * width, &mut outside, &mut queue);
        seed(y * width + width - 1, &mut outside, &mut queue);
    }
    while let Some(i) = queue.pop_front() {
        let (x, y) = (i % width, i / width);
        if x > 0 {
            seed(i - 1, &mut outside, &mut queue);
        }
        if x + 1 < width {
            seed(i + 1, &mut outside, &mut queue);
        }
        if y > 0 {
            seed(i - width, &mut outside, &mut queue);
        }
        if y + 1 < height {
            seed(i + width, &mut outside, &mut queue);
        }
    }
    let data = outside.into_iter().map(|o| !o).collect();
    BinaryMask::new(width, height, data).expect("dimensions preserved")
}

/// Dilation by the Euclidean disk `dx² + dy² <= radius²`.
///
/// The disk is decomposed into horizontal runs, one per row offset, and
/// each run is applied with a prefix-sum window over the source row.
pub fn dilate_disk(mask: &BinaryMask, radius: usize) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (width, height) = mask.dims();
    let r = radius as i64;
    let half_widths: Vec<usize> = (-r..=r)
        .map(|dy| {
            let mut w = 0i64;
            while (w + 1) * (w + 1) + dy * dy <= r * r {
                w += 1;
            }
            w as usize
        })
        .collect();

    // prefix[y][x] = foreground count in row y before column x
    let prefix: Vec<Vec<u32>> = mask
        .as_slice()
        .chunks_exact(width)
        .map(|row| {
            let mut p = Vec::with_capacity(width + 1);
            p.push(0u32);
            let mut acc = 0u32;
            for &b in row {
                acc += u32::from(b);
                p.push(acc);
            }
            p
        })
        .collect();

    let mut out = BinaryMask::empty(width, height);
    for y in 0..height {
        for (k, &hw) in half_widths.iter().enumerate() {
            let sy = y as i64 + k as i64 - r;
            if sy < 0 || sy >= height as i64 {
                continue;
            }
            let row = &prefix[sy as usize];
            if row[width] == 0 {
                continue;
            }
            for x in 0..width {
                let lo = x.saturating_sub(hw);
                let hi = (x + hw + 1).min(width);
                if row[hi] > row[lo] {
                    out.set(x, y, true);
                }
            }
        }
    }
    out
}

/// Intermediate products of [`postprocess_pipeline`].
#[derive(Clone, Debug)]
pub struct PostprocessStages {
    pub pruned: LabelMap,
    pub reference: BinaryMask,
    pub selected: BinaryMask,
    pub mask: BinaryMask,
}

/// Prune, build the Otsu reference, pick the lesion region, fill holes and
/// dilate.
pub fn postprocess_pipeline(
    img: &ImageRgb,
    merged_labels: &LabelMap,
    roi: &BinaryMask,
    cfg: &PostprocessConfig,
) -> Result<BinaryMask> {
    postprocess_stages(img, merged_labels, roi, cfg).map(|s| s.mask)
}

pub fn postprocess_stages(
    img: &ImageRgb,
    merged_labels: &LabelMap,
    roi: &BinaryMask,
    cfg: &PostprocessConfig,
) -> Result<PostprocessStages> {
    cfg.validate()?;
    check_dims(img.dims(), merged_labels.dims())?;
    check_dims(img.dims(), roi.dims())?;
    let pruned = prune_small_regions(merged_labels, cfg.min_area_fraction);
    // A flat region has no Otsu split; an empty reference makes label
    // selection fall through to its tie-break.
    let reference = match otsu_reference_mask(img, roi, cfg) {
        Ok(reference) => reference,
        Err(Error::Degenerate(reason)) => {
            log::warn!("no reference segmentation ({reason}), selecting by label order");
            BinaryMask::empty(img.width(), img.height())
        }
        Err(e) => return Err(e),
    };
    let selected = select_lesion_label(&pruned, &reference)?;
    let mask = dilate_disk(&fill_holes(&selected), cfg.dilation_radius);
    Ok(PostprocessStages {
        pruned,
        reference,
        selected,
        mask,
    })
}
