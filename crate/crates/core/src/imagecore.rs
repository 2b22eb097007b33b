//! Raster containers, color conversions, PNG/BMP/JPEG I/O and the
//! inscribed-ellipse field-of-view mask.
//!
//! All rasters are row-major with the origin at the top-left pixel.

use std::path::Path;

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};

use crate::error::{check_dims, Error, Result};

/// 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Config(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height * 3 {
            return Err(Error::Config(format!(
                "rgb buffer holds {} bytes, {width}x{height} needs {}",
                data.len(),
                width * height * 3
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// An image filled with one color.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let data = rgb
            .iter()
            .copied()
            .cycle()
            .take(width * height * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixel_at(y * self.width + x)
    }

    /// Pixel at a flat row-major index.
    #[inline]
    pub fn pixel_at(&self, idx: usize) -> [u8; 3] {
        let i = idx * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }
}

/// 8-bit single-channel image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Config(format!(
                "gray buffer holds {} bytes, {width}x{height} needs {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }
}

/// Per-pixel boolean mask; `true` marks foreground (lesion).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Config(format!(
                "mask buffer holds {} values, {width}x{height} needs {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [bool] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    /// Number of foreground pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a && b)
    }

    pub fn or(&self, other: &BinaryMask) -> Result<BinaryMask> {
        self.zip_with(other, |a, b| a || b)
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&b| !b).collect(),
        }
    }

    /// True when every foreground pixel of `self` is also set in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(&a, &b)| !a || b)
    }

    fn zip_with(&self, other: &BinaryMask, f: impl Fn(bool, bool) -> bool) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }
}

/// Per-pixel region labels.
///
/// Pixels carrying [`LabelMap::VOID`] belong to no region (for example,
/// pixels outside the field-of-view mask). Region labels proper are dense
/// in `0..region_count()` after [`LabelMap::compact`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LabelMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelMap {
    pub const VOID: u32 = u32::MAX;

    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != width * height {
            return Err(Error::Config(format!(
                "label buffer holds {} values, {width}x{height} needs {}",
                labels.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            labels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let mut labels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                labels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    pub fn into_raw(self) -> Vec<u32> {
        self.labels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    /// One past the largest non-void label, or 0 when every pixel is void.
    pub fn label_bound(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l != Self::VOID)
            .max()
            .map_or(0, |&m| m as usize + 1)
    }

    /// Number of distinct non-void labels.
    pub fn region_count(&self) -> usize {
        let mut seen = vec![false; self.label_bound()];
        let mut n = 0;
        for &l in &self.labels {
            if l != Self::VOID && !seen[l as usize] {
                seen[l as usize] = true;
                n += 1;
            }
        }
        n
    }

    /// Pixel count per label, indexed by label, up to [`Self::label_bound`].
    pub fn region_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.label_bound()];
        for &l in &self.labels {
            if l != Self::VOID {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Renumbers labels to `0..n` in order of first appearance (raster scan).
    pub fn compact(&self) -> LabelMap {
        let mut remap = vec![Self::VOID; self.label_bound()];
        let mut next = 0u32;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if l == Self::VOID {
                    return l;
                }
                let slot = &mut remap[l as usize];
                if *slot == Self::VOID {
                    *slot = next;
                    next += 1;
                }
                *slot
            })
            .collect();
        LabelMap {
            width: self.width,
            height: self.height,
            labels,
        }
    }

    /// Indicator mask of one label.
    pub fn region_mask(&self, label: u32) -> BinaryMask {
        BinaryMask {
            width: self.width,
            height: self.height,
            data: self.labels.iter().map(|&l| l == label).collect(),
        }
    }

    /// Marks every pixel outside `roi` as void.
    pub fn restrict_to(&self, roi: &BinaryMask) -> Result<LabelMap> {
        check_dims(self.dims(), roi.dims())?;
        Ok(LabelMap {
            width: self.width,
            height: self.height,
            labels: self
                .labels
                .iter()
                .zip(roi.as_slice())
                .map(|(&l, &inside)| if inside { l } else { Self::VOID })
                .collect(),
        })
    }
}

/// Decodes an 8-bit image of any supported format (PNG, BMP, JPEG).
///
/// Grayscale is replicated across channels and alpha is dropped.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    dynamic_to_rgb(decoded, path)
}

/// Decodes an 8-bit PNG (grayscale, gray+alpha, RGB or RGBA).
pub fn load_png(path: impl AsRef<Path>) -> Result<ImageRgb> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(ImageFormat::Png) {
        return Err(Error::Decode {
            path: path.to_path_buf(),
            reason: format!("not a PNG file (detected format {:?})", reader.format()),
        });
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    dynamic_to_rgb(decoded, path)
}

fn dynamic_to_rgb(img: DynamicImage, path: &Path) -> Result<ImageRgb> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageRgb8(buf) => buf.into_raw(),
        DynamicImage::ImageRgba8(buf) => buf
            .into_raw()
            .chunks_exact(4)
            .flat_map(|p| [p[0], p[1], p[2]])
            .collect(),
        DynamicImage::ImageLuma8(buf) => buf.into_raw().iter().flat_map(|&v| [v, v, v]).collect(),
        DynamicImage::ImageLumaA8(buf) => buf
            .into_raw()
            .chunks_exact(2)
            .flat_map(|p| [p[0], p[0], p[0]])
            .collect(),
        other => {
            return Err(Error::Decode {
                path: path.to_path_buf(),
                reason: format!(
                    "unsupported color type {:?}: only 8-bit gray, gray+alpha, RGB and RGBA are accepted",
                    other.color()
                ),
            })
        }
    };
    ImageRgb::new(w, h, data)
}

/// Reads a ground-truth style mask: any nonzero intensity is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let img = load_image(path)?;
    let data = img.pixels().map(|p| p != [0, 0, 0]).collect();
    BinaryMask::new(img.width(), img.height(), data)
}

/// Writes `mask` as an 8-bit grayscale PNG (foreground 255, background 0).
pub fn save_mask_png(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.as_slice().iter().map(|&b| if b { 255 } else { 0 }).collect();
    save_png(path.as_ref(), &bytes, mask.dims(), ExtendedColorType::L8)
}

pub fn save_gray_png(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    save_png(path.as_ref(), img.as_raw(), img.dims(), ExtendedColorType::L8)
}

pub fn save_rgb_png(img: &ImageRgb, path: impl AsRef<Path>) -> Result<()> {
    save_png(path.as_ref(), img.as_raw(), img.dims(), ExtendedColorType::Rgb8)
}

fn save_png(path: &Path, bytes: &[u8], (w, h): (usize, usize), color: ExtendedColorType) -> Result<()> {
    image::save_buffer_with_format(path, bytes, w as u32, h as u32, color, ImageFormat::Png).map_err(
        |e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Encode {
                path: path.to_path_buf(),
                reason: other.to_string(),
            },
        },
    )
}

/// BT.601 luma, rounded to the nearest level.
pub fn to_gray(img: &ImageRgb) -> GrayImage {
    let data = img
        .pixels()
        .map(|[r, g, b]| {
            let y = 0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64;
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage {
        width: img.width(),
        height: img.height(),
        data,
    }
}

const WHITE_D65: [f64; 3] = [0.95047, 1.0, 1.08883];

const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const XYZ_TO_RGB: [[f64; 3]; 3] = [
    [3.2404542, -1.5371385, -0.4985314],
    [-0.9692660, 1.8760108, 0.0415560],
    [0.0556434, -0.2040259, 1.0572252],
];

// (6/29)^3 and the matching linear-segment constants of the CIELAB f-function.
const LAB_EPSILON: f64 = 216.0 / 24389.0;
const LAB_DELTA: f64 = 6.0 / 29.0;

fn srgb_expand(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn srgb_compress(c: f64) -> f64 {
    if c <= 0.0031308 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    }
}

fn lab_f(t: f64) -> f64 {
    if t > LAB_EPSILON {
        t.cbrt()
    } else {
        t / (3.0 * LAB_DELTA * LAB_DELTA) + 4.0 / 29.0
    }
}

fn lab_f_inv(t: f64) -> f64 {
    if t > LAB_DELTA {
        t * t * t
    } else {
        3.0 * LAB_DELTA * LAB_DELTA * (t - 4.0 / 29.0)
    }
}

/// sRGB (D65) to CIELAB for a single pixel.
pub fn srgb_to_lab([r, g, b]: [u8; 3]) -> [f64; 3] {
    let lin = [
        srgb_expand(r as f64 / 255.0),
        srgb_expand(g as f64 / 255.0),
        srgb_expand(b as f64 / 255.0),
    ];
    lab_from_linear(lin)
}

fn lab_from_linear(lin: [f64; 3]) -> [f64; 3] {
    let xyz = RGB_TO_XYZ.map(|row| row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2]);
    let fx = lab_f(xyz[0] / WHITE_D65[0]);
    let fy = lab_f(xyz[1] / WHITE_D65[1]);
    let fz = lab_f(xyz[2] / WHITE_D65[2]);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// CIELAB back to 8-bit sRGB, clamping out-of-gamut values.
pub fn lab_to_srgb([l, a, b]: [f64; 3]) -> [u8; 3] {
    let fy = (l + 16.0) / 116.0;
    let fx = fy + a / 500.0;
    let fz = fy - b / 200.0;
    let xyz = [
        lab_f_inv(fx) * WHITE_D65[0],
        lab_f_inv(fy) * WHITE_D65[1],
        lab_f_inv(fz) * WHITE_D65[2],
    ];
    XYZ_TO_RGB.map(|row| {
        let lin = row[0] * xyz[0] + row[1] * xyz[1] + row[2] * xyz[2];
        (srgb_compress(lin.clamp(0.0, 1.0)) * 255.0).round().clamp(0.0, 255.0) as u8
    })
}

/// Converts every pixel to CIELAB (L* in [0,100]).
pub fn rgb_to_lab(img: &ImageRgb) -> Vec<[f64; 3]> {
    let expand: Vec<f64> = (0..=255u8).map(|v| srgb_expand(v as f64 / 255.0)).collect();
    img.pixels()
        .map(|[r, g, b]| lab_from_linear([expand[r as usize], expand[g as usize], expand[b as usize]]))
        .collect()
}

/// The largest axis-aligned ellipse inscribed in a `width`×`height` frame,
/// tested at pixel centers.
pub fn ellipse_mask(width: usize, height: usize) -> BinaryMask {
    let (cx, cy) = (width as f64 / 2.0, height as f64 / 2.0);
    BinaryMask::from_fn(width, height, |x, y| {
        let dx = (x as f64 + 0.5 - cx) / cx;
        let dy = (y as f64 + 0.5 - cy) / cy;
        dx * dx + dy * dy <= 1.0
    })
}
