//! Equalize the gray image with CLAHE and threshold it with Otsu inside
//! the field of view; writes the equalized image and the reference mask.
//!
//! ```text
//! cargo run --example clahe_otsu -- [image] [out_dir]
//! ```

use std::path::PathBuf;

use lesionseg::imagecore::{ellipse_mask, load_image, save_gray_png, save_mask_png, to_gray};
use lesionseg::postprocess::{adaptive_equalize, otsu_reference_mask, otsu_threshold, PostprocessConfig};
use lesionseg::synthetic::{generate, SyntheticConfig};

fn main() -> lesionseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let img = match args.next() {
        Some(path) => load_image(path)?,
        None => generate(1, 7, &SyntheticConfig::default()).remove(0).image,
    };
    let out = PathBuf::from(args.next().unwrap_or_else(|| ".".into()));
    std::fs::create_dir_all(&out).map_err(|e| lesionseg::Error::Io { path: out.clone(), source: e })?;

    let cfg = PostprocessConfig::default();
    let roi = ellipse_mask(img.width(), img.height());
    let gray = to_gray(&img);
    let equalized = adaptive_equalize(&gray, &cfg)?;
    println!("otsu on raw gray:  T = {}", otsu_threshold(&gray, &roi)?);
    println!("otsu on equalized: T = {}", otsu_threshold(&equalized, &roi)?);

    let reference = otsu_reference_mask(&img, &roi, &cfg)?;
    println!(
        "reference covers {:.1}% of the field of view",
        100.0 * reference.count() as f64 / roi.count() as f64
    );
    save_gray_png(&equalized, out.join("equalized.png"))?;
    save_mask_png(&reference, out.join("reference.png"))?;
    println!("wrote equalized.png and reference.png to {}", out.display());
    Ok(())
}
