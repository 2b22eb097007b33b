//! Oversegment an image with SLIC and render the superpixels.
//!
//! ```text
//! cargo run --example slic_superpixels -- [image] [k] [out.png]
//! ```
//! Without an image a synthetic lesion is used.

use lesionseg::imagecore::{load_image, save_rgb_png};
use lesionseg::slic::{render_superpixels, slic_segment, SlicConfig};
use lesionseg::synthetic::{generate, SyntheticConfig};

fn main() -> lesionseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let img = match args.next() {
        Some(path) => load_image(path)?,
        None => generate(1, 7, &SyntheticConfig::default()).remove(0).image,
    };
    let k = args.next().map_or(400, |s| s.parse().expect("k must be an integer"));
    let out = args.next().unwrap_or_else(|| "superpixels.png".into());

    let cfg = SlicConfig { k, ..SlicConfig::default() };
    let start = std::time::Instant::now();
    let labels = slic_segment(&img, &cfg)?;
    let sizes = labels.region_sizes();
    println!(
        "{}x{}: {} superpixels (asked for {k}) in {:.1?}, sizes {}..{}",
        img.width(),
        img.height(),
        sizes.len(),
        start.elapsed(),
        sizes.iter().min().unwrap(),
        sizes.iter().max().unwrap()
    );
    save_rgb_png(&render_superpixels(&img, &labels)?, &out)?;
    println!("wrote {out}");
    Ok(())
}
