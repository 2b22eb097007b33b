//! Score a predicted mask against ground truth and render the color-coded
//! agreement overlay.
//!
//! ```text
//! cargo run --example score_masks -- <pred.png> <truth.png> [overlay.png]
//! ```
//! Without arguments two overlapping discs are compared.

use lesionseg::imagecore::{load_mask, save_rgb_png};
use lesionseg::metrics::{confusion, metrics_from_counts, render_overlay, Metrics};
use lesionseg::{BinaryMask, ImageRgb};

fn disc(cx: f64, cy: f64, r: f64) -> BinaryMask {
    BinaryMask::from_fn(128, 128, |x, y| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) < r * r)
}

fn main() -> lesionseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (pred, truth) = match args.as_slice() {
        [p, t, ..] => (load_mask(p)?, load_mask(t)?),
        _ => (disc(60.0, 64.0, 40.0), disc(70.0, 64.0, 36.0)),
    };
    let out = args.get(2).cloned().unwrap_or_else(|| "overlay.png".into());

    let counts = confusion(&pred, &truth)?;
    println!("tp {} tn {} fp {} fn {}", counts.tp, counts.tn, counts.fp, counts.fn_);
    let m = metrics_from_counts(&counts);
    for (name, v) in Metrics::NAMES.iter().zip(m.as_array()) {
        println!("{name:<12} {v:.4}");
    }
    let base = ImageRgb::filled(pred.width(), pred.height(), [0; 3]);
    save_rgb_png(&render_overlay(&pred, &truth, &base)?, &out)?;
    println!("wrote {out} (light blue tp, dark blue tn, yellow fn, red fp)");
    Ok(())
}
