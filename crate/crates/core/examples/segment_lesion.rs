//! Full pipeline on one image: field-of-view mask, SLIC, graph merging,
//! post-processing. Prints metrics when a ground-truth mask is given.
//!
//! ```text
//! cargo run --release --example segment_lesion -- [image [truth]] [--out mask.png]
//! ```

use lesionseg::imagecore::{load_image, load_mask, save_mask_png};
use lesionseg::metrics::{confusion, metrics_from_counts, Metrics};
use lesionseg::pipeline::{segment_image, PipelineConfig};
use lesionseg::synthetic::{generate, SyntheticConfig};

fn main() -> lesionseg::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let out = args
        .iter()
        .position(|a| a == "--out")
        .and_then(|i| args.get(i + 1).cloned())
        .unwrap_or_else(|| "mask.png".into());
    let positional: Vec<&String> = args.iter().take_while(|a| *a != "--out").collect();

    let (img, truth) = match positional.as_slice() {
        [] => {
            let s = generate(1, 7, &SyntheticConfig::default()).remove(0);
            (s.image, Some(s.truth))
        }
        [image] => (load_image(image)?, None),
        [image, truth, ..] => (load_image(image)?, Some(load_mask(truth)?)),
    };

    let start = std::time::Instant::now();
    let seg = segment_image(&img, &PipelineConfig::default())?;
    println!(
        "{} superpixels -> {} regions at t* = {:.3} ({} probes) in {:.1?}",
        seg.superpixels.region_count(),
        seg.regions_after_merge,
        seg.threshold,
        seg.probes.len(),
        start.elapsed()
    );
    println!(
        "after pruning {} regions; lesion covers {} px",
        seg.post.pruned.region_count(),
        seg.mask.count()
    );
    if let Some(truth) = truth {
        let m = metrics_from_counts(&confusion(&seg.mask, &truth)?);
        for (name, v) in Metrics::NAMES.iter().zip(m.as_array()) {
            println!("  {name:<12} {v:.4}");
        }
    }
    save_mask_png(&seg.mask, &out)?;
    println!("wrote {out}");
    Ok(())
}
