//! Write a synthetic dermoscopy-like corpus in the `pairs` layout and
//! print what was generated.
//!
//! ```text
//! cargo run --example synthetic_corpus -- [dir] [count] [seed]
//! ```

use lesionseg::synthetic::{write_corpus, SyntheticConfig};

fn main() -> lesionseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "synthetic_corpus".into());
    let count = args.next().map_or(5, |s| s.parse().expect("count must be an integer"));
    let seed = args.next().map_or(7, |s| s.parse().expect("seed must be an integer"));

    let cfg = SyntheticConfig::default();
    for s in write_corpus(&dir, count, seed, &cfg)? {
        let frac = s.truth.count() as f64 / s.truth.len() as f64;
        println!(
            "{}: lesion {:.1}% of the image{}",
            s.id,
            100.0 * frac,
            if s.has_hair { ", hair" } else { "" }
        );
    }
    println!("wrote {count} pairs to {dir}");
    Ok(())
}
