//! Generate a small synthetic corpus and evaluate it on a worker pool,
//! writing the CSV report.
//!
//! ```text
//! cargo run --release --example batch_evaluate -- [count] [workers] [dir]
//! ```

use std::path::PathBuf;

use lesionseg::dataset::{ingest_dataset, Layout};
use lesionseg::pipeline::PipelineConfig;
use lesionseg::report::{format_summary, run_evaluate};
use lesionseg::synthetic::{write_corpus, SyntheticConfig};

fn main() -> lesionseg::Result<()> {
    let mut args = std::env::args().skip(1);
    let count = args.next().map_or(6, |s| s.parse().expect("count must be an integer"));
    let workers = args.next().map_or(4, |s| s.parse().expect("workers must be an integer"));
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "synthetic_corpus".into()));

    write_corpus(&dir, count, 7, &SyntheticConfig::default())?;
    let index = ingest_dataset(&dir, Layout::Pairs)?;
    println!("{} entries, {} with ground truth", index.len(), index.evaluable().count());

    let cfg = PipelineConfig { parallelism: workers, ..PipelineConfig::default() };
    let report = dir.join("report.csv");
    let outcome = run_evaluate(&index, &cfg, &report)?;
    for r in outcome.records() {
        println!(
            "{:<12} jaccard {:.4}  t* {:>8.3}  {} ms",
            r.image_id,
            r.metrics.jaccard,
            r.threshold,
            r.runtime.as_millis()
        );
    }
    if let Some(s) = &outcome.summary {
        print!("{}", format_summary("all", s));
    }
    println!("report written to {}", report.display());
    Ok(())
}
