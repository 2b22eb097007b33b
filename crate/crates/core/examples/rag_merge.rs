//! Build the region adjacency graph over SLIC superpixels and search for
//! the merge threshold that leaves two regions.
//!
//! ```text
//! cargo run --example rag_merge -- [image]
//! ```

use lesionseg::imagecore::{ellipse_mask, load_image};
use lesionseg::rag::{build_rag, find_threshold, MergeConfig};
use lesionseg::slic::{slic_segment, SlicConfig};
use lesionseg::synthetic::{generate, SyntheticConfig};

fn main() -> lesionseg::Result<()> {
    let img = match std::env::args().nth(1) {
        Some(path) => load_image(path)?,
        None => generate(1, 7, &SyntheticConfig::default()).remove(0).image,
    };
    let roi = ellipse_mask(img.width(), img.height());
    let labels = slic_segment(&img, &SlicConfig::default())?;
    let graph = build_rag(&img, &labels, &roi)?;
    println!("graph: {} nodes, {} edges", graph.node_count(), graph.edges().len());

    // a few fixed thresholds first
    for t in [10.0, 40.0, 80.0, 160.0, 320.0] {
        println!("t = {t:>5}: {} regions", graph.merge_at_threshold(t).node_count());
    }

    let search = find_threshold(&graph, &MergeConfig::default())?;
    for (i, p) in search.probes.iter().enumerate() {
        println!("probe {i}: t = {:.4} -> {} regions", p.threshold, p.regions);
    }
    println!(
        "chosen t* = {:.4}, {} regions{}",
        search.threshold,
        search.merged.node_count(),
        if search.fell_back { " (fallback)" } else { "" }
    );
    for node in search.merged.nodes() {
        let [r, g, b] = node.mean_color();
        println!("  region {}: {} px, mean ({r:.1}, {g:.1}, {b:.1})", node.id, node.pixel_count);
    }
    Ok(())
}
