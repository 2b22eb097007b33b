//! Batch evaluation over a dataset index and the CSV report.
//!
//! Report format: a header row, one row per evaluable entry in index order,
//! then `#`-prefixed summary rows (mean and population std per metric,
//! overall and per group when groups are known). Failed entries keep their
//! row with empty value fields and are listed in a trailing comment.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::{DatasetEntry, DatasetIndex};
use crate::error::{check_dims, Error, Result};
use crate::imagecore::{load_image, load_mask, save_mask_png, save_rgb_png};
use crate::metrics::{aggregate, confusion, render_overlay, EvalRecord, Metrics, Summary};
use crate::pipeline::{segment_image, PipelineConfig, Segmentation};
use crate::slic::render_superpixels;

pub const CSV_HEADER: [&str; 9] = [
    "image_id",
    "sensitivity",
    "specificity",
    "accuracy",
    "f_measure",
    "jaccard",
    "threshold",
    "regions_after_merge",
    "runtime_ms",
];

#[derive(Debug)]
pub enum EntryOutcome {
    Ok {
        record: EvalRecord,
        group: Option<String>,
    },
    Failed {
        image_id: String,
        reason: String,
    },
}

#[derive(Debug)]
pub struct EvaluateOutcome {
    /// One outcome per evaluated entry, in index order.
    pub outcomes: Vec<EntryOutcome>,
    /// Entries skipped for lack of ground truth.
    pub skipped: usize,
    pub summary: Option<Summary>,
    pub groups: Vec<(String, Summary)>,
}

impl EvaluateOutcome {
    pub fn records(&self) -> impl Iterator<Item = &EvalRecord> {
        self.outcomes.iter().filter_map(|o| match o {
            EntryOutcome::Ok { record, .. } => Some(record),
            EntryOutcome::Failed { .. } => None,
        })
    }

    pub fn failures(&self) -> usize {
        self.outcomes
            .iter()
            .filter(|o| matches!(o, EntryOutcome::Failed { .. }))
            .count()
    }
}

/// Segments and scores every evaluable entry on a pool of
/// `cfg.parallelism` workers, then writes the CSV report.
pub fn run_evaluate(index: &DatasetIndex, cfg: &PipelineConfig, report_path: impl AsRef<Path>) -> Result<EvaluateOutcome> {
    cfg.validate()?;
    let report_path = report_path.as_ref();
    let entries: Vec<&DatasetEntry> = index.evaluable().collect();
    let skipped = index.orphans();
    if skipped > 0 {
        log::warn!("skipping {skipped} image(s) without ground truth");
    }
    if entries.is_empty() {
        return Err(Error::Degenerate("dataset index has no entries with ground truth".into()));
    }
    let debug_dir = cfg.debug_dumps.then(|| debug_dir_for(report_path));
    if let Some(dir) = &debug_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let outcomes: Vec<EntryOutcome> = pool.install(|| {
        entries
            .par_iter()
            .map(|entry| match evaluate_entry(entry, cfg, debug_dir.as_deref()) {
                Ok(record) => {
                    log::info!("{}: jaccard {:.4}", entry.id, record.metrics.jaccard);
                    EntryOutcome::Ok {
                        record,
                        group: entry.group.clone(),
                    }
                }
                Err(e) => {
                    log::error!("{}: {e}", entry.id);
                    EntryOutcome::Failed {
                        image_id: entry.id.clone(),
                        reason: e.to_string(),
                    }
                }
            })
            .collect()
    });

    let records: Vec<EvalRecord> = outcomes
        .iter()
        .filter_map(|o| match o {
            EntryOutcome::Ok { record, .. } => Some(record.clone()),
            EntryOutcome::Failed { .. } => None,
        })
        .collect();
    let summary = aggregate(&records).ok();
    let mut by_group: std::collections::BTreeMap<&str, Vec<EvalRecord>> = Default::default();
    for o in &outcomes {
        if let EntryOutcome::Ok {
            record,
            group: Some(g),
        } = o
        {
            by_group.entry(g).or_default().push(record.clone());
        }
    }
    let groups = by_group
        .into_iter()
        .filter_map(|(g, rs)| aggregate(&rs).ok().map(|s| (g.to_string(), s)))
        .collect();

    let outcome = EvaluateOutcome {
        outcomes,
        skipped,
        summary,
        groups,
    };
    write_report(&outcome, report_path)?;
    Ok(outcome)
}

fn evaluate_entry(entry: &DatasetEntry, cfg: &PipelineConfig, debug_dir: Option<&Path>) -> Result<EvalRecord> {
    let start = Instant::now();
    let truth_path = entry
        .truth
        .as_ref()
        .ok_or_else(|| Error::Degenerate(format!("{} has no ground truth", entry.id)))?;
    let img = load_image(&entry.image)?;
    let truth = load_mask(truth_path)?;
    check_dims(img.dims(), truth.dims())?;
    let seg = segment_image(&img, cfg)?;
    let counts = confusion(&seg.mask, &truth)?;
    if let Some(dir) = debug_dir {
        dump_debug(dir, &entry.id, &img, &seg, Some(&truth))?;
    }
    Ok(EvalRecord::new(
        entry.id.clone(),
        counts,
        seg.threshold,
        seg.regions_after_merge,
        start.elapsed(),
    ))
}

fn debug_dir_for(report: &Path) -> PathBuf {
    let stem = report
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("report");
    report.with_file_name(format!("{stem}_debug"))
}

/// Writes intermediate products of one segmentation into `dir`:
/// superpixel and merged-region renders, pruned regions, the Otsu
/// reference, the selected region, the final mask, the probe log and,
/// when a truth mask is given, the agreement overlay.
pub fn dump_debug(
    dir: &Path,
    id: &str,
    img: &crate::ImageRgb,
    seg: &Segmentation,
    truth: Option<&crate::BinaryMask>,
) -> Result<()> {
    let file = |suffix: &str| dir.join(format!("{id}_{suffix}"));
    save_rgb_png(&render_superpixels(img, &seg.superpixels)?, file("superpixels.png"))?;
    save_rgb_png(&render_superpixels(img, &seg.merged)?, file("merged.png"))?;
    save_rgb_png(&render_superpixels(img, &seg.post.pruned)?, file("pruned.png"))?;
    save_mask_png(&seg.post.reference, file("reference.png"))?;
    save_mask_png(&seg.post.selected, file("selected.png"))?;
    save_mask_png(&seg.mask, file("mask.png"))?;
    if let Some(truth) = truth {
        save_rgb_png(&render_overlay(&seg.mask, truth, img)?, file("overlay.png"))?;
    }
    let path = file("probes.csv");
    fs::write(&path, probes_csv(&seg.probes)).map_err(|e| Error::io(&path, e))
}

pub fn probes_csv(probes: &[crate::rag::Probe]) -> String {
    let mut out = String::from("probe,threshold,regions\n");
    for (i, p) in probes.iter().enumerate() {
        let _ = writeln!(out, "{i},{:.6},{}", p.threshold, p.regions);
    }
    out
}

fn metric_fields(m: &Metrics) -> [String; 5] {
    m.as_array().map(|v| format!("{v:.6}"))
}

fn summary_lines(label: &str, s: &Summary) -> String {
    let mean: Vec<String> = s.as_array().iter().map(|m| format!("{:.6}", m.mean)).collect();
    let std: Vec<String> = s.as_array().iter().map(|m| format!("{:.6}", m.std)).collect();
    format!(
        "# summary {label} n={}\n# mean,{}\n# std,{}\n",
        s.count,
        mean.join(","),
        std.join(",")
    )
}

/// Human-readable summary table (mean ± std per metric).
pub fn format_summary(label: &str, s: &Summary) -> String {
    let mut out = format!("{label} (n={})\n", s.count);
    for (name, m) in Metrics::NAMES.iter().zip(s.as_array()) {
        let _ = writeln!(out, "  {name:<12} {:.4} ± {:.4}", m.mean, m.std);
    }
    out
}

fn write_report(outcome: &EvaluateOutcome, path: &Path) -> Result<()> {
    let csv_err = |e: csv::Error| Error::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for o in &outcome.outcomes {
        match o {
            EntryOutcome::Ok { record, .. } => {
                let mut row = vec![record.image_id.clone()];
                row.extend(metric_fields(&record.metrics));
                row.push(format!("{:.6}", record.threshold));
                row.push(record.regions_after_merge.to_string());
                row.push(record.runtime.as_millis().to_string());
                w.write_record(&row).map_err(csv_err)?;
            }
            EntryOutcome::Failed { image_id, .. } => {
                let mut row = vec![image_id.clone()];
                row.extend(std::iter::repeat_n(String::new(), CSV_HEADER.len() - 1));
                w.write_record(&row).map_err(csv_err)?;
            }
        }
    }
    let mut file = w
        .into_inner()
        .map_err(|e| Error::io(path, e.into_error()))?;

    let mut tail = String::new();
    if let Some(s) = &outcome.summary {
        tail.push_str(&summary_lines("all", s));
    }
    for (g, s) in &outcome.groups {
        tail.push_str(&summary_lines(g, s));
    }
    for o in &outcome.outcomes {
        if let EntryOutcome::Failed { image_id, reason } = o {
            let _ = writeln!(tail, "# failed {image_id}: {}", reason.replace('\n', " "));
        }
    }
    file.write_all(tail.as_bytes()).map_err(|e| Error::io(path, e))?;
    file.flush().map_err(|e| Error::io(path, e))
}
