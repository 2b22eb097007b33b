//! Pixel confusion counts, the segmentation metrics derived from them, and
//! dataset-level aggregation.

use std::time::Duration;

use crate::error::{check_dims, Result, Error};
use crate::imagecore::{BinaryMask, ImageRgb};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }
}

pub fn confusion(pred: &BinaryMask, truth: &BinaryMask) -> Result<ConfusionCounts> {
    check_dims(truth.dims(), pred.dims())?;
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.as_slice().iter().zip(truth.as_slice()) {
        match (p, t) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub sensitivity: f64,
    pub specificity: f64,
    pub accuracy: f64,
    /// F1 score.
    pub f_measure: f64,
    pub jaccard: f64,
}

impl Metrics {
    pub const NAMES: [&'static str; 5] = ["sensitivity", "specificity", "accuracy", "f_measure", "jaccard"];

    pub fn as_array(&self) -> [f64; 5] {
        [
            self.sensitivity,
            self.specificity,
            self.accuracy,
            self.f_measure,
            self.jaccard,
        ]
    }
}

fn ratio(num: u64, den: u64, if_empty: f64) -> f64 {
    if den == 0 {
        if_empty
    } else {
        num as f64 / den as f64
    }
}

/// Standard definitions. Empty denominators score 1 for sensitivity,
/// specificity and Jaccard (nothing to get wrong), and F is 0 when both
/// precision and sensitivity are 0.
pub fn metrics_from_counts(c: &ConfusionCounts) -> Metrics {
    let sensitivity = ratio(c.tp, c.tp + c.fn_, 1.0);
    let specificity = ratio(c.tn, c.tn + c.fp, 1.0);
    let accuracy = ratio(c.tp + c.tn, c.total(), 1.0);
    let precision = ratio(c.tp, c.tp + c.fp, 1.0);
    let f_measure = if precision + sensitivity == 0.0 {
        0.0
    } else {
        2.0 * precision * sensitivity / (precision + sensitivity)
    };
    let jaccard = ratio(c.tp, c.tp + c.fp + c.fn_, 1.0);
    Metrics {
        sensitivity,
        specificity,
        accuracy,
        f_measure,
        jaccard,
    }
}

/// Evaluation of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub image_id: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub threshold: f64,
    pub regions_after_merge: usize,
    pub runtime: Duration,
}

impl EvalRecord {
    pub fn new(
        image_id: impl Into<String>,
        counts: ConfusionCounts,
        threshold: f64,
        regions_after_merge: usize,
        runtime: Duration,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            metrics: metrics_from_counts(&counts),
            counts,
            threshold,
            regions_after_merge,
            runtime,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub accuracy: MeanStd,
    pub f_measure: MeanStd,
    pub jaccard: MeanStd,
}

impl Summary {
    pub fn as_array(&self) -> [MeanStd; 5] {
        [
            self.sensitivity,
            self.specificity,
            self.accuracy,
            self.f_measure,
            self.jaccard,
        ]
    }
}

/// Per-metric mean and population standard deviation.
pub fn aggregate(records: &[EvalRecord]) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::Degenerate("cannot aggregate an empty record list".into()));
    }
    let n = records.len() as f64;
    let stat = |f: fn(&Metrics) -> f64| {
        let mean = records.iter().map(|r| f(&r.metrics)).sum::<f64>() / n;
        let var = records
            .iter()
            .map(|r| (f(&r.metrics) - mean).powi(2))
            .sum::<f64>()
            / n;
        MeanStd { mean, std: var.sqrt() }
    };
    Ok(Summary {
        count: records.len(),
        sensitivity: stat(|m| m.sensitivity),
        specificity: stat(|m| m.specificity),
        accuracy: stat(|m| m.accuracy),
        f_measure: stat(|m| m.f_measure),
        jaccard: stat(|m| m.jaccard),
    })
}

pub const TP_COLOR: [u8; 3] = [100, 180, 255];
pub const TN_COLOR: [u8; 3] = [0, 0, 120];
pub const FN_COLOR: [u8; 3] = [255, 220, 0];
pub const FP_COLOR: [u8; 3] = [220, 30, 30];

/// Color-codes agreement between prediction and truth. `base` only fixes
/// the expected dimensions.
pub fn render_overlay(pred: &BinaryMask, truth: &BinaryMask, base: &ImageRgb) -> Result<ImageRgb> {
    check_dims(base.dims(), pred.dims())?;
    check_dims(base.dims(), truth.dims())?;
    Ok(ImageRgb::from_fn(base.width(), base.height(), |x, y| {
        match (pred.get(x, y), truth.get(x, y)) {
            (true, true) => TP_COLOR,
            (false, false) => TN_COLOR,
            (false, true) => FN_COLOR,
            (true, false) => FP_COLOR,
        }
    }))
}
