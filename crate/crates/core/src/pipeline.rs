//! End-to-end segmentation of one image.

use crate::error::{Error, Result};
use crate::imagecore::{ellipse_mask, BinaryMask, ImageRgb, LabelMap};
use crate::postprocess::{postprocess_stages, Polarity, PostprocessConfig, PostprocessStages};
use crate::rag::{build_rag, find_threshold, MergeConfig, Probe};
use crate::slic::{enforce_connectivity, slic_segment, ColorSpace, SlicConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub slic: SlicConfig,
    pub merge: MergeConfig,
    pub post: PostprocessConfig,
    /// Write intermediate images next to the outputs.
    pub debug_dumps: bool,
    /// Worker threads for batch evaluation.
    pub parallelism: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            slic: SlicConfig::default(),
            merge: MergeConfig::default(),
            post: PostprocessConfig::default(),
            debug_dumps: false,
            parallelism: 1,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.slic.validate()?;
        self.merge.validate()?;
        self.post.validate()?;
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be at least 1".into()));
        }
        Ok(())
    }
}

impl PipelineConfig {
    /// Applies one `key = value` setting. Keys follow the command-line flag
    /// names with dashes or underscores.
    pub fn apply_setting(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
        }
        let key_norm = key.trim().replace('-', "_");
        let value = value.trim();
        match key_norm.as_str() {
            "k" => self.slic.k = parse(key, value)?,
            "compactness" => self.slic.compactness = parse(key, value)?,
            "iterations" => self.slic.iterations = parse(key, value)?,
            "min_region_factor" => self.slic.min_region_factor = parse(key, value)?,
            "color_space" => {
                self.slic.color_space = match value.to_ascii_lowercase().as_str() {
                    "lab" => ColorSpace::Lab,
                    "rgb" => ColorSpace::Rgb,
                    _ => return Err(Error::Config(format!("invalid value {value:?} for {key}"))),
                }
            }
            "t_lo" => self.merge.t_lo = parse(key, value)?,
            "t_hi" => self.merge.t_hi = parse(key, value)?,
            "epsilon" => self.merge.epsilon = parse(key, value)?,
            "max_iter" | "max_iterations" => self.merge.max_iterations = parse(key, value)?,
            "min_area" | "min_area_fraction" => self.post.min_area_fraction = parse(key, value)?,
            "dilate_radius" | "dilation_radius" => self.post.dilation_radius = parse(key, value)?,
            "clip_limit" | "clahe_clip_limit" => self.post.clahe_clip_limit = parse(key, value)?,
            "clahe_tiles" => self.post.clahe_tiles = parse(key, value)?,
            "polarity" => {
                self.post.polarity = match value.to_ascii_lowercase().as_str() {
                    "dark" => Polarity::Dark,
                    "bright" => Polarity::Bright,
                    _ => return Err(Error::Config(format!("invalid value {value:?} for {key}"))),
                }
            }
            "parallel" | "parallelism" => self.parallelism = parse(key, value)?,
            "debug_dumps" => self.debug_dumps = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`; `#` starts a comment.
    pub fn apply_settings(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.apply_setting(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_settings(&text)?;
        Ok(cfg)
    }
}

/// Output of [`segment_image`] with the intermediate products kept for
/// inspection.
#[derive(Clone, Debug)]
pub struct Segmentation {
    pub mask: BinaryMask,
    /// Merge threshold chosen by the search.
    pub threshold: f64,
    pub regions_after_merge: usize,
    /// True when no probe kept two regions and the unmerged graph was used.
    pub fell_back: bool,
    pub probes: Vec<Probe>,
    pub roi: BinaryMask,
    pub superpixels: LabelMap,
    pub merged: LabelMap,
    pub post: PostprocessStages,
}

/// Field-of-view mask, SLIC, adjacency graph, threshold search and
/// post-processing. Errors are tagged with the stage that raised them.
pub fn segment_image(img: &ImageRgb, cfg: &PipelineConfig) -> Result<Segmentation> {
    cfg.validate().map_err(|e| e.in_stage("config"))?;
    let (width, height) = img.dims();
    let roi = ellipse_mask(width, height);
    let superpixels = slic_segment(img, &cfg.slic).map_err(|e| e.in_stage("slic"))?;
    // Clipping to the field of view can leave slivers or split superpixels;
    // restore the connectivity and minimum-size constraints on what remains.
    let clipped = superpixels.restrict_to(&roi).map_err(|e| e.in_stage("rag"))?;
    let clipped = enforce_connectivity(&clipped, cfg.slic.min_region_factor);
    let graph = build_rag(img, &clipped, &roi).map_err(|e| e.in_stage("rag"))?;

    let (threshold, merged, probes, fell_back) = if graph.node_count() < 2 {
        (cfg.merge.t_lo, graph, Vec::new(), true)
    } else {
        let search = find_threshold(&graph, &cfg.merge).map_err(|e| e.in_stage("merge"))?;
        (search.threshold, search.merged, search.probes, search.fell_back)
    };
    let regions_after_merge = merged.node_count();
    let merged = merged.pixel_assignment().compact();
    log::debug!(
        "threshold {threshold:.3} leaves {regions_after_merge} regions after {} probes",
        probes.len()
    );

    let post = postprocess_stages(img, &merged, &roi, &cfg.post).map_err(|e| e.in_stage("postprocess"))?;
    Ok(Segmentation {
        mask: post.mask.clone(),
        threshold,
        regions_after_merge,
        fell_back,
        probes,
        roi,
        superpixels,
        merged,
        post,
    })
}
