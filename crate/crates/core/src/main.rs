use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lesionseg::dataset::{ingest_dataset, Layout};
use lesionseg::imagecore::{load_image, load_mask, save_mask_png, save_rgb_png};
use lesionseg::metrics::{confusion, metrics_from_counts, render_overlay, TP_COLOR};
use lesionseg::pipeline::{segment_image, PipelineConfig};
use lesionseg::report::{dump_debug, format_summary, probes_csv, run_evaluate};
use lesionseg::slic::render_superpixels;
use lesionseg::synthetic::{write_corpus, SyntheticConfig};
use lesionseg::{Error, ImageRgb};

#[derive(Parser)]
#[command(name = "lesionseg", version, about = "Superpixel-merging skin lesion segmentation")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Segment one image and write the lesion mask.
    Segment {
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Color-coded agreement with --truth, or the mask tinted over the image.
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Superpixels rendered with mean colors and yellow boundaries.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// Ground-truth mask; prints metrics when given.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        params: Params,
    },
    /// Segment and score every image of a dataset.
    Evaluate {
        #[arg(long)]
        layout: String,
        #[arg(long)]
        root: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        params: Params,
    },
    /// Write a synthetic corpus in the `pairs` layout.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        count: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Image side length in pixels.
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 0.5)]
        hair_prob: f64,
        #[arg(long)]
        no_vignette: bool,
    },
}

#[derive(Args)]
struct Params {
    /// key = value file applied before the flags below.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    compactness: Option<f64>,
    #[arg(long)]
    color_space: Option<String>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    min_area: Option<f64>,
    #[arg(long)]
    dilate_radius: Option<usize>,
    #[arg(long)]
    clip_limit: Option<f64>,
    #[arg(long)]
    polarity: Option<String>,
    /// Worker threads; LESIONSEG_THREADS takes precedence.
    #[arg(long)]
    parallel: Option<usize>,
    #[arg(long)]
    debug_dumps: bool,
}

impl Params {
    fn resolve(&self) -> Result<PipelineConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        let flags: [(&str, Option<String>); 10] = [
            ("k", self.k.map(|v| v.to_string())),
            ("compactness", self.compactness.map(|v| v.to_string())),
            ("color_space", self.color_space.clone()),
            ("epsilon", self.epsilon.map(|v| v.to_string())),
            ("max_iter", self.max_iter.map(|v| v.to_string())),
            ("min_area", self.min_area.map(|v| v.to_string())),
            ("dilate_radius", self.dilate_radius.map(|v| v.to_string())),
            ("clip_limit", self.clip_limit.map(|v| v.to_string())),
            ("polarity", self.polarity.clone()),
            ("parallel", self.parallel.map(|v| v.to_string())),
        ];
        for (key, value) in flags {
            if let Some(value) = value {
                cfg.apply_setting(key, &value)?;
            }
        }
        if let Ok(threads) = std::env::var("LESIONSEG_THREADS") {
            cfg.apply_setting("parallel", &threads)?;
        }
        cfg.debug_dumps |= self.debug_dumps;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn tint(img: &ImageRgb, mask: &lesionseg::BinaryMask) -> ImageRgb {
    ImageRgb::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        if mask.get(x, y) {
            [0, 1, 2].map(|c| ((p[c] as u16 + TP_COLOR[c] as u16) / 2) as u8)
        } else {
            p
        }
    })
}

fn segment(
    image: &Path,
    out: &Path,
    overlay: Option<&Path>,
    labels: Option<&Path>,
    truth: Option<&Path>,
    params: &Params,
) -> Result<ExitCode, Error> {
    let cfg = params.resolve()?;
    let img = load_image(image)?;
    let seg = segment_image(&img, &cfg)?;
    save_mask_png(&seg.mask, out)?;
    println!(
        "threshold {:.4}, {} regions after merge{}",
        seg.threshold,
        seg.regions_after_merge,
        if seg.fell_back { " (fallback)" } else { "" }
    );
    if let Some(path) = labels {
        save_rgb_png(&render_superpixels(&img, &seg.superpixels)?, path)?;
    }
    let truth = truth.map(load_mask).transpose()?;
    if let Some(t) = &truth {
        let m = metrics_from_counts(&confusion(&seg.mask, t)?);
        println!(
            "sensitivity {:.4}  specificity {:.4}  accuracy {:.4}  f_measure {:.4}  jaccard {:.4}",
            m.sensitivity, m.specificity, m.accuracy, m.f_measure, m.jaccard
        );
    }
    if let Some(path) = overlay {
        let rendered = match &truth {
            Some(t) => render_overlay(&seg.mask, t, &img)?,
            None => tint(&img, &seg.mask),
        };
        save_rgb_png(&rendered, path)?;
    }
    if cfg.debug_dumps {
        let dir = out.parent().unwrap_or(Path::new("."));
        let id = out.file_stem().and_then(|s| s.to_str()).unwrap_or("segment");
        dump_debug(dir, id, &img, &seg, truth.as_ref())?;
        let probes = dir.join(format!("{id}_probes.csv"));
        std::fs::write(&probes, probes_csv(&seg.probes)).map_err(|e| Error::Io {
            path: probes.clone(),
            source: e,
        })?;
    }
    Ok(ExitCode::SUCCESS)
}

fn evaluate(layout: &str, root: &Path, report: &Path, params: &Params) -> Result<ExitCode, Error> {
    let cfg = params.resolve()?;
    let layout: Layout = layout.parse()?;
    let index = ingest_dataset(root, layout)?;
    for w in &index.warnings {
        log::warn!("{w}");
    }
    let outcome = run_evaluate(&index, &cfg, report)?;
    if let Some(s) = &outcome.summary {
        print!("{}", format_summary("all", s));
    }
    for (group, s) in &outcome.groups {
        print!("{}", format_summary(group, s));
    }
    if outcome.skipped > 0 {
        println!("skipped {} image(s) without ground truth", outcome.skipped);
    }
    println!("report written to {}", report.display());
    if outcome.failures() > 0 {
        eprintln!("{} image(s) failed", outcome.failures());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Segment {
            image,
            out,
            overlay,
            labels,
            truth,
            params,
        } => segment(&image, &out, overlay.as_deref(), labels.as_deref(), truth.as_deref(), &params),
        Command::Evaluate {
            layout,
            root,
            report,
            params,
        } => evaluate(&layout, &root, &report, &params),
        Command::GenSynthetic {
            out,
            count,
            seed,
            size,
            hair_prob,
            no_vignette,
        } => {
            let cfg = SyntheticConfig {
                width: size,
                height: size,
                hair_probability: hair_prob,
                vignette: !no_vignette,
            };
            let samples = write_corpus(&out, count, seed, &cfg)?;
            println!("wrote {} image/mask pairs to {}", samples.len(), out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(_) => ExitCode::from(2),
    }
}
