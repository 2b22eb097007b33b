//! Acceptance suite: one PASS / FAIL / SKIP line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so the lines are always
//! printed; the process exits non-zero when any criterion fails.
//! Set `LESIONSEG_PH2_ROOT` to a PH2 checkout to run the dataset check.

use std::collections::VecDeque;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lesionseg::imagecore::LabelMap;
use lesionseg::metrics::confusion;
use lesionseg::postprocess::{dilate_disk, fill_holes, otsu_threshold};
use lesionseg::rag::{build_rag, find_threshold, MergeConfig, RegionGraph};
use lesionseg::slic::{slic_segment, SlicConfig};
use lesionseg::synthetic::{generate, SyntheticConfig};
use lesionseg::{BinaryMask, GrayImage, ImageRgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BIN: &str = env!("CARGO_BIN_EXE_lesionseg");

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn within(limit: Duration, elapsed: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

// ---------------------------------------------------------------- oracles

fn random_mask(rng: &mut impl Rng, w: usize, h: usize) -> BinaryMask {
    let p = rng.random_range(0.2..0.8);
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(p))
}

/// Exhaustive scan: class sums recomputed from the pixels for every T.
fn otsu_oracle(img: &GrayImage) -> u8 {
    let px = img.as_raw();
    let mut best = (0u8, 0u128, 1u128);
    for t in 0..=254u8 {
        let (mut n0, mut s0, mut n1, mut s1) = (0i128, 0i128, 0i128, 0i128);
        for &v in px {
            if v <= t {
                n0 += 1;
                s0 += v as i128;
            } else {
                n1 += 1;
                s1 += v as i128;
            }
        }
        let (num, den) = if n0 == 0 || n1 == 0 {
            (0u128, 1u128)
        } else {
            let d = (n1 * s0 - n0 * s1).unsigned_abs();
            (d * d, (n0 * n1) as u128)
        };
        if t == 0 || num * best.2 > best.1 * den {
            best = (t, num, den);
        }
    }
    best.0
}

/// Background reachable from the border, grown by repeated sweeps until
/// nothing changes.
fn fill_oracle(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut reach = BinaryMask::from_fn(w, h, |x, y| {
        !mask.get(x, y) && (x == 0 || y == 0 || x == w - 1 || y == h - 1)
    });
    loop {
        let mut changed = false;
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) || reach.get(x, y) {
                    continue;
                }
                let near = (x > 0 && reach.get(x - 1, y))
                    || (x + 1 < w && reach.get(x + 1, y))
                    || (y > 0 && reach.get(x, y - 1))
                    || (y + 1 < h && reach.get(x, y + 1));
                if near {
                    reach.set(x, y, true);
                    changed = true;
                }
            }
        }
        if !changed {
            return reach.not();
        }
    }
}

/// Minkowski sum with the disk: every foreground pixel stamps its disk.
fn dilate_oracle(mask: &BinaryMask, r: usize) -> BinaryMask {
    let (w, h) = mask.dims();
    let r = r as i64;
    let mut out = BinaryMask::empty(w, h);
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if dx * dx + dy * dy <= r * r && nx >= 0 && ny >= 0 && nx < w as i64 && ny < h as i64 {
                        out.set(nx as usize, ny as usize, true);
                    }
                }
            }
        }
    }
    out
}

fn criterion_oracles() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let full = BinaryMask::full(32, 32);

    for i in 0..100 {
        // mix of smooth-ish and bimodal histograms
        let (lo, hi) = (rng.random_range(0..128u8), rng.random_range(128..=255u8));
        let img = GrayImage::from_fn(32, 32, |_, _| rng.random_range(lo..=hi));
        let got = match otsu_threshold(&img, &full) {
            Ok(t) => t,
            Err(e) => return Verdict::Fail(format!("otsu image {i}: {e}")),
        };
        let want = otsu_oracle(&img);
        if got != want {
            return Verdict::Fail(format!("otsu image {i}: got {got}, oracle {want}"));
        }
    }
    for i in 0..100 {
        let m = random_mask(&mut rng, 32, 32);
        if fill_holes(&m) != fill_oracle(&m) {
            return Verdict::Fail(format!("fill_holes mask {i} differs from flood-fill oracle"));
        }
    }
    for i in 0..50 {
        let m = BinaryMask::from_fn(16, 16, |_, _| rng.random_bool(0.08));
        for r in [1, 3, 8] {
            if dilate_disk(&m, r) != dilate_oracle(&m, r) {
                return Verdict::Fail(format!("dilate_disk mask {i} radius {r} differs from Minkowski oracle"));
            }
        }
    }
    for i in 0..100 {
        let (p, t) = (random_mask(&mut rng, 8, 8), random_mask(&mut rng, 8, 8));
        let c = confusion(&p, &t).unwrap();
        let mut want = [0u64; 4];
        for (&a, &b) in p.as_slice().iter().zip(t.as_slice()) {
            want[match (a, b) {
                (true, true) => 0,
                (false, false) => 1,
                (true, false) => 2,
                (false, true) => 3,
            }] += 1;
        }
        if [c.tp, c.tn, c.fp, c.fn_] != want {
            return Verdict::Fail(format!("confusion pair {i}: {c:?} vs {want:?}"));
        }
    }
    let elapsed = start.elapsed();
    match within(Duration::from_secs(10), elapsed) {
        Ok(()) => Verdict::Pass(format!("otsu 100, fill 100, dilate 150, confusion 100 exact in {elapsed:.2?}")),
        Err(e) => Verdict::Fail(e),
    }
}

// ------------------------------------------------------------------- slic

fn four_connected(labels: &LabelMap) -> Result<(), String> {
    let (w, h) = labels.dims();
    let sizes = labels.region_sizes();
    let mut seen = vec![false; w * h];
    let mut visited_labels = vec![false; sizes.len()];
    for start in 0..w * h {
        if seen[start] {
            continue;
        }
        let l = labels.as_slice()[start];
        if visited_labels[l as usize] {
            return Err(format!("label {l} has more than one 4-connected component"));
        }
        visited_labels[l as usize] = true;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        let mut count = 0;
        while let Some(i) = queue.pop_front() {
            count += 1;
            let (x, y) = (i % w, i / w);
            let mut push = |j: usize| {
                if !seen[j] && labels.as_slice()[j] == l {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if x > 0 {
                push(i - 1);
            }
            if x + 1 < w {
                push(i + 1);
            }
            if y > 0 {
                push(i - w);
            }
            if y + 1 < h {
                push(i + w);
            }
        }
        debug_assert_eq!(count, sizes[l as usize]);
    }
    Ok(())
}

fn criterion_slic() -> Verdict {
    let start = Instant::now();
    let syn = SyntheticConfig { width: 256, height: 256, ..SyntheticConfig::default() };
    let cfg = SlicConfig::default();
    let mut regions = Vec::new();
    for s in generate(20, 2024, &syn) {
        let runs: Vec<LabelMap> = match (0..3).map(|_| slic_segment(&s.image, &cfg)).collect() {
            Ok(r) => r,
            Err(e) => return Verdict::Fail(format!("{}: {e}", s.id)),
        };
        let labels = &runs[0];
        if runs[1] != *labels || runs[2] != *labels {
            return Verdict::Fail(format!("{}: repeated runs differ", s.id));
        }
        if labels.as_slice().contains(&LabelMap::VOID) {
            return Verdict::Fail(format!("{}: unlabeled pixels", s.id));
        }
        if labels.region_sizes().contains(&0) {
            return Verdict::Fail(format!("{}: label numbering has gaps", s.id));
        }
        if let Err(e) = four_connected(labels) {
            return Verdict::Fail(format!("{}: {e}", s.id));
        }
        regions.push(labels.region_count());
    }
    let elapsed = start.elapsed();
    match within(Duration::from_secs(30), elapsed) {
        Ok(()) => Verdict::Pass(format!(
            "20 images partitioned, connected, deterministic ({}..{} regions) in {elapsed:.2?}",
            regions.iter().min().unwrap(),
            regions.iter().max().unwrap()
        )),
        Err(e) => Verdict::Fail(e),
    }
}

// ------------------------------------------------------------------ merge

/// Voronoi partition of a random image into at most `max_nodes` regions.
fn random_graph(rng: &mut impl Rng, max_nodes: usize) -> RegionGraph {
    let (w, h) = (rng.random_range(10..=40), rng.random_range(10..=40));
    let n = rng.random_range(2..=max_nodes);
    let seeds: Vec<(i64, i64)> = (0..n)
        .map(|_| (rng.random_range(0..w as i64), rng.random_range(0..h as i64)))
        .collect();
    let labels = LabelMap::from_fn(w, h, |x, y| {
        (0..n)
            .min_by_key(|&i| (seeds[i].0 - x as i64).pow(2) + (seeds[i].1 - y as i64).pow(2))
            .unwrap() as u32
    });
    let tones: Vec<[u8; 3]> = (0..n).map(|_| rng.random()).collect();
    let img = ImageRgb::from_fn(w, h, |x, y| {
        let base = tones[labels.get(x, y) as usize];
        base.map(|c| c.saturating_add(rng.random_range(0..8)))
    });
    build_rag(&img, &labels, &BinaryMask::full(w, h)).unwrap()
}

fn same_graph(a: &RegionGraph, b: &RegionGraph) -> bool {
    a.node_count() == b.node_count() && a.nodes().eq(b.nodes()) && a.edges() == b.edges()
}

fn criterion_merge() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut collapsed = 0;
    for g_idx in 0..50 {
        let g = random_graph(&mut rng, 100);
        if g.node_count() > 100 {
            return Verdict::Fail(format!("graph {g_idx} has {} nodes", g.node_count()));
        }
        let mean = |g: &RegionGraph| g.total_color().map(|c| c as f64 / g.total_pixels() as f64);
        for _ in 0..10 {
            let t = rng.random_range(0.0..450.0);
            let m = g.merge_at_threshold(t);
            if m.total_pixels() != g.total_pixels() || m.total_color() != g.total_color() {
                return Verdict::Fail(format!("graph {g_idx} t={t:.3}: totals changed"));
            }
            if mean(&m).iter().zip(mean(&g)).any(|(a, b)| (a - b).abs() > 1e-6) {
                return Verdict::Fail(format!("graph {g_idx} t={t:.3}: global mean changed"));
            }
            let sum: u64 = m.nodes().map(|n| n.pixel_count).sum();
            if sum != g.total_pixels() {
                return Verdict::Fail(format!("graph {g_idx} t={t:.3}: node counts do not add up"));
            }
        }
        if !same_graph(&g.merge_at_threshold(0.0), &g) {
            return Verdict::Fail(format!("graph {g_idx}: merge at 0 changed the graph"));
        }
        if g.is_connected() {
            let n = g.merge_at_threshold(442.0).node_count();
            if n != 1 {
                return Verdict::Fail(format!("graph {g_idx}: merge at 442 left {n} nodes"));
            }
            collapsed += 1;
        }
    }
    verdict(
        collapsed > 0,
        format!("50 graphs x 10 thresholds conserved; identity at 0; {collapsed} connected graphs collapse at 442"),
    )
}

// ----------------------------------------------------------------- search

fn strip_graph(colors: &[[u8; 3]], run: usize) -> RegionGraph {
    let w = colors.len() * run;
    let img = ImageRgb::from_fn(w, 1, |x, _| colors[x / run]);
    let labels = LabelMap::from_fn(w, 1, |x, _| (x / run) as u32);
    build_rag(&img, &labels, &BinaryMask::full(w, 1)).unwrap()
}

fn criterion_search() -> Verdict {
    let cfg = MergeConfig::default();
    let chain = strip_graph(&[[0; 3], [10; 3], [100; 3]], 4);
    let s = match find_threshold(&chain, &cfg) {
        Ok(s) => s,
        Err(e) => return Verdict::Fail(format!("chain: {e}")),
    };
    let n = s.merged.node_count();
    let lower = 300f64.sqrt();
    if n != 2 || s.probes.len() > 32 || !(s.threshold > lower && s.threshold <= 164.55) {
        return Verdict::Fail(format!(
            "chain: t*={:.4}, {n} regions, {} probes",
            s.threshold,
            s.probes.len()
        ));
    }
    let chain_detail = format!("chain t*={:.4} -> 2 regions in {} probes", s.threshold, s.probes.len());

    let uniform = strip_graph(&[[120, 80, 60]; 6], 3);
    let u = match find_threshold(&uniform, &cfg) {
        Ok(u) => u,
        Err(e) => return Verdict::Fail(format!("uniform: {e}")),
    };
    let saw_multi = u.probes.iter().any(|p| p.regions >= 2);
    if !u.fell_back || u.merged.node_count() < 2 || (saw_multi && u.merged.node_count() == 1) {
        return Verdict::Fail(format!(
            "uniform: fell_back={}, {} regions",
            u.fell_back,
            u.merged.node_count()
        ));
    }
    // a graph whose probes straddle 1 and many regions must not settle on 1
    let spread = strip_graph(&[[0; 3], [200; 3], [0; 3], [200; 3]], 2);
    let sp = find_threshold(&spread, &cfg).unwrap();
    if sp.merged.node_count() < 2 {
        return Verdict::Fail("alternating strip returned a single region".into());
    }
    Verdict::Pass(format!(
        "{chain_detail}; uniform graph falls back to t={} with {} regions",
        u.threshold,
        u.merged.node_count()
    ))
}

// ------------------------------------------------------------- end-to-end

struct Report {
    rows: Vec<csv::StringRecord>,
    mean: Vec<f64>,
    groups: Vec<String>,
}

fn read_report(path: &Path) -> Result<Report, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let rows = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let mean = text
        .lines()
        .find_map(|l| l.strip_prefix("# mean,"))
        .ok_or("report has no mean row")?
        .split(',')
        .map(|v| v.parse::<f64>().map_err(|e| e.to_string()))
        .collect::<Result<Vec<_>, _>>()?;
    let groups = text
        .lines()
        .filter_map(|l| l.strip_prefix("# summary "))
        .map(|l| l.split_whitespace().next().unwrap_or("").to_string())
        .collect();
    Ok(Report { rows, mean, groups })
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(BIN)
        .args(args)
        .env_remove("LESIONSEG_THREADS")
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "`lesionseg {}` exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ))
    }
}

struct Corpus {
    _dir: tempfile::TempDir,
    root: String,
    serial: Result<(Report, Duration), String>,
}

fn synthetic_corpus() -> &'static Corpus {
    static CORPUS: std::sync::OnceLock<Corpus> = std::sync::OnceLock::new();
    CORPUS.get_or_init(|| {
        let dir = tempfile::tempdir().expect("temp dir");
        let root = dir.path().join("synthetic").to_string_lossy().into_owned();
        let report = dir.path().join("serial.csv");
        let serial = run_cli(&["gen-synthetic", "--out", &root, "--count", "25", "--seed", "7"]).and_then(|()| {
            let start = Instant::now();
            let report_arg = report.to_string_lossy();
            run_cli(&["evaluate", "--layout", "pairs", "--root", &root, "--report", &report_arg, "--parallel", "1"])?;
            Ok((read_report(&report)?, start.elapsed()))
        });
        Corpus { _dir: dir, root, serial }
    })
}

fn criterion_synthetic() -> Verdict {
    let (report, elapsed) = match &synthetic_corpus().serial {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e.clone()),
    };
    if report.rows.len() != 25 || report.mean.len() != 5 {
        return Verdict::Fail(format!("expected 25 rows and 5 means, got {} / {}", report.rows.len(), report.mean.len()));
    }
    let (sens, jac) = (report.mean[0], report.mean[4]);
    let slowest = report
        .rows
        .iter()
        .map(|r| r[8].parse::<u64>().unwrap_or(u64::MAX))
        .max()
        .unwrap();
    let ok = jac >= 0.85 && sens >= 0.90 && *elapsed < Duration::from_secs(180) && slowest < 5000;
    verdict(
        ok,
        format!(
            "mean jaccard {jac:.4} (>= 0.85), mean sensitivity {sens:.4} (>= 0.90), total {elapsed:.1?} (< 180 s), slowest image {slowest} ms (< 5000)"
        ),
    )
}

fn criterion_parallel() -> Verdict {
    let corpus = synthetic_corpus();
    let serial = match &corpus.serial {
        Ok((r, _)) => r,
        Err(e) => return Verdict::Fail(e.clone()),
    };
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let path = dir.path().join("parallel.csv");
    let path_arg = path.to_string_lossy();
    let parallel = run_cli(&["evaluate", "--layout", "pairs", "--root", &corpus.root, "--report", &path_arg, "--parallel", "8"])
        .and_then(|()| read_report(&path));
    let parallel = match parallel {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e),
    };
    if parallel.rows.len() != serial.rows.len() {
        return Verdict::Fail("row counts differ".into());
    }
    for (a, b) in serial.rows.iter().zip(&parallel.rows) {
        // everything except runtime_ms
        if (0..8).any(|i| a[i] != b[i]) {
            return Verdict::Fail(format!("row {} differs: {a:?} vs {b:?}", &a[0]));
        }
    }
    verdict(
        serial.mean == parallel.mean,
        format!("{} rows identical between 1 and 8 workers", serial.rows.len()),
    )
}

fn criterion_ph2() -> Verdict {
    let Ok(root) = std::env::var("LESIONSEG_PH2_ROOT") else {
        return Verdict::Skip("set LESIONSEG_PH2_ROOT to a PH2 dataset directory to run".into());
    };
    let dir = match tempfile::tempdir() {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let path = dir.path().join("ph2.csv");
    let path_arg = path.to_string_lossy();
    let report = match run_cli(&["evaluate", "--layout", "ph2", "--root", &root, "--report", &path_arg, "--parallel", "8"])
        .and_then(|()| read_report(&path))
    {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e),
    };
    let targets = [("sensitivity", 0, 0.9104), ("specificity", 1, 0.8973), ("accuracy", 2, 0.9039), ("f_measure", 3, 0.8918)];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, i, want) in targets {
        let got = report.mean[i];
        ok &= (got - want).abs() <= 0.05;
        parts.push(format!("{name} {got:.4} (target {want} ± 0.05)"));
    }
    let subsets = ["common", "atypical", "melanoma"].iter().all(|g| report.groups.iter().any(|x| x == g));
    parts.push(format!("{} images, subsets {:?}", report.rows.len(), report.groups));
    verdict(ok && subsets, parts.join(", "))
}

fn main() {
    let criteria: [(&str, Check); 7] = [
        ("1 oracle equivalence", criterion_oracles),
        ("2 slic invariants", criterion_slic),
        ("3 merge conservation", criterion_merge),
        ("4 threshold search contract", criterion_search),
        ("5 synthetic end-to-end recovery", criterion_synthetic),
        ("6 PH2 reproduction", criterion_ph2),
        ("7 parallel equivalence", criterion_parallel),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let (tag, detail) = match check() {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} [{name}] {detail}");
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
