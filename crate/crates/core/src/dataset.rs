//! Discovery of image / ground-truth pairs in the supported directory
//! layouts.
//!
//! * `ph2`: one folder per case, `<case>/<case>_Dermoscopic_Image/<case>.bmp`
//!   with truth in `<case>/<case>_lesion/<case>_lesion.bmp`. An optional
//!   `PH2_dataset.txt` next to (or above) the case folders supplies the
//!   clinical diagnosis used for per-subset summaries.
//! * `isic`: flat `<id>.jpg` with `<id>_segmentation.png`.
//! * `pairs`: flat `<id>.png` with `<id>_mask.png`.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Ph2,
    Isic,
    Pairs,
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ph2" => Ok(Layout::Ph2),
            "isic" => Ok(Layout::Isic),
            "pairs" => Ok(Layout::Pairs),
            other => Err(Error::Config(format!(
                "unknown dataset layout {other:?} (expected ph2, isic or pairs)"
            ))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::Ph2 => "ph2",
            Layout::Isic => "isic",
            Layout::Pairs => "pairs",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetEntry {
    pub id: String,
    pub image: PathBuf,
    pub truth: Option<PathBuf>,
    /// Subset name for grouped summaries (e.g. PH2 diagnosis).
    pub group: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetIndex {
    /// Entries sorted by id.
    pub entries: Vec<DatasetEntry>,
    pub warnings: Vec<String>,
}

impl DatasetIndex {
    pub fn from_entries(mut entries: Vec<DatasetEntry>) -> Self {
        entries.sort_by(|a, b| a.id.cmp(&b.id));
        Self {
            entries,
            warnings: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries that have a ground-truth mask.
    pub fn evaluable(&self) -> impl Iterator<Item = &DatasetEntry> {
        self.entries.iter().filter(|e| e.truth.is_some())
    }

    /// Number of entries without ground truth.
    pub fn orphans(&self) -> usize {
        self.entries.iter().filter(|e| e.truth.is_none()).count()
    }
}

fn read_dir_sorted(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|entry| entry.map(|e| e.path()).map_err(|e| Error::io(dir, e)))
        .collect::<Result<Vec<_>>>()?;
    paths.sort();
    Ok(paths)
}

fn file_name(p: &Path) -> Option<&str> {
    p.file_name().and_then(|n| n.to_str())
}

/// Scans `root` for image/truth pairs in the given layout.
pub fn ingest_dataset(root: impl AsRef<Path>, layout: Layout) -> Result<DatasetIndex> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset root is not a directory"),
        ));
    }
    let mut index = match layout {
        Layout::Pairs => flat_layout(root, &["png"], "_mask", "png")?,
        Layout::Isic => flat_layout(root, &["jpg", "jpeg"], "_segmentation", "png")?,
        Layout::Ph2 => ph2_layout(root)?,
    };
    let mut seen = BTreeMap::new();
    for e in &index.entries {
        if let Some(prev) = seen.insert(e.id.clone(), e.image.clone()) {
            return Err(Error::Config(format!(
                "duplicate image id {:?}: {} and {}",
                e.id,
                prev.display(),
                e.image.display()
            )));
        }
    }
    for e in &index.entries {
        if e.truth.is_none() {
            index
                .warnings
                .push(format!("{}: no ground-truth mask for {}", e.id, e.image.display()));
        }
    }
    if index.entries.is_empty() {
        index
            .warnings
            .push(format!("no {layout} images found under {}", root.display()));
    }
    Ok(index)
}

fn flat_layout(root: &Path, image_exts: &[&str], truth_suffix: &str, truth_ext: &str) -> Result<DatasetIndex> {
    let mut entries = Vec::new();
    for path in read_dir_sorted(root)? {
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if !image_exts.iter().any(|e| e.eq_ignore_ascii_case(ext)) || stem.ends_with(truth_suffix) {
            continue;
        }
        let truth = root.join(format!("{stem}{truth_suffix}.{truth_ext}"));
        entries.push(DatasetEntry {
            id: stem.to_string(),
            truth: truth.is_file().then_some(truth),
            image: path,
            group: None,
        });
    }
    Ok(DatasetIndex::from_entries(entries))
}

fn ph2_layout(root: &Path) -> Result<DatasetIndex> {
    let mut entries = Vec::new();
    collect_ph2_cases(root, 2, &mut entries)?;
    let diagnoses = find_ph2_table(root)
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            Ok::<_, Error>(parse_ph2_diagnoses(&text))
        })
        .transpose()?
        .unwrap_or_default();
    for e in &mut entries {
        e.group = diagnoses.get(&e.id).cloned();
    }
    Ok(DatasetIndex::from_entries(entries))
}

fn collect_ph2_cases(dir: &Path, depth: usize, out: &mut Vec<DatasetEntry>) -> Result<()> {
    for path in read_dir_sorted(dir)? {
        if !path.is_dir() {
            continue;
        }
        let Some(case) = file_name(&path).map(str::to_string) else {
            continue;
        };
        let image_dir = path.join(format!("{case}_Dermoscopic_Image"));
        if image_dir.is_dir() {
            let image = image_dir.join(format!("{case}.bmp"));
            if !image.is_file() {
                continue;
            }
            let truth = path.join(format!("{case}_lesion")).join(format!("{case}_lesion.bmp"));
            out.push(DatasetEntry {
                id: case,
                image,
                truth: truth.is_file().then_some(truth),
                group: None,
            });
        } else if depth > 0 {
            collect_ph2_cases(&path, depth - 1, out)?;
        }
    }
    Ok(())
}

fn find_ph2_table(root: &Path) -> Option<PathBuf> {
    root.ancestors()
        .take(3)
        .map(|d| d.join("PH2_dataset.txt"))
        .find(|p| p.is_file())
}

/// Maps case ids to `common`, `atypical` or `melanoma` from the
/// `||`-separated table shipped with PH2.
pub fn parse_ph2_diagnoses(text: &str) -> BTreeMap<String, String> {
    let mut column = None;
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let cells: Vec<&str> = line.split("||").map(str::trim).collect();
        if cells.len() < 3 {
            continue;
        }
        if let Some(i) = cells.iter().position(|c| c.eq_ignore_ascii_case("Clinical Diagnosis")) {
            column = Some(i);
            continue;
        }
        let Some(col) = column else { continue };
        let (Some(name), Some(diag)) = (cells.get(1), cells.get(col)) else {
            continue;
        };
        let group = match *diag {
            "0" => "common",
            "1" => "atypical",
            "2" => "melanoma",
            _ => continue,
        };
        if !name.is_empty() {
            out.insert(name.to_string(), group.to_string());
        }
    }
    out
}
