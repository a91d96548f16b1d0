//! Dataset manifests: which clip lives where, its event label and its fold.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::esc50_category;
use crate::hashing;

pub const FOLD_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    pub path: PathBuf,
    pub label: String,
    /// In `1..=10`.
    pub fold: u8,
    pub category: Option<String>,
}

/// A validated set of clips: ids are unique, every fold in `1..=10` is
/// used, and every event occurs in at least two folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    rows: Vec<ManifestRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    /// `clip_id,path,label,fold[,category]`, paths relative to the file.
    Generic,
    /// The `UrbanSound8K.csv` metadata file; audio under `../audio/fold<n>/`.
    UrbanSound8k,
    /// The `esc50.csv` metadata file plus a fold mapping; audio under
    /// `../audio/`.
    Esc50,
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetKind::Generic => "generic",
            DatasetKind::UrbanSound8k => "urbansound8k",
            DatasetKind::Esc50 => "esc50",
        })
    }
}

impl FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "generic" => Ok(DatasetKind::Generic),
            "urbansound8k" | "us8k" => Ok(DatasetKind::UrbanSound8k),
            "esc50" | "esc-50" => Ok(DatasetKind::Esc50),
            other => Err(Error::InvalidConfig(format!("unknown dataset kind '{other}'"))),
        }
    }
}

impl Manifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Manifest("no clips".into()));
        }
        let mut seen = HashSet::new();
        let mut folds_of: BTreeMap<&str, BTreeSet<u8>> = BTreeMap::new();
        let mut folds = BTreeSet::new();
        for r in &rows {
            if r.clip_id.is_empty() || r.label.is_empty() {
                return Err(Error::Manifest("empty clip id or label".into()));
            }
            if !seen.insert(r.clip_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate clip id '{}'", r.clip_id)));
            }
            if !(1..=FOLD_COUNT as u8).contains(&r.fold) {
                return Err(Error::Manifest(format!(
                    "clip '{}' has fold {} outside 1..={FOLD_COUNT}",
                    r.clip_id, r.fold
                )));
            }
            folds.insert(r.fold);
            folds_of.entry(&r.label).or_default().insert(r.fold);
        }
        if folds.len() != FOLD_COUNT {
            let missing: Vec<u8> = (1..=FOLD_COUNT as u8).filter(|f| !folds.contains(f)).collect();
            return Err(Error::Manifest(format!("folds {missing:?} have no clips")));
        }
        if let Some((event, _)) = folds_of.iter().find(|(_, f)| f.len() < 2) {
            return Err(Error::Manifest(format!("event '{event}' occurs in a single fold")));
        }
        Ok(Self { rows })
    }

    pub fn rows(&self) -> &[ManifestRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn clip_ids(&self) -> Vec<String> {
        self.rows.iter().map(|r| r.clip_id.clone()).collect()
    }

    /// Sorted distinct event labels.
    pub fn events(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| r.label.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Event to category, if every clip carries a category and each event
    /// maps to exactly one.
    pub fn category_map(&self) -> Result<Option<HashMap<String, String>>> {
        let mut map = HashMap::new();
        for r in &self.rows {
            let Some(cat) = &r.category else {
                return Ok(None);
            };
            if let Some(prev) = map.insert(r.label.clone(), cat.clone()) {
                if &prev != cat {
                    return Err(Error::Manifest(format!(
                        "event '{}' listed under categories '{prev}' and '{cat}'",
                        r.label
                    )));
                }
            }
        }
        Ok(Some(map))
    }

    /// Digest of ids, labels, folds and categories; independent of where
    /// the audio lives.
    pub fn digest(&self) -> String {
        let mut text = String::new();
        for r in &self.rows {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                r.clip_id,
                r.label,
                r.fold,
                r.category.as_deref().unwrap_or("")
            ));
        }
        hashing::digest_hex(text.as_bytes())
    }

    /// Write in the generic schema. Paths under the manifest's directory
    /// are stored relative to it.
    pub fn write_generic(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let base = path.parent().unwrap_or(Path::new(""));
        let with_category = self.rows.iter().any(|r| r.category.is_some());
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["clip_id", "path", "label", "fold"];
        if with_category {
            header.push("category");
        }
        w.write_record(&header)?;
        for r in &self.rows {
            let rel = r.path.strip_prefix(base).unwrap_or(&r.path);
            let fold = r.fold.to_string();
            let mut rec = vec![
                r.clip_id.as_str(),
                rel.to_str().ok_or_else(|| Error::Manifest(format!("non-UTF-8 path for '{}'", r.clip_id)))?,
                r.label.as_str(),
                fold.as_str(),
            ];
            if with_category {
                rec.push(r.category.as_deref().unwrap_or(""));
            }
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        crate::cache::write_atomic(path, &bytes)
    }
}

fn read_table(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.kind() {
        csv::ErrorKind::Io(_) => Error::Unreadable {
            path: path.into(),
            source: std::io::Error::other(e.to_string()),
        },
        _ => Error::Csv(e),
    })?;
    let header = r.headers()?.clone();
    let records = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    Ok((header, records))
}

struct Columns {
    index: HashMap<String, usize>,
    path: PathBuf,
}

impl Columns {
    fn new(header: &csv::StringRecord, path: &Path) -> Self {
        Self {
            index: header
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_string(), i))
                .collect(),
            path: path.into(),
        }
    }

    fn require(&self, name: &str) -> Result<usize> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::format("manifest", &self.path, format!("missing column '{name}'")))
    }

    fn optional(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }
}

fn field<'a>(rec: &'a csv::StringRecord, i: usize) -> &'a str {
    rec.get(i).unwrap_or("").trim()
}

fn parse_num<T: FromStr>(s: &str, what: &str, path: &Path, line: usize) -> Result<T> {
    s.parse()
        .map_err(|_| Error::format("manifest", path, format!("row {line}: bad {what} '{s}'")))
}

fn parse_fold(s: &str, path: &Path, line: usize) -> Result<u8> {
    let fold: u8 = parse_num(s, "fold", path, line)?;
    if !(1..=FOLD_COUNT as u8).contains(&fold) {
        return Err(Error::Manifest(format!(
            "row {line} of {}: fold {fold} outside 1..={FOLD_COUNT}",
            path.display()
        )));
    }
    Ok(fold)
}

fn stem(file: &str) -> String {
    Path::new(file)
        .file_stem()
        .map_or_else(|| file.to_string(), |s| s.to_string_lossy().into_owned())
}

/// Load a manifest. ESC-50 needs `fold_map`, a CSV with columns
/// `filename,fold` assigning each clip to one of ten folds.
pub fn load_manifest(path: impl AsRef<Path>, kind: DatasetKind, fold_map: Option<&Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let (header, records) = read_table(path)?;
    let cols = Columns::new(&header, path);
    let dir = path.parent().unwrap_or(Path::new(""));
    let dataset_root = dir.parent().unwrap_or(Path::new(""));

    let mut rows = Vec::with_capacity(records.len());
    match kind {
        DatasetKind::Generic => {
            let (id, p, label, fold) = (
                cols.require("clip_id")?,
                cols.require("path")?,
                cols.require("label")?,
                cols.require("fold")?,
            );
            let category = cols.optional("category");
            for (line, rec) in records.iter().enumerate() {
                let rel = PathBuf::from(field(rec, p));
                rows.push(ManifestRow {
                    clip_id: field(rec, id).to_string(),
                    path: if rel.is_absolute() { rel } else { dir.join(rel) },
                    label: field(rec, label).to_string(),
                    fold: parse_fold(field(rec, fold), path, line + 1)?,
                    category: category.map(|c| field(rec, c).to_string()).filter(|c| !c.is_empty()),
                });
            }
        }
        DatasetKind::UrbanSound8k => {
            let (file, fold, class) = (
                cols.require("slice_file_name")?,
                cols.require("fold")?,
                cols.require("class")?,
            );
            for (line, rec) in records.iter().enumerate() {
                let name = field(rec, file);
                let f = parse_fold(field(rec, fold), path, line + 1)?;
                rows.push(ManifestRow {
                    clip_id: stem(name),
                    path: dataset_root.join("audio").join(format!("fold{f}")).join(name),
                    label: field(rec, class).to_string(),
                    fold: f,
                    category: None,
                });
            }
        }
        DatasetKind::Esc50 => {
            let map_path = fold_map.ok_or_else(|| {
                Error::Manifest("ESC-50 manifests need a fold mapping file".into())
            })?;
            let (map_header, map_records) = read_table(map_path)?;
            let map_cols = Columns::new(&map_header, map_path);
            let (mf, mfold) = (map_cols.require("filename")?, map_cols.require("fold")?);
            let mut folds = HashMap::new();
            for (line, rec) in map_records.iter().enumerate() {
                let f = parse_fold(field(rec, mfold), map_path, line + 1)?;
                folds.insert(field(rec, mf).to_string(), f);
            }

            let (file, target, class) = (
                cols.require("filename")?,
                cols.require("target")?,
                cols.require("category")?,
            );
            for (line, rec) in records.iter().enumerate() {
                let name = field(rec, file);
                let t: u32 = parse_num(field(rec, target), "target", path, line + 1)?;
                let group = esc50_category(t).ok_or_else(|| {
                    Error::format("manifest", path, format!("row {}: target {t} outside 0..50", line + 1))
                })?;
                let fold = *folds.get(name).ok_or_else(|| {
                    Error::Manifest(format!("'{name}' missing from fold map {}", map_path.display()))
                })?;
                rows.push(ManifestRow {
                    clip_id: stem(name),
                    path: dataset_root.join("audio").join(name),
                    label: field(rec, class).to_string(),
                    fold,
                    category: Some(group.to_string()),
                });
            }
        }
    }
    Manifest::new(rows)
}
