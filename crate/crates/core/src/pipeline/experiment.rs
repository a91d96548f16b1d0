//! Ten-fold orchestration of one experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::manifest::{Manifest, FOLD_COUNT};
use crate::audio::load_clip;
use crate::cache::sanitize;
use crate::error::{Error, Result};
use crate::eval::{self, average_precision, det_auc, det_curve, ScoredSet};
use crate::features::{clip_feature, stack, FeatureVector};
use crate::gmm::{train_gmm, DiagGmm};
use crate::hashing::digest_hex;
use crate::mfcc::{MfccExtractor, MfccMatrix};
use crate::svm::{train_event_detector, DetectorConfig};

/// Which part of a rotation consumed a set of clips.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LineageStage {
    GmmTraining,
    /// Standardization, inner cross-validation and the final fit.
    Detector { event: String },
    Scoring,
}

/// Receives the clip ids each stage of each rotation used.
pub trait LineageObserver: Sync {
    fn record(&self, fold: u8, stage: LineageStage, clip_ids: &[String]);
}

pub struct NoLineage;

impl LineageObserver for NoLineage {
    fn record(&self, _: u8, _: LineageStage, _: &[String]) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_digest: String,
    pub manifest_digest: String,
    pub seed: u64,
    pub code_version: String,
    /// DET-AUC is integrated on linear probability axes.
    pub auc_axes: String,
    pub n_clips: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventResult {
    pub event: String,
    pub ap: f64,
    pub auc: f64,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryResult {
    pub map: f64,
    pub mauc: f64,
}

/// Hyperparameters chosen by inner cross-validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub fold: u8,
    pub event: String,
    pub c: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub metadata: Metadata,
    pub config: ExperimentConfig,
    pub map: f64,
    pub mauc: f64,
    pub events: Vec<EventResult>,
    pub categories: Option<BTreeMap<String, CategoryResult>>,
    pub selections: Vec<Selection>,
    /// One set per event, clips in manifest order.
    pub scores: Vec<ScoredSet>,
}

impl ResultsBundle {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("bundle serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::cache::write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
            path: path.into(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::format("results bundle", path, e))
    }

    pub fn event_scores(&self, event: &str) -> Option<&ScoredSet> {
        self.scores.iter().find(|s| s.event == event)
    }
}

/// Per-event AP and DET-AUC with overall and per-category means.
pub fn summarize(
    scores: &[ScoredSet],
    categories: Option<&std::collections::HashMap<String, String>>,
) -> Result<(f64, f64, Vec<EventResult>, Option<BTreeMap<String, CategoryResult>>)> {
    let events = scores
        .iter()
        .map(|s| {
            Ok(EventResult {
                event: s.event.clone(),
                ap: average_precision(s)?,
                auc: det_auc(&det_curve(s)?)?,
                category: categories.and_then(|c| c.get(&s.event).cloned()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aps: Vec<f64> = events.iter().map(|e| e.ap).collect();
    let aucs: Vec<f64> = events.iter().map(|e| e.auc).collect();
    let rollup = match categories {
        Some(cats) => {
            let ap_map = events.iter().map(|e| (e.event.clone(), e.ap)).collect();
            let auc_map = events.iter().map(|e| (e.event.clone(), e.auc)).collect();
            let by_ap = eval::aggregate_by_category(&ap_map, cats)?;
            let by_auc = eval::aggregate_by_category(&auc_map, cats)?;
            Some(
                by_ap
                    .into_iter()
                    .map(|(cat, map)| {
                        let mauc = by_auc[&cat];
                        (cat, CategoryResult { map, mauc })
                    })
                    .collect(),
            )
        }
        None => None,
    };
    Ok((eval::mean(&aps)?, eval::mean(&aucs)?, events, rollup))
}

fn clip_key(id: &str, path: &Path) -> String {
    let h = digest_hex(format!("{id}\0{}", path.display()).as_bytes());
    format!("{}-{}", sanitize(id), &h[..12])
}

fn with_clip<T>(id: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Clip {
        clip: id.to_string(),
        source: Box::new(e),
    })
}

/// MFCCs for every clip in manifest order. Audio is mixed to mono,
/// resampled to 44.1 kHz and zero-padded to at least one window.
pub fn clip_mfccs(manifest: &Manifest, cfg: &ExperimentConfig) -> Result<Vec<MfccMatrix>> {
    let extractor = MfccExtractor::new(cfg.mfcc.clone())?;
    let digest = cfg.mfcc.digest();
    let cache = cfg
        .resolved_cache_dir()
        .map(|d| d.join("mfcc").join(&digest[..16]));
    manifest
        .rows()
        .par_iter()
        .map(|row| {
            with_clip(&row.clip_id, (|| {
                let cached = cache
                    .as_ref()
                    .map(|d| d.join(format!("{}.mfcc", clip_key(&row.clip_id, &row.path))));
                if let Some(p) = &cached {
                    if let Some(m) = MfccMatrix::read_cache(p, &digest)? {
                        return Ok(m);
                    }
                }
                let mut wave = load_clip(&row.path)?.canonicalize();
                wave.pad_to(cfg.mfcc.win_len());
                let m = extractor.extract(&wave)?;
                if let Some(p) = &cached {
                    m.write_cache(p, &digest)?;
                }
                Ok(m)
            })())
        })
        .collect()
}

/// Background GMM for one rotation, trained on every clip outside `fold`.
pub fn train_fold_gmm(
    manifest: &Manifest,
    mfccs: &[MfccMatrix],
    cfg: &ExperimentConfig,
    fold: u8,
) -> Result<DiagGmm> {
    let train: Vec<usize> = (0..manifest.len())
        .filter(|&i| manifest.rows()[i].fold != fold)
        .collect();
    let gcfg = cfg.gmm_config(fold);
    let cache = cfg.resolved_cache_dir().map(|d| {
        let ids: Vec<&str> = train.iter().map(|&i| manifest.rows()[i].clip_id.as_str()).collect();
        let key = digest_hex(
            format!(
                "{}\n{}\n{}",
                cfg.mfcc.digest(),
                serde_json::to_string(&gcfg).expect("config serializes"),
                ids.join("\n")
            )
            .as_bytes(),
        );
        d.join("gmm").join(format!("{}.gmm", &key[..32]))
    });
    if let Some(p) = &cache {
        if p.exists() {
            return DiagGmm::load(p);
        }
    }
    let frames = MfccMatrix::concat(train.iter().map(|&i| &mfccs[i]))?;
    let g = train_gmm(&frames, &gcfg)?;
    if let Some(p) = &cache {
        g.save(p)?;
    }
    Ok(g)
}

/// Features of every clip under one background model.
pub fn clip_features(
    manifest: &Manifest,
    mfccs: &[MfccMatrix],
    gmm: &DiagGmm,
    cfg: &ExperimentConfig,
) -> Result<Vec<FeatureVector>> {
    let cache = cfg.resolved_cache_dir().map(|d| {
        let key = digest_hex(
            format!(
                "{}\n{}\n{}\n{:?}\n{}",
                gmm.digest(),
                cfg.variant,
                cfg.relevance,
                cfg.second_block,
                cfg.mfcc.digest()
            )
            .as_bytes(),
        );
        d.join("features").join(&key[..32])
    });
    manifest
        .rows()
        .par_iter()
        .zip(mfccs)
        .map(|(row, m)| {
            with_clip(&row.clip_id, (|| {
                let cached = cache
                    .as_ref()
                    .map(|d| d.join(format!("{}.feat", clip_key(&row.clip_id, &row.path))));
                if let Some(p) = &cached {
                    if let Some(f) = FeatureVector::read_cache(p)? {
                        if f.variant == cfg.variant && f.n_components == cfg.n_components {
                            return Ok(f);
                        }
                    }
                }
                let f = clip_feature(gmm, m, cfg.variant, cfg.relevance, cfg.second_block)?;
                if let Some(p) = &cached {
                    f.write_cache(p)?;
                }
                Ok(f)
            })())
        })
        .collect()
}

struct FoldOutput {
    /// `(event index, clip index, score)`.
    scores: Vec<(usize, usize, f64)>,
    selections: Vec<Selection>,
}

fn stage<T>(fold: u8, event: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        fold,
        event: event.to_string(),
        source: Box::new(e),
    })
}

fn run_fold(
    manifest: &Manifest,
    mfccs: &[MfccMatrix],
    cfg: &ExperimentConfig,
    events: &[String],
    fold: u8,
    observer: &dyn LineageObserver,
) -> Result<FoldOutput> {
    let rows = manifest.rows();
    let (test, train): (Vec<usize>, Vec<usize>) = (0..rows.len()).partition(|&i| rows[i].fold == fold);
    let ids = |idx: &[usize]| -> Vec<String> { idx.iter().map(|&i| rows[i].clip_id.clone()).collect() };
    let train_ids = ids(&train);
    let test_ids = ids(&test);
    let train_labels: Vec<String> = train.iter().map(|&i| rows[i].label.clone()).collect();

    observer.record(fold, LineageStage::GmmTraining, &train_ids);
    let gmm = stage(fold, "", train_fold_gmm(manifest, mfccs, cfg, fold))?;
    let features = stage(fold, "", clip_features(manifest, mfccs, &gmm, cfg))?;
    let pick = |idx: &[usize]| -> Result<Array2<f64>> {
        stack(&idx.iter().map(|&i| features[i].clone()).collect::<Vec<_>>())
    };
    let x_train = stage(fold, "", pick(&train))?;
    let x_test = stage(fold, "", pick(&test))?;
    observer.record(fold, LineageStage::Scoring, &test_ids);

    let per_event = events
        .par_iter()
        .enumerate()
        .map(|(e, event)| {
            stage(fold, event, (|| {
                observer.record(fold, LineageStage::Detector { event: event.clone() }, &train_ids);
                let det = DetectorConfig {
                    grid: cfg.grid.clone(),
                    seed: cfg.detector_seed(fold, e),
                };
                let model = train_event_detector(
                    event,
                    &train_ids,
                    &train_labels,
                    x_train.view(),
                    cfg.variant,
                    cfg.kernel,
                    &det,
                )?;
                let scores = model.score(x_test.view())?;
                Ok((
                    Selection {
                        fold,
                        event: event.clone(),
                        c: model.c,
                        gamma: if cfg.kernel.uses_gamma() { model.kernel.gamma } else { 0.0 },
                    },
                    scores,
                ))
            })())
        })
        .collect::<Result<Vec<_>>>()?;

    let mut out = FoldOutput {
        scores: Vec::new(),
        selections: Vec::new(),
    };
    for (e, (sel, scores)) in per_event.into_iter().enumerate() {
        out.selections.push(sel);
        out.scores.extend(test.iter().zip(scores).map(|(&i, s)| (e, i, s)));
    }
    Ok(out)
}

pub fn run_experiment(manifest: &Manifest, cfg: &ExperimentConfig) -> Result<ResultsBundle> {
    run_experiment_observed(manifest, cfg, &NoLineage)
}

/// Run all ten rotations. Every clip is scored exactly once per event, by
/// the detector of the rotation that holds its fold out.
pub fn run_experiment_observed(
    manifest: &Manifest,
    cfg: &ExperimentConfig,
    observer: &dyn LineageObserver,
) -> Result<ResultsBundle> {
    cfg.validate()?;
    let mfccs = clip_mfccs(manifest, cfg)?;
    let events = manifest.events();
    let folds: Vec<u8> = (1..=FOLD_COUNT as u8).collect();
    let outputs = folds
        .par_iter()
        .map(|&f| run_fold(manifest, &mfccs, cfg, &events, f, observer))
        .collect::<Result<Vec<_>>>()?;

    let n = manifest.len();
    let mut table = vec![vec![f64::NAN; n]; events.len()];
    let mut selections = Vec::new();
    for out in outputs {
        for (e, i, s) in out.scores {
            table[e][i] = s;
        }
        selections.extend(out.selections);
    }
    let ids = manifest.clip_ids();
    let scores = events
        .iter()
        .zip(&table)
        .map(|(event, col)| {
            let positive: Vec<bool> = manifest.rows().iter().map(|r| &r.label == event).collect();
            ScoredSet::from_parts(event.clone(), &ids, col, &positive)
        })
        .collect::<Result<Vec<_>>>()?;

    let categories = manifest.category_map()?;
    let (map, mauc, event_results, rollup) = summarize(&scores, categories.as_ref())?;

    let mut config = cfg.clone();
    config.cache_dir = None;
    Ok(ResultsBundle {
        metadata: Metadata {
            config_digest: cfg.digest(),
            manifest_digest: manifest.digest(),
            seed: cfg.seed,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            auc_axes: "linear".into(),
            n_clips: n,
        },
        config,
        map,
        mauc,
        events: event_results,
        categories: rollup,
        selections,
        scores,
    })
}

/// Default location for a bundle under a results directory.
pub fn bundle_path(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    dir.join(format!(
        "{}_{}_M{}.json",
        cfg.variant, cfg.kernel, cfg.n_components
    ))
}
