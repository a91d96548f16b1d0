//! Result files for plotting and tabulation, and decision-level fusion of
//! finished experiments.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::{summarize, CategoryResult, EventResult, ResultsBundle};
use super::sweep::{table, Metric, SweepCell};
use crate::cache::{sanitize, write_atomic};
use crate::error::{Error, Result};
use crate::eval::{det_curve, fuse_scores, write_det_points, ScoredSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionResult {
    pub systems: Vec<String>,
    pub map: f64,
    pub mauc: f64,
    pub events: Vec<EventResult>,
    pub categories: Option<BTreeMap<String, CategoryResult>>,
    pub scores: Vec<ScoredSet>,
}

/// Average the min-max normalized scores of several systems per event.
pub fn fuse_bundles(bundles: &[ResultsBundle]) -> Result<FusionResult> {
    let first = bundles.first().ok_or(Error::Empty("bundles to fuse"))?;
    if bundles
        .iter()
        .any(|b| b.metadata.manifest_digest != first.metadata.manifest_digest)
    {
        return Err(Error::MismatchedScoreSets("bundles come from different manifests".into()));
    }
    let scores = first
        .scores
        .iter()
        .map(|s| {
            let sets = bundles
                .iter()
                .map(|b| {
                    b.event_scores(&s.event)
                        .cloned()
                        .ok_or_else(|| Error::MismatchedScoreSets(format!("event '{}' missing", s.event)))
                })
                .collect::<Result<Vec<_>>>()?;
            fuse_scores(&sets)
        })
        .collect::<Result<Vec<_>>>()?;
    let categories: Option<std::collections::HashMap<String, String>> = first
        .events
        .iter()
        .map(|e| e.category.clone().map(|c| (e.event.clone(), c)))
        .collect();
    let (map, mauc, events, rollup) = summarize(&scores, categories.as_ref())?;
    Ok(FusionResult {
        systems: bundles.iter().map(|b| b.config.label()).collect(),
        map,
        mauc,
        events,
        categories: rollup,
        scores,
    })
}

fn file_label(b: &ResultsBundle) -> String {
    sanitize(&b.config.label().replace('/', "_"))
}

fn events_csv(events: &[EventResult]) -> String {
    let mut s = String::from("event,ap,auc,category\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{:.6},{:.6},{}",
            e.event,
            e.ap,
            e.auc,
            e.category.as_deref().unwrap_or("")
        );
    }
    s
}

fn categories_csv(c: &BTreeMap<String, CategoryResult>) -> String {
    let mut s = String::from("category,map,mauc\n");
    for (cat, r) in c {
        let _ = writeln!(s, "{cat},{:.6},{:.6}", r.map, r.mauc);
    }
    s
}

/// Write, under `out_dir`:
/// - `map.csv`, `mauc.csv`: tables with rows M and feature-kernel columns
/// - `<label>/events.csv`: per-event AP and AUC
/// - `<label>/categories.csv`: category means, when categories are known
/// - `<label>/det/<event>.csv`: DET points
pub fn write_report(bundles: &[ResultsBundle], out_dir: &Path) -> Result<()> {
    let cells: Vec<SweepCell> = bundles.iter().map(SweepCell::of).collect();
    write_atomic(&out_dir.join("map.csv"), table(&cells, Metric::Map).to_csv().as_bytes())?;
    write_atomic(&out_dir.join("mauc.csv"), table(&cells, Metric::Mauc).to_csv().as_bytes())?;
    for b in bundles {
        let dir = out_dir.join(file_label(b));
        write_atomic(&dir.join("events.csv"), events_csv(&b.events).as_bytes())?;
        if let Some(c) = &b.categories {
            write_atomic(&dir.join("categories.csv"), categories_csv(c).as_bytes())?;
        }
        for s in &b.scores {
            write_det_points(&det_curve(s)?, &dir.join("det").join(format!("{}.csv", sanitize(&s.event))))?;
        }
    }
    Ok(())
}

/// Write `events.csv`, `categories.csv` and DET points for a fused system.
pub fn write_fusion(f: &FusionResult, out_dir: &Path) -> Result<()> {
    write_atomic(&out_dir.join("events.csv"), events_csv(&f.events).as_bytes())?;
    if let Some(c) = &f.categories {
        write_atomic(&out_dir.join("categories.csv"), categories_csv(c).as_bytes())?;
    }
    let summary = serde_json::to_string_pretty(f)?;
    write_atomic(&out_dir.join("fusion.json"), summary.as_bytes())?;
    for s in &f.scores {
        write_det_points(&det_curve(s)?, &out_dir.join("det").join(format!("{}.csv", sanitize(&s.event))))?;
    }
    Ok(())
}
