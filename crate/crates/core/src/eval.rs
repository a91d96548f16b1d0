//! Ranked-retrieval metrics: average precision, DET curves and their area,
//! MAP/MAUC aggregation and decision-level score fusion.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five ESC-50 semantic groups, indexed by `target / 10`.
pub const ESC50_CATEGORIES: [&str; 5] = [
    "animals",
    "natural_soundscapes",
    "non_speech_human",
    "interior_domestic",
    "exterior",
];

/// Semantic group of an ESC-50 class index in `0..50`.
pub fn esc50_category(target: u32) -> Option<&'static str> {
    ESC50_CATEGORIES.get((target / 10) as usize).copied()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredClip {
    pub clip_id: String,
    pub score: f64,
    pub positive: bool,
}

/// Detector scores for one event over a set of clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSet {
    pub event: String,
    pub clips: Vec<ScoredClip>,
}

impl ScoredSet {
    pub fn new(event: impl Into<String>, clips: Vec<ScoredClip>) -> Result<Self> {
        if clips.iter().any(|c| !c.score.is_finite()) {
            return Err(Error::NonFinite("scores"));
        }
        Ok(Self {
            event: event.into(),
            clips,
        })
    }

    pub fn from_parts(
        event: impl Into<String>,
        ids: &[String],
        scores: &[f64],
        positive: &[bool],
    ) -> Result<Self> {
        if ids.len() != scores.len() || ids.len() != positive.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: scores.len().min(positive.len()),
            });
        }
        let clips = ids
            .iter()
            .zip(scores)
            .zip(positive)
            .map(|((id, &score), &positive)| ScoredClip {
                clip_id: id.clone(),
                score,
                positive,
            })
            .collect();
        Self::new(event, clips)
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.clips.iter().map(|c| c.score).collect()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.clips.iter().map(|c| c.positive).collect()
    }

    pub fn positives(&self) -> usize {
        self.clips.iter().filter(|c| c.positive).count()
    }
}

/// Indices sorted by descending score, split into groups of equal score.
fn tie_groups(scores: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        match groups.last_mut() {
            Some(g) if scores[g[0]] == scores[i] => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Mean precision at the rank of each positive. Tied scores form one group,
/// and every positive in it takes the precision at the group's last rank.
pub fn average_precision(s: &ScoredSet) -> Result<f64> {
    average_precision_raw(&s.scores(), &s.labels())
}

pub fn average_precision_raw(scores: &[f64], positive: &[bool]) -> Result<f64> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let p = positive.iter().filter(|&&b| b).count();
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let (mut rank, mut hits, mut sum) = (0usize, 0usize, 0.0);
    for group in tie_groups(scores) {
        let group_hits = group.iter().filter(|&&i| positive[i]).count();
        rank += group.len();
        hits += group_hits;
        let precision = hits as f64 / rank as f64;
        for _ in 0..group_hits {
            sum += precision;
        }
    }
    Ok(sum / p as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetPoint {
    /// Clips with score at or above this value are accepted. `None` stands
    /// for the limit above every score.
    pub threshold: Option<f64>,
    pub false_alarm: f64,
    pub miss: f64,
    /// Accepted negatives.
    pub false_alarms: usize,
    /// Rejected positives.
    pub misses: usize,
}

/// Points ordered by increasing threshold, from (FA 1, miss 0) to
/// (FA 0, miss 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    pub positives: usize,
    pub negatives: usize,
    pub points: Vec<DetPoint>,
}

pub fn det_curve(s: &ScoredSet) -> Result<DetCurve> {
    det_curve_raw(&s.scores(), &s.labels())
}

pub fn det_curve_raw(scores: &[f64], positive: &[bool]) -> Result<DetCurve> {
    if scores.len() != positive.len() {
        return Err(Error::DimensionMismatch {
            expected: scores.len(),
            got: positive.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let p = positive.iter().filter(|&&b| b).count();
    let n = positive.len() - p;
    if p == 0 {
        return Err(Error::NoPositives);
    }
    if n == 0 {
        return Err(Error::NoNegatives);
    }

    let mut groups = tie_groups(scores);
    groups.reverse();
    // Start with everything accepted and reject one tie group per step.
    let (mut fp, mut fn_) = (n, 0usize);
    let mut points = Vec::with_capacity(groups.len() + 1);
    for group in &groups {
        points.push(DetPoint {
            threshold: Some(scores[group[0]]),
            false_alarm: fp as f64 / n as f64,
            miss: fn_ as f64 / p as f64,
            false_alarms: fp,
            misses: fn_,
        });
        for &i in group {
            if positive[i] {
                fn_ += 1;
            } else {
                fp -= 1;
            }
        }
    }
    points.push(DetPoint {
        threshold: None,
        false_alarm: 0.0,
        miss: 1.0,
        false_alarms: 0,
        misses: p,
    });
    Ok(DetCurve {
        positives: p,
        negatives: n,
        points,
    })
}

/// Trapezoidal area under miss probability against false-alarm rate, both
/// on linear axes.
pub fn det_auc(c: &DetCurve) -> Result<f64> {
    if c.points.len() < 2 {
        return Err(Error::CurveTooShort(c.points.len()));
    }
    // Twice the area in units of 1/(P N), accumulated exactly on counts.
    let twice: u128 = c
        .points
        .windows(2)
        .map(|w| {
            let dx = w[0].false_alarms.abs_diff(w[1].false_alarms) as u128;
            dx * (w[0].misses + w[1].misses) as u128
        })
        .sum();
    let scale = 2.0 * c.positives as f64 * c.negatives as f64;
    Ok((twice as f64 / scale).clamp(0.0, 1.0))
}

/// Two-column CSV (`false_alarm,miss`) for external plotting.
pub fn write_det_points(c: &DetCurve, path: &Path) -> Result<()> {
    let mut out = String::from("false_alarm,miss\n");
    for p in &c.points {
        out.push_str(&format!("{},{}\n", p.false_alarm, p.miss));
    }
    crate::cache::write_atomic(path, out.as_bytes())
}

/// Unweighted mean.
pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("aggregation group"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Per-category unweighted means of per-event values.
pub fn aggregate_by_category(
    per_event: &BTreeMap<String, f64>,
    categories: &HashMap<String, String>,
) -> Result<BTreeMap<String, f64>> {
    let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for (event, &v) in per_event {
        let cat = categories
            .get(event)
            .ok_or_else(|| Error::UnknownEvent(event.clone()))?;
        groups.entry(cat.clone()).or_default().push(v);
    }
    groups
        .into_iter()
        .map(|(cat, vals)| Ok((cat, mean(&vals)?)))
        .collect()
}

fn min_max(scores: &[f64]) -> Vec<f64> {
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    scores
        .iter()
        .map(|&s| if span > 0.0 { (s - lo) / span } else { 0.0 })
        .collect()
}

/// Per-clip mean of min-max normalized scores. Clips follow the order of
/// the first set; the others are matched by id. A constant system maps to
/// zero and so leaves the ranking of the others intact.
pub fn fuse_scores(sets: &[ScoredSet]) -> Result<ScoredSet> {
    let first = sets.first().ok_or(Error::Empty("score sets to fuse"))?;
    let mut fused = vec![0.0; first.len()];
    for set in sets {
        if set.len() != first.len() {
            return Err(Error::MismatchedScoreSets(format!(
                "{} clips vs {}",
                set.len(),
                first.len()
            )));
        }
        let index: HashMap<&str, usize> = set
            .clips
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clip_id.as_str(), i))
            .collect();
        let norm = min_max(&set.scores());
        for (acc, clip) in fused.iter_mut().zip(&first.clips) {
            let i = *index
                .get(clip.clip_id.as_str())
                .ok_or_else(|| Error::MismatchedScoreSets(format!("clip {} missing", clip.clip_id)))?;
            if set.clips[i].positive != clip.positive {
                return Err(Error::MismatchedScoreSets(format!(
                    "label of clip {} differs",
                    clip.clip_id
                )));
            }
            *acc += norm[i];
        }
    }
    let k = sets.len() as f64;
    let clips = first
        .clips
        .iter()
        .zip(fused)
        .map(|(c, s)| ScoredClip {
            clip_id: c.clip_id.clone(),
            score: s / k,
            positive: c.positive,
        })
        .collect();
    ScoredSet::new(first.event.clone(), clips)
}
