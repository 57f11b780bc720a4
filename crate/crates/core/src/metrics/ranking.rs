use std::cmp::Ordering;
use std::collections::BTreeSet;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgError};
use crate::nn::argmax;

/// Predicate scores of one person–object pair and its annotated predicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPrediction {
    pub scores: Vec<f64>,
    pub gt: Vec<usize>,
}

/// With-constraint predicate accuracy: each pair is judged by its top-1
/// predicate only (ties → lowest index).
pub fn verb_accuracy_with_constraint(pairs: &[PairPrediction]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(SsgError::Metric("no pairs".into()));
    }
    let mut correct = 0usize;
    for (i, p) in pairs.iter().enumerate() {
        if p.scores.is_empty() {
            return Err(SsgError::Metric(format!("pair {i} has no prediction")));
        }
        correct += p.gt.contains(&argmax(&p.scores)) as usize;
    }
    Ok(correct as f64 / pairs.len() as f64)
}

/// A scored ⟨person, predicate, object⟩ triplet; the person is implicit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredTriplet {
    pub object: usize,
    pub predicate: usize,
    pub score: f64,
}

/// Keeps only each pair's top-1 predicate (with-constraint ranking input).
pub fn with_constraint_triplets(pairs: &[(usize, Vec<f64>)]) -> Vec<ScoredTriplet> {
    pairs
        .iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(object, s)| {
            let predicate = argmax(s);
            ScoredTriplet {
                object: *object,
                predicate,
                score: s[predicate],
            }
        })
        .collect()
}

/// Every predicate of every pair (no-constraint ranking input).
pub fn all_triplets(pairs: &[(usize, Vec<f64>)]) -> Vec<ScoredTriplet> {
    pairs
        .iter()
        .flat_map(|(object, s)| {
            s.iter().enumerate().map(move |(predicate, &score)| ScoredTriplet {
                object: *object,
                predicate,
                score,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameTriplets {
    pub scored: Vec<ScoredTriplet>,
    /// `(object, predicate)`.
    pub gt: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallReport {
    pub recall: f64,
    pub frames: usize,
    pub skipped: usize,
}

/// Ranking order: score descending, then `(object, predicate)` ascending.
fn rank_order(a: &ScoredTriplet, b: &ScoredTriplet) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.object.cmp(&b.object))
        .then(a.predicate.cmp(&b.predicate))
}

/// Recall of one frame, or `None` without ground truth.
pub fn frame_recall(frame: &FrameTriplets, k: usize) -> Option<f64> {
    let gt: BTreeSet<(usize, usize)> = frame.gt.iter().copied().collect();
    if gt.is_empty() {
        return None;
    }
    let mut ranked = frame.scored.clone();
    ranked.sort_by(rank_order);
    let top: BTreeSet<(usize, usize)> = ranked.iter().take(k).map(|t| (t.object, t.predicate)).collect();
    Some(top.intersection(&gt).count() as f64 / gt.len() as f64)
}

/// Recall@K averaged per frame, then over frames. Frames without ground
/// truth are skipped.
pub fn recall_at_k(frames: &[FrameTriplets], k: usize) -> Result<RecallReport> {
    if k == 0 {
        return Err(SsgError::Metric("k must be positive".into()));
    }
    let mut sum = 0.0;
    let mut used = 0usize;
    for (i, f) in frames.iter().enumerate() {
        match frame_recall(f, k) {
            Some(r) => {
                sum += r;
                used += 1;
            }
            None => warn!("frame {i} has no ground-truth triplets; skipped"),
        }
    }
    if used == 0 {
        return Err(SsgError::Metric("no frame has ground-truth triplets".into()));
    }
    Ok(RecallReport {
        recall: sum / used as f64,
        frames: used,
        skipped: frames.len() - used,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub map: f64,
    /// `None` for classes without positives.
    pub per_class: Vec<Option<f64>>,
}

/// Average precision of one class. Samples are ranked by score descending,
/// ties by sample index. `None` when there are no positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(total / positives as f64)
}

/// Mean AP over classes with at least one positive. `scores[sample][class]`.
pub fn multilabel_map(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<MapReport> {
    if scores.len() != labels.len() {
        return Err(SsgError::Metric("scores and labels differ in length".into()));
    }
    let classes = scores.first().map(Vec::len).unwrap_or(0);
    if scores.iter().any(|s| s.len() != classes) || labels.iter().any(|l| l.len() != classes) {
        return Err(SsgError::Metric("ragged score or label matrix".into()));
    }
    let per_class: Vec<Option<f64>> = (0..classes)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[c]).collect();
            average_precision(&s, &l)
        })
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(SsgError::Metric("no class has a positive sample".into()));
    }
    Ok(MapReport {
        map: present.iter().sum::<f64>() / present.len() as f64,
        per_class,
    })
}
