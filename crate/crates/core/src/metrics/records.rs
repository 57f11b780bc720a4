//! Turning prediction files plus ground truth into metric inputs.

use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::ranking::{recall_at_k, verb_accuracy_with_constraint, with_constraint_triplets, FrameTriplets, PairPrediction};
use super::report::MetricReport;
use super::srv::{apply_top1_gating, srv_metrics, SrvOptions, SrvRecord};
use crate::error::{Result, SsgError};
use crate::incomnet::{FramePrediction, PredictionFile, RelationPrediction, RolePrediction};
use crate::schema::{EntityKind, FrameStructure, SsgAnnotation};

/// Evaluation setting for verb SRVs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSetting {
    /// Verb SRVs count only when the predicted predicate is right.
    Top1,
    /// Annotated predicate given; roles scored directly.
    Gt,
}

impl std::str::FromStr for EvalSetting {
    type Err = SsgError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "top1" => Ok(EvalSetting::Top1),
            "gt" => Ok(EvalSetting::Gt),
            other => Err(SsgError::Config(format!("unknown setting '{other}' (top1|gt)"))),
        }
    }
}

fn record(
    kind: EntityKind,
    class: &str,
    roles: &[String],
    gt: &IndexMap<String, String>,
    unsure: &[String],
    predicted: Option<&[RolePrediction]>,
) -> SrvRecord {
    let lookup = |role: &str| {
        predicted
            .and_then(|p| p.iter().find(|r| r.role == role))
            .map(|r| r.value.clone())
    };
    SrvRecord {
        kind,
        class: class.to_string(),
        roles: roles.to_vec(),
        predicted: roles.iter().map(|r| lookup(r)).collect(),
        gt: roles.iter().map(|r| gt.get(r).cloned().unwrap_or_default()).collect(),
        // roles without an annotated value are treated like unsure ones
        unsure: roles
            .iter()
            .map(|r| unsure.contains(r) || !gt.contains_key(r))
            .collect(),
    }
}

/// SRV records of a prediction file against ground truth.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRecords {
    pub person: Vec<SrvRecord>,
    pub objects: Vec<SrvRecord>,
    /// Verb records with the annotated predicate's roles given.
    pub verbs_gt: Vec<SrvRecord>,
    /// Verb records taken from the predicted predicate's roles.
    pub verbs_predicted: Vec<SrvRecord>,
    pub verb_correct: Vec<bool>,
    pub pairs: Vec<PairPrediction>,
    pub triplets: Vec<FrameTriplets>,
}

fn match_relation<'a>(pred: Option<&'a FramePrediction>, idx: usize, object_id: &str) -> Option<&'a RelationPrediction> {
    let pred = pred?;
    match pred.relations.get(idx) {
        Some(r) if r.object_instance_id == object_id => Some(r),
        _ => None,
    }
}

/// Aligns predictions with annotations by `(video_id, frame_id)`, object
/// instance id and relation order. Missing predictions become wrong answers.
/// Predictions made under another schema are rejected.
pub fn build_records(preds: &PredictionFile, gts: &[SsgAnnotation], schema: &FrameStructure) -> Result<EvalRecords> {
    if preds.schema_hash != schema.hash() {
        return Err(SsgError::SchemaHashMismatch {
            artifact: preds.schema_hash.clone(),
            schema: schema.hash().to_string(),
        });
    }
    let index: BTreeMap<(&str, &str), &FramePrediction> = preds
        .frames
        .iter()
        .map(|f| ((f.video_id.as_str(), f.frame_id.as_str()), f))
        .collect();
    let mut out = EvalRecords::default();
    for ann in gts {
        let pred = index.get(&(ann.video_id.as_str(), ann.frame_id.as_str())).copied();
        out.person.push(record(
            EntityKind::Person,
            "person",
            schema.person_roles(),
            &ann.person.srv,
            &ann.person.unsure,
            pred.map(|p| p.person.as_slice()),
        ));
        for o in &ann.objects {
            let c = schema
                .category_index(&o.category)
                .ok_or_else(|| SsgError::Misaligned(format!("unknown category '{}'", o.category)))?;
            let po = pred.and_then(|p| p.objects.iter().find(|x| x.instance_id == o.instance_id));
            out.objects.push(record(
                EntityKind::Object,
                &o.category,
                schema.object_roles(c),
                &o.srv,
                &o.unsure,
                po.map(|x| x.roles.as_slice()),
            ));
        }

        let mut pair_gt: IndexMap<&str, (Option<&RelationPrediction>, Vec<usize>)> = IndexMap::new();
        for (i, rel) in ann.relations.iter().enumerate() {
            let p = schema
                .predicate_index(&rel.predicate)
                .ok_or_else(|| SsgError::Misaligned(format!("unknown predicate '{}'", rel.predicate)))?;
            let pr = match_relation(pred, i, &rel.object_instance_id);
            let correct = pr.is_some_and(|r| r.predicate == rel.predicate);
            let roles = schema.verb_roles(p);
            let given_gt = pr.and_then(|r| match &r.roles_given_gt {
                Some(v) => Some(v.as_slice()),
                None if r.predicate == rel.predicate => Some(r.roles.as_slice()),
                None => None,
            });
            out.verbs_gt.push(record(EntityKind::Verb, &rel.predicate, roles, &rel.srv, &rel.unsure, given_gt));
            out.verbs_predicted.push(record(
                EntityKind::Verb,
                &rel.predicate,
                roles,
                &rel.srv,
                &rel.unsure,
                pr.map(|r| r.roles.as_slice()),
            ));
            out.verb_correct.push(correct);
            let entry = pair_gt.entry(rel.object_instance_id.as_str()).or_insert((pr, Vec::new()));
            if entry.0.is_none() {
                entry.0 = pr;
            }
            entry.1.push(p);
        }

        let mut frame = FrameTriplets {
            scored: Vec::new(),
            gt: Vec::new(),
        };
        let mut scored_pairs = Vec::new();
        for (k, (_, (pr, gt))) in pair_gt.into_iter().enumerate() {
            let scores = pr.map(|r| r.predicate_logits.clone()).unwrap_or_default();
            if scores.is_empty() {
                // a missing prediction is scored as an arbitrary wrong class
                out.pairs.push(PairPrediction {
                    scores: (0..schema.verb_predicates().len())
                        .map(|c| if gt.contains(&c) { 0.0 } else { 1.0 })
                        .collect(),
                    gt: gt.clone(),
                });
            } else {
                out.pairs.push(PairPrediction {
                    scores: scores.clone(),
                    gt: gt.clone(),
                });
                scored_pairs.push((k, scores));
            }
            frame.gt.extend(gt.iter().map(|&p| (k, p)));
        }
        frame.scored = with_constraint_triplets(&scored_pairs);
        out.triplets.push(frame);
    }
    Ok(out)
}

/// Full evaluation report of a prediction file.
pub fn evaluate(
    preds: &PredictionFile,
    gts: &[SsgAnnotation],
    schema: &FrameStructure,
    setting: EvalSetting,
    opts: SrvOptions,
) -> Result<MetricReport> {
    if gts.is_empty() {
        return Err(SsgError::EmptyDataset);
    }
    let recs = build_records(preds, gts, schema)?;
    let mut report = MetricReport::default();
    report.absorb("person", srv_metrics(&recs.person, opts)?);
    if !recs.objects.is_empty() {
        report.absorb("object", srv_metrics(&recs.objects, opts)?);
    }
    if !recs.verb_correct.is_empty() {
        let verbs = match setting {
            EvalSetting::Gt => recs.verbs_gt.clone(),
            EvalSetting::Top1 => apply_top1_gating(&recs.verbs_predicted, &recs.verb_correct)?,
        };
        report.absorb("verb_srv", srv_metrics(&verbs, opts)?);
        let hits = recs.verb_correct.iter().filter(|&&c| c).count();
        report
            .metrics
            .insert("verb.top1_accuracy".into(), hits as f64 / recs.verb_correct.len() as f64);
        report.counts.insert("verb.relations".into(), recs.verb_correct.len());
        report
            .metrics
            .insert("verb.with_constraint_accuracy".into(), verb_accuracy_with_constraint(&recs.pairs)?);
        report.counts.insert("verb.pairs".into(), recs.pairs.len());
        for k in [10, 20, 50] {
            let r = recall_at_k(&recs.triplets, k)?;
            report.metrics.insert(format!("verb.recall@{k}"), r.recall);
            report.counts.insert(format!("verb.recall@{k}.frames"), r.frames);
        }
    }
    report.counts.insert("frames".into(), gts.len());
    Ok(report)
}
