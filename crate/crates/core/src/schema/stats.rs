use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::SsgAnnotation;
use crate::error::{Result, SsgError};

/// Dataset-level counts and per-frame averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub frame_count: usize,
    pub video_count: usize,
    pub total_objects: usize,
    pub total_relations: usize,
    pub total_object_srv_pairs: usize,
    pub total_verb_srv_pairs: usize,
    pub total_person_srv_pairs: usize,
    pub total_actions: usize,
    pub objects_per_frame: f64,
    pub relations_per_frame: f64,
    pub object_srv_pairs_per_frame: f64,
    pub verb_srv_pairs_per_frame: f64,
    pub person_srv_pairs_per_frame: f64,
    pub actions_per_frame: f64,
    /// Relations divided by objects; 0 when there are no objects.
    pub relations_per_object: f64,
    pub category_histogram: BTreeMap<String, usize>,
    pub predicate_histogram: BTreeMap<String, usize>,
    /// Keyed by `entity/role=value`.
    pub role_value_histogram: BTreeMap<String, usize>,
}

pub fn dataset_stats(dataset: &[SsgAnnotation]) -> Result<StatsReport> {
    if dataset.is_empty() {
        return Err(SsgError::EmptyDataset);
    }
    let mut category_histogram = BTreeMap::new();
    let mut predicate_histogram = BTreeMap::new();
    let mut role_value_histogram = BTreeMap::new();
    let (mut objects, mut relations, mut obj_pairs, mut verb_pairs, mut person_pairs, mut actions) =
        (0usize, 0usize, 0usize, 0usize, 0usize, 0usize);
    let mut videos = std::collections::BTreeSet::new();

    let mut bump = |entity: &str, role: &str, value: &str| {
        *role_value_histogram
            .entry(format!("{entity}/{role}={value}"))
            .or_insert(0usize) += 1;
    };

    for ann in dataset {
        videos.insert(ann.video_id.as_str());
        objects += ann.objects.len();
        relations += ann.relations.len();
        actions += ann.actions.len();
        person_pairs += ann.person.srv.len();
        for (r, v) in &ann.person.srv {
            bump("person", r, v);
        }
        for o in &ann.objects {
            *category_histogram.entry(o.category.clone()).or_insert(0) += 1;
            obj_pairs += o.srv.len();
            for (r, v) in &o.srv {
                bump("object", r, v);
            }
        }
        for rel in &ann.relations {
            *predicate_histogram.entry(rel.predicate.clone()).or_insert(0) += 1;
            verb_pairs += rel.srv.len();
            for (r, v) in &rel.srv {
                bump("verb", r, v);
            }
        }
    }

    let n = dataset.len() as f64;
    Ok(StatsReport {
        frame_count: dataset.len(),
        video_count: videos.len(),
        total_objects: objects,
        total_relations: relations,
        total_object_srv_pairs: obj_pairs,
        total_verb_srv_pairs: verb_pairs,
        total_person_srv_pairs: person_pairs,
        total_actions: actions,
        objects_per_frame: objects as f64 / n,
        relations_per_frame: relations as f64 / n,
        object_srv_pairs_per_frame: obj_pairs as f64 / n,
        verb_srv_pairs_per_frame: verb_pairs as f64 / n,
        person_srv_pairs_per_frame: person_pairs as f64 / n,
        actions_per_frame: actions as f64 / n,
        relations_per_object: if objects == 0 { 0.0 } else { relations as f64 / objects as f64 },
        category_histogram,
        predicate_histogram,
        role_value_histogram,
    })
}

impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "frames={}", self.frame_count)?;
        writeln!(f, "videos={}", self.video_count)?;
        writeln!(f, "objects_per_frame={:.6}", self.objects_per_frame)?;
        writeln!(f, "relations_per_frame={:.6}", self.relations_per_frame)?;
        writeln!(f, "relations_per_object={:.6}", self.relations_per_object)?;
        writeln!(f, "object_srv_pairs_per_frame={:.6}", self.object_srv_pairs_per_frame)?;
        writeln!(f, "verb_srv_pairs_per_frame={:.6}", self.verb_srv_pairs_per_frame)?;
        writeln!(f, "person_srv_pairs_per_frame={:.6}", self.person_srv_pairs_per_frame)?;
        writeln!(f, "actions_per_frame={:.6}", self.actions_per_frame)?;
        writeln!(f, "\n[categories]")?;
        for (k, v) in &self.category_histogram {
            writeln!(f, "{k}\t{v}")?;
        }
        writeln!(f, "\n[predicates]")?;
        for (k, v) in &self.predicate_histogram {
            writeln!(f, "{k}\t{v}")?;
        }
        writeln!(f, "\n[role_values]")?;
        for (k, v) in &self.role_value_histogram {
            writeln!(f, "{k}\t{v}")?;
        }
        Ok(())
    }
}
