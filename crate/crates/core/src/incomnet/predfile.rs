//! Prediction file: per-frame decoded values and logits, JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::SsgPrediction;
use crate::error::{Result, SsgError};
use crate::nn::{argmax, Matrix};
use crate::schema::{EntityKind, FrameStructure, SsgAnnotation};

pub const PREDICTION_FORMAT: &str = "ssg-predictions";
pub const PREDICTION_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolePrediction {
    pub role: String,
    pub value: String,
    /// Logits over the entity type's value vocabulary.
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectPrediction {
    pub instance_id: String,
    pub category: String,
    pub roles: Vec<RolePrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationPrediction {
    pub object_instance_id: String,
    pub predicate: String,
    pub predicate_logits: Vec<f64>,
    /// Roles of the predicted predicate.
    pub roles: Vec<RolePrediction>,
    /// Roles of the annotated predicate, when one was given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roles_given_gt: Option<Vec<RolePrediction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub video_id: String,
    pub frame_id: String,
    pub person: Vec<RolePrediction>,
    pub objects: Vec<ObjectPrediction>,
    pub relations: Vec<RelationPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionFile {
    pub format: String,
    pub version: u32,
    pub schema_hash: String,
    pub iterations: usize,
    /// Values were decoded within each role's own candidate set.
    pub restricted: bool,
    pub frames: Vec<FramePrediction>,
}

/// Decodes the first `roles.len()` rows of `logits`.
pub fn decode_roles(
    schema: &FrameStructure,
    kind: EntityKind,
    roles: &[String],
    logits: &Matrix,
    restrict: bool,
) -> Vec<RolePrediction> {
    let vocab = schema.vocab(kind);
    roles
        .iter()
        .enumerate()
        .map(|(j, role)| {
            let row = logits.row(j);
            let idx = if restrict {
                let candidates: Vec<usize> = schema
                    .role_values(role)
                    .iter()
                    .filter_map(|v| vocab.index_of(v))
                    .collect();
                let scores: Vec<f64> = candidates.iter().map(|&i| row[i]).collect();
                candidates[argmax(&scores)]
            } else {
                argmax(row)
            };
            RolePrediction {
                role: role.clone(),
                value: vocab.value(idx).to_string(),
                logits: row.to_vec(),
            }
        })
        .collect()
}

impl FramePrediction {
    pub fn build(ann: &SsgAnnotation, schema: &FrameStructure, pred: &SsgPrediction, restrict: bool) -> Result<Self> {
        let last = pred.last();
        if last.object_logits.len() != ann.objects.len() || last.verb_logits.len() != ann.relations.len() {
            return Err(SsgError::Misaligned(format!("frame {}: prediction/annotation size", ann.frame_id)));
        }
        let objects = ann
            .objects
            .iter()
            .zip(&last.object_logits)
            .map(|(o, l)| {
                let c = schema
                    .category_index(&o.category)
                    .ok_or_else(|| SsgError::Misaligned(format!("unknown category '{}'", o.category)))?;
                Ok(ObjectPrediction {
                    instance_id: o.instance_id.clone(),
                    category: o.category.clone(),
                    roles: decode_roles(schema, EntityKind::Object, schema.object_roles(c), l, restrict),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut relations = Vec::with_capacity(ann.relations.len());
        for (r, rel) in ann.relations.iter().enumerate() {
            let p = last.role_predicates[r];
            let roles_given_gt = match (schema.predicate_index(&rel.predicate), &pred.gt_role_logits.get(r)) {
                (Some(g), Some(Some(l))) => Some(decode_roles(schema, EntityKind::Verb, schema.verb_roles(g), l, restrict)),
                _ => None,
            };
            relations.push(RelationPrediction {
                object_instance_id: rel.object_instance_id.clone(),
                predicate: schema.verb_predicates()[argmax(&last.verb_logits[r])].clone(),
                predicate_logits: last.verb_logits[r].clone(),
                roles: decode_roles(schema, EntityKind::Verb, schema.verb_roles(p), &last.verb_role_logits[r], restrict),
                roles_given_gt,
            });
        }
        Ok(FramePrediction {
            video_id: ann.video_id.clone(),
            frame_id: ann.frame_id.clone(),
            person: decode_roles(schema, EntityKind::Person, schema.person_roles(), &pred.person_logits, restrict),
            objects,
            relations,
        })
    }
}

impl PredictionFile {
    pub fn new(schema: &FrameStructure, iterations: usize, restricted: bool, frames: Vec<FramePrediction>) -> Self {
        PredictionFile {
            format: PREDICTION_FORMAT.into(),
            version: PREDICTION_VERSION,
            schema_hash: schema.hash().to_string(),
            iterations,
            restricted,
            frames,
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: PredictionFile = serde_json::from_str(text)?;
        if file.format != PREDICTION_FORMAT || file.version != PREDICTION_VERSION {
            return Err(SsgError::Parse(format!(
                "unsupported prediction file {} v{}",
                file.format, file.version
            )));
        }
        Ok(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("predictions serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json_string()).map_err(|e| SsgError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SsgError::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Looks up a frame by `(video_id, frame_id)`.
    pub fn frame(&self, video_id: &str, frame_id: &str) -> Option<&FramePrediction> {
        self.frames
            .iter()
            .find(|f| f.video_id == video_id && f.frame_id == frame_id)
    }
}
