//! The SSG data model.
//!
//! A [`FrameStructure`] fixes, for every entity category, the ordered list of
//! semantic roles and the candidate values of each role. Role order is part of
//! the model: the i-th learnable query of an encoder always answers the i-th
//! role of whatever category is being classified.

mod annotation;
mod stats;
mod validate;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SsgError};

pub use annotation::{
    load_dataset, load_video_file, parse_video_document, write_video_document, BBox,
    ObjectAnnotation, PersonAnnotation, RelationAnnotation, SsgAnnotation, VideoDocument,
};
pub use stats::{dataset_stats, StatsReport};
pub use validate::{validate_annotation, validate_dataset, Finding, ValidationCode, ValidationReport};

/// Inclusive bounds on the number of roles any entity category may carry.
pub const MIN_ROLES: usize = 2;
pub const MAX_ROLES: usize = 7;

/// Predicate names that are rejected from `verb_predicates`.
pub const FORBIDDEN_PREDICATES: [&str; 2] = ["other relationship", "other_relationship"];

/// Literal text used for the person entity in every embedding lookup.
pub const PERSON_TEXT: &str = "person";

/// Entity kinds that carry a semantic role-value frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Person,
    Object,
    Verb,
}

impl EntityKind {
    pub const ALL: [EntityKind; 3] = [EntityKind::Person, EntityKind::Object, EntityKind::Verb];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityKind::Person => "person",
            EntityKind::Object => "object",
            EntityKind::Verb => "verb",
        }
    }
}

/// On-disk shape of a schema file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaFile {
    pub object_categories: Vec<String>,
    pub verb_predicates: Vec<String>,
    pub person_roles: Vec<String>,
    pub object_roles: BTreeMap<String, Vec<String>>,
    pub verb_roles: BTreeMap<String, Vec<String>>,
    pub value_vocab: BTreeMap<String, Vec<String>>,
}

/// Ordered value vocabulary of one entity type (union over that type's roles).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValueVocab {
    values: Vec<String>,
    index: HashMap<String, usize>,
}

impl ValueVocab {
    fn from_roles<'a>(roles: impl Iterator<Item = &'a String>, vocab: &BTreeMap<String, Vec<String>>) -> Self {
        let mut values = Vec::new();
        let mut index = HashMap::new();
        for role in roles {
            for v in vocab.get(role).into_iter().flatten() {
                if !index.contains_key(v) {
                    index.insert(v.clone(), values.len());
                    values.push(v.clone());
                }
            }
        }
        ValueVocab { values, index }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.index.get(value).copied()
    }

    pub fn value(&self, idx: usize) -> &str {
        &self.values[idx]
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }
}

/// The loaded, validated frame structure.
///
/// Immutable after construction; all lookups are index based.
#[derive(Debug, Clone)]
pub struct FrameStructure {
    raw: SchemaFile,
    category_index: HashMap<String, usize>,
    predicate_index: HashMap<String, usize>,
    object_roles: Vec<Vec<String>>,
    verb_roles: Vec<Vec<String>>,
    object_vocab: ValueVocab,
    verb_vocab: ValueVocab,
    person_vocab: ValueVocab,
    all_values: Vec<String>,
    hash: String,
}

fn check_role_list(entity: &str, roles: &[String]) -> Result<()> {
    if roles.len() < MIN_ROLES || roles.len() > MAX_ROLES {
        return Err(SsgError::RoleCountOutOfRange {
            entity: entity.to_string(),
            count: roles.len(),
            min: MIN_ROLES,
            max: MAX_ROLES,
        });
    }
    let mut seen = HashSet::new();
    for r in roles {
        if !seen.insert(r.as_str()) {
            return Err(SsgError::DuplicateRole {
                entity: entity.to_string(),
                role: r.clone(),
            });
        }
    }
    Ok(())
}

fn unique_index(kind: &str, names: &[String]) -> Result<HashMap<String, usize>> {
    let mut index = HashMap::new();
    for (i, n) in names.iter().enumerate() {
        if index.insert(n.clone(), i).is_some() {
            return Err(SsgError::Schema(format!("duplicate {kind} '{n}'")));
        }
    }
    Ok(index)
}

impl FrameStructure {
    pub fn from_schema_file(raw: SchemaFile) -> Result<Self> {
        if raw.object_categories.is_empty() {
            return Err(SsgError::Schema("no object categories".into()));
        }
        if raw.verb_predicates.is_empty() {
            return Err(SsgError::Schema("no verb predicates".into()));
        }
        for p in &raw.verb_predicates {
            if FORBIDDEN_PREDICATES.contains(&p.as_str()) {
                return Err(SsgError::ForbiddenPredicate(p.clone()));
            }
        }
        let category_index = unique_index("object category", &raw.object_categories)?;
        let predicate_index = unique_index("verb predicate", &raw.verb_predicates)?;

        check_role_list(PERSON_TEXT, &raw.person_roles)?;
        let mut object_roles = Vec::with_capacity(raw.object_categories.len());
        for c in &raw.object_categories {
            let roles = raw
                .object_roles
                .get(c)
                .ok_or_else(|| SsgError::Schema(format!("object category '{c}' has no role list")))?;
            check_role_list(c, roles)?;
            object_roles.push(roles.clone());
        }
        let mut verb_roles = Vec::with_capacity(raw.verb_predicates.len());
        for p in &raw.verb_predicates {
            let roles = raw
                .verb_roles
                .get(p)
                .ok_or_else(|| SsgError::Schema(format!("verb predicate '{p}' has no role list")))?;
            check_role_list(p, roles)?;
            verb_roles.push(roles.clone());
        }
        for k in raw.object_roles.keys() {
            if !category_index.contains_key(k) {
                return Err(SsgError::Schema(format!("role list for unknown object category '{k}'")));
            }
        }
        for k in raw.verb_roles.keys() {
            if !predicate_index.contains_key(k) {
                return Err(SsgError::Schema(format!("role list for unknown verb predicate '{k}'")));
            }
        }
        let every_role = raw
            .person_roles
            .iter()
            .chain(object_roles.iter().flatten())
            .chain(verb_roles.iter().flatten());
        for role in every_role {
            match raw.value_vocab.get(role) {
                None => return Err(SsgError::Schema(format!("role '{role}' has no value vocabulary"))),
                Some(vs) if vs.is_empty() => {
                    return Err(SsgError::Schema(format!("role '{role}' has an empty value vocabulary")))
                }
                Some(vs) => {
                    let mut seen = HashSet::new();
                    if let Some(dup) = vs.iter().find(|v| !seen.insert(v.as_str())) {
                        return Err(SsgError::Schema(format!("duplicate value '{dup}' for role '{role}'")));
                    }
                }
            }
        }

        let object_vocab = ValueVocab::from_roles(object_roles.iter().flatten(), &raw.value_vocab);
        let verb_vocab = ValueVocab::from_roles(verb_roles.iter().flatten(), &raw.value_vocab);
        let person_vocab = ValueVocab::from_roles(raw.person_roles.iter(), &raw.value_vocab);
        let mut all_values: Vec<String> = raw.value_vocab.values().flatten().cloned().collect();
        all_values.sort();
        all_values.dedup();

        let canonical = serde_json::to_vec(&raw)?;
        let hash = Sha256::digest(&canonical)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect::<String>();

        Ok(FrameStructure {
            raw,
            category_index,
            predicate_index,
            object_roles,
            verb_roles,
            object_vocab,
            verb_vocab,
            person_vocab,
            all_values,
            hash,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: SchemaFile = serde_json::from_str(text)?;
        Self::from_schema_file(raw)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.raw).expect("schema serializes")
    }

    pub fn schema_file(&self) -> &SchemaFile {
        &self.raw
    }

    pub fn object_categories(&self) -> &[String] {
        &self.raw.object_categories
    }

    pub fn verb_predicates(&self) -> &[String] {
        &self.raw.verb_predicates
    }

    pub fn person_roles(&self) -> &[String] {
        &self.raw.person_roles
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.category_index.get(name).copied()
    }

    pub fn predicate_index(&self, name: &str) -> Option<usize> {
        self.predicate_index.get(name).copied()
    }

    /// Role list of object category `category` (by index).
    pub fn object_roles(&self, category: usize) -> &[String] {
        &self.object_roles[category]
    }

    /// Role list of verb predicate `predicate` (by index).
    pub fn verb_roles(&self, predicate: usize) -> &[String] {
        &self.verb_roles[predicate]
    }

    pub fn roles_of(&self, kind: EntityKind, class: usize) -> &[String] {
        match kind {
            EntityKind::Person => self.person_roles(),
            EntityKind::Object => self.object_roles(class),
            EntityKind::Verb => self.verb_roles(class),
        }
    }

    /// Candidate values of a role.
    pub fn role_values(&self, role: &str) -> &[String] {
        self.raw.value_vocab.get(role).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn vocab(&self, kind: EntityKind) -> &ValueVocab {
        match kind {
            EntityKind::Person => &self.person_vocab,
            EntityKind::Object => &self.object_vocab,
            EntityKind::Verb => &self.verb_vocab,
        }
    }

    /// Global distinct-value set.
    pub fn all_values(&self) -> &[String] {
        &self.all_values
    }

    /// Maximum object role count (queries of the object SRV encoder).
    pub fn max_object_roles(&self) -> usize {
        self.object_roles.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Maximum verb role count (queries of the verb SRV encoder).
    pub fn max_verb_roles(&self) -> usize {
        self.verb_roles.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// Person role count (queries of the person SRV encoder).
    pub fn person_role_count(&self) -> usize {
        self.raw.person_roles.len()
    }

    pub fn distinct_object_roles(&self) -> usize {
        self.object_roles.iter().flatten().collect::<HashSet<_>>().len()
    }

    pub fn distinct_verb_roles(&self) -> usize {
        self.verb_roles.iter().flatten().collect::<HashSet<_>>().len()
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded.
    pub fn hash(&self) -> &str {
        &self.hash
    }
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<FrameStructure> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SsgError::io(path, e))?;
    FrameStructure::from_json_str(&text)
}
