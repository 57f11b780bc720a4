use std::collections::{BTreeMap, HashSet};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{BBox, FrameStructure, SsgAnnotation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ValidationCode {
    DanglingRelation,
    IncompleteFrame,
    UnknownCategory,
    UnknownPredicate,
    UnknownRole,
    UnknownValue,
    InvalidBbox,
    BboxOutOfBounds,
    DuplicateInstance,
    UnsureWithValue,
    NoActions,
}

impl ValidationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ValidationCode::DanglingRelation => "DANGLING_RELATION",
            ValidationCode::IncompleteFrame => "INCOMPLETE_FRAME",
            ValidationCode::UnknownCategory => "UNKNOWN_CATEGORY",
            ValidationCode::UnknownPredicate => "UNKNOWN_PREDICATE",
            ValidationCode::UnknownRole => "UNKNOWN_ROLE",
            ValidationCode::UnknownValue => "UNKNOWN_VALUE",
            ValidationCode::InvalidBbox => "INVALID_BBOX",
            ValidationCode::BboxOutOfBounds => "BBOX_OUT_OF_BOUNDS",
            ValidationCode::DuplicateInstance => "DUPLICATE_INSTANCE",
            ValidationCode::UnsureWithValue => "UNSURE_WITH_VALUE",
            ValidationCode::NoActions => "NO_ACTIONS",
        }
    }
}

impl fmt::Display for ValidationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub frame_id: String,
    pub code: ValidationCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub errors: Vec<Finding>,
    pub warnings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_accepted(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<ValidationCode, usize> {
        let mut out = BTreeMap::new();
        for f in self.errors.iter().chain(&self.warnings) {
            *out.entry(f.code).or_insert(0) += 1;
        }
        out
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.errors.extend(other.errors);
        self.warnings.extend(other.warnings);
    }

    pub fn has_error(&self, code: ValidationCode) -> bool {
        self.errors.iter().any(|f| f.code == code)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "errors={}", self.errors.len())?;
        writeln!(f, "warnings={}", self.warnings.len())?;
        for (code, n) in self.counts() {
            writeln!(f, "count.{code}={n}")?;
        }
        for e in &self.errors {
            writeln!(f, "error\t{}\t{}\t{}", e.frame_id, e.code, e.message)?;
        }
        for w in &self.warnings {
            writeln!(f, "warning\t{}\t{}\t{}", w.frame_id, w.code, w.message)?;
        }
        Ok(())
    }
}

struct Checker<'a> {
    schema: &'a FrameStructure,
    frame_id: &'a str,
    report: ValidationReport,
}

impl Checker<'_> {
    fn error(&mut self, code: ValidationCode, message: String) {
        self.report.errors.push(Finding {
            frame_id: self.frame_id.to_string(),
            code,
            message,
        });
    }

    fn warn(&mut self, code: ValidationCode, message: String) {
        self.report.warnings.push(Finding {
            frame_id: self.frame_id.to_string(),
            code,
            message,
        });
    }

    fn bbox(&mut self, what: &str, b: &BBox, image_size: Option<[u32; 2]>) {
        if b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 {
            self.error(ValidationCode::InvalidBbox, format!("{what}: bbox {:?}", <[i64; 4]>::from(*b)));
            return;
        }
        if let Some([w, h]) = image_size {
            if b.right() > i64::from(w) || b.bottom() > i64::from(h) {
                self.error(
                    ValidationCode::BboxOutOfBounds,
                    format!("{what}: bbox {:?} exceeds image {w}x{h}", <[i64; 4]>::from(*b)),
                );
            }
        }
    }

    fn srv(&mut self, what: &str, roles: &[String], srv: &IndexMap<String, String>, unsure: &[String]) {
        let unsure: HashSet<&str> = unsure.iter().map(String::as_str).collect();
        for u in &unsure {
            if !roles.iter().any(|r| r == u) {
                self.error(ValidationCode::UnknownRole, format!("{what}: unsure role '{u}' not in frame structure"));
            }
        }
        for (role, value) in srv {
            if !roles.iter().any(|r| r == role) {
                self.error(ValidationCode::UnknownRole, format!("{what}: role '{role}' not in frame structure"));
                continue;
            }
            if unsure.contains(role.as_str()) {
                self.warn(
                    ValidationCode::UnsureWithValue,
                    format!("{what}: role '{role}' marked unsure but has value '{value}'"),
                );
            }
            if !self.schema.role_values(role).iter().any(|v| v == value) {
                self.error(
                    ValidationCode::UnknownValue,
                    format!("{what}: value '{value}' not a candidate of role '{role}'"),
                );
            }
        }
        for role in roles {
            if !srv.contains_key(role) && !unsure.contains(role.as_str()) {
                self.error(ValidationCode::IncompleteFrame, format!("{what}: role '{role}' has no value"));
            }
        }
    }
}

/// Checks one frame against the frame structure. Violations are collected,
/// never raised.
pub fn validate_annotation(ann: &SsgAnnotation, schema: &FrameStructure) -> ValidationReport {
    let mut c = Checker {
        schema,
        frame_id: &ann.frame_id,
        report: ValidationReport::default(),
    };

    c.bbox("person", &ann.person.bbox, ann.image_size);
    c.srv("person", schema.person_roles(), &ann.person.srv, &ann.person.unsure);

    let mut ids = HashSet::new();
    for o in &ann.objects {
        let what = format!("object {}", o.instance_id);
        if !ids.insert(o.instance_id.as_str()) {
            c.error(ValidationCode::DuplicateInstance, format!("{what}: duplicate instance id"));
        }
        c.bbox(&what, &o.bbox, ann.image_size);
        match schema.category_index(&o.category) {
            Some(k) => c.srv(&what, schema.object_roles(k), &o.srv, &o.unsure),
            None => c.error(ValidationCode::UnknownCategory, format!("{what}: unknown category '{}'", o.category)),
        }
    }

    for (i, r) in ann.relations.iter().enumerate() {
        let what = format!("relation {i} ({} -> {})", r.predicate, r.object_instance_id);
        if !ids.contains(r.object_instance_id.as_str()) {
            c.error(
                ValidationCode::DanglingRelation,
                format!("{what}: object '{}' not in frame", r.object_instance_id),
            );
        }
        match schema.predicate_index(&r.predicate) {
            Some(k) => c.srv(&what, schema.verb_roles(k), &r.srv, &r.unsure),
            None => c.error(ValidationCode::UnknownPredicate, format!("{what}: unknown predicate")),
        }
    }

    if ann.actions.is_empty() {
        c.warn(ValidationCode::NoActions, "frame has no action labels".into());
    }
    c.report
}

pub fn validate_dataset(anns: &[SsgAnnotation], schema: &FrameStructure) -> ValidationReport {
    let mut report = ValidationReport::default();
    for a in anns {
        report.merge(validate_annotation(a, schema));
    }
    report
}
