use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::report::{MetricReport, TableRow};
use crate::error::{Result, SsgError};
use crate::schema::EntityKind;

/// Predicted and ground-truth values of one entity instance's roles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrvRecord {
    pub kind: EntityKind,
    /// Object category, verb predicate, or `person`.
    pub class: String,
    pub roles: Vec<String>,
    /// `None` marks a missing or invalidated prediction.
    pub predicted: Vec<Option<String>>,
    pub gt: Vec<String>,
    pub unsure: Vec<bool>,
}

impl SrvRecord {
    pub fn check(&self) -> Result<()> {
        let n = self.roles.len();
        if self.predicted.len() != n || self.gt.len() != n || self.unsure.len() != n {
            return Err(SsgError::Metric(format!(
                "record of {} '{}' has misaligned role lists",
                self.kind.as_str(),
                self.class
            )));
        }
        Ok(())
    }

    /// Correctness of every non-unsure role, in role order.
    pub fn scored_roles(&self) -> impl Iterator<Item = (&str, bool)> {
        (0..self.roles.len()).filter(move |&j| !self.unsure[j]).map(move |j| {
            let ok = self.predicted[j].as_deref() == Some(self.gt[j].as_str());
            (self.roles[j].as_str(), ok)
        })
    }
}

/// How `value_two` treats records with a single scored role.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleRoleValueTwo {
    /// Correct iff that one role is correct.
    #[default]
    RoleCorrect,
    /// Never correct: two correct roles are impossible.
    Incorrect,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrvOptions {
    pub single_role_value_two: SingleRoleValueTwo,
}

/// value / value_two / value_all / role_based_acc over `records`.
///
/// Unsure roles are dropped first; records left with no scored role are
/// skipped and reported under `records_skipped`. Role accuracy is kept per
/// (entity kind, role name) and averaged over the roles that occur.
pub fn srv_metrics(records: &[SrvRecord], opts: SrvOptions) -> Result<MetricReport> {
    if records.is_empty() {
        return Err(SsgError::Metric("no records".into()));
    }
    let (mut n, mut one, mut two, mut all, mut skipped) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut roles: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut classes: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for rec in records {
        rec.check()?;
        let scored: Vec<(&str, bool)> = rec.scored_roles().collect();
        if scored.is_empty() {
            skipped += 1;
            continue;
        }
        n += 1;
        let correct = scored.iter().filter(|(_, ok)| *ok).count();
        one += (correct >= 1) as usize;
        two += match (scored.len(), opts.single_role_value_two) {
            (1, SingleRoleValueTwo::RoleCorrect) => correct == 1,
            _ => correct >= 2,
        } as usize;
        all += (correct == scored.len()) as usize;
        let class = classes
            .entry(format!("{}/{}", rec.kind.as_str(), rec.class))
            .or_default();
        for (role, ok) in scored {
            let e = roles.entry(format!("{}/{role}", rec.kind.as_str())).or_default();
            e.0 += ok as usize;
            e.1 += 1;
            class.0 += ok as usize;
            class.1 += 1;
        }
    }
    if n == 0 {
        return Err(SsgError::Metric("every record consists of unsure roles only".into()));
    }
    let table = |m: BTreeMap<String, (usize, usize)>| -> Vec<TableRow> {
        m.into_iter()
            .map(|(key, (correct, total))| TableRow { key, correct, total })
            .collect()
    };
    let per_role = table(roles);
    let role_acc = per_role.iter().map(TableRow::accuracy).sum::<f64>() / per_role.len() as f64;
    let mut report = MetricReport::default();
    let ratio = |k: usize| k as f64 / n as f64;
    report.metrics.insert("value".into(), ratio(one));
    report.metrics.insert("value_two".into(), ratio(two));
    report.metrics.insert("value_all".into(), ratio(all));
    report.metrics.insert("role_based_acc".into(), role_acc);
    report.counts.insert("records".into(), n);
    report.counts.insert("records_skipped".into(), skipped);
    report.counts.insert("roles".into(), per_role.len());
    report.per_role = per_role;
    report.per_class = table(classes);
    Ok(report)
}

/// Top-1 setting: roles of records whose verb is wrong count as incorrect.
pub fn apply_top1_gating(records: &[SrvRecord], verb_correct: &[bool]) -> Result<Vec<SrvRecord>> {
    if records.len() != verb_correct.len() {
        return Err(SsgError::Metric(format!(
            "{} records but {} verb flags",
            records.len(),
            verb_correct.len()
        )));
    }
    Ok(records
        .iter()
        .zip(verb_correct)
        .map(|(r, &ok)| {
            let mut r = r.clone();
            if !ok {
                r.predicted.iter_mut().for_each(|p| *p = None);
            }
            r
        })
        .collect())
}
