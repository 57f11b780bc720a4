use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// One row of a per-role or per-class accuracy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub key: String,
    pub correct: usize,
    pub total: usize,
}

impl TableRow {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

/// Named ratios with their denominators plus accuracy tables. Rendering is
/// deterministic: keys are sorted.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: BTreeMap<String, f64>,
    pub counts: BTreeMap<String, usize>,
    pub per_role: Vec<TableRow>,
    pub per_class: Vec<TableRow>,
}

impl MetricReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }

    pub fn count(&self, name: &str) -> Option<usize> {
        self.counts.get(name).copied()
    }

    /// Copies `other` in with `prefix.` prepended to every key.
    pub fn absorb(&mut self, prefix: &str, other: MetricReport) {
        let key = |k: &str| format!("{prefix}.{k}");
        for (k, v) in other.metrics {
            self.metrics.insert(key(&k), v);
        }
        for (k, v) in other.counts {
            self.counts.insert(key(&k), v);
        }
        for mut row in other.per_role {
            row.key = key(&row.key);
            self.per_role.push(row);
        }
        for mut row in other.per_class {
            row.key = key(&row.key);
            self.per_class.push(row);
        }
    }
}

fn write_table(f: &mut fmt::Formatter<'_>, title: &str, rows: &[TableRow]) -> fmt::Result {
    if rows.is_empty() {
        return Ok(());
    }
    writeln!(f, "[{title}]")?;
    for r in rows {
        writeln!(f, "{} correct={} total={} accuracy={:.6}", r.key, r.correct, r.total, r.accuracy())?;
    }
    Ok(())
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.metrics {
            writeln!(f, "{k}={v:.6}")?;
        }
        for (k, v) in &self.counts {
            writeln!(f, "count.{k}={v}")?;
        }
        write_table(f, "per_role", &self.per_role)?;
        write_table(f, "per_class", &self.per_class)
    }
}
