//! Situation-recognition evaluation: every relation of every frame is a
//! verb-classification instance with a verb-SRV frame.

use crate::error::{Result, SsgError};
use crate::incomnet::PredictionFile;
use crate::metrics::{apply_top1_gating, build_records, srv_metrics, MetricReport, SrvOptions};
use crate::schema::{FrameStructure, SsgAnnotation};

/// Top-1 verb accuracy, top-1-gated verb-SRV metrics (`top1.*`) and
/// GT-verb verb-SRV metrics (`gt.*`).
pub fn situation_recognition_eval(
    preds: &PredictionFile,
    gts: &[SsgAnnotation],
    schema: &FrameStructure,
    opts: SrvOptions,
) -> Result<MetricReport> {
    let recs = build_records(preds, gts, schema)?;
    if recs.verb_correct.is_empty() {
        return Err(SsgError::Metric("no relations to evaluate".into()));
    }
    let mut report = MetricReport::default();
    let hits = recs.verb_correct.iter().filter(|&&c| c).count();
    report
        .metrics
        .insert("verb.top1_accuracy".into(), hits as f64 / recs.verb_correct.len() as f64);
    report.counts.insert("verb.relations".into(), recs.verb_correct.len());
    let gated = apply_top1_gating(&recs.verbs_predicted, &recs.verb_correct)?;
    report.absorb("top1", srv_metrics(&gated, opts)?);
    report.absorb("gt", srv_metrics(&recs.verbs_gt, opts)?);
    Ok(report)
}
