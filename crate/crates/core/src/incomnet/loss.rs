use super::features::FrameTargets;
use super::model::{FrameVars, SsgPrediction};
use crate::error::{Result, SsgError};
use crate::nn::{Matrix, Tape, Var};

/// Summed cross-entropy of the rows of `logits` that have a target.
pub fn cross_entropy(logits: &Matrix, targets: &[Option<usize>]) -> f64 {
    targets
        .iter()
        .enumerate()
        .filter_map(|(i, t)| t.map(|t| (i, t)))
        .map(|(i, t)| {
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            lse - row[t]
        })
        .sum()
}

fn check_alignment(
    objects: usize,
    relations: usize,
    role_predicates: &[usize],
    targets: &FrameTargets,
) -> Result<()> {
    if objects != targets.objects.len() || relations != targets.verbs.len() {
        return Err(SsgError::Misaligned(format!(
            "prediction has {objects} objects / {relations} relations, ground truth {} / {}",
            targets.objects.len(),
            targets.verbs.len()
        )));
    }
    if let Some(r) = role_predicates.iter().zip(&targets.verbs).position(|(p, g)| p != g) {
        return Err(SsgError::Misaligned(format!(
            "relation {r}: stage III ran with another predicate's roles than the annotated one"
        )));
    }
    Ok(())
}

/// Loss node: Σ over iterations of object-role, verb and verb-role CE, plus
/// person-role CE once. Masked positions contribute nothing.
pub fn loss_var(tape: &mut Tape, vars: &FrameVars, targets: &FrameTargets) -> Result<Var> {
    let mut terms = Vec::new();
    for it in &vars.iterations {
        check_alignment(it.object_logits.len(), it.verb_logits.len(), &it.role_predicates, targets)?;
        for (l, t) in it.object_logits.iter().zip(&targets.objects) {
            terms.push(tape.cross_entropy(*l, t));
        }
        for (l, &t) in it.verb_logits.iter().zip(&targets.verbs) {
            terms.push(tape.cross_entropy(*l, &[Some(t)]));
        }
        for (l, t) in it.verb_role_logits.iter().zip(&targets.verb_roles) {
            terms.push(tape.cross_entropy(*l, t));
        }
    }
    terms.push(tape.cross_entropy(vars.person_logits, &targets.person));
    Ok(tape.add_scalars(&terms).expect("person term always present"))
}

/// Same quantity as [`loss_var`], computed from stored logits.
pub fn compute_loss(pred: &SsgPrediction, targets: &FrameTargets) -> Result<f64> {
    let mut total = 0.0;
    for it in &pred.history {
        check_alignment(it.object_logits.len(), it.verb_logits.len(), &it.role_predicates, targets)?;
        for (l, t) in it.object_logits.iter().zip(&targets.objects) {
            total += cross_entropy(l, t);
        }
        for (l, &t) in it.verb_logits.iter().zip(&targets.verbs) {
            total += cross_entropy(&Matrix::row_vector(l), &[Some(t)]);
        }
        for (l, t) in it.verb_role_logits.iter().zip(&targets.verb_roles) {
            total += cross_entropy(l, t);
        }
    }
    Ok(total + cross_entropy(&pred.person_logits, &targets.person))
}
