use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use super::features::{TextBank, TrainingExample};
use super::loss::loss_var;
use super::model::{InComNet, StageContext, VerbRoleSource};
use crate::error::{Result, SsgError};
use crate::nn::{argmax, Adamax, ExponentialLr, ParamGrads, Tape};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 0-based.
    pub epoch: usize,
    /// Mean per-frame loss over the epoch.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochReport>,
    pub optimizer_steps: u64,
}

impl TrainReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.loss)
    }
}

/// Trains `model` in place with Adamax and per-epoch exponential learning-rate
/// decay. `on_epoch` returns `false` to stop early.
pub fn train(
    model: &mut InComNet,
    text: &TextBank,
    examples: &[TrainingExample],
    cfg: &PipelineConfig,
    mut on_epoch: impl FnMut(&EpochReport, &InComNet) -> bool,
) -> Result<TrainReport> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(SsgError::EmptyDataset);
    }
    let schedule = ExponentialLr {
        initial: cfg.learning_rate,
        gamma: cfg.lr_gamma,
    };
    let mut opt = Adamax::new(model.params(), cfg.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut grads = ParamGrads::zeros_like(model.params());
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::new(),
        optimizer_steps: 0,
    };

    for epoch in 0..cfg.epochs {
        opt.lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            grads.clear();
            for &i in batch {
                let ex = &examples[i];
                let mut tape = Tape::new();
                let mut ctx = StageContext::training(rng.gen());
                let vars = model.forward(
                    &mut tape,
                    &mut ctx,
                    text,
                    &ex.input,
                    cfg.iterations,
                    VerbRoleSource::GroundTruth,
                )?;
                let loss = loss_var(&mut tape, &vars, &ex.targets)?;
                let value = tape.scalar(loss);
                if !value.is_finite() {
                    return Err(SsgError::Config(format!("non-finite loss at epoch {epoch}")));
                }
                total += value;
                let g = tape.backward(loss);
                tape.accumulate_param_grads(&g, &mut grads);
            }
            opt.step(model.params_mut(), &grads);
        }
        let rep = EpochReport {
            epoch,
            loss: total / examples.len() as f64,
            lr: opt.lr,
        };
        info!("epoch {} loss {:.6} lr {:.3e}", epoch, rep.loss, rep.lr);
        report.epochs.push(rep);
        if !on_epoch(&rep, model) {
            break;
        }
    }
    report.optimizer_steps = opt.steps();
    Ok(report)
}

/// Accuracy of the four classification tasks over non-masked targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskAccuracy {
    pub object_srv: f64,
    pub verb: f64,
    pub verb_srv: f64,
    pub person_srv: f64,
}

impl TaskAccuracy {
    pub fn min(&self) -> f64 {
        self.object_srv.min(self.verb).min(self.verb_srv).min(self.person_srv)
    }

    pub fn mean(&self) -> f64 {
        (self.object_srv + self.verb + self.verb_srv + self.person_srv) / 4.0
    }
}

#[derive(Default)]
struct Tally {
    hit: usize,
    n: usize,
}

impl Tally {
    fn add(&mut self, ok: bool) {
        self.n += 1;
        self.hit += ok as usize;
    }

    /// Empty tallies count as solved.
    fn ratio(&self) -> f64 {
        if self.n == 0 {
            1.0
        } else {
            self.hit as f64 / self.n as f64
        }
    }
}

/// Argmax accuracy of the final iteration. Verb roles are scored with the
/// annotated predicate's role names; `targets` may differ from the training
/// targets (e.g. clean labels for a model trained on noisy ones).
pub fn task_accuracy(
    model: &InComNet,
    text: &TextBank,
    examples: &[TrainingExample],
    iterations: usize,
) -> Result<TaskAccuracy> {
    let (mut obj, mut verb, mut vrole, mut person) = (Tally::default(), Tally::default(), Tally::default(), Tally::default());
    for ex in examples {
        let pred = model.predict(text, &ex.input, iterations, None)?;
        let last = pred.last();
        for (l, t) in last.object_logits.iter().zip(&ex.targets.objects) {
            for (j, t) in t.iter().enumerate() {
                if let Some(t) = t {
                    obj.add(l.argmax_row(j) == *t);
                }
            }
        }
        for (l, &t) in last.verb_logits.iter().zip(&ex.targets.verbs) {
            verb.add(argmax(l) == t);
        }
        for (l, t) in pred.gt_role_logits.iter().zip(&ex.targets.verb_roles) {
            let l = l.as_ref().ok_or_else(|| SsgError::Misaligned("relation without annotated predicate".into()))?;
            for (j, t) in t.iter().enumerate() {
                if let Some(t) = t {
                    vrole.add(l.argmax_row(j) == *t);
                }
            }
        }
        for (j, t) in ex.targets.person.iter().enumerate() {
            if let Some(t) = t {
                person.add(pred.person_logits.argmax_row(j) == *t);
            }
        }
    }
    Ok(TaskAccuracy {
        object_srv: obj.ratio(),
        verb: verb.ratio(),
        verb_srv: vrole.ratio(),
        person_srv: person.ratio(),
    })
}
