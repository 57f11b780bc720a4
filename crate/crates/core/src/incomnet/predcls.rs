//! Predicate-classification heads over Q^R for the three Action Genome
//! relationship types.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SsgError};
use crate::nn::{Adamax, Linear, Matrix, ParamGrads, ParamStore, Tape};

/// Vocabulary sizes of the attention, spatial and contacting relationships.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredclsSizes {
    pub attention: Option<usize>,
    pub spatial: Option<usize>,
    pub contacting: Option<usize>,
}

impl PredclsSizes {
    /// Action Genome: 3 attention, 6 spatial, 17 contacting relationships.
    pub fn action_genome() -> Self {
        PredclsSizes {
            attention: Some(3),
            spatial: Some(6),
            contacting: Some(17),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredclsLogits {
    pub attention: Vec<f64>,
    pub spatial: Vec<f64>,
    pub contacting: Vec<f64>,
}

/// Multi-hot targets per relationship type.
#[derive(Debug, Clone, PartialEq)]
pub struct PredclsTargets {
    pub attention: Vec<f64>,
    pub spatial: Vec<f64>,
    pub contacting: Vec<f64>,
}

/// Three independent linear classifiers on top of a shared Q^R.
#[derive(Debug, Clone)]
pub struct PredclsHeads {
    store: ParamStore,
    attention: Linear,
    spatial: Linear,
    contacting: Linear,
    dim: usize,
}

impl PredclsHeads {
    pub fn new(dim: usize, sizes: PredclsSizes, seed: u64) -> Result<Self> {
        let unset = |what: &str| SsgError::Config(format!("{what} vocabulary size unset"));
        let a = sizes.attention.ok_or_else(|| unset("attention"))?;
        let s = sizes.spatial.ok_or_else(|| unset("spatial"))?;
        let c = sizes.contacting.ok_or_else(|| unset("contacting"))?;
        if a == 0 || s == 0 || c == 0 {
            return Err(SsgError::Config("relationship vocabularies must be non-empty".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let attention = Linear::new(&mut store, "predcls.attention", dim, a, &mut rng);
        let spatial = Linear::new(&mut store, "predcls.spatial", dim, s, &mut rng);
        let contacting = Linear::new(&mut store, "predcls.contacting", dim, c, &mut rng);
        Ok(PredclsHeads {
            store,
            attention,
            spatial,
            contacting,
            dim,
        })
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    fn input(&self, verb_query: &[f64]) -> Result<Matrix> {
        if verb_query.len() != self.dim {
            return Err(SsgError::DimensionMismatch {
                expected: self.dim,
                actual: verb_query.len(),
            });
        }
        Ok(Matrix::row_vector(verb_query))
    }

    pub fn forward(&self, verb_query: &[f64]) -> Result<PredclsLogits> {
        let mut tape = Tape::new();
        let x = tape.leaf(self.input(verb_query)?);
        let a = self.attention.forward(&mut tape, &self.store, x);
        let s = self.spatial.forward(&mut tape, &self.store, x);
        let c = self.contacting.forward(&mut tape, &self.store, x);
        Ok(PredclsLogits {
            attention: tape.value(a).row(0).to_vec(),
            spatial: tape.value(s).row(0).to_vec(),
            contacting: tape.value(c).row(0).to_vec(),
        })
    }

    /// Fits the heads with summed binary cross-entropy on frozen Q^R inputs.
    /// Returns the final epoch's mean loss.
    pub fn fit(&mut self, samples: &[(Vec<f64>, PredclsTargets)], epochs: usize, lr: f64) -> Result<f64> {
        if samples.is_empty() {
            return Err(SsgError::EmptyDataset);
        }
        let mut opt = Adamax::new(&self.store, lr);
        let mut grads = ParamGrads::zeros_like(&self.store);
        let mut last = f64::NAN;
        for _ in 0..epochs {
            grads.clear();
            let mut total = 0.0;
            for (q, t) in samples {
                let mut tape = Tape::new();
                let x = tape.leaf(self.input(q)?);
                let mut terms = Vec::with_capacity(3);
                for (head, target) in [
                    (&self.attention, &t.attention),
                    (&self.spatial, &t.spatial),
                    (&self.contacting, &t.contacting),
                ] {
                    let l = head.forward(&mut tape, &self.store, x);
                    if tape.value(l).cols() != target.len() {
                        return Err(SsgError::DimensionMismatch {
                            expected: tape.value(l).cols(),
                            actual: target.len(),
                        });
                    }
                    terms.push(tape.bce_with_logits(l, Matrix::row_vector(target)));
                }
                let loss = tape.add_scalars(&terms).expect("three heads");
                total += tape.scalar(loss);
                let g = tape.backward(loss);
                tape.accumulate_param_grads(&g, &mut grads);
            }
            opt.step(&mut self.store, &grads);
            last = total / samples.len() as f64;
        }
        Ok(last)
    }
}
