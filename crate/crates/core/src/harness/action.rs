//! Video action recognition from sequences of frame-level SSGs.
//!
//! Each frame contributes one visual token followed by textual tokens for
//! its SSG elements; a single learnable query attends over the sequence and
//! a linear head scores every action class.

use std::fs;
use std::path::Path;

use image::RgbImage;
use indexmap::IndexMap;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::{EmbeddingBackend, EmbeddingVector};
use crate::error::{Result, SsgError};
use crate::metrics::{multilabel_map, MapReport};
use crate::nn::{
    Adamax, CrossAttentionEncoder, Dropout, EncoderConfig, ExponentialLr, Linear, Matrix, NamedParam, ParamGrads,
    ParamId, ParamStore, Tape, Var,
};
use crate::schema::{FrameStructure, SsgAnnotation, PERSON_TEXT};

/// Token dimension of action sequences.
pub const ACTION_TOKEN_DIM: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionSequenceConfig {
    pub token_dim: usize,
    /// Keep every `frame_stride`-th frame.
    pub frame_stride: usize,
}

impl Default for ActionSequenceConfig {
    fn default() -> Self {
        ActionSequenceConfig {
            token_dim: ACTION_TOKEN_DIM,
            frame_stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSequence {
    pub tokens: Vec<EmbeddingVector>,
    /// Index of each frame's visual token.
    pub frame_starts: Vec<usize>,
}

impl ActionSequence {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn to_matrix(&self) -> Result<Matrix> {
        let dim = self.tokens.first().map(EmbeddingVector::dim).ok_or_else(|| {
            SsgError::Config("empty action sequence".into())
        })?;
        let mut data = Vec::with_capacity(self.tokens.len() * dim);
        for t in &self.tokens {
            data.extend_from_slice(t.as_slice());
        }
        Ok(Matrix::from_vec(self.tokens.len(), dim, data))
    }
}

fn pairs(roles: &[String], srv: &IndexMap<String, String>, unsure: &[String]) -> Vec<String> {
    roles
        .iter()
        .filter(|r| !unsure.contains(r))
        .filter_map(|r| srv.get(r).map(|v| format!("{r}: {v}")))
        .collect()
}

/// Textual SSG elements of one frame in sequence order: the person (when it
/// carries any role-value pair) and its pairs, every object and its pairs,
/// every relation's predicate and its pairs. Pairs follow schema role order;
/// each role-value pair is one token.
pub fn frame_text_tokens(ann: &SsgAnnotation, schema: &FrameStructure) -> Vec<String> {
    let mut out = Vec::new();
    let person = pairs(schema.person_roles(), &ann.person.srv, &ann.person.unsure);
    if !person.is_empty() {
        out.push(PERSON_TEXT.to_string());
        out.extend(person);
    }
    for o in &ann.objects {
        out.push(o.category.clone());
        if let Some(c) = schema.category_index(&o.category) {
            out.extend(pairs(schema.object_roles(c), &o.srv, &o.unsure));
        }
    }
    for r in &ann.relations {
        out.push(r.predicate.clone());
        if let Some(p) = schema.predicate_index(&r.predicate) {
            out.extend(pairs(schema.verb_roles(p), &r.srv, &r.unsure));
        }
    }
    out
}

/// Visual plus textual tokens of frames given in temporal order.
pub fn build_action_sequence(
    frames: &[(&SsgAnnotation, &RgbImage)],
    schema: &FrameStructure,
    backend: &dyn EmbeddingBackend,
    cfg: &ActionSequenceConfig,
) -> Result<ActionSequence> {
    if backend.dim() != cfg.token_dim {
        return Err(SsgError::InvalidDimension(format!(
            "action tokens need dimension {}, backend '{}' has {}",
            cfg.token_dim,
            backend.name(),
            backend.dim()
        )));
    }
    if cfg.frame_stride == 0 {
        return Err(SsgError::Config("frame stride must be positive".into()));
    }
    let mut seq = ActionSequence {
        tokens: Vec::new(),
        frame_starts: Vec::new(),
    };
    for (ann, image) in frames.iter().step_by(cfg.frame_stride) {
        seq.frame_starts.push(seq.tokens.len());
        seq.tokens.push(backend.embed_image(image)?);
        for t in frame_text_tokens(ann, schema) {
            seq.tokens.push(backend.embed_text(&t)?);
        }
    }
    Ok(seq)
}

/// Action vocabulary: sorted union of the frames' action labels.
pub fn action_vocabulary<'a>(frames: impl IntoIterator<Item = &'a SsgAnnotation>) -> Vec<String> {
    let mut v: Vec<String> = frames.into_iter().flat_map(|a| a.actions.iter().cloned()).collect();
    v.sort();
    v.dedup();
    v
}

/// Multi-hot video label: union over its frames.
pub fn video_labels(frames: &[&SsgAnnotation], vocab: &[String]) -> Vec<bool> {
    vocab
        .iter()
        .map(|c| frames.iter().any(|f| f.actions.contains(c)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionClassifierConfig {
    /// Encoder config; tokens are linearly projected when its dim differs
    /// from the token dimension.
    pub encoder: EncoderConfig,
}

/// One learnable query, cross-attention encoder, linear multi-label head.
#[derive(Debug, Clone)]
pub struct ActionClassifier {
    cfg: ActionClassifierConfig,
    token_dim: usize,
    classes: Vec<String>,
    store: ParamStore,
    projection: Option<Linear>,
    query: ParamId,
    encoder: CrossAttentionEncoder,
    head: Linear,
}

impl ActionClassifier {
    pub fn new(token_dim: usize, classes: Vec<String>, cfg: &ActionClassifierConfig, seed: u64) -> Result<Self> {
        if classes.is_empty() {
            return Err(SsgError::Config("empty action vocabulary".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.encoder.dim;
        let projection = (d != token_dim).then(|| Linear::new(&mut store, "action.projection", token_dim, d, &mut rng));
        let query = store.add_normal("action.query", 1, d, 1.0, &mut rng);
        let encoder = CrossAttentionEncoder::new(&mut store, "action.encoder", &cfg.encoder, &mut rng)?;
        let head = Linear::new(&mut store, "action.head", d, classes.len(), &mut rng);
        Ok(ActionClassifier {
            cfg: cfg.clone(),
            token_dim,
            classes,
            store,
            projection,
            query,
            encoder,
            head,
        })
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// `1 × classes` logits, with parameters read from `store`.
    pub fn logits_var(
        &self,
        store: &ParamStore,
        tape: &mut Tape,
        tokens: Var,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Var> {
        let (n, dim) = tape.value(tokens).shape();
        if n == 0 {
            return Err(SsgError::Config("empty action sequence".into()));
        }
        if dim != self.token_dim {
            return Err(SsgError::DimensionMismatch {
                expected: self.token_dim,
                actual: dim,
            });
        }
        let kv = match &self.projection {
            Some(p) => p.forward(tape, store, tokens),
            None => tokens,
        };
        let q = tape.param(store, self.query);
        let out = match rng {
            Some(rng) => {
                let mut dropout = Dropout {
                    rate: self.cfg.encoder.dropout,
                    rng,
                };
                self.encoder.forward(tape, store, q, kv, None, Some(&mut dropout), None)?
            }
            None => self.encoder.forward::<ChaCha8Rng>(tape, store, q, kv, None, None, None)?,
        };
        Ok(self.head.forward(tape, store, out))
    }

    pub fn scores(&self, seq: &ActionSequence) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let x = tape.leaf(seq.to_matrix()?);
        let l = self.logits_var(&self.store, &mut tape, x, None)?;
        Ok(tape.value(l).row(0).to_vec())
    }

    pub fn evaluate(&self, data: &[(ActionSequence, Vec<bool>)]) -> Result<MapReport> {
        let scores = data.iter().map(|(s, _)| self.scores(s)).collect::<Result<Vec<_>>>()?;
        let labels: Vec<Vec<bool>> = data.iter().map(|(_, l)| l.clone()).collect();
        multilabel_map(&scores, &labels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_gamma: f64,
    pub seed: u64,
}

impl Default for ActionTrainConfig {
    fn default() -> Self {
        ActionTrainConfig {
            epochs: 50,
            learning_rate: 0.001,
            lr_gamma: 0.95,
            seed: 7,
        }
    }
}

/// Full-batch training with summed binary cross-entropy. Returns the loss
/// of every epoch.
pub fn train_action_classifier(
    clf: &mut ActionClassifier,
    data: &[(ActionSequence, Vec<bool>)],
    cfg: &ActionTrainConfig,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(SsgError::EmptyDataset);
    }
    let inputs = data.iter().map(|(s, _)| s.to_matrix()).collect::<Result<Vec<_>>>()?;
    for (_, l) in data {
        if l.len() != clf.classes.len() {
            return Err(SsgError::DimensionMismatch {
                expected: clf.classes.len(),
                actual: l.len(),
            });
        }
    }
    let schedule = ExponentialLr {
        initial: cfg.learning_rate,
        gamma: cfg.lr_gamma,
    };
    let mut opt = Adamax::new(&clf.store, cfg.learning_rate);
    let mut grads = ParamGrads::zeros_like(&clf.store);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        opt.lr = schedule.lr_at(epoch);
        order.shuffle(&mut rng);
        grads.clear();
        let mut total = 0.0;
        for &i in &order {
            let mut tape = Tape::new();
            let x = tape.leaf(inputs[i].clone());
            let mut drop_rng = ChaCha8Rng::seed_from_u64(rng.gen());
            let logits = clf.logits_var(&clf.store, &mut tape, x, Some(&mut drop_rng))?;
            let target = Matrix::row_vector(&data[i].1.iter().map(|&b| b as u8 as f64).collect::<Vec<_>>());
            let loss = tape.bce_with_logits(logits, target);
            total += tape.scalar(loss);
            let g = tape.backward(loss);
            tape.accumulate_param_grads(&g, &mut grads);
        }
        opt.step(&mut clf.store, &grads);
        losses.push(total / data.len() as f64);
    }
    Ok(losses)
}

pub const ACTION_CHECKPOINT_FORMAT: &str = "ssg-action-checkpoint";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionCheckpoint {
    pub format: String,
    pub version: u32,
    pub token_dim: usize,
    pub classes: Vec<String>,
    pub config: ActionClassifierConfig,
    pub sequence: ActionSequenceConfig,
    pub params: Vec<NamedParam>,
}

impl ActionCheckpoint {
    pub fn capture(clf: &ActionClassifier, sequence: ActionSequenceConfig) -> Self {
        ActionCheckpoint {
            format: ACTION_CHECKPOINT_FORMAT.into(),
            version: 1,
            token_dim: clf.token_dim,
            classes: clf.classes.clone(),
            config: clf.cfg.clone(),
            sequence,
            params: clf.store.export(),
        }
    }

    pub fn restore(&self) -> Result<ActionClassifier> {
        let mut clf = ActionClassifier::new(self.token_dim, self.classes.clone(), &self.config, 0)?;
        clf.store.import(&self.params)?;
        Ok(clf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("checkpoint serializes");
        fs::write(path, text).map_err(|e| SsgError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| SsgError::io(path, e))?;
        let ckpt: ActionCheckpoint = serde_json::from_str(&text)?;
        if ckpt.format != ACTION_CHECKPOINT_FORMAT || ckpt.version != 1 {
            return Err(SsgError::Checkpoint(format!("unsupported action checkpoint '{}'", ckpt.format)));
        }
        Ok(ckpt)
    }
}
