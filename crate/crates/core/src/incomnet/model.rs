//! The four-stage network: object-SRV (I), verb-predicate (II), verb-SRV
//! (III) and person-SRV (IV) encoders with their query banks and classifiers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{FeedbackMode, ModelConfig};
use super::features::{FrameInput, TextBank};
use crate::embed::EmbeddingVector;
use crate::error::{Result, SsgError};
use crate::nn::{argmax, CrossAttentionEncoder, Dropout, Linear, Matrix, ParamId, ParamStore, Tape, Var};
use crate::schema::{EntityKind, FrameStructure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    ObjectSrv,
    VerbPredicate,
    VerbSrv,
    PersonSrv,
}

/// One recorded encoder invocation.
#[derive(Debug, Clone)]
pub struct StageCall {
    pub stage: Stage,
    /// 1-based refinement iteration (always 1 for the person stage).
    pub iteration: usize,
    /// Object index for stage I, relation index for II/III, 0 for IV.
    pub entity: usize,
    /// Key/value rows before positional embeddings.
    pub kv: Matrix,
    pub kv_mask: Vec<bool>,
}

/// Instrumentation of one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardTrace {
    pub calls: Vec<StageCall>,
    /// `verb_queries[iteration - 1][relation]` = Q^R.
    pub verb_queries: Vec<Vec<Vec<f64>>>,
}

impl ForwardTrace {
    pub fn calls_of(&self, stage: Stage) -> impl Iterator<Item = &StageCall> {
        self.calls.iter().filter(move |c| c.stage == stage)
    }

    pub fn call(&self, stage: Stage, iteration: usize, entity: usize) -> Option<&StageCall> {
        self.calls
            .iter()
            .find(|c| c.stage == stage && c.iteration == iteration && c.entity == entity)
    }
}

/// Per-call execution state: dropout randomness and optional tracing.
#[derive(Debug, Default)]
pub struct StageContext {
    rng: Option<ChaCha8Rng>,
    pub trace: Option<ForwardTrace>,
    pub iteration: usize,
}

impl StageContext {
    /// Deterministic evaluation, no dropout.
    pub fn inference() -> Self {
        StageContext {
            rng: None,
            trace: None,
            iteration: 1,
        }
    }

    /// Training mode: dropout driven by `seed`.
    pub fn training(seed: u64) -> Self {
        StageContext {
            rng: Some(ChaCha8Rng::seed_from_u64(seed)),
            trace: None,
            iteration: 1,
        }
    }

    pub fn traced(mut self) -> Self {
        self.trace = Some(ForwardTrace::default());
        self
    }
}

/// Stage-I verb feedback slot.
#[derive(Debug, Clone, Copy)]
pub enum Feedback {
    /// First iteration: no slot at all.
    Absent,
    /// Q^R of the object's relation(s) from the previous iteration.
    Query(Var),
    /// Object without relations: zero vector, masked like padding.
    Missing,
}

/// Where stage III takes its role names from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbRoleSource {
    /// Roles of the annotated predicate (training, GT-verb evaluation).
    GroundTruth,
    /// Roles of the current iteration's argmax predicate.
    Predicted,
}

/// The learnable query sets, one per stage.
#[derive(Debug, Clone, Copy)]
pub struct QueryBank {
    pub object_roles: ParamId,
    pub verb: ParamId,
    pub verb_roles: ParamId,
    pub person_roles: ParamId,
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

/// Tape handles produced by one refinement iteration.
#[derive(Debug, Clone)]
pub struct IterationVars {
    /// `x × |V_object|` per object.
    pub object_logits: Vec<Var>,
    /// `x × dim` per object.
    pub object_queries: Vec<Var>,
    /// `1 × |predicates|` per relation.
    pub verb_logits: Vec<Var>,
    /// `1 × dim` per relation.
    pub verb_queries: Vec<Var>,
    /// `y × |V_verb|` per relation.
    pub verb_role_logits: Vec<Var>,
    /// Predicate whose role names fed stage III, per relation.
    pub role_predicates: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct FrameVars {
    pub iterations: Vec<IterationVars>,
    /// `z × |V_person|`.
    pub person_logits: Var,
}

/// Logits of one refinement iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationOutput {
    pub object_logits: Vec<Matrix>,
    pub verb_logits: Vec<Vec<f64>>,
    pub verb_role_logits: Vec<Matrix>,
    pub role_predicates: Vec<usize>,
}

/// Network output for one frame: the full iteration history of stages
/// I–III plus the single stage-IV result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsgPrediction {
    pub history: Vec<IterationOutput>,
    pub person_logits: Matrix,
    /// Final Q^R per relation.
    pub verb_queries: Vec<Vec<f64>>,
    /// Stage-III logits computed with the annotated predicate's roles, when
    /// it is known.
    pub gt_role_logits: Vec<Option<Matrix>>,
}

impl SsgPrediction {
    /// Output of the last iteration — the reported prediction.
    pub fn last(&self) -> &IterationOutput {
        self.history.last().expect("at least one iteration")
    }

    pub fn predicted_verbs(&self) -> Vec<usize> {
        self.last().verb_logits.iter().map(|l| argmax(l)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.person_logits.is_finite()
            && self.history.iter().all(|h| {
                h.object_logits.iter().all(Matrix::is_finite)
                    && h.verb_role_logits.iter().all(Matrix::is_finite)
                    && h.verb_logits.iter().flatten().all(|v| v.is_finite())
            })
    }
}

fn vocab_size(schema: &FrameStructure, kind: EntityKind) -> usize {
    schema.vocab(kind).len()
}

/// InComNet: parameters plus the schema-derived sizes they were built for.
#[derive(Debug, Clone)]
pub struct InComNet {
    cfg: ModelConfig,
    store: ParamStore,
    queries: QueryBank,
    object_encoder: CrossAttentionEncoder,
    verb_encoder: CrossAttentionEncoder,
    verb_role_encoder: CrossAttentionEncoder,
    person_encoder: CrossAttentionEncoder,
    object_head: Linear,
    verb_head: Linear,
    verb_role_head: Linear,
    person_head: Linear,
    schema_hash: String,
    predicates: usize,
}

impl InComNet {
    pub fn new(schema: &FrameStructure, cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let d = cfg.dim();
        let (x, y, z) = (schema.max_object_roles(), schema.max_verb_roles(), schema.person_role_count());
        let std = cfg.query_init_std;
        let queries = QueryBank {
            object_roles: store.add_normal("queries.object_roles", x, d, std, &mut rng),
            verb: store.add_normal("queries.verb", 1, d, std, &mut rng),
            verb_roles: store.add_normal("queries.verb_roles", y, d, std, &mut rng),
            person_roles: store.add_normal("queries.person_roles", z, d, std, &mut rng),
            x,
            y,
            z,
        };
        let enc = &cfg.encoder;
        let object_encoder = CrossAttentionEncoder::new(&mut store, "stage1", enc, &mut rng)?;
        let verb_encoder = CrossAttentionEncoder::new(&mut store, "stage2", enc, &mut rng)?;
        let verb_role_encoder = CrossAttentionEncoder::new(&mut store, "stage3", enc, &mut rng)?;
        let person_encoder = CrossAttentionEncoder::new(&mut store, "stage4", enc, &mut rng)?;
        let predicates = schema.verb_predicates().len();
        let object_head = Linear::new(&mut store, "head.object", d, vocab_size(schema, EntityKind::Object), &mut rng);
        let verb_head = Linear::new(&mut store, "head.verb", d, predicates, &mut rng);
        let verb_role_head = Linear::new(&mut store, "head.verb_roles", d, vocab_size(schema, EntityKind::Verb), &mut rng);
        let person_head = Linear::new(&mut store, "head.person", d, vocab_size(schema, EntityKind::Person), &mut rng);
        Ok(InComNet {
            cfg: cfg.clone(),
            store,
            queries,
            object_encoder,
            verb_encoder,
            verb_role_encoder,
            person_encoder,
            object_head,
            verb_head,
            verb_role_head,
            person_head,
            schema_hash: schema.hash().to_string(),
            predicates,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn query_bank(&self) -> QueryBank {
        self.queries
    }

    pub fn schema_hash(&self) -> &str {
        &self.schema_hash
    }

    pub fn dim(&self) -> usize {
        self.cfg.dim()
    }

    fn check_dim(&self, v: &EmbeddingVector) -> Result<()> {
        if v.dim() != self.dim() {
            return Err(SsgError::DimensionMismatch {
                expected: self.dim(),
                actual: v.dim(),
            });
        }
        Ok(())
    }

    fn leaf_rows(&self, tape: &mut Tape, rows: &[&EmbeddingVector]) -> Result<Var> {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for r in rows {
            self.check_dim(r)?;
            data.extend_from_slice(r.as_slice());
        }
        Ok(tape.leaf(Matrix::from_vec(rows.len(), d, data)))
    }

    fn zero_rows(&self, tape: &mut Tape, n: usize) -> Var {
        tape.leaf(Matrix::zeros(n, self.dim()))
    }

    #[allow(clippy::too_many_arguments)]
    fn encode(
        &self,
        tape: &mut Tape,
        ctx: &mut StageContext,
        encoder: &CrossAttentionEncoder,
        stage: Stage,
        entity: usize,
        queries: ParamId,
        parts: &[Var],
        mask: Vec<bool>,
    ) -> Result<Var> {
        let kv = tape.concat_rows(parts);
        debug_assert_eq!(tape.value(kv).rows(), mask.len());
        if let Some(trace) = ctx.trace.as_mut() {
            trace.calls.push(StageCall {
                stage,
                iteration: ctx.iteration,
                entity,
                kv: tape.value(kv).clone(),
                kv_mask: mask.clone(),
            });
        }
        let q = tape.param(&self.store, queries);
        let use_mask = mask.iter().any(|m| !m);
        let mask = use_mask.then_some(mask.as_slice());
        match ctx.rng.as_mut() {
            Some(rng) => {
                let mut dropout = Dropout {
                    rate: encoder.config().dropout,
                    rng,
                };
                encoder.forward(tape, &self.store, q, kv, mask, Some(&mut dropout), None)
            }
            None => encoder.forward::<ChaCha8Rng>(tape, &self.store, q, kv, mask, None, None),
        }
    }

    /// Role-name rows zero-padded to `width`, with the matching mask entries.
    fn role_slots(
        &self,
        tape: &mut Tape,
        roles: &[EmbeddingVector],
        width: usize,
        stage: &'static str,
        parts: &mut Vec<Var>,
        mask: &mut Vec<bool>,
    ) -> Result<()> {
        if roles.len() > width {
            return Err(SsgError::TooManyRoles {
                stage,
                count: roles.len(),
                capacity: width,
            });
        }
        if !roles.is_empty() {
            let refs: Vec<&EmbeddingVector> = roles.iter().collect();
            parts.push(self.leaf_rows(tape, &refs)?);
            mask.extend(std::iter::repeat(true).take(roles.len()));
        }
        let pad = width - roles.len();
        if pad > 0 {
            parts.push(self.zero_rows(tape, pad));
            mask.extend(std::iter::repeat(!self.cfg.mask_padding).take(pad));
        }
        Ok(())
    }

    /// Stage I. Returns `(Q_r^O, logits)`, `x` rows each.
    #[allow(clippy::too_many_arguments)]
    pub fn object_srv_stage(
        &self,
        tape: &mut Tape,
        ctx: &mut StageContext,
        entity: usize,
        frame: &EmbeddingVector,
        object_name: &EmbeddingVector,
        role_names: &[EmbeddingVector],
        feedback: Feedback,
    ) -> Result<(Var, Var)> {
        let mut parts = vec![self.leaf_rows(tape, &[frame, object_name])?];
        let mut mask = vec![true, true];
        match feedback {
            Feedback::Absent => {}
            Feedback::Query(q) => {
                parts.push(q);
                mask.push(true);
            }
            Feedback::Missing => {
                parts.push(self.zero_rows(tape, 1));
                mask.push(!self.cfg.mask_padding);
            }
        }
        self.role_slots(tape, role_names, self.queries.x, "object_srv", &mut parts, &mut mask)?;
        let out = self.encode(
            tape,
            ctx,
            &self.object_encoder,
            Stage::ObjectSrv,
            entity,
            self.queries.object_roles,
            &parts,
            mask,
        )?;
        let logits = self.object_head.forward(tape, &self.store, out);
        Ok((out, logits))
    }

    /// Stage II. Returns `(Q^R, logits)` with one row each.
    pub fn verb_predicate_stage(
        &self,
        tape: &mut Tape,
        ctx: &mut StageContext,
        entity: usize,
        frame: &EmbeddingVector,
        object_name: &EmbeddingVector,
        object_queries: Var,
    ) -> Result<(Var, Var)> {
        let (rows, cols) = tape.value(object_queries).shape();
        if rows != self.queries.x || cols != self.dim() {
            return Err(SsgError::DimensionMismatch {
                expected: self.queries.x * self.dim(),
                actual: rows * cols,
            });
        }
        let with_name = self.cfg.verb_stage_object_name;
        let head = if with_name {
            self.leaf_rows(tape, &[frame, object_name])?
        } else {
            let f = self.leaf_rows(tape, &[frame])?;
            let z = self.zero_rows(tape, 1);
            tape.concat_rows(&[f, z])
        };
        let mut mask = vec![true, with_name];
        mask.extend(std::iter::repeat(true).take(rows));
        let out = self.encode(
            tape,
            ctx,
            &self.verb_encoder,
            Stage::VerbPredicate,
            entity,
            self.queries.verb,
            &[head, object_queries],
            mask,
        )?;
        let logits = self.verb_head.forward(tape, &self.store, out);
        Ok((out, logits))
    }

    /// Stage III. Returns `(Q_r^R, logits)`, `y` rows each.
    #[allow(clippy::too_many_arguments)]
    pub fn verb_srv_stage(
        &self,
        tape: &mut Tape,
        ctx: &mut StageContext,
        entity: usize,
        frame: &EmbeddingVector,
        verb_query: Var,
        object_name: &EmbeddingVector,
        role_names: &[EmbeddingVector],
    ) -> Result<(Var, Var)> {
        let (rows, cols) = tape.value(verb_query).shape();
        if rows != 1 || cols != self.dim() {
            return Err(SsgError::DimensionMismatch {
                expected: self.dim(),
                actual: rows * cols,
            });
        }
        let f = self.leaf_rows(tape, &[frame])?;
        let o = self.leaf_rows(tape, &[object_name])?;
        let mut parts = vec![f, verb_query, o];
        let mut mask = vec![true; 3];
        self.role_slots(tape, role_names, self.queries.y, "verb_srv", &mut parts, &mut mask)?;
        let out = self.encode(
            tape,
            ctx,
            &self.verb_role_encoder,
            Stage::VerbSrv,
            entity,
            self.queries.verb_roles,
            &parts,
            mask,
        )?;
        let logits = self.verb_role_head.forward(tape, &self.store, out);
        Ok((out, logits))
    }

    /// Stage IV. Returns `(Q_r^P, logits)`, `z` rows each.
    pub fn person_srv_stage(
        &self,
        tape: &mut Tape,
        ctx: &mut StageContext,
        frame: &EmbeddingVector,
        person_name: &EmbeddingVector,
        role_names: &[EmbeddingVector],
    ) -> Result<(Var, Var)> {
        if role_names.len() != self.queries.z {
            return Err(SsgError::TooManyRoles {
                stage: "person_srv",
                count: role_names.len(),
                capacity: self.queries.z,
            });
        }
        let mut rows = vec![frame, person_name];
        rows.extend(role_names.iter());
        let kv = self.leaf_rows(tape, &rows)?;
        let saved = ctx.iteration;
        ctx.iteration = 1;
        let out = self.encode(
            tape,
            ctx,
            &self.person_encoder,
            Stage::PersonSrv,
            0,
            self.queries.person_roles,
            &[kv],
            vec![true; rows.len()],
        );
        ctx.iteration = saved;
        let out = out?;
        let logits = self.person_head.forward(tape, &self.store, out);
        Ok((out, logits))
    }

    fn mean_rows(tape: &mut Tape, vars: &[Var]) -> Var {
        if vars.len() == 1 {
            return vars[0];
        }
        let stacked = tape.concat_rows(vars);
        let w = tape.leaf(Matrix::from_vec(1, vars.len(), vec![1.0 / vars.len() as f64; vars.len()]));
        tape.matmul(w, stacked)
    }

    /// Full pipeline on one frame: stages I → II → III iterated `iterations`
    /// times with Q^R fed back into stage I, then stage IV once.
    pub fn forward(
        &self,
        tape: &mut Tape,
        ctx: &mut StageContext,
        text: &TextBank,
        input: &FrameInput,
        iterations: usize,
        source: VerbRoleSource,
    ) -> Result<FrameVars> {
        if iterations < 1 {
            return Err(SsgError::Config("iterations must be at least 1".into()));
        }
        let feats = &input.features;
        let n_obj = input.categories.len();
        let n_rel = input.relation_objects.len();
        if feats.objects.len() != n_obj || feats.relations.len() != n_rel {
            return Err(SsgError::MissingFrame("prompted frame count does not match entities".into()));
        }
        let mut rels_of = vec![Vec::new(); n_obj];
        for (r, &o) in input.relation_objects.iter().enumerate() {
            if o >= n_obj {
                return Err(SsgError::Misaligned(format!("relation {r} points at missing object {o}")));
            }
            rels_of[o].push(r);
        }

        let mut history: Vec<IterationVars> = Vec::with_capacity(iterations);
        for it in 1..=iterations {
            ctx.iteration = it;
            let mut object_queries = Vec::with_capacity(n_obj);
            let mut object_logits = Vec::with_capacity(n_obj);
            for o in 0..n_obj {
                let feedback = match history.last() {
                    None => Feedback::Absent,
                    Some(_) if rels_of[o].is_empty() => Feedback::Missing,
                    Some(prev) => match self.cfg.feedback {
                        FeedbackMode::First => Feedback::Query(prev.verb_queries[rels_of[o][0]]),
                        FeedbackMode::Mean => {
                            let vs: Vec<Var> = rels_of[o].iter().map(|&r| prev.verb_queries[r]).collect();
                            Feedback::Query(Self::mean_rows(tape, &vs))
                        }
                    },
                };
                let c = input.categories[o];
                let (q, l) = self.object_srv_stage(
                    tape,
                    ctx,
                    o,
                    &feats.objects[o],
                    &text.categories[c],
                    &text.object_roles[c],
                    feedback,
                )?;
                object_queries.push(q);
                object_logits.push(l);
            }

            let mut verb_queries = Vec::with_capacity(n_rel);
            let mut verb_logits = Vec::with_capacity(n_rel);
            for r in 0..n_rel {
                let o = input.relation_objects[r];
                let c = input.categories[o];
                let (q, l) =
                    self.verb_predicate_stage(tape, ctx, r, &feats.relations[r], &text.categories[c], object_queries[o])?;
                verb_queries.push(q);
                verb_logits.push(l);
            }

            let mut verb_role_logits = Vec::with_capacity(n_rel);
            let mut role_predicates = Vec::with_capacity(n_rel);
            for r in 0..n_rel {
                let o = input.relation_objects[r];
                let c = input.categories[o];
                let predicted = argmax(tape.value(verb_logits[r]).row(0));
                let p = match source {
                    VerbRoleSource::GroundTruth => input.gt_predicates[r].unwrap_or(predicted),
                    VerbRoleSource::Predicted => predicted,
                };
                let (_, l) = self.verb_srv_stage(
                    tape,
                    ctx,
                    r,
                    &feats.relations[r],
                    verb_queries[r],
                    &text.categories[c],
                    &text.verb_roles[p],
                )?;
                verb_role_logits.push(l);
                role_predicates.push(p);
            }
            if let Some(trace) = ctx.trace.as_mut() {
                trace
                    .verb_queries
                    .push(verb_queries.iter().map(|&v| tape.value(v).row(0).to_vec()).collect());
            }
            history.push(IterationVars {
                object_logits,
                object_queries,
                verb_logits,
                verb_queries,
                verb_role_logits,
                role_predicates,
            });
        }

        let (_, person_logits) = self.person_srv_stage(tape, ctx, &feats.person, &text.person, &text.person_roles)?;
        Ok(FrameVars {
            iterations: history,
            person_logits,
        })
    }

    /// Inference on one frame. Stage III uses the predicted predicate's roles;
    /// where that differs from a known annotated predicate, stage III is also
    /// evaluated with the annotated roles on the final Q^R.
    pub fn predict(
        &self,
        text: &TextBank,
        input: &FrameInput,
        iterations: usize,
        trace: Option<&mut ForwardTrace>,
    ) -> Result<SsgPrediction> {
        let mut tape = Tape::new();
        let mut ctx = StageContext::inference();
        if trace.is_some() {
            ctx = ctx.traced();
        }
        let vars = self.forward(&mut tape, &mut ctx, text, input, iterations, VerbRoleSource::Predicted)?;
        let last = vars.iterations.last().expect("iterations >= 1");
        let mut gt_role_logits = Vec::with_capacity(last.role_predicates.len());
        for (r, &p) in last.role_predicates.iter().enumerate() {
            let logits = match input.gt_predicates[r] {
                None => None,
                Some(g) if g == p => Some(tape.value(last.verb_role_logits[r]).clone()),
                Some(g) => {
                    let c = input.categories[input.relation_objects[r]];
                    let mut side = StageContext::inference();
                    let (_, l) = self.verb_srv_stage(
                        &mut tape,
                        &mut side,
                        r,
                        &input.features.relations[r],
                        last.verb_queries[r],
                        &text.categories[c],
                        &text.verb_roles[g],
                    )?;
                    Some(tape.value(l).clone())
                }
            };
            gt_role_logits.push(logits);
        }
        if let (Some(out), Some(t)) = (trace, ctx.trace.take()) {
            *out = t;
        }
        Ok(self.snapshot(&tape, &vars, gt_role_logits))
    }

    /// Copies the logits referenced by `vars` out of `tape`.
    pub fn snapshot(&self, tape: &Tape, vars: &FrameVars, gt_role_logits: Vec<Option<Matrix>>) -> SsgPrediction {
        let history = vars
            .iterations
            .iter()
            .map(|it| IterationOutput {
                object_logits: it.object_logits.iter().map(|&v| tape.value(v).clone()).collect(),
                verb_logits: it.verb_logits.iter().map(|&v| tape.value(v).row(0).to_vec()).collect(),
                verb_role_logits: it.verb_role_logits.iter().map(|&v| tape.value(v).clone()).collect(),
                role_predicates: it.role_predicates.clone(),
            })
            .collect();
        let verb_queries = vars
            .iterations
            .last()
            .map(|it| it.verb_queries.iter().map(|&v| tape.value(v).row(0).to_vec()).collect())
            .unwrap_or_default();
        SsgPrediction {
            history,
            person_logits: tape.value(vars.person_logits).clone(),
            verb_queries,
            gt_role_logits,
        }
    }

    pub fn predicate_count(&self) -> usize {
        self.predicates
    }
}
