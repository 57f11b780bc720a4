//! Acceptance suite. Every criterion runs in sequence inside one test so that
//! the wall-clock budgets are measured without competing test threads; each
//! prints one `PASS`/`FAIL`/`SKIP` line straight to stdout.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssg_core::embed::SyntheticBackend;
use ssg_core::harness::{generate_mcq, parse_jsonl, score_mcq, write_key, write_questions, AnswerRecord, KeyRecord, McqPolicy, McqTask};
use ssg_core::incomnet::{
    loss_var, prepare_examples, task_accuracy, train, FeedbackMode, ForwardTrace, Stage, StageContext, TextBank,
    TrainingExample, VerbRoleSource,
};
use ssg_core::metrics::{
    multilabel_map, recall_at_k, srv_metrics, verb_accuracy_with_constraint, FrameTriplets, PairPrediction,
    ScoredTriplet, SrvOptions, SrvRecord,
};
use ssg_core::nn::gradcheck::{check_inputs, check_params, GradCheckReport};
use ssg_core::nn::{CrossAttentionEncoder, Dropout, EncoderConfig, Linear, Matrix, ParamStore, PositionalEmbedding, Tape, Var};
use ssg_core::schema::{dataset_stats, load_dataset};
use ssg_core::synth::{generate_dataset, random_schema, reference_schema, SchemaShape, SynthConfig};
use ssg_core::{apply_prompt, BBox, EntityKind, FrameStructure, InComNet, ModelConfig, PipelineConfig, PromptKind, PromptSpec, Region, SsgAnnotation};

type NoRng = ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn report(id: usize, name: &str, elapsed: Duration, outcome: &Outcome) {
    let (tag, detail) = match outcome {
        Outcome::Pass(d) => ("PASS", d),
        Outcome::Fail(d) => ("FAIL", d),
        Outcome::Skip(d) => ("SKIP", d),
    };
    // bypasses the harness's output capture so the line always shows
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id} [{name}]: {tag} ({:.1}s) {detail}", elapsed.as_secs_f64()).unwrap();
}

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn tiny_encoder(dim: usize) -> EncoderConfig {
    EncoderConfig {
        heads: 2,
        layers: 1,
        ffn_dim: 2 * dim,
        ..EncoderConfig::new(dim)
    }
}

fn examples_for(
    schema: &FrameStructure,
    anns: &[SsgAnnotation],
    images: &[RgbImage],
    backend: &SyntheticBackend,
) -> Vec<TrainingExample> {
    prepare_examples(anns, images, schema, backend, &PromptSpec::default()).unwrap()
}

// ---------------------------------------------------------------- 1. shapes

fn shape_suite() -> Outcome {
    let dim = 8;
    let backend = SyntheticBackend::new(dim).unwrap();
    let cfg = ModelConfig {
        encoder: tiny_encoder(dim),
        ..ModelConfig::new(dim)
    };
    let iterations = 3;
    let mut checked = 0usize;
    for s in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let shape = SchemaShape {
            categories: rng.gen_range(1..=5),
            predicates: rng.gen_range(1..=5),
            person_roles: rng.gen_range(2..=7),
            min_roles: 2,
            max_roles: 7,
            values_per_role: rng.gen_range(2..=5),
        };
        let schema = random_schema(&shape, s);
        let synth = SynthConfig {
            frames: 1,
            max_objects: 3,
            max_relations_per_object: 2,
            image_size: 12,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&schema, &synth, s);
        let ex = &examples_for(&schema, &data.annotations, &data.images, &backend)[0];
        let text = TextBank::build(&schema, &backend).unwrap();
        let model = InComNet::new(&schema, &cfg, s).unwrap();
        let mut trace = ForwardTrace::default();
        model.predict(&text, &ex.input, iterations, Some(&mut trace)).unwrap();

        let (x, y, z) = (schema.max_object_roles(), schema.max_verb_roles(), schema.person_role_count());
        let n_obj = ex.input.categories.len();
        let n_rel = ex.input.relation_objects.len();
        for it in 1..=iterations {
            for o in 0..n_obj {
                let want = if it == 1 { 2 + x } else { 3 + x };
                match trace.call(Stage::ObjectSrv, it, o) {
                    Some(c) if c.kv.rows() == want && c.kv_mask.len() == want => checked += 1,
                    other => {
                        return Outcome::Fail(format!(
                            "schema {s}: stage I iter {it} object {o}: kv {:?}, want {want}",
                            other.map(|c| c.kv.rows())
                        ))
                    }
                }
            }
            for r in 0..n_rel {
                for (stage, want) in [(Stage::VerbPredicate, 2 + x), (Stage::VerbSrv, 3 + y)] {
                    match trace.call(stage, it, r) {
                        Some(c) if c.kv.rows() == want && c.kv_mask.len() == want => checked += 1,
                        other => {
                            return Outcome::Fail(format!(
                                "schema {s}: {stage:?} iter {it} relation {r}: kv {:?}, want {want}",
                                other.map(|c| c.kv.rows())
                            ))
                        }
                    }
                }
            }
        }
        let person: Vec<_> = trace.calls_of(Stage::PersonSrv).collect();
        if person.len() != 1 || person[0].kv.rows() != 2 + z {
            return Outcome::Fail(format!("schema {s}: stage IV calls {} / kv {:?}", person.len(), person.first().map(|c| c.kv.rows())));
        }
        checked += 1;
        let expected_calls = iterations * (n_obj + 2 * n_rel) + 1;
        if trace.calls.len() != expected_calls {
            return Outcome::Fail(format!("schema {s}: {} encoder calls, want {expected_calls}", trace.calls.len()));
        }
    }
    Outcome::Pass(format!("200 schemas, {checked} kv layouts"))
}

// ------------------------------------------------------------- 2. gradients

const STEP: f64 = 1e-5;
const GRAD_TOL: f64 = 1e-4;

fn rand_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..1.0))
}

/// Generic scalar readout: sum of `v ⊙ w` with fixed random weights, so that
/// no op is checked through a constant (e.g. the row sums of a softmax).
fn readout(tape: &mut Tape, v: Var, seed: u64) -> Var {
    let (r, c) = tape.value(v).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rand_matrix(&mut rng, r, c);
    let p = tape.mul_const(v, w);
    tape.sum(p)
}

fn op_checks() -> Vec<(&'static str, GradCheckReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let a34 = rand_matrix(&mut rng, 3, 4);
    let b45 = rand_matrix(&mut rng, 4, 5);
    let c34 = rand_matrix(&mut rng, 3, 4);
    let c54 = rand_matrix(&mut rng, 5, 4);
    let row4 = rand_matrix(&mut rng, 1, 4);
    let g4 = rand_matrix(&mut rng, 1, 4);
    let logits = Matrix::from_fn(3, 5, |_, _| rng.gen_range(-3.0..3.0));
    let mut out = Vec::new();
    out.push(("matmul", check_inputs(&[a34.clone(), b45.clone()], STEP, |t, v| {
        let m = t.matmul(v[0], v[1]);
        readout(t, m, 1)
    })));
    out.push(("matmul_t", check_inputs(&[a34.clone(), c54.clone()], STEP, |t, v| {
        let m = t.matmul_t(v[0], v[1]);
        readout(t, m, 2)
    })));
    out.push(("add", check_inputs(&[a34.clone(), c34.clone()], STEP, |t, v| {
        let m = t.add(v[0], v[1]);
        readout(t, m, 3)
    })));
    out.push(("add_row", check_inputs(&[a34.clone(), row4.clone()], STEP, |t, v| {
        let m = t.add_row(v[0], v[1]);
        readout(t, m, 4)
    })));
    out.push(("scale", check_inputs(&[a34.clone()], STEP, |t, v| {
        let m = t.scale(v[0], -1.7);
        readout(t, m, 5)
    })));
    out.push(("softmax", check_inputs(&[logits.clone()], STEP, |t, v| {
        let m = t.softmax(v[0]);
        readout(t, m, 6)
    })));
    out.push(("softmax_masked", check_inputs(&[logits.clone()], STEP, |t, v| {
        let mask = t.leaf(Matrix::from_fn(3, 5, |_, j| if j == 2 { f64::NEG_INFINITY } else { 0.0 }));
        let s = t.add(v[0], mask);
        let m = t.softmax(s);
        readout(t, m, 7)
    })));
    out.push(("layer_norm", check_inputs(&[a34.clone(), g4.clone(), row4.clone()], STEP, |t, v| {
        let m = t.layer_norm(v[0], v[1], v[2]);
        readout(t, m, 8)
    })));
    out.push(("gelu", check_inputs(&[logits.clone()], STEP, |t, v| {
        let m = t.gelu(v[0]);
        readout(t, m, 9)
    })));
    out.push(("concat_rows", check_inputs(&[a34.clone(), row4.clone()], STEP, |t, v| {
        let m = t.concat_rows(&[v[0], v[1]]);
        readout(t, m, 10)
    })));
    out.push(("concat_cols", check_inputs(&[a34.clone(), logits.clone()], STEP, |t, v| {
        let m = t.concat_cols(&[v[0], v[1]]);
        readout(t, m, 11)
    })));
    out.push(("slice_cols", check_inputs(&[logits.clone()], STEP, |t, v| {
        let m = t.slice_cols(v[0], 1, 3);
        readout(t, m, 12)
    })));
    out.push(("slice_rows", check_inputs(&[logits.clone()], STEP, |t, v| {
        let m = t.slice_rows(v[0], 1, 2);
        readout(t, m, 13)
    })));
    out.push(("mul_const", check_inputs(&[a34.clone()], STEP, |t, v| {
        let m = t.mul_const(v[0], Matrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64 - 2.5));
        readout(t, m, 14)
    })));
    out.push(("sum", check_inputs(&[a34.clone()], STEP, |t, v| {
        let s = t.sum(v[0]);
        t.scale(s, 0.3)
    })));
    out.push(("add_scalars", check_inputs(&[a34.clone(), b45.clone()], STEP, |t, v| {
        let a = readout(t, v[0], 15);
        let b = readout(t, v[1], 16);
        t.add_scalars(&[a, b]).unwrap()
    })));
    out.push(("cross_entropy", check_inputs(&[logits.clone()], STEP, |t, v| {
        t.cross_entropy(v[0], &[Some(1), None, Some(4)])
    })));
    out.push(("bce_with_logits", check_inputs(&[logits.clone()], STEP, |t, v| {
        t.bce_with_logits(v[0], Matrix::from_fn(3, 5, |i, j| ((i + j) % 2) as f64))
    })));
    out
}

fn encoder_check(mask: Option<Vec<bool>>, positional: PositionalEmbedding) -> GradCheckReport {
    let dim = 8;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut store = ParamStore::new();
    let cfg = EncoderConfig {
        heads: 2,
        layers: 2,
        ffn_dim: 16,
        dropout: 0.0,
        positional,
        ..EncoderConfig::new(dim)
    };
    let enc = CrossAttentionEncoder::new(&mut store, "enc", &cfg, &mut rng).unwrap();
    let q = rand_matrix(&mut rng, 3, dim);
    let kv = rand_matrix(&mut rng, 5, dim);
    let mut report = check_params(&mut store.clone(), None, STEP, |s, t| {
        let (qv, kvv) = (t.leaf(q.clone()), t.leaf(kv.clone()));
        let o = enc
            .forward(t, s, qv, kvv, mask.as_deref(), None::<&mut Dropout<'_, NoRng>>, None)
            .unwrap();
        readout(t, o, 20)
    });
    report.merge(check_inputs(&[q.clone(), kv.clone()], STEP, |t, v| {
        let o = enc
            .forward(t, &store, v[0], v[1], mask.as_deref(), None::<&mut Dropout<'_, NoRng>>, None)
            .unwrap();
        readout(t, o, 21)
    }));
    report
}

fn linear_check() -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut store = ParamStore::new();
    let lin = Linear::new(&mut store, "lin", 6, 4, &mut rng);
    let x = rand_matrix(&mut rng, 3, 6);
    check_params(&mut store, None, STEP, |s, t| {
        let xv = t.leaf(x.clone());
        let o = lin.forward(t, s, xv);
        readout(t, o, 22)
    })
}

/// Full pipeline loss (all four stages, d=2, summed CE) against every
/// parameter tensor of a small model.
fn pipeline_check() -> GradCheckReport {
    let dim = 8;
    let schema = random_schema(&SchemaShape::default(), 3);
    let backend = SyntheticBackend::new(dim).unwrap();
    let synth = SynthConfig {
        frames: 1,
        max_objects: 2,
        max_relations_per_object: 2,
        image_size: 12,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&schema, &synth, 5);
    let ex = examples_for(&schema, &data.annotations, &data.images, &backend).remove(0);
    let text = TextBank::build(&schema, &backend).unwrap();
    let mut cfg = ModelConfig::new(dim);
    cfg.encoder = tiny_encoder(dim);
    let model = InComNet::new(&schema, &cfg, 9).unwrap();
    let mut store = model.params().clone();
    check_params(&mut store, Some(6), STEP, |s, t| {
        let mut m = model.clone();
        *m.params_mut() = s.clone();
        let vars = m
            .forward(t, &mut StageContext::inference(), &text, &ex.input, 2, VerbRoleSource::GroundTruth)
            .unwrap();
        loss_var(t, &vars, &ex.targets).unwrap()
    })
}

fn gradient_suite() -> Outcome {
    let mut rows: Vec<(&str, GradCheckReport)> = op_checks();
    rows.push(("encoder", encoder_check(None, PositionalEmbedding::Sinusoidal)));
    rows.push(("encoder_masked", encoder_check(Some(vec![true, false, true, true, false]), PositionalEmbedding::Sinusoidal)));
    rows.push(("encoder_no_pe", encoder_check(None, PositionalEmbedding::None)));
    rows.push(("linear", linear_check()));
    rows.push(("pipeline_loss", pipeline_check()));
    let worst = rows
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .unwrap();
    let checked: usize = rows.iter().map(|r| r.1.checked).sum();
    let failing: Vec<&str> = rows.iter().filter(|r| r.1.max_rel_error >= GRAD_TOL || r.1.checked == 0).map(|r| r.0).collect();
    verdict(
        failing.is_empty(),
        format!(
            "{} checks over {} ops, max rel err {:.2e} ({}: {}){}",
            checked,
            rows.len(),
            worst.1.max_rel_error,
            worst.0,
            worst.1.worst,
            if failing.is_empty() { String::new() } else { format!(" failing: {failing:?}") }
        ),
    )
}

// -------------------------------------------------------------- 3. feedback

fn feedback_wiring() -> Outcome {
    let dim = 16;
    let schema = random_schema(&SchemaShape::default(), 11);
    let backend = SyntheticBackend::new(dim).unwrap();
    let synth = SynthConfig {
        frames: 3,
        max_objects: 3,
        max_relations_per_object: 2,
        image_size: 16,
        ..SynthConfig::default()
    };
    let mut data = generate_dataset(&schema, &synth, 4);
    // one object without relations exercises the masked zero slot
    let ann = &mut data.annotations[2];
    ann.objects.push(ssg_core::schema::ObjectAnnotation {
        instance_id: "lonely".into(),
        category: schema.object_categories()[0].clone(),
        bbox: BBox::new(1, 1, 4, 4),
        srv: Default::default(),
        unsure: Vec::new(),
    });
    let text = TextBank::build(&schema, &backend).unwrap();
    let mut cfg = ModelConfig::new(dim);
    cfg.encoder = tiny_encoder(dim);
    let model = InComNet::new(&schema, &cfg, 2).unwrap();
    let d = 3;
    let (mut compared, mut missing) = (0usize, 0usize);
    for ex in examples_for(&schema, &data.annotations, &data.images, &backend) {
        let mut trace = ForwardTrace::default();
        model.predict(&text, &ex.input, d, Some(&mut trace)).unwrap();
        if trace.calls_of(Stage::PersonSrv).count() != 1 {
            return Outcome::Fail("stage IV did not run exactly once".into());
        }
        for it in 2..=d {
            for o in 0..ex.input.categories.len() {
                let call = trace.call(Stage::ObjectSrv, it, o).unwrap();
                let slot = call.kv.row(2);
                match ex.input.relation_objects.iter().position(|&r| r == o) {
                    Some(rel) => {
                        let prev = &trace.verb_queries[it - 2][rel];
                        if slot != prev.as_slice() || !call.kv_mask[2] {
                            return Outcome::Fail(format!("iteration {it} object {o}: feedback slot is not Q^R of iteration {}", it - 1));
                        }
                        compared += 1;
                    }
                    None => {
                        if slot.iter().any(|&v| v != 0.0) || call.kv_mask[2] {
                            return Outcome::Fail(format!("object {o} without relations has a visible feedback slot"));
                        }
                        missing += 1;
                    }
                }
            }
        }
        if trace.calls_of(Stage::ObjectSrv).any(|c| c.iteration == 1 && c.kv.rows() != 2 + schema.max_object_roles()) {
            return Outcome::Fail("iteration 1 has a feedback slot".into());
        }
    }
    assert_eq!(cfg.feedback, FeedbackMode::First);
    verdict(
        compared > 0 && missing > 0,
        format!("{compared} feedback slots bit-identical, {missing} relation-less slots zero and masked, stage IV once per frame"),
    )
}

// --------------------------------------------------------------- 4. overfit

const OVERFIT_LR: f64 = 0.003;
const OVERFIT_GAMMA: f64 = 0.99;
const OVERFIT_BATCH: usize = 2;

fn overfit_oracle() -> Outcome {
    let start = Instant::now();
    let dim = 64;
    let schema = reference_schema();
    let data = generate_dataset(&schema, &SynthConfig::default(), 1);
    let backend = SyntheticBackend::new(dim).unwrap();
    let examples = examples_for(&schema, &data.annotations, &data.images, &backend);
    let text = TextBank::build(&schema, &backend).unwrap();
    let cfg = PipelineConfig {
        iterations: 2,
        epochs: 300,
        learning_rate: OVERFIT_LR,
        lr_gamma: OVERFIT_GAMMA,
        batch_size: OVERFIT_BATCH,
        seed: 7,
    };
    let mut model = InComNet::new(&schema, &ModelConfig::new(dim), 3).unwrap();
    let probe_epoch = 9;
    let mut snapshot = None;
    let mut reached = None;
    let report = train(&mut model, &text, &examples, &cfg, |e, m| {
        if e.epoch == probe_epoch {
            snapshot = Some(m.params().export());
        }
        if e.epoch % 10 == 9 {
            let acc = task_accuracy(m, &text, &examples, 2).unwrap();
            if acc.min() >= 0.95 {
                reached = Some((e.epoch + 1, acc));
                return false;
            }
        }
        true
    })
    .unwrap();
    let elapsed = start.elapsed();

    // determinism: an independent rerun reproduces the loss curve and the
    // parameters bit for bit
    let mut rerun = InComNet::new(&schema, &ModelConfig::new(dim), 3).unwrap();
    let short = PipelineConfig {
        epochs: probe_epoch + 1,
        ..cfg.clone()
    };
    let rerun_report = train(&mut rerun, &text, &examples, &short, |_, _| true).unwrap();
    let same_losses = rerun_report
        .epochs
        .iter()
        .zip(&report.epochs)
        .all(|(a, b)| a.loss.to_bits() == b.loss.to_bits());
    let same_params = snapshot.as_ref() == Some(&rerun.params().export());

    let final_acc = task_accuracy(&model, &text, &examples, 2).unwrap();
    let detail = format!(
        "epochs={} acc={{object_srv {:.3}, verb {:.3}, verb_srv {:.3}, person_srv {:.3}}} train_time={:.1}s deterministic={}",
        reached.map(|r| r.0).unwrap_or(report.epochs.len()),
        final_acc.object_srv,
        final_acc.verb,
        final_acc.verb_srv,
        final_acc.person_srv,
        elapsed.as_secs_f64(),
        same_losses && same_params
    );
    verdict(
        reached.is_some() && final_acc.min() >= 0.95 && same_losses && same_params && elapsed < Duration::from_secs(300),
        detail,
    )
}

// ---------------------------------------------------------- 5. joint vs d=1

const DIRECTION_EPOCHS: usize = 100;

fn joint_vs_individual() -> Outcome {
    let dim = 64;
    let mut wins = 0;
    let mut lines = Vec::new();
    for seed in 1..=3u64 {
        let schema = random_schema(&SchemaShape::default(), 100 + seed);
        let synth = SynthConfig {
            structured: true,
            label_noise: 0.2,
            ..SynthConfig::default()
        };
        let data = generate_dataset(&schema, &synth, seed);
        let backend = SyntheticBackend::new(dim).unwrap();
        let noisy = examples_for(&schema, &data.annotations, &data.images, &backend);
        let clean = examples_for(&schema, &data.clean, &data.images, &backend);
        let text = TextBank::build(&schema, &backend).unwrap();
        let mut acc = Vec::new();
        for d in [10usize, 1] {
            let cfg = PipelineConfig {
                iterations: d,
                epochs: DIRECTION_EPOCHS,
                learning_rate: OVERFIT_LR,
                lr_gamma: OVERFIT_GAMMA,
                batch_size: OVERFIT_BATCH,
                seed,
            };
            let mut model = InComNet::new(&schema, &ModelConfig::new(dim), seed).unwrap();
            train(&mut model, &text, &noisy, &cfg, |_, _| true).unwrap();
            acc.push(task_accuracy(&model, &text, &clean, d).unwrap().mean());
        }
        wins += (acc[0] >= acc[1]) as usize;
        lines.push(format!("seed {seed}: d10 {:.4} vs d1 {:.4}", acc[0], acc[1]));
    }
    verdict(wins >= 2, format!("{wins}/3 seeds hold; {}", lines.join("; ")))
}

// --------------------------------------------------------------- 6. metrics

fn rand_srv_record(rng: &mut ChaCha8Rng) -> SrvRecord {
    let kinds = [EntityKind::Object, EntityKind::Verb, EntityKind::Person];
    let pool = ["place", "tool", "state", "texture", "speed"];
    let n = rng.gen_range(1..=4);
    let mut roles: Vec<String> = pool.iter().map(|s| s.to_string()).collect();
    roles.shuffle(rng);
    roles.truncate(n);
    let value = |rng: &mut ChaCha8Rng| format!("v{}", rng.gen_range(0..3));
    SrvRecord {
        kind: kinds[rng.gen_range(0..3)],
        class: format!("c{}", rng.gen_range(0..3)),
        predicted: (0..n).map(|_| if rng.gen_bool(0.15) { None } else { Some(value(rng)) }).collect(),
        gt: (0..n).map(|_| value(rng)).collect(),
        unsure: (0..n).map(|_| rng.gen_bool(0.2)).collect(),
        roles,
    }
}

/// Brute-force SRV oracle: (value, value_two, value_all, role_based_acc),
/// `None` when no record has a scored role.
fn srv_oracle(records: &[SrvRecord]) -> Option<[f64; 4]> {
    let scored = |r: &SrvRecord| -> Vec<(String, bool)> {
        (0..r.roles.len())
            .filter(|&j| !r.unsure[j])
            .map(|j| (format!("{}/{}", r.kind.as_str(), r.roles[j]), r.predicted[j].as_ref() == Some(&r.gt[j])))
            .collect()
    };
    let usable: Vec<Vec<(String, bool)>> = records.iter().map(scored).filter(|s| !s.is_empty()).collect();
    if usable.is_empty() {
        return None;
    }
    let n = usable.len() as f64;
    let frac = |pred: &dyn Fn(&[(String, bool)]) -> bool| usable.iter().filter(|s| pred(s)).count() as f64 / n;
    let hits = |s: &[(String, bool)]| s.iter().filter(|x| x.1).count();
    let value = frac(&|s| hits(s) >= 1);
    let value_two = frac(&|s| if s.len() == 1 { hits(s) == 1 } else { hits(s) >= 2 });
    let value_all = frac(&|s| hits(s) == s.len());
    let mut keys: Vec<&String> = usable.iter().flatten().map(|x| &x.0).collect();
    keys.sort();
    keys.dedup();
    let mut total = 0.0;
    for k in &keys {
        let all: Vec<bool> = usable.iter().flatten().filter(|x| &x.0 == *k).map(|x| x.1).collect();
        total += all.iter().filter(|&&b| b).count() as f64 / all.len() as f64;
    }
    Some([value, value_two, value_all, total / keys.len() as f64])
}

fn constraint_oracle(pairs: &[PairPrediction]) -> f64 {
    let top = |s: &[f64]| (0..s.len()).find(|&j| s.iter().all(|&o| o <= s[j])).unwrap();
    pairs.iter().filter(|p| p.gt.contains(&top(&p.scores))).count() as f64 / pairs.len() as f64
}

/// Recall@k oracle: a triplet is retrieved iff fewer than `k` triplets beat
/// it (higher score, or equal score and smaller (object, predicate)).
fn recall_oracle(frames: &[FrameTriplets], k: usize) -> Option<f64> {
    let mut sum = 0.0;
    let mut used = 0;
    for f in frames {
        let gt: BTreeSet<(usize, usize)> = f.gt.iter().copied().collect();
        if gt.is_empty() {
            continue;
        }
        let beats = |a: &ScoredTriplet, b: &ScoredTriplet| {
            a.score > b.score || (a.score == b.score && (a.object, a.predicate) < (b.object, b.predicate))
        };
        let retrieved = gt
            .iter()
            .filter(|g| {
                f.scored.iter().any(|t| {
                    (t.object, t.predicate) == **g && f.scored.iter().filter(|u| beats(u, t)).count() < k
                })
            })
            .count();
        sum += retrieved as f64 / gt.len() as f64;
        used += 1;
    }
    (used > 0).then(|| sum / used as f64)
}

fn ap_oracle(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let n = scores.len();
    let rank = |i: usize| 1 + (0..n).filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i)).count();
    let mut positives: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    if positives.is_empty() {
        return None;
    }
    positives.sort_by_key(|&i| rank(i));
    let mut total = 0.0;
    for &i in &positives {
        let r = rank(i);
        let above = positives.iter().filter(|&&j| rank(j) <= r).count();
        total += above as f64 / r as f64;
    }
    Some(total / positives.len() as f64)
}

fn map_oracle(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Option<f64> {
    let classes = scores[0].len();
    let aps: Vec<f64> = (0..classes)
        .filter_map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let l: Vec<bool> = labels.iter().map(|r| r[c]).collect();
            ap_oracle(&s, &l)
        })
        .collect();
    (!aps.is_empty()).then(|| aps.iter().sum::<f64>() / aps.len() as f64)
}

fn coarse(rng: &mut ChaCha8Rng) -> f64 {
    // few distinct values so that ties are common
    rng.gen_range(0..6) as f64 * 0.2
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut compared = 0usize;
    for inst in 0..1000 {
        // SRV metrics
        let records: Vec<SrvRecord> = (0..rng.gen_range(1..=8)).map(|_| rand_srv_record(&mut rng)).collect();
        match (srv_metrics(&records, SrvOptions::default()), srv_oracle(&records)) {
            (Ok(rep), Some(o)) => {
                let got = [
                    rep.get("value").unwrap(),
                    rep.get("value_two").unwrap(),
                    rep.get("value_all").unwrap(),
                    rep.get("role_based_acc").unwrap(),
                ];
                if got != o {
                    return Outcome::Fail(format!("instance {inst}: srv metrics {got:?} != oracle {o:?}"));
                }
                if !(got[0] >= got[1] && got[1] >= got[2]) {
                    return Outcome::Fail(format!("instance {inst}: value ordering violated {got:?}"));
                }
                compared += 4;
            }
            (Err(_), None) => {}
            (a, b) => return Outcome::Fail(format!("instance {inst}: srv availability differs ({:?} vs {:?})", a.is_ok(), b)),
        }

        // with-constraint accuracy
        let classes = rng.gen_range(2..=6);
        let pairs: Vec<PairPrediction> = (0..rng.gen_range(1..=6))
            .map(|_| PairPrediction {
                scores: (0..classes).map(|_| coarse(&mut rng)).collect(),
                gt: {
                    let mut g: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0..classes)).collect();
                    g.dedup();
                    g
                },
            })
            .collect();
        let got = verb_accuracy_with_constraint(&pairs).unwrap();
        if got != constraint_oracle(&pairs) {
            return Outcome::Fail(format!("instance {inst}: with-constraint accuracy {got} != oracle"));
        }
        compared += 1;

        // Recall@k
        let predicates = rng.gen_range(2..=16);
        let frames: Vec<FrameTriplets> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let objects = rng.gen_range(1..=4);
                let mut combos: Vec<(usize, usize)> =
                    (0..objects).flat_map(|o| (0..predicates).map(move |p| (o, p))).collect();
                combos.shuffle(&mut rng);
                combos.truncate(rng.gen_range(0..=combos.len()));
                FrameTriplets {
                    scored: combos
                        .iter()
                        .map(|&(object, predicate)| ScoredTriplet {
                            object,
                            predicate,
                            score: coarse(&mut rng),
                        })
                        .collect(),
                    gt: (0..rng.gen_range(0..=4))
                        .map(|_| (rng.gen_range(0..objects), rng.gen_range(0..predicates)))
                        .collect(),
                }
            })
            .collect();
        for k in [10, 20, 50] {
            match (recall_at_k(&frames, k), recall_oracle(&frames, k)) {
                (Ok(r), Some(o)) if r.recall == o => compared += 1,
                (Err(_), None) => {}
                (a, b) => return Outcome::Fail(format!("instance {inst}: recall@{k} {:?} != oracle {b:?}", a.map(|r| r.recall))),
            }
        }

        // mAP
        let n = rng.gen_range(1..=12);
        let c = rng.gen_range(1..=5);
        let scores: Vec<Vec<f64>> = (0..n).map(|_| (0..c).map(|_| coarse(&mut rng)).collect()).collect();
        let labels: Vec<Vec<bool>> = (0..n).map(|_| (0..c).map(|_| rng.gen_bool(0.35)).collect()).collect();
        match (multilabel_map(&scores, &labels), map_oracle(&scores, &labels)) {
            (Ok(r), Some(o)) if r.map == o => compared += 1,
            (Err(_), None) => {}
            (a, b) => return Outcome::Fail(format!("instance {inst}: mAP {:?} != oracle {b:?}", a.map(|r| r.map))),
        }
    }
    Outcome::Pass(format!("1000 instances, {compared} exact comparisons, value >= value_two >= value_all held"))
}

// ---------------------------------------------------------------- 7. prompt

fn rand_box(rng: &mut ChaCha8Rng, w: u32, h: u32) -> BBox {
    // may stick out of the frame, always overlaps it
    let x = rng.gen_range(-5..w as i64);
    let y = rng.gen_range(-5..h as i64);
    let bw = rng.gen_range(1..=w as i64).max(6 - x.min(0));
    let bh = rng.gen_range(1..=h as i64).max(6 - y.min(0));
    BBox::new(x, y, bw, bh)
}

fn prompt_bit_exactness() -> Outcome {
    const PINK: [u8; 3] = [255, 192, 203];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut pixels = 0usize;
    for case in 0..100 {
        let (w, h) = (rng.gen_range(1..=48), rng.gen_range(1..=48));
        let img = RgbImage::from_fn(w, h, |_, _| Rgb([rng.gen(), rng.gen(), rng.gen()]));
        let boxes: Vec<BBox> = (0..rng.gen_range(1..=2)).map(|_| rand_box(&mut rng, w, h)).collect();
        let inside = |x: u32, y: u32| {
            boxes
                .iter()
                .any(|b| (x as i64) >= b.x && (x as i64) < b.x + b.w && (y as i64) >= b.y && (y as i64) < b.y + b.h)
        };
        let region = Region { boxes: boxes.clone() };
        let bg = apply_prompt(&img, &region, &PromptSpec::new(PromptKind::TranslucentBackground)).unwrap();
        let color = apply_prompt(&img, &region, &PromptSpec::new(PromptKind::Color)).unwrap();
        let pad = apply_prompt(&img, &region, &PromptSpec::new(PromptKind::Padding)).unwrap();
        if bg.dimensions() != img.dimensions() || color.dimensions() != img.dimensions() || pad.dimensions() != img.dimensions() {
            return Outcome::Fail(format!("case {case}: output size changed"));
        }
        for (x, y, p) in img.enumerate_pixels() {
            // round(0.5·pink + 0.5·pixel) with halves rounded up, in integers
            let blended = Rgb([0, 1, 2].map(|c| ((u16::from(PINK[c]) + u16::from(p[c]) + 1) / 2) as u8));
            let (b, c, z) = (bg.get_pixel(x, y), color.get_pixel(x, y), pad.get_pixel(x, y));
            let ok = if inside(x, y) {
                b == p && c == &blended && z == p
            } else {
                b == &blended && c == p && z == &Rgb([0, 0, 0])
            };
            if !ok {
                return Outcome::Fail(format!("case {case}: pixel ({x},{y}) inside={} wrong", inside(x, y)));
            }
            pixels += 1;
        }
    }
    Outcome::Pass(format!("100 images, {pixels} pixels checked for all three prompt kinds"))
}

// ------------------------------------------------------------------- 8. MCQ

fn closed_form_counts(ann: &SsgAnnotation, schema: &FrameStructure) -> [usize; 4] {
    let scored = |roles: &[String], srv: &indexmap::IndexMap<String, String>, unsure: &[String]| {
        roles.iter().filter(|r| srv.contains_key(*r) && !unsure.contains(r)).count()
    };
    let objects = ann
        .objects
        .iter()
        .map(|o| scored(schema.object_roles(schema.category_index(&o.category).unwrap()), &o.srv, &o.unsure))
        .sum();
    let verbs = ann
        .relations
        .iter()
        .map(|r| scored(schema.verb_roles(schema.predicate_index(&r.predicate).unwrap()), &r.srv, &r.unsure))
        .sum();
    [ann.relations.len(), objects, verbs, scored(schema.person_roles(), &ann.person.srv, &ann.person.unsure)]
}

fn mcq_checks() -> Outcome {
    let schema = random_schema(
        &SchemaShape {
            values_per_role: 6,
            predicates: 6,
            ..SchemaShape::default()
        },
        8,
    );
    let synth = SynthConfig {
        frames: 80,
        max_relations_per_object: 2,
        unsure_rate: 0.15,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&schema, &synth, 8);
    let gen = |seed| -> Vec<_> {
        data.annotations
            .iter()
            .flat_map(|a| generate_mcq(a, &schema, McqPolicy::FourOptions, seed).unwrap())
            .collect()
    };
    let items = gen(7);
    let again = gen(7);
    let identical = write_questions(&items) == write_questions(&again) && write_key(&items) == write_key(&again);
    if !identical {
        return Outcome::Fail("regeneration with the same seed differs".into());
    }
    for ann in &data.annotations {
        let want = closed_form_counts(ann, &schema);
        let got = generate_mcq(ann, &schema, McqPolicy::FourOptions, 7).unwrap();
        let per_task = McqTask::ALL.map(|t| got.iter().filter(|i| i.task == t).count());
        if per_task != want {
            return Outcome::Fail(format!("frame {}: counts {per_task:?} != closed form {want:?}", ann.frame_id));
        }
    }
    if items.len() < 1000 {
        return Outcome::Fail(format!("only {} items generated", items.len()));
    }
    let pool = &items[..1000];
    if pool.iter().any(|i| i.options.len() != 4) {
        return Outcome::Fail("an item does not have four options".into());
    }
    let key: Vec<KeyRecord> = parse_jsonl(&write_key(pool)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let answers: Vec<AnswerRecord> = pool
        .iter()
        .map(|i| AnswerRecord {
            id: i.id.clone(),
            answer: Some(rng.gen_range(1..=4)),
        })
        .collect();
    let acc = score_mcq(&answers, &key).unwrap().accuracy();
    verdict(
        (0.20..=0.30).contains(&acc),
        format!("{} items byte-identical on regeneration, per-frame counts match, random-guess accuracy {acc:.3}", items.len()),
    )
}

// --------------------------------------------------------------- 9. dataset

fn dataset_conditional() -> Outcome {
    let Some(dir) = std::env::var_os("SSG_DATASET_DIR") else {
        return Outcome::Skip("SSG_DATASET_DIR not set".into());
    };
    let dir = std::path::PathBuf::from(dir);
    let path = if dir.join("annotations").is_dir() { dir.join("annotations") } else { dir };
    let anns = match load_dataset(&path) {
        Ok(a) => a,
        Err(e) => return Outcome::Fail(format!("cannot load {}: {e}", path.display())),
    };
    let s = dataset_stats(&anns).unwrap();
    let close = |got: f64, want: f64| (got - want).abs() <= 0.01;
    verdict(
        s.frame_count == 25_541
            && close(s.objects_per_frame, 2.36)
            && close(s.relations_per_frame, 2.03)
            && close(s.person_srv_pairs_per_frame, 5.0)
            && close(s.actions_per_frame, 3.41),
        format!(
            "frames={} objects/frame={:.3} relations/frame={:.3} person_pairs/frame={:.3} actions/frame={:.3}",
            s.frame_count, s.objects_per_frame, s.relations_per_frame, s.person_srv_pairs_per_frame, s.actions_per_frame
        ),
    )
}

#[test]
fn acceptance_criteria() {
    type Check = fn() -> Outcome;
    let criteria: [(usize, &str, Check, Option<Duration>); 9] = [
        (1, "shape suite", shape_suite, Some(Duration::from_secs(30))),
        (2, "gradient suite", gradient_suite, Some(Duration::from_secs(120))),
        (3, "feedback wiring", feedback_wiring, None),
        (4, "overfit oracle", overfit_oracle, Some(Duration::from_secs(300))),
        (5, "joint vs individual", joint_vs_individual, None),
        (6, "metric oracles", metric_oracles, None),
        (7, "prompt bit-exactness", prompt_bit_exactness, None),
        (8, "mcq determinism and counts", mcq_checks, None),
        (9, "dataset statistics", dataset_conditional, None),
    ];
    let mut failed = Vec::new();
    for (id, name, check, budget) in criteria {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Outcome::Pass(d), Some(b)) = (&outcome, budget) {
            if elapsed > b {
                outcome = Outcome::Fail(format!("{d}; over the {}s budget", b.as_secs()));
            }
        }
        report(id, name, elapsed, &outcome);
        if let Outcome::Fail(_) = outcome {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
