//! End-to-end behaviour of the generation pipeline on small synthetic data.

use image::RgbImage;
use ssg_core::embed::SyntheticBackend;
use ssg_core::incomnet::{
    compute_loss, loss_var, prepare_examples, FramePrediction, PredictionFile, StageContext, TextBank,
    TrainingExample, VerbRoleSource,
};
use ssg_core::nn::{EncoderConfig, ParamGrads, Tape};
use ssg_core::synth::{generate_dataset, random_schema, SchemaShape, SynthConfig};
use ssg_core::{Checkpoint, FrameStructure, InComNet, ModelConfig, PipelineConfig, PromptSpec, SsgAnnotation};

const DIM: usize = 16;

struct Fixture {
    schema: FrameStructure,
    anns: Vec<SsgAnnotation>,
    images: Vec<RgbImage>,
    text: TextBank,
    examples: Vec<TrainingExample>,
    model: InComNet,
}

fn small_config() -> ModelConfig {
    let mut cfg = ModelConfig::new(DIM);
    cfg.encoder = EncoderConfig {
        heads: 2,
        layers: 1,
        ffn_dim: 2 * DIM,
        ..EncoderConfig::new(DIM)
    };
    cfg
}

fn fixture(seed: u64) -> Fixture {
    let schema = random_schema(&SchemaShape::default(), seed);
    let synth = SynthConfig {
        frames: 4,
        max_relations_per_object: 2,
        image_size: 16,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&schema, &synth, seed);
    let backend = SyntheticBackend::new(DIM).unwrap();
    let text = TextBank::build(&schema, &backend).unwrap();
    let examples = prepare_examples(&data.annotations, &data.images, &schema, &backend, &PromptSpec::default()).unwrap();
    let model = InComNet::new(&schema, &small_config(), seed).unwrap();
    Fixture {
        schema,
        anns: data.annotations,
        images: data.images,
        text,
        examples,
        model,
    }
}

#[test]
fn verb_role_loss_reaches_verb_stage() {
    let f = fixture(1);
    let ex = &f.examples[0];
    let mut tape = Tape::new();
    let vars = f
        .model
        .forward(&mut tape, &mut StageContext::inference(), &f.text, &ex.input, 1, VerbRoleSource::GroundTruth)
        .unwrap();
    let it = &vars.iterations[0];
    let terms: Vec<_> = it
        .verb_role_logits
        .iter()
        .zip(&ex.targets.verb_roles)
        .map(|(&l, t)| tape.cross_entropy(l, t))
        .collect();
    let loss = tape.add_scalars(&terms).unwrap();
    let grads = tape.backward(loss);
    let mut acc = ParamGrads::zeros_like(f.model.params());
    tape.accumulate_param_grads(&grads, &mut acc);
    let store = f.model.params();
    let stage2_norm: f64 = store
        .ids()
        .filter(|&id| store.name(id).starts_with("stage2"))
        .map(|id| acc.get(id).data().iter().map(|g| g * g).sum::<f64>())
        .sum();
    assert!(stage2_norm > 0.0, "no gradient from the verb-role loss into the verb stage");
    let stage4_norm: f64 = store
        .ids()
        .filter(|&id| store.name(id).starts_with("stage4"))
        .map(|id| acc.get(id).data().iter().map(|g| g * g).sum::<f64>())
        .sum();
    assert_eq!(stage4_norm, 0.0, "person stage does not feed the verb-role loss");
}

#[test]
fn tape_loss_matches_stored_logit_loss() {
    let f = fixture(2);
    for ex in &f.examples {
        for d in [1, 3] {
            let mut tape = Tape::new();
            let vars = f
                .model
                .forward(&mut tape, &mut StageContext::inference(), &f.text, &ex.input, d, VerbRoleSource::GroundTruth)
                .unwrap();
            let loss = loss_var(&mut tape, &vars, &ex.targets).unwrap();
            let on_tape = tape.scalar(loss);
            let pred = f.model.snapshot(&tape, &vars, Vec::new());
            let stored = compute_loss(&pred, &ex.targets).unwrap();
            assert!((on_tape - stored).abs() <= 1e-9 * on_tape.abs().max(1.0), "{on_tape} vs {stored}");
        }
    }
}

#[test]
fn loss_sums_over_iterations() {
    let f = fixture(3);
    let ex = &f.examples[0];
    let mut tape = Tape::new();
    let vars = f
        .model
        .forward(&mut tape, &mut StageContext::inference(), &f.text, &ex.input, 2, VerbRoleSource::GroundTruth)
        .unwrap();
    let mut pred = f.model.snapshot(&tape, &vars, Vec::new());
    let total = compute_loss(&pred, &ex.targets).unwrap();

    // per-iteration loss L_i = total with only iteration i kept, minus the
    // person term counted in each
    let person_only = {
        let mut p = pred.clone();
        p.history.clear();
        compute_loss(&p, &ex.targets).unwrap()
    };
    let per_iter: Vec<f64> = (0..2)
        .map(|i| {
            let mut p = pred.clone();
            p.history = vec![pred.history[i].clone()];
            compute_loss(&p, &ex.targets).unwrap() - person_only
        })
        .collect();
    assert!((total - (per_iter[0] + per_iter[1] + person_only)).abs() < 1e-9);

    // duplicated history doubles the iteration part
    pred.history = vec![pred.history[0].clone(), pred.history[0].clone()];
    let doubled = compute_loss(&pred, &ex.targets).unwrap();
    assert!((doubled - (2.0 * per_iter[0] + person_only)).abs() < 1e-9);
}

#[test]
fn history_has_one_entry_per_iteration() {
    let f = fixture(4);
    let ex = &f.examples[1];
    for d in 1..=4 {
        let pred = f.model.predict(&f.text, &ex.input, d, None).unwrap();
        assert_eq!(pred.history.len(), d);
        assert_eq!(pred.last(), &pred.history[d - 1]);
        assert!(pred.is_finite());
    }
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let f = fixture(5);
    let pipeline = PipelineConfig {
        iterations: 2,
        epochs: 2,
        ..PipelineConfig::default()
    };
    let ckpt = Checkpoint::capture(&f.model, &f.schema, &pipeline, "synthetic");
    let back = Checkpoint::from_json_str(&ckpt.to_json_string()).unwrap();
    let schema = back.schema().unwrap();
    assert_eq!(schema.hash(), f.schema.hash());
    let restored = back.restore(&schema).unwrap();
    for ex in &f.examples {
        let a = f.model.predict(&f.text, &ex.input, 2, None).unwrap();
        let b = restored.predict(&f.text, &ex.input, 2, None).unwrap();
        assert_eq!(a, b);
    }

    let other = random_schema(&SchemaShape::default(), 999);
    assert_ne!(other.hash(), f.schema.hash());
    assert!(back.restore(&other).is_err());
}

#[test]
fn prediction_file_round_trip() {
    let f = fixture(6);
    let frames = f
        .anns
        .iter()
        .zip(&f.examples)
        .map(|(ann, ex)| {
            let pred = f.model.predict(&f.text, &ex.input, 2, None).unwrap();
            FramePrediction::build(ann, &f.schema, &pred, true).unwrap()
        })
        .collect();
    let file = PredictionFile::new(&f.schema, 2, true, frames);
    let back = PredictionFile::from_json_str(&file.to_json_string()).unwrap();
    assert_eq!(back, file);
    assert_eq!(back.frames.len(), f.images.len());
    // restricted decoding stays inside each role's own value set
    for (frame, ann) in back.frames.iter().zip(&f.anns) {
        assert_eq!(frame.objects.len(), ann.objects.len());
        for r in frame.objects.iter().flat_map(|o| &o.roles).chain(&frame.person) {
            assert!(f.schema.role_values(&r.role).contains(&r.value));
        }
    }
}
