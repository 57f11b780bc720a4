mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use ssg_core::embed::backend_from_spec;
use ssg_core::harness::{
    action_vocabulary, build_action_sequence, generate_mcq, parse_jsonl, score_mcq, situation_recognition_eval,
    train_action_classifier, video_labels, write_key, write_questions, ActionCheckpoint, ActionClassifier,
    ActionClassifierConfig, ActionSequence, ActionSequenceConfig, ActionTrainConfig, AnswerRecord, KeyRecord,
    McqPolicy,
};
use ssg_core::incomnet::{
    frame_features, prepare_examples, train, FrameInput, FramePrediction, PredictionFile, TextBank,
};
use ssg_core::metrics::{evaluate, EvalSetting, SingleRoleValueTwo, SrvOptions};
use ssg_core::nn::EncoderConfig;
use ssg_core::schema::{dataset_stats, load_dataset, load_schema, validate_dataset};
use ssg_core::synth::{generate_dataset, random_schema, reference_schema, SchemaShape, SynthConfig};
use ssg_core::{apply_prompt, Checkpoint, FrameStructure, InComNet, ModelConfig, PipelineConfig, PromptKind, PromptSpec, Region, SsgAnnotation};

#[derive(Parser)]
#[command(name = "ssg", version, about = "Situational scene graph toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check annotations against a schema; exits 1 when any error is found.
    Validate {
        path: PathBuf,
        #[arg(long)]
        schema: PathBuf,
    },
    /// Dataset statistics.
    Stats {
        path: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a visual prompt to an image.
    Prompt(PromptArgs),
    /// Generate a synthetic dataset: schema.json, annotations/ and images/.
    Synth(SynthArgs),
    /// Train the generation pipeline.
    Train(TrainArgs),
    /// Predict situational scene graphs with a trained checkpoint.
    Infer(InferArgs),
    /// Score a prediction file against annotations.
    Eval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value = "top1")]
        setting: String,
        #[command(flatten)]
        srv: SrvArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate multiple-choice questions and their answer key.
    McqGen {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[arg(long, default_value = "four_options")]
        policy: String,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Key file; defaults to `<out>.key`.
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Score multiple-choice answers against a key.
    McqScore {
        #[arg(long)]
        answers: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Situation-recognition evaluation of a prediction file.
    SitrecEval {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        schema: PathBuf,
        #[command(flatten)]
        srv: SrvArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a multi-label action classifier over SSG token sequences.
    ActionTrain(ActionTrainArgs),
    /// Mean average precision of an action classifier.
    ActionEval(ActionEvalArgs),
}

#[derive(Args)]
struct PromptArgs {
    #[arg(long, default_value = "translucent_background")]
    kind: String,
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    #[arg(long, default_value = "255,192,203")]
    rgb: String,
    /// `x,y,w,h`; repeat for a union of boxes.
    #[arg(long, required = true)]
    bbox: Vec<String>,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    frames: usize,
    #[arg(long, default_value_t = 4)]
    frames_per_video: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Role values follow the (category, predicate) pair.
    #[arg(long)]
    structured: bool,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long, default_value_t = 0.0)]
    unsure_rate: f64,
    /// Draw a random schema instead of the built-in reference schema.
    #[arg(long)]
    random_schema: bool,
}

#[derive(Args)]
struct BackendArgs {
    /// `synthetic` or `external:<table.json>`.
    #[arg(long, default_value = "synthetic")]
    backend: String,
    #[arg(long, default_value_t = 512)]
    dim: usize,
}

#[derive(Args)]
struct PromptKindArg {
    /// Visual prompt used for object and relation crops.
    #[arg(long = "prompt", default_value = "translucent_background")]
    prompt_kind: String,
}

impl PromptKindArg {
    fn spec(&self) -> Result<PromptSpec> {
        Ok(PromptSpec::new(self.prompt_kind.parse()?))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    /// Frame images as `<dir>/<video_id>/<frame_id>[.png]`; defaults to
    /// `images/` next to the data path.
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[command(flatten)]
    prompt: PromptKindArg,
    #[arg(long, default_value_t = ssg_core::incomnet::DEFAULT_ITERATIONS)]
    iters: usize,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = ssg_core::incomnet::DEFAULT_LEARNING_RATE)]
    lr: f64,
    #[arg(long, default_value_t = ssg_core::incomnet::DEFAULT_LR_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// Encoder layers per stage.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    /// Overrides the backend recorded in the checkpoint.
    #[arg(long)]
    backend: Option<String>,
    #[command(flatten)]
    prompt: PromptKindArg,
    /// Overrides the training iteration count.
    #[arg(long)]
    iters: Option<usize>,
    /// Decode each role only among its own candidate values.
    #[arg(long)]
    restrict_roles: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SingleRoleArg {
    RoleCorrect,
    Incorrect,
}

#[derive(Args)]
struct SrvArgs {
    /// value_two of a record with a single scored role.
    #[arg(long, value_enum, default_value = "role-correct")]
    single_role_value_two: SingleRoleArg,
}

impl SrvArgs {
    fn options(&self) -> SrvOptions {
        SrvOptions {
            single_role_value_two: match self.single_role_value_two {
                SingleRoleArg::RoleCorrect => SingleRoleValueTwo::RoleCorrect,
                SingleRoleArg::Incorrect => SingleRoleValueTwo::Incorrect,
            },
        }
    }
}

#[derive(Args)]
struct ActionTrainArgs {
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Keep every n-th frame of a video.
    #[arg(long, default_value_t = 1)]
    frame_stride: usize,
    /// Hidden size of the classifier; tokens are projected when it differs
    /// from the token dimension.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 0.95)]
    gamma: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ActionEvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    images: Option<PathBuf>,
    #[arg(long, default_value = "synthetic")]
    backend: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn images_dir(images: Option<&Path>, data: &Path) -> PathBuf {
    images.map(Path::to_path_buf).unwrap_or_else(|| {
        let parent = data.parent().unwrap_or_else(|| Path::new("."));
        parent.join("images")
    })
}

fn load_checked(data: &Path, schema: &FrameStructure) -> Result<Vec<SsgAnnotation>> {
    let anns = load_dataset(data)?;
    let report = validate_dataset(&anns, schema);
    if !report.is_accepted() {
        bail!("{} does not validate against the schema:\n{report}", data.display());
    }
    Ok(anns)
}

fn cmd_validate(path: &Path, schema: &Path) -> Result<ExitCode> {
    let schema = load_schema(schema)?;
    let anns = load_dataset(path)?;
    let report = validate_dataset(&anns, &schema);
    print!("{report}");
    Ok(if report.is_accepted() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_stats(path: &Path, schema: &Path, out: Option<&Path>) -> Result<()> {
    let schema = load_schema(schema)?;
    let anns = load_checked(path, &schema)?;
    emit(&dataset_stats(&anns)?.to_string(), out)
}

fn cmd_prompt(a: &PromptArgs) -> Result<()> {
    let kind: PromptKind = a.kind.parse()?;
    let spec = PromptSpec {
        kind,
        overlay_rgb: io::parse_rgb(&a.rgb)?,
        alpha: a.alpha,
    };
    let boxes = a.bbox.iter().map(|s| io::parse_bbox(s)).collect::<Result<Vec<_>>>()?;
    let img = image::open(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?
        .to_rgb8();
    let out = apply_prompt(&img, &Region { boxes }, &spec)?;
    io::save_image(&a.output, &out)
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let schema = if a.random_schema {
        random_schema(&SchemaShape::default(), a.seed)
    } else {
        reference_schema()
    };
    let cfg = SynthConfig {
        frames: a.frames,
        frames_per_video: a.frames_per_video,
        structured: a.structured,
        label_noise: a.label_noise,
        unsure_rate: a.unsure_rate,
        ..SynthConfig::default()
    };
    let data = generate_dataset(&schema, &cfg, a.seed);
    io::write_text(&a.out.join("schema.json"), &schema.to_json_string())?;
    io::write_dataset(&a.out.join("annotations"), &data.annotations)?;
    if a.label_noise > 0.0 {
        io::write_dataset(&a.out.join("clean"), &data.clean)?;
    }
    for (ann, img) in data.annotations.iter().zip(&data.images) {
        let mut path = a.out.join("images").join(&ann.video_id).join(&ann.frame_id);
        if path.extension().is_none() {
            path.set_extension("png");
        }
        io::save_image(&path, img)?;
    }
    info!("wrote {} frames to {}", data.annotations.len(), a.out.display());
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let anns = load_checked(&a.data, &schema)?;
    let images = io::load_frame_images(&images_dir(a.images.as_deref(), &a.data), &anns)?;
    let backend = backend_from_spec(&a.backend.backend, a.backend.dim)?;
    let examples = prepare_examples(&anns, &images, &schema, backend.as_ref(), &a.prompt.spec()?)?;
    let text = TextBank::build(&schema, backend.as_ref())?;
    let mut model_cfg = ModelConfig::new(a.backend.dim);
    if let Some(l) = a.layers {
        model_cfg.encoder.layers = l;
    }
    let pipeline = PipelineConfig {
        iterations: a.iters,
        learning_rate: a.lr,
        lr_gamma: a.gamma,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
    };
    let mut model = InComNet::new(&schema, &model_cfg, a.seed)?;
    info!("training {} parameters on {} frames", model.params().scalar_count(), examples.len());
    let report = train(&mut model, &text, &examples, &pipeline, |e, _| {
        info!("epoch {} loss {:.4} lr {:.6}", e.epoch, e.loss, e.lr);
        true
    })?;
    Checkpoint::capture(&model, &schema, &pipeline, &a.backend.backend).save(&a.out)?;
    println!("epochs={}", report.epochs.len());
    println!("final_loss={:.6}", report.final_loss().unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_infer(a: &InferArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.ckpt)?;
    let schema = ckpt.schema()?;
    let model = ckpt.restore(&schema)?;
    let anns = load_checked(&a.data, &schema)?;
    let images = io::load_frame_images(&images_dir(a.images.as_deref(), &a.data), &anns)?;
    let backend = backend_from_spec(a.backend.as_deref().unwrap_or(&ckpt.backend), model.dim())?;
    let text = TextBank::build(&schema, backend.as_ref())?;
    let prompt = a.prompt.spec()?;
    let iterations = a.iters.unwrap_or(ckpt.pipeline.iterations);
    let mut frames = Vec::with_capacity(anns.len());
    for (ann, img) in anns.iter().zip(&images) {
        let input = FrameInput::new(ann, &schema, frame_features(ann, img, backend.as_ref(), &prompt)?)?;
        let pred = model.predict(&text, &input, iterations, None)?;
        frames.push(FramePrediction::build(ann, &schema, &pred, a.restrict_roles)?);
    }
    PredictionFile::new(&schema, iterations, a.restrict_roles, frames).save(&a.out)?;
    info!("wrote predictions for {} frames", anns.len());
    Ok(())
}

fn cmd_eval(preds: &Path, gt: &Path, schema: &Path, setting: &str, srv: &SrvArgs, out: Option<&Path>) -> Result<()> {
    let schema = load_schema(schema)?;
    let gts = load_checked(gt, &schema)?;
    let preds = PredictionFile::load(preds)?;
    let setting: EvalSetting = setting.parse()?;
    emit(&evaluate(&preds, &gts, &schema, setting, srv.options())?.to_string(), out)
}

fn cmd_mcq_gen(data: &Path, schema: &Path, policy: &str, seed: u64, out: &Path, key: Option<&Path>) -> Result<()> {
    let schema = load_schema(schema)?;
    let anns = load_checked(data, &schema)?;
    let policy: McqPolicy = policy.parse()?;
    let mut items = Vec::new();
    for ann in &anns {
        items.extend(generate_mcq(ann, &schema, policy, seed)?);
    }
    let key_path = key.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".key");
        PathBuf::from(p)
    });
    io::write_text(out, &write_questions(&items))?;
    io::write_text(&key_path, &write_key(&items))?;
    println!("questions={}", items.len());
    Ok(())
}

fn cmd_mcq_score(answers: &Path, key: &Path, out: Option<&Path>) -> Result<()> {
    let answers: Vec<AnswerRecord> = parse_jsonl(&io::read_text(answers)?)?;
    let key: Vec<KeyRecord> = parse_jsonl(&io::read_text(key)?)?;
    emit(&score_mcq(&answers, &key)?.to_string(), out)
}

fn cmd_sitrec(preds: &Path, gt: &Path, schema: &Path, srv: &SrvArgs, out: Option<&Path>) -> Result<()> {
    let schema = load_schema(schema)?;
    let gts = load_checked(gt, &schema)?;
    let preds = PredictionFile::load(preds)?;
    emit(&situation_recognition_eval(&preds, &gts, &schema, srv.options())?.to_string(), out)
}

/// One token sequence and multi-hot label per video.
fn video_sequences(
    schema: &FrameStructure,
    data: &Path,
    images: Option<&Path>,
    backend: &str,
    seq_cfg: &ActionSequenceConfig,
    vocab: Option<&[String]>,
) -> Result<(Vec<String>, Vec<(ActionSequence, Vec<bool>)>)> {
    let anns = load_checked(data, schema)?;
    let images = io::load_frame_images(&images_dir(images, data), &anns)?;
    let backend = backend_from_spec(backend, seq_cfg.token_dim)?;
    let vocab = match vocab {
        Some(v) => v.to_vec(),
        None => action_vocabulary(&anns),
    };
    // frame indices per video, in first-seen order
    let mut videos: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, a) in anns.iter().enumerate() {
        match videos.iter_mut().find(|(v, _)| *v == a.video_id) {
            Some((_, idx)) => idx.push(i),
            None => videos.push((&a.video_id, vec![i])),
        }
    }
    let mut out = Vec::with_capacity(videos.len());
    for (_, idx) in &videos {
        let frames: Vec<(&SsgAnnotation, &image::RgbImage)> = idx.iter().map(|&i| (&anns[i], &images[i])).collect();
        let refs: Vec<&SsgAnnotation> = idx.iter().map(|&i| &anns[i]).collect();
        let seq = build_action_sequence(&frames, schema, backend.as_ref(), seq_cfg)?;
        out.push((seq, video_labels(&refs, &vocab)));
    }
    Ok((vocab, out))
}

fn cmd_action_train(a: &ActionTrainArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let seq_cfg = ActionSequenceConfig {
        token_dim: a.backend.dim,
        frame_stride: a.frame_stride,
    };
    let (vocab, data) = video_sequences(&schema, &a.data, a.images.as_deref(), &a.backend.backend, &seq_cfg, None)?;
    if vocab.is_empty() {
        bail!("no action labels in {}", a.data.display());
    }
    let mut encoder = EncoderConfig::new(a.hidden);
    encoder.layers = a.layers;
    let mut clf = ActionClassifier::new(seq_cfg.token_dim, vocab, &ActionClassifierConfig { encoder }, a.seed)?;
    let train_cfg = ActionTrainConfig {
        epochs: a.epochs,
        learning_rate: a.lr,
        lr_gamma: a.gamma,
        seed: a.seed,
    };
    let losses = train_action_classifier(&mut clf, &data, &train_cfg)?;
    ActionCheckpoint::capture(&clf, seq_cfg).save(&a.out)?;
    println!("videos={}", data.len());
    println!("final_loss={:.6}", losses.last().copied().unwrap_or(f64::NAN));
    Ok(())
}

fn cmd_action_eval(a: &ActionEvalArgs) -> Result<()> {
    let schema = load_schema(&a.schema)?;
    let ckpt = ActionCheckpoint::load(&a.ckpt)?;
    let clf = ckpt.restore()?;
    let (_, data) = video_sequences(&schema, &a.data, a.images.as_deref(), &a.backend, &ckpt.sequence, Some(clf.classes()))?;
    let report = clf.evaluate(&data)?;
    let mut text = format!("map={:.6}\ncount.videos={}\n", report.map, data.len());
    for (c, ap) in clf.classes().iter().zip(&report.per_class) {
        match ap {
            Some(v) => text.push_str(&format!("ap.{c}={v:.6}\n")),
            None => text.push_str(&format!("ap.{c}=nan\n")),
        }
    }
    emit(&text, a.out.as_deref())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { path, schema } => return cmd_validate(&path, &schema),
        Command::Stats { path, schema, out } => cmd_stats(&path, &schema, out.as_deref())?,
        Command::Prompt(a) => cmd_prompt(&a)?,
        Command::Synth(a) => cmd_synth(&a)?,
        Command::Train(a) => cmd_train(&a)?,
        Command::Infer(a) => cmd_infer(&a)?,
        Command::Eval {
            preds,
            gt,
            schema,
            setting,
            srv,
            out,
        } => cmd_eval(&preds, &gt, &schema, &setting, &srv, out.as_deref())?,
        Command::McqGen {
            data,
            schema,
            policy,
            seed,
            out,
            key,
        } => cmd_mcq_gen(&data, &schema, &policy, seed, &out, key.as_deref())?,
        Command::McqScore { answers, key, out } => cmd_mcq_score(&answers, &key, out.as_deref())?,
        Command::SitrecEval {
            preds,
            gt,
            schema,
            srv,
            out,
        } => cmd_sitrec(&preds, &gt, &schema, &srv, out.as_deref())?,
        Command::ActionTrain(a) => cmd_action_train(&a)?,
        Command::ActionEval(a) => cmd_action_eval(&a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
