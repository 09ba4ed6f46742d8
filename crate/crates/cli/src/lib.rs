//! Command-line pipeline: train, decode, classify, evaluate, inspect and synth.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use frame_induction::corpus::{build_vocab, index_corpus, load_corpus, parse_jsonl};
use frame_induction::evaluate::{fit_mapping, score, GoldEntity, ScoreReport, SlotMapping};
use frame_induction::extract::{
    classify_corpus, decode_corpus, dump_frames, entities_to_jsonl, restrict_to_frames,
    ExtractedEntity, DEFAULT_TRIGGER_THRESHOLD,
};
use frame_induction::learn::{train, EmMode, TrainConfig, TrainSchedule, TrainingReport};
use frame_induction::params::{
    deserialize, serialize, ModelFile, Smoothing, StructureConfig, DEFAULT_BETA,
};
use frame_induction::synth::{planted_model, sample_corpus, PlantedSpec, SampleOptions};

#[derive(Debug, Parser)]
#[command(
    name = "frame-induction",
    version,
    about = "Induce frames, events and slots from parsed documents"
)]
struct Cli {
    /// Worker threads for per-document inference (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model on a clause corpus.
    Train(TrainArgs),
    /// Viterbi-decode a corpus and write one entity per content-slot argument.
    Decode(DecodeArgs),
    /// Assign documents to frames by event-head probabilities.
    Classify(ClassifyArgs),
    /// Score extracted entities against gold entities.
    Evaluate(EvaluateArgs),
    /// Print the most probable emissions of every event and slot.
    Inspect(InspectArgs),
    /// Sample a corpus with known structure from a planted model.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Batch,
    Incremental,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// JSON settings file; flags given on the command line win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Training report (JSON). Defaults to the model path with a `.report.json` suffix.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    merge_fraction: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    em_iters: Option<usize>,
    #[arg(long)]
    min_count: Option<u64>,
}

#[derive(Debug, Args)]
struct DecodeArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Entity output (JSON lines); standard output when absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Keep only entities from frames the document is classified into at this average
    /// event-head probability.
    #[arg(long)]
    avg_threshold: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TRIGGER_THRESHOLD)]
    trigger_threshold: f64,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    avg_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_TRIGGER_THRESHOLD)]
    trigger_threshold: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Extracted entities (JSON lines).
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Document ids, one per line, used only to fit the slot mapping; the rest are scored.
    /// Without it the mapping is fitted and scored on the same documents.
    #[arg(long)]
    dev_docs: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    n_to_one: usize,
    /// Machine-readable report (JSON).
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Directory receiving corpus, truth, gold and planted model files.
    #[arg(long)]
    output_dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    documents: Option<usize>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    events: Option<usize>,
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Settings for `train`, loadable from JSON and echoed into the model and report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub frames: usize,
    pub background_events: usize,
    pub background_slots: usize,
    pub beta: f64,
    pub smoothing: Smoothing,
    pub init_jitter: f64,
    pub min_count: u64,
    pub schedule: TrainSchedule,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let c = TrainConfig::new(1);
        TrainSettings {
            frames: 4,
            background_events: c.structure.background.events,
            background_slots: c.structure.background.slots,
            beta: DEFAULT_BETA,
            smoothing: c.smoothing,
            init_jitter: c.init_jitter,
            min_count: 1,
            schedule: TrainSchedule::default(),
        }
    }
}

impl TrainSettings {
    fn apply(&mut self, a: &TrainArgs) {
        if let Some(v) = a.frames {
            self.frames = v;
        }
        if let Some(v) = a.cycles {
            self.schedule.cycles = v;
        }
        if let Some(v) = a.merge_fraction {
            self.schedule.merge_fraction = v;
        }
        if let Some(v) = a.beta {
            self.beta = v;
        }
        if let Some(v) = a.alpha {
            self.smoothing = Smoothing::uniform(v);
        }
        if let Some(v) = a.seed {
            self.schedule.seed = v;
        }
        if let Some(v) = a.mode {
            self.schedule.mode = match v {
                ModeArg::Batch => EmMode::Batch,
                ModeArg::Incremental => EmMode::Incremental,
            };
        }
        if let Some(v) = a.em_iters {
            self.schedule.em_iters_per_cycle = v;
        }
        if let Some(v) = a.min_count {
            self.min_count = v;
        }
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            structure: StructureConfig::initial(
                self.frames,
                self.background_events,
                self.background_slots,
            ),
            beta: self.beta,
            smoothing: self.smoothing,
            init_jitter: self.init_jitter,
        }
    }
}

/// Settings for `synth`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct SynthSettings {
    pub model: PlantedSpec,
    pub sample: SampleOptions,
}

/// Everything that determines a run, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
struct RunConfig<'a, T: Serialize> {
    subcommand: &'a str,
    inputs: Vec<&'a Path>,
    outputs: Vec<&'a Path>,
    settings: T,
}

#[derive(Debug, Serialize)]
struct TrainRunReport<'a> {
    run: RunConfig<'a, &'a TrainSettings>,
    documents: usize,
    clauses: usize,
    training: &'a TrainingReport,
}

#[derive(Debug, Serialize)]
struct EvaluateRunReport<'a> {
    run: RunConfig<'a, EvaluateSettings>,
    mapping: &'a SlotMapping,
    scores: &'a ScoreReport,
}

#[derive(Debug, Clone, Serialize)]
struct EvaluateSettings {
    n_to_one: usize,
    dev_documents: Option<usize>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| {
        frame_induction::Error::InvalidConfig(format!("{}: {e}", path.display())).into()
    })
}

fn read_lines<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    parse_jsonl(BufReader::new(f)).with_context(|| format!("parsing {}", path.display()))
}

/// Writes through a temporary file in the destination directory and renames it into
/// place, so readers never see a partial file.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

fn load_model(path: &Path) -> anyhow::Result<ModelFile> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize(&bytes).with_context(|| format!("loading model {}", path.display()))
}

fn cmd_train(a: &TrainArgs) -> anyhow::Result<()> {
    let mut settings: TrainSettings = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainSettings::default(),
    };
    settings.apply(a);
    if settings.frames == 0 {
        return Err(
            frame_induction::Error::InvalidConfig("at least one frame is required".into()).into(),
        );
    }
    let corpus =
        load_corpus(&a.corpus).with_context(|| format!("loading {}", a.corpus.display()))?;
    let vocab = build_vocab(&corpus, settings.min_count);
    let docs = index_corpus(&corpus, &vocab);
    let (params, report) = train(
        &settings.train_config(),
        vocab.sizes(),
        &docs.documents,
        &settings.schedule,
    )?;

    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut s = a.model.clone().into_os_string();
        s.push(".report.json");
        PathBuf::from(s)
    });
    let run = RunConfig {
        subcommand: "train",
        inputs: vec![a.corpus.as_path()],
        outputs: vec![a.model.as_path(), report_path.as_path()],
        settings: &settings,
    };
    let metadata = serde_json::json!({ "run": &run, "documents": corpus.documents.len() });
    write_atomic(
        &a.model,
        &serialize(&ModelFile::new(params, vocab, metadata)),
    )?;
    let full = TrainRunReport {
        run,
        documents: corpus.documents.len(),
        clauses: corpus.num_clauses(),
        training: &report,
    };
    write_atomic(&report_path, pretty(&full).as_bytes())?;
    eprintln!(
        "trained on {} documents: log-likelihood {:.3} -> {:.3}",
        corpus.documents.len(),
        report.initial_loglik(),
        report.final_loglik()
    );
    Ok(())
}

fn cmd_decode(a: &DecodeArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let corpus =
        load_corpus(&a.corpus).with_context(|| format!("loading {}", a.corpus.display()))?;
    let decoded = decode_corpus(&model.params, &model.vocab, &corpus)?;
    let entities = match a.avg_threshold {
        Some(avg) => {
            let docs = index_corpus(&corpus, &model.vocab);
            let labels = classify_corpus(&model.params, &docs.documents, avg, a.trigger_threshold);
            restrict_to_frames(&decoded.entities, &labels)
        }
        None => decoded.entities,
    };
    emit(a.output.as_deref(), &entities_to_jsonl(&entities))?;
    eprintln!(
        "{} entities, {} arguments in background slots",
        entities.len(),
        decoded.background_args
    );
    Ok(())
}

fn cmd_classify(a: &ClassifyArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let corpus =
        load_corpus(&a.corpus).with_context(|| format!("loading {}", a.corpus.display()))?;
    let docs = index_corpus(&corpus, &model.vocab);
    let labels = classify_corpus(
        &model.params,
        &docs.documents,
        a.avg_threshold,
        a.trigger_threshold,
    );
    let mut out = String::new();
    for l in &labels {
        out.push_str(&serde_json::to_string(l)?);
        out.push('\n');
    }
    emit(a.output.as_deref(), &out)
}

fn read_doc_ids(path: &Path) -> anyhow::Result<BTreeSet<String>> {
    let f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut ids = BTreeSet::new();
    for line in BufReader::new(f).lines() {
        let line = line?;
        let id = line.trim();
        if !id.is_empty() {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

fn cmd_evaluate(a: &EvaluateArgs) -> anyhow::Result<()> {
    if a.n_to_one == 0 {
        return Err(
            frame_induction::Error::InvalidConfig("--n-to-one must be at least 1".into()).into(),
        );
    }
    let preds: Vec<ExtractedEntity> = read_lines(&a.entities)?;
    let gold: Vec<GoldEntity> = read_lines(&a.gold)?;

    let dev = a.dev_docs.as_deref().map(read_doc_ids).transpose()?;
    let (mapping, report) = match &dev {
        Some(ids) => {
            let split_p = |inside: bool| -> Vec<ExtractedEntity> {
                preds
                    .iter()
                    .filter(|p| ids.contains(&p.doc_id) == inside)
                    .cloned()
                    .collect()
            };
            let split_g = |inside: bool| -> Vec<GoldEntity> {
                gold.iter()
                    .filter(|g| ids.contains(&g.doc_id) == inside)
                    .cloned()
                    .collect()
            };
            let mapping = fit_mapping(&split_p(true), &split_g(true), a.n_to_one);
            let report = score(&split_p(false), &split_g(false), &mapping);
            (mapping, report)
        }
        None => {
            let mapping = fit_mapping(&preds, &gold, a.n_to_one);
            let report = score(&preds, &gold, &mapping);
            (mapping, report)
        }
    };
    print!("{}", report.to_text());
    if let Some(out) = &a.output {
        let mut inputs = vec![a.entities.as_path(), a.gold.as_path()];
        inputs.extend(a.dev_docs.as_deref());
        let full = EvaluateRunReport {
            run: RunConfig {
                subcommand: "evaluate",
                inputs,
                outputs: vec![out.as_path()],
                settings: EvaluateSettings {
                    n_to_one: a.n_to_one,
                    dev_documents: dev.as_ref().map(|d| d.len()),
                },
            },
            mapping: &mapping,
            scores: &report,
        };
        write_atomic(out, pretty(&full).as_bytes())?;
    }
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> anyhow::Result<()> {
    let model = load_model(&a.model)?;
    let report = dump_frames(&model.params, &model.vocab, a.top_k)?;
    if a.json {
        emit(None, &pretty(&report))
    } else {
        emit(None, &report.to_text())
    }
}

fn cmd_synth(a: &SynthArgs) -> anyhow::Result<()> {
    let mut s: SynthSettings = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthSettings::default(),
    };
    if let Some(v) = a.documents {
        s.sample.documents = v;
    }
    if let Some(v) = a.frames {
        s.model.frames = v;
    }
    if let Some(v) = a.events {
        s.model.events = v;
    }
    if let Some(v) = a.slots {
        s.model.slots = v;
    }
    if let Some(v) = a.seed {
        s.sample.seed = v;
    }
    let (params, vocab) = planted_model(&s.model)?;
    let planted = sample_corpus(&params, &vocab, &s.sample)?;
    fs::create_dir_all(&a.output_dir)
        .with_context(|| format!("creating {}", a.output_dir.display()))?;
    let dir = &a.output_dir;
    let path = |name: &str| dir.join(name);
    let gold: String = planted
        .gold_entities()
        .iter()
        .map(|g| {
            serde_json::to_string(g).map(|mut l| {
                l.push('\n');
                l
            })
        })
        .collect::<Result<_, _>>()?;
    let (corpus_p, truth_p, ent_p, gold_p, model_p, cfg_p) = (
        path("corpus.jsonl"),
        path("truth.jsonl"),
        path("truth_entities.jsonl"),
        path("gold.jsonl"),
        path("planted.model.json"),
        path("synth.config.json"),
    );
    write_atomic(&corpus_p, planted.corpus.to_jsonl().as_bytes())?;
    write_atomic(&truth_p, planted.truth_jsonl().as_bytes())?;
    write_atomic(
        &ent_p,
        entities_to_jsonl(&planted.truth_entities()).as_bytes(),
    )?;
    write_atomic(&gold_p, gold.as_bytes())?;
    let run = RunConfig {
        subcommand: "synth",
        inputs: a.config.iter().map(|p| p.as_path()).collect(),
        outputs: vec![&corpus_p, &truth_p, &ent_p, &gold_p, &model_p, &cfg_p],
        settings: &s,
    };
    write_atomic(
        &model_p,
        &serialize(&ModelFile::new(
            params,
            vocab,
            serde_json::json!({ "run": &run }),
        )),
    )?;
    write_atomic(&cfg_p, pretty(&run).as_bytes())?;
    eprintln!(
        "sampled {} documents, {} clauses into {}",
        planted.corpus.documents.len(),
        planted.corpus.num_clauses(),
        dir.display()
    );
    Ok(())
}

fn dispatch(cli: &Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Classify(a) => cmd_classify(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Inspect(a) => cmd_inspect(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

/// 1 for usage and configuration problems, 2 for data, 3 for numeric failures.
fn exit_code(err: &anyhow::Error) -> i32 {
    err.chain()
        .find_map(|e| e.downcast_ref::<frame_induction::Error>())
        .map_or(2, |e| e.exit_code())
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.workers {
        Some(0) => {
            Err(frame_induction::Error::InvalidConfig("--workers must be positive".into()).into())
        }
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&cli)),
            Err(e) => Err(anyhow::Error::new(e)),
        },
        None => dispatch(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
