//! Command-line surface for the entailment-tree pipeline.
//!
//! Exit codes: 0 success, 1 usage/configuration, 2 data error, 3 runtime.

mod config;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use entail::controller::{load_heads, save_heads, ControllerTrainConfig};
use entail::data::pipeline::{
    breakdown_report, gold_triples, infer_example, run_pipeline, GeneratorKind, Prediction,
    RunConfig, ScorerKind, TaskKind,
};
use entail::data::{benchmark, load_corpus, load_dataset, DataError, Dataset, Split};
use entail::embed::{
    export_embeddings, load_model, save_model, train_encoder, EncoderTrainConfig, StepTriple,
};
use entail::generator::{synth_singlesteps, SynthConfig};
use entail::metrics::{evaluate_dataset, Similarity, DEFAULT_TAU};
use entail::reasoner::ReasonConfig;
use entail::retrieval::{build_index, lexical_retrieve, rerank_refine, save_index, RefineBy};
use entail::tree::{parse_proof, EntailmentTree, NodeId};

use config::{load_config, resolve, Section, Sections};

#[derive(Parser)]
#[command(name = "entail", version, about = "Entailment-tree construction and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic benchmark (train/dev/test splits plus corpus).
    GenData(GenDataArgs),
    /// Emit synthetic single-step triples as JSONL.
    SynthData(SynthDataArgs),
    /// Train the sentence encoder on step triples.
    TrainEncoder(TrainEncoderArgs),
    /// Train the fact/step scoring heads on gold trees.
    TrainController(TrainControllerArgs),
    /// Retrieve and refine candidate facts for each hypothesis.
    Retrieve(RetrieveArgs),
    /// Construct trees for a dataset split.
    Infer(InferArgs),
    /// Score predictions against gold trees.
    Eval(EvalArgs),
    /// Overall-correct rate bucketed by gold leaf count.
    Breakdown(BreakdownArgs),
    /// Export per-fact embeddings as TSV.
    ExportEmbeddings(ExportEmbeddingsArgs),
    /// Full pipeline: train, infer, evaluate, write stamped artifacts.
    Run(RunArgs),
}

#[derive(Debug)]
struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError { code: 1, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn runtime(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<entail::data::pipeline::PipelineError> for CliError {
    fn from(e: entail::data::pipeline::PipelineError) -> Self {
        use entail::data::pipeline::PipelineError as P;
        match e {
            P::Config(m) => CliError::usage(m),
            P::Data(d) => d.into(),
            other => CliError::runtime(other.to_string()),
        }
    }
}

macro_rules! runtime_errors {
    ($($ty:ty),* $(,)?) => {
        $(impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::runtime(e.to_string())
            }
        })*
    };
}

runtime_errors!(
    entail::embed::TrainError,
    entail::embed::CheckpointError,
    entail::embed::EncodeError,
    entail::controller::ControllerTrainError,
    entail::controller::HeadsCheckpointError,
    entail::reasoner::ReasonError,
    entail::metrics::MetricError,
    entail::retrieval::IndexError,
    std::io::Error,
    serde_json::Error,
);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::GenData(args) => gen_data(args),
        Command::SynthData(args) => synth_data(args),
        Command::TrainEncoder(args) => train_encoder_cmd(args),
        Command::TrainController(args) => train_controller_cmd(args),
        Command::Retrieve(args) => retrieve(args),
        Command::Infer(args) => infer(args),
        Command::Eval(args) => eval(args),
        Command::Breakdown(args) => breakdown(args),
        Command::ExportEmbeddings(args) => export_embeddings_cmd(args),
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Relative data paths resolve under `ENTAIL_DATA_ROOT` when it is set.
fn data_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Ok(root) = std::env::var("ENTAIL_DATA_ROOT") {
            return PathBuf::from(root).join(path);
        }
    }
    path.to_path_buf()
}

fn sections_from(path: Option<&PathBuf>) -> Result<Sections, CliError> {
    match path {
        Some(p) => load_config(p).map_err(CliError::usage),
        None => Ok(Sections::new()),
    }
}

// ---------------------------------------------------------------------------
// gen-data

#[derive(Args)]
struct GenDataArgs {
    /// Output directory for train/dev/test.jsonl and corpus.jsonl.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn gen_data(args: GenDataArgs) -> Result<(), CliError> {
    benchmark::write_benchmark(&args.out, args.seed)?;
    for split in [Split::Train, Split::Dev, Split::Test] {
        let outcome = load_dataset(&args.out.join(format!("{split}.jsonl")), split)?;
        println!(
            "{split}: {} trees, {} steps, {} leaves",
            outcome.dataset.tree_count(),
            outcome.dataset.step_count(),
            outcome.dataset.leaf_count(),
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth-data

#[derive(Args)]
struct SynthDataArgs {
    /// Number of triples to generate.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn synth_data(args: SynthDataArgs) -> Result<(), CliError> {
    if args.n == 0 {
        return Err(CliError::usage("--n must be at least 1"));
    }
    let triples = synth_singlesteps(&SynthConfig { n: args.n, seed: args.seed });
    let mut out = String::new();
    for t in &triples {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    println!("wrote {} triples to {}", triples.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// train-encoder

#[derive(Args)]
struct TrainEncoderArgs {
    /// Dataset whose gold steps become training triples.
    #[arg(long)]
    data: Option<PathBuf>,
    /// JSONL triples file ({"s_b","s_e","i"} per line).
    #[arg(long)]
    triples: Option<PathBuf>,
    /// Additional synthetic triples to generate.
    #[arg(long)]
    synth: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

fn encoder_config(
    sections: &Sections,
    args: &TrainEncoderArgs,
) -> Result<EncoderTrainConfig, CliError> {
    let file = Section::of(sections, "encoder");
    let defaults = EncoderTrainConfig::default();
    Ok(EncoderTrainConfig {
        dim: resolve(args.dim, file.get("dim").map_err(CliError::usage)?, defaults.dim),
        margin_con: resolve(
            args.gamma1,
            file.get("gamma1").map_err(CliError::usage)?,
            defaults.margin_con,
        ),
        margin_mut: resolve(
            args.gamma2,
            file.get("gamma2").map_err(CliError::usage)?,
            defaults.margin_mut,
        ),
        learning_rate: resolve(
            args.lr,
            file.get("lr").map_err(CliError::usage)?,
            defaults.learning_rate,
        ),
        batch_size: resolve(
            args.batch,
            file.get("batch").map_err(CliError::usage)?,
            defaults.batch_size,
        ),
        epochs: resolve(args.epochs, file.get("epochs").map_err(CliError::usage)?, defaults.epochs),
        seed: resolve(args.seed, file.get("seed").map_err(CliError::usage)?, defaults.seed),
    })
}

fn read_triples(path: &Path) -> Result<Vec<StepTriple>, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let triple: StepTriple = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(triple);
    }
    Ok(out)
}

fn train_encoder_cmd(args: TrainEncoderArgs) -> Result<(), CliError> {
    let sections = sections_from(args.config.as_ref())?;
    let config = encoder_config(&sections, &args)?;

    let mut triples = Vec::new();
    if let Some(data) = &args.data {
        let outcome = load_dataset(&data_path(data), Split::Train)?;
        triples.extend(gold_triples(&outcome.dataset));
    }
    if let Some(path) = &args.triples {
        triples.extend(read_triples(&data_path(path))?);
    }
    if let Some(n) = args.synth {
        triples.extend(synth_singlesteps(&SynthConfig { n, seed: config.seed }));
    }
    if triples.is_empty() {
        return Err(CliError::usage("no training data: pass --data, --triples, or --synth"));
    }
    let model = train_encoder(&triples, &config)?;
    save_model(&model, &args.out)?;
    println!(
        "trained encoder on {} triples (dim {}, vocab {}) -> {}",
        triples.len(),
        model.dim,
        model.vocab.size(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train-controller

#[derive(Args)]
struct TrainControllerArgs {
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Benchmark task: 1 trains without distractors, 2 and 3 include them.
    #[arg(long, default_value = "1")]
    task: String,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma3: Option<f64>,
    #[arg(long)]
    gamma4: Option<f64>,
    #[arg(long)]
    gamma5: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Hidden units per head; 0 keeps the heads affine.
    #[arg(long)]
    hidden: Option<usize>,
    /// Subtract the BCE term instead of adding it.
    #[arg(long)]
    subtract_bce: bool,
    /// Fine-tune the embedding table along with the heads.
    #[arg(long)]
    update_encoder: bool,
}

fn controller_config(
    sections: &Sections,
    args: &TrainControllerArgs,
    task: TaskKind,
) -> Result<ControllerTrainConfig, CliError> {
    let file = Section::of(sections, "controller");
    let defaults = ControllerTrainConfig {
        lambda: match task {
            TaskKind::Task1 => 0.0,
            _ => 1.0,
        },
        ..Default::default()
    };
    let hidden = resolve(
        args.hidden,
        file.get("hidden").map_err(CliError::usage)?,
        defaults.hidden_dim.unwrap_or(0),
    );
    Ok(ControllerTrainConfig {
        gamma3: resolve(args.gamma3, file.get("gamma3").map_err(CliError::usage)?, defaults.gamma3),
        gamma4: resolve(args.gamma4, file.get("gamma4").map_err(CliError::usage)?, defaults.gamma4),
        gamma5: resolve(args.gamma5, file.get("gamma5").map_err(CliError::usage)?, defaults.gamma5),
        lambda: resolve(args.lambda, file.get("lambda").map_err(CliError::usage)?, defaults.lambda),
        alpha: resolve(args.alpha, file.get("alpha").map_err(CliError::usage)?, defaults.alpha),
        beta: resolve(args.beta, file.get("beta").map_err(CliError::usage)?, defaults.beta),
        learning_rate: resolve(
            args.lr,
            file.get("lr").map_err(CliError::usage)?,
            defaults.learning_rate,
        ),
        batch_size: resolve(
            args.batch,
            file.get("batch").map_err(CliError::usage)?,
            defaults.batch_size,
        ),
        epochs: resolve(args.epochs, file.get("epochs").map_err(CliError::usage)?, defaults.epochs),
        seed: resolve(args.seed, file.get("seed").map_err(CliError::usage)?, defaults.seed),
        negatives_k: resolve(
            args.negatives,
            file.get("negatives").map_err(CliError::usage)?,
            defaults.negatives_k,
        ),
        hidden_dim: if hidden == 0 { None } else { Some(hidden) },
        subtract_bce: args.subtract_bce,
        update_encoder: args.update_encoder,
        train_abduction: true,
    })
}

fn train_controller_cmd(args: TrainControllerArgs) -> Result<(), CliError> {
    let task: TaskKind = args.task.parse().map_err(CliError::usage)?;
    let sections = sections_from(args.config.as_ref())?;
    let config = controller_config(&sections, &args, task)?;
    let model = load_model(&args.encoder)?;
    let outcome = load_dataset(&data_path(&args.data), Split::Train)?;
    let items: Vec<_> = outcome
        .dataset
        .examples
        .iter()
        .map(|e| {
            let distractors = match task {
                TaskKind::Task1 => Vec::new(),
                _ => e.distractors.clone(),
            };
            (e.tree.clone(), distractors)
        })
        .collect();
    let trained = entail::controller::train_controller_with_curve(&model, &items, &config)?;
    save_heads(&trained.heads, &args.encoder, &args.out)?;
    println!(
        "trained controller on {} trees ({} skipped); final epoch loss {:.6} -> {}",
        outcome.dataset.tree_count(),
        outcome.skipped.len(),
        trained.curve.last().copied().unwrap_or(0.0),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// retrieve

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RefineByArg {
    FactScore,
    Distance,
}

impl From<RefineByArg> for RefineBy {
    fn from(v: RefineByArg) -> Self {
        match v {
            RefineByArg::FactScore => RefineBy::FactScore,
            RefineByArg::Distance => RefineBy::Distance,
        }
    }
}

#[derive(Args)]
struct RetrieveArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    heads: PathBuf,
    #[arg(long, default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 25)]
    limit: usize,
    #[arg(long, value_enum, default_value_t = RefineByArg::FactScore)]
    refine_by: RefineByArg,
    #[arg(long)]
    out: PathBuf,
    /// Also persist the built index.
    #[arg(long)]
    index_out: Option<PathBuf>,
}

fn retrieve(args: RetrieveArgs) -> Result<(), CliError> {
    let model = load_model(&args.encoder)?;
    let heads = load_heads(&args.heads, &args.encoder)?;
    let (facts, docs) = load_corpus(&data_path(&args.corpus))?;
    let index = build_index(&facts)?;
    if let Some(path) = &args.index_out {
        save_index(&index, path)?;
    }
    let outcome = load_dataset(&data_path(&args.data), Split::Dev)?;

    let mut out = String::new();
    let mut recall_sum = 0.0;
    for example in &outcome.dataset.examples {
        let top = lexical_retrieve(&index, &example.hypothesis, args.k);
        let candidates: Vec<entail::tree::Fact> = top
            .iter()
            .filter_map(|(doc, _)| facts.iter().find(|f| f.id == NodeId::Sent(*doc)).cloned())
            .collect();
        let refined = rerank_refine(
            &model,
            &heads,
            &example.hypothesis,
            &candidates,
            args.limit,
            args.refine_by.into(),
        );
        let refined_texts: std::collections::BTreeSet<&str> =
            refined.iter().map(|f| f.text.as_str()).collect();
        let gold_total = example.tree.leaves.len();
        let hit = example
            .tree
            .leaves
            .iter()
            .filter(|f| refined_texts.contains(f.text.as_str()))
            .count();
        recall_sum += hit as f64 / gold_total as f64;

        let records: Vec<serde_json::Value> = refined
            .iter()
            .map(|f| {
                let doc_id = match f.id {
                    NodeId::Sent(k) => docs.get(k as usize - 1).map(|d| d.id.clone()),
                    _ => None,
                };
                serde_json::json!({ "id": doc_id, "text": f.text })
            })
            .collect();
        out.push_str(&serde_json::json!({ "id": example.id, "facts": records }).to_string());
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    let recall = recall_sum / outcome.dataset.examples.len().max(1) as f64;
    println!(
        "retrieved {} -> {} facts per hypothesis; gold-leaf recall@{} = {recall:.4}",
        args.k, args.limit, args.limit
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// infer

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GeneratorArg {
    Template,
    Oracle,
    External,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScorerArg {
    Heads,
    Gold,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    encoder: PathBuf,
    #[arg(long)]
    heads: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratorArg::Template)]
    generator: GeneratorArg,
    /// Address of the external generation service.
    #[arg(long, default_value = "127.0.0.1:7469")]
    external_addr: String,
    #[arg(long, value_enum, default_value_t = ScorerArg::Heads)]
    scorer: ScorerArg,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    beam: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    top_abd_p: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    stop_threshold: Option<f64>,
    /// Score the fact pool once up front instead of after every step.
    #[arg(long)]
    freeze_pool: bool,
    #[arg(long)]
    length_normalize: bool,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

fn reason_config(
    sections: &Sections,
    args: &InferArgs,
    task: TaskKind,
) -> Result<ReasonConfig, CliError> {
    let file = Section::of(sections, "reasoner");
    let mut defaults = ReasonConfig::default();
    match task {
        TaskKind::Task1 => {
            defaults.delta = 0.0;
            defaults.use_abduction = false;
        }
        TaskKind::Task2 => {
            defaults.delta = 0.001;
            defaults.use_abduction = false;
        }
        TaskKind::Task3 => {
            defaults.delta = 0.1;
            defaults.collect_partials = true;
        }
    }
    Ok(ReasonConfig {
        delta: resolve(args.delta, file.get("delta").map_err(CliError::usage)?, defaults.delta),
        beam_size: resolve(
            args.beam,
            file.get("beam").map_err(CliError::usage)?,
            defaults.beam_size,
        ),
        top_p: resolve(args.top_p, file.get("top_p").map_err(CliError::usage)?, defaults.top_p),
        top_abd_p: resolve(
            args.top_abd_p,
            file.get("top_abd_p").map_err(CliError::usage)?,
            defaults.top_abd_p,
        ),
        max_steps: resolve(
            args.max_steps,
            file.get("max_steps").map_err(CliError::usage)?,
            defaults.max_steps,
        ),
        stop_threshold: resolve(
            args.stop_threshold,
            file.get("stop_threshold").map_err(CliError::usage)?,
            defaults.stop_threshold,
        ),
        rescore_facts: !args.freeze_pool,
        use_abduction: defaults.use_abduction,
        length_normalize: args.length_normalize,
        collect_partials: defaults.collect_partials,
    })
}

fn infer(args: InferArgs) -> Result<(), CliError> {
    let task: TaskKind = args.task.parse().map_err(CliError::usage)?;
    if task == TaskKind::Task3 && args.corpus.is_none() {
        return Err(CliError::usage("--task 3 requires --corpus"));
    }
    let sections = sections_from(args.config.as_ref())?;
    let reason = reason_config(&sections, &args, task)?;
    let model = load_model(&args.encoder)?;
    let heads = load_heads(&args.heads, &args.encoder)?;
    let split: Split = args
        .split
        .as_deref()
        .unwrap_or("dev")
        .parse()
        .map_err(CliError::usage)?;
    let outcome = load_dataset(&data_path(&args.data), split)?;

    let corpus_data = match &args.corpus {
        Some(path) => {
            let (facts, _) = load_corpus(&data_path(path))?;
            let index = build_index(&facts)?;
            Some((index, facts))
        }
        None => None,
    };

    let run_config = RunConfig {
        task,
        generator: match args.generator {
            GeneratorArg::Template => GeneratorKind::Template,
            GeneratorArg::Oracle => GeneratorKind::Oracle,
            GeneratorArg::External => GeneratorKind::External { addr: args.external_addr.clone() },
        },
        scorer: match args.scorer {
            ScorerArg::Heads => ScorerKind::Heads,
            ScorerArg::Gold => ScorerKind::Gold,
        },
        reason,
        ..RunConfig::for_task(task, PathBuf::new(), PathBuf::new())
    };

    let mut out = String::new();
    for example in &outcome.dataset.examples {
        let (tree, score) = infer_example(
            &model,
            &heads,
            &run_config,
            example,
            corpus_data.as_ref().map(|(i, f)| (i, f.as_slice())),
        )?;
        let proof =
            entail::tree::serialize_proof(&tree).map_err(|e| CliError::runtime(e.to_string()))?;
        let record = Prediction { id: example.id.clone(), proof, score };
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    std::fs::write(&args.out, out)?;
    println!("constructed {} trees -> {}", outcome.dataset.examples.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// eval / breakdown

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SimArg {
    TokenF1,
    External,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value_t = SimArg::TokenF1)]
    sim: SimArg,
    #[arg(long, default_value = "127.0.0.1:7469")]
    sim_addr: String,
    /// Report JSON path (default: alongside predictions).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-tree TSV path.
    #[arg(long)]
    per_tree: Option<PathBuf>,
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>, CliError> {
    let content = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: Prediction = serde_json::from_str(line)
            .map_err(|e| CliError::data(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
        out.push(p);
    }
    if out.is_empty() {
        return Err(CliError::data(format!("{} contains no predictions", path.display())));
    }
    Ok(out)
}

/// Parse a predicted proof against the gold context, inventing placeholder
/// texts for leaf ids the context does not know (they only affect identity,
/// never metric values).
fn parse_prediction(
    proof: &str,
    example: &entail::data::Example,
) -> Result<EntailmentTree, CliError> {
    let mut context: BTreeMap<NodeId, String> = example.context.clone();
    context.insert(NodeId::Hypothesis, example.hypothesis.clone());
    for token in proof.split(|c: char| c.is_whitespace() || c == '&' || c == ';') {
        if let Ok(id @ NodeId::Sent(_)) = token.trim().parse::<NodeId>() {
            context.entry(id).or_insert_with(|| token.trim().to_string());
        }
    }
    parse_proof(proof, &context)
        .map_err(|e| CliError::data(format!("prediction for {}: {e}", example.id)))
}

type EvalPairs = Vec<(String, EntailmentTree, EntailmentTree)>;

fn paired_trees(
    pred_path: &Path,
    gold_path: &Path,
) -> Result<(EvalPairs, Dataset), CliError> {
    let predictions = read_predictions(pred_path)?;
    let outcome = load_dataset(&data_path(gold_path), Split::Dev)?;
    let by_id: BTreeMap<&str, &entail::data::Example> =
        outcome.dataset.examples.iter().map(|e| (e.id.as_str(), e)).collect();
    let mut pairs = Vec::new();
    for p in &predictions {
        let example = by_id
            .get(p.id.as_str())
            .ok_or_else(|| CliError::data(format!("prediction {} has no gold example", p.id)))?;
        let tree = parse_prediction(&p.proof, example)?;
        pairs.push((p.id.clone(), tree, example.tree.clone()));
    }
    Ok((pairs, outcome.dataset))
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let (pairs, _) = paired_trees(&args.pred, &args.gold)?;
    let sim = match args.sim {
        SimArg::TokenF1 => Similarity::TokenF1,
        SimArg::External => Similarity::External(entail::generator::ExternalClient::new(
            entail::generator::ExternalConfig { addr: args.sim_addr.clone(), ..Default::default() },
        )),
    };
    let tau = args.tau.unwrap_or(DEFAULT_TAU);
    let report = evaluate_dataset(&pairs, &sim, tau)?;

    let out_path = args.out.clone().unwrap_or_else(|| args.pred.with_extension("report.json"));
    std::fs::write(&out_path, serde_json::to_string_pretty(&report)?)?;
    let per_tree_path =
        args.per_tree.clone().unwrap_or_else(|| args.pred.with_extension("per_tree.tsv"));
    let mut tsv = String::from(
        "id\tleaves_f1\tleaves_ac\tsteps_f1\tsteps_ac\tintermediates_f1\tintermediates_ac\toverall_ac\n",
    );
    for t in &report.per_tree {
        tsv.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            t.id,
            t.leaves_f1,
            t.leaves_allcorrect as u8,
            t.steps_f1,
            t.steps_allcorrect as u8,
            t.intermediates_f1,
            t.intermediates_allcorrect as u8,
            t.overall_allcorrect as u8,
        ));
    }
    std::fs::write(&per_tree_path, tsv)?;

    println!("trees evaluated: {}", report.per_tree.len());
    println!("leaves        F1 {:.4}  AllCorrect {:.4}", report.leaves_f1, report.leaves_allcorrect);
    println!("steps         F1 {:.4}  AllCorrect {:.4}", report.steps_f1, report.steps_allcorrect);
    println!(
        "intermediates F1 {:.4}  AllCorrect {:.4}",
        report.intermediates_f1, report.intermediates_allcorrect
    );
    println!("overall       AllCorrect {:.4}", report.overall_allcorrect);
    println!("report -> {}", out_path.display());
    Ok(())
}

#[derive(Args)]
struct BreakdownArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn breakdown(args: BreakdownArgs) -> Result<(), CliError> {
    let (pairs, dataset) = paired_trees(&args.pred, &args.gold)?;
    let report = evaluate_dataset(&pairs, &Similarity::TokenF1, args.tau.unwrap_or(DEFAULT_TAU))?;
    let rows = breakdown_report(&report, &dataset);
    let mut table = String::from("leaves\ttotal\tcorrect\trate\n");
    println!("leaves  total  correct  rate");
    for row in &rows {
        println!("{:>6}  {:>5}  {:>7}  {:.4}", row.leaves, row.total, row.correct, row.rate);
        table.push_str(&format!("{}\t{}\t{}\t{}\n", row.leaves, row.total, row.correct, row.rate));
    }
    if let Some(out) = &args.out {
        std::fs::write(out, table)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// export-embeddings

#[derive(Args)]
struct ExportEmbeddingsArgs {
    #[arg(long)]
    encoder: PathBuf,
    /// Dataset whose context facts are exported.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Corpus whose documents are exported.
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn export_embeddings_cmd(args: ExportEmbeddingsArgs) -> Result<(), CliError> {
    let model = load_model(&args.encoder)?;
    let facts = match (&args.data, &args.corpus) {
        (Some(data), None) => {
            let outcome = load_dataset(&data_path(data), Split::Dev)?;
            let mut facts = Vec::new();
            for example in &outcome.dataset.examples {
                facts.extend(example.labeled_facts());
            }
            facts
        }
        (None, Some(corpus)) => load_corpus(&data_path(corpus))?.0,
        _ => return Err(CliError::usage("pass exactly one of --data or --corpus")),
    };
    export_embeddings(&model, &facts, &args.out)?;
    println!("exported {} embeddings -> {}", facts.len(), args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// run

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    task: String,
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GeneratorArg::Template)]
    generator: GeneratorArg,
    #[arg(long, default_value = "127.0.0.1:7469")]
    external_addr: String,
    #[arg(long, value_enum, default_value_t = ScorerArg::Heads)]
    scorer: ScorerArg,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    synth: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    encoder_epochs: Option<usize>,
    #[arg(long)]
    controller_epochs: Option<usize>,
}

fn run(args: RunArgs) -> Result<(), CliError> {
    let task: TaskKind = args.task.parse().map_err(CliError::usage)?;
    let sections = sections_from(args.config.as_ref())?;
    let mut config = RunConfig::for_task(task, data_path(&args.data_dir), args.out_dir.clone());
    config.corpus_path = args.corpus.as_ref().map(|p| data_path(p));
    config.generator = match args.generator {
        GeneratorArg::Template => GeneratorKind::Template,
        GeneratorArg::Oracle => GeneratorKind::Oracle,
        GeneratorArg::External => GeneratorKind::External { addr: args.external_addr.clone() },
    };
    config.scorer = match args.scorer {
        ScorerArg::Heads => ScorerKind::Heads,
        ScorerArg::Gold => ScorerKind::Gold,
    };
    if let Some(split) = &args.split {
        config.eval_split = split.parse().map_err(CliError::usage)?;
    }
    let run_section = Section::of(&sections, "run");
    config.synth_triples = resolve(
        args.synth,
        run_section.get("synth").map_err(CliError::usage)?,
        config.synth_triples,
    );
    config.seed =
        resolve(args.seed, run_section.get("seed").map_err(CliError::usage)?, config.seed);
    config.retrieve_k =
        resolve(args.k, run_section.get("k").map_err(CliError::usage)?, config.retrieve_k);
    config.refine_limit = resolve(
        args.limit,
        run_section.get("limit").map_err(CliError::usage)?,
        config.refine_limit,
    );
    config.tau = resolve(args.tau, run_section.get("tau").map_err(CliError::usage)?, config.tau);
    let encoder_file = Section::of(&sections, "encoder");
    config.encoder.seed = config.seed;
    config.encoder.epochs = resolve(
        args.encoder_epochs,
        encoder_file.get("epochs").map_err(CliError::usage)?,
        config.encoder.epochs,
    );
    let controller_file = Section::of(&sections, "controller");
    config.controller.seed = config.seed;
    config.controller.epochs = resolve(
        args.controller_epochs,
        controller_file.get("epochs").map_err(CliError::usage)?,
        config.controller.epochs,
    );

    let artifacts = run_pipeline(&config)?;
    println!("run {:016x} complete -> {}", artifacts.config_hash, artifacts.out_dir.display());
    println!(
        "leaves F1 {:.4} | steps F1 {:.4} | intermediates F1 {:.4} | overall AllCorrect {:.4}",
        artifacts.report.leaves_f1,
        artifacts.report.steps_f1,
        artifacts.report.intermediates_f1,
        artifacts.report.overall_allcorrect,
    );
    if artifacts.skipped_examples > 0 {
        println!("skipped {} invalid examples (see manifest)", artifacts.skipped_examples);
    }
    Ok(())
}
