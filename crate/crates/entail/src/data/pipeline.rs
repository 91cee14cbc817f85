//! End-to-end orchestration: train the encoder and controller, run inference
//! for the chosen task, evaluate, and write stamped artifacts.
//!
//! A run owns its output directory via a lock file. Identical config + seed
//! reruns produce byte-identical artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::controller::{
    train_controller_with_curve, ControllerHeads, ControllerTrainConfig, ControllerTrainError,
};
use crate::embed::{
    save_model, train_encoder, EmbeddingModel, EncoderTrainConfig, StepTriple, TrainError,
};
use crate::generator::{
    synth_singlesteps, ExternalClient, ExternalConfig, GeneratorBackend, OracleGenerator,
    SynthConfig,
};
use crate::metrics::{evaluate_dataset, EvalReport, MetricError, Similarity, DEFAULT_TAU};
use crate::reasoner::{
    beam_construct, best_partial_match, filter_facts, greedy_construct, greedy_partials,
    pool_entries, GoldScorer, ReasonConfig, ReasonError, Scorer,
};
use crate::retrieval::{build_index, lexical_retrieve, rerank_refine, IndexError, RefineBy};
use crate::tree::{serialize_proof, EntailmentTree, Fact, NodeId};
use crate::util::fnv1a64;

use super::{load_dataset, DataError, Dataset, Example, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TaskKind {
    Task1,
    Task2,
    Task3,
}

impl std::str::FromStr for TaskKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "1" | "task1" => Ok(TaskKind::Task1),
            "2" | "task2" => Ok(TaskKind::Task2),
            "3" | "task3" => Ok(TaskKind::Task3),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum GeneratorKind {
    Template,
    Oracle,
    External { addr: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ScorerKind {
    Heads,
    Gold,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub task: TaskKind,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub corpus_path: Option<PathBuf>,
    pub eval_split: Split,
    pub generator: GeneratorKind,
    pub scorer: ScorerKind,
    pub synth_triples: usize,
    pub encoder: EncoderTrainConfig,
    pub controller: ControllerTrainConfig,
    pub reason: ReasonConfig,
    pub retrieve_k: usize,
    pub refine_limit: usize,
    pub refine_by: RefineBy,
    pub tau: f64,
    pub seed: u64,
}

impl RunConfig {
    /// Task defaults: no filtering and no distractor training for Task1;
    /// delta 0.001 and BCE weight 1 for Task2; delta 0.1 with beam search
    /// for Task3.
    pub fn for_task(task: TaskKind, data_dir: PathBuf, out_dir: PathBuf) -> Self {
        let mut controller = ControllerTrainConfig::default();
        let mut reason = ReasonConfig::default();
        match task {
            TaskKind::Task1 => {
                controller.lambda = 0.0;
                reason.delta = 0.0;
                reason.use_abduction = false;
            }
            TaskKind::Task2 => {
                controller.lambda = 1.0;
                reason.delta = 0.001;
                reason.use_abduction = false;
            }
            TaskKind::Task3 => {
                controller.lambda = 1.0;
                reason.delta = 0.1;
                reason.collect_partials = true;
            }
        }
        RunConfig {
            task,
            data_dir,
            out_dir,
            corpus_path: None,
            eval_split: Split::Dev,
            generator: GeneratorKind::Template,
            scorer: ScorerKind::Heads,
            synth_triples: 2000,
            encoder: EncoderTrainConfig::default(),
            controller,
            reason,
            retrieve_k: 50,
            refine_limit: 25,
            refine_by: RefineBy::FactScore,
            tau: DEFAULT_TAU,
            seed: 0,
        }
    }

    /// Stable fingerprint over every field that affects the run.
    pub fn hash(&self) -> u64 {
        let repr = format!(
            "{:?}|{}|{}|{:?}|{}|{:?}|{:?}|{}|{:?}|{:?}|{:?}|{}|{}|{:?}|{}|{}",
            self.task,
            self.data_dir.display(),
            self.out_dir.display(),
            self.corpus_path.as_ref().map(|p| p.display().to_string()),
            self.eval_split,
            self.generator,
            self.scorer,
            self.synth_triples,
            self.encoder,
            self.controller,
            self.reason,
            self.retrieve_k,
            self.refine_limit,
            self.refine_by,
            self.tau,
            self.seed,
        );
        fnv1a64(repr.as_bytes())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("bad configuration: {0}")]
    Config(String),
    #[error("output directory {0} is locked by another run")]
    Locked(PathBuf),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    EncoderTrain(#[from] TrainError),
    #[error(transparent)]
    ControllerTrain(#[from] ControllerTrainError),
    #[error(transparent)]
    Reason(#[from] ReasonError),
    #[error(transparent)]
    Encode(#[from] crate::embed::EncodeError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Checkpoint(#[from] crate::embed::CheckpointError),
    #[error(transparent)]
    HeadsCheckpoint(#[from] crate::controller::HeadsCheckpointError),
}

fn io_err(path: &Path, source: std::io::Error) -> PipelineError {
    PipelineError::Io { path: path.display().to_string(), source }
}

/// Exclusive ownership of an output directory for the duration of a run.
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<Self, PipelineError> {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(PipelineError::Locked(dir.to_path_buf()))
            }
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// Overall-correct rate bucketed by gold leaf count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BucketRow {
    pub leaves: usize,
    pub total: usize,
    pub correct: usize,
    pub rate: f64,
}

/// Bucket the evaluation by each gold tree's leaf count. Buckets partition
/// the dataset.
pub fn breakdown_report(report: &EvalReport, dataset: &Dataset) -> Vec<BucketRow> {
    let correct_by_id: BTreeMap<&str, bool> = report
        .per_tree
        .iter()
        .map(|t| (t.id.as_str(), t.overall_allcorrect))
        .collect();
    let mut buckets: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for example in &dataset.examples {
        let entry = buckets.entry(example.tree.leaves.len()).or_insert((0, 0));
        entry.0 += 1;
        if correct_by_id.get(example.id.as_str()).copied().unwrap_or(false) {
            entry.1 += 1;
        }
    }
    buckets
        .into_iter()
        .map(|(leaves, (total, correct))| BucketRow {
            leaves,
            total,
            correct,
            rate: correct as f64 / total as f64,
        })
        .collect()
}

/// Extract encoder training triples from a dataset's gold steps. Binary
/// steps map directly; n-ary steps are folded left.
pub fn gold_triples(dataset: &Dataset) -> Vec<StepTriple> {
    let mut out = Vec::new();
    for example in &dataset.examples {
        let tree = &example.tree;
        for step in tree.topological_steps() {
            let texts: Vec<&str> = step
                .premises
                .iter()
                .filter_map(|p| tree.node_text(*p))
                .collect();
            if texts.len() < 2 {
                continue;
            }
            let conclusion = match step.conclusion {
                NodeId::Hypothesis => tree.hypothesis.as_str(),
                id => match tree.node_text(id) {
                    Some(t) => t,
                    None => continue,
                },
            };
            let mut left = texts[0].to_string();
            for right in &texts[1..] {
                out.push(StepTriple::new(left.clone(), *right, conclusion));
                left = format!("{left} {right}");
            }
        }
    }
    out
}

/// One prediction record, as written to `predictions.jsonl`.
#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct Prediction {
    pub id: String,
    pub proof: String,
    pub score: f64,
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub report: EvalReport,
    pub breakdown: Vec<BucketRow>,
    pub config_hash: u64,
    pub out_dir: PathBuf,
    pub skipped_examples: usize,
}

/// Map a predicted tree built over corpus-wide fact ids back into the
/// example's own id space by matching texts; unknown texts get fresh ids.
fn remap_to_context(tree: &EntailmentTree, example: &Example) -> EntailmentTree {
    let by_text: BTreeMap<&str, NodeId> = example
        .context
        .iter()
        .map(|(id, text)| (text.as_str(), *id))
        .collect();
    let mut next_fresh = example
        .context
        .keys()
        .filter_map(|id| match id {
            NodeId::Sent(k) => Some(*k),
            _ => None,
        })
        .max()
        .unwrap_or(0)
        + 1;
    let mut remap: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut leaves = Vec::with_capacity(tree.leaves.len());
    for fact in &tree.leaves {
        let new_id = match by_text.get(fact.text.as_str()) {
            Some(id) => *id,
            None => {
                let id = NodeId::Sent(next_fresh);
                next_fresh += 1;
                id
            }
        };
        remap.insert(fact.id, new_id);
        leaves.push(Fact { id: new_id, text: fact.text.clone(), relevance_label: None });
    }
    leaves.sort_by_key(|f| f.id);
    EntailmentTree {
        hypothesis: tree.hypothesis.clone(),
        leaves,
        intermediates: tree.intermediates.clone(),
        steps: tree
            .steps
            .iter()
            .map(|s| crate::tree::Step {
                premises: s.premises.iter().map(|p| *remap.get(p).unwrap_or(p)).collect(),
                conclusion: s.conclusion,
            })
            .collect(),
    }
}

fn make_generator(kind: &GeneratorKind, example: &Example) -> GeneratorBackend {
    match kind {
        GeneratorKind::Template => GeneratorBackend::template(),
        GeneratorKind::Oracle => {
            let mut oracle = OracleGenerator::new();
            oracle.absorb_tree(&example.tree);
            GeneratorBackend::Oracle(oracle)
        }
        GeneratorKind::External { addr } => GeneratorBackend::External(ExternalClient::new(
            ExternalConfig { addr: addr.clone(), ..Default::default() },
        )),
    }
}

/// Run inference for one example under the configured task.
pub fn infer_example(
    model: &EmbeddingModel,
    heads: &ControllerHeads,
    config: &RunConfig,
    example: &Example,
    corpus: Option<(&crate::retrieval::CorpusIndex, &[Fact])>,
) -> Result<(EntailmentTree, f64), PipelineError> {
    let generator = make_generator(&config.generator, example);
    let gold_scorer;
    let scorer: &dyn Scorer = match config.scorer {
        ScorerKind::Heads => heads,
        ScorerKind::Gold => {
            gold_scorer = GoldScorer::from_tree(&example.tree);
            &gold_scorer
        }
    };
    let hypothesis_vec = model.encode(&example.hypothesis)?;

    match config.task {
        TaskKind::Task1 | TaskKind::Task2 => {
            // Task1 supplies exactly the gold facts; Task2 the full context.
            let facts = match config.task {
                TaskKind::Task1 => example.tree.leaves.clone(),
                _ => example.labeled_facts(),
            };
            let entries = pool_entries(model, &facts)?;
            let pool = if config.reason.delta > 0.0 {
                filter_facts(scorer, &hypothesis_vec, &entries, config.reason.delta)
            } else {
                entries
            };
            if config.task == TaskKind::Task1 {
                let tree = greedy_construct(
                    model,
                    scorer,
                    &generator,
                    &example.hypothesis,
                    &pool,
                    &config.reason,
                )?;
                let partials = greedy_partials(
                    model,
                    scorer,
                    &generator,
                    &example.hypothesis,
                    &pool,
                    &config.reason,
                )?;
                let score = partials.last().map(|p| p.cumulative_score).unwrap_or(0.0);
                Ok((tree, score))
            } else {
                let partials = greedy_partials(
                    model,
                    scorer,
                    &generator,
                    &example.hypothesis,
                    &pool,
                    &config.reason,
                )?;
                let score = partials.last().map(|p| p.cumulative_score).unwrap_or(0.0);
                let tree = best_partial_match(model, &partials, &example.hypothesis)?;
                Ok((tree, score))
            }
        }
        TaskKind::Task3 => {
            let (index, corpus_facts) = corpus.ok_or_else(|| {
                PipelineError::Config("Task3 inference needs a corpus".into())
            })?;
            let top = lexical_retrieve(index, &example.hypothesis, config.retrieve_k);
            let candidates: Vec<Fact> = top
                .iter()
                .filter_map(|(doc, _)| {
                    corpus_facts.iter().find(|f| f.id == NodeId::Sent(*doc)).cloned()
                })
                .collect();
            let refined = rerank_refine(
                model,
                heads,
                &example.hypothesis,
                &candidates,
                config.refine_limit,
                config.refine_by,
            );
            let entries = pool_entries(model, &refined)?;
            let pool = filter_facts(scorer, &hypothesis_vec, &entries, config.reason.delta);
            let ranked = beam_construct(
                model,
                scorer,
                &generator,
                &example.hypothesis,
                &pool,
                &config.reason,
            )?;
            let best = ranked.into_iter().next().ok_or(ReasonError::EmptyInput)?;
            Ok((remap_to_context(&best.tree, example), best.cumulative_score))
        }
    }
}

/// The full pipeline: train, infer, evaluate, write artifacts.
pub fn run_pipeline(config: &RunConfig) -> Result<RunArtifacts, PipelineError> {
    if config.task == TaskKind::Task3 && config.corpus_path.is_none() {
        return Err(PipelineError::Config("Task3 requires a corpus path".into()));
    }
    let _lock = DirLock::acquire(&config.out_dir)?;

    let train = load_dataset(&config.data_dir.join("train.jsonl"), Split::Train)?;
    let eval_path = config.data_dir.join(format!("{}.jsonl", config.eval_split));
    let eval = load_dataset(&eval_path, config.eval_split)?;

    // Encoder: gold steps plus synthetic single steps.
    let mut triples = gold_triples(&train.dataset);
    triples.extend(synth_singlesteps(&SynthConfig {
        n: config.synth_triples,
        seed: config.seed,
    }));
    let model = train_encoder(&triples, &config.encoder)?;
    let encoder_path = config.out_dir.join("encoder.ckpt");
    save_model(&model, &encoder_path)?;

    // Controller: teacher-forced states, distractors included outside Task1.
    let train_items: Vec<(EntailmentTree, Vec<Fact>)> = train
        .dataset
        .examples
        .iter()
        .map(|e| {
            let distractors = match config.task {
                TaskKind::Task1 => Vec::new(),
                _ => e.distractors.clone(),
            };
            (e.tree.clone(), distractors)
        })
        .collect();
    let trained = train_controller_with_curve(&model, &train_items, &config.controller)?;
    let heads = trained.heads;
    let heads_path = config.out_dir.join("heads.ckpt");
    crate::controller::save_heads(&heads, &encoder_path, &heads_path)?;

    // Corpus index for Task3.
    let corpus_data = match &config.corpus_path {
        Some(path) => {
            let (facts, _docs) = super::load_corpus(path)?;
            let index = build_index(&facts)?;
            Some((index, facts))
        }
        None => None,
    };

    // Inference.
    let mut predictions = Vec::with_capacity(eval.dataset.examples.len());
    let mut pairs = Vec::with_capacity(eval.dataset.examples.len());
    for example in &eval.dataset.examples {
        let (tree, score) = infer_example(
            &model,
            &heads,
            config,
            example,
            corpus_data.as_ref().map(|(i, f)| (i, f.as_slice())),
        )?;
        let proof = serialize_proof(&tree).unwrap_or_default();
        predictions.push(Prediction { id: example.id.clone(), proof, score });
        pairs.push((example.id.clone(), tree, example.tree.clone()));
    }
    let pred_path = config.out_dir.join("predictions.jsonl");
    let mut out = String::new();
    for p in &predictions {
        out.push_str(&serde_json::to_string(p).expect("serializable"));
        out.push('\n');
    }
    std::fs::write(&pred_path, out).map_err(|e| io_err(&pred_path, e))?;

    // Evaluation.
    let report = evaluate_dataset(&pairs, &Similarity::TokenF1, config.tau)?;
    let report_path = config.out_dir.join("report.json");
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&ReportOnly::from(&report)).expect("serializable"),
    )
    .map_err(|e| io_err(&report_path, e))?;
    let per_tree_path = config.out_dir.join("per_tree.tsv");
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
    std::fs::write(&per_tree_path, tsv).map_err(|e| io_err(&per_tree_path, e))?;

    // Breakdown by leaf count.
    let breakdown = breakdown_report(&report, &eval.dataset);
    let breakdown_path = config.out_dir.join("breakdown.tsv");
    let mut tsv = String::from("leaves\ttotal\tcorrect\trate\n");
    for row in &breakdown {
        tsv.push_str(&format!("{}\t{}\t{}\t{}\n", row.leaves, row.total, row.correct, row.rate));
    }
    std::fs::write(&breakdown_path, tsv).map_err(|e| io_err(&breakdown_path, e))?;

    // Manifest stamps the run.
    let manifest_path = config.out_dir.join("manifest.json");
    let manifest = serde_json::json!({
        "config_hash": format!("{:016x}", config.hash()),
        "seed": config.seed,
        "task": config.task,
        "eval_split": config.eval_split.to_string(),
        "train_trees": train.dataset.tree_count(),
        "train_skipped": train.skipped.len(),
        "eval_trees": eval.dataset.tree_count(),
        "eval_skipped": eval.skipped.len(),
        "controller_curve": trained.curve,
    });
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest).expect("json"))
        .map_err(|e| io_err(&manifest_path, e))?;

    Ok(RunArtifacts {
        report,
        breakdown,
        config_hash: config.hash(),
        out_dir: config.out_dir.clone(),
        skipped_examples: train.skipped.len() + eval.skipped.len(),
    })
}

/// Report aggregates without the per-tree list, for `report.json`.
#[derive(Serialize)]
struct ReportOnly {
    leaves_f1: f64,
    leaves_allcorrect: f64,
    steps_f1: f64,
    steps_allcorrect: f64,
    intermediates_f1: f64,
    intermediates_allcorrect: f64,
    overall_allcorrect: f64,
    trees: usize,
}

impl From<&EvalReport> for ReportOnly {
    fn from(r: &EvalReport) -> Self {
        ReportOnly {
            leaves_f1: r.leaves_f1,
            leaves_allcorrect: r.leaves_allcorrect,
            steps_f1: r.steps_f1,
            steps_allcorrect: r.steps_allcorrect,
            intermediates_f1: r.intermediates_f1,
            intermediates_allcorrect: r.intermediates_allcorrect,
            overall_allcorrect: r.overall_allcorrect,
            trees: r.per_tree.len(),
        }
    }
}
