//! Dataset ingestion and validation, synthetic benchmark generation, and
//! end-to-end run orchestration.
//!
//! Dataset files are JSONL: one example per line with `id`, `hypothesis`,
//! `context` (map of `sentK` to text), `proof` (linearized), and optional
//! `meta.distractors`. Corpus files are JSONL `{id, text}`.

pub mod benchmark;
pub mod gen;
pub mod pipeline;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tree::{parse_proof, EntailmentTree, Fact, NodeId};

/// The benchmark's published split statistics: (trees, steps, leaves).
pub const SPLIT_STATS: [(Split, usize, usize, usize); 3] = [
    (Split::Train, 1131, 3476, 5764),
    (Split::Dev, 187, 487, 816),
    (Split::Test, 340, 902, 1518),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Dev => write!(f, "dev"),
            Split::Test => write!(f, "test"),
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One benchmark example: the gold tree plus its full fact context.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub hypothesis: String,
    /// Every context fact, gold leaves and distractors alike.
    pub context: BTreeMap<NodeId, String>,
    pub tree: EntailmentTree,
    /// Context facts the proof does not use, labeled irrelevant.
    pub distractors: Vec<Fact>,
}

impl Example {
    /// All context facts with relevance labels filled in.
    pub fn labeled_facts(&self) -> Vec<Fact> {
        let leaf_ids = self.tree.leaf_ids();
        self.context
            .iter()
            .filter(|(id, _)| id.is_sent())
            .map(|(id, text)| Fact {
                id: *id,
                text: text.clone(),
                relevance_label: Some(leaf_ids.contains(id)),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn tree_count(&self) -> usize {
        self.examples.len()
    }

    pub fn step_count(&self) -> usize {
        self.examples.iter().map(|e| e.tree.steps.len()).sum()
    }

    pub fn leaf_count(&self) -> usize {
        self.examples.iter().map(|e| e.tree.leaves.len()).sum()
    }

    /// Expected statistics for this split, when it is the benchmark.
    pub fn expected_stats(&self) -> (usize, usize, usize) {
        SPLIT_STATS
            .iter()
            .find(|(s, _, _, _)| *s == self.split)
            .map(|(_, t, s, l)| (*t, *s, *l))
            .expect("all splits are listed")
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error at {path}:{line}: {message}")]
    Schema {
        path: String,
        line: usize,
        message: String,
    },
    #[error("invalid example {id} at line {line}: {message}")]
    InvalidExample {
        id: String,
        line: usize,
        message: String,
    },
}

/// Raw JSONL record.
#[derive(Debug, Serialize, Deserialize)]
struct RawExample {
    id: String,
    hypothesis: String,
    context: BTreeMap<String, String>,
    proof: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    meta: Option<RawMeta>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct RawMeta {
    #[serde(default)]
    distractors: Vec<String>,
}

/// A record that failed example-level validation and was skipped.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

/// Result of a lenient load: the usable dataset plus a manifest of skipped
/// records.
#[derive(Debug)]
pub struct LoadOutcome {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedRecord>,
}

/// Load a dataset, skipping invalid examples (recorded in the manifest).
/// Malformed JSON or schema-level problems abort with a line number.
pub fn load_dataset(path: &Path, split: Split) -> Result<LoadOutcome, DataError> {
    load_dataset_opts(path, split, false)
}

/// Strict variant: the first invalid example aborts the load.
pub fn load_dataset_strict(path: &Path, split: Split) -> Result<Dataset, DataError> {
    load_dataset_opts(path, split, true).map(|o| o.dataset)
}

fn load_dataset_opts(path: &Path, split: Split, strict: bool) -> Result<LoadOutcome, DataError> {
    let io_err = |e: std::io::Error| DataError::Io { path: path.display().to_string(), source: e };
    let content = std::fs::read_to_string(path).map_err(io_err)?;
    let path_str = path.display().to_string();

    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    let mut seen_ids = std::collections::BTreeSet::new();
    let mut any_line = false;

    for (lineno, line) in content.lines().enumerate() {
        let line_no = lineno + 1;
        if line.trim().is_empty() {
            continue;
        }
        any_line = true;
        let raw: RawExample =
            serde_json::from_str(line).map_err(|e| DataError::Schema {
                path: path_str.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
        if !seen_ids.insert(raw.id.clone()) {
            return Err(DataError::Schema {
                path: path_str.clone(),
                line: line_no,
                message: format!("duplicate example id {:?}", raw.id),
            });
        }

        match build_example(&raw) {
            Ok(example) => examples.push(example),
            Err(reason) => {
                if strict {
                    return Err(DataError::InvalidExample {
                        id: raw.id,
                        line: line_no,
                        message: reason,
                    });
                }
                skipped.push(SkippedRecord { line: line_no, id: raw.id, reason });
            }
        }
    }
    if !any_line {
        return Err(DataError::Schema {
            path: path_str,
            line: 1,
            message: "file contains no examples".into(),
        });
    }
    Ok(LoadOutcome { dataset: Dataset { split, examples }, skipped })
}

fn build_example(raw: &RawExample) -> Result<Example, String> {
    let mut context: BTreeMap<NodeId, String> = BTreeMap::new();
    for (key, text) in &raw.context {
        let id: NodeId = key.parse().map_err(|_| format!("bad context key {key:?}"))?;
        if !id.is_sent() {
            return Err(format!("context key {key:?} is not a sentence id"));
        }
        if text.trim().is_empty() {
            return Err(format!("context fact {key} has empty text"));
        }
        context.insert(id, text.clone());
    }
    let mut parse_context = context.clone();
    parse_context.insert(NodeId::Hypothesis, raw.hypothesis.clone());
    let tree = parse_proof(&raw.proof, &parse_context).map_err(|e| e.to_string())?;

    // Every context fact the proof does not use is a distractor. An explicit
    // meta list, when present, must be consistent.
    let leaf_ids = tree.leaf_ids();
    let distractors: Vec<Fact> = context
        .iter()
        .filter(|(id, _)| !leaf_ids.contains(id))
        .map(|(id, text)| Fact { id: *id, text: text.clone(), relevance_label: Some(false) })
        .collect();
    if let Some(meta) = &raw.meta {
        for d in &meta.distractors {
            let id: NodeId = d.parse().map_err(|_| format!("bad distractor id {d:?}"))?;
            if leaf_ids.contains(&id) {
                return Err(format!("{d} is listed as a distractor but used by the proof"));
            }
            if !context.contains_key(&id) {
                return Err(format!("distractor {d} is not in the context"));
            }
        }
    }
    Ok(Example {
        id: raw.id.clone(),
        hypothesis: crate::tree::normalize_text(&raw.hypothesis),
        context,
        tree,
        distractors,
    })
}

/// Serialize an example back to its JSONL record.
pub fn example_to_json(example: &Example) -> serde_json::Value {
    let context: BTreeMap<String, String> = example
        .context
        .iter()
        .map(|(id, text)| (id.to_string(), text.clone()))
        .collect();
    let proof = crate::tree::serialize_proof(&example.tree).expect("gold trees are valid");
    let meta = if example.distractors.is_empty() {
        None
    } else {
        Some(RawMeta {
            distractors: example.distractors.iter().map(|f| f.id.to_string()).collect(),
        })
    };
    serde_json::to_value(RawExample {
        id: example.id.clone(),
        hypothesis: example.hypothesis.clone(),
        context,
        proof,
        meta,
    })
    .expect("serializable")
}

/// A corpus document: original string id plus its text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDoc {
    pub id: String,
    pub text: String,
}

/// Load a `{id, text}` JSONL corpus, assigning dense sentence indices in
/// file order (1-based).
pub fn load_corpus(path: &Path) -> Result<(Vec<Fact>, Vec<CorpusDoc>), DataError> {
    let io_err = |e: std::io::Error| DataError::Io { path: path.display().to_string(), source: e };
    let content = std::fs::read_to_string(path).map_err(io_err)?;
    let mut facts = Vec::new();
    let mut docs = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let doc: CorpusDoc = serde_json::from_str(line).map_err(|e| DataError::Schema {
            path: path.display().to_string(),
            line: lineno + 1,
            message: e.to_string(),
        })?;
        facts.push(Fact::new(NodeId::Sent(facts.len() as u32 + 1), doc.text.clone()));
        docs.push(doc);
    }
    if facts.is_empty() {
        return Err(DataError::Schema {
            path: path.display().to_string(),
            line: 1,
            message: "corpus contains no documents".into(),
        });
    }
    Ok((facts, docs))
}
