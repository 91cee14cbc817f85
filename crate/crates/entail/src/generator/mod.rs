//! Intermediate-conclusion generation behind one interface.
//!
//! Three interchangeable backends: deterministic text templates, a gold
//! lookup table (isolates search quality from generation quality), and an
//! external service speaking a newline-delimited JSON protocol.

mod external;
mod synth;
mod template;

pub use external::{ExternalClient, ExternalConfig, WireRequest, WireResponse, SUFFIX};
pub use synth::{
    chain_steps, synth_chains, synth_distractors, synth_singlesteps, ChainCase, SynthConfig,
};
pub use template::TemplateGenerator;

pub(crate) use synth::{lexicon, Lexicon};

use std::collections::BTreeMap;

use thiserror::Error;

use crate::tree::{normalize_text, EntailmentTree, NodeId};

/// What to generate: a conclusion from two premises, or the missing premise
/// from a conclusion and the known premise.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase", tag = "direction")]
pub enum GenRequest {
    Deduce { premise_a: String, premise_b: String },
    Abduce { conclusion: String, known_premise: String },
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("no gold conclusion recorded for premise pair ({0:?}, {1:?})")]
    OracleMiss(String, String),
    #[error("external generator timed out after {0:?}")]
    ExternalTimeout(std::time::Duration),
    #[error("external generator protocol error: {0}")]
    ExternalProtocol(String),
    #[error("request has an empty segment")]
    EmptyInput,
}

/// Gold-table backend: keyed by the unordered, normalized premise pair for
/// deduction and by (conclusion, known premise) for abduction. N-ary gold
/// steps are additionally keyed by their full sorted premise set.
#[derive(Debug, Clone, Default)]
pub struct OracleGenerator {
    deduce: BTreeMap<(String, String), String>,
    abduce: BTreeMap<(String, String), String>,
    nary: BTreeMap<Vec<String>, String>,
}

impl OracleGenerator {
    pub fn new() -> Self {
        Self::default()
    }

    fn pair_key(a: &str, b: &str) -> (String, String) {
        let (a, b) = (normalize_text(a), normalize_text(b));
        if a <= b {
            (a, b)
        } else {
            (b, a)
        }
    }

    pub fn insert_step(&mut self, premise_a: &str, premise_b: &str, conclusion: &str) {
        let conclusion = normalize_text(conclusion);
        self.deduce
            .insert(Self::pair_key(premise_a, premise_b), conclusion.clone());
        self.abduce.insert(
            (normalize_text(conclusion.as_str()), normalize_text(premise_a)),
            normalize_text(premise_b),
        );
        self.abduce.insert(
            (conclusion, normalize_text(premise_b)),
            normalize_text(premise_a),
        );
    }

    /// Record every gold step of a tree, the hypothesis standing in as the
    /// root step's conclusion text.
    pub fn absorb_tree(&mut self, tree: &EntailmentTree) {
        for step in &tree.steps {
            if step.premises.len() < 2 {
                continue;
            }
            let texts: Vec<&str> = step
                .premises
                .iter()
                .filter_map(|p| tree.node_text(*p))
                .collect();
            if texts.len() != step.premises.len() {
                continue;
            }
            let conclusion = match step.conclusion {
                NodeId::Hypothesis => tree.hypothesis.as_str(),
                id => match tree.node_text(id) {
                    Some(t) => t,
                    None => continue,
                },
            };
            let mut key: Vec<String> = texts.iter().map(|t| normalize_text(t)).collect();
            key.sort();
            self.nary.insert(key, normalize_text(conclusion));
            if texts.len() == 2 {
                self.insert_step(texts[0], texts[1], conclusion);
            }
        }
    }

    pub fn lookup_deduce(&self, a: &str, b: &str) -> Option<&str> {
        self.deduce.get(&Self::pair_key(a, b)).map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.deduce.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deduce.is_empty()
    }
}

/// The pluggable generator. Template and Oracle are pure and deterministic;
/// External performs I/O with bounded in-flight requests.
pub enum GeneratorBackend {
    Template(TemplateGenerator),
    Oracle(OracleGenerator),
    External(ExternalClient),
}

impl GeneratorBackend {
    pub fn template() -> Self {
        GeneratorBackend::Template(TemplateGenerator::default())
    }

    /// Produce the conclusion (Deduce) or missing premise (Abduce) text.
    pub fn generate(&self, request: &GenRequest) -> Result<String, GenError> {
        let (seg_a, seg_b) = match request {
            GenRequest::Deduce { premise_a, premise_b } => (premise_a, premise_b),
            GenRequest::Abduce { conclusion, known_premise } => (known_premise, conclusion),
        };
        if seg_a.trim().is_empty() || seg_b.trim().is_empty() {
            return Err(GenError::EmptyInput);
        }
        match self {
            GeneratorBackend::Template(t) => Ok(t.generate(request)),
            GeneratorBackend::Oracle(o) => match request {
                GenRequest::Deduce { premise_a, premise_b } => o
                    .lookup_deduce(premise_a, premise_b)
                    .map(|s| s.to_string())
                    .ok_or_else(|| GenError::OracleMiss(premise_a.clone(), premise_b.clone())),
                GenRequest::Abduce { conclusion, known_premise } => {
                    let key = (normalize_text(conclusion), normalize_text(known_premise));
                    o.abduce
                        .get(&key)
                        .cloned()
                        .ok_or_else(|| GenError::OracleMiss(known_premise.clone(), conclusion.clone()))
                }
            },
            GeneratorBackend::External(client) => client.generate(request),
        }
    }

    /// Deduce a conclusion from two or more premises. Pairs route through
    /// [`GeneratorBackend::generate`]; larger sets use the n-ary gold table
    /// (Oracle), a folded conjunction (Template), or extra wire segments
    /// (External).
    pub fn generate_many(&self, premises: &[&str]) -> Result<String, GenError> {
        if premises.iter().any(|p| p.trim().is_empty()) {
            return Err(GenError::EmptyInput);
        }
        match premises {
            [] | [_] => Err(GenError::EmptyInput),
            [a, b] => self.generate(&GenRequest::Deduce {
                premise_a: a.to_string(),
                premise_b: b.to_string(),
            }),
            _ => match self {
                GeneratorBackend::Template(_) => {
                    let parts: Vec<String> =
                        premises.iter().map(|p| normalize_text(p)).collect();
                    Ok(parts.join(" and "))
                }
                GeneratorBackend::Oracle(o) => {
                    let mut key: Vec<String> =
                        premises.iter().map(|p| normalize_text(p)).collect();
                    key.sort();
                    o.nary.get(&key).cloned().ok_or_else(|| {
                        GenError::OracleMiss(premises[0].to_string(), premises[1].to_string())
                    })
                }
                GeneratorBackend::External(client) => client.generate_segments(
                    "deduce",
                    &premises.iter().map(|p| p.to_string()).collect::<Vec<_>>(),
                ),
            },
        }
    }
}
