//! Deterministic synthetic benchmark whose split statistics match the
//! published ones exactly: 1131/187/340 trees, 3476/487/902 steps,
//! 5764/816/1518 leaves. Tree shapes mix binary and n-ary steps (the leaf
//! surplus over `steps + trees` forces extra premise slots), texts come from
//! the synthetic lexicon, and distractors are shuffled in among gold leaves.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::path::Path;

use crate::tree::{EntailmentTree, Fact, NodeId, Step};

use super::gen::build_tree;
use super::{example_to_json, CorpusDoc, DataError, Dataset, Example, Split, SPLIT_STATS};

const MAX_STEPS_PER_TREE: usize = 11;
const MAX_ARITY: usize = 5;

/// Generate one split with exactly the requested (trees, steps, leaves).
fn generate_split(
    split: Split,
    trees: usize,
    steps: usize,
    leaves: usize,
    seed: u64,
) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // Distribute steps: every tree gets one, the remainder lands randomly.
    let mut steps_per_tree = vec![1usize; trees];
    let mut remaining = steps - trees;
    while remaining > 0 {
        let t = rng.gen_range(0..trees);
        if steps_per_tree[t] < MAX_STEPS_PER_TREE {
            steps_per_tree[t] += 1;
            remaining -= 1;
        }
    }

    // Distribute the leaf surplus as arity increments over individual steps.
    let mut arities: Vec<Vec<usize>> = steps_per_tree.iter().map(|&s| vec![2; s]).collect();
    let mut surplus = leaves - (steps + trees);
    while surplus > 0 {
        let t = rng.gen_range(0..trees);
        let s = rng.gen_range(0..arities[t].len());
        if arities[t][s] < MAX_ARITY {
            arities[t][s] += 1;
            surplus -= 1;
        }
    }

    let examples = arities
        .iter()
        .enumerate()
        .map(|(idx, tree_arities)| {
            let tree = build_tree(&mut rng, tree_arities);
            let distractor_count = rng.gen_range(3..=8);
            assemble_example(&mut rng, split, idx, tree, distractor_count)
        })
        .collect();
    Dataset { split, examples }
}

/// Add distractors, shuffle all sentence ids so gold leaves are not a
/// prefix, and package the example.
fn assemble_example(
    rng: &mut ChaCha8Rng,
    split: Split,
    index: usize,
    tree: EntailmentTree,
    distractor_count: usize,
) -> Example {
    let lex = crate::generator::lexicon();
    let gold_count = tree.leaves.len();
    let total = gold_count + distractor_count;

    // Position permutation over 1..=total.
    let mut positions: Vec<u32> = (1..=total as u32).collect();
    positions.shuffle(rng);
    let remap: BTreeMap<NodeId, NodeId> = tree
        .leaves
        .iter()
        .enumerate()
        .map(|(i, f)| (f.id, NodeId::Sent(positions[i])))
        .collect();

    let mut leaves: Vec<Fact> = tree
        .leaves
        .iter()
        .map(|f| Fact { id: remap[&f.id], text: f.text.clone(), relevance_label: None })
        .collect();
    leaves.sort_by_key(|f| f.id);
    let steps: Vec<Step> = tree
        .steps
        .iter()
        .map(|s| Step {
            premises: s.premises.iter().map(|p| *remap.get(p).unwrap_or(p)).collect(),
            conclusion: s.conclusion,
        })
        .collect();
    let tree = EntailmentTree {
        hypothesis: tree.hypothesis,
        leaves,
        intermediates: tree.intermediates,
        steps,
    };

    let mut context: BTreeMap<NodeId, String> =
        tree.leaves.iter().map(|f| (f.id, f.text.clone())).collect();
    let mut distractors = Vec::with_capacity(distractor_count);
    let mut used_texts: std::collections::BTreeSet<String> =
        context.values().cloned().collect();
    for &pos in positions.iter().skip(gold_count) {
        let text = loop {
            let e = &lex.entities[rng.gen_range(0..lex.entities.len())];
            let candidate = match rng.gen_range(0..3u8) {
                0 => format!("{e} is {}", lex.properties[rng.gen_range(0..lex.properties.len())]),
                1 => {
                    format!("{e} has property {}", lex.properties[rng.gen_range(0..lex.properties.len())])
                }
                _ => {
                    let f = &lex.causal_links[rng.gen_range(0..lex.causal_links.len())];
                    format!("{e} causes {f}")
                }
            };
            if used_texts.insert(candidate.clone()) {
                break candidate;
            }
        };
        let id = NodeId::Sent(pos);
        context.insert(id, text.clone());
        distractors.push(Fact { id, text, relevance_label: Some(false) });
    }
    distractors.sort_by_key(|f| f.id);

    Example {
        id: format!("{split}-{:04}", index + 1),
        hypothesis: tree.hypothesis.clone(),
        context,
        tree,
        distractors,
    }
}

/// The three splits, statistics matching [`SPLIT_STATS`] exactly.
pub fn generate_benchmark(seed: u64) -> [Dataset; 3] {
    let mut out = Vec::with_capacity(3);
    for (i, (split, trees, steps, leaves)) in SPLIT_STATS.iter().enumerate() {
        out.push(generate_split(*split, *trees, *steps, *leaves, seed.wrapping_add(i as u64)));
    }
    out.try_into().expect("three splits")
}

/// The open corpus for retrieval: every context fact of every split plus
/// extra noise sentences, deduplicated, in deterministic order.
pub fn generate_corpus(datasets: &[Dataset], noise: usize, seed: u64) -> Vec<CorpusDoc> {
    let mut seen = std::collections::BTreeSet::new();
    let mut docs = Vec::new();
    for dataset in datasets {
        for example in &dataset.examples {
            for text in example.context.values() {
                if seen.insert(text.clone()) {
                    docs.push(CorpusDoc {
                        id: format!("fact-{:05}", docs.len() + 1),
                        text: text.clone(),
                    });
                }
            }
        }
    }
    for text in crate::generator::synth_distractors(noise, seed) {
        if seen.insert(text.clone()) {
            docs.push(CorpusDoc { id: format!("fact-{:05}", docs.len() + 1), text });
        }
    }
    docs
}

/// Write the full benchmark (three split files plus the corpus) to `dir`.
pub fn write_benchmark(dir: &Path, seed: u64) -> Result<(), DataError> {
    let io_err = |path: &Path, e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source: e,
    };
    std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let datasets = generate_benchmark(seed);
    for dataset in &datasets {
        let path = dir.join(format!("{}.jsonl", dataset.split));
        let mut out = String::new();
        for example in &dataset.examples {
            out.push_str(&example_to_json(example).to_string());
            out.push('\n');
        }
        std::fs::write(&path, out).map_err(|e| io_err(&path, e))?;
    }
    let corpus = generate_corpus(&datasets, 500, seed.wrapping_add(17));
    let path = dir.join("corpus.jsonl");
    let mut out = String::new();
    for doc in &corpus {
        out.push_str(&serde_json::to_string(doc).expect("serializable"));
        out.push('\n');
    }
    std::fs::write(&path, out).map_err(|e| io_err(&path, e))
}
