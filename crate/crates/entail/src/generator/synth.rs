//! Seeded synthetic single-step data.
//!
//! Triples come from compositional schemata over a fixed pseudoword lexicon:
//! taxonomy ("X is a kind of Y" + "Y has property Z" -> "X has property Z"),
//! causal and part-whole chaining, and subject conjunction. Link entities
//! (the Y of taxonomy, the middle of a chain) come from pools of their own
//! and the surface forms keep premise and conclusion token counts equal, so
//! the sum-composition geometry the encoder trains toward is satisfiable.
//! The lexicon is constant: differently seeded sets share a vocabulary and
//! the seed picks combinations.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeSet;

use crate::embed::StepTriple;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
}

/// A two-level composition: `a + b -> intermediate`, then
/// `intermediate + c -> root`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainCase {
    pub a: String,
    pub b: String,
    pub c: String,
    pub intermediate: String,
    pub root: String,
}

const CONSONANTS: &[&str] = &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u"];
const LEXICON_SEED: u64 = 0x5eed_1ec5;

/// Word pools by grammatical role. Link words never appear as endpoints, so
/// their embeddings are free to satisfy the composition constraints.
pub(crate) struct Lexicon {
    pub entities: Vec<String>,
    pub categories: Vec<String>,
    pub causal_links: Vec<String>,
    pub part_links: Vec<String>,
    /// Relation verbs in priority order, used by the tree generator.
    pub causal_verbs: Vec<String>,
    pub part_verbs: Vec<String>,
    /// Three-token property phrases.
    pub properties: Vec<String>,
}

fn pseudoword(rng: &mut ChaCha8Rng, syllables: usize) -> String {
    let mut word = String::new();
    for _ in 0..syllables {
        word.push_str(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
        word.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
    }
    word.push_str(CONSONANTS[rng.gen_range(0..CONSONANTS.len())]);
    word
}

pub(crate) fn lexicon() -> Lexicon {
    let mut rng = ChaCha8Rng::seed_from_u64(LEXICON_SEED);
    let reserved: BTreeSet<&str> =
        ["is", "a", "kind", "of", "has", "causes", "part", "and", "property", "very"].into();
    let mut seen = BTreeSet::new();
    let mut draw = |rng: &mut ChaCha8Rng, count: usize, syllables: usize| -> Vec<String> {
        let mut words = Vec::with_capacity(count);
        while words.len() < count {
            let w = pseudoword(rng, syllables);
            if !reserved.contains(w.as_str()) && seen.insert(w.clone()) {
                words.push(w);
            }
        }
        words
    };
    let entities = draw(&mut rng, 90, 2);
    let categories = draw(&mut rng, 40, 2);
    let causal_links = draw(&mut rng, 60, 2);
    let part_links = draw(&mut rng, 60, 2);
    let causal_verbs = draw(&mut rng, 50, 2);
    let part_verbs = draw(&mut rng, 50, 2);
    let adverbs = draw(&mut rng, 25, 3);
    let adjectives = draw(&mut rng, 25, 2);
    let properties = (0..50)
        .map(|_| {
            format!(
                "very {} {}",
                adverbs[rng.gen_range(0..adverbs.len())],
                adjectives[rng.gen_range(0..adjectives.len())]
            )
        })
        .collect();
    Lexicon { entities, categories, causal_links, part_links, causal_verbs, part_verbs, properties }
}

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &'a [String], taken: &[&str]) -> &'a str {
    loop {
        let w = pool[rng.gen_range(0..pool.len())].as_str();
        if !taken.contains(&w) {
            return w;
        }
    }
}

fn make_triple(rng: &mut ChaCha8Rng, lex: &Lexicon) -> StepTriple {
    match rng.gen_range(0..10u8) {
        0..=2 => {
            let x = pick(rng, &lex.entities, &[]);
            let y = pick(rng, &lex.categories, &[]);
            let z = pick(rng, &lex.properties, &[]);
            StepTriple::new(
                format!("{x} is a kind of {y}"),
                format!("{y} has property {z}"),
                format!("{x} has property {z}"),
            )
        }
        3..=5 => {
            let x = pick(rng, &lex.entities, &[]);
            let m = pick(rng, &lex.causal_links, &[]);
            let z = pick(rng, &lex.entities, &[x]);
            StepTriple::new(
                format!("{x} causes {m}"),
                format!("{m} causes {z}"),
                format!("{x} causes {z}"),
            )
        }
        6..=8 => {
            let x = pick(rng, &lex.entities, &[]);
            let m = pick(rng, &lex.part_links, &[]);
            let z = pick(rng, &lex.entities, &[x]);
            StepTriple::new(
                format!("{x} is part of {m}"),
                format!("{m} is part of {z}"),
                format!("{x} is part of {z}"),
            )
        }
        _ => {
            let x = pick(rng, &lex.entities, &[]);
            let p = pick(rng, &lex.properties, &[]);
            let q = pick(rng, &lex.properties, &[p]);
            StepTriple::new(
                format!("{x} is {p}"),
                format!("{x} is {q}"),
                format!("{x} is {p} and {q}"),
            )
        }
    }
}

/// Generate `config.n` distinct single-step triples, deterministic per seed.
pub fn synth_singlesteps(config: &SynthConfig) -> Vec<StepTriple> {
    let lex = lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(config.n);
    while out.len() < config.n {
        let triple = make_triple(&mut rng, &lex);
        let key = format!("{}|{}|{}", triple.premise_a, triple.premise_b, triple.conclusion);
        if seen.insert(key) {
            out.push(triple);
        }
    }
    out
}

/// Generate two-level causal / part-whole chains over the same lexicon,
/// deterministic per seed. Both middles are link words.
pub fn synth_chains(n: usize, seed: u64) -> Vec<ChainCase> {
    let lex = lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let case = if rng.gen_bool(0.5) {
            let w = pick(&mut rng, &lex.entities, &[]);
            let m1 = pick(&mut rng, &lex.causal_links, &[]);
            let m2 = pick(&mut rng, &lex.causal_links, &[m1]);
            let z = pick(&mut rng, &lex.entities, &[w]);
            ChainCase {
                a: format!("{w} causes {m1}"),
                b: format!("{m1} causes {m2}"),
                intermediate: format!("{w} causes {m2}"),
                c: format!("{m2} causes {z}"),
                root: format!("{w} causes {z}"),
            }
        } else {
            let w = pick(&mut rng, &lex.entities, &[]);
            let m1 = pick(&mut rng, &lex.part_links, &[]);
            let m2 = pick(&mut rng, &lex.part_links, &[m1]);
            let z = pick(&mut rng, &lex.entities, &[w]);
            ChainCase {
                a: format!("{w} is part of {m1}"),
                b: format!("{m1} is part of {m2}"),
                intermediate: format!("{w} is part of {m2}"),
                c: format!("{m2} is part of {z}"),
                root: format!("{w} is part of {z}"),
            }
        };
        if seen.insert(case.a.clone() + "|" + &case.c) {
            out.push(case);
        }
    }
    out
}

/// A chain unrolled into its two single steps, for training-set augmentation.
pub fn chain_steps(case: &ChainCase) -> [StepTriple; 2] {
    [
        StepTriple::new(&case.a, &case.b, &case.intermediate),
        StepTriple::new(&case.intermediate, &case.c, &case.root),
    ]
}

/// Random sentences from the lexicon, used as distractors.
pub fn synth_distractors(n: usize, seed: u64) -> Vec<String> {
    let lex = lexicon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let x = pick(&mut rng, &lex.entities, &[]);
        out.push(match rng.gen_range(0..3u8) {
            0 => format!("{x} is {}", pick(&mut rng, &lex.properties, &[])),
            1 => format!("{x} has property {}", pick(&mut rng, &lex.properties, &[])),
            _ => {
                let m = pick(&mut rng, &lex.causal_links, &[]);
                format!("{x} causes {m}")
            }
        });
    }
    out
}
