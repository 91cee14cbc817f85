//! Open-corpus candidate selection: a BM25 inverted index narrows the corpus
//! to k candidates, then the trained relevance head (or raw embedding
//! distance) refines them to a working fact set.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::controller::{score_fact, ControllerHeads};
use crate::embed::{distance, tokenize, EmbeddingModel};
use crate::tree::{Fact, NodeId};

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot index an empty corpus")]
    EmptyCorpus,
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad index file: {0}")]
    Format(String),
}

/// Inverted index with Okapi BM25 scoring parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusIndex {
    /// token -> postings sorted by fact id: (sent index, term frequency).
    pub postings: BTreeMap<String, Vec<(u32, u32)>>,
    /// sent index -> token count.
    pub doc_lengths: BTreeMap<u32, u32>,
    pub idf: BTreeMap<String, f64>,
    pub k1: f64,
    pub b: f64,
    pub avg_doc_len: f64,
}

fn sent_index(id: NodeId) -> u32 {
    match id {
        NodeId::Sent(k) => k,
        _ => 0,
    }
}

/// Build the index; identical corpora produce identical indexes.
pub fn build_index(corpus: &[Fact]) -> Result<CorpusIndex, IndexError> {
    if corpus.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut postings: BTreeMap<String, Vec<(u32, u32)>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    for fact in corpus {
        let tokens = tokenize(&fact.text);
        let doc = sent_index(fact.id);
        doc_lengths.insert(doc, tokens.len() as u32);
        let mut counts: BTreeMap<String, u32> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_insert(0) += 1;
        }
        for (token, tf) in counts {
            postings.entry(token).or_default().push((doc, tf));
        }
    }
    for list in postings.values_mut() {
        list.sort_unstable_by_key(|(doc, _)| *doc);
    }
    let n = corpus.len() as f64;
    let idf = postings
        .iter()
        .map(|(token, list)| {
            let df = list.len() as f64;
            (token.clone(), (1.0 + (n - df + 0.5) / (df + 0.5)).ln())
        })
        .collect();
    let avg_doc_len =
        doc_lengths.values().map(|&l| l as f64).sum::<f64>() / doc_lengths.len() as f64;
    Ok(CorpusIndex { postings, doc_lengths, idf, k1: DEFAULT_K1, b: DEFAULT_B, avg_doc_len })
}

impl CorpusIndex {
    /// BM25 score of one document for a query's unique tokens.
    pub fn score_doc(&self, query_tokens: &[String], doc: u32) -> f64 {
        let len = self.doc_lengths.get(&doc).copied().unwrap_or(0) as f64;
        let norm = self.k1 * (1.0 - self.b + self.b * len / self.avg_doc_len);
        let mut seen = std::collections::BTreeSet::new();
        let mut score = 0.0;
        for token in query_tokens {
            if !seen.insert(token.as_str()) {
                continue;
            }
            let Some(list) = self.postings.get(token) else { continue };
            let Ok(pos) = list.binary_search_by_key(&doc, |(d, _)| *d) else {
                continue;
            };
            let tf = list[pos].1 as f64;
            score += self.idf[token] * tf * (self.k1 + 1.0) / (tf + norm);
        }
        score
    }
}

/// Top-k sent indices by BM25 score, descending, ties by ascending id.
/// Zero-scoring documents fill out the tail deterministically when the
/// corpus is smaller than k.
pub fn lexical_retrieve(index: &CorpusIndex, hypothesis: &str, k: usize) -> Vec<(u32, f64)> {
    let query = tokenize(hypothesis);
    let mut scores: BTreeMap<u32, f64> = index.doc_lengths.keys().map(|&d| (d, 0.0)).collect();
    let mut seen = std::collections::BTreeSet::new();
    for token in &query {
        if !seen.insert(token.as_str()) {
            continue;
        }
        let Some(list) = index.postings.get(token) else { continue };
        for &(doc, _) in list {
            let s = index.score_doc(std::slice::from_ref(token), doc);
            *scores.get_mut(&doc).unwrap() += s;
        }
    }
    let mut ranked: Vec<(u32, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// How the second-stage refinement orders candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RefineBy {
    /// Trained relevance head score, descending.
    #[default]
    FactScore,
    /// Raw embedding L2 distance to the hypothesis, ascending.
    Distance,
}

/// Keep the best `limit` candidates under the learned relevance score (or
/// embedding distance). Output is a subset of the input.
pub fn rerank_refine(
    model: &EmbeddingModel,
    heads: &ControllerHeads,
    hypothesis: &str,
    candidates: &[Fact],
    limit: usize,
    by: RefineBy,
) -> Vec<Fact> {
    let Ok(h) = model.encode(hypothesis) else {
        return candidates.iter().take(limit).cloned().collect();
    };
    let mut scored: Vec<(f64, &Fact)> = candidates
        .iter()
        .map(|fact| {
            let key = match (by, model.encode(&fact.text)) {
                (RefineBy::FactScore, Ok(v)) => -score_fact(heads, &h, &v).unwrap_or(0.0),
                (RefineBy::Distance, Ok(v)) => distance(&h, &v).unwrap_or(f64::MAX),
                (_, Err(_)) => f64::MAX,
            };
            (key, fact)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    scored.into_iter().take(limit).map(|(_, f)| f.clone()).collect()
}

const INDEX_MAGIC: &[u8] = b"entail-index v1\n";

/// Persist the index as a versioned little-endian binary file. Rebuilding
/// from the same corpus and saving again is byte-identical.
pub fn save_index(index: &CorpusIndex, path: &Path) -> Result<(), IndexError> {
    let io_err = |e: std::io::Error| IndexError::Io { path: path.display().to_string(), source: e };
    let mut out: Vec<u8> = Vec::new();
    out.extend_from_slice(INDEX_MAGIC);
    out.extend_from_slice(&index.k1.to_le_bytes());
    out.extend_from_slice(&index.b.to_le_bytes());
    out.extend_from_slice(&index.avg_doc_len.to_le_bytes());
    out.extend_from_slice(&(index.doc_lengths.len() as u64).to_le_bytes());
    for (&doc, &len) in &index.doc_lengths {
        out.extend_from_slice(&doc.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
    }
    out.extend_from_slice(&(index.postings.len() as u64).to_le_bytes());
    for (token, list) in &index.postings {
        out.extend_from_slice(&(token.len() as u64).to_le_bytes());
        out.extend_from_slice(token.as_bytes());
        out.extend_from_slice(&index.idf[token].to_le_bytes());
        out.extend_from_slice(&(list.len() as u64).to_le_bytes());
        for &(doc, tf) in list {
            out.extend_from_slice(&doc.to_le_bytes());
            out.extend_from_slice(&tf.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path).map_err(io_err)?;
    file.write_all(&out).map_err(io_err)
}

pub fn load_index(path: &Path) -> Result<CorpusIndex, IndexError> {
    let io_err = |e: std::io::Error| IndexError::Io { path: path.display().to_string(), source: e };
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(io_err)?
        .read_to_end(&mut bytes)
        .map_err(io_err)?;
    let mut cursor = 0usize;
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8], IndexError> {
        if *cursor + n > bytes.len() {
            return Err(IndexError::Format("truncated index file".into()));
        }
        let slice = &bytes[*cursor..*cursor + n];
        *cursor += n;
        Ok(slice)
    };
    if take(&mut cursor, INDEX_MAGIC.len())? != INDEX_MAGIC {
        return Err(IndexError::Format("bad magic".into()));
    }
    let f64_at = |c: &mut usize| -> Result<f64, IndexError> {
        Ok(f64::from_le_bytes(take(c, 8)?.try_into().unwrap()))
    };
    let u64_at = |c: &mut usize| -> Result<u64, IndexError> {
        Ok(u64::from_le_bytes(take(c, 8)?.try_into().unwrap()))
    };
    let u32_at = |c: &mut usize| -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(take(c, 4)?.try_into().unwrap()))
    };
    let k1 = f64_at(&mut cursor)?;
    let b = f64_at(&mut cursor)?;
    let avg_doc_len = f64_at(&mut cursor)?;
    let n_docs = u64_at(&mut cursor)? as usize;
    let mut doc_lengths = BTreeMap::new();
    for _ in 0..n_docs {
        let doc = u32_at(&mut cursor)?;
        let len = u32_at(&mut cursor)?;
        doc_lengths.insert(doc, len);
    }
    let n_tokens = u64_at(&mut cursor)? as usize;
    let mut postings = BTreeMap::new();
    let mut idf = BTreeMap::new();
    for _ in 0..n_tokens {
        let token_len = u64_at(&mut cursor)? as usize;
        let token = String::from_utf8(take(&mut cursor, token_len)?.to_vec())
            .map_err(|_| IndexError::Format("bad token utf8".into()))?;
        let token_idf = f64_at(&mut cursor)?;
        let list_len = u64_at(&mut cursor)? as usize;
        let mut list = Vec::with_capacity(list_len);
        for _ in 0..list_len {
            let doc = u32_at(&mut cursor)?;
            let tf = u32_at(&mut cursor)?;
            list.push((doc, tf));
        }
        idf.insert(token.clone(), token_idf);
        postings.insert(token, list);
    }
    Ok(CorpusIndex { postings, doc_lengths, idf, k1, b, avg_doc_len })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(texts: &[&str]) -> Vec<Fact> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Fact::new(NodeId::Sent(i as u32 + 1), *t))
            .collect()
    }

    #[test]
    fn single_document_idf_matches_formula() {
        let index = build_index(&corpus(&["water freezes"])).unwrap();
        let expected = (1.0f64 + (1.0 - 0.5) / (1.0 + 0.5)).ln();
        assert!((index.idf["water"] - expected).abs() < 1e-15);
        assert!((index.idf["freezes"] - expected).abs() < 1e-15);
    }

    #[test]
    fn rebuild_is_byte_identical() {
        let facts = corpus(&["a b c", "b c d", "c d e f", "x y"]);
        let dir = std::env::temp_dir().join("entail-index-test");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("i1.bin");
        let p2 = dir.join("i2.bin");
        save_index(&build_index(&facts).unwrap(), &p1).unwrap();
        save_index(&build_index(&facts).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
        let loaded = load_index(&p1).unwrap();
        assert_eq!(loaded, build_index(&facts).unwrap());
    }

    #[test]
    fn postings_cover_every_corpus_token_exactly_once() {
        let facts = corpus(&["red fox jumps", "fox dens", "red dens appear"]);
        let index = build_index(&facts).unwrap();
        // Exhaustive scan: every (doc, token) occurrence is in exactly one
        // postings list, with the right frequency.
        for fact in &facts {
            let doc = match fact.id {
                NodeId::Sent(k) => k,
                _ => unreachable!(),
            };
            let mut counts: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokenize(&fact.text) {
                *counts.entry(t).or_insert(0) += 1;
            }
            for (token, tf) in counts {
                let list = &index.postings[&token];
                let hits: Vec<_> = list.iter().filter(|(d, _)| *d == doc).collect();
                assert_eq!(hits.len(), 1);
                assert_eq!(hits[0].1, tf);
            }
        }
    }

    #[test]
    fn retrieve_agrees_with_brute_force_scoring() {
        use rand::Rng;
        use rand_chacha::rand_core::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(77);
        let vocabulary = ["sun", "rain", "wind", "rock", "tree", "bird", "fish", "sand"];
        let texts: Vec<String> = (0..200)
            .map(|_| {
                let len = rng.gen_range(3..9);
                (0..len)
                    .map(|_| vocabulary[rng.gen_range(0..vocabulary.len())])
                    .collect::<Vec<_>>()
                    .join(" ")
            })
            .collect();
        let facts: Vec<Fact> = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Fact::new(NodeId::Sent(i as u32 + 1), t.clone()))
            .collect();
        let index = build_index(&facts).unwrap();
        let query = "rain wind bird";
        let query_tokens = tokenize(query);
        // Independent oracle: score every document directly and sort.
        let mut brute: Vec<(u32, f64)> = facts
            .iter()
            .map(|f| {
                let doc = match f.id {
                    NodeId::Sent(k) => k,
                    _ => unreachable!(),
                };
                (doc, index.score_doc(&query_tokens, doc))
            })
            .collect();
        brute.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for k in [1usize, 10, 50] {
            let got = lexical_retrieve(&index, query, k);
            assert_eq!(got.len(), k);
            for (g, want) in got.iter().zip(brute.iter().take(k)) {
                assert_eq!(g.0, want.0);
                assert!((g.1 - want.1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn no_overlap_query_is_deterministic() {
        let facts = corpus(&["a b", "c d", "e f"]);
        let index = build_index(&facts).unwrap();
        let got = lexical_retrieve(&index, "zz qq", 2);
        assert_eq!(got, vec![(1, 0.0), (2, 0.0)]);
    }

    #[test]
    fn adding_a_query_term_occurrence_never_decreases_score() {
        // Fixed length normalization inputs: compare tf and tf+1 directly.
        let facts = corpus(&["p q r", "p p q", "q r s"]);
        let index = build_index(&facts).unwrap();
        for list in index.postings.values() {
            for &(doc, tf) in list {
                let len = index.doc_lengths[&doc] as f64;
                let norm = index.k1 * (1.0 - index.b + index.b * len / index.avg_doc_len);
                let score = |t: f64| t * (index.k1 + 1.0) / (t + norm);
                assert!(score(tf as f64 + 1.0) >= score(tf as f64));
            }
        }
    }

    #[test]
    fn rerank_is_a_subset_and_matches_exhaustive_ordering() {
        let model = {
            let vocab = crate::embed::Vocabulary::build(["sun rain wind rock tree bird"]);
            EmbeddingModel::init(vocab, 6, 5)
        };
        let heads = ControllerHeads::init_random(6, Some(4), 2);
        let candidates = corpus(&["sun rock", "rain tree", "wind bird", "rock bird", "sun rain"]);
        let refined = rerank_refine(&model, &heads, "sun and rain", &candidates, 3, RefineBy::FactScore);
        assert_eq!(refined.len(), 3);
        for f in &refined {
            assert!(candidates.iter().any(|c| c.id == f.id));
        }
        // Exhaustive comparison.
        let h = model.encode("sun and rain").unwrap();
        let mut want: Vec<(f64, NodeId)> = candidates
            .iter()
            .map(|f| {
                let v = model.encode(&f.text).unwrap();
                (-score_fact(&heads, &h, &v).unwrap(), f.id)
            })
            .collect();
        want.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let want_ids: Vec<NodeId> = want.iter().take(3).map(|(_, id)| *id).collect();
        let got_ids: Vec<NodeId> = refined.iter().map(|f| f.id).collect();
        assert_eq!(got_ids, want_ids);

        // Limit beyond the candidate count returns a reordered identity.
        let all = rerank_refine(&model, &heads, "sun and rain", &candidates, 10, RefineBy::FactScore);
        assert_eq!(all.len(), candidates.len());

        // Distance mode also returns a subset of the right size.
        let by_dist = rerank_refine(&model, &heads, "sun and rain", &candidates, 2, RefineBy::Distance);
        assert_eq!(by_dist.len(), 2);
    }
}
