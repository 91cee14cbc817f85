//! Hinge losses shaping the embedding geometry, with analytic gradients.
//!
//! Composition loss: for each triple, the summed premise embeddings should be
//! closer to the conclusion than corrupted sums built by swapping one premise
//! with another batch member's. Mutual loss: co-occurring premises should be
//! closer to each other than to other batch members' premises.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{distance, EmbeddingModel, EncodeError, StepTriple};

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("batch of {0} is too small, need at least 2 triples for in-batch negatives")]
    BatchTooSmall(usize),
    #[error(transparent)]
    Encode(#[from] EncodeError),
}

/// Sparse gradient over embedding-table rows.
#[derive(Debug, Default)]
pub struct TableGrad {
    pub rows: BTreeMap<usize, Vec<f64>>,
}

impl TableGrad {
    /// Distribute `scale * vec` over a sentence's token rows (mean pooling:
    /// each row receives scale/len).
    fn add_sentence(&mut self, tokens: &[usize], scale: f64, vec: &[f64]) {
        let per_token = scale / tokens.len() as f64;
        for &t in tokens {
            let row = self.rows.entry(t).or_insert_with(|| vec![0.0; vec.len()]);
            for (r, v) in row.iter_mut().zip(vec) {
                *r += per_token * v;
            }
        }
    }

    pub fn merge(&mut self, other: TableGrad) {
        for (row, grad) in other.rows {
            match self.rows.get_mut(&row) {
                Some(acc) => {
                    for (a, g) in acc.iter_mut().zip(&grad) {
                        *a += g;
                    }
                }
                None => {
                    self.rows.insert(row, grad);
                }
            }
        }
    }
}

struct EncodedBatch {
    tok_a: Vec<Vec<usize>>,
    tok_b: Vec<Vec<usize>>,
    tok_c: Vec<Vec<usize>>,
    enc_a: Vec<Vec<f64>>,
    enc_b: Vec<Vec<f64>>,
    enc_c: Vec<Vec<f64>>,
}

fn encode_batch(model: &EmbeddingModel, batch: &[StepTriple]) -> Result<EncodedBatch, LossError> {
    if batch.len() < 2 {
        return Err(LossError::BatchTooSmall(batch.len()));
    }
    let mut out = EncodedBatch {
        tok_a: Vec::new(),
        tok_b: Vec::new(),
        tok_c: Vec::new(),
        enc_a: Vec::new(),
        enc_b: Vec::new(),
        enc_c: Vec::new(),
    };
    for triple in batch {
        for (text, toks, encs) in [
            (&triple.premise_a, &mut out.tok_a, &mut out.enc_a),
            (&triple.premise_b, &mut out.tok_b, &mut out.enc_b),
            (&triple.conclusion, &mut out.tok_c, &mut out.enc_c),
        ] {
            let indices = model.vocab.indices(text);
            if indices.is_empty() {
                return Err(LossError::Encode(EncodeError::EmptyText(text.clone())));
            }
            encs.push(model.encode(text)?);
            toks.push(indices);
        }
    }
    Ok(out)
}

fn sub3(a: &[f64], b: &[f64], c: &[f64]) -> Vec<f64> {
    a.iter().zip(b).zip(c).map(|((x, y), z)| x + y - z).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Unit direction, or zero at the (subgradient) kink where the norm is zero.
fn unit(v: &[f64], n: f64) -> Vec<f64> {
    if n > 0.0 {
        v.iter().map(|x| x / n).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// Composition hinge summed over triples and both corruption sides.
pub fn loss_con(
    model: &EmbeddingModel,
    batch: &[StepTriple],
    margin: f64,
) -> Result<f64, LossError> {
    loss_con_grad(model, batch, margin).map(|(l, _)| l)
}

pub fn loss_con_grad(
    model: &EmbeddingModel,
    batch: &[StepTriple],
    margin: f64,
) -> Result<(f64, TableGrad), LossError> {
    let enc = encode_batch(model, batch)?;
    let mut loss = 0.0;
    let mut grad = TableGrad::default();

    for k in 0..batch.len() {
        let pos = sub3(&enc.enc_a[k], &enc.enc_b[k], &enc.enc_c[k]);
        let d_pos = norm(&pos);
        let u_pos = unit(&pos, d_pos);
        for j in 0..batch.len() {
            if j == k {
                continue;
            }
            // Corrupt the first premise with batch member j's.
            let neg_a = sub3(&enc.enc_a[j], &enc.enc_b[k], &enc.enc_c[k]);
            let d_neg_a = norm(&neg_a);
            if d_pos - d_neg_a + margin > 0.0 {
                loss += d_pos - d_neg_a + margin;
                let u_neg = unit(&neg_a, d_neg_a);
                grad.add_sentence(&enc.tok_a[k], 1.0, &u_pos);
                grad.add_sentence(&enc.tok_b[k], 1.0, &u_pos);
                grad.add_sentence(&enc.tok_c[k], -1.0, &u_pos);
                grad.add_sentence(&enc.tok_a[j], -1.0, &u_neg);
                grad.add_sentence(&enc.tok_b[k], -1.0, &u_neg);
                grad.add_sentence(&enc.tok_c[k], 1.0, &u_neg);
            }
            // Corrupt the second premise.
            let neg_b = sub3(&enc.enc_a[k], &enc.enc_b[j], &enc.enc_c[k]);
            let d_neg_b = norm(&neg_b);
            if d_pos - d_neg_b + margin > 0.0 {
                loss += d_pos - d_neg_b + margin;
                let u_neg = unit(&neg_b, d_neg_b);
                grad.add_sentence(&enc.tok_a[k], 1.0, &u_pos);
                grad.add_sentence(&enc.tok_b[k], 1.0, &u_pos);
                grad.add_sentence(&enc.tok_c[k], -1.0, &u_pos);
                grad.add_sentence(&enc.tok_a[k], -1.0, &u_neg);
                grad.add_sentence(&enc.tok_b[j], -1.0, &u_neg);
                grad.add_sentence(&enc.tok_c[k], 1.0, &u_neg);
            }
        }
    }
    Ok((loss, grad))
}

/// Mutual-premise hinge: premises of the same triple pulled together against
/// in-batch second premises.
pub fn loss_mut(
    model: &EmbeddingModel,
    batch: &[StepTriple],
    margin: f64,
) -> Result<f64, LossError> {
    loss_mut_grad(model, batch, margin).map(|(l, _)| l)
}

pub fn loss_mut_grad(
    model: &EmbeddingModel,
    batch: &[StepTriple],
    margin: f64,
) -> Result<(f64, TableGrad), LossError> {
    let enc = encode_batch(model, batch)?;
    let mut loss = 0.0;
    let mut grad = TableGrad::default();

    for k in 0..batch.len() {
        let pos: Vec<f64> = enc.enc_a[k]
            .iter()
            .zip(&enc.enc_b[k])
            .map(|(a, b)| a - b)
            .collect();
        let d_pos = norm(&pos);
        let u_pos = unit(&pos, d_pos);
        for j in 0..batch.len() {
            if j == k {
                continue;
            }
            let neg: Vec<f64> = enc.enc_a[k]
                .iter()
                .zip(&enc.enc_b[j])
                .map(|(a, b)| a - b)
                .collect();
            let d_neg = norm(&neg);
            if d_pos - d_neg + margin > 0.0 {
                loss += d_pos - d_neg + margin;
                let u_neg = unit(&neg, d_neg);
                grad.add_sentence(&enc.tok_a[k], 1.0, &u_pos);
                grad.add_sentence(&enc.tok_b[k], -1.0, &u_pos);
                grad.add_sentence(&enc.tok_a[k], -1.0, &u_neg);
                grad.add_sentence(&enc.tok_b[j], 1.0, &u_neg);
            }
        }
    }
    Ok((loss, grad))
}

/// Combined objective: composition plus mutual hinge.
pub fn loss_cor(
    model: &EmbeddingModel,
    batch: &[StepTriple],
    margin_con: f64,
    margin_mut: f64,
) -> Result<f64, LossError> {
    Ok(loss_con(model, batch, margin_con)? + loss_mut(model, batch, margin_mut)?)
}

pub(crate) fn loss_cor_grad(
    model: &EmbeddingModel,
    batch: &[StepTriple],
    margin_con: f64,
    margin_mut: f64,
) -> Result<(f64, TableGrad), LossError> {
    let (lc, mut gc) = loss_con_grad(model, batch, margin_con)?;
    let (lm, gm) = loss_mut_grad(model, batch, margin_mut)?;
    gc.merge(gm);
    Ok((lc + lm, gc))
}

/// Fraction of probe triples whose true composition is closer to the
/// conclusion than a corrupted one (one premise swapped with the i+1-th
/// probe's, each side probed once).
pub fn margin_accuracy(model: &EmbeddingModel, probes: &[StepTriple]) -> Result<f64, LossError> {
    if probes.len() < 2 {
        return Err(LossError::BatchTooSmall(probes.len()));
    }
    let mut hits = 0usize;
    let mut total = 0usize;
    for (k, triple) in probes.iter().enumerate() {
        let other = &probes[(k + 1) % probes.len()];
        let a = model.encode(&triple.premise_a)?;
        let b = model.encode(&triple.premise_b)?;
        let c = model.encode(&triple.conclusion)?;
        let pos = distance(&super::vec_add(&a, &b), &c)?;
        for corrupted in [&other.premise_a, &other.premise_b] {
            let x = model.encode(corrupted)?;
            let neg_a = distance(&super::vec_add(&x, &b), &c)?;
            let neg_b = distance(&super::vec_add(&a, &x), &c)?;
            if pos < neg_a {
                hits += 1;
            }
            if pos < neg_b {
                hits += 1;
            }
            total += 2;
        }
    }
    Ok(hits as f64 / total as f64)
}
