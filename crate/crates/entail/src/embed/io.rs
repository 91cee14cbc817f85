//! Checkpoint and export formats for embedding models.
//!
//! Checkpoints are versioned text: a header, the vocabulary section in index
//! order, then the table rows. Floats use the shortest round-trip decimal
//! form, so save/load reproduces the model bit for bit.

use std::fs;
use std::io::Write;
use std::path::Path;

use thiserror::Error;

use super::{EmbeddingModel, Vocabulary, UNK_TOKEN};
use crate::tree::Fact;

const MAGIC: &str = "entail-encoder v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad checkpoint at line {line}: {message}")]
    Format { line: usize, message: String },
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io { path: path.display().to_string(), source }
}

pub fn save_model(model: &EmbeddingModel, path: &Path) -> Result<(), CheckpointError> {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("dim {} vocab {}\n", model.dim, model.vocab.size()));

    let mut tokens: Vec<(usize, &str)> = vec![(0, UNK_TOKEN)];
    tokens.extend(model.vocab.entries().map(|(t, i)| (i, t)));
    tokens.sort_by_key(|(i, _)| *i);
    for (index, token) in &tokens {
        let row = model
            .row(*index)
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\t");
        out.push_str(&format!("{token}\t{row}\n"));
    }
    let mut file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    file.write_all(out.as_bytes()).map_err(|e| io_err(path, e))
}

pub fn load_model(path: &Path) -> Result<EmbeddingModel, CheckpointError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = content.lines().enumerate();

    let (_, magic) = lines.next().ok_or(CheckpointError::Format {
        line: 1,
        message: "empty file".into(),
    })?;
    if magic != MAGIC {
        return Err(CheckpointError::Format {
            line: 1,
            message: format!("expected {MAGIC:?}, found {magic:?}"),
        });
    }
    let (_, header) = lines.next().ok_or(CheckpointError::Format {
        line: 2,
        message: "missing header".into(),
    })?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    let bad_header = || CheckpointError::Format { line: 2, message: format!("bad header {header:?}") };
    if parts.len() != 4 || parts[0] != "dim" || parts[2] != "vocab" {
        return Err(bad_header());
    }
    let dim: usize = parts[1].parse().map_err(|_| bad_header())?;
    let size: usize = parts[3].parse().map_err(|_| bad_header())?;

    let mut tokens = Vec::with_capacity(size.saturating_sub(1));
    let mut table = Vec::with_capacity(size * dim);
    for (lineno, line) in lines {
        let mut fields = line.split('\t');
        let token = fields.next().ok_or(CheckpointError::Format {
            line: lineno + 1,
            message: "missing token".into(),
        })?;
        let index = table.len() / dim;
        if token != UNK_TOKEN {
            tokens.push((token.to_string(), index));
        } else if index != 0 {
            return Err(CheckpointError::Format {
                line: lineno + 1,
                message: "unk row must come first".into(),
            });
        }
        let mut count = 0usize;
        for field in fields {
            let value: f64 = field.parse().map_err(|_| CheckpointError::Format {
                line: lineno + 1,
                message: format!("bad float {field:?}"),
            })?;
            table.push(value);
            count += 1;
        }
        if count != dim {
            return Err(CheckpointError::Format {
                line: lineno + 1,
                message: format!("row has {count} values, expected {dim}"),
            });
        }
    }
    if table.len() != size * dim {
        return Err(CheckpointError::Format {
            line: 0,
            message: format!("expected {size} rows, found {}", table.len() / dim),
        });
    }
    Ok(EmbeddingModel { vocab: Vocabulary::from_tokens(tokens), dim, table })
}

/// Write a TSV of per-fact embeddings: `id<TAB>text<TAB>v1..vd`, one header
/// line, one row per fact.
pub fn export_embeddings(
    model: &EmbeddingModel,
    facts: &[Fact],
    path: &Path,
) -> Result<(), CheckpointError> {
    let mut out = String::from("id\ttext");
    for c in 0..model.dim {
        out.push_str(&format!("\tv{c}"));
    }
    out.push('\n');
    for fact in facts {
        let vector = model.encode(&fact.text).map_err(|e| CheckpointError::Format {
            line: 0,
            message: e.to_string(),
        })?;
        out.push_str(&fact.id.to_string());
        out.push('\t');
        out.push_str(&fact.text);
        for v in vector {
            out.push('\t');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::{train_encoder, EncoderTrainConfig, StepTriple};
    use super::*;
    use crate::tree::NodeId;

    fn trained() -> EmbeddingModel {
        let triples = vec![
            StepTriple::new("a frog is green", "green is a color", "a frog has a color"),
            StepTriple::new("iron is a metal", "metals are hard", "iron is hard"),
            StepTriple::new("rain is water", "water is wet", "rain is wet"),
        ];
        let config = EncoderTrainConfig { dim: 4, epochs: 3, batch_size: 3, ..Default::default() };
        train_encoder(&triples, &config).unwrap()
    }

    #[test]
    fn checkpoint_round_trips_bit_identically() {
        let model = trained();
        let dir = std::env::temp_dir().join("entail-embed-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);
        // Saving what we loaded yields the same bytes.
        let path2 = dir.join("model2.ckpt");
        save_model(&loaded, &path2).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&path2).unwrap());
    }

    #[test]
    fn export_header_only_for_empty_fact_list() {
        let model = trained();
        let dir = std::env::temp_dir().join("entail-embed-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.tsv");
        export_embeddings(&model, &[], &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert_eq!(content.lines().count(), 1);
        assert!(content.starts_with("id\ttext\tv0"));
    }

    #[test]
    fn export_rows_reproduce_encode_exactly() {
        let model = trained();
        let facts = vec![
            Fact::new(NodeId::Sent(1), "iron is a metal"),
            Fact::new(NodeId::Sent(2), "rain is water"),
            Fact::new(NodeId::Sent(3), "metals are hard"),
        ];
        let dir = std::env::temp_dir().join("entail-embed-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("facts.tsv");
        export_embeddings(&model, &facts, &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        let rows: Vec<&str> = content.lines().skip(1).collect();
        assert_eq!(rows.len(), 3);
        for (row, fact) in rows.iter().zip(&facts) {
            let fields: Vec<&str> = row.split('\t').collect();
            assert_eq!(fields[0], fact.id.to_string());
            assert_eq!(fields[1], fact.text);
            let parsed: Vec<f64> = fields[2..].iter().map(|f| f.parse().unwrap()).collect();
            assert_eq!(parsed, model.encode(&fact.text).unwrap());
        }
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let dir = std::env::temp_dir().join("entail-embed-io-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.ckpt");
        std::fs::write(&path, "not a checkpoint\n").unwrap();
        assert!(matches!(load_model(&path), Err(CheckpointError::Format { line: 1, .. })));
    }
}
