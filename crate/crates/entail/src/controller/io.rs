//! Versioned checkpoint for the controller heads, carrying a checksum of the
//! encoder it was trained against.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::util::fnv1a64;

use super::{ControllerHeads, Hidden, ScorerHead};

const MAGIC: &str = "entail-heads v1";

#[derive(Debug, Error)]
pub enum HeadsCheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("bad heads checkpoint: {0}")]
    Format(String),
    #[error("heads were trained against encoder {expected:016x}, got {got:016x}")]
    EncoderMismatch { expected: u64, got: u64 },
}

fn io_err(path: &Path, source: std::io::Error) -> HeadsCheckpointError {
    HeadsCheckpointError::Io { path: path.display().to_string(), source }
}

fn write_head(out: &mut String, name: &str, head: &ScorerHead) {
    let hidden_dim = head.hidden.as_ref().map_or(0, |h| h.dim);
    out.push_str(&format!("head {name} input {} hidden {hidden_dim}\n", head.input_dim));
    let params: Vec<String> = (0..head.param_count())
        .map(|i| head.param(i).to_string())
        .collect();
    out.push_str(&params.join("\t"));
    out.push('\n');
}

/// Save heads, recording the checksum of the encoder checkpoint file they
/// belong with.
pub fn save_heads(
    heads: &ControllerHeads,
    encoder_path: &Path,
    path: &Path,
) -> Result<(), HeadsCheckpointError> {
    let encoder_bytes = fs::read(encoder_path).map_err(|e| io_err(encoder_path, e))?;
    let checksum = fnv1a64(&encoder_bytes);
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("dim {} encoder-checksum {checksum:016x}\n", heads.dim));
    write_head(&mut out, "fact", &heads.fact);
    write_head(&mut out, "step", &heads.step);
    write_head(&mut out, "abduce", &heads.abduce);
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Load heads, verifying they match the encoder checkpoint at `encoder_path`.
pub fn load_heads(
    path: &Path,
    encoder_path: &Path,
) -> Result<ControllerHeads, HeadsCheckpointError> {
    let content = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = content.lines();
    if lines.next() != Some(MAGIC) {
        return Err(HeadsCheckpointError::Format("bad magic line".into()));
    }
    let header = lines
        .next()
        .ok_or_else(|| HeadsCheckpointError::Format("missing header".into()))?;
    let parts: Vec<&str> = header.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "dim" || parts[2] != "encoder-checksum" {
        return Err(HeadsCheckpointError::Format(format!("bad header {header:?}")));
    }
    let dim: usize = parts[1]
        .parse()
        .map_err(|_| HeadsCheckpointError::Format("bad dim".into()))?;
    let expected = u64::from_str_radix(parts[3], 16)
        .map_err(|_| HeadsCheckpointError::Format("bad checksum".into()))?;

    let encoder_bytes = fs::read(encoder_path).map_err(|e| io_err(encoder_path, e))?;
    let got = fnv1a64(&encoder_bytes);
    if got != expected {
        return Err(HeadsCheckpointError::EncoderMismatch { expected, got });
    }

    let mut read_head = |name: &str| -> Result<ScorerHead, HeadsCheckpointError> {
        let meta = lines
            .next()
            .ok_or_else(|| HeadsCheckpointError::Format(format!("missing {name} head")))?;
        let parts: Vec<&str> = meta.split_whitespace().collect();
        if parts.len() != 6 || parts[0] != "head" || parts[1] != name {
            return Err(HeadsCheckpointError::Format(format!("bad head line {meta:?}")));
        }
        let input_dim: usize = parts[3]
            .parse()
            .map_err(|_| HeadsCheckpointError::Format("bad input dim".into()))?;
        let hidden_dim: usize = parts[5]
            .parse()
            .map_err(|_| HeadsCheckpointError::Format("bad hidden dim".into()))?;
        let values_line = lines
            .next()
            .ok_or_else(|| HeadsCheckpointError::Format(format!("missing {name} params")))?;
        let values: Result<Vec<f64>, _> =
            values_line.split('\t').map(|v| v.parse::<f64>()).collect();
        let values =
            values.map_err(|_| HeadsCheckpointError::Format(format!("bad {name} params")))?;
        let mut head = ScorerHead::zeros(
            input_dim,
            if hidden_dim == 0 { None } else { Some(hidden_dim) },
        );
        if values.len() != head.param_count() {
            return Err(HeadsCheckpointError::Format(format!(
                "{name} head has {} params, expected {}",
                values.len(),
                head.param_count()
            )));
        }
        for (i, v) in values.into_iter().enumerate() {
            *head.param_mut(i) = v;
        }
        Ok(head)
    };

    Ok(ControllerHeads {
        dim,
        fact: read_head("fact")?,
        step: read_head("step")?,
        abduce: read_head("abduce")?,
    })
}

// Re-exported so checkpoint loading can construct hidden layers.
impl Hidden {
    pub fn zeros(dim: usize, input_dim: usize) -> Self {
        Hidden { dim, w: vec![0.0; dim * input_dim], b: vec![0.0; dim] }
    }
}
