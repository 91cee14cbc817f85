//! Parser for the linearized proof notation.
//!
//! Grammar:
//!
//! ```text
//! proof   := step (";" step)*
//! step    := id_list "->" conclusion
//! id_list := id ("&" id)*
//! conclusion := "hypothesis" | int_id ":" text
//! ```
//!
//! `id` is `sent<k>` or `int<k>`. A trailing ";" is tolerated because the
//! dataset contains it. Intermediate texts are whitespace-normalized.
//! The context map supplies leaf texts and may carry a `Hypothesis` entry
//! for the root text.

use std::collections::BTreeMap;

use thiserror::Error;

use super::{
    normalize_text, EntailmentTree, Fact, NodeId, Step, ValidationMode, Violation,
};

#[derive(Debug, Error, PartialEq)]
pub enum ParseError {
    #[error("syntax error at byte {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("id {id} at byte {pos} is not in the context")]
    UnknownId { pos: usize, id: String },
    #[error("proof parsed but failed validation: {0:?}")]
    Validation(Vec<Violation>),
}

/// Parse a linearized proof against a context of node texts, validating the
/// result in `Lenient` mode (n-ary steps and premise reuse accepted).
pub fn parse_proof(
    text: &str,
    context: &BTreeMap<NodeId, String>,
) -> Result<EntailmentTree, ParseError> {
    parse_proof_mode(text, context, ValidationMode::Lenient)
}

/// Parse with an explicit validation mode. `Strict` additionally rejects
/// non-binary steps and premise reuse.
pub fn parse_proof_mode(
    text: &str,
    context: &BTreeMap<NodeId, String>,
    mode: ValidationMode,
) -> Result<EntailmentTree, ParseError> {
    let mut steps: Vec<Step> = Vec::new();
    let mut intermediates: BTreeMap<NodeId, String> = BTreeMap::new();

    for (seg_start, segment) in split_with_offsets(text, ';') {
        if segment.trim().is_empty() {
            // A trailing separator leaves one empty final segment.
            if seg_start + segment.len() >= text.len() {
                continue;
            }
            return Err(ParseError::Syntax {
                pos: seg_start,
                message: "empty step".into(),
            });
        }
        let (step, conclusion_text) = parse_step(segment, seg_start)?;
        if let Some(txt) = conclusion_text {
            intermediates.insert(step.conclusion, txt);
        }
        steps.push(step);
    }

    if steps.is_empty() {
        return Err(ParseError::Syntax { pos: 0, message: "no steps".into() });
    }

    // Collect referenced sentence ids and resolve their texts.
    let mut leaves: Vec<Fact> = Vec::new();
    for step in &steps {
        for &p in &step.premises {
            if p.is_sent() && !leaves.iter().any(|f| f.id == p) {
                let text = context.get(&p).ok_or_else(|| ParseError::UnknownId {
                    pos: 0,
                    id: p.to_string(),
                })?;
                leaves.push(Fact::new(p, normalize_text(text)));
            }
        }
    }
    leaves.sort_by_key(|f| f.id);

    let hypothesis = context
        .get(&NodeId::Hypothesis)
        .map(|t| normalize_text(t))
        .unwrap_or_default();

    let tree = EntailmentTree { hypothesis, leaves, intermediates, steps };

    let violations: Vec<Violation> = tree
        .validate(mode)
        .into_iter()
        .filter(|v| match mode {
            ValidationMode::Strict => true,
            // Lenient parse still rejects structural breakage but accepts
            // the irregular shapes gold data contains.
            ValidationMode::Lenient => !matches!(
                v,
                Violation::NonBinaryStep(_, _) | Violation::PremiseReuse(_)
            ),
        })
        .collect();
    if !violations.is_empty() {
        return Err(ParseError::Validation(violations));
    }
    Ok(tree)
}

fn parse_step(segment: &str, seg_start: usize) -> Result<(Step, Option<String>), ParseError> {
    let arrow = segment.find("->").ok_or_else(|| ParseError::Syntax {
        pos: seg_start,
        message: "step has no '->'".into(),
    })?;
    let (lhs, rhs_with_arrow) = segment.split_at(arrow);
    let rhs = &rhs_with_arrow[2..];

    let mut premises = Vec::new();
    for (off, part) in split_with_offsets(lhs, '&') {
        let trimmed = part.trim();
        if trimmed.is_empty() {
            return Err(ParseError::Syntax {
                pos: seg_start + off,
                message: "empty premise id".into(),
            });
        }
        let id: NodeId = trimmed.parse().map_err(|_| ParseError::Syntax {
            pos: seg_start + off + leading_ws(part),
            message: format!("bad premise id {trimmed:?}"),
        })?;
        if id == NodeId::Hypothesis {
            return Err(ParseError::Syntax {
                pos: seg_start + off + leading_ws(part),
                message: "hypothesis cannot be a premise".into(),
            });
        }
        premises.push(id);
    }
    if premises.is_empty() {
        return Err(ParseError::Syntax {
            pos: seg_start,
            message: "step has no premises".into(),
        });
    }

    let rhs_trim = rhs.trim();
    let rhs_pos = seg_start + arrow + 2 + leading_ws(rhs);
    if rhs_trim == "hypothesis" {
        return Ok((Step::new(premises, NodeId::Hypothesis), None));
    }
    let colon = rhs_trim.find(':').ok_or_else(|| ParseError::Syntax {
        pos: rhs_pos,
        message: "conclusion must be 'hypothesis' or 'int<k>: text'".into(),
    })?;
    let (id_part, text_part) = rhs_trim.split_at(colon);
    let id: NodeId = id_part.trim().parse().map_err(|_| ParseError::Syntax {
        pos: rhs_pos,
        message: format!("bad conclusion id {:?}", id_part.trim()),
    })?;
    if !id.is_int() {
        return Err(ParseError::Syntax {
            pos: rhs_pos,
            message: "conclusion id must be an intermediate".into(),
        });
    }
    let text = normalize_text(&text_part[1..]);
    if text.is_empty() {
        return Err(ParseError::Syntax {
            pos: rhs_pos,
            message: "intermediate has empty text".into(),
        });
    }
    Ok((Step::new(premises, id), Some(text)))
}

fn split_with_offsets(s: &str, sep: char) -> impl Iterator<Item = (usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0usize;
    for (i, c) in s.char_indices() {
        if c == sep {
            out.push((start, &s[start..i]));
            start = i + c.len_utf8();
        }
    }
    out.push((start, &s[start..]));
    out.into_iter()
}

fn leading_ws(s: &str) -> usize {
    s.len() - s.trim_start().len()
}
