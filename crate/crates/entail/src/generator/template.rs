//! Rule-based generation. Substitution rules fire on recognizable premise
//! shapes; when nothing fires, deduction falls back to the conjunction of
//! the premises, so the backend is total on well-formed input.

use crate::tree::normalize_text;

use super::GenRequest;

#[derive(Debug, Clone, Default)]
pub struct TemplateGenerator {}

impl TemplateGenerator {
    pub fn generate(&self, request: &GenRequest) -> String {
        match request {
            GenRequest::Deduce { premise_a, premise_b } => {
                let a = normalize_text(premise_a);
                let b = normalize_text(premise_b);
                self.deduce(&a, &b)
                    .or_else(|| self.deduce(&b, &a))
                    .unwrap_or_else(|| format!("{a} and {b}"))
            }
            GenRequest::Abduce { conclusion, known_premise } => {
                let c = normalize_text(conclusion);
                let k = normalize_text(known_premise);
                self.abduce(&c, &k).unwrap_or_else(|| subtract_tokens(&c, &k))
            }
        }
    }

    /// Taxonomy substitution: "X is a kind of Y" + a premise about Y yields
    /// the same statement about X. Likewise causal chaining:
    /// "X causes Y" + "Y causes Z" -> "X causes Z".
    fn deduce(&self, a: &str, b: &str) -> Option<String> {
        if let Some((x, y)) = split_once_phrase(a, " is a kind of ") {
            if let Some(rest) = b.strip_prefix(&format!("{y} ")) {
                return Some(format!("{x} {rest}"));
            }
        }
        if let Some((x, y)) = split_once_phrase(a, " causes ") {
            if let Some((y2, z)) = split_once_phrase(b, " causes ") {
                if y == y2 {
                    return Some(format!("{x} causes {z}"));
                }
            }
        }
        if let Some((x, y)) = split_once_phrase(a, " is part of ") {
            if let Some((y2, z)) = split_once_phrase(b, " is part of ") {
                if y == y2 {
                    return Some(format!("{x} is part of {z}"));
                }
            }
        }
        None
    }

    /// Invert the conjunction fallback when possible: if the conclusion is
    /// "<known> and <rest>", the missing premise is "<rest>".
    fn abduce(&self, conclusion: &str, known: &str) -> Option<String> {
        if let Some(rest) = conclusion.strip_prefix(&format!("{known} and ")) {
            return Some(rest.to_string());
        }
        if let Some(rest) = conclusion.strip_suffix(&format!(" and {known}")) {
            return Some(rest.to_string());
        }
        None
    }
}

fn split_once_phrase<'a>(s: &'a str, phrase: &str) -> Option<(&'a str, &'a str)> {
    s.split_once(phrase).filter(|(l, r)| !l.is_empty() && !r.is_empty())
}

/// Abduction fallback: the conclusion's tokens with the known premise's
/// tokens removed (one occurrence each). Mirrors the sum-composition
/// geometry, where the missing premise is the conclusion minus the known
/// part; falls back to the conclusion itself when nothing remains.
fn subtract_tokens(conclusion: &str, known: &str) -> String {
    let mut budget: std::collections::BTreeMap<&str, usize> = std::collections::BTreeMap::new();
    for t in known.split_whitespace() {
        *budget.entry(t).or_insert(0) += 1;
    }
    let rest: Vec<&str> = conclusion
        .split_whitespace()
        .filter(|t| match budget.get_mut(*t) {
            Some(n) if *n > 0 => {
                *n -= 1;
                false
            }
            _ => true,
        })
        .collect();
    if rest.is_empty() {
        conclusion.to_string()
    } else {
        rest.join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deduce(a: &str, b: &str) -> String {
        TemplateGenerator::default().generate(&GenRequest::Deduce {
            premise_a: a.into(),
            premise_b: b.into(),
        })
    }

    #[test]
    fn fallback_is_the_conjunction() {
        assert_eq!(
            deduce("an apple is a fruit", "fruit contains seeds"),
            "an apple is a fruit and fruit contains seeds"
        );
    }

    #[test]
    fn taxonomy_rule_substitutes_the_subject() {
        assert_eq!(
            deduce("an apple is a kind of fruit", "fruit contains seeds"),
            "an apple contains seeds"
        );
        // Order of premises does not matter.
        assert_eq!(
            deduce("fruit contains seeds", "an apple is a kind of fruit"),
            "an apple contains seeds"
        );
    }

    #[test]
    fn causal_rule_chains() {
        assert_eq!(deduce("rain causes puddles", "puddles cause nothing"),
            "rain causes puddles and puddles cause nothing");
        assert_eq!(deduce("rain causes puddles", "puddles causes mud"), "rain causes mud");
    }

    #[test]
    fn generation_is_deterministic() {
        for _ in 0..3 {
            assert_eq!(deduce("a b", "c d"), "a b and c d");
        }
    }

    #[test]
    fn abduction_inverts_the_conjunction() {
        let gen = TemplateGenerator::default();
        let out = gen.generate(&GenRequest::Abduce {
            conclusion: "x holds and y holds".into(),
            known_premise: "x holds".into(),
        });
        assert_eq!(out, "y holds");
        let out = gen.generate(&GenRequest::Abduce {
            conclusion: "x holds and y holds".into(),
            known_premise: "y holds".into(),
        });
        assert_eq!(out, "x holds");
        let out = gen.generate(&GenRequest::Abduce {
            conclusion: "water makes rocks split".into(),
            known_premise: "water expands when frozen and makes things split".into(),
        });
        assert_eq!(out, "rocks");
        // Nothing left after subtraction: the conclusion stands in.
        let out = gen.generate(&GenRequest::Abduce {
            conclusion: "water".into(),
            known_premise: "water water".into(),
        });
        assert_eq!(out, "water");
    }
}
