//! Tolerant parsing of model answers into structured verdicts.
//!
//! Answers are expected to follow the prompt's answer format (Conclusion /
//! Explanation / Observed Pattern lines) but rarely do so exactly. The parser
//! is a line scanner that forgives markdown wrappers, alternate field labels,
//! casing, and punctuation. It is total: any input string yields either a
//! `Verdict` or a descriptive error, never a panic.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::typology::PatternKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conclusion {
    Suspicious,
    NotSuspicious,
}

impl Conclusion {
    pub fn is_suspicious(&self) -> bool {
        matches!(self, Conclusion::Suspicious)
    }
}

impl std::fmt::Display for Conclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Conclusion::Suspicious => "Suspicious",
            Conclusion::NotSuspicious => "Not Suspicious",
        })
    }
}

/// A pattern name after normalization. Names that match no known kind are
/// kept verbatim (lowercased): they signal the model naming shapes that do
/// not exist, which the evaluation reports as hallucinated mentions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormalizedPattern {
    Known(PatternKind),
    Unrecognized(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub conclusion: Conclusion,
    pub explanation: Option<String>,
    /// Deduplicated pattern mentions in answer order. Placeholder mentions
    /// ("None", "n/a") are dropped rather than kept as entries.
    pub patterns: Vec<NormalizedPattern>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum VerdictError {
    #[error("no conclusion line found in the answer")]
    MissingConclusion,
    #[error("conclusion {0:?} resolves to neither suspicious nor not suspicious")]
    UnclearConclusion(String),
}

/// Lowercases and maps every non-alphanumeric run to a single space, so
/// "Fan-Out.", "fan_out" and "FAN OUT" all normalize alike.
fn clean(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.extend(ch.to_lowercase());
        } else {
            pending_space = true;
        }
    }
    out
}

/// Maps one pattern token to its kind. Accepts the canonical names, spacing
/// and hyphenation variants, and a few common paraphrases. "None"-like
/// placeholders map to `Known(PatternKind::None)`.
pub fn normalize_pattern_name(raw: &str) -> NormalizedPattern {
    let cleaned = clean(raw);
    let kind = match cleaned.as_str() {
        "fan out" | "fanout" => PatternKind::FanOut,
        "fan in" | "fanin" => PatternKind::FanIn,
        "gather scatter" | "gatherscatter" => PatternKind::GatherScatter,
        "scatter gather" | "scattergather" => PatternKind::ScatterGather,
        "simple cycle" | "simple cycles" | "cycle" | "cycles" | "cyclic" => {
            PatternKind::SimpleCycle
        }
        "random" => PatternKind::Random,
        "bipartite" => PatternKind::Bipartite,
        "stack" | "stacks" | "stacked" | "layering stack" => PatternKind::Stack,
        "none" | "n a" | "na" | "no pattern" | "no patterns" | "e g" | "eg" | "" => {
            PatternKind::None
        }
        _ => return NormalizedPattern::Unrecognized(cleaned),
    };
    NormalizedPattern::Known(kind)
}

fn parse_conclusion_value(raw: &str) -> Result<Conclusion, VerdictError> {
    let cleaned = clean(raw);
    let has_negated = cleaned.contains("not suspicious");
    let has_plain = cleaned.replace("not suspicious", "").contains("suspicious");
    match (has_negated, has_plain) {
        (true, false) => Ok(Conclusion::NotSuspicious),
        (false, true) => Ok(Conclusion::Suspicious),
        _ => Err(VerdictError::UnclearConclusion(raw.trim().to_string())),
    }
}

#[derive(PartialEq)]
enum Field {
    Conclusion,
    Explanation,
    Patterns,
}

/// Splits a line into a recognized field and its inline value, if the part
/// before the first colon is a known label under any styling.
fn field_of(line: &str) -> Option<(Field, &str)> {
    let bare = line.trim_start_matches(['-', '*', '•', ' ', '\t']);
    let (label, value) = bare.split_once(':')?;
    let label = clean(label);
    let label = label.strip_suffix(" s").unwrap_or(&label);
    let field = match label.trim_end_matches('s') {
        "conclusion" | "prediction" => Field::Conclusion,
        "explanation" | "reasoning" => Field::Explanation,
        "observed pattern" | "pattern" => Field::Patterns,
        _ => return None,
    };
    Some((field, value.trim().trim_matches('*').trim()))
}

fn parse_pattern_list(value: &str) -> Vec<NormalizedPattern> {
    let mut out: Vec<NormalizedPattern> = Vec::new();
    for chunk in value.split([',', ';']) {
        for token in chunk.to_lowercase().split(" and ") {
            match normalize_pattern_name(token) {
                NormalizedPattern::Known(PatternKind::None) => {}
                p => {
                    if !out.contains(&p) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Parses a model answer. The first resolvable conclusion line wins; lines
/// after an `Explanation:` label accumulate into the explanation until the
/// next recognized field. A bare "Suspicious" / "Not Suspicious" line counts
/// as a conclusion only when no labeled one exists.
pub fn parse_verdict(text: &str) -> Result<Verdict, VerdictError> {
    let mut conclusion: Option<Conclusion> = None;
    let mut first_unclear: Option<VerdictError> = None;
    let mut explanation_lines: Vec<String> = Vec::new();
    let mut patterns: Vec<NormalizedPattern> = Vec::new();
    let mut in_explanation = false;

    for line in text.lines() {
        match field_of(line) {
            Some((Field::Conclusion, value)) => {
                in_explanation = false;
                if conclusion.is_none() {
                    match parse_conclusion_value(value) {
                        Ok(c) => conclusion = Some(c),
                        Err(e) => {
                            first_unclear.get_or_insert(e);
                        }
                    }
                }
            }
            Some((Field::Explanation, value)) => {
                in_explanation = true;
                if !value.is_empty() {
                    explanation_lines.push(value.to_string());
                }
            }
            Some((Field::Patterns, value)) => {
                in_explanation = false;
                for p in parse_pattern_list(value) {
                    if !patterns.contains(&p) {
                        patterns.push(p);
                    }
                }
            }
            None => {
                let trimmed = line.trim().trim_matches('*').trim();
                if in_explanation && !trimmed.is_empty() {
                    explanation_lines.push(trimmed.to_string());
                }
            }
        }
    }

    if conclusion.is_none() {
        // Fallback: an unlabeled line that is nothing but a conclusion.
        for line in text.lines() {
            let cleaned = clean(line.trim().trim_matches('*'));
            if cleaned == "suspicious" {
                conclusion = Some(Conclusion::Suspicious);
                break;
            }
            if cleaned == "not suspicious" {
                conclusion = Some(Conclusion::NotSuspicious);
                break;
            }
        }
    }

    let conclusion = match conclusion {
        Some(c) => c,
        Option::None => return Err(first_unclear.unwrap_or(VerdictError::MissingConclusion)),
    };
    let explanation = if explanation_lines.is_empty() {
        Option::None
    } else {
        Some(explanation_lines.join(" "))
    };
    Ok(Verdict { conclusion, explanation, patterns })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_answer_format_verbatim() {
        let v = parse_verdict(
            "- Conclusion: Suspicious\n\
             - Explanation: Funds converge and disperse quickly.\n\
             - Observed Pattern: gather-scatter\n",
        )
        .unwrap();
        assert_eq!(v.conclusion, Conclusion::Suspicious);
        assert_eq!(v.explanation.as_deref(), Some("Funds converge and disperse quickly."));
        assert_eq!(v.patterns, vec![NormalizedPattern::Known(PatternKind::GatherScatter)]);
    }

    #[test]
    fn parses_not_suspicious_with_none_pattern() {
        let v = parse_verdict(
            "Conclusion: Not Suspicious\n\
             Explanation: Regular schedule.\n\
             Observed Pattern: None\n",
        )
        .unwrap();
        assert_eq!(v.conclusion, Conclusion::NotSuspicious);
        assert!(v.patterns.is_empty());
    }

    #[test]
    fn tolerates_markdown_and_label_variants() {
        let v = parse_verdict(
            "**Prediction:** *Suspicious.*\n\
             * **Reasoning**: looks layered: classic burst.\n\
             - **Observed Patterns:** Fan-Out and Simple_Cycle.\n",
        )
        .unwrap();
        assert_eq!(v.conclusion, Conclusion::Suspicious);
        assert_eq!(
            v.patterns,
            vec![
                NormalizedPattern::Known(PatternKind::FanOut),
                NormalizedPattern::Known(PatternKind::SimpleCycle),
            ]
        );
        assert_eq!(v.explanation.as_deref(), Some("looks layered: classic burst."));
    }

    #[test]
    fn explanation_spans_lines_until_next_field() {
        let v = parse_verdict(
            "Conclusion: Suspicious\n\
             Explanation: Many sources pay one account\n\
             which then empties out within hours.\n\
             \n\
             Observed Pattern: fan-in\n",
        )
        .unwrap();
        assert_eq!(
            v.explanation.as_deref(),
            Some("Many sources pay one account which then empties out within hours.")
        );
        assert_eq!(v.patterns, vec![NormalizedPattern::Known(PatternKind::FanIn)]);
    }

    #[test]
    fn synonym_and_spacing_normalization() {
        for (raw, kind) in [
            ("cycle", PatternKind::SimpleCycle),
            ("Cycles", PatternKind::SimpleCycle),
            ("scatter_gather", PatternKind::ScatterGather),
            ("Gather-Scatter", PatternKind::GatherScatter),
            ("stacked", PatternKind::Stack),
            ("layering stack", PatternKind::Stack),
            ("FAN OUT", PatternKind::FanOut),
            ("bipartite", PatternKind::Bipartite),
            ("random", PatternKind::Random),
        ] {
            assert_eq!(
                normalize_pattern_name(raw),
                NormalizedPattern::Known(kind),
                "{raw}"
            );
        }
    }

    #[test]
    fn unknown_pattern_names_are_preserved() {
        let v = parse_verdict(
            "Conclusion: Suspicious\nObserved Pattern: smurfing, fan-out\n",
        )
        .unwrap();
        assert_eq!(
            v.patterns,
            vec![
                NormalizedPattern::Unrecognized("smurfing".to_string()),
                NormalizedPattern::Known(PatternKind::FanOut),
            ]
        );
    }

    #[test]
    fn duplicate_mentions_collapse() {
        let v = parse_verdict(
            "Conclusion: Suspicious\nObserved Pattern: fan-out, Fan Out and fan-out\n",
        )
        .unwrap();
        assert_eq!(v.patterns, vec![NormalizedPattern::Known(PatternKind::FanOut)]);
    }

    #[test]
    fn missing_conclusion_is_an_error() {
        assert_eq!(
            parse_verdict("Explanation: no idea\n"),
            Err(VerdictError::MissingConclusion)
        );
    }

    #[test]
    fn echoed_template_is_unclear() {
        let err = parse_verdict("Conclusion: Suspicious or Not Suspicious\n").unwrap_err();
        assert!(matches!(err, VerdictError::UnclearConclusion(_)));
    }

    #[test]
    fn bare_conclusion_line_is_a_fallback() {
        let v = parse_verdict("Suspicious\n").unwrap();
        assert_eq!(v.conclusion, Conclusion::Suspicious);
        let v = parse_verdict("**Not suspicious.**\n").unwrap();
        assert_eq!(v.conclusion, Conclusion::NotSuspicious);
    }

    #[test]
    fn later_clear_conclusion_beats_earlier_unclear_one() {
        let v = parse_verdict(
            "Conclusion: hard to say\nConclusion: not suspicious\n",
        )
        .unwrap();
        assert_eq!(v.conclusion, Conclusion::NotSuspicious);
    }

    #[test]
    fn negation_wins_inside_one_value() {
        assert_eq!(
            parse_conclusion_value("This is not suspicious"),
            Ok(Conclusion::NotSuspicious)
        );
        assert_eq!(
            parse_conclusion_value("highly suspicious!"),
            Ok(Conclusion::Suspicious)
        );
        assert!(parse_conclusion_value("fine").is_err());
    }

    #[test]
    fn parser_is_total() {
        for text in [
            "",
            ":",
            "::::",
            "Conclusion:",
            "Conclusion:::",
            "Observed Pattern:",
            "Explanation:",
            "\u{0}\u{1}weird\u{ffff}",
            "Conclusion: Suspicious\nObserved Pattern: , ; and\n",
        ] {
            let _ = parse_verdict(text);
        }
    }

    proptest::proptest! {
        #[test]
        fn parse_never_panics(text in ".*") {
            let _ = parse_verdict(&text);
        }

        #[test]
        fn normalize_never_panics(raw in ".*") {
            let _ = normalize_pattern_name(&raw);
        }

        #[test]
        fn labeled_suspicious_always_parses(prefix in "[a-zA-Z0-9 .,]{0,40}") {
            let text = format!("{prefix}\nConclusion: Suspicious\n");
            let v = parse_verdict(&text).unwrap();
            proptest::prop_assert_eq!(v.conclusion, Conclusion::Suspicious);
        }
    }
}
