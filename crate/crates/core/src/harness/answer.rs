use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::context::TaskKind;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Delimiters {
    pub open: String,
    pub close: String,
}

impl Default for Delimiters {
    fn default() -> Self {
        Delimiters {
            open: "<think>".into(),
            close: "</think>".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stripped {
    pub text: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Removes every delimited reasoning span. An open marker without a close
/// swallows the rest of the output; a close marker with no open before it
/// (servers that inject the open marker into the prompt) swallows everything
/// before it. Both cases are reported as warnings.
pub fn strip_reasoning(raw: &str, delimiters: &[Delimiters]) -> Stripped {
    let mut text = raw.to_owned();
    let mut warnings = Vec::new();
    for d in delimiters {
        if d.open.is_empty() || d.close.is_empty() {
            continue;
        }
        if let (Some(close), open) = (text.find(&d.close), text.find(&d.open)) {
            if open.is_none_or(|o| o > close) {
                warnings.push(format!("{} without {}; leading text treated as reasoning", d.close, d.open));
                text.replace_range(..close + d.close.len(), "");
            }
        }
        let mut out = String::with_capacity(text.len());
        let mut rest = text.as_str();
        while let Some(start) = rest.find(&d.open) {
            out.push_str(&rest[..start]);
            let after = &rest[start + d.open.len()..];
            match after.find(&d.close) {
                Some(end) => rest = &after[end + d.close.len()..],
                None => {
                    warnings.push(format!("unclosed {}; rest of output treated as reasoning", d.open));
                    rest = "";
                }
            }
        }
        out.push_str(rest);
        text = out;
    }
    Stripped {
        text: text.trim().to_owned(),
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Extracted {
    /// `None` when no option letter could be found.
    pub prediction: Option<String>,
    /// More than one distinct option letter appeared.
    pub ambiguous: bool,
}

fn letter_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b([A-Da-d])\b").expect("static regex"))
}

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[^\n`]*\n(.*?)(?:```|\z)").expect("static regex"))
}

/// The first standalone option letter. Uppercase letters are preferred so
/// that the article "a" does not shadow a later "C"; lowercase letters count
/// only when no uppercase one appears.
fn option_letter(text: &str) -> Extracted {
    let letters: Vec<char> = letter_re()
        .captures_iter(text)
        .filter_map(|c| c[1].chars().next())
        .collect();
    let upper: Vec<char> = letters.iter().copied().filter(char::is_ascii_uppercase).collect();
    let pool = if upper.is_empty() { letters } else { upper };
    let Some(&first) = pool.first() else {
        return Extracted {
            prediction: None,
            ambiguous: false,
        };
    };
    let first = first.to_ascii_uppercase();
    Extracted {
        prediction: Some(first.to_string()),
        ambiguous: pool.iter().any(|c| c.to_ascii_uppercase() != first),
    }
}

pub fn extract_answer(final_answer: &str, task: TaskKind) -> Extracted {
    let prediction = match task {
        TaskKind::CodeQa => return option_letter(final_answer),
        TaskKind::FileCompletion | TaskKind::RepoCompletion => match fence_re().captures(final_answer) {
            Some(c) => c[1].to_owned(),
            None => final_answer.to_owned(),
        },
        TaskKind::Summarization => final_answer.trim().to_owned(),
    };
    Extracted {
        prediction: Some(prediction),
        ambiguous: false,
    }
}
