use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{split_target_function, BenchmarkInstance, FieldMapping, LineDetector, McqOption};
use crate::error::{Error, Result};
use crate::tokenizer::Tokenizer;

const OPTION_LABELS: [&str; 4] = ["A", "B", "C", "D"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SkipReason {
    Malformed { message: String },
    MissingField { field: String },
    Invalid { message: String },
    BelowLengthThreshold { tokens: usize, threshold: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    /// 1-based line number in the source file.
    pub line: usize,
    pub id: Option<String>,
    pub reason: SkipReason,
}

#[derive(Debug, Clone, PartialEq)]
pub enum IngestItem {
    Instance(BenchmarkInstance),
    Skipped(SkipReport),
}

/// Streams instances from a line-delimited JSON file, one record per line.
/// Blank lines are ignored.
pub struct InstanceReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    path: PathBuf,
    mapping: FieldMapping,
    tokenizer: Tokenizer,
    min_context_tokens: Option<usize>,
    detector: LineDetector,
}

impl InstanceReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, mapping: FieldMapping, tokenizer: Tokenizer) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::new(BufReader::new(file), path, mapping, tokenizer))
    }
}

impl<R: BufRead> InstanceReader<R> {
    pub fn new(reader: R, path: impl Into<PathBuf>, mapping: FieldMapping, tokenizer: Tokenizer) -> Self {
        Self {
            lines: reader.lines(),
            line_no: 0,
            path: path.into(),
            mapping,
            tokenizer,
            min_context_tokens: None,
            detector: LineDetector::python(),
        }
    }

    /// Keep only instances whose context has strictly more than `threshold`
    /// tokens.
    pub fn with_min_context_tokens(mut self, threshold: Option<usize>) -> Self {
        self.min_context_tokens = threshold;
        self
    }

    pub fn with_detector(mut self, detector: LineDetector) -> Self {
        self.detector = detector;
        self
    }

    fn parse(&self, line: &str) -> std::result::Result<BenchmarkInstance, SkipReport> {
        let skip = |id: Option<String>, reason| SkipReport {
            line: self.line_no,
            id,
            reason,
        };
        let record: Map<String, Value> = match serde_json::from_str(line) {
            Ok(Value::Object(map)) => map,
            Ok(_) => {
                return Err(skip(
                    None,
                    SkipReason::Malformed {
                        message: "record is not an object".into(),
                    },
                ))
            }
            Err(e) => {
                return Err(skip(
                    None,
                    SkipReason::Malformed {
                        message: e.to_string(),
                    },
                ))
            }
        };
        let m = &self.mapping;
        let id = match record.get(&m.id_field) {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => format!("line-{}", self.line_no),
        };
        let text_field = |name: &str| -> std::result::Result<Option<String>, SkipReport> {
            match record.get(name) {
                None | Some(Value::Null) => Ok(None),
                Some(Value::String(s)) => Ok(Some(s.clone())),
                Some(other) => Err(skip(
                    Some(id.clone()),
                    SkipReason::Malformed {
                        message: format!("field {name:?} is not a string: {}", type_name(other)),
                    },
                )),
            }
        };
        let required = |name: &str| -> std::result::Result<String, SkipReport> {
            text_field(name)?.ok_or_else(|| {
                skip(
                    Some(id.clone()),
                    SkipReason::MissingField {
                        field: name.to_owned(),
                    },
                )
            })
        };

        let mut context = required(&m.context_field)?;
        let instruction = match &m.instruction_field {
            Some(f) => text_field(f)?.unwrap_or_default(),
            None => String::new(),
        };
        let mut reference = match &m.reference_field {
            Some(f) => text_field(f)?,
            None => None,
        };
        if m.split_target_function {
            let split = split_target_function(&context, &self.detector);
            if let Some(w) = split.warning {
                log::warn!(
                    "{}:{} ({id}): target split warning {w:?}",
                    self.path.display(),
                    self.line_no
                );
            }
            if reference.is_none() && !split.target_region.is_empty() {
                reference = Some(split.target_region);
            }
            context = split.background_context;
        }
        let options = match &m.options_field {
            Some(f) => match record.get(f) {
                None | Some(Value::Null) => None,
                Some(v) => Some(parse_options(v).map_err(|message| {
                    skip(Some(id.clone()), SkipReason::Malformed { message })
                })?),
            },
            None => None,
        };
        let gold_label = match &m.gold_field {
            Some(f) => match record.get(f) {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) => Some(s.trim().to_owned()),
                Some(Value::Number(n)) => n
                    .as_u64()
                    .and_then(|i| OPTION_LABELS.get(i as usize))
                    .map(|s| s.to_string()),
                Some(other) => {
                    return Err(skip(
                        Some(id.clone()),
                        SkipReason::Malformed {
                            message: format!("gold label is {}", type_name(other)),
                        },
                    ))
                }
            },
            None => None,
        };

        let context_token_count = self.tokenizer.count(&context);
        let instance = BenchmarkInstance {
            id: id.clone(),
            task: m.task,
            context,
            instruction,
            reference,
            options,
            gold_label,
            context_token_count,
        };
        instance
            .validate()
            .map_err(|message| skip(Some(id.clone()), SkipReason::Invalid { message }))?;
        if let Some(threshold) = self.min_context_tokens {
            if context_token_count <= threshold {
                return Err(skip(
                    Some(id),
                    SkipReason::BelowLengthThreshold {
                        tokens: context_token_count,
                        threshold,
                    },
                ));
            }
        }
        Ok(instance)
    }
}

impl<R: BufRead> Iterator for InstanceReader<R> {
    /// `Err` only for I/O failures, which end the stream.
    type Item = Result<IngestItem>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            let item = match self.parse(&line) {
                Ok(inst) => IngestItem::Instance(inst),
                Err(report) => {
                    log::warn!(
                        "{}:{}: skipped record: {:?}",
                        self.path.display(),
                        report.line,
                        report.reason
                    );
                    IngestItem::Skipped(report)
                }
            };
            return Some(Ok(item));
        }
    }
}

/// Drains a reader into instances and skip reports.
pub fn collect<R: BufRead>(
    reader: InstanceReader<R>,
) -> Result<(Vec<BenchmarkInstance>, Vec<SkipReport>)> {
    let mut instances = Vec::new();
    let mut skipped = Vec::new();
    for item in reader {
        match item? {
            IngestItem::Instance(i) => instances.push(i),
            IngestItem::Skipped(s) => skipped.push(s),
        }
    }
    Ok((instances, skipped))
}

fn type_name(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Accepts a list of strings (labelled A-D in order), a list of
/// `{label, text}` objects, or an object keyed by label.
fn parse_options(v: &Value) -> std::result::Result<Vec<McqOption>, String> {
    match v {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::String(text) => Ok(McqOption {
                    label: OPTION_LABELS
                        .get(i)
                        .map(|s| s.to_string())
                        .unwrap_or_else(|| (i + 1).to_string()),
                    text: text.clone(),
                }),
                Value::Object(o) => {
                    let label = o.get("label").and_then(Value::as_str);
                    let text = o.get("text").and_then(Value::as_str);
                    match (label, text) {
                        (Some(l), Some(t)) => Ok(McqOption {
                            label: l.to_owned(),
                            text: t.to_owned(),
                        }),
                        _ => Err(format!("option {i} lacks label/text")),
                    }
                }
                other => Err(format!("option {i} is {}", type_name(other))),
            })
            .collect(),
        Value::Object(map) => map
            .iter()
            .map(|(label, text)| match text {
                Value::String(t) => Ok(McqOption {
                    label: label.clone(),
                    text: t.clone(),
                }),
                other => Err(format!("option {label} is {}", type_name(other))),
            })
            .collect(),
        other => Err(format!("options field is {}", type_name(other))),
    }
}
