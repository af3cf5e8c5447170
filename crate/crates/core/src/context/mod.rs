//! Benchmark instances and their ingestion.

mod detect;
mod ingest;

use serde::{Deserialize, Serialize};

pub use detect::{BoundaryDetector, Definition, LineDetector};
pub use ingest::{collect, IngestItem, InstanceReader, SkipReason, SkipReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Summarization,
    CodeQa,
    FileCompletion,
    RepoCompletion,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [
        TaskKind::Summarization,
        TaskKind::CodeQa,
        TaskKind::FileCompletion,
        TaskKind::RepoCompletion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Summarization => "summarization",
            TaskKind::CodeQa => "code_qa",
            TaskKind::FileCompletion => "file_completion",
            TaskKind::RepoCompletion => "repo_completion",
        }
    }

    pub fn is_completion(self) -> bool {
        matches!(self, TaskKind::FileCompletion | TaskKind::RepoCompletion)
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct McqOption {
    pub label: String,
    pub text: String,
}

/// One task sample. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkInstance {
    pub id: String,
    pub task: TaskKind,
    pub context: String,
    pub instruction: String,
    pub reference: Option<String>,
    pub options: Option<Vec<McqOption>>,
    pub gold_label: Option<String>,
    pub context_token_count: usize,
}

impl BenchmarkInstance {
    /// Checks the per-task invariants, returning the first violation.
    pub fn validate(&self) -> Result<(), String> {
        if self.context.is_empty() {
            return Err("context is empty".into());
        }
        match self.task {
            TaskKind::CodeQa => {
                let options = self.options.as_deref().unwrap_or_default();
                if options.len() != 4 {
                    return Err(format!("expected 4 options, found {}", options.len()));
                }
                let gold = self.gold_label.as_deref().ok_or("missing gold label")?;
                if !options.iter().any(|o| o.label.eq_ignore_ascii_case(gold)) {
                    return Err(format!("gold label {gold:?} is not among the options"));
                }
            }
            _ => {
                if self.reference.as_deref().is_none_or(str::is_empty) {
                    return Err("reference is empty".into());
                }
            }
        }
        Ok(())
    }
}

/// Binds a task to the field names of its source records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub task: TaskKind,
    pub context_field: String,
    #[serde(default = "default_id_field")]
    pub id_field: String,
    #[serde(default)]
    pub instruction_field: Option<String>,
    #[serde(default)]
    pub reference_field: Option<String>,
    #[serde(default)]
    pub options_field: Option<String>,
    #[serde(default)]
    pub gold_field: Option<String>,
    /// Split the trailing target function off the context field and keep only
    /// the code before it.
    #[serde(default)]
    pub split_target_function: bool,
}

fn default_id_field() -> String {
    "id".into()
}

impl FieldMapping {
    /// The standard context field for each task.
    pub fn default_for(task: TaskKind) -> Self {
        let context_field = match task {
            TaskKind::Summarization => "context",
            TaskKind::CodeQa => "repo_text",
            TaskKind::FileCompletion => "background_context",
            TaskKind::RepoCompletion => "context",
        };
        let (instruction, reference) = match task {
            TaskKind::Summarization => ("intent", "reference"),
            TaskKind::CodeQa => ("question", "reference"),
            TaskKind::FileCompletion | TaskKind::RepoCompletion => ("instruction", "reference"),
        };
        Self {
            task,
            context_field: context_field.into(),
            id_field: default_id_field(),
            instruction_field: Some(instruction.into()),
            reference_field: Some(reference.into()),
            options_field: (task == TaskKind::CodeQa).then(|| "options".into()),
            gold_field: (task == TaskKind::CodeQa).then(|| "answer".into()),
            split_target_function: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitWarning {
    /// No top-level definition was found; the whole context is background.
    NoDefinition,
    /// The target definition contains nested definitions, so the intended
    /// target may be one of those rather than the top-level one.
    NestedDefinitions,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSample {
    pub background_context: String,
    pub target_region: String,
    pub warning: Option<SplitWarning>,
}

/// Splits `context` at the start of its last top-level definition.
pub fn split_target_function(context: &str, detector: &dyn BoundaryDetector) -> SplitSample {
    match detector.definitions(context).last() {
        Some(def) => SplitSample {
            background_context: context[..def.start].to_owned(),
            target_region: context[def.start..].to_owned(),
            warning: def.has_nested.then_some(SplitWarning::NestedDefinitions),
        },
        None => SplitSample {
            background_context: context.to_owned(),
            target_region: String::new(),
            warning: Some(SplitWarning::NoDefinition),
        },
    }
}
