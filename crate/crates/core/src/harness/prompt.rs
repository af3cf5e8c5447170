use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::context::{BenchmarkInstance, McqOption, TaskKind};
use crate::error::{Error, Result};
use crate::render::sha256_hex;

use super::endpoint::{ChatRequest, ContentPart};

/// Prompt templates. Placeholders are `{instruction}` and `{options}` for the
/// task prompts, `{code}`, `{first}` and `{second}` for the referee, and
/// `{instruction}` and `{chunk}` for chunk relevance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Templates {
    pub summarization: String,
    pub code_qa: String,
    pub completion: String,
    pub referee: String,
    pub relevance: String,
}

const FILES: [&str; 5] = [
    "summarization.txt",
    "code_qa.txt",
    "completion.txt",
    "referee.txt",
    "relevance.txt",
];

impl Default for Templates {
    fn default() -> Self {
        Templates {
            summarization: include_str!("../../assets/templates/summarization.txt").into(),
            code_qa: include_str!("../../assets/templates/code_qa.txt").into(),
            completion: include_str!("../../assets/templates/completion.txt").into(),
            referee: include_str!("../../assets/templates/referee.txt").into(),
            relevance: crate::filters::RELEVANCE_TEMPLATE.into(),
        }
    }
}

impl Templates {
    /// Bundled templates, each replaced by the same-named file in `dir` when
    /// one exists.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut t = Templates::default();
        for name in FILES {
            let path = dir.join(name);
            if path.exists() {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                *t.slot_mut(name) = text;
            }
        }
        Ok(t)
    }

    fn slot_mut(&mut self, file: &str) -> &mut String {
        match file {
            "summarization.txt" => &mut self.summarization,
            "code_qa.txt" => &mut self.code_qa,
            "completion.txt" => &mut self.completion,
            "referee.txt" => &mut self.referee,
            _ => &mut self.relevance,
        }
    }

    pub fn for_task(&self, task: TaskKind) -> &str {
        match task {
            TaskKind::Summarization => &self.summarization,
            TaskKind::CodeQa => &self.code_qa,
            TaskKind::FileCompletion | TaskKind::RepoCompletion => &self.completion,
        }
    }

    /// sha256 of every template, keyed by file name.
    pub fn hashes(&self) -> BTreeMap<String, String> {
        let mut t = self.clone();
        FILES
            .iter()
            .map(|&f| (f.to_owned(), sha256_hex(t.slot_mut(f).as_bytes())))
            .collect()
    }
}

/// The context as it will be shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextPayload {
    Text(String),
    /// PNG pages in reading order.
    Pages(Vec<Arc<Vec<u8>>>),
}

pub fn format_options(options: &[McqOption]) -> String {
    options
        .iter()
        .map(|o| format!("{}. {}", o.label, o.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// One user message: the filled task template as a text part, followed by the
/// context as a single text part or as one image part per page.
pub fn build_prompt(instance: &BenchmarkInstance, context: &ContextPayload, templates: &Templates) -> ChatRequest {
    let options = instance.options.as_deref().map(format_options).unwrap_or_default();
    let task_text = templates
        .for_task(instance.task)
        .replace("{instruction}", &instance.instruction)
        .replace("{options}", &options);
    let mut parts = vec![ContentPart::text(task_text)];
    match context {
        ContextPayload::Text(text) => parts.push(ContentPart::Text {
            text: text.clone(),
            context: true,
        }),
        ContextPayload::Pages(pages) => parts.extend(pages.iter().map(|png| ContentPart::Image {
            png: Arc::clone(png),
            context: true,
        })),
    }
    ChatRequest::user(parts)
}
