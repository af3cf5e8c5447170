use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::budget::EncoderProfile;
use crate::context::LineDetector;
use crate::error::{Error, Result};
use crate::render::RenderConfig;
use crate::tokenizer::{Tokenizer, TokenizerProfile};

use super::answer::Delimiters;
use super::endpoint::{EndpointSpec, HttpClient, ModelClient};
use super::prompt::Templates;
use super::report::BinEdges;
use super::run::{Clients, MethodParams, RunSettings};

/// A run config file (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub tokenizer: TokenizerProfile,
    pub render: RenderConfig,
    pub encoder: EncoderProfile,
    pub bin_edges: BinEdges,
    pub methods: MethodParams,
    pub endpoints: Vec<EndpointSpec>,
    /// Endpoint id answering the benchmark prompts.
    pub model: Option<String>,
    /// Endpoint id judging summaries.
    pub referee: Option<String>,
    pub referee_samples: usize,
    pub reasoning_delimiters: Vec<Delimiters>,
    /// Directory whose template files replace the bundled ones.
    pub template_dir: Option<PathBuf>,
    pub page_dir: Option<PathBuf>,
    pub workers: usize,
    /// Extra keywords that start a top-level definition, besides Python's.
    pub definition_keywords: Vec<String>,
    /// Drop instances whose context has at most this many tokens.
    pub min_context_tokens: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tokenizer: TokenizerProfile::default(),
            render: RenderConfig::default(),
            encoder: EncoderProfile::default(),
            bin_edges: BinEdges::default(),
            methods: MethodParams::default(),
            endpoints: Vec::new(),
            model: None,
            referee: None,
            referee_samples: 1,
            reasoning_delimiters: vec![Delimiters::default()],
            template_dir: None,
            page_dir: None,
            workers: 4,
            definition_keywords: Vec::new(),
            min_context_tokens: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.template_dir, &mut cfg.page_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let TokenizerProfile::SubwordVocab { vocab_source } = &mut cfg.tokenizer {
            if vocab_source.is_relative() {
                *vocab_source = base.join(&*vocab_source);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.endpoints {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Config(format!("duplicate endpoint id {:?}", e.id)));
            }
        }
        for (role, id) in [("model", &self.model), ("referee", &self.referee)] {
            if let Some(id) = id {
                if !seen.contains(id.as_str()) {
                    return Err(Error::Config(format!("{role} endpoint {id:?} is not defined")));
                }
            }
        }
        if let Some(t) = self.methods.target_ratio {
            if t.is_nan() || t < 1.0 {
                return Err(Error::Config(format!("target_ratio must be >= 1, got {t}")));
            }
        }
        self.encoder.validate()?;
        Ok(())
    }

    pub fn settings(&self) -> Result<RunSettings> {
        self.validate()?;
        let templates = match &self.template_dir {
            Some(dir) => Templates::load_dir(dir)?,
            None => Templates::default(),
        };
        let detector = if self.definition_keywords.is_empty() {
            LineDetector::python()
        } else {
            let mut kw: Vec<String> = ["def", "async def", "class"].map(String::from).to_vec();
            kw.extend(self.definition_keywords.iter().cloned());
            LineDetector::new(kw)
        };
        Ok(RunSettings {
            tokenizer: Tokenizer::from_profile(&self.tokenizer)?,
            render: self.render.clone(),
            encoder: self.encoder,
            bins: self.bin_edges.clone(),
            params: self.methods.clone(),
            templates,
            delimiters: self.reasoning_delimiters.clone(),
            referee_samples: self.referee_samples.max(1),
            workers: self.workers.max(1),
            page_dir: self.page_dir.clone(),
            detector,
            resolved_config: Some(serde_json::to_value(self)?),
        })
    }

    /// HTTP clients for every endpoint; each is also available to scorers.
    pub fn clients(&self) -> Result<Clients> {
        self.validate()?;
        let all: BTreeMap<String, Arc<dyn ModelClient>> = self
            .endpoints
            .iter()
            .map(|e| (e.id.clone(), Arc::new(HttpClient::new(e.clone())) as Arc<dyn ModelClient>))
            .collect();
        let pick = |id: &Option<String>| id.as_ref().and_then(|id| all.get(id).cloned());
        Ok(Clients {
            model: pick(&self.model),
            referee: pick(&self.referee),
            scorers: all.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
model = "vlm"
referee = "judge"
bin_edges = [8000, 16000]

[tokenizer]
kind = "byte_estimator"
bytes_per_token = 3.5

[render]
glyph_px = 10

[encoder]
patch_px = 14

[methods]
target_ratio = 2.0
seed = 7

[methods.scorer]
kind = "oracle_fixture"
scores = { 0 = 0.5 }

[[endpoints]]
id = "vlm"
base_url = "http://localhost:8000/v1"
model_name = "some-vlm"

[[endpoints]]
id = "judge"
base_url = "https://api.example.com/v1"
model_name = "judge-model"
api_key_env = "JUDGE_API_KEY"
supports_images = false
"#;

    #[test]
    fn parses_sample() {
        let cfg = RunConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.render.glyph_px, 10);
        assert_eq!(cfg.encoder.pooling_factor, 4);
        assert_eq!(cfg.methods.target_ratio, Some(2.0));
        assert_eq!(cfg.endpoints[1].thinking_budget_tokens, 2048);
        let settings = cfg.settings().unwrap();
        assert_eq!(settings.bins.labels(), ["0-8k", "8k-16k", "16k+"]);
        let clients = cfg.clients().unwrap();
        assert_eq!(clients.model.unwrap().spec().model_name, "some-vlm");
        assert_eq!(clients.scorers.len(), 2);
    }

    #[test]
    fn rejects_unknown_endpoint_reference() {
        let cfg = RunConfig::from_toml("model = \"nope\"").unwrap();
        assert!(cfg.settings().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::from_toml("colour = 1").is_err());
    }
}
