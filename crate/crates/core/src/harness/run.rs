use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{ratio_textual, ratio_visual, target_ratio_search, EncoderProfile, RatioReport};
use crate::context::{BenchmarkInstance, LineDetector, TaskKind};
use crate::error::{Error, Result};
use crate::filters::{
    function_chunks, rag_compress_to_budget, rag_select, random_line_compress,
    selective_filter_compress, sliding_window_chunks, ChunkScorer, CompressionAccounting,
    RemoteLogprobScorer, ScorerSpec, SelectiveOptions,
};
use crate::metrics::{comp_score, completion_score, mcq_accuracy};
use crate::render::{load_font, RenderConfig, Renderer};
use crate::tokenizer::Tokenizer;

use super::answer::{extract_answer, strip_reasoning, Delimiters};
use super::endpoint::ModelClient;
use super::prompt::{build_prompt, ContextPayload, Templates};
use super::referee::judge_summary;
use super::report::{BinEdges, RunHeader, StratifiedReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoCompression,
    RandomLine,
    RagWindow,
    RagFunction,
    SelectiveFilter,
    VisualRender,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::NoCompression,
        Method::RandomLine,
        Method::RagWindow,
        Method::RagFunction,
        Method::SelectiveFilter,
        Method::VisualRender,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::NoCompression => "no_compression",
            Method::RandomLine => "random_line",
            Method::RagWindow => "rag_window",
            Method::RagFunction => "rag_function",
            Method::SelectiveFilter => "selective_filter",
            Method::VisualRender => "visual_render",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MethodParams {
    /// Required by the textual filters; the visual method searches glyph size
    /// for it when set and renders the base config otherwise.
    pub target_ratio: Option<f64>,
    /// Relative tolerance of the visual ratio search.
    pub ratio_tolerance: f64,
    pub seed: u64,
    pub window_tokens: usize,
    pub stride_tokens: usize,
    /// Fixed top-k for the RAG methods instead of fitting the target ratio.
    pub rag_k: Option<usize>,
    pub scorer: ScorerSpec,
    pub selective: SelectiveOptions,
}

impl Default for MethodParams {
    fn default() -> Self {
        MethodParams {
            target_ratio: None,
            ratio_tolerance: 0.05,
            seed: 0,
            window_tokens: 256,
            stride_tokens: 128,
            rag_k: None,
            scorer: ScorerSpec::Lexical,
            selective: SelectiveOptions::default(),
        }
    }
}

/// Everything a run needs besides the endpoints.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub tokenizer: Tokenizer,
    pub render: RenderConfig,
    pub encoder: EncoderProfile,
    pub bins: BinEdges,
    pub params: MethodParams,
    pub templates: Templates,
    pub delimiters: Vec<Delimiters>,
    pub referee_samples: usize,
    /// Instances processed concurrently.
    pub workers: usize,
    /// Pages of visual runs are written to `<page_dir>/<instance id>/`.
    pub page_dir: Option<PathBuf>,
    pub detector: LineDetector,
    pub resolved_config: Option<serde_json::Value>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            tokenizer: Tokenizer::default(),
            render: RenderConfig::default(),
            encoder: EncoderProfile::default(),
            bins: BinEdges::default(),
            params: MethodParams::default(),
            templates: Templates::default(),
            delimiters: vec![Delimiters::default()],
            referee_samples: 1,
            workers: 4,
            page_dir: None,
            detector: LineDetector::python(),
            resolved_config: None,
        }
    }
}

#[derive(Clone, Default)]
pub struct Clients {
    pub model: Option<Arc<dyn ModelClient>>,
    pub referee: Option<Arc<dyn ModelClient>>,
    /// Endpoints a `RemoteLogprob` scorer may name.
    pub scorers: BTreeMap<String, Arc<dyn ModelClient>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedContext {
    pub method: Method,
    pub payload: ContextPayload,
    pub ratio: RatioReport,
    pub accounting: CompressionAccounting,
    /// Visual ratio search could not reach the target within tolerance.
    pub infeasible: bool,
}

fn build_scorer(settings: &RunSettings, clients: &Clients) -> Result<Box<dyn ChunkScorer>> {
    if let ScorerSpec::RemoteLogprob { endpoint } = &settings.params.scorer {
        let client = clients
            .scorers
            .get(endpoint)
            .ok_or_else(|| Error::Config(format!("scorer endpoint {endpoint:?} is not defined")))?;
        return Ok(Box::new(
            RemoteLogprobScorer::new(Arc::clone(client)).with_template(settings.templates.relevance.clone()),
        ));
    }
    settings.params.scorer.build(&clients.scorers)
}

fn required_target(params: &MethodParams, method: Method) -> Result<f64> {
    params
        .target_ratio
        .ok_or_else(|| Error::Config(format!("{method} needs a target ratio")))
}

/// Compresses one context with the given method.
pub fn compress_context(
    context: &str,
    instruction: &str,
    method: Method,
    settings: &RunSettings,
    clients: &Clients,
) -> Result<(CompressedContext, Option<crate::render::RenderedContext>)> {
    let params = &settings.params;
    let tok = &settings.tokenizer;
    let started = Instant::now();
    let text_result = |t: crate::filters::TextCompression, method| CompressedContext {
        method,
        payload: ContextPayload::Text(t.text),
        ratio: t.ratio,
        accounting: t.accounting,
        infeasible: false,
    };
    let out = match method {
        Method::NoCompression => {
            let n = tok.count(context).max(1);
            CompressedContext {
                method,
                payload: ContextPayload::Text(context.to_owned()),
                ratio: ratio_textual(n, n)?,
                accounting: CompressionAccounting {
                    wall_latency_s: started.elapsed().as_secs_f64(),
                    llm_tokens_spent: 0,
                },
                infeasible: false,
            }
        }
        Method::RandomLine => {
            let target = required_target(params, method)?;
            text_result(random_line_compress(context, target, params.seed, tok)?, method)
        }
        Method::RagWindow | Method::RagFunction => {
            let scorer = build_scorer(settings, clients)?;
            let chunks = if method == Method::RagWindow {
                sliding_window_chunks(context, params.window_tokens, params.stride_tokens, tok)?
            } else {
                function_chunks(context, &settings.detector, tok)
            };
            match params.rag_k {
                Some(k) => {
                    let sel = rag_select(context, &chunks, instruction, k, scorer.as_ref())?;
                    let ratio = ratio_textual(tok.count(context).max(1), tok.count(&sel.text).max(1))?;
                    CompressedContext {
                        method,
                        payload: ContextPayload::Text(sel.text),
                        ratio,
                        accounting: CompressionAccounting {
                            wall_latency_s: started.elapsed().as_secs_f64(),
                            llm_tokens_spent: sel.tokens_spent,
                        },
                        infeasible: false,
                    }
                }
                None => {
                    let target = required_target(params, method)?;
                    let t = rag_compress_to_budget(context, &chunks, instruction, target, scorer.as_ref(), tok)?;
                    let mut c = text_result(t, method);
                    c.accounting.wall_latency_s = started.elapsed().as_secs_f64();
                    c
                }
            }
        }
        Method::SelectiveFilter => {
            let target = required_target(params, method)?;
            let scorer = build_scorer(settings, clients)?;
            let s = selective_filter_compress(
                context,
                instruction,
                target,
                scorer.as_ref(),
                &settings.detector,
                tok,
                &params.selective,
            )?;
            text_result(s.output, method)
        }
        Method::VisualRender => {
            let tokens = tok.count(context);
            let (config, infeasible) = match params.target_ratio {
                Some(target) => {
                    let s = target_ratio_search(
                        context,
                        tokens,
                        &settings.render,
                        &settings.encoder,
                        target,
                        params.ratio_tolerance,
                    )?;
                    if s.infeasible {
                        log::warn!(
                            "target ratio {target} not reachable; closest is {:.3} at {} px",
                            s.achieved_ratio,
                            s.config.glyph_px
                        );
                    }
                    (s.config, s.infeasible)
                }
                None => (settings.render.clone(), false),
            };
            let rendered = Renderer::new(&config)?.render(context, &settings.encoder)?;
            let ratio = ratio_visual(tokens.max(1), &rendered, &settings.encoder)?;
            let compressed = CompressedContext {
                method,
                payload: ContextPayload::Pages(rendered.pages.iter().map(|p| Arc::clone(&p.png)).collect()),
                ratio,
                accounting: CompressionAccounting {
                    wall_latency_s: started.elapsed().as_secs_f64(),
                    llm_tokens_spent: 0,
                },
                infeasible,
            };
            return Ok((compressed, Some(rendered)));
        }
    };
    Ok((out, None))
}

/// Compresses an instance's context, writing pages when configured.
pub fn compress_instance(
    instance: &BenchmarkInstance,
    method: Method,
    settings: &RunSettings,
    clients: &Clients,
) -> Result<CompressedContext> {
    let (compressed, rendered) =
        compress_context(&instance.context, &instance.instruction, method, settings, clients)?;
    if let (Some(dir), Some(rendered)) = (&settings.page_dir, rendered) {
        rendered.write_pages(&dir.join(safe_dir_name(&instance.id)))?;
    }
    Ok(compressed)
}

fn safe_dir_name(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub id: String,
    pub task: TaskKind,
    pub method: Method,
    pub achieved_ratio: f64,
    pub context_token_count: usize,
    pub length_bin: String,
    pub raw_output: String,
    pub final_answer: String,
    /// Metric-ready prediction; `None` for an unparsed QA answer.
    pub prediction: Option<String>,
    /// Metric name to value, 0-100 scale.
    pub metrics: BTreeMap<String, f64>,
    pub accounting: CompressionAccounting,
    pub endpoint_latency_s: f64,
    /// Model plus referee tokens reported by the endpoints.
    pub endpoint_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pages: Option<usize>,
    #[serde(default)]
    pub infeasible: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    /// Set when the instance failed; failed records carry no metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EvalRecord {
    fn new(instance: &BenchmarkInstance, method: Method, bins: &BinEdges) -> Self {
        EvalRecord {
            id: instance.id.clone(),
            task: instance.task,
            method,
            achieved_ratio: 0.0,
            context_token_count: instance.context_token_count,
            length_bin: bins.label_for(instance.context_token_count),
            raw_output: String::new(),
            final_answer: String::new(),
            prediction: None,
            metrics: BTreeMap::new(),
            accounting: CompressionAccounting::default(),
            endpoint_latency_s: 0.0,
            endpoint_tokens: 0,
            pages: None,
            infeasible: false,
            warnings: Vec::new(),
            error: None,
        }
    }
}

/// Runs one instance end to end. Errors end up in the record.
pub fn evaluate_instance(
    instance: &BenchmarkInstance,
    method: Method,
    settings: &RunSettings,
    clients: &Clients,
) -> EvalRecord {
    let mut record = EvalRecord::new(instance, method, &settings.bins);
    if let Err(e) = evaluate_into(&mut record, instance, method, settings, clients) {
        log::warn!("instance {} ({method}) failed: {e}", instance.id);
        record.metrics.clear();
        record.error = Some(e.to_string());
    }
    record
}

fn evaluate_into(
    record: &mut EvalRecord,
    instance: &BenchmarkInstance,
    method: Method,
    settings: &RunSettings,
    clients: &Clients,
) -> Result<()> {
    let model = clients
        .model
        .as_ref()
        .ok_or_else(|| Error::Config("no model endpoint configured".into()))?;
    let compressed = compress_instance(instance, method, settings, clients)?;
    record.achieved_ratio = compressed.ratio.ratio;
    record.accounting = compressed.accounting;
    record.infeasible = compressed.infeasible;
    if let ContextPayload::Pages(p) = &compressed.payload {
        record.pages = Some(p.len());
    }

    let request = build_prompt(instance, &compressed.payload, &settings.templates);
    let response = model.complete(&request)?;
    record.endpoint_latency_s += response.latency_s;
    record.endpoint_tokens += response.usage.total_tokens;
    record.raw_output = response.content;

    let stripped = strip_reasoning(&record.raw_output, &settings.delimiters);
    record.warnings.extend(stripped.warnings);
    record.final_answer = stripped.text;
    let extracted = extract_answer(&record.final_answer, instance.task);
    if extracted.ambiguous {
        record.warnings.push("several option letters in answer; first one used".into());
    }
    record.prediction = extracted.prediction;

    let missing = |what: &str| Error::Config(format!("instance {} has no {what}", instance.id));
    match instance.task {
        TaskKind::CodeQa => {
            let gold = instance.gold_label.as_deref().ok_or_else(|| missing("gold label"))?;
            let hit = mcq_accuracy(record.prediction.as_deref(), gold);
            record.metrics.insert("accuracy".into(), f64::from(hit) * 100.0);
        }
        TaskKind::FileCompletion | TaskKind::RepoCompletion => {
            let reference = instance.reference.as_deref().ok_or_else(|| missing("reference"))?;
            let s = completion_score(record.prediction.as_deref().unwrap_or(""), reference);
            record.metrics.insert("exact_match".into(), s.exact_match);
            record.metrics.insert("edit_similarity".into(), s.edit_similarity);
        }
        TaskKind::Summarization => {
            let reference = instance.reference.as_deref().ok_or_else(|| missing("reference"))?;
            let referee = clients
                .referee
                .as_ref()
                .ok_or_else(|| Error::Config("summarization needs a referee endpoint".into()))?;
            let outcome = judge_summary(
                referee.as_ref(),
                &settings.templates.referee,
                &settings.delimiters,
                &instance.context,
                record.prediction.as_deref().unwrap_or(""),
                reference,
                settings.referee_samples,
            )?;
            record.endpoint_latency_s += outcome.latency_s;
            record.endpoint_tokens += outcome.tokens;
            if outcome.unparsed > 0 {
                record
                    .warnings
                    .push(format!("{} referee replies unreadable; counted as 0.5", outcome.unparsed));
            }
            record.metrics.insert("comp_score".into(), comp_score(&outcome.verdict));
        }
    }
    Ok(())
}

pub fn run_header(settings: &RunSettings, clients: &Clients) -> Result<RunHeader> {
    Ok(RunHeader {
        tool_version: env!("CARGO_PKG_VERSION").into(),
        tokenizer: settings.tokenizer.profile().clone(),
        render: settings.render.clone(),
        encoder: settings.encoder,
        bin_edges: settings.bins.clone(),
        params: settings.params.clone(),
        template_hashes: settings.templates.hashes(),
        font_sha256: load_font(&settings.render.font)?.sha256,
        visual_token_basis: super::report::VISUAL_TOKEN_BASIS.to_string(),
        model: clients.model.as_ref().map(|m| m.spec().model_name.clone()),
        referee: clients.referee.as_ref().map(|m| m.spec().model_name.clone()),
        config: settings.resolved_config.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRun {
    pub records: Vec<EvalRecord>,
    pub report: StratifiedReport,
}

/// Evaluates every instance with `method` on a bounded worker pool and
/// aggregates the records. Per-instance failures are recorded, not raised.
pub fn run_benchmark(
    instances: &[BenchmarkInstance],
    method: Method,
    settings: &RunSettings,
    clients: &Clients,
) -> Result<BenchmarkRun> {
    let header = run_header(settings, clients)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records: Vec<EvalRecord> = pool.install(|| {
        instances
            .par_iter()
            .map(|inst| evaluate_instance(inst, method, settings, clients))
            .collect()
    });
    let report = StratifiedReport::aggregate(&records, header);
    Ok(BenchmarkRun { records, report })
}
