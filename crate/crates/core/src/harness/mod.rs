//! End-to-end runs: compress, prompt, query, score and report.

mod answer;
mod config;
mod endpoint;
mod overhead;
mod prompt;
mod referee;
mod report;
mod run;

pub use answer::{extract_answer, strip_reasoning, Delimiters, Extracted, Stripped};
pub use config::RunConfig;
pub use endpoint::{
    parse_response, ChatRequest, ChatResponse, ContentPart, EndpointError, EndpointSpec,
    HttpClient, Message, ModelClient, Role, ThinkingStyle, TokenLogprob, Usage,
};
pub use overhead::{
    length_label, overhead_sweep, synthetic_corpus, OverheadCell, OverheadTable, DEFAULT_SWEEP_RATIO,
    FIXTURE_SOURCE,
};
pub use prompt::{build_prompt, format_options, ContextPayload, Templates};
pub use referee::{judge_summary, parse_preference, RefereeOutcome};
pub use report::{
    AccountingTotals, BinEdges, BinRow, FailedInstance, OverallRow, RunHeader, StratifiedReport,
};
pub use run::{
    compress_context, compress_instance, evaluate_instance, run_benchmark, run_header,
    BenchmarkRun, Clients, CompressedContext, EvalRecord, Method, MethodParams, RunSettings,
};
