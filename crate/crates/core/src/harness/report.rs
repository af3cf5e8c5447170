use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::budget::EncoderProfile;
use crate::context::TaskKind;
use crate::error::{Error, Result};
use crate::render::RenderConfig;
use crate::tokenizer::TokenizerProfile;

use super::run::{EvalRecord, Method, MethodParams};

/// Upper edges of context-length bins, in tokens. `[8000, 16000]` gives the
/// bins `0-8k`, `8k-16k` and `16k+`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct BinEdges(Vec<usize>);

impl TryFrom<Vec<usize>> for BinEdges {
    type Error = Error;

    fn try_from(edges: Vec<usize>) -> Result<Self> {
        BinEdges::new(edges)
    }
}

impl From<BinEdges> for Vec<usize> {
    fn from(b: BinEdges) -> Self {
        b.0
    }
}

impl Default for BinEdges {
    fn default() -> Self {
        BinEdges(vec![8_000, 16_000])
    }
}

fn fmt_edge(e: usize) -> String {
    if e > 0 && e.is_multiple_of(1000) {
        format!("{}k", e / 1000)
    } else {
        e.to_string()
    }
}

impl BinEdges {
    pub fn new(edges: Vec<usize>) -> Result<Self> {
        if edges.first() == Some(&0) || edges.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "bin edges must be positive and strictly increasing, got {edges:?}"
            )));
        }
        Ok(BinEdges(edges))
    }

    pub fn edges(&self) -> &[usize] {
        &self.0
    }

    pub fn bin_count(&self) -> usize {
        self.0.len() + 1
    }

    /// Bin `i` holds counts in `[edge[i-1], edge[i])`.
    pub fn index(&self, tokens: usize) -> usize {
        self.0.partition_point(|&e| e <= tokens)
    }

    pub fn label(&self, index: usize) -> String {
        let lo = if index == 0 { 0 } else { self.0[index - 1] };
        match self.0.get(index) {
            Some(&hi) => format!("{}-{}", fmt_edge(lo), fmt_edge(hi)),
            None => format!("{}+", fmt_edge(lo)),
        }
    }

    pub fn label_for(&self, tokens: usize) -> String {
        self.label(self.index(tokens))
    }

    pub fn labels(&self) -> Vec<String> {
        (0..self.bin_count()).map(|i| self.label(i)).collect()
    }
}

pub const VISUAL_TOKEN_BASIS: &str = "rendered page size, before any model-side resize";

fn default_token_basis() -> String {
    VISUAL_TOKEN_BASIS.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunHeader {
    pub tool_version: String,
    pub tokenizer: TokenizerProfile,
    pub render: RenderConfig,
    pub encoder: EncoderProfile,
    pub bin_edges: BinEdges,
    pub params: MethodParams,
    /// sha256 per prompt template file.
    pub template_hashes: BTreeMap<String, String>,
    pub font_sha256: String,
    /// Which image dimensions the visual-token estimates were taken from.
    #[serde(default = "default_token_basis")]
    pub visual_token_basis: String,
    pub model: Option<String>,
    pub referee: Option<String>,
    /// The resolved run config, when the run came from a config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub task: TaskKind,
    pub method: Method,
    pub bin_index: usize,
    pub bin: String,
    pub n: usize,
    /// Mean of each metric over the bin.
    pub metrics: BTreeMap<String, f64>,
    pub mean_ratio: f64,
    /// QA predictions with no readable option letter.
    pub unparsed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallRow {
    pub task: TaskKind,
    pub method: Method,
    pub n: usize,
    pub metrics: BTreeMap<String, f64>,
    pub mean_ratio: f64,
    pub unparsed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedInstance {
    pub id: String,
    pub task: TaskKind,
    pub method: Method,
    pub error: String,
}

/// Sums over every record, failed ones included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AccountingTotals {
    pub compression_latency_s: f64,
    pub llm_tokens_spent: u64,
    pub endpoint_latency_s: f64,
    pub endpoint_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedReport {
    pub header: RunHeader,
    pub rows: Vec<BinRow>,
    pub overall: Vec<OverallRow>,
    pub evaluated: usize,
    pub failed_count: usize,
    pub failed: Vec<FailedInstance>,
    pub totals: AccountingTotals,
}

#[derive(Default)]
struct Acc {
    n: usize,
    sums: BTreeMap<String, (f64, usize)>,
    ratio: f64,
    unparsed: usize,
}

impl Acc {
    fn means(&self) -> BTreeMap<String, f64> {
        self.sums
            .iter()
            .map(|(k, &(s, n))| (k.clone(), s / n as f64))
            .collect()
    }
}

impl StratifiedReport {
    pub fn aggregate(records: &[EvalRecord], header: RunHeader) -> Self {
        let edges = header.bin_edges.clone();
        let mut groups: BTreeMap<(TaskKind, Method, usize), Acc> = BTreeMap::new();
        let mut failed = Vec::new();
        let mut totals = AccountingTotals::default();
        for r in records {
            totals.compression_latency_s += r.accounting.wall_latency_s;
            totals.llm_tokens_spent += r.accounting.llm_tokens_spent;
            totals.endpoint_latency_s += r.endpoint_latency_s;
            totals.endpoint_tokens += r.endpoint_tokens;
            if let Some(error) = &r.error {
                failed.push(FailedInstance {
                    id: r.id.clone(),
                    task: r.task,
                    method: r.method,
                    error: error.clone(),
                });
                continue;
            }
            let acc = groups
                .entry((r.task, r.method, edges.index(r.context_token_count)))
                .or_default();
            acc.n += 1;
            acc.ratio += r.achieved_ratio;
            acc.unparsed += usize::from(r.task == TaskKind::CodeQa && r.prediction.is_none());
            for (k, v) in &r.metrics {
                let slot = acc.sums.entry(k.clone()).or_default();
                slot.0 += v;
                slot.1 += 1;
            }
        }

        let rows: Vec<BinRow> = groups
            .iter()
            .map(|(&(task, method, bin_index), acc)| BinRow {
                task,
                method,
                bin_index,
                bin: edges.label(bin_index),
                n: acc.n,
                metrics: acc.means(),
                mean_ratio: acc.ratio / acc.n as f64,
                unparsed: acc.unparsed,
            })
            .collect();

        // Overall means are instance-weighted means of the bin means.
        let mut overall_map: BTreeMap<(TaskKind, Method), Vec<&BinRow>> = BTreeMap::new();
        for row in &rows {
            overall_map.entry((row.task, row.method)).or_default().push(row);
        }
        let overall = overall_map
            .into_iter()
            .map(|((task, method), bins)| {
                let n: usize = bins.iter().map(|b| b.n).sum();
                let mut metrics: BTreeMap<String, (f64, usize)> = BTreeMap::new();
                for b in &bins {
                    for (k, v) in &b.metrics {
                        let slot = metrics.entry(k.clone()).or_default();
                        slot.0 += v * b.n as f64;
                        slot.1 += b.n;
                    }
                }
                OverallRow {
                    task,
                    method,
                    n,
                    metrics: metrics.into_iter().map(|(k, (s, w))| (k, s / w as f64)).collect(),
                    mean_ratio: bins.iter().map(|b| b.mean_ratio * b.n as f64).sum::<f64>() / n as f64,
                    unparsed: bins.iter().map(|b| b.unparsed).sum(),
                }
            })
            .collect();

        StratifiedReport {
            header,
            evaluated: records.len() - failed.len(),
            failed_count: failed.len(),
            rows,
            overall,
            failed,
            totals,
        }
    }

    /// Copy with wall-clock fields zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut r = self.clone();
        r.totals.compression_latency_s = 0.0;
        r.totals.endpoint_latency_s = 0.0;
        r
    }

    fn metric_names(&self, task: TaskKind) -> Vec<String> {
        let mut names: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.task == task)
            .flat_map(|r| r.metrics.keys().cloned())
            .collect();
        names.sort();
        names.dedup();
        names
    }

    fn tasks(&self) -> Vec<TaskKind> {
        let mut t: Vec<TaskKind> = self.rows.iter().map(|r| r.task).collect();
        t.dedup();
        t
    }

    fn bin_n(&self, task: TaskKind, bin: usize) -> usize {
        // n per bin is reported from the first method with rows in it
        self.rows
            .iter()
            .find(|r| r.task == task && r.bin_index == bin)
            .map_or(0, |r| r.n)
    }

    /// One table per task and metric: methods as rows, length bins as
    /// columns, then the overall mean and the mean achieved ratio.
    pub fn to_markdown(&self) -> String {
        let labels = self.header.bin_edges.labels();
        let mut out = String::new();
        for task in self.tasks() {
            for metric in self.metric_names(task) {
                let _ = writeln!(out, "### {task}: {metric}\n");
                let mut head = String::from("| Method |");
                let mut rule = String::from("|---|");
                for (i, label) in labels.iter().enumerate() {
                    let _ = write!(head, " {label} (n={}) |", self.bin_n(task, i));
                    rule.push_str("---:|");
                }
                head.push_str(" Overall | Ratio |");
                rule.push_str("---:|---:|");
                let _ = writeln!(out, "{head}\n{rule}");
                for o in self.overall.iter().filter(|o| o.task == task) {
                    let mut line = format!("| {} |", o.method);
                    for i in 0..labels.len() {
                        let cell = self
                            .rows
                            .iter()
                            .find(|r| r.task == task && r.method == o.method && r.bin_index == i)
                            .and_then(|r| r.metrics.get(&metric));
                        match cell {
                            Some(v) => {
                                let _ = write!(line, " {v:.2} |");
                            }
                            None => line.push_str(" - |"),
                        }
                    }
                    let overall = o.metrics.get(&metric).map_or("-".into(), |v| format!("{v:.2}"));
                    let _ = writeln!(line, " {overall} | {:.2}x |", o.mean_ratio);
                    out.push_str(&line);
                }
                out.push('\n');
            }
        }
        let _ = writeln!(
            out,
            "Evaluated: {}, failed: {}. Compression latency {:.2} s, compression model tokens {}, endpoint latency {:.2} s, endpoint tokens {}.",
            self.evaluated,
            self.failed_count,
            self.totals.compression_latency_s,
            self.totals.llm_tokens_spent,
            self.totals.endpoint_latency_s,
            self.totals.endpoint_tokens,
        );
        if !self.failed.is_empty() {
            out.push_str("\nFailed instances:\n\n");
            for f in &self.failed {
                let _ = writeln!(out, "- {} ({}, {}): {}", f.id, f.task, f.method, f.error);
            }
        }
        out
    }

    /// Long format: one line per (task, method, bin, metric).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,method,bin,n,metric,value,mean_ratio\n");
        for r in &self.rows {
            for (k, v) in &r.metrics {
                let _ = writeln!(out, "{},{},{},{},{k},{v},{}", r.task, r.method, r.bin, r.n, r.mean_ratio);
            }
        }
        for o in &self.overall {
            for (k, v) in &o.metrics {
                let _ = writeln!(out, "{},{},overall,{},{k},{v},{}", o.task, o.method, o.n, o.mean_ratio);
            }
        }
        out
    }

    /// Line plots of bin means, one SVG per (task, metric).
    pub fn to_svg_plots(&self) -> BTreeMap<String, String> {
        let labels = self.header.bin_edges.labels();
        let mut plots = BTreeMap::new();
        for task in self.tasks() {
            for metric in self.metric_names(task) {
                let series: Vec<(Method, Vec<Option<f64>>)> = self
                    .overall
                    .iter()
                    .filter(|o| o.task == task)
                    .map(|o| {
                        let pts = (0..labels.len())
                            .map(|i| {
                                self.rows
                                    .iter()
                                    .find(|r| r.task == task && r.method == o.method && r.bin_index == i)
                                    .and_then(|r| r.metrics.get(&metric).copied())
                            })
                            .collect();
                        (o.method, pts)
                    })
                    .collect();
                plots.insert(
                    format!("{task}_{metric}.svg"),
                    line_plot(&format!("{task}: {metric}"), &labels, &series),
                );
            }
        }
        plots
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn line_plot(title: &str, labels: &[String], series: &[(Method, Vec<Option<f64>>)]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 170.0, 40.0, 50.0);
    let plot_w = w - left - right;
    let plot_h = h - top - bottom;
    let x = |i: usize| {
        if labels.len() <= 1 {
            left + plot_w / 2.0
        } else {
            left + plot_w * i as f64 / (labels.len() - 1) as f64
        }
    };
    let y = |v: f64| top + plot_h * (1.0 - v.clamp(0.0, 100.0) / 100.0);
    let mut svg = format!(
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">
<rect width="{w}" height="{h}" fill="white"/>
<text x="{left}" y="24" font-size="14">{title}</text>
<line x1="{left}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{left}" y1="{top}" x2="{left}" y2="{}" stroke="black"/>
"#,
        top + plot_h,
        left + plot_w,
        top + plot_h,
        top + plot_h
    );
    for tick in [0.0, 25.0, 50.0, 75.0, 100.0] {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#,
            left - 6.0,
            y(tick) + 4.0
        );
    }
    for (i, label) in labels.iter().enumerate() {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{label}</text>"#,
            x(i),
            top + plot_h + 20.0
        );
    }
    for (k, (method, pts)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let coords: Vec<String> = pts
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.map(|v| format!("{:.1},{:.1}", x(i), y(v))))
            .collect();
        if coords.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                coords.join(" ")
            );
        }
        for c in &coords {
            let (cx, cy) = c.split_once(',').expect("formatted pair");
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="3" fill="{color}"/>"#);
        }
        let ly = top + 16.0 * k as f64 + 8.0;
        let _ = writeln!(
            svg,
            r#"<rect x="{}" y="{}" width="12" height="3" fill="{color}"/><text x="{}" y="{}">{method}</text>"#,
            w - right + 12.0,
            ly - 4.0,
            w - right + 30.0,
            ly
        );
    }
    svg.push_str("</svg>\n");
    svg
}
