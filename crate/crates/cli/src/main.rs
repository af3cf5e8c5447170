use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use codepage::budget::{ratio_visual, target_ratio_search};
use codepage::context::{collect, FieldMapping, InstanceReader, TaskKind};
use codepage::harness::{
    compress_context, overhead_sweep, run_benchmark, BenchmarkRun, ContextPayload, EvalRecord,
    Method, RunConfig, RunHeader, StratifiedReport,
};
use codepage::render::Renderer;

#[derive(Parser)]
#[command(name = "codepage", version, about = "Render and compress long code contexts for model evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArg {
    /// Run config (TOML). Defaults apply when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> Result<RunConfig> {
        match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(RunConfig::default()),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a context file into page images.
    Render {
        #[command(flatten)]
        config: ConfigArg,
        input: PathBuf,
        /// Directory for page_NNNN.png and render.json.
        #[arg(long, short)]
        out: PathBuf,
        /// Search glyph size for this visual compression ratio.
        #[arg(long)]
        target_ratio: Option<f64>,
        #[arg(long)]
        glyph_px: Option<u32>,
    },
    /// Compress a context file with any method.
    Compress {
        #[command(flatten)]
        config: ConfigArg,
        input: PathBuf,
        #[arg(long, short)]
        method: String,
        #[arg(long, default_value = "")]
        instruction: String,
        #[arg(long)]
        target_ratio: Option<f64>,
        /// Output file for text methods, directory for the visual method.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run a benchmark file end to end and write records and reports.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        /// JSONL instances.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_task)]
        task: TaskKind,
        #[arg(long, short, value_delimiter = ',', required = true)]
        method: Vec<String>,
        #[arg(long, short)]
        out: PathBuf,
        /// Split the context at its last top-level definition (file completion).
        #[arg(long)]
        split_target_function: bool,
        /// Use only the first N instances.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Re-aggregate stored records into tables and plots.
    Report {
        /// Directory written by `eval`.
        dir: PathBuf,
        /// Bin edges to use instead of the stored ones.
        #[arg(long, value_delimiter = ',')]
        bins: Option<Vec<usize>>,
    },
    /// Measure compression-stage latency and model token use.
    Overhead {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, value_delimiter = ',', default_value = "8000,16000,32000,64000,128000")]
        lengths: Vec<usize>,
        #[arg(long, short, value_delimiter = ',', default_value = "visual_render,random_line")]
        method: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the table as JSON here as well.
        #[arg(long)]
        json: Option<PathBuf>,
    },
}

fn parse_task(s: &str) -> Result<TaskKind, String> {
    TaskKind::ALL
        .into_iter()
        .find(|t| t.as_str() == s)
        .ok_or_else(|| format!("unknown task {s:?}"))
}

fn parse_methods(names: &[String]) -> Result<Vec<Method>> {
    names.iter().map(|m| Ok(m.parse::<Method>()?)).collect()
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Render {
            config,
            input,
            out,
            target_ratio,
            glyph_px,
        } => {
            let cfg = config.load()?;
            let settings = cfg.settings()?;
            let text = read_text(&input)?;
            let tokens = settings.tokenizer.count(&text);
            let mut render_cfg = settings.render.clone();
            if let Some(g) = glyph_px {
                render_cfg.glyph_px = g;
            }
            let mut infeasible = false;
            if let Some(t) = target_ratio {
                let s = target_ratio_search(
                    &text,
                    tokens,
                    &render_cfg,
                    &settings.encoder,
                    t,
                    settings.params.ratio_tolerance,
                )?;
                infeasible = s.infeasible;
                render_cfg = s.config;
            }
            let rendered = Renderer::new(&render_cfg)?.render(&text, &settings.encoder)?;
            rendered.write_pages(&out)?;
            let ratio = ratio_visual(tokens.max(1), &rendered, &settings.encoder)?;
            let summary = serde_json::json!({
                "ratio": ratio,
                "infeasible": infeasible,
                "pages": rendered.pages,
                "page_sha256": rendered.pages.iter().map(|p| p.sha256()).collect::<Vec<_>>(),
                "chars_per_line": rendered.chars_per_line,
                "rows_per_column": rendered.rows_per_column,
                "substitutions": rendered.substitutions,
                "config": rendered.config,
                "font_sha256": rendered.font_sha256,
            });
            write_file(&out.join("render.json"), serde_json::to_string_pretty(&summary)?)?;
            println!(
                "{} pages, {:.1} visual tokens, ratio {:.3}{}",
                rendered.page_count(),
                ratio.payload,
                ratio.ratio,
                if infeasible { " (target not reachable)" } else { "" }
            );
        }
        Command::Compress {
            config,
            input,
            method,
            instruction,
            target_ratio,
            out,
        } => {
            let cfg = config.load()?;
            let mut settings = cfg.settings()?;
            if target_ratio.is_some() {
                settings.params.target_ratio = target_ratio;
            }
            let clients = cfg.clients()?;
            let method: Method = method.parse()?;
            let text = read_text(&input)?;
            let (compressed, rendered) = compress_context(&text, &instruction, method, &settings, &clients)?;
            match (&compressed.payload, rendered) {
                (ContextPayload::Text(t), _) => write_file(&out, t)?,
                (ContextPayload::Pages(_), Some(r)) => {
                    r.write_pages(&out)?;
                }
                (ContextPayload::Pages(_), None) => bail!("visual output without rendered pages"),
            }
            let summary = serde_json::json!({
                "method": method,
                "ratio": compressed.ratio,
                "accounting": compressed.accounting,
                "infeasible": compressed.infeasible,
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Eval {
            config,
            data,
            task,
            method,
            out,
            split_target_function,
            limit,
        } => {
            let cfg = config.load()?;
            let settings = cfg.settings()?;
            let clients = cfg.clients()?;
            let methods = parse_methods(&method)?;
            let mut mapping = FieldMapping::default_for(task);
            mapping.split_target_function = split_target_function;
            let reader = InstanceReader::open(&data, mapping, settings.tokenizer.clone())?
                .with_min_context_tokens(cfg.min_context_tokens)
                .with_detector(settings.detector.clone());
            let (mut instances, skipped) = collect(reader)?;
            for s in &skipped {
                log::warn!("skipped line {}: {:?}", s.line, s.reason);
            }
            if let Some(n) = limit {
                instances.truncate(n);
            }
            log::info!("{} instances, {} skipped", instances.len(), skipped.len());

            fs::create_dir_all(&out)?;
            let mut all_records = Vec::new();
            let mut header = None;
            for m in methods {
                let mut s = settings.clone();
                if let Some(dir) = &settings.page_dir {
                    s.page_dir = Some(dir.join(m.as_str()));
                }
                let BenchmarkRun { records, report } = run_benchmark(&instances, m, &s, &clients)?;
                log::info!("{m}: {} evaluated, {} failed", report.evaluated, report.failed_count);
                header.get_or_insert(report.header);
                all_records.extend(records);
            }
            let header = header.expect("at least one method");
            write_outputs(&out, &all_records, header)?;
        }
        Command::Report { dir, bins } => {
            let mut header: RunHeader =
                serde_json::from_str(&read_text(&dir.join("header.json"))?).context("parsing header.json")?;
            if let Some(b) = bins {
                header.bin_edges = codepage::harness::BinEdges::new(b)?;
            }
            let records = read_records(&dir.join("records.jsonl"))?;
            let report = StratifiedReport::aggregate(&records, header);
            write_reports(&dir, &report)?;
            print!("{}", report.to_markdown());
        }
        Command::Overhead {
            config,
            lengths,
            method,
            seed,
            json,
        } => {
            let cfg = config.load()?;
            let settings = cfg.settings()?;
            let clients = cfg.clients()?;
            let table = overhead_sweep(&lengths, &parse_methods(&method)?, seed, &settings, &clients)?;
            print!("{}", table.to_markdown());
            if let Some(path) = json {
                write_file(&path, serde_json::to_string_pretty(&table)?)?;
            }
        }
    }
    Ok(())
}

fn read_records(path: &Path) -> Result<Vec<EvalRecord>> {
    read_text(path)?
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn write_outputs(out: &Path, records: &[EvalRecord], header: RunHeader) -> Result<()> {
    let mut f = fs::File::create(out.join("records.jsonl"))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r)?)?;
    }
    write_file(&out.join("header.json"), serde_json::to_string_pretty(&header)?)?;
    let report = StratifiedReport::aggregate(records, header);
    write_reports(out, &report)?;
    print!("{}", report.to_markdown());
    Ok(())
}

fn write_reports(out: &Path, report: &StratifiedReport) -> Result<()> {
    write_file(&out.join("report.json"), serde_json::to_string_pretty(report)?)?;
    write_file(&out.join("report.md"), report.to_markdown())?;
    write_file(&out.join("report.csv"), report.to_csv())?;
    for (name, svg) in report.to_svg_plots() {
        write_file(&out.join("plots").join(name), svg)?;
    }
    Ok(())
}
