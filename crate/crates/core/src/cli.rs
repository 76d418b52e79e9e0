//! Command-line driver.
//!
//! Exit codes: 0 success (or every variant passed), 1 anomalies or warnings,
//! 2 usage, IO or campaign errors.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::SystemTime;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::exec::{run_once, ExecRequest, Termination};
use crate::fuzz::MutationPlan;
use crate::gadget::{compare_sets, extract_code_regions, GadgetSetReport};
use crate::report::{build_evaluation, compute_metrics, render_markdown, CampaignFile, MetricsOptions, ToolPerfRecord, TOOLKIT_VERSION};
use crate::spec::{load_spec, validate_spec_against_binaries, winnow_to_aggressive, BinaryRef};
use crate::verdict::{run_campaign, Budget, CampaignOptions};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANOMALY: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "dvkit", version, about = "Differential testing and metrics for debloated programs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a spec file and the binaries it names.
    Validate {
        #[arg(long)]
        spec: PathBuf,
        /// Print the aggressive use case derived from the anchor feature.
        #[arg(long)]
        aggressive: bool,
    },
    /// Run a differential testing campaign.
    Differ(DifferArgs),
    /// Measure size, libraries, performance and gadget metrics.
    Metrics(MetricsArgs),
    /// Gadget analysis of individual binaries.
    #[command(subcommand)]
    Gadgets(GadgetsCommand),
    /// Run a debloating tool under resource accounting.
    ToolWrap(ToolWrapArgs),
    /// Rebuild report.md from the files in an output directory.
    Report {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DifferArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: logical CPU count).
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub max_seconds: Option<f64>,
    #[arg(long)]
    pub max_mutants: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory copied into each sandbox.
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    /// Test the aggressive use case instead of the full spec.
    #[arg(long)]
    pub aggressive: bool,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Count listed libraries in sizes and gadget sets.
    #[arg(long)]
    pub aggregate_libs: bool,
    #[arg(long)]
    pub workdir: Option<PathBuf>,
    /// Trials per measured command (default: the spec's).
    #[arg(long)]
    pub trials: Option<u32>,
}

#[derive(Debug, Subcommand)]
pub enum GadgetsCommand {
    /// Summarize the gadgets of one binary.
    Scan {
        binary: PathBuf,
        #[arg(long = "lib")]
        libs: Vec<PathBuf>,
        #[arg(long)]
        aggregate_libs: bool,
        /// Also list every gadget.
        #[arg(long)]
        list: bool,
    },
    /// Security deltas between an original and a variant.
    Compare {
        original: PathBuf,
        variant: PathBuf,
        #[arg(long)]
        aggregate_libs: bool,
        #[arg(long = "original-lib")]
        original_libs: Vec<PathBuf>,
        #[arg(long = "variant-lib")]
        variant_libs: Vec<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct ToolWrapArgs {
    #[arg(long)]
    pub spec: PathBuf,
    /// Path the tool writes the variant to.
    #[arg(long)]
    pub output: PathBuf,
    /// Label under which the variant is registered.
    #[arg(long)]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Give up on the tool after this long (default 48 hours).
    #[arg(long, default_value_t = 172800.0)]
    pub max_seconds: f64,
    /// Tool command line; DV_ORIGINAL and DV_TOOL_OUTPUT are set for it.
    #[arg(last = true, required = true)]
    pub tool: Vec<String>,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn read_json_opt<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    match std::fs::read(path) {
        Ok(bytes) => Ok(Some(
            serde_json::from_slice(&bytes).with_context(|| format!("parsing {}", path.display()))?,
        )),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

fn read_tool_records(out: &Path) -> Result<Vec<ToolPerfRecord>> {
    let path = out.join("tool_perf.jsonl");
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e).with_context(|| format!("reading {}", path.display())),
    };
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).with_context(|| format!("parsing {}", path.display())))
        .collect()
}

/// Regenerates `report.md` and `report.json` from whatever `out` holds.
pub fn write_report(out: &Path, spec_id: Option<&str>) -> Result<()> {
    let campaign: Option<CampaignFile> = read_json_opt(&out.join("summary.json"))?;
    let metrics: Option<serde_json::Value> = read_json_opt(&out.join("metrics.json"))?;
    let tools = read_tool_records(out)?;
    let id = spec_id
        .map(String::from)
        .or_else(|| campaign.as_ref().map(|c| c.spec_id.clone()))
        .or_else(|| metrics.as_ref().and_then(|m| m["spec_id"].as_str().map(String::from)))
        .unwrap_or_else(|| "unknown".into());
    let report = build_evaluation(&id, campaign.as_ref(), metrics.as_ref(), &tools);
    write_file(&out.join("report.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_file(&out.join("report.md"), render_markdown(&report).as_bytes())
}

fn create_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn cmd_validate(spec: &Path, aggressive: bool) -> Result<i32> {
    let spec = load_spec(spec)?;
    if aggressive {
        println!("{}", winnow_to_aggressive(&spec)?.to_json());
    }
    let warnings = validate_spec_against_binaries(&spec);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if warnings.is_empty() {
        eprintln!("{}: ok", spec.id);
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_ANOMALY)
    }
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn cmd_differ(a: &DifferArgs) -> Result<i32> {
    let mut spec = load_spec(&a.spec)?;
    if a.aggressive {
        spec = winnow_to_aggressive(&spec)?;
    }
    create_out(&a.out)?;
    let plan = MutationPlan::new(a.seed, 0);
    let budget = Budget { max_seconds: a.max_seconds, max_mutants: a.max_mutants };
    let options = CampaignOptions { jobs: a.jobs.unwrap_or_else(default_jobs), workdir: a.workdir.clone() };
    let report = run_campaign(&spec, &plan, budget, &options)?;

    write_file(&a.out.join("verdicts.jsonl"), report.to_jsonl().as_bytes())?;
    let file = CampaignFile {
        spec_id: spec.id.clone(),
        toolkit_version: TOOLKIT_VERSION.into(),
        generated_at: chrono::Utc::now().to_rfc3339(),
        seed: a.seed,
        summary: report.summary.clone(),
    };
    write_file(&a.out.join("summary.json"), serde_json::to_string_pretty(&file)?.as_bytes())?;
    write_report(&a.out, Some(&spec.id))?;
    let s = &report.summary;
    eprintln!("{}: {} of {} variants passed", spec.id, s.passed, s.variants);
    Ok(if report.all_passed() { EXIT_OK } else { EXIT_ANOMALY })
}

fn cmd_metrics(a: &MetricsArgs) -> Result<i32> {
    let spec = load_spec(&a.spec)?;
    create_out(&a.out)?;
    let options = MetricsOptions { aggregate_libs: a.aggregate_libs, workdir: a.workdir.clone(), trials: a.trials };
    let report = compute_metrics(&spec, &options);
    write_file(&a.out.join("metrics.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    write_report(&a.out, Some(&spec.id))?;
    Ok(EXIT_OK)
}

fn binary_ref(path: &Path, libs: &[PathBuf]) -> BinaryRef {
    BinaryRef { label: path.display().to_string(), exe_path: path.to_path_buf(), lib_paths: libs.to_vec(), statically_linked: false }
}

fn cmd_gadgets(c: &GadgetsCommand) -> Result<i32> {
    let report = |b: &BinaryRef, aggregate: bool| -> Result<GadgetSetReport> {
        Ok(GadgetSetReport::from_regions(&extract_code_regions(b, aggregate)?))
    };
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    match c {
        GadgetsCommand::Scan { binary, libs, aggregate_libs, list } => {
            let r = report(&binary_ref(binary, libs), *aggregate_libs)?;
            let mut value = serde_json::to_value(&r)?;
            if *list {
                value["gadgets"] = serde_json::to_value(&r.gadgets)?;
            }
            writeln!(w, "{}", serde_json::to_string_pretty(&value)?)?;
        }
        GadgetsCommand::Compare { original, variant, aggregate_libs, original_libs, variant_libs } => {
            let o = report(&binary_ref(original, original_libs), *aggregate_libs)?;
            let v = report(&binary_ref(variant, variant_libs), *aggregate_libs)?;
            writeln!(w, "{}", serde_json::to_string_pretty(&compare_sets(&o, &v))?)?;
        }
    }
    Ok(EXIT_OK)
}

fn modified(path: &Path) -> Option<SystemTime> {
    std::fs::metadata(path).and_then(|m| m.modified()).ok()
}

fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

fn cmd_tool_wrap(a: &ToolWrapArgs) -> Result<i32> {
    let mut spec = load_spec(&a.spec)?;
    create_out(&a.out)?;
    let output = absolute(&a.output)?;
    let before = modified(&output);

    let mut req = ExecRequest::new(&a.tool[0]).args(a.tool[1..].iter().map(String::as_str));
    req.timeout_seconds = a.max_seconds;
    if let Some(path) = std::env::var_os("PATH") {
        req.env.insert("PATH".into(), path.to_string_lossy().into_owned());
    }
    req.env.insert("DV_ORIGINAL".into(), absolute(&spec.original.exe_path)?.display().to_string());
    req.env.insert("DV_TOOL_OUTPUT".into(), output.display().to_string());
    if !a.tool[0].contains('/') {
        if let Some(found) = find_on_path(&a.tool[0]) {
            req.exe_path = found;
        }
    }
    let outcome = run_once(&req)?;

    let after = modified(&output);
    let produced = after.is_some() && after != before;
    let succeeded = matches!(outcome.termination, Termination::Exited { code: 0 }) && produced;
    let record = ToolPerfRecord {
        variant: a.label.clone(),
        tool_cmdline: a.tool.clone(),
        cpu_minutes: outcome.cpu_seconds / 60.0,
        peak_mb: outcome.peak_rss_bytes as f64 / (1024.0 * 1024.0),
        succeeded,
        termination: outcome.termination.clone(),
        output: output.clone(),
    };
    let line = serde_json::to_string(&record)?;
    let log = a.out.join("tool_perf.jsonl");
    let mut f = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&log)
        .with_context(|| format!("opening {}", log.display()))?;
    writeln!(f, "{line}")?;
    println!("{line}");

    if succeeded {
        let variant = BinaryRef::new(a.label.clone(), output);
        match spec.variants.iter_mut().find(|v| v.label == a.label) {
            Some(v) => *v = variant,
            None => spec.variants.push(variant),
        }
        write_file(&a.out.join("spec.registered.json"), spec.to_json().as_bytes())?;
    }
    write_report(&a.out, Some(&spec.id))?;
    Ok(if succeeded { EXIT_OK } else { EXIT_ANOMALY })
}

fn find_on_path(name: &str) -> Option<PathBuf> {
    let path = std::env::var_os("PATH")?;
    std::env::split_paths(&path).map(|d| d.join(name)).find(|p| p.is_file())
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Validate { spec, aggressive } => cmd_validate(spec, *aggressive),
        Command::Differ(a) => cmd_differ(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Gadgets(c) => cmd_gadgets(c),
        Command::ToolWrap(a) => cmd_tool_wrap(a),
        Command::Report { out, spec } => {
            let id = match spec {
                Some(p) => Some(load_spec(p)?.id),
                None => None,
            };
            if !out.is_dir() {
                bail!("{} is not a directory", out.display());
            }
            write_report(out, id.as_deref())?;
            Ok(EXIT_OK)
        }
    }
}

/// Parses `args`, runs the command and maps errors to exit code 2.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
