//! Per-variant metric collection and the combined evaluation report.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::exec::{perf_delta, run_trials, ExecOutcome, ExecRequest, PerfDelta, Termination, TrialSummary};
use crate::fuzz::{derive_commands, MutationPlan};
use crate::gadget::{compare_sets, extract_code_regions, GadgetSetReport, SecurityDelta};
use crate::metrics::{linked_libraries, lib_report, size_change, LibReport, SizeReport};
use crate::spec::{BenchmarkSpec, BinaryRef, Disposition, TestCommand};
use crate::verdict::CampaignSummary;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One wrapped run of an external debloating tool.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolPerfRecord {
    pub variant: String,
    pub tool_cmdline: Vec<String>,
    pub cpu_minutes: f64,
    pub peak_mb: f64,
    pub succeeded: bool,
    pub termination: Termination,
    pub output: PathBuf,
}

/// Trial statistics without the captured outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub trials: usize,
    pub counted: usize,
    pub mean_cpu_seconds: f64,
    pub stdev_cpu_seconds: f64,
    pub mean_peak_rss_bytes: f64,
    pub stdev_peak_rss_bytes: f64,
}

impl From<&TrialSummary> for WorkloadStats {
    fn from(t: &TrialSummary) -> Self {
        WorkloadStats {
            trials: t.n,
            counted: t.counted,
            mean_cpu_seconds: t.mean_cpu_seconds,
            stdev_cpu_seconds: t.stdev_cpu_seconds,
            mean_peak_rss_bytes: t.mean_peak_rss_bytes,
            stdev_peak_rss_bytes: t.stdev_peak_rss_bytes,
        }
    }
}

/// Metrics of one variant. A `None` metric could not be computed; the
/// reason is kept in `errors` under the metric's name.
#[derive(Clone, Debug, Serialize)]
pub struct VariantMetrics {
    pub label: String,
    pub size: Option<SizeReport>,
    pub libs: Option<LibReport>,
    pub workload: Option<WorkloadStats>,
    pub perf: Option<PerfDelta>,
    pub gadgets: Option<GadgetSetReport>,
    pub security: Option<SecurityDelta>,
    pub errors: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OriginalMetrics {
    pub label: String,
    pub libs: Option<Vec<String>>,
    pub workload: Option<WorkloadStats>,
    pub gadgets: Option<GadgetSetReport>,
    pub errors: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MetricsReport {
    pub spec_id: String,
    pub toolkit_version: String,
    pub generated_at: String,
    pub aggregate_libs: bool,
    pub original: OriginalMetrics,
    /// Ordered by label.
    pub variants: Vec<VariantMetrics>,
}

#[derive(Clone, Debug, Default)]
pub struct MetricsOptions {
    pub aggregate_libs: bool,
    pub workdir: Option<PathBuf>,
    /// Overrides the spec's trial count.
    pub trials: Option<u32>,
}

/// Runs the seed input of every retained feature's commands `trials` times.
/// Trial `i` of the workload sums CPU time over the commands and takes the
/// largest peak RSS.
pub fn measure_workload(
    spec: &BenchmarkSpec,
    binary: &BinaryRef,
    trials: usize,
    workdir: Option<&PathBuf>,
) -> Result<TrialSummary, String> {
    let plan = MutationPlan::new(0, 0);
    let arg0: Option<OsString> = spec.original.exe_path.file_name().map(|n| n.to_os_string());
    let mut per_command = Vec::new();
    for f in spec.features.iter().filter(|f| f.disposition == Disposition::Retain) {
        for (ci, cmd) in f.commands.iter().enumerate() {
            let seed_only = TestCommand { fuzz_count: 0, ..cmd.clone() };
            let seed = derive_commands(&seed_only, &f.name, ci, &plan)
                .map_err(|e| e.to_string())?
                .remove(0);
            let req = ExecRequest {
                exe_path: binary.exe_path.clone(),
                arg0: arg0.clone(),
                argv: seed.argv,
                stdin: seed.stdin,
                env: spec.env.clone(),
                workdir: workdir.cloned(),
                timeout_seconds: spec.timeout_seconds,
                capture_files: Vec::new(),
            };
            per_command.push(run_trials(&req, trials).map_err(|e| e.to_string())?);
        }
    }
    if per_command.is_empty() {
        return Err("no retained feature to measure".into());
    }
    let combined = (0..trials)
        .map(|i| {
            let runs: Vec<&ExecOutcome> = per_command.iter().map(|t| &t.outcomes[i]).collect();
            let termination = runs
                .iter()
                .map(|o| &o.termination)
                .find(|t| !t.is_exited())
                .cloned()
                .unwrap_or(Termination::Exited { code: 0 });
            let mut o = ExecOutcome::synthetic(termination, b"", b"");
            o.cpu_seconds = runs.iter().map(|o| o.cpu_seconds).sum();
            o.wall_seconds = runs.iter().map(|o| o.wall_seconds).sum();
            o.peak_rss_bytes = runs.iter().map(|o| o.peak_rss_bytes).max().unwrap_or(0);
            o
        })
        .collect();
    Ok(TrialSummary::from_outcomes(combined))
}

fn gadget_report(b: &BinaryRef, aggregate: bool) -> Result<GadgetSetReport, String> {
    let regions = extract_code_regions(b, aggregate).map_err(|e| e.to_string())?;
    Ok(GadgetSetReport::from_regions(&regions))
}

/// Size, libraries, performance and gadget metrics for every variant.
pub fn compute_metrics(spec: &BenchmarkSpec, options: &MetricsOptions) -> MetricsReport {
    let trials = options.trials.unwrap_or(spec.trials).max(1) as usize;
    let mut orig_errors = BTreeMap::new();
    let orig_libs = linked_libraries(&spec.original).map_err(|e| orig_errors.insert("libs".into(), e.to_string())).ok();
    let orig_trials = measure_workload(spec, &spec.original, trials, options.workdir.as_ref())
        .map_err(|e| orig_errors.insert("perf".into(), e))
        .ok();
    let orig_gadgets = gadget_report(&spec.original, options.aggregate_libs)
        .map_err(|e| orig_errors.insert("gadgets".into(), e))
        .ok();

    let mut variants: Vec<&BinaryRef> = spec.variants.iter().collect();
    variants.sort_by(|a, b| a.label.cmp(&b.label));
    let rows = variants
        .into_iter()
        .map(|v| {
            let mut errors = BTreeMap::new();
            let size = size_change(&spec.original, v, options.aggregate_libs)
                .map_err(|e| errors.insert("size".into(), e.to_string()))
                .ok();
            let libs = match (&orig_libs, linked_libraries(v)) {
                (Some(o), Ok(l)) => Some(lib_report(o.clone(), l)),
                (None, _) => {
                    errors.insert("libs".into(), "original not parseable".into());
                    None
                }
                (_, Err(e)) => {
                    errors.insert("libs".into(), e.to_string());
                    None
                }
            };
            let var_trials = measure_workload(spec, v, trials, options.workdir.as_ref())
                .map_err(|e| errors.insert("perf".into(), e))
                .ok();
            let perf = match (&orig_trials, &var_trials) {
                (Some(o), Some(t)) => perf_delta(o, t).map_err(|e| errors.insert("perf".into(), e.to_string())).ok(),
                _ => {
                    errors.entry("perf".into()).or_insert_with(|| "original not measurable".into());
                    None
                }
            };
            let gadgets = gadget_report(v, options.aggregate_libs)
                .map_err(|e| errors.insert("gadgets".into(), e))
                .ok();
            let security = match (&orig_gadgets, &gadgets) {
                (Some(o), Some(g)) => Some(compare_sets(o, g)),
                _ => {
                    errors.entry("gadgets".into()).or_insert_with(|| "original not parseable".into());
                    None
                }
            };
            VariantMetrics {
                label: v.label.clone(),
                size,
                libs,
                workload: var_trials.as_ref().map(WorkloadStats::from),
                perf,
                gadgets,
                security,
                errors,
            }
        })
        .collect();

    MetricsReport {
        spec_id: spec.id.clone(),
        toolkit_version: TOOLKIT_VERSION.into(),
        generated_at: chrono::Utc::now().to_rfc3339(),
        aggregate_libs: options.aggregate_libs,
        original: OriginalMetrics {
            label: spec.original.label.clone(),
            libs: orig_libs,
            workload: orig_trials.as_ref().map(WorkloadStats::from),
            gadgets: orig_gadgets,
            errors: orig_errors,
        },
        variants: rows,
    }
}

/// Rounds to the one decimal place shown in tables.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

pub fn fmt1(x: f64) -> String {
    format!("{:.1}", round1(x))
}

/// One table row: the twelve evaluation metrics of a variant.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRow {
    pub variant: String,
    pub tool_cpu_minutes: Option<f64>,
    pub tool_peak_mb: Option<f64>,
    pub runtime_pct: Option<f64>,
    pub memory_pct: Option<f64>,
    pub size_pct: Option<f64>,
    pub libraries: Option<usize>,
    pub libraries_introduced: Option<usize>,
    pub libraries_eliminated: Option<usize>,
    pub expressivity_delta: Option<i64>,
    pub quality_delta: Option<f64>,
    pub locality_pct: Option<f64>,
    pub special_types_delta: Option<i64>,
    pub syscall_event: Option<String>,
    pub executes_retained: Option<bool>,
    pub errors_or_crashes: Option<bool>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub spec_id: String,
    pub toolkit_version: String,
    pub generated_at: String,
    pub fuzz_seed: Option<u64>,
    /// Ordered by variant label.
    pub rows: Vec<EvaluationRow>,
    pub campaign: Option<CampaignSummary>,
    pub security: BTreeMap<String, serde_json::Value>,
}

/// Campaign data as stored in `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignFile {
    pub spec_id: String,
    pub toolkit_version: String,
    pub generated_at: String,
    pub seed: u64,
    pub summary: CampaignSummary,
}

fn row_mut<'a>(rows: &'a mut BTreeMap<String, EvaluationRow>, label: &str) -> &'a mut EvaluationRow {
    rows.entry(label.to_string()).or_insert_with(|| EvaluationRow { variant: label.to_string(), ..Default::default() })
}

/// Merges whatever is available into one report. Values are rounded as
/// they are rendered.
pub fn build_evaluation(
    spec_id: &str,
    campaign: Option<&CampaignFile>,
    metrics: Option<&serde_json::Value>,
    tools: &[ToolPerfRecord],
) -> EvaluationReport {
    let mut rows: BTreeMap<String, EvaluationRow> = BTreeMap::new();
    let mut security = BTreeMap::new();
    for t in tools {
        // the latest record for a label wins
        let r = row_mut(&mut rows, &t.variant);
        r.tool_cpu_minutes = Some(round1(t.cpu_minutes));
        r.tool_peak_mb = Some(round1(t.peak_mb));
    }
    if let Some(m) = metrics {
        for v in m["variants"].as_array().into_iter().flatten() {
            let Some(label) = v["label"].as_str() else { continue };
            let r = row_mut(&mut rows, label);
            let f = |x: &serde_json::Value| x.as_f64().map(round1);
            r.size_pct = f(&v["size"]["pct"]);
            r.runtime_pct = f(&v["perf"]["runtime_pct"]);
            r.memory_pct = f(&v["perf"]["memory_pct"]);
            if let Some(l) = v["libs"].as_object() {
                r.libraries = l["variant_needed"].as_array().map(|a| a.len());
                r.libraries_introduced = l["introduced"].as_array().map(|a| a.len());
                r.libraries_eliminated = l["eliminated"].as_array().map(|a| a.len());
            }
            let s = &v["security"];
            if s.is_object() {
                r.expressivity_delta = s["expressivity_delta"].as_i64();
                r.quality_delta = f(&s["quality_delta"]);
                r.locality_pct = f(&s["locality_pct"]);
                r.special_types_delta = s["sp_types_delta"].as_i64();
                r.syscall_event = s["syscall_event"].as_str().map(String::from);
                security.insert(label.to_string(), s.clone());
            }
        }
    }
    if let Some(c) = campaign {
        for (label, v) in &c.summary.per_variant {
            let r = row_mut(&mut rows, label);
            r.executes_retained = Some(v.retained_ok);
            r.errors_or_crashes = Some(v.error_or_crash);
        }
    }
    EvaluationReport {
        spec_id: spec_id.to_string(),
        toolkit_version: TOOLKIT_VERSION.into(),
        generated_at: chrono::Utc::now().to_rfc3339(),
        fuzz_seed: campaign.map(|c| c.seed),
        rows: rows.into_values().collect(),
        campaign: campaign.map(|c| c.summary.clone()),
        security,
    }
}

fn cell<T>(v: &Option<T>, f: impl Fn(&T) -> String) -> String {
    v.as_ref().map(f).unwrap_or_else(|| "N/A".into())
}

fn yes_no(b: &bool) -> String {
    if *b { "yes" } else { "no" }.into()
}

fn libs_cell(r: &EvaluationRow) -> String {
    match (r.libraries, r.libraries_introduced, r.libraries_eliminated) {
        (Some(n), Some(0), Some(0)) => n.to_string(),
        (Some(n), Some(i), Some(e)) => format!("{n} (+{i}/-{e})"),
        _ => "N/A".into(),
    }
}

fn sp_cell(r: &EvaluationRow) -> String {
    let base = cell(&r.special_types_delta, |d| d.to_string());
    match r.syscall_event.as_deref() {
        Some("eliminated") => format!("{base} (syscall eliminated)"),
        Some("introduced") => format!("{base} (syscall introduced)"),
        _ => base,
    }
}

pub fn render_markdown(report: &EvaluationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Evaluation of {}\n", report.spec_id);
    let _ = writeln!(out, "- toolkit version: {}", report.toolkit_version);
    let _ = writeln!(out, "- generated: {}", report.generated_at);
    if let Some(seed) = report.fuzz_seed {
        let _ = writeln!(out, "- fuzz seed: {seed}");
    }
    out.push('\n');
    out.push_str(
        "| Variant | Tool CPU (min) | Tool peak (MB) | Runtime % | Peak memory % | Size % | Libraries \
         | Expressivity Δ | Quality Δ | Locality % | Special types Δ | Executes retained | Errors/crashes |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let f1 = |x: &f64| fmt1(*x);
        let cols = [
            r.variant.clone(),
            cell(&r.tool_cpu_minutes, f1),
            cell(&r.tool_peak_mb, f1),
            cell(&r.runtime_pct, f1),
            cell(&r.memory_pct, f1),
            cell(&r.size_pct, f1),
            libs_cell(r),
            cell(&r.expressivity_delta, |d| d.to_string()),
            cell(&r.quality_delta, f1),
            cell(&r.locality_pct, f1),
            sp_cell(r),
            cell(&r.executes_retained, yes_no),
            cell(&r.errors_or_crashes, yes_no),
        ];
        let _ = writeln!(out, "| {} |", cols.join(" | "));
    }
    if let Some(c) = &report.campaign {
        let _ = writeln!(out, "\n## Differential testing\n");
        let _ = writeln!(
            out,
            "- variants passing: {} of {}\n- variants with errors or crashes: {} ({}%)\n\
             - variants with an unremoved feature: {} ({}% of the rest)\n- crashes on removed features: {}\n\
             - inputs indicting the original: {}\n- inputs executed: {}, mutants skipped: {}\n",
            c.passed,
            c.variants,
            c.variants_with_error_or_crash.count,
            fmt1(100.0 * c.variants_with_error_or_crash.fraction),
            c.variants_with_unremoved_feature.count,
            fmt1(100.0 * c.variants_with_unremoved_feature.fraction),
            c.crash_on_removed,
            c.original_crashes,
            c.inputs_executed,
            c.mutants_skipped,
        );
        out.push_str("| Variant | Passed | Verdicts |\n|---|---|---|\n");
        for (label, v) in &c.per_variant {
            let counts: Vec<String> = v.counts.iter().map(|(k, n)| format!("{k} {n}")).collect();
            let _ = writeln!(out, "| {label} | {} | {} |", yes_no(&v.passed), counts.join(", "));
        }
    }
    out
}
