//! Differential verdicts: retained features must behave like the original,
//! debloated features must not.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::{compare, ComparatorConfig, CompareReport};
use crate::exec::{run_once, ExecError, ExecOutcome, ExecRequest, Termination};
use crate::fuzz::{derive_commands, DeriveError, DerivedInput, MutationPlan};
use crate::spec::{BenchmarkSpec, Disposition};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Verdict {
    ExpectedMatch,
    ExpectedDifference,
    UnexpectedDifference,
    UnexpectedMatch,
    VariantCrash,
    OriginalCrash,
    VariantTimeout,
    CrashOnRemoved,
}

impl Verdict {
    pub const ALL: [Verdict; 8] = [
        Verdict::ExpectedMatch,
        Verdict::ExpectedDifference,
        Verdict::UnexpectedDifference,
        Verdict::UnexpectedMatch,
        Verdict::VariantCrash,
        Verdict::OriginalCrash,
        Verdict::VariantTimeout,
        Verdict::CrashOnRemoved,
    ];

    /// Verdicts that make a variant fail.
    pub fn is_anomaly(self) -> bool {
        matches!(
            self,
            Verdict::UnexpectedDifference | Verdict::UnexpectedMatch | Verdict::VariantCrash | Verdict::VariantTimeout
        )
    }

    /// Broken behaviour as opposed to a feature left in place.
    pub fn is_error_or_crash(self) -> bool {
        matches!(self, Verdict::UnexpectedDifference | Verdict::VariantCrash | Verdict::VariantTimeout)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// The decision table. A spawn failure of the original counts as an
/// original crash.
pub fn classify(disposition: Disposition, original: &ExecOutcome, variant: &ExecOutcome, report: &CompareReport) -> Verdict {
    let orig = &original.termination;
    let var = &variant.termination;
    if orig.is_signaled() || matches!(orig, Termination::SpawnFailed { .. }) {
        return Verdict::OriginalCrash;
    }
    if var.is_signaled() {
        return match disposition {
            Disposition::Retain => Verdict::VariantCrash,
            Disposition::Debloat => Verdict::CrashOnRemoved,
        };
    }
    if var.is_timed_out() && !orig.is_timed_out() {
        return Verdict::VariantTimeout;
    }
    match (disposition, report.all_matched) {
        (Disposition::Retain, true) => Verdict::ExpectedMatch,
        (Disposition::Retain, false) => Verdict::UnexpectedDifference,
        (Disposition::Debloat, true) => Verdict::UnexpectedMatch,
        (Disposition::Debloat, false) => Verdict::ExpectedDifference,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputUsed {
    #[serde(with = "b64_list")]
    pub argv: Vec<Vec<u8>>,
    #[serde(with = "crate::b64")]
    pub stdin: Vec<u8>,
}

mod b64_list {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(items: &[Vec<u8>], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(items.iter().map(|b| STANDARD.encode(b)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<u8>>, D::Error> {
        Vec::<String>::deserialize(d)?
            .into_iter()
            .map(|s| STANDARD.decode(s.as_bytes()).map_err(serde::de::Error::custom))
            .collect()
    }
}

/// One verdict line of the report. `argv` and `stdin` are base64.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict {
    pub variant: String,
    pub feature: String,
    pub command_index: usize,
    pub mutant_index: Option<usize>,
    pub disposition: Disposition,
    pub value: Verdict,
    pub original_termination: Termination,
    pub variant_termination: Termination,
    pub evidence: CompareReport,
    pub input_used: InputUsed,
    pub is_fuzzed: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountFraction {
    pub count: usize,
    pub fraction: f64,
}

impl CountFraction {
    fn new(count: usize, of: usize) -> Self {
        CountFraction { count, fraction: if of == 0 { 0.0 } else { count as f64 / of as f64 } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub passed: bool,
    /// Every retained-feature input matched (or indicted the original).
    pub retained_ok: bool,
    pub error_or_crash: bool,
    pub unremoved_feature: bool,
    pub counts: BTreeMap<Verdict, usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub variants: usize,
    pub variants_with_error_or_crash: CountFraction,
    /// Fraction taken over the variants without errors or crashes.
    pub variants_with_unremoved_feature: CountFraction,
    pub passed: usize,
    pub crash_on_removed: usize,
    pub original_crashes: usize,
    pub inputs_executed: usize,
    pub mutants_skipped: usize,
    pub per_variant: BTreeMap<String, VariantSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub spec_id: String,
    pub per_variant: BTreeMap<String, Vec<TestVerdict>>,
    pub summary: CampaignSummary,
}

impl CampaignReport {
    /// Assembles a report from verdicts, computing the summary.
    pub fn from_verdicts(
        spec_id: &str,
        labels: &[String],
        verdicts: Vec<TestVerdict>,
        inputs_executed: usize,
        mutants_skipped: usize,
    ) -> Self {
        let mut per_variant: BTreeMap<String, Vec<TestVerdict>> =
            labels.iter().map(|l| (l.clone(), Vec::new())).collect();
        for v in verdicts {
            per_variant.entry(v.variant.clone()).or_default().push(v);
        }
        let summary = summarize(&per_variant, inputs_executed, mutants_skipped);
        CampaignReport { spec_id: spec_id.to_string(), per_variant, summary }
    }

    pub fn verdicts(&self) -> impl Iterator<Item = &TestVerdict> {
        self.per_variant.values().flatten()
    }

    pub fn all_passed(&self) -> bool {
        self.summary.passed == self.summary.variants
    }

    /// One JSON object per line, in canonical order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for v in self.verdicts() {
            out.push_str(&serde_json::to_string(v).expect("verdict serializes"));
            out.push('\n');
        }
        out
    }
}

fn summarize(per_variant: &BTreeMap<String, Vec<TestVerdict>>, inputs_executed: usize, mutants_skipped: usize) -> CampaignSummary {
    let mut rows = BTreeMap::new();
    let mut crash_on_removed = 0;
    let mut original_crashes = 0;
    for (label, verdicts) in per_variant {
        let mut counts = BTreeMap::new();
        for v in verdicts {
            *counts.entry(v.value).or_insert(0) += 1;
        }
        crash_on_removed += counts.get(&Verdict::CrashOnRemoved).copied().unwrap_or(0);
        original_crashes += counts.get(&Verdict::OriginalCrash).copied().unwrap_or(0);
        let error_or_crash = counts.keys().any(|v| v.is_error_or_crash());
        let unremoved_feature = !error_or_crash && counts.contains_key(&Verdict::UnexpectedMatch);
        let passed = !counts.keys().any(|v| v.is_anomaly());
        let retained_ok = verdicts
            .iter()
            .filter(|v| v.disposition == Disposition::Retain)
            .all(|v| matches!(v.value, Verdict::ExpectedMatch | Verdict::OriginalCrash));
        rows.insert(label.clone(), VariantSummary { passed, retained_ok, error_or_crash, unremoved_feature, counts });
    }
    let n = rows.len();
    let broken = rows.values().filter(|r| r.error_or_crash).count();
    let unremoved = rows.values().filter(|r| r.unremoved_feature).count();
    CampaignSummary {
        variants: n,
        variants_with_error_or_crash: CountFraction::new(broken, n),
        variants_with_unremoved_feature: CountFraction::new(unremoved, n - broken),
        passed: rows.values().filter(|r| r.passed).count(),
        crash_on_removed,
        original_crashes,
        inputs_executed,
        mutants_skipped,
        per_variant: rows,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Budget {
    pub max_seconds: Option<f64>,
    pub max_mutants: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct CampaignOptions {
    pub jobs: usize,
    /// Copied into every sandbox before each run.
    pub workdir: Option<PathBuf>,
}

impl Default for CampaignOptions {
    fn default() -> Self {
        CampaignOptions { jobs: 1, workdir: None }
    }
}

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("campaign aborted: {0}")]
    Aborted(String),
    #[error("feature {feature:?} command {command}: {source}")]
    Derive {
        feature: String,
        command: usize,
        #[source]
        source: DeriveError,
    },
    #[error(transparent)]
    Exec(#[from] ExecError),
}

struct Task {
    feature: usize,
    command: usize,
    input: DerivedInput,
}

struct TaskResult {
    task: usize,
    original: ExecOutcome,
    variants: Vec<ExecOutcome>,
}

fn file_paths(pipeline: &[ComparatorConfig], files: &[String]) -> Vec<String> {
    let mut out: Vec<String> = files.to_vec();
    for c in pipeline {
        if let ComparatorConfig::FileDigest { path } = c {
            if !out.contains(path) {
                out.push(path.clone());
            }
        }
    }
    out
}

fn execute(req: &ExecRequest) -> Result<ExecOutcome, CampaignError> {
    match run_once(req) {
        Ok(o) => Ok(o),
        Err(ExecError::Spawn { exe, source }) => Ok(ExecOutcome::synthetic(
            Termination::SpawnFailed { message: format!("{exe}: {source}") },
            b"",
            b"",
        )),
        Err(e) => Err(e.into()),
    }
}

/// Runs every derived input against the original and each variant.
///
/// Seed inputs always run. Mutants beyond `budget.max_mutants` (in
/// canonical order) are skipped, and once `budget.max_seconds` has elapsed
/// no further mutant is started.
pub fn run_campaign(
    spec: &BenchmarkSpec,
    plan: &MutationPlan,
    budget: Budget,
    options: &CampaignOptions,
) -> Result<CampaignReport, CampaignError> {
    let mut seeds = Vec::new();
    let mut mutants = Vec::new();
    let mut skipped = 0;
    for (fi, feature) in spec.features.iter().enumerate() {
        for (ci, cmd) in feature.commands.iter().enumerate() {
            let inputs = derive_commands(cmd, &feature.name, ci, plan).map_err(|source| CampaignError::Derive {
                feature: feature.name.clone(),
                command: ci,
                source,
            })?;
            for input in inputs {
                if input.argv.iter().any(|a| a.contains(&0)) {
                    // argv cannot carry NUL bytes
                    if input.mutant_index.is_none() {
                        return Err(CampaignError::Aborted(format!(
                            "seed input of feature {:?} command {ci} contains a NUL byte",
                            feature.name
                        )));
                    }
                    skipped += 1;
                    continue;
                }
                let t = Task { feature: fi, command: ci, input };
                if t.input.mutant_index.is_none() {
                    seeds.push(t);
                } else {
                    mutants.push(t);
                }
            }
        }
    }
    if let Some(max) = budget.max_mutants {
        if mutants.len() > max {
            skipped += mutants.len() - max;
            mutants.truncate(max);
        }
    }
    let n_seeds = seeds.len();
    let tasks: Vec<Task> = seeds.into_iter().chain(mutants).collect();

    let arg0: Option<OsString> = spec.original.exe_path.file_name().map(|n| n.to_os_string());
    let request = |exe: &Path, t: &Task| {
        let feature = &spec.features[t.feature];
        let cmd = &feature.commands[t.command];
        ExecRequest {
            exe_path: exe.to_path_buf(),
            arg0: arg0.clone(),
            argv: t.input.argv.clone(),
            stdin: t.input.stdin.clone(),
            env: spec.env.clone(),
            workdir: options.workdir.clone(),
            timeout_seconds: spec.timeout_seconds,
            capture_files: file_paths(spec.pipeline_for(feature), &cmd.expected_output_files),
        }
    };

    let start = Instant::now();
    let deadline = budget.max_seconds.map(|s| start + Duration::from_secs_f64(s.max(0.0)));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<Result<TaskResult, CampaignError>>();
    let jobs = options.jobs.max(1).min(tasks.len().max(1));

    let mut results: Vec<Option<TaskResult>> = Vec::new();
    results.resize_with(tasks.len(), || None);
    let mut first_error = None;
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            let tx = tx.clone();
            let next = &next;
            let tasks = &tasks;
            let request = &request;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                if i >= n_seeds && deadline.is_some_and(|d| Instant::now() >= d) {
                    continue;
                }
                let t = &tasks[i];
                let run = || -> Result<TaskResult, CampaignError> {
                    let original = execute(&request(&spec.original.exe_path, t))?;
                    let variants = spec
                        .variants
                        .iter()
                        .map(|v| execute(&request(&v.exe_path, t)))
                        .collect::<Result<Vec<_>, _>>()?;
                    Ok(TaskResult { task: i, original, variants })
                };
                let r = run();
                let failed = r.is_err();
                if tx.send(r).is_err() || failed {
                    break;
                }
            });
        }
        drop(tx);
        for r in rx {
            match r {
                Ok(r) => {
                    let i = r.task;
                    results[i] = Some(r);
                }
                Err(e) => {
                    first_error.get_or_insert(e);
                    next.store(tasks.len(), Ordering::SeqCst);
                }
            }
        }
    });
    if let Some(e) = first_error {
        return Err(e);
    }

    let seeds_spawned = results[..n_seeds]
        .iter()
        .flatten()
        .any(|r| !matches!(r.original.termination, Termination::SpawnFailed { .. }));
    if n_seeds > 0 && !seeds_spawned {
        return Err(CampaignError::Aborted(format!(
            "original {} could not run any seed input",
            spec.original.exe_path.display()
        )));
    }

    let mut verdicts = Vec::new();
    let mut executed = 0;
    for (t, r) in tasks.iter().zip(&results) {
        let Some(r) = r else {
            skipped += 1;
            continue;
        };
        executed += 1;
        let feature = &spec.features[t.feature];
        let pipeline = spec.pipeline_for(feature);
        for (v, outcome) in spec.variants.iter().zip(&r.variants) {
            let evidence = compare(&r.original, outcome, pipeline);
            verdicts.push(TestVerdict {
                variant: v.label.clone(),
                feature: feature.name.clone(),
                command_index: t.command,
                mutant_index: t.input.mutant_index,
                disposition: feature.disposition,
                value: classify(feature.disposition, &r.original, outcome, &evidence),
                original_termination: r.original.termination.clone(),
                variant_termination: outcome.termination.clone(),
                evidence,
                input_used: InputUsed { argv: t.input.argv.clone(), stdin: t.input.stdin.clone() },
                is_fuzzed: t.input.mutant_index.is_some(),
            });
        }
    }
    // canonical order: variant as declared, then feature, command, mutant
    let variant_pos: BTreeMap<&str, usize> =
        spec.variants.iter().enumerate().map(|(i, v)| (v.label.as_str(), i)).collect();
    let feature_pos: BTreeMap<&str, usize> =
        spec.features.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect();
    verdicts.sort_by_key(|v| {
        (variant_pos[v.variant.as_str()], feature_pos[v.feature.as_str()], v.command_index, v.mutant_index)
    });
    let labels: Vec<String> = spec.variants.iter().map(|v| v.label.clone()).collect();
    Ok(CampaignReport::from_verdicts(&spec.id, &labels, verdicts, executed, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compare::default_pipeline;
    use crate::spec::parse_spec;
    use std::os::unix::fs::PermissionsExt;

    fn outcome(t: Termination, out: &str) -> ExecOutcome {
        ExecOutcome::synthetic(t, out.as_bytes(), b"")
    }

    fn verdict_for(d: Disposition, a: &ExecOutcome, b: &ExecOutcome) -> Verdict {
        classify(d, a, b, &compare(a, b, &default_pipeline()))
    }

    #[test]
    fn decision_table() {
        use Disposition::*;
        let ok = outcome(Termination::Exited { code: 0 }, "x");
        let other = outcome(Termination::Exited { code: 1 }, "y");
        let segv = outcome(Termination::Signaled { signal: 11 }, "");
        let hang = outcome(Termination::TimedOut, "");
        assert_eq!(verdict_for(Retain, &ok, &ok), Verdict::ExpectedMatch);
        assert_eq!(verdict_for(Retain, &ok, &other), Verdict::UnexpectedDifference);
        assert_eq!(verdict_for(Debloat, &ok, &ok), Verdict::UnexpectedMatch);
        assert_eq!(verdict_for(Debloat, &ok, &other), Verdict::ExpectedDifference);
        assert_eq!(verdict_for(Retain, &ok, &segv), Verdict::VariantCrash);
        assert_eq!(verdict_for(Debloat, &ok, &segv), Verdict::CrashOnRemoved);
        assert_eq!(verdict_for(Retain, &segv, &segv), Verdict::OriginalCrash);
        assert_eq!(verdict_for(Debloat, &segv, &ok), Verdict::OriginalCrash);
        assert_eq!(verdict_for(Retain, &ok, &hang), Verdict::VariantTimeout);
        assert_eq!(verdict_for(Debloat, &ok, &hang), Verdict::VariantTimeout);
        assert_eq!(verdict_for(Retain, &hang, &hang), Verdict::ExpectedMatch);
        let failed = outcome(Termination::SpawnFailed { message: "enoent".into() }, "");
        assert_eq!(verdict_for(Retain, &failed, &ok), Verdict::OriginalCrash);
        assert_eq!(verdict_for(Retain, &ok, &failed), Verdict::UnexpectedDifference);
    }

    fn tv(variant: &str, value: Verdict) -> TestVerdict {
        let o = outcome(Termination::Exited { code: 0 }, "");
        TestVerdict {
            variant: variant.into(),
            feature: "f".into(),
            command_index: 0,
            mutant_index: None,
            disposition: Disposition::Retain,
            value,
            original_termination: o.termination.clone(),
            variant_termination: o.termination.clone(),
            evidence: compare(&o, &o, &default_pipeline()),
            input_used: InputUsed { argv: vec![b"-x".to_vec()], stdin: vec![] },
            is_fuzzed: false,
        }
    }

    #[test]
    fn summary_counts() {
        let labels: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let r = CampaignReport::from_verdicts(
            "id",
            &labels,
            vec![
                tv("a", Verdict::ExpectedMatch),
                tv("a", Verdict::CrashOnRemoved),
                tv("a", Verdict::OriginalCrash),
                tv("b", Verdict::UnexpectedMatch),
                tv("c", Verdict::VariantCrash),
                tv("c", Verdict::UnexpectedMatch),
            ],
            3,
            0,
        );
        let s = &r.summary;
        assert_eq!(s.variants, 4);
        assert_eq!(s.passed, 2);
        assert!(s.per_variant["a"].passed && s.per_variant["d"].passed);
        assert_eq!(s.variants_with_error_or_crash, CountFraction { count: 1, fraction: 0.25 });
        assert_eq!(s.variants_with_unremoved_feature.count, 1);
        assert!((s.variants_with_unremoved_feature.fraction - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.crash_on_removed, 1);
        assert_eq!(s.original_crashes, 1);
        assert!(!r.all_passed());
        assert_eq!(r.to_jsonl().lines().count(), 6);
    }

    #[test]
    fn jsonl_round_trips() {
        let v = tv("a", Verdict::UnexpectedMatch);
        let line = serde_json::to_string(&v).unwrap();
        assert!(line.contains(r#""value":"UnexpectedMatch""#));
        assert!(line.contains(r#""argv":["LXg="]"#));
        let back: TestVerdict = serde_json::from_str(&line).unwrap();
        assert_eq!(back, v);
    }

    fn script(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, format!("#!/bin/sh\n{body}")).unwrap();
        std::fs::set_permissions(&p, std::fs::Permissions::from_mode(0o755)).unwrap();
        p
    }

    fn toy_spec(dir: &Path, fuzz_count: usize) -> BenchmarkSpec {
        let orig = script(dir, "orig", "case \"$1\" in a) echo A:$2;; b) echo B:$2;; *) echo usage >&2; exit 2;; esac\n");
        let keep = script(dir, "keep", "case \"$1\" in a) echo A:$2;; *) echo usage >&2; exit 2;; esac\n");
        let same = script(dir, "same", "case \"$1\" in a) echo A:$2;; b) echo B:$2;; *) echo usage >&2; exit 2;; esac\n");
        let doc = serde_json::json!({
            "id": "toy",
            "original": {"label": "orig", "exe": orig},
            "variants": [{"label": "keep", "exe": keep}, {"label": "same", "exe": same}],
            "features": [
                {"name": "A", "disposition": "retain", "commands": [{"argv": ["a", "{{ascii:1..6=xy}}"], "fuzz_count": fuzz_count}]},
                {"name": "B", "disposition": "debloat", "commands": [{"argv": ["b", "{{int:0..99=5}}"], "fuzz_count": fuzz_count}]}
            ],
            "timeout_seconds": 10
        });
        parse_spec(doc.to_string().as_bytes()).unwrap()
    }

    #[test]
    fn toy_campaign() {
        let dir = tempfile::tempdir().unwrap();
        let spec = toy_spec(dir.path(), 2);
        let opts = CampaignOptions { jobs: 2, workdir: None };
        let r = run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &opts).unwrap();
        assert_eq!(r.summary.inputs_executed, 6);
        assert!(r.per_variant["keep"].iter().all(|v| match v.feature.as_str() {
            "A" => v.value == Verdict::ExpectedMatch,
            _ => v.value == Verdict::ExpectedDifference,
        }));
        assert!(r.per_variant["same"].iter().any(|v| v.value == Verdict::UnexpectedMatch));
        assert!(r.summary.per_variant["keep"].passed);
        assert!(!r.summary.per_variant["same"].passed);
        assert_eq!(r.summary.variants_with_unremoved_feature.count, 1);

        let again = run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &CampaignOptions::default()).unwrap();
        assert_eq!(again.to_jsonl(), r.to_jsonl());

        let limited = Budget { max_seconds: None, max_mutants: Some(1) };
        let r = run_campaign(&spec, &MutationPlan::new(0, 0), limited, &opts).unwrap();
        assert_eq!(r.summary.inputs_executed, 3);
        assert_eq!(r.summary.mutants_skipped, 3);
        let zero_time = Budget { max_seconds: Some(0.0), max_mutants: None };
        let r = run_campaign(&spec, &MutationPlan::new(0, 0), zero_time, &opts).unwrap();
        assert_eq!(r.summary.inputs_executed, 2);
    }

    #[test]
    fn missing_original_aborts() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = toy_spec(dir.path(), 0);
        spec.original.exe_path = dir.path().join("absent");
        let e = run_campaign(&spec, &MutationPlan::new(0, 0), Budget::default(), &CampaignOptions::default());
        assert!(matches!(e, Err(CampaignError::Aborted(_))));
    }
}
