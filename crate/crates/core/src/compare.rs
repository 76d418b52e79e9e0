//! Output comparators: decide whether two execution outcomes match, with
//! optional regex normalization of the output streams.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::bytes::Regex;
use serde::{Deserialize, Serialize};

use crate::exec::{ExecOutcome, StreamCapture, Termination};

/// Maximum evidence length in bytes.
pub const EVIDENCE_LIMIT: usize = 1024;
/// Bytes of context shown on each side of a first difference.
const CONTEXT: usize = 32;
/// Compiled-program size cap for normalizer patterns.
const REGEX_SIZE_LIMIT: usize = 1 << 22;

/// A global regex substitution applied to both sides before comparing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalizer {
    pub pattern: String,
    pub replacement: String,
    #[serde(skip)]
    compiled: OnceLock<Result<Regex, String>>,
}

impl PartialEq for Normalizer {
    fn eq(&self, other: &Self) -> bool {
        self.pattern == other.pattern && self.replacement == other.replacement
    }
}

impl Normalizer {
    pub fn new(pattern: impl Into<String>, replacement: impl Into<String>) -> Self {
        Normalizer { pattern: pattern.into(), replacement: replacement.into(), compiled: OnceLock::new() }
    }

    pub fn regex(&self) -> Result<&Regex, String> {
        self.compiled
            .get_or_init(|| {
                regex::bytes::RegexBuilder::new(&self.pattern)
                    .size_limit(REGEX_SIZE_LIMIT)
                    .build()
                    .map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    pub fn apply(&self, input: &[u8]) -> Result<Vec<u8>, String> {
        Ok(self.regex()?.replace_all(input, self.replacement.as_bytes()).into_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ComparatorConfig {
    ExitStatus,
    StdoutExact,
    StdoutNormalized { normalizers: Vec<Normalizer> },
    StderrExact,
    StderrNormalized { normalizers: Vec<Normalizer> },
    FileDigest { path: String },
    FileSet,
}

impl ComparatorConfig {
    pub fn normalizers(&self) -> &[Normalizer] {
        match self {
            ComparatorConfig::StdoutNormalized { normalizers }
            | ComparatorConfig::StderrNormalized { normalizers } => normalizers,
            _ => &[],
        }
    }

    pub fn is_normalized(&self) -> bool {
        matches!(
            self,
            ComparatorConfig::StdoutNormalized { .. } | ComparatorConfig::StderrNormalized { .. }
        )
    }
}

/// Ordered comparator list; must not be empty.
pub type ComparatorPipeline = Vec<ComparatorConfig>;

/// `[ExitStatus, StdoutExact, StderrExact, FileSet]`.
pub fn default_pipeline() -> ComparatorPipeline {
    vec![
        ComparatorConfig::ExitStatus,
        ComparatorConfig::StdoutExact,
        ComparatorConfig::StderrExact,
        ComparatorConfig::FileSet,
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparatorResult {
    pub config: ComparatorConfig,
    pub matched: bool,
    pub evidence: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub per_comparator: Vec<ComparatorResult>,
    pub all_matched: bool,
}

fn escape(bytes: &[u8]) -> String {
    let mut s = String::new();
    for &b in bytes {
        match b {
            b'\\' => s.push_str("\\\\"),
            0x20..=0x7e => s.push(b as char),
            b'\n' => s.push_str("\\n"),
            b'\t' => s.push_str("\\t"),
            _ => s.push_str(&format!("\\x{b:02x}")),
        }
    }
    s
}

fn clip(mut s: String) -> String {
    if s.len() > EVIDENCE_LIMIT {
        let mut end = EVIDENCE_LIMIT - 3;
        while !s.is_char_boundary(end) {
            end -= 1;
        }
        s.truncate(end);
        s.push_str("...");
    }
    s
}

/// Excerpt around the first differing byte of `a` and `b`.
pub fn first_difference(a: &[u8], b: &[u8]) -> Option<String> {
    if a == b {
        return None;
    }
    let at = a.iter().zip(b).position(|(x, y)| x != y).unwrap_or(a.len().min(b.len()));
    let lo = at.saturating_sub(CONTEXT);
    let window = |s: &[u8]| escape(&s[lo.min(s.len())..(at + CONTEXT).min(s.len())]);
    Some(clip(format!(
        "first difference at byte {at} (lengths {} vs {}): \"{}\" vs \"{}\"",
        a.len(),
        b.len(),
        window(a),
        window(b)
    )))
}

fn status_matches(a: &Termination, b: &Termination) -> bool {
    match (a, b) {
        (Termination::SpawnFailed { .. }, Termination::SpawnFailed { .. }) => true,
        _ => a == b,
    }
}

fn compare_streams(a: &StreamCapture, b: &StreamCapture, what: &str) -> (bool, String) {
    if a.truncated || b.truncated {
        let same = a.total_len == b.total_len && a.sha256 == b.sha256;
        let evidence = if same {
            String::new()
        } else {
            format!(
                "{what} digests differ ({} vs {} bytes, truncated capture)",
                a.total_len, b.total_len
            )
        };
        return (same, evidence);
    }
    match first_difference(&a.bytes, &b.bytes) {
        None => (true, String::new()),
        Some(d) => (false, clip(format!("{what} {d}"))),
    }
}

fn normalize(bytes: &[u8], normalizers: &[Normalizer]) -> Result<Vec<u8>, String> {
    let mut cur = bytes.to_vec();
    for n in normalizers {
        cur = n.apply(&cur).map_err(|e| format!("normalizer {:?} failed: {e}", n.pattern))?;
    }
    Ok(cur)
}

fn compare_normalized(a: &StreamCapture, b: &StreamCapture, normalizers: &[Normalizer], what: &str) -> (bool, String) {
    let (na, nb) = match (normalize(&a.bytes, normalizers), normalize(&b.bytes, normalizers)) {
        (Ok(na), Ok(nb)) => (na, nb),
        (Err(e), _) | (_, Err(e)) => return (false, clip(e)),
    };
    if a.truncated != b.truncated || (a.truncated && a.total_len != b.total_len) {
        return (false, format!("{what} capture truncated on one side"));
    }
    match first_difference(&na, &nb) {
        None => (true, String::new()),
        Some(d) => (false, clip(format!("{what} (normalized) {d}"))),
    }
}

fn existing_files(o: &ExecOutcome) -> BTreeSet<&str> {
    o.file_digests.iter().filter(|(_, d)| d.exists).map(|(p, _)| p.as_str()).collect()
}

fn evaluate(a: &ExecOutcome, b: &ExecOutcome, config: &ComparatorConfig) -> (bool, String) {
    match config {
        ComparatorConfig::ExitStatus => {
            let m = status_matches(&a.termination, &b.termination);
            (m, if m { String::new() } else { format!("{} vs {}", a.termination, b.termination) })
        }
        ComparatorConfig::StdoutExact => compare_streams(&a.stdout, &b.stdout, "stdout"),
        ComparatorConfig::StderrExact => compare_streams(&a.stderr, &b.stderr, "stderr"),
        ComparatorConfig::StdoutNormalized { normalizers } => {
            compare_normalized(&a.stdout, &b.stdout, normalizers, "stdout")
        }
        ComparatorConfig::StderrNormalized { normalizers } => {
            compare_normalized(&a.stderr, &b.stderr, normalizers, "stderr")
        }
        ComparatorConfig::FileDigest { path } => match (a.file_digests.get(path), b.file_digests.get(path)) {
            (Some(x), Some(y)) if x == y => (true, String::new()),
            (Some(x), Some(y)) if x.exists != y.exists => {
                (false, format!("{path}: exists={} vs exists={}", x.exists, y.exists))
            }
            (Some(x), Some(y)) => (
                false,
                format!("{path}: sha256 {} vs {}", hex::encode(x.sha256), hex::encode(y.sha256)),
            ),
            _ => (false, format!("{path}: not captured")),
        },
        ComparatorConfig::FileSet => {
            let (sa, sb) = (existing_files(a), existing_files(b));
            if sa == sb {
                (true, String::new())
            } else {
                let only_a: Vec<_> = sa.difference(&sb).collect();
                let only_b: Vec<_> = sb.difference(&sa).collect();
                (false, clip(format!("files only in first: {only_a:?}; only in second: {only_b:?}")))
            }
        }
    }
}

/// Evaluates every comparator of the pipeline (no short-circuit).
pub fn compare(a: &ExecOutcome, b: &ExecOutcome, pipeline: &[ComparatorConfig]) -> CompareReport {
    let per_comparator: Vec<ComparatorResult> = pipeline
        .iter()
        .map(|config| {
            let (matched, evidence) = evaluate(a, b, config);
            ComparatorResult { config: config.clone(), matched, evidence }
        })
        .collect();
    let all_matched = per_comparator.iter().all(|r| r.matched);
    CompareReport { per_comparator, all_matched }
}
