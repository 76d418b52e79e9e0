//! Benchmark specifications: a program, its variants and the feature-keyed
//! test commands that drive differential testing and metric campaigns.
//!
//! The on-disk format is one strict JSON document:
//!
//! ```json
//! {
//!   "id": "gzip-1.2.4",
//!   "original": {"label": "orig", "exe": "bin/gzip", "libs": [], "static": false},
//!   "variants": [{"label": "chisel", "exe": "bin/gzip.chisel"}],
//!   "features": [{
//!     "name": "compress", "disposition": "retain", "anchor": true,
//!     "commands": [{"argv": ["-c", "{{ascii:1..8=data}}"], "stdin": "...",
//!                   "files": ["out.gz"], "fuzz_count": 10}],
//!     "comparators": [{"kind": "exit_status"}]
//!   }],
//!   "comparators": [{"kind": "stdout_exact"}],
//!   "env": {"LC_ALL": "C"},
//!   "timeout_seconds": 10,
//!   "trials": 10
//! }
//! ```
//!
//! `argv` lists the arguments after the program name; every entry (and
//! `stdin`) is a fuzzing template. Unknown keys are rejected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::compare::{default_pipeline, ComparatorConfig, ComparatorPipeline};
use crate::exec::is_contained_relative;
use crate::fuzz::parse_template;

pub const DEFAULT_TRIALS: u32 = 10;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SpecError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax { line: usize, column: usize, message: String },
    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },
    #[error("invariant violated at {path}: {message}")]
    Invariant { path: String, message: String },
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("no feature is marked as the aggressive anchor")]
    NoAnchor,
    #[error("several features are marked as the aggressive anchor: {0:?}")]
    MultiAnchor(Vec<String>),
}

impl SpecError {
    /// Path of the offending field, when the error names one.
    pub fn path(&self) -> Option<&str> {
        match self {
            SpecError::Schema { path, .. } | SpecError::Invariant { path, .. } => Some(path),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryRef {
    pub label: String,
    #[serde(rename = "exe")]
    pub exe_path: PathBuf,
    #[serde(rename = "libs", default)]
    pub lib_paths: Vec<PathBuf>,
    #[serde(rename = "static", default)]
    pub statically_linked: bool,
}

impl BinaryRef {
    pub fn new(label: impl Into<String>, exe: impl Into<PathBuf>) -> Self {
        BinaryRef { label: label.into(), exe_path: exe.into(), lib_paths: Vec::new(), statically_linked: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Disposition {
    Retain,
    Debloat,
}

impl fmt::Display for Disposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Disposition::Retain => "retain",
            Disposition::Debloat => "debloat",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestCommand {
    #[serde(rename = "argv")]
    pub argv_template: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stdin: Option<String>,
    #[serde(rename = "files", default)]
    pub expected_output_files: Vec<String>,
    #[serde(default)]
    pub fuzz_count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub name: String,
    pub disposition: Disposition,
    #[serde(rename = "anchor", default)]
    pub aggressive_anchor: bool,
    pub commands: Vec<TestCommand>,
    #[serde(rename = "comparators", default, skip_serializing_if = "Option::is_none")]
    pub comparator_override: Option<ComparatorPipeline>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub id: String,
    pub original: BinaryRef,
    pub variants: Vec<BinaryRef>,
    pub features: Vec<Feature>,
    #[serde(rename = "comparators", default = "default_pipeline")]
    pub default_comparators: ComparatorPipeline,
    #[serde(default)]
    pub env: BTreeMap<String, String>,
    pub timeout_seconds: f64,
    #[serde(default = "default_trials")]
    pub trials: u32,
}

fn default_trials() -> u32 {
    DEFAULT_TRIALS
}

impl BenchmarkSpec {
    pub fn feature(&self, name: &str) -> Option<&Feature> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Comparator pipeline in force for `feature`.
    pub fn pipeline_for<'a>(&'a self, feature: &'a Feature) -> &'a [ComparatorConfig] {
        feature.comparator_override.as_deref().unwrap_or(&self.default_comparators)
    }

    pub fn command_count(&self) -> usize {
        self.features.iter().map(|f| f.commands.len()).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Checks every type invariant; `parse_spec` calls this.
    pub fn validate(&self) -> Result<(), SpecError> {
        let schema = |path: String, message: &str| SpecError::Schema { path, message: message.to_string() };
        let invariant = |path: String, message: &str| SpecError::Invariant { path, message: message.to_string() };

        if !(self.timeout_seconds > 0.0) || !self.timeout_seconds.is_finite() {
            return Err(schema("timeout_seconds".into(), "must be a positive number"));
        }
        if self.trials < 1 {
            return Err(schema("trials".into(), "must be >= 1"));
        }
        if self.id.is_empty() {
            return Err(invariant("id".into(), "must be non-empty"));
        }
        if self.variants.is_empty() {
            return Err(invariant("variants".into(), "at least one variant is required"));
        }
        if self.features.is_empty() {
            return Err(invariant("features".into(), "at least one feature is required"));
        }
        let binaries = std::iter::once(("original".to_string(), &self.original))
            .chain(self.variants.iter().enumerate().map(|(i, v)| (format!("variants[{i}]"), v)));
        let mut labels = BTreeSet::new();
        for (path, b) in binaries {
            if b.label.is_empty() {
                return Err(invariant(format!("{path}.label"), "must be non-empty"));
            }
            if !labels.insert(b.label.as_str()) {
                return Err(invariant(format!("{path}.label"), "duplicate binary label"));
            }
            if b.statically_linked && !b.lib_paths.is_empty() {
                return Err(invariant(format!("{path}.libs"), "a statically linked binary lists no libraries"));
            }
        }
        validate_pipeline(&self.default_comparators, "comparators")?;

        let mut names = BTreeSet::new();
        let mut anchors = 0;
        for (fi, f) in self.features.iter().enumerate() {
            let fpath = format!("features[{fi}]");
            if f.name.is_empty() {
                return Err(invariant(format!("{fpath}.name"), "must be non-empty"));
            }
            if !names.insert(f.name.as_str()) {
                return Err(invariant(format!("{fpath}.name"), "duplicate feature name"));
            }
            if f.commands.is_empty() {
                return Err(invariant(format!("{fpath}.commands"), "at least one command is required"));
            }
            if f.aggressive_anchor {
                anchors += 1;
                if anchors > 1 {
                    return Err(invariant(format!("{fpath}.anchor"), "at most one feature may be the anchor"));
                }
                if f.disposition != Disposition::Retain {
                    return Err(invariant(format!("{fpath}.anchor"), "the anchor feature must be retained"));
                }
            }
            if let Some(p) = &f.comparator_override {
                validate_pipeline(p, &format!("{fpath}.comparators"))?;
            }
            for (ci, c) in f.commands.iter().enumerate() {
                let cpath = format!("{fpath}.commands[{ci}]");
                if c.argv_template.is_empty() {
                    return Err(invariant(format!("{cpath}.argv"), "must be non-empty"));
                }
                for (ai, a) in c.argv_template.iter().enumerate() {
                    parse_template(a).map_err(|e| schema(format!("{cpath}.argv[{ai}]"), &e.to_string()))?;
                }
                if let Some(s) = &c.stdin {
                    parse_template(s).map_err(|e| schema(format!("{cpath}.stdin"), &e.to_string()))?;
                }
                for (pi, p) in c.expected_output_files.iter().enumerate() {
                    if !is_contained_relative(p) {
                        return Err(invariant(
                            format!("{cpath}.files[{pi}]"),
                            "must be a relative path without '..'",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resolves relative binary paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for b in std::iter::once(&mut self.original).chain(self.variants.iter_mut()) {
            fix(&mut b.exe_path);
            b.lib_paths.iter_mut().for_each(fix);
        }
    }
}

fn validate_pipeline(p: &[ComparatorConfig], path: &str) -> Result<(), SpecError> {
    if p.is_empty() {
        return Err(SpecError::Invariant { path: path.into(), message: "comparator pipeline must be nonempty".into() });
    }
    for (i, c) in p.iter().enumerate() {
        if c.is_normalized() && c.normalizers().is_empty() {
            return Err(SpecError::Invariant {
                path: format!("{path}[{i}].normalizers"),
                message: "normalized comparators need at least one normalizer".into(),
            });
        }
        for (ni, n) in c.normalizers().iter().enumerate() {
            if let Err(e) = n.regex() {
                return Err(SpecError::Schema {
                    path: format!("{path}[{i}].normalizers[{ni}].pattern"),
                    message: e,
                });
            }
        }
        if let ComparatorConfig::FileDigest { path: file } = c {
            if !is_contained_relative(file) {
                return Err(SpecError::Invariant {
                    path: format!("{path}[{i}].path"),
                    message: "must be a relative path without '..'".into(),
                });
            }
        }
    }
    Ok(())
}

/// Parses and validates a spec document.
pub fn parse_spec(document: &[u8]) -> Result<BenchmarkSpec, SpecError> {
    let text = std::str::from_utf8(document).map_err(|e| SpecError::Syntax {
        line: 0,
        column: 0,
        message: format!("document is not UTF-8: {e}"),
    })?;
    let mut de = serde_json::Deserializer::from_str(text);
    let spec: BenchmarkSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        match inner.classify() {
            serde_json::error::Category::Data => SpecError::Schema { path, message: inner.to_string() },
            _ => SpecError::Syntax { line: inner.line(), column: inner.column(), message: inner.to_string() },
        }
    })?;
    de.end().map_err(|e| SpecError::Syntax { line: e.line(), column: e.column(), message: e.to_string() })?;
    spec.validate()?;
    Ok(spec)
}

/// Reads a spec file, resolving relative binary paths against its directory.
pub fn load_spec(path: &Path) -> Result<BenchmarkSpec, SpecError> {
    let bytes = std::fs::read(path).map_err(|e| SpecError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut spec = parse_spec(&bytes)?;
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    spec.resolve_paths(base);
    Ok(spec)
}

/// The aggressive use case: the anchor feature cut down to its first
/// command, every other feature turned into a debloat probe.
pub fn winnow_to_aggressive(spec: &BenchmarkSpec) -> Result<BenchmarkSpec, SpecError> {
    let anchors: Vec<String> =
        spec.features.iter().filter(|f| f.aggressive_anchor).map(|f| f.name.clone()).collect();
    match anchors.len() {
        0 => return Err(SpecError::NoAnchor),
        1 => {}
        _ => return Err(SpecError::MultiAnchor(anchors)),
    }
    let mut out = spec.clone();
    for f in &mut out.features {
        if f.aggressive_anchor {
            f.commands.truncate(1);
        } else {
            f.disposition = Disposition::Debloat;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Warning {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.path, self.message)
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => a == b,
    }
}

/// Filesystem checks that do not make a spec invalid but will break runs.
pub fn validate_spec_against_binaries(spec: &BenchmarkSpec) -> Vec<Warning> {
    let mut out = Vec::new();
    let mut check = |path: String, p: &Path, want_exec: bool| match std::fs::metadata(p) {
        Err(_) => out.push(Warning { path, message: "not found".into() }),
        Ok(m) if !m.is_file() => out.push(Warning { path, message: "not a regular file".into() }),
        Ok(m) if want_exec && m.permissions().mode() & 0o111 == 0 => {
            out.push(Warning { path, message: "not executable".into() })
        }
        Ok(_) => {}
    };
    let binaries = std::iter::once(("original".to_string(), &spec.original))
        .chain(spec.variants.iter().enumerate().map(|(i, v)| (format!("variants[{i}]"), v)));
    for (path, b) in binaries {
        check(format!("{path}.exe_path"), &b.exe_path, true);
        for (i, lib) in b.lib_paths.iter().enumerate() {
            check(format!("{path}.lib_paths[{i}]"), lib, false);
        }
    }
    for (i, v) in spec.variants.iter().enumerate() {
        if same_file(&v.exe_path, &spec.original.exe_path) {
            out.push(Warning { path: format!("variants[{i}].exe_path"), message: "variant aliases original".into() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "id": "toy",
        "original": {"label": "orig", "exe": "/bin/true"},
        "variants": [{"label": "v1", "exe": "/bin/false"}],
        "features": [{"name": "compress", "disposition": "retain", "commands": [{"argv": ["-c"]}]}],
        "timeout_seconds": 5
    }"#;

    fn with_features(features: serde_json::Value) -> Vec<u8> {
        let mut v: serde_json::Value = serde_json::from_str(MINIMAL).unwrap();
        v["features"] = features;
        serde_json::to_vec(&v).unwrap()
    }

    fn feature(name: &str, disposition: Disposition, anchor: bool, n_cmds: usize) -> Feature {
        Feature {
            name: name.into(),
            disposition,
            aggressive_anchor: anchor,
            commands: (0..n_cmds)
                .map(|i| TestCommand {
                    argv_template: vec![format!("--{name}-{i}")],
                    stdin: None,
                    expected_output_files: vec![],
                    fuzz_count: 0,
                })
                .collect(),
            comparator_override: None,
        }
    }

    #[test]
    fn minimal_document_defaults() {
        let s = parse_spec(MINIMAL.as_bytes()).unwrap();
        assert_eq!(s.trials, 10);
        assert_eq!(s.default_comparators, default_pipeline());
        assert!(s.env.is_empty());
        assert_eq!(s.features[0].disposition, Disposition::Retain);
        assert_eq!(parse_spec(s.to_json().as_bytes()).unwrap(), s);
    }

    #[test]
    fn duplicate_feature_names() {
        let doc = with_features(serde_json::json!([
            {"name": "compress", "disposition": "retain", "commands": [{"argv": ["a"]}]},
            {"name": "compress", "disposition": "debloat", "commands": [{"argv": ["b"]}]}
        ]));
        let e = parse_spec(&doc).unwrap_err();
        assert!(matches!(e, SpecError::Invariant { .. }));
        assert_eq!(e.path(), Some("features[1].name"));
    }

    #[test]
    fn zero_timeout_is_schema_error() {
        let doc = MINIMAL.replace("\"timeout_seconds\": 5", "\"timeout_seconds\": 0");
        assert!(matches!(parse_spec(doc.as_bytes()), Err(SpecError::Schema { .. })));
    }

    #[test]
    fn error_categories_and_paths() {
        assert!(matches!(parse_spec(b"{\"id\": "), Err(SpecError::Syntax { .. })));
        assert!(matches!(parse_spec(b"{} {}"), Err(SpecError::Syntax { .. }) | Err(SpecError::Schema { .. })));
        let unknown = MINIMAL.replace("\"id\"", "\"bogus\": 1, \"id\"");
        assert!(matches!(parse_spec(unknown.as_bytes()), Err(SpecError::Schema { .. })));
        let ill_typed = MINIMAL.replace("\"timeout_seconds\": 5", "\"timeout_seconds\": 5, \"trials\": -1");
        let e = parse_spec(ill_typed.as_bytes()).unwrap_err();
        assert_eq!(e.path(), Some("trials"));
        let missing = MINIMAL.replace("\"timeout_seconds\": 5", "\"trials\": 3");
        assert!(matches!(parse_spec(missing.as_bytes()), Err(SpecError::Schema { .. })));
        let bad_disposition = with_features(serde_json::json!([
            {"name": "x", "disposition": "maybe", "commands": [{"argv": ["a"]}]}
        ]));
        assert_eq!(parse_spec(&bad_disposition).unwrap_err().path(), Some("features[0].disposition"));
        let bad_template = with_features(serde_json::json!([
            {"name": "x", "disposition": "retain", "commands": [{"argv": ["{{int:0..}}"]}]}
        ]));
        assert_eq!(parse_spec(&bad_template).unwrap_err().path(), Some("features[0].commands[0].argv[0]"));
    }

    #[test]
    fn invariant_violations() {
        let cases = [
            (serde_json::json!([]), "features"),
            (serde_json::json!([{"name": "x", "disposition": "retain", "commands": []}]), "features[0].commands"),
            (serde_json::json!([{"name": "x", "disposition": "retain", "commands": [{"argv": []}]}]), "features[0].commands[0].argv"),
            (serde_json::json!([{"name": "x", "disposition": "debloat", "anchor": true, "commands": [{"argv": ["a"]}]}]), "features[0].anchor"),
            (serde_json::json!([
                {"name": "x", "disposition": "retain", "anchor": true, "commands": [{"argv": ["a"]}]},
                {"name": "y", "disposition": "retain", "anchor": true, "commands": [{"argv": ["a"]}]}
            ]), "features[1].anchor"),
            (serde_json::json!([{"name": "x", "disposition": "retain", "commands": [{"argv": ["a"], "files": ["../out"]}]}]), "features[0].commands[0].files[0]"),
            (serde_json::json!([{"name": "x", "disposition": "retain", "commands": [{"argv": ["a"]}], "comparators": []}]), "features[0].comparators"),
            (serde_json::json!([{"name": "x", "disposition": "retain", "commands": [{"argv": ["a"]}],
                "comparators": [{"kind": "stdout_normalized", "normalizers": []}]}]), "features[0].comparators[0].normalizers"),
        ];
        for (features, path) in cases {
            let e = parse_spec(&with_features(features)).unwrap_err();
            assert_eq!(e.path(), Some(path), "{e}");
        }
        let no_variants = MINIMAL.replace(r#"[{"label": "v1", "exe": "/bin/false"}]"#, "[]");
        assert_eq!(parse_spec(no_variants.as_bytes()).unwrap_err().path(), Some("variants"));
        let static_libs = MINIMAL.replace(r#""exe": "/bin/false""#, r#""exe": "/bin/false", "static": true, "libs": ["x.so"]"#);
        assert_eq!(parse_spec(static_libs.as_bytes()).unwrap_err().path(), Some("variants[0].libs"));
    }

    #[test]
    fn winnow_example() {
        let mut spec = parse_spec(MINIMAL.as_bytes()).unwrap();
        spec.features = vec![
            feature("A", Disposition::Retain, true, 2),
            feature("B", Disposition::Retain, false, 1),
            feature("C", Disposition::Debloat, false, 3),
        ];
        let w = winnow_to_aggressive(&spec).unwrap();
        assert_eq!(w.features[0].commands, spec.features[0].commands[..1]);
        assert_eq!(w.features[0].disposition, Disposition::Retain);
        assert_eq!(w.features[1].disposition, Disposition::Debloat);
        assert_eq!(w.features[1].commands, spec.features[1].commands);
        assert_eq!(w.features[2], spec.features[2]);
        assert_eq!(winnow_to_aggressive(&w).unwrap(), w);
        assert!(w.command_count() <= spec.command_count());
    }

    #[test]
    fn winnow_errors_and_fixed_point() {
        let mut spec = parse_spec(MINIMAL.as_bytes()).unwrap();
        assert_eq!(winnow_to_aggressive(&spec), Err(SpecError::NoAnchor));
        spec.features = vec![feature("A", Disposition::Retain, true, 1)];
        assert_eq!(winnow_to_aggressive(&spec).unwrap(), spec);
        spec.features.push(feature("B", Disposition::Retain, true, 1));
        assert!(matches!(winnow_to_aggressive(&spec), Err(SpecError::MultiAnchor(_))));
    }

    #[test]
    fn binary_warnings() {
        let dir = tempfile::tempdir().unwrap();
        let exe = dir.path().join("prog");
        std::fs::write(&exe, "#!/bin/sh\n").unwrap();
        std::fs::set_permissions(&exe, std::fs::Permissions::from_mode(0o755)).unwrap();
        let other = dir.path().join("prog2");
        std::fs::copy(&exe, &other).unwrap();
        let mut spec = parse_spec(MINIMAL.as_bytes()).unwrap();
        spec.original.exe_path = exe.clone();
        spec.variants[0].exe_path = other.clone();
        assert!(validate_spec_against_binaries(&spec).is_empty());

        spec.variants[0].exe_path = dir.path().join("missing");
        let w = validate_spec_against_binaries(&spec);
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].to_string(), "variants[0].exe_path not found");

        spec.variants[0].exe_path = exe.clone();
        let w = validate_spec_against_binaries(&spec);
        assert_eq!(w, vec![Warning { path: "variants[0].exe_path".into(), message: "variant aliases original".into() }]);

        std::fs::set_permissions(&other, std::fs::Permissions::from_mode(0o644)).unwrap();
        spec.variants[0].exe_path = other;
        assert_eq!(validate_spec_against_binaries(&spec)[0].message, "not executable");
    }

    #[test]
    fn load_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let doc = MINIMAL.replace("/bin/false", "bin/variant");
        let path = dir.path().join("spec.json");
        std::fs::write(&path, doc).unwrap();
        let s = load_spec(&path).unwrap();
        assert_eq!(s.variants[0].exe_path, dir.path().join("bin/variant"));
        assert_eq!(s.original.exe_path, PathBuf::from("/bin/true"));
        assert!(matches!(load_spec(&dir.path().join("nope.json")), Err(SpecError::Io { .. })));
    }
}
