//! On-disk size change and linked libraries.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::elf::{ElfFile, ElfParseError};
use crate::spec::BinaryRef;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("cannot stat {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("not comparable: original size is 0 bytes")]
    NotComparable,
    #[error(transparent)]
    Elf(#[from] ElfParseError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeReport {
    pub original_bytes: u64,
    pub variant_bytes: u64,
    pub pct: f64,
    pub aggregate_mode: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LibReport {
    pub original_needed: Vec<String>,
    pub variant_needed: Vec<String>,
    pub introduced: BTreeSet<String>,
    pub eliminated: BTreeSet<String>,
}

fn file_size(path: &Path) -> Result<u64, MetricsError> {
    std::fs::metadata(path)
        .map(|m| m.len())
        .map_err(|source| MetricsError::Io { path: path.display().to_string(), source })
}

fn footprint(b: &BinaryRef, aggregate: bool) -> Result<u64, MetricsError> {
    let mut total = file_size(&b.exe_path)?;
    if aggregate {
        for lib in &b.lib_paths {
            total += file_size(lib)?;
        }
    }
    Ok(total)
}

/// `100 * variant / original`; zero original is not comparable.
pub fn size_pct(original_bytes: u64, variant_bytes: u64) -> Result<f64, MetricsError> {
    if original_bytes == 0 {
        return Err(MetricsError::NotComparable);
    }
    Ok(100.0 * variant_bytes as f64 / original_bytes as f64)
}

/// Size of the variant relative to the original. Aggregate mode (exe plus
/// listed libraries on both sides) is used when the variant is static or
/// lists libraries, or when `force_aggregate` is set.
pub fn size_change(original: &BinaryRef, variant: &BinaryRef, force_aggregate: bool) -> Result<SizeReport, MetricsError> {
    let aggregate_mode = force_aggregate || variant.statically_linked || !variant.lib_paths.is_empty();
    let original_bytes = footprint(original, aggregate_mode)?;
    let variant_bytes = footprint(variant, aggregate_mode)?;
    Ok(SizeReport { original_bytes, variant_bytes, pct: size_pct(original_bytes, variant_bytes)?, aggregate_mode })
}

/// DT_NEEDED entries in file order; empty for static executables.
pub fn linked_libraries(binary: &BinaryRef) -> Result<Vec<String>, ElfParseError> {
    ElfFile::open(&binary.exe_path)?.needed_libraries()
}

pub fn lib_report(original_needed: Vec<String>, variant_needed: Vec<String>) -> LibReport {
    let o: BTreeSet<String> = original_needed.iter().cloned().collect();
    let v: BTreeSet<String> = variant_needed.iter().cloned().collect();
    LibReport {
        introduced: v.difference(&o).cloned().collect(),
        eliminated: o.difference(&v).cloned().collect(),
        original_needed,
        variant_needed,
    }
}

pub fn lib_delta(original: &BinaryRef, variant: &BinaryRef) -> Result<LibReport, ElfParseError> {
    Ok(lib_report(linked_libraries(original)?, linked_libraries(variant)?))
}
