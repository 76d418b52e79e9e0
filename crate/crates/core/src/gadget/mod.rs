//! Code-reuse gadget discovery and the four gadget-set security metrics:
//! expressivity, quality, special-purpose availability and locality.

pub mod decode;
mod classify;

use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::elf::{ElfFile, ElfParseError};
use crate::spec::BinaryRef;

pub use classify::{
    classify_expressivity, gadget_classes, gadget_special_types, score_quality, special_types,
    ExpressivityClass, ExpressivityProfile, SpecialType, SpecialTypes, MAJOR_CONSTRAINT,
    MINOR_CONSTRAINT,
};
pub use decode::{decode, Instruction, Terminator};

/// Longest gadget, in instructions, terminator included.
pub const MAX_GADGET_LEN: usize = 10;

/// Quality deltas smaller than one minor constraint are not significant.
pub const QUALITY_SIGNIFICANCE: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeRegion {
    pub base_address: u64,
    pub bytes: Vec<u8>,
    pub source_label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Gadget {
    pub address: u64,
    pub raw_bytes: Vec<u8>,
    pub instructions: Vec<Instruction>,
    pub terminator: Terminator,
}

impl Gadget {
    /// Decodes `bytes` as a gadget. Fails unless the bytes form a contiguous
    /// instruction sequence whose only control transfer is the final one.
    pub fn from_bytes(address: u64, bytes: &[u8]) -> Option<Gadget> {
        let mut instructions = Vec::new();
        let mut pos = 0;
        while pos < bytes.len() {
            if instructions.len() == MAX_GADGET_LEN {
                return None;
            }
            let insn = decode(&bytes[pos..])?;
            pos += insn.len as usize;
            instructions.push(insn);
            if insn.terminator().is_some() {
                break;
            }
        }
        let terminator = instructions.last()?.terminator()?;
        (pos == bytes.len()).then(|| Gadget {
            address,
            raw_bytes: bytes.to_vec(),
            instructions,
            terminator,
        })
    }

    /// Instructions before the terminator.
    pub fn body(&self) -> &[Instruction] {
        &self.instructions[..self.instructions.len() - 1]
    }

    pub fn terminator_instruction(&self) -> &Instruction {
        self.instructions.last().expect("gadgets are never empty")
    }
}

impl fmt::Display for Gadget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, insn) in self.instructions.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{insn}")?;
        }
        Ok(())
    }
}

impl Serialize for Gadget {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Gadget", 4)?;
        st.serialize_field("address", &format!("{:#x}", self.address))?;
        st.serialize_field("bytes", &hex::encode(&self.raw_bytes))?;
        st.serialize_field("text", &self.to_string())?;
        st.serialize_field("terminator", &self.terminator)?;
        st.end()
    }
}

/// Finds every gadget in `region`: each start offset whose contiguous decode
/// reaches a terminator within [`MAX_GADGET_LEN`] instructions, without
/// passing through an earlier control transfer. Sorted by address, one
/// gadget per address.
pub fn scan_gadgets(region: &CodeRegion) -> Vec<Gadget> {
    let bytes = &region.bytes;
    let decoded: Vec<Option<Instruction>> = (0..bytes.len()).map(|i| decode(&bytes[i..])).collect();
    let mut out = Vec::new();
    for start in 0..bytes.len() {
        let mut pos = start;
        let mut instructions = Vec::new();
        while instructions.len() < MAX_GADGET_LEN && pos < bytes.len() {
            let Some(insn) = decoded[pos] else { break };
            pos += insn.len as usize;
            instructions.push(insn);
            if let Some(terminator) = insn.terminator() {
                out.push(Gadget {
                    address: region.base_address + start as u64,
                    raw_bytes: bytes[start..pos].to_vec(),
                    instructions,
                    terminator,
                });
                break;
            }
        }
    }
    out
}

/// Scans several regions and merges the results ordered by address.
pub fn scan_regions(regions: &[CodeRegion]) -> Vec<Gadget> {
    let mut all: Vec<Gadget> = regions.iter().flat_map(scan_gadgets).collect();
    all.sort_by(|a, b| a.address.cmp(&b.address).then_with(|| a.raw_bytes.cmp(&b.raw_bytes)));
    all
}

/// Percentage of `variant` gadgets present in `original` at the same address
/// with identical bytes. An empty variant set has locality 0.
pub fn locality(original: &[Gadget], variant: &[Gadget]) -> f64 {
    if variant.is_empty() {
        return 0.0;
    }
    let known: HashSet<(u64, &[u8])> =
        original.iter().map(|g| (g.address, g.raw_bytes.as_slice())).collect();
    let local = variant
        .iter()
        .filter(|g| known.contains(&(g.address, g.raw_bytes.as_slice())))
        .count();
    100.0 * local as f64 / variant.len() as f64
}

#[derive(Clone, Debug, Serialize)]
pub struct GadgetSetReport {
    #[serde(skip)]
    pub gadgets: Vec<Gadget>,
    pub gadget_count: usize,
    pub expressivity: ExpressivityProfile,
    pub mean_quality: f64,
    pub special_types: BTreeSet<SpecialType>,
    pub syscall_gadget_count: usize,
}

impl GadgetSetReport {
    pub fn new(gadgets: Vec<Gadget>) -> Self {
        let expressivity = classify_expressivity(&gadgets);
        let mean_quality = if gadgets.is_empty() {
            0.0
        } else {
            gadgets.iter().map(score_quality).sum::<f64>() / gadgets.len() as f64
        };
        let SpecialTypes { types, syscall_gadget_count } = special_types(&gadgets);
        GadgetSetReport {
            gadget_count: gadgets.len(),
            gadgets,
            expressivity,
            mean_quality,
            special_types: types,
            syscall_gadget_count,
        }
    }

    pub fn from_regions(regions: &[CodeRegion]) -> Self {
        Self::new(scan_regions(regions))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SyscallEvent {
    None,
    Eliminated,
    Introduced,
}

/// Original-minus-variant changes. Positive expressivity and special-type
/// deltas are improvements; a positive quality delta means the average
/// side-constraint penalty went down.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SecurityDelta {
    pub expressivity_delta: i64,
    pub quality_delta: f64,
    pub quality_significant: bool,
    pub sp_types_delta: i64,
    pub syscall_event: SyscallEvent,
    pub locality_pct: f64,
}

pub fn compare_sets(original: &GadgetSetReport, variant: &GadgetSetReport) -> SecurityDelta {
    let quality_delta = original.mean_quality - variant.mean_quality;
    let syscall_event = match (original.syscall_gadget_count, variant.syscall_gadget_count) {
        (o, 0) if o > 0 => SyscallEvent::Eliminated,
        (0, v) if v > 0 => SyscallEvent::Introduced,
        _ => SyscallEvent::None,
    };
    SecurityDelta {
        expressivity_delta: original.expressivity.count as i64 - variant.expressivity.count as i64,
        quality_delta,
        quality_significant: quality_delta.abs() >= QUALITY_SIGNIFICANCE,
        sp_types_delta: original.special_types.len() as i64 - variant.special_types.len() as i64,
        syscall_event,
        locality_pct: locality(&original.gadgets, &variant.gadgets),
    }
}

/// Executable segments of `binary`, followed by those of its libraries when
/// `aggregate` is set.
pub fn extract_code_regions(
    binary: &BinaryRef,
    aggregate: bool,
) -> Result<Vec<CodeRegion>, ElfParseError> {
    let mut paths = vec![binary.exe_path.as_path()];
    if aggregate {
        paths.extend(binary.lib_paths.iter().map(|p| p.as_path()));
    }
    let mut regions = Vec::new();
    for path in paths {
        let elf = ElfFile::open(path)?;
        let label = path.display().to_string();
        for (vaddr, bytes) in elf.executable_segments() {
            regions.push(CodeRegion {
                base_address: vaddr,
                bytes: bytes.to_vec(),
                source_label: label.clone(),
            });
        }
    }
    Ok(regions)
}
