//! Minimal ELF64 little-endian reader: program headers, executable
//! segments and `DT_NEEDED` entries of the dynamic section.

use std::path::Path;

use thiserror::Error;

const PT_LOAD: u32 = 1;
const PT_DYNAMIC: u32 = 2;
const PF_X: u32 = 1;

const DT_NULL: i64 = 0;
const DT_NEEDED: i64 = 1;
const DT_STRTAB: i64 = 5;
const DT_STRSZ: i64 = 10;

const EHDR_SIZE: usize = 64;
const PHDR_SIZE: usize = 56;

#[derive(Debug, Error)]
pub enum ElfParseError {
    #[error("{path}: not an ELF file")]
    NotElf { path: String },
    #[error("{path}: unsupported ELF ({what})")]
    Unsupported { path: String, what: &'static str },
    #[error("{path}: malformed ELF: {what}")]
    Malformed { path: String, what: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProgramHeader {
    pub p_type: u32,
    pub flags: u32,
    pub offset: u64,
    pub vaddr: u64,
    pub filesz: u64,
    pub memsz: u64,
}

impl ProgramHeader {
    pub fn is_executable_load(&self) -> bool {
        self.p_type == PT_LOAD && self.flags & PF_X != 0
    }
}

/// A parsed view over an in-memory ELF64 image.
pub struct ElfFile {
    path: String,
    data: Vec<u8>,
    pub program_headers: Vec<ProgramHeader>,
}

fn u16_at(d: &[u8], off: usize) -> Option<u16> {
    Some(u16::from_le_bytes(d.get(off..off + 2)?.try_into().ok()?))
}

fn u32_at(d: &[u8], off: usize) -> Option<u32> {
    Some(u32::from_le_bytes(d.get(off..off + 4)?.try_into().ok()?))
}

fn u64_at(d: &[u8], off: usize) -> Option<u64> {
    Some(u64::from_le_bytes(d.get(off..off + 8)?.try_into().ok()?))
}

impl ElfFile {
    pub fn open(path: &Path) -> Result<Self, ElfParseError> {
        let data = std::fs::read(path).map_err(|source| ElfParseError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(path.display().to_string(), data)
    }

    pub fn parse(path: String, data: Vec<u8>) -> Result<Self, ElfParseError> {
        if data.len() < 4 || &data[..4] != b"\x7fELF" {
            return Err(ElfParseError::NotElf { path });
        }
        if data.len() < EHDR_SIZE {
            return Err(ElfParseError::Malformed { path, what: "truncated ELF header".into() });
        }
        if data[4] != 2 {
            return Err(ElfParseError::Unsupported { path, what: "not ELFCLASS64" });
        }
        if data[5] != 1 {
            return Err(ElfParseError::Unsupported { path, what: "not little-endian" });
        }
        let malformed = |what: &str| ElfParseError::Malformed {
            path: path.clone(),
            what: what.to_string(),
        };
        let phoff = u64_at(&data, 0x20).ok_or_else(|| malformed("e_phoff"))? as usize;
        let phentsize = u16_at(&data, 0x36).ok_or_else(|| malformed("e_phentsize"))? as usize;
        let phnum = u16_at(&data, 0x38).ok_or_else(|| malformed("e_phnum"))? as usize;
        if phnum > 0 && phentsize < PHDR_SIZE {
            return Err(malformed("e_phentsize smaller than an Elf64_Phdr"));
        }
        let mut program_headers = Vec::with_capacity(phnum);
        for i in 0..phnum {
            let base = phoff
                .checked_add(i * phentsize)
                .ok_or_else(|| malformed("program header offset overflow"))?;
            let rec = data
                .get(base..base + PHDR_SIZE)
                .ok_or_else(|| malformed(&format!("program header {i} out of bounds")))?;
            let ph = ProgramHeader {
                p_type: u32_at(rec, 0).unwrap(),
                flags: u32_at(rec, 4).unwrap(),
                offset: u64_at(rec, 8).unwrap(),
                vaddr: u64_at(rec, 16).unwrap(),
                filesz: u64_at(rec, 32).unwrap(),
                memsz: u64_at(rec, 40).unwrap(),
            };
            if ph.p_type == PT_LOAD || ph.p_type == PT_DYNAMIC {
                let end = ph.offset.checked_add(ph.filesz);
                if end.is_none_or(|e| e > data.len() as u64) {
                    return Err(malformed(&format!("segment {i} extends past end of file")));
                }
            }
            program_headers.push(ph);
        }
        Ok(ElfFile { path, data, program_headers })
    }

    pub fn segment_bytes(&self, ph: &ProgramHeader) -> &[u8] {
        &self.data[ph.offset as usize..(ph.offset + ph.filesz) as usize]
    }

    /// `(vaddr, bytes)` of every loadable segment with `PF_X`, in header order.
    pub fn executable_segments(&self) -> Vec<(u64, &[u8])> {
        self.program_headers
            .iter()
            .filter(|ph| ph.is_executable_load() && ph.filesz > 0)
            .map(|ph| (ph.vaddr, self.segment_bytes(ph)))
            .collect()
    }

    fn vaddr_to_offset(&self, vaddr: u64) -> Option<u64> {
        self.program_headers
            .iter()
            .filter(|ph| ph.p_type == PT_LOAD)
            .find(|ph| vaddr >= ph.vaddr && vaddr - ph.vaddr < ph.filesz)
            .map(|ph| ph.offset + (vaddr - ph.vaddr))
    }

    /// `DT_NEEDED` sonames in dynamic-section order. Empty when the file has
    /// no dynamic segment.
    pub fn needed_libraries(&self) -> Result<Vec<String>, ElfParseError> {
        let Some(dynamic) = self.program_headers.iter().find(|ph| ph.p_type == PT_DYNAMIC) else {
            return Ok(Vec::new());
        };
        let malformed = |what: String| ElfParseError::Malformed { path: self.path.clone(), what };
        let mut needed_offsets = Vec::new();
        let mut strtab = None;
        let mut strsz = None;
        for entry in self.segment_bytes(dynamic).chunks_exact(16) {
            let tag = u64_at(entry, 0).unwrap() as i64;
            let val = u64_at(entry, 8).unwrap();
            match tag {
                DT_NULL => break,
                DT_NEEDED => needed_offsets.push(val),
                DT_STRTAB => strtab = Some(val),
                DT_STRSZ => strsz = Some(val),
                _ => {}
            }
        }
        if needed_offsets.is_empty() {
            return Ok(Vec::new());
        }
        let strtab = strtab.ok_or_else(|| malformed("DT_NEEDED without DT_STRTAB".into()))?;
        let table_off = self
            .vaddr_to_offset(strtab)
            .ok_or_else(|| malformed(format!("DT_STRTAB {strtab:#x} not mapped by any PT_LOAD")))?
            as usize;
        let table_end = match strsz {
            Some(sz) => (table_off as u64 + sz).min(self.data.len() as u64) as usize,
            None => self.data.len(),
        };
        let table = &self.data[table_off..table_end];
        needed_offsets
            .into_iter()
            .map(|off| {
                let tail = table
                    .get(off as usize..)
                    .ok_or_else(|| malformed(format!("DT_NEEDED name offset {off} out of range")))?;
                let end = tail
                    .iter()
                    .position(|&b| b == 0)
                    .ok_or_else(|| malformed("unterminated DT_NEEDED name".into()))?;
                Ok(String::from_utf8_lossy(&tail[..end]).into_owned())
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Builds an ELF64 image with the given program headers appended after
    /// the file header, followed by `payload`.
    pub(crate) fn build_image(phdrs: &[ProgramHeader], payload: &[u8]) -> Vec<u8> {
        let mut d = vec![0u8; EHDR_SIZE];
        d[..4].copy_from_slice(b"\x7fELF");
        d[4] = 2;
        d[5] = 1;
        d[6] = 1;
        d[0x10..0x12].copy_from_slice(&2u16.to_le_bytes());
        d[0x12..0x14].copy_from_slice(&62u16.to_le_bytes());
        d[0x20..0x28].copy_from_slice(&(EHDR_SIZE as u64).to_le_bytes());
        d[0x34..0x36].copy_from_slice(&(EHDR_SIZE as u16).to_le_bytes());
        d[0x36..0x38].copy_from_slice(&(PHDR_SIZE as u16).to_le_bytes());
        d[0x38..0x3a].copy_from_slice(&(phdrs.len() as u16).to_le_bytes());
        for ph in phdrs {
            let mut rec = [0u8; PHDR_SIZE];
            rec[0..4].copy_from_slice(&ph.p_type.to_le_bytes());
            rec[4..8].copy_from_slice(&ph.flags.to_le_bytes());
            rec[8..16].copy_from_slice(&ph.offset.to_le_bytes());
            rec[16..24].copy_from_slice(&ph.vaddr.to_le_bytes());
            rec[24..32].copy_from_slice(&ph.vaddr.to_le_bytes());
            rec[32..40].copy_from_slice(&ph.filesz.to_le_bytes());
            rec[40..48].copy_from_slice(&ph.memsz.to_le_bytes());
            d.extend_from_slice(&rec);
        }
        d.extend_from_slice(payload);
        d
    }

    #[test]
    fn executable_segment_of_crafted_image() {
        let code_off = (EHDR_SIZE + PHDR_SIZE) as u64;
        let code: Vec<u8> = (0..16).collect();
        let ph = ProgramHeader {
            p_type: PT_LOAD,
            flags: PF_X | 4,
            offset: code_off,
            vaddr: 0x401000,
            filesz: 16,
            memsz: 16,
        };
        let elf = ElfFile::parse("t".into(), build_image(&[ph], &code)).unwrap();
        let segs = elf.executable_segments();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].0, 0x401000);
        assert_eq!(segs[0].1, &code[..]);
        assert!(elf.needed_libraries().unwrap().is_empty());
    }

    #[test]
    fn needed_entries_resolved_through_strtab() {
        let n = 3;
        let payload_off = (EHDR_SIZE + n * PHDR_SIZE) as u64;
        let strtab = b"\0libm.so.6\0libc.so.6\0";
        let mut dynamic = Vec::new();
        for (tag, val) in [
            (DT_NEEDED, 1u64),
            (DT_NEEDED, 11),
            (DT_STRTAB, 0x1000 + payload_off),
            (DT_STRSZ, strtab.len() as u64),
            (DT_NULL, 0),
        ] {
            dynamic.extend_from_slice(&tag.to_le_bytes());
            dynamic.extend_from_slice(&val.to_le_bytes());
        }
        let mut payload = strtab.to_vec();
        let dyn_off = payload_off + payload.len() as u64;
        payload.extend_from_slice(&dynamic);
        let total = payload.len() as u64;
        let phdrs = [
            ProgramHeader {
                p_type: PT_LOAD,
                flags: 4,
                offset: payload_off,
                vaddr: 0x1000 + payload_off,
                filesz: total,
                memsz: total,
            },
            ProgramHeader {
                p_type: PT_DYNAMIC,
                flags: 4,
                offset: dyn_off,
                vaddr: 0x1000 + dyn_off,
                filesz: dynamic.len() as u64,
                memsz: dynamic.len() as u64,
            },
            ProgramHeader { p_type: 4, flags: 4, offset: 0, vaddr: 0, filesz: 0, memsz: 0 },
        ];
        let elf = ElfFile::parse("t".into(), build_image(&phdrs, &payload)).unwrap();
        assert_eq!(elf.needed_libraries().unwrap(), vec!["libm.so.6", "libc.so.6"]);
        assert!(elf.executable_segments().is_empty());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(
            ElfFile::parse("t".into(), b"#!/bin/sh\n".to_vec()),
            Err(ElfParseError::NotElf { .. })
        ));
        let mut img = build_image(&[], &[]);
        img[4] = 1;
        assert!(matches!(
            ElfFile::parse("t".into(), img),
            Err(ElfParseError::Unsupported { .. })
        ));
        let ph = ProgramHeader { p_type: PT_LOAD, flags: PF_X, offset: 0, vaddr: 0, filesz: 1 << 20, memsz: 0 };
        assert!(matches!(
            ElfFile::parse("t".into(), build_image(&[ph], &[])),
            Err(ElfParseError::Malformed { .. })
        ));
        assert!(matches!(
            ElfFile::parse("t".into(), b"\x7fELF\x02\x01".to_vec()),
            Err(ElfParseError::Malformed { .. })
        ));
    }
}
