#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use dvkit::fuzz::{HoleKind, Template, Token};
use dvkit::gadget::decode::MAX_INSN_LEN;
use dvkit::gadget::{decode, Gadget, MAX_GADGET_LEN};
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Every-offset gadget finder: walks forward from each start, decoding one
/// instruction at a time from a slice cut at the longest legal instruction.
pub fn oracle_scan(base: u64, bytes: &[u8]) -> Vec<(u64, Vec<u8>, String)> {
    let mut out = Vec::new();
    for start in 0..bytes.len() {
        let mut pos = start;
        let mut texts = Vec::new();
        for _ in 0..MAX_GADGET_LEN {
            if pos >= bytes.len() {
                break;
            }
            let end = (pos + MAX_INSN_LEN).min(bytes.len());
            let Some(insn) = decode(&bytes[pos..end]) else { break };
            pos += insn.len as usize;
            texts.push(insn.to_string());
            if insn.terminator().is_some() {
                out.push((base + start as u64, bytes[start..pos].to_vec(), texts.join("; ")));
                break;
            }
        }
    }
    out
}

/// Tries every (start, end) window; exponentially dumber than `oracle_scan`,
/// for small buffers only.
pub fn window_oracle(base: u64, bytes: &[u8]) -> Vec<(u64, Vec<u8>, String)> {
    let mut out = Vec::new();
    for start in 0..bytes.len() {
        for end in start + 1..=bytes.len() {
            if let Some(g) = Gadget::from_bytes(base + start as u64, &bytes[start..end]) {
                out.push((g.address, g.raw_bytes.clone(), g.to_string()));
                break;
            }
        }
    }
    out
}

pub fn summarize(gs: &[Gadget]) -> Vec<(u64, Vec<u8>, String)> {
    gs.iter().map(|g| (g.address, g.raw_bytes.clone(), g.to_string())).collect()
}

/// Code-like snippets mixed into random buffers so that gadgets are common.
const SNIPPETS: &[&[u8]] = &[
    &[0xc3],
    &[0xc2, 0x08, 0x00],
    &[0x58],
    &[0x5f],
    &[0x41, 0x5c],
    &[0x48, 0x89, 0xc7],
    &[0x48, 0x8b, 0x43, 0x08],
    &[0x48, 0x01, 0xd8],
    &[0x48, 0x83, 0xc4, 0x18],
    &[0x0f, 0x05],
    &[0xff, 0xe0],
    &[0xff, 0xd3],
    &[0xff, 0x20],
    &[0xc9],
    &[0x5c],
    &[0x48, 0x94],
    &[0x31, 0xc0],
    &[0x74, 0x02],
    &[0x89, 0x07],
    &[0xcd, 0x80],
    &[0x66, 0x90],
    &[0x0f, 0x1f, 0x44, 0x00, 0x00],
];

pub fn random_buffer(rng: &mut ChaCha8Rng, max_len: usize) -> Vec<u8> {
    let len = 1 + (rng.next_u64() as usize) % max_len;
    let code_like = rng.next_u64().is_multiple_of(2);
    let mut buf = Vec::with_capacity(len + 8);
    while buf.len() < len {
        if code_like && !rng.next_u64().is_multiple_of(3) {
            let s = SNIPPETS[(rng.next_u64() as usize) % SNIPPETS.len()];
            buf.extend_from_slice(s);
        } else {
            buf.push(rng.next_u64() as u8);
        }
    }
    buf.truncate(len);
    buf
}

fn escape(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("\\x{b:02x}")).collect()
}

/// Regex that accepts exactly the renderings of the template's skeleton
/// with in-bounds hole values.
pub fn skeleton_regex(t: &Template) -> regex::bytes::Regex {
    let mut re = String::from("(?s-u)^");
    for tok in &t.tokens {
        match tok {
            Token::Literal(l) => re.push_str(&escape(l)),
            Token::Hole(h) => match &h.kind {
                HoleKind::Ascii => re.push_str(&format!("([\\x20-\\x7e]{{{},{}}})", h.min, h.max)),
                HoleKind::Bytes => re.push_str(&format!("(.{{{},{}}})", h.min, h.max)),
                HoleKind::Int => re.push_str("(-?[0-9]+)"),
                HoleKind::Dict(words) => {
                    let alts: Vec<String> = words.iter().map(|w| escape(w.as_bytes())).collect();
                    re.push_str(&format!("({})", alts.join("|")));
                }
            },
        }
    }
    re.push('$');
    regex::bytes::Regex::new(&re).unwrap()
}

/// Checks a rendering against its template without using the template's
/// own checker: literal text in place, hole values in bounds.
pub fn matches_skeleton(t: &Template, rendered: &[u8]) -> bool {
    let Some(caps) = skeleton_regex(t).captures(rendered) else { return false };
    let holes: Vec<_> = t.holes().collect();
    holes.iter().enumerate().all(|(i, h)| {
        let v = caps.get(i + 1).unwrap().as_bytes();
        match h.kind {
            HoleKind::Int => std::str::from_utf8(v)
                .ok()
                .and_then(|s| s.parse::<i64>().ok())
                .is_some_and(|n| n >= h.min && n <= h.max),
            _ => true,
        }
    })
}

pub const TOY_SOURCE: &str = r#"
#include <ctype.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int feature_a(const char *s) {
#ifdef CRASH_A
    abort();
#endif
    for (; *s; s++)
        putchar(toupper((unsigned char)*s));
    putchar('\n');
    return 0;
}

#ifndef NO_B
static int feature_b(const char *s) {
    size_t n = strlen(s);
    while (n--)
        putchar(s[n]);
    putchar('\n');
    return 0;
}
#endif

int main(int argc, char **argv) {
    if (argc < 3) {
        fprintf(stderr, "usage: toy a|b TEXT\n");
        return 2;
    }
    if (!strcmp(argv[1], "a"))
        return feature_a(argv[2]);
#ifndef NO_B
    if (!strcmp(argv[1], "b"))
        return feature_b(argv[2]);
#endif
    fprintf(stderr, "toy: unknown command %s\n", argv[1]);
    return 2;
}
"#;

/// Deterministic CPU-bound program.
pub const SPIN_SOURCE: &str = r#"
#include <stdio.h>
int main(void) {
    volatile unsigned long acc = 0;
    for (unsigned long i = 0; i < 60000000UL; i++)
        acc += i ^ (acc >> 3);
    printf("%lu\n", acc);
    return 0;
}
"#;

pub const LIBM_SOURCE: &str = r#"
#include <math.h>
#include <stdio.h>
int main(int argc, char **argv) {
    volatile double x = argc;
    printf("%f\n", cos(x));
    return 0;
}
"#;

/// Compiles `source` with gcc; panics with the compiler output on failure.
pub fn gcc(dir: &Path, name: &str, source: &str, flags: &[&str]) -> PathBuf {
    let src = dir.join(format!("{name}.c"));
    std::fs::write(&src, source).unwrap();
    let out = dir.join(name);
    let res = Command::new("gcc").arg(&src).args(flags).arg("-o").arg(&out).output().expect("gcc runs");
    assert!(res.status.success(), "gcc failed: {}", String::from_utf8_lossy(&res.stderr));
    out
}

/// Libraries listed by the reference dumper, in order.
pub fn readelf_needed(path: &Path) -> Vec<String> {
    let out = Command::new("readelf").arg("-d").arg(path).output().expect("readelf runs");
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .filter(|l| l.contains("(NEEDED)"))
        .filter_map(|l| Some(l.split('[').nth(1)?.trim_end_matches(']').to_string()))
        .collect()
}

pub struct Toy {
    pub dir: tempfile::TempDir,
    pub spec_path: PathBuf,
}

/// Toy benchmark: feature A retained, feature B debloated, and three
/// variants (B compiled out, unmodified, A aborting).
pub fn toy_benchmark(fuzz_count: usize, variants: &[&str]) -> Toy {
    let dir = tempfile::tempdir().unwrap();
    let orig = gcc(dir.path(), "toy", TOY_SOURCE, &["-O1"]);
    let mut vs = Vec::new();
    for v in variants {
        let flags: &[&str] = match *v {
            "no_b" => &["-O1", "-DNO_B"],
            "same" => &["-O1"],
            "crash_a" => &["-O1", "-DCRASH_A"],
            other => panic!("unknown toy variant {other}"),
        };
        let exe = gcc(dir.path(), &format!("toy_{v}"), TOY_SOURCE, flags);
        vs.push(serde_json::json!({"label": v, "exe": exe}));
    }
    let spec = serde_json::json!({
        "id": "toy",
        "original": {"label": "toy", "exe": orig},
        "variants": vs,
        "features": [
            {"name": "A", "disposition": "retain", "anchor": true,
             "commands": [{"argv": ["a", "{{ascii:1..12=hello}}"], "fuzz_count": fuzz_count}]},
            {"name": "B", "disposition": "debloat",
             "commands": [{"argv": ["b", "{{ascii:1..12=world}}"], "fuzz_count": fuzz_count}]}
        ],
        "env": {"LC_ALL": "C"},
        "timeout_seconds": 10,
        "trials": 3
    });
    let spec_path = dir.path().join("spec.json");
    std::fs::write(&spec_path, serde_json::to_vec_pretty(&spec).unwrap()).unwrap();
    Toy { dir, spec_path }
}
