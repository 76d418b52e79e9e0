//! Deterministic template-based mutational fuzzing.
//!
//! Mutants only ever change hole values, so the literal skeleton of every
//! template is preserved and hole bounds are re-established after each
//! operator.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`), seeded with
//! `SHA-256("dvkit-fuzz-v1" || seed_le64 || len_le64(name) || name || index_le64)`.
//! Values are drawn as `next_u64() % n`. Within a stream, each mutant takes
//! `1 + r % 4` operator applications; each application picks a hole
//! uniformly among holes with an applicable operator, then an operator
//! uniformly among those applicable (in [`Operator`] declaration order).

mod template;

use std::collections::BTreeSet;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use template::{
    parse_template, BoundsError, Hole, HoleKind, Instance, Template, TemplateSyntaxError, Token,
};
use template::{is_printable, parse_int};

use crate::spec::TestCommand;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Bitflip,
    Byteflip,
    Insert,
    Delete,
    DictSubstitute,
    ArithStep,
}

impl Operator {
    pub const ALL: [Operator; 6] = [
        Operator::Bitflip,
        Operator::Byteflip,
        Operator::Insert,
        Operator::Delete,
        Operator::DictSubstitute,
        Operator::ArithStep,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutationPlan {
    pub seed: u64,
    pub count: usize,
    pub operators: BTreeSet<Operator>,
}

impl MutationPlan {
    pub fn new(seed: u64, count: usize) -> Self {
        MutationPlan { seed, count, operators: Operator::ALL.into_iter().collect() }
    }
}

/// Portable random stream used for all mutation decisions.
pub struct FuzzRng(ChaCha8Rng);

impl FuzzRng {
    pub fn keyed(seed: u64, name: &str, index: u64) -> Self {
        let mut h = Sha256::new();
        h.update(b"dvkit-fuzz-v1");
        h.update(seed.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        h.update(index.to_le_bytes());
        FuzzRng(ChaCha8Rng::from_seed(h.finalize().into()))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform-ish draw in `0..n`; `n` must be nonzero.
    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }
}

fn applicable(hole: &Hole, value: &[u8], ops: &BTreeSet<Operator>) -> Vec<Operator> {
    let len = value.len() as i64;
    ops.iter()
        .copied()
        .filter(|op| match (&hole.kind, op) {
            (HoleKind::Dict(_), Operator::DictSubstitute) => true,
            (HoleKind::Dict(_), _) | (_, Operator::DictSubstitute) => false,
            (HoleKind::Int, Operator::Insert | Operator::Delete) => false,
            (HoleKind::Int, _) => true,
            (_, Operator::Insert) => len < hole.max,
            (_, Operator::Delete) => len > hole.min,
            (_, _) => len > 0,
        })
        .collect()
}

fn fold_printable(b: u8) -> u8 {
    if is_printable(b) {
        b
    } else {
        0x20 + b % 95
    }
}

fn random_byte(rng: &mut FuzzRng, ascii: bool) -> u8 {
    if ascii {
        0x20 + rng.below(95) as u8
    } else {
        rng.below(256) as u8
    }
}

fn mutate_int(hole: &Hole, value: &[u8], op: Operator, rng: &mut FuzzRng) -> Vec<u8> {
    let cur = parse_int(value).unwrap_or(hole.min).clamp(hole.min, hole.max);
    let next = match op {
        Operator::Bitflip => cur ^ (1i64 << rng.below(63)),
        Operator::Byteflip => {
            let span = (hole.max as i128 - hole.min as i128 + 1) as u128;
            let off = if span > u64::MAX as u128 { rng.next_u64() as u128 } else { rng.below(span as u64) as u128 };
            (hole.min as i128 + off as i128) as i64
        }
        _ => {
            let delta = 1 + rng.below(35) as i64;
            if rng.below(2) == 0 {
                cur.saturating_add(delta)
            } else {
                cur.saturating_sub(delta)
            }
        }
    };
    next.clamp(hole.min, hole.max).to_string().into_bytes()
}

fn mutate_value(hole: &Hole, value: &mut Vec<u8>, op: Operator, rng: &mut FuzzRng) {
    let ascii = hole.kind == HoleKind::Ascii;
    match (&hole.kind, op) {
        (HoleKind::Dict(words), _) => {
            *value = words[rng.below(words.len() as u64) as usize].clone().into_bytes();
        }
        (HoleKind::Int, _) => *value = mutate_int(hole, value, op, rng),
        (_, Operator::Bitflip) => {
            let pos = rng.below(value.len() as u64) as usize;
            let bit = rng.below(if ascii { 7 } else { 8 });
            value[pos] ^= 1 << bit;
            if ascii {
                value[pos] = fold_printable(value[pos]);
            }
        }
        (_, Operator::Byteflip) => {
            let pos = rng.below(value.len() as u64) as usize;
            value[pos] ^= 0xff;
            if ascii {
                value[pos] = fold_printable(value[pos]);
            }
        }
        (_, Operator::Insert) => {
            let pos = rng.below(value.len() as u64 + 1) as usize;
            let b = random_byte(rng, ascii);
            value.insert(pos, b);
        }
        (_, Operator::Delete) => {
            let pos = rng.below(value.len() as u64) as usize;
            value.remove(pos);
        }
        (_, Operator::ArithStep) => {
            let pos = rng.below(value.len() as u64) as usize;
            let delta = 1 + rng.below(35) as i64;
            let delta = if rng.below(2) == 0 { delta } else { -delta };
            value[pos] = if ascii {
                (0x20 + (value[pos] as i64 - 0x20 + delta).rem_euclid(95)) as u8
            } else {
                (value[pos] as i64 + delta).rem_euclid(256) as u8
            };
        }
        (_, Operator::DictSubstitute) => unreachable!("filtered by applicable()"),
    }
    // clamp lengths back into bounds
    let (min, max) = (hole.min.max(0) as usize, hole.max.max(0) as usize);
    if !matches!(hole.kind, HoleKind::Int | HoleKind::Dict(_)) {
        value.truncate(max);
        while value.len() < min {
            value.push(random_byte(rng, ascii));
        }
    }
}

/// Produces `count` mutants of a group of templates sharing one stream.
/// Each mutant holds one instance per template.
pub fn generate_group(
    templates: &[Template],
    seeds: &[Instance],
    count: usize,
    operators: &BTreeSet<Operator>,
    rng: &mut FuzzRng,
) -> Result<Vec<Vec<Instance>>, BoundsError> {
    for (t, s) in templates.iter().zip(seeds) {
        t.check_instance(s)?;
    }
    if templates.len() != seeds.len() {
        return Err(BoundsError { hole: 0, message: "one seed instance per template required".into() });
    }
    let holes: Vec<(usize, usize, &Hole)> = templates
        .iter()
        .enumerate()
        .flat_map(|(ti, t)| t.holes().enumerate().map(move |(hi, h)| (ti, hi, h)))
        .collect();
    let mut mutants = Vec::with_capacity(count);
    for _ in 0..count {
        let mut current: Vec<Instance> = seeds.to_vec();
        let rounds = 1 + rng.below(4);
        for _ in 0..rounds {
            let candidates: Vec<(usize, usize, &Hole, Vec<Operator>)> = holes
                .iter()
                .map(|&(ti, hi, h)| (ti, hi, h, applicable(h, &current[ti][hi], operators)))
                .filter(|c| !c.3.is_empty())
                .collect();
            if candidates.is_empty() {
                break;
            }
            let (ti, hi, hole, ops) = &candidates[rng.below(candidates.len() as u64) as usize];
            let op = ops[rng.below(ops.len() as u64) as usize];
            mutate_value(hole, &mut current[*ti][*hi], op, rng);
        }
        mutants.push(current);
    }
    Ok(mutants)
}

/// `plan.count` mutants of one template. Pure in `(template, seed_value, plan)`.
pub fn generate(template: &Template, seed_value: &Instance, plan: &MutationPlan) -> Result<Vec<Instance>, BoundsError> {
    let mut rng = FuzzRng::keyed(plan.seed, "", 0);
    let group = generate_group(
        std::slice::from_ref(template),
        std::slice::from_ref(seed_value),
        plan.count,
        &plan.operators,
        &mut rng,
    )?;
    Ok(group.into_iter().map(|mut m| m.remove(0)).collect())
}

/// One concrete command line derived from a test command.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedInput {
    pub argv: Vec<Vec<u8>>,
    pub stdin: Vec<u8>,
    /// `None` for the seed input.
    pub mutant_index: Option<usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum DeriveError {
    #[error("{field}: {source}")]
    Template {
        field: String,
        #[source]
        source: TemplateSyntaxError,
    },
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

/// The seed command followed by `cmd.fuzz_count` mutants. The random stream
/// is keyed by `(plan.seed, feature, command_index)`; `plan.count` is not
/// used here.
pub fn derive_commands(
    cmd: &TestCommand,
    feature: &str,
    command_index: usize,
    plan: &MutationPlan,
) -> Result<Vec<DerivedInput>, DeriveError> {
    let mut templates = Vec::with_capacity(cmd.argv_template.len() + 1);
    for (i, a) in cmd.argv_template.iter().enumerate() {
        templates.push(
            parse_template(a).map_err(|source| DeriveError::Template { field: format!("argv[{i}]"), source })?,
        );
    }
    let stdin_template = cmd
        .stdin
        .as_deref()
        .map(parse_template)
        .transpose()
        .map_err(|source| DeriveError::Template { field: "stdin".into(), source })?
        .unwrap_or_default();
    templates.push(stdin_template);

    let seeds: Vec<Instance> = templates.iter().map(Template::seed_instance).collect();
    let render = |instances: &[Instance], mutant_index| {
        let (stdin_inst, argv_inst) = instances.split_last().expect("stdin template present");
        let (stdin_t, argv_t) = templates.split_last().expect("stdin template present");
        DerivedInput {
            argv: argv_t.iter().zip(argv_inst).map(|(t, i)| t.render(i)).collect(),
            stdin: stdin_t.render(stdin_inst),
            mutant_index,
        }
    };
    let mut rng = FuzzRng::keyed(plan.seed, feature, command_index as u64);
    let mutants = generate_group(&templates, &seeds, cmd.fuzz_count, &plan.operators, &mut rng)?;
    let mut out = Vec::with_capacity(mutants.len() + 1);
    out.push(render(&seeds, None));
    out.extend(mutants.iter().enumerate().map(|(i, m)| render(m, Some(i))));
    Ok(out)
}
