//! Gadget classification tables: the 11 expressivity classes, the 10
//! special-purpose gadget types and the side-constraint quality score.
//!
//! Expressivity classes (a class is satisfied when some gadget body
//! instruction performs it):
//!
//! | class              | instruction forms                                         |
//! |--------------------|-----------------------------------------------------------|
//! | LoadRegConst       | `pop reg` (reg != rsp)                                    |
//! | MoveRegReg         | `mov/movzx/movsx/movsxd r, r'`, `xchg r, r'`, `lea r, [r']`|
//! | ArithmeticAdd      | `add/adc/inc` on a register other than rsp                |
//! | ArithmeticSub      | `sub/sbb/dec/neg` on a register other than rsp            |
//! | Logic              | `and/or/xor/not`, shifts and rotates on a register        |
//! | MemoryRead         | `mov/movzx/movsx/movsxd r, [base...]`                     |
//! | MemoryWrite        | `mov [base...], r`                                        |
//! | CompareFlags       | `cmp`, `test`                                             |
//! | ConditionalControl | `jcc`, `cmovcc`, `setcc`                                  |
//! | StackLift          | `add rsp, +imm`, `sub rsp, -imm`, `lea rsp, [rsp+imm]`, `ret imm16` |
//! | SyscallInvoke      | gadget ends in `syscall` or `int 0x80`                    |
//!
//! Special-purpose types, per gadget:
//!
//! * `Syscall`: ends in `syscall` / `int 0x80`.
//! * `StackPivot`: body loads rsp with a new value (`leave`, `pop rsp`,
//!   `xchg` with rsp, `mov rsp, ...`, `lea rsp, [r]` with r != rsp, or
//!   register/memory arithmetic on rsp).
//! * For gadgets ending in an indirect `jmp` (JOP) or `call` (COP), with
//!   target register `t` (the register or the memory base of the operand):
//!   `Trampoline` when the body is empty; `Dispatcher` when the body
//!   advances `t` with add/sub/adc/sbb/inc/dec/lea; `DataLoader` when the
//!   body pops or loads from memory into a register other than `t`;
//!   `Initializer` when the body pops two or more distinct registers.
//!
//! Quality: each body instruction adds a penalty and the gadget score is
//! the sum. The first body instruction is the gadget's payload and is only
//! charged for major constraints; later instructions are charged major
//! (3.0) for explicit rsp writes, `leave`, conditional branches and memory
//! stores, and otherwise minor (0.5) when they write a general register,
//! push, or write flags. `ret imm16` with a nonzero immediate is minor.

use std::collections::BTreeSet;

use serde::Serialize;

use super::decode::{Instruction, Mnemonic, Operand, RSP};
use super::{Gadget, Terminator};

pub const MINOR_CONSTRAINT: f64 = 0.5;
pub const MAJOR_CONSTRAINT: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ExpressivityClass {
    LoadRegConst,
    MoveRegReg,
    ArithmeticAdd,
    ArithmeticSub,
    Logic,
    MemoryRead,
    MemoryWrite,
    CompareFlags,
    ConditionalControl,
    StackLift,
    SyscallInvoke,
}

impl ExpressivityClass {
    pub const ALL: [ExpressivityClass; 11] = [
        ExpressivityClass::LoadRegConst,
        ExpressivityClass::MoveRegReg,
        ExpressivityClass::ArithmeticAdd,
        ExpressivityClass::ArithmeticSub,
        ExpressivityClass::Logic,
        ExpressivityClass::MemoryRead,
        ExpressivityClass::MemoryWrite,
        ExpressivityClass::CompareFlags,
        ExpressivityClass::ConditionalControl,
        ExpressivityClass::StackLift,
        ExpressivityClass::SyscallInvoke,
    ];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum SpecialType {
    Syscall,
    JopDispatcher,
    JopDataLoader,
    JopInitializer,
    JopTrampoline,
    CopDispatcher,
    CopDataLoader,
    CopInitializer,
    CopTrampoline,
    StackPivot,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExpressivityProfile {
    pub satisfied: BTreeSet<ExpressivityClass>,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SpecialTypes {
    pub types: BTreeSet<SpecialType>,
    pub syscall_gadget_count: usize,
}

fn reg_dst(insn: &Instruction) -> Option<u8> {
    match insn.dst() {
        Some(Operand::Reg(r)) if !r.is_rsp() => Some(r.num),
        _ => None,
    }
}

fn plain_mem(op: Option<Operand>) -> bool {
    matches!(op, Some(Operand::Mem(m)) if m.base.is_some() && !m.rip_relative)
}

fn instruction_classes(insn: &Instruction, out: &mut BTreeSet<ExpressivityClass>) {
    use ExpressivityClass as C;
    use Mnemonic::*;
    let dst = reg_dst(insn);
    match insn.mnemonic {
        Pop if dst.is_some() => {
            out.insert(C::LoadRegConst);
        }
        Mov | Movzx | Movsx | Movsxd => match (insn.dst(), insn.src()) {
            (Some(Operand::Reg(d)), Some(Operand::Reg(s))) if !d.is_rsp() && d.num != s.num => {
                out.insert(C::MoveRegReg);
            }
            (Some(Operand::Reg(d)), src) if !d.is_rsp() && plain_mem(src) => {
                out.insert(C::MemoryRead);
            }
            (dst_op, Some(Operand::Reg(_))) if plain_mem(dst_op) => {
                out.insert(C::MemoryWrite);
            }
            _ => {}
        },
        Xchg => {
            if let (Some(Operand::Reg(a)), Some(Operand::Reg(b))) = (insn.dst(), insn.src()) {
                if a.num != b.num && !a.is_rsp() && !b.is_rsp() {
                    out.insert(C::MoveRegReg);
                }
            }
        }
        Lea => {
            if let (Some(d), Some(Operand::Mem(m))) = (dst, insn.src()) {
                if m.index.is_none() && m.disp == 0 && !m.rip_relative && m.base.is_some_and(|b| b != d) {
                    out.insert(C::MoveRegReg);
                }
            }
            if let (Some(Operand::Reg(r)), Some(Operand::Mem(m))) = (insn.dst(), insn.src()) {
                if r.is_rsp() && m.base == Some(RSP) && m.index.is_none() && m.disp > 0 {
                    out.insert(C::StackLift);
                }
            }
        }
        Add | Adc | Inc if dst.is_some() => {
            out.insert(C::ArithmeticAdd);
        }
        Sub | Sbb | Dec | Neg if dst.is_some() => {
            out.insert(C::ArithmeticSub);
        }
        And | Or | Xor | Not | Shl | Shr | Sar | Rol | Ror | Rcl | Rcr if dst.is_some() => {
            out.insert(C::Logic);
        }
        Cmp | Test => {
            out.insert(C::CompareFlags);
        }
        Jcc(_) | Cmov(_) | Set(_) => {
            out.insert(C::ConditionalControl);
        }
        _ => {}
    }
    if stack_lift_amount(insn).is_some_and(|n| n > 0) {
        out.insert(C::StackLift);
    }
}

/// Immediate amount by which `add/sub rsp, imm` moves the stack pointer up.
fn stack_lift_amount(insn: &Instruction) -> Option<i64> {
    match (insn.mnemonic, insn.dst(), insn.src()) {
        (Mnemonic::Add, Some(Operand::Reg(r)), Some(Operand::Imm(v))) if r.is_rsp() => Some(v),
        (Mnemonic::Sub, Some(Operand::Reg(r)), Some(Operand::Imm(v))) if r.is_rsp() => Some(-v),
        _ => None,
    }
}

fn ret_imm(g: &Gadget) -> i64 {
    let t = g.terminator_instruction();
    match (t.mnemonic, t.dst()) {
        (Mnemonic::Ret, Some(Operand::Imm(v))) => v,
        _ => 0,
    }
}

/// Expressivity classes a single gadget satisfies.
pub fn gadget_classes(g: &Gadget) -> BTreeSet<ExpressivityClass> {
    let mut out = BTreeSet::new();
    for insn in g.body() {
        instruction_classes(insn, &mut out);
    }
    if g.terminator == Terminator::Syscall {
        out.insert(ExpressivityClass::SyscallInvoke);
    }
    if ret_imm(g) > 0 {
        out.insert(ExpressivityClass::StackLift);
    }
    out
}

pub fn classify_expressivity(gadgets: &[Gadget]) -> ExpressivityProfile {
    let mut satisfied = BTreeSet::new();
    for g in gadgets {
        satisfied.extend(gadget_classes(g));
        if satisfied.len() == ExpressivityClass::ALL.len() {
            break;
        }
    }
    ExpressivityProfile { count: satisfied.len(), satisfied }
}

fn is_pivot(insn: &Instruction) -> bool {
    use Mnemonic::*;
    if !insn.writes_rsp_explicitly() {
        return false;
    }
    match insn.mnemonic {
        Add | Sub => stack_lift_amount(insn).is_none(),
        Lea => !matches!(insn.src(), Some(Operand::Mem(m)) if m.base == Some(RSP) && m.index.is_none()),
        Leave | Pop | Xchg | Mov | Movzx | Movsx | Movsxd | Adc | Sbb | Cmov(_) => true,
        _ => false,
    }
}

/// Register that the indirect branch of `g` goes through, if any.
fn branch_target_reg(g: &Gadget) -> Option<u8> {
    match g.terminator_instruction().dst()? {
        Operand::Reg(r) => Some(r.num),
        Operand::Mem(m) => m.base,
        Operand::Imm(_) => None,
    }
}

/// Special-purpose types a single gadget belongs to.
pub fn gadget_special_types(g: &Gadget) -> BTreeSet<SpecialType> {
    use Mnemonic::*;
    let mut out = BTreeSet::new();
    if g.terminator == Terminator::Syscall {
        out.insert(SpecialType::Syscall);
    }
    if g.body().iter().any(is_pivot) {
        out.insert(SpecialType::StackPivot);
    }
    let [trampoline, dispatcher, loader, initializer] = match g.terminator {
        Terminator::JmpIndirect => [
            SpecialType::JopTrampoline,
            SpecialType::JopDispatcher,
            SpecialType::JopDataLoader,
            SpecialType::JopInitializer,
        ],
        Terminator::CallIndirect => [
            SpecialType::CopTrampoline,
            SpecialType::CopDispatcher,
            SpecialType::CopDataLoader,
            SpecialType::CopInitializer,
        ],
        _ => return out,
    };
    let body = g.body();
    if body.is_empty() {
        out.insert(trampoline);
        return out;
    }
    let target = branch_target_reg(g);
    let advances_target = body.iter().any(|i| {
        matches!(i.mnemonic, Add | Sub | Adc | Sbb | Inc | Dec | Lea)
            && reg_dst(i).is_some()
            && reg_dst(i) == target
    });
    if advances_target {
        out.insert(dispatcher);
    }
    let loads_other = body.iter().any(|i| {
        let d = reg_dst(i);
        d.is_some()
            && d != target
            && (i.mnemonic == Pop || (matches!(i.mnemonic, Mov | Movzx | Movsx | Movsxd) && i.reads_memory()))
    });
    if loads_other {
        out.insert(loader);
    }
    let popped: BTreeSet<u8> =
        body.iter().filter(|i| i.mnemonic == Pop).filter_map(reg_dst).collect();
    if popped.len() >= 2 {
        out.insert(initializer);
    }
    out
}

pub fn special_types(gadgets: &[Gadget]) -> SpecialTypes {
    let mut result = SpecialTypes::default();
    for g in gadgets {
        result.types.extend(gadget_special_types(g));
        if g.terminator == Terminator::Syscall {
            result.syscall_gadget_count += 1;
        }
    }
    result
}

fn instruction_penalty(insn: &Instruction, is_payload: bool) -> f64 {
    let major = insn.writes_rsp_explicitly()
        || matches!(insn.mnemonic, Mnemonic::Jcc(_))
        || (!is_payload && insn.writes_memory());
    if major {
        return MAJOR_CONSTRAINT;
    }
    if is_payload {
        return 0.0;
    }
    let clobbers = insn.written_regs().iter().any(|&r| r != RSP);
    if clobbers || insn.mnemonic == Mnemonic::Push || insn.writes_flags() {
        MINOR_CONSTRAINT
    } else {
        0.0
    }
}

/// Side-constraint penalty of one gadget (0.0 = freely chainable).
pub fn score_quality(g: &Gadget) -> f64 {
    let mut score = 0.0;
    for (i, insn) in g.body().iter().enumerate() {
        score += instruction_penalty(insn, i == 0);
    }
    if ret_imm(g) > 0 {
        score += MINOR_CONSTRAINT;
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use ExpressivityClass as C;

    fn g(bytes: &[u8]) -> Gadget {
        Gadget::from_bytes(0x1000, bytes).unwrap_or_else(|| panic!("not a gadget: {bytes:02x?}"))
    }

    #[test]
    fn pop_ret_is_load_const_only() {
        let p = classify_expressivity(&[g(&[0x58, 0xc3])]);
        assert_eq!(p.satisfied.into_iter().collect::<Vec<_>>(), vec![C::LoadRegConst]);
        assert_eq!(p.count, 1);
        assert_eq!(classify_expressivity(&[]).count, 0);
    }

    #[test]
    fn class_table() {
        let cases: &[(&[u8], &[C])] = &[
            (&[0x48, 0x89, 0xc3, 0xc3], &[C::MoveRegReg]),
            (&[0x48, 0x01, 0xd8, 0xc3], &[C::ArithmeticAdd]),
            (&[0x48, 0x29, 0xd8, 0xc3], &[C::ArithmeticSub]),
            (&[0x31, 0xc0, 0xc3], &[C::Logic]),
            (&[0x48, 0x8b, 0x03, 0xc3], &[C::MemoryRead]),
            (&[0x48, 0x89, 0x03, 0xc3], &[C::MemoryWrite]),
            (&[0x48, 0x39, 0xd8, 0xc3], &[C::CompareFlags]),
            (&[0x48, 0x0f, 0x44, 0xc3, 0xc3], &[C::ConditionalControl]),
            (&[0x48, 0x83, 0xc4, 0x10, 0xc3], &[C::StackLift]),
            (&[0xc2, 0x08, 0x00], &[C::StackLift]),
            (&[0x0f, 0x05], &[C::SyscallInvoke]),
            (&[0xc9, 0xc3], &[]),
            (&[0xc3], &[]),
        ];
        for (bytes, want) in cases {
            let got: Vec<C> = gadget_classes(&g(bytes)).into_iter().collect();
            assert_eq!(&got, want, "{}", g(bytes));
        }
    }

    #[test]
    fn special_type_table() {
        use SpecialType as S;
        let cases: &[(&[u8], &[S])] = &[
            (&[0x0f, 0x05], &[S::Syscall]),
            (&[0xcd, 0x80], &[S::Syscall]),
            (&[0xc9, 0xc3], &[S::StackPivot]),
            (&[0x5c, 0xc3], &[S::StackPivot]),
            (&[0x48, 0x94, 0xc3], &[S::StackPivot]),
            (&[0x48, 0x83, 0xc4, 0x10, 0xc3], &[]),
            (&[0xff, 0xe0], &[S::JopTrampoline]),
            (&[0xff, 0x10], &[S::CopTrampoline]),
            (&[0x48, 0x83, 0xc0, 0x08, 0xff, 0x20], &[S::JopDispatcher]),
            (&[0x5b, 0xff, 0xe0], &[S::JopDataLoader]),
            (&[0x5b, 0x59, 0xff, 0xd0], &[S::CopDataLoader, S::CopInitializer]),
            (&[0x58, 0x5b, 0xff, 0xe0], &[S::JopDataLoader, S::JopInitializer]),
            (&[0x58, 0xc3], &[]),
        ];
        for (bytes, want) in cases {
            let got: Vec<S> = gadget_special_types(&g(bytes)).into_iter().collect();
            assert_eq!(&got, want, "{}", g(bytes));
        }
        let empty = special_types(&[]);
        assert!(empty.types.is_empty());
        assert_eq!(empty.syscall_gadget_count, 0);
        let sys = special_types(&[g(&[0x0f, 0x05])]);
        assert_eq!(sys.syscall_gadget_count, 1);
        assert_eq!(sys.types.into_iter().collect::<Vec<_>>(), vec![S::Syscall]);
    }

    #[test]
    fn quality_examples() {
        assert_eq!(score_quality(&g(&[0x58, 0xc3])), 0.0);
        assert_eq!(score_quality(&g(&[0x58, 0x5b, 0xc3])), 0.5);
        assert_eq!(score_quality(&g(&[0x48, 0x83, 0xc4, 0x10, 0xc3])), 3.0);
        assert_eq!(score_quality(&g(&[0xc9, 0xc3])), 3.0);
        assert_eq!(score_quality(&g(&[0x58, 0x75, 0x02, 0xc3])), 3.0);
        assert_eq!(score_quality(&g(&[0x58, 0x48, 0x89, 0x03, 0xc3])), 3.0);
        assert_eq!(score_quality(&g(&[0x58, 0x90, 0xc3])), 0.0);
        assert_eq!(score_quality(&g(&[0x58, 0xc2, 0x08, 0x00])), 0.5);
        assert_eq!(score_quality(&g(&[0xc3])), 0.0);
    }
}
