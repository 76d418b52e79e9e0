//! Table-driven decoder for the x86-64 instruction subset that matters for
//! gadget semantics.
//!
//! Covered: the one-byte ALU block (add/or/adc/sbb/and/sub/xor/cmp), push/pop,
//! mov (register, memory and immediate forms), lea, xchg, test, inc/dec,
//! not/neg/mul/imul/div/idiv, shifts and rotates, movzx/movsx/movsxd, cmovcc,
//! setcc, jcc (rel8/rel32), leave, ret/ret imm16, indirect jmp/call through
//! ModRM, syscall, int 0x80 and the nop forms. Legacy prefixes other than the
//! operand-size override are rejected, as is every opcode outside the table;
//! a rejected byte sequence ends any gadget window that runs into it.

use std::fmt;

/// Longest legal x86 instruction.
pub const MAX_INSN_LEN: usize = 15;

pub const RAX: u8 = 0;
pub const RCX: u8 = 1;
pub const RDX: u8 = 2;
pub const RSP: u8 = 4;
pub const RBP: u8 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Width {
    B8,
    B16,
    B32,
    B64,
}

impl Width {
    fn ptr_name(self) -> &'static str {
        match self {
            Width::B8 => "byte",
            Width::B16 => "word",
            Width::B32 => "dword",
            Width::B64 => "qword",
        }
    }
}

/// A general purpose register. `num` is the architectural number 0..15;
/// `high_byte` selects ah/ch/dh/bh (only legal without REX).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Reg {
    pub num: u8,
    pub width: Width,
    pub high_byte: bool,
}

impl Reg {
    pub const fn new(num: u8, width: Width) -> Self {
        Reg { num, width, high_byte: false }
    }

    pub fn is_rsp(&self) -> bool {
        self.num == RSP && !self.high_byte
    }
}

const NAMES64: [&str; 16] = [
    "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi", "r8", "r9", "r10", "r11", "r12", "r13",
    "r14", "r15",
];
const NAMES32: [&str; 16] = [
    "eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi", "r8d", "r9d", "r10d", "r11d", "r12d",
    "r13d", "r14d", "r15d",
];
const NAMES16: [&str; 16] = [
    "ax", "cx", "dx", "bx", "sp", "bp", "si", "di", "r8w", "r9w", "r10w", "r11w", "r12w", "r13w",
    "r14w", "r15w",
];
const NAMES8: [&str; 16] = [
    "al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil", "r8b", "r9b", "r10b", "r11b", "r12b",
    "r13b", "r14b", "r15b",
];
const NAMES8_HIGH: [&str; 4] = ["ah", "ch", "dh", "bh"];

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.num as usize;
        let name = match (self.width, self.high_byte) {
            (Width::B8, true) => NAMES8_HIGH[n & 3],
            (Width::B8, false) => NAMES8[n],
            (Width::B16, _) => NAMES16[n],
            (Width::B32, _) => NAMES32[n],
            (Width::B64, _) => NAMES64[n],
        };
        f.write_str(name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Mem {
    pub base: Option<u8>,
    pub index: Option<u8>,
    pub scale: u8,
    pub disp: i32,
    pub rip_relative: bool,
    pub width: Width,
}

impl fmt::Display for Mem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ptr [", self.width.ptr_name())?;
        let mut first = true;
        if self.rip_relative {
            f.write_str("rip")?;
            first = false;
        }
        if let Some(b) = self.base {
            f.write_str(NAMES64[b as usize])?;
            first = false;
        }
        if let Some(i) = self.index {
            if !first {
                f.write_str("+")?;
            }
            write!(f, "{}*{}", NAMES64[i as usize], self.scale)?;
            first = false;
        }
        if first {
            write!(f, "{:#x}", self.disp as u32)?;
        } else if self.disp < 0 {
            write!(f, "-{:#x}", (self.disp as i64).unsigned_abs())?;
        } else if self.disp > 0 {
            write!(f, "+{:#x}", self.disp)?;
        }
        f.write_str("]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Operand {
    Reg(Reg),
    Mem(Mem),
    Imm(i64),
}

impl Operand {
    pub fn reg(&self) -> Option<Reg> {
        match self {
            Operand::Reg(r) => Some(*r),
            _ => None,
        }
    }

    pub fn mem(&self) -> Option<Mem> {
        match self {
            Operand::Mem(m) => Some(*m),
            _ => None,
        }
    }
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => r.fmt(f),
            Operand::Mem(m) => m.fmt(f),
            Operand::Imm(v) if *v < 0 => write!(f, "-{:#x}", v.unsigned_abs()),
            Operand::Imm(v) => write!(f, "{v:#x}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cond {
    O,
    No,
    B,
    Ae,
    E,
    Ne,
    Be,
    A,
    S,
    Ns,
    P,
    Np,
    L,
    Ge,
    Le,
    G,
}

const CONDS: [Cond; 16] = [
    Cond::O,
    Cond::No,
    Cond::B,
    Cond::Ae,
    Cond::E,
    Cond::Ne,
    Cond::Be,
    Cond::A,
    Cond::S,
    Cond::Ns,
    Cond::P,
    Cond::Np,
    Cond::L,
    Cond::Ge,
    Cond::Le,
    Cond::G,
];

impl Cond {
    fn suffix(self) -> &'static str {
        match self {
            Cond::O => "o",
            Cond::No => "no",
            Cond::B => "b",
            Cond::Ae => "ae",
            Cond::E => "e",
            Cond::Ne => "ne",
            Cond::Be => "be",
            Cond::A => "a",
            Cond::S => "s",
            Cond::Ns => "ns",
            Cond::P => "p",
            Cond::Np => "np",
            Cond::L => "l",
            Cond::Ge => "ge",
            Cond::Le => "le",
            Cond::G => "g",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mnemonic {
    Add,
    Or,
    Adc,
    Sbb,
    And,
    Sub,
    Xor,
    Cmp,
    Test,
    Mov,
    Movzx,
    Movsx,
    Movsxd,
    Lea,
    Push,
    Pop,
    Xchg,
    Inc,
    Dec,
    Not,
    Neg,
    Mul,
    Imul,
    Div,
    Idiv,
    Rol,
    Ror,
    Rcl,
    Rcr,
    Shl,
    Shr,
    Sar,
    Cmov(Cond),
    Set(Cond),
    Jcc(Cond),
    /// cbw / cwde / cdqe
    SignExtendAcc,
    /// cwd / cdq / cqo
    SignExtendDx,
    Leave,
    Ret,
    Jmp,
    Call,
    Syscall,
    Int,
    Nop,
}

impl Mnemonic {
    fn name(self) -> String {
        let s = match self {
            Mnemonic::Add => "add",
            Mnemonic::Or => "or",
            Mnemonic::Adc => "adc",
            Mnemonic::Sbb => "sbb",
            Mnemonic::And => "and",
            Mnemonic::Sub => "sub",
            Mnemonic::Xor => "xor",
            Mnemonic::Cmp => "cmp",
            Mnemonic::Test => "test",
            Mnemonic::Mov => "mov",
            Mnemonic::Movzx => "movzx",
            Mnemonic::Movsx => "movsx",
            Mnemonic::Movsxd => "movsxd",
            Mnemonic::Lea => "lea",
            Mnemonic::Push => "push",
            Mnemonic::Pop => "pop",
            Mnemonic::Xchg => "xchg",
            Mnemonic::Inc => "inc",
            Mnemonic::Dec => "dec",
            Mnemonic::Not => "not",
            Mnemonic::Neg => "neg",
            Mnemonic::Mul => "mul",
            Mnemonic::Imul => "imul",
            Mnemonic::Div => "div",
            Mnemonic::Idiv => "idiv",
            Mnemonic::Rol => "rol",
            Mnemonic::Ror => "ror",
            Mnemonic::Rcl => "rcl",
            Mnemonic::Rcr => "rcr",
            Mnemonic::Shl => "shl",
            Mnemonic::Shr => "shr",
            Mnemonic::Sar => "sar",
            Mnemonic::Cmov(c) => return format!("cmov{}", c.suffix()),
            Mnemonic::Set(c) => return format!("set{}", c.suffix()),
            Mnemonic::Jcc(c) => return format!("j{}", c.suffix()),
            Mnemonic::SignExtendAcc => "cdqe",
            Mnemonic::SignExtendDx => "cqo",
            Mnemonic::Leave => "leave",
            Mnemonic::Ret => "ret",
            Mnemonic::Jmp => "jmp",
            Mnemonic::Call => "call",
            Mnemonic::Syscall => "syscall",
            Mnemonic::Int => "int",
            Mnemonic::Nop => "nop",
        };
        s.to_string()
    }
}

/// Control transfers that can end a gadget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminator {
    Ret,
    JmpIndirect,
    CallIndirect,
    Syscall,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub len: u8,
    pub mnemonic: Mnemonic,
    pub operands: [Option<Operand>; 3],
}

impl Instruction {
    fn new(mnemonic: Mnemonic, ops: &[Operand]) -> Self {
        let mut operands = [None; 3];
        for (slot, op) in operands.iter_mut().zip(ops) {
            *slot = Some(*op);
        }
        Instruction { len: 0, mnemonic, operands }
    }

    pub fn dst(&self) -> Option<Operand> {
        self.operands[0]
    }

    pub fn src(&self) -> Option<Operand> {
        self.operands[1]
    }

    pub fn operands(&self) -> impl Iterator<Item = Operand> + '_ {
        self.operands.iter().flatten().copied()
    }

    pub fn terminator(&self) -> Option<Terminator> {
        match self.mnemonic {
            Mnemonic::Ret => Some(Terminator::Ret),
            Mnemonic::Jmp => Some(Terminator::JmpIndirect),
            Mnemonic::Call => Some(Terminator::CallIndirect),
            Mnemonic::Syscall | Mnemonic::Int => Some(Terminator::Syscall),
            _ => None,
        }
    }

    /// Whether the first operand is written (as opposed to only read).
    fn writes_dst(&self) -> bool {
        use Mnemonic::*;
        match self.mnemonic {
            Cmp | Test | Push | Jcc(_) | Ret | Jmp | Call | Syscall | Int | Nop | Leave => false,
            // one-operand mul/div forms write rdx:rax, not their operand
            Mul | Div | Idiv => false,
            Imul => self.operands[1].is_some(),
            SignExtendAcc | SignExtendDx => false,
            _ => self.operands[0].is_some(),
        }
    }

    /// Full (64-bit) numbers of every general register this instruction
    /// writes, implicit writes included.
    pub fn written_regs(&self) -> Vec<u8> {
        use Mnemonic::*;
        let mut out = Vec::new();
        if self.writes_dst() {
            if let Some(Operand::Reg(r)) = self.operands[0] {
                out.push(r.num);
            }
        }
        match self.mnemonic {
            Xchg => {
                if let Some(Operand::Reg(r)) = self.operands[1] {
                    out.push(r.num);
                }
            }
            Push | Pop | Ret | Call => out.push(RSP),
            Leave => {
                out.push(RSP);
                out.push(RBP);
            }
            Mul | Div | Idiv => {
                out.push(RAX);
                out.push(RDX);
            }
            Imul if self.operands[1].is_none() => {
                out.push(RAX);
                out.push(RDX);
            }
            SignExtendAcc => out.push(RAX),
            SignExtendDx => out.push(RDX),
            Syscall => {
                out.push(RAX);
                out.push(RCX);
                out.push(11);
            }
            _ => {}
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Writes rsp other than through the implicit adjustment of push, pop,
    /// ret or call.
    pub fn writes_rsp_explicitly(&self) -> bool {
        use Mnemonic::*;
        match self.mnemonic {
            Leave => true,
            Push | Ret | Call => false,
            Pop => matches!(self.operands[0], Some(Operand::Reg(r)) if r.is_rsp()),
            Xchg => self
                .operands()
                .any(|o| matches!(o, Operand::Reg(r) if r.is_rsp())),
            _ => {
                self.writes_dst()
                    && matches!(self.operands[0], Some(Operand::Reg(r)) if r.is_rsp())
            }
        }
    }

    /// Explicit store to memory through an operand (stack traffic of push
    /// and call is not counted).
    pub fn writes_memory(&self) -> bool {
        if self.writes_dst() && matches!(self.operands[0], Some(Operand::Mem(_))) {
            return true;
        }
        self.mnemonic == Mnemonic::Xchg && self.operands().any(|o| matches!(o, Operand::Mem(_)))
    }

    pub fn reads_memory(&self) -> bool {
        match self.mnemonic {
            Mnemonic::Lea | Mnemonic::Nop => false,
            Mnemonic::Mov => matches!(self.operands[1], Some(Operand::Mem(_))),
            _ => self.operands().any(|o| matches!(o, Operand::Mem(_))),
        }
    }

    pub fn writes_flags(&self) -> bool {
        use Mnemonic::*;
        matches!(
            self.mnemonic,
            Add | Or | Adc | Sbb | And | Sub | Xor | Cmp | Test | Inc | Dec | Neg | Mul | Imul
                | Div | Idiv | Rol | Ror | Rcl | Rcr | Shl | Shr | Sar
        )
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.mnemonic.name())?;
        for (i, op) in self.operands().enumerate() {
            f.write_str(if i == 0 { " " } else { ", " })?;
            op.fmt(f)?;
        }
        Ok(())
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u8(&mut self) -> Option<u8> {
        let b = *self.bytes.get(self.pos)?;
        self.pos += 1;
        Some(b)
    }

    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let s = self.bytes.get(self.pos..self.pos + N)?;
        self.pos += N;
        s.try_into().ok()
    }

    fn i8(&mut self) -> Option<i64> {
        Some(self.u8()? as i8 as i64)
    }

    fn i16(&mut self) -> Option<i64> {
        Some(i16::from_le_bytes(self.take()?) as i64)
    }

    fn u16(&mut self) -> Option<i64> {
        Some(u16::from_le_bytes(self.take()?) as i64)
    }

    fn i32(&mut self) -> Option<i64> {
        Some(i32::from_le_bytes(self.take()?) as i64)
    }

    fn i64(&mut self) -> Option<i64> {
        Some(i64::from_le_bytes(self.take()?))
    }
}

#[derive(Clone, Copy, Default)]
struct Prefix {
    opsize16: bool,
    rex: u8,
}

impl Prefix {
    fn w(self) -> bool {
        self.rex & 8 != 0
    }
    fn r(self) -> u8 {
        (self.rex >> 2) & 1
    }
    fn x(self) -> u8 {
        (self.rex >> 1) & 1
    }
    fn b(self) -> u8 {
        self.rex & 1
    }

    /// Operand size of a `v`-sized operand.
    fn v(self) -> Width {
        if self.w() {
            Width::B64
        } else if self.opsize16 {
            Width::B16
        } else {
            Width::B32
        }
    }

    /// Operand size of instructions that default to 64 bits (push/pop).
    fn d64(self) -> Width {
        if self.opsize16 && !self.w() {
            Width::B16
        } else {
            Width::B64
        }
    }

    fn gpr(self, num: u8, width: Width) -> Reg {
        if width == Width::B8 && self.rex == 0 && (4..8).contains(&num) {
            Reg { num: num - 4, width, high_byte: true }
        } else {
            Reg::new(num, width)
        }
    }
}

struct ModRm {
    md: u8,
    reg: u8,
    rm: u8,
}

impl ModRm {
    fn split(b: u8) -> Self {
        ModRm { md: b >> 6, reg: (b >> 3) & 7, rm: b & 7 }
    }
}

fn rm_operand(c: &mut Cursor<'_>, p: Prefix, m: &ModRm, width: Width) -> Option<Operand> {
    if m.md == 3 {
        return Some(Operand::Reg(p.gpr(m.rm | (p.b() << 3), width)));
    }
    let mut mem = Mem { base: None, index: None, scale: 1, disp: 0, rip_relative: false, width };
    let mut no_base_disp32 = false;
    if m.rm == 4 {
        let sib = c.u8()?;
        let scale = 1u8 << (sib >> 6);
        let index = ((sib >> 3) & 7) | (p.x() << 3);
        let base = sib & 7;
        if index != 4 {
            mem.index = Some(index);
            mem.scale = scale;
        }
        if base == 5 && m.md == 0 {
            no_base_disp32 = true;
        } else {
            mem.base = Some(base | (p.b() << 3));
        }
    } else if m.rm == 5 && m.md == 0 {
        mem.rip_relative = true;
        no_base_disp32 = true;
    } else {
        mem.base = Some(m.rm | (p.b() << 3));
    }
    mem.disp = match (m.md, no_base_disp32) {
        (0, true) => c.i32()? as i32,
        (0, false) => 0,
        (1, _) => c.i8()? as i32,
        _ => c.i32()? as i32,
    };
    Some(Operand::Mem(mem))
}

fn imm_z(c: &mut Cursor<'_>, p: Prefix) -> Option<i64> {
    if p.opsize16 && !p.w() {
        c.i16()
    } else {
        c.i32()
    }
}

const ALU: [Mnemonic; 8] = [
    Mnemonic::Add,
    Mnemonic::Or,
    Mnemonic::Adc,
    Mnemonic::Sbb,
    Mnemonic::And,
    Mnemonic::Sub,
    Mnemonic::Xor,
    Mnemonic::Cmp,
];

const SHIFTS: [Option<Mnemonic>; 8] = [
    Some(Mnemonic::Rol),
    Some(Mnemonic::Ror),
    Some(Mnemonic::Rcl),
    Some(Mnemonic::Rcr),
    Some(Mnemonic::Shl),
    Some(Mnemonic::Shr),
    None,
    Some(Mnemonic::Sar),
];

/// Decodes one instruction at the start of `bytes`. Returns `None` when the
/// bytes are truncated or fall outside the supported subset.
pub fn decode(bytes: &[u8]) -> Option<Instruction> {
    let bytes = &bytes[..bytes.len().min(MAX_INSN_LEN)];
    let mut c = Cursor { bytes, pos: 0 };
    let mut p = Prefix::default();
    let mut op = c.u8()?;
    if op == 0x66 {
        p.opsize16 = true;
        op = c.u8()?;
    }
    if (0x40..=0x4f).contains(&op) {
        p.rex = op;
        op = c.u8()?;
    }
    let mut insn = decode_opcode(&mut c, p, op)?;
    insn.len = c.pos as u8;
    Some(insn)
}

fn decode_opcode(c: &mut Cursor<'_>, p: Prefix, op: u8) -> Option<Instruction> {
    use Mnemonic::*;
    let v = p.v();
    let ins = |m: Mnemonic, ops: &[Operand]| Some(Instruction::new(m, ops));
    match op {
        0x0f => decode_0f(c, p),
        0x00..=0x3f => {
            let mnem = ALU[(op >> 3) as usize];
            match op & 7 {
                0..=3 => {
                    let width = if op & 1 == 0 { Width::B8 } else { v };
                    let m = ModRm::split(c.u8()?);
                    let rm = rm_operand(c, p, &m, width)?;
                    let reg = Operand::Reg(p.gpr(m.reg | (p.r() << 3), width));
                    if op & 2 == 0 {
                        ins(mnem, &[rm, reg])
                    } else {
                        ins(mnem, &[reg, rm])
                    }
                }
                4 => {
                    let imm = c.i8()?;
                    ins(mnem, &[Operand::Reg(Reg::new(RAX, Width::B8)), Operand::Imm(imm)])
                }
                5 => {
                    let imm = imm_z(c, p)?;
                    ins(mnem, &[Operand::Reg(Reg::new(RAX, v)), Operand::Imm(imm)])
                }
                _ => None,
            }
        }
        0x50..=0x5f => {
            let reg = Operand::Reg(Reg::new((op & 7) | (p.b() << 3), p.d64()));
            ins(if op < 0x58 { Push } else { Pop }, &[reg])
        }
        0x63 => {
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, Width::B32)?;
            ins(Movsxd, &[Operand::Reg(p.gpr(m.reg | (p.r() << 3), v)), rm])
        }
        0x68 => {
            let imm = imm_z(c, p)?;
            ins(Push, &[Operand::Imm(imm)])
        }
        0x6a => {
            let imm = c.i8()?;
            ins(Push, &[Operand::Imm(imm)])
        }
        0x69 | 0x6b => {
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, v)?;
            let imm = if op == 0x69 { imm_z(c, p)? } else { c.i8()? };
            let reg = Operand::Reg(p.gpr(m.reg | (p.r() << 3), v));
            ins(Imul, &[reg, rm, Operand::Imm(imm)])
        }
        0x70..=0x7f => {
            let rel = c.i8()?;
            ins(Jcc(CONDS[(op & 0xf) as usize]), &[Operand::Imm(rel)])
        }
        0x80 | 0x81 | 0x83 => {
            let width = if op == 0x80 { Width::B8 } else { v };
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, width)?;
            let imm = if op == 0x81 { imm_z(c, p)? } else { c.i8()? };
            ins(ALU[m.reg as usize], &[rm, Operand::Imm(imm)])
        }
        0x84..=0x8b => {
            let width = if op & 1 == 0 { Width::B8 } else { v };
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, width)?;
            let reg = Operand::Reg(p.gpr(m.reg | (p.r() << 3), width));
            match op {
                0x84 | 0x85 => ins(Test, &[rm, reg]),
                0x86 | 0x87 => ins(Xchg, &[rm, reg]),
                0x88 | 0x89 => ins(Mov, &[rm, reg]),
                _ => ins(Mov, &[reg, rm]),
            }
        }
        0x8d => {
            let m = ModRm::split(c.u8()?);
            if m.md == 3 {
                return None;
            }
            let rm = rm_operand(c, p, &m, v)?;
            ins(Lea, &[Operand::Reg(p.gpr(m.reg | (p.r() << 3), v)), rm])
        }
        0x8f => {
            let m = ModRm::split(c.u8()?);
            if m.reg != 0 {
                return None;
            }
            let rm = rm_operand(c, p, &m, p.d64())?;
            ins(Pop, &[rm])
        }
        0x90 if p.b() == 0 => ins(Nop, &[]),
        0x90..=0x97 => {
            let reg = Reg::new((op & 7) | (p.b() << 3), v);
            ins(Xchg, &[Operand::Reg(reg), Operand::Reg(Reg::new(RAX, v))])
        }
        0x98 => ins(SignExtendAcc, &[]),
        0x99 => ins(SignExtendDx, &[]),
        0xa8 => {
            let imm = c.i8()?;
            ins(Test, &[Operand::Reg(Reg::new(RAX, Width::B8)), Operand::Imm(imm)])
        }
        0xa9 => {
            let imm = imm_z(c, p)?;
            ins(Test, &[Operand::Reg(Reg::new(RAX, v)), Operand::Imm(imm)])
        }
        0xb0..=0xb7 => {
            let reg = p.gpr((op & 7) | (p.b() << 3), Width::B8);
            let imm = c.i8()?;
            ins(Mov, &[Operand::Reg(reg), Operand::Imm(imm)])
        }
        0xb8..=0xbf => {
            let reg = Reg::new((op & 7) | (p.b() << 3), v);
            let imm = match v {
                Width::B64 => c.i64()?,
                Width::B16 => c.i16()?,
                _ => c.i32()?,
            };
            ins(Mov, &[Operand::Reg(reg), Operand::Imm(imm)])
        }
        0xc0 | 0xc1 | 0xd0..=0xd3 => {
            let width = if op & 1 == 0 { Width::B8 } else { v };
            let m = ModRm::split(c.u8()?);
            let mnem = SHIFTS[m.reg as usize]?;
            let rm = rm_operand(c, p, &m, width)?;
            let count = match op {
                0xc0 | 0xc1 => Operand::Imm(c.i8()? & 0xff),
                0xd0 | 0xd1 => Operand::Imm(1),
                _ => Operand::Reg(Reg::new(RCX, Width::B8)),
            };
            ins(mnem, &[rm, count])
        }
        0xc2 => {
            let imm = c.u16()?;
            ins(Ret, &[Operand::Imm(imm)])
        }
        0xc3 => ins(Ret, &[]),
        0xc6 | 0xc7 => {
            let width = if op == 0xc6 { Width::B8 } else { v };
            let m = ModRm::split(c.u8()?);
            if m.reg != 0 {
                return None;
            }
            let rm = rm_operand(c, p, &m, width)?;
            let imm = if op == 0xc6 { c.i8()? } else { imm_z(c, p)? };
            ins(Mov, &[rm, Operand::Imm(imm)])
        }
        0xc9 => ins(Leave, &[]),
        0xcd => match c.u8()? {
            0x80 => ins(Int, &[Operand::Imm(0x80)]),
            _ => None,
        },
        0xf6 | 0xf7 => {
            let width = if op == 0xf6 { Width::B8 } else { v };
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, width)?;
            match m.reg {
                0 => {
                    let imm = if op == 0xf6 { c.i8()? } else { imm_z(c, p)? };
                    ins(Test, &[rm, Operand::Imm(imm)])
                }
                1 => None,
                2 => ins(Not, &[rm]),
                3 => ins(Neg, &[rm]),
                4 => ins(Mul, &[rm]),
                5 => ins(Imul, &[rm]),
                6 => ins(Div, &[rm]),
                _ => ins(Idiv, &[rm]),
            }
        }
        0xfe => {
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, Width::B8)?;
            match m.reg {
                0 => ins(Inc, &[rm]),
                1 => ins(Dec, &[rm]),
                _ => None,
            }
        }
        0xff => {
            let m = ModRm::split(c.u8()?);
            match m.reg {
                0 | 1 => {
                    let rm = rm_operand(c, p, &m, v)?;
                    ins(if m.reg == 0 { Inc } else { Dec }, &[rm])
                }
                2 | 4 if !p.opsize16 => {
                    let rm = rm_operand(c, p, &m, Width::B64)?;
                    ins(if m.reg == 2 { Call } else { Jmp }, &[rm])
                }
                6 => {
                    let rm = rm_operand(c, p, &m, p.d64())?;
                    ins(Push, &[rm])
                }
                _ => None,
            }
        }
        _ => None,
    }
}

fn decode_0f(c: &mut Cursor<'_>, p: Prefix) -> Option<Instruction> {
    use Mnemonic::*;
    let v = p.v();
    let op = c.u8()?;
    let ins = |m: Mnemonic, ops: &[Operand]| Some(Instruction::new(m, ops));
    match op {
        0x05 => ins(Syscall, &[]),
        0x1f => {
            let m = ModRm::split(c.u8()?);
            if m.reg != 0 {
                return None;
            }
            let rm = rm_operand(c, p, &m, v)?;
            ins(Nop, &[rm])
        }
        0x40..=0x4f => {
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, v)?;
            let reg = Operand::Reg(p.gpr(m.reg | (p.r() << 3), v));
            ins(Cmov(CONDS[(op & 0xf) as usize]), &[reg, rm])
        }
        0x80..=0x8f => {
            let rel = c.i32()?;
            ins(Jcc(CONDS[(op & 0xf) as usize]), &[Operand::Imm(rel)])
        }
        0x90..=0x9f => {
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, Width::B8)?;
            ins(Set(CONDS[(op & 0xf) as usize]), &[rm])
        }
        0xaf => {
            let m = ModRm::split(c.u8()?);
            let rm = rm_operand(c, p, &m, v)?;
            let reg = Operand::Reg(p.gpr(m.reg | (p.r() << 3), v));
            ins(Imul, &[reg, rm])
        }
        0xb6 | 0xb7 | 0xbe | 0xbf => {
            let m = ModRm::split(c.u8()?);
            let src_width = if op & 1 == 0 { Width::B8 } else { Width::B16 };
            let rm = rm_operand(c, p, &m, src_width)?;
            let reg = Operand::Reg(p.gpr(m.reg | (p.r() << 3), v));
            ins(if op < 0xb8 { Movzx } else { Movsx }, &[reg, rm])
        }
        _ => None,
    }
}
