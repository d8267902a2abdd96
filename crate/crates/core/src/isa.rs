//! The target instruction set.
//!
//! An AVR-flavoured 8-bit register machine: 32 byte-wide registers, a
//! downward-growing native stack, and three pointer pairs (X, Y, Z).
//! Every instruction occupies one 16-bit flash word except `JMP`/`CALL`
//! (two words) and the temporary branch tag emitted for unresolved
//! branches (three words, replaced before the image is finalised).
//!
//! Word layouts (documented here as the encoding reference):
//!
//! ```text
//! Form A  0oooooddddd sssss   two-register / one-register ops
//! Form B  10spdddddd rrrrr0   LDD/STD  (s=store, p=0:Y 1:Z, d=disp, r=reg)
//! Form C  110nnn pppppppppp   RJMP / BR / ADIW / SBIW / JMP / CALL / MOVW
//! Form D  111ddddd iiiiiiii   LDI reg, imm8
//! ```

use alloc::string::String;
use core::fmt;

/// A byte register, `r0`..`r31`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Reg(pub u8);

impl Reg {
    pub fn valid(self) -> bool {
        self.0 < 32
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// A register pair, named by its even base register (`r4:r5` is `Pair(4)`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pair(pub u8);

impl Pair {
    pub fn lo(self) -> Reg {
        Reg(self.0)
    }
    pub fn hi(self) -> Reg {
        Reg(self.0 + 1)
    }
    pub fn valid(self) -> bool {
        self.0 < 32 && self.0 % 2 == 0
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}:r{}", self.0, self.0 + 1)
    }
}

/// Pointer registers usable by the post-increment / pre-decrement loads and
/// stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ptr {
    X,
    Y,
    Z,
}

impl Ptr {
    pub fn pair(self) -> Pair {
        match self {
            Ptr::X => Pair(26),
            Ptr::Y => Pair(28),
            Ptr::Z => Pair(30),
        }
    }
    fn code(self) -> u16 {
        match self {
            Ptr::X => 0,
            Ptr::Y => 1,
            Ptr::Z => 2,
        }
    }
    fn from_code(c: u16) -> Option<Ptr> {
        match c {
            0 => Some(Ptr::X),
            1 => Some(Ptr::Y),
            2 => Some(Ptr::Z),
            _ => None,
        }
    }
}

/// Displacement-addressed pointer (LDD/STD only work off Y and Z).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DispPtr {
    Y,
    Z,
}

impl DispPtr {
    pub fn pair(self) -> Pair {
        match self {
            DispPtr::Y => Pair(28),
            DispPtr::Z => Pair(30),
        }
    }
}

/// Hardware branch conditions. `GT`/`LE` do not exist; the compiler lowers
/// them by swapping compare operands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cond {
    Eq,
    Ne,
    LtS,
    GeS,
    LtU,
    GeU,
    Pl,
    Mi,
}

impl Cond {
    pub fn negate(self) -> Cond {
        match self {
            Cond::Eq => Cond::Ne,
            Cond::Ne => Cond::Eq,
            Cond::LtS => Cond::GeS,
            Cond::GeS => Cond::LtS,
            Cond::LtU => Cond::GeU,
            Cond::GeU => Cond::LtU,
            Cond::Pl => Cond::Mi,
            Cond::Mi => Cond::Pl,
        }
    }
    fn code(self) -> u16 {
        match self {
            Cond::Eq => 0,
            Cond::Ne => 1,
            Cond::LtS => 2,
            Cond::GeS => 3,
            Cond::LtU => 4,
            Cond::GeU => 5,
            Cond::Pl => 6,
            Cond::Mi => 7,
        }
    }
    fn from_code(c: u16) -> Cond {
        match c & 7 {
            0 => Cond::Eq,
            1 => Cond::Ne,
            2 => Cond::LtS,
            3 => Cond::GeS,
            4 => Cond::LtU,
            5 => Cond::GeU,
            6 => Cond::Pl,
            _ => Cond::Mi,
        }
    }
}

/// One target instruction.
///
/// `BranchTag` is the temporary three-word placeholder for a bytecode-level
/// branch whose target address is not yet known; it never appears in a
/// finalised image. `cond: None` encodes an unconditional branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Instr {
    Push(Reg),
    Pop(Reg),
    LdInc(Reg, Ptr),
    LdDec(Reg, Ptr),
    StInc(Ptr, Reg),
    StDec(Ptr, Reg),
    Ldd(Reg, DispPtr, u8),
    Std(DispPtr, u8, Reg),
    Ldi(Reg, u8),
    Mov(Reg, Reg),
    Movw(Pair, Pair),
    Add(Reg, Reg),
    Adc(Reg, Reg),
    Sub(Reg, Reg),
    Sbc(Reg, Reg),
    And(Reg, Reg),
    Or(Reg, Reg),
    Eor(Reg, Reg),
    Cp(Reg, Reg),
    Cpc(Reg, Reg),
    Mul(Reg, Reg),
    Muls(Reg, Reg),
    Adiw(Pair, u8),
    Sbiw(Pair, u8),
    Inc(Reg),
    Dec(Reg),
    Lsr(Reg),
    Lsl(Reg),
    Rol(Reg),
    Ror(Reg),
    Asr(Reg),
    /// Relative jump, displacement in words from the next instruction.
    Rjmp(i16),
    /// Conditional branch, short reach (±64 words).
    Brc(Cond, i8),
    Jmp(u16),
    Call(u16),
    Ret,
    Ijmp,
    Nop,
    Break,
    BranchTag { cond: Option<Cond>, target: u16 },
}

/// Mnemonic-only view of the instruction set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Opcode {
    Push,
    Pop,
    LdInc,
    LdDec,
    StInc,
    StDec,
    Ldd,
    Std,
    Ldi,
    Mov,
    Movw,
    Add,
    Adc,
    Sub,
    Sbc,
    And,
    Or,
    Eor,
    Cp,
    Cpc,
    Mul,
    Muls,
    Adiw,
    Sbiw,
    Inc,
    Dec,
    Lsr,
    Lsl,
    Rol,
    Ror,
    Asr,
    Rjmp,
    BrCond,
    Jmp,
    Call,
    Ret,
    Ijmp,
    Nop,
    Break,
    BranchTag,
}

/// Overhead category used for trace accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    PushPop,
    LoadStore,
    Mov,
    Other,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::PushPop,
        Category::LoadStore,
        Category::Mov,
        Category::Other,
    ];
    pub fn index(self) -> usize {
        match self {
            Category::PushPop => 0,
            Category::LoadStore => 1,
            Category::Mov => 2,
            Category::Other => 3,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            Category::PushPop => "push/pop",
            Category::LoadStore => "load/store",
            Category::Mov => "mov",
            Category::Other => "other",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IsaError {
    /// Instruction has an operand outside its encodable range.
    Malformed(String),
    /// A branch tag was passed where a resolved instruction is required.
    UnresolvedBranch,
    /// Unknown bit pattern while decoding.
    Decode { offset: usize },
    /// Byte stream ended in the middle of an instruction.
    Truncated { offset: usize },
}

impl fmt::Display for IsaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IsaError::Malformed(m) => write!(f, "malformed instruction: {m}"),
            IsaError::UnresolvedBranch => write!(f, "unresolved branch tag"),
            IsaError::Decode { offset } => write!(f, "decode error at byte offset {offset}"),
            IsaError::Truncated { offset } => write!(f, "truncated stream at byte offset {offset}"),
        }
    }
}

impl Instr {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instr::Push(_) => Opcode::Push,
            Instr::Pop(_) => Opcode::Pop,
            Instr::LdInc(..) => Opcode::LdInc,
            Instr::LdDec(..) => Opcode::LdDec,
            Instr::StInc(..) => Opcode::StInc,
            Instr::StDec(..) => Opcode::StDec,
            Instr::Ldd(..) => Opcode::Ldd,
            Instr::Std(..) => Opcode::Std,
            Instr::Ldi(..) => Opcode::Ldi,
            Instr::Mov(..) => Opcode::Mov,
            Instr::Movw(..) => Opcode::Movw,
            Instr::Add(..) => Opcode::Add,
            Instr::Adc(..) => Opcode::Adc,
            Instr::Sub(..) => Opcode::Sub,
            Instr::Sbc(..) => Opcode::Sbc,
            Instr::And(..) => Opcode::And,
            Instr::Or(..) => Opcode::Or,
            Instr::Eor(..) => Opcode::Eor,
            Instr::Cp(..) => Opcode::Cp,
            Instr::Cpc(..) => Opcode::Cpc,
            Instr::Mul(..) => Opcode::Mul,
            Instr::Muls(..) => Opcode::Muls,
            Instr::Adiw(..) => Opcode::Adiw,
            Instr::Sbiw(..) => Opcode::Sbiw,
            Instr::Inc(_) => Opcode::Inc,
            Instr::Dec(_) => Opcode::Dec,
            Instr::Lsr(_) => Opcode::Lsr,
            Instr::Lsl(_) => Opcode::Lsl,
            Instr::Rol(_) => Opcode::Rol,
            Instr::Ror(_) => Opcode::Ror,
            Instr::Asr(_) => Opcode::Asr,
            Instr::Rjmp(_) => Opcode::Rjmp,
            Instr::Brc(..) => Opcode::BrCond,
            Instr::Jmp(_) => Opcode::Jmp,
            Instr::Call(_) => Opcode::Call,
            Instr::Ret => Opcode::Ret,
            Instr::Ijmp => Opcode::Ijmp,
            Instr::Nop => Opcode::Nop,
            Instr::Break => Opcode::Break,
            Instr::BranchTag { .. } => Opcode::BranchTag,
        }
    }

    /// Flash words occupied. Unresolved branch tags report the worst case.
    pub fn word_size(&self) -> u16 {
        match self {
            Instr::Jmp(_) | Instr::Call(_) => 2,
            Instr::BranchTag { .. } => 3,
            _ => 1,
        }
    }

    /// Execution cost in cycles. `taken` only matters for `Brc`.
    pub fn cycle_cost(&self, taken: bool) -> Result<u32, IsaError> {
        Ok(match self {
            Instr::Push(_) | Instr::Pop(_) => 2,
            Instr::LdInc(..) | Instr::LdDec(..) | Instr::StInc(..) | Instr::StDec(..) => 2,
            Instr::Ldd(..) | Instr::Std(..) => 2,
            Instr::Adiw(..) | Instr::Sbiw(..) => 2,
            Instr::Mul(..) | Instr::Muls(..) => 2,
            Instr::Rjmp(_) | Instr::Ijmp => 2,
            Instr::Jmp(_) => 3,
            Instr::Call(_) | Instr::Ret => 4,
            Instr::Brc(..) => {
                if taken {
                    2
                } else {
                    1
                }
            }
            Instr::BranchTag { .. } => return Err(IsaError::UnresolvedBranch),
            // LDI, MOV, MOVW and all single-cycle ALU ops.
            _ => 1,
        })
    }

    /// Overhead category for the trace accounting.
    pub fn category(&self) -> Category {
        match self {
            Instr::Push(_) | Instr::Pop(_) => Category::PushPop,
            Instr::LdInc(..)
            | Instr::LdDec(..)
            | Instr::StInc(..)
            | Instr::StDec(..)
            | Instr::Ldd(..)
            | Instr::Std(..) => Category::LoadStore,
            Instr::Mov(..) | Instr::Movw(..) => Category::Mov,
            _ => Category::Other,
        }
    }

    fn check(&self) -> Result<(), IsaError> {
        let reg_ok = |r: Reg| r.valid();
        let pair_ok = |p: Pair| p.valid();
        let ok = match *self {
            Instr::Push(r)
            | Instr::Pop(r)
            | Instr::Inc(r)
            | Instr::Dec(r)
            | Instr::Lsr(r)
            | Instr::Lsl(r)
            | Instr::Rol(r)
            | Instr::Ror(r)
            | Instr::Asr(r)
            | Instr::Ldi(r, _) => reg_ok(r),
            Instr::LdInc(r, _) | Instr::LdDec(r, _) | Instr::StInc(_, r) | Instr::StDec(_, r) => {
                reg_ok(r)
            }
            Instr::Ldd(r, _, d) | Instr::Std(_, d, r) => reg_ok(r) && d < 64,
            Instr::Mov(a, b)
            | Instr::Add(a, b)
            | Instr::Adc(a, b)
            | Instr::Sub(a, b)
            | Instr::Sbc(a, b)
            | Instr::And(a, b)
            | Instr::Or(a, b)
            | Instr::Eor(a, b)
            | Instr::Cp(a, b)
            | Instr::Cpc(a, b)
            | Instr::Mul(a, b)
            | Instr::Muls(a, b) => reg_ok(a) && reg_ok(b),
            Instr::Movw(a, b) => pair_ok(a) && pair_ok(b),
            Instr::Adiw(p, k) | Instr::Sbiw(p, k) => pair_ok(p) && k < 64,
            Instr::Rjmp(d) => (-512..512).contains(&d),
            Instr::Brc(_, d) => (-64..64).contains(&d),
            _ => true,
        };
        if ok {
            Ok(())
        } else {
            Err(IsaError::Malformed(alloc::format!("{self:?}")))
        }
    }

    /// Encode into little-endian words, appended to `out`.
    pub fn encode(&self, out: &mut alloc::vec::Vec<u16>) -> Result<(), IsaError> {
        self.check()?;
        // Form A: one- and two-register ops.
        let form_a = |op: u16, rd: Reg, rs: u16| -> u16 {
            (op << 10) | ((rd.0 as u16) << 5) | (rs & 0x1f)
        };
        let word = match *self {
            Instr::Mov(a, b) => form_a(0, a, b.0 as u16),
            Instr::Add(a, b) => form_a(1, a, b.0 as u16),
            Instr::Adc(a, b) => form_a(2, a, b.0 as u16),
            Instr::Sub(a, b) => form_a(3, a, b.0 as u16),
            Instr::Sbc(a, b) => form_a(4, a, b.0 as u16),
            Instr::And(a, b) => form_a(5, a, b.0 as u16),
            Instr::Or(a, b) => form_a(6, a, b.0 as u16),
            Instr::Eor(a, b) => form_a(7, a, b.0 as u16),
            Instr::Cp(a, b) => form_a(8, a, b.0 as u16),
            Instr::Cpc(a, b) => form_a(9, a, b.0 as u16),
            Instr::Mul(a, b) => form_a(10, a, b.0 as u16),
            Instr::Muls(a, b) => form_a(11, a, b.0 as u16),
            Instr::Push(r) => form_a(12, r, 0),
            Instr::Pop(r) => form_a(13, r, 0),
            Instr::Inc(r) => form_a(14, r, 0),
            Instr::Dec(r) => form_a(15, r, 0),
            Instr::Lsr(r) => form_a(16, r, 0),
            Instr::Lsl(r) => form_a(17, r, 0),
            Instr::Rol(r) => form_a(18, r, 0),
            Instr::Ror(r) => form_a(19, r, 0),
            Instr::Asr(r) => form_a(20, r, 0),
            Instr::LdInc(r, p) => form_a(21, r, p.code()),
            Instr::LdDec(r, p) => form_a(22, r, p.code()),
            Instr::StInc(p, r) => form_a(23, r, p.code()),
            Instr::StDec(p, r) => form_a(24, r, p.code()),
            Instr::Ret => form_a(25, Reg(0), 0),
            Instr::Ijmp => form_a(26, Reg(0), 0),
            Instr::Nop => form_a(27, Reg(0), 0),
            Instr::Break => form_a(28, Reg(0), 0),
            // Form B: displacement load/store.
            Instr::Ldd(r, p, d) => {
                let p = match p {
                    DispPtr::Y => 0u16,
                    DispPtr::Z => 1,
                };
                0x8000 | (p << 12) | ((d as u16) << 6) | ((r.0 as u16) << 1)
            }
            Instr::Std(p, d, r) => {
                let p = match p {
                    DispPtr::Y => 0u16,
                    DispPtr::Z => 1,
                };
                0x8000 | 0x2000 | (p << 12) | ((d as u16) << 6) | ((r.0 as u16) << 1)
            }
            // Form C.
            Instr::Rjmp(d) => 0xc000 | ((d as u16) & 0x3ff),
            Instr::Brc(c, d) => 0xc400 | (c.code() << 7) | ((d as u16) & 0x7f),
            Instr::Adiw(p, k) => 0xc800 | (((p.0 / 2) as u16) << 6) | (k as u16),
            Instr::Sbiw(p, k) => 0xcc00 | (((p.0 / 2) as u16) << 6) | (k as u16),
            Instr::Jmp(t) => {
                out.push(0xd000);
                out.push(t);
                return Ok(());
            }
            Instr::Call(t) => {
                out.push(0xd400);
                out.push(t);
                return Ok(());
            }
            Instr::Movw(a, b) => 0xdc00 | (((a.0 / 2) as u16) << 4) | ((b.0 / 2) as u16),
            // Form D.
            Instr::Ldi(r, k) => 0xe000 | ((r.0 as u16) << 8) | (k as u16),
            Instr::BranchTag { .. } => return Err(IsaError::UnresolvedBranch),
        };
        out.push(word);
        Ok(())
    }

    /// Decode one instruction starting at `words[pos]`. Returns the
    /// instruction and the number of words consumed.
    pub fn decode(words: &[u16], pos: usize) -> Result<(Instr, usize), IsaError> {
        let w = *words.get(pos).ok_or(IsaError::Truncated { offset: pos * 2 })?;
        let err = || IsaError::Decode { offset: pos * 2 };
        if w & 0x8000 == 0 {
            // Form A.
            let op = (w >> 10) & 0x1f;
            let rd = Reg(((w >> 5) & 0x1f) as u8);
            let rs = w & 0x1f;
            let two = |f: fn(Reg, Reg) -> Instr| f(rd, Reg(rs as u8));
            let instr = match op {
                0 => two(Instr::Mov),
                1 => two(Instr::Add),
                2 => two(Instr::Adc),
                3 => two(Instr::Sub),
                4 => two(Instr::Sbc),
                5 => two(Instr::And),
                6 => two(Instr::Or),
                7 => two(Instr::Eor),
                8 => two(Instr::Cp),
                9 => two(Instr::Cpc),
                10 => two(Instr::Mul),
                11 => two(Instr::Muls),
                12 => Instr::Push(rd),
                13 => Instr::Pop(rd),
                14 => Instr::Inc(rd),
                15 => Instr::Dec(rd),
                16 => Instr::Lsr(rd),
                17 => Instr::Lsl(rd),
                18 => Instr::Rol(rd),
                19 => Instr::Ror(rd),
                20 => Instr::Asr(rd),
                21 => Instr::LdInc(rd, Ptr::from_code(rs).ok_or_else(err)?),
                22 => Instr::LdDec(rd, Ptr::from_code(rs).ok_or_else(err)?),
                23 => Instr::StInc(Ptr::from_code(rs).ok_or_else(err)?, rd),
                24 => Instr::StDec(Ptr::from_code(rs).ok_or_else(err)?, rd),
                25 => Instr::Ret,
                26 => Instr::Ijmp,
                27 => Instr::Nop,
                28 => Instr::Break,
                _ => return Err(err()),
            };
            return Ok((instr, 1));
        }
        if w & 0xc000 == 0x8000 {
            // Form B.
            let store = w & 0x2000 != 0;
            let p = if w & 0x1000 != 0 { DispPtr::Z } else { DispPtr::Y };
            let d = ((w >> 6) & 0x3f) as u8;
            let r = Reg(((w >> 1) & 0x1f) as u8);
            let instr = if store {
                Instr::Std(p, d, r)
            } else {
                Instr::Ldd(r, p, d)
            };
            return Ok((instr, 1));
        }
        if w & 0xe000 == 0xc000 {
            // Form C.
            let sub = (w >> 10) & 0x7;
            let pay = w & 0x3ff;
            let instr = match sub {
                0 => {
                    // sign-extend 10 bits
                    let d = ((pay << 6) as i16) >> 6;
                    Instr::Rjmp(d)
                }
                1 => {
                    let c = Cond::from_code(pay >> 7);
                    let d = (((pay & 0x7f) as u8) << 1) as i8 >> 1;
                    Instr::Brc(c, d)
                }
                2 => Instr::Adiw(Pair((((pay >> 6) & 0xf) as u8) * 2), (pay & 0x3f) as u8),
                3 => Instr::Sbiw(Pair((((pay >> 6) & 0xf) as u8) * 2), (pay & 0x3f) as u8),
                4 | 5 => {
                    let t = *words
                        .get(pos + 1)
                        .ok_or(IsaError::Truncated { offset: pos * 2 + 2 })?;
                    let instr = if sub == 4 { Instr::Jmp(t) } else { Instr::Call(t) };
                    return Ok((instr, 2));
                }
                7 => Instr::Movw(
                    Pair((((pay >> 4) & 0xf) as u8) * 2),
                    Pair(((pay & 0xf) as u8) * 2),
                ),
                _ => return Err(err()),
            };
            return Ok((instr, 1));
        }
        // Form D.
        Ok((
            Instr::Ldi(Reg(((w >> 8) & 0x1f) as u8), (w & 0xff) as u8),
            1,
        ))
    }
}

/// Register conventions shared by the compiler and the runtime model.
pub mod regs {
    use super::Pair;

    /// Hard-wired multiply output / short-lived scratch.
    pub const SCRATCH: Pair = Pair(0);
    /// Second scratch pair; also carries the low half of return values.
    pub const RETVAL: Pair = Pair(2);
    /// High half of 32-bit return values.
    pub const RETVAL_HI: Pair = Pair(0);
    /// Reference-stack pointer.
    pub const X: Pair = Pair(26);
    /// Frame pointer (base of the active frame's locals).
    pub const Y: Pair = Pair(28);
    /// Memory-addressing scratch pointer.
    pub const Z: Pair = Pair(30);

    /// The register pairs available to the stack cache, lowest first.
    /// Pinning allocates from the front, stack caching from the back.
    pub const CACHEABLE: [Pair; 11] = [
        Pair(4),
        Pair(6),
        Pair(8),
        Pair(10),
        Pair(12),
        Pair(14),
        Pair(16),
        Pair(18),
        Pair(20),
        Pair(22),
        Pair(24),
    ];

    /// Pairs a callee must preserve if it clobbers them: exactly the pairs a
    /// caller may have pinned inside a mark-loop block (at most 7, allocated
    /// low to high).
    pub const CALLEE_SAVED: [Pair; 7] = [
        Pair(4),
        Pair(6),
        Pair(8),
        Pair(10),
        Pair(12),
        Pair(14),
        Pair(16),
    ];
}

impl fmt::Display for Instr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Instr::Push(r) => write!(f, "push {r}"),
            Instr::Pop(r) => write!(f, "pop {r}"),
            Instr::LdInc(r, p) => write!(f, "ld {r}, {p:?}+"),
            Instr::LdDec(r, p) => write!(f, "ld {r}, -{p:?}"),
            Instr::StInc(p, r) => write!(f, "st {p:?}+, {r}"),
            Instr::StDec(p, r) => write!(f, "st -{p:?}, {r}"),
            Instr::Ldd(r, p, d) => write!(f, "ldd {r}, {p:?}+{d}"),
            Instr::Std(p, d, r) => write!(f, "std {p:?}+{d}, {r}"),
            Instr::Ldi(r, k) => write!(f, "ldi {r}, {k}"),
            Instr::Mov(a, b) => write!(f, "mov {a}, {b}"),
            Instr::Movw(a, b) => write!(f, "movw {a}, {b}"),
            Instr::Add(a, b) => write!(f, "add {a}, {b}"),
            Instr::Adc(a, b) => write!(f, "adc {a}, {b}"),
            Instr::Sub(a, b) => write!(f, "sub {a}, {b}"),
            Instr::Sbc(a, b) => write!(f, "sbc {a}, {b}"),
            Instr::And(a, b) => write!(f, "and {a}, {b}"),
            Instr::Or(a, b) => write!(f, "or {a}, {b}"),
            Instr::Eor(a, b) => write!(f, "eor {a}, {b}"),
            Instr::Cp(a, b) => write!(f, "cp {a}, {b}"),
            Instr::Cpc(a, b) => write!(f, "cpc {a}, {b}"),
            Instr::Mul(a, b) => write!(f, "mul {a}, {b}"),
            Instr::Muls(a, b) => write!(f, "muls {a}, {b}"),
            Instr::Adiw(p, k) => write!(f, "adiw {p}, {k}"),
            Instr::Sbiw(p, k) => write!(f, "sbiw {p}, {k}"),
            Instr::Inc(r) => write!(f, "inc {r}"),
            Instr::Dec(r) => write!(f, "dec {r}"),
            Instr::Lsr(r) => write!(f, "lsr {r}"),
            Instr::Lsl(r) => write!(f, "lsl {r}"),
            Instr::Rol(r) => write!(f, "rol {r}"),
            Instr::Ror(r) => write!(f, "ror {r}"),
            Instr::Asr(r) => write!(f, "asr {r}"),
            Instr::Rjmp(d) => write!(f, "rjmp {d:+}"),
            Instr::Brc(c, d) => write!(f, "br{c:?} {d:+}"),
            Instr::Jmp(t) => write!(f, "jmp {t:#06x}"),
            Instr::Call(t) => write!(f, "call {t:#06x}"),
            Instr::Ret => write!(f, "ret"),
            Instr::Ijmp => write!(f, "ijmp"),
            Instr::Nop => write!(f, "nop"),
            Instr::Break => write!(f, "break"),
            Instr::BranchTag { cond, target } => write!(f, "brtag {cond:?} -> bt{target}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn word_sizes() {
        assert_eq!(Instr::Ldd(Reg(4), DispPtr::Y, 0).word_size(), 1);
        assert_eq!(Instr::Call(0x100).word_size(), 2);
        assert_eq!(
            Instr::BranchTag {
                cond: Some(Cond::LtS),
                target: 0
            }
            .word_size(),
            3
        );
    }

    #[test]
    fn branch_tag_has_no_cycle_cost() {
        let tag = Instr::BranchTag {
            cond: None,
            target: 1,
        };
        assert_eq!(tag.cycle_cost(false), Err(IsaError::UnresolvedBranch));
    }

    /// Table-1 consistency: per-row cycle costs of the worked shift-loop
    /// example sum to 48 with the final branch taken. Each 16-bit row is
    /// expanded into its byte-level instructions.
    #[test]
    fn table1_cycle_sum_is_48() {
        use Instr::*;
        let taken_last = [
            // LDD R1,Y+0 (4)
            Ldd(Reg(4), DispPtr::Y, 0),
            Ldd(Reg(5), DispPtr::Y, 1),
            // PUSH R1 (4)
            Push(Reg(5)),
            Push(Reg(4)),
            // LDI R1,1 (2)
            Ldi(Reg(4), 1),
            Ldi(Reg(5), 0),
            // MOV R2,R1 (1)
            Movw(Pair(6), Pair(4)),
            // POP R1 (4)
            Pop(Reg(4)),
            Pop(Reg(5)),
            // RJMP +2 (2)
            Rjmp(2),
            // LSR R1 (2)
            Lsr(Reg(5)),
            Ror(Reg(4)),
            // DEC R2: 8-bit loop counter, executes twice in one iteration (2)
            Dec(Reg(6)),
            Dec(Reg(6)),
            // BRPL executes twice: once taken (2) + once fallen through (1)
            Brc(Cond::Pl, -4),
            Brc(Cond::Pl, -4),
            // STD Y+0,R1 (4)
            Std(DispPtr::Y, 0, Reg(4)),
            Std(DispPtr::Y, 1, Reg(5)),
            // LDD R1,Y+0 (4)
            Ldd(Reg(4), DispPtr::Y, 0),
            Ldd(Reg(5), DispPtr::Y, 1),
            // PUSH R1 (4)
            Push(Reg(5)),
            Push(Reg(4)),
            // LDD R1,Y+2 (4)
            Ldd(Reg(4), DispPtr::Y, 2),
            Ldd(Reg(5), DispPtr::Y, 3),
            // POP R2 (4)
            Pop(Reg(6)),
            Pop(Reg(7)),
            // CP (2)
            Cp(Reg(4), Reg(6)),
            Cpc(Reg(5), Reg(7)),
        ];
        let mut total = 0;
        let mut first_brpl = true;
        for i in &taken_last {
            // the first BRPL execution is taken, the second falls through
            let taken = matches!(i, Brc(Cond::Pl, _)) && core::mem::take(&mut first_brpl);
            total += i.cycle_cost(taken).unwrap();
        }
        // final conditional branch of the loop, taken
        total += Instr::Brc(Cond::LtS, 0).cycle_cost(true).unwrap();
        assert_eq!(total, 48);
    }

    fn arb_instrs() -> Vec<Instr> {
        use Instr::*;
        let mut v = Vec::new();
        for r in [0u8, 7, 31] {
            v.push(Push(Reg(r)));
            v.push(Pop(Reg(r)));
            v.push(Lsr(Reg(r)));
            v.push(Ldi(Reg(r), 0xa5));
            for s in [0u8, 16, 31] {
                v.push(Add(Reg(r), Reg(s)));
                v.push(Cpc(Reg(r), Reg(s)));
                v.push(Muls(Reg(r), Reg(s)));
            }
        }
        for p in [Ptr::X, Ptr::Y, Ptr::Z] {
            v.push(LdInc(Reg(9), p));
            v.push(StDec(p, Reg(30)));
        }
        for d in [0u8, 63] {
            v.push(Ldd(Reg(12), DispPtr::Y, d));
            v.push(Std(DispPtr::Z, d, Reg(12)));
        }
        v.push(Movw(Pair(24), Pair(4)));
        v.push(Adiw(Pair(28), 26));
        v.push(Sbiw(Pair(30), 63));
        v.push(Rjmp(-512));
        v.push(Rjmp(511));
        v.push(Brc(Cond::GeU, -64));
        v.push(Brc(Cond::Mi, 63));
        v.push(Jmp(0xffff));
        v.push(Call(0));
        v.push(Ret);
        v.push(Ijmp);
        v.push(Nop);
        v.push(Break);
        v
    }

    #[test]
    fn encode_decode_round_trip() {
        for instr in arb_instrs() {
            let mut words = Vec::new();
            instr.encode(&mut words).unwrap();
            assert_eq!(words.len(), instr.word_size() as usize, "{instr}");
            let (back, n) = Instr::decode(&words, 0).unwrap();
            assert_eq!(back, instr);
            assert_eq!(n, words.len());
        }
    }

    #[test]
    fn truncated_stream_errors_with_offset() {
        let mut words = Vec::new();
        Instr::Call(0x1234).encode(&mut words).unwrap();
        words.pop();
        match Instr::decode(&words, 0) {
            Err(IsaError::Truncated { offset }) => assert_eq!(offset, 2),
            other => panic!("expected truncation, got {other:?}"),
        }
    }
}
