//! The stack-bytecode instruction set, its textual assembly and binary
//! container formats, and structural verification.
//!
//! The instruction set is a compact JVM-flavoured stack machine with 16-bit
//! slots: `short` values occupy one slot, `int` values two adjacent slots
//! (low slot pushed first, high slot on top), and references live on a
//! separate reference stack. Branches never carry byte offsets; they name a
//! label (straight from the parser) or a `BRTARGET` id (after the infuser's
//! branch-target pass).

pub mod asm;
pub mod binfmt;
pub mod verify;

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Slot-level data types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dt {
    Short,
    Int,
    Ref,
}

impl Dt {
    /// 16-bit stack slots occupied on the *int* stack (refs use none).
    pub fn int_slots(self) -> u16 {
        match self {
            Dt::Short => 1,
            Dt::Int => 2,
            Dt::Ref => 0,
        }
    }
    pub fn ref_slots(self) -> u16 {
        match self {
            Dt::Ref => 1,
            _ => 0,
        }
    }
}

/// Array element kinds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElemKind {
    Byte,
    Short,
    Int,
    Ref,
}

impl ElemKind {
    pub fn byte_size(self) -> u16 {
        match self {
            ElemKind::Byte => 1,
            ElemKind::Short | ElemKind::Ref => 2,
            ElemKind::Int => 4,
        }
    }
    pub fn letter(self) -> char {
        match self {
            ElemKind::Byte => 'b',
            ElemKind::Short => 's',
            ElemKind::Int => 'i',
            ElemKind::Ref => 'a',
        }
    }
    /// Numeric code used in the binary formats and the runtime's
    /// array-allocation builtin.
    pub fn code(self) -> u8 {
        match self {
            ElemKind::Byte => 0,
            ElemKind::Short => 1,
            ElemKind::Int => 2,
            ElemKind::Ref => 3,
        }
    }
    pub fn from_code(c: u8) -> Option<ElemKind> {
        match c {
            0 => Some(ElemKind::Byte),
            1 => Some(ElemKind::Short),
            2 => Some(ElemKind::Int),
            3 => Some(ElemKind::Ref),
            _ => None,
        }
    }
    pub fn from_letter(c: char) -> Option<ElemKind> {
        match c {
            'b' => Some(ElemKind::Byte),
            's' => Some(ElemKind::Short),
            'i' => Some(ElemKind::Int),
            'a' => Some(ElemKind::Ref),
            _ => None,
        }
    }
}

/// Comparison operators used by the conditional branches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Ge,
    Gt,
    Le,
}

impl CmpOp {
    pub fn eval_i32(self, a: i32, b: i32) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Ge => a >= b,
            CmpOp::Gt => a > b,
            CmpOp::Le => a <= b,
        }
    }
    pub fn name(self) -> &'static str {
        match self {
            CmpOp::Eq => "eq",
            CmpOp::Ne => "ne",
            CmpOp::Lt => "lt",
            CmpOp::Ge => "ge",
            CmpOp::Gt => "gt",
            CmpOp::Le => "le",
        }
    }
    pub fn from_name(s: &str) -> Option<CmpOp> {
        Some(match s {
            "eq" => CmpOp::Eq,
            "ne" => CmpOp::Ne,
            "lt" => CmpOp::Lt,
            "ge" => CmpOp::Ge,
            "gt" => CmpOp::Gt,
            "le" => CmpOp::Le,
            _ => return None,
        })
    }
}

/// What kind of value a register may be tagged with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TagKind {
    Local,
    Static,
    Constant,
}

/// Identifies the value a register holds: a (kind, datatype, slot-number)
/// triple packed into 16 bits (2 + 2 + 12). Every tag names a single 16-bit
/// slot; a 32-bit value is described by two tags with consecutive numbers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueTag {
    pub kind: TagKind,
    pub dt: Dt,
    pub num: u16,
}

impl ValueTag {
    pub fn local(dt: Dt, slot: u16) -> ValueTag {
        ValueTag { kind: TagKind::Local, dt, num: slot }
    }
    pub fn static_(dt: Dt, slot: u16) -> ValueTag {
        ValueTag { kind: TagKind::Static, dt, num: slot }
    }
    /// A tag for a small constant; only values representable in 12 bits get
    /// a tag at all.
    pub fn constant(v: i32) -> Option<ValueTag> {
        if (0..4096).contains(&v) {
            Some(ValueTag { kind: TagKind::Constant, dt: Dt::Short, num: v as u16 })
        } else {
            None
        }
    }

    pub fn pack(self) -> u16 {
        let k = match self.kind {
            TagKind::Local => 0u16,
            TagKind::Static => 1,
            TagKind::Constant => 2,
        };
        let d = match self.dt {
            Dt::Short => 0u16,
            Dt::Int => 1,
            Dt::Ref => 2,
        };
        (k << 14) | (d << 12) | (self.num & 0xfff)
    }

    pub fn unpack(p: u16) -> Option<ValueTag> {
        let kind = match p >> 14 {
            0 => TagKind::Local,
            1 => TagKind::Static,
            2 => TagKind::Constant,
            _ => return None,
        };
        let dt = match (p >> 12) & 3 {
            0 => Dt::Short,
            1 => Dt::Int,
            2 => Dt::Ref,
            _ => return None,
        };
        Some(ValueTag { kind, dt, num: p & 0xfff })
    }
}

impl fmt::Display for ValueTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = match self.kind {
            TagKind::Local => "L",
            TagKind::Static => "G",
            TagKind::Constant => "C",
        };
        let d = match self.dt {
            Dt::Short => "S",
            Dt::Int => "I",
            Dt::Ref => "A",
        };
        write!(f, "{k}{d}{}", self.num)
    }
}

/// Per-loop metadata carried by `MARKLOOP(begin)`: the local-variable slots
/// the loop touches (hottest first) and which of them are live at loop entry
/// and exit.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LoopInfo {
    /// (tag, static occurrence count) sorted by count descending; ties by
    /// tag number ascending for determinism.
    pub tags: Vec<(ValueTag, u16)>,
    pub live_at_entry: Vec<ValueTag>,
    pub live_at_exit: Vec<ValueTag>,
}

/// One bytecode instruction.
///
/// Branch operands hold a label id before the branch-target pass and a
/// `BRTARGET` id after it (`MethodDef::targets_resolved` says which).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BcInstr {
    Sload(u16),
    Iload(u16),
    Aload(u16),
    Sstore(u16),
    Istore(u16),
    Astore(u16),
    Sconst(i16),
    Iconst(i32),
    Sadd,
    Ssub,
    Smul,
    Sdiv,
    Sneg,
    Iadd,
    Isub,
    Imul,
    Idiv,
    Ineg,
    Sinc(u16, i16),
    Iinc(u16, i16),
    Sand,
    Sor,
    Sxor,
    Iand,
    Ior,
    Ixor,
    Sshl,
    Sshr,
    Sushr,
    Ishl,
    Ishr,
    Iushr,
    SshlC(u8),
    SshrC(u8),
    SushrC(u8),
    IshlC(u8),
    IshrC(u8),
    IushrC(u8),
    S2i,
    I2s,
    /// Array load; `wide_index` means the index is a 32-bit value on the
    /// stack (the default until the index-narrowing fold runs).
    ArrLoad { kind: ElemKind, wide_index: bool },
    ArrStore { kind: ElemKind, wide_index: bool },
    ArrayLength,
    GetfieldS { class: u16, slot: u16 },
    GetfieldI { class: u16, slot: u16 },
    GetfieldA { class: u16, slot: u16 },
    PutfieldS { class: u16, slot: u16 },
    PutfieldI { class: u16, slot: u16 },
    PutfieldA { class: u16, slot: u16 },
    /// Reference-field access with an offset fixed at infusion time
    /// (byte offset from the object base, final classes only).
    GetfieldAFixed { off: u16 },
    PutfieldAFixed { off: u16 },
    GetstaticS(u16),
    GetstaticI(u16),
    GetstaticA(u16),
    PutstaticS(u16),
    PutstaticI(u16),
    PutstaticA(u16),
    /// 16x16 -> 32 signed multiply (folded from `S2I; S2I-ish; IMUL`).
    Simul,
    IfScmp(CmpOp, u16),
    IfIcmp(CmpOp, u16),
    /// Short compared against zero.
    If0(CmpOp, u16),
    Goto(u16),
    Brtarget(u16),
    MarkloopBegin(Box<LoopInfo>),
    MarkloopEnd,
    /// Dummy prologue marker in lightweight methods: one per parameter,
    /// in parameter order.
    LwParameter(Dt),
    Invokestatic(u16),
    Invokelight(u16),
    Sreturn,
    Ireturn,
    Areturn,
    Return,
    New(u16),
    Newarray(ElemKind),
}

impl BcInstr {
    /// The branch-target operand, if this is a branch.
    pub fn branch_target(&self) -> Option<u16> {
        match *self {
            BcInstr::IfScmp(_, t) | BcInstr::IfIcmp(_, t) | BcInstr::If0(_, t) | BcInstr::Goto(t) => {
                Some(t)
            }
            _ => None,
        }
    }

    pub fn set_branch_target(&mut self, t: u16) {
        match self {
            BcInstr::IfScmp(_, x) | BcInstr::IfIcmp(_, x) | BcInstr::If0(_, x) | BcInstr::Goto(x) => {
                *x = t
            }
            _ => {}
        }
    }

    pub fn is_return(&self) -> bool {
        matches!(
            self,
            BcInstr::Sreturn | BcInstr::Ireturn | BcInstr::Areturn | BcInstr::Return
        )
    }
}

/// How a lightweight method's parameter prologue was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LwKind {
    /// Parameters are stored into locals by a generated prologue.
    Converted,
    /// The body consumes parameters directly from the stack.
    Handwritten,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDef {
    pub name: String,
    pub params: Vec<Dt>,
    pub ret: Option<Dt>,
    pub local_int_slots: u16,
    pub local_ref_slots: u16,
    pub lightweight: bool,
    pub lw_kind: Option<LwKind>,
    pub body: Vec<BcInstr>,
    /// Label-id -> instruction index (the labelled instruction); valid only
    /// while `targets_resolved` is false.
    pub labels: Vec<u16>,
    /// True once branches reference BRTARGET ids instead of labels.
    pub targets_resolved: bool,
    pub brtarget_count: u16,
    /// Filled in by the verifier (16-bit slots).
    pub max_int_stack: u16,
    pub max_ref_stack: u16,
    /// Frame bytes this method must reserve for lightweight call chains
    /// starting at it (computed by the invoke-rewrite pass).
    pub lw_frame_reserve: u16,
}

impl MethodDef {
    pub fn new(name: String) -> MethodDef {
        MethodDef {
            name,
            params: Vec::new(),
            ret: None,
            local_int_slots: 0,
            local_ref_slots: 0,
            lightweight: false,
            lw_kind: None,
            body: Vec::new(),
            labels: Vec::new(),
            targets_resolved: false,
            brtarget_count: 0,
            max_int_stack: 0,
            max_ref_stack: 0,
            lw_frame_reserve: 0,
        }
    }

    /// Total parameter size in 16-bit int-stack slots.
    pub fn param_int_slots(&self) -> u16 {
        self.params.iter().map(|d| d.int_slots()).sum()
    }
    pub fn param_ref_slots(&self) -> u16 {
        self.params.iter().map(|d| d.ref_slots()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDef {
    pub name: String,
    pub parent: Option<u16>,
    /// Field slots introduced by this class itself (not the parent chain).
    pub int_field_slots: u16,
    pub ref_field_slots: u16,
    pub is_final: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Infusion {
    pub methods: Vec<MethodDef>,
    pub statics_int_slots: u16,
    pub statics_ref_slots: u16,
    pub classes: Vec<ClassDef>,
    pub entry: u16,
}

impl Infusion {
    pub fn method(&self, idx: u16) -> &MethodDef {
        &self.methods[idx as usize]
    }

    pub fn method_index(&self, name: &str) -> Option<u16> {
        self.methods.iter().position(|m| m.name == name).map(|i| i as u16)
    }

    /// Int field slots contributed by the whole parent chain of `class`,
    /// parents first — the value the runtime walk recomputes for non-fixed
    /// reference-field access.
    pub fn chain_int_slots(&self, class: u16) -> u16 {
        let mut total = 0;
        let mut cur = Some(class);
        while let Some(c) = cur {
            let cd = &self.classes[c as usize];
            total += cd.int_field_slots;
            cur = cd.parent;
        }
        total
    }
    pub fn chain_ref_slots(&self, class: u16) -> u16 {
        let mut total = 0;
        let mut cur = Some(class);
        while let Some(c) = cur {
            let cd = &self.classes[c as usize];
            total += cd.ref_field_slots;
            cur = cd.parent;
        }
        total
    }
    /// Number of parent-chain hops for `class` (used to meter the runtime
    /// descriptor walk).
    pub fn chain_len(&self, class: u16) -> u16 {
        let mut n = 0;
        let mut cur = Some(class);
        while let Some(c) = cur {
            n += 1;
            cur = self.classes[c as usize].parent;
        }
        n
    }
}

/// Errors from parsing, verification, or the binary format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BcError {
    Syntax { line: usize, msg: String },
    UndefinedLabel { line: usize, label: String },
    DuplicateMethod { name: String },
    UndefinedName { line: usize, name: String },
    Verify { method: String, instr: usize, msg: String },
    Format { msg: String },
}

impl fmt::Display for BcError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BcError::Syntax { line, msg } => write!(f, "syntax error at line {line}: {msg}"),
            BcError::UndefinedLabel { line, label } => {
                write!(f, "undefined label `{label}` at line {line}")
            }
            BcError::DuplicateMethod { name } => write!(f, "duplicate method name `{name}`"),
            BcError::UndefinedName { line, name } => {
                write!(f, "undefined name `{name}` at line {line}")
            }
            BcError::Verify { method, instr, msg } => {
                write!(f, "verification failed in `{method}` at instruction {instr}: {msg}")
            }
            BcError::Format { msg } => write!(f, "infusion format error: {msg}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_tag_packing_round_trips() {
        let tags = [
            ValueTag::local(Dt::Short, 0),
            ValueTag::local(Dt::Int, 5),
            ValueTag::local(Dt::Ref, 4095),
            ValueTag::static_(Dt::Short, 17),
            ValueTag::constant(1).unwrap(),
            ValueTag::constant(4095).unwrap(),
        ];
        for t in tags {
            assert_eq!(ValueTag::unpack(t.pack()), Some(t));
        }
    }

    #[test]
    fn value_tag_packing_is_injective_across_kinds() {
        let a = ValueTag::local(Dt::Short, 3).pack();
        let b = ValueTag::static_(Dt::Short, 3).pack();
        let c = ValueTag::constant(3).unwrap().pack();
        assert_ne!(a, b);
        assert_ne!(b, c);
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_range_constant_gets_no_tag() {
        assert!(ValueTag::constant(-1).is_none());
        assert!(ValueTag::constant(4096).is_none());
    }
}
