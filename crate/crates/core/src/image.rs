//! The executable code image: the emission buffer the translator fills, the
//! finished flash image with its per-word category side table, and the
//! per-method metadata the runtime (frame builder, invoke builtins) needs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bytecode::{BcError, Dt};
use crate::isa::{Category, Instr, Pair};

/// One slot of not-yet-finalised code: an instruction or a zero-width
/// branch-target marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodeSlot {
    Instr(Instr),
    /// BRTARGET id; occupies no words, acts as an optimization barrier.
    Label(u16),
}

/// The translator's append-only emission buffer.
#[derive(Debug, Default, Clone)]
pub struct CodeBuf {
    pub slots: Vec<CodeSlot>,
}

impl CodeBuf {
    pub fn emit(&mut self, i: Instr) {
        self.slots.push(CodeSlot::Instr(i));
    }
    pub fn label(&mut self, id: u16) {
        self.slots.push(CodeSlot::Label(id));
    }
    /// Push a 16-bit pair onto the native stack (high byte first so the
    /// value sits little-endian in memory).
    pub fn emit_push_pair(&mut self, p: Pair) {
        self.emit(Instr::Push(p.hi()));
        self.emit(Instr::Push(p.lo()));
    }
    pub fn emit_pop_pair(&mut self, p: Pair) {
        self.emit(Instr::Pop(p.lo()));
        self.emit(Instr::Pop(p.hi()));
    }
    pub fn instrs(&self) -> impl Iterator<Item = &Instr> {
        self.slots.iter().filter_map(|s| match s {
            CodeSlot::Instr(i) => Some(i),
            CodeSlot::Label(_) => None,
        })
    }
}

/// Per-method metadata carried into the image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodImage {
    pub name: String,
    /// Word address of the compiled entry point.
    pub entry: u16,
    pub code_words: u16,
    pub lightweight: bool,
    pub params: Vec<Dt>,
    pub ret: Option<Dt>,
    pub local_int_slots: u16,
    pub local_ref_slots: u16,
    pub max_ref_stack: u16,
    pub lw_frame_reserve: u16,
    /// Slots reserved for saving pinned pairs around lightweight calls.
    pub pinned_save_slots: u16,
    /// Cacheable pairs this method's code writes (drives caller-side saves
    /// of pinned registers around lightweight calls into it).
    pub used_pairs: Vec<Pair>,
}

impl MethodImage {
    pub fn param_int_slots(&self) -> u16 {
        self.params.iter().map(|d| d.int_slots()).sum()
    }
    pub fn param_ref_slots(&self) -> u16 {
        self.params.iter().map(|d| d.ref_slots()).sum()
    }
    /// Frame layout, as byte offsets from the frame pointer Y.
    pub fn off_ref_locals(&self) -> u16 {
        2 * self.local_int_slots
    }
    pub fn off_pinned_save(&self) -> u16 {
        self.off_ref_locals() + 2 * self.local_ref_slots
    }
    /// Start of the lightweight-callee region; also the ADIW distance a
    /// lightweight call advances Y by.
    pub fn off_lw_region(&self) -> u16 {
        self.off_pinned_save() + 2 * self.pinned_save_slots
    }
    pub fn off_ref_stack(&self) -> u16 {
        self.off_lw_region() + self.lw_frame_reserve
    }
    /// Frame size excluding the runtime's bookkeeping words.
    pub fn frame_bytes(&self) -> u16 {
        self.off_ref_stack() + 2 * self.max_ref_stack
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassImage {
    pub parent: Option<u16>,
    pub int_field_slots: u16,
    pub ref_field_slots: u16,
}

/// A finished, branch-resolved code image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeImage {
    pub words: Vec<u16>,
    /// One category per word (the second word of JMP/CALL repeats the
    /// first's category).
    pub categories: Vec<Category>,
    pub methods: Vec<MethodImage>,
    pub entry_method: u16,
    pub statics_int_slots: u16,
    pub statics_ref_slots: u16,
    pub classes: Vec<ClassImage>,
}

const IMG_MAGIC: &[u8; 4] = b"SIMG";

impl CodeImage {
    pub fn method_by_name(&self, name: &str) -> Option<&MethodImage> {
        self.methods.iter().find(|m| m.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(IMG_MAGIC);
        let u16_ = |b: &mut Vec<u8>, v: u16| b.extend_from_slice(&v.to_le_bytes());
        u16_(&mut b, self.words.len() as u16);
        for w in &self.words {
            u16_(&mut b, *w);
        }
        for c in &self.categories {
            b.push(c.index() as u8);
        }
        u16_(&mut b, self.entry_method);
        u16_(&mut b, self.statics_int_slots);
        u16_(&mut b, self.statics_ref_slots);
        u16_(&mut b, self.classes.len() as u16);
        for c in &self.classes {
            u16_(&mut b, c.parent.unwrap_or(0xffff));
            u16_(&mut b, c.int_field_slots);
            u16_(&mut b, c.ref_field_slots);
        }
        u16_(&mut b, self.methods.len() as u16);
        for m in &self.methods {
            b.push(m.name.len() as u8);
            b.extend_from_slice(m.name.as_bytes());
            u16_(&mut b, m.entry);
            u16_(&mut b, m.code_words);
            b.push(m.lightweight as u8);
            b.push(m.params.len() as u8);
            for p in &m.params {
                b.push(match p {
                    Dt::Short => 1,
                    Dt::Int => 2,
                    Dt::Ref => 3,
                });
            }
            b.push(match m.ret {
                None => 0,
                Some(Dt::Short) => 1,
                Some(Dt::Int) => 2,
                Some(Dt::Ref) => 3,
            });
            u16_(&mut b, m.local_int_slots);
            u16_(&mut b, m.local_ref_slots);
            u16_(&mut b, m.max_ref_stack);
            u16_(&mut b, m.lw_frame_reserve);
            u16_(&mut b, m.pinned_save_slots);
            b.push(m.used_pairs.len() as u8);
            for p in &m.used_pairs {
                b.push(p.0);
            }
        }
        b
    }

    pub fn from_bytes(data: &[u8]) -> Result<CodeImage, BcError> {
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> Result<&[u8], BcError> {
            if *pos + n > data.len() {
                return Err(BcError::Format { msg: format!("truncated image at {}", *pos) });
            }
            let s = &data[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        let u8_ = |pos: &mut usize| -> Result<u8, BcError> { Ok(take(pos, 1)?[0]) };
        let u16_ = |pos: &mut usize| -> Result<u16, BcError> {
            let s = take(pos, 2)?;
            Ok(u16::from_le_bytes([s[0], s[1]]))
        };
        if take(&mut pos, 4)? != IMG_MAGIC {
            return Err(BcError::Format { msg: "bad image magic".into() });
        }
        let nwords = u16_(&mut pos)? as usize;
        let mut words = Vec::new();
        for _ in 0..nwords {
            words.push(u16_(&mut pos)?);
        }
        let mut categories = Vec::new();
        for _ in 0..nwords {
            let c = u8_(&mut pos)?;
            categories.push(
                *Category::ALL
                    .get(c as usize)
                    .ok_or(BcError::Format { msg: format!("bad category {c}") })?,
            );
        }
        let entry_method = u16_(&mut pos)?;
        let statics_int_slots = u16_(&mut pos)?;
        let statics_ref_slots = u16_(&mut pos)?;
        let nclasses = u16_(&mut pos)?;
        let mut classes = Vec::new();
        for _ in 0..nclasses {
            let parent = match u16_(&mut pos)? {
                0xffff => None,
                p => Some(p),
            };
            classes.push(ClassImage {
                parent,
                int_field_slots: u16_(&mut pos)?,
                ref_field_slots: u16_(&mut pos)?,
            });
        }
        let nmethods = u16_(&mut pos)?;
        let mut methods = Vec::new();
        let dt = |c: u8| -> Result<Dt, BcError> {
            match c {
                1 => Ok(Dt::Short),
                2 => Ok(Dt::Int),
                3 => Ok(Dt::Ref),
                _ => Err(BcError::Format { msg: format!("bad type code {c}") }),
            }
        };
        for _ in 0..nmethods {
            let nlen = u8_(&mut pos)? as usize;
            let name = core::str::from_utf8(take(&mut pos, nlen)?)
                .map_err(|_| BcError::Format { msg: "bad method name".into() })?
                .into();
            let entry = u16_(&mut pos)?;
            let code_words = u16_(&mut pos)?;
            let lightweight = u8_(&mut pos)? != 0;
            let nparams = u8_(&mut pos)? as usize;
            let mut params = Vec::new();
            for _ in 0..nparams {
                params.push(dt(u8_(&mut pos)?)?);
            }
            let ret = match u8_(&mut pos)? {
                0 => None,
                c => Some(dt(c)?),
            };
            let local_int_slots = u16_(&mut pos)?;
            let local_ref_slots = u16_(&mut pos)?;
            let max_ref_stack = u16_(&mut pos)?;
            let lw_frame_reserve = u16_(&mut pos)?;
            let pinned_save_slots = u16_(&mut pos)?;
            let nused = u8_(&mut pos)? as usize;
            let mut used_pairs = Vec::new();
            for _ in 0..nused {
                used_pairs.push(Pair(u8_(&mut pos)?));
            }
            methods.push(MethodImage {
                name,
                entry,
                code_words,
                lightweight,
                params,
                ret,
                local_int_slots,
                local_ref_slots,
                max_ref_stack,
                lw_frame_reserve,
                pinned_save_slots,
                used_pairs,
            });
        }
        Ok(CodeImage {
            words,
            categories,
            methods,
            entry_method,
            statics_int_slots,
            statics_ref_slots,
            classes,
        })
    }
}
