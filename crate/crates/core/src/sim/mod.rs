//! Cycle-accurate execution of a compiled [`CodeImage`].
//!
//! The machine is an AVR-flavoured 8-bit core: 32 byte registers, C/Z/N/V
//! flags, byte-addressed RAM with a downward-growing native stack, and the
//! X/Y/Z pointer pairs in r26..r31. Runtime services the compiled code
//! cannot express inline (frame construction for normal calls, allocation,
//! 16/32-bit multiply and divide helpers, reference-field lookup through
//! the class chain) are metered built-ins: `CALL`s to addresses at
//! `0xff00` and above execute atomically and charge a documented, fixed
//! cycle cost, separated from the generated code's own cycles in the run
//! statistics.
//!
//! RAM map (everything 16-bit little-endian):
//!
//! ```text
//! 0x0000..0x0060   reserved (I/O space)
//! 0x0060..         int statics, then ref statics
//! statics end..    heap, growing up (objects: [class][ints][refs];
//!                  arrays: [len][elements])
//! ..frame floor    method frames, growing down
//! top 256 bytes    native stack (SP starts at ram_size-1)
//! ```
//!
//! References are RAM byte addresses; the final-state extraction maps them
//! back to allocation ordinals so interpreter and simulator outcomes
//! compare directly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bytecode::{Dt, ElemKind};
use crate::compile::{builtins, STATICS_BASE};
use crate::image::CodeImage;
use crate::isa::{Category, Cond, DispPtr, Instr, Pair, Reg};
use crate::world::{FinalState, Workload};

/// Metered cycle costs of the runtime built-ins. The invoke pair is
/// calibrated so a zero-argument static call's full envelope (CALL + frame
/// construction + teardown + RET) lands in the mid-hundreds of cycles,
/// roughly what a software frame builder costs on this class of machine.
pub mod cost {
    /// Frame construction half of a normal method call (plus 2 cycles per
    /// moved parameter slot).
    pub const INVOKE_CALL: u64 = 520;
    /// Frame teardown half of a normal method return.
    pub const INVOKE_RETURN: u64 = 140;
    pub const PARAM_SLOT: u64 = 2;
    pub const SDIV: u64 = 40;
    pub const IDIV: u64 = 60;
    pub const IMUL: u64 = 20;
    pub const NEW: u64 = 60;
    pub const NEWARRAY: u64 = 80;
    /// Reference-field access through the class chain: fixed part plus a
    /// per-parent walking cost.
    pub const FIELD_WALK_BASE: u64 = 30;
    pub const FIELD_WALK_STEP: u64 = 10;
}

/// Native-stack reservation at the top of RAM.
const STACK_BYTES: u16 = 256;

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub ram_size: u16,
    pub cycle_limit: u64,
    /// Record a [`TraceRec`] for every executed instruction.
    pub trace: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { ram_size: 4096, cycle_limit: 50_000_000, trace: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceRec {
    /// Word address of the instruction.
    pub pc: u16,
    pub instr: Instr,
    pub category: Category,
    pub cycles: u32,
    /// Branch was taken (only meaningful for conditional branches).
    pub taken: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RunStats {
    pub total_cycles: u64,
    /// Cycles spent in generated code.
    pub code_cycles: u64,
    /// Cycles charged by runtime built-ins.
    pub builtin_cycles: u64,
    /// Generated-code cycles per overhead category.
    pub category_cycles: [u64; 4],
    /// Executed instructions per overhead category.
    pub category_counts: [u64; 4],
    pub instr_count: u64,
    pub trace: Vec<TraceRec>,
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub state: FinalState,
    pub stats: RunStats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimError {
    CycleLimit,
    DivisionByZero { pc: u16 },
    NullReference { pc: u16 },
    OutOfMemory,
    /// Execution landed between or past instructions.
    BadPc { pc: u16 },
    BreakHit { pc: u16 },
    MemFault { addr: u16 },
    BadImage(String),
}

impl core::fmt::Display for SimError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SimError::CycleLimit => write!(f, "cycle limit exceeded"),
            SimError::DivisionByZero { pc } => write!(f, "division by zero at word {pc}"),
            SimError::NullReference { pc } => write!(f, "null reference at word {pc}"),
            SimError::OutOfMemory => write!(f, "out of memory"),
            SimError::BadPc { pc } => write!(f, "bad program counter {pc}"),
            SimError::BreakHit { pc } => write!(f, "break at word {pc}"),
            SimError::MemFault { addr } => write!(f, "memory access at {addr:#x} out of range"),
            SimError::BadImage(m) => write!(f, "bad image: {m}"),
        }
    }
}

/// Execute `image`'s entry method over `workload`.
pub fn run(
    image: &CodeImage,
    workload: &Workload,
    opts: &SimOptions,
) -> Result<SimOutcome, SimError> {
    let mut m = Machine::new(image, opts)?;
    m.load_workload(workload)?;
    m.call_entry()?;
    m.run()?;
    let state = m.final_state()?;
    Ok(SimOutcome { state, stats: m.stats })
}

#[derive(Debug, Clone, Copy)]
enum Alloc {
    Array { addr: u16, kind: ElemKind, len: u16 },
    Object { addr: u16 },
}

impl Alloc {
    fn addr(&self) -> u16 {
        match *self {
            Alloc::Array { addr, .. } | Alloc::Object { addr } => addr,
        }
    }
}

/// Caller context saved by the invoke built-in across a normal call.
struct FrameRec {
    /// r4..r29 (allocatable pairs plus the X and Y pointers).
    saved: [u8; 26],
    frame_floor: u16,
    pc_after: u16,
    ret: Option<Dt>,
}

#[derive(Default, Clone, Copy)]
struct Flags {
    c: bool,
    z: bool,
    n: bool,
    v: bool,
}

struct Machine<'a> {
    img: &'a CodeImage,
    /// Instruction at each word index (`None` inside multi-word instrs).
    code: Vec<Option<Instr>>,
    regs: [u8; 32],
    flags: Flags,
    ram: Vec<u8>,
    sp: u16,
    pc: u16,
    frame_floor: u16,
    heap_next: u16,
    allocs: Vec<Alloc>,
    by_addr: BTreeMap<u16, u32>,
    calls: Vec<FrameRec>,
    halted: bool,
    stats: RunStats,
    trace_on: bool,
    cycle_limit: u64,
}

impl<'a> Machine<'a> {
    fn new(img: &'a CodeImage, opts: &SimOptions) -> Result<Machine<'a>, SimError> {
        let statics_end =
            STATICS_BASE + 2 * (img.statics_int_slots + img.statics_ref_slots);
        if opts.ram_size < statics_end + STACK_BYTES + 64 {
            return Err(SimError::BadImage("ram too small for this image".into()));
        }
        let mut code = vec![None; img.words.len()];
        let mut pos = 0usize;
        while pos < img.words.len() {
            let (i, n) = Instr::decode(&img.words, pos)
                .map_err(|e| SimError::BadImage(format!("{e}")))?;
            code[pos] = Some(i);
            pos += n;
        }
        Ok(Machine {
            img,
            code,
            regs: [0; 32],
            flags: Flags::default(),
            ram: vec![0; opts.ram_size as usize],
            sp: opts.ram_size - 1,
            pc: 0,
            frame_floor: opts.ram_size - STACK_BYTES,
            heap_next: statics_end,
            allocs: Vec::new(),
            by_addr: BTreeMap::new(),
            calls: Vec::new(),
            halted: false,
            stats: RunStats::default(),
            trace_on: opts.trace,
            cycle_limit: opts.cycle_limit,
        })
    }

    // ---- register / memory primitives -------------------------------------

    fn r(&self, r: Reg) -> u8 {
        self.regs[r.0 as usize]
    }
    fn set_r(&mut self, r: Reg, v: u8) {
        self.regs[r.0 as usize] = v;
    }
    fn pair(&self, p: Pair) -> u16 {
        u16::from_le_bytes([self.regs[p.0 as usize], self.regs[p.0 as usize + 1]])
    }
    fn set_pair(&mut self, p: Pair, v: u16) {
        let [lo, hi] = v.to_le_bytes();
        self.regs[p.0 as usize] = lo;
        self.regs[p.0 as usize + 1] = hi;
    }

    fn ld8(&self, addr: u16) -> Result<u8, SimError> {
        self.ram
            .get(addr as usize)
            .copied()
            .ok_or(SimError::MemFault { addr })
    }
    fn st8(&mut self, addr: u16, v: u8) -> Result<(), SimError> {
        match self.ram.get_mut(addr as usize) {
            Some(slot) => {
                *slot = v;
                Ok(())
            }
            None => Err(SimError::MemFault { addr }),
        }
    }
    fn ld16(&self, addr: u16) -> Result<u16, SimError> {
        Ok(u16::from_le_bytes([self.ld8(addr)?, self.ld8(addr + 1)?]))
    }
    fn st16(&mut self, addr: u16, v: u16) -> Result<(), SimError> {
        let [lo, hi] = v.to_le_bytes();
        self.st8(addr, lo)?;
        self.st8(addr + 1, hi)
    }

    fn push8(&mut self, v: u8) -> Result<(), SimError> {
        self.st8(self.sp, v)?;
        self.sp = self.sp.wrapping_sub(1);
        Ok(())
    }
    fn pop8(&mut self) -> Result<u8, SimError> {
        self.sp = self.sp.wrapping_add(1);
        self.ld8(self.sp)
    }
    /// Push a 16-bit value the way `emit_push_pair` does: high byte first,
    /// so the value sits little-endian in memory.
    fn push16(&mut self, v: u16) -> Result<(), SimError> {
        self.push8((v >> 8) as u8)?;
        self.push8(v as u8)
    }
    fn pop16(&mut self) -> Result<u16, SimError> {
        let lo = self.pop8()?;
        let hi = self.pop8()?;
        Ok(u16::from_le_bytes([lo, hi]))
    }

    /// Push onto the downward-growing reference stack (X), high byte first
    /// like the generated `ST -X` sequences.
    fn ref_push(&mut self, v: u16) -> Result<(), SimError> {
        let mut x = self.pair(Pair(26));
        x = x.wrapping_sub(1);
        self.st8(x, (v >> 8) as u8)?;
        x = x.wrapping_sub(1);
        self.st8(x, v as u8)?;
        self.set_pair(Pair(26), x);
        Ok(())
    }
    fn ref_pop(&mut self) -> Result<u16, SimError> {
        let mut x = self.pair(Pair(26));
        let lo = self.ld8(x)?;
        x = x.wrapping_add(1);
        let hi = self.ld8(x)?;
        x = x.wrapping_add(1);
        self.set_pair(Pair(26), x);
        Ok(u16::from_le_bytes([lo, hi]))
    }

    // ---- setup -------------------------------------------------------------

    fn static_int_addr(&self, slot: u16) -> u16 {
        STATICS_BASE + 2 * slot
    }
    fn static_ref_addr(&self, slot: u16) -> u16 {
        STATICS_BASE + 2 * self.img.statics_int_slots + 2 * slot
    }

    fn load_workload(&mut self, w: &Workload) -> Result<(), SimError> {
        if w.statics_int.len() > self.img.statics_int_slots as usize
            || w.arrays.len() > self.img.statics_ref_slots as usize
        {
            return Err(SimError::BadImage("workload larger than statics".into()));
        }
        for (i, v) in w.statics_int.iter().enumerate() {
            self.st16(self.static_int_addr(i as u16), *v as u16)?;
        }
        for (i, (kind, data)) in w.arrays.iter().enumerate() {
            let addr = self.alloc_array(*kind, data.len() as u16)?;
            for (j, v) in data.iter().enumerate() {
                let e = addr + 2 + (j as u16) * kind.byte_size() as u16;
                match kind {
                    ElemKind::Byte => self.st8(e, *v as u8)?,
                    ElemKind::Short => self.st16(e, *v as u16)?,
                    ElemKind::Int => {
                        self.st16(e, *v as u16)?;
                        self.st16(e + 2, (*v >> 16) as u16)?;
                    }
                    ElemKind::Ref => {
                        // Workload refs are handles (ordinal + 1).
                        let a = (*v as usize)
                            .checked_sub(1)
                            .and_then(|o| self.allocs.get(o))
                            .map_or(0, |a| a.addr());
                        self.st16(e, a)?;
                    }
                }
            }
            self.st16(self.static_ref_addr(i as u16), addr)?;
        }
        Ok(())
    }

    // ---- heap --------------------------------------------------------------

    fn take_heap(&mut self, bytes: u16) -> Result<u16, SimError> {
        let addr = self.heap_next;
        let end = addr.checked_add(bytes).ok_or(SimError::OutOfMemory)?;
        if end > self.frame_floor {
            return Err(SimError::OutOfMemory);
        }
        self.heap_next = end;
        Ok(addr)
    }

    fn record(&mut self, a: Alloc) {
        self.by_addr.insert(a.addr(), self.allocs.len() as u32);
        self.allocs.push(a);
    }

    fn alloc_array(&mut self, kind: ElemKind, len: u16) -> Result<u16, SimError> {
        let bytes = 2 + len * kind.byte_size() as u16;
        let addr = self.take_heap(bytes)?;
        self.st16(addr, len)?;
        for b in addr + 2..addr + bytes {
            self.st8(b, 0)?;
        }
        self.record(Alloc::Array { addr, kind, len });
        Ok(addr)
    }

    /// Int and ref field slots contributed by a class's whole parent chain,
    /// and the number of chain links walked.
    fn chain_slots(&self, class: u16) -> (u16, u16, u16) {
        let (mut ints, mut refs, mut links) = (0, 0, 0);
        let mut cur = Some(class);
        while let Some(c) = cur {
            let cd = &self.img.classes[c as usize];
            ints += cd.int_field_slots;
            refs += cd.ref_field_slots;
            links += 1;
            cur = cd.parent;
        }
        (ints, refs, links)
    }

    fn alloc_object(&mut self, class: u16) -> Result<u16, SimError> {
        if class as usize >= self.img.classes.len() {
            return Err(SimError::BadImage(format!("unknown class {class}")));
        }
        let (ints, refs, _) = self.chain_slots(class);
        let bytes = 2 + 2 * (ints + refs);
        let addr = self.take_heap(bytes)?;
        self.st16(addr, class)?;
        for b in addr + 2..addr + bytes {
            self.st8(b, 0)?;
        }
        self.record(Alloc::Object { addr });
        Ok(addr)
    }

    // ---- frames ------------------------------------------------------------

    /// Build a frame for `method` below the current frame floor: zeroed
    /// locals, reference stack at the frame's top, Y at its base.
    fn build_frame(&mut self, method: u16) -> Result<(), SimError> {
        let mi = &self.img.methods[method as usize];
        let bytes = mi.frame_bytes();
        let y = self
            .frame_floor
            .checked_sub(bytes)
            .filter(|y| *y >= self.heap_next)
            .ok_or(SimError::OutOfMemory)?;
        for b in y..y + bytes {
            self.st8(b, 0)?;
        }
        self.frame_floor = y;
        self.set_pair(Pair(28), y);
        self.set_pair(Pair(26), y + bytes);
        Ok(())
    }

    fn call_entry(&mut self) -> Result<(), SimError> {
        let mi = self
            .img
            .methods
            .get(self.img.entry_method as usize)
            .ok_or_else(|| SimError::BadImage("missing entry method".into()))?;
        if !mi.params.is_empty() {
            return Err(SimError::BadImage("entry method must have no parameters".into()));
        }
        let entry = mi.entry;
        self.build_frame(self.img.entry_method)?;
        self.push16(builtins::HALT)?;
        self.pc = entry;
        Ok(())
    }

    // ---- built-ins ---------------------------------------------------------

    fn builtin(&mut self, target: u16) -> Result<(), SimError> {
        let pc = self.pc;
        match target {
            builtins::INVOKE => self.builtin_invoke()?,
            builtins::NEWARRAY => {
                let kind = ElemKind::from_code(self.r(Reg(2)))
                    .ok_or_else(|| SimError::BadImage("bad element kind".into()))?;
                let len = self.pop16()?;
                let addr = self.alloc_array(kind, len)?;
                self.ref_push(addr)?;
                self.stats.builtin_cycles += cost::NEWARRAY;
            }
            builtins::NEW => {
                let class = self.pair(Pair(2));
                let addr = self.alloc_object(class)?;
                self.ref_push(addr)?;
                self.stats.builtin_cycles += cost::NEW;
            }
            builtins::IMUL | builtins::IDIV => {
                let b_hi = self.pop16()?;
                let b_lo = self.pop16()?;
                let a_hi = self.pop16()?;
                let a_lo = self.pop16()?;
                let a = ((a_hi as u32) << 16 | a_lo as u32) as i32;
                let b = ((b_hi as u32) << 16 | b_lo as u32) as i32;
                let v = if target == builtins::IMUL {
                    self.stats.builtin_cycles += cost::IMUL;
                    a.wrapping_mul(b)
                } else {
                    if b == 0 {
                        return Err(SimError::DivisionByZero { pc });
                    }
                    self.stats.builtin_cycles += cost::IDIV;
                    a.wrapping_div(b)
                };
                self.set_pair(Pair(2), v as u16);
                self.set_pair(Pair(0), (v >> 16) as u16);
            }
            builtins::SDIV => {
                let b = self.pop16()? as i16;
                let a = self.pop16()? as i16;
                if b == 0 {
                    return Err(SimError::DivisionByZero { pc });
                }
                self.set_pair(Pair(2), a.wrapping_div(b) as u16);
                self.stats.builtin_cycles += cost::SDIV;
            }
            builtins::GETFIELD_A | builtins::PUTFIELD_A => {
                let slot = self.pair(Pair(0));
                let value = if target == builtins::PUTFIELD_A {
                    Some(self.ref_pop()?)
                } else {
                    None
                };
                let obj = self.ref_pop()?;
                if obj == 0 {
                    return Err(SimError::NullReference { pc });
                }
                let class = self.ld16(obj)?;
                let (ints, _, links) = self.chain_slots(class);
                let addr = obj + 2 + 2 * ints + 2 * slot;
                match value {
                    Some(v) => self.st16(addr, v)?,
                    None => {
                        let v = self.ld16(addr)?;
                        self.ref_push(v)?;
                    }
                }
                self.stats.builtin_cycles +=
                    cost::FIELD_WALK_BASE + cost::FIELD_WALK_STEP * links as u64;
            }
            _ => return Err(SimError::BadImage(format!("unknown builtin {target:#x}"))),
        }
        Ok(())
    }

    /// Normal method call: move arguments into a fresh frame, remember the
    /// caller's context, and enter the callee with a teardown return
    /// address.
    fn builtin_invoke(&mut self) -> Result<(), SimError> {
        let idx = self.pair(Pair(2));
        let mi = self
            .img
            .methods
            .get(idx as usize)
            .ok_or_else(|| SimError::BadImage(format!("invoke of method {idx}")))?
            .clone();

        let ia = mi.param_int_slots();
        let ra = mi.param_ref_slots();
        let mut int_args = vec![0u16; ia as usize];
        for k in (0..ia).rev() {
            int_args[k as usize] = self.pop16()?;
        }
        let mut ref_args = vec![0u16; ra as usize];
        for k in (0..ra).rev() {
            ref_args[k as usize] = self.ref_pop()?;
        }

        let mut saved = [0u8; 26];
        saved.copy_from_slice(&self.regs[4..30]);
        self.calls.push(FrameRec {
            saved,
            frame_floor: self.frame_floor,
            // The dispatcher already advanced pc past the CALL.
            pc_after: self.pc,
            ret: mi.ret,
        });

        self.build_frame(idx)?;
        let y = self.pair(Pair(28));
        for (k, v) in int_args.iter().enumerate() {
            self.st16(y + 2 * k as u16, *v)?;
        }
        for (k, v) in ref_args.iter().enumerate() {
            self.st16(y + mi.off_ref_locals() + 2 * k as u16, *v)?;
        }
        self.push16(builtins::RETURN_NORMAL)?;
        self.pc = mi.entry;
        self.stats.builtin_cycles +=
            cost::INVOKE_CALL + cost::PARAM_SLOT * (ia + ra) as u64;
        Ok(())
    }

    /// `RET` landed on the teardown address: restore the caller, carrying
    /// any reference result across the frame switch (int results travel in
    /// r0..r3, which are not saved).
    fn return_normal(&mut self) -> Result<(), SimError> {
        let rec = self
            .calls
            .pop()
            .ok_or_else(|| SimError::BadImage("return with no caller".into()))?;
        let ref_result = if rec.ret == Some(Dt::Ref) {
            Some(self.ref_pop()?)
        } else {
            None
        };
        self.regs[4..30].copy_from_slice(&rec.saved);
        self.frame_floor = rec.frame_floor;
        if let Some(v) = ref_result {
            self.ref_push(v)?;
        }
        self.pc = rec.pc_after;
        self.stats.builtin_cycles += cost::INVOKE_RETURN;
        Ok(())
    }

    // ---- flags -------------------------------------------------------------

    fn nz(&mut self, r: u8) {
        self.flags.n = r & 0x80 != 0;
        self.flags.z = r == 0;
    }

    fn add8(&mut self, a: u8, b: u8, carry: bool) -> u8 {
        let c = carry as u16;
        let wide = a as u16 + b as u16 + c;
        let r = wide as u8;
        self.flags.c = wide > 0xff;
        self.flags.v = (a ^ r) & (b ^ r) & 0x80 != 0;
        self.nz(r);
        r
    }

    /// Subtraction; `sticky_z` models SBC/CPC's "Z only stays set" rule
    /// that makes multi-byte compares work.
    fn sub8(&mut self, a: u8, b: u8, carry: bool, sticky_z: bool) -> u8 {
        let zc = self.flags.z;
        let c = carry as u16;
        let r = (a as u16).wrapping_sub(b as u16 + c) as u8;
        self.flags.c = (b as u16 + c) > a as u16;
        self.flags.v = (a ^ b) & (a ^ r) & 0x80 != 0;
        self.nz(r);
        if sticky_z {
            self.flags.z = zc && r == 0;
        }
        r
    }

    fn logic(&mut self, r: u8) -> u8 {
        self.flags.v = false;
        self.nz(r);
        r
    }

    fn cond(&self, c: Cond) -> bool {
        let f = &self.flags;
        match c {
            Cond::Eq => f.z,
            Cond::Ne => !f.z,
            Cond::LtS => f.n != f.v,
            Cond::GeS => f.n == f.v,
            Cond::LtU => f.c,
            Cond::GeU => !f.c,
            Cond::Pl => !f.n,
            Cond::Mi => f.n,
        }
    }

    // ---- execution ---------------------------------------------------------

    fn run(&mut self) -> Result<(), SimError> {
        while !self.halted {
            self.step()?;
            if self.stats.total_cycles > self.cycle_limit {
                return Err(SimError::CycleLimit);
            }
        }
        Ok(())
    }

    fn fetch(&self) -> Result<Instr, SimError> {
        self.code
            .get(self.pc as usize)
            .copied()
            .flatten()
            .ok_or(SimError::BadPc { pc: self.pc })
    }

    fn step(&mut self) -> Result<(), SimError> {
        let pc = self.pc;
        let instr = self.fetch()?;
        let mut taken = false;
        let mut next = pc + instr.word_size();

        use Instr::*;
        match instr {
            Push(r) => {
                let v = self.r(r);
                self.push8(v)?;
            }
            Pop(r) => {
                let v = self.pop8()?;
                self.set_r(r, v);
            }
            LdInc(r, p) => {
                let a = self.pair(p.pair());
                let v = self.ld8(a)?;
                self.set_r(r, v);
                self.set_pair(p.pair(), a.wrapping_add(1));
            }
            LdDec(r, p) => {
                let a = self.pair(p.pair()).wrapping_sub(1);
                let v = self.ld8(a)?;
                self.set_r(r, v);
                self.set_pair(p.pair(), a);
            }
            StInc(p, r) => {
                let a = self.pair(p.pair());
                let v = self.r(r);
                self.st8(a, v)?;
                self.set_pair(p.pair(), a.wrapping_add(1));
            }
            StDec(p, r) => {
                let a = self.pair(p.pair()).wrapping_sub(1);
                let v = self.r(r);
                self.st8(a, v)?;
                self.set_pair(p.pair(), a);
            }
            Ldd(r, p, d) => {
                let a = self.pair(disp_pair(p)).wrapping_add(d as u16);
                let v = self.ld8(a)?;
                self.set_r(r, v);
            }
            Std(p, d, r) => {
                let a = self.pair(disp_pair(p)).wrapping_add(d as u16);
                let v = self.r(r);
                self.st8(a, v)?;
            }
            Ldi(r, k) => self.set_r(r, k),
            Mov(d, s) => {
                let v = self.r(s);
                self.set_r(d, v);
            }
            Movw(d, s) => {
                let v = self.pair(s);
                self.set_pair(d, v);
            }
            Add(d, s) => {
                let r = self.add8(self.r(d), self.r(s), false);
                self.set_r(d, r);
            }
            Adc(d, s) => {
                let c = self.flags.c;
                let r = self.add8(self.r(d), self.r(s), c);
                self.set_r(d, r);
            }
            Sub(d, s) => {
                let r = self.sub8(self.r(d), self.r(s), false, false);
                self.set_r(d, r);
            }
            Sbc(d, s) => {
                let c = self.flags.c;
                let r = self.sub8(self.r(d), self.r(s), c, true);
                self.set_r(d, r);
            }
            And(d, s) => {
                let r = self.logic(self.r(d) & self.r(s));
                self.set_r(d, r);
            }
            Or(d, s) => {
                let r = self.logic(self.r(d) | self.r(s));
                self.set_r(d, r);
            }
            Eor(d, s) => {
                let r = self.logic(self.r(d) ^ self.r(s));
                self.set_r(d, r);
            }
            Cp(d, s) => {
                self.sub8(self.r(d), self.r(s), false, false);
            }
            Cpc(d, s) => {
                let c = self.flags.c;
                self.sub8(self.r(d), self.r(s), c, true);
            }
            Mul(a, b) => {
                let p = self.r(a) as u16 * self.r(b) as u16;
                self.set_pair(Pair(0), p);
                self.flags.c = p & 0x8000 != 0;
                self.flags.z = p == 0;
            }
            Muls(a, b) => {
                let p = (self.r(a) as i8 as i16 * self.r(b) as i8 as i16) as u16;
                self.set_pair(Pair(0), p);
                self.flags.c = p & 0x8000 != 0;
                self.flags.z = p == 0;
            }
            Adiw(p, k) => {
                let a = self.pair(p);
                let r = a.wrapping_add(k as u16);
                self.set_pair(p, r);
                self.flags.c = r < a;
                self.flags.z = r == 0;
                self.flags.n = r & 0x8000 != 0;
                self.flags.v = a & 0x8000 == 0 && r & 0x8000 != 0;
            }
            Sbiw(p, k) => {
                let a = self.pair(p);
                let r = a.wrapping_sub(k as u16);
                self.set_pair(p, r);
                self.flags.c = (k as u16) > a;
                self.flags.z = r == 0;
                self.flags.n = r & 0x8000 != 0;
                self.flags.v = a & 0x8000 != 0 && r & 0x8000 == 0;
            }
            Inc(d) => {
                let a = self.r(d);
                let r = a.wrapping_add(1);
                self.flags.v = a == 0x7f;
                self.nz(r);
                self.set_r(d, r);
            }
            Dec(d) => {
                let a = self.r(d);
                let r = a.wrapping_sub(1);
                self.flags.v = a == 0x80;
                self.nz(r);
                self.set_r(d, r);
            }
            Lsl(d) => {
                let a = self.r(d);
                let r = a << 1;
                self.flags.c = a & 0x80 != 0;
                self.nz(r);
                self.flags.v = self.flags.n != self.flags.c;
                self.set_r(d, r);
            }
            Lsr(d) => {
                let a = self.r(d);
                let r = a >> 1;
                self.flags.c = a & 1 != 0;
                self.nz(r);
                self.flags.v = self.flags.n != self.flags.c;
                self.set_r(d, r);
            }
            Rol(d) => {
                let a = self.r(d);
                let r = (a << 1) | self.flags.c as u8;
                self.flags.c = a & 0x80 != 0;
                self.nz(r);
                self.flags.v = self.flags.n != self.flags.c;
                self.set_r(d, r);
            }
            Ror(d) => {
                let a = self.r(d);
                let r = (a >> 1) | ((self.flags.c as u8) << 7);
                self.flags.c = a & 1 != 0;
                self.nz(r);
                self.flags.v = self.flags.n != self.flags.c;
                self.set_r(d, r);
            }
            Asr(d) => {
                let a = self.r(d);
                let r = ((a as i8) >> 1) as u8;
                self.flags.c = a & 1 != 0;
                self.nz(r);
                self.flags.v = self.flags.n != self.flags.c;
                self.set_r(d, r);
            }
            Rjmp(d) => next = (pc as i32 + 1 + d as i32) as u16,
            Brc(c, d) => {
                taken = self.cond(c);
                if taken {
                    next = (pc as i32 + 1 + d as i32) as u16;
                }
            }
            Jmp(a) => next = a,
            Call(t) => {
                if t >= 0xff00 {
                    // Runtime built-in, executed atomically; the built-in
                    // may redirect the pc (invoke).
                    self.pc = pc + 2;
                    self.builtin(t)?;
                    next = self.pc;
                } else {
                    self.push16(pc + 2)?;
                    next = t;
                }
            }
            Ret => {
                let addr = self.pop16()?;
                match addr {
                    builtins::HALT => {
                        self.halted = true;
                        next = pc; // unused
                    }
                    builtins::RETURN_NORMAL => {
                        self.return_normal()?;
                        next = self.pc;
                    }
                    a => next = a,
                }
            }
            Ijmp => next = self.pair(Pair(30)),
            Nop => {}
            Break => return Err(SimError::BreakHit { pc }),
            BranchTag { .. } => return Err(SimError::BadImage("branch tag in image".into())),
        }

        let cycles = instr
            .cycle_cost(taken)
            .map_err(|e| SimError::BadImage(format!("{e}")))?;
        let cat = instr.category();
        self.stats.instr_count += 1;
        self.stats.code_cycles += cycles as u64;
        self.stats.category_cycles[cat.index()] += cycles as u64;
        self.stats.category_counts[cat.index()] += 1;
        self.stats.total_cycles = self.stats.code_cycles + self.stats.builtin_cycles;
        if self.trace_on {
            self.stats.trace.push(TraceRec { pc, instr, category: cat, cycles, taken });
        }
        self.pc = next;
        Ok(())
    }

    // ---- final state -------------------------------------------------------

    fn handle_of(&self, addr: u16) -> i32 {
        match self.by_addr.get(&addr) {
            Some(o) => *o as i32 + 1,
            None => 0,
        }
    }

    fn final_state(&self) -> Result<FinalState, SimError> {
        let mut statics_int = Vec::new();
        for i in 0..self.img.statics_int_slots {
            statics_int.push(self.ld16(self.static_int_addr(i))? as i16);
        }
        let mut ref_statics = Vec::new();
        for i in 0..self.img.statics_ref_slots {
            let addr = self.ld16(self.static_ref_addr(i))?;
            ref_statics.push(self.by_addr.get(&addr).copied());
        }
        let mut arrays = Vec::new();
        for a in &self.allocs {
            let Alloc::Array { addr, kind, len } = *a else { continue };
            let mut data = Vec::with_capacity(len as usize);
            for j in 0..len {
                let e = addr + 2 + j * kind.byte_size() as u16;
                data.push(match kind {
                    ElemKind::Byte => self.ld8(e)? as i8 as i32,
                    ElemKind::Short => self.ld16(e)? as i16 as i32,
                    ElemKind::Int => {
                        let lo = self.ld16(e)? as u32;
                        let hi = self.ld16(e + 2)? as u32;
                        (hi << 16 | lo) as i32
                    }
                    ElemKind::Ref => {
                        let p = self.ld16(e)?;
                        if p == 0 {
                            0
                        } else {
                            self.handle_of(p)
                        }
                    }
                });
            }
            arrays.push((kind, data));
        }

        let entry = &self.img.methods[self.img.entry_method as usize];
        let ret = match entry.ret {
            None => None,
            Some(Dt::Short) => Some(self.pair(Pair(2)) as i16 as i32),
            Some(Dt::Int) => {
                let lo = self.pair(Pair(2)) as u32;
                let hi = self.pair(Pair(0)) as u32;
                Some((hi << 16 | lo) as i32)
            }
            Some(Dt::Ref) => {
                let x = self.pair(Pair(26));
                Some(self.handle_of(self.ld16(x)?))
            }
        };

        Ok(FinalState { statics_int, ref_statics, arrays, ret })
    }
}

fn disp_pair(p: DispPtr) -> Pair {
    match p {
        DispPtr::Y => Pair(28),
        DispPtr::Z => Pair(30),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::asm::parse_assembly;
    use crate::bytecode::verify::verify;
    use crate::bytecode::Infusion;
    use crate::compile::{compile_infusion, OptLevel};
    use crate::infuse::{infuse, InfuseOptions};
    use crate::interp::interpret;

    fn prepare(src: &str) -> Infusion {
        let mut inf = parse_assembly(src).unwrap();
        verify(&mut inf).unwrap();
        infuse(&mut inf, &InfuseOptions::default()).unwrap();
        inf
    }

    /// Compile at every optimization level and check the simulated outcome
    /// against the reference interpreter.
    fn assert_matches_interp(src: &str, w: &Workload) {
        let inf = prepare(src);
        let want = interpret(&inf, w, 10_000_000).unwrap();
        for level in OptLevel::ALL {
            let r = compile_infusion(&inf, level, 7).unwrap();
            let out = run(&r.image, w, &SimOptions::default())
                .unwrap_or_else(|e| panic!("{}: {e}", level.name()));
            assert_eq!(out.state, want, "level {}", level.name());
        }
    }

    #[test]
    fn shift_loop_matches_interpreter() {
        assert_matches_interp(
            "
.statics ints=2
.method main params=() ret=s locals_int=2
  getstatic_s 0
  sstore 0
  getstatic_s 1
  sstore 1
loop:
  sload 0
  sconst 1
  sushr
  sstore 0
  sload 0
  sload 1
  if_scmpgt loop
  sload 0
  sreturn
.end
.entry main
",
            &Workload { statics_int: vec![1024, 2], arrays: vec![] },
        );
    }

    #[test]
    fn arithmetic_torture_matches_interpreter() {
        assert_matches_interp(
            "
.statics ints=6
.method main params=() ret=i locals_int=6
  getstatic_s 0
  getstatic_s 1
  sdiv
  putstatic_s 2
  getstatic_s 0
  s2i
  getstatic_s 1
  s2i
  imul
  istore 0
  iload 0
  iconst 3
  idiv
  istore 2
  iload 2
  getstatic_s 0
  s2i
  iadd
  iconst 1000000
  imul
  sconst -7
  sconst 13
  smul
  s2i
  isub
  ireturn
.end
.entry main
",
            &Workload { statics_int: vec![-30000, 7], arrays: vec![] },
        );
    }

    #[test]
    fn variable_and_constant_shifts_match_interpreter() {
        assert_matches_interp(
            "
.statics ints=3
.method main params=() ret=i locals_int=4
  getstatic_s 0
  getstatic_s 1
  sshl
  putstatic_s 2
  getstatic_s 0
  s2i
  iconst 5
  ishl
  istore 0
  iload 0
  getstatic_s 1
  s2i
  iushr
  iload 0
  sconst 2
  s2i
  ishr
  ixor
  ireturn
.end
.entry main
",
            &Workload { statics_int: vec![-21931, 3], arrays: vec![] },
        );
    }

    #[test]
    fn bubble_sort_matches_interpreter() {
        assert_matches_interp(
            "
.statics ints=0 refs=1
.method main params=() ret=void locals_int=4 locals_ref=1
  getstatic_a 0
  astore 0
  aload 0
  arraylength
  sconst 1
  ssub
  sstore 1
outer:
  sconst 0
  sstore 2
inner:
  aload 0
  sload 2
  saload16
  sstore 3
  aload 0
  sload 2
  sconst 1
  sadd
  saload16
  sload 3
  if_scmpge noswap
  aload 0
  sload 2
  aload 0
  sload 2
  sconst 1
  sadd
  saload16
  sastore16
  aload 0
  sload 2
  sconst 1
  sadd
  sload 3
  sastore16
noswap:
  sinc 2 1
  sload 1
  sload 2
  if_scmpgt inner
  sinc 1 -1
  sload 1
  ifgt outer
  return
.end
.entry main
",
            &Workload {
                statics_int: vec![],
                arrays: vec![(ElemKind::Short, vec![3, 1, 2, -5, 9, 0, 127, -127])],
            },
        );
    }

    #[test]
    fn byte_and_int_arrays_match_interpreter() {
        assert_matches_interp(
            "
.statics ints=0 refs=2
.method main params=() ret=i locals_int=3
  sconst 0
  sstore 0
loop:
  getstatic_a 1
  sload 0
  getstatic_a 0
  sload 0
  baload16
  s2i
  iconst 100000
  imul
  iastore16
  sinc 0 1
  sload 0
  sconst 4
  if_scmplt loop
  getstatic_a 1
  sconst 2
  iaload16
  ireturn
.end
.entry main
",
            &Workload {
                statics_int: vec![],
                arrays: vec![
                    (ElemKind::Byte, vec![-3, 120, -128, 7]),
                    (ElemKind::Int, vec![0, 0, 0, 0]),
                ],
            },
        );
    }

    #[test]
    fn normal_calls_match_interpreter() {
        assert_matches_interp(
            "
.method add3 params=(s,s,s) ret=s locals_int=3
  sload 0
  sload 1
  sadd
  sload 2
  sadd
  sreturn
.end
.method wide params=(i,s) ret=i locals_int=3
  iload 0
  sload 2
  s2i
  iadd
  ireturn
.end
.method main params=() ret=i locals_int=2
  sconst 10
  sconst 20
  sconst 30
  invokestatic add3
  s2i
  sconst -5
  invokestatic wide
  ireturn
.end
.entry main
",
            &Workload::default(),
        );
    }

    #[test]
    fn lightweight_calls_match_interpreter() {
        assert_matches_interp(
            "
.lightweight odd params=(s) ret=s kind=handwritten
  sconst 1
  sand
  sreturn
.end
.lightweight half params=(s) ret=s locals_int=1 kind=converted
  sload 0
  sconst 1
  sushr
  sreturn
.end
.lightweight both params=(s) ret=s locals_int=2 kind=converted
  sload 0
  invokestatic half
  sload 0
  invokestatic odd
  sadd
  sreturn
.end
.method main params=() ret=s locals_int=2
  sconst 0
  sstore 0
loop:
  sload 1
  sload 0
  invokestatic both
  sadd
  sstore 1
  sinc 0 1
  sload 0
  sconst 10
  if_scmplt loop
  sload 1
  sreturn
.end
.entry main
",
            &Workload::default(),
        );
    }

    #[test]
    fn objects_and_fields_match_interpreter() {
        assert_matches_interp(
            "
.statics ints=0 refs=2
.class node parent=- ints=1 refs=1
.class leaf parent=node ints=1 refs=0 final
.method main params=() ret=s locals_int=1 locals_ref=2
  new node
  astore 0
  new leaf
  astore 1
  aload 0
  sconst 41
  putfield_s node.0
  aload 1
  sconst 7
  putfield_s leaf.1
  aload 0
  aload 1
  putfield_a node.0
  aload 0
  getfield_a node.0
  getfield_s leaf.1
  aload 0
  getfield_s node.0
  sadd
  sreturn
.end
.entry main
",
            &Workload::default(),
        );
    }

    #[test]
    fn allocation_and_ref_arrays_match_interpreter() {
        assert_matches_interp(
            "
.statics ints=0 refs=2
.method main params=() ret=s locals_int=1 locals_ref=2
  sconst 5
  newarray s
  astore 0
  aload 0
  putstatic_a 0
  sconst 3
  newarray a
  astore 1
  aload 1
  putstatic_a 1
  aload 1
  sconst 1
  aload 0
  aastore16
  aload 0
  sconst 2
  sconst -77
  sastore16
  aload 1
  sconst 1
  aaload16
  sconst 2
  saload16
  sreturn
.end
.entry main
",
            &Workload::default(),
        );
    }

    #[test]
    fn mark_loops_pin_and_restore_correctly() {
        // Statics and locals both live across a marked loop; the loop count
        // is high enough that a missing store-back would corrupt the sum.
        assert_matches_interp(
            "
.statics ints=2
.method main params=() ret=s locals_int=3
  sconst 200
  sstore 0
loop:
  getstatic_s 0
  sload 1
  sadd
  putstatic_s 0
  sinc 1 3
  sinc 0 -1
  sload 0
  ifgt loop
  getstatic_s 0
  sload 1
  sadd
  sreturn
.end
.entry main
",
            &Workload { statics_int: vec![100, 0], arrays: vec![] },
        );
    }

    #[test]
    fn division_by_zero_is_a_machine_error() {
        let inf = prepare(
            ".method main params=() ret=s\n  sconst 1\n  sconst 0\n  sdiv\n  sreturn\n.end\n.entry main\n",
        );
        let r = compile_infusion(&inf, OptLevel::PoppedValue, 7).unwrap();
        assert!(matches!(
            run(&r.image, &Workload::default(), &SimOptions::default()),
            Err(SimError::DivisionByZero { .. })
        ));
    }

    #[test]
    fn runaway_code_hits_the_cycle_limit() {
        let inf = prepare(".method main params=() ret=void\nloop:\n  goto loop\n.end\n.entry main\n");
        let r = compile_infusion(&inf, OptLevel::Baseline, 7).unwrap();
        let opts = SimOptions { cycle_limit: 10_000, ..SimOptions::default() };
        assert_eq!(
            run(&r.image, &Workload::default(), &opts).err(),
            Some(SimError::CycleLimit)
        );
    }

    #[test]
    fn invoke_envelope_is_hundreds_of_cycles() {
        // A single no-op static call dominates this program's cycle count;
        // the envelope must land well above any lightweight call but still
        // be bounded.
        let inf = prepare(
            "
.method noop params=() ret=void
  return
.end
.method main params=() ret=void
  invokestatic noop
  return
.end
.entry main
",
        );
        let r = compile_infusion(&inf, OptLevel::PoppedValue, 7).unwrap();
        let out = run(&r.image, &Workload::default(), &SimOptions::default()).unwrap();
        assert!(
            (400..1100).contains(&out.stats.total_cycles),
            "envelope {} outside the expected band",
            out.stats.total_cycles
        );
    }

    #[test]
    fn trace_and_categories_are_consistent() {
        let inf = prepare(
            "
.statics ints=2
.method main params=() ret=s locals_int=2
  getstatic_s 0
  sstore 0
loop:
  sload 0
  sconst 1
  sushr
  sstore 0
  sload 0
  getstatic_s 1
  if_scmpgt loop
  sload 0
  sreturn
.end
.entry main
",
        );
        let r = compile_infusion(&inf, OptLevel::Baseline, 7).unwrap();
        let opts = SimOptions { trace: true, ..SimOptions::default() };
        let out = run(&r.image, &Workload { statics_int: vec![1024, 2], arrays: vec![] }, &opts)
            .unwrap();
        assert_eq!(out.stats.trace.len() as u64, out.stats.instr_count);
        let sum: u64 = out.stats.category_cycles.iter().sum();
        assert_eq!(sum, out.stats.code_cycles);
        let cyc: u64 = out.stats.trace.iter().map(|t| t.cycles as u64).sum();
        assert_eq!(cyc, out.stats.code_cycles);
        assert_eq!(
            out.stats.total_cycles,
            out.stats.code_cycles + out.stats.builtin_cycles
        );
    }

    #[test]
    fn optimization_levels_strictly_reduce_loop_cycles() {
        // The running shift-loop example: each level must cost no more than
        // the previous, and the cached levels must beat baseline clearly.
        let inf = prepare(
            "
.statics ints=2
.method main params=() ret=s locals_int=2
  getstatic_s 0
  sstore 0
  getstatic_s 1
  sstore 1
loop:
  sload 0
  sconst 1
  sushr
  sstore 0
  sload 0
  sload 1
  if_scmpgt loop
  sload 0
  sreturn
.end
.entry main
",
        );
        let w = Workload { statics_int: vec![0x4000, 1], arrays: vec![] };
        let mut cycles = Vec::new();
        for level in OptLevel::ALL {
            let r = compile_infusion(&inf, level, 7).unwrap();
            let out = run(&r.image, &w, &SimOptions::default()).unwrap();
            assert_eq!(out.state.ret, Some(1), "level {}", level.name());
            cycles.push(out.stats.total_cycles);
        }
        for pair in cycles.windows(2) {
            assert!(pair[1] <= pair[0], "levels regressed: {cycles:?}");
        }
        assert!(cycles[4] < cycles[0] / 2, "mark loops should halve the baseline: {cycles:?}");
    }
}
