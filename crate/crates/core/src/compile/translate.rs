//! Per-opcode emission recipes.
//!
//! Every recipe asks the cache manager for its operands and result registers,
//! so one set of recipes serves every optimization level: in baseline mode
//! the manager turns each request into immediate native-stack traffic, in
//! cache mode most requests are free.
//!
//! Locally resolved branches (the variable-shift loops and the widening
//! multiply sign fixes) only ever span single-word, push/pop-free code, so
//! their displacements survive the later peephole and branch-resolution
//! passes untouched.

use alloc::vec::Vec;

use crate::bytecode::{BcInstr, CmpOp, Dt, ElemKind, LoopInfo, TagKind, ValueTag};
use crate::cache::CacheManager;
use crate::image::{CodeBuf, MethodImage};
use crate::isa::{regs, Cond, DispPtr, Instr, Pair, Ptr, Reg};

use super::{builtins, CalleeInfo, MethodShape, OptLevel, STATICS_BASE};

pub(super) struct Translator<'a> {
    shape: &'a MethodShape,
    callees: &'a [CalleeInfo],
    level: OptLevel,
    pin_cap: usize,
    cache: CacheManager,
    buf: CodeBuf,
    mi: MethodImage,
    active_loop: Option<Vec<(Pair, ValueTag)>>,
    loop_exit_live: Vec<ValueTag>,
}

impl<'a> Translator<'a> {
    pub fn new(
        shape: &'a MethodShape,
        callees: &'a [CalleeInfo],
        level: OptLevel,
        pin_cap: usize,
    ) -> Translator<'a> {
        // A lightweight leaf keeps its return address in r18:r19 for the
        // whole body; that pair must stay out of the allocator's hands.
        let excluded: &[Pair] = if shape.lightweight && shape.lw_leaf {
            &[Pair(18)]
        } else {
            &[]
        };
        Translator {
            shape,
            callees,
            level,
            pin_cap,
            cache: CacheManager::new(level.cache_mode(), excluded),
            buf: CodeBuf::default(),
            mi: shape.image(level, pin_cap),
            active_loop: None,
            loop_exit_live: Vec::new(),
        }
    }

    pub fn prologue(&mut self) {
        if self.shape.lightweight {
            // The caller's int arguments are already on the native stack,
            // beneath the return address popped here.
            self.cache.note_stack_delta(self.mi.param_int_slots() as i16);
            self.buf.emit_pop_pair(Pair(18));
            if !self.shape.lw_leaf {
                let off = self.mi.off_pinned_save();
                let (p, d) = self.y_disp(off);
                self.e(Instr::Std(p, d, Reg(18)));
                self.e(Instr::Std(p, d + 1, Reg(19)));
            }
        }
    }

    pub fn finish(mut self) -> (Vec<CodeSlot>, MethodImage) {
        let mut used = self.cache.written_pairs();
        if self.shape.lightweight && !used.contains(&Pair(18)) {
            used.push(Pair(18));
            used.sort_by_key(|p| p.0);
        }
        self.mi.used_pairs = used;
        (core::mem::take(&mut self.buf.slots), self.mi)
    }

    // ---- small emission helpers -------------------------------------------

    fn e(&mut self, i: Instr) {
        self.buf.emit(i);
    }

    /// Frame access: Y-relative when the displacement fits, otherwise
    /// through Z.
    fn y_disp(&mut self, off: u16) -> (DispPtr, u8) {
        if off + 1 < 64 {
            return (DispPtr::Y, off as u8);
        }
        self.e(Instr::Movw(regs::Z, regs::Y));
        let mut rem = off;
        while rem > 62 {
            let step = (rem - 62).min(63);
            self.e(Instr::Adiw(regs::Z, step as u8));
            rem -= step;
        }
        (DispPtr::Z, rem as u8)
    }

    fn frame_ld(&mut self, pair: Pair, off: u16) {
        let (p, d) = self.y_disp(off);
        self.e(Instr::Ldd(pair.lo(), p, d));
        self.e(Instr::Ldd(pair.hi(), p, d + 1));
    }

    fn frame_st(&mut self, off: u16, pair: Pair) {
        let (p, d) = self.y_disp(off);
        self.e(Instr::Std(p, d, pair.lo()));
        self.e(Instr::Std(p, d + 1, pair.hi()));
    }

    fn load_z_imm(&mut self, addr: u16) {
        self.e(Instr::Ldi(Reg(30), (addr & 0xff) as u8));
        self.e(Instr::Ldi(Reg(31), (addr >> 8) as u8));
    }

    /// Walk Z forward so `off` fits a 6-bit displacement.
    fn z_off(&mut self, off: u16) -> u8 {
        let mut rem = off;
        while rem > 62 {
            let step = (rem - 62).min(63);
            self.e(Instr::Adiw(regs::Z, step as u8));
            rem -= step;
        }
        rem as u8
    }

    fn static_int_addr(&self, slot: u16) -> u16 {
        STATICS_BASE + 2 * slot
    }

    fn static_ref_addr(&self, slot: u16) -> u16 {
        STATICS_BASE + 2 * self.shape.statics_int_slots + 2 * slot
    }

    /// Pop the top reference into Z (references travel via the X stack).
    fn pop_ref_to_z(&mut self) {
        self.e(Instr::LdInc(Reg(30), Ptr::X));
        self.e(Instr::LdInc(Reg(31), Ptr::X));
    }

    fn push_ref_from_scratch(&mut self) {
        self.e(Instr::StDec(Ptr::X, Reg(1)));
        self.e(Instr::StDec(Ptr::X, Reg(0)));
    }

    fn pop_ref_to_scratch(&mut self) {
        self.e(Instr::LdInc(Reg(0), Ptr::X));
        self.e(Instr::LdInc(Reg(1), Ptr::X));
    }

    // ---- slot load/store through the cache --------------------------------

    /// Push the 16-bit slot named by `tag` onto the operand stack.
    fn load_slot(&mut self, tag: ValueTag, hint: usize) {
        if self.cache.try_reuse(&mut self.buf, tag) {
            return;
        }
        let p = self.cache.getfree(&mut self.buf, hint);
        match tag.kind {
            TagKind::Local => self.frame_ld(p, 2 * tag.num),
            TagKind::Static => {
                let addr = self.static_int_addr(tag.num);
                self.load_z_imm(addr);
                self.e(Instr::Ldd(p.lo(), DispPtr::Z, 0));
                self.e(Instr::Ldd(p.hi(), DispPtr::Z, 1));
            }
            TagKind::Constant => {
                self.e(Instr::Ldi(p.lo(), (tag.num & 0xff) as u8));
                self.e(Instr::Ldi(p.hi(), (tag.num >> 8) as u8));
            }
        }
        self.cache.push(&mut self.buf, p, Some(tag));
    }

    /// Pop the operand-stack top into the slot named by `tag`.
    fn store_slot(&mut self, tag: ValueTag, hint: usize) {
        if let Some(p) = self.cache.pop_for_store(&mut self.buf, Some(tag), hint) {
            match tag.kind {
                TagKind::Local => self.frame_st(2 * tag.num, p),
                TagKind::Static => {
                    let addr = self.static_int_addr(tag.num);
                    self.load_z_imm(addr);
                    self.e(Instr::Std(DispPtr::Z, 0, p.lo()));
                    self.e(Instr::Std(DispPtr::Z, 1, p.hi()));
                }
                TagKind::Constant => unreachable!("constants are not storable"),
            }
        }
    }

    /// Push a literal 16-bit value.
    fn load_const_slot(&mut self, v: u16, hint: usize) {
        let tag = ValueTag::constant(v as i32);
        if let Some(t) = tag {
            if self.cache.try_reuse(&mut self.buf, t) {
                return;
            }
        }
        let p = self.cache.getfree(&mut self.buf, hint);
        self.e(Instr::Ldi(p.lo(), (v & 0xff) as u8));
        self.e(Instr::Ldi(p.hi(), (v >> 8) as u8));
        self.cache.push(&mut self.buf, p, tag);
    }

    // ---- arithmetic helpers -----------------------------------------------

    /// `pair += d` in place (flags are dead afterwards).
    fn add_imm16(&mut self, p: Pair, d: i16) {
        match d {
            0 => {}
            1..=63 => self.e(Instr::Adiw(p, d as u8)),
            -63..=-1 => self.e(Instr::Sbiw(p, (-d) as u8)),
            _ => {
                let v = d as u16;
                self.e(Instr::Ldi(Reg(0), (v & 0xff) as u8));
                self.e(Instr::Ldi(Reg(1), (v >> 8) as u8));
                self.e(Instr::Add(p.lo(), Reg(0)));
                self.e(Instr::Adc(p.hi(), Reg(1)));
            }
        }
    }

    /// 32-bit `lo:hi += d` across two pairs.
    fn add_imm32(&mut self, lo: Pair, hi: Pair, d: i16) {
        match d {
            0 => {}
            1..=63 => {
                self.e(Instr::Adiw(lo, d as u8));
                self.e(Instr::Ldi(Reg(0), 0));
                self.e(Instr::Adc(hi.lo(), Reg(0)));
                self.e(Instr::Adc(hi.hi(), Reg(0)));
            }
            -63..=-1 => {
                self.e(Instr::Sbiw(lo, (-d) as u8));
                self.e(Instr::Ldi(Reg(0), 0));
                self.e(Instr::Sbc(hi.lo(), Reg(0)));
                self.e(Instr::Sbc(hi.hi(), Reg(0)));
            }
            _ => {
                let v = d as u16;
                let sign = if d < 0 { 0xff } else { 0 };
                self.e(Instr::Ldi(Reg(0), (v & 0xff) as u8));
                self.e(Instr::Ldi(Reg(1), (v >> 8) as u8));
                self.e(Instr::Add(lo.lo(), Reg(0)));
                self.e(Instr::Adc(lo.hi(), Reg(1)));
                self.e(Instr::Ldi(Reg(0), sign));
                self.e(Instr::Adc(hi.lo(), Reg(0)));
                self.e(Instr::Adc(hi.hi(), Reg(0)));
            }
        }
    }

    fn bin16(&mut self, op: fn(Reg, Reg) -> Instr, opc: fn(Reg, Reg) -> Instr) {
        let b = self.cache.pop_nondestructive(&mut self.buf, 0);
        let a = self.cache.pop_destructive(&mut self.buf, 1);
        self.e(op(a.lo(), b.lo()));
        self.e(opc(a.hi(), b.hi()));
        self.cache.push(&mut self.buf, a, None);
    }

    fn bin32(&mut self, op: fn(Reg, Reg) -> Instr, opc: fn(Reg, Reg) -> Instr) {
        let bh = self.cache.pop_nondestructive(&mut self.buf, 0);
        let bl = self.cache.pop_nondestructive(&mut self.buf, 1);
        let ah = self.cache.pop_destructive(&mut self.buf, 2);
        let al = self.cache.pop_destructive(&mut self.buf, 3);
        self.e(op(al.lo(), bl.lo()));
        self.e(opc(al.hi(), bl.hi()));
        self.e(opc(ah.lo(), bh.lo()));
        self.e(opc(ah.hi(), bh.hi()));
        self.cache.push(&mut self.buf, al, None);
        self.cache.push(&mut self.buf, ah, None);
    }

    /// The decrement-driven variable shift loop over `body_len` shift
    /// instructions already chosen by the caller.
    fn shift_loop(&mut self, count_lo: Reg, body: &[Instr]) {
        let n = body.len() as i16;
        self.e(Instr::Rjmp(n));
        for i in body {
            self.e(*i);
        }
        self.e(Instr::Dec(count_lo));
        self.e(Instr::Brc(Cond::Pl, (-(n + 2)) as i8));
    }

    fn shift16(&mut self, body: fn(Pair) -> [Instr; 2]) {
        let c = self.cache.pop_destructive(&mut self.buf, 1);
        let v = self.cache.pop_destructive(&mut self.buf, 0);
        let b = body(v);
        self.shift_loop(c.lo(), &b);
        self.cache.push(&mut self.buf, v, None);
    }

    fn shift32(&mut self, body: fn(Pair, Pair) -> [Instr; 4]) {
        // 32-bit count: high half only feeds the 8-bit loop counter's
        // semantics through the low byte, so it is popped and dropped.
        self.cache.pop_nondestructive(&mut self.buf, 0);
        let c = self.cache.pop_destructive(&mut self.buf, 1);
        let vh = self.cache.pop_destructive(&mut self.buf, 2);
        let vl = self.cache.pop_destructive(&mut self.buf, 3);
        let b = body(vl, vh);
        self.shift_loop(c.lo(), &b);
        self.cache.push(&mut self.buf, vl, None);
        self.cache.push(&mut self.buf, vh, None);
    }

    fn shift16_const(&mut self, k: u8, kind: ShiftKind) {
        if k == 0 {
            return;
        }
        let v = self.cache.pop_destructive(&mut self.buf, 0);
        match kind {
            ShiftKind::Shl if k >= 16 => {
                self.e(Instr::Ldi(v.lo(), 0));
                self.e(Instr::Ldi(v.hi(), 0));
            }
            ShiftKind::Ushr if k >= 16 => {
                self.e(Instr::Ldi(v.lo(), 0));
                self.e(Instr::Ldi(v.hi(), 0));
            }
            ShiftKind::Shl => {
                let mut bits = k;
                if k >= 8 {
                    self.e(Instr::Mov(v.hi(), v.lo()));
                    self.e(Instr::Ldi(v.lo(), 0));
                    bits -= 8;
                    for _ in 0..bits {
                        self.e(Instr::Lsl(v.hi()));
                    }
                } else {
                    for _ in 0..bits {
                        self.e(Instr::Lsl(v.lo()));
                        self.e(Instr::Rol(v.hi()));
                    }
                }
            }
            ShiftKind::Ushr => {
                let mut bits = k;
                if k >= 8 {
                    self.e(Instr::Mov(v.lo(), v.hi()));
                    self.e(Instr::Ldi(v.hi(), 0));
                    bits -= 8;
                    for _ in 0..bits {
                        self.e(Instr::Lsr(v.lo()));
                    }
                } else {
                    for _ in 0..bits {
                        self.e(Instr::Lsr(v.hi()));
                        self.e(Instr::Ror(v.lo()));
                    }
                }
            }
            ShiftKind::Shr => {
                let k = k.min(15);
                if k >= 8 {
                    self.e(Instr::Mov(v.lo(), v.hi()));
                    // Sign-fill the high byte: C = old sign, then hi = -C.
                    self.e(Instr::Lsl(v.hi()));
                    self.e(Instr::Sbc(v.hi(), v.hi()));
                    for _ in 0..(k - 8) {
                        self.e(Instr::Asr(v.lo()));
                    }
                } else {
                    for _ in 0..k {
                        self.e(Instr::Asr(v.hi()));
                        self.e(Instr::Ror(v.lo()));
                    }
                }
            }
        }
        self.cache.push(&mut self.buf, v, None);
    }

    fn shift32_const(&mut self, k: u8, kind: ShiftKind) {
        if k == 0 {
            return;
        }
        let vh = self.cache.pop_destructive(&mut self.buf, 0);
        let vl = self.cache.pop_destructive(&mut self.buf, 1);
        let zero_all = |t: &mut Translator| {
            t.e(Instr::Ldi(vl.lo(), 0));
            t.e(Instr::Ldi(vl.hi(), 0));
            t.e(Instr::Ldi(vh.lo(), 0));
            t.e(Instr::Ldi(vh.hi(), 0));
        };
        match kind {
            ShiftKind::Shl if k >= 32 => zero_all(self),
            ShiftKind::Ushr if k >= 32 => zero_all(self),
            ShiftKind::Shl => {
                let (bytes, bits) = (k / 8, k % 8);
                for _ in 0..bytes {
                    self.e(Instr::Mov(vh.hi(), vh.lo()));
                    self.e(Instr::Mov(vh.lo(), vl.hi()));
                    self.e(Instr::Mov(vl.hi(), vl.lo()));
                    self.e(Instr::Ldi(vl.lo(), 0));
                }
                for _ in 0..bits {
                    self.e(Instr::Lsl(vl.lo()));
                    self.e(Instr::Rol(vl.hi()));
                    self.e(Instr::Rol(vh.lo()));
                    self.e(Instr::Rol(vh.hi()));
                }
            }
            ShiftKind::Ushr => {
                let (bytes, bits) = (k / 8, k % 8);
                for _ in 0..bytes {
                    self.e(Instr::Mov(vl.lo(), vl.hi()));
                    self.e(Instr::Mov(vl.hi(), vh.lo()));
                    self.e(Instr::Mov(vh.lo(), vh.hi()));
                    self.e(Instr::Ldi(vh.hi(), 0));
                }
                for _ in 0..bits {
                    self.e(Instr::Lsr(vh.hi()));
                    self.e(Instr::Ror(vh.lo()));
                    self.e(Instr::Ror(vl.hi()));
                    self.e(Instr::Ror(vl.lo()));
                }
            }
            ShiftKind::Shr => {
                let k = k.min(31);
                let (bytes, bits) = (k / 8, k % 8);
                for _ in 0..bytes {
                    self.e(Instr::Mov(vl.lo(), vl.hi()));
                    self.e(Instr::Mov(vl.hi(), vh.lo()));
                    self.e(Instr::Mov(vh.lo(), vh.hi()));
                    self.e(Instr::Lsl(vh.hi()));
                    self.e(Instr::Sbc(vh.hi(), vh.hi()));
                }
                for _ in 0..bits {
                    self.e(Instr::Asr(vh.hi()));
                    self.e(Instr::Ror(vh.lo()));
                    self.e(Instr::Ror(vl.hi()));
                    self.e(Instr::Ror(vl.lo()));
                }
            }
        }
        self.cache.push(&mut self.buf, vl, None);
        self.cache.push(&mut self.buf, vh, None);
    }

    // ---- compares and branches --------------------------------------------

    /// Emit CP/CPC + branch tag. GT/LE have no hardware condition; they are
    /// lowered by comparing in the other direction.
    fn compare16(&mut self, op: CmpOp, target: u16) {
        let b = self.cache.pop_nondestructive(&mut self.buf, 0);
        let a = self.cache.pop_nondestructive(&mut self.buf, 1);
        self.cache.flush(&mut self.buf);
        let (x, y, cond) = match op {
            CmpOp::Eq => (b, a, Cond::Eq),
            CmpOp::Ne => (b, a, Cond::Ne),
            CmpOp::Lt => (a, b, Cond::LtS),
            CmpOp::Ge => (a, b, Cond::GeS),
            CmpOp::Gt => (b, a, Cond::LtS),
            CmpOp::Le => (b, a, Cond::GeS),
        };
        self.e(Instr::Cp(x.lo(), y.lo()));
        self.e(Instr::Cpc(x.hi(), y.hi()));
        self.e(Instr::BranchTag { cond: Some(cond), target });
    }

    fn compare32(&mut self, op: CmpOp, target: u16) {
        let bh = self.cache.pop_nondestructive(&mut self.buf, 0);
        let bl = self.cache.pop_nondestructive(&mut self.buf, 1);
        let ah = self.cache.pop_nondestructive(&mut self.buf, 2);
        let al = self.cache.pop_nondestructive(&mut self.buf, 3);
        self.cache.flush(&mut self.buf);
        let (xl, xh, yl, yh, cond) = match op {
            CmpOp::Eq => (bl, bh, al, ah, Cond::Eq),
            CmpOp::Ne => (bl, bh, al, ah, Cond::Ne),
            CmpOp::Lt => (al, ah, bl, bh, Cond::LtS),
            CmpOp::Ge => (al, ah, bl, bh, Cond::GeS),
            CmpOp::Gt => (bl, bh, al, ah, Cond::LtS),
            CmpOp::Le => (bl, bh, al, ah, Cond::GeS),
        };
        self.e(Instr::Cp(xl.lo(), yl.lo()));
        self.e(Instr::Cpc(xl.hi(), yl.hi()));
        self.e(Instr::Cpc(xh.lo(), yh.lo()));
        self.e(Instr::Cpc(xh.hi(), yh.hi()));
        self.e(Instr::BranchTag { cond: Some(cond), target });
    }

    fn compare_zero(&mut self, op: CmpOp, target: u16) {
        let a = self.cache.pop_nondestructive(&mut self.buf, 0);
        self.cache.flush(&mut self.buf);
        let cond = match op {
            CmpOp::Eq | CmpOp::Ne => {
                self.e(Instr::Mov(Reg(0), a.lo()));
                self.e(Instr::Or(Reg(0), a.hi()));
                if op == CmpOp::Eq { Cond::Eq } else { Cond::Ne }
            }
            CmpOp::Lt | CmpOp::Ge => {
                // Sign test without disturbing the value.
                self.e(Instr::And(a.hi(), a.hi()));
                if op == CmpOp::Lt { Cond::Mi } else { Cond::Pl }
            }
            CmpOp::Gt | CmpOp::Le => {
                // 0 cmp a: `a > 0` is `0 < a`.
                self.e(Instr::Ldi(Reg(0), 0));
                self.e(Instr::Ldi(Reg(1), 0));
                self.e(Instr::Cp(Reg(0), a.lo()));
                self.e(Instr::Cpc(Reg(1), a.hi()));
                if op == CmpOp::Gt { Cond::LtS } else { Cond::GeS }
            }
        };
        self.e(Instr::BranchTag { cond: Some(cond), target });
    }

    // ---- array and object access ------------------------------------------

    /// Pop array ref and (already-popped) index, leave Z on element 0 + the
    /// scaled index added, past the length header.
    fn array_address(&mut self, idx: Pair, kind: ElemKind) {
        self.pop_ref_to_z();
        match kind.byte_size() {
            1 => {}
            2 => {
                self.e(Instr::Lsl(idx.lo()));
                self.e(Instr::Rol(idx.hi()));
            }
            _ => {
                self.e(Instr::Lsl(idx.lo()));
                self.e(Instr::Rol(idx.hi()));
                self.e(Instr::Lsl(idx.lo()));
                self.e(Instr::Rol(idx.hi()));
            }
        }
        self.e(Instr::Add(Reg(30), idx.lo()));
        self.e(Instr::Adc(Reg(31), idx.hi()));
        self.e(Instr::Adiw(regs::Z, 2));
    }

    fn arr_load(&mut self, kind: ElemKind, wide: bool) {
        if wide {
            // Addresses are 16-bit: the high index half is popped and dropped.
            self.cache.pop_nondestructive(&mut self.buf, 0);
        }
        let idx = self.cache.pop_destructive(&mut self.buf, usize::from(wide));
        self.array_address(idx, kind);
        match kind {
            ElemKind::Short => {
                self.e(Instr::Ldd(idx.lo(), DispPtr::Z, 0));
                self.e(Instr::Ldd(idx.hi(), DispPtr::Z, 1));
                self.cache.push(&mut self.buf, idx, None);
            }
            ElemKind::Byte => {
                self.e(Instr::Ldd(idx.lo(), DispPtr::Z, 0));
                self.e(Instr::Mov(idx.hi(), idx.lo()));
                self.e(Instr::Lsl(idx.hi()));
                self.e(Instr::Sbc(idx.hi(), idx.hi()));
                self.cache.push(&mut self.buf, idx, None);
            }
            ElemKind::Int => {
                let h = self.cache.getfree(&mut self.buf, 2);
                self.e(Instr::Ldd(idx.lo(), DispPtr::Z, 0));
                self.e(Instr::Ldd(idx.hi(), DispPtr::Z, 1));
                self.e(Instr::Ldd(h.lo(), DispPtr::Z, 2));
                self.e(Instr::Ldd(h.hi(), DispPtr::Z, 3));
                self.cache.push(&mut self.buf, idx, None);
                self.cache.push(&mut self.buf, h, None);
            }
            ElemKind::Ref => {
                self.e(Instr::Ldd(Reg(0), DispPtr::Z, 0));
                self.e(Instr::Ldd(Reg(1), DispPtr::Z, 1));
                self.push_ref_from_scratch();
            }
        }
    }

    fn arr_store(&mut self, kind: ElemKind, wide: bool) {
        match kind {
            ElemKind::Ref => {
                if wide {
                    self.cache.pop_nondestructive(&mut self.buf, 0);
                }
                let idx = self.cache.pop_destructive(&mut self.buf, usize::from(wide));
                // Reference stack: the value sits above the array ref.
                self.pop_ref_to_scratch();
                self.array_address(idx, kind);
                self.e(Instr::Std(DispPtr::Z, 0, Reg(0)));
                self.e(Instr::Std(DispPtr::Z, 1, Reg(1)));
            }
            ElemKind::Int => {
                let vh = self.cache.pop_nondestructive(&mut self.buf, 0);
                let vl = self.cache.pop_nondestructive(&mut self.buf, 1);
                if wide {
                    self.cache.pop_nondestructive(&mut self.buf, 2);
                }
                let idx = self
                    .cache
                    .pop_destructive(&mut self.buf, 2 + usize::from(wide));
                self.array_address(idx, kind);
                self.e(Instr::Std(DispPtr::Z, 0, vl.lo()));
                self.e(Instr::Std(DispPtr::Z, 1, vl.hi()));
                self.e(Instr::Std(DispPtr::Z, 2, vh.lo()));
                self.e(Instr::Std(DispPtr::Z, 3, vh.hi()));
            }
            ElemKind::Short | ElemKind::Byte => {
                let v = self.cache.pop_nondestructive(&mut self.buf, 0);
                if wide {
                    self.cache.pop_nondestructive(&mut self.buf, 1);
                }
                let idx = self
                    .cache
                    .pop_destructive(&mut self.buf, 1 + usize::from(wide));
                self.array_address(idx, kind);
                self.e(Instr::Std(DispPtr::Z, 0, v.lo()));
                if kind == ElemKind::Short {
                    self.e(Instr::Std(DispPtr::Z, 1, v.hi()));
                }
            }
        }
    }

    // ---- calls -------------------------------------------------------------

    /// Frame-slot byte offset of pin save `i` (after the return-address slot
    /// in lightweight non-leaves).
    fn pin_save_off(&self, i: usize) -> u16 {
        let ret_save = u16::from(self.shape.lightweight && !self.shape.lw_leaf);
        self.mi.off_pinned_save() + 2 * ret_save + 2 * i as u16
    }

    fn adjust_y(&mut self, bytes: u16, down: bool) {
        let mut rem = bytes;
        while rem > 0 {
            let step = rem.min(63) as u8;
            self.e(if down {
                Instr::Sbiw(regs::Y, step)
            } else {
                Instr::Adiw(regs::Y, step)
            });
            rem -= step as u16;
        }
    }

    fn invoke_static(&mut self, idx: u16) {
        let ci = self.callees[idx as usize].clone();
        self.cache.flush(&mut self.buf);
        // The builtin preserves r4..r25, so only remembered statics die.
        self.cache.clear_static_tags();
        self.e(Instr::Ldi(Reg(2), (idx & 0xff) as u8));
        self.e(Instr::Ldi(Reg(3), (idx >> 8) as u8));
        self.e(Instr::Call(builtins::INVOKE));
        self.cache.note_stack_delta(-(ci.param_int_slots as i16));
        match ci.ret_int_slots {
            1 => self.cache.push(&mut self.buf, regs::RETVAL, None),
            2 => {
                self.cache.push(&mut self.buf, regs::RETVAL, None);
                self.cache.push(&mut self.buf, regs::RETVAL_HI, None);
            }
            _ => {}
        }
    }

    fn invoke_light(&mut self, idx: u16) {
        let ci = self.callees[idx as usize].clone();
        self.cache.flush(&mut self.buf);
        // The callee runs on our registers: everything not pinned is gone,
        // and pinned pairs it uses are saved around the call.
        self.cache.clear_tags();
        let pins = self.cache.pinned();
        let saves: Vec<(usize, Pair)> = pins
            .iter()
            .enumerate()
            .filter(|(_, (p, _))| ci.used_pairs.contains(p))
            .map(|(i, (p, _))| (i, *p))
            .collect();
        for (i, p) in &saves {
            let off = self.pin_save_off(*i);
            self.frame_st(off, *p);
        }
        let adv = if ci.needs_frame { self.mi.off_lw_region() } else { 0 };
        self.adjust_y(adv, false);
        self.e(Instr::Call(builtins::METHOD_CALL_BASE | idx));
        self.adjust_y(adv, true);
        for (i, p) in saves.iter().rev() {
            let off = self.pin_save_off(*i);
            self.frame_ld(*p, off);
        }
        self.cache.note_stack_delta(-(ci.param_int_slots as i16));
        match ci.ret_int_slots {
            1 => self.cache.push(&mut self.buf, regs::RETVAL, None),
            2 => {
                self.cache.push(&mut self.buf, regs::RETVAL, None);
                self.cache.push(&mut self.buf, regs::RETVAL_HI, None);
            }
            _ => {}
        }
    }

    fn lw_epilogue(&mut self) {
        // Int results travel in the fixed return-value pairs; ref results
        // stay on the shared reference stack.
        match self.shape.ret {
            Some(Dt::Short) => {
                let v = self.cache.pop_nondestructive(&mut self.buf, 0);
                self.e(Instr::Movw(regs::RETVAL, v));
            }
            Some(Dt::Int) => {
                let hi = self.cache.pop_nondestructive(&mut self.buf, 0);
                let lo = self.cache.pop_nondestructive(&mut self.buf, 1);
                self.e(Instr::Movw(regs::RETVAL_HI, hi));
                self.e(Instr::Movw(regs::RETVAL, lo));
            }
            _ => {}
        }
        self.cache.flush(&mut self.buf);
        // Return through an indirect jump: cheaper than re-pushing the
        // return address for RET.
        if self.shape.lw_leaf {
            self.e(Instr::Movw(regs::Z, Pair(18)));
        } else {
            let off = self.mi.off_pinned_save();
            self.frame_ld(Pair(18), off);
            self.e(Instr::Movw(regs::Z, Pair(18)));
        }
        self.e(Instr::Ijmp);
    }

    // ---- mark loops --------------------------------------------------------

    fn markloop_begin(&mut self, info: &LoopInfo) {
        if !self.level.honours_markloops() {
            return;
        }
        debug_assert!(self.active_loop.is_none(), "mark loops do not nest");
        self.cache.flush(&mut self.buf);
        self.cache.clear_tags();
        let max = self.shape.max_pins(self.level, self.pin_cap);
        let mut pins = Vec::new();
        for (tag, _) in info.tags.iter().take(max) {
            let p = self.cache.pin(*tag);
            if tag.kind == TagKind::Constant {
                self.e(Instr::Ldi(p.lo(), (tag.num & 0xff) as u8));
                self.e(Instr::Ldi(p.hi(), (tag.num >> 8) as u8));
            } else if info.live_at_entry.contains(tag) {
                match tag.kind {
                    TagKind::Local => self.frame_ld(p, 2 * tag.num),
                    TagKind::Static => {
                        let addr = self.static_int_addr(tag.num);
                        self.load_z_imm(addr);
                        self.e(Instr::Ldd(p.lo(), DispPtr::Z, 0));
                        self.e(Instr::Ldd(p.hi(), DispPtr::Z, 1));
                    }
                    TagKind::Constant => unreachable!(),
                }
            }
            pins.push((p, *tag));
        }
        self.active_loop = Some(pins);
        self.loop_exit_live = info.live_at_exit.clone();
    }

    fn markloop_end(&mut self) {
        if !self.level.honours_markloops() {
            return;
        }
        let Some(pins) = self.active_loop.take() else { return };
        let exit_live = core::mem::take(&mut self.loop_exit_live);
        let mut synced = Vec::new();
        for (p, tag) in &pins {
            if tag.kind == TagKind::Constant {
                synced.push(*tag); // constants are never stale in memory
                continue;
            }
            if !exit_live.contains(tag) {
                continue;
            }
            match tag.kind {
                TagKind::Local => self.frame_st(2 * tag.num, *p),
                TagKind::Static => {
                    let addr = self.static_int_addr(tag.num);
                    self.load_z_imm(addr);
                    self.e(Instr::Std(DispPtr::Z, 0, p.lo()));
                    self.e(Instr::Std(DispPtr::Z, 1, p.hi()));
                }
                TagKind::Constant => unreachable!(),
            }
            synced.push(*tag);
        }
        self.cache.unpin_all(&synced);
    }

    // ---- the dispatcher ----------------------------------------------------

    pub fn translate(&mut self, instr: &BcInstr) {
        self.cache.begin_instr();
        use BcInstr::*;
        match instr {
            Sload(n) => self.load_slot(ValueTag::local(Dt::Short, *n), 0),
            Iload(n) => {
                self.load_slot(ValueTag::local(Dt::Int, *n), 0);
                self.load_slot(ValueTag::local(Dt::Int, *n + 1), 1);
            }
            Sstore(n) => self.store_slot(ValueTag::local(Dt::Short, *n), 0),
            Istore(n) => {
                self.store_slot(ValueTag::local(Dt::Int, *n + 1), 0);
                self.store_slot(ValueTag::local(Dt::Int, *n), 1);
            }
            Aload(n) => {
                let off = self.mi.off_ref_locals() + 2 * n;
                let (p, d) = self.y_disp(off);
                self.e(Instr::Ldd(Reg(0), p, d));
                self.e(Instr::Ldd(Reg(1), p, d + 1));
                self.push_ref_from_scratch();
            }
            Astore(n) => {
                self.pop_ref_to_scratch();
                let off = self.mi.off_ref_locals() + 2 * n;
                let (p, d) = self.y_disp(off);
                self.e(Instr::Std(p, d, Reg(0)));
                self.e(Instr::Std(p, d + 1, Reg(1)));
            }
            Sconst(k) => self.load_const_slot(*k as u16, 0),
            Iconst(k) => {
                self.load_const_slot(*k as u32 as u16, 0);
                self.load_const_slot((*k as u32 >> 16) as u16, 1);
            }

            Sadd => self.bin16(Instr::Add, Instr::Adc),
            Ssub => self.bin16(Instr::Sub, Instr::Sbc),
            Sand => self.bin16(Instr::And, Instr::And),
            Sor => self.bin16(Instr::Or, Instr::Or),
            Sxor => self.bin16(Instr::Eor, Instr::Eor),
            Iadd => self.bin32(Instr::Add, Instr::Adc),
            Isub => self.bin32(Instr::Sub, Instr::Sbc),
            Iand => self.bin32(Instr::And, Instr::And),
            Ior => self.bin32(Instr::Or, Instr::Or),
            Ixor => self.bin32(Instr::Eor, Instr::Eor),

            Smul => {
                let b = self.cache.pop_nondestructive(&mut self.buf, 0);
                let a = self.cache.pop_nondestructive(&mut self.buf, 1);
                let d = self.cache.getfree(&mut self.buf, 2);
                self.e(Instr::Mul(a.lo(), b.lo()));
                self.e(Instr::Movw(d, regs::SCRATCH));
                self.e(Instr::Mul(a.lo(), b.hi()));
                self.e(Instr::Add(d.hi(), Reg(0)));
                self.e(Instr::Mul(a.hi(), b.lo()));
                self.e(Instr::Add(d.hi(), Reg(0)));
                self.cache.push(&mut self.buf, d, None);
            }
            Simul => {
                let b = self.cache.pop_nondestructive(&mut self.buf, 0);
                let a = self.cache.pop_nondestructive(&mut self.buf, 1);
                let dl = self.cache.getfree(&mut self.buf, 2);
                let dh = self.cache.getfree(&mut self.buf, 3);
                self.e(Instr::Mul(a.lo(), b.lo()));
                self.e(Instr::Movw(dl, regs::SCRATCH));
                self.e(Instr::Mul(a.hi(), b.hi()));
                self.e(Instr::Movw(dh, regs::SCRATCH));
                self.e(Instr::Ldi(Reg(2), 0));
                self.e(Instr::Mul(a.hi(), b.lo()));
                self.e(Instr::Add(dl.hi(), Reg(0)));
                self.e(Instr::Adc(dh.lo(), Reg(1)));
                self.e(Instr::Adc(dh.hi(), Reg(2)));
                self.e(Instr::Mul(a.lo(), b.hi()));
                self.e(Instr::Add(dl.hi(), Reg(0)));
                self.e(Instr::Adc(dh.lo(), Reg(1)));
                self.e(Instr::Adc(dh.hi(), Reg(2)));
                // Unsigned-to-signed fixups: subtract the other operand from
                // the high half for each negative input.
                self.e(Instr::And(a.hi(), a.hi()));
                self.e(Instr::Brc(Cond::Pl, 2));
                self.e(Instr::Sub(dh.lo(), b.lo()));
                self.e(Instr::Sbc(dh.hi(), b.hi()));
                self.e(Instr::And(b.hi(), b.hi()));
                self.e(Instr::Brc(Cond::Pl, 2));
                self.e(Instr::Sub(dh.lo(), a.lo()));
                self.e(Instr::Sbc(dh.hi(), a.hi()));
                self.cache.push(&mut self.buf, dl, None);
                self.cache.push(&mut self.buf, dh, None);
            }
            Sneg => {
                let a = self.cache.pop_destructive(&mut self.buf, 0);
                self.e(Instr::Ldi(Reg(0), 0));
                self.e(Instr::Ldi(Reg(1), 0));
                self.e(Instr::Sub(Reg(0), a.lo()));
                self.e(Instr::Sbc(Reg(1), a.hi()));
                self.e(Instr::Movw(a, regs::SCRATCH));
                self.cache.push(&mut self.buf, a, None);
            }
            Ineg => {
                let ah = self.cache.pop_destructive(&mut self.buf, 0);
                let al = self.cache.pop_destructive(&mut self.buf, 1);
                self.e(Instr::Ldi(Reg(0), 0));
                self.e(Instr::Ldi(Reg(1), 0));
                self.e(Instr::Ldi(Reg(2), 0));
                self.e(Instr::Ldi(Reg(3), 0));
                self.e(Instr::Sub(Reg(0), al.lo()));
                self.e(Instr::Sbc(Reg(1), al.hi()));
                self.e(Instr::Sbc(Reg(2), ah.lo()));
                self.e(Instr::Sbc(Reg(3), ah.hi()));
                self.e(Instr::Movw(al, regs::SCRATCH));
                self.e(Instr::Movw(ah, regs::RETVAL));
                self.cache.push(&mut self.buf, al, None);
                self.cache.push(&mut self.buf, ah, None);
            }
            Sdiv => {
                self.cache.flush(&mut self.buf);
                self.e(Instr::Call(builtins::SDIV));
                self.cache.note_stack_delta(-2);
                self.cache.push(&mut self.buf, regs::RETVAL, None);
            }
            Idiv => {
                self.cache.flush(&mut self.buf);
                self.e(Instr::Call(builtins::IDIV));
                self.cache.note_stack_delta(-4);
                self.cache.push(&mut self.buf, regs::RETVAL, None);
                self.cache.push(&mut self.buf, regs::RETVAL_HI, None);
            }
            Imul => {
                self.cache.flush(&mut self.buf);
                self.e(Instr::Call(builtins::IMUL));
                self.cache.note_stack_delta(-4);
                self.cache.push(&mut self.buf, regs::RETVAL, None);
                self.cache.push(&mut self.buf, regs::RETVAL_HI, None);
            }

            Sinc(n, d) => {
                let tag = ValueTag::local(Dt::Short, *n);
                if let Some(pp) = self.cache.pinned_pair(tag) {
                    self.add_imm16(pp, *d);
                } else if let Some(fp) = self.cache.tagged_free_pair(tag) {
                    self.cache.hold(fp);
                    self.add_imm16(fp, *d);
                    self.frame_st(2 * n, fp);
                } else {
                    let p = self.cache.getfree(&mut self.buf, 0);
                    self.frame_ld(p, 2 * n);
                    self.add_imm16(p, *d);
                    self.frame_st(2 * n, p);
                    self.cache.set_tag(p, tag);
                }
            }
            Iinc(n, d) => {
                let tlo = ValueTag::local(Dt::Int, *n);
                let thi = ValueTag::local(Dt::Int, *n + 1);
                let acquire = |t: &mut Translator, tag: ValueTag, off: u16, hint: usize| {
                    if let Some(p) = t.cache.pinned_pair(tag) {
                        (p, true)
                    } else if let Some(p) = t.cache.tagged_free_pair(tag) {
                        t.cache.hold(p);
                        (p, false)
                    } else {
                        let p = t.cache.getfree(&mut t.buf, hint);
                        t.frame_ld(p, off);
                        (p, false)
                    }
                };
                let (pl, lo_pinned) = acquire(self, tlo, 2 * n, 0);
                let (ph, hi_pinned) = acquire(self, thi, 2 * n + 2, 1);
                self.add_imm32(pl, ph, *d);
                if !lo_pinned {
                    self.frame_st(2 * n, pl);
                    self.cache.set_tag(pl, tlo);
                }
                if !hi_pinned {
                    self.frame_st(2 * n + 2, ph);
                    self.cache.set_tag(ph, thi);
                }
            }

            Sshl => self.shift16(|v| [Instr::Lsl(v.lo()), Instr::Rol(v.hi())]),
            Sshr => self.shift16(|v| [Instr::Asr(v.hi()), Instr::Ror(v.lo())]),
            Sushr => self.shift16(|v| [Instr::Lsr(v.hi()), Instr::Ror(v.lo())]),
            Ishl => self.shift32(|vl, vh| {
                [
                    Instr::Lsl(vl.lo()),
                    Instr::Rol(vl.hi()),
                    Instr::Rol(vh.lo()),
                    Instr::Rol(vh.hi()),
                ]
            }),
            Ishr => self.shift32(|vl, vh| {
                [
                    Instr::Asr(vh.hi()),
                    Instr::Ror(vh.lo()),
                    Instr::Ror(vl.hi()),
                    Instr::Ror(vl.lo()),
                ]
            }),
            Iushr => self.shift32(|vl, vh| {
                [
                    Instr::Lsr(vh.hi()),
                    Instr::Ror(vh.lo()),
                    Instr::Ror(vl.hi()),
                    Instr::Ror(vl.lo()),
                ]
            }),
            SshlC(k) => self.shift16_const(*k, ShiftKind::Shl),
            SshrC(k) => self.shift16_const(*k, ShiftKind::Shr),
            SushrC(k) => self.shift16_const(*k, ShiftKind::Ushr),
            IshlC(k) => self.shift32_const(*k, ShiftKind::Shl),
            IshrC(k) => self.shift32_const(*k, ShiftKind::Shr),
            IushrC(k) => self.shift32_const(*k, ShiftKind::Ushr),

            S2i => {
                let lo = self.cache.pop_nondestructive(&mut self.buf, 0);
                let h = self.cache.getfree(&mut self.buf, 1);
                self.e(Instr::Mov(h.lo(), lo.hi()));
                self.e(Instr::Lsl(h.lo()));
                self.e(Instr::Sbc(h.lo(), h.lo()));
                self.e(Instr::Mov(h.hi(), h.lo()));
                self.cache.push(&mut self.buf, lo, None);
                self.cache.push(&mut self.buf, h, None);
            }
            I2s => {
                // Drop the high half; the low half keeps its stack position.
                self.cache.pop_nondestructive(&mut self.buf, 0);
            }

            ArrLoad { kind, wide_index } => self.arr_load(*kind, *wide_index),
            ArrStore { kind, wide_index } => self.arr_store(*kind, *wide_index),
            ArrayLength => {
                self.pop_ref_to_z();
                let p = self.cache.getfree(&mut self.buf, 0);
                self.e(Instr::Ldd(p.lo(), DispPtr::Z, 0));
                self.e(Instr::Ldd(p.hi(), DispPtr::Z, 1));
                self.cache.push(&mut self.buf, p, None);
            }

            GetfieldS { slot, .. } => {
                self.pop_ref_to_z();
                let p = self.cache.getfree(&mut self.buf, 0);
                let d = self.z_off(2 + 2 * slot);
                self.e(Instr::Ldd(p.lo(), DispPtr::Z, d));
                self.e(Instr::Ldd(p.hi(), DispPtr::Z, d + 1));
                self.cache.push(&mut self.buf, p, None);
            }
            GetfieldI { slot, .. } => {
                self.pop_ref_to_z();
                let p = self.cache.getfree(&mut self.buf, 0);
                let h = self.cache.getfree(&mut self.buf, 1);
                let d = self.z_off(2 + 2 * slot);
                self.e(Instr::Ldd(p.lo(), DispPtr::Z, d));
                self.e(Instr::Ldd(p.hi(), DispPtr::Z, d + 1));
                self.e(Instr::Ldd(h.lo(), DispPtr::Z, d + 2));
                self.e(Instr::Ldd(h.hi(), DispPtr::Z, d + 3));
                self.cache.push(&mut self.buf, p, None);
                self.cache.push(&mut self.buf, h, None);
            }
            PutfieldS { slot, .. } => {
                let v = self.cache.pop_nondestructive(&mut self.buf, 0);
                self.pop_ref_to_z();
                let d = self.z_off(2 + 2 * slot);
                self.e(Instr::Std(DispPtr::Z, d, v.lo()));
                self.e(Instr::Std(DispPtr::Z, d + 1, v.hi()));
            }
            PutfieldI { slot, .. } => {
                let vh = self.cache.pop_nondestructive(&mut self.buf, 0);
                let vl = self.cache.pop_nondestructive(&mut self.buf, 1);
                self.pop_ref_to_z();
                let d = self.z_off(2 + 2 * slot);
                self.e(Instr::Std(DispPtr::Z, d, vl.lo()));
                self.e(Instr::Std(DispPtr::Z, d + 1, vl.hi()));
                self.e(Instr::Std(DispPtr::Z, d + 2, vh.lo()));
                self.e(Instr::Std(DispPtr::Z, d + 3, vh.hi()));
            }
            GetfieldA { class, slot } | PutfieldA { class, slot } => {
                // Non-final classes: the runtime walks the class chain.
                self.e(Instr::Ldi(Reg(2), (*class & 0xff) as u8));
                self.e(Instr::Ldi(Reg(3), (*class >> 8) as u8));
                self.e(Instr::Ldi(Reg(0), (*slot & 0xff) as u8));
                self.e(Instr::Ldi(Reg(1), (*slot >> 8) as u8));
                self.e(Instr::Call(if matches!(instr, GetfieldA { .. }) {
                    builtins::GETFIELD_A
                } else {
                    builtins::PUTFIELD_A
                }));
            }
            GetfieldAFixed { off } => {
                self.pop_ref_to_z();
                let d = self.z_off(*off);
                self.e(Instr::Ldd(Reg(0), DispPtr::Z, d));
                self.e(Instr::Ldd(Reg(1), DispPtr::Z, d + 1));
                self.push_ref_from_scratch();
            }
            PutfieldAFixed { off } => {
                self.pop_ref_to_scratch(); // the value is above the object
                self.pop_ref_to_z();
                let d = self.z_off(*off);
                self.e(Instr::Std(DispPtr::Z, d, Reg(0)));
                self.e(Instr::Std(DispPtr::Z, d + 1, Reg(1)));
            }

            GetstaticS(n) => self.load_slot(ValueTag::static_(Dt::Short, *n), 0),
            GetstaticI(n) => {
                self.load_slot(ValueTag::static_(Dt::Int, *n), 0);
                self.load_slot(ValueTag::static_(Dt::Int, *n + 1), 1);
            }
            PutstaticS(n) => self.store_slot(ValueTag::static_(Dt::Short, *n), 0),
            PutstaticI(n) => {
                self.store_slot(ValueTag::static_(Dt::Int, *n + 1), 0);
                self.store_slot(ValueTag::static_(Dt::Int, *n), 1);
            }
            GetstaticA(n) => {
                let addr = self.static_ref_addr(*n);
                self.load_z_imm(addr);
                self.e(Instr::Ldd(Reg(0), DispPtr::Z, 0));
                self.e(Instr::Ldd(Reg(1), DispPtr::Z, 1));
                self.push_ref_from_scratch();
            }
            PutstaticA(n) => {
                self.pop_ref_to_scratch();
                let addr = self.static_ref_addr(*n);
                self.load_z_imm(addr);
                self.e(Instr::Std(DispPtr::Z, 0, Reg(0)));
                self.e(Instr::Std(DispPtr::Z, 1, Reg(1)));
            }

            IfScmp(op, t) => self.compare16(*op, *t),
            IfIcmp(op, t) => self.compare32(*op, *t),
            If0(op, t) => self.compare_zero(*op, *t),
            Goto(t) => {
                self.cache.flush(&mut self.buf);
                self.e(Instr::BranchTag { cond: None, target: *t });
            }
            Brtarget(id) => {
                // Joined paths agree on stack memory, not register contents.
                self.cache.flush(&mut self.buf);
                self.cache.clear_tags();
                self.buf.label(*id);
            }
            MarkloopBegin(info) => self.markloop_begin(info),
            MarkloopEnd => self.markloop_end(),
            LwParameter(_) => {}

            Invokestatic(idx) => self.invoke_static(*idx),
            Invokelight(idx) => self.invoke_light(*idx),

            Sreturn => {
                if self.shape.lightweight {
                    self.lw_epilogue();
                } else {
                    let v = self.cache.pop_nondestructive(&mut self.buf, 0);
                    self.e(Instr::Movw(regs::RETVAL, v));
                    self.e(Instr::Ret);
                }
            }
            Ireturn => {
                if self.shape.lightweight {
                    self.lw_epilogue();
                } else {
                    let hi = self.cache.pop_nondestructive(&mut self.buf, 0);
                    let lo = self.cache.pop_nondestructive(&mut self.buf, 1);
                    self.e(Instr::Movw(regs::RETVAL_HI, hi));
                    self.e(Instr::Movw(regs::RETVAL, lo));
                    self.e(Instr::Ret);
                }
            }
            Areturn | Return => {
                if self.shape.lightweight {
                    self.lw_epilogue();
                } else {
                    // A ref result already sits on the reference stack.
                    self.e(Instr::Ret);
                }
            }

            New(cls) => {
                self.e(Instr::Ldi(Reg(2), (*cls & 0xff) as u8));
                self.e(Instr::Ldi(Reg(3), (*cls >> 8) as u8));
                self.e(Instr::Call(builtins::NEW));
            }
            Newarray(kind) => {
                self.cache.flush(&mut self.buf); // length via the native stack
                self.e(Instr::Ldi(Reg(2), kind.code()));
                self.e(Instr::Call(builtins::NEWARRAY));
                self.cache.note_stack_delta(-1);
            }
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ShiftKind {
    Shl,
    Shr,
    Ushr,
}

use crate::image::CodeSlot;
