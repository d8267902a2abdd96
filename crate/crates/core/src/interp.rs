//! The reference interpreter: big-step semantics over 16-bit slots, used as
//! the ground-truth oracle for the compiler and simulator.
//!
//! Semantics notes that matter for equivalence with generated code:
//!
//! * Variable shifts take effect through an 8-bit counter: the effective
//!   shift count is `n = count & 0xff`, and `1..=128` of those shift one bit
//!   at a time; anything else shifts zero times (mirrors the generated
//!   decrement loop).
//! * Array indexes are truncated to 16 bits before use, like the generated
//!   address arithmetic.
//! * Division is truncating with wrap-around on overflow
//!   (`i16::MIN / -1 == i16::MIN`); division by zero is a trap.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bytecode::{BcInstr, Dt, ElemKind, Infusion, MethodDef};
use crate::world::{FinalState, Workload};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InterpError {
    DivisionByZero { method: String, instr: usize },
    NullReference { method: String, instr: usize },
    IndexOutOfBounds { method: String, instr: usize },
    StepLimit,
    CallDepth,
    Trap(String),
}

impl core::fmt::Display for InterpError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            InterpError::DivisionByZero { method, instr } => {
                write!(f, "division by zero in `{method}` at {instr}")
            }
            InterpError::NullReference { method, instr } => {
                write!(f, "null reference in `{method}` at {instr}")
            }
            InterpError::IndexOutOfBounds { method, instr } => {
                write!(f, "index out of bounds in `{method}` at {instr}")
            }
            InterpError::StepLimit => write!(f, "step limit exceeded"),
            InterpError::CallDepth => write!(f, "call depth exceeded"),
            InterpError::Trap(m) => write!(f, "trap: {m}"),
        }
    }
}

/// Effective count of a variable shift: the low byte drives an 8-bit
/// decrement loop.
pub fn effective_shift(count: i32) -> u32 {
    let n = (count & 0xff) as u32;
    if (1..=128).contains(&n) {
        n
    } else {
        0
    }
}

pub fn shl16(v: i16, n: u32) -> i16 {
    if n >= 16 {
        0
    } else {
        ((v as u16) << n) as i16
    }
}
pub fn shr16(v: i16, n: u32) -> i16 {
    v >> n.min(15)
}
pub fn ushr16(v: i16, n: u32) -> i16 {
    if n >= 16 {
        0
    } else {
        ((v as u16) >> n) as i16
    }
}
pub fn shl32(v: i32, n: u32) -> i32 {
    if n >= 32 {
        0
    } else {
        ((v as u32) << n) as i32
    }
}
pub fn shr32(v: i32, n: u32) -> i32 {
    v >> n.min(31)
}
pub fn ushr32(v: i32, n: u32) -> i32 {
    if n >= 32 {
        0
    } else {
        ((v as u32) >> n) as i32
    }
}

/// Heap objects. References are handles: 0 is null, `h` points at
/// allocation ordinal `h - 1`.
enum Heap {
    Array(ElemKind, Vec<i32>),
    Object { class: u16, ints: Vec<i16>, refs: Vec<u16> },
}

pub struct Interp<'a> {
    inf: &'a Infusion,
    statics_int: Vec<i16>,
    statics_ref: Vec<u16>,
    heap: Vec<Heap>,
    steps: u64,
    step_limit: u64,
    depth: u32,
}

/// Run the infusion's entry method over `workload` and return the final
/// observable state.
pub fn interpret(
    inf: &Infusion,
    workload: &Workload,
    step_limit: u64,
) -> Result<FinalState, InterpError> {
    let entry = inf.method(inf.entry);
    if !entry.params.is_empty() {
        return Err(InterpError::Trap("entry method must have no parameters".into()));
    }
    let mut it = Interp {
        inf,
        statics_int: vec![0; inf.statics_int_slots as usize],
        statics_ref: vec![0; inf.statics_ref_slots as usize],
        heap: Vec::new(),
        steps: 0,
        step_limit,
        depth: 0,
    };
    for (i, v) in workload.statics_int.iter().enumerate() {
        it.statics_int[i] = *v;
    }
    for (i, (kind, data)) in workload.arrays.iter().enumerate() {
        it.heap.push(Heap::Array(*kind, data.clone()));
        it.statics_ref[i] = it.heap.len() as u16;
    }

    let mut ints = Vec::new();
    let mut refs = Vec::new();
    let mut locals_i = vec![0i16; entry.local_int_slots as usize];
    let mut locals_r = vec![0u16; entry.local_ref_slots as usize];
    it.exec(inf.entry, &mut ints, &mut refs, &mut locals_i, &mut locals_r)?;

    let ret = match entry.ret {
        None => None,
        Some(Dt::Short) => Some(ints.pop().unwrap_or(0) as i32),
        Some(Dt::Int) => {
            let hi = ints.pop().unwrap_or(0) as i32;
            let lo = ints.pop().unwrap_or(0) as u16 as i32;
            Some((hi << 16) | lo)
        }
        Some(Dt::Ref) => Some(refs.pop().unwrap_or(0) as i32),
    };

    let mut arrays = Vec::new();
    for h in &it.heap {
        if let Heap::Array(kind, data) = h {
            arrays.push((*kind, data.clone()));
        }
    }
    Ok(FinalState {
        statics_int: it.statics_int,
        ref_statics: it
            .statics_ref
            .iter()
            .map(|h| if *h == 0 { None } else { Some(*h as u32 - 1) })
            .collect(),
        arrays,
        ret,
    })
}

/// Pop helpers on the slot stacks.
fn pop_s(ints: &mut Vec<i16>) -> i16 {
    ints.pop().expect("verified code cannot underflow")
}
fn pop_i(ints: &mut Vec<i16>) -> i32 {
    let hi = pop_s(ints) as i32;
    let lo = pop_s(ints) as u16 as i32;
    (hi << 16) | lo
}
fn push_i(ints: &mut Vec<i16>, v: i32) {
    ints.push(v as i16);
    ints.push((v >> 16) as i16);
}

fn target_table(m: &MethodDef) -> Vec<usize> {
    if m.targets_resolved {
        let mut t = vec![0usize; m.brtarget_count as usize];
        for (idx, i) in m.body.iter().enumerate() {
            if let BcInstr::Brtarget(id) = i {
                t[*id as usize] = idx;
            }
        }
        t
    } else {
        m.labels.iter().map(|p| *p as usize).collect()
    }
}

impl<'a> Interp<'a> {
    fn exec(
        &mut self,
        mi: u16,
        ints: &mut Vec<i16>,
        refs: &mut Vec<u16>,
        locals_i: &mut [i16],
        locals_r: &mut [u16],
    ) -> Result<(), InterpError> {
        self.depth += 1;
        if self.depth > 64 {
            return Err(InterpError::CallDepth);
        }
        let m = self.inf.method(mi);
        let targets = target_table(m);
        let mut pc = 0usize;
        loop {
            self.steps += 1;
            if self.steps > self.step_limit {
                return Err(InterpError::StepLimit);
            }
            let instr = &m.body[pc];
            let oob = || InterpError::IndexOutOfBounds { method: m.name.clone(), instr: pc };
            let null = || InterpError::NullReference { method: m.name.clone(), instr: pc };
            use BcInstr::*;
            match instr {
                Sload(n) => ints.push(locals_i[*n as usize]),
                Iload(n) => {
                    ints.push(locals_i[*n as usize]);
                    ints.push(locals_i[*n as usize + 1]);
                }
                Aload(n) => refs.push(locals_r[*n as usize]),
                Sstore(n) => locals_i[*n as usize] = pop_s(ints),
                Istore(n) => {
                    locals_i[*n as usize + 1] = pop_s(ints);
                    locals_i[*n as usize] = pop_s(ints);
                }
                Astore(n) => locals_r[*n as usize] = refs.pop().expect("verified"),
                Sconst(k) => ints.push(*k),
                Iconst(k) => push_i(ints, *k),
                Sadd => bin_s(ints, |a, b| a.wrapping_add(b)),
                Ssub => bin_s(ints, |a, b| a.wrapping_sub(b)),
                Smul => bin_s(ints, |a, b| a.wrapping_mul(b)),
                Sdiv => {
                    let b = pop_s(ints);
                    let a = pop_s(ints);
                    if b == 0 {
                        return Err(InterpError::DivisionByZero {
                            method: m.name.clone(),
                            instr: pc,
                        });
                    }
                    ints.push(a.wrapping_div(b));
                }
                Sneg => {
                    let a = pop_s(ints);
                    ints.push(a.wrapping_neg());
                }
                Iadd => bin_i(ints, |a, b| a.wrapping_add(b)),
                Isub => bin_i(ints, |a, b| a.wrapping_sub(b)),
                Imul => bin_i(ints, |a, b| a.wrapping_mul(b)),
                Idiv => {
                    let b = pop_i(ints);
                    let a = pop_i(ints);
                    if b == 0 {
                        return Err(InterpError::DivisionByZero {
                            method: m.name.clone(),
                            instr: pc,
                        });
                    }
                    push_i(ints, a.wrapping_div(b));
                }
                Ineg => {
                    let a = pop_i(ints);
                    push_i(ints, a.wrapping_neg());
                }
                Sinc(n, k) => {
                    let s = &mut locals_i[*n as usize];
                    *s = s.wrapping_add(*k);
                }
                Iinc(n, k) => {
                    let lo = locals_i[*n as usize] as u16 as i32;
                    let hi = locals_i[*n as usize + 1] as i32;
                    let v = ((hi << 16) | lo).wrapping_add(*k as i32);
                    locals_i[*n as usize] = v as i16;
                    locals_i[*n as usize + 1] = (v >> 16) as i16;
                }
                Sand => bin_s(ints, |a, b| a & b),
                Sor => bin_s(ints, |a, b| a | b),
                Sxor => bin_s(ints, |a, b| a ^ b),
                Iand => bin_i(ints, |a, b| a & b),
                Ior => bin_i(ints, |a, b| a | b),
                Ixor => bin_i(ints, |a, b| a ^ b),
                Sshl => {
                    let c = pop_s(ints);
                    let v = pop_s(ints);
                    ints.push(shl16(v, effective_shift(c as i32)));
                }
                Sshr => {
                    let c = pop_s(ints);
                    let v = pop_s(ints);
                    ints.push(shr16(v, effective_shift(c as i32)));
                }
                Sushr => {
                    let c = pop_s(ints);
                    let v = pop_s(ints);
                    ints.push(ushr16(v, effective_shift(c as i32)));
                }
                Ishl => {
                    let c = pop_i(ints);
                    let v = pop_i(ints);
                    push_i(ints, shl32(v, effective_shift(c)));
                }
                Ishr => {
                    let c = pop_i(ints);
                    let v = pop_i(ints);
                    push_i(ints, shr32(v, effective_shift(c)));
                }
                Iushr => {
                    let c = pop_i(ints);
                    let v = pop_i(ints);
                    push_i(ints, ushr32(v, effective_shift(c)));
                }
                SshlC(k) => {
                    let v = pop_s(ints);
                    ints.push(shl16(v, *k as u32));
                }
                SshrC(k) => {
                    let v = pop_s(ints);
                    ints.push(shr16(v, *k as u32));
                }
                SushrC(k) => {
                    let v = pop_s(ints);
                    ints.push(ushr16(v, *k as u32));
                }
                IshlC(k) => {
                    let v = pop_i(ints);
                    push_i(ints, shl32(v, *k as u32));
                }
                IshrC(k) => {
                    let v = pop_i(ints);
                    push_i(ints, shr32(v, *k as u32));
                }
                IushrC(k) => {
                    let v = pop_i(ints);
                    push_i(ints, ushr32(v, *k as u32));
                }
                S2i => {
                    let v = pop_s(ints);
                    push_i(ints, v as i32);
                }
                I2s => {
                    let v = pop_i(ints);
                    ints.push(v as i16);
                }
                ArrLoad { kind, wide_index } => {
                    let idx = if *wide_index { pop_i(ints) as u16 } else { pop_s(ints) as u16 };
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    let (akind, data) = match &self.heap[h as usize - 1] {
                        Heap::Array(k, d) => (*k, d),
                        _ => return Err(InterpError::Trap("array op on object".into())),
                    };
                    if akind != *kind {
                        return Err(InterpError::Trap("array element kind mismatch".into()));
                    }
                    let v = *data.get(idx as usize).ok_or_else(oob)?;
                    match kind {
                        ElemKind::Byte | ElemKind::Short => ints.push(v as i16),
                        ElemKind::Int => push_i(ints, v),
                        ElemKind::Ref => refs.push(v as u16),
                    }
                }
                ArrStore { kind, wide_index } => {
                    let v = match kind {
                        ElemKind::Byte => pop_s(ints) as i8 as i32,
                        ElemKind::Short => pop_s(ints) as i32,
                        ElemKind::Int => pop_i(ints),
                        ElemKind::Ref => refs.pop().expect("verified") as i32,
                    };
                    let idx = if *wide_index { pop_i(ints) as u16 } else { pop_s(ints) as u16 };
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    let data = match &mut self.heap[h as usize - 1] {
                        Heap::Array(_, d) => d,
                        _ => return Err(InterpError::Trap("array op on object".into())),
                    };
                    *data.get_mut(idx as usize).ok_or_else(oob)? = v;
                }
                ArrayLength => {
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    let len = match &self.heap[h as usize - 1] {
                        Heap::Array(_, d) => d.len(),
                        _ => return Err(InterpError::Trap("array op on object".into())),
                    };
                    ints.push(len as i16);
                }
                GetfieldS { slot, .. } => {
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &self.heap[h as usize - 1] {
                        Heap::Object { ints: fi, .. } => ints.push(fi[*slot as usize]),
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                GetfieldI { slot, .. } => {
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &self.heap[h as usize - 1] {
                        Heap::Object { ints: fi, .. } => {
                            ints.push(fi[*slot as usize]);
                            ints.push(fi[*slot as usize + 1]);
                        }
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                GetfieldA { slot, .. } => {
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &self.heap[h as usize - 1] {
                        Heap::Object { refs: fr, .. } => refs.push(fr[*slot as usize]),
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                GetfieldAFixed { off } => {
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &self.heap[h as usize - 1] {
                        Heap::Object { class, refs: fr, .. } => {
                            let slot = self.fixed_ref_slot(*class, *off)?;
                            refs.push(fr[slot]);
                        }
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                PutfieldS { slot, .. } => {
                    let v = pop_s(ints);
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &mut self.heap[h as usize - 1] {
                        Heap::Object { ints: fi, .. } => fi[*slot as usize] = v,
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                PutfieldI { slot, .. } => {
                    let v = pop_i(ints);
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &mut self.heap[h as usize - 1] {
                        Heap::Object { ints: fi, .. } => {
                            fi[*slot as usize] = v as i16;
                            fi[*slot as usize + 1] = (v >> 16) as i16;
                        }
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                PutfieldA { slot, .. } => {
                    let v = refs.pop().expect("verified");
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    match &mut self.heap[h as usize - 1] {
                        Heap::Object { refs: fr, .. } => fr[*slot as usize] = v,
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    }
                }
                PutfieldAFixed { off } => {
                    let v = refs.pop().expect("verified");
                    let h = refs.pop().expect("verified");
                    if h == 0 {
                        return Err(null());
                    }
                    let class = match &self.heap[h as usize - 1] {
                        Heap::Object { class, .. } => *class,
                        _ => return Err(InterpError::Trap("field op on array".into())),
                    };
                    let slot = self.fixed_ref_slot(class, *off)?;
                    match &mut self.heap[h as usize - 1] {
                        Heap::Object { refs: fr, .. } => fr[slot] = v,
                        _ => unreachable!(),
                    }
                }
                GetstaticS(n) => ints.push(self.statics_int[*n as usize]),
                GetstaticI(n) => {
                    ints.push(self.statics_int[*n as usize]);
                    ints.push(self.statics_int[*n as usize + 1]);
                }
                GetstaticA(n) => refs.push(self.statics_ref[*n as usize]),
                PutstaticS(n) => self.statics_int[*n as usize] = pop_s(ints),
                PutstaticI(n) => {
                    self.statics_int[*n as usize + 1] = pop_s(ints);
                    self.statics_int[*n as usize] = pop_s(ints);
                }
                PutstaticA(n) => self.statics_ref[*n as usize] = refs.pop().expect("verified"),
                Simul => {
                    let b = pop_s(ints) as i32;
                    let a = pop_s(ints) as i32;
                    push_i(ints, a * b);
                }
                IfScmp(op, t) => {
                    let b = pop_s(ints) as i32;
                    let a = pop_s(ints) as i32;
                    if op.eval_i32(a, b) {
                        pc = targets[*t as usize];
                        continue;
                    }
                }
                IfIcmp(op, t) => {
                    let b = pop_i(ints);
                    let a = pop_i(ints);
                    if op.eval_i32(a, b) {
                        pc = targets[*t as usize];
                        continue;
                    }
                }
                If0(op, t) => {
                    let a = pop_s(ints) as i32;
                    if op.eval_i32(a, 0) {
                        pc = targets[*t as usize];
                        continue;
                    }
                }
                Goto(t) => {
                    pc = targets[*t as usize];
                    continue;
                }
                Brtarget(_) | MarkloopBegin(_) | MarkloopEnd | LwParameter(_) => {}
                Invokestatic(callee) => {
                    let c = self.inf.method(*callee);
                    let ia = c.param_int_slots() as usize;
                    let ra = c.param_ref_slots() as usize;
                    let mut li = vec![0i16; c.local_int_slots as usize];
                    let mut lr = vec![0u16; c.local_ref_slots as usize];
                    li[..ia].copy_from_slice(&ints[ints.len() - ia..]);
                    lr[..ra].copy_from_slice(&refs[refs.len() - ra..]);
                    ints.truncate(ints.len() - ia);
                    refs.truncate(refs.len() - ra);
                    let mut ci = Vec::new();
                    let mut cr = Vec::new();
                    self.exec(*callee, &mut ci, &mut cr, &mut li, &mut lr)?;
                    ints.extend_from_slice(&ci);
                    refs.extend_from_slice(&cr);
                }
                Invokelight(callee) => {
                    let c = self.inf.method(*callee);
                    let mut li = vec![0i16; c.local_int_slots as usize];
                    let mut lr = vec![0u16; c.local_ref_slots as usize];
                    self.exec(*callee, ints, refs, &mut li, &mut lr)?;
                }
                Sreturn | Ireturn | Areturn | Return => {
                    // Return value (if any) stays on this method's stacks;
                    // the invoker copies it out.
                    self.depth -= 1;
                    return Ok(());
                }
                New(cls) => {
                    let ni = self.inf.chain_int_slots(*cls) as usize;
                    let nr = self.inf.chain_ref_slots(*cls) as usize;
                    self.heap.push(Heap::Object {
                        class: *cls,
                        ints: vec![0; ni],
                        refs: vec![0; nr],
                    });
                    refs.push(self.heap.len() as u16);
                }
                Newarray(kind) => {
                    let len = pop_s(ints) as u16 as usize;
                    self.heap.push(Heap::Array(*kind, vec![0; len]));
                    refs.push(self.heap.len() as u16);
                }
            }
            pc += 1;
        }
    }

    /// Invert a fixed reference-field byte offset back into a ref slot
    /// index given the object's runtime class.
    fn fixed_ref_slot(&self, class: u16, off: u16) -> Result<usize, InterpError> {
        let base = 2 + 2 * self.inf.chain_int_slots(class);
        if off < base || (off - base) % 2 != 0 {
            return Err(InterpError::Trap(format!("bad fixed field offset {off}")));
        }
        Ok(((off - base) / 2) as usize)
    }
}

fn bin_s(ints: &mut Vec<i16>, f: impl Fn(i16, i16) -> i16) {
    let b = pop_s(ints);
    let a = pop_s(ints);
    ints.push(f(a, b));
}

fn bin_i(ints: &mut Vec<i16>, f: impl Fn(i32, i32) -> i32) {
    let b = pop_i(ints);
    let a = pop_i(ints);
    push_i(ints, f(a, b));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::asm::parse_assembly;
    use crate::bytecode::verify::verify;

    fn run(src: &str, w: &Workload) -> FinalState {
        let mut inf = parse_assembly(src).unwrap();
        verify(&mut inf).unwrap();
        interpret(&inf, w, 1_000_000).unwrap()
    }

    #[test]
    fn shift_loop_produces_expected_result() {
        // do { a >>>= 1; } while (a > b)  with a=1024, b=2 -> a ends at 2
        let out = run(
            "
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
.statics ints=2
",
            &Workload { statics_int: alloc::vec![1024, 2], arrays: alloc::vec![] },
        );
        assert_eq!(out.ret, Some(2));
    }

    #[test]
    fn simul_widens_to_32_bits() {
        let out = run(
            ".method main params=() ret=i\n  sconst 300\n  sconst 300\n  simul\n  ireturn\n.end\n",
            &Workload::default(),
        );
        assert_eq!(out.ret, Some(90000));
    }

    #[test]
    fn sushr_const_is_a_logical_shift() {
        let out = run(
            ".method main params=() ret=s\n  sconst -32767\n  sushr_const 1\n  sreturn\n.end\n",
            &Workload::default(),
        );
        // 0x8001 >>> 1 == 0x4000
        assert_eq!(out.ret, Some(0x4000));
    }

    #[test]
    fn variable_shift_uses_low_byte_and_dec_loop() {
        // count 256 has a zero low byte: no shifting happens
        let out = run(
            ".method main params=() ret=s\n  sconst 1234\n  sconst 256\n  sshl\n  sreturn\n.end\n",
            &Workload::default(),
        );
        assert_eq!(out.ret, Some(1234));
        // count 200 is > 128: no shifting either
        let out = run(
            ".method main params=() ret=s\n  sconst 1234\n  sconst 200\n  sshl\n  sreturn\n.end\n",
            &Workload::default(),
        );
        assert_eq!(out.ret, Some(1234));
        // count 20 shifts a 16-bit value to zero
        let out = run(
            ".method main params=() ret=s\n  sconst 1234\n  sconst 20\n  sshl\n  sreturn\n.end\n",
            &Workload::default(),
        );
        assert_eq!(out.ret, Some(0));
    }

    #[test]
    fn bubble_sort_sorts() {
        let clean = "
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
.statics ints=0 refs=1
";
        let w = Workload {
            statics_int: alloc::vec![],
            arrays: alloc::vec![(ElemKind::Short, alloc::vec![3, 1, 2, -5, 9, 0])],
        };
        let out = run(clean, &w);
        assert_eq!(out.arrays[0].1, alloc::vec![-5, 0, 1, 2, 3, 9]);
    }

    #[test]
    fn lightweight_shares_the_callers_stack() {
        let src = "
.lightweight odd params=(s) ret=s kind=handwritten
  sconst 1
  sand
  sreturn
.end
.method main params=() ret=s
  sconst 7
  invokelight odd
  sreturn
.end
.entry main
";
        let out = run(src, &Workload::default());
        assert_eq!(out.ret, Some(1));
    }

    #[test]
    fn normal_call_passes_params_through_locals() {
        let src = "
.method add3 params=(s,s,s) ret=s locals_int=3
  sload 0
  sload 1
  sadd
  sload 2
  sadd
  sreturn
.end
.method main params=() ret=s
  sconst 10
  sconst 20
  sconst 30
  invokestatic add3
  sreturn
.end
.entry main
";
        let out = run(src, &Workload::default());
        assert_eq!(out.ret, Some(60));
    }

    #[test]
    fn division_by_zero_traps() {
        let mut inf = parse_assembly(
            ".method main params=() ret=s\n  sconst 1\n  sconst 0\n  sdiv\n  sreturn\n.end\n",
        )
        .unwrap();
        verify(&mut inf).unwrap();
        assert!(matches!(
            interpret(&inf, &Workload::default(), 1000),
            Err(InterpError::DivisionByZero { .. })
        ));
    }

    #[test]
    fn runaway_loop_hits_step_limit() {
        let mut inf = parse_assembly(
            ".method main params=() ret=void\nloop:\n  goto loop\n.end\n",
        )
        .unwrap();
        verify(&mut inf).unwrap();
        assert_eq!(
            interpret(&inf, &Workload::default(), 1000),
            Err(InterpError::StepLimit)
        );
    }
}
