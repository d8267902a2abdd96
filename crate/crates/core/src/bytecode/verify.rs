//! Structural verification: a symbolic walk of every method that checks
//! stack discipline (no underflow, type-correct slots, path-independent
//! depth at branch joins) and records the maximum int/ref stack depths the
//! compiler and runtime rely on.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{BcError, BcInstr, Dt, ElemKind, Infusion, LwKind, MethodDef};

/// One 16-bit slot on the symbolic int stack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    S,
    /// Low half of a 32-bit value (pushed first).
    Ilo,
    /// High half of a 32-bit value (on top of its low half).
    Ihi,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct State {
    ints: Vec<Slot>,
    refs: u16,
}

/// Verify every method of the infusion, filling in `max_int_stack` and
/// `max_ref_stack`.
pub fn verify(inf: &mut Infusion) -> Result<(), BcError> {
    let methods_meta: Vec<MethodDef> = inf.methods.clone();
    for i in 0..inf.methods.len() {
        let (max_int, max_ref) = verify_method(&methods_meta, &methods_meta[i])?;
        inf.methods[i].max_int_stack = max_int;
        inf.methods[i].max_ref_stack = max_ref;
    }
    Ok(())
}

fn err(m: &MethodDef, instr: usize, msg: impl Into<String>) -> BcError {
    BcError::Verify { method: m.name.clone(), instr, msg: msg.into() }
}

/// Map target id -> instruction index, for either label- or brtarget-form.
fn target_table(m: &MethodDef) -> Result<Vec<usize>, BcError> {
    if m.targets_resolved {
        let mut table = vec![usize::MAX; m.brtarget_count as usize];
        for (idx, instr) in m.body.iter().enumerate() {
            if let BcInstr::Brtarget(id) = instr {
                table[*id as usize] = idx;
            }
        }
        if let Some(id) = table.iter().position(|t| *t == usize::MAX) {
            return Err(err(m, 0, format!("brtarget {id} missing")));
        }
        Ok(table)
    } else {
        Ok(m.labels.iter().map(|p| *p as usize).collect())
    }
}

/// Entry-point stack: lightweight methods receive parameters on the stack
/// unless they are still in pre-conversion `Converted` form (no
/// LW_PARAMETER prologue yet), which reads parameters from locals like a
/// normal method.
fn entry_state(m: &MethodDef) -> State {
    let params_on_stack = m.lightweight
        && (m.lw_kind != Some(LwKind::Converted)
            || m.body.iter().any(|i| matches!(i, BcInstr::LwParameter(_))));
    let mut st = State { ints: Vec::new(), refs: 0 };
    if params_on_stack {
        for p in &m.params {
            match p {
                Dt::Short => st.ints.push(Slot::S),
                Dt::Int => {
                    st.ints.push(Slot::Ilo);
                    st.ints.push(Slot::Ihi);
                }
                Dt::Ref => st.refs += 1,
            }
        }
    }
    st
}

fn verify_method(all: &[MethodDef], m: &MethodDef) -> Result<(u16, u16), BcError> {
    // LW_PARAMETER instructions, when present, must be a prologue matching
    // the parameter list.
    let lw_params = m
        .body
        .iter()
        .filter(|i| matches!(i, BcInstr::LwParameter(_)))
        .count();
    if lw_params > 0 {
        if !m.lightweight {
            return Err(err(m, 0, "lw_parameter in a non-lightweight method"));
        }
        if lw_params != m.params.len() {
            return Err(err(m, 0, "lw_parameter count does not match parameter list"));
        }
        for (i, p) in m.params.iter().enumerate() {
            if m.body.get(i) != Some(&BcInstr::LwParameter(*p)) {
                return Err(err(m, i, "lw_parameter prologue mismatch"));
            }
        }
    }

    let targets = target_table(m)?;
    for (idx, instr) in m.body.iter().enumerate() {
        if let Some(t) = instr.branch_target() {
            if (t as usize) >= targets.len() {
                return Err(err(m, idx, format!("branch to unknown target {t}")));
            }
        }
    }

    let mut states: Vec<Option<State>> = vec![None; m.body.len() + 1];
    let mut work = vec![0usize];
    states[0] = Some(entry_state(m));
    let mut max_int = states[0].as_ref().unwrap().ints.len() as u16;
    let mut max_ref = states[0].as_ref().unwrap().refs;

    while let Some(pc) = work.pop() {
        if pc >= m.body.len() {
            return Err(err(m, pc, "control flow falls off the end of the method"));
        }
        let mut st = states[pc].clone().expect("worklist entries have states");
        let instr = &m.body[pc];
        step(all, m, pc, instr, &mut st)?;
        max_int = max_int.max(st.ints.len() as u16);
        max_ref = max_ref.max(st.refs);

        let mut succs: Vec<usize> = Vec::new();
        match instr {
            BcInstr::Goto(t) => succs.push(targets[*t as usize]),
            BcInstr::IfScmp(_, t) | BcInstr::IfIcmp(_, t) | BcInstr::If0(_, t) => {
                succs.push(pc + 1);
                succs.push(targets[*t as usize]);
            }
            i if i.is_return() => {}
            _ => succs.push(pc + 1),
        }
        for s in succs {
            match &states[s] {
                Some(prev) => {
                    if *prev != st {
                        return Err(err(
                            m,
                            s,
                            format!(
                                "inconsistent stack at join: {:?}/{} vs {:?}/{}",
                                prev.ints, prev.refs, st.ints, st.refs
                            ),
                        ));
                    }
                }
                None => {
                    states[s] = Some(st.clone());
                    work.push(s);
                }
            }
        }
    }
    Ok((max_int, max_ref))
}

fn step(
    all: &[MethodDef],
    m: &MethodDef,
    pc: usize,
    instr: &BcInstr,
    st: &mut State,
) -> Result<(), BcError> {
    let pop_s = |st: &mut State| -> Result<(), BcError> {
        match st.ints.pop() {
            Some(Slot::S) => Ok(()),
            Some(other) => Err(err(m, pc, format!("expected short slot, found {other:?}"))),
            None => Err(err(m, pc, "int stack underflow")),
        }
    };
    let pop_i = |st: &mut State| -> Result<(), BcError> {
        match (st.ints.pop(), st.ints.pop()) {
            (Some(Slot::Ihi), Some(Slot::Ilo)) => Ok(()),
            (None, _) | (_, None) => Err(err(m, pc, "int stack underflow")),
            (a, b) => Err(err(m, pc, format!("expected int slots, found {b:?},{a:?}"))),
        }
    };
    let pop_r = |st: &mut State| -> Result<(), BcError> {
        if st.refs == 0 {
            Err(err(m, pc, "ref stack underflow"))
        } else {
            st.refs -= 1;
            Ok(())
        }
    };
    let push_s = |st: &mut State| st.ints.push(Slot::S);
    let push_i = |st: &mut State| {
        st.ints.push(Slot::Ilo);
        st.ints.push(Slot::Ihi);
    };
    let pop_dt = |st: &mut State, d: Dt| match d {
        Dt::Short => pop_s(st),
        Dt::Int => pop_i(st),
        Dt::Ref => pop_r(st),
    };
    let check_int_local = |n: u16, slots: u16| -> Result<(), BcError> {
        if n + slots > m.local_int_slots {
            Err(err(m, pc, format!("int local slot {n} out of range")))
        } else {
            Ok(())
        }
    };
    let check_ref_local = |n: u16| -> Result<(), BcError> {
        if n >= m.local_ref_slots {
            Err(err(m, pc, format!("ref local slot {n} out of range")))
        } else {
            Ok(())
        }
    };
    let check_empty = |st: &State| -> Result<(), BcError> {
        if st.ints.is_empty() && st.refs == 0 {
            Ok(())
        } else {
            Err(err(m, pc, "stack not empty at return"))
        }
    };

    use BcInstr::*;
    match instr {
        Sload(n) => {
            check_int_local(*n, 1)?;
            push_s(st);
        }
        Iload(n) => {
            check_int_local(*n, 2)?;
            push_i(st);
        }
        Aload(n) => {
            check_ref_local(*n)?;
            st.refs += 1;
        }
        Sstore(n) => {
            check_int_local(*n, 1)?;
            pop_s(st)?;
        }
        Istore(n) => {
            check_int_local(*n, 2)?;
            pop_i(st)?;
        }
        Astore(n) => {
            check_ref_local(*n)?;
            pop_r(st)?;
        }
        Sconst(_) => push_s(st),
        Iconst(_) => push_i(st),
        Sadd | Ssub | Smul | Sdiv | Sand | Sor | Sxor => {
            pop_s(st)?;
            pop_s(st)?;
            push_s(st);
        }
        Sneg => {
            pop_s(st)?;
            push_s(st);
        }
        Iadd | Isub | Imul | Idiv | Iand | Ior | Ixor => {
            pop_i(st)?;
            pop_i(st)?;
            push_i(st);
        }
        Ineg => {
            pop_i(st)?;
            push_i(st);
        }
        Sinc(n, _) => check_int_local(*n, 1)?,
        Iinc(n, _) => check_int_local(*n, 2)?,
        Sshl | Sshr | Sushr => {
            pop_s(st)?; // count
            pop_s(st)?; // value
            push_s(st);
        }
        Ishl | Ishr | Iushr => {
            pop_i(st)?;
            pop_i(st)?;
            push_i(st);
        }
        SshlC(k) | SshrC(k) | SushrC(k) => {
            if *k > 15 {
                return Err(err(m, pc, "short shift constant out of range"));
            }
            pop_s(st)?;
            push_s(st);
        }
        IshlC(k) | IshrC(k) | IushrC(k) => {
            if *k > 31 {
                return Err(err(m, pc, "int shift constant out of range"));
            }
            pop_i(st)?;
            push_i(st);
        }
        S2i => {
            pop_s(st)?;
            push_i(st);
        }
        I2s => {
            pop_i(st)?;
            push_s(st);
        }
        ArrLoad { kind, wide_index } => {
            if *wide_index {
                pop_i(st)?;
            } else {
                pop_s(st)?;
            }
            pop_r(st)?;
            match kind {
                ElemKind::Byte | ElemKind::Short => push_s(st),
                ElemKind::Int => push_i(st),
                ElemKind::Ref => st.refs += 1,
            }
        }
        ArrStore { kind, wide_index } => {
            match kind {
                ElemKind::Byte | ElemKind::Short => pop_s(st)?,
                ElemKind::Int => pop_i(st)?,
                ElemKind::Ref => pop_r(st)?,
            }
            if *wide_index {
                pop_i(st)?;
            } else {
                pop_s(st)?;
            }
            pop_r(st)?;
        }
        ArrayLength => {
            pop_r(st)?;
            push_s(st);
        }
        GetfieldS { .. } => {
            pop_r(st)?;
            push_s(st);
        }
        GetfieldI { .. } => {
            pop_r(st)?;
            push_i(st);
        }
        GetfieldA { .. } | GetfieldAFixed { .. } => {
            pop_r(st)?;
            st.refs += 1;
        }
        PutfieldS { .. } => {
            pop_s(st)?;
            pop_r(st)?;
        }
        PutfieldI { .. } => {
            pop_i(st)?;
            pop_r(st)?;
        }
        PutfieldA { .. } | PutfieldAFixed { .. } => {
            pop_r(st)?;
            pop_r(st)?;
        }
        GetstaticS(_) => push_s(st),
        GetstaticI(_) => push_i(st),
        GetstaticA(_) => st.refs += 1,
        PutstaticS(_) => pop_s(st)?,
        PutstaticI(_) => pop_i(st)?,
        PutstaticA(_) => pop_r(st)?,
        Simul => {
            pop_s(st)?;
            pop_s(st)?;
            push_i(st);
        }
        IfScmp(..) => {
            pop_s(st)?;
            pop_s(st)?;
        }
        IfIcmp(..) => {
            pop_i(st)?;
            pop_i(st)?;
        }
        If0(..) => pop_s(st)?,
        Goto(_) | Brtarget(_) | MarkloopBegin(_) | MarkloopEnd | LwParameter(_) => {}
        Invokestatic(idx) | Invokelight(idx) => {
            let callee = all
                .get(*idx as usize)
                .ok_or_else(|| err(m, pc, "invoke of unknown method"))?;
            for p in callee.params.iter().rev() {
                pop_dt(st, *p)?;
            }
            match callee.ret {
                Some(Dt::Short) => push_s(st),
                Some(Dt::Int) => push_i(st),
                Some(Dt::Ref) => st.refs += 1,
                None => {}
            }
        }
        Sreturn => {
            pop_s(st)?;
            check_empty(st)?;
        }
        Ireturn => {
            pop_i(st)?;
            check_empty(st)?;
        }
        Areturn => {
            pop_r(st)?;
            check_empty(st)?;
        }
        Return => check_empty(st)?,
        New(_) => st.refs += 1,
        Newarray(_) => {
            pop_s(st)?;
            st.refs += 1;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::asm::parse_assembly;
    use super::*;

    fn verified(src: &str) -> Infusion {
        let mut inf = parse_assembly(src).unwrap();
        verify(&mut inf).unwrap();
        inf
    }

    #[test]
    fn shift_loop_has_two_slot_stack() {
        let inf = verified(
            "
.method main params=() ret=s locals_int=2 locals_ref=0
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
",
        );
        assert_eq!(inf.methods[0].max_int_stack, 2);
        assert_eq!(inf.methods[0].max_ref_stack, 0);
    }

    #[test]
    fn single_const_return_has_depth_one() {
        let inf = verified(".method f params=() ret=s\n  sconst 1\n  sreturn\n.end\n");
        assert_eq!(inf.methods[0].max_int_stack, 1);
    }

    #[test]
    fn underflow_is_reported_at_the_instruction() {
        let mut inf =
            parse_assembly(".method f params=() ret=s\n  sadd\n  sreturn\n.end\n").unwrap();
        match verify(&mut inf) {
            Err(BcError::Verify { instr, .. }) => assert_eq!(instr, 0),
            other => panic!("expected underflow, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_join_depth_is_rejected() {
        let mut inf = parse_assembly(
            "
.method f params=(s) ret=s locals_int=1
  sload 0
  ifeq skip
  sconst 1
skip:
  sconst 2
  sreturn
.end
",
        )
        .unwrap();
        assert!(matches!(verify(&mut inf), Err(BcError::Verify { .. })));
    }

    #[test]
    fn int_slots_are_tracked_as_pairs() {
        let inf = verified(
            "
.method f params=() ret=i locals_int=2
  iload 0
  iconst 100000
  iadd
  ireturn
.end
",
        );
        assert_eq!(inf.methods[0].max_int_stack, 4);
    }

    #[test]
    fn ref_int_confusion_is_rejected() {
        let mut inf = parse_assembly(
            ".method f params=() ret=void locals_ref=1\n  aload 0\n  putstatic_s 0\n  return\n.end\n",
        )
        .unwrap();
        assert!(matches!(verify(&mut inf), Err(BcError::Verify { .. })));
    }

    #[test]
    fn lightweight_params_start_on_the_stack() {
        let inf = verified(
            "
.lightweight odd params=(s) ret=s kind=handwritten
  sconst 1
  sand
  sreturn
.end
",
        );
        assert_eq!(inf.methods[0].max_int_stack, 2);
    }
}
