//! Platform-independent bytecode transformations, applied between
//! verification and compilation:
//!
//! 1. branch-target insertion (labels become `BRTARGET` instructions)
//! 2. lightweight-method conversion (`LW_PARAMETER` prologues)
//! 3. constant-shift folding (`xCONST k ; xSHy` → `xSHy_CONST k`)
//! 4. `SIMUL` folding (16×16→32 multiplies)
//! 5. array-index narrowing (16-bit indexes)
//! 6. mark-loop detection with liveness
//! 7. invoke rewriting and topological method ordering
//!
//! None of these consult the target ISA; every pass preserves the
//! interpreter-observable behaviour of the program.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::bytecode::verify::verify;
use crate::bytecode::{
    BcError, BcInstr, Dt, ElemKind, Infusion, LoopInfo, LwKind, MethodDef, TagKind, ValueTag,
};

/// Which optional folds to run. Branch-target insertion, lightweight
/// prologues and invoke rewriting always run; they are normalizations the
/// compiler depends on, not optimizations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InfuseOptions {
    pub const_shift: bool,
    pub simul: bool,
    pub narrow_index: bool,
    pub mark_loops: bool,
    /// When false, converted lightweight methods are demoted to normal
    /// methods (handwritten ones cannot be; they keep their calling
    /// convention and a warning is emitted).
    pub lightweight: bool,
}

impl Default for InfuseOptions {
    fn default() -> Self {
        InfuseOptions {
            const_shift: true,
            simul: true,
            narrow_index: true,
            mark_loops: true,
            lightweight: true,
        }
    }
}

#[derive(Debug, Default)]
pub struct InfuseReport {
    pub warnings: Vec<String>,
}

/// Run the full transformation pipeline in place. The infusion must have
/// been verified; it is re-verified (and its max-stack numbers refreshed)
/// before returning.
pub fn infuse(inf: &mut Infusion, opts: &InfuseOptions) -> Result<InfuseReport, BcError> {
    let mut report = InfuseReport::default();

    if !opts.lightweight {
        demote_lightweight(inf, &mut report);
    }
    check_lightweight_bodies(inf)?;
    check_lightweight_cycles(inf)?;

    for m in &mut inf.methods {
        insert_branch_targets(m);
        if m.lightweight {
            convert_lightweight(m);
        }
    }

    // The folds need callee signatures for symbolic stack effects.
    let meta: Vec<MethodDef> = inf.methods.iter().map(strip_body).collect();
    for m in &mut inf.methods {
        if opts.const_shift {
            fold_constant_shifts(m);
        }
        if opts.simul {
            fold_simul(&meta, m);
        }
        if opts.narrow_index {
            narrow_array_indexes(&meta, m);
        }
        if opts.mark_loops {
            detect_mark_loops(m, &mut report.warnings);
        }
    }

    rewrite_invokes_and_sort(inf);
    verify(inf)?;
    Ok(report)
}

fn strip_body(m: &MethodDef) -> MethodDef {
    let mut c = m.clone();
    c.body = Vec::new();
    c
}

fn verr(m: &MethodDef, instr: usize, msg: String) -> BcError {
    BcError::Verify { method: m.name.clone(), instr, msg }
}

// ---------------------------------------------------------------------------
// Lightweight methods
// ---------------------------------------------------------------------------

fn demote_lightweight(inf: &mut Infusion, report: &mut InfuseReport) {
    for m in &mut inf.methods {
        if !m.lightweight {
            continue;
        }
        match m.lw_kind {
            Some(LwKind::Converted) | None => {
                m.lightweight = false;
                m.lw_kind = None;
            }
            Some(LwKind::Handwritten) => {
                report.warnings.push(format!(
                    "method `{}`: handwritten lightweight body cannot be demoted; \
                     it stays lightweight",
                    m.name
                ));
            }
        }
    }
}

fn check_lightweight_bodies(inf: &Infusion) -> Result<(), BcError> {
    for m in &inf.methods {
        if !m.lightweight {
            continue;
        }
        for (idx, ins) in m.body.iter().enumerate() {
            if matches!(ins, BcInstr::New(_) | BcInstr::Newarray(_)) {
                return Err(verr(
                    m,
                    idx,
                    "lightweight methods may not allocate".into(),
                ));
            }
        }
    }
    Ok(())
}

/// Reject recursion through lightweight edges: a lightweight method may
/// never be re-entered while active, because its frame space lives in its
/// caller's frame.
fn check_lightweight_cycles(inf: &Infusion) -> Result<(), BcError> {
    // Colors: 0 = unvisited, 1 = on stack, 2 = done.
    let n = inf.methods.len();
    let mut color = vec![0u8; n];
    let mut stack: Vec<(usize, usize)> = Vec::new(); // (method, next-callee cursor)
    let callees: Vec<Vec<usize>> = inf
        .methods
        .iter()
        .map(|m| {
            let mut c: Vec<usize> = m
                .body
                .iter()
                .filter_map(|i| match i {
                    BcInstr::Invokestatic(t) | BcInstr::Invokelight(t) => {
                        let t = *t as usize;
                        inf.methods.get(t).filter(|c| c.lightweight).map(|_| t)
                    }
                    _ => None,
                })
                .collect();
            c.sort_unstable();
            c.dedup();
            c
        })
        .collect();

    for start in 0..n {
        if color[start] != 0 {
            continue;
        }
        color[start] = 1;
        stack.push((start, 0));
        while let Some(&mut (mth, ref mut cur)) = stack.last_mut() {
            if *cur < callees[mth].len() {
                let next = callees[mth][*cur];
                *cur += 1;
                match color[next] {
                    0 => {
                        color[next] = 1;
                        stack.push((next, 0));
                    }
                    1 => {
                        // Found a cycle; report the names along it.
                        let from = stack.iter().position(|&(m, _)| m == next).unwrap();
                        let mut names: Vec<&str> =
                            stack[from..].iter().map(|&(m, _)| inf.methods[m].name.as_str()).collect();
                        names.push(inf.methods[next].name.as_str());
                        return Err(verr(
                            &inf.methods[next],
                            0,
                            format!("lightweight recursion: {}", names.join(" -> ")),
                        ));
                    }
                    _ => {}
                }
            } else {
                color[mth] = 2;
                stack.pop();
            }
        }
    }
    Ok(())
}

/// Insert the `LW_PARAMETER` prologue; for converted methods also the
/// stores that pop parameters into their leading local slots (topmost
/// parameter first, since it is on top of the caller's stack).
fn convert_lightweight(m: &mut MethodDef) {
    if m.body.iter().any(|i| matches!(i, BcInstr::LwParameter(_))) {
        return; // already in prologue form
    }
    let mut prologue: Vec<BcInstr> = m.params.iter().map(|p| BcInstr::LwParameter(*p)).collect();
    if m.lw_kind == Some(LwKind::Converted) {
        let mut int_slot = 0u16;
        let mut ref_slot = 0u16;
        let mut slots: Vec<u16> = Vec::with_capacity(m.params.len());
        for p in &m.params {
            match p {
                Dt::Short => {
                    slots.push(int_slot);
                    int_slot += 1;
                }
                Dt::Int => {
                    slots.push(int_slot);
                    int_slot += 2;
                }
                Dt::Ref => {
                    slots.push(ref_slot);
                    ref_slot += 1;
                }
            }
        }
        for (p, slot) in m.params.iter().zip(&slots).rev() {
            prologue.push(match p {
                Dt::Short => BcInstr::Sstore(*slot),
                Dt::Int => BcInstr::Istore(*slot),
                Dt::Ref => BcInstr::Astore(*slot),
            });
        }
    }
    m.body.splice(0..0, prologue);
}

// ---------------------------------------------------------------------------
// Branch targets
// ---------------------------------------------------------------------------

/// Replace label-id branch operands with dense `BRTARGET` ids and insert
/// one `BRTARGET` instruction in front of every distinct target.
fn insert_branch_targets(m: &mut MethodDef) {
    if m.targets_resolved {
        return;
    }
    let mut targets: Vec<usize> = m
        .body
        .iter()
        .filter_map(|i| i.branch_target())
        .map(|l| m.labels[l as usize] as usize)
        .collect();
    targets.sort_unstable();
    targets.dedup();
    let id_of: BTreeMap<usize, u16> =
        targets.iter().enumerate().map(|(id, &pos)| (pos, id as u16)).collect();

    let mut body = Vec::with_capacity(m.body.len() + targets.len());
    for (idx, ins) in m.body.drain(..).enumerate() {
        if let Some(id) = id_of.get(&idx) {
            body.push(BcInstr::Brtarget(*id));
        }
        let mut ins = ins;
        if let Some(l) = ins.branch_target() {
            ins.set_branch_target(id_of[&(m.labels[l as usize] as usize)]);
        }
        body.push(ins);
    }
    m.body = body;
    m.targets_resolved = true;
    m.brtarget_count = targets.len() as u16;
    m.labels.clear();
}

// ---------------------------------------------------------------------------
// Constant-shift folding
// ---------------------------------------------------------------------------

fn fold_constant_shifts(m: &mut MethodDef) {
    let mut body = Vec::with_capacity(m.body.len());
    let old = core::mem::take(&mut m.body);
    let mut it = old.into_iter().peekable();
    while let Some(ins) = it.next() {
        use BcInstr::*;
        let folded = match (&ins, it.peek()) {
            (Sconst(k), Some(sh @ (Sshl | Sshr | Sushr))) if (0..=15).contains(k) => {
                let k = *k as u8;
                Some(match sh {
                    Sshl => SshlC(k),
                    Sshr => SshrC(k),
                    _ => SushrC(k),
                })
            }
            (Iconst(k), Some(sh @ (Ishl | Ishr | Iushr))) if (0..=31).contains(k) => {
                let k = *k as u8;
                Some(match sh {
                    Ishl => IshlC(k),
                    Ishr => IshrC(k),
                    _ => IushrC(k),
                })
            }
            _ => None,
        };
        match folded {
            Some(f) => {
                it.next(); // consume the shift
                body.push(f);
            }
            None => body.push(ins),
        }
    }
    m.body = body;
}

// ---------------------------------------------------------------------------
// Symbolic int-stack scanning (shared by SIMUL folding and index narrowing)
// ---------------------------------------------------------------------------

/// One 16-bit slot of the modeled int stack. The model only ever tracks a
/// suffix of the real stack: control-flow joins clear it, and pops below
/// the modeled part are simply ignored (conservative: no metadata).
#[derive(Debug, Clone, Copy, Default)]
struct Cell {
    /// Index of the `S2I` that produced this slot (both halves share it).
    s2i_at: Option<u32>,
    /// Index of the instruction that pushed this slot.
    pushed_at: Option<u32>,
}

fn pop_cells(st: &mut Vec<Cell>, n: u16) {
    let keep = st.len().saturating_sub(n as usize);
    st.truncate(keep);
}

fn push_cells(st: &mut Vec<Cell>, n: u16, cell: Cell) {
    for _ in 0..n {
        st.push(cell);
    }
}

/// Int-stack (pops, pushes) of an instruction, or `None` for control flow,
/// which invalidates the model.
fn int_effect(meta: &[MethodDef], ins: &BcInstr) -> Option<(u16, u16)> {
    use BcInstr::*;
    Some(match ins {
        Sload(_) | Sconst(_) | GetstaticS(_) | ArrayLength => (0, 1),
        Iload(_) | Iconst(_) | GetstaticI(_) => (0, 2),
        Aload(_) | Astore(_) | GetstaticA(_) | PutstaticA(_) | New(_) | LwParameter(_)
        | Sinc(..) | Iinc(..) | GetfieldA { .. } | GetfieldAFixed { .. } | PutfieldA { .. }
        | PutfieldAFixed { .. } => (0, 0),
        Sstore(_) | PutstaticS(_) | Newarray(_) => (1, 0),
        Istore(_) | PutstaticI(_) => (2, 0),
        Sadd | Ssub | Smul | Sdiv | Sand | Sor | Sxor | Sshl | Sshr | Sushr => (2, 1),
        Sneg | SshlC(_) | SshrC(_) | SushrC(_) => (1, 1),
        Iadd | Isub | Imul | Idiv | Iand | Ior | Ixor | Ishl | Ishr | Iushr => (4, 2),
        Ineg | IshlC(_) | IshrC(_) | IushrC(_) => (2, 2),
        S2i => (1, 2),
        I2s => (2, 1),
        Simul => (2, 2),
        ArrLoad { kind, wide_index } => {
            let idx = if *wide_index { 2 } else { 1 };
            let out = match kind {
                ElemKind::Byte | ElemKind::Short => 1,
                ElemKind::Int => 2,
                ElemKind::Ref => 0,
            };
            (idx, out)
        }
        ArrStore { kind, wide_index } => {
            let idx = if *wide_index { 2 } else { 1 };
            let val = match kind {
                ElemKind::Byte | ElemKind::Short => 1,
                ElemKind::Int => 2,
                ElemKind::Ref => 0,
            };
            (val + idx, 0)
        }
        GetfieldS { .. } => (0, 1),
        GetfieldI { .. } => (0, 2),
        PutfieldS { .. } => (1, 0),
        PutfieldI { .. } => (2, 0),
        Invokestatic(t) | Invokelight(t) => {
            let callee = &meta[*t as usize];
            let pops: u16 = callee.params.iter().map(|p| p.int_slots()).sum();
            let pushes = callee.ret.map(|d| d.int_slots()).unwrap_or(0);
            (pops, pushes)
        }
        Goto(_) | IfScmp(..) | IfIcmp(..) | If0(..) | Brtarget(_) | MarkloopBegin(_)
        | MarkloopEnd | Sreturn | Ireturn | Areturn | Return => return None,
    })
}

// ---------------------------------------------------------------------------
// SIMUL folding
// ---------------------------------------------------------------------------

/// `S2I; … ; S2I; IMUL` where both int operands provably originate from
/// `S2I` conversions of still-live shorts: drop both conversions and
/// multiply the shorts directly into a 32-bit result.
fn fold_simul(meta: &[MethodDef], m: &mut MethodDef) {
    let mut st: Vec<Cell> = Vec::new();
    let mut remove: BTreeSet<usize> = BTreeSet::new();
    let mut to_simul: BTreeSet<usize> = BTreeSet::new();

    for (idx, ins) in m.body.iter().enumerate() {
        match ins {
            BcInstr::S2i => {
                pop_cells(&mut st, 1);
                push_cells(&mut st, 2, Cell { s2i_at: Some(idx as u32), pushed_at: Some(idx as u32) });
            }
            BcInstr::Imul => {
                let n = st.len();
                if n >= 4 {
                    let a = st[n - 1].s2i_at.filter(|x| st[n - 2].s2i_at == Some(*x));
                    let b = st[n - 3].s2i_at.filter(|x| st[n - 4].s2i_at == Some(*x));
                    if let (Some(a), Some(b)) = (a, b) {
                        if a != b {
                            remove.insert(a as usize);
                            remove.insert(b as usize);
                            to_simul.insert(idx);
                        }
                    }
                }
                pop_cells(&mut st, 4);
                push_cells(&mut st, 2, Cell { s2i_at: None, pushed_at: Some(idx as u32) });
            }
            _ => match int_effect(meta, ins) {
                Some((pops, pushes)) => {
                    pop_cells(&mut st, pops);
                    push_cells(&mut st, pushes, Cell { s2i_at: None, pushed_at: Some(idx as u32) });
                }
                None => st.clear(),
            },
        }
    }

    if to_simul.is_empty() {
        return;
    }
    let mut body = Vec::with_capacity(m.body.len());
    for (idx, ins) in m.body.drain(..).enumerate() {
        if remove.contains(&idx) {
            continue;
        }
        if to_simul.contains(&idx) {
            body.push(BcInstr::Simul);
        } else {
            body.push(ins);
        }
    }
    m.body = body;
}

// ---------------------------------------------------------------------------
// Array-index narrowing
// ---------------------------------------------------------------------------

/// Make array accesses consume a 16-bit index. An index produced by `S2I`
/// loses the conversion; any other int-typed index whose producer is known
/// gets an `I2S` right after that producer. Indexes whose provenance the
/// single pass cannot see stay wide (which is always sound).
fn narrow_array_indexes(meta: &[MethodDef], m: &mut MethodDef) {
    let mut st: Vec<Cell> = Vec::new();
    let mut remove: BTreeSet<usize> = BTreeSet::new();
    let mut insert_after: BTreeSet<usize> = BTreeSet::new();
    let mut narrowed: BTreeSet<usize> = BTreeSet::new();

    for (idx, ins) in m.body.iter().enumerate() {
        // Depth of the index value below the stack top at this op, in
        // 16-bit slots, when the op still takes a wide index.
        let buried = match ins {
            BcInstr::ArrLoad { wide_index: true, .. } => Some(0u16),
            BcInstr::ArrStore { kind, wide_index: true } => Some(match kind {
                ElemKind::Byte | ElemKind::Short => 1,
                ElemKind::Int => 2,
                ElemKind::Ref => 0,
            }),
            _ => None,
        };
        if let Some(v) = buried {
            let n = st.len();
            let hi = n.checked_sub(1 + v as usize).map(|i| st[i]);
            let lo = n.checked_sub(2 + v as usize).map(|i| st[i]);
            if let (Some(hi), Some(lo)) = (hi, lo) {
                if let (Some(a), true) = (hi.s2i_at, hi.s2i_at == lo.s2i_at) {
                    remove.insert(a as usize);
                    narrowed.insert(idx);
                } else if let (Some(p), true) = (hi.pushed_at, hi.pushed_at == lo.pushed_at) {
                    insert_after.insert(p as usize);
                    narrowed.insert(idx);
                }
            }
        }
        match ins {
            BcInstr::S2i => {
                pop_cells(&mut st, 1);
                push_cells(&mut st, 2, Cell { s2i_at: Some(idx as u32), pushed_at: Some(idx as u32) });
            }
            _ => match int_effect(meta, ins) {
                Some((pops, pushes)) => {
                    pop_cells(&mut st, pops);
                    push_cells(&mut st, pushes, Cell { s2i_at: None, pushed_at: Some(idx as u32) });
                }
                None => st.clear(),
            },
        }
    }

    if narrowed.is_empty() {
        return;
    }
    let mut body = Vec::with_capacity(m.body.len());
    for (idx, mut ins) in m.body.drain(..).enumerate() {
        if remove.contains(&idx) {
            continue;
        }
        if narrowed.contains(&idx) {
            match &mut ins {
                BcInstr::ArrLoad { wide_index, .. } | BcInstr::ArrStore { wide_index, .. } => {
                    *wide_index = false;
                }
                _ => unreachable!(),
            }
        }
        body.push(ins);
        if insert_after.contains(&idx) {
            body.push(BcInstr::I2s);
        }
    }
    m.body = body;
}

// ---------------------------------------------------------------------------
// Mark loops
// ---------------------------------------------------------------------------

/// Every 16-bit slot an instruction mentions, as (tag, reads?, writes?).
/// Constants count as mentions but are neither read nor written.
fn mention_tags(ins: &BcInstr, out: &mut Vec<(ValueTag, bool, bool)>) {
    use BcInstr::*;
    match ins {
        Sload(n) => out.push((ValueTag::local(Dt::Short, *n), true, false)),
        Sstore(n) => out.push((ValueTag::local(Dt::Short, *n), false, true)),
        Sinc(n, _) => out.push((ValueTag::local(Dt::Short, *n), true, true)),
        Iload(n) => {
            out.push((ValueTag::local(Dt::Int, *n), true, false));
            out.push((ValueTag::local(Dt::Int, *n + 1), true, false));
        }
        Istore(n) => {
            out.push((ValueTag::local(Dt::Int, *n), false, true));
            out.push((ValueTag::local(Dt::Int, *n + 1), false, true));
        }
        Iinc(n, _) => {
            out.push((ValueTag::local(Dt::Int, *n), true, true));
            out.push((ValueTag::local(Dt::Int, *n + 1), true, true));
        }
        GetstaticS(n) => out.push((ValueTag::static_(Dt::Short, *n), true, false)),
        PutstaticS(n) => out.push((ValueTag::static_(Dt::Short, *n), false, true)),
        GetstaticI(n) => {
            out.push((ValueTag::static_(Dt::Int, *n), true, false));
            out.push((ValueTag::static_(Dt::Int, *n + 1), true, false));
        }
        PutstaticI(n) => {
            out.push((ValueTag::static_(Dt::Int, *n), false, true));
            out.push((ValueTag::static_(Dt::Int, *n + 1), false, true));
        }
        Sconst(k) => {
            if let Some(t) = ValueTag::constant(*k as u16 as i32) {
                out.push((t, false, false));
            }
        }
        Iconst(k) => {
            for half in [*k as u32 as u16, (*k as u32 >> 16) as u16] {
                if let Some(t) = ValueTag::constant(half as i32) {
                    out.push((t, false, false));
                }
            }
        }
        _ => {}
    }
}

/// Bracket innermost single-entry single-exit loops with MARKLOOP markers
/// carrying the tag census and liveness summary the compiler pins from.
fn detect_mark_loops(m: &mut MethodDef, warnings: &mut Vec<String>) {
    use BcInstr::*;
    if m.body.iter().any(|i| matches!(i, MarkloopBegin(_) | MarkloopEnd)) {
        return; // already hand-annotated
    }
    let mut tpos = vec![usize::MAX; m.brtarget_count as usize];
    for (idx, ins) in m.body.iter().enumerate() {
        if let Brtarget(id) = ins {
            tpos[*id as usize] = idx;
        }
    }
    // (branch index, header index) for every backward branch.
    let back_edges: Vec<(usize, usize)> = m
        .body
        .iter()
        .enumerate()
        .filter_map(|(j, ins)| {
            ins.branch_target().map(|t| (j, tpos[t as usize])).filter(|(j, i)| i < j)
        })
        .collect();
    // One candidate per header: the outermost back edge to it.
    let mut per_header: BTreeMap<usize, usize> = BTreeMap::new();
    for &(j, i) in &back_edges {
        let e = per_header.entry(i).or_insert(j);
        *e = (*e).max(j);
    }

    let mut accepted: Vec<(usize, usize, LoopInfo)> = Vec::new();
    'cand: for (&i, &j) in &per_header {
        // The loop must close with a conditional whose fall-through is the
        // single exit.
        if !matches!(m.body[j], IfScmp(..) | IfIcmp(..) | If0(..)) {
            continue;
        }
        // Innermost only: skip if another loop nests strictly inside.
        if back_edges.iter().any(|&(j2, i2)| i < i2 && j2 < j) {
            continue;
        }
        // Single entry / single exit: no branch may cross the bracket.
        for (k, ins) in m.body.iter().enumerate() {
            if let Some(t) = ins.branch_target() {
                let tk = tpos[t as usize];
                let k_in = (i..=j).contains(&k);
                let t_in = (i..=j).contains(&tk);
                if k_in != t_in {
                    if k_in {
                        warnings.push(format!(
                            "method `{}`: loop at {}..{} not marked (branch leaves the loop)",
                            m.name, i, j
                        ));
                    }
                    continue 'cand;
                }
            }
            if (i..=j).contains(&k) && ins.is_return() {
                continue 'cand;
            }
        }

        let has_invoke = m.body[i..=j]
            .iter()
            .any(|ins| matches!(ins, Invokestatic(_) | Invokelight(_)));

        let mut counts: BTreeMap<u16, u16> = BTreeMap::new();
        let mut reads: BTreeSet<u16> = BTreeSet::new();
        let mut writes: BTreeSet<u16> = BTreeSet::new();
        let mut mentions = Vec::new();
        for ins in &m.body[i..=j] {
            mentions.clear();
            mention_tags(ins, &mut mentions);
            for &(tag, r, w) in &mentions {
                // Pinning a static across a call would let the callee see
                // (or make) a stale copy; keep statics in memory then.
                if has_invoke && tag.kind == TagKind::Static {
                    continue;
                }
                *counts.entry(tag.pack()).or_insert(0) += 1;
                if r {
                    reads.insert(tag.pack());
                }
                if w {
                    writes.insert(tag.pack());
                }
            }
        }
        if counts.is_empty() {
            continue;
        }
        let mut tags: Vec<(ValueTag, u16)> = counts
            .iter()
            .map(|(&p, &c)| (ValueTag::unpack(p).unwrap(), c))
            .collect();
        tags.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.pack().cmp(&b.0.pack())));

        let live_at_entry: Vec<ValueTag> =
            reads.iter().map(|&p| ValueTag::unpack(p).unwrap()).collect();
        let live_at_exit = exit_live(m, j, &writes);

        accepted.push((i, j, LoopInfo { tags, live_at_entry, live_at_exit }));
    }

    // Innermost loops never overlap, but guard against surprises.
    accepted.sort_by_key(|&(i, _, _)| i);
    let mut last_end = 0usize;
    accepted.retain(|&(i, j, _)| {
        let ok = i >= last_end;
        if ok {
            last_end = j + 1;
        }
        ok
    });

    // Splice the markers in, back to front so indexes stay valid.
    for (i, j, info) in accepted.into_iter().rev() {
        m.body.insert(j + 1, MarkloopEnd);
        m.body.insert(i, MarkloopBegin(alloc::boxed::Box::new(info)));
    }
}

/// Which of the loop-written tags are still needed after the loop exits at
/// `j + 1`. Statics are always synced (they are globally visible); locals
/// are traced forward until a read, a write, a return or — conservatively —
/// any control flow.
fn exit_live(m: &MethodDef, j: usize, writes: &BTreeSet<u16>) -> Vec<ValueTag> {
    use BcInstr::*;
    let mut unresolved: BTreeSet<u16> = BTreeSet::new();
    let mut live: BTreeSet<u16> = BTreeSet::new();
    for &p in writes {
        let t = ValueTag::unpack(p).unwrap();
        if t.kind == TagKind::Static {
            live.insert(p);
        } else {
            unresolved.insert(p);
        }
    }
    let mut mentions = Vec::new();
    for ins in &m.body[j + 1..] {
        if unresolved.is_empty() {
            break;
        }
        if matches!(ins, Goto(_) | IfScmp(..) | IfIcmp(..) | If0(..) | Brtarget(_)) {
            live.extend(unresolved.iter());
            unresolved.clear();
            break;
        }
        if ins.is_return() {
            unresolved.clear();
            break;
        }
        mentions.clear();
        mention_tags(ins, &mut mentions);
        for &(tag, r, w) in &mentions {
            let p = tag.pack();
            if !unresolved.contains(&p) {
                continue;
            }
            if r {
                live.insert(p);
                unresolved.remove(&p);
            } else if w {
                unresolved.remove(&p);
            }
        }
    }
    // Fell off the scan with locals still unresolved: assume live.
    live.extend(unresolved.iter());
    live.iter().map(|&p| ValueTag::unpack(p).unwrap()).collect()
}

// ---------------------------------------------------------------------------
// Invoke rewriting and method ordering
// ---------------------------------------------------------------------------

fn rewrite_invokes_and_sort(inf: &mut Infusion) {
    // Pick the invoke form matching the callee's (possibly demoted) flavor.
    let lw: Vec<bool> = inf.methods.iter().map(|m| m.lightweight).collect();
    for m in &mut inf.methods {
        for ins in &mut m.body {
            match *ins {
                BcInstr::Invokestatic(t) if lw[t as usize] => *ins = BcInstr::Invokelight(t),
                BcInstr::Invokelight(t) if !lw[t as usize] => *ins = BcInstr::Invokestatic(t),
                _ => {}
            }
        }
    }

    // Frame bytes a method must reserve for the deepest lightweight call
    // chain below it: each lightweight callee needs its locals, plus a
    // return-address slot when it is itself a lightweight caller.
    let n = inf.methods.len();
    let mut reserve = vec![u16::MAX; n]; // MAX = not yet computed
    for i in 0..n {
        compute_reserve(inf, i, &mut reserve);
    }
    for (m, r) in inf.methods.iter_mut().zip(&reserve) {
        m.lw_frame_reserve = *r;
    }

    // Order lightweight callees before their callers (depth-first
    // post-order, original order otherwise) and remap invoke operands.
    let mut order: Vec<usize> = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    for start in 0..n {
        visit(inf, start, &mut seen, &mut order);
    }
    if order.iter().enumerate().all(|(new, &old)| new == old) {
        return;
    }
    let mut new_index = vec![0u16; n];
    for (new, &old) in order.iter().enumerate() {
        new_index[old] = new as u16;
    }
    let mut methods: Vec<Option<MethodDef>> = inf.methods.drain(..).map(Some).collect();
    inf.methods = order.iter().map(|&old| methods[old].take().unwrap()).collect();
    inf.entry = new_index[inf.entry as usize];
    for m in &mut inf.methods {
        for ins in &mut m.body {
            match ins {
                BcInstr::Invokestatic(t) | BcInstr::Invokelight(t) => {
                    *t = new_index[*t as usize];
                }
                _ => {}
            }
        }
    }
}

fn compute_reserve(inf: &Infusion, i: usize, reserve: &mut [u16]) -> u16 {
    if reserve[i] != u16::MAX {
        return reserve[i];
    }
    reserve[i] = 0; // cycles are rejected earlier; this is just a guard
    let mut worst = 0u16;
    for ins in &inf.methods[i].body {
        if let BcInstr::Invokestatic(t) | BcInstr::Invokelight(t) = ins {
            let c = &inf.methods[*t as usize];
            if !c.lightweight {
                continue;
            }
            let sub = compute_reserve(inf, *t as usize, reserve);
            let retaddr = if sub > 0 { 2 } else { 0 };
            worst = worst.max(2 * (c.local_int_slots + c.local_ref_slots) + retaddr + sub);
        }
    }
    reserve[i] = worst;
    worst
}

fn visit(inf: &Infusion, i: usize, seen: &mut [bool], order: &mut Vec<usize>) {
    if seen[i] {
        return;
    }
    seen[i] = true;
    for ins in &inf.methods[i].body {
        if let BcInstr::Invokestatic(t) | BcInstr::Invokelight(t) = ins {
            if inf.methods[*t as usize].lightweight {
                visit(inf, *t as usize, seen, order);
            }
        }
    }
    order.push(i);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bytecode::asm::parse_assembly;
    use crate::bytecode::CmpOp;
    use crate::interp::interpret;
    use crate::world::Workload;
    use alloc::string::ToString;

    fn infused(src: &str) -> Infusion {
        infused_with(src, &InfuseOptions::default())
    }

    fn infused_with(src: &str, opts: &InfuseOptions) -> Infusion {
        let mut inf = parse_assembly(src).unwrap();
        verify(&mut inf).unwrap();
        infuse(&mut inf, opts).unwrap();
        inf
    }

    const SHIFT_LOOP: &str = "
.method main params=() ret=s locals_int=2
  sconst 100
  sstore 0
  sconst 3
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
";

    #[test]
    fn branch_targets_are_dense_and_positional() {
        let inf = infused(SHIFT_LOOP);
        let m = &inf.methods[0];
        assert!(m.targets_resolved);
        assert_eq!(m.brtarget_count, 1);
        assert!(m.body.contains(&BcInstr::Brtarget(0)));
        assert!(m
            .body
            .iter()
            .any(|i| matches!(i, BcInstr::IfScmp(CmpOp::Gt, 0))));
        assert!(m.labels.is_empty());
    }

    #[test]
    fn two_branches_to_one_label_share_a_brtarget() {
        let inf = infused(
            "
.method f params=(s) ret=s locals_int=1
  sload 0
  ifeq done
  sload 0
  iflt done
  sconst 1
  sreturn
done:
  sconst 0
  sreturn
.end
.entry f
",
        );
        let m = &inf.methods[0];
        assert_eq!(m.brtarget_count, 1);
        let n = m
            .body
            .iter()
            .filter(|i| matches!(i, BcInstr::Brtarget(_)))
            .count();
        assert_eq!(n, 1);
    }

    #[test]
    fn straight_line_method_gets_no_brtargets() {
        let inf = infused(".method f params=() ret=s\n  sconst 7\n  sreturn\n.end\n.entry f\n");
        assert!(!inf.methods[0]
            .body
            .iter()
            .any(|i| matches!(i, BcInstr::Brtarget(_))));
    }

    #[test]
    fn constant_shifts_fold_to_one_instruction() {
        let inf = infused(
            "
.method f params=(s,i) ret=i locals_int=3
  sload 0
  sconst 1
  sushr
  s2i
  iload 1
  iconst 9
  ishl
  iadd
  ireturn
.end
.entry f
",
        );
        let body = &inf.methods[0].body;
        assert!(body.contains(&BcInstr::SushrC(1)));
        assert!(body.contains(&BcInstr::IshlC(9)));
        assert!(!body.iter().any(|i| matches!(i, BcInstr::Sushr | BcInstr::Ishl)));
    }

    #[test]
    fn out_of_range_shift_constant_is_left_alone() {
        let inf = infused(
            ".method f params=(s) ret=s locals_int=1\n  sload 0\n  sconst 20\n  sshl\n  sreturn\n.end\n.entry f\n",
        );
        let body = &inf.methods[0].body;
        assert!(body.contains(&BcInstr::Sconst(20)));
        assert!(body.contains(&BcInstr::Sshl));
    }

    #[test]
    fn simul_folds_the_canonical_pattern() {
        let inf = infused(
            "
.method f params=(s,s) ret=i locals_int=2
  sload 0
  s2i
  sload 1
  s2i
  imul
  ireturn
.end
.entry f
",
        );
        let body = &inf.methods[0].body;
        assert_eq!(
            body,
            &vec![
                BcInstr::Sload(0),
                BcInstr::Sload(1),
                BcInstr::Simul,
                BcInstr::Ireturn
            ]
        );
    }

    #[test]
    fn int_multiply_stays_imul() {
        let inf = infused(
            ".method f params=(i,i) ret=i locals_int=4\n  iload 0\n  iload 2\n  imul\n  ireturn\n.end\n.entry f\n",
        );
        assert!(inf.methods[0].body.contains(&BcInstr::Imul));
        assert!(!inf.methods[0].body.contains(&BcInstr::Simul));
    }

    #[test]
    fn array_load_index_conversion_is_removed() {
        let inf = infused(
            "
.statics ints=0 refs=1
.method f params=(s) ret=i locals_int=1
  getstatic_a 0
  sload 0
  s2i
  iaload
  ireturn
.end
.entry f
",
        );
        let body = &inf.methods[0].body;
        assert!(!body.contains(&BcInstr::S2i));
        assert!(body.contains(&BcInstr::ArrLoad { kind: ElemKind::Int, wide_index: false }));
    }

    #[test]
    fn int_typed_index_gets_a_truncation() {
        let inf = infused(
            "
.statics ints=0 refs=1
.method f params=(i) ret=s locals_int=2
  getstatic_a 0
  iload 0
  saload
  sreturn
.end
.entry f
",
        );
        let body = &inf.methods[0].body;
        assert!(body.contains(&BcInstr::I2s));
        assert!(body.contains(&BcInstr::ArrLoad { kind: ElemKind::Short, wide_index: false }));
    }

    #[test]
    fn buried_store_index_is_narrowed() {
        let inf = infused(
            "
.statics ints=0 refs=1
.method f params=(s,s) ret=void locals_int=2
  getstatic_a 0
  sload 0
  s2i
  sload 1
  sastore
  return
.end
.entry f
",
        );
        let body = &inf.methods[0].body;
        assert!(!body.contains(&BcInstr::S2i));
        assert!(body.contains(&BcInstr::ArrStore { kind: ElemKind::Short, wide_index: false }));
    }

    #[test]
    fn shift_loop_is_marked_with_census_and_liveness() {
        let inf = infused(SHIFT_LOOP);
        let m = &inf.methods[0];
        let begin = m
            .body
            .iter()
            .position(|i| matches!(i, BcInstr::MarkloopBegin(_)))
            .expect("loop should be marked");
        let BcInstr::MarkloopBegin(info) = &m.body[begin] else { unreachable!() };
        let ls0 = ValueTag::local(Dt::Short, 0);
        let ls1 = ValueTag::local(Dt::Short, 1);
        assert_eq!(info.tags, vec![(ls0, 3), (ls1, 1)]);
        assert_eq!(info.live_at_entry, vec![ls0, ls1]);
        assert_eq!(info.live_at_exit, vec![ls0]);
        // Bracket shape: BEGIN, BRTARGET … IF_SCMP, END.
        assert!(matches!(m.body[begin + 1], BcInstr::Brtarget(0)));
        let end = m
            .body
            .iter()
            .position(|i| matches!(i, BcInstr::MarkloopEnd))
            .unwrap();
        assert!(matches!(m.body[end - 1], BcInstr::IfScmp(..)));
    }

    #[test]
    fn only_the_inner_loop_is_marked() {
        let inf = infused(
            "
.method f params=() ret=s locals_int=2
outer:
  sconst 0
  sstore 1
inner:
  sinc 0 1
  sinc 1 1
  sload 1
  sconst 3
  if_scmplt inner
  sload 0
  sconst 10
  if_scmplt outer
  sload 0
  sreturn
.end
.entry f
",
        );
        let m = &inf.methods[0];
        let begins = m
            .body
            .iter()
            .filter(|i| matches!(i, BcInstr::MarkloopBegin(_)))
            .count();
        assert_eq!(begins, 1);
        // The marked one is the inner loop: its END precedes `sload 0`.
        let end = m.body.iter().position(|i| matches!(i, BcInstr::MarkloopEnd)).unwrap();
        assert_eq!(m.body[end + 1], BcInstr::Sload(0));
    }

    #[test]
    fn loop_with_a_break_is_not_marked() {
        let mut inf = parse_assembly(
            "
.method f params=() ret=s locals_int=2
loop:
  sload 0
  ifeq out
  sinc 0 -1
  sload 0
  sload 1
  if_scmpgt loop
out:
  sload 0
  sreturn
.end
.entry f
",
        )
        .unwrap();
        verify(&mut inf).unwrap();
        let report = infuse(&mut inf, &InfuseOptions::default()).unwrap();
        assert!(!inf.methods[0]
            .body
            .iter()
            .any(|i| matches!(i, BcInstr::MarkloopBegin(_))));
        assert!(report.warnings.iter().any(|w| w.contains("not marked")));
    }

    #[test]
    fn statics_are_not_pinned_across_calls() {
        let inf = infused(
            "
.statics ints=1
.method g params=() ret=void
  return
.end
.method f params=() ret=s locals_int=1
loop:
  getstatic_s 0
  sconst 1
  sadd
  putstatic_s 0
  invokestatic g
  sinc 0 -1
  sload 0
  sconst 0
  if_scmpgt loop
  sload 0
  sreturn
.end
.entry f
",
        );
        let f = inf.method(inf.method_index("f").unwrap());
        let begin = f
            .body
            .iter()
            .find_map(|i| match i {
                BcInstr::MarkloopBegin(info) => Some(info),
                _ => None,
            })
            .expect("loop should still be marked for its locals");
        assert!(begin.tags.iter().all(|(t, _)| t.kind != TagKind::Static));
    }

    #[test]
    fn converted_lightweight_gets_prologue_and_stores() {
        let inf = infused(
            "
.lightweight half params=(s) ret=s locals_int=1 kind=converted
  sload 0
  sconst 1
  sushr
  sreturn
.end
.method main params=() ret=s
  sconst 12
  invokestatic half
  sreturn
.end
.entry main
",
        );
        let half = inf.method(inf.method_index("half").unwrap());
        assert_eq!(half.body[0], BcInstr::LwParameter(Dt::Short));
        assert_eq!(half.body[1], BcInstr::Sstore(0));
        let main = inf.method(inf.method_index("main").unwrap());
        assert!(main
            .body
            .iter()
            .any(|i| matches!(i, BcInstr::Invokelight(_))));
    }

    #[test]
    fn converted_parameters_store_topmost_first() {
        let inf = infused(
            "
.lightweight f params=(s,i,s) ret=s locals_int=4 kind=converted
  sload 0
  sreturn
.end
.method main params=() ret=s
  sconst 1
  iconst 2
  sconst 3
  invokestatic f
  sreturn
.end
.entry main
",
        );
        let f = inf.method(inf.method_index("f").unwrap());
        assert_eq!(
            &f.body[..6],
            &[
                BcInstr::LwParameter(Dt::Short),
                BcInstr::LwParameter(Dt::Int),
                BcInstr::LwParameter(Dt::Short),
                BcInstr::Sstore(3),
                BcInstr::Istore(1),
                BcInstr::Sstore(0),
            ]
        );
    }

    #[test]
    fn handwritten_lightweight_gets_markers_only() {
        let inf = infused(
            "
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
",
        );
        let odd = inf.method(inf.method_index("odd").unwrap());
        assert_eq!(odd.body[0], BcInstr::LwParameter(Dt::Short));
        assert!(!odd.body.iter().any(|i| matches!(i, BcInstr::Sstore(_))));
    }

    #[test]
    fn lightweight_recursion_is_rejected_with_the_cycle() {
        let mut inf = parse_assembly(
            "
.lightweight a params=() ret=void kind=handwritten
  invokelight b
  return
.end
.lightweight b params=() ret=void kind=handwritten
  invokelight a
  return
.end
.method main params=() ret=void
  invokelight a
  return
.end
.entry main
",
        )
        .unwrap();
        verify(&mut inf).unwrap();
        match infuse(&mut inf, &InfuseOptions::default()) {
            Err(BcError::Verify { msg, .. }) => {
                assert!(msg.contains("recursion"), "{msg}");
                assert!(msg.contains("a") && msg.contains("b"), "{msg}");
            }
            other => panic!("expected a cycle error, got {other:?}"),
        }
    }

    #[test]
    fn allocation_in_lightweight_is_rejected() {
        let mut inf = parse_assembly(
            "
.lightweight f params=() ret=a kind=handwritten
  sconst 4
  newarray s
  areturn
.end
.method main params=() ret=a locals_ref=1
  invokelight f
  astore 0
  aload 0
  areturn
.end
.entry main
",
        )
        .unwrap();
        verify(&mut inf).unwrap();
        assert!(matches!(
            infuse(&mut inf, &InfuseOptions::default()),
            Err(BcError::Verify { .. })
        ));
    }

    #[test]
    fn lightweight_callees_sort_before_callers() {
        let inf = infused(
            "
.method main params=() ret=s
  sconst 3
  invokestatic wrap
  sreturn
.end
.method wrap params=(s) ret=s locals_int=1
  sload 0
  invokestatic odd
  sreturn
.end
.lightweight odd params=(s) ret=s kind=handwritten
  sconst 1
  sand
  sreturn
.end
.entry main
",
        );
        let odd = inf.method_index("odd").unwrap();
        let wrap = inf.method_index("wrap").unwrap();
        assert!(odd < wrap);
        assert_eq!(inf.entry, inf.method_index("main").unwrap());
        // Operands were remapped with the permutation.
        let w = inf.method(wrap);
        assert!(w.body.contains(&BcInstr::Invokelight(odd)));
    }

    #[test]
    fn frame_reserve_adds_up_along_the_chain() {
        let inf = infused(
            "
.lightweight h params=(s) ret=s locals_int=2 kind=converted
  sload 0
  sreturn
.end
.lightweight g params=(s) ret=s locals_int=3 kind=converted
  sload 0
  invokestatic h
  sreturn
.end
.method f params=() ret=s
  sconst 1
  invokestatic g
  sreturn
.end
.entry f
",
        );
        let h = inf.method(inf.method_index("h").unwrap());
        let g = inf.method(inf.method_index("g").unwrap());
        let f = inf.method(inf.method_index("f").unwrap());
        assert_eq!(h.lw_frame_reserve, 0);
        // g needs h's two local slots.
        assert_eq!(g.lw_frame_reserve, 2 * 2);
        // f needs g's locals, g's saved return address, then h's locals.
        assert_eq!(f.lw_frame_reserve, 2 * 3 + 2 + 2 * 2);
    }

    #[test]
    fn options_disable_individual_folds() {
        let opts = InfuseOptions {
            const_shift: false,
            simul: false,
            narrow_index: false,
            mark_loops: false,
            lightweight: true,
        };
        let inf = infused_with(SHIFT_LOOP, &opts);
        let body = &inf.methods[0].body;
        assert!(body.contains(&BcInstr::Sushr));
        assert!(!body.iter().any(|i| matches!(i, BcInstr::MarkloopBegin(_))));
    }

    #[test]
    fn no_lightweight_demotes_converted_methods() {
        let opts = InfuseOptions { lightweight: false, ..InfuseOptions::default() };
        let inf = infused_with(
            "
.lightweight half params=(s) ret=s locals_int=1 kind=converted
  sload 0
  sconst 1
  sushr
  sreturn
.end
.method main params=() ret=s
  sconst 12
  invokestatic half
  sreturn
.end
.entry main
",
            &opts,
        );
        let half = inf.method(inf.method_index("half").unwrap());
        assert!(!half.lightweight);
        assert!(!half.body.iter().any(|i| matches!(i, BcInstr::LwParameter(_))));
        let main = inf.method(inf.method_index("main").unwrap());
        assert!(main.body.iter().any(|i| matches!(i, BcInstr::Invokestatic(_))));
    }

    /// Every transformation must preserve the interpreter-visible outcome.
    fn assert_same_outcome(src: &str, workload: &Workload) {
        let mut plain = parse_assembly(src).unwrap();
        verify(&mut plain).unwrap();
        let want = interpret(&plain, workload, 1_000_000).unwrap();

        for opts in [
            InfuseOptions::default(),
            InfuseOptions {
                const_shift: false,
                simul: false,
                narrow_index: false,
                mark_loops: false,
                lightweight: true,
            },
        ] {
            let mut inf = plain.clone();
            infuse(&mut inf, &opts).unwrap();
            let got = interpret(&inf, workload, 1_000_000).unwrap();
            assert_eq!(got, want, "options {opts:?} changed behaviour");
        }
    }

    #[test]
    fn transformations_preserve_interpreter_outcome() {
        assert_same_outcome(SHIFT_LOOP, &Workload::default());

        // Arrays, wide indexes, 16x16 multiplies and a lightweight helper
        // in one program.
        let src = "
.statics ints=1 refs=1
.lightweight scale params=(s) ret=i kind=handwritten
  s2i
  iconst 3
  imul
  ireturn
.end
.method main params=() ret=i locals_int=3
  sconst 0
  sstore 0
loop:
  getstatic_a 0
  sload 0
  s2i
  saload
  s2i
  getstatic_a 0
  sload 0
  s2i
  saload
  s2i
  imul
  i2s
  invokelight scale
  istore 1
  getstatic_a 0
  sload 0
  s2i
  iload 1
  i2s
  sastore
  sinc 0 1
  sload 0
  sconst 8
  if_scmplt loop
  getstatic_a 0
  sconst 3
  s2i
  saload
  s2i
  ireturn
.end
.entry main
";
        let workload = Workload {
            statics_int: vec![0],
            arrays: vec![(ElemKind::Short, vec![3, -4, 5, 9, 0, 127, -2, 11])],
        };
        assert_same_outcome(src, &workload);
    }

    #[test]
    fn infuse_is_idempotent_on_resolved_input() {
        let mut inf = parse_assembly(SHIFT_LOOP).unwrap();
        verify(&mut inf).unwrap();
        infuse(&mut inf, &InfuseOptions::default()).unwrap();
        let once = inf.clone();
        infuse(&mut inf, &InfuseOptions::default()).unwrap();
        assert_eq!(
            once.methods[0].body, inf.methods[0].body,
            "second infusion must not change the body"
        );
    }

    #[test]
    fn report_is_quiet_on_clean_input() {
        let mut inf = parse_assembly(SHIFT_LOOP).unwrap();
        verify(&mut inf).unwrap();
        let report = infuse(&mut inf, &InfuseOptions::default()).unwrap();
        assert!(report.warnings.is_empty(), "{:?}", report.warnings);
        let _ = report.warnings.first().map(|w| w.to_string());
    }
}
