//! Post-translation cleanup passes over not-yet-resolved code.
//!
//! `basic` removes directly adjacent push/pop traffic; `improved` also
//! matches a push with its popping partner across intervening code, as long
//! as no barrier (label, branch, call) intervenes and the registers involved
//! are untouched in between; `fuse_movw` turns adjacent byte moves that form
//! an aligned pair copy into a single MOVW.

use alloc::vec::Vec;

use crate::image::CodeSlot;
use crate::isa::{Instr, Pair, Reg};

/// Any slot across which stack traffic must not be matched: control flow can
/// leave or enter, or a callee touches the native stack.
fn is_barrier(slot: &CodeSlot) -> bool {
    match slot {
        CodeSlot::Label(_) => true,
        CodeSlot::Instr(i) => matches!(
            i,
            Instr::Rjmp(_)
                | Instr::Brc(..)
                | Instr::Jmp(_)
                | Instr::Call(_)
                | Instr::Ret
                | Instr::Ijmp
                | Instr::Break
                | Instr::BranchTag { .. }
        ),
    }
}

/// (read mask, write mask) over r0..r31 for one instruction.
fn rw(i: &Instr) -> (u32, u32) {
    use Instr::*;
    let bit = |r: Reg| 1u32 << r.0;
    let pair = |p: Pair| (1u32 << p.0) | (1u32 << (p.0 + 1));
    let ptr_pair = |p: crate::isa::Ptr| pair(p.pair());
    let disp_pair = |p: crate::isa::DispPtr| pair(p.pair());
    match *i {
        Push(r) => (bit(r), 0),
        Pop(r) => (0, bit(r)),
        LdInc(r, p) | LdDec(r, p) => (ptr_pair(p), bit(r) | ptr_pair(p)),
        StInc(p, r) | StDec(p, r) => (bit(r) | ptr_pair(p), ptr_pair(p)),
        Ldd(r, p, _) => (disp_pair(p), bit(r)),
        Std(p, _, r) => (bit(r) | disp_pair(p), 0),
        Ldi(r, _) => (0, bit(r)),
        Mov(a, b) => (bit(b), bit(a)),
        Movw(a, b) => (pair(b), pair(a)),
        Add(a, b) | Adc(a, b) | Sub(a, b) | Sbc(a, b) | And(a, b) | Or(a, b) | Eor(a, b) => {
            (bit(a) | bit(b), bit(a))
        }
        Cp(a, b) | Cpc(a, b) => (bit(a) | bit(b), 0),
        Mul(a, b) | Muls(a, b) => (bit(a) | bit(b), pair(Pair(0))),
        Adiw(p, _) | Sbiw(p, _) => (pair(p), pair(p)),
        Inc(r) | Dec(r) | Lsr(r) | Lsl(r) | Rol(r) | Ror(r) | Asr(r) => (bit(r), bit(r)),
        Rjmp(_) | Brc(..) | Jmp(_) | Call(_) | Ret | Ijmp | Nop | Break
        | BranchTag { .. } => (0, 0),
    }
}

/// Remove push/pop sequences that are literally adjacent:
/// PUSH a, POP b → (nothing | MOV b,a) and the 4-long pair form
/// PUSH h, PUSH l, POP l', POP h' → (nothing | MOVW).
pub fn basic(slots: &mut Vec<CodeSlot>) {
    loop {
        let mut changed = false;
        let mut i = 0;
        while i < slots.len() {
            // 4-instruction pair form first so it wins over two 2-forms
            // (two MOVs fuse later anyway, but this keeps counts tight).
            if i + 3 < slots.len() {
                if let (
                    CodeSlot::Instr(Instr::Push(h1)),
                    CodeSlot::Instr(Instr::Push(l1)),
                    CodeSlot::Instr(Instr::Pop(l2)),
                    CodeSlot::Instr(Instr::Pop(h2)),
                ) = (&slots[i], &slots[i + 1], &slots[i + 2], &slots[i + 3])
                {
                    if h1.0 == l1.0 + 1 && h2.0 == l2.0 + 1 && l1.0 % 2 == 0 && l2.0 % 2 == 0 {
                        let (src, dst) = (Pair(l1.0), Pair(l2.0));
                        slots.drain(i..i + 4);
                        if src != dst {
                            slots.insert(i, CodeSlot::Instr(Instr::Movw(dst, src)));
                        }
                        changed = true;
                        continue;
                    }
                }
            }
            if i + 1 < slots.len() {
                if let (CodeSlot::Instr(Instr::Push(a)), CodeSlot::Instr(Instr::Pop(b))) =
                    (&slots[i], &slots[i + 1])
                {
                    let (a, b) = (*a, *b);
                    slots.drain(i..i + 2);
                    if a != b {
                        slots.insert(i, CodeSlot::Instr(Instr::Mov(b, a)));
                    }
                    changed = true;
                    continue;
                }
            }
            i += 1;
        }
        if !changed {
            return;
        }
    }
}

/// Match each PUSH with the POP that consumes it, even across intervening
/// instructions. Sound because between barriers nothing but the matched
/// push/pops touches the native stack, so stack depth pairs them uniquely.
pub fn improved(slots: &mut Vec<CodeSlot>) {
    loop {
        let mut changed = false;
        let mut i = 0;
        'outer: while i < slots.len() {
            let x = match &slots[i] {
                CodeSlot::Instr(Instr::Push(x)) => *x,
                _ => {
                    i += 1;
                    continue;
                }
            };
            let mut depth = 0i32;
            let mut reads = 0u32;
            let mut writes = 0u32;
            let mut j = i + 1;
            while j < slots.len() {
                if is_barrier(&slots[j]) {
                    break;
                }
                if let CodeSlot::Instr(instr) = &slots[j] {
                    match instr {
                        Instr::Push(_) => depth += 1,
                        Instr::Pop(y) if depth == 0 => {
                            let y = *y;
                            // Deleting the pair requires the value to stay
                            // in x across the window. Renaming captures the
                            // value with a MOV at the push site, so it only
                            // needs the destination untouched in between.
                            let ok = if y == x {
                                writes & (1 << x.0) == 0
                            } else {
                                (reads | writes) & (1 << y.0) == 0
                            };
                            if ok {
                                slots.remove(j);
                                if y == x {
                                    slots.remove(i);
                                } else {
                                    slots[i] = CodeSlot::Instr(Instr::Mov(y, x));
                                }
                                changed = true;
                                continue 'outer;
                            }
                            break;
                        }
                        Instr::Pop(_) => depth -= 1,
                        _ => {}
                    }
                    let (r, w) = rw(instr);
                    reads |= r;
                    writes |= w;
                }
                j += 1;
            }
            i += 1;
        }
        if !changed {
            return;
        }
    }
}

/// Fuse two adjacent MOVs forming an aligned pair copy into one MOVW.
/// Safe even when source and destination overlap: a pair's high register is
/// odd and its low register even, so the first MOV can never clobber the
/// second's source.
pub fn fuse_movw(slots: &mut Vec<CodeSlot>) {
    let mut i = 0;
    while i + 1 < slots.len() {
        if let (CodeSlot::Instr(Instr::Mov(a1, b1)), CodeSlot::Instr(Instr::Mov(a2, b2))) =
            (&slots[i], &slots[i + 1])
        {
            let lo_first = a2.0 == a1.0 + 1 && b2.0 == b1.0 + 1 && a1.0 % 2 == 0 && b1.0 % 2 == 0;
            let hi_first = a1.0 == a2.0 + 1 && b1.0 == b2.0 + 1 && a2.0 % 2 == 0 && b2.0 % 2 == 0;
            if lo_first || hi_first {
                let (dst, src) = if lo_first {
                    (Pair(a1.0), Pair(b1.0))
                } else {
                    (Pair(a2.0), Pair(b2.0))
                };
                slots.drain(i..i + 2);
                slots.insert(i, CodeSlot::Instr(Instr::Movw(dst, src)));
                continue;
            }
        }
        i += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::isa::Cond;
    use alloc::vec;

    fn ci(i: Instr) -> CodeSlot {
        CodeSlot::Instr(i)
    }

    #[test]
    fn basic_removes_adjacent_same_register_traffic() {
        let mut s = vec![ci(Instr::Push(Reg(24))), ci(Instr::Pop(Reg(24)))];
        basic(&mut s);
        assert!(s.is_empty());
    }

    #[test]
    fn basic_renames_adjacent_cross_register_traffic() {
        let mut s = vec![ci(Instr::Push(Reg(24))), ci(Instr::Pop(Reg(22)))];
        basic(&mut s);
        assert_eq!(s, vec![ci(Instr::Mov(Reg(22), Reg(24)))]);
    }

    #[test]
    fn basic_fuses_pair_transfer_into_movw() {
        let mut s = vec![
            ci(Instr::Push(Reg(25))),
            ci(Instr::Push(Reg(24))),
            ci(Instr::Pop(Reg(22))),
            ci(Instr::Pop(Reg(23))),
        ];
        basic(&mut s);
        assert_eq!(s, vec![ci(Instr::Movw(Pair(22), Pair(24)))]);
    }

    #[test]
    fn basic_cascades_after_removal() {
        // Removing the inner pair exposes the outer pair.
        let mut s = vec![
            ci(Instr::Push(Reg(20))),
            ci(Instr::Push(Reg(24))),
            ci(Instr::Pop(Reg(24))),
            ci(Instr::Pop(Reg(20))),
        ];
        basic(&mut s);
        assert!(s.is_empty());
    }

    #[test]
    fn improved_matches_across_intervening_code() {
        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            ci(Instr::Ldi(Reg(22), 5)),
            ci(Instr::Pop(Reg(24))),
        ];
        improved(&mut s);
        assert_eq!(s, vec![ci(Instr::Ldi(Reg(22), 5))]);
    }

    #[test]
    fn improved_renames_when_destination_is_untouched() {
        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            ci(Instr::Ldi(Reg(24), 0)),
            ci(Instr::Pop(Reg(22))),
        ];
        improved(&mut s);
        assert_eq!(
            s,
            vec![ci(Instr::Mov(Reg(22), Reg(24))), ci(Instr::Ldi(Reg(24), 0))]
        );
    }

    #[test]
    fn improved_respects_writes_to_pushed_register() {
        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            ci(Instr::Ldi(Reg(24), 7)),
            ci(Instr::Pop(Reg(24))),
        ];
        improved(&mut s);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn improved_respects_reads_of_rename_destination() {
        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            ci(Instr::Add(Reg(20), Reg(22))),
            ci(Instr::Pop(Reg(22))),
        ];
        improved(&mut s);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn improved_stops_at_barriers() {
        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            CodeSlot::Label(0),
            ci(Instr::Pop(Reg(24))),
        ];
        improved(&mut s);
        assert_eq!(s.len(), 3);

        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            ci(Instr::Brc(Cond::Eq, 2)),
            ci(Instr::Pop(Reg(24))),
        ];
        improved(&mut s);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn improved_pairs_by_stack_depth() {
        // The first POP at depth 1 belongs to the inner PUSH; the outer
        // PUSH matches the last POP.
        let mut s = vec![
            ci(Instr::Push(Reg(24))),
            ci(Instr::Push(Reg(22))),
            ci(Instr::Pop(Reg(22))),
            ci(Instr::Pop(Reg(24))),
        ];
        improved(&mut s);
        assert!(s.is_empty());
    }

    #[test]
    fn movw_fusion_handles_both_orders() {
        let mut s = vec![
            ci(Instr::Mov(Reg(22), Reg(24))),
            ci(Instr::Mov(Reg(23), Reg(25))),
        ];
        fuse_movw(&mut s);
        assert_eq!(s, vec![ci(Instr::Movw(Pair(22), Pair(24)))]);

        let mut s = vec![
            ci(Instr::Mov(Reg(23), Reg(25))),
            ci(Instr::Mov(Reg(22), Reg(24))),
        ];
        fuse_movw(&mut s);
        assert_eq!(s, vec![ci(Instr::Movw(Pair(22), Pair(24)))]);
    }

    #[test]
    fn movw_fusion_skips_misaligned_moves() {
        let mut s = vec![
            ci(Instr::Mov(Reg(23), Reg(24))),
            ci(Instr::Mov(Reg(24), Reg(25))),
        ];
        fuse_movw(&mut s);
        assert_eq!(s.len(), 2);
    }
}
