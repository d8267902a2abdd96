//! Hand-written native-ISA baselines for the two smallest benchmarks.
//!
//! These are the programs a careful assembly programmer would write
//! directly for the target: register-resident state, pointer-walking
//! array access, no operand-stack traffic. They define the "native"
//! side of the overhead comparison.

use stackaot_core::compile::branches;
use stackaot_core::image::{CodeImage, CodeSlot, MethodImage};
use stackaot_core::isa::{Cond, Instr, Pair, Ptr, Reg};

const X: Pair = Pair(26);
const Z_PAIR: Pair = Pair(30);

fn label(id: u16) -> CodeSlot {
    CodeSlot::Label(id)
}
fn i(instr: Instr) -> CodeSlot {
    CodeSlot::Instr(instr)
}
fn br(cond: Cond, target: u16) -> CodeSlot {
    i(Instr::BranchTag { cond: Some(cond), target })
}
fn jump(target: u16) -> CodeSlot {
    i(Instr::BranchTag { cond: None, target })
}

/// Wrap a resolved instruction list into a runnable single-method image.
fn image(slots: Vec<CodeSlot>, brtarget_count: u16, statics_ref_slots: u16) -> CodeImage {
    let resolved = branches::resolve(&slots, 0, brtarget_count);
    let mut words = Vec::new();
    let mut categories = Vec::new();
    for instr in &resolved.instrs {
        let before = words.len();
        instr.encode(&mut words).expect("encodable native code");
        for _ in before..words.len() {
            categories.push(instr.category());
        }
    }
    let method = MethodImage {
        name: "native".into(),
        entry: 0,
        code_words: words.len() as u16,
        lightweight: false,
        params: Vec::new(),
        ret: None,
        local_int_slots: 0,
        local_ref_slots: 0,
        max_ref_stack: 0,
        lw_frame_reserve: 0,
        pinned_save_slots: 0,
        used_pairs: Vec::new(),
    };
    CodeImage {
        words,
        categories,
        methods: vec![method],
        entry_method: 0,
        statics_int_slots: 0,
        statics_ref_slots,
        classes: Vec::new(),
    }
}

/// Bubble sort of the 16-bit array referenced by ref static 0.
pub fn bsort() -> CodeImage {
    use Instr::*;
    const OUTER: u16 = 0;
    const INNER: u16 = 1;
    const SKIP: u16 = 2;
    let slots = vec![
        // Z <- array address from ref static 0, then length; Z ends at
        // the first element.
        i(Ldi(Reg(30), 0x60)),
        i(Ldi(Reg(31), 0x00)),
        i(LdInc(Reg(24), Ptr::Z)),
        i(LdInc(Reg(25), Ptr::Z)),
        i(Movw(Z_PAIR, Pair(24))),
        i(LdInc(Reg(24), Ptr::Z)),
        i(LdInc(Reg(25), Ptr::Z)),
        // end = n - 1
        i(Sbiw(Pair(24), 1)),
        i(Movw(Pair(20), Pair(24))),
        label(OUTER),
        i(Movw(X, Z_PAIR)),
        i(Movw(Pair(16), Pair(20))),
        label(INNER),
        // a = [X++], b = [X++]; leave X at b for the next pair.
        i(LdInc(Reg(4), Ptr::X)),
        i(LdInc(Reg(5), Ptr::X)),
        i(LdInc(Reg(6), Ptr::X)),
        i(LdInc(Reg(7), Ptr::X)),
        i(Sbiw(X, 2)),
        i(Cp(Reg(6), Reg(4))),
        i(Cpc(Reg(7), Reg(5))),
        br(Cond::GeS, SKIP),
        // Swap: a into the upper slot, b into the lower.
        i(StInc(Ptr::X, Reg(4))),
        i(StInc(Ptr::X, Reg(5))),
        i(Sbiw(X, 4)),
        i(StInc(Ptr::X, Reg(6))),
        i(StInc(Ptr::X, Reg(7))),
        label(SKIP),
        i(Sbiw(Pair(16), 1)),
        br(Cond::Ne, INNER),
        i(Sbiw(Pair(20), 1)),
        br(Cond::Ne, OUTER),
        i(Ret),
    ];
    image(slots, 3, 1)
}

/// Binary search: 64 keys (ref static 1) against the sorted 256-element
/// array (ref static 0); results into ref static 2.
pub fn bsearch() -> CodeImage {
    use Instr::*;
    const KLOOP: u16 = 0;
    const SEARCH: u16 = 1;
    const GOLO: u16 = 2;
    const FOUND: u16 = 3;
    const STORE: u16 = 4;
    let slots = vec![
        // Array addresses from ref statics 0..2.
        i(Ldi(Reg(30), 0x60)),
        i(Ldi(Reg(31), 0x00)),
        i(LdInc(Reg(18), Ptr::Z)),
        i(LdInc(Reg(19), Ptr::Z)),
        i(LdInc(Reg(20), Ptr::Z)),
        i(LdInc(Reg(21), Ptr::Z)),
        i(LdInc(Reg(22), Ptr::Z)),
        i(LdInc(Reg(23), Ptr::Z)),
        // maxidx = len(a) - 1; a/keys/out bases skip the length header.
        i(Movw(Z_PAIR, Pair(18))),
        i(LdInc(Reg(10), Ptr::Z)),
        i(LdInc(Reg(11), Ptr::Z)),
        i(Movw(Pair(18), Z_PAIR)),
        i(Sbiw(Pair(10), 1)),
        i(Adiw(Pair(20), 2)),
        i(Adiw(Pair(22), 2)),
        i(Ldi(Reg(16), 64)),
        i(Ldi(Reg(17), 0)),
        label(KLOOP),
        // key = [keys++]
        i(Movw(Z_PAIR, Pair(20))),
        i(LdInc(Reg(4), Ptr::Z)),
        i(LdInc(Reg(5), Ptr::Z)),
        i(Movw(Pair(20), Z_PAIR)),
        // lo = 0, hi = maxidx
        i(Ldi(Reg(6), 0)),
        i(Ldi(Reg(7), 0)),
        i(Movw(Pair(8), Pair(10))),
        label(SEARCH),
        // mid = (lo + hi) >> 1
        i(Movw(Pair(12), Pair(6))),
        i(Add(Reg(12), Reg(8))),
        i(Adc(Reg(13), Reg(9))),
        i(Lsr(Reg(13))),
        i(Ror(Reg(12))),
        // v = a[mid]
        i(Movw(Z_PAIR, Pair(12))),
        i(Lsl(Reg(30))),
        i(Rol(Reg(31))),
        i(Add(Reg(30), Reg(18))),
        i(Adc(Reg(31), Reg(19))),
        i(LdInc(Reg(24), Ptr::Z)),
        i(LdInc(Reg(25), Ptr::Z)),
        // v < key ? lo = mid + 1 : hi = mid
        i(Cp(Reg(24), Reg(4))),
        i(Cpc(Reg(25), Reg(5))),
        br(Cond::GeS, GOLO),
        i(Movw(Pair(6), Pair(12))),
        i(Adiw(Pair(6), 1)),
        jump(FOUND),
        label(GOLO),
        i(Movw(Pair(8), Pair(12))),
        label(FOUND),
        i(Cp(Reg(6), Reg(8))),
        i(Cpc(Reg(7), Reg(9))),
        br(Cond::LtS, SEARCH),
        // res = (a[lo] == key) ? lo : -1
        i(Movw(Z_PAIR, Pair(6))),
        i(Lsl(Reg(30))),
        i(Rol(Reg(31))),
        i(Add(Reg(30), Reg(18))),
        i(Adc(Reg(31), Reg(19))),
        i(LdInc(Reg(24), Ptr::Z)),
        i(LdInc(Reg(25), Ptr::Z)),
        i(Movw(Pair(14), Pair(6))),
        i(Cp(Reg(24), Reg(4))),
        i(Cpc(Reg(25), Reg(5))),
        br(Cond::Eq, STORE),
        i(Ldi(Reg(14), 0xff)),
        i(Ldi(Reg(15), 0xff)),
        label(STORE),
        i(Movw(Z_PAIR, Pair(22))),
        i(StInc(Ptr::Z, Reg(14))),
        i(StInc(Ptr::Z, Reg(15))),
        i(Movw(Pair(22), Z_PAIR)),
        i(Sbiw(Pair(16), 1)),
        br(Cond::Ne, KLOOP),
        i(Ret),
    ];
    image(slots, 5, 3)
}
