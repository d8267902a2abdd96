//! Shared input/output model for the two execution engines.
//!
//! A [`Workload`] describes the initial observable state: values for the
//! int static slots and a list of pre-allocated arrays whose references are
//! stored into the leading ref static slots. A [`FinalState`] captures
//! everything the equivalence tests compare: statics, every array's
//! contents in allocation order, and the entry method's return value.
//! References are compared as allocation ordinals so that the interpreter's
//! handles and the simulator's RAM addresses become comparable.

use alloc::vec::Vec;

use crate::bytecode::ElemKind;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Workload {
    /// Initial values for int static slots `0..n`; remaining slots start at
    /// zero.
    pub statics_int: Vec<i16>,
    /// Arrays allocated before the entry method runs; the reference to
    /// `arrays[i]` is stored in ref static slot `i`.
    pub arrays: Vec<(ElemKind, Vec<i32>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalState {
    pub statics_int: Vec<i16>,
    /// Ref static slots as allocation ordinals (pre-allocated arrays come
    /// first, then runtime allocations in order), or `None` for null.
    pub ref_statics: Vec<Option<u32>>,
    /// Contents of every array, in allocation order. Byte elements are
    /// sign-extended, shorts sign-extended, refs stored as ordinal+1
    /// (0 for null).
    pub arrays: Vec<(ElemKind, Vec<i32>)>,
    /// Entry method return value, sign-extended to 32 bits.
    pub ret: Option<i32>,
}
