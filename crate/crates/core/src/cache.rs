//! The load-time stack cache: keeps the top of the operand stack in register
//! pairs, remembers which variable or constant each pair holds so reloads and
//! redundant stores can be skipped, and pins hot loop variables so they stay
//! in a fixed register for a whole loop.
//!
//! The same object also models the no-cache baseline, where every push goes
//! straight to the native stack and pops land in a fixed register bank
//! indexed by operand position. Keeping both behind one interface lets the
//! translator emit identical recipes at every optimization level.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::bytecode::ValueTag;
use crate::image::CodeBuf;
use crate::isa::{Instr, Pair};

/// How the manager treats pushes and pops.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheMode {
    /// Capacity zero: pushes spill immediately, pops read the native stack
    /// into a fixed per-operand-position register bank.
    Baseline,
    /// Real stack caching; `tags` additionally remembers popped values so
    /// reloads and redundant stores can be elided.
    Cache { tags: bool },
}

#[derive(Debug, Clone, Default)]
struct Entry {
    tag: Option<ValueTag>,
    /// Set while the pair is reserved for a pinned loop variable.
    pinned: Option<ValueTag>,
    /// Recency of the tag, for LRU eviction. 0 = never used.
    age: u32,
}

/// Descending preference order for both cache allocation and the baseline
/// operand bank (the bank is its first entries, minus exclusions).
const PREF: [Pair; 11] = [
    Pair(24),
    Pair(22),
    Pair(20),
    Pair(18),
    Pair(16),
    Pair(14),
    Pair(12),
    Pair(10),
    Pair(8),
    Pair(6),
    Pair(4),
];

pub struct CacheManager {
    mode: CacheMode,
    entries: [Entry; 11],
    /// Entry indexes of pairs holding stack values, bottom of stack first.
    cached: Vec<usize>,
    /// Stack slots that live on the native stack, below everything cached.
    spilled: u16,
    next_age: u32,
    /// Pairs reserved within the current bytecode instruction; cleared by
    /// `begin_instr`.
    held: Vec<usize>,
    /// Pairs the current method may never cache (e.g. the saved return
    /// address of a lightweight leaf).
    excluded: Vec<Pair>,
    /// Every cacheable pair this method's code has written.
    written_mask: u32,
}

impl CacheManager {
    pub fn new(mode: CacheMode, excluded: &[Pair]) -> CacheManager {
        CacheManager {
            mode,
            entries: Default::default(),
            cached: Vec::new(),
            spilled: 0,
            next_age: 0,
            held: Vec::new(),
            excluded: excluded.to_vec(),
            written_mask: 0,
        }
    }

    fn idx_of(pair: Pair) -> Option<usize> {
        PREF.iter().position(|p| *p == pair)
    }

    fn bank(&self, hint: usize) -> Pair {
        *PREF
            .iter()
            .filter(|p| !self.excluded.contains(p))
            .nth(hint)
            .expect("operand bank exhausted")
    }

    fn tags_on(&self) -> bool {
        self.mode == CacheMode::Cache { tags: true }
    }

    fn bump(&mut self, idx: usize) {
        self.next_age += 1;
        self.entries[idx].age = self.next_age;
    }

    fn note_written(&mut self, pair: Pair) {
        if let Some(idx) = Self::idx_of(pair) {
            self.written_mask |= 1 << idx;
        }
    }

    /// Drop `tag` from any unpinned pair that carries it (tag uniqueness).
    pub fn invalidate_tag(&mut self, tag: ValueTag) {
        for e in &mut self.entries {
            if e.pinned.is_none() && e.tag == Some(tag) {
                e.tag = None;
            }
        }
    }

    pub fn set_tag(&mut self, pair: Pair, tag: ValueTag) {
        if !self.tags_on() {
            return;
        }
        if self.entries.iter().any(|e| e.pinned == Some(tag)) {
            return;
        }
        self.invalidate_tag(tag);
        if let Some(idx) = Self::idx_of(pair) {
            if self.entries[idx].pinned.is_none() {
                self.entries[idx].tag = Some(tag);
                self.bump(idx);
            }
        }
    }

    /// The pair pinned to `tag`, if any.
    pub fn pinned_pair(&self, tag: ValueTag) -> Option<Pair> {
        self.entries
            .iter()
            .position(|e| e.pinned == Some(tag))
            .map(|i| PREF[i])
    }

    /// A pair that carries `tag` but no stack value and no pin; safe to
    /// update in place.
    pub fn tagged_free_pair(&self, tag: ValueTag) -> Option<Pair> {
        self.entries.iter().enumerate().position(|(i, e)| {
            e.tag == Some(tag) && e.pinned.is_none() && !self.cached.contains(&i)
        })
        .map(|i| PREF[i])
    }

    /// Reset per-instruction reservations.
    pub fn begin_instr(&mut self) {
        self.held.clear();
    }

    /// Reserve `pair` for the rest of the current bytecode instruction so a
    /// later `getfree` cannot hand it out again (for pairs located through
    /// their tag rather than allocated).
    pub fn hold(&mut self, pair: Pair) {
        if let Some(idx) = Self::idx_of(pair) {
            if !self.held.contains(&idx) {
                self.held.push(idx);
            }
        }
    }

    /// Forget remembered static values (after a call, which may have stored
    /// to any static slot). Pinned statics are the loop pass's responsibility.
    pub fn clear_static_tags(&mut self) {
        for e in &mut self.entries {
            if e.pinned.is_none()
                && matches!(e.tag, Some(t) if t.kind == crate::bytecode::TagKind::Static)
            {
                e.tag = None;
            }
        }
    }

    /// Logical operand-stack depth currently tracked (registers + memory).
    pub fn depth(&self) -> u16 {
        self.cached.len() as u16 + self.spilled
    }

    pub fn spilled(&self) -> u16 {
        self.spilled
    }

    pub fn cached_len(&self) -> usize {
        self.cached.len()
    }

    /// Account for stack slots a called builtin consumed (negative) or
    /// produced (positive) directly on the native stack.
    pub fn note_stack_delta(&mut self, delta: i16) {
        debug_assert!(
            self.cached.is_empty(),
            "builtin stack traffic requires a flushed cache"
        );
        self.spilled = (self.spilled as i16 + delta) as u16;
    }

    pub fn written_pairs(&self) -> Vec<Pair> {
        let mut v: Vec<Pair> = PREF
            .iter()
            .enumerate()
            .filter(|(i, _)| self.written_mask & (1 << i) != 0)
            .map(|(_, p)| *p)
            .collect();
        v.sort_by_key(|p| p.0);
        v
    }

    /// Spill the bottom-most cached value to the native stack.
    fn spill_bottom(&mut self, buf: &mut CodeBuf) {
        let idx = self.cached.remove(0);
        buf.emit_push_pair(PREF[idx]);
        self.spilled += 1;
    }

    /// Allocate a free pair the caller may overwrite. `hint` selects the
    /// operand-position bank register in baseline mode and is ignored
    /// otherwise.
    pub fn getfree(&mut self, buf: &mut CodeBuf, hint: usize) -> Pair {
        if self.mode == CacheMode::Baseline {
            let p = self.bank(hint);
            self.note_written(p);
            return p;
        }
        loop {
            let free = |this: &CacheManager, i: usize| {
                let e = &this.entries[i];
                e.pinned.is_none()
                    && !this.cached.contains(&i)
                    && !this.held.contains(&i)
                    && !this.excluded.contains(&PREF[i])
            };
            // Prefer a pair with no tag to keep popped values around.
            let pick = (0..PREF.len())
                .filter(|i| free(self, *i))
                .find(|i| self.entries[*i].tag.is_none())
                .or_else(|| {
                    // Evict the least recently used tag; ties go to the
                    // lowest register pair.
                    (0..PREF.len())
                        .filter(|i| free(self, *i))
                        .min_by_key(|i| (self.entries[*i].age, PREF[*i].0))
                });
            if let Some(i) = pick {
                self.entries[i].tag = None;
                self.held.push(i);
                self.note_written(PREF[i]);
                return PREF[i];
            }
            assert!(!self.cached.is_empty(), "all cacheable pairs pinned or held");
            self.spill_bottom(buf);
        }
    }

    /// Push the 16-bit value in `pair` onto the operand stack, optionally
    /// remembering what it is.
    pub fn push(&mut self, buf: &mut CodeBuf, pair: Pair, tag: Option<ValueTag>) {
        if self.mode == CacheMode::Baseline {
            buf.emit_push_pair(pair);
            self.spilled += 1;
            return;
        }
        let idx = match Self::idx_of(pair) {
            // A pinned pair, an uncacheable pair (e.g. a builtin's result
            // register), or a pair already on the stack can't take a stack
            // position itself: copy into a fresh pair first.
            Some(i) if self.entries[i].pinned.is_none() && !self.cached.contains(&i) => i,
            _ => {
                let dst = self.getfree(buf, 0);
                buf.emit(Instr::Movw(dst, pair));
                Self::idx_of(dst).unwrap()
            }
        };
        self.cached.push(idx);
        self.held.push(idx);
        // `tag: None` leaves any existing tag alone: the only way a pair
        // reaches here still tagged is a non-destructive pop re-pushing the
        // unchanged value, where the tag is still true.
        if let Some(t) = tag {
            self.entries[idx].tag = None;
            if self.tags_on() && !self.entries.iter().any(|e| e.pinned == Some(t)) {
                self.invalidate_tag(t);
                self.entries[idx].tag = Some(t);
            }
        }
        self.bump(idx);
    }

    /// If a register already holds the value named by `tag`, put it on the
    /// stack without touching memory and return true.
    pub fn try_reuse(&mut self, buf: &mut CodeBuf, tag: ValueTag) -> bool {
        if !self.tags_on() {
            return false;
        }
        let hit = self
            .entries
            .iter()
            .position(|e| e.tag == Some(tag) || e.pinned == Some(tag));
        let Some(idx) = hit else { return false };
        if self.cached.contains(&idx) {
            // Already on the stack: the new stack slot needs its own copy.
            let dst = self.getfree(buf, 0);
            buf.emit(Instr::Movw(dst, PREF[idx]));
            let di = Self::idx_of(dst).unwrap();
            self.cached.push(di);
            self.bump(di);
        } else {
            self.cached.push(idx);
            self.held.push(idx);
            self.bump(idx);
        }
        true
    }

    fn pop_raw(&mut self, buf: &mut CodeBuf, hint: usize) -> usize {
        match self.cached.pop() {
            Some(idx) => idx,
            None => {
                assert!(self.spilled > 0, "pop from empty tracked stack");
                let p = self.getfree(buf, hint);
                buf.emit_pop_pair(p);
                self.spilled -= 1;
                let idx = Self::idx_of(p).unwrap();
                // The pair now holds an anonymous stack value.
                self.entries[idx].tag = None;
                idx
            }
        }
    }

    /// Pop the top stack value into a pair the caller may overwrite.
    pub fn pop_destructive(&mut self, buf: &mut CodeBuf, hint: usize) -> Pair {
        if self.mode == CacheMode::Baseline {
            let p = self.bank(hint);
            buf.emit_pop_pair(p);
            self.spilled -= 1;
            self.note_written(p);
            return p;
        }
        let idx = self.pop_raw(buf, hint);
        if self.entries[idx].pinned.is_some() {
            // Never destroy a pinned register: hand out a copy instead.
            let dst = self.getfree(buf, hint);
            buf.emit(Instr::Movw(dst, PREF[idx]));
            return dst;
        }
        self.entries[idx].tag = None;
        self.held.push(idx);
        self.note_written(PREF[idx]);
        PREF[idx]
    }

    /// Pop the top stack value for reading only; any tag on it stays valid.
    pub fn pop_nondestructive(&mut self, buf: &mut CodeBuf, hint: usize) -> Pair {
        if self.mode == CacheMode::Baseline {
            return self.pop_destructive(buf, hint);
        }
        let idx = self.pop_raw(buf, hint);
        self.held.push(idx);
        self.bump(idx);
        PREF[idx]
    }

    /// Pop the value about to be stored to the slot named by `tag`.
    /// `Some(pair)` means the caller must write `pair` to memory; `None`
    /// means the store landed in a pinned register and memory stays stale
    /// until the loop epilogue writes it back.
    pub fn pop_for_store(
        &mut self,
        buf: &mut CodeBuf,
        tag: Option<ValueTag>,
        hint: usize,
    ) -> Option<Pair> {
        if let Some(t) = tag {
            if let Some(pp) = self.pinned_pair(t) {
                // Target is pinned: move the value into its home register.
                let src = self.pop_nondestructive(buf, hint);
                if src != pp {
                    buf.emit(Instr::Movw(pp, src));
                }
                self.note_written(pp);
                return None;
            }
        }
        if self.mode == CacheMode::Baseline {
            return Some(self.pop_destructive(buf, hint));
        }
        let idx = self.pop_raw(buf, hint);
        self.held.push(idx);
        self.bump(idx);
        if self.entries[idx].pinned.is_none() {
            self.entries[idx].tag = None;
            if let Some(t) = tag {
                if self.tags_on() {
                    self.invalidate_tag(t);
                    self.entries[idx].tag = Some(t);
                }
            }
        }
        Some(PREF[idx])
    }

    /// Spill every cached stack value to the native stack, bottom first, so
    /// memory matches the logical stack. Tags and pins survive.
    pub fn flush(&mut self, buf: &mut CodeBuf) {
        while !self.cached.is_empty() {
            self.spill_bottom(buf);
        }
    }

    /// Forget every remembered value (at branch targets, where register
    /// contents depend on the path taken). Pins survive.
    pub fn clear_tags(&mut self) {
        for e in &mut self.entries {
            if e.pinned.is_none() {
                e.tag = None;
            }
        }
    }

    /// Reserve a register pair for a loop variable. Pairs are handed out
    /// from the low end so allocation keeps the high end. The cache must be
    /// flushed first.
    pub fn pin(&mut self, tag: ValueTag) -> Pair {
        assert!(self.cached.is_empty(), "pin requires a flushed cache");
        let idx = (0..PREF.len())
            .rev()
            .find(|i| {
                self.entries[*i].pinned.is_none() && !self.excluded.contains(&PREF[*i])
            })
            .expect("no pair available to pin");
        self.invalidate_tag(tag);
        self.entries[idx].pinned = Some(tag);
        self.entries[idx].tag = Some(tag);
        self.note_written(PREF[idx]);
        self.bump(idx);
        PREF[idx]
    }

    /// Release every pin. Tags stay only for variables whose memory slot was
    /// just written back (`synced`); the rest may be stale in memory.
    pub fn unpin_all(&mut self, synced: &[ValueTag]) {
        for e in &mut self.entries {
            if let Some(t) = e.pinned.take() {
                if !(self.mode == CacheMode::Cache { tags: true } && synced.contains(&t)) {
                    e.tag = None;
                }
            }
        }
    }

    /// Currently pinned pairs with their variables, lowest pair first.
    pub fn pinned(&self) -> Vec<(Pair, ValueTag)> {
        let mut v: Vec<(Pair, ValueTag)> = self
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.pinned.map(|t| (PREF[i], t)))
            .collect();
        v.sort_by_key(|(p, _)| p.0);
        v
    }

    /// One-line state dump, for diagnostics and tests: stack positions as
    /// `Int1` (top) downward, then tags, then pins.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (depth, idx) in self.cached.iter().rev().enumerate() {
            let p = PREF[*idx];
            let tag = match self.entries[*idx].tag {
                Some(t) => format!(":{t}"),
                None => String::new(),
            };
            out += &format!("r{}=Int{}{} ", p.0, depth + 1, tag);
        }
        for (i, e) in self.entries.iter().enumerate() {
            if self.cached.contains(&i) {
                continue;
            }
            if let Some(t) = e.pinned {
                out += &format!("r{}=PIN({t}) ", PREF[i].0);
            } else if let Some(t) = e.tag {
                out += &format!("r{}={t} ", PREF[i].0);
            }
        }
        out += &format!("| spilled {}", self.spilled);
        out
    }
}
