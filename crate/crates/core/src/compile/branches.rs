//! Branch-tag resolution: turn `BranchTag` slots and labels into concrete
//! RJMP/BRC/JMP sequences, growing each site only as far as its final
//! displacement requires.
//!
//! Sizes are found by fixpoint iteration and only ever grow, which
//! guarantees termination and a valid final layout: a site that fits at a
//! given size keeps fitting when other sites shrink-never/grow-only.

use alloc::vec::Vec;

use crate::image::CodeSlot;
use crate::isa::{Cond, Instr};

pub struct Resolved {
    pub instrs: Vec<Instr>,
    /// Absolute word address of each branch target id.
    pub brtargets: Vec<u16>,
}

enum Item {
    Fixed(Instr),
    Br { cond: Option<Cond>, target: u16, size: u16 },
    Label(u16),
}

impl Item {
    fn words(&self) -> u16 {
        match self {
            Item::Fixed(i) => i.word_size(),
            Item::Br { cond, size, .. } => match (cond, size) {
                (None, 1) => 1,
                (None, _) => 2,       // JMP
                (Some(_), 1) => 1,    // BRC
                (Some(_), 2) => 2,    // BRC-inverted + RJMP
                (Some(_), _) => 3,    // BRC-inverted + JMP
            },
            Item::Label(_) => 0,
        }
    }
}

/// Resolve `slots` laid out starting at absolute word address `base`.
pub fn resolve(slots: &[CodeSlot], base: u16, brtarget_count: u16) -> Resolved {
    let mut items: Vec<Item> = slots
        .iter()
        .map(|s| match s {
            CodeSlot::Label(id) => Item::Label(*id),
            CodeSlot::Instr(Instr::BranchTag { cond, target }) => {
                Item::Br { cond: *cond, target: *target, size: 1 }
            }
            CodeSlot::Instr(i) => Item::Fixed(*i),
        })
        .collect();

    let mut label_off = alloc::vec![0u16; brtarget_count as usize];
    loop {
        // Pass 1: label offsets under current sizes.
        let mut off = 0u16;
        for it in &items {
            if let Item::Label(id) = it {
                label_off[*id as usize] = off;
            }
            off += it.words();
        }
        // Pass 2: grow any site whose displacement no longer fits.
        let mut changed = false;
        let mut pos = 0u16;
        for it in &mut items {
            let w = it.words();
            if let Item::Br { cond, target, size } = it {
                let t = label_off[*target as usize] as i32;
                let need = match cond {
                    None => {
                        let d1 = t - (pos as i32 + 1);
                        if (-512..512).contains(&d1) { 1 } else { 2 }
                    }
                    Some(_) => {
                        let d1 = t - (pos as i32 + 1);
                        if (-64..64).contains(&d1) {
                            1
                        } else {
                            let d2 = t - (pos as i32 + 2);
                            if (-512..512).contains(&d2) { 2 } else { 3 }
                        }
                    }
                };
                if need > *size {
                    *size = need;
                    changed = true;
                }
            }
            pos += w;
        }
        if !changed {
            break;
        }
    }

    let mut instrs = Vec::new();
    let mut pos = 0u16;
    for it in &items {
        match it {
            Item::Label(_) => {}
            Item::Fixed(i) => {
                instrs.push(*i);
                pos += i.word_size();
            }
            Item::Br { cond, target, size } => {
                let t = label_off[*target as usize] as i32;
                match (cond, size) {
                    (None, 1) => {
                        instrs.push(Instr::Rjmp((t - (pos as i32 + 1)) as i16));
                        pos += 1;
                    }
                    (None, _) => {
                        instrs.push(Instr::Jmp(base + label_off[*target as usize]));
                        pos += 2;
                    }
                    (Some(c), 1) => {
                        instrs.push(Instr::Brc(*c, (t - (pos as i32 + 1)) as i8));
                        pos += 1;
                    }
                    (Some(c), 2) => {
                        instrs.push(Instr::Brc(c.negate(), 1));
                        instrs.push(Instr::Rjmp((t - (pos as i32 + 2)) as i16));
                        pos += 2;
                    }
                    (Some(c), _) => {
                        instrs.push(Instr::Brc(c.negate(), 2));
                        instrs.push(Instr::Jmp(base + label_off[*target as usize]));
                        pos += 3;
                    }
                }
            }
        }
    }

    let brtargets = label_off.iter().map(|o| base + o).collect();
    Resolved { instrs, brtargets }
}
