//! Load-time translation of stack bytecode to a small 8-bit register ISA.
//!
//! The crate is split roughly along the toolchain pipeline:
//!
//! * [`isa`] — the target instruction set, its cycle costs and binary encoding
//! * [`bytecode`] — the stack bytecode, textual assembly, verifier and the
//!   binary infusion format
//! * [`infuse`] — platform-independent bytecode transformations
//! * [`cache`] — the compile-time stack cache / register manager
//! * [`compile`] — the single-pass translator, peephole passes and branch
//!   resolution
//! * [`image`] — the executable code image produced by the compiler
//! * [`interp`] — the reference interpreter used as the semantic oracle
//! * [`sim`] — the cycle-accurate machine simulator and trace reports
//!
//! The crate is `no_std` (with `alloc`); all IO lives in the companion CLI
//! crate.

#![no_std]

extern crate alloc;

pub mod bytecode;
pub mod cache;
pub mod compile;
pub mod image;
pub mod infuse;
pub mod interp;
pub mod isa;
pub mod sim;
pub mod world;

pub use compile::{compile_infusion, compile_method, CompilationResult, OptLevel};
pub use image::CodeImage;
pub use infuse::{infuse, InfuseOptions, InfuseReport};
pub use isa::{Category, Instr};
pub use sim::{run, RunStats, SimOptions, SimOutcome};
pub use world::{FinalState, Workload};
