//! Library surface of the `stackaot` command-line tool: benchmark suite,
//! workload file format, and reference models, re-exported so integration
//! tests can drive the same code paths as the binary.

pub mod bench;
pub mod workload;
