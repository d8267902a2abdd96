//! JSON workload format for the `run` subcommand.
//!
//! ```json
//! {
//!   "statics_int": [1, 2],
//!   "arrays": [ { "kind": "short", "data": [3, 1, 2] } ]
//! }
//! ```
//!
//! Array `kind` is one of `byte`, `short`, `int`, `ref`; `arrays[i]` is
//! bound to ref static slot `i` before execution starts.

use serde::{Deserialize, Serialize};
use stackaot_core::bytecode::ElemKind;
use stackaot_core::world::Workload;

#[derive(Serialize, Deserialize, Default)]
pub struct WorkloadFile {
    #[serde(default)]
    pub statics_int: Vec<i16>,
    #[serde(default)]
    pub arrays: Vec<ArrayInit>,
}

#[derive(Serialize, Deserialize)]
pub struct ArrayInit {
    pub kind: String,
    pub data: Vec<i32>,
}

fn kind_of(name: &str) -> Result<ElemKind, String> {
    match name {
        "byte" | "b" => Ok(ElemKind::Byte),
        "short" | "s" => Ok(ElemKind::Short),
        "int" | "i" => Ok(ElemKind::Int),
        "ref" | "a" => Ok(ElemKind::Ref),
        other => Err(format!("unknown array kind `{other}`")),
    }
}

impl WorkloadFile {
    pub fn into_workload(self) -> Result<Workload, String> {
        let mut arrays = Vec::new();
        for a in self.arrays {
            arrays.push((kind_of(&a.kind)?, a.data));
        }
        Ok(Workload { statics_int: self.statics_int, arrays })
    }
}
