//! Bits-per-weight accounting for low-precision training: online SMGD
//! stores a q-bit code plus a (sign, flip) pair per weight, mini-batch
//! SMGD accumulates a 32-bit partial sum, and the full-precision SGD
//! baseline keeps 32-bit weight and gradient words.

use serde::{Deserialize, Serialize};

use crate::qnn::mlp::QuantizedMlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemoryMode {
    Online,
    Minibatch,
    FullPrecisionSgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryReport {
    pub q_bits: u32,
    pub mode: MemoryMode,
    pub bits_per_weight: u32,
    pub total_weights: u64,
    pub training_bits_total: u64,
    pub size_multiplier_vs_fp: f64,
}

pub fn memory_report(net: &QuantizedMlp, mode: MemoryMode) -> MemoryReport {
    let q = net.q_bits();
    let bits_per_weight = match mode {
        MemoryMode::Online => 2 + q,
        MemoryMode::Minibatch => 32 + q,
        MemoryMode::FullPrecisionSgd => 64,
    };
    let total_weights = net.num_params();
    MemoryReport {
        q_bits: q,
        mode,
        bits_per_weight,
        total_weights,
        training_bits_total: total_weights * bits_per_weight as u64,
        size_multiplier_vs_fp: 64.0 / bits_per_weight as f64,
    }
}
