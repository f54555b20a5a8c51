//! Feed-forward network with weights on a saturated q-bit lattice, trained
//! end-to-end by SMGD, plus the bits-per-weight accounting model.

mod checkpoint;
mod memory;
mod mlp;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use memory::{memory_report, MemoryMode, MemoryReport};
pub use mlp::{AlphaMode, ForwardCache, MlpGradient, QuantizedMlp, RealMlp};
pub use train::{train_smgd, CurvePoint, TrainConfig};
