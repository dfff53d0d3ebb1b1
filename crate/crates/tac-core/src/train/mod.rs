//! Desk-scale training: hand-written forward/backward for small networks
//! with binarized convolutions, the prune/quantize fine-tuning pipeline,
//! dataset readers, and checkpointing.

pub mod checkpoint;
pub mod data;
pub mod net;
pub mod optim;
pub mod pipeline;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use data::Dataset;
pub use net::{build_network, Network};
pub use optim::{Adam, AdamConfig};
pub use pipeline::{
    evaluate, fine_tune, iterative_prune_finetune, quantize_finetune, train_binary_net,
    EpochStats, EvalResult, QuantizeReport, Stage, TrainConfig, TrainState,
};
