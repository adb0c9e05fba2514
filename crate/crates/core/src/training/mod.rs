//! Training loops: the routed DoPaNet game, the single-discriminator GAN and
//! the GMAN ensemble baseline, sharing one [`TrainState`].
//!
//! Random streams are split by purpose so that the data, code and noise draws
//! do not depend on how many routing draws an algorithm makes. With one
//! discriminator the DoPaNet loop and the standard GAN loop therefore walk
//! bit-identical parameter trajectories.

mod config;
mod state;

pub use config::{Algorithm, GeneratorLoss, GmanVariant, LrSchedule, TrainConfig};
pub use state::{
    aggregate_weights, train, train_with, Batches, LogRecord, Partition, TrainLog, TrainState,
};
