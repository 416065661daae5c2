//! Federated training over the simulated channel.

mod constants;
mod data;
mod train;

pub use constants::{quadratic_constants, QuadraticConstants};
pub use data::{partition_dataset, Dataset, PartitionKind, Targets};
pub use train::{
    global_loss, run, run_hierfed, CHANNEL_STREAM, run_multiairfed, Algorithm, Batch, LearnParams, RoundRecord, RoundTrace,
    SlotRecord, Task, Transmission,
};
