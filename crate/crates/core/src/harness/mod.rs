//! Synthetic datasets, the energy + force loss, Adam training, metrics
//! and run records.

mod check;
mod data;
mod train;

pub use check::{gradcheck_csv, parameter_gradcheck, GroupCheck};
pub use data::{
    dataset_hash, generate_dataset, read_jsonl, write_jsonl, DatasetConfig, Potential, PotentialKind, Sample,
    SampleRecord, Units, GENERATION_FORCE_TOLERANCE,
};
pub use train::{
    config_hash, evaluate, format_real, loss, loss_and_gradient, split_dataset, train, Adam, EpochRecord, LossConfig,
    Metrics, OptimizerConfig, Predictor, RunRecord, TrainConfig, ZeroModel, FORCE_PROBE_STEP,
};
