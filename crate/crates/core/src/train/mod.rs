//! Training engine: optimizer, schedules, run configuration, checkpoints
//! and the epoch loop.

pub mod ablation;
pub mod checkpoint;
pub mod config;
pub mod optim;
pub mod schedule;
pub mod trainer;

pub use ablation::{run_ablation, AblationRow};
pub use checkpoint::{Checkpoint, TensorRecord};
pub use config::{model_fingerprint, RunConfig, TrainConfig};
pub use optim::{clip_global_norm, AdamWConfig, OptimState};
pub use schedule::{EarlyStopper, Plateau};
pub use trainer::{evaluate_samples, load_model, load_params, EpochRecord, Evaluation, Trainer};
