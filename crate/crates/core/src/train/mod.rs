//! Per-class cycled adversarial training.

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod telemetry;
pub mod trainer;

pub use checkpoint::{content_id, ModelCheckpoint, CHECKPOINT_VERSION};
pub use config::TrainConfig;
pub use loss::{critic_loss, critic_objective, generator_loss, generator_objective, minimax_value, CriticObjective, LossMode};
pub use telemetry::TelemetryRecord;
pub use trainer::{train, CriticStep, Recorder, TrainObserver, Trainer, UpdateKind};
