pub mod data;
pub mod error;
pub mod eval;
pub mod model;
pub mod nn;
pub mod scalar;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Generator32 = model::Generator<f32>;
pub type Generator64 = model::Generator<f64>;
pub type Discriminator32 = model::Discriminator<f32>;
pub type Discriminator64 = model::Discriminator<f64>;
pub type Trainer32 = train::Trainer<f32>;
pub type Trainer64 = train::Trainer<f64>;
pub type Checkpoint32 = train::ModelCheckpoint<f32>;
pub type Checkpoint64 = train::ModelCheckpoint<f64>;
pub type Classifier32 = eval::LegibilityClassifier<f32>;
pub type Classifier64 = eval::LegibilityClassifier<f64>;
