//! Interpretable domain-adaptive classification with per-class key-value
//! memory banks.
//!
//! An MLP encoder is trained adversarially against a domain discriminator so
//! that source and target embeddings line up. Every class owns a bank of
//! `(key, value)` slots written from labelled source features; a query is
//! scored against each bank by the mean `value * similarity` over its
//! nearest keys, and the winning slots double as the explanation.
//!
//! ```no_run
//! use idc::data::{generate, SyntheticShiftSpec};
//! use idc::trainer::{train, TrainConfig};
//! use idc::infer::evaluate_idc;
//!
//! let data = generate(&SyntheticShiftSpec::default())?;
//! let trained = train(&TrainConfig::default(), &data.dataset)?;
//! let labels = data.target_labels.aligned(&data.dataset)?;
//! let outcomes = evaluate_idc(&trained.model, &data.dataset, &labels)?;
//! println!("target accuracy {:.3}", outcomes.accuracy());
//! # Ok::<(), idc::IdcError>(())
//! ```

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod infer;
pub mod math;
pub mod membank;
pub mod model;
pub mod nn;
pub mod persist;
pub mod seeding;
pub mod select;
pub mod trainer;

pub use config::RunConfig;
pub use error::{IdcError, Result};
pub use math::FeatureVector;
pub use membank::{MemoryBank, MemoryBankSet, ReadResult};
pub use model::IdcModel;
pub use trainer::{train, TrainConfig, Trainer};
