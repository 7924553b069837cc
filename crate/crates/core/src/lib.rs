//! Continuous-training pipeline orchestration.
//!
//! A pipeline replays a timestamped sample stream, decides when to retrain
//! ([`supervisor`]), selects what to train on ([`selector`], [`trainer`]),
//! trains a reference learner, stores every model ([`model_store`]) and
//! evaluates all models over time windows ([`evaluator`]).

pub mod config;
pub mod bench;
pub mod drift;
pub mod evaluator;
pub mod matrix;
pub mod model_store;
pub mod report;
pub mod selector;
pub mod share;
pub mod seed;
pub mod storage;
pub mod supervisor;
pub mod synth;
pub mod trainer;

pub use matrix::Matrix;
