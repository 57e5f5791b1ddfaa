//! Temporal knowledge graph embeddings for link prediction and skill-demand
//! forecasting.
//!
//! The crate covers the whole pipeline: loading quadruple datasets
//! ([`dataset`]), the indexed graph ([`kg`]), seven scoring models
//! ([`models`]), margin-loss training with Adam ([`training`]), filtered
//! ranking metrics ([`evaluation`]), checkpoints ([`checkpoint`]) and
//! time-grid inference ([`forecasting`]).

pub mod dataset;
pub mod kg;
pub mod models;
pub mod evaluation;
pub mod training;
pub mod checkpoint;
pub mod forecasting;
