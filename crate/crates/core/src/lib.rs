//! Lane-level pavement performance prediction with a multi-task LSTM.
//!
//! A shared LSTM reads a segment's recent index history, one task head per
//! lane refines it, and per-lane output layers combine every head with the
//! segment's static road attributes to predict next year's value for each
//! lane of every 100 m unit.

pub mod nn;
pub mod data;
pub mod eval;
pub mod model;
pub mod seed;
pub mod training;
