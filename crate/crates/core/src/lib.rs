//! Chaos-free recurrent networks, LSTM/GRU baselines, truncated-BPTT
//! training and a toolkit for the dynamics their input-free maps induce.

pub mod cells;
pub mod corpus;
pub mod dynamics;
pub mod error;
pub mod numkit;
pub mod stack;
pub mod train;

pub use error::{Error, Result};
