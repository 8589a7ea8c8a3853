pub mod costmodel;
pub mod error;
pub mod metrics;
pub mod molspace;
pub mod numerics;
pub mod planner;
pub mod policygnn;
pub mod searchgraph;
pub mod traindata;

pub use error::{Error, Result};
