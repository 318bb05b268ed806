pub mod asymptotics;
pub mod config;
pub mod error;
pub mod experiments;
pub mod model;
pub mod quotes;
pub mod simulate;
pub mod triangular;

pub use error::{Error, Result};
