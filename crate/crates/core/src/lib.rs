pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod nn;
pub mod runner;
pub mod theory;
pub mod training;

pub use error::{Error, Result};
