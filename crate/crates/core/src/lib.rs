pub mod basis;
pub mod dataset;
pub mod error;
pub mod estimation;
pub mod extension;
pub mod families;
pub mod integration;
pub mod model;
pub mod params;
pub mod prediction;
pub mod predictor;
pub mod spec;
pub mod sum;


pub use error::{Error, Result};
