pub mod config;
pub mod datagen;
pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod missingness;
pub mod model;
pub mod orchestration;
pub mod plots;

pub use error::{Error, Result};
