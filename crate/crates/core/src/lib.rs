pub mod analysis;
pub mod error;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod stimuli;
pub mod training;
pub mod util;

pub use error::{Error, Result};
