pub mod action;
pub mod cot;
pub mod embed;
pub mod env;
pub mod error;
pub mod harness;
pub mod http;
pub mod llm;
pub mod nn;
pub mod prompt;
pub mod trainer;
pub mod util;

pub use error::{Error, Result};
