pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod par;
pub mod training;

pub use error::{AeganError, Result};
