pub mod config;
pub mod error;
pub mod estimates;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod model;
pub mod stepper;
pub mod velocity;

pub use error::{Error, Result};
