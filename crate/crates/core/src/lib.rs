pub mod allocation;
pub mod error;
pub mod field;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod predict;
pub mod simulate;

pub use error::{Error, Result};
