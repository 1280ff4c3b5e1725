pub mod adaptation;
pub mod classifiers;
pub mod error;
pub mod ingest;
pub mod io;
pub mod linalg;
pub mod pipeline;
pub mod sparse;

pub use error::{Error, Result};
