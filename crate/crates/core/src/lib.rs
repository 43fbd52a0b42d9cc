pub mod error;
pub mod numeric;
pub mod par;

pub use error::{Error, Result};
pub mod layers;
pub mod heads;
pub mod gradcheck;
pub mod data;
pub mod training;
pub mod evaluation;
pub mod dataio;
pub mod synthbench;
