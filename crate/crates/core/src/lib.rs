pub mod arrayops;
pub mod cli;
pub mod dataio;
pub mod error;
pub mod forecast;
pub mod randfourier;
pub mod sigfeatures;
pub mod sigoracle;
pub mod special;
pub mod vargp;

pub use error::{Error, Result};
