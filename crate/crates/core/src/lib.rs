pub mod cluster;
pub mod codec;
pub mod config;
pub mod encoder;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mvp;
pub mod optim;

pub use error::{Error, Result};
