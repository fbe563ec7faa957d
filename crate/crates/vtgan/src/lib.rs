//! File formats, transports and the experiment driver around
//! [`vtgan_core`].

pub mod audit;
pub mod checkpoint;
pub mod config;
pub mod error;
pub mod io;
pub mod run;
pub mod tcp;

pub use error::{Error, Result};
