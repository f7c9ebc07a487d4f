pub mod agent;
pub mod asymptotic;
pub mod config;
pub mod economy;
pub mod error;
pub mod export;
pub mod markov;
pub mod net;
mod numeric;
pub mod population;
pub mod rational;
pub mod run;
pub mod stats;

pub use error::{Error, Result};
