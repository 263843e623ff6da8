pub mod corrector;
pub mod driver;
pub mod error;
pub mod fem;
pub mod hodmd;
pub mod plasticity;
pub mod separated;

pub use error::{Error, Result};
