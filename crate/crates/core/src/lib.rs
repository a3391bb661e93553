pub mod diffcore;
pub mod error;
pub mod odesolve;
pub mod seeding;
pub mod data;
pub mod recurrent;
pub mod training;
pub mod autoencoder;
pub mod pyramid;
pub mod linkode;

pub use error::{Error, Result};
pub mod experiment;
