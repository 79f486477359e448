pub mod arm;
pub mod bridge;
pub mod error;
pub mod fic;
pub mod ic;
pub mod io;
pub mod scenarios;
pub mod teleop;
pub mod trace;

pub use error::{Error, Result};
