pub mod descript;
pub mod error;
pub mod eval;
pub mod media;
pub mod motionfeat;
pub mod stip;
pub mod svm;
pub mod volume;
pub mod vocab;

pub use error::{Error, Result};
