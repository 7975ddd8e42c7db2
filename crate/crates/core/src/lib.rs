pub mod align;
pub mod derivative;
pub mod eig;
pub mod error;
pub mod experiments;
pub mod field;
pub mod linalg;
pub mod mc;
pub mod mesh;
pub mod perturb;
pub mod problem;

pub use error::{Error, Result};
