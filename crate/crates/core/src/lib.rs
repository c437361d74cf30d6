pub mod distill;
pub mod error;
pub mod layers;
pub mod order;
pub mod parser;
pub mod training;
pub mod treebank;
pub mod typology;

pub use error::{Error, Result};
