//! Classification of program functions as easy or hard to optimize.
//!
//! The pipeline parses functions written in a small C subset, extracts
//! loop-centric static features, labels functions by comparing run times at
//! a basic and an aggressive optimization level, and trains a random forest
//! that predicts the label for unseen code.

pub mod eval;
pub mod exec;
pub mod features;
pub mod forest;
pub mod labeler;
pub mod manifest;
pub mod parser;
pub mod synthgen;

pub use exec::Execution;
pub use labeler::Label;
pub use features::{extract, FeatureSchema, FeatureVector};
pub use parser::{parse_unit, FunctionUnit, SourceUnit};
