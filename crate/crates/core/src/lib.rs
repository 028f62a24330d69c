pub mod adversary;
pub mod checkpoint;
pub mod corpus;
pub mod docfeat;
pub mod error;
pub mod experiment;
pub mod kgraph;
pub mod kvconfig;
pub mod numkit;
pub mod rgcn;
pub mod synth;

pub use error::{Error, Result};
