//! Cross-network user identity linkage: multi-level attribute and structure
//! embeddings, a regularized CCA projection into a common space, and
//! nearest-neighbour matching evaluated by Hit-Precision@k.

mod bytes;

pub mod char_embed;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod matcher;
pub mod pipeline;
pub mod rcca;
pub mod sampling;
pub mod struct_embed;
pub mod synthgen;
pub mod topic_embed;
pub mod word_embed;

pub use config::{CandidatePool, ExperimentConfig, Preset, Variant};
pub use error::{Error, ErrorClass, Result};
pub use features::{FeatureMatrix, Level};
