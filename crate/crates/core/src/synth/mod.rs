//! A synthetic "lazy agent": activation datasets with planted intent and
//! domain geometry, and a linear behavior oracle that turns hidden states
//! into generated text.

mod config;
mod oracle;
mod world;

pub use config::{LayerGain, WorldConfig, DEFAULT_GRAM};
pub use oracle::{BehaviorOracle, ToolEmitter, REFUSAL_TEXT};
pub use world::{build_world, factorize_gram, split_counts, World};
