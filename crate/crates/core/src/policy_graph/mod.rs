//! Multi-component graph policy network: a fully connected labeled graph,
//! a fully connected unlabeled graph and the bipartite graph between them,
//! with M rounds of intra/inter message passing and fusion, followed by a
//! two-layer regressor that scores every unlabeled instance.

mod config;
mod forward;
mod ops;
mod params;

pub use config::{InterNorm, PhiMode, PolicyConfig};
pub use forward::{build_node_inputs, forward_from_state, forward_scores, ForwardTrace, GraphState, LayerTrace};
pub use ops::{affinity, fuse, inter_message, intra_message, MessageTrace};
pub use params::{LayerParams, PolicyParams, RegressorParams};

pub(crate) use ops::NormalizedRows;
