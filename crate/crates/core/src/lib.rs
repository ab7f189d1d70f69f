//! Budget-aware few-shot learning: episodic task simulation over fixed
//! feature embeddings, a prototype classifier, a graph-network selection
//! policy trained by imitating a one-step-lookahead expert, classical
//! active-learning baselines, and a benchmarking harness.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar for common use.

pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod ids;
pub mod policies;
pub mod policy_graph;
pub mod protonet;
pub mod scalar;
pub mod seed;
pub mod trainer;

pub use dataset::{sample_episode, Episode, FeaturePool, Setting, Split, SyntheticSpec, TaskProtocol};
pub use error::{Error, Result};
pub use harness::{compare_policies, run_benchmark, run_episode, Comparison, EpisodeResult, Report, TraceStep};
pub use ids::{ClassId, InstanceId};
pub use policies::{PolicyKind, PolicySpec, Selection, SelectionPolicy};
pub use policy_graph::{PolicyConfig, PolicyParams};
pub use protonet::{compute_prototypes, PrototypeSet};
pub use scalar::Real;
pub use trainer::{meta_train, LossMode, TrainConfig, Trainer};

pub type Pool = FeaturePool<f64>;
pub type Params = PolicyParams<f64>;
pub type Prototypes = PrototypeSet<f64>;
pub type Spec = PolicySpec<f64>;
pub type Pool32 = FeaturePool<f32>;
pub type Params32 = PolicyParams<f32>;
pub type Prototypes32 = PrototypeSet<f32>;
pub type Spec32 = PolicySpec<f32>;
