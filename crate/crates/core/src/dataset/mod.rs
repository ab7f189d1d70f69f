//! Feature pools, meta-splits and episode sampling.

mod episode;
mod io;
mod pool;
mod synthetic;

pub use episode::{sample_episode, Episode, Setting, TaskProtocol};
pub use io::{load_csv, load_dir, load_pool, save_csv, save_dir};
pub use pool::{check_disjoint, FeaturePool, Split};
pub use synthetic::{generate_synthetic, SyntheticSpec};
