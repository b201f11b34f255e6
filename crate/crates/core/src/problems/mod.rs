//! Test problems: synthetic minimization surfaces, online linear losses on a
//! box, blob/IDX classification datasets, and a small hand-differentiated MLP.

pub mod data;
pub mod mlp;
pub mod online;
pub mod synthetic;

pub use data::{load_idx, load_idx_images, load_idx_labels, make_blobs, Dataset};
pub use mlp::{Activation, MlpModel};
pub use online::{corner_minimum, OnlineProblem};
pub use synthetic::{rastrigin, rosenbrock, SyntheticKind};
