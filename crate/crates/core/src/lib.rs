//! AdaL — an Adam variant driven by l1-rescaled gradients — together with
//! the comparator optimizers, test problems, analysis tools, and the
//! deterministic experiment harness used to study it.
//!
//! The crate is organized as:
//!
//! * [`numerics`] — tensors, parameter groups, norms;
//! * [`rng`] — the in-repo seedable generator every randomized component
//!   draws from (bit-reproducible across platforms and ports);
//! * [`optim`] — AdaL, Adam, AMSGrad, SGD, schedules, box projection;
//! * [`problems`] — synthetic test functions, online linear losses, a
//!   hand-differentiated MLP, blob datasets and IDX loading;
//! * [`analysis`] — regret curves, regret/stationarity bound evaluation,
//!   gradient-noise extraction, Hill tail-index estimation;
//! * [`harness`] — experiment configs, the training/online loops, gradient
//!   checking, CSV emission.

pub mod analysis;
pub mod error;
pub mod harness;
pub mod numerics;
pub mod optim;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
pub use numerics::{ParamGroup, ParamSet, Role, Tensor};
pub use optim::{FeasibleBox, GradTransform, OptConfig, OptState, Schedule, ScheduleKind};
