//! Central-difference validation of analytic gradients.

use crate::error::{Error, Result};
use crate::problems::{Dataset, MlpModel, SyntheticKind};
use crate::rng::{subseed, SplitMix64};

/// A differentiable scalar objective that can be probed pointwise.
///
/// `eval` takes `&mut self` so adapters may reuse internal scratch buffers
/// (the MLP adapter writes the probe point into its model's parameters).
pub trait ScalarProblem {
    fn dim(&self) -> usize;
    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

/// Adapter for the closed-form synthetic objectives.
pub struct SyntheticProblem {
    kind: SyntheticKind,
    dim: usize,
}

impl SyntheticProblem {
    pub fn new(kind: SyntheticKind, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("synthetic problem needs dim >= 1".into()));
        }
        if kind == SyntheticKind::Rosenbrock && dim < 2 {
            return Err(Error::Domain("rosenbrock needs dim >= 2".into()));
        }
        Ok(Self { kind, dim })
    }
}

impl ScalarProblem for SyntheticProblem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.kind.eval(x)
    }
}

/// Adapter that views an MLP's cross-entropy loss on a fixed batch as a
/// function of the flattened parameter vector.
pub struct MlpBatchProblem {
    model: MlpModel,
    dataset: Dataset,
    batch: Vec<usize>,
}

impl MlpBatchProblem {
    pub fn new(model: MlpModel, dataset: Dataset, batch: Vec<usize>) -> Result<Self> {
        if batch.is_empty() {
            return Err(Error::Domain("finite-difference batch is empty".into()));
        }
        let mut problem = Self {
            model,
            dataset,
            batch,
        };
        let point = problem.model.params().flatten();
        problem.eval(&point)?;
        Ok(problem)
    }

    /// The current parameters as one flat vector, in group order.
    pub fn point(&self) -> Vec<f64> {
        self.model.params().flatten()
    }
}

impl ScalarProblem for MlpBatchProblem {
    fn dim(&self) -> usize {
        self.model.params().total_len()
    }

    fn eval(&mut self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.model.params_mut().assign_flat(x)?;
        let (loss, grads) = self.model.loss_and_grad(&self.dataset, &self.batch)?;
        let mut flat = Vec::with_capacity(x.len());
        for g in &grads {
            flat.extend_from_slice(g.data());
        }
        Ok((loss, flat))
    }
}

/// Compares the analytic gradient at `point` against central differences
/// with `h = 1e-6 * max(1, |x_i|)` on `samples` coordinates (all of them
/// when `samples >= dim`, otherwise a seed-determined subset) and returns
/// the worst relative error `|fd - analytic| / max(|fd|, 1e-8)`.
pub fn finite_diff_check(
    problem: &mut dyn ScalarProblem,
    point: &[f64],
    samples: usize,
    seed: u64,
) -> Result<f64> {
    let dim = problem.dim();
    if point.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: vec![dim],
            got: vec![point.len()],
        });
    }
    if samples == 0 {
        return Err(Error::Domain("finite_diff_check needs samples >= 1".into()));
    }
    let (_, analytic) = problem.eval(point)?;
    if analytic.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: vec![dim],
            got: vec![analytic.len()],
        });
    }

    let coords: Vec<usize> = if samples >= dim {
        (0..dim).collect()
    } else {
        let mut order: Vec<usize> = (0..dim).collect();
        let mut rng = SplitMix64::new(subseed(seed, "fdcheck", 0));
        rng.shuffle(&mut order);
        order.truncate(samples);
        order
    };

    let mut worst = 0.0f64;
    let mut probe = point.to_vec();
    for &i in &coords {
        let h = 1e-6 * point[i].abs().max(1.0);
        probe[i] = point[i] + h;
        let (f_plus, _) = problem.eval(&probe)?;
        probe[i] = point[i] - h;
        let (f_minus, _) = problem.eval(&probe)?;
        probe[i] = point[i];
        let fd = (f_plus - f_minus) / (2.0 * h);
        if !fd.is_finite() {
            return Err(Error::Domain(format!(
                "non-finite central difference along coordinate {i}"
            )));
        }
        let rel = (fd - analytic[i]).abs() / fd.abs().max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
