//! Classic nonconvex minimization surfaces with analytic gradients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Rastrigin,
    Rosenbrock,
}

impl SyntheticKind {
    /// Value and gradient at `x`.
    pub fn eval(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        match self {
            SyntheticKind::Rastrigin => rastrigin(x),
            SyntheticKind::Rosenbrock => rosenbrock(x),
        }
    }

    /// The documented global minimizer for dimension `d`.
    pub fn minimizer(&self, d: usize) -> Vec<f64> {
        match self {
            SyntheticKind::Rastrigin => vec![0.0; d],
            SyntheticKind::Rosenbrock => vec![1.0; d],
        }
    }
}

/// Rastrigin function
/// `f(x) = 10 d + sum_i (x_i^2 - 10 cos(2 pi x_i))`,
/// gradient `2 x_i + 20 pi sin(2 pi x_i)`. Nonnegative everywhere; the only
/// zero is the global minimum at the origin.
pub fn rastrigin(x: &[f64]) -> Result<(f64, Vec<f64>)> {
    if x.is_empty() {
        return Err(Error::Domain("rastrigin needs dimension >= 1".into()));
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut value = 10.0 * x.len() as f64;
    let mut grad = Vec::with_capacity(x.len());
    for xi in x {
        value += xi * xi - 10.0 * (two_pi * xi).cos();
        grad.push(2.0 * xi + 10.0 * two_pi * (two_pi * xi).sin());
    }
    Ok((value, grad))
}

/// Rosenbrock function
/// `f(x) = sum_{i<d-1} [100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2]`.
/// Requires `d >= 2`; nonnegative, zero exactly at the all-ones point.
pub fn rosenbrock(x: &[f64]) -> Result<(f64, Vec<f64>)> {
    let d = x.len();
    if d < 2 {
        return Err(Error::Domain(format!(
            "rosenbrock needs dimension >= 2, got {d}"
        )));
    }
    let mut value = 0.0;
    let mut grad = vec![0.0; d];
    for i in 0..d - 1 {
        let gap = x[i + 1] - x[i] * x[i];
        value += 100.0 * gap * gap + (1.0 - x[i]) * (1.0 - x[i]);
        grad[i] += -400.0 * x[i] * gap - 2.0 * (1.0 - x[i]);
        grad[i + 1] += 200.0 * gap;
    }
    Ok((value, grad))
}
