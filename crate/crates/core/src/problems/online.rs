//! Online convex optimization with linear per-round losses on a box.
//!
//! At round `t` the learner holds `x_t` inside the box, pays
//! `f_t(x_t) = <c_t, x_t>`, and only then sees the cost vector `c_t`.
//! Costs here are an i.i.d. stream, uniform per coordinate on
//! `(-g_cap, g_cap)`, generated as a pure function of `(seed, t)` so any
//! round can be replayed independently and concurrently.

use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::optim::FeasibleBox;
use crate::rng::{subseed, SplitMix64};

#[derive(Debug, Clone)]
pub struct OnlineProblem {
    dim: usize,
    feasible: FeasibleBox,
    seed: u64,
    g_cap: f64,
}

impl OnlineProblem {
    /// The box must bound every coordinate on both sides: the regret
    /// comparator is a box corner, which does not exist otherwise.
    pub fn new(dim: usize, feasible: FeasibleBox, seed: u64, g_cap: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("online problem needs dimension >= 1".into()));
        }
        if !(g_cap > 0.0 && g_cap.is_finite()) {
            return Err(Error::Domain(format!(
                "g_cap must be positive, got {g_cap}"
            )));
        }
        require_fully_bounded(&feasible, dim)?;
        Ok(OnlineProblem {
            dim,
            feasible,
            seed,
            g_cap,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn feasible(&self) -> &FeasibleBox {
        &self.feasible
    }

    /// Cost vector of round `t` (1-based). A deterministic function of
    /// `(seed, t)`: repeated calls return identical values.
    pub fn cost_vector(&self, t: u64) -> Result<Tensor> {
        if t == 0 {
            return Err(Error::ZeroStep);
        }
        let mut rng = SplitMix64::new(subseed(self.seed, "online", t));
        let data = (0..self.dim)
            .map(|_| rng.next_in(-self.g_cap, self.g_cap))
            .collect();
        Ok(Tensor::from_vec(data))
    }

    /// Loss and cost vector of round `t` at the (feasible) point `x_t`.
    pub fn step(&self, t: u64, x: &Tensor) -> Result<(f64, Tensor)> {
        if x.len() != self.dim {
            return Err(Error::ShapeMismatch {
                expected: vec![self.dim],
                got: x.shape().to_vec(),
            });
        }
        self.feasible.check_point(x.data())?;
        let c = self.cost_vector(t)?;
        let loss = c.data().iter().zip(x.data()).map(|(a, b)| a * b).sum();
        Ok((loss, c))
    }

    /// Best fixed point in hindsight over rounds `1..=horizon` and its total
    /// loss: replays the stream, sums the costs, and picks the best corner.
    pub fn best_fixed_point(&self, horizon: u64) -> Result<(Vec<f64>, f64)> {
        if horizon == 0 {
            return Err(Error::ZeroStep);
        }
        let mut sums = vec![0.0; self.dim];
        for t in 1..=horizon {
            let c = self.cost_vector(t)?;
            for (s, ci) in sums.iter_mut().zip(c.data()) {
                *s += ci;
            }
        }
        corner_minimum(&sums, &self.feasible)
    }
}

fn require_fully_bounded(feasible: &FeasibleBox, dim: usize) -> Result<()> {
    match feasible {
        FeasibleBox::Unbounded => Err(Error::Domain(
            "online problem requires a fully bounded box".into(),
        )),
        FeasibleBox::Bounds { lower, upper } => {
            if lower.len() != dim {
                return Err(Error::BoxDimMismatch {
                    box_dim: lower.len(),
                    point_dim: dim,
                });
            }
            if lower.iter().chain(upper).any(|b| !b.is_finite()) {
                return Err(Error::Domain(
                    "online problem requires a fully bounded box".into(),
                ));
            }
            Ok(())
        }
    }
}

/// Minimizes `<cost_sum, x>` over the box. Linear objectives take their
/// minimum at a corner: coordinate `i` sits at the lower bound when
/// `cost_sum[i] > 0` and at the upper bound otherwise. Returns the corner
/// and its objective value.
pub fn corner_minimum(cost_sum: &[f64], feasible: &FeasibleBox) -> Result<(Vec<f64>, f64)> {
    require_fully_bounded(feasible, cost_sum.len())?;
    let (lower, upper) = match feasible {
        FeasibleBox::Bounds { lower, upper } => (lower, upper),
        FeasibleBox::Unbounded => unreachable!("checked above"),
    };
    let mut corner = Vec::with_capacity(cost_sum.len());
    let mut total = 0.0;
    for (i, s) in cost_sum.iter().enumerate() {
        let x = if *s > 0.0 { lower[i] } else { upper[i] };
        corner.push(x);
        total += (s * lower[i]).min(s * upper[i]);
    }
    Ok((corner, total))
}
