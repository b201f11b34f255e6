//! Post-hoc analysis of optimization runs: regret curves, numerical
//! evaluation of the convex and non-convex convergence bounds, gradient-noise
//! construction with tail-index estimation, and gradient-norm trend
//! summaries.

use crate::error::{Error, Result};
use crate::numerics::{elementwise, l1_norm, linf_norm, ElementwiseOp, Tensor};

/// Per-group gradient norms logged at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupNorms {
    pub group: String,
    pub grad_l1: f64,
    pub grad_linf: f64,
}

impl GroupNorms {
    pub fn from_gradient(group: &str, grad: &Tensor) -> Result<Self> {
        Ok(GroupNorms {
            group: group.to_string(),
            grad_l1: l1_norm(grad)?,
            grad_linf: linf_norm(grad)?,
        })
    }
}

/// One step of an experiment trace. The harness writes one record per
/// optimizer step; optional fields stay `None` when the experiment kind does
/// not produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u64,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: Option<f64>,
    pub group_norms: Vec<GroupNorms>,
    pub regret: Option<f64>,
    pub bound_rhs: Option<f64>,
    pub noise_l2: Option<f64>,
    pub tail_index: Option<f64>,
    /// Per-coordinate running sums of squared raw gradients (bound inputs).
    pub grad_sq_sum: Option<Vec<f64>>,
    /// Flattened parameter snapshot, for trajectory comparisons.
    pub params: Option<Vec<f64>>,
}

impl TraceRecord {
    pub fn new(step: u64, lr: f64, loss: f64) -> Self {
        TraceRecord {
            step,
            lr,
            loss,
            accuracy: None,
            group_norms: Vec::new(),
            regret: None,
            bound_rhs: None,
            noise_l2: None,
            tail_index: None,
            grad_sq_sum: None,
            params: None,
        }
    }
}

/// Gradient noise at one step: `u = full-batch gradient − minibatch
/// gradient`, plus its bias-corrected exponential moving average.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSample {
    pub step: u64,
    pub u: Tensor,
    pub u_smoothed: Tensor,
}

/// The constants appearing in the two convergence bounds.
///
/// `D` is the feasible box's l∞ diameter, `G` and `M` are run-wide maxima of
/// the gradient's l∞ and l1 norms, `L` is the smoothness constant of the
/// non-convex objective, and `gamma = beta1^2 / beta2` must stay below 1 for
/// either bound to apply.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundConstants {
    diameter: f64,
    grad_linf_max: f64,
    grad_l1_max: f64,
    smoothness: f64,
    alpha: f64,
    beta1: f64,
    beta2: f64,
    gamma: f64,
    dim: usize,
    horizon: u64,
}

impl BoundConstants {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        diameter: f64,
        grad_linf_max: f64,
        grad_l1_max: f64,
        smoothness: f64,
        alpha: f64,
        beta1: f64,
        beta2: f64,
        dim: usize,
        horizon: u64,
    ) -> Result<Self> {
        for (name, v) in [
            ("D", diameter),
            ("G", grad_linf_max),
            ("M", grad_l1_max),
            ("L", smoothness),
            ("alpha", alpha),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!(
                    "bound constant {name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(0.0..1.0).contains(&beta1) {
            return Err(Error::Domain(format!(
                "beta1 must be in [0, 1), got {beta1}"
            )));
        }
        if !(beta2 > 0.0 && beta2 < 1.0) {
            return Err(Error::Domain(format!(
                "beta2 must be in (0, 1), got {beta2}"
            )));
        }
        let gamma = beta1 * beta1 / beta2;
        if gamma >= 1.0 {
            return Err(Error::Domain(format!(
                "the bounds require gamma = beta1^2/beta2 < 1, got {gamma}"
            )));
        }
        if dim == 0 || horizon == 0 {
            return Err(Error::Domain(
                "bounds need dim >= 1 and horizon >= 1".into(),
            ));
        }
        Ok(BoundConstants {
            diameter,
            grad_linf_max,
            grad_l1_max,
            smoothness,
            alpha,
            beta1,
            beta2,
            gamma,
            dim,
            horizon,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    /// Same constants at a different horizon (for per-checkpoint bounds).
    pub fn at_horizon(&self, horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Domain("bounds need horizon >= 1".into()));
        }
        Ok(BoundConstants {
            horizon,
            ..self.clone()
        })
    }
}

/// Regret at the requested checkpoints: `R(T) = sum of the first T losses
/// minus the best fixed feasible point's total over the same prefix`.
/// `comparator_totals[j]` must hold that best fixed total for the prefix
/// ending at `checkpoints[j]`.
pub fn regret_curve(
    losses: &[f64],
    checkpoints: &[usize],
    comparator_totals: &[f64],
) -> Result<Vec<f64>> {
    if checkpoints.len() != comparator_totals.len() {
        return Err(Error::Domain(format!(
            "{} checkpoints but {} comparator totals",
            checkpoints.len(),
            comparator_totals.len()
        )));
    }
    for pair in checkpoints.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::Domain(format!(
                "checkpoints must be strictly increasing, saw {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    if let Some(&last) = checkpoints.last() {
        if last > losses.len() {
            return Err(Error::Domain(format!(
                "checkpoint {last} beyond trace length {}",
                losses.len()
            )));
        }
    }
    if checkpoints.first() == Some(&0) {
        return Err(Error::Domain("regret checkpoints start at T = 1".into()));
    }
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut running = 0.0;
    let mut consumed = 0usize;
    for (&t, &best) in checkpoints.iter().zip(comparator_totals.iter()) {
        for &loss in &losses[consumed..t] {
            running += loss;
        }
        consumed = t;
        out.push(running - best);
    }
    Ok(out)
}

/// Right-hand side of the convex regret bound:
///
/// ```text
/// D^2 sqrt(T) / (2 alpha (1 - beta1)) * sum_i sqrt(vhat_{T,i})
///   + alpha sqrt(1 + ln T) M / sqrt((1 - beta2)(1 - gamma)) * sum_i sqrt(sum_t g_{t,i}^2)
/// ```
///
/// `vhat_final` is the algorithm's bias-corrected second moment at the
/// horizon (transform included); `grad_sq_sum` holds per-coordinate sums of
/// squared raw gradients over the run.
pub fn regret_bound_rhs(
    k: &BoundConstants,
    vhat_final: &[f64],
    grad_sq_sum: &[f64],
) -> Result<f64> {
    check_coords(k, "vhat_final", vhat_final)?;
    check_coords(k, "grad_sq_sum", grad_sq_sum)?;
    let t = k.horizon as f64;
    let vhat_root_sum: f64 = vhat_final.iter().map(|v| v.sqrt()).sum();
    let first =
        k.diameter * k.diameter * t.sqrt() / (2.0 * k.alpha * (1.0 - k.beta1)) * vhat_root_sum;
    let grad_root_sum: f64 = grad_sq_sum.iter().map(|s| s.sqrt()).sum();
    let second = k.alpha * (1.0 + t.ln()).sqrt() * k.grad_l1_max
        / ((1.0 - k.beta2) * (1.0 - k.gamma)).sqrt()
        * grad_root_sum;
    Ok(first + second)
}

fn check_coords(k: &BoundConstants, name: &str, values: &[f64]) -> Result<()> {
    if values.len() != k.dim {
        return Err(Error::Domain(format!(
            "{name} has {} coordinates, constants say dim = {}",
            values.len(),
            k.dim
        )));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Domain(format!(
            "{name} must be finite and >= 0, got {v}"
        )));
    }
    Ok(())
}

/// Right-hand side of the non-convex stationarity bound:
///
/// ```text
/// 1 / (sqrt(T) M) * [ G/alpha (f(x1) - f(x*))
///   + G^3 M / (1 - beta1) * ||vhat0^{-1/2}||_1
///   + G^3 d / (4 L alpha (1 - beta1))
///   + G L d alpha (1 - beta1)(1 + ln T) / ((1 - beta2)(1 - gamma)) ]
/// ```
///
/// The bound's `vhat0` is undefined under the algorithm's `v0 = 0`, so
/// callers pass the first-step bias-corrected second moment as a surrogate
/// (see [`VHAT0_SURROGATE_NOTE`]); every entry must be strictly positive.
pub fn stationarity_bound_rhs(
    k: &BoundConstants,
    f_x1: f64,
    f_star: f64,
    vhat1: &[f64],
) -> Result<f64> {
    if !f_x1.is_finite() || !f_star.is_finite() || f_x1 < f_star {
        return Err(Error::Domain(format!(
            "need finite f(x1) >= f(x*), got f(x1) = {f_x1}, f(x*) = {f_star}"
        )));
    }
    if vhat1.len() != k.dim {
        return Err(Error::Domain(format!(
            "vhat has {} coordinates, constants say dim = {}",
            vhat1.len(),
            k.dim
        )));
    }
    if let Some(v) = vhat1.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(Error::Domain(format!(
            "the vhat0 surrogate must be strictly positive, got {v}"
        )));
    }
    let t = k.horizon as f64;
    let g = k.grad_linf_max;
    let d = k.dim as f64;
    let inv_root_l1: f64 = vhat1.iter().map(|v| 1.0 / v.sqrt()).sum();
    let bracket = g / k.alpha * (f_x1 - f_star)
        + g.powi(3) * k.grad_l1_max / (1.0 - k.beta1) * inv_root_l1
        + g.powi(3) * d / (4.0 * k.smoothness * k.alpha * (1.0 - k.beta1))
        + g * k.smoothness * d * k.alpha * (1.0 - k.beta1) * (1.0 + t.ln())
            / ((1.0 - k.beta2) * (1.0 - k.gamma));
    Ok(bracket / (t.sqrt() * k.grad_l1_max))
}

/// Recorded alongside any bound evaluation that used the first-step second
/// moment in place of the undefined `vhat0`.
pub const VHAT0_SURROGATE_NOTE: &str = "vhat0 undefined at v0 = 0; used first-step vhat instead";

/// Gradient noise `u = full − minibatch`, elementwise.
pub fn gradient_noise(full_grad: &Tensor, minibatch_grad: &Tensor) -> Result<Tensor> {
    elementwise(full_grad, minibatch_grad, ElementwiseOp::Sub, 1.0)
}

/// Bias-corrected exponential moving average of a noise history:
/// `(1 - beta1) / (1 - beta1^t) * sum_i beta1^{t-i} u_i` for `i = 1..=t`.
pub fn smoothed_noise(history: &[Tensor], beta1: f64) -> Result<Tensor> {
    if history.is_empty() {
        return Err(Error::Domain(
            "smoothed_noise needs at least one sample".into(),
        ));
    }
    if !(0.0..1.0).contains(&beta1) {
        return Err(Error::Domain(format!(
            "beta1 must be in [0, 1), got {beta1}"
        )));
    }
    let t = history.len();
    let mut acc = history[0].clone();
    for u in &history[1..] {
        acc.require_same_shape(u)?;
        for (a, x) in acc.data_mut().iter_mut().zip(u.data().iter()) {
            *a = *a * beta1 + x;
        }
    }
    // At t = 1 this is (1 - beta1)/(1 - beta1) = 1 exactly, so the output
    // is u1 itself.
    let coeff = (1.0 - beta1) / (1.0 - crate::optim::pow_u64(beta1, t as u64));
    for v in acc.data_mut() {
        *v *= coeff;
    }
    Ok(acc)
}

/// Hill estimator of the tail index over the `k` largest magnitudes:
/// `alpha_hat = k / sum_{j=1..k} ln(|x|_(j) / |x|_(k+1))`. Smaller values
/// mean heavier tails. Needs at least `k + 1` nonzero samples; a window of
/// equal magnitudes has no tail to measure and is rejected.
pub fn hill_tail_index(samples: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("hill estimator needs k >= 1".into()));
    }
    if let Some(v) = samples.iter().find(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("non-finite sample {v}")));
    }
    let mut mags: Vec<f64> = samples
        .iter()
        .map(|v| v.abs())
        .filter(|v| *v > 0.0)
        .collect();
    if mags.len() < k + 1 {
        return Err(Error::Domain(format!(
            "hill estimator with k = {k} needs at least {} nonzero samples, got {}",
            k + 1,
            mags.len()
        )));
    }
    mags.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let threshold = mags[k];
    let log_sum: f64 = mags[..k].iter().map(|x| (x / threshold).ln()).sum();
    if log_sum <= 0.0 {
        return Err(Error::Domain(
            "degenerate sample window: the k largest magnitudes all equal the threshold".into(),
        ));
    }
    Ok(k as f64 / log_sum)
}

/// Default Hill order statistic count: the top 10% of the sample, rounded up.
pub fn hill_default_k(n: usize) -> usize {
    n.div_ceil(10)
}

/// Early/late comparison of one group's gradient-l1 trace. The l1 norm is
/// the group's shared scaling coefficient, which is what the gradient-norm
/// trend claims are about.
#[derive(Debug, Clone, PartialEq)]
pub struct NormTrendSummary {
    pub group: String,
    pub early_mean: f64,
    pub late_mean: f64,
    /// `late_mean / early_mean`; below 1 means the norm decayed.
    pub ratio: f64,
}

/// Compares the first and last 10% of a trace's per-group gradient l1 norms.
/// Requires at least 20 records so both windows hold two or more steps.
pub fn summarize_norm_trace(trace: &[TraceRecord], group: &str) -> Result<NormTrendSummary> {
    if trace.len() < 20 {
        return Err(Error::Domain(format!(
            "norm-trace summary needs at least 20 records, got {}",
            trace.len()
        )));
    }
    let series: Vec<f64> = trace
        .iter()
        .map(|rec| {
            rec.group_norms
                .iter()
                .find(|gn| gn.group == group)
                .map(|gn| gn.grad_l1)
                .ok_or_else(|| Error::Domain(format!("group {group:?} not present in trace")))
        })
        .collect::<Result<_>>()?;
    let window = trace.len() / 10;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let early_mean = mean(&series[..window]);
    let late_mean = mean(&series[series.len() - window..]);
    if early_mean == 0.0 {
        return Err(Error::Domain(
            "early window mean is zero; ratio undefined".into(),
        ));
    }
    Ok(NormTrendSummary {
        group: group.to_string(),
        early_mean,
        late_mean,
        ratio: late_mean / early_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use approx::assert_relative_eq;

    #[test]
    fn regret_matches_hand_enumeration() {
        // Box [-1,1], costs (+1, -1, +1), always play x = 0: losses are all
        // zero and the best fixed point is x = -1 with total -1.
        let r = regret_curve(&[0.0, 0.0, 0.0], &[3], &[-1.0]).unwrap();
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn playing_the_comparator_gives_zero_regret() {
        let losses = vec![-1.0; 6];
        let totals = vec![-2.0, -4.0, -6.0];
        let r = regret_curve(&losses, &[2, 4, 6], &totals).unwrap();
        assert_eq!(r, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn regret_equals_bruteforce_prefix_sums() {
        let mut rng = SplitMix64::new(42);
        let losses: Vec<f64> = (0..100).map(|_| rng.next_in(-2.0, 2.0)).collect();
        let checkpoints: Vec<usize> = vec![1, 7, 40, 99, 100];
        let totals: Vec<f64> = checkpoints.iter().map(|&t| -0.01 * t as f64).collect();
        let curve = regret_curve(&losses, &checkpoints, &totals).unwrap();
        for (j, &t) in checkpoints.iter().enumerate() {
            let mut fresh = 0.0;
            for &l in &losses[..t] {
                fresh += l;
            }
            assert_eq!(curve[j], fresh - totals[j], "checkpoint {t}");
        }
    }

    #[test]
    fn regret_rejects_bad_checkpoints() {
        assert!(regret_curve(&[0.0; 3], &[4], &[0.0]).is_err());
        assert!(regret_curve(&[0.0; 3], &[2, 2], &[0.0, 0.0]).is_err());
        assert!(regret_curve(&[0.0; 3], &[0, 1], &[0.0, 0.0]).is_err());
        assert!(regret_curve(&[0.0; 3], &[1], &[0.0, 0.0]).is_err());
    }

    fn regret_bound_constants() -> BoundConstants {
        BoundConstants::new(2.0, 1.0, 1.0, 1.0, 0.1, 0.9, 0.999, 1, 1).unwrap()
    }

    #[test]
    fn regret_bound_zero_gradients_give_zero_bound() {
        let k = regret_bound_constants();
        assert_eq!(regret_bound_rhs(&k, &[0.0], &[0.0]).unwrap(), 0.0);
    }

    #[test]
    fn regret_bound_matches_hand_arithmetic() {
        // d=1, T=1, constant transformed gradient 1: vhat = 1 and the raw
        // gradient square-sum is 1. Evaluated term by term by hand:
        // 4/(2*0.1*0.1) + 0.1/sqrt(0.001*(1 - 0.81/0.999)) ~= 207.27029.
        let k = regret_bound_constants();
        let rhs = regret_bound_rhs(&k, &[1.0], &[1.0]).unwrap();
        assert_relative_eq!(rhs, 207.2702918, max_relative = 1e-9);
        let gamma = 0.9f64.powi(2) / 0.999;
        let independent = 4.0 * 1.0f64.sqrt() / (2.0 * 0.1 * (1.0 - 0.9))
            + 0.1 * 1.0 / (0.001 * (1.0 - gamma)).sqrt();
        assert_relative_eq!(rhs, independent, max_relative = 1e-12);
    }

    #[test]
    fn doubling_the_diameter_quadruples_the_first_term() {
        let base = regret_bound_constants();
        let doubled = BoundConstants::new(4.0, 1.0, 1.0, 1.0, 0.1, 0.9, 0.999, 1, 1).unwrap();
        // Second term switched off via zero raw-gradient sums.
        let small = regret_bound_rhs(&base, &[0.7], &[0.0]).unwrap();
        let large = regret_bound_rhs(&doubled, &[0.7], &[0.0]).unwrap();
        assert_eq!(large, 4.0 * small);
        // With the second term active the increase is strictly smaller.
        let small_full = regret_bound_rhs(&base, &[0.7], &[1.0]).unwrap();
        let large_full = regret_bound_rhs(&doubled, &[0.7], &[1.0]).unwrap();
        assert!(large_full - small_full == large - small);
    }

    fn stationarity_bound_constants(horizon: u64) -> BoundConstants {
        // Diameter is unused by the non-convex bound; any positive value.
        BoundConstants::new(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.5, 1, horizon).unwrap()
    }

    #[test]
    fn stationarity_bound_matches_hand_arithmetic() {
        // G=M=L=alpha=1, beta1=0, beta2=0.5, d=1, T=1, vhat surrogate 1,
        // f(x1)=f(x*): bracket = 0 + 1 + 1/4 + (1*1)/(0.5*1) = 3.25.
        let k = stationarity_bound_constants(1);
        let rhs = stationarity_bound_rhs(&k, 5.0, 5.0, &[1.0]).unwrap();
        assert_eq!(rhs, 3.25);
    }

    #[test]
    fn suboptimal_start_raises_only_the_first_term() {
        let k = stationarity_bound_constants(1);
        let base = stationarity_bound_rhs(&k, 5.0, 5.0, &[1.0]).unwrap();
        let lifted = stationarity_bound_rhs(&k, 6.0, 5.0, &[1.0]).unwrap();
        // The first bracket term is (G/alpha)(f(x1)-f(x*)) = 1 here, and the
        // prefactor is 1.
        assert_relative_eq!(lifted - base, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn stationarity_bound_decays_with_the_horizon() {
        let early =
            stationarity_bound_rhs(&stationarity_bound_constants(100), 5.0, 4.0, &[1.0]).unwrap();
        let late = stationarity_bound_rhs(&stationarity_bound_constants(10_000), 5.0, 4.0, &[1.0])
            .unwrap();
        assert!(
            late < early,
            "bound should decay log T / sqrt(T): {early} vs {late}"
        );
    }

    #[test]
    fn bound_preconditions_are_enforced() {
        // gamma = 0.99^2 / 0.5 > 1.
        assert!(BoundConstants::new(1.0, 1.0, 1.0, 1.0, 1.0, 0.99, 0.5, 1, 1).is_err());
        assert!(BoundConstants::new(0.0, 1.0, 1.0, 1.0, 1.0, 0.5, 0.9, 1, 1).is_err());
        assert!(BoundConstants::new(1.0, 1.0, 1.0, -2.0, 1.0, 0.5, 0.9, 1, 1).is_err());
        let k = stationarity_bound_constants(1);
        assert!(stationarity_bound_rhs(&k, 1.0, 2.0, &[1.0]).is_err());
        assert!(stationarity_bound_rhs(&k, 2.0, 1.0, &[0.0]).is_err());
        assert!(stationarity_bound_rhs(&k, 2.0, 1.0, &[1.0, 1.0]).is_err());
        assert!(regret_bound_rhs(&k, &[1.0], &[-1.0]).is_err());
    }

    #[test]
    fn bounds_are_nonnegative_on_random_valid_inputs() {
        let mut rng = SplitMix64::new(7);
        for _ in 0..200 {
            let beta1 = rng.next_in(0.0, 0.95);
            let beta2 = rng.next_in(beta1 * beta1 + 0.01, 1.0).min(0.9999);
            let k = BoundConstants::new(
                rng.next_in(0.1, 5.0),
                rng.next_in(0.1, 3.0),
                rng.next_in(0.1, 10.0),
                rng.next_in(0.1, 4.0),
                rng.next_in(0.001, 1.0),
                beta1,
                beta2,
                3,
                1 + rng.next_below(10_000),
            )
            .unwrap();
            let vhat: Vec<f64> = (0..3).map(|_| rng.next_in(0.0, 2.0)).collect();
            let gsq: Vec<f64> = (0..3).map(|_| rng.next_in(0.0, 5.0)).collect();
            assert!(regret_bound_rhs(&k, &vhat, &gsq).unwrap() >= 0.0);
            let f_star = rng.next_in(-3.0, 3.0);
            let f_x1 = f_star + rng.next_in(0.0, 2.0);
            let vhat_pos: Vec<f64> = (0..3).map(|_| rng.next_in(0.01, 2.0)).collect();
            assert!(stationarity_bound_rhs(&k, f_x1, f_star, &vhat_pos).unwrap() >= 0.0);
        }
    }

    #[test]
    fn noise_vanishes_on_the_full_batch_and_matches_hand_algebra() {
        let g = Tensor::from_vec(vec![0.25, -1.5]);
        assert_eq!(gradient_noise(&g, &g).unwrap().data(), &[0.0, 0.0]);
        // Two samples g1 = (1, -2), g2 = (0.5, 4); batch = sample 1 gives
        // u = (g1+g2)/2 - g1 = (g2-g1)/2.
        let g1 = Tensor::from_vec(vec![1.0, -2.0]);
        let full = Tensor::from_vec(vec![(1.0 + 0.5) / 2.0, (-2.0 + 4.0) / 2.0]);
        let u = gradient_noise(&full, &g1).unwrap();
        for (got, want) in u.data().iter().zip([(0.5 - 1.0) / 2.0, (4.0 + 2.0) / 2.0]) {
            assert_relative_eq!(*got, want, max_relative = 1e-15);
        }
        let bad = Tensor::from_vec(vec![1.0]);
        assert!(gradient_noise(&full, &bad).is_err());
    }

    #[test]
    fn noise_averages_to_zero_over_uniform_minibatches() {
        // Eight scalar per-sample gradients; minibatches of two drawn
        // uniformly. E[u] = 0, so the empirical mean should sit within
        // three standard errors of zero.
        let grads: Vec<f64> = vec![0.3, -1.2, 2.0, 0.7, -0.5, 1.4, -2.2, 0.1];
        let full: f64 = grads.iter().sum::<f64>() / grads.len() as f64;
        let full_t = Tensor::from_vec(vec![full]);
        let mut rng = SplitMix64::new(99);
        let draws = 1000;
        let mut us = Vec::with_capacity(draws);
        for _ in 0..draws {
            let mut idx: Vec<usize> = (0..grads.len()).collect();
            rng.shuffle(&mut idx);
            let mini = (grads[idx[0]] + grads[idx[1]]) / 2.0;
            let u = gradient_noise(&full_t, &Tensor::from_vec(vec![mini])).unwrap();
            us.push(u.data()[0]);
        }
        let mean = us.iter().sum::<f64>() / draws as f64;
        let var = us.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (draws - 1) as f64;
        let se = (var / draws as f64).sqrt();
        assert!(mean.abs() <= 3.0 * se, "mean {mean}, se {se}");
    }

    #[test]
    fn smoothing_is_the_identity_at_step_one_and_beta_zero() {
        let u1 = Tensor::from_vec(vec![0.3, -0.7]);
        let out = smoothed_noise(std::slice::from_ref(&u1), 0.9).unwrap();
        assert_eq!(out.data(), u1.data());
        let u2 = Tensor::from_vec(vec![2.0, 0.1]);
        let u3 = Tensor::from_vec(vec![-4.0, 5.0]);
        let out = smoothed_noise(&[u1, u2, u3.clone()], 0.0).unwrap();
        assert_eq!(out.data(), u3.data());
        assert!(smoothed_noise(&[], 0.5).is_err());
        assert!(smoothed_noise(&[u3], 1.0).is_err());
    }

    #[test]
    fn smoothing_matches_hand_arithmetic() {
        let hist = [Tensor::from_vec(vec![1.0]), Tensor::from_vec(vec![3.0])];
        let out = smoothed_noise(&hist, 0.5).unwrap();
        assert_relative_eq!(out.data()[0], 7.0 / 3.0, max_relative = 1e-15);
    }

    fn pareto2_samples(seed: u64, n: usize) -> Vec<f64> {
        // Inverse CDF of Pareto(alpha=2, x_m=1): x = u^{-1/2}.
        let mut rng = SplitMix64::new(seed);
        (0..n).map(|_| rng.next_f64().powf(-0.5)).collect()
    }

    #[test]
    fn hill_recovers_the_pareto_tail_index() {
        let n = 10_000;
        let samples = pareto2_samples(12345, n);
        let alpha = hill_tail_index(&samples, 1000).unwrap();
        assert!((1.7..=2.3).contains(&alpha), "alpha {alpha}");
        assert_eq!(hill_default_k(n), 1000);
        assert_eq!(hill_default_k(101), 11);
    }

    #[test]
    fn hill_is_scale_invariant() {
        let samples = pareto2_samples(7, 2000);
        let base = hill_tail_index(&samples, 200).unwrap();
        let scaled: Vec<f64> = samples.iter().map(|x| 3.7e-3 * x).collect();
        let rescaled = hill_tail_index(&scaled, 200).unwrap();
        assert_relative_eq!(base, rescaled, max_relative = 1e-12);
    }

    #[test]
    fn exponential_tails_read_lighter_than_pareto() {
        let pareto = hill_tail_index(&pareto2_samples(3, 10_000), 100).unwrap();
        let mut rng = SplitMix64::new(3);
        let exp: Vec<f64> = (0..10_000).map(|_| -rng.next_f64().ln()).collect();
        let exp_alpha = hill_tail_index(&exp, 100).unwrap();
        assert!(
            exp_alpha > pareto + 1.0,
            "exponential {exp_alpha} vs pareto {pareto}"
        );
    }

    #[test]
    fn hill_rejects_degenerate_inputs() {
        assert!(hill_tail_index(&[1.0, 2.0, 3.0], 0).is_err());
        assert!(hill_tail_index(&[1.0, 0.0, 0.0], 1).is_err());
        assert!(hill_tail_index(&[2.0, 2.0, 2.0, 2.0], 2).is_err());
        assert!(hill_tail_index(&[1.0, f64::NAN, 3.0], 1).is_err());
    }

    fn norm_trace(values: &[f64]) -> Vec<TraceRecord> {
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let mut rec = TraceRecord::new(i as u64 + 1, 0.1, 1.0);
                rec.group_norms.push(GroupNorms {
                    group: "layer0.weight".into(),
                    grad_l1: v,
                    grad_linf: v,
                });
                rec
            })
            .collect()
    }

    #[test]
    fn constant_norm_trace_has_unit_ratio() {
        let trace = norm_trace(&[0.37; 40]);
        let s = summarize_norm_trace(&trace, "layer0.weight").unwrap();
        assert_eq!(s.ratio, 1.0);
        assert_eq!(s.early_mean, s.late_mean);
    }

    #[test]
    fn halving_trace_trends_down() {
        let values: Vec<f64> = (0..100).map(|i| 8.0 * 0.5f64.powi(i)).collect();
        let s = summarize_norm_trace(&norm_trace(&values), "layer0.weight").unwrap();
        assert!(s.ratio < 1.0);
        assert!(s.late_mean < s.early_mean);
    }

    #[test]
    fn norm_summary_rejects_short_or_unknown_traces() {
        let trace = norm_trace(&[1.0; 19]);
        assert!(summarize_norm_trace(&trace, "layer0.weight").is_err());
        let trace = norm_trace(&[1.0; 25]);
        assert!(summarize_norm_trace(&trace, "layer9.bias").is_err());
    }
}
