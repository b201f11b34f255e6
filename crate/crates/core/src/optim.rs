//! Optimizers: AdaL, Adam, AMSGrad, and SGD with momentum.
//!
//! AdaL is Adam with one change. Before a gradient enters the moment
//! estimates, each parameter group's gradient is rescaled by its own l1 norm:
//!
//! ```text
//! ghat_t = ||g_t||_1 * g_t                      (per group)
//! m_t    = beta1 * m_{t-1} + (1 - beta1) * ghat_t
//! v_t    = beta2 * v_{t-1} + (1 - beta2) * ghat_t^2
//! mhat_t = m_t / (1 - beta1^t),  vhat_t = v_t / (1 - beta2^t)
//! x_{t+1} = P( x_t - alpha_t * mhat_t / (sqrt(vhat_t) + epsilon) )
//! ```
//!
//! where `P` clamps into the feasible box. The l1 coefficient amplifies
//! steps while gradients are large early in training and shrinks them as
//! gradients decay, without disturbing the sign pattern of the update.
//! With the transform forced to identity the same code path is exactly
//! Adam; AMSGrad additionally replaces `vhat` in the denominator by its
//! running elementwise maximum.
//!
//! Note the guarded denominator `mhat / (sqrt(vhat) + epsilon)`: epsilon is
//! added to the root rather than multiplying out `vhat^{-1/2} + epsilon`,
//! which keeps the zero-curvature case bounded instead of scaling the step
//! by `epsilon * mhat`.
//!
//! Steps are transactional: any rejected step (non-finite gradient, a step
//! that would produce non-finite parameters) leaves parameters and state
//! exactly as they were.

use crate::error::{Error, Result};
use crate::numerics::{l1_norm, ParamSet, Tensor};

/// Gradient pre-transform applied per group before the moment updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradTransform {
    /// `ghat = ||g||_1 * g`, the AdaL rescaling.
    L1,
    /// `ghat = g`; reduces the moment family to plain Adam/AMSGrad.
    Identity,
}

/// Applies the per-group transform. Each group is scaled by the l1 norm of
/// that group alone, never by a global norm.
pub fn transform_gradient(grads: &[Tensor], transform: GradTransform) -> Result<Vec<Tensor>> {
    match transform {
        GradTransform::Identity => Ok(grads.to_vec()),
        GradTransform::L1 => grads
            .iter()
            .map(|g| {
                let n = l1_norm(g)?;
                let data = g.data().iter().map(|x| n * x).collect();
                Tensor::new(g.shape().to_vec(), data)
            })
            .collect(),
    }
}

/// Decoupled-from-nothing classic weight decay: returns `g + wd * x` group
/// for group. The decayed gradient is what the transform and the moment
/// estimates see.
pub fn apply_weight_decay(
    grads: &[Tensor],
    params: &ParamSet,
    weight_decay: f64,
) -> Result<Vec<Tensor>> {
    params.check_grads(grads)?;
    Ok(params
        .groups()
        .iter()
        .zip(grads)
        .map(|(p, g)| {
            let data = p
                .value
                .data()
                .iter()
                .zip(g.data())
                .map(|(x, gi)| gi + weight_decay * x)
                .collect();
            Tensor::new(g.shape().to_vec(), data).expect("shape checked")
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleKind {
    /// `alpha_t = alpha / sqrt(t)`.
    InvSqrt,
    /// `alpha_t = alpha`.
    Constant,
    /// `alpha_t = alpha * factor^(number of milestones <= t)`.
    StepDecay,
}

/// Learning-rate schedule. Milestones are step indices (1-based), not epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub kind: ScheduleKind,
    pub milestones: Vec<u64>,
    pub factor: f64,
}

impl Schedule {
    pub fn inv_sqrt() -> Self {
        Schedule {
            kind: ScheduleKind::InvSqrt,
            milestones: Vec::new(),
            factor: 1.0,
        }
    }

    pub fn constant() -> Self {
        Schedule {
            kind: ScheduleKind::Constant,
            milestones: Vec::new(),
            factor: 1.0,
        }
    }

    pub fn step_decay(milestones: Vec<u64>, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "step_decay factor must be positive and finite, got {factor}"
            )));
        }
        Ok(Schedule {
            kind: ScheduleKind::StepDecay,
            milestones,
            factor,
        })
    }
}

/// Learning rate for step `t` (1-based).
pub fn lr_at(cfg: &OptConfig, t: u64) -> Result<f64> {
    if t == 0 {
        return Err(Error::ZeroStep);
    }
    let s = &cfg.schedule;
    Ok(match s.kind {
        ScheduleKind::InvSqrt => cfg.alpha / (t as f64).sqrt(),
        ScheduleKind::Constant => cfg.alpha,
        ScheduleKind::StepDecay => {
            let decays = s.milestones.iter().filter(|m| **m <= t).count();
            cfg.alpha * pow_u64(s.factor, decays as u64)
        }
    })
}

/// Shared optimizer hyperparameters. Construction validates ranges; the
/// struct is immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct OptConfig {
    alpha: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    weight_decay: f64,
    pub bias_correction: bool,
    pub transform: GradTransform,
    pub schedule: Schedule,
}

impl OptConfig {
    /// Config with the conventional defaults: beta1 = 0.9, beta2 = 0.999,
    /// epsilon = 1e-8, no weight decay, bias correction on, l1 transform,
    /// inverse-sqrt schedule.
    pub fn new(alpha: f64) -> Result<Self> {
        Self::full(alpha, 0.9, 0.999, 1e-8, 0.0)
    }

    pub fn full(
        alpha: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        weight_decay: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidHyperparameter(format!(
                    "{name} must lie in [0, 1), got {b}"
                )));
            }
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::InvalidHyperparameter(format!(
                "weight_decay must be nonnegative, got {weight_decay}"
            )));
        }
        Ok(OptConfig {
            alpha,
            beta1,
            beta2,
            epsilon,
            weight_decay,
            bias_correction: true,
            transform: GradTransform::L1,
            schedule: Schedule::inv_sqrt(),
        })
    }

    pub fn with_transform(mut self, transform: GradTransform) -> Self {
        self.transform = transform;
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_bias_correction(mut self, on: bool) -> Self {
        self.bias_correction = on;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta1(&self) -> f64 {
        self.beta1
    }
    pub fn beta2(&self) -> f64 {
        self.beta2
    }
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
    pub fn weight_decay(&self) -> f64 {
        self.weight_decay
    }
}

/// Axis-aligned feasible region. `Bounds` stores per-coordinate limits over
/// the flattened (group-order) parameter vector; individual limits may be
/// infinite to leave that side open.
#[derive(Debug, Clone, PartialEq)]
pub enum FeasibleBox {
    Unbounded,
    Bounds { lower: Vec<f64>, upper: Vec<f64> },
}

impl FeasibleBox {
    pub fn unbounded() -> Self {
        FeasibleBox::Unbounded
    }

    /// The cube `[lo, hi]^dim`.
    pub fn interval(lo: f64, hi: f64, dim: usize) -> Result<Self> {
        Self::from_bounds(vec![lo; dim], vec![hi; dim])
    }

    pub fn from_bounds(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::BoxDimMismatch {
                box_dim: lower.len(),
                point_dim: upper.len(),
            });
        }
        for (i, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || lo > hi {
                return Err(Error::MalformedBox {
                    index: i,
                    lower: *lo,
                    upper: *hi,
                });
            }
        }
        Ok(FeasibleBox::Bounds { lower, upper })
    }

    /// Number of constrained coordinates, or `None` when unbounded.
    pub fn dim(&self) -> Option<usize> {
        match self {
            FeasibleBox::Unbounded => None,
            FeasibleBox::Bounds { lower, .. } => Some(lower.len()),
        }
    }

    /// Largest range among coordinates bounded on both sides — the l-infinity
    /// diameter when the box is fully bounded. `None` if nothing is bounded.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            FeasibleBox::Unbounded => None,
            FeasibleBox::Bounds { lower, upper } => {
                let mut best: Option<f64> = None;
                for (lo, hi) in lower.iter().zip(upper) {
                    if lo.is_finite() && hi.is_finite() {
                        let r = hi - lo;
                        best = Some(best.map_or(r, |b: f64| b.max(r)));
                    }
                }
                best
            }
        }
    }

    fn check_dim(&self, point_dim: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != point_dim => Err(Error::BoxDimMismatch {
                box_dim: d,
                point_dim,
            }),
            _ => Ok(()),
        }
    }

    /// Errors with the offending coordinate if `x` lies outside the box.
    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        self.check_dim(x.len())?;
        if let FeasibleBox::Bounds { lower, upper } = self {
            for (i, xi) in x.iter().enumerate() {
                if *xi < lower[i] || *xi > upper[i] {
                    return Err(Error::OutsideBox { index: i });
                }
            }
        }
        Ok(())
    }

    fn clamp_at(&self, i: usize, x: f64) -> f64 {
        match self {
            FeasibleBox::Unbounded => x,
            FeasibleBox::Bounds { lower, upper } => {
                if x < lower[i] {
                    lower[i]
                } else if x > upper[i] {
                    upper[i]
                } else {
                    x
                }
            }
        }
    }
}

/// Projection onto a box under a positive diagonal metric. For axis-aligned
/// boxes the metric-weighted projection separates per coordinate, so the
/// result is a plain clamp whatever the (validated) metric is.
pub fn project(x: &Tensor, metric_diag: &Tensor, feasible: &FeasibleBox) -> Result<Tensor> {
    if x.shape() != metric_diag.shape() {
        return Err(Error::ShapeMismatch {
            expected: x.shape().to_vec(),
            got: metric_diag.shape().to_vec(),
        });
    }
    if let Some((index, value)) = metric_diag
        .data()
        .iter()
        .enumerate()
        .find(|(_, m)| (**m).partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater))
    {
        return Err(Error::NonPositiveMetric {
            index,
            value: *value,
        });
    }
    feasible.check_dim(x.len())?;
    let data = x
        .data()
        .iter()
        .enumerate()
        .map(|(i, xi)| feasible.clamp_at(i, *xi))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

/// Mutable optimizer state.
///
/// `m` and `v` hold the *decay-weighted sums* `sum_i beta^(t-i) ghat_i`
/// (and squares); the conventional exponential moving averages are these
/// sums scaled by `1 - beta`. Keeping the sums unscaled lets bias
/// correction be applied as the single factor `(1 - beta) / (1 - beta^t)`,
/// which is exactly 1.0 at t = 1 — so the first corrected moment equals the
/// first transformed gradient bit for bit, with no rounding detour through
/// multiply-then-divide.
#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    vmax: Option<Vec<Tensor>>,
    momentum_buf: Option<Vec<Tensor>>,
}

impl OptState {
    /// Fresh state for the moment family (AdaL/Adam): `m = v = 0`, step 0.
    pub fn new(params: &ParamSet) -> Self {
        let zeros: Vec<Tensor> = params
            .groups()
            .iter()
            .map(|g| g.value.zeros_like())
            .collect();
        OptState {
            step: 0,
            m: zeros.clone(),
            v: zeros,
            vmax: None,
            momentum_buf: None,
        }
    }

    /// State with the AMSGrad running-maximum buffer allocated.
    pub fn with_vmax(params: &ParamSet) -> Self {
        let mut s = Self::new(params);
        s.vmax = Some(
            params
                .groups()
                .iter()
                .map(|g| g.value.zeros_like())
                .collect(),
        );
        s
    }

    /// State with the SGD velocity buffer allocated.
    pub fn with_momentum(params: &ParamSet) -> Self {
        let mut s = Self::new(params);
        s.momentum_buf = Some(
            params
                .groups()
                .iter()
                .map(|g| g.value.zeros_like())
                .collect(),
        );
        s
    }

    /// Number of accepted steps so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    /// Decay-weighted first-moment sums (see the type docs for scaling).
    pub fn m(&self) -> &[Tensor] {
        &self.m
    }

    /// Decay-weighted second-moment sums.
    pub fn v(&self) -> &[Tensor] {
        &self.v
    }

    pub fn vmax(&self) -> Option<&[Tensor]> {
        self.vmax.as_deref()
    }

    pub fn momentum_buf(&self) -> Option<&[Tensor]> {
        self.momentum_buf.as_deref()
    }

    /// The `(mhat, vhat)` pair the next update would divide through — bias
    /// corrected when the config says so, plain EMA moments otherwise.
    /// Requires at least one accepted step.
    pub fn bias_corrected_moments(&self, cfg: &OptConfig) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        if self.step == 0 {
            return Err(Error::ZeroStep);
        }
        let (cm, cv) = moment_coefficients(cfg, self.step);
        let scale = |ts: &[Tensor], c: f64| -> Vec<Tensor> {
            ts.iter()
                .map(|t| {
                    let data = t.data().iter().map(|x| c * x).collect();
                    Tensor::new(t.shape().to_vec(), data).expect("same shape")
                })
                .collect()
        };
        Ok((scale(&self.m, cm), scale(&self.v, cv)))
    }
}

/// `base^exp` by binary exponentiation; `base^1` is exactly `base`.
pub(crate) fn pow_u64(base: f64, mut exp: u64) -> f64 {
    let mut result = 1.0;
    let mut b = base;
    while exp > 0 {
        if exp & 1 == 1 {
            result *= b;
        }
        b *= b;
        exp >>= 1;
    }
    result
}

/// Per-step scaling factors turning the stored decay-weighted sums into
/// (optionally bias-corrected) moments.
fn moment_coefficients(cfg: &OptConfig, t: u64) -> (f64, f64) {
    let base1 = 1.0 - cfg.beta1;
    let base2 = 1.0 - cfg.beta2;
    if cfg.bias_correction {
        (
            base1 / (1.0 - pow_u64(cfg.beta1, t)),
            base2 / (1.0 - pow_u64(cfg.beta2, t)),
        )
    } else {
        (base1, base2)
    }
}

/// Standalone bias correction: `m / (1 - beta1^t)`, `v / (1 - beta2^t)`
/// elementwise, for conventionally scaled moment tensors.
pub fn bias_correct(
    m: &Tensor,
    v: &Tensor,
    t: u64,
    beta1: f64,
    beta2: f64,
) -> Result<(Tensor, Tensor)> {
    if t == 0 {
        return Err(Error::ZeroStep);
    }
    if m.shape() != v.shape() {
        return Err(Error::ShapeMismatch {
            expected: m.shape().to_vec(),
            got: v.shape().to_vec(),
        });
    }
    for (name, b) in [("beta1", beta1), ("beta2", beta2)] {
        if !(0.0..1.0).contains(&b) {
            return Err(Error::InvalidHyperparameter(format!(
                "{name} must lie in [0, 1), got {b}"
            )));
        }
    }
    let correct = |t_: &Tensor, beta: f64| {
        let denom = 1.0 - pow_u64(beta, t);
        let data = t_.data().iter().map(|x| x / denom).collect();
        Tensor::new(t_.shape().to_vec(), data).expect("same shape")
    };
    Ok((correct(m, beta1), correct(v, beta2)))
}

/// One AdaL step. Uses `cfg.transform` (l1 by default); with the transform
/// set to identity this is exactly [`step_adam`].
pub fn step_adal(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut OptState,
    cfg: &OptConfig,
    feasible: &FeasibleBox,
) -> Result<()> {
    step_moment_family(params, grads, state, cfg, feasible, cfg.transform, false)
}

/// One Adam step (identity transform regardless of `cfg.transform`).
pub fn step_adam(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut OptState,
    cfg: &OptConfig,
    feasible: &FeasibleBox,
) -> Result<()> {
    step_moment_family(
        params,
        grads,
        state,
        cfg,
        feasible,
        GradTransform::Identity,
        false,
    )
}

/// One AMSGrad step: Adam with the denominator taken from the running
/// elementwise maximum of `vhat`. Requires state built by
/// [`OptState::with_vmax`].
pub fn step_amsgrad(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut OptState,
    cfg: &OptConfig,
    feasible: &FeasibleBox,
) -> Result<()> {
    step_moment_family(
        params,
        grads,
        state,
        cfg,
        feasible,
        GradTransform::Identity,
        true,
    )
}

/// One SGD step with (optional) heavyball momentum on the raw weight-decayed
/// gradient: `buf = momentum * buf + g`, `x -= alpha_t * buf`. With
/// `momentum == 0` this is plain SGD.
pub fn step_sgd(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut OptState,
    cfg: &OptConfig,
    feasible: &FeasibleBox,
    momentum: f64,
) -> Result<()> {
    if !(0.0..1.0).contains(&momentum) {
        return Err(Error::InvalidHyperparameter(format!(
            "momentum must lie in [0, 1), got {momentum}"
        )));
    }
    params.check_grads(grads)?;
    check_finite_grads(params, grads)?;
    feasible.check_dim(params.total_len())?;
    if momentum > 0.0 && state.momentum_buf.is_none() {
        return Err(Error::MissingMomentumBuffer);
    }

    let t = state.step + 1;
    let lr = lr_at(cfg, t)?;

    let mut new_params: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut new_buf: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (gi, group) in params.groups().iter().enumerate() {
        let x = group.value.data();
        let g = grads[gi].data();
        let buf_old = state.momentum_buf.as_ref().map(|b| b[gi].data());
        let mut xs = Vec::with_capacity(x.len());
        let mut bs = Vec::with_capacity(x.len());
        for j in 0..x.len() {
            let gd = g[j] + cfg.weight_decay * x[j];
            let dir = match buf_old {
                Some(old) => {
                    let b = momentum * old[j] + gd;
                    bs.push(b);
                    b
                }
                None => gd,
            };
            xs.push(feasible.clamp_at(offset + j, x[j] - lr * dir));
        }
        offset += x.len();
        new_params.push(xs);
        new_buf.push(bs);
    }
    commit_step(
        params,
        state,
        t,
        new_params,
        None,
        None,
        None,
        Some(new_buf),
    )
}

fn check_finite_grads(params: &ParamSet, grads: &[Tensor]) -> Result<()> {
    for (g, t) in params.groups().iter().zip(grads) {
        if !t.all_finite() {
            return Err(Error::NonFiniteGradient {
                group: g.name.clone(),
            });
        }
    }
    Ok(())
}

fn step_moment_family(
    params: &mut ParamSet,
    grads: &[Tensor],
    state: &mut OptState,
    cfg: &OptConfig,
    feasible: &FeasibleBox,
    transform: GradTransform,
    amsgrad: bool,
) -> Result<()> {
    params.check_grads(grads)?;
    check_finite_grads(params, grads)?;
    feasible.check_dim(params.total_len())?;
    if amsgrad && state.vmax.is_none() {
        return Err(Error::MissingVmaxBuffer);
    }

    let t = state.step + 1;
    let lr = lr_at(cfg, t)?;
    let (cm, cv) = moment_coefficients(cfg, t);

    // Compute into fresh buffers; commit only after the finiteness check so
    // a rejected step leaves parameters and state untouched.
    let mut new_params: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut new_m: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut new_v: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut new_vmax: Vec<Vec<f64>> = Vec::with_capacity(params.len());
    let mut offset = 0;
    for (gi, group) in params.groups().iter().enumerate() {
        let x = group.value.data();
        let g = grads[gi].data();
        let m_old = state.m[gi].data();
        let v_old = state.v[gi].data();
        let vmax_old = state.vmax.as_ref().map(|vm| vm[gi].data());

        // Weight decay feeds the transform: the l1 coefficient sees the
        // same gradient the moments do.
        let mut ghat: Vec<f64> = x
            .iter()
            .zip(g)
            .map(|(xi, gj)| gj + cfg.weight_decay * xi)
            .collect();
        if transform == GradTransform::L1 {
            let n: f64 = ghat.iter().map(|e| e.abs()).sum();
            for e in &mut ghat {
                *e *= n;
            }
        }

        let mut xs = Vec::with_capacity(x.len());
        let mut ms = Vec::with_capacity(x.len());
        let mut vs = Vec::with_capacity(x.len());
        let mut vmaxs = Vec::with_capacity(if amsgrad { x.len() } else { 0 });
        for j in 0..x.len() {
            let m = cfg.beta1 * m_old[j] + ghat[j];
            let v = cfg.beta2 * v_old[j] + ghat[j] * ghat[j];
            let mhat = cm * m;
            let vhat = cv * v;
            let denom_sq = if amsgrad {
                let vm = vmax_old.expect("checked above")[j].max(vhat);
                vmaxs.push(vm);
                vm
            } else {
                vhat
            };
            let step = lr * mhat / (denom_sq.sqrt() + cfg.epsilon);
            xs.push(feasible.clamp_at(offset + j, x[j] - step));
            ms.push(m);
            vs.push(v);
        }
        offset += x.len();
        new_params.push(xs);
        new_m.push(ms);
        new_v.push(vs);
        if amsgrad {
            new_vmax.push(vmaxs);
        }
    }
    commit_step(
        params,
        state,
        t,
        new_params,
        Some(new_m),
        Some(new_v),
        if amsgrad { Some(new_vmax) } else { None },
        None,
    )
}

/// Validates finiteness of the prospective parameters, then writes
/// everything back. Only called with buffers whose shapes mirror `params`.
#[allow(clippy::too_many_arguments)]
fn commit_step(
    params: &mut ParamSet,
    state: &mut OptState,
    t: u64,
    new_params: Vec<Vec<f64>>,
    new_m: Option<Vec<Vec<f64>>>,
    new_v: Option<Vec<Vec<f64>>>,
    new_vmax: Option<Vec<Vec<f64>>>,
    new_buf: Option<Vec<Vec<f64>>>,
) -> Result<()> {
    for (group, xs) in params.groups().iter().zip(&new_params) {
        if !xs.iter().all(|x| x.is_finite()) {
            return Err(Error::StepDiverged {
                group: group.name.clone(),
            });
        }
    }
    for (group, xs) in params.groups_mut().iter_mut().zip(new_params) {
        group.value.data_mut().copy_from_slice(&xs);
    }
    let write = |dst: &mut [Tensor], src: Vec<Vec<f64>>| {
        for (d, s) in dst.iter_mut().zip(src) {
            d.data_mut().copy_from_slice(&s);
        }
    };
    if let Some(m) = new_m {
        write(&mut state.m, m);
    }
    if let Some(v) = new_v {
        write(&mut state.v, v);
    }
    if let Some(vm) = new_vmax {
        write(state.vmax.as_mut().expect("amsgrad state"), vm);
    }
    if let Some(b) = new_buf {
        if let Some(buf) = state.momentum_buf.as_mut() {
            write(buf, b);
        }
    }
    state.step = t;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    fn single(data: Vec<f64>) -> ParamSet {
        ParamSet::single("x", data)
    }

    fn grad(data: Vec<f64>) -> Vec<Tensor> {
        vec![Tensor::from_vec(data)]
    }

    #[test]
    fn transform_fixed_point_at_unit_l1_norm() {
        let g = grad(vec![0.5, -0.5]);
        let out = transform_gradient(&g, GradTransform::L1).unwrap();
        assert_eq!(out[0].data(), &[0.5, -0.5]);
    }

    #[test]
    fn transform_scales_by_group_l1_norm() {
        let g = grad(vec![3.0, -4.0]);
        let out = transform_gradient(&g, GradTransform::L1).unwrap();
        assert_eq!(out[0].data(), &[21.0, -28.0]);
    }

    #[test]
    fn transform_is_per_group_not_global() {
        let g = vec![
            Tensor::from_vec(vec![1.0, 1.0]),
            Tensor::from_vec(vec![10.0]),
        ];
        let out = transform_gradient(&g, GradTransform::L1).unwrap();
        assert_eq!(out[0].data(), &[2.0, 2.0]);
        assert_eq!(out[1].data(), &[100.0]);
    }

    proptest! {
        // transform(c g) = c |c| transform(g): degree-2 absolute homogeneity.
        #[test]
        fn transform_homogeneity(
            data in proptest::collection::vec(-100.0..100.0_f64, 1..16),
            c in -10.0..10.0_f64,
        ) {
            let base = transform_gradient(&grad(data.clone()), GradTransform::L1).unwrap();
            let scaled_in = grad(data.iter().map(|x| c * x).collect());
            let scaled = transform_gradient(&scaled_in, GradTransform::L1).unwrap();
            for (a, b) in scaled[0].data().iter().zip(base[0].data()) {
                let expect = c * c.abs() * b;
                prop_assert!((a - expect).abs() <= 1e-12 * expect.abs().max(1e-12));
            }
        }
    }

    #[test]
    fn weight_decay_example() {
        let params = single(vec![2.0]);
        let out = apply_weight_decay(&grad(vec![1.0]), &params, 0.5).unwrap();
        assert_eq!(out[0].data(), &[2.0]);
    }

    #[test]
    fn lr_schedules() {
        let inv = OptConfig::new(0.1).unwrap();
        assert_eq!(lr_at(&inv, 1).unwrap(), 0.1);
        assert_eq!(lr_at(&inv, 4).unwrap(), 0.05);
        assert!(matches!(lr_at(&inv, 0), Err(Error::ZeroStep)));

        let cst = OptConfig::new(0.1)
            .unwrap()
            .with_schedule(Schedule::constant());
        assert_eq!(lr_at(&cst, 123).unwrap(), 0.1);

        let dec = OptConfig::new(0.01)
            .unwrap()
            .with_schedule(Schedule::step_decay(vec![50, 100], 0.1).unwrap());
        assert_eq!(lr_at(&dec, 49).unwrap(), 0.01);
        let at_120 = lr_at(&dec, 120).unwrap();
        assert!((at_120 - 1e-4).abs() <= 1e-12 * 1e-4, "got {at_120}");
        // the decay applies at the milestone step itself
        assert!((lr_at(&dec, 50).unwrap() - 1e-3).abs() <= 1e-12);
    }

    #[test]
    fn schedule_rejects_bad_factor() {
        assert!(Schedule::step_decay(vec![10], 0.0).is_err());
        assert!(Schedule::step_decay(vec![10], -1.0).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(OptConfig::new(0.0).is_err());
        assert!(OptConfig::full(0.1, 1.0, 0.999, 1e-8, 0.0).is_err());
        assert!(OptConfig::full(0.1, -0.1, 0.999, 1e-8, 0.0).is_err());
        assert!(OptConfig::full(0.1, 0.9, 1.0, 1e-8, 0.0).is_err());
        assert!(OptConfig::full(0.1, 0.9, 0.999, 0.0, 0.0).is_err());
        assert!(OptConfig::full(0.1, 0.9, 0.999, 1e-8, -1.0).is_err());
    }

    #[test]
    fn bias_correct_two_step_example() {
        // constant ghat = 1, beta1 = 0.9: m2 = 0.19, corrected back to 1.
        let m = Tensor::from_vec(vec![0.9 * 0.1 + 0.1 * 1.0]);
        let v = Tensor::from_vec(vec![0.0]);
        let (mhat, _) = bias_correct(&m, &v, 2, 0.9, 0.999).unwrap();
        assert!((mhat.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bias_correct_first_step_is_exact_for_power_of_two_moments() {
        // With power-of-two gradient entries the multiply and divide by
        // (1 - beta) are both exact, so t = 1 must recover ghat bitwise.
        for beta1 in [0.0, 0.5, 0.9, 0.999] {
            for beta2 in [0.0, 0.5, 0.9, 0.999] {
                let ghat = [0.5, -0.25, 2.0];
                let m = Tensor::from_vec(ghat.iter().map(|g| (1.0 - beta1) * g).collect());
                let v = Tensor::from_vec(ghat.iter().map(|g| (1.0 - beta2) * g * g).collect());
                let (mhat, vhat) = bias_correct(&m, &v, 1, beta1, beta2).unwrap();
                for (a, g) in mhat.data().iter().zip(&ghat) {
                    assert_eq!(*a, *g);
                }
                for (a, g) in vhat.data().iter().zip(&ghat) {
                    assert_eq!(*a, g * g);
                }
            }
        }
    }

    #[test]
    fn bias_correct_rejects_step_zero() {
        let z = Tensor::from_vec(vec![0.0]);
        assert!(matches!(
            bias_correct(&z, &z, 0, 0.9, 0.999),
            Err(Error::ZeroStep)
        ));
    }

    #[test]
    fn first_step_moments_equal_transformed_gradient_exactly() {
        // Via the optimizer path this holds for arbitrary gradients: the
        // stored sums are unscaled, and the correction factor at t = 1 is
        // the exact quotient b/b = 1.0.
        let mut rng = SplitMix64::new(99);
        for beta1 in [0.0, 0.5, 0.9, 0.999] {
            for beta2 in [0.0, 0.5, 0.9, 0.999] {
                let g: Vec<f64> = (0..6).map(|_| rng.next_in(-3.0, 3.0)).collect();
                let mut params = single(vec![0.0; 6]);
                let mut state = OptState::new(&params);
                let cfg = OptConfig::full(0.1, beta1, beta2, 1e-8, 0.0).unwrap();
                let ghat = transform_gradient(&grad(g.clone()), GradTransform::L1).unwrap();
                step_adal(
                    &mut params,
                    &grad(g),
                    &mut state,
                    &cfg,
                    &FeasibleBox::unbounded(),
                )
                .unwrap();
                let (mhat, vhat) = state.bias_corrected_moments(&cfg).unwrap();
                for j in 0..6 {
                    assert_eq!(mhat[0].data()[j], ghat[0].data()[j], "beta1={beta1}");
                    assert_eq!(
                        vhat[0].data()[j],
                        ghat[0].data()[j] * ghat[0].data()[j],
                        "beta2={beta2}"
                    );
                }
            }
        }
    }

    #[test]
    fn adal_first_step_hand_case() {
        // x = (0,0), g = (0.5,-0.5): unit l1 norm, so ghat = g, mhat = g,
        // vhat = (0.25, 0.25), and the step is alpha * 0.5/(0.5 + eps).
        let mut params = single(vec![0.0, 0.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        step_adal(
            &mut params,
            &grad(vec![0.5, -0.5]),
            &mut state,
            &cfg,
            &FeasibleBox::unbounded(),
        )
        .unwrap();
        let x = params.groups()[0].value.data();
        assert!((x[0] + 0.099999998).abs() < 1e-12, "got {}", x[0]);
        assert!((x[1] - 0.099999998).abs() < 1e-12, "got {}", x[1]);
        assert_eq!(state.step(), 1);
    }

    #[test]
    fn zero_gradients_leave_everything_at_zero() {
        let mut params = single(vec![1.0, -2.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        for _ in 0..10 {
            step_adal(
                &mut params,
                &grad(vec![0.0, 0.0]),
                &mut state,
                &cfg,
                &FeasibleBox::unbounded(),
            )
            .unwrap();
        }
        assert_eq!(params.groups()[0].value.data(), &[1.0, -2.0]);
        assert_eq!(state.m()[0].data(), &[0.0, 0.0]);
        assert_eq!(state.v()[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn adal_with_identity_transform_is_adam_bitwise() {
        let mut rng = SplitMix64::new(7);
        let init: Vec<f64> = (0..8).map(|_| rng.next_in(-1.0, 1.0)).collect();
        let mut pa = single(init.clone());
        let mut pb = single(init);
        let mut sa = OptState::new(&pa);
        let mut sb = OptState::new(&pb);
        let cfg_a = OptConfig::new(0.01)
            .unwrap()
            .with_transform(GradTransform::Identity);
        let cfg_b = OptConfig::new(0.01).unwrap();
        for _ in 0..100 {
            let g: Vec<f64> = (0..8).map(|_| rng.next_in(-2.0, 2.0)).collect();
            step_adal(
                &mut pa,
                &grad(g.clone()),
                &mut sa,
                &cfg_a,
                &FeasibleBox::unbounded(),
            )
            .unwrap();
            step_adam(
                &mut pb,
                &grad(g),
                &mut sb,
                &cfg_b,
                &FeasibleBox::unbounded(),
            )
            .unwrap();
            assert_eq!(pa.groups()[0].value.data(), pb.groups()[0].value.data());
        }
    }

    #[test]
    fn rejects_non_finite_gradients_without_touching_state() {
        let mut params = single(vec![1.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        step_adal(
            &mut params,
            &grad(vec![1.0]),
            &mut state,
            &cfg,
            &FeasibleBox::unbounded(),
        )
        .unwrap();
        let params_before = params.clone();
        let state_before = state.clone();
        let err = step_adal(
            &mut params,
            &grad(vec![f64::NAN]),
            &mut state,
            &cfg,
            &FeasibleBox::unbounded(),
        );
        assert!(matches!(err, Err(Error::NonFiniteGradient { .. })));
        assert_eq!(params, params_before);
        assert_eq!(state, state_before);
    }

    #[test]
    fn overflowing_step_is_rejected_atomically() {
        // |g| = 1e300 squares past f64::MAX through the l1 transform; the
        // update becomes non-finite and must be refused wholesale.
        let mut params = single(vec![0.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        let before = state.clone();
        let err = step_adal(
            &mut params,
            &grad(vec![1e300]),
            &mut state,
            &cfg,
            &FeasibleBox::unbounded(),
        );
        assert!(matches!(err, Err(Error::StepDiverged { .. })));
        assert_eq!(state, before);
        assert_eq!(params.groups()[0].value.data(), &[0.0]);
    }

    #[test]
    fn amsgrad_requires_vmax_buffer() {
        let mut params = single(vec![0.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        let err = step_amsgrad(
            &mut params,
            &grad(vec![1.0]),
            &mut state,
            &cfg,
            &FeasibleBox::unbounded(),
        );
        assert!(matches!(err, Err(Error::MissingVmaxBuffer)));
    }

    #[test]
    fn amsgrad_vmax_tracks_constant_gradient_vhat() {
        // Constant gradients make vhat constant (bias correction cancels the
        // geometric ramp), so vmax == vhat at every step up to rounding.
        let mut params = single(vec![0.0, 0.0]);
        let mut state = OptState::with_vmax(&params);
        let cfg = OptConfig::new(0.01)
            .unwrap()
            .with_transform(GradTransform::Identity);
        for _ in 0..20 {
            step_amsgrad(
                &mut params,
                &grad(vec![0.3, -0.7]),
                &mut state,
                &cfg,
                &FeasibleBox::unbounded(),
            )
            .unwrap();
            let (_, vhat) = state.bias_corrected_moments(&cfg).unwrap();
            let vmax = &state.vmax().unwrap()[0];
            for (a, b) in vmax.data().iter().zip(vhat[0].data()) {
                assert!((a - b).abs() <= 1e-12 * b.abs());
                assert!(a >= b, "vmax dominates vhat exactly");
            }
        }
    }

    #[test]
    fn amsgrad_denominator_dominates_adam_on_shared_gradient_trace() {
        // Same fixed gradient sequence into both optimizers: vhat sequences
        // coincide, so sqrt(vmax) + eps >= sqrt(vhat) + eps coordinatewise.
        let mut rng = SplitMix64::new(31);
        let mut pa = single(vec![0.0; 4]);
        let mut pb = single(vec![0.0; 4]);
        let mut sa = OptState::with_vmax(&pa);
        let mut sb = OptState::new(&pb);
        let cfg = OptConfig::new(0.01)
            .unwrap()
            .with_transform(GradTransform::Identity);
        for _ in 0..200 {
            let g: Vec<f64> = (0..4).map(|_| rng.next_gaussian()).collect();
            step_amsgrad(
                &mut pa,
                &grad(g.clone()),
                &mut sa,
                &cfg,
                &FeasibleBox::unbounded(),
            )
            .unwrap();
            step_adam(&mut pb, &grad(g), &mut sb, &cfg, &FeasibleBox::unbounded()).unwrap();
            let (_, vhat) = sb.bias_corrected_moments(&cfg).unwrap();
            for (vm, vh) in sa.vmax().unwrap()[0].data().iter().zip(vhat[0].data()) {
                assert!(vm >= vh);
            }
        }
    }

    #[test]
    fn sgd_momentum_follows_geometric_series() {
        // Constant gradient c and constant lr: buf_k = c (1 - mu^k)/(1 - mu),
        // approaching c/(1 - mu) = 10 c for mu = 0.9.
        let c = 0.4;
        let mu = 0.9_f64;
        let mut params = single(vec![0.0]);
        let mut state = OptState::with_momentum(&params);
        let cfg = OptConfig::new(0.001)
            .unwrap()
            .with_schedule(Schedule::constant());
        for k in 1..=200u32 {
            step_sgd(
                &mut params,
                &grad(vec![c]),
                &mut state,
                &cfg,
                &FeasibleBox::unbounded(),
                mu,
            )
            .unwrap();
            let buf = state.momentum_buf().unwrap()[0].data()[0];
            let expect = c * (1.0 - mu.powi(k as i32)) / (1.0 - mu);
            assert!(
                (buf - expect).abs() <= 1e-9 * expect.abs(),
                "k={k}: {buf} vs {expect}"
            );
        }
        let buf = state.momentum_buf().unwrap()[0].data()[0];
        assert!((buf - 10.0 * c).abs() < 1e-6);
    }

    #[test]
    fn sgd_zero_momentum_matches_plain_descent_bitwise() {
        let mut rng = SplitMix64::new(5);
        let init: Vec<f64> = (0..3).map(|_| rng.next_in(-1.0, 1.0)).collect();
        let mut params = single(init.clone());
        let mut state = OptState::with_momentum(&params);
        let cfg = OptConfig::new(0.05).unwrap();
        let mut reference = init;
        for t in 1..=50u64 {
            let g: Vec<f64> = (0..3).map(|_| rng.next_in(-1.0, 1.0)).collect();
            step_sgd(
                &mut params,
                &grad(g.clone()),
                &mut state,
                &cfg,
                &FeasibleBox::unbounded(),
                0.0,
            )
            .unwrap();
            let lr = lr_at(&cfg, t).unwrap();
            for (r, gj) in reference.iter_mut().zip(&g) {
                *r -= lr * gj;
            }
            assert_eq!(params.groups()[0].value.data(), &reference[..]);
        }
    }

    #[test]
    fn sgd_with_momentum_requires_buffer() {
        let mut params = single(vec![0.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        let err = step_sgd(
            &mut params,
            &grad(vec![1.0]),
            &mut state,
            &cfg,
            &FeasibleBox::unbounded(),
            0.9,
        );
        assert!(matches!(err, Err(Error::MissingMomentumBuffer)));
    }

    #[test]
    fn projection_clamps_and_fixes_interior_points() {
        let feasible = FeasibleBox::interval(-1.0, 1.0, 2).unwrap();
        let metric = Tensor::from_vec(vec![1.0, 2.0]);
        let outside = Tensor::from_vec(vec![2.0, -3.0]);
        assert_eq!(
            project(&outside, &metric, &feasible).unwrap().data(),
            &[1.0, -1.0]
        );
        let inside = Tensor::from_vec(vec![0.25, -0.75]);
        assert_eq!(
            project(&inside, &metric, &feasible).unwrap().data(),
            inside.data()
        );
    }

    #[test]
    fn projection_rejects_non_positive_metric() {
        let feasible = FeasibleBox::interval(-1.0, 1.0, 2).unwrap();
        let metric = Tensor::from_vec(vec![1.0, 0.0]);
        let x = Tensor::from_vec(vec![0.0, 0.0]);
        assert!(matches!(
            project(&x, &metric, &feasible),
            Err(Error::NonPositiveMetric { index: 1, .. })
        ));
    }

    #[test]
    fn box_validation_and_diameter() {
        assert!(matches!(
            FeasibleBox::from_bounds(vec![1.0], vec![-1.0]),
            Err(Error::MalformedBox { .. })
        ));
        assert!(matches!(
            FeasibleBox::from_bounds(vec![f64::NAN], vec![1.0]),
            Err(Error::MalformedBox { .. })
        ));
        let b = FeasibleBox::from_bounds(vec![-1.0, 0.0], vec![1.0, 5.0]).unwrap();
        assert_eq!(b.diameter(), Some(5.0));
        assert_eq!(FeasibleBox::unbounded().diameter(), None);
        let half = FeasibleBox::from_bounds(vec![-1.0, f64::NEG_INFINITY], vec![1.0, 0.0]).unwrap();
        assert_eq!(half.diameter(), Some(2.0));
    }

    #[test]
    fn step_rejects_box_dimension_mismatch() {
        let mut params = single(vec![0.0, 0.0, 0.0]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(0.1).unwrap();
        let feasible = FeasibleBox::interval(-1.0, 1.0, 2).unwrap();
        let err = step_adal(
            &mut params,
            &grad(vec![1.0, 1.0, 1.0]),
            &mut state,
            &cfg,
            &feasible,
        );
        assert!(matches!(err, Err(Error::BoxDimMismatch { .. })));
    }

    #[test]
    fn bounded_steps_stay_inside_the_box() {
        let feasible = FeasibleBox::interval(-1.0, 1.0, 2).unwrap();
        let mut params = single(vec![0.9, -0.9]);
        let mut state = OptState::new(&params);
        let cfg = OptConfig::new(5.0).unwrap(); // huge lr to force saturation
        for _ in 0..20 {
            step_adal(
                &mut params,
                &grad(vec![-3.0, 4.0]),
                &mut state,
                &cfg,
                &feasible,
            )
            .unwrap();
            feasible
                .check_point(params.groups()[0].value.data())
                .unwrap();
        }
    }

    proptest! {
        // Update direction opposes the corrected first moment coordinatewise.
        #[test]
        fn update_direction_opposes_mhat(
            g1 in proptest::collection::vec(-5.0..5.0_f64, 4),
            g2 in proptest::collection::vec(-5.0..5.0_f64, 4),
        ) {
            let mut params = single(vec![0.0; 4]);
            let mut state = OptState::new(&params);
            let cfg = OptConfig::new(0.1).unwrap();
            step_adal(&mut params, &grad(g1), &mut state, &cfg, &FeasibleBox::unbounded()).unwrap();
            let before = params.groups()[0].value.data().to_vec();
            step_adal(&mut params, &grad(g2), &mut state, &cfg, &FeasibleBox::unbounded()).unwrap();
            let (mhat, _) = state.bias_corrected_moments(&cfg).unwrap();
            for (j, &b) in before.iter().enumerate() {
                let delta = params.groups()[0].value.data()[j] - b;
                let m = mhat[0].data()[j];
                if m == 0.0 {
                    prop_assert_eq!(delta, 0.0);
                } else {
                    prop_assert!(delta * m <= 0.0);
                }
            }
        }

        // Second-moment sums never go negative, whatever the gradients.
        #[test]
        fn second_moments_stay_nonnegative(
            seqs in proptest::collection::vec(proptest::collection::vec(-10.0..10.0_f64, 3), 1..20),
        ) {
            let mut params = single(vec![0.0; 3]);
            let mut state = OptState::new(&params);
            let cfg = OptConfig::new(0.1).unwrap();
            for g in seqs {
                step_adal(&mut params, &grad(g), &mut state, &cfg, &FeasibleBox::unbounded()).unwrap();
                prop_assert!(state.v()[0].data().iter().all(|x| *x >= 0.0));
            }
        }

        // Clamp-projection is non-expansive in any positive diagonal metric.
        #[test]
        fn projection_non_expansive(
            x in proptest::collection::vec(-10.0..10.0_f64, 3),
            y in proptest::collection::vec(-10.0..10.0_f64, 3),
            m in proptest::collection::vec(0.1..10.0_f64, 3),
            lo in -2.0..0.0_f64,
            hi in 0.0..2.0_f64,
        ) {
            let feasible = FeasibleBox::interval(lo, hi, 3).unwrap();
            let metric = Tensor::from_vec(m.clone());
            let tx = Tensor::from_vec(x.clone());
            let ty = Tensor::from_vec(y.clone());
            let px = project(&tx, &metric, &feasible).unwrap();
            let py = project(&ty, &metric, &feasible).unwrap();
            let dist = |a: &[f64], b: &[f64]| -> f64 {
                a.iter().zip(b).zip(&m).map(|((ai, bi), mi)| mi * (ai - bi) * (ai - bi)).sum()
            };
            prop_assert!(dist(px.data(), py.data()) <= dist(&x, &y) * (1.0 + 1e-12));
        }
    }
}
