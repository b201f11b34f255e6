//! Experiment execution: one deterministic loop per experiment kind, trace
//! collection, and divergence handling.

use std::time::Instant;

use crate::analysis::{
    gradient_noise, hill_default_k, hill_tail_index, regret_bound_rhs, BoundConstants, GroupNorms,
    TraceRecord,
};
use crate::error::{Error, Result};
use crate::numerics::{l1_norm, l2_norm, linf_norm, ParamSet, Tensor};
use crate::optim::{
    lr_at, pow_u64, step_adal, step_adam, step_amsgrad, step_sgd, transform_gradient, FeasibleBox,
    GradTransform, OptConfig, OptState,
};
use crate::problems::{corner_minimum, load_idx, make_blobs, Dataset, MlpModel, OnlineProblem};
use crate::rng::{subseed, SplitMix64};

use super::config::{
    serialize_config, DataSpec, ExperimentConfig, ExperimentKind, InitSpec, OptimizerName,
    OptimizerSpec, ProblemSpec,
};
use super::csv::write_csv;

/// Regret and bound value at one online-convex checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCheckpoint {
    pub step: u64,
    pub regret: f64,
    pub bound_rhs: f64,
}

/// Summary of a finished (or aborted) run. All metric fields are finite;
/// anything that went non-finite shows up as `diverged_at` instead.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub kind: ExperimentKind,
    pub optimizer: OptimizerName,
    pub seed: u64,
    /// Completed optimizer steps (equals the trace length).
    pub steps_run: u64,
    pub final_loss: Option<f64>,
    pub final_accuracy: Option<f64>,
    /// Final iterate for synthetic and online runs.
    pub final_point: Option<Vec<f64>>,
    pub regret_checkpoints: Vec<RegretCheckpoint>,
    /// Hill tail index of the smoothed-noise magnitudes (noise studies).
    pub tail_index: Option<f64>,
    /// Step at which the run hit a non-finite loss, gradient, or update.
    pub diverged_at: Option<u64>,
    pub trace_path: Option<String>,
    /// Canonical serialization of the config that produced this run.
    pub config_echo: String,
    pub wall_time_secs: f64,
    pub notes: Vec<String>,
}

/// A run's full product: the summary, the in-memory trace, and the final
/// flattened parameters (handy for trajectory comparisons without CSV I/O).
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub trace: Vec<TraceRecord>,
    pub final_params: Vec<f64>,
}

fn base_result(cfg: &ExperimentConfig) -> RunResult {
    RunResult {
        kind: cfg.kind,
        optimizer: cfg.optimizer.name,
        seed: cfg.seed,
        steps_run: 0,
        final_loss: None,
        final_accuracy: None,
        final_point: None,
        regret_checkpoints: Vec::new(),
        tail_index: None,
        diverged_at: None,
        trace_path: None,
        config_echo: String::new(),
        wall_time_secs: 0.0,
        notes: Vec::new(),
    }
}

/// Errors that mean "the trajectory went non-finite" rather than "the call
/// was invalid"; these abort the run with a diagnostic instead of failing it.
fn is_divergence(e: &Error) -> bool {
    matches!(
        e,
        Error::StepDiverged { .. } | Error::NonFiniteGradient { .. }
    )
}

/// Uniform front-end over the four optimizers.
struct Driver {
    name: OptimizerName,
    cfg: OptConfig,
    momentum: f64,
    state: OptState,
}

impl Driver {
    fn new(spec: &OptimizerSpec, params: &ParamSet) -> Result<Driver> {
        let cfg = spec.opt_config()?;
        let state = match spec.name {
            OptimizerName::Amsgrad => OptState::with_vmax(params),
            OptimizerName::Sgd if spec.momentum > 0.0 => OptState::with_momentum(params),
            _ => OptState::new(params),
        };
        Ok(Driver {
            name: spec.name,
            cfg,
            momentum: spec.momentum,
            state,
        })
    }

    fn next_lr(&self) -> Result<f64> {
        lr_at(&self.cfg, self.state.step() + 1)
    }

    fn step(
        &mut self,
        params: &mut ParamSet,
        grads: &[Tensor],
        feasible: &FeasibleBox,
    ) -> Result<()> {
        match self.name {
            OptimizerName::Adal => step_adal(params, grads, &mut self.state, &self.cfg, feasible),
            OptimizerName::Adam => step_adam(params, grads, &mut self.state, &self.cfg, feasible),
            OptimizerName::Amsgrad => {
                step_amsgrad(params, grads, &mut self.state, &self.cfg, feasible)
            }
            OptimizerName::Sgd => step_sgd(
                params,
                grads,
                &mut self.state,
                &self.cfg,
                feasible,
                self.momentum,
            ),
        }
    }

    fn vhat(&self) -> Result<Vec<Tensor>> {
        Ok(self.state.bias_corrected_moments(&self.cfg)?.1)
    }
}

/// Runs the experiment described by `cfg` and, when `cfg.output` is set,
/// writes the trace CSV there. Deterministic: the same config produces the
/// same result, trace, and file bytes every time.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let mut out = match cfg.kind {
        ExperimentKind::Synthetic => run_synthetic(cfg)?,
        ExperimentKind::OnlineConvex => run_online(cfg)?,
        ExperimentKind::MlpTrain => run_mlp(cfg)?,
        ExperimentKind::NoiseStudy => run_noise(cfg)?,
    };
    out.result.steps_run = out.trace.len() as u64;
    out.result.config_echo = serialize_config(cfg);
    if let Some(path) = &cfg.output {
        write_csv(&out.trace, path)?;
        out.result.trace_path = Some(path.clone());
    }
    out.result.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(out)
}

fn run_synthetic(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ProblemSpec::Synthetic {
        function,
        dim,
        init,
    } = &cfg.problem
    else {
        return Err(Error::ConfigGeneral(
            "synthetic experiment without a synthetic problem section".into(),
        ));
    };
    let x0 = match init {
        Some(point) => point.clone(),
        None => {
            let mut rng = SplitMix64::new(subseed(cfg.seed, "init", 0));
            (0..*dim).map(|_| rng.next_in(-2.0, 2.0)).collect()
        }
    };
    let mut params = ParamSet::single("x", x0);
    let mut driver = Driver::new(&cfg.optimizer, &params)?;
    let feasible = FeasibleBox::unbounded();
    let mut result = base_result(cfg);
    let mut trace = Vec::new();

    for t in 1..=cfg.steps {
        let (loss, grad) = function.eval(params.groups()[0].value.data())?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            result.diverged_at = Some(t);
            result
                .notes
                .push(format!("non-finite loss or gradient at step {t}"));
            break;
        }
        let lr = driver.next_lr()?;
        let grads = vec![Tensor::from_vec(grad)];
        let mut rec = TraceRecord::new(t, lr, loss);
        rec.group_norms
            .push(GroupNorms::from_gradient("x", &grads[0])?);
        match driver.step(&mut params, &grads, &feasible) {
            Ok(()) => {}
            Err(e) if is_divergence(&e) => {
                result.diverged_at = Some(t);
                result.notes.push(format!("aborted at step {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
        if cfg.snapshot_params {
            rec.params = Some(params.flatten());
        }
        trace.push(rec);
    }

    let final_params = params.flatten();
    if result.diverged_at.is_none() {
        let (final_loss, _) = function.eval(&final_params)?;
        if final_loss.is_finite() {
            result.final_loss = Some(final_loss);
        }
    } else {
        result.final_loss = trace.last().map(|r| r.loss);
    }
    result.final_point = Some(final_params.clone());
    Ok(RunOutput {
        result,
        trace,
        final_params,
    })
}

fn run_online(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ProblemSpec::OnlineConvex {
        dim,
        box_lower,
        box_upper,
        g_cap,
        stream_seed,
    } = &cfg.problem
    else {
        return Err(Error::ConfigGeneral(
            "online_convex experiment without an online problem section".into(),
        ));
    };
    let dim = *dim;
    let feasible = FeasibleBox::interval(*box_lower, *box_upper, dim)?;
    let problem = OnlineProblem::new(
        dim,
        feasible.clone(),
        stream_seed.unwrap_or(cfg.seed),
        *g_cap,
    )?;
    let diameter = feasible
        .diameter()
        .ok_or_else(|| Error::ConfigGeneral("online box must be fully bounded".into()))?;
    let center = (box_lower + box_upper) / 2.0;
    let mut params = ParamSet::single("x", vec![center; dim]);
    let mut driver = Driver::new(&cfg.optimizer, &params)?;
    let mut result = base_result(cfg);
    let mut trace = Vec::new();

    let mut cum_loss = 0.0;
    let mut cost_sum = vec![0.0; dim];
    let mut grad_sq_sum = vec![0.0; dim];
    let mut max_linf = 0.0f64;
    let mut max_l1 = 0.0f64;
    let mut next_checkpoint = 0usize;

    for t in 1..=cfg.steps {
        let (loss, cost) = problem.step(t, &params.groups()[0].value)?;
        cum_loss += loss;
        for (i, c) in cost.data().iter().enumerate() {
            cost_sum[i] += c;
            grad_sq_sum[i] += c * c;
        }
        max_linf = max_linf.max(linf_norm(&cost)?);
        max_l1 = max_l1.max(l1_norm(&cost)?);

        let lr = driver.next_lr()?;
        let mut rec = TraceRecord::new(t, lr, loss);
        rec.group_norms.push(GroupNorms::from_gradient("x", &cost)?);
        let grads = vec![cost];
        match driver.step(&mut params, &grads, &feasible) {
            Ok(()) => {}
            Err(e) if is_divergence(&e) => {
                result.diverged_at = Some(t);
                result.notes.push(format!("aborted at step {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }

        if next_checkpoint < cfg.checkpoints.len() && cfg.checkpoints[next_checkpoint] == t {
            next_checkpoint += 1;
            let (_, comparator_total) = corner_minimum(&cost_sum, &feasible)?;
            let regret = cum_loss - comparator_total;
            let constants = BoundConstants::new(
                diameter,
                max_linf,
                max_l1,
                1.0,
                cfg.optimizer.alpha,
                cfg.optimizer.beta1,
                cfg.optimizer.beta2,
                dim,
                t,
            )?;
            let vhat = driver.vhat()?;
            let bound = regret_bound_rhs(&constants, vhat[0].data(), &grad_sq_sum)?;
            rec.regret = Some(regret);
            rec.bound_rhs = Some(bound);
            rec.grad_sq_sum = Some(grad_sq_sum.clone());
            result.regret_checkpoints.push(RegretCheckpoint {
                step: t,
                regret,
                bound_rhs: bound,
            });
        }
        if cfg.snapshot_params {
            rec.params = Some(params.flatten());
        }
        result.final_loss = Some(rec.loss);
        trace.push(rec);
    }

    let final_params = params.flatten();
    result.final_point = Some(final_params.clone());
    Ok(RunOutput {
        result,
        trace,
        final_params,
    })
}

fn load_dataset(cfg: &ExperimentConfig, data: &DataSpec, limit: Option<usize>) -> Result<Dataset> {
    let ds = match data {
        DataSpec::Blobs {
            per_class,
            classes,
            dim,
            spread,
            data_seed,
        } => make_blobs(
            data_seed.unwrap_or(cfg.seed),
            *per_class,
            *classes,
            *dim,
            *spread,
        )?,
        DataSpec::Idx {
            images,
            labels,
            classes,
        } => load_idx(images, labels, *classes)?,
    };
    let ds = match limit {
        Some(l) => ds.truncated(l),
        None => ds,
    };
    if ds.is_empty() {
        return Err(Error::ConfigGeneral(
            "dataset is empty after applying limit".into(),
        ));
    }
    Ok(ds)
}

struct ClassifierSetup {
    dataset: Dataset,
    model: MlpModel,
    batch_size: usize,
}

fn classifier_setup(cfg: &ExperimentConfig) -> Result<ClassifierSetup> {
    let ProblemSpec::Mlp {
        data,
        limit,
        batch_size,
        hidden,
        activation,
        init,
    } = &cfg.problem
    else {
        return Err(Error::ConfigGeneral(
            "classifier experiment without model/data sections".into(),
        ));
    };
    let dataset = load_dataset(cfg, data, *limit)?;
    let mut sizes = vec![dataset.dim()];
    sizes.extend_from_slice(hidden);
    sizes.push(dataset.num_classes());
    let mut model = MlpModel::new(&sizes, *activation)?;
    if *init == InitSpec::Uniform {
        let mut rng = SplitMix64::new(subseed(cfg.seed, "init", 0));
        model.init_uniform(&mut rng);
    }
    Ok(ClassifierSetup {
        dataset,
        model,
        batch_size: *batch_size,
    })
}

fn record_group_norms(rec: &mut TraceRecord, model: &MlpModel, grads: &[Tensor]) -> Result<()> {
    for (group, g) in model.params().groups().iter().zip(grads.iter()) {
        rec.group_norms
            .push(GroupNorms::from_gradient(&group.name, g)?);
    }
    Ok(())
}

fn run_mlp(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ClassifierSetup {
        dataset,
        mut model,
        batch_size,
    } = classifier_setup(cfg)?;
    let mut driver = Driver::new(&cfg.optimizer, model.params())?;
    let feasible = FeasibleBox::unbounded();
    let mut result = base_result(cfg);
    let mut trace = Vec::new();
    let n = dataset.len();
    let batches_per_epoch = n.div_ceil(batch_size);

    let mut t = 0u64;
    'epochs: for epoch in 0..cfg.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(subseed(cfg.seed, "shuffle", epoch)).shuffle(&mut order);
        for (bi, batch) in order.chunks(batch_size).enumerate() {
            t += 1;
            let (loss, grads) = model.loss_and_grad(&dataset, batch)?;
            if !loss.is_finite() {
                result.diverged_at = Some(t);
                result
                    .notes
                    .push(format!("non-finite minibatch loss at step {t}"));
                break 'epochs;
            }
            let lr = driver.next_lr()?;
            let mut rec = TraceRecord::new(t, lr, loss);
            record_group_norms(&mut rec, &model, &grads)?;
            match driver.step(model.params_mut(), &grads, &feasible) {
                Ok(()) => {}
                Err(e) if is_divergence(&e) => {
                    result.diverged_at = Some(t);
                    result.notes.push(format!("aborted at step {t}: {e}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
            if cfg.snapshot_params {
                rec.params = Some(model.params().flatten());
            }
            if bi + 1 == batches_per_epoch {
                let acc = model.accuracy(&dataset)?;
                rec.accuracy = Some(acc);
                result.final_accuracy = Some(acc);
            }
            result.final_loss = Some(rec.loss);
            trace.push(rec);
        }
    }

    if cfg.epochs == 0 {
        let (initial_loss, _) = model.full_gradient(&dataset)?;
        result.final_loss = Some(initial_loss);
        result.final_accuracy = Some(model.accuracy(&dataset)?);
    }

    let final_params = model.params().flatten();
    Ok(RunOutput {
        result,
        trace,
        final_params,
    })
}

fn run_noise(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let ClassifierSetup {
        dataset,
        mut model,
        batch_size,
    } = classifier_setup(cfg)?;
    let mut driver = Driver::new(&cfg.optimizer, model.params())?;
    let feasible = FeasibleBox::unbounded();
    let mut result = base_result(cfg);
    let mut trace = Vec::new();
    let n = dataset.len();
    let batch_size = batch_size.min(n);

    // The noise of an AdaL trajectory is measured on transformed gradients;
    // everything else uses the raw gradient. Smoothing uses the momentum
    // parameter the optimizer actually applies.
    let transform = if cfg.optimizer.name == OptimizerName::Adal {
        cfg.optimizer.transform
    } else {
        GradTransform::Identity
    };
    let smoothing_beta = match cfg.optimizer.name {
        OptimizerName::Sgd => cfg.optimizer.momentum,
        _ => cfg.optimizer.beta1,
    };

    let mut decayed_sum: Option<Tensor> = None;
    let mut noise_l2_history: Vec<f64> = Vec::new();

    for t in 1..=cfg.steps {
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(subseed(cfg.seed, "noise.batch", t)).shuffle(&mut order);
        order.truncate(batch_size);

        let (loss, grads) = model.loss_and_grad(&dataset, &order)?;
        let (_, full_grads) = model.full_gradient(&dataset)?;
        if !loss.is_finite() {
            result.diverged_at = Some(t);
            result
                .notes
                .push(format!("non-finite minibatch loss at step {t}"));
            break;
        }

        let mini_flat = flatten_tensors(&transform_gradient(&grads, transform)?);
        let full_flat = flatten_tensors(&transform_gradient(&full_grads, transform)?);
        let u = gradient_noise(&full_flat, &mini_flat)?;
        if let Some(s) = decayed_sum.as_mut() {
            for (acc, x) in s.data_mut().iter_mut().zip(u.data().iter()) {
                *acc = *acc * smoothing_beta + x;
            }
        } else {
            decayed_sum = Some(u);
        }
        let coeff = (1.0 - smoothing_beta) / (1.0 - pow_u64(smoothing_beta, t));
        let mut smoothed = decayed_sum.as_ref().unwrap().clone();
        for v in smoothed.data_mut() {
            *v *= coeff;
        }
        let noise_l2 = l2_norm(&smoothed)?;
        noise_l2_history.push(noise_l2);

        let lr = driver.next_lr()?;
        let mut rec = TraceRecord::new(t, lr, loss);
        record_group_norms(&mut rec, &model, &grads)?;
        rec.noise_l2 = Some(noise_l2);
        rec.tail_index =
            hill_tail_index(&noise_l2_history, hill_default_k(noise_l2_history.len())).ok();

        match driver.step(model.params_mut(), &grads, &feasible) {
            Ok(()) => {}
            Err(e) if is_divergence(&e) => {
                result.diverged_at = Some(t);
                result.notes.push(format!("aborted at step {t}: {e}"));
                break;
            }
            Err(e) => return Err(e),
        }
        if cfg.snapshot_params {
            rec.params = Some(model.params().flatten());
        }
        result.final_loss = Some(rec.loss);
        trace.push(rec);
    }

    result.tail_index =
        hill_tail_index(&noise_l2_history, hill_default_k(noise_l2_history.len())).ok();

    let final_params = model.params().flatten();
    Ok(RunOutput {
        result,
        trace,
        final_params,
    })
}

fn flatten_tensors(tensors: &[Tensor]) -> Tensor {
    let mut data = Vec::new();
    for t in tensors {
        data.extend_from_slice(t.data());
    }
    Tensor::from_vec(data)
}
