//! Experiment configuration: a line-oriented `key = value` format with
//! `[section]` headers, comments starting with `#`, strict key checking, and
//! a canonical serializer whose output parses back to an equal config.
//!
//! Sections: `[experiment]` (kind, seed, horizon), `[optimizer]`,
//! `[problem]` (synthetic and online-convex settings), `[model]` and
//! `[data]` (classifier settings). Unknown sections, unknown keys, duplicate
//! keys, and values of the wrong type are all errors that name the offending
//! line.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::optim::{GradTransform, OptConfig, Schedule, ScheduleKind};
use crate::problems::{Activation, SyntheticKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Synthetic,
    OnlineConvex,
    MlpTrain,
    NoiseStudy,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Synthetic => "synthetic",
            ExperimentKind::OnlineConvex => "online_convex",
            ExperimentKind::MlpTrain => "mlp_train",
            ExperimentKind::NoiseStudy => "noise_study",
        }
    }

    fn parse(s: &str, line: usize) -> Result<Self> {
        match s {
            "synthetic" => Ok(ExperimentKind::Synthetic),
            "online_convex" => Ok(ExperimentKind::OnlineConvex),
            "mlp_train" => Ok(ExperimentKind::MlpTrain),
            "noise_study" => Ok(ExperimentKind::NoiseStudy),
            _ => Err(Error::Config {
                line,
                msg: format!(
                    "unknown kind {s:?} (expected synthetic, online_convex, mlp_train, or noise_study)"
                ),
            }),
        }
    }

    fn uses_classifier(self) -> bool {
        matches!(self, ExperimentKind::MlpTrain | ExperimentKind::NoiseStudy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerName {
    Adal,
    Adam,
    Amsgrad,
    Sgd,
}

impl OptimizerName {
    pub fn as_str(self) -> &'static str {
        match self {
            OptimizerName::Adal => "adal",
            OptimizerName::Adam => "adam",
            OptimizerName::Amsgrad => "amsgrad",
            OptimizerName::Sgd => "sgd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "adal" => Some(OptimizerName::Adal),
            "adam" => Some(OptimizerName::Adam),
            "amsgrad" => Some(OptimizerName::Amsgrad),
            "sgd" => Some(OptimizerName::Sgd),
            _ => None,
        }
    }
}

/// Optimizer settings as written in the config; [`OptimizerSpec::opt_config`]
/// turns them into a validated [`OptConfig`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSpec {
    pub name: OptimizerName,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Heavy-ball coefficient; only meaningful (and only configurable) for sgd.
    pub momentum: f64,
    pub schedule: ScheduleKind,
    pub milestones: Vec<u64>,
    pub decay_factor: f64,
    /// Only configurable for adal; the other optimizers always run identity.
    pub transform: GradTransform,
    pub bias_correction: bool,
}

impl OptimizerSpec {
    pub fn opt_config(&self) -> Result<OptConfig> {
        let schedule = match self.schedule {
            ScheduleKind::InvSqrt => Schedule::inv_sqrt(),
            ScheduleKind::Constant => Schedule::constant(),
            ScheduleKind::StepDecay => {
                Schedule::step_decay(self.milestones.clone(), self.decay_factor)?
            }
        };
        Ok(OptConfig::full(
            self.alpha,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.weight_decay,
        )?
        .with_schedule(schedule)
        .with_transform(self.transform)
        .with_bias_correction(self.bias_correction))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitSpec {
    /// Uniform `(-1/sqrt(fan_in), 1/sqrt(fan_in))` weights from the run seed.
    Uniform,
    /// All-zero parameters (initial loss is exactly `ln(classes)`).
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSpec {
    Blobs {
        per_class: usize,
        classes: usize,
        dim: usize,
        spread: f64,
        /// Seed for dataset generation; defaults to the run seed so paired
        /// runs can share data by sharing this value.
        data_seed: Option<u64>,
    },
    Idx {
        images: String,
        labels: String,
        classes: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemSpec {
    Synthetic {
        function: SyntheticKind,
        dim: usize,
        /// Starting point; drawn uniformly from `(-2, 2)^dim` when absent.
        init: Option<Vec<f64>>,
    },
    OnlineConvex {
        dim: usize,
        box_lower: f64,
        box_upper: f64,
        g_cap: f64,
        /// Seed of the cost-vector stream; defaults to the run seed.
        stream_seed: Option<u64>,
    },
    Mlp {
        data: DataSpec,
        limit: Option<usize>,
        batch_size: usize,
        hidden: Vec<usize>,
        activation: Activation,
        init: InitSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    /// Optimizer steps; used by every kind except mlp_train.
    pub steps: u64,
    /// Passes over the dataset; mlp_train only.
    pub epochs: u64,
    /// Regret/bound evaluation points; online_convex only.
    pub checkpoints: Vec<u64>,
    /// Record a flattened parameter snapshot on every trace row.
    pub snapshot_params: bool,
    pub output: Option<String>,
    pub optimizer: OptimizerSpec,
    pub problem: ProblemSpec,
}

const SECTIONS: [&str; 5] = ["experiment", "optimizer", "problem", "model", "data"];

struct Entry {
    section: String,
    key: String,
    value: String,
    line: usize,
    used: bool,
}

struct Entries(Vec<Entry>);

impl Entries {
    fn take(&mut self, section: &str, key: &str) -> Option<(String, usize)> {
        self.0
            .iter_mut()
            .find(|e| e.section == section && e.key == key)
            .map(|e| {
                e.used = true;
                (e.value.clone(), e.line)
            })
    }

    fn require(&mut self, section: &str, key: &str) -> Result<(String, usize)> {
        self.take(section, key).ok_or_else(|| {
            Error::ConfigGeneral(format!("missing required key {key:?} in [{section}]"))
        })
    }

    fn reject_leftovers(&self, kind: ExperimentKind) -> Result<()> {
        if let Some(e) = self.0.iter().find(|e| !e.used) {
            return Err(Error::Config {
                line: e.line,
                msg: format!(
                    "unknown key {:?} in [{}] for kind {}",
                    e.key,
                    e.section,
                    kind.as_str()
                ),
            });
        }
        Ok(())
    }
}

fn parse_f64_v(v: &str, line: usize) -> Result<f64> {
    v.parse::<f64>().map_err(|_| Error::Config {
        line,
        msg: format!("expected a number, got {v:?}"),
    })
}

fn parse_u64_v(v: &str, line: usize) -> Result<u64> {
    v.parse::<u64>().map_err(|_| Error::Config {
        line,
        msg: format!("expected a nonnegative integer, got {v:?}"),
    })
}

fn parse_usize_v(v: &str, line: usize) -> Result<usize> {
    v.parse::<usize>().map_err(|_| Error::Config {
        line,
        msg: format!("expected a nonnegative integer, got {v:?}"),
    })
}

fn parse_bool_v(v: &str, line: usize) -> Result<bool> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Config {
            line,
            msg: format!("expected true or false, got {v:?}"),
        }),
    }
}

fn parse_f64_list(v: &str, line: usize) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|part| parse_f64_v(part.trim(), line))
        .collect()
}

fn parse_u64_list(v: &str, line: usize) -> Result<Vec<u64>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|part| parse_u64_v(part.trim(), line))
        .collect()
}

fn parse_usize_list(v: &str, line: usize) -> Result<Vec<usize>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|part| parse_usize_v(part.trim(), line))
        .collect()
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut entries: Vec<Entry> = Vec::new();
    let mut seen_sections: Vec<String> = Vec::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(name) = rest.strip_suffix(']') else {
                return Err(Error::Config {
                    line: line_no,
                    msg: "unterminated section header".into(),
                });
            };
            let name = name.trim().to_string();
            if !SECTIONS.contains(&name.as_str()) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("unknown section [{name}]"),
                });
            }
            if seen_sections.contains(&name) {
                return Err(Error::Config {
                    line: line_no,
                    msg: format!("section [{name}] appears twice"),
                });
            }
            seen_sections.push(name.clone());
            current = Some(name);
            continue;
        }
        let Some(section) = current.clone() else {
            return Err(Error::Config {
                line: line_no,
                msg: "key before any [section] header".into(),
            });
        };
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config {
                line: line_no,
                msg: "expected key = value".into(),
            });
        };
        let key = k.trim().to_string();
        let value = v.trim().to_string();
        if key.is_empty() {
            return Err(Error::Config {
                line: line_no,
                msg: "empty key".into(),
            });
        }
        if let Some(prev) = entries
            .iter()
            .find(|e| e.section == section && e.key == key)
        {
            return Err(Error::Config {
                line: line_no,
                msg: format!("duplicate key {key:?} (first set on line {})", prev.line),
            });
        }
        entries.push(Entry {
            section,
            key,
            value,
            line: line_no,
            used: false,
        });
    }
    Ok(Entries(entries))
}

/// Parses and fully validates a config, applying the documented defaults
/// (β₁ = 0.9, β₂ = 0.999, ε = 1e-8, batch 128, weight decay 5e-4 for
/// classifier runs and 0 elsewhere).
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut entries = tokenize(text)?;

    let (kind_v, kind_line) = entries.require("experiment", "kind")?;
    let kind = ExperimentKind::parse(&kind_v, kind_line)?;
    let (seed_v, seed_line) = entries.require("experiment", "seed")?;
    let seed = parse_u64_v(&seed_v, seed_line)?;
    let output = entries.take("experiment", "output").map(|(v, _)| v);
    let snapshot_params = match entries.take("experiment", "snapshot_params") {
        Some((v, line)) => parse_bool_v(&v, line)?,
        None => false,
    };

    let mut steps = 1000u64;
    let mut epochs = 5u64;
    if kind == ExperimentKind::MlpTrain {
        if let Some((_, line)) = entries.take("experiment", "steps") {
            return Err(Error::Config {
                line,
                msg: "mlp_train runs are sized in epochs, not steps".into(),
            });
        }
        if let Some((v, line)) = entries.take("experiment", "epochs") {
            epochs = parse_u64_v(&v, line)?;
        }
    } else {
        if let Some((_, line)) = entries.take("experiment", "epochs") {
            return Err(Error::Config {
                line,
                msg: format!("epochs only applies to mlp_train, not {}", kind.as_str()),
            });
        }
        if let Some((v, line)) = entries.take("experiment", "steps") {
            steps = parse_u64_v(&v, line)?;
            if steps == 0 {
                return Err(Error::Config {
                    line,
                    msg: "steps must be at least 1".into(),
                });
            }
        }
    }

    let mut checkpoints = Vec::new();
    if kind == ExperimentKind::OnlineConvex {
        checkpoints = match entries.take("experiment", "checkpoints") {
            Some((v, line)) => {
                let cps = parse_u64_list(&v, line)?;
                if cps.is_empty() {
                    return Err(Error::Config {
                        line,
                        msg: "checkpoints must not be empty".into(),
                    });
                }
                for pair in cps.windows(2) {
                    if pair[1] <= pair[0] {
                        return Err(Error::Config {
                            line,
                            msg: "checkpoints must be strictly increasing".into(),
                        });
                    }
                }
                if cps[0] == 0 || *cps.last().unwrap() > steps {
                    return Err(Error::Config {
                        line,
                        msg: format!("checkpoints must lie in 1..={steps}"),
                    });
                }
                cps
            }
            None => vec![steps],
        };
    } else if let Some((_, line)) = entries.take("experiment", "checkpoints") {
        return Err(Error::Config {
            line,
            msg: "checkpoints only apply to online_convex".into(),
        });
    }

    let optimizer = parse_optimizer(&mut entries, kind)?;
    let problem = parse_problem(&mut entries, kind, steps)?;

    entries.reject_leftovers(kind)?;

    let cfg = ExperimentConfig {
        kind,
        seed,
        steps,
        epochs,
        checkpoints,
        snapshot_params,
        output,
        optimizer,
        problem,
    };
    // Exercise the optimizer constructor so range errors surface at parse
    // time rather than mid-run.
    cfg.optimizer.opt_config()?;
    Ok(cfg)
}

fn parse_optimizer(entries: &mut Entries, kind: ExperimentKind) -> Result<OptimizerSpec> {
    let (name_v, name_line) = entries.require("optimizer", "name")?;
    let name = OptimizerName::parse(&name_v).ok_or_else(|| Error::Config {
        line: name_line,
        msg: format!("unknown optimizer {name_v:?} (expected adal, adam, amsgrad, or sgd)"),
    })?;

    let mut spec = OptimizerSpec {
        name,
        alpha: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
        weight_decay: if kind.uses_classifier() { 5e-4 } else { 0.0 },
        momentum: 0.0,
        schedule: ScheduleKind::InvSqrt,
        milestones: Vec::new(),
        decay_factor: 0.1,
        transform: if name == OptimizerName::Adal {
            GradTransform::L1
        } else {
            GradTransform::Identity
        },
        bias_correction: true,
    };

    if let Some((v, line)) = entries.take("optimizer", "alpha") {
        spec.alpha = parse_f64_v(&v, line)?;
    }
    if let Some((v, line)) = entries.take("optimizer", "beta1") {
        spec.beta1 = parse_f64_v(&v, line)?;
    }
    if let Some((v, line)) = entries.take("optimizer", "beta2") {
        spec.beta2 = parse_f64_v(&v, line)?;
    }
    if let Some((v, line)) = entries.take("optimizer", "epsilon") {
        spec.epsilon = parse_f64_v(&v, line)?;
    }
    if let Some((v, line)) = entries.take("optimizer", "weight_decay") {
        spec.weight_decay = parse_f64_v(&v, line)?;
    }

    if let Some((v, line)) = entries.take("optimizer", "momentum") {
        if name != OptimizerName::Sgd {
            return Err(Error::Config {
                line,
                msg: "momentum only applies to sgd".into(),
            });
        }
        spec.momentum = parse_f64_v(&v, line)?;
        if !(0.0..1.0).contains(&spec.momentum) {
            return Err(Error::Config {
                line,
                msg: format!("momentum must lie in [0, 1), got {}", spec.momentum),
            });
        }
    }

    if let Some((v, line)) = entries.take("optimizer", "schedule") {
        spec.schedule = match v.as_str() {
            "inv_sqrt" => ScheduleKind::InvSqrt,
            "constant" => ScheduleKind::Constant,
            "step_decay" => ScheduleKind::StepDecay,
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!(
                        "unknown schedule {v:?} (expected inv_sqrt, constant, or step_decay)"
                    ),
                })
            }
        };
    }
    match entries.take("optimizer", "milestones") {
        Some((v, line)) => {
            if spec.schedule != ScheduleKind::StepDecay {
                return Err(Error::Config {
                    line,
                    msg: "milestones only apply to the step_decay schedule".into(),
                });
            }
            spec.milestones = parse_u64_list(&v, line)?;
        }
        None => {
            if spec.schedule == ScheduleKind::StepDecay {
                return Err(Error::ConfigGeneral(
                    "schedule = step_decay requires milestones in [optimizer]".into(),
                ));
            }
        }
    }
    if let Some((v, line)) = entries.take("optimizer", "decay_factor") {
        if spec.schedule != ScheduleKind::StepDecay {
            return Err(Error::Config {
                line,
                msg: "decay_factor only applies to the step_decay schedule".into(),
            });
        }
        spec.decay_factor = parse_f64_v(&v, line)?;
    }

    if let Some((v, line)) = entries.take("optimizer", "transform") {
        if name != OptimizerName::Adal {
            return Err(Error::Config {
                line,
                msg: format!("transform is fixed to identity for {}", name.as_str()),
            });
        }
        spec.transform = match v.as_str() {
            "l1" => GradTransform::L1,
            "identity" => GradTransform::Identity,
            _ => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown transform {v:?} (expected l1 or identity)"),
                })
            }
        };
    }

    if let Some((v, line)) = entries.take("optimizer", "bias_correction") {
        if name == OptimizerName::Sgd {
            return Err(Error::Config {
                line,
                msg: "bias_correction does not apply to sgd".into(),
            });
        }
        spec.bias_correction = parse_bool_v(&v, line)?;
    }

    Ok(spec)
}

fn parse_problem(entries: &mut Entries, kind: ExperimentKind, steps: u64) -> Result<ProblemSpec> {
    let _ = steps;
    match kind {
        ExperimentKind::Synthetic => {
            let (f_v, f_line) = entries.require("problem", "function")?;
            let function = match f_v.as_str() {
                "rastrigin" => SyntheticKind::Rastrigin,
                "rosenbrock" => SyntheticKind::Rosenbrock,
                _ => {
                    return Err(Error::Config {
                        line: f_line,
                        msg: format!("unknown function {f_v:?} (expected rastrigin or rosenbrock)"),
                    })
                }
            };
            let dim = match entries.take("problem", "dim") {
                Some((v, line)) => parse_usize_v(&v, line)?,
                None => 2,
            };
            let min_dim = if function == SyntheticKind::Rosenbrock {
                2
            } else {
                1
            };
            if dim < min_dim {
                return Err(Error::ConfigGeneral(format!(
                    "{f_v} needs dim >= {min_dim}, got {dim}"
                )));
            }
            let init = match entries.take("problem", "init") {
                Some((v, line)) => {
                    let point = parse_f64_list(&v, line)?;
                    if point.len() != dim {
                        return Err(Error::Config {
                            line,
                            msg: format!("init has {} coordinates, dim is {dim}", point.len()),
                        });
                    }
                    Some(point)
                }
                None => None,
            };
            Ok(ProblemSpec::Synthetic {
                function,
                dim,
                init,
            })
        }
        ExperimentKind::OnlineConvex => {
            let dim = match entries.take("problem", "dim") {
                Some((v, line)) => parse_usize_v(&v, line)?,
                None => 2,
            };
            if dim == 0 {
                return Err(Error::ConfigGeneral("online_convex needs dim >= 1".into()));
            }
            let box_lower = match entries.take("problem", "box_lower") {
                Some((v, line)) => parse_f64_v(&v, line)?,
                None => -1.0,
            };
            let box_upper = match entries.take("problem", "box_upper") {
                Some((v, line)) => parse_f64_v(&v, line)?,
                None => 1.0,
            };
            if !box_lower.is_finite() || !box_upper.is_finite() || box_lower >= box_upper {
                return Err(Error::ConfigGeneral(format!(
                    "need finite box_lower < box_upper, got [{box_lower}, {box_upper}]"
                )));
            }
            let g_cap = match entries.take("problem", "g_cap") {
                Some((v, line)) => {
                    let cap = parse_f64_v(&v, line)?;
                    if !(cap > 0.0 && cap.is_finite()) {
                        return Err(Error::Config {
                            line,
                            msg: format!("g_cap must be positive and finite, got {cap}"),
                        });
                    }
                    cap
                }
                None => 1.0,
            };
            let stream_seed = match entries.take("problem", "stream_seed") {
                Some((v, line)) => Some(parse_u64_v(&v, line)?),
                None => None,
            };
            Ok(ProblemSpec::OnlineConvex {
                dim,
                box_lower,
                box_upper,
                g_cap,
                stream_seed,
            })
        }
        ExperimentKind::MlpTrain | ExperimentKind::NoiseStudy => {
            let hidden = match entries.take("model", "hidden") {
                Some((v, line)) => {
                    let sizes = parse_usize_list(&v, line)?;
                    if sizes.contains(&0) {
                        return Err(Error::Config {
                            line,
                            msg: "hidden layer widths must be positive".into(),
                        });
                    }
                    sizes
                }
                None => vec![16],
            };
            let activation = match entries.take("model", "activation") {
                Some((v, line)) => match v.as_str() {
                    "relu" => Activation::Relu,
                    "tanh" => Activation::Tanh,
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown activation {v:?} (expected relu or tanh)"),
                        })
                    }
                },
                None => Activation::Relu,
            };
            let init = match entries.take("model", "init") {
                Some((v, line)) => match v.as_str() {
                    "uniform" => InitSpec::Uniform,
                    "zero" => InitSpec::Zero,
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown init {v:?} (expected uniform or zero)"),
                        })
                    }
                },
                None => InitSpec::Uniform,
            };

            let source = entries.take("data", "source");
            let data = match source.as_ref().map(|(v, _)| v.as_str()).unwrap_or("blobs") {
                "blobs" => {
                    let per_class = match entries.take("data", "blobs_per_class") {
                        Some((v, line)) => parse_usize_v(&v, line)?,
                        None => 100,
                    };
                    let classes = match entries.take("data", "blobs_classes") {
                        Some((v, line)) => parse_usize_v(&v, line)?,
                        None => 3,
                    };
                    let dim = match entries.take("data", "blobs_dim") {
                        Some((v, line)) => parse_usize_v(&v, line)?,
                        None => 10,
                    };
                    let spread = match entries.take("data", "blobs_spread") {
                        Some((v, line)) => parse_f64_v(&v, line)?,
                        None => 1.0,
                    };
                    let data_seed = match entries.take("data", "data_seed") {
                        Some((v, line)) => Some(parse_u64_v(&v, line)?),
                        None => None,
                    };
                    DataSpec::Blobs {
                        per_class,
                        classes,
                        dim,
                        spread,
                        data_seed,
                    }
                }
                "idx" => {
                    let (images, img_line) = entries.require("data", "images")?;
                    let (labels, lab_line) = entries.require("data", "labels")?;
                    let (classes_v, cls_line) = entries.require("data", "classes")?;
                    let classes = parse_usize_v(&classes_v, cls_line)?;
                    for (path, line) in [(&images, img_line), (&labels, lab_line)] {
                        if !Path::new(path).exists() {
                            return Err(Error::Config {
                                line,
                                msg: format!("referenced file {path:?} does not exist"),
                            });
                        }
                    }
                    DataSpec::Idx {
                        images,
                        labels,
                        classes,
                    }
                }
                other => {
                    let line = source.as_ref().map(|(_, l)| *l).unwrap_or(0);
                    return Err(Error::Config {
                        line,
                        msg: format!("unknown data source {other:?} (expected blobs or idx)"),
                    });
                }
            };

            let limit = match entries.take("data", "limit") {
                Some((v, line)) => Some(parse_usize_v(&v, line)?),
                None => None,
            };
            let batch_size = match entries.take("data", "batch_size") {
                Some((v, line)) => {
                    let b = parse_usize_v(&v, line)?;
                    if b == 0 {
                        return Err(Error::Config {
                            line,
                            msg: "batch_size must be at least 1".into(),
                        });
                    }
                    b
                }
                None => 128,
            };

            Ok(ProblemSpec::Mlp {
                data,
                limit,
                batch_size,
                hidden,
                activation,
                init,
            })
        }
    }
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

/// Canonical text form: every effective value materialized (defaults
/// included), sections and keys in fixed order. Parsing the output yields a
/// config equal to the input.
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "[experiment]").unwrap();
    writeln!(w, "kind = {}", cfg.kind.as_str()).unwrap();
    writeln!(w, "seed = {}", cfg.seed).unwrap();
    if cfg.kind == ExperimentKind::MlpTrain {
        writeln!(w, "epochs = {}", cfg.epochs).unwrap();
    } else {
        writeln!(w, "steps = {}", cfg.steps).unwrap();
    }
    if cfg.kind == ExperimentKind::OnlineConvex {
        writeln!(w, "checkpoints = {}", join(&cfg.checkpoints)).unwrap();
    }
    writeln!(w, "snapshot_params = {}", cfg.snapshot_params).unwrap();
    if let Some(path) = &cfg.output {
        writeln!(w, "output = {path}").unwrap();
    }

    let o = &cfg.optimizer;
    writeln!(w, "\n[optimizer]").unwrap();
    writeln!(w, "name = {}", o.name.as_str()).unwrap();
    writeln!(w, "alpha = {}", o.alpha).unwrap();
    writeln!(w, "beta1 = {}", o.beta1).unwrap();
    writeln!(w, "beta2 = {}", o.beta2).unwrap();
    writeln!(w, "epsilon = {}", o.epsilon).unwrap();
    writeln!(w, "weight_decay = {}", o.weight_decay).unwrap();
    if o.name == OptimizerName::Sgd {
        writeln!(w, "momentum = {}", o.momentum).unwrap();
    }
    let schedule = match o.schedule {
        ScheduleKind::InvSqrt => "inv_sqrt",
        ScheduleKind::Constant => "constant",
        ScheduleKind::StepDecay => "step_decay",
    };
    writeln!(w, "schedule = {schedule}").unwrap();
    if o.schedule == ScheduleKind::StepDecay {
        writeln!(w, "milestones = {}", join(&o.milestones)).unwrap();
        writeln!(w, "decay_factor = {}", o.decay_factor).unwrap();
    }
    if o.name == OptimizerName::Adal {
        let transform = match o.transform {
            GradTransform::L1 => "l1",
            GradTransform::Identity => "identity",
        };
        writeln!(w, "transform = {transform}").unwrap();
    }
    if o.name != OptimizerName::Sgd {
        writeln!(w, "bias_correction = {}", o.bias_correction).unwrap();
    }

    match &cfg.problem {
        ProblemSpec::Synthetic {
            function,
            dim,
            init,
        } => {
            writeln!(w, "\n[problem]").unwrap();
            let name = match function {
                SyntheticKind::Rastrigin => "rastrigin",
                SyntheticKind::Rosenbrock => "rosenbrock",
            };
            writeln!(w, "function = {name}").unwrap();
            writeln!(w, "dim = {dim}").unwrap();
            if let Some(point) = init {
                writeln!(w, "init = {}", join(point)).unwrap();
            }
        }
        ProblemSpec::OnlineConvex {
            dim,
            box_lower,
            box_upper,
            g_cap,
            stream_seed,
        } => {
            writeln!(w, "\n[problem]").unwrap();
            writeln!(w, "dim = {dim}").unwrap();
            writeln!(w, "box_lower = {box_lower}").unwrap();
            writeln!(w, "box_upper = {box_upper}").unwrap();
            writeln!(w, "g_cap = {g_cap}").unwrap();
            if let Some(s) = stream_seed {
                writeln!(w, "stream_seed = {s}").unwrap();
            }
        }
        ProblemSpec::Mlp {
            data,
            limit,
            batch_size,
            hidden,
            activation,
            init,
        } => {
            writeln!(w, "\n[model]").unwrap();
            writeln!(w, "hidden = {}", join(hidden)).unwrap();
            let act = match activation {
                Activation::Relu => "relu",
                Activation::Tanh => "tanh",
            };
            writeln!(w, "activation = {act}").unwrap();
            let init_s = match init {
                InitSpec::Uniform => "uniform",
                InitSpec::Zero => "zero",
            };
            writeln!(w, "init = {init_s}").unwrap();
            writeln!(w, "\n[data]").unwrap();
            match data {
                DataSpec::Blobs {
                    per_class,
                    classes,
                    dim,
                    spread,
                    data_seed,
                } => {
                    writeln!(w, "source = blobs").unwrap();
                    writeln!(w, "blobs_per_class = {per_class}").unwrap();
                    writeln!(w, "blobs_classes = {classes}").unwrap();
                    writeln!(w, "blobs_dim = {dim}").unwrap();
                    writeln!(w, "blobs_spread = {spread}").unwrap();
                    if let Some(s) = data_seed {
                        writeln!(w, "data_seed = {s}").unwrap();
                    }
                }
                DataSpec::Idx {
                    images,
                    labels,
                    classes,
                } => {
                    writeln!(w, "source = idx").unwrap();
                    writeln!(w, "images = {images}").unwrap();
                    writeln!(w, "labels = {labels}").unwrap();
                    writeln!(w, "classes = {classes}").unwrap();
                }
            }
            if let Some(l) = limit {
                writeln!(w, "limit = {l}").unwrap();
            }
            writeln!(w, "batch_size = {batch_size}").unwrap();
        }
    }
    out
}
