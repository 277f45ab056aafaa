//! Full-batch training: explicit-Euler gradient descent, Adam and L-BFGS, run as an
//! ordered list of stages.

mod adam;
mod lbfgs;

use std::fmt;
use std::str::FromStr;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use lbfgs::{lbfgs_run, LbfgsConfig, LbfgsOutcome, LbfgsTermination};

use crate::error::{Error, Result};

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn num_params(&self) -> usize;

    fn value(&self, theta: &[f64]) -> Result<f64>;

    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Residual vector to store alongside recorded history entries, if the objective has one.
    fn residual_snapshot(&self, _theta: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("{what}[{i}] = {}", values[i])));
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `θ - η ∇L`, one explicit-Euler step of the gradient flow.
pub fn gd_step(theta: &[f64], grad: &[f64], eta: f64) -> Result<Vec<f64>> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    if theta.len() != grad.len() {
        return Err(Error::Shape {
            expected: theta.len(),
            got: grad.len(),
        });
    }
    ensure_finite(grad, "gradient")?;
    Ok(theta.iter().zip(grad).map(|(t, g)| t - eta * g).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Gd,
    Adam,
    Lbfgs,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OptimizerKind::Gd => write!(f, "gd"),
            OptimizerKind::Adam => write!(f, "adam"),
            OptimizerKind::Lbfgs => write!(f, "lbfgs"),
        }
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gd" => Ok(OptimizerKind::Gd),
            "adam" => Ok(OptimizerKind::Adam),
            "lbfgs" | "l-bfgs" => Ok(OptimizerKind::Lbfgs),
            other => Err(Error::Config(format!("unknown optimizer '{other}'"))),
        }
    }
}

/// One stage of a training schedule. `learning_rate` is ignored by L-BFGS.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainStage {
    pub optimizer: OptimizerKind,
    pub iterations: usize,
    pub learning_rate: f64,
    pub adam: AdamConfig,
    pub lbfgs: LbfgsConfig,
}

impl TrainStage {
    pub fn gd(iterations: usize, learning_rate: f64) -> Self {
        Self {
            optimizer: OptimizerKind::Gd,
            iterations,
            learning_rate,
            adam: AdamConfig::default(),
            lbfgs: LbfgsConfig::default(),
        }
    }

    pub fn adam(iterations: usize, learning_rate: f64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            ..Self::gd(iterations, learning_rate)
        }
    }

    pub fn lbfgs(iterations: usize) -> Self {
        Self {
            optimizer: OptimizerKind::Lbfgs,
            ..Self::gd(iterations, 1.0)
        }
    }
}

impl fmt::Display for TrainStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.optimizer {
            OptimizerKind::Lbfgs => write!(f, "lbfgs:{}", self.iterations),
            kind => write!(f, "{kind}:{}:{:e}", self.iterations, self.learning_rate),
        }
    }
}

impl FromStr for TrainStage {
    type Err = Error;

    /// `adam:10000:1e-3`, `gd:100:1e-4` or `lbfgs:3000`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let kind: OptimizerKind = parts[0].parse()?;
        let iterations = parts
            .get(1)
            .ok_or_else(|| Error::Config(format!("stage '{s}' lacks an iteration count")))?
            .trim()
            .parse::<usize>()
            .map_err(|e| Error::Config(format!("stage '{s}': {e}")))?;
        match kind {
            OptimizerKind::Lbfgs => {
                if parts.len() != 2 {
                    return Err(Error::Config(format!(
                        "stage '{s}': expected lbfgs:<iters>"
                    )));
                }
                Ok(Self::lbfgs(iterations))
            }
            _ => {
                if parts.len() != 3 {
                    return Err(Error::Config(format!(
                        "stage '{s}': expected {kind}:<iters>:<lr>"
                    )));
                }
                let lr = parts[2]
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("stage '{s}': {e}")))?;
                if !(lr > 0.0) {
                    return Err(Error::Config(format!(
                        "stage '{s}': learning rate must be positive"
                    )));
                }
                Ok(if kind == OptimizerKind::Adam {
                    Self::adam(iterations, lr)
                } else {
                    Self::gd(iterations, lr)
                })
            }
        }
    }
}

/// Comma-separated list of stages; the empty string is the empty schedule.
pub fn parse_schedule(s: &str) -> Result<Vec<TrainStage>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(str::parse).collect()
}

pub fn format_schedule(stages: &[TrainStage]) -> String {
    stages
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainRecord {
    pub iteration: usize,
    pub stage: usize,
    pub loss: f64,
    pub params: Option<Vec<f64>>,
    pub residuals: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<TrainRecord>,
}

impl TrainHistory {
    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.loss).collect()
    }

    pub fn last_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

/// What to record during [`train`]. Iteration 0 and the end of every stage are always recorded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordOptions {
    pub stride: usize,
    pub keep_params: bool,
    pub keep_residuals: bool,
}

impl Default for RecordOptions {
    fn default() -> Self {
        Self {
            stride: 100,
            keep_params: false,
            keep_residuals: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    pub history: TrainHistory,
    /// Set when the run stopped on a non-finite loss or gradient; `theta` is then the last
    /// finite iterate.
    pub aborted: Option<String>,
}

struct Recorder<'a, O: Objective + ?Sized> {
    objective: &'a O,
    opts: RecordOptions,
    history: TrainHistory,
    on_record: &'a mut dyn FnMut(usize, &[f64]),
}

impl<O: Objective + ?Sized> Recorder<'_, O> {
    fn record(&mut self, iteration: usize, stage: usize, loss: f64, theta: &[f64], force: bool) {
        let due = force || (self.opts.stride > 0 && iteration.is_multiple_of(self.opts.stride));
        if !due {
            return;
        }
        if self
            .history
            .records
            .last()
            .is_some_and(|r| r.iteration >= iteration)
        {
            return;
        }
        self.history.records.push(TrainRecord {
            iteration,
            stage,
            loss,
            params: self.opts.keep_params.then(|| theta.to_vec()),
            residuals: if self.opts.keep_residuals {
                self.objective.residual_snapshot(theta)
            } else {
                None
            },
        });
        (self.on_record)(iteration, theta);
    }
}

/// Runs `schedule` in order from `theta0`.
///
/// `on_record` is called with `(iteration, θ)` every time a history entry is written.
pub fn train<O: Objective + ?Sized>(
    objective: &O,
    theta0: &[f64],
    schedule: &[TrainStage],
    opts: RecordOptions,
    on_record: &mut dyn FnMut(usize, &[f64]),
) -> Result<TrainOutcome> {
    if theta0.len() != objective.num_params() {
        return Err(Error::Shape {
            expected: objective.num_params(),
            got: theta0.len(),
        });
    }
    for st in schedule {
        if st.optimizer != OptimizerKind::Lbfgs && !(st.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "stage {st}: learning rate must be positive"
            )));
        }
    }
    let mut rec = Recorder {
        objective,
        opts,
        history: TrainHistory::default(),
        on_record,
    };
    let mut theta = theta0.to_vec();
    let mut iteration = 0usize;

    let loss0 = objective.value(&theta)?;
    if !loss0.is_finite() {
        return Ok(TrainOutcome {
            theta,
            history: rec.history,
            aborted: Some(format!("initial loss is {loss0}")),
        });
    }
    rec.record(0, 0, loss0, &theta, true);

    for (stage_idx, stage) in schedule.iter().enumerate() {
        match stage.optimizer {
            OptimizerKind::Gd | OptimizerKind::Adam => {
                let mut adam = AdamState::new(theta.len());
                // last iterate whose loss is known to be finite
                let mut prev = theta.clone();
                for _ in 0..stage.iterations {
                    let (loss, grad) = objective.value_grad(&theta)?;
                    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                        let finite = if loss.is_finite() { theta } else { prev };
                        return Ok(TrainOutcome {
                            theta: finite,
                            history: rec.history,
                            aborted: Some(format!(
                                "non-finite loss or gradient at iteration {iteration}"
                            )),
                        });
                    }
                    rec.record(iteration, stage_idx, loss, &theta, false);
                    let next = if stage.optimizer == OptimizerKind::Gd {
                        gd_step(&theta, &grad, stage.learning_rate)?
                    } else {
                        adam_step(&mut adam, &stage.adam, &theta, &grad, stage.learning_rate)?
                    };
                    prev = std::mem::replace(&mut theta, next);
                    iteration += 1;
                }
                if stage.iterations > 0 {
                    let loss = objective.value(&theta)?;
                    if !loss.is_finite() {
                        return Ok(TrainOutcome {
                            theta: prev,
                            history: rec.history,
                            aborted: Some(format!("non-finite loss at iteration {iteration}")),
                        });
                    }
                    rec.record(iteration, stage_idx, loss, &theta, true);
                }
            }
            OptimizerKind::Lbfgs => {
                let start = iteration;
                let mut cb = |k: usize, loss: f64, th: &[f64]| {
                    rec.record(start + k, stage_idx, loss, th, false);
                };
                let out = lbfgs_run(objective, &theta, stage.iterations, &stage.lbfgs, &mut cb)?;
                theta = out.theta;
                iteration += out.iterations;
                rec.record(iteration, stage_idx, out.loss, &theta, true);
            }
        }
    }

    Ok(TrainOutcome {
        theta,
        history: rec.history,
        aborted: None,
    })
}
