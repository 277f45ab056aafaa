//! Experiment configuration and the named presets.
//!
//! The text form is one `key=value` per line. Blank lines and lines starting with `#` are
//! ignored. Parsing starts from the preset named by `preset` (or the default preset for
//! `experiment`) and applies every other key as an override; unknown keys are errors.
//! [`ExperimentConfig::to_text`] writes every key, so parsing its output reproduces the config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::optim::{format_schedule, parse_schedule, TrainStage};
use crate::Activation;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    FreqPrinciple,
    NtkScan,
    NtkSpectrum,
    TwoScale,
    FlowCheck,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::FreqPrinciple,
        Experiment::NtkScan,
        Experiment::NtkSpectrum,
        Experiment::TwoScale,
        Experiment::FlowCheck,
    ];

    /// Preset used when a config names an experiment but no preset.
    pub fn default_preset(self) -> &'static str {
        match self {
            Experiment::FreqPrinciple => "fig1",
            Experiment::NtkScan => "fig2a",
            Experiment::NtkSpectrum => "fig3",
            Experiment::TwoScale => "fig4",
            Experiment::FlowCheck => "flow",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::FreqPrinciple => "freq-principle",
            Experiment::NtkScan => "ntk-scan",
            Experiment::NtkSpectrum => "ntk-spectrum",
            Experiment::TwoScale => "two-scale",
            Experiment::FlowCheck => "flow-check",
        })
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    Normal,
    Glorot,
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InitKind::Normal => "normal",
            InitKind::Glorot => "glorot",
        })
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(InitKind::Normal),
            "glorot" => Ok(InitKind::Glorot),
            _ => Err(Error::Config(format!("unknown init '{s}'"))),
        }
    }
}

/// Everything an experiment run depends on.
///
/// Not every field is read by every experiment; unused fields are still echoed so output
/// headers always carry the complete configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub preset: String,
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// Initialization for the init phase (NTK experiments) or for training runs.
    pub init: InitKind,
    /// Initialization used before training in the trained phase of NTK experiments.
    pub trained_init: InitKind,
    pub n_c: usize,
    pub lambda_b: f64,
    pub epsilons: Vec<f64>,
    pub seed: u64,
    /// Independent seeds averaged per ε in the NTK scan.
    pub n_seeds: usize,
    pub trials: usize,
    /// Which phases to run in NTK experiments.
    pub phase_init: bool,
    pub phase_trained: bool,
    /// Training schedule for the single-network experiments and the NTK trained phase.
    pub schedule: Vec<TrainStage>,
    pub regression_schedule: Vec<TrainStage>,
    pub poisson_schedule: Vec<TrainStage>,
    pub darcy_schedule: Vec<TrainStage>,
    pub record_stride: usize,
    pub eval_points: usize,
    pub regression_points: usize,
    /// Boundary weight of the two-scale PINN losses.
    pub two_scale_lambda: f64,
    pub spectrum_bins: Vec<usize>,
    pub flow_eta: f64,
    pub flow_steps: usize,
    pub workers: usize,
    pub out_dir: PathBuf,
}

const KEYS: &[&str] = &[
    "experiment",
    "preset",
    "hidden_widths",
    "activation",
    "init",
    "trained_init",
    "n_c",
    "lambda_b",
    "epsilons",
    "seed",
    "n_seeds",
    "trials",
    "phase_init",
    "phase_trained",
    "schedule",
    "regression_schedule",
    "poisson_schedule",
    "darcy_schedule",
    "record_stride",
    "eval_points",
    "regression_points",
    "two_scale_lambda",
    "spectrum_bins",
    "flow_eta",
    "flow_steps",
    "workers",
    "out_dir",
];

pub const PRESETS: &[&str] = &[
    "fig1",
    "fig1-fast",
    "fig2a",
    "fig2a-fast",
    "fig2b",
    "fig2b-fast",
    "fig3",
    "fig3-fast",
    "fig4",
    "fig4-fast",
    "flow",
    "flow-fast",
];

fn stages(s: &str) -> Vec<TrainStage> {
    parse_schedule(s).expect("preset schedule")
}

fn base(experiment: Experiment, preset: &str) -> ExperimentConfig {
    ExperimentConfig {
        experiment,
        preset: preset.to_string(),
        hidden_widths: vec![50],
        activation: Activation::Tanh,
        init: InitKind::Normal,
        trained_init: InitKind::Glorot,
        n_c: 256,
        lambda_b: 1.0,
        epsilons: (1..=10).map(|k| 1.0 / (10.0 * k as f64)).collect(),
        seed: 0,
        n_seeds: 5,
        trials: 1,
        phase_init: true,
        phase_trained: false,
        schedule: stages("adam:10000:1e-5"),
        regression_schedule: Vec::new(),
        poisson_schedule: Vec::new(),
        darcy_schedule: Vec::new(),
        record_stride: 100,
        eval_points: 1000,
        regression_points: 403,
        two_scale_lambda: 2.0,
        spectrum_bins: vec![1, 5, 15, 55],
        flow_eta: 1e-8,
        flow_steps: 4,
        workers: 1,
        out_dir: PathBuf::from(format!("out/{preset}")),
    }
}

impl ExperimentConfig {
    /// Named preset; `-fast` variants shrink budgets for desk-scale runs.
    pub fn preset(name: &str) -> Result<Self> {
        let (stem, fast) = match name.strip_suffix("-fast") {
            Some(s) => (s, true),
            None => (name, false),
        };
        let mut c = match stem {
            "fig1" => {
                let mut c = base(Experiment::FreqPrinciple, name);
                c.hidden_widths = vec![60; 4];
                c.init = InitKind::Glorot;
                c.n_c = 512;
                c.lambda_b = 100.0;
                c.epsilons = vec![1.0];
                c.n_seeds = 1;
                c.schedule = stages("adam:20000:1e-3");
                c.eval_points = 512;
                c
            }
            "fig2a" => {
                let mut c = base(Experiment::NtkScan, name);
                if fast {
                    c.n_seeds = 2;
                }
                c
            }
            "fig2b" => {
                let mut c = base(Experiment::NtkScan, name);
                c.phase_init = false;
                c.phase_trained = true;
                if fast {
                    c.schedule = stages("adam:2000:1e-5");
                }
                c
            }
            "fig3" => {
                let mut c = base(Experiment::NtkSpectrum, name);
                c.epsilons = vec![1.0 / 80.0];
                c.n_seeds = 1;
                c.phase_trained = true;
                if fast {
                    c.schedule = stages("adam:2000:1e-5");
                }
                c
            }
            "fig4" => {
                let mut c = base(Experiment::TwoScale, name);
                c.hidden_widths = vec![40; 4];
                c.init = InitKind::Glorot;
                c.n_c = 1024;
                c.epsilons = vec![1.0 / 32.0];
                c.n_seeds = 1;
                c.trials = 10;
                c.schedule = Vec::new();
                c.record_stride = 1000;
                // L-BFGS counts are caps; a stage ends earlier once it stalls.
                if fast {
                    c.trials = 3;
                    c.regression_schedule = stages("adam:10000:1e-2,adam:5000:1e-3,lbfgs:7500");
                    c.poisson_schedule = stages(
                        "adam:5000:1e-4,adam:5000:1e-5,adam:10000:1e-6,adam:10000:1e-7,lbfgs:7500",
                    );
                    c.darcy_schedule = stages(
                        "adam:5000:1e-3,adam:5000:1e-4,adam:10000:1e-5,adam:10000:1e-6,lbfgs:7500",
                    );
                } else {
                    c.regression_schedule = stages("adam:20000:1e-2,adam:10000:1e-3,lbfgs:15000");
                    c.poisson_schedule =
                        stages("adam:10000:1e-4,adam:10000:1e-5,adam:20000:1e-6,adam:20000:1e-7,lbfgs:15000");
                    c.darcy_schedule =
                        stages("adam:10000:1e-3,adam:10000:1e-4,adam:20000:1e-5,adam:20000:1e-6,lbfgs:15000");
                }
                c
            }
            "flow" => {
                let mut c = base(Experiment::FlowCheck, name);
                c.epsilons = vec![0.1];
                c.n_seeds = 1;
                c
            }
            _ => return Err(Error::Config(format!("unknown preset '{name}'"))),
        };
        c.preset = name.to_string();
        Ok(c)
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |e: String| Error::Config(format!("{key}: {e}"));
        match key {
            "experiment" => self.experiment = value.parse()?,
            "preset" => self.preset = value.to_string(),
            "hidden_widths" => self.hidden_widths = parse_list(value, parse_usize).map_err(bad)?,
            "activation" => self.activation = value.parse()?,
            "init" => self.init = value.parse()?,
            "trained_init" => self.trained_init = value.parse()?,
            "n_c" => self.n_c = parse_usize(value).map_err(bad)?,
            "lambda_b" => self.lambda_b = parse_real(value).map_err(bad)?,
            "epsilons" => self.epsilons = parse_list(value, parse_real).map_err(bad)?,
            "seed" => self.seed = value.parse().map_err(|e| bad(format!("{e}")))?,
            "n_seeds" => self.n_seeds = parse_usize(value).map_err(bad)?,
            "trials" => self.trials = parse_usize(value).map_err(bad)?,
            "phase_init" => self.phase_init = parse_bool(value).map_err(bad)?,
            "phase_trained" => self.phase_trained = parse_bool(value).map_err(bad)?,
            "schedule" => self.schedule = parse_stages(value)?,
            "regression_schedule" => self.regression_schedule = parse_stages(value)?,
            "poisson_schedule" => self.poisson_schedule = parse_stages(value)?,
            "darcy_schedule" => self.darcy_schedule = parse_stages(value)?,
            "record_stride" => self.record_stride = parse_usize(value).map_err(bad)?,
            "eval_points" => self.eval_points = parse_usize(value).map_err(bad)?,
            "regression_points" => self.regression_points = parse_usize(value).map_err(bad)?,
            "two_scale_lambda" => self.two_scale_lambda = parse_real(value).map_err(bad)?,
            "spectrum_bins" => self.spectrum_bins = parse_list(value, parse_usize).map_err(bad)?,
            "flow_eta" => self.flow_eta = parse_real(value).map_err(bad)?,
            "flow_steps" => self.flow_steps = parse_usize(value).map_err(bad)?,
            "workers" => self.workers = parse_usize(value).map_err(bad)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(Error::Config(format!("line {}: unknown key '{k}'", n + 1)));
            }
            if pairs.iter().any(|(p, _): &(&str, &str)| *p == k) {
                return Err(Error::Config(format!(
                    "line {}: duplicate key '{k}'",
                    n + 1
                )));
            }
            pairs.push((k, v));
        }
        let lookup = |key: &str| pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let mut cfg = match (lookup("preset"), lookup("experiment")) {
            (Some(p), _) if PRESETS.contains(&p) => Self::preset(p)?,
            (_, Some(e)) => Self::preset(e.parse::<Experiment>()?.default_preset())?,
            (Some(p), None) => {
                return Err(Error::Config(format!(
                    "unknown preset '{p}' and no experiment given"
                )))
            }
            (None, None) => {
                return Err(Error::Config(
                    "config needs a preset or an experiment".into(),
                ))
            }
        };
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return fail("hidden_widths must be nonempty and positive");
        }
        if self.n_c == 0 {
            return fail("n_c must be positive");
        }
        if !(self.lambda_b >= 0.0) || !(self.two_scale_lambda >= 0.0) {
            return fail("boundary weights must be nonnegative");
        }
        if self.epsilons.is_empty() || self.epsilons.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
            return fail("epsilons must be a nonempty list of positive reals");
        }
        if self.n_seeds == 0 || self.trials == 0 || self.workers == 0 {
            return fail("n_seeds, trials and workers must be positive");
        }
        if self.eval_points < 2 || self.regression_points < 1 {
            return fail("eval_points must be at least 2 and regression_points at least 1");
        }
        if !(self.flow_eta > 0.0) {
            return fail("flow_eta must be positive");
        }
        Ok(())
    }

    /// Full `key=value` listing in a fixed key order.
    pub fn to_text(&self) -> String {
        let reals = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let ints = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let values: Vec<String> = vec![
            self.experiment.to_string(),
            self.preset.clone(),
            ints(&self.hidden_widths),
            self.activation.to_string(),
            self.init.to_string(),
            self.trained_init.to_string(),
            self.n_c.to_string(),
            format!("{:?}", self.lambda_b),
            reals(&self.epsilons),
            self.seed.to_string(),
            self.n_seeds.to_string(),
            self.trials.to_string(),
            self.phase_init.to_string(),
            self.phase_trained.to_string(),
            format_schedule(&self.schedule),
            format_schedule(&self.regression_schedule),
            format_schedule(&self.poisson_schedule),
            format_schedule(&self.darcy_schedule),
            self.record_stride.to_string(),
            self.eval_points.to_string(),
            self.regression_points.to_string(),
            format!("{:?}", self.two_scale_lambda),
            ints(&self.spectrum_bins),
            format!("{:?}", self.flow_eta),
            self.flow_steps.to_string(),
            self.workers.to_string(),
            self.out_dir.display().to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

fn parse_usize(s: &str) -> std::result::Result<usize, String> {
    s.trim().parse().map_err(|e| format!("'{s}': {e}"))
}

/// A real, also accepting `p/q` fractions such as `1/32`.
pub fn parse_real(s: &str) -> std::result::Result<f64, String> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => {
            let p: f64 = p.trim().parse().map_err(|e| format!("'{s}': {e}"))?;
            let q: f64 = q.trim().parse().map_err(|e| format!("'{s}': {e}"))?;
            p / q
        }
        None => s.parse().map_err(|e| format!("'{s}': {e}"))?,
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn parse_list<T>(
    s: &str,
    item: fn(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Vec<T>, String> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(item).collect()
}

fn parse_stages(s: &str) -> Result<Vec<TrainStage>> {
    if s.trim().is_empty() {
        Ok(Vec::new())
    } else {
        parse_schedule(s)
    }
}
