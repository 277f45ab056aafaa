//! Experiment drivers. Each `run_*` function writes its files into `cfg.out_dir` and returns
//! an in-memory report with the same numbers.

use std::f64::consts::PI;
use std::fmt;
use std::fs;

use rayon::prelude::*;
use serde_json::json;

use crate::config::{ExperimentConfig, InitKind};
use crate::eigen::{median, positive_condition_ratio, sym_eigenvalues};
use crate::error::{Error, Result};
use crate::loss::{LossConfig, PinnObjective, RegressionObjective};
use crate::network::{init_glorot, init_normal, JetOrder, JetTape, MlpArchitecture, ParameterSet};
use crate::ntk::{assemble_ntk, flow_consistency_check, frobenius_norm, FlowReport};
use crate::optim::{train, Objective, RecordOptions, TrainHistory, TrainStage};
use crate::output::{fmt_real, write_csv, write_status, write_summary};
use crate::pde::{exact_frequency_poisson, exact_two_scale, make_grid, BvpSpec, GridScheme};
use crate::spectral::{
    dft_magnitude, half_decay_iteration, ordering_inversions, periodic_grid, ErrorSpectrum,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Trained,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Trained => "trained",
        })
    }
}

fn init_params(kind: InitKind, arch: &MlpArchitecture, seed: u64) -> ParameterSet {
    match kind {
        InitKind::Normal => init_normal(arch, seed),
        InitKind::Glorot => init_glorot(arch, seed),
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn prepare(cfg: &ExperimentConfig) -> Result<MlpArchitecture> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    MlpArchitecture::new(cfg.hidden_widths.clone(), cfg.activation)
}

/// `n` equispaced points on `[lo, hi]`, both endpoints included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|i| if i == n - 1 { hi } else { lo + h * i as f64 })
        .collect()
}

fn predict(params: &ParameterSet, arch: &MlpArchitecture, xs: &[f64]) -> Result<Vec<f64>> {
    Ok(
        JetTape::forward_with_order(params, arch, xs, JetOrder::Value)?
            .values()
            .to_vec(),
    )
}

fn history_rows(history: &TrainHistory) -> Vec<Vec<String>> {
    history
        .records
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                r.stage.to_string(),
                fmt_real(r.loss),
            ]
        })
        .collect()
}

fn status_text(aborted: &[String]) -> String {
    if aborted.is_empty() {
        "ok".to_string()
    } else {
        format!("partial: {}", aborted.join("; "))
    }
}

/// Least-squares slope of `ln y` against `ln x`. `None` with fewer than two distinct `x` or
/// any nonpositive entry.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 1e-24) {
        return None;
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

// ---------------------------------------------------------------------------------------
// Frequency principle

#[derive(Debug, Clone)]
pub struct FreqPrincipleReport {
    pub spectra: Vec<ErrorSpectrum>,
    pub history: TrainHistory,
    /// `(k, first iteration with |ĝ_k| below half its initial value)`.
    pub half_decay: Vec<(usize, Option<usize>)>,
    pub inversions: usize,
    pub aborted: Option<String>,
}

pub fn run_freq_principle(cfg: &ExperimentConfig) -> Result<FreqPrincipleReport> {
    let arch = prepare(cfg)?;
    let spec = BvpSpec::frequency_poisson();
    let grid = make_grid(&spec, cfg.n_c, GridScheme::Equispaced)?;
    let loss_cfg = LossConfig::new(cfg.lambda_b, grid)?;
    let objective = PinnObjective::new(&spec, &arch, &loss_cfg)?;
    let (lo, hi) = spec.domain();
    let xs = periodic_grid(lo, hi, cfg.eval_points);
    let exact: Vec<f64> = xs.iter().map(|&x| exact_frequency_poisson(x)).collect();

    let theta0 = init_params(cfg.init, &arch, cfg.seed).flatten();
    let mut spectra = Vec::new();
    let mut failure: Option<Error> = None;
    let mut on_record = |it: usize, theta: &[f64]| {
        if failure.is_some() {
            return;
        }
        let step = ParameterSet::unflatten(&arch, theta)
            .and_then(|p| predict(&p, &arch, &xs))
            .and_then(|pred| {
                let err: Vec<f64> = pred.iter().zip(&exact).map(|(p, e)| p - e).collect();
                dft_magnitude(&err, it)
            });
        match step {
            Ok(s) => spectra.push(s),
            Err(e) => failure = Some(e),
        }
    };
    let opts = RecordOptions {
        stride: cfg.record_stride,
        ..RecordOptions::default()
    };
    let outcome = train(&objective, &theta0, &cfg.schedule, opts, &mut on_record)?;
    if let Some(e) = failure {
        return Err(e);
    }

    let half_decay: Vec<(usize, Option<usize>)> = cfg
        .spectrum_bins
        .iter()
        .map(|&k| (k, half_decay_iteration(&spectra, k)))
        .collect();
    let inversions = ordering_inversions(&half_decay.iter().map(|(_, d)| *d).collect::<Vec<_>>());

    let rows: Vec<Vec<String>> = spectra
        .iter()
        .flat_map(|s| {
            s.magnitudes
                .iter()
                .enumerate()
                .map(move |(k, m)| vec![s.iteration.to_string(), k.to_string(), fmt_real(*m)])
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("spectra.csv"),
        cfg,
        &["iteration", "k", "magnitude"],
        &rows,
    )?;
    write_csv(
        &cfg.out_dir.join("history.csv"),
        cfg,
        &["iteration", "stage", "loss"],
        &history_rows(&outcome.history),
    )?;
    let aborted: Vec<String> = outcome.aborted.iter().cloned().collect();
    write_status(&cfg.out_dir, &status_text(&aborted))?;
    write_summary(
        &cfg.out_dir,
        &json!({
            "experiment": cfg.experiment.to_string(),
            "seed": cfg.seed,
            "initial_loss": outcome.history.records.first().map(|r| r.loss),
            "final_loss": outcome.history.last_loss(),
            "half_decay": half_decay.iter().map(|(k, d)| json!({"k": k, "iteration": d})).collect::<Vec<_>>(),
            "inversions": inversions,
            "aborted": outcome.aborted,
        }),
    )?;
    Ok(FreqPrincipleReport {
        spectra,
        history: outcome.history,
        half_decay,
        inversions,
        aborted: outcome.aborted,
    })
}

// ---------------------------------------------------------------------------------------
// NTK scan and spectrum

/// One NTK evaluation in the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct NtkRun {
    pub phase: Phase,
    pub epsilon: f64,
    pub seed: u64,
    pub frob_kuu: f64,
    /// Three largest eigenvalues of `K_uu`, descending.
    pub top_eigenvalues: [f64; 3],
    pub aborted: Option<String>,
}

/// Seed-averaged row of the scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanRow {
    pub phase: Phase,
    pub epsilon: f64,
    pub frob_kuu: f64,
    pub top_eigenvalues: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct NtkScanReport {
    pub runs: Vec<NtkRun>,
    pub rows: Vec<ScanRow>,
    pub slopes: Vec<(Phase, Option<f64>)>,
}

impl NtkScanReport {
    pub fn slope(&self, phase: Phase) -> Option<f64> {
        self.slopes
            .iter()
            .find(|(p, _)| *p == phase)
            .and_then(|(_, s)| *s)
    }
}

fn phases(cfg: &ExperimentConfig) -> Vec<Phase> {
    let mut v = Vec::new();
    if cfg.phase_init {
        v.push(Phase::Init);
    }
    if cfg.phase_trained {
        v.push(Phase::Trained);
    }
    v
}

/// Parameters at which the NTK is evaluated: the initialization, or the result of training
/// the PINN from a fresh initialization.
fn ntk_params(
    cfg: &ExperimentConfig,
    arch: &MlpArchitecture,
    spec: &BvpSpec,
    loss_cfg: &LossConfig,
    phase: Phase,
    seed: u64,
) -> Result<(ParameterSet, Option<String>)> {
    match phase {
        Phase::Init => Ok((init_params(cfg.init, arch, seed), None)),
        Phase::Trained => {
            let objective = PinnObjective::new(spec, arch, loss_cfg)?;
            let theta0 = init_params(cfg.trained_init, arch, seed).flatten();
            let opts = RecordOptions {
                stride: 0,
                ..RecordOptions::default()
            };
            let out = train(&objective, &theta0, &cfg.schedule, opts, &mut |_, _| {})?;
            Ok((ParameterSet::unflatten(arch, &out.theta)?, out.aborted))
        }
    }
}

fn ntk_setup(cfg: &ExperimentConfig, eps: f64) -> Result<(BvpSpec, LossConfig)> {
    let spec = BvpSpec::ntk_darcy(eps)?;
    let grid = make_grid(&spec, cfg.n_c, GridScheme::Equispaced)?;
    let loss_cfg = LossConfig::new(cfg.lambda_b, grid)?;
    Ok((spec, loss_cfg))
}

/// Seed for replicate `rep` at ε index `i`.
pub fn scan_seed(base: u64, eps_index: usize, rep: usize) -> u64 {
    base + eps_index as u64 + 1000 * rep as u64
}

pub fn run_ntk_scan(cfg: &ExperimentConfig) -> Result<NtkScanReport> {
    let arch = prepare(cfg)?;
    let mut jobs = Vec::new();
    for phase in phases(cfg) {
        for (i, &eps) in cfg.epsilons.iter().enumerate() {
            for rep in 0..cfg.n_seeds {
                jobs.push((phase, eps, scan_seed(cfg.seed, i, rep)));
            }
        }
    }
    let run_one = |&(phase, eps, seed): &(Phase, f64, u64)| -> Result<NtkRun> {
        let (spec, loss_cfg) = ntk_setup(cfg, eps)?;
        let (params, aborted) = ntk_params(cfg, &arch, &spec, &loss_cfg, phase, seed)?;
        let ntk = assemble_ntk(&spec, &params, &arch, &loss_cfg)?;
        let eig = sym_eigenvalues(&ntk.k_uu)?;
        let top = [0, 1, 2].map(|j| eig.get(j).copied().unwrap_or(f64::NAN));
        Ok(NtkRun {
            phase,
            epsilon: eps,
            seed,
            frob_kuu: frobenius_norm(&ntk.k_uu),
            top_eigenvalues: top,
            aborted,
        })
    };
    let runs: Vec<NtkRun> = pool(cfg.workers)?
        .install(|| jobs.par_iter().map(run_one).collect::<Vec<_>>())
        .into_iter()
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut slopes = Vec::new();
    for phase in phases(cfg) {
        let mut eps_list = Vec::new();
        let mut norms = Vec::new();
        for &eps in &cfg.epsilons {
            let group: Vec<&NtkRun> = runs
                .iter()
                .filter(|r| r.phase == phase && r.epsilon == eps)
                .collect();
            let n = group.len() as f64;
            let frob = group.iter().map(|r| r.frob_kuu).sum::<f64>() / n;
            let top =
                [0, 1, 2].map(|j| group.iter().map(|r| r.top_eigenvalues[j]).sum::<f64>() / n);
            rows.push(ScanRow {
                phase,
                epsilon: eps,
                frob_kuu: frob,
                top_eigenvalues: top,
            });
            eps_list.push(eps);
            norms.push(frob);
        }
        slopes.push((phase, loglog_slope(&eps_list, &norms)));
    }

    let scan_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_real(r.epsilon),
                fmt_real(r.frob_kuu),
                fmt_real(r.top_eigenvalues[0]),
                fmt_real(r.top_eigenvalues[1]),
                fmt_real(r.top_eigenvalues[2]),
                r.phase.to_string(),
            ]
        })
        .collect();
    let columns = [
        "epsilon", "frob_kuu", "lambda1", "lambda2", "lambda3", "phase",
    ];
    write_csv(&cfg.out_dir.join("scan.csv"), cfg, &columns, &scan_rows)?;
    let run_rows: Vec<Vec<String>> = runs
        .iter()
        .map(|r| {
            vec![
                fmt_real(r.epsilon),
                r.seed.to_string(),
                fmt_real(r.frob_kuu),
                fmt_real(r.top_eigenvalues[0]),
                fmt_real(r.top_eigenvalues[1]),
                fmt_real(r.top_eigenvalues[2]),
                r.phase.to_string(),
            ]
        })
        .collect();
    let columns = [
        "epsilon", "seed", "frob_kuu", "lambda1", "lambda2", "lambda3", "phase",
    ];
    write_csv(&cfg.out_dir.join("scan_runs.csv"), cfg, &columns, &run_rows)?;

    let aborted: Vec<String> = runs
        .iter()
        .filter_map(|r| {
            r.aborted
                .as_ref()
                .map(|a| format!("eps={} seed={}: {a}", r.epsilon, r.seed))
        })
        .collect();
    write_status(&cfg.out_dir, &status_text(&aborted))?;
    write_summary(
        &cfg.out_dir,
        &json!({
            "experiment": cfg.experiment.to_string(),
            "seed": cfg.seed,
            "slopes": slopes.iter().map(|(p, s)| json!({"phase": p.to_string(), "slope": s})).collect::<Vec<_>>(),
        }),
    )?;
    Ok(NtkScanReport { runs, rows, slopes })
}

#[derive(Debug, Clone)]
pub struct PhaseSpectrum {
    pub phase: Phase,
    /// All eigenvalues of `K_uu`, descending.
    pub eigenvalues: Vec<f64>,
    pub condition_ratio: Option<f64>,
    pub median: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct NtkSpectrumReport {
    pub epsilon: f64,
    pub phases: Vec<PhaseSpectrum>,
}

impl NtkSpectrumReport {
    pub fn phase(&self, phase: Phase) -> Option<&PhaseSpectrum> {
        self.phases.iter().find(|p| p.phase == phase)
    }
}

/// Spectral summary of one symmetric matrix.
pub fn spectrum_summary(phase: Phase, matrix: &ndarray::Array2<f64>) -> Result<PhaseSpectrum> {
    let eigenvalues = sym_eigenvalues(matrix)?;
    Ok(PhaseSpectrum {
        phase,
        condition_ratio: positive_condition_ratio(&eigenvalues),
        median: median(&eigenvalues),
        eigenvalues,
    })
}

pub fn run_ntk_spectrum(cfg: &ExperimentConfig) -> Result<NtkSpectrumReport> {
    let arch = prepare(cfg)?;
    let eps = cfg.epsilons[0];
    let (spec, loss_cfg) = ntk_setup(cfg, eps)?;
    let jobs = phases(cfg);
    let results: Vec<(PhaseSpectrum, Option<String>)> = pool(cfg.workers)?
        .install(|| {
            jobs.par_iter()
                .map(|&phase| {
                    let (params, aborted) =
                        ntk_params(cfg, &arch, &spec, &loss_cfg, phase, cfg.seed)?;
                    let ntk = assemble_ntk(&spec, &params, &arch, &loss_cfg)?;
                    Ok((spectrum_summary(phase, &ntk.k_uu)?, aborted))
                })
                .collect::<Vec<Result<_>>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let rows: Vec<Vec<String>> = results
        .iter()
        .flat_map(|(p, _)| {
            p.eigenvalues
                .iter()
                .enumerate()
                .map(move |(i, v)| vec![p.phase.to_string(), i.to_string(), fmt_real(*v)])
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("spectrum.csv"),
        cfg,
        &["phase", "index", "eigenvalue"],
        &rows,
    )?;
    let aborted: Vec<String> = results.iter().filter_map(|(_, a)| a.clone()).collect();
    write_status(&cfg.out_dir, &status_text(&aborted))?;
    write_summary(
        &cfg.out_dir,
        &json!({
            "experiment": cfg.experiment.to_string(),
            "seed": cfg.seed,
            "epsilon": eps,
            "phases": results.iter().map(|(p, _)| json!({
                "phase": p.phase.to_string(),
                "lambda_max": p.eigenvalues.first(),
                "condition_ratio": p.condition_ratio,
                "median": p.median,
            })).collect::<Vec<_>>(),
        }),
    )?;
    Ok(NtkSpectrumReport {
        epsilon: eps,
        phases: results.into_iter().map(|(p, _)| p).collect(),
    })
}

// ---------------------------------------------------------------------------------------
// Two-scale comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Regression,
    Poisson,
    Darcy,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Regression, Method::Poisson, Method::Darcy];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Regression => "regression",
            Method::Poisson => "poisson_pinn",
            Method::Darcy => "darcy_pinn",
        })
    }
}

#[derive(Debug, Clone)]
pub struct MethodResult {
    pub method: Method,
    /// Trial-averaged prediction on the evaluation grid (NaN when no trial completed).
    pub mean_prediction: Vec<f64>,
    pub max_abs_error: f64,
    /// Pointwise variance across completed trials, averaged over the grid.
    pub mean_variance: f64,
    pub completed: usize,
    pub final_losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TwoScaleReport {
    pub xs: Vec<f64>,
    pub exact: Vec<f64>,
    pub methods: Vec<MethodResult>,
    pub aborted: Vec<String>,
}

impl TwoScaleReport {
    pub fn method(&self, m: Method) -> &MethodResult {
        self.methods
            .iter()
            .find(|r| r.method == m)
            .expect("all methods present")
    }
}

struct TrialResult {
    prediction: Vec<f64>,
    final_loss: f64,
    history: TrainHistory,
    aborted: Option<String>,
}

fn run_trial(
    cfg: &ExperimentConfig,
    arch: &MlpArchitecture,
    eps: f64,
    method: Method,
    seed: u64,
    xs: &[f64],
) -> Result<TrialResult> {
    let theta0 = init_params(cfg.init, arch, seed).flatten();
    let opts = RecordOptions {
        stride: cfg.record_stride,
        ..RecordOptions::default()
    };
    let (objective, schedule): (Box<dyn Objective>, &[TrainStage]) = match method {
        Method::Regression => {
            let samples: Vec<(f64, f64)> = linspace(-PI, PI, cfg.regression_points)
                .into_iter()
                .map(|x| (x, exact_two_scale(eps, x)))
                .collect();
            (
                Box::new(RegressionObjective::new(arch, &samples)?),
                &cfg.regression_schedule,
            )
        }
        Method::Poisson | Method::Darcy => {
            let spec = if method == Method::Poisson {
                BvpSpec::two_scale_poisson(eps)?
            } else {
                BvpSpec::two_scale_darcy(eps)?
            };
            let grid = make_grid(&spec, cfg.n_c, GridScheme::Equispaced)?;
            let loss_cfg = LossConfig::new(cfg.two_scale_lambda, grid)?;
            let sched: &[TrainStage] = if method == Method::Poisson {
                &cfg.poisson_schedule
            } else {
                &cfg.darcy_schedule
            };
            (Box::new(PinnObjective::new(&spec, arch, &loss_cfg)?), sched)
        }
    };
    let out = train(objective.as_ref(), &theta0, schedule, opts, &mut |_, _| {})?;
    let params = ParameterSet::unflatten(arch, &out.theta)?;
    Ok(TrialResult {
        prediction: predict(&params, arch, xs)?,
        final_loss: out.history.last_loss().unwrap_or(f64::NAN),
        history: out.history,
        aborted: out.aborted,
    })
}

pub fn run_two_scale(cfg: &ExperimentConfig) -> Result<TwoScaleReport> {
    let arch = prepare(cfg)?;
    let eps = cfg.epsilons[0];
    let xs = linspace(-PI, PI, cfg.eval_points);
    let exact: Vec<f64> = xs.iter().map(|&x| exact_two_scale(eps, x)).collect();

    let mut jobs = Vec::new();
    for method in Method::ALL {
        for t in 0..cfg.trials {
            jobs.push((method, cfg.seed + t as u64));
        }
    }
    let results: Vec<TrialResult> = pool(cfg.workers)?
        .install(|| {
            jobs.par_iter()
                .map(|&(m, seed)| run_trial(cfg, &arch, eps, m, seed, &xs))
                .collect::<Vec<_>>()
        })
        .into_iter()
        .collect::<Result<_>>()?;

    let mut methods = Vec::new();
    let mut aborted = Vec::new();
    for method in Method::ALL {
        let trials: Vec<(&(Method, u64), &TrialResult)> = jobs
            .iter()
            .zip(&results)
            .filter(|((m, _), _)| *m == method)
            .collect();
        for ((_, seed), r) in &trials {
            if let Some(a) = &r.aborted {
                aborted.push(format!("{method} seed={seed}: {a}"));
            }
        }
        let done: Vec<&TrialResult> = trials
            .iter()
            .map(|(_, r)| *r)
            .filter(|r| r.aborted.is_none())
            .collect();
        let n = done.len() as f64;
        let mean: Vec<f64> = (0..xs.len())
            .map(|i| done.iter().map(|r| r.prediction[i]).sum::<f64>() / n)
            .collect();
        let variance = (0..xs.len())
            .map(|i| {
                done.iter()
                    .map(|r| (r.prediction[i] - mean[i]).powi(2))
                    .sum::<f64>()
                    / n
            })
            .sum::<f64>()
            / xs.len() as f64;
        let max_err = if done.is_empty() {
            f64::NAN
        } else {
            mean.iter()
                .zip(&exact)
                .map(|(m, e)| (m - e).abs())
                .fold(0.0, f64::max)
        };
        methods.push(MethodResult {
            method,
            mean_prediction: mean,
            max_abs_error: max_err,
            mean_variance: variance,
            completed: done.len(),
            final_losses: trials.iter().map(|(_, r)| r.final_loss).collect(),
        });
    }

    let pred_rows: Vec<Vec<String>> = (0..xs.len())
        .map(|i| {
            let mut row = vec![fmt_real(xs[i]), fmt_real(exact[i])];
            row.extend(methods.iter().map(|m| fmt_real(m.mean_prediction[i])));
            row
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("predictions.csv"),
        cfg,
        &["x", "u_exact", "u_R", "u_P", "u_D"],
        &pred_rows,
    )?;
    let err_rows: Vec<Vec<String>> = methods
        .iter()
        .map(|m| {
            vec![
                m.method.to_string(),
                fmt_real(m.max_abs_error),
                fmt_real(m.mean_variance),
                m.completed.to_string(),
                cfg.trials.to_string(),
            ]
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("errors.csv"),
        cfg,
        &[
            "method",
            "max_abs_error",
            "mean_variance",
            "completed_trials",
            "trials",
        ],
        &err_rows,
    )?;
    let hist_rows: Vec<Vec<String>> = jobs
        .iter()
        .zip(&results)
        .flat_map(|((m, seed), r)| {
            r.history.records.iter().map(move |rec| {
                vec![
                    m.to_string(),
                    (seed - cfg.seed).to_string(),
                    rec.iteration.to_string(),
                    rec.stage.to_string(),
                    fmt_real(rec.loss),
                ]
            })
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("history.csv"),
        cfg,
        &["method", "trial", "iteration", "stage", "loss"],
        &hist_rows,
    )?;
    write_status(&cfg.out_dir, &status_text(&aborted))?;
    write_summary(
        &cfg.out_dir,
        &json!({
            "experiment": cfg.experiment.to_string(),
            "seed": cfg.seed,
            "epsilon": eps,
            "methods": methods.iter().map(|m| json!({
                "method": m.method.to_string(),
                "max_abs_error": m.max_abs_error,
                "mean_variance": m.mean_variance,
                "completed_trials": m.completed,
                "final_losses": m.final_losses,
            })).collect::<Vec<_>>(),
            "aborted": aborted,
        }),
    )?;
    Ok(TwoScaleReport {
        xs,
        exact,
        methods,
        aborted,
    })
}

// ---------------------------------------------------------------------------------------
// Flow consistency

#[derive(Debug, Clone)]
pub struct FlowCheckReport {
    pub reports: Vec<FlowReport>,
}

impl FlowCheckReport {
    /// `ratio(η/2) / ratio(η)` for consecutive rows with conclusive ratios.
    pub fn halving_factors(&self) -> Vec<f64> {
        self.reports
            .windows(2)
            .filter_map(|w| Some(w[1].ratio()? / w[0].ratio()?))
            .collect()
    }
}

/// Runs the flow check at `η_0 · 2^{-k}`, `k = 0..steps`, on an explicit problem.
pub fn flow_sequence(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    loss_cfg: &LossConfig,
    eta0: f64,
    steps: usize,
) -> Result<FlowCheckReport> {
    let reports = (0..steps)
        .map(|k| flow_consistency_check(spec, params, arch, loss_cfg, eta0 * 0.5f64.powi(k as i32)))
        .collect::<Result<_>>()?;
    Ok(FlowCheckReport { reports })
}

pub fn run_flow_check(cfg: &ExperimentConfig) -> Result<FlowCheckReport> {
    let arch = prepare(cfg)?;
    let (spec, loss_cfg) = ntk_setup(cfg, cfg.epsilons[0])?;
    let params = init_params(cfg.init, &arch, cfg.seed);
    let report = flow_sequence(
        &spec,
        &params,
        &arch,
        &loss_cfg,
        cfg.flow_eta,
        cfg.flow_steps,
    )?;
    let rows: Vec<Vec<String>> = report
        .reports
        .iter()
        .map(|r| match r {
            FlowReport::Ratio { eta, ratio, .. } => {
                vec![fmt_real(*eta), fmt_real(*ratio), "ok".into()]
            }
            FlowReport::Inconclusive { eta, .. } => {
                vec![fmt_real(*eta), String::new(), "inconclusive".into()]
            }
        })
        .collect();
    write_csv(
        &cfg.out_dir.join("flow_check.csv"),
        cfg,
        &["eta", "ratio", "status"],
        &rows,
    )?;
    let inconclusive = report
        .reports
        .iter()
        .filter(|r| r.ratio().is_none())
        .count();
    write_status(
        &cfg.out_dir,
        if inconclusive == 0 {
            "ok"
        } else {
            "inconclusive"
        },
    )?;
    write_summary(
        &cfg.out_dir,
        &json!({
            "experiment": cfg.experiment.to_string(),
            "seed": cfg.seed,
            "ratios": report.reports.iter().map(|r| r.ratio()).collect::<Vec<_>>(),
            "halving_factors": report.halving_factors(),
        }),
    )?;
    Ok(report)
}

/// Dispatches on `cfg.experiment`, discarding the in-memory report.
pub fn run(cfg: &ExperimentConfig) -> Result<()> {
    use crate::config::Experiment::*;
    match cfg.experiment {
        FreqPrinciple => run_freq_principle(cfg).map(|_| ()),
        NtkScan => run_ntk_scan(cfg).map(|_| ()),
        NtkSpectrum => run_ntk_spectrum(cfg).map(|_| ()),
        TwoScale => run_two_scale(cfg).map(|_| ()),
        FlowCheck => run_flow_check(cfg).map(|_| ()),
    }
}
