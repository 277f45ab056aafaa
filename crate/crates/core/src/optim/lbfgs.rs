//! Limited-memory BFGS with a strong-Wolfe line search.

use std::collections::VecDeque;

use crate::error::Result;

use super::{dot, norm, Objective};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsConfig {
    pub history: usize,
    pub c1: f64,
    pub c2: f64,
    pub max_line_search: usize,
    pub grad_tol: f64,
    pub rel_decrease_tol: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            c1: 1e-4,
            c2: 0.9,
            max_line_search: 20,
            grad_tol: 1e-9,
            rel_decrease_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LbfgsTermination {
    GradientNorm,
    RelativeDecrease,
    LineSearchFailure,
    MaxIterations,
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub theta: Vec<f64>,
    pub loss: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: LbfgsTermination,
    /// Loss after every accepted iteration, starting with the input loss.
    pub losses: Vec<f64>,
}

struct Point {
    alpha: f64,
    theta: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    slope: f64,
}

fn probe<O: Objective + ?Sized>(obj: &O, x: &[f64], d: &[f64], alpha: f64) -> Result<Point> {
    let theta: Vec<f64> = x.iter().zip(d).map(|(xi, di)| xi + alpha * di).collect();
    let (f, g) = obj.value_grad(&theta)?;
    let slope = dot(&g, d);
    Ok(Point {
        alpha,
        theta,
        f,
        g,
        slope,
    })
}

/// Minimizer of the cubic through two points with known values and slopes, or bisection
/// when it is not defined.
fn cubic_min(a: &Point, b: &Point) -> f64 {
    let d1 = a.slope + b.slope - 3.0 * (a.f - b.f) / (a.alpha - b.alpha);
    let disc = d1 * d1 - a.slope * b.slope;
    if !disc.is_finite() || disc < 0.0 {
        return 0.5 * (a.alpha + b.alpha);
    }
    let d2 = (b.alpha - a.alpha).signum() * disc.sqrt();
    let t = b.alpha - (b.alpha - a.alpha) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
    if t.is_finite() {
        t
    } else {
        0.5 * (a.alpha + b.alpha)
    }
}

/// Strong-Wolfe line search. `Ok(None)` when no acceptable step was found within the budget;
/// the best Armijo point seen is returned as the second element in that case.
fn strong_wolfe<O: Objective + ?Sized>(
    obj: &O,
    x: &[f64],
    f0: f64,
    g0: &[f64],
    d: &[f64],
    alpha0: f64,
    cfg: &LbfgsConfig,
) -> Result<(Option<Point>, Option<Point>)> {
    let slope0 = dot(g0, d);
    let origin = Point {
        alpha: 0.0,
        theta: x.to_vec(),
        f: f0,
        g: g0.to_vec(),
        slope: slope0,
    };
    let armijo = |p: &Point| p.f.is_finite() && p.f <= f0 + cfg.c1 * p.alpha * slope0;
    let curvature = |p: &Point| p.slope.abs() <= -cfg.c2 * slope0;

    let mut best: Option<Point> = None;
    let keep_best = |best: &mut Option<Point>, p: &Point| {
        if armijo(p) && p.f < f0 && best.as_ref().is_none_or(|b| p.f < b.f) {
            *best = Some(Point {
                alpha: p.alpha,
                theta: p.theta.clone(),
                f: p.f,
                g: p.g.clone(),
                slope: p.slope,
            });
        }
    };

    let mut evals = 0;
    let mut prev = origin;
    let mut alpha = alpha0;
    let (mut lo, mut hi);
    loop {
        if evals >= cfg.max_line_search {
            return Ok((None, best));
        }
        let p = probe(obj, x, d, alpha)?;
        evals += 1;
        keep_best(&mut best, &p);
        if !armijo(&p) || (evals > 1 && p.f >= prev.f) {
            lo = prev;
            hi = p;
            break;
        }
        if curvature(&p) {
            return Ok((Some(p), best));
        }
        if p.slope >= 0.0 {
            lo = p;
            hi = prev;
            break;
        }
        alpha *= 2.0;
        prev = p;
    }

    loop {
        if evals >= cfg.max_line_search {
            return Ok((None, best));
        }
        let (a, b) = (lo.alpha.min(hi.alpha), lo.alpha.max(hi.alpha));
        let width = b - a;
        if width <= f64::EPSILON * b.max(1.0) {
            return Ok((None, best));
        }
        let t = cubic_min(&lo, &hi).clamp(a + 0.1 * width, b - 0.1 * width);
        let p = probe(obj, x, d, t)?;
        evals += 1;
        keep_best(&mut best, &p);
        if !armijo(&p) || p.f >= lo.f {
            hi = p;
        } else {
            if curvature(&p) {
                return Ok((Some(p), best));
            }
            if p.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = p;
        }
    }
}

fn two_loop(g: &[f64], pairs: &VecDeque<(Vec<f64>, Vec<f64>, f64)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(pairs.len());
    for (s, y, rho) in pairs.iter().rev() {
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push(a);
    }
    if let Some((s, y, _)) = pairs.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Runs L-BFGS from `theta0` for at most `max_iters` iterations.
///
/// `on_iter(k, loss, θ)` is called after every accepted iteration `k ≥ 1`.
pub fn lbfgs_run<O: Objective + ?Sized>(
    obj: &O,
    theta0: &[f64],
    max_iters: usize,
    cfg: &LbfgsConfig,
    on_iter: &mut dyn FnMut(usize, f64, &[f64]),
) -> Result<LbfgsOutcome> {
    let (mut f, mut g) = obj.value_grad(theta0)?;
    let mut theta = theta0.to_vec();
    let mut losses = vec![f];
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(cfg.history);

    let finish = |theta, f, g: &[f64], k, term, losses| LbfgsOutcome {
        theta,
        loss: f,
        grad_norm: norm(g),
        iterations: k,
        termination: term,
        losses,
    };

    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Ok(finish(theta, f, &g, 0, LbfgsTermination::NonFinite, losses));
    }

    let mut k = 0;
    loop {
        if norm(&g) < cfg.grad_tol {
            return Ok(finish(
                theta,
                f,
                &g,
                k,
                LbfgsTermination::GradientNorm,
                losses,
            ));
        }
        if k >= max_iters {
            return Ok(finish(
                theta,
                f,
                &g,
                k,
                LbfgsTermination::MaxIterations,
                losses,
            ));
        }

        let mut d = two_loop(&g, &pairs);
        if !(dot(&d, &g) < 0.0) {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
        }
        let alpha0 = if pairs.is_empty() {
            (1.0 / norm(&g)).min(1.0)
        } else {
            1.0
        };

        let (found, best) = strong_wolfe(obj, &theta, f, &g, &d, alpha0, cfg)?;
        let (step, failed) = match (found, best) {
            (Some(p), _) => (p, false),
            (None, Some(p)) => (p, true),
            (None, None) => {
                return Ok(finish(
                    theta,
                    f,
                    &g,
                    k,
                    LbfgsTermination::LineSearchFailure,
                    losses,
                ));
            }
        };

        let s: Vec<f64> = step.theta.iter().zip(&theta).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = step.g.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / sy));
        }

        let f_old = f;
        theta = step.theta;
        f = step.f;
        g = step.g;
        k += 1;
        losses.push(f);
        on_iter(k, f, &theta);

        if failed {
            return Ok(finish(
                theta,
                f,
                &g,
                k,
                LbfgsTermination::LineSearchFailure,
                losses,
            ));
        }
        if (f_old - f).abs() <= cfg.rel_decrease_tol * f_old.abs().max(f.abs()).max(1.0) {
            return Ok(finish(
                theta,
                f,
                &g,
                k,
                LbfgsTermination::RelativeDecrease,
                losses,
            ));
        }
    }
}
