//! Independent oracles shared by the integration tests. Nothing here calls the jet or
//! tape machinery except through the public value-level functions being checked.
#![allow(dead_code)]

use ndarray::Array2;
use pinn_ntk::network::{
    forward_jet, forward_value, init_glorot, rng_from_seed, MlpArchitecture, ParameterSet,
};
use pinn_ntk::pde::BvpSpec;
use pinn_ntk::Activation;
use rand::Rng;

/// Fourth-order central first derivative.
pub fn fd1<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// Fourth-order central second derivative.
pub fn fd2<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

/// Sixth-order central first derivative.
pub fn fd1_6<F: Fn(f64) -> f64>(f: F, x: f64, h: f64) -> f64 {
    (f(x + 3.0 * h) - 9.0 * f(x + 2.0 * h) + 45.0 * f(x + h) - 45.0 * f(x - h)
        + 9.0 * f(x - 2.0 * h)
        - f(x - 3.0 * h))
        / (60.0 * h)
}

pub fn rel_err(got: f64, want: f64, floor: f64) -> f64 {
    (got - want).abs() / want.abs().max(floor)
}

pub fn frob(a: &Array2<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_frob_err(got: &Array2<f64>, want: &Array2<f64>) -> f64 {
    frob(&(got - want)) / frob(want)
}

/// Random architecture with `1..=max_depth` hidden layers of width `1..=max_width`.
pub fn random_arch<R: Rng>(rng: &mut R, max_depth: usize, max_width: usize) -> MlpArchitecture {
    let depth = rng.gen_range(1..=max_depth);
    let widths = (0..depth).map(|_| rng.gen_range(1..=max_width)).collect();
    let act = if rng.gen_bool(0.5) {
        Activation::Tanh
    } else {
        Activation::Logistic
    };
    MlpArchitecture::new(widths, act).unwrap()
}

/// Glorot weights with random nonzero biases, so every bias gradient is exercised.
pub fn random_params(arch: &MlpArchitecture, seed: u64) -> ParameterSet {
    let mut p = init_glorot(arch, seed);
    let mut rng = rng_from_seed(seed ^ 0x9e37_79b9);
    for layer in p.layers_mut() {
        layer.bias.mapv_inplace(|_| rng.gen_range(-0.5..0.5));
    }
    p
}

/// Central fourth-order difference of `g(θ)` along every parameter. Returns one row per
/// output component of `g`.
pub fn fd_param_jacobian<G: Fn(&ParameterSet) -> Vec<f64>>(
    arch: &MlpArchitecture,
    params: &ParameterSet,
    g: G,
    h: f64,
) -> Array2<f64> {
    let theta = params.flatten();
    let m = g(params).len();
    let mut jac = Array2::zeros((m, theta.len()));
    let eval = |l: usize, step: f64| {
        let mut t = theta.clone();
        t[l] += step;
        g(&ParameterSet::unflatten(arch, &t).unwrap())
    };
    for l in 0..theta.len() {
        let (p2, p1, m1, m2) = (eval(l, 2.0 * h), eval(l, h), eval(l, -h), eval(l, -2.0 * h));
        for i in 0..m {
            jac[[i, l]] = (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h);
        }
    }
    jac
}

/// `L^ε u` at `x` using the exact spatial jet and the problem's operator coefficients.
pub fn operator_value(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    x: f64,
) -> f64 {
    let jet = forward_jet(params, arch, x).unwrap();
    let (a, b) = spec.operator_coeffs(x);
    -(a * jet.d2 + b * jet.d1)
}

/// Hidden pre-activations `z^(l)` and post-activations `u^(l)` by plain loops.
fn plain_forward(
    params: &ParameterSet,
    arch: &MlpArchitecture,
    x: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let act = arch.activation();
    let layers = params.layers();
    let mut post = vec![vec![x]];
    let mut pre = vec![vec![]];
    for layer in &layers[..layers.len() - 1] {
        let prev = post.last().unwrap();
        let z: Vec<f64> = (0..layer.weights.nrows())
            .map(|g| {
                layer.bias[g]
                    + (0..prev.len())
                        .map(|k| layer.weights[[g, k]] * prev[k])
                        .sum::<f64>()
            })
            .collect();
        post.push(z.iter().map(|&v| act.eval(v)).collect());
        pre.push(z);
    }
    (pre, post)
}

/// `d/dx u^(l)_γ(x) = σ'(z^(l)_γ) Σ_k W^(l)_{γk} d/dx u^(l-1)_k(x)`, unrolled down to the
/// input without memoization. Every path through the network is visited explicitly.
fn hidden_derivative(
    params: &ParameterSet,
    pre: &[Vec<f64>],
    act: Activation,
    l: usize,
    gamma: usize,
) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let w = &params.layers()[l - 1].weights;
    let sum: f64 = (0..w.ncols())
        .map(|k| w[[gamma, k]] * hidden_derivative(params, pre, act, l - 1, k))
        .sum();
    act.derivs(pre[l][gamma]).d1 * sum
}

/// `u'(x)` from the explicit chain-rule recursion through every hidden layer.
pub fn chain_rule_derivative(params: &ParameterSet, arch: &MlpArchitecture, x: f64) -> f64 {
    let (pre, _) = plain_forward(params, arch, x);
    let depth = arch.depth();
    let out = &params.layers()[depth].weights;
    (0..out.ncols())
        .map(|g| out[[0, g]] * hidden_derivative(params, &pre, arch.activation(), depth, g))
        .sum()
}

/// Plain forward value, cross-checked against the crate's own value path.
pub fn value(params: &ParameterSet, arch: &MlpArchitecture, x: f64) -> f64 {
    forward_value(params, arch, x).unwrap()
}
