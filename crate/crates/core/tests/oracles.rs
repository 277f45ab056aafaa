mod common;

use std::f64::consts::PI;

use common::*;
use pinn_ntk::eigen::sym_eigenvalues;
use pinn_ntk::loss::{
    pinn_loss, pinn_loss_grad, regression_loss, regression_loss_grad, LossConfig,
};
use pinn_ntk::network::{init_normal, rng_from_seed, Jet2, MlpArchitecture, ParameterSet};
use pinn_ntk::ntk::{assemble_ntk, flow_consistency_check, residual_vector, FlowReport};
use pinn_ntk::optim::gd_step;
use pinn_ntk::pde::{
    apply_operator, exact_frequency_poisson, exact_two_scale, forcing_poisson_freq,
    forcing_poisson_twoscale, make_grid, BvpSpec, Forcing, GridScheme,
};
use pinn_ntk::spectral::{dft_magnitude, periodic_grid};
use pinn_ntk::Activation;
use rand::Rng;

fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], h: f64) -> Vec<f64> {
    (0..theta.len())
        .map(|l| {
            let at = |s: f64| {
                let mut t = theta.to_vec();
                t[l] += s;
                f(&t)
            };
            (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
        })
        .collect()
}

fn max_rel(got: &[f64], want: &[f64]) -> f64 {
    let inf = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    got.iter()
        .zip(want)
        .fold(0.0f64, |m, (g, w)| m.max((g - w).abs()))
        / inf
}

#[test]
fn pinn_loss_gradient_matches_finite_differences() {
    let arch = MlpArchitecture::new(vec![10, 10], Activation::Tanh).unwrap();
    let params = random_params(&arch, 4);
    for spec in [
        BvpSpec::two_scale_darcy(1.0 / 8.0).unwrap(),
        BvpSpec::two_scale_poisson(1.0 / 8.0).unwrap(),
    ] {
        let cfg =
            LossConfig::new(3.0, make_grid(&spec, 20, GridScheme::Equispaced).unwrap()).unwrap();
        let grad = pinn_loss_grad(&spec, &params, &arch, &cfg).unwrap();
        let fd = fd_gradient(
            |t| {
                pinn_loss(
                    &spec,
                    &ParameterSet::unflatten(&arch, t).unwrap(),
                    &arch,
                    &cfg,
                )
                .unwrap()
            },
            &params.flatten(),
            1e-4,
        );
        assert!(max_rel(&grad, &fd) < 1e-5, "{}", max_rel(&grad, &fd));
    }
}

#[test]
fn regression_gradient_matches_finite_differences() {
    let arch = MlpArchitecture::new(vec![8, 6], Activation::Logistic).unwrap();
    let params = random_params(&arch, 9);
    let samples: Vec<(f64, f64)> = (0..15)
        .map(|i| {
            let x = -PI + 0.4 * i as f64;
            (x, exact_two_scale(0.25, x))
        })
        .collect();
    let grad = regression_loss_grad(&params, &arch, &samples).unwrap();
    let fd = fd_gradient(
        |t| regression_loss(&ParameterSet::unflatten(&arch, t).unwrap(), &arch, &samples).unwrap(),
        &params.flatten(),
        1e-4,
    );
    assert!(max_rel(&grad, &fd) < 1e-5);
}

#[test]
fn directional_derivative_is_second_order() {
    let arch = MlpArchitecture::new(vec![6], Activation::Tanh).unwrap();
    let params = random_params(&arch, 12);
    let spec = BvpSpec::ntk_darcy(0.2).unwrap();
    let cfg = LossConfig::new(1.0, make_grid(&spec, 12, GridScheme::Equispaced).unwrap()).unwrap();
    let theta = params.flatten();
    let grad = pinn_loss_grad(&spec, &params, &arch, &cfg).unwrap();
    let mut rng = rng_from_seed(3);
    let mut v: Vec<f64> = theta.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    let exact: f64 = grad.iter().zip(&v).map(|(g, d)| g * d).sum();
    let loss_at = |s: f64| {
        let t: Vec<f64> = theta.iter().zip(&v).map(|(a, d)| a + s * d).collect();
        pinn_loss(
            &spec,
            &ParameterSet::unflatten(&arch, &t).unwrap(),
            &arch,
            &cfg,
        )
        .unwrap()
    };
    let err = |h: f64| ((loss_at(h) - loss_at(-h)) / (2.0 * h) - exact).abs();
    // halving h should cut the central-difference error by about four
    let ratio = err(1e-3) / err(2e-3);
    assert!((0.2..0.3).contains(&ratio), "{ratio}");
}

#[test]
fn lambda_dependence_is_affine() {
    let arch = MlpArchitecture::new(vec![5], Activation::Tanh).unwrap();
    let params = random_params(&arch, 2);
    let spec = BvpSpec::two_scale_darcy(0.25).unwrap();
    let grid = make_grid(&spec, 9, GridScheme::Equispaced).unwrap();
    let at = |l: f64| {
        pinn_loss(
            &spec,
            &params,
            &arch,
            &LossConfig::new(l, grid.clone()).unwrap(),
        )
        .unwrap()
    };
    let (l0, l1) = (at(0.0), at(1.0));
    for lambda in [0.5, 2.0, 100.0] {
        let want = l0 + lambda * (l1 - l0);
        assert!((at(lambda) - want).abs() <= 1e-12 * want.abs());
    }
}

#[test]
fn two_scale_poisson_forcing_is_minus_second_derivative() {
    let mut rng = rng_from_seed(5);
    for _ in 0..100 {
        let eps = 1.0 / 32.0;
        let x: f64 = rng.gen_range(-PI..PI);
        let want = -fd2(|t| exact_two_scale(eps, t), x, eps * 2e-2);
        let got = forcing_poisson_twoscale(eps, x);
        assert!(rel_err(got, want, 1.0) < 1e-6, "x={x}: {got} vs {want}");
    }
}

#[test]
fn darcy_operator_matches_product_rule_oracle() {
    let eps = 1.0 / 32.0;
    let spec = BvpSpec::two_scale_darcy(eps).unwrap();
    let a = |x: f64| 1.0 / (2.1 + 2.0 * (x / eps).sin());
    let u = |x: f64| exact_two_scale(eps, x);
    let h = eps / 100.0;
    let mut rng = rng_from_seed(6);
    for _ in 0..100 {
        let x: f64 = rng.gen_range(-PI..PI);
        let jet = Jet2::new(u(x), fd1_6(u, x, h), fd2(u, x, h));
        let got = apply_operator(&spec, jet, x).unwrap();
        let want = -fd1_6(|t| a(t) * fd1_6(u, t, h), x, h);
        assert!(rel_err(got, want, 1.0) < 1e-6, "x={x}: {got} vs {want}");
    }
}

#[test]
fn frequency_poisson_exact_solution() {
    let mut rng = rng_from_seed(8);
    for _ in 0..50 {
        let x: f64 = rng.gen_range(-PI..PI);
        let want = forcing_poisson_freq(x);
        let got = -fd2(exact_frequency_poisson, x, 1e-3);
        assert!((got - want).abs() < 1e-6 * (1.0 + want.abs()));
    }
    assert!(
        exact_frequency_poisson(PI).abs() < 1e-12 && exact_frequency_poisson(-PI).abs() < 1e-12
    );
}

#[test]
fn untrained_small_network_spectrum_is_dominated_by_exact_solution() {
    // a network scaled toward zero leaves the error close to -u_exact
    let arch = MlpArchitecture::new(vec![20, 20], Activation::Tanh).unwrap();
    let mut p = init_normal(&arch, 1);
    let theta: Vec<f64> = p.flatten().iter().map(|v| 1e-3 * v).collect();
    p.assign_flat(&theta).unwrap();
    let xs = periodic_grid(-PI, PI, 512);
    let err: Vec<f64> = xs
        .iter()
        .map(|&x| common::value(&p, &arch, x) - exact_frequency_poisson(x))
        .collect();
    let s = dft_magnitude(&err, 0).unwrap();
    assert!((s.magnitudes[1] - 1.0).abs() < 0.1);
    assert!((s.magnitudes[5] - 1.0 / 25.0).abs() < 0.1 / 25.0);
}

#[test]
fn ntk_blocks_are_gram_like() {
    let arch = MlpArchitecture::new(vec![12, 12], Activation::Tanh).unwrap();
    let params = init_normal(&arch, 21);
    let spec = BvpSpec::ntk_darcy(1.0 / 20.0).unwrap();
    let lambda = 2.5;
    let cfg = LossConfig::new(
        lambda,
        make_grid(&spec, 40, GridScheme::Equispaced).unwrap(),
    )
    .unwrap();
    let k = assemble_ntk(&spec, &params, &arch, &cfg).unwrap();
    for block in [&k.k_uu, &k.k_bb] {
        let f = frob(block);
        assert!(frob(&(block - &block.t())) <= 1e-12 * f);
        let eig = sym_eigenvalues(block).unwrap();
        assert!(*eig.last().unwrap() >= -1e-10 * f);
    }
    let scale = lambda * k.n_c as f64 / k.n_b as f64;
    let lhs = &k.k_bu * scale;
    let rhs = k.k_ub.t().to_owned();
    assert!(frob(&(&lhs - &rhs)) <= 1e-12 * frob(&rhs));
    let full = k.to_full();
    assert!((k.frobenius_norm() - frob(&full)).abs() <= 1e-12 * frob(&full));
}

#[test]
fn residuals_are_bounded_by_coefficient_bounds() {
    let eps = 1.0 / 32.0;
    let arch = MlpArchitecture::new(vec![10, 10], Activation::Tanh).unwrap();
    let params = init_normal(&arch, 0);
    let spec = BvpSpec::two_scale_darcy(eps).unwrap();
    let grid = make_grid(&spec, 256, GridScheme::Equispaced).unwrap();
    let r = residual_vector(&spec, &params, &arch, &grid).unwrap();
    let coeff = spec.coeff().unwrap();
    let (mut d1, mut d2, mut v) = (0.0f64, 0.0f64, 0.0f64);
    for &x in grid.interior.iter().chain(&grid.boundary) {
        let j = pinn_ntk::network::forward_jet(&params, &arch, x).unwrap();
        d1 = d1.max(j.d1.abs());
        d2 = d2.max(j.d2.abs());
        v = v.max(j.v.abs());
    }
    let f_max = grid
        .interior
        .iter()
        .map(|&x| spec.forcing_at(x).unwrap().abs())
        .fold(0.0, f64::max);
    let bound = coeff.a_max() * d2 + coeff.a_prime_bound() / eps * d1 + f_max;
    assert!(r.to_vec().iter().all(|e| e.is_finite()));
    assert!(r.pde.iter().all(|e| e.abs() <= bound * (1.0 + 1e-12)));
    assert!(r.boundary.iter().all(|e| e.abs() <= v));
}

#[test]
fn tiny_gradient_step_decreases_pinn_loss() {
    let arch = MlpArchitecture::new(vec![16], Activation::Tanh).unwrap();
    let params = init_normal(&arch, 30);
    let spec = BvpSpec::ntk_darcy(0.1).unwrap();
    let cfg = LossConfig::new(1.0, make_grid(&spec, 64, GridScheme::Equispaced).unwrap()).unwrap();
    let grad = pinn_loss_grad(&spec, &params, &arch, &cfg).unwrap();
    let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    let theta = gd_step(&params.flatten(), &grad, 1e-8 / gnorm).unwrap();
    let before = pinn_loss(&spec, &params, &arch, &cfg).unwrap();
    let after = pinn_loss(
        &spec,
        &ParameterSet::unflatten(&arch, &theta).unwrap(),
        &arch,
        &cfg,
    )
    .unwrap();
    assert!(after < before);
}

#[test]
fn flow_check_halves_with_step_and_is_inconclusive_at_zero_residual() {
    let arch = MlpArchitecture::new(vec![10], Activation::Tanh).unwrap();
    for seed in 0..3 {
        let params = random_params(&arch, 40 + seed);
        let spec = BvpSpec::two_scale_darcy(0.25).unwrap();
        let cfg =
            LossConfig::new(1.0, make_grid(&spec, 30, GridScheme::Equispaced).unwrap()).unwrap();
        let a = flow_consistency_check(&spec, &params, &arch, &cfg, 1e-6)
            .unwrap()
            .ratio()
            .unwrap();
        let b = flow_consistency_check(&spec, &params, &arch, &cfg, 5e-7)
            .unwrap()
            .ratio()
            .unwrap();
        assert!((0.3..=0.7).contains(&(b / a)), "{a} {b}");
    }
    let zero = ParameterSet::zeros(&arch);
    let spec = BvpSpec::poisson((-PI, PI), Forcing::Zero, (0.0, 0.0)).unwrap();
    let cfg = LossConfig::new(1.0, make_grid(&spec, 8, GridScheme::Equispaced).unwrap()).unwrap();
    let r = flow_consistency_check(&spec, &zero, &arch, &cfg, 1e-8).unwrap();
    assert!(matches!(r, FlowReport::Inconclusive { .. }));
}
