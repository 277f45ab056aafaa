//! PINN and regression losses with exact parameter gradients.
//!
//! PINN loss: `(1/N_c) Σ ½ r_pde(x_i)² + (λ/N_b) Σ ½ r_b(s_i)²`.
//!
//! Regression loss: `(1/N) Σ (u(x_i) - y_i)²`. Note there is **no** factor ½ here, unlike
//! the PINN loss.

use ndarray::Array1;

use crate::error::{Error, Result};
use crate::network::{JetAdjoint, JetOrder, JetTape, MlpArchitecture, ParameterSet};
use crate::optim::Objective;
use crate::pde::{BvpSpec, CollocationGrid};

#[derive(Debug, Clone)]
pub struct LossConfig {
    lambda_b: f64,
    grid: CollocationGrid,
}

impl LossConfig {
    pub fn new(lambda_b: f64, grid: CollocationGrid) -> Result<Self> {
        if !(lambda_b >= 0.0) || !lambda_b.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "boundary weight must be nonnegative, got {lambda_b}"
            )));
        }
        if grid.interior.is_empty() {
            return Err(Error::InvalidArgument("empty collocation grid".into()));
        }
        Ok(Self { lambda_b, grid })
    }

    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn with_lambda(&self, lambda_b: f64) -> Result<Self> {
        Self::new(lambda_b, self.grid.clone())
    }
}

/// A PINN problem with forcing and operator coefficients tabulated on its grid.
#[derive(Debug, Clone)]
pub struct PinnObjective {
    arch: MlpArchitecture,
    lambda_b: f64,
    points: Vec<f64>,
    n_c: usize,
    coeff_d2: Vec<f64>,
    coeff_d1: Vec<f64>,
    forcing: Vec<f64>,
    boundary_values: Vec<f64>,
}

/// Residuals split into interior and boundary parts, grid order.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub pde: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl PinnObjective {
    pub fn new(spec: &BvpSpec, arch: &MlpArchitecture, cfg: &LossConfig) -> Result<Self> {
        let grid = cfg.grid();
        let mut coeff_d2 = Vec::with_capacity(grid.n_c());
        let mut coeff_d1 = Vec::with_capacity(grid.n_c());
        let mut forcing = Vec::with_capacity(grid.n_c());
        for &x in &grid.interior {
            let (a, b) = spec.operator_coeffs(x);
            coeff_d2.push(a);
            coeff_d1.push(b);
            forcing.push(spec.forcing_at(x)?);
        }
        let boundary_values = grid
            .boundary
            .iter()
            .map(|&s| spec.boundary_value_at(s))
            .collect::<Result<Vec<_>>>()?;
        let mut points = grid.interior.clone();
        points.extend_from_slice(&grid.boundary);
        Ok(Self {
            arch: arch.clone(),
            lambda_b: cfg.lambda_b(),
            points,
            n_c: grid.n_c(),
            coeff_d2,
            coeff_d1,
            forcing,
            boundary_values,
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn n_c(&self) -> usize {
        self.n_c
    }

    pub fn n_b(&self) -> usize {
        self.points.len() - self.n_c
    }

    pub fn lambda_b(&self) -> f64 {
        self.lambda_b
    }

    pub fn interior_points(&self) -> &[f64] {
        &self.points[..self.n_c]
    }

    pub fn boundary_points(&self) -> &[f64] {
        &self.points[self.n_c..]
    }

    /// `(A_i, B_i)` with `L^ε u(x_i) = -(A_i u'' + B_i u')`.
    pub fn operator_coeffs(&self) -> (&[f64], &[f64]) {
        (&self.coeff_d2, &self.coeff_d1)
    }

    fn tape(&self, params: &ParameterSet) -> Result<JetTape> {
        JetTape::forward(params, &self.arch, &self.points)
    }

    fn residuals_from_tape(&self, tape: &JetTape) -> Residuals {
        let (v, d1, d2) = (tape.values(), tape.d1(), tape.d2());
        let pde = (0..self.n_c)
            .map(|i| -(self.coeff_d2[i] * d2[i] + self.coeff_d1[i] * d1[i]) - self.forcing[i])
            .collect();
        let boundary = self
            .boundary_values
            .iter()
            .enumerate()
            .map(|(j, g)| v[self.n_c + j] - g)
            .collect();
        Residuals { pde, boundary }
    }

    pub fn residuals(&self, params: &ParameterSet) -> Result<Residuals> {
        Ok(self.residuals_from_tape(&self.tape(params)?))
    }

    fn loss_from_residuals(&self, r: &Residuals) -> f64 {
        let interior: f64 = r.pde.iter().map(|v| 0.5 * v * v).sum::<f64>() / self.n_c as f64;
        let boundary: f64 = r.boundary.iter().map(|v| 0.5 * v * v).sum::<f64>() / self.n_b() as f64;
        interior + self.lambda_b * boundary
    }

    pub fn loss(&self, params: &ParameterSet) -> Result<f64> {
        Ok(self.loss_from_residuals(&self.residuals(params)?))
    }

    pub fn loss_and_grad(&self, params: &ParameterSet) -> Result<(f64, Vec<f64>)> {
        let tape = self.tape(params)?;
        let r = self.residuals_from_tape(&tape);
        let n = self.points.len();
        let mut adj = JetAdjoint::zeros(n);
        let inv_nc = 1.0 / self.n_c as f64;
        for i in 0..self.n_c {
            let w = r.pde[i] * inv_nc;
            adj.d2[i] = -w * self.coeff_d2[i];
            adj.d1[i] = -w * self.coeff_d1[i];
        }
        let wb = self.lambda_b / self.n_b() as f64;
        for (j, rb) in r.boundary.iter().enumerate() {
            adj.value[self.n_c + j] = wb * rb;
        }
        Ok((self.loss_from_residuals(&r), tape.gradient(params, &adj)))
    }
}

impl Objective for PinnObjective {
    fn num_params(&self) -> usize {
        self.arch.num_params()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.loss(&ParameterSet::unflatten(&self.arch, theta)?)
    }

    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad(&ParameterSet::unflatten(&self.arch, theta)?)
    }
}

pub fn pinn_loss(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    cfg: &LossConfig,
) -> Result<f64> {
    PinnObjective::new(spec, arch, cfg)?.loss(params)
}

pub fn pinn_loss_grad(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    cfg: &LossConfig,
) -> Result<Vec<f64>> {
    Ok(PinnObjective::new(spec, arch, cfg)?
        .loss_and_grad(params)?
        .1)
}

/// Mean-squared-error fit to labelled samples.
#[derive(Debug, Clone)]
pub struct RegressionObjective {
    arch: MlpArchitecture,
    xs: Vec<f64>,
    ys: Array1<f64>,
}

impl RegressionObjective {
    pub fn new(arch: &MlpArchitecture, samples: &[(f64, f64)]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidArgument(
                "regression needs at least one sample".into(),
            ));
        }
        Ok(Self {
            arch: arch.clone(),
            xs: samples.iter().map(|s| s.0).collect(),
            ys: samples.iter().map(|s| s.1).collect(),
        })
    }

    pub fn arch(&self) -> &MlpArchitecture {
        &self.arch
    }

    pub fn loss(&self, params: &ParameterSet) -> Result<f64> {
        let tape = JetTape::forward_with_order(params, &self.arch, &self.xs, JetOrder::Value)?;
        let diff = tape.values() - &self.ys;
        Ok(diff.dot(&diff) / self.xs.len() as f64)
    }

    pub fn loss_and_grad(&self, params: &ParameterSet) -> Result<(f64, Vec<f64>)> {
        let tape = JetTape::forward_with_order(params, &self.arch, &self.xs, JetOrder::Value)?;
        let diff = tape.values() - &self.ys;
        let n = self.xs.len() as f64;
        let loss = diff.dot(&diff) / n;
        let mut adj = JetAdjoint::zeros(self.xs.len());
        adj.value = diff * (2.0 / n);
        Ok((loss, tape.gradient(params, &adj)))
    }
}

impl Objective for RegressionObjective {
    fn num_params(&self) -> usize {
        self.arch.num_params()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.loss(&ParameterSet::unflatten(&self.arch, theta)?)
    }

    fn value_grad(&self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.loss_and_grad(&ParameterSet::unflatten(&self.arch, theta)?)
    }
}

pub fn regression_loss(
    params: &ParameterSet,
    arch: &MlpArchitecture,
    samples: &[(f64, f64)],
) -> Result<f64> {
    RegressionObjective::new(arch, samples)?.loss(params)
}

pub fn regression_loss_grad(
    params: &ParameterSet,
    arch: &MlpArchitecture,
    samples: &[(f64, f64)],
) -> Result<Vec<f64>> {
    Ok(RegressionObjective::new(arch, samples)?
        .loss_and_grad(params)?
        .1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::init_normal;
    use crate::pde::{make_grid, residual_boundary, residual_pde, Forcing, GridScheme};
    use crate::Activation;
    use std::f64::consts::PI;

    fn arch() -> MlpArchitecture {
        MlpArchitecture::new(vec![6, 5], Activation::Tanh).unwrap()
    }

    #[test]
    fn boundary_only_closed_form() {
        let a = arch();
        let spec = BvpSpec::poisson((-PI, PI), Forcing::Zero, (0.0, 0.0)).unwrap();
        let grid = make_grid(&spec, 16, GridScheme::Equispaced).unwrap();
        let mut p = ParameterSet::zeros(&a);
        let beta = 0.7;
        p.layers_mut().last_mut().unwrap().bias[0] = beta;
        for lambda in [0.0, 1.0, 100.0] {
            let cfg = LossConfig::new(lambda, grid.clone()).unwrap();
            let l = pinn_loss(&spec, &p, &a, &cfg).unwrap();
            assert!(
                (l - 0.5 * lambda * beta * beta).abs() <= 1e-14 * (1.0 + lambda),
                "{l}"
            );
        }
    }

    #[test]
    fn loss_equals_direct_residual_summation() {
        let a = arch();
        let spec = BvpSpec::two_scale_darcy(1.0 / 8.0).unwrap();
        let grid = make_grid(&spec, 20, GridScheme::Equispaced).unwrap();
        let cfg = LossConfig::new(3.0, grid.clone()).unwrap();
        let p = init_normal(&a, 8);
        let mut interior = 0.0;
        for &x in &grid.interior {
            interior += 0.5 * residual_pde(&spec, &p, &a, x).unwrap().powi(2);
        }
        let mut boundary = 0.0;
        for &s in &grid.boundary {
            boundary += 0.5 * residual_boundary(&spec, &p, &a, s).unwrap().powi(2);
        }
        let direct = interior / 20.0 + 3.0 * boundary / 2.0;
        let l = pinn_loss(&spec, &p, &a, &cfg).unwrap();
        assert!((l - direct).abs() <= 1e-12 * direct, "{l} vs {direct}");
    }

    #[test]
    fn zero_residuals_give_zero_gradient() {
        // u ≡ 0 solves the homogeneous problem exactly
        let a = arch();
        let spec = BvpSpec::poisson((-PI, PI), Forcing::Zero, (0.0, 0.0)).unwrap();
        let cfg =
            LossConfig::new(1.0, make_grid(&spec, 10, GridScheme::Equispaced).unwrap()).unwrap();
        let mut p = init_normal(&a, 1);
        p.layers_mut().last_mut().unwrap().weights.fill(0.0);
        p.layers_mut().last_mut().unwrap().bias.fill(0.0);
        let g = pinn_loss_grad(&spec, &p, &a, &cfg).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn lambda_zero_drops_boundary_gradient() {
        let a = arch();
        let spec = BvpSpec::two_scale_poisson(0.1).unwrap();
        let grid = make_grid(&spec, 12, GridScheme::Equispaced).unwrap();
        let p = init_normal(&a, 2);
        let g0 =
            pinn_loss_grad(&spec, &p, &a, &LossConfig::new(0.0, grid.clone()).unwrap()).unwrap();
        let interior_only = {
            let obj = PinnObjective::new(&spec, &a, &LossConfig::new(0.0, grid).unwrap()).unwrap();
            let tape = JetTape::forward(&p, &a, obj.interior_points()).unwrap();
            let r = obj.residuals(&p).unwrap();
            let mut adj = JetAdjoint::zeros(12);
            for i in 0..12 {
                adj.d2[i] = -r.pde[i] / 12.0;
            }
            tape.gradient(&p, &adj)
        };
        for (x, y) in g0.iter().zip(&interior_only) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn regression_closed_forms() {
        let a = arch();
        let mut p = ParameterSet::zeros(&a);
        p.layers_mut().last_mut().unwrap().bias[0] = 1.5;
        let samples = vec![(0.0, 0.5), (1.0, 0.5), (-2.0, 0.5)];
        let l = regression_loss(&p, &a, &samples).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
        let perfect = vec![(0.3, 1.5), (2.0, 1.5)];
        assert_eq!(regression_loss(&p, &a, &perfect).unwrap(), 0.0);
        assert!(regression_loss(&p, &a, &[]).is_err());
    }

    #[test]
    fn config_validation() {
        let spec = BvpSpec::frequency_poisson();
        let grid = make_grid(&spec, 4, GridScheme::Equispaced).unwrap();
        assert!(LossConfig::new(-1.0, grid.clone()).is_err());
        assert!(LossConfig::new(f64::NAN, grid).is_err());
    }
}
