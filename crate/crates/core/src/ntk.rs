//! Neural tangent kernel of the PINN residual map.
//!
//! With `J_pde` the `N_c × N_p` Jacobian of `L^ε u(x_i; θ)` and `J_b` the `N_b × N_p`
//! Jacobian of `u(s_j; θ)`, the four blocks are
//!
//! ```text
//! K_uu = (1/N_c) J_pde J_pdeᵀ     K_ub = (λ/N_b) J_pde J_bᵀ
//! K_bu = (1/N_c) J_b J_pdeᵀ       K_bb = (λ/N_b) J_b J_bᵀ
//! ```
//!
//! so that under gradient flow the residual vector `y = (r_pde, r_b)` obeys `dy/dt = -K y`.
//! `K_bb` carries the `λ/N_b` factor that makes this identity exact.

use ndarray::{s, Array1, Array2};

use crate::error::{Error, Result};
use crate::loss::{LossConfig, PinnObjective};
use crate::network::{JetTape, MlpArchitecture, ParameterSet};
use crate::optim::{gd_step, norm};
use crate::pde::{BvpSpec, CollocationGrid};

/// Residuals at interior points (grid order) and at the boundary points.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualVector {
    pub pde: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl ResidualVector {
    /// Interior entries first, then boundary entries.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.pde.clone();
        v.extend_from_slice(&self.boundary);
        v
    }

    pub fn len(&self) -> usize {
        self.pde.len() + self.boundary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn residual_vector(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    grid: &CollocationGrid,
) -> Result<ResidualVector> {
    let cfg = LossConfig::new(1.0, grid.clone())?;
    let r = PinnObjective::new(spec, arch, &cfg)?.residuals(params)?;
    Ok(ResidualVector {
        pde: r.pde,
        boundary: r.boundary,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NtkMatrix {
    pub k_uu: Array2<f64>,
    pub k_ub: Array2<f64>,
    pub k_bu: Array2<f64>,
    pub k_bb: Array2<f64>,
    pub n_c: usize,
    pub n_b: usize,
    pub lambda_b: f64,
}

impl NtkMatrix {
    /// The assembled `(N_c + N_b)²` matrix.
    pub fn to_full(&self) -> Array2<f64> {
        let n = self.n_c + self.n_b;
        let mut k = Array2::zeros((n, n));
        k.slice_mut(s![..self.n_c, ..self.n_c]).assign(&self.k_uu);
        k.slice_mut(s![..self.n_c, self.n_c..]).assign(&self.k_ub);
        k.slice_mut(s![self.n_c.., ..self.n_c]).assign(&self.k_bu);
        k.slice_mut(s![self.n_c.., self.n_c..]).assign(&self.k_bb);
        k
    }

    /// Frobenius norm over all four blocks.
    pub fn frobenius_norm(&self) -> f64 {
        [&self.k_uu, &self.k_ub, &self.k_bu, &self.k_bb]
            .iter()
            .map(|b| b.iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// `K y` for a residual vector laid out as in [`ResidualVector::to_vec`].
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        if y.len() != self.n_c + self.n_b {
            return Err(Error::Shape {
                expected: self.n_c + self.n_b,
                got: y.len(),
            });
        }
        Ok(self.to_full().dot(&Array1::from(y.to_vec())).to_vec())
    }
}

pub fn frobenius_norm(block: &Array2<f64>) -> f64 {
    block.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Parameter Jacobians `(J_pde, J_b)` of the residual map.
pub fn residual_jacobians(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    grid: &CollocationGrid,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n_c = grid.n_c();
    let mut points = grid.interior.clone();
    points.extend_from_slice(&grid.boundary);
    let tape = JetTape::forward(params, arch, &points)?;
    let rows = tape.param_grad_jets(params);
    let mut j_pde = Array2::zeros((n_c, params.num_params()));
    for (i, &x) in grid.interior.iter().enumerate() {
        let (a, b) = spec.operator_coeffs(x);
        let mut row = j_pde.row_mut(i);
        row.assign(&rows.dd2.row(i));
        row *= -a;
        row.scaled_add(-b, &rows.dd1.row(i));
    }
    let j_b = rows.dv.slice(s![n_c.., ..]).to_owned();
    Ok((j_pde, j_b))
}

pub fn assemble_ntk(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    cfg: &LossConfig,
) -> Result<NtkMatrix> {
    let grid = cfg.grid();
    let (j_pde, j_b) = residual_jacobians(spec, params, arch, grid)?;
    let (n_c, n_b) = (grid.n_c(), grid.n_b());
    let lambda_b = cfg.lambda_b();
    let inv_nc = 1.0 / n_c as f64;
    let lam_nb = if n_b > 0 { lambda_b / n_b as f64 } else { 0.0 };
    Ok(NtkMatrix {
        k_uu: j_pde.dot(&j_pde.t()) * inv_nc,
        k_ub: j_pde.dot(&j_b.t()) * lam_nb,
        k_bu: j_b.dot(&j_pde.t()) * inv_nc,
        k_bb: j_b.dot(&j_b.t()) * lam_nb,
        n_c,
        n_b,
        lambda_b,
    })
}

/// Result of comparing one explicit-Euler step with the linearized residual dynamics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowReport {
    /// `‖(y(θ⁺) - y(θ))/η + K y(θ)‖ / ‖K y(θ)‖`.
    Ratio { eta: f64, ratio: f64, ky_norm: f64 },
    /// `‖K y‖` too small to normalize by.
    Inconclusive { eta: f64, ky_norm: f64 },
}

impl FlowReport {
    pub fn ratio(&self) -> Option<f64> {
        match self {
            FlowReport::Ratio { ratio, .. } => Some(*ratio),
            FlowReport::Inconclusive { .. } => None,
        }
    }
}

/// Steps `θ⁺ = θ - η ∇L` and checks `(y(θ⁺) - y(θ))/η ≈ -K y(θ)`.
pub fn flow_consistency_check(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    cfg: &LossConfig,
    eta: f64,
) -> Result<FlowReport> {
    if !(eta > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "step size must be positive, got {eta}"
        )));
    }
    let objective = PinnObjective::new(spec, arch, cfg)?;
    let y0 = residual_vector(spec, params, arch, cfg.grid())?.to_vec();
    let ntk = assemble_ntk(spec, params, arch, cfg)?;
    let ky = ntk.apply(&y0)?;
    let ky_norm = norm(&ky);
    if ky_norm < 1e-14 {
        return Ok(FlowReport::Inconclusive { eta, ky_norm });
    }
    let (_, grad) = objective.loss_and_grad(params)?;
    let theta1 = gd_step(&params.flatten(), &grad, eta)?;
    let p1 = ParameterSet::unflatten(arch, &theta1)?;
    let y1 = residual_vector(spec, &p1, arch, cfg.grid())?.to_vec();
    let defect: Vec<f64> = y1
        .iter()
        .zip(&y0)
        .zip(&ky)
        .map(|((a, b), k)| (a - b) / eta + k)
        .collect();
    Ok(FlowReport::Ratio {
        eta,
        ratio: norm(&defect) / ky_norm,
        ky_norm,
    })
}
