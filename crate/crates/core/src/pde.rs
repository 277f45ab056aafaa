//! Multiscale elliptic problems on an interval.
//!
//! The operator is `L^ε u = -d/dx(a(x/ε) du/dx) = -(a(x/ε) u'' + a'(x/ε) u' / ε)`, with
//! `a ≡ 1` for the Poisson problems.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::network::{forward_jet, forward_value, Jet2, MlpArchitecture, ParameterSet};

const TWO_PI: f64 = 2.0 * PI;

/// A periodic coefficient `a(y) = 1 / (offset + amplitude · sin(2π s y))`.
///
/// `s` (cycles per unit of `y`) converts between the two conventions in use: `s = 1` gives
/// the one-periodic `1/(2.1 + 2 sin(2πy))`, `s = 1/(2π)` gives `1/(2.1 + 2 sin(y))`.
/// Both are views of the same one-periodic profile `p(t) = a(t / s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    offset: f64,
    amplitude: f64,
    cycles_per_unit: f64,
    descriptor: String,
}

impl CoefficientField {
    pub fn reciprocal_sine(
        offset: f64,
        amplitude: f64,
        cycles_per_unit: f64,
        descriptor: impl Into<String>,
    ) -> Result<Self> {
        if !(offset > amplitude.abs()) {
            return Err(Error::Problem(format!(
                "coefficient not coercive: offset {offset} <= |amplitude| {amplitude}"
            )));
        }
        if !(cycles_per_unit > 0.0) || !cycles_per_unit.is_finite() {
            return Err(Error::Problem(format!(
                "cycles per unit must be positive, got {cycles_per_unit}"
            )));
        }
        Ok(Self {
            offset,
            amplitude,
            cycles_per_unit,
            descriptor: descriptor.into(),
        })
    }

    /// `y ↦ 1/(2.1 + 2 sin(2πy))`.
    pub fn one_periodic() -> Self {
        Self::reciprocal_sine(2.1, 2.0, 1.0, "1/(2.1+2sin(2*pi*y))").expect("valid constants")
    }

    /// `y ↦ 1/(2.1 + 2 sin(y))`, period 2π in `y`.
    pub fn raw_sine() -> Self {
        Self::reciprocal_sine(2.1, 2.0, 1.0 / TWO_PI, "1/(2.1+2sin(y))").expect("valid constants")
    }

    pub fn descriptor(&self) -> &str {
        &self.descriptor
    }

    pub fn cycles_per_unit(&self) -> f64 {
        self.cycles_per_unit
    }

    /// Period of `a` in its own argument.
    pub fn period(&self) -> f64 {
        1.0 / self.cycles_per_unit
    }

    /// The one-periodic profile `p(t)`.
    pub fn profile(&self, t: f64) -> f64 {
        1.0 / (self.offset + self.amplitude * (TWO_PI * t).sin())
    }

    pub fn profile_prime(&self, t: f64) -> f64 {
        let den = self.offset + self.amplitude * (TWO_PI * t).sin();
        -self.amplitude * TWO_PI * (TWO_PI * t).cos() / (den * den)
    }

    pub fn a(&self, y: f64) -> f64 {
        self.profile(self.cycles_per_unit * y)
    }

    pub fn a_prime(&self, y: f64) -> f64 {
        self.cycles_per_unit * self.profile_prime(self.cycles_per_unit * y)
    }

    pub fn a_min(&self) -> f64 {
        1.0 / (self.offset + self.amplitude.abs())
    }

    pub fn a_max(&self) -> f64 {
        1.0 / (self.offset - self.amplitude.abs())
    }

    /// Largest `|a'|` over one period, by dense sampling refined around the peak.
    pub fn a_prime_bound(&self) -> f64 {
        let n = 20_000;
        let (mut best, mut at) = (0.0f64, 0.0);
        for i in 0..n {
            let t = i as f64 / n as f64;
            let v = self.profile_prime(t).abs();
            if v > best {
                best = v;
                at = t;
            }
        }
        let h = 1.0 / n as f64;
        for i in 0..=2000 {
            let t = at - h + 2.0 * h * i as f64 / 2000.0;
            best = best.max(self.profile_prime(t).abs());
        }
        best * self.cycles_per_unit
    }
}

/// Right-hand sides known to the crate.
#[derive(Clone)]
pub enum Forcing {
    Zero,
    Constant(f64),
    /// `sin x + sin 5x + sin 15x + sin 55x`.
    PoissonFrequencies,
    /// `4 sin 2x + sin(x/ε)/ε`.
    PoissonTwoScale,
    /// Darcy right-hand side matching [`exact_two_scale`] with `a(y) = 1/(2.1 + 2 sin y)`.
    DarcyTwoScale,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Constant(c) => write!(f, "Constant({c})"),
            Forcing::PoissonFrequencies => write!(f, "PoissonFrequencies"),
            Forcing::PoissonTwoScale => write!(f, "PoissonTwoScale"),
            Forcing::DarcyTwoScale => write!(f, "DarcyTwoScale"),
            Forcing::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl Forcing {
    pub fn eval(&self, eps: f64, x: f64) -> Result<f64> {
        match self {
            Forcing::Zero => Ok(0.0),
            Forcing::Constant(c) => Ok(*c),
            Forcing::PoissonFrequencies => Ok(forcing_poisson_freq(x)),
            Forcing::PoissonTwoScale => Ok(forcing_poisson_twoscale(eps, x)),
            Forcing::DarcyTwoScale => forcing_darcy(eps, x),
            Forcing::Custom(f) => Ok(f(x)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BvpKind {
    Poisson,
    Darcy,
}

/// One Dirichlet boundary value problem on `[lo, hi]`.
#[derive(Debug, Clone)]
pub struct BvpSpec {
    domain: (f64, f64),
    epsilon: f64,
    coeff: Option<CoefficientField>,
    forcing: Forcing,
    boundary_values: (f64, f64),
    kind: BvpKind,
}

impl BvpSpec {
    pub fn new(
        domain: (f64, f64),
        epsilon: f64,
        coeff: Option<CoefficientField>,
        forcing: Forcing,
        boundary_values: (f64, f64),
        kind: BvpKind,
    ) -> Result<Self> {
        if !(domain.0 < domain.1) {
            return Err(Error::Problem(format!(
                "empty domain [{}, {}]",
                domain.0, domain.1
            )));
        }
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::Problem(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if kind == BvpKind::Darcy && coeff.is_none() {
            return Err(Error::Problem(
                "Darcy problems need a coefficient field".into(),
            ));
        }
        Ok(Self {
            domain,
            epsilon,
            coeff,
            forcing,
            boundary_values,
            kind,
        })
    }

    pub fn poisson(
        domain: (f64, f64),
        forcing: Forcing,
        boundary_values: (f64, f64),
    ) -> Result<Self> {
        Self::new(
            domain,
            1.0,
            None,
            forcing,
            boundary_values,
            BvpKind::Poisson,
        )
    }

    pub fn darcy(
        domain: (f64, f64),
        epsilon: f64,
        coeff: CoefficientField,
        forcing: Forcing,
        boundary_values: (f64, f64),
    ) -> Result<Self> {
        Self::new(
            domain,
            epsilon,
            Some(coeff),
            forcing,
            boundary_values,
            BvpKind::Darcy,
        )
    }

    /// `-u'' = sin x + sin 5x + sin 15x + sin 55x` on `(-π, π)`, zero boundary data.
    pub fn frequency_poisson() -> Self {
        Self::poisson((-PI, PI), Forcing::PoissonFrequencies, (0.0, 0.0)).expect("valid")
    }

    /// Poisson problem solved by [`exact_two_scale`].
    pub fn two_scale_poisson(eps: f64) -> Result<Self> {
        Self::new(
            (-PI, PI),
            eps,
            None,
            Forcing::PoissonTwoScale,
            (0.0, 0.0),
            BvpKind::Poisson,
        )
    }

    /// Darcy problem solved by [`exact_two_scale`].
    pub fn two_scale_darcy(eps: f64) -> Result<Self> {
        Self::darcy(
            (-PI, PI),
            eps,
            CoefficientField::raw_sine(),
            Forcing::DarcyTwoScale,
            (0.0, 0.0),
        )
    }

    /// Darcy problem with the one-periodic coefficient, unit forcing and zero boundary data.
    pub fn ntk_darcy(eps: f64) -> Result<Self> {
        Self::darcy(
            (-PI, PI),
            eps,
            CoefficientField::one_periodic(),
            Forcing::Constant(1.0),
            (0.0, 0.0),
        )
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn coeff(&self) -> Option<&CoefficientField> {
        self.coeff.as_ref()
    }

    pub fn forcing(&self) -> &Forcing {
        &self.forcing
    }

    pub fn boundary_values(&self) -> (f64, f64) {
        self.boundary_values
    }

    pub fn kind(&self) -> BvpKind {
        self.kind
    }

    pub fn forcing_at(&self, x: f64) -> Result<f64> {
        self.forcing.eval(self.epsilon, x)
    }

    /// `(A, B)` with `L^ε u(x) = -(A u''(x) + B u'(x))`.
    pub fn operator_coeffs(&self, x: f64) -> (f64, f64) {
        match (self.kind, &self.coeff) {
            (BvpKind::Darcy, Some(c)) => {
                let y = x / self.epsilon;
                (c.a(y), c.a_prime(y) / self.epsilon)
            }
            _ => (1.0, 0.0),
        }
    }

    /// Boundary value prescribed at an endpoint.
    pub fn boundary_value_at(&self, s: f64) -> Result<f64> {
        if s == self.domain.0 {
            Ok(self.boundary_values.0)
        } else if s == self.domain.1 {
            Ok(self.boundary_values.1)
        } else {
            Err(Error::NotAnEndpoint(s))
        }
    }
}

/// `L^ε` applied to a jet evaluated at `x`.
pub fn apply_operator(spec: &BvpSpec, jet: Jet2, x: f64) -> Result<f64> {
    if !(spec.epsilon > 0.0) {
        return Err(Error::Problem(format!(
            "epsilon must be positive, got {}",
            spec.epsilon
        )));
    }
    let (a, b) = spec.operator_coeffs(x);
    Ok(-(a * jet.d2 + b * jet.d1))
}

pub fn forcing_poisson_freq(x: f64) -> f64 {
    x.sin() + (5.0 * x).sin() + (15.0 * x).sin() + (55.0 * x).sin()
}

pub fn forcing_poisson_twoscale(eps: f64, x: f64) -> f64 {
    4.0 * (2.0 * x).sin() + (x / eps).sin() / eps
}

/// Darcy forcing `g/h` for the two-scale solution and `a(y) = 1/(2.1 + 2 sin y)`.
pub fn forcing_darcy(eps: f64, x: f64) -> Result<f64> {
    let (s, c) = x.sin_cos();
    let (se, ce) = (x / eps).sin_cos();
    let g = 10.0
        * (20.0 * PI + 168.0 * PI * eps * c * s
            - 20.0 * (2.0 * PI - 4.0 * PI * c * c + eps * (PI / eps).sin()) * ce
            + (21.0 * PI + 160.0 * PI * eps * c * s) * se);
    let h = 400.0 * PI * eps * se * se + 840.0 * PI * eps * se + 441.0 * PI * eps;
    if h.abs() < 1e-14 {
        return Err(Error::SingularEvaluation(x));
    }
    Ok(g / h)
}

/// `u^ε(x) = sin 2x + ε sin(x/ε) - (ε/π) sin(π/ε) x`.
pub fn exact_two_scale(eps: f64, x: f64) -> f64 {
    (2.0 * x).sin() + eps * (x / eps).sin() - eps / PI * (PI / eps).sin() * x
}

/// Solution of `-u'' = sin x + sin 5x + sin 15x + sin 55x`, `u(±π) = 0`.
pub fn exact_frequency_poisson(x: f64) -> f64 {
    x.sin() + (5.0 * x).sin() / 25.0 + (15.0 * x).sin() / 225.0 + (55.0 * x).sin() / 3025.0
}

/// `L^ε u(x; θ) - f(x)`.
pub fn residual_pde(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    x: f64,
) -> Result<f64> {
    let jet = forward_jet(params, arch, x)?;
    Ok(apply_operator(spec, jet, x)? - spec.forcing_at(x)?)
}

/// `u(s; θ) - g(s)` at a domain endpoint `s`.
pub fn residual_boundary(
    spec: &BvpSpec,
    params: &ParameterSet,
    arch: &MlpArchitecture,
    s: f64,
) -> Result<f64> {
    let g = spec.boundary_value_at(s)?;
    Ok(forward_value(params, arch, s)? - g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridScheme {
    Equispaced,
}

/// Interior collocation points and boundary points of one problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CollocationGrid {
    pub interior: Vec<f64>,
    pub boundary: Vec<f64>,
}

impl CollocationGrid {
    pub fn n_c(&self) -> usize {
        self.interior.len()
    }

    pub fn n_b(&self) -> usize {
        self.boundary.len()
    }
}

/// `n_c` equispaced interior points (endpoints excluded) plus both endpoints.
pub fn make_grid(spec: &BvpSpec, n_c: usize, scheme: GridScheme) -> Result<CollocationGrid> {
    if n_c == 0 {
        return Err(Error::InvalidArgument(
            "at least one collocation point is required".into(),
        ));
    }
    let (lo, hi) = spec.domain;
    let interior = match scheme {
        GridScheme::Equispaced => {
            let h = (hi - lo) / (n_c + 1) as f64;
            (1..=n_c).map(|i| lo + h * i as f64).collect()
        }
    };
    Ok(CollocationGrid {
        interior,
        boundary: vec![lo, hi],
    })
}
