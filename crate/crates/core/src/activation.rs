//! Smooth activations with derivatives up to third order.
//!
//! Third derivatives are needed by the reverse pass through second-order jets.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Activation catalogue. Both members have a strictly positive, finite first derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Logistic,
}

/// σ and its first three derivatives at one argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationDerivs {
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

impl Activation {
    #[inline]
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Logistic => logistic(z),
        }
    }

    #[inline]
    pub fn derivs(self, z: f64) -> ActivationDerivs {
        match self {
            Activation::Tanh => {
                let t = z.tanh();
                let s = 1.0 - t * t;
                ActivationDerivs {
                    value: t,
                    d1: s,
                    d2: -2.0 * t * s,
                    d3: (6.0 * t * t - 2.0) * s,
                }
            }
            Activation::Logistic => {
                let p = logistic(z);
                let s = p * (1.0 - p);
                ActivationDerivs {
                    value: p,
                    d1: s,
                    d2: s * (1.0 - 2.0 * p),
                    d3: s * (1.0 - 6.0 * p + 6.0 * p * p),
                }
            }
        }
    }
}

#[inline]
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => write!(f, "tanh"),
            Activation::Logistic => write!(f, "logistic"),
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "logistic" | "sigmoid" => Ok(Activation::Logistic),
            other => Err(Error::Config(format!("unknown activation '{other}'"))),
        }
    }
}
