//! Discrete Fourier magnitudes of the pointwise error between a network and a reference.
//!
//! Samples live on an equispaced periodic grid that excludes the right endpoint. The
//! spectrum is scaled so a unit-amplitude sinusoid with integer wave number `k` over the
//! grid period shows magnitude 1 at bin `k`; a constant `c` shows `|c|` at bin 0.

use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSpectrum {
    pub bin_freqs: Vec<usize>,
    pub magnitudes: Vec<f64>,
    pub n_samples: usize,
    pub iteration: usize,
}

impl ErrorSpectrum {
    pub fn magnitude(&self, k: usize) -> Option<f64> {
        self.magnitudes.get(k).copied()
    }

    /// Mean square of the sampled signal recovered from the half spectrum.
    pub fn mean_square(&self) -> f64 {
        let n = self.n_samples;
        self.magnitudes
            .iter()
            .enumerate()
            .map(|(k, m)| {
                if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                    m * m
                } else {
                    0.5 * m * m
                }
            })
            .sum()
    }
}

/// `n` points `lo + (hi - lo) j / n`, `j = 0..n`.
pub fn periodic_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let h = (hi - lo) / n as f64;
    (0..n).map(|j| lo + h * j as f64).collect()
}

/// Complex DFT coefficients `X_k = Σ_j x_j e^{-2πi jk/n}` for `k = 0..=n/2`.
pub fn dft_half(samples: &[f64]) -> Vec<(f64, f64)> {
    let n = samples.len();
    let twiddle: Vec<(f64, f64)> = (0..n)
        .map(|m| {
            let a = 2.0 * PI * m as f64 / n as f64;
            (a.cos(), -a.sin())
        })
        .collect();
    (0..=n / 2)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (j, &x) in samples.iter().enumerate() {
                let (c, s) = twiddle[(j * k) % n];
                re += x * c;
                im += x * s;
            }
            (re, im)
        })
        .collect()
}

pub fn dft_magnitude(samples: &[f64], iteration: usize) -> Result<ErrorSpectrum> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("spectrum sample".into()));
    }
    let coeffs = dft_half(samples);
    let magnitudes = coeffs
        .iter()
        .enumerate()
        .map(|(k, (re, im))| {
            let m = re.hypot(*im) / n as f64;
            if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
                m
            } else {
                2.0 * m
            }
        })
        .collect();
    Ok(ErrorSpectrum {
        bin_freqs: (0..=n / 2).collect(),
        magnitudes,
        n_samples: n,
        iteration,
    })
}

/// One spectrum of `prediction - exact` per `(iteration, prediction)` snapshot.
pub fn error_spectrum_over_training(
    snapshots: &[(usize, Vec<f64>)],
    exact: &[f64],
) -> Result<Vec<ErrorSpectrum>> {
    snapshots
        .iter()
        .map(|(it, pred)| {
            if pred.len() != exact.len() {
                return Err(Error::Shape {
                    expected: exact.len(),
                    got: pred.len(),
                });
            }
            let err: Vec<f64> = pred.iter().zip(exact).map(|(p, e)| p - e).collect();
            dft_magnitude(&err, *it)
        })
        .collect()
}

/// First recorded iteration at which bin `k` falls below half its initial magnitude.
pub fn half_decay_iteration(spectra: &[ErrorSpectrum], k: usize) -> Option<usize> {
    let initial = spectra.first()?.magnitude(k)?;
    spectra
        .iter()
        .find(|s| s.magnitude(k).is_some_and(|m| m < 0.5 * initial))
        .map(|s| s.iteration)
}

/// Number of adjacent pairs that decrease, treating `None` (never decayed) as +∞.
pub fn ordering_inversions(decay: &[Option<usize>]) -> usize {
    let key = |v: &Option<usize>| v.unwrap_or(usize::MAX);
    decay.windows(2).filter(|w| key(&w[1]) < key(&w[0])).count()
}
