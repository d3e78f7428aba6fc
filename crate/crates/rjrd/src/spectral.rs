//! Spectra of trace-normalized Gram matrices and the α-order representation
//! entropy, joint entropy, and mutual information built on them.
//!
//! For a unit-diagonal n×n Gram matrix K, the spectrum of K/n is a
//! probability vector (it is nonnegative and sums to one), and the α-order
//! entropy is `S_α = log(Σ λᵢ^α) / (1-α)` — the Rényi entropy of that
//! vector, computed without ever estimating a density.

use std::fmt;

use crate::error::{Error, Result};
use crate::kernel::GramMatrix;
use crate::linalg;

/// Eigenvalues at or below this threshold are treated as exactly zero,
/// so `λ^α` cannot produce underflow noise at α slightly above 1.
const ZERO_EIGENVALUE: f64 = 1e-12;

/// Tolerance on how negative an eigenvalue of a nominally PSD matrix may be
/// before it is reported as a numerical failure instead of clamped,
/// relative to the matrix size.
const PSD_SLACK_PER_N: f64 = 1e-8;

/// Entropy order α: positive, finite, and not 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Alpha(f64);

impl Alpha {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("alpha must be positive and finite, got {value}"),
            });
        }
        if value == 1.0 {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: "alpha = 1 is not defined for this entropy; use a value near 1 such as 1.01"
                    .into(),
            });
        }
        Ok(Alpha(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Descending, nonnegative eigenvalue list of a trace-normalized matrix.
///
/// Spectra of Gram matrices sum to one; spectra of random-feature
/// covariances keep their raw mass so approximation error stays visible.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: Vec<f64>,
    source_size: usize,
}

impl Spectrum {
    /// Clamps (negatives and sub-1e-12 values become exact zeros), sorts
    /// descending, and wraps. Values must be finite and no more negative
    /// than float noise allows.
    pub fn new(values: Vec<f64>, source_size: usize) -> Result<Self> {
        for &v in &values {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "spectrum contains non-finite value {v}"
                )));
            }
            if v < -PSD_SLACK_PER_N * source_size.max(1) as f64 {
                return Err(Error::InvalidInput(format!(
                    "spectrum value {v} is too negative for a PSD source"
                )));
            }
        }
        Ok(Self::clamped(values, source_size))
    }

    pub(crate) fn clamped(mut values: Vec<f64>, source_size: usize) -> Self {
        for v in values.iter_mut() {
            if *v <= ZERO_EIGENVALUE {
                *v = 0.0;
            }
        }
        values.sort_unstable_by(|a, b| b.total_cmp(a));
        Self {
            values,
            source_size,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Side of the matrix the spectrum came from.
    pub fn source_size(&self) -> usize {
        self.source_size
    }

    /// Total mass Σλ. One for Gram spectra; the raw trace for
    /// random-feature spectra.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Σ λᵢ^α over the nonzero values.
    pub(crate) fn power_sum(&self, alpha: Alpha) -> f64 {
        let a = alpha.value();
        self.values
            .iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| v.powf(a))
            .sum()
    }
}

/// Full spectrum of K/n for a unit-diagonal Gram matrix K.
///
/// The result sums to one within 1e-8 (the trace of K/n is exactly one) and
/// is clamped nonnegative. Eigenvalues more negative than `-1e-8·n` mean
/// the input was not PSD and surface as a numerical error.
pub fn spectrum(k: &GramMatrix) -> Result<Spectrum> {
    let n = k.n();
    let raw = linalg::sym_eigenvalues(k.entries())?;
    let scale = 1.0 / n as f64;
    let min = raw.first().copied().unwrap_or(0.0);
    if min < -PSD_SLACK_PER_N * n as f64 {
        return Err(Error::Numerical(format!(
            "matrix is not positive semidefinite within tolerance: \
             min eigenvalue {min:.3e} for n={n}"
        )));
    }
    let spec = Spectrum::clamped(raw.into_iter().map(|v| v * scale).collect(), n);
    let mass = spec.mass();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Numerical(format!(
            "normalized spectrum mass {mass} deviates from 1"
        )));
    }
    Ok(spec)
}

/// α-order representation entropy `log(Σ λᵢ^α) / (1-α)`.
pub fn entropy_alpha(s: &Spectrum, alpha: Alpha) -> Result<f64> {
    let t = s.power_sum(alpha);
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::Numerical(format!(
            "power sum Σλ^α = {t} is not positive; cannot take its log"
        )));
    }
    Ok(t.ln() / (1.0 - alpha.value()))
}

/// Joint entropy: entropy of the Hadamard product of the two Gram matrices.
///
/// Lies between `max(S_α(A), S_α(B))` and `S_α(A) + S_α(B)` up to
/// eigensolver slack.
pub fn joint_entropy(k_a: &GramMatrix, k_b: &GramMatrix, alpha: Alpha) -> Result<f64> {
    let prod = k_a.hadamard(k_b)?;
    entropy_alpha(&spectrum(&prod)?, alpha)
}

/// Representation mutual information `S_α(A) + S_α(B) - S_α(A,B)`.
pub fn mutual_information(k_a: &GramMatrix, k_b: &GramMatrix, alpha: Alpha) -> Result<f64> {
    let s_a = entropy_alpha(&spectrum(k_a)?, alpha)?;
    let s_b = entropy_alpha(&spectrum(k_b)?, alpha)?;
    let s_ab = joint_entropy(k_a, k_b, alpha)?;
    Ok(s_a + s_b - s_ab)
}
