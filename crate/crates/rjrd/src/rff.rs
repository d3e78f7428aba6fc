//! Random Fourier feature approximation of the Gaussian kernel and the
//! D×D covariance shortcut for divergence estimation on large samples.
//!
//! A frozen map of `D` random frequencies turns the kernel into an explicit
//! feature map `φ̂(x)ᵢ = sqrt(2/D)·cos(ωᵢᵀx + bᵢ)` with
//! `E[φ̂(x)ᵀφ̂(y)] = κ(x,y)`. The nonzero eigenvalues of the approximate
//! Gram `Φ̂Φ̂ᵀ` equal those of the D×D covariance `Φ̂ᵀΦ̂`, so for N ≫ D the
//! spectrum (and hence the divergence) is available without ever holding an
//! N×N matrix.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::jrd::{finalize, jrd_upper_bound, DivergenceResult, EstimatorMethod, RffRoute};
use crate::linalg;
use crate::sample::SampleSet;
use crate::spectral::{entropy_alpha, Alpha, Spectrum};

/// Frozen random frequencies and phase offsets defining an approximate
/// feature map. The same `(d, D, σ, seed)` reproduces the map bit-for-bit.
#[derive(Debug, Clone)]
pub struct RffMap {
    frequencies: Array2<f64>,
    offsets: Vec<f64>,
    sigma: f64,
    seed: u64,
}

impl RffMap {
    pub fn feature_count(&self) -> usize {
        self.frequencies.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.frequencies.ncols()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn frequencies(&self) -> ArrayView2<'_, f64> {
        self.frequencies.view()
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }
}

/// Samples a feature map for the Gaussian kernel with bandwidth σ:
/// frequencies from the kernel's spectral measure (i.i.d. normal with
/// standard deviation 1/σ per coordinate), offsets uniform on [0, 2π).
pub fn sample_rff(d: usize, n_features: usize, sigma: f64, seed: u64) -> Result<RffMap> {
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "d",
            reason: "input dimension must be at least 1".into(),
        });
    }
    if n_features == 0 {
        return Err(Error::InvalidParameter {
            name: "n_features",
            reason: "feature count must be at least 1".into(),
        });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("bandwidth must be positive and finite, got {sigma}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inv_sigma = 1.0 / sigma;
    let frequencies = Array2::from_shape_fn((n_features, d), |_| {
        let v: f64 = rng.sample(StandardNormal);
        v * inv_sigma
    });
    let offsets: Vec<f64> = (0..n_features)
        .map(|_| rng.random_range(0.0..2.0 * PI))
        .collect();
    Ok(RffMap {
        frequencies,
        offsets,
        sigma,
        seed,
    })
}

/// Applies the map: row i of the result is `φ̂(x_i)`, an N×D matrix.
/// Every entry is bounded by `sqrt(2/D)`, so each row has squared norm ≤ 2.
pub fn feature_map(map: &RffMap, x: &SampleSet) -> Result<Array2<f64>> {
    if x.dim() != map.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "feature map input dimension",
            left: x.dim(),
            right: map.input_dim(),
        });
    }
    let scale = (2.0 / map.feature_count() as f64).sqrt();
    let mut proj = x.data().dot(&map.frequencies.t());
    let offsets = Array1::from_vec(map.offsets.clone());
    for mut row in proj.rows_mut() {
        row += &offsets;
        row.mapv_inplace(|v| scale * v.cos());
    }
    Ok(proj)
}

/// Spectrum of the approximate Gram `Φ̂Φ̂ᵀ/N`, computed through whichever
/// of the N×N and D×D routes is smaller and zero-padded to N values.
///
/// The mass equals `‖Φ̂‖_F²/N` — close to one but deliberately not
/// renormalized, so approximation error stays measurable.
pub fn rff_spectrum(features: ArrayView2<'_, f64>) -> Result<Spectrum> {
    let n = features.nrows();
    let d = features.ncols();
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput("feature matrix must be nonempty".into()));
    }
    let vals = if d <= n {
        covariance_eigenvalues(&[features])?
    } else {
        let g = features.dot(&features.t());
        psd_eigenvalues(g.view())?
    };
    let scale = 1.0 / n as f64;
    // min(n, d) computed values, zero-padded to the full n-point spectrum
    let mut scaled: Vec<f64> = vals.into_iter().map(|v| v * scale).collect();
    scaled.resize(n, 0.0);
    Ok(Spectrum::clamped(scaled, n))
}

/// Eigenvalues of `Σ blocksᵀ·blocks` (the unnormalized D×D feature
/// covariance accumulated over row blocks), ascending.
fn covariance_eigenvalues(blocks: &[ArrayView2<'_, f64>]) -> Result<Vec<f64>> {
    let d = blocks[0].ncols();
    let mut cov = Array2::<f64>::zeros((d, d));
    for b in blocks {
        cov += &b.t().dot(*b);
    }
    psd_eigenvalues(cov.view())
}

/// Eigenvalues of a PSD matrix with a noise floor: values below float
/// tolerance are reported as-is (clamping happens in `Spectrum`), values
/// materially negative are an error.
fn psd_eigenvalues(a: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
    let vals = linalg::sym_eigenvalues(a)?;
    let scale = vals.last().map(|v| v.abs()).unwrap_or(0.0).max(1.0);
    if let Some(&min) = vals.first() {
        if min < -1e-8 * scale * a.nrows() as f64 {
            return Err(Error::Numerical(format!(
                "feature covariance is not PSD within tolerance: min eigenvalue {min:.3e}"
            )));
        }
    }
    Ok(vals)
}

/// Divergence between two samples through a shared feature map.
///
/// The joint spectrum uses the block-diagonal identity: the eigenvalues of
/// the indicator-masked mixture are the union of the two per-sample
/// spectra, each computable from a D×D covariance. The D×D route is taken
/// when N+M > 2D; otherwise the approximate Gram is eigendecomposed
/// directly (recorded in the method tag). Cost is O((N+M)·D² + D³) on the
/// covariance route, never materializing an (N+M)² matrix.
pub fn jrd_rff(
    x: &SampleSet,
    y: &SampleSet,
    map: &RffMap,
    alpha: Alpha,
) -> Result<DivergenceResult> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            context: "sample feature dimensions",
            left: x.dim(),
            right: y.dim(),
        });
    }
    let n = x.n();
    let m = y.n();
    let total = n + m;
    let d_feat = map.feature_count();

    let phi_x = feature_map(map, x)?;
    let phi_y = feature_map(map, y)?;

    let (mix_vals, block_vals, route) = if total > 2 * d_feat {
        let vx = covariance_eigenvalues(&[phi_x.view()])?;
        let vy = covariance_eigenvalues(&[phi_y.view()])?;
        let vz = covariance_eigenvalues(&[phi_x.view(), phi_y.view()])?;
        (vz, [vx, vy], RffRoute::Covariance)
    } else {
        let phi_z = ndarray::concatenate(Axis(0), &[phi_x.view(), phi_y.view()])
            .expect("dimensions already checked");
        let gz = phi_z.dot(&phi_z.t());
        let gx = phi_x.dot(&phi_x.t());
        let gy = phi_y.dot(&phi_y.t());
        (
            psd_eigenvalues(gz.view())?,
            [psd_eigenvalues(gx.view())?, psd_eigenvalues(gy.view())?],
            RffRoute::Gram,
        )
    };

    let scale = 1.0 / total as f64;
    let mix = Spectrum::clamped(mix_vals.iter().map(|v| v * scale).collect(), total);
    let [bx, by] = block_vals;
    let joint = Spectrum::clamped(
        bx.iter().chain(by.iter()).map(|v| v * scale).collect(),
        total,
    );

    let s_mix = entropy_alpha(&mix, alpha)?;
    let s_joint = entropy_alpha(&joint, alpha)?;
    let raw = s_mix + jrd_upper_bound(n, m, alpha) - s_joint;
    let trace_gap = (mix.mass() - 1.0).abs();
    Ok(finalize(
        raw,
        n,
        m,
        alpha,
        EstimatorMethod::Rff {
            features: d_feat,
            route,
        },
        Some(trace_gap),
    ))
}
