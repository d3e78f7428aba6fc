//! Dense symmetric eigenvalue routines.
//!
//! Thin wrapper over faer's self-adjoint EVD, always invoked with explicit
//! sequential parallelism so results are bit-reproducible regardless of the
//! caller's thread pool, plus an exact secular-equation solver for
//! eigenvalues of a diagonal matrix plus a rank-one update. The latter lets
//! the greedy subset search score one candidate per rank-one update instead
//! of one full eigendecomposition.

use dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self_adjoint_evd, self_adjoint_evd_scratch, ComputeEigenvectors};
use faer::{Mat, MatRef, Par};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

fn diagnostics(a: ArrayView2<f64>) -> String {
    let n = a.nrows();
    let max_abs = a.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
    let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
    format!("n={n}, max|entry|={max_abs:.3e}, trace={trace:.6e}")
}

fn check_finite(a: ArrayView2<f64>) -> Result<()> {
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "matrix contains non-finite entries ({})",
            diagnostics(a)
        )));
    }
    Ok(())
}

fn run_evd(a: ArrayView2<f64>, want_vectors: bool) -> Result<(Vec<f64>, Option<Array2<f64>>)> {
    check_finite(a)?;
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    let owned;
    let slice = match a.to_slice() {
        Some(s) => s,
        None => {
            owned = a.to_owned();
            owned.as_slice().expect("owned array is contiguous")
        }
    };
    // The matrix is symmetric, so handing the row-major buffer to a
    // column-major view reads the same matrix.
    let a_faer: MatRef<'_, f64> = MatRef::from_column_major_slice(slice, n, n);

    let par = Par::Seq;
    let compute = if want_vectors {
        ComputeEigenvectors::Yes
    } else {
        ComputeEigenvectors::No
    };
    let mut values = faer::diag::Diag::<f64>::zeros(n);
    let mut vectors = want_vectors.then(|| Mat::<f64>::zeros(n, n));

    self_adjoint_evd(
        a_faer,
        values.as_mut(),
        vectors.as_mut().map(|u| u.as_mut()),
        par,
        MemStack::new(&mut MemBuffer::new(self_adjoint_evd_scratch::<f64>(
            n,
            compute,
            par,
            Default::default(),
        ))),
        Default::default(),
    )
    .map_err(|e| {
        Error::Numerical(format!(
            "symmetric eigendecomposition failed: {e:?} ({})",
            diagnostics(a)
        ))
    })?;

    let vals: Vec<f64> = values.column_vector().iter().copied().collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "eigensolver produced non-finite eigenvalues ({})",
            diagnostics(a)
        )));
    }
    let u = vectors.map(|u| Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]));
    Ok((vals, u))
}

/// Eigenvalues of a symmetric matrix, ascending.
pub(crate) fn sym_eigenvalues(a: ArrayView2<f64>) -> Result<Vec<f64>> {
    Ok(run_evd(a, false)?.0)
}

/// Eigenvalues (ascending) and matching eigenvector columns.
pub(crate) fn sym_eigen(a: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let (vals, u) = run_evd(a, true)?;
    Ok((vals, u.expect("vectors requested")))
}

/// Eigenvalues of `diag(d) + z zᵀ`, ascending. `d` must be ascending.
///
/// Classic secular-equation solve: after deflating negligible weights and
/// merging poles closer than a few ulps, each eigenvalue is the unique root
/// of `f(μ) = 1 + Σ zⱼ²/(dⱼ - μ)` in one open interval between consecutive
/// poles, found by a bisection-safeguarded Newton iteration in coordinates
/// relative to the left pole.
pub(crate) fn rank_one_update_eigenvalues(d: &[f64], z: &[f64]) -> Vec<f64> {
    let n = d.len();
    assert_eq!(n, z.len());
    if n == 0 {
        return Vec::new();
    }
    debug_assert!(d.windows(2).all(|w| w[0] <= w[1]), "d must be ascending");

    let total_weight: f64 = z.iter().map(|v| v * v).sum();
    let scale = d[n - 1]
        .abs()
        .max(d[0].abs())
        .max(total_weight)
        .max(f64::MIN_POSITIVE);
    let eps = f64::EPSILON;
    let deflate_tol = 0.01 * eps * scale;
    let cluster_tol = 8.0 * eps * scale;

    // Deflation: weights too small to move their pole, and near-identical
    // poles merged into one with the summed weight (all but one eigenvalue
    // of such a cluster stays put).
    let mut poles: Vec<f64> = Vec::with_capacity(n);
    let mut weights: Vec<f64> = Vec::with_capacity(n);
    let mut fixed: Vec<f64> = Vec::new();
    for j in 0..n {
        let w2 = z[j] * z[j];
        if w2 <= deflate_tol {
            fixed.push(d[j]);
        } else if let Some(&last) = poles.last() {
            if d[j] - last <= cluster_tol {
                *weights.last_mut().unwrap() += w2;
                fixed.push(d[j]);
            } else {
                poles.push(d[j]);
                weights.push(w2);
            }
        } else {
            poles.push(d[j]);
            weights.push(w2);
        }
    }

    let k = poles.len();
    if k == 0 {
        return d.to_vec();
    }
    let active_weight: f64 = weights.iter().sum();

    let mut roots = Vec::with_capacity(k);
    for i in 0..k {
        // Root of g(t) = 1 + Σ wⱼ / (δⱼ - t), δⱼ = poleⱼ - poleᵢ,
        // bracketed in t ∈ (0, gap).
        let gap = if i + 1 < k {
            poles[i + 1] - poles[i]
        } else {
            // Rightmost root sits within the total active weight of the
            // update; pad the bracket until g is positive at the top.
            let mut hi = active_weight + eps * scale;
            let g_at = |t: f64| -> f64 {
                1.0 + (0..k)
                    .map(|j| weights[j] / ((poles[j] - poles[i]) - t))
                    .sum::<f64>()
            };
            let mut guard = 0;
            while g_at(hi) < 0.0 && guard < 64 {
                hi *= 2.0;
                guard += 1;
            }
            hi
        };

        let mut lo = 0.0_f64;
        let mut hi = gap;
        let mut t = 0.5 * gap;
        for _ in 0..128 {
            let mut g = 1.0;
            let mut dg = 0.0;
            for j in 0..k {
                let denom = (poles[j] - poles[i]) - t;
                let r = weights[j] / denom;
                g += r;
                dg += r / denom;
            }
            if g == 0.0 {
                break;
            }
            if g < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - g / dg;
            let next = if newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if (hi - lo) <= 2.0 * eps * (t.abs().max(eps * scale)) || next == t {
                break;
            }
            t = next;
        }
        roots.push(poles[i] + t);
    }

    roots.extend_from_slice(&fixed);
    roots.sort_unstable_by(f64::total_cmp);
    roots
}
