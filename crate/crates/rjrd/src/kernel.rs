//! Kernel functions, bandwidth heuristics, and normalized Gram matrices.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sample::SampleSet;

/// Kernel family. Only the Gaussian kernel ships; the enum is the
/// extension point for other infinitely divisible kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[non_exhaustive]
pub enum KernelFamily {
    Gaussian,
}

/// How the bandwidth σ was (or should be) chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    /// Caller-supplied σ.
    Fixed(f64),
    /// σ = sqrt(mean squared pairwise distance / 2), over all pairs i≠j.
    MeanSqDistHalf,
    /// σ = median pairwise Euclidean distance.
    MedianPairwise,
}

impl BandwidthRule {
    /// Resolves the rule to a concrete σ on the given data.
    pub fn resolve(&self, data: &SampleSet) -> Result<f64> {
        match self {
            BandwidthRule::Fixed(v) => {
                check_sigma(*v)?;
                Ok(*v)
            }
            BandwidthRule::MeanSqDistHalf => bandwidth_mean_sqdist(data),
            BandwidthRule::MedianPairwise => bandwidth_median(data),
        }
    }
}

/// A kernel with a resolved positive bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    sigma: f64,
    pub rule: BandwidthRule,
}

impl KernelSpec {
    /// Gaussian kernel with a fixed bandwidth.
    pub fn gaussian(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            family: KernelFamily::Gaussian,
            sigma,
            rule: BandwidthRule::Fixed(sigma),
        })
    }

    /// Gaussian kernel with σ resolved from a bandwidth rule on `data`.
    pub fn gaussian_resolved(rule: BandwidthRule, data: &SampleSet) -> Result<Self> {
        let sigma = rule.resolve(data)?;
        Ok(Self {
            family: KernelFamily::Gaussian,
            sigma,
            rule,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma",
            reason: format!("bandwidth must be positive and finite, got {sigma}"),
        });
    }
    Ok(())
}

fn sq_dist(x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    x.iter()
        .zip(y.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Evaluates the kernel on a pair of points. For the Gaussian family this is
/// `exp(-||x-y||² / (2σ²))`, always in (0, 1].
pub fn eval_kernel(x: ArrayView1<f64>, y: ArrayView1<f64>, spec: &KernelSpec) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel arguments",
            left: x.len(),
            right: y.len(),
        });
    }
    match spec.family {
        KernelFamily::Gaussian => Ok((-sq_dist(x, y) / (2.0 * spec.sigma * spec.sigma)).exp()),
    }
}

/// σ = sqrt(E||Z_i - Z_j||² / 2) with the expectation over all pairs i≠j.
///
/// Errors if the spread is zero (all rows identical), which would propagate
/// NaNs through the kernel.
pub fn bandwidth_mean_sqdist(z: &SampleSet) -> Result<f64> {
    let n = z.n();
    if n < 2 {
        return Err(Error::InvalidInput(
            "bandwidth needs at least 2 rows".into(),
        ));
    }
    // Unordered pairs; the ordered-pair mean is identical by symmetry.
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            total += sq_dist(z.row(i), z.row(j));
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let mean = total / pairs;
    if mean <= 0.0 {
        return Err(Error::DegenerateBandwidth(
            "all rows are identical; mean pairwise distance is zero".into(),
        ));
    }
    Ok((mean / 2.0).sqrt())
}

/// Median of the N(N-1)/2 pairwise Euclidean distances. For an even number
/// of distances, the mean of the two central order statistics.
pub fn bandwidth_median(x: &SampleSet) -> Result<f64> {
    let n = x.n();
    if n < 2 {
        return Err(Error::InvalidInput(
            "bandwidth needs at least 2 rows".into(),
        ));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(sq_dist(x.row(i), x.row(j)).sqrt());
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    let k = dists.len();
    let median = if k % 2 == 1 {
        dists[k / 2]
    } else {
        0.5 * (dists[k / 2 - 1] + dists[k / 2])
    };
    if median <= 0.0 {
        return Err(Error::DegenerateBandwidth(
            "median pairwise distance is zero".into(),
        ));
    }
    Ok(median)
}

/// Symmetric, unit-diagonal, positive semidefinite kernel evaluation matrix.
///
/// Entries are normalized to `κ(x_i,x_j) / sqrt(κ(x_i,x_i)·κ(x_j,x_j))`, so
/// the diagonal is exactly 1 and entries lie in [-1, 1]. Symmetry is exact
/// by construction (the upper triangle is mirrored). Positive
/// semidefiniteness holds up to eigensolver tolerance and is enforced when
/// a spectrum is taken.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: Array2<f64>,
}

impl GramMatrix {
    /// Validates and adopts an externally built matrix: square, symmetric
    /// within 1e-12, diagonal within 1e-12 of one (then pinned to exactly
    /// one), entries within [-1, 1] up to the same slack.
    pub fn from_entries(mut entries: Array2<f64>) -> Result<Self> {
        let n = entries.nrows();
        if n == 0 || entries.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "Gram matrix must be square and nonempty, got {}x{}",
                n,
                entries.ncols()
            )));
        }
        const TOL: f64 = 1e-12;
        for i in 0..n {
            let d = entries[[i, i]];
            if !d.is_finite() || (d - 1.0).abs() > TOL {
                return Err(Error::InvalidInput(format!(
                    "diagonal entry ({i},{i}) = {d} is not 1"
                )));
            }
            for j in (i + 1)..n {
                let a = entries[[i, j]];
                let b = entries[[j, i]];
                if !a.is_finite() || (a - b).abs() > TOL {
                    return Err(Error::InvalidInput(format!(
                        "asymmetric entries at ({i},{j}): {a} vs {b}"
                    )));
                }
                if a.abs() > 1.0 + TOL {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i},{j}) = {a} outside [-1, 1]"
                    )));
                }
                let v = a.clamp(-1.0, 1.0);
                entries[[i, j]] = v;
                entries[[j, i]] = v;
            }
            entries[[i, i]] = 1.0;
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_entries_unchecked(entries: Array2<f64>) -> Self {
        Self { entries }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    /// Entrywise (Hadamard) product. The product of unit-diagonal PSD
    /// matrices is again unit-diagonal PSD.
    pub fn hadamard(&self, other: &GramMatrix) -> Result<GramMatrix> {
        if self.n() != other.n() {
            return Err(Error::DimensionMismatch {
                context: "Hadamard product",
                left: self.n(),
                right: other.n(),
            });
        }
        Ok(GramMatrix {
            entries: &self.entries * &other.entries,
        })
    }

    /// Principal submatrix on the given row/column indices.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Result<GramMatrix> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty index set".into()));
        }
        for &i in indices {
            if i >= self.n() {
                return Err(Error::InvalidInput(format!(
                    "index {i} out of range for {}x{} matrix",
                    self.n(),
                    self.n()
                )));
            }
        }
        let k = indices.len();
        let mut sub = Array2::zeros((k, k));
        for (a, &i) in indices.iter().enumerate() {
            for (b, &j) in indices.iter().enumerate() {
                sub[[a, b]] = self.entries[[i, j]];
            }
        }
        Ok(GramMatrix { entries: sub })
    }
}

/// Builds the normalized Gram matrix of a sample under the kernel.
///
/// Only the upper triangle is evaluated; it is mirrored so the result is
/// exactly symmetric, and the diagonal is exactly 1.
pub fn gram_matrix(x: &SampleSet, spec: &KernelSpec) -> Result<GramMatrix> {
    let n = x.n();
    // Self-similarities; for the Gaussian family these are identically 1,
    // but the normalization is written generally.
    let selfsim: Vec<f64> = (0..n)
        .map(|i| eval_kernel(x.row(i), x.row(i), spec))
        .collect::<Result<_>>()?;
    for (i, &s) in selfsim.iter().enumerate() {
        if s <= 0.0 {
            return Err(Error::Numerical(format!(
                "zero self-similarity at row {i}; cannot normalize"
            )));
        }
    }

    // Rows are independent, so the parallel split cannot change any value.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut row = vec![0.0; n - i];
            for j in i..n {
                let k = eval_kernel(x.row(i), x.row(j), spec)
                    .expect("dimensions validated by SampleSet");
                row[j - i] = k / (selfsim[i] * selfsim[j]).sqrt();
            }
            row
        })
        .collect();

    let mut entries = Array2::zeros((n, n));
    for (i, row) in rows.iter().enumerate() {
        entries[[i, i]] = 1.0;
        for (off, &v) in row.iter().enumerate().skip(1) {
            let j = i + off;
            entries[[i, j]] = v;
            entries[[j, i]] = v;
        }
    }
    Ok(GramMatrix { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn set(rows: &[Vec<f64>]) -> SampleSet {
        SampleSet::from_rows(rows).unwrap()
    }

    #[test]
    fn gaussian_kernel_closed_form() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x = array![0.0];
        let y = array![2.0_f64.sqrt()];
        let k = eval_kernel(x.view(), y.view(), &spec).unwrap();
        assert!((k - (-1.0_f64).exp()).abs() < 1e-15);

        // x = y
        let k1 = eval_kernel(x.view(), x.view(), &spec).unwrap();
        assert_eq!(k1, 1.0);

        // 10σ separation decays below 1e-21
        let far = array![10.0];
        let kf = eval_kernel(x.view(), far.view(), &spec).unwrap();
        assert!(kf < 1e-21);
        assert!(kf > 0.0);
    }

    #[test]
    fn kernel_dimension_mismatch() {
        let spec = KernelSpec::gaussian(1.0).unwrap();
        let x = array![0.0, 1.0];
        let y = array![0.0];
        assert!(eval_kernel(x.view(), y.view(), &spec).is_err());
    }

    #[test]
    fn mean_sqdist_bandwidth_examples() {
        let z = set(&[vec![0.0], vec![2.0]]);
        assert!((bandwidth_mean_sqdist(&z).unwrap() - 2.0_f64.sqrt()).abs() < 1e-12);

        let z = set(&[vec![0.0], vec![0.0], vec![3.0]]);
        // pair squared distances {0, 9, 9}, mean 6, σ = sqrt(3)
        assert!((bandwidth_mean_sqdist(&z).unwrap() - 3.0_f64.sqrt()).abs() < 1e-12);

        let z = set(&[vec![1.5], vec![1.5]]);
        assert!(matches!(
            bandwidth_mean_sqdist(&z),
            Err(Error::DegenerateBandwidth(_))
        ));
    }

    #[test]
    fn median_bandwidth_examples() {
        let x = set(&[vec![0.0], vec![1.0], vec![3.0]]);
        assert!((bandwidth_median(&x).unwrap() - 2.0).abs() < 1e-12);

        let x = set(&[vec![0.0], vec![1.0]]);
        assert!((bandwidth_median(&x).unwrap() - 1.0).abs() < 1e-12);

        // distances {0,0,0,5,5,5}; median = mean of the two middle = 2.5
        let x = set(&[vec![0.0], vec![0.0], vec![0.0], vec![5.0]]);
        assert!((bandwidth_median(&x).unwrap() - 2.5).abs() < 1e-12);

        let x = set(&[vec![2.0], vec![2.0]]);
        assert!(matches!(
            bandwidth_median(&x),
            Err(Error::DegenerateBandwidth(_))
        ));
    }

    #[test]
    fn bandwidths_are_permutation_invariant() {
        let x = set(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![5.0, 0.5], vec![1.0, 1.0]]);
        let perm = x.subset(&[2, 0, 3, 1]).unwrap();
        assert_eq!(
            bandwidth_mean_sqdist(&x).unwrap(),
            bandwidth_mean_sqdist(&perm).unwrap()
        );
        assert_eq!(
            bandwidth_median(&x).unwrap(),
            bandwidth_median(&perm).unwrap()
        );
    }

    #[test]
    fn gram_examples() {
        let spec = KernelSpec::gaussian(1.0).unwrap();

        let single = set(&[vec![0.3, 0.4]]);
        let g = gram_matrix(&single, &spec).unwrap();
        assert_eq!(g.n(), 1);
        assert_eq!(g.get(0, 0), 1.0);

        let twins = set(&[vec![1.0], vec![1.0]]);
        let g = gram_matrix(&twins, &spec).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert_eq!(g.get(i, j), 1.0);
            }
        }

        let pair = set(&[vec![0.0], vec![2.0_f64.sqrt()]]);
        let g = gram_matrix(&pair, &spec).unwrap();
        assert!((g.get(0, 1) - (-1.0_f64).exp()).abs() < 1e-15);
        assert_eq!(g.get(0, 1), g.get(1, 0));
    }

    #[test]
    fn gram_is_exactly_symmetric_with_unit_diagonal() {
        let spec = KernelSpec::gaussian(0.7).unwrap();
        let x = set(&[
            vec![0.1, 0.2],
            vec![-1.0, 0.5],
            vec![2.0, 2.0],
            vec![0.0, -3.0],
        ]);
        let g = gram_matrix(&x, &spec).unwrap();
        for i in 0..x.n() {
            assert_eq!(g.get(i, i), 1.0);
            for j in 0..x.n() {
                assert_eq!(g.get(i, j).to_bits(), g.get(j, i).to_bits());
                assert!(g.get(i, j) > 0.0 && g.get(i, j) <= 1.0);
            }
        }
    }

    #[test]
    fn gram_is_translation_invariant() {
        let spec = KernelSpec::gaussian(1.3).unwrap();
        let x = set(&[vec![0.0, 1.0], vec![2.0, -1.0], vec![0.5, 0.5]]);
        let shifted = set(&[vec![10.0, -6.0], vec![12.0, -8.0], vec![10.5, -6.5]]);
        let gx = gram_matrix(&x, &spec).unwrap();
        let gs = gram_matrix(&shifted, &spec).unwrap();
        let max_diff = gx
            .entries()
            .iter()
            .zip(gs.entries().iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_diff <= 1e-12, "max diff {max_diff}");
    }

    #[test]
    fn from_entries_validates() {
        assert!(GramMatrix::from_entries(array![[1.0, 0.5], [0.4, 1.0]]).is_err());
        assert!(GramMatrix::from_entries(array![[0.9, 0.0], [0.0, 1.0]]).is_err());
        assert!(GramMatrix::from_entries(array![[1.0, 1.5], [1.5, 1.0]]).is_err());
        let g = GramMatrix::from_entries(array![[1.0, 0.5], [0.5, 1.0]]).unwrap();
        assert_eq!(g.n(), 2);
    }

    #[test]
    fn submatrix_picks_entries() {
        let g = GramMatrix::from_entries(array![
            [1.0, 0.5, 0.2],
            [0.5, 1.0, 0.1],
            [0.2, 0.1, 1.0]
        ])
        .unwrap();
        let s = g.principal_submatrix(&[0, 2]).unwrap();
        assert_eq!(s.get(0, 1), 0.2);
        assert!(g.principal_submatrix(&[3]).is_err());
    }
}
