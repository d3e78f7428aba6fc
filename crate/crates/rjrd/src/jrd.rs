//! The representation Jensen-Rényi divergence between two samples.
//!
//! Pool the samples, build the Gram matrix of the pooled sample and the
//! binary indicator Gram matrix of sample membership; the divergence is the
//! representation mutual information between the two. It is symmetric,
//! vanishes when one sample is a permutation of the other, and is bounded
//! above by the entropy of the indicator (log 2 for equal sizes).
//!
//! Three algebraically equivalent estimators are provided:
//! - [`jrd_exact`]: the mutual-information form, straight from Gram and
//!   indicator matrices (any N, M);
//! - [`jrd_population_form`]: `log 2 - log(tr Gᵅ / tr Qᵅ)/(α-1)` from the
//!   mixture and block-diagonal trace ratios (requires N = M);
//! - [`jrd_from_block_spectra`]: never forms the Hadamard product — the
//!   joint spectrum is the union of the two per-sample block spectra.

use std::f64::consts::LN_2;

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, GramMatrix, KernelSpec};
use crate::sample::SampleSet;
use crate::spectral::{entropy_alpha, mutual_information, spectrum, Alpha, Spectrum};

/// Which computational path produced a divergence value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorMethod {
    /// Mutual-information form on explicit Gram and indicator matrices.
    ExactMi,
    /// Trace-ratio closed form (equal sample sizes).
    PopulationForm,
    /// Block-spectrum union; the Hadamard product is never materialized.
    BlockSpectra,
    /// Random-Fourier-feature approximation.
    Rff {
        features: usize,
        route: RffRoute,
    },
}

/// Which matrix the RFF path eigendecomposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RffRoute {
    /// D×D feature covariance (chosen when N+M > 2D).
    Covariance,
    /// (N+M)×(N+M) approximate Gram (cheaper for small samples).
    Gram,
}

/// A divergence value with its provenance.
///
/// `value` is clamped into `[0, upper_bound]` when it strays within 1e-8 of
/// either boundary through float noise; `raw_value` keeps the unclamped
/// number. `trace_gap` reports |trace - 1| of the approximate mixture
/// spectrum for the RFF path (`None` for exact paths).
#[derive(Debug, Clone)]
pub struct DivergenceResult {
    pub value: f64,
    pub raw_value: f64,
    pub alpha: Alpha,
    pub n: usize,
    pub m: usize,
    pub method: EstimatorMethod,
    pub trace_gap: Option<f64>,
}

const BOUNDARY_SLACK: f64 = 1e-8;

pub(crate) fn finalize(
    raw: f64,
    n: usize,
    m: usize,
    alpha: Alpha,
    method: EstimatorMethod,
    trace_gap: Option<f64>,
) -> DivergenceResult {
    let ub = jrd_upper_bound(n, m, alpha);
    let mut value = raw;
    if raw < 0.0 && raw >= -BOUNDARY_SLACK {
        value = 0.0;
    } else if raw > ub && raw <= ub + BOUNDARY_SLACK {
        value = ub;
    }
    DivergenceResult {
        value,
        raw_value: raw,
        alpha,
        n,
        m,
        method,
        trace_gap,
    }
}

/// Mixture Gram matrix over the pooled sample plus the sample-membership
/// indicator. `K_Z ∘ L_Z` equals `blockdiag(K_X, K_Y)` entrywise.
#[derive(Debug, Clone)]
pub struct MixtureGram {
    k_z: GramMatrix,
    l_z: GramMatrix,
    n: usize,
    m: usize,
}

impl MixtureGram {
    pub fn k_z(&self) -> &GramMatrix {
        &self.k_z
    }

    pub fn l_z(&self) -> &GramMatrix {
        &self.l_z
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }
}

/// Indicator Gram matrix: entry (i, j) is 1 when labels agree, 0 otherwise.
///
/// Labels may take at most two distinct values and need not be contiguous,
/// so permutation tests can shuffle labels without reordering rows.
pub fn indicator_gram(labels: &[i64]) -> Result<GramMatrix> {
    if labels.is_empty() {
        return Err(Error::InvalidInput("labels must be nonempty".into()));
    }
    let mut distinct: Vec<i64> = Vec::with_capacity(2);
    for &l in labels {
        if !distinct.contains(&l) {
            distinct.push(l);
            if distinct.len() > 2 {
                return Err(Error::InvalidInput(format!(
                    "labels must be binary; found a third value {l}"
                )));
            }
        }
    }
    let n = labels.len();
    let mut entries = ndarray::Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            entries[[i, j]] = if labels[i] == labels[j] { 1.0 } else { 0.0 };
        }
    }
    Ok(GramMatrix::from_entries_unchecked(entries))
}

/// Builds the pooled Gram matrix and indicator for two samples sharing a
/// kernel.
pub fn build_mixture(x: &SampleSet, y: &SampleSet, spec: &KernelSpec) -> Result<MixtureGram> {
    let pooled = x.concat(y)?;
    let k_z = gram_matrix(&pooled, spec)?;
    let labels: Vec<i64> = std::iter::repeat(0)
        .take(x.n())
        .chain(std::iter::repeat(1).take(y.n()))
        .collect();
    let l_z = indicator_gram(&labels)?;
    Ok(MixtureGram {
        k_z,
        l_z,
        n: x.n(),
        m: y.n(),
    })
}

/// Closed-form upper bound on the divergence: the entropy of the indicator
/// spectrum, `log[(N/(N+M))^α + (M/(N+M))^α] / (1-α)`. Exactly `log 2` when
/// N = M.
pub fn jrd_upper_bound(n: usize, m: usize, alpha: Alpha) -> f64 {
    if n == m {
        return LN_2;
    }
    let total = (n + m) as f64;
    let p = n as f64 / total;
    let q = m as f64 / total;
    let a = alpha.value();
    (p.powf(a) + q.powf(a)).ln() / (1.0 - a)
}

/// Exact divergence by the mutual-information form (any sample sizes).
pub fn jrd_exact(
    x: &SampleSet,
    y: &SampleSet,
    spec: &KernelSpec,
    alpha: Alpha,
) -> Result<DivergenceResult> {
    let mix = build_mixture(x, y, spec)?;
    let raw = mutual_information(&mix.k_z, &mix.l_z, alpha)?;
    Ok(finalize(raw, mix.n, mix.m, alpha, EstimatorMethod::ExactMi, None))
}

/// Divergence via the trace-ratio closed form
/// `log 2 - log(tr[(K_Z/2N)^α] / tr[(K_Z∘L_Z/2N)^α]) / (α-1)`.
///
/// Defined for equal sample sizes only; other callers are directed to
/// [`jrd_exact`].
pub fn jrd_population_form(
    x: &SampleSet,
    y: &SampleSet,
    spec: &KernelSpec,
    alpha: Alpha,
) -> Result<DivergenceResult> {
    if x.n() != y.n() {
        return Err(Error::Unsupported(format!(
            "the population form requires equal sample sizes (got N={}, M={}); use jrd_exact",
            x.n(),
            y.n()
        )));
    }
    let mix = build_mixture(x, y, spec)?;
    let tr_g = spectrum(&mix.k_z)?.power_sum(alpha);
    let joint = mix.k_z.hadamard(&mix.l_z)?;
    let tr_q = spectrum(&joint)?.power_sum(alpha);
    if tr_g <= 0.0 || tr_q <= 0.0 {
        return Err(Error::Numerical(format!(
            "trace powers must be positive, got tr(G^a)={tr_g}, tr(Q^a)={tr_q}"
        )));
    }
    let raw = LN_2 - (tr_g / tr_q).ln() / (alpha.value() - 1.0);
    Ok(finalize(
        raw,
        mix.n,
        mix.m,
        alpha,
        EstimatorMethod::PopulationForm,
        None,
    ))
}

/// Divergence from precomputed spectra, never forming the Hadamard product.
///
/// `spec_z` is the spectrum of `K_Z/(N+M)`; `spec_x` and `spec_y` are the
/// per-sample spectra of `K_X/N` and `K_Y/M` (each summing to one). The
/// rescaling to mixture normalization — eigenvalues of `K_X/N` scaled by
/// `N/(N+M)` — happens internally, and the joint spectrum is the union of
/// the two rescaled blocks.
pub fn jrd_from_block_spectra(
    spec_z: &Spectrum,
    spec_x: &Spectrum,
    spec_y: &Spectrum,
    n: usize,
    m: usize,
    alpha: Alpha,
) -> Result<DivergenceResult> {
    let total = n + m;
    if spec_x.len() != n || spec_x.source_size() != n {
        return Err(Error::DimensionMismatch {
            context: "first block spectrum vs N",
            left: spec_x.len(),
            right: n,
        });
    }
    if spec_y.len() != m || spec_y.source_size() != m {
        return Err(Error::DimensionMismatch {
            context: "second block spectrum vs M",
            left: spec_y.len(),
            right: m,
        });
    }
    if spec_z.len() != total || spec_z.source_size() != total {
        return Err(Error::DimensionMismatch {
            context: "mixture spectrum vs N+M",
            left: spec_z.len(),
            right: total,
        });
    }
    let wx = n as f64 / total as f64;
    let wy = m as f64 / total as f64;
    let union_mass = wx * spec_x.mass() + wy * spec_y.mass();
    if (union_mass - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "rescaled block spectra have mass {union_mass}, expected 1: \
             per-sample spectra must each sum to one"
        )));
    }
    if (spec_z.mass() - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "mixture spectrum has mass {}, expected 1",
            spec_z.mass()
        )));
    }

    let a = alpha.value();
    let s_mix = entropy_alpha(spec_z, alpha)?;
    let joint_power = wx.powf(a) * spec_x.power_sum(alpha) + wy.powf(a) * spec_y.power_sum(alpha);
    if joint_power <= 0.0 || !joint_power.is_finite() {
        return Err(Error::Numerical(format!(
            "joint power sum {joint_power} is not positive"
        )));
    }
    let s_joint = joint_power.ln() / (1.0 - a);
    let raw = s_mix + jrd_upper_bound(n, m, alpha) - s_joint;
    Ok(finalize(raw, n, m, alpha, EstimatorMethod::BlockSpectra, None))
}

/// Per-label-group spectra of a pooled Gram matrix, one per binary label
/// value (group of the smaller label first). Each spectrum is normalized
/// by its own block size, ready for [`jrd_from_block_spectra`].
///
/// Rows are never physically reordered: the blocks are principal
/// submatrices gathered by label, which have the same spectra as the
/// contiguous blocks of any reordering.
pub fn group_spectra(k_pooled: &GramMatrix, labels: &[i64]) -> Result<(Spectrum, Spectrum)> {
    if labels.len() != k_pooled.n() {
        return Err(Error::DimensionMismatch {
            context: "labels vs pooled Gram",
            left: labels.len(),
            right: k_pooled.n(),
        });
    }
    let mut values: Vec<i64> = Vec::with_capacity(2);
    for &l in labels {
        if !values.contains(&l) {
            values.push(l);
            if values.len() > 2 {
                return Err(Error::InvalidInput(
                    "labels must take exactly two distinct values".into(),
                ));
            }
        }
    }
    if values.len() != 2 {
        return Err(Error::InvalidInput(
            "labels must take exactly two distinct values".into(),
        ));
    }
    values.sort_unstable();
    let idx0: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == values[0])
        .collect();
    let idx1: Vec<usize> = (0..labels.len())
        .filter(|&i| labels[i] == values[1])
        .collect();
    let s0 = spectrum(&k_pooled.principal_submatrix(&idx0)?)?;
    let s1 = spectrum(&k_pooled.principal_submatrix(&idx1)?)?;
    Ok((s0, s1))
}

/// Divergence between the two label groups of an already-pooled sample,
/// via the block-spectrum path on the pooled Gram matrix.
///
/// This is the estimator permutation tests evaluate per label shuffle.
pub fn jrd_mixed_labels(
    k_pooled: &GramMatrix,
    labels: &[i64],
    alpha: Alpha,
) -> Result<DivergenceResult> {
    let spec_z = spectrum(k_pooled)?;
    let (s0, s1) = group_spectra(k_pooled, labels)?;
    jrd_from_block_spectra(&spec_z, &s0, &s1, s0.source_size(), s1.source_size(), alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::BandwidthRule;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn singleton(v: f64) -> SampleSet {
        SampleSet::from_rows(&[vec![v]]).unwrap()
    }

    fn gaussian_cloud(n: usize, d: usize, shift: f64, rng: &mut ChaCha8Rng) -> SampleSet {
        use rand_distr::StandardNormal;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..d)
                    .map(|j| {
                        let v: f64 = rng.sample(StandardNormal);
                        if j == 0 {
                            v + shift
                        } else {
                            v
                        }
                    })
                    .collect()
            })
            .collect();
        SampleSet::from_rows(&rows).unwrap()
    }

    /// Singletons at distance chosen so the kernel value is exactly k.
    fn half_similarity_pair() -> (SampleSet, SampleSet, KernelSpec) {
        let t = (2.0 * LN_2).sqrt(); // exp(-t²/2) = 0.5 at σ = 1
        (
            singleton(0.0),
            singleton(t),
            KernelSpec::gaussian(1.0).unwrap(),
        )
    }

    #[test]
    fn upper_bound_examples() {
        let a2 = Alpha::new(2.0).unwrap();
        let a5 = Alpha::new(5.0).unwrap();
        assert_eq!(jrd_upper_bound(250, 250, a2), LN_2);
        assert_eq!(jrd_upper_bound(1, 1, a5), LN_2);
        let b = jrd_upper_bound(999, 1, a2);
        let expected = (0.999_f64.powi(2) + 0.001_f64.powi(2)).ln() / (1.0 - 2.0);
        assert!((b - expected).abs() < 1e-15);
        assert!((b - 0.002).abs() < 2e-4);
    }

    #[test]
    fn indicator_examples() {
        let all = indicator_gram(&[3, 3, 3]).unwrap();
        assert!(all.entries().iter().all(|&v| v == 1.0));

        let id = indicator_gram(&[0, 1]).unwrap();
        assert_eq!(id.get(0, 1), 0.0);
        assert_eq!(id.get(0, 0), 1.0);

        let l = indicator_gram(&[0, 0, 1]).unwrap();
        let s = spectrum(&l).unwrap();
        assert!((s.values()[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((s.values()[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.values()[2], 0.0);

        assert!(indicator_gram(&[]).is_err());
        assert!(indicator_gram(&[0, 1, 2]).is_err());
    }

    #[test]
    fn mixture_examples() {
        let spec = KernelSpec::gaussian(1.0).unwrap();

        let m = build_mixture(&singleton(0.5), &singleton(0.5), &spec).unwrap();
        assert!(m.k_z().entries().iter().all(|&v| v == 1.0));
        assert_eq!(m.l_z().get(0, 1), 0.0);

        let (x, y, spec) = half_similarity_pair();
        let m = build_mixture(&x, &y, &spec).unwrap();
        assert!((m.k_z().get(0, 1) - 0.5).abs() < 1e-15);

        let two = SampleSet::from_rows(&[vec![0.0], vec![0.1]]).unwrap();
        let m = build_mixture(&two, &singleton(5.0), &spec).unwrap();
        let l = m.l_z();
        assert_eq!(
            (0..3)
                .map(|i| (0..3).map(|j| l.get(i, j)).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
            vec![
                vec![1.0, 1.0, 0.0],
                vec![1.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0]
            ]
        );
    }

    #[test]
    fn exact_divergence_worked_cases() {
        let a2 = Alpha::new(2.0).unwrap();

        // permutation of the same sample -> 0
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = gaussian_cloud(20, 3, 0.0, &mut rng);
        let perm: Vec<usize> = {
            let mut p: Vec<usize> = (0..20).collect();
            p.shuffle(&mut rng);
            p
        };
        let y = x.subset(&perm).unwrap();
        let spec =
            KernelSpec::gaussian_resolved(BandwidthRule::MeanSqDistHalf, &x.concat(&y).unwrap())
                .unwrap();
        let d = jrd_exact(&x, &y, &spec, a2).unwrap();
        assert!(d.value <= 1e-8, "permutation divergence {}", d.value);

        // far-separated singletons -> log 2
        let spec1 = KernelSpec::gaussian(1.0).unwrap();
        let d = jrd_exact(&singleton(0.0), &singleton(1e6), &spec1, a2).unwrap();
        assert!((d.value - LN_2).abs() < 1e-6);

        // half-similar singletons at alpha 2 -> log 1.6
        let (x, y, spec) = half_similarity_pair();
        let d = jrd_exact(&x, &y, &spec, a2).unwrap();
        assert!((d.value - 1.6_f64.ln()).abs() < 1e-10);
        assert!(matches!(d.method, EstimatorMethod::ExactMi));
    }

    #[test]
    fn population_form_matches_exact_and_rejects_unequal_sizes() {
        let a2 = Alpha::new(2.0).unwrap();

        // identical singletons: divergence 0 for any alpha
        let spec = KernelSpec::gaussian(1.0).unwrap();
        for a in [1.01, 2.0, 5.0] {
            let alpha = Alpha::new(a).unwrap();
            let d = jrd_population_form(&singleton(0.3), &singleton(0.3), &spec, alpha).unwrap();
            assert!(d.value.abs() <= 1e-10, "alpha {a}: {}", d.value);
        }

        let (x, y, spec) = half_similarity_pair();
        let d = jrd_population_form(&x, &y, &spec, a2).unwrap();
        assert!((d.value - 1.6_f64.ln()).abs() < 1e-10);
        assert!(matches!(d.method, EstimatorMethod::PopulationForm));

        // far-separated singletons: trace ratio is 1, value log 2
        let d = jrd_population_form(&singleton(0.0), &singleton(1e6), &spec, a2).unwrap();
        assert!((d.value - LN_2).abs() < 1e-6);

        let two = SampleSet::from_rows(&[vec![0.0], vec![1.0]]).unwrap();
        assert!(matches!(
            jrd_population_form(&two, &singleton(0.0), &spec, a2),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn block_spectra_path() {
        let a2 = Alpha::new(2.0).unwrap();
        let (x, y, spec) = half_similarity_pair();
        let mix = build_mixture(&x, &y, &spec).unwrap();
        let spec_z = spectrum(mix.k_z()).unwrap();
        let kx = gram_matrix(&x, &spec).unwrap();
        let ky = gram_matrix(&y, &spec).unwrap();
        let d = jrd_from_block_spectra(
            &spec_z,
            &spectrum(&kx).unwrap(),
            &spectrum(&ky).unwrap(),
            1,
            1,
            a2,
        )
        .unwrap();
        assert!((d.value - 1.6_f64.ln()).abs() < 1e-10);
        assert!(matches!(d.method, EstimatorMethod::BlockSpectra));

        // same sample on both sides -> 0
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = gaussian_cloud(15, 2, 0.0, &mut rng);
        let pooled = x.concat(&x).unwrap();
        let spec = KernelSpec::gaussian_resolved(BandwidthRule::MeanSqDistHalf, &pooled).unwrap();
        let kz = gram_matrix(&pooled, &spec).unwrap();
        let kx = gram_matrix(&x, &spec).unwrap();
        let sx = spectrum(&kx).unwrap();
        let d = jrd_from_block_spectra(&spectrum(&kz).unwrap(), &sx, &sx, 15, 15, a2).unwrap();
        assert!(d.value <= 1e-8);

        // mass precondition: a spectrum that does not sum to one is rejected
        let bad = Spectrum::new(vec![0.5, 0.1], 2).unwrap();
        let good = spectrum(&kx).unwrap();
        let err = jrd_from_block_spectra(&spectrum(&kz).unwrap(), &bad, &good, 2, 15, a2);
        assert!(err.is_err());
    }

    #[test]
    fn mixed_label_path_agrees_with_exact() {
        let a = Alpha::new(1.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gaussian_cloud(12, 2, 0.0, &mut rng);
        let y = gaussian_cloud(8, 2, 1.0, &mut rng);
        let pooled = x.concat(&y).unwrap();
        let spec = KernelSpec::gaussian_resolved(BandwidthRule::MeanSqDistHalf, &pooled).unwrap();

        let exact = jrd_exact(&x, &y, &spec, a).unwrap();

        // interleave the rows and labels the same way
        let mut order: Vec<usize> = (0..20).collect();
        order.shuffle(&mut rng);
        let shuffled = pooled.subset(&order).unwrap();
        let labels: Vec<i64> = order.iter().map(|&i| if i < 12 { 0 } else { 1 }).collect();
        let k = gram_matrix(&shuffled, &spec).unwrap();
        let mixed = jrd_mixed_labels(&k, &labels, a).unwrap();

        assert!(
            (exact.value - mixed.value).abs() <= 1e-8,
            "exact {} vs mixed-label {}",
            exact.value,
            mixed.value
        );
    }

    #[test]
    fn symmetry_and_bound_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for a in [1.01, 2.0, 5.0] {
            let alpha = Alpha::new(a).unwrap();
            for _ in 0..5 {
                let n = rng.random_range(3..=25);
                let x = gaussian_cloud(n, 2, 0.0, &mut rng);
                let y = gaussian_cloud(n, 2, rng.random_range(0.0..2.0), &mut rng);
                let pooled = x.concat(&y).unwrap();
                let spec =
                    KernelSpec::gaussian_resolved(BandwidthRule::MeanSqDistHalf, &pooled).unwrap();
                let dxy = jrd_exact(&x, &y, &spec, alpha).unwrap();
                let dyx = jrd_exact(&y, &x, &spec, alpha).unwrap();
                assert!((dxy.value - dyx.value).abs() <= 1e-10);
                assert!(dxy.value >= -1e-8);
                assert!(dxy.value <= jrd_upper_bound(n, n, alpha) + 1e-8);
            }
        }
    }

    #[test]
    fn divergence_grows_with_separation_in_the_median() {
        let alpha = Alpha::new(2.0).unwrap();
        let separations = [0.0, 0.7, 1.5, 3.0];
        let mut medians = Vec::new();
        for (si, &sep) in separations.iter().enumerate() {
            let mut vals = Vec::new();
            for seed in 0..50 {
                let mut rng = ChaCha8Rng::seed_from_u64(1000 * si as u64 + seed);
                let x = gaussian_cloud(40, 2, 0.0, &mut rng);
                let y = gaussian_cloud(40, 2, sep, &mut rng);
                let pooled = x.concat(&y).unwrap();
                let spec =
                    KernelSpec::gaussian_resolved(BandwidthRule::MeanSqDistHalf, &pooled).unwrap();
                vals.push(jrd_exact(&x, &y, &spec, alpha).unwrap().value);
            }
            vals.sort_unstable_by(f64::total_cmp);
            medians.push(0.5 * (vals[24] + vals[25]));
        }
        for w in medians.windows(2) {
            assert!(
                w[1] >= w[0] - 1e-12,
                "median divergence not nondecreasing: {medians:?}"
            );
        }
    }
}
