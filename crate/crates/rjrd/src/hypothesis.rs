//! Permutation two-sample tests with the divergence (or MMD) as the
//! statistic, synthetic Gaussian experiment generators, and rejection-rate
//! sweeps over shift/scale grids.
//!
//! The permutation scheme never reorders rows: the pooled Gram matrix (or
//! pooled feature matrix) is built once with the bandwidth resolved on the
//! pooled sample, and each permutation only shuffles the membership labels.
//! All statistics requested for a test share the same permutations and the
//! same per-permutation spectra, so adding an extra α costs a few power
//! sums, not another eigendecomposition.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::jrd::{finalize, jrd_from_block_spectra, jrd_upper_bound, EstimatorMethod, RffRoute};
use crate::kernel::{eval_kernel, gram_matrix, BandwidthRule, GramMatrix, KernelSpec};
use crate::rff::{feature_map, sample_rff};
use crate::sample::SampleSet;
use crate::spectral::{entropy_alpha, spectrum, Alpha, Spectrum};

/// How a divergence test statistic is evaluated per permutation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum JrdStatMethod {
    /// Spectrum of the indicator-masked Gram matrix (Hadamard product),
    /// one full eigendecomposition per permutation.
    Exact,
    /// Block-spectrum union from the two label-group principal
    /// submatrices. Numerically identical to `Exact` and cheaper.
    Block,
    /// Random-feature approximation with the given feature count.
    Rff { features: usize },
}

/// Test statistic for the permutation test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    Jrd { alpha: Alpha, method: JrdStatMethod },
    MmdBiased,
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Jrd { alpha, method } => match method {
                JrdStatMethod::Exact => write!(f, "jrd(alpha={alpha}, exact)"),
                JrdStatMethod::Block => write!(f, "jrd(alpha={alpha})"),
                JrdStatMethod::Rff { features } => {
                    write!(f, "jrd(alpha={alpha}, rff={features})")
                }
            },
            Statistic::MmdBiased => write!(f, "mmd"),
        }
    }
}

/// Permutation-test configuration.
#[derive(Debug, Clone)]
pub struct TestConfig {
    pub statistic: Statistic,
    /// Number of label permutations B.
    pub permutations: usize,
    /// Significance level τ.
    pub tau: f64,
    pub seed: u64,
    /// Bandwidth rule, resolved once on the pooled sample.
    pub bandwidth_rule: BandwidthRule,
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if self.permutations < 1 {
            return Err(Error::InvalidParameter {
                name: "permutations",
                reason: "at least one permutation is required".into(),
            });
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                reason: format!("significance level must lie in (0,1), got {}", self.tau),
            });
        }
        Ok(())
    }
}

/// Outcome of one permutation test.
#[derive(Debug, Clone)]
pub struct TestResult {
    pub observed: f64,
    pub null_stats: Vec<f64>,
    /// Add-one permutation p-value `(1 + #{null ≥ observed}) / (B + 1)`,
    /// never zero.
    pub p_value: f64,
    pub reject: bool,
}

fn add_one_p_value(observed: f64, null_stats: &[f64]) -> f64 {
    let ge = null_stats.iter().filter(|&&s| s >= observed).count();
    (1 + ge) as f64 / (null_stats.len() + 1) as f64
}

/// Draws two samples from unit-variance Gaussians whose means are the given
/// Euclidean distance apart (along the first coordinate axis).
pub fn gen_mean_shift(
    n: usize,
    d: usize,
    distance: f64,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    if !(distance.is_finite() && distance >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "distance",
            reason: format!("mean separation must be nonnegative, got {distance}"),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array2::from_shape_fn((n, d), |(_, j)| {
        let v: f64 = rng.sample(StandardNormal);
        if j == 0 {
            v + distance
        } else {
            v
        }
    });
    Ok((SampleSet::new(x)?, SampleSet::new(y)?))
}

/// Draws two zero-mean Gaussian samples with covariances I and σ²I.
pub fn gen_variance_shift(
    n: usize,
    d: usize,
    sigma2: f64,
    seed: u64,
) -> Result<(SampleSet, SampleSet)> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("variance must be positive, got {sigma2}"),
        });
    }
    let sigma = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array2::from_shape_fn((n, d), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array2::from_shape_fn((n, d), |_| {
        let v: f64 = rng.sample(StandardNormal);
        v * sigma
    });
    Ok((SampleSet::new(x)?, SampleSet::new(y)?))
}

/// Biased (V-statistic) squared MMD:
/// `mean(K_XX) + mean(K_YY) - 2·mean(K_XY)`, clamped at zero.
///
/// The three block means are accumulated in the same order, so `Y = X`
/// yields exactly zero.
pub fn mmd_biased(x: &SampleSet, y: &SampleSet, spec: &KernelSpec) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            context: "mmd samples",
            left: x.dim(),
            right: y.dim(),
        });
    }
    let block_mean = |a: &SampleSet, b: &SampleSet| -> Result<f64> {
        let mut total = 0.0;
        for i in 0..a.n() {
            for j in 0..b.n() {
                total += eval_kernel(a.row(i), b.row(j), spec)?;
            }
        }
        Ok(total / (a.n() * b.n()) as f64)
    };
    let kxx = block_mean(x, x)?;
    let kyy = block_mean(y, y)?;
    let kxy = block_mean(x, y)?;
    Ok((kxx + kyy - 2.0 * kxy).max(0.0))
}

/// Random-feature state shared across permutations for one feature count.
struct RffCtx {
    features: usize,
    route: RffRoute,
    phi: Array2<f64>,
    /// Full D×D covariance (covariance route only).
    cov_all: Option<Array2<f64>>,
    /// Pooled approximate Gram (gram route only).
    gram: Option<Array2<f64>>,
    /// Mixture spectrum of the pooled features over N+M, raw mass.
    mix: Spectrum,
}

/// Everything the permutation loop reads but never writes.
struct Engine {
    n0: usize,
    n1: usize,
    total: usize,
    statistics: Vec<Statistic>,
    needs_block: bool,
    needs_hadamard: bool,
    needs_mmd: bool,
    k: Option<GramMatrix>,
    spec_z: Option<Spectrum>,
    rff: BTreeMap<usize, RffCtx>,
}

impl Engine {
    fn build(
        x: &SampleSet,
        y: &SampleSet,
        statistics: &[Statistic],
        seed: u64,
        bandwidth_rule: BandwidthRule,
    ) -> Result<Self> {
        if statistics.is_empty() {
            return Err(Error::InvalidParameter {
                name: "statistics",
                reason: "at least one statistic is required".into(),
            });
        }
        let pooled = x.concat(y)?;
        let spec = KernelSpec::gaussian_resolved(bandwidth_rule, &pooled)?;

        let needs_block = statistics.iter().any(|s| {
            matches!(
                s,
                Statistic::Jrd {
                    method: JrdStatMethod::Block,
                    ..
                }
            )
        });
        let needs_hadamard = statistics.iter().any(|s| {
            matches!(
                s,
                Statistic::Jrd {
                    method: JrdStatMethod::Exact,
                    ..
                }
            )
        });
        let needs_mmd = statistics.iter().any(|s| matches!(s, Statistic::MmdBiased));
        let needs_gram = needs_block || needs_hadamard || needs_mmd;

        let k = if needs_gram {
            Some(gram_matrix(&pooled, &spec)?)
        } else {
            None
        };
        let spec_z = if needs_block || needs_hadamard {
            Some(spectrum(k.as_ref().expect("gram built"))?)
        } else {
            None
        };

        let total = pooled.n();
        let mut rff = BTreeMap::new();
        for s in statistics {
            if let Statistic::Jrd {
                method: JrdStatMethod::Rff { features },
                ..
            } = s
            {
                if rff.contains_key(features) {
                    continue;
                }
                let map = sample_rff(
                    pooled.dim(),
                    *features,
                    spec.sigma(),
                    derive_seed(seed, &[0x5246_4600, *features as u64]),
                )?;
                let phi = feature_map(&map, &pooled)?;
                let scale = 1.0 / total as f64;
                let ctx = if total > 2 * features {
                    let cov_all = phi.t().dot(&phi);
                    let vals = crate::linalg::sym_eigenvalues(cov_all.view())?;
                    let mix =
                        Spectrum::clamped(vals.iter().map(|v| v * scale).collect(), total);
                    RffCtx {
                        features: *features,
                        route: RffRoute::Covariance,
                        phi,
                        cov_all: Some(cov_all),
                        gram: None,
                        mix,
                    }
                } else {
                    let gram = phi.dot(&phi.t());
                    let vals = crate::linalg::sym_eigenvalues(gram.view())?;
                    let mix =
                        Spectrum::clamped(vals.iter().map(|v| v * scale).collect(), total);
                    RffCtx {
                        features: *features,
                        route: RffRoute::Gram,
                        phi,
                        cov_all: None,
                        gram: Some(gram),
                        mix,
                    }
                };
                rff.insert(*features, ctx);
            }
        }

        Ok(Engine {
            n0: x.n(),
            n1: y.n(),
            total,
            statistics: statistics.to_vec(),
            needs_block,
            needs_hadamard,
            needs_mmd,
            k,
            spec_z,
            rff,
        })
    }

    /// Evaluates every statistic for one label assignment. Group sizes are
    /// invariant under label shuffles, so entropy constants cache outside.
    fn evaluate(&self, labels: &[i64]) -> Result<Vec<f64>> {
        let idx0: Vec<usize> = (0..self.total).filter(|&i| labels[i] == 0).collect();
        let idx1: Vec<usize> = (0..self.total).filter(|&i| labels[i] == 1).collect();
        debug_assert_eq!(idx0.len(), self.n0);
        debug_assert_eq!(idx1.len(), self.n1);

        let block_specs: Option<(Spectrum, Spectrum)> = if self.needs_block {
            let k = self.k.as_ref().expect("gram built");
            Some((
                spectrum(&k.principal_submatrix(&idx0)?)?,
                spectrum(&k.principal_submatrix(&idx1)?)?,
            ))
        } else {
            None
        };

        let hadamard_spec: Option<Spectrum> = if self.needs_hadamard {
            let k = self.k.as_ref().expect("gram built");
            let mut masked = k.entries().to_owned();
            for i in 0..self.total {
                for j in 0..self.total {
                    if labels[i] != labels[j] {
                        masked[[i, j]] = 0.0;
                    }
                }
            }
            Some(spectrum(&GramMatrix::from_entries_unchecked(masked))?)
        } else {
            None
        };

        // Union spectrum of the two label groups per feature count.
        let mut rff_joint: BTreeMap<usize, Spectrum> = BTreeMap::new();
        for (features, ctx) in &self.rff {
            let scale = 1.0 / self.total as f64;
            let joint = match ctx.route {
                RffRoute::Covariance => {
                    let phi0 = ctx.phi.select(ndarray::Axis(0), &idx0);
                    let c0 = phi0.t().dot(&phi0);
                    let c1 = ctx.cov_all.as_ref().expect("covariance route") - &c0;
                    let v0 = crate::linalg::sym_eigenvalues(c0.view())?;
                    let v1 = crate::linalg::sym_eigenvalues(c1.view())?;
                    Spectrum::clamped(
                        v0.iter().chain(v1.iter()).map(|v| v * scale).collect(),
                        self.total,
                    )
                }
                RffRoute::Gram => {
                    let g = ctx.gram.as_ref().expect("gram route");
                    let sub = |idx: &[usize]| -> Array2<f64> {
                        let k = idx.len();
                        Array2::from_shape_fn((k, k), |(a, b)| g[[idx[a], idx[b]]])
                    };
                    let v0 = crate::linalg::sym_eigenvalues(sub(&idx0).view())?;
                    let v1 = crate::linalg::sym_eigenvalues(sub(&idx1).view())?;
                    Spectrum::clamped(
                        v0.iter().chain(v1.iter()).map(|v| v * scale).collect(),
                        self.total,
                    )
                }
            };
            rff_joint.insert(*features, joint);
        }

        let mmd = if self.needs_mmd {
            let k = self.k.as_ref().expect("gram built");
            let e = k.entries();
            let (mut s00, mut s11, mut s01) = (0.0, 0.0, 0.0);
            for i in 0..self.total {
                for j in 0..self.total {
                    let v = e[[i, j]];
                    match (labels[i], labels[j]) {
                        (0, 0) => s00 += v,
                        (1, 1) => s11 += v,
                        _ => s01 += v,
                    }
                }
            }
            let n0 = self.n0 as f64;
            let n1 = self.n1 as f64;
            Some((s00 / (n0 * n0) + s11 / (n1 * n1) - s01 / (n0 * n1)).max(0.0))
        } else {
            None
        };

        self.statistics
            .iter()
            .map(|stat| -> Result<f64> {
                match stat {
                    Statistic::MmdBiased => Ok(mmd.expect("mmd computed")),
                    Statistic::Jrd { alpha, method } => {
                        let value = match method {
                            JrdStatMethod::Block => {
                                let (s0, s1) = block_specs.as_ref().expect("block spectra");
                                jrd_from_block_spectra(
                                    self.spec_z.as_ref().expect("mixture spectrum"),
                                    s0,
                                    s1,
                                    self.n0,
                                    self.n1,
                                    *alpha,
                                )?
                                .value
                            }
                            JrdStatMethod::Exact => {
                                let s_mix = entropy_alpha(
                                    self.spec_z.as_ref().expect("mixture spectrum"),
                                    *alpha,
                                )?;
                                let s_joint = entropy_alpha(
                                    hadamard_spec.as_ref().expect("hadamard spectrum"),
                                    *alpha,
                                )?;
                                let raw = s_mix + jrd_upper_bound(self.n0, self.n1, *alpha)
                                    - s_joint;
                                finalize(
                                    raw,
                                    self.n0,
                                    self.n1,
                                    *alpha,
                                    EstimatorMethod::ExactMi,
                                    None,
                                )
                                .value
                            }
                            JrdStatMethod::Rff { features } => {
                                let ctx = &self.rff[features];
                                let joint = &rff_joint[features];
                                let s_mix = entropy_alpha(&ctx.mix, *alpha)?;
                                let s_joint = entropy_alpha(joint, *alpha)?;
                                let raw = s_mix + jrd_upper_bound(self.n0, self.n1, *alpha)
                                    - s_joint;
                                finalize(
                                    raw,
                                    self.n0,
                                    self.n1,
                                    *alpha,
                                    EstimatorMethod::Rff {
                                        features: ctx.features,
                                        route: ctx.route,
                                    },
                                    None,
                                )
                                .value
                            }
                        };
                        Ok(value)
                    }
                }
            })
            .collect()
    }
}

/// Runs one permutation test per statistic, sharing the pooled kernel
/// matrix, the permutations, and the per-permutation spectra across all of
/// them. The b-th permutation draws its labels from an RNG stream derived
/// from `seed` and `b`, so results are independent of evaluation order.
pub fn permutation_test_multi(
    x: &SampleSet,
    y: &SampleSet,
    statistics: &[Statistic],
    permutations: usize,
    tau: f64,
    seed: u64,
    bandwidth_rule: BandwidthRule,
) -> Result<Vec<TestResult>> {
    if permutations < 1 {
        return Err(Error::InvalidParameter {
            name: "permutations",
            reason: "at least one permutation is required".into(),
        });
    }
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("significance level must lie in (0,1), got {tau}"),
        });
    }

    let engine = Engine::build(x, y, statistics, seed, bandwidth_rule)?;
    let labels0: Vec<i64> = std::iter::repeat(0)
        .take(x.n())
        .chain(std::iter::repeat(1).take(y.n()))
        .collect();

    let observed = engine.evaluate(&labels0)?;

    let null_matrix: Vec<Vec<f64>> = (0..permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut labels = labels0.clone();
            labels.shuffle(&mut rng);
            engine.evaluate(&labels)
        })
        .collect::<Result<_>>()?;

    Ok(statistics
        .iter()
        .enumerate()
        .map(|(si, _)| {
            let null_stats: Vec<f64> = null_matrix.iter().map(|row| row[si]).collect();
            let p_value = add_one_p_value(observed[si], &null_stats);
            TestResult {
                observed: observed[si],
                null_stats,
                p_value,
                reject: p_value <= tau,
            }
        })
        .collect())
}

/// Permutation two-sample test with a single statistic.
pub fn permutation_test(x: &SampleSet, y: &SampleSet, cfg: &TestConfig) -> Result<TestResult> {
    cfg.validate()?;
    let mut results = permutation_test_multi(
        x,
        y,
        std::slice::from_ref(&cfg.statistic),
        cfg.permutations,
        cfg.tau,
        cfg.seed,
        cfg.bandwidth_rule,
    )?;
    Ok(results.pop().expect("one statistic in, one result out"))
}

/// Distribution-shift family for the synthetic sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftFamily {
    /// Unit-variance Gaussians with means a grid distance apart.
    MeanShift,
    /// Zero-mean Gaussians with variance ratio given by the grid.
    VarianceShift,
}

/// Grid experiment: for each dimension and statistic, the rejection rate at
/// every grid point, averaged over trials.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub family: ShiftFamily,
    pub dims: Vec<usize>,
    pub grid: Vec<f64>,
    /// Per-sample size (N = M).
    pub sample_size: usize,
    pub trials: usize,
    pub alphas: Vec<Alpha>,
    pub include_mmd: bool,
}

impl SweepSpec {
    /// The 20-point logarithmic grids used by the shipped experiments:
    /// mean separations in [0.05, 50], variance ratios in [10^0.01, 10].
    pub fn default_grid(family: ShiftFamily) -> Vec<f64> {
        let (lo, hi) = match family {
            ShiftFamily::MeanShift => (0.05_f64.ln(), 50.0_f64.ln()),
            ShiftFamily::VarianceShift => (0.01 * 10.0_f64.ln(), 10.0_f64.ln()),
        };
        (0..20)
            .map(|i| (lo + (hi - lo) * i as f64 / 19.0).exp())
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() || self.dims.iter().any(|&d| d == 0) {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: "dimensions must be nonempty and positive".into(),
            });
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidParameter {
                name: "grid",
                reason: "grid must be nonempty".into(),
            });
        }
        for &g in &self.grid {
            let ok = match self.family {
                ShiftFamily::MeanShift => g.is_finite() && g >= 0.0,
                ShiftFamily::VarianceShift => g.is_finite() && g > 0.0,
            };
            if !ok {
                return Err(Error::InvalidParameter {
                    name: "grid",
                    reason: format!("grid value {g} invalid for {:?}", self.family),
                });
            }
        }
        if self.sample_size < 2 {
            return Err(Error::InvalidParameter {
                name: "sample_size",
                reason: "need at least two points per sample".into(),
            });
        }
        if self.alphas.is_empty() && !self.include_mmd {
            return Err(Error::InvalidParameter {
                name: "alphas",
                reason: "sweep needs at least one statistic".into(),
            });
        }
        Ok(())
    }
}

/// One (dimension, statistic) row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepCell {
    pub dim: usize,
    pub statistic: Statistic,
    /// Rejection rate at each grid point, averaged over trials.
    pub per_point: Vec<f64>,
    /// Mean rejection rate over the whole grid.
    pub mean_rejection: f64,
}

/// Sweep output table.
#[derive(Debug, Clone)]
pub struct RejectionTable {
    pub family: ShiftFamily,
    pub grid: Vec<f64>,
    pub cells: Vec<SweepCell>,
}

/// Runs the full rejection-rate sweep. The α list (plus optional MMD) comes
/// from the sweep spec; permutation count, significance level, bandwidth
/// rule, and the divergence evaluation method come from `cfg`. Each
/// (dimension, grid point, trial) generates one sample pair tested by every
/// statistic, with a seed derived from the indices, so the table is
/// reproducible and trials may run in parallel.
pub fn rejection_sweep(sweep: &SweepSpec, cfg: &TestConfig) -> Result<RejectionTable> {
    sweep.validate()?;
    cfg.validate()?;

    let method = match cfg.statistic {
        Statistic::Jrd { method, .. } => method,
        Statistic::MmdBiased => JrdStatMethod::Block,
    };
    let mut statistics: Vec<Statistic> = sweep
        .alphas
        .iter()
        .map(|&alpha| Statistic::Jrd { alpha, method })
        .collect();
    if sweep.include_mmd {
        statistics.push(Statistic::MmdBiased);
    }

    if sweep.trials == 0 {
        return Ok(RejectionTable {
            family: sweep.family,
            grid: sweep.grid.clone(),
            cells: Vec::new(),
        });
    }

    let jobs: Vec<(usize, usize, usize)> = (0..sweep.dims.len())
        .flat_map(|di| {
            (0..sweep.grid.len())
                .flat_map(move |gi| (0..sweep.trials).map(move |t| (di, gi, t)))
        })
        .collect();

    let rejects: Vec<Vec<bool>> = jobs
        .par_iter()
        .map(|&(di, gi, trial)| -> Result<Vec<bool>> {
            let d = sweep.dims[di];
            let g = sweep.grid[gi];
            let pair_seed = derive_seed(cfg.seed, &[di as u64, gi as u64, trial as u64]);
            let (x, y) = match sweep.family {
                ShiftFamily::MeanShift => gen_mean_shift(sweep.sample_size, d, g, pair_seed)?,
                ShiftFamily::VarianceShift => {
                    gen_variance_shift(sweep.sample_size, d, g, pair_seed)?
                }
            };
            let results = permutation_test_multi(
                &x,
                &y,
                &statistics,
                cfg.permutations,
                cfg.tau,
                derive_seed(pair_seed, &[0x7065_726d]),
                cfg.bandwidth_rule,
            )?;
            Ok(results.iter().map(|r| r.reject).collect())
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (di, &dim) in sweep.dims.iter().enumerate() {
        for (si, &statistic) in statistics.iter().enumerate() {
            let mut per_point = Vec::with_capacity(sweep.grid.len());
            for gi in 0..sweep.grid.len() {
                let mut hits = 0usize;
                for (job_idx, &(jdi, jgi, _)) in jobs.iter().enumerate() {
                    if jdi == di && jgi == gi && rejects[job_idx][si] {
                        hits += 1;
                    }
                }
                per_point.push(hits as f64 / sweep.trials as f64);
            }
            let mean_rejection = per_point.iter().sum::<f64>() / per_point.len() as f64;
            cells.push(SweepCell {
                dim,
                statistic,
                per_point,
                mean_rejection,
            });
        }
    }

    Ok(RejectionTable {
        family: sweep.family,
        grid: sweep.grid.clone(),
        cells,
    })
}
