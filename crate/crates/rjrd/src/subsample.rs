//! Majority-class subset selection: pick M rows of a sample whose
//! divergence to the full sample is as small as possible, so a balanced
//! dataset keeps the majority class's structure.
//!
//! The objective is a set function with no known exact polynomial-time
//! minimizer, so the default search grows the subset greedily (each step
//! adds the candidate minimizing the divergence of the grown subset) and
//! then refines with best-improvement single swaps.
//!
//! Scoring a candidate needs the spectrum of the mixture of `subset ∪ full`.
//! In the eigenbasis of the full-sample Gram matrix that mixture is a
//! diagonal matrix plus one rank-one term per subset member, so within a
//! greedy step — where all candidates share the current subset — each
//! candidate costs one exact rank-one secular update instead of a fresh
//! eigendecomposition. Every step re-anchors on a full eigendecomposition,
//! so no error accumulates across steps.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::jrd::{finalize, jrd_exact, jrd_upper_bound, EstimatorMethod};
use crate::kernel::{gram_matrix, GramMatrix, KernelSpec};
use crate::linalg::{rank_one_update_eigenvalues, sym_eigen, sym_eigenvalues};
use crate::rff::{feature_map, jrd_rff, sample_rff};
use crate::sample::SampleSet;
use crate::spectral::{entropy_alpha, Alpha, Spectrum};

/// Search strategy for the subset minimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionStrategy {
    /// Greedy growth only.
    GreedyForward,
    /// Greedy growth followed by best-improvement single swaps; additional
    /// restarts repeat the swap refinement from seeded random subsets and
    /// keep the best result.
    GreedySwap { restarts: usize },
    /// Best of k uniformly random subsets.
    RandomBest(usize),
}

/// How subset divergences are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Exact,
    Rff { features: usize },
}

/// Subset-selection configuration. `target_size` is the desired subset
/// size, typically the minority-class count.
#[derive(Debug, Clone)]
pub struct SubsampleConfig {
    pub target_size: usize,
    pub alpha: Alpha,
    pub strategy: SelectionStrategy,
    pub mode: EvalMode,
    pub seed: u64,
    pub max_swap_rounds: usize,
}

impl SubsampleConfig {
    pub fn new(target_size: usize) -> Self {
        Self {
            target_size,
            alpha: Alpha::new(1.01).expect("1.01 is a valid order"),
            strategy: SelectionStrategy::GreedySwap { restarts: 1 },
            mode: EvalMode::Exact,
            seed: 0,
            max_swap_rounds: 32,
        }
    }
}

/// Selected indices with the divergence they achieve.
#[derive(Debug, Clone)]
pub struct SubsampleResult {
    /// Distinct indices into the majority sample, ascending.
    pub indices: Vec<usize>,
    /// Divergence of the selected subset to the full sample, evaluated
    /// through [`evaluate_subset`].
    pub final_divergence: f64,
    /// Divergence after each improvement step (greedy additions, then
    /// swaps). Nonincreasing after the forward phase.
    pub trajectory: Vec<f64>,
    /// How many leading trajectory entries belong to the forward phase.
    pub forward_steps: usize,
}

/// Divergence of `X₊[indices]` to the whole of `X₊`, by the exact
/// mixture estimator or the random-feature estimator. The `seed` feeds the
/// feature map in Rff mode and is ignored otherwise.
pub fn evaluate_subset(
    subset_indices: &[usize],
    x_plus: &SampleSet,
    spec: &KernelSpec,
    alpha: Alpha,
    mode: EvalMode,
    seed: u64,
) -> Result<f64> {
    check_subset(subset_indices, x_plus.n())?;
    let subset = x_plus.subset(subset_indices)?;
    match mode {
        EvalMode::Exact => Ok(jrd_exact(&subset, x_plus, spec, alpha)?.value),
        EvalMode::Rff { features } => {
            let map = sample_rff(
                x_plus.dim(),
                features,
                spec.sigma(),
                derive_seed(seed, &[0x5355_4253]),
            )?;
            Ok(jrd_rff(&subset, x_plus, &map, alpha)?.value)
        }
    }
}

fn check_subset(indices: &[usize], n: usize) -> Result<()> {
    if indices.is_empty() {
        return Err(Error::InvalidInput("subset must be nonempty".into()));
    }
    let mut seen = vec![false; n];
    for &i in indices {
        if i >= n {
            return Err(Error::InvalidInput(format!(
                "subset index {i} out of range for {n} rows"
            )));
        }
        if seen[i] {
            return Err(Error::InvalidInput(format!("duplicate subset index {i}")));
        }
        seen[i] = true;
    }
    Ok(())
}

/// Shared spectral state for scoring many subsets of one sample.
///
/// `coords` holds one row per sample point in a coordinate system whose
/// inner products reproduce the (approximate) kernel:
/// the full-Gram eigenbasis rows `VΛ^{1/2}` in exact mode, the
/// random-feature rows in Rff mode. The mixture of `subset ∪ full` then has
/// the nonzero spectrum of `base + Σ_{i∈subset} coordsᵢ coordsᵢᵀ` with
/// `base` the full-sample operator, which is what makes rank-one candidate
/// scoring possible.
struct SubsetEvaluator {
    n_plus: usize,
    alpha: Alpha,
    coords: Array2<f64>,
    /// Exact mode: eigenvalues of the full Gram (ascending) — the diagonal
    /// base. Rff mode: none (the base is dense).
    base_diag: Option<Vec<f64>>,
    /// Rff mode: the D×D full-feature covariance.
    base_dense: Option<Array2<f64>>,
    /// Raw eigenvalues of the full-sample block (K₊ or C₊), for the
    /// block-diagonal joint term.
    full_block_eigs: Vec<f64>,
    /// Exact mode: the full Gram matrix, for small-block spectra.
    k_plus: Option<GramMatrix>,
}

impl SubsetEvaluator {
    fn new(x_plus: &SampleSet, spec: &KernelSpec, alpha: Alpha, mode: EvalMode, seed: u64) -> Result<Self> {
        match mode {
            EvalMode::Exact => {
                let k_plus = gram_matrix(x_plus, spec)?;
                let (lam, v) = sym_eigen(k_plus.entries())?;
                let n = x_plus.n();
                // R = V Λ^{1/2} with negatives clamped; rows are point coordinates
                let mut coords = v;
                for (j, &l) in lam.iter().enumerate() {
                    let s = l.max(0.0).sqrt();
                    coords.column_mut(j).mapv_inplace(|x| x * s);
                }
                Ok(Self {
                    n_plus: n,
                    alpha,
                    coords,
                    base_diag: Some(lam.clone()),
                    base_dense: None,
                    full_block_eigs: lam,
                    k_plus: Some(k_plus),
                })
            }
            EvalMode::Rff { features } => {
                let map = sample_rff(
                    x_plus.dim(),
                    features,
                    spec.sigma(),
                    derive_seed(seed, &[0x5355_4253]),
                )?;
                let phi = feature_map(&map, x_plus)?;
                let cov = phi.t().dot(&phi);
                let eigs = sym_eigenvalues(cov.view())?;
                Ok(Self {
                    n_plus: x_plus.n(),
                    alpha,
                    coords: phi,
                    base_diag: None,
                    base_dense: Some(cov),
                    full_block_eigs: eigs,
                    k_plus: None,
                })
            }
        }
    }

    fn dim(&self) -> usize {
        self.coords.ncols()
    }

    /// `base + Σ_{i∈subset} coordsᵢ coordsᵢᵀ`.
    fn base_matrix(&self, subset: &[usize]) -> Array2<f64> {
        let k = self.dim();
        let mut m = match (&self.base_diag, &self.base_dense) {
            (Some(diag), _) => {
                let mut m = Array2::zeros((k, k));
                for (j, &d) in diag.iter().enumerate() {
                    m[[j, j]] = d;
                }
                m
            }
            (None, Some(dense)) => dense.clone(),
            _ => unreachable!("one base representation is always present"),
        };
        if !subset.is_empty() {
            let rows = self.coords.select(Axis(0), subset);
            m += &rows.t().dot(&rows);
        }
        m
    }

    /// Eigenvalues of the small `subset × subset` kernel block.
    fn small_block_eigs(&self, subset: &[usize]) -> Result<Vec<f64>> {
        let m = subset.len();
        let block = match &self.k_plus {
            Some(k) => {
                let mut b = Array2::zeros((m, m));
                for (a, &i) in subset.iter().enumerate() {
                    for (c, &j) in subset.iter().enumerate() {
                        b[[a, c]] = k.get(i, j);
                    }
                }
                b
            }
            None => {
                let rows = self.coords.select(Axis(0), subset);
                rows.dot(&rows.t())
            }
        };
        sym_eigenvalues(block.view())
    }

    /// Assembles the divergence from raw mixture and small-block
    /// eigenvalues (unscaled; normalization by N+m happens here).
    fn value_from_parts(&self, m: usize, mixture_eigs: &[f64], small_eigs: &[f64]) -> Result<f64> {
        let total = m + self.n_plus;
        let scale = 1.0 / total as f64;
        let mix = Spectrum::clamped(mixture_eigs.iter().map(|v| v * scale).collect(), total);
        let joint = Spectrum::clamped(
            small_eigs
                .iter()
                .chain(self.full_block_eigs.iter())
                .map(|v| v * scale)
                .collect(),
            total,
        );
        let s_mix = entropy_alpha(&mix, self.alpha)?;
        let s_joint = entropy_alpha(&joint, self.alpha)?;
        let raw = s_mix + jrd_upper_bound(m, self.n_plus, self.alpha) - s_joint;
        Ok(finalize(
            raw,
            m,
            self.n_plus,
            self.alpha,
            EstimatorMethod::BlockSpectra,
            None,
        )
        .value)
    }

    /// Full-precision evaluation of one subset.
    fn evaluate(&self, subset: &[usize]) -> Result<f64> {
        check_subset(subset, self.n_plus)?;
        let mixture = sym_eigenvalues(self.base_matrix(subset).view())?;
        let small = self.small_block_eigs(subset)?;
        self.value_from_parts(subset.len(), &mixture, &small)
    }

    /// Scores `current ∪ {c}` for every candidate `c`, one rank-one secular
    /// update each against a fresh eigendecomposition of the shared base.
    fn step_scores(&self, current: &[usize], candidates: &[usize]) -> Result<Vec<f64>> {
        let m_next = current.len() + 1;
        // (theta, projected coords): the base in its own eigenbasis
        let (theta, projected) = if current.is_empty() && self.base_diag.is_some() {
            (self.base_diag.clone().unwrap(), self.coords.clone())
        } else {
            let (theta, u) = sym_eigen(self.base_matrix(current).view())?;
            (theta, self.coords.dot(&u))
        };

        candidates
            .par_iter()
            .map(|&c| -> Result<f64> {
                let w: Vec<f64> = projected.row(c).to_vec();
                let mixture = rank_one_update_eigenvalues(&theta, &w);
                let mut grown = current.to_vec();
                grown.push(c);
                let small = self.small_block_eigs(&grown)?;
                self.value_from_parts(m_next, &mixture, &small)
            })
            .collect()
    }

    /// Greedy forward growth to `target` elements. Ties break to the
    /// lowest candidate index.
    fn greedy_forward(&self, target: usize, trajectory: &mut Vec<f64>) -> Result<Vec<usize>> {
        let mut chosen: Vec<usize> = Vec::with_capacity(target);
        let mut in_set = vec![false; self.n_plus];
        for _ in 0..target {
            let candidates: Vec<usize> = (0..self.n_plus).filter(|&i| !in_set[i]).collect();
            let scores = self.step_scores(&chosen, &candidates)?;
            let mut best = 0;
            for (i, &s) in scores.iter().enumerate() {
                if s < scores[best] {
                    best = i;
                }
            }
            chosen.push(candidates[best]);
            chosen.sort_unstable();
            in_set[candidates[best]] = true;
            trajectory.push(scores[best]);
        }
        Ok(chosen)
    }

    /// Best-improvement single swaps until no swap improves by more than
    /// 1e-9 or the round budget runs out.
    fn swap_refine(
        &self,
        subset: &mut Vec<usize>,
        max_rounds: usize,
        trajectory: &mut Vec<f64>,
    ) -> Result<f64> {
        const MIN_IMPROVEMENT: f64 = 1e-9;
        let mut current = self.evaluate(subset)?;
        for _ in 0..max_rounds {
            let mut best: Option<(usize, usize, f64)> = None;
            let outside: Vec<usize> = (0..self.n_plus)
                .filter(|i| !subset.contains(i))
                .collect();
            for pos in 0..subset.len() {
                let mut reduced = subset.clone();
                reduced.remove(pos);
                let (theta, u) = sym_eigen(self.base_matrix(&reduced).view())?;
                let projected = self.coords.dot(&u);
                let scores: Vec<f64> = outside
                    .par_iter()
                    .map(|&j| -> Result<f64> {
                        let w: Vec<f64> = projected.row(j).to_vec();
                        let mixture = rank_one_update_eigenvalues(&theta, &w);
                        let mut swapped = reduced.clone();
                        swapped.push(j);
                        let small = self.small_block_eigs(&swapped)?;
                        self.value_from_parts(subset.len(), &mixture, &small)
                    })
                    .collect::<Result<_>>()?;
                for (oi, &j) in outside.iter().enumerate() {
                    let better_than_best = match best {
                        None => true,
                        Some((_, _, v)) => scores[oi] < v,
                    };
                    if better_than_best {
                        best = Some((pos, j, scores[oi]));
                    }
                }
            }
            match best {
                Some((pos, j, v)) if v < current - MIN_IMPROVEMENT => {
                    subset[pos] = j;
                    subset.sort_unstable();
                    current = self.evaluate(subset)?;
                    trajectory.push(current);
                }
                _ => break,
            }
        }
        Ok(current)
    }
}

/// Minimizes the divergence of an M-element subset of `x_plus` to the whole
/// sample. The kernel bandwidth is the median pairwise distance of
/// `x_plus`. Deterministic given `(x_plus, cfg.seed)`.
pub fn select_subset(x_plus: &SampleSet, cfg: &SubsampleConfig) -> Result<SubsampleResult> {
    let n = x_plus.n();
    let m = cfg.target_size;
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "target_size",
            reason: "subset size must be at least 1".into(),
        });
    }
    if m > n {
        return Err(Error::InvalidInput(format!(
            "target size {m} exceeds sample size {n}"
        )));
    }
    let spec =
        KernelSpec::gaussian_resolved(crate::kernel::BandwidthRule::MedianPairwise, x_plus)?;
    let evaluator = SubsetEvaluator::new(x_plus, &spec, cfg.alpha, cfg.mode, cfg.seed)?;

    let finalize_result =
        |indices: Vec<usize>, trajectory: Vec<f64>, forward_steps: usize| -> Result<SubsampleResult> {
            let final_divergence =
                evaluate_subset(&indices, x_plus, &spec, cfg.alpha, cfg.mode, cfg.seed)?;
            Ok(SubsampleResult {
                indices,
                final_divergence,
                trajectory,
                forward_steps,
            })
        };

    if m == n {
        let indices: Vec<usize> = (0..n).collect();
        return finalize_result(indices, Vec::new(), 0);
    }

    match cfg.strategy {
        SelectionStrategy::GreedyForward => {
            let mut trajectory = Vec::new();
            let chosen = evaluator.greedy_forward(m, &mut trajectory)?;
            let forward_steps = trajectory.len();
            finalize_result(chosen, trajectory, forward_steps)
        }
        SelectionStrategy::GreedySwap { restarts } => {
            if restarts == 0 {
                return Err(Error::InvalidParameter {
                    name: "restarts",
                    reason: "at least one restart is required".into(),
                });
            }
            let mut best: Option<(f64, Vec<usize>, Vec<f64>, usize)> = None;
            for r in 0..restarts {
                let mut trajectory = Vec::new();
                let (mut subset, forward_steps) = if r == 0 {
                    let s = evaluator.greedy_forward(m, &mut trajectory)?;
                    let steps = trajectory.len();
                    (s, steps)
                } else {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(r as u64);
                    let mut s: Vec<usize> =
                        rand::seq::index::sample(&mut rng, n, m).into_vec();
                    s.sort_unstable();
                    trajectory.push(evaluator.evaluate(&s)?);
                    (s, 0)
                };
                let value =
                    evaluator.swap_refine(&mut subset, cfg.max_swap_rounds, &mut trajectory)?;
                let is_better = match &best {
                    None => true,
                    Some((bv, ..)) => value < *bv - 1e-15,
                };
                if is_better {
                    best = Some((value, subset, trajectory, forward_steps));
                }
            }
            let (_, indices, trajectory, forward_steps) = best.expect("restarts >= 1");
            finalize_result(indices, trajectory, forward_steps)
        }
        SelectionStrategy::RandomBest(k) => {
            if k == 0 {
                return Err(Error::InvalidParameter {
                    name: "k",
                    reason: "RandomBest needs at least one draw".into(),
                });
            }
            let draws: Vec<Vec<usize>> = (0..k)
                .map(|i| {
                    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                    rng.set_stream(i as u64);
                    let mut s: Vec<usize> =
                        rand::seq::index::sample(&mut rng, n, m).into_vec();
                    s.sort_unstable();
                    s
                })
                .collect();
            let values: Vec<f64> = draws
                .par_iter()
                .map(|s| evaluator.evaluate(s))
                .collect::<Result<_>>()?;
            let mut best_idx = 0;
            let mut trajectory = vec![values[0]];
            for (i, &v) in values.iter().enumerate().skip(1) {
                if v < values[best_idx] {
                    best_idx = i;
                    trajectory.push(v);
                }
            }
            finalize_result(draws[best_idx].clone(), trajectory, 0)
        }
    }
}

/// A balanced dataset produced by subsampling the majority class.
#[derive(Debug, Clone)]
pub struct BalanceOutcome {
    /// Minority rows plus selected majority rows, in original row order.
    pub data: SampleSet,
    /// Original row indices that were kept.
    pub kept_rows: Vec<usize>,
    pub majority_label: i64,
    pub minority_label: i64,
    /// Input was already balanced and is returned unchanged.
    pub already_balanced: bool,
    /// Selection details (`None` when already balanced).
    pub selection: Option<SubsampleResult>,
}

/// Balances a two-class labeled sample by keeping every minority row and a
/// selected subset of majority rows (of size `cfg.target_size`, normally
/// the minority count).
pub fn balance_dataset(x: &SampleSet, cfg: &SubsampleConfig) -> Result<BalanceOutcome> {
    let labels = x
        .labels()
        .ok_or_else(|| Error::InvalidInput("balance_dataset requires labeled data".into()))?;
    let mut values: Vec<i64> = labels.to_vec();
    values.sort_unstable();
    values.dedup();
    if values.len() != 2 {
        return Err(Error::InvalidInput(format!(
            "exactly two classes required, found {}",
            values.len()
        )));
    }
    let count = |v: i64| labels.iter().filter(|&&l| l == v).count();
    let (c0, c1) = (count(values[0]), count(values[1]));
    let (majority_label, minority_label) = if c0 > c1 {
        (values[0], values[1])
    } else if c1 > c0 {
        (values[1], values[0])
    } else {
        return Ok(BalanceOutcome {
            data: x.clone(),
            kept_rows: (0..x.n()).collect(),
            majority_label: values[1],
            minority_label: values[0],
            already_balanced: true,
            selection: None,
        });
    };

    let majority_rows: Vec<usize> = (0..x.n()).filter(|&i| labels[i] == majority_label).collect();
    let majority_set = x.subset(&majority_rows)?;
    let selection = select_subset(&majority_set, cfg)?;

    let keep_majority: Vec<usize> = selection.indices.iter().map(|&i| majority_rows[i]).collect();
    let mut kept_rows: Vec<usize> = (0..x.n())
        .filter(|&i| labels[i] == minority_label || keep_majority.contains(&i))
        .collect();
    kept_rows.sort_unstable();
    let data = x.subset(&kept_rows)?;

    Ok(BalanceOutcome {
        data,
        kept_rows,
        majority_label,
        minority_label,
        already_balanced: false,
        selection: Some(selection),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn cloud(n: usize, d: usize, seed: u64) -> SampleSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect();
        SampleSet::from_rows(&rows).unwrap()
    }

    fn median_spec(x: &SampleSet) -> KernelSpec {
        KernelSpec::gaussian_resolved(crate::kernel::BandwidthRule::MedianPairwise, x).unwrap()
    }

    #[test]
    fn full_subset_has_zero_divergence() {
        let x = cloud(25, 2, 1);
        let spec = median_spec(&x);
        let all: Vec<usize> = (0..25).collect();
        let alpha = Alpha::new(1.01).unwrap();
        let v = evaluate_subset(&all, &x, &spec, alpha, EvalMode::Exact, 0).unwrap();
        assert!(v <= 1e-8, "full-set divergence {v}");
    }

    #[test]
    fn subset_validation() {
        let x = cloud(10, 2, 2);
        let spec = median_spec(&x);
        let alpha = Alpha::new(1.01).unwrap();
        assert!(evaluate_subset(&[], &x, &spec, alpha, EvalMode::Exact, 0).is_err());
        assert!(evaluate_subset(&[11], &x, &spec, alpha, EvalMode::Exact, 0).is_err());
        assert!(evaluate_subset(&[3, 3], &x, &spec, alpha, EvalMode::Exact, 0).is_err());
    }

    #[test]
    fn medoid_beats_outlier_for_single_element_subsets() {
        // tight cluster plus one far outlier
        let mut rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![0.1 * (i % 4) as f64, 0.1 * (i / 4) as f64])
            .collect();
        rows.push(vec![25.0, 25.0]);
        let x = SampleSet::from_rows(&rows).unwrap();
        let spec = median_spec(&x);
        let alpha = Alpha::new(1.01).unwrap();

        let values: Vec<f64> = (0..13)
            .map(|i| evaluate_subset(&[i], &x, &spec, alpha, EvalMode::Exact, 0).unwrap())
            .collect();
        let best = values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_ne!(best, 12, "outlier must not be the best singleton");
        assert!(values[best] <= values[12]);

        // greedy with M = 1 is the exhaustive argmin
        let cfg = SubsampleConfig {
            target_size: 1,
            strategy: SelectionStrategy::GreedyForward,
            ..SubsampleConfig::new(1)
        };
        let r = select_subset(&x, &cfg).unwrap();
        assert_eq!(r.indices, vec![best]);
    }

    #[test]
    fn duplicate_points_give_equal_divergences() {
        let mut rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.3, 0.0]).collect();
        rows.push(vec![0.9, 0.0]); // exact copy of row 3
        let x = SampleSet::from_rows(&rows).unwrap();
        let spec = median_spec(&x);
        let alpha = Alpha::new(2.0).unwrap();
        let a = evaluate_subset(&[3, 5], &x, &spec, alpha, EvalMode::Exact, 0).unwrap();
        let b = evaluate_subset(&[5, 8], &x, &spec, alpha, EvalMode::Exact, 0).unwrap();
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }

    #[test]
    fn step_scores_match_direct_evaluation() {
        let x = cloud(30, 2, 7);
        let spec = median_spec(&x);
        let alpha = Alpha::new(1.01).unwrap();
        for mode in [EvalMode::Exact, EvalMode::Rff { features: 24 }] {
            let ev = SubsetEvaluator::new(&x, &spec, alpha, mode, 3).unwrap();
            for current in [vec![], vec![4, 17], vec![0, 9, 21, 28]] {
                let candidates: Vec<usize> =
                    (0..30).filter(|i| !current.contains(i)).collect();
                let fast = ev.step_scores(&current, &candidates).unwrap();
                for (ci, &c) in candidates.iter().enumerate().step_by(7) {
                    let mut grown = current.clone();
                    grown.push(c);
                    grown.sort_unstable();
                    let direct = ev.evaluate(&grown).unwrap();
                    assert!(
                        (fast[ci] - direct).abs() <= 1e-8,
                        "mode {mode:?}: secular {} vs direct {direct}",
                        fast[ci]
                    );
                }
            }
        }
    }

    #[test]
    fn evaluator_matches_public_evaluate_subset() {
        let x = cloud(24, 3, 8);
        let spec = median_spec(&x);
        let alpha = Alpha::new(1.01).unwrap();
        let ev = SubsetEvaluator::new(&x, &spec, alpha, EvalMode::Exact, 0).unwrap();
        for subset in [vec![0, 5, 11], vec![1, 2, 3, 4, 20], (0..24).collect::<Vec<_>>()] {
            let a = ev.evaluate(&subset).unwrap();
            let b = evaluate_subset(&subset, &x, &spec, alpha, EvalMode::Exact, 0).unwrap();
            assert!((a - b).abs() <= 1e-8, "evaluator {a} vs public {b}");
        }
    }

    #[test]
    fn select_subset_is_deterministic_and_validates() {
        let x = cloud(40, 2, 9);
        let mut cfg = SubsampleConfig::new(8);
        cfg.strategy = SelectionStrategy::GreedyForward;
        let a = select_subset(&x, &cfg).unwrap();
        let b = select_subset(&x, &cfg).unwrap();
        assert_eq!(a.indices, b.indices);
        assert_eq!(a.final_divergence.to_bits(), b.final_divergence.to_bits());
        assert_eq!(a.indices.len(), 8);
        assert_eq!(a.forward_steps, 8);

        cfg.target_size = 41;
        assert!(select_subset(&x, &cfg).is_err());
        cfg.target_size = 0;
        assert!(select_subset(&x, &cfg).is_err());

        // identity selection
        cfg.target_size = 40;
        let r = select_subset(&x, &cfg).unwrap();
        assert_eq!(r.indices, (0..40).collect::<Vec<_>>());
        assert!(r.final_divergence <= 1e-8);
    }

    #[test]
    fn greedy_swap_trajectory_is_nonincreasing_after_forward_phase() {
        let x = cloud(36, 2, 10);
        let mut cfg = SubsampleConfig::new(6);
        cfg.strategy = SelectionStrategy::GreedySwap { restarts: 2 };
        let r = select_subset(&x, &cfg).unwrap();
        let swap_part = &r.trajectory[r.forward_steps.max(1) - 1..];
        for w in swap_part.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-12,
                "swap trajectory increased: {:?}",
                r.trajectory
            );
        }
    }

    #[test]
    fn random_best_beats_its_own_draws_and_fresh_medians() {
        let x = cloud(30, 2, 11);
        let mut cfg = SubsampleConfig::new(5);
        cfg.strategy = SelectionStrategy::RandomBest(40);
        cfg.seed = 5;
        let r = select_subset(&x, &cfg).unwrap();

        let spec = median_spec(&x);
        let mut rng = ChaCha8Rng::seed_from_u64(987);
        let mut fresh: Vec<f64> = (0..20)
            .map(|_| {
                let mut s: Vec<usize> = rand::seq::index::sample(&mut rng, 30, 5).into_vec();
                s.sort_unstable();
                evaluate_subset(&s, &x, &spec, cfg.alpha, EvalMode::Exact, 0).unwrap()
            })
            .collect();
        fresh.sort_unstable_by(f64::total_cmp);
        assert!(r.final_divergence <= fresh[10], "best-of-40 should beat a fresh median");
    }

    #[test]
    fn greedy_swap_finds_the_exhaustive_optimum_on_a_micro_instance() {
        let x = cloud(6, 2, 12);
        let spec = median_spec(&x);
        let alpha = Alpha::new(1.01).unwrap();

        let mut best_val = f64::INFINITY;
        let mut values = Vec::new();
        for i in 0..6 {
            for j in (i + 1)..6 {
                let v = evaluate_subset(&[i, j], &x, &spec, alpha, EvalMode::Exact, 0).unwrap();
                values.push(v);
                best_val = best_val.min(v);
            }
        }
        values.sort_unstable_by(f64::total_cmp);
        let median = 0.5 * (values[6] + values[7]);

        let mut cfg = SubsampleConfig::new(2);
        cfg.strategy = SelectionStrategy::GreedySwap { restarts: 5 };
        let r = select_subset(&x, &cfg).unwrap();
        assert!(r.final_divergence <= median);
        assert!(
            r.final_divergence <= best_val + 1e-9,
            "swap search {} vs exhaustive optimum {}",
            r.final_divergence,
            best_val
        );
    }

    #[test]
    fn rff_mode_error_shrinks_with_more_features() {
        let x = cloud(120, 2, 13);
        let spec = median_spec(&x);
        let alpha = Alpha::new(1.01).unwrap();
        let subset: Vec<usize> = (0..12).map(|i| i * 9).collect();
        let exact = evaluate_subset(&subset, &x, &spec, alpha, EvalMode::Exact, 0).unwrap();
        let median_err = |features: usize| -> f64 {
            let mut errs: Vec<f64> = (0..9)
                .map(|seed| {
                    let v = evaluate_subset(
                        &subset,
                        &x,
                        &spec,
                        alpha,
                        EvalMode::Rff { features },
                        seed,
                    )
                    .unwrap();
                    (v - exact).abs()
                })
                .collect();
            errs.sort_unstable_by(f64::total_cmp);
            errs[4]
        };
        let coarse = median_err(16);
        let fine = median_err(256);
        assert!(fine <= coarse + 1e-12, "D=16 err {coarse}, D=256 err {fine}");
    }

    #[test]
    fn balance_dataset_cases() {
        // already balanced: unchanged with notice
        let data = ndarray::array![[0.0], [1.0], [10.0], [11.0]];
        let x = SampleSet::with_labels(data, vec![0, 0, 1, 1]).unwrap();
        let out = balance_dataset(&x, &SubsampleConfig::new(2)).unwrap();
        assert!(out.already_balanced);
        assert_eq!(out.data.n(), 4);
        assert_eq!(out.kept_rows, vec![0, 1, 2, 3]);

        // 12 majority / 3 minority -> 6 rows, 3 per class
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..12 {
            rows.push(vec![rng.sample(StandardNormal), rng.sample(StandardNormal)]);
            labels.push(7);
        }
        for _ in 0..3 {
            rows.push(vec![
                5.0 + rng.sample::<f64, _>(StandardNormal),
                5.0 + rng.sample::<f64, _>(StandardNormal),
            ]);
            labels.push(-1);
        }
        let x = SampleSet::with_labels(
            ndarray::Array2::from_shape_vec(
                (15, 2),
                rows.iter().flatten().copied().collect(),
            )
            .unwrap(),
            labels,
        )
        .unwrap();
        let out = balance_dataset(&x, &SubsampleConfig::new(3)).unwrap();
        assert!(!out.already_balanced);
        assert_eq!(out.data.n(), 6);
        let kept_labels = out.data.labels().unwrap();
        assert_eq!(kept_labels.iter().filter(|&&l| l == 7).count(), 3);
        assert_eq!(kept_labels.iter().filter(|&&l| l == -1).count(), 3);
        assert_eq!(out.majority_label, 7);

        // errors
        let unlabeled = SampleSet::new(ndarray::array![[0.0], [1.0]]).unwrap();
        assert!(balance_dataset(&unlabeled, &SubsampleConfig::new(1)).is_err());
        let three = SampleSet::with_labels(
            ndarray::array![[0.0], [1.0], [2.0]],
            vec![0, 1, 2],
        )
        .unwrap();
        assert!(balance_dataset(&three, &SubsampleConfig::new(1)).is_err());
    }
}
