//! Population dynamics for the distributional map `T` on probability
//! measures over `[-1,1]`.
//!
//! `T` mixes, over a Poisson number `theta` of cavity constraints with
//! Poisson(`gamma`) spins each, the law of the ratio
//! `<Av eps xi>_x / <Av xi>_x`, where the inner average enumerates the
//! cavity spins exactly under the product measure with means `x` drawn from
//! the current population. A measure is represented by a flat sample pool;
//! iterating the map with a full-population refresh converges to the unique
//! fixed point in the contractive regime.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::model::{check_conditions, BoundedPotential};
use crate::rng::substream;
use crate::transport::w1_sorted;
use crate::{Error, Result};

/// Cap on the total cavity-spin count of one tree. In the contractive
/// regimes exercised here the overflow probability is astronomically small;
/// overflowing trees are resampled, biasing the mixture by far less than
/// 1e-12 (documented, not corrected).
pub const MAX_TREE_SPINS: usize = 24;

/// Outputs per parallel chunk; fixed, so results are identical for any
/// worker count.
const APPLY_CHUNK: usize = 1024;

/// One draw from the Poisson mixture defining `T`: `theta` constraints,
/// `tau[k]` cavity spins in constraint `k`, their Gaussian weights, and the
/// per-constraint Gaussian weight multiplying the new spin.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeSample {
    pub theta: usize,
    pub tau: Vec<usize>,
    pub spin_weights: Vec<Vec<f64>>,
    pub cavity_weights: Vec<f64>,
}

impl TreeSample {
    /// Total number of cavity spins `t_theta = sum_k tau_k`.
    pub fn total_spins(&self) -> usize {
        self.tau.iter().sum()
    }
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let dist = Poisson::new(lambda).expect("positive lambda");
    dist.sample(rng) as usize
}

/// Draw `(theta, tau, weights)` from the mixture: `theta ~ Poisson(alpha*gamma)`
/// and each `tau_k ~ Poisson(gamma)` independently, which reproduces the
/// mixture weights `e^{-alpha gamma} (alpha gamma)^theta / theta! *
/// prod_k e^{-gamma} gamma^{tau_k} / tau_k!` exactly.
pub fn sample_tree<R: Rng + ?Sized>(alpha: f64, gamma: f64, rng: &mut R) -> TreeSample {
    let theta = poisson_draw(alpha * gamma, rng);
    let tau: Vec<usize> = (0..theta).map(|_| poisson_draw(gamma, rng)).collect();
    let mut spin_weights = Vec::with_capacity(theta);
    let mut cavity_weights = Vec::with_capacity(theta);
    for &t in &tau {
        let row: Vec<f64> = (0..t).map(|_| rng.sample(StandardNormal)).collect();
        spin_weights.push(row);
        cavity_weights.push(rng.sample(StandardNormal));
    }
    TreeSample {
        theta,
        tau,
        spin_weights,
        cavity_weights,
    }
}

/// The ratio `<Av eps xi>_x / <Av xi>_x`, enumerated exactly.
///
/// Constraints touch disjoint spin blocks, so for fixed `eps` the sum over
/// spin configurations factorizes into per-constraint block sums; the ratio
/// is then `tanh((log A_+ - log A_-)/2)` with `A_eps` the product of block
/// sums. Each block shares its weight products between the two `eps`
/// branches, so a potential that cannot distinguish them (constant, zero)
/// yields exactly 0. Returns 0 when `theta = 0` (the Dirac mass at zero).
pub fn cavity_ratio(tree: &TreeSample, u: &BoundedPotential, x: &[f64]) -> Result<f64> {
    let total = tree.total_spins();
    if total > MAX_TREE_SPINS {
        return Err(Error::Capacity(format!(
            "tree has {total} cavity spins, cap is {MAX_TREE_SPINS}; resample"
        )));
    }
    if x.len() != total {
        return Err(Error::Parameter(format!(
            "x has length {}, tree needs {total}",
            x.len()
        )));
    }
    if tree.theta == 0 {
        return Ok(0.0);
    }

    let mut log_plus = 0.0f64;
    let mut log_minus = 0.0f64;
    let mut offset = 0usize;
    for k in 0..tree.theta {
        let t = tree.tau[k];
        let weights = &tree.spin_weights[k];
        let xs = &x[offset..offset + t];
        let gbar = tree.cavity_weights[k];
        let mut sum_plus = 0.0f64;
        let mut sum_minus = 0.0f64;
        for bits in 0..(1usize << t) {
            let mut prob = 1.0f64;
            let mut arg = 0.0f64;
            for i in 0..t {
                if bits & (1 << i) != 0 {
                    prob *= 0.5 * (1.0 + xs[i]);
                    arg += weights[i];
                } else {
                    prob *= 0.5 * (1.0 - xs[i]);
                    arg -= weights[i];
                }
            }
            sum_plus += prob * u.eval(arg + gbar).exp();
            sum_minus += prob * u.eval(arg - gbar).exp();
        }
        log_plus += sum_plus.ln();
        log_minus += sum_minus.ln();
        offset += t;
    }
    Ok((0.5 * (log_plus - log_minus)).tanh())
}

/// Empirical representation of a measure on `[-1,1]`: a flat pool of
/// samples plus the parameters it was produced at.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationMeasure {
    pub values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl PopulationMeasure {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// One value per line, for plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 20);
        for v in &self.values {
            s.push_str(&format!("{v:.17e}\n"));
        }
        s
    }
}

/// One sweep of the map: every output is an independent draw of the ratio
/// under a fresh tree, with the `x` entries resampled uniformly from the
/// input pool. Chunks of fixed size run in parallel, each on the substream
/// `(seed, "apply-map", iteration, chunk)`, so the output is bit-identical
/// for any worker count.
pub fn apply_map(
    pop: &PopulationMeasure,
    alpha: f64,
    gamma: f64,
    u: &BoundedPotential,
    n_out: usize,
    seed: u64,
    iteration: u64,
) -> Result<PopulationMeasure> {
    if pop.is_empty() {
        return Err(Error::Parameter("population must be nonempty".into()));
    }
    if n_out == 0 {
        return Err(Error::Parameter("n_out must be >= 1".into()));
    }
    let n_chunks = n_out.div_ceil(APPLY_CHUNK);
    let values: Vec<f64> = (0..n_chunks)
        .into_par_iter()
        .flat_map_iter(|chunk| {
            let start = chunk * APPLY_CHUNK;
            let end = (start + APPLY_CHUNK).min(n_out);
            let mut rng = substream(seed, "apply-map", &[iteration, chunk as u64]);
            let mut out = Vec::with_capacity(end - start);
            for _ in start..end {
                out.push(one_ratio_draw(pop, alpha, gamma, u, &mut rng));
            }
            out
        })
        .collect();
    Ok(PopulationMeasure {
        values,
        alpha,
        gamma,
    })
}

fn one_ratio_draw<R: Rng + ?Sized>(
    pop: &PopulationMeasure,
    alpha: f64,
    gamma: f64,
    u: &BoundedPotential,
    rng: &mut R,
) -> f64 {
    let tree = loop {
        let t = sample_tree(alpha, gamma, rng);
        if t.total_spins() <= MAX_TREE_SPINS {
            break t;
        }
    };
    let x: Vec<f64> = (0..tree.total_spins())
        .map(|_| pop.values[rng.random_range(0..pop.values.len())])
        .collect();
    cavity_ratio(&tree, u, &x).expect("tree within caps")
}

/// Knobs for [`solve_fixed_point`].
#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub pop_size: usize,
    /// Stop when the step-to-step sorted W1 drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Starting pool; all zeros when absent (the image of `theta = 0`).
    pub initial: Option<Vec<f64>>,
}

impl SolveOptions {
    pub fn new(pop_size: usize, seed: u64) -> Self {
        SolveOptions {
            pop_size,
            tol: 1e-3,
            max_iter: 100,
            seed,
            initial: None,
        }
    }
}

/// Convergence diagnostics of one solve.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub final_step_w1: f64,
    /// Step-to-step sorted W1 per iteration.
    pub trajectory: Vec<f64>,
    /// Tolerance reached.
    pub converged: bool,
    /// Three consecutive deltas within 10% of each other: the Monte Carlo
    /// floor of the pool size, declared instead of iterating further.
    pub floor_detected: bool,
    /// Whether the contraction condition held at these parameters; the
    /// solve proceeds either way.
    pub condition_ok: bool,
}

/// Iterate the map from the starting pool until the step-to-step sorted W1
/// drops below `tol`, plateaus at the Monte Carlo floor, or `max_iter` is
/// reached. Non-convergence is reported in the flags, not as an error.
pub fn solve_fixed_point(
    alpha: f64,
    gamma: f64,
    u: &BoundedPotential,
    opts: &SolveOptions,
) -> Result<(PopulationMeasure, ConvergenceReport)> {
    if opts.pop_size == 0 {
        return Err(Error::Parameter("population size must be >= 1".into()));
    }
    let condition_ok = check_conditions(alpha, gamma, u).e750_ok;
    let initial = match &opts.initial {
        Some(init) => {
            if init.len() != opts.pop_size {
                return Err(Error::Parameter(format!(
                    "initial population has {} values, expected pop_size = {}",
                    init.len(),
                    opts.pop_size
                )));
            }
            if init.iter().any(|v| !(-1.0..=1.0).contains(v)) {
                return Err(Error::Parameter(
                    "initial population values must lie in [-1,1]".into(),
                ));
            }
            init.clone()
        }
        None => vec![0.0; opts.pop_size],
    };
    let mut pop = PopulationMeasure {
        values: initial,
        alpha,
        gamma,
    };
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut floor_detected = false;
    for iteration in 0..opts.max_iter {
        let next = apply_map(&pop, alpha, gamma, u, opts.pop_size, opts.seed, iteration as u64)?;
        let delta = w1_sorted(&next.values, &pop.values)?;
        trajectory.push(delta);
        pop = next;
        if delta < opts.tol {
            converged = true;
            break;
        }
        if trajectory.len() >= 3 {
            let tail = &trajectory[trajectory.len() - 3..];
            let lo = tail.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = tail.iter().cloned().fold(0.0f64, f64::max);
            if lo > 0.0 && hi <= 1.1 * lo {
                floor_detected = true;
                break;
            }
        }
    }
    let final_step_w1 = *trajectory.last().unwrap_or(&0.0);
    let report = ConvergenceReport {
        iterations: trajectory.len(),
        final_step_w1,
        trajectory,
        converged,
        floor_detected,
        condition_ok,
    };
    Ok((pop, report))
}

/// Result of the common-random-numbers contraction check.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ContractionResult {
    /// Mean `|ratio(x from pop1) - ratio(x from pop2)|` under shared trees
    /// and shared pool indices — an upper bound on the W1 of the images.
    pub coupled_w1_image: f64,
    pub std_error: f64,
    /// `2 U_inf e^{2 U_inf} alpha gamma^2 * W1(pop1, pop2)`.
    pub bound: f64,
}

/// Evaluate the map on both populations under common randomness: each draw
/// shares the tree and the pool indices, with both pools sorted so index
/// coupling realizes the monotone (optimal 1-D) coupling of the inputs.
pub fn contraction_test(
    pop1: &PopulationMeasure,
    pop2: &PopulationMeasure,
    alpha: f64,
    gamma: f64,
    u: &BoundedPotential,
    n: usize,
    seed: u64,
) -> Result<ContractionResult> {
    if pop1.len() != pop2.len() || pop1.is_empty() {
        return Err(Error::Parameter(
            "contraction test needs equal-size nonempty populations".into(),
        ));
    }
    if n == 0 {
        return Err(Error::Parameter("n must be >= 1".into()));
    }
    let mut sorted1 = pop1.values.clone();
    let mut sorted2 = pop2.values.clone();
    sorted1.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted2.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let uinf = u.sup_norm();
    let bound = 2.0 * uinf * (2.0 * uinf).exp() * alpha * gamma * gamma
        * w1_sorted(&pop1.values, &pop2.values)?;

    let diffs: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut rng = substream(seed, "contraction", &[j as u64]);
            let tree = loop {
                let t = sample_tree(alpha, gamma, &mut rng);
                if t.total_spins() <= MAX_TREE_SPINS {
                    break t;
                }
            };
            let total = tree.total_spins();
            let mut x1 = Vec::with_capacity(total);
            let mut x2 = Vec::with_capacity(total);
            for _ in 0..total {
                let idx = rng.random_range(0..sorted1.len());
                x1.push(sorted1[idx]);
                x2.push(sorted2[idx]);
            }
            let r1 = cavity_ratio(&tree, u, &x1).expect("tree within caps");
            let r2 = cavity_ratio(&tree, u, &x2).expect("tree within caps");
            (r1 - r2).abs()
        })
        .collect();
    let (mean, std_error) = crate::gibbs::mean_and_std_error(&diffs);
    Ok(ContractionResult {
        coupled_w1_image: mean,
        std_error,
        bound,
    })
}

const POPULATION_MAGIC: &[u8; 8] = b"DPOPM001";

/// The population file payload: header `{S, alpha, gamma, u-descriptor,
/// seed}` followed by `S` little-endian doubles.
pub fn population_to_bytes(pop: &PopulationMeasure, u: &BoundedPotential, seed: u64) -> Vec<u8> {
    let mut out: Vec<u8> = Vec::with_capacity(64 + pop.values.len() * 8);
    out.extend_from_slice(POPULATION_MAGIC);
    out.extend_from_slice(&(pop.values.len() as u64).to_le_bytes());
    out.extend_from_slice(&pop.alpha.to_le_bytes());
    out.extend_from_slice(&pop.gamma.to_le_bytes());
    let desc = u.descriptor();
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(desc.as_bytes());
    out.extend_from_slice(&seed.to_le_bytes());
    for v in &pop.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Write a population file.
pub fn save_population(
    pop: &PopulationMeasure,
    u: &BoundedPotential,
    seed: u64,
    path: &Path,
) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(&population_to_bytes(pop, u, seed))?;
    Ok(())
}

/// Read a population file written by [`save_population`]; returns the pool,
/// the potential descriptor, and the seed it was solved with.
pub fn load_population(path: &Path) -> Result<(PopulationMeasure, String, u64)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |msg: &str| Error::Serialization(format!("population file: {msg}"));
    if bytes.len() < 8 || &bytes[..8] != POPULATION_MAGIC {
        return Err(fail("bad magic"));
    }
    let mut pos = 8usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        if pos + n > bytes.len() {
            return Err(fail("truncated"));
        }
        let s = &bytes[pos..pos + n];
        pos += n;
        Ok(s)
    };
    let s = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let alpha = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let gamma = f64::from_le_bytes(take(8)?.try_into().unwrap());
    let desc_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let descriptor = String::from_utf8(take(desc_len)?.to_vec())
        .map_err(|_| fail("descriptor not utf-8"))?;
    let seed = u64::from_le_bytes(take(8)?.try_into().unwrap());
    let mut values = Vec::with_capacity(s);
    for _ in 0..s {
        values.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
    }
    if pos != bytes.len() {
        return Err(fail("trailing bytes"));
    }
    Ok((
        PopulationMeasure {
            values,
            alpha,
            gamma,
        },
        descriptor,
        seed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tanh02() -> BoundedPotential {
        BoundedPotential::ScaledTanh { a: 0.2, b: 1.0 }
    }

    /// Independent brute-force oracle: direct sum over eps and all spin
    /// configurations, no factorization, no log transform.
    fn brute_force_ratio(tree: &TreeSample, u: &BoundedPotential, x: &[f64]) -> f64 {
        let total = tree.total_spins();
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for eps in [1.0f64, -1.0] {
            for bits in 0..(1usize << total) {
                let spin = |i: usize| if bits & (1 << i) != 0 { 1.0f64 } else { -1.0 };
                let mut weight = 1.0;
                for i in 0..total {
                    weight *= 0.5 * (1.0 + spin(i) * x[i]);
                }
                let mut log_xi = 0.0;
                let mut offset = 0;
                for k in 0..tree.theta {
                    let mut arg = tree.cavity_weights[k] * eps;
                    for i in 0..tree.tau[k] {
                        arg += tree.spin_weights[k][i] * spin(offset + i);
                    }
                    log_xi += u.eval(arg);
                    offset += tree.tau[k];
                }
                let term = 0.5 * weight * log_xi.exp();
                num += eps * term;
                den += term;
            }
        }
        num / den
    }

    #[test]
    fn gamma_zero_trees_are_empty() {
        let mut rng = substream(1, "tree", &[]);
        for _ in 0..100 {
            let tree = sample_tree(0.3, 0.0, &mut rng);
            assert_eq!(tree.theta, 0);
        }
    }

    /// Poisson mixture means: E[theta] = alpha*gamma and E[t_theta] =
    /// alpha*gamma^2 (Wald), both within three standard errors.
    #[test]
    fn tree_mixture_means() {
        let (alpha, gamma) = (0.25, 2.0);
        let n = 100_000usize;
        let mut rng = substream(2, "tree", &[]);
        let mut thetas = 0.0f64;
        let mut totals = 0.0f64;
        let mut totals_sq = 0.0f64;
        for _ in 0..n {
            let tree = sample_tree(alpha, gamma, &mut rng);
            thetas += tree.theta as f64;
            let t = tree.total_spins() as f64;
            totals += t;
            totals_sq += t * t;
        }
        let mean_theta = thetas / n as f64;
        let se_theta = (alpha * gamma / n as f64).sqrt();
        assert!(
            (mean_theta - 0.5).abs() <= 3.0 * se_theta,
            "theta mean {mean_theta}"
        );
        let mean_total = totals / n as f64;
        let var_total = (totals_sq - totals * totals / n as f64) / (n as f64 - 1.0);
        let se_total = (var_total / n as f64).sqrt();
        assert!(
            (mean_total - 1.0).abs() <= 3.0 * se_total,
            "t_theta mean {mean_total} (se {se_total})"
        );
    }

    #[test]
    fn ratio_theta_zero_is_exact_zero() {
        let tree = TreeSample {
            theta: 0,
            tau: vec![],
            spin_weights: vec![],
            cavity_weights: vec![],
        };
        assert_eq!(cavity_ratio(&tree, &tanh02(), &[]).unwrap(), 0.0);
    }

    #[test]
    fn ratio_constant_potential_is_exact_zero() {
        let mut rng = substream(3, "ratio", &[]);
        for _ in 0..50 {
            let tree = sample_tree(0.5, 1.5, &mut rng);
            if tree.total_spins() > MAX_TREE_SPINS {
                continue;
            }
            let x: Vec<f64> = (0..tree.total_spins())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let r = cavity_ratio(&tree, &BoundedPotential::Constant(0.7), &x).unwrap();
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn ratio_single_empty_constraint_formula() {
        let u = tanh02();
        let gbar = -0.9_f64;
        let tree = TreeSample {
            theta: 1,
            tau: vec![0],
            spin_weights: vec![vec![]],
            cavity_weights: vec![gbar],
        };
        let expect = (u.eval(gbar).exp() - u.eval(-gbar).exp())
            / (u.eval(gbar).exp() + u.eval(-gbar).exp());
        assert_relative_eq!(
            cavity_ratio(&tree, &u, &[]).unwrap(),
            expect,
            epsilon = 1e-14
        );
    }

    #[test]
    fn ratio_matches_brute_force_enumeration() {
        let mut rng = substream(4, "ratio", &[]);
        let pots = [
            tanh02(),
            BoundedPotential::GaussianBump { a: 0.5, w: 1.0 },
            BoundedPotential::SmoothStep { a: -0.8, kappa: 2.0 },
        ];
        let mut tested = 0;
        while tested < 60 {
            let tree = sample_tree(0.8, 2.0, &mut rng);
            if tree.theta == 0 || tree.total_spins() > 10 {
                continue;
            }
            let x: Vec<f64> = (0..tree.total_spins())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            for u in &pots {
                let fast = cavity_ratio(&tree, u, &x).unwrap();
                let brute = brute_force_ratio(&tree, u, &x);
                assert!(
                    (fast - brute).abs() < 1e-12,
                    "ratio {fast} vs brute {brute}"
                );
                assert!((-1.0..=1.0).contains(&fast));
            }
            tested += 1;
        }
    }

    /// For an even potential, negating the per-constraint cavity weights
    /// negates the ratio at the same x.
    #[test]
    fn even_potential_odd_symmetry() {
        let u = BoundedPotential::GaussianBump { a: 0.6, w: 1.3 };
        let mut rng = substream(5, "odd", &[]);
        let mut tested = 0;
        while tested < 40 {
            let tree = sample_tree(0.8, 1.5, &mut rng);
            if tree.theta == 0 || tree.total_spins() > MAX_TREE_SPINS {
                continue;
            }
            let x: Vec<f64> = (0..tree.total_spins())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let mut negated = tree.clone();
            for w in negated.cavity_weights.iter_mut() {
                *w = -*w;
            }
            let r = cavity_ratio(&tree, &u, &x).unwrap();
            let rn = cavity_ratio(&negated, &u, &x).unwrap();
            assert!((r + rn).abs() < 1e-12, "{r} vs {rn}");
            tested += 1;
        }
    }

    #[test]
    fn ratio_capacity_cap() {
        let tree = TreeSample {
            theta: 1,
            tau: vec![25],
            spin_weights: vec![vec![0.1; 25]],
            cavity_weights: vec![0.3],
        };
        assert!(matches!(
            cavity_ratio(&tree, &tanh02(), &vec![0.0; 25]),
            Err(Error::Capacity(_))
        ));
    }

    #[test]
    fn apply_map_trivial_cases() {
        let pop = PopulationMeasure {
            values: vec![0.3; 100],
            alpha: 0.1,
            gamma: 1.0,
        };
        let out = apply_map(&pop, 0.1, 1.0, &BoundedPotential::Constant(0.4), 200, 9, 0).unwrap();
        assert_eq!(out.values.len(), 200);
        assert!(out.values.iter().all(|&v| v == 0.0));

        let out = apply_map(&pop, 0.1, 0.0, &tanh02(), 50, 9, 0).unwrap();
        assert!(out.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_map_is_worker_count_independent() {
        let pop = PopulationMeasure {
            values: (0..500).map(|i| (i as f64 / 250.0) - 1.0).collect(),
            alpha: 0.1,
            gamma: 1.0,
        };
        let u = tanh02();
        let pool1 = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let pool2 = rayon::ThreadPoolBuilder::new().num_threads(2).build().unwrap();
        let a = pool1.install(|| apply_map(&pop, 0.1, 1.0, &u, 3000, 17, 4)).unwrap();
        let b = pool2.install(|| apply_map(&pop, 0.1, 1.0, &u, 3000, 17, 4)).unwrap();
        assert_eq!(a.values, b.values);
    }

    /// The mean of one sweep from the zero pool agrees with an independent
    /// Monte Carlo estimator that shares no code: trees drawn on a separate
    /// stream, ratios by brute-force enumeration.
    #[test]
    fn apply_map_mean_matches_independent_estimator() {
        let pots = [tanh02(), BoundedPotential::SmoothStep { a: 0.5, kappa: 1.0 }];
        for (pi, u) in pots.iter().enumerate() {
            let pop = PopulationMeasure {
                values: vec![0.0; 10],
                alpha: 0.1,
                gamma: 1.0,
            };
            let n = 20_000usize;
            let out = apply_map(&pop, 0.1, 1.0, u, n, 23 + pi as u64, 0).unwrap();
            let (mean, se) = crate::gibbs::mean_and_std_error(&out.values);

            let mut rng = substream(1000 + pi as u64, "oracle", &[]);
            let mut vals = Vec::with_capacity(n);
            for _ in 0..n {
                let tree = loop {
                    let t = sample_tree(0.1, 1.0, &mut rng);
                    if t.total_spins() <= 12 {
                        break t;
                    }
                };
                if tree.theta == 0 {
                    vals.push(0.0);
                } else {
                    let x = vec![0.0; tree.total_spins()];
                    vals.push(brute_force_ratio(&tree, u, &x));
                }
            }
            let (omean, ose) = crate::gibbs::mean_and_std_error(&vals);
            let combined = (se * se + ose * ose).sqrt();
            assert!(
                (mean - omean).abs() <= 3.0 * combined,
                "{u:?}: mean {mean} vs oracle {omean} (se {combined})"
            );
        }
    }

    #[test]
    fn solve_constant_potential_converges_immediately() {
        let opts = SolveOptions::new(500, 3);
        let (pop, report) =
            solve_fixed_point(0.1, 1.0, &BoundedPotential::Constant(0.2), &opts).unwrap();
        assert!(report.converged);
        assert_eq!(report.iterations, 1);
        assert_eq!(report.final_step_w1, 0.0);
        assert!(pop.values.iter().all(|&v| v == 0.0));
        assert!(report.condition_ok);
    }

    #[test]
    fn solve_reports_condition_violation_but_proceeds() {
        // Large U_inf and gamma: contraction condition fails.
        let u = BoundedPotential::ScaledTanh { a: 3.0, b: 1.0 };
        let opts = SolveOptions {
            pop_size: 200,
            tol: 1e-3,
            max_iter: 5,
            seed: 5,
            initial: None,
        };
        let (_, report) = solve_fixed_point(0.4, 2.0, &u, &opts).unwrap();
        assert!(!report.condition_ok);
        assert_eq!(report.trajectory.len(), report.iterations);
    }

    #[test]
    fn contraction_identical_pops_and_zero_potential() {
        let pop = PopulationMeasure {
            values: (0..300).map(|i| (i as f64 / 150.0) - 1.0).collect(),
            alpha: 0.1,
            gamma: 1.0,
        };
        let res = contraction_test(&pop, &pop, 0.1, 1.0, &tanh02(), 500, 7).unwrap();
        assert_eq!(res.coupled_w1_image, 0.0);
        assert_eq!(res.bound, 0.0);

        let other = PopulationMeasure {
            values: vec![0.5; 300],
            alpha: 0.1,
            gamma: 1.0,
        };
        let res = contraction_test(&pop, &other, 0.1, 1.0, &BoundedPotential::Zero, 500, 7).unwrap();
        assert_eq!(res.coupled_w1_image, 0.0);
        assert_eq!(res.bound, 0.0);
    }

    #[test]
    fn contraction_bound_holds_for_separated_pops() {
        let pop1 = PopulationMeasure {
            values: vec![0.5; 400],
            alpha: 0.1,
            gamma: 1.0,
        };
        let pop2 = PopulationMeasure {
            values: vec![-0.5; 400],
            alpha: 0.1,
            gamma: 1.0,
        };
        let res = contraction_test(&pop1, &pop2, 0.1, 1.0, &tanh02(), 4000, 13).unwrap();
        assert!(
            res.coupled_w1_image <= res.bound + 3.0 * res.std_error,
            "coupled {} vs bound {} (se {})",
            res.coupled_w1_image,
            res.bound,
            res.std_error
        );
        // The bound is exactly the contraction factor here (input W1 = 1).
        assert_relative_eq!(res.bound, 0.05967298790565082, epsilon = 1e-15);
    }

    #[test]
    fn population_file_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pop.bin");
        let mut rng = substream(6, "popio", &[]);
        let pop = PopulationMeasure {
            values: (0..257).map(|_| rng.random_range(-1.0..1.0)).collect(),
            alpha: 0.1,
            gamma: 1.25,
        };
        let u = tanh02();
        save_population(&pop, &u, 77, &path).unwrap();
        let (back, desc, seed) = load_population(&path).unwrap();
        assert_eq!(seed, 77);
        assert_eq!(desc, "tanh:0.2:1");
        assert_eq!(back.alpha.to_bits(), pop.alpha.to_bits());
        assert_eq!(back.gamma.to_bits(), pop.gamma.to_bits());
        assert_eq!(back.values.len(), pop.values.len());
        for (a, b) in back.values.iter().zip(pop.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        assert!(load_population(&dir.path().join("missing.bin")).is_err());
    }
}
