//! The replica-symmetric free-energy curve and its finite-size comparison.
//!
//! `G(gamma)` is `alpha` times the log of a Poisson mixture of expected
//! ratios `Vbar_{p+1}/Vbar_p`, where `Vbar_p` averages `exp(u(sum g_i s_i))`
//! over `p` spins distributed with i.i.d. means drawn from the fixed-point
//! population. Because the spin average is affine in each mean, the
//! population integral collapses to evaluation at the population mean — the
//! mean-collapse identity, regression-tested below — which removes one
//! Monte Carlo layer. `F` integrates `G` from `F(0) = log 2 + alpha*u(0)`
//! by composite Simpson quadrature; the comparison harness then checks
//! `|p_N - F|` against exact enumeration.

use rayon::prelude::*;

use crate::fixed_point::{solve_fixed_point, PopulationMeasure, SolveOptions};
use crate::gibbs::{disorder_average, disorder_magnetizations, mean_and_std_error, Statistic};
use crate::model::{BoundedPotential, ModelParams};
use crate::rng::{derive_seed, substream};
use crate::transport::{w1_cdf, w1_joint, MAX_JOINT_SAMPLES};
use crate::{Error, Result};

/// Cap on the spin count in one `Vbar` evaluation (2^p terms).
pub const MAX_VBAR_SPINS: usize = 24;

/// `Vbar_p` at population mean `mbar`: the average of `exp(u(sum_i w_i s_i))`
/// under the product measure on `{-1,1}^p` with `E[s_i] = mbar`.
///
/// Enumerated in Gray-code order with the configuration probability read
/// off the up-spin count; the weight sum normalizes the quadrature so a
/// constant integrand is reproduced exactly. `p = 0` gives `exp(u(0))`.
pub fn vbar(p: usize, weights: &[f64], u: &BoundedPotential, mbar: f64) -> Result<f64> {
    if p > MAX_VBAR_SPINS {
        return Err(Error::Capacity(format!(
            "vbar needs p <= {MAX_VBAR_SPINS}, got {p}"
        )));
    }
    if weights.len() != p {
        return Err(Error::Parameter(format!(
            "vbar: {} weights for p = {p}",
            weights.len()
        )));
    }
    if !(-1.0..=1.0).contains(&mbar) {
        return Err(Error::Parameter(format!("vbar: mbar = {mbar} outside [-1,1]")));
    }
    if p == 0 {
        return Ok(u.eval(0.0).exp());
    }

    let up = 0.5 * (1.0 + mbar);
    let down = 0.5 * (1.0 - mbar);
    let mut up_pow = vec![1.0f64; p + 1];
    let mut down_pow = vec![1.0f64; p + 1];
    for i in 1..=p {
        up_pow[i] = up_pow[i - 1] * up;
        down_pow[i] = down_pow[i - 1] * down;
    }

    // Accumulate deviations from the first integrand value; the weight sum
    // normalizes the quadrature. Both together reproduce a constant
    // integrand exactly.
    let mut arg: f64 = -weights.iter().sum::<f64>();
    let base = u.eval(arg).exp();
    let mut bits = 0usize;
    let mut ups = 0usize;
    let mut total = 0.0f64;
    let mut norm = 0.0f64;
    for code in 0..(1usize << p) {
        if code > 0 {
            let j = code.trailing_zeros() as usize;
            bits ^= 1 << j;
            if bits & (1 << j) != 0 {
                arg += 2.0 * weights[j];
                ups += 1;
            } else {
                arg -= 2.0 * weights[j];
                ups -= 1;
            }
        }
        let prob = up_pow[ups] * down_pow[p - ups];
        total += prob * (u.eval(arg).exp() - base);
        norm += prob;
    }
    Ok(base + total / norm)
}

/// Smallest `P` with Poisson(`gamma`) tail mass beyond `P` below `tol`.
pub fn poisson_cutoff(gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 0;
    }
    let mut pmf = (-gamma).exp();
    let mut cdf = pmf;
    let mut p = 0usize;
    while 1.0 - cdf > tol {
        p += 1;
        pmf *= gamma / p as f64;
        cdf += pmf;
    }
    p
}

/// Monte Carlo estimate of `G(gamma)` with its standard error.
///
/// For each `p <= p_max` the expected ratio `Vbar_{p+1}/Vbar_p` is averaged
/// over `n_mc` Gaussian draws, the first `p` Gaussians shared between
/// numerator and denominator. The Poisson mixture is then combined inside
/// the log (weights normalized over the kept terms); the standard error
/// passes through the log by the delta method and the truncation tail adds
/// `e^{2 U_inf} * tail` at the mixture level.
pub fn estimate_g(
    gamma: f64,
    alpha: f64,
    u: &BoundedPotential,
    pop: &PopulationMeasure,
    n_mc: usize,
    p_max: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if n_mc < 2 {
        return Err(Error::Parameter("estimate_g needs n_mc >= 2".into()));
    }
    if p_max + 1 > MAX_VBAR_SPINS {
        return Err(Error::Capacity(format!(
            "p_max = {p_max} pushes vbar past its {MAX_VBAR_SPINS}-spin cap"
        )));
    }
    if pop.is_empty() {
        return Err(Error::Parameter("population must be nonempty".into()));
    }
    let mbar = pop.mean().clamp(-1.0, 1.0);
    let uinf = u.sup_norm();
    let ratio_lo = (-2.0 * uinf).exp();
    let ratio_hi = (2.0 * uinf).exp();

    let per_p: Vec<(f64, f64)> = (0..=p_max)
        .into_par_iter()
        .map(|p| -> Result<(f64, f64)> {
            let mut rng = substream(seed, "g-ratio", &[p as u64]);
            let mut ratios = Vec::with_capacity(n_mc);
            for _ in 0..n_mc {
                let gs: Vec<f64> = (0..p + 1)
                    .map(|_| rand::Rng::sample(&mut rng, rand_distr::StandardNormal))
                    .collect();
                let num = vbar(p + 1, &gs, u, mbar)?;
                let den = vbar(p, &gs[..p], u, mbar)?;
                let ratio = num / den;
                if !(ratio >= ratio_lo * (1.0 - 1e-9) && ratio <= ratio_hi * (1.0 + 1e-9)) {
                    return Err(Error::Numerical(format!(
                        "ratio {ratio} escapes [e^-2U, e^2U] = [{ratio_lo}, {ratio_hi}]"
                    )));
                }
                ratios.push(ratio);
            }
            Ok(mean_and_std_error(&ratios))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut pmf = (-gamma).exp();
    let mut weight_sum = 0.0f64;
    let mut inner = 0.0f64;
    let mut var_inner = 0.0f64;
    for (p, &(mean, sem)) in per_p.iter().enumerate() {
        if p > 0 {
            pmf *= gamma / p as f64;
        }
        weight_sum += pmf;
        inner += pmf * mean;
        var_inner += (pmf * sem).powi(2);
    }
    let tail = (1.0 - weight_sum).max(0.0);
    let inner = inner / weight_sum;
    let var_inner = var_inner / (weight_sum * weight_sum);
    if !(inner > 0.0) {
        return Err(Error::Numerical(format!("non-positive mixture mean {inner}")));
    }
    let g = alpha * inner.ln();
    let se = alpha * (var_inner.sqrt() + ratio_hi * tail) / inner;
    Ok((g, se))
}

/// The replica-symmetric curve on a uniform gamma grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RsCurve {
    pub gamma_grid: Vec<f64>,
    /// `(G, std_error)` per node.
    pub g_values: Vec<(f64, f64)>,
    /// Cumulative Simpson quadrature of `G` from `f0`.
    pub f_values: Vec<f64>,
    /// Conservative error on each `F` node: the integrated G standard
    /// errors (triangle bound over the quadrature).
    pub f_errors: Vec<f64>,
    pub f0: f64,
    /// `|F(gamma_max)|` difference against the half-resolution grid, when
    /// the node count permits the comparison; large values flag a grid that
    /// is too coarse.
    pub richardson_delta: Option<f64>,
}

impl RsCurve {
    /// `F` at `gamma`, by exact node match or linear interpolation.
    pub fn f_at(&self, gamma: f64) -> Result<f64> {
        let last = *self.gamma_grid.last().unwrap();
        if !(0.0..=last + 1e-12).contains(&gamma) {
            return Err(Error::Parameter(format!(
                "gamma = {gamma} outside curve range [0, {last}]"
            )));
        }
        for (i, &x) in self.gamma_grid.iter().enumerate() {
            if (x - gamma).abs() < 1e-12 {
                return Ok(self.f_values[i]);
            }
        }
        let hi = self
            .gamma_grid
            .iter()
            .position(|&x| x > gamma)
            .unwrap_or(self.gamma_grid.len() - 1);
        let lo = hi - 1;
        let t = (gamma - self.gamma_grid[lo]) / (self.gamma_grid[hi] - self.gamma_grid[lo]);
        Ok(self.f_values[lo] * (1.0 - t) + self.f_values[hi] * t)
    }

    /// Error estimate for `F` at `gamma`: the nearest node's integrated-G
    /// error plus the quadrature systematic when measured.
    pub fn f_error_at(&self, gamma: f64) -> f64 {
        let idx = self
            .gamma_grid
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - gamma).abs().partial_cmp(&(*b - gamma).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        self.f_errors[idx] + self.richardson_delta.unwrap_or(0.0)
    }
}

/// Cumulative composite Simpson on a uniform grid: even nodes by the
/// three-point rule, odd nodes by the exact half-interval integral of the
/// interpolating quadratic.
fn cumulative_simpson(h: f64, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut f = vec![0.0f64; n];
    let mut i = 0;
    while i + 2 < n + 1 {
        if i + 2 >= n {
            break;
        }
        f[i + 1] = f[i] + h / 12.0 * (5.0 * g[i] + 8.0 * g[i + 1] - g[i + 2]);
        f[i + 2] = f[i] + h / 3.0 * (g[i] + 4.0 * g[i + 1] + g[i + 2]);
        i += 2;
    }
    f
}

/// Solve the fixed point and estimate `G` at every grid node, then
/// integrate to `F`. Nodes run concurrently on derived substreams.
pub fn build_rs_curve(
    alpha: f64,
    u: &BoundedPotential,
    gamma_max: f64,
    n_grid: usize,
    pop_size: usize,
    n_mc: usize,
    seed: u64,
) -> Result<RsCurve> {
    if !(gamma_max > 0.0) {
        return Err(Error::Parameter("gamma_max must be > 0".into()));
    }
    if n_grid < 3 || n_grid % 2 == 0 {
        return Err(Error::Parameter(format!(
            "n_grid must be odd and >= 3 for Simpson quadrature, got {n_grid}"
        )));
    }
    let h = gamma_max / (n_grid - 1) as f64;
    let gamma_grid: Vec<f64> = (0..n_grid).map(|i| i as f64 * h).collect();

    let g_values: Vec<(f64, f64)> = gamma_grid
        .par_iter()
        .enumerate()
        .map(|(i, &gamma)| -> Result<(f64, f64)> {
            let opts = SolveOptions::new(pop_size, derive_seed(seed, "grid-solve", &[i as u64]));
            let (pop, _) = solve_fixed_point(alpha, gamma, u, &opts)?;
            let p_max = poisson_cutoff(gamma, 1e-9);
            estimate_g(
                gamma,
                alpha,
                u,
                &pop,
                n_mc,
                p_max,
                derive_seed(seed, "grid-g", &[i as u64]),
            )
        })
        .collect::<Result<Vec<_>>>()?;

    let f0 = std::f64::consts::LN_2 + alpha * u.eval(0.0);
    let g_means: Vec<f64> = g_values.iter().map(|&(g, _)| g).collect();
    let mut f_values = cumulative_simpson(h, &g_means);
    for f in f_values.iter_mut() {
        *f += f0;
    }
    // Triangle bound: each node's G error integrates over the interval.
    let mut f_errors = vec![0.0f64; n_grid];
    for i in 1..n_grid {
        f_errors[i] = f_errors[i - 1] + h * 0.5 * (g_values[i - 1].1 + g_values[i].1);
    }

    // Half-resolution comparison needs the coarse grid to keep an even
    // interval count.
    let richardson_delta = if (n_grid - 1) % 4 == 0 {
        let coarse: Vec<f64> = g_means.iter().step_by(2).copied().collect();
        let coarse_f = cumulative_simpson(2.0 * h, &coarse);
        Some((f_values[n_grid - 1] - (f0 + coarse_f[coarse.len() - 1])).abs())
    } else {
        None
    };

    Ok(RsCurve {
        gamma_grid,
        g_values,
        f_values,
        f_errors,
        f0,
        richardson_delta,
    })
}

/// One row of the finite-size comparison.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonRow {
    pub n: usize,
    pub pn_mean: f64,
    pub pn_stderr: f64,
    pub f_value: f64,
    pub abs_diff: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Least-squares slope of `abs_diff` against `1/N`.
    pub fitted_decay: f64,
}

/// Estimate `p_N` by exact-enumeration disorder averaging for each listed
/// `N` and compare against the curve value at `gamma`.
pub fn compare_pn_vs_f(
    alpha: f64,
    u: &BoundedPotential,
    gamma: f64,
    n_list: &[usize],
    n_disorder: usize,
    curve: &RsCurve,
    seed: u64,
) -> Result<ComparisonReport> {
    if n_list.is_empty() {
        return Err(Error::Parameter("empty N list".into()));
    }
    let f_value = curve.f_at(gamma)?;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let params = ModelParams::new(n, alpha, gamma)?;
        let (stat, _) = disorder_average(
            &params,
            u,
            Statistic::FreeEnergyPerSpin,
            n_disorder,
            derive_seed(seed, "compare-pn", &[n as u64]),
        )?;
        rows.push(ComparisonRow {
            n,
            pn_mean: stat.mean,
            pn_stderr: stat.std_error,
            f_value,
            abs_diff: (stat.mean - f_value).abs(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| 1.0 / r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.abs_diff).collect();
    Ok(ComparisonReport {
        rows,
        fitted_decay: least_squares_slope(&xs, &ys),
    })
}

fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

/// Distances between the disorder law of the first `m` magnetizations and
/// `m` independent copies of the fixed-point law.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MagnetizationLawReport {
    pub joint_w1: f64,
    pub marginal_w1: f64,
    /// Exactly enumerated `(⟨σ_1⟩, …, ⟨σ_m⟩)` per disorder sample.
    pub empirical: Vec<Vec<f64>>,
    /// i.i.d. m-vectors drawn from the population.
    pub reference: Vec<Vec<f64>>,
}

/// Collect magnetization vectors over disorder by exact enumeration, then
/// measure the joint W1 against i.i.d. draws from the population and the
/// pooled marginal W1 against the population itself.
pub fn magnetization_law_test(
    alpha: f64,
    u: &BoundedPotential,
    gamma: f64,
    n: usize,
    m: usize,
    n_disorder: usize,
    pop: &PopulationMeasure,
    seed: u64,
) -> Result<MagnetizationLawReport> {
    if n_disorder > MAX_JOINT_SAMPLES {
        return Err(Error::Capacity(format!(
            "joint distance caps n_disorder at {MAX_JOINT_SAMPLES}, got {n_disorder}"
        )));
    }
    if pop.is_empty() {
        return Err(Error::Parameter("population must be nonempty".into()));
    }
    let params = ModelParams::new(n, alpha, gamma)?;
    let empirical = disorder_magnetizations(
        &params,
        u,
        m,
        n_disorder,
        derive_seed(seed, "maglaw-disorder", &[]),
    )?;
    let mut rng = substream(seed, "maglaw-reference", &[]);
    let reference: Vec<Vec<f64>> = (0..n_disorder)
        .map(|_| {
            (0..m)
                .map(|_| pop.values[rand::Rng::random_range(&mut rng, 0..pop.values.len())])
                .collect()
        })
        .collect();
    let joint_w1 = w1_joint(&empirical, &reference)?;
    let pooled: Vec<f64> = empirical.iter().flatten().copied().collect();
    let marginal_w1 = w1_cdf(&pooled, &pop.values)?;
    Ok(MagnetizationLawReport {
        joint_w1,
        marginal_w1,
        empirical,
        reference,
    })
}
