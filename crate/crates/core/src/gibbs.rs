//! Exact Gibbs computations for small systems by Gray-code enumeration.
//!
//! A single instance with `N <= 24` is summed exactly over all `2^N`
//! configurations. Configurations are visited in Gray-code order so each
//! step flips one spin and touches only the constraints containing it:
//! the per-constraint argument changes by `±2 g_{i,k}` and the energy is
//! updated incrementally instead of being recomputed.

use rayon::prelude::*;

use crate::model::{BoundedPotential, Instance, ModelParams};
use crate::rng::substream;
use crate::{Error, Result};

/// Hard cap for full enumeration: 2^24 ~ 16.8M configurations keeps one
/// instance under a second.
pub const MAX_ENUM_SPINS: usize = 24;
/// Cap for the cavity check, which enumerates both sides.
pub const MAX_CAVITY_SPINS: usize = 20;

/// Exact summary of one instance: `log Z`, all single-spin Gibbs averages,
/// and the requested pair averages.
#[derive(Debug, Clone)]
pub struct GibbsSummary {
    pub log_z: f64,
    /// `<sigma_i>` for every site.
    pub magnetizations: Vec<f64>,
    /// `((i, j), <sigma_i sigma_j>)` in request order.
    pub pair_correlations: Vec<((usize, usize), f64)>,
}

/// A polynomial in finitely many spins, as `(coefficient, sites)` terms.
/// Keeps both sides of the cavity identity exactly enumerable.
#[derive(Debug, Clone)]
pub struct SpinPolynomial {
    pub terms: Vec<(f64, Vec<usize>)>,
}

impl SpinPolynomial {
    /// The constant function 1.
    pub fn one() -> Self {
        SpinPolynomial {
            terms: vec![(1.0, vec![])],
        }
    }

    /// The single spin `sigma_i`.
    pub fn site(i: usize) -> Self {
        SpinPolynomial {
            terms: vec![(1.0, vec![i])],
        }
    }

    /// The monomial `prod_{i in sites} sigma_i`.
    pub fn monomial(sites: &[usize]) -> Self {
        SpinPolynomial {
            terms: vec![(1.0, sites.to_vec())],
        }
    }

    /// Evaluate on a configuration encoded as bits (bit i set = spin up).
    fn eval_bits(&self, bits: usize) -> f64 {
        self.terms
            .iter()
            .map(|(coeff, sites)| {
                let mut sign = 1.0;
                for &i in sites {
                    if bits & (1 << i) == 0 {
                        sign = -sign;
                    }
                }
                coeff * sign
            })
            .sum()
    }

    fn max_site(&self) -> Option<usize> {
        self.terms
            .iter()
            .flat_map(|(_, sites)| sites.iter().copied())
            .max()
    }
}

/// Per-site adjacency over the unmasked (`eta = 1`) constraints.
fn adjacency(instance: &Instance) -> Vec<Vec<(usize, f64)>> {
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); instance.params.n];
    for (k, row) in instance.constraints.iter().enumerate() {
        if instance.params.eta[k] == 0 {
            continue;
        }
        for &(i, g) in row {
            adj[i].push((k, g));
        }
    }
    adj
}

/// Shared enumeration core. Tracks `Z`, the positive-side weight per
/// requested site, and the equal-sign weight per requested pair, with a
/// running max-shift so `exp` never overflows.
///
/// Sites are relabeled so that coupled sites occupy the high Gray-code bit
/// positions, which flip geometrically rarely; between those flips the
/// energy is constant and the Boltzmann weight is reused instead of
/// re-exponentiated.
fn enumerate_tracked(
    instance: &Instance,
    u: &BoundedPotential,
    sites: &[usize],
    pairs: &[(usize, usize)],
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let n = instance.params.n;
    if n > MAX_ENUM_SPINS {
        return Err(Error::Capacity(format!(
            "exact enumeration needs N <= {MAX_ENUM_SPINS}, got {n}; use a sampling method"
        )));
    }
    for &s in sites {
        if s >= n {
            return Err(Error::Parameter(format!("tracked site {s} out of range")));
        }
    }
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(Error::Parameter(format!("tracked pair ({i},{j}) out of range")));
        }
    }

    let adj = adjacency(instance);
    let m = instance.params.m;

    // Low bit positions flip 2^(n-1-j) times more often than high ones, so
    // decoupled sites go low and coupled sites go high.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| adj[i].len());
    let mut bit_of_site = vec![0usize; n];
    for (bit, &site) in order.iter().enumerate() {
        bit_of_site[site] = bit;
    }
    // Adjacency in bit space.
    let mut bit_adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for (site, entries) in adj.iter().enumerate() {
        bit_adj[bit_of_site[site]] = entries.clone();
    }

    // Arguments at the all-down configuration (Gray code 0).
    let mut args: Vec<f64> = vec![0.0; m];
    for (k, row) in instance.constraints.iter().enumerate() {
        args[k] = -row.iter().map(|&(_, g)| g).sum::<f64>();
    }
    let mut energy: f64 = instance
        .constraints
        .iter()
        .enumerate()
        .filter(|(k, _)| instance.params.eta[*k] == 1)
        .map(|(k, _)| u.eval(args[k]))
        .sum();

    let site_masks: Vec<usize> = sites.iter().map(|&s| 1usize << bit_of_site[s]).collect();
    let pair_masks: Vec<usize> = pairs
        .iter()
        .map(|&(i, j)| (1usize << bit_of_site[i]) | (1usize << bit_of_site[j]))
        .collect();

    let full: usize = 1 << n;
    let mut bits: usize = 0;
    let mut shift = energy;
    let mut z = 0.0f64;
    let mut w = 1.0f64;
    let mut site_up = vec![0.0f64; sites.len()];
    let mut pair_same = vec![0.0f64; pairs.len()];

    for code in 0..full {
        if code > 0 {
            let j = code.trailing_zeros() as usize;
            bits ^= 1 << j;
            if !bit_adj[j].is_empty() {
                let spin_new = if bits & (1 << j) != 0 { 1.0 } else { -1.0 };
                for &(k, g) in &bit_adj[j] {
                    energy -= u.eval(args[k]);
                    args[k] += 2.0 * g * spin_new;
                    energy += u.eval(args[k]);
                }
                if energy > shift {
                    let factor = (shift - energy).exp();
                    z *= factor;
                    for v in site_up.iter_mut() {
                        *v *= factor;
                    }
                    for v in pair_same.iter_mut() {
                        *v *= factor;
                    }
                    shift = energy;
                }
                w = (energy - shift).exp();
            }
        }
        z += w;
        for (t, &mask) in site_masks.iter().enumerate() {
            if bits & mask != 0 {
                site_up[t] += w;
            }
        }
        for (t, &mask) in pair_masks.iter().enumerate() {
            // Same sign: both bits set or both clear.
            let hit = bits & mask;
            if hit == 0 || hit == mask {
                pair_same[t] += w;
            }
        }
    }

    let log_z = shift + z.ln();
    let mags: Vec<f64> = site_up
        .iter()
        .map(|&up| ((2.0 * up - z) / z).clamp(-1.0, 1.0))
        .collect();
    let corrs: Vec<f64> = pair_same
        .iter()
        .map(|&same| ((2.0 * same - z) / z).clamp(-1.0, 1.0))
        .collect();
    Ok((log_z, mags, corrs))
}

/// Exact `log Z`, all magnetizations, and the requested pair correlations.
pub fn enumerate_gibbs(
    instance: &Instance,
    u: &BoundedPotential,
    want_pairs: &[(usize, usize)],
) -> Result<GibbsSummary> {
    let n = instance.params.n;
    let sites: Vec<usize> = (0..n).collect();
    let (log_z, magnetizations, corrs) = enumerate_tracked(instance, u, &sites, want_pairs)?;
    Ok(GibbsSummary {
        log_z,
        magnetizations,
        pair_correlations: want_pairs.iter().copied().zip(corrs).collect(),
    })
}

/// Both sides of the one-spin cavity identity.
///
/// The left side is `<f>` under the full `N`-spin Gibbs measure. The right
/// side isolates the last spin: constraints containing it move into the
/// correction factor `xi`, the rest form the reduced `(N-1)`-spin
/// Hamiltonian, and `Av` averages the last spin over `±1`:
/// `<f> = <Av f xi>_- / <Av xi>_-`.
/// Both sides are enumerated independently; the identity is algebraic, so
/// they agree to rounding.
pub fn cavity_check(
    instance: &Instance,
    u: &BoundedPotential,
    f: &SpinPolynomial,
) -> Result<(f64, f64)> {
    let n = instance.params.n;
    if n > MAX_CAVITY_SPINS {
        return Err(Error::Capacity(format!(
            "cavity check enumerates both sides; needs N <= {MAX_CAVITY_SPINS}, got {n}"
        )));
    }
    if n < 2 {
        return Err(Error::Parameter("cavity check needs N >= 2".into()));
    }
    if let Some(max_site) = f.max_site() {
        if max_site >= n {
            return Err(Error::Parameter(format!("f references site {max_site} >= N")));
        }
    }

    let last = n - 1;

    // Left side: plain enumeration of <f> over all 2^N configurations.
    let (mut num_full, mut den_full, mut emax_full) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut energies: Vec<f64> = Vec::with_capacity(1 << n);
    for bits in 0..(1usize << n) {
        let mut e = 0.0;
        for (k, row) in instance.constraints.iter().enumerate() {
            if instance.params.eta[k] == 0 {
                continue;
            }
            let arg: f64 = row
                .iter()
                .map(|&(i, g)| if bits & (1 << i) != 0 { g } else { -g })
                .sum();
            e += u.eval(arg);
        }
        emax_full = emax_full.max(e);
        energies.push(e);
    }
    for (bits, &e) in energies.iter().enumerate() {
        let w = (e - emax_full).exp();
        den_full += w;
        num_full += f.eval_bits(bits) * w;
    }
    let lhs = num_full / den_full;

    // Right side: constraints are split on whether the last spin is active.
    let mut cavity_rows: Vec<&[(usize, f64)]> = Vec::new();
    let mut reduced_rows: Vec<&[(usize, f64)]> = Vec::new();
    for (k, row) in instance.constraints.iter().enumerate() {
        if instance.params.eta[k] == 0 {
            continue;
        }
        if row.iter().any(|&(i, _)| i == last) {
            cavity_rows.push(row);
        } else {
            reduced_rows.push(row);
        }
    }

    let half = 1usize << (n - 1);
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    let mut shift = f64::NEG_INFINITY;
    // Reduced energies first, for the max shift.
    let mut reduced_e: Vec<f64> = Vec::with_capacity(half);
    for bits in 0..half {
        let mut e = 0.0;
        for row in &reduced_rows {
            let arg: f64 = row
                .iter()
                .map(|&(i, g)| if bits & (1 << i) != 0 { g } else { -g })
                .sum();
            e += u.eval(arg);
        }
        shift = shift.max(e);
        reduced_e.push(e);
    }
    for bits in 0..half {
        let w_minus = (reduced_e[bits] - shift).exp();
        let mut av_f_xi = 0.0;
        let mut av_xi = 0.0;
        for sigma_last in [-1.0f64, 1.0] {
            let mut log_xi = 0.0;
            for row in &cavity_rows {
                let arg: f64 = row
                    .iter()
                    .map(|&(i, g)| {
                        if i == last {
                            g * sigma_last
                        } else if bits & (1 << i) != 0 {
                            g
                        } else {
                            -g
                        }
                    })
                    .sum();
                log_xi += u.eval(arg);
            }
            let xi = log_xi.exp();
            let full_bits = if sigma_last > 0.0 { bits | (1 << last) } else { bits };
            av_f_xi += 0.5 * f.eval_bits(full_bits) * xi;
            av_xi += 0.5 * xi;
        }
        num += w_minus * av_f_xi;
        den += w_minus * av_xi;
    }
    let rhs = num / den;
    Ok((lhs, rhs))
}

/// Scalar statistics of one enumerated instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Statistic {
    /// `(1/N) log Z` — the finite-size free energy.
    FreeEnergyPerSpin,
    /// `|<sigma_1 sigma_2> - <sigma_1><sigma_2>|`.
    Decorrelation,
    /// `<sigma_1>`.
    Magnetization,
}

impl Statistic {
    pub fn name(&self) -> &'static str {
        match self {
            Statistic::FreeEnergyPerSpin => "pN",
            Statistic::Decorrelation => "decorrelation",
            Statistic::Magnetization => "magnetization",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "pN" => Ok(Statistic::FreeEnergyPerSpin),
            "decorrelation" => Ok(Statistic::Decorrelation),
            "magnetization" => Ok(Statistic::Magnetization),
            other => Err(Error::Parameter(format!(
                "unknown statistic `{other}` (expected pN|decorrelation|magnetization)"
            ))),
        }
    }
}

/// Mean and standard error of a statistic over independent disorder draws.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DisorderStatistic {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub n_samples: usize,
}

fn statistic_of_instance(
    instance: &Instance,
    u: &BoundedPotential,
    stat: Statistic,
) -> Result<f64> {
    match stat {
        Statistic::FreeEnergyPerSpin => {
            let (log_z, _, _) = enumerate_tracked(instance, u, &[], &[])?;
            Ok(log_z / instance.params.n as f64)
        }
        Statistic::Decorrelation => {
            if instance.params.n < 2 {
                return Err(Error::Parameter("decorrelation needs N >= 2".into()));
            }
            let (_, mags, corrs) = enumerate_tracked(instance, u, &[0, 1], &[(0, 1)])?;
            Ok((corrs[0] - mags[0] * mags[1]).abs())
        }
        Statistic::Magnetization => {
            let (_, mags, _) = enumerate_tracked(instance, u, &[0], &[])?;
            Ok(mags[0])
        }
    }
}

/// Mean and standard error over `n_samples` independent instances, plus the
/// per-sample values (the CSV payload). Samples are independent parallel
/// tasks seeded by `(seed, sample index)`, so the result does not depend on
/// the worker count.
pub fn disorder_average(
    params: &ModelParams,
    u: &BoundedPotential,
    stat: Statistic,
    n_samples: usize,
    seed: u64,
) -> Result<(DisorderStatistic, Vec<f64>)> {
    if n_samples < 2 {
        return Err(Error::Parameter("disorder average needs n_samples >= 2".into()));
    }
    let values: Vec<f64> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, "disorder", &[s as u64]);
            let instance = crate::model::sample_instance(params, &mut rng)?;
            statistic_of_instance(&instance, u, stat)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std_error) = mean_and_std_error(&values);
    Ok((
        DisorderStatistic {
            name: stat.name().to_string(),
            mean,
            std_error,
            n_samples,
        },
        values,
    ))
}

/// Joint magnetization vectors `(<sigma_1>, ..., <sigma_m>)` over
/// independent disorder draws, by exact enumeration.
pub fn disorder_magnetizations(
    params: &ModelParams,
    u: &BoundedPotential,
    m: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if m == 0 || m > params.n {
        return Err(Error::Parameter(format!(
            "magnetization vector length {m} outside 1..=N"
        )));
    }
    let sites: Vec<usize> = (0..m).collect();
    (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = substream(seed, "disorder", &[s as u64]);
            let instance = crate::model::sample_instance(params, &mut rng)?;
            let (_, mags, _) = enumerate_tracked(&instance, u, &sites, &[])?;
            Ok(mags)
        })
        .collect()
}

/// Two-pass mean and standard error, shifted by the first value so a
/// constant sample reports exactly zero spread.
pub fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let base = values[0];
    let shifted_mean = values.iter().map(|v| v - base).sum::<f64>() / n as f64;
    let mean = base + shifted_mean;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values
        .iter()
        .map(|v| {
            let d = (v - base) - shifted_mean;
            d * d
        })
        .sum::<f64>()
        / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}
