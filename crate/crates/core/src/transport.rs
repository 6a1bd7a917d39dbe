//! Wasserstein-1 distances between empirical samples.
//!
//! Three variants cover everything the experiments need: the sorted form
//! (exact for equal-size 1-D samples), the CDF step integral (exact for
//! unequal sizes), and the exact optimal-assignment distance on small joint
//! samples in `[-1,1]^m` under the `sum_d |x_d - y_d|` ground cost.

use crate::{Error, Result};

/// Caps for the joint distance: `O(n^3)` assignment stays comfortably under
/// a second at `n = 512`, and the experiments never need more than eight
/// coordinates.
pub const MAX_JOINT_SAMPLES: usize = 512;
pub const MAX_JOINT_DIM: usize = 8;

fn check_finite(xs: &[f64]) -> Result<()> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(Error::Parameter("sample contains a non-finite value".into()));
    }
    Ok(())
}

/// Compensated (Neumaier) summation; keeps the metric identities sharp at
/// the 1e-14 level even for large samples.
fn compensated_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Exact W1 between two equal-size 1-D empirical samples:
/// `(1/n) * sum_i |a_(i) - b_(i)|` over the sorted order.
pub fn w1_sorted(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("w1_sorted: samples must be nonempty".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "w1_sorted: sizes differ ({} vs {}); use w1_cdf",
            a.len(),
            b.len()
        )));
    }
    check_finite(a)?;
    check_finite(b)?;
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let total = compensated_sum(sa.iter().zip(sb.iter()).map(|(x, y)| (x - y).abs()));
    Ok(total / a.len() as f64)
}

/// W1 via the step integral of `|F_a - F_b|` over the merged breakpoints.
/// Handles unequal sizes; agrees with [`w1_sorted`] when sizes match.
pub fn w1_cdf(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("w1_cdf: samples must be nonempty".into()));
    }
    check_finite(a)?;
    check_finite(b)?;
    let mut pts: Vec<(f64, u8)> = a
        .iter()
        .map(|&x| (x, 0u8))
        .chain(b.iter().map(|&x| (x, 1u8)))
        .collect();
    pts.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ca, mut cb) = (0usize, 0usize);
    let mut last = pts[0].0;
    let mut segments = Vec::with_capacity(pts.len());
    for (x, tag) in pts {
        let gap = x - last;
        if gap > 0.0 {
            let fa = ca as f64 / na;
            let fb = cb as f64 / nb;
            segments.push(gap * (fa - fb).abs());
        }
        last = x;
        if tag == 0 {
            ca += 1;
        } else {
            cb += 1;
        }
    }
    Ok(compensated_sum(segments.into_iter()))
}

/// Exact W1 between equal-size samples of `[-1,1]^m` points under the
/// `sum_d |x_d - y_d|` ground cost, by optimal assignment.
pub fn w1_joint(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Parameter("w1_joint: samples must be nonempty".into()));
    }
    if a.len() != b.len() {
        return Err(Error::Parameter(format!(
            "w1_joint: sizes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    let m = a[0].len();
    if n > MAX_JOINT_SAMPLES {
        return Err(Error::Capacity(format!(
            "w1_joint: {n} samples exceeds cap {MAX_JOINT_SAMPLES}; \
             per-coordinate marginal distances give a lower bound"
        )));
    }
    if m == 0 || m > MAX_JOINT_DIM {
        return Err(Error::Capacity(format!(
            "w1_joint: dimension {m} outside 1..={MAX_JOINT_DIM}"
        )));
    }
    for p in a.iter().chain(b.iter()) {
        if p.len() != m {
            return Err(Error::Parameter("w1_joint: ragged sample".into()));
        }
        check_finite(p)?;
    }
    let mut cost = vec![0.0f64; n * n];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            cost[i * n + j] = x
                .iter()
                .zip(y.iter())
                .map(|(xi, yi)| (xi - yi).abs())
                .sum();
        }
    }
    let assignment = min_cost_assignment(&cost, n);
    let total = compensated_sum(
        assignment
            .iter()
            .enumerate()
            .map(|(i, &j)| cost[i * n + j]),
    );
    Ok(total / n as f64)
}

/// Minimum-cost perfect assignment on an `n x n` matrix by the
/// shortest-augmenting-path method with dual potentials (O(n^3)).
/// Returns `row -> column`.
fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    // 1-based arrays; column 0 is the virtual root of each augmenting search.
    let inf = f64::INFINITY;
    let mut pot_row = vec![0.0; n + 1];
    let mut pot_col = vec![0.0; n + 1];
    let mut matched_row = vec![0usize; n + 1]; // matched_row[j] = row assigned to column j
    let mut prev_col = vec![0usize; n + 1];

    for row in 1..=n {
        matched_row[0] = row;
        let mut j0 = 0usize;
        let mut min_slack = vec![inf; n + 1];
        let mut visited = vec![false; n + 1];
        loop {
            visited[j0] = true;
            let i0 = matched_row[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            for j in 1..=n {
                if visited[j] {
                    continue;
                }
                let reduced = cost[(i0 - 1) * n + (j - 1)] - pot_row[i0] - pot_col[j];
                if reduced < min_slack[j] {
                    min_slack[j] = reduced;
                    prev_col[j] = j0;
                }
                if min_slack[j] < delta {
                    delta = min_slack[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if visited[j] {
                    pot_row[matched_row[j]] += delta;
                    pot_col[j] -= delta;
                } else {
                    min_slack[j] -= delta;
                }
            }
            j0 = j1;
            if matched_row[j0] == 0 {
                break;
            }
        }
        // Augment along the recorded path.
        loop {
            let j1 = prev_col[j0];
            matched_row[j0] = matched_row[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if matched_row[j] > 0 {
            row_to_col[matched_row[j] - 1] = j - 1;
        }
    }
    row_to_col
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn sorted_fixed_examples() {
        assert_eq!(w1_sorted(&[0.3, -0.1], &[0.3, -0.1]).unwrap(), 0.0);
        assert_eq!(w1_sorted(&[-1.0, 1.0], &[0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(w1_sorted(&[0.5], &[-0.25]).unwrap(), 0.75);
        assert!(w1_sorted(&[0.0], &[0.0, 0.0]).is_err());
        assert!(w1_sorted(&[], &[]).is_err());
    }

    #[test]
    fn cdf_fixed_examples() {
        assert_eq!(w1_cdf(&[0.0], &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(w1_cdf(&[-1.0], &[1.0]).unwrap(), 2.0);
        // Two copies of the same distribution at different sizes.
        assert_eq!(w1_cdf(&[0.5, -0.5], &[0.5, -0.5, 0.5, -0.5]).unwrap(), 0.0);
    }

    #[test]
    fn joint_fixed_examples() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        let b = vec![vec![1.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(w1_joint(&a, &b).unwrap(), 0.0);
        assert_eq!(w1_joint(&a, &a).unwrap(), 0.0);
        let c = vec![vec![0.5, 0.0], vec![1.0, 1.0]];
        assert!((w1_joint(&a, &c).unwrap() - 0.25).abs() < 1e-15);
        assert!(matches!(
            w1_joint(&vec![vec![0.0; 9]; 2], &vec![vec![0.0; 9]; 2]),
            Err(Error::Capacity(_))
        ));
    }

    /// Brute-force assignment over all permutations (n <= 6) as the oracle
    /// for the shortest-augmenting-path solver.
    fn brute_force_min_cost(cost: &[f64], n: usize) -> f64 {
        fn rec(cost: &[f64], n: usize, row: usize, used: &mut [bool], acc: f64, best: &mut f64) {
            if row == n {
                if acc < *best {
                    *best = acc;
                }
                return;
            }
            if acc >= *best {
                return;
            }
            for j in 0..n {
                if !used[j] {
                    used[j] = true;
                    rec(cost, n, row + 1, used, acc + cost[row * n + j], best);
                    used[j] = false;
                }
            }
        }
        let mut best = f64::INFINITY;
        rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
        best
    }

    #[test]
    fn assignment_matches_permutation_oracle() {
        let mut rng = substream(31, "lap", &[]);
        for trial in 0..200 {
            let n = 2 + trial % 5;
            let cost: Vec<f64> = (0..n * n).map(|_| rng.random_range(0.0..4.0)).collect();
            let assignment = min_cost_assignment(&cost, n);
            let solver: f64 = assignment
                .iter()
                .enumerate()
                .map(|(i, &j)| cost[i * n + j])
                .sum();
            let oracle = brute_force_min_cost(&cost, n);
            assert!(
                (solver - oracle).abs() < 1e-12,
                "n={n}: solver {solver} vs oracle {oracle}"
            );
            // Must be a permutation.
            let mut seen = vec![false; n];
            for &j in &assignment {
                assert!(!seen[j]);
                seen[j] = true;
            }
        }
    }

    #[test]
    fn cdf_equals_sorted_on_equal_sizes() {
        let mut rng = substream(32, "cdf", &[]);
        for trial in 0..100u64 {
            let n = 1 + (trial as usize * 7) % 100;
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = w1_sorted(&a, &b).unwrap();
            let c = w1_cdf(&a, &b).unwrap();
            assert!((s - c).abs() < 1e-14, "n={n}: {s} vs {c}");
        }
    }

    #[test]
    fn joint_equals_sorted_in_one_dimension() {
        let mut rng = substream(33, "joint1d", &[]);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let aj: Vec<Vec<f64>> = a.iter().map(|&x| vec![x]).collect();
            let bj: Vec<Vec<f64>> = b.iter().map(|&x| vec![x]).collect();
            let s = w1_sorted(&a, &b).unwrap();
            let j = w1_joint(&aj, &bj).unwrap();
            assert!((s - j).abs() < 1e-12, "{s} vs {j}");
        }
    }

    #[test]
    fn joint_dominates_marginals() {
        let mut rng = substream(34, "marg", &[]);
        for _ in 0..40 {
            let n = rng.random_range(2..30);
            let m = rng.random_range(1..5usize);
            let a: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let b: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..m).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let joint = w1_joint(&a, &b).unwrap();
            for d in 0..m {
                let ad: Vec<f64> = a.iter().map(|p| p[d]).collect();
                let bd: Vec<f64> = b.iter().map(|p| p[d]).collect();
                let marg = w1_sorted(&ad, &bd).unwrap();
                assert!(
                    joint >= marg - 1e-12,
                    "joint {joint} below marginal {marg} at coordinate {d}"
                );
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metric_axioms_sorted(
            a in prop::collection::vec(-1.0f64..1.0, 1..60),
            b in prop::collection::vec(-1.0f64..1.0, 1..60),
            c in prop::collection::vec(-1.0f64..1.0, 1..60),
        ) {
            let n = a.len().min(b.len()).min(c.len());
            let (a, b, c) = (&a[..n], &b[..n], &c[..n]);
            let dab = w1_sorted(a, b).unwrap();
            let dba = w1_sorted(b, a).unwrap();
            prop_assert!((dab - dba).abs() < 1e-14);
            prop_assert_eq!(w1_sorted(a, a).unwrap(), 0.0);
            let dac = w1_sorted(a, c).unwrap();
            let dbc = w1_sorted(b, c).unwrap();
            prop_assert!(dac <= dab + dbc + 1e-12);
        }

        #[test]
        fn metric_axioms_cdf(
            a in prop::collection::vec(-1.0f64..1.0, 1..40),
            b in prop::collection::vec(-1.0f64..1.0, 1..40),
            c in prop::collection::vec(-1.0f64..1.0, 1..40),
        ) {
            let dab = w1_cdf(&a, &b).unwrap();
            prop_assert!((dab - w1_cdf(&b, &a).unwrap()).abs() < 1e-14);
            prop_assert_eq!(w1_cdf(&a, &a).unwrap(), 0.0);
            prop_assert!(w1_cdf(&a, &c).unwrap() <= dab + w1_cdf(&b, &c).unwrap() + 1e-12);
        }

        #[test]
        fn sorted_scales_homogeneously(
            a in prop::collection::vec(-1.0f64..1.0, 1..50),
            b in prop::collection::vec(-1.0f64..1.0, 1..50),
            scale in -1.0f64..1.0,
        ) {
            let n = a.len().min(b.len());
            let (a, b) = (&a[..n], &b[..n]);
            let base = w1_sorted(a, b).unwrap();
            let sa: Vec<f64> = a.iter().map(|x| scale * x).collect();
            let sb: Vec<f64> = b.iter().map(|x| scale * x).collect();
            let scaled = w1_sorted(&sa, &sb).unwrap();
            prop_assert!((scaled - scale.abs() * base).abs() < 1e-14);
        }
    }
}
