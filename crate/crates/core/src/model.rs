//! Model definition: bounded potentials, parameters, disorder instances,
//! Hamiltonian evaluation and the high-temperature smallness conditions.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Deserialize;

use crate::{Error, Result};

/// Closed family of bounded potentials with analytically known sup norm.
///
/// Keeping the family closed (instead of accepting arbitrary callables)
/// means `sup_norm` is always exact, which the condition checks and the
/// contraction bounds rely on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundedPotential {
    /// `u(x) = 0`.
    Zero,
    /// `u(x) = c`.
    Constant(f64),
    /// `u(x) = a * tanh(b*x)`.
    ScaledTanh { a: f64, b: f64 },
    /// `u(x) = a * exp(-x^2 / w^2)`, `w > 0`.
    GaussianBump { a: f64, w: f64 },
    /// `u(x) = a / (1 + exp(-kappa*x))`.
    SmoothStep { a: f64, kappa: f64 },
}

impl BoundedPotential {
    /// Evaluate `u(x)`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            BoundedPotential::Zero => 0.0,
            BoundedPotential::Constant(c) => c,
            BoundedPotential::ScaledTanh { a, b } => a * (b * x).tanh(),
            BoundedPotential::GaussianBump { a, w } => a * (-(x * x) / (w * w)).exp(),
            BoundedPotential::SmoothStep { a, kappa } => a / (1.0 + (-kappa * x).exp()),
        }
    }

    /// The sup norm `U_inf = sup_x |u(x)|`, exact per variant.
    pub fn sup_norm(&self) -> f64 {
        match *self {
            BoundedPotential::Zero => 0.0,
            BoundedPotential::Constant(c) => c.abs(),
            BoundedPotential::ScaledTanh { a, .. } => a.abs(),
            BoundedPotential::GaussianBump { a, .. } => a.abs(),
            BoundedPotential::SmoothStep { a, .. } => a.abs(),
        }
    }

    /// True when `u(-x) = u(x)` for all `x`.
    pub fn is_even(&self) -> bool {
        matches!(
            self,
            BoundedPotential::Zero
                | BoundedPotential::Constant(_)
                | BoundedPotential::GaussianBump { .. }
        )
    }

    /// Parse the CLI descriptor mini-format `kind[:arg1[:arg2]]`.
    ///
    /// `zero`, `const:c`, `tanh:a:b`, `bump:a:w`, `step:a:kappa`.
    pub fn parse(descriptor: &str) -> Result<Self> {
        let parts: Vec<&str> = descriptor.split(':').collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|_| {
                Error::Parameter(format!("bad number `{s}` in potential `{descriptor}`"))
            })
        };
        let arity = |want: usize| -> Result<()> {
            if parts.len() != want + 1 {
                return Err(Error::Parameter(format!(
                    "potential `{}` takes {} argument(s), got {}",
                    parts[0],
                    want,
                    parts.len() - 1
                )));
            }
            Ok(())
        };
        let pot = match parts[0] {
            "zero" => {
                arity(0)?;
                BoundedPotential::Zero
            }
            "const" => {
                arity(1)?;
                BoundedPotential::Constant(num(parts[1])?)
            }
            "tanh" => {
                arity(2)?;
                BoundedPotential::ScaledTanh {
                    a: num(parts[1])?,
                    b: num(parts[2])?,
                }
            }
            "bump" => {
                arity(2)?;
                let w = num(parts[2])?;
                if w <= 0.0 {
                    return Err(Error::Parameter(format!("bump width must be > 0, got {w}")));
                }
                BoundedPotential::GaussianBump {
                    a: num(parts[1])?,
                    w,
                }
            }
            "step" => {
                arity(2)?;
                BoundedPotential::SmoothStep {
                    a: num(parts[1])?,
                    kappa: num(parts[2])?,
                }
            }
            other => {
                return Err(Error::Parameter(format!(
                    "unknown potential kind `{other}` (expected zero|const|tanh|bump|step)"
                )))
            }
        };
        Ok(pot)
    }

    /// The descriptor string `parse` accepts; used in manifests and file headers.
    pub fn descriptor(&self) -> String {
        match *self {
            BoundedPotential::Zero => "zero".to_string(),
            BoundedPotential::Constant(c) => format!("const:{c}"),
            BoundedPotential::ScaledTanh { a, b } => format!("tanh:{a}:{b}"),
            BoundedPotential::GaussianBump { a, w } => format!("bump:{a}:{w}"),
            BoundedPotential::SmoothStep { a, kappa } => format!("step:{a}:{kappa}"),
        }
    }
}

/// Parameters of one model: `N` spins, `M = round(alpha*N)` constraints,
/// dilution `gamma`, and the 0/1 constraint mask `eta`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub alpha: f64,
    pub m: usize,
    pub gamma: f64,
    pub eta: Vec<u8>,
}

impl ModelParams {
    /// Build from `(N, alpha, gamma)` with `M = round(alpha*N)` and an
    /// all-ones mask.
    pub fn new(n: usize, alpha: f64, gamma: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Parameter("N must be >= 1".into()));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha must be in (0,1), got {alpha}")));
        }
        if !(gamma >= 0.0) {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {gamma}")));
        }
        let m = (alpha * n as f64).round() as usize;
        if m == 0 {
            return Err(Error::Parameter(format!(
                "round(alpha*N) = 0 for alpha={alpha}, N={n}; need at least one constraint"
            )));
        }
        Ok(ModelParams {
            n,
            alpha,
            m,
            gamma,
            eta: vec![1; m],
        })
    }

    /// Build from explicit `(N, M, gamma)`, setting `alpha = M/N`.
    ///
    /// Desk-scale oracles sometimes want `M` pinned directly, so this
    /// constructor allows any `M >= 1` up to `N` and does not apply the
    /// `(0,1)` range check on `alpha`.
    pub fn with_m(n: usize, m: usize, gamma: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Parameter("N and M must be >= 1".into()));
        }
        if m > n {
            return Err(Error::Parameter(format!("M = {m} exceeds N = {n}")));
        }
        if !(gamma >= 0.0) {
            return Err(Error::Parameter(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(ModelParams {
            n,
            alpha: m as f64 / n as f64,
            m,
            gamma,
            eta: vec![1; m],
        })
    }

    /// Replace the constraint mask. Length must equal `M`; entries 0/1.
    pub fn with_eta(mut self, eta: Vec<u8>) -> Result<Self> {
        if eta.len() != self.m {
            return Err(Error::Parameter(format!(
                "eta length {} != M = {}",
                eta.len(),
                self.m
            )));
        }
        if eta.iter().any(|&e| e > 1) {
            return Err(Error::Parameter("eta entries must be 0 or 1".into()));
        }
        self.eta = eta;
        Ok(self)
    }
}

/// One disorder realization: for each constraint `k`, the active sites `i`
/// (those with Bernoulli(`gamma/N`) mask equal to one) and their standard
/// Gaussian weights. Stored sparse; expected density is `gamma/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub params: ModelParams,
    /// `constraints[k]` lists `(site, weight)` pairs, sites 0-based,
    /// strictly increasing within a constraint.
    pub constraints: Vec<Vec<(usize, f64)>>,
}

/// Draw one disorder instance. Each `(i,k)` pair is independently active
/// with probability `gamma/N`; active pairs carry independent standard
/// Gaussian weights. Deterministic given the generator state.
pub fn sample_instance<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Result<Instance> {
    let p = params.gamma / params.n as f64;
    if p > 1.0 {
        return Err(Error::Parameter(format!(
            "dilution probability gamma/N = {p} exceeds 1 (gamma={}, N={})",
            params.gamma, params.n
        )));
    }
    let mut constraints = Vec::with_capacity(params.m);
    for _k in 0..params.m {
        let mut row = Vec::new();
        for i in 0..params.n {
            let u: f64 = rng.random();
            if u < p {
                let g: f64 = rng.sample(StandardNormal);
                row.push((i, g));
            }
        }
        constraints.push(row);
    }
    Ok(Instance {
        params: params.clone(),
        constraints,
    })
}

impl Instance {
    /// Total number of active couplings.
    pub fn active_couplings(&self) -> usize {
        self.constraints.iter().map(Vec::len).sum()
    }

    /// Value of `-H(sigma) = sum_k eta_k * u(sum_{active (i,k)} g_{i,k} sigma_i)`.
    ///
    /// Bounded by `M * U_inf` in absolute value.
    pub fn hamiltonian_value(&self, u: &BoundedPotential, sigma: &[i8]) -> Result<f64> {
        if sigma.len() != self.params.n {
            return Err(Error::Parameter(format!(
                "sigma length {} != N = {}",
                sigma.len(),
                self.params.n
            )));
        }
        let mut total = 0.0;
        for (k, row) in self.constraints.iter().enumerate() {
            if self.params.eta[k] == 0 {
                continue;
            }
            let arg: f64 = row.iter().map(|&(i, g)| g * f64::from(sigma[i])).sum();
            total += u.eval(arg);
        }
        Ok(total)
    }

    /// JSON serialization with weights printed at 17 significant digits so
    /// a round trip reproduces every bit.
    pub fn to_json(&self) -> String {
        let mut s = String::new();
        s.push_str("{\n");
        s.push_str(&format!("  \"N\": {},\n", self.params.n));
        s.push_str(&format!("  \"M\": {},\n", self.params.m));
        s.push_str(&format!("  \"alpha\": {:.16e},\n", self.params.alpha));
        s.push_str(&format!("  \"gamma\": {:.16e},\n", self.params.gamma));
        let eta: Vec<String> = self.params.eta.iter().map(|e| e.to_string()).collect();
        s.push_str(&format!("  \"eta\": [{}],\n", eta.join(", ")));
        s.push_str("  \"constraints\": [\n");
        for (k, row) in self.constraints.iter().enumerate() {
            let entries: Vec<String> = row
                .iter()
                .map(|&(i, g)| format!("[{i}, {g:.16e}]"))
                .collect();
            let comma = if k + 1 < self.constraints.len() { "," } else { "" };
            s.push_str(&format!("    [{}]{}\n", entries.join(", "), comma));
        }
        s.push_str("  ]\n}\n");
        s
    }

    /// Parse the JSON produced by [`Instance::to_json`].
    pub fn from_json(text: &str) -> Result<Instance> {
        #[derive(Deserialize)]
        struct Raw {
            #[serde(rename = "N")]
            n: usize,
            #[serde(rename = "M")]
            m: usize,
            alpha: f64,
            gamma: f64,
            eta: Vec<u8>,
            constraints: Vec<Vec<(usize, f64)>>,
        }
        let raw: Raw = serde_json::from_str(text)
            .map_err(|e| Error::Serialization(format!("instance json: {e}")))?;
        if raw.constraints.len() != raw.m || raw.eta.len() != raw.m {
            return Err(Error::Serialization(
                "instance json: constraint/eta count does not match M".into(),
            ));
        }
        for row in &raw.constraints {
            let mut last: Option<usize> = None;
            for &(i, g) in row {
                if i >= raw.n {
                    return Err(Error::Serialization(format!(
                        "instance json: site {i} out of range for N = {}",
                        raw.n
                    )));
                }
                if !g.is_finite() {
                    return Err(Error::Serialization("instance json: non-finite weight".into()));
                }
                if let Some(prev) = last {
                    if i <= prev {
                        return Err(Error::Serialization(
                            "instance json: sites must be strictly increasing within a constraint"
                                .into(),
                        ));
                    }
                }
                last = Some(i);
            }
        }
        Ok(Instance {
            params: ModelParams {
                n: raw.n,
                alpha: raw.alpha,
                m: raw.m,
                gamma: raw.gamma,
                eta: raw.eta,
            },
            constraints: raw.constraints,
        })
    }
}

/// Evaluation of the smallness conditions at `(alpha, gamma0, U_inf)`.
///
/// `e712` gates the spin-decorrelation estimate, `e750` the contraction of
/// the magnetization map (threshold 1/2). The sixth-power quantity is
/// reported raw: its theorem-level constant is non-constructive, so it never
/// produces a pass/fail verdict.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ConditionReport {
    pub e712_lhs: f64,
    pub e712_ok: bool,
    pub e750_lhs: f64,
    pub e750_ok: bool,
    /// `2 U_inf e^{2 U_inf} alpha gamma0^2`; equals `e750_lhs`.
    pub contraction_factor: f64,
    /// `alpha gamma0^6 U_inf e^{2 U_inf}` — informational only.
    pub e754_raw: f64,
}

/// Evaluate both smallness conditions and the informational sixth-power
/// magnitude.
pub fn check_conditions(alpha: f64, gamma0: f64, u: &BoundedPotential) -> ConditionReport {
    let uinf = u.sup_norm();
    let e4 = (4.0 * uinf).exp();
    let e712_lhs = 4.0
        * uinf
        * alpha
        * gamma0
        * gamma0
        * e4
        * (alpha * gamma0 * (e4 - 1.0)).exp()
        * (3.0 + 2.0 * gamma0 + alpha * (gamma0.powi(2) + gamma0.powi(3)) * e4);
    let e750_lhs = 2.0 * uinf * (2.0 * uinf).exp() * alpha * gamma0 * gamma0;
    let e754_raw = alpha * gamma0.powi(6) * uinf * (2.0 * uinf).exp();
    ConditionReport {
        e712_lhs,
        e712_ok: e712_lhs < 1.0,
        e750_lhs,
        e750_ok: e750_lhs < 0.5,
        contraction_factor: e750_lhs,
        e754_raw,
    }
}
