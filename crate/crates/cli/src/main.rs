//! Experiment runner: reproducible, configured, file-emitting commands over
//! the diluted perceptron library.
//!
//! Every command resolves its parameters from flags over an optional flat
//! config file, writes a `manifest.json` echoing the resolved configuration,
//! and emits its data files atomically: a failed run removes its partial
//! outputs. Identical configuration and seed produce byte-identical data
//! files for any worker count.

mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use dilperc::fixed_point::{population_to_bytes, solve_fixed_point, SolveOptions};
use dilperc::free_energy::{build_rs_curve, compare_pn_vs_f, magnetization_law_test};
use dilperc::gibbs::{disorder_average, Statistic};
use dilperc::model::{check_conditions, BoundedPotential, ModelParams};
use dilperc::rng::derive_seed;
use dilperc::{Error, Result};

use config::{parse_n_list, FileConfig};
use output::{fmt_f64, Artifacts, Csv};

#[derive(Parser)]
#[command(name = "dilperc", version, about = "Diluted perceptron spin-glass experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the high-temperature smallness conditions.
    CheckConditions(CheckConditionsArgs),
    /// Disorder-averaged exact enumeration of a scalar statistic.
    Exact(ExactArgs),
    /// Spin decorrelation across a list of system sizes.
    Decorrelation(DecorrelationArgs),
    /// Solve the magnetization fixed point by population dynamics.
    FixedPoint(FixedPointArgs),
    /// Compare the disorder law of magnetizations against the fixed point.
    MagnetizationLaw(MagnetizationLawArgs),
    /// Replica-symmetric curve and finite-size free-energy comparison.
    FreeEnergy(FreeEnergyArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key-value config file; flags override file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (never affects data payloads).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory for manifest and data files.
    #[arg(long = "out-dir")]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct CheckConditionsArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma0: Option<f64>,
    /// Potential descriptor: zero | const:c | tanh:a:b | bump:a:w | step:a:k
    #[arg(long)]
    potential: Option<String>,
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long = "N")]
    n: Option<usize>,
    /// Constraint count; alternative to --alpha (alpha = M/N).
    #[arg(long = "M")]
    m: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    potential: Option<String>,
    /// pN | decorrelation | magnetization
    #[arg(long)]
    statistic: Option<String>,
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
}

#[derive(Args)]
struct DecorrelationArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    potential: Option<String>,
    /// Comma-separated sizes, e.g. 8,12,16,20.
    #[arg(long = "N-list")]
    n_list: Option<String>,
    #[arg(long = "n-samples")]
    n_samples: Option<usize>,
}

#[derive(Args)]
struct FixedPointArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    potential: Option<String>,
    #[arg(long = "pop-size")]
    pop_size: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long = "max-iter")]
    max_iter: Option<usize>,
    /// Population binary path; defaults to <out-dir>/population.bin.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MagnetizationLawArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    potential: Option<String>,
    #[arg(long = "N")]
    n: Option<usize>,
    /// Number of leading spins in the joint law.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long = "n-disorder")]
    n_disorder: Option<usize>,
    #[arg(long = "pop-size")]
    pop_size: Option<usize>,
}

#[derive(Args)]
struct FreeEnergyArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long = "gamma-max")]
    gamma_max: Option<f64>,
    #[arg(long)]
    potential: Option<String>,
    /// Grid nodes (odd) for the Simpson quadrature of G.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long = "pop-size")]
    pop_size: Option<usize>,
    #[arg(long = "n-mc")]
    n_mc: Option<usize>,
    #[arg(long = "n-disorder")]
    n_disorder: Option<usize>,
    #[arg(long = "N-list")]
    n_list: Option<String>,
    /// Gamma at which p_N is compared against F; defaults to gamma-max.
    #[arg(long = "gamma-compare")]
    gamma_compare: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.command) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Capacity(_) => 3,
        Error::Numerical(_) => 4,
        Error::Parameter(_) | Error::Io(_) | Error::Serialization(_) => 2,
    }
}

/// Resolved common parameters.
struct Common {
    seed: u64,
    workers: usize,
    out_dir: PathBuf,
}

fn resolve_common(args: &CommonArgs, file: &FileConfig) -> Result<Common> {
    let seed = file.resolve(args.seed, "seed", 0)?;
    let workers = file.resolve(
        args.workers,
        "workers",
        std::thread::available_parallelism().map_or(1, |p| p.get()),
    )?;
    if workers == 0 {
        return Err(Error::Parameter("workers must be >= 1".into()));
    }
    let out_dir: PathBuf = file.require(
        args.common_out_dir_clone(),
        "out-dir",
    )?;
    Ok(Common {
        seed,
        workers,
        out_dir,
    })
}

impl CommonArgs {
    fn common_out_dir_clone(&self) -> Option<PathBuf> {
        self.out_dir.clone()
    }
}

fn install_pool(workers: usize) {
    // Ignore the error when a pool already exists (tests drive `run`
    // repeatedly in one process).
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global();
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::CheckConditions(args) => cmd_check_conditions(args),
        Command::Exact(args) => cmd_exact(args),
        Command::Decorrelation(args) => cmd_decorrelation(args),
        Command::FixedPoint(args) => cmd_fixed_point(args),
        Command::MagnetizationLaw(args) => cmd_magnetization_law(args),
        Command::FreeEnergy(args) => cmd_free_energy(args),
    }
}

fn manifest_value(
    command: &str,
    params: serde_json::Value,
    common: &Common,
) -> serde_json::Value {
    serde_json::json!({
        "command": command,
        "params": params,
        "seed": common.seed,
        "workers": common.workers,
        "out_dir": common.out_dir.display().to_string(),
    })
}

fn cmd_check_conditions(args: CheckConditionsArgs) -> Result<()> {
    const KEYS: &[&str] = &["alpha", "gamma0", "potential", "seed", "workers", "out-dir"];
    let file = FileConfig::load(args.common.config.as_deref(), KEYS)?;
    let common = resolve_common(&args.common, &file)?;
    let alpha: f64 = file.require(args.alpha, "alpha")?;
    let gamma0: f64 = file.require(args.gamma0, "gamma0")?;
    let pot_desc: String = file.require(args.potential.clone(), "potential")?;
    let u = BoundedPotential::parse(&pot_desc)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha must be in (0,1), got {alpha}")));
    }
    if !(gamma0 >= 0.0) {
        return Err(Error::Parameter(format!("gamma0 must be >= 0, got {gamma0}")));
    }

    let report = check_conditions(alpha, gamma0, &u);
    let report_json = serde_json::json!({
        "alpha": alpha,
        "gamma0": gamma0,
        "potential": pot_desc,
        "sup_norm": u.sup_norm(),
        "report": report,
    });
    let mut artifacts = Artifacts::default();
    artifacts.add_json("conditions.json", &report_json)?;
    let params = serde_json::json!({"alpha": alpha, "gamma0": gamma0, "potential": pot_desc});
    artifacts.add_json("manifest.json", &manifest_value("check-conditions", params, &common))?;
    artifacts.flush(&common.out_dir)?;
    println!(
        "e712_lhs = {:.6} (ok: {}), e750_lhs = {:.6} (ok: {}), contraction factor {:.6}",
        report.e712_lhs, report.e712_ok, report.e750_lhs, report.e750_ok, report.contraction_factor
    );
    Ok(())
}

fn cmd_exact(args: ExactArgs) -> Result<()> {
    const KEYS: &[&str] = &[
        "N", "M", "alpha", "gamma", "potential", "statistic", "n-samples", "seed", "workers",
        "out-dir",
    ];
    let file = FileConfig::load(args.common.config.as_deref(), KEYS)?;
    let common = resolve_common(&args.common, &file)?;
    install_pool(common.workers);
    let n: usize = file.require(args.n, "N")?;
    let gamma: f64 = file.require(args.gamma, "gamma")?;
    let pot_desc: String = file.require(args.potential.clone(), "potential")?;
    let u = BoundedPotential::parse(&pot_desc)?;
    let m: Option<usize> = file.resolve_opt(args.m, "M")?;
    let alpha: Option<f64> = file.resolve_opt(args.alpha, "alpha")?;
    let params = match (m, alpha) {
        (Some(m), None) => ModelParams::with_m(n, m, gamma)?,
        (None, Some(a)) => ModelParams::new(n, a, gamma)?,
        (Some(_), Some(_)) => {
            return Err(Error::Parameter("give either --M or --alpha, not both".into()))
        }
        (None, None) => return Err(Error::Parameter("one of --M or --alpha is required".into())),
    };
    let stat = Statistic::parse(&file.resolve(args.statistic, "statistic", "pN".to_string())?)?;
    let n_samples: usize = file.resolve(args.n_samples, "n-samples", 1000)?;

    let (summary, values) = disorder_average(&params, &u, stat, n_samples, common.seed)?;

    let mut csv = Csv::new("seed,sample_index,statistic_name,value");
    for (i, v) in values.iter().enumerate() {
        csv.row(&[
            derive_seed(common.seed, "disorder", &[i as u64]).to_string(),
            i.to_string(),
            stat.name().to_string(),
            fmt_f64(*v),
        ]);
    }
    let params_json = serde_json::json!({
        "N": params.n, "M": params.m, "alpha": params.alpha, "gamma": params.gamma,
        "potential": pot_desc, "statistic": stat.name(), "n_samples": n_samples,
    });
    let summary_json = serde_json::json!({
        "statistic": summary.name,
        "mean": summary.mean,
        "std_error": summary.std_error,
        "n_samples": summary.n_samples,
        "params": params_json,
    });
    let mut artifacts = Artifacts::default();
    artifacts.add_text("samples.csv", csv.finish());
    artifacts.add_json("summary.json", &summary_json)?;
    artifacts.add_json("manifest.json", &manifest_value("exact", params_json, &common))?;
    artifacts.flush(&common.out_dir)?;
    println!(
        "{}: mean {} +/- {} over {} samples",
        summary.name, summary.mean, summary.std_error, summary.n_samples
    );
    Ok(())
}

fn cmd_decorrelation(args: DecorrelationArgs) -> Result<()> {
    const KEYS: &[&str] = &[
        "alpha", "gamma", "potential", "N-list", "n-samples", "seed", "workers", "out-dir",
    ];
    let file = FileConfig::load(args.common.config.as_deref(), KEYS)?;
    let common = resolve_common(&args.common, &file)?;
    install_pool(common.workers);
    let alpha: f64 = file.require(args.alpha, "alpha")?;
    let gamma: f64 = file.require(args.gamma, "gamma")?;
    let pot_desc: String = file.require(args.potential.clone(), "potential")?;
    let u = BoundedPotential::parse(&pot_desc)?;
    let n_list = parse_n_list(&file.require(args.n_list, "N-list")?)?;
    let n_samples: usize = file.resolve(args.n_samples, "n-samples", 2000)?;

    let mut artifacts = Artifacts::default();
    let mut rows = Vec::new();
    for &n in &n_list {
        let params = ModelParams::new(n, alpha, gamma)?;
        let batch_seed = derive_seed(common.seed, "decorrelation-batch", &[n as u64]);
        let (summary, values) =
            disorder_average(&params, &u, Statistic::Decorrelation, n_samples, batch_seed)?;
        let mut csv = Csv::new("seed,sample_index,statistic_name,value");
        for (i, v) in values.iter().enumerate() {
            csv.row(&[
                derive_seed(batch_seed, "disorder", &[i as u64]).to_string(),
                i.to_string(),
                "decorrelation".to_string(),
                fmt_f64(*v),
            ]);
        }
        artifacts.add_text(&format!("decorrelation_N{n}.csv"), csv.finish());
        rows.push(serde_json::json!({
            "N": n, "M": params.m,
            "mean": summary.mean, "std_error": summary.std_error, "n_samples": n_samples,
        }));
        println!("N={n}: decorrelation {} +/- {}", summary.mean, summary.std_error);
    }
    let params_json = serde_json::json!({
        "alpha": alpha, "gamma": gamma, "potential": pot_desc,
        "N_list": n_list, "n_samples": n_samples,
    });
    artifacts.add_json("summary.json", &serde_json::json!({"rows": rows}))?;
    artifacts.add_json("manifest.json", &manifest_value("decorrelation", params_json, &common))?;
    artifacts.flush(&common.out_dir)?;
    Ok(())
}

fn cmd_fixed_point(args: FixedPointArgs) -> Result<()> {
    const KEYS: &[&str] = &[
        "alpha", "gamma", "potential", "pop-size", "tol", "max-iter", "out", "seed", "workers",
        "out-dir",
    ];
    let file = FileConfig::load(args.common.config.as_deref(), KEYS)?;
    let common = resolve_common(&args.common, &file)?;
    install_pool(common.workers);
    let alpha: f64 = file.require(args.alpha, "alpha")?;
    let gamma: f64 = file.require(args.gamma, "gamma")?;
    let pot_desc: String = file.require(args.potential.clone(), "potential")?;
    let u = BoundedPotential::parse(&pot_desc)?;
    let pop_size: usize = file.resolve(args.pop_size, "pop-size", 100_000)?;
    let tol: f64 = file.resolve(args.tol, "tol", 1e-3)?;
    let max_iter: usize = file.resolve(args.max_iter, "max-iter", 100)?;
    // Relative paths land in the output directory.
    let out: PathBuf = file.resolve(args.out, "out", PathBuf::from("population.bin"))?;

    let opts = SolveOptions {
        pop_size,
        tol,
        max_iter,
        seed: common.seed,
        initial: None,
    };
    let (pop, report) = solve_fixed_point(alpha, gamma, &u, &opts)?;

    let params_json = serde_json::json!({
        "alpha": alpha, "gamma": gamma, "potential": pot_desc,
        "pop_size": pop_size, "tol": tol, "max_iter": max_iter,
        "out": out.display().to_string(),
    });
    let mut artifacts = Artifacts::default();
    artifacts.add(
        out.to_str()
            .ok_or_else(|| Error::Parameter("non-utf8 out path".into()))?,
        population_to_bytes(&pop, &u, common.seed),
    );
    artifacts.add_text("population.csv", pop.to_csv());
    artifacts.add_json("convergence.json", &report)?;
    artifacts.add_json("manifest.json", &manifest_value("fixed-point", params_json, &common))?;
    artifacts.flush(&common.out_dir)?;
    println!(
        "fixed point at (alpha={alpha}, gamma={gamma}): {} iterations, final step W1 {:.3e}, converged {}",
        report.iterations, report.final_step_w1, report.converged
    );
    if !report.condition_ok {
        println!("warning: contraction condition fails at these parameters; solution may not be unique");
    }
    Ok(())
}

fn cmd_magnetization_law(args: MagnetizationLawArgs) -> Result<()> {
    const KEYS: &[&str] = &[
        "alpha", "gamma", "potential", "N", "m", "n-disorder", "pop-size", "seed", "workers",
        "out-dir",
    ];
    let file = FileConfig::load(args.common.config.as_deref(), KEYS)?;
    let common = resolve_common(&args.common, &file)?;
    install_pool(common.workers);
    let alpha: f64 = file.require(args.alpha, "alpha")?;
    let gamma: f64 = file.require(args.gamma, "gamma")?;
    let pot_desc: String = file.require(args.potential.clone(), "potential")?;
    let u = BoundedPotential::parse(&pot_desc)?;
    let n: usize = file.require(args.n, "N")?;
    let m: usize = file.resolve(args.m, "m", 1)?;
    let n_disorder: usize = file.resolve(args.n_disorder, "n-disorder", 512)?;
    let pop_size: usize = file.resolve(args.pop_size, "pop-size", 100_000)?;

    let opts = SolveOptions::new(pop_size, derive_seed(common.seed, "maglaw-solve", &[]));
    let (pop, report) = solve_fixed_point(alpha, gamma, &u, &opts)?;
    let law = magnetization_law_test(alpha, &u, gamma, n, m, n_disorder, &pop, common.seed)?;

    let header = (1..=m).map(|i| format!("mag{i}")).collect::<Vec<_>>().join(",");
    let mut emp = Csv::new(&header);
    for row in &law.empirical {
        emp.row(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>());
    }
    let mut reference = Csv::new(&header);
    for row in &law.reference {
        reference.row(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>());
    }
    let params_json = serde_json::json!({
        "alpha": alpha, "gamma": gamma, "potential": pot_desc,
        "N": n, "m": m, "n_disorder": n_disorder, "pop_size": pop_size,
    });
    let mut artifacts = Artifacts::default();
    artifacts.add_text("empirical.csv", emp.finish());
    artifacts.add_text("reference.csv", reference.finish());
    artifacts.add_json(
        "maglaw.json",
        &serde_json::json!({
            "joint_w1": law.joint_w1,
            "marginal_w1": law.marginal_w1,
            "solver": report,
            "params": params_json,
        }),
    )?;
    artifacts.add_json(
        "manifest.json",
        &manifest_value("magnetization-law", params_json, &common),
    )?;
    artifacts.flush(&common.out_dir)?;
    println!(
        "magnetization law at N={n}, m={m}: joint W1 {:.4e}, marginal W1 {:.4e}",
        law.joint_w1, law.marginal_w1
    );
    Ok(())
}

fn cmd_free_energy(args: FreeEnergyArgs) -> Result<()> {
    const KEYS: &[&str] = &[
        "alpha",
        "gamma-max",
        "potential",
        "grid",
        "pop-size",
        "n-mc",
        "n-disorder",
        "N-list",
        "gamma-compare",
        "seed",
        "workers",
        "out-dir",
    ];
    let file = FileConfig::load(args.common.config.as_deref(), KEYS)?;
    let common = resolve_common(&args.common, &file)?;
    install_pool(common.workers);
    let alpha: f64 = file.require(args.alpha, "alpha")?;
    let gamma_max: f64 = file.require(args.gamma_max, "gamma-max")?;
    let pot_desc: String = file.require(args.potential.clone(), "potential")?;
    let u = BoundedPotential::parse(&pot_desc)?;
    let grid: usize = file.resolve(args.grid, "grid", 17)?;
    let pop_size: usize = file.resolve(args.pop_size, "pop-size", 100_000)?;
    let n_mc: usize = file.resolve(args.n_mc, "n-mc", 10_000)?;
    let n_disorder: usize = file.resolve(args.n_disorder, "n-disorder", 1000)?;
    let n_list = parse_n_list(&file.resolve(args.n_list, "N-list", "8,12,16,20".to_string())?)?;
    let gamma_compare: f64 = file.resolve(args.gamma_compare, "gamma-compare", gamma_max)?;

    let curve = build_rs_curve(alpha, &u, gamma_max, grid, pop_size, n_mc, common.seed)?;
    let comparison = compare_pn_vs_f(
        alpha,
        &u,
        gamma_compare,
        &n_list,
        n_disorder,
        &curve,
        derive_seed(common.seed, "fe-compare", &[]),
    )?;

    let mut curve_csv = Csv::new("gamma,G,G_err,F");
    for (i, &gamma) in curve.gamma_grid.iter().enumerate() {
        curve_csv.row(&[
            fmt_f64(gamma),
            fmt_f64(curve.g_values[i].0),
            fmt_f64(curve.g_values[i].1),
            fmt_f64(curve.f_values[i]),
        ]);
    }
    let mut cmp_csv = Csv::new("N,pN,pN_err,F,abs_diff");
    for row in &comparison.rows {
        cmp_csv.row(&[
            row.n.to_string(),
            fmt_f64(row.pn_mean),
            fmt_f64(row.pn_stderr),
            fmt_f64(row.f_value),
            fmt_f64(row.abs_diff),
        ]);
    }
    let params_json = serde_json::json!({
        "alpha": alpha, "gamma_max": gamma_max, "potential": pot_desc,
        "grid": grid, "pop_size": pop_size, "n_mc": n_mc,
        "n_disorder": n_disorder, "N_list": n_list, "gamma_compare": gamma_compare,
    });
    let mut manifest = manifest_value("free-energy", params_json, &common);
    manifest["results"] = serde_json::json!({
        "fitted_decay": comparison.fitted_decay,
        "richardson_delta": curve.richardson_delta,
        "F_at_compare": curve.f_at(gamma_compare)?,
    });
    let mut artifacts = Artifacts::default();
    artifacts.add_text("rs_curve.csv", curve_csv.finish());
    artifacts.add_text("comparison.csv", cmp_csv.finish());
    artifacts.add_json("manifest.json", &manifest)?;
    artifacts.flush(&common.out_dir)?;
    println!(
        "F({gamma_compare}) = {:.8}; fitted |pN - F| vs 1/N slope {:.4e}",
        curve.f_at(gamma_compare)?,
        comparison.fitted_decay
    );
    Ok(())
}
