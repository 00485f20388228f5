//! `urmc`: estimate upward rank mobility curves, bootstrap their bands, and run
//! simulation studies.

mod input;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use urmc::inference::{bootstrap_band, difference_band, dominance_report};
use urmc::sim::{curve_overlay_export, run_experiment, EstimatorSpec, ExperimentConfig};
use urmc::dr::urmc_dr_conditional;
use urmc::{CopulaModel, CurveEstimator, DrSpec, EbcOrder, Error, Estimator, Family, Link, RankGrid, Result};

use output::{write_atomic, Table};

#[derive(Parser)]
#[command(name = "urmc", version, about = "Upward rank mobility curves from parent/child income data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate a curve on a grid of parental ranks.
    Estimate(EstimateArgs),
    /// Bootstrap pointwise and uniform bands, or a between-group difference band.
    Bands(BandsArgs),
    /// Monte Carlo RISB/RIMSE for estimators under a parametric copula.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorKind {
    Ebc,
    Beta,
    Dr,
}

#[derive(Clone, Copy, ValueEnum)]
enum LinkArg {
    Logit,
    Probit,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Linear,
    Quadratic,
}

#[derive(Args)]
struct EstimatorArgs {
    /// Input CSV with columns parent_income, child_income and optionally group.
    input: PathBuf,
    #[arg(long, value_enum, default_value = "beta")]
    estimator: EstimatorKind,
    /// Bernstein order: a positive integer or `sqrt-n`.
    #[arg(long, default_value = "sqrt-n")]
    m: String,
    #[arg(long, value_enum, default_value = "logit")]
    link: LinkArg,
    #[arg(long, value_enum, default_value = "quadratic")]
    design: DesignArg,
    /// Rank offset τ.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    /// Grid as `lo:hi:step` or a comma-separated list of ranks.
    #[arg(long)]
    grid: Option<String>,
    /// Output path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: EstimatorArgs,
    /// Conditional curve for this group (distribution regression only).
    #[arg(long)]
    group: Option<String>,
}

#[derive(Args)]
struct BandsArgs {
    #[command(flatten)]
    common: EstimatorArgs,
    /// Bootstrap replications.
    #[arg(long = "B", default_value_t = 500)]
    replications: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, requires = "group_b")]
    group_a: Option<String>,
    #[arg(long, requires = "group_a")]
    group_b: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    family: String,
    /// Kendall's tau used to calibrate θ (0 for independence).
    #[arg(long)]
    tau_k: Option<f64>,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    reps: Option<usize>,
    /// 200 replications unless --reps is given.
    #[arg(long)]
    fast: bool,
    /// Comma-separated: ebc-oracle, ebc-sqrt-n, ebc-n, ebc-m<k>, beta, dr-<logit|probit>-<linear|quadratic>.
    #[arg(long, default_value = "ebc-oracle,ebc-sqrt-n,beta,dr-logit-linear,dr-probit-linear")]
    estimators: String,
    /// Rank offset τ.
    #[arg(long, default_value_t = 0.0)]
    tau: f64,
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write long-format plot data (s, value, series) here.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Replication curves included in the overlay.
    #[arg(long, default_value_t = 5)]
    overlay_reps: usize,
}

fn parse_grid(spec: Option<&str>, default: RankGrid) -> Result<RankGrid> {
    let Some(spec) = spec else { return Ok(default) };
    let bad = || Error::Input(format!("cannot parse grid '{spec}'"));
    if spec.contains(':') {
        let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
        if parts.len() != 3 {
            return Err(bad());
        }
        RankGrid::regular(parts[0], parts[1], parts[2])
    } else {
        RankGrid::new(spec.split(',').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?)
    }
}

fn dr_spec(args: &EstimatorArgs) -> DrSpec {
    let link = match args.link {
        LinkArg::Logit => Link::Logit,
        LinkArg::Probit => Link::Probit,
    };
    let degree = match args.design {
        DesignArg::Linear => 1,
        DesignArg::Quadratic => 2,
    };
    DrSpec::new(link, degree).expect("degree within range")
}

fn estimator(args: &EstimatorArgs) -> Result<Estimator> {
    Ok(match args.estimator {
        EstimatorKind::Beta => Estimator::Beta,
        EstimatorKind::Dr => Estimator::Dr(dr_spec(args)),
        EstimatorKind::Ebc => {
            let order = match args.m.as_str() {
                "sqrt-n" => EbcOrder::SqrtN,
                "n" => EbcOrder::Full,
                m => match m.parse::<usize>() {
                    Ok(m) if m > 0 => EbcOrder::Fixed(m),
                    _ => return Err(Error::Input(format!("--m must be a positive integer, `n` or `sqrt-n`, got '{m}'"))),
                },
            };
            Estimator::Ebc(order)
        }
    })
}

fn seed_or_random(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("seed: {s}");
        s
    })
}

fn fmt(v: f64) -> String {
    v.to_string()
}

fn cmd_estimate(args: EstimateArgs) -> Result<()> {
    let common = &args.common;
    let sample = input::read_sample(&common.input)?;
    let grid = parse_grid(common.grid.as_deref(), RankGrid::percentiles())?;
    let curve = match &args.group {
        Some(group) => {
            if !matches!(common.estimator, EstimatorKind::Dr) {
                return Err(Error::Input("--group requires --estimator dr".into()));
            }
            urmc_dr_conditional(&sample, &dr_spec(common).interacted(), group, common.tau, &grid)?
        }
        None => estimator(common)?.estimate(&sample, common.tau, &grid)?,
    };
    if curve.small_group {
        eprintln!("warning: group has fewer than {} observations", urmc::dr::DEFAULT_MIN_GROUP);
    }
    let failures = curve.failures();
    if failures > 0 {
        eprintln!("warning: {failures} grid points flagged by the estimator");
    }
    let mut table = Table::new(&["s", "tau", "estimate", "estimator", "n"])?;
    let tag = curve.estimator.to_string();
    let n = curve.n.to_string();
    for (s, v) in curve.points() {
        table.row([fmt(s), fmt(curve.tau), fmt(v), tag.clone(), n.clone()])?;
    }
    table.emit(common.out.as_deref())
}

fn cmd_bands(args: BandsArgs) -> Result<()> {
    let common = &args.common;
    let sample = input::read_sample(&common.input)?;
    let grid = parse_grid(common.grid.as_deref(), RankGrid::trimmed())?;
    let seed = seed_or_random(args.seed);
    let groups = args.group_a.as_deref().zip(args.group_b.as_deref());
    let band = match groups {
        Some((a, b)) => {
            if sample.groups().is_none() {
                return Err(Error::Input("--group-a/--group-b need a group column in the input".into()));
            }
            if !matches!(common.estimator, EstimatorKind::Dr) {
                return Err(Error::Input("difference bands require --estimator dr".into()));
            }
            difference_band(&sample, &dr_spec(common), (a, b), common.tau, &grid, args.replications, args.alpha, seed)?
        }
        None => bootstrap_band(&sample, &estimator(common)?, common.tau, &grid, args.replications, args.alpha, seed)?,
    };
    let mut table = Table::new(&[
        "s",
        "center",
        "sigma",
        "pointwise_lo",
        "pointwise_hi",
        "uniform_lo",
        "uniform_hi",
        "dropped",
    ])?;
    for k in 0..band.center.len() {
        table.row([
            fmt(band.grid.points()[k]),
            fmt(band.center[k]),
            fmt(band.sigma[k]),
            fmt(band.pointwise_lo[k]),
            fmt(band.pointwise_hi[k]),
            fmt(band.uniform_lo[k]),
            fmt(band.uniform_hi[k]),
            band.is_dropped(k).to_string(),
        ])?;
    }
    table.emit(common.out.as_deref())?;
    let critical = band.critical_value.map(fmt).unwrap_or_else(|| "none".into());
    eprintln!("critical value: {critical} (B = {}, alpha = {})", band.replications, band.alpha);
    if band.failed_draws > 0 {
        eprintln!("redrawn resamples: {}", band.failed_draws);
    }
    if let Some((a, b)) = groups {
        let report = dominance_report(&band);
        let intervals: Vec<String> = report.intervals.iter().map(|(lo, hi)| format!("[{lo}, {hi}]")).collect();
        println!("dominance of {a} over {b}");
        println!("  set: {}", if intervals.is_empty() { "empty".to_string() } else { intervals.join(" ") });
        println!("  points: {}", report.points.len());
        println!("  violation: {}", report.violation());
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let family: Family = args.family.parse().map_err(|e: Error| Error::Input(e.to_string()))?;
    let model = match (family, args.tau_k) {
        (Family::Independence, t) => {
            if t.is_some_and(|t| t != 0.0) {
                return Err(Error::Input("independence has Kendall's tau 0".into()));
            }
            CopulaModel::independence()
        }
        (_, Some(t)) => CopulaModel::from_kendall(family, t)?,
        (_, None) => return Err(Error::Input(format!("--tau-k is required for the {family} family"))),
    };
    let estimators: Vec<EstimatorSpec> = args
        .estimators
        .split(',')
        .map(|s| s.parse::<EstimatorSpec>().map_err(|e| Error::Input(e.to_string())))
        .collect::<Result<_>>()?;
    let reps = args.reps.unwrap_or(if args.fast { 200 } else { 1000 });
    let seed = seed_or_random(args.seed);
    let mut config = ExperimentConfig::new(model, args.n, reps, estimators, seed);
    config.tau = args.tau;
    config.grid = parse_grid(args.grid.as_deref(), RankGrid::percentiles())?;
    let tau_k = model.kendall_tau();
    eprintln!(
        "config: family={family} theta={:.3} tau_k={tau_k:.4} n={} reps={reps} tau={} grid_points={} seed={seed}",
        model.theta(),
        args.n,
        args.tau,
        config.grid.len()
    );
    let results = run_experiment(&config)?;
    let mut table = Table::new(&[
        "family", "theta", "tau_k", "n", "reps", "tau", "estimator", "risb_x100", "rimse_x100", "failures",
    ])?;
    for m in &results {
        table.row([
            family.to_string(),
            fmt(model.theta()),
            fmt(tau_k),
            args.n.to_string(),
            reps.to_string(),
            fmt(args.tau),
            m.estimator.to_string(),
            fmt(m.risb),
            fmt(m.rimse),
            m.failures.to_string(),
        ])?;
    }
    table.emit(args.out.as_deref())?;
    if let Some(path) = &args.overlay {
        let mut overlay = Table::new(&["s", "value", "series"])?;
        for row in curve_overlay_export(&config, args.overlay_reps)? {
            overlay.row([fmt(row.s), fmt(row.value), row.series])?;
        }
        write_atomic(path, &overlay.into_bytes()?)?;
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Estimation(_) | Error::DegenerateThreshold { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Estimate(a) => cmd_estimate(a),
        Command::Bands(a) => cmd_bands(a),
        Command::Simulate(a) => cmd_simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
