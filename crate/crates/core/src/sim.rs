//! Monte Carlo experiments: integrated squared bias and mean squared error of
//! curve estimators against the true curve of a parametric copula.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curve::{CurveEstimate, Link, PointStatus, RankGrid};
use crate::dr::{urmc_dr, DrSpec};
use crate::error::{Error, Result};
use crate::models::{CopulaModel, Marginal};
use crate::nonparametric::{sqrt_order, urmc_beta, urmc_ebc, urmc_ebc_pointwise};
use crate::sample::Sample;

/// Bernstein order rule used in simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderRule {
    /// Pointwise MSE-optimal order under the true copula (infeasible benchmark).
    Oracle,
    SqrtN,
    Full,
    Fixed(usize),
}

/// An estimator evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorSpec {
    Ebc(OrderRule),
    Beta,
    Dr { link: Link, degree: u32 },
}

impl fmt::Display for EstimatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorSpec::Ebc(OrderRule::Oracle) => f.write_str("ebc-oracle"),
            EstimatorSpec::Ebc(OrderRule::SqrtN) => f.write_str("ebc-sqrt-n"),
            EstimatorSpec::Ebc(OrderRule::Full) => f.write_str("ebc-n"),
            EstimatorSpec::Ebc(OrderRule::Fixed(m)) => write!(f, "ebc-m{m}"),
            EstimatorSpec::Beta => f.write_str("beta"),
            EstimatorSpec::Dr { link, degree } => {
                let design = match degree {
                    0 => "constant".to_string(),
                    1 => "linear".to_string(),
                    2 => "quadratic".to_string(),
                    d => format!("degree{d}"),
                };
                write!(f, "dr-{link}-{design}")
            }
        }
    }
}

impl FromStr for EstimatorSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parameter(format!("unknown estimator '{s}'"));
        let lower = s.trim().to_ascii_lowercase();
        match lower.as_str() {
            "ebc-oracle" | "ebc-mstar" => return Ok(EstimatorSpec::Ebc(OrderRule::Oracle)),
            "ebc-sqrt-n" | "ebc-sqrtn" => return Ok(EstimatorSpec::Ebc(OrderRule::SqrtN)),
            "ebc-n" => return Ok(EstimatorSpec::Ebc(OrderRule::Full)),
            "beta" => return Ok(EstimatorSpec::Beta),
            _ => {}
        }
        if let Some(m) = lower.strip_prefix("ebc-m") {
            let m: usize = m.parse().map_err(|_| bad())?;
            if m == 0 {
                return Err(bad());
            }
            return Ok(EstimatorSpec::Ebc(OrderRule::Fixed(m)));
        }
        let parts: Vec<&str> = lower.split('-').collect();
        if parts.len() == 3 && parts[0] == "dr" {
            let link = match parts[1] {
                "logit" => Link::Logit,
                "probit" => Link::Probit,
                _ => return Err(bad()),
            };
            let degree = match parts[2] {
                "constant" => 0,
                "linear" => 1,
                "quadratic" => 2,
                _ => return Err(bad()),
            };
            return Ok(EstimatorSpec::Dr { link, degree });
        }
        Err(bad())
    }
}

/// One simulation design.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: CopulaModel,
    pub n: usize,
    pub reps: usize,
    pub tau: f64,
    pub grid: RankGrid,
    pub estimators: Vec<EstimatorSpec>,
    pub seed: u64,
    pub marginal: Marginal,
}

impl ExperimentConfig {
    /// τ = 0 on {0.01, …, 0.99} with standard normal margins.
    pub fn new(model: CopulaModel, n: usize, reps: usize, estimators: Vec<EstimatorSpec>, seed: u64) -> Self {
        ExperimentConfig {
            model,
            n,
            reps,
            tau: 0.0,
            grid: RankGrid::percentiles(),
            estimators,
            seed,
            marginal: Marginal::StandardNormal,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(Error::Parameter("at least one replication is required".into()));
        }
        if self.n < 2 {
            return Err(Error::Parameter(format!("sample size {} below 2", self.n)));
        }
        if self.estimators.is_empty() {
            return Err(Error::Parameter("no estimators requested".into()));
        }
        self.grid.check_offset(self.tau)
    }

    /// Replication `r` of the design.
    pub fn replication_sample(&self, r: usize) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(r as u64);
        self.model.sample(self.n, self.marginal, &mut rng)
    }
}

/// Simulation metrics for one estimator. `risb` and `rimse` are ×100.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub estimator: EstimatorSpec,
    pub risb: f64,
    pub rimse: f64,
    /// Replication average of û at each grid point.
    pub mean_curve: Vec<f64>,
    /// Replication average of (û − u)² at each grid point.
    pub mse_curve: Vec<f64>,
    pub true_curve: Vec<f64>,
    /// Flagged (replication, grid point) pairs.
    pub failures: usize,
    pub config: ExperimentConfig,
}

/// m*(τ, s) at each grid point under the true copula.
pub fn oracle_order_curve(model: &CopulaModel, tau: f64, grid: &RankGrid, n: usize) -> Result<Vec<usize>> {
    grid.check_offset(tau)?;
    grid.points().iter().map(|&s| model.optimal_order(tau, s, n)).collect()
}

struct Prepared {
    truth: Vec<f64>,
    oracle: Option<Vec<usize>>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let truth = config.model.true_urmc(config.tau, &config.grid)?.values;
    let oracle = if config.estimators.contains(&EstimatorSpec::Ebc(OrderRule::Oracle)) {
        Some(oracle_order_curve(&config.model, config.tau, &config.grid, config.n)?)
    } else {
        None
    };
    Ok(Prepared { truth, oracle })
}

fn estimate(spec: &EstimatorSpec, sample: &Sample, config: &ExperimentConfig, oracle: Option<&[usize]>) -> Result<CurveEstimate> {
    let (tau, grid) = (config.tau, &config.grid);
    match *spec {
        EstimatorSpec::Ebc(OrderRule::Oracle) => {
            urmc_ebc_pointwise(sample, oracle.expect("oracle orders prepared"), tau, grid)
        }
        EstimatorSpec::Ebc(OrderRule::SqrtN) => urmc_ebc(sample, Some(sqrt_order(sample.len())), tau, grid),
        EstimatorSpec::Ebc(OrderRule::Full) => urmc_ebc(sample, Some(sample.len()), tau, grid),
        EstimatorSpec::Ebc(OrderRule::Fixed(m)) => urmc_ebc(sample, Some(m), tau, grid),
        EstimatorSpec::Beta => urmc_beta(sample, tau, grid),
        EstimatorSpec::Dr { link, degree } => urmc_dr(sample, &DrSpec::new(link, degree)?, tau, grid),
    }
}

/// Every estimator's curve for replication `r`.
fn replication_curves(config: &ExperimentConfig, prepared: &Prepared, r: usize) -> Result<Vec<CurveEstimate>> {
    let sample = config.replication_sample(r)?;
    config
        .estimators
        .iter()
        .map(|e| estimate(e, &sample, config, prepared.oracle.as_deref()))
        .collect()
}

/// Simulates `reps` datasets and reports RISB and RIMSE (×100) per estimator.
///
/// Replications run in parallel; sums are accumulated in replication order so
/// results do not depend on the thread count.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<MetricResult>> {
    let prepared = prepare(config)?;
    let per_rep: Vec<Result<Vec<CurveEstimate>>> =
        (0..config.reps).into_par_iter().map(|r| replication_curves(config, &prepared, r)).collect();
    let k_len = config.grid.len();
    let e_len = config.estimators.len();
    let mut sums = vec![vec![0.0; k_len]; e_len];
    let mut sq = vec![vec![0.0; k_len]; e_len];
    let mut failures = vec![0usize; e_len];
    for curves in per_rep {
        for (e, c) in curves?.into_iter().enumerate() {
            failures[e] += c.status.iter().filter(|s| **s != PointStatus::Ok).count();
            for k in 0..k_len {
                sums[e][k] += c.values[k];
                sq[e][k] += (c.values[k] - prepared.truth[k]).powi(2);
            }
        }
    }
    let reps = config.reps as f64;
    Ok(config
        .estimators
        .iter()
        .enumerate()
        .map(|(e, spec)| {
            let mean_curve: Vec<f64> = sums[e].iter().map(|v| v / reps).collect();
            let mse_curve: Vec<f64> = sq[e].iter().map(|v| v / reps).collect();
            let isb = mean_curve.iter().zip(&prepared.truth).map(|(m, u)| (m - u).powi(2)).sum::<f64>() / k_len as f64;
            let imse = mse_curve.iter().sum::<f64>() / k_len as f64;
            MetricResult {
                estimator: *spec,
                risb: 100.0 * isb.sqrt(),
                rimse: 100.0 * imse.sqrt(),
                mean_curve,
                mse_curve,
                true_curve: prepared.truth.clone(),
                failures: failures[e],
                config: config.clone(),
            }
        })
        .collect())
}

/// A long-format overlay row: grid point, value and series label.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlayRow {
    pub s: f64,
    pub value: f64,
    pub series: String,
}

/// Plot data: the true curve, each estimator's mean curve, and the curves of
/// the first `replications` replications.
pub fn curve_overlay_export(config: &ExperimentConfig, replications: usize) -> Result<Vec<OverlayRow>> {
    let metrics = run_experiment(config)?;
    let prepared = prepare(config)?;
    let grid = config.grid.points();
    let mut rows = Vec::new();
    let mut push = |series: String, values: &[f64]| {
        for (&s, &value) in grid.iter().zip(values) {
            rows.push(OverlayRow { s, value, series: series.clone() });
        }
    };
    push("true".into(), &prepared.truth);
    for m in &metrics {
        push(format!("mean:{}", m.estimator), &m.mean_curve);
    }
    for r in 0..replications.min(config.reps) {
        for c in config.estimators.iter().zip(replication_curves(config, &prepared, r)?) {
            push(format!("rep{}:{}", r + 1, c.0), &c.1.values);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::Family;

    fn gaussian_half() -> CopulaModel {
        CopulaModel::from_kendall(Family::Gaussian, 0.5).unwrap()
    }

    #[test]
    fn estimator_labels_round_trip() {
        let all = [
            EstimatorSpec::Ebc(OrderRule::Oracle),
            EstimatorSpec::Ebc(OrderRule::SqrtN),
            EstimatorSpec::Ebc(OrderRule::Full),
            EstimatorSpec::Ebc(OrderRule::Fixed(7)),
            EstimatorSpec::Beta,
            EstimatorSpec::Dr { link: Link::Probit, degree: 1 },
            EstimatorSpec::Dr { link: Link::Logit, degree: 2 },
        ];
        for e in all {
            assert_eq!(e.to_string().parse::<EstimatorSpec>().unwrap(), e);
        }
        assert!("dr-cauchit-linear".parse::<EstimatorSpec>().is_err());
        assert!("ebc-m0".parse::<EstimatorSpec>().is_err());
    }

    #[test]
    fn oracle_orders() {
        let grid = RankGrid::percentiles();
        let ind = oracle_order_curve(&CopulaModel::independence(), 0.0, &grid, 400).unwrap();
        assert!(ind.iter().all(|&m| m == 2));
        let g = oracle_order_curve(&gaussian_half(), 0.0, &grid, 200).unwrap();
        assert_eq!(g[49], 2);
        assert!(g[9] > 2 && g[89] > 2);
        let mut prev = vec![0; grid.len()];
        for n in [100, 200, 400, 800] {
            let m = oracle_order_curve(&gaussian_half(), 0.0, &grid, n).unwrap();
            for k in 0..grid.len() {
                assert!(m[k] >= prev[k]);
            }
            prev = m;
        }
    }

    #[test]
    fn metrics_decompose_and_are_deterministic() {
        let est = vec![EstimatorSpec::Beta, EstimatorSpec::Ebc(OrderRule::SqrtN), EstimatorSpec::Dr { link: Link::Logit, degree: 1 }];
        let cfg = ExperimentConfig::new(gaussian_half(), 60, 20, est, 17);
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a, b);
        for m in &a {
            assert!(m.rimse >= m.risb && m.risb >= 0.0);
            for k in 0..cfg.grid.len() {
                let bias2 = (m.mean_curve[k] - m.true_curve[k]).powi(2);
                assert!(m.mse_curve[k] >= bias2 - 1e-15);
            }
        }
    }

    #[test]
    fn single_replication_risb_is_that_replication() {
        let cfg = ExperimentConfig::new(gaussian_half(), 50, 1, vec![EstimatorSpec::Beta], 3);
        let m = &run_experiment(&cfg).unwrap()[0];
        assert!((m.risb - m.rimse).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ExperimentConfig::new(gaussian_half(), 50, 0, vec![EstimatorSpec::Beta], 3);
        assert!(matches!(run_experiment(&cfg), Err(Error::Parameter(_))));
        cfg.reps = 1;
        cfg.tau = 0.05;
        assert!(matches!(run_experiment(&cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn overlay_shape_and_truth() {
        let est = vec![EstimatorSpec::Ebc(OrderRule::Oracle), EstimatorSpec::Beta];
        let cfg = ExperimentConfig::new(CopulaModel::independence(), 40, 5, est, 8);
        let rows = curve_overlay_export(&cfg, 2).unwrap();
        let series = 1 + 2 + 2 * 2;
        assert_eq!(rows.len(), cfg.grid.len() * series);
        for r in rows.iter().filter(|r| r.series == "true") {
            assert_eq!(r.value, 1.0 - r.s);
        }
        assert_eq!(rows, curve_overlay_export(&cfg, 2).unwrap());
    }

    #[test]
    fn oracle_order_is_tighter_at_the_median() {
        let est = vec![EstimatorSpec::Ebc(OrderRule::Oracle), EstimatorSpec::Ebc(OrderRule::SqrtN)];
        let cfg = ExperimentConfig::new(gaussian_half(), 200, 200, est, 21);
        let m = run_experiment(&cfg).unwrap();
        assert!(m[0].mse_curve[49] < m[1].mse_curve[49]);
    }
}
