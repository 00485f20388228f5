//! Empirical-bootstrap confidence bands and the dominance diagnosis.
//!
//! Each bootstrap replication draws n rows with replacement and recomputes the
//! whole curve, including the marginal quantiles. Replication b uses stream b
//! of a ChaCha generator seeded by the caller, so results do not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::curve::{CurveEstimate, EstimatorTag, RankGrid};
use crate::dr::{urmc_dr, urmc_dr_conditional_groups, DrSpec, GroupEffect};
use crate::error::{Error, Result};
use crate::nonparametric::{sqrt_order, urmc_beta, urmc_ebc};
use crate::normal;
use crate::sample::{EmpiricalDistribution, Sample};

/// Bootstrap spread below which a grid point is left out of the sup statistic.
pub const SIGMA_FLOOR: f64 = 1e-12;
pub const MIN_REPLICATIONS: usize = 50;

/// A procedure mapping a sample to a curve on a grid.
pub trait CurveEstimator: Sync {
    fn estimate(&self, sample: &Sample, tau: f64, grid: &RankGrid) -> Result<CurveEstimate>;
}

impl<F> CurveEstimator for F
where
    F: Fn(&Sample, f64, &RankGrid) -> Result<CurveEstimate> + Sync,
{
    fn estimate(&self, sample: &Sample, tau: f64, grid: &RankGrid) -> Result<CurveEstimate> {
        self(sample, tau, grid)
    }
}

/// Bernstein order rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EbcOrder {
    Fixed(usize),
    /// ⌈√n⌉
    SqrtN,
    /// m = n, identical to the beta estimator.
    Full,
}

impl EbcOrder {
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            EbcOrder::Fixed(m) => m,
            EbcOrder::SqrtN => sqrt_order(n),
            EbcOrder::Full => n,
        }
    }
}

/// The built-in curve estimators.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Ebc(EbcOrder),
    Beta,
    Dr(DrSpec),
}

impl CurveEstimator for Estimator {
    fn estimate(&self, sample: &Sample, tau: f64, grid: &RankGrid) -> Result<CurveEstimate> {
        match self {
            Estimator::Ebc(order) => urmc_ebc(sample, Some(order.resolve(sample.len())), tau, grid),
            Estimator::Beta => urmc_beta(sample, tau, grid),
            Estimator::Dr(spec) => urmc_dr(sample, spec, tau, grid),
        }
    }
}

/// Bootstrap curves around a center, reusable for bands at several levels.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraws {
    pub grid: RankGrid,
    pub center: Vec<f64>,
    /// One curve per replication, in replication order.
    pub curves: Vec<Vec<f64>>,
    /// Resamples rejected and redrawn.
    pub failed_draws: usize,
}

/// Pointwise and uniform bands at level 1 − α.
#[derive(Debug, Clone, PartialEq)]
pub struct BandResult {
    pub grid: RankGrid,
    pub center: Vec<f64>,
    pub sigma: Vec<f64>,
    pub pointwise_lo: Vec<f64>,
    pub pointwise_hi: Vec<f64>,
    pub uniform_lo: Vec<f64>,
    pub uniform_hi: Vec<f64>,
    pub alpha: f64,
    pub replications: usize,
    /// c^B, or `None` when every point was dropped.
    pub critical_value: Option<f64>,
    pub dropped_points: Vec<f64>,
    pub failed_draws: usize,
}

impl BandResult {
    pub fn is_dropped(&self, k: usize) -> bool {
        self.sigma[k] < SIGMA_FLOOR
    }

    /// Whether `curve` lies inside the uniform band at every retained point.
    pub fn uniform_covers(&self, curve: &[f64]) -> bool {
        (0..self.center.len())
            .filter(|&k| !self.is_dropped(k))
            .all(|k| self.uniform_lo[k] <= curve[k] && curve[k] <= self.uniform_hi[k])
    }
}

impl BootstrapDraws {
    /// Bands at level 1 − α from the stored replications.
    pub fn band(&self, alpha: f64) -> Result<BandResult> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")));
        }
        let b = self.curves.len();
        if b < 2 {
            return Err(Error::Parameter("at least two bootstrap curves are needed".into()));
        }
        let k_len = self.center.len();
        let sigma: Vec<f64> = (0..k_len)
            .map(|k| {
                let mean = self.curves.iter().map(|c| c[k]).sum::<f64>() / b as f64;
                let ss = self.curves.iter().map(|c| (c[k] - mean).powi(2)).sum::<f64>();
                (ss / (b - 1) as f64).sqrt()
            })
            .collect();
        let kept: Vec<usize> = (0..k_len).filter(|&k| sigma[k] >= SIGMA_FLOOR).collect();
        let dropped_points = (0..k_len)
            .filter(|&k| sigma[k] < SIGMA_FLOOR)
            .map(|k| self.grid.points()[k])
            .collect();
        let critical_value = if kept.is_empty() {
            None
        } else {
            let sups: Vec<f64> = self
                .curves
                .iter()
                .map(|c| kept.iter().map(|&k| ((c[k] - self.center[k]) / sigma[k]).abs()).fold(0.0, f64::max))
                .collect();
            Some(EmpiricalDistribution::new(&sups)?.quantile(1.0 - alpha)?)
        };
        let z = normal::quantile(1.0 - alpha / 2.0);
        let c = critical_value.unwrap_or(0.0);
        let band = |mult: f64, sign: f64| -> Vec<f64> {
            (0..k_len)
                .map(|k| {
                    let w = if sigma[k] < SIGMA_FLOOR { 0.0 } else { mult * sigma[k] };
                    self.center[k] + sign * w
                })
                .collect()
        };
        Ok(BandResult {
            grid: self.grid.clone(),
            center: self.center.clone(),
            pointwise_lo: band(z, -1.0),
            pointwise_hi: band(z, 1.0),
            uniform_lo: band(c, -1.0),
            uniform_hi: band(c, 1.0),
            sigma,
            alpha,
            replications: b,
            critical_value,
            dropped_points,
            failed_draws: self.failed_draws,
        })
    }
}

/// Runs `replications` resamples of `sample`, applying `curve` to each.
/// Resamples rejected by `accept` or on which `curve` fails are redrawn.
fn draw<F, A>(
    sample: &Sample,
    center: Vec<f64>,
    grid: &RankGrid,
    replications: usize,
    seed: u64,
    curve: F,
    accept: A,
) -> Result<BootstrapDraws>
where
    F: Fn(&Sample) -> Result<Vec<f64>> + Sync,
    A: Fn(&Sample) -> bool + Sync,
{
    if replications < MIN_REPLICATIONS {
        return Err(Error::Parameter(format!(
            "{replications} bootstrap replications; at least {MIN_REPLICATIONS} are required"
        )));
    }
    let n = sample.len();
    let max_failures = 10 * replications;
    let results: Vec<Result<(Vec<f64>, usize)>> = (0..replications)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut failures = 0;
            let mut idx = vec![0usize; n];
            loop {
                idx.iter_mut().for_each(|i| *i = rng.random_range(0..n));
                let resample = sample.resample(&idx);
                if accept(&resample) {
                    if let Ok(values) = curve(&resample) {
                        return Ok((values, failures));
                    }
                }
                failures += 1;
                if failures > max_failures {
                    return Err(Error::Estimation(format!(
                        "bootstrap replication {b} failed {failures} times"
                    )));
                }
            }
        })
        .collect();
    let mut curves = Vec::with_capacity(replications);
    let mut failed_draws = 0;
    for r in results {
        let (c, f) = r?;
        curves.push(c);
        failed_draws += f;
    }
    if failed_draws > max_failures {
        return Err(Error::Estimation(format!("{failed_draws} bootstrap resamples failed")));
    }
    Ok(BootstrapDraws { grid: grid.clone(), center, curves, failed_draws })
}

/// Bootstrap replications of a curve estimator.
pub fn bootstrap_draws<E: CurveEstimator + ?Sized>(
    sample: &Sample,
    estimator: &E,
    tau: f64,
    grid: &RankGrid,
    replications: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    let center = estimator.estimate(sample, tau, grid)?.values;
    draw(
        sample,
        center,
        grid,
        replications,
        seed,
        |s| estimator.estimate(s, tau, grid).map(|c| c.values),
        |_| true,
    )
}

/// Pointwise and uniform bootstrap bands for a curve estimator.
pub fn bootstrap_band<E: CurveEstimator + ?Sized>(
    sample: &Sample,
    estimator: &E,
    tau: f64,
    grid: &RankGrid,
    replications: usize,
    alpha: f64,
    seed: u64,
) -> Result<BandResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    bootstrap_draws(sample, estimator, tau, grid, replications, seed)?.band(alpha)
}

fn group_difference(sample: &Sample, spec: &DrSpec, groups: (&str, &str), tau: f64, grid: &RankGrid) -> Result<Vec<f64>> {
    let curves = urmc_dr_conditional_groups(sample, spec, &[groups.0, groups.1], tau, grid)?;
    Ok(curves[0].values.iter().zip(&curves[1].values).map(|(a, b)| a - b).collect())
}

/// Bootstrap replications of û_c(x1) − û_c(x2) from a fully interacted fit.
pub fn difference_draws(
    sample: &Sample,
    spec: &DrSpec,
    groups: (&str, &str),
    tau: f64,
    grid: &RankGrid,
    replications: usize,
    seed: u64,
) -> Result<BootstrapDraws> {
    let g = sample.groups().ok_or_else(|| Error::Input("sample has no group labels".into()))?;
    let mut codes = [0usize; 2];
    for (slot, label) in codes.iter_mut().zip([groups.0, groups.1]) {
        *slot = g
            .code_of(label)
            .filter(|&c| g.count(c) > 0)
            .ok_or_else(|| Error::Input(format!("group '{label}' not present in the sample")))?;
    }
    let spec = DrSpec { group_effect: GroupEffect::Interacted, ..spec.clone() };
    let center = group_difference(sample, &spec, groups, tau, grid)?;
    draw(
        sample,
        center,
        grid,
        replications,
        seed,
        |s| group_difference(s, &spec, groups, tau, grid),
        |s| {
            let rg = s.groups().expect("resample keeps groups");
            codes.iter().all(|&c| rg.codes().contains(&c))
        },
    )
}

/// Bands for the between-group difference of conditional curves.
#[allow(clippy::too_many_arguments)]
pub fn difference_band(
    sample: &Sample,
    spec: &DrSpec,
    groups: (&str, &str),
    tau: f64,
    grid: &RankGrid,
    replications: usize,
    alpha: f64,
    seed: u64,
) -> Result<BandResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Parameter(format!("alpha = {alpha} outside (0, 1)")));
    }
    difference_draws(sample, spec, groups, tau, grid, replications, seed)?.band(alpha)
}

/// Grid points where a difference band excludes zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DominanceReport {
    /// Retained points with uniform_lo > 0.
    pub points: Vec<f64>,
    /// Maximal runs of consecutive grid points in `points`, as (first, last).
    pub intervals: Vec<(f64, f64)>,
    /// Retained points with uniform_hi < 0.
    pub violations: Vec<f64>,
}

impl DominanceReport {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Evidence against weak dominance somewhere on the grid.
    pub fn violation(&self) -> bool {
        !self.violations.is_empty()
    }
}

/// Dominance diagnosis from a difference band. This reads the uniform band; it
/// is not a size-controlled test of dominance.
pub fn dominance_report(band: &BandResult) -> DominanceReport {
    let grid = band.grid.points();
    let mut points = Vec::new();
    let mut violations = Vec::new();
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    let mut run: Option<(f64, f64)> = None;
    for k in 0..grid.len() {
        let retained = !band.is_dropped(k);
        let above = retained && band.uniform_lo[k] > 0.0;
        if retained && band.uniform_hi[k] < 0.0 {
            violations.push(grid[k]);
        }
        if above {
            points.push(grid[k]);
            run = Some(match run {
                Some((lo, _)) => (lo, grid[k]),
                None => (grid[k], grid[k]),
            });
        } else if let Some(r) = run.take() {
            intervals.push(r);
        }
    }
    if let Some(r) = run {
        intervals.push(r);
    }
    DominanceReport { points, intervals, violations }
}

/// Tag for a difference curve, used in outputs.
pub fn difference_tag(spec: &DrSpec, groups: (&str, &str)) -> EstimatorTag {
    EstimatorTag::Custom(format!("dr({},degree={}) {} - {}", spec.link, spec.degree, groups.0, groups.1))
}
