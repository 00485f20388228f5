//! Rank grids and estimated mobility curves.

use std::fmt;

use crate::error::{Error, Result};

/// Strictly increasing parental rank points in (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct RankGrid(Vec<f64>);

impl RankGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("rank grid is empty".into()));
        }
        for (i, &s) in points.iter().enumerate() {
            if !(s > 0.0 && s < 1.0) {
                return Err(Error::Domain(format!("grid point {s} outside (0, 1)")));
            }
            if i > 0 && points[i - 1] >= s {
                return Err(Error::Domain(format!(
                    "grid not strictly increasing at {} -> {s}",
                    points[i - 1]
                )));
            }
        }
        Ok(RankGrid(points))
    }

    /// `lo, lo + step, …, hi`, rounded to 12 decimals so decimal grids come out exact.
    pub fn regular(lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(hi >= lo) {
            return Err(Error::Domain(format!("invalid grid range {lo}:{hi}:{step}")));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let points = (0..count)
            .map(|i| ((lo + i as f64 * step) * 1e12).round() / 1e12)
            .collect();
        RankGrid::new(points)
    }

    /// {0.01, 0.02, …, 0.99}.
    pub fn percentiles() -> Self {
        RankGrid((1..=99).map(|k| k as f64 / 100.0).collect())
    }

    /// {0.05, 0.06, …, 0.95}: the trimmed grid used for bands.
    pub fn trimmed() -> Self {
        RankGrid((5..=95).map(|k| k as f64 / 100.0).collect())
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Errors on the first point with s + tau ≥ 1.
    pub fn check_offset(&self, tau: f64) -> Result<()> {
        if !(0.0..1.0).contains(&tau) {
            return Err(Error::Domain(format!("offset tau = {tau} outside [0, 1)")));
        }
        match self.0.iter().find(|&&s| s + tau >= 1.0) {
            Some(s) => Err(Error::Domain(format!("grid point s = {s} has s + tau = {} >= 1", s + tau))),
            None => Ok(()),
        }
    }

    /// Points with s + tau < 1; errors when none remain.
    pub fn restricted(&self, tau: f64) -> Result<Self> {
        RankGrid::new(self.0.iter().copied().filter(|&s| s + tau < 1.0).collect())
    }
}

/// Link function for binary distribution regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Logit,
    Probit,
}

impl fmt::Display for Link {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Link::Logit => "logit",
            Link::Probit => "probit",
        })
    }
}

/// Which estimator produced a curve.
#[derive(Debug, Clone, PartialEq)]
pub enum EstimatorTag {
    /// Empirical Bernstein copula with a single order m.
    Ebc { m: usize },
    /// Empirical Bernstein copula with one order per grid point.
    EbcPointwise { orders: Vec<usize> },
    /// Empirical beta copula (m = n).
    Beta,
    /// Distribution regression with the given link and polynomial degree in parent income.
    Dr { link: Link, degree: u32 },
    /// Conditional distribution regression evaluated for one group.
    DrConditional { link: Link, degree: u32, group: String },
    /// Any other curve procedure.
    Custom(String),
}

impl fmt::Display for EstimatorTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EstimatorTag::Ebc { m } => write!(f, "ebc(m={m})"),
            EstimatorTag::EbcPointwise { .. } => write!(f, "ebc(m=pointwise)"),
            EstimatorTag::Beta => write!(f, "beta"),
            EstimatorTag::Dr { link, degree } => write!(f, "dr({link},degree={degree})"),
            EstimatorTag::DrConditional { link, degree, group } => {
                write!(f, "dr({link},degree={degree},group={group})")
            }
            EstimatorTag::Custom(name) => f.write_str(name),
        }
    }
}

/// Per-point outcome of an estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum PointStatus {
    Ok,
    /// Optimizer stopped without meeting the gradient tolerance.
    NotConverged,
    /// Fitted probabilities reproduce the indicators: (quasi-)separation.
    Separated,
    /// All threshold indicators were equal; the value is the clamped frequency.
    Degenerate,
}

/// An estimated u(τ, ·) over a rank grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveEstimate {
    pub tau: f64,
    pub grid: RankGrid,
    pub values: Vec<f64>,
    pub estimator: EstimatorTag,
    pub n: usize,
    pub status: Vec<PointStatus>,
    /// Set when a conditional curve was estimated from fewer observations than requested.
    pub small_group: bool,
}

impl CurveEstimate {
    pub fn new(tau: f64, grid: RankGrid, values: Vec<f64>, estimator: EstimatorTag, n: usize) -> Self {
        let status = vec![PointStatus::Ok; values.len()];
        CurveEstimate { tau, grid, values, estimator, n, status, small_group: false }
    }

    /// Number of grid points whose status is not `Ok`.
    pub fn failures(&self) -> usize {
        self.status.iter().filter(|s| **s != PointStatus::Ok).count()
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.points().iter().copied().zip(self.values.iter().copied())
    }
}
