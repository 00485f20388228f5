//! Estimation of upward rank mobility curves.
//!
//! For parent income rank s and offset τ, the upward rank mobility curve u(τ, s)
//! is the probability that the child's income rank exceeds s + τ given that the
//! parent's rank is exactly s.

pub mod curve;
pub mod dr;
pub mod error;
pub mod inference;
pub mod models;
pub mod nonparametric;
pub mod normal;
pub mod sample;
pub mod sim;

pub use curve::{CurveEstimate, EstimatorTag, Link, PointStatus, RankGrid};
pub use dr::{DrFit, DrSpec, GroupEffect, ThresholdFit};
pub use error::{Error, Result};
pub use inference::{BandResult, CurveEstimator, DominanceReport, EbcOrder, Estimator};
pub use models::{CopulaModel, Family, Marginal};
pub use sim::{run_experiment, EstimatorSpec, ExperimentConfig, MetricResult, OrderRule};
pub use sample::{
    compute_ranks, empirical_cdf, empirical_quantile, EmpiricalDistribution, Groups, Margin,
    PairedRanks, RankVector, Sample,
};
