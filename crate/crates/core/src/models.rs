//! Parametric copulas used as simulation oracles.
//!
//! Each model exposes its CDF, the closed-form conditional derivative ∂₀C (which
//! gives the true mobility curve), an exact sampler, Kendall's tau calibration,
//! and the asymptotic bias/variance terms that determine the MSE-optimal
//! Bernstein order.

use std::f64::consts::{FRAC_2_PI, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};

use crate::curve::{CurveEstimate, EstimatorTag, RankGrid};
use crate::error::{Error, Result};
use crate::normal;
use crate::sample::Sample;

/// Step for the finite differences of ∂₀C used in the bias term.
///
/// Second differences at 1e-4 carry rounding noise near 1e-8, the same size as
/// the threshold below which the bias counts as zero; 1e-3 keeps it near 1e-10.
pub const BIAS_FD_STEP: f64 = 1e-3;

/// |b| below this is treated as exactly zero.
pub const ZERO_BIAS_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    Gaussian,
    Clayton,
    Gumbel,
    Independence,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gaussian => "gaussian",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Independence => "independence",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "clayton" => Ok(Family::Clayton),
            "gumbel" => Ok(Family::Gumbel),
            "independence" | "independent" => Ok(Family::Independence),
            other => Err(Error::Parameter(format!("unknown copula family '{other}'"))),
        }
    }
}

/// Margins attached to simulated copula draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marginal {
    StandardNormal,
    Uniform,
}

/// A parametric copula with its dependence parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopulaModel {
    family: Family,
    theta: f64,
}

impl CopulaModel {
    pub fn new(family: Family, theta: f64) -> Result<Self> {
        let ok = match family {
            Family::Gaussian => theta > -1.0 && theta < 1.0,
            Family::Clayton => theta > 0.0 && theta.is_finite(),
            Family::Gumbel => (1.0..f64::INFINITY).contains(&theta),
            Family::Independence => true,
        };
        if !ok {
            return Err(Error::Parameter(format!("theta = {theta} outside the {family} parameter domain")));
        }
        let theta = if family == Family::Independence { 0.0 } else { theta };
        Ok(CopulaModel { family, theta })
    }

    pub fn independence() -> Self {
        CopulaModel { family: Family::Independence, theta: 0.0 }
    }

    /// Model whose Kendall's tau equals `tau_k`.
    pub fn from_kendall(family: Family, tau_k: f64) -> Result<Self> {
        CopulaModel::new(family, theta_from_tau(family, tau_k)?)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Kendall's tau implied by θ.
    pub fn kendall_tau(&self) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Gaussian => FRAC_2_PI * t.asin(),
            Family::Clayton => t / (t + 2.0),
            Family::Gumbel => 1.0 - 1.0 / t,
            Family::Independence => 0.0,
        }
    }

    /// C(u0, u1).
    pub fn cdf(&self, u0: f64, u1: f64) -> Result<f64> {
        check_closed(u0, "u0")?;
        check_closed(u1, "u1")?;
        if u0 == 0.0 || u1 == 0.0 {
            return Ok(0.0);
        }
        if u0 == 1.0 {
            return Ok(u1);
        }
        if u1 == 1.0 {
            return Ok(u0);
        }
        let t = self.theta;
        let c = match self.family {
            Family::Independence => u0 * u1,
            Family::Gaussian => normal::bivariate_cdf(normal::quantile(u0), normal::quantile(u1), t),
            Family::Clayton => (u0.powf(-t) + u1.powf(-t) - 1.0).powf(-1.0 / t),
            Family::Gumbel => {
                let a = (-u0.ln()).powf(t) + (-u1.ln()).powf(t);
                (-a.powf(1.0 / t)).exp()
            }
        };
        Ok(c)
    }

    /// ∂C(u0, u1)/∂u0, the conditional CDF of the child rank given parent rank u0.
    pub fn conditional_deriv(&self, u0: f64, u1: f64) -> Result<f64> {
        check_open(u0, "u0")?;
        check_open(u1, "u1")?;
        Ok(self.conditional_unchecked(u0, u1))
    }

    fn conditional_unchecked(&self, u0: f64, u1: f64) -> f64 {
        let t = self.theta;
        match self.family {
            Family::Independence => u1,
            Family::Gaussian => {
                let z = (normal::quantile(u1) - t * normal::quantile(u0)) / (1.0 - t * t).sqrt();
                normal::cdf(z)
            }
            Family::Clayton => {
                // (u0^-θ + u1^-θ − 1)^(−1/θ − 1) u0^(−θ−1), rewritten to avoid overflow.
                (1.0 + u0.powf(t) * (u1.powf(-t) - 1.0)).powf(-(1.0 + t) / t)
            }
            Family::Gumbel => {
                let x = -u0.ln();
                let y = -u1.ln();
                let a = x.powf(t) + y.powf(t);
                let c = (-a.powf(1.0 / t)).exp();
                c * x.powf(t - 1.0) * a.powf(1.0 / t - 1.0) / u0
            }
        }
    }

    /// One draw of (U0, U1) from the copula.
    pub fn draw_uniforms<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let t = self.theta;
        match self.family {
            Family::Independence => (rng.random(), rng.random()),
            Family::Gaussian => {
                let (z0, z1) = self.draw_gaussian_pair(rng);
                (normal::cdf(z0), normal::cdf(z1))
            }
            Family::Clayton => {
                // Gamma frailty: ψ(x) = (1 + x)^(−1/θ), V ~ Gamma(1/θ, 1).
                let v: f64 = Gamma::new(1.0 / t, 1.0).expect("valid gamma").sample(rng);
                let e0: f64 = Exp1.sample(rng);
                let e1: f64 = Exp1.sample(rng);
                (
                    ((e0 / v).ln_1p() * (-1.0 / t)).exp(),
                    ((e1 / v).ln_1p() * (-1.0 / t)).exp(),
                )
            }
            Family::Gumbel => {
                // Positive stable frailty with Laplace transform exp(−x^α), α = 1/θ.
                let alpha = 1.0 / t;
                let s = positive_stable(alpha, rng);
                let e0: f64 = Exp1.sample(rng);
                let e1: f64 = Exp1.sample(rng);
                ((-(e0 / s).powf(alpha)).exp(), (-(e1 / s).powf(alpha)).exp())
            }
        }
    }

    fn draw_gaussian_pair<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let z0: f64 = StandardNormal.sample(rng);
        let e: f64 = StandardNormal.sample(rng);
        (z0, self.theta * z0 + (1.0 - self.theta * self.theta).sqrt() * e)
    }

    /// n i.i.d. draws with the requested margins.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, marginal: Marginal, rng: &mut R) -> Result<Sample> {
        if n == 0 {
            return Err(Error::Parameter("sample size must be at least 1".into()));
        }
        let mut parent = Vec::with_capacity(n);
        let mut child = Vec::with_capacity(n);
        for _ in 0..n {
            let (a, b) = match (self.family, marginal) {
                (Family::Gaussian, Marginal::StandardNormal) => self.draw_gaussian_pair(rng),
                (_, Marginal::Uniform) => self.draw_uniforms(rng),
                (_, Marginal::StandardNormal) => {
                    let (u0, u1) = self.draw_uniforms(rng);
                    (to_normal(u0), to_normal(u1))
                }
            };
            parent.push(a);
            child.push(b);
        }
        Sample::new(parent, child)
    }

    /// Asymptotic bias term
    /// b = (1−2u0) ∂²C/∂u0² + u0(1−u0) ∂³C/∂u0³ + u1(1−u1) ∂³C/∂u0∂u1²,
    /// with the partials taken by central differences of the closed-form ∂₀C.
    pub fn asymptotic_bias(&self, u0: f64, u1: f64) -> Result<f64> {
        let h = BIAS_FD_STEP;
        for (u, name) in [(u0, "u0"), (u1, "u1")] {
            if !(u - h > 0.0 && u + h < 1.0) {
                return Err(Error::Domain(format!(
                    "{name} = {u} within the finite-difference step {h} of the boundary"
                )));
            }
        }
        if self.family == Family::Independence {
            return Ok(0.0);
        }
        let g = |a: f64, b: f64| self.conditional_unchecked(a, b);
        let g0 = g(u0, u1);
        let gp = g(u0 + h, u1);
        let gm = g(u0 - h, u1);
        let c2 = (gp - gm) / (2.0 * h);
        let c3 = (gp - 2.0 * g0 + gm) / (h * h);
        let mixed = (g(u0, u1 + h) - 2.0 * g0 + g(u0, u1 - h)) / (h * h);
        Ok((1.0 - 2.0 * u0) * c2 + u0 * (1.0 - u0) * c3 + u1 * (1.0 - u1) * mixed)
    }

    /// σ²(u0, u1) = ∂₀C (1 − ∂₀C) / (2 √(π u0 (1 − u0))).
    pub fn asymptotic_variance(&self, u0: f64, u1: f64) -> Result<f64> {
        let d = self.conditional_deriv(u0, u1)?;
        Ok(d * (1.0 - d) / (2.0 * (PI * u0 * (1.0 - u0)).sqrt()))
    }

    /// MSE-optimal Bernstein order at (τ, s) for sample size n, clamped to [2, n].
    pub fn optimal_order(&self, tau: f64, s: f64, n: usize) -> Result<usize> {
        if !(s > 0.0 && s < 1.0 && tau >= 0.0 && s + tau < 1.0) {
            return Err(Error::Domain(format!("(tau, s) = ({tau}, {s}) needs 0 < s < s + tau < 1")));
        }
        let b = self.asymptotic_bias(s, s + tau)?;
        let sigma2 = self.asymptotic_variance(s, s + tau)?;
        optimal_order_from_terms(b, sigma2, n)
    }

    /// True curve 1 − ∂₀C(s, s + τ) on the grid.
    pub fn true_urmc(&self, tau: f64, grid: &RankGrid) -> Result<CurveEstimate> {
        grid.check_offset(tau)?;
        let values = grid
            .points()
            .iter()
            .map(|&s| match self.family {
                // Written out so the curve is exactly 1 - s - tau.
                Family::Independence => Ok(1.0 - s - tau),
                _ => self.conditional_deriv(s, s + tau).map(|d| 1.0 - d),
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(CurveEstimate::new(tau, grid.clone(), values, EstimatorTag::Custom("true".into()), 0))
    }
}

/// ⌈(b²/σ²)^{2/5} n^{2/5}⌉ clamped to [2, n]; 2 when b vanishes.
pub fn optimal_order_from_terms(b: f64, sigma2: f64, n: usize) -> Result<usize> {
    if !(sigma2 > 0.0) {
        return Err(Error::Parameter(format!("asymptotic variance {sigma2} is not positive")));
    }
    let upper = n.max(2);
    if b.abs() < ZERO_BIAS_TOL {
        return Ok(2);
    }
    let raw = (b * b / sigma2 * n as f64).powf(0.4);
    // Absorb powf rounding so exact integers are not pushed up by one.
    let m = (raw * (1.0 - 1e-12)).ceil();
    Ok((m as usize).clamp(2, upper))
}

/// θ giving Kendall's tau `tau_k` in the family.
pub fn theta_from_tau(family: Family, tau_k: f64) -> Result<f64> {
    let bad = || Error::Domain(format!("Kendall's tau {tau_k} is not attainable by the {family} copula"));
    match family {
        Family::Gaussian if tau_k > -1.0 && tau_k < 1.0 => Ok((PI * tau_k / 2.0).sin()),
        Family::Clayton if tau_k > 0.0 && tau_k < 1.0 => Ok(2.0 * tau_k / (1.0 - tau_k)),
        Family::Gumbel if (0.0..1.0).contains(&tau_k) => Ok(1.0 / (1.0 - tau_k)),
        Family::Independence if tau_k == 0.0 => Ok(0.0),
        _ => Err(bad()),
    }
}

fn to_normal(u: f64) -> f64 {
    // Keep draws that round to the unit interval's edges finite.
    normal::quantile(u.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}

/// Kanter's representation of a positive α-stable variable with E e^{−tS} = e^{−t^α}.
fn positive_stable<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let theta: f64 = PI * rng.random::<f64>();
    let w: f64 = Exp1.sample(rng);
    let a = (alpha * theta).sin() / theta.sin().powf(1.0 / alpha);
    let b = (((1.0 - alpha) * theta).sin() / w).powf((1.0 - alpha) / alpha);
    a * b
}

fn check_closed(u: f64, name: &str) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {u} outside [0, 1]")))
    }
}

fn check_open(u: f64, name: &str) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {u} outside (0, 1)")))
    }
}
