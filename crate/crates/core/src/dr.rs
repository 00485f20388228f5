//! Distribution regression: conditional CDFs from threshold-indexed binary
//! regressions, and the mobility curves built on them.
//!
//! For a threshold y1 the indicator 1{Y1 ≤ y1} is regressed on a polynomial in
//! parent income (optionally fully interacted with group dummies) through a
//! logit or probit link. The curve at s is 1 − F̂(Q̂1(s+τ) | Q̂0(s)), where both
//! quantiles come from the pooled sample.

use std::collections::HashMap;

use crate::curve::{CurveEstimate, EstimatorTag, Link, PointStatus, RankGrid};
use crate::error::{Error, Result};
use crate::normal;
use crate::sample::{EmpiricalDistribution, Sample};

/// Sup-norm tolerance on the average score.
pub const GRAD_TOL: f64 = 1e-8;
pub const MAX_ITER: usize = 100;
/// Bounds applied to reported conditional probabilities.
pub const PROB_CLAMP: f64 = 1e-10;
/// Coefficient norm above which a fit is flagged as separated.
pub const SEPARATION_NORM: f64 = 1e6;
/// Fitted probabilities this close to 0 or 1 everywhere indicate separation.
pub const SEPARATION_EPS: f64 = 1e-6;
pub const DEFAULT_MIN_GROUP: usize = 30;
const MAX_HALVINGS: usize = 60;

/// How group labels enter the design.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupEffect {
    /// Parent-income polynomial only.
    None,
    /// Every polynomial term interacted with a dummy for each non-reference level.
    Interacted,
}

/// Link and design of a distribution regression.
///
/// The design is `[1, y0, …, y0^degree]`, and with [`GroupEffect::Interacted`]
/// the same block again for every non-reference group level multiplied by that
/// level's dummy. The reference level is the first label in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct DrSpec {
    pub link: Link,
    pub degree: u32,
    pub group_effect: GroupEffect,
    /// Conditional curves for groups smaller than this are flagged.
    pub min_group_size: usize,
}

impl DrSpec {
    pub fn new(link: Link, degree: u32) -> Result<Self> {
        if degree > 4 {
            return Err(Error::Parameter(format!("polynomial degree {degree} above 4")));
        }
        Ok(DrSpec { link, degree, group_effect: GroupEffect::None, min_group_size: DEFAULT_MIN_GROUP })
    }

    pub fn interacted(mut self) -> Self {
        self.group_effect = GroupEffect::Interacted;
        self
    }

    pub fn tag(&self) -> EstimatorTag {
        EstimatorTag::Dr { link: self.link, degree: self.degree }
    }

    /// Readable names of the design columns for the given group levels.
    pub fn term_names(&self, levels: &[String]) -> Vec<String> {
        let base: Vec<String> = (0..=self.degree)
            .map(|k| match k {
                0 => "1".to_string(),
                1 => "y0".to_string(),
                k => format!("y0^{k}"),
            })
            .collect();
        let mut names = base.clone();
        if self.group_effect == GroupEffect::Interacted {
            for level in levels.iter().skip(1) {
                for b in &base {
                    names.push(if b == "1" { format!("g[{level}]") } else { format!("g[{level}]*{b}") });
                }
            }
        }
        names
    }
}

/// Λ(η) for the link.
pub fn link_cdf(link: Link, eta: f64) -> f64 {
    match link {
        Link::Logit => 1.0 / (1.0 + (-eta).exp()),
        Link::Probit => normal::cdf(eta),
    }
}

/// Λ⁻¹(p) for p in (0, 1).
pub fn link_inverse(link: Link, p: f64) -> f64 {
    match link {
        Link::Logit => (p / (1.0 - p)).ln(),
        Link::Probit => normal::quantile(p),
    }
}

/// ln(1 + eˣ) without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Log-likelihood contribution, score and negative second derivative in η.
fn observation_terms(link: Link, eta: f64, below: bool) -> (f64, f64, f64) {
    match link {
        Link::Logit => {
            let p = link_cdf(link, eta);
            let ll = if below { -softplus(-eta) } else { -softplus(eta) };
            let y = if below { 1.0 } else { 0.0 };
            (ll, y - p, p * (1.0 - p))
        }
        Link::Probit => {
            if below {
                let (ll, l) = normal::log_cdf_and_mills(eta);
                (ll, l, l * (eta + l))
            } else {
                let (ll, l) = normal::log_cdf_and_mills(-eta);
                (ll, -l, l * (l - eta))
            }
        }
    }
}

/// Standardized design matrix for one sample and spec.
#[derive(Debug, Clone)]
struct Design {
    spec: DrSpec,
    levels: Vec<String>,
    p: usize,
    center: Vec<f64>,
    scale: Vec<f64>,
    /// Row-major n × p, columns centered and scaled (except the intercept).
    x: Vec<f64>,
    n: usize,
}

impl Design {
    fn new(sample: &Sample, spec: &DrSpec) -> Result<Self> {
        let levels: Vec<String> = match (spec.group_effect, sample.groups()) {
            (GroupEffect::Interacted, Some(g)) => g.levels().to_vec(),
            _ => Vec::new(),
        };
        let blocks = levels.len().max(1);
        let p = (spec.degree as usize + 1) * blocks;
        let n = sample.len();
        let codes: Vec<usize> = match (spec.group_effect, sample.groups()) {
            (GroupEffect::Interacted, Some(g)) => g.codes().to_vec(),
            _ => vec![0; n],
        };
        let mut design = Design {
            spec: spec.clone(),
            levels,
            p,
            center: vec![0.0; p],
            scale: vec![1.0; p],
            x: vec![0.0; n * p],
            n,
        };
        for i in 0..n {
            let row = &mut design.x[i * p..(i + 1) * p];
            fill_raw_row(spec.degree, sample.parent()[i], codes[i], row);
        }
        let names = spec.term_names(&design.levels);
        for j in 1..p {
            let mean = (0..n).map(|i| design.x[i * p + j]).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (design.x[i * p + j] - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            if !(sd > 0.0 && sd.is_finite()) {
                return Err(Error::Input(format!("design column {} is constant on the sample", names[j])));
            }
            design.center[j] = mean;
            design.scale[j] = sd;
            for i in 0..n {
                let v = &mut design.x[i * p + j];
                *v = (*v - mean) / sd;
            }
        }
        Ok(design)
    }

    fn standardized_row(&self, y0: f64, code: usize, out: &mut [f64]) {
        fill_raw_row(self.spec.degree, y0, code, out);
        for j in 1..self.p {
            out[j] = (out[j] - self.center[j]) / self.scale[j];
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Coefficients on the raw design scale.
    fn unstandardize(&self, theta: &[f64]) -> Vec<f64> {
        let mut out = theta.to_vec();
        let mut shift = 0.0;
        for j in 1..self.p {
            out[j] = theta[j] / self.scale[j];
            shift += out[j] * self.center[j];
        }
        out[0] = theta[0] - shift;
        out
    }
}

/// Raw polynomial terms; block `code` (if nonzero) holds the same terms again.
fn fill_raw_row(degree: u32, y0: f64, code: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let d = degree as usize + 1;
    let mut t = 1.0;
    for k in 0..d {
        out[k] = t;
        if code > 0 {
            out[code * d + k] = t;
        }
        t *= y0;
    }
}

/// Result of one binary regression at a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdFit {
    pub threshold: f64,
    /// Share of child incomes at or below the threshold.
    pub frequency: f64,
    /// Coefficients on the raw design scale; empty for a degenerate threshold.
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    /// Sup-norm of the average score at return.
    pub grad_norm: f64,
    pub status: PointStatus,
    /// Log-likelihood after each accepted step, starting from the initial value.
    pub loglik_path: Vec<f64>,
    standardized: Vec<f64>,
}

/// Fitted distribution regression for one sample, with fits cached per threshold.
#[derive(Debug, Clone)]
pub struct DrFit {
    design: Design,
    child: Vec<f64>,
    fits: HashMap<u64, ThresholdFit>,
    scratch: Vec<f64>,
}

impl DrFit {
    /// Prepare a fit; thresholds are added with [`DrFit::fit_at`].
    pub fn new(sample: &Sample, spec: &DrSpec) -> Result<Self> {
        let design = Design::new(sample, spec)?;
        let p = design.p;
        Ok(DrFit { design, child: sample.child().to_vec(), fits: HashMap::new(), scratch: vec![0.0; p] })
    }

    /// Prepare and fit every listed threshold (degenerate ones are kept with a flag).
    pub fn with_thresholds(sample: &Sample, spec: &DrSpec, thresholds: &[f64]) -> Result<Self> {
        let mut fit = DrFit::new(sample, spec)?;
        for &t in thresholds {
            fit.fit_at(t);
        }
        Ok(fit)
    }

    pub fn spec(&self) -> &DrSpec {
        &self.design.spec
    }

    /// Group levels that index the design blocks.
    pub fn levels(&self) -> &[String] {
        &self.design.levels
    }

    /// Fitted thresholds in increasing order.
    pub fn thresholds(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self.fits.values().map(|f| f.threshold).collect();
        t.sort_by(f64::total_cmp);
        t
    }

    pub fn threshold_fit(&self, y1: f64) -> Option<&ThresholdFit> {
        self.fits.get(&y1.to_bits())
    }

    /// Fit at `y1` unless cached.
    pub fn fit_at(&mut self, y1: f64) -> &ThresholdFit {
        let key = y1.to_bits();
        if !self.fits.contains_key(&key) {
            let fit = newton(&self.design, &self.child, y1);
            self.fits.insert(key, fit);
        }
        &self.fits[&key]
    }

    fn group_code(&self, group: Option<&str>) -> Result<usize> {
        match group {
            Some(_) if self.design.levels.is_empty() => Ok(0),
            None => Ok(0),
            Some(label) => self
                .design
                .levels
                .iter()
                .position(|l| l == label)
                .ok_or_else(|| Error::Input(format!("group '{label}' not present in the fitted sample"))),
        }
    }

    /// F̂(y1 | y0, group) = Λ(P(y0, group)ᵀ θ̂(y1)), clamped to [1e-10, 1 − 1e-10].
    pub fn conditional_cdf(&self, y1: f64, y0: f64, group: Option<&str>) -> Result<f64> {
        let code = self.group_code(group)?;
        let fit = self.threshold_fit(y1).ok_or(Error::UnfittedThreshold(y1))?;
        let mut row = vec![0.0; self.design.p];
        Ok(self.evaluate(fit, y0, code, &mut row))
    }

    /// Like [`DrFit::conditional_cdf`], fitting the threshold when needed.
    pub fn conditional_cdf_fitting(&mut self, y1: f64, y0: f64, group: Option<&str>) -> Result<f64> {
        let code = self.group_code(group)?;
        self.fit_at(y1);
        Ok(self.cached_value(y1, y0, code))
    }

    fn cached_value(&mut self, y1: f64, y0: f64, code: usize) -> f64 {
        let mut row = std::mem::take(&mut self.scratch);
        let v = self.evaluate(&self.fits[&y1.to_bits()], y0, code, &mut row);
        self.scratch = row;
        v
    }

    fn evaluate(&self, fit: &ThresholdFit, y0: f64, code: usize, row: &mut [f64]) -> f64 {
        let p = if fit.status == PointStatus::Degenerate {
            fit.frequency
        } else {
            self.design.standardized_row(y0, code, row);
            let eta: f64 = row.iter().zip(&fit.standardized).map(|(a, b)| a * b).sum();
            link_cdf(self.design.spec.link, eta)
        };
        p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
    }
}

/// Maximum-likelihood coefficients for the indicator 1{Y1 ≤ y1}.
pub fn fit_threshold(sample: &Sample, spec: &DrSpec, y1: f64) -> Result<ThresholdFit> {
    let design = Design::new(sample, spec)?;
    let fit = newton(&design, sample.child(), y1);
    if fit.status == PointStatus::Degenerate {
        return Err(Error::DegenerateThreshold { threshold: y1, value: fit.frequency == 1.0 });
    }
    Ok(fit)
}

/// Average log-likelihood at `theta`, with the average score and observed
/// information written into `grad` and `hess`.
fn evaluate_at(design: &Design, below: &[bool], theta: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
    let (n, p, link) = (design.n, design.p, design.spec.link);
    grad.iter_mut().for_each(|g| *g = 0.0);
    hess.iter_mut().for_each(|h| *h = 0.0);
    let mut ll = 0.0;
    for i in 0..n {
        let row = design.row(i);
        let eta: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
        let (li, score, weight) = observation_terms(link, eta, below[i]);
        ll += li;
        for a in 0..p {
            grad[a] += score * row[a];
            let wa = weight * row[a];
            for b in 0..=a {
                hess[a * p + b] += wa * row[b];
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    grad.iter_mut().for_each(|g| *g *= inv_n);
    for a in 0..p {
        for b in 0..=a {
            hess[a * p + b] *= inv_n;
            hess[b * p + a] = hess[a * p + b];
        }
    }
    ll * inv_n
}

/// Newton–Raphson on the average log-likelihood with step-halving.
fn newton(design: &Design, child: &[f64], y1: f64) -> ThresholdFit {
    let n = design.n;
    let p = design.p;
    let link = design.spec.link;
    let below: Vec<bool> = child.iter().map(|&c| c <= y1).collect();
    let hits = below.iter().filter(|&&b| b).count();
    let frequency = hits as f64 / n as f64;
    if hits == 0 || hits == n {
        return ThresholdFit {
            threshold: y1,
            frequency,
            coefficients: Vec::new(),
            iterations: 0,
            grad_norm: 0.0,
            status: PointStatus::Degenerate,
            loglik_path: Vec::new(),
            standardized: Vec::new(),
        };
    }

    // Intercept-only optimum; with centered columns its score is zero in the intercept.
    let mut theta = vec![0.0; p];
    theta[0] = link_inverse(link, frequency);
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut ll = evaluate_at(design, &below, &theta, &mut grad, &mut hess);
    let mut path = vec![ll];
    let mut candidate = vec![0.0; p];
    let mut cand_grad = vec![0.0; p];
    let mut cand_hess = vec![0.0; p * p];
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        let diverging = theta.iter().map(|t| t * t).sum::<f64>().sqrt() > SEPARATION_NORM;
        if grad_norm <= GRAD_TOL || iterations >= MAX_ITER || diverging {
            break;
        }
        let Some(step) = cholesky_solve(&hess, &grad, p) else {
            break;
        };
        iterations += 1;
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            for j in 0..p {
                candidate[j] = theta[j] + t * step[j];
            }
            let ll_new = evaluate_at(design, &below, &candidate, &mut cand_grad, &mut cand_hess);
            if ll_new >= ll {
                std::mem::swap(&mut theta, &mut candidate);
                std::mem::swap(&mut grad, &mut cand_grad);
                std::mem::swap(&mut hess, &mut cand_hess);
                ll = ll_new;
                path.push(ll);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }

    let coefficients = design.unstandardize(&theta);
    let norm = coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    let separated = norm > SEPARATION_NORM
        || (0..n).all(|i| {
            let eta: f64 = design.row(i).iter().zip(&theta).map(|(a, b)| a * b).sum();
            let q = link_cdf(link, eta);
            q < SEPARATION_EPS || q > 1.0 - SEPARATION_EPS
        });
    let status = if separated {
        PointStatus::Separated
    } else if grad_norm > GRAD_TOL {
        PointStatus::NotConverged
    } else {
        PointStatus::Ok
    };
    ThresholdFit {
        threshold: y1,
        frequency,
        coefficients,
        iterations,
        grad_norm,
        status,
        loglik_path: path,
        standardized: theta,
    }
}

/// Solves H x = g for symmetric positive definite H (row-major p × p).
fn cholesky_solve(h: &[f64], g: &[f64], p: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            let mut s = h[i * p + j];
            for k in 0..j {
                s -= l[i * p + k] * l[j * p + k];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i * p + i] = s.sqrt();
            } else {
                l[i * p + j] = s / l[j * p + j];
            }
        }
    }
    let mut y = vec![0.0; p];
    for i in 0..p {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i * p + k] * y[k];
        }
        y[i] = s / l[i * p + i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        let mut s = y[i];
        for k in i + 1..p {
            s -= l[k * p + i] * x[k];
        }
        x[i] = s / l[i * p + i];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

fn curve_points(
    fit: &mut DrFit,
    sample: &Sample,
    codes: &[usize],
    tau: f64,
    grid: &RankGrid,
) -> Result<Vec<(Vec<f64>, Vec<PointStatus>)>> {
    grid.check_offset(tau)?;
    let q0 = EmpiricalDistribution::new(sample.parent())?;
    let q1 = EmpiricalDistribution::new(sample.child())?;
    let mut out: Vec<(Vec<f64>, Vec<PointStatus>)> =
        codes.iter().map(|_| (Vec::with_capacity(grid.len()), Vec::with_capacity(grid.len()))).collect();
    for &s in grid.points() {
        let y1 = q1.quantile(s + tau)?;
        let y0 = q0.quantile(s)?;
        let status = fit.fit_at(y1).status.clone();
        for (slot, &code) in out.iter_mut().zip(codes) {
            slot.0.push(1.0 - fit.cached_value(y1, y0, code));
            slot.1.push(status.clone());
        }
    }
    Ok(out)
}

/// û(τ, s) = 1 − F̂(Q̂1(s+τ) | Q̂0(s)) on the grid.
pub fn urmc_dr(sample: &Sample, spec: &DrSpec, tau: f64, grid: &RankGrid) -> Result<CurveEstimate> {
    if spec.group_effect != GroupEffect::None {
        return Err(Error::Input("unconditional distribution regression takes a design without group terms".into()));
    }
    let mut fit = DrFit::new(sample, spec)?;
    let (values, status) = curve_points(&mut fit, sample, &[0], tau, grid)?.pop().unwrap();
    let mut curve = CurveEstimate::new(tau, grid.clone(), values, spec.tag(), sample.len());
    curve.status = status;
    Ok(curve)
}

/// Conditional curves for each listed group from one pooled fit.
///
/// Quantiles Q̂0 and Q̂1 come from the pooled sample, so every curve is expressed
/// in unconditional ranks.
pub fn urmc_dr_conditional_groups(
    sample: &Sample,
    spec: &DrSpec,
    groups: &[&str],
    tau: f64,
    grid: &RankGrid,
) -> Result<Vec<CurveEstimate>> {
    let g = sample.groups().ok_or_else(|| Error::Input("sample has no group labels".into()))?;
    let mut fit = DrFit::new(sample, spec)?;
    let mut codes = Vec::with_capacity(groups.len());
    let mut sizes = Vec::with_capacity(groups.len());
    for &label in groups {
        let global = g.code_of(label).ok_or_else(|| Error::Input(format!("group '{label}' not present in the sample")))?;
        let size = g.count(global);
        if size == 0 {
            return Err(Error::Input(format!("group '{label}' has no observations")));
        }
        sizes.push(size);
        codes.push(fit.group_code(Some(label))?);
    }
    let points = curve_points(&mut fit, sample, &codes, tau, grid)?;
    Ok(points
        .into_iter()
        .zip(groups)
        .zip(sizes)
        .map(|(((values, status), &label), size)| {
            let tag = EstimatorTag::DrConditional { link: spec.link, degree: spec.degree, group: label.to_string() };
            let mut curve = CurveEstimate::new(tau, grid.clone(), values, tag, sample.len());
            curve.status = status;
            curve.small_group = size < spec.min_group_size;
            curve
        })
        .collect())
}

/// û_c(x; τ, s) = 1 − F̂(Q̂1(s+τ) | Q̂0(s), x) for one group.
pub fn urmc_dr_conditional(
    sample: &Sample,
    spec: &DrSpec,
    group: &str,
    tau: f64,
    grid: &RankGrid,
) -> Result<CurveEstimate> {
    Ok(urmc_dr_conditional_groups(sample, spec, &[group], tau, grid)?.pop().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{CopulaModel, Family, Marginal};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn intercept_only(link: Link) -> DrSpec {
        DrSpec::new(link, 0).unwrap()
    }

    fn gaussian_sample(n: usize, rho: f64, seed: u64) -> Sample {
        CopulaModel::new(Family::Gaussian, rho)
            .unwrap()
            .sample(n, Marginal::StandardNormal, &mut ChaCha8Rng::seed_from_u64(seed))
            .unwrap()
    }

    #[test]
    fn intercept_only_examples() {
        let s = Sample::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for link in [Link::Logit, Link::Probit] {
            let f = fit_threshold(&s, &intercept_only(link), 2.0).unwrap();
            assert!(f.coefficients[0].abs() < 1e-12);
        }
        let f = fit_threshold(&s, &intercept_only(Link::Logit), 3.0).unwrap();
        assert!((f.coefficients[0] - 3f64.ln()).abs() < 1e-12);
        assert!((3f64.ln() - 1.0986).abs() < 1e-4);
    }

    #[test]
    fn degenerate_threshold_is_an_error() {
        let s = Sample::new(vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]).unwrap();
        let spec = DrSpec::new(Link::Logit, 1).unwrap();
        assert!(matches!(fit_threshold(&s, &spec, 5.0), Err(Error::DegenerateThreshold { value: true, .. })));
        assert!(matches!(fit_threshold(&s, &spec, 0.0), Err(Error::DegenerateThreshold { value: false, .. })));
    }

    #[test]
    fn conditional_cdf_index_examples() {
        // Build fits whose coefficients are fixed by hand through a symmetric design.
        let s = Sample::new(vec![-1.0, 1.0], vec![0.0, 1.0]).unwrap();
        let mut fit = DrFit::new(&s, &DrSpec::new(Link::Logit, 1).unwrap()).unwrap();
        let manual = |coef: Vec<f64>, fit: &DrFit| {
            // standardized θ from raw θ: θ̃_j = θ_j d_j, θ̃_0 = θ_0 + Σ θ_j μ_j
            let d = &fit.design;
            let mut st = coef.clone();
            for j in 1..d.p {
                st[j] = coef[j] * d.scale[j];
                st[0] += coef[j] * d.center[j];
            }
            ThresholdFit {
                threshold: 0.5,
                frequency: 0.5,
                coefficients: coef,
                iterations: 0,
                grad_norm: 0.0,
                status: PointStatus::Ok,
                loglik_path: vec![],
                standardized: st,
            }
        };
        let f = manual(vec![0.0, 0.0], &fit);
        fit.fits.insert(0.5f64.to_bits(), f);
        assert_eq!(fit.conditional_cdf(0.5, 3.7, None).unwrap(), 0.5);
        let f = manual(vec![1.0, -2.0], &fit);
        fit.fits.insert(0.5f64.to_bits(), f);
        assert!((fit.conditional_cdf(0.5, 0.5, None).unwrap() - 0.5).abs() < 1e-15);
        let mut fit = DrFit::new(&s, &DrSpec::new(Link::Probit, 1).unwrap()).unwrap();
        let f = manual(vec![0.0, 1.0], &fit);
        fit.fits.insert(0.5f64.to_bits(), f);
        assert!((fit.conditional_cdf(0.5, 0.0, None).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(fit.conditional_cdf(0.7, 0.0, None), Err(Error::UnfittedThreshold(_))));
        assert!(fit.conditional_cdf_fitting(0.7, 0.0, None).is_ok());
    }

    #[test]
    fn gaussian_probit_recovers_conditional_normal() {
        let rho = 0.707;
        let s = gaussian_sample(5000, rho, 11);
        let med = EmpiricalDistribution::new(s.child()).unwrap().quantile(0.5).unwrap();
        let spec = DrSpec::new(Link::Probit, 1).unwrap();
        let fit = DrFit::with_thresholds(&s, &spec, &[med]).unwrap();
        let got = fit.conditional_cdf(med, 0.0, None).unwrap();
        let want = normal::cdf(med / (1.0 - rho * rho).sqrt());
        assert!((got - want).abs() < 0.03, "{got} vs {want}");
        let f = fit.threshold_fit(med).unwrap();
        assert_eq!(f.status, PointStatus::Ok);
        assert!(f.grad_norm <= GRAD_TOL);
        let c = &f.coefficients;
        let scale = (1.0 - rho * rho).sqrt();
        assert!((c[1] + rho / scale).abs() < 0.1, "{c:?}");
    }

    #[test]
    fn symmetric_true_curve_anchor() {
        let grid = RankGrid::new(vec![0.5]).unwrap();
        let spec = DrSpec::new(Link::Probit, 1).unwrap();
        let v = urmc_dr(&gaussian_sample(4000, 0.707, 3), &spec, 0.0, &grid).unwrap().values[0];
        assert!((v - 0.5).abs() < 0.04, "{v}");
    }

    #[test]
    fn quadratic_design_is_well_conditioned_on_income_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 800;
        let parent: Vec<f64> = (0..n).map(|_| 50_000.0 * (rng.sample::<f64, _>(StandardNormal) * 0.6).exp()).collect();
        let child: Vec<f64> = parent
            .iter()
            .map(|p| p * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp())
            .collect();
        let s = Sample::new(parent, child).unwrap();
        let spec = DrSpec::new(Link::Logit, 2).unwrap();
        let curve = urmc_dr(&s, &spec, 0.0, &RankGrid::regular(0.05, 0.95, 0.05).unwrap()).unwrap();
        assert_eq!(curve.failures(), 0);
        assert!(curve.values.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn separation_is_flagged() {
        let s = Sample::new(vec![1.0, 2.0, 3.0, 4.0], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        for link in [Link::Logit, Link::Probit] {
            let f = fit_threshold(&s, &DrSpec::new(link, 1).unwrap(), 2.5).unwrap();
            assert_eq!(f.status, PointStatus::Separated, "{link}");
        }
    }

    #[test]
    fn curve_records_degenerate_points() {
        // Ties put the top quantile on the maximum, so every indicator is 1.
        let s = Sample::new(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![1.0, 3.0, 2.0, 5.0, 5.0]).unwrap();
        let spec = DrSpec::new(Link::Logit, 1).unwrap();
        let grid = RankGrid::new(vec![0.3, 0.9]).unwrap();
        let c = urmc_dr(&s, &spec, 0.0, &grid).unwrap();
        assert_eq!(c.status[1], PointStatus::Degenerate);
        assert!((c.values[1] - PROB_CLAMP).abs() < 1e-15);
    }

    #[test]
    fn single_group_conditional_equals_pooled() {
        let s = gaussian_sample(300, 0.5, 8);
        let labels = vec!["only"; 300];
        let g = Sample::with_groups(s.parent().to_vec(), s.child().to_vec(), &labels).unwrap();
        let grid = RankGrid::percentiles();
        for link in [Link::Logit, Link::Probit] {
            let spec = DrSpec::new(link, 2).unwrap();
            let pooled = urmc_dr(&s, &spec, 0.0, &grid).unwrap();
            let cond = urmc_dr_conditional(&g, &spec.clone().interacted(), "only", 0.0, &grid).unwrap();
            for (a, b) in pooled.values.iter().zip(&cond.values) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn duplicated_groups_agree() {
        let s = gaussian_sample(200, 0.5, 21);
        let mut parent = s.parent().to_vec();
        parent.extend_from_slice(s.parent());
        let mut child = s.child().to_vec();
        child.extend_from_slice(s.child());
        let labels: Vec<&str> = (0..400).map(|i| if i < 200 { "a" } else { "b" }).collect();
        let g = Sample::with_groups(parent, child, &labels).unwrap();
        let spec = DrSpec::new(Link::Probit, 1).unwrap().interacted();
        let curves = urmc_dr_conditional_groups(&g, &spec, &["a", "b"], 0.1, &RankGrid::trimmed().restricted(0.1).unwrap()).unwrap();
        for (a, b) in curves[0].values.iter().zip(&curves[1].values) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn shifted_group_dominates() {
        let n = 4000;
        let rho = 0.5;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut parent = Vec::with_capacity(n);
        let mut child = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y0: f64 = rng.sample(StandardNormal);
            let e: f64 = rng.sample(StandardNormal);
            let a = i % 2 == 0;
            parent.push(y0);
            child.push(rho * y0 + (1.0 - rho * rho).sqrt() * e + if a { 0.5 } else { 0.0 });
            labels.push(if a { "A" } else { "B" });
        }
        let s = Sample::with_groups(parent, child, &labels).unwrap();
        let spec = DrSpec::new(Link::Probit, 1).unwrap().interacted();
        let grid = RankGrid::regular(0.1, 0.9, 0.05).unwrap();
        let c = urmc_dr_conditional_groups(&s, &spec, &["A", "B"], 0.0, &grid).unwrap();
        let q0 = EmpiricalDistribution::new(s.parent()).unwrap();
        let q1 = EmpiricalDistribution::new(s.child()).unwrap();
        let sd = (1.0 - rho * rho).sqrt();
        for (k, &sv) in grid.points().iter().enumerate() {
            assert!(c[0].values[k] >= c[1].values[k]);
            let (y0, y1) = (q0.quantile(sv).unwrap(), q1.quantile(sv).unwrap());
            let oracle_a = normal::sf((y1 - rho * y0 - 0.5) / sd);
            let oracle_b = normal::sf((y1 - rho * y0) / sd);
            assert!((c[0].values[k] - oracle_a).abs() < 0.06);
            assert!((c[1].values[k] - oracle_b).abs() < 0.06);
        }
    }

    #[test]
    fn group_errors() {
        let s = gaussian_sample(50, 0.5, 1);
        let spec = DrSpec::new(Link::Logit, 1).unwrap();
        assert!(matches!(urmc_dr_conditional(&s, &spec, "a", 0.0, &RankGrid::trimmed()), Err(Error::Input(_))));
        let labels: Vec<&str> = (0..50).map(|i| if i < 10 { "a" } else { "b" }).collect();
        let g = Sample::with_groups(s.parent().to_vec(), s.child().to_vec(), &labels).unwrap();
        let spec = spec.interacted();
        assert!(matches!(urmc_dr_conditional(&g, &spec, "c", 0.0, &RankGrid::trimmed()), Err(Error::Input(_))));
        let c = urmc_dr_conditional(&g, &spec, "a", 0.0, &RankGrid::trimmed()).unwrap();
        assert!(c.small_group);
        assert!(matches!(urmc_dr(&g, &spec, 0.0, &RankGrid::trimmed()), Err(Error::Input(_))));
    }

    #[test]
    fn consistency_under_correct_specification() {
        let rho = 0.707;
        let model = CopulaModel::new(Family::Gaussian, rho).unwrap();
        let grid = RankGrid::regular(0.05, 0.95, 0.05).unwrap();
        let truth = model.true_urmc(0.0, &grid).unwrap();
        let spec = DrSpec::new(Link::Probit, 1).unwrap();
        let mut medians = Vec::new();
        for (k, n) in [100usize, 400, 1600].into_iter().enumerate() {
            let mut sups: Vec<f64> = (0..15)
                .map(|r| {
                    let s = gaussian_sample(n, rho, 1000 * k as u64 + r);
                    let c = urmc_dr(&s, &spec, 0.0, &grid).unwrap();
                    c.values.iter().zip(&truth.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
                })
                .collect();
            sups.sort_by(f64::total_cmp);
            medians.push(sups[7]);
        }
        assert!(medians[0] > medians[1] && medians[1] > medians[2], "{medians:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn likelihood_never_decreases(seed in any::<u64>(), n in 8usize..60, q in 0.1f64..0.9, probit in any::<bool>(), degree in 0u32..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let parent: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let child: Vec<f64> = parent.iter().map(|p| p + rng.sample::<f64, _>(StandardNormal)).collect();
            let s = Sample::new(parent, child).unwrap();
            let y1 = EmpiricalDistribution::new(s.child()).unwrap().quantile(q).unwrap();
            let link = if probit { Link::Probit } else { Link::Logit };
            let spec = DrSpec::new(link, degree).unwrap();
            if let Ok(f) = fit_threshold(&s, &spec, y1) {
                for w in f.loglik_path.windows(2) {
                    prop_assert!(w[1] >= w[0]);
                }
                prop_assert!(f.iterations <= MAX_ITER);
                prop_assert!(f.status != PointStatus::Ok || f.grad_norm <= GRAD_TOL);
            }
        }

        #[test]
        fn intercept_only_matches_empirical_cdf(seed in any::<u64>(), n in 2usize..80, q in 0.05f64..0.95, probit in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let parent: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let child: Vec<f64> = (0..n).map(|_| rng.random()).collect();
            let s = Sample::new(parent, child).unwrap();
            let y1 = EmpiricalDistribution::new(s.child()).unwrap().quantile(q).unwrap();
            let link = if probit { Link::Probit } else { Link::Logit };
            let mut fit = DrFit::new(&s, &intercept_only(link)).unwrap();
            let v = fit.conditional_cdf_fitting(y1, 0.3, None).unwrap();
            let ecdf = s.child().iter().filter(|&&c| c <= y1).count() as f64 / n as f64;
            prop_assert!((v - ecdf.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)).abs() < 1e-8);
        }

        #[test]
        fn link_is_strictly_increasing(a in -7.0f64..7.0, d in 1e-3f64..5.0) {
            for link in [Link::Logit, Link::Probit] {
                prop_assert!(link_cdf(link, a + d) > link_cdf(link, a));
            }
        }
    }
}
