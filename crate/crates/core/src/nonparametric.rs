//! Rank-based copula estimators of the mobility curve.
//!
//! The curve is u(τ, s) = 1 − ∂₀C(s, s + τ), where ∂₀C is the partial derivative
//! of the copula of (parent, child) income in its first argument. ∂₀C is estimated
//! either by differentiating the empirical Bernstein copula of order m, or by the
//! empirical beta copula, which is the m = n member of the same family and needs
//! no tuning.

use std::collections::BTreeMap;

use crate::curve::{CurveEstimate, EstimatorTag, RankGrid};
use crate::error::{Error, Result};
use crate::sample::{PairedRanks, RankVector, Sample};

/// Binomial probabilities P_{m,k}(u) = C(m,k) u^k (1−u)^{m−k}, k = 0..=m.
///
/// Coefficients are kept in log space so large orders do not overflow.
#[derive(Debug, Clone)]
pub struct BinomialBasis {
    m: usize,
    ln_choose: Vec<f64>,
}

impl BinomialBasis {
    pub fn new(m: usize) -> Self {
        let ln_m = libm::lgamma(m as f64 + 1.0);
        let ln_choose = (0..=m)
            .map(|k| ln_m - libm::lgamma(k as f64 + 1.0) - libm::lgamma((m - k) as f64 + 1.0))
            .collect();
        BinomialBasis { m, ln_choose }
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// Writes P_{m,0}(u), …, P_{m,m}(u) into `out`.
    pub fn weights_into(&self, u: f64, out: &mut Vec<f64>) {
        out.clear();
        out.resize(self.m + 1, 0.0);
        if u <= 0.0 {
            out[0] = 1.0;
            return;
        }
        if u >= 1.0 {
            out[self.m] = 1.0;
            return;
        }
        let ln_u = u.ln();
        let ln_v = (-u).ln_1p();
        for (k, w) in out.iter_mut().enumerate() {
            *w = (self.ln_choose[k] + k as f64 * ln_u + (self.m - k) as f64 * ln_v).exp();
        }
    }

    pub fn weights(&self, u: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.m + 1);
        self.weights_into(u, &mut out);
        out
    }
}

/// ⌈√n⌉, the default Bernstein order.
pub fn sqrt_order(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r > n {
        r -= 1;
    }
    while r * r < n {
        r += 1;
    }
    r.max(1)
}

/// C_n(u0, u1) = n⁻¹ #{i : R_i0/n ≤ u0, R_i1/n ≤ u1}.
pub fn empirical_copula(ranks0: &RankVector, ranks1: &RankVector, u0: f64, u1: f64) -> Result<f64> {
    let ranks = PairedRanks::new(ranks0.clone(), ranks1.clone())?;
    Ok(copula_at(&ranks, u0, u1))
}

fn copula_at(ranks: &PairedRanks, u0: f64, u1: f64) -> f64 {
    let n = ranks.len() as f64;
    let count = ranks
        .parent
        .as_slice()
        .iter()
        .zip(ranks.child.as_slice())
        .filter(|(&r0, &r1)| r0 as f64 / n <= u0 && r1 as f64 / n <= u1)
        .count();
    count as f64 / n
}

fn check_unit(u: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&u) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{what} = {u} outside [0, 1]")))
    }
}

/// Empirical Bernstein copula of order m, prepared for repeated derivative queries.
///
/// Holds the lattice C_n(k/m, ℓ/m) for k, ℓ = 0..=m, so each query costs O(m²).
#[derive(Debug, Clone)]
pub struct BernsteinCopula {
    m: usize,
    lattice: Vec<f64>,
    basis_m: BinomialBasis,
    basis_m1: BinomialBasis,
}

impl BernsteinCopula {
    pub fn new(ranks: &PairedRanks, m: usize) -> Result<Self> {
        let n = ranks.len();
        if m < 1 || m > n {
            return Err(Error::Parameter(format!("Bernstein order m = {m} outside 1..={n}")));
        }
        let side = m + 1;
        let mut lattice = vec![0.0; side * side];
        // R/n ≤ k/m  ⇔  R·m ≤ k·n, so the first lattice index covering rank R is ⌈R·m/n⌉.
        let cell = |r: u32| (r as usize * m).div_ceil(n);
        for (&r0, &r1) in ranks.parent.as_slice().iter().zip(ranks.child.as_slice()) {
            lattice[cell(r0) * side + cell(r1)] += 1.0;
        }
        for k in 0..side {
            for l in 0..side {
                let mut v = lattice[k * side + l];
                if k > 0 {
                    v += lattice[(k - 1) * side + l];
                }
                if l > 0 {
                    v += lattice[k * side + l - 1];
                }
                if k > 0 && l > 0 {
                    v -= lattice[(k - 1) * side + l - 1];
                }
                lattice[k * side + l] = v;
            }
        }
        let nf = n as f64;
        lattice.iter_mut().for_each(|v| *v /= nf);
        Ok(BernsteinCopula {
            m,
            lattice,
            basis_m: BinomialBasis::new(m),
            basis_m1: BinomialBasis::new(m - 1),
        })
    }

    pub fn order(&self) -> usize {
        self.m
    }

    /// C_n(k/m, ℓ/m).
    pub fn lattice(&self, k: usize, l: usize) -> f64 {
        self.lattice[k * (self.m + 1) + l]
    }

    /// m Σ_{k<m} Σ_ℓ (C_n((k+1)/m, ℓ/m) − C_n(k/m, ℓ/m)) P_{m−1,k}(u0) P_{m,ℓ}(u1).
    pub fn deriv(&self, u0: f64, u1: f64) -> f64 {
        let m = self.m;
        let side = m + 1;
        let w1 = self.basis_m.weights(u1);
        let w0 = self.basis_m1.weights(u0);
        let rows: Vec<f64> = (0..side)
            .map(|k| {
                let row = &self.lattice[k * side..(k + 1) * side];
                row.iter().zip(&w1).map(|(c, w)| c * w).sum()
            })
            .collect();
        let acc: f64 = (0..m).map(|k| (rows[k + 1] - rows[k]) * w0[k]).sum();
        m as f64 * acc
    }
}

/// Partial derivative in u0 of the empirical Bernstein copula of order m.
pub fn bernstein_copula_deriv(ranks: &PairedRanks, m: usize, u0: f64, u1: f64) -> Result<f64> {
    check_unit(u0, "u0")?;
    check_unit(u1, "u1")?;
    Ok(BernsteinCopula::new(ranks, m)?.deriv(u0, u1))
}

/// Empirical beta copula, prepared for repeated derivative queries.
///
/// ∂₀C^β(u0, u1) = n⁻¹ Σ_i f_{n,R_i0}(u0) F_{n,R_i1}(u1), with f_{n,r} and F_{n,r}
/// the density and CDF of Beta(r, n + 1 − r).
#[derive(Debug, Clone)]
pub struct BetaCopula {
    ranks: PairedRanks,
    basis_n: BinomialBasis,
    basis_n1: BinomialBasis,
}

impl BetaCopula {
    pub fn new(ranks: &PairedRanks) -> Self {
        let n = ranks.len();
        BetaCopula {
            ranks: ranks.clone(),
            basis_n: BinomialBasis::new(n),
            basis_n1: BinomialBasis::new(n - 1),
        }
    }

    /// Beta(r, n+1−r) densities at u for r = 1..=n, indexed by r − 1.
    fn densities(&self, u: f64) -> Vec<f64> {
        let n = self.ranks.len() as f64;
        // f_{n,r}(u) = n · P_{n−1,r−1}(u)
        self.basis_n1.weights(u).into_iter().map(|w| n * w).collect()
    }

    /// Beta(r, n+1−r) CDFs at u for r = 0..=n (entry 0 is 1).
    fn cdfs(&self, u: f64) -> Vec<f64> {
        // F_{n,r}(u) = Σ_{s ≥ r} P_{n,s}(u)
        let mut tail = self.basis_n.weights(u);
        for s in (0..tail.len() - 1).rev() {
            tail[s] += tail[s + 1];
        }
        tail
    }

    pub fn deriv(&self, u0: f64, u1: f64) -> f64 {
        let f = self.densities(u0);
        let big_f = self.cdfs(u1);
        let total: f64 = self
            .ranks
            .parent
            .as_slice()
            .iter()
            .zip(self.ranks.child.as_slice())
            .map(|(&r0, &r1)| f[r0 as usize - 1] * big_f[r1 as usize])
            .sum();
        (total / self.ranks.len() as f64).clamp(0.0, 1.0)
    }
}

/// Partial derivative in u0 of the empirical beta copula.
pub fn beta_copula_deriv(ranks: &PairedRanks, u0: f64, u1: f64) -> Result<f64> {
    if !(u0 > 0.0 && u0 < 1.0) {
        return Err(Error::Domain(format!("u0 = {u0} outside (0, 1)")));
    }
    check_unit(u1, "u1")?;
    Ok(BetaCopula::new(ranks).deriv(u0, u1))
}

/// EBC curve estimate û(τ, s) = 1 − ∂̂₀C_{m,n}(s, s + τ). `m = None` uses ⌈√n⌉.
pub fn urmc_ebc(sample: &Sample, m: Option<usize>, tau: f64, grid: &RankGrid) -> Result<CurveEstimate> {
    grid.check_offset(tau)?;
    let n = sample.len();
    let m = m.unwrap_or_else(|| sqrt_order(n));
    let surface = BernsteinCopula::new(&sample.ranks(), m)?;
    let values = grid.points().iter().map(|&s| 1.0 - surface.deriv(s, s + tau)).collect();
    Ok(CurveEstimate::new(tau, grid.clone(), values, EstimatorTag::Ebc { m }, n))
}

/// EBC curve with its own Bernstein order at each grid point.
pub fn urmc_ebc_pointwise(
    sample: &Sample,
    orders: &[usize],
    tau: f64,
    grid: &RankGrid,
) -> Result<CurveEstimate> {
    grid.check_offset(tau)?;
    if orders.len() != grid.len() {
        return Err(Error::Parameter(format!(
            "{} orders for {} grid points",
            orders.len(),
            grid.len()
        )));
    }
    let ranks = sample.ranks();
    let mut surfaces: BTreeMap<usize, BernsteinCopula> = BTreeMap::new();
    for &m in orders {
        if !surfaces.contains_key(&m) {
            surfaces.insert(m, BernsteinCopula::new(&ranks, m)?);
        }
    }
    let values = grid
        .points()
        .iter()
        .zip(orders)
        .map(|(&s, m)| 1.0 - surfaces[m].deriv(s, s + tau))
        .collect();
    Ok(CurveEstimate::new(
        tau,
        grid.clone(),
        values,
        EstimatorTag::EbcPointwise { orders: orders.to_vec() },
        sample.len(),
    ))
}

/// Empirical beta copula curve estimate; values lie in [0, 1].
pub fn urmc_beta(sample: &Sample, tau: f64, grid: &RankGrid) -> Result<CurveEstimate> {
    grid.check_offset(tau)?;
    let surface = BetaCopula::new(&sample.ranks());
    let values = grid.points().iter().map(|&s| 1.0 - surface.deriv(s, s + tau)).collect();
    Ok(CurveEstimate::new(tau, grid.clone(), values, EstimatorTag::Beta, sample.len()))
}

/// Interval measure: among observations with s1 ≤ R_i0/n ≤ s2, the share with
/// R_i1/n > R_i0/n + τ.
pub fn urm_interval(sample: &Sample, tau: f64, s1: f64, s2: f64) -> Result<f64> {
    if !(0.0 < s1 && s1 < s2 && s2 < 1.0) {
        return Err(Error::Domain(format!("interval [{s1}, {s2}] must satisfy 0 < s1 < s2 < 1")));
    }
    if !(0.0..=1.0 - s2).contains(&tau) {
        return Err(Error::Domain(format!("offset tau = {tau} outside [0, 1 − s2]")));
    }
    let ranks = sample.ranks();
    let n = ranks.len() as f64;
    let mut inside = 0usize;
    let mut upward = 0usize;
    for (&r0, &r1) in ranks.parent.as_slice().iter().zip(ranks.child.as_slice()) {
        let p = r0 as f64 / n;
        if s1 <= p && p <= s2 {
            inside += 1;
            if r1 as f64 / n > p + tau {
                upward += 1;
            }
        }
    }
    if inside == 0 {
        return Err(Error::Estimation(format!("no observation has parental rank in [{s1}, {s2}]")));
    }
    Ok(upward as f64 / inside as f64)
}
