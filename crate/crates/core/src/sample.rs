//! Paired parent/child income samples, ranks, and empirical distribution functions.

use crate::error::{Error, Result};

/// Which income margin to operate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Margin {
    Parent,
    Child,
}

/// Categorical group labels, stored as codes into a sorted list of distinct levels.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    levels: Vec<String>,
    codes: Vec<usize>,
}

impl Groups {
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Self {
        let mut levels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        levels.sort();
        levels.dedup();
        let codes = labels
            .iter()
            .map(|s| levels.binary_search_by(|l| l.as_str().cmp(s.as_ref())).unwrap())
            .collect();
        Groups { levels, codes }
    }

    /// Distinct labels in sorted order; the first one is the reference level.
    pub fn levels(&self) -> &[String] {
        &self.levels
    }

    pub fn codes(&self) -> &[usize] {
        &self.codes
    }

    pub fn code_of(&self, label: &str) -> Option<usize> {
        self.levels.iter().position(|l| l == label)
    }

    pub fn label(&self, i: usize) -> &str {
        &self.levels[self.codes[i]]
    }

    pub fn count(&self, code: usize) -> usize {
        self.codes.iter().filter(|&&c| c == code).count()
    }
}

/// Paired parent and child incomes with optional group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    parent: Vec<f64>,
    child: Vec<f64>,
    groups: Option<Groups>,
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Input(format!("{what} value at observation {} is not finite", i + 1))),
        None => Ok(()),
    }
}

impl Sample {
    pub fn new(parent: Vec<f64>, child: Vec<f64>) -> Result<Self> {
        if parent.is_empty() {
            return Err(Error::Input("sample is empty".into()));
        }
        if parent.len() != child.len() {
            return Err(Error::Input(format!(
                "parent and child incomes differ in length ({} vs {})",
                parent.len(),
                child.len()
            )));
        }
        check_finite(&parent, "parent income")?;
        check_finite(&child, "child income")?;
        Ok(Sample { parent, child, groups: None })
    }

    pub fn with_groups<S: AsRef<str>>(parent: Vec<f64>, child: Vec<f64>, labels: &[S]) -> Result<Self> {
        let mut s = Sample::new(parent, child)?;
        if labels.len() != s.len() {
            return Err(Error::Input(format!(
                "{} group labels for {} observations",
                labels.len(),
                s.len()
            )));
        }
        s.groups = Some(Groups::from_labels(labels));
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self) -> &[f64] {
        &self.parent
    }

    pub fn child(&self) -> &[f64] {
        &self.child
    }

    pub fn margin(&self, margin: Margin) -> &[f64] {
        match margin {
            Margin::Parent => &self.parent,
            Margin::Child => &self.child,
        }
    }

    pub fn groups(&self) -> Option<&Groups> {
        self.groups.as_ref()
    }

    /// Rows selected by `indices` (with repetition). Group levels are kept even
    /// when a level no longer occurs among the selected rows.
    pub fn resample(&self, indices: &[usize]) -> Sample {
        let parent = indices.iter().map(|&i| self.parent[i]).collect();
        let child = indices.iter().map(|&i| self.child[i]).collect();
        let groups = self.groups.as_ref().map(|g| Groups {
            levels: g.levels.clone(),
            codes: indices.iter().map(|&i| g.codes[i]).collect(),
        });
        Sample { parent, child, groups }
    }

    pub fn ranks(&self) -> PairedRanks {
        PairedRanks {
            parent: ranks_of(&self.parent),
            child: ranks_of(&self.child),
        }
    }
}

/// Ranks R = #{k : value_k ≤ value_i}, one per observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector(Vec<u32>);

impl RankVector {
    pub fn new(ranks: Vec<u32>) -> Result<Self> {
        let n = ranks.len() as u32;
        if let Some(r) = ranks.iter().find(|&&r| r < 1 || r > n) {
            return Err(Error::Input(format!("rank {r} outside 1..={n}")));
        }
        Ok(RankVector(ranks))
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// True when the ranks are a permutation of 1..=n.
    pub fn is_tie_free(&self) -> bool {
        let mut seen = vec![false; self.0.len()];
        for &r in &self.0 {
            let slot = &mut seen[r as usize - 1];
            if *slot {
                return false;
            }
            *slot = true;
        }
        true
    }
}

/// Parent and child ranks of the same sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairedRanks {
    pub parent: RankVector,
    pub child: RankVector,
}

impl PairedRanks {
    pub fn new(parent: RankVector, child: RankVector) -> Result<Self> {
        if parent.len() != child.len() {
            return Err(Error::Input(format!(
                "rank vectors differ in length ({} vs {})",
                parent.len(),
                child.len()
            )));
        }
        if parent.is_empty() {
            return Err(Error::Input("rank vectors are empty".into()));
        }
        Ok(PairedRanks { parent, child })
    }

    /// Builds paired ranks from raw (parent, child) rank pairs.
    pub fn from_pairs(pairs: &[(u32, u32)]) -> Result<Self> {
        let p = RankVector::new(pairs.iter().map(|p| p.0).collect())?;
        let c = RankVector::new(pairs.iter().map(|p| p.1).collect())?;
        PairedRanks::new(p, c)
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn is_tie_free(&self) -> bool {
        self.parent.is_tie_free() && self.child.is_tie_free()
    }
}

/// Max-rank convention: tied values all receive the largest position they occupy.
fn ranks_of(values: &[f64]) -> RankVector {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0u32; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && values[order[end]] == values[order[start]] {
            end += 1;
        }
        for &i in &order[start..end] {
            ranks[i] = end as u32;
        }
        start = end;
    }
    RankVector(ranks)
}

/// Ranks of one margin of the sample.
pub fn compute_ranks(sample: &Sample, margin: Margin) -> Result<RankVector> {
    let values = sample.margin(margin);
    check_finite(values, "income")?;
    Ok(ranks_of(values))
}

/// Empirical distribution of a real sample, kept sorted for O(log n) queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    sorted: Vec<f64>,
}

impl EmpiricalDistribution {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("empirical distribution of an empty sequence".into()));
        }
        check_finite(values, "sample")?;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalDistribution { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// F̂(y) = n⁻¹ #{i : value_i ≤ y}.
    pub fn cdf(&self, y: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= y);
        count as f64 / self.sorted.len() as f64
    }

    /// Q̂(p) = inf{y : F̂(y) ≥ p}, for p in (0, 1].
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::Domain(format!("quantile level {p} outside (0, 1]")));
        }
        let n = self.sorted.len();
        let nf = n as f64;
        // Smallest k with k/n ≥ p, using the same floating comparison as `cdf`.
        let mut k = ((p * nf).ceil() as usize).clamp(1, n);
        while k > 1 && (k - 1) as f64 / nf >= p {
            k -= 1;
        }
        while k < n && (k as f64 / nf) < p {
            k += 1;
        }
        Ok(self.sorted[k - 1])
    }
}

/// Fraction of `values` that are ≤ `y`.
pub fn empirical_cdf(values: &[f64], y: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Input("empirical CDF of an empty sequence".into()));
    }
    let count = values.iter().filter(|&&v| v <= y).count();
    Ok(count as f64 / values.len() as f64)
}

/// Left-continuous generalized inverse of the empirical CDF.
pub fn empirical_quantile(values: &[f64], p: f64) -> Result<f64> {
    EmpiricalDistribution::new(values)?.quantile(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample(p: &[f64], c: &[f64]) -> Sample {
        Sample::new(p.to_vec(), c.to_vec()).unwrap()
    }

    #[test]
    fn ranks_examples() {
        let s = sample(&[3.0, 1.0, 2.0], &[1.0, 1.0, 0.0]);
        assert_eq!(compute_ranks(&s, Margin::Parent).unwrap().as_slice(), &[3, 1, 2]);
        assert_eq!(compute_ranks(&s, Margin::Child).unwrap().as_slice(), &[3, 3, 1]);
        let tie = sample(&[1.0, 1.0], &[0.0, 1.0]);
        assert_eq!(compute_ranks(&tie, Margin::Parent).unwrap().as_slice(), &[2, 2]);
        let one = sample(&[5.0], &[2.0]);
        assert_eq!(compute_ranks(&one, Margin::Parent).unwrap().as_slice(), &[1]);
    }

    #[test]
    fn sample_rejects_bad_input() {
        assert!(matches!(Sample::new(vec![], vec![]), Err(Error::Input(_))));
        assert!(matches!(Sample::new(vec![1.0], vec![1.0, 2.0]), Err(Error::Input(_))));
        assert!(matches!(Sample::new(vec![f64::NAN], vec![1.0]), Err(Error::Input(_))));
        assert!(matches!(
            Sample::with_groups(vec![1.0, 2.0], vec![1.0, 2.0], &["a"]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn ecdf_examples() {
        let v = [1.0, 2.0, 3.0];
        assert_eq!(empirical_cdf(&v, 2.0).unwrap(), 2.0 / 3.0);
        assert_eq!(empirical_cdf(&v, 0.5).unwrap(), 0.0);
        assert_eq!(empirical_cdf(&v, 10.0).unwrap(), 1.0);
        assert!(empirical_cdf(&[], 1.0).is_err());
    }

    #[test]
    fn quantile_examples() {
        let v = [10.0, 20.0, 30.0];
        assert_eq!(empirical_quantile(&v, 0.5).unwrap(), 20.0);
        assert_eq!(empirical_quantile(&v, 1.0).unwrap(), 30.0);
        assert_eq!(empirical_quantile(&v, 0.34).unwrap(), 20.0);
        assert_eq!(empirical_quantile(&v, 1.0 / 3.0).unwrap(), 10.0);
        assert!(matches!(empirical_quantile(&v, 0.0), Err(Error::Domain(_))));
        assert!(matches!(empirical_quantile(&v, 1.01), Err(Error::Domain(_))));
    }

    #[test]
    fn quantile_exact_decimal_levels() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        // 0.3 * 10 rounds above 3 in floating point; the answer is still the 3rd value.
        assert_eq!(empirical_quantile(&v, 0.3).unwrap(), 3.0);
        assert_eq!(empirical_quantile(&v, 0.7).unwrap(), 7.0);
    }

    #[test]
    fn groups_resample_keeps_labels() {
        let s = Sample::with_groups(vec![1.0, 2.0, 3.0], vec![3.0, 2.0, 1.0], &["b", "a", "b"]).unwrap();
        let g = s.groups().unwrap();
        assert_eq!(g.levels(), &["a".to_string(), "b".to_string()]);
        assert_eq!(g.codes(), &[1, 0, 1]);
        let r = s.resample(&[2, 2, 0]);
        assert_eq!(r.parent(), &[3.0, 3.0, 1.0]);
        let rg = r.groups().unwrap();
        assert_eq!(rg.levels(), g.levels());
        assert_eq!(rg.count(0), 0);
        assert_eq!(rg.label(2), "b");
    }

    fn values_strategy() -> impl Strategy<Value = Vec<f64>> {
        // Small integer grid to force ties.
        prop::collection::vec((-20i32..20).prop_map(|v| v as f64 * 0.5), 1..60)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn galois_pair(values in values_strategy(), p in 1e-9f64..=1.0) {
            let q = empirical_quantile(&values, p).unwrap();
            prop_assert!(empirical_cdf(&values, q).unwrap() >= p);
            for &v in &values {
                let f = empirical_cdf(&values, v).unwrap();
                prop_assert!(empirical_quantile(&values, f).unwrap() <= v);
            }
        }

        #[test]
        fn rank_ecdf_consistency(values in values_strategy()) {
            let n = values.len();
            let s = Sample::new(values.clone(), values.clone()).unwrap();
            let r = compute_ranks(&s, Margin::Parent).unwrap();
            for (i, &ri) in r.as_slice().iter().enumerate() {
                prop_assert!(ri >= 1 && ri as usize <= n);
                prop_assert_eq!(ri as f64 / n as f64, empirical_cdf(&values, values[i]).unwrap());
            }
        }

        #[test]
        fn monotone_ecdf_and_quantile(values in values_strategy(), a in -12.0f64..12.0, b in -12.0f64..12.0,
                                      p in 1e-6f64..=1.0, q in 1e-6f64..=1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(empirical_cdf(&values, lo).unwrap() <= empirical_cdf(&values, hi).unwrap());
            let (pl, ph) = if p <= q { (p, q) } else { (q, p) };
            prop_assert!(empirical_quantile(&values, pl).unwrap() <= empirical_quantile(&values, ph).unwrap());
            let ed = EmpiricalDistribution::new(&values).unwrap();
            prop_assert_eq!(ed.cdf(lo), empirical_cdf(&values, lo).unwrap());
        }

        #[test]
        fn tie_free_ranks_are_permutations(values in prop::collection::hash_set(-1000i32..1000, 1..50)) {
            let v: Vec<f64> = values.into_iter().map(f64::from).collect();
            let s = Sample::new(v.clone(), v).unwrap();
            prop_assert!(compute_ranks(&s, Margin::Child).unwrap().is_tie_free());
        }
    }
}
