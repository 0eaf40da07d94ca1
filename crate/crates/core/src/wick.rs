//! Exact combinatorics of Wick contractions: pairing multi-indices, their
//! coefficients, and a brute-force matching oracle in rational arithmetic.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::numeric::ln_factorial;
use crate::series::{check_product_bound, CoefficientFamily, ProductBound};

pub type ExactValue = BigRational;

/// Largest enumeration `enumerate_by_norm` will produce.
pub const ENUMERATION_LIMIT: u128 = 10_000_000;
/// Largest number of legs the matching oracle accepts.
pub const MAX_LEGS: u32 = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WickError {
    #[error("n_points must be at least 2, got {0}")]
    TooFewPoints(usize),
    #[error("expected {expected} multiplicities for {n_points} points, got {got}")]
    Shape { n_points: usize, expected: usize, got: usize },
    #[error("enumeration of {0} multi-indices exceeds the limit")]
    Explosion(u128),
    #[error("{0} legs exceed the matching oracle limit of {MAX_LEGS}")]
    TooManyLegs(u32),
    #[error("pair-value matrix must be {0}×{0}")]
    Matrix(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

/// Pairing multiplicities k_{jm}, j < m, stored in lexicographic (j, m) order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ContractionMultiIndex {
    n_points: usize,
    k: Vec<u32>,
}

pub fn pair_count(n_points: usize) -> usize {
    n_points * (n_points.saturating_sub(1)) / 2
}

impl ContractionMultiIndex {
    pub fn new(n_points: usize, k: Vec<u32>) -> Result<Self, WickError> {
        if n_points < 2 {
            return Err(WickError::TooFewPoints(n_points));
        }
        let expected = pair_count(n_points);
        if k.len() != expected {
            return Err(WickError::Shape { n_points, expected, got: k.len() });
        }
        Ok(ContractionMultiIndex { n_points, k })
    }

    pub fn zero(n_points: usize) -> Result<Self, WickError> {
        Self::new(n_points, vec![0; pair_count(n_points)])
    }

    /// Builds an index from (j, m, k_{jm}) entries with 0-based j ≠ m.
    pub fn from_pairs(n_points: usize, entries: &[(usize, usize, u32)]) -> Result<Self, WickError> {
        let mut idx = Self::zero(n_points)?;
        for &(j, m, v) in entries {
            let p = idx.slot(j.min(m), j.max(m));
            idx.k[p] += v;
        }
        Ok(idx)
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn entries(&self) -> &[u32] {
        &self.k
    }

    fn slot(&self, j: usize, m: usize) -> usize {
        assert!(j < m && m < self.n_points, "pair ({j}, {m}) out of range");
        j * (2 * self.n_points - j - 1) / 2 + (m - j - 1)
    }

    pub fn get(&self, j: usize, m: usize) -> u32 {
        if j == m {
            0
        } else {
            self.k[self.slot(j.min(m), j.max(m))]
        }
    }

    /// Iterates ((j, m), k_{jm}) in storage order.
    pub fn pairs(&self) -> impl Iterator<Item = ((usize, usize), u32)> + '_ {
        let n = self.n_points;
        (0..n).flat_map(move |j| (j + 1..n).map(move |m| (j, m))).zip(self.k.iter().copied())
    }

    pub fn norm(&self) -> u32 {
        self.k.iter().sum()
    }
}

impl fmt::Display for ContractionMultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.k.iter().map(|v| v.to_string()).collect();
        write!(f, "[{}]", parts.join(" "))
    }
}

/// κ_j = Σ_{m≠j} k_{jm}.
pub fn kappa(idx: &ContractionMultiIndex) -> Vec<u32> {
    let mut kap = vec![0; idx.n_points];
    for ((j, m), v) in idx.pairs() {
        kap[j] += v;
        kap[m] += v;
    }
    kap
}

fn factorial(n: u32) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, i| acc * BigInt::from(i))
}

/// κ!/K! = ∏ κ_j! / ∏ k_{jm}!.
pub fn kappa_ratio(idx: &ContractionMultiIndex) -> BigInt {
    let num = kappa(idx).iter().fold(BigInt::one(), |acc, &v| acc * factorial(v));
    let den = idx.k.iter().fold(BigInt::one(), |acc, &v| acc * factorial(v));
    num / den
}

/// D_K = (κ!/K!) ∏_{j<split} d̄_{κ_j} ∏_{j≥split} d_{κ_j} for rational d (d_k = 0 past
/// the slice). Conjugation is the identity on rationals, so `conjugate_split`
/// only fixes which factors are labelled conjugate.
pub fn coefficient_dk_exact(idx: &ContractionMultiIndex, d: &[ExactValue], _conjugate_split: Option<usize>) -> ExactValue {
    let mut value = BigRational::from_integer(kappa_ratio(idx));
    for kj in kappa(idx) {
        match d.get(kj as usize) {
            Some(v) => value *= v,
            None => return BigRational::zero(),
        }
    }
    value
}

/// ln D_K for nonnegative real families.
pub fn coefficient_dk_log(idx: &ContractionMultiIndex, d: &CoefficientFamily, _conjugate_split: Option<usize>) -> f64 {
    let kap = kappa(idx);
    let ratio: f64 = kap.iter().map(|&v| ln_factorial(v as f64)).sum::<f64>()
        - idx.k.iter().map(|&v| ln_factorial(v as f64)).sum::<f64>();
    ratio + kap.iter().map(|&v| d.log_d(v as u64)).sum::<f64>()
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r.saturating_mul(n - i) / (i + 1);
    }
    r
}

/// Number of multi-indices of norm q: C(q + P − 1, q).
pub fn count_by_norm(n_points: usize, q: u32) -> u128 {
    let p = pair_count(n_points) as u128;
    binomial(q as u128 + p - 1, q as u128)
}

/// All K with |K| = q, in lexicographic order of the stored vector.
pub fn enumerate_by_norm(n_points: usize, q: u32) -> Result<Vec<ContractionMultiIndex>, WickError> {
    if n_points < 2 {
        return Err(WickError::TooFewPoints(n_points));
    }
    let count = count_by_norm(n_points, q);
    if count > ENUMERATION_LIMIT {
        return Err(WickError::Explosion(count));
    }
    let p = pair_count(n_points);
    let mut out = Vec::with_capacity(count as usize);
    let mut cur = vec![0u32; p];
    fn rec(pos: usize, left: u32, cur: &mut Vec<u32>, n_points: usize, out: &mut Vec<ContractionMultiIndex>) {
        if pos == cur.len() - 1 {
            cur[pos] = left;
            out.push(ContractionMultiIndex { n_points, k: cur.clone() });
            return;
        }
        for v in 0..=left {
            cur[pos] = v;
            rec(pos + 1, left - v, cur, n_points, out);
        }
    }
    rec(0, q, &mut cur, n_points, &mut out);
    Ok(out)
}

fn check_matrix(values: &[Vec<ExactValue>], n: usize) -> Result<(), WickError> {
    if values.len() != n || values.iter().any(|r| r.len() != n) {
        return Err(WickError::Matrix(n));
    }
    Ok(())
}

/// Rewrites the upper-triangle pair values as integers over one common
/// denominator: v_{jm} = num[j][m] / den.
fn common_denominator(values: &[Vec<ExactValue>]) -> (Vec<Vec<BigInt>>, BigInt) {
    let n = values.len();
    let mut den = BigInt::one();
    for j in 0..n {
        for m in j + 1..n {
            den = den.lcm(values[j][m].denom());
        }
    }
    let num = (0..n)
        .map(|j| {
            (0..n)
                .map(|m| {
                    let (a, b) = (j.min(m), j.max(m));
                    if a == b {
                        BigInt::zero()
                    } else {
                        let v = &values[a][b];
                        v.numer() * (&den / v.denom())
                    }
                })
                .collect()
        })
        .collect();
    (num, den)
}

fn legs_of(profile: &[u32]) -> Vec<usize> {
    profile.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat(j).take(c as usize)).collect()
}

/// Visits every perfect matching of the labelled legs with no edge inside a
/// vertex; `visit` receives the edges as vertex pairs (min, max).
fn for_each_matching(legs: &[usize], visit: &mut dyn FnMut(&[(usize, usize)])) {
    fn rec(legs: &[usize], used: &mut [bool], edges: &mut Vec<(usize, usize)>, visit: &mut dyn FnMut(&[(usize, usize)])) {
        let Some(a) = used.iter().position(|u| !u) else {
            visit(edges);
            return;
        };
        used[a] = true;
        for b in a + 1..legs.len() {
            if used[b] || legs[b] == legs[a] {
                continue;
            }
            used[b] = true;
            edges.push((legs[a].min(legs[b]), legs[a].max(legs[b])));
            rec(legs, used, edges, visit);
            edges.pop();
            used[b] = false;
        }
        used[a] = false;
    }
    let mut used = vec![false; legs.len()];
    let mut edges = Vec::with_capacity(legs.len() / 2);
    rec(legs, &mut used, &mut edges, visit);
}

/// Σ over complete contractions of vertices carrying `legs[j]` labelled legs,
/// each weighted by the product of `pair_values[min][max]` over its edges.
pub fn brute_force_pairing_sum(legs: &[u32], pair_values: &[Vec<ExactValue>]) -> Result<ExactValue, WickError> {
    check_matrix(pair_values, legs.len())?;
    let total: u32 = legs.iter().sum();
    if total > MAX_LEGS {
        return Err(WickError::TooManyLegs(total));
    }
    if total % 2 == 1 {
        return Ok(BigRational::zero());
    }
    let (num, den) = common_denominator(pair_values);
    let small: Option<Vec<Vec<i128>>> =
        num.iter().map(|r| r.iter().map(|v| v.to_i128().filter(|x| x.abs() < 1 << 15)).collect()).collect();
    let leg_list = legs_of(legs);
    let mut acc = BigInt::zero();
    match small {
        // Eight edges of |n| < 2^15 fit in i128; sums are flushed before overflow.
        Some(small) => {
            let mut partial: i128 = 0;
            for_each_matching(&leg_list, &mut |edges| {
                let w = edges.iter().fold(1i128, |p, &(a, b)| p * small[a][b]);
                match partial.checked_add(w) {
                    Some(v) => partial = v,
                    None => {
                        acc += BigInt::from(partial);
                        partial = w;
                    }
                }
            });
            acc += BigInt::from(partial);
        }
        None => for_each_matching(&leg_list, &mut |edges| {
            acc += edges.iter().fold(BigInt::one(), |p, &(a, b)| p * &num[a][b]);
        }),
    }
    Ok(BigRational::new(acc, num_traits::pow(den, (total / 2) as usize)))
}

/// For a leg profile, the number of labelled matchings realizing each multi-index.
pub fn matching_multiplicities(legs: &[u32]) -> Result<BTreeMap<ContractionMultiIndex, u64>, WickError> {
    let n = legs.len();
    if n < 2 {
        return Err(WickError::TooFewPoints(n));
    }
    let total: u32 = legs.iter().sum();
    if total > MAX_LEGS {
        return Err(WickError::TooManyLegs(total));
    }
    let mut out = BTreeMap::new();
    let zero = ContractionMultiIndex::zero(n)?;
    for_each_matching(&legs_of(legs), &mut |edges| {
        let mut idx = zero.clone();
        for &(a, b) in edges {
            let s = idx.slot(a, b);
            idx.k[s] += 1;
        }
        *out.entry(idx).or_insert(0) += 1;
    });
    Ok(out)
}

/// Σ over K with every κ_j ≤ n_cut of D_K ∏ v_{jm}^{k_{jm}}.
pub fn multiindex_expansion(
    n_points: usize,
    d: &[ExactValue],
    pair_values: &[Vec<ExactValue>],
    n_cut: u32,
) -> Result<ExactValue, WickError> {
    if n_points < 2 {
        return Err(WickError::TooFewPoints(n_points));
    }
    check_matrix(pair_values, n_points)?;
    let q_max = n_points as u32 * n_cut / 2;
    let total: u128 = (0..=q_max).map(|q| count_by_norm(n_points, q)).sum();
    if total > ENUMERATION_LIMIT {
        return Err(WickError::Explosion(total));
    }
    let mut sum = BigRational::zero();
    for q in 0..=q_max {
        for idx in enumerate_by_norm(n_points, q)? {
            if kappa(&idx).iter().any(|&v| v > n_cut) {
                continue;
            }
            let mut term = coefficient_dk_exact(&idx, d, None);
            if term.is_zero() {
                continue;
            }
            for ((j, m), v) in idx.pairs() {
                if v > 0 {
                    term *= num_traits::pow(pair_values[j][m].clone(), v as usize);
                }
            }
            sum += term;
        }
    }
    Ok(sum)
}

/// Σ over vertex degrees k_j ≤ n_cut of ∏ d_{k_j} times the matching oracle.
pub fn degree_summed_oracle(
    n_points: usize,
    d: &[ExactValue],
    pair_values: &[Vec<ExactValue>],
    n_cut: u32,
) -> Result<ExactValue, WickError> {
    check_matrix(pair_values, n_points)?;
    let mut sum = BigRational::zero();
    let mut degrees = vec![0u32; n_points];
    loop {
        let total: u32 = degrees.iter().sum();
        let weight = degrees
            .iter()
            .try_fold(BigRational::one(), |acc, &k| d.get(k as usize).map(|v| acc * v));
        if let Some(w) = weight {
            if total % 2 == 0 && !w.is_zero() {
                sum += w * brute_force_pairing_sum(&degrees, pair_values)?;
            }
        }
        let mut i = 0;
        loop {
            if i == n_points {
                return Ok(sum);
            }
            if degrees[i] < n_cut {
                degrees[i] += 1;
                break;
            }
            degrees[i] = 0;
            i += 1;
        }
    }
}

/// Reads a square matrix of rationals ("p/q", integers or decimals) from CSV.
pub fn read_pair_values(path: &Path) -> Result<Vec<Vec<ExactValue>>, WickError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| WickError::Parse(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| WickError::Parse(e.to_string()))?;
        rows.push(rec.iter().map(parse_rational).collect::<Result<Vec<_>, _>>()?);
    }
    check_matrix(&rows, rows.len())?;
    Ok(rows)
}

/// Parses "p/q", an integer, or a finite decimal into an exact rational.
pub fn parse_rational(s: &str) -> Result<ExactValue, WickError> {
    let bad = || WickError::Parse(format!("not a rational: '{s}'"));
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.starts_with('-');
        let digits = format!("{}{}", int.trim_start_matches(['-', '+']), frac);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let den = num_traits::pow(BigInt::from(10), frac.len());
        let v = BigRational::new(n, den);
        return Ok(if neg { -v } else { v });
    }
    Ok(BigRational::from_integer(s.parse().map_err(|_| bad())?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientBoundReport {
    pub holds: bool,
    /// Smallest rhs − lhs (log) over the sweep.
    pub min_slack: f64,
    pub worst: Option<ContractionMultiIndex>,
    /// ln C′ = (n_points − 1) ln C from the product condition.
    pub log_c: f64,
    /// ln h′ = ln(4 P h²), P = number of pairs.
    pub log_h: f64,
    /// Smallest ln h′ that works with C′ = 1 on the sweep.
    pub fitted_log_h: f64,
    pub checked: usize,
}

/// Checks ln D_K ≤ ln C′ + |K| ln h′ + ln|K|! + ln d_{2|K|} for all K with
/// |K| ≤ max_norm, with (C′, h′) built from the product-condition constants.
pub fn check_coefficient_bound(d: &CoefficientFamily, n_points: usize, max_norm: u32) -> Result<CoefficientBoundReport, WickError> {
    let (log_c41, h) = match check_product_bound(d, 200) {
        ProductBound::Holds { log_c, h } => (log_c, h),
        _ => (f64::INFINITY, f64::INFINITY),
    };
    let p = pair_count(n_points) as f64;
    let log_c = (n_points as f64 - 1.0) * log_c41;
    let log_h = (4.0 * p).ln() + 2.0 * h.ln();
    let mut min_slack = f64::INFINITY;
    let mut worst = None;
    let mut fitted_log_h = f64::NEG_INFINITY;
    let mut checked = 0;
    for q in 0..=max_norm {
        let base = ln_factorial(q as f64) + d.log_d(2 * q as u64);
        for idx in enumerate_by_norm(n_points, q)? {
            let lhs = coefficient_dk_log(&idx, d, None);
            checked += 1;
            if lhs == f64::NEG_INFINITY {
                continue;
            }
            let slack = log_c + q as f64 * log_h + base - lhs;
            // Relative rounding of the log terms.
            let slack = if slack.abs() < 1e-12 * lhs.abs().max(1.0) { 0.0 } else { slack };
            if slack < min_slack {
                min_slack = slack;
                worst = Some(idx.clone());
            }
            if q > 0 {
                fitted_log_h = fitted_log_h.max((lhs - base) / q as f64);
            }
        }
    }
    Ok(CoefficientBoundReport { holds: min_slack >= 0.0, min_slack, worst, log_c, log_h, fitted_log_h, checked })
}

/// Converts an exact rational to the nearest f64 (for reporting).
pub fn to_f64(v: &ExactValue) -> f64 {
    let (n, d) = (v.numer(), v.denom());
    match (n.to_f64(), d.to_f64()) {
        (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
        _ => {
            let shift = n.bits().max(d.bits()) as i64 - 1000;
            let s = shift.max(0) as usize;
            let a = (n >> s).to_f64().unwrap_or(0.0);
            let b = (d >> s).to_f64().unwrap_or(1.0);
            let r = a / b;
            if v.is_negative() && r > 0.0 {
                -r
            } else {
                r
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(p: i64, q: i64) -> ExactValue {
        BigRational::new(p.into(), q.into())
    }

    fn uniform(n: usize, v: ExactValue) -> Vec<Vec<ExactValue>> {
        vec![vec![v; n]; n]
    }

    #[test]
    fn kappa_examples() {
        let k = ContractionMultiIndex::new(2, vec![5]).unwrap();
        assert_eq!(kappa(&k), vec![5, 5]);
        let k = ContractionMultiIndex::from_pairs(4, &[(0, 1, 1), (2, 3, 2)]).unwrap();
        assert_eq!(kappa(&k), vec![1, 1, 2, 2]);
        let k = ContractionMultiIndex::new(4, vec![1; 6]).unwrap();
        assert_eq!(kappa(&k), vec![3, 3, 3, 3]);
        assert!(ContractionMultiIndex::new(4, vec![1; 5]).is_err());
    }

    #[test]
    fn slots_follow_lexicographic_pairs() {
        let k = ContractionMultiIndex::new(4, vec![1, 2, 3, 4, 5, 6]).unwrap();
        let order: Vec<(usize, usize)> = k.pairs().map(|(p, _)| p).collect();
        assert_eq!(order, vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]);
        assert_eq!(k.get(3, 1), 5);
        assert_eq!(k.get(2, 2), 0);
    }

    #[test]
    fn coefficient_examples() {
        let d: Vec<ExactValue> = vec![r(1, 1), r(1, 2), r(1, 3), r(1, 7)];
        let k = ContractionMultiIndex::new(2, vec![3]).unwrap();
        assert_eq!(coefficient_dk_exact(&k, &d, Some(1)), r(6, 49));
        let zero = ContractionMultiIndex::zero(4).unwrap();
        assert_eq!(coefficient_dk_exact(&zero, &d, None), r(1, 1));
        let ones = vec![r(1, 1); 5];
        let k = ContractionMultiIndex::from_pairs(4, &[(0, 1, 2)]).unwrap();
        assert_eq!(coefficient_dk_exact(&k, &ones, None), r(2, 1));
        assert_eq!(matching_multiplicities(&[2, 2, 0, 0]).unwrap()[&k], 2);
    }

    #[test]
    fn log_coefficient_matches_exact() {
        let fam = CoefficientFamily::normal_exp(1.0).unwrap();
        let d: Vec<ExactValue> = (0..12).map(|k| BigRational::new(1.into(), factorial(k))).collect();
        for idx in enumerate_by_norm(4, 4).unwrap() {
            let exact = to_f64(&coefficient_dk_exact(&idx, &d, None)).ln();
            assert!((coefficient_dk_log(&idx, &fam, Some(2)) - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(enumerate_by_norm(2, 5).unwrap().len(), 1);
        let v = enumerate_by_norm(4, 2).unwrap();
        assert_eq!(v.len(), 21);
        assert!(v.windows(2).all(|w| w[0].entries() < w[1].entries()));
        assert_eq!(enumerate_by_norm(4, 0).unwrap(), vec![ContractionMultiIndex::zero(4).unwrap()]);
        assert!(matches!(enumerate_by_norm(12, 9), Err(WickError::Explosion(_))));
    }

    #[test]
    fn brute_force_examples() {
        let w = r(3, 5);
        assert_eq!(brute_force_pairing_sum(&[1, 1], &uniform(2, w.clone())).unwrap(), w);
        assert_eq!(brute_force_pairing_sum(&[2, 2], &uniform(2, w.clone())).unwrap(), r(2, 1) * &w * &w);
        assert!(brute_force_pairing_sum(&[1, 1, 1], &uniform(3, w.clone())).unwrap().is_zero());
        assert!(brute_force_pairing_sum(&[9, 9], &uniform(2, w)).is_err());
    }

    #[test]
    fn brute_force_counts_match_double_factorials() {
        // Four vertices of one leg each: 3 matchings; (2,2,2): 8 matchings.
        let one = uniform(4, r(1, 1));
        assert_eq!(brute_force_pairing_sum(&[1, 1, 1, 1], &one).unwrap(), r(3, 1));
        assert_eq!(brute_force_pairing_sum(&[2, 2, 2], &uniform(3, r(1, 1))).unwrap(), r(8, 1));
    }

    #[test]
    fn expansion_examples() {
        let d0 = vec![r(1, 1)];
        assert_eq!(multiindex_expansion(2, &d0, &uniform(2, r(5, 3)), 4).unwrap(), r(1, 1));
        let d = vec![r(1, 1); 4];
        let v = uniform(2, r(1, 1));
        assert_eq!(multiindex_expansion(2, &d, &v, 3).unwrap(), r(10, 1));
        assert_eq!(degree_summed_oracle(2, &d, &v, 3).unwrap(), r(10, 1));
    }

    #[test]
    fn expansion_equals_oracle_with_distinct_values() {
        let d = vec![r(1, 1), r(-2, 3), r(5, 7)];
        let vals: Vec<Vec<ExactValue>> =
            (0..4).map(|j| (0..4).map(|m| r(1 + (j * 4 + m) as i64, 3 + m as i64)).collect()).collect();
        let lhs = multiindex_expansion(4, &d, &vals, 2).unwrap();
        let rhs = degree_summed_oracle(4, &d, &vals, 2).unwrap();
        assert_eq!(lhs, rhs);
        assert!(!lhs.is_zero());
    }

    #[test]
    fn coefficient_bound_examples() {
        let fam = CoefficientFamily::factorial_power(1.0).unwrap();
        let two = check_coefficient_bound(&fam, 2, 30).unwrap();
        assert!(two.holds, "{two:?}");
        // k!·d_k² ≤ C(2k,k)·k!·d_{2k}: a unit h′ cannot hold, 4 is the limit.
        assert!(two.fitted_log_h > 0.0 && two.fitted_log_h <= 4f64.ln() + 1e-12);
        let four = check_coefficient_bound(&fam, 4, 6).unwrap();
        assert!(four.holds && four.checked == (0..=6).map(|q| count_by_norm(4, q) as usize).sum::<usize>());
        let zero = check_coefficient_bound(&fam, 4, 0).unwrap();
        assert_eq!(zero.min_slack, 0.0);
    }

    #[test]
    fn parse_rational_forms() {
        assert_eq!(parse_rational("3/4").unwrap(), r(3, 4));
        assert_eq!(parse_rational("-0.25").unwrap(), r(-1, 4));
        assert_eq!(parse_rational("7").unwrap(), r(7, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn large_numerators_take_the_bigint_path() {
        let big = BigRational::new(BigInt::from(1u64 << 40), BigInt::from(3));
        let vals = uniform(2, big.clone());
        let got = brute_force_pairing_sum(&[3, 3], &vals).unwrap();
        assert_eq!(got, r(6, 1) * num_traits::pow(big, 3));
    }

    proptest! {
        #[test]
        fn kappa_sums_to_twice_norm(n in 2usize..6, q in 0u32..5, pick in 0usize..1000) {
            let all = enumerate_by_norm(n, q).unwrap();
            let idx = &all[pick % all.len()];
            prop_assert_eq!(kappa(idx).iter().sum::<u32>(), 2 * idx.norm());
            prop_assert_eq!(idx.norm(), q);
        }
    }
}
