//! Exact oracles for the two probabilistic estimates behind the norm bounds:
//! the binomial product expectation `f(q) = E ∏_{n≤N} (n − 1/q)` and the
//! expectation of products of (centered) matching indicators along a path.
//!
//! Everything is computed in exact rational arithmetic. Path expectations are
//! obtained by averaging over every matching of `nd ≤ 12` half-edges, and the
//! permutation analogue by averaging over all `n!` permutations, `n ≤ 7`.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::configuration::{for_each_matching, matching_count, HalfEdge};
use crate::error::{Error, Result};
use crate::pathmatrices::is_admissible;

/// Largest `nd` for which matchings are enumerated.
pub const MAX_MATCHING_POINTS: usize = 12;
/// Largest `n` for which permutations are enumerated.
pub const MAX_PERMUTATION_POINTS: usize = 7;
/// Acceptance envelope for measured constants.
pub const SURVEY_ENVELOPE: f64 = 100.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BinomialBound {
    pub k: u32,
    /// Exact `f(q)`.
    pub value: BigRational,
    /// `4(3k√q)^k`.
    pub bound: f64,
    /// `|f(q)| ≤ 4(3k√q)^k`, decided exactly.
    pub holds: bool,
}

fn rational_parts(x: &BigRational) -> (BigInt, BigInt) {
    let r = x.reduced();
    (r.numer().clone(), r.denom().clone())
}

/// Exact `f(q) = Σ_t C(k,t) p^t (1−p)^{k−t} ∏_{n=1}^t (n − 1/q)` for
/// `N ~ Bin(k, p)`, together with the bound `4(3k√q)^k`.
///
/// Requires `0 < p < 1`, `q ≥ p` and `4(1 − p/q)² ≤ 2qk² ≤ 1`.
pub fn binomial_product_expectation(k: u32, p: &BigRational, q: &BigRational) -> Result<BinomialBound> {
    let zero = BigRational::zero();
    let one = BigRational::one();
    if k == 0 {
        return Err(Error::PreconditionFailed("k ≥ 1".into()));
    }
    if *p <= zero || *p >= one {
        return Err(Error::PreconditionFailed("0 < p < 1".into()));
    }
    if q < p {
        return Err(Error::PreconditionFailed("q ≥ p".into()));
    }
    let two_qk2 = q * BigRational::from_integer(BigInt::from(2 * k as u64 * k as u64));
    let gap = &one - p / q;
    if BigRational::from_integer(4.into()) * &gap * &gap > two_qk2 {
        return Err(Error::PreconditionFailed("4(1 − p/q)² ≤ 2qk²".into()));
    }
    if two_qk2 > one {
        return Err(Error::PreconditionFailed("2qk² ≤ 1".into()));
    }

    // Over the common denominator pd^k · qn^k every term is an integer.
    let (pn, pd) = rational_parts(p);
    let (qn, qd) = rational_parts(q);
    let rest = &pd - &pn;
    let mut numerator = BigInt::zero();
    let mut binom = BigInt::one();
    let mut falling = BigInt::one();
    for t in 0..=k {
        if t > 0 {
            binom = binom * BigInt::from(k - t + 1) / BigInt::from(t);
            falling *= BigInt::from(t) * &qn - &qd;
        }
        let term = &binom * pn.pow(t) * rest.pow(k - t) * qn.pow(k - t) * &falling;
        numerator += term;
    }
    let denominator = pd.pow(k) * qn.pow(k);
    let value = BigRational::new(numerator.clone(), denominator.clone());

    // |f| ≤ 4(3k√q)^k  ⇔  f² ≤ 16 · 9^k · k^{2k} · q^k.
    let kk = BigInt::from(k);
    let lhs = &numerator * &numerator * qd.pow(k);
    let rhs = BigInt::from(16) * BigInt::from(9).pow(k) * kk.pow(2 * k) * qn.pow(k) * &denominator * &denominator;
    let holds = lhs <= rhs;
    let qf = q.to_f64().unwrap_or(f64::NAN);
    let bound = 4.0 * (3.0 * k as f64 * qf.sqrt()).powi(k as i32);
    Ok(BinomialBound { k, value, bound, holds })
}

/// Terminating confluent hypergeometric function
/// `U(−n, b, z) = (−1)^n Σ_j C(n,j) (b+j)^{(n−j)} (−z)^j`, with `x^{(r)}` the
/// rising factorial, summed exactly (the float series cancels badly for small `p`).
pub fn hypergeometric_u_terminating(n: u32, b: &BigRational, z: &BigRational) -> BigRational {
    let mut sum = BigRational::zero();
    let mut binom = BigInt::one();
    for j in 0..=n {
        if j > 0 {
            binom = binom * BigInt::from(n - j + 1) / BigInt::from(j);
        }
        let mut term = BigRational::from_integer(binom.clone());
        for i in 0..n - j {
            term *= b + BigRational::from_integer(BigInt::from(j + i));
        }
        for _ in 0..j {
            term *= -z;
        }
        sum += term;
    }
    if n % 2 == 1 {
        -sum
    } else {
        sum
    }
}

/// `p^k U(−k, 1/q − k, 1/p − 1)`, the closed form of `f(q)`.
pub fn binomial_product_via_u(k: u32, p: &BigRational, q: &BigRational) -> BigRational {
    let one = BigRational::one();
    let b = q.recip() - BigRational::from_integer(BigInt::from(k));
    let z = p.recip() - &one;
    let pk = (0..k).fold(one, |acc, _| acc * p);
    pk * hypergeometric_u_terminating(k, &b, &z)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinomialGridReport {
    pub max_k: u32,
    /// Grid step denominator; `p, q ∈ {1/steps, 2/steps, …}`.
    pub steps: u32,
    /// Number of `(k, p, q)` satisfying the hypotheses.
    pub checked: usize,
    pub violations: usize,
    /// Largest `|f|/bound` seen.
    pub worst_ratio: f64,
    /// `(k, p·steps, q·steps)` realizing `worst_ratio`.
    pub worst_at: (u32, u32, u32),
}

/// Checks the binomial bound on every `(k, p, q)` with `k ≤ max_k`,
/// `p, q ∈ {i/steps : 1 ≤ i ≤ max_numerator}` satisfying the hypotheses.
pub fn binomial_grid_survey(max_k: u32, steps: u32, max_numerator: u32) -> BinomialGridReport {
    let den = BigInt::from(steps);
    let points: Vec<(u32, u32, u32)> = (1..=max_k)
        .flat_map(|k| (1..=max_numerator).map(move |qi| (k, qi)))
        .filter(|&(k, qi)| 2 * qi as u64 * (k as u64).pow(2) <= steps as u64)
        .flat_map(|(k, qi)| (1..=qi).map(move |pi| (k, pi, qi)))
        .collect();
    let results: Vec<Option<(bool, f64)>> = points
        .par_iter()
        .map(|&(k, pi, qi)| {
            let p = BigRational::new(BigInt::from(pi), den.clone());
            let q = BigRational::new(BigInt::from(qi), den.clone());
            binomial_product_expectation(k, &p, &q)
                .ok()
                .map(|b| (b.holds, b.value.abs().to_f64().unwrap_or(f64::INFINITY) / b.bound))
        })
        .collect();
    let mut report = BinomialGridReport { max_k, steps, checked: 0, violations: 0, worst_ratio: 0.0, worst_at: (0, 0, 0) };
    for (point, r) in points.iter().zip(results) {
        let Some((holds, ratio)) = r else { continue };
        report.checked += 1;
        if !holds {
            report.violations += 1;
        }
        if ratio > report.worst_ratio {
            report.worst_ratio = ratio;
            report.worst_at = *point;
        }
    }
    report
}

/// One distinct pair `{e, f}` of `E_γ`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EdgeInfo {
    pub edge: (HalfEdge, HalfEdge),
    pub weight: usize,
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathStatistics {
    /// `|E_γ|`.
    pub a: usize,
    /// Steps `t ≤ k₀` whose pair is consistent with weight 1.
    pub a1: usize,
    /// Inconsistent pairs.
    pub b: usize,
    pub k: usize,
    pub k0: usize,
    /// In order of first visit.
    pub edges: Vec<EdgeInfo>,
}

fn unordered(x: usize, y: usize) -> (usize, usize) {
    (x.min(y), x.max(y))
}

/// Classifies the pairs `{γ_{2t−1}, γ_{2t}}` of an admissible `γ ∈ E^{2k}`.
/// The same definitions serve for permutation paths once the two sides are
/// given disjoint labels.
pub fn classify_path(gamma: &[HalfEdge], k0: usize) -> Result<PathStatistics> {
    if gamma.len() % 2 == 1 {
        return Err(Error::InvalidPath(format!("odd length {}", gamma.len())));
    }
    if !is_admissible(gamma) {
        return Err(Error::InvalidPath("a step pairs a half-edge with itself".into()));
    }
    let k = gamma.len() / 2;
    if k0 > k {
        return Err(Error::InvalidPath(format!("k₀ = {k0} exceeds k = {k}")));
    }
    let steps: Vec<(usize, usize)> = gamma.chunks_exact(2).map(|p| unordered(p[0], p[1])).collect();
    let mut order: Vec<(usize, usize)> = Vec::new();
    let mut weight: HashMap<(usize, usize), usize> = HashMap::new();
    for &s in &steps {
        let w = weight.entry(s).or_insert(0);
        if *w == 0 {
            order.push(s);
        }
        *w += 1;
    }
    let edges: Vec<EdgeInfo> = order
        .iter()
        .map(|&(e, f)| {
            let consistent = steps.iter().all(|&(x, y)| {
                let touches = x == e || x == f || y == e || y == f;
                !touches || (x, y) == (e, f)
            });
            EdgeInfo { edge: (e, f), weight: weight[&(e, f)], consistent }
        })
        .collect();
    let lookup: HashMap<(usize, usize), &EdgeInfo> = edges.iter().map(|x| (x.edge, x)).collect();
    let a1 = steps[..k0].iter().filter(|s| lookup[*s].consistent && lookup[*s].weight == 1).count();
    let b = edges.iter().filter(|x| !x.consistent).count();
    Ok(PathStatistics { a: edges.len(), a1, b, k, k0, edges })
}

/// All matchings of `0..m` as partner tables.
fn all_matchings(m: usize) -> Result<Vec<Vec<u8>>> {
    if m > MAX_MATCHING_POINTS {
        return Err(Error::EnumerationBudget(matching_count(m).min(u64::MAX as u128) as u64));
    }
    let mut out = Vec::with_capacity(matching_count(m) as usize);
    for_each_matching(m, |p| out.push(p.iter().map(|&x| x as u8).collect()));
    Ok(out)
}

fn check_labels(gamma: &[HalfEdge], m: usize) -> Result<()> {
    match gamma.iter().find(|&&g| g >= m) {
        Some(g) => Err(Error::InvalidPath(format!("half-edge {g} outside 0..{m}"))),
        None => Ok(()),
    }
}

/// Exact `E ∏_{t≤k₀} M̲_{γ_{2t−1}γ_{2t}} ∏_{t>k₀} M_{γ_{2t−1}γ_{2t}}` over a
/// uniform matching of `nd` half-edges.
pub fn path_expectation_exact(n: usize, d: usize, gamma: &[HalfEdge], k0: usize) -> Result<BigRational> {
    let m = n * d;
    classify_path(gamma, k0)?;
    check_labels(gamma, m)?;
    let matchings = all_matchings(m)?;
    Ok(expectation_over(&matchings, m, gamma, k0))
}

fn expectation_over(matchings: &[Vec<u8>], m: usize, gamma: &[HalfEdge], k0: usize) -> BigRational {
    // Each centered factor is carried as (m·M − 1) over m.
    let steps: Vec<(usize, usize)> = gamma.chunks_exact(2).map(|p| (p[0], p[1])).collect();
    let mut total = BigInt::zero();
    for sigma in matchings {
        let mut prod: i128 = 1;
        for (t, &(e, f)) in steps.iter().enumerate() {
            let hit = (sigma[e] as usize == f) as i128;
            prod *= if t < k0 { m as i128 * hit - 1 } else { hit };
            if prod == 0 {
                break;
            }
        }
        total += prod;
    }
    let den = BigInt::from(matchings.len()) * BigInt::from(m).pow(k0 as u32);
    BigRational::new(total, den)
}

/// Structural part `9^b (1/dn)^a (4k/√(dn))^{a₁}` of the path bound.
pub fn exppath_structural_bound(stats: &PathStatistics, dn: usize) -> f64 {
    let dn = dn as f64;
    9f64.powi(stats.b as i32) * dn.powi(-(stats.a as i32)) * (4.0 * stats.k as f64 / dn.sqrt()).powi(stats.a1 as i32)
}

/// Sequences of length `len` in restricted-growth form (first occurrences
/// labelled `0, 1, 2, …`) with `s[2t] ≠ s[2t+1]` and at most `max_labels` labels.
pub fn canonical_admissible_patterns(len: usize, max_labels: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: usize, len: usize, max_labels: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for label in 0..=used.min(max_labels - 1) {
            if cur.len() % 2 == 1 && cur[cur.len() - 1] == label {
                continue;
            }
            cur.push(label);
            rec(cur, used.max(label + 1), len, max_labels, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if max_labels > 0 {
        rec(&mut Vec::with_capacity(len), 0, len, max_labels, &mut out);
    }
    out
}

/// Stable 64-bit FNV-1a hash of a path, printed as 16 hex digits.
pub fn path_hash(gamma: &[usize]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &g in gamma {
        for byte in (g as u64).to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurveyRecord {
    pub gamma: Vec<usize>,
    pub gamma_hash: String,
    pub k0: usize,
    pub a: usize,
    pub a1: usize,
    pub b: usize,
    #[serde(serialize_with = "serialize_rational")]
    pub exact: BigRational,
    pub bound: f64,
    /// `|E| / bound`.
    pub implied_c: f64,
}

fn serialize_rational<S: serde::Serializer>(x: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&x.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExppathSurvey {
    pub n: usize,
    pub d: usize,
    /// Requested largest number of steps.
    pub max_k: usize,
    /// Largest `k` actually surveyed, `min(max_k, ⌊√(dn)⌋)`.
    pub k_limit: usize,
    pub records: Vec<SurveyRecord>,
    pub max_c: f64,
    /// Index into `records` of the largest implied constant.
    pub argmax: Option<usize>,
}

impl ExppathSurvey {
    pub const CSV_HEADER: &'static str = "gamma_hash,k0,a,a1,b,exact,bound,implied_c";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:e},{:e}\n",
                r.gamma_hash, r.k0, r.a, r.a1, r.b, r.exact, r.bound, r.implied_c
            ));
        }
        out
    }
}

fn isqrt(x: usize) -> usize {
    let mut r = (x as f64).sqrt() as usize;
    while r * r > x {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= x {
        r += 1;
    }
    r
}

/// Exact expectations for every admissible path with `k ≤ min(max_k, √(dn))`
/// steps and every `k₀ ≤ k`, up to relabelling of half-edges (the uniform
/// matching law is invariant under it), with the implied constant of each.
pub fn exppath_bound_survey(n: usize, d: usize, max_k: usize) -> Result<ExppathSurvey> {
    let m = n * d;
    let matchings = all_matchings(m)?;
    let k_limit = max_k.min(isqrt(m));
    let cases: Vec<(Vec<usize>, usize)> = (1..=k_limit)
        .flat_map(|k| canonical_admissible_patterns(2 * k, m))
        .flat_map(|g| {
            let k = g.len() / 2;
            (0..=k).map(move |k0| (g.clone(), k0))
        })
        .collect();
    let records: Vec<SurveyRecord> = cases
        .into_par_iter()
        .map(|(gamma, k0)| {
            let stats = classify_path(&gamma, k0).expect("canonical patterns are admissible");
            let exact = expectation_over(&matchings, m, &gamma, k0);
            let bound = exppath_structural_bound(&stats, m);
            let implied_c = exact.abs().to_f64().unwrap_or(f64::INFINITY) / bound;
            SurveyRecord { gamma_hash: path_hash(&gamma), gamma, k0, a: stats.a, a1: stats.a1, b: stats.b, exact, bound, implied_c }
        })
        .collect();
    let argmax = (0..records.len()).max_by(|&i, &j| records[i].implied_c.total_cmp(&records[j].implied_c));
    let max_c = argmax.map_or(0.0, |i| records[i].implied_c);
    Ok(ExppathSurvey { n, d, max_k, k_limit, records, max_c, argmax })
}

/// Exact `E ∏_{t≤k₀} (M_{i_t j_t} − 1/n) ∏_{t>k₀} M_{i_t j_t}` for `M` the
/// matrix of a uniform permutation of `0..n`.
pub fn permutation_expectation_exact(n: usize, entries: &[(usize, usize)], k0: usize) -> Result<BigRational> {
    if n > MAX_PERMUTATION_POINTS {
        return Err(Error::EnumerationBudget((1..=n as u64).product()));
    }
    if k0 > entries.len() {
        return Err(Error::InvalidPath(format!("k₀ = {k0} exceeds k = {}", entries.len())));
    }
    if let Some(&(i, j)) = entries.iter().find(|&&(i, j)| i >= n || j >= n) {
        return Err(Error::InvalidPath(format!("entry ({i}, {j}) outside 0..{n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut total = BigInt::zero();
    let mut count = 0u64;
    loop {
        let mut prod: i128 = 1;
        for (t, &(i, j)) in entries.iter().enumerate() {
            let hit = (perm[i] == j) as i128;
            prod *= if t < k0 { n as i128 * hit - 1 } else { hit };
        }
        total += prod;
        count += 1;
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(BigRational::new(total, BigInt::from(count) * BigInt::from(n).pow(k0 as u32)))
}

fn next_permutation(p: &mut [usize]) -> bool {
    let Some(i) = (1..p.len()).rev().find(|&i| p[i - 1] < p[i]) else {
        return false;
    };
    let j = (i..p.len()).rev().find(|&j| p[j] > p[i - 1]).expect("a larger element exists");
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// Statistics of a permutation path: left label `i` is the half-edge `2i`,
/// right label `j` is `2j + 1`, so the two sides never collide.
pub fn classify_permutation_path(entries: &[(usize, usize)], k0: usize) -> Result<PathStatistics> {
    let gamma: Vec<usize> = entries.iter().flat_map(|&(i, j)| [2 * i, 2 * j + 1]).collect();
    classify_path(&gamma, k0)
}

/// Maximum implied constant for the permutation analogue of the path bound,
/// `|E| ≤ c 9^b (1/n)^a (4k/√n)^{a₁}`, over all entry patterns with
/// `k ≤ max_k` steps and `2k ≤ √n`, and all `k₀ ≤ k`.
pub fn permutation_bound_survey(n: usize, max_k: usize) -> Result<f64> {
    let k_limit = max_k.min(isqrt(n) / 2);
    let mut worst: f64 = 0.0;
    for k in 1..=k_limit {
        for left in canonical_admissible_patterns_free(k, n) {
            for right in canonical_admissible_patterns_free(k, n) {
                let entries: Vec<(usize, usize)> = left.iter().copied().zip(right.iter().copied()).collect();
                for k0 in 0..=k {
                    let stats = classify_permutation_path(&entries, k0)?;
                    let e = permutation_expectation_exact(n, &entries, k0)?;
                    let bound = exppath_structural_bound(&stats, n);
                    worst = worst.max(e.abs().to_f64().unwrap_or(f64::INFINITY) / bound);
                }
            }
        }
    }
    Ok(worst)
}

/// Restricted-growth strings of length `len` over at most `max_labels` labels.
fn canonical_admissible_patterns_free(len: usize, max_labels: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: usize, len: usize, max_labels: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == len {
            out.push(cur.clone());
            return;
        }
        for label in 0..=used.min(max_labels - 1) {
            cur.push(label);
            rec(cur, used.max(label + 1), len, max_labels, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if max_labels > 0 {
        rec(&mut Vec::new(), 0, len, max_labels, &mut out);
    }
    out
}
