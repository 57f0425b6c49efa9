//! The configuration model: uniform matchings of half-edges and the
//! multigraphs obtained by gluing them.
//!
//! Half-edge `(v, i)` with `0 ≤ i < d` has id `v·d + i`.

use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};
use crate::multigraph::{parse_usizes, AdjacencyMatrix, BaseMultigraph};
use crate::rng::uniform_below;

pub type HalfEdge = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HalfEdgeSpace {
    pub n: usize,
    pub d: usize,
}

impl HalfEdgeSpace {
    pub fn new(n: usize, d: usize) -> Self {
        HalfEdgeSpace { n, d }
    }

    /// `m = n·d`.
    pub fn size(&self) -> usize {
        self.n * self.d
    }

    #[inline]
    pub fn vertex(&self, h: HalfEdge) -> usize {
        h / self.d
    }

    #[inline]
    pub fn half_edge(&self, v: usize, i: usize) -> HalfEdge {
        v * self.d + i
    }

    /// `E(v)`.
    pub fn at_vertex(&self, v: usize) -> std::ops::Range<HalfEdge> {
        v * self.d..(v + 1) * self.d
    }
}

/// Involutive fixed-point-free permutation of the half-edges.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    pairing: Vec<HalfEdge>,
}

impl Matching {
    pub fn new(pairing: Vec<HalfEdge>) -> Result<Self> {
        for (x, &y) in pairing.iter().enumerate() {
            if y >= pairing.len() {
                return Err(Error::InvalidMatching(format!("σ({x}) = {y} out of range")));
            }
            if y == x {
                return Err(Error::InvalidMatching(format!("σ fixes {x}")));
            }
            if pairing[y] != x {
                return Err(Error::InvalidMatching(format!("σ(σ({x})) = {} ≠ {x}", pairing[y])));
            }
        }
        Ok(Matching { pairing })
    }

    /// Builds from a list of pairs covering every half-edge exactly once.
    pub fn from_pairs(m: usize, pairs: &[(HalfEdge, HalfEdge)]) -> Result<Self> {
        let mut pairing = vec![usize::MAX; m];
        for &(a, b) in pairs {
            if a >= m || b >= m {
                return Err(Error::InvalidMatching(format!("pair ({a}, {b}) out of range")));
            }
            if pairing[a] != usize::MAX || pairing[b] != usize::MAX {
                return Err(Error::InvalidMatching(format!("half-edge in ({a}, {b}) paired twice")));
            }
            pairing[a] = b;
            pairing[b] = a;
        }
        if let Some(x) = pairing.iter().position(|&y| y == usize::MAX) {
            return Err(Error::InvalidMatching(format!("half-edge {x} unpaired")));
        }
        Self::new(pairing)
    }

    #[inline]
    pub fn partner(&self, h: HalfEdge) -> HalfEdge {
        self.pairing[h]
    }

    pub fn pairing(&self) -> &[HalfEdge] {
        &self.pairing
    }

    pub fn len(&self) -> usize {
        self.pairing.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairing.is_empty()
    }

    /// Pairs `(h, σ(h))` with `h < σ(h)`, in increasing order of `h`.
    pub fn pairs(&self) -> impl Iterator<Item = (HalfEdge, HalfEdge)> + '_ {
        self.pairing.iter().enumerate().filter(|(x, &y)| *x < y).map(|(x, &y)| (x, y))
    }

    /// Matching file: one line `v i v' i'` per pair, smaller half-edge first,
    /// lines in lexicographic order. Stub indices are 0-based.
    pub fn to_text(&self, space: HalfEdgeSpace) -> String {
        let mut s = String::new();
        for (a, b) in self.pairs() {
            let (va, ia) = (space.vertex(a), a % space.d);
            let (vb, ib) = (space.vertex(b), b % space.d);
            writeln!(s, "{va} {ia} {vb} {ib}").unwrap();
        }
        s
    }

    pub fn from_text(space: HalfEdgeSpace, text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let [va, ia, vb, ib] = parse_usizes(line, ln + 1)?[..] else {
                return Err(Error::parse(ln + 1, "expected `v i v' i'`"));
            };
            if va >= space.n || vb >= space.n || ia >= space.d || ib >= space.d {
                return Err(Error::parse(ln + 1, "half-edge outside the space"));
            }
            pairs.push((space.half_edge(va, ia), space.half_edge(vb, ib)));
        }
        Self::from_pairs(space.size(), &pairs)
    }
}

/// Uniform matching by sequential pairing: the last unmatched half-edge is
/// paired with a uniformly chosen other unmatched one. Each of the
/// `(m−1)!!` matchings has the same probability.
pub fn sample_uniform_matching<R: Rng + ?Sized>(space: HalfEdgeSpace, rng: &mut R) -> Result<Matching> {
    let m = space.size();
    if m % 2 == 1 {
        return Err(Error::NoMatchingExists(m));
    }
    let mut pool: Vec<HalfEdge> = (0..m).collect();
    let mut pairing = vec![0; m];
    while let Some(x) = pool.pop() {
        let j = uniform_below(rng, pool.len());
        let y = pool.swap_remove(j);
        pairing[x] = y;
        pairing[y] = x;
    }
    Ok(Matching { pairing })
}

/// `A_uv = Σᵢ 1(σ(u,i) ∈ E(v))`.
pub fn graph_of_matching(space: HalfEdgeSpace, sigma: &Matching) -> AdjacencyMatrix {
    let mut a = AdjacencyMatrix::zeros(space.n);
    for h in 0..space.size() {
        a.add(space.vertex(h), space.vertex(sigma.partner(h)), 1);
    }
    a
}

/// `G(σ)` as a multigraph: one edge per pair, in the order of [`Matching::pairs`].
pub fn multigraph_of_matching(space: HalfEdgeSpace, sigma: &Matching) -> BaseMultigraph {
    let edges = sigma.pairs().map(|(a, b)| (space.vertex(a), space.vertex(b))).collect();
    BaseMultigraph::from_edge_list(space.n, edges, None).expect("matching endpoints are in range")
}

/// No loop and no multi-edge in `G(σ)`.
pub fn is_simple(space: HalfEdgeSpace, sigma: &Matching) -> bool {
    let mut seen = Vec::with_capacity(space.d);
    for v in 0..space.n {
        seen.clear();
        for h in space.at_vertex(v) {
            let u = space.vertex(sigma.partner(h));
            if u == v || seen.contains(&u) {
                return false;
            }
            seen.push(u);
        }
    }
    true
}

#[derive(Debug, Clone)]
pub struct RegularSample {
    pub adjacency: AdjacencyMatrix,
    pub matching: Matching,
    pub attempts: usize,
}

/// Rejection sampling of a uniform simple `d`-regular graph on `n` vertices.
pub fn sample_uniform_regular<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    rng: &mut R,
    max_attempts: usize,
) -> Result<RegularSample> {
    let space = HalfEdgeSpace::new(n, d);
    for attempts in 1..=max_attempts {
        let matching = sample_uniform_matching(space, rng)?;
        if is_simple(space, &matching) {
            let adjacency = graph_of_matching(space, &matching);
            return Ok(RegularSample { adjacency, matching, attempts });
        }
    }
    Err(Error::RejectionBudgetExhausted(max_attempts))
}

/// Calls `visit` on every matching of `0..m` (recursive pairing tree).
pub fn for_each_matching(m: usize, mut visit: impl FnMut(&[HalfEdge])) {
    fn rec(pairing: &mut [usize], visit: &mut dyn FnMut(&[usize])) {
        let Some(x) = pairing.iter().position(|&p| p == usize::MAX) else {
            visit(pairing);
            return;
        };
        for y in x + 1..pairing.len() {
            if pairing[y] == usize::MAX {
                pairing[x] = y;
                pairing[y] = x;
                rec(pairing, visit);
                pairing[x] = usize::MAX;
                pairing[y] = usize::MAX;
            }
        }
    }
    if m % 2 == 1 {
        return;
    }
    let mut pairing = vec![usize::MAX; m];
    rec(&mut pairing, &mut visit);
}

/// `(m − 1)!!`, the number of matchings of `m` points.
pub fn matching_count(m: usize) -> u128 {
    if m % 2 == 1 {
        return 0;
    }
    (1..m).step_by(2).map(|k| k as u128).product()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use std::collections::HashMap;

    #[test]
    fn odd_half_edge_count_has_no_matching() {
        let mut rng = rng_from_seed(0);
        assert_eq!(
            sample_uniform_matching(HalfEdgeSpace::new(1, 3), &mut rng),
            Err(Error::NoMatchingExists(3))
        );
    }

    #[test]
    fn single_pair_is_forced() {
        let mut rng = rng_from_seed(0);
        let m = sample_uniform_matching(HalfEdgeSpace::new(2, 1), &mut rng).unwrap();
        assert_eq!(m.pairing(), &[1, 0]);
    }

    #[test]
    fn sampled_matchings_are_involutions() {
        let mut rng = rng_from_seed(11);
        let space = HalfEdgeSpace::new(7, 4);
        for _ in 0..10_000 {
            let m = sample_uniform_matching(space, &mut rng).unwrap();
            for h in 0..space.size() {
                assert_ne!(m.partner(h), h);
                assert_eq!(m.partner(m.partner(h)), h);
            }
            let a = graph_of_matching(space, &m);
            assert!(a.degrees().iter().all(|&x| x == 4));
        }
    }

    #[test]
    fn enumeration_counts() {
        for m in [0, 2, 4, 6, 8, 10] {
            let mut count = 0u128;
            for_each_matching(m, |p| {
                assert!(Matching::new(p.to_vec()).is_ok());
                count += 1;
            });
            assert_eq!(count, matching_count(m));
        }
        assert_eq!(matching_count(6), 15);
        assert_eq!(matching_count(12), 10395);
    }

    #[test]
    fn uniform_over_fifteen_matchings() {
        // chi-square with 14 degrees of freedom; 0.1% critical value is 36.12
        let space = HalfEdgeSpace::new(2, 3);
        let mut rng = rng_from_seed(2024);
        let draws = 100_000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            let m = sample_uniform_matching(space, &mut rng).unwrap();
            *counts.entry(m.pairing().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 15);
        let expected = draws as f64 / 15.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 36.12, "chi-square {chi2}");
    }

    #[test]
    fn single_entry_expectation_by_enumeration() {
        // E[1(σ(e) = f)] = 1/(m−1) for e ≠ f
        let m = 6;
        let mut hits = vec![vec![0u32; m]; m];
        let mut total = 0u32;
        for_each_matching(m, |p| {
            total += 1;
            for (e, &f) in p.iter().enumerate() {
                hits[e][f] += 1;
            }
        });
        assert_eq!(total, 15);
        for e in 0..m {
            for f in 0..m {
                let expected = if e == f { 0 } else { 3 };
                assert_eq!(hits[e][f], expected, "({e}, {f})");
            }
        }
    }

    #[test]
    fn triple_edge_and_loops() {
        let space = HalfEdgeSpace::new(2, 3);
        let triple = Matching::from_pairs(6, &[(0, 3), (1, 4), (2, 5)]).unwrap();
        let a = graph_of_matching(space, &triple);
        assert_eq!((a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1)), (0, 3, 3, 0));

        let loops = Matching::from_pairs(6, &[(0, 1), (3, 4), (2, 5)]).unwrap();
        let a = graph_of_matching(space, &loops);
        assert_eq!((a.get(0, 0), a.get(0, 1), a.get(1, 0), a.get(1, 1)), (2, 1, 1, 2));
        assert_eq!(a.total(), 6);
        assert_eq!(multigraph_of_matching(space, &loops).adjacency(), a);
    }

    #[test]
    fn k4_is_the_only_simple_cubic_graph_on_four_vertices() {
        let mut rng = rng_from_seed(5);
        let k4 = BaseMultigraph::complete(4).adjacency();
        for _ in 0..200 {
            let s = sample_uniform_regular(4, 3, &mut rng, 10_000).unwrap();
            assert_eq!(s.adjacency, k4);
            assert!(s.attempts >= 1);
        }
    }

    #[test]
    fn budget_exhaustion() {
        // with one attempt, some seed must draw a non-simple configuration
        let found = (0..100u64).any(|seed| {
            let mut rng = rng_from_seed(seed);
            matches!(sample_uniform_regular(10, 3, &mut rng, 1), Err(Error::RejectionBudgetExhausted(1)))
        });
        assert!(found);
    }

    #[test]
    fn matching_file_round_trip() {
        let space = HalfEdgeSpace::new(5, 4);
        let mut rng = rng_from_seed(9);
        let m = sample_uniform_matching(space, &mut rng).unwrap();
        let text = m.to_text(space);
        assert_eq!(text.lines().count(), 10);
        let mut sorted: Vec<&str> = text.lines().collect();
        sorted.sort_by_key(|l| l.split(' ').map(|t| t.parse::<usize>().unwrap()).collect::<Vec<_>>());
        assert_eq!(sorted, text.lines().collect::<Vec<_>>());
        assert_eq!(Matching::from_text(space, &text).unwrap(), m);
        assert!(Matching::from_text(space, "0 0 0 0\n").is_err());
    }
}
