//! Tangle-freeness: every ball of radius `ℓ` carries at most one cycle,
//! where loops and multi-edges count as cycles.

use rayon::prelude::*;

use crate::configuration::{multigraph_of_matching, sample_uniform_matching, HalfEdgeSpace, Matching};
use crate::error::{Error, Result};
use crate::multigraph::{AdjacencyMatrix, BaseMultigraph};
use crate::rng::{rng_from_seed, trial_seed};

/// Undirected multigraph stored as incidence lists. A loop appears once in
/// its vertex's list, every other edge once at each endpoint.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UndirectedGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
    incident: Vec<Vec<usize>>,
}

impl UndirectedGraph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut incident = vec![Vec::new(); n];
        for (k, &(u, v)) in edges.iter().enumerate() {
            if u >= n || v >= n {
                return Err(Error::InvalidEdge { u, v, n_vertices: n });
            }
            incident[u].push(k);
            if u != v {
                incident[v].push(k);
            }
        }
        Ok(UndirectedGraph { n, edges, incident })
    }

    /// Reads an adjacency matrix where a loop at `u` contributes 2 to `A_uu`.
    pub fn from_adjacency(a: &AdjacencyMatrix) -> Self {
        let n = a.dim();
        let mut edges = Vec::new();
        for u in 0..n {
            for _ in 0..a.get(u, u) / 2 {
                edges.push((u, u));
            }
            for v in u + 1..n {
                for _ in 0..a.get(u, v) {
                    edges.push((u, v));
                }
            }
        }
        UndirectedGraph::new(n, edges).expect("entries index valid vertices")
    }

    pub fn from_matching(space: HalfEdgeSpace, sigma: &Matching) -> Self {
        Self::from(&multigraph_of_matching(space, sigma))
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    fn other_end(&self, k: usize, u: usize) -> usize {
        let (a, b) = self.edges[k];
        if a == u {
            b
        } else {
            a
        }
    }

    pub fn relabel(&self, perm: &[usize]) -> Self {
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v])).collect();
        UndirectedGraph::new(self.n, edges).expect("relabeling keeps vertices in range")
    }

    pub fn component_count(&self) -> usize {
        let mut uf = UnionFind::new(self.n);
        for &(u, v) in &self.edges {
            uf.union(u, v);
        }
        (0..self.n).filter(|&v| uf.find(v) == v).count()
    }

    /// Largest graph distance between two vertices of one component.
    pub fn diameter(&self) -> usize {
        let mut scan = BallScanner::new(self.n);
        (0..self.n).map(|v| scan.distances(self, v, usize::MAX).iter().map(|&(_, d)| d).max().unwrap_or(0)).max().unwrap_or(0)
    }
}

impl From<&BaseMultigraph> for UndirectedGraph {
    fn from(x: &BaseMultigraph) -> Self {
        UndirectedGraph::new(x.n_actual(), x.actual_edges()).expect("base multigraph is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct NeighborhoodReport {
    pub center: usize,
    pub radius: usize,
    pub ball_vertices: usize,
    pub ball_edges: usize,
    pub cycle_count: usize,
}

/// Reusable BFS workspace; stamps avoid clearing an `n`-sized array per ball.
struct BallScanner {
    stamp: Vec<u32>,
    dist: Vec<usize>,
    round: u32,
}

impl BallScanner {
    fn new(n: usize) -> Self {
        BallScanner { stamp: vec![0; n], dist: vec![0; n], round: 0 }
    }

    fn next_round(&mut self) {
        self.round = self.round.wrapping_add(1);
        if self.round == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.round = 1;
        }
    }

    fn inside(&self, v: usize) -> bool {
        self.stamp[v] == self.round
    }

    /// Vertices within distance `radius` of `v` with their distances, in BFS order.
    fn distances(&mut self, g: &UndirectedGraph, v: usize, radius: usize) -> Vec<(usize, usize)> {
        self.next_round();
        self.stamp[v] = self.round;
        self.dist[v] = 0;
        let mut order = vec![(v, 0)];
        let mut head = 0;
        while head < order.len() {
            let (u, du) = order[head];
            head += 1;
            if du == radius {
                continue;
            }
            for &k in &g.incident[u] {
                let w = g.other_end(k, u);
                if !self.inside(w) {
                    self.stamp[w] = self.round;
                    self.dist[w] = du + 1;
                    order.push((w, du + 1));
                }
            }
        }
        order
    }

    fn report(&mut self, g: &UndirectedGraph, v: usize, radius: usize) -> NeighborhoodReport {
        let ball = self.distances(g, v, radius);
        let mut ball_edges = 0;
        for &(u, _) in &ball {
            for &k in &g.incident[u] {
                let w = g.other_end(k, u);
                if self.inside(w) && u <= w {
                    ball_edges += 1;
                }
            }
        }
        NeighborhoodReport {
            center: v,
            radius,
            ball_vertices: ball.len(),
            ball_edges,
            cycle_count: ball_edges + 1 - ball.len(),
        }
    }
}

/// The subgraph induced on the vertices at distance at most `ell` from `v`.
pub fn ball_report(g: &UndirectedGraph, v: usize, ell: usize) -> NeighborhoodReport {
    BallScanner::new(g.n).report(g, v, ell)
}

/// First vertex whose radius-`ell` ball has two or more independent cycles.
pub fn find_tangled_vertex(g: &UndirectedGraph, ell: usize) -> Option<NeighborhoodReport> {
    let mut scan = BallScanner::new(g.n);
    (0..g.n).map(|v| scan.report(g, v, ell)).find(|r| r.cycle_count > 1)
}

pub fn is_ell_tangle_free(g: &UndirectedGraph, ell: usize) -> bool {
    find_tangled_vertex(g, ell).is_none()
}

/// At most one independent cycle in the whole graph.
pub fn is_tangle_free_graph(g: &UndirectedGraph) -> bool {
    g.n_edges() + g.component_count() <= g.n_vertices() + 1
}

/// Largest `ℓ ≤ max_ell` at which `g` is tangle-free, if any.
pub fn largest_tangle_free_radius(g: &UndirectedGraph, max_ell: usize) -> Option<usize> {
    (0..=max_ell).take_while(|&l| is_ell_tangle_free(g, l)).last()
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns `false` when `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra] = rb;
        true
    }
}

/// Independent cycle count of a ball, computed by a different route: the
/// ball grows by `ell` rounds of neighbour expansion over the edge list, and
/// cycles are the edges closing a loop in a union-find spanning forest.
pub fn ball_cycle_count_bruteforce(g: &UndirectedGraph, v: usize, ell: usize) -> usize {
    let mut inside = vec![false; g.n];
    inside[v] = true;
    for _ in 0..ell {
        let frontier: Vec<usize> = g
            .edges
            .iter()
            .filter_map(|&(a, b)| match (inside[a], inside[b]) {
                (true, false) => Some(b),
                (false, true) => Some(a),
                _ => None,
            })
            .collect();
        frontier.into_iter().for_each(|w| inside[w] = true);
    }
    let mut uf = UnionFind::new(g.n);
    g.edges.iter().filter(|&&(a, b)| inside[a] && inside[b] && !uf.union(a, b)).count()
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TangleEstimate {
    pub trials: usize,
    pub tangled: usize,
    pub fraction: f64,
    /// Binomial standard error `√(p(1−p)/trials)`.
    pub std_error: f64,
}

/// Monte Carlo fraction of configuration-model multigraphs `G(σ)` on `n`
/// vertices of degree `d` that are not `ell`-tangle-free. Trial `i` draws
/// from the stream seeded by `trial_seed(seed, i)`.
pub fn tangled_fraction(n: usize, d: usize, ell: usize, trials: usize, seed: u64) -> Result<TangleEstimate> {
    if trials == 0 {
        return Err(Error::EmptySample);
    }
    let space = HalfEdgeSpace::new(n, d);
    let outcomes: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(trial_seed(seed, i as u64));
            let sigma = sample_uniform_matching(space, &mut rng)?;
            Ok(!is_ell_tangle_free(&UndirectedGraph::from_matching(space, &sigma), ell))
        })
        .collect::<Result<_>>()?;
    let tangled = outcomes.iter().filter(|&&t| t).count();
    let p = tangled as f64 / trials as f64;
    Ok(TangleEstimate { trials, tangled, fraction: p, std_error: (p * (1.0 - p) / trials as f64).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::uniform_permutation;
    use proptest::prelude::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> UndirectedGraph {
        UndirectedGraph::new(n, edges.to_vec()).unwrap()
    }

    #[test]
    fn trees_have_no_cycles() {
        let t = graph(7, &[(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6)]);
        for v in 0..7 {
            for l in 0..5 {
                assert_eq!(ball_report(&t, v, l).cycle_count, 0);
            }
        }
        assert!(is_tangle_free_graph(&t));
        assert!((0..5).all(|l| is_ell_tangle_free(&t, l)));
    }

    #[test]
    fn k4_ball() {
        let k4 = UndirectedGraph::from(&BaseMultigraph::complete(4));
        let r = ball_report(&k4, 2, 1);
        assert_eq!((r.ball_vertices, r.ball_edges, r.cycle_count), (4, 6, 3));
        assert!(!is_ell_tangle_free(&k4, 1));
        assert!(is_ell_tangle_free(&k4, 0));
        assert_eq!(find_tangled_vertex(&k4, 1).unwrap().center, 0);
    }

    #[test]
    fn cycles_and_theta() {
        let c = UndirectedGraph::from(&BaseMultigraph::cycle(6));
        assert_eq!(ball_report(&c, 0, 2).cycle_count, 0);
        assert_eq!(ball_report(&c, 0, 3).cycle_count, 1);
        assert_eq!(ball_report(&c, 0, 6).cycle_count, 1);
        let theta = graph(2, &[(0, 1), (0, 1), (0, 1)]);
        assert_eq!(ball_report(&theta, 0, 1).cycle_count, 2);
        assert!(!is_ell_tangle_free(&theta, 1));
        assert!(is_ell_tangle_free(&theta, 0));
        let two_loops = graph(1, &[(0, 0), (0, 0)]);
        assert!(!is_ell_tangle_free(&two_loops, 0));
    }

    #[test]
    fn whole_graph_cycle_count() {
        let unicyclic = graph(5, &[(0, 1), (1, 2), (2, 0), (2, 3), (3, 4)]);
        assert!(is_tangle_free_graph(&unicyclic));
        let triangles = graph(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]);
        assert!(!is_tangle_free_graph(&triangles));
        // each ball of radius 1 still sees a single triangle
        assert!(is_ell_tangle_free(&triangles, 1));
        assert!(is_tangle_free_graph(&graph(3, &[])));
    }

    #[test]
    fn adjacency_and_multigraph_views_agree() {
        let x = BaseMultigraph::from_edge_list(3, vec![(0, 0), (0, 1), (0, 1), (1, 2), (2, 2)], None).unwrap();
        let a = UndirectedGraph::from_adjacency(&x.adjacency());
        let b = UndirectedGraph::from(&x);
        assert_eq!(a.n_edges(), 5);
        for v in 0..3 {
            for l in 0..3 {
                assert_eq!(ball_report(&a, v, l), ball_report(&b, v, l));
            }
        }
    }

    #[test]
    fn largest_radius() {
        let c = UndirectedGraph::from(&BaseMultigraph::cycle(5));
        assert_eq!(largest_tangle_free_radius(&c, 4), Some(4));
        let k4 = UndirectedGraph::from(&BaseMultigraph::complete(4));
        assert_eq!(largest_tangle_free_radius(&k4, 3), Some(0));
        let two_loops = graph(1, &[(0, 0), (0, 0)]);
        assert_eq!(largest_tangle_free_radius(&two_loops, 3), None);
    }

    #[test]
    fn empty_sample_is_an_error() {
        assert_eq!(tangled_fraction(10, 3, 1, 0, 0), Err(Error::EmptySample));
    }

    #[test]
    fn tangled_fraction_is_deterministic() {
        let a = tangled_fraction(50, 3, 1, 40, 7).unwrap();
        let b = tangled_fraction(50, 3, 1, 40, 7).unwrap();
        assert_eq!(a, b);
        assert!(a.fraction >= 0.0 && a.fraction <= 1.0);
    }

    fn random_graph(n: usize, d: usize, seed: u64) -> UndirectedGraph {
        let space = HalfEdgeSpace::new(n, d);
        let mut rng = rng_from_seed(seed);
        UndirectedGraph::from_matching(space, &sample_uniform_matching(space, &mut rng).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn bruteforce_agrees(n in 1usize..14, d in 1usize..5, ell in 0usize..5, seed in any::<u64>()) {
            prop_assume!(n * d % 2 == 0);
            let g = random_graph(n, d, seed);
            for v in 0..n {
                prop_assert_eq!(ball_report(&g, v, ell).cycle_count, ball_cycle_count_bruteforce(&g, v, ell));
            }
        }

        #[test]
        fn monotone_in_radius(n in 2usize..40, seed in any::<u64>()) {
            let n = n + n % 2;
            let g = random_graph(n, 3, seed);
            let flags: Vec<bool> = (0..6).map(|l| is_ell_tangle_free(&g, l)).collect();
            for l in 1..6 {
                prop_assert!(!flags[l] || flags[l - 1]);
            }
        }

        #[test]
        fn relabeling_invariance(n in 2usize..20, seed in any::<u64>(), ell in 0usize..4) {
            let n = n + n % 2;
            let g = random_graph(n, 3, seed);
            let mut rng = rng_from_seed(seed ^ 1);
            let p = uniform_permutation(&mut rng, n);
            let h = g.relabel(&p);
            for v in 0..n {
                prop_assert_eq!(ball_report(&g, v, ell).cycle_count, ball_report(&h, p[v], ell).cycle_count);
            }
        }

        #[test]
        fn diameter_radius_matches_global(n in 2usize..16, d in 2usize..4, seed in any::<u64>()) {
            prop_assume!(n * d % 2 == 0);
            let g = random_graph(n, d, seed);
            prop_assume!(g.component_count() == 1);
            prop_assert_eq!(is_ell_tangle_free(&g, g.diameter()), is_tangle_free_graph(&g));
        }
    }
}
