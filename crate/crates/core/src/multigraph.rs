//! Multigraphs with a vertex map, in the `(V, E, ι)` form.
//!
//! Abstract vertices are dense ids `0..n_vertices`. Edge `t = {x, y}` yields the
//! directed edges `2t = (x, y)` and `2t + 1 = (y, x)`, so inversion is `id ^ 1`.
//! The vertex map `ι` sends abstract vertices onto actual vertices
//! `0..n_actual`; parallel edges and loops are expressed either directly
//! (`{x, x}`) or through `ι` (`x ≠ y`, `ι(x) = ι(y)`). A loop always owns two
//! distinct directed edges and adds 2 to the adjacency diagonal.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sparse::Csr;

pub type DirectedEdge = usize;

#[inline]
pub fn inverse(e: DirectedEdge) -> DirectedEdge {
    e ^ 1
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BaseMultigraph {
    n_vertices: usize,
    n_actual: usize,
    edges: Vec<(usize, usize)>,
    vertex_map: Vec<usize>,
    explicit_map: bool,
}

impl BaseMultigraph {
    /// Validates endpoints and `ι`. With no map, `ι` is the identity.
    pub fn from_edge_list(
        n_vertices: usize,
        edges: Vec<(usize, usize)>,
        vertex_map: Option<Vec<usize>>,
    ) -> Result<Self> {
        for &(u, v) in &edges {
            if u >= n_vertices || v >= n_vertices {
                return Err(Error::InvalidEdge { u, v, n_vertices });
            }
        }
        let explicit_map = vertex_map.is_some();
        let vertex_map = vertex_map.unwrap_or_else(|| (0..n_vertices).collect());
        if vertex_map.len() != n_vertices {
            return Err(Error::InvalidVertexMap(format!(
                "map has {} entries for {} vertices",
                vertex_map.len(),
                n_vertices
            )));
        }
        let n_actual = vertex_map.iter().map(|&a| a + 1).max().unwrap_or(0);
        let mut hit = vec![false; n_actual];
        for &a in &vertex_map {
            hit[a] = true;
        }
        if let Some(missing) = hit.iter().position(|h| !h) {
            return Err(Error::InvalidVertexMap(format!("actual vertex {missing} has no preimage")));
        }
        Ok(BaseMultigraph { n_vertices, n_actual, edges, vertex_map, explicit_map })
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
        Self::from_edge_list(n, edges, None).unwrap()
    }

    pub fn complete_bipartite(a: usize, b: usize) -> Self {
        let edges = (0..a).flat_map(|u| (0..b).map(move |v| (u, a + v))).collect();
        Self::from_edge_list(a + b, edges, None).unwrap()
    }

    /// One vertex carrying `loops` loops; `2·loops`-regular.
    pub fn bouquet(loops: usize) -> Self {
        Self::from_edge_list(1, vec![(0, 0); loops], None).unwrap()
    }

    pub fn cycle(k: usize) -> Self {
        let edges = (0..k).map(|u| (u, (u + 1) % k)).collect();
        Self::from_edge_list(k, edges, None).unwrap()
    }

    pub fn path(k: usize) -> Self {
        let edges = (1..k).map(|u| (u - 1, u)).collect();
        Self::from_edge_list(k, edges, None).unwrap()
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::new();
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Self::from_edge_list(10, edges, None).unwrap()
    }

    /// Vertex-disjoint union, vertices of `other` shifted past `self`.
    pub fn disjoint_union(&self, other: &Self) -> Self {
        let shift = self.n_vertices;
        let mut edges = self.edges.clone();
        edges.extend(other.edges.iter().map(|&(u, v)| (u + shift, v + shift)));
        let mut map = self.vertex_map.clone();
        map.extend(other.vertex_map.iter().map(|&a| a + self.n_actual));
        let explicit = self.explicit_map || other.explicit_map;
        Self::from_edge_list(shift + other.n_vertices, edges, explicit.then_some(map)).unwrap()
    }

    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    /// `|ι(V)|`.
    pub fn n_actual(&self) -> usize {
        self.n_actual
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn vertex_map(&self) -> &[usize] {
        &self.vertex_map
    }

    /// `r = |vec-E| = 2|E|`.
    pub fn n_directed(&self) -> usize {
        2 * self.edges.len()
    }

    /// Abstract endpoints `(e₁, e₂)` of a directed edge.
    pub fn endpoints(&self, e: DirectedEdge) -> (usize, usize) {
        let (x, y) = self.edges[e / 2];
        if e.is_multiple_of(2) {
            (x, y)
        } else {
            (y, x)
        }
    }

    /// `(ι(e₁), ι(e₂))`.
    pub fn actual_endpoints(&self, e: DirectedEdge) -> (usize, usize) {
        let (x, y) = self.endpoints(e);
        (self.vertex_map[x], self.vertex_map[y])
    }

    pub fn directed_edges(&self) -> std::ops::Range<DirectedEdge> {
        0..self.n_directed()
    }

    /// Directed edges grouped by actual tail vertex.
    pub fn out_edges(&self) -> Vec<Vec<DirectedEdge>> {
        let mut out = vec![Vec::new(); self.n_actual];
        for e in self.directed_edges() {
            out[self.actual_endpoints(e).0].push(e);
        }
        out
    }

    /// `A_uv = #{e ∈ vec-E : ι(e) = (u, v)}`.
    pub fn adjacency(&self) -> AdjacencyMatrix {
        let mut a = AdjacencyMatrix::zeros(self.n_actual);
        for e in self.directed_edges() {
            let (u, v) = self.actual_endpoints(e);
            a.entries[u * self.n_actual + v] += 1;
        }
        a
    }

    /// Largest number of directed edges leaving one actual vertex.
    pub fn max_degree(&self) -> usize {
        let mut deg = vec![0usize; self.n_actual];
        for e in self.directed_edges() {
            deg[self.actual_endpoints(e).0] += 1;
        }
        deg.into_iter().max().unwrap_or(0)
    }

    /// Actual-vertex adjacency lists with multiplicity; a loop at `u` lists `u` twice.
    pub fn neighbor_lists(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_actual];
        for e in self.directed_edges() {
            let (u, v) = self.actual_endpoints(e);
            adj[u].push(v);
        }
        adj
    }

    /// Edges as pairs of actual vertices.
    pub fn actual_edges(&self) -> Vec<(usize, usize)> {
        self.edges.iter().map(|&(x, y)| (self.vertex_map[x], self.vertex_map[y])).collect()
    }

    /// Writes the text graph format.
    ///
    /// ```text
    /// <n_vertices> <n_edges>
    /// <u> <v>          (one line per edge)
    /// map              (only when a vertex map was supplied)
    /// <ι(v)>           (one line per vertex)
    /// ```
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{} {}", self.n_vertices, self.edges.len()).unwrap();
        for &(u, v) in &self.edges {
            writeln!(s, "{u} {v}").unwrap();
        }
        if self.explicit_map {
            s.push_str("map\n");
            for &a in &self.vertex_map {
                writeln!(s, "{a}").unwrap();
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (ln, header) = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
        let nums = parse_usizes(header, ln + 1)?;
        let [n_vertices, n_edges] = nums[..] else {
            return Err(Error::parse(ln + 1, "header must be `n_vertices n_edges`"));
        };
        let mut edges = Vec::with_capacity(n_edges);
        for _ in 0..n_edges {
            let (ln, line) = lines.next().ok_or_else(|| Error::parse(ln + 1, "missing edge line"))?;
            match parse_usizes(line, ln + 1)?[..] {
                [u, v] => edges.push((u, v)),
                _ => return Err(Error::parse(ln + 1, "edge line must be `u v`")),
            }
        }
        let mut map = None;
        if let Some((ln, line)) = lines.next() {
            if line.trim() != "map" {
                return Err(Error::parse(ln + 1, "expected `map` section or end of input"));
            }
            let mut m = Vec::with_capacity(n_vertices);
            for _ in 0..n_vertices {
                let (ln, line) = lines.next().ok_or_else(|| Error::parse(ln + 1, "map section too short"))?;
                match parse_usizes(line, ln + 1)?[..] {
                    [a] => m.push(a),
                    _ => return Err(Error::parse(ln + 1, "map line must hold one vertex id")),
                }
            }
            map = Some(m);
            if let Some((ln, _)) = lines.next() {
                return Err(Error::parse(ln + 1, "trailing content after map section"));
            }
        }
        Self::from_edge_list(n_vertices, edges, map)
    }
}

pub(crate) fn parse_usizes(line: &str, line_no: usize) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|e| Error::parse(line_no, format!("`{t}`: {e}"))))
        .collect()
}

/// Dense symmetric matrix of edge-orientation counts on actual vertices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    dim: usize,
    entries: Vec<u32>,
}

impl AdjacencyMatrix {
    pub fn zeros(dim: usize) -> Self {
        AdjacencyMatrix { dim, entries: vec![0; dim * dim] }
    }

    /// Row-major entries; panics if not square.
    pub fn from_dense(dim: usize, entries: Vec<u32>) -> Self {
        assert_eq!(entries.len(), dim * dim, "expected a {dim}x{dim} matrix");
        AdjacencyMatrix { dim, entries }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u32 {
        self.entries[u * self.dim + v]
    }

    pub(crate) fn add(&mut self, u: usize, v: usize, by: u32) {
        self.entries[u * self.dim + v] += by;
    }

    pub fn row(&self, u: usize) -> &[u32] {
        &self.entries[u * self.dim..(u + 1) * self.dim]
    }

    pub fn degrees(&self) -> Vec<u64> {
        (0..self.dim).map(|u| self.row(u).iter().map(|&x| x as u64).sum()).collect()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|&x| x as u64).sum()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.dim).all(|u| (u + 1..self.dim).all(|v| self.get(u, v) == self.get(v, u)))
    }

    /// `Some(d)` iff every row sums to `d`.
    pub fn regular_degree(&self) -> Option<usize> {
        let deg = self.degrees();
        let d = *deg.first()?;
        deg.iter().all(|&x| x == d).then_some(d as usize)
    }

    pub fn to_csr(&self) -> Csr {
        let mut t = Vec::new();
        for u in 0..self.dim {
            for (v, &x) in self.row(u).iter().enumerate() {
                if x != 0 {
                    t.push((u, v, x as f64));
                }
            }
        }
        Csr::from_triplets(self.dim, t)
    }

    pub fn to_dense_f64(&self) -> nalgebra::DMatrix<f64> {
        nalgebra::DMatrix::from_fn(self.dim, self.dim, |u, v| self.get(u, v) as f64)
    }

    /// Simultaneous row/column relabeling: vertex `u` becomes `perm[u]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut out = Self::zeros(self.dim);
        for u in 0..self.dim {
            for v in 0..self.dim {
                out.entries[perm[u] * self.dim + perm[v]] = self.get(u, v);
            }
        }
        out
    }
}

/// Zero diagonal, 0/1 entries, every row sum equal to `d`.
pub fn is_simple_regular(a: &AdjacencyMatrix, d: usize) -> bool {
    (0..a.dim()).all(|u| {
        let row = a.row(u);
        row[u] == 0 && row.iter().all(|&x| x <= 1) && row.iter().map(|&x| x as usize).sum::<usize>() == d
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn complete_graph_k4() {
        let k4 = BaseMultigraph::complete(4);
        assert_eq!(k4.edges().len(), 6);
        assert_eq!(k4.n_directed(), 12);
        let a = k4.adjacency();
        for u in 0..4 {
            for v in 0..4 {
                assert_eq!(a.get(u, v), u32::from(u != v));
            }
        }
        assert_eq!(k4.max_degree(), 3);
        assert!(is_simple_regular(&a, 3));
        assert!(!is_simple_regular(&a, 4));
    }

    #[test]
    fn bouquet_counts_both_orientations() {
        let b = BaseMultigraph::from_edge_list(1, vec![(0, 0), (0, 0)], None).unwrap();
        assert_eq!(b.n_directed(), 4);
        assert_eq!(b.adjacency().get(0, 0), 4);
        assert_eq!(b.max_degree(), 4);
        assert!(!is_simple_regular(&b.adjacency(), 4));
    }

    #[test]
    fn parallel_edges_and_paths() {
        let g = BaseMultigraph::from_edge_list(2, vec![(0, 1), (1, 0)], None).unwrap();
        assert_eq!(g.adjacency().get(0, 1), 2);
        assert_eq!(BaseMultigraph::path(3).max_degree(), 2);
    }

    #[test]
    fn loop_via_vertex_map() {
        let g = BaseMultigraph::from_edge_list(2, vec![(0, 1)], Some(vec![0, 0])).unwrap();
        assert_eq!(g.n_actual(), 1);
        assert_eq!(g.adjacency().get(0, 0), 2);
    }

    #[test]
    fn rejects_out_of_range_edges_and_bad_maps() {
        assert_eq!(
            BaseMultigraph::from_edge_list(4, vec![(0, 5)], None),
            Err(Error::InvalidEdge { u: 0, v: 5, n_vertices: 4 })
        );
        assert!(matches!(
            BaseMultigraph::from_edge_list(2, vec![], Some(vec![0, 2])),
            Err(Error::InvalidVertexMap(_))
        ));
        assert!(matches!(
            BaseMultigraph::from_edge_list(2, vec![], Some(vec![0])),
            Err(Error::InvalidVertexMap(_))
        ));
    }

    #[test]
    fn inversion_pairs_orientations() {
        let g = BaseMultigraph::complete(4);
        for e in g.directed_edges() {
            let (x, y) = g.endpoints(e);
            assert_eq!(g.endpoints(inverse(e)), (y, x));
            assert_eq!(inverse(inverse(e)), e);
        }
    }

    #[test]
    fn text_format_round_trip() {
        let text = "3 3\n0 1\n1 2\n2 2\nmap\n0\n1\n1\n";
        let g = BaseMultigraph::from_text(text).unwrap();
        assert_eq!(g.to_text(), text);
        let plain = "4 2\n0 1\n2 3\n";
        assert_eq!(BaseMultigraph::from_text(plain).unwrap().to_text(), plain);
        assert!(matches!(BaseMultigraph::from_text("2 1\n0\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(BaseMultigraph::from_text("2 1\n0 1\nxyz\n"), Err(Error::Parse { line: 3, .. })));
    }

    fn arb_multigraph() -> impl Strategy<Value = BaseMultigraph> {
        (1usize..8).prop_flat_map(|n| {
            (
                proptest::collection::vec((0..n, 0..n), 0..16),
                proptest::collection::vec(0..n, n),
            )
                .prop_map(move |(edges, raw)| {
                    // compress raw labels to a dense surjective map
                    let mut labels: Vec<usize> = raw.clone();
                    labels.sort_unstable();
                    labels.dedup();
                    let map = raw.iter().map(|x| labels.binary_search(x).unwrap()).collect();
                    BaseMultigraph::from_edge_list(n, edges, Some(map)).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn adjacency_invariants(g in arb_multigraph()) {
            let a = g.adjacency();
            prop_assert!(a.is_symmetric());
            prop_assert_eq!(a.total() as usize, g.n_directed());
            let lower = g.n_directed().div_ceil(g.n_actual());
            prop_assert!(g.max_degree() >= lower);
        }

        #[test]
        fn text_round_trip(g in arb_multigraph()) {
            let back = BaseMultigraph::from_text(&g.to_text()).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_text(), g.to_text());
        }
    }
}
