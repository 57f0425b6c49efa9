//! `n`-lifts of a base multigraph and the new eigenvalues of their
//! non-backtracking matrices.
//!
//! A lift is given by one permutation `σ_e` of `0..n` per directed base edge
//! with `σ_{e⁻¹} = σ_e⁻¹`. Lift vertex `(x, i)` has id `x·n + i`; lift
//! directed edge `(e, i)` runs from `(x, i)` to `(y, σ_e(i))` and has id
//! `e·n + i`, so the fiber of `e` is the contiguous block `e·n..(e+1)·n`.
//! `H` is the space of vectors constant on fibers; `B_n` leaves both `H` and
//! `H^⊥` invariant and acts on `H` as the base matrix `B`.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::multigraph::{inverse, parse_usizes, BaseMultigraph};
use crate::multiset::sort_by_modulus;
use crate::nonbacktracking::{
    is_irreducible, nb_from_multigraph, nb_spectrum_dense, quadratic_roots, IndexKind, NBMatrix,
};
use crate::rng::{rng_from_seed, uniform_permutation};
use crate::sparse::Csr;
use crate::spectra::dense_symmetric;

/// Relative tolerance `tol·(1 + |λ|)` used when matching base eigenvalues.
pub const CONTAINMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftPermutations {
    n: usize,
    /// `perms[e][i] = σ_e(i)` for every directed base edge `e`.
    perms: Vec<Vec<usize>>,
}

fn invert(p: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; p.len()];
    for (i, &j) in p.iter().enumerate() {
        inv[j] = i;
    }
    inv
}

fn is_permutation(p: &[usize]) -> bool {
    let mut seen = vec![false; p.len()];
    p.iter().all(|&j| j < p.len() && !std::mem::replace(&mut seen[j], true))
}

impl LiftPermutations {
    /// Takes `σ_e` for every directed edge and checks `σ_{e⁻¹} = σ_e⁻¹`.
    pub fn new(n: usize, perms: Vec<Vec<usize>>) -> Result<Self> {
        if perms.len() % 2 == 1 {
            return Err(Error::InvalidArgument("need one permutation per directed edge".into()));
        }
        for (e, p) in perms.iter().enumerate() {
            if p.len() != n || !is_permutation(p) {
                return Err(Error::InvalidArgument(format!("σ_{e} is not a permutation of 0..{n}")));
            }
        }
        for e in (0..perms.len()).step_by(2) {
            if invert(&perms[e]) != perms[e + 1] {
                return Err(Error::InvalidArgument(format!("σ_{} is not the inverse of σ_{e}", e + 1)));
            }
        }
        Ok(LiftPermutations { n, perms })
    }

    /// One permutation per undirected edge `t`, used for `σ_{2t}`.
    pub fn from_edge_permutations(n: usize, per_edge: Vec<Vec<usize>>) -> Result<Self> {
        let mut perms = Vec::with_capacity(2 * per_edge.len());
        for (t, p) in per_edge.into_iter().enumerate() {
            if p.len() != n || !is_permutation(&p) {
                return Err(Error::InvalidArgument(format!("edge {t}: not a permutation of 0..{n}")));
            }
            let inv = invert(&p);
            perms.push(p);
            perms.push(inv);
        }
        Ok(LiftPermutations { n, perms })
    }

    pub fn identity(base: &BaseMultigraph, n: usize) -> Self {
        let id: Vec<usize> = (0..n).collect();
        LiftPermutations { n, perms: vec![id; base.n_directed()] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_directed(&self) -> usize {
        self.perms.len()
    }

    pub fn sigma(&self, e: usize) -> &[usize] {
        &self.perms[e]
    }

    /// One line `t: σ_{2t}(0) … σ_{2t}(n−1)` per undirected edge, 0-based.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in 0..self.perms.len() / 2 {
            write!(s, "{t}:").unwrap();
            for j in &self.perms[2 * t] {
                write!(s, " {j}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(n: usize, text: &str) -> Result<Self> {
        let mut per_edge = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let Some((head, rest)) = line.split_once(':') else {
                return Err(Error::parse(ln + 1, "expected `t: i₁ … iₙ`"));
            };
            let t: usize = head.trim().parse().map_err(|_| Error::parse(ln + 1, "bad edge index"))?;
            if t != per_edge.len() {
                return Err(Error::parse(ln + 1, format!("expected edge {} next, found {t}", per_edge.len())));
            }
            let images = parse_usizes(rest, ln + 1)?;
            if images.len() != n || !is_permutation(&images) {
                return Err(Error::parse(ln + 1, format!("not a permutation of 0..{n}")));
            }
            per_edge.push(images);
        }
        Self::from_edge_permutations(n, per_edge)
    }
}

/// Independent uniform `σ_{2t}` for every undirected edge `t`, with
/// `σ_{2t+1} = σ_{2t}⁻¹` (a loop's two orientations included).
pub fn sample_random_lift<R: Rng + ?Sized>(base: &BaseMultigraph, n: usize, rng: &mut R) -> Result<LiftPermutations> {
    if n == 0 {
        return Err(Error::InvalidArgument("lift degree must be at least 1".into()));
    }
    let per_edge = (0..base.edges().len()).map(|_| uniform_permutation(rng, n)).collect();
    LiftPermutations::from_edge_permutations(n, per_edge)
}

#[derive(Debug, Clone)]
pub struct Lift {
    pub n: usize,
    /// `X_n`, with edge `t·n + i` joining `(x, i)` and `(y, σ_{2t}(i))`.
    pub graph: BaseMultigraph,
    /// `B_n` in the fiber indexing `(e, i) ↦ e·n + i`.
    pub b_n: NBMatrix,
}

fn check_sizes(base: &BaseMultigraph, sigma: &LiftPermutations) -> Result<()> {
    if sigma.n_directed() != base.n_directed() {
        return Err(Error::DimensionMismatch { expected: base.n_directed(), got: sigma.n_directed() });
    }
    Ok(())
}

pub fn lift_multigraph(base: &BaseMultigraph, sigma: &LiftPermutations) -> Result<BaseMultigraph> {
    check_sizes(base, sigma)?;
    let n = sigma.n;
    let mut edges = Vec::with_capacity(base.edges().len() * n);
    for (t, &(x, y)) in base.edges().iter().enumerate() {
        for i in 0..n {
            edges.push((x * n + i, y * n + sigma.perms[2 * t][i]));
        }
    }
    let map = base.vertex_map().iter().flat_map(|&a| (0..n).map(move |i| a * n + i)).collect();
    BaseMultigraph::from_edge_list(base.n_vertices() * n, edges, Some(map))
}

/// `(B_n)_{(e,i),(f,j)} = B_{ef} · 1(σ_e(i) = j)`.
pub fn lift_nb_matrix(base: &BaseMultigraph, sigma: &LiftPermutations) -> Result<NBMatrix> {
    check_sizes(base, sigma)?;
    let b = nb_from_multigraph(base);
    let n = sigma.n;
    let mut rows = Vec::with_capacity(base.n_directed() * n);
    for e in base.directed_edges() {
        for i in 0..n {
            let j = sigma.perms[e][i];
            rows.push(b.csr().row_cols(e).iter().map(|&f| f * n + j).collect());
        }
    }
    Ok(NBMatrix::new(Csr::from_rows(rows), IndexKind::DirectedEdge))
}

pub fn build_lift(base: &BaseMultigraph, sigma: &LiftPermutations) -> Result<Lift> {
    Ok(Lift { n: sigma.n, graph: lift_multigraph(base, sigma)?, b_n: lift_nb_matrix(base, sigma)? })
}

/// Position in the fiber indexing of each directed edge of [`lift_multigraph`].
pub fn lift_edge_relabeling(base: &BaseMultigraph, sigma: &LiftPermutations) -> Vec<usize> {
    let n = sigma.n;
    let mut map = vec![0; base.n_directed() * n];
    for t in 0..base.edges().len() {
        for i in 0..n {
            let id = 2 * (t * n + i);
            map[id] = (2 * t) * n + i;
            map[id + 1] = (2 * t + 1) * n + sigma.perms[2 * t][i];
        }
    }
    map
}

/// `B_n χ_f = Σ_e B_{ef} χ_e` and `B_n* χ_e = Σ_f B_{ef} χ_f` for every base
/// edge, checked in integers.
pub fn fiber_action_matches(base_b: &NBMatrix, b_n: &NBMatrix, n: usize) -> bool {
    let r = base_b.dim();
    if b_n.dim() != r * n {
        return false;
    }
    // column sums over the fiber of f, and row sums over the fiber of e
    let mut col_fiber = vec![vec![0u32; r]; r * n];
    let mut row_fiber = vec![vec![0u32; r * n]; r];
    for row in 0..r * n {
        for &col in b_n.csr().row_cols(row) {
            col_fiber[row][col / n] += 1;
            row_fiber[row / n][col] += 1;
        }
    }
    let forward = (0..r * n).all(|row| (0..r).all(|f| col_fiber[row][f] as f64 == base_b.get(row / n, f)));
    let backward = (0..r).all(|e| (0..r * n).all(|col| row_fiber[e][col] as f64 == base_b.get(e, col / n)));
    forward && backward
}

/// Largest entry of `P B_n (I − P)`, where `P` averages over fibers.
pub fn projector_leakage(b_n: &NBMatrix, r: usize, n: usize) -> f64 {
    let mut worst = 0.0f64;
    let mut sums = vec![0.0f64; r * n];
    for e in 0..r {
        sums.iter_mut().for_each(|s| *s = 0.0);
        for i in 0..n {
            for (col, v) in b_n.csr().row(e * n + i) {
                sums[col] += v;
            }
        }
        // (P B_n)_{(e,·),(f,j)} = sums[f·n+j]/n; subtracting its fiber mean gives P B_n (I−P)
        for f in 0..r {
            let block = &sums[f * n..(f + 1) * n];
            let mean = block.iter().sum::<f64>() / n as f64;
            for &s in block {
                worst = worst.max((s - mean).abs() / n as f64);
            }
        }
    }
    worst
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumSplit {
    /// Eigenvalues of `B_n` matched to those of `B`, in the order of the base list.
    pub old: Vec<Complex64>,
    /// The remaining `nr − r` eigenvalues, sorted by modulus descending.
    pub new: Vec<Complex64>,
}

/// Removes, for each base eigenvalue, the nearest unused lift eigenvalue
/// within `tol·(1 + |λ|)`.
pub fn split_spectrum(lift_eigs: &[Complex64], base_eigs: &[Complex64], tol: f64) -> Result<SpectrumSplit> {
    if base_eigs.is_empty() || !lift_eigs.len().is_multiple_of(base_eigs.len()) {
        return Err(Error::DimensionMismatch { expected: base_eigs.len(), got: lift_eigs.len() });
    }
    let mut used = vec![false; lift_eigs.len()];
    let mut old = Vec::with_capacity(base_eigs.len());
    for &lam in base_eigs {
        let best = lift_eigs
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, z)| (i, (z - lam).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, dist)) if dist <= tol * (1.0 + lam.norm()) => {
                used[i] = true;
                old.push(lift_eigs[i]);
            }
            other => {
                return Err(Error::ContainmentViolation {
                    re: lam.re,
                    im: lam.im,
                    distance: other.map_or(f64::INFINITY, |b| b.1),
                })
            }
        }
    }
    let mut new: Vec<Complex64> = lift_eigs.iter().zip(&used).filter(|(_, &u)| !u).map(|(z, _)| *z).collect();
    sort_by_modulus(&mut new);
    Ok(SpectrumSplit { old, new })
}

/// Real version of [`split_spectrum`] for symmetric spectra.
pub fn split_real_spectrum(lift_eigs: &[f64], base_eigs: &[f64], tol: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let c = |v: &[f64]| v.iter().map(|&x| Complex64::new(x, 0.0)).collect::<Vec<_>>();
    let s = split_spectrum(&c(lift_eigs), &c(base_eigs), tol)?;
    let mut new: Vec<f64> = s.new.iter().map(|z| z.re).collect();
    new.sort_by(|a, b| b.total_cmp(a));
    Ok((s.old.iter().map(|z| z.re).collect(), new))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NewEigenMethod {
    /// Dense spectra of `B_n` and `B`, then [`split_spectrum`].
    Dense,
    /// Gelfand estimate on `(I−P) B_n (I−P)`.
    ProjectedPower { restarts: usize, seed: u64 },
    /// Regular bases only: new eigenvalues of `A_n` mapped through Ihara-Bass.
    IharaBass,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub burn_in: usize,
    pub window: usize,
    /// Consecutive window estimates must agree to this relative tolerance.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions { burn_in: 200, window: 200, tol: 5e-3, max_iters: 40_000 }
    }
}

fn project_out_fibers(x: &mut [f64], n: usize) {
    for block in x.chunks_mut(n) {
        let mean = block.iter().sum::<f64>() / n as f64;
        block.iter_mut().for_each(|v| *v -= mean);
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    norm
}

/// Growth rate of `‖((I−P)B_n(I−P))ᵏ x‖` from one random start.
pub fn projected_power_estimate<R: Rng + ?Sized>(b_n: &NBMatrix, n: usize, opts: PowerOptions, rng: &mut R) -> Result<f64> {
    let dim = b_n.dim();
    let mut x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() - 0.5).collect();
    let mut y = vec![0.0; dim];
    project_out_fibers(&mut x, n);
    if normalize(&mut x) == 0.0 {
        return Ok(0.0);
    }
    let step = |x: &mut Vec<f64>, y: &mut Vec<f64>| -> f64 {
        b_n.csr().matvec(x, y);
        project_out_fibers(y, n);
        std::mem::swap(x, y);
        normalize(x)
    };
    for _ in 0..opts.burn_in {
        if step(&mut x, &mut y) == 0.0 {
            return Ok(0.0);
        }
    }
    let mut previous: Option<f64> = None;
    let mut iters = opts.burn_in;
    while iters < opts.max_iters {
        let mut log_growth = 0.0;
        for _ in 0..opts.window {
            let g = step(&mut x, &mut y);
            if g == 0.0 {
                return Ok(0.0);
            }
            log_growth += g.ln();
        }
        iters += opts.window;
        let est = (log_growth / opts.window as f64).exp();
        if let Some(p) = previous {
            if (est - p).abs() <= opts.tol * est {
                return Ok(est.max(p));
            }
        }
        previous = Some(est);
    }
    Err(Error::ConvergenceFailure { iterations: iters, residual: previous.unwrap_or(f64::NAN) })
}

/// New eigenvalues of `A_n` for a regular base, largest first.
pub fn new_adjacency_eigenvalues(base: &BaseMultigraph, sigma: &LiftPermutations) -> Result<Vec<f64>> {
    let lifted = lift_multigraph(base, sigma)?;
    let base_eigs = dense_symmetric(base.adjacency().to_dense_f64());
    let lift_eigs = dense_symmetric(lifted.adjacency().to_dense_f64());
    Ok(split_real_spectrum(&lift_eigs, &base_eigs, CONTAINMENT_TOL)?.1)
}

/// Full spectrum of `B_n` for a `d`-regular base, from the spectrum of `A_n`.
pub fn lift_spectrum_ihara_bass(base: &BaseMultigraph, sigma: &LiftPermutations) -> Result<Vec<Complex64>> {
    let lifted = lift_multigraph(base, sigma)?;
    let a = lifted.adjacency();
    let d = a.regular_degree().ok_or(Error::NotRegular(0))?;
    crate::nonbacktracking::ihara_bass_spectrum(&dense_symmetric(a.to_dense_f64()), a.dim(), d)
}

/// `|λ₁|`, the largest modulus among the new eigenvalues of `B_n` (0 when `n = 1`).
pub fn new_lead_modulus(base: &BaseMultigraph, sigma: &LiftPermutations, method: NewEigenMethod) -> Result<f64> {
    check_sizes(base, sigma)?;
    let b = nb_from_multigraph(base);
    if !is_irreducible(&b) {
        return Err(Error::ReducibleOperator);
    }
    let n = sigma.n;
    if n == 1 {
        return Ok(0.0);
    }
    match method {
        NewEigenMethod::Dense => {
            let b_n = lift_nb_matrix(base, sigma)?;
            let split = split_spectrum(&nb_spectrum_dense(&b_n), &nb_spectrum_dense(&b), CONTAINMENT_TOL)?;
            Ok(split.new.first().map_or(0.0, |z| z.norm()))
        }
        NewEigenMethod::ProjectedPower { restarts, seed } => {
            let b_n = lift_nb_matrix(base, sigma)?;
            let mut rng = rng_from_seed(seed);
            let mut best = 0.0f64;
            for _ in 0..restarts.max(1) {
                best = best.max(projected_power_estimate(&b_n, n, PowerOptions::default(), &mut rng)?);
            }
            Ok(best)
        }
        NewEigenMethod::IharaBass => {
            let a = base.adjacency();
            let d = a.regular_degree().ok_or(Error::NotRegular(0))?;
            let new_mu = new_adjacency_eigenvalues(base, sigma)?;
            let cyclomatic = base.edges().len().saturating_sub(base.n_actual());
            let unit = if cyclomatic > 0 { 1.0 } else { 0.0 };
            Ok(new_mu.iter().flat_map(|&mu| quadratic_roots(mu, d)).map(|z| z.norm()).fold(unit, f64::max))
        }
    }
}

/// Inverse orientation of a directed base edge, re-exported for callers
/// that build permutations by hand.
pub fn reverse(e: usize) -> usize {
    inverse(e)
}
