//! Eigenvalue computations and the spectral statistics of regular graphs.
//!
//! For a `d`-regular graph with adjacency eigenvalues `μ₁ ≥ … ≥ μₙ`, the
//! Friedman statistic is `μ₂ ∨ |μₙ|` and the Ramanujan statistic is
//! `μ = max{|μᵢ| : |μᵢ| < d}`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lanczos::{extremal_eigenvalues, LanczosOptions};
use crate::multigraph::{is_simple_regular, AdjacencyMatrix};
use crate::multiset::sort_by_modulus;

/// Largest `n` handled by the dense symmetric solver in [`SolverChoice::Auto`].
pub const DENSE_SYMMETRIC_LIMIT: usize = 2500;

/// Eigenvalues with `|μ| ≥ d − TRIVIAL_SLACK` count as trivial (`±d`).
pub const TRIVIAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SymMode {
    /// Full spectrum.
    Dense,
    /// The `count` largest and `count` smallest distinct eigenvalues.
    Iterative { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Auto,
    Dense,
    Iterative,
}

/// Eigenvalues of a symmetric matrix, sorted descending.
pub fn sym_eigs(a: &AdjacencyMatrix, mode: SymMode) -> Result<Vec<f64>> {
    match mode {
        SymMode::Dense => Ok(dense_symmetric(a.to_dense_f64())),
        SymMode::Iterative { count } => {
            let csr = a.to_csr();
            let apply = |x: &[f64], y: &mut [f64]| csr.matvec(x, y);
            let ex = extremal_eigenvalues(&apply, a.dim(), count, &[], LanczosOptions::default())?;
            Ok(merge_extremal(ex.largest, ex.smallest))
        }
    }
}

fn merge_extremal(largest: Vec<f64>, smallest: Vec<f64>) -> Vec<f64> {
    let mut all = largest;
    for s in smallest.into_iter().rev() {
        if all.last().is_none_or(|&l| s < l - 1e-12) {
            all.push(s);
        }
    }
    all
}

pub fn dense_symmetric(m: DMatrix<f64>) -> Vec<f64> {
    let mut ev: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Eigenvalues of a general real matrix, sorted by modulus descending.
pub fn dense_nonsymmetric(m: DMatrix<f64>) -> Vec<Complex64> {
    let mut ev = crate::hqr::eigenvalues(&m).expect("QR iteration failed to converge");
    sort_by_modulus(&mut ev);
    ev
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().copied().fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapStatistic {
    /// `μ₂ ∨ |μₙ|`.
    pub friedman: f64,
    /// `μ = max{|μᵢ| : |μᵢ| < d}`.
    pub mu: f64,
    pub mu2: f64,
    pub mu_n: f64,
}

fn require_regular(a: &AdjacencyMatrix, d: usize) -> Result<()> {
    if is_simple_regular(a, d) {
        Ok(())
    } else {
        Err(Error::NotRegular(d))
    }
}

fn nontrivial_max(values: impl Iterator<Item = f64>, d: usize) -> f64 {
    values.map(f64::abs).filter(|&x| x < d as f64 - TRIVIAL_SLACK).fold(0.0, f64::max)
}

/// Friedman and Ramanujan statistics of a simple `d`-regular graph.
pub fn gap_statistic(a: &AdjacencyMatrix, d: usize) -> Result<GapStatistic> {
    gap_statistic_with(a, d, SolverChoice::Auto)
}

pub fn gap_statistic_with(a: &AdjacencyMatrix, d: usize, solver: SolverChoice) -> Result<GapStatistic> {
    require_regular(a, d)?;
    let n = a.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("gap statistic needs at least two vertices".into()));
    }
    let dense = match solver {
        SolverChoice::Auto => n <= DENSE_SYMMETRIC_LIMIT,
        SolverChoice::Dense => true,
        SolverChoice::Iterative => false,
    };
    if dense {
        let ev = dense_symmetric(a.to_dense_f64());
        let (mu2, mu_n) = (ev[1], ev[n - 1]);
        Ok(GapStatistic { friedman: mu2.max(mu_n.abs()), mu: nontrivial_max(ev.into_iter(), d), mu2, mu_n })
    } else {
        deflated_gap_statistic(a, d)
    }
}

/// Lanczos on `𝟙^⊥`, where `𝟙/√n` is the Perron vector of a regular graph.
fn deflated_gap_statistic(a: &AdjacencyMatrix, d: usize) -> Result<GapStatistic> {
    let n = a.dim();
    let csr = a.to_csr();
    let apply = |x: &[f64], y: &mut [f64]| csr.matvec(x, y);
    let ones = vec![1.0 / (n as f64).sqrt(); n];
    let ex = extremal_eigenvalues(&apply, n, 4, &[ones], LanczosOptions::default())?;
    let mu2 = ex.largest[0];
    let mu_n = ex.smallest[0];
    let mu = nontrivial_max(ex.largest.iter().chain(&ex.smallest).copied(), d);
    Ok(GapStatistic { friedman: mu2.max(mu_n.abs()), mu, mu2, mu_n })
}

/// `μ ≤ 2√(d−1)` up to `1e−10`.
pub fn is_ramanujan(a: &AdjacencyMatrix, d: usize) -> Result<bool> {
    let g = gap_statistic(a, d)?;
    Ok(g.mu <= ramanujan_bound(d) + 1e-10)
}

pub fn ramanujan_bound(d: usize) -> f64 {
    2.0 * ((d - 1) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlonBoppana {
    pub mu2: f64,
    /// `μ₂ ≥ 2√(d−1) − ε`.
    pub holds: bool,
    /// Fraction of eigenvalues `≥ 2√(d−1) − ε`.
    pub serre_fraction: f64,
}

/// Checks `μ₂ ≥ 2√(d−1) − ε` and measures the fraction of eigenvalues above
/// the same level. The check only becomes meaningful once `ε` exceeds the
/// finite-size deficit, which decays like `1/log n`; on tiny graphs it fails.
pub fn alon_boppana_check(a: &AdjacencyMatrix, d: usize, eps: f64) -> Result<AlonBoppana> {
    require_regular(a, d)?;
    let ev = dense_symmetric(a.to_dense_f64());
    let level = ramanujan_bound(d) - eps;
    let mu2 = ev.get(1).copied().unwrap_or(f64::NEG_INFINITY);
    let above = ev.iter().filter(|&&x| x >= level).count();
    Ok(AlonBoppana { mu2, holds: mu2 >= level, serre_fraction: above as f64 / ev.len() as f64 })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SpectralReport {
    pub d: usize,
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub mu: f64,
    pub gap_stat: f64,
    pub ramanujan: bool,
}

pub fn spectral_report(a: &AdjacencyMatrix, d: usize) -> Result<SpectralReport> {
    require_regular(a, d)?;
    let eigenvalues = dense_symmetric(a.to_dense_f64());
    let n = eigenvalues.len();
    let gap_stat = if n >= 2 { eigenvalues[1].max(eigenvalues[n - 1].abs()) } else { 0.0 };
    let mu = nontrivial_max(eigenvalues.iter().copied(), d);
    Ok(SpectralReport { d, mu, gap_stat, ramanujan: mu <= ramanujan_bound(d) + 1e-10, eigenvalues })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configuration::sample_uniform_regular;
    use crate::multigraph::BaseMultigraph;
    use crate::rng::rng_from_seed;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn known_spectra() {
        let k4 = BaseMultigraph::complete(4).adjacency();
        assert!(close(&sym_eigs(&k4, SymMode::Dense).unwrap(), &[3.0, -1.0, -1.0, -1.0], 1e-12));
        let k33 = BaseMultigraph::complete_bipartite(3, 3).adjacency();
        assert!(close(&sym_eigs(&k33, SymMode::Dense).unwrap(), &[3.0, 0.0, 0.0, 0.0, 0.0, -3.0], 1e-12));
        let pet = BaseMultigraph::petersen().adjacency();
        let expected = [3.0, 1.0, 1.0, 1.0, 1.0, 1.0, -2.0, -2.0, -2.0, -2.0];
        assert!(close(&sym_eigs(&pet, SymMode::Dense).unwrap(), &expected, 1e-12));
    }

    #[test]
    fn gap_statistics_of_small_graphs() {
        let k4 = BaseMultigraph::complete(4).adjacency();
        let g = gap_statistic(&k4, 3).unwrap();
        assert!((g.friedman - 1.0).abs() < 1e-12 && (g.mu - 1.0).abs() < 1e-12);
        assert!(is_ramanujan(&k4, 3).unwrap());

        let k33 = BaseMultigraph::complete_bipartite(3, 3).adjacency();
        let g = gap_statistic(&k33, 3).unwrap();
        assert!((g.friedman - 3.0).abs() < 1e-12);
        assert!(g.mu.abs() < 1e-12);

        let pet = BaseMultigraph::petersen().adjacency();
        let g = gap_statistic(&pet, 3).unwrap();
        assert!((g.friedman - 2.0).abs() < 1e-12 && (g.mu - 2.0).abs() < 1e-12);
        assert!(is_ramanujan(&pet, 3).unwrap());
    }

    #[test]
    fn disconnected_graph_flag_ignores_repeated_trivial_value() {
        let g = BaseMultigraph::complete(4).disjoint_union(&BaseMultigraph::petersen()).adjacency();
        let stat = gap_statistic(&g, 3).unwrap();
        assert!((stat.mu2 - 3.0).abs() < 1e-12);
        assert!((stat.friedman - 3.0).abs() < 1e-12);
        assert!((stat.mu - 2.0).abs() < 1e-12);
        assert!(is_ramanujan(&g, 3).unwrap());
        // the deflated solver sees the second Perron value as well
        let it = gap_statistic_with(&g, 3, SolverChoice::Iterative).unwrap();
        assert!((it.mu2 - 3.0).abs() < 1e-8);
        assert!((it.mu - stat.mu).abs() < 1e-8);
    }

    #[test]
    fn not_regular_is_rejected() {
        let p = BaseMultigraph::path(3).adjacency();
        assert_eq!(gap_statistic(&p, 2), Err(Error::NotRegular(2)));
        assert_eq!(is_ramanujan(&p, 2), Err(Error::NotRegular(2)));
        assert!(alon_boppana_check(&p, 2, 0.1).is_err());
    }

    #[test]
    fn alon_boppana_small_and_moderate() {
        let k4 = BaseMultigraph::complete(4).adjacency();
        let ab = alon_boppana_check(&k4, 3, 0.5).unwrap();
        assert!(!ab.holds);
        assert!((ab.mu2 + 1.0).abs() < 1e-12);

        let mut rng = rng_from_seed(77);
        for _ in 0..3 {
            let s = sample_uniform_regular(1000, 3, &mut rng, 10_000).unwrap();
            let ab = alon_boppana_check(&s.adjacency, 3, 0.5).unwrap();
            assert!(ab.holds);
            let serre = alon_boppana_check(&s.adjacency, 3, 0.3).unwrap();
            assert!(serre.serre_fraction > 0.0);
        }
    }

    #[test]
    fn dense_and_iterative_agree() {
        let mut rng = rng_from_seed(123);
        for i in 0..50 {
            let n = 40 + 4 * i;
            let d = if i % 2 == 0 { 3 } else { 4 };
            let s = sample_uniform_regular(n, d, &mut rng, 100_000).unwrap();
            let dense = sym_eigs(&s.adjacency, SymMode::Dense).unwrap();
            let it = sym_eigs(&s.adjacency, SymMode::Iterative { count: 2 }).unwrap();
            assert!((dense[0] - it[0]).abs() < 1e-7);
            assert!((dense[n - 1] - it[it.len() - 1]).abs() < 1e-7);
            let gd = gap_statistic_with(&s.adjacency, d, SolverChoice::Dense).unwrap();
            let gi = gap_statistic_with(&s.adjacency, d, SolverChoice::Iterative).unwrap();
            assert!((gd.friedman - gi.friedman).abs() < 1e-7, "n={n}: {gd:?} vs {gi:?}");
            assert!((gd.mu - gi.mu).abs() < 1e-7);
        }
    }

    #[test]
    fn spectrum_sums_to_trace_and_relabeling_is_invisible() {
        let mut rng = rng_from_seed(8);
        for _ in 0..10 {
            let s = sample_uniform_regular(30, 3, &mut rng, 100_000).unwrap();
            let ev = sym_eigs(&s.adjacency, SymMode::Dense).unwrap();
            assert!(ev.iter().sum::<f64>().abs() < 1e-8 * 30.0);
            let perm = crate::rng::uniform_permutation(&mut rng, 30);
            let a = gap_statistic(&s.adjacency, 3).unwrap();
            let b = gap_statistic(&s.adjacency.relabel(&perm), 3).unwrap();
            assert!((a.friedman - b.friedman).abs() < 1e-10 && (a.mu - b.mu).abs() < 1e-10);
        }
    }

    #[test]
    fn report_fields() {
        let r = spectral_report(&BaseMultigraph::petersen().adjacency(), 3).unwrap();
        assert_eq!(r.eigenvalues.len(), 10);
        assert!((r.eigenvalues[0] - 3.0).abs() < 1e-12);
        assert!(r.ramanujan);
    }
}
