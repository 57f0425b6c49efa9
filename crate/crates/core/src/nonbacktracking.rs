//! The non-backtracking operator, in its half-edge form `B = MN` on a
//! configuration and in its directed-edge form on a multigraph, together with
//! the Ihara-Bass correspondence between the spectra of `A` and `B`.

use std::fmt::Write as _;

use num_complex::Complex64;

use crate::configuration::{HalfEdgeSpace, Matching};
use crate::error::{Error, Result};
use crate::multigraph::{inverse, AdjacencyMatrix, BaseMultigraph};
use crate::multiset::{greedy_pairing, sort_by_modulus};
use crate::sparse::Csr;
use crate::spectra::{dense_nonsymmetric, dense_symmetric};

/// Upper end of the window `ℓ₀ ≤ k ≤ K_CHECK` used by [`growth_bound_rho`].
pub const K_CHECK: usize = 64;

/// Dense nonsymmetric spectra are only computed up to this dimension.
pub const DENSE_NB_LIMIT: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    HalfEdge,
    DirectedEdge,
}

/// Sparse 0/1 non-backtracking matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NBMatrix {
    matrix: Csr,
    kind: IndexKind,
}

impl NBMatrix {
    pub fn new(matrix: Csr, kind: IndexKind) -> Self {
        NBMatrix { matrix, kind }
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn kind(&self) -> IndexKind {
        self.kind
    }

    pub fn csr(&self) -> &Csr {
        &self.matrix
    }

    pub fn get(&self, e: usize, f: usize) -> f64 {
        self.matrix.get(e, f)
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.matrix.to_dense()
    }

    /// Coordinate text: one `row col value` line per nonzero, row-major order.
    pub fn to_coordinate_text(&self) -> String {
        let mut s = String::new();
        for (r, c, v) in self.matrix.triplets() {
            writeln!(s, "{r} {c} {v}").unwrap();
        }
        s
    }

    /// Copy with entry `(e, f)` toggled between 0 and 1. Used for fault injection.
    pub fn with_flipped_entry(&self, e: usize, f: usize) -> NBMatrix {
        let mut t: Vec<(usize, usize, f64)> = self.matrix.triplets().collect();
        match t.iter().position(|&(r, c, _)| (r, c) == (e, f)) {
            Some(k) => {
                t.remove(k);
            }
            None => t.push((e, f, 1.0)),
        }
        NBMatrix { matrix: Csr::from_triplets(self.dim(), t), kind: self.kind }
    }
}

/// `M_{ef} = 1(σ(e) = f)` and `N_{ef} = 1(e, f at the same vertex, e ≠ f)`.
pub fn matching_factors(space: HalfEdgeSpace, sigma: &Matching) -> (Csr, Csr) {
    let m = space.size();
    let perm = Csr::from_rows((0..m).map(|e| vec![sigma.partner(e)]).collect());
    let within = Csr::from_rows(
        (0..m).map(|e| space.at_vertex(space.vertex(e)).filter(|&f| f != e).collect()).collect(),
    );
    (perm, within)
}

/// `B = MN` on half-edges.
pub fn nb_from_matching(space: HalfEdgeSpace, sigma: &Matching) -> NBMatrix {
    let (m, n) = matching_factors(space, sigma);
    NBMatrix::new(m.mul(&n), IndexKind::HalfEdge)
}

/// `B_{ef} = 1(σ(e) ∈ E(v) \ {f})` where `f ∈ E(v)`, evaluated entry by entry.
pub fn nb_from_matching_direct(space: HalfEdgeSpace, sigma: &Matching) -> NBMatrix {
    let m = space.size();
    let rows = (0..m)
        .map(|e| {
            (0..m)
                .filter(|&f| {
                    let s = sigma.partner(e);
                    space.vertex(s) == space.vertex(f) && s != f
                })
                .collect()
        })
        .collect();
    NBMatrix::new(Csr::from_rows(rows), IndexKind::HalfEdge)
}

/// `B_{ef} = 1(ι(e₂) = ι(f₁)) · 1(f ≠ e⁻¹)` on directed edges.
pub fn nb_from_multigraph(x: &BaseMultigraph) -> NBMatrix {
    let out = x.out_edges();
    let rows = x
        .directed_edges()
        .map(|e| {
            let head = x.actual_endpoints(e).1;
            out[head].iter().copied().filter(|&f| f != inverse(e)).collect()
        })
        .collect();
    NBMatrix::new(Csr::from_rows(rows), IndexKind::DirectedEdge)
}

/// Strong connectivity of the directed graph of `B`.
pub fn is_irreducible(b: &NBMatrix) -> bool {
    b.matrix.is_strongly_connected()
}

/// Perron eigenvalue of an irreducible nonnegative matrix.
///
/// Power iteration on `B + I` (primitive whenever `B` is irreducible). Each
/// iterate `x > 0` brackets `ρ₁` between the Collatz-Wielandt quotients
/// `min (Bx)ᵢ/xᵢ` and `max (Bx)ᵢ/xᵢ`; the midpoint is returned once the
/// bracket is narrower than `2·tol`.
pub fn perron_eigenvalue(b: &NBMatrix, tol: f64, max_iters: usize) -> Result<f64> {
    if !is_irreducible(b) {
        return Err(Error::ReducibleOperator);
    }
    let n = b.dim();
    let mut x = vec![1.0; n];
    let mut bx = vec![0.0; n];
    let mut width = f64::INFINITY;
    for _ in 0..max_iters {
        b.matrix.matvec(&x, &mut bx);
        let (lo, hi) = x
            .iter()
            .zip(&bx)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (&xi, &yi)| {
                let q = yi / xi;
                (lo.min(q), hi.max(q))
            });
        width = hi - lo;
        if width <= 2.0 * tol {
            return Ok(0.5 * (lo + hi));
        }
        let mut norm = 0.0f64;
        for i in 0..n {
            x[i] += bx[i];
            norm = norm.max(x[i]);
        }
        x.iter_mut().for_each(|v| *v /= norm);
    }
    Err(Error::ConvergenceFailure { iterations: max_iters, residual: width })
}

/// Roots of `λ² − μλ + (d − 1) = 0`.
pub fn quadratic_roots(mu: f64, d: usize) -> [Complex64; 2] {
    let q = (d - 1) as f64;
    let disc = mu * mu - 4.0 * q;
    if disc >= 0.0 {
        let s = disc.sqrt();
        [Complex64::new((mu + s) / 2.0, 0.0), Complex64::new((mu - s) / 2.0, 0.0)]
    } else {
        let s = (-disc).sqrt();
        [Complex64::new(mu / 2.0, s / 2.0), Complex64::new(mu / 2.0, -s / 2.0)]
    }
}

/// Spectrum of `B` predicted from the spectrum of `A` for a `d`-regular
/// (multi)graph on `n` vertices: `r = nd/2 − n` copies each of `+1` and `−1`
/// plus both roots of `λ² − μλ + (d−1)` for every `μ`. Sorted by modulus.
pub fn ihara_bass_spectrum(a_eigs: &[f64], n: usize, d: usize) -> Result<Vec<Complex64>> {
    if a_eigs.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: a_eigs.len() });
    }
    if d < 2 || (n * d) % 2 == 1 {
        return Err(Error::InvalidArgument(format!("no {d}-regular graph on {n} vertices")));
    }
    let r = n * d / 2 - n;
    let mut out = Vec::with_capacity(n * d);
    for _ in 0..r {
        out.push(Complex64::new(1.0, 0.0));
        out.push(Complex64::new(-1.0, 0.0));
    }
    for &mu in a_eigs {
        out.extend(quadratic_roots(mu, d));
    }
    sort_by_modulus(&mut out);
    Ok(out)
}

pub fn nb_spectrum_dense(b: &NBMatrix) -> Vec<Complex64> {
    dense_nonsymmetric(b.to_dense())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IharaBassCheck {
    pub ok: bool,
    /// Largest distance between paired eigenvalues.
    pub worst: f64,
    /// The predicted eigenvalue realizing `worst`.
    pub worst_at: Complex64,
}

/// Compares the Ihara-Bass prediction from `A` against the dense spectrum of `B`.
pub fn verify_ihara_bass(a: &AdjacencyMatrix, b: &NBMatrix, tol: f64) -> Result<IharaBassCheck> {
    let d = a.regular_degree().ok_or(Error::NotRegular(0))?;
    let n = a.dim();
    if b.dim() != n * d {
        return Err(Error::DimensionMismatch { expected: n * d, got: b.dim() });
    }
    if b.dim() > DENSE_NB_LIMIT {
        return Err(Error::InvalidArgument(format!("dense spectrum limited to dimension {DENSE_NB_LIMIT}")));
    }
    let predicted = ihara_bass_spectrum(&dense_symmetric(a.to_dense_f64()), n, d)?;
    let computed = nb_spectrum_dense(b);
    let pairing = greedy_pairing(&predicted, &computed);
    let (i, _, worst) = pairing.worst().unwrap_or((0, 0, 0.0));
    let worst_at = predicted.get(i).copied().unwrap_or_default();
    Ok(IharaBassCheck { ok: worst <= tol, worst, worst_at })
}

/// Smallest `ρ` (bisection to `1e−6` over `[ρ₁, max column sum]`) such that
/// `max_e ‖Bᵏ δ_e‖₁ ≤ ρᵏ` for every `ℓ₀ ≤ k ≤ K_CHECK`. Values of `ℓ₀`
/// beyond `K_CHECK` are clamped.
pub fn growth_bound_rho(b: &NBMatrix, ell0: usize) -> Result<f64> {
    if ell0 == 0 {
        return Err(Error::InvalidArgument("ℓ₀ must be at least 1".into()));
    }
    let rho1 = perron_eigenvalue(b, 1e-12, 1_000_000)?;
    let ell0 = ell0.min(K_CHECK);
    let n = b.dim();
    // log of max_e (𝟙ᵀBᵏ)_e for k = 0..=K_CHECK
    let mut log_max = Vec::with_capacity(K_CHECK + 1);
    let mut c = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut log_scale = 0.0f64;
    log_max.push(0.0);
    for _ in 1..=K_CHECK {
        b.matrix.matvec_transpose(&c, &mut next);
        let mx = next.iter().copied().fold(0.0, f64::max);
        log_scale += mx.ln();
        for (ci, ni) in c.iter_mut().zip(&next) {
            *ci = ni / mx;
        }
        log_max.push(log_scale);
    }
    let holds = |rho: f64| (ell0..=K_CHECK).all(|k| log_max[k] <= k as f64 * rho.ln() + 1e-12 * k as f64);
    let hi0 = b.matrix.transpose().row_sums().into_iter().fold(0.0, f64::max);
    let (mut lo, mut hi) = (rho1, hi0.max(rho1));
    if holds(lo) {
        return Ok(lo);
    }
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if holds(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}
