//! Lanczos iteration with full reorthogonalization for the extremal
//! eigenvalues of a symmetric operator, optionally restricted to the
//! orthogonal complement of known eigenvectors.
//!
//! The Krylov basis grows until the wanted Ritz pairs satisfy
//! `|β_m s_{m,i}| ≤ tol`, the Krylov space becomes invariant, or `max_dim`
//! is reached. With a single start vector only distinct eigenvalues are
//! resolved, so repeated eigenvalues appear once.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use rand::Rng;

#[derive(Debug, Clone, Copy)]
pub struct LanczosOptions {
    pub tol: f64,
    pub max_dim: usize,
    pub check_every: usize,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { tol: 1e-8, max_dim: 1200, check_every: 10, seed: 0x5EED }
    }
}

#[derive(Debug, Clone)]
pub struct Extremal {
    /// Largest Ritz values, descending.
    pub largest: Vec<f64>,
    /// Smallest Ritz values, ascending.
    pub smallest: Vec<f64>,
    /// Largest residual bound among the returned values.
    pub residual: f64,
    pub krylov_dim: usize,
}

fn orthogonalize(w: &mut [f64], against: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in against {
            let c: f64 = q.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
            w.iter_mut().zip(q).for_each(|(x, qi)| *x -= c * qi);
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `count` largest and `count` smallest eigenvalues of the symmetric operator
/// `apply` of dimension `n`, restricted to the complement of the orthonormal
/// vectors `deflate`.
pub fn extremal_eigenvalues(
    apply: &dyn Fn(&[f64], &mut [f64]),
    n: usize,
    count: usize,
    deflate: &[Vec<f64>],
    opts: LanczosOptions,
) -> Result<Extremal> {
    let space_dim = n.saturating_sub(deflate.len());
    if space_dim == 0 || count == 0 {
        return Ok(Extremal { largest: vec![], smallest: vec![], residual: 0.0, krylov_dim: 0 });
    }
    let mut rng = rng_from_seed(opts.seed);
    let mut q: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    orthogonalize(&mut q, deflate);
    let nq = norm(&q);
    q.iter_mut().for_each(|x| *x /= nq);

    let mut basis: Vec<Vec<f64>> = vec![q];
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut w = vec![0.0; n];
    let limit = space_dim.min(opts.max_dim.max(2 * count));
    let mut scale = 0.0f64;

    loop {
        let j = basis.len() - 1;
        apply(&basis[j], &mut w);
        let a: f64 = w.iter().zip(&basis[j]).map(|(x, y)| x * y).sum();
        alpha.push(a);
        orthogonalize(&mut w, deflate);
        orthogonalize(&mut w, &basis);
        let b = norm(&w);
        scale = scale.max(a.abs() + b);
        let m = alpha.len();
        let invariant = b <= 1e-10 * scale.max(1.0) || m >= space_dim;

        if invariant || m >= limit || m.is_multiple_of(opts.check_every) {
            let t = DMatrix::from_fn(m, m, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = SymmetricEigen::new(t);
            let mut order: Vec<usize> = (0..m).collect();
            order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
            let resid = |i: usize| if invariant { 0.0 } else { (b * eig.eigenvectors[(m - 1, i)]).abs() };
            let k = count.min(m);
            let top = &order[..k];
            let bottom: Vec<usize> = order.iter().rev().take(k).copied().collect();
            let worst = top.iter().chain(&bottom).map(|&i| resid(i)).fold(0.0, f64::max);
            if worst <= opts.tol || invariant {
                return Ok(Extremal {
                    largest: top.iter().map(|&i| eig.eigenvalues[i]).collect(),
                    smallest: bottom.iter().map(|&i| eig.eigenvalues[i]).collect(),
                    residual: worst,
                    krylov_dim: m,
                });
            }
            if m >= limit {
                return Err(Error::ConvergenceFailure { iterations: m, residual: worst });
            }
        }
        beta.push(b);
        w.iter_mut().for_each(|x| *x /= b);
        basis.push(std::mem::replace(&mut w, vec![0.0; n]));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_operator() {
        let d: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..x.len() {
                y[i] = d[i] * x[i];
            }
        };
        let ex = extremal_eigenvalues(&apply, 200, 2, &[], LanczosOptions::default()).unwrap();
        let mut sorted = d.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        assert!((ex.largest[0] - sorted[0]).abs() < 1e-8);
        assert!((ex.largest[1] - sorted[1]).abs() < 1e-8);
        assert!((ex.smallest[0] - sorted[199]).abs() < 1e-8);
    }

    #[test]
    fn deflation_removes_direction() {
        // path graph Laplacian-like operator: 2 on the diagonal, −1 off; deflate nothing vs top vector
        let n = 50;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let mut s = 2.0 * x[i];
                if i > 0 {
                    s -= x[i - 1];
                }
                if i + 1 < n {
                    s -= x[i + 1];
                }
                y[i] = s;
            }
        };
        let eig = |k: usize| 2.0 - 2.0 * (std::f64::consts::PI * k as f64 / (n as f64 + 1.0)).cos();
        let top: Vec<f64> = (0..n)
            .map(|i| (std::f64::consts::PI * n as f64 * (i as f64 + 1.0) / (n as f64 + 1.0)).sin())
            .collect();
        let nt = norm(&top);
        let top: Vec<f64> = top.iter().map(|x| x / nt).collect();
        let ex = extremal_eigenvalues(&apply, n, 1, &[top], LanczosOptions::default()).unwrap();
        assert!((ex.largest[0] - eig(n - 1)).abs() < 1e-8, "{} vs {}", ex.largest[0], eig(n - 1));
        assert!((ex.smallest[0] - eig(1)).abs() < 1e-8);
    }
}
