//! Greedy nearest-neighbour pairing of complex multisets.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct Pairing {
    /// `(index in left, index in right, distance)` for each left element.
    pub pairs: Vec<(usize, usize, f64)>,
    /// Right-hand indices left unpaired.
    pub unmatched: Vec<usize>,
}

impl Pairing {
    pub fn worst(&self) -> Option<(usize, usize, f64)> {
        self.pairs.iter().copied().max_by(|a, b| a.2.total_cmp(&b.2))
    }
}

/// Pairs each element of `left` (in order) with the nearest unused element of
/// `right`. Requires `left.len() <= right.len()`.
pub fn greedy_pairing(left: &[Complex64], right: &[Complex64]) -> Pairing {
    assert!(left.len() <= right.len(), "left multiset larger than right");
    let mut used = vec![false; right.len()];
    let mut pairs = Vec::with_capacity(left.len());
    for (i, a) in left.iter().enumerate() {
        let mut best = (usize::MAX, f64::INFINITY);
        for (j, b) in right.iter().enumerate() {
            if !used[j] {
                let dist = (a - b).norm();
                if dist < best.1 {
                    best = (j, dist);
                }
            }
        }
        used[best.0] = true;
        pairs.push((i, best.0, best.1));
    }
    let unmatched = (0..right.len()).filter(|&j| !used[j]).collect();
    Pairing { pairs, unmatched }
}

/// Sorts by modulus descending, then real part descending, then imaginary part descending.
pub fn sort_by_modulus(values: &mut [Complex64]) {
    values.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}
