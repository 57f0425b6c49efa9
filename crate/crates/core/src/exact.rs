//! Dense matrices with exact rational entries, stored as integer numerators
//! over one shared positive denominator.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

#[derive(Debug, Clone)]
pub struct RatMatrix {
    dim: usize,
    den: BigInt,
    num: Vec<BigInt>,
}

impl RatMatrix {
    pub fn zeros(dim: usize) -> Self {
        RatMatrix { dim, den: BigInt::one(), num: vec![BigInt::zero(); dim * dim] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.num[i * dim + i] = BigInt::one();
        }
        m
    }

    /// Row-major numerators over `den`.
    pub fn from_numerators(dim: usize, num: Vec<BigInt>, den: BigInt) -> Self {
        assert_eq!(num.len(), dim * dim);
        assert!(den.is_positive(), "denominator must be positive");
        RatMatrix { dim, den, num }
    }

    pub fn from_integers(dim: usize, entries: impl IntoIterator<Item = i64>) -> Self {
        let num: Vec<BigInt> = entries.into_iter().map(BigInt::from).collect();
        Self::from_numerators(dim, num, BigInt::one())
    }

    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> i64) -> Self {
        Self::from_integers(dim, (0..dim * dim).map(|k| f(k / dim, k % dim)))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn denominator(&self) -> &BigInt {
        &self.den
    }

    pub fn numerator(&self, i: usize, j: usize) -> &BigInt {
        &self.num[i * self.dim + j]
    }

    pub fn get(&self, i: usize, j: usize) -> BigRational {
        BigRational::new(self.numerator(i, j).clone(), self.den.clone())
    }

    /// Multiplies every entry by `num / den`.
    pub fn scaled(&self, num: i64, den: i64) -> Self {
        assert!(den != 0);
        let (num, den) = if den < 0 { (-num, -den) } else { (num, den) };
        let k = BigInt::from(num);
        RatMatrix { dim: self.dim, den: &self.den * den, num: self.num.iter().map(|x| x * &k).collect() }
    }

    pub fn transpose(&self) -> Self {
        let n = self.dim;
        let num = (0..n * n).map(|k| self.num[(k % n) * n + k / n].clone()).collect();
        RatMatrix { dim: n, den: self.den.clone(), num }
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(Zero::is_zero)
    }

    /// Every entry is an integer.
    pub fn is_integral(&self) -> bool {
        self.num.iter().all(|x| (x % &self.den).is_zero())
    }

    /// Divides numerators and denominator by their common factor.
    pub fn reduced(&self) -> Self {
        use num_integer::Integer;
        let g = self.num.iter().fold(self.den.clone(), |g, x| g.gcd(x));
        if g.is_one() || g.is_zero() {
            return self.clone();
        }
        RatMatrix { dim: self.dim, den: &self.den / &g, num: self.num.iter().map(|x| x / &g).collect() }
    }

    /// `M·𝟙`.
    pub fn row_sums(&self) -> Vec<BigRational> {
        (0..self.dim)
            .map(|i| BigRational::new(self.num[i * self.dim..(i + 1) * self.dim].iter().sum(), self.den.clone()))
            .collect()
    }

    pub fn to_f64(&self) -> DMatrix<f64> {
        let den = self.den.to_f64().unwrap_or(f64::INFINITY);
        let exact_den = self.den.to_f64().is_some_and(|d| d < 2f64.powi(52));
        DMatrix::from_fn(self.dim, self.dim, |i, j| {
            let x = self.numerator(i, j);
            if exact_den {
                x.to_f64().unwrap_or(f64::NAN) / den
            } else {
                self.get(i, j).to_f64().unwrap_or(f64::NAN)
            }
        })
    }

    /// Largest entrywise `|self − other|`, rounded to `f64`.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let diff = self - other;
        diff.num
            .iter()
            .map(|x| BigRational::new(x.abs(), diff.den.clone()).to_f64().unwrap_or(f64::INFINITY))
            .fold(0.0, f64::max)
    }

    fn with_denominator(&self, den: &BigInt) -> Vec<BigInt> {
        if den == &self.den {
            return self.num.clone();
        }
        let k = den / &self.den;
        debug_assert!((den % &self.den).is_zero());
        self.num.iter().map(|x| x * &k).collect()
    }

    fn common_denominator(a: &BigInt, b: &BigInt) -> BigInt {
        use num_integer::Integer;
        a.lcm(b)
    }
}

impl PartialEq for RatMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.num.iter().zip(&other.num).all(|(a, b)| a * &other.den == b * &self.den)
    }
}

impl Eq for RatMatrix {}

impl Add for &RatMatrix {
    type Output = RatMatrix;
    fn add(self, rhs: &RatMatrix) -> RatMatrix {
        assert_eq!(self.dim, rhs.dim);
        let den = RatMatrix::common_denominator(&self.den, &rhs.den);
        let a = self.with_denominator(&den);
        let b = rhs.with_denominator(&den);
        RatMatrix { dim: self.dim, den, num: a.into_iter().zip(b).map(|(x, y)| x + y).collect() }
    }
}

impl Neg for &RatMatrix {
    type Output = RatMatrix;
    fn neg(self) -> RatMatrix {
        RatMatrix { dim: self.dim, den: self.den.clone(), num: self.num.iter().map(|x| -x).collect() }
    }
}

impl Sub for &RatMatrix {
    type Output = RatMatrix;
    fn sub(self, rhs: &RatMatrix) -> RatMatrix {
        self + &(-rhs)
    }
}

impl Mul for &RatMatrix {
    type Output = RatMatrix;
    fn mul(self, rhs: &RatMatrix) -> RatMatrix {
        assert_eq!(self.dim, rhs.dim);
        let n = self.dim;
        let mut num = vec![BigInt::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = &self.num[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = &rhs.num[k * n + j];
                    if !b.is_zero() {
                        num[i * n + j] += a * b;
                    }
                }
            }
        }
        RatMatrix { dim: n, den: &self.den * &rhs.den, num }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic() {
        let a = RatMatrix::from_fn(2, |i, j| (i * 2 + j) as i64).scaled(1, 3);
        let b = RatMatrix::identity(2).scaled(1, 2);
        let s = &a + &b;
        assert_eq!(s.get(0, 0), BigRational::new(1.into(), 2.into()));
        assert_eq!(s.get(1, 1), BigRational::new(3.into(), 2.into()));
        let p = &a * &b;
        assert_eq!(p, a.scaled(1, 2));
        assert!((&a - &a).is_zero());
        assert_eq!(a.transpose().get(0, 1), a.get(1, 0));
    }

    #[test]
    fn equality_ignores_representation() {
        let a = RatMatrix::identity(3);
        let b = a.scaled(6, 6);
        assert_eq!(a, b);
        assert_eq!(b.reduced().denominator(), &BigInt::one());
        assert!(b.is_integral());
        assert!(!a.scaled(1, 2).is_integral());
        assert_eq!(a.max_abs_difference(&a.scaled(1, 4)), 0.75);
    }

    #[test]
    fn row_sums_and_conversion() {
        let a = RatMatrix::from_fn(3, |i, j| (i + j) as i64).scaled(1, 5);
        assert_eq!(a.row_sums()[2], BigRational::new(9.into(), 5.into()));
        assert!((a.to_f64()[(2, 2)] - 0.8).abs() < 1e-15);
    }
}
