//! Nonnegative integer matrices for induction cocycles.
//!
//! Entries are unbounded: a path of depth 10^4 produces entries with
//! thousands of digits, so everything is `BigUint` backed. Step matrices are
//! `E + unit(w, l)`; appending an arrow to a path left-multiplies the
//! accumulated matrix by the transpose of the step, which is a single row
//! addition here.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::scalar::{ArithError, Backend, Scalar};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntMatrix {
    n: usize,
    data: Vec<BigUint>,
}

impl IntMatrix {
    pub fn identity(n: usize) -> IntMatrix {
        let mut data = vec![BigUint::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = BigUint::one();
        }
        IntMatrix { n, data }
    }

    /// `E + unit(row, col)`, the step matrix of one induction arrow with
    /// winner `row` and loser `col`.
    pub fn elementary(n: usize, row: usize, col: usize) -> IntMatrix {
        let mut m = IntMatrix::identity(n);
        m.data[row * n + col] += BigUint::one();
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> &BigUint {
        &self.data[row * self.n + col]
    }

    pub fn mul(&self, rhs: &IntMatrix) -> IntMatrix {
        assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut data = vec![BigUint::zero(); n * n];
        for i in 0..n {
            for k in 0..n {
                let a = &self.data[i * n + k];
                if a.is_zero() {
                    continue;
                }
                for j in 0..n {
                    let b = &rhs.data[k * n + j];
                    if !b.is_zero() {
                        data[i * n + j] += a * b;
                    }
                }
            }
        }
        IntMatrix { n, data }
    }

    pub fn transpose(&self) -> IntMatrix {
        let n = self.n;
        let mut data = vec![BigUint::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                data[j * n + i] = self.data[i * n + j].clone();
            }
        }
        IntMatrix { n, data }
    }

    /// In-place `row dst += row src`; the effect of left-multiplying by
    /// `E + unit(dst, src)`.
    pub fn add_row_into(&mut self, src: usize, dst: usize) {
        assert_ne!(src, dst);
        let n = self.n;
        for j in 0..n {
            let v = self.data[src * n + j].clone();
            self.data[dst * n + j] += v;
        }
    }

    pub fn is_positive(&self) -> bool {
        self.data.iter().all(|e| !e.is_zero())
    }

    pub fn max_entry(&self) -> &BigUint {
        self.data.iter().max().expect("nonempty matrix")
    }

    pub fn column_sum(&self, col: usize) -> BigUint {
        (0..self.n).map(|i| self.get(i, col).clone()).sum()
    }

    pub fn min_column_sum(&self) -> BigUint {
        (0..self.n)
            .map(|c| self.column_sum(c))
            .min()
            .expect("nonempty matrix")
    }

    /// Exact determinant by fraction-free Gaussian elimination.
    pub fn det(&self) -> BigInt {
        let n = self.n;
        let mut a: Vec<BigInt> = self.data.iter().map(|u| BigInt::from(u.clone())).collect();
        let mut prev = BigInt::one();
        let mut sign = BigInt::one();
        for k in 0..n {
            if a[k * n + k].is_zero() {
                let swap = (k + 1..n).find(|&r| !a[r * n + k].is_zero());
                match swap {
                    None => return BigInt::zero(),
                    Some(r) => {
                        for j in 0..n {
                            a.swap(k * n + j, r * n + j);
                        }
                        sign = -sign;
                    }
                }
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    let num = &a[i * n + j] * &a[k * n + k] - &a[i * n + k] * &a[k * n + j];
                    a[i * n + j] = &num / &prev;
                }
                a[i * n + k] = BigInt::zero();
            }
            prev = a[k * n + k].clone();
        }
        sign * a[(n - 1) * n + (n - 1)].clone()
    }

    /// `M v` over scalars in the given backend.
    pub fn apply_scalar(&self, v: &[Scalar], backend: Backend) -> Result<Vec<Scalar>, ArithError> {
        assert_eq!(v.len(), self.n);
        let mut out = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let mut acc = Scalar::zero(backend);
            for j in 0..self.n {
                let e = self.get(i, j);
                if e.is_zero() {
                    continue;
                }
                let c = Scalar::from_rational_value(
                    BigRational::from_integer(BigInt::from(e.clone())),
                    backend,
                );
                acc = acc.add(&c.mul(&v[j])?)?;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// `M v` in floating point; entries too large for f64 overflow to
    /// infinity, which callers must treat as out of range.
    pub fn apply_f64(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| {
                (0..self.n)
                    .map(|j| biguint_to_f64(self.get(i, j)) * v[j])
                    .sum()
            })
            .collect()
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| biguint_to_f64(self.get(i, j))).collect())
            .collect()
    }
}

pub fn biguint_to_f64(u: &BigUint) -> f64 {
    let s = u.to_string();
    s.parse::<f64>().unwrap_or(f64::INFINITY)
}

/// Boolean support of a cocycle matrix: enough to decide positivity of long
/// products without big-integer growth.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SupportMatrix {
    n: usize,
    data: Vec<bool>,
}

impl SupportMatrix {
    pub fn identity(n: usize) -> SupportMatrix {
        let mut data = vec![false; n * n];
        for i in 0..n {
            data[i * n + i] = true;
        }
        SupportMatrix { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.n + col]
    }

    /// Support analogue of [`IntMatrix::add_row_into`].
    pub fn or_row_into(&mut self, src: usize, dst: usize) {
        let n = self.n;
        for j in 0..n {
            if self.data[src * n + j] {
                self.data[dst * n + j] = true;
            }
        }
    }

    pub fn is_full(&self) -> bool {
        self.data.iter().all(|&b| b)
    }
}
