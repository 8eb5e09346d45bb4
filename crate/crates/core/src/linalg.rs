//! Small dense kernels: vector helpers and an LU factorisation with
//! partial pivoting for the stacked stage systems.

use crate::error::{Error, Result};
use crate::scalar::Real;

pub fn dot<T: Real>(x: &[T], y: &[T]) -> T {
    x.iter().zip(y).map(|(&a, &b)| a * b).sum()
}

pub fn norm2<T: Real>(x: &[T]) -> T {
    dot(x, x).sqrt()
}

pub fn norm_inf<T: Real>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

pub fn sub<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&a, &b)| a - b).collect()
}

pub fn add<T: Real>(x: &[T], y: &[T]) -> Vec<T> {
    x.iter().zip(y).map(|(&a, &b)| a + b).collect()
}

pub fn scale<T: Real>(alpha: T, x: &[T]) -> Vec<T> {
    x.iter().map(|&v| alpha * v).collect()
}

/// `y += alpha * x`
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * xi;
    }
}

/// Row-major dense matrix-vector product.
pub fn matvec<T: Real>(a: &[T], n_rows: usize, x: &[T]) -> Vec<T> {
    let n_cols = x.len();
    (0..n_rows).map(|i| dot(&a[i * n_cols..(i + 1) * n_cols], x)).collect()
}

/// LU factors of a square matrix, `P A = L U`, stored row-major in place.
#[derive(Clone, Debug)]
pub struct Lu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> Lu<T> {
    pub fn factor(mut a: Vec<T>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension {
                expected: n * n,
                got: a.len(),
                context: "lu factor",
            });
        }
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            // first index of the largest pivot, so ties resolve deterministically
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::Singular);
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let pivot = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / pivot;
                a[i * n + k] = l;
                if l != T::zero() {
                    for j in k + 1..n {
                        a[i * n + j] = a[i * n + j] - l * a[k * n + j];
                    }
                }
            }
        }
        Ok(Self { n, lu: a, piv })
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut acc = x[i];
            for j in 0..i {
                acc = acc - self.lu[i * n + j] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for j in i + 1..n {
                acc = acc - self.lu[i * n + j] * x[j];
            }
            x[i] = acc / self.lu[i * n + i];
        }
        x
    }
}

/// Solves `A x = b` for a single right-hand side.
pub fn solve<T: Real>(a: Vec<T>, n: usize, b: &[T]) -> Result<Vec<T>> {
    Ok(Lu::factor(a, n)?.solve(b))
}

/// Inverse of a small square matrix (row-major).
pub fn inverse<T: Real>(a: &[T], n: usize) -> Result<Vec<T>> {
    let lu = Lu::factor(a.to_vec(), n)?;
    let mut inv = vec![T::zero(); n * n];
    for j in 0..n {
        let mut e = vec![T::zero(); n];
        e[j] = T::one();
        let col = lu.solve(&e);
        for i in 0..n {
            inv[i * n + j] = col[i];
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_permuted_system() {
        let a: Vec<f64> = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let x_true = [1.0, -2.0, 0.5];
        let b = matvec(&a, 3, &x_true);
        let x = solve(a, 3, &b).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = vec![1.0, 2.0, 2.0, 4.0];
        assert_eq!(Lu::factor(a, 2).unwrap_err(), Error::Singular);
    }

    #[test]
    fn inverse_times_matrix_is_identity() {
        let a = vec![4.0f64, 1.0, 2.0, 3.0];
        let inv = inverse(&a, 2).unwrap();
        let prod = [
            a[0] * inv[0] + a[1] * inv[2],
            a[0] * inv[1] + a[1] * inv[3],
            a[2] * inv[0] + a[3] * inv[2],
            a[2] * inv[1] + a[3] * inv[3],
        ];
        assert!((prod[0] - 1.0).abs() < 1e-15 && prod[1].abs() < 1e-15);
        assert!(prod[2].abs() < 1e-15 && (prod[3] - 1.0).abs() < 1e-15);
    }
}
