//! Largest-singular-value estimation for spectral normalization.

use crate::error::{invalid, shape_err, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

fn mat_vec<T: Real>(a: &[T], rows: usize, cols: usize, v: &[T]) -> Vec<T> {
    (0..rows)
        .map(|r| a[r * cols..(r + 1) * cols].iter().zip(v).map(|(&x, &y)| x * y).sum())
        .collect()
}

fn mat_t_vec<T: Real>(a: &[T], rows: usize, cols: usize, u: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for r in 0..rows {
        let ur = u[r];
        for (o, &x) in out.iter_mut().zip(&a[r * cols..(r + 1) * cols]) {
            *o += x * ur;
        }
    }
    out
}

fn norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn matrix_dims<T: Real>(matrix: &Tensor<T>) -> Result<(usize, usize)> {
    match matrix.shape()[..] {
        [m, n] => Ok((m, n)),
        _ => Err(shape_err!("expected an M×N matrix, got shape {:?}", matrix.shape())),
    }
}

/// Runs `iters` rounds of power iteration from `start` (length N) and returns
/// the sigma estimate `‖A v‖` together with the final right vector.
pub fn power_iteration_from<T: Real>(matrix: &Tensor<T>, start: &[T], iters: usize) -> Result<(T, Vec<T>)> {
    let (m, n) = matrix_dims(matrix)?;
    if iters == 0 {
        return Err(invalid!("power iteration needs at least one iteration"));
    }
    if start.len() != n {
        return Err(shape_err!("start vector has {} entries, matrix has {n} columns", start.len()));
    }
    let a = matrix.data();
    let mut v = start.to_vec();
    let nv = norm(&v);
    if nv == T::zero() {
        return Err(invalid!("power iteration start vector is zero"));
    }
    v.iter_mut().for_each(|x| *x /= nv);

    for _ in 0..iters {
        let mut u = mat_vec(a, m, n, &v);
        let nu = norm(&u);
        if nu == T::zero() {
            return Ok((T::zero(), v));
        }
        u.iter_mut().for_each(|x| *x /= nu);
        let mut next = mat_t_vec(a, m, n, &u);
        let nn = norm(&next);
        if nn == T::zero() {
            return Ok((T::zero(), v));
        }
        next.iter_mut().for_each(|x| *x /= nn);
        v = next;
    }
    Ok((norm(&mat_vec(a, m, n, &v)), v))
}

/// Largest singular value estimate from the all-ones start vector. A zero matrix yields 0.
pub fn power_iteration_sigma<T: Real>(matrix: &Tensor<T>, iters: usize) -> Result<T> {
    let (_, n) = matrix_dims(matrix)?;
    power_iteration_from(matrix, &vec![T::one(); n], iters).map(|(s, _)| s)
}

/// Power iteration that keeps its right vector between calls, so that a
/// slowly changing weight needs only one iteration per forward pass.
#[derive(Clone, Debug)]
pub struct SpectralNorm<T> {
    vector: Vec<T>,
    iters: usize,
}

impl<T: Real> SpectralNorm<T> {
    pub fn new(columns: usize, iters: usize) -> Self {
        SpectralNorm {
            vector: vec![T::one(); columns],
            iters: iters.max(1),
        }
    }

    pub fn estimate(&mut self, matrix: &Tensor<T>) -> Result<T> {
        let (sigma, v) = power_iteration_from(matrix, &self.vector, self.iters)?;
        if sigma > T::zero() {
            self.vector = v;
        }
        Ok(sigma)
    }
}
