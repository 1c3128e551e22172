//! Dense complex linear algebra for small multi-qubit operators.
//!
//! Everything here is sized for desk scale (dimensions up to 16): dense
//! row-major storage, explicit tolerances, and a cyclic Jacobi
//! eigendecomposition for Hermitian matrices. All types are immutable
//! values after construction and all operations are pure.

use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};
use thiserror::Error;

/// Default absolute tolerance for numerical comparisons.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Tolerance enforced on `M = M†` when constructing a [`HermitianOperator`].
pub const HERMITICITY_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("entry count {got} does not match {rows}x{cols}")]
    BadEntryCount { got: usize, rows: usize, cols: usize },
    #[error("matrix is not Hermitian: max |M - M†| entry = {deviation:.3e}")]
    NotHermitian { deviation: f64 },
    #[error("subsystem shape {shape:?} has product {product}, expected dimension {dim}")]
    ShapeMismatch {
        shape: Vec<usize>,
        product: usize,
        dim: usize,
    },
    #[error("subsystem index {index} out of range for {count} subsystems")]
    BadSubsystem { index: usize, count: usize },
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self, LinalgError> {
        if data.len() != rows * cols {
            return Err(LinalgError::BadEntryCount {
                got: data.len(),
                rows,
                cols,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from amplitudes.
    pub fn column(amps: &[Complex64]) -> Self {
        Self {
            rows: amps.len(),
            cols: 1,
            data: amps.to_vec(),
        }
    }

    /// Rank-one operator |u⟩⟨v|.
    pub fn outer(u: &[Complex64], v: &[Complex64]) -> Self {
        Self::from_fn(u.len(), v.len(), |i, j| u[i] * v[j].conj())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    pub fn conjugate(&self) -> Self {
        Self::from_fn(self.rows, self.cols, |i, j| self.get(i, j).conj())
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        debug_assert_eq!(self.rows, self.cols);
        (0..self.rows).map(|i| self.get(i, i)).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Entrywise equality within an explicit absolute tolerance.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        (self.rows, self.cols) == (other.rows, other.cols) && self.max_abs_diff(other) <= tol
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    fn mul_ref(&self, rhs: &Self) -> Self {
        assert_eq!(
            self.cols, rhs.rows,
            "matrix product dimension mismatch {}x{} * {}x{}",
            self.rows, self.cols, rhs.rows, rhs.cols
        );
        let mut out = Self::zeros(self.rows, rhs.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..rhs.cols {
                    let v = out.get(i, j) + a * rhs.get(k, j);
                    out.set(i, j, v);
                }
            }
        }
        out
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.mul_ref(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(rhs.data.iter())
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

/// Pauli σ_x.
pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
        ],
    )
    .unwrap()
}

/// Pauli σ_y.
pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, 0.0),
        ],
    )
    .unwrap()
}

/// Pauli σ_z.
pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::new(
        2,
        2,
        vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(-1.0, 0.0),
        ],
    )
    .unwrap()
}

/// A square complex matrix known to satisfy `M = M†` within
/// [`HERMITICITY_TOL`], checked at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    m: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(m: ComplexMatrix) -> Result<Self, LinalgError> {
        Self::with_tolerance(m, HERMITICITY_TOL)
    }

    pub fn with_tolerance(m: ComplexMatrix, tol: f64) -> Result<Self, LinalgError> {
        let deviation = m.hermiticity_deviation();
        if deviation > tol {
            return Err(LinalgError::NotHermitian { deviation });
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.rows()
    }

    /// Trace; real for Hermitian input.
    pub fn trace(&self) -> f64 {
        self.m.trace().re
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            m: self.m.scale(Complex64::new(s, 0.0)),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        Self {
            m: &self.m + &other.m,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self {
            m: &self.m - &other.m,
        }
    }

    /// Hilbert-Schmidt inner product `Tr[A B]`; real for Hermitian A, B.
    pub fn hs_inner(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        let n = self.dim();
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                acc += self.m.get(i, j) * other.m.get(j, i);
            }
        }
        acc.re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigenvalues_hermitian(self)[0]
    }
}

/// Ordered list of local dimensions factoring an operator's dimension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubsystemShape(Vec<usize>);

impl SubsystemShape {
    pub fn new(dims: Vec<usize>) -> Self {
        Self(dims)
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total_dim(&self) -> usize {
        self.0.iter().product()
    }

    fn check(&self, dim: usize) -> Result<(), LinalgError> {
        let product = self.total_dim();
        if product != dim {
            return Err(LinalgError::ShapeMismatch {
                shape: self.0.clone(),
                product,
                dim,
            });
        }
        Ok(())
    }

    /// Strides of each subsystem index in the flattened basis ordering
    /// (first subsystem most significant).
    fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1usize; self.0.len()];
        for i in (0..self.0.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * self.0[i + 1];
        }
        strides
    }
}

/// Kronecker product with `a`'s indices most significant.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(a.rows() * b.rows(), a.cols() * b.cols());
    for ia in 0..a.rows() {
        for ja in 0..a.cols() {
            let av = a.get(ia, ja);
            if av.norm_sqr() == 0.0 {
                continue;
            }
            for ib in 0..b.rows() {
                for jb in 0..b.cols() {
                    out.set(ia * b.rows() + ib, ja * b.cols() + jb, av * b.get(ib, jb));
                }
            }
        }
    }
    out
}

/// Kronecker product of a list of factors, left to right.
pub fn tensor_all(factors: &[&ComplexMatrix]) -> ComplexMatrix {
    assert!(!factors.is_empty());
    let mut out = factors[0].clone();
    for f in &factors[1..] {
        out = tensor(&out, f);
    }
    out
}

fn unflatten(mut flat: usize, strides: &[usize], dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0usize; dims.len()];
    for (k, &s) in strides.iter().enumerate() {
        idx[k] = flat / s;
        flat %= s;
    }
    idx
}

/// Trace out every subsystem not listed in `keep`; kept subsystems stay in
/// their original order. The total trace is preserved.
pub fn partial_trace(
    op: &HermitianOperator,
    shape: &SubsystemShape,
    keep: &[usize],
) -> Result<HermitianOperator, LinalgError> {
    shape.check(op.dim())?;
    for &k in keep {
        if k >= shape.len() {
            return Err(LinalgError::BadSubsystem {
                index: k,
                count: shape.len(),
            });
        }
    }
    let dims = shape.dims();
    let strides = shape.strides();
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let kept_dim: usize = keep.iter().map(|&k| dims[k]).product();
    let traced_dim: usize = traced.iter().map(|&t| dims[t]).product();

    let mut out = ComplexMatrix::zeros(kept_dim, kept_dim);
    // Enumerate kept row/col multi-indices and sum over equal traced indices.
    for r in 0..kept_dim {
        let r_idx = split_index(r, keep, dims);
        for c in 0..kept_dim {
            let c_idx = split_index(c, keep, dims);
            let mut acc = Complex64::new(0.0, 0.0);
            for t in 0..traced_dim {
                let t_idx = split_index(t, &traced, dims);
                let mut row = 0usize;
                let mut col = 0usize;
                for (pos, &k) in keep.iter().enumerate() {
                    row += r_idx[pos] * strides[k];
                    col += c_idx[pos] * strides[k];
                }
                for (pos, &tk) in traced.iter().enumerate() {
                    row += t_idx[pos] * strides[tk];
                    col += t_idx[pos] * strides[tk];
                }
                acc += op.matrix().get(row, col);
            }
            out.set(r, c, acc);
        }
    }
    HermitianOperator::with_tolerance(out, 1e-9)
}

fn split_index(mut flat: usize, subsystems: &[usize], dims: &[usize]) -> Vec<usize> {
    let mut idx = vec![0usize; subsystems.len()];
    for pos in (0..subsystems.len()).rev() {
        let d = dims[subsystems[pos]];
        idx[pos] = flat % d;
        flat /= d;
    }
    idx
}

/// Transpose the listed subsystems; an involution that preserves
/// Hermiticity and trace exactly.
pub fn partial_transpose(
    op: &HermitianOperator,
    shape: &SubsystemShape,
    transposed: &[usize],
) -> Result<HermitianOperator, LinalgError> {
    shape.check(op.dim())?;
    for &k in transposed {
        if k >= shape.len() {
            return Err(LinalgError::BadSubsystem {
                index: k,
                count: shape.len(),
            });
        }
    }
    let dims = shape.dims();
    let strides = shape.strides();
    let n = op.dim();
    let mut out = ComplexMatrix::zeros(n, n);
    for row in 0..n {
        let ri = unflatten(row, &strides, dims);
        for col in 0..n {
            let ci = unflatten(col, &strides, dims);
            let mut r2 = 0usize;
            let mut c2 = 0usize;
            for k in 0..dims.len() {
                if transposed.contains(&k) {
                    r2 += ci[k] * strides[k];
                    c2 += ri[k] * strides[k];
                } else {
                    r2 += ri[k] * strides[k];
                    c2 += ci[k] * strides[k];
                }
            }
            out.set(r2, c2, op.matrix().get(row, col));
        }
    }
    HermitianOperator::with_tolerance(out, HERMITICITY_TOL)
        .map_err(|_| LinalgError::DimensionMismatch("partial transpose broke hermiticity".into()))
}

/// Real eigenvalues of a Hermitian operator, ascending.
pub fn eigenvalues_hermitian(op: &HermitianOperator) -> Vec<f64> {
    eigen_hermitian(op).0
}

/// Full eigendecomposition `M = V diag(λ) V†` of a Hermitian operator by
/// cyclic complex Jacobi rotations. Eigenvalues ascend; `V`'s columns are
/// the matching orthonormal eigenvectors.
pub fn eigen_hermitian(op: &HermitianOperator) -> (Vec<f64>, ComplexMatrix) {
    let n = op.dim();
    let mut a = op.matrix().clone();
    let mut v = ComplexMatrix::identity(n);
    let norm = a.frobenius_norm();
    if n <= 1 || norm == 0.0 {
        let vals = (0..n).map(|i| a.get(i, i).re).collect();
        return (vals, v);
    }
    let target = norm * 1e-15;
    for _sweep in 0..64 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j).norm_sqr();
            }
        }
        if (2.0 * off).sqrt() <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                let mag = apq.norm();
                if mag <= norm * 1e-18 {
                    continue;
                }
                let app = a.get(p, p).re;
                let aqq = a.get(q, q).re;
                // Phase factor makes the pivot real, then a real Jacobi
                // rotation annihilates it.
                let phase = apq / mag;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // u = [[c, s*phase],[-s*conj(phase)... see apply below
                let u00 = Complex64::new(c, 0.0);
                let u01 = phase * s;
                let u10 = -phase.conj() * s;
                let u11 = Complex64::new(c, 0.0);
                // A <- U† A U on rows/cols p,q
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, akp * u00 + akq * u10);
                    a.set(k, q, akp * u01 + akq * u11);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, u00.conj() * apk + u10.conj() * aqk);
                    a.set(q, k, u01.conj() * apk + u11.conj() * aqk);
                }
                // Clean the pivot pair to keep hermiticity exact.
                let apq_clean = (a.get(p, q) + a.get(q, p).conj()) * 0.5;
                a.set(p, q, apq_clean);
                a.set(q, p, apq_clean.conj());
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, vkp * u00 + vkq * u10);
                    v.set(k, q, vkp * u01 + vkq * u11);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| a.get(i, i).re).collect();
    order.sort_by(|&i, &j| vals[i].partial_cmp(&vals[j]).unwrap());
    let sorted_vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
    let sorted_v = ComplexMatrix::from_fn(n, n, |i, j| v.get(i, order[j]));
    (sorted_vals, sorted_v)
}
