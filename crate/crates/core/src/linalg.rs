//! Dense vectors, two-block points and row-major linear operators.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::Rng;

/// Unchecked slice kernels. Callers guarantee equal lengths.
pub mod ops {
    #[inline]
    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[inline]
    pub fn norm_sq(a: &[f64]) -> f64 {
        a.iter().map(|x| x * x).sum()
    }

    #[inline]
    pub fn norm(a: &[f64]) -> f64 {
        norm_sq(a).sqrt()
    }

    pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x - y).collect()
    }

    pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), b.len());
        a.iter().zip(b).map(|(x, y)| x + y).collect()
    }

    pub fn scale(alpha: f64, a: &[f64]) -> Vec<f64> {
        a.iter().map(|x| alpha * x).collect()
    }

    /// y += alpha * x
    pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), y.len());
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += alpha * xi;
        }
    }

    pub fn dist(a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }

    pub fn norm_inf(a: &[f64]) -> f64 {
        a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// A finite-dimensional real vector. Never empty, never holds NaN or ±∞.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::param("vector", "dimension must be positive"));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector entries"));
        }
        Ok(Vector(entries))
    }

    pub fn from_slice(entries: &[f64]) -> Result<Self> {
        Self::new(entries.to_vec())
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "vector dimension must be positive");
        Vector(vec![0.0; dim])
    }

    pub fn filled(dim: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; dim])
    }

    /// Wraps kernel output, re-checking finiteness.
    pub(crate) fn from_kernel(entries: Vec<f64>, context: &'static str) -> Result<Self> {
        debug_assert!(!entries.is_empty());
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(context));
        }
        Ok(Vector(entries))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.0.iter()
    }

    pub fn norm(&self) -> f64 {
        ops::norm(&self.0)
    }

    pub fn norm_sq(&self) -> f64 {
        ops::norm_sq(&self.0)
    }

    pub fn dot(&self, other: &Vector) -> Result<f64> {
        check_dim("dot", self.dim(), other.dim())?;
        Ok(ops::dot(&self.0, &other.0))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_dim("add", self.dim(), other.dim())?;
        Self::from_kernel(ops::add(&self.0, &other.0), "add")
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_dim("sub", self.dim(), other.dim())?;
        Self::from_kernel(ops::sub(&self.0, &other.0), "sub")
    }

    pub fn scale(&self, alpha: f64) -> Result<Vector> {
        Self::from_kernel(ops::scale(alpha, &self.0), "scale")
    }

    pub fn dist(&self, other: &Vector) -> Result<f64> {
        check_dim("dist", self.dim(), other.dim())?;
        Ok(ops::dist(&self.0, &other.0))
    }
}

impl std::ops::Index<usize> for Vector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vector::new(v)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// A point z = (x, y) of the product space, carrying the ℓ2 product norm.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct BlockPair {
    pub x: Vector,
    pub y: Vector,
}

impl BlockPair {
    pub fn new(x: Vector, y: Vector) -> Self {
        BlockPair { x, y }
    }

    pub fn zeros(n: usize, m: usize) -> Self {
        BlockPair::new(Vector::zeros(n), Vector::zeros(m))
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.x.dim(), self.y.dim())
    }

    /// sqrt(‖x‖² + ‖y‖²)
    pub fn block_norm(&self) -> f64 {
        (self.x.norm_sq() + self.y.norm_sq()).sqrt()
    }

    fn check_same(&self, other: &BlockPair, context: &'static str) -> Result<()> {
        check_dim(context, self.x.dim(), other.x.dim())?;
        check_dim(context, self.y.dim(), other.y.dim())
    }

    pub fn add(&self, other: &BlockPair) -> Result<BlockPair> {
        self.check_same(other, "block add")?;
        Ok(BlockPair::new(self.x.add(&other.x)?, self.y.add(&other.y)?))
    }

    pub fn sub(&self, other: &BlockPair) -> Result<BlockPair> {
        self.check_same(other, "block sub")?;
        Ok(BlockPair::new(self.x.sub(&other.x)?, self.y.sub(&other.y)?))
    }

    pub fn scale(&self, alpha: f64) -> Result<BlockPair> {
        Ok(BlockPair::new(self.x.scale(alpha)?, self.y.scale(alpha)?))
    }

    /// ‖self − other‖ in the product norm, without allocating.
    pub fn dist(&self, other: &BlockPair) -> Result<f64> {
        self.check_same(other, "block dist")?;
        let dx = self.x.as_slice().iter().zip(other.x.as_slice());
        let dy = self.y.as_slice().iter().zip(other.y.as_slice());
        Ok(dx
            .chain(dy)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    /// x entries followed by y entries.
    pub fn concat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.x.dim() + self.y.dim());
        out.extend_from_slice(self.x.as_slice());
        out.extend_from_slice(self.y.as_slice());
        out
    }

    pub fn split(entries: &[f64], n: usize) -> Result<BlockPair> {
        if n == 0 || n >= entries.len() {
            return Err(Error::param("split", "both blocks must be non-empty"));
        }
        Ok(BlockPair::new(
            Vector::from_slice(&entries[..n])?,
            Vector::from_slice(&entries[n..])?,
        ))
    }
}

/// Dense row-major matrix acting as a linear operator R^cols → R^rows.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct LinOp {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl LinOp {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::param("matrix", "rows and cols must be positive"));
        }
        check_dim("matrix data", rows * cols, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(LinOp { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            check_dim("matrix row", cols, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), cols, data)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::diag(&vec![1.0; n])
    }

    pub fn diag(d: &[f64]) -> Result<Self> {
        let n = d.len();
        let mut data = vec![0.0; n * n];
        for (i, v) in d.iter().enumerate() {
            data[i * n + i] = *v;
        }
        Self::new(n, n, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.rows, self.cols, ops::scale(alpha, &self.data))
    }

    pub fn transpose(&self) -> Self {
        let mut data = vec![0.0; self.data.len()];
        for i in 0..self.rows {
            for j in 0..self.cols {
                data[j * self.rows + i] = self.get(i, j);
            }
        }
        LinOp {
            rows: self.cols,
            cols: self.rows,
            data,
        }
    }

    /// A v for a raw slice; length must equal `cols`.
    pub fn apply_slice(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| ops::dot(self.row(i), v)).collect()
    }

    /// Aᵀ w for a raw slice; length must equal `rows`.
    pub fn adjoint_apply_slice(&self, w: &[f64]) -> Vec<f64> {
        debug_assert_eq!(w.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (i, wi) in w.iter().enumerate() {
            if *wi != 0.0 {
                ops::axpy(*wi, self.row(i), &mut out);
            }
        }
        out
    }

    pub fn apply(&self, v: &Vector) -> Result<Vector> {
        check_dim("apply", self.cols, v.dim())?;
        Vector::from_kernel(self.apply_slice(v.as_slice()), "apply")
    }

    pub fn adjoint_apply(&self, w: &Vector) -> Result<Vector> {
        check_dim("adjoint_apply", self.rows, w.dim())?;
        Vector::from_kernel(self.adjoint_apply_slice(w.as_slice()), "adjoint_apply")
    }

    /// Aᵀ A as a `cols × cols` operator.
    pub fn gram(&self) -> LinOp {
        let n = self.cols;
        let mut data = vec![0.0; n * n];
        for r in 0..self.rows {
            let row = self.row(r);
            for i in 0..n {
                if row[i] == 0.0 {
                    continue;
                }
                for j in i..n {
                    data[i * n + j] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                data[i * n + j] = data[j * n + i];
            }
        }
        LinOp {
            rows: n,
            cols: n,
            data,
        }
    }

    /// Entrywise sum of two operators of equal shape.
    pub fn add(&self, other: &LinOp) -> Result<LinOp> {
        check_dim("matrix add rows", self.rows, other.rows)?;
        check_dim("matrix add cols", self.cols, other.cols)?;
        Self::new(self.rows, self.cols, ops::add(&self.data, &other.data))
    }

    /// [A B]
    pub fn hstack(a: &LinOp, b: &LinOp) -> Result<LinOp> {
        check_dim("hstack", a.rows, b.rows)?;
        let cols = a.cols + b.cols;
        let mut data = Vec::with_capacity(a.rows * cols);
        for i in 0..a.rows {
            data.extend_from_slice(a.row(i));
            data.extend_from_slice(b.row(i));
        }
        Self::new(a.rows, cols, data)
    }

    /// [A; B]
    pub fn vstack(a: &LinOp, b: &LinOp) -> Result<LinOp> {
        check_dim("vstack", a.cols, b.cols)?;
        let mut data = a.data.clone();
        data.extend_from_slice(&b.data);
        Self::new(a.rows + b.rows, a.cols, data)
    }

    /// Columns listed in `idx`, in order.
    pub fn select_columns(&self, idx: &[usize]) -> Result<LinOp> {
        let mut data = Vec::with_capacity(self.rows * idx.len());
        for i in 0..self.rows {
            for &j in idx {
                data.push(self.get(i, j));
            }
        }
        Self::new(self.rows, idx.len(), data)
    }

    pub fn frobenius_norm(&self) -> f64 {
        ops::norm(&self.data)
    }

    /// Power-iteration estimate of the largest singular value.
    ///
    /// The returned value is the running maximum of ‖A v_k‖ over the power
    /// iterates, so it is nondecreasing in `iters` for a fixed rng state and
    /// never exceeds the Frobenius norm. The zero operator yields 0.
    pub fn op_norm_estimate(&self, iters: usize, rng: &mut Rng) -> Result<f64> {
        if iters == 0 {
            return Err(Error::param("iters", "must be at least 1"));
        }
        let mut v = rng.unit_vector(self.cols);
        let mut best = 0.0_f64;
        for _ in 0..iters {
            let av = self.apply_slice(&v);
            let s = ops::norm(&av);
            best = best.max(s);
            if s == 0.0 {
                break;
            }
            let w = self.adjoint_apply_slice(&av);
            let wn = ops::norm(&w);
            if wn == 0.0 {
                break;
            }
            v = ops::scale(1.0 / wn, &w);
        }
        // final iterate has not been measured yet
        best = best.max(ops::norm(&self.apply_slice(&v)));
        Ok(best.min(self.frobenius_norm()))
    }

    /// Singular values in decreasing order (one-sided Jacobi).
    pub fn singular_values(&self) -> Vec<f64> {
        // Work on the orientation with fewer columns.
        let work = if self.cols > self.rows {
            self.transpose()
        } else {
            self.clone()
        };
        let (m, n) = (work.rows, work.cols);
        // column-major copy for cheap column rotations
        let mut cols: Vec<Vec<f64>> = (0..n)
            .map(|j| (0..m).map(|i| work.get(i, j)).collect())
            .collect();
        for _sweep in 0..60 {
            let mut off = 0.0_f64;
            for p in 0..n {
                for q in (p + 1)..n {
                    let alpha = ops::norm_sq(&cols[p]);
                    let beta = ops::norm_sq(&cols[q]);
                    let gamma = ops::dot(&cols[p], &cols[q]);
                    if gamma == 0.0 {
                        continue;
                    }
                    let scale = (alpha * beta).sqrt();
                    if scale == 0.0 {
                        continue;
                    }
                    off = off.max(gamma.abs() / scale);
                    if gamma.abs() <= 1e-15 * scale {
                        continue;
                    }
                    let zeta = (beta - alpha) / (2.0 * gamma);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let t = if zeta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (1.0 + t * t).sqrt();
                    let s = c * t;
                    let (left, right) = cols.split_at_mut(q);
                    let cp = &mut left[p];
                    let cq = &mut right[0];
                    for i in 0..m {
                        let a = cp[i];
                        let b = cq[i];
                        cp[i] = c * a - s * b;
                        cq[i] = s * a + c * b;
                    }
                }
            }
            if off <= 1e-15 {
                break;
            }
        }
        let mut sv: Vec<f64> = cols.iter().map(|c| ops::norm(c)).collect();
        sv.sort_by(|a, b| b.total_cmp(a));
        sv
    }

    /// Smallest singular value over min(rows, cols) values.
    pub fn min_singular_value(&self) -> f64 {
        self.singular_values().last().copied().unwrap_or(0.0)
    }

    /// If AᵀA = αI (entrywise to `rel_tol · α`), returns α.
    pub fn scaled_identity_gram(&self, rel_tol: f64) -> Option<f64> {
        let g = self.gram();
        let n = g.cols;
        let alpha = g.get(0, 0);
        if alpha <= 0.0 {
            return None;
        }
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { alpha } else { 0.0 };
                if (g.get(i, j) - target).abs() > rel_tol * alpha {
                    return None;
                }
            }
        }
        Some(alpha)
    }
}

/// Cholesky factor L of a symmetric positive definite matrix, A = L Lᵀ.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    /// Fails when a pivot drops below `1e-13 · max diagonal`.
    pub fn factor(a: &LinOp) -> Result<Self> {
        check_dim("cholesky", a.rows, a.cols)?;
        let n = a.rows;
        let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let floor = 1e-13 * max_diag.max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a.get(j, j);
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > floor) {
                return Err(Error::Unsupported(format!(
                    "matrix is not positive definite (pivot {d:.3e} at {j})"
                )));
            }
            let d = d.sqrt();
            l[j * n + j] = d;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        debug_assert_eq!(b.len(), n);
        let mut z = b.to_vec();
        for i in 0..n {
            let s = z[i] - (0..i).map(|k| self.l[i * n + k] * z[k]).sum::<f64>();
            z[i] = s / self.l[i * n + i];
        }
        for i in (0..n).rev() {
            let s = z[i] - ((i + 1)..n).map(|k| self.l[k * n + i] * z[k]).sum::<f64>();
            z[i] = s / self.l[i * n + i];
        }
        z
    }
}

/// Eigenvalues of a symmetric matrix in increasing order (cyclic Jacobi).
pub fn symmetric_eigenvalues(a: &LinOp) -> Result<Vec<f64>> {
    check_dim("symmetric_eigenvalues", a.rows, a.cols)?;
    let n = a.rows;
    let mut m = a.data.clone();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j] * m[i * n + j])
            .sum();
        let total: f64 = ops::norm_sq(&m);
        if off <= 1e-30 * total.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = m[k * n + p];
                    let akq = m[k * n + q];
                    m[k * n + p] = c * akp - s * akq;
                    m[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[p * n + k];
                    let aqk = m[q * n + k];
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| m[i * n + i]).collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}
