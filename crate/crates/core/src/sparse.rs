//! Compressed-row complex sparse matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::C64;

/// Square complex sparse matrix in CSR form.
///
/// Built from coordinate triplets; duplicate coordinates are summed and
/// explicit zeros are dropped.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<C64>,
    hermitian_hint: bool,
}

impl SparseOperator {
    pub fn zeros(dim: usize) -> Self {
        SparseOperator {
            dim,
            row_ptr: vec![0; dim + 1],
            cols: Vec::new(),
            vals: Vec::new(),
            hermitian_hint: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_diagonal(&vec![C64::new(1.0, 0.0); dim])
    }

    pub fn from_diagonal(diag: &[C64]) -> Self {
        let dim = diag.len();
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for (i, &v) in diag.iter().enumerate() {
            if v != C64::new(0.0, 0.0) {
                cols.push(i);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        SparseOperator {
            dim,
            row_ptr,
            cols,
            vals,
            hermitian_hint: diag.iter().all(|v| v.im == 0.0),
        }
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let d: Vec<C64> = diag.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::from_diagonal(&d)
    }

    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets<I>(dim: usize, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, C64)>,
    {
        let mut t: Vec<(usize, usize, C64)> = triplets.into_iter().collect();
        for &(r, c, _) in &t {
            if r >= dim || c >= dim {
                return Err(Error::Domain(format!(
                    "entry ({r}, {c}) outside a {dim}x{dim} operator"
                )));
            }
        }
        t.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<C64> = Vec::with_capacity(t.len());
        let mut rows = Vec::with_capacity(t.len());
        for (r, c, v) in t {
            if let (Some(&lr), Some(&lc)) = (rows.last(), cols.last()) {
                if lr == r && lc == c {
                    *vals.last_mut().unwrap() += v;
                    continue;
                }
            }
            rows.push(r);
            cols.push(c);
            vals.push(v);
        }
        let zero = C64::new(0.0, 0.0);
        let mut kr = Vec::with_capacity(rows.len());
        let mut kc = Vec::with_capacity(rows.len());
        let mut kv = Vec::with_capacity(rows.len());
        for i in 0..rows.len() {
            if vals[i] != zero {
                kr.push(rows[i]);
                kc.push(cols[i]);
                kv.push(vals[i]);
            }
        }
        for &r in &kr {
            row_ptr[r + 1] += 1;
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseOperator {
            dim,
            row_ptr,
            cols: kc,
            vals: kv,
            hermitian_hint: false,
        })
    }

    pub fn from_dense(m: &DMatrix<C64>, drop_below: f64) -> Self {
        let dim = m.nrows();
        let mut t = Vec::new();
        for r in 0..dim {
            for c in 0..m.ncols() {
                if m[(r, c)].norm() > drop_below {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(dim, t).expect("indices in range")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn hermitian_hint(&self) -> bool {
        self.hermitian_hint
    }

    /// Mark as Hermitian after checking A = A† to `tol`.
    pub fn with_hermitian_hint(mut self, tol: f64) -> Result<Self> {
        let err = self.hermiticity_error();
        if err > tol {
            return Err(Error::Numerical(format!(
                "operator is not Hermitian: max |A - A^dag| = {err:.3e}"
            )));
        }
        self.hermitian_hint = true;
        Ok(self)
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.cols
    }

    pub fn values(&self) -> &[C64] {
        &self.vals
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.vals
    }

    /// Iterate over stored (row, col, value) entries in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, C64)> + '_ {
        (0..self.dim).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).map(move |k| (r, self.cols[k], self.vals[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.cols[lo..hi].binary_search(&c) {
            Ok(k) => self.vals[lo + k],
            Err(_) => C64::new(0.0, 0.0),
        }
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.dim).map(|i| self.get(i, i)).collect()
    }

    pub fn is_diagonal(&self) -> bool {
        self.entries().all(|(r, c, _)| r == c)
    }

    pub fn adjoint(&self) -> Self {
        let t = self.entries().map(|(r, c, v)| (c, r, v.conj()));
        let mut out = Self::from_triplets(self.dim, t).expect("indices in range");
        out.hermitian_hint = self.hermitian_hint;
        out
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut out = self.clone();
        for v in out.vals.iter_mut() {
            *v *= s;
        }
        out.hermitian_hint = self.hermitian_hint && s.im == 0.0;
        out
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, other: &Self, s: C64) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let t = self
            .entries()
            .chain(other.entries().map(|(r, c, v)| (r, c, v * s)));
        Self::from_triplets(self.dim, t).expect("indices in range")
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, C64::new(1.0, 0.0))
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add_scaled(other, C64::new(-1.0, 0.0))
    }

    /// Sparse product `self * other`.
    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        let mut t = Vec::new();
        for r in 0..self.dim {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.cols[k];
                let a = self.vals[k];
                for k2 in other.row_ptr[mid]..other.row_ptr[mid + 1] {
                    t.push((r, other.cols[k2], a * other.vals[k2]));
                }
            }
        }
        Self::from_triplets(self.dim, t).expect("indices in range")
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[C64], y: &mut [C64]) {
        debug_assert_eq!(x.len(), self.dim);
        debug_assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] = acc;
        }
    }

    /// `y += s A x`.
    pub fn apply_add(&self, s: C64, x: &[C64], y: &mut [C64]) {
        for r in 0..self.dim {
            let mut acc = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[k] * x[self.cols[k]];
            }
            y[r] += s * acc;
        }
    }

    pub fn mul_vec(&self, x: &DVector<C64>) -> DVector<C64> {
        let mut y = DVector::zeros(self.dim);
        self.apply(x.as_slice(), y.as_mut_slice());
        y
    }

    /// Dense product `A X` for a column-major dense matrix.
    pub fn mul_dense_into(&self, x: &DMatrix<C64>, y: &mut DMatrix<C64>) {
        let n = self.dim;
        assert_eq!(x.nrows(), n);
        let xs = x.as_slice();
        let ys = y.as_mut_slice();
        for j in 0..x.ncols() {
            let xc = &xs[j * n..(j + 1) * n];
            let yc = &mut ys[j * n..(j + 1) * n];
            self.apply(xc, yc);
        }
    }

    pub fn mul_dense(&self, x: &DMatrix<C64>) -> DMatrix<C64> {
        let mut y = DMatrix::zeros(self.dim, x.ncols());
        self.mul_dense_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] += v;
        }
        m
    }

    /// Dense sub-block on the given basis indices.
    pub fn block(&self, idx: &[usize]) -> DMatrix<C64> {
        let mut pos = vec![usize::MAX; self.dim];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let mut m = DMatrix::zeros(idx.len(), idx.len());
        for (k, &r) in idx.iter().enumerate() {
            for kk in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = pos[self.cols[kk]];
                if c != usize::MAX {
                    m[(k, c)] += self.vals[kk];
                }
            }
        }
        m
    }

    /// Largest |A_ij - B_ij|.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.sub(other)
            .vals
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest |A - A†| entry.
    pub fn hermiticity_error(&self) -> f64 {
        let mut err = 0.0f64;
        for (r, c, v) in self.entries() {
            err = err.max((v - self.get(c, r).conj()).norm());
        }
        err
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Expectation value ⟨ψ|A|ψ⟩.
    pub fn expect_vec(&self, psi: &[C64]) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for r in 0..self.dim {
            let mut row = C64::new(0.0, 0.0);
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row += self.vals[k] * psi[self.cols[k]];
            }
            acc += psi[r].conj() * row;
        }
        acc
    }

    /// tr(ρ A) for dense ρ.
    pub fn expect_dm(&self, rho: &DMatrix<C64>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (r, c, v) in self.entries() {
            acc += v * rho[(c, r)];
        }
        acc
    }
}
