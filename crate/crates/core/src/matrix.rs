//! Sparse (CSR) and dense (column-major) containers plus the handful of
//! vector kernels the Krylov code needs.

use crate::error::{GsvdError, Result};

/// Dense vectors are plain `Vec<f64>`; the helpers below operate on slices.
pub type Vector = Vec<f64>;

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += a * x`
pub fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn scale(a: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= a;
    }
}

pub fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Compressed sparse row matrix. Column indices are sorted and unique within
/// each row.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from `(row, col, value)` triplets (0-based). Duplicates are
    /// summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut trips: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(i, j, v) in &trips {
            if i >= nrows || j >= ncols {
                return Err(GsvdError::invalid(format!(
                    "entry ({i}, {j}) outside {nrows}x{ncols}"
                )));
            }
            if !v.is_finite() {
                return Err(GsvdError::invalid(format!("non-finite entry at ({i}, {j})")));
            }
        }
        // stable sort keeps duplicate summation order equal to input order
        trips.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(trips.len());
        let mut values: Vec<f64> = Vec::with_capacity(trips.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in trips {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(SparseMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        SparseMatrix {
            nrows,
            ncols,
            row_ptr: vec![0; nrows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, (0..n).map(|i| (i, i, 1.0))).expect("identity is valid")
    }

    pub fn from_diag(nrows: usize, ncols: usize, diag: &[f64]) -> Result<Self> {
        Self::from_triplets(
            nrows,
            ncols,
            diag.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, &v)| (i, i, v)),
        )
    }

    /// Stores every nonzero of a dense matrix.
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let mut trips = Vec::new();
        for i in 0..d.nrows() {
            for j in 0..d.ncols() {
                let v = d[(i, j)];
                if v != 0.0 {
                    trips.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d.nrows(), d.ncols(), trips).expect("dense entries are valid")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (i, self.col_idx[k], self.values[k]))
        })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(k) => self.values[self.row_ptr[i] + k],
            Err(_) => 0.0,
        }
    }

    /// `A x` (or `Aᵀ x` when `transpose`). Summation runs in row order and
    /// index order within each row, so results are bit-reproducible.
    pub fn spmv(&self, x: &[f64], transpose: bool) -> Result<Vector> {
        if transpose {
            if x.len() != self.nrows {
                return Err(GsvdError::DimensionMismatch {
                    op: "spmv (transpose)",
                    expected: self.nrows,
                    got: x.len(),
                });
            }
            let mut y = vec![0.0; self.ncols];
            for (i, &xi) in x.iter().enumerate() {
                for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                    y[self.col_idx[k]] += self.values[k] * xi;
                }
            }
            Ok(y)
        } else {
            if x.len() != self.ncols {
                return Err(GsvdError::DimensionMismatch {
                    op: "spmv",
                    expected: self.ncols,
                    got: x.len(),
                });
            }
            let y = (0..self.nrows)
                .map(|i| {
                    (self.row_ptr[i]..self.row_ptr[i + 1])
                        .map(|k| self.values[k] * x[self.col_idx[k]])
                        .sum()
                })
                .collect();
            Ok(y)
        }
    }

    /// Panicking variants of [`SparseMatrix::spmv`] for callers that already
    /// checked the shapes.
    pub fn mul(&self, x: &[f64]) -> Vector {
        self.spmv(x, false).expect("dimensions checked by caller")
    }

    pub fn tmul(&self, x: &[f64]) -> Vector {
        self.spmv(x, true).expect("dimensions checked by caller")
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }

    pub fn transpose(&self) -> SparseMatrix {
        Self::from_triplets(self.ncols, self.nrows, self.triplets().map(|(i, j, v)| (j, i, v)))
            .expect("transpose of a valid matrix is valid")
    }

    pub fn scaled(&self, a: f64) -> SparseMatrix {
        let mut out = self.clone();
        scale(a, &mut out.values);
        out
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        norm2(&self.values)
    }

    /// Raw CSR arrays, used for content hashing.
    pub fn raw_parts(&self) -> (&[usize], &[usize], &[f64]) {
        (&self.row_ptr, &self.col_idx, &self.values)
    }
}

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    nrows: usize,
    ncols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        DenseMatrix {
            nrows,
            ncols,
            data: vec![0.0; nrows * ncols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = Self::zeros(nrows, ncols);
        for j in 0..ncols {
            for i in 0..nrows {
                m.data[j * nrows + i] = f(i, j);
            }
        }
        m
    }

    /// Builds from column vectors of equal length.
    pub fn from_columns(nrows: usize, cols: &[Vector]) -> Result<Self> {
        let mut data = Vec::with_capacity(nrows * cols.len());
        for c in cols {
            if c.len() != nrows {
                return Err(GsvdError::DimensionMismatch {
                    op: "from_columns",
                    expected: nrows,
                    got: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Ok(DenseMatrix {
            nrows,
            ncols: cols.len(),
            data,
        })
    }

    /// Row-major nested lists, e.g. `[[1, 2], [3, 4]]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(GsvdError::invalid("ragged rows"));
        }
        Ok(Self::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.nrows..(j + 1) * self.nrows]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.ncols).map(move |j| self.col(j))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> Vector {
        (0..self.ncols).map(|j| self[(i, j)]).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.ncols {
            return Err(GsvdError::DimensionMismatch {
                op: "matvec",
                expected: self.ncols,
                got: x.len(),
            });
        }
        let mut y = vec![0.0; self.nrows];
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                axpy(xj, self.col(j), &mut y);
            }
        }
        Ok(y)
    }

    pub fn tr_matvec(&self, x: &[f64]) -> Result<Vector> {
        if x.len() != self.nrows {
            return Err(GsvdError::DimensionMismatch {
                op: "tr_matvec",
                expected: self.nrows,
                got: x.len(),
            });
        }
        Ok(self.columns().map(|c| dot(c, x)).collect())
    }

    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.ncols != other.nrows {
            return Err(GsvdError::DimensionMismatch {
                op: "matmul",
                expected: self.ncols,
                got: other.nrows,
            });
        }
        let mut out = DenseMatrix::zeros(self.nrows, other.ncols);
        for j in 0..other.ncols {
            let col = self.matvec(other.col(j))?;
            out.col_mut(j).copy_from_slice(&col);
        }
        Ok(out)
    }

    /// `selfᵀ other`
    pub fn tr_matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.nrows != other.nrows {
            return Err(GsvdError::DimensionMismatch {
                op: "tr_matmul",
                expected: self.nrows,
                got: other.nrows,
            });
        }
        Ok(DenseMatrix::from_fn(self.ncols, other.ncols, |i, j| {
            dot(self.col(i), other.col(j))
        }))
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.ncols, self.nrows, |i, j| self[(j, i)])
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.data)
    }

    pub fn frobenius(&self) -> f64 {
        norm2(&self.data)
    }

    pub fn sub(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.nrows != other.nrows || self.ncols != other.ncols {
            return Err(GsvdError::invalid("shape mismatch in sub"));
        }
        Ok(DenseMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Leading `ncols` columns.
    pub fn leading_columns(&self, ncols: usize) -> DenseMatrix {
        DenseMatrix {
            nrows: self.nrows,
            ncols,
            data: self.data[..ncols * self.nrows].to_vec(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &self.data[j * self.nrows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        debug_assert!(i < self.nrows && j < self.ncols);
        &mut self.data[j * self.nrows + i]
    }
}
