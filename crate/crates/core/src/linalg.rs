//! Sparse matrices and a pivoting direct solver.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Once;

use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Conj, Mat, Par};

use crate::error::{Error, Result};

/// Coordinate-format accumulator. Duplicate entries are summed in
/// insertion order, so assembly is reproducible bit for bit.
#[derive(Debug, Clone, Default)]
pub struct SparseBuilder {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseBuilder {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    pub fn push(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.nrows && col < self.ncols);
        self.entries.push((row, col, value));
    }

    pub fn build(mut self) -> CsrMatrix {
        // Stable sort keeps insertion order among duplicates.
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; self.nrows + 1];
        let mut col_idx = Vec::with_capacity(self.entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(self.entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.entries {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..self.nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        CsrMatrix {
            nrows: self.nrows,
            ncols: self.ncols,
            row_ptr,
            col_idx,
            values,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(pos) => self.values[r.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut b = SparseBuilder::new(self.ncols, self.nrows);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                b.push(j, i, v);
            }
        }
        b.build()
    }

    /// Exact entrywise symmetry.
    pub fn is_symmetric(&self) -> bool {
        self.nrows == self.ncols && *self == self.transpose()
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.mul_vec(x).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Block matrix `[[a, b^T], [b, 0]]`.
    pub fn saddle(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(a.nrows, a.ncols);
        assert_eq!(b.ncols, a.ncols);
        let n = a.nrows + b.nrows;
        let mut out = SparseBuilder::new(n, n);
        for i in 0..a.nrows {
            for (j, v) in a.row(i) {
                out.push(i, j, v);
            }
        }
        for i in 0..b.nrows {
            for (j, v) in b.row(i) {
                out.push(a.nrows + i, j, v);
                out.push(j, a.nrows + i, v);
            }
        }
        out.build()
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, f64>> {
        let triplets: Vec<Triplet<usize, usize, f64>> = (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &triplets).map_err(|e| Error::Factorization {
            what: "matrix conversion".into(),
            rows: self.nrows,
            detail: format!("{e:?}"),
        })
    }

    /// Matrix Market coordinate format, all entries, 1-based.
    pub fn to_matrix_market(&self) -> String {
        let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
        let _ = writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz());
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                let _ = writeln!(out, "{} {} {:.17e}", i + 1, j + 1, v);
            }
        }
        out
    }

    pub fn write_matrix_market(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_matrix_market())?;
        Ok(())
    }
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(v.len() * 26);
    for x in v {
        let _ = writeln!(out, "{x:.17e}");
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

static SEQUENTIAL: Once = Once::new();

/// Sparse LU with partial pivoting. Factorization and solves run on a
/// single thread so results do not depend on the worker count.
pub struct SparseLu {
    matrix: CsrMatrix,
    lu: Lu<usize, f64>,
    what: String,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SparseLu")
            .field("what", &self.what)
            .field("rows", &self.matrix.nrows)
            .field("nnz", &self.matrix.nnz())
            .finish()
    }
}

impl SparseLu {
    pub fn new(matrix: CsrMatrix, what: impl Into<String>) -> Result<Self> {
        SEQUENTIAL.call_once(|| faer::set_global_parallelism(Par::Seq));
        let what = what.into();
        let fail = |detail: String| Error::Factorization {
            what: what.clone(),
            rows: matrix.nrows,
            detail,
        };
        if matrix.nrows != matrix.ncols {
            return Err(fail("matrix is not square".into()));
        }
        if let Some(empty) = (0..matrix.nrows).find(|&i| matrix.row(i).all(|(_, v)| v == 0.0)) {
            return Err(fail(format!("row {empty} is identically zero")));
        }
        let lu = matrix.to_faer()?.sp_lu().map_err(|e| fail(format!("{e:?}")))?;
        let out = Self { matrix, lu, what };
        // Singular pivots surface as non-finite solutions.
        let probe = out.raw_solve(&vec![1.0; out.matrix.nrows]);
        if probe.iter().any(|v| !v.is_finite()) {
            return Err(Error::Factorization {
                what: out.what,
                rows: out.matrix.nrows,
                detail: "matrix is numerically singular".into(),
            });
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    fn raw_solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut b = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
        self.lu.solve_in_place_with_conj(Conj::No, b.as_mut());
        (0..rhs.len()).map(|i| b[(i, 0)]).collect()
    }

    /// Solves `A x = b` with up to three steps of iterative refinement.
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let mut x = self.raw_solve(rhs);
        let bn = norm2(rhs);
        for _ in 0..3 {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if norm2(&r) <= 1e-14 * bn.max(f64::MIN_POSITIVE) {
                break;
            }
            let dx = self.raw_solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        x
    }

    /// `||A x - b|| / ||b||`, or `||A x||` when `b = 0`.
    pub fn relative_residual(&self, x: &[f64], rhs: &[f64]) -> f64 {
        let ax = self.matrix.mul_vec(x);
        let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let bn = norm2(rhs);
        if bn > 0.0 {
            norm2(&r) / bn
        } else {
            norm2(&r)
        }
    }

    /// Solve and reject results whose relative residual exceeds `limit`.
    pub fn solve_checked(&self, rhs: &[f64], limit: f64) -> Result<Vec<f64>> {
        let x = self.solve(rhs);
        let res = self.relative_residual(&x, rhs);
        if res.is_nan() || res > limit {
            return Err(Error::Residual {
                what: self.what.clone(),
                residual: res,
                limit,
            });
        }
        Ok(x)
    }
}
