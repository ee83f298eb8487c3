//! Compressed sparse row matrices and a left-looking sparse Cholesky factor.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Entries with magnitude at or below this are not stored.
pub const EXPLICIT_ZERO: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Assembles from (row, col, value) triplets. Duplicates are summed in
    /// input order, so identical triplet streams give bitwise identical matrices.
    pub fn from_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        for &(r, c, _) in triplets {
            if r >= rows {
                return Err(Error::dims("triplet row", rows, r));
            }
            if c >= cols {
                return Err(Error::dims("triplet column", cols, c));
            }
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&k| (triplets[k].0, triplets[k].1));

        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut k = 0;
        for r in 0..rows {
            while k < order.len() && triplets[order[k]].0 == r {
                let c = triplets[order[k]].1;
                let mut acc = 0.0;
                while k < order.len() && triplets[order[k]].0 == r && triplets[order[k]].1 == c {
                    acc += triplets[order[k]].2;
                    k += 1;
                }
                if acc.abs() > EXPLICIT_ZERO {
                    col_indices.push(c);
                    values.push(acc);
                }
            }
            row_offsets[r + 1] = col_indices.len();
        }
        Ok(SparseMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn trace(&self) -> f64 {
        self.diagonal().iter().sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::dims("sparse mat-vec", self.cols, x.len()));
        }
        let mut y = vec![0.0; self.rows];
        self.mul_vec_into(x, &mut y);
        Ok(y)
    }

    /// y = A x. Panics on dimension mismatch; callers check sizes first.
    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *out = acc;
        }
    }

    /// y = Aᵀ x.
    pub fn transpose_mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.rows);
        assert_eq!(y.len(), self.cols);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (r, &xr) in x.iter().enumerate() {
            for k in self.row_offsets[r]..self.row_offsets[r + 1] {
                y[self.col_indices[k]] += self.values[k] * xr;
            }
        }
    }

    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        let ax = self.mul_vec(x)?;
        Ok(x.iter().zip(&ax).map(|(a, b)| a * b).sum())
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    /// max |A - Aᵀ| relative to max |A|.
    pub fn symmetry_defect(&self) -> f64 {
        if self.rows != self.cols {
            return f64::INFINITY;
        }
        let mut worst: f64 = 0.0;
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                worst = worst.max((v - self.get(c, r)).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// P A Pᵀ where `perm[old] = new`.
    pub fn permute_symmetric(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.rows || self.rows != self.cols {
            return Err(Error::dims("permutation length", self.rows, perm.len()));
        }
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                triplets.push((perm[r], perm[c], v));
            }
        }
        SparseMatrix::from_triplets(self.rows, self.cols, &triplets)
    }

    /// MatrixMarket coordinate text. Symmetric matrices emit the lower triangle only.
    pub fn to_matrix_market(&self, symmetric: bool) -> String {
        let mut out = String::new();
        let kind = if symmetric { "symmetric" } else { "general" };
        let _ = writeln!(out, "%%MatrixMarket matrix coordinate real {kind}");
        let entries: Vec<(usize, usize, f64)> = (0..self.rows)
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, v)))
            .filter(|&(r, c, _)| !symmetric || c <= r)
            .collect();
        let _ = writeln!(out, "{} {} {}", self.rows, self.cols, entries.len());
        for (r, c, v) in entries {
            let _ = writeln!(out, "{} {} {:.16e}", r + 1, c + 1, v);
        }
        out
    }

    pub fn write_matrix_market(&self, path: &Path, symmetric: bool) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_matrix_market(symmetric).as_bytes())?;
        Ok(())
    }
}

/// Lower-triangular factor L with A = L Lᵀ, stored by columns.
#[derive(Debug, Clone)]
pub struct SparseCholesky {
    n: usize,
    col_offsets: Vec<usize>,
    row_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseCholesky {
    /// Left-looking factorization in natural order.
    pub fn factor(a: &SparseMatrix) -> Result<Self> {
        let n = a.rows();
        if a.cols() != n {
            return Err(Error::dims("Cholesky of non-square matrix", n, a.cols()));
        }
        let mut col_offsets = vec![0usize; n + 1];
        let mut row_indices: Vec<usize> = Vec::new();
        let mut values: Vec<f64> = Vec::new();
        // for each row i, the (column, value) pairs of L[i, k] with k < i
        let mut row_entries: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut work = vec![0.0; n];
        let mut touched = vec![false; n];
        let mut pattern: Vec<usize> = Vec::new();

        for j in 0..n {
            pattern.clear();
            // A is symmetric: column j below the diagonal equals row j right of it
            for (i, v) in a.row(j) {
                if i >= j {
                    work[i] = v;
                    if !touched[i] {
                        touched[i] = true;
                        pattern.push(i);
                    }
                }
            }
            for &(k, ljk) in &row_entries[j] {
                for p in col_offsets[k]..col_offsets[k + 1] {
                    let i = row_indices[p];
                    if i < j {
                        continue;
                    }
                    work[i] -= values[p] * ljk;
                    if !touched[i] {
                        touched[i] = true;
                        pattern.push(i);
                    }
                }
            }
            let d = work[j];
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::SingularSystem(format!(
                    "matrix is not positive definite (pivot {j} = {d:e})"
                )));
            }
            let ljj = d.sqrt();
            pattern.sort_unstable();
            for &i in &pattern {
                let v = if i == j { ljj } else { work[i] / ljj };
                if i == j || v.abs() > EXPLICIT_ZERO {
                    row_indices.push(i);
                    values.push(v);
                    if i != j {
                        row_entries[i].push((j, v));
                    }
                }
                work[i] = 0.0;
                touched[i] = false;
            }
            col_offsets[j + 1] = row_indices.len();
        }
        Ok(SparseCholesky {
            n,
            col_offsets,
            row_indices,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// y = L x
    pub fn l_mul_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            for p in self.col_offsets[j]..self.col_offsets[j + 1] {
                y[self.row_indices[p]] += self.values[p] * xj;
            }
        }
    }

    /// y = Lᵀ x
    pub fn lt_mul_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(y.len(), self.n);
        for (j, out) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for p in self.col_offsets[j]..self.col_offsets[j + 1] {
                acc += self.values[p] * x[self.row_indices[p]];
            }
            *out = acc;
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.n, self.n);
        for j in 0..self.n {
            for p in self.col_offsets[j]..self.col_offsets[j + 1] {
                d[(self.row_indices[p], j)] = self.values[p];
            }
        }
        d
    }
}
