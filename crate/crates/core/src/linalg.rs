//! Exact linear algebra: sparse rank and nullspace over GF(p), dense
//! elimination over GF(p), and fraction-free determinants over the
//! rationals.

use std::fmt::Write as _;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use thiserror::Error;

use crate::exactnum::{ExactRational, PrimeField};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LinalgError {
    #[error("column {col} out of range for {ncols} columns")]
    ColumnOutOfRange { col: usize, ncols: usize },
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("matrix is nonsingular, kernel is trivial")]
    Nonsingular,
    #[error("bad triplet dump: {0}")]
    Dump(String),
}

/// Sparse matrix over GF(p): rows of `(col, value)` pairs, sorted by column,
/// no duplicates, no stored zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    field: PrimeField,
    ncols: usize,
    rows: Vec<Vec<(usize, u64)>>,
}

impl SparseMatrix {
    pub fn new(field: PrimeField, ncols: usize) -> Self {
        Self { field, ncols, rows: Vec::new() }
    }

    pub fn field(&self) -> PrimeField {
        self.field
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn rows(&self) -> &[Vec<(usize, u64)>] {
        &self.rows
    }

    /// Add a row given as arbitrary `(col, value)` pairs; values are reduced,
    /// duplicates summed and zeros dropped.
    pub fn push_row(&mut self, entries: impl IntoIterator<Item = (usize, u64)>) -> Result<(), LinalgError> {
        let mut row: Vec<(usize, u64)> = Vec::new();
        for (c, v) in entries {
            if c >= self.ncols {
                return Err(LinalgError::ColumnOutOfRange { col: c, ncols: self.ncols });
            }
            row.push((c, v % self.field.modulus()));
        }
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, u64)> = Vec::with_capacity(row.len());
        for (c, v) in row {
            match merged.last_mut() {
                Some(last) if last.0 == c => last.1 = self.field.add(last.1, v),
                _ => merged.push((c, v)),
            }
        }
        merged.retain(|e| e.1 != 0);
        self.rows.push(merged);
        Ok(())
    }

    pub fn push_dense_row(&mut self, row: &[u64]) -> Result<(), LinalgError> {
        if row.len() != self.ncols {
            return Err(LinalgError::Shape(format!("row of length {} for {} columns", row.len(), self.ncols)));
        }
        self.push_row(row.iter().copied().enumerate())
    }

    pub fn mul_vec(&self, x: &[u64]) -> Vec<u64> {
        let f = self.field;
        self.rows
            .iter()
            .map(|row| row.iter().fold(0, |acc, &(c, v)| f.add(acc, f.mul(v, x[c]))))
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut d = vec![0u64; self.ncols];
                for &(c, v) in row {
                    d[c] = v;
                }
                d
            })
            .collect()
    }

    /// Triplet text: a `# format 1 prime p` comment, header
    /// `nrows ncols nnz`, then one `row col value` line per stored entry
    /// (0-based indices).
    pub fn to_triplets(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# format 1 prime {}", self.field.modulus()).unwrap();
        writeln!(s, "{} {} {}", self.nrows(), self.ncols, self.nnz()).unwrap();
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                writeln!(s, "{r} {c} {v}").unwrap();
            }
        }
        s
    }

    pub fn from_triplets(field: PrimeField, text: &str) -> Result<Self, LinalgError> {
        let bad = |m: &str| LinalgError::Dump(m.to_string());
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        let header: Vec<usize> = lines
            .next()
            .ok_or_else(|| bad("missing header"))?
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad("bad header")))
            .collect::<Result<_, _>>()?;
        let [nrows, ncols, nnz] = header[..] else {
            return Err(bad("header needs three fields"));
        };
        let mut buckets: Vec<Vec<(usize, u64)>> = vec![Vec::new(); nrows];
        let mut count = 0;
        for line in lines {
            let t: Vec<u64> = line
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad("bad entry")))
                .collect::<Result<_, _>>()?;
            let [r, c, v] = t[..] else {
                return Err(bad("entry needs three fields"));
            };
            if r as usize >= nrows {
                return Err(bad("row out of range"));
            }
            buckets[r as usize].push((c as usize, v));
            count += 1;
        }
        if count != nnz {
            return Err(bad("entry count does not match header"));
        }
        let mut m = SparseMatrix::new(field, ncols);
        for b in buckets {
            m.push_row(b)?;
        }
        Ok(m)
    }
}

/// Rank and canonical nullspace basis.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NullspaceResult {
    pub rank: usize,
    /// Rows of the reduced row echelon form of the nullspace.
    pub basis: Vec<Vec<u64>>,
}

fn row_axpy(f: PrimeField, target: &[(usize, u64)], factor: u64, pivot: &[(usize, u64)]) -> Vec<(usize, u64)> {
    // target - factor * pivot
    let mut out = Vec::with_capacity(target.len() + pivot.len());
    let (mut i, mut j) = (0, 0);
    while i < target.len() || j < pivot.len() {
        let ci = target.get(i).map_or(usize::MAX, |e| e.0);
        let cj = pivot.get(j).map_or(usize::MAX, |e| e.0);
        if ci < cj {
            out.push(target[i]);
            i += 1;
        } else if cj < ci {
            out.push((cj, f.neg(f.mul(factor, pivot[j].1))));
            j += 1;
        } else {
            let v = f.sub_mul(target[i].1, factor, pivot[j].1);
            if v != 0 {
                out.push((ci, v));
            }
            i += 1;
            j += 1;
        }
    }
    out
}

/// Rank and nullspace by sparse elimination with Markowitz pivoting.
///
/// Pivot choice minimises `(row_len - 1) * (col_count - 1)`, ties broken by
/// lowest row index, then lowest column index. The returned basis is put
/// in reduced row echelon form, so it does not depend on the pivot order.
pub fn rank_nullspace(m: &SparseMatrix) -> NullspaceResult {
    let f = m.field;
    let ncols = m.ncols;
    let mut active: Vec<Option<Vec<(usize, u64)>>> =
        m.rows.iter().map(|r| if r.is_empty() { None } else { Some(r.clone()) }).collect();
    let mut col_count = vec![0usize; ncols];
    for row in active.iter().flatten() {
        for &(c, _) in row {
            col_count[c] += 1;
        }
    }
    let mut pivots: Vec<(usize, Vec<(usize, u64)>)> = Vec::new();
    loop {
        let mut best: Option<(usize, usize, usize)> = None; // (cost, row, col)
        for (ri, row) in active.iter().enumerate() {
            let Some(row) = row else { continue };
            let rl = row.len() - 1;
            if let Some((cost, _, _)) = best {
                // every candidate in this row costs at least rl * 0
                if cost == 0 && rl > 0 {
                    continue;
                }
            }
            for &(c, _) in row {
                let cost = rl * (col_count[c] - 1);
                if best.is_none_or(|(bc, br, bcol)| (cost, ri, c) < (bc, br, bcol)) {
                    best = Some((cost, ri, c));
                }
            }
        }
        let Some((_, pr, pc)) = best else { break };
        let prow = active[pr].take().unwrap();
        for &(c, _) in &prow {
            col_count[c] -= 1;
        }
        let pval = prow.iter().find(|e| e.0 == pc).unwrap().1;
        let pinv = f.inv(pval).expect("nonzero pivot");
        let prow: Vec<(usize, u64)> = prow.iter().map(|&(c, v)| (c, f.mul(v, pinv))).collect();
        for slot in active.iter_mut() {
            let Some(row) = slot else { continue };
            let Ok(pos) = row.binary_search_by_key(&pc, |e| e.0) else { continue };
            let factor = row[pos].1;
            for &(c, _) in row.iter() {
                col_count[c] -= 1;
            }
            let new = row_axpy(f, row, factor, &prow);
            for &(c, _) in &new {
                col_count[c] += 1;
            }
            *slot = if new.is_empty() { None } else { Some(new) };
        }
        pivots.push((pc, prow));
    }
    let rank = pivots.len();
    // back substitution: pivot row k is zero on the pivot columns of rows < k
    let mut is_pivot = vec![false; ncols];
    for (c, _) in &pivots {
        is_pivot[*c] = true;
    }
    let mut basis = Vec::new();
    for free in (0..ncols).filter(|&c| !is_pivot[c]) {
        let mut x = vec![0u64; ncols];
        x[free] = 1;
        for (pc, row) in pivots.iter().rev() {
            let s = row.iter().filter(|e| e.0 != *pc).fold(0, |acc, &(c, v)| f.add(acc, f.mul(v, x[c])));
            x[*pc] = f.neg(s);
        }
        basis.push(x);
    }
    let basis = rref(f, basis).0;
    NullspaceResult { rank, basis }
}

/// Reduced row echelon form of dense rows; returns the nonzero rows and
/// their pivot columns.
pub fn rref(f: PrimeField, mut rows: Vec<Vec<u64>>) -> (Vec<Vec<u64>>, Vec<usize>) {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| rows[i][c] != 0) else { continue };
        rows.swap(r, p);
        let inv = f.inv(rows[r][c]).unwrap();
        for v in rows[r].iter_mut() {
            *v = f.mul(*v, inv);
        }
        let prow = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c] == 0 {
                continue;
            }
            let factor = row[c];
            f.axpy_neg(&mut row[c..], factor, &prow[c..]);
        }
        pivots.push(c);
        r += 1;
    }
    rows.truncate(r);
    (rows, pivots)
}

/// Incrementally built row echelon basis over GF(p).
///
/// Each stored row is normalised to 1 at its pivot and reduced against
/// all earlier pivots, so `insert` costs one pass over the stored rows.
#[derive(Clone, Debug)]
pub struct EchelonBasis {
    field: PrimeField,
    ncols: usize,
    rows: Vec<Vec<u64>>,
    pivots: Vec<usize>,
}

impl EchelonBasis {
    pub fn new(field: PrimeField, ncols: usize) -> Self {
        Self { field, ncols, rows: Vec::new(), pivots: Vec::new() }
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Reduce `v` against the stored rows in place.
    pub fn reduce(&self, v: &mut [u64]) {
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            let factor = v[p];
            if factor != 0 {
                self.field.axpy_neg(&mut v[p..], factor, &row[p..]);
            }
        }
    }

    /// Insert several rows; same result as inserting them one by one, but
    /// each stored row is read once for the whole batch. Returns the number
    /// of rows that raised the rank.
    pub fn insert_batch(&mut self, mut batch: Vec<Vec<u64>>) -> usize {
        let f = self.field;
        for (row, &p) in self.rows.iter().zip(&self.pivots) {
            for v in batch.iter_mut() {
                let factor = v[p];
                if factor != 0 {
                    f.axpy_neg(&mut v[p..], factor, &row[p..]);
                }
            }
        }
        let start = self.rows.len();
        for mut v in batch {
            for i in start..self.rows.len() {
                let p = self.pivots[i];
                let factor = v[p];
                if factor != 0 {
                    f.axpy_neg(&mut v[p..], factor, &self.rows[i][p..]);
                }
            }
            if let Some(p) = v.iter().position(|&x| x != 0) {
                let inv = f.inv(v[p]).unwrap();
                for x in v[p..].iter_mut() {
                    *x = f.mul(*x, inv);
                }
                self.rows.push(v);
                self.pivots.push(p);
            }
        }
        self.rows.len() - start
    }

    /// A (non-canonical) nullspace basis by back substitution on the
    /// echelon rows; `O(rank * ncols)` per vector.
    pub fn null_vectors(&self) -> Vec<Vec<u64>> {
        let f = self.field;
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(self.pivots[i]));
        let mut is_pivot = vec![false; self.ncols];
        for &p in &self.pivots {
            is_pivot[p] = true;
        }
        (0..self.ncols)
            .filter(|&c| !is_pivot[c])
            .map(|free| {
                let mut x = vec![0u64; self.ncols];
                x[free] = 1;
                for &i in &order {
                    let p = self.pivots[i];
                    x[p] = f.neg(f.dot(&self.rows[i][p + 1..], &x[p + 1..]));
                }
                x
            })
            .collect()
    }

    /// Returns true if `v` was independent of the stored rows.
    pub fn insert(&mut self, mut v: Vec<u64>) -> bool {
        debug_assert_eq!(v.len(), self.ncols);
        self.reduce(&mut v);
        let Some(p) = v.iter().position(|&x| x != 0) else {
            return false;
        };
        let inv = self.field.inv(v[p]).unwrap();
        for x in v[p..].iter_mut() {
            *x = self.field.mul(*x, inv);
        }
        self.rows.push(v);
        self.pivots.push(p);
        true
    }

    pub fn contains(&self, v: &[u64]) -> bool {
        let mut w = v.to_vec();
        self.reduce(&mut w);
        w.iter().all(|&x| x == 0)
    }

    /// Fully reduced rows sorted by pivot.
    pub fn into_rref(self) -> (Vec<Vec<u64>>, Vec<usize>) {
        rref(self.field, self.rows)
    }

    /// Canonical nullspace (RREF rows) of the span of the stored rows.
    pub fn nullspace(&self) -> Vec<Vec<u64>> {
        rref(self.field, self.null_vectors()).0
    }
}

/// Nullspace of a matrix already in RREF, returned in RREF.
pub fn nullspace_from_rref(f: PrimeField, ncols: usize, rows: &[Vec<u64>], pivots: &[usize]) -> Vec<Vec<u64>> {
    let mut is_pivot = vec![false; ncols];
    for &p in pivots {
        is_pivot[p] = true;
    }
    let basis: Vec<Vec<u64>> = (0..ncols)
        .filter(|&c| !is_pivot[c])
        .map(|free| {
            let mut x = vec![0u64; ncols];
            x[free] = 1;
            for (row, &p) in rows.iter().zip(pivots) {
                x[p] = f.neg(row[free]);
            }
            x
        })
        .collect();
    rref(f, basis).0
}

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseMatrix<E> {
    nrows: usize,
    ncols: usize,
    data: Vec<E>,
}

impl<E: Clone> DenseMatrix<E> {
    pub fn from_rows(rows: Vec<Vec<E>>) -> Result<Self, LinalgError> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(LinalgError::Shape("ragged rows".into()));
        }
        Ok(Self { nrows, ncols, data: rows.into_iter().flatten().collect() })
    }

    pub fn filled(nrows: usize, ncols: usize, e: E) -> Self {
        Self { nrows, ncols, data: vec![e; nrows * ncols] }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn get(&self, i: usize, j: usize) -> &E {
        &self.data[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, e: E) {
        self.data[i * self.ncols + j] = e;
    }

    pub fn row(&self, i: usize) -> &[E] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn to_rows(&self) -> Vec<Vec<E>> {
        (0..self.nrows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn map<F: Clone>(&self, f: impl Fn(&E) -> F) -> DenseMatrix<F> {
        DenseMatrix { nrows: self.nrows, ncols: self.ncols, data: self.data.iter().map(f).collect() }
    }
}

fn check_square<E>(m: &DenseMatrix<E>) -> Result<(), LinalgError> {
    if m.nrows != m.ncols {
        return Err(LinalgError::Shape(format!("{}x{} is not square", m.nrows, m.ncols)));
    }
    Ok(())
}

/// Determinant over GF(p) by Gaussian elimination.
pub fn det_mod(m: &DenseMatrix<u64>, f: PrimeField) -> Result<u64, LinalgError> {
    check_square(m)?;
    let n = m.nrows;
    let mut a = m.to_rows();
    let mut det = 1u64;
    for c in 0..n {
        let Some(p) = (c..n).find(|&i| a[i][c] != 0) else { return Ok(0) };
        if p != c {
            a.swap(p, c);
            det = f.neg(det);
        }
        det = f.mul(det, a[c][c]);
        let inv = f.inv(a[c][c]).unwrap();
        let (top, bottom) = a.split_at_mut(c + 1);
        let prow = &top[c];
        for row in bottom.iter_mut() {
            if row[c] == 0 {
                continue;
            }
            let factor = f.mul(row[c], inv);
            f.axpy_neg(&mut row[c..], factor, &prow[c..]);
        }
    }
    Ok(det)
}

/// Rank over GF(p).
pub fn rank_mod(m: &DenseMatrix<u64>, f: PrimeField) -> usize {
    rref(f, m.to_rows()).1.len()
}

/// Fraction-free (Bareiss) determinant of an integer matrix.
pub fn bareiss_det(m: &DenseMatrix<BigInt>) -> Result<BigInt, LinalgError> {
    check_square(m)?;
    let n = m.nrows;
    if n == 0 {
        return Ok(BigInt::one());
    }
    let mut a = m.to_rows();
    let mut sign = BigInt::one();
    let mut prev = BigInt::one();
    for k in 0..n - 1 {
        if a[k][k].is_zero() {
            let Some(p) = (k + 1..n).find(|&i| !a[i][k].is_zero()) else {
                return Ok(BigInt::zero());
            };
            a.swap(k, p);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let t = &a[i][j] * &a[k][k] - &a[i][k] * &a[k][j];
                a[i][j] = t / &prev;
            }
        }
        prev = a[k][k].clone();
    }
    Ok(sign * &a[n - 1][n - 1])
}

/// Exact determinant over the rationals: each row is cleared of
/// denominators, Bareiss runs on the integer matrix, and the cleared
/// factor is divided back out.
pub fn det_exact(m: &DenseMatrix<ExactRational>) -> Result<ExactRational, LinalgError> {
    check_square(m)?;
    let mut scale = BigInt::one();
    let mut rows = Vec::with_capacity(m.nrows);
    for i in 0..m.nrows {
        let row = m.row(i);
        let l = row.iter().fold(BigInt::one(), |acc, q| acc.lcm(q.denom()));
        rows.push(row.iter().map(|q| q.numer() * (&l / q.denom())).collect());
        scale *= l;
    }
    let d = bareiss_det(&DenseMatrix::from_rows(rows)?)?;
    Ok(ExactRational::new(d, scale))
}

/// Kernel of a rational matrix as RREF rows (exact Gauss-Jordan).
pub fn rational_kernel(m: &DenseMatrix<ExactRational>) -> Vec<Vec<ExactRational>> {
    let ncols = m.ncols;
    let mut a = m.to_rows();
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == a.len() {
            break;
        }
        let Some(p) = (r..a.len()).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        let inv = a[r][c].recip();
        for x in a[r].iter_mut() {
            *x = &*x * &inv;
        }
        let prow = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (x, y) in row[c..].iter_mut().zip(&prow[c..]) {
                if !y.is_zero() {
                    *x = &*x - &factor * y;
                }
            }
        }
        pivots.push(c);
        r += 1;
    }
    let mut is_pivot = vec![false; ncols];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let basis: Vec<Vec<ExactRational>> = (0..ncols)
        .filter(|&c| !is_pivot[c])
        .map(|free| {
            let mut x = vec![ExactRational::zero(); ncols];
            x[free] = ExactRational::one();
            for (row, &p) in a.iter().zip(&pivots) {
                x[p] = -row[free].clone();
            }
            x
        })
        .collect();
    rational_rref(basis)
}

fn rational_rref(mut rows: Vec<Vec<ExactRational>>) -> Vec<Vec<ExactRational>> {
    let ncols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..ncols {
        if r == rows.len() {
            break;
        }
        let Some(p) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else { continue };
        rows.swap(r, p);
        let inv = rows[r][c].recip();
        for x in rows[r].iter_mut() {
            *x = &*x * &inv;
        }
        let prow = rows[r].clone();
        for (i, row) in rows.iter_mut().enumerate() {
            if i != r && !row[c].is_zero() {
                let factor = row[c].clone();
                for (x, y) in row.iter_mut().zip(&prow) {
                    *x = &*x - &factor * y;
                }
            }
        }
        r += 1;
    }
    rows.truncate(r);
    rows
}

/// Exact integer cofactor-expansion determinant; only for tiny test matrices.
pub fn det_leibniz(m: &DenseMatrix<BigInt>) -> BigInt {
    fn rec(a: &[Vec<BigInt>], cols: &mut Vec<usize>, row: usize) -> BigInt {
        if row == a.len() {
            return BigInt::one();
        }
        let mut acc = BigInt::zero();
        for idx in 0..cols.len() {
            let c = cols.remove(idx);
            let term = &a[row][c] * rec(a, cols, row + 1);
            if idx % 2 == 0 {
                acc += term;
            } else {
                acc -= term;
            }
            cols.insert(idx, c);
        }
        acc
    }
    let a = m.to_rows();
    rec(&a, &mut (0..m.ncols).collect(), 0)
}

/// `|x|` bit length, for diagnostics.
pub fn bits(x: &BigInt) -> u64 {
    x.abs().bits()
}
