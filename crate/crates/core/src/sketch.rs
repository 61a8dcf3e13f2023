//! Measurement matrices with orthonormal rows and the column statistics the
//! lower-bound argument depends on.

use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::stats::{dot, NeumaierSum};

/// Tolerance for the row orthonormality invariant.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Dense `m x n` matrix with orthonormal rows, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SketchMatrix {
    /// Wraps row-major data after checking shape and orthonormality.
    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || rows > cols {
            return Err(Error::InvalidShape { m: rows, n: cols });
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                expected: rows * cols,
                got: data.len(),
            });
        }
        let a = Self { rows, cols, data };
        let defect = a.orthonormality_defect();
        if defect.is_nan() || defect > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { defect });
        }
        Ok(a)
    }

    /// Rows `e_{r}` for each `r` in `basis`.
    pub fn from_basis_rows(basis: &[usize], cols: usize) -> Result<Self> {
        let mut data = vec![0.0; basis.len() * cols];
        for (r, &b) in basis.iter().enumerate() {
            if b >= cols {
                return Err(Error::InvalidShape {
                    m: basis.len(),
                    n: cols,
                });
            }
            data[r * cols + b] = 1.0;
        }
        Self::from_row_major(basis.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    /// Column `A_c` as an owned `m`-vector.
    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// `|A_i|_2^2` for every column.
    pub fn column_sq_norms(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for (o, x) in out.iter_mut().zip(self.row(r)) {
                *o += x * x;
            }
        }
        out
    }

    /// Columns `indices` packed contiguously (`indices.len()` vectors of length m).
    pub fn gather_columns(&self, indices: &[usize]) -> Vec<f64> {
        let m = self.rows;
        let mut out = vec![0.0; indices.len() * m];
        for r in 0..m {
            let row = self.row(r);
            for (k, &c) in indices.iter().enumerate() {
                out[k * m + r] = row[c];
            }
        }
        out
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: x.len(),
            });
        }
        Ok((0..self.rows).map(|r| dot(self.row(r), x)).collect())
    }

    /// `A^T z`.
    pub fn apply_transpose(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.rows {
            return Err(Error::DimensionMismatch {
                expected: self.rows,
                got: z.len(),
            });
        }
        let mut out = vec![0.0; self.cols];
        for (r, &zr) in z.iter().enumerate() {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += zr * a;
            }
        }
        Ok(out)
    }

    /// `max_{r,s} |<row_r, row_s> - delta_rs|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let per_row = par::map_range(self.rows, |r| {
            let a = self.row(r);
            (r..self.rows)
                .map(|s| {
                    let target = if r == s { 1.0 } else { 0.0 };
                    (dot(a, self.row(s)) - target).abs()
                })
                .fold(0.0, f64::max)
        });
        per_row.into_iter().fold(0.0, f64::max)
    }

    /// Plain-text dump: `m n` then one line of `n` floats per row.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{} {}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let line: Vec<String> = self.row(r).iter().map(|x| format!("{x:.16e}")).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("missing header".into()))??;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse()
                    .map_err(|_| Error::Parse(format!("bad header `{header}`")))
            })
            .collect::<Result<_>>()?;
        let [m, n] = dims[..] else {
            return Err(Error::Parse(format!("bad header `{header}`")));
        };
        let mut data = Vec::with_capacity(m * n);
        for row in 0..m {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing row {row}")))??;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad float `{tok}`")))?,
                );
            }
            if data.len() - before != n {
                return Err(Error::Parse(format!(
                    "row {row} has {} entries",
                    data.len() - before
                )));
            }
        }
        Self::from_row_major(m, n, data)
    }
}

/// Row-orthonormalization of an `m x n` standard Gaussian matrix.
///
/// The Gaussian draw comes from stream `(seed, "sketch", 0)` in row-major
/// order. Its transpose is factored as `QR` with Householder reflectors and
/// `A = Q^T`, with signs chosen so that `diag(R) >= 0`.
pub fn make_orthonormal_sketch(m: usize, n: usize, seed: u64) -> Result<SketchMatrix> {
    if m == 0 || m > n {
        return Err(Error::InvalidShape { m, n });
    }
    let mut rng = rng::stream(seed, "sketch", 0);
    // Row r of the draw is column r of the n x m matrix being factored.
    let mut g: Vec<f64> = (0..m * n).map(|_| rng.sample(StandardNormal)).collect();
    let mut taus = vec![0.0; m];
    let mut rdiag = vec![0.0; m];

    for k in 0..m {
        let (head, tail) = g.split_at_mut((k + 1) * n);
        let col = &mut head[k * n..];
        let (tau, beta) = householder_in_place(&mut col[k..]);
        taus[k] = tau;
        rdiag[k] = beta;
        if tau != 0.0 {
            let v = &col[k..];
            par::for_each_chunk_mut(tail, n, |_, c| reflect(tau, v, &mut c[k..]));
        }
    }

    // Thin Q by backward accumulation onto the first m unit vectors.
    let mut q = vec![0.0; m * n];
    for j in 0..m {
        q[j * n + j] = 1.0;
    }
    for k in (0..m).rev() {
        let tau = taus[k];
        if tau == 0.0 {
            continue;
        }
        let v = &g[k * n + k..(k + 1) * n];
        par::for_each_chunk_mut(&mut q[k * n..], n, |_, c| reflect(tau, v, &mut c[k..]));
    }
    for k in 0..m {
        if rdiag[k] < 0.0 {
            q[k * n..(k + 1) * n].iter_mut().for_each(|x| *x = -*x);
        }
    }
    Ok(SketchMatrix {
        rows: m,
        cols: n,
        data: q,
    })
}

/// Turns `x` into the reflector `v` (with implicit `v[0] = 1`) such that
/// `(I - tau v v^T) x = beta e_1`. Returns `(tau, beta)`.
fn householder_in_place(x: &mut [f64]) -> (f64, f64) {
    let x0 = x[0];
    let tail_sq: f64 = x[1..].iter().map(|t| t * t).sum();
    if tail_sq == 0.0 {
        x[0] = 1.0;
        return (0.0, x0);
    }
    let alpha = (x0 * x0 + tail_sq).sqrt();
    let beta = if x0 >= 0.0 { -alpha } else { alpha };
    let tau = (beta - x0) / beta;
    let scale = 1.0 / (x0 - beta);
    x[1..].iter_mut().for_each(|t| *t *= scale);
    x[0] = 1.0;
    (tau, beta)
}

/// `c <- (I - tau v v^T) c` where `v[0]` is treated as 1.
#[inline]
fn reflect(tau: f64, v: &[f64], c: &mut [f64]) {
    let s = c[0] + dot(&v[1..], &c[1..]);
    let f = tau * s;
    c[0] -= f;
    for (ci, vi) in c[1..].iter_mut().zip(&v[1..]) {
        *ci -= f * vi;
    }
}

/// `sum_{i,j} <A_i, A_j>^2`, evaluated as the Frobenius norm of the `m x m`
/// row Gram matrix (`|A^T A|_F = |A A^T|_F` for any A).
pub fn gram_frobenius_total(a: &SketchMatrix) -> f64 {
    let m = a.rows();
    let rows = par::map_range(m, |r| {
        let mut acc = NeumaierSum::default();
        let ar = a.row(r);
        for s in r..m {
            let g = dot(ar, a.row(s));
            acc.add(if s == r { g * g } else { 2.0 * g * g });
        }
        acc.total()
    });
    let mut total = NeumaierSum::default();
    rows.into_iter().for_each(|x| total.add(x));
    total.total()
}

/// Columns with `|A_i|_2 <= 10 sqrt(m/n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnSet {
    indices: Vec<usize>,
    threshold: f64,
    n: usize,
}

impl ColumnSet {
    /// Every column of an `n`-column matrix; used for the unrestricted spike.
    pub fn all(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            threshold: f64::INFINITY,
            n,
        }
    }

    /// Sorted, zero-based column indices.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total_columns(&self) -> usize {
        self.n
    }

    pub fn complement_len(&self) -> usize {
        self.n - self.indices.len()
    }

    pub fn complement(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.complement_len());
        let mut it = self.indices.iter().peekable();
        for c in 0..self.n {
            if it.peek() == Some(&&c) {
                it.next();
            } else {
                out.push(c);
            }
        }
        out
    }
}

pub fn small_column_threshold(m: usize, n: usize) -> f64 {
    10.0 * (m as f64 / n as f64).sqrt()
}

pub fn small_column_set(a: &SketchMatrix) -> Result<ColumnSet> {
    let threshold = small_column_threshold(a.rows(), a.cols());
    let indices: Vec<usize> = a
        .column_sq_norms()
        .iter()
        .enumerate()
        .filter(|(_, &s)| s.sqrt() <= threshold)
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(Error::EmptyColumnSet);
    }
    Ok(ColumnSet {
        indices,
        threshold,
        n: a.cols(),
    })
}

/// Dense symmetric matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// `<A_i, A_j>` for `i, j` in the set, in set order. Materializes `|S|^2`
/// entries; the Lemma-1 pass streams instead.
pub fn column_gram(a: &SketchMatrix, set: &ColumnSet) -> SymmetricMatrix {
    let k = set.len();
    let m = a.rows();
    let cols = a.gather_columns(set.indices());
    let rows = par::map_range(k, |i| {
        let ci = &cols[i * m..(i + 1) * m];
        (0..k)
            .map(|j| dot(ci, &cols[j * m..(j + 1) * m]))
            .collect::<Vec<_>>()
    });
    SymmetricMatrix {
        dim: k,
        data: rows.concat(),
    }
}
