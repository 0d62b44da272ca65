//! Dense symmetric matrices and a self-contained symmetric eigensolver.
//!
//! The eigensolver reduces the matrix to tridiagonal form with Householder
//! reflections and then runs implicit-shift QL on the tridiagonal form
//! (the EISPACK `tred2`/`tql2` pair). If a single eigenvalue needs more
//! than the iteration cap, the eigenvalues are recomputed by Sturm-sequence
//! bisection on the same tridiagonal form.

use crate::error::{Error, Result};

/// Dense square symmetric matrix, row-major, both triangles stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Builds from the upper triangle of `f(i, j)` (i ≤ j), mirrored.
    pub fn from_upper_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        SymmetricMatrix { n, data }
    }

    /// Checks symmetry to within `tol` and then mirrors the upper triangle.
    pub fn from_rows(rows: &[Vec<f64>], tol: f64) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::Empty("matrix"));
        }
        for r in rows {
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    actual: r.len(),
                });
            }
        }
        for i in 0..n {
            for j in 0..i {
                if (rows[i][j] - rows[j][i]).abs() > tol {
                    return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self::from_upper_fn(n, |i, j| rows[i][j]))
    }

    /// Takes ownership of row-major data whose triangles are already mirrored.
    pub(crate) fn from_mirrored(n: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), n * n);
        SymmetricMatrix { n, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_upper_fn(n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn filled(n: usize, value: f64) -> Self {
        Self::from_upper_fn(n, |_, _| value)
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n, "vector length must match the matrix order");
        (0..self.n).map(|i| dot(self.row(i), v)).collect()
    }

    /// `⟨u, M v⟩`.
    pub fn quadratic_form(&self, u: &[f64], v: &[f64]) -> f64 {
        dot(u, &self.mul_vec(v))
    }

    /// `self + shift·I`.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n {
            out.data[i * self.n + i] += shift;
        }
        out
    }

    /// `self + c·|v⟩⟨v|`.
    pub fn add_rank_one(&self, c: f64, v: &[f64]) -> Self {
        assert_eq!(v.len(), self.n);
        let mut out = self.clone();
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[i * self.n + j] += c * v[i] * v[j];
            }
        }
        out
    }

    /// `a·self` entrywise.
    pub fn scaled(&self, a: f64) -> Self {
        SymmetricMatrix {
            n: self.n,
            data: self.data.iter().map(|x| a * x).collect(),
        }
    }

    /// FNV-1a hash of the bit patterns, used to identify a matrix in diagnostics.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for x in &self.data {
            for b in x.to_bits().to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Solves `self · x = b` by Cholesky factorisation. Fails if the matrix is
    /// not numerically positive definite.
    pub fn cholesky_solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: b.len(),
            });
        }
        // lower factor, row-major
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let s = self.get(i, j) - dot(&l[i * n..i * n + j], &l[j * n..j * n + j]);
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::Numerical(format!("matrix not positive definite at pivot {i}")));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in 0..n {
            y[i] = (b[i] - dot(&l[i * n..i * n + i], &y[..i])) / l[i * n + i];
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in i + 1..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        Ok(x)
    }
}

/// Dot product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Tuning knobs for [`symmetric_eigen`].
#[derive(Clone, Copy, Debug)]
pub struct EigenOptions {
    /// Accumulate eigenvectors.
    pub vectors: bool,
    /// QL sweeps allowed per eigenvalue before falling back to bisection.
    pub ql_iteration_cap: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        EigenOptions {
            vectors: false,
            ql_iteration_cap: 64,
        }
    }
}

/// Eigenvalues in ascending order, with eigenvectors as columns when requested.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `j` (entries `vectors[i * n + j]`) is the eigenvector of `values[j]`.
    pub vectors: Option<Vec<f64>>,
    /// True if the QL iteration hit its cap and bisection produced the values.
    pub used_bisection: bool,
}

impl SymmetricEigen {
    pub fn vector(&self, j: usize) -> Option<Vec<f64>> {
        let n = self.values.len();
        self.vectors.as_ref().map(|v| (0..n).map(|i| v[i * n + j]).collect())
    }
}

/// Full eigendecomposition of a symmetric matrix.
pub fn symmetric_eigen(matrix: &SymmetricMatrix, opts: EigenOptions) -> Result<SymmetricEigen> {
    let n = matrix.order();
    if n == 0 {
        return Err(Error::Empty("matrix"));
    }
    let no_convergence = |detail: String| Error::NoConvergence {
        order: n,
        fingerprint: matrix.fingerprint(),
        detail,
    };
    if matrix.as_slice().iter().any(|x| !x.is_finite()) {
        return Err(no_convergence("matrix has non-finite entries".into()));
    }

    let mut w = matrix.as_slice().to_vec();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tridiagonalize(n, &mut w, &mut d, &mut e, opts.vectors);

    let diag = d.clone();
    // off[i] couples i and i+1
    let off: Vec<f64> = e[1..].to_vec();

    let mut z = if opts.vectors { Some(w) } else { None };
    match ql_implicit(n, &mut d, &mut e, z.as_deref_mut(), opts.ql_iteration_cap) {
        Ok(()) => {
            let (values, vectors) = sort_pairs(n, d, z);
            Ok(SymmetricEigen {
                values,
                vectors,
                used_bisection: false,
            })
        }
        Err(l) => {
            if opts.vectors {
                return Err(no_convergence(format!(
                    "QL exceeded {} sweeps at index {l}",
                    opts.ql_iteration_cap
                )));
            }
            let values = tridiagonal_bisection(&diag, &off);
            if values.iter().any(|v| !v.is_finite()) {
                return Err(no_convergence("bisection produced non-finite values".into()));
            }
            Ok(SymmetricEigen {
                values,
                vectors: None,
                used_bisection: true,
            })
        }
    }
}

/// Householder reduction. On entry `w` holds the matrix; on exit `d` is the
/// diagonal, `e[1..]` the sub-diagonal, and `w` the accumulated transform
/// (row-major, columns are basis vectors) when `accumulate` is set.
///
/// The matrix is addressed transposed (`w[j*n + k]` stands for element
/// `(k, j)`) so that the inner loops walk contiguous memory.
fn tridiagonalize(n: usize, w: &mut [f64], d: &mut [f64], e: &mut [f64], accumulate: bool) {
    // at(k, j) = w[j * n + k]
    macro_rules! at {
        ($k:expr, $j:expr) => {
            w[($j) * n + ($k)]
        };
    }
    for j in 0..n {
        d[j] = at!(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut h = 0.0;
        let scale: f64 = d[..i].iter().map(|x| x.abs()).sum();
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = at!(i - 1, j);
                at!(i, j) = 0.0;
                at!(j, i) = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            e[..i].fill(0.0);
            for j in 0..i {
                f = d[j];
                at!(j, i) = f;
                g = e[j] + at!(j, j) * f;
                let col = &w[j * n..j * n + i];
                for k in j + 1..i {
                    g += col[k] * d[k];
                    e[k] += col[k] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                let (fj, gj) = (d[j], e[j]);
                let col = &mut w[j * n..j * n + i];
                for k in j..i {
                    col[k] -= fj * e[k] + gj * d[k];
                }
                d[j] = at!(i - 1, j);
                at!(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    if accumulate {
        for i in 0..n - 1 {
            at!(n - 1, i) = at!(i, i);
            at!(i, i) = 1.0;
            let h = d[i + 1];
            if h != 0.0 {
                for k in 0..=i {
                    d[k] = at!(k, i + 1) / h;
                }
                for j in 0..=i {
                    let mut g = 0.0;
                    for k in 0..=i {
                        g += at!(k, i + 1) * at!(k, j);
                    }
                    for k in 0..=i {
                        at!(k, j) -= g * d[k];
                    }
                }
            }
            for k in 0..=i {
                at!(k, i + 1) = 0.0;
            }
        }
        for j in 0..n {
            d[j] = at!(n - 1, j);
            at!(n - 1, j) = 0.0;
        }
        at!(n - 1, n - 1) = 1.0;
        // back to row-major: element (k, j) currently sits at w[j*n + k]
        for r in 0..n {
            for c in r + 1..n {
                w.swap(r * n + c, c * n + r);
            }
        }
    } else {
        // the diagonal lives in d[j] only after the final sweep
        for j in 0..n {
            d[j] = at!(j, j);
        }
    }
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal `(d, e[1..])`. Rotations are applied
/// to the columns of `z` when present. Returns the offending index if some
/// eigenvalue needs more than `cap` sweeps.
fn ql_implicit(
    n: usize,
    d: &mut [f64],
    e: &mut [f64],
    mut z: Option<&mut [f64]>,
    cap: usize,
) -> std::result::Result<(), usize> {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > cap {
                    return Err(l);
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        for k in 0..n {
                            let row = &mut z[k * n..(k + 1) * n];
                            let hk = row[i + 1];
                            row[i + 1] = s * row[i] + c * hk;
                            row[i] = c * row[i] - s * hk;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn sort_pairs(n: usize, d: Vec<f64>, z: Option<Vec<f64>>) -> (Vec<f64>, Option<Vec<f64>>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = z.map(|z| {
        let mut out = vec![0.0; n * n];
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                out[k * n + new] = z[k * n + old];
            }
        }
        out
    });
    (values, vectors)
}

/// Number of eigenvalues of the tridiagonal `(diag, off)` strictly below `x`.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = 1.0;
    for i in 0..diag.len() {
        let b2 = if i == 0 { 0.0 } else { off[i - 1] * off[i - 1] };
        q = diag[i] - x - if i == 0 { 0.0 } else { b2 / q };
        if q == 0.0 {
            q = -f64::MIN_POSITIVE.sqrt() * (1.0 + x.abs());
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// All eigenvalues of a symmetric tridiagonal matrix by Sturm bisection,
/// ascending. `off[i]` couples rows `i` and `i + 1`.
pub fn tridiagonal_bisection(diag: &[f64], off: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..n {
        let r = if i > 0 { off[i - 1].abs() } else { 0.0 } + if i + 1 < n { off[i].abs() } else { 0.0 };
        lo = lo.min(diag[i] - r);
        hi = hi.max(diag[i] + r);
    }
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    lo -= 1e-12 * width;
    hi += 1e-12 * width;
    let tol = 4.0 * f64::EPSILON * lo.abs().max(hi.abs());
    (0..n)
        .map(|k| {
            // smallest x with count(x) > k
            let (mut a, mut b) = (lo, hi);
            for _ in 0..200 {
                if b - a <= tol {
                    break;
                }
                let mid = 0.5 * (a + b);
                if sturm_count(diag, off, mid) > k {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            0.5 * (a + b)
        })
        .collect()
}
