//! Small dense complex linear algebra.
//!
//! Everything in this crate lives in spaces of dimension at most a few
//! thousand, so matrices are plain row-major `Vec<Complex64>` and the only
//! eigensolver is a cyclic Jacobi iteration for Hermitian input.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Sub};

use num_complex::Complex64;

use crate::error::{contract, Error, Result};

pub type CVector = Vec<Complex64>;

const C0: Complex64 = Complex64::new(0.0, 0.0);
const C1: Complex64 = Complex64::new(1.0, 0.0);

/// Asymmetry accepted (and symmetrized away) by [`herm_eig`].
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Eigenvalues closer than this are treated as one degenerate cluster when
/// ordering eigenvectors.
pub const DEGENERACY_TOL: f64 = 1e-10;

const MAX_SWEEPS: usize = 100;

#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C1;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(contract("matrix dimensions must be positive"));
        }
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    /// Builds a matrix from real rows. Panics on ragged input; meant for
    /// literals.
    pub fn from_real_rows(rows: &[&[f64]]) -> Self {
        let r = rows.len();
        let c = rows[0].len();
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix literal");
            data.extend(row.iter().map(|&x| Complex64::new(x, 0.0)));
        }
        Self {
            rows: r,
            cols: c,
            data,
        }
    }

    pub fn diag_real(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// `|v><v|`
    pub fn outer(a: &[Complex64], b: &[Complex64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        for (i, x) in a.iter().enumerate() {
            for (j, y) in b.iter().enumerate() {
                m[(i, j)] = x * y.conj();
            }
        }
        m
    }

    pub fn pauli_x() -> Self {
        Self::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]])
    }

    pub fn pauli_y() -> Self {
        let i = Complex64::new(0.0, 1.0);
        Self {
            rows: 2,
            cols: 2,
            data: vec![C0, -i, i, C0],
        }
    }

    pub fn pauli_z() -> Self {
        Self::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]])
    }

    pub fn hadamard() -> Self {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_real_rows(&[&[h, h], &[h, -h]])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn adjoint(&self) -> Self {
        let mut m = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(j, i)] = self[(i, j)].conj();
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest `|m_ij - conj(m_ji)|`; zero for exactly Hermitian input.
    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i..self.cols {
                worst = worst.max((self[(i, j)] - self[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `(m + m†) / 2`
    pub fn hermitian_part(&self) -> Self {
        let mut m = self.clone();
        for i in 0..self.rows {
            for j in 0..self.cols {
                m[(i, j)] = (self[(i, j)] + self[(j, i)].conj()) * 0.5;
            }
        }
        m
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == C0 {
                    continue;
                }
                let row = &other.data[k * other.cols..(k + 1) * other.cols];
                let dst = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (d, b) in dst.iter_mut().zip(row) {
                    *d += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> CVector {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `<a|M|b>`
    pub fn sandwich(&self, a: &[Complex64], b: &[Complex64]) -> Complex64 {
        inner(a, &self.mul_vec(b))
    }

    /// `U M U†`
    pub fn conjugate_by(&self, u: &Self) -> Result<Self> {
        u.matmul(self)?.matmul(&u.adjoint())
    }

    /// Compression `B† M B` onto the span of orthonormal `basis` vectors.
    pub fn compress(&self, basis: &[CVector]) -> Self {
        let images: Vec<CVector> = basis.iter().map(|b| self.mul_vec(b)).collect();
        let m = basis.len();
        let mut out = Self::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                out[(i, j)] = inner(&basis[i], &images[j]);
            }
        }
        out
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a - b).norm() <= tol)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &CMatrix {
    type Output = CMatrix;
    fn add(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

impl Sub for &CMatrix {
    type Output = CMatrix;
    fn sub(self, rhs: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }
}

impl Mul for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        self.matmul(rhs).expect("matrix product dimension mismatch")
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            write!(f, "  ")?;
            for j in 0..self.cols {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

/// `<a|b>`, conjugate-linear in the first argument.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Tensor product; index `(i1*r2 + i2, j1*c2 + j2)` holds `a[i1,j1]*b[i2,j2]`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let rows = a.rows * b.rows;
    let cols = a.cols * b.cols;
    let mut out = CMatrix::zeros(rows, cols);
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let x = a[(i1, j1)];
            if x == C0 {
                continue;
            }
            for i2 in 0..b.rows {
                let row = (i1 * b.rows + i2) * cols + j1 * b.cols;
                for j2 in 0..b.cols {
                    out.data[row + j2] = x * b[(i2, j2)];
                }
            }
        }
    }
    out
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<CVector>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// `Σ λ_k |v_k><v_k|`
    pub fn reconstruct(&self) -> CMatrix {
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] += v[i] * v[j].conj() * *lam;
                }
            }
        }
        m
    }

    /// Projector onto the eigenvectors whose eigenvalue satisfies `keep`.
    pub fn projector(&self, keep: impl Fn(f64) -> bool) -> CMatrix {
        let n = self.dim();
        let mut p = CMatrix::zeros(n, n);
        for (lam, v) in self.values.iter().zip(&self.vectors) {
            if keep(*lam) {
                p = &p + &CMatrix::outer(v, v);
            }
        }
        p
    }
}

/// Hermitian eigendecomposition by cyclic Jacobi rotations.
///
/// Inputs whose Hermitian defect is below [`HERMITIAN_TOL`] (scaled by the
/// largest entry when that exceeds one) are symmetrized first. Output is
/// deterministic: eigenpairs are sorted by eigenvalue descending, each
/// eigenvector is rotated so its first non-negligible component is real
/// positive, and vectors inside a degenerate cluster are ordered
/// lexicographically (largest first).
pub fn herm_eig(m: &CMatrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(contract(format!(
            "eigendecomposition of a non-square {}x{} matrix",
            m.rows, m.cols
        )));
    }
    let defect = m.hermitian_defect();
    let tol = HERMITIAN_TOL * m.max_abs().max(1.0);
    // NaN entries fail this test too.
    if defect.is_nan() || defect > tol {
        return Err(contract(format!(
            "matrix is not Hermitian (defect {defect:.3e})"
        )));
    }
    let n = m.rows;
    let mut a = m.hermitian_part();
    let mut v = CMatrix::identity(n);
    let scale = a.frobenius();

    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
                .map(|(p, q)| a[(p, q)].norm_sqr())
                .sum();
            if off.sqrt() <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    rotate(&mut a, &mut v, p, q);
                }
            }
        }
    }

    let mut pairs: Vec<(f64, CVector)> = (0..n)
        .map(|k| {
            let mut vec: CVector = (0..n).map(|i| v[(i, k)]).collect();
            orient(&mut vec);
            (a[(k, k)].re, vec)
        })
        .collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));

    // Re-order inside degenerate clusters.
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (pairs[start].0 - pairs[end].0).abs() < DEGENERACY_TOL {
            end += 1;
        }
        if end - start > 1 {
            pairs[start..end].sort_by(|x, y| lex_cmp(&y.1, &x.1));
        }
        start = end;
    }

    let (values, vectors) = pairs.into_iter().unzip();
    Ok(EigenDecomposition { values, vectors })
}

fn rotate(a: &mut CMatrix, v: &mut CMatrix, p: usize, q: usize) {
    let apq = a[(p, q)];
    let r = apq.norm();
    if r == 0.0 {
        return;
    }
    let app = a[(p, p)].re;
    let aqq = a[(q, q)].re;
    // Negligible compared to both diagonal entries: drop it.
    if app.abs() + r * 1e3 == app.abs() && aqq.abs() + r * 1e3 == aqq.abs() {
        a[(p, q)] = C0;
        a[(q, p)] = C0;
        return;
    }
    let phase = apq / r; // e^{iφ}
    let tau = (aqq - app) / (2.0 * r);
    let t = if tau == 0.0 {
        1.0
    } else {
        tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt())
    };
    let c = 1.0 / (1.0 + t * t).sqrt();
    let s = t * c;
    let ph_c = phase.conj(); // e^{-iφ}
    let n = a.rows;

    // A <- A G with G = [[c, s], [-s e^{-iφ}, c e^{-iφ}]] on columns p, q.
    for k in 0..n {
        let akp = a[(k, p)];
        let akq = a[(k, q)];
        a[(k, p)] = akp * c - akq * ph_c * s;
        a[(k, q)] = akp * s + akq * ph_c * c;
    }
    // A <- G† A on rows p, q.
    for k in 0..n {
        let apk = a[(p, k)];
        let aqk = a[(q, k)];
        a[(p, k)] = apk * c - aqk * phase * s;
        a[(q, k)] = apk * s + aqk * phase * c;
    }
    a[(p, q)] = C0;
    a[(q, p)] = C0;
    a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
    a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

    for k in 0..n {
        let vkp = v[(k, p)];
        let vkq = v[(k, q)];
        v[(k, p)] = vkp * c - vkq * ph_c * s;
        v[(k, q)] = vkp * s + vkq * ph_c * c;
    }
}

/// Normalizes and makes the first component of magnitude > 1e-12 real positive.
pub(crate) fn orient(v: &mut [Complex64]) {
    let nrm = norm(v);
    if nrm == 0.0 {
        return;
    }
    let lead = v.iter().copied().find(|z| z.norm() > 1e-12 * nrm);
    let phase = match lead {
        Some(z) => z.conj() / z.norm(),
        None => C1,
    };
    for z in v.iter_mut() {
        *z = *z * phase / nrm;
    }
}

fn lex_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Sum of absolute eigenvalues of a Hermitian matrix.
pub fn trace_norm(m: &CMatrix) -> Result<f64> {
    Ok(herm_eig(m)?.values.iter().map(|l| l.abs()).sum())
}

/// Von Neumann entropy in bits. `rho` must be a density matrix (unit trace
/// within 1e-10); tiny negative eigenvalues from round-off are ignored.
pub fn vn_entropy(rho: &CMatrix) -> Result<f64> {
    let tr = rho.trace();
    if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
        return Err(contract(format!(
            "entropy of a matrix with trace {:.6}{:+.6}i",
            tr.re, tr.im
        )));
    }
    let eig = herm_eig(rho)?;
    if let Some(&min) = eig.values.last() {
        if min < -1e-10 {
            return Err(contract(format!(
                "entropy of a non-positive matrix (eigenvalue {min:.3e})"
            )));
        }
    }
    let s: f64 = eig
        .values
        .iter()
        .filter(|&&l| l > 0.0)
        .map(|&l| -l * l.log2())
        .sum();
    Ok(s.max(0.0))
}

/// `h2(p) = -p log2 p - (1-p) log2 (1-p)`
pub fn binary_entropy(p: f64) -> f64 {
    let term = |x: f64| if x <= 0.0 { 0.0 } else { -x * x.log2() };
    term(p) + term(1.0 - p)
}
