//! Hermitian matrix primitives: validated forms, the three norms, Cholesky,
//! and the change to an H-orthonormal section basis.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;

/// Hermiticity defects at or below this are treated as rounding noise.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Forms with a larger condition number get a warning attached to reports.
pub const COND_WARN: f64 = 1e8;

pub fn c64(re: f64, im: f64) -> C64 {
    Complex::new(re, im)
}

/// An N×N complex hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianForm(CMat);

impl HermitianForm {
    /// Validates hermiticity and symmetrises away sub-tolerance noise.
    pub fn new(m: CMat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("non-finite matrix entry".into()));
        }
        let (defect, row, col) = hermitian_defect(&m);
        let scale = max_norm(&m).max(1.0);
        if defect > HERMITIAN_TOL * scale {
            return Err(Error::NotHermitian { row, col, defect });
        }
        let sym = (&m + m.adjoint()) * c64(0.5, 0.0);
        Ok(HermitianForm(sym))
    }

    pub fn identity(n: usize) -> Self {
        HermitianForm(CMat::identity(n, n))
    }

    pub fn from_real_diagonal(d: &[f64]) -> Self {
        let n = d.len();
        HermitianForm(CMat::from_fn(n, n, |i, j| if i == j { c64(d[i], 0.0) } else { C64::default() }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.0
    }

    pub fn into_matrix(self) -> CMat {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.0[(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        HermitianForm(&self.0 * c64(c, 0.0))
    }

    pub fn trace(&self) -> f64 {
        self.0.diagonal().iter().map(|z| z.re).sum()
    }

    /// Unitary (or general) congruence `A·H·A*`.
    pub fn congruence(&self, a: &CMat) -> Self {
        let m = a * &self.0 * a.adjoint();
        HermitianForm((&m + m.adjoint()) * c64(0.5, 0.0))
    }

    /// Complex conjugate, which equals the transpose for hermitian matrices.
    pub fn transpose(&self) -> Self {
        HermitianForm(self.0.transpose())
    }

    pub fn is_positive_definite(&self) -> bool {
        cholesky_lower(self).is_ok()
    }

    /// Eigenvalues in ascending order with matching unit eigenvectors as columns.
    pub fn eigen(&self) -> (Vec<f64>, CMat) {
        let n = self.dim();
        let eig = self.0.clone().symmetric_eigen();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMat::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        (values, vectors)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.eigen().0
    }

    /// Ratio of extreme eigenvalues; infinite unless positive definite.
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// `f` applied to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let (vals, vecs) = self.eigen();
        let d = CMat::from_diagonal(&DVector::from_iterator(vals.len(), vals.iter().map(|&v| c64(f(v), 0.0))));
        let m = &vecs * d * vecs.adjoint();
        HermitianForm((&m + m.adjoint()) * c64(0.5, 0.0))
    }

    pub fn inverse(&self) -> Result<Self> {
        let l = cholesky_lower(self)?;
        let n = self.dim();
        let linv = l
            .solve_lower_triangular(&CMat::identity(n, n))
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        let m = linv.adjoint() * linv;
        Ok(HermitianForm((&m + m.adjoint()) * c64(0.5, 0.0)))
    }

    pub fn determinant(&self) -> f64 {
        self.eigenvalues().iter().product()
    }

    /// Warning text when the form is too ill-conditioned for the tolerances.
    pub fn condition_warning(&self) -> Option<String> {
        let c = self.condition_number();
        (c > COND_WARN).then(|| format!("condition number {c:.3e} exceeds {COND_WARN:.0e}; tolerances may not hold"))
    }

    pub fn to_json(&self) -> MatrixJson {
        MatrixJson::from_matrix(&self.0)
    }

    pub fn from_json(j: &MatrixJson) -> Result<Self> {
        HermitianForm::new(j.to_matrix()?)
    }
}

impl Serialize for HermitianForm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

/// Largest `|m_ij - conj(m_ji)|` with its location.
pub fn hermitian_defect(m: &CMat) -> (f64, usize, usize) {
    let mut worst = (0.0, 0, 0);
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    worst
}

/// The three norms chained in the injectivity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixNorms {
    pub op: f64,
    pub hs: f64,
    pub max: f64,
}

pub fn max_norm(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

pub fn hs_norm(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Operator norm: spectral radius for hermitian input, largest singular value otherwise.
pub fn op_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    if hermitian_defect(m).0 <= HERMITIAN_TOL * max_norm(m).max(1.0) {
        let h = (m + m.adjoint()) * c64(0.5, 0.0);
        h.symmetric_eigenvalues().iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
    } else {
        m.singular_values().max()
    }
}

pub fn matrix_norms(m: &CMat) -> Result<MatrixNorms> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.nrows(), m.ncols())));
    }
    Ok(MatrixNorms {
        op: op_norm(m),
        hs: hs_norm(m),
        max: max_norm(m),
    })
}

pub fn real_norms(m: &DMatrix<f64>) -> Result<MatrixNorms> {
    matrix_norms(&m.map(|x| c64(x, 0.0)))
}

/// Lower-triangular `L` with `H = L·L*` and positive real diagonal.
pub fn cholesky_lower(h: &HermitianForm) -> Result<CMat> {
    let a = h.matrix();
    let n = a.nrows();
    let mut l = CMat::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)].re;
        for p in 0..j {
            d -= l[(j, p)].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = d.sqrt();
        l[(j, j)] = c64(djj, 0.0);
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for p in 0..j {
                s -= l[(i, p)] * l[(j, p)].conj();
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Rows of `L⁻¹·raw` where `H = L·L*`: the section values of an
/// H-orthonormal basis, given raw values with one row per section.
pub fn orthonormalize_sections(h: &HermitianForm, raw: &CMat) -> Result<CMat> {
    if raw.nrows() != h.dim() {
        return Err(Error::Dimension(format!(
            "form has dimension {} but {} section rows were given",
            h.dim(),
            raw.nrows()
        )));
    }
    let l = cholesky_lower(h)?;
    l.solve_lower_triangular(raw)
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))
}

/// Repo-wide JSON matrix format: `{"n": N, "re": [[..]], "im": [[..]]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub n: usize,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let n = m.nrows();
        MatrixJson {
            n,
            re: (0..n).map(|i| (0..m.ncols()).map(|j| m[(i, j)].re).collect()).collect(),
            im: (0..n).map(|i| (0..m.ncols()).map(|j| m[(i, j)].im).collect()).collect(),
        }
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        Self::from_matrix(&m.map(|x| c64(x, 0.0)))
    }

    pub fn to_matrix(&self) -> Result<CMat> {
        let n = self.n;
        let shape_ok = |rows: &Vec<Vec<f64>>| rows.len() == n && rows.iter().all(|r| r.len() == n);
        if !shape_ok(&self.re) || !shape_ok(&self.im) {
            return Err(Error::Dimension(format!("re/im must both be {n}x{n}")));
        }
        Ok(CMat::from_fn(n, n, |i, j| c64(self.re[i][j], self.im[i][j])))
    }
}

/// Orthonormal basis (Frobenius real inner product) of traceless hermitian
/// N×N matrices: off-diagonal symmetric/antisymmetric pairs followed by
/// N−1 diagonal generators.
pub fn traceless_hermitian_basis(n: usize) -> Vec<CMat> {
    let mut basis = Vec::with_capacity(n * n - 1);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i + 1..n {
            let mut e = CMat::zeros(n, n);
            e[(i, j)] = c64(s, 0.0);
            e[(j, i)] = c64(s, 0.0);
            basis.push(e);
            let mut e = CMat::zeros(n, n);
            e[(i, j)] = c64(0.0, s);
            e[(j, i)] = c64(0.0, -s);
            basis.push(e);
        }
    }
    for m in 1..n {
        let norm = ((m * (m + 1)) as f64).sqrt();
        let mut e = CMat::zeros(n, n);
        for p in 0..m {
            e[(p, p)] = c64(1.0 / norm, 0.0);
        }
        e[(m, m)] = c64(-(m as f64) / norm, 0.0);
        basis.push(e);
    }
    basis
}

/// Full hermitian basis: the identity direction `I/√N` followed by the traceless basis.
pub fn hermitian_basis(n: usize) -> Vec<CMat> {
    let mut b = vec![CMat::identity(n, n) * c64(1.0 / (n as f64).sqrt(), 0.0)];
    b.extend(traceless_hermitian_basis(n));
    b
}

/// Real Frobenius inner product `Re tr(A* B)`.
pub fn frob_dot(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}
