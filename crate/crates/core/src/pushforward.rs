//! Pushforward maps from scale classes of positive matrices to the
//! trace-one simplex, and a continuation solver for `Ψ(B) = G`.
//!
//! Matrices in this module follow the ambient convention
//! `X_ij = ∫ conj(Z_i) Z_j`; [`SimplexPoint::to_gram_convention`] transposes
//! to the `∫ s_i conj(s_j)` convention used by `hilb`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::metric::bergman_laplace_log;
use crate::geometry::AmbientModel;
use crate::linalg::{c64, cholesky_lower, frob_dot, hermitian_basis, max_norm, traceless_hermitian_basis, CMat, HermitianForm, C64};
use crate::par::Exec;

/// Tolerance on the trace and eigenvalue constraints of the simplex.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// A positive semi-definite hermitian matrix of unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(HermitianForm);

impl SimplexPoint {
    pub fn new(h: HermitianForm) -> Result<Self> {
        let tr = h.trace();
        if (tr - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::Domain(format!("trace is {tr}, not 1")));
        }
        let lo = h.eigenvalues()[0];
        if lo < -SIMPLEX_TOL {
            return Err(Error::Domain(format!("smallest eigenvalue {lo:.3e} is negative")));
        }
        Ok(SimplexPoint(h))
    }

    /// `h / tr h` for positive semi-definite `h`.
    pub fn normalized(h: &HermitianForm) -> Result<Self> {
        let tr = h.trace();
        if !(tr > 0.0) {
            return Err(Error::Domain("matrix has non-positive trace".into()));
        }
        Self::new(h.scaled(1.0 / tr))
    }

    pub fn form(&self) -> &HermitianForm {
        &self.0
    }

    pub fn matrix(&self) -> &CMat {
        self.0.matrix()
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.eigenvalues()[0]
    }

    /// Transpose into the `∫ s_i conj(s_j)` convention.
    pub fn to_gram_convention(&self) -> HermitianForm {
        self.0.transpose()
    }

    pub fn from_gram_convention(g: &HermitianForm) -> Result<Self> {
        Self::normalized(&g.transpose())
    }
}

/// `B ∼ αB`: a positive definite representative stored at unit trace.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleClass(HermitianForm);

impl ScaleClass {
    pub fn new(b: &HermitianForm) -> Result<Self> {
        cholesky_lower(b).map_err(|e| match e {
            Error::NotPositiveDefinite { .. } => Error::Domain("B must be positive definite".into()),
            other => other,
        })?;
        Ok(ScaleClass(b.scaled(1.0 / b.trace())))
    }

    pub fn identity(n: usize) -> Self {
        ScaleClass(HermitianForm::identity(n).scaled(1.0 / n as f64))
    }

    pub fn representative(&self) -> &HermitianForm {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

fn transpose_inverse(b: &HermitianForm) -> Result<CMat> {
    b.transpose()
        .inverse()
        .map(HermitianForm::into_matrix)
        .map_err(|_| Error::Domain("B is singular".into()))
}

fn normalized_hermitian(m: CMat) -> Result<SimplexPoint> {
    let h = (&m + m.adjoint()) * c64(0.5, 0.0);
    let tr = h.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::Numerical("pushforward matrix has non-positive trace".into()));
    }
    SimplexPoint::new(HermitianForm::new(h * c64(1.0 / tr, 0.0))?)
}

/// `Ψ₀(I) = I/N`, fixed by unitary invariance of the Fubini–Study measure.
pub fn psi0_reference(n: usize) -> SimplexPoint {
    SimplexPoint(HermitianForm::identity(n).scaled(1.0 / n as f64))
}

/// `(Bᵗ)⁻² / tr (Bᵗ)⁻²`.
pub fn psi0_closed(b: &ScaleClass) -> Result<SimplexPoint> {
    let c = transpose_inverse(b.representative())?;
    normalized_hermitian(&c * &c)
}

/// Linearisation of `Ψ₀` at the representative `B` in the hermitian
/// direction `A`. It scales as `1/α` under `B ↦ αB`, so it takes the
/// representative rather than the class.
pub fn dpsi0(b: &HermitianForm, a: &HermitianForm) -> Result<HermitianForm> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension("direction and base point differ in size".into()));
    }
    let ci = transpose_inverse(b)?;
    let p = {
        let m = &ci * &ci;
        let tr = m.trace();
        m / tr
    };
    let at = a.matrix().transpose();
    let x = &ci * &at * &p;
    let f = -(&x + x.adjoint());
    let tr = f.trace();
    let out = &f - &p * tr;
    HermitianForm::new((&out + out.adjoint()) * c64(0.5, 0.0))
}

/// Real `N²×N²` matrix of `A ↦ δΨ₀|_B(A)` in the orthonormal hermitian basis.
pub fn dpsi0_matrix(b: &HermitianForm) -> Result<DMatrix<f64>> {
    let n = b.dim();
    let basis = hermitian_basis(n);
    let bm = b;
    let mut m = DMatrix::zeros(n * n, n * n);
    for (col, e) in basis.iter().enumerate() {
        let img = dpsi0(bm, &HermitianForm::new(e.clone())?)?;
        for (row, f) in basis.iter().enumerate() {
            m[(row, col)] = frob_dot(f, img.matrix());
        }
    }
    Ok(m)
}

/// Relative threshold below which a singular value counts as zero.
pub const KERNEL_TOL: f64 = 1e-8;

/// Singular values of [`dpsi0_matrix`], descending.
pub fn dpsi0_singular_values(b: &HermitianForm) -> Result<Vec<f64>> {
    let mut s: Vec<f64> = dpsi0_matrix(b)?.singular_values().iter().copied().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    Ok(s)
}

pub fn dpsi0_kernel_dim(b: &HermitianForm) -> Result<usize> {
    let s = dpsi0_singular_values(b)?;
    let cut = KERNEL_TOL * s[0];
    Ok(s.iter().filter(|v| **v < cut).count())
}

/// Smallest nonzero over largest singular value.
pub fn dpsi0_spectral_gap(b: &HermitianForm) -> Result<f64> {
    let s = dpsi0_singular_values(b)?;
    let cut = KERNEL_TOL * s[0];
    let smallest = s.iter().copied().filter(|v| *v >= cut).fold(f64::INFINITY, f64::min);
    Ok(smallest / s[0])
}

/// `Φ(B)_rs = ∫ conj(w_r) w_s / |w|² · (ξ_B∘ι)*ω_FS` with `w = B s`.
pub fn phi_matrix(ambient: &AmbientModel, b: &ScaleClass) -> Result<HermitianForm> {
    phi_raw(Exec::default(), ambient, b.representative())
}

/// Same integral for a positive semi-definite `B`, where the image curve
/// may degenerate. Nodes with `Bs(x) = 0` carry no mass.
pub fn phi_matrix_semidefinite(ambient: &AmbientModel, b: &HermitianForm) -> Result<HermitianForm> {
    if b.eigenvalues()[0] < -SIMPLEX_TOL * b.trace().abs().max(1.0) {
        return Err(Error::Domain("B must be positive semi-definite".into()));
    }
    phi_raw(Exec::default(), ambient, b)
}

fn phi_raw(exec: Exec, ambient: &AmbientModel, b: &HermitianForm) -> Result<HermitianForm> {
    let model = ambient.model();
    let n = ambient.n();
    if b.dim() != n {
        return Err(Error::Dimension(format!("B is {}x{} but the embedding has N = {n}", b.dim(), b.dim())));
    }
    let degree = model
        .bundle_degree()
        .ok_or_else(|| Error::Domain("Φ needs a ℙ¹ model".into()))? as f64;
    let ba = b.matrix() * model.basis();
    let mc = ba.adjoint() * &ba;
    let w = b.matrix() * ambient.coords();
    let nodes = model.nodes();
    let qw = model.quad_weights();
    // weight of (i/2π)∂∂̄ log|Bs|² against the node measure
    let weights = exec.map(model.n_nodes(), |x| {
        let norm: f64 = w.column(x).iter().map(|z| z.norm_sqr()).sum();
        if norm <= f64::MIN_POSITIVE {
            return 0.0;
        }
        let lap = bergman_laplace_log(&mc, nodes[x].z);
        if lap.is_finite() {
            lap / degree * qw[x] / norm
        } else {
            0.0
        }
    });
    let q = model.n_nodes();
    let mut out = CMat::zeros(n, n);
    for r in 0..n {
        for s in r..n {
            let v = Exec::Sequential.tree_sum(0..q, C64::default(), &|x| w[(r, x)].conj() * w[(s, x)] * weights[x]);
            out[(r, s)] = v;
            out[(s, r)] = v.conj();
        }
    }
    HermitianForm::new(out)
}

/// `(Bᵗ)⁻¹ Φ(B) (Bᵗ)⁻¹`, normalised to unit trace.
pub fn psi(ambient: &AmbientModel, b: &ScaleClass) -> Result<SimplexPoint> {
    psi_raw(ambient, b.representative())
}

fn psi_raw(ambient: &AmbientModel, b: &HermitianForm) -> Result<SimplexPoint> {
    let phi = phi_raw(Exec::default(), ambient, b)?;
    let ci = transpose_inverse(b)?;
    normalized_hermitian(&ci * phi.matrix() * &ci)
}

/// `t Ψ(B) + (1−t) Ψ₀(B)`.
pub fn psi_t(ambient: &AmbientModel, b: &ScaleClass, t: f64) -> Result<SimplexPoint> {
    psi_t_raw(ambient, b.representative(), t)
}

fn psi_t_raw(ambient: &AmbientModel, b: &HermitianForm, t: f64) -> Result<SimplexPoint> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Domain(format!("homotopy parameter {t} outside [0, 1]")));
    }
    let p0 = psi0_closed(&ScaleClass(b.clone()))?;
    if t == 0.0 {
        return Ok(p0);
    }
    let p1 = psi_raw(ambient, b)?;
    if t == 1.0 {
        return Ok(p1);
    }
    let m = p1.matrix() * c64(t, 0.0) + p0.matrix() * c64(1.0 - t, 0.0);
    normalized_hermitian(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub residual: f64,
    pub step: f64,
    pub newton_iters: usize,
}

/// Every accepted continuation step.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuationTrace {
    pub rows: Vec<TraceRow>,
    /// Step-size reductions after a failed corrector.
    pub rejections: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationOptions {
    /// Initial step is `1/steps`.
    pub steps: usize,
    pub newton_tol: f64,
    /// Minimum admissible eigenvalue of the target.
    pub margin: f64,
    pub max_newton: usize,
    pub min_step: f64,
}

impl Default for ContinuationOptions {
    fn default() -> Self {
        ContinuationOptions {
            steps: 10,
            newton_tol: 1e-10,
            margin: 1e-3,
            max_newton: 12,
            min_step: 1e-6,
        }
    }
}

/// Residual of `Ψ_t(B) = G` in the traceless orthonormal basis, plus its max norm.
struct Homotopy<'a> {
    ambient: &'a AmbientModel,
    target: &'a SimplexPoint,
    basis: Vec<CMat>,
}

impl Homotopy<'_> {
    fn residual(&self, b: &HermitianForm, t: f64) -> Result<(DVector<f64>, f64)> {
        let p = psi_t_raw(self.ambient, b, t)?;
        let d = p.matrix() - self.target.matrix();
        let r = DVector::from_iterator(self.basis.len(), self.basis.iter().map(|e| frob_dot(e, &d)));
        Ok((r, max_norm(&d)))
    }

    fn shift(&self, b: &HermitianForm, x: &DVector<f64>) -> Result<HermitianForm> {
        let mut m = b.matrix().clone();
        for (e, xi) in self.basis.iter().zip(x.iter()) {
            m += e * c64(*xi, 0.0);
        }
        HermitianForm::new(m)
    }

    /// Central finite differences along each traceless direction.
    fn jacobian(&self, b: &HermitianForm, t: f64) -> Result<DMatrix<f64>> {
        let dim = self.basis.len();
        let h = 1e-6;
        let cols: Vec<Result<DVector<f64>>> = Exec::default().map(dim, |j| {
            let mut e = DVector::zeros(dim);
            e[j] = h;
            let (rp, _) = self.residual(&self.shift(b, &e)?, t)?;
            let (rm, _) = self.residual(&self.shift(b, &(-e))?, t)?;
            Ok((rp - rm) / (2.0 * h))
        });
        let mut jac = DMatrix::zeros(dim, dim);
        for (j, c) in cols.into_iter().enumerate() {
            jac.set_column(j, &c?);
        }
        Ok(jac)
    }

    fn solve(jac: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        jac.clone()
            .lu()
            .solve(rhs)
            .ok_or_else(|| Error::Numerical("singular homotopy Jacobian".into()))
    }

    /// Newton at fixed `t`; returns the corrected point, residual, iterations and last Jacobian.
    fn correct(&self, mut b: HermitianForm, t: f64, opts: &ContinuationOptions) -> Result<(HermitianForm, f64, usize, DMatrix<f64>)> {
        let (mut r, mut res) = self.residual(&b, t)?;
        let mut jac = self.jacobian(&b, t)?;
        for it in 0..=opts.max_newton {
            if res <= opts.newton_tol {
                return Ok((b, res, it, jac));
            }
            if it == opts.max_newton {
                break;
            }
            let dx = Self::solve(&jac, &(-&r))?;
            let next = self.shift(&b, &dx)?;
            if cholesky_lower(&next).is_err() {
                return Err(Error::Numerical("Newton iterate left the positive cone".into()));
            }
            let (r2, res2) = self.residual(&next, t)?;
            if !(res2 < 2.0 * res) {
                return Err(Error::Numerical("Newton residual grew".into()));
            }
            b = next;
            r = r2;
            res = res2;
            jac = self.jacobian(&b, t)?;
        }
        Err(Error::Convergence {
            solver: "homotopy corrector",
            reason: format!("residual {res:.3e} after {} iterations", opts.max_newton),
            history: vec![res],
        })
    }
}

/// Finds a unit-trace `B` with `Ψ(B) = G` by continuation from the closed
/// form solution of `Ψ₀(B) = G`.
pub fn solve_psi(
    ambient: &AmbientModel,
    target: &SimplexPoint,
    opts: &ContinuationOptions,
) -> Result<(ScaleClass, ContinuationTrace)> {
    let n = ambient.n();
    if target.dim() != n {
        return Err(Error::Dimension(format!("target is {}x{} but N = {n}", target.dim(), target.dim())));
    }
    if opts.steps == 0 || !(opts.newton_tol > 0.0) {
        return Err(Error::Config("steps and newton_tol must be positive".into()));
    }
    let lo = target.min_eigenvalue();
    if lo < opts.margin {
        return Err(Error::Margin(format!(
            "target has smallest eigenvalue {lo:.3e} below the margin {:.1e}",
            opts.margin
        )));
    }
    let hom = Homotopy {
        ambient,
        target,
        basis: traceless_hermitian_basis(n),
    };
    // Ψ₀(B) = G  ⇔  Bᵗ ∝ G^{-1/2}
    let seed = target.form().transpose().map_spectrum(|l| l.powf(-0.5));
    let mut b = seed.scaled(1.0 / seed.trace());
    let mut trace = ContinuationTrace::default();
    let (_, res0) = hom.residual(&b, 0.0)?;
    trace.rows.push(TraceRow {
        t: 0.0,
        residual: res0,
        step: 0.0,
        newton_iters: 0,
    });
    let mut jac = hom.jacobian(&b, 0.0)?;
    let mut t = 0.0;
    let mut h = 1.0 / opts.steps as f64;
    let mut streak = 0;
    while t < 1.0 {
        let step = h.min(1.0 - t);
        let t_next = if t + step >= 1.0 - 1e-15 { 1.0 } else { t + step };
        let attempt = (|| {
            let p0 = psi0_closed(&ScaleClass(b.clone()))?;
            let p1 = psi_raw(ambient, &b)?;
            let d = p1.matrix() - p0.matrix();
            let dt = DVector::from_iterator(hom.basis.len(), hom.basis.iter().map(|e| frob_dot(e, &d)));
            let tangent = Homotopy::solve(&jac, &(-dt))?;
            let pred = hom.shift(&b, &(tangent * (t_next - t)))?;
            if cholesky_lower(&pred).is_err() {
                return Err(Error::Numerical("predictor left the positive cone".into()));
            }
            hom.correct(pred, t_next, opts)
        })();
        match attempt {
            Ok((b_new, res, iters, jac_new)) => {
                b = b_new.scaled(1.0 / b_new.trace());
                jac = jac_new;
                trace.rows.push(TraceRow {
                    t: t_next,
                    residual: res,
                    step: t_next - t,
                    newton_iters: iters,
                });
                t = t_next;
                streak += 1;
                if streak >= 2 {
                    h *= 2.0;
                    streak = 0;
                }
            }
            Err(_) => {
                h *= 0.5;
                streak = 0;
                trace.rejections += 1;
                if h < opts.min_step {
                    return Err(Error::Continuation {
                        t,
                        step: h,
                        trace: Box::new(trace),
                    });
                }
            }
        }
    }
    Ok((ScaleClass::new(&b)?, trace))
}

/// `min eig Ψ(B_ν)` along `B_ν = diag(1, …, 1, ν)`.
pub fn psi_boundary_probe(ambient: &AmbientModel, nus: &[f64]) -> Result<Vec<(f64, f64)>> {
    let n = ambient.n();
    nus.iter()
        .map(|&nu| {
            let mut d = vec![1.0; n];
            d[n - 1] = nu;
            let p = psi(ambient, &ScaleClass::new(&HermitianForm::from_real_diagonal(&d))?)?;
            Ok((nu, p.min_eigenvalue()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_p1_model, veronese_model, ManifoldModel};
    use crate::random::{random_hermitian, random_pd, seeded};

    fn close(a: &CMat, b: &CMat, tol: f64) -> bool {
        max_norm(&(a - b)) <= tol
    }

    #[test]
    fn reference_value() {
        assert!(close(psi0_reference(2).matrix(), &(CMat::identity(2, 2) * c64(0.5, 0.0)), 0.0));
        assert!(close(psi0_reference(3).matrix(), &(CMat::identity(3, 3) * c64(1.0 / 3.0, 0.0)), 1e-16));
    }

    #[test]
    fn closed_form_examples() {
        let p = psi0_closed(&ScaleClass::identity(3)).unwrap();
        assert!(close(p.matrix(), psi0_reference(3).matrix(), 1e-15));
        let b = ScaleClass::new(&HermitianForm::from_real_diagonal(&[2.0, 1.0])).unwrap();
        let p = psi0_closed(&b).unwrap();
        assert!(close(p.matrix(), HermitianForm::from_real_diagonal(&[0.2, 0.8]).matrix(), 1e-15));
        let b2 = ScaleClass::new(&HermitianForm::from_real_diagonal(&[4.0, 2.0])).unwrap();
        assert!(close(p.matrix(), psi0_closed(&b2).unwrap().matrix(), 1e-15));
    }

    #[test]
    fn linearisation_examples() {
        let b = random_pd(&mut seeded(1), 3, 10.0);
        let d = dpsi0(&b, &b).unwrap();
        assert!(max_norm(d.matrix()) < 1e-12);
        let a = HermitianForm::from_real_diagonal(&[1.0, -1.0]);
        let d = dpsi0(&HermitianForm::identity(2), &a).unwrap();
        assert!(close(d.matrix(), HermitianForm::from_real_diagonal(&[-1.0, 1.0]).matrix(), 1e-15));
    }

    #[test]
    fn linearisation_matches_finite_differences() {
        let mut rng = seeded(4);
        for n in 2..=4 {
            for _ in 0..5 {
                let b = random_pd(&mut rng, n, 10.0);
                let a = random_hermitian(&mut rng, n);
                let d = dpsi0(&b, &a).unwrap();
                let h = 1e-5;
                let plus = psi0_closed(&ScaleClass(HermitianForm::new(b.matrix() + a.matrix() * c64(h, 0.0)).unwrap())).unwrap();
                let minus = psi0_closed(&ScaleClass(HermitianForm::new(b.matrix() - a.matrix() * c64(h, 0.0)).unwrap())).unwrap();
                let fd = (plus.matrix() - minus.matrix()) / c64(2.0 * h, 0.0);
                let rel = max_norm(&(&fd - d.matrix())) / max_norm(d.matrix());
                assert!(rel < 1e-6, "n={n} rel={rel:e}");
                assert!(d.trace().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kernel_is_the_scale_direction() {
        assert_eq!(dpsi0_kernel_dim(&HermitianForm::identity(2)).unwrap(), 1);
        let mut rng = seeded(9);
        for _ in 0..5 {
            let b = random_pd(&mut rng, 3, 10.0);
            assert_eq!(dpsi0_kernel_dim(&b).unwrap(), 1);
            assert!(dpsi0_spectral_gap(&b).unwrap() > 1e-6);
        }
    }

    #[test]
    fn phi_at_identity() {
        let m = build_p1_model(1, 8, 16).unwrap();
        let a = veronese_model(&m);
        let phi = phi_matrix(&a, &ScaleClass::identity(2)).unwrap();
        assert!(close(phi.matrix(), &(CMat::identity(2, 2) * c64(0.5, 0.0)), 1e-14));
        let p = psi(&a, &ScaleClass::identity(2)).unwrap();
        assert!(close(p.matrix(), &(CMat::identity(2, 2) * c64(0.5, 0.0)), 1e-14));
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let a = veronese_model(&m);
        let phi = phi_matrix(&a, &ScaleClass::identity(3)).unwrap();
        assert!((phi.get(0, 0) - phi.get(2, 2)).norm() < 1e-13);
        // total mass of the pulled back form is the degree of the curve
        assert!((phi.trace() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn psi_equals_psi0_on_the_line() {
        let m = ManifoldModel::p1_default(1, 1).unwrap();
        let a = veronese_model(&m);
        let mut rng = seeded(31);
        for _ in 0..5 {
            let b = ScaleClass::new(&random_pd(&mut rng, 2, 10.0)).unwrap();
            let p = psi(&a, &b).unwrap();
            let p0 = psi0_closed(&b).unwrap();
            assert!(close(p.matrix(), p0.matrix(), 1e-12));
        }
    }

    #[test]
    fn psi_is_scale_invariant() {
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let a = veronese_model(&m);
        let b = random_pd(&mut seeded(3), 3, 10.0);
        let p = psi_raw(&a, &b).unwrap();
        for s in [0.1, 10.0] {
            let q = psi_raw(&a, &b.scaled(s)).unwrap();
            assert!(close(p.matrix(), q.matrix(), 1e-12));
        }
    }

    #[test]
    fn homotopy_endpoints() {
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let a = veronese_model(&m);
        let b = ScaleClass::new(&random_pd(&mut seeded(5), 3, 10.0)).unwrap();
        assert_eq!(psi_t(&a, &b, 0.0).unwrap(), psi0_closed(&b).unwrap());
        assert_eq!(psi_t(&a, &b, 1.0).unwrap(), psi(&a, &b).unwrap());
        assert!(psi_t(&a, &b, 1.5).is_err());
        let m1 = build_p1_model(1, 8, 16).unwrap();
        let a1 = veronese_model(&m1);
        let half = psi_t(&a1, &ScaleClass::identity(2), 0.5).unwrap();
        assert!(close(half.matrix(), &(CMat::identity(2, 2) * c64(0.5, 0.0)), 1e-14));
    }

    #[test]
    fn solve_recovers_forward_targets() {
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let a = veronese_model(&m);
        let b0 = ScaleClass::new(&random_pd(&mut seeded(12), 3, 5.0)).unwrap();
        let g = psi(&a, &b0).unwrap();
        let opts = ContinuationOptions {
            newton_tol: 1e-10,
            ..Default::default()
        };
        let (b, trace) = solve_psi(&a, &g, &opts).unwrap();
        let res = max_norm(&(psi(&a, &b).unwrap().matrix() - g.matrix()));
        assert!(res <= 1e-10, "res={res:e}");
        assert_eq!(trace.rows.last().unwrap().t, 1.0);
    }

    #[test]
    fn solve_identity_target_on_the_line() {
        let m = build_p1_model(1, 8, 16).unwrap();
        let a = veronese_model(&m);
        let (b, _) = solve_psi(&a, &psi0_reference(2), &ContinuationOptions::default()).unwrap();
        assert!(close(b.representative().matrix(), &(CMat::identity(2, 2) * c64(0.5, 0.0)), 1e-10));
    }

    #[test]
    fn near_boundary_target_is_rejected() {
        let m = build_p1_model(1, 8, 16).unwrap();
        let a = veronese_model(&m);
        let g = SimplexPoint::new(HermitianForm::from_real_diagonal(&[1.0 - 1e-5, 1e-5])).unwrap();
        assert!(matches!(solve_psi(&a, &g, &ContinuationOptions::default()), Err(Error::Margin(_))));
    }

    fn log_radial_line() -> AmbientModel {
        veronese_model(&ManifoldModel::p1_log_radial(1, 1, 600, 8, 25.0).unwrap())
    }

    #[test]
    fn boundary_probe_decays() {
        // exact value along diag(1, ν) at k = 1 is ν²/(1+ν²)
        let a = log_radial_line();
        let probe = psi_boundary_probe(&a, &[1e-1, 1e-2, 1e-3, 1e-4, 1e-5]).unwrap();
        for (nu, lo) in probe {
            let want = nu * nu / (1.0 + nu * nu);
            assert!((lo - want).abs() < 1e-8 * want, "ν={nu} {lo:e} vs {want:e}");
        }
    }

    #[test]
    fn phi_jumps_at_the_boundary() {
        // every B_ν = diag(1, ν) with ν > 0 is an automorphism of the line, so
        // Φ(B_ν) = I/2, while the rank-one limit collapses the image to a point
        let a = log_radial_line();
        for nu in [1e-2, 1e-4, 1e-6] {
            let b = ScaleClass::new(&HermitianForm::from_real_diagonal(&[1.0, nu])).unwrap();
            let phi = phi_matrix(&a, &b).unwrap();
            assert!(close(phi.matrix(), &(CMat::identity(2, 2) * c64(0.5, 0.0)), 1e-8), "ν={nu}");
        }
        let limit = phi_matrix_semidefinite(&a, &HermitianForm::from_real_diagonal(&[1.0, 0.0])).unwrap();
        assert!(max_norm(limit.matrix()) == 0.0);
    }
}
