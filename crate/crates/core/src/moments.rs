//! Positive measures with prescribed section moments, and the matrix Λ
//! of moment rows used by the injectivity estimate.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Density, ManifoldModel};
use crate::par::Exec;

/// Newton gives up once the best residual has improved by less than
/// `STALL_GAIN` (relative) over `STALL_STEPS` consecutive steps. This only
/// fires on unreachable targets, where the dual iterate runs off to infinity.
const STALL_STEPS: usize = 20;
const STALL_GAIN: f64 = 1e-3;

/// Smallest admissible floor; `e^{-k}` is clamped here for huge `k`.
pub const MIN_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct MomentTarget(Vec<f64>);

impl MomentTarget {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Domain(format!("moment target entry {i} is {} (must be positive)", values[i])));
        }
        Ok(MomentTarget(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentOptions {
    pub tol: f64,
    pub max_newton: usize,
}

impl Default for MomentOptions {
    fn default() -> Self {
        MomentOptions {
            tol: 1e-11,
            max_newton: 100,
        }
    }
}

/// Outcome of the moment Newton iteration. When `converged` is false the
/// fields describe the last iterate, which has the lowest dual objective.
#[derive(Debug, Clone, Serialize)]
pub struct MomentSolution {
    #[serde(skip)]
    pub density: Density,
    /// `u = Σ c_j |s_j|² ref` with `dμ = e^u dV_ref`.
    pub coeffs: Vec<f64>,
    pub achieved: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

impl MomentSolution {
    pub fn residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

/// `|s_j(x)|² ref(x)` for every section and node.
fn section_profiles(model: &ManifoldModel) -> DMatrix<f64> {
    let s = model.sections();
    let r = model.ref_weight();
    DMatrix::from_fn(s.nrows(), s.ncols(), |j, x| s[(j, x)].norm_sqr() * r[x])
}

/// Solves `∫ |s_j|² ref dμ = λ_j` with `dμ = exp(Σ c_j |s_j|² ref) dV_ref`.
pub fn solve_moments(model: &ManifoldModel, target: &MomentTarget, opts: &MomentOptions) -> Result<MomentSolution> {
    let sol = solve_moments_best_effort(model, target, opts)?;
    if sol.converged {
        Ok(sol)
    } else {
        Err(Error::Convergence {
            solver: "moment Newton",
            reason: format!(
                "best residual {:.3e} above tolerance {:.1e} after {} steps",
                sol.residual(),
                opts.tol,
                sol.residual_history.len().saturating_sub(1)
            ),
            history: sol.residual_history,
        })
    }
}

/// Like [`solve_moments`] but returns the last iterate instead of failing
/// when the target is not reached.
pub fn solve_moments_best_effort(model: &ManifoldModel, target: &MomentTarget, opts: &MomentOptions) -> Result<MomentSolution> {
    let n = model.n_sections();
    if target.values().len() != n {
        return Err(Error::Dimension(format!("{} moment targets for {n} sections", target.values().len())));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Config("moment tolerance must be positive".into()));
    }
    newton(&section_profiles(model), model.quad_weights(), target.values(), opts)
}

struct Eval {
    weights: Vec<f64>,
    moments: DVector<f64>,
    objective: f64,
}

fn evaluate(a: &DMatrix<f64>, vol: &[f64], lambda: &DVector<f64>, c: &DVector<f64>) -> Eval {
    let (n, q) = a.shape();
    let mut weights = vec![0.0; q];
    let mut moments = DVector::zeros(n);
    let mut mass = 0.0;
    for x in 0..q {
        let mut u = 0.0;
        for j in 0..n {
            u += c[j] * a[(j, x)];
        }
        let w = u.exp() * vol[x];
        weights[x] = w;
        mass += w;
        for j in 0..n {
            moments[j] += a[(j, x)] * w;
        }
    }
    Eval {
        weights,
        moments,
        objective: mass - lambda.dot(c),
    }
}

pub(crate) fn newton(a: &DMatrix<f64>, vol: &[f64], target: &[f64], opts: &MomentOptions) -> Result<MomentSolution> {
    let (n, q) = a.shape();
    let lambda = DVector::from_column_slice(target);
    let mut c = DVector::zeros(n);
    let mut ev = evaluate(a, vol, &lambda, &c);
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for _ in 0..=opts.max_newton {
        let r = &lambda - &ev.moments;
        let res = r.amax();
        history.push(res);
        if !res.is_finite() {
            return Err(Error::Numerical("moment map is not finite".into()));
        }
        if res < (1.0 - STALL_GAIN) * best {
            stalled = 0;
        }
        best = best.min(res);
        if res <= opts.tol || history.len() > opts.max_newton || stalled >= STALL_STEPS {
            break;
        }
        stalled += 1;
        // Jacobian ∫ a_i a_j dμ: the Hessian of the convex objective
        let mut jac = DMatrix::zeros(n, n);
        for x in 0..q {
            let w = ev.weights[x];
            for i in 0..n {
                let ai = a[(i, x)] * w;
                for j in 0..=i {
                    jac[(i, j)] += ai * a[(j, x)];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                jac[(j, i)] = jac[(i, j)];
            }
        }
        let dir = match newton_direction(&jac, &r) {
            Some(d) => d,
            None => break,
        };
        let slope = -r.dot(&dir);
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-14 {
            let trial = &c + &dir * step;
            let e = evaluate(a, vol, &lambda, &trial);
            // near the solution the objective change drowns in rounding,
            // so a plain residual decrease is also accepted
            let armijo = e.objective <= ev.objective + 1e-4 * step * slope;
            let shrinks = (&lambda - &e.moments).amax() < (1.0 - 1e-4 * step) * res;
            if e.objective.is_finite() && (armijo || shrinks) {
                accepted = Some((trial, e));
                break;
            }
            step *= 0.5;
        }
        let Some((next, e)) = accepted else {
            break;
        };
        c = next;
        ev = e;
    }
    let res = *history.last().expect("at least one evaluation");
    Ok(MomentSolution {
        density: Density { weights: ev.weights },
        coeffs: c.iter().copied().collect(),
        achieved: ev.moments.iter().copied().collect(),
        residual_history: history,
        converged: res <= opts.tol,
    })
}

/// Solves `J δ = r` by Cholesky on the diagonally scaled Jacobian. A
/// Levenberg shift is added only if rounding has cost definiteness.
fn newton_direction(jac: &DMatrix<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let n = jac.nrows();
    let d: Vec<f64> = (0..n).map(|i| jac[(i, i)].sqrt()).collect();
    if d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return None;
    }
    let scaled = DMatrix::from_fn(n, n, |i, j| jac[(i, j)] / (d[i] * d[j]));
    let rs = DVector::from_fn(n, |i, _| r[i] / d[i]);
    let mut shift = 0.0;
    for _ in 0..12 {
        let m = &scaled + DMatrix::identity(n, n) * shift;
        if let Some(chol) = m.cholesky() {
            let y = chol.solve(&rs);
            return Some(DVector::from_fn(n, |i, _| y[i] / d[i]));
        }
        shift = if shift == 0.0 { 1e-14 } else { shift * 10.0 };
    }
    None
}

/// Row `i` of the target: `floor` everywhere except `1` at `i`.
pub fn lambda_target(n: usize, i: usize, floor: f64) -> Vec<f64> {
    (0..n).map(|j| if j == i { 1.0 } else { floor }).collect()
}

/// `e^{-k}`, clamped at [`MIN_FLOOR`].
pub fn default_floor(k: u32) -> f64 {
    (-(k as f64)).exp().max(MIN_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaRow {
    pub target: Vec<f64>,
    pub achieved: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `m_j² − m_{j−1} m_{j+1}` over interior `j`, relative to
    /// `m_j²`. Moments of any measure against monomials are log-concave in
    /// `j`, so a positive value certifies the target is unreachable.
    pub log_concavity_violation: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LambdaBuild {
    pub floor: f64,
    /// Achieved moments, one row per target.
    #[serde(serialize_with = "crate::report::serialize_real_matrix")]
    pub lambda: DMatrix<f64>,
    #[serde(skip)]
    pub densities: Vec<Density>,
    pub rows: Vec<LambdaRow>,
}

impl LambdaBuild {
    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

fn check_floor(floor: f64) -> Result<f64> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::Domain(format!("floor {floor} must lie in (0, 1)")));
    }
    Ok(floor.max(MIN_FLOOR))
}

/// Solves every row and fails on the first row that misses its target.
pub fn build_lambda(model: &ManifoldModel, floor: f64, tol: f64) -> Result<LambdaBuild> {
    let built = build_lambda_best_effort_with(Exec::default(), model, floor, tol)?;
    if let Some(row) = built.rows.iter().position(|r| !r.converged) {
        let r = &built.rows[row];
        return Err(Error::AtRow {
            row,
            source: Box::new(Error::Convergence {
                solver: "moment Newton",
                reason: format!("target row {row} missed by {:.3e}", r.residual),
                history: vec![r.residual],
            }),
        });
    }
    let max_entry = built.lambda.amax();
    if max_entry > 1.0 + tol {
        return Err(Error::Numerical(format!("Λ has an entry of modulus {max_entry} > 1")));
    }
    Ok(built)
}

/// Every row, converged or not; unreached rows keep their last iterate.
pub fn build_lambda_best_effort(model: &ManifoldModel, floor: f64, tol: f64) -> Result<LambdaBuild> {
    build_lambda_best_effort_with(Exec::default(), model, floor, tol)
}

pub fn build_lambda_best_effort_with(exec: Exec, model: &ManifoldModel, floor: f64, tol: f64) -> Result<LambdaBuild> {
    let floor = check_floor(floor)?;
    let n = model.n_sections();
    let a = section_profiles(model);
    let vol = model.quad_weights();
    let opts = MomentOptions {
        tol,
        ..Default::default()
    };
    let monomial = model.bundle_degree().is_some() && *model.basis() == crate::linalg::CMat::identity(n, n);
    let solved = exec.map(n, |i| {
        let t = lambda_target(n, i, floor);
        newton(&a, vol, &t, &opts).map_err(|e| Error::AtRow { row: i, source: Box::new(e) })
    });
    let mut lambda = DMatrix::zeros(n, n);
    let mut densities = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (i, s) in solved.into_iter().enumerate() {
        let s = s?;
        for j in 0..n {
            lambda[(i, j)] = s.achieved[j];
        }
        let target = lambda_target(n, i, floor);
        rows.push(LambdaRow {
            log_concavity_violation: monomial.then(|| log_concavity_violation(&target)),
            target,
            achieved: s.achieved.clone(),
            residual: s.residual(),
            iterations: s.residual_history.len() - 1,
            converged: s.converged,
        });
        densities.push(s.density);
    }
    Ok(LambdaBuild {
        floor,
        lambda,
        densities,
        rows,
    })
}

/// `max_j (m_j² − m_{j−1} m_{j+1}) / m_j²`; zero for sequences of length < 3.
pub fn log_concavity_violation(m: &[f64]) -> f64 {
    (1..m.len().saturating_sub(1))
        .map(|j| (m[j] * m[j] - m[j - 1] * m[j + 1]) / (m[j] * m[j]))
        .fold(f64::NEG_INFINITY, f64::max)
        .max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_p1_model;
    use crate::linalg::{c64, op_norm, CMat};

    #[test]
    fn reference_moments_need_no_correction() {
        let m = build_p1_model(1, 4, 8).unwrap();
        let s = solve_moments(&m, &MomentTarget::new(vec![0.5, 0.5]).unwrap(), &MomentOptions::default()).unwrap();
        assert!(s.coeffs.iter().all(|c| c.abs() < 1e-12));
        assert!(s.residual() <= 1e-12);
        let m = build_p1_model(2, 6, 12).unwrap();
        let t = MomentTarget::new(vec![1.0 / 3.0, 1.0 / 6.0, 1.0 / 3.0]).unwrap();
        let s = solve_moments(&m, &t, &MomentOptions::default()).unwrap();
        for (w, v) in s.density.weights.iter().zip(m.quad_weights()) {
            assert!((w / v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn scaling_target_shifts_potential() {
        // Σ C(k,j)|s_j|² ref ≡ 1, so constants lie in the ansatz
        let m = ManifoldModel::p1_default(1, 3).unwrap();
        let t = vec![0.2, 0.05, 0.04, 0.3];
        let opts = MomentOptions::default();
        let a = solve_moments(&m, &MomentTarget::new(t.clone()).unwrap(), &opts).unwrap();
        let b = solve_moments(&m, &MomentTarget::new(t.iter().map(|v| v * 7.0).collect()).unwrap(), &opts).unwrap();
        for (x, y) in a.density.weights.iter().zip(&b.density.weights) {
            assert!((y / x - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let perm = [2usize, 0, 1];
        let p = CMat::from_fn(3, 3, |i, j| if perm[i] == j { c64(1.0, 0.0) } else { c64(0.0, 0.0) });
        let mp = m.with_basis(&p).unwrap();
        let t = vec![0.3, 0.1, 0.2];
        let tp: Vec<f64> = perm.iter().map(|&j| t[j]).collect();
        let opts = MomentOptions::default();
        let a = solve_moments(&m, &MomentTarget::new(t).unwrap(), &opts).unwrap();
        let b = solve_moments(&mp, &MomentTarget::new(tp).unwrap(), &opts).unwrap();
        for (i, &j) in perm.iter().enumerate() {
            assert!((b.achieved[i] - a.achieved[j]).abs() < 1e-11);
        }
        for (x, y) in a.density.weights.iter().zip(&b.density.weights) {
            assert!((x - y).abs() < 1e-9 * x.max(1e-300));
        }
    }

    #[test]
    fn invalid_targets() {
        assert!(matches!(MomentTarget::new(vec![1.0, 0.0]), Err(Error::Domain(_))));
        assert!(matches!(MomentTarget::new(vec![1.0, -2.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn lambda_on_the_line() {
        let m = ManifoldModel::p1_default(1, 1).unwrap();
        let f = default_floor(1);
        let built = build_lambda(&m, f, 1e-11).unwrap();
        for (i, row) in built.rows.iter().enumerate() {
            let sum: f64 = row.achieved.iter().sum();
            assert!((sum - (1.0 + f)).abs() < 1e-10, "row {i}");
        }
        let lam = built.lambda.map(|x| c64(x, 0.0));
        assert!(op_norm(&lam) <= 2.0);
        assert!(op_norm(&lam.try_inverse().unwrap()) <= 2.0);
        assert!(built.densities.iter().all(|d| d.min_weight() > 0.0));
    }

    #[test]
    fn line_rows_are_exact() {
        // k = 1: any positive pair is reachable, so Λ is the target itself
        let m = ManifoldModel::p1_default(1, 1).unwrap();
        let built = build_lambda(&m, 0.01, 1e-11).unwrap();
        let lam = built.lambda.map(|x| c64(x, 0.0));
        assert!((op_norm(&lam) - 1.01).abs() < 1e-10);
    }

    #[test]
    fn interior_rows_are_out_of_reach_for_monomials() {
        // m_1² ≤ m_0 m_2 for every measure, but the middle target has 1 > e^{-4}
        let m = ManifoldModel::p1_default(1, 2).unwrap();
        let built = build_lambda_best_effort(&m, default_floor(2), 1e-11).unwrap();
        assert!(built.rows[0].converged && built.rows[2].converged);
        assert!(!built.rows[1].converged);
        assert!(built.rows[1].log_concavity_violation.unwrap() > 0.9);
        let a = &built.rows[1].achieved;
        assert!(a[1] * a[1] <= a[0] * a[2] * (1.0 + 1e-12));
        assert!(matches!(build_lambda(&m, default_floor(2), 1e-11), Err(Error::AtRow { row: 1, .. })));
    }
}
