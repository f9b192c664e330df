//! Quantitative injectivity of the Fubini–Study map: if
//! `FS(H)^k = (1+f) FS(H′)^k` with `sup|f| ≤ ε` and `N^{3/2} ε ≤ 1/4`, then
//! `‖H − H′‖_op ≤ 2N²ε` in an H-orthonormal gauge.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{fs_metric, Density, GridShape, ManifoldModel};
use crate::linalg::{c64, cholesky_lower, op_norm, real_norms, CMat, HermitianForm};
use crate::moments::{build_lambda_best_effort, LambdaBuild};
use crate::random::{random_hermitian, random_pd, seeded};

/// Tolerance of the pointwise consistency check `1 + f = Σ d⁻² |s''|²`.
pub const EQ4_TOL: f64 = 1e-10;
/// Grid refinement that moves ε by more than this raises the refinement flag.
pub const REFINE_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct FsComparison {
    /// `f = e^{u_{H2} − u_H} − 1` at every node.
    pub f: Vec<f64>,
    pub epsilon: f64,
    pub argmax_node: usize,
    /// Eigenvalues of `H2` in the H-orthonormal gauge, ascending.
    pub d_sq: Vec<f64>,
    /// Rows express the gauge basis `s''` in the model's current basis.
    pub gauge: CMat,
    /// `L⁻¹` with `H = L Lᴴ`.
    pub l_inv: CMat,
    /// Max deviation of the pointwise identity `1 + f = Σ d⁻²|s''_i|²_{FS(H)}`.
    pub identity_defect: f64,
}

pub fn compare_fs(model: &ManifoldModel, h: &HermitianForm, h2: &HermitianForm) -> Result<FsComparison> {
    let n = model.n_sections();
    if h.dim() != n || h2.dim() != n {
        return Err(Error::Dimension(format!(
            "forms are {}x{} and {}x{} but the model has {n} sections",
            h.dim(),
            h.dim(),
            h2.dim(),
            h2.dim()
        )));
    }
    let fs1 = fs_metric(model, h)?;
    let fs2 = fs_metric(model, h2)?;
    let (u1, u2) = (fs1.potential(), fs2.potential());
    let f: Vec<f64> = u1.iter().zip(u2).map(|(a, b)| (b - a).exp() - 1.0).collect();
    let (argmax_node, epsilon) = f
        .iter()
        .map(|v| v.abs())
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });

    // Cholesky then eigendecomposition: H ↦ I, H2 ↦ diag(d²)
    let l = cholesky_lower(h)?;
    let linv = l
        .clone()
        .solve_lower_triangular(&CMat::identity(n, n))
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    cholesky_lower(h2)?;
    let m = HermitianForm::new(h2.congruence(&linv).into_matrix())?;
    let (d_sq, u) = m.eigen();
    let gauge = u.adjoint() * &linv;

    let s2 = &gauge * model.sections();
    let refw = model.ref_weight();
    let identity_defect = (0..model.n_nodes())
        .map(|x| {
            let rhs: f64 = (0..n).map(|i| s2[(i, x)].norm_sqr() / d_sq[i]).sum::<f64>() * refw[x] * (-u1[x]).exp();
            (1.0 + f[x] - rhs).abs()
        })
        .fold(0.0, f64::max);
    if identity_defect > EQ4_TOL {
        return Err(Error::Numerical(format!(
            "pointwise identity 1 + f = Σ d⁻²|s|² fails by {identity_defect:.3e}"
        )));
    }
    Ok(FsComparison {
        f,
        epsilon,
        argmax_node,
        d_sq,
        gauge,
        l_inv: linv,
        identity_defect,
    })
}

/// `F_ij = ∫ f |s_j|² ref dμ_i` in the model's current basis.
pub fn f_matrix(model: &ManifoldModel, f: &[f64], densities: &[Density]) -> Result<DMatrix<f64>> {
    let n = model.n_sections();
    let q = model.n_nodes();
    if f.len() != q {
        return Err(Error::Dimension(format!("f has {} values for {q} nodes", f.len())));
    }
    if densities.len() != n {
        return Err(Error::Dimension(format!("{} densities for {n} sections", densities.len())));
    }
    if let Some(i) = densities.iter().position(|d| d.len() != q) {
        return Err(Error::Dimension(format!("density {i} has {} weights for {q} nodes", densities[i].len())));
    }
    let s = model.sections();
    let refw = model.ref_weight();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let w = &densities[i].weights;
        (0..q).map(|x| f[x] * s[(j, x)].norm_sqr() * refw[x] * w[x]).sum()
    }))
}

#[derive(Debug, Clone, Serialize)]
pub struct NormChain {
    pub f_max: f64,
    pub f_hs: f64,
    pub f_op: f64,
    pub lambda_op: f64,
    pub lambda_inv_op: f64,
    pub lambda_inv_f_op: f64,
    /// `max_i |d⁻²_i − 1|` from the direct eigenvalues.
    pub inv_sq_defect: f64,
}

impl NormChain {
    /// Each link of `‖Λ⁻¹F‖_op ≤ ‖Λ⁻¹‖_op‖F‖_op ≤ 2‖F‖_HS ≤ 2N‖F‖_max`,
    /// with a relative rounding allowance.
    pub fn links(&self, n: usize) -> [bool; 3] {
        let slack = |x: f64| x * (1.0 + 1e-12) + 1e-15;
        [
            self.lambda_inv_f_op <= slack(self.lambda_inv_op * self.f_op),
            self.lambda_inv_op * self.f_op <= slack(2.0 * self.f_hs),
            2.0 * self.f_hs <= slack(2.0 * n as f64 * self.f_max),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InjectivityReport {
    #[serde(rename = "N")]
    pub n: usize,
    pub epsilon: f64,
    pub epsilon_node: usize,
    /// ε on the doubled grid, when the model can be regridded.
    pub epsilon_refined: Option<f64>,
    pub needs_refinement: bool,
    /// `N^{3/2} ε ≤ 1/4`.
    pub hypothesis_ok: bool,
    /// Every Λ row reached its target and `‖Λ‖_op, ‖Λ⁻¹‖_op ≤ 2`.
    pub lambda_ok: bool,
    pub lambda_rows_converged: usize,
    pub d_sq: Vec<f64>,
    /// `d⁻²` from `(Λ + F)1 = Λ d⁻²`.
    pub d_inv_sq_linear: Vec<f64>,
    pub route_gap: f64,
    pub bound: f64,
    pub distance_op: f64,
    pub inv_sq_ok: bool,
    pub d_sq_in_band: bool,
    pub chain: NormChain,
    #[serde(serialize_with = "crate::report::serialize_real_matrix")]
    pub lambda: DMatrix<f64>,
    #[serde(serialize_with = "crate::report::serialize_real_matrix")]
    pub f_matrix: DMatrix<f64>,
    pub status: String,
    /// Withheld when `N^{3/2} ε > 1/4`.
    pub pass: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct InjectivityOptions {
    pub floor: f64,
    pub moment_tol: f64,
    /// Tolerance of the two-route agreement.
    pub route_tol: f64,
    pub refine: bool,
}

impl InjectivityOptions {
    pub fn new(k: u32) -> Self {
        InjectivityOptions {
            floor: crate::moments::default_floor(k),
            moment_tol: 1e-11,
            route_tol: 1e-8,
            refine: true,
        }
    }
}

pub fn verify_injectivity(
    model: &ManifoldModel,
    h: &HermitianForm,
    h2: &HermitianForm,
    opts: &InjectivityOptions,
) -> Result<InjectivityReport> {
    let n = model.n_sections();
    let nf = n as f64;
    let cmp = compare_fs(model, h, h2)?;
    let eps = cmp.epsilon;
    let hypothesis_ok = nf.powf(1.5) * eps <= 0.25;

    let epsilon_refined = match (opts.refine, model.grid()) {
        (true, Some(g)) => {
            let fine = model.regrid(GridShape {
                radial: 2 * g.radial,
                azimuthal: 2 * g.azimuthal,
            })?;
            Some(compare_fs(&fine, h, h2)?.epsilon)
        }
        _ => None,
    };
    let needs_refinement = epsilon_refined.is_some_and(|e| (e - eps).abs() > REFINE_TOL);

    let gauge_model = model.with_basis(&cmp.gauge)?;
    let built: LambdaBuild = build_lambda_best_effort(&gauge_model, opts.floor, opts.moment_tol)?;
    let lambda = built.lambda.clone();
    let fm = f_matrix(&gauge_model, &cmp.f, &built.densities)?;

    let lam_c = lambda.map(|x| c64(x, 0.0));
    let lambda_op = op_norm(&lam_c);
    let lam_inv = lambda.clone().try_inverse();
    let lambda_inv_op = lam_inv.as_ref().map_or(f64::INFINITY, |m| op_norm(&m.map(|x| c64(x, 0.0))));
    let rows_converged = built.rows.iter().filter(|r| r.converged).count();
    let lambda_ok = rows_converged == n && lambda_op <= 2.0 && lambda_inv_op <= 2.0;

    let d_inv_sq: Vec<f64> = cmp.d_sq.iter().map(|d| 1.0 / d).collect();
    let (d_inv_sq_linear, lambda_inv_f_op) = match &lam_inv {
        Some(li) => {
            let lf = li * &fm;
            let v = &lf * DVector::from_element(n, 1.0);
            ((0..n).map(|i| 1.0 + v[i]).collect(), op_norm(&lf.map(|x| c64(x, 0.0))))
        }
        None => (vec![f64::NAN; n], f64::INFINITY),
    };
    let route_gap = d_inv_sq
        .iter()
        .zip(&d_inv_sq_linear)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) });

    let fnorms = real_norms(&fm)?;
    let inv_sq_defect = d_inv_sq.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max);
    let chain = NormChain {
        f_max: fnorms.max,
        f_hs: fnorms.hs,
        f_op: fnorms.op,
        lambda_op,
        lambda_inv_op,
        lambda_inv_f_op,
        inv_sq_defect,
    };
    let bound = 2.0 * nf * nf * eps;
    // from the difference, so that H2 = H gives exactly 0
    let diff = &cmp.l_inv * (h.matrix() - h2.matrix()) * cmp.l_inv.adjoint();
    let distance_op = op_norm(&diff);
    let inv_sq_ok = inv_sq_defect <= 2.0 * nf.powf(1.5) * eps;
    let d_sq_in_band = cmp.d_sq.iter().all(|d| (d - 1.0).abs() < bound) || eps == 0.0 && distance_op == 0.0;
    let conclusion = distance_op <= bound;

    let mut problems = Vec::new();
    if !hypothesis_ok {
        problems.push("hypothesis not met");
    }
    if !lambda_ok {
        problems.push("k not large enough");
    }
    if route_gap > opts.route_tol {
        problems.push("routes disagree");
    }
    let pass = hypothesis_ok.then_some(conclusion);
    let status = if problems.is_empty() {
        if conclusion { "pass" } else { "fail" }.to_string()
    } else {
        problems.join("; ")
    };
    Ok(InjectivityReport {
        n,
        epsilon: eps,
        epsilon_node: cmp.argmax_node,
        epsilon_refined,
        needs_refinement,
        hypothesis_ok,
        lambda_ok,
        lambda_rows_converged: rows_converged,
        d_sq: cmp.d_sq,
        d_inv_sq_linear,
        route_gap,
        bound,
        distance_op,
        inv_sq_ok,
        d_sq_in_band,
        chain,
        lambda,
        f_matrix: fm,
        status,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub trial: usize,
    pub epsilon: f64,
    pub bound: f64,
    pub distance: f64,
    pub hypothesis_ok: bool,
    pub pass: Option<bool>,
    pub inv_sq_defect: f64,
    pub inv_sq_bound: f64,
    pub route_gap: f64,
    pub lambda_ok: bool,
    pub chain_links_ok: bool,
}

/// Pair `(H, H2)` with `H2 = H^{1/2}(I + δP)H^{1/2}`, `P` a random hermitian
/// direction of unit operator norm, `H` random with condition number ≤ 10.
pub fn sweep_pair(rng: &mut crate::random::SeededRng, n: usize, delta: f64) -> (HermitianForm, HermitianForm) {
    let h = random_pd(rng, n, 10.0);
    let p = random_hermitian(rng, n);
    let root = h.map_spectrum(f64::sqrt);
    let inner = CMat::identity(n, n) + p.matrix() * c64(delta, 0.0);
    let h2 = HermitianForm::new(root.matrix() * inner * root.matrix()).expect("congruence of hermitian is hermitian");
    (h, h2)
}

pub fn inject_sweep(
    model: &ManifoldModel,
    trials: usize,
    seed: u64,
    delta: f64,
    opts: &InjectivityOptions,
) -> Result<(Vec<SweepRow>, Vec<InjectivityReport>)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Config(format!("perturbation scale {delta} must lie in (0, 1)")));
    }
    let n = model.n_sections();
    let mut rng = seeded(seed);
    let mut rows = Vec::with_capacity(trials);
    let mut reports = Vec::with_capacity(trials);
    for trial in 0..trials {
        let (h, h2) = sweep_pair(&mut rng, n, delta);
        let r = verify_injectivity(model, &h, &h2, opts).map_err(Error::at_iteration(trial))?;
        rows.push(SweepRow {
            trial,
            epsilon: r.epsilon,
            bound: r.bound,
            distance: r.distance_op,
            hypothesis_ok: r.hypothesis_ok,
            pass: r.pass,
            inv_sq_defect: r.chain.inv_sq_defect,
            inv_sq_bound: 2.0 * (n as f64).powf(1.5) * r.epsilon,
            route_gap: r.route_gap,
            lambda_ok: r.lambda_ok,
            chain_links_ok: r.chain.links(n).iter().all(|b| *b),
        });
        reports.push(r);
    }
    Ok((rows, reports))
}

/// Default sweep scale: keeps `N^{3/2} ε` comfortably under 1/4.
pub fn default_sweep_scale(n: usize) -> f64 {
    0.1 / (n as f64).powf(1.5)
}
