//! Monge–Ampère on curves and the constructive surjectivity pipelines.
//!
//! Scalar convention on a curve: `i∂∂̄f = ½ Δ_ω f · ω`, so the equation
//! `(ω + (i/2πk) ∂∂̄f) = e^{f+g} ω` becomes `1 + Δ_ω f / (4πk) = e^{f+g}`.
//! With `ω` of mass `d` (the degree of `L`) on the round unit sphere this is
//! `1 + Δ_{S²} f / (k d) = e^{f+g}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{
    density_ratio, fs_metric, grid_metric, veronese_model, ManifoldModel, MetricWeight, ModelKind,
};
use crate::linalg::{frob_dot, hermitian_basis, max_norm, HermitianForm};
use crate::maps::{exponent_for_variant, hilb, hilb_nu, VariantKind, VolumeVariant};
use crate::moments::{self, MomentOptions};
use crate::pushforward::{solve_psi, ContinuationOptions, ContinuationTrace, SimplexPoint};

/// Targets with a larger condition number are refused.
pub const MAX_TARGET_COND: f64 = 1e8;

#[derive(Debug, Clone)]
pub struct MAProblem<'a> {
    model: &'a ManifoldModel,
    g: Vec<f64>,
}

impl<'a> MAProblem<'a> {
    pub fn new(model: &'a ManifoldModel, g: Vec<f64>) -> Result<Self> {
        if !matches!(model.kind(), ModelKind::P1 { .. }) {
            return Err(Error::Domain("Monge–Ampère is implemented on ℙ¹ only".into()));
        }
        model.sphere()?;
        if g.len() != model.n_nodes() {
            return Err(Error::Dimension(format!("g has {} values for {} nodes", g.len(), model.n_nodes())));
        }
        if let Some(i) = g.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("g is not finite at node {i}")));
        }
        Ok(MAProblem { model, g })
    }

    pub fn model(&self) -> &ManifoldModel {
        self.model
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MASolution {
    #[serde(skip)]
    pub f: Vec<f64>,
    /// Constant subtracted from `g` so that `∫ e^g dV = V`.
    pub g_shift: f64,
    /// Max pointwise residual after each accepted Newton step (first entry at `f = 0`).
    pub residual_history: Vec<f64>,
    pub cg_iterations: Vec<usize>,
    /// Smallest value of `1 + Δf/(kd)` over the nodes.
    pub min_density: f64,
    /// `|∫ (1 + Δf/(kd)) dV − V|`.
    pub mass_defect: f64,
}

impl MASolution {
    pub fn residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::INFINITY)
    }
}

struct MaOperator<'a> {
    model: &'a ManifoldModel,
    /// `k d`
    scale: f64,
}

impl MaOperator<'_> {
    fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.model.sphere().expect("checked in MAProblem::new").laplacian(f)
    }

    fn residual(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lap = self.laplacian(f);
        let e: Vec<f64> = f.iter().zip(g).map(|(a, b)| (a + b).exp()).collect();
        let r = (0..f.len()).map(|x| 1.0 + lap[x] / self.scale - e[x]).collect();
        (r, e)
    }

    fn dot(&self, a: &[f64], b: &[f64]) -> f64 {
        self.model.quad_weights().iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * x * y).sum()
    }

    /// Solves `(D − Δ/(kd)) δ = r` by conjugate gradients in the quadrature
    /// inner product, where the operator is self-adjoint and positive. The
    /// preconditioner inverts the same operator with `D` replaced by its mean.
    fn solve_linear(&self, d: &[f64], r: &[f64], rel_tol: f64) -> (Vec<f64>, usize) {
        let sphere = self.model.sphere().expect("checked in MAProblem::new");
        let vol = self.model.volume();
        let dbar = self.dot(d, &vec![1.0; d.len()]) / vol;
        let scale = self.scale;
        let precondition = |v: &[f64]| -> Vec<f64> {
            let shaped = sphere.apply_degree_multiplier(v, |l| 1.0 / (dbar + (l * (l + 1)) as f64 / scale) - 1.0 / dbar);
            v.iter().zip(shaped).map(|(a, b)| a / dbar + b).collect()
        };
        let apply = |v: &[f64]| -> Vec<f64> {
            let lap = sphere.laplacian(v);
            (0..v.len()).map(|x| d[x] * v[x] - lap[x] / scale).collect()
        };
        let n = r.len();
        let mut x = vec![0.0; n];
        let mut res = r.to_vec();
        let mut z = precondition(&res);
        let mut p = z.clone();
        let mut rz = self.dot(&res, &z);
        let r0 = self.dot(r, r).sqrt();
        let mut iters = 0;
        while iters < 500 && self.dot(&res, &res).sqrt() > rel_tol * r0 {
            let ap = apply(&p);
            let alpha = rz / self.dot(&p, &ap);
            for i in 0..n {
                x[i] += alpha * p[i];
                res[i] -= alpha * ap[i];
            }
            z = precondition(&res);
            let rz_next = self.dot(&res, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iters += 1;
        }
        (x, iters)
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Damped Newton for `1 + Δf/(kd) = e^{f+g}` by pointwise collocation.
/// Every accepted step strictly lowers the max residual.
pub fn solve_ma(p: &MAProblem, tol: f64, max_newton: usize) -> Result<MASolution> {
    let model = p.model;
    let scale = model
        .section_degree()
        .ok_or_else(|| Error::Domain("Monge–Ampère needs a ℙ¹ model".into()))? as f64;
    let vol = model.volume();
    let mass_g: f64 = p.g.iter().zip(model.quad_weights()).map(|(g, w)| g.exp() * w).sum();
    let g_shift = (mass_g / vol).ln();
    let g: Vec<f64> = p.g.iter().map(|v| v - g_shift).collect();

    let op = MaOperator { model, scale };
    let mut f = vec![0.0; g.len()];
    let (mut r, mut e) = op.residual(&f, &g);
    let mut history = vec![sup(&r)];
    let mut cg_iterations = Vec::new();
    while *history.last().unwrap() > tol {
        if cg_iterations.len() >= max_newton {
            return Err(Error::Convergence {
                solver: "Monge–Ampère Newton",
                reason: format!("no convergence in {max_newton} steps"),
                history,
            });
        }
        let (delta, iters) = op.solve_linear(&e, &r, 1e-13);
        cg_iterations.push(iters);
        let current = *history.last().unwrap();
        let mut step = 1.0;
        let accepted = loop {
            let trial: Vec<f64> = f.iter().zip(&delta).map(|(a, b)| a + step * b).collect();
            let (rt, et) = op.residual(&trial, &g);
            let rs = sup(&rt);
            if rs.is_finite() && rs < current {
                break Some((trial, rt, et, rs));
            }
            step *= 0.5;
            if step < 1e-10 {
                break None;
            }
        };
        let Some((nf, nr, ne, rs)) = accepted else {
            return Err(Error::Convergence {
                solver: "Monge–Ampère Newton",
                reason: "line search found no residual decrease".into(),
                history,
            });
        };
        f = nf;
        r = nr;
        e = ne;
        history.push(rs);
    }

    let lap = op.laplacian(&f);
    let density: Vec<f64> = lap.iter().map(|l| 1.0 + l / scale).collect();
    let (node, min_density) = density
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if !(min_density > 0.0) {
        return Err(Error::CurvaturePositivity {
            node,
            density: min_density,
        });
    }
    let mass: f64 = density.iter().zip(model.quad_weights()).map(|(d, w)| d * w).sum();
    Ok(MASolution {
        f,
        g_shift,
        residual_history: history,
        cg_iterations,
        min_density,
        mass_defect: (mass - vol).abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SurjectMode {
    Full,
    Fixed,
    Anticanonical,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageLog {
    pub stage: &'static str,
    pub detail: String,
    pub residual: Option<f64>,
}

/// Necessary conditions for `G` to be a Gram matrix `∫ s sᴴ dμ` of a
/// positive measure when the sections are the monomials `z^j` on ℙ¹.
#[derive(Debug, Clone, Serialize)]
pub struct ConeDiagnostics {
    /// `max_j (G_jj² − G_{j−1,j−1} G_{j+1,j+1}) / G_jj²`, clipped at 0.
    pub diagonal_log_concavity: f64,
    /// `max (|G_ab| − G_cc) / G_cc` over `a + b = 2c`, clipped at 0.
    pub midpoint_domination: f64,
}

impl ConeDiagnostics {
    /// True when one of the conditions is violated beyond rounding, which
    /// proves no metric reaches `G`.
    pub fn certifies_unreachable(&self) -> bool {
        self.diagonal_log_concavity > 1e-10 || self.midpoint_domination > 1e-10
    }
}

/// Cauchy–Schwarz obstructions in the monomial basis. `None` for models
/// whose sections are not monomials.
pub fn cone_diagnostics(model: &ManifoldModel, g: &HermitianForm) -> Option<ConeDiagnostics> {
    let n = model.n_sections();
    if model.section_degree().is_none() || *model.basis() != crate::linalg::CMat::identity(n, n) || g.dim() != n {
        return None;
    }
    let d: Vec<f64> = (0..n).map(|j| g.get(j, j).re).collect();
    let diagonal_log_concavity = moments::log_concavity_violation(&d);
    let mut midpoint_domination: f64 = 0.0;
    for a in 0..n {
        for b in a + 2..n {
            if (a + b) % 2 == 0 {
                let c = (a + b) / 2;
                midpoint_domination = midpoint_domination.max((g.get(a, b).norm() - d[c]) / d[c]);
            }
        }
    }
    Some(ConeDiagnostics {
        diagonal_log_concavity,
        midpoint_domination,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SurjectivityReport {
    pub mode: SurjectMode,
    pub target: HermitianForm,
    pub achieved: HermitianForm,
    /// `‖achieved − target‖_max`, recomputed by the forward map.
    pub residual_max: f64,
    pub tol: f64,
    /// Smallest curvature density ratio `ω_h̃ / ω_ref`; `None` off ℙ¹.
    pub positivity_margin: Option<f64>,
    pub stage_logs: Vec<StageLog>,
    pub cone: Option<ConeDiagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationTrace>,
    pub pass: bool,
}

fn validate_target(model: &ManifoldModel, g: &HermitianForm) -> Result<()> {
    if g.dim() != model.n_sections() {
        return Err(Error::Dimension(format!(
            "target is {}x{} but the model has {} sections",
            g.dim(),
            g.dim(),
            model.n_sections()
        )));
    }
    crate::linalg::cholesky_lower(g)?;
    let cond = g.condition_number();
    if cond > MAX_TARGET_COND {
        return Err(Error::Conditioning {
            cond,
            limit: MAX_TARGET_COND,
        });
    }
    Ok(())
}

fn positivity_margin(model: &ManifoldModel, m: &MetricWeight) -> Option<f64> {
    model.sphere().ok()?;
    let r = density_ratio(model, m).ok()?;
    Some(r.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Realises `G` as `Hilb_ν(h̃)`: a convex dual Newton finds `w` in the span of
/// `Re/Im(s_i s̄_j)·ref` with `(N/V) ∫ s_i s̄_j ref e^w dν = G`, and the
/// variant exponent turns `w` into the potential of `h̃`.
pub fn surject_fixed_volume(
    model: &ManifoldModel,
    g: &HermitianForm,
    variant: &VolumeVariant,
    tol: f64,
) -> Result<(MetricWeight, SurjectivityReport)> {
    validate_target(model, g)?;
    let (mode, base, power) = match variant {
        VolumeVariant::Fixed(nu) => {
            if nu.len() != model.n_nodes() {
                return Err(Error::Dimension(format!("ν has {} weights for {} nodes", nu.len(), model.n_nodes())));
            }
            if !(nu.min_weight() > 0.0) {
                return Err(Error::Domain("fixed ν must be strictly positive".into()));
            }
            (SurjectMode::Fixed, nu.weights.clone(), 1.0)
        }
        VolumeVariant::Anticanonical => {
            if !model.is_fano_anticanonical() {
                return Err(Error::Domain("anticanonical variant requires L = -K_X on a Fano model".into()));
            }
            // h^k·dν^{ac} picks up e^{-(1+1/k)u}, i.e. u = -w·k·e with e = 1/(k+1)
            let e = exponent_for_variant(VariantKind::Anticanonical, model.k())?.value();
            (SurjectMode::Anticanonical, model.quad_weights().to_vec(), 1.0 / (model.k() as f64 * e))
        }
        VolumeVariant::Canonical => {
            return Err(Error::Domain("the canonical variant is not supported by the fixed-volume pipeline".into()))
        }
    };
    let n = model.n_sections();
    let q = model.n_nodes();
    let basis = hermitian_basis(n);
    let s = model.sections();
    let refw = model.ref_weight();
    let profiles = nalgebra::DMatrix::from_fn(basis.len(), q, |a, x| {
        let e = &basis[a];
        let mut v = 0.0;
        for i in 0..n {
            for j in 0..n {
                // Re conj(E_ij) s_i conj(s_j)
                v += (e[(i, j)].conj() * s[(i, x)] * s[(j, x)].conj()).re;
            }
        }
        v * refw[x]
    });
    let scale = n as f64 / model.volume();
    let vol: Vec<f64> = base.iter().map(|b| b * scale).collect();
    let target: Vec<f64> = basis.iter().map(|e| frob_dot(e, g.matrix())).collect();
    let gmax = max_norm(g.matrix());
    let opts = MomentOptions {
        tol: (1e-12 * gmax.max(1.0)).min(1e-2 * tol),
        max_newton: 200,
    };
    let mut logs = Vec::new();
    let sol = moments::newton(&profiles, &vol, &target, &opts)?;
    logs.push(StageLog {
        stage: "moments",
        detail: format!(
            "{} Newton steps over {} real unknowns, converged: {}",
            sol.residual_history.len() - 1,
            basis.len(),
            sol.converged
        ),
        residual: Some(sol.residual()),
    });
    if !sol.converged {
        let cone = cone_diagnostics(model, g);
        let why = match &cone {
            Some(c) if c.certifies_unreachable() => " (target violates a moment-cone inequality)",
            _ => "",
        };
        return Err(Error::Stage {
            stage: "moments",
            source: Box::new(Error::Convergence {
                solver: "Gram moment Newton",
                reason: format!("best residual {:.3e}{why}", sol.residual()),
                history: sol.residual_history,
            }),
        });
    }
    let potential: Vec<f64> = (0..q)
        .map(|x| {
            let w: f64 = sol.coeffs.iter().enumerate().map(|(a, c)| c * profiles[(a, x)]).sum();
            -w / power
        })
        .collect();
    let metric = grid_metric(model, potential)?;
    let achieved = hilb_nu(model, &metric, variant).map_err(Error::at_stage("forward"))?;
    let residual_max = max_norm(&(achieved.matrix() - g.matrix()));
    logs.push(StageLog {
        stage: "forward",
        detail: "recomputed Hilb_ν of the constructed metric".into(),
        residual: Some(residual_max),
    });
    let report = SurjectivityReport {
        mode,
        target: g.clone(),
        achieved,
        residual_max,
        tol,
        positivity_margin: positivity_margin(model, &metric),
        stage_logs: logs,
        cone: cone_diagnostics(model, g),
        continuation: None,
        pass: residual_max <= tol,
    };
    Ok((metric, report))
}

#[derive(Debug, Clone, Copy)]
pub struct FullOptions {
    pub continuation: ContinuationOptions,
    pub ma_tol: f64,
    pub max_newton: usize,
}

impl Default for FullOptions {
    fn default() -> Self {
        FullOptions {
            continuation: ContinuationOptions::default(),
            ma_tol: 1e-12,
            max_newton: 40,
        }
    }
}

/// Realises `G` as `Hilb(h̃)` for a positively curved `h̃` on ℙ¹.
///
/// 1. `solve_psi` on the trace-normalised target gives `B` with
///    `Hilb(FS(B⁻²)) ∝ G`.
/// 2. The volume datum `e^g = c · (ω_{FS}/ω_ref) · e^{-u_FS}` with `c` fixed
///    by `tr G` feeds `solve_ma`.
/// 3. `h̃ = e^{-f}` on `L^k` is checked by recomputing `hilb`.
pub fn surject_full(
    model: &ManifoldModel,
    g: &HermitianForm,
    tol: f64,
    opts: &FullOptions,
) -> Result<(MetricWeight, SurjectivityReport)> {
    if !matches!(model.kind(), ModelKind::P1 { .. }) {
        return Err(Error::Domain("surject_full is implemented on ℙ¹ only".into()));
    }
    validate_target(model, g)?;
    let mut logs = Vec::new();

    let ambient = veronese_model(model);
    let simplex = SimplexPoint::from_gram_convention(g).map_err(Error::at_stage("psi"))?;
    let (b, trace) = solve_psi(&ambient, &simplex, &opts.continuation).map_err(Error::at_stage("psi"))?;
    logs.push(StageLog {
        stage: "psi",
        detail: format!("{} continuation steps, {} rejections", trace.rows.len(), trace.rejections),
        residual: trace.rows.last().map(|r| r.residual),
    });

    let (h, k_form, g_datum) = (|| {
        let binv = b.representative().inverse()?;
        let h = HermitianForm::new(binv.matrix() * binv.matrix())?;
        let fs = fs_metric(model, &h)?;
        let k_form = hilb(model, &fs)?;
        let c = g.trace() / k_form.trace();
        let rho = density_ratio(model, &fs)?;
        let datum: Vec<f64> = (0..model.n_nodes())
            .map(|x| c.ln() + rho[x].ln() - fs.potential()[x])
            .collect();
        Ok((h, k_form, datum))
    })()
    .map_err(Error::at_stage("weight"))?;
    let psi_residual = max_norm(&(k_form.scaled(g.trace() / k_form.trace()).matrix() - g.matrix()));
    logs.push(StageLog {
        stage: "weight",
        detail: format!("H = B⁻² with cond {:.3e}; Hilb(FS(H)) rescaled to tr G", h.condition_number()),
        residual: Some(psi_residual),
    });

    let problem = MAProblem::new(model, g_datum).map_err(Error::at_stage("monge-ampere"))?;
    let ma = solve_ma(&problem, opts.ma_tol, opts.max_newton).map_err(Error::at_stage("monge-ampere"))?;
    logs.push(StageLog {
        stage: "monge-ampere",
        detail: format!(
            "{} Newton steps, g shifted by {:.6e}, mass defect {:.3e}",
            ma.residual_history.len() - 1,
            ma.g_shift,
            ma.mass_defect
        ),
        residual: Some(ma.residual()),
    });

    // undo the pre-normalisation of g: a constant in the potential
    let potential: Vec<f64> = ma.f.iter().map(|f| f - ma.g_shift).collect();
    let metric = grid_metric(model, potential).map_err(Error::at_stage("assemble"))?;
    let achieved = hilb(model, &metric).map_err(Error::at_stage("assemble"))?;
    let residual_max = max_norm(&(achieved.matrix() - g.matrix()));
    let margin = positivity_margin(model, &metric);
    logs.push(StageLog {
        stage: "assemble",
        detail: "recomputed Hilb of h̃".into(),
        residual: Some(residual_max),
    });
    let report = SurjectivityReport {
        mode: SurjectMode::Full,
        target: g.clone(),
        achieved,
        residual_max,
        tol,
        positivity_margin: margin,
        stage_logs: logs,
        cone: cone_diagnostics(model, g),
        continuation: Some(trace),
        pass: residual_max <= tol && margin.is_some_and(|m| m > 0.0),
    };
    Ok((metric, report))
}
