use crate::error::{Error, Result};
use crate::geometry::model::{Density, ManifoldModel};
use crate::linalg::{cholesky_lower, orthonormalize_sections, CMat, HermitianForm, C64};
use crate::par::Exec;

/// Tolerance of the cohomological mass check on Bergman curvature volumes.
pub const MASS_TOL: f64 = 1e-8;

/// A hermitian metric `h_ref^k · e^{-u}` on `L^k`.
#[derive(Debug, Clone, PartialEq)]
pub enum MetricWeight {
    /// `FS(H)`; the potential is cached at construction.
    Bergman { form: HermitianForm, potential: Vec<f64> },
    /// Arbitrary potential sampled at the nodes.
    Grid { potential: Vec<f64> },
}

impl MetricWeight {
    pub fn potential(&self) -> &[f64] {
        match self {
            MetricWeight::Bergman { potential, .. } | MetricWeight::Grid { potential } => potential,
        }
    }

    /// The metric multiplied by the constant `c > 0`.
    pub fn scaled(&self, c: f64) -> MetricWeight {
        let shift = c.ln();
        let potential = self.potential().iter().map(|u| u - shift).collect();
        match self {
            MetricWeight::Bergman { form, .. } => MetricWeight::Bergman {
                form: form.scaled(c),
                potential,
            },
            MetricWeight::Grid { .. } => MetricWeight::Grid { potential },
        }
    }

    /// Forgets the algebraic structure.
    pub fn to_grid(&self) -> MetricWeight {
        MetricWeight::Grid {
            potential: self.potential().to_vec(),
        }
    }
}

pub fn reference_metric(model: &ManifoldModel) -> MetricWeight {
    MetricWeight::Grid {
        potential: vec![0.0; model.n_nodes()],
    }
}

pub fn grid_metric(model: &ManifoldModel, potential: Vec<f64>) -> Result<MetricWeight> {
    if potential.len() != model.n_nodes() {
        return Err(Error::Dimension(format!(
            "potential has {} values for {} nodes",
            potential.len(),
            model.n_nodes()
        )));
    }
    if let Some(i) = potential.iter().position(|u| !u.is_finite()) {
        return Err(Error::Domain(format!("potential is not finite at node {i}")));
    }
    Ok(MetricWeight::Grid { potential })
}

/// `FS(H)`: the metric making every H-orthonormal basis pointwise unit.
pub fn fs_metric(model: &ManifoldModel, h: &HermitianForm) -> Result<MetricWeight> {
    if h.dim() != model.n_sections() {
        return Err(Error::Dimension(format!(
            "form is {}x{} but the model has {} sections",
            h.dim(),
            h.dim(),
            model.n_sections()
        )));
    }
    let s = orthonormalize_sections(h, model.sections())?;
    let refw = model.ref_weight();
    let potential = (0..model.n_nodes())
        .map(|x| {
            let p: f64 = s.column(x).iter().map(|z| z.norm_sqr()).sum();
            (p * refw[x]).ln()
        })
        .collect();
    Ok(MetricWeight::Bergman {
        form: h.clone(),
        potential,
    })
}

/// Node weights of the curvature volume form `ω_m` of the metric on `L`.
pub fn curvature_volume(model: &ManifoldModel, m: &MetricWeight) -> Result<Density> {
    curvature_volume_with(Exec::default(), model, m)
}

pub fn curvature_volume_with(exec: Exec, model: &ManifoldModel, m: &MetricWeight) -> Result<Density> {
    let ratio = density_ratio_with(exec, model, m)?;
    if let Some(node) = (0..ratio.len()).find(|&x| !(ratio[x] > 0.0)) {
        return Err(Error::CurvaturePositivity {
            node,
            density: ratio[node],
        });
    }
    let weights: Vec<f64> = ratio.iter().zip(model.quad_weights()).map(|(r, w)| r * w).collect();
    let dens = Density { weights };
    if matches!(m, MetricWeight::Bergman { .. }) {
        let mass = dens.mass();
        if (mass - model.volume()).abs() > MASS_TOL {
            return Err(Error::MassDefect {
                mass,
                expected: model.volume(),
            });
        }
    }
    Ok(dens)
}

/// Pointwise ratio `ω_m / ω_ref`, without the positivity check.
pub fn density_ratio(model: &ManifoldModel, m: &MetricWeight) -> Result<Vec<f64>> {
    density_ratio_with(Exec::default(), model, m)
}

pub fn density_ratio_with(exec: Exec, model: &ManifoldModel, m: &MetricWeight) -> Result<Vec<f64>> {
    match m {
        MetricWeight::Bergman { form, .. } => bergman_ratio(exec, model, form),
        MetricWeight::Grid { potential } => {
            if potential.len() != model.n_nodes() {
                return Err(Error::Dimension("potential length differs from node count".into()));
            }
            let deg = model
                .section_degree()
                .ok_or_else(|| Error::Domain("grid curvature needs a ℙ¹ model".into()))?;
            if potential.iter().all(|u| *u == 0.0) {
                return Ok(vec![1.0; potential.len()]);
            }
            let lap = model.sphere()?.laplacian(potential);
            Ok(lap.iter().map(|l| 1.0 + l / deg as f64).collect())
        }
    }
}

/// Coefficient matrix `M` with `Σ|s'_i|² = v* M v` in monomials `v_b = z^b`.
pub fn monomial_contraction(model: &ManifoldModel, h: &HermitianForm) -> Result<CMat> {
    let l = cholesky_lower(h)?;
    let la = l
        .solve_lower_triangular(model.basis())
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    Ok(la.adjoint() * la)
}

/// `∂∂̄ log P · (1+|z|²)²` for `P = v* M v`, evaluated in whichever affine
/// chart keeps the coordinate inside the unit disc.
pub fn bergman_laplace_log(mc: &CMat, z: C64) -> f64 {
    let deg = mc.nrows() - 1;
    let flip = z.norm_sqr() > 1.0;
    let w = if flip { z.inv() } else { z };
    let mut v = vec![C64::default(); deg + 1];
    let mut dv = vec![C64::default(); deg + 1];
    // powers[e] = w^e
    let mut powers = vec![C64::new(1.0, 0.0); deg + 1];
    for e in 1..=deg {
        powers[e] = powers[e - 1] * w;
    }
    for b in 0..=deg {
        let e = if flip { deg - b } else { b };
        v[b] = powers[e];
        dv[b] = if e == 0 { C64::default() } else { powers[e - 1] * e as f64 };
    }
    let (mut p, mut pz, mut pzz) = (0.0, C64::default(), 0.0);
    for a in 0..=deg {
        let (mut mv, mut mdv) = (C64::default(), C64::default());
        for b in 0..=deg {
            mv += mc[(a, b)] * v[b];
            mdv += mc[(a, b)] * dv[b];
        }
        p += (v[a].conj() * mv).re;
        pz += v[a].conj() * mdv;
        pzz += (dv[a].conj() * mdv).re;
    }
    let r = 1.0 + w.norm_sqr();
    (p * pzz - pz.norm_sqr()) / (p * p) * r * r
}

fn bergman_ratio(exec: Exec, model: &ManifoldModel, h: &HermitianForm) -> Result<Vec<f64>> {
    let deg = model
        .section_degree()
        .ok_or_else(|| Error::Domain("analytic Bergman curvature needs a ℙ¹ model".into()))?;
    let mc = monomial_contraction(model, h)?;
    let scale = 1.0 / deg as f64;
    let nodes = model.nodes();
    Ok(exec.map(nodes.len(), |x| bergman_laplace_log(&mc, nodes[x].z) * scale))
}

/// `log(ω_{m1}/ω_{m2})` at every node.
pub fn beta_function(model: &ManifoldModel, m1: &MetricWeight, m2: &MetricWeight) -> Result<Vec<f64>> {
    let a = curvature_volume(model, m1)?;
    let b = curvature_volume(model, m2)?;
    Ok(a.weights.iter().zip(&b.weights).map(|(x, y)| (x / y).ln()).collect())
}
