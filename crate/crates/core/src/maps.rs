//! The Hilbert map, its fixed-volume variants and the Fubini–Study
//! iteration built from composing Hilb with FS.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::model::weighted_gram;
use crate::geometry::{curvature_volume_with, fs_metric, Density, ManifoldModel, MetricWeight};
use crate::linalg::{max_norm, HermitianForm};
use crate::par::Exec;

/// Which volume form is paired against `h^k`.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeVariant {
    /// A metric-independent measure.
    Fixed(Density),
    /// `dν^{ac}(e^{-φ}h) = e^{-φ} dν^{ac}(h)`, for `L = -K_X`.
    Anticanonical,
    /// `dν^{can}(e^{-φ}h) = e^{φ} dν^{can}(h)`, for `L = K_X`.
    Canonical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantKind {
    Fixed,
    Anticanonical,
    Canonical,
}

impl VolumeVariant {
    pub fn kind(&self) -> VariantKind {
        match self {
            VolumeVariant::Fixed(_) => VariantKind::Fixed,
            VolumeVariant::Anticanonical => VariantKind::Anticanonical,
            VolumeVariant::Canonical => VariantKind::Canonical,
        }
    }
}

/// A positive rational `num/den`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Ratio {
    pub num: u32,
    pub den: u32,
}

impl Ratio {
    pub fn value(self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

/// Power `c` in `h̃ = exp(c(φ+ψ)) h` for the realising metric.
pub fn exponent_for_variant(kind: VariantKind, k: u32) -> Result<Ratio> {
    if k == 0 {
        return Err(Error::Config("k must be positive".into()));
    }
    let den = match kind {
        VariantKind::Fixed => k,
        VariantKind::Anticanonical => k + 1,
        VariantKind::Canonical if k == 1 => {
            return Err(Error::Domain("canonical exponent 1/(k-1) is undefined at k = 1".into()))
        }
        VariantKind::Canonical => k - 1,
    };
    Ok(Ratio { num: 1, den })
}

/// `(N/V) ∫ h^k(s_i, s_j) ω_h`.
pub fn hilb(model: &ManifoldModel, m: &MetricWeight) -> Result<HermitianForm> {
    hilb_with(Exec::default(), model, m)
}

pub fn hilb_with(exec: Exec, model: &ManifoldModel, m: &MetricWeight) -> Result<HermitianForm> {
    let vol = curvature_volume_with(exec, model, m)?;
    let u = m.potential();
    let refw = model.ref_weight();
    let w: Vec<f64> = (0..model.n_nodes())
        .map(|x| refw[x] * (-u[x]).exp() * vol.weights[x])
        .collect();
    gram_output(exec, model, &w)
}

/// `(N/V) ∫ h^k(s_i, s_j) dν` with `ν` chosen by `variant`.
pub fn hilb_nu(model: &ManifoldModel, m: &MetricWeight, variant: &VolumeVariant) -> Result<HermitianForm> {
    let w = hilb_nu_weights(model, m, variant)?;
    gram_output(Exec::default(), model, &w)
}

/// Node weights `h^k(frame) · dν` used by [`hilb_nu`].
pub fn hilb_nu_weights(model: &ManifoldModel, m: &MetricWeight, variant: &VolumeVariant) -> Result<Vec<f64>> {
    let q = model.n_nodes();
    let u = m.potential();
    if u.len() != q {
        return Err(Error::Dimension("metric potential length differs from node count".into()));
    }
    let k = model.k() as f64;
    let refw = model.ref_weight();
    let (power, base): (f64, &[f64]) = match variant {
        VolumeVariant::Fixed(nu) => {
            if nu.len() != q {
                return Err(Error::Dimension(format!("ν has {} weights for {q} nodes", nu.len())));
            }
            if !(nu.min_weight() > 0.0) {
                return Err(Error::Domain("fixed ν must be strictly positive".into()));
            }
            (1.0, &nu.weights)
        }
        VolumeVariant::Anticanonical => {
            if !model.is_fano_anticanonical() {
                return Err(Error::Domain("anticanonical variant requires L = -K_X on a Fano model".into()));
            }
            (1.0 + 1.0 / k, model.quad_weights())
        }
        VolumeVariant::Canonical => {
            if !model.is_general_type() {
                return Err(Error::Domain("canonical variant requires general type".into()));
            }
            (1.0 - 1.0 / k, model.quad_weights())
        }
    };
    Ok((0..q).map(|x| refw[x] * (-power * u[x]).exp() * base[x]).collect())
}

fn gram_output(exec: Exec, model: &ManifoldModel, w: &[f64]) -> Result<HermitianForm> {
    let scale = model.n_sections() as f64 / model.volume();
    let g = weighted_gram(exec, model.sections(), w) * crate::linalg::c64(scale, 0.0);
    let g = HermitianForm::new(g)?;
    crate::linalg::cholesky_lower(&g).map_err(|e| match e {
        Error::NotPositiveDefinite { pivot, value } => Error::Numerical(format!(
            "Gram matrix lost definiteness at pivot {pivot} ({value:.3e}); refine the quadrature"
        )),
        other => other,
    })?;
    Ok(g)
}

/// Log of the `H ↦ Hilb(FS(H))` iteration.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceTrace {
    /// Unit-determinant iterates, starting with the normalised `H_0`.
    pub forms: Vec<HermitianForm>,
    /// `‖H_{r+1} − H_r‖_max` after normalisation.
    pub steps: Vec<f64>,
    /// `tr(H_r⁻¹ Hilb(FS(H_r))) − N`.
    pub trace_defects: Vec<f64>,
    pub converged: bool,
}

pub fn unit_determinant(h: &HermitianForm) -> HermitianForm {
    let n = h.dim() as f64;
    let logdet: f64 = h.eigenvalues().iter().map(|l| l.ln()).sum();
    h.scaled((-logdet / n).exp())
}

pub fn t_iterate(model: &ManifoldModel, h0: &HermitianForm, max_iters: usize, tol: f64) -> Result<BalanceTrace> {
    if !(tol > 0.0) {
        return Err(Error::Config("tolerance must be positive".into()));
    }
    crate::linalg::cholesky_lower(h0)?;
    let n = h0.dim() as f64;
    let mut cur = unit_determinant(h0);
    let mut trace = BalanceTrace {
        forms: vec![cur.clone()],
        steps: Vec::new(),
        trace_defects: Vec::new(),
        converged: false,
    };
    for it in 0..max_iters {
        let step = || -> Result<(HermitianForm, f64)> {
            let next = hilb(model, &fs_metric(model, &cur)?)?;
            let inv = cur.inverse()?;
            let tr = (inv.matrix() * next.matrix()).trace().re;
            Ok((next, tr - n))
        };
        let (next, defect) = step().map_err(Error::at_iteration(it))?;
        let next = unit_determinant(&next);
        let dist = max_norm(&(next.matrix() - cur.matrix()));
        trace.steps.push(dist);
        trace.trace_defects.push(defect);
        trace.forms.push(next.clone());
        cur = next;
        if dist < tol {
            trace.converged = true;
            break;
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::model::binomial;
    use crate::geometry::{build_p1_model, reference_metric};
    use crate::linalg::{c64, CMat};
    use crate::random::{complex_gaussian, random_pd, seeded};

    fn binomial_diag(k: u32) -> Vec<f64> {
        (0..=k).map(|j| 1.0 / binomial(k, j)).collect()
    }

    fn assert_diag(h: &HermitianForm, d: &[f64], tol: f64) {
        let want = HermitianForm::from_real_diagonal(d);
        let err = max_norm(&(h.matrix() - want.matrix()));
        assert!(err < tol, "error {err:e}");
    }

    #[test]
    fn reference_gram_is_binomial() {
        let m = build_p1_model(1, 3, 4).unwrap();
        assert_diag(&hilb(&m, &reference_metric(&m)).unwrap(), &[1.0, 1.0], 1e-14);
        let m = build_p1_model(2, 6, 12).unwrap();
        assert_diag(&hilb(&m, &reference_metric(&m)).unwrap(), &[1.0, 0.5, 1.0], 1e-14);
        for k in 1..=10 {
            let m = ManifoldModel::p1_default(1, k).unwrap();
            assert_diag(&hilb(&m, &reference_metric(&m)).unwrap(), &binomial_diag(k), 1e-10);
        }
    }

    #[test]
    fn constant_rescaling_scales_output() {
        let m = ManifoldModel::p1_default(1, 3).unwrap();
        let fs = fs_metric(&m, &random_pd(&mut seeded(1), 4, 10.0)).unwrap();
        let a = hilb(&m, &fs).unwrap();
        let b = hilb(&m, &fs.scaled(3.0)).unwrap();
        assert!(max_norm(&(a.matrix() * c64(3.0, 0.0) - b.matrix())) < 1e-12 * max_norm(b.matrix()));
    }

    #[test]
    fn basis_change_equivariance() {
        let mut rng = seeded(17);
        let m = ManifoldModel::p1_default(1, 3).unwrap();
        let a = CMat::from_fn(4, 4, |_, _| complex_gaussian(&mut rng)) + CMat::identity(4, 4) * c64(2.0, 0.0);
        let ma = m.with_basis(&a).unwrap();
        let u: Vec<f64> = m.nodes().iter().map(|n| 0.3 * n.z.re / (1.0 + n.z.norm_sqr())).collect();
        let metric = MetricWeight::Grid { potential: u };
        let g = hilb(&m, &metric).unwrap();
        let ga = hilb(&ma, &metric).unwrap();
        let want = g.congruence(&a);
        assert!(max_norm(&(ga.matrix() - want.matrix())) < 1e-12 * max_norm(want.matrix()));
    }

    #[test]
    fn balanced_trace_identity() {
        let mut rng = seeded(23);
        for k in [2u32, 4] {
            let m = ManifoldModel::p1_default(1, k).unwrap();
            for _ in 0..10 {
                let h = random_pd(&mut rng, k as usize + 1, 100.0);
                let g = hilb(&m, &fs_metric(&m, &h).unwrap()).unwrap();
                let tr = (h.inverse().unwrap().matrix() * g.matrix()).trace().re;
                assert!((tr - (k + 1) as f64).abs() < 1e-8, "tr={tr}");
            }
        }
    }

    #[test]
    fn fixed_variant_with_own_volume_is_hilb() {
        let m = build_p1_model(2, 6, 12).unwrap();
        let r = reference_metric(&m);
        let g = hilb_nu(&m, &r, &VolumeVariant::Fixed(m.reference_density())).unwrap();
        assert_diag(&g, &[1.0, 0.5, 1.0], 1e-14);
    }

    #[test]
    fn fixed_variant_is_monotone_in_nu() {
        use crate::geometry::Density;
        let m = ManifoldModel::p1_default(1, 3).unwrap();
        let r = reference_metric(&m);
        let nu1 = m.reference_density();
        let bump: Vec<f64> = m
            .nodes()
            .iter()
            .zip(m.quad_weights())
            .map(|(n, w)| w * (1.0 + (n.z.re * 3.0).sin().powi(2)))
            .collect();
        let nu2 = Density::new(bump).unwrap();
        let g1 = hilb_nu(&m, &r, &VolumeVariant::Fixed(nu1)).unwrap();
        let g2 = hilb_nu(&m, &r, &VolumeVariant::Fixed(nu2)).unwrap();
        let diff = HermitianForm::new(g2.matrix() - g1.matrix()).unwrap();
        assert!(diff.eigenvalues()[0] > -1e-14);
    }

    #[test]
    fn anticanonical_scaling_law() {
        // e^{-φ} on L multiplies the integrand by e^{-(k+1)φ}
        let k = 3;
        let m = ManifoldModel::p1(2, k, crate::geometry::default_grid(2 * k)).unwrap();
        let r = reference_metric(&m);
        let g0 = hilb_nu(&m, &r, &VolumeVariant::Anticanonical).unwrap();
        let phi: f64 = 0.2;
        let shifted = r.scaled((-phi * k as f64).exp());
        let g1 = hilb_nu(&m, &shifted, &VolumeVariant::Anticanonical).unwrap();
        let factor = (-(k as f64 + 1.0) * phi).exp();
        assert!(max_norm(&(g0.matrix() * c64(factor, 0.0) - g1.matrix())) < 1e-13);
        let d: Vec<f64> = (0..=2 * k).map(|j| 1.0 / binomial(2 * k, j)).collect();
        assert_diag(&g0, &d, 1e-12);
    }

    #[test]
    fn variant_model_mismatch() {
        let m = build_p1_model(2, 6, 12).unwrap();
        let r = reference_metric(&m);
        assert!(matches!(hilb_nu(&m, &r, &VolumeVariant::Canonical), Err(Error::Domain(_))));
        assert!(matches!(hilb_nu(&m, &r, &VolumeVariant::Anticanonical), Err(Error::Domain(_))));
    }

    #[test]
    fn canonical_mock_scaling_law() {
        let m = build_p1_model(2, 6, 12).unwrap();
        let mock = ManifoldModel::abstract_model(
            2,
            1.0,
            m.sections().clone(),
            m.quad_weights().to_vec(),
            m.ref_weight().to_vec(),
            false,
            true,
        )
        .unwrap();
        let r = MetricWeight::Grid { potential: vec![0.0; mock.n_nodes()] };
        let g0 = hilb_nu(&mock, &r, &VolumeVariant::Canonical).unwrap();
        let phi: f64 = 0.3;
        let g1 = hilb_nu(&mock, &r.scaled((-phi * 2.0).exp()), &VolumeVariant::Canonical).unwrap();
        // e^{-kφ} from h^k and e^{+φ} from ν
        let factor = (-phi).exp();
        assert!(max_norm(&(g0.matrix() * c64(factor, 0.0) - g1.matrix())) < 1e-13);
    }

    #[test]
    fn exponents() {
        assert_eq!(exponent_for_variant(VariantKind::Fixed, 4).unwrap().value(), 0.25);
        assert_eq!(exponent_for_variant(VariantKind::Anticanonical, 4).unwrap().value(), 0.2);
        assert_eq!(exponent_for_variant(VariantKind::Canonical, 4).unwrap(), Ratio { num: 1, den: 3 });
        assert!(matches!(exponent_for_variant(VariantKind::Canonical, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn balanced_start_is_fixed() {
        for k in 1..=8 {
            let m = ManifoldModel::p1_default(1, k).unwrap();
            let h0 = HermitianForm::from_real_diagonal(&binomial_diag(k));
            let tr = t_iterate(&m, &h0, 3, 1e-10).unwrap();
            assert!(tr.steps[0] < 1e-10);
            assert!(tr.converged);
        }
    }

    #[test]
    fn iteration_from_identity_converges_to_balanced() {
        let m = build_p1_model(2, 40, 80).unwrap();
        let tr = t_iterate(&m, &HermitianForm::identity(3), 200, 1e-10).unwrap();
        assert!(tr.converged);
        let last = tr.forms.last().unwrap();
        let want = unit_determinant(&HermitianForm::from_real_diagonal(&[1.0, 0.5, 1.0]));
        assert!(max_norm(&(last.matrix() - want.matrix())) < 1e-8);
        assert!(tr.trace_defects.iter().all(|d| d.abs() < 1e-8));
    }
}
