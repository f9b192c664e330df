use crate::geometry::model::ManifoldModel;
use crate::linalg::{CMat, C64};

/// The image of `ι: X → ℙ^{N-1}` sampled at the model nodes: homogeneous
/// coordinates `Z_i = s_i(x)` in the trivialising frame.
#[derive(Debug, Clone)]
pub struct AmbientModel {
    model: ManifoldModel,
    norm_sq: Vec<f64>,
}

pub fn veronese_model(model: &ManifoldModel) -> AmbientModel {
    let s = model.sections();
    let norm_sq = (0..model.n_nodes())
        .map(|x| s.column(x).iter().map(|z| z.norm_sqr()).sum())
        .collect();
    AmbientModel {
        model: model.clone(),
        norm_sq,
    }
}

impl AmbientModel {
    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    /// Ambient dimension plus one.
    pub fn n(&self) -> usize {
        self.model.n_sections()
    }

    pub fn coords(&self) -> &CMat {
        self.model.sections()
    }

    /// `Σ_l |Z_l|²` at node `x`.
    pub fn norm_sq(&self, x: usize) -> f64 {
        self.norm_sq[x]
    }

    /// `h̃(Z_i, Z_j) = Z_i conj(Z_j) / Σ|Z_l|²` along the image.
    pub fn pairing(&self, i: usize, j: usize, x: usize) -> C64 {
        let s = self.coords();
        s[(i, x)] * s[(j, x)].conj() / self.norm_sq[x]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::model::build_p1_model;

    #[test]
    fn k1_is_the_identity_embedding() {
        let m = build_p1_model(1, 4, 8).unwrap();
        let a = veronese_model(&m);
        for x in 0..m.n_nodes() {
            assert_eq!(a.coords()[(0, x)], C64::new(1.0, 0.0));
            assert_eq!(a.coords()[(1, x)], m.nodes()[x].z);
        }
    }

    #[test]
    fn conic_equation_holds() {
        let m = build_p1_model(2, 6, 12).unwrap();
        let a = veronese_model(&m);
        let z = a.coords();
        for x in 0..m.n_nodes() {
            let d = z[(0, x)] * z[(2, x)] - z[(1, x)] * z[(1, x)];
            assert!(d.norm() <= 1e-14 * z[(1, x)].norm_sqr().max(1.0));
        }
    }

    #[test]
    fn pairing_trace_is_one() {
        let m = build_p1_model(4, 10, 20).unwrap();
        let a = veronese_model(&m);
        for x in 0..m.n_nodes() {
            let t: f64 = (0..a.n()).map(|i| a.pairing(i, i, x).re).sum();
            assert!((t - 1.0).abs() < 1e-14);
        }
    }
}
