use std::f64::consts::PI;
use std::ops::{Add, Mul};
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::quadrature::gauss_legendre_unit;
use crate::geometry::spectral::SphereGrid;
use crate::linalg::{c64, CMat, HermitianForm, C64};
use crate::par::Exec;

/// Affine chart a node coordinate is expressed in. Every node of a ℙ¹
/// model lives in `U0 = {X0 ≠ 0}` with coordinate `z = X1/X0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    U0,
    U1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub z: C64,
    pub chart: Chart,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// ℙ¹ polarised by `O(degree)`; sections of `O(degree·k)` are monomials.
    P1 { degree: u32 },
    /// Node data supplied directly, without polynomial structure.
    Abstract { fano: bool, general_type: bool },
}

/// Resolution of the tensor-product grid on ℙ¹.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridShape {
    pub radial: usize,
    pub azimuthal: usize,
}

/// A discretised polarised manifold: nodes, reference volume weights,
/// section values in the affine trivialisation and the reference fibre
/// weight `(1+|z|²)^{-deg}` at each node.
#[derive(Debug, Clone)]
pub struct ManifoldModel {
    kind: ModelKind,
    k: u32,
    volume: f64,
    nodes: Vec<Node>,
    quad_weights: Vec<f64>,
    sections: CMat,
    ref_weight: Vec<f64>,
    /// Rows express the current section basis in monomials (ℙ¹ only).
    basis: CMat,
    grid: Option<GridShape>,
    t_rule: Option<(Vec<f64>, Vec<f64>)>,
    sphere: OnceLock<SphereGrid>,
}

/// A measure given by nonnegative node weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    pub weights: Vec<f64>,
}

impl Density {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Domain(format!("density weight {} at node {i} is not a nonnegative real", weights[i])));
        }
        let mass: f64 = weights.iter().sum();
        if !(mass > 0.0) {
            return Err(Error::Domain("density has zero total mass".into()));
        }
        Ok(Density { weights })
    }

    pub fn mass(&self) -> f64 {
        crate::par::pairwise_sum(&self.weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn scaled(&self, c: f64) -> Density {
        Density {
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Minimum node counts for exact reference pairings at section degree `deg`.
pub fn exactness_thresholds(deg: u32) -> GridShape {
    GridShape {
        radial: deg as usize + 1,
        azimuthal: 2 * deg as usize + 1,
    }
}

/// Default resolution. Bergman curvature densities are rational with poles
/// that approach the sphere as the form degenerates; this grid keeps their
/// masses within 1e-10 up to condition number 100.
pub fn default_grid(deg: u32) -> GridShape {
    let radial = (2 * deg as usize + 4).max(64 + 8 * deg as usize);
    GridShape {
        radial,
        azimuthal: 2 * radial,
    }
}

/// ℙ¹ with `L = O(1)`, monomial sections `1, z, …, z^k`.
pub fn build_p1_model(k: u32, radial_nodes: usize, azimuthal_nodes: usize) -> Result<ManifoldModel> {
    ManifoldModel::p1(1, k, GridShape {
        radial: radial_nodes,
        azimuthal: azimuthal_nodes,
    })
}

pub fn binomial(n: u32, r: u32) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl ManifoldModel {
    /// ℙ¹ polarised by `O(degree)` at exponent `k`. `degree = 2` is the
    /// anticanonical bundle.
    pub fn p1(degree: u32, k: u32, grid: GridShape) -> Result<Self> {
        if k == 0 || degree == 0 {
            return Err(Error::Config("k and the bundle degree must be positive".into()));
        }
        let deg = degree * k;
        let need = exactness_thresholds(deg);
        if grid.radial < need.radial || grid.azimuthal < need.azimuthal {
            return Err(Error::Config(format!(
                "grid {}x{} too coarse for section degree {deg}: need radial ≥ {} and azimuthal ≥ {}",
                grid.radial, grid.azimuthal, need.radial, need.azimuthal
            )));
        }
        let (t, tw) = gauss_legendre_unit(grid.radial);
        let one_minus: Vec<f64> = t.iter().map(|x| 1.0 - x).collect();
        let mut m = Self::p1_from_rule(degree, k, &t, &one_minus, &tw, grid.azimuthal);
        m.grid = Some(grid);
        m.t_rule = Some((t, tw));
        Ok(m)
    }

    /// ℙ¹ model with Gauss nodes in `s = log|z|` on `[-s_max, s_max]`.
    /// Not exact for reference pairings, but resolves measures concentrated
    /// at any scale `e^{-s_max} ≪ |z| ≪ e^{s_max}`; used for probing
    /// degenerating Fubini–Study pullbacks.
    pub fn p1_log_radial(degree: u32, k: u32, radial: usize, azimuthal: usize, s_max: f64) -> Result<Self> {
        if k == 0 || degree == 0 || radial == 0 || azimuthal == 0 || !(s_max > 0.0) {
            return Err(Error::Config("log-radial model needs positive k, degree, node counts and range".into()));
        }
        let (x, w) = crate::geometry::quadrature::gauss_legendre(radial);
        let mut t = Vec::with_capacity(radial);
        let mut one_minus = Vec::with_capacity(radial);
        let mut tw = Vec::with_capacity(radial);
        for (xi, wi) in x.iter().zip(&w) {
            let s = s_max * xi;
            let (a, b) = (1.0 / (1.0 + (-2.0 * s).exp()), 1.0 / (1.0 + (2.0 * s).exp()));
            t.push(a);
            one_minus.push(b);
            // dt/ds = 2t(1-t)
            tw.push(s_max * wi * 2.0 * a * b);
        }
        Ok(Self::p1_from_rule(degree, k, &t, &one_minus, &tw, azimuthal))
    }

    fn p1_from_rule(degree: u32, k: u32, t: &[f64], one_minus: &[f64], tw: &[f64], azimuthal: usize) -> Self {
        let deg = degree * k;
        let volume = degree as f64;
        let n_sec = deg as usize + 1;
        let q = t.len() * azimuthal;
        let mut nodes = Vec::with_capacity(q);
        let mut quad_weights = Vec::with_capacity(q);
        let mut ref_weight = Vec::with_capacity(q);
        for r in 0..t.len() {
            let rad = (t[r] / one_minus[r]).sqrt();
            for j in 0..azimuthal {
                let phi = 2.0 * PI * j as f64 / azimuthal as f64;
                nodes.push(Node {
                    z: C64::from_polar(rad, phi),
                    chart: Chart::U0,
                });
                quad_weights.push(volume * tw[r] / azimuthal as f64);
                // (1+|z|²)^{-deg} = (1-t)^deg
                ref_weight.push(one_minus[r].powi(deg as i32));
            }
        }
        let sections = CMat::from_fn(n_sec, q, |b, x| nodes[x].z.powu(b as u32));
        ManifoldModel {
            kind: ModelKind::P1 { degree },
            k,
            volume,
            nodes,
            quad_weights,
            sections,
            ref_weight,
            basis: CMat::identity(n_sec, n_sec),
            grid: None,
            t_rule: None,
            sphere: OnceLock::new(),
        }
    }

    pub fn p1_default(degree: u32, k: u32) -> Result<Self> {
        Self::p1(degree, k, default_grid(degree * k))
    }

    /// Model from raw node data. Used for manifolds without a concrete
    /// geometric test-bed; curvature is unavailable.
    pub fn abstract_model(
        k: u32,
        volume: f64,
        sections: CMat,
        quad_weights: Vec<f64>,
        ref_weight: Vec<f64>,
        fano: bool,
        general_type: bool,
    ) -> Result<Self> {
        let q = quad_weights.len();
        if sections.ncols() != q || ref_weight.len() != q {
            return Err(Error::Dimension("sections, weights and reference weight disagree on node count".into()));
        }
        if ref_weight.iter().any(|w| !(*w > 0.0)) || quad_weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Domain("node weights must be strictly positive".into()));
        }
        let n = sections.nrows();
        Ok(ManifoldModel {
            kind: ModelKind::Abstract { fano, general_type },
            k,
            volume,
            nodes: (0..q).map(|_| Node { z: C64::default(), chart: Chart::U0 }).collect(),
            quad_weights,
            sections,
            ref_weight,
            basis: CMat::identity(n, n),
            grid: None,
            t_rule: None,
            sphere: OnceLock::new(),
        })
    }

    /// Same manifold with sections replaced by `A·s` (rows of `A` in the
    /// current basis).
    pub fn with_basis(&self, a: &CMat) -> Result<Self> {
        let n = self.n_sections();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::Dimension(format!("basis change must be {n}x{n}")));
        }
        let mut m = self.clone();
        m.sections = a * &self.sections;
        m.basis = a * &self.basis;
        Ok(m)
    }

    /// Same data at a different grid resolution (ℙ¹ only).
    pub fn regrid(&self, grid: GridShape) -> Result<Self> {
        match self.kind {
            ModelKind::P1 { degree } => {
                let fresh = Self::p1(degree, self.k, grid)?;
                fresh.with_basis(&self.basis)
            }
            ModelKind::Abstract { .. } => Err(Error::Domain("abstract models cannot be regridded".into())),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// Complex dimension; every instantiated model is a curve.
    pub fn complex_dim(&self) -> u32 {
        1
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// `dim H⁰(X, L^k)`.
    pub fn n_sections(&self) -> usize {
        self.sections.nrows()
    }

    /// `∫ c₁(L)ⁿ/n!`.
    pub fn volume(&self) -> f64 {
        self.volume
    }

    pub fn n_nodes(&self) -> usize {
        self.quad_weights.len()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn quad_weights(&self) -> &[f64] {
        &self.quad_weights
    }

    pub fn reference_density(&self) -> Density {
        Density {
            weights: self.quad_weights.clone(),
        }
    }

    /// Section values, one row per section.
    pub fn sections(&self) -> &CMat {
        &self.sections
    }

    pub fn ref_weight(&self) -> &[f64] {
        &self.ref_weight
    }

    pub fn basis(&self) -> &CMat {
        &self.basis
    }

    pub fn grid(&self) -> Option<GridShape> {
        self.grid
    }

    pub fn bundle_degree(&self) -> Option<u32> {
        match self.kind {
            ModelKind::P1 { degree } => Some(degree),
            ModelKind::Abstract { .. } => None,
        }
    }

    /// Degree of `L^k` (sections are polynomials of this degree).
    pub fn section_degree(&self) -> Option<u32> {
        self.bundle_degree().map(|d| d * self.k)
    }

    pub fn is_fano_anticanonical(&self) -> bool {
        matches!(self.kind, ModelKind::P1 { degree: 2 } | ModelKind::Abstract { fano: true, .. })
    }

    pub fn is_general_type(&self) -> bool {
        matches!(self.kind, ModelKind::Abstract { general_type: true, .. })
    }

    /// Round-sphere transforms on the node grid (ℙ¹ only, built lazily).
    pub fn sphere(&self) -> Result<&SphereGrid> {
        let (Some(grid), Some((t, tw))) = (self.grid, self.t_rule.as_ref()) else {
            return Err(Error::Domain("spectral Laplacian needs a ℙ¹ grid model".into()));
        };
        Ok(self.sphere.get_or_init(|| SphereGrid::new(t, tw, grid.azimuthal)))
    }

    /// Form whose Fubini–Study metric is the reference metric:
    /// `diag(1/C(deg, j))` in the monomial basis, carried to the current basis.
    pub fn balanced_reference_form(&self) -> Result<HermitianForm> {
        let deg = self
            .section_degree()
            .ok_or_else(|| Error::Domain("reference form needs a ℙ¹ model".into()))?;
        let d: Vec<f64> = (0..=deg).map(|j| 1.0 / binomial(deg, j)).collect();
        Ok(HermitianForm::from_real_diagonal(&d).congruence(&self.basis))
    }

    /// `Σ pointwise·weights` with the fixed pairwise-tree reduction.
    pub fn integrate<T>(&self, pointwise: &[T], measure: &Density) -> Result<T>
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T> + Send + Sync,
    {
        integrate_with(Exec::default(), self.n_nodes(), pointwise, measure)
    }

    /// Node table for CSV export: index, z, weights, then section values.
    pub fn dump_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_nodes())
            .map(|x| {
                let mut row = vec![
                    x as f64,
                    self.nodes[x].z.re,
                    self.nodes[x].z.im,
                    self.quad_weights[x],
                    self.ref_weight[x],
                ];
                for i in 0..self.n_sections() {
                    row.push(self.sections[(i, x)].re);
                    row.push(self.sections[(i, x)].im);
                }
                row
            })
            .collect()
    }
}

pub fn integrate_with<T>(exec: Exec, q: usize, pointwise: &[T], measure: &Density) -> Result<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T> + Send + Sync,
{
    if pointwise.len() != q || measure.len() != q {
        return Err(Error::Dimension(format!(
            "integrand has {} values and measure {} weights on a {q}-node model",
            pointwise.len(),
            measure.len()
        )));
    }
    Ok(exec.tree_sum(0..q, T::default(), &|i| pointwise[i] * measure.weights[i]))
}

/// Complex Gram matrix `Σ_x w_x s_i(x) conj(s_j(x))` for `i, j` over the rows of `s`.
pub fn weighted_gram(exec: Exec, s: &CMat, w: &[f64]) -> CMat {
    let n = s.nrows();
    let q = s.ncols();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let vals = exec.map(pairs.len(), |p| {
        let (i, j) = pairs[p];
        Exec::Sequential.tree_sum(0..q, C64::default(), &|x| s[(i, x)] * s[(j, x)].conj() * w[x])
    });
    let mut g = CMat::zeros(n, n);
    for (p, &(i, j)) in pairs.iter().enumerate() {
        g[(i, j)] = vals[p];
        g[(j, i)] = vals[p].conj();
    }
    for i in 0..n {
        g[(i, i)] = c64(g[(i, i)].re, 0.0);
    }
    g
}
