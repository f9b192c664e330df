//! Discretised polarised curves: quadrature, sections, metrics and their
//! curvature, and the projective embedding by sections.

pub mod metric;
pub mod model;
pub mod quadrature;
pub mod spectral;
pub mod veronese;

pub use metric::{
    beta_function, curvature_volume, curvature_volume_with, density_ratio, fs_metric, grid_metric,
    reference_metric, MetricWeight,
};
pub use model::{build_p1_model, default_grid, Chart, Density, GridShape, ManifoldModel, ModelKind, Node};
pub use veronese::{veronese_model, AmbientModel};
