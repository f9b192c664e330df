//! Spherical-harmonic transforms on the Gauss–Legendre × equispaced grid.
//!
//! The radial variable `t = |z|²/(1+|z|²)` is an affine image of the polar
//! cosine `μ = 2t − 1`, so the model's node set is the standard
//! Gauss grid on the round sphere. Functions are stored ring-major:
//! node `r·M + j` sits at `(t_r, φ_j)`.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct SphereGrid {
    radial: usize,
    azimuthal: usize,
    lmax: usize,
    /// Gauss weights in `t`, summing to 1.
    t_weights: Vec<f64>,
    /// `legendre[r][tri(l, m)]` = orthonormal `p̄_lm(μ_r)`, `m ≤ l ≤ lmax`.
    legendre: Vec<Vec<f64>>,
    cos_table: Vec<Vec<f64>>,
    sin_table: Vec<Vec<f64>>,
}

fn tri(l: usize, m: usize) -> usize {
    l * (l + 1) / 2 + m
}

impl SphereGrid {
    pub fn new(t_nodes: &[f64], t_weights: &[f64], azimuthal: usize) -> Self {
        let radial = t_nodes.len();
        let lmax = (radial.saturating_sub(1)).min((azimuthal.saturating_sub(1)) / 2);
        let legendre = t_nodes.iter().map(|&t| normalized_legendre(lmax, 2.0 * t - 1.0)).collect();
        let phi = |j: usize| 2.0 * PI * j as f64 / azimuthal as f64;
        let cos_table = (0..=lmax).map(|m| (0..azimuthal).map(|j| (m as f64 * phi(j)).cos()).collect()).collect();
        let sin_table = (0..=lmax).map(|m| (0..azimuthal).map(|j| (m as f64 * phi(j)).sin()).collect()).collect();
        SphereGrid {
            radial,
            azimuthal,
            lmax,
            t_weights: t_weights.to_vec(),
            legendre,
            cos_table,
            sin_table,
        }
    }

    /// Largest harmonic degree resolved exactly by the grid.
    pub fn lmax(&self) -> usize {
        self.lmax
    }

    pub fn len(&self) -> usize {
        self.radial * self.azimuthal
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Coefficients `(re, im)` of `f` against `p̄_lm e^{imφ}` for `m ≥ 0`,
    /// indexed by `tri(l, m)`. Negative orders follow from reality.
    pub fn analysis(&self, f: &[f64]) -> Vec<(f64, f64)> {
        assert_eq!(f.len(), self.len());
        let m_count = self.azimuthal as f64;
        let mut coeffs = vec![(0.0, 0.0); tri(self.lmax, self.lmax) + 1];
        for r in 0..self.radial {
            let ring = &f[r * self.azimuthal..(r + 1) * self.azimuthal];
            let w = self.t_weights[r];
            for m in 0..=self.lmax {
                let (mut fr, mut fi) = (0.0, 0.0);
                for (j, &v) in ring.iter().enumerate() {
                    fr += v * self.cos_table[m][j];
                    fi -= v * self.sin_table[m][j];
                }
                fr *= w / m_count;
                fi *= w / m_count;
                for l in m..=self.lmax {
                    let p = self.legendre[r][tri(l, m)];
                    let c = &mut coeffs[tri(l, m)];
                    c.0 += p * fr;
                    c.1 += p * fi;
                }
            }
        }
        coeffs
    }

    pub fn synthesis(&self, coeffs: &[(f64, f64)]) -> Vec<f64> {
        let mut f = vec![0.0; self.len()];
        for r in 0..self.radial {
            for m in 0..=self.lmax {
                let (mut gr, mut gi) = (0.0, 0.0);
                for l in m..=self.lmax {
                    let p = self.legendre[r][tri(l, m)];
                    let c = coeffs[tri(l, m)];
                    gr += p * c.0;
                    gi += p * c.1;
                }
                let ring = &mut f[r * self.azimuthal..(r + 1) * self.azimuthal];
                if m == 0 {
                    for v in ring.iter_mut() {
                        *v += gr;
                    }
                } else {
                    for (j, v) in ring.iter_mut().enumerate() {
                        *v += 2.0 * (gr * self.cos_table[m][j] - gi * self.sin_table[m][j]);
                    }
                }
            }
        }
        f
    }

    /// Multiplies degree-`l` coefficients by `factor(l)` and synthesises.
    pub fn apply_degree_multiplier(&self, f: &[f64], factor: impl Fn(usize) -> f64) -> Vec<f64> {
        let mut c = self.analysis(f);
        for l in 0..=self.lmax {
            let s = factor(l);
            for m in 0..=l {
                let e = &mut c[tri(l, m)];
                e.0 *= s;
                e.1 *= s;
            }
        }
        self.synthesis(&c)
    }

    /// Round unit-sphere Laplacian of the band-limited part of `f`.
    pub fn laplacian(&self, f: &[f64]) -> Vec<f64> {
        self.apply_degree_multiplier(f, |l| -((l * (l + 1)) as f64))
    }

    /// W-orthogonal projection onto harmonics of degree `≤ lmax`.
    pub fn project(&self, f: &[f64]) -> Vec<f64> {
        self.apply_degree_multiplier(f, |_| 1.0)
    }
}

/// Orthonormal associated Legendre values with `½∫ p̄_lm² dμ = 1`.
fn normalized_legendre(lmax: usize, mu: f64) -> Vec<f64> {
    let mut p = vec![0.0; tri(lmax, lmax) + 1];
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    p[0] = 1.0;
    for m in 0..=lmax {
        if m > 0 {
            let mf = m as f64;
            p[tri(m, m)] = ((2.0 * mf + 1.0) / (2.0 * mf)).sqrt() * s * p[tri(m - 1, m - 1)];
        }
        if m < lmax {
            p[tri(m + 1, m)] = (2.0 * m as f64 + 3.0).sqrt() * mu * p[tri(m, m)];
        }
        for l in m + 2..=lmax {
            let (lf, mf) = (l as f64, m as f64);
            let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
            let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
            p[tri(l, m)] = a * (mu * p[tri(l - 1, m)] - b * p[tri(l - 2, m)]);
        }
    }
    p
}
