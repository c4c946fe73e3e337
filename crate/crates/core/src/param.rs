//! Design parameterizations and training-sample generators.
//!
//! A parameterization maps the control vector `c` to a nodal physical field
//! (conductivity, heat source, ...) and supplies the dense tangent
//! `A = d field / d c`. The Fourier map evaluates a trigonometric expansion at
//! every node and pushes it through a sigmoidal projection into
//! `(vmin, vmax)`; the nodal map is the identity.
//!
//! Sample generators use one ChaCha stream per sample index, so corpora are
//! identical however many threads build them.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FolError, Result};
use crate::linalg::Mat;
use crate::mesh::Mesh;

/// Sigmoidal projection `(vmax - vmin) * sigmoid(beta (raw - 0.5)) + vmin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub vmin: f64,
    pub vmax: f64,
    pub beta: f64,
}

impl ProjectionSpec {
    pub fn new(vmin: f64, vmax: f64, beta: f64) -> Result<Self> {
        if !(vmin < vmax) || !(beta > 0.0) {
            return Err(FolError::InvalidArgument(format!(
                "projection needs vmin < vmax and beta > 0, got ({vmin}, {vmax}, {beta})"
            )));
        }
        Ok(ProjectionSpec { vmin, vmax, beta })
    }

    /// Conductivity bounds `[0.01, 1.0]` with `beta = 5`.
    pub fn conductivity() -> Self {
        ProjectionSpec {
            vmin: 0.01,
            vmax: 1.0,
            beta: 5.0,
        }
    }

    /// Heat-sink bounds `[-10, -1]` with `beta = 5`.
    pub fn heat_sink() -> Self {
        ProjectionSpec {
            vmin: -10.0,
            vmax: -1.0,
            beta: 5.0,
        }
    }

    pub fn project(&self, raw: f64) -> f64 {
        self.project_with_slope(raw).0
    }

    /// Projected value and `d value / d raw`.
    pub fn project_with_slope(&self, raw: f64) -> (f64, f64) {
        let s = sigmoid(self.beta * (raw - 0.5));
        let span = self.vmax - self.vmin;
        (span * s + self.vmin, span * s * (1.0 - s) * self.beta)
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Frequencies of a Fourier expansion over a grid of `(fx_i, fy_j)` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FourierBasis {
    pub fx: Vec<f64>,
    pub fy: Vec<f64>,
    /// Include the sin-cos, cos-sin and sin-sin terms in addition to cos-cos.
    #[serde(default)]
    pub full: bool,
}

impl FourierBasis {
    pub fn cos_cos(fx: &[f64], fy: &[f64]) -> Result<Self> {
        let b = FourierBasis {
            fx: fx.to_vec(),
            fy: fy.to_vec(),
            full: false,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.fx.is_empty() || self.fy.is_empty() {
            return Err(FolError::InvalidArgument("empty frequency list".into()));
        }
        if self.fx.iter().chain(&self.fy).any(|f| !(*f > 0.0)) {
            return Err(FolError::InvalidArgument("frequencies must be positive".into()));
        }
        Ok(())
    }

    /// Number of coefficients: the constant plus one (or four) per frequency pair.
    pub fn dim(&self) -> usize {
        let per = if self.full { 4 } else { 1 };
        1 + per * self.fx.len() * self.fy.len()
    }

    /// Basis functions at `(x, y)`; index 0 is the constant mode, then `fx` outer, `fy` inner.
    pub fn eval(&self, x: f64, y: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.push(1.0);
        for &fx in &self.fx {
            for &fy in &self.fy {
                let (sx, cx) = (fx * x).sin_cos();
                let (sy, cy) = (fy * y).sin_cos();
                if self.full {
                    out.extend_from_slice(&[sx * cy, cx * sy, sx * sy, cx * cy]);
                } else {
                    out.push(cx * cy);
                }
            }
        }
        out
    }

    /// Unprojected field `k_f(x, y) = sum_m c_m phi_m(x, y)`.
    pub fn field(&self, c: &[f64], x: f64, y: f64) -> Result<f64> {
        if c.len() != self.dim() {
            return Err(FolError::dims("Fourier coefficients", self.dim(), c.len()));
        }
        Ok(self.eval(x, y).iter().zip(c).map(|(p, ci)| p * ci).sum())
    }

    /// `N x M` matrix of basis values at the mesh nodes.
    pub fn basis_matrix(&self, mesh: &Mesh) -> Mat {
        let m = self.dim();
        let mut out = Mat::zeros(mesh.n_nodes(), m);
        for (i, p) in mesh.coords().iter().enumerate() {
            out.row_mut(i).copy_from_slice(&self.eval(p[0], p[1]));
        }
        out
    }
}

/// Fourier expansion followed by a sigmoidal projection, at the nodes of one mesh.
#[derive(Debug, Clone)]
pub struct FourierMap {
    basis: FourierBasis,
    projection: ProjectionSpec,
    phi: Mat,
}

impl FourierMap {
    pub fn new(basis: FourierBasis, projection: ProjectionSpec, mesh: &Mesh) -> Result<Self> {
        basis.validate()?;
        let phi = basis.basis_matrix(mesh);
        Ok(FourierMap {
            basis,
            projection,
            phi,
        })
    }

    pub fn basis(&self) -> &FourierBasis {
        &self.basis
    }

    pub fn projection(&self) -> &ProjectionSpec {
        &self.projection
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn field(&self, c: &[f64]) -> Result<Vec<f64>> {
        Ok(self.field_and_tangent(c, false)?.0)
    }

    fn field_and_tangent(&self, c: &[f64], want_tangent: bool) -> Result<(Vec<f64>, Option<Mat>)> {
        let m = self.dim();
        if c.len() != m {
            return Err(FolError::dims("design vector", m, c.len()));
        }
        let n = self.phi.rows();
        let mut k = Vec::with_capacity(n);
        let mut a = want_tangent.then(|| Mat::zeros(n, m));
        for i in 0..n {
            let raw: f64 = self.phi.row(i).iter().zip(c).map(|(p, ci)| p * ci).sum();
            let (v, slope) = self.projection.project_with_slope(raw);
            k.push(v);
            if let Some(a) = a.as_mut() {
                for (dst, p) in a.row_mut(i).iter_mut().zip(self.phi.row(i)) {
                    *dst = slope * p;
                }
            }
        }
        Ok((k, a))
    }

    /// Nodal field and its tangent `A = d field / d c` (N x M).
    pub fn field_with_tangent(&self, c: &[f64]) -> Result<(Vec<f64>, Mat)> {
        let (k, a) = self.field_and_tangent(c, true)?;
        Ok((k, a.expect("tangent requested")))
    }
}

/// How control variables become a nodal design field.
#[derive(Debug, Clone)]
pub enum Parameterization {
    Fourier(FourierMap),
    /// Control vector is the nodal field itself.
    Nodal { n: usize },
}

impl Parameterization {
    pub fn dim(&self) -> usize {
        match self {
            Parameterization::Fourier(f) => f.dim(),
            Parameterization::Nodal { n } => *n,
        }
    }

    pub fn field(&self, c: &[f64]) -> Result<Vec<f64>> {
        match self {
            Parameterization::Fourier(f) => f.field(c),
            Parameterization::Nodal { n } => {
                if c.len() != *n {
                    return Err(FolError::dims("nodal design", *n, c.len()));
                }
                Ok(c.to_vec())
            }
        }
    }

    /// Design to nodal field, with the tangent `A`.
    pub fn design_to_nodal(&self, c: &[f64]) -> Result<(Vec<f64>, Mat)> {
        match self {
            Parameterization::Fourier(f) => f.field_with_tangent(c),
            Parameterization::Nodal { n } => Ok((self.field(c)?, Mat::identity(*n))),
        }
    }
}

/// Projected heat source from Fourier coefficients.
pub fn source_field(basis: &FourierBasis, c: &[f64], mesh: &Mesh, qspec: &ProjectionSpec) -> Result<Vec<f64>> {
    FourierMap::new(basis.clone(), *qspec, mesh)?.field(c)
}

fn stream_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Independent uniform draws per component, one RNG stream per sample.
pub fn gen_uniform_samples(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    for &(lo, hi) in ranges {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(FolError::InvalidArgument(format!("bad sampling range ({lo}, {hi})")));
        }
    }
    let dists: Vec<Uniform<f64>> = ranges.iter().map(|&(lo, hi)| Uniform::new_inclusive(lo, hi)).collect();
    Ok((0..n)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            dists.iter().map(|d| d.sample(&mut rng)).collect()
        })
        .collect())
}

/// Random Fourier coefficient vectors.
pub fn gen_random_fourier_samples(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    gen_uniform_samples(n, ranges, seed)
}

/// Coefficients for unseen test designs, drawn from `(5, 10)` in every component.
pub fn gen_unseen_fourier_samples(n: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    gen_uniform_samples(n, &vec![(5.0, 10.0); dim], seed)
}

/// Random boundary-displacement vectors.
pub fn gen_random_bc_samples(n: usize, ranges: &[(f64, f64)], seed: u64) -> Result<Vec<Vec<f64>>> {
    gen_uniform_samples(n, ranges, seed)
}

/// Settings of the two-phase ellipse-inclusion generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseConfig {
    /// Fine sampling grid, `(2^a * 10 + 1)` nodes per side for max-pooling.
    pub fine_n: usize,
    /// Output grid after max-pooling.
    pub coarse_n: usize,
    pub min_inclusions: usize,
    pub max_inclusions: usize,
    /// Semi-axis ranges, in units of the domain side.
    pub inner_radius: (f64, f64),
    pub outer_radius: (f64, f64),
    pub k_matrix: f64,
    pub k_inclusion: f64,
}

impl Default for EllipseConfig {
    fn default() -> Self {
        EllipseConfig {
            fine_n: 41,
            coarse_n: 11,
            min_inclusions: 1,
            max_inclusions: 5,
            inner_radius: (0.05, 0.15),
            outer_radius: (0.1, 0.3),
            k_matrix: 1.0,
            k_inclusion: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_axes: [f64; 2],
    pub angle: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle.sin_cos();
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        (u / self.semi_axes[0]).powi(2) + (v / self.semi_axes[1]).powi(2) <= 1.0
    }
}

/// A generated two-phase nodal design plus descriptive statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EllipseSample {
    /// Nodal conductivity on the coarse grid.
    pub conductivity: Vec<f64>,
    /// Fraction of fine-grid nodes in the inclusion phase.
    pub volume_fraction: f64,
    /// Mean nearest-neighbour distance between inclusion centres (0 for fewer than two).
    pub dispersion: f64,
    pub ellipses: Vec<Ellipse>,
}

/// Rasterizes ellipses on an `n x n` unit-square node grid.
pub fn rasterize_ellipses(ellipses: &[Ellipse], n: usize, k_matrix: f64, k_inclusion: f64) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            let (x, y) = (i as f64 * h, j as f64 * h);
            let inside = ellipses.iter().any(|e| e.contains(x, y));
            out.push(if inside { k_inclusion } else { k_matrix });
        }
    }
    out
}

fn dispersion(ellipses: &[Ellipse]) -> f64 {
    if ellipses.len() < 2 {
        return 0.0;
    }
    let total: f64 = ellipses
        .iter()
        .enumerate()
        .map(|(i, a)| {
            ellipses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, b)| ((a.center[0] - b.center[0]).powi(2) + (a.center[1] - b.center[1]).powi(2)).sqrt())
                .fold(f64::MAX, f64::min)
        })
        .sum();
    total / ellipses.len() as f64
}

pub fn sample_from_ellipses(ellipses: Vec<Ellipse>, cfg: &EllipseConfig) -> Result<EllipseSample> {
    let fine = rasterize_ellipses(&ellipses, cfg.fine_n, cfg.k_matrix, cfg.k_inclusion);
    let inclusions = fine.iter().filter(|&&k| k == cfg.k_inclusion).count();
    let volume_fraction = inclusions as f64 / fine.len() as f64;
    let conductivity = maxpool_downsample(&fine, cfg.fine_n, cfg.coarse_n)?;
    Ok(EllipseSample {
        conductivity,
        volume_fraction,
        dispersion: dispersion(&ellipses),
        ellipses,
    })
}

pub fn gen_ellipse_samples(n_samples: usize, cfg: &EllipseConfig, seed: u64) -> Result<Vec<EllipseSample>> {
    if cfg.min_inclusions > cfg.max_inclusions {
        return Err(FolError::InvalidArgument("min_inclusions > max_inclusions".into()));
    }
    let (r0, r1) = cfg.inner_radius;
    let (o0, o1) = cfg.outer_radius;
    if !(0.0 < r0 && r0 <= r1 && 0.0 < o0 && o0 <= o1) {
        return Err(FolError::InvalidArgument("bad ellipse radius ranges".into()));
    }
    (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = stream_rng(seed, s as u64);
            let count = Uniform::new_inclusive(cfg.min_inclusions, cfg.max_inclusions).sample(&mut rng);
            let unit = Uniform::new_inclusive(0.0, 1.0);
            let inner = Uniform::new_inclusive(r0, r1);
            let outer = Uniform::new_inclusive(o0, o1);
            let angle = Uniform::new(0.0, std::f64::consts::PI);
            let ellipses = (0..count)
                .map(|_| Ellipse {
                    center: [unit.sample(&mut rng), unit.sample(&mut rng)],
                    semi_axes: [inner.sample(&mut rng), outer.sample(&mut rng)],
                    angle: angle.sample(&mut rng),
                })
                .collect();
            sample_from_ellipses(ellipses, cfg)
        })
        .collect()
}

/// Max-pooling from an `fine_n^2` node grid onto a `coarse_n^2` grid.
///
/// With ratio `r = (fine_n - 1) / (coarse_n - 1)`, coarse node `(I, J)` takes
/// the maximum over fine nodes `[rI, rI + r - 1] x [rJ, rJ + r - 1]`, clipped
/// to the grid.
pub fn maxpool_downsample(fine: &[f64], fine_n: usize, coarse_n: usize) -> Result<Vec<f64>> {
    if fine.len() != fine_n * fine_n {
        return Err(FolError::dims("fine field", fine_n * fine_n, fine.len()));
    }
    if coarse_n < 2 || fine_n < coarse_n || (fine_n - 1) % (coarse_n - 1) != 0 {
        return Err(FolError::InvalidArgument(format!(
            "cannot pool a {fine_n}-node grid onto {coarse_n} nodes"
        )));
    }
    let r = (fine_n - 1) / (coarse_n - 1);
    let mut out = Vec::with_capacity(coarse_n * coarse_n);
    for cj in 0..coarse_n {
        for ci in 0..coarse_n {
            let mut m = f64::MIN;
            for fj in r * cj..(r * cj + r).min(fine_n) {
                for fi in r * ci..(r * ci + r).min(fine_n) {
                    m = m.max(fine[fj * fine_n + fi]);
                }
            }
            out.push(m);
        }
    }
    Ok(out)
}
