//! Structured quadrilateral meshes, bilinear shape functions and Gauss rules.
//!
//! Nodes are numbered row-major with x varying fastest, so node `(i, j)` has
//! id `j * nx + i`. Element `(i, j)` connects nodes
//! `[(i, j), (i+1, j), (i+1, j+1), (i, j+1)]`, counterclockwise.
//!
//! Element geometry (shape values, physical gradients and `w * detJ` at each
//! quadrature point) is computed once at construction and shared by every
//! assembly routine.

use crate::error::{FolError, Result};

/// Parent-square corner coordinates of the four bilinear nodes, CCW.
pub const PARENT_CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Tensor-product Gauss-Legendre rule on `[-1, 1]^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f(xi, eta)` over the parent square.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p[0], p[1]))
            .sum()
    }
}

/// 1D Gauss-Legendre points and weights on `[-1, 1]`.
fn gauss_1d(order: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    match order {
        1 => Ok((vec![0.0], vec![2.0])),
        2 => {
            let g = 1.0 / 3f64.sqrt();
            Ok((vec![-g, g], vec![1.0, 1.0]))
        }
        3 => {
            let g = (3.0f64 / 5.0).sqrt();
            Ok((vec![-g, 0.0, g], vec![5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0]))
        }
        other => Err(FolError::UnsupportedQuadrature(other)),
    }
}

pub fn gauss_rule(order: usize) -> Result<QuadratureRule> {
    let (p, w) = gauss_1d(order)?;
    let mut points = Vec::with_capacity(p.len() * p.len());
    let mut weights = Vec::with_capacity(p.len() * p.len());
    for (eta, we) in p.iter().zip(&w) {
        for (xi, wx) in p.iter().zip(&w) {
            points.push([*xi, *eta]);
            weights.push(wx * we);
        }
    }
    Ok(QuadratureRule { points, weights })
}

/// Bilinear shape values and parent-space gradients at `(xi, eta)`.
pub fn bilinear(xi: f64, eta: f64) -> ([f64; 4], [[f64; 2]; 4]) {
    let mut n = [0.0; 4];
    let mut dn = [[0.0; 2]; 4];
    for (a, c) in PARENT_CORNERS.iter().enumerate() {
        n[a] = 0.25 * (1.0 + c[0] * xi) * (1.0 + c[1] * eta);
        dn[a][0] = 0.25 * c[0] * (1.0 + c[1] * eta);
        dn[a][1] = 0.25 * c[1] * (1.0 + c[0] * xi);
    }
    (n, dn)
}

/// Shape functions of one element evaluated at a parent point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub n: [f64; 4],
    pub dn_dxi: [[f64; 2]; 4],
    /// Physical gradients: `b[0][a] = dN_a/dx`, `b[1][a] = dN_a/dy`.
    pub b: [[f64; 4]; 2],
    pub det_j: f64,
}

/// Shape data at one quadrature point, with the integration weight folded in.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussPoint {
    pub n: [f64; 4],
    pub b: [[f64; 4]; 2],
    pub w_det: f64,
}

impl GaussPoint {
    /// Gradient of an element field `u_e` at this point.
    #[inline]
    pub fn grad(&self, ue: &[f64; 4]) -> [f64; 2] {
        let mut g = [0.0; 2];
        for a in 0..4 {
            g[0] += self.b[0][a] * ue[a];
            g[1] += self.b[1][a] * ue[a];
        }
        g
    }

    #[inline]
    pub fn interp(&self, ue: &[f64; 4]) -> f64 {
        self.n[0] * ue[0] + self.n[1] * ue[1] + self.n[2] * ue[2] + self.n[3] * ue[3]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Left,
    Right,
    Bottom,
    Top,
}

impl Edge {
    pub const ALL: [Edge; 4] = [Edge::Left, Edge::Right, Edge::Bottom, Edge::Top];
}

/// Structured quad mesh on a rectangle (or a smooth distortion of one).
#[derive(Debug, Clone)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    coords: Vec<[f64; 2]>,
    elems: Vec<[usize; 4]>,
    rule: QuadratureRule,
    geom: Vec<Vec<GaussPoint>>,
}

impl Mesh {
    /// Uniform `nx x ny` node grid on `[0, lx] x [0, ly]` with the default 2x2 rule.
    pub fn build_grid(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(FolError::InvalidMesh(format!(
                "need at least 2 nodes per axis, got {nx} x {ny}"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) {
            return Err(FolError::InvalidMesh(format!(
                "domain lengths must be positive, got {lx} x {ly}"
            )));
        }
        let mut coords = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                coords.push([
                    i as f64 * lx / (nx - 1) as f64,
                    j as f64 * ly / (ny - 1) as f64,
                ]);
            }
        }
        Self::with_coords(nx, ny, coords, 2)
    }

    /// Unit-square grid, the default domain for every study.
    pub fn unit_square(n: usize) -> Result<Self> {
        Self::build_grid(n, n, 1.0, 1.0)
    }

    /// Structured topology with caller-supplied node coordinates.
    pub fn with_coords(
        nx: usize,
        ny: usize,
        coords: Vec<[f64; 2]>,
        quad_order: usize,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(FolError::InvalidMesh(format!(
                "need at least 2 nodes per axis, got {nx} x {ny}"
            )));
        }
        if coords.len() != nx * ny {
            return Err(FolError::dims("mesh coordinates", nx * ny, coords.len()));
        }
        let mut elems = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let n0 = j * nx + i;
                elems.push([n0, n0 + 1, n0 + nx + 1, n0 + nx]);
            }
        }
        let (xmin, xmax, ymin, ymax) = coords.iter().fold(
            (f64::MAX, f64::MIN, f64::MAX, f64::MIN),
            |(a, b, c, d), p| (a.min(p[0]), b.max(p[0]), c.min(p[1]), d.max(p[1])),
        );
        let rule = gauss_rule(quad_order)?;
        let mut mesh = Mesh {
            nx,
            ny,
            lx: xmax - xmin,
            ly: ymax - ymin,
            coords,
            elems,
            rule,
            geom: Vec::new(),
        };
        let mut geom = Vec::with_capacity(mesh.elems.len());
        for e in 0..mesh.elems.len() {
            let mut pts = Vec::with_capacity(mesh.rule.len());
            for (p, w) in mesh.rule.points.iter().zip(&mesh.rule.weights) {
                let s = mesh.shape_eval(e, p[0], p[1])?;
                pts.push(GaussPoint {
                    n: s.n,
                    b: s.b,
                    w_det: w * s.det_j,
                });
            }
            geom.push(pts);
        }
        mesh.geom = geom;
        Ok(mesh)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn n_nodes(&self) -> usize {
        self.coords.len()
    }

    pub fn n_elems(&self) -> usize {
        self.elems.len()
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn elems(&self) -> &[[usize; 4]] {
        &self.elems
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.rule
    }

    /// Cached quadrature data of element `e`.
    pub fn gauss_points(&self, e: usize) -> &[GaussPoint] {
        &self.geom[e]
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Gathers the four element values of a nodal field.
    #[inline]
    pub fn gather(&self, e: usize, field: &[f64]) -> [f64; 4] {
        let ids = &self.elems[e];
        [field[ids[0]], field[ids[1]], field[ids[2]], field[ids[3]]]
    }

    pub fn shape_eval(&self, elem: usize, xi: f64, eta: f64) -> Result<ShapeEval> {
        let ids = self
            .elems
            .get(elem)
            .ok_or_else(|| FolError::InvalidArgument(format!("element {elem} out of range")))?;
        let (n, dn) = bilinear(xi, eta);
        // J[r][c] = d x_c / d xi_r
        let mut jac = [[0.0; 2]; 2];
        for a in 0..4 {
            let x = self.coords[ids[a]];
            for r in 0..2 {
                for c in 0..2 {
                    jac[r][c] += dn[a][r] * x[c];
                }
            }
        }
        let det_j = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !(det_j > 0.0) {
            return Err(FolError::DegenerateElement {
                elem,
                det_j,
                xi,
                eta,
            });
        }
        let inv = [
            [jac[1][1] / det_j, -jac[0][1] / det_j],
            [-jac[1][0] / det_j, jac[0][0] / det_j],
        ];
        let mut b = [[0.0; 4]; 2];
        for a in 0..4 {
            for r in 0..2 {
                b[r][a] = inv[r][0] * dn[a][0] + inv[r][1] * dn[a][1];
            }
        }
        Ok(ShapeEval {
            n,
            dn_dxi: dn,
            b,
            det_j,
        })
    }

    /// Nodes on one side of the grid, in increasing id order.
    pub fn edge_nodes(&self, edge: Edge) -> Vec<usize> {
        match edge {
            Edge::Left => (0..self.ny).map(|j| self.node(0, j)).collect(),
            Edge::Right => (0..self.ny).map(|j| self.node(self.nx - 1, j)).collect(),
            Edge::Bottom => (0..self.nx).map(|i| self.node(i, 0)).collect(),
            Edge::Top => (0..self.nx).map(|i| self.node(i, self.ny - 1)).collect(),
        }
    }

    /// Boundary segments (node pairs) along one side.
    pub fn edge_segments(&self, edge: Edge) -> Vec<[usize; 2]> {
        let nodes = self.edge_nodes(edge);
        nodes.windows(2).map(|w| [w[0], w[1]]).collect()
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        let mut all: Vec<usize> = Edge::ALL.iter().flat_map(|e| self.edge_nodes(*e)).collect();
        all.sort_unstable();
        all.dedup();
        all
    }

    /// Locates `(x, y)` on an axis-aligned uniform grid: element id and parent coordinates.
    pub fn locate(&self, x: f64, y: f64) -> Result<(usize, f64, f64)> {
        let x0 = self.coords[0];
        let hx = self.lx / (self.nx - 1) as f64;
        let hy = self.ly / (self.ny - 1) as f64;
        let sx = (x - x0[0]) / hx;
        let sy = (y - x0[1]) / hy;
        let tol = 1e-9;
        if sx < -tol || sy < -tol || sx > (self.nx - 1) as f64 + tol || sy > (self.ny - 1) as f64 + tol
        {
            return Err(FolError::InvalidArgument(format!(
                "point ({x}, {y}) lies outside the mesh"
            )));
        }
        let i = (sx.floor().max(0.0) as usize).min(self.nx - 2);
        let j = (sy.floor().max(0.0) as usize).min(self.ny - 2);
        let xi = 2.0 * (sx - i as f64) - 1.0;
        let eta = 2.0 * (sy - j as f64) - 1.0;
        Ok((j * (self.nx - 1) + i, xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0)))
    }

    /// Shape-function interpolation of a nodal field at a physical point.
    pub fn interpolate(&self, field: &[f64], x: f64, y: f64) -> Result<f64> {
        if field.len() != self.n_nodes() {
            return Err(FolError::dims("interpolated field", self.n_nodes(), field.len()));
        }
        let (e, xi, eta) = self.locate(x, y)?;
        let (n, _) = bilinear(xi, eta);
        let ue = self.gather(e, field);
        Ok((0..4).map(|a| n[a] * ue[a]).sum())
    }

    /// Resamples a nodal field onto a finer uniform grid over the same domain.
    pub fn upsample(&self, field: &[f64], fine_nx: usize, fine_ny: usize) -> Result<(Mesh, Vec<f64>)> {
        let x0 = self.coords[0];
        let mut coords = Vec::with_capacity(fine_nx * fine_ny);
        for j in 0..fine_ny {
            for i in 0..fine_nx {
                coords.push([
                    x0[0] + i as f64 * self.lx / (fine_nx - 1) as f64,
                    x0[1] + j as f64 * self.ly / (fine_ny - 1) as f64,
                ]);
            }
        }
        let values = coords
            .iter()
            .map(|p| self.interpolate(field, p[0], p[1]))
            .collect::<Result<Vec<_>>>()?;
        let fine = Mesh::with_coords(fine_nx, fine_ny, coords, self.quad_order())?;
        Ok((fine, values))
    }

    fn quad_order(&self) -> usize {
        match self.rule.len() {
            1 => 1,
            4 => 2,
            _ => 3,
        }
    }

    /// Node-to-node adjacency through shared elements, sorted, including the node itself.
    pub fn node_neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::with_capacity(9); self.n_nodes()];
        for ids in &self.elems {
            for &a in ids {
                for &b in ids {
                    adj[a].push(b);
                }
            }
        }
        for row in &mut adj {
            row.sort_unstable();
            row.dedup();
        }
        adj
    }

    /// Elements adjacent to each node.
    pub fn node_elements(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.n_nodes()];
        for (e, ids) in self.elems.iter().enumerate() {
            for &a in ids {
                out[a].push(e);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_element_grid() {
        let m = Mesh::build_grid(2, 2, 1.0, 1.0).unwrap();
        assert_eq!(m.n_nodes(), 4);
        assert_eq!(m.n_elems(), 1);
        assert_eq!(m.coords(), &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]);
        assert_eq!(m.elems()[0], [0, 1, 3, 2]);
    }

    #[test]
    fn grid_counts() {
        let m = Mesh::unit_square(11).unwrap();
        assert_eq!((m.n_nodes(), m.n_elems()), (121, 100));
        let m = Mesh::unit_square(51).unwrap();
        assert_eq!((m.n_nodes(), m.n_elems()), (2601, 2500));
    }

    #[test]
    fn rejects_small_grids() {
        assert!(matches!(
            Mesh::build_grid(1, 5, 1.0, 1.0),
            Err(FolError::InvalidMesh(_))
        ));
        assert!(Mesh::build_grid(3, 3, 0.0, 1.0).is_err());
    }

    #[test]
    fn shape_values_center_and_corner() {
        let m = Mesh::unit_square(2).unwrap();
        let s = m.shape_eval(0, 0.0, 0.0).unwrap();
        assert_eq!(s.n, [0.25; 4]);
        let s = m.shape_eval(0, -1.0, -1.0).unwrap();
        assert_eq!(s.n, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_element_jacobian() {
        let h = 0.1;
        let m = Mesh::build_grid(11, 11, 1.0, 1.0).unwrap();
        for &(xi, eta) in &[(0.0, 0.0), (-0.3, 0.7), (1.0, -1.0)] {
            let s = m.shape_eval(37, xi, eta).unwrap();
            assert!((s.det_j - h * h / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn degenerate_element_detected() {
        // Node 3 pulled past node 0 folds the element.
        let coords = vec![[0.0, 0.0], [1.0, 0.0], [-0.5, -0.5], [1.0, 1.0]];
        let err = Mesh::with_coords(2, 2, coords, 2).unwrap_err();
        assert!(matches!(err, FolError::DegenerateElement { elem: 0, .. }));
    }

    #[test]
    fn gauss_rules() {
        let r1 = gauss_rule(1).unwrap();
        assert_eq!(r1.points, vec![[0.0, 0.0]]);
        assert_eq!(r1.weights, vec![4.0]);
        let r2 = gauss_rule(2).unwrap();
        assert_eq!(r2.len(), 4);
        assert!((r2.weights.iter().sum::<f64>() - 4.0).abs() < 1e-15);
        assert!((r2.integrate(|xi, _| xi * xi) - 4.0 / 3.0).abs() < 1e-15);
        assert!(matches!(gauss_rule(4), Err(FolError::UnsupportedQuadrature(4))));
    }

    #[test]
    fn interpolation_and_locate() {
        let m = Mesh::unit_square(11).unwrap();
        let f: Vec<f64> = m.coords().iter().map(|p| 2.0 * p[0] - p[1] + 0.5).collect();
        for &(x, y) in &[(0.6, 0.25), (0.0, 0.0), (1.0, 1.0), (0.33, 0.91)] {
            let v = m.interpolate(&f, x, y).unwrap();
            assert!((v - (2.0 * x - y + 0.5)).abs() < 1e-13);
        }
        assert!(m.locate(1.5, 0.2).is_err());
    }

    #[test]
    fn upsample_preserves_bilinear_fields() {
        let m = Mesh::unit_square(6).unwrap();
        let f: Vec<f64> = m.coords().iter().map(|p| p[0] * p[1]).collect();
        let (fine, v) = m.upsample(&f, 16, 16).unwrap();
        for (p, val) in fine.coords().iter().zip(&v) {
            // x*y is bilinear on every element, so interpolation is exact.
            assert!((val - p[0] * p[1]).abs() < 1e-13);
        }
    }

    #[test]
    fn edges() {
        let m = Mesh::unit_square(4).unwrap();
        assert_eq!(m.edge_nodes(Edge::Left), vec![0, 4, 8, 12]);
        assert_eq!(m.edge_nodes(Edge::Top), vec![12, 13, 14, 15]);
        assert_eq!(m.boundary_nodes().len(), 12);
        assert_eq!(m.edge_segments(Edge::Bottom), vec![[0, 1], [1, 2], [2, 3]]);
    }
}
