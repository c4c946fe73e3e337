//! Plane-stress linear elasticity on the same structured meshes.
//!
//! DOFs are interleaved per node, `(u_x, u_y)` at `2 * node` and `2 * node + 1`.
//! Strains use Voigt order `(eps_xx, eps_yy, gamma_xy)` with engineering shear.
//! Young's modulus is a nodal field interpolated with the shape functions, so
//! element stiffness is linear in the nodal moduli just like the thermal case.

use crate::bc::{Dirichlet, DofPartition};
use crate::error::{FolError, Result};
use crate::linalg::CsrMatrix;
use crate::mesh::{Edge, GaussPoint, Mesh, PARENT_CORNERS};

pub type Mat3 = [[f64; 3]; 3];
pub type Mat8 = [[f64; 8]; 8];

pub fn constitutive_plane_stress(e: f64, nu: f64) -> Result<Mat3> {
    if !(e > 0.0) || !(0.0..0.5).contains(&nu) {
        return Err(FolError::InvalidArgument(format!(
            "plane stress needs E > 0 and 0 <= nu < 0.5, got E = {e}, nu = {nu}"
        )));
    }
    Ok(unchecked_plane_stress(e, nu))
}

#[inline]
fn unchecked_plane_stress(e: f64, nu: f64) -> Mat3 {
    let f = e / (1.0 - nu * nu);
    [
        [f, f * nu, 0.0],
        [f * nu, f, 0.0],
        [0.0, 0.0, f * (1.0 - nu) / 2.0],
    ]
}

/// 3x8 strain-displacement matrix at a quadrature point.
#[inline]
pub fn strain_displacement(b: &[[f64; 4]; 2]) -> [[f64; 8]; 3] {
    let mut out = [[0.0; 8]; 3];
    for a in 0..4 {
        out[0][2 * a] = b[0][a];
        out[1][2 * a + 1] = b[1][a];
        out[2][2 * a] = b[1][a];
        out[2][2 * a + 1] = b[0][a];
    }
    out
}

fn btcb(bm: &[[f64; 8]; 3], c: &Mat3, scale: f64, out: &mut Mat8) {
    let mut cb = [[0.0; 8]; 3];
    for r in 0..3 {
        for j in 0..8 {
            cb[r][j] = c[r][0] * bm[0][j] + c[r][1] * bm[1][j] + c[r][2] * bm[2][j];
        }
    }
    for i in 0..8 {
        for j in 0..8 {
            out[i][j] += scale * (bm[0][i] * cb[0][j] + bm[1][i] * cb[1][j] + bm[2][i] * cb[2][j]);
        }
    }
}

pub fn element_stiffness_elastic(ee: &[f64; 4], nu: f64, gps: &[GaussPoint]) -> Result<Mat8> {
    let mut k = [[0.0; 8]; 8];
    for gp in gps {
        let c = constitutive_plane_stress(gp.interp(ee), nu)?;
        btcb(&strain_displacement(&gp.b), &c, gp.w_det, &mut k);
    }
    Ok(k)
}

/// Constant traction on one side of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTraction {
    pub edge: Edge,
    pub traction: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct ElasticBvp<'m> {
    pub mesh: &'m Mesh,
    pub modulus: Vec<f64>,
    pub nu: f64,
    pub dirichlet: Dirichlet,
    pub tractions: Vec<EdgeTraction>,
}

impl<'m> ElasticBvp<'m> {
    pub fn new(mesh: &'m Mesh, modulus: Vec<f64>, nu: f64, dirichlet: Dirichlet) -> Result<Self> {
        if modulus.len() != mesh.n_nodes() {
            return Err(FolError::dims("modulus field", mesh.n_nodes(), modulus.len()));
        }
        if !(0.0..0.5).contains(&nu) {
            return Err(FolError::InvalidArgument(format!("Poisson ratio {nu} outside [0, 0.5)")));
        }
        if let Some(i) = modulus.iter().position(|e| !(*e > 0.0)) {
            return Err(FolError::InvalidArgument(format!("modulus at node {i} is not positive")));
        }
        Ok(ElasticBvp {
            mesh,
            modulus,
            nu,
            dirichlet,
            tractions: Vec::new(),
        })
    }

    pub fn with_traction(mut self, t: EdgeTraction) -> Self {
        self.tractions.push(t);
        self
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.mesh.n_nodes()
    }
}

/// Bottom edge clamped, top edge displaced by `top`.
pub fn clamped_top_displacement(mesh: &Mesh, top: [f64; 2]) -> Result<Dirichlet> {
    let bottom = mesh
        .edge_nodes(Edge::Bottom)
        .into_iter()
        .flat_map(|n| [(2 * n, 0.0), (2 * n + 1, 0.0)]);
    let upper = mesh
        .edge_nodes(Edge::Top)
        .into_iter()
        .flat_map(|n| [(2 * n, top[0]), (2 * n + 1, top[1])]);
    Dirichlet::new(bottom.chain(upper))
}

/// Element tensors for repeated evaluations: `kab[e][a]` is the element
/// stiffness for a unit modulus at local node `a` only.
#[derive(Debug, Clone)]
pub struct ElasticOperator<'m> {
    mesh: &'m Mesh,
    nu: f64,
    kab: Vec<[Mat8; 4]>,
    adjacency: Vec<Vec<usize>>,
}

impl<'m> ElasticOperator<'m> {
    pub fn new(mesh: &'m Mesh, nu: f64) -> Result<Self> {
        let c = constitutive_plane_stress(1.0, nu)?;
        let mut kab = Vec::with_capacity(mesh.n_elems());
        for e in 0..mesh.n_elems() {
            let mut ke = [[[0.0; 8]; 8]; 4];
            for gp in mesh.gauss_points(e) {
                let bm = strain_displacement(&gp.b);
                for (a, ka) in ke.iter_mut().enumerate() {
                    btcb(&bm, &c, gp.w_det * gp.n[a], ka);
                }
            }
            kab.push(ke);
        }
        Ok(ElasticOperator {
            mesh,
            nu,
            kab,
            adjacency: mesh.node_neighbors(),
        })
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.mesh.n_nodes()
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn element_dofs(ids: &[usize; 4]) -> [usize; 8] {
        let mut d = [0; 8];
        for a in 0..4 {
            d[2 * a] = 2 * ids[a];
            d[2 * a + 1] = 2 * ids[a] + 1;
        }
        d
    }

    fn local_matrix(&self, e: usize, ee: &[f64; 4]) -> Mat8 {
        let mut m = [[0.0; 8]; 8];
        for a in 0..4 {
            for i in 0..8 {
                for j in 0..8 {
                    m[i][j] += ee[a] * self.kab[e][a][i][j];
                }
            }
        }
        m
    }

    pub fn stiffness(&self, modulus: &[f64]) -> CsrMatrix {
        let mut mat = CsrMatrix::from_node_adjacency(&self.adjacency, 2);
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let m = self.local_matrix(e, &self.mesh.gather(e, modulus));
            let d = Self::element_dofs(ids);
            for i in 0..8 {
                for j in 0..8 {
                    mat.add(d[i], d[j], m[i][j]);
                }
            }
        }
        mat
    }

    /// `K(E) u` without forming the matrix.
    pub fn apply(&self, modulus: &[f64], u: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let m = self.local_matrix(e, &self.mesh.gather(e, modulus));
            let d = Self::element_dofs(ids);
            for i in 0..8 {
                let mut s = 0.0;
                for j in 0..8 {
                    s += m[i][j] * u[d[j]];
                }
                out[d[i]] += s;
            }
        }
    }

    pub fn load(&self, tractions: &[EdgeTraction]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dofs()];
        for t in tractions {
            for [a, b] in self.mesh.edge_segments(t.edge) {
                let pa = self.mesh.coords()[a];
                let pb = self.mesh.coords()[b];
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                for n in [a, b] {
                    f[2 * n] += 0.5 * len * t.traction[0];
                    f[2 * n + 1] += 0.5 * len * t.traction[1];
                }
            }
        }
        f
    }

    /// Strain energy `1/2 u_e^T K_e u_e` of every element.
    pub fn element_energies(&self, modulus: &[f64], u: &[f64]) -> Vec<f64> {
        self.mesh
            .elems()
            .iter()
            .enumerate()
            .map(|(e, ids)| {
                let m = self.local_matrix(e, &self.mesh.gather(e, modulus));
                let d = Self::element_dofs(ids);
                let mut s = 0.0;
                for i in 0..8 {
                    for j in 0..8 {
                        s += u[d[i]] * m[i][j] * u[d[j]];
                    }
                }
                0.5 * s
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct ElasticSolution {
    pub displacement: Vec<f64>,
    /// Nodal-averaged `(eps_xx, eps_yy, gamma_xy)`.
    pub strain: Vec<[f64; 3]>,
    /// Nodal-averaged `(s_xx, s_yy, s_xy)`.
    pub stress: Vec<[f64; 3]>,
}

impl ElasticSolution {
    pub fn magnitude(&self) -> Vec<f64> {
        self.displacement
            .chunks(2)
            .map(|c| (c[0] * c[0] + c[1] * c[1]).sqrt())
            .collect()
    }
}

pub fn solve_elastic(bvp: &ElasticBvp) -> Result<ElasticSolution> {
    if bvp.dirichlet.len() < 3 {
        return Err(FolError::IllPosed(format!(
            "only {} displacement constraints; rigid-body modes remain",
            bvp.dirichlet.len()
        )));
    }
    let op = ElasticOperator::new(bvp.mesh, bvp.nu)?;
    let k = op.stiffness(&bvp.modulus);
    let f = op.load(&bvp.tractions);
    let part = DofPartition::new(op.n_dofs(), &bvp.dirichlet)?;
    let mut u = vec![0.0; op.n_dofs()];
    for (d, v) in bvp.dirichlet.iter() {
        u[d] = v;
    }
    let ku = k.matvec(&u);
    let rhs: Vec<f64> = part.free().iter().map(|&d| f[d] - ku[d]).collect();
    let chol = k
        .restrict_band(part.free(), part.local_free())
        .cholesky()
        .map_err(|e| match e {
            FolError::NotPositiveDefinite { .. } => {
                FolError::IllPosed("under-constrained elastic problem".into())
            }
            other => other,
        })?;
    for (&d, v) in part.free().iter().zip(chol.solve(&rhs)) {
        u[d] = v;
    }
    let (strain, stress) = recover_strain_stress(bvp, &u)?;
    Ok(ElasticSolution {
        displacement: u,
        strain,
        stress,
    })
}

/// Corner strains `sym(grad u)` and stresses, averaged to nodes.
pub fn recover_strain_stress(bvp: &ElasticBvp, u: &[f64]) -> Result<(Vec<[f64; 3]>, Vec<[f64; 3]>)> {
    let mesh = bvp.mesh;
    let n = mesh.n_nodes();
    let mut eps = vec![[0.0; 3]; n];
    let mut sig = vec![[0.0; 3]; n];
    let mut count = vec![0usize; n];
    for (e, ids) in mesh.elems().iter().enumerate() {
        for (a, corner) in PARENT_CORNERS.iter().enumerate() {
            let s = mesh.shape_eval(e, corner[0], corner[1])?;
            let bm = strain_displacement(&s.b);
            let mut ev = [0.0; 3];
            for (r, evr) in ev.iter_mut().enumerate() {
                for b in 0..4 {
                    *evr += bm[r][2 * b] * u[2 * ids[b]] + bm[r][2 * b + 1] * u[2 * ids[b] + 1];
                }
            }
            let c = unchecked_plane_stress(bvp.modulus[ids[a]], bvp.nu);
            let node = ids[a];
            for r in 0..3 {
                eps[node][r] += ev[r];
                sig[node][r] += c[r][0] * ev[0] + c[r][1] * ev[1] + c[r][2] * ev[2];
            }
            count[node] += 1;
        }
    }
    for i in 0..n {
        let c = count[i] as f64;
        for r in 0..3 {
            eps[i][r] /= c;
            sig[i][r] /= c;
        }
    }
    Ok((eps, sig))
}
