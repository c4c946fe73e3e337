//! Steady heat conduction on quad meshes.
//!
//! Conductivity is a nodal field interpolated inside each element with the
//! bilinear shape functions, so every element stiffness is linear in the four
//! nodal conductivities:
//!
//! ```text
//! K_e(k_e) = sum_a k_a * Kab_e[a],  Kab_e[a] = sum_gp w detJ N_a B^T B
//! ```
//!
//! The residual is `r(k, T) = K(k) T - f` with `f = M Q - f_neumann`. Its
//! derivative with respect to the nodal conductivity, applied to a direction
//! `v`, is therefore simply `K(v) T`; both the sensitivity routes and the
//! Sobolev loss rely on that identity.

use crate::bc::{Dirichlet, DofPartition};
use crate::error::{FolError, Result};
use crate::linalg::{norm2, CsrMatrix, Mat};
use crate::mesh::{Edge, GaussPoint, Mesh};

/// Temperature-dependent conductivity `k(x, T) = k_h(x) * (m1 + beta * T^m2)`.
///
/// `k_h` is the nodal conductivity field of the problem; with a unit field
/// this reduces to `m1 + beta * T^m2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NonlinearConductivity {
    pub m1: f64,
    pub m2: f64,
    pub beta: f64,
}

impl NonlinearConductivity {
    /// Multiplier `m1 + beta T^m2` and its temperature derivative.
    #[inline]
    pub fn factor(&self, t: f64) -> (f64, f64) {
        if self.beta == 0.0 {
            return (self.m1, 0.0);
        }
        let (p, dp) = if self.m2.fract() == 0.0 && self.m2.abs() < 64.0 {
            let m = self.m2 as i32;
            (t.powi(m), if m == 0 { 0.0 } else { self.m2 * t.powi(m - 1) })
        } else {
            (t.powf(self.m2), self.m2 * t.powf(self.m2 - 1.0))
        };
        (self.m1 + self.beta * p, self.beta * dp)
    }
}

/// Constant outward normal flux on one side of the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFlux {
    pub edge: Edge,
    pub flux: f64,
}

#[derive(Debug, Clone)]
pub struct ThermalBvp<'m> {
    pub mesh: &'m Mesh,
    pub conductivity: Vec<f64>,
    pub source: Vec<f64>,
    pub dirichlet: Dirichlet,
    pub neumann: Vec<EdgeFlux>,
    pub nonlinear: Option<NonlinearConductivity>,
}

impl<'m> ThermalBvp<'m> {
    pub fn new(
        mesh: &'m Mesh,
        conductivity: Vec<f64>,
        source: Vec<f64>,
        dirichlet: Dirichlet,
    ) -> Result<Self> {
        let n = mesh.n_nodes();
        if conductivity.len() != n {
            return Err(FolError::dims("conductivity field", n, conductivity.len()));
        }
        if source.len() != n {
            return Err(FolError::dims("source field", n, source.len()));
        }
        if dirichlet.dofs().iter().any(|&d| d >= n) {
            return Err(FolError::InvalidArgument(
                "Dirichlet node out of range".into(),
            ));
        }
        Ok(ThermalBvp {
            mesh,
            conductivity,
            source,
            dirichlet,
            neumann: Vec::new(),
            nonlinear: None,
        })
    }

    /// Fixed temperatures on the left and right edges, flux-free elsewhere, no source.
    pub fn left_right(mesh: &'m Mesh, conductivity: Vec<f64>, t_left: f64, t_right: f64) -> Result<Self> {
        let dirichlet = left_right_dirichlet(mesh, t_left, t_right)?;
        let n = mesh.n_nodes();
        Self::new(mesh, conductivity, vec![0.0; n], dirichlet)
    }

    pub fn with_neumann(mut self, flux: EdgeFlux) -> Self {
        self.neumann.push(flux);
        self
    }

    pub fn with_nonlinear(mut self, nl: NonlinearConductivity) -> Self {
        self.nonlinear = Some(nl);
        self
    }

    pub fn with_conductivity(&self, conductivity: Vec<f64>) -> Result<Self> {
        let mut out = self.clone();
        if conductivity.len() != self.mesh.n_nodes() {
            return Err(FolError::dims("conductivity field", self.mesh.n_nodes(), conductivity.len()));
        }
        out.conductivity = conductivity;
        Ok(out)
    }

    pub fn partition(&self) -> Result<DofPartition> {
        DofPartition::new(self.mesh.n_nodes(), &self.dirichlet)
    }

    fn check_well_posed(&self) -> Result<()> {
        if self.dirichlet.is_empty() {
            return Err(FolError::IllPosed(
                "no Dirichlet data: the stiffness matrix is singular".into(),
            ));
        }
        if self.nonlinear.is_none() {
            if let Some((i, k)) = self
                .conductivity
                .iter()
                .enumerate()
                .find(|(_, k)| !(**k > 0.0))
            {
                return Err(FolError::IllPosed(format!(
                    "conductivity must be positive, node {i} has {k}"
                )));
            }
        }
        Ok(())
    }

    /// Nodal field with the Dirichlet values written in and zeros elsewhere.
    pub fn lift(&self) -> Vec<f64> {
        let mut t = vec![0.0; self.mesh.n_nodes()];
        for (d, v) in self.dirichlet.iter() {
            t[d] = v;
        }
        t
    }
}

pub fn left_right_dirichlet(mesh: &Mesh, t_left: f64, t_right: f64) -> Result<Dirichlet> {
    let left = mesh.edge_nodes(Edge::Left).into_iter().map(|n| (n, t_left));
    let right = mesh.edge_nodes(Edge::Right).into_iter().map(|n| (n, t_right));
    Dirichlet::new(left.chain(right))
}

/// Element residual `sum_gp w detJ [B^T (N.k) B T_e - N (N.Q)]`, no Neumann terms.
pub fn element_residual(te: &[f64; 4], ke: &[f64; 4], qe: &[f64; 4], gps: &[GaussPoint]) -> [f64; 4] {
    let mut r = [0.0; 4];
    for gp in gps {
        let k = gp.interp(ke);
        let q = gp.interp(qe);
        let g = gp.grad(te);
        for i in 0..4 {
            r[i] += gp.w_det * (k * (gp.b[0][i] * g[0] + gp.b[1][i] * g[1]) - gp.n[i] * q);
        }
    }
    r
}

/// Element conduction matrix for nodal conductivities `ke`.
pub fn element_stiffness(ke: &[f64; 4], gps: &[GaussPoint]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for gp in gps {
        let k = gp.interp(ke) * gp.w_det;
        for i in 0..4 {
            for j in 0..4 {
                out[i][j] += k * (gp.b[0][i] * gp.b[0][j] + gp.b[1][i] * gp.b[1][j]);
            }
        }
    }
    out
}

type Mat4 = [[f64; 4]; 4];

/// Precomputed element tensors for repeated thermal evaluations on one mesh.
///
/// `kab[e][a]` is the element stiffness for a unit conductivity at local node
/// `a` only; `mass[e]` is the consistent element mass matrix.
#[derive(Debug, Clone)]
pub struct ThermalOperator<'m> {
    mesh: &'m Mesh,
    kab: Vec<[Mat4; 4]>,
    mass: Vec<Mat4>,
    adjacency: Vec<Vec<usize>>,
}

impl<'m> ThermalOperator<'m> {
    pub fn new(mesh: &'m Mesh) -> Self {
        let mut kab = Vec::with_capacity(mesh.n_elems());
        let mut mass = Vec::with_capacity(mesh.n_elems());
        for e in 0..mesh.n_elems() {
            let mut ke = [[[0.0; 4]; 4]; 4];
            let mut me = [[0.0; 4]; 4];
            for gp in mesh.gauss_points(e) {
                for a in 0..4 {
                    for i in 0..4 {
                        for j in 0..4 {
                            ke[a][i][j] += gp.w_det
                                * gp.n[a]
                                * (gp.b[0][i] * gp.b[0][j] + gp.b[1][i] * gp.b[1][j]);
                        }
                        me[a][i] += gp.w_det * gp.n[a] * gp.n[i];
                    }
                }
            }
            kab.push(ke);
            mass.push(me);
        }
        ThermalOperator {
            mesh,
            kab,
            mass,
            adjacency: mesh.node_neighbors(),
        }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.mesh
    }

    pub fn n(&self) -> usize {
        self.mesh.n_nodes()
    }

    #[inline]
    fn local_matrix(&self, e: usize, ke: &[f64; 4]) -> Mat4 {
        let mut m = [[0.0; 4]; 4];
        let kab = &self.kab[e];
        for a in 0..4 {
            let ka = ke[a];
            if ka == 0.0 {
                continue;
            }
            for i in 0..4 {
                for j in 0..4 {
                    m[i][j] += ka * kab[a][i][j];
                }
            }
        }
        m
    }

    pub fn empty_matrix(&self) -> CsrMatrix {
        CsrMatrix::from_node_adjacency(&self.adjacency, 1)
    }

    /// Global conduction matrix `K(k)`.
    pub fn stiffness(&self, k: &[f64]) -> CsrMatrix {
        let mut mat = self.empty_matrix();
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let ke = self.mesh.gather(e, k);
            let m = self.local_matrix(e, &ke);
            for i in 0..4 {
                for j in 0..4 {
                    mat.add(ids[i], ids[j], m[i][j]);
                }
            }
        }
        mat
    }

    /// `K(k) t` without forming the matrix.
    pub fn apply(&self, k: &[f64], t: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let ke = self.mesh.gather(e, k);
            let te = self.mesh.gather(e, t);
            let m = self.local_matrix(e, &ke);
            for i in 0..4 {
                out[ids[i]] += m[i][0] * te[0] + m[i][1] * te[1] + m[i][2] * te[2] + m[i][3] * te[3];
            }
        }
    }

    /// `K(k) X` for every column of a row-major `N x m` matrix.
    pub fn apply_multi(&self, k: &[f64], x: &Mat) -> Mat {
        let m = x.cols();
        let mut out = Mat::zeros(self.n(), m);
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let lm = self.local_matrix(e, &self.mesh.gather(e, k));
            for i in 0..4 {
                let row = out.row_mut(ids[i]);
                for (l, &node) in ids.iter().enumerate() {
                    let c = lm[i][l];
                    row.iter_mut().zip(x.row(node)).for_each(|(o, v)| *o += c * v);
                }
            }
        }
        out
    }

    /// Columns `K(A_j) t`, i.e. `(dr/dk) A` at state `t`.
    pub fn dr_dk_multi(&self, t: &[f64], a: &Mat) -> Mat {
        let m = a.cols();
        let mut out = Mat::zeros(self.n(), m);
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let te = self.mesh.gather(e, t);
            let kab = &self.kab[e];
            for i in 0..4 {
                let row = out.row_mut(ids[i]);
                for (s, &node) in ids.iter().enumerate() {
                    let g = kab[s][i][0] * te[0] + kab[s][i][1] * te[1] + kab[s][i][2] * te[2] + kab[s][i][3] * te[3];
                    row.iter_mut().zip(a.row(node)).for_each(|(o, v)| *o += g * v);
                }
            }
        }
        out
    }

    /// `sum_j K(A_j) r_j`: the state gradient of `sum_j r_j . K(A_j) t`.
    pub fn dr_dk_multi_vjp(&self, a: &Mat, r: &Mat) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let mut o = [[0.0; 4]; 4];
            for s in 0..4 {
                let ar = a.row(ids[s]);
                for i in 0..4 {
                    o[s][i] = ar.iter().zip(r.row(ids[i])).map(|(x, y)| x * y).sum();
                }
            }
            let kab = &self.kab[e];
            for l in 0..4 {
                let mut acc = 0.0;
                for s in 0..4 {
                    for i in 0..4 {
                        acc += o[s][i] * kab[s][i][l];
                    }
                }
                out[ids[l]] += acc;
            }
        }
        out
    }

    /// Load vector from a nodal source and constant edge fluxes.
    pub fn load(&self, source: &[f64], neumann: &[EdgeFlux]) -> Vec<f64> {
        let mut f = vec![0.0; self.n()];
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let qe = self.mesh.gather(e, source);
            for i in 0..4 {
                let mut s = 0.0;
                for a in 0..4 {
                    s += self.mass[e][a][i] * qe[a];
                }
                f[ids[i]] += s;
            }
        }
        for nf in neumann {
            for [a, b] in self.mesh.edge_segments(nf.edge) {
                let pa = self.mesh.coords()[a];
                let pb = self.mesh.coords()[b];
                let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
                f[a] -= 0.5 * nf.flux * len;
                f[b] -= 0.5 * nf.flux * len;
            }
        }
        f
    }

    /// `(dr/dk) v = K(v) t`: residual change along a conductivity direction.
    pub fn dr_dk_apply(&self, t: &[f64], v: &[f64], out: &mut [f64]) {
        self.apply(v, t, out);
    }

    /// `lambda^T (dr/dk)`, an N-vector over nodal conductivities.
    pub fn dr_dk_transpose_apply(&self, t: &[f64], lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let te = self.mesh.gather(e, t);
            let le = self.mesh.gather(e, lambda);
            for a in 0..4 {
                let mut s = 0.0;
                for i in 0..4 {
                    for j in 0..4 {
                        s += le[i] * self.kab[e][a][i][j] * te[j];
                    }
                }
                out[ids[a]] += s;
            }
        }
        out
    }

    /// Explicit sparse tangent `dr/dk` at state `t`; entry `(i, m)` is `dr_i/dk_m`.
    pub fn dr_dk_matrix(&self, t: &[f64]) -> CsrMatrix {
        let mut mat = self.empty_matrix();
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let te = self.mesh.gather(e, t);
            for a in 0..4 {
                for i in 0..4 {
                    let s: f64 = (0..4).map(|j| self.kab[e][a][i][j] * te[j]).sum();
                    mat.add(ids[i], ids[a], s);
                }
            }
        }
        mat
    }

    /// Nonlinear residual `r(T) = int B^T k(x, T) grad T - f` and, optionally, its tangent.
    pub fn nonlinear_residual(
        &self,
        kh: &[f64],
        nl: &NonlinearConductivity,
        t: &[f64],
        f: &[f64],
        tangent: Option<&mut CsrMatrix>,
    ) -> Vec<f64> {
        let mut r: Vec<f64> = f.iter().map(|v| -v).collect();
        let mut tangent = tangent;
        if let Some(m) = tangent.as_deref_mut() {
            m.clear();
        }
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let ke = self.mesh.gather(e, kh);
            let te = self.mesh.gather(e, t);
            let mut re = [0.0; 4];
            let mut kt = [[0.0; 4]; 4];
            for gp in self.mesh.gauss_points(e) {
                let kx = gp.interp(&ke);
                let (fac, dfac) = nl.factor(gp.interp(&te));
                let g = gp.grad(&te);
                let k = kx * fac;
                let dk = kx * dfac;
                for i in 0..4 {
                    let bg = gp.b[0][i] * g[0] + gp.b[1][i] * g[1];
                    re[i] += gp.w_det * k * bg;
                    if tangent.is_some() {
                        for j in 0..4 {
                            kt[i][j] += gp.w_det
                                * (k * (gp.b[0][i] * gp.b[0][j] + gp.b[1][i] * gp.b[1][j])
                                    + dk * gp.n[j] * bg);
                        }
                    }
                }
            }
            for i in 0..4 {
                r[ids[i]] += re[i];
            }
            if let Some(m) = tangent.as_deref_mut() {
                for i in 0..4 {
                    for j in 0..4 {
                        m.add(ids[i], ids[j], kt[i][j]);
                    }
                }
            }
        }
        r
    }

    /// `J_t^T w` for the nonlinear tangent, element by element.
    pub fn nonlinear_tangent_transpose_apply(
        &self,
        kh: &[f64],
        nl: &NonlinearConductivity,
        t: &[f64],
        w: &[f64],
    ) -> Vec<f64> {
        let mut out = vec![0.0; self.n()];
        for (e, ids) in self.mesh.elems().iter().enumerate() {
            let ke = self.mesh.gather(e, kh);
            let te = self.mesh.gather(e, t);
            let we = self.mesh.gather(e, w);
            let mut oe = [0.0; 4];
            for gp in self.mesh.gauss_points(e) {
                let kx = gp.interp(&ke);
                let (fac, dfac) = nl.factor(gp.interp(&te));
                let g = gp.grad(&te);
                let gw = gp.grad(&we);
                let wb_g = gw[0] * g[0] + gw[1] * g[1];
                for j in 0..4 {
                    // sum_i w_i K_t[i][j]
                    oe[j] += gp.w_det
                        * (kx * fac * (gw[0] * gp.b[0][j] + gw[1] * gp.b[1][j])
                            + kx * dfac * gp.n[j] * wb_g);
                }
            }
            for j in 0..4 {
                out[ids[j]] += oe[j];
            }
        }
        out
    }
}

/// Global system `K T = f` together with the DOF partition.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    pub k: CsrMatrix,
    pub f: Vec<f64>,
    pub partition: DofPartition,
}

pub fn assemble(bvp: &ThermalBvp) -> Result<AssembledSystem> {
    if bvp.nonlinear.is_some() {
        return Err(FolError::InvalidArgument(
            "assemble expects a linear problem; use solve_newton".into(),
        ));
    }
    let op = ThermalOperator::new(bvp.mesh);
    Ok(AssembledSystem {
        k: op.stiffness(&bvp.conductivity),
        f: op.load(&bvp.source, &bvp.neumann),
        partition: bvp.partition()?,
    })
}

impl AssembledSystem {
    /// Solves with the prescribed values of `dirichlet` by banded Cholesky on `K_ff`.
    pub fn solve(&self, dirichlet: &Dirichlet) -> Result<Vec<f64>> {
        let p = &self.partition;
        let mut t = vec![0.0; p.n()];
        for (d, v) in dirichlet.iter() {
            t[d] = v;
        }
        let kt = self.k.matvec(&t);
        let rhs: Vec<f64> = p.free().iter().map(|&d| self.f[d] - kt[d]).collect();
        let band = self.k.restrict_band(p.free(), p.local_free());
        let chol = band.cholesky()?;
        let tf = chol.solve(&rhs);
        for (&d, v) in p.free().iter().zip(tf) {
            t[d] = v;
        }
        Ok(t)
    }

    /// Solves `K_ff x = b` for an arbitrary right-hand side on the free DOFs.
    pub fn solve_free(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.factor_free()?.solve(rhs))
    }

    /// Cholesky factor of `K_ff` for repeated solves.
    pub fn factor_free(&self) -> Result<crate::linalg::BandCholesky> {
        let p = &self.partition;
        self.k.restrict_band(p.free(), p.local_free()).cholesky()
    }

    pub fn residual(&self, t: &[f64]) -> Vec<f64> {
        let mut r = self.k.matvec(t);
        for (ri, fi) in r.iter_mut().zip(&self.f) {
            *ri -= fi;
        }
        r
    }
}

pub fn solve_linear(bvp: &ThermalBvp) -> Result<Vec<f64>> {
    bvp.check_well_posed()?;
    let sys = assemble(bvp)?;
    sys.solve(&bvp.dirichlet)
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    pub temperature: Vec<f64>,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
}

pub fn solve_newton(bvp: &ThermalBvp, tol: f64, max_iter: usize) -> Result<NewtonReport> {
    bvp.check_well_posed()?;
    let nl = bvp.nonlinear.ok_or_else(|| {
        FolError::InvalidArgument("solve_newton needs nonlinear conductivity parameters".into())
    })?;
    let op = ThermalOperator::new(bvp.mesh);
    let part = bvp.partition()?;
    let f = op.load(&bvp.source, &bvp.neumann);

    // initial guess: linear solve with the conductivity frozen at the mean Dirichlet temperature
    let t_mean = bvp.dirichlet.values().iter().sum::<f64>() / bvp.dirichlet.len() as f64;
    let k0 = nl.factor(t_mean).0;
    let lin = bvp.with_conductivity(bvp.conductivity.iter().map(|k| k * k0).collect())?;
    let mut lin = lin;
    lin.nonlinear = None;
    let mut t = solve_linear(&lin)?;

    let free_norm = |r: &[f64]| -> f64 { norm2(&part.gather_free(r)) };
    let mut tangent = op.empty_matrix();
    let mut r = op.nonlinear_residual(&bvp.conductivity, &nl, &t, &f, Some(&mut tangent));
    let mut rn = free_norm(&r);
    let mut history = vec![rn];
    for it in 0..max_iter {
        if rn <= tol {
            return Ok(NewtonReport {
                temperature: t,
                residual_history: history,
                iterations: it,
            });
        }
        let band = tangent.restrict_band(part.free(), part.local_free());
        let lu = band.lu()?;
        let rhs: Vec<f64> = part.free().iter().map(|&d| -r[d]).collect();
        let dt = lu.solve(&rhs);
        let mut step = 1.0;
        loop {
            let mut trial = t.clone();
            for (&d, v) in part.free().iter().zip(&dt) {
                trial[d] += step * v;
            }
            let r_trial = op.nonlinear_residual(&bvp.conductivity, &nl, &trial, &f, None);
            let rn_trial = free_norm(&r_trial);
            if rn_trial.is_finite() && (rn_trial < rn || step < 1e-3) {
                t = trial;
                break;
            }
            step *= 0.5;
        }
        r = op.nonlinear_residual(&bvp.conductivity, &nl, &t, &f, Some(&mut tangent));
        rn = free_norm(&r);
        if !rn.is_finite() {
            return Err(FolError::NewtonDiverged {
                iterations: it + 1,
                history,
            });
        }
        history.push(rn);
    }
    if rn <= tol {
        return Ok(NewtonReport {
            temperature: t,
            residual_history: history,
            iterations: max_iter,
        });
    }
    Err(FolError::NewtonDiverged {
        iterations: max_iter,
        history,
    })
}

/// Nodal heat flux `q = -k grad T`, evaluated at element corners and averaged
/// over the elements sharing each node.
pub fn recover_flux(bvp: &ThermalBvp, t: &[f64]) -> Result<Vec<[f64; 2]>> {
    let mesh = bvp.mesh;
    if t.len() != mesh.n_nodes() {
        return Err(FolError::dims("temperature field", mesh.n_nodes(), t.len()));
    }
    let mut sum = vec![[0.0; 2]; mesh.n_nodes()];
    let mut count = vec![0usize; mesh.n_nodes()];
    for (e, ids) in mesh.elems().iter().enumerate() {
        let te = mesh.gather(e, t);
        for (a, corner) in crate::mesh::PARENT_CORNERS.iter().enumerate() {
            let s = mesh.shape_eval(e, corner[0], corner[1])?;
            let mut g = [0.0; 2];
            for b in 0..4 {
                g[0] += s.b[0][b] * te[b];
                g[1] += s.b[1][b] * te[b];
            }
            let mut k = bvp.conductivity[ids[a]];
            if let Some(nl) = &bvp.nonlinear {
                k *= nl.factor(te[a]).0;
            }
            sum[ids[a]][0] -= k * g[0];
            sum[ids[a]][1] -= k * g[1];
            count[ids[a]] += 1;
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| [s[0] / c as f64, s[1] / c as f64])
        .collect())
}

/// `100 * ||pred - reference|| / ||reference||`.
pub fn relative_error(pred: &[f64], reference: &[f64]) -> Result<f64> {
    if pred.len() != reference.len() {
        return Err(FolError::dims("relative error", reference.len(), pred.len()));
    }
    let den = norm2(reference);
    if den == 0.0 {
        return Err(FolError::InvalidArgument(
            "reference field has zero norm".into(),
        ));
    }
    let num = pred
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    Ok(100.0 * num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_element() -> Mesh {
        Mesh::unit_square(2).unwrap()
    }

    /// Analytic bilinear conduction matrix of a unit square element (k = 1).
    fn analytic_ke() -> [[f64; 4]; 4] {
        let s = 1.0 / 6.0;
        [
            [4.0 * s, -s, -2.0 * s, -s],
            [-s, 4.0 * s, -s, -2.0 * s],
            [-2.0 * s, -s, 4.0 * s, -s],
            [-s, -2.0 * s, -s, 4.0 * s],
        ]
    }

    #[test]
    fn element_matrix_matches_closed_form() {
        let m = unit_element();
        let ke = element_stiffness(&[1.0; 4], m.gauss_points(0));
        let exact = analytic_ke();
        for i in 0..4 {
            for j in 0..4 {
                assert!((ke[i][j] - exact[i][j]).abs() < 1e-15);
            }
        }
        let te = [0.0, 1.0, 0.0, 1.0];
        let r = element_residual(&te, &[1.0; 4], &[0.0; 4], m.gauss_points(0));
        for i in 0..4 {
            let expect: f64 = (0..4).map(|j| exact[i][j] * te[j]).sum();
            assert!((r[i] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_field_has_zero_residual() {
        let m = unit_element();
        let r = element_residual(&[0.7; 4], &[0.3, 2.0, 1.0, 0.5], &[0.0; 4], m.gauss_points(0));
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn uniform_source_load_is_lumped_quarter() {
        let h = 0.25;
        let m = Mesh::build_grid(2, 2, h, h).unwrap();
        let r = element_residual(&[0.0; 4], &[1.0; 4], &[3.0; 4], m.gauss_points(0));
        for v in r {
            assert!((v + 3.0 * h * h / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn assembly_properties() {
        let m = Mesh::unit_square(2).unwrap();
        let op = ThermalOperator::new(&m);
        let k = op.stiffness(&[1.0; 4]);
        let exact = analytic_ke();
        let ids = m.elems()[0];
        for i in 0..4 {
            for j in 0..4 {
                assert!((k.get(ids[i], ids[j]) - exact[i][j]).abs() < 1e-15);
            }
        }
        let m = Mesh::unit_square(5).unwrap();
        let op = ThermalOperator::new(&m);
        let k1 = op.stiffness(&vec![1.3; 25]);
        let rows = k1.matvec(&[1.0; 25]);
        assert!(rows.iter().all(|v| v.abs() < 1e-14));
        let mut k2 = op.stiffness(&vec![2.6; 25]);
        k2.scale(0.5);
        assert_eq!(k1, k2);
    }

    #[test]
    fn linear_field_is_exact() {
        for n in [2, 5, 11] {
            let m = Mesh::unit_square(n).unwrap();
            let bvp = ThermalBvp::left_right(&m, vec![1.0; m.n_nodes()], 1.0, 0.1).unwrap();
            let t = solve_linear(&bvp).unwrap();
            for (p, v) in m.coords().iter().zip(&t) {
                assert!((v - (1.0 - 0.9 * p[0])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_dirichlet_is_ill_posed() {
        let m = Mesh::unit_square(3).unwrap();
        let bvp = ThermalBvp::new(&m, vec![1.0; 9], vec![0.0; 9], Dirichlet::empty()).unwrap();
        assert!(matches!(solve_linear(&bvp), Err(FolError::IllPosed(_))));
    }

    #[test]
    fn flux_of_linear_field() {
        let m = Mesh::unit_square(6).unwrap();
        for kval in [1.0, 0.5] {
            let bvp = ThermalBvp::left_right(&m, vec![kval; 36], 1.0, 0.0).unwrap();
            let t = solve_linear(&bvp).unwrap();
            let q = recover_flux(&bvp, &t).unwrap();
            for qi in q {
                assert!((qi[0] - kval).abs() < 1e-12 && qi[1].abs() < 1e-12);
            }
        }
    }

    #[test]
    fn relative_error_values() {
        assert_eq!(relative_error(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = [0.3, -1.2, 2.0];
        let p: Vec<f64> = r.iter().map(|v| 1.01 * v).collect();
        assert!((relative_error(&p, &r).unwrap() - 1.0).abs() < 1e-12);
        let e = relative_error(&[1.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((e - 100.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(relative_error(&[1.0], &[0.0]).is_err());
        assert!(relative_error(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn newton_without_nonlinearity_matches_linear() {
        let m = Mesh::unit_square(7).unwrap();
        let bvp = ThermalBvp::left_right(&m, vec![1.0; 49], 1.0, 0.1)
            .unwrap()
            .with_nonlinear(NonlinearConductivity {
                m1: 2.0,
                m2: 4.0,
                beta: 0.0,
            });
        let t = solve_newton(&bvp, 1e-12, 20).unwrap().temperature;
        let lin = ThermalBvp::left_right(&m, vec![2.0; 49], 1.0, 0.1).unwrap();
        let tl = solve_linear(&lin).unwrap();
        for (a, b) in t.iter().zip(&tl) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
