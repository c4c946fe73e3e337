//! FOL loss terms and their gradients with respect to network parameters.
//!
//! A training sample couples the network input `c` with the discrete physics
//! it should satisfy, behind the [`Physics`] trait. The trait exposes the
//! residual `r(T)`, its transpose tangent, an optional discrete potential,
//! and the explicit design derivative `dr/dc` at fixed `T`. That is enough
//! for all four loss terms:
//!
//! * `L_en = 1/2 T^T K T - T^T f`, with gradient `K T - f`;
//! * `L_re = sum_free r_i^2`;
//! * `L_bc = w_db sum (T_i - T_i,db)^2` (soft boundary mode only);
//! * `L_se = sum_free,j (dr_i/dc_j)^2` with `dr/dc = K dT/dc + dr/dc|_T`.
//!
//! Batch gradients are reduced in fixed chunk order, so the result does not
//! depend on the number of worker threads.

use rayon::prelude::*;

use crate::bc::{Dirichlet, DofPartition};
use crate::elasticity::{EdgeTraction, ElasticBvp, ElasticOperator};
use crate::error::{FolError, Result};
use crate::linalg::{dot, Mat};
use crate::mesh::Edge;
use crate::nn::{nan_guard, Mlp};
use crate::param::{FourierMap, Parameterization};
use crate::thermal::{EdgeFlux, NonlinearConductivity, ThermalBvp, ThermalOperator};

/// Discrete physics of one training sample.
pub trait Physics: Sync {
    /// Network input for this sample.
    fn input(&self) -> &[f64];
    fn n_dofs(&self) -> usize;
    fn dirichlet(&self) -> &Dirichlet;
    fn partition(&self) -> &DofPartition;
    /// Full residual `r(T)`, reactions included on fixed DOFs.
    fn residual(&self, t: &[f64]) -> Vec<f64>;
    /// `(dr/dT)^T w`.
    fn residual_vjp(&self, t: &[f64], w: &[f64]) -> Vec<f64>;
    /// Discrete potential with `d/dT = r`, when the physics has one. For
    /// nonlinear physics, the gradient relation holds with coefficients frozen.
    fn energy(&self, t: &[f64]) -> Option<f64>;
    /// Whether `r` is affine in `T`.
    fn is_linear(&self) -> bool;
    /// `K v` for affine physics.
    fn stiffness_apply(&self, v: &[f64]) -> Vec<f64>;
    /// `K X` column by column.
    fn stiffness_apply_multi(&self, x: &Mat) -> Mat {
        let mut out = Mat::zeros(x.rows(), x.cols());
        for j in 0..x.cols() {
            for (i, v) in self.stiffness_apply(&x.column(j)).into_iter().enumerate() {
                out.row_mut(i)[j] = v;
            }
        }
        out
    }
    /// Number of design variables the Sobolev term differentiates against.
    fn design_dim(&self) -> usize;
    /// `d(prescribed values)/dc`, one row per fixed DOF in Dirichlet order.
    fn fixed_value_jacobian(&self) -> Option<&Mat> {
        None
    }
    /// `dr/dc` at fixed `T` (`N x M`), or `None` if identically zero.
    fn explicit_design_jacobian(&self, t: &[f64]) -> Option<Mat>;
    /// `d/dT <rbar, dr/dc|_T>`, or `None` if it vanishes.
    fn explicit_design_vjp(&self, rbar: &Mat) -> Option<Vec<f64>>;
}

/// Heat conduction sample: conductivity, source, and which of them carries the design.
#[derive(Debug, Clone)]
pub struct ThermalSample<'a> {
    op: &'a ThermalOperator<'a>,
    input: Vec<f64>,
    conductivity: Vec<f64>,
    source: Vec<f64>,
    neumann: Vec<EdgeFlux>,
    load: Vec<f64>,
    /// `dk/dc` for conductivity designs.
    k_tangent: Option<Mat>,
    /// `df/dc` for source designs.
    load_tangent: Option<Mat>,
    dirichlet: Dirichlet,
    partition: DofPartition,
    nonlinear: Option<NonlinearConductivity>,
}

impl<'a> ThermalSample<'a> {
    /// Sample with no design derivative; `input` is fed to the network as is.
    pub fn fixed(
        op: &'a ThermalOperator<'a>,
        input: Vec<f64>,
        conductivity: Vec<f64>,
        source: Vec<f64>,
        dirichlet: Dirichlet,
    ) -> Result<Self> {
        let n = op.n();
        if conductivity.len() != n {
            return Err(FolError::dims("conductivity field", n, conductivity.len()));
        }
        if source.len() != n {
            return Err(FolError::dims("source field", n, source.len()));
        }
        let partition = DofPartition::new(n, &dirichlet)?;
        let load = op.load(&source, &[]);
        Ok(ThermalSample {
            op,
            input,
            conductivity,
            source,
            neumann: Vec::new(),
            load,
            k_tangent: None,
            load_tangent: None,
            dirichlet,
            partition,
            nonlinear: None,
        })
    }

    /// Conductivity `k(c)` from a parameterization; the design is the network input.
    pub fn conductivity_design(
        op: &'a ThermalOperator<'a>,
        param: &Parameterization,
        c: Vec<f64>,
        source: Vec<f64>,
        dirichlet: Dirichlet,
    ) -> Result<Self> {
        let (k, a) = param.design_to_nodal(&c)?;
        let mut s = Self::fixed(op, c, k, source, dirichlet)?;
        s.k_tangent = Some(a);
        Ok(s)
    }

    /// Heat source `Q(c)` from a Fourier map; the design is the network input.
    pub fn source_design(
        op: &'a ThermalOperator<'a>,
        conductivity: Vec<f64>,
        qmap: &FourierMap,
        c: Vec<f64>,
        dirichlet: Dirichlet,
    ) -> Result<Self> {
        let (q, dq) = qmap.field_with_tangent(&c)?;
        let mut s = Self::fixed(op, c, conductivity, q, dirichlet)?;
        let n = op.n();
        let m = dq.cols();
        let mut df = Mat::zeros(n, m);
        for j in 0..m {
            let col = op.load(&dq.column(j), &[]);
            for i in 0..n {
                df.row_mut(i)[j] = col[i];
            }
        }
        s.load_tangent = Some(df);
        Ok(s)
    }

    pub fn with_neumann(mut self, flux: EdgeFlux) -> Self {
        self.neumann.push(flux);
        self.load = self.op.load(&self.source, &self.neumann);
        self
    }

    /// Temperature-dependent conductivity `k(x) (m1 + beta T^m2)`.
    pub fn with_nonlinear(mut self, nl: NonlinearConductivity) -> Self {
        self.nonlinear = Some(nl);
        self
    }

    pub fn conductivity(&self) -> &[f64] {
        &self.conductivity
    }

    pub fn source(&self) -> &[f64] {
        &self.source
    }

    pub fn conductivity_tangent(&self) -> Option<&Mat> {
        self.k_tangent.as_ref()
    }

    pub fn operator(&self) -> &'a ThermalOperator<'a> {
        self.op
    }

    /// Boundary value problem for reference FEM solves.
    pub fn to_bvp(&self) -> Result<ThermalBvp<'a>> {
        let mut bvp = ThermalBvp::new(
            self.op.mesh(),
            self.conductivity.clone(),
            self.source.clone(),
            self.dirichlet.clone(),
        )?;
        bvp.neumann = self.neumann.clone();
        bvp.nonlinear = self.nonlinear;
        Ok(bvp)
    }
}

impl Physics for ThermalSample<'_> {
    fn input(&self) -> &[f64] {
        &self.input
    }

    fn n_dofs(&self) -> usize {
        self.op.n()
    }

    fn dirichlet(&self) -> &Dirichlet {
        &self.dirichlet
    }

    fn partition(&self) -> &DofPartition {
        &self.partition
    }

    fn residual(&self, t: &[f64]) -> Vec<f64> {
        match &self.nonlinear {
            Some(nl) => self.op.nonlinear_residual(&self.conductivity, nl, t, &self.load, None),
            None => {
                let mut r = vec![0.0; self.op.n()];
                self.op.apply(&self.conductivity, t, &mut r);
                r.iter_mut().zip(&self.load).for_each(|(ri, fi)| *ri -= fi);
                r
            }
        }
    }

    fn residual_vjp(&self, t: &[f64], w: &[f64]) -> Vec<f64> {
        match &self.nonlinear {
            Some(nl) => self.op.nonlinear_tangent_transpose_apply(&self.conductivity, nl, t, w),
            None => self.stiffness_apply(w),
        }
    }

    /// With temperature-dependent conductivity this is the lagged-coefficient
    /// energy `1/2 T^T K(k(T)) T - T^T f`, whose gradient with the coefficients
    /// held at the current state is `r(T)`.
    fn energy(&self, t: &[f64]) -> Option<f64> {
        if self.nonlinear.is_some() {
            let r = self.residual(t);
            return Some(0.5 * dot(t, &r) - 0.5 * dot(t, &self.load));
        }
        let kt = self.stiffness_apply(t);
        Some(0.5 * dot(t, &kt) - dot(t, &self.load))
    }

    fn is_linear(&self) -> bool {
        self.nonlinear.is_none()
    }

    fn stiffness_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.op.n()];
        self.op.apply(&self.conductivity, v, &mut out);
        out
    }

    fn design_dim(&self) -> usize {
        match (&self.k_tangent, &self.load_tangent) {
            (Some(a), _) => a.cols(),
            (None, Some(df)) => df.cols(),
            (None, None) => 0,
        }
    }

    fn stiffness_apply_multi(&self, x: &Mat) -> Mat {
        self.op.apply_multi(&self.conductivity, x)
    }

    fn explicit_design_jacobian(&self, t: &[f64]) -> Option<Mat> {
        if let Some(a) = &self.k_tangent {
            Some(self.op.dr_dk_multi(t, a))
        } else {
            self.load_tangent.as_ref().map(|df| {
                let mut e = df.clone();
                e.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
                e
            })
        }
    }

    fn explicit_design_vjp(&self, rbar: &Mat) -> Option<Vec<f64>> {
        // K(A_j) is symmetric, so d/dT of rbar_j . K(A_j) T is K(A_j) rbar_j
        Some(self.op.dr_dk_multi_vjp(self.k_tangent.as_ref()?, rbar))
    }
}

/// Plane-stress sample whose design is the top-edge displacement `(u_x, u_y)`.
#[derive(Debug, Clone)]
pub struct ElasticSample<'a> {
    op: &'a ElasticOperator<'a>,
    input: Vec<f64>,
    modulus: Vec<f64>,
    load: Vec<f64>,
    dirichlet: Dirichlet,
    partition: DofPartition,
    fixed_jac: Mat,
}

impl<'a> ElasticSample<'a> {
    /// Bottom edge clamped, top edge displaced by `c = (u_x, u_y)`.
    pub fn top_displacement(op: &'a ElasticOperator<'a>, modulus: Vec<f64>, c: [f64; 2]) -> Result<Self> {
        let mesh = op.mesh();
        if modulus.len() != mesh.n_nodes() {
            return Err(FolError::dims("modulus field", mesh.n_nodes(), modulus.len()));
        }
        let dirichlet = crate::elasticity::clamped_top_displacement(mesh, c)?;
        let top: std::collections::HashSet<usize> = mesh.edge_nodes(Edge::Top).into_iter().collect();
        let mut fixed_jac = Mat::zeros(dirichlet.len(), 2);
        for (r, &d) in dirichlet.dofs().iter().enumerate() {
            if top.contains(&(d / 2)) {
                fixed_jac.row_mut(r)[d % 2] = 1.0;
            }
        }
        let partition = DofPartition::new(op.n_dofs(), &dirichlet)?;
        let load = op.load(&[] as &[EdgeTraction]);
        Ok(ElasticSample {
            op,
            input: c.to_vec(),
            modulus,
            load,
            dirichlet,
            partition,
            fixed_jac,
        })
    }

    pub fn to_bvp(&self) -> Result<ElasticBvp<'a>> {
        ElasticBvp::new(self.op.mesh(), self.modulus.clone(), self.op.nu(), self.dirichlet.clone())
    }
}

impl Physics for ElasticSample<'_> {
    fn input(&self) -> &[f64] {
        &self.input
    }

    fn n_dofs(&self) -> usize {
        self.op.n_dofs()
    }

    fn dirichlet(&self) -> &Dirichlet {
        &self.dirichlet
    }

    fn partition(&self) -> &DofPartition {
        &self.partition
    }

    fn residual(&self, t: &[f64]) -> Vec<f64> {
        let mut r = self.stiffness_apply(t);
        r.iter_mut().zip(&self.load).for_each(|(ri, fi)| *ri -= fi);
        r
    }

    fn residual_vjp(&self, _t: &[f64], w: &[f64]) -> Vec<f64> {
        self.stiffness_apply(w)
    }

    fn energy(&self, t: &[f64]) -> Option<f64> {
        Some(0.5 * dot(t, &self.stiffness_apply(t)) - dot(t, &self.load))
    }

    fn is_linear(&self) -> bool {
        true
    }

    fn stiffness_apply(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.op.n_dofs()];
        self.op.apply(&self.modulus, v, &mut out);
        out
    }

    fn design_dim(&self) -> usize {
        2
    }

    fn fixed_value_jacobian(&self) -> Option<&Mat> {
        Some(&self.fixed_jac)
    }

    fn explicit_design_jacobian(&self, _t: &[f64]) -> Option<Mat> {
        None
    }

    fn explicit_design_vjp(&self, _rbar: &Mat) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhysicsLoss {
    Energy,
    Residual,
}

/// How Dirichlet data enters training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BcMode {
    /// Network predicts free DOFs only; fixed values are scattered in exactly.
    Hard,
    /// Network predicts every DOF; boundary values enter through `L_bc`.
    Soft,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    pub w_ph: f64,
    pub w_bc: f64,
    pub w_se: f64,
    pub w_db: f64,
    pub physics: PhysicsLoss,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_ph: 1.0,
            w_bc: 0.0,
            w_se: 0.0,
            w_db: 10.0,
            physics: PhysicsLoss::Energy,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let ws = [self.w_ph, self.w_bc, self.w_se, self.w_db];
        if ws.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(FolError::InvalidArgument(format!("loss weights must be finite and nonnegative: {ws:?}")));
        }
        if self.w_ph + self.w_bc + self.w_se <= 0.0 {
            return Err(FolError::InvalidArgument("all loss weights are zero".into()));
        }
        Ok(())
    }

    /// Weights actually applied in a boundary mode: `w_bc` is forced to 0 for hard BCs.
    pub fn effective(&self, mode: BcMode) -> LossWeights {
        let mut w = *self;
        if mode == BcMode::Hard {
            w.w_bc = 0.0;
        }
        w
    }
}

/// Loss values of one sample or a batch mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub ph: f64,
    pub bc: f64,
    pub se: f64,
}

impl LossTerms {
    fn add_scaled(&mut self, other: &LossTerms, s: f64) {
        self.total += s * other.total;
        self.ph += s * other.ph;
        self.bc += s * other.bc;
        self.se += s * other.se;
    }
}

/// `1/2 T^T K T - T^T f` and its gradient `K T - f` over all DOFs.
///
/// For temperature-dependent conductivity the returned gradient is the full
/// nonlinear residual, so stationary points coincide with the Newton solution.
pub fn loss_energy(phys: &dyn Physics, t: &[f64]) -> Result<(f64, Vec<f64>)> {
    let e = phys
        .energy(t)
        .ok_or_else(|| FolError::InvalidArgument("this physics has no energy functional".into()))?;
    Ok((e, phys.residual(t)))
}

/// `sum_free r_i^2` and its gradient over all DOFs.
pub fn loss_residual(phys: &dyn Physics, t: &[f64]) -> (f64, Vec<f64>) {
    let mut r = phys.residual(t);
    for &d in phys.partition().fixed() {
        r[d] = 0.0;
    }
    let val = dot(&r, &r);
    r.iter_mut().for_each(|v| *v *= 2.0);
    (val, phys.residual_vjp(t, &r))
}

/// `w_db sum (T_i - T_i,db)^2` over the Dirichlet DOFs, with gradient.
pub fn loss_dirichlet(t: &[f64], targets: &Dirichlet, w_db: f64) -> (f64, Vec<f64>) {
    let mut g = vec![0.0; t.len()];
    let mut val = 0.0;
    for (d, v) in targets.iter() {
        let e = t[d] - v;
        val += e * e;
        g[d] = 2.0 * w_db * e;
    }
    (w_db * val, g)
}

/// Residual design sensitivity `dr/dc = K D + dr/dc|_T` with fixed rows zeroed.
pub fn residual_design_sensitivity(phys: &dyn Physics, t: &[f64], d: &Mat) -> Result<Mat> {
    if !phys.is_linear() {
        return Err(FolError::InvalidArgument(
            "sensitivity loss is implemented for affine residuals only".into(),
        ));
    }
    let (n, m) = (phys.n_dofs(), d.cols());
    if d.rows() != n {
        return Err(FolError::dims("state Jacobian rows", n, d.rows()));
    }
    let mut r = phys.explicit_design_jacobian(t).unwrap_or_else(|| Mat::zeros(n, m));
    if r.cols() != m {
        return Err(FolError::dims("design dimension", r.cols(), m));
    }
    let kd = phys.stiffness_apply_multi(d);
    r.as_mut_slice().iter_mut().zip(kd.as_slice()).for_each(|(a, b)| *a += b);
    for &f in phys.partition().fixed() {
        r.row_mut(f).iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(r)
}

/// `L_se` with gradients with respect to the state Jacobian `D` and to `T`.
pub fn loss_sensitivity(phys: &dyn Physics, t: &[f64], d: &Mat) -> Result<(f64, Mat, Vec<f64>)> {
    let r = residual_design_sensitivity(phys, t, d)?;
    let val = r.frobenius_sq();
    let mut rbar = r;
    rbar.as_mut_slice().iter_mut().for_each(|v| *v *= 2.0);
    let n = d.rows();
    let dbar = phys.stiffness_apply_multi(&rbar);
    let tbar = phys.explicit_design_vjp(&rbar).unwrap_or_else(|| vec![0.0; n]);
    Ok((val, dbar, tbar))
}

/// Full nodal field and state Jacobian from network outputs.
pub fn assemble_state(
    phys: &dyn Physics,
    out: &[f64],
    jac: Option<&Mat>,
    mode: BcMode,
) -> Result<(Vec<f64>, Option<Mat>)> {
    let n = phys.n_dofs();
    let part = phys.partition();
    match mode {
        BcMode::Soft => {
            if out.len() != n {
                return Err(FolError::dims("network output (soft BC)", n, out.len()));
            }
            Ok((out.to_vec(), jac.cloned()))
        }
        BcMode::Hard => {
            if out.len() != part.n_free() {
                return Err(FolError::dims("network output (hard BC)", part.n_free(), out.len()));
            }
            let mut t = vec![0.0; n];
            for (&d, &v) in part.free().iter().zip(out) {
                t[d] = v;
            }
            for (d, v) in phys.dirichlet().iter() {
                t[d] = v;
            }
            let full = jac.map(|j| {
                let m = j.cols();
                let mut dm = Mat::zeros(n, m);
                for (r, &d) in part.free().iter().enumerate() {
                    dm.row_mut(d).copy_from_slice(j.row(r));
                }
                if let Some(fj) = phys.fixed_value_jacobian() {
                    for (r, &d) in phys.dirichlet().dofs().iter().enumerate() {
                        dm.row_mut(d).copy_from_slice(fj.row(r));
                    }
                }
                dm
            });
            Ok((t, full))
        }
    }
}

/// Nodal prediction of the network for a sample, Dirichlet values enforced in hard mode.
pub fn predict(net: &Mlp, phys: &dyn Physics, mode: BcMode) -> Result<Vec<f64>> {
    let out = net.forward(phys.input())?;
    Ok(assemble_state(phys, &out, None, mode)?.0)
}

/// Weighted loss of one sample; accumulates `dL/dtheta` into `grad` when given.
pub fn sample_loss(
    net: &Mlp,
    phys: &dyn Physics,
    weights: &LossWeights,
    mode: BcMode,
    grad: Option<&mut [f64]>,
) -> Result<LossTerms> {
    let w = weights.effective(mode);
    let want_jac = w.w_se > 0.0;
    if want_jac && phys.design_dim() == 0 {
        return Err(FolError::InvalidArgument("sensitivity loss needs a design tangent".into()));
    }
    let trace = net.trace(phys.input(), want_jac)?;
    let (t, dmat) = assemble_state(phys, trace.output(), trace.jacobian(), mode)?;
    let n = t.len();
    let mut tbar = vec![0.0; n];
    let mut terms = LossTerms::default();

    if w.w_ph > 0.0 {
        let (val, g) = match w.physics {
            PhysicsLoss::Energy => loss_energy(phys, &t)?,
            PhysicsLoss::Residual => loss_residual(phys, &t),
        };
        terms.ph = nan_guard("L_ph", val)?;
        tbar.iter_mut().zip(&g).for_each(|(a, b)| *a += w.w_ph * b);
    }
    if w.w_bc > 0.0 {
        let (val, g) = loss_dirichlet(&t, phys.dirichlet(), w.w_db);
        terms.bc = nan_guard("L_bc", val)?;
        tbar.iter_mut().zip(&g).for_each(|(a, b)| *a += w.w_bc * b);
    }
    let mut dbar_full = None;
    if let Some(d) = dmat.as_ref() {
        let (val, dbar, tb) = loss_sensitivity(phys, &t, d)?;
        terms.se = nan_guard("L_se", val)?;
        tbar.iter_mut().zip(&tb).for_each(|(a, b)| *a += w.w_se * b);
        let mut dbar = dbar;
        dbar.as_mut_slice().iter_mut().for_each(|v| *v *= w.w_se);
        dbar_full = Some(dbar);
    }
    terms.total = nan_guard("L_total", w.w_ph * terms.ph + w.w_bc * terms.bc + w.w_se * terms.se)?;

    if let Some(grad) = grad {
        let (out_bar, jac_bar) = match mode {
            BcMode::Soft => (tbar, dbar_full),
            BcMode::Hard => {
                let part = phys.partition();
                let ob = part.gather_free(&tbar);
                let jb = dbar_full.map(|db| {
                    let mut jb = Mat::zeros(part.n_free(), db.cols());
                    for (r, &d) in part.free().iter().enumerate() {
                        jb.row_mut(r).copy_from_slice(db.row(d));
                    }
                    jb
                });
                (ob, jb)
            }
        };
        net.backward(&trace, &out_bar, jac_bar.as_ref(), grad)?;
    }
    Ok(terms)
}

const CHUNK: usize = 4;

/// Mean loss over a batch and, optionally, the mean parameter gradient.
///
/// Samples are split into fixed chunks evaluated in parallel; chunk results
/// are summed in order.
pub fn batch_loss<P: Physics>(
    net: &Mlp,
    batch: &[&P],
    weights: &LossWeights,
    mode: BcMode,
    want_grad: bool,
) -> Result<(LossTerms, Option<Vec<f64>>)> {
    if batch.is_empty() {
        return Err(FolError::InvalidArgument("empty batch".into()));
    }
    let np = net.n_params();
    let partials: Vec<Result<(LossTerms, Option<Vec<f64>>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = LossTerms::default();
            let mut g = want_grad.then(|| vec![0.0; np]);
            for s in chunk {
                let terms = sample_loss(net, *s as &dyn Physics, weights, mode, g.as_deref_mut())?;
                acc.add_scaled(&terms, 1.0);
            }
            Ok((acc, g))
        })
        .collect();
    let scale = 1.0 / batch.len() as f64;
    let mut terms = LossTerms::default();
    let mut grad = want_grad.then(|| vec![0.0; np]);
    for p in partials {
        let (t, g) = p?;
        terms.add_scaled(&t, scale);
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            acc.iter_mut().zip(&g).for_each(|(a, b)| *a += scale * b);
        }
    }
    Ok((terms, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Mesh;
    use crate::thermal::{left_right_dirichlet, solve_linear};

    #[test]
    fn energy_gradient_vanishes_at_fem_solution() {
        let mesh = Mesh::unit_square(5).unwrap();
        let op = ThermalOperator::new(&mesh);
        let k: Vec<f64> = (0..25).map(|i| 0.2 + 0.03 * i as f64).collect();
        let d = left_right_dirichlet(&mesh, 1.0, 0.1).unwrap();
        let s = ThermalSample::fixed(&op, vec![1.0], k, vec![0.0; 25], d).unwrap();
        let t = solve_linear(&s.to_bvp().unwrap()).unwrap();
        let (_, g) = loss_energy(&s, &t).unwrap();
        for &i in s.partition().free() {
            assert!(g[i].abs() < 1e-10);
        }
        let (lr, _) = loss_residual(&s, &t);
        assert!(lr < 1e-20);
    }

    #[test]
    fn uniform_field_zero_energy() {
        let mesh = Mesh::unit_square(3).unwrap();
        let op = ThermalOperator::new(&mesh);
        let d = Dirichlet::uniform(&[0], 2.0).unwrap();
        let s = ThermalSample::fixed(&op, vec![], vec![1.0; 9], vec![0.0; 9], d).unwrap();
        assert!(s.energy(&[2.0; 9]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn dirichlet_penalty() {
        let d = Dirichlet::new([(0, 1.0), (2, 0.1)]).unwrap();
        let (v, g) = loss_dirichlet(&[1.0, 5.0, 0.3], &d, 10.0);
        assert!((v - 10.0 * 0.04).abs() < 1e-14);
        assert!((g[2] - 4.0).abs() < 1e-14);
        assert_eq!(g[1], 0.0);
        let (v, _) = loss_dirichlet(&[1.0, 5.0, 0.1], &d, 10.0);
        assert_eq!(v, 0.0);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::default().validate().is_ok());
        let zero = LossWeights {
            w_ph: 0.0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
        let hard = LossWeights {
            w_bc: 1.0,
            ..Default::default()
        }
        .effective(BcMode::Hard);
        assert_eq!(hard.w_bc, 0.0);
    }
}
