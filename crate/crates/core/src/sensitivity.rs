//! Flux responses and their design sensitivities.
//!
//! `J = int (k dT/dy)^2` is the objective and `h = int (k dT/dx)^2 - 0.125`
//! the equality constraint of the design problem. Sensitivities with respect
//! to the design `c` (through `A = dk/dc`) come from three routes: the adjoint
//! method (one solve per response), the direct method (one solve per design
//! variable), and the network Jacobian of a trained FOL model (no solve).

use serde::{Deserialize, Serialize};

use crate::error::{FolError, Result};
use crate::linalg::{dot, Mat};
use crate::losses::{assemble_state, BcMode, Physics, ThermalSample};
use crate::mesh::Mesh;
use crate::nn::Mlp;
use crate::thermal::{assemble, ThermalBvp, ThermalOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluxAxis {
    X,
    Y,
}

/// `int (k dT/d axis)^2 dV - offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseFunction {
    pub axis: FluxAxis,
    pub offset: f64,
}

impl ResponseFunction {
    /// Squared y-flux, the objective.
    pub fn flux_y_sq() -> Self {
        ResponseFunction {
            axis: FluxAxis::Y,
            offset: 0.0,
        }
    }

    /// Squared x-flux minus 0.125, the equality constraint.
    pub fn flux_x_sq_constraint() -> Self {
        ResponseFunction {
            axis: FluxAxis::X,
            offset: 0.125,
        }
    }

    fn axis_index(&self) -> usize {
        match self.axis {
            FluxAxis::X => 0,
            FluxAxis::Y => 1,
        }
    }
}

fn check_fields(mesh: &Mesh, k: &[f64], t: &[f64]) -> Result<()> {
    let n = mesh.n_nodes();
    if k.len() != n {
        return Err(FolError::dims("conductivity field", n, k.len()));
    }
    if t.len() != n {
        return Err(FolError::dims("temperature field", n, t.len()));
    }
    Ok(())
}

/// Response value by the assembly quadrature rule.
pub fn eval_response(rf: &ResponseFunction, mesh: &Mesh, k: &[f64], t: &[f64]) -> Result<f64> {
    check_fields(mesh, k, t)?;
    let ax = rf.axis_index();
    let mut sum = 0.0;
    for e in 0..mesh.n_elems() {
        let ke = mesh.gather(e, k);
        let te = mesh.gather(e, t);
        for gp in mesh.gauss_points(e) {
            let q = gp.interp(&ke) * gp.grad(&te)[ax];
            sum += gp.w_det * q * q;
        }
    }
    Ok(sum - rf.offset)
}

/// `(dJ/dT, dJ/dk)` as nodal vectors.
pub fn partials(rf: &ResponseFunction, mesh: &Mesh, k: &[f64], t: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_fields(mesh, k, t)?;
    let ax = rf.axis_index();
    let n = mesh.n_nodes();
    let mut dt = vec![0.0; n];
    let mut dk = vec![0.0; n];
    for (e, ids) in mesh.elems().iter().enumerate() {
        let ke = mesh.gather(e, k);
        let te = mesh.gather(e, t);
        for gp in mesh.gauss_points(e) {
            let kg = gp.interp(&ke);
            let g = gp.grad(&te)[ax];
            for a in 0..4 {
                dt[ids[a]] += gp.w_det * 2.0 * kg * kg * g * gp.b[ax][a];
                dk[ids[a]] += gp.w_det * 2.0 * kg * g * g * gp.n[a];
            }
        }
    }
    Ok((dt, dk))
}

/// Total derivatives of one response.
#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivity {
    pub value: f64,
    pub dj_dc: Vec<f64>,
    /// Total derivative with respect to nodal conductivity, when the route provides it.
    pub dj_dk: Option<Vec<f64>>,
}

fn check_linear(bvp: &ThermalBvp, a: &Mat) -> Result<()> {
    if bvp.nonlinear.is_some() {
        return Err(FolError::InvalidArgument("sensitivities assume linear conduction".into()));
    }
    if a.rows() != bvp.mesh.n_nodes() {
        return Err(FolError::dims("design tangent rows", bvp.mesh.n_nodes(), a.rows()));
    }
    Ok(())
}

/// Adjoint route for several responses sharing one factorization.
pub fn adjoint_sensitivities(
    rfs: &[ResponseFunction],
    bvp: &ThermalBvp,
    t: &[f64],
    a: &Mat,
) -> Result<Vec<Sensitivity>> {
    check_linear(bvp, a)?;
    let sys = assemble(bvp)?;
    let chol = sys.factor_free()?;
    let op = ThermalOperator::new(bvp.mesh);
    let part = &sys.partition;
    rfs.iter()
        .map(|rf| {
            let value = eval_response(rf, bvp.mesh, &bvp.conductivity, t)?;
            let (pt, pk) = partials(rf, bvp.mesh, &bvp.conductivity, t)?;
            let rhs: Vec<f64> = part.free().iter().map(|&d| -pt[d]).collect();
            let lf = chol.solve(&rhs);
            let mut lambda = vec![0.0; part.n()];
            for (&d, v) in part.free().iter().zip(lf) {
                lambda[d] = v;
            }
            let mut dj_dk = op.dr_dk_transpose_apply(t, &lambda);
            dj_dk.iter_mut().zip(&pk).for_each(|(x, p)| *x += p);
            Ok(Sensitivity {
                value,
                dj_dc: a.tr_matvec(&dj_dk),
                dj_dk: Some(dj_dk),
            })
        })
        .collect()
}

pub fn adjoint_sensitivity(rf: &ResponseFunction, bvp: &ThermalBvp, t: &[f64], a: &Mat) -> Result<Sensitivity> {
    Ok(adjoint_sensitivities(std::slice::from_ref(rf), bvp, t, a)?.remove(0))
}

/// State Jacobian `dT/dc` by one solve per design variable.
pub fn state_design_jacobian(bvp: &ThermalBvp, t: &[f64], a: &Mat) -> Result<Mat> {
    check_linear(bvp, a)?;
    let sys = assemble(bvp)?;
    let chol = sys.factor_free()?;
    let op = ThermalOperator::new(bvp.mesh);
    let part = &sys.partition;
    let n = part.n();
    let mut x = Mat::zeros(n, a.cols());
    let mut col = vec![0.0; n];
    for j in 0..a.cols() {
        op.dr_dk_apply(t, &a.column(j), &mut col);
        let rhs: Vec<f64> = part.free().iter().map(|&d| -col[d]).collect();
        for (&d, v) in part.free().iter().zip(chol.solve(&rhs)) {
            x.row_mut(d)[j] = v;
        }
    }
    Ok(x)
}

/// Direct route: `dJ/dc = dJ/dT X + dJ/dk A` with `X = dT/dc`.
pub fn direct_sensitivity(rf: &ResponseFunction, bvp: &ThermalBvp, t: &[f64], a: &Mat) -> Result<Sensitivity> {
    let x = state_design_jacobian(bvp, t, a)?;
    let value = eval_response(rf, bvp.mesh, &bvp.conductivity, t)?;
    let (pt, pk) = partials(rf, bvp.mesh, &bvp.conductivity, t)?;
    let mut dj_dc = x.tr_matvec(&pt);
    dj_dc.iter_mut().zip(a.tr_matvec(&pk)).for_each(|(d, v)| *d += v);
    Ok(Sensitivity {
        value,
        dj_dc,
        dj_dk: None,
    })
}

/// FOL route: `dJ/dc = dJ/dT dT~/dc + dJ/dk A` from the network Jacobian.
///
/// Contains no factorization and no linear solve.
pub fn fol_sensitivities(
    rfs: &[ResponseFunction],
    net: &Mlp,
    sample: &ThermalSample,
    mode: BcMode,
) -> Result<Vec<Sensitivity>> {
    let a = sample
        .conductivity_tangent()
        .ok_or_else(|| FolError::InvalidArgument("FOL sensitivity needs a conductivity design".into()))?;
    let (out, jac) = net.forward_with_jacobian(sample.input())?;
    let (t, d) = assemble_state(sample, &out, Some(&jac), mode)?;
    let d = d.expect("Jacobian requested");
    let mesh = sample.operator().mesh();
    let k = sample.conductivity();
    rfs.iter()
        .map(|rf| {
            let value = eval_response(rf, mesh, k, &t)?;
            let (pt, pk) = partials(rf, mesh, k, &t)?;
            let mut dj_dc = d.tr_matvec(&pt);
            dj_dc.iter_mut().zip(a.tr_matvec(&pk)).for_each(|(x, v)| *x += v);
            Ok(Sensitivity {
                value,
                dj_dc,
                dj_dk: None,
            })
        })
        .collect()
}

pub fn fol_sensitivity(rf: &ResponseFunction, net: &Mlp, sample: &ThermalSample, mode: BcMode) -> Result<Sensitivity> {
    Ok(fol_sensitivities(std::slice::from_ref(rf), net, sample, mode)?.remove(0))
}

/// `100 * ||a - b|| / ||b||`, or the absolute norm when `b` vanishes.
pub fn gradient_error(approx: &[f64], reference: &[f64]) -> f64 {
    let diff: Vec<f64> = approx.iter().zip(reference).map(|(x, y)| x - y).collect();
    let den = dot(reference, reference).sqrt();
    let num = dot(&diff, &diff).sqrt();
    if den > 0.0 {
        100.0 * num / den
    } else {
        100.0 * num
    }
}
