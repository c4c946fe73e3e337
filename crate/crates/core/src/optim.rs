//! Rosen's gradient projection with active-set handling, and the nested
//! analysis-and-design (NAND) driver for the flux design problem.
//!
//! Each iteration takes
//! `c <- c - alpha (I - P (P^T P)^-1 P^T) dJ/dc - P (P^T P)^-1 g_a`,
//! where the columns of `P` are gradients of the active constraints `g_a`.
//! The correction term is applied without a step length.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bc::Dirichlet;
use crate::error::{FolError, Result};
use crate::linalg::{dot, norm2, Mat};
use crate::losses::{BcMode, LossWeights, ThermalSample};
use crate::mesh::Mesh;
use crate::nn::Mlp;
use crate::param::{FourierMap, Parameterization};
use crate::sensitivity::{adjoint_sensitivities, fol_sensitivities, ResponseFunction};
use crate::thermal::{solve_linear, ThermalBvp, ThermalOperator};
use crate::training::{train_parametric, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintKind {
    /// `h(c) = 0`, always active.
    Equality,
    /// `g(c) <= 0`, active once `g >= -tol`.
    Inequality,
}

/// Indices of active constraints.
pub fn detect_active(kinds: &[ConstraintKind], values: &[f64], tol: f64) -> Result<Vec<usize>> {
    if kinds.len() != values.len() {
        return Err(FolError::dims("constraint values", kinds.len(), values.len()));
    }
    if !(tol > 0.0) {
        return Err(FolError::InvalidArgument("active-set tolerance must be positive".into()));
    }
    Ok(kinds
        .iter()
        .zip(values)
        .enumerate()
        .filter(|(_, (k, g))| match k {
            ConstraintKind::Equality => true,
            ConstraintKind::Inequality => **g >= -tol,
        })
        .map(|(i, _)| i)
        .collect())
}

/// Projector `I - P (P^T P)^-1 P^T` and the correction map `P (P^T P)^-1`.
#[derive(Debug, Clone)]
pub struct Projection {
    pub projector: Mat,
    pub correction: Mat,
    /// `P^T P` was singular and a ridge of this size was added.
    pub regularization: Option<f64>,
}

impl Projection {
    pub fn new(p: &Mat) -> Result<Self> {
        let (m, a) = (p.rows(), p.cols());
        if a == 0 {
            return Ok(Projection {
                projector: Mat::identity(m),
                correction: Mat::zeros(m, 0),
                regularization: None,
            });
        }
        let ptp = p.transpose().matmul(p);
        let scale = (0..a).map(|i| ptp.row(i)[i]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut regularization = None;
        let inv = match invert(&ptp, scale) {
            Some(inv) => inv,
            None => {
                let eps = 1e-10 * scale;
                let mut reg = ptp.clone();
                for i in 0..a {
                    reg.row_mut(i)[i] += eps;
                }
                regularization = Some(eps);
                invert(&reg, scale).ok_or_else(|| FolError::Singular(0))?
            }
        };
        let correction = p.matmul(&inv);
        let mut projector = correction.matmul(&p.transpose());
        projector.as_mut_slice().iter_mut().for_each(|v| *v = -*v);
        for i in 0..m {
            projector.row_mut(i)[i] += 1.0;
        }
        Ok(Projection {
            projector,
            correction,
            regularization,
        })
    }
}

fn invert(a: &Mat, scale: f64) -> Option<Mat> {
    let n = a.rows();
    let mut out = Mat::zeros(n, n);
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let x = a.solve(&e).ok()?;
        for i in 0..n {
            out.row_mut(i)[j] = x[i];
        }
    }
    // reject numerically singular systems
    let check = a.matmul(&out);
    let err = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| (check.row(i)[j] - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);
    (err < 1e-8 && out.max_abs() * scale < 1e12).then_some(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub c: Vec<f64>,
    pub step_norm: f64,
    pub regularized: bool,
}

/// One gradient-projection update.
pub fn projection_step(c: &[f64], alpha: f64, dj_dc: &[f64], p: &Mat, g_active: &[f64]) -> Result<StepOutcome> {
    let m = c.len();
    if dj_dc.len() != m {
        return Err(FolError::dims("objective gradient", m, dj_dc.len()));
    }
    if p.rows() != m || p.cols() != g_active.len() {
        return Err(FolError::dims("constraint gradient matrix", m * g_active.len(), p.rows() * p.cols()));
    }
    if !(alpha > 0.0) {
        return Err(FolError::InvalidArgument("step size must be positive".into()));
    }
    let proj = Projection::new(p)?;
    let descent = proj.projector.matvec(dj_dc);
    let corr = proj.correction.matvec(g_active);
    let mut out = c.to_vec();
    let mut step = vec![0.0; m];
    for i in 0..m {
        step[i] = -alpha * descent[i] - corr[i];
        out[i] += step[i];
    }
    Ok(StepOutcome {
        c: out,
        step_norm: norm2(&step),
        regularized: proj.regularization.is_some(),
    })
}

/// Objective (to be minimized) and constraints with gradients at one design.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub constraints: Vec<f64>,
    pub constraint_grads: Vec<Vec<f64>>,
}

pub trait DesignProblem {
    fn dim(&self) -> usize;
    fn constraint_kinds(&self) -> Vec<ConstraintKind>;
    fn evaluate(&mut self, c: &[f64]) -> Result<Evaluation>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimOptions {
    pub iterations: usize,
    pub alpha: f64,
    pub active_tol: f64,
    /// Stop once `||dc|| < step_tol (1 + ||c||)`.
    pub step_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        OptimOptions {
            iterations: 100,
            alpha: 1e-2,
            active_tol: 1e-6,
            step_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    /// Design at which the iteration was evaluated.
    pub design: Vec<f64>,
    /// Objective as minimized.
    pub objective: f64,
    /// First constraint value, NaN when there is none.
    pub constraint: f64,
    pub step_norm: f64,
    pub phase_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub c: Vec<f64>,
    pub history: Vec<IterRecord>,
    pub converged: bool,
    pub regularized_steps: usize,
}

/// Gradient projection until the step falls below tolerance or the iteration cap.
pub fn optimize(problem: &mut dyn DesignProblem, c0: &[f64], opts: &OptimOptions) -> Result<OptimResult> {
    if c0.len() != problem.dim() {
        return Err(FolError::dims("initial design", problem.dim(), c0.len()));
    }
    let kinds = problem.constraint_kinds();
    let mut c = c0.to_vec();
    let mut history = Vec::new();
    let mut regularized_steps = 0;
    for iter in 0..opts.iterations {
        let t0 = Instant::now();
        let ev = problem.evaluate(&c)?;
        let phase_time_ms = t0.elapsed().as_secs_f64() * 1e3;
        if !ev.objective.is_finite() || ev.constraints.iter().any(|g| !g.is_finite()) {
            return Err(FolError::NonFinite {
                term: format!("response at iteration {iter}, design {c:?}"),
            });
        }
        let active = detect_active(&kinds, &ev.constraints, opts.active_tol)?;
        let mut p = Mat::zeros(c.len(), active.len());
        for (col, &a) in active.iter().enumerate() {
            for i in 0..c.len() {
                p.row_mut(i)[col] = ev.constraint_grads[a][i];
            }
        }
        let g_a: Vec<f64> = active.iter().map(|&a| ev.constraints[a]).collect();
        let step = projection_step(&c, opts.alpha, &ev.gradient, &p, &g_a)?;
        if step.regularized {
            regularized_steps += 1;
        }
        history.push(IterRecord {
            iter,
            design: c.clone(),
            objective: ev.objective,
            constraint: ev.constraints.first().copied().unwrap_or(f64::NAN),
            step_norm: step.step_norm,
            phase_time_ms,
        });
        let done = step.step_norm < opts.step_tol * (1.0 + norm2(&c));
        c = step.c;
        if done {
            return Ok(OptimResult {
                c,
                history,
                converged: true,
                regularized_steps,
            });
        }
    }
    Ok(OptimResult {
        c,
        history,
        converged: false,
        regularized_steps,
    })
}

/// How the state and sensitivities are obtained inside the NAND loop.
#[derive(Debug, Clone)]
pub enum NandMode {
    /// FEM solve plus adjoint sensitivities.
    Fem,
    /// Retrain the network on the current design, warm-started, and read
    /// sensitivities off its Jacobian.
    Fol {
        net: Box<Mlp>,
        weights: LossWeights,
        train: TrainConfig,
    },
}

impl NandMode {
    pub fn name(&self) -> &'static str {
        match self {
            NandMode::Fem => "fem",
            NandMode::Fol { .. } => "fol",
        }
    }
}

/// Maximize `int q_y^2` subject to `int q_x^2 = 0.125` over Fourier coefficients
/// of the conductivity, with fixed temperatures on the left and right edges.
pub struct FluxDesignProblem<'m> {
    op: ThermalOperator<'m>,
    map: FourierMap,
    dirichlet: Dirichlet,
    pub mode: NandMode,
    objective: ResponseFunction,
    constraint: ResponseFunction,
}

impl<'m> FluxDesignProblem<'m> {
    pub fn new(mesh: &'m Mesh, map: FourierMap, dirichlet: Dirichlet, mode: NandMode) -> Self {
        FluxDesignProblem {
            op: ThermalOperator::new(mesh),
            map,
            dirichlet,
            mode,
            objective: ResponseFunction::flux_y_sq(),
            constraint: ResponseFunction::flux_x_sq_constraint(),
        }
    }

    pub fn mesh(&self) -> &'m Mesh {
        self.op.mesh()
    }

    pub fn map(&self) -> &FourierMap {
        &self.map
    }

    /// `(J, h)` at a design from a FEM solve, independent of the mode.
    pub fn fem_responses(&self, c: &[f64]) -> Result<(f64, f64)> {
        let bvp = self.bvp(c)?;
        let t = solve_linear(&bvp)?;
        let j = crate::sensitivity::eval_response(&self.objective, bvp.mesh, &bvp.conductivity, &t)?;
        let h = crate::sensitivity::eval_response(&self.constraint, bvp.mesh, &bvp.conductivity, &t)?;
        Ok((j, h))
    }

    fn bvp(&self, c: &[f64]) -> Result<ThermalBvp<'m>> {
        let k = self.map.field(c)?;
        let n = k.len();
        ThermalBvp::new(self.op.mesh(), k, vec![0.0; n], self.dirichlet.clone())
    }
}

impl DesignProblem for FluxDesignProblem<'_> {
    fn dim(&self) -> usize {
        self.map.dim()
    }

    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        vec![ConstraintKind::Equality]
    }

    fn evaluate(&mut self, c: &[f64]) -> Result<Evaluation> {
        let rfs = [self.objective, self.constraint];
        let sens = match &mut self.mode {
            NandMode::Fem => {
                let (k, a) = self.map.field_with_tangent(c)?;
                let n = k.len();
                let bvp = ThermalBvp::new(self.op.mesh(), k, vec![0.0; n], self.dirichlet.clone())?;
                let t = solve_linear(&bvp)?;
                adjoint_sensitivities(&rfs, &bvp, &t, &a)?
            }
            NandMode::Fol { net, weights, train } => {
                let param = Parameterization::Fourier(self.map.clone());
                let n = self.op.n();
                let sample =
                    ThermalSample::conductivity_design(&self.op, &param, c.to_vec(), vec![0.0; n], self.dirichlet.clone())?;
                train_parametric(net, std::slice::from_ref(&sample), weights, train)?;
                fol_sensitivities(&rfs, net, &sample, BcMode::Hard)?
            }
        };
        Ok(Evaluation {
            objective: -sens[0].value,
            gradient: sens[0].dj_dc.iter().map(|g| -g).collect(),
            constraints: vec![sens[1].value],
            constraint_grads: vec![sens[1].dj_dc.clone()],
        })
    }
}

/// Quadratic `sum_i (c_i - target_i)^2` with optional linear equalities `a^T c = b`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    pub target: Vec<f64>,
    pub equalities: Vec<(Vec<f64>, f64)>,
}

impl DesignProblem for QuadraticProblem {
    fn dim(&self) -> usize {
        self.target.len()
    }

    fn constraint_kinds(&self) -> Vec<ConstraintKind> {
        vec![ConstraintKind::Equality; self.equalities.len()]
    }

    fn evaluate(&mut self, c: &[f64]) -> Result<Evaluation> {
        let d: Vec<f64> = c.iter().zip(&self.target).map(|(x, t)| x - t).collect();
        Ok(Evaluation {
            objective: dot(&d, &d),
            gradient: d.iter().map(|v| 2.0 * v).collect(),
            constraints: self.equalities.iter().map(|(a, b)| dot(a, c) - b).collect(),
            constraint_grads: self.equalities.iter().map(|(a, _)| a.clone()).collect(),
        })
    }
}
