//! Fully connected network with exact input Jacobians and parameter gradients.
//!
//! Every hidden layer computes `z^l = a(W^l z^{l-1} + b^l)`; the head is
//! always linear. The forward pass can carry the input Jacobian
//! `Z^l = dz^l/dc` alongside the activations, and the backward pass accepts
//! seeds on both the output and its Jacobian. That covers losses built from
//! the network Jacobian (the Sobolev term) without a tape.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as a
//! row-major weight block followed by its bias.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bc::{Dirichlet, DofPartition};
use crate::error::{FolError, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Swish,
    Sigmoid,
    Linear,
}

impl Activation {
    /// Value, first and second derivative.
    #[inline]
    pub fn eval(self, x: f64) -> (f64, f64, f64) {
        match self {
            Activation::Tanh => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            Activation::Sigmoid => {
                let s = crate::param::sigmoid(x);
                let d = s * (1.0 - s);
                (s, d, d * (1.0 - 2.0 * s))
            }
            Activation::Swish => {
                let s = crate::param::sigmoid(x);
                let ds = s * (1.0 - s);
                (x * s, s + x * ds, 2.0 * ds + x * ds * (1.0 - 2.0 * s))
            }
            Activation::Linear => (x, 1.0, 0.0),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = FolError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tanh" => Ok(Activation::Tanh),
            "swish" => Ok(Activation::Swish),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(FolError::InvalidArgument(format!("unknown activation '{other}'"))),
        }
    }
}

/// Affine map of each input into `[-1, 1]` given its sampling range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputNormalization {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl InputNormalization {
    fn scale(&self, i: usize) -> f64 {
        let w = self.hi[i] - self.lo[i];
        if w > 0.0 {
            2.0 / w
        } else {
            1.0
        }
    }

    fn apply(&self, i: usize, x: f64) -> f64 {
        let w = self.hi[i] - self.lo[i];
        if w > 0.0 {
            2.0 * (x - self.lo[i]) / w - 1.0
        } else {
            x - self.lo[i]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub output: usize,
    pub activation: Activation,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    theta: Vec<f64>,
    #[serde(default)]
    normalization: Option<InputNormalization>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// Per-layer quantities kept by [`Mlp::trace`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
    /// Input Jacobians entering each layer (`n_{l-1} x M`), when tracked.
    jac_in: Vec<Mat>,
    /// `W^l Z^{l-1}` per layer, when tracked.
    pj: Vec<Mat>,
    output: Vec<f64>,
    jacobian: Option<Mat>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn jacobian(&self) -> Option<&Mat> {
        self.jacobian.as_ref()
    }
}

impl Mlp {
    /// Glorot-uniform weights and zero biases from a seeded stream.
    pub fn new(cfg: &MlpConfig) -> Result<Self> {
        let mut sizes = vec![cfg.input];
        sizes.extend_from_slice(&cfg.hidden);
        sizes.push(cfg.output);
        if sizes.iter().any(|&s| s == 0) {
            return Err(FolError::InvalidArgument(format!("zero-width layer in {sizes:?}")));
        }
        let layers = sizes.len() - 1;
        let mut activations = vec![cfg.activation; layers];
        activations[layers - 1] = Activation::Linear;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut theta = Vec::new();
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit);
            theta.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            theta.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Mlp {
            sizes,
            activations,
            theta,
            normalization: None,
            seed: cfg.seed,
            metadata: BTreeMap::new(),
        })
    }

    /// Network from explicit layer matrices `(W, b)` and hidden activations.
    pub fn from_layers(layers: &[(Mat, Vec<f64>)], activations: &[Activation]) -> Result<Self> {
        if layers.is_empty() || activations.len() != layers.len() {
            return Err(FolError::InvalidArgument("layer/activation count mismatch".into()));
        }
        let mut sizes = vec![layers[0].0.cols()];
        let mut theta = Vec::new();
        for (w, b) in layers {
            if w.cols() != *sizes.last().unwrap() || b.len() != w.rows() {
                return Err(FolError::dims("layer chain", *sizes.last().unwrap(), w.cols()));
            }
            sizes.push(w.rows());
            theta.extend_from_slice(w.as_slice());
            theta.extend_from_slice(b);
        }
        let mut activations = activations.to_vec();
        *activations.last_mut().unwrap() = Activation::Linear;
        Ok(Mlp {
            sizes,
            activations,
            theta,
            normalization: None,
            seed: 0,
            metadata: BTreeMap::new(),
        })
    }

    pub fn with_normalization(mut self, norm: InputNormalization) -> Result<Self> {
        if norm.lo.len() != self.input_dim() || norm.hi.len() != self.input_dim() {
            return Err(FolError::dims("normalization ranges", self.input_dim(), norm.lo.len()));
        }
        self.normalization = Some(norm);
        Ok(self)
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn n_params(&self) -> usize {
        self.theta.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.theta
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.theta
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn metadata_mut(&mut self) -> &mut BTreeMap<String, String> {
        &mut self.metadata
    }

    fn layer_offset(&self, l: usize) -> usize {
        (0..l).map(|k| self.sizes[k + 1] * (self.sizes[k] + 1)).sum()
    }

    fn layer<'a>(&self, theta: &'a [f64], l: usize) -> (&'a [f64], &'a [f64]) {
        let off = self.layer_offset(l);
        let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
        let w = &theta[off..off + nin * nout];
        (w, &theta[off + nin * nout..off + nin * nout + nout])
    }

    fn check_input(&self, c: &[f64]) -> Result<()> {
        if c.len() != self.input_dim() {
            return Err(FolError::dims("network input", self.input_dim(), c.len()));
        }
        Ok(())
    }

    fn normalized(&self, c: &[f64]) -> Vec<f64> {
        match &self.normalization {
            Some(n) => c.iter().enumerate().map(|(i, &x)| n.apply(i, x)).collect(),
            None => c.to_vec(),
        }
    }

    pub fn forward(&self, c: &[f64]) -> Result<Vec<f64>> {
        Ok(self.trace(c, false)?.output)
    }

    /// Output and its exact Jacobian with respect to the input (`N_out x M`).
    pub fn forward_with_jacobian(&self, c: &[f64]) -> Result<(Vec<f64>, Mat)> {
        let t = self.trace(c, true)?;
        Ok((t.output, t.jacobian.expect("tracked")))
    }

    pub fn input_jacobian(&self, c: &[f64]) -> Result<Mat> {
        Ok(self.forward_with_jacobian(c)?.1)
    }

    /// Forward pass keeping what the backward pass needs.
    pub fn trace(&self, c: &[f64], with_jacobian: bool) -> Result<Trace> {
        self.check_input(c)?;
        let m = self.input_dim();
        let layers = self.sizes.len() - 1;
        let mut z = self.normalized(c);
        let mut zj = with_jacobian.then(|| {
            let mut j = Mat::identity(m);
            if let Some(n) = &self.normalization {
                for i in 0..m {
                    j.row_mut(i)[i] = n.scale(i);
                }
            }
            j
        });
        let mut tr = Trace {
            inputs: Vec::with_capacity(layers),
            pre: Vec::with_capacity(layers),
            jac_in: Vec::new(),
            pj: Vec::new(),
            output: Vec::new(),
            jacobian: None,
        };
        for l in 0..layers {
            let (w, b) = self.layer(&self.theta, l);
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            let mut pre = b.to_vec();
            for (i, p) in pre.iter_mut().enumerate() {
                let row = &w[i * nin..(i + 1) * nin];
                *p += row.iter().zip(&z).map(|(a, x)| a * x).sum::<f64>();
            }
            let mut next = Vec::with_capacity(nout);
            let mut slopes = Vec::with_capacity(nout);
            for &p in &pre {
                let (v, d, _) = act.eval(p);
                next.push(v);
                slopes.push(d);
            }
            if let Some(zin) = zj.take() {
                let mut p = Mat::zeros(nout, m);
                for i in 0..nout {
                    let prow = p.row_mut(i);
                    for k in 0..nin {
                        let wik = w[i * nin + k];
                        if wik != 0.0 {
                            for (dst, s) in prow.iter_mut().zip(zin.row(k)) {
                                *dst += wik * s;
                            }
                        }
                    }
                }
                let mut zout = p.clone();
                for (i, s) in slopes.iter().enumerate() {
                    zout.row_mut(i).iter_mut().for_each(|v| *v *= s);
                }
                tr.jac_in.push(zin);
                tr.pj.push(p);
                zj = Some(zout);
            }
            tr.inputs.push(std::mem::replace(&mut z, next));
            tr.pre.push(pre);
        }
        tr.output = z;
        tr.jacobian = zj;
        Ok(tr)
    }

    /// Accumulates `dL/dtheta` into `grad` from seeds `dL/doutput` and,
    /// optionally, `dL/d(output Jacobian)`. The trace must carry the Jacobian
    /// whenever `jac_bar` is given.
    pub fn backward(&self, trace: &Trace, out_bar: &[f64], jac_bar: Option<&Mat>, grad: &mut [f64]) -> Result<()> {
        if out_bar.len() != self.output_dim() {
            return Err(FolError::dims("output seed", self.output_dim(), out_bar.len()));
        }
        if grad.len() != self.n_params() {
            return Err(FolError::dims("gradient buffer", self.n_params(), grad.len()));
        }
        if jac_bar.is_some() && trace.jacobian.is_none() {
            return Err(FolError::InvalidArgument("Jacobian seed needs a Jacobian trace".into()));
        }
        let m = self.input_dim();
        let layers = self.sizes.len() - 1;
        let mut zbar = out_bar.to_vec();
        let mut jbar = jac_bar.cloned();
        for l in (0..layers).rev() {
            let (nin, nout) = (self.sizes[l], self.sizes[l + 1]);
            let act = self.activations[l];
            let (w, _) = self.layer(&self.theta, l);
            let mut pre_bar = vec![0.0; nout];
            let mut p_bar = jbar.as_ref().map(|_| Mat::zeros(nout, m));
            for i in 0..nout {
                let (_, d1, d2) = act.eval(trace.pre[l][i]);
                pre_bar[i] = d1 * zbar[i];
                if let (Some(jb), Some(pb)) = (jbar.as_ref(), p_bar.as_mut()) {
                    let jrow = jb.row(i);
                    if d2 != 0.0 {
                        let s: f64 = jrow.iter().zip(trace.pj[l].row(i)).map(|(a, b)| a * b).sum();
                        pre_bar[i] += d2 * s;
                    }
                    for (dst, v) in pb.row_mut(i).iter_mut().zip(jrow) {
                        *dst = d1 * v;
                    }
                }
            }
            let off = self.layer_offset(l);
            let zin = &trace.inputs[l];
            for i in 0..nout {
                let gw = &mut grad[off + i * nin..off + (i + 1) * nin];
                for (g, x) in gw.iter_mut().zip(zin) {
                    *g += pre_bar[i] * x;
                }
                if let Some(pb) = p_bar.as_ref() {
                    let prow = pb.row(i);
                    let jin = &trace.jac_in[l];
                    for (k, g) in gw.iter_mut().enumerate() {
                        *g += prow.iter().zip(jin.row(k)).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
                grad[off + nin * nout + i] += pre_bar[i];
            }
            if l == 0 {
                break;
            }
            let mut zb = vec![0.0; nin];
            let mut jb = p_bar.as_ref().map(|_| Mat::zeros(nin, m));
            for i in 0..nout {
                let row = &w[i * nin..(i + 1) * nin];
                for (k, wik) in row.iter().enumerate() {
                    zb[k] += wik * pre_bar[i];
                }
                if let (Some(jb), Some(pb)) = (jb.as_mut(), p_bar.as_ref()) {
                    let prow = pb.row(i);
                    for (k, wik) in row.iter().enumerate() {
                        if *wik != 0.0 {
                            for (dst, v) in jb.row_mut(k).iter_mut().zip(prow) {
                                *dst += wik * v;
                            }
                        }
                    }
                }
            }
            zbar = zb;
            jbar = jb;
        }
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer_pretty(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let net: Mlp = serde_json::from_reader(f)?;
        net.validate()?;
        Ok(net)
    }

    fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 || self.activations.len() != self.sizes.len() - 1 {
            return Err(FolError::Config("checkpoint layer/activation count mismatch".into()));
        }
        let expected = self.layer_offset(self.sizes.len() - 1);
        if self.theta.len() != expected {
            return Err(FolError::dims("checkpoint parameters", expected, self.theta.len()));
        }
        if *self.activations.last().unwrap() != Activation::Linear {
            return Err(FolError::Config("checkpoint head must be linear".into()));
        }
        Ok(())
    }
}

/// Maps free-DOF network outputs onto the full nodal vector with exact Dirichlet values.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletScatter {
    partition: DofPartition,
    dirichlet: Dirichlet,
}

impl DirichletScatter {
    pub fn new(n: usize, dirichlet: &Dirichlet) -> Result<Self> {
        Ok(DirichletScatter {
            partition: DofPartition::new(n, dirichlet)?,
            dirichlet: dirichlet.clone(),
        })
    }

    pub fn partition(&self) -> &DofPartition {
        &self.partition
    }

    pub fn dirichlet(&self) -> &Dirichlet {
        &self.dirichlet
    }

    pub fn n(&self) -> usize {
        self.partition.n()
    }

    pub fn n_free(&self) -> usize {
        self.partition.n_free()
    }

    pub fn scatter(&self, free: &[f64]) -> Result<Vec<f64>> {
        self.scatter_with(free, self.dirichlet.values())
    }

    /// Scatter with replacement values on the same fixed DOFs.
    pub fn scatter_with(&self, free: &[f64], fixed_values: &[f64]) -> Result<Vec<f64>> {
        if free.len() != self.n_free() {
            return Err(FolError::dims("free values", self.n_free(), free.len()));
        }
        if fixed_values.len() != self.dirichlet.len() {
            return Err(FolError::dims("fixed values", self.dirichlet.len(), fixed_values.len()));
        }
        let mut out = vec![0.0; self.n()];
        for (&d, &v) in self.partition.free().iter().zip(free) {
            out[d] = v;
        }
        for (&d, &v) in self.dirichlet.dofs().iter().zip(fixed_values) {
            out[d] = v;
        }
        Ok(out)
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, theta: &mut [f64], grad: &[f64]) -> Result<()> {
        if theta.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(FolError::dims("Adam state", self.m.len(), grad.len()));
        }
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..theta.len() {
            let g = grad[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            theta[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Fails with the term name when a loss value is not finite.
pub fn nan_guard(term: &str, value: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(FolError::NonFinite { term: term.to_string() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64, act: Activation) -> Mlp {
        Mlp::new(&MlpConfig {
            input: 3,
            hidden: vec![4, 5],
            output: 2,
            activation: act,
            seed,
        })
        .unwrap()
    }

    #[test]
    fn zero_net_gives_zero() {
        let mut net = tiny(1, Activation::Tanh);
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        assert_eq!(net.forward(&[0.3, -1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_net() {
        let net = Mlp::from_layers(&[(Mat::identity(3), vec![0.0; 3])], &[Activation::Linear]).unwrap();
        assert_eq!(net.forward(&[1.0, 2.0, 3.0]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(net.input_jacobian(&[1.0, 2.0, 3.0]).unwrap(), Mat::identity(3));
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn second_derivatives_match_fd() {
        for act in [Activation::Tanh, Activation::Swish, Activation::Sigmoid, Activation::Linear] {
            for x in [-2.0, -0.3, 0.0, 0.7, 3.0] {
                let h = 1e-5;
                let (_, d, dd) = act.eval(x);
                let fd1 = (act.eval(x + h).0 - act.eval(x - h).0) / (2.0 * h);
                let fd2 = (act.eval(x + h).1 - act.eval(x - h).1) / (2.0 * h);
                assert!((d - fd1).abs() < 1e-8, "{act:?} {x}");
                assert!((dd - fd2).abs() < 1e-8, "{act:?} {x}");
            }
        }
    }

    #[test]
    fn adam_first_step_is_lr() {
        let mut a = Adam::new(3, 1e-3);
        let mut th = vec![1.0, 1.0, 1.0];
        a.step(&mut th, &[2.0, -0.5, 0.0]).unwrap();
        assert!((th[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((th[1] - (1.0 + 1e-3)).abs() < 1e-10);
        assert_eq!(th[2], 1.0);
    }

    #[test]
    fn scatter_is_exact() {
        let d = Dirichlet::new([(0, 1.0), (3, 0.1)]).unwrap();
        let s = DirichletScatter::new(4, &d).unwrap();
        assert_eq!(s.scatter(&[7.0, 8.0]).unwrap(), vec![1.0, 7.0, 8.0, 0.1]);
        let none = DirichletScatter::new(2, &Dirichlet::empty()).unwrap();
        assert_eq!(none.scatter(&[3.0, 4.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn nan_guard_names_term() {
        match nan_guard("L_se", f64::NAN) {
            Err(FolError::NonFinite { term }) => assert_eq!(term, "L_se"),
            other => panic!("{other:?}"),
        }
    }
}
