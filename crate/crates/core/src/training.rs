//! Training loops and post-training evaluation.
//!
//! * [`train_parametric`]: physics-driven FOL over a sample corpus.
//! * [`train_data_driven`]: supervised MSE on precomputed FEM solutions.
//! * [`solve_matrix_free`]: a single sample trained to convergence; the path
//!   uses residual evaluations only and never factorizes a matrix.
//! * [`evaluate`]: per-sample temperature and flux errors against FEM.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FolError, Result};
use crate::losses::{batch_loss, predict, BcMode, LossTerms, LossWeights, Physics, ThermalSample};
use crate::nn::{nan_guard, Adam, Mlp};
use crate::thermal::{recover_flux, relative_error, solve_linear, solve_newton};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub bc_mode: BcMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 1000,
            batch_size: 50,
            lr: 1e-3,
            seed: 0,
            bc_mode: BcMode::Hard,
        }
    }
}

/// One row of the per-epoch history: mean loss over the epoch's batches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub terms: LossTerms,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn first(&self) -> Option<&EpochRecord> {
        self.records.first()
    }
}

fn divergence(epoch: usize, err: FolError) -> FolError {
    match err {
        FolError::NonFinite { term } => FolError::TrainingDiverged { epoch, term },
        other => other,
    }
}

/// Adam on the weighted FOL loss; each epoch is one seeded shuffle of the corpus.
pub fn train_parametric<P: Physics>(
    net: &mut Mlp,
    samples: &[P],
    weights: &LossWeights,
    cfg: &TrainConfig,
) -> Result<History> {
    weights.validate()?;
    if cfg.batch_size == 0 {
        return Err(FolError::InvalidArgument("batch size must be positive".into()));
    }
    if samples.is_empty() {
        return Err(FolError::InvalidArgument("no training samples".into()));
    }
    let mut adam = Adam::new(net.n_params(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut history = History::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossTerms::default();
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let batch: Vec<&P> = idx.iter().map(|&i| &samples[i]).collect();
            let (terms, grad) = batch_loss(net, &batch, weights, cfg.bc_mode, true).map_err(|e| divergence(epoch, e))?;
            let grad = grad.expect("gradient requested");
            adam.step(net.params_mut(), &grad)?;
            sum.total += terms.total;
            sum.ph += terms.ph;
            sum.bc += terms.bc;
            sum.se += terms.se;
            batches += 1;
        }
        let s = 1.0 / batches as f64;
        history.records.push(EpochRecord {
            epoch,
            terms: LossTerms {
                total: sum.total * s,
                ph: sum.ph * s,
                bc: sum.bc * s,
                se: sum.se * s,
            },
        });
    }
    Ok(history)
}

/// Mean over a corpus of the weighted FOL loss at the current parameters.
pub fn corpus_loss<P: Physics>(net: &Mlp, samples: &[P], weights: &LossWeights, mode: BcMode) -> Result<LossTerms> {
    let refs: Vec<&P> = samples.iter().collect();
    Ok(batch_loss(net, &refs, weights, mode, false)?.0)
}

/// Supervised baseline: mean squared error between network outputs and labels.
///
/// `inputs[i]` maps to `labels[i]`, both in network coordinates (free DOFs in
/// hard-BC setups).
pub fn train_data_driven(
    net: &mut Mlp,
    inputs: &[Vec<f64>],
    labels: &[Vec<f64>],
    cfg: &TrainConfig,
) -> Result<History> {
    if inputs.len() != labels.len() {
        return Err(FolError::dims("labels", inputs.len(), labels.len()));
    }
    if inputs.is_empty() || cfg.batch_size == 0 {
        return Err(FolError::InvalidArgument("need samples and a positive batch size".into()));
    }
    if let Some(l) = labels.iter().find(|l| l.len() != net.output_dim()) {
        return Err(FolError::dims("label length", net.output_dim(), l.len()));
    }
    let mut adam = Adam::new(net.n_params(), cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = History::default();
    let np = net.n_params();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks(cfg.batch_size) {
            let parts: Vec<Result<(f64, Vec<f64>)>> = idx
                .par_chunks(4)
                .map(|chunk| {
                    let mut g = vec![0.0; np];
                    let mut l = 0.0;
                    for &i in chunk {
                        let tr = net.trace(&inputs[i], false)?;
                        let n = labels[i].len() as f64;
                        let mut seed = Vec::with_capacity(labels[i].len());
                        for (o, y) in tr.output().iter().zip(&labels[i]) {
                            l += (o - y) * (o - y) / n;
                            seed.push(2.0 * (o - y) / n);
                        }
                        net.backward(&tr, &seed, None, &mut g)?;
                    }
                    Ok((l, g))
                })
                .collect();
            let scale = 1.0 / idx.len() as f64;
            let mut grad = vec![0.0; np];
            let mut loss = 0.0;
            for p in parts {
                let (l, g) = p?;
                loss += scale * l;
                grad.iter_mut().zip(&g).for_each(|(a, b)| *a += scale * b);
            }
            nan_guard("L_mse", loss).map_err(|e| divergence(epoch, e))?;
            adam.step(net.params_mut(), &grad)?;
            sum += loss;
            batches += 1;
        }
        let mse = sum / batches as f64;
        history.records.push(EpochRecord {
            epoch,
            terms: LossTerms {
                total: mse,
                ph: mse,
                bc: 0.0,
                se: 0.0,
            },
        });
    }
    Ok(history)
}

/// Outcome of a single-sample matrix-free solve.
#[derive(Debug, Clone)]
pub struct MatrixFreeReport {
    pub temperature: Vec<f64>,
    pub history: History,
    pub net: Mlp,
}

/// Trains a network on one sample and returns its prediction.
///
/// Only residual (and energy) evaluations are used: no matrix is assembled or
/// factorized on this path.
pub fn solve_matrix_free(
    sample: &ThermalSample,
    mut net: Mlp,
    weights: &LossWeights,
    epochs: usize,
    lr: f64,
) -> Result<MatrixFreeReport> {
    let cfg = TrainConfig {
        epochs,
        batch_size: 1,
        lr,
        seed: 0,
        bc_mode: BcMode::Hard,
    };
    let history = train_parametric(&mut net, std::slice::from_ref(sample), weights, &cfg)?;
    let temperature = predict(&net, sample, BcMode::Hard)?;
    Ok(MatrixFreeReport {
        temperature,
        history,
        net,
    })
}

/// Errors of one sample against its FEM reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: usize,
    pub err_t: f64,
    pub err_qx: f64,
    pub err_qy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<SampleError>,
}

impl EvaluationReport {
    pub fn mean_err_t(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.err_t))
    }

    pub fn max_err_t(&self) -> f64 {
        self.rows.iter().map(|r| r.err_t).fold(f64::NAN, f64::max)
    }

    pub fn mean_err_qx(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.err_qx))
    }

    pub fn mean_err_qy(&self) -> f64 {
        mean(self.rows.iter().map(|r| r.err_qy))
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Reference solution of a thermal sample: linear solve or Newton.
pub fn fem_reference(sample: &ThermalSample) -> Result<Vec<f64>> {
    let bvp = sample.to_bvp()?;
    if bvp.nonlinear.is_some() {
        Ok(solve_newton(&bvp, 1e-10, 50)?.temperature)
    } else {
        solve_linear(&bvp)
    }
}

fn flux_error(pred: &[[f64; 2]], reference: &[[f64; 2]], axis: usize) -> f64 {
    let p: Vec<f64> = pred.iter().map(|q| q[axis]).collect();
    let r: Vec<f64> = reference.iter().map(|q| q[axis]).collect();
    relative_error(&p, &r).unwrap_or(f64::NAN)
}

/// Temperature and flux errors of the network on each sample.
pub fn evaluate(net: &Mlp, samples: &[ThermalSample], mode: BcMode) -> Result<EvaluationReport> {
    let rows: Vec<Result<SampleError>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let reference = fem_reference(s)?;
            let pred = predict(net, s, mode)?;
            let bvp = s.to_bvp()?;
            let qp = recover_flux(&bvp, &pred)?;
            let qr = recover_flux(&bvp, &reference)?;
            Ok(SampleError {
                sample_id: i,
                err_t: relative_error(&pred, &reference)?,
                err_qx: flux_error(&qp, &qr, 0),
                err_qy: flux_error(&qp, &qr, 1),
            })
        })
        .collect();
    Ok(EvaluationReport {
        rows: rows.into_iter().collect::<Result<_>>()?,
    })
}
