//! Source-term design: the network maps heat-sink coefficients to temperature.

use fol::losses::{BcMode, LossWeights, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::{gen_random_fourier_samples, FourierBasis, FourierMap, ProjectionSpec};
use fol::thermal::{left_right_dirichlet, ThermalOperator};
use fol::training::{evaluate, train_parametric, TrainConfig};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(11)?;
    let op = ThermalOperator::new(&mesh);
    let basis = FourierBasis::cos_cos(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0])?;
    let map = FourierMap::new(basis, ProjectionSpec::heat_sink(), &mesh)?;
    let d = left_right_dirichlet(&mesh, 1.0, 0.1)?;
    let mut ranges = vec![(-0.5, 0.5); 10];
    ranges[0] = (0.0, 1.0);
    let samples = |n, seed| -> fol::Result<Vec<ThermalSample>> {
        gen_random_fourier_samples(n, &ranges, seed)?
            .into_iter()
            .map(|c| ThermalSample::source_design(&op, vec![1.0; mesh.n_nodes()], &map, c, d.clone()))
            .collect()
    };
    let train = samples(100, 1)?;
    let test = samples(10, 2)?;
    let mut net = Mlp::new(&MlpConfig {
        input: 10,
        hidden: vec![21],
        output: mesh.n_nodes() - d.len(),
        activation: Activation::Swish,
        seed: 0,
    })?;
    let cfg = TrainConfig { epochs: 1000, batch_size: 20, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    train_parametric(&mut net, &train, &LossWeights::default(), &cfg)?;
    let rep = evaluate(&net, &test, BcMode::Hard)?;
    println!("source design, unseen sinks: mean Err {:.3}%", rep.mean_err_t());
    Ok(())
}
