//! Physics-driven parametric training over random Fourier designs, evaluated on unseen ones.

use fol::losses::{BcMode, LossWeights, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::{gen_random_fourier_samples, FourierBasis, FourierMap, Parameterization, ProjectionSpec};
use fol::thermal::{left_right_dirichlet, ThermalOperator};
use fol::training::{evaluate, train_parametric, TrainConfig};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(11)?;
    let op = ThermalOperator::new(&mesh);
    let basis = FourierBasis::cos_cos(&[5.0, 7.0, 9.0], &[4.0, 6.0, 8.0])?;
    let param = Parameterization::Fourier(FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?);
    let d = left_right_dirichlet(&mesh, 1.0, 0.1)?;
    let mut ranges = vec![(-0.5, 0.5); 10];
    ranges[0] = (0.0, 1.0);
    let samples = |n, seed| -> fol::Result<Vec<ThermalSample>> {
        gen_random_fourier_samples(n, &ranges, seed)?
            .into_iter()
            .map(|c| ThermalSample::conductivity_design(&op, &param, c, vec![0.0; mesh.n_nodes()], d.clone()))
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
    let cfg = TrainConfig { epochs: 500, batch_size: 20, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    let h = train_parametric(&mut net, &train, &LossWeights::default(), &cfg)?;
    for r in h.records.iter().step_by(100) {
        println!("epoch {:4}  L = {:.6}", r.epoch, r.terms.total);
    }
    let rep = evaluate(&net, &test, BcMode::Hard)?;
    println!("unseen designs: mean Err {:.3}%, max {:.3}%", rep.mean_err_t(), rep.max_err_t());
    Ok(())
}
