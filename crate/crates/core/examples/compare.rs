//! Physics-driven vs data-driven training on ellipse microstructures, same architecture.

use fol::losses::{BcMode, LossWeights, Physics, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::{gen_ellipse_samples, EllipseConfig};
use fol::thermal::{left_right_dirichlet, ThermalOperator};
use fol::training::{evaluate, fem_reference, train_data_driven, train_parametric, TrainConfig};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(11)?;
    let op = ThermalOperator::new(&mesh);
    let d = left_right_dirichlet(&mesh, 1.0, 0.1)?;
    let samples = |n, seed| -> fol::Result<Vec<ThermalSample>> {
        gen_ellipse_samples(n, &EllipseConfig::default(), seed)?
            .into_iter()
            .map(|e| ThermalSample::fixed(&op, e.conductivity.clone(), e.conductivity, vec![0.0; mesh.n_nodes()], d.clone()))
            .collect()
    };
    let train = samples(200, 1)?;
    let test = samples(20, 2)?;
    let mcfg = MlpConfig {
        input: mesh.n_nodes(),
        hidden: vec![10, 10],
        output: train[0].partition().n_free(),
        activation: Activation::Swish,
        seed: 0,
    };
    let cfg = TrainConfig { epochs: 5000, batch_size: 50, lr: 1e-3, seed: 0, bc_mode: BcMode::Hard };

    let mut physics = Mlp::new(&mcfg)?;
    train_parametric(&mut physics, &train, &LossWeights::default(), &cfg)?;
    let inputs: Vec<Vec<f64>> = train.iter().map(|s| s.input().to_vec()).collect();
    let labels = train
        .iter()
        .map(|s| Ok(s.partition().gather_free(&fem_reference(s)?)))
        .collect::<fol::Result<Vec<_>>>()?;
    let mut data = Mlp::new(&mcfg)?;
    train_data_driven(&mut data, &inputs, &labels, &cfg)?;

    let ep = evaluate(&physics, &test, BcMode::Hard)?;
    let ed = evaluate(&data, &test, BcMode::Hard)?;
    println!("unseen mean Err: physics-driven {:.3}%, data-driven {:.3}%", ep.mean_err_t(), ed.mean_err_t());
    Ok(())
}
