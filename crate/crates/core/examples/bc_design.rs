//! Boundary-value design in plane stress: the network maps the top-edge
//! displacement to the full displacement field.

use fol::elasticity::{solve_elastic, ElasticOperator};
use fol::losses::{predict, BcMode, ElasticSample, LossWeights, Physics};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::gen_random_bc_samples;
use fol::thermal::relative_error;
use fol::training::{train_parametric, TrainConfig};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(11)?;
    let op = ElasticOperator::new(&mesh, 0.3)?;
    let r = [(-0.1, 0.1), (-0.1, 0.1)];
    let samples = |n, seed| -> fol::Result<Vec<ElasticSample>> {
        gen_random_bc_samples(n, &r, seed)?
            .into_iter()
            .map(|c| ElasticSample::top_displacement(&op, vec![1.0; mesh.n_nodes()], [c[0], c[1]]))
            .collect()
    };
    let train = samples(50, 1)?;
    let test = samples(10, 2)?;
    let mut net = Mlp::new(&MlpConfig {
        input: 2,
        hidden: vec![20],
        output: train[0].partition().n_free(),
        activation: Activation::Swish,
        seed: 0,
    })?;
    let cfg = TrainConfig { epochs: 1000, batch_size: 10, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    train_parametric(&mut net, &train, &LossWeights::default(), &cfg)?;
    let mut errs = Vec::new();
    for s in &test {
        let reference = solve_elastic(&s.to_bvp()?)?.displacement;
        errs.push(relative_error(&predict(&net, s, BcMode::Hard)?, &reference)?);
    }
    println!("boundary design, unseen displacements: mean Err {:.3}%", errs.iter().sum::<f64>() / errs.len() as f64);
    Ok(())
}
