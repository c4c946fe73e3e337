//! Matrix-free solve: train a network on one design by minimizing the discrete energy.

use fol::losses::{LossWeights, Physics, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::{FourierBasis, FourierMap, ProjectionSpec};
use fol::thermal::{left_right_dirichlet, relative_error, NonlinearConductivity, ThermalOperator};
use fol::training::{fem_reference, solve_matrix_free};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(21)?;
    let op = ThermalOperator::new(&mesh);
    let c = vec![5.3, 6.0, 7.7, 5.1, 5.1, 6.8, 5.5, 8.3, 8.1, 7.5];
    let basis = FourierBasis::cos_cos(&[3.0, 5.0, 7.0], &[2.0, 4.0, 7.0])?;
    let k = FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?.field(&c)?;
    let d = left_right_dirichlet(&mesh, 1.0, 0.1)?;
    let linear = ThermalSample::fixed(&op, c.clone(), k, vec![0.0; mesh.n_nodes()], d)?;
    let nonlinear = linear.clone().with_nonlinear(NonlinearConductivity { m1: 2.0, m2: 4.0, beta: 1.0 });

    for (name, s) in [("linear", &linear), ("nonlinear", &nonlinear)] {
        let net = Mlp::new(&MlpConfig {
            input: 10,
            hidden: vec![1],
            output: s.partition().n_free(),
            activation: Activation::Swish,
            seed: 1,
        })?;
        let rep = solve_matrix_free(s, net, &LossWeights::default(), 5000, 1e-3)?;
        let err = relative_error(&rep.temperature, &fem_reference(s)?)?;
        println!("{name}: Err vs FEM {err:.4}% after {} epochs", rep.history.records.len());
    }
    Ok(())
}
