//! dh/dc by the adjoint, the direct method and a trained network, side by side.

use fol::losses::{BcMode, LossWeights, Physics, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::{FourierBasis, FourierMap, Parameterization, ProjectionSpec};
use fol::sensitivity::{adjoint_sensitivity, direct_sensitivity, fol_sensitivity, gradient_error, ResponseFunction};
use fol::thermal::{left_right_dirichlet, solve_linear, ThermalOperator};
use fol::training::{train_parametric, TrainConfig};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(21)?;
    let op = ThermalOperator::new(&mesh);
    let basis = FourierBasis::cos_cos(&[5.0, 7.0, 9.0], &[4.0, 6.0, 8.0])?;
    let param = Parameterization::Fourier(FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?);
    let d = left_right_dirichlet(&mesh, 1.0, 0.1)?;
    let c = vec![0.5, 0.3, -0.2, 0.1, 0.4, -0.3, 0.2, 0.1, -0.1, 0.25];
    let s = ThermalSample::conductivity_design(&op, &param, c, vec![0.0; mesh.n_nodes()], d)?;

    let bvp = s.to_bvp()?;
    let t = solve_linear(&bvp)?;
    let a = s.conductivity_tangent().expect("conductivity design");
    let rf = ResponseFunction::flux_x_sq_constraint();
    let adj = adjoint_sensitivity(&rf, &bvp, &t, a)?;
    let dir = direct_sensitivity(&rf, &bvp, &t, a)?;

    let mut net = Mlp::new(&MlpConfig {
        input: 10,
        hidden: vec![21],
        output: s.partition().n_free(),
        activation: Activation::Swish,
        seed: 0,
    })?;
    let w = LossWeights { w_se: 1.0, ..Default::default() };
    let cfg = TrainConfig { epochs: 5000, batch_size: 1, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    train_parametric(&mut net, std::slice::from_ref(&s), &w, &cfg)?;
    let fol = fol_sensitivity(&rf, &net, &s, BcMode::Hard)?;

    println!("h = {:.6}", adj.value);
    println!("{:>3} {:>12} {:>12} {:>12}", "j", "adjoint", "direct", "FOL");
    for j in 0..adj.dj_dc.len() {
        println!("{j:>3} {:>12.6} {:>12.6} {:>12.6}", adj.dj_dc[j], dir.dj_dc[j], fol.dj_dc[j]);
    }
    println!("adjoint vs direct {:.2e}%, FOL vs adjoint {:.2}%", gradient_error(&dir.dj_dc, &adj.dj_dc), gradient_error(&fol.dj_dc, &adj.dj_dc));
    Ok(())
}
