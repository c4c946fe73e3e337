//! FEM solve of a Fourier conductivity design, linear and temperature-dependent.

use fol::mesh::Mesh;
use fol::param::{FourierBasis, FourierMap, ProjectionSpec};
use fol::thermal::{recover_flux, solve_linear, solve_newton, NonlinearConductivity, ThermalBvp};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(21)?;
    let basis = FourierBasis::cos_cos(&[3.0, 5.0, 7.0], &[2.0, 4.0, 7.0])?;
    let map = FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?;
    let k = map.field(&[5.3, 6.0, 7.7, 5.1, 5.1, 6.8, 5.5, 8.3, 8.1, 7.5])?;

    let bvp = ThermalBvp::left_right(&mesh, k, 1.0, 0.1)?;
    let t = solve_linear(&bvp)?;
    let q = recover_flux(&bvp, &t)?;
    let qx_mean = q.iter().map(|v| v[0]).sum::<f64>() / q.len() as f64;
    println!("linear: T(0.5,0.5) = {:.5}, mean qx = {qx_mean:.5}", mesh.interpolate(&t, 0.5, 0.5)?);

    let nl = bvp.with_nonlinear(NonlinearConductivity { m1: 2.0, m2: 4.0, beta: 1.0 });
    let rep = solve_newton(&nl, 1e-10, 30)?;
    println!("nonlinear: {} Newton iterations, residual history:", rep.iterations);
    for (i, r) in rep.residual_history.iter().enumerate() {
        println!("  {i:2}  {r:.3e}");
    }
    println!("nonlinear: T(0.5,0.5) = {:.5}", mesh.interpolate(&rep.temperature, 0.5, 0.5)?);
    Ok(())
}
