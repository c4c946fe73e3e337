//! Gradient-projection NAND run: maximize the y-flux at fixed x-flux, FEM-driven.

use fol::mesh::Mesh;
use fol::optim::{optimize, FluxDesignProblem, NandMode, OptimOptions};
use fol::param::{FourierBasis, FourierMap, ProjectionSpec};
use fol::thermal::left_right_dirichlet;

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(21)?;
    let basis = FourierBasis::cos_cos(&[5.0, 7.0, 9.0], &[4.0, 6.0, 8.0])?;
    let map = FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?;
    let d = left_right_dirichlet(&mesh, 1.0, 0.1)?;
    let mut problem = FluxDesignProblem::new(&mesh, map, d, NandMode::Fem);
    let mut c0 = vec![0.0; 10];
    c0[0] = 0.5;
    let res = optimize(&mut problem, &c0, &OptimOptions { iterations: 100, alpha: 1.0, ..Default::default() })?;
    for r in res.history.iter().step_by(10) {
        println!("iter {:3}  J = {:.5}  h = {:+.2e}  |step| = {:.2e}", r.iter, -r.objective, r.constraint, r.step_norm);
    }
    let (j0, h0) = problem.fem_responses(&c0)?;
    let (j, h) = problem.fem_responses(&res.c)?;
    println!("start J = {j0:.5}, h = {h0:+.4}; final J = {j:.5}, h = {h:+.2e}");
    println!("design {:?}", res.c.iter().map(|v| (v * 1e3).round() / 1e3).collect::<Vec<_>>());
    Ok(())
}
