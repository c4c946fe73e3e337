//! Plane-stress FEM: bottom edge clamped, top edge pulled upward.

use fol::elasticity::{clamped_top_displacement, solve_elastic, ElasticBvp};
use fol::mesh::Mesh;
use fol::param::{FourierBasis, FourierMap, ProjectionSpec};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(21)?;
    let basis = FourierBasis::cos_cos(&[3.0, 5.0, 7.0], &[2.0, 4.0, 7.0])?;
    let modulus = FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?
        .field(&[0.7, -0.5, -0.0, 0.3, 0.9, 1.6, -0.2, 0.9, -0.3, -1.3])?;
    let d = clamped_top_displacement(&mesh, [0.0, 0.1])?;
    let sol = solve_elastic(&ElasticBvp::new(&mesh, modulus, 0.3, d)?)?;
    let mag = sol.magnitude();
    let peak = mag.iter().cloned().fold(0.0, f64::max);
    let centre = mesh.node(10, 10);
    println!("max |u| = {peak:.4}");
    println!("centre: u = ({:.5}, {:.5}), sigma_yy = {:.5}", sol.displacement[2 * centre], sol.displacement[2 * centre + 1], sol.stress[centre][1]);
    Ok(())
}
