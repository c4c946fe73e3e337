//! Upsample a coarse temperature field and write CSV and legacy VTK.

use fol::io::{thermal_table, write_vtk, PointData};
use fol::mesh::Mesh;
use fol::param::{FourierBasis, FourierMap, ProjectionSpec};
use fol::thermal::{recover_flux, solve_linear, ThermalBvp};

fn main() -> fol::Result<()> {
    let mesh = Mesh::unit_square(11)?;
    let basis = FourierBasis::cos_cos(&[3.0, 5.0, 7.0], &[2.0, 4.0, 7.0])?;
    let k = FourierMap::new(basis, ProjectionSpec::conductivity(), &mesh)?.field(&[5.3, 6.0, 7.7, 5.1, 5.1, 6.8, 5.5, 8.3, 8.1, 7.5])?;
    let bvp = ThermalBvp::left_right(&mesh, k.clone(), 1.0, 0.1)?;
    let t = solve_linear(&bvp)?;
    let q = recover_flux(&bvp, &t)?;

    let out = std::env::temp_dir().join("fol_export_example");
    std::fs::create_dir_all(&out)?;
    thermal_table(&mesh, &t, &q, &k)?.write(&out.join("coarse.csv"))?;
    let (fine, tf) = mesh.upsample(&t, 165, 165)?;
    write_vtk(&out.join("fine.vtk"), &fine, "temperature", &[PointData::Scalar("T".into(), tf)])?;
    println!("wrote {} ({} coarse nodes, {} fine nodes)", out.display(), mesh.n_nodes(), fine.n_nodes());
    Ok(())
}
