//! Ellipse-inclusion microstructures: rasterize finely, max-pool onto the solve grid.

use fol::mesh::Mesh;
use fol::param::{gen_ellipse_samples, EllipseConfig};
use fol::thermal::{solve_linear, ThermalBvp};

fn main() -> fol::Result<()> {
    let cfg = EllipseConfig::default();
    let mesh = Mesh::unit_square(cfg.coarse_n)?;
    for (i, s) in gen_ellipse_samples(3, &cfg, 7)?.into_iter().enumerate() {
        let t = solve_linear(&ThermalBvp::left_right(&mesh, s.conductivity.clone(), 1.0, 0.1)?)?;
        println!(
            "sample {i}: {} inclusions, fraction {:.3}, dispersion {:.3}, T(0.5,0.5) = {:.4}",
            s.ellipses.len(),
            s.volume_fraction,
            s.dispersion,
            mesh.interpolate(&t, 0.5, 0.5)?
        );
        for j in (0..cfg.coarse_n).rev() {
            let row: String = (0..cfg.coarse_n)
                .map(|i| if s.conductivity[mesh.node(i, j)] > 0.5 { '#' } else { '.' })
                .collect();
            println!("  {row}");
        }
    }
    Ok(())
}
