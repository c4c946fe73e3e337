//! Seeded design corpora: Fourier coefficients, ellipse microstructures, boundary values.

use fol::param::{gen_ellipse_samples, gen_random_bc_samples, gen_random_fourier_samples, EllipseConfig};

fn main() -> fol::Result<()> {
    let mut ranges = vec![(-1.0, 1.0); 10];
    ranges[0] = (0.0, 1.0);
    let fourier = gen_random_fourier_samples(500, &ranges, 0)?;
    println!("fourier: {} designs, first {:?}", fourier.len(), &fourier[0][..3]);

    let ellipses = gen_ellipse_samples(200, &EllipseConfig::default(), 0)?;
    let vf: Vec<f64> = ellipses.iter().map(|s| s.volume_fraction).collect();
    let mean = vf.iter().sum::<f64>() / vf.len() as f64;
    let (lo, hi) = vf.iter().fold((1.0f64, 0.0f64), |(a, b), v| (a.min(*v), b.max(*v)));
    println!("ellipses: {} microstructures on 11x11, inclusion fraction mean {mean:.3} range [{lo:.3}, {hi:.3}]", ellipses.len());

    let bc = gen_random_bc_samples(1000, &[(-0.1, 0.1), (-0.1, 0.1)], 0)?;
    println!("boundary: {} top-edge displacements, first {:?}", bc.len(), bc[0]);
    Ok(())
}
