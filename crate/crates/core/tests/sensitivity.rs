use fol::losses::{predict, BcMode, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::*;
use fol::sensitivity::*;
use fol::thermal::*;

fn design_setup(mesh: &Mesh) -> Parameterization {
    let basis = FourierBasis::cos_cos(&[5.0, 7.0, 9.0], &[4.0, 6.0, 8.0]).unwrap();
    Parameterization::Fourier(FourierMap::new(basis, ProjectionSpec::conductivity(), mesh).unwrap())
}

#[test]
fn analytic_response_values() {
    let mesh = Mesh::unit_square(9).unwrap();
    let n = mesh.n_nodes();
    let k = vec![1.0; n];
    let t: Vec<f64> = mesh.coords().iter().map(|p| 1.0 - p[0]).collect();
    let j = eval_response(&ResponseFunction::flux_y_sq(), &mesh, &k, &t).unwrap();
    let h = eval_response(&ResponseFunction::flux_x_sq_constraint(), &mesh, &k, &t).unwrap();
    assert!(j.abs() < 1e-15);
    assert!((h - 0.875).abs() < 1e-13);
    let flat = vec![0.4; n];
    assert!(eval_response(&ResponseFunction::flux_y_sq(), &mesh, &k, &flat).unwrap().abs() < 1e-25);
    assert!((eval_response(&ResponseFunction::flux_x_sq_constraint(), &mesh, &k, &flat).unwrap() + 0.125).abs() < 1e-15);
}

#[test]
fn response_matches_refined_quadrature() {
    let mesh = Mesh::unit_square(5).unwrap();
    let k: Vec<f64> = mesh.coords().iter().map(|p| 0.2 + p[0] * p[0] + 0.5 * p[1]).collect();
    let t: Vec<f64> = mesh.coords().iter().map(|p| (2.0 * p[0]).cos() + p[1] * p[0]).collect();
    // composite midpoint sums of the bilinear interpolants on a 200 x 200 sub-grid per element
    let m = 200;
    let mut oracle = [0.0; 2];
    for e in 0..mesh.n_elems() {
        let ke = mesh.gather(e, &k);
        let te = mesh.gather(e, &t);
        let ids = mesh.elems()[e];
        let p0 = mesh.coords()[ids[0]];
        let p2 = mesh.coords()[ids[2]];
        let (hx, hy) = (p2[0] - p0[0], p2[1] - p0[1]);
        for a in 0..m {
            for b in 0..m {
                let s = (a as f64 + 0.5) / m as f64;
                let r = (b as f64 + 0.5) / m as f64;
                let nv = [(1.0 - s) * (1.0 - r), s * (1.0 - r), s * r, (1.0 - s) * r];
                let kk: f64 = (0..4).map(|i| nv[i] * ke[i]).sum();
                let gx = ((te[1] - te[0]) * (1.0 - r) + (te[2] - te[3]) * r) / hx;
                let gy = ((te[3] - te[0]) * (1.0 - s) + (te[2] - te[1]) * s) / hy;
                let da = hx * hy / (m * m) as f64;
                oracle[0] += da * (kk * gx).powi(2);
                oracle[1] += da * (kk * gy).powi(2);
            }
        }
    }
    let h = eval_response(&ResponseFunction::flux_x_sq_constraint(), &mesh, &k, &t).unwrap() + 0.125;
    let j = eval_response(&ResponseFunction::flux_y_sq(), &mesh, &k, &t).unwrap();
    assert!((h - oracle[0]).abs() <= 1e-3 * oracle[0], "{h} vs {}", oracle[0]);
    assert!((j - oracle[1]).abs() <= 1e-3 * oracle[1], "{j} vs {}", oracle[1]);
}

#[test]
fn partials_match_fd_and_scale_with_k() {
    let mesh = Mesh::unit_square(6).unwrap();
    let n = mesh.n_nodes();
    let k: Vec<f64> = (0..n).map(|i| 0.1 + ((i * 7) % 13) as f64 / 13.0).collect();
    let t: Vec<f64> = (0..n).map(|i| ((i * 5) % 11) as f64 / 11.0).collect();
    for rf in [ResponseFunction::flux_y_sq(), ResponseFunction::flux_x_sq_constraint()] {
        let (pt, pk) = partials(&rf, &mesh, &k, &t).unwrap();
        let eps = 1e-6;
        for i in 0..n {
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[i] += eps;
            tm[i] -= eps;
            let fd = (eval_response(&rf, &mesh, &k, &tp).unwrap() - eval_response(&rf, &mesh, &k, &tm).unwrap()) / (2.0 * eps);
            assert!((fd - pt[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
            let mut kp = k.clone();
            let mut km = k.clone();
            kp[i] += eps;
            km[i] -= eps;
            let fd = (eval_response(&rf, &mesh, &kp, &t).unwrap() - eval_response(&rf, &mesh, &km, &t).unwrap()) / (2.0 * eps);
            assert!((fd - pk[i]).abs() <= 1e-6 * (1.0 + fd.abs()));
        }
        // J is quadratic in k, so dJ/dk is homogeneous of degree one
        let k2: Vec<f64> = k.iter().map(|v| 2.0 * v).collect();
        let (_, pk2) = partials(&rf, &mesh, &k2, &t).unwrap();
        for (a, b) in pk.iter().zip(&pk2) {
            assert!((2.0 * a - b).abs() <= 1e-13 * (1.0 + b.abs()));
        }
    }
    let flat = vec![0.3; n];
    let (pt, pk) = partials(&ResponseFunction::flux_y_sq(), &mesh, &k, &flat).unwrap();
    assert!(pt.iter().chain(&pk).all(|v| v.abs() < 1e-13));
}

#[test]
fn uniform_state_gives_zero_adjoint_path() {
    // equal end temperatures: T is uniform, dJ/dT = 0 and the adjoint vanishes
    let mesh = Mesh::unit_square(7).unwrap();
    let param = design_setup(&mesh);
    let c = vec![0.5, 0.2, -0.1, 0.3, 0.0, 0.1, -0.2, 0.05, 0.1, -0.3];
    let (k, a) = param.design_to_nodal(&c).unwrap();
    let bvp = ThermalBvp::left_right(&mesh, k, 0.7, 0.7).unwrap();
    let t = solve_linear(&bvp).unwrap();
    let s = adjoint_sensitivity(&ResponseFunction::flux_y_sq(), &bvp, &t, &a).unwrap();
    assert!(s.dj_dc.iter().all(|v| v.abs() < 1e-14));
    let d = direct_sensitivity(&ResponseFunction::flux_y_sq(), &bvp, &t, &a).unwrap();
    assert!(d.dj_dc.iter().all(|v| v.abs() < 1e-14));
}

#[test]
fn fol_route_is_total_derivative_of_network_pipeline() {
    let mesh = Mesh::unit_square(7).unwrap();
    let op = ThermalOperator::new(&mesh);
    let param = design_setup(&mesh);
    let d = left_right_dirichlet(&mesh, 1.0, 0.1).unwrap();
    let n = mesh.n_nodes();
    let net = Mlp::new(&MlpConfig { input: 10, hidden: vec![8], output: n - 14, activation: Activation::Swish, seed: 5 }).unwrap();
    let c = vec![0.5, 0.2, -0.1, 0.3, 0.0, 0.1, -0.2, 0.05, 0.1, -0.3];
    let rfs = [ResponseFunction::flux_y_sq(), ResponseFunction::flux_x_sq_constraint()];
    let s = ThermalSample::conductivity_design(&op, &param, c.clone(), vec![0.0; n], d.clone()).unwrap();
    let fol = fol_sensitivities(&rfs, &net, &s, BcMode::Hard).unwrap();
    let eps = 1e-6;
    for (r, rf) in rfs.iter().enumerate() {
        for j in 0..c.len() {
            let value = |sign: f64| {
                let mut cc = c.clone();
                cc[j] += sign * eps;
                let sj = ThermalSample::conductivity_design(&op, &param, cc, vec![0.0; n], d.clone()).unwrap();
                let t = predict(&net, &sj, BcMode::Hard).unwrap();
                eval_response(rf, &mesh, sj.conductivity(), &t).unwrap()
            };
            let fd = (value(1.0) - value(-1.0)) / (2.0 * eps);
            let a = fol[r].dj_dc[j];
            assert!((fd - a).abs() <= 1e-6 * (1.0 + fd.abs()), "r={r} j={j} {fd} vs {a}");
        }
    }
}

fn body_of<'a>(src: &'a str, signature: &str) -> &'a str {
    let start = src.find(signature).expect("function present");
    let rest = &src[start + signature.len()..];
    let end = rest.find("\npub fn ").unwrap_or(rest.len());
    &rest[..end]
}

#[test]
fn fol_and_matrix_free_paths_contain_no_solves() {
    let forbidden = ["solve", "cholesky", "lu(", "factor", "assemble("];
    let sens = include_str!("../src/sensitivity.rs");
    let fol = body_of(sens, "pub fn fol_sensitivities(");
    let mf = body_of(include_str!("../src/training.rs"), "pub fn solve_matrix_free(");
    let sample_loss = body_of(include_str!("../src/losses.rs"), "pub fn sample_loss(");
    for (name, body) in [("fol_sensitivities", fol), ("sample_loss", sample_loss)] {
        for f in forbidden {
            assert!(!body.contains(f), "{name} mentions {f}");
        }
    }
    // the matrix-free driver only trains and predicts
    let code: String = mf.lines().filter(|l| !l.trim_start().starts_with("//")).collect();
    for f in forbidden {
        assert!(!code.contains(f), "solve_matrix_free mentions {f}");
    }
}
