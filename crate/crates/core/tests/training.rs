use fol::linalg::Mat;
use fol::losses::{BcMode, LossWeights, PhysicsLoss, ThermalSample};
use fol::mesh::Mesh;
use fol::nn::{Activation, Mlp, MlpConfig};
use fol::param::*;
use fol::thermal::*;
use fol::training::*;
use nalgebra::{DMatrix, DVector};

struct Setup {
    mesh: Mesh,
}

impl Setup {
    fn new(n: usize) -> Self {
        Setup { mesh: Mesh::unit_square(n).unwrap() }
    }

    fn param(&self) -> Parameterization {
        let basis = FourierBasis::cos_cos(&[5.0, 7.0, 9.0], &[4.0, 6.0, 8.0]).unwrap();
        Parameterization::Fourier(FourierMap::new(basis, ProjectionSpec::conductivity(), &self.mesh).unwrap())
    }

    fn net(&self, hidden: Vec<usize>, seed: u64) -> Mlp {
        let n = self.mesh.n_nodes();
        let free = n - 2 * self.mesh.ny();
        Mlp::new(&MlpConfig { input: 10, hidden, output: free, activation: Activation::Swish, seed }).unwrap()
    }
}

fn samples<'a>(op: &'a ThermalOperator<'a>, param: &Parameterization, cs: Vec<Vec<f64>>) -> Vec<ThermalSample<'a>> {
    let mesh = op.mesh();
    let d = left_right_dirichlet(mesh, 1.0, 0.1).unwrap();
    cs.into_iter()
        .map(|c| ThermalSample::conductivity_design(op, param, c, vec![0.0; mesh.n_nodes()], d.clone()).unwrap())
        .collect()
}

fn ranges() -> Vec<(f64, f64)> {
    let mut r = vec![(-0.3, 0.3); 10];
    r[0] = (0.0, 1.0);
    r
}

#[test]
fn zero_epochs_keeps_initialization() {
    let s = Setup::new(5);
    let op = ThermalOperator::new(&s.mesh);
    let param = s.param();
    let set = samples(&op, &param, gen_random_fourier_samples(3, &ranges(), 0).unwrap());
    let mut net = s.net(vec![4], 0);
    let before = net.clone();
    let h = train_parametric(&mut net, &set, &LossWeights::default(), &TrainConfig { epochs: 0, ..Default::default() }).unwrap();
    assert!(h.records.is_empty());
    assert_eq!(net, before);
}

#[test]
fn replay_is_bit_identical_and_descends() {
    let s = Setup::new(7);
    let op = ThermalOperator::new(&s.mesh);
    let param = s.param();
    let set = samples(&op, &param, gen_random_fourier_samples(120, &ranges(), 1).unwrap());
    let w = LossWeights { w_se: 0.5, ..Default::default() };
    for batch_size in [50, 100] {
        let cfg = TrainConfig { epochs: 6, batch_size, lr: 1e-2, seed: 4, bc_mode: BcMode::Hard };
        let mut a = s.net(vec![8], 2);
        let mut b = s.net(vec![8], 2);
        let ha = train_parametric(&mut a, &set, &w, &cfg).unwrap();
        let hb = train_parametric(&mut b, &set, &w, &cfg).unwrap();
        assert_eq!(ha.records.len(), 6);
        for (x, y) in ha.records.iter().zip(&hb.records) {
            assert_eq!(x.terms.total.to_bits(), y.terms.total.to_bits());
            assert_eq!(x.terms.se.to_bits(), y.terms.se.to_bits());
        }
        assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(ha.last().unwrap().terms.total <= ha.first().unwrap().terms.total);
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let s = Setup::new(7);
    let op = ThermalOperator::new(&s.mesh);
    let param = s.param();
    let set = samples(&op, &param, gen_random_fourier_samples(24, &ranges(), 3).unwrap());
    let w = LossWeights { w_se: 1.0, physics: PhysicsLoss::Residual, ..Default::default() };
    let cfg = TrainConfig { epochs: 3, batch_size: 10, lr: 1e-2, seed: 1, bc_mode: BcMode::Hard };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut net = s.net(vec![6], 9);
            train_parametric(&mut net, &set, &w, &cfg).unwrap();
            net
        })
    };
    let a = run(1);
    let b = run(3);
    assert!(a.params().iter().zip(b.params()).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn single_sample_training_reproduces_fem() {
    let s = Setup::new(11);
    let op = ThermalOperator::new(&s.mesh);
    let param = s.param();
    let set = samples(&op, &param, vec![vec![0.5, 0.2, -0.1, 0.15, 0.0, -0.2, 0.1, 0.05, -0.1, 0.2]]);
    let mut net = s.net(vec![10], 0);
    let cfg = TrainConfig { epochs: 3000, batch_size: 1, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    train_parametric(&mut net, &set, &LossWeights::default(), &cfg).unwrap();
    let rep = evaluate(&net, &set, BcMode::Hard).unwrap();
    assert!(rep.rows[0].err_t < 1.0, "Err {}", rep.rows[0].err_t);
}

#[test]
fn matrix_free_uniform_field_and_hard_bcs() {
    let s = Setup::new(11);
    let op = ThermalOperator::new(&s.mesh);
    let n = s.mesh.n_nodes();
    let d = left_right_dirichlet(&s.mesh, 1.0, 0.1).unwrap();
    let sample = ThermalSample::fixed(&op, vec![1.0], vec![1.0; n], vec![0.0; n], d.clone()).unwrap();
    let net = Mlp::new(&MlpConfig { input: 1, hidden: vec![1], output: n - 22, activation: Activation::Swish, seed: 0 }).unwrap();
    // hard BCs hold before any training
    let untrained = fol::losses::predict(&net, &sample, BcMode::Hard).unwrap();
    for (i, v) in d.iter() {
        assert_eq!(untrained[i], v);
    }
    let rep = solve_matrix_free(&sample, net, &LossWeights::default(), 2000, 1e-2).unwrap();
    let fem = fem_reference(&sample).unwrap();
    let err = relative_error(&rep.temperature, &fem).unwrap();
    assert!(err < 0.5, "Err {err}");
    for (i, v) in d.iter() {
        assert_eq!(rep.temperature[i], v);
    }
}

#[test]
fn evaluation_table_behaviour() {
    let s = Setup::new(7);
    let op = ThermalOperator::new(&s.mesh);
    let param = s.param();
    let train = samples(&op, &param, gen_random_fourier_samples(4, &ranges(), 5).unwrap());
    let test = samples(&op, &param, gen_unseen_fourier_samples(4, 10, 6).unwrap());
    let mut net = s.net(vec![12], 1);
    let cfg = TrainConfig { epochs: 1500, batch_size: 4, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    train_parametric(&mut net, &train, &LossWeights::default(), &cfg).unwrap();
    let on_train = evaluate(&net, &train[..1], BcMode::Hard).unwrap();
    let on_test = evaluate(&net, &test, BcMode::Hard).unwrap();
    assert!(on_train.rows[0].err_t < on_test.mean_err_t());
    assert!(evaluate(&net, &[], BcMode::Hard).unwrap().rows.is_empty());
}

#[test]
fn data_driven_bias_head_learns_constant() {
    let zero = Mat::zeros(3, 2);
    let mut net = Mlp::from_layers(&[(zero, vec![0.0; 3])], &[Activation::Linear]).unwrap();
    let inputs = vec![vec![0.0, 0.0]; 4];
    let labels = vec![vec![0.7, -0.2, 1.5]; 4];
    let cfg = TrainConfig { epochs: 3000, batch_size: 4, lr: 1e-2, seed: 0, bc_mode: BcMode::Hard };
    let h = train_data_driven(&mut net, &inputs, &labels, &cfg).unwrap();
    let out = net.forward(&[0.0, 0.0]).unwrap();
    for (o, y) in out.iter().zip(&labels[0]) {
        assert!((o - y).abs() < 1e-4);
    }
    assert!(h.last().unwrap().terms.total <= h.first().unwrap().terms.total);
    assert!(train_data_driven(&mut net, &inputs, &labels[..2], &cfg).is_err());
}

#[test]
fn data_driven_linear_net_matches_least_squares() {
    let inputs: Vec<Vec<f64>> = vec![vec![0.1, 0.9], vec![-0.5, 0.3], vec![0.7, -0.2], vec![0.0, 0.4], vec![-0.3, -0.8]];
    let labels: Vec<Vec<f64>> = vec![vec![1.0, 0.2], vec![0.3, -0.4], vec![0.9, 0.8], vec![0.1, 0.0], vec![-0.6, 0.5]];
    // closed-form fit of [x, 1] -> y per output
    let x = DMatrix::from_fn(5, 3, |i, j| if j < 2 { inputs[i][j] } else { 1.0 });
    let mut oracle_mse = 0.0;
    for o in 0..2 {
        let y = DVector::from_fn(5, |i, _| labels[i][o]);
        let beta = (x.transpose() * &x).lu().solve(&(x.transpose() * &y)).unwrap();
        let r = &x * beta - y;
        oracle_mse += r.norm_squared() / 5.0;
    }
    oracle_mse /= 2.0;

    let mut net = Mlp::from_layers(&[(Mat::zeros(2, 2), vec![0.0; 2])], &[Activation::Linear]).unwrap();
    let cfg = TrainConfig { epochs: 20_000, batch_size: 5, lr: 1e-3, seed: 0, bc_mode: BcMode::Hard };
    train_data_driven(&mut net, &inputs, &labels, &cfg).unwrap();
    let mse: f64 = inputs
        .iter()
        .zip(&labels)
        .map(|(x, y)| net.forward(x).unwrap().iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 2.0)
        .sum::<f64>()
        / 5.0;
    assert!((mse - oracle_mse).abs() <= 1e-6 * oracle_mse.max(1e-12), "{mse} vs {oracle_mse}");
}
