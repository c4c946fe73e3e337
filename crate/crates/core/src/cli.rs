//! The `fol` command line: argument parsing and one function per subcommand.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 numerical
//! failure, 4 a `--assert` check failed.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::config::{OptimMode, ParamKind, PhysicsKind, RunConfig};
use crate::elasticity::{clamped_top_displacement, recover_strain_stress, solve_elastic, ElasticBvp, ElasticOperator};
use crate::error::{FolError, Result};
use crate::io::{self, PointData};
use crate::losses::{BcMode, ElasticSample, LossWeights, ThermalSample};
use crate::mesh::Mesh;
use crate::nn::Mlp;
use crate::optim::{optimize, FluxDesignProblem, NandMode};
use crate::param::{
    gen_ellipse_samples, gen_random_bc_samples, gen_random_fourier_samples, EllipseConfig, FourierMap, Parameterization,
};
use crate::sensitivity::{
    adjoint_sensitivities, direct_sensitivity, fol_sensitivities, gradient_error, ResponseFunction, Sensitivity,
};
use crate::thermal::{left_right_dirichlet, recover_flux, relative_error, NonlinearConductivity, ThermalOperator};
use crate::training::{
    evaluate, fem_reference, solve_matrix_free, train_data_driven, train_parametric, EvaluationReport, TrainConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_ASSERT: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "fol", version, about = "Finite operator learning: FEM, FOL training, sensitivities and design optimization")]
pub struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (overrides the config and FOL_OUT_DIR).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// FEM solve of one design (thermal, nonlinear or elastic).
    Solve(DesignArgs),
    /// Write training and test corpora.
    Samplegen(ConfigArg),
    /// Physics-driven parametric training and evaluation on test designs.
    Train(TrainArgs),
    /// Single-design matrix-free solve by network training.
    SolveMf(DesignArgs),
    /// Compare adjoint, direct and FOL sensitivities at one design.
    Sensitivity(SensitivityArgs),
    /// Gradient-projection NAND run on the flux design problem.
    Optimize(OptimizeArgs),
    /// Physics-driven vs data-driven errors on unseen designs.
    Compare(CompareArgs),
    /// Resample a nodal field CSV onto a finer grid.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
pub struct ConfigArg {
    #[arg(short, long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct DesignArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Comma-separated design vector; defaults to a uniform field at `optimizer.start`.
    #[arg(long, allow_hyphen_values = true)]
    pub design: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Training corpus written by `samplegen`; generated from the config otherwise.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SensMode {
    Adjoint,
    Direct,
    Fol,
    All,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    pub design: Option<String>,
    #[arg(long, value_enum, default_value_t = SensMode::All)]
    pub mode: SensMode,
    /// Trained network; without it a network is trained on the design itself.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Exit with code 4 if adjoint and direct differ by more than 1e-10
    /// (relative) or the FOL error exceeds `--fol-tol` percent.
    #[arg(long)]
    pub assert: bool,
    #[arg(long, default_value_t = 10.0)]
    pub fol_tol: f64,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Overrides `optimizer.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<OptimModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimModeArg {
    Fem,
    Fol,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(short, long)]
    pub config: PathBuf,
    /// Exit with code 4 unless the physics-driven mean error is at most the data-driven one.
    #[arg(long)]
    pub assert: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Csv,
    Vtk,
    Both,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Field CSV with `node_id,x,y,...` columns on a square grid.
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 165)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value_t = ExportFormat::Both)]
    pub format: ExportFormat,
}

/// Failure of a subcommand, carrying its exit code.
#[derive(Debug)]
pub enum CliError {
    Fol(FolError),
    Assertion(String),
}

impl From<FolError> for CliError {
    fn from(e: FolError) -> Self {
        CliError::Fol(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Assertion(_) => EXIT_ASSERT,
            CliError::Fol(FolError::Config(_) | FolError::InvalidArgument(_) | FolError::Io(_)) => EXIT_CONFIG,
            CliError::Fol(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Fol(e) => write!(f, "{e}"),
            CliError::Assertion(m) => write!(f, "assertion failed: {m}"),
        }
    }
}

type CliResult = std::result::Result<(), CliError>;

/// Parses `argv` and runs; returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> CliResult {
    if let Some(n) = cli.threads {
        // a pool may already exist when called twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match &cli.command {
        Command::Solve(a) => cmd_solve(cli, a),
        Command::Samplegen(a) => cmd_samplegen(cli, a),
        Command::Train(a) => cmd_train(cli, a),
        Command::SolveMf(a) => cmd_solve_mf(cli, a),
        Command::Sensitivity(a) => cmd_sensitivity(cli, a),
        Command::Optimize(a) => cmd_optimize(cli, a),
        Command::Compare(a) => cmd_compare(cli, a),
        Command::Export(a) => cmd_export(cli, a),
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    threads: Option<usize>,
    network_seed: Option<u64>,
    sample_seed: Option<u64>,
    training_seed: Option<u64>,
    config: Option<String>,
    outputs: Vec<String>,
    summary: serde_json::Value,
}

struct Run {
    command: &'static str,
    out: PathBuf,
    threads: Option<usize>,
    cfg: Option<RunConfig>,
    outputs: Vec<String>,
}

impl Run {
    fn new(cli: &Cli, command: &'static str, cfg: Option<RunConfig>) -> Result<Self> {
        let out = match (&cli.out, &cfg) {
            (Some(o), _) => o.clone(),
            (None, Some(c)) => c.out_dir(),
            (None, None) => RunConfig::default_out_dir(),
        };
        std::fs::create_dir_all(&out)?;
        if let Some(c) = &cfg {
            println!("# fol {command}: resolved config");
            for line in c.to_toml().lines() {
                println!("#   {line}");
            }
        }
        Ok(Run {
            command,
            out,
            threads: cli.threads,
            cfg,
            outputs: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.out.join(name)
    }

    fn finish(self, summary: serde_json::Value) -> Result<()> {
        let m = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            threads: self.threads,
            network_seed: self.cfg.as_ref().map(|c| c.network.seed),
            sample_seed: self.cfg.as_ref().map(|c| c.parameterization.seed),
            training_seed: self.cfg.as_ref().map(|c| c.training.seed),
            config: self.cfg.as_ref().map(RunConfig::to_toml),
            outputs: self.outputs,
            summary,
        };
        io::write_json(&self.out.join("manifest.json"), &m)?;
        println!("wrote {}", self.out.display());
        Ok(())
    }
}

/// Mesh, operator and Dirichlet data shared by the thermal subcommands.
struct ThermalSetup {
    mesh: Mesh,
    cfg: RunConfig,
}

impl ThermalSetup {
    fn new(cfg: RunConfig) -> Result<Self> {
        Ok(ThermalSetup {
            mesh: Mesh::unit_square(cfg.mesh.n)?,
            cfg,
        })
    }

    fn dirichlet(&self) -> Result<crate::bc::Dirichlet> {
        left_right_dirichlet(&self.mesh, self.cfg.physics.t_left, self.cfg.physics.t_right)
    }

    fn fourier_map(&self) -> Result<FourierMap> {
        FourierMap::new(self.cfg.fourier_basis()?, self.cfg.projection()?, &self.mesh)
    }

    fn nonlinear(&self) -> Option<NonlinearConductivity> {
        let p = &self.cfg.physics;
        (p.kind == PhysicsKind::Nonlinear).then_some(NonlinearConductivity {
            m1: p.m1,
            m2: p.m2,
            beta: p.beta,
        })
    }

    fn source(&self) -> Vec<f64> {
        vec![self.cfg.physics.source; self.mesh.n_nodes()]
    }

    /// Design vectors: Fourier coefficients, or nodal conductivities for ellipses.
    fn designs(&self, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        match self.cfg.parameterization.kind {
            ParamKind::Fourier | ParamKind::Source => {
                let dim = self.cfg.fourier_basis()?.dim();
                gen_random_fourier_samples(n, &self.cfg.coefficient_ranges(dim), seed)
            }
            ParamKind::Ellipse => {
                let ecfg = EllipseConfig {
                    coarse_n: self.mesh.nx(),
                    fine_n: 4 * (self.mesh.nx() - 1) + 1,
                    ..EllipseConfig::default()
                };
                Ok(gen_ellipse_samples(n, &ecfg, seed)?.into_iter().map(|s| s.conductivity).collect())
            }
            ParamKind::Bc => Err(FolError::Config("boundary designs belong to elastic physics".into())),
        }
    }

    fn default_design(&self) -> Result<Vec<f64>> {
        match self.cfg.parameterization.kind {
            ParamKind::Fourier | ParamKind::Source => {
                let mut c = vec![0.0; self.cfg.fourier_basis()?.dim()];
                c[0] = self.cfg.optimizer.start;
                Ok(c)
            }
            ParamKind::Ellipse => Ok(vec![self.cfg.parameterization.vmax; self.mesh.n_nodes()]),
            ParamKind::Bc => Err(FolError::Config("boundary designs belong to elastic physics".into())),
        }
    }

    fn samples<'a>(
        &self,
        op: &'a ThermalOperator<'a>,
        map: Option<&FourierMap>,
        designs: &[Vec<f64>],
    ) -> Result<Vec<ThermalSample<'a>>> {
        let d = self.dirichlet()?;
        let nl = self.nonlinear();
        designs
            .iter()
            .map(|c| {
                let s = match (self.cfg.parameterization.kind, map) {
                    (ParamKind::Fourier, Some(m)) => ThermalSample::conductivity_design(
                        op,
                        &Parameterization::Fourier(m.clone()),
                        c.clone(),
                        self.source(),
                        d.clone(),
                    )?,
                    (ParamKind::Source, Some(m)) => {
                        ThermalSample::source_design(op, vec![1.0; self.mesh.n_nodes()], m, c.clone(), d.clone())?
                    }
                    (ParamKind::Ellipse, _) => {
                        if c.len() != self.mesh.n_nodes() {
                            return Err(FolError::dims("nodal design", self.mesh.n_nodes(), c.len()));
                        }
                        ThermalSample::fixed(op, c.clone(), c.clone(), self.source(), d.clone())?
                    }
                    _ => return Err(FolError::Config("unsupported parameterization for thermal physics".into())),
                };
                Ok(match nl {
                    Some(nl) => s.with_nonlinear(nl),
                    None => s,
                })
            })
            .collect()
    }

    fn map_if_fourier(&self) -> Result<Option<FourierMap>> {
        match self.cfg.parameterization.kind {
            ParamKind::Fourier | ParamKind::Source => Ok(Some(self.fourier_map()?)),
            _ => Ok(None),
        }
    }

    fn new_net(&self, input: usize) -> Result<Mlp> {
        let n_free = self.mesh.n_nodes() - self.dirichlet()?.len();
        let out = match self.cfg.loss.bc_mode {
            BcMode::Hard => n_free,
            BcMode::Soft => self.mesh.n_nodes(),
        };
        Mlp::new(&self.cfg.mlp_config(input, out))
    }
}

fn parse_design(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| FolError::InvalidArgument(format!("bad design entry {t:?}")))
        })
        .collect()
}

fn load_config(path: &Path) -> Result<RunConfig> {
    RunConfig::load(path)
}

fn write_thermal_fields(run: &mut Run, sample: &ThermalSample, t: &[f64], stem: &str) -> Result<()> {
    let bvp = sample.to_bvp()?;
    let q = recover_flux(&bvp, t)?;
    let mesh = bvp.mesh;
    io::thermal_table(mesh, t, &q, sample.conductivity())?.write(&run.path(&format!("{stem}.csv")))?;
    let data = vec![
        PointData::Scalar("T".into(), t.to_vec()),
        PointData::Vector("q".into(), q),
        PointData::Scalar("k".into(), sample.conductivity().to_vec()),
    ];
    io::write_vtk(&run.path(&format!("{stem}.vtk")), mesh, stem, &data)
}

fn cmd_solve(cli: &Cli, a: &DesignArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    if cfg.physics.kind == PhysicsKind::Elastic {
        return solve_elastic_cmd(cli, cfg);
    }
    let setup = ThermalSetup::new(cfg.clone())?;
    let mut run = Run::new(cli, "solve", Some(cfg))?;
    let op = ThermalOperator::new(&setup.mesh);
    let map = setup.map_if_fourier()?;
    let design = match &a.design {
        Some(s) => parse_design(s)?,
        None => setup.default_design()?,
    };
    let sample = setup.samples(&op, map.as_ref(), std::slice::from_ref(&design))?.remove(0);
    let t0 = Instant::now();
    let t = fem_reference(&sample)?;
    let elapsed = t0.elapsed().as_secs_f64();
    write_thermal_fields(&mut run, &sample, &t, "fields")?;
    run.finish(serde_json::json!({ "solve_seconds": elapsed, "design": design }))?;
    Ok(())
}

fn solve_elastic_cmd(cli: &Cli, cfg: RunConfig) -> CliResult {
    let mut run = Run::new(cli, "solve", Some(cfg.clone()))?;
    let mesh = Mesh::unit_square(cfg.mesh.n)?;
    let d = clamped_top_displacement(&mesh, cfg.physics.top_displacement)?;
    let bvp = ElasticBvp::new(&mesh, vec![cfg.physics.modulus; mesh.n_nodes()], cfg.physics.nu, d)?;
    let sol = solve_elastic(&bvp)?;
    let (_, stress) = recover_strain_stress(&bvp, &sol.displacement)?;
    io::elastic_table(&mesh, &sol.displacement, &stress)?.write(&run.path("fields.csv"))?;
    let disp: Vec<[f64; 2]> = sol.displacement.chunks(2).map(|u| [u[0], u[1]]).collect();
    let data = vec![
        PointData::Vector("u".into(), disp),
        PointData::Scalar("u_mag".into(), sol.magnitude()),
    ];
    io::write_vtk(&run.path("fields.vtk"), &mesh, "elastic", &data)?;
    run.finish(serde_json::json!({ "top_displacement": cfg.physics.top_displacement }))?;
    Ok(())
}

fn cmd_samplegen(cli: &Cli, a: &ConfigArg) -> CliResult {
    let cfg = load_config(&a.config)?;
    let mut run = Run::new(cli, "samplegen", Some(cfg.clone()))?;
    let p = &cfg.parameterization;
    let (train, test) = if cfg.physics.kind == PhysicsKind::Elastic {
        let r = [(p.coeff_range[0], p.coeff_range[1]); 2];
        (
            gen_random_bc_samples(p.samples, &r, p.seed)?,
            gen_random_bc_samples(p.test_samples, &r, p.seed + 1)?,
        )
    } else {
        let setup = ThermalSetup::new(cfg.clone())?;
        (setup.designs(p.samples, p.seed)?, setup.designs(p.test_samples, p.seed + 1)?)
    };
    io::corpus_table(&train)?.write(&run.path("corpus_train.csv"))?;
    io::corpus_table(&test)?.write(&run.path("corpus_test.csv"))?;
    run.finish(serde_json::json!({
        "train_samples": train.len(),
        "test_samples": test.len(),
        "c0_range": p.c0_range,
        "coeff_range": p.coeff_range,
        "grid": cfg.mesh.n,
    }))?;
    Ok(())
}

fn report_summary(rep: &EvaluationReport) -> serde_json::Value {
    serde_json::json!({
        "mean_err_T": rep.mean_err_t(),
        "max_err_T": rep.max_err_t(),
        "mean_err_qx": rep.mean_err_qx(),
        "mean_err_qy": rep.mean_err_qy(),
    })
}

fn cmd_train(cli: &Cli, a: &TrainArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    if cfg.physics.kind == PhysicsKind::Elastic {
        return train_elastic(cli, cfg, a);
    }
    let setup = ThermalSetup::new(cfg.clone())?;
    let mut run = Run::new(cli, "train", Some(cfg.clone()))?;
    let op = ThermalOperator::new(&setup.mesh);
    let map = setup.map_if_fourier()?;
    let p = &cfg.parameterization;
    let train_designs = match &a.corpus {
        Some(path) => io::read_corpus(path)?,
        None => setup.designs(p.samples, p.seed)?,
    };
    let train = setup.samples(&op, map.as_ref(), &train_designs)?;
    let test = setup.samples(&op, map.as_ref(), &setup.designs(p.test_samples, p.seed + 1)?)?;
    let mut net = setup.new_net(train_designs.first().map_or(0, Vec::len))?;
    let t0 = Instant::now();
    let history = train_parametric(&mut net, &train, &cfg.loss_weights(), &cfg.train_config())?;
    let train_seconds = t0.elapsed().as_secs_f64();
    io::history_table(&history).write(&run.path("history.csv"))?;
    net.save_json(&run.path("model.json"))?;
    let rep = evaluate(&net, &test, cfg.loss.bc_mode)?;
    io::evaluation_table(&rep).write(&run.path("evaluation.csv"))?;
    println!(
        "trained {} epochs in {:.1}s; test mean Err {:.3}%",
        cfg.training.epochs,
        train_seconds,
        rep.mean_err_t()
    );
    let mut summary = report_summary(&rep);
    summary["train_seconds"] = train_seconds.into();
    summary["final_loss"] = history.last().map_or(f64::NAN, |r| r.terms.total).into();
    run.finish(summary)?;
    Ok(())
}

fn train_elastic(cli: &Cli, cfg: RunConfig, a: &TrainArgs) -> CliResult {
    let mut run = Run::new(cli, "train", Some(cfg.clone()))?;
    let mesh = Mesh::unit_square(cfg.mesh.n)?;
    let op = ElasticOperator::new(&mesh, cfg.physics.nu)?;
    let p = &cfg.parameterization;
    let r = [(p.coeff_range[0], p.coeff_range[1]); 2];
    let designs = match &a.corpus {
        Some(path) => io::read_corpus(path)?,
        None => gen_random_bc_samples(p.samples, &r, p.seed)?,
    };
    let modulus = vec![cfg.physics.modulus; mesh.n_nodes()];
    let mk = |ds: &[Vec<f64>]| -> Result<Vec<ElasticSample>> {
        ds.iter()
            .map(|c| {
                if c.len() != 2 {
                    return Err(FolError::dims("boundary design", 2, c.len()));
                }
                ElasticSample::top_displacement(&op, modulus.clone(), [c[0], c[1]])
            })
            .collect()
    };
    let train = mk(&designs)?;
    let test = mk(&gen_random_bc_samples(p.test_samples, &r, p.seed + 1)?)?;
    let n_dofs = 2 * mesh.n_nodes();
    let out = match cfg.loss.bc_mode {
        BcMode::Hard => n_dofs - train.first().map_or(0, |s| crate::losses::Physics::dirichlet(s).len()),
        BcMode::Soft => n_dofs,
    };
    let mut net = Mlp::new(&cfg.mlp_config(2, out))?;
    let history = train_parametric(&mut net, &train, &cfg.loss_weights(), &cfg.train_config())?;
    io::history_table(&history).write(&run.path("history.csv"))?;
    net.save_json(&run.path("model.json"))?;
    let mut errs = io::Table::new(&["sample_id", "err_U"]);
    for (i, s) in test.iter().enumerate() {
        let reference = solve_elastic(&s.to_bvp()?)?.displacement;
        let pred = crate::losses::predict(&net, s, cfg.loss.bc_mode)?;
        errs.push(vec![i as f64, relative_error(&pred, &reference)?])?;
    }
    let mean = errs.column("err_U").map_or(f64::NAN, |v| v.iter().sum::<f64>() / v.len().max(1) as f64);
    errs.write(&run.path("evaluation.csv"))?;
    println!("test mean displacement Err {mean:.3}%");
    run.finish(serde_json::json!({ "mean_err_U": mean }))?;
    Ok(())
}

fn cmd_solve_mf(cli: &Cli, a: &DesignArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    if cfg.physics.kind == PhysicsKind::Elastic {
        return Err(FolError::Config("solve-mf supports thermal physics".into()).into());
    }
    let setup = ThermalSetup::new(cfg.clone())?;
    let mut run = Run::new(cli, "solve-mf", Some(cfg.clone()))?;
    let op = ThermalOperator::new(&setup.mesh);
    let map = setup.map_if_fourier()?;
    let design = match &a.design {
        Some(s) => parse_design(s)?,
        None => setup.default_design()?,
    };
    let sample = setup.samples(&op, map.as_ref(), std::slice::from_ref(&design))?.remove(0);
    let net = setup.new_net(design.len())?;
    let weights = LossWeights {
        w_se: 0.0,
        ..cfg.loss_weights()
    };
    let t0 = Instant::now();
    let rep = solve_matrix_free(&sample, net, &weights, cfg.training.epochs, cfg.training.lr)?;
    let seconds = t0.elapsed().as_secs_f64();
    let reference = fem_reference(&sample)?;
    let err = relative_error(&rep.temperature, &reference)?;
    io::history_table(&rep.history).write(&run.path("history.csv"))?;
    write_thermal_fields(&mut run, &sample, &rep.temperature, "fields")?;
    println!("matrix-free Err vs FEM {err:.4}% after {} epochs ({seconds:.2}s)", cfg.training.epochs);
    run.finish(serde_json::json!({ "err_T": err, "seconds": seconds }))?;
    Ok(())
}

fn cmd_sensitivity(cli: &Cli, a: &SensitivityArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    if cfg.parameterization.kind != ParamKind::Fourier || cfg.physics.kind != PhysicsKind::Thermal {
        return Err(FolError::Config("sensitivity needs linear thermal physics with a Fourier conductivity".into()).into());
    }
    let setup = ThermalSetup::new(cfg.clone())?;
    let mut run = Run::new(cli, "sensitivity", Some(cfg.clone()))?;
    let op = ThermalOperator::new(&setup.mesh);
    let map = setup.fourier_map()?;
    let design = match &a.design {
        Some(s) => parse_design(s)?,
        None => setup.default_design()?,
    };
    let sample = setup.samples(&op, Some(&map), std::slice::from_ref(&design))?.remove(0);
    let bvp = sample.to_bvp()?;
    let t = fem_reference(&sample)?;
    let tangent = sample.conductivity_tangent().expect("conductivity design");
    let rf = ResponseFunction::flux_x_sq_constraint();
    let adjoint = adjoint_sensitivities(&[rf], &bvp, &t, tangent)?.remove(0);
    let mut summary = serde_json::json!({ "h": adjoint.value });
    let mut failures = Vec::new();

    let dk = adjoint.dj_dk.clone().unwrap_or_default();
    io::write_vtk(
        &run.path("sensitivity_dk.vtk"),
        &setup.mesh,
        "dh/dk",
        &[PointData::Scalar("dh_dk".into(), dk)],
    )?;
    if matches!(a.mode, SensMode::Adjoint) {
        io::sensitivity_table(&adjoint.dj_dc, &adjoint.dj_dc)?.write(&run.path("sensitivity.csv"))?;
    }
    if matches!(a.mode, SensMode::Direct | SensMode::All) {
        let direct = direct_sensitivity(&rf, &bvp, &t, tangent)?;
        let err = gradient_error(&direct.dj_dc, &adjoint.dj_dc) / 100.0;
        println!("adjoint vs direct relative difference {err:.3e}");
        io::sensitivity_table(&adjoint.dj_dc, &direct.dj_dc)?.write(&run.path("sensitivity_direct.csv"))?;
        summary["adjoint_vs_direct"] = err.into();
        if err > 1e-10 {
            failures.push(format!("adjoint vs direct {err:.3e} > 1e-10"));
        }
    }
    if matches!(a.mode, SensMode::Fol | SensMode::All) {
        let fol: Sensitivity = match &a.model {
            Some(path) => {
                let net = Mlp::load_json(path)?;
                fol_sensitivities(&[rf], &net, &sample, cfg.loss.bc_mode)?.remove(0)
            }
            None => {
                let mut net = setup.new_net(design.len())?;
                let tc = TrainConfig {
                    batch_size: 1,
                    ..cfg.train_config()
                };
                train_parametric(&mut net, std::slice::from_ref(&sample), &cfg.loss_weights(), &tc)?;
                fol_sensitivities(&[rf], &net, &sample, cfg.loss.bc_mode)?.remove(0)
            }
        };
        let err = gradient_error(&fol.dj_dc, &adjoint.dj_dc);
        println!("FOL vs adjoint gradient error {err:.3}%");
        io::sensitivity_table(&adjoint.dj_dc, &fol.dj_dc)?.write(&run.path("sensitivity.csv"))?;
        summary["fol_gradient_error_pct"] = err.into();
        if !(err <= a.fol_tol) {
            failures.push(format!("FOL gradient error {err:.3}% > {}%", a.fol_tol));
        }
    }
    run.finish(summary)?;
    if a.assert && !failures.is_empty() {
        return Err(CliError::Assertion(failures.join("; ")));
    }
    Ok(())
}

fn cmd_optimize(cli: &Cli, a: &OptimizeArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    if cfg.parameterization.kind != ParamKind::Fourier || cfg.physics.kind != PhysicsKind::Thermal {
        return Err(FolError::Config("optimize needs linear thermal physics with a Fourier conductivity".into()).into());
    }
    let mode = match a.mode {
        Some(OptimModeArg::Fem) => OptimMode::Fem,
        Some(OptimModeArg::Fol) => OptimMode::Fol,
        None => cfg.optimizer.mode,
    };
    let setup = ThermalSetup::new(cfg.clone())?;
    let mut run = Run::new(cli, "optimize", Some(cfg.clone()))?;
    let map = setup.fourier_map()?;
    let c0 = setup.default_design()?;
    let nand = match mode {
        OptimMode::Fem => NandMode::Fem,
        OptimMode::Fol => NandMode::Fol {
            net: Box::new(setup.new_net(c0.len())?),
            weights: cfg.loss_weights(),
            train: TrainConfig {
                epochs: cfg.optimizer.epochs_per_iter,
                batch_size: 1,
                ..cfg.train_config()
            },
        },
    };
    let mut problem = FluxDesignProblem::new(&setup.mesh, map.clone(), setup.dirichlet()?, nand);
    let t0 = Instant::now();
    let res = optimize(&mut problem, &c0, &cfg.optim_options())?;
    let seconds = t0.elapsed().as_secs_f64();
    let name = problem.mode.name();
    io::write_optimization_history(&run.path("optimization.csv"), &res.history, name)?;
    for r in &res.history {
        let k = map.field(&r.design)?;
        let file = format!("design_{:04}.vtk", r.iter);
        io::write_vtk(&run.path(&file), &setup.mesh, "design", &[PointData::Scalar("k".into(), k)])?;
    }
    let (j0, h0) = problem.fem_responses(&c0)?;
    let (j, h) = problem.fem_responses(&res.c)?;
    println!(
        "{name}: J {j0:.5} -> {j:.5}, h {h0:.3e} -> {h:.3e}, {} iterations, {seconds:.1}s",
        res.history.len()
    );
    run.finish(serde_json::json!({
        "mode": name,
        "J_start": j0, "h_start": h0, "J_final": j, "h_final": h,
        "iterations": res.history.len(), "converged": res.converged,
        "seconds": seconds, "design": res.c,
    }))?;
    Ok(())
}

fn cmd_compare(cli: &Cli, a: &CompareArgs) -> CliResult {
    let cfg = load_config(&a.config)?;
    if cfg.physics.kind == PhysicsKind::Elastic {
        return Err(FolError::Config("compare supports thermal physics".into()).into());
    }
    let setup = ThermalSetup::new(cfg.clone())?;
    let mut run = Run::new(cli, "compare", Some(cfg.clone()))?;
    let op = ThermalOperator::new(&setup.mesh);
    let map = setup.map_if_fourier()?;
    let p = &cfg.parameterization;
    let train = setup.samples(&op, map.as_ref(), &setup.designs(p.samples, p.seed)?)?;
    let test = setup.samples(&op, map.as_ref(), &setup.designs(p.test_samples, p.seed + 1)?)?;
    let input = crate::losses::Physics::input(&train[0]).len();
    let weights = LossWeights {
        w_se: 0.0,
        ..cfg.loss_weights()
    };
    let tc = TrainConfig {
        bc_mode: BcMode::Hard,
        ..cfg.train_config()
    };
    let hard_cfg = {
        let mut c = cfg.clone();
        c.loss.bc_mode = BcMode::Hard;
        c
    };
    let hard = ThermalSetup::new(hard_cfg)?;
    let mut physics = hard.new_net(input)?;
    let t0 = Instant::now();
    train_parametric(&mut physics, &train, &weights, &tc)?;
    let physics_seconds = t0.elapsed().as_secs_f64();
    let inputs: Vec<Vec<f64>> = train.iter().map(|s| crate::losses::Physics::input(s).to_vec()).collect();
    let labels = train
        .iter()
        .map(|s| Ok(crate::losses::Physics::partition(s).gather_free(&fem_reference(s)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut data = hard.new_net(input)?;
    let t0 = Instant::now();
    train_data_driven(&mut data, &inputs, &labels, &tc)?;
    let data_seconds = t0.elapsed().as_secs_f64();
    let ep = evaluate(&physics, &test, BcMode::Hard)?;
    let ed = evaluate(&data, &test, BcMode::Hard)?;
    let mut tab = io::Table::new(&["sample_id", "err_T_physics", "err_T_data"]);
    for (rp, rd) in ep.rows.iter().zip(&ed.rows) {
        tab.push(vec![rp.sample_id as f64, rp.err_t, rd.err_t])?;
    }
    tab.write(&run.path("compare.csv"))?;
    io::evaluation_table(&ep).write(&run.path("evaluation_physics.csv"))?;
    io::evaluation_table(&ed).write(&run.path("evaluation_data.csv"))?;
    println!("unseen-test mean Err: physics-driven {:.3}%, data-driven {:.3}%", ep.mean_err_t(), ed.mean_err_t());
    run.finish(serde_json::json!({
        "physics": report_summary(&ep), "data": report_summary(&ed),
        "physics_seconds": physics_seconds, "data_seconds": data_seconds,
    }))?;
    if a.assert && !(ep.mean_err_t() <= ed.mean_err_t()) {
        return Err(CliError::Assertion(format!(
            "physics-driven {:.3}% > data-driven {:.3}%",
            ep.mean_err_t(),
            ed.mean_err_t()
        )));
    }
    Ok(())
}

fn cmd_export(cli: &Cli, a: &ExportArgs) -> CliResult {
    let mut run = Run::new(cli, "export", None)?;
    let tab = io::read_table(&a.input)?;
    let (xs, ys) = match (tab.column("x"), tab.column("y")) {
        (Some(x), Some(y)) => (x, y),
        _ => return Err(FolError::InvalidArgument("field CSV needs x and y columns".into()).into()),
    };
    let n = (tab.rows.len() as f64).sqrt().round() as usize;
    if n * n != tab.rows.len() || n < 2 {
        return Err(FolError::InvalidArgument(format!("{} rows is not a square grid", tab.rows.len())).into());
    }
    let lx = xs.iter().cloned().fold(f64::MIN, f64::max) - xs.iter().cloned().fold(f64::MAX, f64::min);
    let ly = ys.iter().cloned().fold(f64::MIN, f64::max) - ys.iter().cloned().fold(f64::MAX, f64::min);
    let mesh = Mesh::build_grid(n, n, lx, ly)?;
    if a.resolution < 2 {
        return Err(FolError::InvalidArgument("resolution must be at least 2".into()).into());
    }
    let fields: Vec<&String> = tab.headers.iter().filter(|h| !matches!(h.as_str(), "node_id" | "x" | "y")).collect();
    let mut fine_mesh = None;
    let mut columns = Vec::new();
    for name in &fields {
        let v = tab.column(name).expect("header exists");
        let (fm, fv) = mesh.upsample(&v, a.resolution, a.resolution)?;
        fine_mesh.get_or_insert(fm);
        columns.push(((*name).clone(), fv));
    }
    let fine = match fine_mesh {
        Some(m) => m,
        None => Mesh::build_grid(a.resolution, a.resolution, lx, ly)?,
    };
    if matches!(a.format, ExportFormat::Csv | ExportFormat::Both) {
        let mut headers = vec!["node_id", "x", "y"];
        headers.extend(columns.iter().map(|(n, _)| n.as_str()));
        let mut out = io::Table::new(&headers);
        for (i, p) in fine.coords().iter().enumerate() {
            let mut row = vec![i as f64, p[0], p[1]];
            row.extend(columns.iter().map(|(_, v)| v[i]));
            out.push(row)?;
        }
        out.write(&run.path("export.csv"))?;
    }
    if matches!(a.format, ExportFormat::Vtk | ExportFormat::Both) {
        let data: Vec<PointData> = columns.iter().map(|(n, v)| PointData::Scalar(n.clone(), v.clone())).collect();
        io::write_vtk(&run.path("export.vtk"), &fine, "export", &data)?;
    }
    run.finish(serde_json::json!({ "source_grid": n, "resolution": a.resolution }))?;
    Ok(())
}
