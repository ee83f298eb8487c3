//! `flda` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 numerical failure.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flda::classifier::{
    center_rows, choose_threshold, column_means, reference_lambda, DiscriminantModel, Label,
    LabeledFunctionalData, ThresholdRule,
};
use flda::eval::{auc, fmt17, prepare_basis, run_experiment_with, sensitivity_specificity, ExperimentConfig, ResultTable};
use flda::fem::FemOperators;
use flda::io::{self as fio, DatasetSidecar};
use flda::lsqr::LsqrConfig;
use flda::mesh::{icosphere, load_mesh, MeshFormat, TriangleMesh};
use flda::method::{log_grid, GridConfig, Hyperparameters, MethodRegistry};
use flda::report::auc_boxplot_svg;
use flda::rkhs::{flow_deform, register_small_deformation, KernelSpec, VectorFieldRepr};
use flda::simgen::{generate_dataset, generate_geometry, geometry_control_points, stream_rng, SigmaSchedule, SimConfig};
use flda::spectral::{laplace_beltrami_eigs, EigenBasis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use manifest::ManifestBuilder;

#[derive(Parser)]
#[command(name = "flda", version, about = "Functional LDA on triangulated surfaces")]
struct Cli {
    /// Where to write the run manifest [default: <primary output>.manifest.json]
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a subdivided icosahedron as OFF
    Icosphere(IcosphereArgs),
    /// Print vertex, face and edge counts, Euler characteristic and area
    MeshInfo(MeshInfoArgs),
    /// Smallest Laplace-Beltrami eigenpairs of a mesh
    Eig(EigArgs),
    /// Simulate a two-group dataset in the eigenbasis
    Simulate(SimulateArgs),
    /// Fit a discriminant model
    Fit(FitArgs),
    /// Score samples with a fitted model
    Predict(PredictArgs),
    /// Choose a decision threshold from labelled scores
    Threshold(ThresholdArgs),
    /// Run the replicated FLDA vs FPCA+LDA comparison
    Experiment(ExperimentArgs),
    /// Flow a template along the mean field plus c1 times the geometric direction
    Deform(DeformArgs),
    /// Kernel registration of a template onto a target with the same connectivity
    Register(RegisterArgs),
    /// SVG box plot of a result table
    Plot(PlotArgs),
}

#[derive(Args)]
struct MeshArgs {
    /// Mesh file (.off or .obj) [default: icosphere of --level and --radius]
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Icosphere subdivision level when no mesh is given
    #[arg(long, default_value_t = 3)]
    level: u32,
    /// Icosphere radius when no mesh is given
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
}

#[derive(Args)]
struct IcosphereArgs {
    #[arg(long, default_value_t = 3)]
    level: u32,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct MeshInfoArgs {
    mesh: PathBuf,
    /// Also write the report as JSON
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EigArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    /// Number of eigenpairs, constant mode included
    #[arg(short, long, default_value_t = 41)]
    k: usize,
    /// Mass term of the penalty [default: 1e-3 tr(S)/tr(M)]
    #[arg(long)]
    epsilon: Option<f64>,
    /// JSON bundle of eigenvalues and eigenvectors
    #[arg(short, long)]
    output: PathBuf,
    /// Also write "index,eigenvalue" CSV here
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    /// Eigenbasis JSON from `eig` [default: computed from the mesh]
    #[arg(long)]
    basis: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    basis_size: usize,
    /// 1-based index of the group difference among the basis functions
    #[arg(long, default_value_t = 10)]
    mean_index: usize,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    /// Samples per group
    #[arg(short, long, default_value_t = 128)]
    n: usize,
    /// Score standard deviations sigma_j = j^(-exponent)
    #[arg(long, default_value_t = 1.0)]
    sigma_exponent: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Control points per geometric field; 0 writes no geometry
    #[arg(long, default_value_t = 0)]
    control_points: usize,
    /// Standard deviation of random momenta
    #[arg(long, default_value_t = 0.05)]
    momentum_scale: f64,
    /// RKHS norm of the shift added to group 2 fields
    #[arg(long, default_value_t = 0.0)]
    shift_norm: f64,
    /// Gaussian kernel width [default: 0.2 x bounding-box diagonal]
    #[arg(long)]
    kernel_sigma: Option<f64>,
    /// Dataset CSV; the sidecar JSON and geometry are written next to it
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Youden,
    Specificity,
}

#[derive(Args)]
struct FitArgs {
    /// Dataset CSV
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    mesh: MeshArgs,
    /// JSON array of per-sample fields [default: from the dataset sidecar]
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Registered method name (flda, fpca-lda)
    #[arg(long, default_value = "flda")]
    method: String,
    /// Absolute roughness weight
    #[arg(long, conflicts_with = "lambda2_factor")]
    lambda2: Option<f64>,
    /// Roughness weight relative to the data-scaled reference
    #[arg(long)]
    lambda2_factor: Option<f64>,
    /// Geometry weight; giving it fits the bivariate model
    #[arg(long)]
    lambda1: Option<f64>,
    /// Number of principal components for fpca-lda
    #[arg(short, long)]
    k: Option<usize>,
    /// Mass term of the penalty [default: 1e-3 tr(S)/tr(M)]
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum, default_value_t = RuleArg::Youden)]
    threshold: RuleArg,
    /// Target specificity for --threshold specificity
    #[arg(long, default_value_t = 0.9)]
    specificity: f64,
    /// LSQR tolerance
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// LSQR iteration cap [default: 10 x unknowns]
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long)]
    geometry: Option<PathBuf>,
    /// Scores CSV "index,label,score,predicted"
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct ThresholdArgs {
    /// CSV with "label" and "score" columns, e.g. from `predict`
    #[arg(long)]
    scores: PathBuf,
    #[arg(long, value_enum, default_value_t = RuleArg::Youden)]
    rule: RuleArg,
    #[arg(long, default_value_t = 0.9)]
    specificity: f64,
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Full configuration as JSON (an experiment config or a manifest);
    /// overrides the design flags below
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.2, 0.4, 0.6])]
    alphas: Vec<f64>,
    /// Training samples per group
    #[arg(long, value_delimiter = ',', default_values_t = [128usize, 256])]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    replicates: usize,
    #[arg(long, default_value_t = 2000)]
    test_size: usize,
    #[arg(long, default_value_t = 3)]
    level: u32,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long, default_value_t = 40)]
    basis_size: usize,
    #[arg(long, default_value_t = 10)]
    mean_index: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma_exponent: f64,
    /// Smallest lambda2 factor of the log grid
    #[arg(long, default_value_t = 1e-4)]
    lambda2_min: f64,
    #[arg(long, default_value_t = 1e2)]
    lambda2_max: f64,
    #[arg(long, default_value_t = 7)]
    lambda2_points: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20, 40])]
    k: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = ["flda".to_string(), "fpca-lda".to_string()])]
    methods: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads
    #[arg(long, default_value_t = default_jobs())]
    jobs: usize,
    /// Record wall times in the table instead of 0
    #[arg(long)]
    timing: bool,
    /// Also write boxplot.svg
    #[arg(long)]
    plot: bool,
    /// Directory for results.csv, summary.json and manifest.json
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DeformArgs {
    #[arg(long)]
    model: PathBuf,
    /// Template mesh
    #[arg(long)]
    mesh: PathBuf,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    c1: f64,
    /// Euler steps of the flow
    #[arg(long, default_value_t = 20)]
    steps: usize,
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long)]
    template: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Ridge weight of the kernel fit (no default)
    #[arg(long)]
    lambda: f64,
    /// Gaussian kernel width [default: 0.2 x template bounding-box diagonal]
    #[arg(long)]
    kernel_sigma: Option<f64>,
    /// Control points drawn by farthest-point sampling
    #[arg(long, default_value_t = 500)]
    subsample: usize,
    /// Field JSON
    #[arg(short, long)]
    output: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

enum Failure {
    Usage(String),
    Core(flda::Error),
}

impl From<flda::Error> for Failure {
    fn from(e: flda::Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(flda::Error::Io(e))
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(flda::Error::Json(e))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

/// A fitted model on disk.
#[derive(Serialize, Deserialize)]
struct ModelFile {
    method: String,
    dim: usize,
    hyperparameters: Hyperparameters,
    /// Scores of the training samples, in file order.
    training_scores: Vec<f64>,
    model: serde_json::Value,
}

fn read_mesh(path: &Path) -> CliResult<TriangleMesh> {
    let format = MeshFormat::from_path(path)
        .ok_or_else(|| Failure::Usage(format!("unknown mesh extension: {}", path.display())))?;
    Ok(load_mesh(path, format)?)
}

fn resolve_mesh(args: &MeshArgs, manifest: &mut ManifestBuilder) -> CliResult<TriangleMesh> {
    match &args.mesh {
        Some(p) => {
            manifest.input(p);
            read_mesh(p)
        }
        None => Ok(icosphere(args.level, args.radius)?),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text)?;
    Ok(())
}

fn manifest_path(cli: &Option<PathBuf>, primary: &Path) -> PathBuf {
    cli.clone().unwrap_or_else(|| manifest::default_path(primary))
}

fn rule(arg: RuleArg, q: f64) -> ThresholdRule {
    match arg {
        RuleArg::Youden => ThresholdRule::Youden,
        RuleArg::Specificity => ThresholdRule::FixedSpecificity { q },
    }
}

fn mesh_report(mesh: &TriangleMesh) -> serde_json::Value {
    serde_json::json!({
        "vertices": mesh.num_vertices(),
        "faces": mesh.num_faces(),
        "edges": mesh.num_edges(),
        "euler_characteristic": mesh.euler_characteristic(),
        "closed": mesh.is_closed(),
        "surface_area": mesh.surface_area(),
        "mean_edge_length": mesh.mean_edge_length(),
        "bbox_diagonal": mesh.bbox_diagonal(),
    })
}

fn cmd_icosphere(a: &IcosphereArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("icosphere");
    m.config(&serde_json::json!({"level": a.level, "radius": a.radius}));
    let mesh = icosphere(a.level, a.radius)?;
    mesh.save_off(&a.output)?;
    m.output(&a.output);
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn cmd_mesh_info(a: &MeshInfoArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mesh = read_mesh(&a.mesh)?;
    let text = serde_json::to_string_pretty(&mesh_report(&mesh))? + "\n";
    print!("{text}");
    if let Some(out) = &a.output {
        write_text(out, &text)?;
        let mut m = ManifestBuilder::new("mesh-info");
        m.config(&serde_json::json!({})).input(&a.mesh).output(out);
        m.write(&manifest_path(mpath, out))?;
    }
    Ok(())
}

fn cmd_eig(a: &EigArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("eig");
    let mesh = resolve_mesh(&a.mesh, &mut m)?;
    let ops = FemOperators::assemble(&mesh, a.epsilon)?;
    let basis = laplace_beltrami_eigs(&ops, a.k)?;
    fio::write_json(&a.output, &basis)?;
    m.output(&a.output);
    if let Some(csv) = &a.csv {
        write_text(csv, &basis.to_csv())?;
        m.output(csv);
    }
    m.config(&serde_json::json!({
        "mesh": a.mesh.mesh, "level": a.mesh.level, "radius": a.mesh.radius,
        "k": a.k, "epsilon": ops.epsilon,
    }));
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

/// Random field at `control` with RKHS norm `norm`.
fn shift_field(control: Vec<[f64; 3]>, spec: KernelSpec, norm: f64, seed: u64) -> CliResult<VectorFieldRepr> {
    let mut rng = stream_rng(seed, &[0x73_6869_6674]);
    let momenta: Vec<[f64; 3]> = (0..control.len())
        .map(|_| {
            let mut a = [0.0; 3];
            for x in a.iter_mut() {
                *x = rng.sample::<f64, _>(StandardNormal);
            }
            a
        })
        .collect();
    let f = VectorFieldRepr::new(spec, control, momenta)?;
    let len = f.norm_sq().sqrt();
    Ok(if len > 0.0 { f.scaled(norm / len) } else { f })
}

fn cmd_simulate(a: &SimulateArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("simulate");
    let mesh = resolve_mesh(&a.mesh, &mut m)?;
    let config = SimConfig {
        icosphere_level: a.mesh.level,
        radius: a.mesh.radius,
        basis_size: a.basis_size,
        mean_index: a.mean_index,
        alpha: a.alpha,
        n_per_group: a.n,
        sigma: SigmaSchedule::PowerLaw {
            exponent: a.sigma_exponent,
        },
        seed: a.seed,
    };
    config.validate()?;
    let basis: EigenBasis = match &a.basis {
        Some(p) => {
            m.input(p);
            fio::read_json(p)?
        }
        None => {
            let ops = FemOperators::assemble(&mesh, None)?;
            laplace_beltrami_eigs(&ops, config.required_eigenpairs())?
        }
    };
    if basis.dim() != mesh.num_vertices() {
        return Err(flda::Error::DimensionMismatch {
            context: "basis length vs mesh vertices",
            expected: mesh.num_vertices(),
            found: basis.dim(),
        }
        .into());
    }
    let data = generate_dataset(&config, &basis)?;
    write_text(&a.output, &fio::dataset_to_csv(&data))?;
    m.output(&a.output);

    let mut geometry_name = None;
    if a.control_points > 0 {
        let spec = match a.kernel_sigma {
            Some(s) => KernelSpec::gaussian(s)?,
            None => KernelSpec::default_for(&mesh)?,
        };
        let shift = if a.shift_norm > 0.0 {
            let control = geometry_control_points(&mesh, a.control_points);
            Some(shift_field(control, spec, a.shift_norm, a.seed)?)
        } else {
            None
        };
        let g = generate_geometry(
            &data.labels,
            &mesh,
            spec,
            a.control_points,
            a.momentum_scale,
            shift.as_ref(),
            a.seed,
        )?;
        let gpath = a.output.with_extension("geometry.json");
        fio::write_json(&gpath, g.fields())?;
        m.output(&gpath);
        geometry_name = gpath.file_name().map(|s| s.to_string_lossy().into_owned());
    }
    let side = fio::sidecar_path(&a.output);
    fio::write_json(
        &side,
        &DatasetSidecar {
            samples: data.len(),
            dim: data.dim(),
            mesh: a.mesh.mesh.as_ref().map(|p| p.display().to_string()),
            config: Some(config.clone()),
            geometry: geometry_name,
        },
    )?;
    m.output(&side);
    m.config(&serde_json::json!({
        "sim": config, "mesh": a.mesh.mesh, "basis": a.basis,
        "control_points": a.control_points, "momentum_scale": a.momentum_scale,
        "shift_norm": a.shift_norm, "kernel_sigma": a.kernel_sigma,
    }))
    .seed(a.seed);
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn load_data(data: &Path, geometry: &Option<PathBuf>, m: &mut ManifestBuilder) -> CliResult<LabeledFunctionalData> {
    m.input(data);
    if let Some(g) = geometry {
        m.input(g);
    }
    Ok(fio::load_dataset(data, geometry.as_deref())?)
}

fn cmd_fit(a: &FitArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let registry = MethodRegistry::default();
    let method = registry.get(&a.method)?;
    let mut m = ManifestBuilder::new("fit");
    let mesh = resolve_mesh(&a.mesh, &mut m)?;
    let ops = FemOperators::assemble(&mesh, a.epsilon)?;
    let mut data = load_data(&a.data, &a.geometry, &mut m)?;
    if data.dim() != ops.dim() {
        return Err(flda::Error::DimensionMismatch {
            context: "dataset coefficients vs mesh vertices",
            expected: ops.dim(),
            found: data.dim(),
        }
        .into());
    }
    if a.lambda1.is_none() {
        data = data.without_geometry();
    } else if data.geometry.is_none() {
        return Err(flda::Error::MissingGeometry("--lambda1 needs per-sample geometry".into()).into());
    }
    let lambda2 = match (a.lambda2, a.lambda2_factor) {
        (Some(l), _) => Some(l),
        (None, Some(f)) => {
            let centered = center_rows(&data.coeffs, &column_means(&data.coeffs));
            Some(f * reference_lambda(&centered, &ops)?)
        }
        (None, None) => None,
    };
    let hp = Hyperparameters {
        lambda1: a.lambda1,
        lambda2,
        k: a.k,
    };
    let grids = GridConfig {
        solver: LsqrConfig {
            tol: a.tol,
            max_iter: a.max_iter,
        },
        threshold: rule(a.threshold, a.specificity),
        ..GridConfig::default()
    };
    let fitted = method.fit(&data, &ops, &hp, &grids, None)?;
    let training_scores = fitted.score(&ops, &data)?;
    let file = ModelFile {
        method: method.name().to_string(),
        dim: data.dim(),
        hyperparameters: fitted.hyperparameters(),
        training_scores,
        model: fitted.to_json()?,
    };
    fio::write_json(&a.output, &file)?;
    m.output(&a.output);
    m.config(&serde_json::json!({
        "method": method.name(), "hyperparameters": file.hyperparameters,
        "epsilon": ops.epsilon, "mesh": a.mesh.mesh, "level": a.mesh.level, "radius": a.mesh.radius,
        "solver": grids.solver, "threshold": grids.threshold,
    }));
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn cmd_predict(a: &PredictArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let registry = MethodRegistry::default();
    let mut m = ManifestBuilder::new("predict");
    m.input(&a.model);
    let file: ModelFile = fio::read_json(&a.model)?;
    let method = registry.get(&file.method)?;
    let fitted = method.load(file.model)?;
    let mesh = resolve_mesh(&a.mesh, &mut m)?;
    let epsilon = (file.method == "flda")
        .then(|| serde_json::from_value::<DiscriminantModel>(fio::read_json::<ModelFile>(&a.model).ok()?.model).ok())
        .flatten()
        .map(|d| d.epsilon);
    let ops = FemOperators::assemble(&mesh, epsilon)?;
    let mut data = load_data(&a.data, &a.geometry, &mut m)?;
    if file.hyperparameters.lambda1.is_none() {
        data = data.without_geometry();
    }
    let scores = fitted.score(&ops, &data)?;
    let mut out = String::from("index,label,score,predicted\n");
    for (i, (s, l)) in scores.iter().zip(&data.labels).enumerate() {
        out.push_str(&format!("{i},{},{},{}\n", l.code(), fmt17(*s), fitted.classify(*s).code()));
    }
    write_text(&a.output, &out)?;
    m.output(&a.output);
    m.config(&serde_json::json!({"method": file.method, "mesh": a.mesh.mesh, "level": a.mesh.level, "radius": a.mesh.radius}));
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn read_scores(path: &Path) -> CliResult<(Vec<f64>, Vec<Label>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').map(str::trim).collect();
    let col = |name: &str| {
        header.iter().position(|h| *h == name).ok_or_else(|| {
            Failure::Core(flda::Error::Parse {
                line: 1,
                message: format!("missing column '{name}'"),
            })
        })
    };
    let (ls, ss) = (col("label")?, col("score")?);
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = |msg: String| {
            Failure::Core(flda::Error::Parse {
                line: i + 2,
                message: msg,
            })
        };
        let l = f.get(ls).and_then(|c| Label::from_code(c)).ok_or_else(|| bad("bad label".into()))?;
        let s: f64 = f
            .get(ss)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| bad("bad score".into()))?;
        labels.push(l);
        scores.push(s);
    }
    Ok((scores, labels))
}

fn cmd_threshold(a: &ThresholdArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let (scores, labels) = read_scores(&a.scores)?;
    let r = rule(a.rule, a.specificity);
    let choice = choose_threshold(&scores, &labels, r)?;
    let (sens, spec) = sensitivity_specificity(&scores, &labels, choice.threshold)?;
    let report = serde_json::json!({
        "rule": r,
        "threshold": choice.threshold,
        "degenerate": choice.degenerate,
        "sensitivity": sens,
        "specificity": spec,
        "auc": auc(&scores, &labels)?,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    print!("{text}");
    if let Some(out) = &a.output {
        write_text(out, &text)?;
        let mut m = ManifestBuilder::new("threshold");
        m.config(&serde_json::json!({"rule": r})).input(&a.scores).output(out);
        m.write(&manifest_path(mpath, out))?;
    }
    Ok(())
}

fn experiment_config(a: &ExperimentArgs, m: &mut ManifestBuilder) -> CliResult<ExperimentConfig> {
    if let Some(p) = &a.config {
        m.input(p);
        let v: serde_json::Value = fio::read_json(p)?;
        let v = match v.get("config") {
            Some(inner) if v.get("command").is_some() => inner.clone(),
            _ => v,
        };
        return Ok(serde_json::from_value(v)?);
    }
    if a.lambda2_points == 0 || !(a.lambda2_min > 0.0) || !(a.lambda2_max >= a.lambda2_min) {
        return Err(Failure::Usage("lambda2 grid needs points >= 1 and 0 < min <= max".into()));
    }
    Ok(ExperimentConfig {
        icosphere_level: a.level,
        radius: a.radius,
        basis_size: a.basis_size,
        mean_index: a.mean_index,
        sigma: SigmaSchedule::PowerLaw {
            exponent: a.sigma_exponent,
        },
        alphas: a.alphas.clone(),
        sample_sizes: a.sizes.clone(),
        replicates: a.replicates,
        test_size: a.test_size,
        grids: GridConfig {
            lambda2_factors: log_grid(a.lambda2_min, a.lambda2_max, a.lambda2_points),
            k: a.k.clone(),
            ..GridConfig::default()
        },
        methods: a.methods.clone(),
        seed: a.seed,
        record_timing: false,
    })
}

fn cmd_experiment(a: &ExperimentArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("experiment");
    let mut config = experiment_config(a, &mut m)?;
    config.record_timing = a.timing;
    let registry = MethodRegistry::default();
    config.validate(&registry)?;
    fs::create_dir_all(&a.out_dir)?;
    let (ops, basis) = prepare_basis(&config)?;
    let table = run_experiment_with(&config, &registry, &ops, &basis, a.jobs)?;
    for f in &table.failures {
        eprintln!(
            "warning: {} alpha={} n={} replicate={} failed: {}",
            f.method, f.alpha, f.n, f.replicate, f.error
        );
    }
    let results = a.out_dir.join("results.csv");
    write_text(&results, &table.to_csv())?;
    let summary = a.out_dir.join("summary.json");
    write_text(&summary, &(table.summary_json()? + "\n"))?;
    m.output(&results).output(&summary);
    if a.plot {
        let svg = a.out_dir.join("boxplot.svg");
        write_text(&svg, &auc_boxplot_svg(&table))?;
        m.output(&svg);
    }
    m.config(&config).seed(config.seed);
    let path = mpath.clone().unwrap_or_else(|| a.out_dir.join("manifest.json"));
    m.write(&path)?;
    Ok(())
}

fn cmd_deform(a: &DeformArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("deform");
    m.input(&a.model).input(&a.mesh);
    let file: ModelFile = fio::read_json(&a.model)?;
    if MethodRegistry::default().get(&file.method)?.name() != "flda" {
        return Err(flda::Error::MissingGeometry(format!("{} models have no geometric direction", file.method)).into());
    }
    let model: DiscriminantModel = serde_json::from_value(file.model)?;
    let direction = model.geometry_direction()?;
    let mean = model
        .mean_geometry
        .as_ref()
        .ok_or_else(|| flda::Error::MissingGeometry("model has no mean field".into()))?;
    if !mean.shares_control_points(&direction) {
        return Err(flda::Error::InvalidArgument("mean field and direction use different control points".into()).into());
    }
    let momenta = mean
        .momenta
        .iter()
        .zip(&direction.momenta)
        .map(|(p, q)| [p[0] + a.c1 * q[0], p[1] + a.c1 * q[1], p[2] + a.c1 * q[2]])
        .collect();
    let field = VectorFieldRepr::new(mean.kernel, mean.control_points.clone(), momenta)?;
    let template = read_mesh(&a.mesh)?;
    let moved = flow_deform(&template, &field, a.steps)?;
    moved.save_off(&a.output)?;
    m.output(&a.output);
    m.config(&serde_json::json!({"c1": a.c1, "steps": a.steps}));
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn cmd_register(a: &RegisterArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let mut m = ManifestBuilder::new("register");
    m.input(&a.template).input(&a.target);
    let template = read_mesh(&a.template)?;
    let target = read_mesh(&a.target)?;
    if template.faces() != target.faces() {
        return Err(flda::Error::ConnectivityMismatch(1).into());
    }
    let spec = match a.kernel_sigma {
        Some(s) => KernelSpec::gaussian(s)?,
        None => KernelSpec::default_for(&template)?,
    };
    let subsample = a.subsample.min(template.num_vertices());
    let field = register_small_deformation(template.vertices(), target.vertices(), spec, a.lambda, subsample)?;
    fio::write_json(&a.output, &field)?;
    m.output(&a.output);
    m.config(&serde_json::json!({"lambda": a.lambda, "kernel": spec, "subsample": subsample}));
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn cmd_plot(a: &PlotArgs, mpath: &Option<PathBuf>) -> CliResult<()> {
    let table = ResultTable::from_csv(&fs::read_to_string(&a.results)?)?;
    write_text(&a.output, &auc_boxplot_svg(&table))?;
    let mut m = ManifestBuilder::new("plot");
    m.config(&serde_json::json!({})).input(&a.results).output(&a.output);
    m.write(&manifest_path(mpath, &a.output))?;
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let mp = &cli.manifest;
    match &cli.command {
        Command::Icosphere(a) => cmd_icosphere(a, mp),
        Command::MeshInfo(a) => cmd_mesh_info(a, mp),
        Command::Eig(a) => cmd_eig(a, mp),
        Command::Simulate(a) => cmd_simulate(a, mp),
        Command::Fit(a) => cmd_fit(a, mp),
        Command::Predict(a) => cmd_predict(a, mp),
        Command::Threshold(a) => cmd_threshold(a, mp),
        Command::Experiment(a) => cmd_experiment(a, mp),
        Command::Deform(a) => cmd_deform(a, mp),
        Command::Register(a) => cmd_register(a, mp),
        Command::Plot(a) => cmd_plot(a, mp),
    }
}

fn one_line(msg: &str) -> String {
    msg.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => 1,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {}", one_line(&msg));
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {}", one_line(&e.to_string()));
            ExitCode::from(if e.is_numerical() { 3 } else { 2 })
        }
    }
}
