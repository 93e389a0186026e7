use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use tgv_fusion::fusion::{fuse, Method, SolverKind, ViewSet};
use tgv_fusion::geometry::normal_map;
use tgv_fusion::harness::config::{RunConfig, SceneKind};
use tgv_fusion::harness::io::{
    read_depth_pfm, read_intrinsics, read_pfm, read_poses, write_depth_pfm, write_intrinsics, write_pfm, write_poses,
};
use tgv_fusion::harness::metrics::{aggregate, depth_to_disparity, evaluate, write_metrics_csv, Averaging, Masked};
use tgv_fusion::harness::noise::NoiseKind;
use tgv_fusion::harness::scene::synthesize;
use tgv_fusion::solvers::Verdict;

const CONFIG_KEYS: &str = "\
Config file keys (TOML; command-line flags override them):
  [model]  alpha1 alpha0 b w c prior_sigma edge_gain edge_exponent edge_sigma
  [solver] method solver reference iters inner_iters tau tau_lambda tol mu0 nu0
           prox_growth prox_max norm_seed threads
  [scene]  kind width height views noise noise_scale seed spacing background offsets
See docs/config.md for meanings and defaults.";

/// Confidence-driven TGV fusion of depth images.
#[derive(Parser, Debug)]
#[command(name = "tgvfuse", version, after_help = CONFIG_KEYS)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML run configuration
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory (created if missing)
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Seed for noise (synth) or norm estimation (fuse)
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads; kernels currently run on one thread, so any value is bitwise reproducible
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic bundle with ground truth
    Synth {
        #[command(flatten)]
        common: Common,
        /// boxes | orbit | translation
        #[arg(long)]
        scene: Option<String>,
        /// Number of views K
        #[arg(long, value_name = "K")]
        views: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// laplace | gaussian
        #[arg(long)]
        noise: Option<String>,
        /// Laplace scale or Gaussian standard deviation
        #[arg(long, value_name = "X")]
        noise_scale: Option<f64>,
    },
    /// Fuse a bundle into a reference view
    Fuse {
        #[command(flatten)]
        common: Common,
        /// Directory with view_XX.pfm, poses.txt, intrinsics.txt and optional intensity_XX.pfm
        #[arg(long, value_name = "DIR")]
        input: PathBuf,
        /// mean | median | rof | l1 | tgv-fusion | l1-heuristic | rof-adapt | l1-adapt | adapt-hprior | adapt-hprior+g
        #[arg(long)]
        method: Option<String>,
        /// acs | ama | pdhg
        #[arg(long)]
        solver: Option<String>,
        /// Reference view index (default: middle view)
        #[arg(long = "ref", value_name = "INDEX")]
        reference: Option<usize>,
        /// Outer iterations
        #[arg(long, value_name = "N")]
        iters: Option<usize>,
        /// PDHG iterations per outer iteration
        #[arg(long, value_name = "N")]
        inner_iters: Option<usize>,
        #[arg(long, value_name = "X")]
        alpha1: Option<f64>,
        #[arg(long, value_name = "X")]
        alpha0: Option<f64>,
        #[arg(long, value_name = "X")]
        b: Option<f64>,
        /// Primal step size
        #[arg(long, value_name = "X")]
        tau: Option<f64>,
    },
    /// Score fused depth maps against ground truth
    Eval {
        #[command(flatten)]
        common: Common,
        /// Fused depth PFMs
        #[arg(long, value_name = "PATH", num_args = 1.., required = true)]
        fused: Vec<PathBuf>,
        /// Ground-truth depth PFMs, one per fused input
        #[arg(long, value_name = "PATH", num_args = 1..)]
        gt: Vec<PathBuf>,
        /// Intrinsics file (default: virtual camera for the image size)
        #[arg(long, value_name = "PATH")]
        intrinsics: Option<PathBuf>,
        /// Virtual stereo baseline for disparity metrics
        #[arg(long, value_name = "X", default_value_t = 3.0 * (std::f64::consts::PI / 72.0).sin())]
        baseline: f64,
        /// Disparity error thresholds for out-n
        #[arg(long, value_name = "N", num_args = 1.., default_values_t = [1.0, 2.0, 3.0, 4.0, 5.0])]
        thresholds: Vec<f64>,
        /// Aggregate with arithmetic instead of geometric means
        #[arg(long)]
        arithmetic: bool,
    },
}

#[derive(Serialize)]
struct Timings {
    total_seconds: f64,
    solver_seconds: f64,
}

#[derive(Serialize)]
struct RunManifest {
    command: &'static str,
    version: &'static str,
    config: RunConfig,
    inputs: Vec<String>,
    outputs: Vec<String>,
    seed: u64,
    threads: usize,
    verdict: Option<Verdict>,
    timings: Timings,
}

/// Failures that should exit with the usage status.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Usage(msg.into()).into())
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut config = match &common.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("reading config {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(t) = common.threads {
        if t == 0 {
            return usage("--threads must be at least 1");
        }
        config.solver.threads = t;
    }
    Ok(config)
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn write_manifest(out: &Path, manifest: &RunManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(out.join("manifest.json"), text + "\n")?;
    std::fs::write(out.join("config.toml"), manifest.config.to_toml())?;
    Ok(())
}

fn view_name(k: usize) -> String {
    format!("view_{k:02}.pfm")
}

#[allow(clippy::too_many_arguments)]
fn cmd_synth(
    common: Common,
    scene: Option<String>,
    views: Option<usize>,
    width: Option<usize>,
    height: Option<usize>,
    noise: Option<String>,
    noise_scale: Option<f64>,
) -> Result<Option<Verdict>> {
    let start = Instant::now();
    let mut config = load_config(&common)?;
    let s = &mut config.scene;
    if let Some(kind) = scene {
        s.kind = match kind.as_str() {
            "boxes" => SceneKind::Boxes,
            "orbit" => SceneKind::Orbit,
            "translation" => SceneKind::Translation,
            other => return usage(format!("unknown scene {other:?}; expected boxes, orbit or translation")),
        };
    }
    if let Some(n) = noise {
        s.noise = match n.as_str() {
            "laplace" => NoiseKind::Laplace,
            "gaussian" => NoiseKind::Gaussian,
            other => return usage(format!("unknown noise {other:?}; expected laplace or gaussian")),
        };
    }
    s.views = views.unwrap_or(s.views);
    s.width = width.unwrap_or(s.width);
    s.height = height.unwrap_or(s.height);
    s.noise_scale = noise_scale.unwrap_or(s.noise_scale);
    s.seed = common.seed.unwrap_or(s.seed);
    if s.views == 0 {
        return usage("--views must be at least 1");
    }
    if s.width == 0 || s.height == 0 {
        return usage("--width and --height must be positive");
    }

    let data = synthesize(s)?;
    let out = &common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = Vec::new();
    for (k, ((view, valid), ((gt, gt_valid), image))) in
        data.views.iter().zip(data.truths.iter().zip(&data.intensities)).enumerate()
    {
        let names = [view_name(k), format!("gt_{k:02}.pfm"), format!("intensity_{k:02}.pfm")];
        write_depth_pfm(out.join(&names[0]), view, valid)?;
        write_depth_pfm(out.join(&names[1]), gt, gt_valid)?;
        write_pfm(out.join(&names[2]), image)?;
        outputs.extend(names);
    }
    write_poses(out.join("poses.txt"), &data.poses)?;
    write_intrinsics(out.join("intrinsics.txt"), &data.camera)?;
    outputs.extend(["poses.txt".into(), "intrinsics.txt".into()]);

    let seed = config.scene.seed;
    let threads = config.solver.threads;
    let manifest = RunManifest {
        command: "synth",
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs: vec![],
        outputs,
        seed,
        threads,
        verdict: None,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64(), solver_seconds: 0.0 },
    };
    write_manifest(out, &manifest)?;
    Ok(None)
}

struct FuseOverrides {
    method: Option<String>,
    solver: Option<String>,
    reference: Option<usize>,
    iters: Option<usize>,
    inner_iters: Option<usize>,
    alpha1: Option<f64>,
    alpha0: Option<f64>,
    b: Option<f64>,
    tau: Option<f64>,
}

fn cmd_fuse(common: Common, input: PathBuf, o: FuseOverrides) -> Result<Option<Verdict>> {
    let start = Instant::now();
    let mut config = load_config(&common)?;
    if let Some(m) = o.method {
        config.solver.method = m.parse::<Method>().map_err(|e| Usage(e.to_string()))?;
    }
    if let Some(s) = o.solver {
        config.solver.solver = Some(s.parse::<SolverKind>().map_err(|e| Usage(e.to_string()))?);
    }
    let solver = config.solver.method.resolve_solver(config.solver.solver).map_err(|e| Usage(e.to_string()))?;
    config.solver.solver = solver;
    let s = &mut config.solver;
    s.reference = o.reference.or(s.reference);
    s.iters = o.iters.unwrap_or(s.iters);
    s.inner_iters = o.inner_iters.unwrap_or(s.inner_iters);
    s.tau = o.tau.or(s.tau);
    s.norm_seed = common.seed.unwrap_or(s.norm_seed);
    let m = &mut config.model;
    m.alpha1 = o.alpha1.unwrap_or(m.alpha1);
    m.alpha0 = o.alpha0.unwrap_or(m.alpha0);
    m.b = o.b.unwrap_or(m.b);

    let poses_path = input.join("poses.txt");
    let intr_path = input.join("intrinsics.txt");
    if !poses_path.exists() || !intr_path.exists() {
        return usage(format!("{} must contain poses.txt and intrinsics.txt", input.display()));
    }
    let poses = read_poses(&poses_path)?;
    let camera = read_intrinsics(&intr_path)?;
    let mut inputs = vec![display(&poses_path), display(&intr_path)];
    let mut views = Vec::new();
    for k in 0..poses.len() {
        let p = input.join(view_name(k));
        if !p.exists() {
            return usage(format!("missing view {}", p.display()));
        }
        views.push(read_depth_pfm(&p)?);
        inputs.push(display(&p));
    }
    if views.is_empty() {
        return usage("poses.txt lists no views");
    }
    let reference = config.solver.reference.unwrap_or(views.len() / 2);
    if reference >= views.len() {
        return usage(format!("--ref {reference} out of range for {} views", views.len()));
    }
    config.solver.reference = Some(reference);

    let intensity_path = input.join(format!("intensity_{reference:02}.pfm"));
    let intensity = if intensity_path.exists() {
        inputs.push(display(&intensity_path));
        Some(read_pfm(&intensity_path)?)
    } else {
        None
    };
    if config.solver.method == Method::AdaptHpriorG && intensity.is_none() {
        return usage(format!("adapt-hprior+g needs {}", intensity_path.display()));
    }

    let bundle = ViewSet { views, poses, camera }.to_reference(reference)?;
    let solve_start = Instant::now();
    let result = fuse(&bundle, &camera, intensity.as_ref(), config.solver.method, solver, &config.settings())?;
    let solver_seconds = solve_start.elapsed().as_secs_f64();

    let out = &common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut outputs = vec!["fused.pfm".to_string()];
    write_depth_pfm(out.join("fused.pfm"), &result.depth, &result.valid)?;
    if let Some(l) = &result.lambda {
        write_pfm(out.join("lambda.pfm"), l.as_field())?;
        outputs.push("lambda.pfm".into());
    }
    if let Some(t) = &result.trace {
        t.save_csv(out.join("trace.csv"))?;
        outputs.push("trace.csv".into());
    }
    let verdict = result.verdict();
    let seed = config.solver.norm_seed;
    let threads = config.solver.threads;
    let manifest = RunManifest {
        command: "fuse",
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs,
        outputs,
        seed,
        threads,
        verdict,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64(), solver_seconds },
    };
    write_manifest(out, &manifest)?;
    Ok(verdict)
}

fn cmd_eval(
    common: Common,
    fused: Vec<PathBuf>,
    gt: Vec<PathBuf>,
    intrinsics: Option<PathBuf>,
    baseline: f64,
    thresholds: Vec<f64>,
    arithmetic: bool,
) -> Result<Option<Verdict>> {
    let start = Instant::now();
    let config = load_config(&common)?;
    if gt.is_empty() {
        return usage("--gt is required");
    }
    if gt.len() != fused.len() {
        return usage(format!("{} fused inputs but {} ground-truth files", fused.len(), gt.len()));
    }
    for p in fused.iter().chain(&gt) {
        if !p.exists() {
            return usage(format!("missing input {}", p.display()));
        }
    }
    let mut rows = Vec::new();
    for (f, g) in fused.iter().zip(&gt) {
        let (x, x_valid) = read_depth_pfm(f)?;
        let (t, t_valid) = read_depth_pfm(g)?;
        t.grid.check(x.grid)?;
        let camera = match &intrinsics {
            Some(p) => read_intrinsics(p)?,
            None => tgv_fusion::geometry::CameraIntrinsics::virtual_camera(t.grid.width, t.grid.height),
        };
        let nx = normal_map(&x, &x_valid, &camera);
        let nt = normal_map(&t, &t_valid, &camera);
        let dx = depth_to_disparity(&x, &x_valid, camera.f, baseline)?;
        let dt = depth_to_disparity(&t, &t_valid, camera.f, baseline)?;
        let report = evaluate(
            Masked::new(&x, &x_valid),
            Masked::new(&t, &t_valid),
            &nx,
            &nt,
            Masked::new(&dx, &x_valid),
            Masked::new(&dt, &t_valid),
            &thresholds,
        )?;
        rows.push((display(f), report));
    }
    let how = if arithmetic { Averaging::Arithmetic } else { Averaging::Geometric };
    let reports: Vec<_> = rows.iter().map(|(_, r)| r.clone()).collect();
    rows.push((how.label().to_string(), aggregate(&reports, how)?));

    let out = &common.out;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_metrics_csv(std::fs::File::create(out.join("metrics.csv"))?, &rows)?;
    let seed = common.seed.unwrap_or(0);
    let threads = config.solver.threads;
    let manifest = RunManifest {
        command: "eval",
        version: env!("CARGO_PKG_VERSION"),
        config,
        inputs: fused.iter().chain(&gt).map(|p| display(p)).collect(),
        outputs: vec!["metrics.csv".into()],
        seed,
        threads,
        verdict: None,
        timings: Timings { total_seconds: start.elapsed().as_secs_f64(), solver_seconds: 0.0 },
    };
    write_manifest(out, &manifest)?;
    Ok(None)
}

fn run(cli: Cli) -> Result<Option<Verdict>> {
    match cli.command {
        Command::Synth { common, scene, views, width, height, noise, noise_scale } => {
            cmd_synth(common, scene, views, width, height, noise, noise_scale)
        }
        Command::Fuse {
            common,
            input,
            method,
            solver,
            reference,
            iters,
            inner_iters,
            alpha1,
            alpha0,
            b,
            tau,
        } => cmd_fuse(
            common,
            input,
            FuseOverrides { method, solver, reference, iters, inner_iters, alpha1, alpha0, b, tau },
        ),
        Command::Eval { common, fused, gt, intrinsics, baseline, thresholds, arithmetic } => {
            cmd_eval(common, fused, gt, intrinsics, baseline, thresholds, arithmetic)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Some(Verdict::Diverged)) => {
            eprintln!("tgvfuse: solver diverged; trace and manifest were written");
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("tgvfuse: usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("tgvfuse: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
