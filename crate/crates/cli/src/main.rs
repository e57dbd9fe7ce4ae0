//! `diffprim` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 unreadable or invalid input,
//! 3 numeric failure or a verification bound breached.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use diffprim::camera::{orbit_cameras, transform_pose, CameraModel};
use diffprim::fit::{fit_pose, FitConfig};
use diffprim::grad::{
    gradcheck, oracle_compare, random_small_scene, GradCheckReport, GRADCHECK_STEP, GRADCHECK_TOL,
    ORACLE_TOL,
};
use diffprim::grad::SceneSetup;
use diffprim::io::{
    encode_feature_image, decode_feature_image, parse_pose2d, parse_scene, ppm_preview,
    write_atomic, SceneFile,
};
use diffprim::renderer::FeatureImage;
use diffprim::skeleton::{root_depth_with, Pose3D, RootDepthOptions};
use rand::Rng;

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "diffprim", version, about = "Differentiable renderer for skeletal figures")]
struct Cli {
    /// Cap on worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a pose of a scene to a FIMG feature image.
    Render(RenderArgs),
    /// Render frames from cameras circling the figure.
    Orbit(OrbitArgs),
    /// Solve the root depth of a scene pose from 2D observations.
    DepthSolve(DepthSolveArgs),
    /// Check the backward pass against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Recover a pose from a target feature image.
    Fit(FitArgs),
    /// Compare the closed-form ray integral against quadrature.
    OracleCompare(OracleArgs),
}

#[derive(Debug, Args)]
struct PreviewArgs {
    /// Channels shown as red, green and blue.
    #[arg(long, value_delimiter = ',', default_values_t = [0usize, 1, 2])]
    channels: Vec<usize>,
    /// Feature values mapped to black and white.
    #[arg(long, value_delimiter = ',', default_values_t = [-1.0f64, 1.0], allow_hyphen_values = true)]
    range: Vec<f64>,
}

#[derive(Debug, Args)]
struct RenderArgs {
    scene: PathBuf,
    #[arg(long)]
    pose: String,
    #[arg(long)]
    camera: String,
    #[arg(short, long)]
    output: PathBuf,
    /// Also write an 8-bit PPM preview.
    #[arg(long)]
    preview: Option<PathBuf>,
    #[command(flatten)]
    map: PreviewArgs,
}

#[derive(Debug, Args)]
struct OrbitArgs {
    scene: PathBuf,
    #[arg(long)]
    pose: String,
    /// Camera supplying intrinsics, distortion and resolution.
    #[arg(long)]
    camera: Option<String>,
    #[arg(long, default_value_t = 8)]
    frames: usize,
    /// Distance from the pose centroid, in metres.
    #[arg(long, default_value_t = 4.0)]
    radius: f64,
    /// Height of the orbit above the centroid, in degrees.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    elevation: f64,
    /// Output directory; frames are `frame_NNN.fimg`.
    #[arg(short, long)]
    output: PathBuf,
    /// Also write `frame_NNN.ppm` previews.
    #[arg(long)]
    preview: bool,
    #[command(flatten)]
    map: PreviewArgs,
}

#[derive(Debug, Args)]
struct DepthSolveArgs {
    scene: PathBuf,
    /// One `x y confidence` line per joint, in ray coordinates.
    #[arg(long)]
    pose2d: PathBuf,
    /// Pose whose root-relative shape is placed (default: the first).
    #[arg(long)]
    pose: Option<String>,
    /// Camera whose frame the shape is expressed in (default: the first).
    #[arg(long)]
    camera: Option<String>,
    /// Weight joints by their confidence.
    #[arg(long)]
    weighted: bool,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    scene: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pose to check (default: the first).
    #[arg(long)]
    pose: Option<String>,
    #[arg(long)]
    camera: Option<String>,
    /// The scene camera is reduced to this many pixels per side.
    #[arg(long, default_value_t = 12)]
    size: usize,
    /// Additional random small scenes to check.
    #[arg(long, default_value_t = 100)]
    random: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = GRADCHECK_STEP)]
    step: f64,
}

#[derive(Debug, Args)]
struct FitArgs {
    scene: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Pose of the scene to start from.
    #[arg(long)]
    init: String,
    #[arg(long)]
    camera: Option<String>,
    /// Scene pose to measure the result against.
    #[arg(long)]
    truth: Option<String>,
    #[arg(long, default_value_t = FitConfig::default().max_iters)]
    max_iters: usize,
    #[arg(long, default_value_t = FitConfig::default().step_size)]
    step: f64,
    #[arg(long)]
    optimize_appearance: bool,
    #[arg(long, default_value_t = FitConfig::default().appearance_reg)]
    appearance_reg: f64,
    /// Report file (JSON); printed to stdout when absent.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Write a preview of the final render.
    #[arg(long)]
    preview: Option<PathBuf>,
    #[command(flatten)]
    map: PreviewArgs,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 10_000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    Numeric(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => EXIT_INPUT,
            Failure::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Input(m) | Failure::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<diffprim::Error> for Failure {
    fn from(e: diffprim::Error) -> Self {
        use diffprim::Error::*;
        match e {
            Domain(_) | Shape(_) | DegenerateEdge { .. } => Failure::Input(e.to_string()),
            _ => Failure::Numeric(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn input(context: impl fmt::Display, e: impl fmt::Display) -> Failure {
    Failure::Input(format!("{context}: {e}"))
}

fn load_scene(path: &Path) -> CliResult<SceneFile> {
    let text = fs::read_to_string(path).map_err(|e| input(path.display(), e))?;
    parse_scene(&text).map_err(|e| input(path.display(), e))
}

fn pick_pose<'a>(scene: &'a SceneFile, name: Option<&str>) -> CliResult<&'a Pose3D> {
    match name {
        Some(n) => scene.pose(n).map_err(|e| Failure::Input(e.to_string())),
        None => scene
            .poses
            .first()
            .map(|p| &p.pose)
            .ok_or_else(|| Failure::Input("scene has no poses".into())),
    }
}

fn pick_camera<'a>(scene: &'a SceneFile, name: Option<&str>) -> CliResult<&'a CameraModel> {
    match name {
        Some(n) => scene.camera(n).map_err(|e| Failure::Input(e.to_string())),
        None => scene
            .cameras
            .first()
            .map(|c| &c.camera)
            .ok_or_else(|| Failure::Input("scene has no cameras".into())),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    write_atomic(path, bytes).map_err(|e| input(path.display(), e))
}

fn encode(image: &FeatureImage) -> CliResult<Vec<u8>> {
    encode_feature_image(image).map_err(|e| Failure::Input(e.to_string()))
}

fn preview(image: &FeatureImage, map: &PreviewArgs) -> CliResult<Vec<u8>> {
    if map.channels.len() != 3 || map.range.len() != 2 {
        return Err(Failure::Input(
            "--channels takes three indices and --range two values".into(),
        ));
    }
    let channels = [map.channels[0], map.channels[1], map.channels[2]];
    Ok(ppm_preview(image, channels, (map.range[0], map.range[1]))?)
}

fn render(args: &RenderArgs) -> CliResult<()> {
    let scene = load_scene(&args.scene)?;
    let pose = pick_pose(&scene, Some(&args.pose))?;
    let camera = pick_camera(&scene, Some(&args.camera))?;
    let image = scene.setup(camera).render(pose)?;
    // build every output before writing any of them
    let ppm = args.preview.as_ref().map(|_| preview(&image, &args.map)).transpose()?;
    write_file(&args.output, &encode(&image)?)?;
    if let (Some(path), Some(bytes)) = (&args.preview, ppm) {
        write_file(path, &bytes)?;
    }
    let (h, w, a) = image.shape();
    println!("wrote {} ({h}x{w}x{a})", args.output.display());
    Ok(())
}

fn orbit(args: &OrbitArgs) -> CliResult<()> {
    let scene = load_scene(&args.scene)?;
    let pose = pick_pose(&scene, Some(&args.pose))?;
    let template = pick_camera(&scene, args.camera.as_deref())?;
    let cameras = orbit_cameras(
        &pose.centroid(),
        args.radius,
        args.elevation.to_radians(),
        args.frames,
        template,
    )?;
    let frames = cameras
        .par_iter()
        .map(|camera| {
            let image = scene.setup(camera).render(pose)?;
            let ppm = args.preview.then(|| preview(&image, &args.map)).transpose()?;
            Ok((encode(&image)?, ppm))
        })
        .collect::<CliResult<Vec<_>>>()?;
    fs::create_dir_all(&args.output).map_err(|e| input(args.output.display(), e))?;
    for (k, (fimg, ppm)) in frames.iter().enumerate() {
        write_file(&args.output.join(format!("frame_{k:03}.fimg")), fimg)?;
        if let Some(bytes) = ppm {
            write_file(&args.output.join(format!("frame_{k:03}.ppm")), bytes)?;
        }
    }
    println!("wrote {} frames to {}", frames.len(), args.output.display());
    Ok(())
}

fn depth_solve(args: &DepthSolveArgs) -> CliResult<()> {
    let scene = load_scene(&args.scene)?;
    let pose = pick_pose(&scene, args.pose.as_deref())?;
    let camera = pick_camera(&scene, args.camera.as_deref())?;
    let text = fs::read_to_string(&args.pose2d).map_err(|e| input(args.pose2d.display(), e))?;
    let p2d = parse_pose2d(&text).map_err(|e| input(args.pose2d.display(), e))?;
    if p2d.len() != pose.len() {
        return Err(Failure::Input(format!(
            "{} 2D joints for a {}-joint pose",
            p2d.len(),
            pose.len()
        )));
    }
    let relative = transform_pose(pose, &camera.extrinsics).root_relative();
    let options = RootDepthOptions {
        weighted: args.weighted,
    };
    let solution = root_depth_with(&p2d, &relative, options)?;
    println!("{}", solution.depth);
    log::info!(
        "closed-form start {} refined in {} iterations, dL/dZ = {:e}",
        solution.initial,
        solution.iterations,
        solution.gradient
    );
    Ok(())
}

fn report_line(label: &str, report: &GradCheckReport) {
    println!(
        "{label}: {} components, max relative error {:.3e} (component {}: analytic {:e}, fd {:e})",
        report.components, report.max_error, report.worst, report.analytic, report.numeric
    );
}

fn gradcheck_cmd(args: &GradcheckArgs) -> CliResult<()> {
    let scene = load_scene(&args.scene)?;
    let pose = pick_pose(&scene, args.pose.as_deref())?;
    let camera = pick_camera(&scene, args.camera.as_deref())?.resized(args.size, args.size)?;
    let setup: SceneSetup = scene.setup(&camera);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let (h, w, a) = (camera.height, camera.width, setup.params.channels());
    let adjoint_data = (0..h * w * a).map(|_| rng.random_range(-1.0..1.0)).collect();
    let adjoint = FeatureImage::new(h, w, a, adjoint_data)?;
    let scene_report = gradcheck(&setup, pose, &adjoint, args.step)?;
    report_line("scene", &scene_report);

    let small = (0..args.random)
        .map(|_| random_small_scene(&mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    let reports = small
        .par_iter()
        .map(|s| gradcheck(&s.setup, &s.pose, &s.adjoint, args.step))
        .collect::<Result<Vec<_>, _>>()?;
    let mut max_error = scene_report.max_error;
    if let Some(worst) = reports.iter().max_by(|a, b| a.max_error.total_cmp(&b.max_error)) {
        report_line(&format!("{} random scenes, worst", reports.len()), worst);
        max_error = max_error.max(worst.max_error);
    }
    println!("max relative error {max_error:.3e} (bound {GRADCHECK_TOL:e})");
    if max_error <= GRADCHECK_TOL {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "gradient check failed: {max_error:e} > {GRADCHECK_TOL:e}"
        )))
    }
}

fn fit(args: &FitArgs) -> CliResult<()> {
    let scene = load_scene(&args.scene)?;
    let init = pick_pose(&scene, Some(&args.init))?;
    let truth = args.truth.as_deref().map(|n| pick_pose(&scene, Some(n))).transpose()?;
    let camera = pick_camera(&scene, args.camera.as_deref())?;
    let bytes = fs::read(&args.target).map_err(|e| input(args.target.display(), e))?;
    let target = decode_feature_image(&bytes).map_err(|e| input(args.target.display(), e))?;
    let cfg = FitConfig {
        max_iters: args.max_iters,
        step_size: args.step,
        appearance_reg: args.appearance_reg,
        optimize_appearance: args.optimize_appearance,
        ..FitConfig::default()
    };
    let setup = scene.setup(camera);
    let report = fit_pose(&target, init, &setup, &cfg, truth)?;
    let joints: Vec<[f64; 3]> = report.pose.joints.iter().map(|p| [p.x, p.y, p.z]).collect();
    let rows: Vec<&[f64]> = report.appearances.rows().collect();
    let doc = json!({
        "iterations": report.iterations,
        "converged": report.converged,
        "stalled": report.stalled,
        "final_loss": report.final_loss,
        "final_image_loss": report.final_image_loss,
        "pose_rms_error": report.pose_error.map(f64::sqrt),
        "final_step": report.final_step,
        "pose": joints,
        "appearances": if args.optimize_appearance { json!(rows) } else { json!(null) },
        "loss_trace": report.loss_trace,
    });
    let text = serde_json::to_string_pretty(&doc).expect("finite report values") + "\n";
    let ppm = match &args.preview {
        Some(_) => {
            let mut s = setup.clone();
            s.appearances = report.appearances.clone();
            Some(preview(&s.render(&report.pose)?, &args.map)?)
        }
        None => None,
    };
    match &args.output {
        Some(path) => {
            write_file(path, text.as_bytes())?;
            println!(
                "{} iterations, final loss {:.6e}, report in {}",
                report.iterations,
                report.final_loss,
                path.display()
            );
        }
        None => print!("{text}"),
    }
    if let (Some(path), Some(bytes)) = (&args.preview, ppm) {
        write_file(path, &bytes)?;
    }
    Ok(())
}

fn oracle(args: &OracleArgs) -> CliResult<()> {
    let report = oracle_compare(args.cases, args.seed)?;
    println!(
        "{} cases ({} below the normal f64 range), max relative error {:.3e} (bound {ORACLE_TOL:e})",
        report.cases, report.underflow_cases, report.max_rel_error
    );
    if let Some(c) = report.worst.as_ref().filter(|_| !report.passed()) {
        println!("worst case: r = {:?}, mu = {:?}, alpha = {}", c.r.as_slice(), c.mu.as_slice(), c.alpha);
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Numeric(format!(
            "oracle comparison failed: {:e} > {ORACLE_TOL:e}",
            report.max_rel_error
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match &cli.command {
        Command::Render(a) => render(a),
        Command::Orbit(a) => orbit(a),
        Command::DepthSolve(a) => depth_solve(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::Fit(a) => fit(a),
        Command::OracleCompare(a) => oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
