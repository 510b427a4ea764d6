//! `patchflow` — dataset generation, two-phase training, sampling,
//! evaluation and trace visualization for the patch-adaptive control model.
//!
//! Exit codes: 0 success, 2 bad configuration, 3 missing checkpoint,
//! 4 I/O failure. Failures also emit a one-line JSON error record on stderr.

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchflow_core::eval::{eval_run, gray_to_rgb, ssim, write_ppm, EvalReport};
use patchflow_core::pam::{patch_adapt, trace_to_colormap};
use patchflow_core::pipeline::{
    init_system, sample, write_loss_log, Checkpoint, ControlMode, Fourier, ModelConfig, Phase,
    TrainConfig,
};
use patchflow_core::select::top_r;
use patchflow_core::synth::{make_dataset, read_manifest, write_manifest, ImageSample, SceneSpec};
use patchflow_core::{ConditionKind, Error, NoGradGuard};
use std::fs;
use std::io::{BufReader, BufWriter, Write as IoWrite};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_BAD_CONFIG: u8 = 2;
const EXIT_MISSING_CHECKPOINT: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser)]
#[command(
    name = "patchflow",
    about = "Patch-adaptive multi-condition control for a toy rectified-flow transformer",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a procedural dataset (manifest + raster blobs).
    GenData(GenDataArgs),
    /// Phase 1: train the backbone alone on clean velocity targets.
    TrainBackbone(TrainBackboneArgs),
    /// Phase 2: train PAM + control blocks with the backbone frozen.
    TrainControl(TrainControlArgs),
    /// Sample images from a checkpoint under a chosen condition set.
    Sample(SampleArgs),
    /// Score held-out samples with SSIM and aggregate selection traces.
    Eval(EvalArgs),
    /// Render the patch-selection colormap at a single timestep.
    TraceViz(TraceVizArgs),
    /// Run the built-in invariant suite and report pass/fail counts.
    Selftest,
}

/// Model geometry flags shared by training subcommands. The canvas is fixed
/// at 32x32 by the procedural scene generator.
#[derive(Args)]
struct ModelArgs {
    /// Patch side length (must divide 32).
    #[arg(long, default_value_t = 2)]
    patch: usize,
    /// Hidden width of every block.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Number of dual-stream blocks.
    #[arg(long, default_value_t = 2)]
    n_dsb: usize,
    /// Number of single-stream blocks.
    #[arg(long, default_value_t = 4)]
    n_ssb: usize,
    /// Positions claimed per selection iteration.
    #[arg(long, default_value_t = 16)]
    n_p: usize,
}

impl ModelArgs {
    fn config(&self) -> ModelConfig {
        ModelConfig {
            canvas: 32,
            patch: self.patch,
            dim: self.dim,
            n_dsb: self.n_dsb,
            n_ssb: self.n_ssb,
            n_p: self.n_p,
        }
    }
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    count: usize,
    /// Text-token embedding width (match the model's --dim).
    #[arg(long, default_value_t = 64)]
    dim: usize,
    /// Output directory (relative paths resolve under $PATCHFLOW_OUT).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainBackboneArgs {
    /// Dataset manifest written by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    model: ModelArgs,
    /// Continue from an existing checkpoint instead of initializing.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Checkpoint output path; a .meta sidecar and .losses log sit beside it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainControlArgs {
    /// Dataset manifest written by gen-data.
    #[arg(long)]
    data: PathBuf,
    /// Phase-1 checkpoint providing the frozen backbone.
    #[arg(long, required_unless_present = "resume")]
    backbone: Option<PathBuf>,
    #[arg(long)]
    steps: usize,
    #[arg(long, default_value_t = 2e-5)]
    lr: f64,
    #[arg(long, default_value_t = 4)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable condition dropout (keypoints are never dropped anyway).
    #[arg(long)]
    no_dropout: bool,
    #[command(flatten)]
    fourier: FourierArgs,
    /// Continue from an existing phase-2 checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FourierArgs {
    /// Enable frequency-selective correction of control residuals.
    #[arg(long)]
    fourier: bool,
    /// Low-frequency amplification factor.
    #[arg(long, default_value_t = 1.0)]
    fourier_alpha: f64,
    /// Low-pass cutoff radius in cycles (default 1/4 of Nyquist for 16x16 token grids).
    #[arg(long, default_value_t = 2.0)]
    fourier_cutoff: f64,
}

impl FourierArgs {
    fn mode(&self) -> Fourier {
        if self.fourier {
            Fourier::On { alpha: self.fourier_alpha, cutoff: self.fourier_cutoff }
        } else {
            Fourier::Off
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Full,
    BackboneOnly,
    RandomSelection,
}

impl ModeArg {
    fn mode(self) -> ControlMode {
        match self {
            ModeArg::Full => ControlMode::Full,
            ModeArg::BackboneOnly => ControlMode::BackboneOnly,
            ModeArg::RandomSelection => ControlMode::RandomSelection,
        }
    }
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Scene spec seed; the ground-truth render is written alongside.
    #[arg(long)]
    scene_seed: u64,
    /// Comma-separated subset of edge,depth,sketch,keypoint.
    #[arg(long, default_value = "edge,depth,sketch,keypoint")]
    conditions: String,
    #[arg(long, default_value_t = 25)]
    steps: usize,
    /// Noise seed for the sampler.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    #[command(flatten)]
    fourier: FourierArgs,
    /// Also write one selection colormap per sampling step.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Held-out dataset manifest (use a seed range disjoint from training).
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "edge,depth,sketch,keypoint")]
    conditions: String,
    #[arg(long, default_value_t = 25)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    #[command(flatten)]
    fourier: FourierArgs,
    /// Report output path (structured text; summary goes to stdout).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TraceVizArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    scene_seed: u64,
    #[arg(long, default_value = "edge,depth,sketch,keypoint")]
    conditions: String,
    /// Timestep in (0, 1] at which to run patch adaptation.
    #[arg(long, default_value_t = 1.0)]
    t: f64,
    /// Pixels per patch cell in the colormap.
    #[arg(long, default_value_t = 8)]
    cell: usize,
    #[arg(long)]
    out: PathBuf,
}

// ── error plumbing ──────────────────────────────────────────────────────

struct CliError {
    code: u8,
    kind: &'static str,
    message: String,
}

impl CliError {
    fn bad_config(message: impl Into<String>) -> CliError {
        CliError { code: EXIT_BAD_CONFIG, kind: "bad-config", message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> CliError {
        let (code, kind) = match &e {
            Error::Checkpoint(_) => (EXIT_MISSING_CHECKPOINT, "missing-checkpoint"),
            Error::Io(_) => (EXIT_IO, "io"),
            _ => (EXIT_BAD_CONFIG, "bad-config"),
        };
        CliError { code, kind, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError { code: EXIT_IO, kind: "io", message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Relative output paths resolve under `$PATCHFLOW_OUT` when set.
fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os("PATCHFLOW_OUT") {
        Some(root) => PathBuf::from(root).join(path),
        None => path.to_path_buf(),
    }
}

fn parse_conditions(spec: &str) -> CliResult<Vec<ConditionKind>> {
    let mut kinds = Vec::new();
    for name in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = ConditionKind::ALL
            .into_iter()
            .find(|k| k.name() == name)
            .ok_or_else(|| CliError::bad_config(format!("unknown condition {name:?}")))?;
        if kinds.contains(&kind) {
            return Err(CliError::bad_config(format!("duplicate condition {name:?}")));
        }
        kinds.push(kind);
    }
    if kinds.is_empty() {
        return Err(CliError::bad_config("condition subset must be non-empty"));
    }
    Ok(kinds)
}

fn load_dataset(path: &Path, text_dim: usize) -> CliResult<Vec<ImageSample>> {
    let file = fs::File::open(path)
        .map_err(|e| CliError { code: EXIT_IO, kind: "io", message: format!("{}: {e}", path.display()) })?;
    Ok(read_manifest(BufReader::new(file), text_dim)?)
}

fn load_checkpoint(path: &Path) -> CliResult<Checkpoint> {
    Ok(Checkpoint::load(path)?)
}

fn sidecar(path: &Path, ext: &str) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(ext);
    PathBuf::from(s)
}

fn write_ppm_file(path: &Path, width: usize, height: usize, rgb: &[u8]) -> CliResult<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    write_ppm(&mut f, width, height, rgb)?;
    f.flush()?;
    Ok(())
}

// ── subcommands ─────────────────────────────────────────────────────────

fn run_gen_data(args: &GenDataArgs) -> CliResult<()> {
    if args.count == 0 {
        return Err(CliError::bad_config("--count must be >= 1"));
    }
    if args.dim == 0 {
        return Err(CliError::bad_config("--dim must be >= 1"));
    }
    let out = resolve_out(&args.out);
    fs::create_dir_all(&out)?;
    let dataset = make_dataset(args.seed, args.count, args.dim);
    let manifest_path = out.join("manifest.txt");
    let mut mf = BufWriter::new(fs::File::create(&manifest_path)?);
    write_manifest(&mut mf, &dataset)?;
    mf.flush()?;
    let mut bf = BufWriter::new(fs::File::create(out.join("blobs.bin"))?);
    patchflow_core::synth::write_blobs(&mut bf, &dataset)?;
    bf.flush()?;
    println!(
        "wrote {} samples to {} (manifest.txt, blobs.bin)",
        dataset.len(),
        out.display()
    );
    Ok(())
}

fn run_training(
    mut ckpt: Checkpoint,
    data: &Path,
    steps: usize,
    out: &Path,
) -> CliResult<()> {
    let dataset = load_dataset(data, ckpt.config.model.dim)?;
    if dataset.is_empty() {
        return Err(CliError::bad_config("dataset manifest contains no samples"));
    }
    if ckpt.config.dataset_size == 0 {
        // Fresh runs echo the actual manifest size into the config.
        ckpt.config.dataset_size = dataset.len();
    }
    let log = ckpt.train(&dataset, steps)?;
    let out = resolve_out(out);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    ckpt.save(&out)?;
    let mut lf = BufWriter::new(fs::File::create(sidecar(&out, ".losses"))?);
    write_loss_log(&mut lf, &log)?;
    lf.flush()?;
    let first = log.first().map(|&(_, l)| l).unwrap_or(f64::NAN);
    let last = log.last().map(|&(_, l)| l).unwrap_or(f64::NAN);
    println!(
        "trained {} steps (now at step {}): loss {first:.6} -> {last:.6}; checkpoint {}",
        steps,
        ckpt.step,
        out.display()
    );
    Ok(())
}

fn run_train_backbone(args: &TrainBackboneArgs) -> CliResult<()> {
    let ckpt = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config.phase != Phase::Backbone {
                return Err(CliError::bad_config("--resume checkpoint is not a backbone-phase checkpoint"));
            }
            ckpt
        }
        None => {
            let model = args.model.config();
            let config = TrainConfig {
                phase: Phase::Backbone,
                lr: args.lr,
                batch: args.batch,
                seed: args.seed,
                dropout: false,
                fourier: Fourier::Off,
                dataset_seed: 0,
                dataset_size: 0,
                model,
            };
            let system = init_system(&model, args.seed)?;
            Checkpoint::fresh(config, system)
        }
    };
    run_training(ckpt, &args.data, args.steps, &args.out)
}

fn run_train_control(args: &TrainControlArgs) -> CliResult<()> {
    let ckpt = match &args.resume {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            if ckpt.config.phase != Phase::Control {
                return Err(CliError::bad_config("--resume checkpoint is not a control-phase checkpoint"));
            }
            ckpt
        }
        None => {
            let base = load_checkpoint(args.backbone.as_ref().expect("clap enforces --backbone"))?;
            if base.config.phase != Phase::Backbone {
                return Err(CliError::bad_config("--backbone checkpoint is not a backbone-phase checkpoint"));
            }
            let config = TrainConfig {
                phase: Phase::Control,
                lr: args.lr,
                batch: args.batch,
                seed: args.seed,
                dropout: !args.no_dropout,
                fourier: args.fourier.mode(),
                dataset_seed: 0,
                dataset_size: 0,
                model: base.config.model,
            };
            Checkpoint::fresh(config, base.system)
        }
    };
    run_training(ckpt, &args.data, args.steps, &args.out)
}

fn run_sample(args: &SampleArgs) -> CliResult<()> {
    let kinds = parse_conditions(&args.conditions)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let model = ckpt.config.model;
    let item = ImageSample::from_spec(SceneSpec::generate(args.scene_seed), model.dim);
    let conds: Vec<(ConditionKind, &[f64])> =
        kinds.iter().map(|&k| (k, item.condition(k))).collect();
    let (img, traces) = sample(
        &ckpt.system,
        &conds,
        &item.text,
        args.steps,
        args.seed,
        args.mode.mode(),
        args.fourier.mode(),
    )?;
    let out = resolve_out(&args.out);
    fs::create_dir_all(&out)?;
    let side = model.canvas;
    write_ppm_file(&out.join("sample.ppm"), side, side, &gray_to_rgb(&img))?;
    write_ppm_file(&out.join("truth.ppm"), side, side, &gray_to_rgb(&item.image))?;
    if args.trace {
        for (k, tr) in traces.iter().enumerate() {
            let cell = 8;
            let rgb = trace_to_colormap(tr, model.grid(), cell)?;
            let px = model.grid() * cell;
            write_ppm_file(&out.join(format!("trace_{k:02}.ppm")), px, px, &rgb)?;
        }
    }
    let score = ssim(&img, &item.image, side)?;
    println!(
        "sampled scene {} over {} steps (ssim vs truth {:.4}); outputs in {}",
        args.scene_seed,
        args.steps,
        score,
        out.display()
    );
    Ok(())
}

fn run_eval(args: &EvalArgs) -> CliResult<()> {
    let kinds = parse_conditions(&args.conditions)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let dataset = load_dataset(&args.data, ckpt.config.model.dim)?;
    let report = eval_run(
        &ckpt.system,
        &dataset,
        &kinds,
        args.steps,
        args.seed,
        args.mode.mode(),
        args.fourier.mode(),
    )?;
    let out = resolve_out(&args.out);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&out, report.to_text())?;
    print!("{}", report.summary());
    println!("report written to {}", out.display());
    Ok(())
}

fn run_trace_viz(args: &TraceVizArgs) -> CliResult<()> {
    if !(args.t > 0.0 && args.t <= 1.0) {
        return Err(CliError::bad_config(format!("--t must lie in (0, 1], got {}", args.t)));
    }
    if args.cell == 0 {
        return Err(CliError::bad_config("--cell must be >= 1"));
    }
    let kinds = parse_conditions(&args.conditions)?;
    let ckpt = load_checkpoint(&args.checkpoint)?;
    let model = ckpt.config.model;
    let item = ImageSample::from_spec(SceneSpec::generate(args.scene_seed), model.dim);
    let conds: Vec<(ConditionKind, &[f64])> =
        kinds.iter().map(|&k| (k, item.condition(k))).collect();
    let _guard = NoGradGuard::new();
    let (_, trace) = patch_adapt(&ckpt.system.pam, &model.pam(), &conds, &item.text, args.t)?;
    let rgb = trace_to_colormap(&trace, model.grid(), args.cell)?;
    let out = resolve_out(&args.out);
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let px = model.grid() * args.cell;
    write_ppm_file(&out, px, px, &rgb)?;
    let f = trace.fractions(model.positions());
    println!(
        "t={} fractions edge {:.3} depth {:.3} sketch {:.3} keypoint {:.3}; colormap {}",
        args.t,
        f[0],
        f[1],
        f[2],
        f[3],
        out.display()
    );
    Ok(())
}

// ── selftest ────────────────────────────────────────────────────────────

fn selftest_checks() -> Vec<(&'static str, bool)> {
    use rand::Rng;
    let mut checks = Vec::new();

    // top_r agrees with a full-sort oracle.
    let mut rng = rand_seed(11);
    let mut ok = true;
    for _ in 0..200 {
        let n = 1 + (rng.gen::<u64>() % 24) as usize;
        let vals: Vec<f64> = (0..n).map(|_| (rng.gen::<u64>() % 7) as f64).collect();
        let r = 1 + (rng.gen::<u64>() % n as u64) as usize;
        let got = top_r(&vals, r).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap().then(a.cmp(&b)));
        ok &= got == order[..r];
    }
    checks.push(("top_r matches sort oracle", ok));

    // Dataset generation is deterministic.
    let (a, b) = (make_dataset(5, 3, 8), make_dataset(5, 3, 8));
    let (mut ma, mut mb) = (Vec::new(), Vec::new());
    write_manifest(&mut ma, &a).unwrap();
    write_manifest(&mut mb, &b).unwrap();
    checks.push(("gen-data manifests are seed-deterministic", ma == mb));

    // SSIM identity.
    let img: Vec<f64> = (0..32 * 32).map(|i| (i % 7) as f64 / 6.0).collect();
    checks.push(("ssim(x, x) == 1", ssim(&img, &img, 32).unwrap() == 1.0));

    // Zero-init control stack leaves sampling bit-identical.
    let model = ModelConfig { canvas: 32, patch: 4, dim: 8, n_dsb: 1, n_ssb: 1, n_p: 16 };
    let system = init_system(&model, 3).unwrap();
    let item = ImageSample::from_spec(SceneSpec::generate(21), model.dim);
    let conds: Vec<(ConditionKind, &[f64])> = ConditionKind::ALL
        .iter()
        .map(|&k| (k, item.condition(k)))
        .collect();
    let (full, _) = sample(&system, &conds, &item.text, 2, 9, ControlMode::Full, Fourier::Off).unwrap();
    let (bare, _) = sample(&system, &conds, &item.text, 2, 9, ControlMode::BackboneOnly, Fourier::Off).unwrap();
    checks.push(("fresh control stack is a bit-exact no-op", full == bare));

    // Single-condition adaptation degenerates to the encoder output.
    let _guard = NoGradGuard::new();
    let single = [(ConditionKind::Depth, item.condition(ConditionKind::Depth))];
    let (sp, trace) = patch_adapt(&system.pam, &model.pam(), &single, &item.text, 1.0).unwrap();
    let enc = patchflow_core::pam::encode_condition(
        &system.pam,
        &model.pam(),
        item.condition(ConditionKind::Depth),
        ConditionKind::Depth,
    )
    .unwrap();
    let m = model.positions();
    checks.push((
        "single-condition adaptation equals the encoder output",
        sp.data() == enc.data() && trace.fractions(m)[ConditionKind::Depth.id()] == 1.0,
    ));

    // Report text round-trips.
    let report = EvalReport {
        label: "edge".into(),
        seed: 1,
        count: 1,
        ssim_mean: 0.25,
        ssim_median: 0.25,
        fractions: vec![(1.0, [1.0, 0.0, 0.0, 0.0])],
    };
    checks.push((
        "eval report text round-trips",
        EvalReport::from_text(&report.to_text()).unwrap() == report,
    ));

    checks
}

fn rand_seed(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}

fn run_selftest() -> CliResult<()> {
    let checks = selftest_checks();
    let mut failed = 0;
    for (name, ok) in &checks {
        println!("{} {}", if *ok { "pass" } else { "FAIL" }, name);
        failed += usize::from(!*ok);
    }
    println!("selftest: {} passed, {} failed", checks.len() - failed, failed);
    if failed > 0 {
        return Err(CliError {
            code: EXIT_BAD_CONFIG,
            kind: "selftest-failed",
            message: format!("{failed} invariant check(s) failed"),
        });
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenData(args) => run_gen_data(args),
        Command::TrainBackbone(args) => run_train_backbone(args),
        Command::TrainControl(args) => run_train_control(args),
        Command::Sample(args) => run_sample(args),
        Command::Eval(args) => run_eval(args),
        Command::TraceViz(args) => run_trace_viz(args),
        Command::Selftest => run_selftest(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = serde_json::json!({ "error": e.kind, "message": e.message });
            eprintln!("{record}");
            ExitCode::from(e.code)
        }
    }
}
