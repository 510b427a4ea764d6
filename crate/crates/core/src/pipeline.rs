//! Two-phase training, Euler sampling, condition dropout, checkpointing and
//! the Fourier frequency-correction ablation.
//!
//! Phase one pretrains the backbone alone on the flow-matching objective.
//! Phase two freezes the backbone and trains the adaptation module plus the
//! control network on the same objective through the controlled forward pass.
//!
//! Determinism: every training step draws from a fresh generator seeded by
//! `(run seed, step index)`, so resuming from a checkpoint replays the exact
//! stream an uninterrupted run would have seen; combined with f32-rounded
//! parameters and optimizer state, save/resume is bit-identical.

use crate::backbone::{forward, init_backbone, interpolate, target_velocity, to_image, BackboneConfig};
use crate::control::{control_forward, init_control, time_embed, ControlConfig, ControlSignals};
use crate::error::{Error, Result};
use crate::fft::{add_spectra, apply_mask, fft2, ifft2, low_pass_mask, scale_spectrum};
use crate::pam::{encode_condition, patch_adapt, Chosen, PamConfig, SelectionTrace};
use crate::params::{quantize_f32, ParameterStore};
use crate::synth::{derive_seed, patchify, ConditionKind, ImageSample};
use crate::tensor::{mse, NoGradGuard, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};
use std::path::Path;

// ── configuration ───────────────────────────────────────────────────────

/// Shared geometry for backbone, adaptation module and control network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConfig {
    pub canvas: usize,
    pub patch: usize,
    pub dim: usize,
    pub n_dsb: usize,
    pub n_ssb: usize,
    pub n_p: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { canvas: 32, patch: 2, dim: 64, n_dsb: 2, n_ssb: 4, n_p: 16 }
    }
}

impl ModelConfig {
    pub fn pam(&self) -> PamConfig {
        PamConfig { canvas: self.canvas, patch: self.patch, dim: self.dim, n_p: self.n_p }
    }

    pub fn backbone(&self) -> BackboneConfig {
        BackboneConfig {
            canvas: self.canvas,
            patch: self.patch,
            dim: self.dim,
            n_dsb: self.n_dsb,
            n_ssb: self.n_ssb,
        }
    }

    pub fn control(&self) -> ControlConfig {
        ControlConfig { dim: self.dim, n_dsb: self.n_dsb, n_ssb: self.n_ssb, positions: self.positions() }
    }

    pub fn grid(&self) -> usize {
        self.canvas / self.patch
    }

    pub fn positions(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn validate(&self) -> Result<()> {
        self.pam().validate()?;
        self.backbone().validate()?;
        self.control().validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Backbone,
    Control,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fourier {
    Off,
    On { alpha: f64, cutoff: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub phase: Phase,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    pub dropout: bool,
    pub fourier: Fourier,
    pub dataset_seed: u64,
    pub dataset_size: usize,
    pub model: ModelConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.batch == 0 {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if self.dataset_size == 0 {
            return Err(Error::InvalidConfig("dataset size must be >= 1".into()));
        }
        if let Fourier::On { alpha, cutoff } = self.fourier {
            if !alpha.is_finite() || cutoff <= 0.0 {
                return Err(Error::InvalidConfig("fourier parameters must be finite, cutoff > 0".into()));
            }
        }
        self.model.validate()
    }
}

// ── model bundle ────────────────────────────────────────────────────────

/// All three parameter stores plus the geometry that shaped them.
pub struct System {
    pub model: ModelConfig,
    pub backbone: ParameterStore,
    pub pam: ParameterStore,
    pub control: ParameterStore,
}

pub fn init_system(model: &ModelConfig, seed: u64) -> Result<System> {
    model.validate()?;
    let mut backbone = ParameterStore::new(true);
    init_backbone(&mut backbone, &model.backbone(), &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 1)));
    let mut pam = ParameterStore::new(true);
    crate::pam::init_pam(&mut pam, &model.pam(), &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 2)));
    let mut control = ParameterStore::new(true);
    init_control(&mut control, &model.control(), &mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 3)));
    Ok(System { model: *model, backbone, pam, control })
}

impl System {
    /// Applies the phase's freeze contract to the stores.
    pub fn apply_phase(&mut self, phase: Phase) {
        match phase {
            Phase::Backbone => {
                self.backbone.set_trainable(true);
                self.pam.set_trainable(false);
                self.control.set_trainable(false);
            }
            Phase::Control => {
                self.backbone.set_trainable(false);
                self.pam.set_trainable(true);
                self.control.set_trainable(true);
            }
        }
    }
}

// ── optimizer ───────────────────────────────────────────────────────────

/// AdamW with decoupled weight decay. First/second moments are f32-rounded
/// after every update so optimizer state survives checkpointing losslessly.
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub t: usize,
    pub m: BTreeMap<String, Vec<f64>>,
    pub v: BTreeMap<String, Vec<f64>>,
}

impl AdamW {
    pub fn new(lr: f64) -> AdamW {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            t: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    /// One update over every trainable store. Parameters without an
    /// accumulated gradient this step are treated as having gradient zero
    /// (their moments decay and weight decay still applies).
    pub fn step(&mut self, stores: &mut [(&str, &mut ParameterStore)]) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (prefix, store) in stores.iter_mut() {
            if !store.trainable() {
                continue;
            }
            let names: Vec<String> = store.names().cloned().collect();
            for name in names {
                let param = store.get(&name);
                let grad = param.grad().unwrap_or_else(|| vec![0.0; param.len()]);
                let key = format!("{prefix}/{name}");
                let m = self.m.entry(key.clone()).or_insert_with(|| vec![0.0; grad.len()]);
                let v = self.v.entry(key).or_insert_with(|| vec![0.0; grad.len()]);
                let mut theta = param.data().to_vec();
                for i in 0..grad.len() {
                    m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * grad[i];
                    v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
                    let mhat = m[i] / bc1;
                    let vhat = v[i] / bc2;
                    theta[i] -= self.lr * (mhat / (vhat.sqrt() + self.eps) + self.weight_decay * theta[i]);
                }
                quantize_f32(m);
                quantize_f32(v);
                store.set_data(&name, theta);
            }
        }
    }
}

// ── condition dropout ───────────────────────────────────────────────────

/// Keeps 3 of the 4 conditions: Keypoint always survives and one of
/// {Edge, Depth, Sketch} is dropped uniformly.
pub fn dropout_subset<R: Rng>(rng: &mut R) -> Vec<ConditionKind> {
    let drop = ConditionKind::ALL[rng.gen_range(0..3usize)];
    ConditionKind::ALL.iter().copied().filter(|k| *k != drop).collect()
}

fn conditions_of<'a>(sample: &'a ImageSample, kinds: &[ConditionKind]) -> Vec<(ConditionKind, &'a [f64])> {
    kinds.iter().map(|&k| (k, sample.condition(k))).collect()
}

// ── Fourier frequency correction ────────────────────────────────────────

/// Splits each channel's spatial field into low/high bands around DC and
/// rescales them: low gets `alpha * t`, high gets `1 / min(t, 2/3)`.
/// `x` is `[m, d]` row-major with `m = grid * grid` positions.
pub fn fourier_correct_data(
    x: &[f64],
    grid: usize,
    d: usize,
    t: f64,
    alpha: f64,
    cutoff: f64,
) -> Result<Vec<f64>> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::TimestepOutOfRange(t));
    }
    let m = grid * grid;
    if x.len() != m * d {
        return Err(Error::ShapeMismatch {
            op: "fourier_correct",
            detail: format!("{} values for {}x{} grid with {} channels", x.len(), grid, grid, d),
        });
    }
    let mask = low_pass_mask(grid, grid, cutoff);
    let low_scale = alpha * t;
    // Branch instead of 1/min(t, 2/3): the clamped value rounds so that
    // 1.0 / (2.0/3.0) = 1.5000000000000002, while the scale must be exactly 3/2.
    let high_scale = if t >= 2.0 / 3.0 { 1.5 } else { 1.0 / t };
    let mut out = vec![0.0; x.len()];
    let mut field = vec![0.0; m];
    for ch in 0..d {
        for p in 0..m {
            field[p] = x[p * d + ch];
        }
        let f = fft2(&field, grid, grid)?;
        let low = scale_spectrum(&apply_mask(&f, &mask), low_scale);
        let comp: Vec<f64> = mask.iter().map(|&v| 1.0 - v).collect();
        let high = scale_spectrum(&apply_mask(&f, &comp), high_scale);
        let corrected = ifft2(&add_spectra(&low, &high))?;
        for p in 0..m {
            out[p * d + ch] = corrected[p];
        }
    }
    Ok(out)
}

/// Differentiable wrapper: the correction is a real symmetric linear map of
/// the input (mask-diagonal in frequency space), hence self-adjoint — the
/// backward pass applies the same transform to the output gradient.
pub fn fourier_correct_tensor(
    x: &Tensor,
    grid: usize,
    t: f64,
    alpha: f64,
    cutoff: f64,
) -> Result<Tensor> {
    let shape = x.shape().to_vec();
    assert_eq!(shape.len(), 2, "fourier_correct_tensor: expected [m, d]");
    let d = shape[1];
    let data = fourier_correct_data(x.data(), grid, d, t, alpha, cutoff)?;
    Ok(Tensor::map_unary(x, shape, data, move |g| {
        fourier_correct_data(g, grid, d, t, alpha, cutoff).expect("adjoint transform on gradient")
    }))
}

fn maybe_fourier(signals: ControlSignals, model: &ModelConfig, t: f64, fourier: Fourier) -> Result<ControlSignals> {
    match fourier {
        Fourier::Off => Ok(signals),
        Fourier::On { alpha, cutoff } => {
            let slots = signals
                .slots
                .into_iter()
                .map(|s| fourier_correct_tensor(&s, model.grid(), t, alpha, cutoff))
                .collect::<Result<Vec<_>>>()?;
            Ok(ControlSignals { slots })
        }
    }
}

// ── loss ────────────────────────────────────────────────────────────────

/// Flow-matching loss for one sample at timestep `t` under the given noise.
/// In the control phase the prediction runs through patch adaptation and the
/// control network; in the backbone phase the backbone runs alone.
pub fn sample_loss(
    system: &System,
    cfg: &TrainConfig,
    sample: &ImageSample,
    kinds: &[ConditionKind],
    t: f64,
    noise: &[f64],
) -> Result<Tensor> {
    let model = &system.model;
    let z_t = interpolate(&sample.image, noise, t)?;
    let target = patchify(&target_velocity(&sample.image, noise)?, model.canvas, model.patch)?;
    let pred = match cfg.phase {
        Phase::Backbone => forward(&system.backbone, &model.backbone(), &z_t, t, &sample.text, None)?,
        Phase::Control => {
            let conds = conditions_of(sample, kinds);
            let (sp, _) = patch_adapt(&system.pam, &model.pam(), &conds, &sample.text, t)?;
            let ot = time_embed(&system.pam, "pam/time", t, model.dim)?;
            let signals = control_forward(&system.control, &model.control(), &sp, &sample.text, &ot)?;
            let signals = maybe_fourier(signals, model, t, cfg.fourier)?;
            forward(&system.backbone, &model.backbone(), &z_t, t, &sample.text, Some(&signals))?
        }
    };
    Ok(mse(&pred, &target))
}

fn draw_noise<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

// ── training loop ───────────────────────────────────────────────────────

/// Runs `steps` optimization steps starting at `start_step`, returning the
/// (step, loss) log. The per-step generator is derived from
/// `(cfg.seed, step)`, so any contiguous split of steps replays identically.
pub fn train(
    system: &mut System,
    opt: &mut AdamW,
    cfg: &TrainConfig,
    dataset: &[ImageSample],
    start_step: usize,
    steps: usize,
) -> Result<Vec<(usize, f64)>> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("empty dataset".into()));
    }
    system.apply_phase(cfg.phase);
    let canvas2 = system.model.canvas * system.model.canvas;
    let mut log = Vec::with_capacity(steps);
    let mut initial: Option<f64> = None;
    let mut over_budget = 0usize;
    for step in start_step..start_step + steps {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, step as u64));
        let mut total: Option<Tensor> = None;
        for _ in 0..cfg.batch {
            let idx = rng.gen_range(0..dataset.len());
            // 1 - u maps the uniform draw onto (0, 1], keeping the Fourier
            // correction's t > 0 requirement satisfied.
            let t = 1.0 - rng.gen::<f64>();
            let noise = draw_noise(&mut rng, canvas2);
            let kinds: Vec<ConditionKind> = if cfg.dropout && cfg.phase == Phase::Control {
                dropout_subset(&mut rng)
            } else {
                ConditionKind::ALL.to_vec()
            };
            let loss = sample_loss(system, cfg, &dataset[idx], &kinds, t, &noise)?;
            total = Some(match total {
                None => loss,
                Some(acc) => acc.add(&loss),
            });
        }
        let total = total.unwrap().scale(1.0 / cfg.batch as f64);
        let value = total.item();
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss at step {step}")));
        }
        let init = *initial.get_or_insert(value);
        if value > 10.0 * init {
            over_budget += 1;
            if over_budget >= 100 {
                return Err(Error::Diverged { step, loss: value, initial: init });
            }
        } else {
            over_budget = 0;
        }
        total.backward();
        opt.step(&mut [
            ("backbone", &mut system.backbone),
            ("pam", &mut system.pam),
            ("control", &mut system.control),
        ]);
        log.push((step, value));
    }
    Ok(log)
}

// ── sampling ────────────────────────────────────────────────────────────

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlMode {
    Full,
    BackboneOnly,
    RandomSelection,
}

/// Assigns every position a uniformly random condition and copies that
/// condition's encoded row — the ablation comparator for patch adaptation.
pub fn random_selection_baseline(
    store: &ParameterStore,
    cfg: &PamConfig,
    conditions: &[(ConditionKind, &[f64])],
    seed: u64,
    t: f64,
) -> Result<(Tensor, SelectionTrace)> {
    cfg.validate()?;
    if conditions.is_empty() {
        return Err(Error::InvalidConfig("baseline needs at least one condition".into()));
    }
    let feats = conditions
        .iter()
        .map(|(k, map)| encode_condition(store, cfg, map, *k))
        .collect::<Result<Vec<_>>>()?;
    let m = cfg.positions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(m);
    let mut chosen = Vec::with_capacity(m);
    for p in 0..m {
        let k = rng.gen_range(0..conditions.len());
        rows.push(feats[k].select_rows(&[p]));
        chosen.push(Chosen { position: p, condition: conditions[k].0, score: 0.0 });
    }
    let positions: Vec<usize> = (0..m).collect();
    let sp = Tensor::zeros(vec![m, cfg.dim]).add_rows_at(&positions, &Tensor::concat_rows(&rows));
    let iterations = chosen.chunks(cfg.n_p).map(|c| c.to_vec()).collect();
    Ok((sp, SelectionTrace { t, iterations }))
}

/// Euler sampling from pure noise over a uniform grid of `steps` timesteps.
/// Returns the final image clamped to `[0, 1]` and one selection trace per
/// step (empty in backbone-only mode).
pub fn sample(
    system: &System,
    conditions: &[(ConditionKind, &[f64])],
    y: &Tensor,
    steps: usize,
    seed: u64,
    mode: ControlMode,
    fourier: Fourier,
) -> Result<(Vec<f64>, Vec<SelectionTrace>)> {
    if steps < 1 {
        return Err(Error::InvalidConfig("sampling needs at least one step".into()));
    }
    let _guard = NoGradGuard::new();
    let model = &system.model;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z = draw_noise(&mut rng, model.canvas * model.canvas);
    let dt = 1.0 / steps as f64;
    let mut traces = Vec::new();
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let pred = match mode {
            ControlMode::BackboneOnly => {
                forward(&system.backbone, &model.backbone(), &z, t, y, None)?
            }
            ControlMode::Full | ControlMode::RandomSelection => {
                let (sp, trace) = if mode == ControlMode::Full {
                    patch_adapt(&system.pam, &model.pam(), conditions, y, t)?
                } else {
                    random_selection_baseline(&system.pam, &model.pam(), conditions, derive_seed(seed, k as u64), t)?
                };
                traces.push(trace);
                let ot = time_embed(&system.pam, "pam/time", t, model.dim)?;
                let signals = control_forward(&system.control, &model.control(), &sp, y, &ot)?;
                let signals = maybe_fourier(signals, model, t, fourier)?;
                forward(&system.backbone, &model.backbone(), &z, t, y, Some(&signals))?
            }
        };
        let v = to_image(&model.backbone(), &pred)?;
        for (zi, vi) in z.iter_mut().zip(&v) {
            *zi -= dt * vi;
        }
    }
    for zi in z.iter_mut() {
        *zi = zi.clamp(0.0, 1.0);
    }
    Ok((z, traces))
}

// ── checkpointing ───────────────────────────────────────────────────────

pub const CHECKPOINT_VERSION: &str = "patchflow-checkpoint v1";

/// Everything needed to continue a run: parameters, optimizer state, config
/// echo and the step counter. The RNG needs no serialized state because the
/// per-step generator is derived from `(seed, step)`.
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: usize,
    pub system: System,
    pub opt: AdamW,
}

impl Checkpoint {
    pub fn fresh(config: TrainConfig, system: System) -> Checkpoint {
        let opt = AdamW::new(config.lr);
        Checkpoint { config, step: 0, system, opt }
    }

    pub fn train(&mut self, dataset: &[ImageSample], steps: usize) -> Result<Vec<(usize, f64)>> {
        let log = train(&mut self.system, &mut self.opt, &self.config, dataset, self.step, steps)?;
        self.step += steps;
        Ok(log)
    }

    fn meta_string(&self) -> String {
        let c = &self.config;
        let m = &c.model;
        let mut s = String::new();
        s.push_str(CHECKPOINT_VERSION);
        s.push('\n');
        s.push_str(&format!(
            "phase {}\n",
            match c.phase {
                Phase::Backbone => "backbone",
                Phase::Control => "control",
            }
        ));
        s.push_str(&format!("step {}\n", self.step));
        s.push_str(&format!("opt_t {}\n", self.opt.t));
        s.push_str(&format!("seed {}\n", c.seed));
        s.push_str(&format!("lr {}\n", c.lr));
        s.push_str(&format!("batch {}\n", c.batch));
        s.push_str(&format!("dropout {}\n", u8::from(c.dropout)));
        match c.fourier {
            Fourier::Off => s.push_str("fourier off\n"),
            Fourier::On { alpha, cutoff } => s.push_str(&format!("fourier on {alpha} {cutoff}\n")),
        }
        s.push_str(&format!("dataset_seed {}\n", c.dataset_seed));
        s.push_str(&format!("dataset_size {}\n", c.dataset_size));
        s.push_str(&format!(
            "model {} {} {} {} {} {}\n",
            m.canvas, m.patch, m.dim, m.n_dsb, m.n_ssb, m.n_p
        ));
        s
    }

    /// Writes the parameter container to `path` and a structured-text
    /// metadata sidecar to `path + ".meta"`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut merged = ParameterStore::new(false);
        for (prefix, store) in [
            ("backbone", &self.system.backbone),
            ("pam", &self.system.pam),
            ("control", &self.system.control),
        ] {
            for (name, t) in store.iter() {
                merged.insert(&format!("{prefix}/{name}"), t.shape().to_vec(), t.data().to_vec());
            }
        }
        for (key, buf) in &self.opt.m {
            merged.insert(&format!("opt/m/{key}"), vec![buf.len()], buf.clone());
        }
        for (key, buf) in &self.opt.v {
            merged.insert(&format!("opt/v/{key}"), vec![buf.len()], buf.clone());
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        merged.save(&mut f)?;
        f.flush()?;
        std::fs::write(meta_path(path), self.meta_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let meta = std::fs::read_to_string(meta_path(path))
            .map_err(|e| Error::Checkpoint(format!("missing metadata sidecar: {e}")))?;
        let (config, step, opt_t) = parse_meta(&meta)?;
        let file = std::fs::File::open(path)
            .map_err(|e| Error::Checkpoint(format!("missing checkpoint file: {e}")))?;
        let merged = ParameterStore::load(&mut std::io::BufReader::new(file), false)?;

        let mut system = System {
            model: config.model,
            backbone: ParameterStore::new(false),
            pam: ParameterStore::new(false),
            control: ParameterStore::new(false),
        };
        let mut opt = AdamW::new(config.lr);
        opt.t = opt_t;
        for (name, t) in merged.iter() {
            let (head, rest) = name
                .split_once('/')
                .ok_or_else(|| Error::Checkpoint(format!("malformed parameter path {name:?}")))?;
            match head {
                "backbone" => system.backbone.insert(rest, t.shape().to_vec(), t.data().to_vec()),
                "pam" => system.pam.insert(rest, t.shape().to_vec(), t.data().to_vec()),
                "control" => system.control.insert(rest, t.shape().to_vec(), t.data().to_vec()),
                "opt" => {
                    let (kind, key) = rest
                        .split_once('/')
                        .ok_or_else(|| Error::Checkpoint(format!("malformed optimizer path {name:?}")))?;
                    let buf = t.data().to_vec();
                    match kind {
                        "m" => drop(opt.m.insert(key.to_string(), buf)),
                        "v" => drop(opt.v.insert(key.to_string(), buf)),
                        other => return Err(Error::Checkpoint(format!("unknown optimizer slot {other:?}"))),
                    }
                }
                other => return Err(Error::Checkpoint(format!("unknown store prefix {other:?}"))),
            }
        }
        system.apply_phase(config.phase);
        Ok(Checkpoint { config, step, system, opt })
    }
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".meta");
    std::path::PathBuf::from(s)
}

fn parse_field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    let rest = line
        .strip_prefix(key)
        .and_then(|r| r.strip_prefix(' '))
        .ok_or_else(|| Error::Parse(format!("expected `{key} ...`, got {line:?}")))?;
    rest.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad value for {key}: {rest:?}")))
}

fn parse_meta(meta: &str) -> Result<(TrainConfig, usize, usize)> {
    let mut lines = meta.lines();
    let header = lines.next().unwrap_or_default();
    if header != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint header {header:?}")));
    }
    let mut next = || lines.next().ok_or_else(|| Error::Parse("truncated checkpoint metadata".into()));
    let phase_line = next()?;
    let phase = match phase_line.strip_prefix("phase ").map(str::trim) {
        Some("backbone") => Phase::Backbone,
        Some("control") => Phase::Control,
        _ => return Err(Error::Parse(format!("bad phase line {phase_line:?}"))),
    };
    let step: usize = parse_field(next()?, "step")?;
    let opt_t: usize = parse_field(next()?, "opt_t")?;
    let seed: u64 = parse_field(next()?, "seed")?;
    let lr: f64 = parse_field(next()?, "lr")?;
    let batch: usize = parse_field(next()?, "batch")?;
    let dropout: u8 = parse_field(next()?, "dropout")?;
    let fourier_line = next()?;
    let fourier = match fourier_line
        .strip_prefix("fourier ")
        .map(|r| r.split_whitespace().collect::<Vec<_>>())
    {
        Some(parts) if parts == ["off"] => Fourier::Off,
        Some(parts) if parts.len() == 3 && parts[0] == "on" => Fourier::On {
            alpha: parts[1].parse().map_err(|_| Error::Parse("bad fourier alpha".into()))?,
            cutoff: parts[2].parse().map_err(|_| Error::Parse("bad fourier cutoff".into()))?,
        },
        _ => return Err(Error::Parse(format!("bad fourier line {fourier_line:?}"))),
    };
    let dataset_seed: u64 = parse_field(next()?, "dataset_seed")?;
    let dataset_size: usize = parse_field(next()?, "dataset_size")?;
    let model_line = next()?;
    let nums: Vec<usize> = model_line
        .strip_prefix("model ")
        .ok_or_else(|| Error::Parse(format!("bad model line {model_line:?}")))?
        .split_whitespace()
        .map(|v| v.parse().map_err(|_| Error::Parse("bad model extent".into())))
        .collect::<Result<_>>()?;
    if nums.len() != 6 {
        return Err(Error::Parse("model line needs 6 extents".into()));
    }
    let model = ModelConfig {
        canvas: nums[0],
        patch: nums[1],
        dim: nums[2],
        n_dsb: nums[3],
        n_ssb: nums[4],
        n_p: nums[5],
    };
    let config = TrainConfig {
        phase,
        lr,
        batch,
        seed,
        dropout: dropout != 0,
        fourier,
        dataset_seed,
        dataset_size,
        model,
    };
    config.validate()?;
    Ok((config, step, opt_t))
}

/// Writes the loss log as `step loss` lines under a version header.
pub fn write_loss_log<W: Write>(w: &mut W, log: &[(usize, f64)]) -> Result<()> {
    writeln!(w, "patchflow-losslog v1")?;
    for (step, loss) in log {
        writeln!(w, "{step} {loss}")?;
    }
    Ok(())
}

pub fn read_loss_log<R: BufRead>(r: R) -> Result<Vec<(usize, f64)>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty loss log".into()))??;
    if header != "patchflow-losslog v1" {
        return Err(Error::Parse(format!("unsupported loss log header {header:?}")));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        let mut parts = line.split_whitespace();
        let step = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad loss log line {line:?}")))?;
        let loss = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad loss log line {line:?}")))?;
        out.push((step, loss));
    }
    Ok(out)
}
