//! The acceptance suite: twelve end-to-end properties of the full system,
//! one printed pass/fail line each. Run with `--nocapture` to see the lines
//! as they complete; the test fails if any criterion fails.
//!
//! The heavy criteria (8-11) share one trained artifact set and together
//! take tens of minutes on a single core; everything else is seconds.

use patchflow_core::backbone::{interpolate, target_velocity};
use patchflow_core::eval::{eval_run, EvalReport};
use patchflow_core::fft::{apply_mask, fft2, high_band_energy_fraction, ifft2, low_pass_mask};
use patchflow_core::gradcheck::grad_check;
use patchflow_core::pam::{
    encode_condition, init_pam, isb_forward, patch_adapt, selection_histogram, PamConfig,
    SelectionTrace,
};
use patchflow_core::pipeline::{
    fourier_correct_data, init_system, sample, sample_loss, AdamW, Checkpoint, ControlMode,
    Fourier, ModelConfig, Phase, System, TrainConfig,
};
use patchflow_core::select::top_r;
use patchflow_core::synth::{derive_seed, make_dataset};
use patchflow_core::tensor::mse;
use patchflow_core::{ConditionKind, ImageSample, NoGradGuard, ParameterStore, SceneSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

// ── shared geometry ─────────────────────────────────────────────────────

/// Geometry for the trained-system criteria (8-11). The smoke criterion pins
/// lr 2e-5, 500 steps and 256 samples; the geometry itself is free, and this
/// one trains a backbone worth correcting in ~2 minutes on one core.
fn train_model() -> ModelConfig {
    ModelConfig { canvas: 32, patch: 4, dim: 32, n_dsb: 1, n_ssb: 2, n_p: 16 }
}

/// Small geometry for the exactness criteria.
fn tiny_model() -> ModelConfig {
    ModelConfig { canvas: 32, patch: 8, dim: 16, n_dsb: 1, n_ssb: 1, n_p: 16 }
}

fn gauss(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

struct Outcome {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn report(out: &Outcome) {
    println!(
        "criterion {:2} [{}]: {} — {}",
        out.id,
        out.name,
        if out.pass { "pass" } else { "FAIL" },
        out.detail
    );
}

// ── criterion 1: zero-init equivalence ──────────────────────────────────

fn criterion_1() -> Outcome {
    let model = tiny_model();
    let mut pass = true;
    for set in 0..20u64 {
        let system = init_system(&model, 100 + set).unwrap();
        let item = ImageSample::from_spec(SceneSpec::generate(500 + set), model.dim);
        let conds: Vec<(ConditionKind, &[f64])> = ConditionKind::ALL
            .iter()
            .map(|&k| (k, item.condition(k)))
            .collect();
        let seed = derive_seed(9000, set);
        let (full, _) = sample(&system, &conds, &item.text, 25, seed, ControlMode::Full, Fourier::Off).unwrap();
        let (bare, _) = sample(&system, &conds, &item.text, 25, seed, ControlMode::BackboneOnly, Fourier::Off).unwrap();
        if full
            .iter()
            .zip(&bare)
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            pass = false;
            break;
        }
    }
    Outcome {
        id: 1,
        name: "zero-init equivalence",
        pass,
        detail: "20 condition sets, 25-step sampling, bit-compared".into(),
    }
}

// ── criterion 2: partition invariant over 1000 patch_adapt calls ────────

fn criterion_2() -> Outcome {
    let cfg = PamConfig { canvas: 32, patch: 2, dim: 4, n_p: 16 };
    assert_eq!(cfg.positions(), 256);
    assert_eq!(cfg.iterations(), 16);
    let _guard = NoGradGuard::new();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let started = Instant::now();
    let mut pass = true;
    let mut detail = String::new();
    let mut store = ParameterStore::new(false);
    'outer: for call in 0..1000usize {
        if call % 25 == 0 {
            store = ParameterStore::new(false);
            init_pam(&mut store, &cfg, &mut rng);
        }
        let n = 1 + call % 4;
        let kinds = &ConditionKind::ALL[..n];
        let maps: Vec<Vec<f64>> = (0..n).map(|_| gauss(&mut rng, 32 * 32)).collect();
        let conds: Vec<(ConditionKind, &[f64])> = kinds
            .iter()
            .zip(&maps)
            .map(|(&k, m)| (k, m.as_slice()))
            .collect();
        let y = Tensor::randn(vec![3, cfg.dim], 1.0, &mut rng);
        let t = 1.0 - rng.gen::<f64>();
        let (_, trace) = patch_adapt(&store, &cfg, &conds, &y, t).unwrap();
        if trace.iterations.len() != 16 || trace.iterations.iter().any(|it| it.len() != 16) {
            pass = false;
            detail = format!("call {call}: wrong iteration structure");
            break 'outer;
        }
        let mut seen = vec![false; 256];
        for chosen in trace.iterations.iter().flatten() {
            if seen[chosen.position] {
                pass = false;
                detail = format!("call {call}: position {} assigned twice", chosen.position);
                break 'outer;
            }
            seen[chosen.position] = true;
        }
        if !seen.iter().all(|&s| s) {
            pass = false;
            detail = format!("call {call}: not all positions covered");
            break 'outer;
        }
    }
    if pass {
        detail = format!(
            "1000 calls over 256 positions, n cycled 1..=4, {:.1}s",
            started.elapsed().as_secs_f64()
        );
    }
    Outcome { id: 2, name: "partition invariant", pass, detail }
}

// ── criterion 3: single-condition degeneracy ────────────────────────────

fn criterion_3() -> Outcome {
    let cfg = PamConfig { canvas: 32, patch: 4, dim: 8, n_p: 16 };
    let _guard = NoGradGuard::new();
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut store = ParameterStore::new(false);
    init_pam(&mut store, &cfg, &mut rng);
    let y = Tensor::randn(vec![2, cfg.dim], 1.0, &mut rng);
    let mut pass = true;
    for i in 0..100 {
        let map = gauss(&mut rng, 32 * 32);
        let kind = ConditionKind::ALL[i % 4];
        let (sp, _) = patch_adapt(&store, &cfg, &[(kind, map.as_slice())], &y, 0.5).unwrap();
        let enc = encode_condition(&store, &cfg, &map, kind).unwrap();
        if sp
            .data()
            .iter()
            .zip(enc.data())
            .any(|(a, b)| a.to_bits() != b.to_bits())
        {
            pass = false;
            break;
        }
    }
    Outcome {
        id: 3,
        name: "single-condition degeneracy",
        pass,
        detail: "n=1 SP bit-equals encoder output on 100 random inputs".into(),
    }
}

// ── criterion 4: top_r vs sort oracle ───────────────────────────────────

/// Independent oracle: repeated max-scan with the documented tie-break
/// (higher value first, then lower index).
fn top_r_oracle(values: &[f64], r: usize) -> Vec<usize> {
    let mut taken = vec![false; values.len()];
    let mut out = Vec::with_capacity(r);
    for _ in 0..r {
        let mut best: Option<usize> = None;
        for i in 0..values.len() {
            if taken[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) if values[i] > values[b] => Some(i),
                Some(b) => Some(b),
            };
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let mut pass = true;
    for case in 0..10_000usize {
        let len = 1 + rng.gen_range(0..40);
        // Draw from a small lattice so ties are common.
        let values: Vec<f64> = (0..len).map(|_| (rng.gen_range(-4i32..5) as f64) * 0.25).collect();
        let r = rng.gen_range(0..=len);
        if top_r(&values, r).unwrap() != top_r_oracle(&values, r) {
            pass = false;
            return Outcome {
                id: 4,
                name: "top-r oracle",
                pass,
                detail: format!("mismatch on case {case}"),
            };
        }
    }
    Outcome {
        id: 4,
        name: "top-r oracle",
        pass,
        detail: "10^4 random vectors with lattice ties".into(),
    }
}

// ── criterion 5: gradient checks ────────────────────────────────────────

fn criterion_5() -> Outcome {
    let started = Instant::now();
    let mut worst: f64 = 0.0;
    let mut worst_site = String::new();
    let track = |site: &str, err: f64, worst: &mut f64, worst_site: &mut String| {
        if err > *worst {
            *worst = err;
            *worst_site = site.to_string();
        }
    };

    let model = tiny_model();
    let system = init_system(&model, 50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(51);

    // ISB scoring path through the adaptation store.
    {
        let cfg = model.pam();
        let x = Tensor::randn(vec![cfg.positions(), cfg.dim], 1.0, &mut rng);
        let y = Tensor::randn(vec![2, cfg.dim], 1.0, &mut rng);
        let ot = Tensor::randn(vec![1, cfg.dim], 1.0, &mut rng);
        let probe = Tensor::randn(vec![cfg.positions(), cfg.dim], 1.0, &mut rng);
        for param in ["pam/isb/edge/attn/q/w", "pam/isb/edge/ff1/w", "pam/isb/edge/cross/out/w"] {
            let x0 = system.pam.get(param).detach();
            let f = |p: &Tensor| {
                let s = system.pam.substitute(param, p.clone());
                isb_forward(&s, "pam/isb/edge", &x, &y, &ot).mul(&probe).sum_all()
            };
            track(&format!("isb:{param}"), grad_check(f, &x0, 1e-5), &mut worst, &mut worst_site);
        }
    }

    // Zero DSB/SSB through control_forward + injection + loss, plus backbone
    // blocks, all through the full control-phase loss.
    {
        let cfg = TrainConfig {
            phase: Phase::Control,
            lr: 1e-3,
            batch: 1,
            seed: 52,
            dropout: false,
            fourier: Fourier::Off,
            dataset_seed: 1,
            dataset_size: 1,
            model,
        };
        let item = ImageSample::from_spec(SceneSpec::generate(53), model.dim);
        let noise = gauss(&mut rng, 32 * 32);
        for (store_name, param) in [
            ("control", "ctrl/dsb0/img/attn/v/w"),
            ("control", "ctrl/dsb0/img/ff2/w"),
            ("control", "ctrl/ssb0/attn/out/w"),
            ("control", "ctrl/in/w"),
            ("pam", "pam/enc/edge/w"),
            ("pam", "pam/time/mlp1/w"),
            ("backbone", "bb/head/w"),
            ("backbone", "bb/dsb0/img/attn/q/w"),
        ] {
            let base = match store_name {
                "control" => &system.control,
                "pam" => &system.pam,
                _ => &system.backbone,
            };
            let x0 = base.get(param).detach();
            let f = |p: &Tensor| {
                let sys = System {
                    model,
                    backbone: if store_name == "backbone" {
                        system.backbone.substitute(param, p.clone())
                    } else {
                        system.backbone.clone()
                    },
                    pam: if store_name == "pam" {
                        system.pam.substitute(param, p.clone())
                    } else {
                        system.pam.clone()
                    },
                    control: if store_name == "control" {
                        system.control.substitute(param, p.clone())
                    } else {
                        system.control.clone()
                    },
                };
                sample_loss(&sys, &cfg, &item, &ConditionKind::ALL, 0.4, &noise).unwrap()
            };
            track(&format!("loss:{param}"), grad_check(f, &x0, 1e-5), &mut worst, &mut worst_site);
        }
    }

    Outcome {
        id: 5,
        name: "gradient checks",
        pass: worst < 1e-4,
        detail: format!(
            "worst rel err {:.2e} at {} ({:.0}s)",
            worst,
            worst_site,
            started.elapsed().as_secs_f64()
        ),
    }
}

// ── criterion 6: flow endpoints and loss zeros ──────────────────────────

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    let x0 = gauss(&mut rng, 64);
    let noise = gauss(&mut rng, 64);
    let at0 = interpolate(&x0, &noise, 0.0).unwrap();
    let at1 = interpolate(&x0, &noise, 1.0).unwrap();
    let endpoints = at0
        .iter()
        .zip(&x0)
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && at1.iter().zip(&noise).all(|(a, b)| a.to_bits() == b.to_bits());
    let v = target_velocity(&x0, &noise).unwrap();
    let vt = Tensor::from_vec(vec![64], v);
    let zero = mse(&vt, &vt).item();
    let pass = endpoints && zero.abs() <= 1e-12;
    Outcome {
        id: 6,
        name: "flow endpoints / loss zero",
        pass,
        detail: format!("endpoints exact, perfect-predictor loss {zero:.1e}"),
    }
}

// ── criterion 7: fourier ablation algebra ───────────────────────────────

fn criterion_7() -> Outcome {
    let grid = 16usize;
    let cutoff = 2.0;
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut pass = true;
    let mut detail = String::new();

    // High-band scale is exactly 3/2 for t >= 2/3: feed a field with no
    // energy inside the low mask and demand out = 1.5 * in bit-tight.
    let mask = low_pass_mask(grid, grid, cutoff);
    'scale: for &t in &[2.0 / 3.0, 0.75, 0.9, 1.0] {
        let f = gauss(&mut rng, grid * grid);
        let spec = fft2(&f, grid, grid).unwrap();
        let comp: Vec<f64> = mask.iter().map(|&v| 1.0 - v).collect();
        let high_only = ifft2(&apply_mask(&spec, &comp)).unwrap();
        let corrected = fourier_correct_data(&high_only, grid, 1, t, 1.0, cutoff).unwrap();
        // alpha*t multiplies an (empty) low band; the output must be exactly
        // the high band times 3/2 up to FFT round-trip noise.
        for (o, i) in corrected.iter().zip(&high_only) {
            if (o - 1.5 * i).abs() > 1e-9 {
                pass = false;
                detail = format!("high-band scale off at t={t}: {o} vs {}", 1.5 * i);
                break 'scale;
            }
        }
    }

    // Parseval split: masked + complementary band energies sum to the total.
    if pass {
        for _ in 0..10 {
            let f = gauss(&mut rng, grid * grid);
            let spec = fft2(&f, grid, grid).unwrap();
            let comp: Vec<f64> = mask.iter().map(|&v| 1.0 - v).collect();
            let low = apply_mask(&spec, &mask).energy();
            let high = apply_mask(&spec, &comp).energy();
            let total = spec.energy();
            if ((low + high) - total).abs() > 1e-9 * total.max(1.0) {
                pass = false;
                detail = format!("Parseval split violated: {low} + {high} != {total}");
                break;
            }
        }
    }

    // Full-spectrum low mask: cutoff beyond Nyquist makes the correction act
    // as a pure alpha*t scale; round-trip against the direct scaling.
    if pass {
        let t = 0.37;
        let alpha = 1.0;
        let f = gauss(&mut rng, grid * grid);
        let wide = (grid * grid) as f64; // cutoff radius covering everything
        let corrected = fourier_correct_data(&f, grid, 1, t, alpha, wide).unwrap();
        for (o, i) in corrected.iter().zip(&f) {
            if (o - alpha * t * i).abs() > 1e-9 {
                pass = false;
                detail = format!("full-spectrum round-trip off: {o} vs {}", alpha * t * i);
                break;
            }
        }
    }

    // And the high-band fraction helper sees a pure low field as all-low.
    if pass {
        let flat = vec![1.0; grid * grid];
        let frac = high_band_energy_fraction(&flat, grid, grid, cutoff).unwrap();
        if frac > 1e-12 {
            pass = false;
            detail = format!("DC field has high-band fraction {frac}");
        }
    }

    if pass {
        detail = "scale 3/2 exact, Parseval within 1e-9, round-trip within 1e-9".into();
    }
    Outcome { id: 7, name: "fourier algebra", pass, detail }
}

// ── criteria 8-11: trained artifacts ────────────────────────────────────

struct Artifacts {
    model: ModelConfig,
    smoke_log: Vec<(usize, f64)>,
    smoke_elapsed: f64,
    trained: System,
    heldout: Vec<ImageSample>,
}

fn build_artifacts() -> Artifacts {
    let model = train_model();
    let dataset = make_dataset(1000, 256, model.dim);

    // Phase 1: backbone pretraining.
    let cfg1 = TrainConfig {
        phase: Phase::Backbone,
        lr: 3e-3,
        batch: 8,
        seed: 7,
        dropout: false,
        fourier: Fourier::Off,
        dataset_seed: 1000,
        dataset_size: 256,
        model,
    };
    let started = Instant::now();
    let mut bb = Checkpoint::fresh(cfg1.clone(), init_system(&model, 42).unwrap());
    bb.train(&dataset, 3000).unwrap();

    // Criterion 8 run: fresh control stack, pinned lr 2e-5, 500 steps.
    let cfg_smoke = TrainConfig {
        phase: Phase::Control,
        lr: 2e-5,
        batch: 32,
        seed: 8,
        dropout: false,
        ..cfg1.clone()
    };
    let mut smoke_sys = init_system(&model, 43).unwrap();
    smoke_sys.backbone = bb.system.backbone.clone();
    let mut smoke = Checkpoint {
        config: cfg_smoke,
        step: 0,
        system: smoke_sys,
        opt: AdamW::new(2e-5),
    };
    let smoke_log = smoke.train(&dataset, 500).unwrap();
    let smoke_elapsed = started.elapsed().as_secs_f64();

    // Criteria 9-11 run: fresh control stack, practical lr, condition
    // dropout. The lr stays well below the smoke run's regime scaled up:
    // at 1e-3 the gain-amplified zero blocks blow the control residuals up
    // to ~1e5 rms, the backbone's pre-norm layer norms then erase the
    // latent along with the scale, and sampling collapses even though the
    // teacher-forced loss keeps falling. 2e-4 stays in the cooperative
    // regime (residual rms stays well under the token scale).
    let cfg_full = TrainConfig {
        phase: Phase::Control,
        lr: 2e-4,
        batch: 8,
        seed: 9,
        dropout: true,
        ..cfg1.clone()
    };
    let mut full_sys = init_system(&model, 44).unwrap();
    full_sys.backbone = bb.system.backbone.clone();
    let mut full = Checkpoint {
        config: cfg_full,
        step: 0,
        system: full_sys,
        opt: AdamW::new(2e-4),
    };
    full.train(&dataset, 6000).unwrap();

    let heldout = make_dataset(777_000, 64, model.dim);
    Artifacts {
        model,
        smoke_log,
        smoke_elapsed,
        trained: full.system,
        heldout,
    }
}

fn moving_average(log: &[(usize, f64)], upto: usize, window: usize) -> f64 {
    let lo = upto.saturating_sub(window);
    let slice = &log[lo..upto];
    slice.iter().map(|(_, l)| l).sum::<f64>() / slice.len() as f64
}

fn criterion_8(arts: &Artifacts, elapsed: f64) -> Outcome {
    let log = &arts.smoke_log;
    let start = moving_average(log, 10, 10);
    let end = moving_average(log, log.len(), 10);
    let drop = 1.0 - end / start;
    Outcome {
        id: 8,
        name: "training smoke",
        pass: drop >= 0.30 && elapsed <= 900.0,
        detail: format!(
            "500 steps @ 2e-5: step-10 MA {start:.4} -> final MA {end:.4}, drop {:.1}% ({elapsed:.0}s incl. backbone)",
            100.0 * drop
        ),
    }
}

/// Condition nests ordered sparse to dense: keypoint dots, then the
/// mid-frequency sketch, then binary edges, then the dense depth layout.
fn nests() -> [Vec<ConditionKind>; 4] {
    [
        vec![ConditionKind::Keypoint],
        vec![ConditionKind::Keypoint, ConditionKind::Sketch],
        vec![ConditionKind::Keypoint, ConditionKind::Sketch, ConditionKind::Edge],
        vec![
            ConditionKind::Keypoint,
            ConditionKind::Sketch,
            ConditionKind::Edge,
            ConditionKind::Depth,
        ],
    ]
}

fn criterion_9(arts: &Artifacts, reports: &[EvalReport]) -> Outcome {
    let means: Vec<f64> = reports.iter().map(|r| r.ssim_mean).collect();
    let gap = means[3] - means[0];
    let mut monotone = true;
    for w in means.windows(2) {
        if w[1] < w[0] - 0.02 {
            monotone = false;
        }
    }
    let pass = gap >= 0.05 && monotone;
    Outcome {
        id: 9,
        name: "controllability trend",
        pass,
        detail: format!(
            "SSIM nests over {} held-out: {:.3} / {:.3} / {:.3} / {:.3} (gap {:.3})",
            arts.heldout.len(),
            means[0],
            means[1],
            means[2],
            means[3],
            gap
        ),
    }
}

/// Chi-square statistic of observed per-condition counts against the
/// baseline distribution, plus the p-value for 3 degrees of freedom.
fn chi_square_p(observed: &[f64; 4], expected: &[f64; 4], total: f64) -> (f64, f64) {
    let mut stat = 0.0;
    for i in 0..4 {
        let obs = observed[i] * total;
        let exp = (expected[i] * total).max(1e-9);
        stat += (obs - exp) * (obs - exp) / exp;
    }
    // Survival function of chi-square with k=3: via the regularized upper
    // incomplete gamma Q(3/2, x/2) = erfc(sqrt(x/2)) + sqrt(2x/pi) e^{-x/2}.
    let x = stat;
    let p = erfc((x / 2.0).sqrt()) + (2.0 * x / std::f64::consts::PI).sqrt() * (-x / 2.0).exp();
    (stat, p)
}

/// Abramowitz-Stegun 7.1.26 complementary error function (|err| < 1.5e-7).
fn erfc(x: f64) -> f64 {
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    poly * (-x * x).exp()
}

fn criterion_10(arts: &Artifacts) -> Outcome {
    // Aggregate traces from >= 500 sampled images; short 5-step sampling
    // spreads t over {1.0, 0.8, 0.6, 0.4, 0.2} — the image count is what the
    // criterion pins, not the step count.
    let trace_set = make_dataset(555_000, 125, arts.model.dim);
    let mut pam_traces: Vec<SelectionTrace> = Vec::new();
    let mut rnd_traces: Vec<SelectionTrace> = Vec::new();
    for (i, item) in trace_set.iter().enumerate() {
        for rep in 0..4u64 {
            let conds: Vec<(ConditionKind, &[f64])> = ConditionKind::ALL
                .iter()
                .map(|&k| (k, item.condition(k)))
                .collect();
            let seed = derive_seed(31_000 + rep, i as u64);
            let (_, tr) = sample(&arts.trained, &conds, &item.text, 5, seed, ControlMode::Full, Fourier::Off).unwrap();
            pam_traces.extend(tr);
            let (_, tr) = sample(&arts.trained, &conds, &item.text, 5, seed, ControlMode::RandomSelection, Fourier::Off).unwrap();
            rnd_traces.extend(tr);
        }
    }
    let m = arts.model.positions();
    let pam_hist = selection_histogram(&pam_traces, m);
    let rnd_hist = selection_histogram(&rnd_traces, m);

    // Any (t-bucket, condition) cell > 1pp away from 0.25?
    let mut max_dev: f64 = 0.0;
    for (_, fr) in &pam_hist {
        for f in fr {
            max_dev = max_dev.max((f - 0.25).abs());
        }
    }

    // Chi-square of the pooled PAM selection counts against the pooled
    // random-baseline distribution.
    let pool = |hist: &[(f64, [f64; 4])]| {
        let mut acc = [0.0; 4];
        for (_, fr) in hist {
            for i in 0..4 {
                acc[i] += fr[i];
            }
        }
        let s: f64 = acc.iter().sum();
        for a in acc.iter_mut() {
            *a /= s;
        }
        acc
    };
    let obs = pool(&pam_hist);
    let exp = pool(&rnd_hist);
    let total = (pam_traces.len() * m) as f64;
    let (stat, p) = chi_square_p(&obs, &exp, total);

    let images = 125 * 4;
    Outcome {
        id: 10,
        name: "selection non-uniformity",
        pass: max_dev > 0.01 && p < 0.01,
        detail: format!(
            "{images} images, max cell deviation {:.1}pp, chi2 {stat:.1} (p {p:.2e}) vs random baseline",
            100.0 * max_dev
        ),
    }
}

fn criterion_11(arts: &Artifacts, full_report: &EvalReport) -> Outcome {
    let rnd = eval_run(
        &arts.trained,
        &arts.heldout,
        &ConditionKind::ALL,
        25,
        4242,
        ControlMode::RandomSelection,
        Fourier::Off,
    )
    .unwrap();
    let pass = full_report.ssim_mean > rnd.ssim_mean;
    Outcome {
        id: 11,
        name: "fusion vs random selection",
        pass,
        detail: format!(
            "PAM SSIM {:.4} vs random-selection {:.4} on {} held-out",
            full_report.ssim_mean,
            rnd.ssim_mean,
            arts.heldout.len()
        ),
    }
}

// ── criterion 12: determinism and persistence ───────────────────────────

fn stores_identical(a: &ParameterStore, b: &ParameterStore) -> bool {
    let names_a: Vec<&String> = a.names().collect();
    let names_b: Vec<&String> = b.names().collect();
    if names_a != names_b {
        return false;
    }
    names_a.iter().all(|n| {
        a.get(n)
            .data()
            .iter()
            .zip(b.get(n).data())
            .all(|(x, y)| x.to_bits() == y.to_bits())
    })
}

fn criterion_12() -> Outcome {
    let model = tiny_model();
    let dataset = make_dataset(2000, 8, model.dim);
    let cfg1 = TrainConfig {
        phase: Phase::Backbone,
        lr: 1e-3,
        batch: 2,
        seed: 120,
        dropout: false,
        fourier: Fourier::Off,
        dataset_seed: 2000,
        dataset_size: 8,
        model,
    };
    let mut bb = Checkpoint::fresh(cfg1.clone(), init_system(&model, 121).unwrap());
    bb.train(&dataset, 3).unwrap();

    let cfg2 = TrainConfig { phase: Phase::Control, lr: 1e-3, seed: 122, ..cfg1 };
    let dir = std::env::temp_dir().join(format!("patchflow-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    // Uninterrupted 4-step control run…
    let mut sys_a = init_system(&model, 123).unwrap();
    sys_a.backbone = bb.system.backbone.clone();
    let mut run_a = Checkpoint { config: cfg2.clone(), step: 0, system: sys_a, opt: AdamW::new(1e-3) };
    run_a.train(&dataset, 4).unwrap();

    // …vs 2 steps, save, load, 2 more.
    let mut sys_b = init_system(&model, 123).unwrap();
    sys_b.backbone = bb.system.backbone.clone();
    let mut run_b = Checkpoint { config: cfg2.clone(), step: 0, system: sys_b, opt: AdamW::new(1e-3) };
    run_b.train(&dataset, 2).unwrap();
    let ckpt_path = dir.join("resume.ckpt");
    run_b.save(&ckpt_path).unwrap();
    let mut run_b = Checkpoint::load(&ckpt_path).unwrap();
    run_b.train(&dataset, 2).unwrap();

    let resume_ok = stores_identical(&run_a.system.backbone, &run_b.system.backbone)
        && stores_identical(&run_a.system.pam, &run_b.system.pam)
        && stores_identical(&run_a.system.control, &run_b.system.control);

    // Bit-identical reports from two fresh evaluations of the same system.
    let heldout = make_dataset(3000, 4, model.dim);
    let r1 = eval_run(&run_a.system, &heldout, &ConditionKind::ALL, 5, 99, ControlMode::Full, Fourier::Off).unwrap();
    let r2 = eval_run(&run_a.system, &heldout, &ConditionKind::ALL, 5, 99, ControlMode::Full, Fourier::Off).unwrap();
    let report_ok = r1.to_text() == r2.to_text()
        && EvalReport::from_text(&r1.to_text()).unwrap().to_text() == r1.to_text();

    std::fs::remove_dir_all(&dir).ok();
    Outcome {
        id: 12,
        name: "determinism / persistence",
        pass: resume_ok && report_ok,
        detail: format!("resume bit-exact: {resume_ok}, reports byte-identical: {report_ok}"),
    }
}

// ── driver ──────────────────────────────────────────────────────────────

#[test]
fn acceptance() {
    let mut outcomes = Vec::new();
    for f in [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6, criterion_7] {
        let out = f();
        report(&out);
        outcomes.push(out);
    }

    if std::env::var("ACCEPT_FAST").is_ok() {
        let out = criterion_12();
        report(&out);
        outcomes.push(out);
        let failed: Vec<String> = outcomes.iter().filter(|o| !o.pass).map(|o| format!("criterion {} ({})", o.id, o.name)).collect();
        assert!(failed.is_empty(), "failed: {}", failed.join(", "));
        return;
    }
    let arts = build_artifacts();

    let out = criterion_8(&arts, arts.smoke_elapsed);
    report(&out);
    outcomes.push(out);

    // Shared held-out evaluations for criteria 9 and 11.
    let reports: Vec<EvalReport> = nests()
        .iter()
        .map(|kinds| {
            eval_run(&arts.trained, &arts.heldout, kinds, 25, 4242, ControlMode::Full, Fourier::Off).unwrap()
        })
        .collect();

    let out = criterion_9(&arts, &reports);
    report(&out);
    outcomes.push(out);
    let out = criterion_10(&arts);
    report(&out);
    outcomes.push(out);
    let out = criterion_11(&arts, &reports[3]);
    report(&out);
    outcomes.push(out);
    let out = criterion_12();
    report(&out);
    outcomes.push(out);

    let failed: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass)
        .map(|o| format!("criterion {} ({})", o.id, o.name))
        .collect();
    assert!(failed.is_empty(), "failed: {}", failed.join(", "));
}
