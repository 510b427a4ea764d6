use patchflow_core::backbone::{forward, interpolate, target_velocity};
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, patchify, ConditionKind, ImageSample};
use patchflow_core::NoGradGuard;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

fn envf(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d)
}
fn envu(k: &str, d: usize) -> usize {
    std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d)
}

fn fixed_eval(system: &System, cfg: &TrainConfig, data: &[ImageSample]) -> f64 {
    let _g = NoGradGuard::new();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777);
    let n = 48;
    let mut total = 0.0;
    for i in 0..n {
        let s = &data[i % data.len()];
        let t = (i as f64 + 0.5) / n as f64;
        let noise: Vec<f64> = (0..32 * 32)
            .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let l = sample_loss(system, cfg, s, &ConditionKind::ALL, t, &noise).unwrap();
        total += l.item();
    }
    total / n as f64
}

fn ceiling(system: &System, model: &ModelConfig, data: &[ImageSample]) {
    let bcfg = model.backbone();
    let _g = NoGradGuard::new();
    let k = 24;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(777);
    let n_pairs = 40;
    let (mut base_total, mut floor_total) = (0.0, 0.0);
    for i in 0..n_pairs {
        let s = &data[i % data.len()];
        let t = (i as f64 + 0.5) / n_pairs as f64;
        let mut residuals: Vec<Vec<f64>> = Vec::with_capacity(k);
        for _ in 0..k {
            let noise: Vec<f64> = (0..32 * 32)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let z_t = interpolate(&s.image, &noise, t).unwrap();
            let target = patchify(&target_velocity(&s.image, &noise).unwrap(), model.canvas, model.patch).unwrap();
            let pred = forward(&system.backbone, &bcfg, &z_t, t, &s.text, None).unwrap();
            residuals.push(target.data().iter().zip(pred.data()).map(|(a, b)| a - b).collect());
        }
        let numel = residuals[0].len();
        let mut mean = vec![0.0; numel];
        for r in &residuals {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / k as f64;
            }
        }
        let (mut base, mut floor) = (0.0, 0.0);
        for r in &residuals {
            for (v, m) in r.iter().zip(&mean) {
                base += v * v;
                floor += (v - m) * (v - m);
            }
        }
        base_total += base / (k * numel) as f64;
        floor_total += floor / ((k * numel) as f64) * (k as f64 / (k as f64 - 1.0));
    }
    base_total /= n_pairs as f64;
    floor_total /= n_pairs as f64;
    println!(
        "ceiling: base={base_total:.4} floor={floor_total:.4} removable={:.1}%",
        100.0 * (1.0 - floor_total / base_total)
    );
}

fn main() {
    let dim = envu("DIM", 16);
    let model = ModelConfig { canvas: 32, patch: 4, dim, n_dsb: 1, n_ssb: 2, n_p: 16 };
    let dataset = make_dataset(1000, 256, model.dim);
    let ckpath = format!("/tmp/bb_d{dim}.ckpt");
    let ckpath = std::path::Path::new(&ckpath);

    let cfg1 = TrainConfig {
        phase: Phase::Backbone, lr: envf("BLR", 1e-2), batch: 8, seed: 7, dropout: false,
        fourier: Fourier::Off, dataset_seed: 1000, dataset_size: 256, model,
    };
    if !ckpath.exists() {
        let system = init_system(&model, 42).unwrap();
        let mut ck = Checkpoint::fresh(cfg1.clone(), system);
        let t0 = Instant::now();
        ck.train(&dataset, envu("BSTEPS", 3000)).unwrap();
        println!("phase1 done {:?}", t0.elapsed());
        ck.save(ckpath).unwrap();
    }
    let bb = Checkpoint::load(ckpath).unwrap();
    let mut system = init_system(&model, 43).unwrap();
    system.backbone = bb.system.backbone;

    if std::env::var("CEIL").is_ok() {
        ceiling(&system, &model, &dataset);
    }

    let steps = envu("STEPS", 500);
    let lr = envf("LR", 2e-5);
    let batch = envu("BATCH", 32);
    let cfgc = TrainConfig {
        phase: Phase::Control, lr, batch, seed: 8, dropout: false, ..cfg1.clone()
    };
    let l0 = fixed_eval(&system, &cfgc, &dataset);
    let mut ck = Checkpoint { config: cfgc.clone(), step: 0, system, opt: AdamW::new(lr) };
    let t0 = Instant::now();
    let log = ck.train(&dataset, steps).unwrap();
    let l1 = fixed_eval(&ck.system, &cfgc, &dataset);
    let ma = |s: &[(usize, f64)]| s.iter().map(|&(_, v)| v).sum::<f64>() / s.len() as f64;
    println!(
        "spec metric: MA10@10 {:.4} -> final MA10 {:.4} = drop {:.1}%",
        ma(&log[..10]),
        ma(&log[log.len() - 10..]),
        100.0 * (1.0 - ma(&log[log.len() - 10..]) / ma(&log[..10]))
    );
    println!(
        "dim={dim} zbg={} zfh={} mns={} {steps}@{lr} b{batch}: {:.0}s; {l0:.4} -> {l1:.4} = drop {:.1}%",
        std::env::var("ZBG").unwrap_or_else(|_| "-".into()),
        std::env::var("ZFH").unwrap_or_else(|_| "-".into()),
        std::env::var("MNS").unwrap_or_else(|_| "-".into()),
        t0.elapsed().as_secs_f64(),
        100.0 * (1.0 - l1 / l0)
    );
}
