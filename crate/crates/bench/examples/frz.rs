// Probe: smoke with PAM frozen at init (only the control stack trains).
use patchflow_core::pipeline::*;
use patchflow_core::synth::{derive_seed, make_dataset, ConditionKind, ImageSample};
use patchflow_core::NoGradGuard;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use std::time::Instant;

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
        total += sample_loss(system, cfg, s, &ConditionKind::ALL, t, &noise).unwrap().item();
    }
    total / n as f64
}

fn main() {
    let model = ModelConfig { canvas: 32, patch: 4, dim: 32, n_dsb: 1, n_ssb: 2, n_p: 16 };
    let dataset = make_dataset(1000, 256, model.dim);
    let bb = Checkpoint::load(std::path::Path::new("/tmp/bb_d32.ckpt")).unwrap();
    let mut system = init_system(&model, 43).unwrap();
    system.backbone = bb.system.backbone;
    let cfg = TrainConfig {
        phase: Phase::Control, lr: 2e-5, batch: 32, seed: 8, dropout: false,
        fourier: Fourier::Off, dataset_seed: 1000, dataset_size: 256, model,
    };
    let l0 = fixed_eval(&system, &cfg, &dataset);
    let mut opt = AdamW::new(2e-5);
    // Manual loop so PAM can stay frozen after apply_phase.
    system.apply_phase(Phase::Control);
    system.pam.set_trainable(false);
    let canvas2 = model.canvas * model.canvas;
    let t0 = Instant::now();
    let mut log = Vec::new();
    for step in 0..500usize {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(derive_seed(8, step as u64));
        use rand::Rng;
        let mut total: Option<patchflow_core::tensor::Tensor> = None;
        for _ in 0..32 {
            let idx = rng.gen_range(0..dataset.len());
            let t = 1.0 - rng.gen::<f64>();
            let noise: Vec<f64> = (0..canvas2)
                .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            let loss = sample_loss(&system, &cfg, &dataset[idx], &ConditionKind::ALL, t, &noise).unwrap();
            total = Some(match total { None => loss, Some(a) => a.add(&loss) });
        }
        let total = total.unwrap().scale(1.0 / 32.0);
        log.push(total.item());
        total.backward();
        opt.step(&mut [("control", &mut system.control)]);
        system.control.clear_grads();
    }
    let l1 = fixed_eval(&system, &cfg, &dataset);
    let ma = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    println!(
        "frozen-PAM smoke: {:.0}s; fixed-eval {l0:.4} -> {l1:.4} = drop {:.1}%; spec MA {:.4} -> {:.4} = {:.1}%",
        t0.elapsed().as_secs_f64(),
        100.0 * (1.0 - l1 / l0),
        ma(&log[..10]), ma(&log[490..]),
        100.0 * (1.0 - ma(&log[490..]) / ma(&log[..10]))
    );
}
