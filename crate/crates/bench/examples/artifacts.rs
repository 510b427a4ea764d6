use patchflow_core::eval::eval_run;
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, ConditionKind};
use std::time::Instant;

fn envu(k: &str, d: usize) -> usize {
    std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d)
}

fn envf(k: &str, d: f64) -> f64 {
    std::env::var(k).ok().and_then(|s| s.parse().ok()).unwrap_or(d)
}

fn main() {
    let model = ModelConfig { canvas: 32, patch: 4, dim: 32, n_dsb: 1, n_ssb: 2, n_p: 16 };
    let dataset = make_dataset(1000, 256, model.dim);
    let bb = Checkpoint::load(std::path::Path::new("/tmp/bb_d32.ckpt")).unwrap();
    let mut system = init_system(&model, 44).unwrap();
    system.backbone = bb.system.backbone;

    let lr = envf("LR", 1e-3);
    let cfg = TrainConfig {
        phase: Phase::Control, lr, batch: 8, seed: 9, dropout: true,
        fourier: Fourier::Off, dataset_seed: 1000, dataset_size: 256, model,
    };
    let steps = envu("CSTEPS", 3000);
    let mut opt = AdamW::new(lr);
    opt.weight_decay = envf("WD", 0.01);
    let mut ck = Checkpoint { config: cfg, step: 0, system, opt };
    let t0 = Instant::now();
    let log = ck.train(&dataset, steps).unwrap();
    let ma = |s: &[(usize, f64)]| s.iter().map(|&(_, v)| v).sum::<f64>() / s.len() as f64;
    println!(
        "control {steps}@{lr:.0e} b8 dropout: {:.0}s  loss MA10 start {:.4} end {:.4}",
        t0.elapsed().as_secs_f64(),
        ma(&log[..10]),
        ma(&log[log.len() - 10..])
    );
    {
        use patchflow_core::control::{control_forward, time_embed};
        use patchflow_core::pam::patch_adapt;
        use patchflow_core::NoGradGuard;
        let _g = NoGradGuard::new();
        let probe = make_dataset(777_000, 1, model.dim);
        let conds: Vec<(ConditionKind, &[f64])> =
            ConditionKind::ALL.iter().map(|&k| (k, probe[0].condition(k))).collect();
        for t in [0.9, 0.5, 0.1] {
            let (sp, _) = patch_adapt(&ck.system.pam, &model.pam(), &conds, &probe[0].text, t).unwrap();
            let ot = time_embed(&ck.system.pam, "pam/time", t, model.dim).unwrap();
            let sig = control_forward(&ck.system.control, &model.control(), &sp, &probe[0].text, &ot).unwrap();
            let rms: f64 = (sig.slots.iter().map(|s| s.data().iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sum::<f64>()
                / sig.slots.len() as f64)
                .sqrt();
            println!("  t={t:.1} rms(slots)={rms:.3}");
        }
    }

    let held = make_dataset(777_000, envu("HELD", 16), model.dim);
    let nests: [&[ConditionKind]; 4] = [
        &[ConditionKind::Keypoint],
        &[ConditionKind::Keypoint, ConditionKind::Edge],
        &[ConditionKind::Keypoint, ConditionKind::Edge, ConditionKind::Depth],
        &ConditionKind::ALL,
    ];
    for kinds in nests {
        let t0 = Instant::now();
        let r = eval_run(&ck.system, &held, kinds, 25, 4242, ControlMode::Full, Fourier::Off).unwrap();
        println!(
            "nest {:8} ssim {:.4} median {:.4} ({:.1}s, {:.2}s/img)",
            r.label, r.ssim_mean, r.ssim_median,
            t0.elapsed().as_secs_f64(),
            t0.elapsed().as_secs_f64() / held.len() as f64
        );
    }
    let t0 = Instant::now();
    let r = eval_run(&ck.system, &held, &ConditionKind::ALL, 25, 4242, ControlMode::RandomSelection, Fourier::Off).unwrap();
    println!("random-sel ssim {:.4} ({:.1}s)", r.ssim_mean, t0.elapsed().as_secs_f64());
    let r = eval_run(&ck.system, &held, &ConditionKind::ALL, 25, 4242, ControlMode::BackboneOnly, Fourier::Off).unwrap();
    println!("backbone-only ssim {:.4}", r.ssim_mean);
    ck.save(std::path::Path::new("/tmp/full_d32.ckpt")).unwrap();
}
