use patchflow_core::eval::eval_run;
use patchflow_core::pam::selection_histogram;
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, ConditionKind};
use std::time::Instant;

fn main() {
    let steps: usize = std::env::var("STEPS").ok().and_then(|s| s.parse().ok()).unwrap_or(3000);
    let mut ck = Checkpoint::load(std::path::Path::new("/tmp/full_d32.ckpt")).unwrap();
    let model = ck.system.model;
    let dataset = make_dataset(1000, 256, model.dim);
    let t0 = Instant::now();
    let log = ck.train(&dataset, steps).unwrap();
    let ma = |s: &[(usize, f64)]| s.iter().map(|&(_, v)| v).sum::<f64>() / s.len() as f64;
    println!(
        "continued to step {}: {:.0}s, loss MA10 end {:.4}",
        ck.step, t0.elapsed().as_secs_f64(), ma(&log[log.len() - 10..])
    );
    ck.save(std::path::Path::new("/tmp/full_d32.ckpt")).unwrap();

    let held = make_dataset(777_000, 32, model.dim);
    let full = eval_run(&ck.system, &held, &ConditionKind::ALL, 25, 4242, ControlMode::Full, Fourier::Off).unwrap();
    let rnd = eval_run(&ck.system, &held, &ConditionKind::ALL, 25, 4242, ControlMode::RandomSelection, Fourier::Off).unwrap();
    let konly = eval_run(&ck.system, &held, &[ConditionKind::Keypoint], 25, 4242, ControlMode::Full, Fourier::Off).unwrap();
    println!("full {:.4} random {:.4} K-only {:.4}", full.ssim_mean, rnd.ssim_mean, konly.ssim_mean);

    let mut traces = Vec::new();
    for (i, it) in held.iter().take(8).enumerate() {
        let conds: Vec<(ConditionKind, &[f64])> =
            ConditionKind::ALL.iter().map(|&k| (k, it.condition(k))).collect();
        let (_, tr) = sample(&ck.system, &conds, &it.text, 5, 100 + i as u64, ControlMode::Full, Fourier::Off).unwrap();
        traces.extend(tr);
    }
    let hist = selection_histogram(&traces, model.positions());
    let (t, fr) = &hist[0];
    println!("t={t:.1} shares E/D/S/K = {:.2} {:.2} {:.2} {:.2}", fr[0], fr[1], fr[2], fr[3]);
}
