use patchflow_core::eval::eval_run;
use patchflow_core::pam::selection_histogram;
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, ConditionKind};

fn main() {
    let ck = Checkpoint::load(std::path::Path::new("/tmp/full_d32.ckpt")).unwrap();
    let model = ck.system.model;
    let held = make_dataset(777_000, 32, model.dim);
    for seed in [4242u64, 777, 90210] {
        let full = eval_run(&ck.system, &held, &ConditionKind::ALL, 25, seed, ControlMode::Full, Fourier::Off).unwrap();
        let rnd = eval_run(&ck.system, &held, &ConditionKind::ALL, 25, seed, ControlMode::RandomSelection, Fourier::Off).unwrap();
        println!("seed {seed}: full {:.4} random {:.4}", full.ssim_mean, rnd.ssim_mean);
    }
    // PAM selection condition shares at a few t (pooled over 8 items).
    let mut traces = Vec::new();
    for (i, it) in held.iter().take(8).enumerate() {
        let conds: Vec<(ConditionKind, &[f64])> =
            ConditionKind::ALL.iter().map(|&k| (k, it.condition(k))).collect();
        let (_, tr) = sample(&ck.system, &conds, &it.text, 5, 100 + i as u64, ControlMode::Full, Fourier::Off).unwrap();
        traces.extend(tr);
    }
    for (t, fr) in selection_histogram(&traces, model.positions()) {
        println!("t={t:.1} shares E/D/S/K = {:.2} {:.2} {:.2} {:.2}", fr[0], fr[1], fr[2], fr[3]);
    }
}
