use patchflow_core::pam::selection_histogram;
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, ConditionKind};

fn main() {
    let model = ModelConfig { canvas: 32, patch: 4, dim: 32, n_dsb: 1, n_ssb: 2, n_p: 16 };
    let data = make_dataset(1000, 16, model.dim);
    for seed in [43u64, 44] {
        let system = init_system(&model, seed).unwrap();
        let mut traces = Vec::new();
        for it in &data {
            let conds: Vec<(ConditionKind, &[f64])> =
                ConditionKind::ALL.iter().map(|&k| (k, it.condition(k))).collect();
            for t in [0.9, 0.5, 0.1] {
                let (_, tr) = patchflow_core::pam::patch_adapt(&system.pam, &model.pam(), &conds, &it.text, t).unwrap();
                traces.push(tr);
            }
        }
        let hist = selection_histogram(&traces, model.positions());
        let mut acc = [0.0; 4];
        for (_, fr) in &hist { for i in 0..4 { acc[i] += fr[i] / hist.len() as f64; } }
        println!("init seed {seed}: shares E/D/S/K = {:.2} {:.2} {:.2} {:.2}", acc[0], acc[1], acc[2], acc[3]);
    }
}
