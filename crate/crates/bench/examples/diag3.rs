use patchflow_core::eval::eval_run;
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, ConditionKind};
use ConditionKind::*;

fn main() {
    let ck = Checkpoint::load(std::path::Path::new("/tmp/full_d32.ckpt")).unwrap();
    let held = make_dataset(777_000, 32, ck.system.model.dim);
    let sets: Vec<Vec<ConditionKind>> = vec![
        vec![Keypoint, Sketch],
        vec![Keypoint, Depth],
        vec![Keypoint, Depth, Sketch],
        vec![Keypoint, Edge, Sketch],
    ];
    for kinds in sets {
        let r = eval_run(&ck.system, &held, &kinds, 25, 4242, ControlMode::Full, Fourier::Off).unwrap();
        println!("{:28} ssim {:.4}", r.label, r.ssim_mean);
    }
}
