use patchflow_core::backbone::{forward, to_image};
use patchflow_core::control::control_forward;
use patchflow_core::control::time_embed;
use patchflow_core::eval::{gray_to_rgb, ssim, write_ppm};
use patchflow_core::pam::patch_adapt;
use patchflow_core::pipeline::*;
use patchflow_core::synth::{make_dataset, ConditionKind};
use patchflow_core::NoGradGuard;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn main() {
    let ck = Checkpoint::load(std::path::Path::new("/tmp/full_d32.ckpt")).unwrap();
    let system = ck.system;
    let model = system.model;
    let held = make_dataset(777_000, 4, model.dim);
    let _g = NoGradGuard::new();

    // Per-step control magnitude along a real sampling trajectory.
    let item = &held[0];
    let conds: Vec<(ConditionKind, &[f64])> = ConditionKind::ALL
        .iter()
        .map(|&k| (k, item.condition(k)))
        .collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
    let mut z: Vec<f64> = (0..32 * 32)
        .map(|_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
        .collect();
    let steps = 25;
    let dt = 1.0 / steps as f64;
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let (sp, _) = patch_adapt(&system.pam, &model.pam(), &conds, &item.text, t).unwrap();
        let ot = time_embed(&system.pam, "pam/time", t, model.dim).unwrap();
        let signals = control_forward(&system.control, &model.control(), &sp, &item.text, &ot).unwrap();
        let ctrl_mag: f64 = signals
            .slots
            .iter()
            .map(|s| s.data().iter().map(|v| v * v).sum::<f64>() / s.len() as f64)
            .sum::<f64>()
            / signals.slots.len() as f64;
        let bare = forward(&system.backbone, &model.backbone(), &z, t, &item.text, None).unwrap();
        let ctrl = forward(&system.backbone, &model.backbone(), &z, t, &item.text, Some(&signals)).unwrap();
        let vb = to_image(&model.backbone(), &bare).unwrap();
        let vc = to_image(&model.backbone(), &ctrl).unwrap();
        let vbm = vb.iter().map(|v| v * v).sum::<f64>() / vb.len() as f64;
        let dvm = vb
            .iter()
            .zip(&vc)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / vb.len() as f64;
        let zm = z.iter().map(|v| v * v).sum::<f64>() / z.len() as f64;
        println!(
            "t={t:.2} rms(z)={:.2} rms(v_bare)={:.2} rms(v_ctrl-v_bare)={:.3} rms(slots)={:.3}",
            zm.sqrt(),
            vbm.sqrt(),
            dvm.sqrt(),
            ctrl_mag.sqrt()
        );
        for (zi, vi) in z.iter_mut().zip(&vc) {
            *zi -= dt * vi;
        }
    }

    // Step-count sensitivity and image dumps.
    for &steps in &[25usize, 50, 100] {
        let mut tot_full = 0.0;
        let mut tot_bare = 0.0;
        for (i, it) in held.iter().enumerate() {
            let conds: Vec<(ConditionKind, &[f64])> = ConditionKind::ALL
                .iter()
                .map(|&k| (k, it.condition(k)))
                .collect();
            let (img, _) = sample(&system, &conds, &it.text, steps, 1000 + i as u64, ControlMode::Full, Fourier::Off).unwrap();
            tot_full += ssim(&img, &it.image, 32).unwrap();
            let (img2, _) = sample(&system, &conds, &it.text, steps, 1000 + i as u64, ControlMode::BackboneOnly, Fourier::Off).unwrap();
            tot_bare += ssim(&img2, &it.image, 32).unwrap();
            if steps == 25 && i == 0 {
                for (name, im) in [("full", &img), ("bare", &img2), ("truth", &it.image)] {
                    let mut f = std::fs::File::create(format!("/tmp/diag_{name}.ppm")).unwrap();
                    write_ppm(&mut f, 32, 32, &gray_to_rgb(im)).unwrap();
                }
            }
        }
        println!(
            "steps={steps}: ssim full {:.4} bare {:.4}",
            tot_full / held.len() as f64,
            tot_bare / held.len() as f64
        );
    }
}
