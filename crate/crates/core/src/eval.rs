//! Evaluation: windowed SSIM, held-out sampling runs, line-oriented reports
//! and portable-pixmap image export.

use crate::error::{Error, Result};
use crate::pam::selection_histogram;
use crate::pipeline::{sample, ControlMode, Fourier, System};
use crate::synth::{ConditionKind, ImageSample};
use crate::tensor::Tensor;
use std::io::Write;

pub const SSIM_WINDOW: usize = 8;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

/// Mean SSIM over all 8x8 windows at stride 1 (uniform window, population
/// statistics, stabilizers on unit dynamic range). Built on summed-area
/// tables; the test oracle recomputes each window directly.
pub fn ssim(a: &[f64], b: &[f64], side: usize) -> Result<f64> {
    if a.len() != b.len() || a.len() != side * side {
        return Err(Error::ShapeMismatch {
            op: "ssim",
            detail: format!("{} vs {} values for side {side}", a.len(), b.len()),
        });
    }
    if side < SSIM_WINDOW {
        return Err(Error::InvalidConfig(format!(
            "image side {side} smaller than SSIM window {SSIM_WINDOW}"
        )));
    }
    // Summed-area tables for a, b, a^2, b^2, a*b; entry (r, c) holds the sum
    // over the rectangle [0, r) x [0, c).
    let w = side + 1;
    let mut sums = vec![[0.0f64; 5]; w * w];
    for r in 0..side {
        for c in 0..side {
            let (av, bv) = (a[r * side + c], b[r * side + c]);
            let cell = [av, bv, av * av, bv * bv, av * bv];
            for k in 0..5 {
                sums[(r + 1) * w + (c + 1)][k] =
                    cell[k] + sums[r * w + (c + 1)][k] + sums[(r + 1) * w + c][k] - sums[r * w + c][k];
            }
        }
    }
    let n = (SSIM_WINDOW * SSIM_WINDOW) as f64;
    let windows = side - SSIM_WINDOW + 1;
    let mut total = 0.0;
    for r in 0..windows {
        for c in 0..windows {
            let (r2, c2) = (r + SSIM_WINDOW, c + SSIM_WINDOW);
            let mut s = [0.0f64; 5];
            for k in 0..5 {
                s[k] = sums[r2 * w + c2][k] - sums[r * w + c2][k] - sums[r2 * w + c][k] + sums[r * w + c][k];
            }
            let (ma, mb) = (s[0] / n, s[1] / n);
            let va = s[2] / n - ma * ma;
            let vb = s[3] / n - mb * mb;
            let cov = s[4] / n - ma * mb;
            total += ((2.0 * ma * mb + C1) * (2.0 * cov + C2))
                / ((ma * ma + mb * mb + C1) * (va + vb + C2));
        }
    }
    Ok(total / (windows * windows) as f64)
}

// ── reports ─────────────────────────────────────────────────────────────

pub const REPORT_VERSION: &str = "patchflow-evalreport v1";

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Condition-combination label, e.g. `edge+depth+sketch+keypoint`.
    pub label: String,
    pub seed: u64,
    pub count: usize,
    pub ssim_mean: f64,
    pub ssim_median: f64,
    /// Per-timestep selection fractions, timestep descending.
    pub fractions: Vec<(f64, [f64; 4])>,
}

impl EvalReport {
    /// Line-oriented structured text under a version header.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(REPORT_VERSION);
        s.push('\n');
        s.push_str(&format!("label {}\n", self.label));
        s.push_str(&format!("seed {}\n", self.seed));
        s.push_str(&format!("count {}\n", self.count));
        s.push_str(&format!("ssim_mean {}\n", self.ssim_mean));
        s.push_str(&format!("ssim_median {}\n", self.ssim_median));
        for (t, f) in &self.fractions {
            s.push_str(&format!("fractions {t} {} {} {} {}\n", f[0], f[1], f[2], f[3]));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<EvalReport> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header != REPORT_VERSION {
            return Err(Error::Parse(format!("unsupported report header {header:?}")));
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse("truncated report".into()))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(str::to_string)
                .ok_or_else(|| Error::Parse(format!("expected `{key} ...`, got {line:?}")))
        };
        let label = field("label")?;
        let seed = field("seed")?.parse().map_err(|_| Error::Parse("bad seed".into()))?;
        let count = field("count")?.parse().map_err(|_| Error::Parse("bad count".into()))?;
        let ssim_mean = field("ssim_mean")?.parse().map_err(|_| Error::Parse("bad ssim_mean".into()))?;
        let ssim_median = field("ssim_median")?.parse().map_err(|_| Error::Parse("bad ssim_median".into()))?;
        let mut fractions = Vec::new();
        for line in lines {
            let vals: Vec<f64> = line
                .strip_prefix("fractions ")
                .ok_or_else(|| Error::Parse(format!("bad fractions line {line:?}")))?
                .split_whitespace()
                .map(|v| v.parse().map_err(|_| Error::Parse("bad fraction".into())))
                .collect::<Result<_>>()?;
            if vals.len() != 5 {
                return Err(Error::Parse("fractions line needs t + 4 values".into()));
            }
            fractions.push((vals[0], [vals[1], vals[2], vals[3], vals[4]]));
        }
        Ok(EvalReport { label, seed, count, ssim_mean, ssim_median, fractions })
    }

    /// Human-readable summary table.
    pub fn summary(&self) -> String {
        let mut s = format!(
            "run `{}` over {} samples (seed {})\n  SSIM mean {:.4}, median {:.4}\n  selection fractions by timestep:\n",
            self.label, self.count, self.seed, self.ssim_mean, self.ssim_median
        );
        s.push_str("      t      edge   depth  sketch keypoint\n");
        for (t, f) in &self.fractions {
            s.push_str(&format!(
                "    {t:.3}  {:.3}  {:.3}  {:.3}  {:.3}\n",
                f[0], f[1], f[2], f[3]
            ));
        }
        s
    }
}

pub fn subset_label(kinds: &[ConditionKind]) -> String {
    kinds
        .iter()
        .map(|k| k.name())
        .collect::<Vec<_>>()
        .join("+")
}

/// Samples one image per held-out item using its conditions restricted to
/// `kinds`, scores SSIM against the ground-truth render, and aggregates the
/// selection traces.
pub fn eval_run(
    system: &System,
    dataset: &[ImageSample],
    kinds: &[ConditionKind],
    steps: usize,
    seed: u64,
    mode: ControlMode,
    fourier: Fourier,
) -> Result<EvalReport> {
    if kinds.is_empty() {
        return Err(Error::InvalidConfig("eval_run needs a non-empty condition subset".into()));
    }
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("eval_run needs a non-empty dataset".into()));
    }
    let side = system.model.canvas;
    let mut scores = Vec::with_capacity(dataset.len());
    let mut traces = Vec::new();
    for (i, item) in dataset.iter().enumerate() {
        let conds: Vec<(ConditionKind, &[f64])> =
            kinds.iter().map(|&k| (k, item.condition(k))).collect();
        let item_seed = crate::synth::derive_seed(seed, i as u64);
        let (img, tr) = sample(system, &conds, &item.text, steps, item_seed, mode, fourier)?;
        scores.push(ssim(&img, &item.image, side)?);
        traces.extend(tr);
    }
    let mut sorted = scores.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    Ok(EvalReport {
        label: subset_label(kinds),
        seed,
        count: dataset.len(),
        ssim_mean: mean,
        ssim_median: median,
        fractions: selection_histogram(&traces, system.model.positions()),
    })
}

// ── image export ────────────────────────────────────────────────────────

/// Binary portable pixmap (P6, maxval 255).
pub fn write_ppm<W: Write>(w: &mut W, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::ShapeMismatch {
            op: "write_ppm",
            detail: format!("{} bytes for {width}x{height}", rgb.len()),
        });
    }
    write!(w, "P6\n{width} {height}\n255\n")?;
    w.write_all(rgb)?;
    Ok(())
}

/// Grayscale values in `[0, 1]` to RGB bytes.
pub fn gray_to_rgb(img: &[f64]) -> Vec<u8> {
    img.iter()
        .flat_map(|v| {
            let b = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            [b, b, b]
        })
        .collect()
}

/// Convenience for scoring tensors against images in tests and the CLI.
pub fn tensor_image(t: &Tensor) -> &[f64] {
    t.data()
}
