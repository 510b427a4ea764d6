//! Timestep conditioning and the zero-initialized control network.
//!
//! The time embedding turns a flow timestep `t in [0, 1]` into a conditioning
//! row `O_t`; one embedding (owned by the adaptation module's store) is shared
//! by the patch scorer and the control blocks so both see the same temporal
//! signal, while the backbone carries its own. The control network mirrors the
//! backbone's block layout with every output projection zero-initialized, so a
//! freshly initialized control stack contributes exactly zero residuals and
//! leaves backbone sampling bit-for-bit unchanged.

use crate::error::{Error, Result};
use crate::nn::{dense_std, dsb_forward, init_dsb, init_ssb, ssb_forward, Linear};
use crate::params::ParameterStore;
use crate::tensor::Tensor;
use rand::Rng;

/// Sinusoidal features of `t`: pairs `(sin(t * w_i), cos(t * w_i))` with
/// frequencies geometrically spaced from 1 to 10000.
fn sinusoidal(t: f64, d: usize) -> Vec<f64> {
    assert!(d >= 2 && d % 2 == 0, "time embedding dim must be even and >= 2");
    let half = d / 2;
    let mut out = Vec::with_capacity(d);
    for i in 0..half {
        let exponent = if half > 1 { i as f64 / (half - 1) as f64 } else { 0.0 };
        let w = 10000f64.powf(exponent);
        out.push((t * w).sin());
        out.push((t * w).cos());
    }
    out
}

pub fn init_time_embed<R: Rng>(store: &mut ParameterStore, prefix: &str, d: usize, rng: &mut R) {
    Linear::init(store, &format!("{prefix}/mlp1"), d, d, dense_std(d), rng);
    Linear::init(store, &format!("{prefix}/mlp2"), d, d, dense_std(d), rng);
}

/// `O_t`: sinusoidal features pushed through a two-layer MLP, shape `[1, d]`.
pub fn time_embed(store: &ParameterStore, prefix: &str, t: f64, d: usize) -> Result<Tensor> {
    if !(0.0..=1.0).contains(&t) || !t.is_finite() {
        return Err(Error::TimestepOutOfRange(t));
    }
    let feats = Tensor::from_vec(vec![1, d], sinusoidal(t, d));
    let h = Linear::fetch(store, &format!("{prefix}/mlp1")).forward(&feats).gelu();
    Ok(Linear::fetch(store, &format!("{prefix}/mlp2")).forward(&h))
}

/// Control network layout: matches the backbone block count.
#[derive(Clone, Copy, Debug)]
pub struct ControlConfig {
    pub dim: usize,
    pub n_dsb: usize,
    pub n_ssb: usize,
    /// Token count of the unified control grid (one per patch position).
    pub positions: usize,
}

impl ControlConfig {
    pub fn slots(&self) -> usize {
        self.n_dsb + self.n_ssb
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "control dim must be even and nonzero, got {}",
                self.dim
            )));
        }
        if self.slots() == 0 {
            return Err(Error::InvalidConfig("control network needs at least one block".into()));
        }
        if self.positions == 0 {
            return Err(Error::InvalidConfig("control network needs at least one position".into()));
        }
        Ok(())
    }
}

/// Per-slot residuals destined for the backbone's injection points, one
/// `[m, d]` tensor per backbone block in block order (double-stream blocks
/// first).
pub struct ControlSignals {
    pub slots: Vec<Tensor>,
}

impl ControlSignals {
    pub fn zeros(cfg: &ControlConfig, m: usize) -> ControlSignals {
        ControlSignals {
            slots: (0..cfg.slots()).map(|_| Tensor::zeros(vec![m, cfg.dim])).collect(),
        }
    }

    pub fn all_zero(&self) -> bool {
        self.slots.iter().all(|s| s.data().iter().all(|v| *v == 0.0))
    }
}

pub fn init_control<R: Rng>(store: &mut ParameterStore, cfg: &ControlConfig, rng: &mut R) {
    Linear::init(store, "ctrl/in", cfg.dim, cfg.dim, dense_std(cfg.dim), rng);
    // Unit-scale positional embedding at the stack input. The unified grid's
    // rows change with the per-item patch selection; this gives every token
    // a selection-independent positional component the zero blocks can read
    // out from step one (the item-systematic part of the backbone residual
    // is position-keyed). Reaches the output only through the zero-init
    // projections, so the no-op contract is untouched.
    store.insert_normal("ctrl/pos", vec![cfg.positions, cfg.dim], 0.25, rng);
    for i in 0..cfg.n_dsb {
        init_dsb(store, &format!("ctrl/dsb{i}"), cfg.dim, true, rng);
    }
    for j in 0..cfg.n_ssb {
        init_ssb(store, &format!("ctrl/ssb{j}"), cfg.dim, true, rng);
    }
}

/// Runs the unified control tokens through the zero-initialized block stack
/// and collects each block's image-stream contribution as one injection slot.
pub fn control_forward(
    store: &ParameterStore,
    cfg: &ControlConfig,
    sp: &Tensor,
    y: &Tensor,
    ot: &Tensor,
) -> Result<ControlSignals> {
    cfg.validate()?;
    if sp.shape() != [cfg.positions, cfg.dim] {
        return Err(Error::ShapeMismatch {
            op: "control_forward",
            detail: format!("expected [{}, {}], got {:?}", cfg.positions, cfg.dim, sp.shape()),
        });
    }
    let mut x = Linear::fetch(store, "ctrl/in").forward(sp).add(&store.get("ctrl/pos"));
    let mut yt = y.clone();
    let mut slots = Vec::with_capacity(cfg.slots());
    for i in 0..cfg.n_dsb {
        let (x2, y2, delta) = dsb_forward(store, &format!("ctrl/dsb{i}"), &x, &yt, ot, true);
        x = x2;
        yt = y2;
        slots.push(delta);
    }
    for j in 0..cfg.n_ssb {
        let (x2, y2, delta) = ssb_forward(store, &format!("ctrl/ssb{j}"), &x, &yt, ot, true);
        x = x2;
        yt = y2;
        slots.push(delta);
    }
    Ok(ControlSignals { slots })
}
