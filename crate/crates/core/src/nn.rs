//! Neural building blocks shared by the scoring, backbone and control
//! networks. Parameters live in a [`ParameterStore`] and are addressed by
//! path, so the same forward code serves normally initialized and
//! zero-initialized block variants.

use crate::params::ParameterStore;
use crate::tensor::Tensor;
use rand::Rng;

pub const LN_EPS: f64 = 1e-6;
/// Init stddev for embedding tables.
pub const INIT_STD: f64 = 0.02;

/// Weight init stddev for dense layers: `1/sqrt(fan_in)` keeps activation
/// scale roughly constant through depth.
pub fn dense_std(d_in: usize) -> f64 {
    (1.0 / d_in as f64).sqrt()
}

/// A dense layer `x * w + b` with `w: [in, out]`, `b: [out]`.
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    /// `std = 0.0` zero-initializes the weight (bias is always zero).
    pub fn init<R: Rng>(
        store: &mut ParameterStore,
        name: &str,
        d_in: usize,
        d_out: usize,
        std: f64,
        rng: &mut R,
    ) {
        if std == 0.0 {
            Linear::init_zero(store, name, d_in, d_out);
        } else {
            store.insert_normal(&format!("{name}/w"), vec![d_in, d_out], std, rng);
            store.insert_zero(&format!("{name}/b"), vec![d_out]);
        }
    }

    pub fn init_zero(store: &mut ParameterStore, name: &str, d_in: usize, d_out: usize) {
        store.insert_zero(&format!("{name}/w"), vec![d_in, d_out]);
        store.insert_zero(&format!("{name}/b"), vec![d_out]);
    }

    pub fn fetch(store: &ParameterStore, name: &str) -> Linear {
        Linear {
            w: store.get(&format!("{name}/w")),
            b: store.get(&format!("{name}/b")),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.matmul(&self.w).add_bcast_row(&self.b)
    }

    /// True while the weight and bias are still exactly zero.
    pub fn is_zero(&self) -> bool {
        self.w.data().iter().all(|v| *v == 0.0) && self.b.data().iter().all(|v| *v == 0.0)
    }
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d_k)) V`, followed by
/// the output projection when one is supplied. A zero-initialized projection
/// makes the result exactly zero.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, out_proj: Option<&Linear>) -> Tensor {
    let d_k = q.shape()[1];
    assert_eq!(k.shape()[1], d_k, "attention: Q/K key dimension mismatch");
    // Scaling Q before the product touches m*d values instead of m^2.
    let scores = q.scale(1.0 / (d_k as f64).sqrt()).matmul_nt(k);
    let ctx = scores.softmax_last().matmul(v);
    match out_proj {
        Some(p) => p.forward(&ctx),
        None => ctx,
    }
}

/// Adaptive layer norm: normalize, then apply a timestep-conditioned
/// scale/shift derived from `ot`. The scale/shift maps are zero-initialized
/// so a fresh block starts as a plain layer norm.
pub fn init_modulated_norm(store: &mut ParameterStore, prefix: &str, d: usize) {
    Linear::init_zero(store, &format!("{prefix}/mod_scale"), d, d);
    Linear::init_zero(store, &format!("{prefix}/mod_shift"), d, d);
}


pub fn modulated_norm(store: &ParameterStore, prefix: &str, x: &Tensor, ot: &Tensor) -> Tensor {
    let scale = Linear::fetch(store, &format!("{prefix}/mod_scale")).forward(ot);
    let shift = Linear::fetch(store, &format!("{prefix}/mod_shift")).forward(ot);
    x.layer_norm_last(LN_EPS)
        .mul_bcast_row(&scale.add_scalar(1.0))
        .add_bcast_row(&shift)
}

/// Timestep modulation without the normalization: the scale/shift from `ot`
/// applied to the raw tokens. Zero-output blocks feed their value and
/// feed-forward paths from this so per-token magnitude — which a layer norm
/// erases — stays available to the zero-initialized readout projections.
pub fn modulated_raw(store: &ParameterStore, prefix: &str, x: &Tensor, ot: &Tensor) -> Tensor {
    let scale = Linear::fetch(store, &format!("{prefix}/mod_scale")).forward(ot);
    let shift = Linear::fetch(store, &format!("{prefix}/mod_shift")).forward(ot);
    x.mul_bcast_row(&scale.add_scalar(1.0)).add_bcast_row(&shift)
}

/// Activation gain inside zero-output blocks. Their out-projections start at
/// zero and move at most the learning rate per step under Adam, so the
/// steering rate is set by the magnitude of the activations feeding those
/// projections. Pre-norm layer norms erase the input scale, so the gain is
/// applied to the value/ff1 weights instead; block outputs stay exactly zero
/// at init either way.
pub const ZERO_BLOCK_GAIN: f64 = 64.0;

/// Hidden-width multiple for zero-output feed-forward layers (normal blocks
/// use 2x). More hidden units means more zero-projection coordinates moving
/// toward the target per optimizer step.
pub const ZERO_BLOCK_FF_MULT: usize = 8;

fn init_ff<R: Rng>(store: &mut ParameterStore, prefix: &str, d: usize, zero_out: bool, rng: &mut R) {
    // Zero-output blocks get a wider hidden layer: steering speed under a
    // fixed learning rate grows with the fan-in of the zero projection.
    let hidden = if zero_out { ZERO_BLOCK_FF_MULT * d } else { 2 * d };
    let gain = if zero_out { ZERO_BLOCK_GAIN } else { 1.0 };
    Linear::init(store, &format!("{prefix}/ff1"), d, hidden, gain * dense_std(d), rng);
    if zero_out {
        // Pair hidden columns as (w, -w): gelu(wx) - gelu(-wx) = wx, so the
        // zero readout can realize exact linear maps of its input from step
        // one instead of waiting for ff1 to reshape.
        let name = format!("{prefix}/ff1/w");
        let mut wd = store.get(&name).data().to_vec();
        let half = hidden / 2;
        for r in 0..d {
            for c in 0..half {
                wd[r * hidden + half + c] = -wd[r * hidden + c];
            }
        }
        store.set_data(&name, wd);
    }
    let out_std = if zero_out { 0.0 } else { INIT_STD };
    Linear::init(store, &format!("{prefix}/ff2"), hidden, d, out_std, rng);
}

fn ff_forward(store: &ParameterStore, prefix: &str, x: &Tensor) -> Tensor {
    let h = Linear::fetch(store, &format!("{prefix}/ff1")).forward(x).gelu();
    Linear::fetch(store, &format!("{prefix}/ff2")).forward(&h)
}

fn init_qkv<R: Rng>(store: &mut ParameterStore, prefix: &str, d: usize, v_gain: f64, rng: &mut R) {
    Linear::init(store, &format!("{prefix}/q"), d, d, dense_std(d), rng);
    Linear::init(store, &format!("{prefix}/k"), d, d, dense_std(d), rng);
    Linear::init(store, &format!("{prefix}/v"), d, d, v_gain * dense_std(d), rng);
}

/// Q/K from `x`, V from `v_in` — zero blocks read values off the raw
/// (un-normalized) tokens while keeping attention logits normalized.
fn qkv_split(store: &ParameterStore, prefix: &str, x: &Tensor, v_in: &Tensor) -> (Tensor, Tensor, Tensor) {
    (
        Linear::fetch(store, &format!("{prefix}/q")).forward(x),
        Linear::fetch(store, &format!("{prefix}/k")).forward(x),
        Linear::fetch(store, &format!("{prefix}/v")).forward(v_in),
    )
}

/// Double stream block: separate image/text streams with joint attention.
/// `zero_out` zero-initializes every sub-layer output projection so the
/// block contributes exactly nothing at fresh init.
pub fn init_dsb<R: Rng>(store: &mut ParameterStore, prefix: &str, d: usize, zero_out: bool, rng: &mut R) {
    let out_std = if zero_out { 0.0 } else { INIT_STD };
    let v_gain = if zero_out { ZERO_BLOCK_GAIN } else { 1.0 };
    for stream in ["img", "txt"] {
        init_modulated_norm(store, &format!("{prefix}/{stream}/norm1"), d);
        init_qkv(store, &format!("{prefix}/{stream}/attn"), d, v_gain, rng);
        Linear::init(store, &format!("{prefix}/{stream}/attn/out"), d, d, out_std, rng);
        init_modulated_norm(store, &format!("{prefix}/{stream}/norm2"), d);
        init_ff(store, &format!("{prefix}/{stream}"), d, zero_out, rng);
    }
}

/// Returns `(x_out, y_out, img_delta)` where `img_delta` is the total
/// contribution added to the image stream by this block.
pub fn dsb_forward(
    store: &ParameterStore,
    prefix: &str,
    x: &Tensor,
    y: &Tensor,
    ot: &Tensor,
    raw_paths: bool,
) -> (Tensor, Tensor, Tensor) {
    let m = x.shape()[0];
    let mx = modulated_norm(store, &format!("{prefix}/img/norm1"), x, ot);
    let my = modulated_norm(store, &format!("{prefix}/txt/norm1"), y, ot);
    let vx_in = if raw_paths { modulated_raw(store, &format!("{prefix}/img/norm1"), x, ot) } else { mx.clone() };
    let vy_in = if raw_paths { modulated_raw(store, &format!("{prefix}/txt/norm1"), y, ot) } else { my.clone() };
    let (qx, kx, vx) = qkv_split(store, &format!("{prefix}/img/attn"), &mx, &vx_in);
    let (qy, ky, vy) = qkv_split(store, &format!("{prefix}/txt/attn"), &my, &vy_in);
    let k = Tensor::concat_rows(&[kx, ky]);
    let v = Tensor::concat_rows(&[vx, vy]);
    let out_x = Linear::fetch(store, &format!("{prefix}/img/attn/out"));
    let out_y = Linear::fetch(store, &format!("{prefix}/txt/attn/out"));
    let attn_x = attention(&qx, &k, &v, Some(&out_x));
    let attn_y = attention(&qy, &k, &v, Some(&out_y));
    let x1 = x.add(&attn_x);
    let y1 = y.add(&attn_y);
    let ffx_in = if raw_paths {
        modulated_raw(store, &format!("{prefix}/img/norm2"), &x1, ot)
    } else {
        modulated_norm(store, &format!("{prefix}/img/norm2"), &x1, ot)
    };
    let ffy_in = if raw_paths {
        modulated_raw(store, &format!("{prefix}/txt/norm2"), &y1, ot)
    } else {
        modulated_norm(store, &format!("{prefix}/txt/norm2"), &y1, ot)
    };
    let ffx = ff_forward(store, &format!("{prefix}/img"), &ffx_in);
    let ffy = ff_forward(store, &format!("{prefix}/txt"), &ffy_in);
    let x2 = x1.add(&ffx);
    let y2 = y1.add(&ffy);
    debug_assert_eq!(x2.shape()[0], m);
    let img_delta = attn_x.add(&ffx);
    (x2, y2, img_delta)
}

/// Single stream block over the concatenated image+text sequence.
pub fn init_ssb<R: Rng>(store: &mut ParameterStore, prefix: &str, d: usize, zero_out: bool, rng: &mut R) {
    let out_std = if zero_out { 0.0 } else { INIT_STD };
    let v_gain = if zero_out { ZERO_BLOCK_GAIN } else { 1.0 };
    init_modulated_norm(store, &format!("{prefix}/norm1"), d);
    init_qkv(store, &format!("{prefix}/attn"), d, v_gain, rng);
    Linear::init(store, &format!("{prefix}/attn/out"), d, d, out_std, rng);
    init_modulated_norm(store, &format!("{prefix}/norm2"), d);
    init_ff(store, prefix, d, zero_out, rng);
}

/// Returns `(x_out, y_out, img_delta)`; the streams are concatenated for
/// attention and split back afterwards.
pub fn ssb_forward(
    store: &ParameterStore,
    prefix: &str,
    x: &Tensor,
    y: &Tensor,
    ot: &Tensor,
    raw_paths: bool,
) -> (Tensor, Tensor, Tensor) {
    let m = x.shape()[0];
    let t = y.shape()[0];
    let s = Tensor::concat_rows(&[x.clone(), y.clone()]);
    let ms = modulated_norm(store, &format!("{prefix}/norm1"), &s, ot);
    let v_in = if raw_paths { modulated_raw(store, &format!("{prefix}/norm1"), &s, ot) } else { ms.clone() };
    let (q, k, v) = qkv_split(store, &format!("{prefix}/attn"), &ms, &v_in);
    let out = Linear::fetch(store, &format!("{prefix}/attn/out"));
    let attn = attention(&q, &k, &v, Some(&out));
    let s1 = s.add(&attn);
    let ff_in = if raw_paths {
        modulated_raw(store, &format!("{prefix}/norm2"), &s1, ot)
    } else {
        modulated_norm(store, &format!("{prefix}/norm2"), &s1, ot)
    };
    let ff = ff_forward(store, prefix, &ff_in);
    let s2 = s1.add(&ff);
    let delta = attn.add(&ff);
    (
        s2.slice_rows(0, m),
        s2.slice_rows(m, t),
        delta.slice_rows(0, m),
    )
}
