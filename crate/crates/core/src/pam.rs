//! Patch adaptation: builds one unified control token grid out of several
//! heterogeneous condition maps by greedily assigning each patch position to
//! the condition that scores highest there.
//!
//! Selection runs autoregressively: each iteration scores every still-live
//! (condition, position) pair, claims the `n_p` best-scoring positions
//! (at most one condition per position), copies the winning condition's
//! feature rows into the unified grid, and kills the claimed positions for
//! every condition. After `m / n_p` iterations each of the `m` positions is
//! covered exactly once.
//!
//! Selection itself is discrete. Gradients pass straight through it: the
//! selection indices are constants of the backward pass and the copied rows
//! behave as an identity gather, so SP_out is differentiable with respect to
//! everything that feeds the selected feature rows while the scores receive
//! no gradient from the copy itself.

use crate::control::time_embed;
use crate::error::{Error, Result};
use crate::nn::{attention, dense_std, init_modulated_norm, modulated_norm, Linear, INIT_STD, LN_EPS};
use crate::params::ParameterStore;
use crate::select::top_r;
use crate::synth::{patchify, ConditionKind};
use crate::tensor::Tensor;
use rand::Rng;

/// Geometry of the adaptation module. `n_p` must divide the position count.
#[derive(Clone, Copy, Debug)]
pub struct PamConfig {
    pub canvas: usize,
    pub patch: usize,
    pub dim: usize,
    pub n_p: usize,
}

impl Default for PamConfig {
    fn default() -> Self {
        PamConfig { canvas: 32, patch: 2, dim: 64, n_p: 16 }
    }
}

impl PamConfig {
    pub fn grid(&self) -> usize {
        self.canvas / self.patch
    }

    /// Number of patch positions `m`.
    pub fn positions(&self) -> usize {
        self.grid() * self.grid()
    }

    pub fn iterations(&self) -> usize {
        self.positions() / self.n_p
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch == 0 || self.canvas == 0 || self.canvas % self.patch != 0 {
            return Err(Error::InvalidConfig(format!(
                "canvas {} not divisible by patch {}",
                self.canvas, self.patch
            )));
        }
        if self.dim == 0 || self.dim % 2 != 0 {
            return Err(Error::InvalidConfig(format!(
                "dim must be even and nonzero, got {}",
                self.dim
            )));
        }
        if self.n_p == 0 || self.positions() % self.n_p != 0 {
            return Err(Error::InvalidConfig(format!(
                "n_p = {} must divide the position count {}",
                self.n_p,
                self.positions()
            )));
        }
        Ok(())
    }
}

// ── parameters ──────────────────────────────────────────────────────────

fn isb_prefix(kind: ConditionKind) -> String {
    format!("pam/isb/{}", kind.name())
}

fn init_isb<R: Rng>(store: &mut ParameterStore, prefix: &str, d: usize, rng: &mut R) {
    init_modulated_norm(store, &format!("{prefix}/norm1"), d);
    for name in ["q", "k", "v", "out"] {
        Linear::init(store, &format!("{prefix}/attn/{name}"), d, d, dense_std(d), rng);
    }
    init_modulated_norm(store, &format!("{prefix}/norm2"), d);
    for name in ["q", "k", "v", "out"] {
        Linear::init(store, &format!("{prefix}/cross/{name}"), d, d, dense_std(d), rng);
    }
    init_modulated_norm(store, &format!("{prefix}/norm3"), d);
    let hidden = 2 * d;
    Linear::init(store, &format!("{prefix}/ff1"), d, hidden, dense_std(d), rng);
    Linear::init(store, &format!("{prefix}/ff2"), hidden, d, dense_std(hidden), rng);
    // The score head is randomly initialized: hard selection gives it no
    // gradient, so a zero head would freeze every score at 0 and the
    // tie-break would hand all positions to the first condition forever.
    // Random heads make selection content- and timestep-dependent instead.
    Linear::init(store, &format!("{prefix}/score"), d, 1, dense_std(d), rng);
}

pub fn init_pam<R: Rng>(store: &mut ParameterStore, cfg: &PamConfig, rng: &mut R) {
    let d = cfg.dim;
    store.insert_normal("pam/pos", vec![cfg.positions(), d], INIT_STD, rng);
    crate::control::init_time_embed(store, "pam/time", d, rng);
    let p2 = cfg.patch * cfg.patch;
    for kind in ConditionKind::ALL {
        Linear::init(store, &format!("pam/enc/{}", kind.name()), p2, d, dense_std(p2), rng);
        init_isb(store, &isb_prefix(kind), d, rng);
    }
    init_isb(store, "pam/isb_sp", d, rng);
}

// ── encoding ────────────────────────────────────────────────────────────

/// Patchifies one condition map and lifts each patch into feature space;
/// the positional embedding is shared across conditions.
pub fn encode_condition(
    store: &ParameterStore,
    cfg: &PamConfig,
    map: &[f64],
    kind: ConditionKind,
) -> Result<Tensor> {
    if map.len() != cfg.canvas * cfg.canvas {
        return Err(Error::ShapeMismatch {
            op: "encode_condition",
            detail: format!("map has {} values, canvas is {}^2", map.len(), cfg.canvas),
        });
    }
    let tokens = patchify(map, cfg.canvas, cfg.patch)?;
    let enc = Linear::fetch(store, &format!("pam/enc/{}", kind.name()));
    Ok(enc.forward(&tokens).add(&store.get("pam/pos")))
}

/// Per-condition feature grids plus the per-(condition, position) live mask.
/// Positions die jointly: once any condition claims a position, that position
/// is dead for every condition, so all mask rows stay identical.
pub struct ConditionFeatures {
    pub kinds: Vec<ConditionKind>,
    pub feats: Vec<Tensor>,
    pub live: Vec<Vec<bool>>,
}

impl ConditionFeatures {
    pub fn positions(&self) -> usize {
        self.live.first().map_or(0, |row| row.len())
    }

    /// Positions where at least one condition is still selectable.
    pub fn live_positions(&self) -> usize {
        let m = self.positions();
        (0..m).filter(|&p| self.live.iter().any(|row| row[p])).count()
    }
}

/// The unified control grid under construction.
pub struct UnifiedControl {
    pub sp: Tensor,
    pub filled: Vec<bool>,
}

impl UnifiedControl {
    pub fn new(m: usize, d: usize) -> UnifiedControl {
        UnifiedControl {
            sp: Tensor::zeros(vec![m, d]),
            filled: vec![false; m],
        }
    }
}

// ── scoring ─────────────────────────────────────────────────────────────

/// One Image Stream Block: pre-norm self-attention, cross-attention to the
/// text tokens, and a feed-forward, each modulated by `O_t`.
pub fn isb_forward(
    store: &ParameterStore,
    prefix: &str,
    x: &Tensor,
    y: &Tensor,
    ot: &Tensor,
) -> Tensor {
    let h = modulated_norm(store, &format!("{prefix}/norm1"), x, ot);
    let q = Linear::fetch(store, &format!("{prefix}/attn/q")).forward(&h);
    let k = Linear::fetch(store, &format!("{prefix}/attn/k")).forward(&h);
    let v = Linear::fetch(store, &format!("{prefix}/attn/v")).forward(&h);
    let out = Linear::fetch(store, &format!("{prefix}/attn/out"));
    let x1 = x.add(&attention(&q, &k, &v, Some(&out)));

    let hq = modulated_norm(store, &format!("{prefix}/norm2"), &x1, ot);
    let q = Linear::fetch(store, &format!("{prefix}/cross/q")).forward(&hq);
    let k = Linear::fetch(store, &format!("{prefix}/cross/k")).forward(y);
    let v = Linear::fetch(store, &format!("{prefix}/cross/v")).forward(y);
    let out = Linear::fetch(store, &format!("{prefix}/cross/out"));
    let x2 = x1.add(&attention(&q, &k, &v, Some(&out)));

    let hf = modulated_norm(store, &format!("{prefix}/norm3"), &x2, ot);
    let f = Linear::fetch(store, &format!("{prefix}/ff1")).forward(&hf).gelu();
    x2.add(&Linear::fetch(store, &format!("{prefix}/ff2")).forward(&f))
}

pub fn isb_score(store: &ParameterStore, prefix: &str, tokens: &Tensor) -> Tensor {
    Linear::fetch(store, &format!("{prefix}/score")).forward(&tokens.layer_norm_last(LN_EPS))
}

/// Scores every (condition, position) pair: the per-condition score plus the
/// shared score of the unified grid, turned into a probability map row by
/// row — each condition's probabilities are its normalized absolute
/// z-scores over live positions, dead entries masked to `-inf`. The
/// row-wise standardization makes the map invariant to any affine reshaping
/// of a condition's scores: a position earns probability only by deviating
/// from that condition's *typical* patch, in either direction. A mostly
/// blank map (sparse keypoints) concentrates its mass on the few patches
/// that actually carry content instead of buying positions with a uniformly
/// inflated head bias, and a uniformly scaled-up head changes nothing.
/// Returns the probability map as an `[n, m]` tensor.
pub fn score_conditions(
    store: &ParameterStore,
    cfg: &PamConfig,
    features: &ConditionFeatures,
    sp: &UnifiedControl,
    y: &Tensor,
    ot: &Tensor,
) -> Tensor {
    let m = cfg.positions();
    // TEMP experiment: force selection toward one condition id.
    if let Ok(only) = std::env::var("PAM_ONLY") {
        let want: usize = only.parse().unwrap();
        let n = features.kinds.len();
        let mut probs = vec![f64::NEG_INFINITY; n * m];
        for k in 0..n {
            let bonus = if features.kinds[k].id() == want { 1.0 } else { 0.0 };
            for p in 0..m {
                if features.live[k][p] {
                    probs[k * m + p] = bonus;
                }
            }
        }
        return Tensor::from_vec(vec![n, m], probs);
    }
    let sp_tokens = isb_forward(store, "pam/isb_sp", &sp.sp, y, ot);
    let w_sp = isb_score(store, "pam/isb_sp", &sp_tokens); // [m, 1]
    let mut rows = Vec::with_capacity(features.kinds.len());
    for (i, kind) in features.kinds.iter().enumerate() {
        let live = &features.live[i];
        let mut mask = vec![0.0; m * cfg.dim];
        for (p, &alive) in live.iter().enumerate() {
            if alive {
                mask[p * cfg.dim..(p + 1) * cfg.dim].fill(1.0);
            }
        }
        let masked = features.feats[i].masked_fill(&mask, 0.0);
        let tokens = isb_forward(store, &isb_prefix(*kind), &masked, y, ot);
        let w_c = isb_score(store, &isb_prefix(*kind), &tokens); // [m, 1]
        rows.push(w_c.add(&w_sp).reshape(vec![1, m]));
    }
    let stacked = Tensor::concat_rows(&rows); // [n, m]

    // Selection indices are constants of the backward pass, so the
    // probability map is plain data. A row whose live scores are (near-)
    // constant — e.g. under zero-initialized score heads — falls back to a
    // uniform distribution, which keeps selection at pure tie-breaking.
    let n = features.kinds.len();
    let scores = stacked.data();
    let mut probs = vec![f64::NEG_INFINITY; n * m];
    for k in 0..n {
        let live = &features.live[k];
        let alive: Vec<usize> = (0..m).filter(|&p| live[p]).collect();
        if alive.is_empty() {
            continue;
        }
        let row = &scores[k * m..(k + 1) * m];
        let count = alive.len() as f64;
        let mean = alive.iter().map(|&p| row[p]).sum::<f64>() / count;
        let var = alive.iter().map(|&p| (row[p] - mean).powi(2)).sum::<f64>() / count;
        let std = var.sqrt();
        let sal: Vec<f64> = if std < 1e-12 {
            vec![1.0; alive.len()]
        } else {
            alive.iter().map(|&p| (row[p] - mean).abs() / std).collect()
        };
        let z: f64 = sal.iter().sum();
        if z == 0.0 {
            let u = 1.0 / count;
            for &p in &alive {
                probs[k * m + p] = u;
            }
        } else {
            for (&p, &s) in alive.iter().zip(&sal) {
                probs[k * m + p] = s / z;
            }
        }
    }
    Tensor::from_vec(vec![n, m], probs)
}

// ── selection ───────────────────────────────────────────────────────────

/// One claimed (position, condition) pair with the score that won it.
#[derive(Clone, Copy, Debug)]
pub struct Chosen {
    pub position: usize,
    pub condition: ConditionKind,
    pub score: f64,
}

/// Full record of one adaptation run: which condition claimed each position,
/// iteration by iteration, at a given timestep.
#[derive(Clone, Debug)]
pub struct SelectionTrace {
    pub t: f64,
    pub iterations: Vec<Vec<Chosen>>,
}

impl SelectionTrace {
    /// Final position -> condition assignment, `None` where unclaimed.
    pub fn assignment(&self, m: usize) -> Vec<Option<ConditionKind>> {
        let mut out = vec![None; m];
        for iter in &self.iterations {
            for c in iter {
                out[c.position] = Some(c.condition);
            }
        }
        out
    }

    /// Fraction of claimed positions per condition id.
    pub fn fractions(&self, m: usize) -> [f64; 4] {
        let mut counts = [0usize; 4];
        let mut total = 0usize;
        for a in self.assignment(m).into_iter().flatten() {
            counts[a.id()] += 1;
            total += 1;
        }
        let mut out = [0.0; 4];
        if total > 0 {
            for (o, c) in out.iter_mut().zip(counts) {
                *o = c as f64 / total as f64;
            }
        }
        out
    }
}

/// Claims the `n_p` best-scoring live entries of `m_prob`, at most one
/// condition per position. Ties break toward the lower flat index, i.e.
/// lower condition index first, then lower position. Claimed positions are
/// killed for every condition and the winners' feature rows are gated into
/// the unified grid.
pub fn select_step(
    features: &mut ConditionFeatures,
    sp: &mut UnifiedControl,
    m_prob: &Tensor,
    n_p: usize,
) -> Result<Vec<Chosen>> {
    let n = features.kinds.len();
    let m = features.positions();
    assert_eq!(m_prob.shape(), &[n, m], "select_step: m_prob shape mismatch");
    let have = features.live_positions();
    if have < n_p {
        return Err(Error::NotEnoughLivePositions { need: n_p, have });
    }

    let flat = m_prob.data();
    let order = top_r(flat, flat.len())?;
    let mut chosen: Vec<Chosen> = Vec::with_capacity(n_p);
    let mut claimed = vec![false; m];
    for idx in order {
        if chosen.len() == n_p {
            break;
        }
        let (k, p) = (idx / m, idx % m);
        if claimed[p] || !features.live[k][p] {
            continue;
        }
        claimed[p] = true;
        chosen.push(Chosen {
            position: p,
            condition: features.kinds[k],
            score: flat[idx],
        });
    }
    debug_assert_eq!(chosen.len(), n_p);

    // Straight-through copy: the winners' rows are gathered as-is, so the
    // backward pass treats selection as a constant index map and routes the
    // output gradient into the selected feature rows only.
    let mut picked = Vec::with_capacity(n_p);
    let mut positions = Vec::with_capacity(n_p);
    for c in &chosen {
        let k = features
            .kinds
            .iter()
            .position(|kk| *kk == c.condition)
            .expect("chosen condition must exist");
        picked.push(features.feats[k].select_rows(&[c.position]));
        positions.push(c.position);
    }
    let rows = Tensor::concat_rows(&picked);
    sp.sp = sp.sp.add_rows_at(&positions, &rows);
    for &p in &positions {
        sp.filled[p] = true;
        for row in features.live.iter_mut() {
            row[p] = false;
        }
    }
    Ok(chosen)
}

/// Runs the full adaptation loop over all positions and returns the unified
/// control tokens `[m, d]` together with the selection trace.
pub fn patch_adapt(
    store: &ParameterStore,
    cfg: &PamConfig,
    conditions: &[(ConditionKind, &[f64])],
    y: &Tensor,
    t: f64,
) -> Result<(Tensor, SelectionTrace)> {
    cfg.validate()?;
    if conditions.is_empty() {
        return Err(Error::InvalidConfig("patch_adapt needs at least one condition".into()));
    }
    let m = cfg.positions();
    let mut features = ConditionFeatures {
        kinds: conditions.iter().map(|(k, _)| *k).collect(),
        feats: conditions
            .iter()
            .map(|(k, map)| encode_condition(store, cfg, map, *k))
            .collect::<Result<Vec<_>>>()?,
        live: vec![vec![true; m]; conditions.len()],
    };
    let ot = time_embed(store, "pam/time", t, cfg.dim)?;
    let mut sp = UnifiedControl::new(m, cfg.dim);
    let mut trace = SelectionTrace { t, iterations: Vec::with_capacity(cfg.iterations()) };
    for _ in 0..cfg.iterations() {
        let m_prob = score_conditions(store, cfg, &features, &sp, y, &ot);
        let chosen = select_step(&mut features, &mut sp, &m_prob, cfg.n_p)?;
        trace.iterations.push(chosen);
    }
    debug_assert!(sp.filled.iter().all(|&f| f));
    Ok((sp.sp, trace))
}

// ── trace rendering / aggregation ───────────────────────────────────────

/// Renders the final assignment as an RGB image, `cell` pixels per patch
/// position, using each condition's fixed color. Errors if any position is
/// unassigned.
pub fn trace_to_colormap(trace: &SelectionTrace, grid: usize, cell: usize) -> Result<Vec<u8>> {
    let m = grid * grid;
    let assignment = trace.assignment(m);
    let side = grid * cell;
    let mut img = vec![0u8; side * side * 3];
    for (p, a) in assignment.iter().enumerate() {
        let kind = a.ok_or_else(|| {
            Error::InvalidConfig(format!("trace leaves position {p} unassigned"))
        })?;
        let color = kind.color();
        let (gy, gx) = (p / grid, p % grid);
        for dy in 0..cell {
            for dx in 0..cell {
                let px = ((gy * cell + dy) * side + gx * cell + dx) * 3;
                img[px..px + 3].copy_from_slice(&color);
            }
        }
    }
    Ok(img)
}

/// Groups traces by timestep (descending) and averages the per-condition
/// selection fractions within each group.
pub fn selection_histogram(traces: &[SelectionTrace], m: usize) -> Vec<(f64, [f64; 4])> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<u64, (f64, [f64; 4], usize)> = BTreeMap::new();
    for tr in traces {
        let entry = groups.entry(tr.t.to_bits()).or_insert((tr.t, [0.0; 4], 0));
        let f = tr.fractions(m);
        for (acc, v) in entry.1.iter_mut().zip(f) {
            *acc += v;
        }
        entry.2 += 1;
    }
    let mut out: Vec<(f64, [f64; 4])> = groups
        .into_values()
        .map(|(t, sums, count)| {
            let mut avg = sums;
            for v in avg.iter_mut() {
                *v /= count as f64;
            }
            (t, avg)
        })
        .collect();
    out.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    out
}
