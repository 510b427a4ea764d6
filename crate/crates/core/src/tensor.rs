//! Dense tensor with reverse-mode automatic differentiation.
//!
//! Every operation records its parents and a backward closure on the value it
//! produces; `backward()` on a scalar walks the graph in reverse topological
//! order and accumulates gradients into every reachable tensor that requires
//! them. Values are immutable after creation; gradient accumulation is the
//! only in-place mutation and happens inside a single backward pass.
//!
//! Inference paths wrap work in [`NoGradGuard`], which suppresses graph
//! recording entirely.

use crate::linalg::{axpy, mm, mm_nt, mm_tn};
use std::cell::{Cell, RefCell};
use std::collections::HashSet;
use std::rc::Rc;

thread_local! {
    static NO_GRAD: Cell<bool> = const { Cell::new(false) };
    static NEXT_ID: Cell<u64> = const { Cell::new(0) };
}

fn fresh_id() -> u64 {
    NEXT_ID.with(|c| {
        let id = c.get();
        c.set(id + 1);
        id
    })
}

/// Disables graph recording for its lifetime (current thread).
pub struct NoGradGuard {
    prev: bool,
}

impl NoGradGuard {
    pub fn new() -> Self {
        let prev = NO_GRAD.with(|c| c.replace(true));
        NoGradGuard { prev }
    }
}

impl Default for NoGradGuard {
    fn default() -> Self {
        Self::new()
    }
}

impl Drop for NoGradGuard {
    fn drop(&mut self) {
        NO_GRAD.with(|c| c.set(self.prev));
    }
}

fn no_grad_active() -> bool {
    NO_GRAD.with(|c| c.get())
}

type BackwardFn = Box<dyn Fn(&[f64], &[Tensor])>;

struct Node {
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

pub struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    grad: RefCell<Option<Vec<f64>>>,
    node: Option<Node>,
}

/// A dense n-dimensional value. Cloning is cheap (shared storage).
#[derive(Clone)]
pub struct Tensor(Rc<Inner>);

impl std::fmt::Debug for Tensor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .finish()
    }
}

impl Tensor {
    // ── construction ──────────────────────────────────────────────────

    pub fn from_vec(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "data length must equal product of shape extents"
        );
        Tensor(Rc::new(Inner {
            id: fresh_id(),
            shape,
            data,
            requires_grad: false,
            grad: RefCell::new(None),
            node: None,
        }))
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, vec![0.0; n])
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor::from_vec(vec![1], vec![v])
    }

    pub fn randn<R: rand::Rng>(shape: Vec<usize>, std: f64, rng: &mut R) -> Tensor {
        use rand_distr::{Distribution, StandardNormal};
        let n: usize = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                z * std
            })
            .collect();
        Tensor::from_vec(shape, data)
    }

    /// Marks this tensor as a gradient leaf. Only meaningful on freshly
    /// created values.
    pub fn requires_grad(self) -> Tensor {
        if no_grad_active() {
            return self;
        }
        let inner = Rc::try_unwrap(self.0).unwrap_or_else(|rc| Inner {
            id: fresh_id(),
            shape: rc.shape.clone(),
            data: rc.data.clone(),
            requires_grad: rc.requires_grad,
            grad: RefCell::new(None),
            node: None,
        });
        Tensor(Rc::new(Inner {
            requires_grad: true,
            ..inner
        }))
    }

    /// A leaf sharing this tensor's values but cut off from the graph.
    pub fn detach(&self) -> Tensor {
        Tensor::from_vec(self.0.shape.clone(), self.0.data.clone())
    }

    // ── accessors ─────────────────────────────────────────────────────

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub fn len(&self) -> usize {
        self.0.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.data.is_empty()
    }

    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() requires a scalar tensor");
        self.0.data[0]
    }

    pub fn is_leaf_requiring_grad(&self) -> bool {
        self.0.requires_grad && self.0.node.is_none()
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.borrow().clone()
    }

    pub fn all_finite(&self) -> bool {
        self.0.data.iter().all(|v| v.is_finite())
    }

    fn rows_cols_last(&self) -> (usize, usize) {
        let last = *self.0.shape.last().expect("tensor has no axes");
        assert!(last > 0, "zero-length trailing axis");
        (self.0.data.len() / last, last)
    }

    fn dims2(&self, op: &str) -> (usize, usize) {
        assert_eq!(self.0.shape.len(), 2, "{op}: expected a 2-D tensor");
        (self.0.shape[0], self.0.shape[1])
    }

    fn make(shape: Vec<usize>, data: Vec<f64>, parents: Vec<Tensor>, backward: BackwardFn) -> Tensor {
        let track = !no_grad_active() && parents.iter().any(|p| p.0.requires_grad);
        Tensor(Rc::new(Inner {
            id: fresh_id(),
            shape,
            data,
            requires_grad: track,
            grad: RefCell::new(None),
            node: if track {
                Some(Node { parents, backward })
            } else {
                None
            },
        }))
    }

    fn accumulate(&self, contrib: &[f64]) {
        if !self.0.requires_grad {
            return;
        }
        let mut g = self.0.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => axpy(buf, 1.0, contrib),
            None => *g = Some(contrib.to_vec()),
        }
    }

    fn accumulate_owned(&self, contrib: Vec<f64>) {
        if !self.0.requires_grad {
            return;
        }
        let mut g = self.0.grad.borrow_mut();
        match g.as_mut() {
            Some(buf) => axpy(buf, 1.0, &contrib),
            None => *g = Some(contrib),
        }
    }

    // ── backward ──────────────────────────────────────────────────────

    /// Reverse pass from a scalar output. Gradients accumulate into every
    /// reachable tensor with `requires_grad`.
    pub fn backward(&self) {
        assert_eq!(self.len(), 1, "backward() requires a scalar output");
        // Iterative DFS postorder so deep graphs do not overflow the stack.
        let mut order: Vec<Tensor> = Vec::new();
        let mut visited: HashSet<u64> = HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.0.id);
        while let Some((t, pi)) = stack.pop() {
            let nparents = t.0.node.as_ref().map_or(0, |n| n.parents.len());
            if pi < nparents {
                stack.push((t.clone(), pi + 1));
                let parent = t.0.node.as_ref().unwrap().parents[pi].clone();
                if parent.0.requires_grad && visited.insert(parent.0.id) {
                    stack.push((parent, 0));
                }
            } else {
                order.push(t);
            }
        }
        self.accumulate(&[1.0]);
        for t in order.iter().rev() {
            if let Some(node) = t.0.node.as_ref() {
                let g = t.0.grad.borrow().clone();
                if let Some(g) = g {
                    (node.backward)(&g, &node.parents);
                }
            }
        }
    }

    // ── elementwise ───────────────────────────────────────────────────

    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "add: shape mismatch");
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, p| {
                p[0].accumulate(g);
                p[1].accumulate(g);
            }),
        )
    }

    pub fn sub(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "sub: shape mismatch");
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a - b)
            .collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, p| {
                p[0].accumulate(g);
                p[1].accumulate_owned(g.iter().map(|v| -v).collect());
            }),
        )
    }

    pub fn mul(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape(), other.shape(), "mul: shape mismatch");
        let data = self
            .data()
            .iter()
            .zip(other.data())
            .map(|(a, b)| a * b)
            .collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), other.clone()],
            Box::new(|g, p| {
                p[0].accumulate_owned(g.iter().zip(p[1].data()).map(|(gv, b)| gv * b).collect());
                p[1].accumulate_owned(g.iter().zip(p[0].data()).map(|(gv, a)| gv * a).collect());
            }),
        )
    }

    pub fn scale(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v * c).collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |g, p| {
                p[0].accumulate_owned(g.iter().map(|v| v * c).collect());
            }),
        )
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        let data = self.data().iter().map(|v| v + c).collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(|g, p| p[0].accumulate(g)),
        )
    }

    pub fn gelu(&self) -> Tensor {
        const C: f64 = 0.7978845608028654; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let data = self
            .data()
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()))
            .collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(|g, p| {
                let contrib: Vec<f64> = g
                    .iter()
                    .zip(p[0].data())
                    .map(|(gv, &x)| {
                        let u = C * (x + A * x * x * x);
                        let th = u.tanh();
                        let d = 0.5 * (1.0 + th)
                            + 0.5 * x * (1.0 - th * th) * C * (1.0 + 3.0 * A * x * x);
                        gv * d
                    })
                    .collect();
                p[0].accumulate_owned(contrib);
            }),
        )
    }

    /// `mask[i] == 1.0` keeps the value, `0.0` replaces it with `fill`.
    /// Gradient flows only through kept entries.
    pub fn masked_fill(&self, mask: &[f64], fill: f64) -> Tensor {
        assert_eq!(mask.len(), self.len(), "masked_fill: mask length mismatch");
        let data = self
            .data()
            .iter()
            .zip(mask)
            .map(|(&v, &m)| if m != 0.0 { v } else { fill })
            .collect();
        let mask_owned: Vec<f64> = mask.to_vec();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |g, p| {
                p[0].accumulate_owned(
                    g.iter()
                        .zip(&mask_owned)
                        .map(|(gv, &m)| if m != 0.0 { *gv } else { 0.0 })
                        .collect(),
                );
            }),
        )
    }

    // ── broadcast over rows ───────────────────────────────────────────

    /// Multiplies every row of `self` elementwise by the vector `v`.
    pub fn mul_bcast_row(&self, v: &Tensor) -> Tensor {
        let (rows, cols) = self.rows_cols_last();
        assert_eq!(v.len(), cols, "mul_bcast_row: vector length mismatch");
        let mut data = self.data().to_vec();
        for r in 0..rows {
            for (x, vv) in data[r * cols..(r + 1) * cols].iter_mut().zip(v.data()) {
                *x *= vv;
            }
        }
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), v.clone()],
            Box::new(move |g, p| {
                let vd = p[1].data();
                let xd = p[0].data();
                let mut dx = vec![0.0; xd.len()];
                let mut dv = vec![0.0; cols];
                for r in 0..rows {
                    let base = r * cols;
                    for c in 0..cols {
                        dx[base + c] = g[base + c] * vd[c];
                        dv[c] += g[base + c] * xd[base + c];
                    }
                }
                p[0].accumulate_owned(dx);
                p[1].accumulate_owned(dv);
            }),
        )
    }

    /// Adds the vector `v` to every row of `self`.
    pub fn add_bcast_row(&self, v: &Tensor) -> Tensor {
        let (rows, cols) = self.rows_cols_last();
        assert_eq!(v.len(), cols, "add_bcast_row: vector length mismatch");
        let mut data = self.data().to_vec();
        for r in 0..rows {
            for (x, vv) in data[r * cols..(r + 1) * cols].iter_mut().zip(v.data()) {
                *x += vv;
            }
        }
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), v.clone()],
            Box::new(move |g, p| {
                p[0].accumulate(g);
                let mut dv = vec![0.0; cols];
                for r in 0..rows {
                    axpy(&mut dv, 1.0, &g[r * cols..(r + 1) * cols]);
                }
                p[1].accumulate_owned(dv);
            }),
        )
    }

    /// Multiplies the whole tensor by a scalar tensor (shape `[1]`).
    pub fn mul_scalar_t(&self, s: &Tensor) -> Tensor {
        assert_eq!(s.len(), 1, "mul_scalar_t: scalar tensor required");
        let sv = s.item();
        let data = self.data().iter().map(|v| v * sv).collect();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), s.clone()],
            Box::new(move |g, p| {
                let sv = p[1].data()[0];
                p[0].accumulate_owned(g.iter().map(|v| v * sv).collect());
                let ds: f64 = g.iter().zip(p[0].data()).map(|(gv, x)| gv * x).sum();
                p[1].accumulate(&[ds]);
            }),
        )
    }

    // ── matrix products ───────────────────────────────────────────────

    pub fn matmul(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.dims2("matmul");
        let (k2, n) = other.dims2("matmul");
        assert_eq!(k, k2, "matmul: inner extents disagree ({k} vs {k2})");
        let data = mm(self.data(), other.data(), m, k, n);
        Tensor::make(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g, p| {
                // dA = g * B^T, dB = A^T * g
                p[0].accumulate_owned(mm_nt(g, p[1].data(), m, n, k));
                p[1].accumulate_owned(mm_tn(p[0].data(), g, m, k, n));
            }),
        )
    }

    /// `self[m,k] * other[n,k]^T`, i.e. dot products of rows.
    pub fn matmul_nt(&self, other: &Tensor) -> Tensor {
        let (m, k) = self.dims2("matmul_nt");
        let (n, k2) = other.dims2("matmul_nt");
        assert_eq!(k, k2, "matmul_nt: inner extents disagree ({k} vs {k2})");
        let data = mm_nt(self.data(), other.data(), m, k, n);
        Tensor::make(
            vec![m, n],
            data,
            vec![self.clone(), other.clone()],
            Box::new(move |g, p| {
                // dA = g * B, dB = g^T * A
                p[0].accumulate_owned(mm(g, p[1].data(), m, n, k));
                p[1].accumulate_owned(mm_tn(g, p[0].data(), m, n, k));
            }),
        )
    }

    // ── reductions and row-axis ops ───────────────────────────────────

    pub fn sum_all(&self) -> Tensor {
        let s: f64 = self.data().iter().sum();
        Tensor::make(
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(|g, p| {
                p[0].accumulate_owned(vec![g[0]; p[0].len()]);
            }),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len() as f64;
        let s: f64 = self.data().iter().sum();
        Tensor::make(
            vec![1],
            vec![s / n],
            vec![self.clone()],
            Box::new(move |g, p| {
                p[0].accumulate_owned(vec![g[0] / n; p[0].len()]);
            }),
        )
    }

    /// Numerically stabilized softmax over the last axis.
    pub fn softmax_last(&self) -> Tensor {
        let (rows, cols) = self.rows_cols_last();
        let mut data = vec![0.0; self.len()];
        for r in 0..rows {
            let row = &self.data()[r * cols..(r + 1) * cols];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = &mut data[r * cols..(r + 1) * cols];
            let mut denom = 0.0;
            for (o, &x) in out.iter_mut().zip(row) {
                let e = (x - mx).exp();
                *o = e;
                denom += e;
            }
            let inv = 1.0 / denom;
            for o in out.iter_mut() {
                *o *= inv;
            }
        }
        // The backward closure is dropped under no-grad; skip the clone too.
        let probs = if no_grad_active() { Vec::new() } else { data.clone() };
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |g, p| {
                let mut dx = vec![0.0; probs.len()];
                for r in 0..rows {
                    let base = r * cols;
                    let mut dot = 0.0;
                    for c in 0..cols {
                        dot += g[base + c] * probs[base + c];
                    }
                    for c in 0..cols {
                        dx[base + c] = probs[base + c] * (g[base + c] - dot);
                    }
                }
                p[0].accumulate_owned(dx);
            }),
        )
    }

    /// Normalizes the last axis to mean 0, variance 1 (eps inside the sqrt).
    /// Learned scale/shift live outside via the broadcast ops.
    pub fn layer_norm_last(&self, eps: f64) -> Tensor {
        let (rows, cols) = self.rows_cols_last();
        let mut data = vec![0.0; self.len()];
        let mut inv_stds = vec![0.0; rows];
        for r in 0..rows {
            let row = &self.data()[r * cols..(r + 1) * cols];
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_stds[r] = inv;
            for (o, &x) in data[r * cols..(r + 1) * cols].iter_mut().zip(row) {
                *o = (x - mean) * inv;
            }
        }
        let xhat = data.clone();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone()],
            Box::new(move |g, p| {
                let mut dx = vec![0.0; xhat.len()];
                let nf = cols as f64;
                for r in 0..rows {
                    let base = r * cols;
                    let gr = &g[base..base + cols];
                    let xr = &xhat[base..base + cols];
                    let mean_g = gr.iter().sum::<f64>() / nf;
                    let mean_gx = gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / nf;
                    for c in 0..cols {
                        dx[base + c] = inv_stds[r] * (gr[c] - mean_g - xr[c] * mean_gx);
                    }
                }
                p[0].accumulate_owned(dx);
            }),
        )
    }

    // ── row selection / assembly ──────────────────────────────────────

    /// Gathers the given rows of a 2-D tensor.
    pub fn select_rows(&self, indices: &[usize]) -> Tensor {
        let (rows, cols) = self.dims2("select_rows");
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            assert!(i < rows, "select_rows: index {i} out of range ({rows} rows)");
            data.extend_from_slice(&self.data()[i * cols..(i + 1) * cols]);
        }
        let idx: Vec<usize> = indices.to_vec();
        Tensor::make(
            vec![indices.len(), cols],
            data,
            vec![self.clone()],
            Box::new(move |g, p| {
                let mut dx = vec![0.0; p[0].len()];
                for (j, &i) in idx.iter().enumerate() {
                    axpy(&mut dx[i * cols..(i + 1) * cols], 1.0, &g[j * cols..(j + 1) * cols]);
                }
                p[0].accumulate_owned(dx);
            }),
        )
    }

    /// `out = self` with `rows[j]` added at row `indices[j]`.
    pub fn add_rows_at(&self, indices: &[usize], rows: &Tensor) -> Tensor {
        let (nrows, cols) = self.dims2("add_rows_at");
        let (k, cols2) = rows.dims2("add_rows_at");
        assert_eq!(cols, cols2, "add_rows_at: column mismatch");
        assert_eq!(k, indices.len(), "add_rows_at: index/row count mismatch");
        let mut data = self.data().to_vec();
        for (j, &i) in indices.iter().enumerate() {
            assert!(i < nrows, "add_rows_at: index {i} out of range");
            axpy(&mut data[i * cols..(i + 1) * cols], 1.0, &rows.data()[j * cols..(j + 1) * cols]);
        }
        let idx: Vec<usize> = indices.to_vec();
        Tensor::make(
            self.0.shape.clone(),
            data,
            vec![self.clone(), rows.clone()],
            Box::new(move |g, p| {
                p[0].accumulate(g);
                let mut dr = vec![0.0; idx.len() * cols];
                for (j, &i) in idx.iter().enumerate() {
                    dr[j * cols..(j + 1) * cols].copy_from_slice(&g[i * cols..(i + 1) * cols]);
                }
                p[1].accumulate_owned(dr);
            }),
        )
    }

    /// Stacks 2-D tensors with equal column counts along the row axis.
    pub fn concat_rows(parts: &[Tensor]) -> Tensor {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let cols = parts[0].dims2("concat_rows").1;
        let mut data = Vec::new();
        let mut total = 0;
        for p in parts {
            let (r, c) = p.dims2("concat_rows");
            assert_eq!(c, cols, "concat_rows: column mismatch");
            total += r;
            data.extend_from_slice(p.data());
        }
        let row_counts: Vec<usize> = parts.iter().map(|p| p.shape()[0]).collect();
        Tensor::make(
            vec![total, cols],
            data,
            parts.to_vec(),
            Box::new(move |g, p| {
                let mut offset = 0;
                for (part, &r) in p.iter().zip(&row_counts) {
                    part.accumulate(&g[offset..offset + r * cols]);
                    offset += r * cols;
                }
            }),
        )
    }

    /// Contiguous row slice of a 2-D tensor.
    pub fn slice_rows(&self, start: usize, len: usize) -> Tensor {
        let (rows, cols) = self.dims2("slice_rows");
        assert!(start + len <= rows, "slice_rows: range out of bounds");
        let data = self.data()[start * cols..(start + len) * cols].to_vec();
        Tensor::make(
            vec![len, cols],
            data,
            vec![self.clone()],
            Box::new(move |g, p| {
                let mut dx = vec![0.0; p[0].len()];
                dx[start * cols..(start + len) * cols].copy_from_slice(g);
                p[0].accumulate_owned(dx);
            }),
        )
    }

    /// Custom unary op: `data` is the forward result, `vjp` maps the output
    /// gradient to the input gradient.
    pub fn map_unary<F>(input: &Tensor, shape: Vec<usize>, data: Vec<f64>, vjp: F) -> Tensor
    where
        F: Fn(&[f64]) -> Vec<f64> + 'static,
    {
        Tensor::make(
            shape,
            data,
            vec![input.clone()],
            Box::new(move |g, p| p[0].accumulate_owned(vjp(g))),
        )
    }

    pub fn reshape(&self, shape: Vec<usize>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            self.len(),
            "reshape: element count mismatch"
        );
        Tensor::make(
            shape,
            self.data().to_vec(),
            vec![self.clone()],
            Box::new(|g, p| p[0].accumulate(g)),
        )
    }
}

/// Mean squared error between two same-shaped tensors.
pub fn mse(a: &Tensor, b: &Tensor) -> Tensor {
    let d = a.sub(b);
    d.mul(&d).mean_all()
}
