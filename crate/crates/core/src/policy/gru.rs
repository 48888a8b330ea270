//! A gated recurrent cell with a two-logit linear head, written out by hand
//! so the backward pass can thread gradients through the conditional hidden
//! state carry used by the sampling policy.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// All trainable tensors of the policy network.
///
/// Naming follows the usual gate equations on input `e` and previous hidden
/// state `g`:
///
/// ```text
/// r = sigmoid(w_r e + u_r g + b_r)        reset gate
/// z = sigmoid(w_z e + u_z g + b_z)        update gate
/// n = tanh(w_n e + u_n (r * g) + b_n)     candidate state
/// h = (1 - z) * g + z * n                 new hidden state
/// logits = v h + c                        two-way head
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    pub w_r: Array2<f64>,
    pub u_r: Array2<f64>,
    pub b_r: Array1<f64>,
    pub w_z: Array2<f64>,
    pub u_z: Array2<f64>,
    pub b_z: Array1<f64>,
    pub w_n: Array2<f64>,
    pub u_n: Array2<f64>,
    pub b_n: Array1<f64>,
    pub v: Array2<f64>,
    pub c: Array1<f64>,
}

impl GruParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> GruParams {
        GruParams {
            w_r: Array2::zeros((hidden, input_dim)),
            u_r: Array2::zeros((hidden, hidden)),
            b_r: Array1::zeros(hidden),
            w_z: Array2::zeros((hidden, input_dim)),
            u_z: Array2::zeros((hidden, hidden)),
            b_z: Array1::zeros(hidden),
            w_n: Array2::zeros((hidden, input_dim)),
            u_n: Array2::zeros((hidden, hidden)),
            b_n: Array1::zeros(hidden),
            v: Array2::zeros((2, hidden)),
            c: Array1::zeros(2),
        }
    }

    /// Uniform init in `+-1/sqrt(hidden)` for every tensor, drawn in the flat
    /// packing order so a seed pins the whole network.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, hidden: usize, rng: &mut R) -> GruParams {
        let mut params = GruParams::zeros(input_dim, hidden);
        let bound = 1.0 / (hidden as f64).sqrt();
        params.for_each_tensor_mut(|t| {
            for v in t {
                *v = rng.gen_range(-bound..bound);
            }
        });
        params
    }

    pub fn input_dim(&self) -> usize {
        self.w_r.ncols()
    }

    pub fn hidden(&self) -> usize {
        self.w_r.nrows()
    }

    pub fn n_params(&self) -> usize {
        let (e, h) = (self.input_dim(), self.hidden());
        3 * (h * e + h * h + h) + 2 * h + 2
    }

    /// Visits every tensor as a mutable flat slice in the canonical packing
    /// order: reset, update, candidate (each `w`, `u`, `b`), then the head
    /// weights and bias.
    fn for_each_tensor_mut(&mut self, mut f: impl FnMut(&mut [f64])) {
        f(self.w_r.as_slice_mut().expect("standard layout"));
        f(self.u_r.as_slice_mut().expect("standard layout"));
        f(self.b_r.as_slice_mut().expect("contiguous"));
        f(self.w_z.as_slice_mut().expect("standard layout"));
        f(self.u_z.as_slice_mut().expect("standard layout"));
        f(self.b_z.as_slice_mut().expect("contiguous"));
        f(self.w_n.as_slice_mut().expect("standard layout"));
        f(self.u_n.as_slice_mut().expect("standard layout"));
        f(self.b_n.as_slice_mut().expect("contiguous"));
        f(self.v.as_slice_mut().expect("standard layout"));
        f(self.c.as_slice_mut().expect("contiguous"));
    }

    fn tensors(&self) -> [&[f64]; 11] {
        [
            self.w_r.as_slice().unwrap(),
            self.u_r.as_slice().unwrap(),
            self.b_r.as_slice().unwrap(),
            self.w_z.as_slice().unwrap(),
            self.u_z.as_slice().unwrap(),
            self.b_z.as_slice().unwrap(),
            self.w_n.as_slice().unwrap(),
            self.u_n.as_slice().unwrap(),
            self.b_n.as_slice().unwrap(),
            self.v.as_slice().unwrap(),
            self.c.as_slice().unwrap(),
        ]
    }

    /// Packs all tensors into one flat vector in the canonical order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for t in self.tensors() {
            out.extend_from_slice(t);
        }
        out
    }

    /// Writes a flat vector produced by [`GruParams::to_flat`] back into the
    /// tensors.
    pub fn assign_from_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::InvalidConfig(format!(
                "parameter vector has {} entries, network needs {}",
                flat.len(),
                self.n_params()
            )));
        }
        let mut at = 0;
        self.for_each_tensor_mut(|s| {
            s.copy_from_slice(&flat[at..at + s.len()]);
            at += s.len();
        });
        Ok(())
    }

    /// Rescales all tensors so the joint Euclidean norm is at most
    /// `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self
            .tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        if norm > max_norm {
            let scale = max_norm / norm;
            self.for_each_tensor_mut(|s| {
                for v in s {
                    *v *= scale;
                }
            });
        }
        norm
    }

    /// Checks that every entry is finite.
    pub fn check_finite(&self) -> Result<()> {
        for t in self.tensors() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("policy parameters".into()));
            }
        }
        Ok(())
    }

    /// Validates internal shape consistency (used when loading checkpoints).
    pub fn check_shapes(&self) -> Result<()> {
        let e = self.input_dim();
        let h = self.hidden();
        let ok = self.w_z.dim() == (h, e)
            && self.w_n.dim() == (h, e)
            && self.u_r.dim() == (h, h)
            && self.u_z.dim() == (h, h)
            && self.u_n.dim() == (h, h)
            && self.b_r.len() == h
            && self.b_z.len() == h
            && self.b_n.len() == h
            && self.v.dim() == (2, h)
            && self.c.len() == 2;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidData(
                "policy parameter shapes are inconsistent".into(),
            ))
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values of one cell step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct StepState {
    pub r: Array1<f64>,
    pub z: Array1<f64>,
    pub n: Array1<f64>,
    /// `r * g`, the gated previous state fed into the candidate.
    pub q: Array1<f64>,
    pub h: Array1<f64>,
}

pub fn cell_forward(p: &GruParams, e: &ArrayView1<f64>, g: &ArrayView1<f64>) -> StepState {
    let r = (p.w_r.dot(e) + p.u_r.dot(g) + &p.b_r).mapv(sigmoid);
    let z = (p.w_z.dot(e) + p.u_z.dot(g) + &p.b_z).mapv(sigmoid);
    let q = &r * g;
    let n = (p.w_n.dot(e) + p.u_n.dot(&q) + &p.b_n).mapv(f64::tanh);
    let h = (1.0 - &z) * g + &z * &n;
    StepState { r, z, n, q, h }
}

/// Head output: the probability of assigning the sample to the train side,
/// `softmax(v h + c)[0]`, computed as a sigmoid of the logit difference.
pub fn head_forward(p: &GruParams, h: &ArrayView1<f64>) -> f64 {
    let logits = p.v.dot(h) + &p.c;
    sigmoid(logits[0] - logits[1])
}

fn outer(a: &Array1<f64>, b: &ArrayView1<f64>) -> Array2<f64> {
    a.view()
        .insert_axis(Axis(1))
        .dot(&b.insert_axis(Axis(0)))
}

/// Backward through the head for one step. `dp_raw` is the loss gradient at
/// the unclamped probability; the returned vector is the gradient at `h`.
pub fn head_backward(
    p: &GruParams,
    h: &ArrayView1<f64>,
    p_raw: f64,
    dp_raw: f64,
    grads: &mut GruParams,
) -> Array1<f64> {
    let du = dp_raw * p_raw * (1.0 - p_raw);
    let dl = Array1::from(vec![du, -du]);
    grads.v += &outer(&dl, h);
    grads.c += &dl;
    p.v.t().dot(&dl)
}

/// Backward through one cell step. `dh` is the gradient at the new hidden
/// state; the return value is the gradient at the previous hidden state `g`
/// flowing through this cell.
pub fn cell_backward(
    p: &GruParams,
    e: &ArrayView1<f64>,
    g_prev: &ArrayView1<f64>,
    state: &StepState,
    dh: &Array1<f64>,
    grads: &mut GruParams,
) -> Array1<f64> {
    let StepState { r, z, n, q, .. } = state;

    let dz = dh * &(n - g_prev);
    let dn = dh * z;
    let mut dg = dh * &(1.0 - z);

    let da_n = &dn * &n.mapv(|v| 1.0 - v * v);
    grads.w_n += &outer(&da_n, e);
    grads.u_n += &outer(&da_n, &q.view());
    grads.b_n += &da_n;

    let dq = p.u_n.t().dot(&da_n);
    let dr = &dq * g_prev;
    dg += &(&dq * r);

    let da_z = &dz * &z.mapv(|v| v * (1.0 - v));
    grads.w_z += &outer(&da_z, e);
    grads.u_z += &outer(&da_z, g_prev);
    grads.b_z += &da_z;
    dg += &p.u_z.t().dot(&da_z);

    let da_r = &dr * &r.mapv(|v| v * (1.0 - v));
    grads.w_r += &outer(&da_r, e);
    grads.u_r += &outer(&da_r, g_prev);
    grads.b_r += &da_r;
    dg += &p.u_r.t().dot(&da_r);

    dg
}
