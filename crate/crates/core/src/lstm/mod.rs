//! Single-layer LSTM with a linear head, trained by backpropagation through
//! time.
//!
//! Gate equations, with σ the logistic function and ⊙ the elementwise
//! product:
//!
//! ```text
//! i  = σ(W_i x + U_i h + b_i)        f = σ(W_f x + U_f h + b_f)
//! g̃  = tanh(W_g x + U_g h + b_g)     o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g̃                 h' = o ⊙ tanh(c')
//! ```
//!
//! A window is run from the zero state and the prediction is
//! `head_w · h_L + head_b`.

mod gradcheck;
mod io;
mod train;

pub use gradcheck::{gradient_check, GradientCheck};
pub use io::{read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use train::{adam_step, clip_forecast, loss_mse, train, AdamState, TrainConfig, TrainedModel};

use crate::error::{Error, Result};
use crate::math::{sigmoid, Matrix, Rng};

pub const INPUT: usize = 0;
pub const FORGET: usize = 1;
pub const CANDIDATE: usize = 2;
pub const OUTPUT: usize = 3;

const GATE_NAMES: [&str; 4] = ["input", "forget", "candidate", "output"];

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    features: usize,
    hidden: usize,
    /// Input weights per gate, `hidden × features`.
    pub w: [Matrix; 4],
    /// Recurrent weights per gate, `hidden × hidden`.
    pub u: [Matrix; 4],
    pub b: [Vec<f64>; 4],
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

impl LstmParams {
    pub fn zeros(features: usize, hidden: usize) -> Self {
        LstmParams {
            features,
            hidden,
            w: std::array::from_fn(|_| Matrix::zeros(hidden, features)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| vec![0.0; hidden]),
            head_w: vec![0.0; hidden],
            head_b: 0.0,
        }
    }

    /// Uniform in `[-k, k]` with `k = 1/√hidden`; forget-gate bias starts
    /// at +1.
    pub fn init(features: usize, hidden: usize, rng: &mut Rng) -> Result<Self> {
        if features == 0 || hidden == 0 {
            return Err(Error::Argument(format!(
                "features ({features}) and hidden ({hidden}) must be positive"
            )));
        }
        let k = 1.0 / (hidden as f64).sqrt();
        let mut p = LstmParams::zeros(features, hidden);
        for t in p.tensors_mut() {
            for v in t {
                *v = rng.uniform(-k, k)?;
            }
        }
        p.b[FORGET].fill(1.0);
        Ok(p)
    }

    pub fn features(&self) -> usize {
        self.features
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    /// Tensor names in the fixed order used by [`tensors`](Self::tensors).
    pub fn tensor_names() -> Vec<String> {
        let mut names = Vec::with_capacity(14);
        for g in GATE_NAMES {
            names.push(format!("w_{g}"));
        }
        for g in GATE_NAMES {
            names.push(format!("u_{g}"));
        }
        for g in GATE_NAMES {
            names.push(format!("b_{g}"));
        }
        names.push("head_w".into());
        names.push("head_b".into());
        names
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(14);
        out.extend(self.w.iter().map(Matrix::data));
        out.extend(self.u.iter().map(Matrix::data));
        out.extend(self.b.iter().map(Vec::as_slice));
        out.push(&self.head_w);
        out.push(std::slice::from_ref(&self.head_b));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(14);
        out.extend(self.w.iter_mut().map(Matrix::data_mut));
        out.extend(self.u.iter_mut().map(Matrix::data_mut));
        out.extend(self.b.iter_mut().map(Vec::as_mut_slice));
        out.push(&mut self.head_w);
        out.push(std::slice::from_mut(&mut self.head_b));
        out
    }

    /// `(rows, cols)` of each tensor, matching [`tensors`](Self::tensors).
    pub fn tensor_shapes(&self) -> Vec<(usize, usize)> {
        let (f, h) = (self.features, self.hidden);
        let mut s = vec![(h, f); 4];
        s.extend([(h, h); 4]);
        s.extend([(h, 1); 4]);
        s.push((1, h));
        s.push((1, 1));
        s
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub(crate) fn same_shape(&self, other: &LstmParams) -> Result<()> {
        if (self.features, self.hidden) != (other.features, other.hidden) {
            return Err(Error::Shape(format!(
                "parameters for (features {}, hidden {}) vs (features {}, hidden {})",
                self.features, self.hidden, other.features, other.hidden
            )));
        }
        Ok(())
    }

    pub(crate) fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.fill(0.0);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }
}

/// Activations of one step, kept for the backward pass.
#[derive(Debug, Clone)]
struct StepCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; 4],
    tanh_c: Vec<f64>,
}

/// Everything [`backward`] needs from a [`forward`] pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    features: usize,
    hidden: usize,
    steps: Vec<StepCache>,
    h_last: Vec<f64>,
}

impl ForwardCache {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn final_state_h(&self) -> &[f64] {
        &self.h_last
    }
}

fn step(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> StepCache {
    let hid = p.hidden;
    let mut gates: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hid]);
    for (k, g) in gates.iter_mut().enumerate() {
        g.copy_from_slice(&p.b[k]);
        p.w[k].gemv_into(x, g, true);
        p.u[k].gemv_into(h_prev, g, true);
        if k == CANDIDATE {
            g.iter_mut().for_each(|v| *v = v.tanh());
        } else {
            g.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
    }
    let mut tanh_c = vec![0.0; hid];
    for j in 0..hid {
        let c = gates[FORGET][j] * c_prev[j] + gates[INPUT][j] * gates[CANDIDATE][j];
        tanh_c[j] = c.tanh();
    }
    StepCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        tanh_c,
    }
}

impl StepCache {
    fn c(&self) -> Vec<f64> {
        (0..self.c_prev.len())
            .map(|j| {
                self.gates[FORGET][j] * self.c_prev[j]
                    + self.gates[INPUT][j] * self.gates[CANDIDATE][j]
            })
            .collect()
    }

    fn h(&self) -> Vec<f64> {
        self.gates[OUTPUT]
            .iter()
            .zip(&self.tanh_c)
            .map(|(o, t)| o * t)
            .collect()
    }
}

pub fn cell_step(p: &LstmParams, x: &[f64], s: &LstmState) -> Result<LstmState> {
    if x.len() != p.features || s.h.len() != p.hidden || s.c.len() != p.hidden {
        return Err(Error::Shape(format!(
            "cell (features {}, hidden {}) given x of {}, h of {}, c of {}",
            p.features,
            p.hidden,
            x.len(),
            s.h.len(),
            s.c.len()
        )));
    }
    let st = step(p, x, &s.h, &s.c);
    Ok(LstmState {
        h: st.h(),
        c: st.c(),
    })
}

/// Runs a `L × features` window from the zero state.
pub fn forward(p: &LstmParams, window: &Matrix) -> Result<(f64, ForwardCache)> {
    if window.rows() == 0 {
        return Err(Error::Argument("window must have at least one step".into()));
    }
    if window.cols() != p.features {
        return Err(Error::Shape(format!(
            "window of width {} for a network with {} features",
            window.cols(),
            p.features
        )));
    }
    let mut h = vec![0.0; p.hidden];
    let mut c = vec![0.0; p.hidden];
    let mut steps = Vec::with_capacity(window.rows());
    for t in 0..window.rows() {
        let st = step(p, window.row(t), &h, &c);
        c = st.c();
        h = st.h();
        steps.push(st);
    }
    let pred = p.head_b + p.head_w.iter().zip(&h).map(|(w, v)| w * v).sum::<f64>();
    Ok((
        pred,
        ForwardCache {
            features: p.features,
            hidden: p.hidden,
            steps,
            h_last: h,
        },
    ))
}

/// Gradients of a loss with `∂loss/∂prediction = d_pred`, for one window.
pub fn backward(p: &LstmParams, cache: &ForwardCache, d_pred: f64) -> Result<LstmParams> {
    let mut g = LstmParams::zeros(p.features, p.hidden);
    backward_into(p, cache, d_pred, &mut g)?;
    Ok(g)
}

/// Like [`backward`], accumulating into `grads`.
pub fn backward_into(
    p: &LstmParams,
    cache: &ForwardCache,
    d_pred: f64,
    grads: &mut LstmParams,
) -> Result<()> {
    if (cache.features, cache.hidden) != (p.features, p.hidden) || cache.steps.is_empty() {
        return Err(Error::Precondition(format!(
            "forward cache for (features {}, hidden {}) does not match parameters (features {}, hidden {})",
            cache.features, cache.hidden, p.features, p.hidden
        )));
    }
    p.same_shape(grads)?;
    let hid = p.hidden;
    grads.head_b += d_pred;
    for (gw, h) in grads.head_w.iter_mut().zip(&cache.h_last) {
        *gw += d_pred * h;
    }
    if d_pred == 0.0 {
        return Ok(());
    }

    let mut dh: Vec<f64> = p.head_w.iter().map(|w| w * d_pred).collect();
    let mut dc = vec![0.0; hid];
    let mut da: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; hid]);
    for st in cache.steps.iter().rev() {
        let [i, f, g, o] = &st.gates;
        for j in 0..hid {
            let tc = st.tanh_c[j];
            let d_o = dh[j] * tc;
            dc[j] += dh[j] * o[j] * (1.0 - tc * tc);
            let d_i = dc[j] * g[j];
            let d_g = dc[j] * i[j];
            let d_f = dc[j] * st.c_prev[j];
            da[INPUT][j] = d_i * i[j] * (1.0 - i[j]);
            da[FORGET][j] = d_f * f[j] * (1.0 - f[j]);
            da[CANDIDATE][j] = d_g * (1.0 - g[j] * g[j]);
            da[OUTPUT][j] = d_o * o[j] * (1.0 - o[j]);
            dc[j] *= f[j];
        }
        dh.fill(0.0);
        for k in 0..4 {
            grads.w[k].add_outer(&da[k], &st.x);
            grads.u[k].add_outer(&da[k], &st.h_prev);
            for (b, d) in grads.b[k].iter_mut().zip(&da[k]) {
                *b += d;
            }
            p.u[k].gemv_t_acc(&da[k], &mut dh);
        }
    }
    Ok(())
}
