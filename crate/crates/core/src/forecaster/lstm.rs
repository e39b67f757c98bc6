//! Single-layer LSTM regressor over scalar sequences: forward pass with
//! cached activations and exact backpropagation through time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gate order inside the packed `4h` blocks: input, forget, cell candidate,
/// output.
const GATES: usize = 4;

/// Weights of the forecaster. The input dimension is 1 (one load sample per
/// step); the output head projects the final hidden state to a scalar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub hidden: usize,
    /// Input weights, `4h`.
    pub w_ih: Vec<f64>,
    /// Recurrent weights, `4h x h`, row-major.
    pub w_hh: Vec<f64>,
    /// Gate biases, `4h`.
    pub bias: Vec<f64>,
    /// Output projection, `h`.
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl LstmParams {
    /// All-zero parameters (the "dead network").
    pub fn zeros(hidden: usize) -> Self {
        LstmParams {
            hidden,
            w_ih: vec![0.0; GATES * hidden],
            w_hh: vec![0.0; GATES * hidden * hidden],
            bias: vec![0.0; GATES * hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
        }
    }

    /// Seeded uniform init in [-0.08, 0.08] with the forget-gate bias
    /// shifted by +1.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = |n: usize| -> Vec<f64> {
            (0..n).map(|_| rng.random_range(-0.08..0.08)).collect()
        };
        let w_ih = sample(GATES * hidden);
        let w_hh = sample(GATES * hidden * hidden);
        let mut bias = sample(GATES * hidden);
        for b in bias.iter_mut().skip(hidden).take(hidden) {
            *b += 1.0;
        }
        let w_out = sample(hidden);
        let b_out = rng.random_range(-0.08..0.08);
        LstmParams {
            hidden,
            w_ih,
            w_hh,
            bias,
            w_out,
            b_out,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.hidden;
        if self.w_ih.len() != GATES * h
            || self.w_hh.len() != GATES * h * h
            || self.bias.len() != GATES * h
            || self.w_out.len() != h
        {
            return Err(Error::invalid("LSTM parameter shapes inconsistent"));
        }
        let finite = self
            .w_ih
            .iter()
            .chain(&self.w_hh)
            .chain(&self.bias)
            .chain(&self.w_out)
            .all(|v| v.is_finite())
            && self.b_out.is_finite();
        if !finite {
            return Err(Error::invalid("LSTM parameters contain non-finite values"));
        }
        Ok(())
    }
}

/// Gradients with the same shapes as [`LstmParams`].
#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w_ih: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub bias: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: f64,
}

impl LstmGrads {
    pub fn zeros(hidden: usize) -> Self {
        LstmGrads {
            w_ih: vec![0.0; GATES * hidden],
            w_hh: vec![0.0; GATES * hidden * hidden],
            bias: vec![0.0; GATES * hidden],
            w_out: vec![0.0; hidden],
            b_out: 0.0,
        }
    }

    pub fn reset(&mut self) {
        self.w_ih.fill(0.0);
        self.w_hh.fill(0.0);
        self.bias.fill(0.0);
        self.w_out.fill(0.0);
        self.b_out = 0.0;
    }
}

/// Per-timestep activations cached for backpropagation.
#[derive(Debug, Clone)]
pub struct StepCache {
    pub x: f64,
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub o: Vec<f64>,
    pub c: Vec<f64>,
    pub tanh_c: Vec<f64>,
    pub h: Vec<f64>,
}

/// Hidden/cell state trajectory of one forward pass.
#[derive(Debug, Clone)]
pub struct LstmStates {
    pub steps: Vec<StepCache>,
}

impl LstmStates {
    pub fn final_hidden(&self) -> &[f64] {
        &self.steps.last().unwrap().h
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Run the recurrence over `window` from zero initial states; the prediction
/// is the output projection of the final hidden state.
pub fn forward(params: &LstmParams, window: &[f64]) -> Result<(f64, LstmStates)> {
    if window.is_empty() {
        return Err(Error::invalid("window must be non-empty"));
    }
    if window.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("window contains non-finite values"));
    }
    let h = params.hidden;
    let mut steps = Vec::with_capacity(window.len());
    let mut h_prev = vec![0.0; h];
    let mut c_prev = vec![0.0; h];
    for &x in window {
        let mut cache = StepCache {
            x,
            i: vec![0.0; h],
            f: vec![0.0; h],
            g: vec![0.0; h],
            o: vec![0.0; h],
            c: vec![0.0; h],
            tanh_c: vec![0.0; h],
            h: vec![0.0; h],
        };
        for r in 0..h {
            let gate = |block: usize| -> f64 {
                let j = block * h + r;
                let row = &params.w_hh[j * h..(j + 1) * h];
                let rec: f64 = row.iter().zip(&h_prev).map(|(w, hp)| w * hp).sum();
                params.w_ih[j] * x + rec + params.bias[j]
            };
            let i = sigmoid(gate(0));
            let f = sigmoid(gate(1));
            let g = gate(2).tanh();
            let o = sigmoid(gate(3));
            let c = f * c_prev[r] + i * g;
            let tanh_c = c.tanh();
            cache.i[r] = i;
            cache.f[r] = f;
            cache.g[r] = g;
            cache.o[r] = o;
            cache.c[r] = c;
            cache.tanh_c[r] = tanh_c;
            cache.h[r] = o * tanh_c;
        }
        h_prev.copy_from_slice(&cache.h);
        c_prev.copy_from_slice(&cache.c);
        steps.push(cache);
    }
    let pred: f64 = params
        .w_out
        .iter()
        .zip(&h_prev)
        .map(|(w, hv)| w * hv)
        .sum::<f64>()
        + params.b_out;
    Ok((pred, LstmStates { steps }))
}

/// Accumulate gradients of `d_loss/d_pred * pred` into `grads` by
/// backpropagation through time over the cached trajectory.
pub fn backward(params: &LstmParams, states: &LstmStates, d_pred: f64, grads: &mut LstmGrads) {
    let h = params.hidden;
    let steps = &states.steps;
    let last = steps.len() - 1;

    let mut dh = vec![0.0; h];
    for r in 0..h {
        grads.w_out[r] += d_pred * steps[last].h[r];
        dh[r] = d_pred * params.w_out[r];
    }
    grads.b_out += d_pred;

    let mut dc = vec![0.0; h];
    let mut dz = vec![0.0; GATES * h];
    for t in (0..steps.len()).rev() {
        let step = &steps[t];
        let (h_prev, c_prev): (&[f64], &[f64]) = if t == 0 {
            (&[], &[])
        } else {
            (&steps[t - 1].h, &steps[t - 1].c)
        };
        for r in 0..h {
            let o = step.o[r];
            let tanh_c = step.tanh_c[r];
            let dc_total = dc[r] + dh[r] * o * (1.0 - tanh_c * tanh_c);
            let i = step.i[r];
            let f = step.f[r];
            let g = step.g[r];
            let cp = if t == 0 { 0.0 } else { c_prev[r] };
            dz[r] = dc_total * g * i * (1.0 - i);
            dz[h + r] = dc_total * cp * f * (1.0 - f);
            dz[2 * h + r] = dc_total * i * (1.0 - g * g);
            dz[3 * h + r] = dh[r] * tanh_c * o * (1.0 - o);
            dc[r] = dc_total * f;
        }
        let x = step.x;
        dh.fill(0.0);
        for j in 0..GATES * h {
            let dzj = dz[j];
            grads.w_ih[j] += dzj * x;
            grads.bias[j] += dzj;
            if t > 0 {
                let w_row = &params.w_hh[j * h..(j + 1) * h];
                let g_row = &mut grads.w_hh[j * h..(j + 1) * h];
                for c in 0..h {
                    g_row[c] += dzj * h_prev[c];
                    dh[c] += w_row[c] * dzj;
                }
            }
        }
    }
}
