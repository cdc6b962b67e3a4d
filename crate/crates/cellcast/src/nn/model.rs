//! Stacked-LSTM forecasters with either a linear head or a temporal-pattern
//! attention head, built on the autodiff tape.
//!
//! The attention head applies `k` time-axis filters of length `w` to the
//! top-layer hidden states, scores each filtered hidden-feature row of H^C
//! against the last hidden state through a bilinear form and a sigmoid, and
//! mixes the weighted rows back with the hidden state for the final scalar
//! projection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::tape::{Tape, Var};
use crate::nn::tensor::Tensor;
use crate::nn::train::TrainConfig;
use crate::serial;
use crate::trace::NormStats;

pub const MODEL_FORMAT: &str = "cellcast/model";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Lstm,
    Tpa,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(ModelKind::Lstm),
            "tpa" | "tpa-lstm" => Ok(ModelKind::Tpa),
            other => Err(Error::config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// Gate parameter order inside each layer.
pub const GATES: usize = 4; // input, forget, cell candidate, output

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_size: usize,
    pub hidden_size: usize,
    /// Input weights per gate, each `input_size x hidden`.
    pub w: Vec<Tensor>,
    /// Recurrent weights per gate, each `hidden x hidden`.
    pub u: Vec<Tensor>,
    /// Biases per gate, each length `hidden`. The forget-gate bias starts
    /// at 1 so early training does not flush the cell state.
    pub b: Vec<Tensor>,
}

impl LstmLayer {
    pub fn init(input_size: usize, hidden_size: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = (0..GATES)
            .map(|_| xavier(&[input_size, hidden_size], rng))
            .collect();
        let u = (0..GATES)
            .map(|_| xavier(&[hidden_size, hidden_size], rng))
            .collect();
        let b = (0..GATES)
            .map(|gate| {
                let fill = if gate == 1 { 1.0 } else { 0.0 };
                Tensor::from_vec(&[hidden_size], vec![fill; hidden_size])
            })
            .collect();
        LstmLayer {
            input_size,
            hidden_size,
            w,
            u,
            b,
        }
    }

    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        LstmLayer {
            input_size,
            hidden_size,
            w: (0..GATES).map(|_| Tensor::zeros(&[input_size, hidden_size])).collect(),
            u: (0..GATES).map(|_| Tensor::zeros(&[hidden_size, hidden_size])).collect(),
            b: (0..GATES).map(|_| Tensor::zeros(&[hidden_size])).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TpaHead {
    pub filter_count: usize,
    pub window: usize,
    pub hidden: usize,
    /// CNN filter bank over the time axis, `k x w` with length exactly `w`.
    pub filters: Tensor,
    /// Bilinear scoring matrix, stored as `hidden x k` so the per-item query
    /// is h_t^T W_a.
    pub attn: Tensor,
    /// Output mix of the current hidden state, `hidden x hidden`.
    pub w_h: Tensor,
    /// Output mix of the attention context V_t, `k x hidden`.
    pub w_v: Tensor,
    pub w_out: Tensor,
    pub b_out: Tensor,
}

impl TpaHead {
    fn init(hidden: usize, filter_count: usize, window: usize, rng: &mut ChaCha8Rng) -> Self {
        TpaHead {
            filter_count,
            window,
            hidden,
            filters: xavier(&[filter_count, window], rng),
            attn: xavier(&[hidden, filter_count], rng),
            w_h: xavier(&[hidden, hidden], rng),
            w_v: xavier(&[filter_count, hidden], rng),
            w_out: xavier(&[hidden, 1], rng),
            b_out: Tensor::zeros(&[1]),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LinearHead {
    pub w_out: Tensor,
    pub b_out: Tensor,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Head {
    Linear(LinearHead),
    Tpa(TpaHead),
}

/// A trained (or initializing) recurrent bandwidth forecaster. Immutable
/// after training; prediction is reentrant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecurrentModel {
    pub kind: ModelKind,
    pub config: TrainConfig,
    pub schema_name: String,
    pub feature_names: Vec<String>,
    pub stats: NormStats,
    pub target_col: usize,
    pub window: usize,
    pub horizon: usize,
    pub layers: Vec<LstmLayer>,
    pub head: Head,
}

fn xavier(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let (fan_in, fan_out) = match shape.len() {
        2 => (shape[0], shape[1]),
        _ => (shape[0], 1),
    };
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..shape.iter().product::<usize>())
        .map(|_| rng.gen_range(-limit..limit))
        .collect();
    Tensor::from_vec(shape, data)
}

#[derive(Clone, Copy)]
pub(crate) enum Mode {
    Train,
    Infer,
}

#[allow(dead_code)] // hc and context are read by tests
pub(crate) struct TpaVars {
    pub hc: Var,
    pub alpha: Var,
    pub context: Var,
}

pub(crate) struct ForwardPass {
    pub tape: Tape,
    pub param_vars: Vec<Var>,
    pub pred: Var,
    pub tpa: Option<TpaVars>,
}

impl RecurrentModel {
    /// Fresh untrained model with seeded Xavier initialization.
    #[allow(clippy::too_many_arguments)]
    pub fn init(
        kind: ModelKind,
        schema_name: &str,
        feature_names: Vec<String>,
        stats: NormStats,
        target_col: usize,
        window: usize,
        horizon: usize,
        config: TrainConfig,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let n_features = feature_names.len();
        let mut layers = Vec::with_capacity(config.layers);
        let mut input = n_features;
        for _ in 0..config.layers {
            layers.push(LstmLayer::init(input, config.units, rng));
            input = config.units;
        }
        let head = match kind {
            ModelKind::Lstm => Head::Linear(LinearHead {
                w_out: xavier(&[config.units, 1], rng),
                b_out: Tensor::zeros(&[1]),
            }),
            ModelKind::Tpa => Head::Tpa(TpaHead::init(config.units, config.filters, window, rng)),
        };
        RecurrentModel {
            kind,
            config,
            schema_name: schema_name.to_string(),
            feature_names,
            stats,
            target_col,
            window,
            horizon,
            layers,
            head,
        }
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.extend(layer.w.iter());
            out.extend(layer.u.iter());
            out.extend(layer.b.iter());
        }
        match &self.head {
            Head::Linear(h) => {
                out.push(&h.w_out);
                out.push(&h.b_out);
            }
            Head::Tpa(h) => {
                out.push(&h.filters);
                out.push(&h.attn);
                out.push(&h.w_h);
                out.push(&h.w_v);
                out.push(&h.w_out);
                out.push(&h.b_out);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for layer in &mut self.layers {
            out.extend(layer.w.iter_mut());
            out.extend(layer.u.iter_mut());
            out.extend(layer.b.iter_mut());
        }
        match &mut self.head {
            Head::Linear(h) => {
                out.push(&mut h.w_out);
                out.push(&mut h.b_out);
            }
            Head::Tpa(h) => {
                out.push(&mut h.filters);
                out.push(&mut h.attn);
                out.push(&mut h.w_h);
                out.push(&mut h.w_v);
                out.push(&mut h.w_out);
                out.push(&mut h.b_out);
            }
        }
        out
    }

    /// Builds the forward graph for a batch of normalized windows laid out
    /// `[item][time][feature]`. In training mode, dropout masks come from
    /// `rng` between stacked layers and before the final projection.
    pub(crate) fn forward(
        &self,
        inputs: &[f64],
        batch: usize,
        mode: Mode,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> ForwardPass {
        let n = self.n_features();
        let w = self.window;
        assert_eq!(inputs.len(), batch * w * n, "window batch layout");
        let mut tape = Tape::new();

        // Parameters become leaves in `params()` order.
        let param_vars: Vec<Var> = self.params().iter().map(|p| tape.leaf((*p).clone())).collect();
        let mut cursor = 0usize;
        let mut layer_vars = Vec::new();
        for layer in &self.layers {
            let wv = &param_vars[cursor..cursor + GATES];
            let uv = &param_vars[cursor + GATES..cursor + 2 * GATES];
            let bv = &param_vars[cursor + 2 * GATES..cursor + 3 * GATES];
            layer_vars.push((wv.to_vec(), uv.to_vec(), bv.to_vec(), layer.hidden_size));
            cursor += 3 * GATES;
        }
        let head_vars = &param_vars[cursor..];

        // Per-timestep input tensors.
        let x_steps: Vec<Var> = (0..w)
            .map(|t| {
                let mut data = Vec::with_capacity(batch * n);
                for b in 0..batch {
                    let base = b * w * n + t * n;
                    data.extend_from_slice(&inputs[base..base + n]);
                }
                tape.leaf(Tensor::from_vec(&[batch, n], data))
            })
            .collect();

        let dropout_rate = self.config.dropout;
        let dropout = |tape: &mut Tape, v: Var, rng: &mut Option<&mut ChaCha8Rng>| -> Var {
            match (mode, rng) {
                (Mode::Train, Some(rng)) if dropout_rate > 0.0 => {
                    let len = tape.value(v).len();
                    let keep = 1.0 - dropout_rate;
                    let mask: Vec<f64> = (0..len)
                        .map(|_| {
                            if rng.gen_range(0.0..1.0) < dropout_rate {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect();
                    tape.dropout(v, mask)
                }
                _ => v,
            }
        };

        // Stacked recurrence. Keep the top layer's hidden state per step for
        // the attention head.
        let mut step_inputs = x_steps;
        let mut top_states: Vec<Var> = Vec::new();
        for (li, (wv, uv, bv, hidden)) in layer_vars.iter().enumerate() {
            let mut h = tape.leaf(Tensor::zeros(&[batch, *hidden]));
            let mut c = tape.leaf(Tensor::zeros(&[batch, *hidden]));
            let mut outputs = Vec::with_capacity(w);
            for &x in &step_inputs {
                let mut gates = Vec::with_capacity(GATES);
                for g in 0..GATES {
                    let xw = tape.matmul(x, wv[g]);
                    let hu = tape.matmul(h, uv[g]);
                    let sum = tape.add(xw, hu);
                    gates.push(tape.add_row(sum, bv[g]));
                }
                let i = tape.sigmoid(gates[0]);
                let f = tape.sigmoid(gates[1]);
                let g = tape.tanh(gates[2]);
                let o = tape.sigmoid(gates[3]);
                let fc = tape.mul(f, c);
                let ig = tape.mul(i, g);
                c = tape.add(fc, ig);
                let tc = tape.tanh(c);
                h = tape.mul(o, tc);
                outputs.push(h);
            }
            let top = li + 1 == self.layers.len();
            if top {
                top_states = outputs;
            } else {
                step_inputs = outputs
                    .into_iter()
                    .map(|v| dropout(&mut tape, v, &mut rng))
                    .collect();
            }
        }
        let h_last = *top_states.last().expect("window >= 1");

        let mut tpa_vars = None;
        let pred = match &self.head {
            Head::Linear(_) => {
                let w_out = head_vars[0];
                let b_out = head_vars[1];
                let hd = dropout(&mut tape, h_last, &mut rng);
                let proj = tape.matmul(hd, w_out);
                tape.add_row(proj, b_out)
            }
            Head::Tpa(_) => {
                let (filters, attn, w_h, w_v, w_out, b_out) = (
                    head_vars[0],
                    head_vars[1],
                    head_vars[2],
                    head_vars[3],
                    head_vars[4],
                    head_vars[5],
                );
                let hc = tape.time_conv(&top_states, filters);
                let query = tape.matmul(h_last, attn);
                let logits = tape.row_dot(hc, query);
                let alpha = tape.sigmoid(logits);
                let context = tape.weighted_rows(hc, alpha);
                let mixed_h = tape.matmul(h_last, w_h);
                let mixed_v = tape.matmul(context, w_v);
                let merged = tape.add(mixed_h, mixed_v);
                let md = dropout(&mut tape, merged, &mut rng);
                let proj = tape.matmul(md, w_out);
                tpa_vars = Some(TpaVars { hc, alpha, context });
                tape.add_row(proj, b_out)
            }
        };

        ForwardPass {
            tape,
            param_vars,
            pred,
            tpa: tpa_vars,
        }
    }

    /// Attention weight per hidden-feature row of H^C for one raw window,
    /// or `None` for models without an attention head.
    pub fn attention_weights(&self, raw_window: &[f64]) -> Result<Option<Vec<f64>>> {
        let n = self.n_features();
        if raw_window.len() != self.window * n {
            return Err(Error::shape(format!(
                "window has {} values, model expects {} x {}",
                raw_window.len(),
                self.window,
                n
            )));
        }
        let mut normalized = raw_window.to_vec();
        for row in normalized.chunks_mut(n) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.stats.normalize(c, *v);
            }
        }
        let pass = self.forward(&normalized, 1, Mode::Infer, None);
        Ok(pass
            .tpa
            .map(|vars| pass.tape.value(vars.alpha).data.clone()))
    }

    /// Normalized-space forward pass for a single raw window (no dropout).
    pub fn forward_normalized(&self, normalized_window: &[f64]) -> f64 {
        let pass = self.forward(normalized_window, 1, Mode::Infer, None);
        pass.tape.value(pass.pred).data[0]
    }

    /// Predicts bandwidth in Mbps for a raw `w x n` window (row-major).
    /// The window is normalized with the stored statistics, run in inference
    /// mode, denormalized, and clamped at 0.
    pub fn predict(&self, raw_window: &[f64]) -> Result<f64> {
        let n = self.n_features();
        if raw_window.len() != self.window * n {
            return Err(Error::shape(format!(
                "window has {} values, model expects {} x {}",
                raw_window.len(),
                self.window,
                n
            )));
        }
        let mut normalized = raw_window.to_vec();
        for row in normalized.chunks_mut(n) {
            for (c, v) in row.iter_mut().enumerate() {
                *v = self.stats.normalize(c, *v);
            }
        }
        let out = self.forward_normalized(&normalized);
        Ok(self.stats.denormalize(self.target_col, out).max(0.0))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        serial::save(path, MODEL_FORMAT, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        serial::load(path, MODEL_FORMAT)
    }
}
