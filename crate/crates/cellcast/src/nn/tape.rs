//! Reverse-mode automatic differentiation over tensor-level operations.
//!
//! A [`Tape`] records each forward operation as a node; [`Tape::backward`]
//! walks the nodes in reverse creation order and accumulates gradients into
//! every reachable input. Operations are tensor-granular (one node per
//! matmul, not per scalar), which keeps tape overhead negligible next to the
//! arithmetic itself.

use crate::nn::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};

/// Handle to a value on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf,
    /// C = A (m x k) @ B (k x n)
    MatMul(usize, usize),
    /// Y = X + row-broadcast bias (1 x n)
    AddRow(usize, usize),
    Add(usize, usize),
    /// Elementwise product.
    Mul(usize, usize),
    Sigmoid(usize),
    Tanh(usize),
    /// Inverted dropout; mask entries are 0 or 1/(1-p).
    Dropout { x: usize, mask: Vec<f64> },
    /// H^C[b, f*k + j] = sum_t states[t][b, f] * filters[j, t].
    /// One output per (hidden feature, filter) pair: time filters of length
    /// exactly w with no padding.
    TimeConv {
        states: Vec<usize>,
        filters: usize,
        h: usize,
        k: usize,
    },
    /// out[b, i] = sum_j hc[b, i*k + j] * u[b, j] — scores each H^C row
    /// against a per-batch query vector.
    RowDot { hc: usize, u: usize, h: usize, k: usize },
    /// out[b, j] = sum_i alpha[b, i] * hc[b, i*k + j] — attention-weighted
    /// sum of H^C rows.
    WeightedRows { hc: usize, alpha: usize, h: usize, k: usize },
    /// Scalar mean squared error of pred (B x 1) against constant targets.
    MseLoss { pred: usize, target: Vec<f64> },
}

struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        assert_eq!(tb.rows(), k, "matmul inner dimensions {k} vs {}", tb.rows());
        let mut out = Tensor::zeros(&[m, n]);
        gemm_acc(&mut out.data, &ta.data, m, k, &tb.data, n);
        self.push(out, Op::MatMul(a.0, b.0))
    }

    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        let (tx, tb) = (&self.nodes[x.0].value, &self.nodes[bias.0].value);
        let n = tx.cols();
        assert_eq!(tb.len(), n, "bias length {} vs {n} columns", tb.len());
        let mut out = tx.clone();
        for row in out.data.chunks_mut(n) {
            for (o, &b) in row.iter_mut().zip(&tb.data) {
                *o += b;
            }
        }
        self.push(out, Op::AddRow(x.0, bias.0))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "add shape mismatch");
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o += v;
        }
        self.push(out, Op::Add(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        assert!(ta.same_shape(tb), "mul shape mismatch");
        let mut out = ta.clone();
        for (o, &v) in out.data.iter_mut().zip(&tb.data) {
            *o *= v;
        }
        self.push(out, Op::Mul(a.0, b.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        for v in &mut out.data {
            *v = 1.0 / (1.0 + (-*v).exp());
        }
        self.push(out, Op::Sigmoid(x.0))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.nodes[x.0].value.clone();
        for v in &mut out.data {
            *v = v.tanh();
        }
        self.push(out, Op::Tanh(x.0))
    }

    pub fn dropout(&mut self, x: Var, mask: Vec<f64>) -> Var {
        let tx = &self.nodes[x.0].value;
        assert_eq!(mask.len(), tx.len(), "dropout mask length");
        let mut out = tx.clone();
        for (o, &m) in out.data.iter_mut().zip(&mask) {
            *o *= m;
        }
        self.push(out, Op::Dropout { x: x.0, mask })
    }

    /// Applies `k` time-axis filters of length `w` to `w` stacked hidden
    /// states (each B x h), yielding B x (h*k): row f of the per-item H^C
    /// matrix holds hidden feature f under every filter.
    pub fn time_conv(&mut self, states: &[Var], filters: Var) -> Var {
        let w = states.len();
        let tf = &self.nodes[filters.0].value;
        assert_eq!(tf.cols(), w, "filter length {} vs window {w}", tf.cols());
        let k = tf.rows();
        let first = &self.nodes[states[0].0].value;
        let (batch, h) = (first.rows(), first.cols());
        let mut out = Tensor::zeros(&[batch, h * k]);
        for (t, s) in states.iter().enumerate() {
            let st = &self.nodes[s.0].value;
            debug_assert_eq!(st.rows(), batch);
            for b in 0..batch {
                let s_row = &st.data[b * h..(b + 1) * h];
                let o_row = &mut out.data[b * h * k..(b + 1) * h * k];
                for (f, &sv) in s_row.iter().enumerate() {
                    if sv == 0.0 {
                        continue;
                    }
                    for j in 0..k {
                        o_row[f * k + j] += sv * tf.data[j * w + t];
                    }
                }
            }
        }
        self.push(
            out,
            Op::TimeConv {
                states: states.iter().map(|v| v.0).collect(),
                filters: filters.0,
                h,
                k,
            },
        )
    }

    /// Per-item dot product of each H^C row with a query vector u (B x k):
    /// out[b, i] = H^C_i . u_b.
    pub fn row_dot(&mut self, hc: Var, u: Var) -> Var {
        let (thc, tu) = (&self.nodes[hc.0].value, &self.nodes[u.0].value);
        let (batch, k) = (tu.rows(), tu.cols());
        let h = thc.cols() / k;
        assert_eq!(thc.cols(), h * k);
        let mut out = Tensor::zeros(&[batch, h]);
        for b in 0..batch {
            let hc_row = &thc.data[b * h * k..(b + 1) * h * k];
            let u_row = &tu.data[b * k..(b + 1) * k];
            for i in 0..h {
                out.data[b * h + i] = hc_row[i * k..(i + 1) * k]
                    .iter()
                    .zip(u_row)
                    .map(|(x, y)| x * y)
                    .sum();
            }
        }
        self.push(
            out,
            Op::RowDot {
                hc: hc.0,
                u: u.0,
                h,
                k,
            },
        )
    }

    /// Attention-weighted sum of H^C rows: out[b, j] = sum_i alpha[b,i] *
    /// hc[b, i*k + j].
    pub fn weighted_rows(&mut self, hc: Var, alpha: Var) -> Var {
        let (thc, ta) = (&self.nodes[hc.0].value, &self.nodes[alpha.0].value);
        let (batch, h) = (ta.rows(), ta.cols());
        let k = thc.cols() / h;
        assert_eq!(thc.cols(), h * k);
        let mut out = Tensor::zeros(&[batch, k]);
        for b in 0..batch {
            let hc_row = &thc.data[b * h * k..(b + 1) * h * k];
            let a_row = &ta.data[b * h..(b + 1) * h];
            let o_row = &mut out.data[b * k..(b + 1) * k];
            for (i, &av) in a_row.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                for (o, &hv) in o_row.iter_mut().zip(&hc_row[i * k..(i + 1) * k]) {
                    *o += av * hv;
                }
            }
        }
        self.push(
            out,
            Op::WeightedRows {
                hc: hc.0,
                alpha: alpha.0,
                h,
                k,
            },
        )
    }

    /// Scalar loss node: mean((pred - target)^2) over the batch.
    pub fn mse_loss(&mut self, pred: Var, target: Vec<f64>) -> Var {
        let tp = &self.nodes[pred.0].value;
        assert_eq!(tp.len(), target.len(), "loss target length");
        let n = target.len() as f64;
        let loss = tp
            .data
            .iter()
            .zip(&target)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        self.push(Tensor::scalar(loss), Op::MseLoss { pred: pred.0, target })
    }

    /// Reverse pass from a scalar loss. Returns one gradient slot per node;
    /// index with the `Var`s handed out during the forward pass.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.nodes[loss.0].value.len(), 1, "backward needs a scalar");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        macro_rules! grad_of {
            ($g:ident, $idx:expr) => {
                $g[$idx].get_or_insert_with(|| Tensor::zeros(&self.nodes[$idx].value.shape))
            };
        }

        for idx in (0..=loss.0).rev() {
            let Some(out_grad) = grads[idx].take() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Leaf => {
                    grads[idx] = Some(out_grad); // keep for the caller
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                    {
                        let ga = grad_of!(grads, *a);
                        gemm_nt_acc(&mut ga.data, &out_grad.data, m, n, &tb.data, k);
                    }
                    {
                        let gb = grad_of!(grads, *b);
                        gemm_tn_acc(&mut gb.data, &ta.data, m, k, &out_grad.data, n);
                    }
                }
                Op::AddRow(x, bias) => {
                    let n = self.nodes[*bias].value.len();
                    {
                        let gx = grad_of!(grads, *x);
                        for (g, &o) in gx.data.iter_mut().zip(&out_grad.data) {
                            *g += o;
                        }
                    }
                    {
                        let gb = grad_of!(grads, *bias);
                        for row in out_grad.data.chunks(n) {
                            for (g, &o) in gb.data.iter_mut().zip(row) {
                                *g += o;
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    for p in [*a, *b] {
                        let gp = grad_of!(grads, p);
                        for (g, &o) in gp.data.iter_mut().zip(&out_grad.data) {
                            *g += o;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let vb = self.nodes[*b].value.data.clone();
                    let va = self.nodes[*a].value.data.clone();
                    {
                        let ga = grad_of!(grads, *a);
                        for ((g, &o), &v) in ga.data.iter_mut().zip(&out_grad.data).zip(&vb) {
                            *g += o * v;
                        }
                    }
                    {
                        let gb = grad_of!(grads, *b);
                        for ((g, &o), &v) in gb.data.iter_mut().zip(&out_grad.data).zip(&va) {
                            *g += o * v;
                        }
                    }
                }
                Op::Sigmoid(x) => {
                    let y = &self.nodes[idx].value;
                    let gx = grad_of!(grads, *x);
                    for ((g, &o), &yv) in gx.data.iter_mut().zip(&out_grad.data).zip(&y.data) {
                        *g += o * yv * (1.0 - yv);
                    }
                }
                Op::Tanh(x) => {
                    let y = &self.nodes[idx].value;
                    let gx = grad_of!(grads, *x);
                    for ((g, &o), &yv) in gx.data.iter_mut().zip(&out_grad.data).zip(&y.data) {
                        *g += o * (1.0 - yv * yv);
                    }
                }
                Op::Dropout { x, mask } => {
                    let gx = grad_of!(grads, *x);
                    for ((g, &o), &m) in gx.data.iter_mut().zip(&out_grad.data).zip(mask) {
                        *g += o * m;
                    }
                }
                Op::TimeConv {
                    states,
                    filters,
                    h,
                    k,
                } => {
                    let (h, k) = (*h, *k);
                    let w = states.len();
                    let tf = self.nodes[*filters].value.data.clone();
                    let batch = self.nodes[states[0]].value.rows();
                    for (t, &s) in states.iter().enumerate() {
                        let sv = self.nodes[s].value.data.clone();
                        {
                            let gs = grad_of!(grads, s);
                            for b in 0..batch {
                                let o_row = &out_grad.data[b * h * k..(b + 1) * h * k];
                                let g_row = &mut gs.data[b * h..(b + 1) * h];
                                for (f, g) in g_row.iter_mut().enumerate() {
                                    let mut acc = 0.0;
                                    for j in 0..k {
                                        acc += o_row[f * k + j] * tf[j * w + t];
                                    }
                                    *g += acc;
                                }
                            }
                        }
                        {
                            let gf = grad_of!(grads, *filters);
                            for b in 0..batch {
                                let o_row = &out_grad.data[b * h * k..(b + 1) * h * k];
                                let s_row = &sv[b * h..(b + 1) * h];
                                for (f, &svv) in s_row.iter().enumerate() {
                                    if svv == 0.0 {
                                        continue;
                                    }
                                    for j in 0..k {
                                        gf.data[j * w + t] += o_row[f * k + j] * svv;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::RowDot { hc, u, h, k } => {
                    let (h, k) = (*h, *k);
                    let batch = self.nodes[*u].value.rows();
                    let hc_v = self.nodes[*hc].value.data.clone();
                    let u_v = self.nodes[*u].value.data.clone();
                    {
                        let ghc = grad_of!(grads, *hc);
                        for b in 0..batch {
                            let o_row = &out_grad.data[b * h..(b + 1) * h];
                            let u_row = &u_v[b * k..(b + 1) * k];
                            let g_row = &mut ghc.data[b * h * k..(b + 1) * h * k];
                            for (i, &ov) in o_row.iter().enumerate() {
                                if ov == 0.0 {
                                    continue;
                                }
                                for (g, &uv) in g_row[i * k..(i + 1) * k].iter_mut().zip(u_row) {
                                    *g += ov * uv;
                                }
                            }
                        }
                    }
                    {
                        let gu = grad_of!(grads, *u);
                        for b in 0..batch {
                            let o_row = &out_grad.data[b * h..(b + 1) * h];
                            let hc_row = &hc_v[b * h * k..(b + 1) * h * k];
                            let g_row = &mut gu.data[b * k..(b + 1) * k];
                            for (i, &ov) in o_row.iter().enumerate() {
                                if ov == 0.0 {
                                    continue;
                                }
                                for (g, &hv) in g_row.iter_mut().zip(&hc_row[i * k..(i + 1) * k]) {
                                    *g += ov * hv;
                                }
                            }
                        }
                    }
                }
                Op::WeightedRows { hc, alpha, h, k } => {
                    let (h, k) = (*h, *k);
                    let batch = self.nodes[*alpha].value.rows();
                    let hc_v = self.nodes[*hc].value.data.clone();
                    let a_v = self.nodes[*alpha].value.data.clone();
                    {
                        let ga = grad_of!(grads, *alpha);
                        for b in 0..batch {
                            let o_row = &out_grad.data[b * k..(b + 1) * k];
                            let hc_row = &hc_v[b * h * k..(b + 1) * h * k];
                            let g_row = &mut ga.data[b * h..(b + 1) * h];
                            for (i, g) in g_row.iter_mut().enumerate() {
                                *g += o_row
                                    .iter()
                                    .zip(&hc_row[i * k..(i + 1) * k])
                                    .map(|(o, hv)| o * hv)
                                    .sum::<f64>();
                            }
                        }
                    }
                    {
                        let ghc = grad_of!(grads, *hc);
                        for b in 0..batch {
                            let o_row = &out_grad.data[b * k..(b + 1) * k];
                            let a_row = &a_v[b * h..(b + 1) * h];
                            let g_row = &mut ghc.data[b * h * k..(b + 1) * h * k];
                            for (i, &av) in a_row.iter().enumerate() {
                                if av == 0.0 {
                                    continue;
                                }
                                for (g, &ov) in g_row[i * k..(i + 1) * k].iter_mut().zip(o_row) {
                                    *g += av * ov;
                                }
                            }
                        }
                    }
                }
                Op::MseLoss { pred, target } => {
                    let scale = out_grad.data[0] * 2.0 / target.len() as f64;
                    let pv = self.nodes[*pred].value.data.clone();
                    let gp = grad_of!(grads, *pred);
                    for ((g, &p), &t) in gp.data.iter_mut().zip(&pv).zip(target) {
                        *g += scale * (p - t);
                    }
                }
            }
        }
        Gradients { grads }
    }
}

pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to the given (leaf) variable;
    /// zero tensors were materialized for every touched node.
    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads[v.0].take()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar-function check: loss = mean((sigmoid(a*b + c) - t)^2) on small
    /// matrices, against central finite differences on every leaf entry.
    #[test]
    fn finite_difference_on_composite_graph() {
        let a0 = Tensor::from_vec(&[2, 3], vec![0.1, -0.2, 0.3, 0.4, 0.5, -0.6]);
        let b0 = Tensor::from_vec(&[3, 1], vec![0.7, -0.8, 0.9]);
        let c0 = Tensor::from_vec(&[1], vec![0.05]);
        let target = vec![0.3, 0.7];

        let eval = |a: &Tensor, b: &Tensor, c: &Tensor| -> f64 {
            let mut tape = Tape::new();
            let va = tape.leaf(a.clone());
            let vb = tape.leaf(b.clone());
            let vc = tape.leaf(c.clone());
            let mm = tape.matmul(va, vb);
            let z = tape.add_row(mm, vc);
            let s = tape.sigmoid(z);
            let loss = tape.mse_loss(s, target.clone());
            tape.value(loss).data[0]
        };

        let mut tape = Tape::new();
        let va = tape.leaf(a0.clone());
        let vb = tape.leaf(b0.clone());
        let vc = tape.leaf(c0.clone());
        let mm = tape.matmul(va, vb);
        let z = tape.add_row(mm, vc);
        let s = tape.sigmoid(z);
        let loss = tape.mse_loss(s, target.clone());
        let mut grads = tape.backward(loss);

        let step = 1e-5;
        for (vi, tensor) in [(va, &a0), (vb, &b0), (vc, &c0)] {
            let g = grads.take(vi).unwrap();
            for i in 0..tensor.len() {
                let mut plus = tensor.clone();
                plus.data[i] += step;
                let mut minus = tensor.clone();
                minus.data[i] -= step;
                let (fp, fm) = match vi {
                    v if v == va => (eval(&plus, &b0, &c0), eval(&minus, &b0, &c0)),
                    v if v == vb => (eval(&a0, &plus, &c0), eval(&a0, &minus, &c0)),
                    _ => (eval(&a0, &b0, &plus), eval(&a0, &b0, &minus)),
                };
                let numeric = (fp - fm) / (2.0 * step);
                assert!(
                    (g.data[i] - numeric).abs() < 1e-8,
                    "entry {i}: analytic {} vs numeric {numeric}",
                    g.data[i]
                );
            }
        }
    }

    #[test]
    fn time_conv_shapes_and_zero_filter_rows() {
        let mut tape = Tape::new();
        let s1 = tape.leaf(Tensor::from_vec(&[1, 2], vec![1.0, 2.0]));
        let s2 = tape.leaf(Tensor::from_vec(&[1, 2], vec![3.0, 4.0]));
        // k = 3 filters of length 2.
        let f = tape.leaf(Tensor::from_vec(
            &[3, 2],
            vec![1.0, 0.0, 0.0, 1.0, 0.5, 0.5],
        ));
        let hc = tape.time_conv(&[s1, s2], f);
        assert_eq!(tape.value(hc).shape, vec![1, 6]);
        // Row f=0 (hidden feature 0): filters see [1, 3] over time.
        assert_eq!(&tape.value(hc).data[0..3], &[1.0, 3.0, 2.0]);
        // Row f=1: filters see [2, 4].
        assert_eq!(&tape.value(hc).data[3..6], &[2.0, 4.0, 3.0]);
    }
}
