//! A minimal matrix-valued reverse-mode tape.
//!
//! Every value is a dense row-major `Array2<f64>`. Operations append a node
//! holding the forward value and whatever the backward rule needs; a single
//! reverse sweep then produces exact gradients for every node.

use std::borrow::Cow;

use ndarray::{s, Array2, ArrayView2, Axis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNT(Var, Var),
    Add(Var, Var),
    /// `a` plus the 1×m row `b` broadcast over rows.
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Array2<f64>,
        inv_std: Vec<f64>,
    },
    /// Row-wise softmax of `x + mask`; the mask is a constant.
    MaskedSoftmax(Var),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    /// Output row `r` is input row `rows[r]`.
    GatherRows(Var, Vec<usize>),
    /// Elementwise product with a constant.
    MulConst(Var, Array2<f64>),
    /// Mean binary cross-entropy of sigmoid(logits) against targets.
    Bce(Var, Array2<f64>),
    /// Mean over rows of softmax cross-entropy; keeps the probabilities.
    CrossEntropy(Var, Vec<usize>, Array2<f64>),
}

struct Entry<'a> {
    value: Cow<'a, Array2<f64>>,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'a> {
    nodes: Vec<Entry<'a>>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

pub struct Grads {
    grads: Vec<Option<Array2<f64>>>,
}

impl Grads {
    /// `None` when no gradient reached `v`.
    pub fn get(&self, v: Var) -> Option<&Array2<f64>> {
        self.grads[v.0].as_ref()
    }

    pub fn take(&mut self, v: Var) -> Option<Array2<f64>> {
        self.grads[v.0].take()
    }
}

fn accumulate(slot: &mut Option<Array2<f64>>, delta: Array2<f64>) {
    match slot {
        Some(g) => *g += &delta,
        None => *slot = Some(delta),
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'a, Array2<f64>>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Entry {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Array2<f64> {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[[0, 0]]
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: &'a Array2<f64>) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn param_owned(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    fn unary(&mut self, a: Var, value: Array2<f64>, op: Op) -> Var {
        let ng = self.needs(a);
        self.push(Cow::Owned(value), op, ng)
    }

    fn binary(&mut self, a: Var, b: Var, value: Array2<f64>, op: Op) -> Var {
        let ng = self.needs(a) || self.needs(b);
        self.push(Cow::Owned(value), op, ng)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.binary(a, b, v, Op::MatMul(a, b))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(&self.value(b).t());
        self.binary(a, b, v, Op::MatMulNT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.binary(a, b, v, Op::Add(a, b))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let v = self.value(a) + &self.value(row).row(0);
        self.binary(a, row, v, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let v = self.value(a) * k;
        self.unary(a, v, Op::Scale(a, k))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x.max(0.0));
        self.unary(a, v, Op::Relu(a))
    }

    pub fn mul_const(&mut self, a: Var, k: Array2<f64>) -> Var {
        let v = self.value(a) * &k;
        self.unary(a, v, Op::MulConst(a, k))
    }

    /// Row-wise `(x - mean) / sqrt(var + eps) * gain + bias` with the
    /// population variance.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let d = xv.ncols() as f64;
        let mut xhat = xv.clone();
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for mut row in xhat.rows_mut() {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let r = 1.0 / (var + eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * r);
            inv_std.push(r);
        }
        let out = &xhat * &self.value(gain).row(0) + self.value(bias).row(0);
        let ng = self.needs(x) || self.needs(gain) || self.needs(bias);
        self.push(
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            ng,
        )
    }

    pub fn masked_softmax(&mut self, x: Var, mask: ArrayView2<f64>) -> Var {
        let mut v = self.value(x) + &mask;
        for mut row in v.rows_mut() {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|z| (z - m).exp());
            let sum = row.sum();
            row.mapv_inplace(|z| z / sum);
        }
        self.unary(x, v, Op::MaskedSoftmax(x))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a).slice(s![.., start..start + len]).to_owned();
        self.unary(a, v, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let v = ndarray::concatenate(Axis(1), &views).expect("row counts agree");
        let ng = parts.iter().any(|&p| self.needs(p));
        self.push(Cow::Owned(v), Op::ConcatCols(parts.to_vec()), ng)
    }

    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), rows);
        self.unary(a, v, Op::GatherRows(a, rows.to_vec()))
    }

    /// 1×1 mean binary cross-entropy, computed stably from logits.
    pub fn bce_with_logits(&mut self, logits: Var, targets: Array2<f64>) -> Var {
        let z = self.value(logits);
        let n = z.len() as f64;
        let loss: f64 = z
            .iter()
            .zip(targets.iter())
            .map(|(&z, &y)| z.max(0.0) - z * y + (-z.abs()).exp().ln_1p())
            .sum::<f64>()
            / n;
        let v = Array2::from_elem((1, 1), loss);
        self.unary(logits, v, Op::Bce(logits, targets))
    }

    /// 1×1 mean over rows of `-log softmax(row)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let mut probs = self.value(logits).clone();
        let mut loss = 0.0;
        for (mut row, &t) in probs.rows_mut().into_iter().zip(targets) {
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            row.mapv_inplace(|z| (z - m).exp());
            let sum = row.sum();
            loss -= (row[t] / sum).ln();
            row.mapv_inplace(|z| z / sum);
        }
        let v = Array2::from_elem((1, 1), loss / targets.len() as f64);
        self.unary(logits, v, Op::CrossEntropy(logits, targets.to_vec(), probs))
    }

    /// Reverse sweep from a 1×1 output.
    pub fn backward(&self, out: Var) -> Grads {
        let mut grads: Vec<Option<Array2<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(Array2::ones(self.value(out).raw_dim()));
        for idx in (0..=out.0).rev() {
            let entry = &self.nodes[idx];
            if !entry.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(&entry.op, &entry.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Grads { grads }
    }

    fn propagate(
        &self,
        op: &Op,
        out: &Array2<f64>,
        g: &Array2<f64>,
        grads: &mut [Option<Array2<f64>>],
    ) {
        let mut send = |v: Var, delta: Array2<f64>| {
            if self.needs(v) {
                accumulate(&mut grads[v.0], delta);
            }
        };
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    send(*a, g.dot(&self.value(*b).t()));
                }
                if self.needs(*b) {
                    send(*b, self.value(*a).t().dot(g));
                }
            }
            Op::MatMulNT(a, b) => {
                if self.needs(*a) {
                    send(*a, g.dot(self.value(*b)));
                }
                if self.needs(*b) {
                    send(*b, g.t().dot(self.value(*a)));
                }
            }
            Op::Add(a, b) => {
                send(*a, g.clone());
                send(*b, g.clone());
            }
            Op::AddRow(a, row) => {
                send(*a, g.clone());
                if self.needs(*row) {
                    send(*row, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
            }
            Op::Scale(a, k) => send(*a, g * *k),
            Op::Relu(a) => {
                let mut d = g.clone();
                d.zip_mut_with(out, |d, &o| {
                    if o <= 0.0 {
                        *d = 0.0
                    }
                });
                send(*a, d);
            }
            Op::MulConst(a, k) => send(*a, g * k),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                if self.needs(*gain) {
                    send(*gain, (g * xhat).sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.needs(*bias) {
                    send(*bias, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                }
                if self.needs(*x) {
                    let dxhat = g * &self.value(*gain).row(0);
                    let d = xhat.ncols() as f64;
                    let mut dx = Array2::zeros(g.raw_dim());
                    for r in 0..g.nrows() {
                        let dh = dxhat.row(r);
                        let xh = xhat.row(r);
                        let mean_dh = dh.sum() / d;
                        let mean_dhx = dh.dot(&xh) / d;
                        let rs = inv_std[r];
                        for c in 0..g.ncols() {
                            dx[[r, c]] = rs * (dh[c] - mean_dh - xh[c] * mean_dhx);
                        }
                    }
                    send(*x, dx);
                }
            }
            Op::MaskedSoftmax(x) => {
                let mut dx = g * out;
                for (mut row, s) in dx.rows_mut().into_iter().zip(out.rows()) {
                    let dot = row.sum();
                    row.zip_mut_with(&s, |d, &p| *d -= p * dot);
                }
                send(*x, dx);
            }
            Op::SliceCols(a, start) => {
                let mut d = Array2::zeros(self.value(*a).raw_dim());
                d.slice_mut(s![.., *start..*start + g.ncols()]).assign(g);
                send(*a, d);
            }
            Op::ConcatCols(parts) => {
                let mut off = 0;
                for &p in parts {
                    let w = self.value(p).ncols();
                    send(p, g.slice(s![.., off..off + w]).to_owned());
                    off += w;
                }
            }
            Op::GatherRows(a, rows) => {
                let mut d = Array2::zeros(self.value(*a).raw_dim());
                for (r, &src) in rows.iter().enumerate() {
                    let mut dst = d.row_mut(src);
                    dst += &g.row(r);
                }
                send(*a, d);
            }
            Op::Bce(logits, targets) => {
                let z = self.value(*logits);
                let n = z.len() as f64;
                let g0 = g[[0, 0]];
                let mut d = z.mapv(|z| 1.0 / (1.0 + (-z).exp()));
                d.zip_mut_with(targets, |p, &y| *p = g0 * (*p - y) / n);
                send(*logits, d);
            }
            Op::CrossEntropy(logits, targets, probs) => {
                let n = targets.len() as f64;
                let g0 = g[[0, 0]];
                let mut d = probs.clone();
                for (r, &t) in targets.iter().enumerate() {
                    d[[r, t]] -= 1.0;
                }
                d.mapv_inplace(|v| v * g0 / n);
                send(*logits, d);
            }
        }
    }
}
