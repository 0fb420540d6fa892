//! Reverse-mode automatic differentiation over a tape of tensor operations.
//!
//! A [`Graph`] is an arena: every operation appends a node after its parents,
//! so walking node ids in reverse is a reverse topological order and the
//! backward pass visits each node exactly once. Graphs are rebuilt per
//! training step; parameters live outside the graph in a
//! [`super::params::ParamSet`] and are bound to leaf nodes each step.

use super::tensor::Tensor;
use super::NumericsError;
use crate::rng::Rng;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

/// Target id that marks a position as excluded from the loss.
pub const IGNORE_INDEX: u32 = u32::MAX;

enum Op {
    Leaf,
    Add(usize, usize),
    /// Broadcast-add a length-`c` bias to every row of an `[r, c]` tensor.
    AddBias(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Matmul(usize, usize),
    /// `a · bᵀ` without materializing the transpose.
    MatmulNT(usize, usize),
    Gather {
        table: usize,
        ids: Vec<u32>,
    },
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
    },
    Relu(usize),
    Gelu(usize),
    Tanh(usize),
    Sigmoid(usize),
    Softmax(usize),
    CrossEntropy {
        logits: usize,
        targets: Vec<u32>,
        count: usize,
    },
    Dropout {
        x: usize,
        mask: Vec<f64>,
    },
    ConcatCols(Vec<usize>),
    ConcatRows(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
        len: usize,
    },
    SliceRows {
        x: usize,
        start: usize,
        len: usize,
    },
    MaxOverRows {
        x: usize,
        argmax: Vec<usize>,
    },
    MeanOverRows(usize),
    MaxPool1d {
        x: usize,
        argmax: Vec<usize>,
    },
    Unfold {
        x: usize,
        width: usize,
        pad: usize,
    },
    Reshape(usize),
    SumAll(usize),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
pub struct Gradients {
    by_node: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `var`, or `None` if nothing flowed into it.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.by_node[var.0].as_ref()
    }

    /// Gradient for `var`, zeros if nothing flowed into it.
    pub fn get_or_zeros(&self, var: Var, shape: &[usize]) -> Tensor {
        match self.by_node[var.0] {
            Some(ref t) => t.clone(),
            None => Tensor::zeros(shape),
        }
    }
}

pub struct Graph {
    nodes: Vec<Node>,
    rng: Rng,
    train_mode: bool,
}

impl Graph {
    /// Graph in evaluation mode (dropout disabled).
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            rng: Rng::new(0),
            train_mode: false,
        }
    }

    /// Graph in training mode; `seed` drives dropout masks.
    pub fn for_training(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            rng: Rng::new(seed),
            train_mode: true,
        }
    }

    pub fn is_training(&self) -> bool {
        self.train_mode
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, id: usize) -> bool {
        self.nodes[id].needs_grad
    }

    /// Trainable leaf: gradients are computed for it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Constant leaf: gradient flow stops here.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(NumericsError::Shape(format!(
                "add shapes differ: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x + y)
            .collect();
        let value = Tensor::from_vec(ta.shape(), data)?;
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, Op::Add(a.0, b.0), needs))
    }

    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[bias.0].value);
        if ta.shape().len() != 2 || tb.numel() != ta.shape()[1] {
            return Err(NumericsError::Shape(format!(
                "add_bias: {:?} with bias {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let cols = ta.shape()[1];
        let mut data = ta.data().to_vec();
        for (i, v) in data.iter_mut().enumerate() {
            *v += tb.data()[i % cols];
        }
        let value = Tensor::from_vec(ta.shape(), data)?;
        let needs = self.needs(a.0) || self.needs(bias.0);
        Ok(self.push(value, Op::AddBias(a.0, bias.0), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if ta.shape() != tb.shape() {
            return Err(NumericsError::Shape(format!(
                "mul shapes differ: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data: Vec<f64> = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(x, y)| x * y)
            .collect();
        let value = Tensor::from_vec(ta.shape(), data)?;
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, Op::Mul(a.0, b.0), needs))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.nodes[a.0].value.map(|v| v * factor);
        let needs = self.needs(a.0);
        self.push(value, Op::Scale(a.0, factor), needs)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let neg = self.scale(b, -1.0);
        self.add(a, neg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = {
            let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
            ta.matmul(tb)?
        };
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, Op::Matmul(a.0, b.0), needs))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var, NumericsError> {
        let value = {
            let (ta, tb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
            if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.cols() != tb.cols() {
                return Err(NumericsError::Shape(format!(
                    "matmul_nt: {:?} x {:?}ᵀ",
                    ta.shape(),
                    tb.shape()
                )));
            }
            let (m, k, n) = (ta.rows(), ta.cols(), tb.rows());
            let mut out = vec![0.0; m * n];
            for i in 0..m {
                let arow = ta.row(i);
                for j in 0..n {
                    let brow = tb.row(j);
                    let mut acc = 0.0;
                    for p in 0..k {
                        acc += arow[p] * brow[p];
                    }
                    out[i * n + j] = acc;
                }
            }
            Tensor::from_vec(&[m, n], out)?
        };
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(value, Op::MatmulNT(a.0, b.0), needs))
    }

    /// Rows of `table` selected by `ids`; backward scatter-adds into the table.
    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Result<Var, NumericsError> {
        let value = {
            let tt = &self.nodes[table.0].value;
            if tt.shape().len() != 2 {
                return Err(NumericsError::Shape("gather table must be 2-D".into()));
            }
            let (v, d) = (tt.rows(), tt.cols());
            let mut data = Vec::with_capacity(ids.len() * d);
            for &id in ids {
                if id as usize >= v {
                    return Err(NumericsError::Shape(format!(
                        "gather id {} out of range for table with {} rows",
                        id, v
                    )));
                }
                data.extend_from_slice(tt.row(id as usize));
            }
            Tensor::from_vec(&[ids.len(), d], data)?
        };
        let needs = self.needs(table.0);
        Ok(self.push(
            value,
            Op::Gather {
                table: table.0,
                ids: ids.to_vec(),
            },
            needs,
        ))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, NumericsError> {
        let (value, mean, inv_std) = {
            let tx = &self.nodes[x.0].value;
            let tg = &self.nodes[gain.0].value;
            let tb = &self.nodes[bias.0].value;
            if tx.shape().len() != 2 {
                return Err(NumericsError::Shape("layer_norm expects 2-D input".into()));
            }
            let (r, c) = (tx.rows(), tx.cols());
            if tg.numel() != c || tb.numel() != c {
                return Err(NumericsError::Shape(
                    "layer_norm gain/bias must match last axis".into(),
                ));
            }
            let mut data = vec![0.0; r * c];
            let mut means = vec![0.0; r];
            let mut invs = vec![0.0; r];
            for i in 0..r {
                let row = tx.row(i);
                let mu = row.iter().sum::<f64>() / c as f64;
                let var = row.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / c as f64;
                let inv = 1.0 / (var + eps).sqrt();
                means[i] = mu;
                invs[i] = inv;
                for j in 0..c {
                    data[i * c + j] = (row[j] - mu) * inv * tg.data()[j] + tb.data()[j];
                }
            }
            (Tensor::from_vec(&[r, c], data)?, means, invs)
        };
        let needs = self.needs(x.0) || self.needs(gain.0) || self.needs(bias.0);
        Ok(self.push(
            value,
            Op::LayerNorm {
                x: x.0,
                gain: gain.0,
                bias: bias.0,
                mean,
                inv_std,
            },
            needs,
        ))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(|v| v.max(0.0));
        let needs = self.needs(a.0);
        self.push(value, Op::Relu(a.0), needs)
    }

    /// GELU with the tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(gelu_fwd);
        let needs = self.needs(a.0);
        self.push(value, Op::Gelu(a.0), needs)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(f64::tanh);
        let needs = self.needs(a.0);
        self.push(value, Op::Tanh(a.0), needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.nodes[a.0].value.map(sigmoid_fwd);
        let needs = self.needs(a.0);
        self.push(value, Op::Sigmoid(a.0), needs)
    }

    /// Row-wise softmax over the last axis, with max subtraction for
    /// stability. Rank-1 input is treated as a single row.
    pub fn softmax(&mut self, a: Var) -> Var {
        let value = {
            let ta = &self.nodes[a.0].value;
            let cols = last_axis(ta);
            let mut data = ta.data().to_vec();
            for row in data.chunks_mut(cols) {
                softmax_row(row);
            }
            Tensor::from_vec(ta.shape(), data).expect("shape preserved")
        };
        let needs = self.needs(a.0);
        self.push(value, Op::Softmax(a.0), needs)
    }

    /// Mean negative log-likelihood of `targets` under row-wise softmax of
    /// `logits`. Rows whose target is [`IGNORE_INDEX`] do not contribute.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[u32]) -> Result<Var, NumericsError> {
        let (value, count) = {
            let tl = &self.nodes[logits.0].value;
            if tl.shape().len() != 2 {
                return Err(NumericsError::Shape("cross_entropy expects 2-D logits".into()));
            }
            let (r, c) = (tl.rows(), tl.cols());
            if targets.len() != r {
                return Err(NumericsError::Shape(format!(
                    "cross_entropy: {} logit rows, {} targets",
                    r,
                    targets.len()
                )));
            }
            let mut total = 0.0;
            let mut count = 0usize;
            for (i, &t) in targets.iter().enumerate() {
                if t == IGNORE_INDEX {
                    continue;
                }
                if t as usize >= c {
                    return Err(NumericsError::Shape(format!(
                        "cross_entropy target {} out of range for {} classes",
                        t, c
                    )));
                }
                let row = tl.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
                total += lse - row[t as usize];
                count += 1;
            }
            if count == 0 {
                return Err(NumericsError::UndefinedLoss);
            }
            (Tensor::scalar(total / count as f64), count)
        };
        let needs = self.needs(logits.0);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits: logits.0,
                targets: targets.to_vec(),
                count,
            },
            needs,
        ))
    }

    /// Inverted dropout. Identity in evaluation mode or when `p == 0`.
    pub fn dropout(&mut self, x: Var, p: f64) -> Var {
        if !self.train_mode || p <= 0.0 {
            let value = self.nodes[x.0].value.clone();
            let mask = vec![1.0; value.numel()];
            let needs = self.needs(x.0);
            return self.push(value, Op::Dropout { x: x.0, mask }, needs);
        }
        let keep = 1.0 - p;
        let n = self.nodes[x.0].value.numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if self.rng.gen_f64() < p {
                    0.0
                } else {
                    1.0 / keep
                }
            })
            .collect();
        let tx = &self.nodes[x.0].value;
        let data: Vec<f64> = tx.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::from_vec(tx.shape(), data).expect("shape preserved");
        let needs = self.needs(x.0);
        self.push(value, Op::Dropout { x: x.0, mask }, needs)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::Shape("concat_cols of nothing".into()));
        }
        let rows = self.nodes[parts[0].0].value.rows();
        let mut total_cols = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            if t.shape().len() != 2 || t.rows() != rows {
                return Err(NumericsError::Shape("concat_cols row mismatch".into()));
            }
            total_cols += t.cols();
        }
        let mut data = Vec::with_capacity(rows * total_cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.nodes[p.0].value.row(i));
            }
        }
        let value = Tensor::from_vec(&[rows, total_cols], data)?;
        let needs = parts.iter().any(|p| self.needs(p.0));
        Ok(self.push(
            value,
            Op::ConcatCols(parts.iter().map(|p| p.0).collect()),
            needs,
        ))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, NumericsError> {
        if parts.is_empty() {
            return Err(NumericsError::Shape("concat_rows of nothing".into()));
        }
        let cols = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let t = &self.nodes[p.0].value;
            if t.shape().len() != 2 || t.cols() != cols {
                return Err(NumericsError::Shape("concat_rows col mismatch".into()));
            }
            rows += t.rows();
            data.extend_from_slice(t.data());
        }
        let value = Tensor::from_vec(&[rows, cols], data)?;
        let needs = parts.iter().any(|p| self.needs(p.0));
        Ok(self.push(
            value,
            Op::ConcatRows(parts.iter().map(|p| p.0).collect()),
            needs,
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let value = {
            let t = &self.nodes[x.0].value;
            if t.shape().len() != 2 || start + len > t.cols() {
                return Err(NumericsError::Shape(format!(
                    "slice_cols [{start}, {start}+{len}) of {:?}",
                    t.shape()
                )));
            }
            let mut data = Vec::with_capacity(t.rows() * len);
            for i in 0..t.rows() {
                data.extend_from_slice(&t.row(i)[start..start + len]);
            }
            Tensor::from_vec(&[t.rows(), len], data)?
        };
        let needs = self.needs(x.0);
        Ok(self.push(value, Op::SliceCols { x: x.0, start, len }, needs))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var, NumericsError> {
        let value = {
            let t = &self.nodes[x.0].value;
            if t.shape().len() != 2 || start + len > t.rows() {
                return Err(NumericsError::Shape(format!(
                    "slice_rows [{start}, {start}+{len}) of {:?}",
                    t.shape()
                )));
            }
            let c = t.cols();
            Tensor::from_vec(&[len, c], t.data()[start * c..(start + len) * c].to_vec())?
        };
        let needs = self.needs(x.0);
        Ok(self.push(value, Op::SliceRows { x: x.0, start, len }, needs))
    }

    /// Column-wise max over rows: `[r, c]` -> `[c]`. Ties break to the first
    /// maximal row so gradients are deterministic.
    pub fn max_over_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let (value, argmax) = {
            let t = &self.nodes[x.0].value;
            if t.shape().len() != 2 || t.rows() == 0 {
                return Err(NumericsError::Shape("max_over_rows needs rows".into()));
            }
            let (r, c) = (t.rows(), t.cols());
            let mut best = vec![f64::NEG_INFINITY; c];
            let mut arg = vec![0usize; c];
            for i in 0..r {
                for j in 0..c {
                    let v = t.at2(i, j);
                    if v > best[j] {
                        best[j] = v;
                        arg[j] = i;
                    }
                }
            }
            (Tensor::from_vec(&[c], best)?, arg)
        };
        let needs = self.needs(x.0);
        Ok(self.push(value, Op::MaxOverRows { x: x.0, argmax }, needs))
    }

    /// Column-wise mean over rows: `[r, c]` -> `[c]`.
    pub fn mean_over_rows(&mut self, x: Var) -> Result<Var, NumericsError> {
        let value = {
            let t = &self.nodes[x.0].value;
            if t.shape().len() != 2 || t.rows() == 0 {
                return Err(NumericsError::Shape("mean_over_rows needs rows".into()));
            }
            let (r, c) = (t.rows(), t.cols());
            let mut out = vec![0.0; c];
            for i in 0..r {
                for j in 0..c {
                    out[j] += t.at2(i, j);
                }
            }
            for v in &mut out {
                *v /= r as f64;
            }
            Tensor::from_vec(&[c], out)?
        };
        let needs = self.needs(x.0);
        Ok(self.push(value, Op::MeanOverRows(x.0), needs))
    }

    /// 1-D max pooling over rows with the given window and stride. When the
    /// input is shorter than the window a single pool covers all rows.
    pub fn max_pool1d(
        &mut self,
        x: Var,
        window: usize,
        stride: usize,
    ) -> Result<Var, NumericsError> {
        let (value, argmax) = {
            let t = &self.nodes[x.0].value;
            if t.shape().len() != 2 || t.rows() == 0 || window == 0 || stride == 0 {
                return Err(NumericsError::Shape("max_pool1d bad arguments".into()));
            }
            let (r, c) = (t.rows(), t.cols());
            let out_rows = if r <= window {
                1
            } else {
                (r - window) / stride + 1
            };
            let mut data = vec![0.0; out_rows * c];
            let mut arg = vec![0usize; out_rows * c];
            for o in 0..out_rows {
                let lo = o * stride;
                let hi = (lo + window).min(r);
                for j in 0..c {
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = lo;
                    for i in lo..hi {
                        let v = t.at2(i, j);
                        if v > best {
                            best = v;
                            bi = i;
                        }
                    }
                    data[o * c + j] = best;
                    arg[o * c + j] = bi;
                }
            }
            (Tensor::from_vec(&[out_rows, c], data)?, arg)
        };
        let needs = self.needs(x.0);
        Ok(self.push(value, Op::MaxPool1d { x: x.0, argmax }, needs))
    }

    /// Sliding-window unfold: `[L, c]` -> `[L + 2*pad - width + 1, width*c]`
    /// with zero padding rows. Convolution is `unfold` followed by `matmul`.
    pub fn unfold(&mut self, x: Var, width: usize, pad: usize) -> Result<Var, NumericsError> {
        let value = {
            let t = &self.nodes[x.0].value;
            if t.shape().len() != 2 || width == 0 {
                return Err(NumericsError::Shape("unfold bad arguments".into()));
            }
            let (l, c) = (t.rows(), t.cols());
            if l + 2 * pad < width {
                return Err(NumericsError::Shape(format!(
                    "unfold: {} rows (+{} pad) shorter than width {}",
                    l, pad, width
                )));
            }
            let out_rows = l + 2 * pad - width + 1;
            let mut data = vec![0.0; out_rows * width * c];
            for o in 0..out_rows {
                for k in 0..width {
                    let src = o + k;
                    if src < pad || src >= l + pad {
                        continue; // zero padding
                    }
                    let row = t.row(src - pad);
                    let dst = o * width * c + k * c;
                    data[dst..dst + c].copy_from_slice(row);
                }
            }
            Tensor::from_vec(&[out_rows, width * c], data)?
        };
        let needs = self.needs(x.0);
        Ok(self.push(
            value,
            Op::Unfold {
                x: x.0,
                width,
                pad,
            },
            needs,
        ))
    }

    /// 1-D convolution over rows: input `[L, c_in]`, weight
    /// `[width*c_in, c_out]`, bias `[c_out]`.
    pub fn conv1d(
        &mut self,
        x: Var,
        weight: Var,
        bias: Var,
        width: usize,
        pad: usize,
    ) -> Result<Var, NumericsError> {
        let unfolded = self.unfold(x, width, pad)?;
        let conv = self.matmul(unfolded, weight)?;
        self.add_bias(conv, bias)
    }

    /// View the same data under a different shape with equal element count.
    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NumericsError> {
        let t = &self.nodes[x.0].value;
        if shape.iter().product::<usize>() != t.numel() {
            return Err(NumericsError::Shape(format!(
                "reshape {:?} to {:?}",
                t.shape(),
                shape
            )));
        }
        let value = Tensor::from_vec(shape, t.data().to_vec())?;
        let needs = self.needs(x.0);
        Ok(self.push(value, Op::Reshape(x.0), needs))
    }

    pub fn sum_all(&mut self, x: Var) -> Var {
        let total: f64 = self.nodes[x.0].value.data().iter().sum();
        let needs = self.needs(x.0);
        self.push(Tensor::scalar(total), Op::SumAll(x.0), needs)
    }

    pub fn mean_all(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].value.numel();
        let s = self.sum_all(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Average a list of scalar vars.
    pub fn mean_of(&mut self, vars: &[Var]) -> Result<Var, NumericsError> {
        if vars.is_empty() {
            return Err(NumericsError::Shape("mean_of nothing".into()));
        }
        let mut acc = vars[0];
        for &v in &vars[1..] {
            acc = self.add(acc, v)?;
        }
        Ok(self.scale(acc, 1.0 / vars.len() as f64))
    }

    /// Reverse-mode sweep from the scalar `root`. Nodes are visited in
    /// reverse insertion order, which is a reverse topological order of the
    /// tape.
    pub fn backward(&mut self, root: Var) -> Result<Gradients, NumericsError> {
        if self.nodes[root.0].value.numel() != 1 {
            return Err(NumericsError::Shape(
                "backward root must be a scalar".into(),
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::from_vec(
            self.nodes[root.0].value.shape(),
            vec![1.0],
        )?);
        for id in (0..=root.0).rev() {
            if !self.nodes[id].needs_grad {
                continue;
            }
            let gout = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(id, &gout, &mut grads);
            grads[id] = Some(gout);
        }
        Ok(Gradients { by_node: grads })
    }

    fn accumulate(&self, id: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) {
        let add_into = |grads: &mut [Option<Tensor>], pid: usize, shape: &[usize], f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[pid].needs_grad {
                return;
            }
            let slot = grads[pid].get_or_insert_with(|| Tensor::zeros(shape));
            f(slot.data_mut());
        };
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for &pid in &[*a, *b] {
                    let shape = self.nodes[pid].value.shape().to_vec();
                    add_into(grads, pid, &shape, &mut |dst| {
                        for (d, g) in dst.iter_mut().zip(gout.data()) {
                            *d += g;
                        }
                    });
                }
            }
            Op::AddBias(a, b) => {
                let shape_a = self.nodes[*a].value.shape().to_vec();
                add_into(grads, *a, &shape_a, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(gout.data()) {
                        *d += g;
                    }
                });
                let shape_b = self.nodes[*b].value.shape().to_vec();
                let cols = shape_a[1];
                add_into(grads, *b, &shape_b, &mut |dst| {
                    for (i, g) in gout.data().iter().enumerate() {
                        dst[i % cols] += g;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let shape = va.shape().to_vec();
                add_into(grads, *a, &shape, &mut |dst| {
                    for ((d, g), y) in dst.iter_mut().zip(gout.data()).zip(vb.data()) {
                        *d += g * y;
                    }
                });
                add_into(grads, *b, &shape, &mut |dst| {
                    for ((d, g), x) in dst.iter_mut().zip(gout.data()).zip(va.data()) {
                        *d += g * x;
                    }
                });
            }
            Op::Scale(a, factor) => {
                let shape = self.nodes[*a].value.shape().to_vec();
                let f = *factor;
                add_into(grads, *a, &shape, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(gout.data()) {
                        *d += g * f;
                    }
                });
            }
            Op::Matmul(a, b) => {
                // C = A·B, dA = dC·Bᵀ, dB = Aᵀ·dC
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let da = gout.matmul(&vb.transpose2()).expect("grad shape");
                let db = va.transpose2().matmul(gout).expect("grad shape");
                let shape_a = va.shape().to_vec();
                add_into(grads, *a, &shape_a, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(da.data()) {
                        *d += g;
                    }
                });
                let shape_b = vb.shape().to_vec();
                add_into(grads, *b, &shape_b, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(db.data()) {
                        *d += g;
                    }
                });
            }
            Op::MatmulNT(a, b) => {
                // C = A·Bᵀ, dA = dC·B, dB = dCᵀ·A
                let (va, vb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let da = gout.matmul(vb).expect("grad shape");
                let db = gout.transpose2().matmul(va).expect("grad shape");
                let shape_a = va.shape().to_vec();
                add_into(grads, *a, &shape_a, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(da.data()) {
                        *d += g;
                    }
                });
                let shape_b = vb.shape().to_vec();
                add_into(grads, *b, &shape_b, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(db.data()) {
                        *d += g;
                    }
                });
            }
            Op::Gather { table, ids } => {
                let shape = self.nodes[*table].value.shape().to_vec();
                let d = shape[1];
                add_into(grads, *table, &shape, &mut |dst| {
                    for (pos, &id) in ids.iter().enumerate() {
                        let grow = &gout.data()[pos * d..(pos + 1) * d];
                        let trow = &mut dst[id as usize * d..(id as usize + 1) * d];
                        for (t, g) in trow.iter_mut().zip(grow) {
                            *t += g;
                        }
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                mean,
                inv_std,
            } => {
                let vx = &self.nodes[*x].value;
                let vg = &self.nodes[*gain].value;
                let (r, c) = (vx.rows(), vx.cols());
                // d gain, d bias
                let shape_g = vg.shape().to_vec();
                add_into(grads, *gain, &shape_g, &mut |dst| {
                    for i in 0..r {
                        for j in 0..c {
                            let xhat = (vx.at2(i, j) - mean[i]) * inv_std[i];
                            dst[j] += gout.at2(i, j) * xhat;
                        }
                    }
                });
                let shape_b = self.nodes[*bias].value.shape().to_vec();
                add_into(grads, *bias, &shape_b, &mut |dst| {
                    for i in 0..r {
                        for j in 0..c {
                            dst[j] += gout.at2(i, j);
                        }
                    }
                });
                // d x, standard layer-norm backward per row
                let shape_x = vx.shape().to_vec();
                add_into(grads, *x, &shape_x, &mut |dst| {
                    for i in 0..r {
                        let inv = inv_std[i];
                        let mut sum_dxhat = 0.0;
                        let mut sum_dxhat_xhat = 0.0;
                        let mut dxhat = vec![0.0; c];
                        for j in 0..c {
                            let xhat = (vx.at2(i, j) - mean[i]) * inv;
                            let dxh = gout.at2(i, j) * vg.data()[j];
                            dxhat[j] = dxh;
                            sum_dxhat += dxh;
                            sum_dxhat_xhat += dxh * xhat;
                        }
                        let n = c as f64;
                        for j in 0..c {
                            let xhat = (vx.at2(i, j) - mean[i]) * inv;
                            dst[i * c + j] +=
                                inv / n * (n * dxhat[j] - sum_dxhat - xhat * sum_dxhat_xhat);
                        }
                    }
                });
            }
            Op::Relu(a) => {
                let va = &self.nodes[*a].value;
                let shape = va.shape().to_vec();
                add_into(grads, *a, &shape, &mut |dst| {
                    for ((d, g), x) in dst.iter_mut().zip(gout.data()).zip(va.data()) {
                        if *x > 0.0 {
                            *d += g;
                        }
                    }
                });
            }
            Op::Gelu(a) => {
                let va = &self.nodes[*a].value;
                let shape = va.shape().to_vec();
                add_into(grads, *a, &shape, &mut |dst| {
                    for ((d, g), x) in dst.iter_mut().zip(gout.data()).zip(va.data()) {
                        *d += g * gelu_bwd(*x);
                    }
                });
            }
            Op::Tanh(a) => {
                let vy = &self.nodes[id].value;
                let shape = self.nodes[*a].value.shape().to_vec();
                add_into(grads, *a, &shape, &mut |dst| {
                    for ((d, g), y) in dst.iter_mut().zip(gout.data()).zip(vy.data()) {
                        *d += g * (1.0 - y * y);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let vy = &self.nodes[id].value;
                let shape = self.nodes[*a].value.shape().to_vec();
                add_into(grads, *a, &shape, &mut |dst| {
                    for ((d, g), y) in dst.iter_mut().zip(gout.data()).zip(vy.data()) {
                        *d += g * y * (1.0 - y);
                    }
                });
            }
            Op::Softmax(a) => {
                let vy = &self.nodes[id].value;
                let cols = last_axis(vy);
                let shape = self.nodes[*a].value.shape().to_vec();
                add_into(grads, *a, &shape, &mut |dst| {
                    for (row_idx, (yrow, grow)) in vy
                        .data()
                        .chunks(cols)
                        .zip(gout.data().chunks(cols))
                        .enumerate()
                    {
                        let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                        let drow = &mut dst[row_idx * cols..(row_idx + 1) * cols];
                        for j in 0..cols {
                            drow[j] += yrow[j] * (grow[j] - dot);
                        }
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                targets,
                count,
            } => {
                let vl = &self.nodes[*logits].value;
                let (r, c) = (vl.rows(), vl.cols());
                let g = gout.item() / *count as f64;
                let shape = vl.shape().to_vec();
                add_into(grads, *logits, &shape, &mut |dst| {
                    for i in 0..r {
                        let t = targets[i];
                        if t == IGNORE_INDEX {
                            continue;
                        }
                        let row = vl.row(i);
                        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let denom: f64 = row.iter().map(|v| (v - max).exp()).sum();
                        let drow = &mut dst[i * c..(i + 1) * c];
                        for j in 0..c {
                            let p = (row[j] - max).exp() / denom;
                            let y = if j == t as usize { 1.0 } else { 0.0 };
                            drow[j] += g * (p - y);
                        }
                    }
                });
            }
            Op::Dropout { x, mask } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                add_into(grads, *x, &shape, &mut |dst| {
                    for ((d, g), m) in dst.iter_mut().zip(gout.data()).zip(mask) {
                        *d += g * m;
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let rows = self.nodes[id].value.rows();
                let mut offset = 0;
                let total_cols = self.nodes[id].value.cols();
                for &pid in parts {
                    let pc = self.nodes[pid].value.cols();
                    let shape = self.nodes[pid].value.shape().to_vec();
                    let off = offset;
                    add_into(grads, pid, &shape, &mut |dst| {
                        for i in 0..rows {
                            for j in 0..pc {
                                dst[i * pc + j] += gout.data()[i * total_cols + off + j];
                            }
                        }
                    });
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let cols = self.nodes[id].value.cols();
                let mut offset = 0;
                for &pid in parts {
                    let pr = self.nodes[pid].value.rows();
                    let shape = self.nodes[pid].value.shape().to_vec();
                    let off = offset;
                    add_into(grads, pid, &shape, &mut |dst| {
                        for (d, g) in dst
                            .iter_mut()
                            .zip(&gout.data()[off * cols..(off + pr) * cols])
                        {
                            *d += g;
                        }
                    });
                    offset += pr;
                }
            }
            Op::SliceCols { x, start, len } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let cols = shape[1];
                let rows = shape[0];
                add_into(grads, *x, &shape, &mut |dst| {
                    for i in 0..rows {
                        for j in 0..*len {
                            dst[i * cols + start + j] += gout.data()[i * len + j];
                        }
                    }
                });
            }
            Op::SliceRows { x, start, len } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let cols = shape[1];
                add_into(grads, *x, &shape, &mut |dst| {
                    for (d, g) in dst[start * cols..(start + len) * cols]
                        .iter_mut()
                        .zip(gout.data())
                    {
                        *d += g;
                    }
                });
            }
            Op::MaxOverRows { x, argmax } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let cols = shape[1];
                add_into(grads, *x, &shape, &mut |dst| {
                    for (j, &i) in argmax.iter().enumerate() {
                        dst[i * cols + j] += gout.data()[j];
                    }
                });
            }
            Op::MeanOverRows(x) => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let (rows, cols) = (shape[0], shape[1]);
                add_into(grads, *x, &shape, &mut |dst| {
                    for i in 0..rows {
                        for j in 0..cols {
                            dst[i * cols + j] += gout.data()[j] / rows as f64;
                        }
                    }
                });
            }
            Op::MaxPool1d { x, argmax } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let cols = shape[1];
                add_into(grads, *x, &shape, &mut |dst| {
                    for (o, &i) in argmax.iter().enumerate() {
                        let j = o % cols;
                        dst[i * cols + j] += gout.data()[o];
                    }
                });
            }
            Op::Unfold { x, width, pad } => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let (l, c) = (shape[0], shape[1]);
                let out_rows = self.nodes[id].value.rows();
                add_into(grads, *x, &shape, &mut |dst| {
                    for o in 0..out_rows {
                        for k in 0..*width {
                            let src = o + k;
                            if src < *pad || src >= l + pad {
                                continue;
                            }
                            let gsrc = &gout.data()[o * width * c + k * c..o * width * c + (k + 1) * c];
                            let drow = &mut dst[(src - pad) * c..(src - pad + 1) * c];
                            for (d, g) in drow.iter_mut().zip(gsrc) {
                                *d += g;
                            }
                        }
                    }
                });
            }
            Op::Reshape(x) => {
                let shape = self.nodes[*x].value.shape().to_vec();
                add_into(grads, *x, &shape, &mut |dst| {
                    for (d, g) in dst.iter_mut().zip(gout.data()) {
                        *d += g;
                    }
                });
            }
            Op::SumAll(x) => {
                let shape = self.nodes[*x].value.shape().to_vec();
                let g = gout.item();
                add_into(grads, *x, &shape, &mut |dst| {
                    for d in dst.iter_mut() {
                        *d += g;
                    }
                });
            }
        }
    }
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

fn last_axis(t: &Tensor) -> usize {
    *t.shape().last().expect("softmax on scalar")
}

fn softmax_row(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut denom = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        denom += *v;
    }
    for v in row.iter_mut() {
        *v /= denom;
    }
}

fn sigmoid_fwd(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

fn gelu_fwd(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_bwd(x: f64) -> f64 {
    let u = GELU_C * (x + GELU_A * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(rows: &[Vec<f64>]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn softmax_symmetry_and_shift_invariance() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap());
        let y = g.softmax(x);
        assert_eq!(g.value(y).data(), &[0.5, 0.5]);

        let mut g = Graph::new();
        let a = g.constant(Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap());
        let b = g.constant(Tensor::from_vec(&[3], vec![11.0, 12.0, 13.0]).unwrap());
        let sa = g.softmax(a);
        let sb = g.softmax(b);
        for (x, y) in g.value(sa).data().iter().zip(g.value(sb).data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_large_inputs_stable() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(&[2], vec![1000.0, 0.0]).unwrap());
        let y = g.softmax(x);
        let d = g.value(y).data();
        assert!(d[0] > 1.0 - 1e-12 && d[1] < 1e-12);
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut g = Graph::new();
        let x = g.constant(t2(&[vec![0.3, -2.0, 5.0], vec![9.0, 9.0, 9.0]]));
        let y = g.softmax(x);
        for row in g.value(y).data().chunks(3) {
            let s: f64 = row.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&p| p > 0.0 && p < 1.0));
        }
    }

    #[test]
    fn cross_entropy_uniform_logits_is_log_n() {
        let mut g = Graph::new();
        let x = g.constant(t2(&[vec![0.0; 4]]));
        let loss = g.cross_entropy(x, &[2]).unwrap();
        assert!((g.value(loss).item() - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_confident_correct_is_zero() {
        let mut g = Graph::new();
        let x = g.constant(t2(&[vec![1000.0, 0.0, 0.0]]));
        let loss = g.cross_entropy(x, &[0]).unwrap();
        assert!(g.value(loss).item() < 1e-9);
    }

    #[test]
    fn cross_entropy_ignores_masked_rows() {
        // Mean over non-ignored rows only.
        let mut g = Graph::new();
        let x = g.constant(t2(&[vec![0.0; 4], vec![1000.0, 0.0, 0.0, 0.0]]));
        let loss = g.cross_entropy(x, &[IGNORE_INDEX, 0]).unwrap();
        assert!(g.value(loss).item() < 1e-9);

        let mut g = Graph::new();
        let x = g.constant(t2(&[vec![0.0; 4], vec![0.0; 4]]));
        let loss = g.cross_entropy(x, &[IGNORE_INDEX, 1]).unwrap();
        assert!((g.value(loss).item() - 4.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_all_ignored_is_undefined() {
        let mut g = Graph::new();
        let x = g.constant(t2(&[vec![0.0; 4]]));
        assert!(matches!(
            g.cross_entropy(x, &[IGNORE_INDEX]),
            Err(NumericsError::UndefinedLoss)
        ));
    }

    #[test]
    fn backward_through_matmul() {
        // loss = sum(A·B); dA = 1·Bᵀ, dB = Aᵀ·1
        let mut g = Graph::new();
        let a = g.param(t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.param(t2(&[vec![5.0], vec![6.0]]));
        let c = g.matmul(a, b).unwrap();
        let loss = g.sum_all(c);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(a).unwrap().data(), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(grads.get(b).unwrap().data(), &[4.0, 6.0]);
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut g = Graph::new();
        let x = g.param(t2(&[vec![1.0, -2.0, 3.0]]));
        let y = g.dropout(x, 0.5);
        assert_eq!(g.value(y).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn dropout_train_mode_masks_and_scales() {
        let mut g = Graph::for_training(9);
        let x = g.param(Tensor::full(&[1, 1000], 1.0));
        let y = g.dropout(x, 0.25);
        let kept = g.value(y).data().iter().filter(|&&v| v != 0.0).count();
        assert!((600..=900).contains(&kept), "kept {kept}");
        for &v in g.value(y).data() {
            assert!(v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12);
        }
        // Gradient equals the mask.
        let s = g.sum_all(y);
        let grads = g.backward(s).unwrap();
        let gx = grads.get(x).unwrap();
        for (gv, yv) in gx.data().iter().zip(g.value(y).data()) {
            assert!((gv - yv).abs() < 1e-12);
        }
    }

    #[test]
    fn dropout_deterministic_given_seed() {
        let run = || {
            let mut g = Graph::for_training(33);
            let x = g.param(Tensor::full(&[4, 4], 2.0));
            let y = g.dropout(x, 0.5);
            g.value(y).data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn concat_and_slice_roundtrip() {
        let mut g = Graph::new();
        let a = g.param(t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = g.param(t2(&[vec![5.0], vec![6.0]]));
        let cat = g.concat_cols(&[a, b]).unwrap();
        assert_eq!(g.value(cat).data(), &[1.0, 2.0, 5.0, 3.0, 4.0, 6.0]);
        let back = g.slice_cols(cat, 2, 1).unwrap();
        assert_eq!(g.value(back).data(), &[5.0, 6.0]);
    }

    #[test]
    fn max_pool_shorter_than_window() {
        let mut g = Graph::new();
        let x = g.param(t2(&[vec![1.0], vec![5.0]]));
        let y = g.max_pool1d(x, 3, 2).unwrap();
        assert_eq!(g.value(y).shape(), &[1, 1]);
        assert_eq!(g.value(y).data(), &[5.0]);
    }

    #[test]
    fn unfold_same_padding() {
        let mut g = Graph::new();
        let x = g.param(t2(&[vec![1.0], vec![2.0], vec![3.0]]));
        let u = g.unfold(x, 3, 1).unwrap();
        assert_eq!(g.value(u).shape(), &[3, 3]);
        assert_eq!(
            g.value(u).data(),
            &[0.0, 1.0, 2.0, 1.0, 2.0, 3.0, 2.0, 3.0, 0.0]
        );
    }

    #[test]
    fn gather_rejects_out_of_range() {
        let mut g = Graph::new();
        let table = g.param(t2(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        assert!(g.gather(table, &[2]).is_err());
        let ok = g.gather(table, &[1, 0, 1]).unwrap();
        assert_eq!(g.value(ok).data(), &[3.0, 4.0, 1.0, 2.0, 3.0, 4.0]);
    }
}
