//! Tape-based reverse-mode automatic differentiation over [`Matrix`] values.
//!
//! A [`Tape`] records each operation in execution order; since every input
//! must already be on the tape, the append order is a topological order and
//! the backward pass is a single reverse sweep. One tape serves one forward
//! evaluation and one backward call; tapes are cheap to rebuild per loss.

use crate::error::{Error, Result};
use crate::tensor::{layer_normalize, row_softmax, Matrix, SeededRng};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// Broadcast-add a 1 x C row vector to every row of a T x C matrix.
    AddRowVec(NodeId, NodeId),
    Scale(NodeId, f64),
    ConcatCols(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    RowSoftmax(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    },
    /// Inverted dropout; the mask holds 0 or 1/(1-rate) and is fixed at record time.
    Dropout {
        x: NodeId,
        mask: Matrix,
    },
    Transpose(NodeId),
    /// Divide each row by its sum.
    RowNormalize(NodeId),
    /// Elementwise product.
    Mul(NodeId, NodeId),
    Sum(NodeId),
    Mse {
        pred: NodeId,
        target: NodeId,
    },
}

struct Node {
    op: Op,
    value: Matrix,
}

/// Gradients of one scalar loss with respect to every tape node that
/// (transitively) feeds it. Nodes off the loss path have no entry.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Matrix> {
        self.grads.get(id.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `id`, or a zero matrix of the given shape if the node
    /// does not influence the loss.
    pub fn get_or_zeros(&self, id: NodeId, rows: usize, cols: usize) -> Matrix {
        match self.get(id) {
            Some(g) => g.clone(),
            None => Matrix::zeros(rows, cols),
        }
    }
}

/// Recording tape. Build the forward computation through the typed methods,
/// then call [`Tape::backward`] once on a scalar node.
pub struct Tape {
    nodes: Vec<Node>,
    consumed: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Matrix) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Put a constant or parameter value on the tape.
    pub fn leaf(&mut self, value: Matrix) -> NodeId {
        self.push(Op::Leaf, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), value))
    }

    pub fn add_row_vec(&mut self, a: NodeId, v: NodeId) -> Result<NodeId> {
        let (rows, cols) = self.value(a).shape();
        if self.value(v).shape() != (1, cols) {
            return Err(Error::shape(
                "add_row_vec",
                format!("{}x{} + {:?}", rows, cols, self.value(v).shape()),
            ));
        }
        let mut value = self.value(a).clone();
        for r in 0..rows {
            for c in 0..cols {
                let x = value.get(r, c) + self.value(v).get(0, c);
                value.set(r, c, x);
            }
        }
        Ok(self.push(Op::AddRowVec(a, v), value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).scale(c);
        self.push(Op::Scale(a, c), value)
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(Op::ConcatCols(a, b), value))
    }

    pub fn concat_rows(&mut self, blocks: &[NodeId]) -> Result<NodeId> {
        let mats: Vec<&Matrix> = blocks.iter().map(|&id| self.value(id)).collect();
        let value = Matrix::concat_rows(&mats)?;
        Ok(self.push(Op::ConcatRows(blocks.to_vec()), value))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, end: usize) -> Result<NodeId> {
        let value = self.value(a).slice_rows(start, end)?;
        Ok(self.push(Op::SliceRows(a, start, end), value))
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let value = row_softmax(self.value(a));
        self.push(Op::RowSoftmax(a), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        // f64::max would swallow NaN; keep it propagating.
        let value = self
            .value(a)
            .map(|x| if x.is_nan() { x } else { x.max(0.0) });
        self.push(Op::Relu(a), value)
    }

    /// Per-row layer normalization with trainable gain and bias (1 x C nodes).
    pub fn layer_norm(
        &mut self,
        x: NodeId,
        gain: NodeId,
        bias: NodeId,
        eps: f64,
    ) -> Result<NodeId> {
        let cols = self.value(x).cols();
        if self.value(gain).shape() != (1, cols) || self.value(bias).shape() != (1, cols) {
            return Err(Error::shape(
                "layer_norm",
                format!(
                    "gain {:?} / bias {:?} for input with {} columns",
                    self.value(gain).shape(),
                    self.value(bias).shape(),
                    cols
                ),
            ));
        }
        let value = layer_normalize(
            self.value(x),
            self.value(gain).row(0),
            self.value(bias).row(0),
            eps,
        )?;
        Ok(self.push(Op::LayerNorm { x, gain, bias, eps }, value))
    }

    /// Inverted dropout. `rate == 0` records a pure pass-through and draws
    /// nothing from the RNG, so a rate-0 graph is bit-identical to one with
    /// no dropout node at all.
    pub fn dropout(&mut self, x: NodeId, rate: f64, rng: &mut SeededRng) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Input(format!(
                "dropout rate {} outside [0, 1)",
                rate
            )));
        }
        let (rows, cols) = self.value(x).shape();
        let mask = if rate == 0.0 {
            Matrix::filled(rows, cols, 1.0)
        } else {
            let keep = 1.0 / (1.0 - rate);
            let mut m = Matrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    if rng.uniform(0.0, 1.0) >= rate {
                        m.set(r, c, keep);
                    }
                }
            }
            m
        };
        let value = self.value(x).hadamard(&mask)?;
        Ok(self.push(Op::Dropout { x, mask }, value))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).transpose();
        self.push(Op::Transpose(a), value)
    }

    /// Divide each row by its sum. Rows must have nonzero sums.
    pub fn row_normalize(&mut self, a: NodeId) -> Result<NodeId> {
        let mut value = self.value(a).clone();
        for r in 0..value.rows() {
            let sum: f64 = value.row(r).iter().sum();
            if sum == 0.0 {
                return Err(Error::Numeric(format!(
                    "row_normalize: row {} sums to zero",
                    r
                )));
            }
            for c in 0..value.cols() {
                value.set(r, c, value.get(r, c) / sum);
            }
        }
        Ok(self.push(Op::RowNormalize(a), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    /// Sum of all entries, as a 1 x 1 node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::from_vec(1, 1, vec![self.value(a).sum()]).unwrap();
        self.push(Op::Sum(a), value)
    }

    /// Mean squared error over all entries, as a 1 x 1 node.
    pub fn mse(&mut self, pred: NodeId, target: NodeId) -> Result<NodeId> {
        if self.value(pred).shape() != self.value(target).shape() {
            return Err(Error::shape(
                "mse",
                format!(
                    "{:?} vs {:?}",
                    self.value(pred).shape(),
                    self.value(target).shape()
                ),
            ));
        }
        let n = (self.value(pred).rows() * self.value(pred).cols()) as f64;
        let sq = self
            .value(pred)
            .data()
            .iter()
            .zip(self.value(target).data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>();
        let value = Matrix::from_vec(1, 1, vec![sq / n]).unwrap();
        Ok(self.push(Op::Mse { pred, target }, value))
    }

    /// Reverse sweep from a scalar loss node. Consumes the tape's backward
    /// capability; a second call is a state error.
    pub fn backward(&mut self, loss: NodeId) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::State("backward already called on this tape".into()));
        }
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                format!("loss must be 1x1, got {:?}", self.value(loss).shape()),
            ));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::from_vec(1, 1, vec![1.0]).unwrap());

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.accumulate_inputs(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }

        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Matrix>], id: NodeId, delta: Matrix) -> Result<()> {
        match &mut grads[id.0] {
            Some(existing) => {
                *existing = existing.add(&delta)?;
            }
            slot @ None => {
                *slot = Some(delta);
            }
        }
        Ok(())
    }

    fn accumulate_inputs(
        &self,
        idx: usize,
        g: &Matrix,
        grads: &mut [Option<Matrix>],
    ) -> Result<()> {
        let value = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let da = g.matmul(&self.value(*b).transpose())?;
                let db = self.value(*a).transpose().matmul(g)?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::AddRowVec(a, v) => {
                self.accumulate(grads, *a, g.clone())?;
                let mut dv = Matrix::zeros(1, g.cols());
                for r in 0..g.rows() {
                    for c in 0..g.cols() {
                        dv.set(0, c, dv.get(0, c) + g.get(r, c));
                    }
                }
                self.accumulate(grads, *v, dv)?;
            }
            Op::Scale(a, c) => {
                self.accumulate(grads, *a, g.scale(*c))?;
            }
            Op::ConcatCols(a, b) => {
                let a_cols = self.value(*a).cols();
                let rows = g.rows();
                let mut da = Matrix::zeros(rows, a_cols);
                let mut db = Matrix::zeros(rows, g.cols() - a_cols);
                for r in 0..rows {
                    for c in 0..a_cols {
                        da.set(r, c, g.get(r, c));
                    }
                    for c in a_cols..g.cols() {
                        db.set(r, c - a_cols, g.get(r, c));
                    }
                }
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::ConcatRows(blocks) => {
                let mut start = 0;
                for &b in blocks {
                    let rows = self.value(b).rows();
                    let slice = g.slice_rows(start, start + rows)?;
                    self.accumulate(grads, b, slice)?;
                    start += rows;
                }
            }
            Op::SliceRows(a, start, _end) => {
                let (rows, cols) = self.value(*a).shape();
                let mut da = Matrix::zeros(rows, cols);
                for r in 0..g.rows() {
                    for c in 0..cols {
                        da.set(start + r, c, g.get(r, c));
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::RowSoftmax(a) => {
                // dx_i = p_i * (g_i - sum_j g_j p_j) per row.
                let p = value;
                let mut da = Matrix::zeros(p.rows(), p.cols());
                for r in 0..p.rows() {
                    let dot: f64 = (0..p.cols()).map(|c| g.get(r, c) * p.get(r, c)).sum();
                    for c in 0..p.cols() {
                        da.set(r, c, p.get(r, c) * (g.get(r, c) - dot));
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::Tanh(a) => {
                let da = g.hadamard(&value.map(|y| 1.0 - y * y))?;
                self.accumulate(grads, *a, da)?;
            }
            Op::Sigmoid(a) => {
                let da = g.hadamard(&value.map(|y| y * (1.0 - y)))?;
                self.accumulate(grads, *a, da)?;
            }
            Op::Relu(a) => {
                let da = g.hadamard(&self.value(*a).map(|x| if x > 0.0 { 1.0 } else { 0.0 }))?;
                self.accumulate(grads, *a, da)?;
            }
            Op::LayerNorm { x, gain, bias, eps } => {
                let xv = self.value(*x);
                let gv = self.value(*gain);
                let (rows, cols) = xv.shape();
                let d = cols as f64;
                let mut dx = Matrix::zeros(rows, cols);
                let mut dgain = Matrix::zeros(1, cols);
                let mut dbias = Matrix::zeros(1, cols);
                for r in 0..rows {
                    let row = xv.row(r);
                    let mean = row.iter().sum::<f64>() / d;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
                    let inv_std = 1.0 / (var + eps).sqrt();
                    let xhat: Vec<f64> = row.iter().map(|v| (v - mean) * inv_std).collect();
                    let dxhat: Vec<f64> = (0..cols).map(|c| g.get(r, c) * gv.get(0, c)).collect();
                    let mean_dxhat = dxhat.iter().sum::<f64>() / d;
                    let mean_dxhat_xhat =
                        dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / d;
                    for c in 0..cols {
                        dgain.set(0, c, dgain.get(0, c) + g.get(r, c) * xhat[c]);
                        dbias.set(0, c, dbias.get(0, c) + g.get(r, c));
                        dx.set(
                            r,
                            c,
                            inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat),
                        );
                    }
                }
                self.accumulate(grads, *x, dx)?;
                self.accumulate(grads, *gain, dgain)?;
                self.accumulate(grads, *bias, dbias)?;
            }
            Op::Dropout { x, mask } => {
                let da = g.hadamard(mask)?;
                self.accumulate(grads, *x, da)?;
            }
            Op::Transpose(a) => {
                self.accumulate(grads, *a, g.transpose())?;
            }
            Op::RowNormalize(a) => {
                // y_i = x_i / s with s = sum(x): dx_k = (g_k - sum_i g_i y_i) / s
                let x = self.value(*a);
                let y = value;
                let mut da = Matrix::zeros(x.rows(), x.cols());
                for r in 0..x.rows() {
                    let s: f64 = x.row(r).iter().sum();
                    let dot: f64 = (0..x.cols()).map(|c| g.get(r, c) * y.get(r, c)).sum();
                    for c in 0..x.cols() {
                        da.set(r, c, (g.get(r, c) - dot) / s);
                    }
                }
                self.accumulate(grads, *a, da)?;
            }
            Op::Mul(a, b) => {
                let da = g.hadamard(self.value(*b))?;
                let db = g.hadamard(self.value(*a))?;
                self.accumulate(grads, *a, da)?;
                self.accumulate(grads, *b, db)?;
            }
            Op::Sum(a) => {
                let (rows, cols) = self.value(*a).shape();
                let da = Matrix::filled(rows, cols, g.get(0, 0));
                self.accumulate(grads, *a, da)?;
            }
            Op::Mse { pred, target } => {
                let p = self.value(*pred);
                let t = self.value(*target);
                let n = (p.rows() * p.cols()) as f64;
                let scale = g.get(0, 0) * 2.0 / n;
                let dp = p.sub(t)?.scale(scale);
                let dt = dp.scale(-1.0);
                self.accumulate(grads, *pred, dp)?;
                self.accumulate(grads, *target, dt)?;
            }
        }
        Ok(())
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

/// One named trainable matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
}

/// Flat, ordered view of every trainable weight. The ordering is fixed by
/// construction and identical across runs for the same model configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterVector {
    entries: Vec<Param>,
}

impl ParameterVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) -> usize {
        self.entries.push(Param {
            name: name.into(),
            value,
        });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_elements(&self) -> usize {
        self.entries
            .iter()
            .map(|p| p.value.rows() * p.value.cols())
            .sum()
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn value(&self, idx: usize) -> &Matrix {
        &self.entries[idx].value
    }

    pub fn value_mut(&mut self, idx: usize) -> &mut Matrix {
        &mut self.entries[idx].value
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.total_elements());
        for p in &self.entries {
            out.extend_from_slice(p.value.data());
        }
        out
    }

    /// Rebuild a vector with this one's names and shapes from flat data.
    pub fn unflatten(&self, flat: &[f64]) -> Result<ParameterVector> {
        if flat.len() != self.total_elements() {
            return Err(Error::shape(
                "unflatten",
                format!(
                    "{} elements vs {} expected",
                    flat.len(),
                    self.total_elements()
                ),
            ));
        }
        let mut out = ParameterVector::new();
        let mut offset = 0;
        for p in &self.entries {
            let n = p.value.rows() * p.value.cols();
            let m = Matrix::from_vec(
                p.value.rows(),
                p.value.cols(),
                flat[offset..offset + n].to_vec(),
            )?;
            out.push(p.name.clone(), m);
            offset += n;
        }
        Ok(out)
    }

    /// Shapes and names match entry for entry.
    pub fn same_layout(&self, other: &ParameterVector) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape())
    }

    /// `self += alpha * other`, entry by entry.
    pub fn axpy(&mut self, alpha: f64, other: &ParameterVector) -> Result<()> {
        if !self.same_layout(other) {
            return Err(Error::shape("axpy", "parameter layouts differ"));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            let d = dst.value.data_mut();
            for (x, y) in d.iter_mut().zip(src.value.data()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    /// Elementwise difference `self - other`.
    pub fn sub(&self, other: &ParameterVector) -> Result<ParameterVector> {
        if !self.same_layout(other) {
            return Err(Error::shape("sub", "parameter layouts differ"));
        }
        let mut out = self.clone();
        for (dst, src) in out.entries.iter_mut().zip(&other.entries) {
            let d = dst.value.data_mut();
            for (x, y) in d.iter_mut().zip(src.value.data()) {
                *x -= y;
            }
        }
        Ok(out)
    }

    pub fn l2_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|p| p.value.data().iter().map(|v| v * v).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// FNV-1a over the raw bit patterns; used to assert a vector was not touched.
    pub fn bit_fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for p in &self.entries {
            for b in p.name.as_bytes() {
                h = (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3);
            }
            for v in p.value.data() {
                for b in v.to_bits().to_le_bytes() {
                    h = (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        h
    }
}

/// Compare the autodiff gradient of `loss_fn` against central finite
/// differences with step `h`, over every parameter element. Returns the
/// maximum relative error `|g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8)`.
///
/// `loss_fn(params, want_grad)` evaluates the loss at `params` and, when
/// asked, also returns the gradient in parameter layout.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &ParameterVector, h: f64) -> Result<f64>
where
    F: FnMut(&ParameterVector, bool) -> Result<(f64, Option<ParameterVector>)>,
{
    if h <= 0.0 {
        return Err(Error::Input(format!(
            "finite difference step {} must be positive",
            h
        )));
    }
    let (_, grad) = loss_fn(params, true)?;
    let grad = grad.ok_or_else(|| Error::State("loss function returned no gradient".into()))?;
    if !grad.same_layout(params) {
        return Err(Error::shape("finite_diff_check", "gradient layout differs"));
    }

    let mut probe = params.clone();
    let mut max_rel: f64 = 0.0;
    for idx in 0..params.len() {
        let n = params.value(idx).rows() * params.value(idx).cols();
        for k in 0..n {
            let orig = probe.value(idx).data()[k];
            probe.value_mut(idx).data_mut()[k] = orig + h;
            let (f_plus, _) = loss_fn(&probe, false)?;
            probe.value_mut(idx).data_mut()[k] = orig - h;
            let (f_minus, _) = loss_fn(&probe, false)?;
            probe.value_mut(idx).data_mut()[k] = orig;

            let g_fd = (f_plus - f_minus) / (2.0 * h);
            let g_ad = grad.value(idx).data()[k];
            let rel = (g_ad - g_fd).abs() / g_ad.abs().max(g_fd.abs()).max(1e-8);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(max_rel)
}
