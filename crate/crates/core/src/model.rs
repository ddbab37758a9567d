//! The full dual-channel scoring network.
//!
//! A video enters as a T x D matrix of per-frame visual features. The
//! visual channel runs a stack of mixture-of-attention layers directly on
//! those features; the sequential channel first encodes them with a
//! bidirectional LSTM and runs its own (shorter) attention stack on the
//! hidden states. Both channel outputs are concatenated per frame and a
//! two-layer score head with a final sigmoid emits one importance score
//! per frame. Training minimizes mean squared error against annotator
//! scores.

use serde::{Deserialize, Serialize};

use crate::attention::{stacked_forward, xavier, LayerMaps, MoaLayerNodes, StackConfig};
use crate::autodiff::{Gradients, NodeId, ParameterVector, Tape};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, SeededRng};

/// Which channel a feature sequence belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Visual,
    Sequential,
}

/// A T x D per-video feature matrix tagged with its channel.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    channel: Channel,
    data: Matrix,
}

impl FeatureSequence {
    pub fn new(channel: Channel, data: Matrix) -> Result<Self> {
        if data.rows() == 0 {
            return Err(Error::Input(
                "feature sequence needs at least one frame".into(),
            ));
        }
        if let Some(idx) = data.find_non_finite() {
            return Err(Error::Numeric(format!(
                "feature sequence has non-finite entry at flat index {}",
                idx
            )));
        }
        Ok(FeatureSequence { channel, data })
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn frames(&self) -> usize {
        self.data.rows()
    }

    pub fn dim(&self) -> usize {
        self.data.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.data
    }
}

/// Per-frame scores in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceScores(Vec<f64>);

impl ImportanceScores {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Input("importance scores cannot be empty".into()));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::Input(format!(
                "importance score {} outside [0, 1]",
                v
            )));
        }
        Ok(ImportanceScores(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Which channels feed the score head.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelMode {
    Dual,
    Visual,
    Sequential,
}

impl ChannelMode {
    pub fn label(self) -> &'static str {
        match self {
            ChannelMode::Dual => "dual",
            ChannelMode::Visual => "visual",
            ChannelMode::Sequential => "sequential",
        }
    }
}

/// Model hyper-parameters. `full_scale` mirrors the reference experimental
/// setup; `desk_scale` keeps finite-difference checks fast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub attn_width: usize,
    pub visual_layers: usize,
    pub sequential_layers: usize,
    pub lstm_layers: usize,
    pub lstm_hidden: usize,
    pub head_hidden: usize,
    pub dropout: f64,
    pub channel: ChannelMode,
    pub plain_softmax: bool,
    pub renormalize_rows: bool,
    pub ln_eps: f64,
}

impl ModelConfig {
    pub fn desk_scale() -> Self {
        ModelConfig {
            feature_dim: 64,
            attn_width: 32,
            visual_layers: 4,
            sequential_layers: 2,
            lstm_layers: 2,
            lstm_hidden: 32,
            head_hidden: 64,
            dropout: 0.0,
            channel: ChannelMode::Dual,
            plain_softmax: false,
            renormalize_rows: false,
            ln_eps: 1e-5,
        }
    }

    pub fn full_scale() -> Self {
        ModelConfig {
            feature_dim: 1024,
            attn_width: 1024,
            visual_layers: 4,
            sequential_layers: 2,
            lstm_layers: 2,
            lstm_hidden: 512,
            head_hidden: 1024,
            dropout: 0.0,
            channel: ChannelMode::Dual,
            plain_softmax: false,
            renormalize_rows: false,
            ln_eps: 1e-5,
        }
    }

    fn has_visual_stack(&self) -> bool {
        matches!(self.channel, ChannelMode::Dual | ChannelMode::Visual)
    }

    fn has_sequential_branch(&self) -> bool {
        matches!(self.channel, ChannelMode::Dual | ChannelMode::Sequential)
    }

    /// Width of the per-frame vector entering the score head.
    pub fn head_input_width(&self) -> usize {
        match self.channel {
            ChannelMode::Dual => self.feature_dim + 2 * self.lstm_hidden,
            ChannelMode::Visual => self.feature_dim,
            ChannelMode::Sequential => 2 * self.lstm_hidden,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feature_dim", self.feature_dim),
            ("attn_width", self.attn_width),
            ("lstm_layers", self.lstm_layers),
            ("lstm_hidden", self.lstm_hidden),
            ("head_hidden", self.head_hidden),
        ] {
            if v == 0 {
                return Err(Error::Input(format!(
                    "model config: {} must be positive",
                    name
                )));
            }
        }
        if self.has_visual_stack() && self.visual_layers == 0 {
            return Err(Error::Input(
                "model config: visual_layers must be >= 1".into(),
            ));
        }
        if self.has_sequential_branch() && self.sequential_layers == 0 {
            return Err(Error::Input(
                "model config: sequential_layers must be >= 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Input(format!(
                "model config: dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
enum ParamKind {
    Weight,
    Bias,
    Gain,
}

#[derive(Debug, Clone)]
struct ParamSpec {
    name: String,
    rows: usize,
    cols: usize,
    kind: ParamKind,
}

#[derive(Debug, Clone, Copy)]
struct AttnIdx {
    w_q: usize,
    w_k: usize,
    w_v: usize,
    w_qhat: usize,
    w_out: usize,
    ln_gain: usize,
    ln_bias: usize,
}

/// Gate order: input, forget, cell candidate, output.
#[derive(Debug, Clone, Copy)]
struct LstmDirIdx {
    w: [usize; 4],
    u: [usize; 4],
    b: [usize; 4],
}

#[derive(Debug, Clone, Copy)]
struct HeadIdx {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Maps collected from both channels during one forward pass.
#[derive(Debug, Clone, Default)]
pub struct ChannelMapsSet {
    pub visual: Vec<LayerMaps>,
    pub sequential: Vec<LayerMaps>,
}

/// The network structure: configuration plus the fixed parameter layout.
/// Parameter values travel separately as a [`ParameterVector`], so training
/// loops can clone and update them without touching the model.
#[derive(Debug, Clone)]
pub struct DmaSumModel {
    config: ModelConfig,
    specs: Vec<ParamSpec>,
    visual: Vec<AttnIdx>,
    lstm: Vec<(LstmDirIdx, LstmDirIdx)>,
    sequential: Vec<AttnIdx>,
    head: HeadIdx,
}

impl DmaSumModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut specs: Vec<ParamSpec> = Vec::new();
        let mut push = |specs: &mut Vec<ParamSpec>, name: String, rows, cols, kind| -> usize {
            specs.push(ParamSpec {
                name,
                rows,
                cols,
                kind,
            });
            specs.len() - 1
        };

        let mut visual = Vec::new();
        if config.has_visual_stack() {
            for i in 0..config.visual_layers {
                visual.push(Self::attn_specs(
                    &mut push,
                    &mut specs,
                    &format!("visual.{i}"),
                    config.feature_dim,
                    config.attn_width,
                ));
            }
        }

        let mut lstm = Vec::new();
        let mut sequential = Vec::new();
        if config.has_sequential_branch() {
            for layer in 0..config.lstm_layers {
                let input_dim = if layer == 0 {
                    config.feature_dim
                } else {
                    2 * config.lstm_hidden
                };
                let fwd = Self::lstm_specs(
                    &mut push,
                    &mut specs,
                    &format!("lstm.{layer}.fwd"),
                    input_dim,
                    config.lstm_hidden,
                );
                let bwd = Self::lstm_specs(
                    &mut push,
                    &mut specs,
                    &format!("lstm.{layer}.bwd"),
                    input_dim,
                    config.lstm_hidden,
                );
                lstm.push((fwd, bwd));
            }
            for i in 0..config.sequential_layers {
                sequential.push(Self::attn_specs(
                    &mut push,
                    &mut specs,
                    &format!("seq.{i}"),
                    2 * config.lstm_hidden,
                    config.attn_width,
                ));
            }
        }

        let head_in = config.head_input_width();
        let head = HeadIdx {
            w1: push(
                &mut specs,
                "head.w1".into(),
                config.head_hidden,
                head_in,
                ParamKind::Weight,
            ),
            b1: push(
                &mut specs,
                "head.b1".into(),
                1,
                config.head_hidden,
                ParamKind::Bias,
            ),
            w2: push(
                &mut specs,
                "head.w2".into(),
                1,
                config.head_hidden,
                ParamKind::Weight,
            ),
            b2: push(&mut specs, "head.b2".into(), 1, 1, ParamKind::Bias),
        };

        Ok(DmaSumModel {
            config,
            specs,
            visual,
            lstm,
            sequential,
            head,
        })
    }

    fn attn_specs(
        push: &mut impl FnMut(&mut Vec<ParamSpec>, String, usize, usize, ParamKind) -> usize,
        specs: &mut Vec<ParamSpec>,
        prefix: &str,
        d_model: usize,
        d_attn: usize,
    ) -> AttnIdx {
        AttnIdx {
            w_q: push(
                specs,
                format!("{prefix}.w_q"),
                d_attn,
                d_model,
                ParamKind::Weight,
            ),
            w_k: push(
                specs,
                format!("{prefix}.w_k"),
                d_attn,
                d_model,
                ParamKind::Weight,
            ),
            w_v: push(
                specs,
                format!("{prefix}.w_v"),
                d_attn,
                d_model,
                ParamKind::Weight,
            ),
            w_qhat: push(
                specs,
                format!("{prefix}.w_qhat"),
                d_attn,
                d_attn,
                ParamKind::Weight,
            ),
            w_out: push(
                specs,
                format!("{prefix}.w_out"),
                d_model,
                d_attn,
                ParamKind::Weight,
            ),
            ln_gain: push(
                specs,
                format!("{prefix}.ln_gain"),
                1,
                d_model,
                ParamKind::Gain,
            ),
            ln_bias: push(
                specs,
                format!("{prefix}.ln_bias"),
                1,
                d_model,
                ParamKind::Bias,
            ),
        }
    }

    fn lstm_specs(
        push: &mut impl FnMut(&mut Vec<ParamSpec>, String, usize, usize, ParamKind) -> usize,
        specs: &mut Vec<ParamSpec>,
        prefix: &str,
        input_dim: usize,
        hidden: usize,
    ) -> LstmDirIdx {
        const GATES: [&str; 4] = ["i", "f", "g", "o"];
        let mut w = [0; 4];
        let mut u = [0; 4];
        let mut b = [0; 4];
        for (gi, gate) in GATES.iter().enumerate() {
            w[gi] = push(
                specs,
                format!("{prefix}.w_{gate}"),
                hidden,
                input_dim,
                ParamKind::Weight,
            );
        }
        for (gi, gate) in GATES.iter().enumerate() {
            u[gi] = push(
                specs,
                format!("{prefix}.u_{gate}"),
                hidden,
                hidden,
                ParamKind::Weight,
            );
        }
        for (gi, gate) in GATES.iter().enumerate() {
            b[gi] = push(
                specs,
                format!("{prefix}.b_{gate}"),
                1,
                hidden,
                ParamKind::Bias,
            );
        }
        LstmDirIdx { w, u, b }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Fresh parameters: Xavier-uniform weights, zero biases, unit gains.
    /// The entry order is fixed by the configuration.
    pub fn init_params(&self, rng: &mut SeededRng) -> ParameterVector {
        let mut params = ParameterVector::new();
        for spec in &self.specs {
            let value = match spec.kind {
                ParamKind::Weight => xavier(spec.rows, spec.cols, rng),
                ParamKind::Bias => Matrix::zeros(spec.rows, spec.cols),
                ParamKind::Gain => Matrix::filled(spec.rows, spec.cols, 1.0),
            };
            params.push(spec.name.clone(), value);
        }
        params
    }

    pub fn validate_params(&self, params: &ParameterVector) -> Result<()> {
        if params.len() != self.specs.len() {
            return Err(Error::shape(
                "validate_params",
                format!("{} entries vs {} expected", params.len(), self.specs.len()),
            ));
        }
        for (spec, entry) in self.specs.iter().zip(params.entries()) {
            if spec.name != entry.name || entry.value.shape() != (spec.rows, spec.cols) {
                return Err(Error::shape(
                    "validate_params",
                    format!(
                        "entry '{}' {:?} vs expected '{}' ({}, {})",
                        entry.name,
                        entry.value.shape(),
                        spec.name,
                        spec.rows,
                        spec.cols
                    ),
                ));
            }
        }
        Ok(())
    }

    fn bind_params(&self, tape: &mut Tape, params: &ParameterVector) -> Vec<NodeId> {
        params
            .entries()
            .iter()
            .map(|p| tape.leaf(p.value.clone()))
            .collect()
    }

    fn attn_nodes(idx: &AttnIdx, bound: &[NodeId]) -> MoaLayerNodes {
        MoaLayerNodes {
            w_q: bound[idx.w_q],
            w_k: bound[idx.w_k],
            w_v: bound[idx.w_v],
            w_qhat: bound[idx.w_qhat],
            w_out: bound[idx.w_out],
            ln_gain: bound[idx.ln_gain],
            ln_bias: bound[idx.ln_bias],
        }
    }

    fn check_input(&self, features: &FeatureSequence) -> Result<()> {
        if features.channel() != Channel::Visual {
            return Err(Error::Input(
                "model input must be visual-channel features".into(),
            ));
        }
        if features.dim() != self.config.feature_dim {
            return Err(Error::shape(
                "dual_forward",
                format!(
                    "feature dim {} vs configured {}",
                    features.dim(),
                    self.config.feature_dim
                ),
            ));
        }
        Ok(())
    }

    /// Forward pass on an existing tape. Returns the bound parameter nodes,
    /// the T x 1 score node, and optionally the per-layer attention maps.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        params: &ParameterVector,
        features: &FeatureSequence,
        dropout: f64,
        rng: &mut SeededRng,
        collect_maps: bool,
    ) -> Result<(Vec<NodeId>, NodeId, Option<ChannelMapsSet>)> {
        self.check_input(features)?;
        self.validate_params(params)?;

        let bound = self.bind_params(tape, params);
        let input = tape.leaf(features.matrix().clone());
        let stack_cfg = StackConfig {
            dropout,
            ln_eps: self.config.ln_eps,
            plain_softmax: self.config.plain_softmax,
            renormalize_rows: self.config.renormalize_rows,
        };
        let mut maps = collect_maps.then(ChannelMapsSet::default);

        let mut channel_outputs: Vec<NodeId> = Vec::new();
        if self.config.has_visual_stack() {
            let layers: Vec<MoaLayerNodes> = self
                .visual
                .iter()
                .map(|i| Self::attn_nodes(i, &bound))
                .collect();
            let z_v = stacked_forward(
                tape,
                input,
                &layers,
                &stack_cfg,
                rng,
                maps.as_mut().map(|m| &mut m.visual),
            )?;
            channel_outputs.push(z_v);
        }
        if self.config.has_sequential_branch() {
            let encoded = self.bilstm_on_tape(tape, input, &bound)?;
            let layers: Vec<MoaLayerNodes> = self
                .sequential
                .iter()
                .map(|i| Self::attn_nodes(i, &bound))
                .collect();
            let z_s = stacked_forward(
                tape,
                encoded,
                &layers,
                &stack_cfg,
                rng,
                maps.as_mut().map(|m| &mut m.sequential),
            )?;
            channel_outputs.push(z_s);
        }

        let joined = match channel_outputs.len() {
            1 => channel_outputs[0],
            2 => tape.concat_cols(channel_outputs[0], channel_outputs[1])?,
            _ => unreachable!("config validation guarantees at least one channel"),
        };

        // Score head: affine -> relu -> affine -> sigmoid.
        let w1t = tape.transpose(bound[self.head.w1]);
        let h = tape.matmul(joined, w1t)?;
        let h = tape.add_row_vec(h, bound[self.head.b1])?;
        let h = tape.relu(h);
        let w2t = tape.transpose(bound[self.head.w2]);
        let out = tape.matmul(h, w2t)?;
        let out = tape.add_row_vec(out, bound[self.head.b2])?;
        let scores = tape.sigmoid(out);

        Ok((bound, scores, maps))
    }

    fn bilstm_on_tape(&self, tape: &mut Tape, input: NodeId, bound: &[NodeId]) -> Result<NodeId> {
        let mut layer_input = input;
        for (fwd, bwd) in &self.lstm {
            let fwd_nodes = lstm_dir_nodes(fwd, bound);
            let bwd_nodes = lstm_dir_nodes(bwd, bound);
            let f = lstm_direction(
                tape,
                layer_input,
                &fwd_nodes,
                self.config.lstm_hidden,
                false,
            )?;
            let b = lstm_direction(tape, layer_input, &bwd_nodes, self.config.lstm_hidden, true)?;
            layer_input = tape.concat_cols(f, b)?;
        }
        Ok(layer_input)
    }

    /// Importance scores for one video with dropout disabled. Also returns
    /// the per-layer attention maps when asked.
    pub fn predict(
        &self,
        params: &ParameterVector,
        features: &FeatureSequence,
        collect_maps: bool,
    ) -> Result<(ImportanceScores, Option<ChannelMapsSet>)> {
        let mut tape = Tape::new();
        let mut rng = SeededRng::new(0);
        let (_, scores, maps) =
            self.forward_on_tape(&mut tape, params, features, 0.0, &mut rng, collect_maps)?;
        let values: Vec<f64> = tape.value(scores).data().to_vec();
        Ok((ImportanceScores::new(values)?, maps))
    }

    /// MSE loss for one video, and its gradient in parameter layout when
    /// `want_grad` is set. Dropout uses the caller's RNG stream.
    pub fn loss_and_grad(
        &self,
        params: &ParameterVector,
        features: &FeatureSequence,
        target: &ImportanceScores,
        rng: &mut SeededRng,
        want_grad: bool,
    ) -> Result<(f64, Option<ParameterVector>)> {
        if target.len() != features.frames() {
            return Err(Error::shape(
                "loss_and_grad",
                format!("{} targets vs {} frames", target.len(), features.frames()),
            ));
        }
        let mut tape = Tape::new();
        let (bound, scores, _) =
            self.forward_on_tape(&mut tape, params, features, self.config.dropout, rng, false)?;
        let target_node = tape.leaf(Matrix::col_vector(target.values().to_vec()));
        let loss = tape.mse(scores, target_node)?;
        let value = tape.value(loss).get(0, 0);
        if !value.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss {}", value)));
        }
        if !want_grad {
            return Ok((value, None));
        }
        let grads = tape.backward(loss)?;
        Ok((value, Some(self.collect_grads(&grads, params, &bound))))
    }

    fn collect_grads(
        &self,
        grads: &Gradients,
        params: &ParameterVector,
        bound: &[NodeId],
    ) -> ParameterVector {
        let mut gv = ParameterVector::new();
        for (entry, &node) in params.entries().iter().zip(bound) {
            let (r, c) = entry.value.shape();
            gv.push(entry.name.clone(), grads.get_or_zeros(node, r, c));
        }
        gv
    }
}

/// MSE between a prediction node and a target node: `(1/T) * sum((s - s_hat)^2)`.
pub fn mse_loss(tape: &mut Tape, pred: NodeId, target: NodeId) -> Result<NodeId> {
    tape.mse(pred, target)
}

/// Plain-value MSE used by evaluation code.
pub fn mse_value(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::shape(
            "mse_value",
            format!("{} vs {}", pred.len(), target.len()),
        ));
    }
    let n = pred.len() as f64;
    Ok(pred
        .iter()
        .zip(target)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

// ---------------------------------------------------------------------------
// Bidirectional LSTM
// ---------------------------------------------------------------------------

/// One direction's gate parameters. Gate order: input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct LstmDirParams {
    pub w: [Matrix; 4],
    pub u: [Matrix; 4],
    pub b: [Matrix; 4],
}

impl LstmDirParams {
    pub fn init(input_dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        LstmDirParams {
            w: std::array::from_fn(|_| xavier(hidden, input_dim, rng)),
            u: std::array::from_fn(|_| xavier(hidden, hidden, rng)),
            b: std::array::from_fn(|_| Matrix::zeros(1, hidden)),
        }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        LstmDirParams {
            w: std::array::from_fn(|_| Matrix::zeros(hidden, input_dim)),
            u: std::array::from_fn(|_| Matrix::zeros(hidden, hidden)),
            b: std::array::from_fn(|_| Matrix::zeros(1, hidden)),
        }
    }
}

/// Stacked bidirectional LSTM parameters: per layer, forward then backward
/// direction. Layer 0 consumes the raw features; deeper layers consume the
/// 2 x hidden concatenation from below.
#[derive(Debug, Clone)]
pub struct BiLstmParams {
    pub hidden: usize,
    pub layers: Vec<(LstmDirParams, LstmDirParams)>,
}

impl BiLstmParams {
    pub fn init(input_dim: usize, hidden: usize, layers: usize, rng: &mut SeededRng) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { 2 * hidden };
                (
                    LstmDirParams::init(in_dim, hidden, rng),
                    LstmDirParams::init(in_dim, hidden, rng),
                )
            })
            .collect();
        BiLstmParams { hidden, layers }
    }

    pub fn zeros(input_dim: usize, hidden: usize, layers: usize) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { 2 * hidden };
                (
                    LstmDirParams::zeros(in_dim, hidden),
                    LstmDirParams::zeros(in_dim, hidden),
                )
            })
            .collect();
        BiLstmParams { hidden, layers }
    }
}

#[derive(Debug, Clone, Copy)]
struct LstmDirNodes {
    w: [NodeId; 4],
    u: [NodeId; 4],
    b: [NodeId; 4],
}

fn lstm_dir_nodes(idx: &LstmDirIdx, bound: &[NodeId]) -> LstmDirNodes {
    LstmDirNodes {
        w: idx.w.map(|i| bound[i]),
        u: idx.u.map(|i| bound[i]),
        b: idx.b.map(|i| bound[i]),
    }
}

/// One LSTM direction over the frames of `input` (T x D node). Returns the
/// T x hidden matrix of hidden states in frame order.
fn lstm_direction(
    tape: &mut Tape,
    input: NodeId,
    nodes: &LstmDirNodes,
    hidden: usize,
    reverse: bool,
) -> Result<NodeId> {
    let frames = tape.value(input).rows();
    // Transpose the gate weights once so each step is a plain matmul.
    let wt: Vec<NodeId> = nodes.w.iter().map(|&w| tape.transpose(w)).collect();
    let ut: Vec<NodeId> = nodes.u.iter().map(|&u| tape.transpose(u)).collect();

    let mut h = tape.leaf(Matrix::zeros(1, hidden));
    let mut c = tape.leaf(Matrix::zeros(1, hidden));
    let mut states: Vec<NodeId> = vec![h; frames];

    let order: Vec<usize> = if reverse {
        (0..frames).rev().collect()
    } else {
        (0..frames).collect()
    };
    for t in order {
        let x_t = tape.slice_rows(input, t, t + 1)?;
        let mut gates = [h; 4];
        for g in 0..4 {
            let xw = tape.matmul(x_t, wt[g])?;
            let hu = tape.matmul(h, ut[g])?;
            let z = tape.add(xw, hu)?;
            gates[g] = tape.add(z, nodes.b[g])?;
        }
        let i_gate = tape.sigmoid(gates[0]);
        let f_gate = tape.sigmoid(gates[1]);
        let g_cand = tape.tanh(gates[2]);
        let o_gate = tape.sigmoid(gates[3]);
        let keep = tape.mul(f_gate, c)?;
        let write = tape.mul(i_gate, g_cand)?;
        c = tape.add(keep, write)?;
        let c_act = tape.tanh(c);
        h = tape.mul(o_gate, c_act)?;
        states[t] = h;
    }
    tape.concat_rows(&states)
}

/// Encode visual features with a bidirectional LSTM on the given tape.
/// Returns the output node (T x 2*hidden) and the same values as a
/// sequential-channel [`FeatureSequence`].
pub fn sequential_encode(
    tape: &mut Tape,
    features: &FeatureSequence,
    params: &BiLstmParams,
) -> Result<(NodeId, FeatureSequence)> {
    if features.channel() != Channel::Visual {
        return Err(Error::Input(
            "sequential_encode expects visual-channel input".into(),
        ));
    }
    let mut layer_input = tape.leaf(features.matrix().clone());
    for (fwd, bwd) in &params.layers {
        let fwd_nodes = bind_dir(tape, fwd);
        let bwd_nodes = bind_dir(tape, bwd);
        let f = lstm_direction(tape, layer_input, &fwd_nodes, params.hidden, false)?;
        let b = lstm_direction(tape, layer_input, &bwd_nodes, params.hidden, true)?;
        layer_input = tape.concat_cols(f, b)?;
    }
    let out = FeatureSequence::new(Channel::Sequential, tape.value(layer_input).clone())?;
    Ok((layer_input, out))
}

fn bind_dir(tape: &mut Tape, params: &LstmDirParams) -> LstmDirNodes {
    LstmDirNodes {
        w: std::array::from_fn(|g| tape.leaf(params.w[g].clone())),
        u: std::array::from_fn(|g| tape.leaf(params.u[g].clone())),
        b: std::array::from_fn(|g| tape.leaf(params.b[g].clone())),
    }
}
