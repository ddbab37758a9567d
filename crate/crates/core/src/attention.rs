//! Mixture-of-attention layers and the attention-map rank diagnostics.
//!
//! A single softmax attention map has limited expressiveness: its
//! elementwise log is the scaled score matrix minus one per-row constant,
//! so `rank(log A) <= rank(K^T Q) + 1`. The mixture layer queries twice —
//! the usual scores against a tanh-transformed associated query — and
//! multiplies the two resulting maps, `A_moa = A * A_hat^T`, whose log is
//! no longer rank-bounded. The diagnostics below measure exactly that
//! effect on real maps: `diff = T - rank(map)` bucketed per video.

use std::io::Write as _;
use std::path::Path;

use crate::autodiff::{NodeId, Tape};
use crate::error::{Error, Result};
use crate::tensor::{numerical_rank, row_softmax, Matrix, SeededRng};

/// Projection weights for one attention layer. `w_q`, `w_k`, `w_v` map
/// D-dimensional features to the attention width; `w_qhat` re-maps the
/// query inside the attention space, so it is square.
#[derive(Debug, Clone)]
pub struct AttentionParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_qhat: Matrix,
}

impl AttentionParams {
    /// Uniform Xavier initialization in +-sqrt(6 / (fan_in + fan_out)).
    pub fn init(d_model: usize, d_attn: usize, rng: &mut SeededRng) -> Self {
        AttentionParams {
            w_q: xavier(d_attn, d_model, rng),
            w_k: xavier(d_attn, d_model, rng),
            w_v: xavier(d_attn, d_model, rng),
            w_qhat: xavier(d_attn, d_attn, rng),
        }
    }

    pub fn attn_width(&self) -> usize {
        self.w_q.rows()
    }
}

/// Xavier-uniform matrix: rows = fan_out, cols = fan_in.
pub fn xavier(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Matrix::random_uniform(rows, cols, -limit, limit, rng)
}

/// The three maps produced by one mixture-of-attention layer.
#[derive(Debug, Clone)]
pub struct AttentionMaps {
    pub a: Matrix,
    pub a_hat: Matrix,
    pub a_moa: Matrix,
}

impl AttentionMaps {
    /// Bundle the maps, checking the structural invariants: rows of `a` and
    /// `a_hat` sum to 1 within 1e-9, and every `a_moa` entry lies in (0, 1].
    pub fn new(a: Matrix, a_hat: Matrix, a_moa: Matrix) -> Result<Self> {
        for (name, m) in [("a", &a), ("a_hat", &a_hat)] {
            for r in 0..m.rows() {
                let sum: f64 = m.row(r).iter().sum();
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::Numeric(format!(
                        "row {} of {} sums to {}, expected 1",
                        r, name, sum
                    )));
                }
            }
        }
        if a_moa.data().iter().any(|&v| v <= 0.0 || v > 1.0 + 1e-12) {
            return Err(Error::Numeric("a_moa entry outside (0, 1]".into()));
        }
        Ok(AttentionMaps { a, a_hat, a_moa })
    }
}

/// Maps collected from one layer of a stack forward pass.
#[derive(Debug, Clone)]
pub enum LayerMaps {
    Mixture(AttentionMaps),
    /// Plain-softmax ablation: only the standard map exists.
    Plain {
        a: Matrix,
    },
}

impl LayerMaps {
    /// The map that feeds the value pathway (`a_moa`, or `a` in the ablation).
    pub fn chosen(&self) -> &Matrix {
        match self {
            LayerMaps::Mixture(m) => &m.a_moa,
            LayerMaps::Plain { a } => a,
        }
    }

    pub fn standard(&self) -> &Matrix {
        match self {
            LayerMaps::Mixture(m) => &m.a,
            LayerMaps::Plain { a } => a,
        }
    }
}

/// Project T x D features into query/key/value matrices stored D_a x T.
pub fn project_qkv(h: &Matrix, p: &AttentionParams) -> Result<(Matrix, Matrix, Matrix)> {
    let ht = h.transpose();
    let q = p.w_q.matmul(&ht)?;
    let k = p.w_k.matmul(&ht)?;
    let v = p.w_v.matmul(&ht)?;
    Ok((q, k, v))
}

/// Scaled dot-product attention: `row_softmax(K^T Q / sqrt(D_a))`.
pub fn scaled_attention(k: &Matrix, q: &Matrix) -> Result<Matrix> {
    if k.shape() != q.shape() {
        return Err(Error::shape(
            "scaled_attention",
            format!("K {:?} vs Q {:?}", k.shape(), q.shape()),
        ));
    }
    let scale = 1.0 / (k.rows() as f64).sqrt();
    let logits = k.transpose().matmul(q)?.scale(scale);
    Ok(row_softmax(&logits))
}

/// Associated attention: the query is re-queried through `tanh(W_qhat Q)`
/// before the same scaled softmax against the keys.
pub fn associated_attention(k: &Matrix, q: &Matrix, w_qhat: &Matrix) -> Result<Matrix> {
    let qhat = w_qhat.matmul(q)?.map(f64::tanh);
    scaled_attention(k, &qhat)
}

/// Mixture of the two maps, `A_moa = A * A_hat^T`, and the attended values
/// `Z = V * A_moa`. `A_moa` is deliberately not re-normalized; its rows need
/// not sum to 1.
pub fn mixture_attention(a: &Matrix, a_hat: &Matrix, v: &Matrix) -> Result<(Matrix, Matrix)> {
    let a_moa = a.matmul(&a_hat.transpose())?;
    let z = v.matmul(&a_moa)?;
    Ok((a_moa, z))
}

/// Which matrix the rank is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Raw,
    /// Elementwise natural log; requires strictly positive entries.
    Log,
}

impl RankMode {
    pub fn label(self) -> &'static str {
        match self {
            RankMode::Raw => "raw",
            RankMode::Log => "log",
        }
    }
}

/// Histogram bucket for the rank difference `D = T - rank`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RankBucket {
    D0To3,
    D4To7,
    D8To11,
    DAbove11,
}

impl RankBucket {
    pub fn from_diff(diff: usize) -> Self {
        match diff {
            0..=3 => RankBucket::D0To3,
            4..=7 => RankBucket::D4To7,
            8..=11 => RankBucket::D8To11,
            _ => RankBucket::DAbove11,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RankBucket::D0To3 => "0-3",
            RankBucket::D4To7 => "4-7",
            RankBucket::D8To11 => "8-11",
            RankBucket::DAbove11 => ">11",
        }
    }

    pub const ALL: [RankBucket; 4] = [
        RankBucket::D0To3,
        RankBucket::D4To7,
        RankBucket::D8To11,
        RankBucket::DAbove11,
    ];
}

/// Rank statistics of one attention map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankDiagnostic {
    pub frames: usize,
    pub rank: usize,
    pub diff: usize,
    pub rel_tol: f64,
    pub bucket: RankBucket,
}

/// Numerical rank of a T x T attention map (or of its elementwise log) and
/// the derived difference `D = T - rank`.
pub fn rank_diagnose(map: &Matrix, mode: RankMode, rel_tol: f64) -> Result<RankDiagnostic> {
    if map.rows() != map.cols() {
        return Err(Error::shape(
            "rank_diagnose",
            format!("attention map must be square, got {:?}", map.shape()),
        ));
    }
    let target = match mode {
        RankMode::Raw => map.clone(),
        RankMode::Log => {
            if let Some(idx) = map.data().iter().position(|&v| v <= 0.0) {
                return Err(Error::Domain(format!(
                    "log-mode rank needs positive entries; entry {} is {}",
                    idx,
                    map.data()[idx]
                )));
            }
            map.map(f64::ln)
        }
    };
    let rank = numerical_rank(&target, rel_tol)?;
    let frames = map.rows();
    let diff = frames.saturating_sub(rank);
    Ok(RankDiagnostic {
        frames,
        rank,
        diff,
        rel_tol,
        bucket: RankBucket::from_diff(diff),
    })
}

/// One row of the batch rank CSV.
#[derive(Debug, Clone)]
pub struct RankCsvRow {
    pub video_id: String,
    pub diag: RankDiagnostic,
}

/// Write batch rank diagnostics as CSV with header `video_id,T,rank,diff,bucket`.
pub fn write_rank_csv(path: &Path, rows: &[RankCsvRow]) -> Result<()> {
    let mut out = String::from("video_id,T,rank,diff,bucket\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.video_id,
            row.diag.frames,
            row.diag.rank,
            row.diag.diff,
            row.diag.bucket.label()
        ));
    }
    let mut file =
        std::fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Node handles for one layer's parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct MoaLayerNodes {
    pub w_q: NodeId,
    pub w_k: NodeId,
    pub w_v: NodeId,
    pub w_qhat: NodeId,
    /// Output projection (D_model x D_a) restoring the residual width.
    pub w_out: NodeId,
    pub ln_gain: NodeId,
    pub ln_bias: NodeId,
}

/// Behavior switches shared by every layer in a stack.
#[derive(Debug, Clone, Copy)]
pub struct StackConfig {
    pub dropout: f64,
    pub ln_eps: f64,
    /// Ablation: use the standard map A instead of the mixture A_moa.
    pub plain_softmax: bool,
    /// Restore row-stochasticity of A_moa (off by default).
    pub renormalize_rows: bool,
}

impl Default for StackConfig {
    fn default() -> Self {
        StackConfig {
            dropout: 0.0,
            ln_eps: 1e-5,
            plain_softmax: false,
            renormalize_rows: false,
        }
    }
}

/// One mixture-of-attention layer on the tape:
/// `out = layer_norm(dropout(attention(input)) + input)`.
pub fn moa_layer_forward(
    tape: &mut Tape,
    input: NodeId,
    layer: &MoaLayerNodes,
    cfg: &StackConfig,
    rng: &mut SeededRng,
    maps_out: Option<&mut Vec<LayerMaps>>,
) -> Result<NodeId> {
    let d_attn = tape.value(layer.w_q).rows();
    let scale = 1.0 / (d_attn as f64).sqrt();

    let ht = tape.transpose(input);
    let q = tape.matmul(layer.w_q, ht)?;
    let k = tape.matmul(layer.w_k, ht)?;
    let v = tape.matmul(layer.w_v, ht)?;

    let kt = tape.transpose(k);
    let logits = tape.matmul(kt, q)?;
    let logits = tape.scale(logits, scale);
    let a = tape.row_softmax(logits);

    let (map_node, collected) = if cfg.plain_softmax {
        (
            a,
            LayerMaps::Plain {
                a: tape.value(a).clone(),
            },
        )
    } else {
        let qh_lin = tape.matmul(layer.w_qhat, q)?;
        let qhat = tape.tanh(qh_lin);
        let logits_hat = tape.matmul(kt, qhat)?;
        let logits_hat = tape.scale(logits_hat, scale);
        let a_hat = tape.row_softmax(logits_hat);
        let a_hat_t = tape.transpose(a_hat);
        let a_moa = tape.matmul(a, a_hat_t)?;
        let map_node = if cfg.renormalize_rows {
            tape.row_normalize(a_moa)?
        } else {
            a_moa
        };
        let collected = LayerMaps::Mixture(AttentionMaps {
            a: tape.value(a).clone(),
            a_hat: tape.value(a_hat).clone(),
            a_moa: tape.value(a_moa).clone(),
        });
        (map_node, collected)
    };
    if let Some(maps) = maps_out {
        maps.push(collected);
    }

    let z = tape.matmul(v, map_node)?;
    let zt = tape.transpose(z);
    let w_out_t = tape.transpose(layer.w_out);
    let projected = tape.matmul(zt, w_out_t)?;
    let dropped = tape.dropout(projected, cfg.dropout, rng)?;
    let residual = tape.add(dropped, input)?;
    tape.layer_norm(residual, layer.ln_gain, layer.ln_bias, cfg.ln_eps)
}

/// `n` stacked layers; every layer maps T x D_model to T x D_model.
pub fn stacked_forward(
    tape: &mut Tape,
    z0: NodeId,
    layers: &[MoaLayerNodes],
    cfg: &StackConfig,
    rng: &mut SeededRng,
    mut maps_out: Option<&mut Vec<LayerMaps>>,
) -> Result<NodeId> {
    let mut z = z0;
    for layer in layers {
        z = moa_layer_forward(tape, z, layer, cfg, rng, maps_out.as_deref_mut())?;
    }
    Ok(z)
}
