//! Causal learning module: single-head self-attention over attribute field
//! tokens, the total-effect embedding `e_t = ẽ_m − ẽ_m*`, and the two-layer
//! projection into the recommender's embedding space.
//!
//! Shapes: tokens are `F × d_enc`; `W_q, W_k, W_v` are `d_enc × d_enc` and act
//! on each token as `W x`; `W_1` is `d_enc × h`, `W_2` is `h × d`, and the
//! projection is `ReLU(x W_1 + b_1) W_2 + b_2` on row vectors.

use alloc::string::ToString;
use alloc::vec::Vec;

use crate::numerics::{axpy, softmax_rows, sub, xavier_init_with, seeded_rng, Matrix, Param};
use crate::{Error, Result};

/// How per-token attention outputs are reduced to one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Pooling {
    #[default]
    Mean,
    First,
}

/// Learnable parameters of the causal module. Gradients use the same layout.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalParams {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
    pub w_1: Matrix,
    pub b_1: Matrix,
    pub w_2: Matrix,
    pub b_2: Matrix,
    pub pooling: Pooling,
}

pub const PARAM_NAMES: [&str; 7] = ["w_q", "w_k", "w_v", "w_1", "b_1", "w_2", "b_2"];

impl CausalParams {
    /// Xavier-initialized weights, zero biases.
    pub fn init(d_enc: usize, hidden: usize, out_dim: usize, seed: u64) -> Result<Self> {
        let mut rng = seeded_rng(seed, 0x6361_7573);
        Ok(Self {
            w_q: xavier_init_with(d_enc, d_enc, &mut rng)?,
            w_k: xavier_init_with(d_enc, d_enc, &mut rng)?,
            w_v: xavier_init_with(d_enc, d_enc, &mut rng)?,
            w_1: xavier_init_with(d_enc, hidden, &mut rng)?,
            b_1: Matrix::zeros(1, hidden),
            w_2: xavier_init_with(hidden, out_dim, &mut rng)?,
            b_2: Matrix::zeros(1, out_dim),
            pooling: Pooling::Mean,
        })
    }

    pub fn zeros_like(&self) -> Self {
        let z = |m: &Matrix| Matrix::zeros(m.rows(), m.cols());
        Self {
            w_q: z(&self.w_q),
            w_k: z(&self.w_k),
            w_v: z(&self.w_v),
            w_1: z(&self.w_1),
            b_1: z(&self.b_1),
            w_2: z(&self.w_2),
            b_2: z(&self.b_2),
            pooling: self.pooling,
        }
    }

    /// Reassembles parameters from matrices in [`PARAM_NAMES`] order.
    pub fn from_matrices(mats: [Matrix; 7], pooling: Pooling) -> Result<Self> {
        let [w_q, w_k, w_v, w_1, b_1, w_2, b_2] = mats;
        let p = Self { w_q, w_k, w_v, w_1, b_1, w_2, b_2, pooling };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d_enc();
        let h = self.hidden();
        let out = self.out_dim();
        let ok = self.w_q.shape() == (d, d)
            && self.w_k.shape() == (d, d)
            && self.w_v.shape() == (d, d)
            && self.w_1.shape() == (d, h)
            && self.b_1.shape() == (1, h)
            && self.w_2.shape() == (h, out)
            && self.b_2.shape() == (1, out);
        if !ok {
            return Err(Error::InvalidArgument("causal parameter shapes are inconsistent".to_string()));
        }
        if !self.matrices().iter().all(|m| m.is_finite()) {
            return Err(Error::NumericalFailure("causal parameters are not finite".to_string()));
        }
        Ok(())
    }

    pub fn d_enc(&self) -> usize {
        self.w_q.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w_1.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.w_2.cols()
    }

    pub fn matrices(&self) -> [&Matrix; 7] {
        [&self.w_q, &self.w_k, &self.w_v, &self.w_1, &self.b_1, &self.w_2, &self.b_2]
    }

    pub fn matrices_mut(&mut self) -> [&mut Matrix; 7] {
        [&mut self.w_q, &mut self.w_k, &mut self.w_v, &mut self.w_1, &mut self.b_1, &mut self.w_2, &mut self.b_2]
    }

    pub fn to_params(&self) -> Vec<Param> {
        PARAM_NAMES.iter().zip(self.matrices()).map(|(n, m)| Param::new(*n, m.clone())).collect()
    }

    pub fn from_params(params: &[Param], pooling: Pooling) -> Result<Self> {
        let mats: [Matrix; 7] = params
            .iter()
            .map(|p| p.value.clone())
            .collect::<Vec<_>>()
            .try_into()
            .map_err(|_| Error::InvalidArgument("expected 7 causal parameters".to_string()))?;
        Self::from_matrices(mats, pooling)
    }

    /// `self += factor · other`, matrix by matrix.
    pub fn add_scaled(&mut self, factor: f64, other: &CausalParams) -> Result<()> {
        for (a, b) in self.matrices_mut().into_iter().zip(other.matrices()) {
            a.add_scaled(factor, b)?;
        }
        Ok(())
    }
}

/// Attention forward values kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub pooled: Vec<f64>,
    pub per_token: Matrix,
    pub weights: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
}

/// `softmax(QKᵀ/√d_enc) V` with `Q = X W_qᵀ` (and likewise K, V), pooled
/// over tokens.
pub fn self_attention(tokens: &Matrix, params: &CausalParams) -> Result<AttentionOutput> {
    if tokens.rows() == 0 {
        return Err(Error::InvalidArgument("self-attention needs at least one token".to_string()));
    }
    if tokens.cols() != params.d_enc() {
        return Err(Error::InvalidArgument(alloc::format!(
            "tokens have dimension {}, parameters expect {}",
            tokens.cols(),
            params.d_enc()
        )));
    }
    let q = tokens.matmul_transpose(&params.w_q)?;
    let k = tokens.matmul_transpose(&params.w_k)?;
    let v = tokens.matmul_transpose(&params.w_v)?;
    let mut scores = q.matmul_transpose(&k)?;
    scores.scale(1.0 / libm::sqrt(params.d_enc() as f64));
    let weights = softmax_rows(&scores)?;
    let per_token = weights.matmul(&v)?;
    let pooled = match params.pooling {
        Pooling::Mean => per_token.mean_row(),
        Pooling::First => per_token.row(0).to_vec(),
    };
    Ok(AttentionOutput { pooled, per_token, weights, q, k, v })
}

/// Accumulates `∂/∂W_{q,k,v}` into `grads` given `∂/∂pooled`.
pub fn self_attention_backward(
    tokens: &Matrix,
    params: &CausalParams,
    out: &AttentionOutput,
    d_pooled: &[f64],
    grads: &mut CausalParams,
) -> Result<()> {
    let f = tokens.rows();
    let d = params.d_enc();
    let mut d_out = Matrix::zeros(f, d);
    match params.pooling {
        Pooling::Mean => {
            let inv = 1.0 / f as f64;
            for r in 0..f {
                axpy(inv, d_pooled, d_out.row_mut(r));
            }
        }
        Pooling::First => d_out.row_mut(0).copy_from_slice(d_pooled),
    }
    let d_weights = d_out.matmul_transpose(&out.v)?;
    let d_v = out.weights.transpose_matmul(&d_out)?;
    let mut d_scores = Matrix::zeros(f, f);
    let scale = 1.0 / libm::sqrt(d as f64);
    for r in 0..f {
        let a = out.weights.row(r);
        let da = d_weights.row(r);
        let inner: f64 = a.iter().zip(da).map(|(x, y)| x * y).sum();
        for c in 0..f {
            d_scores.set(r, c, a[c] * (da[c] - inner) * scale);
        }
    }
    let d_q = d_scores.matmul(&out.k)?;
    let d_k = d_scores.transpose_matmul(&out.q)?;
    grads.w_q.add_scaled(1.0, &d_q.transpose_matmul(tokens)?)?;
    grads.w_k.add_scaled(1.0, &d_k.transpose_matmul(tokens)?)?;
    grads.w_v.add_scaled(1.0, &d_v.transpose_matmul(tokens)?)?;
    Ok(())
}

/// `e_t = pooled_pos − pooled_neg`.
pub fn causal_effect(pooled_pos: &[f64], pooled_neg: &[f64]) -> Result<Vec<f64>> {
    if pooled_pos.len() != pooled_neg.len() {
        return Err(Error::InvalidArgument("causal_effect: dimension mismatch".to_string()));
    }
    Ok(sub(pooled_pos, pooled_neg))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionTrace {
    input: Vec<f64>,
    pre_activation: Vec<f64>,
    hidden: Vec<f64>,
    pub output: Vec<f64>,
}

impl ProjectionTrace {
    pub fn pre_activation(&self) -> &[f64] {
        &self.pre_activation
    }
}

pub fn project_traced(x: &[f64], params: &CausalParams) -> Result<ProjectionTrace> {
    if x.len() != params.d_enc() {
        return Err(Error::InvalidArgument(alloc::format!(
            "projection input has dimension {}, expected {}",
            x.len(),
            params.d_enc()
        )));
    }
    let mut pre = params.b_1.row(0).to_vec();
    for (a, &xa) in x.iter().enumerate() {
        axpy(xa, params.w_1.row(a), &mut pre);
    }
    let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
    let mut output = params.b_2.row(0).to_vec();
    for (k, &hk) in hidden.iter().enumerate() {
        if hk != 0.0 {
            axpy(hk, params.w_2.row(k), &mut output);
        }
    }
    Ok(ProjectionTrace { input: x.to_vec(), pre_activation: pre, hidden, output })
}

/// `ReLU(x W_1 + b_1) W_2 + b_2`.
pub fn project(x: &[f64], params: &CausalParams) -> Result<Vec<f64>> {
    Ok(project_traced(x, params)?.output)
}

/// Accumulates projection parameter gradients and returns `∂/∂x`.
pub fn project_backward(trace: &ProjectionTrace, d_out: &[f64], params: &CausalParams, grads: &mut CausalParams) -> Vec<f64> {
    let h = params.hidden();
    axpy(1.0, d_out, grads.b_2.row_mut(0));
    let mut d_pre = alloc::vec![0.0; h];
    for k in 0..h {
        if trace.hidden[k] != 0.0 {
            axpy(trace.hidden[k], d_out, grads.w_2.row_mut(k));
        }
        if trace.pre_activation[k] > 0.0 {
            d_pre[k] = params.w_2.row(k).iter().zip(d_out).map(|(w, g)| w * g).sum();
        }
    }
    axpy(1.0, &d_pre, grads.b_1.row_mut(0));
    let mut d_x = alloc::vec![0.0; trace.input.len()];
    for (a, &xa) in trace.input.iter().enumerate() {
        if xa != 0.0 {
            axpy(xa, &d_pre, grads.w_1.row_mut(a));
        }
        d_x[a] = params.w_1.row(a).iter().zip(&d_pre).map(|(w, g)| w * g).sum();
    }
    d_x
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalEffectEmbedding {
    pub e_t: Vec<f64>,
    pub e_c: Vec<f64>,
    pub e_c_neg: Vec<f64>,
}

/// Forward values of [`causal_forward`] kept for [`causal_backward`].
#[derive(Debug, Clone, PartialEq)]
pub struct CausalTrace {
    pub embedding: CausalEffectEmbedding,
    pub positive: AttentionOutput,
    pub negative: AttentionOutput,
    pub effect_projection: ProjectionTrace,
    pub negative_projection: ProjectionTrace,
}

pub fn causal_forward_traced(pos_tokens: &Matrix, neg_tokens: &Matrix, params: &CausalParams) -> Result<CausalTrace> {
    if pos_tokens.shape() != neg_tokens.shape() {
        return Err(Error::InvalidArgument("positive and negative token shapes differ".to_string()));
    }
    let positive = self_attention(pos_tokens, params)?;
    let negative = self_attention(neg_tokens, params)?;
    let e_t = causal_effect(&positive.pooled, &negative.pooled)?;
    let effect_projection = project_traced(&e_t, params)?;
    let negative_projection = project_traced(&negative.pooled, params)?;
    Ok(CausalTrace {
        embedding: CausalEffectEmbedding {
            e_t,
            e_c: effect_projection.output.clone(),
            e_c_neg: negative_projection.output.clone(),
        },
        positive,
        negative,
        effect_projection,
        negative_projection,
    })
}

/// `e_t = ẽ_m − ẽ_m*`, `e_c = project(e_t)`, `e_c* = project(ẽ_m*)`, with the
/// same attention and projection applied to both token sets.
pub fn causal_forward(pos_tokens: &Matrix, neg_tokens: &Matrix, params: &CausalParams) -> Result<CausalEffectEmbedding> {
    Ok(causal_forward_traced(pos_tokens, neg_tokens, params)?.embedding)
}

/// Accumulates all parameter gradients given `∂/∂e_c` and `∂/∂e_c*`.
pub fn causal_backward(
    pos_tokens: &Matrix,
    neg_tokens: &Matrix,
    params: &CausalParams,
    trace: &CausalTrace,
    d_e_c: &[f64],
    d_e_c_neg: &[f64],
    grads: &mut CausalParams,
) -> Result<()> {
    let d_e_t = project_backward(&trace.effect_projection, d_e_c, params, grads);
    let mut d_neg_pooled = project_backward(&trace.negative_projection, d_e_c_neg, params, grads);
    axpy(-1.0, &d_e_t, &mut d_neg_pooled);
    self_attention_backward(pos_tokens, params, &trace.positive, &d_e_t, grads)?;
    self_attention_backward(neg_tokens, params, &trace.negative, &d_neg_pooled, grads)?;
    Ok(())
}

/// Evaluation-time causal embedding of an item from its positive tokens
/// alone: `project(ẽ_m)`.
pub fn item_effect(pos_tokens: &Matrix, params: &CausalParams) -> Result<Vec<f64>> {
    project(&self_attention(pos_tokens, params)?.pooled, params)
}
