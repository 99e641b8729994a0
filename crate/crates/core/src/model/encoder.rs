//! Short-term post encoder.
//!
//! The toy encoder is a single transformer block: token plus positional
//! embeddings, multi-head self-attention with a residual and row
//! normalization, then a feed-forward pair with a residual and row
//! normalization. Only the CLS row of the block output is used, so only the
//! CLS query is computed.

use super::{DenConfig, DenParams, EncoderKind, ModelError, PreparedUser, Result};
use crate::autodiff::{Matrix, ParamId, ParamStore, Tape, Var};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct EncoderParams {
    pub tok: ParamId,
    pub pos: ParamId,
    pub cls: ParamId,
    /// `(query, key, value)` per head.
    pub heads: Vec<(ParamId, ParamId, ParamId)>,
    pub out: ParamId,
    pub ff1_w: ParamId,
    pub ff1_b: ParamId,
    pub ff2_w: ParamId,
    pub ff2_b: ParamId,
}

impl EncoderParams {
    pub fn resolve(store: &ParamStore, cfg: &DenConfig) -> Result<Self> {
        let r = |n: &str| store.require(n);
        Ok(Self {
            tok: r("enc.tok")?,
            pos: r("enc.pos")?,
            cls: r("enc.cls")?,
            heads: (0..cfg.attention_heads)
                .map(|h| {
                    Ok((
                        r(&format!("enc.head{h}.q"))?,
                        r(&format!("enc.head{h}.k"))?,
                        r(&format!("enc.head{h}.v"))?,
                    ))
                })
                .collect::<Result<_, crate::autodiff::AutodiffError>>()?,
            out: r("enc.out")?,
            ff1_w: r("enc.ff1.w")?,
            ff1_b: r("enc.ff1.b")?,
            ff2_w: r("enc.ff2.w")?,
            ff2_b: r("enc.ff2.b")?,
        })
    }
}

fn toy_encode(tape: &mut Tape, e: &EncoderParams, tokens: &[u32], cfg: &DenConfig) -> Result<Var> {
    if tokens.len() > cfg.max_len {
        return Err(ModelError::PostTooLong {
            len: tokens.len(),
            max: cfg.max_len,
        });
    }
    if let Some(&id) = tokens.iter().find(|&&t| t as usize >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            id,
            vocab: cfg.vocab_size,
        });
    }
    let cls = tape.param(e.cls)?;
    let x = if tokens.is_empty() {
        cls
    } else {
        let ids: Vec<usize> = tokens.iter().map(|&t| t as usize).collect();
        let emb = tape.gather(e.tok, &ids)?;
        tape.concat_rows(&[cls, emb])?
    };
    let pos = tape.param(e.pos)?;
    let pos = tape.slice_rows(pos, 0, tokens.len() + 1)?;
    let x = tape.add(x, pos)?;
    let x0 = tape.slice_rows(x, 0, 1)?;

    let dh = cfg.d / cfg.attention_heads;
    let mut heads = Vec::with_capacity(e.heads.len());
    for &(wq, wk, wv) in &e.heads {
        let (wq, wk, wv) = (tape.param(wq)?, tape.param(wk)?, tape.param(wv)?);
        let q = tape.matmul(x0, wq)?;
        let k = tape.matmul(x, wk)?;
        let v = tape.matmul(x, wv)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (dh as f64).sqrt())?;
        let attn = tape.softmax_rows(scores)?;
        heads.push(tape.matmul(attn, v)?);
    }
    let cat = tape.concat_cols(&heads)?;
    let wo = tape.param(e.out)?;
    let att = tape.matmul(cat, wo)?;
    let r = tape.add(x0, att)?;
    let r = tape.row_norm(r, NORM_EPS)?;

    let (w1, b1, w2, b2) = (
        tape.param(e.ff1_w)?,
        tape.param(e.ff1_b)?,
        tape.param(e.ff2_w)?,
        tape.param(e.ff2_b)?,
    );
    let f = tape.matmul(r, w1)?;
    let f = tape.add_bias_row(f, b1)?;
    let f = tape.leaky_relu(f, cfg.leaky_slope)?;
    let f = tape.matmul(f, w2)?;
    let f = tape.add_bias_row(f, b2)?;
    let out = tape.add(r, f)?;
    Ok(tape.row_norm(out, NORM_EPS)?)
}

/// Encoding `h_i` (1 x d) of one post. With the precomputed encoder the
/// supplied vector is returned as a constant.
pub fn encode_post(tape: &mut Tape, p: &DenParams, tokens: &[u32], precomputed: Option<&[f64]>, cfg: &DenConfig) -> Result<Var> {
    match cfg.encoder {
        EncoderKind::ToyAttention => {
            let e = p
                .encoder
                .as_ref()
                .ok_or_else(|| ModelError::Config("toy encoder parameters missing".into()))?;
            toy_encode(tape, e, tokens, cfg)
        }
        EncoderKind::Precomputed => {
            let v = precomputed.ok_or_else(|| ModelError::MissingPrecomputed(String::new()))?;
            if v.len() != cfg.d {
                return Err(ModelError::PrecomputedWidth {
                    post: 0,
                    expected: cfg.d,
                    found: v.len(),
                });
            }
            Ok(tape.constant(Matrix::row_vector(v))?)
        }
    }
}

/// Short-term encodings `H^l` (N x d), one row per post in order.
pub fn encode_short(tape: &mut Tape, p: &DenParams, user: &PreparedUser, cfg: &DenConfig) -> Result<Var> {
    if user.posts.is_empty() {
        return Err(ModelError::NoPosts(user.user_id.clone()));
    }
    let mut rows = Vec::with_capacity(user.posts.len());
    for (i, post) in user.posts.iter().enumerate() {
        let pre = match cfg.encoder {
            EncoderKind::Precomputed => Some(
                user.post_embeddings
                    .as_ref()
                    .and_then(|v| v.get(i))
                    .ok_or_else(|| ModelError::MissingPrecomputed(user.user_id.clone()))?
                    .as_slice(),
            ),
            EncoderKind::ToyAttention => None,
        };
        rows.push(encode_post(tape, p, post, pre, cfg).map_err(|e| match e {
            ModelError::PrecomputedWidth { expected, found, .. } => ModelError::PrecomputedWidth {
                post: i,
                expected,
                found,
            },
            e => e,
        })?);
    }
    Ok(tape.concat_rows(&rows)?)
}
