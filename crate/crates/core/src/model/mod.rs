//! The dual-encoder network: a GCN over each user's psychological entity
//! graph (long-term), a per-post encoder (short-term), a bipartite
//! interaction GCN between the two, mean pooling, gated fusion and one
//! two-way softmax head per trait.
//!
//! Every step is a free function over a [`Tape`] so tests and the gradient
//! checker can drive any sub-graph directly.

mod encoder;

pub use encoder::{encode_post, encode_short, EncoderParams, NORM_EPS};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

use crate::autodiff::checkpoint::{decode_checkpoint, encode_checkpoint, Manifest};
use crate::autodiff::{
    AutodiffError, Gradients, LinearOperator, Matrix, ParamGroup, ParamId, ParamStore, Tape, Var,
};
use crate::data::{Labels, UserDocument, NUM_TRAITS};
use crate::embeddings::EmbeddingTable;
use crate::graph::{build_bipartite, build_psych_graph, normalize, Adjacency, BipartiteGraph, PsychGraph};
use crate::lexicon::{extract_entities, Lexicon};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("post has {len} tokens, limit is {max}")]
    PostTooLong { len: usize, max: usize },
    #[error("user {0} has no posts")]
    NoPosts(String),
    #[error("user {0} has no precomputed post embeddings")]
    MissingPrecomputed(String),
    #[error("precomputed vector for post {post} has width {found}, expected {expected}")]
    PrecomputedWidth {
        post: usize,
        expected: usize,
        found: usize,
    },
    #[error("user {0} has no labels")]
    Unlabeled(String),
    #[error("embedding width {found} does not match d_g = {expected}")]
    FeatureWidth { expected: usize, found: usize },
    #[error("parameter {name} has shape {found:?}, config needs {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: (usize, usize),
        found: (usize, usize),
    },
}

type Result<T, E = ModelError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    ToyAttention,
    Precomputed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    NoShort,
    NoLong,
    NoGcn,
    NoInter,
    FullyConnected,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::None,
        Ablation::NoShort,
        Ablation::NoLong,
        Ablation::NoGcn,
        Ablation::NoInter,
        Ablation::FullyConnected,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoShort => "no_short",
            Ablation::NoLong => "no_long",
            Ablation::NoGcn => "no_gcn",
            Ablation::NoInter => "no_inter",
            Ablation::FullyConnected => "fully_connected",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    Learned,
    Fixed(f64),
}

/// Network shape and variant switches. Missing JSON fields take the defaults
/// below.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenConfig {
    /// Hidden width.
    pub d: usize,
    /// Entity embedding width.
    pub d_g: usize,
    /// Maximum tokens per post.
    pub max_len: usize,
    /// Maximum posts per user.
    pub n_max: usize,
    pub gcn_layers: usize,
    pub inter_layers: usize,
    pub leaky_slope: f64,
    pub encoder: EncoderKind,
    pub attention_heads: usize,
    /// Inner width of the encoder feed-forward pair.
    pub ff_dim: usize,
    /// Token table size, including the reserved ids. Set from the vocabulary.
    pub vocab_size: usize,
    pub self_loops: bool,
    pub ablation: Ablation,
    pub gate_mode: GateMode,
}

impl Default for DenConfig {
    fn default() -> Self {
        Self {
            d: 32,
            d_g: 50,
            max_len: 70,
            n_max: 50,
            gcn_layers: 2,
            inter_layers: 2,
            leaky_slope: 0.01,
            encoder: EncoderKind::ToyAttention,
            attention_heads: 2,
            ff_dim: 64,
            vocab_size: 3,
            self_loops: true,
            ablation: Ablation::None,
            gate_mode: GateMode::Learned,
        }
    }
}

impl DenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(ModelError::Config(m.to_string()));
        if self.d == 0 || self.d_g == 0 || self.attention_heads == 0 || self.ff_dim == 0 {
            return bad("d, d_g, attention_heads and ff_dim must be at least 1");
        }
        if !self.d.is_multiple_of(self.attention_heads) {
            return bad("d must be divisible by attention_heads");
        }
        if self.gcn_layers == 0 {
            return bad("gcn_layers must be at least 1");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        if !self.leaky_slope.is_finite() {
            return bad("leaky_slope must be finite");
        }
        if let GateMode::Fixed(a) = self.gate_mode {
            if !(0.0..=1.0).contains(&a) {
                return bad("fixed gate must lie in [0, 1]");
            }
        }
        if self.encoder == EncoderKind::ToyAttention && self.vocab_size < 3 {
            return bad("vocab_size must cover the reserved tokens");
        }
        Ok(())
    }

    /// Which sides of the network contribute to the fused vector. A fixed
    /// gate at 0 or 1 removes the side it zeroes out, interaction included.
    pub fn route(&self) -> Route {
        match (self.ablation, self.gate_mode) {
            (Ablation::NoLong, _) => Route::ShortOnly,
            (Ablation::NoShort, _) => Route::LongOnly,
            (_, GateMode::Fixed(0.0)) => Route::ShortOnly,
            (_, GateMode::Fixed(1.0)) => Route::LongOnly,
            _ => Route::Both,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    Both,
    LongOnly,
    ShortOnly,
}

/// Resolved parameter handles.
#[derive(Clone, Debug)]
pub struct DenParams {
    pub long: Vec<ParamId>,
    pub inter: Vec<ParamId>,
    pub proj_in: ParamId,
    pub fusion_w: ParamId,
    pub fusion_b: ParamId,
    pub heads: Vec<(ParamId, ParamId)>,
    pub sentinel: ParamId,
    pub encoder: Option<EncoderParams>,
}

impl DenParams {
    pub fn resolve(store: &ParamStore, cfg: &DenConfig) -> Result<Self> {
        let r = |n: String| store.require(&n);
        Ok(Self {
            long: (1..=cfg.gcn_layers).map(|l| r(format!("long.w{l}"))).collect::<Result<_, _>>()?,
            inter: (1..=cfg.inter_layers).map(|l| r(format!("inter.w{l}"))).collect::<Result<_, _>>()?,
            proj_in: r("proj.in".into())?,
            fusion_w: r("fusion.w".into())?,
            fusion_b: r("fusion.b".into())?,
            heads: (0..NUM_TRAITS)
                .map(|t| Ok((r(format!("head.{t}.w"))?, r(format!("head.{t}.b"))?)))
                .collect::<Result<_, AutodiffError>>()?,
            sentinel: r("sentinel".into())?,
            encoder: match cfg.encoder {
                EncoderKind::ToyAttention => Some(EncoderParams::resolve(store, cfg)?),
                EncoderKind::Precomputed => None,
            },
        })
    }
}

#[derive(Clone, Copy)]
enum Init {
    Zero,
    Xavier,
    Uniform(f64),
}

fn param_rng(seed: u64, name: &str) -> ChaCha8Rng {
    // FNV-1a over the name, mixed with the run seed
    let h = name
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3));
    ChaCha8Rng::seed_from_u64(h ^ seed.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn add_param(store: &mut ParamStore, seed: u64, name: &str, group: ParamGroup, shape: (usize, usize), init: Init) -> Result<()> {
    let (rows, cols) = shape;
    let mut rng = param_rng(seed, name);
    let bound = match init {
        Init::Zero => 0.0,
        Init::Xavier => (6.0 / (rows + cols) as f64).sqrt(),
        Init::Uniform(a) => a,
    };
    let data = (0..rows * cols)
        .map(|_| if bound == 0.0 { 0.0 } else { rng.gen_range(-bound..bound) })
        .collect();
    store.insert(name, group, Matrix::from_vec(rows, cols, data)?)?;
    Ok(())
}

/// Fresh parameters. Each tensor draws from a generator keyed by
/// `(seed, name)`, so variants sharing a tensor name and shape start equal.
pub fn init_params(cfg: &DenConfig, seed: u64) -> Result<ParamStore> {
    cfg.validate()?;
    let mut store = ParamStore::new();
    let (d, dg) = (cfg.d, cfg.d_g);
    let other = ParamGroup::Other;
    for l in 1..=cfg.gcn_layers {
        let rows = if l == 1 { dg } else { d };
        add_param(&mut store, seed, &format!("long.w{l}"), other, (rows, d), Init::Xavier)?;
    }
    for l in 1..=cfg.inter_layers {
        add_param(&mut store, seed, &format!("inter.w{l}"), other, (d, d), Init::Xavier)?;
    }
    add_param(&mut store, seed, "proj.in", other, (dg, d), Init::Xavier)?;
    add_param(&mut store, seed, "fusion.w", other, (2 * d, 1), Init::Zero)?;
    add_param(&mut store, seed, "fusion.b", other, (1, 1), Init::Zero)?;
    for t in 0..NUM_TRAITS {
        add_param(&mut store, seed, &format!("head.{t}.w"), other, (d, 2), Init::Xavier)?;
        add_param(&mut store, seed, &format!("head.{t}.b"), other, (1, 2), Init::Zero)?;
    }
    add_param(&mut store, seed, "sentinel", other, (1, dg), Init::Uniform((3.0 / dg as f64).sqrt()))?;
    if cfg.encoder == EncoderKind::ToyAttention {
        let enc = ParamGroup::Encoder;
        let dh = d / cfg.attention_heads;
        add_param(&mut store, seed, "enc.tok", enc, (cfg.vocab_size, d), Init::Uniform(0.5))?;
        add_param(&mut store, seed, "enc.pos", enc, (cfg.max_len + 1, d), Init::Uniform(0.5))?;
        add_param(&mut store, seed, "enc.cls", enc, (1, d), Init::Uniform(0.5))?;
        for h in 0..cfg.attention_heads {
            for m in ["q", "k", "v"] {
                add_param(&mut store, seed, &format!("enc.head{h}.{m}"), enc, (d, dh), Init::Xavier)?;
            }
        }
        add_param(&mut store, seed, "enc.out", enc, (d, d), Init::Xavier)?;
        add_param(&mut store, seed, "enc.ff1.w", enc, (d, cfg.ff_dim), Init::Xavier)?;
        add_param(&mut store, seed, "enc.ff1.b", enc, (1, cfg.ff_dim), Init::Zero)?;
        add_param(&mut store, seed, "enc.ff2.w", enc, (cfg.ff_dim, d), Init::Xavier)?;
        add_param(&mut store, seed, "enc.ff2.b", enc, (1, d), Init::Zero)?;
    }
    Ok(store)
}

/// A user with graphs and normalized operators precomputed.
#[derive(Clone, Debug)]
pub struct PreparedUser {
    pub user_id: String,
    pub labels: Option<Labels>,
    pub graph: PsychGraph,
    pub bipartite: BipartiteGraph,
    /// Normalized entity adjacency; 1x1 for the sentinel when the user has no entities.
    pub long_adj: Arc<LinearOperator>,
    /// Normalized entity/post adjacency over `max(K, 1) + N` nodes.
    pub inter_adj: Arc<LinearOperator>,
    pub posts: Vec<Vec<u32>>,
    pub post_embeddings: Option<Vec<Vec<f64>>>,
}

impl PreparedUser {
    pub fn num_entities(&self) -> usize {
        self.graph.num_nodes()
    }

    pub fn num_posts(&self) -> usize {
        self.posts.len()
    }
}

pub fn prepare_user(doc: &UserDocument, lexicon: &Lexicon, table: &EmbeddingTable, cfg: &DenConfig) -> Result<PreparedUser> {
    if doc.posts.is_empty() {
        return Err(ModelError::NoPosts(doc.user_id.clone()));
    }
    if table.dim() != cfg.d_g {
        return Err(ModelError::FeatureWidth {
            expected: cfg.d_g,
            found: table.dim(),
        });
    }
    let entities = extract_entities(lexicon, &doc.raw_posts);
    let graph = build_psych_graph(&entities, lexicon, table);
    let bipartite = build_bipartite(&entities, &doc.raw_posts);
    let k = graph.num_nodes();
    let long = if k == 0 {
        Adjacency::empty(1)
    } else if cfg.ablation == Ablation::FullyConnected {
        Adjacency::complete(k)
    } else {
        graph.adjacency.clone()
    };
    let inter = if k == 0 {
        // isolated sentinel node ahead of the posts
        Adjacency::empty(1 + doc.posts.len())
    } else {
        bipartite.adjacency.clone()
    };
    if cfg.encoder == EncoderKind::Precomputed {
        check_precomputed(doc, cfg)?;
    }
    Ok(PreparedUser {
        user_id: doc.user_id.clone(),
        labels: doc.labels,
        long_adj: normalize(&long, cfg.self_loops).operator,
        inter_adj: normalize(&inter, cfg.self_loops).operator,
        graph,
        bipartite,
        posts: doc.posts.clone(),
        post_embeddings: doc.post_embeddings.clone(),
    })
}

fn check_precomputed(doc: &UserDocument, cfg: &DenConfig) -> Result<()> {
    let vecs = doc
        .post_embeddings
        .as_ref()
        .filter(|v| v.len() == doc.posts.len())
        .ok_or_else(|| ModelError::MissingPrecomputed(doc.user_id.clone()))?;
    for (post, v) in vecs.iter().enumerate() {
        if v.len() != cfg.d {
            return Err(ModelError::PrecomputedWidth {
                post,
                expected: cfg.d,
                found: v.len(),
            });
        }
    }
    Ok(())
}

/// Stacked GCN layers `X <- LeakyReLU(A X W)` over a fixed operator.
fn gcn_stack(tape: &mut Tape, adj: &Arc<LinearOperator>, mut x: Var, weights: &[ParamId], slope: f64) -> Result<Var> {
    for &w in weights {
        let ax = tape.propagate(adj.clone(), x)?;
        let w = tape.param(w)?;
        let axw = tape.matmul(ax, w)?;
        x = tape.leaky_relu(axw, slope)?;
    }
    Ok(x)
}

/// Long-term encodings `M^l` (K x d) from node features (K x d_g).
pub fn encode_long(tape: &mut Tape, p: &DenParams, features: Var, adj: &Arc<LinearOperator>, cfg: &DenConfig) -> Result<Var> {
    gcn_stack(tape, adj, features, &p.long, cfg.leaky_slope)
}

/// Runs the interaction GCN over `[M; H]` and splits the result back.
pub fn interact(tape: &mut Tape, p: &DenParams, m: Var, h: Var, adj: &Arc<LinearOperator>, cfg: &DenConfig) -> Result<(Var, Var)> {
    let k = tape.shape(m).0;
    let n = tape.shape(h).0;
    let x = tape.concat_rows(&[m, h])?;
    let x = gcn_stack(tape, adj, x, &p.inter, cfg.leaky_slope)?;
    Ok((tape.slice_rows(x, 0, k)?, tape.slice_rows(x, k, n)?))
}

/// Mean pooling of entity rows and post rows.
pub fn aggregate(tape: &mut Tape, m: Var, h: Var) -> Result<(Var, Var)> {
    Ok((tape.mean_rows(m)?, tape.mean_rows(h)?))
}

/// Gated fusion; returns `(U, alpha)` with alpha as a 1x1 node.
pub fn fuse(tape: &mut Tape, p: &DenParams, u_long: Var, u_short: Var, cfg: &DenConfig) -> Result<(Var, Var)> {
    let alpha = match cfg.gate_mode {
        GateMode::Learned => {
            let cat = tape.concat_cols(&[u_long, u_short])?;
            let w = tape.param(p.fusion_w)?;
            let b = tape.param(p.fusion_b)?;
            let z = tape.matmul(cat, w)?;
            let z = tape.add(z, b)?;
            tape.sigmoid(z)?
        }
        GateMode::Fixed(a) => tape.constant(Matrix::scalar(a))?,
    };
    let one = tape.constant(Matrix::scalar(1.0))?;
    let beta = tape.sub(one, alpha)?;
    let l = tape.mul_scalar(alpha, u_long)?;
    let s = tape.mul_scalar(beta, u_short)?;
    Ok((tape.add(l, s)?, alpha))
}

/// Class-1 probability of each trait head, as a 1xT row.
pub fn predict(tape: &mut Tape, p: &DenParams, u: Var) -> Result<Var> {
    let mut probs = Vec::with_capacity(p.heads.len());
    for &(w, b) in &p.heads {
        let w = tape.param(w)?;
        let b = tape.param(b)?;
        let z = tape.matmul(u, w)?;
        let z = tape.add_bias_row(z, b)?;
        let s = tape.softmax_rows(z)?;
        probs.push(tape.slice_cols(s, 1, 1)?);
    }
    Ok(tape.concat_cols(&probs)?)
}

/// Summed binary cross-entropy over traits.
pub fn loss(tape: &mut Tape, probs: Var, labels: &Labels) -> Result<Var> {
    let y: Vec<f64> = labels.iter().map(|&b| f64::from(b)).collect();
    Ok(tape.bce(probs, &y)?)
}

/// Tape nodes of one forward pass. Sides pruned by the route are `None`.
#[derive(Clone, Copy, Debug)]
pub struct ForwardVars {
    pub m_long: Option<Var>,
    pub h_short: Option<Var>,
    pub m_tilde: Option<Var>,
    pub h_tilde: Option<Var>,
    pub u_long: Option<Var>,
    pub u_short: Option<Var>,
    pub alpha: Option<Var>,
    pub u: Var,
    pub probs: Var,
}

/// Materialized values of a forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct UserForwardState {
    pub m_long: Option<Matrix>,
    pub h_short: Option<Matrix>,
    pub m_tilde: Option<Matrix>,
    pub h_tilde: Option<Matrix>,
    pub u_long: Option<Matrix>,
    pub u_short: Option<Matrix>,
    pub alpha: Option<f64>,
    pub u: Matrix,
    pub probs: Vec<f64>,
}

impl ForwardVars {
    pub fn state(&self, tape: &Tape) -> UserForwardState {
        let get = |v: Option<Var>| v.map(|v| tape.value(v).clone());
        UserForwardState {
            m_long: get(self.m_long),
            h_short: get(self.h_short),
            m_tilde: get(self.m_tilde),
            h_tilde: get(self.h_tilde),
            u_long: get(self.u_long),
            u_short: get(self.u_short),
            alpha: self.alpha.map(|a| tape.value(a).item()),
            u: tape.value(self.u).clone(),
            probs: tape.value(self.probs).data().to_vec(),
        }
    }
}

fn long_side(tape: &mut Tape, p: &DenParams, user: &PreparedUser, cfg: &DenConfig) -> Result<Var> {
    let features = if user.num_entities() == 0 {
        tape.param(p.sentinel)?
    } else {
        tape.constant(user.graph.node_features.clone())?
    };
    if cfg.ablation == Ablation::NoGcn {
        let w = tape.param(p.proj_in)?;
        Ok(tape.matmul(features, w)?)
    } else {
        encode_long(tape, p, features, &user.long_adj, cfg)
    }
}

pub fn forward_user(tape: &mut Tape, p: &DenParams, user: &PreparedUser, cfg: &DenConfig) -> Result<ForwardVars> {
    let mut out = ForwardVars {
        m_long: None,
        h_short: None,
        m_tilde: None,
        h_tilde: None,
        u_long: None,
        u_short: None,
        alpha: None,
        u: Var(0),
        probs: Var(0),
    };
    let route = cfg.route();
    if route != Route::ShortOnly {
        out.m_long = Some(long_side(tape, p, user, cfg)?);
    }
    if route != Route::LongOnly {
        out.h_short = Some(encode_short(tape, p, user, cfg)?);
    }
    out.u = match (out.m_long, out.h_short) {
        (Some(m), Some(h)) => {
            let (mt, ht) = if cfg.ablation == Ablation::NoInter {
                (m, h)
            } else {
                interact(tape, p, m, h, &user.inter_adj, cfg)?
            };
            out.m_tilde = Some(mt);
            out.h_tilde = Some(ht);
            let (ul, us) = aggregate(tape, mt, ht)?;
            out.u_long = Some(ul);
            out.u_short = Some(us);
            let (u, alpha) = fuse(tape, p, ul, us, cfg)?;
            out.alpha = Some(alpha);
            u
        }
        (Some(m), None) => {
            let ul = tape.mean_rows(m)?;
            out.u_long = Some(ul);
            ul
        }
        (None, Some(h)) => {
            let us = tape.mean_rows(h)?;
            out.u_short = Some(us);
            us
        }
        (None, None) => unreachable!("route keeps at least one side"),
    };
    out.probs = predict(tape, p, out.u)?;
    Ok(out)
}

/// Parameters plus configuration.
#[derive(Clone, Debug)]
pub struct DenModel {
    pub config: DenConfig,
    pub params: ParamStore,
    handles: DenParams,
}

impl DenModel {
    pub fn new(config: DenConfig, seed: u64) -> Result<Self> {
        let params = init_params(&config, seed)?;
        Self::from_parts(config, params)
    }

    pub fn from_parts(config: DenConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let handles = DenParams::resolve(&params, &config)?;
        for (_, want) in init_params(&config, 0)?.iter() {
            let found = params.value(params.require(&want.name)?).shape();
            if found != want.value.shape() {
                return Err(ModelError::ShapeMismatch {
                    name: want.name.clone(),
                    expected: want.value.shape(),
                    found,
                });
            }
        }
        for (_, p) in params.iter() {
            if !p.value.is_finite() {
                return Err(AutodiffError::NonFinite { op: "load" }.into());
            }
        }
        Ok(Self { config, params, handles })
    }

    pub fn handles(&self) -> &DenParams {
        &self.handles
    }

    /// Same parameters under a different variant of the same shape.
    pub fn with_config(&self, config: DenConfig) -> Result<Self> {
        Self::from_parts(config, self.params.clone())
    }

    pub fn prepare(&self, doc: &UserDocument, lexicon: &Lexicon, table: &EmbeddingTable) -> Result<PreparedUser> {
        prepare_user(doc, lexicon, table, &self.config)
    }

    pub fn forward_state(&self, user: &PreparedUser) -> Result<UserForwardState> {
        let mut tape = Tape::new(&self.params);
        let vars = forward_user(&mut tape, &self.handles, user, &self.config)?;
        Ok(vars.state(&tape))
    }

    pub fn predict_user(&self, user: &PreparedUser) -> Result<Vec<f64>> {
        let mut tape = Tape::new(&self.params);
        let vars = forward_user(&mut tape, &self.handles, user, &self.config)?;
        Ok(tape.value(vars.probs).data().to_vec())
    }

    /// Loss and parameter gradients for one labeled user.
    pub fn user_gradients(&self, user: &PreparedUser) -> Result<(f64, Gradients)> {
        let labels = user.labels.ok_or_else(|| ModelError::Unlabeled(user.user_id.clone()))?;
        let mut tape = Tape::new(&self.params);
        let vars = forward_user(&mut tape, &self.handles, user, &self.config)?;
        let l = loss(&mut tape, vars.probs, &labels)?;
        let value = tape.value(l).item();
        Ok((value, tape.backward(l)?))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Vec<u8> {
        let meta = serde_json::json!({ "config": self.config, "extra": extra });
        encode_checkpoint(&self.params, meta)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<(Self, Manifest)> {
        let (params, manifest) = decode_checkpoint(bytes)?;
        let config: DenConfig = manifest
            .meta
            .get("config")
            .cloned()
            .ok_or_else(|| AutodiffError::Checkpoint("missing config in manifest".into()))
            .and_then(|c| serde_json::from_value(c).map_err(|e| AutodiffError::Checkpoint(e.to_string())))?;
        Ok((Self::from_parts(config, params)?, manifest))
    }

    pub fn load(path: &Path) -> Result<(Self, Manifest)> {
        let bytes = std::fs::read(path).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_checkpoint(&bytes)
    }
}
