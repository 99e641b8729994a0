//! Dataset ingestion and preprocessing.
//!
//! The canonical on-disk form is JSONL, one user per line:
//! `{"user_id": "...", "mbti": "INTJ", "posts": ["...", "..."]}` with an
//! optional `post_embeddings` array of per-post vectors for the precomputed
//! encoder.
//!
//! Preprocessing order is tokenize, scrub label words, cap posts and length,
//! split, then build the vocabulary from the training split only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

use crate::lexicon::normalize_token;

pub const NUM_TRAITS: usize = 4;
pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const RESERVED_TOKENS: [&str; 3] = ["[PAD]", "[UNK]", "[CLS]"];
pub const DEFAULT_MIN_FREQ: usize = 2;

/// All 16 type codes, in the order used for per-type reports.
pub const MBTI_CODES: [&str; 16] = [
    "INFP", "INFJ", "INTP", "INTJ", "ISFP", "ISFJ", "ISTP", "ISTJ", "ENFP", "ENFJ", "ENTP", "ENTJ",
    "ESFP", "ESFJ", "ESTP", "ESTJ",
];

/// Letter pairs per trait; the second letter maps to bit 1.
pub const TRAIT_LETTERS: [(char, char); NUM_TRAITS] = [('E', 'I'), ('S', 'N'), ('T', 'F'), ('J', 'P')];
pub const TRAIT_NAMES: [&str; NUM_TRAITS] = ["E/I", "S/N", "T/F", "J/P"];

pub type Labels = [u8; NUM_TRAITS];

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("csv row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("invalid MBTI code {0:?}")]
    InvalidMbti(String),
    #[error("jsonl line {line}: {message}")]
    Json { line: usize, message: String },
    #[error("user {0} has no posts")]
    NoPosts(String),
    #[error("need at least 5 users to split, got {0}")]
    TooFewUsers(usize),
    #[error("split ratios must be non-negative and sum to 1, got {0:?}")]
    BadRatios([f64; 3]),
    #[error("vocabulary line {line}: {message}")]
    Vocab { line: usize, message: String },
}

pub fn mbti_to_bits(code: &str) -> Result<Labels, DataError> {
    let upper: Vec<char> = code.trim().to_uppercase().chars().collect();
    if upper.len() != NUM_TRAITS {
        return Err(DataError::InvalidMbti(code.to_string()));
    }
    let mut bits = [0u8; NUM_TRAITS];
    for (t, (&c, &(zero, one))) in upper.iter().zip(&TRAIT_LETTERS).enumerate() {
        bits[t] = match c {
            c if c == zero => 0,
            c if c == one => 1,
            _ => return Err(DataError::InvalidMbti(code.to_string())),
        };
    }
    Ok(bits)
}

pub fn bits_to_mbti(bits: &Labels) -> String {
    bits.iter()
        .zip(&TRAIT_LETTERS)
        .map(|(&b, &(zero, one))| if b == 0 { zero } else { one })
        .collect()
}

/// A user as stored in the canonical JSONL.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawUser {
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mbti: Option<String>,
    pub posts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub post_embeddings: Option<Vec<Vec<f64>>>,
}

impl RawUser {
    pub fn labels(&self) -> Result<Option<Labels>, DataError> {
        self.mbti.as_deref().map(mbti_to_bits).transpose()
    }
}

/// Reads a Kaggle-style `type,posts` CSV; posts are separated by `|||`.
pub fn import_kaggle_csv(text: &str) -> Result<Vec<RawUser>, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| DataError::Csv {
            row: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::Csv {
                row: 1,
                message: format!("missing column {name:?}"),
            })
    };
    let (type_col, posts_col) = (col("type")?, col("posts")?);
    let mut users = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| DataError::Csv {
            row,
            message: e.to_string(),
        })?;
        let field = |c: usize| {
            record.get(c).ok_or_else(|| DataError::Csv {
                row,
                message: "missing field".into(),
            })
        };
        let code = field(type_col)?.trim().to_uppercase();
        mbti_to_bits(&code)?;
        let posts: Vec<String> = field(posts_col)?
            .split("|||")
            .map(str::trim)
            .filter(|p| !p.is_empty())
            .map(str::to_string)
            .collect();
        let user_id = format!("kaggle-{:05}", i);
        if posts.is_empty() {
            return Err(DataError::NoPosts(user_id));
        }
        users.push(RawUser {
            user_id,
            mbti: Some(code),
            posts,
            post_embeddings: None,
        });
    }
    Ok(users)
}

pub fn read_jsonl(text: &str) -> Result<Vec<RawUser>, DataError> {
    let mut users = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let user: RawUser = serde_json::from_str(line).map_err(|e| DataError::Json {
            line: i + 1,
            message: e.to_string(),
        })?;
        if let Some(code) = &user.mbti {
            mbti_to_bits(code)?;
        }
        users.push(user);
    }
    Ok(users)
}

pub fn write_jsonl(users: &[RawUser]) -> String {
    let mut out = String::new();
    for u in users {
        out.push_str(&serde_json::to_string(u).expect("user serializes"));
        out.push('\n');
    }
    out
}

/// Lowercases, splits on whitespace and strips surrounding punctuation.
pub fn tokenize(post: &str) -> Vec<String> {
    post.split_whitespace().filter_map(normalize_token).collect()
}

/// Drops tokens equal to any of the 16 type codes, plus an optional stoplist.
#[derive(Clone, Debug)]
pub struct LabelScrubber {
    blocked: HashSet<String>,
}

impl Default for LabelScrubber {
    fn default() -> Self {
        Self::new(std::iter::empty::<String>())
    }
}

impl LabelScrubber {
    pub fn new<S: AsRef<str>>(extra: impl IntoIterator<Item = S>) -> Self {
        let mut blocked: HashSet<String> = MBTI_CODES.iter().map(|c| c.to_lowercase()).collect();
        blocked.extend(extra.into_iter().map(|s| s.as_ref().trim().to_lowercase()));
        blocked.remove("");
        Self { blocked }
    }

    /// Stoplist file: one word per line, `#` comments allowed.
    pub fn from_stoplist(text: &str) -> Self {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn is_blocked(&self, token: &str) -> bool {
        self.blocked.contains(&token.to_lowercase())
    }

    pub fn scrub(&self, tokens: Vec<String>) -> Vec<String> {
        tokens.into_iter().filter(|t| !self.is_blocked(t)).collect()
    }
}

pub fn scrub_labels(tokens: Vec<String>) -> Vec<String> {
    LabelScrubber::default().scrub(tokens)
}

/// A user after tokenization and scrubbing.
#[derive(Clone, Debug, PartialEq)]
pub struct TokenizedUser {
    pub user_id: String,
    pub mbti: Option<String>,
    pub posts: Vec<Vec<String>>,
    pub post_embeddings: Option<Vec<Vec<f64>>>,
}

impl TokenizedUser {
    pub fn from_raw(raw: &RawUser, scrubber: &LabelScrubber) -> Result<Self, DataError> {
        if raw.posts.is_empty() {
            return Err(DataError::NoPosts(raw.user_id.clone()));
        }
        raw.labels()?;
        Ok(Self {
            user_id: raw.user_id.clone(),
            mbti: raw.mbti.as_ref().map(|m| m.trim().to_uppercase()),
            posts: raw.posts.iter().map(|p| scrubber.scrub(tokenize(p))).collect(),
            post_embeddings: raw.post_embeddings.clone(),
        })
    }

    /// Back to canonical form with posts as space-joined tokens.
    pub fn to_raw(&self) -> RawUser {
        RawUser {
            user_id: self.user_id.clone(),
            mbti: self.mbti.clone(),
            posts: self.posts.iter().map(|p| p.join(" ")).collect(),
            post_embeddings: self.post_embeddings.clone(),
        }
    }
}

/// Keeps the first `n_max` posts and the first `max_len` tokens of each.
pub fn cap(mut user: TokenizedUser, n_max: usize, max_len: usize) -> TokenizedUser {
    user.posts.truncate(n_max);
    for p in &mut user.posts {
        p.truncate(max_len);
    }
    if let Some(e) = &mut user.post_embeddings {
        e.truncate(n_max);
    }
    user
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// `token<TAB>id` per line, in id order.
    pub fn to_tsv(&self) -> String {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{t}\t{i}\n"))
            .collect()
    }

    pub fn from_tsv(text: &str) -> Result<Self, DataError> {
        let mut tokens = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = |message: &str| DataError::Vocab {
                line: i + 1,
                message: message.to_string(),
            };
            let (tok, id) = line.rsplit_once('\t').ok_or_else(|| bad("expected token<TAB>id"))?;
            let id: usize = id.parse().map_err(|_| bad("bad id"))?;
            if id != tokens.len() {
                return Err(bad("ids must be dense and ascending"));
            }
            tokens.push(tok.to_string());
        }
        if tokens.len() < RESERVED_TOKENS.len()
            || tokens[..RESERVED_TOKENS.len()] != RESERVED_TOKENS.map(String::from)
        {
            return Err(DataError::Vocab {
                line: 1,
                message: "reserved tokens missing".into(),
            });
        }
        Ok(Self::from_tokens(tokens))
    }
}

/// Ids ordered by descending frequency, ties broken lexicographically.
/// Tokens seen fewer than `min_freq` times map to UNK.
pub fn build_vocab(train: &[TokenizedUser], min_freq: usize) -> Vocab {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for u in train {
        for p in &u.posts {
            for t in p {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(t, c)| c >= min_freq.max(1) && !RESERVED_TOKENS.contains(&t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let tokens = RESERVED_TOKENS
        .iter()
        .map(|s| s.to_string())
        .chain(ranked.into_iter().map(|(t, _)| t.to_string()))
        .collect();
    Vocab::from_tokens(tokens)
}

/// Model-ready user.
#[derive(Clone, Debug, PartialEq)]
pub struct UserDocument {
    pub user_id: String,
    pub posts: Vec<Vec<u32>>,
    pub raw_posts: Vec<Vec<String>>,
    pub labels: Option<Labels>,
    pub post_embeddings: Option<Vec<Vec<f64>>>,
}

impl UserDocument {
    pub fn new(user: &TokenizedUser, vocab: &Vocab) -> Result<Self, DataError> {
        if user.posts.is_empty() {
            return Err(DataError::NoPosts(user.user_id.clone()));
        }
        let labels = user.mbti.as_deref().map(mbti_to_bits).transpose()?;
        Ok(Self {
            user_id: user.user_id.clone(),
            posts: user
                .posts
                .iter()
                .map(|p| p.iter().map(|t| vocab.id(t)).collect())
                .collect(),
            raw_posts: user.posts.clone(),
            labels,
            post_embeddings: user.post_embeddings.clone(),
        })
    }

    pub fn mbti(&self) -> Option<String> {
        self.labels.as_ref().map(bits_to_mbti)
    }

    pub fn to_raw(&self) -> RawUser {
        RawUser {
            user_id: self.user_id.clone(),
            mbti: self.mbti(),
            posts: self.raw_posts.iter().map(|p| p.join(" ")).collect(),
            post_embeddings: self.post_embeddings.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.6, 0.2, 0.2];

/// Seeded shuffle (ChaCha8 seeded from `seed`, Fisher-Yates as implemented by
/// `rand` 0.8) followed by partition at `floor(n * ratio)` boundaries.
pub fn split<T>(users: Vec<T>, ratios: [f64; 3], seed: u64) -> Result<Split<T>, DataError> {
    let n = users.len();
    if n < 5 {
        return Err(DataError::TooFewUsers(n));
    }
    if ratios.iter().any(|&r| !(0.0..=1.0).contains(&r)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(DataError::BadRatios(ratios));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * ratios[0] + 1e-9).floor() as usize;
    let n_val = ((n as f64 * ratios[1] + 1e-9).floor() as usize).min(n - n_train);
    let mut slots: Vec<Option<T>> = users.into_iter().map(Some).collect();
    let mut take = |ids: &[usize]| -> Vec<T> { ids.iter().map(|&i| slots[i].take().unwrap()).collect() };
    let train = take(&order[..n_train]);
    let val = take(&order[n_train..n_train + n_val]);
    let test = take(&order[n_train + n_val..]);
    Ok(Split { train, val, test })
}

/// Preprocessing settings shared by `prepare` and training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepareConfig {
    pub n_max: usize,
    pub max_len: usize,
    pub min_freq: usize,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self {
            n_max: 50,
            max_len: 70,
            min_freq: DEFAULT_MIN_FREQ,
            seed: 1,
            ratios: DEFAULT_RATIOS,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PreparedData {
    pub split: Split<TokenizedUser>,
    pub vocab: Vocab,
}

/// Tokenize, scrub, cap, split and build the vocabulary from training users.
pub fn prepare(raw: &[RawUser], scrubber: &LabelScrubber, cfg: &PrepareConfig) -> Result<PreparedData, DataError> {
    let users = raw
        .iter()
        .map(|r| TokenizedUser::from_raw(r, scrubber).map(|u| cap(u, cfg.n_max, cfg.max_len)))
        .collect::<Result<Vec<_>, _>>()?;
    let split = split(users, cfg.ratios, cfg.seed)?;
    let vocab = build_vocab(&split.train, cfg.min_freq);
    Ok(PreparedData { split, vocab })
}

pub fn documents(users: &[TokenizedUser], vocab: &Vocab) -> Result<Vec<UserDocument>, DataError> {
    users.iter().map(|u| UserDocument::new(u, vocab)).collect()
}
