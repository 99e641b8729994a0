//! Word vectors for psychological entities.
//!
//! Vectors come from a GloVe-style text file (`word v1 ... vd` per line).
//! Out-of-vocabulary words get a deterministic unit vector:
//!
//! 1. `h = seed`; for each UTF-8 byte `b` of the word, `h = mix(h ^ b)`,
//!    where `mix` is the SplitMix64 output function applied to
//!    `h + 0x9E3779B97F4A7C15`.
//! 2. A SplitMix64 stream starting at state `h` yields uniforms
//!    `u = ((x >> 11) + 1) / 2^53` in (0, 1].
//! 3. Box-Muller turns consecutive uniform pairs into standard normals.
//! 4. The vector is scaled to unit L2 norm.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use thiserror::Error;

pub const DEFAULT_FALLBACK_SEED: u64 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("line {line}: expected {expected} components, found {found}")]
    DimensionMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: component {value:?} is not a finite number")]
    BadComponent { line: usize, value: String },
    #[error("line {line}: word has no vector components")]
    Empty { line: usize },
    #[error("embedding dimension must be positive")]
    ZeroDim,
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(GOLDEN);
        mix(self.0)
    }

    fn next_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

fn word_key(seed: u64, word: &str) -> u64 {
    word.bytes()
        .fold(seed, |h, b| mix((h ^ u64::from(b)).wrapping_add(GOLDEN)))
}

/// Deterministic unit vector for `word` under `seed`.
pub fn fallback_vector(seed: u64, word: &str, dim: usize) -> Vec<f64> {
    let mut rng = SplitMix64(word_key(seed, word));
    let mut out = Vec::with_capacity(dim + 1);
    while out.len() < dim {
        let u1 = rng.next_unit();
        let u2 = rng.next_unit();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out.push(r * theta.cos());
        out.push(r * theta.sin());
    }
    out.truncate(dim);
    let norm = out.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        // u1 = 1 for every draw; astronomically unlikely
        out[0] = 1.0;
        return out;
    }
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

#[derive(Debug)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
    fallback_seed: u64,
    fallback_hits: AtomicUsize,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            vectors: self.vectors.clone(),
            fallback_seed: self.fallback_seed,
            fallback_hits: AtomicUsize::new(self.fallback_hits()),
        }
    }
}

impl EmbeddingTable {
    /// A table with no stored vectors: every lookup uses the fallback.
    pub fn fallback_only(dim: usize, fallback_seed: u64) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        Ok(Self {
            dim,
            vectors: HashMap::new(),
            fallback_seed,
            fallback_hits: AtomicUsize::new(0),
        })
    }

    /// Parses GloVe text. The dimension is taken from the first line unless
    /// `expected_dim` is given. Repeated words keep their first vector.
    pub fn load_text(text: &str, expected_dim: Option<usize>) -> Result<Self, EmbeddingError> {
        if expected_dim == Some(0) {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut dim = expected_dim;
        let mut vectors = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line_no = i + 1;
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let values = parts
                .map(|p| {
                    p.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| EmbeddingError::BadComponent {
                            line: line_no,
                            value: p.to_string(),
                        })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if values.is_empty() {
                return Err(EmbeddingError::Empty { line: line_no });
            }
            let d = *dim.get_or_insert(values.len());
            if values.len() != d {
                return Err(EmbeddingError::DimensionMismatch {
                    line: line_no,
                    expected: d,
                    found: values.len(),
                });
            }
            vectors.entry(word.to_string()).or_insert(values);
        }
        Ok(Self {
            dim: dim.ok_or(EmbeddingError::ZeroDim)?,
            vectors,
            fallback_seed: DEFAULT_FALLBACK_SEED,
            fallback_hits: AtomicUsize::new(0),
        })
    }

    pub fn with_fallback_seed(mut self, seed: u64) -> Self {
        self.fallback_seed = seed;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fallback_seed(&self) -> u64 {
        self.fallback_seed
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.vectors.contains_key(word)
    }

    /// Number of lookups served by the fallback generator so far.
    pub fn fallback_hits(&self) -> usize {
        self.fallback_hits.load(Ordering::Relaxed)
    }

    pub fn embed(&self, word: &str) -> Vec<f64> {
        match self.vectors.get(word) {
            Some(v) => v.clone(),
            None => {
                self.fallback_hits.fetch_add(1, Ordering::Relaxed);
                fallback_vector(self.fallback_seed, word, self.dim)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn loads_small_file() {
        let t = EmbeddingTable::load_text("a 1.0 0.0\nb 0.0 1.0\n", None).unwrap();
        assert_eq!(t.dim(), 2);
        assert_eq!(t.len(), 2);
        assert_eq!(t.embed("a"), vec![1.0, 0.0]);
        assert_eq!(t.fallback_hits(), 0);
    }

    #[test]
    fn mixed_dimensions_fail_at_second_line() {
        let err = EmbeddingTable::load_text("a 1 0\nb 1 0 0\n", None).unwrap_err();
        assert_eq!(
            err,
            EmbeddingError::DimensionMismatch {
                line: 2,
                expected: 2,
                found: 3
            }
        );
        let err = EmbeddingTable::load_text("a 1 0\n", Some(3)).unwrap_err();
        assert!(matches!(err, EmbeddingError::DimensionMismatch { line: 1, .. }));
    }

    #[test]
    fn non_numeric_component_is_rejected() {
        let err = EmbeddingTable::load_text("a 1 x\n", None).unwrap_err();
        assert!(matches!(err, EmbeddingError::BadComponent { line: 1, .. }));
        assert!(EmbeddingTable::load_text("a 1 nan\n", None).is_err());
        assert!(EmbeddingTable::load_text("a\n", None).is_err());
    }

    #[test]
    fn fifty_dim_file_lookups_match_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut text = String::new();
        for w in 0..100 {
            text.push_str(&format!("w{w}"));
            for _ in 0..50 {
                text.push_str(&format!(" {}", rng.gen_range(-2.0..2.0)));
            }
            text.push('\n');
        }
        let table = EmbeddingTable::load_text(&text, Some(50)).unwrap();
        // independent re-read of each line
        for line in text.lines() {
            let mut parts = line.split(' ');
            let word = parts.next().unwrap();
            let expected: Vec<f64> = parts.map(|p| p.parse().unwrap()).collect();
            assert_eq!(table.embed(word), expected);
        }
        assert_eq!(table.fallback_hits(), 0);
    }

    #[test]
    fn fallback_is_deterministic_unit_and_seeded() {
        let t = EmbeddingTable::fallback_only(50, 7).unwrap();
        let a = t.embed("zzz-oov");
        let b = t.embed("zzz-oov");
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-12);
        assert_eq!(t.fallback_hits(), 2);

        let other = EmbeddingTable::fallback_only(50, 8).unwrap();
        assert_ne!(other.embed("zzz-oov"), a);
        assert_ne!(t.embed("zzz-oow"), a);
    }

    #[test]
    fn fallback_independent_of_lookup_order() {
        let t1 = EmbeddingTable::fallback_only(7, 3).unwrap();
        let t2 = EmbeddingTable::fallback_only(7, 3).unwrap();
        let words = ["alpha", "beta", "gamma", "delta"];
        let forward: Vec<_> = words.iter().map(|w| t1.embed(w)).collect();
        let mut backward: Vec<_> = words.iter().rev().map(|w| t2.embed(w)).collect();
        backward.reverse();
        assert_eq!(forward, backward);
        for d in [1, 2, 3, 16] {
            let v = fallback_vector(1, "x", d);
            assert_eq!(v.len(), d);
            assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn in_vocab_lookups_skip_fallback() {
        let t = EmbeddingTable::load_text("a 1 0\n", None).unwrap();
        t.embed("a");
        t.embed("a");
        assert_eq!(t.fallback_hits(), 0);
        t.embed("b");
        assert_eq!(t.fallback_hits(), 1);
    }
}
