//! Labeled synthetic corpus with known signal placement, used for
//! end-to-end checks of the network and its ablations.
//!
//! Trait signals (bit 0 / bit 1):
//!
//! - E/I: lexicon entities from the posemo or the negemo group. Every entity
//!   occurrence is a fresh word (group prefix plus a unique suffix), so a
//!   vocabulary with `min_freq >= 2` maps all of them to UNK and only the
//!   entity graph can see the group. The accompanying embedding file places
//!   each word near a per-group prototype.
//! - S/N: the order of the pair `alpha beta` / `beta alpha` opening each
//!   post. These tokens match no lexicon pattern.
//! - T/F and J/P: an entity group (social / cogmech, achieve / leisure) and a
//!   presence token (`zeta` / `theta`, `kappa` / `sigma`) together.
//!
//! Noise is applied per post: with probability `noise` a trait's signal in
//! that post is drawn from the opposite label. Labels are exactly balanced
//! per trait.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{bits_to_mbti, Labels, RawUser, NUM_TRAITS};

/// Entity prefixes per trait and bit; `None` marks the order-only trait.
pub const ENTITY_GROUPS: [Option<[&[&str]; 2]>; NUM_TRAITS] = [
    Some([&["happi", "joy", "cheer", "delight"], &["sadn", "angr", "hate", "fear", "grief", "hurt"]]),
    None,
    Some([&["friend", "talk", "neighbo"], &["think", "know", "reason", "consider", "ponder"]]),
    Some([&["win", "success", "goal", "achiev", "effort"], &["game", "movie", "sport"]]),
];

pub const ORDER_PAIR: [&str; 2] = ["alpha", "beta"];

pub const PRESENCE_TOKENS: [Option<[&str; 2]>; NUM_TRAITS] =
    [None, None, Some(["zeta", "theta"]), Some(["kappa", "sigma"])];

pub const FILLER: [&str; 40] = [
    "the", "a", "and", "it", "was", "so", "very", "just", "then", "today", "really", "some", "maybe", "still",
    "with", "from", "this", "that", "over", "under", "again", "around", "here", "there", "now", "soon", "often",
    "quite", "rather", "yet", "also", "even", "only", "more", "less", "most", "such", "every", "other", "same",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_users: usize,
    pub posts_per_user: usize,
    pub filler_per_post: usize,
    pub noise: f64,
    /// Width of the emitted entity embeddings.
    pub d_g: usize,
    /// Spread of each word vector around its group prototype.
    pub embedding_spread: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 1,
            n_users: 512,
            posts_per_user: 8,
            filler_per_post: 5,
            noise: 0.1,
            d_g: 16,
            embedding_spread: 0.25,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SynthCorpus {
    pub users: Vec<RawUser>,
    /// GloVe-format text covering every generated entity word.
    pub embeddings: String,
}

fn suffix(mut n: usize) -> String {
    let mut s = [b'a'; 4];
    for slot in s.iter_mut().rev() {
        *slot = b'a' + (n % 26) as u8;
        n /= 26;
    }
    String::from_utf8(s.to_vec()).expect("ascii")
}

fn balanced_bits(n: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut bits: Vec<u8> = (0..n).map(|i| u8::from(i < n / 2)).collect();
    bits.shuffle(rng);
    bits
}

pub fn make_synthetic_corpus(spec: &SynthSpec) -> SynthCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let columns: Vec<Vec<u8>> = (0..NUM_TRAITS).map(|_| balanced_bits(spec.n_users, &mut rng)).collect();

    let mut prototypes = Vec::new();
    for groups in ENTITY_GROUPS.iter().flatten() {
        for _ in groups {
            prototypes.push((0..spec.d_g).map(|_| normal(&mut rng)).collect::<Vec<f64>>());
        }
    }
    let proto_index = |t: usize, bit: u8| {
        ENTITY_GROUPS[..t].iter().flatten().count() * 2 + usize::from(bit)
    };

    let mut counter = 0usize;
    let mut embeddings = String::new();
    let mut users = Vec::with_capacity(spec.n_users);
    for u in 0..spec.n_users {
        let labels: Labels = std::array::from_fn(|t| columns[t][u]);
        let mut posts = Vec::with_capacity(spec.posts_per_user);
        for _ in 0..spec.posts_per_user {
            let bit = |t: usize, rng: &mut ChaCha8Rng| labels[t] ^ u8::from(rng.gen_bool(spec.noise));
            let mut body: Vec<String> = Vec::new();
            let mut order = None;
            for t in 0..NUM_TRAITS {
                let b = bit(t, &mut rng);
                if let Some(groups) = ENTITY_GROUPS[t] {
                    let prefix = groups[usize::from(b)].choose(&mut rng).expect("non-empty group");
                    let word = format!("{prefix}{}", suffix(counter));
                    counter += 1;
                    embeddings.push_str(&word);
                    for &c in &prototypes[proto_index(t, b)] {
                        let v = c + spec.embedding_spread * normal(&mut rng);
                        embeddings.push_str(&format!(" {v:.6}"));
                    }
                    embeddings.push('\n');
                    body.push(word);
                } else {
                    order = Some(b);
                }
                if let Some(tokens) = PRESENCE_TOKENS[t] {
                    body.push(tokens[usize::from(b)].to_string());
                }
            }
            for _ in 0..spec.filler_per_post {
                body.push(FILLER.choose(&mut rng).expect("filler").to_string());
            }
            body.shuffle(&mut rng);
            let pair = if order == Some(0) {
                [ORDER_PAIR[0], ORDER_PAIR[1]]
            } else {
                [ORDER_PAIR[1], ORDER_PAIR[0]]
            };
            posts.push(format!("{} {} {}", pair[0], pair[1], body.join(" ")));
        }
        users.push(RawUser {
            user_id: format!("synth-{u:04}"),
            mbti: Some(bits_to_mbti(&labels)),
            posts,
            post_embeddings: None,
        });
    }
    SynthCorpus { users, embeddings }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{mbti_to_bits, tokenize, write_jsonl};
    use crate::embeddings::EmbeddingTable;
    use crate::harness::metrics::score;
    use crate::lexicon::fixture_lexicon;

    /// Majority vote per trait over the posts, reading the signals directly.
    fn rule_classifier(posts: &[String]) -> Labels {
        let lex = fixture_lexicon();
        let mut votes = [[0usize; 2]; NUM_TRAITS];
        for post in posts {
            let toks = tokenize(post);
            votes[1][usize::from(toks[0] == ORDER_PAIR[1])] += 1;
            for tok in &toks {
                let cats = lex.categories_of(tok);
                let has = |c: &str| cats.contains(c);
                if has("posemo") {
                    votes[0][0] += 1;
                }
                if has("negemo") {
                    votes[0][1] += 1;
                }
                if has("social") {
                    votes[2][0] += 1;
                }
                if has("cogmech") {
                    votes[2][1] += 1;
                }
                if has("achieve") {
                    votes[3][0] += 1;
                }
                if has("leisure") {
                    votes[3][1] += 1;
                }
            }
        }
        votes.map(|[zero, one]| u8::from(one > zero))
    }

    #[test]
    fn noiseless_rule_scores_100() {
        let corpus = make_synthetic_corpus(&SynthSpec {
            noise: 0.0,
            ..SynthSpec::default()
        });
        let golds: Vec<Labels> = corpus.users.iter().map(|u| mbti_to_bits(u.mbti.as_ref().unwrap()).unwrap()).collect();
        let preds: Vec<Labels> = corpus.users.iter().map(|u| rule_classifier(&u.posts)).collect();
        assert_eq!(score(&preds, &golds).unwrap().average, 100.0);
    }

    #[test]
    fn noisy_rule_stays_near_ceiling() {
        let corpus = make_synthetic_corpus(&SynthSpec::default());
        let golds: Vec<Labels> = corpus.users.iter().map(|u| mbti_to_bits(u.mbti.as_ref().unwrap()).unwrap()).collect();
        let preds: Vec<Labels> = corpus.users.iter().map(|u| rule_classifier(&u.posts)).collect();
        let avg = score(&preds, &golds).unwrap().average;
        assert!(avg > 97.0, "{avg}");
    }

    #[test]
    fn labels_are_balanced() {
        for seed in 1..4 {
            let corpus = make_synthetic_corpus(&SynthSpec {
                seed,
                ..SynthSpec::default()
            });
            assert_eq!(corpus.users.len(), 512);
            for t in 0..NUM_TRAITS {
                let pos = corpus
                    .users
                    .iter()
                    .filter(|u| mbti_to_bits(u.mbti.as_ref().unwrap()).unwrap()[t] == 1)
                    .count() as f64
                    / 512.0;
                assert!((0.45..=0.55).contains(&pos), "trait {t}: {pos}");
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = make_synthetic_corpus(&SynthSpec::default());
        let b = make_synthetic_corpus(&SynthSpec::default());
        assert_eq!(write_jsonl(&a.users), write_jsonl(&b.users));
        assert_eq!(a.embeddings, b.embeddings);
        let c = make_synthetic_corpus(&SynthSpec {
            seed: 2,
            ..SynthSpec::default()
        });
        assert_ne!(write_jsonl(&a.users), write_jsonl(&c.users));
    }

    #[test]
    fn signal_tokens_sit_where_expected() {
        let lex = fixture_lexicon();
        for w in FILLER.iter().chain(&ORDER_PAIR).chain(PRESENCE_TOKENS.iter().flatten().flatten()) {
            assert!(!lex.matches(w), "{w} matches the lexicon");
        }
        let spec = SynthSpec {
            n_users: 20,
            ..SynthSpec::default()
        };
        let corpus = make_synthetic_corpus(&spec);
        let table = EmbeddingTable::load_text(&corpus.embeddings, Some(spec.d_g)).unwrap();
        let mut seen = std::collections::HashSet::new();
        for u in &corpus.users {
            for p in &u.posts {
                let toks = tokenize(p);
                assert_eq!(toks.len(), 2 + 3 + 2 + spec.filler_per_post);
                let ents: Vec<&String> = toks.iter().filter(|t| lex.matches(t)).collect();
                assert_eq!(ents.len(), 3);
                for e in ents {
                    assert!(table.contains(e));
                    assert!(seen.insert(e.clone()), "entity word {e} repeats");
                }
            }
        }
    }
}
