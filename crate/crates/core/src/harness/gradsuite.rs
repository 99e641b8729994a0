//! End-to-end finite-difference check of the training loss on a tiny
//! built-in instance: at most 4 entities, 3 posts and width 8.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckConfig, GradCheckReport, Tape, Var};
use crate::data::{build_vocab, LabelScrubber, RawUser, TokenizedUser, UserDocument};
use crate::embeddings::EmbeddingTable;
use crate::lexicon::fixture_lexicon;
use super::HarnessError;
use crate::model::{forward_user, loss, DenConfig, DenModel, PreparedUser};

const USERS: [(&str, &[&str]); 2] = [
    ("INTJ", &["love my friend", "work hard", "happy"]),
    ("ESFP", &["the cat sat", "on the mat"]),
];

/// Shape of the instance checked by [`gradient_suite`].
pub fn suite_config(vocab_size: usize) -> DenConfig {
    DenConfig {
        d: 8,
        d_g: 6,
        max_len: 12,
        n_max: 5,
        attention_heads: 2,
        ff_dim: 6,
        vocab_size,
        ..DenConfig::default()
    }
}

/// Checks every parameter of the full network under `variant`'s switches,
/// with parameters drawn uniformly from (-0.5, 0.5) under `seed`.
pub fn gradient_suite(variant: &DenConfig, seed: u64) -> Result<GradCheckReport, HarnessError> {
    let scrub = LabelScrubber::default();
    let users: Vec<TokenizedUser> = USERS
        .iter()
        .enumerate()
        .map(|(i, (code, posts))| {
            let raw = RawUser {
                user_id: format!("g{i}"),
                mbti: Some(code.to_string()),
                posts: posts.iter().map(|s| s.to_string()).collect(),
                post_embeddings: None,
            };
            TokenizedUser::from_raw(&raw, &scrub)
        })
        .collect::<Result<_, _>>()?;
    let vocab = build_vocab(&users, 1);
    let cfg = DenConfig {
        ablation: variant.ablation,
        gate_mode: variant.gate_mode,
        self_loops: variant.self_loops,
        ..suite_config(vocab.len())
    };
    let mut model = DenModel::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params.iter_mut() {
        for v in p.value.data_mut() {
            *v = rng.gen_range(-0.5..0.5);
        }
    }
    let lexicon = fixture_lexicon();
    let table = EmbeddingTable::fallback_only(cfg.d_g, 1).expect("positive width");
    let prepared: Vec<PreparedUser> = users
        .iter()
        .map(|u| {
            let doc = UserDocument::new(u, &vocab)?;
            Ok(model.prepare(&doc, &lexicon, &table)?)
        })
        .collect::<Result<_, HarnessError>>()?;
    let model = DenModel::from_parts(cfg.clone(), model.params)?;
    let handles = model.handles().clone();
    let mut params = model.params;
    grad_check(
        &mut params,
        |tape: &mut Tape| -> Result<Var, HarnessError> {
            let mut total: Option<Var> = None;
            for u in &prepared {
                let vars = forward_user(tape, &handles, u, &cfg)?;
                let labels = u.labels.ok_or_else(|| HarnessError::Unlabeled(u.user_id.clone()))?;
                let l = loss(tape, vars.probs, &labels)?;
                total = Some(match total {
                    None => l,
                    Some(t) => tape.add(t, l)?,
                });
            }
            total.ok_or(HarnessError::EmptySplit)
        },
        GradCheckConfig::default(),
        |_| true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn built_in_instance_passes() {
        let report = gradient_suite(&DenConfig::default(), 3).unwrap();
        assert!(report.passed(), "{:?}", report.failures.first());
        assert!(report.per_param.iter().any(|p| p.param == "sentinel"));
        assert!(report.per_param.iter().any(|p| p.param == "enc.tok"));
    }
}
