//! Macro-F1 and evaluation reports. All scores are percentages.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::data::{bits_to_mbti, Labels, MBTI_CODES, NUM_TRAITS, TRAIT_NAMES};
use crate::model::{DenModel, PreparedUser};

fn f1(tp: usize, fp: usize, fneg: usize) -> f64 {
    let denom = 2 * tp + fp + fneg;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Unweighted mean of the F1 of class 0 and class 1, in percent. A class
/// that appears in neither list scores 0.
pub fn macro_f1(preds: &[u8], golds: &[u8]) -> Result<f64, HarnessError> {
    if preds.len() != golds.len() {
        return Err(HarnessError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(HarnessError::EmptySplit);
    }
    let mut counts = [[0usize; 2]; 2];
    for (&p, &g) in preds.iter().zip(golds) {
        if p > 1 || g > 1 {
            return Err(HarnessError::NonBinary);
        }
        counts[usize::from(g)][usize::from(p)] += 1;
    }
    // F1_c = 2 tp_c / d_c; the mean over both classes is reduced to one
    // integer fraction so the result is the correctly rounded value
    let tp = |c: usize| counts[c][c] as u64;
    let d = |c: usize| (2 * counts[c][c] + counts[1 - c][c] + counts[c][1 - c]).max(1) as u64;
    let num = 100 * (tp(0) * d(1) + tp(1) * d(0));
    Ok(num as f64 / (d(0) * d(1)) as f64)
}

/// F1 of the positive class only, in percent.
pub fn positive_f1(preds: &[bool], golds: &[bool]) -> f64 {
    let tp = preds.iter().zip(golds).filter(|(p, g)| **p && **g).count();
    let fp = preds.iter().zip(golds).filter(|(p, g)| **p && !**g).count();
    let fneg = preds.iter().zip(golds).filter(|(p, g)| !**p && **g).count();
    100.0 * f1(tp, fp, fneg)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub code: String,
    /// One-vs-rest Macro-F1 on full type codes.
    pub macro_f1: f64,
    /// F1 of the "is this type" class alone.
    pub positive_f1: f64,
    /// Share of gold users with this code, percent.
    pub support: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_trait: [f64; NUM_TRAITS],
    pub average: f64,
    pub types: Vec<TypeRow>,
}

impl MetricsReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        for (name, v) in TRAIT_NAMES.iter().zip(&self.per_trait) {
            out.push_str(&format!("{name:<8}{v:>8.2}\n"));
        }
        out.push_str(&format!("{:<8}{:>8.2}\n", "Average", self.average));
        out
    }

    pub fn type_table(&self) -> String {
        let mut out = format!("{:<6}{:>12}{:>12}{:>10}\n", "type", "macro_f1", "pos_f1", "support%");
        for r in &self.types {
            out.push_str(&format!(
                "{:<6}{:>12.2}{:>12.2}{:>10.2}\n",
                r.code, r.macro_f1, r.positive_f1, r.support
            ));
        }
        out
    }
}

pub fn predictions_to_bits(probs: &[f64], threshold: f64) -> Labels {
    let mut bits = [0u8; NUM_TRAITS];
    for (b, &p) in bits.iter_mut().zip(probs) {
        *b = u8::from(p >= threshold);
    }
    bits
}

/// Scores predicted bit vectors against gold ones.
pub fn score(preds: &[Labels], golds: &[Labels]) -> Result<MetricsReport, HarnessError> {
    if preds.len() != golds.len() {
        return Err(HarnessError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(HarnessError::EmptySplit);
    }
    let mut per_trait = [0.0; NUM_TRAITS];
    for (t, slot) in per_trait.iter_mut().enumerate() {
        let p: Vec<u8> = preds.iter().map(|b| b[t]).collect();
        let g: Vec<u8> = golds.iter().map(|b| b[t]).collect();
        *slot = macro_f1(&p, &g)?;
    }
    let average = per_trait.iter().sum::<f64>() / NUM_TRAITS as f64;
    let pred_codes: Vec<String> = preds.iter().map(bits_to_mbti).collect();
    let gold_codes: Vec<String> = golds.iter().map(bits_to_mbti).collect();
    let n = golds.len() as f64;
    let types = MBTI_CODES
        .iter()
        .map(|&code| {
            let p: Vec<bool> = pred_codes.iter().map(|c| c == code).collect();
            let g: Vec<bool> = gold_codes.iter().map(|c| c == code).collect();
            let pb: Vec<u8> = p.iter().map(|&x| u8::from(x)).collect();
            let gb: Vec<u8> = g.iter().map(|&x| u8::from(x)).collect();
            Ok(TypeRow {
                code: code.to_string(),
                macro_f1: macro_f1(&pb, &gb)?,
                positive_f1: positive_f1(&p, &g),
                support: 100.0 * g.iter().filter(|&&x| x).count() as f64 / n,
            })
        })
        .collect::<Result<_, HarnessError>>()?;
    Ok(MetricsReport {
        per_trait,
        average,
        types,
    })
}

/// Per-user probabilities, in input order.
pub fn predict_all(model: &DenModel, users: &[PreparedUser]) -> Result<Vec<Vec<f64>>, HarnessError> {
    users
        .par_iter()
        .map(|u| model.predict_user(u).map_err(HarnessError::from))
        .collect()
}

pub fn evaluate(model: &DenModel, users: &[PreparedUser], threshold: f64) -> Result<MetricsReport, HarnessError> {
    if users.is_empty() {
        return Err(HarnessError::EmptySplit);
    }
    let golds = users
        .iter()
        .map(|u| u.labels.ok_or_else(|| HarnessError::Unlabeled(u.user_id.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let preds: Vec<Labels> = predict_all(model, users)?
        .iter()
        .map(|p| predictions_to_bits(p, threshold))
        .collect();
    score(&preds, &golds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Confusion counts by brute force, then per-class precision and recall.
    fn oracle(preds: &[u8], golds: &[u8]) -> f64 {
        let mut total = 0.0;
        for c in 0..2u8 {
            let tp = (0..preds.len()).filter(|&i| preds[i] == c && golds[i] == c).count() as f64;
            let pp = preds.iter().filter(|&&p| p == c).count() as f64;
            let gp = golds.iter().filter(|&&g| g == c).count() as f64;
            let prec = if pp == 0.0 { 0.0 } else { tp / pp };
            let rec = if gp == 0.0 { 0.0 } else { tp / gp };
            total += if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
        }
        100.0 * total / 2.0
    }

    #[test]
    fn hand_cases() {
        assert_eq!(macro_f1(&[1, 0, 1], &[1, 0, 1]).unwrap(), 100.0);
        assert_eq!(macro_f1(&[1, 1, 0, 0], &[1, 0, 1, 0]).unwrap(), 50.0);
        // constant predictor on a balanced trait
        let m = macro_f1(&[1, 1, 1, 1], &[1, 1, 0, 0]).unwrap();
        assert!((m - 100.0 / 3.0).abs() < 1e-12);
        // class 0 absent everywhere contributes 0
        assert_eq!(macro_f1(&[1, 1], &[1, 1]).unwrap(), 50.0);
        assert!(matches!(macro_f1(&[1], &[1, 0]), Err(HarnessError::LengthMismatch { .. })));
        assert!(matches!(macro_f1(&[], &[]), Err(HarnessError::EmptySplit)));
    }

    #[test]
    fn matches_confusion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let p: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let g: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            let got = macro_f1(&p, &g).unwrap();
            assert!((got - oracle(&p, &g)).abs() <= 1e-12, "{p:?} {g:?}");
        }
    }

    #[test]
    fn type_table_support_sums_to_100() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let golds: Vec<Labels> = (0..37).map(|_| [0; 4].map(|_| rng.gen_range(0..2))).collect();
        let preds: Vec<Labels> = (0..37).map(|_| [0; 4].map(|_| rng.gen_range(0..2))).collect();
        let r = score(&preds, &golds).unwrap();
        assert_eq!(r.types.len(), 16);
        let total: f64 = r.types.iter().map(|t| t.support).sum();
        assert!((total - 100.0).abs() <= 1e-9);
        assert!((r.average - r.per_trait.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        assert!(r.types.iter().all(|t| (0.0..=100.0).contains(&t.macro_f1)));
    }

    #[test]
    fn perfect_single_user() {
        let r = score(&[[1, 0, 1, 1]], &[[1, 0, 1, 1]]).unwrap();
        // one class per trait is absent, so each trait scores 50
        assert_eq!(r.per_trait, [50.0; 4]);
        let r = score(&[[1, 0, 1, 1], [0, 1, 0, 0]], &[[1, 0, 1, 1], [0, 1, 0, 0]]).unwrap();
        assert_eq!(r.average, 100.0);
        let row = r.types.iter().find(|t| t.code == "ISFP").unwrap();
        assert_eq!((row.positive_f1, row.support), (100.0, 50.0));
        let absent = r.types.iter().find(|t| t.code == "INTP").unwrap();
        assert_eq!((absent.macro_f1, absent.positive_f1, absent.support), (50.0, 0.0, 0.0));
    }

    proptest! {
        #[test]
        fn symmetric_under_relabeling(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..60)) {
            let (p, g): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let pf: Vec<u8> = p.iter().map(|x| 1 - x).collect();
            let gf: Vec<u8> = g.iter().map(|x| 1 - x).collect();
            prop_assert_eq!(macro_f1(&p, &g).unwrap(), macro_f1(&pf, &gf).unwrap());
        }
    }
}
