//! Variant sweeps under shared splits and seeds.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use super::metrics::{evaluate, MetricsReport};
use super::train::{train, TrainConfig, ValScores};
use super::{prepare_users, HarnessError};
use crate::data::{UserDocument, NUM_TRAITS, TRAIT_NAMES};
use crate::embeddings::EmbeddingTable;
use crate::lexicon::Lexicon;
use crate::model::{Ablation, DenConfig, DenModel, GateMode};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Variant {
    Full,
    NoShort,
    NoLong,
    NoGcn,
    NoInter,
    FullyConnected,
    FixedGate(f64),
    InterLayers(usize),
}

impl Variant {
    pub fn apply(&self, base: &DenConfig) -> Result<DenConfig, HarnessError> {
        let mut cfg = DenConfig {
            ablation: Ablation::None,
            gate_mode: GateMode::Learned,
            ..base.clone()
        };
        match *self {
            Variant::Full => {}
            Variant::NoShort => cfg.ablation = Ablation::NoShort,
            Variant::NoLong => cfg.ablation = Ablation::NoLong,
            Variant::NoGcn => cfg.ablation = Ablation::NoGcn,
            Variant::NoInter => cfg.ablation = Ablation::NoInter,
            Variant::FullyConnected => cfg.ablation = Ablation::FullyConnected,
            Variant::FixedGate(a) => cfg.gate_mode = GateMode::Fixed(a),
            Variant::InterLayers(k) => cfg.inter_layers = k,
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Structural variants, the gate sweep and the interaction-depth sweep.
    pub fn standard_matrix() -> Vec<Variant> {
        let mut v = vec![
            Variant::Full,
            Variant::NoShort,
            Variant::NoLong,
            Variant::NoGcn,
            Variant::NoInter,
            Variant::FullyConnected,
        ];
        v.extend([0.0, 0.25, 0.5, 0.75, 1.0].map(Variant::FixedGate));
        v.extend((1..=4).map(Variant::InterLayers));
        v
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => write!(f, "full"),
            Variant::NoShort => write!(f, "no_short"),
            Variant::NoLong => write!(f, "no_long"),
            Variant::NoGcn => write!(f, "no_gcn"),
            Variant::NoInter => write!(f, "no_inter"),
            Variant::FullyConnected => write!(f, "fully_connected"),
            Variant::FixedGate(a) => write!(f, "fixed_gate({a})"),
            Variant::InterLayers(k) => write!(f, "inter_layers({k})"),
        }
    }
}

impl FromStr for Variant {
    type Err = HarnessError;

    /// Accepts `fixed_gate(0.5)`, `fixed_gate=0.5` and `fixed_gate:0.5`, and
    /// the same forms for `inter_layers`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || HarnessError::UnknownVariant(s.to_string());
        let s_trim = s.trim();
        let (name, arg) = match s_trim.find(['(', '=', ':']) {
            Some(i) => {
                let arg = s_trim[i + 1..].trim_end_matches(')');
                (&s_trim[..i], Some(arg.trim()))
            }
            None => (s_trim, None),
        };
        match (name, arg) {
            ("full" | "none", None) => Ok(Variant::Full),
            ("no_short", None) => Ok(Variant::NoShort),
            ("no_long", None) => Ok(Variant::NoLong),
            ("no_gcn", None) => Ok(Variant::NoGcn),
            ("no_inter", None) => Ok(Variant::NoInter),
            ("fully_connected", None) => Ok(Variant::FullyConnected),
            ("fixed_gate", Some(a)) => {
                let a: f64 = a.parse().map_err(|_| unknown())?;
                if (0.0..=1.0).contains(&a) {
                    Ok(Variant::FixedGate(a))
                } else {
                    Err(unknown())
                }
            }
            ("inter_layers", Some(k)) => k.parse().map(Variant::InterLayers).map_err(|_| unknown()),
            _ => Err(unknown()),
        }
    }
}

/// Documents and resources shared by every variant of a sweep.
pub struct AblationData<'a> {
    pub train: &'a [UserDocument],
    pub val: &'a [UserDocument],
    pub test: &'a [UserDocument],
    pub lexicon: &'a Lexicon,
    pub table: &'a EmbeddingTable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub best_epoch: usize,
    pub val: ValScores,
    pub test: Option<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

pub fn run_variant(
    variant: Variant,
    data: &AblationData,
    base: &DenConfig,
    cfg: &TrainConfig,
) -> Result<(AblationRow, DenModel), HarnessError> {
    let model_cfg = variant.apply(base)?;
    let model = DenModel::new(model_cfg.clone(), cfg.seed)?;
    let train_users = prepare_users(&model_cfg, data.train, data.lexicon, data.table)?;
    let val_users = prepare_users(&model_cfg, data.val, data.lexicon, data.table)?;
    let outcome = train(model, &train_users, &val_users, cfg, |_| {})?;
    let test = if data.test.is_empty() {
        None
    } else {
        let test_users = prepare_users(&model_cfg, data.test, data.lexicon, data.table)?;
        Some(evaluate(&outcome.best, &test_users, cfg.threshold)?)
    };
    let row = AblationRow {
        variant: variant.to_string(),
        best_epoch: outcome.best_epoch,
        val: outcome.best_val,
        test,
    };
    Ok((row, outcome.best))
}

/// Trains and scores each variant with the same splits and seed.
pub fn run_ablation(
    variants: &[Variant],
    data: &AblationData,
    base: &DenConfig,
    cfg: &TrainConfig,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<AblationReport, HarnessError> {
    let mut rows = Vec::with_capacity(variants.len());
    for &v in variants {
        let (row, _) = run_variant(v, data, base, cfg)?;
        on_row(&row);
        rows.push(row);
    }
    Ok(AblationReport { rows })
}

impl AblationReport {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }

    pub fn table(&self) -> String {
        let width = self.rows.iter().map(|r| r.variant.len()).max().unwrap_or(7).max(7) + 2;
        let mut out = format!("{:<width$}{:>6}", "variant", "epoch");
        for name in TRAIT_NAMES {
            out.push_str(&format!("{name:>8}"));
        }
        out.push_str(&format!("{:>9}{:>10}\n", "val_avg", "test_avg"));
        for r in &self.rows {
            out.push_str(&format!("{:<width$}{:>6}", r.variant, r.best_epoch));
            let shown = r.test.as_ref().map_or(r.val.per_trait, |t| t.per_trait);
            for v in shown.iter().take(NUM_TRAITS) {
                out.push_str(&format!("{v:>8.2}"));
            }
            let test = r.test.as_ref().map_or("-".to_string(), |t| format!("{:.2}", t.average));
            out.push_str(&format!("{:>9.2}{:>10}\n", r.val.average, test));
        }
        out
    }

    /// Validation averages of the `inter_layers(k)` rows and their shape.
    pub fn depth_sweep(&self) -> Option<DepthSweep> {
        let points: Vec<(usize, f64)> = self
            .rows
            .iter()
            .filter_map(|r| match r.variant.parse::<Variant>() {
                Ok(Variant::InterLayers(k)) => Some((k, r.val.average)),
                _ => None,
            })
            .collect();
        (!points.is_empty()).then(|| DepthSweep::new(points))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthSweep {
    pub points: Vec<(usize, f64)>,
    pub best_k: usize,
    pub shape: String,
}

impl DepthSweep {
    pub fn new(mut points: Vec<(usize, f64)>) -> Self {
        points.sort_by_key(|p| p.0);
        let best_k = points
            .iter()
            .fold(None::<(usize, f64)>, |acc, &(k, v)| match acc {
                Some((_, bv)) if bv >= v => acc,
                _ => Some((k, v)),
            })
            .map_or(0, |(k, _)| k);
        let steps: Vec<f64> = points.windows(2).map(|w| w[1].1 - w[0].1).collect();
        let shape = if steps.iter().all(|&s| s >= 0.0) {
            "non-decreasing"
        } else if steps.iter().all(|&s| s <= 0.0) {
            "non-increasing"
        } else {
            let best_at = points.iter().position(|p| p.0 == best_k).unwrap_or(0);
            let rising = steps[..best_at].iter().all(|&s| s >= 0.0);
            let falling = steps[best_at..].iter().all(|&s| s <= 0.0);
            if rising && falling {
                "single peak"
            } else {
                "non-monotone"
            }
        };
        Self {
            points,
            best_k,
            shape: shape.to_string(),
        }
    }

    pub fn report(&self) -> String {
        let mut out = String::from("interaction depth sweep (validation average Macro-F1)\n");
        for (k, v) in &self.points {
            out.push_str(&format!("  k={k}: {v:.2}\n"));
        }
        out.push_str(&format!("  best k = {}, shape: {}\n", self.best_k, self.shape));
        out
    }
}
