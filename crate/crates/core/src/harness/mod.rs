//! Training, evaluation, ablation sweeps and the synthetic corpus.

pub mod ablation;
pub mod gradsuite;
pub mod metrics;
pub mod synth;
pub mod train;

pub use ablation::{run_ablation, run_variant, AblationData, AblationReport, AblationRow, DepthSweep, Variant};
pub use gradsuite::gradient_suite;
pub use metrics::{evaluate, macro_f1, predict_all, predictions_to_bits, score, MetricsReport, TypeRow};
pub use synth::{make_synthetic_corpus, SynthCorpus, SynthSpec};
pub use train::{history_jsonl, train, train_step, EpochRecord, TrainConfig, TrainOutcome, ValScores};

use rayon::prelude::*;
use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::data::{documents, prepare, DataError, LabelScrubber, PrepareConfig, RawUser, UserDocument, Vocab};
use crate::embeddings::EmbeddingTable;
use crate::lexicon::Lexicon;
use crate::model::{prepare_user, DenConfig, ModelError, PreparedUser};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{preds} predictions for {golds} gold labels")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("empty split")]
    EmptySplit,
    #[error("labels must be 0 or 1")]
    NonBinary,
    #[error("user {0} has no labels")]
    Unlabeled(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: {detail}")]
    Diverged { epoch: usize, batch: usize, detail: String },
    #[error("unknown variant {0:?}")]
    UnknownVariant(String),
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

impl From<AutodiffError> for HarnessError {
    fn from(e: AutodiffError) -> Self {
        HarnessError::Model(e.into())
    }
}

/// Builds graphs for each document, in order.
pub fn prepare_users(
    cfg: &DenConfig,
    docs: &[UserDocument],
    lexicon: &Lexicon,
    table: &EmbeddingTable,
) -> Result<Vec<PreparedUser>, HarnessError> {
    docs.par_iter()
        .map(|d| prepare_user(d, lexicon, table, cfg).map_err(HarnessError::from))
        .collect()
}

/// Split documents and the training vocabulary.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub train: Vec<UserDocument>,
    pub val: Vec<UserDocument>,
    pub test: Vec<UserDocument>,
    pub vocab: Vocab,
}

pub fn build_corpus(raw: &[RawUser], scrubber: &LabelScrubber, cfg: &PrepareConfig) -> Result<Corpus, HarnessError> {
    let prepared = prepare(raw, scrubber, cfg)?;
    let s = &prepared.split;
    Ok(Corpus {
        train: documents(&s.train, &prepared.vocab)?,
        val: documents(&s.val, &prepared.vocab)?,
        test: documents(&s.test, &prepared.vocab)?,
        vocab: prepared.vocab,
    })
}
