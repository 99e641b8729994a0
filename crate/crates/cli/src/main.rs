use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use den_core::data::{
    bits_to_mbti, cap, import_kaggle_csv, prepare, read_jsonl, write_jsonl, LabelScrubber, PrepareConfig,
    TokenizedUser, UserDocument, Vocab,
};
use den_core::embeddings::{EmbeddingTable, DEFAULT_FALLBACK_SEED};
use den_core::harness::{
    evaluate, gradient_suite, make_synthetic_corpus, predict_all, predictions_to_bits, prepare_users,
    run_ablation, train, AblationData, SynthSpec, TrainConfig, Variant,
};
use den_core::lexicon::{fixture_lexicon, Lexicon};
use den_core::model::{DenConfig, DenModel, EncoderKind};
use den_core::Error;

type Result<T> = std::result::Result<T, Error>;

#[derive(Parser)]
#[command(name = "den", version, about = "Personality detection from user posts with dual graph views")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a raw corpus to JSONL.
    Import(ImportArgs),
    /// Scrub, cap, split and build the vocabulary.
    Prepare(PrepareArgs),
    /// Train and keep the best validation checkpoint.
    Train(TrainArgs),
    /// Score a checkpoint on a labeled split.
    Eval(EvalArgs),
    /// Per-user trait probabilities and type codes.
    Predict(PredictArgs),
    /// Train and compare model variants.
    Ablate(AblateArgs),
    /// Finite-difference check of the full loss gradient.
    GradCheck(GradCheckArgs),
    /// Write the labeled synthetic corpus and its embeddings.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ImportFormat {
    KaggleCsv,
    Jsonl,
}

#[derive(Args)]
struct ImportArgs {
    #[arg(long, value_enum)]
    format: ImportFormat,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Optional JSON file with `model`, `train` and `prepare` sections.
#[derive(Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    model: DenConfig,
    train: TrainConfig,
    prepare: PrepareConfig,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ConfigFile> {
        let mut cfg = match &self.config {
            Some(path) => serde_json::from_str(&read(path)?).map_err(|e| Error::Parse {
                path: path.clone(),
                message: e.to_string(),
            })?,
            None => ConfigFile::default(),
        };
        let seed = self.seed.unwrap_or(1);
        if self.seed.is_some() || self.config.is_none() {
            cfg.train.seed = seed;
            cfg.prepare.seed = seed;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct PrepareFlags {
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    min_freq: Option<usize>,
    /// Train, validation and test shares, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 3)]
    ratios: Option<Vec<f64>>,
}

#[derive(Args)]
struct PrepareArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    flags: PrepareFlags,
    #[arg(long)]
    input: PathBuf,
    /// Output directory for train/val/test.jsonl and vocab.tsv.
    #[arg(long)]
    out: PathBuf,
    /// Extra tokens to remove, one per line.
    #[arg(long)]
    stoplist: Option<PathBuf>,
}

#[derive(Args)]
struct ModelFlags {
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    dg: Option<usize>,
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long)]
    gcn_layers: Option<usize>,
    #[arg(long)]
    inter_layers: Option<usize>,
    #[arg(long)]
    leaky_slope: Option<f64>,
    /// toy_attention or precomputed.
    #[arg(long, value_parser = parse_encoder)]
    encoder: Option<EncoderKind>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    ff_dim: Option<usize>,
    #[arg(long)]
    no_self_loops: bool,
    /// Variant switch, e.g. no_long or fixed_gate(0.25).
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

fn parse_encoder(s: &str) -> std::result::Result<EncoderKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    s.parse().map_err(|e: den_core::harness::HarnessError| e.to_string())
}

impl ModelFlags {
    fn apply(&self, mut cfg: DenConfig) -> Result<DenConfig> {
        let set = |slot: &mut usize, v: Option<usize>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.d, self.d);
        set(&mut cfg.d_g, self.dg);
        set(&mut cfg.max_len, self.max_len);
        set(&mut cfg.n_max, self.n_max);
        set(&mut cfg.gcn_layers, self.gcn_layers);
        set(&mut cfg.inter_layers, self.inter_layers);
        set(&mut cfg.attention_heads, self.heads);
        set(&mut cfg.ff_dim, self.ff_dim);
        if let Some(s) = self.leaky_slope {
            cfg.leaky_slope = s;
        }
        if let Some(e) = self.encoder {
            cfg.encoder = e;
        }
        if self.no_self_loops {
            cfg.self_loops = false;
        }
        if let Some(v) = self.variant {
            cfg = v.apply(&cfg)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainFlags {
    #[arg(long)]
    lr_encoder: Option<f64>,
    #[arg(long)]
    lr_other: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
}

impl TrainFlags {
    fn apply(&self, mut cfg: TrainConfig) -> TrainConfig {
        if let Some(v) = self.lr_encoder {
            cfg.lr_encoder = v;
        }
        if let Some(v) = self.lr_other {
            cfg.lr_other = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.epochs {
            cfg.max_epochs = v;
        }
        if let Some(v) = self.threshold {
            cfg.threshold = v;
        }
        cfg
    }
}

#[derive(Args)]
struct Resources {
    /// LIWC-style .dic file. Defaults to the bundled fixture lexicon.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// GloVe text file. Without it every word gets a fallback vector.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_FALLBACK_SEED)]
    fallback_seed: u64,
}

impl Resources {
    fn lexicon(&self) -> Result<Lexicon> {
        match &self.lexicon {
            Some(p) => Ok(Lexicon::parse_dic(&read(p)?)?),
            None => Ok(fixture_lexicon()),
        }
    }

    /// The embedding file fixes the width unless `expected` is given, in
    /// which case the two must agree.
    fn table(&self, expected: Option<usize>, fallback_dim: usize) -> Result<EmbeddingTable> {
        let table = match &self.embeddings {
            Some(p) => EmbeddingTable::load_text(&read(p)?, expected)?,
            None => EmbeddingTable::fallback_only(expected.unwrap_or(fallback_dim), self.fallback_seed)?,
        };
        Ok(table.with_fallback_seed(self.fallback_seed))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    resources: Resources,
    /// Directory written by `prepare`.
    #[arg(long)]
    data: PathBuf,
    /// Receives history.jsonl and model.ckpt.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    /// Also print the 16-type table.
    #[arg(long)]
    types: bool,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    resources: Resources,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// JSONL output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    resources: Resources,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    model: ModelFlags,
    #[command(flatten)]
    train: TrainFlags,
    #[command(flatten)]
    resources: Resources,
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated variants. Defaults to the full matrix.
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<Variant>,
    /// Receives ablation.json and ablation.txt.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    #[arg(long)]
    no_self_loops: bool,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 512)]
    users: usize,
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 8)]
    posts: usize,
    #[arg(long, default_value_t = 5)]
    filler: usize,
    #[arg(long, default_value_t = 16)]
    dg: usize,
    /// Receives corpus.jsonl and embeddings.txt.
    #[arg(long)]
    out: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    Ok(Vocab::from_tsv(&read(path)?)?)
}

/// Reads a JSONL split and maps it onto `vocab` under the model's caps.
fn load_docs(path: &Path, vocab: &Vocab, cfg: &DenConfig) -> Result<Vec<UserDocument>> {
    let scrubber = LabelScrubber::default();
    read_jsonl(&read(path)?)?
        .iter()
        .map(|raw| {
            let user = cap(TokenizedUser::from_raw(raw, &scrubber)?, cfg.n_max, cfg.max_len);
            Ok(UserDocument::new(&user, vocab)?)
        })
        .collect()
}

fn run_import(a: ImportArgs) -> Result<()> {
    let text = read(&a.input)?;
    let users = match a.format {
        ImportFormat::KaggleCsv => import_kaggle_csv(&text)?,
        ImportFormat::Jsonl => read_jsonl(&text)?,
    };
    write(&a.out, write_jsonl(&users))?;
    eprintln!("imported {} users", users.len());
    Ok(())
}

fn run_prepare(a: PrepareArgs) -> Result<()> {
    let mut cfg = a.common.load()?.prepare;
    let f = &a.flags;
    if let Some(v) = f.n_max {
        cfg.n_max = v;
    }
    if let Some(v) = f.max_len {
        cfg.max_len = v;
    }
    if let Some(v) = f.min_freq {
        cfg.min_freq = v;
    }
    if let Some(r) = &f.ratios {
        cfg.ratios = [r[0], r[1], r[2]];
    }
    let scrubber = match &a.stoplist {
        Some(p) => LabelScrubber::from_stoplist(&read(p)?),
        None => LabelScrubber::default(),
    };
    let raw = read_jsonl(&read(&a.input)?)?;
    let prepared = prepare(&raw, &scrubber, &cfg)?;
    let s = &prepared.split;
    for (name, users) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
        let raw: Vec<_> = users.iter().map(TokenizedUser::to_raw).collect();
        write(&a.out.join(format!("{name}.jsonl")), write_jsonl(&raw))?;
    }
    write(&a.out.join("vocab.tsv"), prepared.vocab.to_tsv())?;
    eprintln!(
        "train {} / val {} / test {}, vocabulary {}",
        s.train.len(),
        s.val.len(),
        s.test.len(),
        prepared.vocab.len()
    );
    Ok(())
}

/// Model configuration, embedding table and documents for a prepared
/// data directory.
struct Loaded {
    cfg: DenConfig,
    table: EmbeddingTable,
    lexicon: Lexicon,
    vocab: Vocab,
}

fn load_setup(file: &ConfigFile, flags: &ModelFlags, res: &Resources, data: &Path) -> Result<Loaded> {
    let mut cfg = flags.apply(file.model.clone())?;
    let vocab = load_vocab(&data.join("vocab.tsv"))?;
    cfg.vocab_size = vocab.len();
    let table = res.table(flags.dg, cfg.d_g)?;
    cfg.d_g = table.dim();
    cfg.validate()?;
    Ok(Loaded {
        cfg,
        table,
        lexicon: res.lexicon()?,
        vocab,
    })
}

fn run_train(a: TrainArgs) -> Result<()> {
    let file = a.common.load()?;
    let tcfg = a.train.apply(file.train.clone());
    tcfg.validate()?;
    let l = load_setup(&file, &a.model, &a.resources, &a.data)?;
    let train_docs = load_docs(&a.data.join("train.jsonl"), &l.vocab, &l.cfg)?;
    let val_docs = load_docs(&a.data.join("val.jsonl"), &l.vocab, &l.cfg)?;
    let train_users = prepare_users(&l.cfg, &train_docs, &l.lexicon, &l.table)?;
    let val_users = prepare_users(&l.cfg, &val_docs, &l.lexicon, &l.table)?;
    let model = DenModel::new(l.cfg.clone(), tcfg.seed)?;
    let outcome = train(model, &train_users, &val_users, &tcfg, |r| {
        eprintln!(
            "epoch {:>3}  loss {:.6}  val {:.2}{}",
            r.epoch,
            r.train_loss,
            r.val.average,
            if r.improved { "  *" } else { "" }
        );
    })?;
    let extra = serde_json::json!({
        "best_epoch": outcome.best_epoch,
        "train": tcfg,
        "vocab": l.vocab.to_tsv(),
    });
    write(&a.out.join("history.jsonl"), outcome.history_jsonl())?;
    write(&a.out.join("model.ckpt"), outcome.best.to_checkpoint(extra))?;
    println!("best epoch {}", outcome.best_epoch);
    let val = &outcome.best_val;
    for (name, v) in den_core::data::TRAIT_NAMES.iter().zip(&val.per_trait) {
        println!("{name:<8}{v:>8.2}");
    }
    println!("{:<8}{:>8.2}", "Average", val.average);
    Ok(())
}

/// Checkpointed model plus the vocabulary stored alongside it.
fn load_checkpoint(path: &Path) -> Result<(DenModel, Vocab)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (model, manifest) = DenModel::from_checkpoint(&bytes)?;
    let vocab = manifest
        .meta
        .pointer("/extra/vocab")
        .and_then(|v| v.as_str())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            message: "checkpoint carries no vocabulary".into(),
        })?;
    Ok((model, Vocab::from_tsv(vocab)?))
}

fn run_eval(a: EvalArgs) -> Result<()> {
    let (model, vocab) = load_checkpoint(&a.checkpoint)?;
    let cfg = &model.config;
    let table = a.resources.table(Some(cfg.d_g), cfg.d_g)?;
    let docs = load_docs(&a.input, &vocab, cfg)?;
    let users = prepare_users(cfg, &docs, &a.resources.lexicon()?, &table)?;
    let report = evaluate(&model, &users, a.threshold.unwrap_or(0.5))?;
    print!("{}", report.table());
    if a.types {
        println!();
        print!("{}", report.type_table());
    }
    if let Some(p) = &a.json {
        write(p, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    user_id: &'a str,
    probs: &'a [f64],
    mbti: String,
}

fn run_predict(a: PredictArgs) -> Result<()> {
    let (model, vocab) = load_checkpoint(&a.checkpoint)?;
    let cfg = &model.config;
    let table = a.resources.table(Some(cfg.d_g), cfg.d_g)?;
    let docs = load_docs(&a.input, &vocab, cfg)?;
    let users = prepare_users(cfg, &docs, &a.resources.lexicon()?, &table)?;
    let threshold = a.threshold.unwrap_or(0.5);
    let probs = predict_all(&model, &users)?;
    let mut out = String::new();
    for (u, p) in users.iter().zip(&probs) {
        let line = Prediction {
            user_id: &u.user_id,
            probs: p,
            mbti: bits_to_mbti(&predictions_to_bits(p, threshold)),
        };
        out.push_str(&serde_json::to_string(&line).expect("prediction serializes"));
        out.push('\n');
    }
    match &a.out {
        Some(p) => write(p, out),
        None => std::io::stdout()
            .write_all(out.as_bytes())
            .map_err(|e| Error::io("<stdout>", e)),
    }
}

fn run_ablate(a: AblateArgs) -> Result<()> {
    let file = a.common.load()?;
    let tcfg = a.train.apply(file.train.clone());
    tcfg.validate()?;
    let l = load_setup(&file, &a.model, &a.resources, &a.data)?;
    let train_docs = load_docs(&a.data.join("train.jsonl"), &l.vocab, &l.cfg)?;
    let val_docs = load_docs(&a.data.join("val.jsonl"), &l.vocab, &l.cfg)?;
    let test_path = a.data.join("test.jsonl");
    let test_docs = if test_path.exists() {
        load_docs(&test_path, &l.vocab, &l.cfg)?
    } else {
        Vec::new()
    };
    let variants = if a.variants.is_empty() {
        Variant::standard_matrix()
    } else {
        a.variants.clone()
    };
    let data = AblationData {
        train: &train_docs,
        val: &val_docs,
        test: &test_docs,
        lexicon: &l.lexicon,
        table: &l.table,
    };
    let report = run_ablation(&variants, &data, &l.cfg, &tcfg, |row| {
        eprintln!("{:<18} val {:.2}", row.variant, row.val.average);
    })?;
    let mut text = report.table();
    if let Some(sweep) = report.depth_sweep() {
        text.push('\n');
        text.push_str(&sweep.report());
    }
    print!("{text}");
    if let Some(dir) = &a.out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
        write(&dir.join("ablation.json"), json)?;
        write(&dir.join("ablation.txt"), &text)?;
    }
    Ok(())
}

fn run_grad_check(a: GradCheckArgs) -> Result<()> {
    let mut cfg = DenConfig::default();
    if let Some(v) = a.variant {
        cfg = v.apply(&cfg)?;
    }
    cfg.self_loops = !a.no_self_loops;
    let report = gradient_suite(&cfg, a.seed)?;
    for p in &report.per_param {
        println!("{:<14}{:>6}  {:.3e}", p.param, p.coordinates, p.max_rel_error);
    }
    println!("checked {} coordinates, max relative error {:.3e}", report.checked, report.max_rel_error);
    if let Some(p) = &a.json {
        write(p, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")?;
    }
    match report.failures.first() {
        None => Ok(()),
        Some(f) => Err(Error::GradCheck(format!(
            "{} of {} coordinates out of tolerance, first {}[{}]: analytic {} numeric {}",
            report.failures.len(),
            report.checked,
            f.param,
            f.index,
            f.analytic,
            f.numeric
        ))),
    }
}

fn run_synth(a: SynthArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&a.noise) || a.users < 2 || a.posts == 0 || a.dg == 0 {
        return Err(Error::Usage("need noise in [0, 1], at least 2 users, 1 post and dg >= 1".into()));
    }
    let spec = SynthSpec {
        seed: a.seed,
        n_users: a.users,
        posts_per_user: a.posts,
        filler_per_post: a.filler,
        noise: a.noise,
        d_g: a.dg,
        ..SynthSpec::default()
    };
    let corpus = make_synthetic_corpus(&spec);
    write(&a.out.join("corpus.jsonl"), write_jsonl(&corpus.users))?;
    write(&a.out.join("embeddings.txt"), &corpus.embeddings)?;
    eprintln!("wrote {} users", corpus.users.len());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Import(a) => run_import(a),
        Command::Prepare(a) => run_prepare(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Predict(a) => run_predict(a),
        Command::Ablate(a) => run_ablate(a),
        Command::GradCheck(a) => run_grad_check(a),
        Command::Synth(a) => run_synth(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
