use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chartag::corpus::{parse_conllu, write_conllu, CorpusError, TagDoc};
use chartag::corruptor::{corrupt, CorruptError, NoiseLevel, NoiseSpec, NoiseStats};
use chartag::metrics::{evaluate, MetricsError};
use chartag::model::ModelError;
use chartag::segfeat::FeaturizerKind;
use chartag::trainer::{self, Checkpoint, CheckpointError, ConfigError, RunConfig, TrainError};

#[derive(Parser)]
#[command(name = "chartag", version, about = "Tokenizer-free joint segmentation and POS tagging")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the checkpoint, vocabularies and log to DIR.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        dev: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// TOML file with [train], [model], [segfeat] and [noise] tables.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        featurizer: Option<Featurizer>,
        /// Train on corrupted text (disables input dropout).
        #[arg(long)]
        noise_mode: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Segment and tag raw or CoNLL-U input, writing CoNLL-U.
    Tag {
        #[arg(long)]
        model: PathBuf,
        /// Input file, or `-` for standard input.
        #[arg(long)]
        input: String,
        #[arg(long, value_enum, default_value = "conllu")]
        format: Format,
        /// Output file, or `-` for standard output.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Delete and insert spaces in a CoNLL-U file.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Probability of deleting the space after a token.
        #[arg(long)]
        pd: Option<f64>,
        /// Probability of inserting a space inside a token.
        #[arg(long)]
        pi: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Preset that overrides --pd and --pi.
        #[arg(long)]
        level: Option<String>,
        /// Where to write the JSON statistics; defaults to OUT.stats.json.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Score predictions against gold tokens.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        /// Clean gold for relaxed accuracy on noisy data.
        #[arg(long)]
        clean_gold: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Featurizer {
    Grconv,
    Srnn,
    Diff,
}

impl From<Featurizer> for FeaturizerKind {
    fn from(f: Featurizer) -> Self {
        match f {
            Featurizer::Grconv => FeaturizerKind::Grconv,
            Featurizer::Srnn => FeaturizerKind::Srnn,
            Featurizer::Diff => FeaturizerKind::Diff,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Conllu,
    /// One sentence per line.
    Text,
}

/// Failures grouped by exit status.
#[derive(Debug)]
enum Failure {
    /// Unreadable or malformed input data.
    Parse(String),
    /// Bad flags, config values or incompatible inputs.
    Config(String),
    /// Model files that cannot be read or written.
    Model(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 1,
            Failure::Config(_) => 2,
            Failure::Model(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Config(m) | Failure::Model(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<CorruptError> for Failure {
    fn from(e: CorruptError) -> Self {
        match e {
            CorruptError::Probability { .. } | CorruptError::Level(_) => Failure::Config(e.to_string()),
            _ => Failure::Parse(e.to_string()),
        }
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Parse(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Corpus(_) | TrainError::NoData => Failure::Parse(e.to_string()),
            TrainError::Config(_) | TrainError::Metrics(_) => Failure::Config(e.to_string()),
            TrainError::Model(_) | TrainError::NonFinite { .. } => Failure::Model(e.to_string()),
        }
    }
}

fn read_doc(path: &Path) -> Result<TagDoc, Failure> {
    let file = File::open(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))?;
    parse_conllu(BufReader::new(file)).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8], fail: fn(String) -> Failure) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn open_input(input: &str) -> Result<Box<dyn BufRead>, Failure> {
    if input == "-" {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(input).map_err(|e| Failure::Parse(format!("{input}: {e}")))?;
    Ok(Box::new(BufReader::new(f)))
}

fn open_output(out: &str) -> Result<Box<dyn Write>, Failure> {
    if out == "-" {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(out).map_err(|e| Failure::Config(format!("{out}: {e}")))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn load_config(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        Some(p) => {
            let s = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            Ok(RunConfig::from_toml_str(&s)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn cmd_train(
    train: &Path,
    dev: &Path,
    out: &Path,
    config: Option<&Path>,
    featurizer: Option<Featurizer>,
    noise_mode: bool,
    seed: Option<u64>,
) -> Result<(), Failure> {
    let mut cfg = load_config(config)?;
    if let Some(f) = featurizer {
        cfg.segfeat.kind = f.into();
    }
    if noise_mode {
        cfg.train.noise_mode = true;
    }
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    cfg.validate()?;
    let train_doc = read_doc(train)?;
    let dev_doc = read_doc(dev)?;
    fs::create_dir_all(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;

    let log_path = out.join("train_log.jsonl");
    let log_file = File::create(&log_path).map_err(|e| Failure::Model(format!("{}: {e}", log_path.display())))?;
    let mut log = BufWriter::new(log_file);
    let mut log_err = None;
    let outcome = trainer::train(&train_doc, &dev_doc, &cfg, |entry| {
        log::info!(
            "epoch {} nll {:.4} dev token F1 {:.4} joint F1 {:.4} ({:.1}s)",
            entry.epoch,
            entry.train_nll,
            entry.dev_token_f1,
            entry.dev_joint_f1,
            entry.seconds
        );
        let line = serde_json::to_string(entry).expect("log entries serialize");
        if let Err(e) = writeln!(log, "{line}").and_then(|_| log.flush()) {
            log_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = log_err {
        return Err(Failure::Model(format!("{}: {e}", log_path.display())));
    }

    let ck = &outcome.checkpoint;
    ck.save(&out.join("model.ckpt"))
        .map_err(|e| Failure::Model(format!("{}: {e}", out.join("model.ckpt").display())))?;
    let mut chars = Vec::new();
    ck.model.vocab.save(&mut chars).expect("writing to memory");
    write_file(&out.join("chars.txt"), &chars, Failure::Model)?;
    let mut tags = Vec::new();
    ck.model.tags.save(&mut tags).expect("writing to memory");
    write_file(&out.join("tags.txt"), &tags, Failure::Model)?;
    let toml = toml::to_string(&ck.config).expect("config serializes");
    write_file(&out.join("config.toml"), toml.as_bytes(), Failure::Model)?;
    log::info!(
        "best dev joint F1 {:.4} at epoch {}; {} training sentences skipped",
        ck.best_dev_joint_f1,
        ck.epoch,
        outcome.skipped
    );
    Ok(())
}

fn cmd_tag(model: &Path, input: &str, format: Format, out: &str) -> Result<(), Failure> {
    let ck = Checkpoint::load(model).map_err(|e: CheckpointError| Failure::Model(format!("{}: {e}", model.display())))?;
    let mut reader = open_input(input)?;
    let texts: Vec<(Option<String>, String)> = match format {
        Format::Conllu => {
            let doc = parse_conllu(reader).map_err(|e: CorpusError| Failure::Parse(format!("{input}: {e}")))?;
            doc.sentences.into_iter().map(|s| (s.id, s.text)).collect()
        }
        Format::Text => {
            let mut s = String::new();
            reader
                .read_to_string(&mut s)
                .map_err(|e| Failure::Parse(format!("{input}: {e}")))?;
            s.lines().map(|l| (None, l.to_string())).collect()
        }
    };
    let mut sentences = Vec::with_capacity(texts.len());
    for (id, text) in texts {
        if let Some(s) = ck.model.tag_sentence(id, &text)? {
            sentences.push(s);
        }
    }
    let mut w = open_output(out)?;
    write_conllu(&TagDoc::new(sentences), &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Config(format!("{out}: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn cmd_corrupt(
    input: &Path,
    out: &Path,
    pd: Option<f64>,
    pi: Option<f64>,
    seed: u64,
    level: Option<&str>,
    stats: Option<&Path>,
) -> Result<(), Failure> {
    let level: Option<NoiseLevel> = level.map(str::parse).transpose()?;
    let spec = match (level, pd, pi) {
        (Some(l), _, _) => NoiseSpec::from_level(l, seed),
        (None, Some(pd), Some(pi)) => NoiseSpec::new(pd, pi, seed)?,
        (None, None, _) => return Err(Failure::Config("missing --pd (or --level)".into())),
        (None, _, None) => return Err(Failure::Config("missing --pi (or --level)".into())),
    };
    let doc = read_doc(input)?;
    let noisy = corrupt(&doc, &spec)?;
    let counts = chartag::corruptor::noise_report(&doc, &noisy)?;
    let report = NoiseStats::new(level, &spec, counts);

    let file = File::create(out).map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    let mut w = BufWriter::new(file);
    write_conllu(&noisy, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Failure::Config(format!("{}: {e}", out.display())))?;
    let stats_path = stats.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = out.as_os_str().to_owned();
        p.push(".stats.json");
        PathBuf::from(p)
    });
    let json = serde_json::to_string_pretty(&report).expect("stats serialize");
    write_file(&stats_path, json.as_bytes(), Failure::Config)
}

fn cmd_eval(gold: &Path, pred: &Path, clean_gold: Option<&Path>, report: &Path) -> Result<(), Failure> {
    let g = read_doc(gold)?;
    let p = read_doc(pred)?;
    let c = clean_gold.map(read_doc).transpose()?;
    let r = evaluate(&g, &p, c.as_ref())?;
    let json = serde_json::to_string_pretty(&r).expect("report serializes");
    write_file(report, json.as_bytes(), Failure::Config)?;
    println!("{json}");
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            train,
            dev,
            out,
            config,
            featurizer,
            noise_mode,
            seed,
        } => cmd_train(&train, &dev, &out, config.as_deref(), featurizer, noise_mode, seed),
        Command::Tag {
            model,
            input,
            format,
            out,
        } => cmd_tag(&model, &input, format, &out),
        Command::Corrupt {
            input,
            out,
            pd,
            pi,
            seed,
            level,
            stats,
        } => cmd_corrupt(&input, &out, pd, pi, seed, level.as_deref(), stats.as_deref()),
        Command::Eval {
            gold,
            pred,
            clean_gold,
            report,
        } => cmd_eval(&gold, &pred, clean_gold.as_deref(), &report),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap reports usage errors, including missing required flags, with status 2
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
