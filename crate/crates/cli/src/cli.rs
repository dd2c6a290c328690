use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use qac_core::corpus::InputFormat;
use qac_core::decode::RetraceLimit;
use qac_core::pipeline::{
    cmd_evaluate, cmd_ingest, cmd_train, ModelBundle, ModelChoice, RunConfig, Suggester,
};
use qac_core::segmentation::SegmenterKind;
use qac_core::QacError;

#[derive(Debug, Parser)]
#[command(
    name = "qac",
    version,
    about = "Query auto-completion with subword language models"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, env = "QAC_CONFIG")]
    pub config: Option<PathBuf>,

    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize, deduplicate and time-split a raw query log.
    Ingest {
        /// Raw log file.
        #[arg(long)]
        input: PathBuf,
        /// Output corpus directory (default: paths.corpus).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        format: Option<InputFormat>,
    },
    /// Train the segmenter, the language model and the MPC trie.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        models_dir: Option<PathBuf>,
        /// Segmentation type: char, bpe or unigram.
        #[arg(long = "type")]
        kind: Option<SegmenterKind>,
        #[arg(long)]
        vocab_size: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
    },
    /// Complete one prefix and print JSON lines.
    Complete {
        #[arg(long)]
        prefix: String,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        decode: DecodeArgs,
    },
    /// Score a model on the test split.
    Evaluate {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        decode: DecodeArgs,
        /// Evaluate only the first N test queries.
        #[arg(long)]
        limit: Option<usize>,
        /// Skip the recoverable-length metric.
        #[arg(long)]
        no_mrl: bool,
        /// Score queries on all cores (disables QPS).
        #[arg(long)]
        parallel: bool,
        /// Also write the JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Serve GET /suggest and GET /health.
    Serve {
        #[arg(long)]
        models_dir: Option<PathBuf>,
        #[arg(long)]
        host: Option<String>,
        #[arg(long)]
        port: Option<u16>,
        #[command(flatten)]
        decode: DecodeArgs,
    },
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// `lm`, `mpc`, or a model directory (uses its LM).
    #[arg(long, default_value = "lm")]
    pub model: String,
    #[arg(long)]
    pub models_dir: Option<PathBuf>,
}

impl ModelArgs {
    fn resolve(&self, cfg: &RunConfig) -> (ModelChoice, PathBuf) {
        let dir = self
            .models_dir
            .clone()
            .unwrap_or_else(|| cfg.paths.models.clone());
        match self.model.parse::<ModelChoice>() {
            Ok(choice) => (choice, dir),
            Err(_) => (ModelChoice::Lm, PathBuf::from(&self.model)),
        }
    }
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// Beam width B.
    #[arg(long)]
    pub beam: Option<usize>,
    /// Number of candidates N.
    #[arg(long)]
    pub n: Option<usize>,
    /// Retrace limit: a number or `inf`.
    #[arg(long)]
    pub retrace: Option<RetraceLimit>,
    /// Merge duplicate completions by log-sum-exp.
    #[arg(long)]
    pub marginalize: bool,
}

impl DecodeArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(b) = self.beam {
            cfg.decode.beam_width = b;
        }
        if let Some(n) = self.n {
            cfg.decode.num_candidates = n;
        }
        if let Some(r) = self.retrace {
            cfg.decode.retrace = r;
        }
        if self.marginalize {
            cfg.decode.marginalize = true;
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(QacError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "{m}"),
            CliError::Data(e) => write!(f, "{e}"),
        }
    }
}

impl From<QacError> for CliError {
    fn from(e: QacError) -> Self {
        match e {
            QacError::Config(m) => CliError::Usage(m),
            QacError::TooLong { .. } => CliError::Usage(e.to_string()),
            other => CliError::Data(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(QacError::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        })
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_json(out: &mut dyn Write, value: &impl serde::Serialize) -> Result<(), CliError> {
    serde_json::to_writer(&mut *out, value).map_err(QacError::from)?;
    writeln!(out)?;
    Ok(())
}

fn load_suggester(dir: &Path, cfg: &RunConfig) -> Result<Suggester, CliError> {
    cfg.validate()?;
    Ok(Suggester::new(ModelBundle::load(dir)?, cfg.decode.clone())?)
}

/// Executes a parsed command, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest {
            input,
            out: dir,
            format,
        } => {
            if let Some(f) = format {
                cfg.ingest.format = f;
            }
            let dir = dir.unwrap_or_else(|| cfg.paths.corpus.clone());
            let manifest = cmd_ingest(&input, &dir, &cfg)?;
            write_json(out, &manifest.counts)?;
        }
        Command::Train {
            corpus,
            models_dir,
            kind,
            vocab_size,
            order,
        } => {
            if let Some(k) = kind {
                cfg.segmentation.kind = k;
            }
            if let Some(v) = vocab_size {
                cfg.segmentation.vocab_size = v;
            }
            if let Some(o) = order {
                cfg.lm.order = o;
            }
            let corpus = corpus.unwrap_or_else(|| cfg.paths.corpus.clone());
            let models = models_dir.unwrap_or_else(|| cfg.paths.models.clone());
            let summary = cmd_train(&corpus, &models, &cfg)?;
            if let Some(report) = &summary.validation {
                eprintln!("{}", report.to_table());
            }
            write_json(
                out,
                &serde_json::json!({
                    "models_dir": models,
                    "seed": summary.run.seed,
                    "config_hash": summary.run.config_hash,
                    "files": summary.run.files,
                    "validation": summary.validation.as_ref().map(|r| r.metrics_json()),
                }),
            )?;
        }
        Command::Complete {
            prefix,
            model,
            decode,
        } => {
            decode.apply(&mut cfg);
            let (choice, dir) = model.resolve(&cfg);
            let suggester = load_suggester(&dir, &cfg)?;
            let s = suggester.suggest(&prefix, None, choice)?;
            for c in &s.candidates {
                write_json(out, c)?;
            }
        }
        Command::Evaluate {
            corpus,
            model,
            decode,
            limit,
            no_mrl,
            parallel,
            report,
        } => {
            decode.apply(&mut cfg);
            if limit.is_some() {
                cfg.eval.limit = limit;
            }
            if no_mrl {
                cfg.eval.with_mrl = false;
            }
            if parallel {
                cfg.eval.parallel = true;
            }
            cfg.validate()?;
            let (choice, dir) = model.resolve(&cfg);
            let corpus = corpus.unwrap_or_else(|| cfg.paths.corpus.clone());
            let bundle = ModelBundle::load(&dir)?;
            let r = cmd_evaluate(&bundle, &corpus, choice, &cfg)?;
            eprintln!("{}", r.to_table());
            if let Some(path) = report {
                let text = serde_json::to_string_pretty(&r).map_err(QacError::from)?;
                std::fs::write(&path, text).map_err(|e| QacError::Io {
                    path: path.clone(),
                    source: e,
                })?;
            }
            write_json(out, &r)?;
        }
        Command::Serve {
            models_dir,
            host,
            port,
            decode,
        } => {
            decode.apply(&mut cfg);
            cfg.validate()?;
            if let Some(h) = host {
                cfg.serve.host = h;
            }
            if let Some(p) = port {
                cfg.serve.port = p;
            }
            let dir = models_dir.unwrap_or_else(|| cfg.paths.models.clone());
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(crate::server::serve(cfg, dir))?;
        }
    }
    Ok(())
}
