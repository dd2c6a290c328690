//! End-to-end driver: configuration, ingest, training, model loading and a
//! shared suggestion entry point used by the CLI and the HTTP service.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{self, normalize_prefix, InputFormat, Manifest};
use crate::decode::{Completion, DecodeConfig, Decoder};
use crate::error::{QacError, Result};
use crate::eval::{measure, EvalOptions, EvalReport, LmCompleter, MpcCompleter, PrefixSampler};
use crate::lm::{train_ngram, NGramConfig, NGramLm};
use crate::mpc::CompletionTrie;
use crate::segmentation::{
    train_bpe, CharSegmenter, SamplerConfig, Segmenter, SegmenterKind, UnigramTrainer,
};
use crate::vocab::to_hex;

pub const SEGMENTER_FILE: &str = "segmenter.json";
pub const LM_FILE: &str = "lm.bin";
pub const MPC_FILE: &str = "mpc.bin";
pub const RUN_FILE: &str = "run.json";
pub const MAX_PREFIX_CHARS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub corpus: PathBuf,
    pub models: PathBuf,
    pub reports: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            corpus: "data/corpus".into(),
            models: "models".into(),
            reports: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub format: InputFormat,
    /// Last training timestamp (inclusive). Defaults to the 80% quantile.
    pub train_end: Option<i64>,
    /// Last validation timestamp (inclusive). Defaults to the 90% quantile.
    pub valid_end: Option<i64>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            format: InputFormat::Tsv,
            train_end: None,
            valid_end: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentationConfig {
    #[serde(rename = "type")]
    pub kind: SegmenterKind,
    pub vocab_size: usize,
    /// Sampling used for LM training with the unigram segmenter. Its seed
    /// is replaced by the run seed.
    pub alpha: f64,
    pub nbest_size: Option<usize>,
    pub em_iterations: usize,
    pub prune_fraction: f64,
    pub max_piece_chars: usize,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        let t = UnigramTrainer::new(256);
        SegmentationConfig {
            kind: SegmenterKind::Bpe,
            vocab_size: 256,
            alpha: 0.2,
            nbest_size: None,
            em_iterations: t.em_iterations,
            prune_fraction: t.prune_fraction,
            max_piece_chars: t.max_piece_chars,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmConfig {
    pub order: usize,
    pub passes: usize,
    pub discount: f64,
    pub floor: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        let d = NGramConfig::default();
        LmConfig {
            order: d.order,
            passes: d.passes,
            discount: d.discount,
            floor: d.floor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub min_prefix_len: usize,
    pub with_mrl: bool,
    pub parallel: bool,
    /// Evaluate only the first `limit` test queries.
    pub limit: Option<usize>,
    /// Validation queries scored after training.
    pub valid_limit: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            min_prefix_len: 1,
            with_mrl: true,
            parallel: false,
            limit: None,
            valid_limit: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            host: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub ingest: IngestConfig,
    pub segmentation: SegmentationConfig,
    pub lm: LmConfig,
    pub decode: DecodeConfig,
    pub eval: EvalConfig,
    pub serve: ServeConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| QacError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QacError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            QacError::Config(m) => QacError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.decode.validate()?;
        if self.lm.order < 2 {
            return Err(QacError::Config("lm.order must be >= 2".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        to_hex(&Sha256::digest(&json))
    }

    pub fn ngram_config(&self) -> NGramConfig {
        NGramConfig {
            order: self.lm.order,
            passes: self.lm.passes,
            discount: self.lm.discount,
            floor: self.lm.floor,
            sampler: (self.segmentation.kind == SegmenterKind::Unigram).then_some(SamplerConfig {
                alpha: self.segmentation.alpha,
                nbest_size: self.segmentation.nbest_size,
                seed: self.seed,
            }),
        }
    }

    pub fn prefix_sampler(&self) -> PrefixSampler {
        PrefixSampler {
            min_prefix_len: self.eval.min_prefix_len,
            seed: self.seed,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    to_hex(&Sha256::digest(bytes))
}

/// Reads a raw log, normalizes and splits it, and writes the split files
/// and manifest into `out_dir`.
pub fn cmd_ingest(raw: &Path, out_dir: &Path, cfg: &RunConfig) -> Result<Manifest> {
    let records = corpus::read_records(raw, cfg.ingest.format)?;
    let boundaries = match (cfg.ingest.train_end, cfg.ingest.valid_end) {
        (Some(t), Some(v)) => Some((t, v)),
        (None, None) => None,
        _ => {
            return Err(QacError::Config(
                "ingest.train_end and ingest.valid_end must be set together".into(),
            ))
        }
    };
    let (split, manifest) = corpus::ingest(records, cfg.ingest.format, boundaries)?;
    std::fs::create_dir_all(out_dir).map_err(|e| QacError::io(out_dir, e))?;
    corpus::write_split(out_dir, &split, &manifest)?;
    Ok(manifest)
}

pub fn train_segmenter(
    train: &[String],
    manifest: &Manifest,
    cfg: &RunConfig,
) -> Result<Segmenter> {
    let alphabet = manifest.alphabet.clone();
    let s = &cfg.segmentation;
    Ok(match s.kind {
        SegmenterKind::Char => Segmenter::Char(CharSegmenter::new(alphabet)),
        SegmenterKind::Bpe => Segmenter::Bpe(train_bpe(train, &alphabet, s.vocab_size)?),
        SegmenterKind::Unigram => {
            let trainer = UnigramTrainer {
                em_iterations: s.em_iterations,
                prune_fraction: s.prune_fraction,
                max_piece_chars: s.max_piece_chars,
                ..UnigramTrainer::new(s.vocab_size)
            };
            Segmenter::Unigram(trainer.train(train, &alphabet)?)
        }
    })
}

/// Provenance written next to the model files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub seed: u64,
    pub config_hash: String,
    pub segmenter: SegmenterKind,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub lm_order: usize,
    pub train_queries: usize,
    /// SHA-256 of each model file.
    pub files: std::collections::BTreeMap<String, String>,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub run: RunInfo,
    pub validation: Option<EvalReport>,
}

/// Trains the segmenter, the n-gram LM and the MPC trie from the ingested
/// corpus in `corpus_dir`, writing them to `models_dir`.
pub fn cmd_train(corpus_dir: &Path, models_dir: &Path, cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let manifest = corpus::read_manifest(corpus_dir)?;
    let split = corpus::read_split(corpus_dir)?;
    if split.train.is_empty() {
        return Err(QacError::EmptySplit("train"));
    }
    let segmenter = train_segmenter(&split.train, &manifest, cfg)?;
    let mut lm = train_ngram(&split.train, &segmenter, &cfg.ngram_config())?;
    let config_hash = cfg.hash();
    lm.set_provenance(serde_json::json!({ "seed": cfg.seed, "config_hash": config_hash }));
    let trie = CompletionTrie::from_queries(&split.train)?;

    std::fs::create_dir_all(models_dir).map_err(|e| QacError::io(models_dir, e))?;
    segmenter.save(&models_dir.join(SEGMENTER_FILE))?;
    lm.save(&models_dir.join(LM_FILE))?;
    trie.save(&models_dir.join(MPC_FILE))?;

    let mut files = std::collections::BTreeMap::new();
    for name in [SEGMENTER_FILE, LM_FILE, MPC_FILE] {
        let path = models_dir.join(name);
        let bytes = std::fs::read(&path).map_err(|e| QacError::io(&path, e))?;
        files.insert(name.to_string(), sha256_hex(&bytes));
    }
    let vocab = segmenter.vocab();
    let run = RunInfo {
        seed: cfg.seed,
        config_hash,
        segmenter: segmenter.kind(),
        vocab_size: vocab.len(),
        vocab_hash: vocab.hash(),
        lm_order: lm.order(),
        train_queries: split.train.len(),
        files,
        config: cfg.clone(),
    };
    let json = serde_json::to_string_pretty(&run)? + "\n";
    corpus::write_file(&models_dir.join(RUN_FILE), json.as_bytes())?;

    let validation = if split.valid.is_empty() || cfg.eval.valid_limit == 0 {
        None
    } else {
        let n = split.valid.len().min(cfg.eval.valid_limit);
        let valid = &split.valid[..n];
        let seen = corpus::seen_flags(valid, &split.train);
        let completer = LmCompleter {
            decoder: Decoder::new(&lm, &segmenter)?,
            config: cfg.decode.clone(),
        };
        Some(measure(
            &completer,
            &format!("lm/{}", segmenter.kind()),
            valid,
            &seen,
            &cfg.prefix_sampler(),
            EvalOptions {
                with_mrl: false,
                parallel: cfg.eval.parallel,
            },
            serde_json::json!({ "split": "valid" }),
        )?)
    };
    Ok(TrainSummary { run, validation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Lm,
    Mpc,
}

impl std::str::FromStr for ModelChoice {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lm" => Ok(ModelChoice::Lm),
            "mpc" => Ok(ModelChoice::Mpc),
            _ => Err(format!("unknown model `{s}` (expected lm or mpc)")),
        }
    }
}

impl std::fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelChoice::Lm => "lm",
            ModelChoice::Mpc => "mpc",
        })
    }
}

/// Every model trained into one directory.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub dir: PathBuf,
    pub segmenter: Segmenter,
    pub lm: NGramLm,
    pub mpc: CompletionTrie,
    pub run: Option<RunInfo>,
}

impl ModelBundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let segmenter = Segmenter::load(&dir.join(SEGMENTER_FILE))?;
        let lm = NGramLm::load(&dir.join(LM_FILE), segmenter.vocab())?;
        let mpc = CompletionTrie::load(&dir.join(MPC_FILE))?;
        let run_path = dir.join(RUN_FILE);
        let run = if run_path.exists() {
            let text =
                std::fs::read_to_string(&run_path).map_err(|e| QacError::io(&run_path, e))?;
            Some(serde_json::from_str(&text)?)
        } else {
            None
        };
        Ok(ModelBundle {
            dir: dir.to_path_buf(),
            segmenter,
            lm,
            mpc,
            run,
        })
    }

    pub fn metadata(&self) -> serde_json::Value {
        let vocab = self.segmenter.vocab();
        serde_json::json!({
            "segmenter": self.segmenter.kind(),
            "vocab_size": vocab.len(),
            "vocab_hash": vocab.hash(),
            "lm_order": self.lm.order(),
            "mpc_queries": self.mpc.total(),
            "seed": self.run.as_ref().map(|r| r.seed),
            "config_hash": self.run.as_ref().map(|r| r.config_hash.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedCandidate {
    pub rank: usize,
    pub query: String,
    pub score: f64,
    pub n_token_seqs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Suggestion {
    pub prefix: String,
    pub normalized_prefix: String,
    pub model: ModelChoice,
    pub candidates: Vec<RankedCandidate>,
    pub decode_length: usize,
}

/// Normalizes a raw prefix and completes it with the chosen model.
pub struct Suggester {
    pub bundle: ModelBundle,
    pub decode: DecodeConfig,
}

impl Suggester {
    pub fn new(bundle: ModelBundle, decode: DecodeConfig) -> Result<Self> {
        decode.validate()?;
        Ok(Suggester { bundle, decode })
    }

    pub fn suggest(
        &self,
        raw_prefix: &str,
        n: Option<usize>,
        model: ModelChoice,
    ) -> Result<Suggestion> {
        let normalized = normalize_prefix(raw_prefix);
        if normalized.is_empty() {
            return Err(QacError::Config(
                "prefix is empty after normalization".into(),
            ));
        }
        let len = raw_prefix.chars().count();
        if len > MAX_PREFIX_CHARS {
            return Err(QacError::TooLong {
                len,
                limit: MAX_PREFIX_CHARS,
            });
        }
        let mut cfg = self.decode.clone();
        if let Some(n) = n {
            cfg.num_candidates = n;
        }
        cfg.validate()?;
        let completion: Completion = match model {
            ModelChoice::Lm => Decoder::new(&self.bundle.lm, &self.bundle.segmenter)?
                .complete(&normalized, &cfg)?,
            ModelChoice::Mpc => {
                use crate::eval::Completer;
                MpcCompleter {
                    trie: &self.bundle.mpc,
                    n: cfg.num_candidates,
                }
                .complete(&normalized)?
            }
        };
        Ok(Suggestion {
            prefix: raw_prefix.to_string(),
            normalized_prefix: normalized,
            model,
            candidates: completion
                .candidates
                .into_iter()
                .enumerate()
                .map(|(i, c)| RankedCandidate {
                    rank: i + 1,
                    query: c.query,
                    score: c.score,
                    n_token_seqs: c.token_seqs,
                })
                .collect(),
            decode_length: completion.decode_length,
        })
    }
}

/// Evaluates one model of a bundle on the test split of `corpus_dir`.
pub fn cmd_evaluate(
    bundle: &ModelBundle,
    corpus_dir: &Path,
    model: ModelChoice,
    cfg: &RunConfig,
) -> Result<EvalReport> {
    let split = corpus::read_split(corpus_dir)?;
    let n = cfg
        .eval
        .limit
        .unwrap_or(split.test.len())
        .min(split.test.len());
    let test = &split.test[..n];
    let seen = &split.test_seen[..n];
    let opts = EvalOptions {
        with_mrl: cfg.eval.with_mrl,
        parallel: cfg.eval.parallel,
    };
    let sampler = cfg.prefix_sampler();
    let echo = serde_json::json!({
        "decode": cfg.decode,
        "segmenter": bundle.segmenter.kind(),
        "seed": cfg.seed,
        "min_prefix_len": cfg.eval.min_prefix_len,
    });
    match model {
        ModelChoice::Lm => {
            let c = LmCompleter {
                decoder: Decoder::new(&bundle.lm, &bundle.segmenter)?,
                config: cfg.decode.clone(),
            };
            let name = format!("lm/{}", bundle.segmenter.kind());
            measure(&c, &name, test, seen, &sampler, opts, echo)
        }
        ModelChoice::Mpc => {
            let c = MpcCompleter {
                trie: &bundle.mpc,
                n: cfg.decode.num_candidates,
            };
            measure(&c, "mpc", test, seen, &sampler, opts, echo)
        }
    }
}
