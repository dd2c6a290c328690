//! Interpolated absolute-discounting n-gram model over token ids.
//!
//! ```text
//! p_k(w | h) = max(c(h w) - D, 0) / c(h) + D * N1+(h •) / c(h) * p_{k-1}(w | h')
//! ```
//!
//! where `h'` drops the oldest token of `h`, `p_0` is uniform over every
//! token except `<BOS>`, and unseen contexts defer to the lower order. A
//! floor is mixed in last so every token keeps probability at least `floor`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TokenLanguageModel;
use crate::error::{QacError, Result};
use crate::segmentation::{SamplerConfig, Segmenter};
use crate::vocab::{TokenId, Vocabulary, BOS, EOS};

const MAGIC: &[u8; 8] = b"QACLM\x00\x01\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramConfig {
    pub order: usize,
    pub passes: usize,
    pub discount: f64,
    pub floor: f64,
    /// When set and the segmenter is stochastic, every pass draws fresh
    /// segmentations with this sampler (seeded by `sampler.seed`).
    pub sampler: Option<SamplerConfig>,
}

impl Default for NGramConfig {
    fn default() -> Self {
        NGramConfig {
            order: 5,
            passes: 1,
            discount: 0.75,
            floor: 1e-10,
            sampler: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NGramHeader {
    pub order: usize,
    pub discount: f64,
    pub floor: f64,
    pub vocab_size: usize,
    pub vocab_hash: String,
    pub passes: usize,
    pub sampler: Option<SamplerConfig>,
    /// Free-form provenance (seed, config hash) filled in by the pipeline.
    #[serde(default)]
    pub provenance: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
struct ContextStats {
    total: u64,
    /// Sorted by token id.
    followers: Vec<(TokenId, u64)>,
}

/// Conditioning history: the last `order - 1` tokens, `<BOS>`-padded.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NGramState(Vec<TokenId>);

impl NGramState {
    pub fn history(&self) -> &[TokenId] {
        &self.0
    }
}

#[derive(Debug, Clone)]
pub struct NGramLm {
    header: NGramHeader,
    /// `tables[k]` maps length-`k` contexts to their follower counts.
    tables: Vec<HashMap<Vec<TokenId>, ContextStats>>,
}

fn validate(order: usize, discount: f64, floor: f64, vocab_size: usize) -> Result<()> {
    if order < 2 {
        return Err(QacError::Config(format!(
            "n-gram order must be >= 2, got {order}"
        )));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(QacError::Config(format!(
            "discount must be in (0, 1), got {discount}"
        )));
    }
    if !(floor >= 0.0 && floor * (vocab_size as f64) < 1.0) {
        return Err(QacError::Config(format!(
            "floor {floor} too large for vocabulary"
        )));
    }
    Ok(())
}

/// Counts n-grams over segmentations of `corpus`, `cfg.passes` times.
/// Each sequence is wrapped as `<BOS> t_1 .. t_n <EOS>`.
pub fn train_ngram<S: AsRef<str>>(
    corpus: &[S],
    segmenter: &Segmenter,
    cfg: &NGramConfig,
) -> Result<NGramLm> {
    if corpus.is_empty() {
        return Err(QacError::EmptyCorpus);
    }
    let vocab = segmenter.vocab();
    validate(cfg.order, cfg.discount, cfg.floor, vocab.len())?;
    if cfg.passes == 0 {
        return Err(QacError::Config("passes must be >= 1".into()));
    }
    let mut raw: Vec<HashMap<Vec<TokenId>, HashMap<TokenId, u64>>> =
        vec![HashMap::new(); cfg.order];
    let sampler = cfg.sampler.filter(|_| segmenter.is_stochastic());
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.map_or(0, |s| s.seed));
    let mut seq = Vec::new();
    for _ in 0..cfg.passes {
        for q in corpus {
            let seg = match &sampler {
                Some(s) => segmenter.sample(q.as_ref(), s, &mut rng),
                None => segmenter.segment(q.as_ref()),
            };
            seq.clear();
            seq.extend(std::iter::repeat_n(BOS, cfg.order - 1));
            seq.extend_from_slice(&seg.ids);
            seq.push(EOS);
            for pos in cfg.order - 1..seq.len() {
                let w = seq[pos];
                for (k, table) in raw.iter_mut().enumerate() {
                    let ctx = seq[pos - k..pos].to_vec();
                    *table.entry(ctx).or_default().entry(w).or_default() += 1;
                }
            }
        }
    }
    let tables = raw
        .into_iter()
        .map(|t| {
            t.into_iter()
                .map(|(ctx, f)| {
                    let mut followers: Vec<(TokenId, u64)> = f.into_iter().collect();
                    followers.sort_unstable();
                    let total = followers.iter().map(|x| x.1).sum();
                    (ctx, ContextStats { total, followers })
                })
                .collect()
        })
        .collect();
    Ok(NGramLm {
        header: NGramHeader {
            order: cfg.order,
            discount: cfg.discount,
            floor: cfg.floor,
            vocab_size: vocab.len(),
            vocab_hash: vocab.hash(),
            passes: cfg.passes,
            sampler,
            provenance: None,
        },
        tables,
    })
}

impl NGramLm {
    pub fn header(&self) -> &NGramHeader {
        &self.header
    }

    pub fn order(&self) -> usize {
        self.header.order
    }

    pub fn set_provenance(&mut self, value: serde_json::Value) {
        self.header.provenance = Some(value);
    }

    /// Raw count of `token` after `context` (`context.len() < order`).
    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.tables
            .get(context.len())
            .and_then(|t| t.get(context))
            .and_then(|s| {
                s.followers
                    .binary_search_by_key(&token, |f| f.0)
                    .ok()
                    .map(|i| s.followers[i].1)
            })
            .unwrap_or(0)
    }

    /// Sum of all counts stored for contexts of length `k`.
    pub fn total_count(&self, k: usize) -> u64 {
        self.tables[k].values().map(|s| s.total).sum()
    }

    /// Number of distinct contexts of length `k`.
    pub fn num_contexts(&self, k: usize) -> usize {
        self.tables[k].len()
    }

    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        let found = vocab.hash();
        if found != self.header.vocab_hash || vocab.len() != self.header.vocab_size {
            return Err(QacError::VocabMismatch {
                expected: self.header.vocab_hash.clone(),
                found,
            });
        }
        Ok(())
    }

    pub fn state_for(&self, history: &[TokenId]) -> NGramState {
        let mut s = self.initial_state();
        for &t in history {
            s = self.advance(&s, t);
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let header = serde_json::to_vec(&self.header)?;
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for table in &self.tables {
            let mut entries: Vec<(&Vec<TokenId>, &ContextStats)> = table.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.cmp(b.0));
            out.extend_from_slice(&(entries.len() as u64).to_le_bytes());
            for (ctx, stats) in entries {
                for id in ctx {
                    out.extend_from_slice(&id.to_le_bytes());
                }
                out.extend_from_slice(&(stats.followers.len() as u32).to_le_bytes());
                for (w, c) in &stats.followers {
                    out.extend_from_slice(&w.to_le_bytes());
                    out.extend_from_slice(&c.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(QacError::ModelFormat("not an n-gram model file".into()));
        }
        let header_len = read_u32(&mut r)? as usize;
        if header_len > r.len() {
            return Err(QacError::ModelFormat("truncated header".into()));
        }
        let header: NGramHeader = serde_json::from_slice(&r[..header_len])?;
        r = &r[header_len..];
        validate(
            header.order,
            header.discount,
            header.floor,
            header.vocab_size,
        )?;
        let mut tables = Vec::with_capacity(header.order);
        for k in 0..header.order {
            let n = read_u64(&mut r)? as usize;
            let mut table = HashMap::with_capacity(n.min(1 << 24));
            for _ in 0..n {
                let ctx = (0..k)
                    .map(|_| read_u32(&mut r))
                    .collect::<Result<Vec<_>>>()?;
                let nf = read_u32(&mut r)? as usize;
                let mut followers = Vec::with_capacity(nf.min(1 << 16));
                for _ in 0..nf {
                    let w = read_u32(&mut r)?;
                    if w as usize >= header.vocab_size {
                        return Err(QacError::ModelFormat(format!("token id {w} out of range")));
                    }
                    followers.push((w, read_u64(&mut r)?));
                }
                let total = followers.iter().map(|f| f.1).sum();
                table.insert(ctx, ContextStats { total, followers });
            }
            tables.push(table);
        }
        if !r.is_empty() {
            return Err(QacError::ModelFormat(
                "trailing bytes after count tables".into(),
            ));
        }
        Ok(NGramLm { header, tables })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| QacError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| QacError::io(path, e))
    }

    /// Loads a model and checks it was trained against `vocab`.
    pub fn load(path: &Path, vocab: &Vocabulary) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| QacError::io(path, e))?;
        let lm = Self::from_bytes(&bytes)?;
        lm.check_vocab(vocab)?;
        Ok(lm)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| QacError::ModelFormat("unexpected end of model file".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

impl TokenLanguageModel for NGramLm {
    type State = NGramState;

    fn vocab_size(&self) -> usize {
        self.header.vocab_size
    }

    fn initial_state(&self) -> NGramState {
        NGramState(vec![BOS; self.header.order - 1])
    }

    fn next_logprobs(&self, state: &NGramState) -> Vec<f64> {
        let v = self.header.vocab_size;
        let d = self.header.discount;
        let mut p = vec![1.0 / (v - 1) as f64; v];
        p[BOS as usize] = 0.0;
        let hist = &state.0;
        for (k, table) in self.tables.iter().enumerate() {
            let Some(stats) = table.get(&hist[hist.len() - k..]) else {
                break;
            };
            let total = stats.total as f64;
            let backoff = d * stats.followers.len() as f64 / total;
            for x in p.iter_mut() {
                *x *= backoff;
            }
            for &(w, c) in &stats.followers {
                p[w as usize] += (c as f64 - d).max(0.0) / total;
            }
        }
        let floor = self.header.floor;
        let keep = 1.0 - v as f64 * floor;
        p.iter().map(|x| (keep * x + floor).ln()).collect()
    }

    fn advance(&self, state: &NGramState, token: TokenId) -> NGramState {
        let mut h = Vec::with_capacity(state.0.len());
        h.extend_from_slice(&state.0[1..]);
        h.push(token);
        NGramState(h)
    }
}
