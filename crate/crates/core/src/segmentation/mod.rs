//! Tokenization of queries into vocabulary tokens.
//!
//! Three segmenters share one interface: character splitting, BPE
//! (deterministic greedy merges) and a unigram language model supporting
//! Viterbi, n-best and sampled segmentations.

mod bpe;
mod enumerate;
mod lattice;
mod unigram;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bpe::{train_bpe, BpeModel};
pub use enumerate::{enumerate_all_segmentations, MAX_ENUMERATION_CHARS};
pub use unigram::{UnigramModel, UnigramTrainer};

use crate::error::{QacError, Result};
use crate::vocab::{Alphabet, TokenId, Vocabulary, UNK};

/// A token sequence together with its concatenated surface.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Segmentation {
    pub ids: Vec<TokenId>,
    pub surface: String,
}

impl Segmentation {
    pub fn from_ids(ids: Vec<TokenId>, vocab: &Vocabulary) -> Self {
        let surface = vocab.concat(&ids);
        Segmentation { ids, surface }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pieces<'v>(&self, vocab: &'v Vocabulary) -> Vec<&'v str> {
        self.ids
            .iter()
            .map(|&id| vocab.surface(id).unwrap_or("<UNK>"))
            .collect()
    }
}

/// Subword-regularization sampling parameters. `nbest_size = None` samples
/// from the full lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub alpha: f64,
    pub nbest_size: Option<usize>,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            alpha: 0.2,
            nbest_size: None,
            seed: 0,
        }
    }
}

/// One token per character; characters outside the alphabet become `<UNK>`.
pub fn char_segment(q: &str, vocab: &Vocabulary) -> Segmentation {
    let ids = q.chars().map(|c| vocab.char_id(c).unwrap_or(UNK)).collect();
    Segmentation::from_ids(ids, vocab)
}

#[derive(Debug, Clone)]
pub struct CharSegmenter {
    vocab: Vocabulary,
}

impl CharSegmenter {
    pub fn new(alphabet: Alphabet) -> Self {
        let vocab =
            Vocabulary::new(alphabet, std::iter::empty()).expect("alphabet characters are unique");
        CharSegmenter { vocab }
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmenterKind {
    Char,
    Bpe,
    Unigram,
}

impl std::str::FromStr for SegmenterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "char" => Ok(SegmenterKind::Char),
            "bpe" => Ok(SegmenterKind::Bpe),
            "unigram" | "sr" => Ok(SegmenterKind::Unigram),
            _ => Err(format!(
                "unknown segmenter `{s}` (expected char, bpe or unigram)"
            )),
        }
    }
}

impl std::fmt::Display for SegmenterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SegmenterKind::Char => "char",
            SegmenterKind::Bpe => "bpe",
            SegmenterKind::Unigram => "unigram",
        })
    }
}

/// Any of the supported segmentation models.
#[derive(Debug, Clone)]
pub enum Segmenter {
    Char(CharSegmenter),
    Bpe(BpeModel),
    Unigram(UnigramModel),
}

impl Segmenter {
    pub fn kind(&self) -> SegmenterKind {
        match self {
            Segmenter::Char(_) => SegmenterKind::Char,
            Segmenter::Bpe(_) => SegmenterKind::Bpe,
            Segmenter::Unigram(_) => SegmenterKind::Unigram,
        }
    }

    pub fn vocab(&self) -> &Vocabulary {
        match self {
            Segmenter::Char(m) => m.vocab(),
            Segmenter::Bpe(m) => m.vocab(),
            Segmenter::Unigram(m) => m.vocab(),
        }
    }

    /// Canonical segmentation: character split, BPE, or Viterbi.
    pub fn segment(&self, q: &str) -> Segmentation {
        match self {
            Segmenter::Char(m) => char_segment(q, m.vocab()),
            Segmenter::Bpe(m) => m.segment(q),
            Segmenter::Unigram(m) => m.viterbi(q),
        }
    }

    /// Top-`n` segmentations with their segmentation-model log-probability.
    /// Deterministic segmenters return their single segmentation with 0.
    pub fn nbest(&self, q: &str, n: usize) -> Vec<(Segmentation, f64)> {
        match self {
            Segmenter::Unigram(m) => m.nbest(q, n),
            _ if n == 0 => Vec::new(),
            _ => vec![(self.segment(q), 0.0)],
        }
    }

    /// Draws a segmentation from the segmentation distribution. Only the
    /// unigram model is stochastic.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        q: &str,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> Segmentation {
        match self {
            Segmenter::Unigram(m) => m.sample(q, cfg, rng),
            _ => self.segment(q),
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self, Segmenter::Unigram(_))
    }

    pub fn to_file(&self) -> SegmenterFile {
        let vocab = self.vocab();
        let mut file = SegmenterFile {
            schema: SEGMENTER_SCHEMA,
            kind: self.kind(),
            alphabet: vocab.alphabet().clone(),
            tokens: vocab.tokens().to_vec(),
            merges: None,
            logprobs: None,
        };
        match self {
            Segmenter::Char(_) => {}
            Segmenter::Bpe(m) => file.merges = Some(m.merges().to_vec()),
            Segmenter::Unigram(m) => file.logprobs = Some(m.logprobs().to_vec()),
        }
        file
    }

    pub fn from_file(file: SegmenterFile) -> Result<Self> {
        if file.schema != SEGMENTER_SCHEMA {
            return Err(QacError::ModelFormat(format!(
                "unsupported segmenter schema {}",
                file.schema
            )));
        }
        let vocab = Vocabulary::from_tokens(file.alphabet.clone(), file.tokens)?;
        match file.kind {
            SegmenterKind::Char => {
                if vocab.len() != vocab.alphabet().len() + crate::vocab::NUM_SPECIALS {
                    return Err(QacError::ModelFormat(
                        "char segmenter must not have multi-character tokens".into(),
                    ));
                }
                Ok(Segmenter::Char(CharSegmenter { vocab }))
            }
            SegmenterKind::Bpe => {
                let merges = file
                    .merges
                    .ok_or_else(|| QacError::ModelFormat("bpe model without merges".into()))?;
                Ok(Segmenter::Bpe(BpeModel::from_parts(vocab, merges)?))
            }
            SegmenterKind::Unigram => {
                let lp = file.logprobs.ok_or_else(|| {
                    QacError::ModelFormat("unigram model without logprobs".into())
                })?;
                Ok(Segmenter::Unigram(UnigramModel::from_logprobs(vocab, lp)?))
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_file())?;
        crate::corpus::write_file(path, (json + "\n").as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| QacError::io(path, e))?;
        Self::from_file(serde_json::from_str(&text)?)
    }
}

pub const SEGMENTER_SCHEMA: u32 = 1;

/// On-disk segmentation model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmenterFile {
    pub schema: u32,
    #[serde(rename = "type")]
    pub kind: SegmenterKind,
    pub alphabet: Alphabet,
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub merges: Option<Vec<(String, String)>>,
    /// Indexed like `tokens`; specials carry 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn char_segment_examples() {
        let v = Vocabulary::new(Alphabet::new("abc".chars()), std::iter::empty()).unwrap();
        assert_eq!(char_segment("abc", &v).pieces(&v), ["a", "b", "c"]);
        assert!(char_segment("", &v).is_empty());
        assert_eq!(char_segment("a€b", &v).pieces(&v), ["a", "<UNK>", "b"]);
    }

    #[test]
    fn file_round_trip_all_kinds() {
        let corpus = ["abab", "abc", "cab"];
        let alphabet = Alphabet::from_corpus(corpus);
        let bpe = train_bpe(&corpus, &alphabet, alphabet.len() + 5).unwrap();
        let uni = UnigramTrainer::new(alphabet.len() + 5)
            .train(&corpus, &alphabet)
            .unwrap();
        for seg in [
            Segmenter::Char(CharSegmenter::new(alphabet.clone())),
            Segmenter::Bpe(bpe),
            Segmenter::Unigram(uni),
        ] {
            let json = serde_json::to_string(&seg.to_file()).unwrap();
            let back = Segmenter::from_file(serde_json::from_str(&json).unwrap()).unwrap();
            assert_eq!(back.to_file(), seg.to_file());
            assert_eq!(back.segment("abcab"), seg.segment("abcab"));
            assert!(json.contains(&format!("\"type\":\"{}\"", seg.kind())));
        }
    }
}
