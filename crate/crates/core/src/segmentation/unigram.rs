use std::collections::HashMap;

use rand::Rng;

use super::lattice::{Lattice, Path};
use super::{SamplerConfig, Segmentation};
use crate::error::{QacError, Result};
use crate::math::log_sum_exp;
use crate::vocab::{Alphabet, TokenId, Vocabulary, NUM_SPECIALS};

/// Log-probability gap between the least likely token and `<UNK>`.
const UNK_PENALTY: f64 = 10.0;

/// Unigram segmentation model: independent token probabilities over the
/// non-special vocabulary.
#[derive(Debug, Clone)]
pub struct UnigramModel {
    vocab: Vocabulary,
    logprobs: Vec<f64>,
    unk_logprob: f64,
}

impl UnigramModel {
    /// `logprobs` is indexed by token id; entries for specials are ignored.
    pub fn from_logprobs(vocab: Vocabulary, mut logprobs: Vec<f64>) -> Result<Self> {
        if logprobs.len() != vocab.len() {
            return Err(QacError::ModelFormat(format!(
                "{} log-probabilities for {} tokens",
                logprobs.len(),
                vocab.len()
            )));
        }
        for lp in logprobs.iter_mut().take(NUM_SPECIALS) {
            *lp = 0.0;
        }
        let regular = &logprobs[NUM_SPECIALS..];
        if regular.iter().any(|lp| lp.is_nan() || *lp > 0.0) {
            return Err(QacError::ModelFormat(
                "invalid token log-probability".into(),
            ));
        }
        if let Some(c) = vocab
            .alphabet()
            .chars()
            .iter()
            .find(|&&c| !logprobs[vocab.char_id(c).unwrap() as usize].is_finite())
        {
            return Err(QacError::ModelFormat(format!(
                "character {c:?} has zero probability"
            )));
        }
        let total = log_sum_exp(regular);
        if total.abs() > 1e-6 {
            return Err(QacError::ModelFormat(format!(
                "token probabilities sum to {}",
                total.exp()
            )));
        }
        let min = regular
            .iter()
            .copied()
            .filter(|x| x.is_finite())
            .fold(0.0, f64::min);
        Ok(UnigramModel {
            vocab,
            logprobs,
            unk_logprob: min - UNK_PENALTY,
        })
    }

    /// Builds a model from explicit `(surface, probability)` pairs. Every
    /// alphabet character must be listed; multi-character tokens take ids
    /// in the given order.
    pub fn from_probs(alphabet: Alphabet, pieces: &[(&str, f64)]) -> Result<Self> {
        let extra = pieces
            .iter()
            .filter(|(s, _)| s.chars().count() > 1)
            .map(|(s, _)| s.to_string());
        let vocab = Vocabulary::new(alphabet, extra)?;
        let mut lp = vec![f64::NEG_INFINITY; vocab.len()];
        for (s, p) in pieces {
            let id = vocab
                .id(s)
                .ok_or_else(|| QacError::ModelFormat(format!("unknown piece `{s}`")))?;
            lp[id as usize] = p.ln();
        }
        Self::from_logprobs(vocab, lp)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn logprob(&self, id: TokenId) -> f64 {
        self.logprobs[id as usize]
    }

    fn lattice(&self, q: &str) -> Lattice {
        let chars: Vec<char> = q.chars().collect();
        Lattice::build(&chars, &self.vocab, &self.logprobs, self.unk_logprob, None)
    }

    /// Unigram log-probability of a token sequence.
    pub fn score(&self, ids: &[TokenId]) -> f64 {
        ids.iter()
            .map(|&id| {
                if Vocabulary::is_special(id) {
                    self.unk_logprob
                } else {
                    self.logprob(id)
                }
            })
            .sum()
    }

    /// Most probable segmentation. Ties go to fewer tokens, then the
    /// smaller id sequence.
    pub fn viterbi(&self, q: &str) -> Segmentation {
        let ids = self
            .lattice(q)
            .nbest(1)
            .pop()
            .map(|p| p.ids)
            .unwrap_or_default();
        Segmentation::from_ids(ids, &self.vocab)
    }

    /// Up to `n` segmentations by descending probability.
    pub fn nbest(&self, q: &str, n: usize) -> Vec<(Segmentation, f64)> {
        self.lattice(q)
            .nbest(n)
            .into_iter()
            .map(|Path { logp, ids }| (Segmentation::from_ids(ids, &self.vocab), logp))
            .collect()
    }

    /// Log of the total probability of all segmentations of `q`.
    pub fn marginal_logprob(&self, q: &str) -> f64 {
        let lat = self.lattice(q);
        lat.forward(1.0)[lat.len()]
    }

    /// Samples a segmentation with probability proportional to `p(t)^alpha`,
    /// either over the whole lattice or over the n-best list.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        q: &str,
        cfg: &SamplerConfig,
        rng: &mut R,
    ) -> Segmentation {
        let lat = self.lattice(q);
        let ids = match cfg.nbest_size {
            None => {
                let alpha = lat.forward(cfg.alpha);
                lat.sample(&alpha, cfg.alpha, rng)
            }
            Some(l) => {
                let paths = lat.nbest(l.max(1));
                let scores: Vec<f64> = paths.iter().map(|p| cfg.alpha * p.logp).collect();
                let z = log_sum_exp(&scores);
                let mut r: f64 = rng.random::<f64>();
                let mut chosen = paths.len().saturating_sub(1);
                for (i, s) in scores.iter().enumerate() {
                    let w = (s - z).exp();
                    if r < w {
                        chosen = i;
                        break;
                    }
                    r -= w;
                }
                paths
                    .into_iter()
                    .nth(chosen)
                    .map(|p| p.ids)
                    .unwrap_or_default()
            }
        };
        Segmentation::from_ids(ids, &self.vocab)
    }
}

/// EM trainer for [`UnigramModel`].
///
/// The seed vocabulary is every substring of up to `max_piece_chars`
/// characters occurring at least `min_seed_freq` times, plus the alphabet.
/// Each round runs `em_iterations` EM steps and then removes
/// `prune_fraction` of the multi-character tokens with the smallest
/// estimated likelihood loss, until `vocab_size` is reached.
#[derive(Debug, Clone)]
pub struct UnigramTrainer {
    pub vocab_size: usize,
    pub em_iterations: usize,
    pub prune_fraction: f64,
    pub max_piece_chars: usize,
    pub min_seed_freq: u64,
    /// Pseudo-count added to every character token in the M-step.
    pub char_pseudo_count: f64,
}

impl UnigramTrainer {
    pub fn new(vocab_size: usize) -> Self {
        UnigramTrainer {
            vocab_size,
            em_iterations: 2,
            prune_fraction: 0.25,
            max_piece_chars: 8,
            min_seed_freq: 2,
            char_pseudo_count: 0.5,
        }
    }

    pub fn train<S: AsRef<str>>(&self, corpus: &[S], alphabet: &Alphabet) -> Result<UnigramModel> {
        if corpus.is_empty() {
            return Err(QacError::EmptyCorpus);
        }
        let base = NUM_SPECIALS + alphabet.len();
        if self.vocab_size < base {
            return Err(QacError::VocabTooSmall {
                requested: self.vocab_size,
                minimum: base,
            });
        }
        if !(0.0..1.0).contains(&self.prune_fraction) {
            return Err(QacError::Config(format!(
                "prune_fraction must be in [0, 1), got {}",
                self.prune_fraction
            )));
        }
        let target = self.vocab_size - base;
        let sentences = alphabet_runs(corpus, alphabet);

        // Seed pieces with their raw frequencies.
        let mut sub_counts: HashMap<&[char], u64> = HashMap::new();
        let mut char_counts: HashMap<char, u64> = HashMap::new();
        for (chars, n) in &sentences {
            for (i, c) in chars.iter().enumerate() {
                *char_counts.entry(*c).or_default() += n;
                for len in 2..=self.max_piece_chars.min(chars.len() - i) {
                    *sub_counts.entry(&chars[i..i + len]).or_default() += n;
                }
            }
        }
        let mut seeds: Vec<(String, u64)> = sub_counts
            .into_iter()
            .filter(|&(_, n)| n >= self.min_seed_freq)
            .map(|(s, n)| (s.iter().collect(), n))
            .collect();
        seeds.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut pieces: Vec<String> = seeds.iter().map(|(s, _)| s.clone()).collect();
        let mut vocab = Vocabulary::new(alphabet.clone(), pieces.iter().cloned())?;
        let mut freqs = vec![0.0; vocab.len()];
        for c in alphabet.chars() {
            let n = char_counts.get(c).copied().unwrap_or(0) as f64;
            freqs[vocab.char_id(*c).unwrap() as usize] = n + self.char_pseudo_count;
        }
        for (i, (_, n)) in seeds.iter().enumerate() {
            freqs[base + i] = *n as f64;
        }
        let mut logprobs = normalize_counts(&freqs);

        loop {
            for _ in 0..self.em_iterations.max(1) {
                let counts = self.expected_counts(&sentences, &vocab, &logprobs);
                logprobs = self.m_step(&vocab, counts);
            }
            if pieces.len() <= target {
                break;
            }
            let drop = self.pick_prunable(&sentences, &vocab, &logprobs, target);
            let keep: Vec<(String, f64)> = pieces
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop[*i])
                .map(|(i, s)| (s.clone(), logprobs[base + i]))
                .collect();
            let char_lp: Vec<f64> = logprobs[..base].to_vec();
            pieces = keep.iter().map(|(s, _)| s.clone()).collect();
            vocab = Vocabulary::new(alphabet.clone(), pieces.iter().cloned())?;
            logprobs = char_lp;
            logprobs.extend(keep.iter().map(|(_, lp)| *lp));
        }

        // Final ordering: characters, then pieces by probability. Pieces that
        // lost all mass are dropped.
        let mut ranked: Vec<(String, f64)> = pieces
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), logprobs[base + i]))
            .filter(|(_, lp)| lp.is_finite())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let final_vocab = Vocabulary::new(alphabet.clone(), ranked.iter().map(|(s, _)| s.clone()))?;
        let mut lp: Vec<f64> = logprobs[..base].to_vec();
        lp.extend(ranked.iter().map(|(_, l)| *l));
        let z = log_sum_exp(&lp[NUM_SPECIALS..]);
        for x in lp.iter_mut().skip(NUM_SPECIALS) {
            *x -= z;
        }
        UnigramModel::from_logprobs(final_vocab, lp)
    }

    fn expected_counts(
        &self,
        sentences: &[(Vec<char>, u64)],
        vocab: &Vocabulary,
        logprobs: &[f64],
    ) -> Vec<f64> {
        let mut counts = vec![0.0; vocab.len()];
        for (chars, n) in sentences {
            let lat = Lattice::build(chars, vocab, logprobs, f64::NEG_INFINITY, None);
            lat.accumulate_posteriors(*n as f64, &mut counts);
        }
        counts
    }

    fn m_step(&self, vocab: &Vocabulary, mut counts: Vec<f64>) -> Vec<f64> {
        for c in vocab.alphabet().chars() {
            counts[vocab.char_id(*c).unwrap() as usize] += self.char_pseudo_count;
        }
        normalize_counts(&counts)
    }

    /// Marks multi-character pieces (indexed from 0) to remove this round.
    fn pick_prunable(
        &self,
        sentences: &[(Vec<char>, u64)],
        vocab: &Vocabulary,
        logprobs: &[f64],
        target: usize,
    ) -> Vec<bool> {
        let base = NUM_SPECIALS + vocab.alphabet().len();
        let n_pieces = vocab.len() - base;

        // Token frequencies along each sentence's best path.
        let mut freq = vec![0.0; vocab.len()];
        for (chars, n) in sentences {
            let lat = Lattice::build(chars, vocab, logprobs, f64::NEG_INFINITY, None);
            if let Some(p) = lat.nbest(1).pop() {
                for id in p.ids {
                    freq[id as usize] += *n as f64;
                }
            }
        }
        let vsum: f64 = freq.iter().sum();

        let mut losses: Vec<(f64, usize)> = Vec::with_capacity(n_pieces);
        for i in 0..n_pieces {
            let id = (base + i) as TokenId;
            let f = freq[id as usize];
            let loss = if !logprobs[id as usize].is_finite() {
                f64::NEG_INFINITY
            } else if f == 0.0 {
                0.0
            } else {
                // Re-segment the piece without itself and move its count to
                // the alternative tokens.
                let chars: Vec<char> = vocab.surface(id).unwrap().chars().collect();
                let lat = Lattice::build(&chars, vocab, logprobs, f64::NEG_INFINITY, Some(id));
                let alt = lat.nbest(1).pop().map(|p| p.ids).unwrap_or_default();
                let logprob_piece = f.ln() - vsum.ln();
                let logsum_alt = (vsum + f * (alt.len() as f64 - 1.0)).ln();
                let logprob_alt: f64 = alt
                    .iter()
                    .map(|&a| (freq[a as usize] + f).ln() - logsum_alt)
                    .sum();
                f * (logprob_piece - logprob_alt)
            };
            losses.push((loss, i));
        }
        let surfaces = &vocab.tokens()[base..];
        losses.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| surfaces[a.1].cmp(&surfaces[b.1]))
        });
        let by_fraction = ((n_pieces as f64) * self.prune_fraction) as usize;
        let n_drop = by_fraction.max(1).min(n_pieces - target);
        let mut drop = vec![false; n_pieces];
        for &(_, i) in losses.iter().take(n_drop) {
            drop[i] = true;
        }
        drop
    }
}

fn normalize_counts(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts[NUM_SPECIALS..].iter().sum();
    counts
        .iter()
        .enumerate()
        .map(|(i, &c)| {
            if i < NUM_SPECIALS {
                0.0
            } else if c > 0.0 {
                (c / total).ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect()
}

/// Splits queries into maximal runs of alphabet characters and counts
/// identical runs. Sorted for deterministic iteration.
fn alphabet_runs<S: AsRef<str>>(corpus: &[S], alphabet: &Alphabet) -> Vec<(Vec<char>, u64)> {
    let mut counts: HashMap<Vec<char>, u64> = HashMap::new();
    for q in corpus {
        let mut run = Vec::new();
        for c in q.as_ref().chars() {
            if alphabet.contains(c) {
                run.push(c);
            } else if !run.is_empty() {
                *counts.entry(std::mem::take(&mut run)).or_default() += 1;
            }
        }
        if !run.is_empty() {
            *counts.entry(run).or_default() += 1;
        }
    }
    let mut v: Vec<_> = counts.into_iter().collect();
    v.sort_unstable();
    v
}
