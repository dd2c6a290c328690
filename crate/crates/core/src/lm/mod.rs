//! Autoregressive token language models.

mod ngram;

pub use ngram::{train_ngram, NGramConfig, NGramLm, NGramState};

use crate::error::{QacError, Result};
use crate::math::log_sum_exp;
use crate::segmentation::{enumerate_all_segmentations, Segmenter};
use crate::vocab::{TokenId, Vocabulary, EOS};

/// `p(t_i | t_<i)` over a fixed vocabulary.
///
/// `next_logprobs` returns a full log-distribution indexed by token id;
/// `advance` conditions a state on one more token.
pub trait TokenLanguageModel {
    type State: Clone;

    fn vocab_size(&self) -> usize;

    fn initial_state(&self) -> Self::State;

    fn next_logprobs(&self, state: &Self::State) -> Vec<f64>;

    fn advance(&self, state: &Self::State, token: TokenId) -> Self::State;
}

/// `Σ log p(t_i | t_<i) + log p(<EOS> | t)`, starting from `<BOS>`.
pub fn token_seq_logprob<M: TokenLanguageModel + ?Sized>(lm: &M, ids: &[TokenId]) -> Result<f64> {
    let mut state = lm.initial_state();
    let mut total = 0.0;
    for &id in ids {
        if id as usize >= lm.vocab_size() {
            return Err(QacError::UnknownToken(id));
        }
        total += lm.next_logprobs(&state)[id as usize];
        state = lm.advance(&state, id);
    }
    Ok(total + lm.next_logprobs(&state)[EOS as usize])
}

/// Exact query log-probability: log-sum over every segmentation of `q`.
/// Limited to short strings.
pub fn query_logprob_exact<M: TokenLanguageModel + ?Sized>(
    lm: &M,
    q: &str,
    vocab: &Vocabulary,
) -> Result<f64> {
    let terms = enumerate_all_segmentations(q, vocab)?
        .iter()
        .map(|s| token_seq_logprob(lm, &s.ids))
        .collect::<Result<Vec<f64>>>()?;
    Ok(log_sum_exp(&terms))
}

/// Query log-probability approximated by the segmenter's canonical
/// segmentation.
pub fn query_logprob_best<M: TokenLanguageModel + ?Sized>(
    lm: &M,
    segmenter: &Segmenter,
    q: &str,
) -> Result<f64> {
    token_seq_logprob(lm, &segmenter.segment(q).ids)
}
