#![allow(dead_code)]

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qac_core::lm::{train_ngram, NGramConfig, NGramLm, TokenLanguageModel};
use qac_core::segmentation::{SamplerConfig, Segmenter, UnigramModel};
use qac_core::vocab::{Alphabet, TokenId, Vocabulary, EOS};

/// Queries built from Zipf-distributed pseudo-words over a lexicon of a few
/// thousand words; popular queries recur.
pub fn synthetic_queries(n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let onsets = [
        "b", "c", "d", "f", "g", "h", "j", "k", "l", "m", "n", "p", "qu", "r", "s", "t", "v", "w",
        "y", "z", "st", "tr", "ch", "sh", "br", "pl", "gr", "th",
    ];
    let vowels = ["a", "e", "i", "o", "u", "ea", "ou", "ai", "y"];
    let codas = [
        "", "", "", "n", "r", "s", "t", "ng", "ck", "l", "m", "x", "rd", "st",
    ];
    let mut words: Vec<String> = Vec::new();
    let mut known = std::collections::HashSet::new();
    while words.len() < 5000 {
        let syllables = rng.random_range(1..=4);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(onsets.choose(&mut rng).unwrap());
            w.push_str(vowels.choose(&mut rng).unwrap());
        }
        w.push_str(codas.choose(&mut rng).unwrap());
        if rng.random_bool(0.05) {
            w.push_str(&rng.random_range(0..100).to_string());
        }
        if w.len() >= 2 && known.insert(w.clone()) {
            words.push(w);
        }
    }
    // Inverse-CDF sampling of 1/(rank+1) weights.
    let cdf = |k: usize| -> Vec<f64> {
        let mut acc = 0.0;
        (1..=k)
            .map(|r| {
                acc += 1.0 / r as f64;
                acc
            })
            .collect()
    };
    let word_cdf = cdf(words.len());
    let pool_cdf = cdf(3000);
    let draw = |rng: &mut ChaCha8Rng, c: &[f64], k: usize| -> usize {
        let u = rng.random::<f64>() * c[k - 1];
        c[..k].partition_point(|&x| x < u).min(k - 1)
    };
    let mut pool: Vec<String> = Vec::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let q = if !pool.is_empty() && rng.random::<f64>() < 0.45 {
            pool[draw(&mut rng, &pool_cdf, pool.len().min(3000))].clone()
        } else {
            let k = rng.random_range(1..=4);
            let q: Vec<&str> = (0..k)
                .map(|_| words[draw(&mut rng, &word_cdf, words.len())].as_str())
                .collect();
            let q = q.join(" ");
            pool.push(q.clone());
            q
        };
        if q.len() >= 3 {
            out.push(q);
        }
    }
    out
}

/// `user \t query \t timestamp` lines for [`synthetic_queries`].
pub fn synthetic_tsv(n: usize, seed: u64) -> String {
    synthetic_queries(n, seed)
        .into_iter()
        .enumerate()
        .map(|(i, q)| format!("u{}\t{}\t{}\n", i % 97, q, 1_000 + i))
        .collect()
}

/// A small random unigram segmenter with a bigram LM trained on sampled
/// segmentations of a random corpus.
pub struct Toy {
    pub seg: Segmenter,
    pub lm: NGramLm,
    pub chars: Vec<char>,
}

pub fn toy_instance(seed: u64) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chars: Vec<char> = if rng.random_bool(0.5) { "ab" } else { "abc" }
        .chars()
        .collect();
    let n_extra = rng.random_range(2..=12 - chars.len());
    let mut extra: Vec<String> = Vec::new();
    let mut guard = 0;
    while extra.len() < n_extra && guard < 1000 {
        guard += 1;
        let len = rng.random_range(2..=3);
        let s: String = (0..len).map(|_| *chars.choose(&mut rng).unwrap()).collect();
        if !extra.contains(&s) {
            extra.push(s);
        }
    }
    let mut pieces: Vec<(String, f64)> = chars
        .iter()
        .map(|c| (c.to_string(), rng.random_range(0.2..1.0)))
        .collect();
    pieces.extend(extra.into_iter().map(|s| (s, rng.random_range(0.05..1.0))));
    let z: f64 = pieces.iter().map(|p| p.1).sum();
    let probs: Vec<(&str, f64)> = pieces.iter().map(|(s, w)| (s.as_str(), w / z)).collect();
    let uni = UnigramModel::from_probs(Alphabet::new(chars.iter().copied()), &probs).unwrap();
    let seg = Segmenter::Unigram(uni);
    let corpus: Vec<String> = (0..25)
        .map(|_| {
            let len = rng.random_range(2..=6);
            (0..len).map(|_| *chars.choose(&mut rng).unwrap()).collect()
        })
        .collect();
    let cfg = NGramConfig {
        order: 2,
        passes: 3,
        sampler: Some(SamplerConfig {
            alpha: 1.0,
            nbest_size: None,
            seed,
        }),
        ..Default::default()
    };
    let lm = train_ngram(&corpus, &seg, &cfg).unwrap();
    Toy { seg, lm, chars }
}

pub fn random_string(rng: &mut ChaCha8Rng, chars: &[char], min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len).map(|_| *chars.choose(rng).unwrap()).collect()
}

/// Every token sequence spelling `q`, by direct recursion over surfaces.
pub fn oracle_segmentations(q: &str, vocab: &Vocabulary) -> Vec<Vec<TokenId>> {
    fn go(rest: &str, vocab: &Vocabulary, stack: &mut Vec<TokenId>, out: &mut Vec<Vec<TokenId>>) {
        if rest.is_empty() {
            out.push(stack.clone());
            return;
        }
        for (i, tok) in vocab.tokens().iter().enumerate().skip(3) {
            if let Some(tail) = rest.strip_prefix(tok.as_str()) {
                stack.push(i as TokenId);
                go(tail, vocab, stack, out);
                stack.pop();
            }
        }
    }
    let mut out = Vec::new();
    go(q, vocab, &mut Vec::new(), &mut out);
    out
}

/// `log p(ids, <EOS>)` by explicit chaining.
pub fn oracle_seq_logprob<M: TokenLanguageModel>(lm: &M, ids: &[TokenId]) -> f64 {
    let mut s = lm.initial_state();
    let mut total = 0.0;
    for &t in ids {
        total += lm.next_logprobs(&s)[t as usize];
        s = lm.advance(&s, t);
    }
    total + lm.next_logprobs(&s)[EOS as usize]
}

/// Naive log-sum-exp: `max + ln Σ exp(x - max)`.
pub fn oracle_lse(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Every string over `chars` of length `0..=max`.
pub fn all_strings(chars: &[char], max: usize) -> Vec<String> {
    let mut out = vec![String::new()];
    let mut frontier = vec![String::new()];
    for _ in 0..max {
        let mut next = Vec::new();
        for s in &frontier {
            for &c in chars {
                let mut t = s.clone();
                t.push(c);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
