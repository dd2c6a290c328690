//! Segmentation lattice over character positions, scored by per-token
//! log-probabilities.

use std::cmp::Ordering;

use rand::Rng;

use crate::math::log_sum_exp_pair;
use crate::vocab::{TokenId, Vocabulary, UNK};

#[derive(Debug, Clone, Copy)]
pub(crate) struct Edge {
    pub start: usize,
    pub token: TokenId,
    pub logp: f64,
}

/// `ends[j]` holds every edge covering `chars[start..j]`.
#[derive(Debug)]
pub(crate) struct Lattice {
    ends: Vec<Vec<Edge>>,
}

#[derive(Debug, Clone)]
pub(crate) struct Path {
    pub logp: f64,
    pub ids: Vec<TokenId>,
}

/// Higher score first, then fewer tokens, then smaller id sequence.
pub(crate) fn path_order(a: &Path, b: &Path) -> Ordering {
    b.logp
        .total_cmp(&a.logp)
        .then(a.ids.len().cmp(&b.ids.len()))
        .then_with(|| a.ids.cmp(&b.ids))
}

impl Lattice {
    /// Edges for every vocabulary token matching at every position, skipping
    /// tokens with `-inf` score and the optional `skip` token. Characters
    /// outside the alphabet get a standalone `<UNK>` edge.
    pub fn build(
        chars: &[char],
        vocab: &Vocabulary,
        logprobs: &[f64],
        unk_logp: f64,
        skip: Option<TokenId>,
    ) -> Lattice {
        let n = chars.len();
        let mut ends: Vec<Vec<Edge>> = vec![Vec::new(); n + 1];
        for start in 0..n {
            if !vocab.alphabet().contains(chars[start]) {
                ends[start + 1].push(Edge {
                    start,
                    token: UNK,
                    logp: unk_logp,
                });
                continue;
            }
            vocab.for_each_prefix_token(&chars[start..], |token, len| {
                let logp = logprobs[token as usize];
                if logp.is_finite() && Some(token) != skip {
                    ends[start + len].push(Edge { start, token, logp });
                }
            });
        }
        Lattice { ends }
    }

    pub fn len(&self) -> usize {
        self.ends.len() - 1
    }

    /// The `n` best paths under [`path_order`].
    pub fn nbest(&self, n: usize) -> Vec<Path> {
        if n == 0 {
            return Vec::new();
        }
        let mut best: Vec<Vec<Path>> = Vec::with_capacity(self.ends.len());
        best.push(vec![Path {
            logp: 0.0,
            ids: Vec::new(),
        }]);
        for j in 1..self.ends.len() {
            let mut cands = Vec::new();
            for e in &self.ends[j] {
                for p in &best[e.start] {
                    let mut ids = Vec::with_capacity(p.ids.len() + 1);
                    ids.extend_from_slice(&p.ids);
                    ids.push(e.token);
                    cands.push(Path {
                        logp: p.logp + e.logp,
                        ids,
                    });
                }
            }
            cands.sort_by(path_order);
            cands.truncate(n);
            best.push(cands);
        }
        best.pop().unwrap_or_default()
    }

    /// Forward log-sums with edge scores multiplied by `scale`.
    pub fn forward(&self, scale: f64) -> Vec<f64> {
        let mut alpha = vec![f64::NEG_INFINITY; self.ends.len()];
        alpha[0] = 0.0;
        for j in 1..self.ends.len() {
            let mut acc = f64::NEG_INFINITY;
            for e in &self.ends[j] {
                acc = log_sum_exp_pair(acc, alpha[e.start] + scale * e.logp);
            }
            alpha[j] = acc;
        }
        alpha
    }

    /// Backward sampling given forward sums computed with the same `scale`.
    pub fn sample<R: Rng + ?Sized>(&self, alpha: &[f64], scale: f64, rng: &mut R) -> Vec<TokenId> {
        let mut out = Vec::new();
        let mut j = self.len();
        while j > 0 {
            let edges = &self.ends[j];
            let mut r: f64 = rng.random::<f64>();
            let mut chosen = edges[edges.len() - 1];
            for e in edges {
                let w = (alpha[e.start] + scale * e.logp - alpha[j]).exp();
                if r < w {
                    chosen = *e;
                    break;
                }
                r -= w;
            }
            out.push(chosen.token);
            j = chosen.start;
        }
        out.reverse();
        out
    }

    /// Adds `weight * posterior(edge)` to `counts[token]` for every edge and
    /// returns the log partition function.
    pub fn accumulate_posteriors(&self, weight: f64, counts: &mut [f64]) -> f64 {
        let alpha = self.forward(1.0);
        let n = self.len();
        let mut beta = vec![f64::NEG_INFINITY; n + 1];
        beta[n] = 0.0;
        for j in (1..=n).rev() {
            for e in &self.ends[j] {
                beta[e.start] = log_sum_exp_pair(beta[e.start], e.logp + beta[j]);
            }
        }
        let z = alpha[n];
        if !z.is_finite() {
            return z;
        }
        for j in 1..=n {
            for e in &self.ends[j] {
                let post = (alpha[e.start] + e.logp + beta[j] - z).exp();
                counts[e.token as usize] += weight * post;
            }
        }
        z
    }
}
