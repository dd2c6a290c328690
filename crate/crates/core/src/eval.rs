//! Ranking metrics and the evaluation harness.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decode::{Completion, DecodeConfig, Decoder};
use crate::error::{QacError, Result};
use crate::lm::TokenLanguageModel;
use crate::mpc::CompletionTrie;

/// Anything that turns a prefix into ranked candidates.
pub trait Completer: Sync {
    fn complete(&self, prefix: &str) -> Result<Completion>;
}

pub struct MpcCompleter<'a> {
    pub trie: &'a CompletionTrie,
    pub n: usize,
}

impl Completer for MpcCompleter<'_> {
    fn complete(&self, prefix: &str) -> Result<Completion> {
        let candidates = self.trie.complete(prefix, self.n);
        Ok(Completion {
            sequences: candidates.len(),
            candidates,
            decode_length: 0,
        })
    }
}

pub struct LmCompleter<'a, M: TokenLanguageModel> {
    pub decoder: Decoder<'a, M>,
    pub config: DecodeConfig,
}

impl<M> Completer for LmCompleter<'_, M>
where
    M: TokenLanguageModel + Sync,
{
    fn complete(&self, prefix: &str) -> Result<Completion> {
        self.decoder.complete(prefix, &self.config)
    }
}

/// `1/k` for the 1-based rank `k` of `q`, or 0.
pub fn reciprocal_rank<S: AsRef<str>>(q: &str, candidates: &[S]) -> f64 {
    candidates
        .iter()
        .position(|c| c.as_ref() == q)
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Like [`reciprocal_rank`] but a candidate `c` also matches when `q`
/// starts with `c` followed by a space.
pub fn partial_reciprocal_rank<S: AsRef<str>>(q: &str, candidates: &[S]) -> f64 {
    candidates
        .iter()
        .position(|c| {
            let c = c.as_ref();
            q == c || q.strip_prefix(c).is_some_and(|rest| rest.starts_with(' '))
        })
        .map_or(0.0, |i| 1.0 / (i + 1) as f64)
}

/// Deletes trailing characters of `q` one at a time and counts how many
/// deletions keep `q` among the candidates, stopping at the first miss.
/// `None` when `q` has no prefix of at least `min_prefix_len` characters.
pub fn recoverable_length_with(
    q: &str,
    min_prefix_len: usize,
    mut contains: impl FnMut(&str) -> Result<bool>,
) -> Result<Option<usize>> {
    let chars: Vec<char> = q.chars().collect();
    if chars.len() <= min_prefix_len {
        return Ok(None);
    }
    let mut rl = 0;
    for l in 1..=chars.len() - min_prefix_len {
        let prefix: String = chars[..chars.len() - l].iter().collect();
        if !contains(&prefix)? {
            break;
        }
        rl = l;
    }
    Ok(Some(rl))
}

pub fn recoverable_length<C: Completer + ?Sized>(
    q: &str,
    model: &C,
    min_prefix_len: usize,
) -> Result<Option<usize>> {
    recoverable_length_with(q, min_prefix_len, |p| {
        Ok(model.complete(p)?.candidates.iter().any(|c| c.query == q))
    })
}

/// Arithmetic mean; 0 for an empty slice.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Uniform prefix lengths in `[min_prefix_len, |q| - 1]`. Each query index
/// draws from its own ChaCha stream, so samples do not depend on iteration
/// order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrefixSampler {
    pub min_prefix_len: usize,
    pub seed: u64,
}

impl Default for PrefixSampler {
    fn default() -> Self {
        PrefixSampler {
            min_prefix_len: 1,
            seed: 0,
        }
    }
}

impl PrefixSampler {
    pub fn sample(&self, q: &str, index: usize) -> Option<String> {
        let chars: Vec<char> = q.chars().collect();
        let min = self.min_prefix_len.max(1);
        if chars.len() <= min {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        let len = rng.random_range(min..chars.len());
        Some(chars[..len].iter().collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Also compute recoverable lengths (one completion call per character).
    pub with_mrl: bool,
    /// Spread queries over threads. Metric values are unchanged; QPS is
    /// not reported.
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResult {
    pub query: String,
    pub seen: bool,
    pub prefix: Option<String>,
    pub rr: f64,
    pub prr: f64,
    pub rl: Option<usize>,
    pub decode_length: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumMetrics {
    pub count: usize,
    /// Queries with a sampled prefix.
    pub evaluated: usize,
    pub mrr: f64,
    pub pmrr: f64,
    pub mrl: Option<f64>,
    /// Queries contributing to MRL.
    pub mrl_count: usize,
    /// Queries too short for a recoverable length.
    pub mrl_excluded: usize,
    pub mean_decode_length: f64,
}

impl StratumMetrics {
    fn from_results<'a>(rs: impl Iterator<Item = &'a QueryResult>, with_mrl: bool) -> Self {
        let rs: Vec<&QueryResult> = rs.collect();
        let sampled: Vec<&&QueryResult> = rs.iter().filter(|r| r.prefix.is_some()).collect();
        let rr: Vec<f64> = sampled.iter().map(|r| r.rr).collect();
        let prr: Vec<f64> = sampled.iter().map(|r| r.prr).collect();
        let dl: Vec<f64> = sampled.iter().map(|r| r.decode_length as f64).collect();
        let rls: Vec<f64> = rs.iter().filter_map(|r| r.rl).map(|x| x as f64).collect();
        StratumMetrics {
            count: rs.len(),
            evaluated: sampled.len(),
            mrr: mean(&rr),
            pmrr: mean(&prr),
            mrl: with_mrl.then(|| mean(&rls)),
            mrl_count: rls.len(),
            mrl_excluded: if with_mrl { rs.len() - rls.len() } else { 0 },
            mean_decode_length: mean(&dl),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub sampler: PrefixSampler,
    pub prefix_distribution: String,
    pub seen: StratumMetrics,
    pub unseen: StratumMetrics,
    pub all: StratumMetrics,
    /// Sequential completions per second on sampled prefixes.
    pub qps: Option<f64>,
    pub config: serde_json::Value,
    #[serde(skip)]
    pub per_query: Vec<QueryResult>,
}

fn evaluate_one<C: Completer + ?Sized>(
    model: &C,
    q: &str,
    seen: bool,
    index: usize,
    sampler: &PrefixSampler,
    with_mrl: bool,
) -> Result<QueryResult> {
    let prefix = sampler.sample(q, index);
    let (rr, prr, decode_length) = match &prefix {
        Some(p) => {
            let c = model.complete(p)?;
            let qs: Vec<&str> = c.candidates.iter().map(|c| c.query.as_str()).collect();
            (
                reciprocal_rank(q, &qs),
                partial_reciprocal_rank(q, &qs),
                c.decode_length,
            )
        }
        None => (0.0, 0.0, 0),
    };
    let rl = if with_mrl {
        recoverable_length(q, model, sampler.min_prefix_len)?
    } else {
        None
    };
    Ok(QueryResult {
        query: q.to_string(),
        seen,
        prefix,
        rr,
        prr,
        rl,
        decode_length,
    })
}

/// Evaluates `model` on `test` with one sampled prefix per query.
pub fn measure<C: Completer + ?Sized>(
    model: &C,
    name: &str,
    test: &[String],
    seen: &[bool],
    sampler: &PrefixSampler,
    opts: EvalOptions,
    config: serde_json::Value,
) -> Result<EvalReport> {
    if test.len() != seen.len() {
        return Err(QacError::Config(format!(
            "{} test queries but {} seen flags",
            test.len(),
            seen.len()
        )));
    }
    if test.is_empty() {
        return Err(QacError::EmptySplit("test"));
    }
    let (per_query, qps) = if opts.parallel {
        let rs = (0..test.len())
            .into_par_iter()
            .map(|i| evaluate_one(model, &test[i], seen[i], i, sampler, opts.with_mrl))
            .collect::<Result<Vec<_>>>()?;
        (rs, None)
    } else {
        // Timing covers only the sampled-prefix calls.
        let mut rs = Vec::with_capacity(test.len());
        let mut elapsed = 0.0;
        let mut calls = 0usize;
        for (i, q) in test.iter().enumerate() {
            let started = Instant::now();
            let mut r = evaluate_one(model, q, seen[i], i, sampler, false)?;
            elapsed += started.elapsed().as_secs_f64();
            calls += r.prefix.is_some() as usize;
            if opts.with_mrl {
                r.rl = recoverable_length(q, model, sampler.min_prefix_len)?;
            }
            rs.push(r);
        }
        (rs, Some(calls as f64 / elapsed.max(1e-9)))
    };
    let w = opts.with_mrl;
    Ok(EvalReport {
        model: name.to_string(),
        sampler: *sampler,
        prefix_distribution: format!(
            "uniform over lengths [{}, |q|-1]",
            sampler.min_prefix_len.max(1)
        ),
        seen: StratumMetrics::from_results(per_query.iter().filter(|r| r.seen), w),
        unseen: StratumMetrics::from_results(per_query.iter().filter(|r| !r.seen), w),
        all: StratumMetrics::from_results(per_query.iter(), w),
        qps,
        config,
        per_query,
    })
}

impl EvalReport {
    /// Metric values only, without timing; equal across runs with the same
    /// seed.
    pub fn metrics_json(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        v.as_object_mut().unwrap().remove("qps");
        v
    }

    pub fn to_table(&self) -> String {
        let f = |x: f64| format!("{x:.3}");
        let mrl = |m: &StratumMetrics| m.mrl.map_or("-".to_string(), f);
        let mut s = String::new();
        s.push_str(&format!(
            "model: {}  prefixes: {} (seed {})\n",
            self.model, self.prefix_distribution, self.sampler.seed
        ));
        s.push_str("stratum      n      MRR    PMRR   MRL    decode\n");
        for (label, m) in [
            ("seen", &self.seen),
            ("unseen", &self.unseen),
            ("all", &self.all),
        ] {
            s.push_str(&format!(
                "{:<8} {:>6}  {:>6} {:>6} {:>6} {:>6.2}\n",
                label,
                m.count,
                f(m.mrr),
                f(m.pmrr),
                mrl(m),
                m.mean_decode_length
            ));
        }
        match self.qps {
            Some(q) => s.push_str(&format!("QPS: {q:.1}\n")),
            None => s.push_str("QPS: n/a (parallel run)\n"),
        }
        if self.all.mrl_excluded > 0 {
            s.push_str(&format!(
                "{} queries too short for a recoverable length\n",
                self.all.mrl_excluded
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reciprocal_rank_examples() {
        assert_eq!(reciprocal_rank("a", &["a", "b"]), 1.0);
        assert_eq!(reciprocal_rank("c", &["a", "b", "c"]), 1.0 / 3.0);
        assert_eq!(reciprocal_rank("z", &["a"]), 0.0);
        assert_eq!(reciprocal_rank::<&str>("z", &[]), 0.0);
    }

    #[test]
    fn partial_rank_examples() {
        assert_eq!(
            partial_reciprocal_rank("national bank", &["national", "national bank"]),
            1.0
        );
        assert_eq!(partial_reciprocal_rank("nation", &["national"]), 0.0);
        assert_eq!(partial_reciprocal_rank("abc", &["abc"]), 1.0);
        assert_eq!(partial_reciprocal_rank("national bank", &["nat", "x"]), 0.0);
    }

    #[test]
    fn recoverable_length_examples() {
        let q = "abcdefgh";
        let rl = recoverable_length_with(q, 1, |p| Ok(p.len() >= q.len() - 3)).unwrap();
        assert_eq!(rl, Some(3));
        assert_eq!(
            recoverable_length_with(q, 1, |_| Ok(false)).unwrap(),
            Some(0)
        );
        assert_eq!(
            recoverable_length_with(q, 1, |_| Ok(true)).unwrap(),
            Some(7)
        );
        // Stops at the first miss even if shorter prefixes succeed again.
        let rl = recoverable_length_with(q, 1, |p| Ok(p.len() != 6)).unwrap();
        assert_eq!(rl, Some(1));
        assert_eq!(recoverable_length_with("a", 1, |_| Ok(true)).unwrap(), None);
    }

    #[test]
    fn mean_examples() {
        assert_eq!(mean(&[1.0, 0.5]), 0.75);
        assert_eq!(mean(&[3.0, 5.0]), 4.0);
        assert_eq!(mean(&[]), 0.0);
    }

    #[test]
    fn sampler_is_proper_and_deterministic() {
        let s = PrefixSampler {
            min_prefix_len: 1,
            seed: 9,
        };
        for i in 0..200 {
            let p = s.sample("hello world", i).unwrap();
            assert!((1..11).contains(&p.len()));
            assert!("hello world".starts_with(&p));
            assert_eq!(s.sample("hello world", i).unwrap(), p);
        }
        assert_eq!(s.sample("a", 0), None);
    }

    #[test]
    fn mpc_fully_seen_toy() {
        let trie = CompletionTrie::from_queries(["apple", "banana", "cherry"]).unwrap();
        let m = MpcCompleter { trie: &trie, n: 10 };
        let test: Vec<String> = ["apple", "banana", "cherry"].map(String::from).to_vec();
        let report = measure(
            &m,
            "mpc",
            &test,
            &[true, true, true],
            &PrefixSampler::default(),
            EvalOptions {
                with_mrl: true,
                parallel: false,
            },
            serde_json::Value::Null,
        )
        .unwrap();
        assert_eq!(report.seen.mrr, 1.0);
        assert_eq!(report.unseen.count, 0);
        assert_eq!(report.all.mrl, Some(14.0 / 3.0));
        assert!(report.to_table().contains("seen"));
    }
}
