//! Prefix-constrained beam search with retrace seeding and duplicate
//! merging.
//!
//! For a prefix `p` and retrace limit `L`, case `r` seeds the beam with a
//! segmentation of `p[..|p|-r]` and forces the first generated token to
//! start with the last `r` characters of `p` and add at least one more. All
//! cases share a single beam. Hypothesis scores are joint log-probabilities
//! of the whole token sequence (seed included), so hypotheses from different
//! cases compare directly.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{QacError, Result};
use crate::lm::TokenLanguageModel;
use crate::math::log_sum_exp;
use crate::segmentation::{enumerate_all_segmentations, Segmentation, Segmenter};
use crate::vocab::{TokenId, Vocabulary, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub query: String,
    pub score: f64,
    /// Number of distinct token sequences merged into this query.
    pub token_seqs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub candidates: Vec<Candidate>,
    /// Beam expansion steps taken.
    pub decode_length: usize,
    /// Finished token sequences considered before merging.
    pub sequences: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RetraceLimit {
    Bounded(usize),
    Unbounded,
}

impl RetraceLimit {
    pub fn allows(self, r: usize) -> bool {
        match self {
            RetraceLimit::Bounded(l) => r <= l,
            RetraceLimit::Unbounded => true,
        }
    }
}

impl FromStr for RetraceLimit {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "unbounded" | "∞" => Ok(RetraceLimit::Unbounded),
            n => n
                .parse()
                .map(RetraceLimit::Bounded)
                .map_err(|_| format!("invalid retrace limit `{s}` (expected an integer or `inf`)")),
        }
    }
}

impl fmt::Display for RetraceLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RetraceLimit::Bounded(l) => write!(f, "{l}"),
            RetraceLimit::Unbounded => f.write_str("inf"),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RetraceRepr {
    Bounded(usize),
    Named(String),
}

impl Serialize for RetraceLimit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RetraceLimit::Bounded(l) => RetraceRepr::Bounded(*l),
            RetraceLimit::Unbounded => RetraceRepr::Named("inf".into()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RetraceLimit {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RetraceRepr::deserialize(d)? {
            RetraceRepr::Bounded(l) => Ok(RetraceLimit::Bounded(l)),
            RetraceRepr::Named(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// How finished hypotheses interact with the beam.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishedPolicy {
    /// Finished hypotheses move to a pool of size `B` and free their slot.
    /// Search stops once the pool is full and no active hypothesis scores
    /// above its worst entry.
    #[default]
    Pool,
    /// Finished hypotheses keep competing for the `B` beam slots. Search
    /// stops when the beam holds only finished hypotheses.
    InBeam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeConfig {
    pub beam_width: usize,
    pub num_candidates: usize,
    pub retrace: RetraceLimit,
    pub marginalize: bool,
    /// Segmentations of each retrace seed; `None` seeds every segmentation.
    pub prefix_nbest: Option<usize>,
    pub max_completion_chars: usize,
    pub finished_policy: FinishedPolicy,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_width: 30,
            num_candidates: 10,
            retrace: RetraceLimit::Bounded(0),
            marginalize: false,
            prefix_nbest: Some(1),
            max_completion_chars: 40,
            finished_policy: FinishedPolicy::Pool,
        }
    }
}

impl DecodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beam_width == 0 {
            return Err(QacError::Config("beam width must be >= 1".into()));
        }
        if self.num_candidates == 0 || self.num_candidates > self.beam_width {
            return Err(QacError::Config(format!(
                "number of candidates must be in 1..={} (the beam width), got {}",
                self.beam_width, self.num_candidates
            )));
        }
        if self.prefix_nbest == Some(0) {
            return Err(QacError::Config("prefix_nbest must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetraceCase {
    pub r: usize,
    pub seed: Segmentation,
    /// Required start of the first generated token, which must also be
    /// longer than this.
    pub constraint: Option<String>,
}

/// Retrace cases `r = 0..=min(L, |p| - 1)`, plus `r = |p|` with an empty
/// seed when `L >= |p|`.
pub fn seed_retrace_cases(
    prefix: &str,
    segmenter: &Segmenter,
    retrace: RetraceLimit,
    prefix_nbest: Option<usize>,
) -> Result<Vec<RetraceCase>> {
    let chars: Vec<char> = prefix.chars().collect();
    let n = chars.len();
    let mut cases = Vec::new();
    for r in 0..=n {
        if !retrace.allows(r) {
            break;
        }
        let covered: String = chars[..n - r].iter().collect();
        let constraint = (r > 0).then(|| chars[n - r..].iter().collect::<String>());
        for seed in prefix_seeds(&covered, segmenter, prefix_nbest)? {
            cases.push(RetraceCase {
                r,
                seed,
                constraint: constraint.clone(),
            });
        }
    }
    Ok(cases)
}

fn prefix_seeds(
    covered: &str,
    segmenter: &Segmenter,
    nbest: Option<usize>,
) -> Result<Vec<Segmentation>> {
    Ok(match nbest {
        _ if covered.is_empty() => vec![Segmentation::from_ids(Vec::new(), segmenter.vocab())],
        Some(1) => vec![segmenter.segment(covered)],
        Some(k) => segmenter
            .nbest(covered, k)
            .into_iter()
            .map(|s| s.0)
            .collect(),
        None => {
            let all = enumerate_all_segmentations(covered, segmenter.vocab())?;
            if all.is_empty() {
                vec![segmenter.segment(covered)]
            } else {
                all
            }
        }
    })
}

struct Hyp<S> {
    state: S,
    ids: Vec<TokenId>,
    case: usize,
    score: f64,
    chars: usize,
    pending: bool,
}

#[derive(Debug, Clone)]
struct Finished {
    score: f64,
    case: usize,
    ids: Vec<TokenId>,
}

fn by_score_then_ids(a: &Finished, b: &Finished) -> std::cmp::Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.case.cmp(&b.case))
        .then_with(|| a.ids.cmp(&b.ids))
}

/// Beam decoder bound to one model pair.
pub struct Decoder<'a, M: TokenLanguageModel> {
    lm: &'a M,
    segmenter: &'a Segmenter,
    surfaces: Vec<&'a str>,
    lengths: Vec<usize>,
}

impl<'a, M: TokenLanguageModel> Decoder<'a, M> {
    pub fn new(lm: &'a M, segmenter: &'a Segmenter) -> Result<Self> {
        let vocab = segmenter.vocab();
        if lm.vocab_size() != vocab.len() {
            return Err(QacError::VocabMismatch {
                expected: format!("{} tokens", vocab.len()),
                found: format!("{} tokens", lm.vocab_size()),
            });
        }
        let surfaces = (0..vocab.len() as TokenId)
            .map(|id| vocab.surface(id).unwrap_or(""))
            .collect();
        let lengths = (0..vocab.len() as TokenId)
            .map(|id| vocab.token_chars(id))
            .collect();
        Ok(Decoder {
            lm,
            segmenter,
            surfaces,
            lengths,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.segmenter.vocab()
    }

    pub fn complete(&self, prefix: &str, cfg: &DecodeConfig) -> Result<Completion> {
        cfg.validate()?;
        let cases = seed_retrace_cases(prefix, self.segmenter, cfg.retrace, cfg.prefix_nbest)?;
        let plen = prefix.chars().count();
        let limit = plen + cfg.max_completion_chars;
        let b = cfg.beam_width;

        // Every seed takes part in the first expansion.
        let mut active: Vec<Hyp<M::State>> = Vec::with_capacity(cases.len());
        for (ci, case) in cases.iter().enumerate() {
            let mut state = self.lm.initial_state();
            let mut score = 0.0;
            for &id in &case.seed.ids {
                score += self.lm.next_logprobs(&state)[id as usize];
                state = self.lm.advance(&state, id);
            }
            active.push(Hyp {
                state,
                ids: case.seed.ids.clone(),
                case: ci,
                score,
                chars: plen - case.r,
                pending: case.r > 0,
            });
        }
        sort_hyps(&mut active);

        let mut finished: Vec<Finished> = Vec::new();
        let mut steps = 0;
        let mut sequences = 0;
        let regular = crate::vocab::NUM_SPECIALS as TokenId..self.surfaces.len() as TokenId;
        while !active.is_empty() {
            if cfg.finished_policy == FinishedPolicy::Pool
                && finished.len() >= b
                && active[0].score <= finished[finished.len() - 1].score
            {
                break;
            }
            steps += 1;
            let mut children: Vec<(f64, usize, TokenId)> = Vec::new();
            let mut done: Vec<Finished> = Vec::new();
            for (pi, h) in active.iter().enumerate() {
                let lp = self.lm.next_logprobs(&h.state);
                let r = cases[h.case].r;
                let need = cases[h.case].constraint.as_deref();
                if !h.pending {
                    done.push(Finished {
                        score: h.score + lp[EOS as usize],
                        case: h.case,
                        ids: h.ids.clone(),
                    });
                }
                for t in regular.clone() {
                    let len = self.lengths[t as usize];
                    if h.chars + len > limit {
                        continue;
                    }
                    if h.pending
                        && (len <= r || !self.surfaces[t as usize].starts_with(need.unwrap_or("")))
                    {
                        continue;
                    }
                    children.push((h.score + lp[t as usize], pi, t));
                }
            }
            sequences += done.len();
            children.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
            match cfg.finished_policy {
                FinishedPolicy::Pool => {
                    children.truncate(b);
                    finished.extend(done);
                    finished.sort_by(by_score_then_ids);
                    finished.truncate(b);
                }
                FinishedPolicy::InBeam => {
                    finished.extend(done);
                    finished.sort_by(by_score_then_ids);
                    // Merge the two sorted lists and keep the best `b`,
                    // finished first on equal scores.
                    let (mut i, mut j, mut kept_f, mut kept_c) = (0, 0, 0, 0);
                    while kept_f + kept_c < b && (i < finished.len() || j < children.len()) {
                        let take_finished = j >= children.len()
                            || (i < finished.len() && finished[i].score >= children[j].0);
                        if take_finished {
                            i += 1;
                            kept_f += 1;
                        } else {
                            j += 1;
                            kept_c += 1;
                        }
                    }
                    finished.truncate(kept_f);
                    children.truncate(kept_c);
                }
            }
            active = children
                .into_iter()
                .map(|(score, pi, t)| {
                    let parent = &active[pi];
                    let mut ids = Vec::with_capacity(parent.ids.len() + 1);
                    ids.extend_from_slice(&parent.ids);
                    ids.push(t);
                    Hyp {
                        state: self.lm.advance(&parent.state, t),
                        ids,
                        case: parent.case,
                        score,
                        chars: parent.chars + self.lengths[t as usize],
                        pending: false,
                    }
                })
                .collect();
        }

        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let chars: Vec<char> = prefix.chars().collect();
        for f in &finished {
            let case = &cases[f.case];
            let mut q: String = chars[..plen - case.r].iter().collect();
            for &id in &f.ids[case.seed.ids.len()..] {
                q.push_str(self.surfaces[id as usize]);
            }
            groups.entry(q).or_default().push(f.score);
        }
        let candidates = rank_groups(groups, cfg.marginalize, cfg.num_candidates);
        Ok(Completion {
            candidates,
            decode_length: steps,
            sequences,
        })
    }
}

fn sort_hyps<S>(hyps: &mut [Hyp<S>]) {
    hyps.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.case.cmp(&b.case))
            .then_with(|| a.ids.cmp(&b.ids))
    });
}

fn rank_groups(groups: BTreeMap<String, Vec<f64>>, marginalize: bool, n: usize) -> Vec<Candidate> {
    let mut out: Vec<Candidate> = groups
        .into_iter()
        .map(|(query, scores)| Candidate {
            score: if marginalize {
                log_sum_exp(&scores)
            } else {
                scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            },
            token_seqs: scores.len(),
            query,
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.query.cmp(&b.query))
    });
    out.truncate(n);
    out
}

/// Convenience wrapper around [`Decoder`].
pub fn complete<M: TokenLanguageModel>(
    prefix: &str,
    lm: &M,
    segmenter: &Segmenter,
    cfg: &DecodeConfig,
) -> Result<Completion> {
    Decoder::new(lm, segmenter)?.complete(prefix, cfg)
}

pub const EXHAUSTIVE_MAX_CHARS: usize = 8;
pub const EXHAUSTIVE_MAX_PREFIX: usize = 12;
pub const EXHAUSTIVE_MAX_TOKENS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct Exhaustive {
    /// Every reachable query with its exact marginal score, best first.
    pub candidates: Vec<Candidate>,
    /// Complete token sequences enumerated.
    pub sequences: usize,
    /// Partial sequences visited, an upper bound on any beam's live set.
    pub hypotheses: usize,
}

/// Enumerates every token sequence whose surface extends `prefix` by at most
/// `max_chars` characters and scores each query by summing over them.
pub fn exhaustive_complete<M: TokenLanguageModel>(
    prefix: &str,
    lm: &M,
    vocab: &Vocabulary,
    max_chars: usize,
) -> Result<Exhaustive> {
    let p: Vec<char> = prefix.chars().collect();
    let regular: Vec<TokenId> = vocab.regular_ids().collect();
    if max_chars > EXHAUSTIVE_MAX_CHARS {
        return Err(QacError::OracleGuard(format!(
            "max_chars {max_chars} exceeds {EXHAUSTIVE_MAX_CHARS}"
        )));
    }
    if p.len() > EXHAUSTIVE_MAX_PREFIX {
        return Err(QacError::OracleGuard(format!(
            "prefix of {} chars exceeds {EXHAUSTIVE_MAX_PREFIX}",
            p.len()
        )));
    }
    if regular.len() > EXHAUSTIVE_MAX_TOKENS {
        return Err(QacError::OracleGuard(format!(
            "{} tokens exceed {EXHAUSTIVE_MAX_TOKENS}",
            regular.len()
        )));
    }
    if lm.vocab_size() != vocab.len() {
        return Err(QacError::VocabMismatch {
            expected: format!("{} tokens", vocab.len()),
            found: format!("{} tokens", lm.vocab_size()),
        });
    }
    let toks: Vec<(TokenId, Vec<char>)> = regular
        .iter()
        .map(|&t| (t, vocab.surface(t).unwrap().chars().collect()))
        .collect();
    let mut search = Dfs {
        lm,
        p: &p,
        toks: &toks,
        limit: p.len() + max_chars,
        groups: BTreeMap::new(),
        sequences: 0,
        hypotheses: 0,
    };
    let mut built = Vec::new();
    search.visit(lm.initial_state(), 0.0, &mut built);
    let (sequences, hypotheses) = (search.sequences, search.hypotheses);
    let n = search.groups.len();
    Ok(Exhaustive {
        candidates: rank_groups(search.groups, true, n),
        sequences,
        hypotheses,
    })
}

struct Dfs<'a, M: TokenLanguageModel> {
    lm: &'a M,
    p: &'a [char],
    toks: &'a [(TokenId, Vec<char>)],
    limit: usize,
    groups: BTreeMap<String, Vec<f64>>,
    sequences: usize,
    hypotheses: usize,
}

impl<M: TokenLanguageModel> Dfs<'_, M> {
    fn visit(&mut self, state: M::State, score: f64, built: &mut Vec<char>) {
        self.hypotheses += 1;
        let lp = self.lm.next_logprobs(&state);
        if built.len() >= self.p.len() {
            self.sequences += 1;
            self.groups
                .entry(built.iter().collect())
                .or_default()
                .push(score + lp[EOS as usize]);
        }
        for (t, chars) in self.toks {
            let end = built.len() + chars.len();
            if end > self.limit {
                continue;
            }
            let overlap = self.p.len().min(end).saturating_sub(built.len());
            if overlap > 0 && chars[..overlap] != self.p[built.len()..built.len() + overlap] {
                continue;
            }
            built.extend_from_slice(chars);
            let next = self.lm.advance(&state, *t);
            self.visit(next, score + lp[*t as usize], built);
            built.truncate(built.len() - chars.len());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{train_ngram, NGramConfig};
    use crate::segmentation::{BpeModel, CharSegmenter};
    use crate::vocab::Alphabet;

    fn bpe(chars: &str, merges: &[(&str, &str)]) -> Segmenter {
        let alphabet = Alphabet::new(chars.chars());
        let merges: Vec<(String, String)> = merges
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect();
        let vocab =
            Vocabulary::new(alphabet, merges.iter().map(|(a, b)| format!("{a}{b}"))).unwrap();
        Segmenter::Bpe(BpeModel::from_parts(vocab, merges).unwrap())
    }

    fn surfaces(
        cases: &[RetraceCase],
        v: &Vocabulary,
    ) -> Vec<(usize, Vec<String>, Option<String>)> {
        cases
            .iter()
            .map(|c| {
                (
                    c.r,
                    c.seed.pieces(v).into_iter().map(String::from).collect(),
                    c.constraint.clone(),
                )
            })
            .collect()
    }

    #[test]
    fn retrace_case_examples() {
        let seg = bpe("ers", &[("r", "e"), ("re", "s")]);
        let v = seg.vocab();
        let c = seed_retrace_cases("res", &seg, RetraceLimit::Bounded(0), Some(1)).unwrap();
        assert_eq!(surfaces(&c, v), [(0, vec!["res".to_string()], None)]);
        let c = seed_retrace_cases("res", &seg, RetraceLimit::Bounded(2), Some(1)).unwrap();
        assert_eq!(
            surfaces(&c, v),
            [
                (0, vec!["res".to_string()], None),
                (1, vec!["re".to_string()], Some("s".to_string())),
                (2, vec!["r".to_string()], Some("es".to_string())),
            ]
        );
        let seg = bpe("ab", &[]);
        let c = seed_retrace_cases("ab", &seg, RetraceLimit::Unbounded, Some(1)).unwrap();
        let got = surfaces(&c, seg.vocab());
        assert_eq!(got.len(), 3);
        assert_eq!(got[2], (2, vec![], Some("ab".to_string())));
        let c = seed_retrace_cases("ab", &seg, RetraceLimit::Bounded(5), Some(1)).unwrap();
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn retrace_limit_parsing() {
        assert_eq!(
            "inf".parse::<RetraceLimit>().unwrap(),
            RetraceLimit::Unbounded
        );
        assert_eq!(
            "3".parse::<RetraceLimit>().unwrap(),
            RetraceLimit::Bounded(3)
        );
        assert!("x".parse::<RetraceLimit>().is_err());
        let json = serde_json::to_string(&RetraceLimit::Unbounded).unwrap();
        assert_eq!(json, "\"inf\"");
        assert_eq!(
            serde_json::from_str::<RetraceLimit>("2").unwrap(),
            RetraceLimit::Bounded(2)
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = DecodeConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.num_candidates = 31;
        assert!(cfg.validate().is_err());
        cfg.num_candidates = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prefix_consistency_and_sorted_output() {
        let seg = Segmenter::Char(CharSegmenter::new(Alphabet::new("abc ".chars())));
        let corpus = ["abc", "abca", "ab c", "bca", "cab", "abb"];
        let lm = train_ngram(
            &corpus,
            &seg,
            &NGramConfig {
                order: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let cfg = DecodeConfig {
            max_completion_chars: 6,
            ..Default::default()
        };
        let out = complete("ab", &lm, &seg, &cfg).unwrap();
        assert!(!out.candidates.is_empty());
        assert!(out.candidates.iter().all(|c| c.query.starts_with("ab")));
        assert!(out.candidates.windows(2).all(|w| w[0].score >= w[1].score));
        assert!(out.candidates.iter().all(|c| c.query.chars().count() <= 8));
        assert!(out.decode_length >= 1);
    }

    #[test]
    fn exhaustive_guards() {
        let seg = Segmenter::Char(CharSegmenter::new(Alphabet::new("ab".chars())));
        let lm = train_ngram(
            &["ab"],
            &seg,
            &NGramConfig {
                order: 2,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(matches!(
            exhaustive_complete("a", &lm, seg.vocab(), 9),
            Err(QacError::OracleGuard(_))
        ));
        let ex = exhaustive_complete("a", &lm, seg.vocab(), 1).unwrap();
        let qs: Vec<&str> = ex.candidates.iter().map(|c| c.query.as_str()).collect();
        assert_eq!(ex.sequences, 3);
        let mut sorted = qs.clone();
        sorted.sort();
        assert_eq!(sorted, ["a", "aa", "ab"]);
        // No token can continue past "c".
        let ex = exhaustive_complete("c", &lm, seg.vocab(), 2).unwrap();
        assert!(ex.candidates.is_empty());
    }

    #[test]
    fn single_path_vocab_returns_unique_extension() {
        let seg = bpe("a", &[]);
        let lm = train_ngram(
            &["aaa"],
            &seg,
            &NGramConfig {
                order: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let ex = exhaustive_complete("aa", &lm, seg.vocab(), 1).unwrap();
        let qs: Vec<&str> = ex.candidates.iter().map(|c| c.query.as_str()).collect();
        assert_eq!(qs.len(), 2);
        assert!(qs.contains(&"aaa") && qs.contains(&"aa"));
    }

    #[test]
    fn marginalization_sums_duplicates() {
        let seg = bpe("ab", &[("a", "b")]);
        let corpus = ["ab", "ab", "ab"];
        let lm = train_ngram(
            &corpus,
            &seg,
            &NGramConfig {
                order: 2,
                ..Default::default()
            },
        )
        .unwrap();
        let base = DecodeConfig {
            retrace: RetraceLimit::Unbounded,
            max_completion_chars: 2,
            ..Default::default()
        };
        let off = complete("a", &lm, &seg, &base).unwrap();
        let on = complete(
            "a",
            &lm,
            &seg,
            &DecodeConfig {
                marginalize: true,
                ..base
            },
        )
        .unwrap();
        let find =
            |c: &Completion, q: &str| c.candidates.iter().position(|x| x.query == q).unwrap();
        let (i_off, i_on) = (find(&off, "ab"), find(&on, "ab"));
        assert!(on.candidates[i_on].token_seqs >= 2);
        assert!(on.candidates[i_on].score >= off.candidates[i_off].score);
        assert!(i_on <= i_off);
    }

    #[test]
    fn in_beam_policy_runs() {
        let seg = Segmenter::Char(CharSegmenter::new(Alphabet::new("ab".chars())));
        let lm = train_ngram(&["ab", "aab", "abb"], &seg, &NGramConfig::default()).unwrap();
        let cfg = DecodeConfig {
            finished_policy: FinishedPolicy::InBeam,
            beam_width: 5,
            num_candidates: 5,
            max_completion_chars: 4,
            ..Default::default()
        };
        let out = complete("a", &lm, &seg, &cfg).unwrap();
        assert!(!out.candidates.is_empty() && out.candidates.len() <= 5);
    }
}
