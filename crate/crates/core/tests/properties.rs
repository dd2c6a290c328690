mod common;

use proptest::prelude::*;

use qac_core::corpus::{normalize_prefix, normalize_query};
use qac_core::decode::{
    exhaustive_complete, Candidate, Completion, DecodeConfig, Decoder, RetraceLimit,
};
use qac_core::eval::{partial_reciprocal_rank, reciprocal_rank, recoverable_length, Completer};
use qac_core::lm::{query_logprob_exact, TokenLanguageModel};
use qac_core::math::log_sum_exp;
use qac_core::mpc::CompletionTrie;
use qac_core::vocab::EOS;

use common::{oracle_segmentations, random_string, toy_instance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn query_text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop::sample::select(vec!['a', 'b', 'c', ' ', 'é', 'Z', '\t']),
        0..16,
    )
    .prop_map(|v| v.into_iter().collect())
}

/// Returns the stored strings that extend the prefix, in stored order.
struct Fixed(Vec<String>);

impl Completer for Fixed {
    fn complete(&self, prefix: &str) -> qac_core::Result<Completion> {
        let candidates = self
            .0
            .iter()
            .filter(|c| c.starts_with(prefix))
            .map(|c| Candidate {
                query: c.clone(),
                score: 0.0,
                token_seqs: 1,
            })
            .collect();
        Ok(Completion {
            candidates,
            decode_length: 0,
            sequences: 0,
        })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalization_is_idempotent(raw in query_text()) {
        if let Some(q) = normalize_query(&raw) {
            let again = normalize_query(q.as_str()).expect("normalized query stays valid");
            prop_assert_eq!(again.as_str(), q.as_str());
        }
        let p = normalize_prefix(&raw);
        prop_assert_eq!(normalize_prefix(&p), p);
    }

    #[test]
    fn segmentations_spell_the_query(seed in 0u64..500, len in 1usize..9) {
        let toy = toy_instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let q = random_string(&mut rng, &toy.chars, len, len);
        let vocab = toy.seg.vocab();
        prop_assert_eq!(vocab.concat(&toy.seg.segment(&q).ids), q.clone());
        let nbest = toy.seg.nbest(&q, 5);
        prop_assert!(!nbest.is_empty());
        for w in nbest.windows(2) {
            prop_assert!(w[0].1 >= w[1].1);
        }
        for (s, _) in &nbest {
            prop_assert_eq!(vocab.concat(&s.ids), q.clone());
        }
        prop_assert!(nbest.len() <= oracle_segmentations(&q, vocab).len());
    }

    #[test]
    fn lm_distributions_normalize(seed in 0u64..500, walk in prop::collection::vec(0usize..64, 0..6)) {
        let toy = toy_instance(seed);
        let v = toy.lm.vocab_size();
        let mut state = toy.lm.initial_state();
        for step in walk {
            let lp = toy.lm.next_logprobs(&state);
            prop_assert!((log_sum_exp(&lp)).abs() < 1e-9);
            let t = 3 + (step % (v - 3)) as u32;
            state = toy.lm.advance(&state, t);
        }
        let lp = toy.lm.next_logprobs(&state);
        prop_assert!(lp[EOS as usize].is_finite());
    }

    #[test]
    fn beam_scores_never_exceed_exact_marginals(seed in 0u64..300, len in 1usize..4, beam in 1usize..12) {
        let toy = toy_instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prefix = random_string(&mut rng, &toy.chars, len, len);
        let decoder = Decoder::new(&toy.lm, &toy.seg).unwrap();
        let cfg = DecodeConfig {
            beam_width: beam,
            num_candidates: beam,
            retrace: RetraceLimit::Unbounded,
            marginalize: true,
            prefix_nbest: None,
            max_completion_chars: 5,
            ..Default::default()
        };
        let out = decoder.complete(&prefix, &cfg).unwrap();
        prop_assert!(out.candidates.len() <= beam);
        for c in &out.candidates {
            prop_assert!(c.query.starts_with(&prefix));
            let exact = query_logprob_exact(&toy.lm, &c.query, toy.seg.vocab()).unwrap();
            prop_assert!(c.score <= exact + 1e-9, "{} > {} for {:?}", c.score, exact, c.query);
        }
        for w in out.candidates.windows(2) {
            prop_assert!(w[0].score >= w[1].score);
        }
    }

    #[test]
    fn exhaustive_candidates_are_exact(seed in 0u64..200, len in 1usize..3) {
        let toy = toy_instance(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(7));
        let prefix = random_string(&mut rng, &toy.chars, len, len);
        let ex = exhaustive_complete(&prefix, &toy.lm, toy.seg.vocab(), 3).unwrap();
        for c in &ex.candidates {
            let exact = query_logprob_exact(&toy.lm, &c.query, toy.seg.vocab()).unwrap();
            prop_assert!((c.score - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn trie_matches_brute_force(
        queries in prop::collection::vec(prop::collection::vec(prop::sample::select(vec!['x', 'y', 'z']), 1..5), 1..40),
        prefix in prop::collection::vec(prop::sample::select(vec!['x', 'y', 'z']), 0..3),
        n in 1usize..8,
    ) {
        let queries: Vec<String> = queries.into_iter().map(|v| v.into_iter().collect()).collect();
        let prefix: String = prefix.into_iter().collect();
        let trie = CompletionTrie::from_queries(&queries).unwrap();
        let mut counts = std::collections::BTreeMap::<&str, u64>::new();
        for q in &queries {
            *counts.entry(q.as_str()).or_default() += 1;
        }
        let mut expected: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(q, _)| q.starts_with(&prefix))
            .map(|(q, c)| (q.to_string(), c))
            .collect();
        expected.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        expected.truncate(n);
        prop_assert_eq!(trie.top_n(&prefix, n), expected);
        let restored = CompletionTrie::from_bytes(&trie.to_bytes()).unwrap();
        prop_assert_eq!(restored.entries(), trie.entries());
    }

    #[test]
    fn partial_rank_dominates_exact_rank(
        q in "[ab]{1,5}",
        cands in prop::collection::vec("[ab]{1,6}", 0..8),
    ) {
        let rr = reciprocal_rank(&q, &cands);
        let prr = partial_reciprocal_rank(&q, &cands);
        prop_assert!(prr >= rr);
        prop_assert!((0.0..=1.0).contains(&rr));
    }

    #[test]
    fn recoverable_length_ignores_candidate_order(
        q in "[ab]{2,7}",
        cands in prop::collection::vec("[ab]{1,7}", 0..6),
        rot in 0usize..6,
    ) {
        let mut rotated = cands.clone();
        if !rotated.is_empty() {
            let k = rot % rotated.len();
            rotated.rotate_left(k);
        }
        let a = recoverable_length(&q, &Fixed(cands), 1).unwrap();
        let b = recoverable_length(&q, &Fixed(rotated), 1).unwrap();
        prop_assert_eq!(a, b);
    }
}
