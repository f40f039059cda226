mod support;

use gbs_core::engine::{brute_force_decode, gbs_decode, DecodeError, DecodeParams};
use gbs_core::evalsim::pick::eligible;
use gbs_core::evalsim::{bleu, insert_baseline, pick_phrase, Insertion, PickMode};
use gbs_core::scorer::Scorer;
use proptest::prelude::*;
use support::*;

fn fuzz_spec() -> InstanceSpec {
    InstanceSpec {
        vocab: 3..=9,
        max_len: 2..=9,
        max_constraints: 3,
        max_constraint_tokens: 5,
        filters: true,
        uniform_allowed: true,
        ngram_allowed: true,
    }
}

fn tokens() -> impl Strategy<Value = Vec<u8>> {
    proptest::collection::vec(0u8..6, 0..12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn decoded_outputs_satisfy_constraints(seed in any::<u64>(), k in 1usize..8) {
        let inst = random_instance(seed, &fuzz_spec());
        let params = DecodeParams::default().with_max_len(inst.max_len).with_k(k);
        match gbs_decode(&inst.scorer, &inst.input, &inst.set, &params) {
            Ok(r) => {
                prop_assert!(satisfies(&r, &inst.set, inst.scorer.vocab().eos()).is_ok());
                prop_assert!(r.tokens().len() <= inst.max_len);
                let replayed = replay_score(&inst.scorer, &inst.input, r.tokens());
                prop_assert!((replayed - r.score()).abs() < 1e-9);
            }
            Err(DecodeError::NoFinishedHypothesis { .. } | DecodeError::InfeasibleConstraints { .. }) => {}
            Err(e) => prop_assert!(false, "{}", e),
        }
    }

    #[test]
    fn evaluations_within_bound(seed in any::<u64>(), k in 1usize..8) {
        let inst = random_instance(seed, &fuzz_spec());
        let params = DecodeParams::default().with_max_len(inst.max_len).with_k(k);
        let stats = match gbs_decode(&inst.scorer, &inst.input, &inst.set, &params) {
            Ok(r) => r.stats,
            Err(DecodeError::NoFinishedHypothesis { stats, .. }) => stats,
            Err(_) => return Ok(()),
        };
        let bound = (k * inst.max_len * (inst.set.num_tokens() + 1)) as u64;
        prop_assert!(stats.scorer_evaluations <= bound);
    }

    #[test]
    fn beam_never_beats_exhaustive_search(seed in any::<u64>(), k in 1usize..6) {
        let spec = InstanceSpec { vocab: 3..=5, max_len: 2..=6, filters: false, ..fuzz_spec() };
        let inst = random_instance(seed, &spec);
        let params = DecodeParams::default().with_max_len(inst.max_len).with_k(k);
        if let (Ok(g), Ok(b)) = (
            gbs_decode(&inst.scorer, &inst.input, &inst.set, &params),
            brute_force_decode(&inst.scorer, &inst.input, &inst.set, inst.max_len),
        ) {
            prop_assert!(g.score() <= b.score() + 1e-9);
        }
    }

    #[test]
    fn decoding_is_deterministic(seed in any::<u64>()) {
        let inst = random_instance(seed, &fuzz_spec());
        let params = DecodeParams::default().with_max_len(inst.max_len).with_k(4);
        let a = gbs_decode(&inst.scorer, &inst.input, &inst.set, &params);
        let b = gbs_decode(&inst.scorer, &inst.input, &inst.set, &params);
        prop_assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn bleu_is_bounded(hyps in proptest::collection::vec(tokens(), 1..5), refs in proptest::collection::vec(tokens(), 1..5)) {
        let n = hyps.len().min(refs.len());
        let r = bleu(&hyps[..n], &refs[..n]).unwrap();
        prop_assert!((0.0..=100.0).contains(&r.bleu));
        prop_assert!(r.brevity_penalty <= 1.0);
        if refs[..n].iter().any(|r| !r.is_empty()) {
            let same = bleu(&refs[..n], &refs[..n]).unwrap();
            prop_assert!((same.bleu - 100.0).abs() < 1e-9);
        }
    }

    #[test]
    fn picked_phrase_is_eligible(hyp in tokens(), reference in tokens(), relaxed in any::<bool>(), mask_seed in any::<u64>()) {
        let mode = if relaxed { PickMode::Relaxed } else { PickMode::Strict };
        let excluded: Vec<bool> = (0..reference.len()).map(|i| (mask_seed >> (i % 64)) & 3 == 0).collect();
        match pick_phrase(&hyp, &reference, mode, 3, &excluded) {
            Some((start, len)) => {
                prop_assert!((1..=3).contains(&len));
                prop_assert!(eligible(&hyp, &reference, start, len, mode, &excluded));
                for longer in len + 1..=3.min(reference.len()) {
                    for s in 0..=reference.len() - longer {
                        prop_assert!(!eligible(&hyp, &reference, s, longer, mode, &excluded));
                    }
                }
                for s in 0..start {
                    prop_assert!(!eligible(&hyp, &reference, s, len, mode, &excluded));
                }
            }
            None => {
                if hyp != reference {
                    for n in 1..=3.min(reference.len()) {
                        for s in 0..=reference.len() - n {
                            prop_assert!(!eligible(&hyp, &reference, s, n, mode, &excluded));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn insertion_keeps_hypothesis_and_constraints(
        hyp in tokens(),
        cs in proptest::collection::vec(proptest::collection::vec(10u8..14, 1..4), 0..4),
        seed in any::<u64>(),
    ) {
        for mode in [Insertion::Random { seed }, Insertion::Beginning] {
            let out = insert_baseline(std::slice::from_ref(&hyp), std::slice::from_ref(&cs), mode).remove(0);
            prop_assert_eq!(out.len(), hyp.len() + cs.iter().map(Vec::len).sum::<usize>());
            let kept: Vec<u8> = out.iter().copied().filter(|t| *t < 10).collect();
            prop_assert_eq!(&kept, &hyp);
            for c in &cs {
                prop_assert!(out.windows(c.len()).any(|w| w == c.as_slice()));
            }
        }
    }
}
