mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::Rng;

use common::{ALPHA, W0};
use conflictfdr::conflict::{BatchLayout, ConflictTopology, LagSequence};
use conflictfdr::engine::{compute_r, Algorithm, Engine, EngineParams};
use conflictfdr::harness::{run_stream, RunOptions};
use conflictfdr::types::{DecisionSchedule, ExtIndex, GroundTruth};

fn topology(kind: u8, seed: u64, m: usize) -> ConflictTopology {
    let mut rng = common::rng(seed);
    match kind % 4 {
        0 => ConflictTopology::none(),
        1 => {
            let p = [1.0, 0.5, 0.1, 0.02][rng.random_range(0..4)];
            let e = common::finish_times(&mut rng, m, p, false);
            ConflictTopology::asynchronous(DecisionSchedule::from_finite(e).unwrap())
        }
        2 => {
            let max = rng.random_range(0..40);
            ConflictTopology::lagged(LagSequence::new(common::lags(&mut rng, m, max)).unwrap())
        }
        _ => {
            let max = rng.random_range(1..40);
            ConflictTopology::minibatch(BatchLayout::new(common::batch_sizes(&mut rng, m, max)).unwrap())
        }
    }
}

fn params(alg: Algorithm) -> EngineParams {
    EngineParams::new(alg, ALPHA).with_w0(W0)
}

fn levels(alg: Algorithm, topo: &Arc<ConflictTopology>, p: &[f64]) -> Vec<f64> {
    run_stream(params(alg), common::gamma(), topo.clone(), p, None, RunOptions::default())
        .unwrap()
        .engine
        .levels()
}

fn any_alg() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(Algorithm::ALL.to_vec())
}

fn conflict_aware() -> impl Strategy<Value = Algorithm> {
    prop::sample::select(
        Algorithm::ALL
            .iter()
            .copied()
            .filter(|a| a.is_conflict_aware())
            .collect::<Vec<_>>(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn membership_is_a_contiguous_prefix(kind in 1u8..4, seed in any::<u64>(), m in 2usize..120) {
        let topo = topology(kind, seed, m);
        for j in 1..m {
            let inside: Vec<bool> = (j + 1..=m).map(|t| topo.is_conflicting(j, t)).collect();
            let k = inside.iter().take_while(|&&b| b).count();
            prop_assert!(inside[k..].iter().all(|&b| !b), "test {j}: {inside:?}");
        }
    }

    #[test]
    fn last_conflict_time_bounds(kind in 0u8..4, seed in any::<u64>(), m in 2usize..120) {
        let topo = topology(kind, seed, m);
        for j in 1..=m {
            let tau = topo.last_conflict_time(j, m);
            prop_assert!(tau >= ExtIndex::from(j));
            // async taus are the decision times, possibly beyond m
            let conflicts = j < m && topo.is_conflicting(j, j + 1);
            let beyond = matches!(tau, ExtIndex::Finite(v) if v as usize > m);
            if !beyond {
                prop_assert_eq!(tau == ExtIndex::from(j), !conflicts);
            }
        }
    }

    #[test]
    fn synchronous_schedule_has_no_conflicts(m in 1usize..200) {
        let topo = ConflictTopology::asynchronous(DecisionSchedule::synchronous(m));
        for t in 1..=m {
            prop_assert!(topo.conflict_set(t).unwrap().is_empty());
        }
    }

    #[test]
    fn r_table_matches_definition(alg in any_alg(), kind in 0u8..4, seed in any::<u64>(), m in 1usize..150) {
        let topo = Arc::new(topology(kind, seed, m));
        let p = common::pvalues(&mut common::rng(seed ^ 1), m, 0.4);
        let run = run_stream(params(alg), common::gamma(), topo.clone(), &p, None, RunOptions::default()).unwrap();
        let e = &run.engine;
        let rejected: Vec<bool> = (1..=m).map(|j| e.outcome(j).unwrap().rejected).collect();
        // taus as seen at the last step: undecided or still conflicting tests are +inf
        let taus: Vec<ExtIndex> = (1..=m)
            .map(|j| match topo.last_conflict_time(j, m) {
                ExtIndex::Finite(v) if (v as usize) < m => ExtIndex::Finite(v),
                _ => ExtIndex::PosInf,
            })
            .collect();
        for k in 1..=rejected.iter().filter(|&&r| r).count() + 1 {
            prop_assert_eq!(e.r(k), compute_r(&rejected, &taus, k, m - 1), "k = {}", k);
        }
    }

    #[test]
    fn flipping_conflicting_outcomes_keeps_levels(
        alg in conflict_aware(), kind in 1u8..4, seed in any::<u64>(), m in 2usize..150, pick in any::<u64>()
    ) {
        let topo = Arc::new(topology(kind, seed, m));
        let p = common::pvalues(&mut common::rng(seed ^ 2), m, 0.4);
        let base = levels(alg, &topo, &p);
        let t = 2 + (pick as usize % (m - 1));
        let x = topo.conflict_set(t).unwrap();
        prop_assume!(!x.is_empty());
        let j = x[(pick >> 32) as usize % x.len()];
        let mut q = p.clone();
        q[j - 1] = if p[j - 1] <= base[j - 1] { 1.0 } else { 0.0 };
        let flipped = levels(alg, &topo, &q);
        prop_assert_eq!(&base[..t], &flipped[..t]);
    }

    #[test]
    fn extra_rejection_never_lowers_levels(
        alg in conflict_aware(), kind in 0u8..4, seed in any::<u64>(), m in 2usize..150, pick in any::<usize>()
    ) {
        let topo = Arc::new(topology(kind, seed, m));
        let p = common::pvalues(&mut common::rng(seed ^ 3), m, 0.3);
        let base = levels(alg, &topo, &p);
        let j = 1 + pick % m;
        prop_assume!(p[j - 1] > base[j - 1]);
        let mut q = p.clone();
        q[j - 1] = 0.0;
        let more = levels(alg, &topo, &q);
        for s in 0..m {
            prop_assert!(more[s] >= base[s], "level {} fell: {} < {}", s + 1, more[s], base[s]);
        }
    }

    #[test]
    fn reshaped_lond_below_lond(kind in 0u8..4, seed in any::<u64>(), m in 1usize..300) {
        let topo = Arc::new(topology(kind, seed, m));
        let p = common::pvalues(&mut common::rng(seed ^ 4), m, 0.4);
        let plain = levels(Algorithm::Lond, &topo, &p);
        let reshaped = levels(Algorithm::ReshapedLond, &topo, &p);
        for (r, l) in reshaped.iter().zip(&plain) {
            prop_assert!(r <= l);
        }
    }

    #[test]
    fn unfinished_tests_spend_at_most_alpha(alg in conflict_aware(), m in 1usize..3000) {
        let topo = Arc::new(ConflictTopology::asynchronous(DecisionSchedule::never(m)));
        let mut e = Engine::new(params(alg), common::gamma(), topo).unwrap();
        let mut spent = 0.0;
        for _ in 0..m {
            spent += e.start_test().unwrap().level;
            prop_assert!(spent <= ALPHA);
        }
    }

    #[test]
    fn estimates_stay_under_alpha(alg in conflict_aware(), kind in 0u8..4, seed in any::<u64>(), m in 1usize..400) {
        let topo = Arc::new(topology(kind, seed, m));
        let mut rng = common::rng(seed ^ 5);
        let p = common::pvalues(&mut rng, m, 0.5);
        let truth = GroundTruth::new((0..m).map(|_| rng.random::<bool>()).collect());
        let opts = RunOptions { trace: true, check: true, ..Default::default() };
        let run = run_stream(params(alg), common::gamma(), topo, &p, Some(&truth), opts).unwrap();
        for step in &run.trace {
            prop_assert!(step.fdp_hat <= ALPHA);
            if !alg.is_saffron_family() {
                prop_assert!(step.oracle_fdp.unwrap() <= step.fdp_hat);
            }
        }
    }

    #[test]
    fn incremental_estimates_match_recomputation(alg in any_alg(), kind in 0u8..4, seed in any::<u64>(), m in 1usize..200) {
        let topo = Arc::new(topology(kind, seed, m));
        let mut rng = common::rng(seed ^ 6);
        let p = common::pvalues(&mut rng, m, 0.4);
        let truth = GroundTruth::new((0..m).map(|_| rng.random::<bool>()).collect());
        let opts = RunOptions { trace: true, ..Default::default() };
        let run = run_stream(params(alg), common::gamma(), topo.clone(), &p, Some(&truth), opts).unwrap();

        let mut e = Engine::new(params(alg), common::gamma(), topo.clone()).unwrap();
        for s in 1..=m {
            e.start_test().unwrap();
            let step = run.trace[s - 1];
            prop_assert_eq!(step.oracle_fdp.unwrap(), e.oracle_fdp_conf(&truth).unwrap());
            prop_assert_eq!(step.fdp_hat, e.fdp_hat());
            if !alg.is_saffron_family() {
                prop_assert_eq!(e.fdp_hat(), e.fdp_hat_lord_recomputed());
            }
            for j in 1..=m {
                if topo.decision_index(j) == Some(s) {
                    e.observe_outcome(j, p[j - 1]).unwrap();
                }
            }
        }
    }
}
