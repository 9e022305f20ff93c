mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use school_choice::game::FunctionSpec;
use school_choice::io::{parse_strategy, write_strategy, Provenance};
use school_choice::sampling::{example_game, rank_pmf};
use school_choice::{
    alpha_reduce_match, check_interim_epsilon, deferred_acceptance, dp_capacity_distribution,
    proba, rank_distribution, sample_types, smooth_strategy, Action, CapacityVector,
    DenominatorMode, Exact, MarketInstance, Oracle,
};

use common::{random_game, random_strategy, rng};

fn random_market(seed: u64, identical: bool) -> MarketInstance {
    let mut r = rng(seed);
    let n = r.gen_range(1..=7);
    let m = r.gen_range(1..=5);
    let caps: Vec<u32> = (0..m).map(|_| r.gen_range(1..=3)).collect();
    let lists: Vec<Action> = (0..n)
        .map(|_| {
            let mut ids: Vec<usize> = (1..=m).collect();
            ids.shuffle(&mut r);
            ids.truncate(r.gen_range(0..=m));
            Action::new(ids).unwrap()
        })
        .collect();
    let mut shared: Vec<usize> = (0..n).collect();
    shared.shuffle(&mut r);
    let orders = (0..m)
        .map(|_| {
            if identical {
                shared.clone()
            } else {
                let mut o: Vec<usize> = (0..n).collect();
                o.shuffle(&mut r);
                o
            }
        })
        .collect();
    MarketInstance::from_rankings(lists, caps, orders).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn deferred_acceptance_is_feasible_and_stable(seed in any::<u64>()) {
        let inst = random_market(seed, false);
        let matching = deferred_acceptance(&inst);
        prop_assert!(inst.is_feasible(&matching));
        prop_assert!(inst.blocking_pairs(&matching).is_empty());
    }

    #[test]
    fn alpha_reduction_matches_deferred_acceptance(seed in any::<u64>()) {
        let inst = random_market(seed, true);
        prop_assert_eq!(alpha_reduce_match(&inst).unwrap(), deferred_acceptance(&inst));
    }

    #[test]
    fn proba_is_monotone(k in 1usize..40, n_frac in 0.0f64..1.0, x_frac in 0.0f64..1.0) {
        let n = 1 + ((k - 1) as f64 * n_frac) as usize;
        let x = ((k - 1) as f64 * x_frac) as usize;
        for c in 1..=n {
            let p: f64 = proba(x, c, k, n).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            if c < n {
                prop_assert!(proba::<f64>(x, c + 1, k, n).unwrap() >= p - 1e-12);
            }
            if x + 1 < k {
                prop_assert!(proba::<f64>(x + 1, c, k, n).unwrap() <= p + 1e-12);
            }
        }
        prop_assert_eq!(proba::<Exact>(x, n, k, n).unwrap(), common::exact_one());
    }

    #[test]
    fn capacity_distribution_conserves_mass(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=5);
        let k = r.gen_range(n.max(2)..=9);
        let m = r.gen_range(1..=3);
        let caps: Vec<u32> = (0..m).map(|_| r.gen_range(1..=2)).collect();
        let l = r.gen_range(1..=m);
        let g = random_game(&mut r, k, n, &caps, l, true);
        let full = CapacityVector::full(n, &g.game.capacities());
        let mut last = 0.0;
        for prefix in 0..k {
            let q = dp_capacity_distribution::<Exact>(&g.game, &g.types, prefix, DenominatorMode::FocalCorrected).unwrap();
            prop_assert_eq!(q.total(), common::exact_one());
            let consumed = q.expected_consumed(&full);
            prop_assert!(consumed >= last - 1e-12 && consumed <= last + 1.0 + 1e-12);
            prop_assert!(consumed <= (n - 1) as f64 + 1e-12);
            last = consumed;
        }
    }

    #[test]
    fn rank_pmf_telescopes(n in 1usize..80, t in 0.0f64..=1.0) {
        let pmf = rank_pmf(n, t).unwrap();
        prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let mut prev = 0.0;
        for r in 1..=n {
            let cdf: f64 = rank_distribution(n, t, r).unwrap();
            prop_assert!((cdf - prev - pmf[r - 1]).abs() < 1e-12);
            prop_assert!(cdf >= prev - 1e-15);
            prev = cdf;
        }
    }

    #[test]
    fn rank_distribution_rises_with_type(n in 2usize..60, r_frac in 0.0f64..1.0, t in 0.0f64..0.99) {
        let r = 1 + ((n - 1) as f64 * r_frac) as usize;
        let low: f64 = rank_distribution(n, t, r).unwrap();
        let high: f64 = rank_distribution(n, t + 0.01, r).unwrap();
        prop_assert!(high >= low - 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn epsilon_scales_with_values(seed in any::<u64>(), lambda in 0.1f64..10.0) {
        let mut r = rng(seed);
        let n = r.gen_range(1..=3);
        let k = r.gen_range(n.max(2)..=5);
        let m = r.gen_range(1..=2);
        let caps: Vec<u32> = (0..m).map(|_| r.gen_range(1..=2)).collect();
        let g = random_game(&mut r, k, n, &caps, 1, false);
        let strategy = random_strategy(&mut r, k, m, 1);
        let mut scaled = g.game.clone();
        for s in &mut scaled.schools {
            if let FunctionSpec::Table { values } = &mut s.value {
                values.iter_mut().for_each(|v| *v *= lambda);
            }
        }
        let types = school_choice::FiniteTypeSet::new(&scaled, g.types.points().to_vec(), None).unwrap();
        let base = check_interim_epsilon(&g.game, &g.types, &strategy, 0.0, Oracle::exact()).unwrap();
        let after = check_interim_epsilon(&scaled, &types, &strategy, 0.0, Oracle::exact()).unwrap();
        prop_assert!((after.eps_hat - lambda * base.eps_hat).abs() <= 1e-9 * (1.0 + after.eps_hat));
    }

    #[test]
    fn strategy_file_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k = r.gen_range(2..=12);
        let m = r.gen_range(1..=3);
        let l = r.gen_range(1..=m);
        let caps = vec![1; m];
        let g = random_game(&mut r, k, 2, &caps, l, false);
        let strategy = random_strategy(&mut r, k, m, l);
        let mut buf = Vec::new();
        write_strategy(&mut buf, &strategy, &g.types, &Provenance::new("test", Some(seed))).unwrap();
        let back = parse_strategy(std::str::from_utf8(&buf).unwrap(), &g.types).unwrap();
        prop_assert_eq!(back.k(), strategy.k());
        for i in 0..k {
            let (a, b) = (strategy.mix(i), back.mix(i));
            prop_assert_eq!(a.len(), b.len());
            for ((x, w), (y, v)) in a.iter().zip(b) {
                prop_assert_eq!(x, y);
                prop_assert!((w - v).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn sampling_is_seeded_and_scores_are_distinct(seed in any::<u64>(), k in 3usize..200) {
        let game = example_game("fig6", 0.5, None).unwrap();
        let a = sample_types(&game.types, k, seed, &game).unwrap();
        let b = sample_types(&game.types, k, seed, &game).unwrap();
        prop_assert_eq!(a.points(), b.points());
        for j in 1..=game.m() {
            let order = a.order_by_score(j);
            for w in order.windows(2) {
                prop_assert!(a.score(j, w[0]) > a.score(j, w[1]));
            }
        }
    }

    #[test]
    fn smoothing_yields_valid_mixes(seed in any::<u64>(), k in 1usize..30, queries in 1usize..30) {
        let mut r = rng(seed);
        let game = example_game("fig4", 0.0, None).unwrap();
        let support = sample_types(&game.types, k.max(3), seed, &game).unwrap();
        let strategy = random_strategy(&mut r, support.k(), 3, 2);
        let targets = sample_types(&game.types, queries.max(3), seed ^ 1, &game).unwrap();
        let smoothed = smooth_strategy(&strategy, support.points(), targets.points()).unwrap();
        prop_assert_eq!(smoothed.k(), targets.k());
        for i in 0..smoothed.k() {
            let total: f64 = smoothed.mix(i).iter().map(|(_, w)| w).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
            prop_assert!(smoothed.mix(i).iter().all(|(a, w)| *w > 0.0 && a.len() <= 2));
        }
    }
}
