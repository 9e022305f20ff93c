//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use school_choice::{
    Action, DistributionSpec, Exact, FiniteTypeSet, FunctionSpec, GameSpec, School,
    SymmetricStrategy, TypePoint,
};

/// Calls `f` on every `size`-subset of `items`, in lexicographic order.
pub fn for_each_subset(items: &[usize], size: usize, f: &mut dyn FnMut(&[usize])) {
    fn rec(
        items: &[usize],
        start: usize,
        size: usize,
        cur: &mut Vec<usize>,
        f: &mut dyn FnMut(&[usize]),
    ) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for p in start..items.len() {
            cur.push(items[p]);
            rec(items, p + 1, size, cur, f);
            cur.pop();
        }
    }
    rec(items, 0, size, &mut Vec::new(), f);
}

fn count_subsets(total: usize, size: usize) -> u64 {
    let mut c = 0u64;
    for_each_subset(&(0..total).collect::<Vec<_>>(), size, &mut |_| c += 1);
    c
}

/// Share of the `(n - 1)`-subsets of the `k - 1` other types holding fewer
/// than `c` of `x` marked types.
pub fn brute_proba(x: usize, c: usize, k: usize, n: usize) -> Exact {
    let others: Vec<usize> = (0..k - 1).collect();
    let mut good = 0u64;
    let mut total = 0u64;
    for_each_subset(&others, n - 1, &mut |s| {
        total += 1;
        if s.iter().filter(|&&o| o < x).count() < c {
            good += 1;
        }
    });
    Exact::new(good.into(), total.into())
}

/// Distribution of remaining seats (sentinel first, `n` sentinel seats) met
/// by the type at score position `prefix`, found by enumerating every
/// opponent subset and running serial dictatorship over the opponents that
/// outscore it.
pub fn brute_capacity_distribution(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    prefix: usize,
) -> BTreeMap<Vec<u32>, Exact> {
    let k = types.k();
    let n = game.n;
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| types.score(1, b).partial_cmp(&types.score(1, a)).unwrap());
    let position: Vec<usize> = {
        let mut pos = vec![0; k];
        for (p, &i) in order.iter().enumerate() {
            pos[i] = p;
        }
        pos
    };
    let focal = order[prefix];
    let others: Vec<usize> = (0..k).filter(|&i| i != focal).collect();
    let weight = Exact::new(1.into(), count_subsets(k - 1, n - 1).into());
    let mut out: BTreeMap<Vec<u32>, Exact> = BTreeMap::new();
    for_each_subset(&others, n - 1, &mut |subset| {
        let mut ahead: Vec<usize> = subset
            .iter()
            .copied()
            .filter(|&i| position[i] < prefix)
            .collect();
        ahead.sort_by_key(|&i| position[i]);
        let mut r = vec![n as u32];
        r.extend(game.capacities());
        for i in ahead {
            let action = strategy.pure_action(i).expect("pure strategy");
            let j = action
                .schools()
                .iter()
                .copied()
                .find(|&j| r[j] > 0)
                .unwrap_or(0);
            r[j] -= 1;
        }
        let entry = out.entry(r).or_insert_with(Exact::zero);
        *entry += weight.clone();
    });
    out
}

pub fn table(values: Vec<f64>) -> FunctionSpec {
    FunctionSpec::Table { values }
}

/// Distinct random scores for `k` types.
pub fn distinct_scores(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let mut ranks: Vec<usize> = (0..k).collect();
    for i in (1..k).rev() {
        ranks.swap(i, rng.gen_range(0..=i));
    }
    ranks
        .into_iter()
        .map(|r| (r as f64 + 1.0) / (k as f64 + 1.0))
        .collect()
}

/// A random game over `k` explicit types with table values and scores.
pub struct RandomGame {
    pub game: GameSpec,
    pub types: FiniteTypeSet,
}

pub fn random_game(
    rng: &mut ChaCha8Rng,
    k: usize,
    n: usize,
    capacities: &[u32],
    l: usize,
    identical_scores: bool,
) -> RandomGame {
    let shared = distinct_scores(rng, k);
    let schools = capacities
        .iter()
        .map(|&capacity| School {
            capacity,
            value: table((0..k).map(|_| rng.gen_range(0..=8) as f64 / 4.0).collect()),
            score: table(if identical_scores {
                shared.clone()
            } else {
                distinct_scores(rng, k)
            }),
        })
        .collect();
    let points: Vec<Vec<f64>> = (0..k).map(|i| vec![(i as f64 + 0.5) / k as f64]).collect();
    let game = GameSpec::new(
        n,
        l,
        schools,
        DistributionSpec::Explicit {
            points: points.clone(),
            weights: None,
        },
    )
    .unwrap();
    let pts = points
        .into_iter()
        .map(|p| TypePoint::new(p).unwrap())
        .collect();
    let types = FiniteTypeSet::new(&game, pts, None).unwrap();
    RandomGame { game, types }
}

/// Every ordered list of distinct schools from `1..=m` of length at most `l`.
pub fn ordered_lists(m: usize, l: usize) -> Vec<Action> {
    let mut out = vec![Action::empty()];
    let mut frontier = vec![Vec::<usize>::new()];
    for _ in 0..l.min(m) {
        let mut next = Vec::new();
        for prefix in &frontier {
            for j in 1..=m {
                if !prefix.contains(&j) {
                    let mut list = prefix.clone();
                    list.push(j);
                    out.push(Action::new(list.clone()).unwrap());
                    next.push(list);
                }
            }
        }
        frontier = next;
    }
    out
}

/// A random mixed strategy: each type mixes over up to three random lists.
pub fn random_strategy(rng: &mut ChaCha8Rng, k: usize, m: usize, l: usize) -> SymmetricStrategy {
    let lists = ordered_lists(m, l);
    let mixes = (0..k)
        .map(|_| {
            let support = rng.gen_range(1..=3);
            let raw: Vec<f64> = (0..support).map(|_| rng.gen_range(1..=4) as f64).collect();
            let total: f64 = raw.iter().sum();
            raw.iter()
                .map(|w| (lists[rng.gen_range(0..lists.len())].clone(), w / total))
                .collect::<Vec<_>>()
        })
        .map(|mix: Vec<(Action, f64)>| {
            // Merge repeated actions so supports stay distinct.
            let mut merged: BTreeMap<Action, f64> = BTreeMap::new();
            for (a, w) in mix {
                *merged.entry(a).or_insert(0.0) += w;
            }
            let total: f64 = merged.values().sum();
            merged.into_iter().map(|(a, w)| (a, w / total)).collect()
        })
        .collect();
    SymmetricStrategy::new(mixes).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn exact_to_f64(x: &Exact) -> f64 {
    num_traits::ToPrimitive::to_f64(x).unwrap()
}

pub fn exact_one() -> Exact {
    Exact::one()
}
