//! Equilibria with one application per student under strong
//! alpha-reducibility, by iterated elimination of fixed type-school pairs.

use crate::error::{invalid, Error, Result};
use crate::game::{FiniteTypeSet, GameSpec, SymmetricStrategy};
use crate::market::Action;
use crate::scalar::{pmf_from_ratios, Scalar};

/// Probability that at most `c - 1` of the `n - 1` opponents, drawn without
/// replacement from the other `k - 1` types, hold one of `x` marked types.
pub fn proba<S: Scalar>(x: usize, c: usize, k: usize, n: usize) -> Result<S> {
    if n < 1 || k < n {
        return Err(invalid(format!(
            "proba needs k >= n >= 1 (k = {k}, n = {n})"
        )));
    }
    if x > k - 1 {
        return Err(invalid(format!(
            "proba needs x <= k - 1 (x = {x}, k = {k})"
        )));
    }
    if c < 1 {
        return Err(invalid("proba needs c >= 1"));
    }
    let pool = k - 1;
    let draws = n - 1;
    let lo = draws.saturating_sub(pool - x);
    let hi = x.min(draws);
    if c > hi {
        return Ok(S::one());
    }
    if c - 1 < lo {
        return Ok(S::zero());
    }
    let mode = ((draws + 1) * (x + 1) / (pool + 2)).clamp(lo, hi) - lo;
    let pmf = pmf_from_ratios::<S>(hi - lo + 1, mode, |idx| {
        let i = lo + idx;
        let num = ((x - i) * (draws - i)) as u64;
        let den = ((i + 1) * (pool - x + i + 1 - draws)) as u64;
        S::ratio(num, den)
    });
    Ok(pmf
        .into_iter()
        .take(c - lo)
        .fold(S::zero(), |acc, p| acc + p))
}

/// Which of the listed sufficient conditions for strong alpha-reducibility
/// the game satisfies statically, if any.
pub fn sufficient_condition(game: &GameSpec) -> Option<&'static str> {
    if game.identical_scores() {
        Some("identical scores")
    } else if game.schools.iter().all(|s| s.value.is_constant()) {
        Some("constant values")
    } else if game.schools.iter().all(|s| s.value == s.score) {
        Some("symmetric preferences")
    } else {
        None
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StrongAlphaStats {
    pub sweeps: usize,
    /// Types given the empty action because every school is worth zero.
    pub empty: usize,
}

/// Computes a pure symmetric equilibrium for `l = 1`.
pub fn solve_strong_alpha(game: &GameSpec, types: &FiniteTypeSet) -> Result<SymmetricStrategy> {
    solve_strong_alpha_with_stats(game, types).map(|(s, _)| s)
}

const PRODUCT_TOLERANCE: f64 = 1e-12;

pub fn solve_strong_alpha_with_stats(
    game: &GameSpec,
    types: &FiniteTypeSet,
) -> Result<(SymmetricStrategy, StrongAlphaStats)> {
    if game.l != 1 {
        return Err(Error::BadEll(game.l));
    }
    if !types.is_uniform() {
        return Err(Error::NonUniformTypes);
    }
    if types.m() != game.m() {
        return Err(invalid("type set was built for a different game"));
    }
    let (k, m, n) = (types.k(), game.m(), game.n);
    let caps = game.capacities();
    let mut stats = StrongAlphaStats::default();
    let mut actions: Vec<Option<Action>> = vec![None; k];
    let mut unassigned = k;
    for (i, slot) in actions.iter_mut().enumerate() {
        if (1..=m).all(|j| types.value(j, i) <= 0.0) {
            *slot = Some(Action::empty());
            unassigned -= 1;
            stats.empty += 1;
        }
    }

    let orders: Vec<Vec<usize>> = (1..=m).map(|j| types.order_by_score(j)).collect();
    let mut cursor = vec![0usize; m];
    let mut x = vec![0usize; m];
    let mut q: Vec<f64> = (0..m)
        .map(|j| proba(0, caps[j] as usize, k, n))
        .collect::<Result<_>>()?;

    while unassigned > 0 {
        stats.sweeps += 1;
        let mut progress = false;
        for j in 0..m {
            while actions[orders[j][cursor[j]]].is_some() {
                cursor[j] += 1;
            }
            let i = orders[j][cursor[j]];
            let own = types.value(j + 1, i) * q[j];
            let fixed = (0..m).all(|o| {
                let other = types.value(o + 1, i) * q[o];
                other <= own + PRODUCT_TOLERANCE * own.abs().max(other.abs())
            });
            if fixed {
                actions[i] = Some(Action::new(vec![j + 1])?);
                x[j] += 1;
                unassigned -= 1;
                if x[j] < k {
                    q[j] = proba(x[j], caps[j] as usize, k, n)?;
                }
                progress = true;
                if unassigned == 0 {
                    break;
                }
            }
        }
        if !progress {
            return Err(Error::Stalled {
                sweeps: stats.sweeps,
                unassigned,
                condition: "strong alpha-reducibility",
            });
        }
    }
    let strategy = SymmetricStrategy::pure(actions.into_iter().map(Option::unwrap).collect());
    Ok((strategy, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{FunctionSpec, School, TypePoint};
    use crate::sampling::DistributionSpec;
    use crate::Exact;

    #[test]
    fn proba_examples() {
        assert_eq!(proba::<f64>(0, 1, 10, 5).unwrap(), 1.0);
        assert_eq!(proba::<Exact>(1, 1, 5, 3).unwrap(), Exact::ratio(1, 2));
        assert_eq!(proba::<f64>(2, 3, 3, 3).unwrap(), 1.0);
        assert_eq!(proba::<f64>(1, 1, 2, 2).unwrap(), 0.0);
        assert!((proba::<f32>(1, 1, 5, 3).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn proba_rejects_bad_parameters() {
        assert!(proba::<f64>(0, 1, 2, 3).is_err());
        assert!(proba::<f64>(5, 1, 5, 3).is_err());
        assert!(proba::<f64>(0, 0, 5, 3).is_err());
        assert!(proba::<f64>(0, 1, 5, 0).is_err());
    }

    #[test]
    fn proba_large_pool_is_finite() {
        let p: f64 = proba(20_000, 10, 100_000, 50).unwrap();
        assert!(p > 0.0 && p < 1.0, "{p}");
    }

    fn const_game(n: usize, caps: &[u32], values: &[f64]) -> GameSpec {
        let schools = caps
            .iter()
            .zip(values)
            .map(|(&capacity, &c)| School {
                capacity,
                value: FunctionSpec::Const { c },
                score: FunctionSpec::Coord { dim: 0 },
            })
            .collect();
        GameSpec::new(n, 1, schools, DistributionSpec::UniformInterval).unwrap()
    }

    fn points(xs: &[f64]) -> Vec<TypePoint> {
        xs.iter()
            .map(|&x| TypePoint::new(vec![x]).unwrap())
            .collect()
    }

    #[test]
    fn two_types_split_across_two_schools() {
        let game = const_game(2, &[1, 1], &[2.0, 1.0]);
        let types = FiniteTypeSet::new(&game, points(&[0.3, 0.9]), None).unwrap();
        let s = solve_strong_alpha(&game, &types).unwrap();
        assert_eq!(s.pure_action(1).unwrap().schools(), &[1]);
        assert_eq!(s.pure_action(0).unwrap().schools(), &[2]);
    }

    #[test]
    fn single_type_picks_favorite() {
        let game = const_game(1, &[1, 1], &[1.0, 3.0]);
        let types = FiniteTypeSet::new(&game, points(&[0.5]), None).unwrap();
        let s = solve_strong_alpha(&game, &types).unwrap();
        assert_eq!(s.pure_action(0).unwrap().schools(), &[2]);
    }

    #[test]
    fn worthless_schools_give_empty_action() {
        let game = const_game(1, &[1], &[0.0]);
        let types = FiniteTypeSet::new(&game, points(&[0.5]), None).unwrap();
        let (s, stats) = solve_strong_alpha_with_stats(&game, &types).unwrap();
        assert!(s.pure_action(0).unwrap().is_empty());
        assert_eq!(stats.empty, 1);
    }

    #[test]
    fn crossed_preferences_stall() {
        // School 1 favors type 0, school 2 favors type 1, each type prefers
        // the other school.
        let schools = vec![
            School {
                capacity: 1,
                value: FunctionSpec::Table {
                    values: vec![1.0, 2.0],
                },
                score: FunctionSpec::Table {
                    values: vec![2.0, 1.0],
                },
            },
            School {
                capacity: 1,
                value: FunctionSpec::Table {
                    values: vec![2.0, 1.0],
                },
                score: FunctionSpec::Table {
                    values: vec![1.0, 2.0],
                },
            },
        ];
        let game = GameSpec::new(2, 1, schools, DistributionSpec::UniformInterval).unwrap();
        assert_eq!(sufficient_condition(&game), None);
        let types = FiniteTypeSet::new(&game, points(&[0.2, 0.8]), None).unwrap();
        match solve_strong_alpha(&game, &types) {
            Err(Error::Stalled {
                sweeps: 1,
                unassigned: 2,
                condition,
            }) => assert_eq!(condition, "strong alpha-reducibility"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn longer_lists_are_refused() {
        let mut game = const_game(2, &[1, 1], &[2.0, 1.0]);
        game.l = 2;
        let types = FiniteTypeSet::new(&game, points(&[0.3, 0.9]), None).unwrap();
        assert!(matches!(
            solve_strong_alpha(&game, &types),
            Err(Error::BadEll(2))
        ));
    }

    #[test]
    fn static_conditions() {
        let game = const_game(2, &[1, 1], &[2.0, 1.0]);
        assert_eq!(sufficient_condition(&game), Some("identical scores"));
    }
}
