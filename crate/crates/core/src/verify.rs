//! Interim epsilon-equilibrium checks and complete-information outcome
//! audits.

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::game::{
    all_ordered_actions, exact_interim_payoffs, mc_paired_utilities, FiniteTypeSet, GameSpec,
    Oracle, SymmetricStrategy, Welford,
};
use crate::market::{
    deferred_acceptance, is_alpha_reducible_bruteforce, Action, MarketInstance, Matching,
    BRUTEFORCE_SIZE_CAP,
};

/// Which deviations the check tries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DeviationSet {
    /// One value-sorted list per school subset of size at most `l`.
    #[default]
    Canonical,
    /// Every ordered list of length at most `l`.
    AllOrdered,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TypeCheck {
    pub type_index: usize,
    /// Payoff of the type's own mix.
    pub payoff: f64,
    pub payoff_stderr: f64,
    pub best_deviation: Action,
    /// Payoff of the best deviation minus the own payoff.
    pub gain: f64,
    pub gain_stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub oracle: &'static str,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
    pub epsilon: f64,
    /// Largest deviation gain over all types, floored at zero.
    pub eps_hat: f64,
    /// Largest standard error among the per-type best-deviation gains.
    pub pooled_stderr: f64,
    pub worst_type: usize,
    pub pass: bool,
    pub types: Vec<TypeCheck>,
}

impl VerificationReport {
    pub fn threshold(&self) -> f64 {
        self.epsilon + 3.0 * self.pooled_stderr
    }
}

/// Checks that no type gains more than `epsilon` by deviating to a canonical
/// action.
pub fn check_interim_epsilon(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    epsilon: f64,
    oracle: Oracle,
) -> Result<VerificationReport> {
    check_interim_epsilon_with(
        game,
        types,
        strategy,
        epsilon,
        oracle,
        DeviationSet::Canonical,
    )
}

pub fn check_interim_epsilon_with(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    epsilon: f64,
    oracle: Oracle,
    deviations: DeviationSet,
) -> Result<VerificationReport> {
    strategy.validate_for(game, types)?;
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(invalid("epsilon must be non-negative"));
    }
    let ordered = match deviations {
        DeviationSet::AllOrdered => Some(all_ordered_actions(game.m(), game.l)),
        DeviationSet::Canonical => None,
    };
    let mut checks = Vec::with_capacity(types.k());
    for i in 0..types.k() {
        let mix = strategy.mix(i);
        let mut candidates = match &ordered {
            Some(all) => all.clone(),
            None => types.canonical_actions(i, game.l),
        };
        let own: Vec<usize> = mix
            .iter()
            .map(|(a, _)| match candidates.iter().position(|c| c == a) {
                Some(p) => p,
                None => {
                    candidates.push(a.clone());
                    candidates.len() - 1
                }
            })
            .collect();
        checks.push(match oracle {
            Oracle::Exact { budget } => {
                let p = exact_interim_payoffs(game, types, strategy, i, &candidates, budget)?;
                let payoff: f64 = own.iter().zip(mix).map(|(&s, (_, w))| w * p[s].mean).sum();
                let (best, value) =
                    p.iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (idx, e)| {
                            if e.mean > acc.1 {
                                (idx, e.mean)
                            } else {
                                acc
                            }
                        });
                TypeCheck {
                    type_index: i,
                    payoff,
                    payoff_stderr: 0.0,
                    best_deviation: candidates[best].clone(),
                    gain: value - payoff,
                    gain_stderr: 0.0,
                }
            }
            Oracle::MonteCarlo { samples, seed } => {
                if samples < 2 {
                    return Err(invalid("Monte Carlo verification needs at least 2 samples"));
                }
                let mut own_acc = Welford::default();
                let mut diffs = vec![Welford::default(); candidates.len()];
                mc_paired_utilities(game, types, strategy, i, &candidates, samples, seed, |u| {
                    let base: f64 = own.iter().zip(mix).map(|(&s, (_, w))| w * u[s]).sum();
                    own_acc.push(base);
                    for (d, x) in diffs.iter_mut().zip(u) {
                        d.push(x - base);
                    }
                })?;
                let (best, gain) =
                    diffs
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (idx, d)| {
                            if d.mean() > acc.1 {
                                (idx, d.mean())
                            } else {
                                acc
                            }
                        });
                TypeCheck {
                    type_index: i,
                    payoff: own_acc.mean(),
                    payoff_stderr: own_acc.stderr(),
                    best_deviation: candidates[best].clone(),
                    gain,
                    gain_stderr: diffs[best].stderr(),
                }
            }
        });
    }
    let worst = checks
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, c)| {
            if c.gain > acc.1 {
                (i, c.gain)
            } else {
                acc
            }
        });
    let eps_hat = worst.1.max(0.0);
    let pooled_stderr = checks.iter().map(|c| c.gain_stderr).fold(0.0, f64::max);
    let (name, samples, seed) = match oracle {
        Oracle::Exact { .. } => ("exact", None, None),
        Oracle::MonteCarlo { samples, seed } => ("mc", Some(samples), Some(seed)),
    };
    let pass = eps_hat <= epsilon + 3.0 * pooled_stderr;
    Ok(VerificationReport {
        oracle: name,
        samples,
        seed,
        epsilon,
        eps_hat,
        pooled_stderr,
        worst_type: worst.0,
        pass,
        types: checks,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditReport {
    /// Matching reached by the reported lists.
    pub outcome: Matching,
    /// Matching reached when everyone lists every school truthfully.
    pub stable: Matching,
    /// `None` when the market is too large for the brute-force check.
    pub alpha_reducible: Option<bool>,
    pub pass: bool,
}

/// With complete information (`k = n`, type `i` held by student `i`),
/// compares the outcome of the strategy profile with the stable matching of
/// the full truthful market.
pub fn audit_complete_info_outcome(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
) -> Result<AuditReport> {
    if types.k() != game.n {
        return Err(invalid(format!(
            "complete information needs k = n (k = {}, n = {})",
            types.k(),
            game.n
        )));
    }
    strategy.validate_for(game, types)?;
    let n = game.n;
    let m = game.m();
    let reported = (0..n)
        .map(|i| {
            strategy
                .pure_action(i)
                .cloned()
                .ok_or_else(|| invalid(format!("type {i} plays a mixed action")))
        })
        .collect::<Result<Vec<_>>>()?;
    let truthful = (0..n)
        .map(|i| {
            let all: Vec<usize> = (1..=m).collect();
            Action::new(all).map(|a| a.sorted_by_value(&types.values_of(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<Vec<f64>> = (1..=m)
        .map(|j| (0..n).map(|i| types.score(j, i)).collect())
        .collect();
    let full = MarketInstance::from_scores(truthful, game.capacities(), &scores)?;
    let played = full.with_lists(reported)?;
    let outcome = deferred_acceptance(&played);
    let stable = deferred_acceptance(&full);
    let alpha_reducible = if n + m <= BRUTEFORCE_SIZE_CAP {
        Some(is_alpha_reducible_bruteforce(&full)?)
    } else {
        None
    };
    Ok(AuditReport {
        pass: outcome == stable,
        outcome,
        stable,
        alpha_reducible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{FunctionSpec, School, TypePoint};
    use crate::sampling::DistributionSpec;
    use crate::strong_alpha::solve_strong_alpha;

    fn game(n: usize, caps: &[u32], values: &[f64]) -> GameSpec {
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

    fn types(g: &GameSpec, xs: &[f64]) -> FiniteTypeSet {
        let pts = xs
            .iter()
            .map(|&x| TypePoint::new(vec![x]).unwrap())
            .collect();
        FiniteTypeSet::new(g, pts, None).unwrap()
    }

    #[test]
    fn solver_output_is_exact_equilibrium() {
        let g = game(3, &[1, 1], &[2.0, 1.0]);
        let t = types(&g, &[0.1, 0.3, 0.5, 0.7, 0.9]);
        let s = solve_strong_alpha(&g, &t).unwrap();
        let r = check_interim_epsilon(&g, &t, &s, 1e-9, Oracle::exact()).unwrap();
        assert!(r.pass && r.eps_hat <= 1e-9, "{r:?}");
        assert_eq!(r.oracle, "exact");
    }

    #[test]
    fn empty_strategy_fails() {
        let g = game(2, &[1], &[1.0]);
        let t = types(&g, &[0.2, 0.8]);
        let s = SymmetricStrategy::pure(vec![Action::empty(); 2]);
        let r = check_interim_epsilon(&g, &t, &s, 0.0, Oracle::exact()).unwrap();
        assert!(!r.pass);
        assert_eq!(r.eps_hat, 1.0);
        let mc = Oracle::MonteCarlo {
            samples: 1000,
            seed: 3,
        };
        let r = check_interim_epsilon(&g, &t, &s, 0.0, mc).unwrap();
        assert!(!r.pass && r.eps_hat == 1.0);
    }

    #[test]
    fn single_student_audit_passes() {
        let g = game(1, &[1, 1], &[2.0, 1.0]);
        let t = types(&g, &[0.5]);
        let s = solve_strong_alpha(&g, &t).unwrap();
        let r = audit_complete_info_outcome(&g, &t, &s).unwrap();
        assert!(r.pass);
        assert_eq!(r.alpha_reducible, Some(true));
    }

    #[test]
    fn mc_report_is_deterministic() {
        let g = game(3, &[1, 1], &[2.0, 1.0]);
        let t = types(&g, &[0.1, 0.3, 0.5, 0.7]);
        let s = solve_strong_alpha(&g, &t).unwrap();
        let mc = Oracle::MonteCarlo {
            samples: 2000,
            seed: 42,
        };
        let a = check_interim_epsilon(&g, &t, &s, 0.01, mc).unwrap();
        let b = check_interim_epsilon(&g, &t, &s, 0.01, mc).unwrap();
        assert_eq!(a, b);
        assert!(a.pass);
        let wide =
            check_interim_epsilon_with(&g, &t, &s, 0.01, mc, DeviationSet::AllOrdered).unwrap();
        assert!(wide.pass);
    }
}
