//! Equilibria when every school uses the same scoring function.
//!
//! Types are processed in decreasing score order. Each one best-responds to
//! the distribution of remaining seats left by the higher-scored types, then
//! that distribution is advanced by the chosen action. The distribution is
//! kept exactly by dynamic programming, or estimated by simulating many
//! serial dictatorship runs.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::game::{FiniteTypeSet, GameSpec, SymmetricStrategy};
use crate::market::Action;
use crate::scalar::Scalar;

/// Largest capacity-distribution support the DP accepts.
pub const DP_SUPPORT_BUDGET: usize = 2_000_000;

/// Remaining seats per school; index 0 is the sentinel school with `n`
/// seats and value 0, implicitly listed last by everyone.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CapacityVector(Vec<u32>);

impl CapacityVector {
    /// Full capacities: `n` sentinel seats and `capacities[j - 1]` at `j`.
    pub fn full(n: usize, capacities: &[u32]) -> Self {
        let mut r = Vec::with_capacity(capacities.len() + 1);
        r.push(n as u32);
        r.extend_from_slice(capacities);
        CapacityVector(r)
    }

    pub fn new(remaining: Vec<u32>) -> Self {
        CapacityVector(remaining)
    }

    pub fn remaining(&self) -> &[u32] {
        &self.0
    }

    /// Seats consumed relative to `full`, sentinel included.
    pub fn consumed(&self, full: &CapacityVector) -> u32 {
        full.0.iter().zip(&self.0).map(|(c, r)| c - r).sum()
    }

    fn availability(&self) -> u64 {
        self.0[1..]
            .iter()
            .enumerate()
            .filter(|(_, &r)| r > 0)
            .fold(0, |mask, (j, _)| mask | 1 << j)
    }
}

/// First listed school with a free seat, or the sentinel 0.
pub fn school_pick(action: &Action, r: &CapacityVector) -> usize {
    action
        .schools()
        .iter()
        .copied()
        .find(|&j| r.0[j] > 0)
        .unwrap_or(0)
}

/// [`school_pick`] against a bitmask of schools with free seats.
fn pick_by_mask(action: &Action, mask: u64) -> usize {
    action
        .schools()
        .iter()
        .copied()
        .find(|&j| mask >> (j - 1) & 1 == 1)
        .unwrap_or(0)
}

/// Probability mass over remaining-capacity vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct CapacityDistribution<S> {
    mass: BTreeMap<CapacityVector, S>,
}

impl<S: Scalar> CapacityDistribution<S> {
    pub fn point(r: CapacityVector) -> Self {
        CapacityDistribution {
            mass: BTreeMap::from([(r, S::one())]),
        }
    }

    pub fn get(&self, r: &CapacityVector) -> S {
        self.mass.get(r).cloned().unwrap_or_else(S::zero)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CapacityVector, &S)> {
        self.mass.iter()
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn total(&self) -> S {
        self.mass.values().fold(S::zero(), |acc, p| acc + p.clone())
    }

    /// Expected seats consumed, sentinel included.
    pub fn expected_consumed(&self, full: &CapacityVector) -> f64 {
        self.mass
            .iter()
            .map(|(r, p)| r.consumed(full) as f64 * p.to_f64_lossy())
            .sum()
    }

    /// Probability of landing at each school `0..=m` when playing `action`.
    pub fn outcome_probabilities(&self, action: &Action, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m + 1];
        for (r, p) in &self.mass {
            out[school_pick(action, r)] += p.to_f64_lossy();
        }
        out
    }

    /// Mass grouped by which real schools still have seats.
    fn by_availability(&self) -> BTreeMap<u64, f64> {
        let mut out = BTreeMap::new();
        for (r, p) in &self.mass {
            *out.entry(r.availability()).or_insert(0.0) += p.to_f64_lossy();
        }
        out
    }

    /// Advances by one processed type playing `action`; each opponent draws
    /// that type with probability `(n - 1 - x) / denominator`, where `x`
    /// counts seats consumed so far. Outflows use pre-update masses.
    fn advance(
        &mut self,
        action: &Action,
        n: usize,
        full: &CapacityVector,
        denominator: usize,
    ) -> Result<()> {
        let mut next: BTreeMap<CapacityVector, S> = BTreeMap::new();
        for (r, mass) in std::mem::take(&mut self.mass) {
            let x = r.consumed(full) as usize;
            let pending = n - 1 - x;
            if pending == 0 {
                add(&mut next, r, mass);
                continue;
            }
            if denominator == 0 {
                return Err(invalid("no types left to draw from"));
            }
            let p = S::ratio(pending as u64, denominator as u64);
            let stay = S::one() - p.clone();
            let mut moved = r.clone();
            moved.0[school_pick(action, &r)] -= 1;
            add(&mut next, moved, p * mass.clone());
            add(&mut next, r, stay * mass);
        }
        next.retain(|_, p| !p.is_zero());
        if next.len() > DP_SUPPORT_BUDGET {
            return Err(Error::BudgetExceeded {
                what: "capacity distribution support",
                required: next.len() as f64,
                budget: DP_SUPPORT_BUDGET as f64,
            });
        }
        self.mass = next;
        Ok(())
    }
}

fn add<S: Scalar>(map: &mut BTreeMap<CapacityVector, S>, r: CapacityVector, p: S) {
    match map.get_mut(&r) {
        Some(acc) => *acc = acc.clone() + p,
        None => {
            map.insert(r, p);
        }
    }
}

/// How the DP counts the types an opponent may still draw.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DenominatorMode {
    /// All not-yet-processed types, focal type included.
    Paper,
    /// Not-yet-processed types other than the focal type, which can never
    /// be its own opponent.
    FocalCorrected,
}

impl DenominatorMode {
    /// Denominator when advancing past the type at sorted position `h`.
    fn denominator(self, k: usize, h: usize) -> usize {
        match self {
            DenominatorMode::Paper => k - h,
            DenominatorMode::FocalCorrected => k - h - 1,
        }
    }
}

impl std::str::FromStr for DenominatorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(DenominatorMode::Paper),
            "focal-corrected" => Ok(DenominatorMode::FocalCorrected),
            other => Err(invalid(format!("unknown denominator mode {other:?}"))),
        }
    }
}

fn check_identical(game: &GameSpec, types: &FiniteTypeSet) -> Result<()> {
    if let Some(j) = game.first_distinct_score() {
        return Err(Error::NonIdenticalScores(j));
    }
    if !types.is_uniform() {
        return Err(Error::NonUniformTypes);
    }
    if types.m() != game.m() {
        return Err(invalid("type set was built for a different game"));
    }
    if game.m() > 63 {
        return Err(invalid("at most 63 schools are supported"));
    }
    Ok(())
}

/// Index of the best action for `focal` against seat availability masses;
/// near-ties keep the lower index.
fn best_action(
    types: &FiniteTypeSet,
    focal: usize,
    actions: &[Action],
    masses: &BTreeMap<u64, f64>,
) -> usize {
    let payoff = |a: &Action| -> f64 {
        masses
            .iter()
            .map(|(&mask, &p)| match pick_by_mask(a, mask) {
                0 => 0.0,
                j => p * types.value(j, focal),
            })
            .sum()
    };
    let mut best = 0;
    let mut best_value = payoff(&actions[0]);
    for (idx, a) in actions.iter().enumerate().skip(1) {
        let value = payoff(a);
        if value > best_value + 1e-12 * best_value.abs().max(1e-300) {
            best = idx;
            best_value = value;
        }
    }
    best
}

/// Largest distribution support seen while solving.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DpStats {
    pub max_support: usize,
}

/// Runs the DP over the first `steps` types in score order. Returns the
/// actions by type index and the final distribution.
fn run_dp<S: Scalar>(
    game: &GameSpec,
    types: &FiniteTypeSet,
    mode: DenominatorMode,
    steps: usize,
) -> Result<(Vec<Action>, CapacityDistribution<S>, DpStats)> {
    check_identical(game, types)?;
    let (k, n) = (types.k(), game.n);
    let full = CapacityVector::full(n, &game.capacities());
    let mut q = CapacityDistribution::<S>::point(full.clone());
    let order = types.order_by_score(1);
    let mut chosen = vec![Action::empty(); k];
    let mut stats = DpStats { max_support: 1 };
    for (h, &i) in order.iter().enumerate().take(steps) {
        let actions = types.canonical_actions(i, game.l);
        let a = &actions[best_action(types, i, &actions, &q.by_availability())];
        chosen[i] = a.clone();
        if h + 1 < k || mode == DenominatorMode::Paper {
            q.advance(a, n, &full, mode.denominator(k, h))?;
            stats.max_support = stats.max_support.max(q.len());
        }
    }
    Ok((chosen, q, stats))
}

/// Pure symmetric equilibrium computed in double precision.
pub fn solve_identical_dp(
    game: &GameSpec,
    types: &FiniteTypeSet,
    mode: DenominatorMode,
) -> Result<SymmetricStrategy> {
    solve_identical_dp_in::<f64>(game, types, mode)
}

/// As [`solve_identical_dp`] with the distribution kept in `S`.
pub fn solve_identical_dp_in<S: Scalar>(
    game: &GameSpec,
    types: &FiniteTypeSet,
    mode: DenominatorMode,
) -> Result<SymmetricStrategy> {
    solve_identical_dp_with_stats::<S>(game, types, mode).map(|(s, _)| s)
}

pub fn solve_identical_dp_with_stats<S: Scalar>(
    game: &GameSpec,
    types: &FiniteTypeSet,
    mode: DenominatorMode,
) -> Result<(SymmetricStrategy, DpStats)> {
    let (actions, _, stats) = run_dp::<S>(game, types, mode, types.k())?;
    Ok((SymmetricStrategy::pure(actions), stats))
}

/// The distribution over remaining seats after the `prefix` highest-scored
/// types have been processed.
pub fn dp_capacity_distribution<S: Scalar>(
    game: &GameSpec,
    types: &FiniteTypeSet,
    prefix: usize,
    mode: DenominatorMode,
) -> Result<CapacityDistribution<S>> {
    if prefix > types.k() {
        return Err(invalid(format!(
            "prefix {prefix} exceeds k = {}",
            types.k()
        )));
    }
    run_dp::<S>(game, types, mode, prefix).map(|(_, q, _)| q)
}

/// Monte Carlo solution: the strategy and, per type, the probability of
/// ending at each school `0..=m` (0 meaning unassigned).
#[derive(Clone, Debug)]
pub struct McSolution {
    pub strategy: SymmetricStrategy,
    pub outcomes: Vec<Vec<f64>>,
    pub runs: usize,
}

/// Pure symmetric equilibrium from simulated serial dictatorship runs.
///
/// The types are partitioned at random into `floor(k / (n - 1))` runs of
/// `n - 1` types; more runs come from further independent partitions, and
/// the first `runs` are kept. Each type best-responds to the empirical seat
/// availability over all runs, then plays its action in every run holding
/// it.
pub fn solve_identical_mc(
    game: &GameSpec,
    types: &FiniteTypeSet,
    runs: usize,
    seed: u64,
) -> Result<SymmetricStrategy> {
    solve_identical_mc_with_outcomes(game, types, runs, seed).map(|s| s.strategy)
}

pub fn solve_identical_mc_with_outcomes(
    game: &GameSpec,
    types: &FiniteTypeSet,
    runs: usize,
    seed: u64,
) -> Result<McSolution> {
    check_identical(game, types)?;
    let (k, n, m) = (types.k(), game.n, game.m());
    if k + 1 < n {
        return Err(invalid(format!("k = {k} is below n - 1 = {}", n - 1)));
    }
    if runs < 1 {
        return Err(invalid("runs must be at least 1"));
    }
    let caps = game.capacities();
    let all_open: u64 = (0..m).fold(0, |mask, j| mask | 1 << j);
    let run_size = n - 1;

    // member[i] lists the runs holding type i.
    let mut member: Vec<Vec<u32>> = vec![Vec::new(); k];
    if let Some(per_partition) = k.checked_div(run_size) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..k).collect();
        let mut next_run = 0;
        while next_run < runs {
            perm.shuffle(&mut rng);
            let take = per_partition.min(runs - next_run);
            for (pos, &i) in perm.iter().enumerate().take(take * run_size) {
                member[i].push((next_run + pos / run_size) as u32);
            }
            next_run += take;
        }
    }

    let mut remaining: Vec<Vec<u32>> = vec![caps.clone(); runs];
    let mut masks = vec![all_open; runs];
    let mut counts: BTreeMap<u64, f64> = BTreeMap::from([(all_open, runs as f64)]);
    let scale = 1.0 / runs as f64;
    let mut chosen = vec![Action::empty(); k];
    let mut outcomes = vec![vec![0.0; m + 1]; k];
    for i in types.order_by_score(1) {
        let shares: BTreeMap<u64, f64> = counts
            .iter()
            .filter(|(_, &c)| c > 0.0)
            .map(|(&mask, &c)| (mask, c * scale))
            .collect();
        let actions = types.canonical_actions(i, game.l);
        let a = &actions[best_action(types, i, &actions, &shares)];
        for (&mask, &p) in &shares {
            outcomes[i][pick_by_mask(a, mask)] += p;
        }
        for &run in &member[i] {
            let run = run as usize;
            let j = pick_by_mask(a, masks[run]);
            if j == 0 {
                continue;
            }
            remaining[run][j - 1] -= 1;
            if remaining[run][j - 1] == 0 {
                *counts.get_mut(&masks[run]).expect("tracked mask") -= 1.0;
                masks[run] &= !(1 << (j - 1));
                *counts.entry(masks[run]).or_insert(0.0) += 1.0;
            }
        }
        chosen[i] = a.clone();
    }
    Ok(McSolution {
        strategy: SymmetricStrategy::pure(chosen),
        outcomes,
        runs,
    })
}
