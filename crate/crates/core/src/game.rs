//! The Bayesian game: specifications, finite type sets, symmetric strategies
//! and interim payoff oracles.
//!
//! Interim payoffs follow the agent-form semantics for a uniform finite type
//! distribution: the focal type's `n - 1` opponents are a uniform subset of
//! the other `k - 1` types, each playing an action drawn from the strategy.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::market::{sort_by_value, Action, DaScratch};
use crate::sampling::DistributionSpec;

/// Scores closer than this are treated as tied.
pub const SCORE_TOLERANCE: f64 = 1e-12;

/// Default enumeration budget of the exact oracle, in opponent scenarios.
pub const DEFAULT_EXACT_BUDGET: f64 = 1e7;

/// A point of the type space `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypePoint(Vec<f64>);

impl TypePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(invalid("type points need at least one coordinate"));
        }
        if let Some(c) = coords.iter().find(|c| !(0.0..=1.0).contains(*c)) {
            return Err(invalid(format!("type coordinate {c} outside [0, 1]")));
        }
        Ok(TypePoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn distance_sq(&self, other: &TypePoint) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Value or scoring function of a school.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Const {
        c: f64,
    },
    Coord {
        dim: usize,
    },
    /// `r + t[dim]`
    Affine {
        r: f64,
        dim: usize,
    },
    /// `z . t`
    Dot {
        z: Vec<f64>,
    },
    /// Euclidean norm of the type.
    Norm2,
    /// One value per type index of a finite type set.
    Table {
        values: Vec<f64>,
    },
}

impl FunctionSpec {
    /// Evaluates at `t`; `index` is only read by `Table`.
    pub fn eval(&self, t: &TypePoint, index: usize) -> f64 {
        let x = t.coords();
        match self {
            FunctionSpec::Const { c } => *c,
            FunctionSpec::Coord { dim } => x[*dim],
            FunctionSpec::Affine { r, dim } => r + x[*dim],
            FunctionSpec::Dot { z } => z.iter().zip(x).map(|(a, b)| a * b).sum(),
            FunctionSpec::Norm2 => x.iter().map(|v| v * v).sum::<f64>().sqrt(),
            FunctionSpec::Table { values } => values[index],
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self {
            FunctionSpec::Coord { dim } | FunctionSpec::Affine { dim, .. } if *dim >= d => Err(
                invalid(format!("dim {dim} out of range for types of dimension {d}")),
            ),
            FunctionSpec::Dot { z } if z.len() != d => Err(invalid(format!(
                "dot vector has length {}, types have dimension {d}",
                z.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, FunctionSpec::Const { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct School {
    pub capacity: u32,
    pub value: FunctionSpec,
    pub score: FunctionSpec,
}

/// The market: `n` students, schools `1..=m`, list cap `l`, and the type
/// distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct GameSpec {
    pub n: usize,
    pub l: usize,
    pub schools: Vec<School>,
    pub types: DistributionSpec,
}

impl GameSpec {
    pub fn new(n: usize, l: usize, schools: Vec<School>, types: DistributionSpec) -> Result<Self> {
        let game = GameSpec {
            n,
            l,
            schools,
            types,
        };
        game.validate()?;
        Ok(game)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(invalid("n must be at least 1"));
        }
        if self.schools.is_empty() {
            return Err(invalid("at least one school is required"));
        }
        if self.l < 1 || self.l > self.m() {
            return Err(invalid(format!(
                "list cap l = {} must lie in 1..={}",
                self.l,
                self.m()
            )));
        }
        self.types.validate()?;
        let d = self.types.dim();
        for (j, s) in self.schools.iter().enumerate() {
            if s.capacity < 1 {
                return Err(invalid(format!("school {} has capacity 0", j + 1)));
            }
            s.value
                .validate(d)
                .and_then(|_| s.score.validate(d))
                .map_err(|e| invalid(format!("school {}: {e}", j + 1)))?;
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.schools.len()
    }

    pub fn capacities(&self) -> Vec<u32> {
        self.schools.iter().map(|s| s.capacity).collect()
    }

    pub fn values_at(&self, t: &TypePoint, index: usize) -> Vec<f64> {
        self.schools
            .iter()
            .map(|s| s.value.eval(t, index))
            .collect()
    }

    pub fn scores_at(&self, t: &TypePoint, index: usize) -> Vec<f64> {
        self.schools
            .iter()
            .map(|s| s.score.eval(t, index))
            .collect()
    }

    /// True when every school uses the same scoring function.
    pub fn identical_scores(&self) -> bool {
        self.first_distinct_score().is_none()
    }

    pub(crate) fn first_distinct_score(&self) -> Option<usize> {
        let first = &self.schools[0].score;
        self.schools
            .iter()
            .position(|s| &s.score != first)
            .map(|j| j + 1)
    }

    /// Canonical actions of a type: see [`canonical_actions`].
    pub fn canonical_actions(&self, t: &TypePoint, index: usize) -> Vec<Action> {
        canonical_actions(&self.values_at(t, index), self.l)
    }
}

fn combinations(m: usize, size: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(
        start: usize,
        m: usize,
        size: usize,
        cur: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for j in start..=m {
            if m - j + 1 < size - cur.len() {
                break;
            }
            cur.push(j);
            rec(j + 1, m, size, cur, f);
            cur.pop();
        }
    }
    rec(1, m, size, &mut Vec::with_capacity(size), f);
}

/// One action per school subset of size at most `l`, each sorted by
/// non-increasing value (ties by ascending id). Longest lists come first,
/// the empty list last; within a size, subsets are in lexicographic order.
pub fn canonical_actions(values: &[f64], l: usize) -> Vec<Action> {
    let m = values.len();
    let mut out = Vec::new();
    for size in (0..=l.min(m)).rev() {
        combinations(m, size, &mut |subset| {
            let mut schools = subset.to_vec();
            sort_by_value(&mut schools, values);
            out.push(Action::new(schools).expect("subset has distinct ids"));
        });
    }
    out
}

/// Every ordered list of distinct schools of length `0..=l`.
pub fn all_ordered_actions(m: usize, l: usize) -> Vec<Action> {
    fn rec(m: usize, l: usize, cur: &mut Vec<usize>, out: &mut Vec<Action>) {
        out.push(Action::new(cur.clone()).expect("distinct"));
        if cur.len() == l {
            return;
        }
        for j in 1..=m {
            if !cur.contains(&j) {
                cur.push(j);
                rec(m, l, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(m, l.min(m), &mut Vec::new(), &mut out);
    out
}

/// `k` type points with scores and values precomputed.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteTypeSet {
    points: Vec<TypePoint>,
    /// `scores[j - 1][i]`
    scores: Vec<Vec<f64>>,
    /// `values[j - 1][i]`
    values: Vec<Vec<f64>>,
    weights: Option<Vec<f64>>,
}

impl FiniteTypeSet {
    /// Requires `k >= n` and pairwise distinct scores at every school.
    /// `weights`, when given, make the distribution non-uniform (Monte Carlo
    /// oracle only).
    pub fn new(game: &GameSpec, points: Vec<TypePoint>, weights: Option<Vec<f64>>) -> Result<Self> {
        let k = points.len();
        if k < game.n {
            return Err(invalid(format!(
                "k = {k} types but n = {} students",
                game.n
            )));
        }
        let d = game.types.dim();
        if let Some(p) = points.iter().find(|p| p.dim() != d) {
            return Err(invalid(format!(
                "type point of dimension {}, game expects {d}",
                p.dim()
            )));
        }
        for s in &game.schools {
            for f in [&s.value, &s.score] {
                if let FunctionSpec::Table { values } = f {
                    if values.len() != k {
                        return Err(invalid(format!(
                            "table has {} entries for {k} types",
                            values.len()
                        )));
                    }
                }
            }
        }
        if let Some(w) = &weights {
            if w.len() != k || w.iter().any(|x| x.is_nan() || *x < 0.0) {
                return Err(invalid("weights must be k non-negative numbers"));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(invalid(format!("weights sum to {total}, expected 1")));
            }
        }
        let scores: Vec<Vec<f64>> = game
            .schools
            .iter()
            .map(|s| {
                points
                    .iter()
                    .enumerate()
                    .map(|(i, t)| s.score.eval(t, i))
                    .collect()
            })
            .collect();
        let values = game
            .schools
            .iter()
            .map(|s| {
                points
                    .iter()
                    .enumerate()
                    .map(|(i, t)| s.value.eval(t, i))
                    .collect()
            })
            .collect();
        for (j, row) in scores.iter().enumerate() {
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            if let Some(w) = order
                .windows(2)
                .find(|w| row[w[0]] - row[w[1]] <= SCORE_TOLERANCE)
            {
                return Err(Error::TiedScores {
                    school: j + 1,
                    first: w[0].min(w[1]),
                    second: w[0].max(w[1]),
                });
            }
        }
        Ok(FiniteTypeSet {
            points,
            scores,
            values,
            weights,
        })
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn m(&self) -> usize {
        self.scores.len()
    }

    pub fn points(&self) -> &[TypePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &TypePoint {
        &self.points[i]
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn is_uniform(&self) -> bool {
        self.weights.is_none()
    }

    #[inline]
    pub fn score(&self, school: usize, i: usize) -> f64 {
        self.scores[school - 1][i]
    }

    #[inline]
    pub fn value(&self, school: usize, i: usize) -> f64 {
        self.values[school - 1][i]
    }

    /// Values of type `i` at schools `1..=m`.
    pub fn values_of(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|row| row[i]).collect()
    }

    /// Type indices sorted by decreasing score at `school`.
    pub fn order_by_score(&self, school: usize) -> Vec<usize> {
        let row = &self.scores[school - 1];
        let mut order: Vec<usize> = (0..self.k()).collect();
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
        order
    }

    pub fn canonical_actions(&self, i: usize, l: usize) -> Vec<Action> {
        canonical_actions(&self.values_of(i), l)
    }
}

/// Weight tolerance of [`SymmetricStrategy`] mixes.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Per type index, a finite distribution over actions.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricStrategy {
    mixes: Vec<Vec<(Action, f64)>>,
}

impl SymmetricStrategy {
    pub fn new(mixes: Vec<Vec<(Action, f64)>>) -> Result<Self> {
        for (i, mix) in mixes.iter().enumerate() {
            if mix.is_empty() {
                return Err(invalid(format!("type {i} has an empty mix")));
            }
            if mix.iter().any(|(_, w)| w.is_nan() || *w < 0.0) {
                return Err(invalid(format!("type {i} has a negative weight")));
            }
            let total: f64 = mix.iter().map(|(_, w)| w).sum();
            if (total - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(invalid(format!("type {i} weights sum to {total}")));
            }
        }
        Ok(SymmetricStrategy { mixes })
    }

    pub fn pure(actions: Vec<Action>) -> Self {
        SymmetricStrategy {
            mixes: actions.into_iter().map(|a| vec![(a, 1.0)]).collect(),
        }
    }

    /// Every type mixes uniformly over `actions`.
    pub fn uniform_everywhere(k: usize, actions: &[Action]) -> Self {
        let w = 1.0 / actions.len() as f64;
        let mix: Vec<(Action, f64)> = actions.iter().map(|a| (a.clone(), w)).collect();
        SymmetricStrategy {
            mixes: vec![mix; k],
        }
    }

    pub fn k(&self) -> usize {
        self.mixes.len()
    }

    pub fn mix(&self, i: usize) -> &[(Action, f64)] {
        &self.mixes[i]
    }

    pub fn mixes(&self) -> &[Vec<(Action, f64)>] {
        &self.mixes
    }

    pub fn is_pure(&self) -> bool {
        self.mixes.iter().all(|m| m.len() == 1)
    }

    /// The action of a type playing a pure action.
    pub fn pure_action(&self, i: usize) -> Option<&Action> {
        match self.mixes[i].as_slice() {
            [(a, _)] => Some(a),
            _ => None,
        }
    }

    pub fn validate_for(&self, game: &GameSpec, types: &FiniteTypeSet) -> Result<()> {
        if self.k() != types.k() {
            return Err(invalid(format!(
                "strategy covers {} types, type set has {}",
                self.k(),
                types.k()
            )));
        }
        for mix in &self.mixes {
            for (a, _) in mix {
                a.validate(game.m(), game.l)?;
            }
        }
        Ok(())
    }

    fn sample<R: Rng>(&self, i: usize, rng: &mut R) -> &Action {
        let mix = &self.mixes[i];
        if mix.len() == 1 {
            return &mix[0].0;
        }
        let mut u: f64 = rng.gen();
        for (a, w) in mix {
            if u < *w {
                return a;
            }
            u -= w;
        }
        &mix[mix.len() - 1].0
    }
}

/// An expected payoff, exact or estimated.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PayoffEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub samples: u64,
    pub exact: bool,
}

impl PayoffEstimate {
    pub fn exact(mean: f64, terms: u64) -> Self {
        PayoffEstimate {
            mean,
            stderr: 0.0,
            samples: terms,
            exact: true,
        }
    }
}

/// Payoff oracle selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Oracle {
    /// Full enumeration, refused past `budget` opponent scenarios.
    Exact { budget: f64 },
    /// Seeded sampling of opponent scenarios.
    MonteCarlo { samples: usize, seed: u64 },
}

impl Oracle {
    pub fn exact() -> Self {
        Oracle::Exact {
            budget: DEFAULT_EXACT_BUDGET,
        }
    }
}

/// Computes the focal student's school in small realized markets.
#[derive(Default)]
pub(crate) struct FocalEvaluator {
    scratch: DaScratch,
}

impl FocalEvaluator {
    /// `participants[0]` is the focal type; `lists[p]` is participant `p`'s
    /// list. Returns the focal student's school, if any.
    pub(crate) fn focal_school(
        &mut self,
        types: &FiniteTypeSet,
        participants: &[usize],
        lists: &[&[usize]],
        capacities: &[u32],
    ) -> Option<usize> {
        let focal_list = lists[0];
        if focal_list.is_empty() {
            return None;
        }
        let focal = participants[0];
        if lists.iter().all(|l| l.len() <= 1) {
            // Single applications: each school keeps its top `c_j` applicants.
            let j = focal_list[0];
            let own = types.score(j, focal);
            let better = participants[1..]
                .iter()
                .zip(&lists[1..])
                .filter(|(&p, l)| l.first() == Some(&j) && types.score(j, p) > own)
                .count();
            return (better < capacities[j - 1] as usize).then_some(j);
        }
        self.scratch.run(lists, capacities, |j, a, b| {
            types.score(j, participants[a]) > types.score(j, participants[b])
        });
        self.scratch.assignment[0]
    }
}

fn check_focal(types: &FiniteTypeSet, strategy: &SymmetricStrategy, focal: usize) -> Result<()> {
    if focal >= types.k() {
        return Err(invalid(format!("focal type {focal} out of range")));
    }
    if strategy.k() != types.k() {
        return Err(invalid("strategy and type set sizes differ"));
    }
    Ok(())
}

/// Number of opponent scenarios the exact oracle enumerates for `focal`: the
/// elementary symmetric polynomial of degree `n - 1` in the other types'
/// support sizes.
pub fn exact_scenario_count(n: usize, strategy: &SymmetricStrategy, focal: usize) -> f64 {
    let mut e = vec![0.0f64; n];
    e[0] = 1.0;
    for i in (0..strategy.k()).filter(|&i| i != focal) {
        let s = strategy.mix(i).len() as f64;
        for d in (1..n).rev() {
            e[d] += e[d - 1] * s;
        }
    }
    e[n - 1]
}

/// Exact interim payoffs of `focal` for each of `actions`, enumerating every
/// opponent subset and every opponent action profile.
pub fn exact_interim_payoffs(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    focal: usize,
    actions: &[Action],
    budget: f64,
) -> Result<Vec<PayoffEstimate>> {
    check_focal(types, strategy, focal)?;
    if !types.is_uniform() {
        return Err(Error::NonUniformTypes);
    }
    for a in actions {
        a.validate(game.m(), game.l)?;
    }
    let n = game.n;
    let required = exact_scenario_count(n, strategy, focal);
    if required > budget {
        return Err(Error::BudgetExceeded {
            what: "exact interim payoff",
            required,
            budget,
        });
    }
    let k = types.k();
    let capacities = game.capacities();
    let others: Vec<usize> = (0..k).filter(|&i| i != focal).collect();
    let subset_prob = 1.0 / binomial_f64(k as u64 - 1, n as u64 - 1);
    let mut totals = vec![0.0; actions.len()];
    let mut terms = 0u64;
    let mut eval = FocalEvaluator::default();

    let mut participants = vec![focal; n];
    let mut chosen: Vec<usize> = Vec::with_capacity(n - 1);
    let mut emit = |subset: &[usize], totals: &mut [f64], terms: &mut u64| {
        participants[1..].copy_from_slice(subset);
        // Odometer over the opponents' supports.
        let mut digits = vec![0usize; subset.len()];
        loop {
            let mut prob = subset_prob;
            let mut lists: Vec<&[usize]> = Vec::with_capacity(n);
            lists.push(&[]);
            for (pos, &o) in subset.iter().enumerate() {
                let (a, w) = &strategy.mix(o)[digits[pos]];
                prob *= w;
                lists.push(a.schools());
            }
            *terms += 1;
            if prob > 0.0 {
                for (slot, action) in actions.iter().enumerate() {
                    lists[0] = action.schools();
                    if let Some(j) = eval.focal_school(types, &participants, &lists, &capacities) {
                        totals[slot] += prob * types.value(j, focal);
                    }
                }
            }
            let mut pos = 0;
            loop {
                if pos == digits.len() {
                    return;
                }
                digits[pos] += 1;
                if digits[pos] < strategy.mix(subset[pos]).len() {
                    break;
                }
                digits[pos] = 0;
                pos += 1;
            }
        }
    };

    fn subsets(
        others: &[usize],
        start: usize,
        size: usize,
        chosen: &mut Vec<usize>,
        f: &mut impl FnMut(&[usize]),
    ) {
        if chosen.len() == size {
            f(chosen);
            return;
        }
        for p in start..others.len() {
            if others.len() - p < size - chosen.len() {
                break;
            }
            chosen.push(others[p]);
            subsets(others, p + 1, size, chosen, f);
            chosen.pop();
        }
    }
    subsets(&others, 0, n - 1, &mut chosen, &mut |s| {
        emit(s, &mut totals, &mut terms)
    });
    Ok(totals
        .into_iter()
        .map(|t| PayoffEstimate::exact(t, terms))
        .collect())
}

/// Exact interim payoff of a single action.
pub fn exact_interim_payoff(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    focal: usize,
    action: &Action,
) -> Result<PayoffEstimate> {
    exact_interim_payoffs(
        game,
        types,
        strategy,
        focal,
        std::slice::from_ref(action),
        DEFAULT_EXACT_BUDGET,
    )
    .map(|v| v[0])
}

pub(crate) fn binomial_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Seeded stream for a focal type: independent of how work is split.
pub(crate) fn focal_rng(seed: u64, focal: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(focal as u64 + 1);
    rng
}

/// Draws opponent type subsets for a focal type.
pub(crate) struct OpponentSampler<'a> {
    k: usize,
    focal: usize,
    count: usize,
    weights: Option<WeightedIndex<f64>>,
    _types: &'a FiniteTypeSet,
}

impl<'a> OpponentSampler<'a> {
    pub(crate) fn new(types: &'a FiniteTypeSet, focal: usize, count: usize) -> Self {
        let weights = types
            .weights()
            .map(|w| WeightedIndex::new(w.iter().copied()).expect("validated weights"));
        OpponentSampler {
            k: types.k(),
            focal,
            count,
            weights,
            _types: types,
        }
    }

    /// Uniform `count`-subset of the non-focal types, or sequential weighted
    /// draws without replacement when the type set carries weights.
    pub(crate) fn draw<R: Rng>(&self, rng: &mut R, out: &mut Vec<usize>) {
        out.clear();
        if self.count == 0 {
            return;
        }
        if self.weights.is_none() && 2 * self.count > self.k {
            // Dense case: partial Fisher-Yates over the others.
            let mut pool: Vec<usize> = (0..self.k).filter(|&i| i != self.focal).collect();
            for p in 0..self.count {
                let q = rng.gen_range(p..pool.len());
                pool.swap(p, q);
            }
            out.extend_from_slice(&pool[..self.count]);
            return;
        }
        while out.len() < self.count {
            let i = match &self.weights {
                Some(w) => w.sample(rng),
                None => rng.gen_range(0..self.k),
            };
            if i != self.focal && !out.contains(&i) {
                out.push(i);
            }
        }
    }
}

/// Runs `samples` Monte Carlo opponent scenarios for `focal` and reports, per
/// scenario, the focal utility of every action in `actions` (common random
/// numbers across actions).
#[allow(clippy::too_many_arguments)]
pub(crate) fn mc_paired_utilities(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    focal: usize,
    actions: &[Action],
    samples: usize,
    seed: u64,
    mut record: impl FnMut(&[f64]),
) -> Result<()> {
    check_focal(types, strategy, focal)?;
    for a in actions {
        a.validate(game.m(), game.l)?;
    }
    let n = game.n;
    let capacities = game.capacities();
    let sampler = OpponentSampler::new(types, focal, n - 1);
    let mut rng = focal_rng(seed, focal);
    let mut opponents = Vec::with_capacity(n - 1);
    let mut participants = vec![focal; n];
    let mut utilities = vec![0.0; actions.len()];
    let mut eval = FocalEvaluator::default();
    let mut lists: Vec<&[usize]> = Vec::with_capacity(n);
    for _ in 0..samples {
        sampler.draw(&mut rng, &mut opponents);
        participants[1..].copy_from_slice(&opponents);
        lists.clear();
        lists.push(&[]);
        for &o in &opponents {
            lists.push(strategy.sample(o, &mut rng).schools());
        }
        for (slot, action) in actions.iter().enumerate() {
            lists[0] = action.schools();
            utilities[slot] = eval
                .focal_school(types, &participants, &lists, &capacities)
                .map_or(0.0, |j| types.value(j, focal));
        }
        record(&utilities);
    }
    Ok(())
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub(crate) fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub(crate) fn mean(&self) -> f64 {
        self.mean
    }

    pub(crate) fn stderr(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        (self.m2 / (self.count - 1) as f64 / self.count as f64).sqrt()
    }

    pub(crate) fn estimate(&self) -> PayoffEstimate {
        PayoffEstimate {
            mean: self.mean(),
            stderr: self.stderr(),
            samples: self.count,
            exact: false,
        }
    }
}

/// Monte Carlo estimate of the interim payoff of `action` for `focal`.
pub fn mc_interim_payoff(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    focal: usize,
    action: &Action,
    samples: usize,
    seed: u64,
) -> Result<PayoffEstimate> {
    if samples < 1 {
        return Err(invalid("samples must be at least 1"));
    }
    let mut acc = Welford::default();
    mc_paired_utilities(
        game,
        types,
        strategy,
        focal,
        std::slice::from_ref(action),
        samples,
        seed,
        |u| acc.push(u[0]),
    )?;
    Ok(acc.estimate())
}

/// Interim payoff of `focal` playing its own mix under `oracle`.
pub fn strategy_payoff(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    focal: usize,
    oracle: Oracle,
) -> Result<PayoffEstimate> {
    let mix = strategy.mix(focal);
    let actions: Vec<Action> = mix.iter().map(|(a, _)| a.clone()).collect();
    match oracle {
        Oracle::Exact { budget } => {
            let p = exact_interim_payoffs(game, types, strategy, focal, &actions, budget)?;
            let mean = p.iter().zip(mix).map(|(e, (_, w))| e.mean * w).sum();
            Ok(PayoffEstimate::exact(mean, p[0].samples))
        }
        Oracle::MonteCarlo { samples, seed } => {
            let mut acc = Welford::default();
            mc_paired_utilities(game, types, strategy, focal, &actions, samples, seed, |u| {
                acc.push(u.iter().zip(mix).map(|(x, (_, w))| x * w).sum())
            })?;
            Ok(acc.estimate())
        }
    }
}

/// Average interim payoff over the type set (weighted when it carries
/// weights), each type playing its own mix.
pub fn ex_ante_payoff(
    game: &GameSpec,
    types: &FiniteTypeSet,
    strategy: &SymmetricStrategy,
    oracle: Oracle,
) -> Result<PayoffEstimate> {
    let k = types.k();
    let mut mean = 0.0;
    let mut var = 0.0;
    let mut samples = 0;
    for i in 0..k {
        let w = types.weights().map_or(1.0 / k as f64, |w| w[i]);
        let p = strategy_payoff(game, types, strategy, i, oracle)?;
        mean += w * p.mean;
        var += (w * p.stderr).powi(2);
        samples += p.samples;
    }
    Ok(PayoffEstimate {
        mean,
        stderr: var.sqrt(),
        samples,
        exact: matches!(oracle, Oracle::Exact { .. }),
    })
}
