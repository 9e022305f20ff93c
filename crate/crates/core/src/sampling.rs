//! Type distributions and sampling, the convergence harness, closed-form
//! strategies of worked examples, rank analytics, and strategy smoothing.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{
    FiniteTypeSet, FunctionSpec, GameSpec, Oracle, School, SymmetricStrategy, TypePoint,
};
use crate::identical::{solve_identical_dp, solve_identical_mc, DenominatorMode};
use crate::market::Action;
use crate::scalar::{pmf_from_ratios, Scalar};
use crate::strong_alpha::solve_strong_alpha;
use crate::verify::check_interim_epsilon;

/// Consecutive rejected draws tolerated by [`sample_types`].
pub const MAX_REDRAWS: usize = 1000;

/// Distribution of types over `[0, 1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    UniformCube {
        d: usize,
    },
    UniformInterval,
    /// Uniform on the segment `x + y = 1`.
    UniformDiagonal {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
    /// A finite support, uniform unless weighted.
    Explicit {
        points: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
}

impl DistributionSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistributionSpec::UniformCube { d } if *d < 1 => {
                Err(invalid("uniform_cube needs d >= 1"))
            }
            DistributionSpec::UniformDiagonal { d: Some(d) } if *d != 2 => Err(invalid(format!(
                "uniform_diagonal lives in dimension 2, key \"d\" = {d}"
            ))),
            DistributionSpec::Explicit { points, weights } => {
                let Some(first) = points.first() else {
                    return Err(invalid("explicit distribution without points"));
                };
                for p in points {
                    if p.len() != first.len() {
                        return Err(invalid("explicit points differ in dimension"));
                    }
                    TypePoint::new(p.clone())?;
                }
                if let Some(w) = weights {
                    if w.len() != points.len() || w.iter().any(|x| x.is_nan() || *x < 0.0) {
                        return Err(invalid(
                            "explicit weights must be one non-negative number per point",
                        ));
                    }
                    let total: f64 = w.iter().sum();
                    if (total - 1.0).abs() > 1e-9 {
                        return Err(invalid(format!("explicit weights sum to {total}")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DistributionSpec::UniformCube { d } => *d,
            DistributionSpec::UniformInterval => 1,
            DistributionSpec::UniformDiagonal { .. } => 2,
            DistributionSpec::Explicit { points, .. } => points.first().map_or(0, Vec::len),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> TypePoint {
        let coords = match self {
            DistributionSpec::UniformCube { d } => (0..*d).map(|_| rng.gen::<f64>()).collect(),
            DistributionSpec::UniformInterval => vec![rng.gen::<f64>()],
            DistributionSpec::UniformDiagonal { .. } => {
                let x: f64 = rng.gen();
                vec![x, 1.0 - x]
            }
            DistributionSpec::Explicit { .. } => unreachable!("explicit supports are not drawn"),
        };
        TypePoint::new(coords).expect("draws lie in the unit cube")
    }
}

/// Order-preserving integer key of a float.
fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits | 1 << 63
    }
}

fn from_order_key(key: u64) -> f64 {
    if key >> 63 == 1 {
        f64::from_bits(key & !(1 << 63))
    } else {
        f64::from_bits(!key)
    }
}

fn collides(set: &BTreeSet<u64>, s: f64) -> bool {
    let key = order_key(s);
    let near = |k: Option<&u64>| {
        k.is_some_and(|&k| (from_order_key(k) - s).abs() <= crate::game::SCORE_TOLERANCE)
    };
    near(set.range(key..).next()) || near(set.range(..key).next_back())
}

/// Draws `k` types, redrawing any point whose score at some school falls
/// within tolerance of an earlier one. Explicit supports are returned as
/// given and need `k` equal to their size.
pub fn sample_types(
    dist: &DistributionSpec,
    k: usize,
    seed: u64,
    game: &GameSpec,
) -> Result<FiniteTypeSet> {
    dist.validate()?;
    if k < game.n {
        return Err(invalid(format!("k = {k} is below n = {}", game.n)));
    }
    if dist.dim() != game.types.dim() {
        return Err(invalid("distribution dimension differs from the game's"));
    }
    if let DistributionSpec::Explicit { points, weights } = dist {
        if points.len() != k {
            return Err(invalid(format!(
                "explicit support has {} points, k = {k}",
                points.len()
            )));
        }
        let pts = points
            .iter()
            .map(|p| TypePoint::new(p.clone()))
            .collect::<Result<Vec<_>>>()?;
        let weights = weights
            .clone()
            .filter(|w| w.iter().any(|x| (x - 1.0 / k as f64).abs() > 1e-12));
        return FiniteTypeSet::new(game, pts, weights);
    }
    if game.schools.iter().any(|s| {
        matches!(s.score, FunctionSpec::Table { .. })
            || matches!(s.value, FunctionSpec::Table { .. })
    }) {
        return Err(invalid("table functions need an explicit type support"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen: Vec<BTreeSet<u64>> = vec![BTreeSet::new(); game.m()];
    let mut points = Vec::with_capacity(k);
    let mut failures = 0;
    while points.len() < k {
        let t = dist.draw(&mut rng);
        let scores = game.scores_at(&t, 0);
        if scores.iter().zip(&seen).any(|(&s, set)| collides(set, s)) {
            failures += 1;
            if failures >= MAX_REDRAWS {
                return Err(Error::LevelSetCollision { attempts: failures });
            }
            continue;
        }
        failures = 0;
        for (set, s) in seen.iter_mut().zip(scores) {
            set.insert(order_key(s));
        }
        points.push(t);
    }
    FiniteTypeSet::new(game, points, None)
}

/// Solver used by the convergence harness and the command line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SolverKind {
    StrongAlpha,
    IdenticalDp(DenominatorMode),
    IdenticalMc { runs: usize },
}

impl SolverKind {
    pub fn solve(
        self,
        game: &GameSpec,
        types: &FiniteTypeSet,
        seed: u64,
    ) -> Result<SymmetricStrategy> {
        match self {
            SolverKind::StrongAlpha => solve_strong_alpha(game, types),
            SolverKind::IdenticalDp(mode) => solve_identical_dp(game, types, mode),
            SolverKind::IdenticalMc { runs } => solve_identical_mc(game, types, runs, seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub k: usize,
    pub eps_hat: f64,
    pub stderr: f64,
    pub solve_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTrace {
    pub reference_k: usize,
    pub points: Vec<ConvergencePoint>,
}

/// Settings shared by every entry of a convergence schedule.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceSettings {
    /// Size of the fixed reference type set the strategies are judged on.
    pub reference_k: usize,
    /// Monte Carlo samples per reference type.
    pub samples: usize,
    pub seed: u64,
}

/// For each `k` in `schedule`: samples `k` types, solves, carries the
/// strategy to a fixed reference sample by [`smooth_strategy`], and measures
/// its epsilon there with the Monte Carlo oracle.
pub fn convergence_experiment(
    game: &GameSpec,
    dist: &DistributionSpec,
    schedule: &[usize],
    solver: SolverKind,
    settings: ConvergenceSettings,
) -> Result<ConvergenceTrace> {
    let reference = sample_types(dist, settings.reference_k, settings.seed ^ 0x5eed, game)?;
    let mut points = Vec::with_capacity(schedule.len());
    for (idx, &k) in schedule.iter().enumerate() {
        let seed = settings.seed.wrapping_add(idx as u64 + 1);
        let types = sample_types(dist, k, seed, game)?;
        let start = Instant::now();
        let strategy = solver.solve(game, &types, seed)?;
        let solve_seconds = start.elapsed().as_secs_f64();
        let carried = smooth_strategy(&strategy, types.points(), reference.points())?;
        let oracle = Oracle::MonteCarlo {
            samples: settings.samples,
            seed: settings.seed,
        };
        let report = check_interim_epsilon(game, &reference, &carried, 0.0, oracle)?;
        points.push(ConvergencePoint {
            k,
            eps_hat: report.eps_hat,
            stderr: report.pooled_stderr,
            solve_seconds,
        });
    }
    Ok(ConvergenceTrace {
        reference_k: settings.reference_k,
        points,
    })
}

/// Averages, at each query point, the mixes of the `ceil(sqrt(k))` nearest
/// support types (Euclidean distance, ties to the lower index).
pub fn smooth_strategy(
    strategy: &SymmetricStrategy,
    support: &[TypePoint],
    queries: &[TypePoint],
) -> Result<SymmetricStrategy> {
    let k = support.len();
    if k == 0 || strategy.k() != k {
        return Err(invalid("smoothing needs one mix per support point"));
    }
    let neighbors = (k as f64).sqrt().ceil() as usize;
    let mut idx: Vec<usize> = (0..k).collect();
    let mut mixes = Vec::with_capacity(queries.len());
    for q in queries {
        let dist: Vec<f64> = support.iter().map(|p| p.distance_sq(q)).collect();
        let by_distance = |a: &usize, b: &usize| dist[*a].total_cmp(&dist[*b]).then(a.cmp(b));
        if neighbors < k {
            idx.select_nth_unstable_by(neighbors - 1, by_distance);
        }
        let mut acc: BTreeMap<&Action, f64> = BTreeMap::new();
        for &i in &idx[..neighbors] {
            for (a, w) in strategy.mix(i) {
                *acc.entry(a).or_insert(0.0) += w / neighbors as f64;
            }
        }
        let total: f64 = acc.values().sum();
        mixes.push(
            acc.into_iter()
                .map(|(a, w)| (a.clone(), w / total))
                .collect(),
        );
    }
    SymmetricStrategy::new(mixes)
}

/// Closed-form equilibria of worked examples.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnalyticExample {
    /// Three identical schools, two applications: uniform over all six
    /// ordered pairs.
    Fig4Eq1,
    /// Same game: uniform over (1, 3) and (2, 3).
    Fig4Eq2,
    /// Two students, two schools, uniform types on the square.
    Fig2Family { r: f64, variant: u32 },
    /// Same game with types on the anti-diagonal.
    Fig3Family { r: f64, variant: u32 },
}

impl std::str::FromStr for AnalyticExample {
    type Err = Error;

    /// `fig4-eq1`, `fig4-eq2`, `fig2-family:R` or `fig3-family:R`, with an
    /// optional `:VARIANT` suffix on the families.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let number = |i: usize| -> Result<f64> {
            parts
                .get(i)
                .ok_or_else(|| Error::UnknownExample(s.to_string()))?
                .parse()
                .map_err(|_| Error::UnknownExample(s.to_string()))
        };
        let variant = || -> Result<u32> {
            parts.get(2).map_or(Ok(0), |v| {
                v.parse().map_err(|_| Error::UnknownExample(s.to_string()))
            })
        };
        match parts[0] {
            "fig4-eq1" if parts.len() == 1 => Ok(AnalyticExample::Fig4Eq1),
            "fig4-eq2" if parts.len() == 1 => Ok(AnalyticExample::Fig4Eq2),
            "fig2-family" if parts.len() <= 3 => Ok(AnalyticExample::Fig2Family {
                r: number(1)?,
                variant: variant()?,
            }),
            "fig3-family" if parts.len() <= 3 => Ok(AnalyticExample::Fig3Family {
                r: number(1)?,
                variant: variant()?,
            }),
            _ => Err(Error::UnknownExample(s.to_string())),
        }
    }
}

fn singleton(j: usize) -> Vec<(Action, f64)> {
    vec![(Action::new(vec![j]).expect("valid id"), 1.0)]
}

fn half_half() -> Vec<(Action, f64)> {
    vec![
        (Action::new(vec![1]).expect("valid id"), 0.5),
        (Action::new(vec![2]).expect("valid id"), 0.5),
    ]
}

/// Materializes an example's equilibrium on a finite type set.
pub fn analytic_strategy(
    example: AnalyticExample,
    types: &FiniteTypeSet,
) -> Result<SymmetricStrategy> {
    let need = |m: usize, d: usize| -> Result<()> {
        let dim = types.points().first().map_or(0, TypePoint::dim);
        if types.m() != m || dim != d {
            return Err(invalid(format!(
                "example expects {m} schools and types of dimension {d}"
            )));
        }
        Ok(())
    };
    let k = types.k();
    match example {
        AnalyticExample::Fig4Eq1 => {
            need(3, 1)?;
            let lists: Vec<Action> = [[1, 2], [1, 3], [2, 1], [2, 3], [3, 1], [3, 2]]
                .iter()
                .map(|l| Action::new(l.to_vec()))
                .collect::<Result<_>>()?;
            Ok(SymmetricStrategy::uniform_everywhere(k, &lists))
        }
        AnalyticExample::Fig4Eq2 => {
            need(3, 1)?;
            let lists = vec![Action::new(vec![1, 3])?, Action::new(vec![2, 3])?];
            Ok(SymmetricStrategy::uniform_everywhere(k, &lists))
        }
        AnalyticExample::Fig2Family { r, variant } | AnalyticExample::Fig3Family { r, variant } => {
            need(2, 2)?;
            if variant != 0 {
                return Err(invalid(format!(
                    "only variant 0 of the family is available (got {variant})"
                )));
            }
            if r.is_nan() || r < 0.0 {
                return Err(invalid("r must be non-negative"));
            }
            let square = matches!(example, AnalyticExample::Fig2Family { .. });
            let mixes = types
                .points()
                .iter()
                .map(|p| {
                    let (x, y) = (p.coords()[0], p.coords()[1]);
                    if square {
                        fig2_choice(r, x, y)
                    } else {
                        fig3_choice(r, x)
                    }
                })
                .collect();
            SymmetricStrategy::new(mixes)
        }
    }
}

fn fig2_choice(r: f64, x: f64, y: f64) -> Vec<(Action, f64)> {
    if r <= 0.5 {
        return singleton(if x > y { 1 } else { 2 });
    }
    if r == 1.0 {
        return half_half();
    }
    let side = if r < 1.0 { 2.0 - 1.0 / r } else { 1.0 / r };
    if x < side && y < side {
        return half_half();
    }
    let first = if r < 1.0 { x > y } else { y > x };
    singleton(if first { 1 } else { 2 })
}

fn fig3_choice(r: f64, x: f64) -> Vec<(Action, f64)> {
    if r == 1.0 {
        half_half()
    } else if (r < 1.0) == (x > 0.5) {
        singleton(1)
    } else {
        singleton(2)
    }
}

/// Interim payoff of a type `t` in the three-identical-schools example under
/// its two symmetric equilibria (`1` or `2`).
pub fn fig4_payoff(equilibrium: u8, t: f64) -> Result<f64> {
    match equilibrium {
        1 => Ok(1.0 - (1.0 - t).powi(2) / 3.0),
        2 => Ok(1.0 - (1.0 - t).powi(2) / 4.0),
        other => Err(Error::UnknownExample(format!("fig4 equilibrium {other}"))),
    }
}

/// `P[R = r]` for `r = 1..=n`, where `R - 1 ~ Binomial(n - 1, 1 - t)` is the
/// rank of a type-`t` student among `n` when everyone's score is uniform.
pub fn rank_pmf<S: Scalar>(n: usize, t: S) -> Result<Vec<S>> {
    if n < 1 {
        return Err(invalid("rank distribution needs n >= 1"));
    }
    if t < S::zero() || t > S::one() {
        return Err(invalid("t must lie in [0, 1]"));
    }
    let trials = n - 1;
    let mut out = vec![S::zero(); n];
    if t == S::one() {
        out[0] = S::one();
        return Ok(out);
    }
    if t.is_zero() {
        out[trials] = S::one();
        return Ok(out);
    }
    let p = S::one() - t.clone();
    let odds = p.clone() / t;
    let mode = (((trials + 1) as f64) * p.to_f64_lossy()).floor() as usize;
    Ok(pmf_from_ratios(n, mode.min(trials), |i| {
        S::ratio((trials - i) as u64, (i + 1) as u64) * odds.clone()
    }))
}

/// `P[R <= r]` for the rank `R` of [`rank_pmf`].
pub fn rank_distribution<S: Scalar>(n: usize, t: S, r: usize) -> Result<S> {
    if r < 1 || r > n {
        return Err(invalid(format!("rank {r} outside 1..={n}")));
    }
    Ok(rank_pmf(n, t)?
        .into_iter()
        .take(r)
        .fold(S::zero(), |acc, p| acc + p))
}

/// Outcome probabilities of a type-`t` student when students and schools
/// agree on rankings and everyone lists every school: schools fill in the
/// order given by `capacities` (best first). Index 0 is "unassigned".
pub fn aligned_outcome_probabilities(n: usize, capacities: &[u32], t: f64) -> Result<Vec<f64>> {
    let pmf = rank_pmf(n, t)?;
    let mut out = vec![0.0; capacities.len() + 1];
    let mut upper = 0usize;
    for (j, &c) in capacities.iter().enumerate() {
        let lower = upper;
        upper = (upper + c as usize).min(n);
        out[j + 1] = pmf[lower..upper].iter().sum();
    }
    out[0] = pmf[upper..].iter().sum();
    Ok(out)
}

fn constant(c: f64) -> FunctionSpec {
    FunctionSpec::Const { c }
}

fn school(capacity: u32, value: FunctionSpec, score: FunctionSpec) -> School {
    School {
        capacity,
        value,
        score,
    }
}

/// Games of the worked examples: `fig2`, `fig3`, `fig4`, `fig5`, `fig6`,
/// `fig9`. `r` shifts values where the example has that parameter; `l`
/// overrides the list cap of `fig9`.
pub fn example_game(name: &str, r: f64, l: Option<usize>) -> Result<GameSpec> {
    use FunctionSpec::{Affine, Coord, Dot, Norm2};
    let square = DistributionSpec::UniformCube { d: 2 };
    match name {
        "fig2" | "fig3" => GameSpec::new(
            2,
            1,
            vec![
                school(1, Affine { r, dim: 0 }, Coord { dim: 1 }),
                school(1, Affine { r, dim: 1 }, Coord { dim: 0 }),
            ],
            if name == "fig2" {
                square
            } else {
                DistributionSpec::UniformDiagonal { d: None }
            },
        ),
        "fig4" => GameSpec::new(
            3,
            2,
            (0..3)
                .map(|_| school(1, constant(1.0), Coord { dim: 0 }))
                .collect(),
            DistributionSpec::UniformInterval,
        ),
        "fig5" => GameSpec::new(
            3,
            1,
            vec![
                school(1, Affine { r, dim: 0 }, Norm2),
                school(2, Affine { r, dim: 1 }, Norm2),
            ],
            square,
        ),
        "fig6" => GameSpec::new(
            3,
            1,
            vec![
                school(1, constant(r + 1.0), Dot { z: vec![0.4, 0.2] }),
                school(2, constant(r), Dot { z: vec![0.2, 0.4] }),
            ],
            square,
        ),
        "fig9" => GameSpec::new(
            50,
            l.unwrap_or(5),
            [(5, 5.0), (10, 4.0), (5, 3.0), (10, 2.0), (10, 1.0)]
                .iter()
                .map(|&(c, v)| school(c, constant(v), Coord { dim: 0 }))
                .collect(),
            DistributionSpec::UniformInterval,
        ),
        other => Err(Error::UnknownExample(other.to_string())),
    }
}
