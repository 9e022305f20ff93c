//! Deterministic matching procedures and market-structure predicates.
//!
//! School ids are `1..=m`; id `0` is reserved for the sentinel school that
//! catches every student whose listed schools are full.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::game::{GameSpec, TypePoint};

/// Id of the sentinel school appended to the end of every list.
pub const SENTINEL: usize = 0;

/// An ordered preference list of distinct school ids, possibly empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Action(Vec<usize>);

impl Action {
    pub fn new(schools: Vec<usize>) -> Result<Self> {
        for (pos, &j) in schools.iter().enumerate() {
            if j == SENTINEL {
                return Err(invalid("school id 0 is reserved for the sentinel"));
            }
            if schools[..pos].contains(&j) {
                return Err(invalid(format!("school {j} listed twice")));
            }
        }
        Ok(Action(schools))
    }

    pub fn empty() -> Self {
        Action(Vec::new())
    }

    pub fn schools(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks ids against `m` schools and the list cap `l`.
    pub fn validate(&self, m: usize, l: usize) -> Result<()> {
        if self.0.len() > l {
            return Err(invalid(format!(
                "action {self} lists {} schools, cap is {l}",
                self.0.len()
            )));
        }
        if let Some(&j) = self.0.iter().find(|&&j| j > m) {
            return Err(invalid(format!(
                "action {self} names school {j}, only {m} exist"
            )));
        }
        Ok(())
    }

    /// The same schools sorted by non-increasing value, ties by ascending id.
    pub fn sorted_by_value(&self, values: &[f64]) -> Action {
        let mut schools = self.0.clone();
        sort_by_value(&mut schools, values);
        Action(schools)
    }
}

pub(crate) fn sort_by_value(schools: &mut [usize], values: &[f64]) {
    schools.sort_by(|&a, &b| {
        values[b - 1]
            .partial_cmp(&values[a - 1])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (pos, j) in self.0.iter().enumerate() {
            if pos > 0 {
                f.write_str(";")?;
            }
            write!(f, "{j}")?;
        }
        Ok(())
    }
}

impl std::str::FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Action::empty());
        }
        let schools = s
            .split(';')
            .map(|part| {
                part.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad school id {part:?} in action {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Action::new(schools)
    }
}

/// Assignment of students to schools; `None` is unmatched.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    assignment: Vec<Option<usize>>,
}

impl Matching {
    pub fn new(assignment: Vec<Option<usize>>) -> Self {
        Matching { assignment }
    }

    pub fn get(&self, student: usize) -> Option<usize> {
        self.assignment[student]
    }

    pub fn as_slice(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }
}

/// A reported market: lists, capacities and strict school rankings.
#[derive(Clone, Debug)]
pub struct MarketInstance {
    lists: Vec<Action>,
    capacities: Vec<u32>,
    /// `rank[j - 1][i]` is student `i`'s position at school `j` (0 is best).
    rank: Vec<Vec<u32>>,
}

impl MarketInstance {
    /// Builds an instance from explicit school orders, best student first.
    pub fn from_rankings(
        lists: Vec<Action>,
        capacities: Vec<u32>,
        orders: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let n = lists.len();
        if orders.len() != capacities.len() {
            return Err(invalid(format!(
                "{} capacities but {} school rankings",
                capacities.len(),
                orders.len()
            )));
        }
        let mut rank = Vec::with_capacity(orders.len());
        for (j, order) in orders.iter().enumerate() {
            if order.len() != n {
                return Err(invalid(format!(
                    "school {} ranks {} students, expected {n}",
                    j + 1,
                    order.len()
                )));
            }
            let mut pos = vec![u32::MAX; n];
            for (p, &i) in order.iter().enumerate() {
                if i >= n || pos[i] != u32::MAX {
                    return Err(invalid(format!(
                        "school {} ranking is not a permutation of the students",
                        j + 1
                    )));
                }
                pos[i] = p as u32;
            }
            rank.push(pos);
        }
        let inst = MarketInstance {
            lists,
            capacities,
            rank,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Builds an instance from per-school scores (`scores[j - 1][i]`, higher
    /// is better). Ties are rejected; resolve them before calling.
    pub fn from_scores(
        lists: Vec<Action>,
        capacities: Vec<u32>,
        scores: &[Vec<f64>],
    ) -> Result<Self> {
        let n = lists.len();
        let mut orders = Vec::with_capacity(scores.len());
        for (j, row) in scores.iter().enumerate() {
            if row.len() != n {
                return Err(invalid(format!(
                    "school {} has {} scores, expected {n}",
                    j + 1,
                    row.len()
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            if let Some(w) = order.windows(2).find(|w| row[w[0]] == row[w[1]]) {
                return Err(Error::TiedScores {
                    school: j + 1,
                    first: w[0].min(w[1]),
                    second: w[0].max(w[1]),
                });
            }
            orders.push(order);
        }
        Self::from_rankings(lists, capacities, orders)
    }

    fn validate(&self) -> Result<()> {
        let m = self.capacities.len();
        if let Some(j) = self.capacities.iter().position(|&c| c < 1) {
            return Err(invalid(format!("school {} has capacity 0", j + 1)));
        }
        for (i, list) in self.lists.iter().enumerate() {
            list.validate(m, m)
                .map_err(|e| invalid(format!("student {i}: {e}")))?;
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.lists.len()
    }

    pub fn m(&self) -> usize {
        self.capacities.len()
    }

    pub fn lists(&self) -> &[Action] {
        &self.lists
    }

    pub fn capacities(&self) -> &[u32] {
        &self.capacities
    }

    /// Position of `student` in school `school`'s ranking (0 is best).
    pub fn rank(&self, school: usize, student: usize) -> u32 {
        self.rank[school - 1][student]
    }

    /// True when school `j` ranks student `a` above student `b`.
    pub fn prefers(&self, school: usize, a: usize, b: usize) -> bool {
        self.rank(school, a) < self.rank(school, b)
    }

    /// Same market with every list replaced.
    pub fn with_lists(&self, lists: Vec<Action>) -> Result<Self> {
        let inst = MarketInstance {
            lists,
            capacities: self.capacities.clone(),
            rank: self.rank.clone(),
        };
        if inst.lists.len() != self.n() {
            return Err(invalid("list count changed"));
        }
        inst.validate()?;
        Ok(inst)
    }

    /// Pairs `(student, school)` that block `matching` with respect to the
    /// reported lists.
    pub fn blocking_pairs(&self, matching: &Matching) -> Vec<(usize, usize)> {
        let m = self.m();
        let mut held: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (i, a) in matching.as_slice().iter().enumerate() {
            if let Some(j) = a {
                held[j - 1].push(i);
            }
        }
        let mut out = Vec::new();
        for (i, list) in self.lists.iter().enumerate() {
            for &j in list.schools() {
                if matching.get(i) == Some(j) {
                    break;
                }
                let seats = &held[j - 1];
                let open = seats.len() < self.capacities[j - 1] as usize;
                if open || seats.iter().any(|&h| self.prefers(j, i, h)) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// Capacity respected and every match appears in the student's list.
    pub fn is_feasible(&self, matching: &Matching) -> bool {
        let mut load = vec![0u32; self.m()];
        for (i, a) in matching.as_slice().iter().enumerate() {
            if let Some(j) = *a {
                if j == 0 || j > self.m() || !self.lists[i].schools().contains(&j) {
                    return false;
                }
                load[j - 1] += 1;
            }
        }
        load.iter().zip(&self.capacities).all(|(l, c)| l <= c)
    }

    pub fn is_stable(&self, matching: &Matching) -> bool {
        self.is_feasible(matching) && self.blocking_pairs(matching).is_empty()
    }
}

/// Reusable buffers for student-proposing deferred acceptance.
#[derive(Default)]
pub(crate) struct DaScratch {
    next: Vec<usize>,
    held: Vec<Vec<usize>>,
    free: Vec<usize>,
    pub(crate) assignment: Vec<Option<usize>>,
}

impl DaScratch {
    /// Runs student-proposing DA. `prefers(j, a, b)` is true when school `j`
    /// ranks student `a` above student `b`.
    pub(crate) fn run<F>(&mut self, lists: &[&[usize]], capacities: &[u32], prefers: F)
    where
        F: Fn(usize, usize, usize) -> bool,
    {
        let n = lists.len();
        let m = capacities.len();
        self.next.clear();
        self.next.resize(n, 0);
        self.assignment.clear();
        self.assignment.resize(n, None);
        if self.held.len() < m {
            self.held.resize_with(m, Vec::new);
        }
        for h in &mut self.held[..m] {
            h.clear();
        }
        self.free.clear();
        self.free.extend((0..n).rev());

        while let Some(i) = self.free.pop() {
            let list = lists[i];
            let Some(&j) = list.get(self.next[i]) else {
                continue;
            };
            self.next[i] += 1;
            let seats = &mut self.held[j - 1];
            if seats.len() < capacities[j - 1] as usize {
                seats.push(i);
                continue;
            }
            let mut worst = 0;
            for p in 1..seats.len() {
                if prefers(j, seats[worst], seats[p]) {
                    worst = p;
                }
            }
            if prefers(j, i, seats[worst]) {
                let bumped = std::mem::replace(&mut seats[worst], i);
                self.free.push(bumped);
            } else {
                self.free.push(i);
            }
        }
        for (j, seats) in self.held[..m].iter().enumerate() {
            for &i in seats {
                self.assignment[i] = Some(j + 1);
            }
        }
    }
}

/// Student-optimal stable matching for the reported lists.
pub fn deferred_acceptance(instance: &MarketInstance) -> Matching {
    let lists: Vec<&[usize]> = instance.lists.iter().map(|a| a.schools()).collect();
    let mut scratch = DaScratch::default();
    scratch.run(&lists, &instance.capacities, |j, a, b| {
        instance.prefers(j, a, b)
    });
    Matching::new(scratch.assignment)
}

/// Fixed-pair elimination with a sentinel school.
///
/// Repeatedly sweeps the schools; a school's top unassigned applicant is
/// admitted when that school is her first listed school with a free seat.
/// Returns [`Error::Stalled`] when a whole sweep admits nobody.
pub fn alpha_reduce_match(instance: &MarketInstance) -> Result<Matching> {
    let n = instance.n();
    let m = instance.m();
    let mut remaining: Vec<u32> = std::iter::once(n as u32)
        .chain(instance.capacities.iter().copied())
        .collect();
    // Applicants per school sorted best first; the sentinel takes everyone.
    let mut applicants: Vec<Vec<usize>> = vec![(0..n).collect()];
    for j in 1..=m {
        let mut a: Vec<usize> = (0..n)
            .filter(|&i| instance.lists[i].schools().contains(&j))
            .collect();
        a.sort_by_key(|&i| instance.rank(j, i));
        applicants.push(a);
    }
    let mut cursor = vec![0usize; m + 1];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut unassigned = n;
    let mut sweeps = 0;

    while unassigned > 0 {
        sweeps += 1;
        let mut progress = false;
        for j in 0..=m {
            if remaining[j] == 0 {
                continue;
            }
            while cursor[j] < applicants[j].len() && assigned[applicants[j][cursor[j]]].is_some() {
                cursor[j] += 1;
            }
            let Some(&i) = applicants[j].get(cursor[j]) else {
                continue;
            };
            let first_open = instance.lists[i]
                .schools()
                .iter()
                .copied()
                .find(|&s| remaining[s] > 0)
                .unwrap_or(SENTINEL);
            if first_open == j {
                assigned[i] = Some(j);
                remaining[j] -= 1;
                unassigned -= 1;
                progress = true;
            }
        }
        if !progress {
            return Err(Error::Stalled {
                sweeps,
                unassigned,
                condition: "alpha-reducibility",
            });
        }
    }
    Ok(Matching::new(
        assigned
            .into_iter()
            .map(|a| a.filter(|&j| j != SENTINEL))
            .collect(),
    ))
}

/// Serial dictatorship over students given in decreasing order of a common
/// score: each takes her first listed school with a free seat.
pub fn serial_dictatorship(
    scores: &[f64],
    lists: &[Action],
    capacities: &[u32],
) -> Result<Matching> {
    if scores.len() != lists.len() {
        return Err(invalid("one score per student required"));
    }
    if let Some(p) = scores.windows(2).position(|w| w[0] <= w[1]) {
        return Err(invalid(format!(
            "students must be sorted by strictly decreasing score (positions {p} and {})",
            p + 1
        )));
    }
    let m = capacities.len();
    for list in lists {
        list.validate(m, m)?;
    }
    let mut remaining = capacities.to_vec();
    let assignment = lists
        .iter()
        .map(|list| {
            let pick = list
                .schools()
                .iter()
                .copied()
                .find(|&j| remaining[j - 1] > 0);
            if let Some(j) = pick {
                remaining[j - 1] -= 1;
            }
            pick
        })
        .collect();
    Ok(Matching::new(assignment))
}

/// Largest `n + m` accepted by [`is_alpha_reducible_bruteforce`].
pub const BRUTEFORCE_SIZE_CAP: usize = 16;

/// Enumerates every pair of nonempty student and school subsets and checks
/// that each one holding a mutually acceptable pair also holds a fixed pair:
/// a student and a school ranking each other first within the subsets.
pub fn is_alpha_reducible_bruteforce(instance: &MarketInstance) -> Result<bool> {
    let n = instance.n();
    let m = instance.m();
    if n + m > BRUTEFORCE_SIZE_CAP {
        return Err(Error::SizeCap {
            size: n + m,
            cap: BRUTEFORCE_SIZE_CAP,
        });
    }
    for students in 1u32..(1 << n) {
        for schools in 1u32..(1 << m) {
            let in_b = |j: usize| schools & (1 << (j - 1)) != 0;
            let in_a = |i: usize| students & (1 << i) != 0;
            let mut acceptable = false;
            let mut fixed = false;
            for i in (0..n).filter(|&i| in_a(i)) {
                let Some(j) = instance.lists[i]
                    .schools()
                    .iter()
                    .copied()
                    .find(|&j| in_b(j))
                else {
                    continue;
                };
                acceptable = true;
                let top = (0..n)
                    .filter(|&s| in_a(s) && instance.lists[s].schools().contains(&j))
                    .min_by_key(|&s| instance.rank(j, s));
                if top == Some(i) {
                    fixed = true;
                    break;
                }
            }
            if acceptable && !fixed {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// How [`utility_vector`] resolves equal scores.
#[derive(Clone, Debug)]
pub struct TiePolicy {
    /// Enumerate every tie-break order when their count is at most this.
    pub max_exact_orders: u64,
    /// Random tie-break orders drawn otherwise.
    pub samples: usize,
    pub seed: u64,
}

impl Default for TiePolicy {
    fn default() -> Self {
        TiePolicy {
            max_exact_orders: 10_000,
            samples: 10_000,
            seed: 0,
        }
    }
}

/// Per-student utilities averaged over tie-break orders.
#[derive(Clone, Debug, PartialEq)]
pub struct Utilities {
    pub values: Vec<f64>,
    /// Zero when `exact`.
    pub stderr: Vec<f64>,
    pub exact: bool,
    /// Tie-break orders enumerated or sampled.
    pub orders: u64,
}

struct TieGroup {
    school: usize,
    start: usize,
    perm: Vec<usize>,
}

fn next_permutation(v: &mut [usize]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        v.reverse();
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Utilities of a realized profile: `types[i]` reports `actions[i]`; a
/// student matched to `j` earns `v_j(t_i)`, unmatched earns 0. Equal scores
/// among applicants are averaged over tie-break orders (exactly when few,
/// otherwise by seeded sampling). Table-backed specs are indexed by student.
pub fn utility_vector(
    types: &[TypePoint],
    actions: &[Action],
    game: &GameSpec,
    policy: &TiePolicy,
) -> Result<Utilities> {
    let n = types.len();
    if actions.len() != n {
        return Err(invalid(format!("{n} types but {} actions", actions.len())));
    }
    let m = game.m();
    for a in actions {
        a.validate(m, game.l)?;
    }
    let values: Vec<Vec<f64>> = (0..n).map(|i| game.values_at(&types[i], i)).collect();
    // Base order per school: applicants by score, best first, then the rest.
    let mut orders: Vec<Vec<usize>> = Vec::with_capacity(m);
    let mut groups: Vec<TieGroup> = Vec::new();
    for j in 1..=m {
        let spec = &game.schools[j - 1].score;
        let score: Vec<f64> = (0..n).map(|i| spec.eval(&types[i], i)).collect();
        let (mut apps, rest): (Vec<usize>, Vec<usize>) =
            (0..n).partition(|&i| actions[i].schools().contains(&j));
        apps.sort_by(|&a, &b| score[b].total_cmp(&score[a]).then(a.cmp(&b)));
        let mut start = 0;
        while start < apps.len() {
            let mut end = start + 1;
            while end < apps.len() && score[apps[end]] == score[apps[start]] {
                end += 1;
            }
            if end - start > 1 {
                groups.push(TieGroup {
                    school: j,
                    start,
                    perm: (0..end - start).collect(),
                });
            }
            start = end;
        }
        apps.extend(rest);
        orders.push(apps);
    }

    let mut total: u64 = 1;
    for g in &groups {
        for f in 2..=g.perm.len() as u64 {
            total = total.saturating_mul(f);
        }
    }

    let lists: Vec<&[usize]> = actions.iter().map(|a| a.schools()).collect();
    let capacities = game.capacities();
    let mut scratch = DaScratch::default();
    let mut rank = vec![vec![0u32; n]; m];
    let mut sum = vec![0.0; n];
    let mut sum_sq = vec![0.0; n];

    let mut evaluate = |orders: &[Vec<usize>], sum: &mut [f64], sum_sq: &mut [f64]| {
        for (j, order) in orders.iter().enumerate() {
            for (p, &i) in order.iter().enumerate() {
                rank[j][i] = p as u32;
            }
        }
        scratch.run(&lists, &capacities, |j, a, b| {
            rank[j - 1][a] < rank[j - 1][b]
        });
        for i in 0..n {
            let u = scratch.assignment[i].map_or(0.0, |j| values[i][j - 1]);
            sum[i] += u;
            sum_sq[i] += u * u;
        }
    };

    let permuted = |orders: &[Vec<usize>], groups: &[TieGroup]| {
        let mut out = orders.to_vec();
        for g in groups {
            let base = &orders[g.school - 1][g.start..g.start + g.perm.len()];
            for (slot, &p) in g.perm.iter().enumerate() {
                out[g.school - 1][g.start + slot] = base[p];
            }
        }
        out
    };

    if total <= policy.max_exact_orders {
        let mut count = 0u64;
        loop {
            evaluate(&permuted(&orders, &groups), &mut sum, &mut sum_sq);
            count += 1;
            let mut advanced = false;
            for g in groups.iter_mut() {
                if next_permutation(&mut g.perm) {
                    advanced = true;
                    break;
                }
            }
            if !advanced {
                break;
            }
        }
        let values = sum.iter().map(|s| s / count as f64).collect();
        return Ok(Utilities {
            values,
            stderr: vec![0.0; n],
            exact: true,
            orders: count,
        });
    }

    if policy.samples < 2 {
        return Err(invalid("tie sampling needs at least 2 samples"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(policy.seed);
    for _ in 0..policy.samples {
        for g in groups.iter_mut() {
            g.perm.shuffle(&mut rng);
        }
        evaluate(&permuted(&orders, &groups), &mut sum, &mut sum_sq);
    }
    let s = policy.samples as f64;
    let values: Vec<f64> = sum.iter().map(|x| x / s).collect();
    let stderr = values
        .iter()
        .zip(&sum_sq)
        .map(|(mean, sq)| ((sq / s - mean * mean).max(0.0) * s / (s - 1.0) / s).sqrt())
        .collect();
    Ok(Utilities {
        values,
        stderr,
        exact: false,
        orders: policy.samples as u64,
    })
}
