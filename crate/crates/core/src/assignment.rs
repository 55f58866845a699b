//! Pilot assignment schemes.
//!
//! [`assign_location_aware`] sorts users by distance, cuts them into tiers of
//! `tau`, gives the nearest tier one pilot each and then, tier by tier, hands
//! every remaining user the pilot of the tier-one user it interferes with
//! least (LOS measure from [`crate::interference`]). [`assign_random`] is the
//! usual baseline and [`assign_exhaustive`] the brute-force optimum for
//! small instances.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CellConfig, UserDrop};
use crate::interference::{LosGeometry, PairCounting};
use crate::pilots::PilotAssignment;
use crate::training::TrainingConfig;

/// Users grouped by ascending distance, `tau` per tier; the last tier may be short.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TierPartition {
    pub tiers: Vec<Vec<usize>>,
}

impl TierPartition {
    pub fn len(&self) -> usize {
        self.tiers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tiers.is_empty()
    }
}

pub fn partition_tiers(drop: &UserDrop, tau: usize) -> Result<TierPartition> {
    if tau == 0 {
        return Err(Error::invalid("tau", "need at least one pilot"));
    }
    let users = drop.users();
    let mut order: Vec<usize> = (0..users.len()).collect();
    // stable sort: equal distances keep index order
    order.sort_by(|&a, &b| users[a].r.total_cmp(&users[b].r));
    Ok(TierPartition {
        tiers: order.chunks(tau).map(<[usize]>::to_vec).collect(),
    })
}

/// How each tier's users are matched to the tier-one reference pilots.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchingRule {
    /// Reference rows in order, each taking its cheapest free column.
    #[default]
    Greedy,
    /// Minimum-total-cost matching (Hungarian method).
    Optimal,
}

/// Greedy row-order matching. `cost[m][c]` is the cost of giving column `c`
/// the pilot of row `m`. Returns the row chosen for each column.
///
/// Rows are visited in order; each takes the cheapest column still free
/// (lowest index on ties). Needs at least as many rows as columns.
pub fn unique_min_matching(cost: &[Vec<f64>]) -> Vec<usize> {
    let cols = cost.first().map_or(0, Vec::len);
    assert!(
        cost.len() >= cols,
        "fewer reference pilots than users in the tier"
    );
    let mut row_of = vec![usize::MAX; cols];
    let mut remaining = cols;
    for (m, row) in cost.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let mut best: Option<usize> = None;
        for (c, &v) in row.iter().enumerate() {
            if row_of[c] != usize::MAX {
                continue;
            }
            if best.is_none_or(|b| v < row[b]) {
                best = Some(c);
            }
        }
        let c = best.expect("a free column exists while remaining > 0");
        row_of[c] = m;
        remaining -= 1;
    }
    row_of
}

/// Minimum-cost matching of every column to a distinct row.
pub fn optimal_matching(cost: &[Vec<f64>]) -> Vec<usize> {
    let rows = cost.len();
    let cols = cost.first().map_or(0, Vec::len);
    assert!(
        rows >= cols,
        "fewer reference pilots than users in the tier"
    );
    if cols == 0 {
        return Vec::new();
    }
    // Hungarian method with potentials; "workers" are columns, "jobs" are rows.
    let n = cols;
    let m = rows;
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut p = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![inf; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0;
            for j in 1..=m {
                if !used[j] {
                    let cur = cost[j - 1][i0 - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_of = vec![0; cols];
    for j in 1..=m {
        if p[j] != 0 {
            row_of[p[j] - 1] = j - 1;
        }
    }
    row_of
}

/// Assignment plus how many pairwise measures were evaluated to get it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssignmentOutcome {
    pub assignment: PilotAssignment,
    pub evaluations: usize,
}

/// Location-aware assignment with the default greedy matching.
pub fn assign_location_aware(
    drop: &UserDrop,
    tau: usize,
    cell: &CellConfig,
    cfg: &TrainingConfig,
) -> Result<PilotAssignment> {
    Ok(assign_location_aware_with(drop, tau, cell, cfg, MatchingRule::Greedy)?.assignment)
}

pub fn assign_location_aware_with(
    drop: &UserDrop,
    tau: usize,
    cell: &CellConfig,
    cfg: &TrainingConfig,
    rule: MatchingRule,
) -> Result<AssignmentOutcome> {
    let n = drop.len();
    if tau == 0 || tau > n {
        return Err(Error::TauExceedsUsers { tau, n_users: n });
    }
    let geo = LosGeometry::new(drop, cell, cfg);
    let tiers = partition_tiers(drop, tau)?.tiers;
    let references = &tiers[0];
    let mut groups: Vec<Vec<usize>> = references.iter().map(|&u| vec![u]).collect();
    let mut evaluations = 0;
    let mut hypothesis = Vec::with_capacity(n);

    for tier in &tiers[1..] {
        let cost: Vec<Vec<f64>> = references
            .iter()
            .zip(&groups)
            .map(|(&reference, group)| {
                tier.iter()
                    .map(|&candidate| {
                        // the group as built so far, plus the candidate
                        hypothesis.clear();
                        hypothesis.extend_from_slice(group);
                        hypothesis.push(candidate);
                        geo.pair_value(reference, candidate, &hypothesis)
                    })
                    .collect()
            })
            .collect();
        evaluations += references.len() * tier.len();
        let row_of = match rule {
            MatchingRule::Greedy => unique_min_matching(&cost),
            MatchingRule::Optimal => optimal_matching(&cost),
        };
        for (c, &m) in row_of.iter().enumerate() {
            groups[m].push(tier[c]);
        }
    }

    Ok(AssignmentOutcome {
        assignment: PilotAssignment::from_groups(tau, groups, n)?,
        evaluations,
    })
}

/// Uniformly random balanced assignment: a random permutation dealt
/// round-robin, so the first `N mod tau` pilots get one extra user.
pub fn assign_random<R: Rng + ?Sized>(
    n_users: usize,
    tau: usize,
    rng: &mut R,
) -> Result<PilotAssignment> {
    if tau == 0 || tau > n_users {
        return Err(Error::TauExceedsUsers { tau, n_users });
    }
    let mut perm: Vec<usize> = (0..n_users).collect();
    perm.shuffle(rng);
    let mut groups = vec![Vec::with_capacity(n_users.div_ceil(tau)); tau];
    for (k, u) in perm.into_iter().enumerate() {
        groups[k % tau].push(u);
    }
    PilotAssignment::from_groups(tau, groups, n_users)
}

/// Largest number of balanced partitions [`assign_exhaustive`] will enumerate.
pub const EXHAUSTIVE_LIMIT: u128 = 1_000_000;

/// Number of distinct balanced partitions of `n` users into `tau` pilot
/// groups (pilot labels do not matter).
pub fn balanced_partition_count(n: usize, tau: usize) -> u128 {
    if tau == 0 || tau > n {
        return 0;
    }
    let small = n / tau;
    let big_groups = n % tau;
    let small_groups = tau - big_groups;
    let fact = |k: usize| (1..=k as u128).product::<u128>();
    // n! / (prod size! * (#groups of each size)!), in a form that stays in u128 for small n
    let mut count: u128 = 1;
    let mut left = n;
    let mut choose = |k: usize| {
        let c = binomial(left, k);
        left -= k;
        c
    };
    for _ in 0..big_groups {
        count = count.saturating_mul(choose(small + 1));
    }
    for _ in 0..small_groups {
        count = count.saturating_mul(choose(small));
    }
    count / fact(big_groups) / fact(small_groups)
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Balanced partition minimizing `I_tot`; ties keep the first one enumerated.
pub fn assign_exhaustive(
    drop: &UserDrop,
    tau: usize,
    cell: &CellConfig,
    cfg: &TrainingConfig,
    counting: PairCounting,
) -> Result<PilotAssignment> {
    let n = drop.len();
    if tau == 0 || tau > n {
        return Err(Error::TauExceedsUsers { tau, n_users: n });
    }
    let count = balanced_partition_count(n, tau);
    if count > EXHAUSTIVE_LIMIT {
        return Err(Error::InstanceTooLarge {
            count,
            limit: EXHAUSTIVE_LIMIT,
        });
    }
    let geo = LosGeometry::new(drop, cell, cfg);
    let capacity: Vec<usize> = (0..tau)
        .map(|g| n / tau + usize::from(g < n % tau))
        .collect();
    let mut search = Exhaustive {
        geo: &geo,
        counting,
        tau,
        capacity,
        groups: vec![Vec::new(); tau],
        best: None,
        visited: 0,
    };
    search.place(0);
    debug_assert_eq!(search.visited, count);
    let (_, groups) = search.best.expect("at least one partition exists");
    PilotAssignment::from_groups(tau, groups, n)
}

struct Exhaustive<'a> {
    geo: &'a LosGeometry,
    counting: PairCounting,
    tau: usize,
    capacity: Vec<usize>,
    groups: Vec<Vec<usize>>,
    best: Option<(f64, Vec<Vec<usize>>)>,
    visited: u128,
}

impl Exhaustive<'_> {
    fn place(&mut self, user: usize) {
        if user == self.geo.n_users() {
            self.visited += 1;
            let assignment = PilotAssignment::from_groups(self.tau, self.groups.clone(), user)
                .expect("enumeration yields partitions");
            let total = self.geo.total(&assignment, self.counting);
            if self.best.as_ref().is_none_or(|(b, _)| total < *b) {
                self.best = Some((total, self.groups.clone()));
            }
            return;
        }
        for g in 0..self.tau {
            if self.groups[g].len() == self.capacity[g] {
                continue;
            }
            // open an empty group only if no earlier group of the same
            // capacity is still empty, so each partition is visited once
            if self.groups[g].is_empty()
                && (0..g).any(|h| self.groups[h].is_empty() && self.capacity[h] == self.capacity[g])
            {
                continue;
            }
            self.groups[g].push(user);
            self.place(user + 1);
            self.groups[g].pop();
        }
    }
}
