//! Exhaustive joint optimum: every injective association of failed users to
//! clusters, each followed by the exact per-BS power allocation.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::association::CandidateTable;
use crate::domain::{AssociationMap, CellInstance, Mode, Scenario};
use crate::solver::{no_compensation, solve_compensation, CellSolution, NetworkSolution, SolveStats, SolverConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnumerationBudget {
    pub max_associations: u64,
    /// Seconds.
    pub max_wall_time: f64,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            max_associations: 1_000_000,
            max_wall_time: 3600.0,
        }
    }
}

/// Number of ordered selections of `k` items out of `n`, saturating.
pub fn permutation_count(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (n - k + 1..=n).fold(1u64, |acc, v| acc.saturating_mul(v as u64))
}

/// Lexicographic `k`-permutations of `0..n`.
#[derive(Debug, Clone)]
pub struct KPermutations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl KPermutations {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            current: (k <= n).then(|| (0..k).collect()),
        }
    }

    fn advance(n: usize, a: &mut [usize]) -> bool {
        let k = a.len();
        for i in (0..k).rev() {
            let used = |v: usize, a: &[usize]| a[..i].contains(&v);
            if let Some(v) = (a[i] + 1..n).find(|&v| !used(v, a)) {
                a[i] = v;
                let mut next = 0;
                for j in i + 1..k {
                    while a[..j].contains(&next) {
                        next += 1;
                    }
                    a[j] = next;
                    next += 1;
                }
                return true;
            }
        }
        false
    }
}

impl Iterator for KPermutations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let cur = self.current.take()?;
        let mut nxt = cur.clone();
        if Self::advance(self.n, &mut nxt) {
            self.current = Some(nxt);
        }
        Some(cur)
    }
}

/// `(bs_id, cluster)` of every cluster in scenario order.
pub fn cluster_slots(scenario: &Scenario) -> Vec<(usize, usize)> {
    scenario
        .cells
        .iter()
        .flat_map(|c| (0..c.clusters.len()).map(move |l| (c.bs_id, l)))
        .collect()
}

/// Every injective association in a fixed lexicographic order: failed users
/// sorted by id, clusters in scenario order.
pub fn enumerate_associations(scenario: &Scenario) -> impl Iterator<Item = AssociationMap> {
    let users = scenario.failed_users();
    let slots = cluster_slots(scenario);
    KPermutations::new(slots.len(), users.len()).map(move |perm| {
        let mut m = AssociationMap::default();
        for (&u, &j) in users.iter().zip(&perm) {
            m.insert(u, slots[j].0, slots[j].1);
        }
        m
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptResult {
    pub assoc: AssociationMap,
    pub network: NetworkSolution,
    pub objective: f64,
    /// Associations whose power allocation was evaluated.
    pub evaluated: u64,
    pub infeasible: u64,
    /// Distinct per-BS solves after memoization.
    pub distinct_solves: u64,
}

type MemoKey = (usize, Vec<(Option<u64>, Option<u64>, bool)>);

fn memo_key(cell: usize, inst: &CellInstance) -> MemoKey {
    (
        cell,
        inst.clusters
            .iter()
            .map(|c| (c.failed_gain.map(f64::to_bits), c.power_cap.map(f64::to_bits), c.retained.is_some()))
            .collect(),
    )
}

/// Best association and allocation by total failed-user SE. Associations
/// with an infeasible host BS are skipped and counted; ties keep the
/// earliest association in enumeration order.
pub fn opt_noc(
    scenario: &Scenario,
    pre: &[Vec<Vec<f64>>],
    mode: Mode,
    cfg: &SolverConfig,
    budget: &EnumerationBudget,
) -> Result<OptResult> {
    let slots = cluster_slots(scenario);
    let total = permutation_count(slots.len(), scenario.failed_users().len());
    let start = Instant::now();
    let deadline = Duration::from_secs_f64(budget.max_wall_time.max(0.0));
    let mut memo: HashMap<MemoKey, Option<CellSolution>> = HashMap::new();
    let mut best: Option<(f64, AssociationMap, Vec<Option<CellSolution>>)> = None;
    let (mut evaluated, mut infeasible) = (0u64, 0u64);

    for assoc in enumerate_associations(scenario) {
        if evaluated >= budget.max_associations || start.elapsed() > deadline {
            return Err(Error::BudgetExceeded {
                completed: evaluated,
                total,
            });
        }
        evaluated += 1;
        let mut objective = 0.0;
        let mut per_cell = Vec::with_capacity(scenario.cells.len());
        let mut feasible = true;
        for (ci, cell) in scenario.cells.iter().enumerate() {
            if !assoc.entries.values().any(|s| s.bs == cell.bs_id) {
                per_cell.push(None);
                continue;
            }
            let inst = scenario.compensation_instance(ci, &assoc, &pre[ci], mode)?;
            let key = memo_key(ci, &inst);
            let sol = match memo.get(&key) {
                Some(s) => s.clone(),
                None => {
                    let s = match solve_compensation(&inst, cfg) {
                        Ok(s) => Some(s),
                        Err(Error::Infeasible(_)) => None,
                        Err(e) => return Err(e),
                    };
                    memo.insert(key, s.clone());
                    s
                }
            };
            match sol {
                Some(s) => {
                    objective += s.objective;
                    per_cell.push(Some(s));
                }
                None => {
                    feasible = false;
                    break;
                }
            }
        }
        if !feasible {
            infeasible += 1;
            continue;
        }
        if best.as_ref().is_none_or(|(b, _, _)| objective > *b) {
            best = Some((objective, assoc, per_cell));
        }
    }

    let (objective, assoc, per_cell) = best.ok_or_else(|| {
        Error::Infeasible(Box::new(crate::solver::InfeasibilityCertificate {
            bs_id: 0,
            max_violation: f64::NAN,
            binding: vec![format!("all {evaluated} associations infeasible")],
        }))
    })?;
    let mut sol = no_compensation(scenario, pre);
    let mut stats: Vec<SolveStats> = Vec::new();
    for (ci, cs) in per_cell.into_iter().enumerate() {
        if let Some(cs) = cs {
            sol.p_connected[ci] = cs.alloc.connected;
            sol.p_failed[ci] = cs.alloc.failed;
            stats.push(cs.stats);
        }
    }
    sol.objective = objective;
    Ok(OptResult {
        network: NetworkSolution {
            solution: sol,
            served: assoc.clone(),
            unserved: Vec::new(),
            infeasible: Vec::new(),
            stats,
        },
        assoc,
        objective,
        evaluated,
        infeasible,
        distinct_solves: memo.len() as u64,
    })
}

/// Exhaustive maximum of a candidate table: best total over injective maps.
pub fn exhaustive_table(table: &CandidateTable) -> (AssociationMap, f64) {
    let mut best = (AssociationMap::default(), f64::NEG_INFINITY);
    for perm in KPermutations::new(table.slots.len(), table.users.len()) {
        let total: f64 = perm.iter().enumerate().map(|(i, &j)| table.values[i][j]).sum();
        if total > best.1 {
            let mut m = AssociationMap::default();
            for (i, &j) in perm.iter().enumerate() {
                m.insert(table.users[i], table.slots[j].0, table.slots[j].1);
            }
            best = (m, total);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::greedy_associate;

    #[test]
    fn counts() {
        assert_eq!(permutation_count(4, 2), 12);
        assert_eq!(permutation_count(6, 3), 120);
        assert_eq!(permutation_count(5, 0), 1);
        assert_eq!(permutation_count(2, 3), 0);
        assert_eq!(KPermutations::new(4, 2).count(), 12);
        assert_eq!(KPermutations::new(6, 3).count(), 120);
        assert_eq!(KPermutations::new(3, 0).collect::<Vec<_>>(), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn lexicographic_and_injective() {
        let all: Vec<_> = KPermutations::new(4, 3).collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        for p in &all {
            let mut s = p.clone();
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 3);
        }
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[1], vec![0, 1, 3]);
        assert_eq!(all.last().unwrap(), &vec![3, 2, 1]);
    }

    #[test]
    fn exhaustive_beats_greedy_counterexample() {
        let table = CandidateTable {
            users: vec![10, 11],
            slots: vec![(1, 0), (1, 1)],
            values: vec![vec![5.0, 4.0], vec![4.9, 1.0]],
            gains: vec![vec![1.0; 2]; 2],
        };
        let (m, total) = exhaustive_table(&table);
        assert!((total - 8.9).abs() < 1e-12);
        assert_eq!(m.get(10).unwrap().cluster, 1);
        assert_eq!(m.get(11).unwrap().cluster, 0);
        let g = greedy_associate(&table).unwrap();
        let greedy_total: f64 = g
            .entries
            .iter()
            .map(|(u, s)| table.values[u - 10][s.cluster])
            .sum();
        assert!((greedy_total - 6.0).abs() < 1e-12);
    }
}
