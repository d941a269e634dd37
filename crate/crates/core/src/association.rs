//! Greedy association of failed users to clusters of compensating cells.
//!
//! Each cluster estimates how much power it can release once its connected
//! users are scaled down to their minimum requirement; the failed user that
//! would gain the most SE from any released budget is assigned first.

use serde::{Deserialize, Serialize};

use crate::domain::{failed_se, AssociationMap, Mode, Scenario, Slot};
use crate::{Error, Result};

/// Minimum power of the strongest member meeting `s_min` with no
/// intra-cluster interference.
pub fn min_power_top_user(h_top: f64, sigma2: f64, s_min: f64, extra_floor: f64) -> f64 {
    (sigma2 + extra_floor) / h_top * (s_min.exp2() - 1.0)
}

/// Uniform down-scaling of a cluster: returns the factor and scaled powers.
///
/// The factor is the ratio of the top user's minimum power to its
/// pre-outage power, clamped to `[0, 1]`.
pub fn prop1_powers(gains: &[f64], pre: &[f64], sigma2: f64, s_min: f64, extra_floor: f64) -> Result<(f64, Vec<f64>)> {
    let (&h_top, &p_top) = gains
        .first()
        .zip(pre.first())
        .ok_or_else(|| Error::Domain("empty cluster".into()))?;
    if !(p_top > 0.0) {
        return Err(Error::Domain("top user has zero pre-outage power".into()));
    }
    let delta = (min_power_top_user(h_top, sigma2, s_min, extra_floor) / p_top).clamp(0.0, 1.0);
    Ok((delta, pre.iter().map(|p| p * delta).collect()))
}

/// Rank-by-rank rescaling that keeps every connected SE at its pre-outage
/// value: the top user drops to its minimum power and each following user
/// is scaled by the ratio of its new to old interference-plus-noise.
pub fn prop2_powers(gains: &[f64], pre: &[f64], sigma2: f64, s_min: f64, extra_floor: f64) -> Result<Vec<f64>> {
    let (&h_top, &p_top) = gains
        .first()
        .zip(pre.first())
        .ok_or_else(|| Error::Domain("empty cluster".into()))?;
    if !(p_top > 0.0) {
        return Err(Error::Domain("top user has zero pre-outage power".into()));
    }
    let noise = sigma2 + extra_floor;
    let mut post = Vec::with_capacity(pre.len());
    post.push(min_power_top_user(h_top, sigma2, s_min, extra_floor).min(p_top));
    let (mut new_sum, mut old_sum) = (post[0], p_top);
    for k in 1..pre.len() {
        let h = gains[k];
        let p = pre[k] * (h * new_sum + noise) / (h * old_sum + noise);
        post.push(p);
        new_sum += p;
        old_sum += pre[k];
    }
    Ok(post)
}

/// Power a cluster can release: pre-outage total minus post-outage total.
pub fn cluster_budget(pre: &[f64], post: &[f64]) -> Result<f64> {
    let before: f64 = pre.iter().sum();
    let after: f64 = post.iter().sum();
    let delta = before - after;
    if delta < -1e-12 * before.max(1.0) {
        return Err(Error::Internal(format!(
            "post-outage cluster power {after} exceeds pre-outage {before}"
        )));
    }
    Ok(delta.max(0.0))
}

/// SE a failed user would get from a cluster's released budget.
pub fn candidate_se(budget: f64, h_failed: f64, post: &[f64], extra_floor: f64, sigma2: f64) -> f64 {
    failed_se(budget, h_failed, post, extra_floor, sigma2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterBudget {
    pub bs_id: usize,
    pub cluster: usize,
    /// Uniform scaling factor; absent on the rank-by-rank path.
    pub delta: Option<f64>,
    pub post_powers: Vec<f64>,
    pub budget: f64,
    pub extra_floor: f64,
}

/// Budgets of every cluster. Clusters with co-channel neighbors in the
/// interference model use the rank-by-rank rescaling; all others use
/// uniform scaling.
pub fn cluster_budgets(scenario: &Scenario, pre: &[Vec<Vec<f64>>], mode: Mode) -> Result<Vec<ClusterBudget>> {
    let p = &scenario.params;
    let mut out = Vec::with_capacity(scenario.total_clusters());
    for (ci, cell) in scenario.cells.iter().enumerate() {
        for l in 0..cell.clusters.len() {
            let gains = scenario.member_gains(ci, l);
            let floor = scenario.extra_floor(ci, l, mode);
            let pre_l = &pre[ci][l];
            let rescale = mode == Mode::Interference && scenario.co_channel_neighbors(ci, l) > 0;
            let (delta, post) = if rescale {
                (None, prop2_powers(&gains, pre_l, p.sigma2, p.s_min, floor)?)
            } else {
                let (d, post) = prop1_powers(&gains, pre_l, p.sigma2, p.s_min, floor)?;
                (Some(d), post)
            };
            out.push(ClusterBudget {
                bs_id: cell.bs_id,
                cluster: l,
                delta,
                budget: cluster_budget(pre_l, &post)?,
                post_powers: post,
                extra_floor: floor,
            });
        }
    }
    Ok(out)
}

/// Candidate SE of every failed user in every cluster, `values[user][slot]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateTable {
    pub users: Vec<usize>,
    /// `(bs_id, cluster)` per column.
    pub slots: Vec<(usize, usize)>,
    pub values: Vec<Vec<f64>>,
    /// Channel gain of each user to each slot's BS, used by the fallback.
    pub gains: Vec<Vec<f64>>,
}

pub fn candidate_table(scenario: &Scenario, budgets: &[ClusterBudget]) -> CandidateTable {
    let users = scenario.failed_users();
    let slots: Vec<(usize, usize)> = budgets.iter().map(|b| (b.bs_id, b.cluster)).collect();
    let sigma2 = scenario.params.sigma2;
    let gains: Vec<Vec<f64>> = users
        .iter()
        .map(|&u| budgets.iter().map(|b| scenario.gain(b.bs_id, u)).collect())
        .collect();
    let values = gains
        .iter()
        .map(|row| {
            budgets
                .iter()
                .zip(row)
                .map(|(b, &h)| candidate_se(b.budget, h, &b.post_powers, b.extra_floor, sigma2))
                .collect()
        })
        .collect();
    CandidateTable {
        users,
        slots,
        values,
        gains,
    }
}

/// Repeatedly takes the largest remaining candidate and retires its user and
/// cluster. Ties go to the lowest `(bs, cluster, user)`. Users left when only
/// zero candidates remain are placed by the fallback and flagged.
pub fn greedy_associate(table: &CandidateTable) -> Result<AssociationMap> {
    let (nu, ns) = (table.users.len(), table.slots.len());
    if nu > ns {
        return Err(Error::Config(format!("{nu} failed users exceed {ns} clusters")));
    }
    let mut triples: Vec<(f64, usize, usize)> = Vec::with_capacity(nu * ns);
    for (i, row) in table.values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v > 0.0 {
                triples.push((v, j, i));
            }
        }
    }
    let key = |&(_, j, i): &(f64, usize, usize)| (table.slots[j].0, table.slots[j].1, table.users[i]);
    triples.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then_with(|| key(a).cmp(&key(b))));

    let mut user_taken = vec![false; nu];
    let mut slot_taken = vec![false; ns];
    let mut map = AssociationMap::default();
    for (_, j, i) in triples {
        if user_taken[i] || slot_taken[j] {
            continue;
        }
        user_taken[i] = true;
        slot_taken[j] = true;
        let (bs, cluster) = table.slots[j];
        map.insert(table.users[i], bs, cluster);
        if map.len() == nu {
            break;
        }
    }

    let mut left: Vec<usize> = (0..nu).filter(|&i| !user_taken[i]).collect();
    let best_gain = |i: usize| table.gains[i].iter().copied().fold(0.0, f64::max);
    left.sort_by(|&a, &b| best_gain(b).total_cmp(&best_gain(a)).then(table.users[a].cmp(&table.users[b])));
    for i in left {
        let j = (0..ns)
            .filter(|&j| !slot_taken[j])
            .max_by(|&a, &b| {
                table.gains[i][a]
                    .total_cmp(&table.gains[i][b])
                    .then_with(|| table.slots[b].cmp(&table.slots[a]))
            })
            .ok_or_else(|| Error::Internal("no cluster left for fallback".into()))?;
        slot_taken[j] = true;
        let (bs, cluster) = table.slots[j];
        map.entries.insert(
            table.users[i],
            Slot {
                bs,
                cluster,
                fallback: true,
            },
        );
    }
    Ok(map)
}

/// Budgets, candidate table and greedy assignment in one call.
pub fn associate(scenario: &Scenario, pre: &[Vec<Vec<f64>>], mode: Mode) -> Result<AssociationMap> {
    let budgets = cluster_budgets(scenario, pre, mode)?;
    greedy_associate(&candidate_table(scenario, &budgets))
}
