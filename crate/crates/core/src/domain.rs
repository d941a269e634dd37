//! NOMA data model: clusters, SIC ordering, spectral efficiency and the
//! constraint checker shared by every solver path.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::units::{dbm_to_linear, generate_topology, PowerDbm, Topology, TopologyConfig};
use crate::{Error, Result};

/// Which clusters of a compensating cell are re-optimized after the outage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompensationScope {
    /// Only clusters hosting a failed user are re-optimized; the others keep
    /// their pre-outage powers and the hosts share the remaining budget.
    #[default]
    HostClusters,
    /// Every cluster of the cell is a free variable of the compensation problem.
    AllClusters,
}

/// Interference model used when evaluating and solving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Cells use orthogonal resources; no inter-cell interference.
    #[default]
    Isolated,
    /// Co-channel clusters of neighboring cells add an interference floor and
    /// a per-cluster transmit cap.
    Interference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Per-BS transmit budget, mW.
    pub p_max: f64,
    /// Minimum received power gap for SIC, mW.
    pub p_tol: f64,
    /// Noise power, mW.
    pub sigma2: f64,
    /// Minimum SE of every connected user, bit/s/Hz.
    pub s_min: f64,
    /// Indicator relaxation constant; derived from the topology when absent.
    #[serde(default)]
    pub big_b: Option<f64>,
    /// Tolerated co-channel interference per victim, mW.
    pub i_max: f64,
    pub cluster_size: usize,
    #[serde(default)]
    pub scope: CompensationScope,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            p_max: dbm_to_linear(PowerDbm(46.02)).0,
            p_tol: dbm_to_linear(PowerDbm(-101.4)).0,
            sigma2: dbm_to_linear(PowerDbm(-150.0)).0,
            s_min: 4.0,
            big_b: None,
            i_max: 1e30,
            cluster_size: 2,
            scope: CompensationScope::HostClusters,
        }
    }
}

impl SystemParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("p_max", self.p_max),
            ("p_tol", self.p_tol),
            ("sigma2", self.sigma2),
            ("s_min", self.s_min),
            ("i_max", self.i_max),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.cluster_size == 0 {
            return Err(Error::Config("cluster size must be >= 1".into()));
        }
        if let Some(b) = self.big_b {
            if !(b > 0.0) {
                return Err(Error::Config(format!("big_b must be positive, got {b}")));
            }
        }
        Ok(())
    }

    /// `2^s_min - 1`, the SINR matching the SE target.
    pub fn sinr_target(&self) -> f64 {
        self.s_min.exp2() - 1.0
    }

    pub fn big_b_for(&self, topology: &Topology) -> f64 {
        self.big_b.unwrap_or_else(|| {
            let (lo, hi) = topology
                .gain
                .iter()
                .flatten()
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), &g| (lo.min(g), hi.max(g)));
            10.0 * self.p_max * hi / lo
        })
    }
}

/// Users sharing one orthogonal resource of a BS.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cluster {
    pub bs_id: usize,
    /// Connected users, strongest gain first.
    pub member_ids: Vec<usize>,
    #[serde(default)]
    pub failed_member: Option<usize>,
}

/// Sorts `(user_id, gain)` pairs by gain (ties by id) and deals rank `r` to
/// cluster `r mod L`, so strong and weak users end up paired.
pub fn sort_and_cluster(bs_id: usize, users: &[(usize, f64)], q: usize) -> Result<Vec<Cluster>> {
    if q == 0 {
        return Err(Error::Config("cluster size must be >= 1".into()));
    }
    let mut sorted = users.to_vec();
    sorted.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n_clusters = sorted.len().div_ceil(q);
    let mut clusters: Vec<Cluster> = (0..n_clusters)
        .map(|_| Cluster {
            bs_id,
            member_ids: Vec::with_capacity(q),
            failed_member: None,
        })
        .collect();
    for (rank, (id, _)) in sorted.iter().enumerate() {
        clusters[rank % n_clusters].member_ids.push(*id);
    }
    Ok(clusters)
}

/// User whose decoding threshold is requested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SicTarget {
    /// Connected user at this 0-based rank.
    Connected(usize),
    Failed,
}

/// Minimum gain among the users that must decode the target's signal.
pub fn h_minus(gains: &[f64], target: SicTarget) -> Result<f64> {
    let upto = match target {
        SicTarget::Connected(0) => {
            return Err(Error::Domain("rank-1 user has no predecessor".into()));
        }
        SicTarget::Connected(r) if r >= gains.len() => {
            return Err(Error::Domain(format!("rank {r} outside cluster of {}", gains.len())));
        }
        SicTarget::Connected(r) => r,
        SicTarget::Failed => gains.len(),
    };
    if upto == 0 {
        return Err(Error::Domain("failed user in a cluster without connected users".into()));
    }
    Ok(gains[..upto].iter().copied().fold(f64::INFINITY, f64::min))
}

/// SE of every connected member given powers in rank order.
pub fn connected_se(gains: &[f64], powers: &[f64], extra_floor: f64, sigma2: f64) -> Vec<f64> {
    let mut stronger = 0.0;
    gains
        .iter()
        .zip(powers)
        .map(|(&h, &p)| {
            let se = (1.0 + p * h / (h * stronger + extra_floor + sigma2)).log2();
            stronger += p;
            se
        })
        .collect()
}

/// SE of a failed member, which sees every connected signal as interference.
pub fn failed_se(p_failed: f64, h_failed: f64, connected: &[f64], extra_floor: f64, sigma2: f64) -> f64 {
    let total: f64 = connected.iter().sum();
    (1.0 + p_failed * h_failed / (h_failed * total + extra_floor + sigma2)).log2()
}

/// A failed user's cluster slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub bs: usize,
    pub cluster: usize,
    /// Set when the slot came from the exhausted-candidate fallback.
    #[serde(default)]
    pub fallback: bool,
}

/// Failed user id to cluster slot.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssociationMap {
    pub entries: BTreeMap<usize, Slot>,
}

impl AssociationMap {
    pub fn insert(&mut self, user: usize, bs: usize, cluster: usize) {
        self.entries.insert(
            user,
            Slot {
                bs,
                cluster,
                fallback: false,
            },
        );
    }

    pub fn get(&self, user: usize) -> Option<&Slot> {
        self.entries.get(&user)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Failed user hosted by `(bs, cluster)`, if any.
    pub fn occupant(&self, bs: usize, cluster: usize) -> Option<usize> {
        self.entries
            .iter()
            .find(|(_, s)| s.bs == bs && s.cluster == cluster)
            .map(|(&u, _)| u)
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        self.entries.values().all(|s| seen.insert((s.bs, s.cluster)))
    }

    pub fn without(&self, users: &[usize]) -> Self {
        let mut out = self.clone();
        for u in users {
            out.entries.remove(u);
        }
        out
    }
}

/// Per-BS transmit powers, indexed like `Scenario::cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSolution {
    pub bs_ids: Vec<usize>,
    /// `[cell][cluster][rank]`, mW.
    pub p_connected: Vec<Vec<Vec<f64>>>,
    /// `[cell][cluster]`, mW; zero when the cluster hosts no failed user.
    pub p_failed: Vec<Vec<f64>>,
    /// Sum of failed-user SE, bit/s/Hz.
    pub objective: f64,
}

impl PowerSolution {
    pub fn zeros(scenario: &Scenario) -> Self {
        Self {
            bs_ids: scenario.cells.iter().map(|c| c.bs_id).collect(),
            p_connected: scenario
                .cells
                .iter()
                .map(|c| c.clusters.iter().map(|cl| vec![0.0; cl.member_ids.len()]).collect())
                .collect(),
            p_failed: scenario.cells.iter().map(|c| vec![0.0; c.clusters.len()]).collect(),
            objective: 0.0,
        }
    }

    pub fn cell_total(&self, cell: usize) -> f64 {
        self.p_connected[cell].iter().flatten().sum::<f64>() + self.p_failed[cell].iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub bs_id: usize,
    pub clusters: Vec<Cluster>,
}

/// Network snapshot: topology, clustering and system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(flatten)]
    pub topology: Topology,
    pub cells: Vec<Cell>,
    pub params: SystemParams,
    /// Subchannel of every cluster, `[cell][cluster]`; absent means every
    /// cluster uses its own resource.
    #[serde(default)]
    pub subchannels: Option<Vec<Vec<usize>>>,
}

impl Scenario {
    pub fn new(topology: Topology, params: SystemParams) -> Result<Self> {
        params.validate()?;
        let cells = topology
            .compensating_ids()
            .into_iter()
            .map(|bs_id| {
                let users: Vec<(usize, f64)> = topology
                    .users_of(bs_id)
                    .into_iter()
                    .map(|u| (u, topology.gain[bs_id][u]))
                    .collect();
                Ok(Cell {
                    bs_id,
                    clusters: sort_and_cluster(bs_id, &users, params.cluster_size)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let scenario = Self {
            topology,
            cells,
            params,
            subchannels: None,
        };
        let failed = scenario.failed_users().len();
        if failed > scenario.total_clusters() {
            return Err(Error::Config(format!(
                "{failed} failed users exceed {} clusters",
                scenario.total_clusters()
            )));
        }
        Ok(scenario)
    }

    pub fn with_subchannels(mut self, plan: Vec<Vec<usize>>) -> Result<Self> {
        if plan.len() != self.cells.len()
            || plan.iter().zip(&self.cells).any(|(p, c)| p.len() != c.clusters.len())
        {
            return Err(Error::Config("subchannel plan does not match cluster layout".into()));
        }
        self.subchannels = Some(plan);
        Ok(self)
    }

    pub fn cell_index(&self, bs_id: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.bs_id == bs_id)
    }

    pub fn total_clusters(&self) -> usize {
        self.cells.iter().map(|c| c.clusters.len()).sum()
    }

    pub fn failed_users(&self) -> Vec<usize> {
        self.topology.failed_users()
    }

    pub fn connected_count(&self) -> usize {
        self.cells
            .iter()
            .flat_map(|c| &c.clusters)
            .map(|cl| cl.member_ids.len())
            .sum()
    }

    pub fn gain(&self, bs_id: usize, user: usize) -> f64 {
        self.topology.gain[bs_id][user]
    }

    pub fn member_gains(&self, cell: usize, cluster: usize) -> Vec<f64> {
        let c = &self.cells[cell];
        c.clusters[cluster]
            .member_ids
            .iter()
            .map(|&u| self.gain(c.bs_id, u))
            .collect()
    }

    /// Clusters of other cells on the same subchannel as `(cell, cluster)`.
    pub fn co_channel(&self, cell: usize, cluster: usize) -> Vec<(usize, usize)> {
        let Some(plan) = &self.subchannels else {
            return Vec::new();
        };
        let sub = plan[cell][cluster];
        plan.iter()
            .enumerate()
            .filter(|&(c, _)| c != cell)
            .flat_map(|(c, row)| {
                row.iter()
                    .enumerate()
                    .filter(move |&(_, &s)| s == sub)
                    .map(move |(l, _)| (c, l))
            })
            .collect()
    }

    /// Number of neighboring cells with a cluster on the same subchannel.
    pub fn co_channel_neighbors(&self, cell: usize, cluster: usize) -> usize {
        let mut cells: Vec<usize> = self.co_channel(cell, cluster).into_iter().map(|(c, _)| c).collect();
        cells.dedup();
        cells.len()
    }

    /// Interference floor added to every SE denominator of the cluster.
    pub fn extra_floor(&self, cell: usize, cluster: usize, mode: Mode) -> f64 {
        match mode {
            Mode::Isolated => 0.0,
            Mode::Interference => self.co_channel_neighbors(cell, cluster) as f64 * self.params.i_max,
        }
    }

    /// Largest total cluster power keeping every co-channel victim below the
    /// interference threshold. Victims are the connected members of
    /// co-channel clusters plus failed users hosted there when `assoc` is given.
    pub fn power_cap(&self, cell: usize, cluster: usize, mode: Mode, assoc: Option<&AssociationMap>) -> Option<f64> {
        if mode == Mode::Isolated {
            return None;
        }
        let bs = self.cells[cell].bs_id;
        let mut worst: f64 = 0.0;
        for (c, l) in self.co_channel(cell, cluster) {
            let victim_cluster = &self.cells[c].clusters[l];
            for &u in &victim_cluster.member_ids {
                worst = worst.max(self.gain(bs, u));
            }
            if let Some(f) = assoc.and_then(|a| a.occupant(self.cells[c].bs_id, l)) {
                worst = worst.max(self.gain(bs, f));
            }
        }
        (worst > 0.0).then(|| self.params.i_max / worst)
    }

    /// Solver input for the pre-outage sum-SE problem of one cell.
    pub fn pre_outage_instance(&self, cell: usize, mode: Mode) -> CellInstance {
        let clusters = (0..self.cells[cell].clusters.len())
            .map(|l| ClusterSpec {
                gains: self.member_gains(cell, l),
                failed_gain: None,
                extra_floor: self.extra_floor(cell, l, mode),
                power_cap: self.power_cap(cell, l, mode, None),
                retained: None,
            })
            .collect();
        CellInstance::new(self.cells[cell].bs_id, clusters, &self.params)
    }

    /// Solver input for the compensation problem of one cell.
    ///
    /// With `HostClusters` scope, clusters without a failed member keep their
    /// `pre` powers unless that would break their interference cap.
    pub fn compensation_instance(
        &self,
        cell: usize,
        assoc: &AssociationMap,
        pre: &[Vec<f64>],
        mode: Mode,
    ) -> Result<CellInstance> {
        let bs = self.cells[cell].bs_id;
        let n_clusters = self.cells[cell].clusters.len();
        if pre.len() != n_clusters {
            return Err(Error::Contract(format!(
                "pre-outage powers for {} clusters, cell has {n_clusters}",
                pre.len()
            )));
        }
        for slot in assoc.entries.values() {
            if slot.bs == bs && slot.cluster >= n_clusters {
                return Err(Error::Contract(format!(
                    "association references cluster {} of BS {bs}, which has {n_clusters}",
                    slot.cluster
                )));
            }
        }
        let clusters = (0..n_clusters)
            .map(|l| {
                let failed = assoc.occupant(bs, l);
                let cap = self.power_cap(cell, l, mode, Some(assoc));
                let keep = failed.is_none()
                    && self.params.scope == CompensationScope::HostClusters
                    && cap.is_none_or(|c| pre[l].iter().sum::<f64>() <= c);
                ClusterSpec {
                    gains: self.member_gains(cell, l),
                    failed_gain: failed.map(|u| self.gain(bs, u)),
                    extra_floor: self.extra_floor(cell, l, mode),
                    power_cap: cap,
                    retained: keep.then(|| pre[l].clone()),
                }
            })
            .collect();
        Ok(CellInstance::new(bs, clusters, &self.params))
    }

    /// Per-user SE of connected and served failed users.
    pub fn user_se(&self, assoc: &AssociationMap, sol: &PowerSolution, mode: Mode) -> UserSe {
        let mut out = UserSe::default();
        for (ci, cell) in self.cells.iter().enumerate() {
            for (l, cl) in cell.clusters.iter().enumerate() {
                let gains = self.member_gains(ci, l);
                let floor = self.extra_floor(ci, l, mode);
                let powers = &sol.p_connected[ci][l];
                let se = connected_se(&gains, powers, floor, self.params.sigma2);
                for (&u, s) in cl.member_ids.iter().zip(se) {
                    out.connected.insert(u, s);
                }
                if let Some(f) = assoc.occupant(cell.bs_id, l) {
                    let s = failed_se(
                        sol.p_failed[ci][l],
                        self.gain(cell.bs_id, f),
                        powers,
                        floor,
                        self.params.sigma2,
                    );
                    out.failed.insert(f, s);
                }
            }
        }
        for f in self.failed_users() {
            out.failed.entry(f).or_insert(0.0);
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UserSe {
    pub connected: BTreeMap<usize, f64>,
    pub failed: BTreeMap<usize, f64>,
}

impl UserSe {
    pub fn failed_sum(&self) -> f64 {
        self.failed.values().sum()
    }

    pub fn all(&self) -> Vec<f64> {
        self.connected.values().chain(self.failed.values()).copied().collect()
    }
}

/// How clusters are mapped onto subchannels across cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubchannelPlan {
    /// No plan; clusters never interfere.
    #[default]
    None,
    /// Cluster `l` of every cell uses subchannel `l`.
    FullReuse,
    /// Every cluster of the network has its own subchannel.
    Disjoint,
}

/// Everything needed to draw a scenario from a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub cells: usize,
    pub users_per_cell: usize,
    pub failed: usize,
    #[serde(default)]
    pub params: SystemParams,
    #[serde(default)]
    pub plan: SubchannelPlan,
}

impl ScenarioConfig {
    pub fn new(cells: usize, users_per_cell: usize, failed: usize) -> Self {
        Self {
            cells,
            users_per_cell,
            failed,
            params: SystemParams::default(),
            plan: SubchannelPlan::None,
        }
    }

    pub fn topology(&self, seed: u64) -> TopologyConfig {
        TopologyConfig::new(self.cells, self.users_per_cell, self.failed, seed)
            .with_cluster_size(self.params.cluster_size)
    }

    pub fn build(&self, seed: u64) -> Result<Scenario> {
        let scenario = Scenario::new(generate_topology(&self.topology(seed))?, self.params.clone())?;
        let plan: Vec<Vec<usize>> = match self.plan {
            SubchannelPlan::None => return Ok(scenario),
            SubchannelPlan::FullReuse => scenario.cells.iter().map(|c| (0..c.clusters.len()).collect()).collect(),
            SubchannelPlan::Disjoint => {
                let mut next = 0;
                scenario
                    .cells
                    .iter()
                    .map(|c| {
                        let row = (next..next + c.clusters.len()).collect();
                        next += c.clusters.len();
                        row
                    })
                    .collect()
            }
        };
        scenario.with_subchannels(plan)
    }
}

/// One cluster as seen by the power-allocation solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    /// Connected gains, strongest first.
    pub gains: Vec<f64>,
    pub failed_gain: Option<f64>,
    /// Extra interference floor, mW.
    #[serde(default)]
    pub extra_floor: f64,
    /// Cap on the total cluster power, mW.
    #[serde(default)]
    pub power_cap: Option<f64>,
    /// Fixed connected powers; such a cluster is not optimized.
    #[serde(default)]
    pub retained: Option<Vec<f64>>,
}

impl ClusterSpec {
    pub fn connected(gains: Vec<f64>) -> Self {
        Self {
            gains,
            failed_gain: None,
            extra_floor: 0.0,
            power_cap: None,
            retained: None,
        }
    }

    pub fn with_failed(mut self, h: f64) -> Self {
        self.failed_gain = Some(h);
        self
    }

    pub fn is_free(&self) -> bool {
        self.retained.is_none()
    }

    pub fn free_vars(&self) -> usize {
        if self.is_free() {
            self.gains.len() + usize::from(self.failed_gain.is_some())
        } else {
            0
        }
    }
}

/// Power-allocation input for a single BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellInstance {
    pub bs_id: usize,
    pub clusters: Vec<ClusterSpec>,
    pub p_max: f64,
    pub p_tol: f64,
    pub sigma2: f64,
    pub s_min: f64,
}

impl CellInstance {
    pub fn new(bs_id: usize, clusters: Vec<ClusterSpec>, params: &SystemParams) -> Self {
        Self {
            bs_id,
            clusters,
            p_max: params.p_max,
            p_tol: params.p_tol,
            sigma2: params.sigma2,
            s_min: params.s_min,
        }
    }

    pub fn free_vars(&self) -> usize {
        self.clusters.iter().map(ClusterSpec::free_vars).sum()
    }

    pub fn retained_power(&self) -> f64 {
        self.clusters
            .iter()
            .filter_map(|c| c.retained.as_ref())
            .flatten()
            .sum()
    }

    pub fn has_failed(&self) -> bool {
        self.clusters.iter().any(|c| c.failed_gain.is_some())
    }

    pub fn validate(&self) -> Result<()> {
        for (l, c) in self.clusters.iter().enumerate() {
            if c.gains.iter().chain(c.failed_gain.iter()).any(|&g| !(g > 0.0) || !g.is_finite()) {
                return Err(Error::Domain(format!("cluster {l}: gains must be positive")));
            }
            if c.failed_gain.is_some() && c.gains.is_empty() {
                return Err(Error::Domain(format!("cluster {l}: failed user without connected users")));
            }
            if let Some(r) = &c.retained {
                if r.len() != c.gains.len() {
                    return Err(Error::Contract(format!("cluster {l}: retained power length mismatch")));
                }
            }
        }
        Ok(())
    }

    /// Connected SE and failed SE of a candidate allocation.
    pub fn evaluate(&self, alloc: &CellAllocation) -> (Vec<Vec<f64>>, Vec<Option<f64>>) {
        let mut conn = Vec::with_capacity(self.clusters.len());
        let mut fail = Vec::with_capacity(self.clusters.len());
        for (c, (pc, pf)) in self.clusters.iter().zip(alloc.connected.iter().zip(&alloc.failed)) {
            conn.push(connected_se(&c.gains, pc, c.extra_floor, self.sigma2));
            fail.push(c.failed_gain.map(|h| failed_se(*pf, h, pc, c.extra_floor, self.sigma2)));
        }
        (conn, fail)
    }

    pub fn failed_objective(&self, alloc: &CellAllocation) -> f64 {
        self.evaluate(alloc).1.into_iter().flatten().sum()
    }

    pub fn connected_objective(&self, alloc: &CellAllocation) -> f64 {
        self.evaluate(alloc).0.into_iter().flatten().sum()
    }

    /// Checks every power constraint of the cell at absolute tolerance `tol`.
    pub fn check(&self, alloc: &CellAllocation, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        let bs = self.bs_id;
        let (conn_se, _) = self.evaluate(alloc);
        for (l, c) in self.clusters.iter().enumerate() {
            let pc = &alloc.connected[l];
            let pf = alloc.failed[l];
            for (r, se) in conn_se[l].iter().enumerate() {
                let short = (self.s_min - se) / self.s_min;
                if short > tol {
                    out.push(Violation::new("C1", format!("bs {bs} cluster {l} rank {r}"), short));
                }
            }
            let mut stronger = 0.0;
            for r in 0..c.gains.len() {
                if r > 0 {
                    let h = h_minus(&c.gains, SicTarget::Connected(r)).unwrap_or(f64::INFINITY);
                    let short = self.p_tol / h - (pc[r] - stronger);
                    if short > tol {
                        out.push(Violation::new("C5", format!("bs {bs} cluster {l} rank {r}"), short));
                    }
                }
                stronger += pc[r];
            }
            if c.failed_gain.is_some() {
                let h = h_minus(&c.gains, SicTarget::Failed).unwrap_or(f64::INFINITY);
                let short = self.p_tol / h - (pf - stronger);
                if short > tol {
                    out.push(Violation::new("C4", format!("bs {bs} cluster {l} failed"), short));
                }
            } else if pf.abs() > tol {
                out.push(Violation::new("C9", format!("bs {bs} cluster {l} unassigned slot"), pf.abs()));
            }
            for (r, &p) in pc.iter().enumerate() {
                if p < -tol {
                    out.push(Violation::new("C8", format!("bs {bs} cluster {l} rank {r}"), -p));
                }
            }
            if pf < -tol {
                out.push(Violation::new("C7", format!("bs {bs} cluster {l} failed"), -pf));
            }
            if let Some(cap) = c.power_cap {
                let excess = pc.iter().sum::<f64>() + pf - cap;
                if excess > tol * cap.max(1.0) {
                    out.push(Violation::new("C10", format!("bs {bs} cluster {l}"), excess));
                }
            }
        }
        let excess = alloc.total() - self.p_max;
        if excess > tol {
            out.push(Violation::new("C6", format!("bs {bs}"), excess));
        }
        out
    }
}

/// Powers for one cell, `connected[cluster][rank]` and `failed[cluster]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellAllocation {
    pub connected: Vec<Vec<f64>>,
    pub failed: Vec<f64>,
}

impl CellAllocation {
    pub fn zeros(inst: &CellInstance) -> Self {
        Self {
            connected: inst.clusters.iter().map(|c| vec![0.0; c.gains.len()]).collect(),
            failed: vec![0.0; inst.clusters.len()],
        }
    }

    pub fn total(&self) -> f64 {
        self.connected.iter().flatten().sum::<f64>() + self.failed.iter().sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub constraint: String,
    pub entity: String,
    pub magnitude: f64,
}

impl Violation {
    pub fn new(constraint: &str, entity: String, magnitude: f64) -> Self {
        Self {
            constraint: constraint.to_string(),
            entity,
            magnitude,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub entries: Vec<Violation>,
}

impl ViolationReport {
    pub fn is_feasible(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, constraint: &str) -> usize {
        self.entries.iter().filter(|v| v.constraint == constraint).count()
    }

    pub fn max_magnitude(&self) -> f64 {
        self.entries.iter().map(|v| v.magnitude).fold(0.0, f64::max)
    }
}

/// Checks a network-wide solution against every constraint of the joint
/// problem: association (C2, C3), per-cell power constraints and the
/// indicator-relaxed SIC rows of unassigned failed-user slots.
pub fn check_constraints(
    scenario: &Scenario,
    assoc: &AssociationMap,
    sol: &PowerSolution,
    mode: Mode,
    tol: f64,
) -> ViolationReport {
    let mut entries = Vec::new();
    if !assoc.is_injective() {
        entries.push(Violation::new("C2", "association".into(), 1.0));
    }
    for f in scenario.failed_users() {
        match assoc.get(f) {
            None => entries.push(Violation::new("C3", format!("failed user {f}"), 1.0)),
            Some(s) => {
                let valid = scenario
                    .cell_index(s.bs)
                    .is_some_and(|c| s.cluster < scenario.cells[c].clusters.len());
                if !valid {
                    entries.push(Violation::new("C3", format!("failed user {f} invalid slot"), 1.0));
                }
            }
        }
    }
    let big_b = scenario.params.big_b_for(&scenario.topology);
    for (ci, cell) in scenario.cells.iter().enumerate() {
        let clusters = (0..cell.clusters.len())
            .map(|l| ClusterSpec {
                gains: scenario.member_gains(ci, l),
                failed_gain: assoc.occupant(cell.bs_id, l).map(|u| scenario.gain(cell.bs_id, u)),
                extra_floor: scenario.extra_floor(ci, l, mode),
                power_cap: scenario.power_cap(ci, l, mode, Some(assoc)),
                retained: None,
            })
            .collect();
        let inst = CellInstance::new(cell.bs_id, clusters, &scenario.params);
        let alloc = CellAllocation {
            connected: sol.p_connected[ci].clone(),
            failed: sol.p_failed[ci].clone(),
        };
        entries.extend(inst.check(&alloc, tol));

        // Relaxed SIC rows for failed users not hosted by this cluster.
        for (l, spec) in inst.clusters.iter().enumerate() {
            if spec.gains.is_empty() {
                continue;
            }
            let h = h_minus(&spec.gains, SicTarget::Failed).unwrap_or(0.0);
            let lhs = -alloc.connected[l].iter().sum::<f64>() * h;
            let short = (scenario.params.p_tol - big_b) - lhs;
            if short > tol {
                entries.push(Violation::new("C4", format!("bs {} cluster {l} relaxed", cell.bs_id), short));
            }
        }
    }
    ViolationReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{generate_topology, TopologyConfig};

    fn ids(c: &Cluster) -> &[usize] {
        &c.member_ids
    }

    #[test]
    fn clustering_pairs_strong_with_weak() {
        let users = [(0, 8.0), (1, 6.0), (2, 4.0), (3, 2.0)];
        let cl = sort_and_cluster(1, &users, 2).unwrap();
        assert_eq!(cl.len(), 2);
        assert_eq!(ids(&cl[0]), &[0, 2]);
        assert_eq!(ids(&cl[1]), &[1, 3]);
    }

    #[test]
    fn clustering_is_order_insensitive() {
        let a = [(0, 8.0), (1, 6.0), (2, 4.0), (3, 2.0)];
        let b = [(3, 2.0), (1, 6.0), (0, 8.0), (2, 4.0)];
        assert_eq!(sort_and_cluster(1, &a, 2).unwrap(), sort_and_cluster(1, &b, 2).unwrap());
    }

    #[test]
    fn clustering_degenerate_and_uneven() {
        let users = [(0, 8.0), (1, 6.0), (2, 4.0)];
        let one = sort_and_cluster(1, &users, 3).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(ids(&one[0]), &[0, 1, 2]);
        let uneven = sort_and_cluster(1, &users, 2).unwrap();
        assert_eq!(ids(&uneven[0]), &[0, 2]);
        assert_eq!(ids(&uneven[1]), &[1]);
        assert!(matches!(sort_and_cluster(1, &users, 0), Err(Error::Config(_))));
    }

    #[test]
    fn clustering_ties_broken_by_id() {
        let users = [(5, 1.0), (2, 1.0), (9, 1.0), (1, 1.0)];
        let cl = sort_and_cluster(1, &users, 2).unwrap();
        assert_eq!(ids(&cl[0]), &[1, 5]);
        assert_eq!(ids(&cl[1]), &[2, 9]);
    }

    #[test]
    fn h_minus_examples() {
        assert_eq!(h_minus(&[8.0, 4.0], SicTarget::Connected(1)).unwrap(), 8.0);
        assert_eq!(h_minus(&[8.0, 4.0], SicTarget::Failed).unwrap(), 4.0);
        assert_eq!(h_minus(&[8.0, 6.0, 4.0], SicTarget::Connected(2)).unwrap(), 6.0);
        assert!(h_minus(&[8.0, 4.0], SicTarget::Connected(0)).is_err());
    }

    #[test]
    fn connected_se_examples() {
        let h = 0.5;
        let se = connected_se(&[h], &[2.0 / h], 0.0, 2.0);
        assert!((se[0] - 1.0).abs() < 1e-15);
        assert_eq!(connected_se(&[1.0], &[0.0], 0.0, 1.0)[0], 0.0);
        let se = connected_se(&[1.0, 1.0], &[1.0, 1.0], 0.0, 1.0);
        assert!((se[0] - 1.0).abs() < 1e-15);
        assert!((se[1] - 1.5f64.log2()).abs() < 1e-15);
        let single = connected_se(&[3.0], &[7.0], 0.0, 2.0)[0];
        assert_eq!(single, (1.0 + 7.0 * 3.0 / 2.0f64).log2());
    }

    #[test]
    fn failed_se_examples() {
        assert_eq!(failed_se(0.0, 1.0, &[1.0], 0.0, 1.0), 0.0);
        assert!((failed_se(2.0, 0.5, &[], 0.0, 1.0) - 1.0).abs() < 1e-15);
        let v = failed_se(3.0, 1.0, &[1.0], 0.0, 1.0);
        assert!((v - (1.0f64 + 3.0 / 2.0).log2()).abs() < 1e-15);
    }

    #[test]
    fn se_monotonicity() {
        let g = [2.0, 1.0, 0.5];
        let p = [0.3, 1.0, 4.0];
        let base = connected_se(&g, &p, 0.1, 1.0);
        for i in 0..3 {
            let mut up = p;
            up[i] += 1e-3;
            let s = connected_se(&g, &up, 0.1, 1.0);
            assert!(s[i] > base[i]);
            for j in i + 1..3 {
                assert!(s[j] < base[j]);
            }
        }
    }

    fn small_instance() -> CellInstance {
        let params = SystemParams {
            p_max: 10.0,
            p_tol: 1e-3,
            sigma2: 1.0,
            s_min: 4.0,
            ..SystemParams::default()
        };
        CellInstance::new(1, vec![ClusterSpec::connected(vec![4.0, 1.0])], &params)
    }

    #[test]
    fn zero_powers_violate_every_min_se() {
        let inst = small_instance();
        let v = inst.check(&CellAllocation::zeros(&inst), 1e-6);
        let c1: Vec<_> = v.iter().filter(|x| x.constraint == "C1").collect();
        assert_eq!(c1.len(), 2);
        assert!(c1.iter().all(|x| (x.magnitude - 1.0).abs() < 1e-12));
    }

    #[test]
    fn budget_excess_reported_once() {
        let mut inst = small_instance();
        inst.s_min = 0.01;
        inst.p_tol = 1e-9;
        let alloc = CellAllocation {
            connected: vec![vec![3.0, 8.0]],
            failed: vec![0.0],
        };
        let v = inst.check(&alloc, 1e-6);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].constraint, "C6");
        assert!((v[0].magnitude - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_layout() {
        let topo = generate_topology(&TopologyConfig::new(3, 4, 3, 42)).unwrap();
        let sc = Scenario::new(topo, SystemParams::default()).unwrap();
        assert_eq!(sc.cells.len(), 3);
        assert_eq!(sc.total_clusters(), 6);
        assert_eq!(sc.connected_count(), 12);
        for ci in 0..3 {
            for l in 0..2 {
                let g = sc.member_gains(ci, l);
                assert!(g.windows(2).all(|w| w[0] >= w[1]));
            }
        }
        let json = serde_json::to_value(&sc).unwrap();
        assert!(json["bs"].is_array() && json["user"].is_array() && json["gain"].is_array());
        let back: Scenario = serde_json::from_value(json).unwrap();
        assert_eq!(back, sc);
    }

    #[test]
    fn co_channel_counting() {
        let topo = generate_topology(&TopologyConfig::new(3, 4, 2, 1)).unwrap();
        let sc = Scenario::new(topo, SystemParams::default())
            .unwrap()
            .with_subchannels(vec![vec![0, 1], vec![0, 2], vec![3, 0]])
            .unwrap();
        assert_eq!(sc.co_channel(0, 0), vec![(1, 0), (2, 1)]);
        assert_eq!(sc.co_channel_neighbors(0, 0), 2);
        assert_eq!(sc.co_channel_neighbors(0, 1), 0);
        assert_eq!(sc.extra_floor(0, 1, Mode::Interference), 0.0);
        assert_eq!(sc.extra_floor(0, 0, Mode::Isolated), 0.0);
        assert!(sc.power_cap(0, 1, Mode::Interference, None).is_none());
        let cap = sc.power_cap(0, 0, Mode::Interference, None).unwrap();
        let bs = sc.cells[0].bs_id;
        let worst = sc.cells[1].clusters[0]
            .member_ids
            .iter()
            .chain(&sc.cells[2].clusters[1].member_ids)
            .map(|&u| sc.gain(bs, u))
            .fold(0.0, f64::max);
        assert!((cap - sc.params.i_max / worst).abs() <= 1e-12 * cap);
    }

    #[test]
    fn association_helpers() {
        let mut a = AssociationMap::default();
        a.insert(12, 1, 0);
        a.insert(13, 2, 1);
        assert!(a.is_injective());
        assert_eq!(a.occupant(2, 1), Some(13));
        assert_eq!(a.occupant(2, 0), None);
        a.insert(14, 1, 0);
        assert!(!a.is_injective());
        let json = serde_json::to_string(&a).unwrap();
        let back: AssociationMap = serde_json::from_str(&json).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn default_params_match_table_values() {
        let p = SystemParams::default();
        assert!((p.p_max - 39994.5).abs() < 0.1);
        assert!((p.sigma2 - 1e-15).abs() < 1e-27);
        assert!((p.p_tol / 10f64.powf(-10.14) - 1.0).abs() < 1e-12);
        assert_eq!(p.sinr_target(), 15.0);
    }
}
