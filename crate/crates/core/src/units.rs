//! Unit conversions, the distance-based channel model and random topologies.
//!
//! All power arithmetic elsewhere in the crate is done on linear milliwatts;
//! dBm only appears at configuration and I/O boundaries.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Power expressed in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PowerDbm(pub f64);

/// Power expressed in linear milliwatts.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct PowerLinear(pub f64);

impl PowerDbm {
    pub fn to_linear(self) -> PowerLinear {
        dbm_to_linear(self)
    }
}

impl PowerLinear {
    pub fn mw(self) -> f64 {
        self.0
    }

    pub fn to_dbm(self) -> PowerDbm {
        linear_to_dbm(self)
    }
}

pub fn dbm_to_linear(p: PowerDbm) -> PowerLinear {
    PowerLinear(10f64.powf(p.0 / 10.0))
}

pub fn linear_to_dbm(p: PowerLinear) -> PowerDbm {
    PowerDbm(10.0 * p.0.log10())
}

/// Planar position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Dimensionless linear power gain of a link.
///
/// `fading` is a multiplicative small-scale factor. The model itself is
/// purely distance based, so it is 1 unless a caller overrides it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelGain {
    pub value: f64,
    #[serde(default = "unit_fading")]
    pub fading: f64,
}

fn unit_fading() -> f64 {
    1.0
}

impl ChannelGain {
    pub fn new(value: f64) -> Self {
        Self { value, fading: 1.0 }
    }

    pub fn with_fading(self, fading: f64) -> Self {
        Self { fading, ..self }
    }

    /// Effective gain including the fading factor.
    pub fn linear(&self) -> f64 {
        self.value * self.fading
    }
}

/// Path loss `38 + 30 log10(d)` dB for a distance in meters.
pub fn path_loss_db(d: f64) -> Result<f64> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::Domain(format!("distance must be positive, got {d}")));
    }
    Ok(38.0 + 30.0 * d.log10())
}

pub fn channel_gain(d: f64) -> Result<ChannelGain> {
    let pl = path_loss_db(d)?;
    Ok(ChannelGain::new(10f64.powf(-pl / 10.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseStation {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub failed: bool,
}

impl BaseStation {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: usize,
    pub home_bs: usize,
    pub x: f64,
    pub y: f64,
}

impl User {
    pub fn position(&self) -> Position {
        Position::new(self.x, self.y)
    }
}

/// Parameters of the random network layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyConfig {
    pub n_compensating: usize,
    pub users_per_cell: usize,
    pub n_failed: usize,
    pub cluster_size: usize,
    #[serde(default = "default_radius")]
    pub cell_radius: f64,
    #[serde(default = "default_min_distance")]
    pub min_distance: f64,
    pub seed: u64,
}

fn default_radius() -> f64 {
    120.0
}

fn default_min_distance() -> f64 {
    20.0
}

impl TopologyConfig {
    pub fn new(n_compensating: usize, users_per_cell: usize, n_failed: usize, seed: u64) -> Self {
        Self {
            n_compensating,
            users_per_cell,
            n_failed,
            cluster_size: 2,
            cell_radius: default_radius(),
            min_distance: default_min_distance(),
            seed,
        }
    }

    pub fn with_cluster_size(mut self, q: usize) -> Self {
        self.cluster_size = q;
        self
    }

    pub fn clusters_per_cell(&self) -> usize {
        self.users_per_cell.div_ceil(self.cluster_size.max(1))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_compensating == 0 || self.users_per_cell == 0 || self.n_failed == 0 {
            return Err(Error::Config("cell, user and failed-user counts must be >= 1".into()));
        }
        if self.cluster_size == 0 {
            return Err(Error::Config("cluster size must be >= 1".into()));
        }
        if !(self.min_distance > 0.0 && self.min_distance < self.cell_radius) {
            return Err(Error::Config(format!(
                "need 0 < min distance ({}) < radius ({})",
                self.min_distance, self.cell_radius
            )));
        }
        let total_clusters = self.n_compensating * self.clusters_per_cell();
        if self.n_failed > total_clusters {
            return Err(Error::Config(format!(
                "{} failed users exceed the {} clusters available in compensating cells",
                self.n_failed, total_clusters
            )));
        }
        Ok(())
    }
}

/// Positions of all base stations and users, plus the full gain matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub bs: Vec<BaseStation>,
    pub user: Vec<User>,
    /// `gain[bs_id][user_id]`, linear.
    pub gain: Vec<Vec<f64>>,
    pub seed: u64,
    /// Number of layouts rejected because the SIC gain ordering did not hold.
    #[serde(default)]
    pub resamples: u32,
    pub config: TopologyConfig,
}

const MAX_RESAMPLES: u32 = 1000;

impl Topology {
    pub fn failed_bs(&self) -> usize {
        self.bs.iter().find(|b| b.failed).map(|b| b.id).unwrap_or(0)
    }

    pub fn compensating_ids(&self) -> Vec<usize> {
        self.bs.iter().filter(|b| !b.failed).map(|b| b.id).collect()
    }

    pub fn users_of(&self, bs_id: usize) -> Vec<usize> {
        self.user.iter().filter(|u| u.home_bs == bs_id).map(|u| u.id).collect()
    }

    pub fn failed_users(&self) -> Vec<usize> {
        self.users_of(self.failed_bs())
    }

    pub fn gain(&self, bs_id: usize, user_id: usize) -> f64 {
        self.gain[bs_id][user_id]
    }

    /// Checks that every compensating cell sees its own users with stronger
    /// gains than any failed user.
    pub fn gain_ordering_holds(&self) -> bool {
        let failed = self.failed_users();
        self.compensating_ids().into_iter().all(|n| {
            let own_min = self
                .users_of(n)
                .iter()
                .map(|&u| self.gain[n][u])
                .fold(f64::INFINITY, f64::min);
            let failed_max = failed.iter().map(|&u| self.gain[n][u]).fold(0.0, f64::max);
            own_min >= failed_max
        })
    }
}

/// Uniform point in the annulus `[min_d, radius]` around `center`, drawn by
/// rejection from the bounding square.
pub fn sample_in_cell<R: Rng>(rng: &mut R, center: Position, radius: f64, min_d: f64) -> Position {
    loop {
        let dx = rng.gen_range(-radius..=radius);
        let dy = rng.gen_range(-radius..=radius);
        let d = dx.hypot(dy);
        if d <= radius && d >= min_d {
            return Position::new(center.x + dx, center.y + dy);
        }
    }
}

/// Draws a random layout: the failed BS at the origin and the compensating
/// BSs on a ring at twice the cell radius, equally spaced.
pub fn generate_topology(cfg: &TopologyConfig) -> Result<Topology> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let ring = 2.0 * cfg.cell_radius;

    let mut bs = vec![BaseStation {
        id: 0,
        x: 0.0,
        y: 0.0,
        failed: true,
    }];
    for i in 0..cfg.n_compensating {
        let angle = 2.0 * PI * i as f64 / cfg.n_compensating as f64;
        bs.push(BaseStation {
            id: i + 1,
            x: ring * angle.cos(),
            y: ring * angle.sin(),
            failed: false,
        });
    }

    let mut resamples = 0;
    loop {
        let mut user = Vec::with_capacity(cfg.n_compensating * cfg.users_per_cell + cfg.n_failed);
        for b in bs.iter().filter(|b| !b.failed) {
            for _ in 0..cfg.users_per_cell {
                let p = sample_in_cell(&mut rng, b.position(), cfg.cell_radius, cfg.min_distance);
                user.push(User {
                    id: user.len(),
                    home_bs: b.id,
                    x: p.x,
                    y: p.y,
                });
            }
        }
        for _ in 0..cfg.n_failed {
            let p = sample_in_cell(&mut rng, bs[0].position(), cfg.cell_radius, cfg.min_distance);
            user.push(User {
                id: user.len(),
                home_bs: 0,
                x: p.x,
                y: p.y,
            });
        }

        let gain = bs
            .iter()
            .map(|b| {
                user.iter()
                    .map(|u| channel_gain(b.position().distance(&u.position())).map(|g| g.linear()))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;

        let topo = Topology {
            bs: bs.clone(),
            user,
            gain,
            seed: cfg.seed,
            resamples,
            config: cfg.clone(),
        };
        if topo.gain_ordering_holds() {
            return Ok(topo);
        }
        resamples += 1;
        if resamples > MAX_RESAMPLES {
            return Err(Error::Config(format!(
                "gain ordering failed for {MAX_RESAMPLES} consecutive layouts"
            )));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_linear(PowerDbm(0.0)).0 - 1.0).abs() < 1e-12);
        assert!((dbm_to_linear(PowerDbm(30.0)).0 - 1000.0).abs() < 1e-9);
        // 10^4.602
        assert!((dbm_to_linear(PowerDbm(46.02)).0 - 39994.5).abs() < 0.1);
    }

    #[test]
    fn path_loss_values() {
        assert_eq!(path_loss_db(1.0).unwrap(), 38.0);
        assert!((path_loss_db(100.0).unwrap() - 98.0).abs() < 1e-12);
        assert!((path_loss_db(20.0).unwrap() - 77.03).abs() < 0.01);
        assert!(matches!(path_loss_db(0.0), Err(Error::Domain(_))));
        assert!(matches!(path_loss_db(-3.0), Err(Error::Domain(_))));
    }

    #[test]
    fn gain_values() {
        let g1 = channel_gain(1.0).unwrap().linear();
        assert!((g1 / 10f64.powf(-3.8) - 1.0).abs() < 1e-12);
        let g100 = channel_gain(100.0).unwrap().linear();
        assert!((g100 / 10f64.powf(-9.8) - 1.0).abs() < 1e-12);
        assert!(channel_gain(10.0).unwrap().linear() > channel_gain(10.5).unwrap().linear());
    }

    #[test]
    fn fading_hook_defaults_to_unity() {
        let g = channel_gain(50.0).unwrap();
        assert_eq!(g.fading, 1.0);
        assert_eq!(g.with_fading(0.5).linear(), 0.5 * g.value);
    }

    #[test]
    fn topology_counts_and_determinism() {
        let cfg = TopologyConfig::new(3, 4, 3, 42);
        let t = generate_topology(&cfg).unwrap();
        assert_eq!(t.compensating_ids().len(), 3);
        assert_eq!(t.failed_users().len(), 3);
        assert_eq!(t.user.len(), 15);
        let again = generate_topology(&cfg).unwrap();
        assert_eq!(t, again);
        let a = serde_json::to_string(&t).unwrap();
        let b = serde_json::to_string(&again).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_many_failed_users_is_rejected() {
        let cfg = TopologyConfig::new(2, 4, 5, 1);
        assert!(matches!(generate_topology(&cfg), Err(Error::Config(_))));
        let cfg = TopologyConfig::new(2, 4, 4, 1);
        assert!(generate_topology(&cfg).is_ok());
    }

    #[test]
    fn sampled_distances_stay_in_annulus() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = Position::new(10.0, -5.0);
        for _ in 0..10_000 {
            let p = sample_in_cell(&mut rng, c, 120.0, 20.0);
            let d = p.distance(&c);
            assert!((20.0..=120.0).contains(&d), "{d}");
        }
    }

    #[test]
    fn gains_sorted_by_distance() {
        let t = generate_topology(&TopologyConfig::new(3, 6, 4, 5)).unwrap();
        for n in t.compensating_ids() {
            let bpos = t.bs[n].position();
            let mut users: Vec<_> = t.users_of(n);
            users.sort_by(|&a, &b| {
                let da = t.user[a].position().distance(&bpos);
                let db = t.user[b].position().distance(&bpos);
                da.partial_cmp(&db).unwrap()
            });
            for w in users.windows(2) {
                assert!(t.gain[n][w[0]] >= t.gain[n][w[1]]);
            }
        }
        assert!(t.gain_ordering_holds());
    }

    #[test]
    fn serialized_layout_has_documented_fields() {
        let t = generate_topology(&TopologyConfig::new(2, 2, 1, 3)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&t).unwrap();
        assert!(v["bs"][0]["x"].is_number());
        assert_eq!(v["bs"][0]["failed"], true);
        assert!(v["user"][0]["home_bs"].is_number());
        assert!(v["gain"][1][0].is_number());
        assert_eq!(v["seed"], 3);
    }
}
