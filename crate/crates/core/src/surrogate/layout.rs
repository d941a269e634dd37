//! Matrix layout shared by samples and the network: `(q + 1) x L` with
//! connected users of cluster `l` in rows `0..q` (strongest first) and its
//! failed user in row `q`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{AssociationMap, CellAllocation, CellInstance, ClusterSpec, Mode, Scenario};
use crate::{Error, Result};

/// One per-BS training example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub id: u64,
    /// Sample this one was derived from by permutation.
    pub parent_id: Option<u64>,
    pub scenario_seed: u64,
    pub bs_id: usize,
    pub q: usize,
    #[serde(rename = "L")]
    pub clusters: usize,
    /// log10 gains; `None` where no user sits.
    #[serde(rename = "H")]
    pub log_gains: Vec<Vec<Option<f64>>>,
    /// Optimal powers in mW, zero where no user sits.
    #[serde(rename = "P")]
    pub powers: Vec<Vec<f64>>,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    /// Solver input the target was computed from. Permuted samples keep
    /// their parent's instance.
    pub instance: CellInstance,
    pub objective: f64,
    pub mode: Mode,
}

impl LabeledSample {
    pub fn rows(&self) -> usize {
        self.q + 1
    }

    /// Solver output as a labeled sample.
    pub fn from_solution(
        id: u64,
        scenario_seed: u64,
        q: usize,
        inst: &CellInstance,
        alloc: &CellAllocation,
        objective: f64,
        mode: Mode,
    ) -> Result<Self> {
        let l = inst.clusters.len();
        Ok(Self {
            id,
            parent_id: None,
            scenario_seed,
            bs_id: inst.bs_id,
            q,
            clusters: l,
            log_gains: instance_layout(inst, q, l)?,
            powers: allocation_layout(inst, alloc, q, l),
            meta: SampleMeta {
                instance: inst.clone(),
                objective,
                mode,
            },
        })
    }

    /// Column `cols[j]` of the result is column `j` of `self`; rows
    /// `0..q` are reordered the same way by `rows`. The failed row stays.
    pub fn permuted(&self, rows: &[usize], cols: &[usize], id: u64) -> Self {
        let q = self.q;
        let mut h = vec![vec![None; self.clusters]; q + 1];
        let mut p = vec![vec![0.0; self.clusters]; q + 1];
        for r in 0..=q {
            let nr = if r < q { rows[r] } else { q };
            for c in 0..self.clusters {
                h[nr][cols[c]] = self.log_gains[r][c];
                p[nr][cols[c]] = self.powers[r][c];
            }
        }
        Self {
            id,
            parent_id: Some(self.parent_id.unwrap_or(self.id)),
            log_gains: h,
            powers: p,
            ..self.clone()
        }
    }
}

fn check_shape(inst: &CellInstance, q: usize, l_max: usize) -> Result<()> {
    if inst.clusters.len() > l_max {
        return Err(Error::Contract(format!(
            "{} clusters exceed the layout width {l_max}",
            inst.clusters.len()
        )));
    }
    if let Some(c) = inst.clusters.iter().find(|c| c.gains.len() > q) {
        return Err(Error::Contract(format!("cluster of {} users exceeds q = {q}", c.gains.len())));
    }
    Ok(())
}

/// Raw log10 gain matrix of a solver instance.
pub fn instance_layout(inst: &CellInstance, q: usize, l_max: usize) -> Result<Vec<Vec<Option<f64>>>> {
    if !inst.has_failed() {
        return Err(Error::Contract(format!(
            "BS {} serves no failed user and keeps its pre-outage powers",
            inst.bs_id
        )));
    }
    check_shape(inst, q, l_max)?;
    let mut h = vec![vec![None; l_max]; q + 1];
    for (l, c) in inst.clusters.iter().enumerate() {
        for (r, g) in c.gains.iter().enumerate() {
            h[r][l] = Some(g.log10());
        }
        h[q][l] = c.failed_gain.map(f64::log10);
    }
    Ok(h)
}

/// Input matrix for BS `cell` of a scenario under an association.
pub fn build_input(scenario: &Scenario, cell: usize, assoc: &AssociationMap) -> Result<Vec<Vec<Option<f64>>>> {
    let c = &scenario.cells[cell];
    let clusters = (0..c.clusters.len())
        .map(|l| ClusterSpec {
            failed_gain: assoc.occupant(c.bs_id, l).map(|u| scenario.gain(c.bs_id, u)),
            ..ClusterSpec::connected(scenario.member_gains(cell, l))
        })
        .collect();
    let inst = CellInstance::new(c.bs_id, clusters, &scenario.params);
    instance_layout(&inst, scenario.params.cluster_size, c.clusters.len())
}

pub fn allocation_layout(inst: &CellInstance, alloc: &CellAllocation, q: usize, l_max: usize) -> Vec<Vec<f64>> {
    let mut p = vec![vec![0.0; l_max]; q + 1];
    for (l, c) in inst.clusters.iter().enumerate() {
        for r in 0..c.gains.len() {
            p[r][l] = alloc.connected[l][r];
        }
        if c.failed_gain.is_some() {
            p[q][l] = alloc.failed[l];
        }
    }
    p
}

pub fn layout_allocation(inst: &CellInstance, p: &[Vec<f64>], q: usize) -> CellAllocation {
    let mut alloc = CellAllocation::zeros(inst);
    for (l, c) in inst.clusters.iter().enumerate() {
        for r in 0..c.gains.len() {
            alloc.connected[l][r] = p[r][l];
        }
        if c.failed_gain.is_some() {
            alloc.failed[l] = p[q][l];
        }
    }
    alloc
}

/// `count` randomly permuted copies of `sample`, ids starting at `first_id`.
pub fn augment_permutations(sample: &LabeledSample, count: usize, seed: u64, first_id: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<usize> = (0..sample.q).collect();
    let mut cols: Vec<usize> = (0..sample.clusters).collect();
    (0..count as u64)
        .map(|k| {
            rows.shuffle(&mut rng);
            cols.shuffle(&mut rng);
            sample.permuted(&rows, &cols, first_id + k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::SystemParams;

    fn instance() -> CellInstance {
        let clusters = vec![
            ClusterSpec::connected(vec![1e-7, 1e-9]).with_failed(1e-12),
            ClusterSpec::connected(vec![1e-8, 1e-10]),
            ClusterSpec::connected(vec![1e-8]).with_failed(1e-11),
        ];
        CellInstance::new(4, clusters, &SystemParams::default())
    }

    fn sample() -> LabeledSample {
        let inst = instance();
        let alloc = CellAllocation {
            connected: vec![vec![1.0, 20.0], vec![2.0, 40.0], vec![3.0]],
            failed: vec![500.0, 0.0, 700.0],
        };
        LabeledSample::from_solution(9, 3, 2, &inst, &alloc, 1.5, Mode::Isolated).unwrap()
    }

    #[test]
    fn layout_and_padding() {
        let s = sample();
        assert_eq!(s.log_gains.len(), 3);
        assert_eq!(s.log_gains[0][0], Some(-7.0));
        assert_eq!(s.log_gains[2][0], Some(-12.0));
        assert_eq!(s.log_gains[2][1], None);
        assert_eq!(s.log_gains[1][2], None);
        assert_eq!(s.powers[2], vec![500.0, 0.0, 700.0]);
        for v in s.log_gains.iter().flatten().flatten() {
            assert!((-12.0..=-7.0).contains(v));
        }
        let back = layout_allocation(&s.meta.instance, &s.powers, 2);
        assert_eq!(back.connected[1], vec![2.0, 40.0]);
        assert_eq!(back.failed, vec![500.0, 0.0, 700.0]);
    }

    #[test]
    fn no_failed_user_is_contract_error() {
        let mut inst = instance();
        for c in &mut inst.clusters {
            c.failed_gain = None;
        }
        assert!(matches!(instance_layout(&inst, 2, 3), Err(Error::Contract(_))));
    }

    #[test]
    fn permutations() {
        let s = sample();
        let same = s.permuted(&[0, 1], &[0, 1, 2], s.id);
        assert_eq!(same.log_gains, s.log_gains);
        assert_eq!(same.powers, s.powers);
        let swapped = s.permuted(&[0, 1], &[1, 0, 2], 100);
        assert_eq!(swapped.log_gains[2][1], Some(-12.0));
        assert_eq!(swapped.parent_id, Some(9));
        let back = swapped.permuted(&[0, 1], &[1, 0, 2], 101);
        assert_eq!(back.log_gains, s.log_gains);
        assert_eq!(back.powers, s.powers);
        assert_eq!(back.parent_id, Some(9));
        let rows = s.permuted(&[1, 0], &[0, 1, 2], 102);
        assert_eq!(rows.powers[0][0], 20.0);
        assert_eq!(rows.powers[2], s.powers[2]);
    }

    #[test]
    fn augmentation_is_seeded_and_matched() {
        let s = sample();
        let a = augment_permutations(&s, 5, 77, 1000);
        assert_eq!(a, augment_permutations(&s, 5, 77, 1000));
        assert_eq!(a.iter().map(|x| x.id).collect::<Vec<_>>(), (1000..1005).collect::<Vec<_>>());
        for x in &a {
            for (hr, pr) in x.log_gains.iter().zip(&x.powers) {
                for (h, p) in hr.iter().zip(pr) {
                    assert_eq!(h.is_none(), *p == 0.0);
                }
            }
            let mut hs: Vec<_> = x.log_gains.iter().flatten().flatten().map(|v| v.to_bits()).collect();
            let mut orig: Vec<_> = s.log_gains.iter().flatten().flatten().map(|v| v.to_bits()).collect();
            hs.sort();
            orig.sort();
            assert_eq!(hs, orig);
        }
    }
}
