//! Exhaustive grid search over at most three free powers.
//!
//! Feasibility and objective use the domain SE formulas directly; nothing is
//! shared with the barrier formulation.

use super::problem::{layout, VarKind, VarSlot};
use super::Objective;
use crate::domain::{connected_se, h_minus, CellAllocation, CellInstance, SicTarget};
use crate::{Error, Result};

pub const MAX_ORACLE_VARS: usize = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub alloc: CellAllocation,
    pub objective: f64,
    /// Number of complete grid points that passed every constraint.
    pub feasible_points: u64,
}

/// Best feasible grid point with spacing `step` (mW), or `None` when no grid
/// point is feasible.
pub fn grid_oracle(inst: &CellInstance, objective: Objective, step: f64) -> Result<Option<OracleResult>> {
    inst.validate()?;
    let vars = layout(inst);
    if vars.len() > MAX_ORACLE_VARS {
        return Err(Error::Contract(format!(
            "grid oracle supports at most {MAX_ORACLE_VARS} free variables, instance has {}",
            vars.len()
        )));
    }
    if !(step > 0.0) {
        return Err(Error::Contract(format!("grid step must be positive, got {step}")));
    }
    let mut alloc = CellAllocation::zeros(inst);
    for (l, c) in inst.clusters.iter().enumerate() {
        if let Some(r) = &c.retained {
            alloc.connected[l].clone_from(r);
        }
    }
    let budget = inst.p_max - inst.retained_power();
    let mut search = Search {
        inst,
        vars: &vars,
        objective,
        step,
        best: None,
        feasible: 0,
    };
    if budget >= 0.0 {
        search.descend(0, &mut alloc, budget);
    }
    Ok(search.best.map(|(alloc, objective)| OracleResult {
        alloc,
        objective,
        feasible_points: search.feasible,
    }))
}

struct Search<'a> {
    inst: &'a CellInstance,
    vars: &'a [VarSlot],
    objective: Objective,
    step: f64,
    best: Option<(CellAllocation, f64)>,
    feasible: u64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, alloc: &mut CellAllocation, remaining: f64) {
        if depth == self.vars.len() {
            self.feasible += 1;
            let value = match self.objective {
                Objective::FailedSum => self.inst.failed_objective(alloc),
                Objective::ConnectedSum => self.inst.connected_objective(alloc),
            };
            if self.best.as_ref().is_none_or(|(_, b)| value > *b) {
                self.best = Some((alloc.clone(), value));
            }
            return;
        }
        let slot = self.vars[depth];
        let steps = (remaining / self.step + 1e-9).floor() as u64;
        for k in 0..=steps {
            let p = k as f64 * self.step;
            match slot.kind {
                VarKind::Connected(r) => alloc.connected[slot.cluster][r] = p,
                VarKind::Failed => alloc.failed[slot.cluster] = p,
            }
            if self.admissible(slot, alloc) {
                self.descend(depth + 1, alloc, remaining - p);
            }
        }
        match slot.kind {
            VarKind::Connected(r) => alloc.connected[slot.cluster][r] = 0.0,
            VarKind::Failed => alloc.failed[slot.cluster] = 0.0,
        }
    }

    /// Constraints whose last free variable is `slot`.
    fn admissible(&self, slot: VarSlot, alloc: &CellAllocation) -> bool {
        let inst = self.inst;
        let c = &inst.clusters[slot.cluster];
        let pc = &alloc.connected[slot.cluster];
        let pf = alloc.failed[slot.cluster];
        let ok = match slot.kind {
            VarKind::Connected(r) => {
                let se = connected_se(&c.gains[..=r], &pc[..=r], c.extra_floor, inst.sigma2)[r];
                let sic = r == 0 || {
                    let h = h_minus(&c.gains, SicTarget::Connected(r)).unwrap_or(f64::INFINITY);
                    (pc[r] - pc[..r].iter().sum::<f64>()) * h >= inst.p_tol
                };
                se >= inst.s_min && sic
            }
            VarKind::Failed => {
                let h = h_minus(&c.gains, SicTarget::Failed).unwrap_or(f64::INFINITY);
                (pf - pc.iter().sum::<f64>()) * h >= inst.p_tol
            }
        };
        ok && c.power_cap.is_none_or(|cap| pc.iter().sum::<f64>() + pf <= cap)
    }
}
