//! Convex power allocation for a single BS and for a whole network.

pub mod barrier;
mod oracle;
pub mod problem;

use serde::{Deserialize, Serialize};

pub use barrier::{LogTerm, PhaseOne, Program, Row, SolveStats, TraceRecord};
pub use oracle::{grid_oracle, OracleResult, MAX_ORACLE_VARS};

use crate::domain::{AssociationMap, CellAllocation, CellInstance, Mode, PowerSolution, Scenario};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Barrier growth factor.
    pub mu: f64,
    pub t0: f64,
    /// Stop centering when half the squared Newton decrement drops below this.
    pub newton_tol: f64,
    /// Stop when the duality gap bound `m / t` drops below this.
    pub outer_tol: f64,
    /// Newton iteration budget per phase.
    pub max_iter: usize,
    /// Sufficient-decrease fraction of the line search.
    pub alpha: f64,
    /// Backtracking factor of the line search.
    pub beta: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mu: 10.0,
            t0: 1.0,
            newton_tol: 1e-10,
            outer_tol: 1e-8,
            max_iter: 2000,
            alpha: 0.25,
            beta: 0.5,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 1.0) {
            return Err(Error::Config(format!("barrier growth must exceed 1, got {}", self.mu)));
        }
        if !(self.t0 > 0.0 && self.newton_tol > 0.0 && self.outer_tol > 0.0) {
            return Err(Error::Config("solver tolerances must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5 && self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config("line search needs 0 < alpha < 0.5 and 0 < beta < 1".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// What the cell-level problem maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum SE of connected users (pre-outage allocation).
    ConnectedSum,
    /// Sum SE of failed users (compensation allocation).
    FailedSum,
}

/// Evidence that no strictly feasible allocation exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    pub bs_id: usize,
    /// Smallest achievable maximum violation of the normalized constraints.
    pub max_violation: f64,
    /// Constraints attaining that violation.
    pub binding: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSolution {
    pub alloc: CellAllocation,
    /// Objective in bit/s/Hz.
    pub objective: f64,
    pub stats: SolveStats,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRecord>,
}

/// Solves one cell. Every returned allocation passes the cell constraint
/// check at 1e-6.
pub fn solve_cell(inst: &CellInstance, objective: Objective, cfg: &SolverConfig, trace: bool) -> Result<CellSolution> {
    cfg.validate()?;
    inst.validate()?;
    let (prog, vars) = problem::build(inst, objective)?;
    let mut records = trace.then(Vec::new);
    let mut stats = SolveStats::default();
    let x = if prog.n == 0 {
        if prog.rows.iter().any(|r| r.slack(&[]) < 0.0) {
            return Err(infeasible(inst, &prog, &[]));
        }
        Vec::new()
    } else {
        let x0 = vec![0.5 / prog.n as f64; prog.n];
        let start = match barrier::phase_one(&prog, &x0, cfg, &mut records) {
            PhaseOne::Feasible(x, iters) => {
                stats.phase1_iters = iters;
                x
            }
            PhaseOne::Infeasible { violation, binding, .. } => {
                return Err(Error::Infeasible(Box::new(InfeasibilityCertificate {
                    bs_id: inst.bs_id,
                    max_violation: violation,
                    binding,
                })));
            }
        };
        let (x, s) = prog.maximize(start, cfg, &mut records);
        stats = SolveStats {
            phase1_iters: stats.phase1_iters,
            ..s
        };
        x
    };
    let alloc = problem::to_allocation(inst, &vars, &x);
    let violations = inst.check(&alloc, 1e-6);
    if !violations.is_empty() {
        return Err(Error::Internal(format!(
            "solver output for BS {} failed the constraint check: {violations:?}",
            inst.bs_id
        )));
    }
    let objective = match objective {
        Objective::ConnectedSum => inst.connected_objective(&alloc),
        Objective::FailedSum => inst.failed_objective(&alloc),
    };
    Ok(CellSolution {
        alloc,
        objective,
        stats,
        trace: records.unwrap_or_default(),
    })
}

fn infeasible(inst: &CellInstance, prog: &Program, x: &[f64]) -> Error {
    let worst = prog.rows.iter().map(|r| -r.slack(x)).fold(0.0, f64::max);
    Error::Infeasible(Box::new(InfeasibilityCertificate {
        bs_id: inst.bs_id,
        max_violation: worst,
        binding: prog
            .rows
            .iter()
            .filter(|r| r.slack(x) < 0.0)
            .map(|r| r.tag.clone())
            .collect(),
    }))
}

/// Sum-SE allocation of a cell before the outage.
pub fn solve_pre_outage(inst: &CellInstance, cfg: &SolverConfig) -> Result<CellSolution> {
    if inst.has_failed() {
        return Err(Error::Contract("pre-outage instance must not contain failed users".into()));
    }
    solve_cell(inst, Objective::ConnectedSum, cfg, false)
}

/// Failed-user sum-SE allocation of a cell for a fixed association.
pub fn solve_compensation(inst: &CellInstance, cfg: &SolverConfig) -> Result<CellSolution> {
    solve_cell(inst, Objective::FailedSum, cfg, false)
}

/// Same as [`solve_compensation`]; the interference floor and per-cluster
/// caps are carried by the instance.
pub fn solve_compensation_interference(inst: &CellInstance, cfg: &SolverConfig) -> Result<CellSolution> {
    solve_compensation(inst, cfg)
}

/// Pre-outage powers of every cell, `[cell][cluster][rank]`.
pub fn pre_outage_network(scenario: &Scenario, mode: Mode, cfg: &SolverConfig) -> Result<Vec<Vec<Vec<f64>>>> {
    (0..scenario.cells.len())
        .map(|c| solve_pre_outage(&scenario.pre_outage_instance(c, mode), cfg).map(|s| s.alloc.connected))
        .collect()
}

/// Network-wide result of the power-allocation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSolution {
    pub solution: PowerSolution,
    /// Association restricted to failed users that were actually served.
    pub served: AssociationMap,
    /// Failed users whose host BS had no feasible allocation.
    pub unserved: Vec<usize>,
    /// Certificates of the BSs that fell back to their pre-outage powers.
    pub infeasible: Vec<InfeasibilityCertificate>,
    pub stats: Vec<SolveStats>,
}

/// Keeps the pre-outage powers of every cell; nobody from the failed cell is served.
pub fn no_compensation(scenario: &Scenario, pre: &[Vec<Vec<f64>>]) -> PowerSolution {
    let mut sol = PowerSolution::zeros(scenario);
    sol.p_connected = pre.to_vec();
    sol
}

/// Compensation allocation for every cell hosting a failed user. Cells
/// without one keep `pre`. A cell whose problem is infeasible also keeps
/// `pre` and its failed users are reported as unserved.
pub fn compensate_network(
    scenario: &Scenario,
    assoc: &AssociationMap,
    pre: &[Vec<Vec<f64>>],
    mode: Mode,
    cfg: &SolverConfig,
) -> Result<NetworkSolution> {
    let mut sol = no_compensation(scenario, pre);
    let mut unserved = Vec::new();
    let mut infeasible = Vec::new();
    let mut stats = Vec::new();
    for (ci, cell) in scenario.cells.iter().enumerate() {
        let hosted: Vec<usize> = assoc
            .entries
            .iter()
            .filter(|(_, s)| s.bs == cell.bs_id)
            .map(|(&u, _)| u)
            .collect();
        if hosted.is_empty() {
            continue;
        }
        let inst = scenario.compensation_instance(ci, assoc, &pre[ci], mode)?;
        match solve_compensation(&inst, cfg) {
            Ok(cs) => {
                sol.p_connected[ci] = cs.alloc.connected;
                sol.p_failed[ci] = cs.alloc.failed;
                sol.objective += cs.objective;
                stats.push(cs.stats);
            }
            Err(Error::Infeasible(cert)) => {
                unserved.extend(hosted);
                infeasible.push(*cert);
            }
            Err(e) => return Err(e),
        }
    }
    for (u, slot) in &assoc.entries {
        if scenario.cell_index(slot.bs).is_none() {
            return Err(Error::Contract(format!("failed user {u} assigned to unknown BS {}", slot.bs)));
        }
    }
    Ok(NetworkSolution {
        served: assoc.without(&unserved),
        solution: sol,
        unserved,
        infeasible,
        stats,
    })
}
