//! Translation of a [`CellInstance`] into a normalized barrier program.
//!
//! Variables are powers divided by `p_max`; gains are scaled by
//! `p_max / sigma2` so that every coefficient is of moderate size.

use std::f64::consts::LN_2;

use super::barrier::{LogTerm, Program, Row};
use super::Objective;
use crate::domain::{h_minus, CellAllocation, CellInstance, SicTarget};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Connected(usize),
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarSlot {
    pub cluster: usize,
    pub kind: VarKind,
}

/// Free variables in cluster order: connected ranks first, then the failed slot.
pub fn layout(inst: &CellInstance) -> Vec<VarSlot> {
    let mut vars = Vec::new();
    for (l, c) in inst.clusters.iter().enumerate() {
        if !c.is_free() {
            continue;
        }
        for r in 0..c.gains.len() {
            vars.push(VarSlot {
                cluster: l,
                kind: VarKind::Connected(r),
            });
        }
        if c.failed_gain.is_some() {
            vars.push(VarSlot {
                cluster: l,
                kind: VarKind::Failed,
            });
        }
    }
    vars
}

pub fn build(inst: &CellInstance, objective: Objective) -> Result<(Program, Vec<VarSlot>)> {
    let vars = layout(inst);
    let n = vars.len();
    let gamma = inst.s_min.exp2() - 1.0;
    let unit = |i: usize, v: f64| {
        let mut c = vec![0.0; n];
        c[i] = v;
        c
    };
    let mut rows = Vec::new();
    let mut terms = Vec::new();

    let mut offset = 0;
    for (l, c) in inst.clusters.iter().enumerate() {
        if !c.is_free() {
            continue;
        }
        let ranks: Vec<usize> = (offset..offset + c.gains.len()).collect();
        let failed = c.failed_gain.map(|_| offset + c.gains.len());
        offset += c.free_vars();

        let noise = 1.0 + c.extra_floor / inst.sigma2;
        let scale = inst.p_max / inst.sigma2;

        for (r, &i) in ranks.iter().enumerate() {
            rows.push(Row {
                coef: unit(i, -1.0),
                rhs: 0.0,
                tag: format!("C8 cluster {l} rank {r}"),
            });
            let mut coef = vec![0.0; n];
            for &k in &ranks[..r] {
                coef[k] = gamma;
            }
            coef[i] = -1.0;
            let hs = c.gains[r] * scale;
            rows.push(
                Row {
                    coef,
                    rhs: -gamma * noise / hs,
                    tag: format!("C1 cluster {l} rank {r}"),
                }
                .normalized(),
            );
            if r > 0 {
                let h = h_minus(&c.gains, SicTarget::Connected(r))?;
                let mut coef = vec![0.0; n];
                for &k in &ranks[..r] {
                    coef[k] = 1.0;
                }
                coef[i] = -1.0;
                rows.push(
                    Row {
                        coef,
                        rhs: -inst.p_tol / (h * inst.p_max),
                        tag: format!("C5 cluster {l} rank {r}"),
                    }
                    .normalized(),
                );
            }
            if objective == Objective::ConnectedSum {
                let mut upto = vec![0.0; n];
                for &k in &ranks[..=r] {
                    upto[k] = hs;
                }
                terms.push(LogTerm {
                    weight: 1.0 / LN_2,
                    coef: upto,
                    offset: noise,
                });
                if r > 0 {
                    let mut before = vec![0.0; n];
                    for &k in &ranks[..r] {
                        before[k] = hs;
                    }
                    terms.push(LogTerm {
                        weight: -1.0 / LN_2,
                        coef: before,
                        offset: noise,
                    });
                }
            }
        }

        if let (Some(f), Some(hf)) = (failed, c.failed_gain) {
            rows.push(Row {
                coef: unit(f, -1.0),
                rhs: 0.0,
                tag: format!("C7 cluster {l} failed"),
            });
            let h = h_minus(&c.gains, SicTarget::Failed)?;
            let mut coef = vec![0.0; n];
            for &k in &ranks {
                coef[k] = 1.0;
            }
            coef[f] = -1.0;
            rows.push(
                Row {
                    coef,
                    rhs: -inst.p_tol / (h * inst.p_max),
                    tag: format!("C4 cluster {l} failed"),
                }
                .normalized(),
            );
            if objective == Objective::FailedSum {
                let hs = hf * scale;
                let mut interf = vec![0.0; n];
                for &k in &ranks {
                    interf[k] = hs;
                }
                let mut total = interf.clone();
                total[f] = hs;
                terms.push(LogTerm {
                    weight: 1.0 / LN_2,
                    coef: total,
                    offset: noise,
                });
                terms.push(LogTerm {
                    weight: -1.0 / LN_2,
                    coef: interf,
                    offset: noise,
                });
            }
        }

        if let Some(cap) = c.power_cap {
            let mut coef = vec![0.0; n];
            for &k in ranks.iter().chain(failed.iter()) {
                coef[k] = 1.0;
            }
            rows.push(
                Row {
                    coef,
                    rhs: cap / inst.p_max,
                    tag: format!("C10 cluster {l}"),
                }
                .normalized(),
            );
        }
    }

    rows.push(
        Row {
            coef: vec![1.0; n],
            rhs: 1.0 - inst.retained_power() / inst.p_max,
            tag: "C6 budget".into(),
        }
        .normalized(),
    );

    Ok((
        Program {
            n,
            linear: Vec::new(),
            objective: terms,
            rows,
        },
        vars,
    ))
}

/// Physical powers from normalized variables; retained clusters keep theirs.
pub fn to_allocation(inst: &CellInstance, vars: &[VarSlot], x: &[f64]) -> CellAllocation {
    let mut alloc = CellAllocation::zeros(inst);
    for (l, c) in inst.clusters.iter().enumerate() {
        if let Some(r) = &c.retained {
            alloc.connected[l].clone_from(r);
        }
    }
    for (slot, &v) in vars.iter().zip(x) {
        let p = (v * inst.p_max).max(0.0);
        match slot.kind {
            VarKind::Connected(r) => alloc.connected[slot.cluster][r] = p,
            VarKind::Failed => alloc.failed[slot.cluster] = p,
        }
    }
    alloc
}

/// Normalized variables of an allocation, in layout order.
pub fn from_allocation(inst: &CellInstance, vars: &[VarSlot], alloc: &CellAllocation) -> Vec<f64> {
    vars.iter()
        .map(|s| {
            let p = match s.kind {
                VarKind::Connected(r) => alloc.connected[s.cluster][r],
                VarKind::Failed => alloc.failed[s.cluster],
            };
            p / inst.p_max
        })
        .collect()
}
