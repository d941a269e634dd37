//! Evaluation of compensation schemes: SE averages, Jain fairness, constraint
//! violations and runtime scaling.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::association::associate;
use crate::baseline::{opt_noc, permutation_count, EnumerationBudget};
use crate::domain::{
    check_constraints, AssociationMap, CellAllocation, CellInstance, Mode, PowerSolution, Scenario,
};
use crate::solver::{
    compensate_network, no_compensation, pre_outage_network, solve_compensation, InfeasibilityCertificate, SolverConfig,
};
use crate::surrogate::SurrogateModel;
use crate::{Error, Result};

/// Jain's index over `total_users`, counting users absent from `se` as zero.
/// All-zero input yields 0.
pub fn jain_fairness(se: &[f64], total_users: usize) -> Result<f64> {
    if total_users < se.len() || total_users == 0 {
        return Err(Error::Contract(format!(
            "{} SE values for {total_users} users",
            se.len()
        )));
    }
    let sum: f64 = se.iter().sum();
    let sq: f64 = se.iter().map(|s| s * s).sum();
    if sq == 0.0 {
        return Ok(0.0);
    }
    Ok(sum * sum / (total_users as f64 * sq))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Failed users stay unserved; every cell keeps its pre-outage powers.
    NoOc,
    /// Greedy association and exact power allocation.
    LcNoc,
    /// Greedy association and surrogate power allocation.
    LcNocDnn,
    /// Exhaustive association and exact power allocation.
    OptNoc,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::Config(format!("unknown scheme {s:?}; expected no_oc, lc_noc, lc_noc_dnn or opt_noc")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ViolationStat {
    pub count: usize,
    pub max: f64,
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub pre_outage: f64,
    pub association: f64,
    pub power_allocation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scheme: Scheme,
    pub scenario_seed: u64,
    pub avg_failed_se: f64,
    /// Connected and failed users, unserved counted as zero.
    pub avg_all_se: f64,
    pub avg_connected_se: f64,
    pub jain: f64,
    /// Set when every SE is zero and Jain's index is defined as 0.
    pub jain_degenerate: bool,
    pub served_failed: usize,
    pub total_users: usize,
    /// Sum of failed-user SE.
    pub failed_objective: f64,
    pub violations: BTreeMap<String, ViolationStat>,
    /// `(s_min - SE)+ / s_min` of every connected user.
    pub min_se_errors: Vec<f64>,
    pub timing: Timing,
}

/// Everything a scheme needs besides the scenario.
#[derive(Debug, Clone, Default)]
pub struct EvalContext<'a> {
    pub mode: Mode,
    pub solver: SolverConfig,
    pub model: Option<&'a SurrogateModel>,
    pub budget: EnumerationBudget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Served failed users only.
    pub assoc: AssociationMap,
    pub solution: PowerSolution,
    /// Host cells that fell back to their pre-outage powers.
    pub infeasible: Vec<InfeasibilityCertificate>,
}

/// Relative min-SE shortfall of connected users, optionally only in
/// clusters the allocation decides (not retained).
pub fn min_se_shortfalls(inst: &CellInstance, alloc: &CellAllocation, free_only: bool) -> Vec<f64> {
    let (se, _) = inst.evaluate(alloc);
    inst.clusters
        .iter()
        .zip(se)
        .filter(|(c, _)| !free_only || c.is_free())
        .flat_map(|(_, s)| s)
        .map(|s| ((inst.s_min - s) / inst.s_min).max(0.0))
        .collect()
}

/// Runs one scheme on one scenario.
pub fn evaluate_scheme(scenario: &Scenario, scheme: Scheme, ctx: &EvalContext) -> Result<Evaluation> {
    if scheme == Scheme::LcNocDnn && ctx.model.is_none() {
        return Err(Error::Config("lc_noc_dnn needs a trained model".into()));
    }
    let mode = ctx.mode;
    let mut timing = Timing::default();
    let t = Instant::now();
    let pre = pre_outage_network(scenario, mode, &ctx.solver)?;
    timing.pre_outage = t.elapsed().as_secs_f64();

    let mut infeasible = Vec::new();
    let (assoc, solution) = match scheme {
        Scheme::NoOc => (AssociationMap::default(), no_compensation(scenario, &pre)),
        Scheme::LcNoc => {
            let t = Instant::now();
            let assoc = associate(scenario, &pre, mode)?;
            timing.association = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let net = compensate_network(scenario, &assoc, &pre, mode, &ctx.solver)?;
            timing.power_allocation = t.elapsed().as_secs_f64();
            infeasible = net.infeasible;
            (net.served, net.solution)
        }
        Scheme::LcNocDnn => {
            let model = ctx.model.expect("checked above");
            let t = Instant::now();
            let assoc = associate(scenario, &pre, mode)?;
            timing.association = t.elapsed().as_secs_f64();
            let t = Instant::now();
            let mut sol = no_compensation(scenario, &pre);
            for (ci, cell) in scenario.cells.iter().enumerate() {
                if !assoc.entries.values().any(|s| s.bs == cell.bs_id) {
                    continue;
                }
                let inst = scenario.compensation_instance(ci, &assoc, &pre[ci], mode)?;
                let alloc = model.predict(&inst)?;
                sol.objective += inst.failed_objective(&alloc);
                sol.p_connected[ci] = alloc.connected;
                sol.p_failed[ci] = alloc.failed;
            }
            timing.power_allocation = t.elapsed().as_secs_f64();
            (assoc, sol)
        }
        Scheme::OptNoc => {
            let t = Instant::now();
            let opt = opt_noc(scenario, &pre, mode, &ctx.solver, &ctx.budget)?;
            timing.power_allocation = t.elapsed().as_secs_f64();
            (opt.assoc, opt.network.solution)
        }
    };
    let report = report_for(scenario, scheme, &assoc, &solution, mode, timing)?;
    Ok(Evaluation {
        report,
        assoc,
        solution,
        infeasible,
    })
}

/// Metrics of a given association and allocation.
pub fn report_for(
    scenario: &Scenario,
    scheme: Scheme,
    assoc: &AssociationMap,
    sol: &PowerSolution,
    mode: Mode,
    timing: Timing,
) -> Result<MetricsReport> {
    let se = scenario.user_se(assoc, sol, mode);
    let all = se.all();
    let total_users = all.len();
    let failed: Vec<f64> = se.failed.values().copied().collect();
    let connected: Vec<f64> = se.connected.values().copied().collect();
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let jain = jain_fairness(&all, total_users)?;
    let mut violations: BTreeMap<String, ViolationStat> = BTreeMap::new();
    for v in check_constraints(scenario, assoc, sol, mode, 1e-6).entries {
        let e = violations.entry(v.constraint).or_default();
        e.count += 1;
        e.max = e.max.max(v.magnitude);
    }
    let s_min = scenario.params.s_min;
    Ok(MetricsReport {
        scheme,
        scenario_seed: scenario.topology.seed,
        avg_failed_se: mean(&failed),
        avg_all_se: mean(&all),
        avg_connected_se: mean(&connected),
        jain,
        jain_degenerate: all.iter().all(|&s| s == 0.0),
        served_failed: assoc.len(),
        total_users,
        failed_objective: se.failed_sum(),
        violations,
        min_se_errors: connected.iter().map(|s| ((s_min - s) / s_min).max(0.0)).collect(),
        timing,
    })
}

/// Empirical distribution of relative min-SE errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalCdf {
    /// Sorted samples.
    pub values: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Self {
        values.sort_by(f64::total_cmp);
        Self { values }
    }

    /// Fraction of samples strictly below `x`.
    pub fn fraction_below(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v < x) as f64 / self.values.len() as f64
    }

    /// Fraction of samples at or below `x`.
    pub fn at(&self, x: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.partition_point(|&v| v <= x) as f64 / self.values.len() as f64
    }

    /// `(value, cumulative fraction)` at each distinct value.
    pub fn points(&self) -> Vec<(f64, f64)> {
        let n = self.values.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &v) in self.values.iter().enumerate() {
            match out.last_mut() {
                Some(last) if last.0 == v => last.1 = (i + 1) as f64 / n,
                _ => out.push((v, (i + 1) as f64 / n)),
            }
        }
        out
    }
}

pub fn violation_cdf(reports: &[MetricsReport]) -> EmpiricalCdf {
    EmpiricalCdf::new(reports.iter().flat_map(|r| r.min_se_errors.iter().copied()).collect())
}

/// Seed-pooled summary of several reports of one scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scheme: Scheme,
    pub scenarios: usize,
    pub avg_failed_se: f64,
    pub avg_all_se: f64,
    pub avg_connected_se: f64,
    pub mean_jain: f64,
    pub served_failed: usize,
}

pub fn summarize(reports: &[MetricsReport]) -> Option<Summary> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Some(Summary {
        scheme: first.scheme,
        scenarios: reports.len(),
        avg_failed_se: mean(|r| r.avg_failed_se),
        avg_all_se: mean(|r| r.avg_all_se),
        avg_connected_se: mean(|r| r.avg_connected_se),
        mean_jain: mean(|r| r.jain),
        served_failed: reports.iter().map(|r| r.served_failed).sum(),
    })
}

/// Median wall time of `reps` runs of `f`, seconds.
pub fn median_time<T>(reps: usize, mut f: impl FnMut() -> T) -> f64 {
    let mut times: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let t = Instant::now();
            std::hint::black_box(f());
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    times[times.len() / 2]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub cells: usize,
    pub clusters: usize,
    pub failed: usize,
    /// Median seconds for the greedy association alone.
    pub association: f64,
    /// Cells serving at least one failed user.
    pub hosts: usize,
    /// Median seconds of exact power allocation, per host cell.
    pub solver: f64,
    /// Median seconds of surrogate allocation, per host cell.
    pub dnn: Option<f64>,
    /// Number of associations the exhaustive baseline visits.
    pub opt_associations: u64,
    /// Exhaustive time, measured when within budget, otherwise the count
    /// times the mean per-association time.
    pub opt_seconds: f64,
    pub opt_extrapolated: bool,
}

/// Times every stage on one seeded scenario per size.
pub fn runtime_bench(
    scenarios: &[Scenario],
    reps: usize,
    ctx: &EvalContext,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(scenarios.len());
    for sc in scenarios {
        let pre = pre_outage_network(sc, ctx.mode, &ctx.solver)?;
        let assoc = associate(sc, &pre, ctx.mode)?;
        let association = median_time(reps, || associate(sc, &pre, ctx.mode));
        let hosts: Vec<CellInstance> = sc
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| assoc.entries.values().any(|s| s.bs == c.bs_id))
            .map(|(ci, _)| sc.compensation_instance(ci, &assoc, &pre[ci], ctx.mode))
            .collect::<Result<_>>()?;
        let per_host = hosts.len().max(1) as f64;
        let solver = median_time(reps, || {
            hosts.iter().filter(|i| solve_compensation(i, &ctx.solver).is_ok()).count()
        }) / per_host;
        let dnn = ctx
            .model
            .map(|m| median_time(reps, || hosts.iter().filter(|i| m.predict(i).is_ok()).count()) / per_host);
        let count = permutation_count(sc.total_clusters(), sc.failed_users().len());
        let t = Instant::now();
        let (opt_seconds, opt_extrapolated) = match opt_noc(sc, &pre, ctx.mode, &ctx.solver, &ctx.budget) {
            Ok(_) => (t.elapsed().as_secs_f64(), false),
            Err(Error::BudgetExceeded { completed, .. }) if completed > 0 => {
                (t.elapsed().as_secs_f64() / completed as f64 * count as f64, true)
            }
            Err(Error::BudgetExceeded { .. }) => (solver * per_host * count as f64, true),
            Err(e) => return Err(e),
        };
        rows.push(BenchRow {
            cells: sc.cells.len(),
            clusters: sc.total_clusters(),
            failed: sc.failed_users().len(),
            hosts: hosts.len(),
            association,
            solver,
            dnn,
            opt_associations: count,
            opt_seconds,
            opt_extrapolated,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::ScenarioConfig;

    #[test]
    fn jain_examples() {
        assert_eq!(jain_fairness(&[4.0; 4], 4).unwrap(), 1.0);
        assert_eq!(jain_fairness(&[4.0, 0.0], 2).unwrap(), 0.5);
        assert_eq!(jain_fairness(&[4.0], 2).unwrap(), 0.5);
        let j = jain_fairness(&[3.0; 8], 10).unwrap();
        assert!((j - 0.8).abs() < 1e-12);
        assert_eq!(jain_fairness(&[0.0, 0.0], 2).unwrap(), 0.0);
        assert!(jain_fairness(&[1.0; 3], 2).is_err());
    }

    #[test]
    fn cdf_examples() {
        let c = EmpiricalCdf::new(vec![0.0; 5]);
        assert_eq!(c.at(1e-6), 1.0);
        let c = EmpiricalCdf::new(vec![1.0; 3]);
        assert_eq!(c.fraction_below(1.0), 0.0);
        assert_eq!(c.at(1.0), 1.0);
        let c = EmpiricalCdf::new(vec![0.3, 0.0, 0.02, 0.0]);
        assert_eq!(c.fraction_below(0.01), 0.5);
        assert_eq!(c.points(), vec![(0.0, 0.5), (0.02, 0.75), (0.3, 1.0)]);
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("lc_noc".parse::<Scheme>().unwrap(), Scheme::LcNoc);
        assert_eq!("OPT_NOC".parse::<Scheme>().unwrap(), Scheme::OptNoc);
        assert!("best".parse::<Scheme>().is_err());
    }

    #[test]
    fn no_oc_vs_lc_noc() {
        let sc = ScenarioConfig::new(3, 4, 3).build(2).unwrap();
        let ctx = EvalContext::default();
        let no = evaluate_scheme(&sc, Scheme::NoOc, &ctx).unwrap().report;
        let lc = evaluate_scheme(&sc, Scheme::LcNoc, &ctx).unwrap().report;
        let opt = evaluate_scheme(&sc, Scheme::OptNoc, &ctx).unwrap().report;
        assert_eq!(no.avg_failed_se, 0.0);
        assert_eq!(no.violations["C3"].count, 3);
        assert!(lc.jain > no.jain);
        assert_eq!(lc.served_failed, 3);
        assert!(lc.violations.is_empty(), "{:?}", lc.violations);
        assert!(opt.failed_objective >= lc.failed_objective - 1e-6);
        assert!(no.min_se_errors.iter().all(|&e| e == 0.0));
        assert!(matches!(
            evaluate_scheme(&sc, Scheme::LcNocDnn, &ctx),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 2.0, 4.0, 8.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(1.5)).collect();
        assert!((log_log_slope(&x, &y) - 1.5).abs() < 1e-12);
    }
}
