//! Log-barrier interior point method for
//! `maximize l . x + sum_j w_j ln(c_j . x + d_j)  s.t.  A x <= b`.
//!
//! The objective need not be concave; the Newton system is regularized
//! until it is positive definite.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::SolverConfig;

/// `weight * ln(coef . x + offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTerm {
    pub weight: f64,
    pub coef: Vec<f64>,
    pub offset: f64,
}

/// `coef . x <= rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coef: Vec<f64>,
    pub rhs: f64,
    pub tag: String,
}

impl Row {
    pub fn slack(&self, x: &[f64]) -> f64 {
        self.rhs - dot(&self.coef, x)
    }

    /// Scales the row to unit Euclidean norm.
    pub fn normalized(mut self) -> Self {
        let n = self.coef.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 0.0 {
            self.coef.iter_mut().for_each(|a| *a /= n);
            self.rhs /= n;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub n: usize,
    /// Linear part of the objective; empty means zero.
    pub linear: Vec<f64>,
    pub objective: Vec<LogTerm>,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TraceRecord {
    pub phase: u8,
    pub outer: usize,
    pub newton: usize,
    pub t: f64,
    pub objective: f64,
    pub decrement: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct SolveStats {
    pub converged: bool,
    /// Duality gap bound `m / t` at exit.
    pub gap: f64,
    pub newton_iters: usize,
    pub outer_iters: usize,
    pub phase1_iters: usize,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Program {
    pub fn objective_value(&self, x: &[f64]) -> f64 {
        dot(&self.linear, x)
            + self
                .objective
                .iter()
                .map(|t| t.weight * (dot(&t.coef, x) + t.offset).ln())
                .sum::<f64>()
    }

    pub fn strictly_feasible(&self, x: &[f64]) -> bool {
        self.rows.iter().all(|r| r.slack(x) > 0.0)
            && self.objective.iter().all(|t| dot(&t.coef, x) + t.offset > 0.0)
    }

    /// `-t f(x) - sum ln(slack)`; infinite outside the domain.
    pub fn barrier_value(&self, x: &[f64], t: f64) -> f64 {
        let mut v = -t * dot(&self.linear, x);
        for r in &self.rows {
            let s = r.slack(x);
            if !(s > 0.0) {
                return f64::INFINITY;
            }
            v -= s.ln();
        }
        for term in &self.objective {
            let g = dot(&term.coef, x) + term.offset;
            if !(g > 0.0) {
                return f64::INFINITY;
            }
            v -= t * term.weight * g.ln();
        }
        v
    }

    pub fn barrier_gradient(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut grad = vec![0.0; self.n];
        for (g, l) in grad.iter_mut().zip(&self.linear) {
            *g -= t * l;
        }
        for r in &self.rows {
            let inv = 1.0 / r.slack(x);
            for (g, a) in grad.iter_mut().zip(&r.coef) {
                *g += a * inv;
            }
        }
        for term in &self.objective {
            let scale = -t * term.weight / (dot(&term.coef, x) + term.offset);
            for (g, c) in grad.iter_mut().zip(&term.coef) {
                *g += c * scale;
            }
        }
        grad
    }

    /// Barrier Hessian split into its barrier part (PSD) and objective part.
    fn barrier_hessian(&self, x: &[f64], t: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = self.n;
        let mut hb = DMatrix::zeros(n, n);
        for r in &self.rows {
            let inv = 1.0 / r.slack(x);
            let a = DVector::from_column_slice(&r.coef) * inv;
            hb.ger(1.0, &a, &a, 1.0);
        }
        let mut ho = DMatrix::zeros(n, n);
        for term in &self.objective {
            let g = dot(&term.coef, x) + term.offset;
            let c = DVector::from_column_slice(&term.coef);
            ho.ger(t * term.weight / (g * g), &c, &c, 1.0);
        }
        (hb, ho)
    }

    /// Regularized, Jacobi-scaled Newton direction.
    fn newton_direction(&self, x: &[f64], t: f64, grad: &[f64]) -> Option<Vec<f64>> {
        let (hb, ho) = self.barrier_hessian(x, t);
        let h = &hb + &ho;
        let n = self.n;
        let d: Vec<f64> = (0..n)
            .map(|i| {
                let v = hb[(i, i)] + ho[(i, i)].abs();
                if v > 0.0 {
                    1.0 / v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut m = h.clone();
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] *= d[i] * d[j];
            }
        }
        let rhs = DVector::from_iterator(n, (0..n).map(|i| -grad[i] * d[i]));
        let mut tau = 0.0;
        for _ in 0..40 {
            let mut reg = m.clone();
            for i in 0..n {
                reg[(i, i)] += tau;
            }
            if let Some(ch) = reg.cholesky() {
                let y = ch.solve(&rhs);
                if y.iter().all(|v| v.is_finite()) {
                    return Some((0..n).map(|i| y[i] * d[i]).collect());
                }
            }
            tau = if tau == 0.0 { 1e-10 } else { tau * 10.0 };
        }
        None
    }

    /// Largest step keeping every row strictly feasible.
    fn max_step(&self, x: &[f64], dx: &[f64]) -> f64 {
        let mut step = f64::INFINITY;
        for r in &self.rows {
            let ad = dot(&r.coef, dx);
            if ad > 0.0 {
                step = step.min(r.slack(x) / ad);
            }
        }
        step
    }

    /// Minimizes the barrier at fixed `t` starting from a strictly feasible
    /// point. Returns the Newton iteration count, or `None` if the budget ran out.
    #[allow(clippy::too_many_arguments)]
    fn center(
        &self,
        x: &mut Vec<f64>,
        t: f64,
        cfg: &SolverConfig,
        budget: &mut usize,
        phase: u8,
        outer: usize,
        trace: &mut Option<Vec<TraceRecord>>,
        stop: &dyn Fn(&[f64]) -> bool,
    ) -> Option<usize> {
        let mut iters = 0;
        loop {
            if stop(x) {
                return Some(iters);
            }
            if *budget == 0 {
                return None;
            }
            let grad = self.barrier_gradient(x, t);
            let Some(dx) = self.newton_direction(x, t, &grad) else {
                return Some(iters);
            };
            let slope = dot(&grad, &dx);
            let decrement = -slope;
            if decrement / 2.0 <= cfg.newton_tol || !(decrement > 0.0) {
                return Some(iters);
            }
            let mut step = (0.99 * self.max_step(x, &dx)).min(1.0);
            let f0 = self.barrier_value(x, t);
            let mut trial: Vec<f64>;
            loop {
                trial = x.iter().zip(&dx).map(|(a, b)| a + step * b).collect();
                let f1 = self.barrier_value(&trial, t);
                if f1 <= f0 + cfg.alpha * step * slope {
                    break;
                }
                step *= cfg.beta;
                if step < 1e-16 {
                    return Some(iters);
                }
            }
            *x = trial;
            iters += 1;
            *budget -= 1;
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceRecord {
                    phase,
                    outer,
                    newton: iters,
                    t,
                    objective: self.objective_value(x),
                    decrement,
                    step,
                });
            }
        }
    }

    /// Barrier path from a strictly feasible `x0`.
    pub fn maximize(
        &self,
        x0: Vec<f64>,
        cfg: &SolverConfig,
        trace: &mut Option<Vec<TraceRecord>>,
    ) -> (Vec<f64>, SolveStats) {
        let m = self.rows.len().max(1) as f64;
        let mut x = x0;
        let mut t = cfg.t0;
        let mut budget = cfg.max_iter;
        let mut stats = SolveStats::default();
        loop {
            match self.center(&mut x, t, cfg, &mut budget, 2, stats.outer_iters, trace, &|_| false) {
                Some(k) => stats.newton_iters += k,
                None => {
                    stats.gap = m / t;
                    return (x, stats);
                }
            }
            stats.outer_iters += 1;
            if m / t < cfg.outer_tol {
                stats.converged = true;
                stats.gap = m / t;
                return (x, stats);
            }
            t *= cfg.mu;
        }
    }
}

/// Outcome of the feasibility search.
#[derive(Debug, Clone)]
pub enum PhaseOne {
    Feasible(Vec<f64>, usize),
    /// Minimal achievable max-violation, its point and the rows attaining it.
    Infeasible {
        violation: f64,
        binding: Vec<String>,
        iters: usize,
    },
}

/// Minimizes `s` subject to `A x - b <= s` and `s >= -1`, stopping at the
/// first centered iterate with `s < 0`.
pub fn phase_one(prog: &Program, x0: &[f64], cfg: &SolverConfig, trace: &mut Option<Vec<TraceRecord>>) -> PhaseOne {
    let n = prog.n;
    if prog.rows.iter().all(|r| r.slack(x0) > 0.0) {
        return PhaseOne::Feasible(x0.to_vec(), 0);
    }
    let mut rows: Vec<Row> = prog
        .rows
        .iter()
        .map(|r| {
            let mut coef = r.coef.clone();
            coef.push(-1.0);
            Row {
                coef,
                rhs: r.rhs,
                tag: r.tag.clone(),
            }
        })
        .collect();
    let mut floor = vec![0.0; n + 1];
    floor[n] = -1.0;
    rows.push(Row {
        coef: floor,
        rhs: 1.0,
        tag: "phase1 floor".into(),
    });
    let mut linear = vec![0.0; n + 1];
    linear[n] = -1.0;
    let aux = Program {
        n: n + 1,
        linear,
        objective: Vec::new(),
        rows,
    };
    let s0 = prog.rows.iter().map(|r| -r.slack(x0)).fold(f64::NEG_INFINITY, f64::max);
    let mut z: Vec<f64> = x0.to_vec();
    z.push(s0.max(0.0) + 1.0);

    let m = aux.rows.len() as f64;
    let mut t = cfg.t0;
    let mut budget = cfg.max_iter;
    let mut iters = 0;
    let stop = |z: &[f64]| z[n] < 0.0;
    let mut outer = 0;
    loop {
        let done = aux.center(&mut z, t, cfg, &mut budget, 1, outer, trace, &stop);
        outer += 1;
        match done {
            Some(k) => iters += k,
            None => break,
        }
        if z[n] < 0.0 {
            let x = z[..n].to_vec();
            if prog.rows.iter().all(|r| r.slack(&x) > 0.0) {
                return PhaseOne::Feasible(x, iters);
            }
        }
        if m / t < cfg.outer_tol {
            break;
        }
        t *= cfg.mu;
    }
    let x = &z[..n];
    let worst = prog.rows.iter().map(|r| -r.slack(x)).fold(f64::NEG_INFINITY, f64::max);
    let band = 1e-6 * worst.abs().max(1.0);
    let binding = prog
        .rows
        .iter()
        .filter(|r| -r.slack(x) >= worst - band)
        .map(|r| r.tag.clone())
        .collect();
    PhaseOne::Infeasible {
        violation: worst.max(0.0),
        binding,
        iters,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> SolverConfig {
        SolverConfig::default()
    }

    fn row(coef: &[f64], rhs: f64) -> Row {
        Row {
            coef: coef.to_vec(),
            rhs,
            tag: String::new(),
        }
    }

    #[test]
    fn maximizes_concave_log_over_box() {
        // max ln(x+1) + ln(y+1)  s.t. x + y <= 2, x, y >= 0  ->  (1, 1)
        let prog = Program {
            n: 2,
            linear: vec![],
            objective: vec![
                LogTerm {
                    weight: 1.0,
                    coef: vec![1.0, 0.0],
                    offset: 1.0,
                },
                LogTerm {
                    weight: 1.0,
                    coef: vec![0.0, 1.0],
                    offset: 1.0,
                },
            ],
            rows: vec![row(&[1.0, 1.0], 2.0), row(&[-1.0, 0.0], 0.0), row(&[0.0, -1.0], 0.0)],
        };
        let (x, stats) = prog.maximize(vec![0.5, 0.5], &cfg(), &mut None);
        assert!(stats.converged);
        assert!((x[0] - 1.0).abs() < 1e-6 && (x[1] - 1.0).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn phase_one_finds_interior_or_certifies() {
        let prog = Program {
            n: 1,
            linear: vec![],
            objective: vec![],
            rows: vec![row(&[1.0], 3.0), row(&[-1.0], -2.0)],
        };
        match phase_one(&prog, &[0.0], &cfg(), &mut None) {
            PhaseOne::Feasible(x, _) => assert!(x[0] > 2.0 && x[0] < 3.0),
            other => panic!("{other:?}"),
        }
        let bad = Program {
            n: 1,
            linear: vec![],
            objective: vec![],
            rows: vec![
                Row {
                    coef: vec![1.0],
                    rhs: 1.0,
                    tag: "upper".into(),
                },
                Row {
                    coef: vec![-1.0],
                    rhs: -2.0,
                    tag: "lower".into(),
                },
            ],
        };
        match phase_one(&bad, &[0.0], &cfg(), &mut None) {
            PhaseOne::Infeasible { violation, binding, .. } => {
                assert!((violation - 0.5).abs() < 1e-4, "{violation}");
                assert_eq!(binding, vec!["upper".to_string(), "lower".to_string()]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let prog = Program {
            n: 2,
            linear: vec![],
            objective: vec![
                LogTerm {
                    weight: 1.3,
                    coef: vec![2.0, 0.5],
                    offset: 1.0,
                },
                LogTerm {
                    weight: -0.7,
                    coef: vec![0.0, 3.0],
                    offset: 0.5,
                },
            ],
            rows: vec![row(&[1.0, 1.0], 2.0), row(&[-1.0, 0.0], 0.0), row(&[0.0, -1.0], 0.0)],
        };
        let x = [0.4, 0.7];
        let g = prog.barrier_gradient(&x, 3.0);
        for i in 0..2 {
            let h = 1e-6;
            let mut a = x;
            let mut b = x;
            a[i] += h;
            b[i] -= h;
            let fd = (prog.barrier_value(&a, 3.0) - prog.barrier_value(&b, 3.0)) / (2.0 * h);
            assert!((fd - g[i]).abs() / g[i].abs().max(1e-8) < 1e-6, "{fd} vs {}", g[i]);
        }
    }
}
