//! Labeled corpora: generation from seeded scenarios, splitting and JSONL IO.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::association::associate;
use crate::domain::{Mode, ScenarioConfig, Violation};
use crate::solver::{pre_outage_network, solve_compensation, SolverConfig};
use crate::surrogate::{layout_allocation, LabeledSample};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub solver: SolverConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub scenarios: u64,
    pub infeasible_scenarios: u64,
    pub samples: u64,
    /// First few reasons scenarios were dropped.
    pub diagnostics: Vec<String>,
}

/// Scenarios below this count never trigger the infeasibility-rate check.
const MIN_SCENARIOS_FOR_RATE: u64 = 20;

enum Outcome {
    Samples(Vec<LabeledSample>),
    Infeasible(String),
}

fn scenario_samples(cfg: &DatasetConfig, seed: u64) -> Result<Outcome> {
    let scenario = cfg.scenario.build(seed)?;
    let pre = match pre_outage_network(&scenario, cfg.mode, &cfg.solver) {
        Ok(p) => p,
        Err(Error::Infeasible(c)) => return Ok(Outcome::Infeasible(format!("seed {seed}: pre-outage BS {}", c.bs_id))),
        Err(e) => return Err(e),
    };
    let assoc = associate(&scenario, &pre, cfg.mode)?;
    let mut out = Vec::new();
    for (ci, cell) in scenario.cells.iter().enumerate() {
        if !assoc.entries.values().any(|s| s.bs == cell.bs_id) {
            continue;
        }
        let inst = scenario.compensation_instance(ci, &assoc, &pre[ci], cfg.mode)?;
        let sol = match solve_compensation(&inst, &cfg.solver) {
            Ok(s) => s,
            Err(Error::Infeasible(_)) => {
                return Ok(Outcome::Infeasible(format!("seed {seed}: compensation BS {}", cell.bs_id)))
            }
            Err(e) => return Err(e),
        };
        out.push(LabeledSample::from_solution(
            0,
            seed,
            scenario.params.cluster_size,
            &inst,
            &sol.alloc,
            sol.objective,
            cfg.mode,
        )?);
    }
    Ok(Outcome::Samples(out))
}

/// One sample per compensating BS that hosts a failed user, scenario `i`
/// drawn with seed `seed + i`, until `n_samples` are collected. Scenarios
/// with an infeasible BS are skipped and counted.
pub fn generate_dataset(cfg: &DatasetConfig, n_samples: usize, seed: u64) -> Result<(Vec<LabeledSample>, DatasetStats)> {
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    cfg.solver.validate()?;
    let mut stats = DatasetStats::default();
    let mut samples: Vec<LabeledSample> = Vec::with_capacity(n_samples);
    let chunk = (rayon::current_num_threads() * 16).max(16) as u64;
    let mut next = 0u64;
    while samples.len() < n_samples {
        let outcomes: Vec<Result<Outcome>> = (next..next + chunk)
            .into_par_iter()
            .map(|i| scenario_samples(cfg, seed.wrapping_add(i)))
            .collect();
        next += chunk;
        for o in outcomes {
            if samples.len() >= n_samples {
                break;
            }
            stats.scenarios += 1;
            match o? {
                Outcome::Samples(s) => samples.extend(s),
                Outcome::Infeasible(why) => {
                    stats.infeasible_scenarios += 1;
                    if stats.diagnostics.len() < 10 {
                        stats.diagnostics.push(why);
                    }
                }
            }
        }
        if stats.scenarios >= MIN_SCENARIOS_FOR_RATE && 2 * stats.infeasible_scenarios > stats.scenarios {
            return Err(Error::Config(format!(
                "{} of {} scenarios infeasible; {}",
                stats.infeasible_scenarios,
                stats.scenarios,
                stats.diagnostics.join("; ")
            )));
        }
    }
    samples.truncate(n_samples);
    for (i, s) in samples.iter_mut().enumerate() {
        s.id = i as u64;
    }
    stats.samples = samples.len() as u64;
    Ok((samples, stats))
}

/// Re-checks every target against its instance.
pub fn audit(samples: &[LabeledSample], tol: f64) -> Vec<(u64, Vec<Violation>)> {
    samples
        .iter()
        .filter_map(|s| {
            let inst = &s.meta.instance;
            let v = inst.check(&layout_allocation(inst, &s.powers, s.q), tol);
            (!v.is_empty()).then_some((s.id, v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub val: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded shuffle, then contiguous blocks of rounded sizes; the test block
/// takes the remainder.
pub fn split<T: Clone>(items: &[T], ratios: [f64; 3], seed: u64) -> Result<Split<T>> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("split ratios {ratios:?} must be nonnegative and sum to 1")));
    }
    let n = items.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = ((ratios[0] * n as f64).round() as usize).min(n);
    let n_val = ((ratios[1] * n as f64).round() as usize).min(n - n_train);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok(Split {
        train: pick(&order[..n_train]),
        val: pick(&order[n_train..n_train + n_val]),
        test: pick(&order[n_train + n_val..]),
    })
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("{}:{}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}
