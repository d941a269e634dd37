use std::sync::OnceLock;

use proptest::prelude::*;

use noma_coc::association::{associate, prop1_powers, prop2_powers};
use noma_coc::dataset::{generate_dataset, DatasetConfig};
use noma_coc::domain::{CellAllocation, CellInstance, ClusterSpec, Mode, ScenarioConfig, SystemParams};
use noma_coc::metrics::jain_fairness;
use noma_coc::solver::{pre_outage_network, SolverConfig};
use noma_coc::surrogate::{train, LabeledSample, SurrogateModel, TrainConfig};
use noma_coc::units::{dbm_to_linear, linear_to_dbm, PowerDbm};

fn sorted_gains(raw: Vec<f64>) -> Vec<f64> {
    let mut g: Vec<f64> = raw.into_iter().map(|e| 10f64.powf(e)).collect();
    g.sort_by(|a, b| b.total_cmp(a));
    g
}

/// Increasing chain of pre-outage powers that satisfies the SIC gaps.
fn chain(first: f64, ratios: &[f64]) -> Vec<f64> {
    let mut p = vec![first];
    for r in ratios {
        let s: f64 = p.iter().sum();
        p.push(s * r);
    }
    p
}

fn small_model() -> &'static (SurrogateModel, Vec<LabeledSample>) {
    static MODEL: OnceLock<(SurrogateModel, Vec<LabeledSample>)> = OnceLock::new();
    MODEL.get_or_init(|| {
        let cfg = DatasetConfig {
            scenario: ScenarioConfig::new(3, 4, 3),
            mode: Mode::Isolated,
            solver: SolverConfig::default(),
        };
        let (samples, _) = generate_dataset(&cfg, 24, 11).unwrap();
        let tc = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (model, _) = train(&samples[..18], &samples[18..], &tc).unwrap();
        (model, samples)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dbm_round_trip(dbm in -200.0f64..80.0) {
        let back = linear_to_dbm(dbm_to_linear(PowerDbm(dbm)));
        prop_assert!((back.0 - dbm).abs() <= 1e-9);
        prop_assert!(dbm_to_linear(PowerDbm(dbm)).mw() >= 0.0);
    }

    #[test]
    fn pre_outage_objective_is_concave(
        exps in prop::collection::vec(-12.0f64..-8.0, 2..5),
        a in prop::collection::vec(0.0f64..1000.0, 4),
        b in prop::collection::vec(0.0f64..1000.0, 4),
    ) {
        let gains = sorted_gains(exps);
        let n = gains.len();
        let params = SystemParams::default();
        let inst = CellInstance::new(1, vec![ClusterSpec::connected(gains)], &params);
        let value = |p: &[f64]| {
            let mut alloc = CellAllocation::zeros(&inst);
            alloc.connected[0].copy_from_slice(&p[..n]);
            inst.connected_objective(&alloc)
        };
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let (fa, fb, fm) = (value(&a), value(&b), value(&mid));
        prop_assert!(fm >= 0.5 * (fa + fb) - 1e-9 * fm.abs().max(1.0));
    }

    #[test]
    fn association_is_injective_and_total(cells in 2usize..4, half in 2usize..5, failed in 1usize..5, seed in 0u64..1000) {
        let users = 2 * half;
        let failed = failed.min(cells * half);
        let sc = ScenarioConfig::new(cells, users, failed).build(seed).unwrap();
        let pre = pre_outage_network(&sc, Mode::Isolated, &SolverConfig::default()).unwrap();
        let assoc = associate(&sc, &pre, Mode::Isolated).unwrap();
        prop_assert!(assoc.is_injective());
        prop_assert_eq!(assoc.len(), failed);
        for u in sc.failed_users() {
            prop_assert!(assoc.get(u).is_some());
        }
    }

    #[test]
    fn released_budget_shrinks_as_target_grows(
        exps in prop::collection::vec(-11.0f64..-8.0, 2..5),
        first in 1.0f64..100.0,
        ratios in prop::collection::vec(1.1f64..4.0, 4),
        s_lo in 0.5f64..8.0,
        extra in 0.0f64..4.0,
    ) {
        let gains = sorted_gains(exps);
        let pre = chain(first, &ratios[..gains.len() - 1]);
        let total: f64 = pre.iter().sum();
        let (sigma2, s_hi) = (1e-15, s_lo + extra);
        let (_, lo) = prop1_powers(&gains, &pre, sigma2, s_lo, 0.0).unwrap();
        let (_, hi) = prop1_powers(&gains, &pre, sigma2, s_hi, 0.0).unwrap();
        prop_assert!(total - lo.iter().sum::<f64>() >= total - hi.iter().sum::<f64>() - 1e-12 * total);
        let lo = prop2_powers(&gains, &pre, sigma2, s_lo, 0.0).unwrap();
        let hi = prop2_powers(&gains, &pre, sigma2, s_hi, 0.0).unwrap();
        prop_assert!(total - lo.iter().sum::<f64>() >= total - hi.iter().sum::<f64>() - 1e-12 * total);
    }

    #[test]
    fn jain_index_in_range(se in prop::collection::vec(0.0f64..30.0, 1..40), zeros in 0usize..10) {
        prop_assume!(se.iter().any(|&s| s > 0.0));
        let n = se.len() + zeros;
        let j = jain_fairness(&se, n).unwrap();
        prop_assert!(j >= 1.0 / n as f64 - 1e-12 && j <= 1.0 + 1e-12);
    }

    #[test]
    fn decoded_powers_respect_budget(pick in 0usize..24, raw in prop::collection::vec(-40.0f64..40.0, 64)) {
        let (model, samples) = small_model();
        let inst = &samples[pick].meta.instance;
        let out: Vec<f64> = raw.iter().cycle().take(model.width()).copied().collect();
        let alloc = model.decode(&out, inst);
        prop_assert!(alloc.connected.iter().flatten().chain(&alloc.failed).all(|&p| p >= 0.0 && p.is_finite()));
        prop_assert!(alloc.total() <= inst.p_max * (1.0 + 1e-12));
    }
}
