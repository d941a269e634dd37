//! Neural surrogate for the per-BS compensation power allocation.

mod io;
mod layout;
mod net;

pub use io::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use layout::{
    allocation_layout, augment_permutations, build_input, instance_layout, layout_allocation, LabeledSample,
    SampleMeta,
};
pub use net::{mse_loss, ForwardCache, Layer, Nadam, Network, Normalization};

use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{CellAllocation, CellInstance};
use crate::{Error, Result};

/// Smallest power mapped to the log domain, mW.
const POWER_FLOOR: f64 = 1e-30;

/// How the configured decay rate is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayMode {
    /// First-moment decay of Nadam.
    #[default]
    Beta1,
    /// Per-epoch learning-rate multiplier; Nadam keeps beta1 = 0.9.
    LearningRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub decay_rate: f64,
    #[serde(default)]
    pub decay_mode: DecayMode,
    pub epochs: usize,
    pub seed: u64,
    pub hidden: Vec<usize>,
    /// Permuted copies added per training sample.
    #[serde(default)]
    pub augment: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            learning_rate: 5e-4,
            decay_rate: 0.9,
            decay_mode: DecayMode::Beta1,
            epochs: 100,
            seed: 0,
            hidden: vec![200, 200, 200],
            augment: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !(self.decay_rate > 0.0 && self.decay_rate < 1.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive and decay in (0, 1), got {} and {}",
                self.learning_rate, self.decay_rate
            )));
        }
        if self.hidden.contains(&0) {
            return Err(Error::Config("hidden layers must be non-empty".into()));
        }
        if self.augment > 8 {
            return Err(Error::Config(format!("augmentation factor {} exceeds 8", self.augment)));
        }
        Ok(())
    }

    fn beta1(&self) -> f64 {
        match self.decay_mode {
            DecayMode::Beta1 => self.decay_rate,
            DecayMode::LearningRate => 0.9,
        }
    }

    fn epoch_lr(&self, epoch: usize) -> f64 {
        match self.decay_mode {
            DecayMode::Beta1 => self.learning_rate,
            DecayMode::LearningRate => self.learning_rate * self.decay_rate.powi(epoch as i32),
        }
    }
}

/// Trained network plus the layout and scaling it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub q: usize,
    pub l_max: usize,
    pub net: Network,
    pub norm: Normalization,
    pub config: TrainConfig,
}

impl SurrogateModel {
    pub fn width(&self) -> usize {
        (self.q + 1) * self.l_max
    }

    /// Standardized network input; absent entries take the pad value.
    pub fn encode(&self, log_gains: &[Vec<Option<f64>>]) -> Vec<f64> {
        encode(&self.norm, log_gains, self.q, self.l_max)
    }

    /// Network output mapped back to powers and projected onto the budget.
    ///
    /// Retained clusters take their fixed powers; the remaining entries are
    /// clamped at zero and scaled down uniformly if they exceed what is left
    /// of `p_max`.
    pub fn decode(&self, output: &[f64], inst: &CellInstance) -> CellAllocation {
        let l_max = self.l_max;
        let mut p = vec![vec![0.0; l_max]; self.q + 1];
        for (r, row) in p.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                let k = r * l_max + c;
                *v = 10f64.powf(output[k] * self.norm.output_std[k] + self.norm.output_mean[k]).max(0.0);
            }
        }
        let mut alloc = layout_allocation(inst, &p, self.q);
        let mut free = 0.0;
        for (l, c) in inst.clusters.iter().enumerate() {
            match &c.retained {
                Some(r) => alloc.connected[l].clone_from(r),
                None => free += alloc.connected[l].iter().sum::<f64>() + alloc.failed[l],
            }
        }
        let room = (inst.p_max - inst.retained_power()).max(0.0);
        if free > room {
            let s = room / free;
            for (l, c) in inst.clusters.iter().enumerate() {
                if c.is_free() {
                    alloc.connected[l].iter_mut().for_each(|v| *v *= s);
                    alloc.failed[l] *= s;
                }
            }
        }
        alloc
    }

    pub fn predict(&self, inst: &CellInstance) -> Result<CellAllocation> {
        let x = self.encode(&instance_layout(inst, self.q, self.l_max)?);
        let y = self.net.forward(Array2::from_shape_vec((1, x.len()), x).expect("width").view());
        Ok(self.decode(y.row(0).as_slice().expect("contiguous"), inst))
    }

    /// Standardized log-power target of a sample, zero where no user sits.
    pub fn target(&self, sample: &LabeledSample) -> Vec<f64> {
        target(&self.norm, sample, self.l_max)
    }
}

fn encode(norm: &Normalization, log_gains: &[Vec<Option<f64>>], q: usize, l_max: usize) -> Vec<f64> {
    let mut x = vec![norm.pad; (q + 1) * l_max];
    for (r, row) in log_gains.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = v {
                let k = r * l_max + c;
                x[k] = (v - norm.input_mean[k]) / norm.input_std[k];
            }
        }
    }
    x
}

fn target(norm: &Normalization, sample: &LabeledSample, l_max: usize) -> Vec<f64> {
    let mut t = vec![0.0; norm.output_mean.len()];
    for (r, row) in sample.log_gains.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if v.is_some() {
                let k = r * l_max + c;
                t[k] = (sample.powers[r][c].max(POWER_FLOOR).log10() - norm.output_mean[k]) / norm.output_std[k];
            }
        }
    }
    t
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 1.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

/// Per-feature statistics of present entries; pad is one below the smallest
/// standardized input.
pub fn fit_normalization(samples: &[LabeledSample], q: usize, l_max: usize) -> Normalization {
    let width = (q + 1) * l_max;
    let mut gains = vec![Vec::new(); width];
    let mut powers = vec![Vec::new(); width];
    for s in samples {
        for (r, row) in s.log_gains.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                if let Some(v) = v {
                    gains[r * l_max + c].push(*v);
                    powers[r * l_max + c].push(s.powers[r][c].max(POWER_FLOOR).log10());
                }
            }
        }
    }
    let (input_mean, input_std): (Vec<f64>, Vec<f64>) = gains.iter().map(|g| mean_std(g)).unzip();
    let (output_mean, output_std): (Vec<f64>, Vec<f64>) = powers.iter().map(|p| mean_std(p)).unzip();
    let mut lowest = f64::INFINITY;
    for (k, g) in gains.iter().enumerate() {
        for v in g {
            lowest = lowest.min((v - input_mean[k]) / input_std[k]);
        }
    }
    Normalization {
        input_mean,
        input_std,
        pad: if lowest.is_finite() { lowest - 1.0 } else { -1.0 },
        output_mean,
        output_std,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    /// Zero-based epoch of the returned checkpoint.
    pub best_epoch: usize,
    pub train_samples: usize,
    pub seconds: f64,
}

fn matrices(model: &SurrogateModel, samples: &[LabeledSample]) -> (Array2<f64>, Array2<f64>) {
    let w = model.width();
    let mut x = Array2::zeros((samples.len(), w));
    let mut t = Array2::zeros((samples.len(), w));
    for (i, s) in samples.iter().enumerate() {
        x.row_mut(i).assign(&ndarray::ArrayView1::from(&model.encode(&s.log_gains)));
        t.row_mut(i).assign(&ndarray::ArrayView1::from(&model.target(s)));
    }
    (x, t)
}

/// Mean squared error of the model over samples, in the standardized domain.
pub fn evaluate_loss(model: &SurrogateModel, samples: &[LabeledSample]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let (x, t) = matrices(model, samples);
    mse_loss(model.net.forward(x.view()).view(), t.view())
}

/// Mini-batch Nadam on `train`, keeping the checkpoint with the lowest
/// validation loss. Augmented copies are added to `train` only.
pub fn train(train: &[LabeledSample], val: &[LabeledSample], cfg: &TrainConfig) -> Result<(SurrogateModel, TrainReport)> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty splits, got {} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    let start = Instant::now();
    let q = train[0].q;
    if train.iter().chain(val).any(|s| s.q != q) {
        return Err(Error::Config("samples mix different cluster sizes".into()));
    }
    let l_max = train.iter().chain(val).map(|s| s.clusters).max().unwrap_or(0);

    let mut pool = train.to_vec();
    if cfg.augment > 0 {
        let mut next_id = train.iter().chain(val).map(|s| s.id).max().unwrap_or(0) + 1;
        for s in train {
            let copies = augment_permutations(s, cfg.augment, cfg.seed ^ s.id.wrapping_mul(0x9e37_79b9_7f4a_7c15), next_id);
            next_id += cfg.augment as u64;
            pool.extend(copies);
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let width = (q + 1) * l_max;
    let mut sizes = vec![width];
    sizes.extend(&cfg.hidden);
    sizes.push(width);
    let mut model = SurrogateModel {
        q,
        l_max,
        net: Network::new(&sizes, &mut rng),
        norm: fit_normalization(&pool, q, l_max),
        config: cfg.clone(),
    };
    let (x, t) = matrices(&model, &pool);
    let (vx, vt) = matrices(&model, val);
    let mut opt = Nadam::new(&model.net, cfg.beta1());
    let mut order: Vec<usize> = (0..pool.len()).collect();
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(cfg.epochs),
        val_loss: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        train_samples: pool.len(),
        seconds: 0.0,
    };
    let mut best = (f64::INFINITY, model.net.clone());

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.epoch_lr(epoch);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let bx = x.select(Axis(0), batch);
            let bt = t.select(Axis(0), batch);
            let (loss, grads) = model.net.backprop(bx.view(), bt.view());
            total += loss * batch.len() as f64;
            opt.update(&mut model.net, &grads, lr);
        }
        report.train_loss.push(total / pool.len() as f64);
        let v = mse_loss(model.net.forward(vx.view()).view(), vt.view());
        report.val_loss.push(v);
        if !v.is_finite() {
            break;
        }
        if v < best.0 {
            best = (v, model.net.clone());
            report.best_epoch = epoch;
        }
    }
    model.net = best.1;
    report.seconds = start.elapsed().as_secs_f64();
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ClusterSpec, Mode, SystemParams};

    fn toy_samples(n: usize) -> Vec<LabeledSample> {
        let params = SystemParams::default();
        (0..n)
            .map(|i| {
                let a = 1e-8 * (1.0 + i as f64 / n as f64);
                let inst = CellInstance::new(
                    0,
                    vec![
                        ClusterSpec::connected(vec![a, a / 10.0]).with_failed(a / 100.0),
                        ClusterSpec::connected(vec![a / 2.0, a / 20.0]),
                    ],
                    &params,
                );
                let alloc = CellAllocation {
                    connected: vec![vec![1.0 / a * 1e-9, 2.0], vec![3.0, 4.0]],
                    failed: vec![100.0 * (i + 1) as f64, 0.0],
                };
                LabeledSample::from_solution(i as u64, i as u64, 2, &inst, &alloc, 0.0, Mode::Isolated).unwrap()
            })
            .collect()
    }

    #[test]
    fn normalization_and_padding() {
        let s = toy_samples(10);
        let norm = fit_normalization(&s, 2, 2);
        assert_eq!(norm.input_mean.len(), 6);
        assert_eq!(norm.input_std[5], 1.0);
        let x = encode(&norm, &s[0].log_gains, 2, 2);
        let present_min = x.iter().enumerate().filter(|&(k, _)| k != 5).map(|(_, v)| *v).fold(f64::INFINITY, f64::min);
        assert!(x[5] < present_min);
        assert_eq!(x[5], norm.pad);
    }

    #[test]
    fn decode_projects_onto_budget() {
        let s = toy_samples(4);
        let mut model = SurrogateModel {
            q: 2,
            l_max: 2,
            net: Network::zeros(&[6, 6]),
            norm: Normalization::identity(6),
            config: TrainConfig::default(),
        };
        let inst = &s[0].meta.instance;
        let out = vec![6.0; 6];
        let a = model.decode(&out, inst);
        assert!((a.total() - inst.p_max).abs() < 1e-6 * inst.p_max);
        assert_eq!(a.failed[1], 0.0);
        model.norm.output_mean = vec![-100.0; 6];
        let a = model.decode(&out, inst);
        assert!(a.total() < 1e-80 && a.connected.iter().flatten().all(|&v| v >= 0.0));
    }

    #[test]
    fn decode_keeps_retained_clusters() {
        let s = toy_samples(1);
        let mut inst = s[0].meta.instance.clone();
        inst.clusters[1].retained = Some(vec![5.0, 30000.0]);
        let model = SurrogateModel {
            q: 2,
            l_max: 2,
            net: Network::zeros(&[6, 6]),
            norm: Normalization::identity(6),
            config: TrainConfig::default(),
        };
        let a = model.decode(&[5.0; 6], &inst);
        assert_eq!(a.connected[1], vec![5.0, 30000.0]);
        assert!(a.total() <= inst.p_max * (1.0 + 1e-12));
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let s = toy_samples(60);
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 16,
            hidden: vec![16, 16],
            learning_rate: 1e-2,
            seed: 4,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(&s[..40], &s[40..], &cfg).unwrap();
        let (m2, r2) = train(&s[..40], &s[40..], &cfg).unwrap();
        assert_eq!(m1, m2);
        assert_eq!(r1, TrainReport { seconds: r1.seconds, ..r2 });
        assert!(r1.train_loss.last().unwrap() < &r1.train_loss[0]);
        assert!((evaluate_loss(&m1, &s[40..]) - r1.val_loss[r1.best_epoch]).abs() < 1e-12);
    }

    #[test]
    fn empty_split_is_config_error() {
        let s = toy_samples(3);
        assert!(matches!(train(&s, &[], &TrainConfig::default()), Err(Error::Config(_))));
        assert!(matches!(train(&[], &s, &TrainConfig::default()), Err(Error::Config(_))));
    }

    #[test]
    fn permuted_pair_has_equal_loss() {
        let s = toy_samples(1).remove(0);
        let mut pred = s.clone();
        for (r, row) in pred.powers.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = (r * 7 + c * 3) as f64 * 0.37;
            }
        }
        let as_matrix = |x: &LabeledSample| Array2::from_shape_fn((3, 2), |(r, c)| x.powers[r][c]);
        let before = mse_loss(as_matrix(&pred).view(), as_matrix(&s).view());
        let (rows, cols) = ([1, 0], [1, 0]);
        let after = mse_loss(
            as_matrix(&pred.permuted(&rows, &cols, 1)).view(),
            as_matrix(&s.permuted(&rows, &cols, 2)).view(),
        );
        assert_eq!(before, after);
    }
}
