//! Optimization: Adam with per-epoch multiplicative learning-rate decay, L1
//! loss on minibatches, and validation-based parameter selection.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::checkpoint::Checkpoint;
use crate::embed::{meta_parse, GridSpec, ObservationSet};
use crate::error::{Error, Result};
use crate::eval::{mae, max_ae};
use crate::params::{ParamSet, ParamVars};
use crate::rng;
use crate::spectral::{recfno_forward, ModelConfig, RecFno};
use crate::tensor::{Tape, Tensor, Var};

pub const DEFAULT_LR: f64 = 1e-3;
pub const DEFAULT_GAMMA: f64 = 0.97;
pub const DEFAULT_BATCH: usize = 8;
pub const DEFAULT_EPOCHS: usize = 100;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr0: f64,
    /// Learning rate is multiplied by `gamma` after every epoch.
    pub gamma: f64,
    pub seed: u64,
    /// Where the selected checkpoint (and on divergence the last good one)
    /// is written, if anywhere.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH,
            lr0: DEFAULT_LR,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::Config(format!("decay factor {} outside (0, 1]", self.gamma)));
        }
        if !(self.lr0 >= 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and nonnegative", self.lr0)));
        }
        Ok(())
    }

    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        meta.insert("train.epochs".into(), self.epochs.to_string());
        meta.insert("train.batch".into(), self.batch_size.to_string());
        meta.insert("train.lr0".into(), self.lr0.to_string());
        meta.insert("train.gamma".into(), self.gamma.to_string());
        meta.insert("train.seed".into(), self.seed.to_string());
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Self> {
        Ok(Self {
            epochs: meta_parse(meta, "train.epochs")?,
            batch_size: meta_parse(meta, "train.batch")?,
            lr0: meta_parse(meta, "train.lr0")?,
            gamma: meta_parse(meta, "train.gamma")?,
            seed: meta_parse(meta, "train.seed")?,
            checkpoint: None,
        })
    }
}

/// `lr0 * gamma^epoch`.
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * cfg.gamma.powi(epoch as i32)
}

/// Bias-corrected Adam. Complex weights are stored as interleaved real
/// tensors, so their two components are updated independently.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: ParamSet,
    pub v: ParamSet,
    pub step: u64,
}

impl AdamState {
    pub fn new(like: &ParamSet) -> Self {
        Self {
            m: like.zeros_like(),
            v: like.zeros_like(),
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut ParamSet, grads: &ParamSet, lr: f64) -> Result<()> {
        for (name, g) in grads.iter() {
            if !g.is_finite() {
                return Err(Error::Contract(format!(
                    "non-finite gradient for {name} at Adam step {}",
                    self.step + 1
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (c1, c2) = (1.0 - ADAM_BETA1.powi(t), 1.0 - ADAM_BETA2.powi(t));
        for (name, p) in params.iter_mut() {
            let g = grads.get(name)?;
            if g.shape() != p.shape() {
                return Err(Error::shape(format!("gradient {name} {:?} vs {:?}", g.shape(), p.shape())));
            }
            let m = self.m.get_mut(name)?.data_mut();
            let v = self.v.get_mut(name)?.data_mut();
            for (((pk, &gk), mk), vk) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mk = ADAM_BETA1 * *mk + (1.0 - ADAM_BETA1) * gk;
                *vk = ADAM_BETA2 * *vk + (1.0 - ADAM_BETA2) * gk * gk;
                *pk -= lr * (*mk / c1) / ((*vk / c2).sqrt() + ADAM_EPS);
            }
        }
        Ok(())
    }
}

/// Scalar z-score. Fields are single-channel, so inputs and targets share
/// one set of statistics taken from the training split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalizer {
    pub mean: f64,
    pub std: f64,
}

impl Normalizer {
    pub fn new(mean: f64, std: f64) -> Result<Self> {
        if !(mean.is_finite() && std.is_finite() && std > 0.0) {
            return Err(Error::Config(format!("bad normalization mean {mean}, std {std}")));
        }
        Ok(Self { mean, std })
    }

    pub fn identity() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }

    /// Statistics over every value of `fields`. A constant set gets unit
    /// spread so that normalization stays defined.
    pub fn fit(fields: &[Tensor]) -> Result<Self> {
        let n: usize = fields.iter().map(Tensor::len).sum();
        if n == 0 {
            return Err(Error::Config("cannot normalize an empty set".into()));
        }
        let mean = fields.iter().map(Tensor::sum).sum::<f64>() / n as f64;
        let var = fields
            .iter()
            .flat_map(|f| f.data().iter())
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        Self::new(mean, std)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }

    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.std + self.mean
    }

    pub fn normalize_tensor(&self, t: &Tensor) -> Tensor {
        t.map(|v| self.normalize(v))
    }

    pub fn denormalize_tensor(&self, t: &Tensor) -> Tensor {
        t.map(|v| self.denormalize(v))
    }

    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        meta.insert("norm.mean".into(), self.mean.to_string());
        meta.insert("norm.std".into(), self.std.to_string());
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Self> {
        Self::new(meta_parse(meta, "norm.mean")?, meta_parse(meta, "norm.std")?)
    }
}

/// What the training loop needs from a model family.
pub trait Trainable {
    fn normalizer(&self) -> &Normalizer;

    /// Regression target for a physical field.
    fn target(&self, truth: &Tensor) -> Result<Tensor>;

    /// Prediction in target space from normalized observations.
    fn forward(&self, tape: &Tape, vars: &ParamVars, obs: &ObservationSet) -> Result<Var>;

    /// Physical field from a target-space prediction.
    fn to_field(&self, pred: &Tensor) -> Result<Tensor>;

    fn checkpoint(&self, params: &ParamSet) -> Checkpoint;
}

/// One training or evaluation pair. `obs` carries normalized values.
#[derive(Clone, Debug)]
pub struct Example {
    pub obs: ObservationSet,
    pub target: Tensor,
    pub truth: Tensor,
}

/// Observes each `inputs[k]` at `positions` and pairs it with
/// `truths[k]`. The two lists differ only when inputs are corrupted.
pub fn make_examples<M: Trainable + ?Sized>(
    model: &M,
    inputs: &[Tensor],
    truths: &[Tensor],
    positions: &[(f64, f64)],
    grid: &GridSpec,
) -> Result<Vec<Example>> {
    if inputs.len() != truths.len() {
        return Err(Error::Contract(format!("{} inputs for {} truths", inputs.len(), truths.len())));
    }
    let norm = model.normalizer();
    inputs
        .iter()
        .zip(truths)
        .map(|(input, truth)| {
            let raw = crate::data::observe(input, positions, grid)?;
            let values = raw.values.iter().map(|&v| norm.normalize(v)).collect();
            Ok(Example {
                obs: raw.with_values(values)?,
                target: model.target(truth)?,
                truth: truth.clone(),
            })
        })
        .collect()
}

/// Physical-field prediction for one example.
pub fn predict_field<M: Trainable + ?Sized>(model: &M, params: &ParamSet, obs: &ObservationSet) -> Result<Tensor> {
    let tape = Tape::new();
    let vars = params.register(&tape, false);
    let out = model.forward(&tape, &vars, obs)?;
    let pred = (*tape.value(out)).clone();
    model.to_field(&pred)
}

/// Mean target-space L1 and per-sample physical `(mae, max_ae)`.
pub fn evaluate<M: Trainable + ?Sized>(
    model: &M,
    params: &ParamSet,
    examples: &[Example],
) -> Result<(f64, Vec<(f64, f64)>)> {
    let mut l1 = 0.0;
    let mut per_sample = Vec::with_capacity(examples.len());
    for ex in examples {
        let tape = Tape::new();
        let vars = params.register(&tape, false);
        let out = model.forward(&tape, &vars, &ex.obs)?;
        let pred = tape.value(out);
        l1 += mae(&pred, &ex.target)?;
        let field = model.to_field(&pred)?;
        per_sample.push((mae(&field, &ex.truth)?, max_ae(&field, &ex.truth)?));
    }
    Ok((l1 / examples.len().max(1) as f64, per_sample))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_l1: f64,
    pub val_l1: f64,
    pub val_mae: f64,
    pub val_maxae: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,lr,train_l1,val_l1,val_mae,val_maxae";

impl History {
    pub fn to_csv(&self) -> String {
        let mut s = format!("{HISTORY_HEADER}\n");
        for r in &self.records {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{}",
                r.epoch, r.lr, r.train_l1, r.val_l1, r.val_mae, r.val_maxae
            );
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let origin = Path::new("<history>");
        let mut lines = text.lines();
        if lines.next() != Some(HISTORY_HEADER) {
            return Err(Error::format(origin, "missing history header"));
        }
        let records = lines
            .filter(|l| !l.is_empty())
            .map(|line| {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 6 {
                    return Err(Error::format(origin, format!("bad history row '{line}'")));
                }
                let num = |k: usize| -> Result<f64> {
                    f[k].parse().map_err(|_| Error::format(origin, format!("bad number '{}'", f[k])))
                };
                Ok(EpochRecord {
                    epoch: f[0].parse().map_err(|_| Error::format(origin, format!("bad epoch '{}'", f[0])))?,
                    lr: num(1)?,
                    train_l1: num(2)?,
                    val_l1: num(3)?,
                    val_mae: num(4)?,
                    val_maxae: num(5)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { records })
    }

    /// Record with the smallest validation MAE; the earliest wins ties.
    pub fn best(&self) -> Option<&EpochRecord> {
        self.records
            .iter()
            .fold(None, |best: Option<&EpochRecord>, r| match best {
                Some(b) if b.val_mae <= r.val_mae => Some(b),
                _ => Some(r),
            })
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Selected parameters, already rounded to the stored precision.
    pub params: ParamSet,
    pub history: History,
    /// `None` when no epoch ran.
    pub best_epoch: Option<usize>,
    pub checkpoint: Checkpoint,
}

/// Minibatch training with a seeded shuffle each epoch. Parameters start
/// from `init` rounded to `f32`; selection and validation always use the
/// rounded values, so a saved checkpoint reproduces the recorded metrics.
pub fn train_loop<M: Trainable + ?Sized>(
    model: &M,
    init: &ParamSet,
    train: &[Example],
    val: &[Example],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.epochs > 0 && (train.is_empty() || val.is_empty()) {
        return Err(Error::Config("training needs nonempty train and validation sets".into()));
    }
    let mut params = init.round_f32();
    let mut best = params.clone();
    let mut best_mae = f64::INFINITY;
    let mut best_epoch = None;
    let mut adam = AdamState::new(&params);
    let mut history = History::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = rng::seeded(rng::derive_seed(cfg.seed, SHUFFLE_STREAM));

    for epoch in 0..cfg.epochs {
        let lr = lr_at(epoch, cfg);
        rng::shuffle(&mut shuffle_rng, &mut order);
        let step = |params: &mut ParamSet, adam: &mut AdamState| -> Result<(f64, ParamSet, f64, Vec<(f64, f64)>)> {
            let mut loss_sum = 0.0;
            for batch in order.chunks(cfg.batch_size) {
                let tape = Tape::new();
                let vars = params.register(&tape, true);
                let mut total: Option<Var> = None;
                for &k in batch {
                    let ex = &train[k];
                    let pred = model.forward(&tape, &vars, &ex.obs)?;
                    let target = tape.constant(ex.target.clone());
                    let l = tape.l1_loss(pred, target)?;
                    total = Some(match total {
                        Some(t) => tape.add(t, l)?,
                        None => l,
                    });
                }
                let loss = tape.scale(total.expect("chunks are nonempty"), 1.0 / batch.len() as f64)?;
                let value = tape.value(loss).item()?;
                if !value.is_finite() {
                    return Err(Error::NonFinite("training loss"));
                }
                loss_sum += value * batch.len() as f64;
                let mut grads = tape.backward(loss)?;
                let g = vars.gradients(&mut grads, params)?;
                adam.update(params, &g, lr)?;
            }
            let rounded = params.round_f32();
            let (val_l1, per_sample) = evaluate(model, &rounded, val)?;
            Ok((loss_sum, rounded, val_l1, per_sample))
        };
        let (loss_sum, rounded, val_l1, per_sample) = match step(&mut params, &mut adam) {
            Ok(r) => r,
            Err(Error::NonFinite(_)) | Err(Error::Contract(_)) => return Err(diverged(model, &best, epoch, cfg)),
            Err(e) => return Err(e),
        };
        let n = per_sample.len() as f64;
        let val_mae = per_sample.iter().map(|s| s.0).sum::<f64>() / n;
        let val_maxae = per_sample.iter().map(|s| s.1).sum::<f64>() / n;
        if !(val_mae.is_finite() && val_l1.is_finite()) {
            return Err(diverged(model, &best, epoch, cfg));
        }
        history.records.push(EpochRecord {
            epoch,
            lr,
            train_l1: loss_sum / train.len() as f64,
            val_l1,
            val_mae,
            val_maxae,
        });
        if val_mae < best_mae {
            best_mae = val_mae;
            best = rounded;
            best_epoch = Some(epoch);
        }
    }
    let checkpoint = model.checkpoint(&best);
    if let Some(path) = &cfg.checkpoint {
        checkpoint.save(path)?;
    }
    Ok(TrainOutcome {
        params: best,
        history,
        best_epoch,
        checkpoint,
    })
}

fn diverged<M: Trainable + ?Sized>(model: &M, best: &ParamSet, epoch: usize, cfg: &TrainConfig) -> Error {
    let last_good = model.checkpoint(best);
    if let Some(path) = &cfg.checkpoint {
        if let Err(e) = last_good.save(path) {
            return e;
        }
    }
    Error::Diverged {
        epoch,
        last_good: Box::new(last_good),
    }
}

/// RecFNO regressing the normalized field directly.
#[derive(Clone, Debug)]
pub struct RecFnoTrainer {
    pub cfg: ModelConfig,
    pub norm: Normalizer,
    /// Metadata copied into every checkpoint (sensor layout, seeds, ...).
    pub meta: IndexMap<String, String>,
}

impl Trainable for RecFnoTrainer {
    fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    fn target(&self, truth: &Tensor) -> Result<Tensor> {
        Ok(self.norm.normalize_tensor(truth))
    }

    fn forward(&self, tape: &Tape, vars: &ParamVars, obs: &ObservationSet) -> Result<Var> {
        recfno_forward(tape, obs, &self.cfg, vars)
    }

    fn to_field(&self, pred: &Tensor) -> Result<Tensor> {
        Ok(self.norm.denormalize_tensor(pred))
    }

    fn checkpoint(&self, params: &ParamSet) -> Checkpoint {
        let mut meta = self.meta.clone();
        self.norm.to_meta(&mut meta);
        RecFno {
            cfg: self.cfg.clone(),
            params: params.clone(),
        }
        .to_checkpoint(&meta)
    }
}

/// Writes `history.csv` under `dir`.
pub fn write_history(history: &History, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("history.csv"), history.to_csv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{EmbeddingConfig, EmbeddingKind, Extent};

    #[test]
    fn schedule() {
        let mut cfg = TrainConfig::default();
        assert_eq!(lr_at(0, &cfg), 0.001);
        cfg.gamma = 0.98;
        assert!((lr_at(1, &cfg) - 0.001 * 0.98).abs() < 1e-18);
        cfg.gamma = 1.0;
        assert_eq!(lr_at(57, &cfg), cfg.lr0);
    }

    #[test]
    fn config_validation() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            TrainConfig { batch_size: 0, ..ok.clone() },
            TrainConfig { gamma: 0.0, ..ok.clone() },
            TrainConfig { gamma: 1.01, ..ok.clone() },
            TrainConfig { lr0: f64::NAN, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
        let mut meta = IndexMap::new();
        ok.to_meta(&mut meta);
        assert_eq!(TrainConfig::from_meta(&meta).unwrap(), ok);
    }

    fn scalar_params(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::new(&[1], vec![x]).unwrap());
        p
    }

    #[test]
    fn zero_gradient_leaves_everything_still() {
        let mut p = scalar_params(1.5);
        let mut adam = AdamState::new(&p);
        for _ in 0..5 {
            adam.update(&mut p, &scalar_params(0.0), 0.1).unwrap();
        }
        assert_eq!(p.get("x").unwrap().data(), &[1.5]);
        assert_eq!(adam.m.get("x").unwrap().data(), &[0.0]);
        assert_eq!(adam.v.get("x").unwrap().data(), &[0.0]);
    }

    #[test]
    fn constant_gradient_steps_approach_the_learning_rate() {
        let mut p = scalar_params(0.0);
        let mut adam = AdamState::new(&p);
        let mut prev = 0.0;
        let mut step = 0.0;
        for _ in 0..2000 {
            adam.update(&mut p, &scalar_params(-3.0), 0.01).unwrap();
            let x = p.get("x").unwrap().data()[0];
            step = x - prev;
            prev = x;
        }
        assert!(step > 0.0 && (step - 0.01).abs() < 1e-6, "{step}");
    }

    #[test]
    fn non_finite_gradients_are_refused() {
        let mut p = scalar_params(0.0);
        let mut adam = AdamState::new(&p);
        let mut g = scalar_params(0.0);
        g.get_mut("x").unwrap().data_mut()[0] = f64::NAN;
        assert!(adam.update(&mut p, &g, 0.1).is_err());
        assert_eq!(adam.step, 0);
    }

    #[test]
    fn normalization_round_trips() {
        let fields = vec![
            Tensor::from_fn(&[4, 5], |k| 300.0 + k as f64),
            Tensor::from_fn(&[4, 5], |k| 310.0 - 0.5 * k as f64),
        ];
        let n = Normalizer::fit(&fields).unwrap();
        for f in &fields {
            let back = n.denormalize_tensor(&n.normalize_tensor(f));
            assert!(f.data().iter().zip(back.data()).all(|(a, b)| (a - b).abs() < 1e-9));
        }
        let z: Vec<Tensor> = fields.iter().map(|f| n.normalize_tensor(f)).collect();
        let m = Normalizer::fit(&z).unwrap();
        assert!(m.mean.abs() < 1e-12 && (m.std - 1.0).abs() < 1e-12);
        let constant = Normalizer::fit(&[Tensor::full(&[3], 2.0)]).unwrap();
        assert_eq!(constant, Normalizer { mean: 2.0, std: 1.0 });
        assert!(Normalizer::new(0.0, 0.0).is_err());
    }

    #[test]
    fn history_csv_round_trips() {
        let h = History {
            records: vec![
                EpochRecord {
                    epoch: 0,
                    lr: 1e-3,
                    train_l1: 0.5,
                    val_l1: 0.25,
                    val_mae: 1.0 / 3.0,
                    val_maxae: 2.0,
                },
                EpochRecord {
                    epoch: 1,
                    lr: 9.7e-4,
                    train_l1: 0.4,
                    val_l1: 0.2,
                    val_mae: 0.3,
                    val_maxae: 1.5,
                },
            ],
        };
        let back = History::from_csv(&h.to_csv()).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.best().unwrap().epoch, 1);
        assert!(History::from_csv("epoch,lr\n").is_err());
    }

    fn tiny_setup(seed: u64) -> (RecFnoTrainer, ParamSet, Vec<Example>, Vec<Example>) {
        let grid = GridSpec::nodal(8, 8, Extent::unit()).unwrap();
        let emb = EmbeddingConfig::new(EmbeddingKind::Voronoi, 4, 4, grid).unwrap();
        let mut cfg = ModelConfig::new(emb, 1, 4, (2, 2)).unwrap();
        cfg.proj_hidden = 8;
        let trainer = RecFnoTrainer {
            cfg: cfg.clone(),
            norm: Normalizer::new(1.0, 2.0).unwrap(),
            meta: IndexMap::new(),
        };
        let positions = vec![(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)];
        let fields: Vec<Tensor> = (0..12)
            .map(|s| Tensor::from_fn(&[8, 8], |p| ((p * 7 + s * 3) % 5) as f64 * 0.3))
            .collect();
        let ex = make_examples(&trainer, &fields, &fields, &positions, &grid).unwrap();
        let (tr, va) = ex.split_at(9);
        (trainer, cfg.init_params(seed), tr.to_vec(), va.to_vec())
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let (trainer, init, tr, va) = tiny_setup(1);
        let cfg = TrainConfig {
            epochs: 1,
            lr0: 0.0,
            ..TrainConfig::default()
        };
        let out = train_loop(&trainer, &init, &tr, &va, &cfg).unwrap();
        assert_eq!(out.history.records.len(), 1);
        assert_eq!(out.params, init.round_f32());
        assert_eq!(out.best_epoch, Some(0));
    }

    #[test]
    fn zero_epochs_gives_the_initial_checkpoint() {
        let (trainer, init, tr, va) = tiny_setup(2);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let out = train_loop(&trainer, &init, &tr, &va, &cfg).unwrap();
        assert!(out.history.records.is_empty());
        assert_eq!(out.best_epoch, None);
        assert_eq!(RecFno::from_checkpoint(&out.checkpoint).unwrap().params, init.round_f32());
    }

    #[test]
    fn selection_matches_history_and_is_deterministic() {
        let (trainer, init, tr, va) = tiny_setup(3);
        let cfg = TrainConfig {
            epochs: 6,
            batch_size: 4,
            lr0: 3e-2,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = train_loop(&trainer, &init, &tr, &va, &cfg).unwrap();
        let b = train_loop(&trainer, &init, &tr, &va, &cfg).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.checkpoint.to_bytes().unwrap(), b.checkpoint.to_bytes().unwrap());
        let best = a.history.best().unwrap();
        assert_eq!(Some(best.epoch), a.best_epoch);
        let (_, per) = evaluate(&trainer, &a.params, &va).unwrap();
        let mae = per.iter().map(|s| s.0).sum::<f64>() / per.len() as f64;
        assert_eq!(mae, best.val_mae);
    }

    #[test]
    fn divergence_reports_the_last_good_checkpoint() {
        let (trainer, init, tr, va) = tiny_setup(4);
        let cfg = TrainConfig {
            epochs: 3,
            lr0: f64::MAX,
            ..TrainConfig::default()
        };
        match train_loop(&trainer, &init, &tr, &va, &cfg) {
            Err(Error::Diverged { last_good, .. }) => {
                assert!(RecFno::from_checkpoint(&last_good).is_ok());
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }
}
