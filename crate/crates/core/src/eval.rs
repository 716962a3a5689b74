//! Metrics, experiment drivers and report export.
//!
//! Every driver returns plain rows and can render them as CSV; every report
//! carries a fingerprint of the configuration that produced it.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::baseline::{podmlp_train_examples, PodMlp, DEFAULT_HIDDEN};
use crate::checkpoint::Checkpoint;
use crate::data::{add_noise, observe, place_sensors, FieldDataset, NoiseSpec, NoiseTarget, Placement};
use crate::embed::{meta_parse, meta_str, parse_pair, EmbeddingConfig, EmbeddingKind, GridSpec, ObservationSet};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;
use crate::spectral::{self, ModelConfig, RecFno, DEFAULT_LAYERS, DEFAULT_MODES, DEFAULT_WIDTH};
use crate::tensor::Tensor;
use crate::train::{evaluate, make_examples, train_loop, Normalizer, RecFnoTrainer, TrainConfig, TrainOutcome, Trainable};

const SENSOR_STREAM: u64 = 0x5345_4E53;
const INIT_STREAM: u64 = 1;
const NOISE_TRAIN: u64 = 1;
const NOISE_VAL: u64 = 2;
const NOISE_TEST: u64 = 3;

fn check_pair(u: &Tensor, up: &Tensor, what: &str) -> Result<()> {
    if u.shape() != up.shape() {
        return Err(Error::shape(format!("{what}: {:?} vs {:?}", u.shape(), up.shape())));
    }
    if u.is_empty() {
        return Err(Error::shape(format!("{what} of empty fields")));
    }
    Ok(())
}

/// Sum of absolute errors over the number of points.
pub fn mae(u: &Tensor, up: &Tensor) -> Result<f64> {
    check_pair(u, up, "mae")?;
    let s: f64 = u.data().iter().zip(up.data()).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / u.len() as f64)
}

/// Largest absolute pointwise error.
pub fn max_ae(u: &Tensor, up: &Tensor) -> Result<f64> {
    check_pair(u, up, "max_ae")?;
    Ok(u.data().iter().zip(up.data()).fold(0.0, |m, (a, b)| m.max((a - b).abs())))
}

/// FNV-1a over the `key=value` lines of `meta`, as 16 hex digits.
pub fn fingerprint(meta: &IndexMap<String, String>) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for (k, v) in meta {
        for b in k.bytes().chain([b'=']).chain(v.bytes()).chain([b'\n']) {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    format!("{h:016x}")
}

/// Dataset-level metrics: `mae` is the mean of per-sample MAE, `max_ae` the
/// mean of per-sample Max-AE.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub mae: f64,
    pub max_ae: f64,
    /// `(mae, max_ae)` per sample.
    pub per_sample: Vec<(f64, f64)>,
    pub fingerprint: String,
}

pub const REPORT_HEADER: &str = "sample,mae,max_ae";

impl MetricReport {
    pub fn from_samples(per_sample: Vec<(f64, f64)>, fingerprint: String) -> Result<Self> {
        if per_sample.is_empty() {
            return Err(Error::Contract("metric report over zero samples".into()));
        }
        let n = per_sample.len() as f64;
        Ok(Self {
            mae: per_sample.iter().map(|s| s.0).sum::<f64>() / n,
            max_ae: per_sample.iter().map(|s| s.1).sum::<f64>() / n,
            per_sample,
            fingerprint,
        })
    }

    /// `# fingerprint <hex>`, the header, one row per sample and a final
    /// `mean` row.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# fingerprint {}\n{REPORT_HEADER}\n", self.fingerprint);
        for (k, (a, b)) in self.per_sample.iter().enumerate() {
            let _ = writeln!(s, "{k},{a},{b}");
        }
        let _ = writeln!(s, "mean,{},{}", self.mae, self.max_ae);
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let origin = Path::new("<report>");
        let bad = |m: String| Error::format(origin, m);
        let mut lines = text.lines();
        let fp = lines
            .next()
            .and_then(|l| l.strip_prefix("# fingerprint "))
            .ok_or_else(|| bad("missing fingerprint line".into()))?
            .to_string();
        if lines.next() != Some(REPORT_HEADER) {
            return Err(bad("missing report header".into()));
        }
        let mut per_sample = Vec::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 3 {
                return Err(bad(format!("bad report row '{line}'")));
            }
            if f[0] == "mean" {
                continue;
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("bad number '{s}'")));
            per_sample.push((num(f[1])?, num(f[2])?));
        }
        Self::from_samples(per_sample, fp)
    }
}

/// Model family and size for one run.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    RecFno {
        embedding: EmbeddingKind,
        layers: usize,
        width: usize,
        modes: (usize, usize),
        proj_hidden: usize,
    },
    PodMlp {
        hidden: (usize, usize),
    },
}

impl ModelSpec {
    /// Default RecFNO: 4 layers, width 32, 12x12 modes, head 128.
    pub fn recfno(embedding: EmbeddingKind) -> Self {
        ModelSpec::RecFno {
            embedding,
            layers: DEFAULT_LAYERS,
            width: DEFAULT_WIDTH,
            modes: DEFAULT_MODES,
            proj_hidden: 4 * DEFAULT_WIDTH,
        }
    }

    pub fn pod_mlp() -> Self {
        ModelSpec::PodMlp { hidden: DEFAULT_HIDDEN }
    }

    pub fn label(&self) -> String {
        match self {
            ModelSpec::RecFno { embedding, .. } => format!("recfno-{embedding}"),
            ModelSpec::PodMlp { .. } => "pod-mlp".into(),
        }
    }

    pub fn with_modes(&self, k: (usize, usize)) -> Result<Self> {
        match self {
            ModelSpec::RecFno { embedding, layers, width, proj_hidden, .. } => Ok(ModelSpec::RecFno {
                embedding: *embedding,
                layers: *layers,
                width: *width,
                modes: k,
                proj_hidden: *proj_hidden,
            }),
            ModelSpec::PodMlp { .. } => Err(Error::Config("POD-MLP has no Fourier modes".into())),
        }
    }

    /// Full architecture on `grid` for `sensors` inputs.
    pub fn model_config(&self, grid: &GridSpec, sensors: usize) -> Result<ModelConfig> {
        match self {
            ModelSpec::RecFno { embedding, layers, width, modes, proj_hidden } => {
                let emb = EmbeddingConfig::new(*embedding, *width, sensors, *grid)?;
                let mut cfg = ModelConfig::new(emb, *layers, *width, *modes)?;
                cfg.proj_hidden = *proj_hidden;
                cfg.validate()?;
                Ok(cfg)
            }
            ModelSpec::PodMlp { .. } => Err(Error::Config("POD-MLP is not a Fourier model".into())),
        }
    }

    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        meta.insert("spec.model".into(), self.label());
        match self {
            ModelSpec::RecFno { layers, width, modes, proj_hidden, .. } => {
                meta.insert("spec.layers".into(), layers.to_string());
                meta.insert("spec.width".into(), width.to_string());
                meta.insert("spec.modes".into(), format!("{}x{}", modes.0, modes.1));
                meta.insert("spec.proj_hidden".into(), proj_hidden.to_string());
            }
            ModelSpec::PodMlp { hidden } => {
                meta.insert("spec.hidden".into(), format!("{}x{}", hidden.0, hidden.1));
            }
        }
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Self> {
        let label = meta_str(meta, "spec.model")?;
        if label == "pod-mlp" {
            return Ok(ModelSpec::PodMlp {
                hidden: parse_pair(meta_str(meta, "spec.hidden")?)?,
            });
        }
        let kind = label
            .strip_prefix("recfno-")
            .ok_or_else(|| Error::Config(format!("unknown model '{label}'")))?
            .parse()?;
        Ok(ModelSpec::RecFno {
            embedding: kind,
            layers: meta_parse(meta, "spec.layers")?,
            width: meta_parse(meta, "spec.width")?,
            modes: parse_pair(meta_str(meta, "spec.modes")?)?,
            proj_hidden: meta_parse(meta, "spec.proj_hidden")?,
        })
    }
}

/// Everything besides the dataset that determines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub model: ModelSpec,
    pub sensors: usize,
    pub placement: Placement,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        self.model.to_meta(meta);
        meta.insert("spec.sensors".into(), self.sensors.to_string());
        meta.insert("spec.placement".into(), self.placement.to_string());
        self.train.to_meta(meta);
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Self> {
        Ok(Self {
            model: ModelSpec::from_meta(meta)?,
            sensors: meta_parse(meta, "spec.sensors")?,
            placement: meta_str(meta, "spec.placement")?.parse()?,
            train: TrainConfig::from_meta(meta)?,
        })
    }

    /// Sensor layout on `grid`; random layouts draw from a stream of the
    /// training seed.
    pub fn positions(&self, grid: &GridSpec) -> Result<Vec<(f64, f64)>> {
        let mut r = rng::seeded(rng::derive_seed(self.train.seed, SENSOR_STREAM));
        place_sensors(self.sensors, self.placement, &mut r, grid)
    }
}

pub fn positions_to_meta(positions: &[(f64, f64)], meta: &mut IndexMap<String, String>) {
    let text: Vec<String> = positions.iter().map(|(x, y)| format!("{x}:{y}")).collect();
    meta.insert("sensors.positions".into(), text.join(";"));
}

pub fn positions_from_meta(meta: &IndexMap<String, String>) -> Result<Vec<(f64, f64)>> {
    let bad = |s: &str| Error::Config(format!("bad sensor position '{s}'"));
    meta_str(meta, "sensors.positions")?
        .split(';')
        .map(|p| {
            let (x, y) = p.split_once(':').ok_or_else(|| bad(p))?;
            Ok((x.parse().map_err(|_| bad(p))?, y.parse().map_err(|_| bad(p))?))
        })
        .collect()
}

/// A trained model of either family, with its parameters.
#[derive(Clone, Debug)]
pub enum TrainedModel {
    RecFno { trainer: RecFnoTrainer, params: ParamSet },
    PodMlp { model: PodMlp, params: ParamSet },
}

impl TrainedModel {
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        match ckpt.meta("kind")? {
            "recfno" => {
                let m = RecFno::from_checkpoint(ckpt)?;
                let trainer = RecFnoTrainer {
                    cfg: m.cfg,
                    norm: Normalizer::from_meta(&ckpt.meta)?,
                    meta: ckpt.meta.clone(),
                };
                Ok(TrainedModel::RecFno { trainer, params: m.params })
            }
            "podmlp" => {
                let (mut model, params) = PodMlp::from_checkpoint(ckpt)?;
                model.meta = ckpt.meta.clone();
                Ok(TrainedModel::PodMlp { model, params })
            }
            other => Err(Error::Config(format!("unknown checkpoint kind '{other}'"))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        match self {
            TrainedModel::RecFno { trainer, params } => trainer.checkpoint(params),
            TrainedModel::PodMlp { model, params } => model.checkpoint(params),
        }
    }

    pub fn grid(&self) -> GridSpec {
        match self {
            TrainedModel::RecFno { trainer, .. } => *trainer.cfg.grid(),
            TrainedModel::PodMlp { model, .. } => model.grid,
        }
    }

    pub fn meta(&self) -> &IndexMap<String, String> {
        match self {
            TrainedModel::RecFno { trainer, .. } => &trainer.meta,
            TrainedModel::PodMlp { model, .. } => &model.meta,
        }
    }

    pub fn positions(&self) -> Result<Vec<(f64, f64)>> {
        positions_from_meta(self.meta())
    }

    /// Physical field from physical readings, on the training grid refined
    /// `scale` times. POD-MLP refuses any scale but 1.
    pub fn predict(&self, obs: &ObservationSet, scale: usize) -> Result<Tensor> {
        match self {
            TrainedModel::RecFno { trainer, params } => {
                let norm = &trainer.norm;
                let z = obs.with_values(obs.values.iter().map(|&v| norm.normalize(v)).collect())?;
                let out = spectral::predict(&trainer.cfg, params, &z, scale)?;
                Ok(norm.denormalize_tensor(&out))
            }
            TrainedModel::PodMlp { model, params } => model.predict_at_scale(params, obs, scale),
        }
    }

    /// Metrics of predictions from `inputs` (observed at the model's
    /// sensors) against `truths`, all on the training grid.
    pub fn report(&self, inputs: &[Tensor], truths: &[Tensor], fingerprint: String) -> Result<MetricReport> {
        let grid = self.grid();
        let positions = self.positions()?;
        let (_, per) = match self {
            TrainedModel::RecFno { trainer, params } => {
                evaluate(trainer, params, &make_examples(trainer, inputs, truths, &positions, &grid)?)?
            }
            TrainedModel::PodMlp { model, params } => {
                evaluate(model, params, &make_examples(model, inputs, truths, &positions, &grid)?)?
            }
        };
        MetricReport::from_samples(per, fingerprint)
    }
}

/// Corrupted copies of `fields`, each with its own noise scale.
pub fn noisy_fields(fields: &[Tensor], snr_db: f64, seed: u64, stream: u64) -> Result<Vec<Tensor>> {
    let mut r = rng::seeded(rng::derive_seed(seed, stream));
    fields.iter().map(|f| add_noise(f, snr_db, &mut r)).collect()
}

/// Result of [`run_experiment`].
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub model: TrainedModel,
    pub outcome: TrainOutcome,
    /// Test-split metrics.
    pub test: MetricReport,
    /// Configuration behind the fingerprint.
    pub config: IndexMap<String, String>,
}

/// Dataset identity and run configuration as one ordered map.
pub fn run_config(ds: &FieldDataset, spec: &RunSpec, noise: Option<&NoiseSpec>) -> IndexMap<String, String> {
    let mut meta = IndexMap::new();
    ds.manifest.grid.to_meta("data.grid", &mut meta);
    meta.insert("data.seed".into(), ds.manifest.seed.to_string());
    meta.insert("data.count".into(), ds.manifest.count().to_string());
    if let Some(g) = &ds.manifest.generator {
        meta.insert("data.task".into(), g.kind().to_string());
    }
    spec.to_meta(&mut meta);
    if let Some(n) = noise {
        meta.insert("noise.snr_db".into(), n.snr_db.to_string());
        meta.insert("noise.target".into(), n.target.to_string());
        meta.insert("noise.seed".into(), n.seed.to_string());
    }
    meta
}

/// Trains `spec` on the train split (model selection on val) and evaluates
/// on the test split. With noise, training labels and inputs are corrupted
/// for [`NoiseTarget::Both`] and test inputs always; test labels stay
/// clean.
pub fn run_experiment(ds: &FieldDataset, spec: &RunSpec, noise: Option<&NoiseSpec>) -> Result<RunOutput> {
    let grid = ds.manifest.grid;
    let positions = spec.positions(&grid)?;
    let (train, val, test) = (ds.split("train")?, ds.split("val")?, ds.split("test")?);
    let (train_in, val_in, test_in) = match noise {
        Some(n) => {
            let test_in = noisy_fields(test, n.snr_db, n.seed, NOISE_TEST)?;
            match n.target {
                NoiseTarget::Both => (
                    noisy_fields(train, n.snr_db, n.seed, NOISE_TRAIN)?,
                    noisy_fields(val, n.snr_db, n.seed, NOISE_VAL)?,
                    test_in,
                ),
                NoiseTarget::InputsOnly => (train.to_vec(), val.to_vec(), test_in),
            }
        }
        None => (train.to_vec(), val.to_vec(), test.to_vec()),
    };
    // with noisy labels the model only ever sees the corrupted fields
    let (train_lab, val_lab) = match noise {
        Some(n) if n.target == NoiseTarget::Both => (train_in.clone(), val_in.clone()),
        _ => (train.to_vec(), val.to_vec()),
    };
    let config = run_config(ds, spec, noise);
    let fp = fingerprint(&config);
    let mut meta = config.clone();
    positions_to_meta(&positions, &mut meta);
    meta.insert("fingerprint".into(), fp.clone());

    let (model, outcome) = match &spec.model {
        ModelSpec::RecFno { .. } => {
            let cfg = spec.model.model_config(&grid, spec.sensors)?;
            let trainer = RecFnoTrainer {
                cfg: cfg.clone(),
                norm: Normalizer::fit(&train_lab)?,
                meta,
            };
            let tr = make_examples(&trainer, &train_in, &train_lab, &positions, &grid)?;
            let va = make_examples(&trainer, &val_in, &val_lab, &positions, &grid)?;
            let init = cfg.init_params(rng::derive_seed(spec.train.seed, INIT_STREAM));
            let outcome = train_loop(&trainer, &init, &tr, &va, &spec.train)?;
            let params = outcome.params.clone();
            (TrainedModel::RecFno { trainer, params }, outcome)
        }
        ModelSpec::PodMlp { hidden } => {
            let mut model = PodMlp::fit(&train_lab, &grid, spec.sensors, *hidden)?;
            model.meta = meta;
            let tr = make_examples(&model, &train_in, &train_lab, &positions, &grid)?;
            let va = make_examples(&model, &val_in, &val_lab, &positions, &grid)?;
            let outcome = podmlp_train_examples(&model, &tr, &va, &spec.train)?;
            let params = outcome.params.clone();
            (TrainedModel::PodMlp { model, params }, outcome)
        }
    };
    let test_report = model.report(&test_in, test, fp)?;
    Ok(RunOutput {
        model,
        outcome,
        test: test_report,
        config,
    })
}

/// `f` over `items` on up to `jobs` threads, results in input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<Result<R>>>> = items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|sc| {
        for _ in 0..jobs {
            sc.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= items.len() {
                    break;
                }
                let r = f(&items[k]);
                *slots[k].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| {
            m.into_inner()
                .unwrap_or_else(|e| e.into_inner())
                .unwrap_or_else(|| Err(Error::Contract("sweep worker produced no result".into())))
        })
        .collect()
}

/// One point of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    /// Swept value: sensor count, SNR in dB, or retained modes.
    pub x: f64,
    pub model: String,
    pub mae: f64,
    pub max_ae: f64,
    pub fingerprint: String,
}

/// CSV with the given name for the swept column.
pub fn rows_to_csv(x_name: &str, rows: &[SweepRow]) -> String {
    let mut s = format!("{x_name},model,mae,max_ae,fingerprint\n");
    for r in rows {
        let _ = writeln!(s, "{},{},{},{},{}", r.x, r.model, r.mae, r.max_ae, r.fingerprint);
    }
    s
}

fn check_unique<T: std::fmt::Display>(what: &str, xs: impl IntoIterator<Item = T>) -> Result<()> {
    let mut seen = HashSet::new();
    let mut any = false;
    for x in xs {
        any = true;
        if !seen.insert(x.to_string()) {
            return Err(Error::Config(format!("duplicate {what} {x}")));
        }
    }
    if !any {
        return Err(Error::Config(format!("empty {what} list")));
    }
    Ok(())
}

/// Trains every model at every sensor count. Each point gets its own seed
/// derived from the base seed and the count.
pub fn sensor_sweep(
    ds: &FieldDataset,
    counts: &[usize],
    models: &[ModelSpec],
    base: &RunSpec,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    check_unique("sensor count", counts)?;
    check_unique("model", models.iter().map(ModelSpec::label))?;
    let points: Vec<(usize, &ModelSpec)> = counts.iter().flat_map(|&n| models.iter().map(move |m| (n, m))).collect();
    par_map(&points, jobs, |&(n, m)| {
        let spec = RunSpec {
            model: m.clone(),
            sensors: n,
            train: TrainConfig {
                seed: rng::derive_seed(base.train.seed, n as u64),
                checkpoint: None,
                ..base.train.clone()
            },
            ..base.clone()
        };
        let out = run_experiment(ds, &spec, None)?;
        Ok(SweepRow {
            x: n as f64,
            model: m.label(),
            mae: out.test.mae,
            max_ae: out.test.max_ae,
            fingerprint: out.test.fingerprint,
        })
    })
}

/// MAE against SNR. `both` retrains at every level; `inputs-only` trains
/// once on clean data and corrupts only the test observations.
pub fn noise_experiment(
    ds: &FieldDataset,
    snrs: &[f64],
    regime: NoiseTarget,
    models: &[ModelSpec],
    base: &RunSpec,
    noise_seed: u64,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    check_unique("SNR", snrs)?;
    check_unique("model", models.iter().map(ModelSpec::label))?;
    if snrs.iter().any(|s| !s.is_finite()) {
        return Err(Error::Config("SNR levels must be finite".into()));
    }
    let spec_for = |m: &ModelSpec| RunSpec {
        model: m.clone(),
        train: TrainConfig {
            checkpoint: None,
            ..base.train.clone()
        },
        ..base.clone()
    };
    let noise_at = |snr: f64| NoiseSpec {
        snr_db: snr,
        target: regime,
        seed: noise_seed,
    };
    let row = |m: &ModelSpec, snr: f64, r: MetricReport| SweepRow {
        x: snr,
        model: m.label(),
        mae: r.mae,
        max_ae: r.max_ae,
        fingerprint: r.fingerprint,
    };
    match regime {
        NoiseTarget::InputsOnly => {
            let clean = par_map(models, jobs, |m| run_experiment(ds, &spec_for(m), None))?;
            let test = ds.split("test")?;
            let mut rows = Vec::new();
            for (m, c) in models.iter().zip(&clean) {
                for &snr in snrs {
                    let inputs = noisy_fields(test, snr, noise_seed, NOISE_TEST)?;
                    let fp = fingerprint(&run_config(ds, &spec_for(m), Some(&noise_at(snr))));
                    rows.push(row(m, snr, c.model.report(&inputs, test, fp)?));
                }
            }
            Ok(rows)
        }
        NoiseTarget::Both => {
            let points: Vec<(&ModelSpec, f64)> = models.iter().flat_map(|m| snrs.iter().map(move |&s| (m, s))).collect();
            par_map(&points, jobs, |&(m, snr)| {
                Ok(row(m, snr, run_experiment(ds, &spec_for(m), Some(&noise_at(snr)))?.test))
            })
        }
    }
}

/// Native and fine-grid metrics of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct SuperresReport {
    pub scale: usize,
    pub native: MetricReport,
    pub fine: MetricReport,
}

/// Fine-grid truth for the samples of `split`, regenerated by the dataset's
/// generator on the grid refined `scale` times.
pub fn fine_truth(ds: &FieldDataset, split: &str, scale: usize) -> Result<Vec<Tensor>> {
    let gen = ds
        .manifest
        .generator
        .as_ref()
        .ok_or_else(|| Error::Resolution("imported data has no generator to produce fine-grid truth".into()))?;
    let fine = ds.manifest.grid.scaled(scale)?;
    ds.manifest
        .split(split)?
        .range()
        .map(|k| Ok(gen.snapshot(ds.manifest.seed, k, &fine)?.field.round_f32()))
        .collect()
}

/// Evaluates on the `split` samples at native resolution and `scale` times
/// finer. Observations are always read from the native-resolution fields;
/// the fine prediction is compared with `fine` truth.
pub fn superres_eval(model: &TrainedModel, ds: &FieldDataset, split: &str, scale: usize, fine: &[Tensor]) -> Result<SuperresReport> {
    let grid = model.grid();
    if ds.manifest.grid != grid {
        return Err(Error::Resolution("dataset grid differs from the model's training grid".into()));
    }
    let coarse = ds.split(split)?;
    if fine.len() != coarse.len() {
        return Err(Error::Resolution(format!("{} fine truths for {} samples", fine.len(), coarse.len())));
    }
    let fine_grid = grid.scaled(scale)?;
    let positions = model.positions()?;
    let fp = model.meta().get("fingerprint").cloned().unwrap_or_default();
    let native = model.report(coarse, coarse, fp.clone())?;
    let mut per = Vec::with_capacity(coarse.len());
    for (c, t) in coarse.iter().zip(fine) {
        if t.shape() != [fine_grid.n_y, fine_grid.n_x] {
            return Err(Error::Resolution(format!("fine truth {:?} for a {:?} grid", t.shape(), fine_grid.shape())));
        }
        let obs = observe(c, &positions, &grid)?;
        let pred = model.predict(&obs, scale)?;
        per.push((mae(&pred, t)?, max_ae(&pred, t)?));
    }
    Ok(SuperresReport {
        scale,
        native,
        fine: MetricReport::from_samples(per, format!("{fp}-x{scale}"))?,
    })
}

/// Trains one RecFNO per retained-mode count `k` (as `k x k`). All counts
/// are validated against the grid before any training starts.
pub fn mode_ablation(ds: &FieldDataset, modes: &[usize], base: &RunSpec, jobs: usize) -> Result<Vec<SweepRow>> {
    check_unique("mode count", modes)?;
    let grid = ds.manifest.grid;
    let specs: Vec<RunSpec> = modes
        .iter()
        .map(|&k| {
            let model = base.model.with_modes((k, k))?;
            model.model_config(&grid, base.sensors)?;
            Ok(RunSpec {
                model,
                train: TrainConfig {
                    checkpoint: None,
                    ..base.train.clone()
                },
                ..base.clone()
            })
        })
        .collect::<Result<_>>()?;
    let points: Vec<(&RunSpec, usize)> = specs.iter().zip(modes.iter().copied()).collect();
    par_map(&points, jobs, |&(spec, k)| {
        let out = run_experiment(ds, spec, None)?;
        Ok(SweepRow {
            x: k as f64,
            model: spec.model.label(),
            mae: out.test.mae,
            max_ae: out.test.max_ae,
            fingerprint: out.test.fingerprint,
        })
    })
}

// ---- rasters and grids ----

/// Five-stop blue-green-yellow colormap on `[0, 1]`.
fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 5] = [
        [68.0, 1.0, 84.0],
        [59.0, 82.0, 139.0],
        [33.0, 145.0, 140.0],
        [94.0, 201.0, 98.0],
        [253.0, 231.0, 37.0],
    ];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let x = t * 4.0;
    let k = (x.floor() as usize).min(3);
    let f = x - k as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (STOPS[k][c] * (1.0 - f) + STOPS[k + 1][c] * f).round() as u8;
    }
    out
}

const SENSOR_MARK: [u8; 3] = [255, 0, 255];

/// Values mapped to `[0, 1]` over `[lo, hi]`; a constant field maps to 0.
fn unit_levels(field: &Tensor, lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    field
        .data()
        .iter()
        .map(|v| if span > 0.0 { (v - lo) / span } else { 0.0 })
        .collect()
}

/// Binary PGM with the first grid row (smallest `y`) at the bottom.
pub fn write_pgm(path: &Path, field: &Tensor, lo: f64, hi: f64) -> Result<()> {
    let (h, w) = field.dims2()?;
    let levels = unit_levels(field, lo, hi);
    let mut buf = format!("P5\n{w} {h}\n255\n").into_bytes();
    for i in (0..h).rev() {
        buf.extend(levels[i * w..(i + 1) * w].iter().map(|t| (t * 255.0).round() as u8));
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Binary PPM through the colormap, sensor cells painted magenta.
pub fn write_ppm(path: &Path, field: &Tensor, lo: f64, hi: f64, marks: &[(usize, usize)]) -> Result<()> {
    let (h, w) = field.dims2()?;
    let levels = unit_levels(field, lo, hi);
    let marked: HashSet<(usize, usize)> = marks.iter().copied().collect();
    let mut buf = format!("P6\n{w} {h}\n255\n").into_bytes();
    for i in (0..h).rev() {
        for j in 0..w {
            let rgb = if marked.contains(&(i, j)) { SENSOR_MARK } else { colormap(levels[i * w + j]) };
            buf.extend_from_slice(&rgb);
        }
    }
    fs::write(path, buf)?;
    Ok(())
}

/// Comma-separated rows in grid order, values printed to round-trip exactly.
pub fn write_csv_grid(path: &Path, field: &Tensor) -> Result<()> {
    let (h, w) = field.dims2()?;
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    for i in 0..h {
        let row: Vec<String> = field.data()[i * w..(i + 1) * w].iter().map(f64::to_string).collect();
        writeln!(f, "{}", row.join(","))?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_csv_grid(path: &Path) -> Result<Tensor> {
    let text = fs::read_to_string(path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let vals = line
            .split(',')
            .map(|v| v.parse::<f64>().map_err(|_| Error::format(path, format!("bad number '{v}'"))))
            .collect::<Result<Vec<_>>>()?;
        if *width.get_or_insert(vals.len()) != vals.len() {
            return Err(Error::format(path, "ragged rows"));
        }
        data.extend(vals);
        rows += 1;
    }
    Tensor::new(&[rows, width.unwrap_or(0)], data)
}

/// Field and absolute-error maps for one sample: `<stem>_field.{pgm,ppm,csv}`
/// and, when `truth` is given, `<stem>_error.{pgm,ppm,csv}`. Returns the
/// written paths.
pub fn export_fields(
    dir: &Path,
    stem: &str,
    field: &Tensor,
    truth: Option<&Tensor>,
    sensors: &[(usize, usize)],
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let (lo, hi) = field
        .data()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mut emit = |name: String, t: &Tensor, lo: f64, hi: f64| -> Result<()> {
        let base = dir.join(name);
        for (ext, res) in [
            ("pgm", write_pgm(&base.with_extension("pgm"), t, lo, hi)),
            ("ppm", write_ppm(&base.with_extension("ppm"), t, lo, hi, sensors)),
            ("csv", write_csv_grid(&base.with_extension("csv"), t)),
        ] {
            res?;
            written.push(base.with_extension(ext));
        }
        Ok(())
    };
    emit(format!("{stem}_field"), field, lo, hi)?;
    if let Some(t) = truth {
        check_pair(t, field, "export")?;
        let err = Tensor::new(
            field.shape(),
            field.data().iter().zip(t.data()).map(|(a, b)| (a - b).abs()).collect(),
        )?;
        let top = err.max_abs();
        emit(format!("{stem}_error"), &err, 0.0, top)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn metric_basics() {
        let u = Tensor::from_fn(&[3, 4], |k| k as f64);
        assert_eq!(mae(&u, &u).unwrap(), 0.0);
        assert_eq!(max_ae(&u, &u).unwrap(), 0.0);
        assert_eq!(mae(&Tensor::ones(&[5, 5]), &Tensor::zeros(&[5, 5])).unwrap(), 1.0);
        let mut bad = u.clone();
        bad.data_mut()[7] += 2.5;
        assert_eq!(max_ae(&u, &bad).unwrap(), 2.5);
        assert!(mae(&u, &Tensor::zeros(&[4, 3])).is_err());
    }

    #[test]
    fn metrics_match_direct_loops() {
        let mut r = rng::seeded(5);
        let u = Tensor::from_fn(&[9, 7], |_| rng::normal(&mut r));
        let up = Tensor::from_fn(&[9, 7], |_| rng::normal(&mut r));
        let (mut s, mut m) = (0.0, 0.0f64);
        for i in 0..9 {
            for j in 0..7 {
                let d = (u.at2(i, j) - up.at2(i, j)).abs();
                s += d;
                m = m.max(d);
            }
        }
        assert!((mae(&u, &up).unwrap() - s / 63.0).abs() < 1e-12);
        assert_eq!(max_ae(&u, &up).unwrap(), m);
        assert!(mae(&u, &up).unwrap() <= max_ae(&u, &up).unwrap());
    }

    use crate::data::{default_splits, generate, Generator};
    use crate::embed::Extent;

    fn tiny_ds() -> FieldDataset {
        let grid = GridSpec::nodal(16, 16, Extent::unit()).unwrap();
        generate(&Generator::Darcy, &grid, default_splits(14), 3).unwrap()
    }

    fn tiny_spec(model: ModelSpec) -> RunSpec {
        RunSpec {
            model,
            sensors: 6,
            placement: Placement::Random,
            train: TrainConfig {
                epochs: 2,
                batch_size: 4,
                lr0: 1e-2,
                seed: 11,
                ..TrainConfig::default()
            },
        }
    }

    fn tiny_fno() -> ModelSpec {
        ModelSpec::RecFno {
            embedding: EmbeddingKind::Voronoi,
            layers: 1,
            width: 4,
            modes: (3, 3),
            proj_hidden: 8,
        }
    }

    #[test]
    fn report_csv_round_trips() {
        let r = MetricReport::from_samples(vec![(0.1, 0.5), (0.3, 0.7), (1.0 / 3.0, 2.0)], "00ff".into()).unwrap();
        assert!((r.mae - (0.1 + 0.3 + 1.0 / 3.0) / 3.0).abs() < 1e-15);
        assert!((r.max_ae - 3.2 / 3.0).abs() < 1e-15);
        assert_eq!(MetricReport::from_csv(&r.to_csv()).unwrap(), r);
        assert!(MetricReport::from_samples(vec![], String::new()).is_err());
        assert!(MetricReport::from_csv("sample,mae,max_ae\n").is_err());
    }

    #[test]
    fn fingerprint_tracks_every_entry() {
        let mut a = IndexMap::new();
        a.insert("x".to_string(), "1".to_string());
        a.insert("y".to_string(), "2".to_string());
        let fa = fingerprint(&a);
        assert_eq!(fa.len(), 16);
        assert_eq!(fingerprint(&a.clone()), fa);
        let mut b = a.clone();
        b.insert("y".into(), "3".into());
        assert_ne!(fingerprint(&b), fa);
    }

    #[test]
    fn specs_round_trip_through_meta() {
        for model in [tiny_fno(), ModelSpec::pod_mlp(), ModelSpec::recfno(EmbeddingKind::Mlp)] {
            let spec = tiny_spec(model);
            let mut meta = IndexMap::new();
            spec.to_meta(&mut meta);
            assert_eq!(RunSpec::from_meta(&meta).unwrap(), spec);
        }
        assert!(ModelSpec::pod_mlp().with_modes((2, 2)).is_err());
    }

    #[test]
    fn positions_round_trip_exactly() {
        let pos = vec![(0.1, 1.0 / 3.0), (0.7071067811865476, 0.0), (1e-17, 0.999999999)];
        let mut meta = IndexMap::new();
        positions_to_meta(&pos, &mut meta);
        assert_eq!(positions_from_meta(&meta).unwrap(), pos);
        meta.insert("sensors.positions".into(), "0.1;0.2".into());
        assert!(positions_from_meta(&meta).is_err());
    }

    #[test]
    fn runs_are_deterministic_and_reload() {
        let ds = tiny_ds();
        for model in [tiny_fno(), ModelSpec::PodMlp { hidden: (8, 8) }] {
            let spec = tiny_spec(model);
            let a = run_experiment(&ds, &spec, None).unwrap();
            let b = run_experiment(&ds, &spec, None).unwrap();
            assert_eq!(a.test, b.test);
            assert_eq!(a.test.per_sample.len(), 2);
            let bytes = a.model.checkpoint().to_bytes().unwrap();
            assert_eq!(bytes, b.model.checkpoint().to_bytes().unwrap());
            let back = TrainedModel::from_checkpoint(&Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap()).unwrap();
            let re = back.report(ds.split("test").unwrap(), ds.split("test").unwrap(), a.test.fingerprint.clone()).unwrap();
            assert_eq!(re, a.test);
            assert_eq!(back.positions().unwrap(), spec.positions(&ds.manifest.grid).unwrap());
        }
    }

    #[test]
    fn inputs_only_noise_at_high_snr_matches_clean() {
        let ds = tiny_ds();
        let spec = tiny_spec(tiny_fno());
        let clean = run_experiment(&ds, &spec, None).unwrap();
        let rows = noise_experiment(&ds, &[300.0, 5.0], NoiseTarget::InputsOnly, &[tiny_fno()], &spec, 4, 1).unwrap();
        assert_eq!(rows.len(), 2);
        assert!((rows[0].mae - clean.test.mae).abs() <= 1e-6 * clean.test.mae);
        assert_ne!(rows[0].fingerprint, rows[1].fingerprint);
        assert!(noise_experiment(&ds, &[5.0, 5.0], NoiseTarget::Both, &[tiny_fno()], &spec, 4, 1).is_err());
        assert!(noise_experiment(&ds, &[f64::NAN], NoiseTarget::Both, &[tiny_fno()], &spec, 4, 1).is_err());
    }

    #[test]
    fn sweeps_reject_bad_lists() {
        let ds = tiny_ds();
        let spec = tiny_spec(tiny_fno());
        assert!(sensor_sweep(&ds, &[4, 4], &[tiny_fno()], &spec, 1).is_err());
        assert!(sensor_sweep(&ds, &[], &[tiny_fno()], &spec, 1).is_err());
        // 9 modes do not fit a 16-point axis; nothing is trained first
        assert!(mode_ablation(&ds, &[2, 9], &spec, 1).is_err());
        let pod = tiny_spec(ModelSpec::pod_mlp());
        assert!(mode_ablation(&ds, &[2], &pod, 1).is_err());
    }

    #[test]
    fn superres_needs_a_fourier_model() {
        let ds = tiny_ds();
        let fine = fine_truth(&ds, "test", 2).unwrap();
        assert_eq!(fine[0].shape(), &[32, 32]);
        let fno = run_experiment(&ds, &tiny_spec(tiny_fno()), None).unwrap();
        let rep = superres_eval(&fno.model, &ds, "test", 2, &fine).unwrap();
        assert_eq!(rep.native, fno.test);
        assert!(rep.fine.mae.is_finite());
        let pod = run_experiment(&ds, &tiny_spec(ModelSpec::PodMlp { hidden: (4, 4) }), None).unwrap();
        assert!(matches!(superres_eval(&pod.model, &ds, "test", 2, &fine), Err(Error::Resolution(_))));
        assert!(superres_eval(&fno.model, &ds, "test", 2, &fine[..1]).is_err());
    }

    #[test]
    fn fine_truth_at_scale_one_is_the_dataset() {
        let ds = tiny_ds();
        assert_eq!(fine_truth(&ds, "test", 1).unwrap(), ds.split("test").unwrap());
    }

    #[test]
    fn exports_are_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let c = Tensor::full(&[4, 5], 2.5);
        let paths = export_fields(dir.path(), "c", &c, Some(&c), &[]).unwrap();
        assert_eq!(paths.len(), 6);
        let pgm = fs::read(dir.path().join("c_field.pgm")).unwrap();
        let pix = &pgm[pgm.len() - 20..];
        assert!(pix.iter().all(|&p| p == pix[0]));
        let err = fs::read(dir.path().join("c_error.pgm")).unwrap();
        assert!(err[err.len() - 20..].iter().all(|&p| p == 0));
        let ppm = fs::read(dir.path().join("c_error.ppm")).unwrap();
        assert_eq!(ppm.len() - 60, "P6\n5 4\n255\n".len());

        let mut r = rng::seeded(8);
        let f = Tensor::from_fn(&[3, 6], |_| rng::normal(&mut r) / 3.0);
        export_fields(dir.path(), "f", &f, None, &[(0, 0)]).unwrap();
        assert_eq!(read_csv_grid(&dir.path().join("f_field.csv")).unwrap(), f);
        assert!(!dir.path().join("f_error.csv").exists());
        // the bottom grid row is written last; its first pixel is the sensor
        let ppm = fs::read(dir.path().join("f_field.ppm")).unwrap();
        let last_row = &ppm[ppm.len() - 18..];
        assert_eq!(&last_row[..3], &SENSOR_MARK);
    }

    #[test]
    fn colormap_ends() {
        assert_eq!(colormap(0.0), [68, 1, 84]);
        assert_eq!(colormap(1.0), [253, 231, 37]);
        assert_eq!(colormap(f64::NAN), colormap(0.0));
    }

    #[test]
    fn single_sensor_sweep_is_finite_and_parallel_agrees() {
        let ds = tiny_ds();
        let spec = tiny_spec(tiny_fno());
        let models = [tiny_fno(), ModelSpec::PodMlp { hidden: (4, 4) }];
        let serial = sensor_sweep(&ds, &[1, 3], &models, &spec, 1).unwrap();
        assert_eq!(serial.len(), 4);
        assert!(serial.iter().all(|r| r.mae.is_finite() && r.mae <= r.max_ae));
        assert_eq!(sensor_sweep(&ds, &[1, 3], &models, &spec, 3).unwrap(), serial);
        assert!(rows_to_csv("sensors", &serial).starts_with("sensors,model,mae,max_ae,fingerprint\n1,recfno-voronoi,"));
    }

    #[test]
    fn ablation_at_the_trained_modes_equals_the_plain_run() {
        let ds = tiny_ds();
        let spec = tiny_spec(tiny_fno());
        let plain = run_experiment(&ds, &spec, None).unwrap();
        let rows = mode_ablation(&ds, &[3], &spec, 1).unwrap();
        assert_eq!((rows[0].mae, rows[0].max_ae), (plain.test.mae, plain.test.max_ae));
        assert_eq!(rows[0].fingerprint, plain.test.fingerprint);
    }

    #[test]
    fn par_map_keeps_order_and_errors() {
        let xs: Vec<u32> = (0..20).collect();
        assert_eq!(par_map(&xs, 4, |&x| Ok(x * 2)).unwrap(), (0..20).map(|x| x * 2).collect::<Vec<_>>());
        assert!(par_map(&xs, 3, |&x| if x == 7 { Err(Error::Config("x".into())) } else { Ok(x) }).is_err());
        assert!(par_map::<u32, u32>(&[], 4, |&x| Ok(x)).unwrap().is_empty());
    }
}
