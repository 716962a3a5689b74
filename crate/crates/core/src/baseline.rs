//! Proper orthogonal decomposition of training snapshots, and an MLP that
//! maps sensor readings to modal coefficients.

use indexmap::IndexMap;
use nalgebra::{DMatrix, SymmetricEigen};

use crate::checkpoint::Checkpoint;
use crate::embed::{meta_parse, meta_str, GridSpec, ObservationSet};
use crate::error::{Error, Result};
use crate::params::{uniform_init, ParamSet, ParamVars};
use crate::rng;
use crate::tensor::{Tape, Tensor, Var};
use crate::train::{make_examples, predict_field, train_loop, Example, Normalizer, TrainConfig, TrainOutcome, Trainable};

pub const ENERGY_FRACTION: f64 = 0.99;
pub const MAX_MODES: usize = 64;
pub const DEFAULT_HIDDEN: (usize, usize) = (256, 256);

/// Eigenvalues of the Gram matrix below this fraction of the largest are
/// treated as zero.
const RANK_TOL: f64 = 1e-12;

/// Mean field plus `r` modes. Modes belonging to a zero singular value are
/// zero fields; all others are orthonormal under the flattened inner
/// product.
#[derive(Clone, Debug, PartialEq)]
pub struct PodBasis {
    pub mean: Tensor,
    pub modes: Vec<Tensor>,
    pub singular_values: Vec<f64>,
}

fn flat_dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Method of snapshots: eigen-decomposition of the `N x N` Gram matrix of
/// the mean-centered snapshots gives the right singular vectors, from which
/// the left ones (the modes) follow.
pub fn pod_fit(snapshots: &[Tensor], r: usize) -> Result<PodBasis> {
    let n = snapshots.len();
    let first = snapshots.first().ok_or_else(|| Error::Config("POD needs at least one snapshot".into()))?;
    let shape = first.shape().to_vec();
    if shape.len() != 2 || snapshots.iter().any(|s| s.shape() != shape.as_slice()) {
        return Err(Error::shape("POD snapshots must share one 2D shape"));
    }
    let m = first.len();
    if r == 0 || r > n.min(m) {
        return Err(Error::Config(format!("POD rank {r} outside 1..={}", n.min(m))));
    }
    let mut mean = vec![0.0; m];
    for s in snapshots {
        for (a, v) in mean.iter_mut().zip(s.data()) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n as f64);
    let centered: Vec<Vec<f64>> = snapshots
        .iter()
        .map(|s| s.data().iter().zip(&mean).map(|(v, a)| v - a).collect())
        .collect();
    let gram = DMatrix::from_fn(n, n, |i, j| flat_dot(&centered[i], &centered[j]));
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);

    let mut modes: Vec<Vec<f64>> = Vec::with_capacity(r);
    let mut singular_values = Vec::with_capacity(r);
    for &k in order.iter().take(r) {
        let lambda = eig.eigenvalues[k];
        if top == 0.0 || lambda <= RANK_TOL * top {
            singular_values.push(0.0);
            modes.push(vec![0.0; m]);
            continue;
        }
        let sigma = lambda.sqrt();
        let mut mode = vec![0.0; m];
        for (i, row) in centered.iter().enumerate() {
            let c = eig.eigenvectors[(i, k)] / sigma;
            for (md, v) in mode.iter_mut().zip(row) {
                *md += c * v;
            }
        }
        // two Gram-Schmidt passes against earlier modes absorb the
        // round-off of the Gram route
        for _ in 0..2 {
            for prev in &modes {
                let p = flat_dot(prev, &mode);
                for (md, pv) in mode.iter_mut().zip(prev) {
                    *md -= p * pv;
                }
            }
            let norm = flat_dot(&mode, &mode).sqrt();
            mode.iter_mut().for_each(|v| *v /= norm);
        }
        singular_values.push(sigma);
        modes.push(mode);
    }
    Ok(PodBasis {
        mean: Tensor::new(&shape, mean)?,
        modes: modes.into_iter().map(|d| Tensor::new(&shape, d)).collect::<Result<_>>()?,
        singular_values,
    })
}

/// Smallest rank whose squared singular values reach `fraction` of the
/// total, capped at `cap`. Zero when there is no variance at all.
pub fn energy_rank(singular_values: &[f64], fraction: f64, cap: usize) -> usize {
    let total: f64 = singular_values.iter().map(|s| s * s).sum();
    if total == 0.0 {
        return 0;
    }
    let mut acc = 0.0;
    for (k, s) in singular_values.iter().enumerate() {
        acc += s * s;
        if acc >= fraction * total {
            return (k + 1).min(cap);
        }
    }
    singular_values.len().min(cap)
}

/// Fit at the default rank: 99% of the energy, at most
/// `min(64, snapshot count)` modes. The rank may be zero for a constant set.
pub fn pod_fit_default(snapshots: &[Tensor]) -> Result<PodBasis> {
    let n = snapshots.len();
    let full = pod_fit(snapshots, n.min(snapshots.first().map_or(0, Tensor::len)).max(1))?;
    let r = energy_rank(&full.singular_values, ENERGY_FRACTION, MAX_MODES.min(n));
    Ok(full.truncated(r))
}

impl PodBasis {
    pub fn rank(&self) -> usize {
        self.modes.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.mean.shape()[0], self.mean.shape()[1])
    }

    pub fn truncated(&self, r: usize) -> Self {
        let r = r.min(self.rank());
        Self {
            mean: self.mean.clone(),
            modes: self.modes[..r].to_vec(),
            singular_values: self.singular_values[..r].to_vec(),
        }
    }

    pub fn round_f32(&self) -> Self {
        Self {
            mean: self.mean.round_f32(),
            modes: self.modes.iter().map(Tensor::round_f32).collect(),
            singular_values: self.singular_values.iter().map(|&s| s as f32 as f64).collect(),
        }
    }

    /// Inner products of `field - mean` with each mode.
    pub fn project(&self, field: &Tensor) -> Result<Vec<f64>> {
        if field.shape() != self.mean.shape() {
            return Err(Error::shape(format!(
                "field {:?} against a basis on {:?}",
                field.shape(),
                self.mean.shape()
            )));
        }
        let centered: Vec<f64> = field.data().iter().zip(self.mean.data()).map(|(v, a)| v - a).collect();
        Ok(self.modes.iter().map(|m| flat_dot(m.data(), &centered)).collect())
    }

    /// `mean + sum_i c_i mode_i`.
    pub fn reconstruct(&self, coeffs: &[f64]) -> Result<Tensor> {
        if coeffs.len() != self.rank() {
            return Err(Error::shape(format!("{} coefficients for rank {}", coeffs.len(), self.rank())));
        }
        let mut out = self.mean.clone();
        for (c, m) in coeffs.iter().zip(&self.modes) {
            for (o, v) in out.data_mut().iter_mut().zip(m.data()) {
                *o += c * v;
            }
        }
        Ok(out)
    }

    /// Entries `pod.mean`, `pod.modes` (`[r, n_y, n_x]`) and `pod.sigma`.
    pub fn to_params(&self, params: &mut ParamSet) {
        let (h, w) = self.shape();
        let r = self.rank();
        params.insert("pod.mean", self.mean.clone());
        let modes = self.modes.iter().flat_map(|m| m.data().iter().copied()).collect();
        params.insert("pod.modes", Tensor::from_parts(vec![r, h, w], modes));
        params.insert("pod.sigma", Tensor::from_parts(vec![r], self.singular_values.clone()));
    }

    pub fn from_params(params: &ParamSet) -> Result<Self> {
        let mean = params.get("pod.mean")?.clone();
        let (h, w) = mean.dims2()?;
        let modes = params.get("pod.modes")?;
        let sigma = params.get("pod.sigma")?;
        let r = sigma.len();
        if modes.shape() != [r, h, w] {
            return Err(Error::shape(format!("pod.modes {:?} for rank {r} on {h}x{w}", modes.shape())));
        }
        Ok(Self {
            mean,
            modes: modes.data().chunks(h * w).map(|c| Tensor::from_parts(vec![h, w], c.to_vec())).collect(),
            singular_values: sigma.data().to_vec(),
        })
    }
}

/// Regressor `n -> hidden.0 -> hidden.1 -> r` with GELU activations,
/// trained on modal coefficients of the normalized fields. Coefficients are
/// divided by one global scale (their RMS over the training set) so the L1
/// loss sees order-one targets while keeping the modes' relative weight.
#[derive(Clone, Debug)]
pub struct PodMlp {
    pub basis: PodBasis,
    pub norm: Normalizer,
    pub coeff_scale: f64,
    pub hidden: (usize, usize),
    pub n_sensors: usize,
    pub grid: GridSpec,
    pub meta: IndexMap<String, String>,
}

const MLP_LAYERS: [&str; 3] = ["mlp.fc1", "mlp.fc2", "mlp.fc3"];

impl PodMlp {
    /// Fits the basis on the normalized training fields at the default rank.
    pub fn fit(train_fields: &[Tensor], grid: &GridSpec, n_sensors: usize, hidden: (usize, usize)) -> Result<Self> {
        let norm = Normalizer::fit(train_fields)?;
        let normalized: Vec<Tensor> = train_fields.iter().map(|f| norm.normalize_tensor(f)).collect();
        let basis = pod_fit_default(&normalized)?.round_f32();
        if basis.shape() != grid.shape() {
            return Err(Error::shape(format!("fields {:?} on grid {:?}", basis.shape(), grid.shape())));
        }
        let mut sq = 0.0;
        for f in &normalized {
            sq += basis.project(f)?.iter().map(|c| c * c).sum::<f64>();
        }
        let count = normalized.len() * basis.rank();
        let rms = if count > 0 { (sq / count as f64).sqrt() } else { 0.0 };
        let coeff_scale = if rms > 0.0 { rms as f32 as f64 } else { 1.0 };
        Ok(Self {
            basis,
            norm,
            coeff_scale,
            hidden,
            n_sensors,
            grid: *grid,
            meta: IndexMap::new(),
        })
    }

    fn widths(&self) -> [usize; 4] {
        [self.n_sensors, self.hidden.0, self.hidden.1, self.basis.rank()]
    }

    /// PyTorch-style `U(-1/sqrt(fan_in), 1/sqrt(fan_in))` for weights and
    /// biases.
    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut r = rng::seeded(seed);
        let mut params = ParamSet::new();
        let w = self.widths();
        for (k, name) in MLP_LAYERS.iter().enumerate() {
            let bound = 1.0 / (w[k] as f64).sqrt();
            params.insert(format!("{name}.w"), uniform_init(&mut r, &[w[k], w[k + 1]], bound));
            params.insert(format!("{name}.b"), uniform_init(&mut r, &[w[k + 1]], bound));
        }
        params
    }

    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        meta.insert("kind".into(), "podmlp".into());
        self.grid.to_meta("grid", meta);
        meta.insert("podmlp.sensors".into(), self.n_sensors.to_string());
        meta.insert("podmlp.hidden".into(), format!("{}x{}", self.hidden.0, self.hidden.1));
        meta.insert("podmlp.coeff_scale".into(), self.coeff_scale.to_string());
        self.norm.to_meta(meta);
    }

    /// Rebuilds the regressor and its trained parameters from a checkpoint.
    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<(Self, ParamSet)> {
        if ckpt.meta("kind")? != "podmlp" {
            return Err(Error::Config(format!("checkpoint holds a '{}' model", ckpt.meta("kind")?)));
        }
        let meta = &ckpt.meta;
        let model = Self {
            basis: PodBasis::from_params(&ckpt.params)?,
            norm: Normalizer::from_meta(meta)?,
            coeff_scale: meta_parse(meta, "podmlp.coeff_scale")?,
            hidden: crate::embed::parse_pair(meta_str(meta, "podmlp.hidden")?)?,
            n_sensors: meta_parse(meta, "podmlp.sensors")?,
            grid: GridSpec::from_meta("grid", meta)?,
            meta: IndexMap::new(),
        };
        let mut params = ParamSet::new();
        for (name, t) in ckpt.params.iter() {
            if name.starts_with("mlp.") {
                params.insert(name, t.clone());
            }
        }
        let expected = model.init_params(0);
        for (name, t) in expected.iter() {
            if params.get(name)?.shape() != t.shape() {
                return Err(Error::Config(format!("parameter {name} does not match the configuration")));
            }
        }
        Ok((model, params))
    }

    /// Physical field from physical sensor readings.
    pub fn predict(&self, params: &ParamSet, obs: &ObservationSet) -> Result<Tensor> {
        let values = obs.values.iter().map(|&v| self.norm.normalize(v)).collect();
        predict_field(self, params, &obs.with_values(values)?)
    }

    /// The modes live on the training grid; evaluating elsewhere is refused.
    pub fn predict_at_scale(&self, params: &ParamSet, obs: &ObservationSet, scale: usize) -> Result<Tensor> {
        if scale != 1 {
            return Err(Error::Resolution(format!(
                "POD modes are fixed to the {}x{} training grid; cannot evaluate at scale {scale}",
                self.grid.n_y, self.grid.n_x
            )));
        }
        self.predict(params, obs)
    }
}

impl Trainable for PodMlp {
    fn normalizer(&self) -> &Normalizer {
        &self.norm
    }

    fn target(&self, truth: &Tensor) -> Result<Tensor> {
        let c = self.basis.project(&self.norm.normalize_tensor(truth))?;
        Tensor::new(&[c.len()], c.iter().map(|v| v / self.coeff_scale).collect())
    }

    fn forward(&self, tape: &Tape, vars: &ParamVars, obs: &ObservationSet) -> Result<Var> {
        if obs.len() != self.n_sensors {
            return Err(Error::Sensor(format!("model expects {} sensors, got {}", self.n_sensors, obs.len())));
        }
        let mut h = tape.constant(Tensor::new(&[obs.len()], obs.values.clone())?);
        for (k, name) in MLP_LAYERS.iter().enumerate() {
            h = tape.linear(h, vars.get(&format!("{name}.w"))?, vars.get(&format!("{name}.b"))?)?;
            if k + 1 < MLP_LAYERS.len() {
                h = tape.gelu(h)?;
            }
        }
        Ok(h)
    }

    fn to_field(&self, pred: &Tensor) -> Result<Tensor> {
        let c: Vec<f64> = pred.data().iter().map(|v| v * self.coeff_scale).collect();
        Ok(self.norm.denormalize_tensor(&self.basis.reconstruct(&c)?))
    }

    fn checkpoint(&self, params: &ParamSet) -> Checkpoint {
        let mut meta = self.meta.clone();
        self.to_meta(&mut meta);
        let mut all = params.clone();
        self.basis.to_params(&mut all);
        Checkpoint::new(meta, all, Vec::new())
    }
}

/// Fits the basis on `train_fields`, then trains the regressor. A rank-zero
/// basis (constant data) skips optimization entirely: the mean is already
/// the best prediction.
pub fn podmlp_train(
    train_fields: &[Tensor],
    val_fields: &[Tensor],
    positions: &[(f64, f64)],
    grid: &GridSpec,
    hidden: (usize, usize),
    cfg: &TrainConfig,
) -> Result<(PodMlp, TrainOutcome)> {
    let model = PodMlp::fit(train_fields, grid, positions.len(), hidden)?;
    let train = make_examples(&model, train_fields, train_fields, positions, grid)?;
    let val = make_examples(&model, val_fields, val_fields, positions, grid)?;
    let outcome = podmlp_train_examples(&model, &train, &val, cfg)?;
    Ok((model, outcome))
}

/// Training on prepared examples, for callers that corrupt inputs or labels.
pub fn podmlp_train_examples(model: &PodMlp, train: &[Example], val: &[Example], cfg: &TrainConfig) -> Result<TrainOutcome> {
    let init = model.init_params(rng::derive_seed(cfg.seed, 1));
    if model.basis.rank() == 0 {
        let frozen = TrainConfig {
            epochs: 0,
            ..cfg.clone()
        };
        return train_loop(model, &init, train, val, &frozen);
    }
    train_loop(model, &init, train, val, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::Extent;

    fn random_fields(n: usize, h: usize, w: usize, seed: u64) -> Vec<Tensor> {
        let mut r = rng::seeded(seed);
        (0..n).map(|_| Tensor::from_fn(&[h, w], |_| rng::normal(&mut r))).collect()
    }

    fn max_ortho_defect(b: &PodBasis) -> f64 {
        let mut worst = 0.0f64;
        for (i, a) in b.modes.iter().enumerate() {
            for (j, c) in b.modes.iter().enumerate() {
                if b.singular_values[i] == 0.0 || b.singular_values[j] == 0.0 {
                    continue;
                }
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((flat_dot(a.data(), c.data()) - want).abs());
            }
        }
        worst
    }

    #[test]
    fn single_snapshot_has_a_zero_mode() {
        let u = Tensor::from_fn(&[3, 4], |k| k as f64);
        let b = pod_fit(std::slice::from_ref(&u), 1).unwrap();
        assert_eq!(b.mean, u);
        assert_eq!(b.singular_values, vec![0.0]);
        assert!(b.modes[0].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn opposite_pair_has_rank_one() {
        let u = Tensor::from_fn(&[4, 4], |k| (k as f64 * 0.7).sin());
        let b = pod_fit(&[u.clone(), u.map(|v| -v)], 2).unwrap();
        assert!(b.mean.max_abs() < 1e-15);
        let norm = flat_dot(u.data(), u.data()).sqrt();
        assert!((b.singular_values[0] - 2f64.sqrt() * norm).abs() < 1e-10);
        assert_eq!(b.singular_values[1], 0.0);
        let cos = flat_dot(b.modes[0].data(), u.data()) / norm;
        assert!((cos.abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_a_dense_svd() {
        let snaps = random_fields(50, 16, 16, 4);
        let b = pod_fit(&snaps, 50).unwrap();
        assert!(max_ortho_defect(&b) < 1e-8);
        assert!(b.singular_values.windows(2).all(|w| w[0] >= w[1]));
        let mean: Vec<f64> = (0..256).map(|p| snaps.iter().map(|s| s.data()[p]).sum::<f64>() / 50.0).collect();
        let cols: Vec<Vec<f64>> = snaps
            .iter()
            .map(|s| s.data().iter().zip(&mean).map(|(v, a)| v - a).collect())
            .collect();
        let mut oracle = jacobi_svd(cols);
        oracle.sort_by(|a, c| c.0.total_cmp(&a.0));
        let top = oracle[0].0;
        for (k, (s, u)) in oracle.iter().enumerate() {
            if *s < 1e-8 * top {
                assert_eq!(b.singular_values[k], 0.0);
                continue;
            }
            assert!((b.singular_values[k] - s).abs() < 1e-8, "{k}: {} vs {s}", b.singular_values[k]);
            let dot = flat_dot(u, b.modes[k].data());
            assert!((dot.abs() - 1.0).abs() < 1e-8, "{k}: {dot}");
        }
    }

    /// One-sided Jacobi SVD of the matrix whose columns are `cols`:
    /// rotate column pairs until all are mutually orthogonal, then the
    /// column norms are the singular values and the normalized columns the
    /// left singular vectors.
    fn jacobi_svd(mut cols: Vec<Vec<f64>>) -> Vec<(f64, Vec<f64>)> {
        let n = cols.len();
        for _sweep in 0..60 {
            let mut off = 0.0f64;
            for i in 0..n {
                for j in i + 1..n {
                    let a = flat_dot(&cols[i], &cols[i]);
                    let c = flat_dot(&cols[j], &cols[j]);
                    let g = flat_dot(&cols[i], &cols[j]);
                    if g == 0.0 {
                        continue;
                    }
                    off = off.max(g.abs() / (a * c).sqrt());
                    let zeta = (c - a) / (2.0 * g);
                    let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                    let cs = 1.0 / (1.0 + t * t).sqrt();
                    let sn = cs * t;
                    for p in 0..cols[i].len() {
                        let (x, y) = (cols[i][p], cols[j][p]);
                        cols[i][p] = cs * x - sn * y;
                        cols[j][p] = sn * x + cs * y;
                    }
                }
            }
            if off < 1e-15 {
                break;
            }
        }
        cols.into_iter()
            .map(|c| {
                let s = flat_dot(&c, &c).sqrt();
                let u = if s > 0.0 { c.iter().map(|v| v / s).collect() } else { c };
                (s, u)
            })
            .collect()
    }

    #[test]
    fn projection_round_trip_on_the_span() {
        let snaps = random_fields(6, 5, 7, 1);
        // centered rank is 5 for 6 generic snapshots
        let b = pod_fit(&snaps, 6).unwrap();
        assert_eq!(b.singular_values[5], 0.0);
        let b = b.truncated(5);
        for s in &snaps {
            let back = b.reconstruct(&b.project(s).unwrap()).unwrap();
            assert!(s.data().iter().zip(back.data()).all(|(a, c)| (a - c).abs() < 1e-6));
        }
        assert_eq!(b.reconstruct(&[0.0; 5]).unwrap(), b.mean);
        assert!(b.reconstruct(&[0.0; 4]).is_err());
        assert!(pod_fit(&snaps, 7).is_err());
        assert!(pod_fit(&snaps, 0).is_err());
    }

    #[test]
    fn truncation_error_falls_with_rank() {
        let snaps = random_fields(20, 8, 8, 9);
        let full = pod_fit(&snaps, 20).unwrap();
        let mut prev_err = f64::INFINITY;
        let mut prev_energy = -1.0;
        for r in 1..=20 {
            let b = full.truncated(r);
            let (mut err, mut energy) = (0.0, 0.0);
            for s in &snaps {
                let c = b.project(s).unwrap();
                energy += c.iter().map(|v| v * v).sum::<f64>();
                let back = b.reconstruct(&c).unwrap();
                err += s.data().iter().zip(back.data()).map(|(a, c)| (a - c).powi(2)).sum::<f64>();
            }
            assert!(err <= prev_err + 1e-9 && energy >= prev_energy - 1e-9);
            (prev_err, prev_energy) = (err, energy);
        }
    }

    #[test]
    fn energy_rank_rules() {
        assert_eq!(energy_rank(&[0.0, 0.0], 0.99, 64), 0);
        // energies 100, 1, 0.01
        assert_eq!(energy_rank(&[10.0, 1.0, 0.1], 0.99, 64), 1);
        assert_eq!(energy_rank(&[10.0, 1.0, 0.1], 0.995, 64), 2);
        assert_eq!(energy_rank(&[10.0, 1.0, 0.1], 1.0, 64), 3);
        assert_eq!(energy_rank(&[10.0, 1.0, 0.1], 1.0, 2), 2);
        assert_eq!(energy_rank(&[1.0; 100], 0.99, 64), 64);
        let constant = vec![Tensor::full(&[4, 4], 3.0); 5];
        assert_eq!(pod_fit_default(&constant).unwrap().rank(), 0);
    }

    fn grid16() -> GridSpec {
        GridSpec::nodal(16, 16, Extent::unit()).unwrap()
    }

    #[test]
    fn constant_data_predicts_the_mean_exactly() {
        let grid = grid16();
        let fields = vec![Tensor::full(&[16, 16], 4.5); 6];
        let positions = vec![(0.25, 0.25), (0.75, 0.75)];
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        let (model, out) = podmlp_train(&fields, &fields[..2], &positions, &grid, (8, 8), &cfg).unwrap();
        assert_eq!(model.basis.rank(), 0);
        let obs = crate::data::observe(&fields[0], &positions, &grid).unwrap();
        let pred = model.predict(&out.params, &obs).unwrap();
        assert_eq!(pred.shape(), &[16, 16]);
        assert!(pred.data().iter().all(|&v| v == 4.5));
    }

    #[test]
    fn refuses_other_resolutions_and_round_trips() {
        let grid = grid16();
        let fields = random_fields(8, 16, 16, 2);
        let positions = vec![(0.25, 0.25), (0.75, 0.75), (0.5, 0.5)];
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let (model, out) = podmlp_train(&fields[..6], &fields[6..], &positions, &grid, (8, 8), &cfg).unwrap();
        let obs = crate::data::observe(&fields[7], &positions, &grid).unwrap();
        assert!(matches!(model.predict_at_scale(&out.params, &obs, 2), Err(Error::Resolution(_))));
        let bytes = out.checkpoint.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes, std::path::Path::new("mem")).unwrap();
        let (m2, p2) = PodMlp::from_checkpoint(&back).unwrap();
        assert_eq!(m2.predict(&p2, &obs).unwrap(), model.predict(&out.params, &obs).unwrap());
    }
}
