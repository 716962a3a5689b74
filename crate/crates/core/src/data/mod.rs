//! Synthetic field datasets: Darcy flow, nonlinear heat conduction and a
//! vortex-street surrogate, with sensors, noise and on-disk storage.

pub mod darcy;
pub mod heat;
mod io;
pub mod linsolve;
pub mod sensors;
pub mod wake;

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::embed::{meta_parse, meta_str, Extent, GridSpec};
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

pub use heat::{HeatInstance, HeatParams, HeatSource};
pub use io::{import_raw, read_fields, write_fields, FieldDataset, Manifest, Split, DATA_MAGIC, DATA_VERSION};
pub use sensors::{add_noise, noise_std, observe, place_sensors, NoiseSpec, NoiseTarget, Placement};
pub use wake::WakeParams;

/// One generated field with the parameters that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldSnapshot {
    pub field: Tensor,
    pub grid: GridSpec,
    pub meta: IndexMap<String, String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Darcy,
    Heat,
    Wake,
    /// Snapshots brought in from outside; cannot be regenerated.
    Import,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Darcy => "darcy",
            TaskKind::Heat => "heat",
            TaskKind::Wake => "wake",
            TaskKind::Import => "import",
        })
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "darcy" => Ok(TaskKind::Darcy),
            "heat" => Ok(TaskKind::Heat),
            "wake" => Ok(TaskKind::Wake),
            "import" => Ok(TaskKind::Import),
            _ => Err(Error::Config(format!("unknown task '{s}' (darcy|heat|wake|import)"))),
        }
    }
}

/// Generator with its parameters; enough to regenerate any sample on any
/// grid from `(seed, index)`.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    Darcy,
    Heat(HeatParams),
    Wake(WakeParams),
}

impl Generator {
    pub fn kind(&self) -> TaskKind {
        match self {
            Generator::Darcy => TaskKind::Darcy,
            Generator::Heat(_) => TaskKind::Heat,
            Generator::Wake(_) => TaskKind::Wake,
        }
    }

    pub fn default_for(kind: TaskKind) -> Result<Self> {
        match kind {
            TaskKind::Darcy => Ok(Generator::Darcy),
            TaskKind::Heat => Ok(Generator::Heat(HeatParams::default())),
            TaskKind::Wake => Ok(Generator::Wake(WakeParams::default())),
            TaskKind::Import => Err(Error::Config("imported data has no generator".into())),
        }
    }

    /// Default grid: 64x64 on the unit square for the PDE tasks, 64x96 over
    /// the wake domain.
    pub fn default_grid(&self) -> GridSpec {
        match self {
            Generator::Wake(_) => GridSpec::nodal(64, 96, WakeParams::extent()),
            _ => GridSpec::nodal(64, 64, Extent::unit()),
        }
        .expect("default grids are valid")
    }

    /// Sample `index` of a dataset seeded with `seed`, evaluated on `grid`.
    pub fn snapshot(&self, seed: u64, index: usize, grid: &GridSpec) -> Result<FieldSnapshot> {
        let mut meta = IndexMap::new();
        meta.insert("index".to_string(), index.to_string());
        let field = match self {
            Generator::Darcy => {
                let sample_seed = rng::derive_seed(seed, index as u64);
                meta.insert("coeff_seed".into(), sample_seed.to_string());
                let a = darcy::sample_darcy_coeff(&mut rng::seeded(sample_seed), grid);
                darcy::solve_darcy(&a, grid)?
            }
            Generator::Heat(params) => {
                let inst = heat::sample_heat_instance(&mut rng::seeded(rng::derive_seed(seed, index as u64)), params);
                meta.insert("u_d".into(), inst.u_d.to_string());
                let src: Vec<String> = inst
                    .sources
                    .iter()
                    .map(|s| format!("{}:{}:{}:{}", s.x, s.y, s.amplitude, s.width))
                    .collect();
                meta.insert("sources".into(), src.join(";"));
                heat::solve_heat(&inst, grid)?
            }
            Generator::Wake(params) => {
                // the seed only shifts the starting phase of the sequence
                let t0 = (seed % 1000) as f64 * params.period / 1000.0;
                let t = t0 + index as f64 * params.dt;
                meta.insert("t".into(), t.to_string());
                wake::synth_wake(t, grid, params)?
            }
        };
        Ok(FieldSnapshot {
            field,
            grid: *grid,
            meta,
        })
    }

    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        meta.insert("generator".into(), self.kind().to_string());
        match self {
            Generator::Darcy => {}
            Generator::Heat(p) => {
                meta.insert("heat.sources".into(), format!("{},{}", p.sources.0, p.sources.1));
                meta.insert("heat.amplitude".into(), format!("{},{}", p.amplitude.0, p.amplitude.1));
                meta.insert("heat.width".into(), format!("{},{}", p.width.0, p.width.1));
                meta.insert("heat.u_d".into(), format!("{},{}", p.u_d.0, p.u_d.1));
                meta.insert("heat.sink_fraction".into(), p.sink_fraction.to_string());
            }
            Generator::Wake(p) => {
                let vals = [
                    ("period", p.period),
                    ("spacing", p.spacing),
                    ("half_gap", p.half_gap),
                    ("core_radius", p.core_radius),
                    ("strength", p.strength),
                    ("envelope_start", p.envelope_start),
                    ("envelope_ramp", p.envelope_ramp),
                    ("envelope_spacings", p.envelope_spacings as f64),
                    ("shear_x", p.shear_x),
                    ("shear_gap", p.shear_gap),
                    ("shear_rx", p.shear_radii.0),
                    ("shear_ry", p.shear_radii.1),
                    ("shear_strength", p.shear_strength),
                    ("flap", p.flap),
                    ("dt", p.dt),
                ];
                for (k, v) in vals {
                    meta.insert(format!("wake.{k}"), v.to_string());
                }
            }
        }
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Option<Self>> {
        let kind: TaskKind = meta_parse(meta, "generator")?;
        let pair = |key: &str| -> Result<(f64, f64)> {
            let s = meta_str(meta, key)?;
            let (a, b) = s
                .split_once(',')
                .ok_or_else(|| Error::Config(format!("'{key}' is not a pair: {s}")))?;
            let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| Error::Config(format!("{key}: {e}")));
            Ok((parse(a)?, parse(b)?))
        };
        Ok(match kind {
            TaskKind::Import => None,
            TaskKind::Darcy => Some(Generator::Darcy),
            TaskKind::Heat => {
                let s = pair("heat.sources")?;
                Some(Generator::Heat(HeatParams {
                    sources: (s.0 as usize, s.1 as usize),
                    amplitude: pair("heat.amplitude")?,
                    width: pair("heat.width")?,
                    u_d: pair("heat.u_d")?,
                    sink_fraction: meta_parse(meta, "heat.sink_fraction")?,
                }))
            }
            TaskKind::Wake => {
                let f = |k: &str| meta_parse::<f64>(meta, &format!("wake.{k}"));
                Some(Generator::Wake(WakeParams {
                    period: f("period")?,
                    spacing: f("spacing")?,
                    half_gap: f("half_gap")?,
                    core_radius: f("core_radius")?,
                    strength: f("strength")?,
                    envelope_start: f("envelope_start")?,
                    envelope_ramp: f("envelope_ramp")?,
                    envelope_spacings: f("envelope_spacings")? as usize,
                    shear_x: f("shear_x")?,
                    shear_gap: f("shear_gap")?,
                    shear_radii: (f("shear_rx")?, f("shear_ry")?),
                    shear_strength: f("shear_strength")?,
                    flap: f("flap")?,
                    dt: f("dt")?,
                }))
            }
        })
    }
}

/// Split sizes in the default 5:1:1 proportion.
pub fn default_splits(count: usize) -> Vec<Split> {
    let train = (count * 5 + 3) / 7;
    let val = (count - train) / 2;
    let test = count - train - val;
    vec![
        Split::new("train", 0, train),
        Split::new("val", train, val),
        Split::new("test", train + val, test),
    ]
}

/// Generates `count` samples on `grid`, stored as `f32`-rounded values.
/// Darcy and heat samples are independent draws; wake samples form one
/// time sequence, so contiguous splits are a timed split.
pub fn generate(gen: &Generator, grid: &GridSpec, splits: Vec<Split>, seed: u64) -> Result<FieldDataset> {
    let count = splits.iter().map(|s| s.count).sum::<usize>();
    let fields = (0..count)
        .map(|k| gen.snapshot(seed, k, grid).map(|s| s.field.round_f32()))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(*grid, splits, Some(gen.clone()), seed)?;
    FieldDataset::new(manifest, fields)
}

/// Bilinear interpolation of a `[n_y, n_x]` field at a physical point.
pub fn bilinear(field: &Tensor, grid: &GridSpec, x: f64, y: f64) -> Result<f64> {
    if field.shape() != [grid.n_y, grid.n_x] {
        return Err(Error::shape(format!("field {:?} on grid {:?}", field.shape(), grid.shape())));
    }
    let fx = ((x - grid.x(0)) / grid.dx()).clamp(0.0, (grid.n_x - 1) as f64);
    let fy = ((y - grid.y(0)) / grid.dy()).clamp(0.0, (grid.n_y - 1) as f64);
    let (j, i) = ((fx.floor() as usize).min(grid.n_x - 2), (fy.floor() as usize).min(grid.n_y - 2));
    let (tx, ty) = (fx - j as f64, fy - i as f64);
    let v = |a: usize, b: usize| field.at2(a, b);
    Ok((1.0 - ty) * ((1.0 - tx) * v(i, j) + tx * v(i, j + 1)) + ty * ((1.0 - tx) * v(i + 1, j) + tx * v(i + 1, j + 1)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_splits_cover_the_count() {
        let s = default_splits(700);
        assert_eq!(s.iter().map(|s| s.count).collect::<Vec<_>>(), vec![500, 100, 100]);
        for n in [1, 2, 7, 10, 99] {
            let s = default_splits(n);
            assert_eq!(s.iter().map(|s| s.count).sum::<usize>(), n);
            assert_eq!(s[1].start, s[0].count);
        }
    }

    #[test]
    fn bilinear_reproduces_affine_fields() {
        let g = GridSpec::nodal(5, 9, Extent::new(0.0, 2.0, -1.0, 1.0)).unwrap();
        let f = Tensor::from_fn(&[5, 9], |p| 3.0 * g.x(p % 9) - 2.0 * g.y(p / 9) + 0.5);
        for (x, y) in [(0.3, 0.1), (2.0, 1.0), (0.0, -1.0), (1.234, -0.77)] {
            let v = bilinear(&f, &g, x, y).unwrap();
            assert!((v - (3.0 * x - 2.0 * y + 0.5)).abs() < 1e-12);
        }
    }

    #[test]
    fn generator_metadata_round_trips() {
        for kind in [TaskKind::Darcy, TaskKind::Heat, TaskKind::Wake] {
            let g = Generator::default_for(kind).unwrap();
            let mut meta = IndexMap::new();
            g.to_meta(&mut meta);
            assert_eq!(Generator::from_meta(&meta).unwrap(), Some(g));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let gen = Generator::Heat(HeatParams::default());
        let grid = GridSpec::nodal(16, 16, Extent::unit()).unwrap();
        let a = generate(&gen, &grid, default_splits(3), 5).unwrap();
        let b = generate(&gen, &grid, default_splits(3), 5).unwrap();
        assert_eq!(a, b);
        let c = generate(&gen, &grid, default_splits(3), 6).unwrap();
        assert_ne!(a.fields, c.fields);
    }
}
