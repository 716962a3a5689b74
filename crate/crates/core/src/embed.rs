//! Turning sparse sensor readings into full-resolution feature maps.

use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::params::{uniform_init, ParamSet, ParamVars};
use crate::rng::Rng64;
use crate::tensor::{Tape, Tensor, Var};

/// Physical bounds of the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Extent {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn unit() -> Self {
        Self::new(0.0, 1.0, 0.0, 1.0)
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let tol = 1e-12 * (self.x_max - self.x_min).max(self.y_max - self.y_min);
        x >= self.x_min - tol && x <= self.x_max + tol && y >= self.y_min - tol && y <= self.y_max + tol
    }
}

/// Where the sample points of a [`GridSpec`] sit inside its extent.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    /// Centers of `n` equal cells: `x_min + (j + 1/2) dx`.
    CellCentered,
    /// `n` nodes including both boundaries: `x_min + j (x_max - x_min)/(n - 1)`.
    Nodal,
}

/// Uniform 2D discretization. Row index `i` runs along `y`, column index `j`
/// along `x`; fields are stored `[n_y, n_x]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub n_y: usize,
    pub n_x: usize,
    pub extent: Extent,
    pub layout: Layout,
}

impl GridSpec {
    pub fn new(n_y: usize, n_x: usize, extent: Extent, layout: Layout) -> Result<Self> {
        if n_y < 2 || n_x < 2 {
            return Err(Error::Config(format!("grid {n_y}x{n_x}: both extents must be >= 2")));
        }
        if !(extent.x_max > extent.x_min && extent.y_max > extent.y_min) {
            return Err(Error::Config(format!("degenerate extent {extent:?}")));
        }
        Ok(Self {
            n_y,
            n_x,
            extent,
            layout,
        })
    }

    pub fn cells(n_y: usize, n_x: usize, extent: Extent) -> Result<Self> {
        Self::new(n_y, n_x, extent, Layout::CellCentered)
    }

    pub fn nodal(n_y: usize, n_x: usize, extent: Extent) -> Result<Self> {
        Self::new(n_y, n_x, extent, Layout::Nodal)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_y, self.n_x)
    }

    pub fn len(&self) -> usize {
        self.n_y * self.n_x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn axis(n: usize, lo: f64, hi: f64, layout: Layout) -> (f64, f64) {
        match layout {
            Layout::CellCentered => {
                let d = (hi - lo) / n as f64;
                (lo + 0.5 * d, d)
            }
            Layout::Nodal => (lo, (hi - lo) / (n - 1) as f64),
        }
    }

    /// Spacing between neighbouring sample points along `x`.
    pub fn dx(&self) -> f64 {
        Self::axis(self.n_x, self.extent.x_min, self.extent.x_max, self.layout).1
    }

    pub fn dy(&self) -> f64 {
        Self::axis(self.n_y, self.extent.y_min, self.extent.y_max, self.layout).1
    }

    pub fn x(&self, j: usize) -> f64 {
        let (x0, d) = Self::axis(self.n_x, self.extent.x_min, self.extent.x_max, self.layout);
        x0 + j as f64 * d
    }

    pub fn y(&self, i: usize) -> f64 {
        let (y0, d) = Self::axis(self.n_y, self.extent.y_min, self.extent.y_max, self.layout);
        y0 + i as f64 * d
    }

    pub fn coords_x(&self) -> Vec<f64> {
        (0..self.n_x).map(|j| self.x(j)).collect()
    }

    pub fn coords_y(&self) -> Vec<f64> {
        (0..self.n_y).map(|i| self.y(i)).collect()
    }

    /// Same domain and layout with `scale` times as many points per axis.
    pub fn scaled(&self, scale: usize) -> Result<Self> {
        if scale == 0 {
            return Err(Error::Config("scale must be >= 1".into()));
        }
        Self::new(self.n_y * scale, self.n_x * scale, self.extent, self.layout)
    }

    fn snap_axis(p: f64, n: usize, lo: f64, hi: f64, layout: Layout) -> usize {
        let (c0, d) = Self::axis(n, lo, hi, layout);
        let t = (p - c0) / d;
        // nearest index; an exact midpoint goes to the lower index
        ((t - 0.5).ceil().max(0.0) as usize).min(n - 1)
    }

    /// Nearest sample point `(i, j)` of a physical position.
    pub fn snap(&self, x: f64, y: f64) -> Result<(usize, usize)> {
        if !(x.is_finite() && y.is_finite()) || !self.extent.contains(x, y) {
            return Err(Error::Sensor(format!("position ({x}, {y}) outside {:?}", self.extent)));
        }
        let e = &self.extent;
        let j = Self::snap_axis(x, self.n_x, e.x_min, e.x_max, self.layout);
        let i = Self::snap_axis(y, self.n_y, e.y_min, e.y_max, self.layout);
        Ok((i, j))
    }

    /// Coordinate channels rescaled to `[0, 1]` over the extent.
    pub fn normalized_coords(&self) -> (Tensor, Tensor) {
        let e = &self.extent;
        let xs: Vec<f64> = self.coords_x().iter().map(|x| (x - e.x_min) / (e.x_max - e.x_min)).collect();
        let ys: Vec<f64> = self.coords_y().iter().map(|y| (y - e.y_min) / (e.y_max - e.y_min)).collect();
        let n_x = self.n_x;
        let dx = Tensor::from_fn(&[self.n_y, n_x], |p| xs[p % n_x]);
        let dy = Tensor::from_fn(&[self.n_y, n_x], |p| ys[p / n_x]);
        (dx, dy)
    }
}

/// Maps each position to its nearest grid point, rejecting positions outside
/// the extent and pairs of sensors landing on the same point.
pub fn snap_sensors(positions: &[(f64, f64)], grid: &GridSpec) -> Result<Vec<(usize, usize)>> {
    let mut seen = std::collections::HashSet::new();
    positions
        .iter()
        .enumerate()
        .map(|(k, &(x, y))| {
            let cell = grid.snap(x, y)?;
            if !seen.insert(cell) {
                return Err(Error::Sensor(format!(
                    "sensor {k} at ({x}, {y}) collides with another sensor in cell {cell:?}"
                )));
            }
            Ok(cell)
        })
        .collect()
}

/// Sensor positions with their readings, snapped to a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservationSet {
    pub positions: Vec<(f64, f64)>,
    pub values: Vec<f64>,
    pub grid_indices: Vec<(usize, usize)>,
}

impl ObservationSet {
    pub fn new(positions: Vec<(f64, f64)>, values: Vec<f64>, grid: &GridSpec) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Sensor("at least one sensor is required".into()));
        }
        if positions.len() != values.len() {
            return Err(Error::Sensor(format!(
                "{} positions but {} values",
                positions.len(),
                values.len()
            )));
        }
        let grid_indices = snap_sensors(&positions, grid)?;
        Ok(Self {
            positions,
            values,
            grid_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Same sensors with different readings.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Sensor(format!(
                "expected {} values, got {}",
                self.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            values,
            ..self.clone()
        })
    }

    /// Re-snaps the sensors on another grid (e.g. a finer one).
    pub fn resnap(&self, grid: &GridSpec) -> Result<Self> {
        Self::new(self.positions.clone(), self.values.clone(), grid)
    }
}

/// Channel 0: readings at sensor cells, zero elsewhere. Channels 1-2:
/// normalized `x` and `y` coordinates.
pub fn mask_representation(obs: &ObservationSet, grid: &GridSpec) -> Result<Tensor> {
    let cells = snap_sensors(&obs.positions, grid)?;
    let mut mask = Tensor::zeros(&[grid.n_y, grid.n_x]);
    for (&(i, j), &v) in cells.iter().zip(&obs.values) {
        mask.data_mut()[i * grid.n_x + j] = v;
    }
    let (dx, dy) = grid.normalized_coords();
    Tensor::stack_channels(&[&mask, &dx, &dy])
}

/// Index of the nearest sensor for every grid point, measured in physical
/// coordinates between grid points and snapped sensor points. Ties go to the
/// lowest sensor index.
pub fn nearest_sensor_map(cells: &[(usize, usize)], grid: &GridSpec) -> Vec<usize> {
    let xs = grid.coords_x();
    let ys = grid.coords_y();
    let sensors: Vec<(f64, f64)> = cells.iter().map(|&(i, j)| (xs[j], ys[i])).collect();
    let mut out = Vec::with_capacity(grid.len());
    for &y in &ys {
        for &x in &xs {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, &(sx, sy)) in sensors.iter().enumerate() {
                let d = (x - sx).powi(2) + (y - sy).powi(2);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            out.push(best);
        }
    }
    out
}

/// Channel 0: nearest-sensor (Voronoi) image. Channel 1: 0-1 sensor mask.
/// Channels 2-3: normalized coordinates.
pub fn voronoi_representation(obs: &ObservationSet, grid: &GridSpec) -> Result<Tensor> {
    let cells = snap_sensors(&obs.positions, grid)?;
    let owner = nearest_sensor_map(&cells, grid);
    let voronoi = Tensor::from_fn(&[grid.n_y, grid.n_x], |p| obs.values[owner[p]]);
    let mut mask = Tensor::zeros(&[grid.n_y, grid.n_x]);
    for &(i, j) in &cells {
        mask.data_mut()[i * grid.n_x + j] = 1.0;
    }
    let (dx, dy) = grid.normalized_coords();
    Tensor::stack_channels(&[&voronoi, &mask, &dx, &dy])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmbeddingKind {
    Mask,
    Voronoi,
    Mlp,
}

impl EmbeddingKind {
    pub const ALL: [EmbeddingKind; 3] = [EmbeddingKind::Mask, EmbeddingKind::Voronoi, EmbeddingKind::Mlp];

    /// Channels of the raw representation fed to the lifting convolution.
    pub fn representation_channels(self) -> Option<usize> {
        match self {
            EmbeddingKind::Mask => Some(3),
            EmbeddingKind::Voronoi => Some(4),
            EmbeddingKind::Mlp => None,
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbeddingKind::Mask => "mask",
            EmbeddingKind::Voronoi => "voronoi",
            EmbeddingKind::Mlp => "mlp",
        })
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mask" => Ok(EmbeddingKind::Mask),
            "voronoi" => Ok(EmbeddingKind::Voronoi),
            "mlp" => Ok(EmbeddingKind::Mlp),
            other => Err(Error::Config(format!(
                "unknown embedding '{other}' (expected mask, voronoi or mlp)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingConfig {
    pub kind: EmbeddingKind,
    /// Output channels.
    pub n_e: usize,
    /// Number of sensors, i.e. the MLP input length.
    pub n_sensors: usize,
    pub mlp_hidden: usize,
    /// Shape `(h', w')` of the map the MLP output is reshaped to.
    pub mlp_map_shape: (usize, usize),
    /// Output grid; its shape is the embedding's spatial shape.
    pub grid: GridSpec,
}

pub const DEFAULT_MLP_HIDDEN: usize = 128;

impl EmbeddingConfig {
    /// Defaults: hidden width 128, intermediate map a quarter of the grid
    /// along each axis.
    pub fn new(kind: EmbeddingKind, n_e: usize, n_sensors: usize, grid: GridSpec) -> Result<Self> {
        let cfg = Self {
            kind,
            n_e,
            n_sensors,
            mlp_hidden: DEFAULT_MLP_HIDDEN,
            mlp_map_shape: (
                ((grid.n_y as f64 / 4.0).round() as usize).max(1),
                ((grid.n_x as f64 / 4.0).round() as usize).max(1),
            ),
            grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn output_shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    /// Length `n' = h' * w'` of the MLP output vector.
    pub fn mlp_output_len(&self) -> usize {
        self.mlp_map_shape.0 * self.mlp_map_shape.1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_e == 0 {
            return Err(Error::Config("embedding needs n_e >= 1".into()));
        }
        if self.n_sensors == 0 {
            return Err(Error::Config("embedding needs at least one sensor".into()));
        }
        if self.kind == EmbeddingKind::Mlp
            && (self.mlp_hidden == 0 || self.mlp_map_shape.0 == 0 || self.mlp_map_shape.1 == 0)
        {
            return Err(Error::Config("mlp embedding needs non-zero hidden width and map shape".into()));
        }
        Ok(())
    }

    /// Fresh parameters, `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`, zero biases.
    pub fn init_params(&self, rng: &mut Rng64, params: &mut ParamSet) {
        let n_e = self.n_e;
        let bound = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        match self.kind.representation_channels() {
            Some(c) => {
                params.insert("embed.w", uniform_init(rng, &[c, n_e], bound(c)));
                params.insert("embed.b", Tensor::zeros(&[n_e]));
            }
            None => {
                let (n, hid, np) = (self.n_sensors, self.mlp_hidden, self.mlp_output_len());
                params.insert("embed.fc1.w", uniform_init(rng, &[n, hid], bound(n)));
                params.insert("embed.fc1.b", Tensor::zeros(&[hid]));
                params.insert("embed.fc2.w", uniform_init(rng, &[hid, np], bound(hid)));
                params.insert("embed.fc2.b", Tensor::zeros(&[np]));
                params.insert("embed.lift.w", uniform_init(rng, &[1, n_e], 1.0));
                params.insert("embed.lift.b", Tensor::zeros(&[n_e]));
                params.insert("embed.conv.w", uniform_init(rng, &[3, 3, n_e, n_e], bound(9 * n_e)));
                params.insert("embed.conv.b", Tensor::zeros(&[n_e]));
            }
        }
    }
}

impl EmbeddingConfig {
    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        self.grid.to_meta("grid", meta);
        meta.insert("embed.kind".into(), self.kind.to_string());
        meta.insert("embed.n_e".into(), self.n_e.to_string());
        meta.insert("embed.sensors".into(), self.n_sensors.to_string());
        meta.insert("embed.mlp_hidden".into(), self.mlp_hidden.to_string());
        let (a, b) = self.mlp_map_shape;
        meta.insert("embed.mlp_map".into(), format!("{a}x{b}"));
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Self> {
        let cfg = Self {
            kind: meta_str(meta, "embed.kind")?.parse()?,
            n_e: meta_parse(meta, "embed.n_e")?,
            n_sensors: meta_parse(meta, "embed.sensors")?,
            mlp_hidden: meta_parse(meta, "embed.mlp_hidden")?,
            mlp_map_shape: parse_pair(meta_str(meta, "embed.mlp_map")?)?,
            grid: GridSpec::from_meta("grid", meta)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl GridSpec {
    pub fn to_meta(&self, prefix: &str, meta: &mut IndexMap<String, String>) {
        let e = &self.extent;
        meta.insert(format!("{prefix}.shape"), format!("{}x{}", self.n_y, self.n_x));
        meta.insert(format!("{prefix}.extent"), format!("{},{},{},{}", e.x_min, e.x_max, e.y_min, e.y_max));
        meta.insert(format!("{prefix}.layout"), self.layout.to_string());
    }

    pub fn from_meta(prefix: &str, meta: &IndexMap<String, String>) -> Result<Self> {
        let (n_y, n_x) = parse_pair(meta_str(meta, &format!("{prefix}.shape"))?)?;
        let raw = meta_str(meta, &format!("{prefix}.extent"))?;
        let v: Vec<f64> = raw
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Config(format!("bad extent '{raw}': {e}")))?;
        if v.len() != 4 {
            return Err(Error::Config(format!("extent needs 4 numbers, got '{raw}'")));
        }
        let layout = meta_str(meta, &format!("{prefix}.layout"))?.parse()?;
        Self::new(n_y, n_x, Extent::new(v[0], v[1], v[2], v[3]), layout)
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::CellCentered => "cells",
            Layout::Nodal => "nodal",
        })
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cells" => Ok(Layout::CellCentered),
            "nodal" => Ok(Layout::Nodal),
            other => Err(Error::Config(format!("unknown grid layout '{other}'"))),
        }
    }
}

pub fn meta_str<'a>(meta: &'a IndexMap<String, String>, key: &str) -> Result<&'a str> {
    meta.get(key)
        .map(String::as_str)
        .ok_or_else(|| Error::Config(format!("missing key '{key}'")))
}

pub fn meta_parse<T: FromStr>(meta: &IndexMap<String, String>, key: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    let raw = meta_str(meta, key)?;
    raw.trim()
        .parse()
        .map_err(|e| Error::Config(format!("bad value '{raw}' for '{key}': {e}")))
}

/// Parses `AxB` into `(A, B)`.
pub fn parse_pair(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("expected AxB, got '{s}'"));
    let (a, b) = s.split_once(['x', 'X']).ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// Learnable 1x1 lifting of a mask/Voronoi representation to `n_e` channels.
pub fn embed_conv(tape: &Tape, rep: Var, weight: Var, bias: Var) -> Result<Var> {
    tape.conv1x1(rep, weight, bias)
}

/// MLP embedding: dense -> GELU -> dense, reshaped to `(h', w', 1)`, lifted
/// to `n_e` channels, doubled by nearest resize, smoothed by a 3x3
/// convolution and finally resized to `out_shape`.
pub fn mlp_embedding(
    tape: &Tape,
    values: Var,
    cfg: &EmbeddingConfig,
    vars: &ParamVars,
    out_shape: (usize, usize),
) -> Result<Var> {
    let (hp, wp) = cfg.mlp_map_shape;
    let hidden = tape.linear(values, vars.get("embed.fc1.w")?, vars.get("embed.fc1.b")?)?;
    let hidden = tape.gelu(hidden)?;
    let g = tape.linear(hidden, vars.get("embed.fc2.w")?, vars.get("embed.fc2.b")?)?;
    let np = tape.shape(g)[0];
    if np != hp * wp {
        return Err(Error::Config(format!(
            "mlp output length {np} does not fill a {hp}x{wp} map"
        )));
    }
    let map = tape.reshape(g, &[hp, wp, 1])?;
    let lifted = tape.conv1x1(map, vars.get("embed.lift.w")?, vars.get("embed.lift.b")?)?;
    let doubled = tape.nearest_resize(lifted, 2 * hp, 2 * wp)?;
    let smoothed = tape.conv3x3(doubled, vars.get("embed.conv.w")?, vars.get("embed.conv.b")?)?;
    tape.nearest_resize(smoothed, out_shape.0, out_shape.1)
}

/// Full embedding of one observation set on `grid`, `[n_y, n_x, n_e]`.
pub fn embed(
    tape: &Tape,
    obs: &ObservationSet,
    cfg: &EmbeddingConfig,
    vars: &ParamVars,
    grid: &GridSpec,
) -> Result<Var> {
    if obs.len() != cfg.n_sensors {
        return Err(Error::Sensor(format!(
            "model expects {} sensors, got {}",
            cfg.n_sensors,
            obs.len()
        )));
    }
    match cfg.kind {
        EmbeddingKind::Mask | EmbeddingKind::Voronoi => {
            let rep = if cfg.kind == EmbeddingKind::Mask {
                mask_representation(obs, grid)?
            } else {
                voronoi_representation(obs, grid)?
            };
            let rep = tape.constant(rep);
            embed_conv(tape, rep, vars.get("embed.w")?, vars.get("embed.b")?)
        }
        EmbeddingKind::Mlp => {
            let values = tape.constant(Tensor::new(&[obs.len()], obs.values.clone())?);
            mlp_embedding(tape, values, cfg, vars, grid.shape())
        }
    }
}
