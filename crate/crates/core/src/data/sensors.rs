//! Sensor layouts, point observations and additive Gaussian noise.

use std::fmt;
use std::str::FromStr;

use crate::embed::{GridSpec, ObservationSet};
use crate::error::{Error, Result};
use crate::rng::{self, Rng64};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Near-square lattice over the extent, one sensor per lattice cell
    /// center.
    Uniform,
    /// Distinct grid points drawn by rejection.
    Random,
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Uniform => "uniform",
            Placement::Random => "random",
        })
    }
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Placement::Uniform),
            "random" => Ok(Placement::Random),
            _ => Err(Error::Config(format!("unknown placement '{s}' (uniform|random)"))),
        }
    }
}

/// Physical sensor positions. Random layouts sit exactly on grid points.
pub fn place_sensors(n: usize, placement: Placement, rng: &mut Rng64, grid: &GridSpec) -> Result<Vec<(f64, f64)>> {
    if n == 0 || n > grid.len() {
        return Err(Error::Sensor(format!("cannot place {n} sensors on {} points", grid.len())));
    }
    let e = grid.extent;
    match placement {
        Placement::Uniform => {
            let aspect = (e.x_max - e.x_min) / (e.y_max - e.y_min);
            let cols = ((n as f64 * aspect).sqrt().round() as usize).clamp(1, n);
            let rows = n.div_ceil(cols);
            let positions: Vec<(f64, f64)> = (0..n)
                .map(|k| {
                    let (r, c) = (k / cols, k % cols);
                    let x = e.x_min + (c as f64 + 0.5) / cols as f64 * (e.x_max - e.x_min);
                    let y = e.y_min + (r as f64 + 0.5) / rows as f64 * (e.y_max - e.y_min);
                    (x, y)
                })
                .collect();
            // reject layouts whose lattice is finer than the grid
            crate::embed::snap_sensors(&positions, grid)?;
            Ok(positions)
        }
        Placement::Random => {
            let mut taken = vec![false; grid.len()];
            let mut positions = Vec::with_capacity(n);
            while positions.len() < n {
                let p = rng::index(rng, grid.len());
                if !taken[p] {
                    taken[p] = true;
                    positions.push((grid.x(p % grid.n_x), grid.y(p / grid.n_x)));
                }
            }
            Ok(positions)
        }
    }
}

/// Reads `field` at the snapped sensor points, without interpolation.
pub fn observe(field: &Tensor, positions: &[(f64, f64)], grid: &GridSpec) -> Result<ObservationSet> {
    if field.shape() != [grid.n_y, grid.n_x] {
        return Err(Error::shape(format!("field {:?} on grid {:?}", field.shape(), grid.shape())));
    }
    let idx = crate::embed::snap_sensors(positions, grid)?;
    let values = idx.iter().map(|&(i, j)| field.at2(i, j)).collect();
    ObservationSet::new(positions.to_vec(), values, grid)
}

/// Standard deviation of the noise added at `snr_db`:
/// `sqrt(|x|^2 / n / (2 * 10^(snr/10)))`.
pub fn noise_std(x: &[f64], snr_db: f64) -> Result<f64> {
    let power = x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64;
    if power == 0.0 || !power.is_finite() {
        return Err(Error::Contract("noise scale undefined for an all-zero or empty signal".into()));
    }
    Ok((power / (2.0 * 10f64.powf(snr_db / 10.0))).sqrt())
}

pub fn add_noise_slice(x: &[f64], snr_db: f64, rng: &mut Rng64) -> Result<Vec<f64>> {
    let std = noise_std(x, snr_db)?;
    Ok(x.iter().map(|v| v + std * rng::normal(rng)).collect())
}

pub fn add_noise(x: &Tensor, snr_db: f64, rng: &mut Rng64) -> Result<Tensor> {
    Tensor::new(x.shape(), add_noise_slice(x.data(), snr_db, rng)?)
}

/// Which parts of a dataset carry noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NoiseTarget {
    /// Training fields (and so their observations) and test inputs.
    Both,
    /// Clean training; only test observations are noisy.
    InputsOnly,
}

impl fmt::Display for NoiseTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseTarget::Both => "both",
            NoiseTarget::InputsOnly => "inputs-only",
        })
    }
}

impl FromStr for NoiseTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(NoiseTarget::Both),
            "inputs-only" => Ok(NoiseTarget::InputsOnly),
            _ => Err(Error::Config(format!("unknown noise regime '{s}' (both|inputs-only)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub target: NoiseTarget,
    pub seed: u64,
}
