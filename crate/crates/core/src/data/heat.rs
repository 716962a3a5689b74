//! Steady nonlinear heat conduction `-div(lambda(u) grad u) = f` with a
//! Dirichlet sink on part of the bottom edge and insulated elsewhere.

use super::linsolve::FivePoint;
use crate::embed::{GridSpec, Layout};
use crate::error::{Error, Result};
use crate::rng::{self, Rng64};
use crate::tensor::Tensor;

pub const REFERENCE_TEMPERATURE: f64 = 298.0;
pub const CONDUCTIVITY_SLOPE: f64 = 0.05;
pub const MIN_CONDUCTIVITY: f64 = 1e-3;
pub const PICARD_TOL: f64 = 1e-6;
pub const PICARD_MAX_ITER: usize = 100;
/// Lower bound on the Aitken relaxation factor.
pub const MIN_RELAXATION: f64 = 0.01;

/// `lambda(u) = 1 + 0.05 (u - 298)`, clamped below at [`MIN_CONDUCTIVITY`].
pub fn conductivity(u: f64) -> f64 {
    (1.0 + CONDUCTIVITY_SLOPE * (u - REFERENCE_TEMPERATURE)).max(MIN_CONDUCTIVITY)
}

/// Gaussian bump `amplitude * exp(-|x - c|^2 / (2 width^2))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatSource {
    pub x: f64,
    pub y: f64,
    pub amplitude: f64,
    pub width: f64,
}

impl HeatSource {
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.x).powi(2) + (y - self.y).powi(2);
        self.amplitude * (-0.5 * r2 / (self.width * self.width)).exp()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HeatInstance {
    pub sources: Vec<HeatSource>,
    /// Sink temperature in kelvin.
    pub u_d: f64,
    /// Fraction of the bottom edge, centered, held at `u_d`.
    pub sink_fraction: f64,
}

impl HeatInstance {
    pub fn source_at(&self, x: f64, y: f64) -> f64 {
        self.sources.iter().map(|s| s.eval(x, y)).sum()
    }

    /// Bottom-row nodes `j` inside the sink. Decided on the integer offset
    /// from the middle so the set is exactly mirror-symmetric.
    pub fn sink_nodes(&self, n_x: usize) -> Vec<usize> {
        let half = self.sink_fraction * (n_x - 1) as f64;
        (0..n_x)
            .filter(|&j| ((2 * j) as f64 - (n_x - 1) as f64).abs() <= half)
            .collect()
    }
}

/// Ranges for [`sample_heat_instance`].
#[derive(Clone, Debug, PartialEq)]
pub struct HeatParams {
    pub sources: (usize, usize),
    pub amplitude: (f64, f64),
    pub width: (f64, f64),
    pub u_d: (f64, f64),
    pub sink_fraction: f64,
}

impl Default for HeatParams {
    fn default() -> Self {
        Self {
            sources: (2, 6),
            amplitude: (2000.0, 8000.0),
            width: (0.02, 0.05),
            u_d: (280.0, 320.0),
            sink_fraction: 0.2,
        }
    }
}

/// Source centers are uniform over the unit square (grids are mapped onto
/// it), counts uniform in the inclusive range.
pub fn sample_heat_instance(rng: &mut Rng64, params: &HeatParams) -> HeatInstance {
    let (lo, hi) = params.sources;
    let count = lo + rng::index(rng, hi - lo + 1);
    let sources = (0..count)
        .map(|_| HeatSource {
            x: rng::uniform(rng, 0.0, 1.0),
            y: rng::uniform(rng, 0.0, 1.0),
            amplitude: rng::uniform(rng, params.amplitude.0, params.amplitude.1),
            width: rng::uniform(rng, params.width.0, params.width.1),
        })
        .collect();
    let u_d = rng::uniform(rng, params.u_d.0, params.u_d.1);
    HeatInstance {
        sources,
        u_d,
        sink_fraction: params.sink_fraction,
    }
}

/// Discrete problem on a nodal grid. Boundary nodes own half (corner:
/// quarter) control volumes, which is the mirror-node treatment of the
/// zero-flux condition. Unit-square coordinates are used for the sources.
struct Discretization {
    n_y: usize,
    n_x: usize,
    /// Conductance geometry per face, to be multiplied by `lambda_f`.
    east_geo: Vec<f64>,
    north_geo: Vec<f64>,
    /// `f_p * vol_p`.
    load: Vec<f64>,
    fixed: Vec<bool>,
}

impl Discretization {
    fn new(inst: &HeatInstance, grid: &GridSpec) -> Result<Self> {
        if grid.layout != Layout::Nodal {
            return Err(Error::Config("the heat solver needs a nodal grid".into()));
        }
        let (n_y, n_x) = grid.shape();
        if !(inst.sink_fraction > 0.0 && inst.sink_fraction <= 1.0) {
            return Err(Error::Config(format!("sink fraction {} outside (0, 1]", inst.sink_fraction)));
        }
        let sink = inst.sink_nodes(n_x);
        if sink.is_empty() {
            return Err(Error::Config(format!("sink covers no node on a {n_x}-wide grid")));
        }
        let (dx, dy) = (1.0 / (n_x - 1) as f64, 1.0 / (n_y - 1) as f64);
        let half = |k: usize, n: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        let n = n_y * n_x;
        let (mut east_geo, mut north_geo, mut load) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut fixed = vec![false; n];
        for &j in &sink {
            fixed[j] = true;
        }
        for i in 0..n_y {
            for j in 0..n_x {
                let p = i * n_x + j;
                let vol = dx * dy * half(i, n_y) * half(j, n_x);
                load[p] = inst.source_at(j as f64 * dx, i as f64 * dy) * vol;
                east_geo[p] = dy * half(i, n_y) / dx;
                north_geo[p] = dx * half(j, n_x) / dy;
            }
        }
        Ok(Self {
            n_y,
            n_x,
            east_geo,
            north_geo,
            load,
            fixed,
        })
    }

    fn operator(&self, u: &[f64]) -> FivePoint {
        let (n_y, n_x) = (self.n_y, self.n_x);
        let mut op = FivePoint::new(n_y, n_x);
        op.fixed.copy_from_slice(&self.fixed);
        for i in 0..n_y {
            for j in 0..n_x {
                let p = i * n_x + j;
                if j + 1 < n_x {
                    let lam = conductivity(0.5 * (u[p] + u[p + 1]));
                    op.add_face(p, p + 1, lam * self.east_geo[p]);
                }
                if i + 1 < n_y {
                    let lam = conductivity(0.5 * (u[p] + u[p + n_x]));
                    op.add_face(p, p + n_x, lam * self.north_geo[p]);
                }
            }
        }
        op
    }

    /// `b - A(u) u` on free nodes, zero on fixed ones.
    fn residual(&self, op: &FivePoint, u: &[f64]) -> Vec<f64> {
        let mut au = vec![0.0; u.len()];
        op.apply_full(u, &mut au);
        (0..u.len())
            .map(|p| if self.fixed[p] { 0.0 } else { self.load[p] - au[p] })
            .collect()
    }
}

/// Frozen-coefficient (Picard) iteration from `u = u_D`. Each step solves
/// `A(u_k) v = b` and moves `u` towards `v`, written as a correction
/// `delta = v - u_k` so that an exactly satisfied system stays bit-exact.
/// Stops once the full Picard correction is below 1e-6 everywhere, and
/// takes that last step in full.
///
/// Because `lambda` grows with `u`, the plain iteration overshoots and
/// alternates; the step is relaxed by Aitken's factor
/// `omega_k = -omega_{k-1} (d_{k-1} . (d_k - d_{k-1})) / |d_k - d_{k-1}|^2`.
pub fn solve_heat(inst: &HeatInstance, grid: &GridSpec) -> Result<Tensor> {
    let disc = Discretization::new(inst, grid)?;
    let n = grid.len();
    let mut u = vec![inst.u_d; n];
    let mut omega = 1.0;
    let mut prev: Option<Vec<f64>> = None;
    for _ in 0..PICARD_MAX_ITER {
        let op = disc.operator(&u);
        let r = disc.residual(&op, &u);
        let mut delta = vec![0.0; n];
        op.solve_direct(&r, &mut delta)?;
        let change = delta.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if change < PICARD_TOL {
            for (v, d) in u.iter_mut().zip(&delta) {
                *v += d;
            }
            return Tensor::new(&[grid.n_y, grid.n_x], u);
        }
        if let Some(p) = &prev {
            let (mut num, mut den) = (0.0, 0.0);
            for (a, b) in p.iter().zip(&delta) {
                num += a * (b - a);
                den += (b - a) * (b - a);
            }
            if den > 0.0 {
                omega = (-omega * num / den).clamp(MIN_RELAXATION, 1.0);
            }
        }
        for (v, d) in u.iter_mut().zip(&delta) {
            *v += omega * d;
        }
        prev = Some(delta);
    }
    Err(Error::Solver(format!("Picard iteration did not converge in {PICARD_MAX_ITER} steps")))
}

/// Nonlinear residual `|b - A(u) u| / |b|` with `lambda` evaluated at `u`
/// itself. Falls back to the unscaled norm when there is no load.
pub fn heat_residual(inst: &HeatInstance, grid: &GridSpec, u: &Tensor) -> Result<f64> {
    let disc = Discretization::new(inst, grid)?;
    if u.shape() != [grid.n_y, grid.n_x] {
        return Err(Error::shape(format!("field {:?} on grid {:?}", u.shape(), grid.shape())));
    }
    let op = disc.operator(u.data());
    let r = disc.residual(&op, u.data());
    let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
    let bn = disc.load.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(if bn > 0.0 { rn / bn } else { rn })
}
