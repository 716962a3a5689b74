//! Analytic vortex-street vorticity, standing in for a simulated cylinder
//! wake.
//!
//! Two staggered rows of Gaussian vortices of opposite sign travel downstream
//! at one spacing per period. Each vortex is weighted by an envelope
//! `E(x) = S((x - a) / w) - S((x - a - m L) / w)` with `S` a smooth step, for
//! which `sum_k E(x + k L) = m` at every `x`; both rows therefore always
//! carry the same total strength and the field integrates to zero. A
//! mirror-symmetric pair of flapping shear layers sits behind the body.

use std::f64::consts::PI;

use crate::embed::{Extent, GridSpec};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct WakeParams {
    /// Shedding period in time units.
    pub period: f64,
    /// Streamwise spacing `L` of same-sign vortices.
    pub spacing: f64,
    /// Half distance between the two rows.
    pub half_gap: f64,
    pub core_radius: f64,
    /// Peak vorticity of a fully developed vortex.
    pub strength: f64,
    /// Envelope start `a`, ramp width `w` and plateau length in spacings `m`.
    pub envelope_start: f64,
    pub envelope_ramp: f64,
    pub envelope_spacings: usize,
    /// Shear layers: center `x`, half gap, radii and strength; they flap by
    /// `flap * sin(2 pi t / P)`.
    pub shear_x: f64,
    pub shear_gap: f64,
    pub shear_radii: (f64, f64),
    pub shear_strength: f64,
    pub flap: f64,
    /// Time between consecutive dataset snapshots.
    pub dt: f64,
}

impl Default for WakeParams {
    fn default() -> Self {
        Self {
            period: 1.0,
            spacing: 0.9,
            half_gap: 0.3,
            core_radius: 0.15,
            strength: 1.0,
            envelope_start: 0.75,
            envelope_ramp: 0.3,
            envelope_spacings: 2,
            shear_x: 0.45,
            shear_gap: 0.22,
            shear_radii: (0.2, 0.06),
            shear_strength: 0.8,
            flap: 0.05,
            dt: 0.13,
        }
    }
}

impl WakeParams {
    /// Default physical domain, 1.5 times as long as it is high.
    pub fn extent() -> Extent {
        Extent::new(0.0, 3.6, -1.2, 1.2)
    }
}

/// `C^2` step: 0 below 0, 1 above 1.
fn smooth_step(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (s * (6.0 * s - 15.0) + 10.0)
}

fn envelope(p: &WakeParams, x: f64) -> f64 {
    let plateau = p.envelope_spacings as f64 * p.spacing;
    smooth_step((x - p.envelope_start) / p.envelope_ramp)
        - smooth_step((x - p.envelope_start - plateau) / p.envelope_ramp)
}

fn gaussian(dx: f64, dy: f64, rx: f64, ry: f64) -> f64 {
    (-0.5 * (dx * dx / (rx * rx) + dy * dy / (ry * ry))).exp()
}

/// Vorticity at time `t` on `grid`. Periodic in `t` with period
/// `params.period`.
pub fn synth_wake(t: f64, grid: &GridSpec, params: &WakeParams) -> Result<Tensor> {
    let p = params;
    if !(p.period > 0.0 && p.spacing > 0.0 && p.core_radius > 0.0 && p.envelope_ramp > 0.0) {
        return Err(Error::Config("wake period, spacing, core radius and ramp must be positive".into()));
    }
    let phase = (t / p.period).rem_euclid(1.0);
    let lo = p.envelope_start - p.spacing;
    let hi = p.envelope_start + p.envelope_spacings as f64 * p.spacing + p.envelope_ramp + p.spacing;
    // upper-row vortices at lo + (phase + k) L, lower row half a spacing on
    let count = ((hi - lo) / p.spacing).ceil() as usize + 1;
    let mut vortices = Vec::with_capacity(2 * count);
    for k in 0..count {
        let x = lo + (phase + k as f64) * p.spacing;
        let xl = x + 0.5 * p.spacing;
        let (wu, wl) = (envelope(p, x), envelope(p, xl));
        if wu > 0.0 {
            vortices.push((x, p.half_gap, -p.strength * wu));
        }
        if wl > 0.0 {
            vortices.push((xl, -p.half_gap, p.strength * wl));
        }
    }
    let flap = p.flap * (2.0 * PI * t / p.period).sin();
    let (xs, ys) = (grid.coords_x(), grid.coords_y());
    let r = p.core_radius;
    let field = Tensor::from_fn(&[grid.n_y, grid.n_x], |q| {
        let (x, y) = (xs[q % grid.n_x], ys[q / grid.n_x]);
        let mut w = 0.0;
        for &(vx, vy, s) in &vortices {
            w += s * gaussian(x - vx, y - vy, r, r);
        }
        let (sx, sy) = p.shear_radii;
        w += p.shear_strength
            * (gaussian(x - p.shear_x, y + p.shear_gap - flap, sx, sy)
                - gaussian(x - p.shear_x, y - p.shear_gap - flap, sx, sy));
        w
    });
    Ok(field)
}
