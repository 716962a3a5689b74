//! Darcy flow `-div(a grad u) = 1` with homogeneous Dirichlet boundaries and
//! a two-valued random coefficient.

use std::f64::consts::PI;

use super::linsolve::FivePoint;
use crate::embed::{GridSpec, Layout};
use crate::error::{Error, Result};
use crate::rng::{self, Rng64};
use crate::tensor::Tensor;

pub const HIGH: f64 = 12.0;
pub const LOW: f64 = 3.0;
/// Largest wavenumber per axis drawn for the random field. Coefficients are
/// drawn independently of the grid, so one seed describes the same
/// continuous field at every resolution.
pub const MAX_WAVENUMBER: i32 = 24;
const TAU: f64 = 3.0;
const CG_RTOL: f64 = 1e-8;

/// Gaussian random field with covariance `(-Laplacian + tau^2)^-2` on the
/// unit square (periodic), synthesized from its Fourier series. The mean
/// mode is dropped.
pub fn sample_grf(rng: &mut Rng64, grid: &GridSpec) -> Tensor {
    let k = MAX_WAVENUMBER;
    let side = (2 * k + 1) as usize;
    // (re, im) draws in a fixed order: ky outer, kx inner
    let mut coef = vec![(0.0, 0.0); side * side];
    for c in coef.iter_mut() {
        *c = (rng::normal(rng), rng::normal(rng));
    }
    let e = &grid.extent;
    let xs: Vec<f64> = grid.coords_x().iter().map(|x| (x - e.x_min) / (e.x_max - e.x_min)).collect();
    let ys: Vec<f64> = grid.coords_y().iter().map(|y| (y - e.y_min) / (e.y_max - e.y_min)).collect();
    let (n_y, n_x) = grid.shape();
    let mut out = vec![0.0; n_y * n_x];
    let mut p_row = vec![0.0; n_x];
    let mut q_row = vec![0.0; n_x];
    for ky in -k..=k {
        p_row.iter_mut().for_each(|v| *v = 0.0);
        q_row.iter_mut().for_each(|v| *v = 0.0);
        for kx in -k..=k {
            if kx == 0 && ky == 0 {
                continue;
            }
            let k2 = (kx * kx + ky * ky) as f64;
            let sigma = TAU * TAU / (4.0 * PI * PI * k2 + TAU * TAU);
            let (re, im) = coef[((ky + k) as usize) * side + (kx + k) as usize];
            for (j, &x) in xs.iter().enumerate() {
                let (s, c) = (2.0 * PI * kx as f64 * x).sin_cos();
                p_row[j] += sigma * (re * c + im * s);
                q_row[j] += sigma * (im * c - re * s);
            }
        }
        for (i, &y) in ys.iter().enumerate() {
            let (s, c) = (2.0 * PI * ky as f64 * y).sin_cos();
            let row = &mut out[i * n_x..(i + 1) * n_x];
            for j in 0..n_x {
                row[j] += p_row[j] * c + q_row[j] * s;
            }
        }
    }
    Tensor::from_fn(&[n_y, n_x], |p| out[p])
}

/// Random field thresholded at the median of its (zero-mean, symmetric)
/// law: [`HIGH`] where it is nonnegative, [`LOW`] elsewhere.
pub fn sample_darcy_coeff(rng: &mut Rng64, grid: &GridSpec) -> Tensor {
    sample_grf(rng, grid).map(|v| if v >= 0.0 { HIGH } else { LOW })
}

fn harmonic(a: f64, b: f64) -> f64 {
    2.0 * a * b / (a + b)
}

fn check_grid(a: &Tensor, grid: &GridSpec) -> Result<(usize, usize)> {
    if grid.layout != Layout::Nodal {
        return Err(Error::Config("the Darcy solver needs a nodal grid".into()));
    }
    let shape = grid.shape();
    if a.shape() != [shape.0, shape.1] {
        return Err(Error::shape(format!("coefficient {:?} on grid {:?}", a.shape(), shape)));
    }
    if shape.0 < 3 || shape.1 < 3 {
        return Err(Error::Config("the Darcy solver needs at least one interior node".into()));
    }
    if a.data().iter().any(|&v| v <= 0.0) {
        return Err(Error::Contract("Darcy coefficient must be positive".into()));
    }
    Ok(shape)
}

/// 5-point operator with harmonic-mean face coefficients, scaled so that a
/// free row reads `sum_f a_f (u_p - u_q) / h_f^2 = f_p`.
pub fn darcy_operator(a: &Tensor, grid: &GridSpec) -> Result<FivePoint> {
    let (n_y, n_x) = check_grid(a, grid)?;
    let (ix2, iy2) = (1.0 / (grid.dx() * grid.dx()), 1.0 / (grid.dy() * grid.dy()));
    let ad = a.data();
    let mut op = FivePoint::new(n_y, n_x);
    for i in 0..n_y {
        for j in 0..n_x {
            let p = i * n_x + j;
            op.fixed[p] = i == 0 || j == 0 || i == n_y - 1 || j == n_x - 1;
            if j + 1 < n_x {
                op.add_face(p, p + 1, harmonic(ad[p], ad[p + 1]) * ix2);
            }
            if i + 1 < n_y {
                op.add_face(p, p + n_x, harmonic(ad[p], ad[p + n_x]) * iy2);
            }
        }
    }
    Ok(op)
}

/// Solves for `u` on every node (zero on the boundary) to relative
/// residual 1e-8.
pub fn solve_darcy(a: &Tensor, grid: &GridSpec) -> Result<Tensor> {
    let op = darcy_operator(a, grid)?;
    let n = grid.len();
    let b = vec![1.0; n];
    let mut u = vec![0.0; n];
    op.solve(&b, &mut u, CG_RTOL, 20 * n)?;
    Tensor::new(a.shape(), u)
}

/// `|A u - f| / |f|` over the interior nodes, with `f = 1`.
pub fn darcy_residual(a: &Tensor, grid: &GridSpec, u: &Tensor) -> Result<f64> {
    let op = darcy_operator(a, grid)?;
    let mut au = vec![0.0; grid.len()];
    op.apply_full(u.data(), &mut au);
    let (mut r2, mut f2) = (0.0, 0.0);
    for (p, v) in au.iter().enumerate() {
        if !op.fixed[p] {
            r2 += (v - 1.0) * (v - 1.0);
            f2 += 1.0;
        }
    }
    Ok((r2 / f2).sqrt())
}
