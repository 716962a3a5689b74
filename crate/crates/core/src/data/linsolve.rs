//! Symmetric 5-point operators on a structured grid and a Jacobi-preconditioned
//! conjugate-gradient solver for them.

use crate::error::{Error, Result};

/// `(A x)_p = diag_p x_p - sum over faces w_f x_q` for free nodes `p`.
/// `east[p]` couples `p` with `p + 1`, `north[p]` couples `p` with `p + n_x`.
/// Fixed (Dirichlet) nodes carry identity rows and are never coupled into
/// free rows; their known values enter the right-hand side instead.
#[derive(Clone, Debug)]
pub struct FivePoint {
    pub n_y: usize,
    pub n_x: usize,
    pub diag: Vec<f64>,
    pub east: Vec<f64>,
    pub north: Vec<f64>,
    pub fixed: Vec<bool>,
}

impl FivePoint {
    pub fn new(n_y: usize, n_x: usize) -> Self {
        let n = n_y * n_x;
        Self {
            n_y,
            n_x,
            diag: vec![0.0; n],
            east: vec![0.0; n],
            north: vec![0.0; n],
            fixed: vec![false; n],
        }
    }

    /// Adds a conductance `w` between neighbouring nodes `p` and `q`
    /// (`q = p + 1` or `q = p + n_x`).
    pub fn add_face(&mut self, p: usize, q: usize, w: f64) {
        self.diag[p] += w;
        self.diag[q] += w;
        if q == p + 1 {
            self.east[p] += w;
        } else {
            debug_assert_eq!(q, p + self.n_x);
            self.north[p] += w;
        }
    }

    /// Full operator including the couplings to fixed nodes; identity on
    /// fixed rows. Evaluated in flux form `sum_f w_f (x_p - x_q)`, so a
    /// constant field gives exactly zero on free rows.
    pub fn apply_full(&self, x: &[f64], y: &mut [f64]) {
        let (n_y, n_x) = (self.n_y, self.n_x);
        for p in 0..n_y * n_x {
            y[p] = if self.fixed[p] { x[p] } else { 0.0 };
        }
        for i in 0..n_y {
            for j in 0..n_x {
                let p = i * n_x + j;
                for (q, w) in [(p + 1, self.east[p]), (p + n_x, self.north[p])] {
                    if w == 0.0 || (q == p + 1 && j + 1 == n_x) || q >= n_y * n_x {
                        continue;
                    }
                    let flux = w * (x[p] - x[q]);
                    if !self.fixed[p] {
                        y[p] += flux;
                    }
                    if !self.fixed[q] {
                        y[q] -= flux;
                    }
                }
            }
        }
    }

    /// `b - A_fixed x_fixed` on free rows, zero on fixed rows.
    fn lifted_rhs(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        let n = self.n_y * self.n_x;
        let fixed_vals: Vec<f64> = (0..n).map(|p| if self.fixed[p] { x[p] } else { 0.0 }).collect();
        let mut lifted = vec![0.0; n];
        self.apply_full(&fixed_vals, &mut lifted);
        (0..n)
            .map(|p| if self.fixed[p] { 0.0 } else { b[p] - lifted[p] })
            .collect()
    }

    fn scatter_free(&self, z: &[f64], x: &mut [f64]) {
        for (p, v) in z.iter().enumerate() {
            if !self.fixed[p] {
                x[p] = *v;
            }
        }
    }

    /// Solves `A x = b` for the free nodes with fixed nodes held at
    /// `x[p]` (entries of `x` at fixed nodes are read, free entries are
    /// overwritten). Stops when `|r| <= rtol |b_free|`.
    pub fn solve(&self, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<usize> {
        let rhs = self.lifted_rhs(b, x);
        let mut z = vec![0.0; rhs.len()];
        let iters = pcg(&FreeBlock::new(self), &rhs, &mut z, rtol, max_iter)?;
        self.scatter_free(&z, x);
        Ok(iters)
    }

    /// Same contract as [`FivePoint::solve`], by banded Cholesky
    /// factorization. Costs `O(n n_x^2)` time and `O(n n_x)` memory.
    pub fn solve_direct(&self, b: &[f64], x: &mut [f64]) -> Result<()> {
        let rhs = self.lifted_rhs(b, x);
        let z = BandCholesky::factor(&FreeBlock::new(self))?.solve(rhs);
        self.scatter_free(&z, x);
        Ok(())
    }
}

/// Free-to-free block with faces touching a fixed node zeroed, so applying
/// it needs no branches.
struct FreeBlock {
    n_x: usize,
    diag: Vec<f64>,
    east: Vec<f64>,
    north: Vec<f64>,
}

impl FreeBlock {
    fn new(op: &FivePoint) -> Self {
        let (n, n_x) = (op.n_y * op.n_x, op.n_x);
        let free = |p: usize| !op.fixed[p];
        let diag = (0..n).map(|p| if free(p) { op.diag[p] } else { 0.0 }).collect();
        let east = (0..n)
            .map(|p| if p + 1 < n && free(p) && free(p + 1) { op.east[p] } else { 0.0 })
            .collect();
        let north = (0..n)
            .map(|p| if p + n_x < n && free(p) && free(p + n_x) { op.north[p] } else { 0.0 })
            .collect();
        Self { n_x, diag, east, north }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let (n, n_x) = (x.len(), self.n_x);
        for p in 0..n {
            y[p] = self.diag[p] * x[p];
        }
        for p in 0..n - 1 {
            y[p] -= self.east[p] * x[p + 1];
        }
        for p in 1..n {
            y[p] -= self.east[p - 1] * x[p - 1];
        }
        for p in 0..n - n_x {
            y[p] -= self.north[p] * x[p + n_x];
        }
        for p in n_x..n {
            y[p] -= self.north[p - n_x] * x[p - n_x];
        }
    }
}

/// Lower Cholesky factor of a free block, padded with an identity on fixed
/// rows. Row `i` stores columns `i - n_x ..= i` at offsets `0 ..= n_x`.
struct BandCholesky {
    band: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    fn factor(op: &FreeBlock) -> Result<Self> {
        let (n, b) = (op.diag.len(), op.n_x);
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            // row i of A, fixed rows as identity
            let a_ii = if op.diag[i] == 0.0 { 1.0 } else { op.diag[i] };
            l[i * w + b] = a_ii;
            if i >= 1 {
                l[i * w + b - 1] = -op.east[i - 1];
            }
            if i >= b {
                l[i * w] = -op.north[i - b];
            }
            for j in i.saturating_sub(b)..=i {
                let len = j + b - i;
                let s = l[i * w + (j + b - i)] - dot(&l[i * w..i * w + len], &l[j * w + (i - j)..j * w + b]);
                if i == j {
                    if !(s > 1e-12 * a_ii) {
                        return Err(Error::Solver(format!("operator not positive definite at row {i}")));
                    }
                    l[i * w + b] = s.sqrt();
                } else {
                    l[i * w + (j + b - i)] = s / l[j * w + b];
                }
            }
        }
        Ok(Self { band: b, l })
    }

    fn solve(&self, mut y: Vec<f64>) -> Vec<f64> {
        let (b, w, n) = (self.band, self.band + 1, y.len());
        for i in 0..n {
            let lo = i.saturating_sub(b);
            let row = &self.l[i * w + (lo + b - i)..i * w + b];
            y[i] = (y[i] - dot(row, &y[lo..i])) / self.l[i * w + b];
        }
        for i in (0..n).rev() {
            y[i] /= self.l[i * w + b];
            let lo = i.saturating_sub(b);
            let xi = y[i];
            let row = &self.l[i * w + (lo + b - i)..i * w + b];
            for (yk, lk) in y[lo..i].iter_mut().zip(row) {
                *yk -= lk * xi;
            }
        }
        y
    }
}

/// Dot product with eight independent accumulators, so it vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] = x[k].mul_add(y[k], acc[k]);
        }
    }
    acc.iter().sum::<f64>() + tail
}

/// Jacobi-preconditioned CG on the free block. `x` starts at zero.
fn pcg(op: &FreeBlock, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let inv_diag: Vec<f64> = (0..n)
        .map(|p| if op.diag[p] == 0.0 { 0.0 } else { 1.0 / op.diag[p] })
        .collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(a, d)| a * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        op.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver(format!("operator not positive definite (p.Ap = {pap:e})")));
        }
        let alpha = rz / pap;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        if dot(&r, &r).sqrt() <= rtol * b_norm {
            return Ok(it + 1);
        }
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    Err(Error::Solver(format!("conjugate gradient did not reach {rtol:e} in {max_iter} iterations")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian(n: usize) -> FivePoint {
        let mut op = FivePoint::new(n, n);
        for i in 0..n {
            for j in 0..n {
                let p = i * n + j;
                if j + 1 < n {
                    op.add_face(p, p + 1, 1.0);
                }
                if i + 1 < n {
                    op.add_face(p, p + n, 1.0);
                }
                op.fixed[p] = i == 0 || j == 0 || i == n - 1 || j == n - 1;
            }
        }
        op
    }

    #[test]
    fn solution_satisfies_the_system() {
        let op = laplacian(12);
        let n = 144;
        let b: Vec<f64> = (0..n).map(|k| ((k * 37) % 11) as f64 - 5.0).collect();
        let mut x: Vec<f64> = (0..n).map(|k| if op.fixed[k] { 0.5 * k as f64 } else { 0.0 }).collect();
        op.solve(&b, &mut x, 1e-12, 1000).unwrap();
        let mut ax = vec![0.0; n];
        op.apply_full(&x, &mut ax);
        for p in 0..n {
            if op.fixed[p] {
                assert_eq!(x[p], 0.5 * p as f64);
            } else {
                assert!((ax[p] - b[p]).abs() < 1e-9, "{p}: {} vs {}", ax[p], b[p]);
            }
        }
    }

    #[test]
    fn constant_boundary_gives_constant_interior() {
        let op = laplacian(9);
        let mut x: Vec<f64> = (0..81).map(|p| if op.fixed[p] { 3.25 } else { 0.0 }).collect();
        op.solve(&vec![0.0; 81], &mut x, 1e-13, 100).unwrap();
        assert!(x.iter().all(|&v| (v - 3.25).abs() < 1e-10));
    }

    #[test]
    fn zero_system_needs_no_iterations() {
        let op = laplacian(9);
        let mut x = vec![0.0; 81];
        assert_eq!(op.solve(&vec![0.0; 81], &mut x, 1e-10, 100).unwrap(), 0);
    }

    #[test]
    fn direct_solve_matches_the_system() {
        // variable weights on a non-square grid, a few fixed nodes
        let (n_y, n_x) = (7, 13);
        let mut op = FivePoint::new(n_y, n_x);
        for i in 0..n_y {
            for j in 0..n_x {
                let p = i * n_x + j;
                if j + 1 < n_x {
                    op.add_face(p, p + 1, 1.0 + 0.3 * ((p * 7) % 5) as f64);
                }
                if i + 1 < n_y {
                    op.add_face(p, p + n_x, 0.2 + ((p * 3) % 4) as f64);
                }
            }
        }
        for p in [2, 3, n_y * n_x - 1] {
            op.fixed[p] = true;
        }
        let n = n_y * n_x;
        let b: Vec<f64> = (0..n).map(|k| ((k * 29) % 13) as f64 - 6.0).collect();
        let init: Vec<f64> = (0..n).map(|k| if op.fixed[k] { k as f64 } else { 0.0 }).collect();
        let (mut xd, mut xc) = (init.clone(), init);
        op.solve_direct(&b, &mut xd).unwrap();
        op.solve(&b, &mut xc, 1e-13, 1000).unwrap();
        let mut ax = vec![0.0; n];
        op.apply_full(&xd, &mut ax);
        for p in 0..n {
            if op.fixed[p] {
                assert_eq!(xd[p], p as f64);
            } else {
                assert!((ax[p] - b[p]).abs() < 1e-10);
                assert!((xd[p] - xc[p]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn direct_solve_rejects_a_singular_block() {
        // pure Neumann: no fixed node, constants are in the null space
        let mut op = laplacian(6);
        op.fixed.iter_mut().for_each(|f| *f = false);
        let mut x = vec![0.0; 36];
        assert!(matches!(op.solve_direct(&vec![1.0; 36], &mut x), Err(Error::Solver(_))));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let op = laplacian(20);
        let mut x = vec![0.0; 400];
        assert!(matches!(op.solve(&vec![1.0; 400], &mut x, 1e-14, 2), Err(Error::Solver(_))));
    }
}
