//! Differentiable ops recorded on a [`Tape`].


use nalgebra::{DMatrixView, DMatrixViewMut};

use super::fft::{fft2_complex, ifft2};
use super::special::gelu_with_slope;
use super::{ComplexTensor, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub fn erf(x: f64) -> f64 {
    libm::erf(x)
}

fn same_shape(tape: &Tape, a: Var, b: Var, op: &str) -> Result<Vec<usize>> {
    let (sa, sb) = (tape.shape(a), tape.shape(b));
    if sa != sb {
        return Err(Error::shape(format!("{op}: {sa:?} vs {sb:?}")));
    }
    Ok(sa)
}

impl Tape {
    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let shape = same_shape(self, a, b, "add")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        self.push_op("add", Tensor::from_parts(shape, data), &[a, b], |ctx| {
            vec![Some(ctx.grad.clone()), Some(ctx.grad.clone())]
        })
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let shape = same_shape(self, a, b, "sub")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x - y).collect();
        self.push_op("sub", Tensor::from_parts(shape, data), &[a, b], |ctx| {
            vec![Some(ctx.grad.clone()), Some(ctx.grad.map(|g| -g))]
        })
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let shape = same_shape(self, a, b, "mul")?;
        let (va, vb) = (self.value(a), self.value(b));
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        self.push_op("mul", Tensor::from_parts(shape, data), &[a, b], |ctx| {
            let (x, y) = (ctx.inputs[0], ctx.inputs[1]);
            let gx = ctx.needs[0].then(|| {
                let d = ctx.grad.data().iter().zip(y.data()).map(|(g, v)| g * v).collect();
                Tensor::from_parts(x.shape().to_vec(), d)
            });
            let gy = ctx.needs[1].then(|| {
                let d = ctx.grad.data().iter().zip(x.data()).map(|(g, v)| g * v).collect();
                Tensor::from_parts(y.shape().to_vec(), d)
            });
            vec![gx, gy]
        })
    }

    pub fn scale(&self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v * s);
        self.push_op("scale", value, &[a], move |ctx| vec![Some(ctx.grad.map(|g| g * s))])
    }

    pub fn add_scalar(&self, a: Var, s: f64) -> Result<Var> {
        let value = self.value(a).map(|v| v + s);
        self.push_op("add_scalar", value, &[a], |ctx| vec![Some(ctx.grad.clone())])
    }

    /// Sum of all elements, as a one-element tensor.
    pub fn sum(&self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let total = v.sum();
        self.push_op("sum", Tensor::scalar(total), &[a], |ctx| {
            let g = ctx.grad.data()[0];
            vec![Some(Tensor::full(ctx.inputs[0].shape(), g))]
        })
    }

    pub fn mean(&self, a: Var) -> Result<Var> {
        let n = self.value(a).len();
        if n == 0 {
            return Err(Error::shape("mean of empty tensor"));
        }
        let s = self.sum(a)?;
        self.scale(s, 1.0 / n as f64)
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).as_ref().clone().reshape(shape)?;
        self.push_op("reshape", value, &[a], |ctx| {
            let g = ctx.grad.clone().reshape(ctx.inputs[0].shape()).expect("same count");
            vec![Some(g)]
        })
    }

    /// Exact (erf-based) Gaussian error linear unit, elementwise.
    pub fn gelu(&self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let n = x.len();
        let mut out = vec![0.0; n];
        let mut slope = vec![0.0; n];
        gelu_with_slope(x.data(), &mut out, &mut slope);
        let value = Tensor::from_parts(x.shape().to_vec(), out);
        self.push_op("gelu", value, &[a], move |ctx| {
            let d = ctx.grad.data().iter().zip(&slope).map(|(g, s)| g * s).collect();
            vec![Some(Tensor::from_parts(ctx.grad.shape().to_vec(), d))]
        })
    }

    /// Per-pixel affine channel map: `x [h,w,cin] . weight [cin,cout] + bias [cout]`.
    pub fn conv1x1(&self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let (h, w, cin) = xv.dims3()?;
        let (wi, cout) = wv.dims2()?;
        if wi != cin || bv.shape() != [cout] {
            return Err(Error::shape(format!(
                "conv1x1: input channels {cin}, weight {:?}, bias {:?}",
                wv.shape(),
                bv.shape()
            )));
        }
        let pixels = h * w;
        // Channel-last data read column-major: `x` is `cin x pixels`, the
        // weight is `cout x cin` and the output `cout x pixels`.
        let mut out: Vec<f64> = bv.data().iter().copied().cycle().take(pixels * cout).collect();
        {
            let xm = DMatrixView::from_slice(xv.data(), cin, pixels);
            let wm = DMatrixView::from_slice(wv.data(), cout, cin);
            let mut om = DMatrixViewMut::from_slice(&mut out, cout, pixels);
            om.gemm(1.0, &wm, &xm, 1.0);
        }
        let value = Tensor::from_parts(vec![h, w, cout], out);
        self.push_op("conv1x1", value, &[x, weight, bias], move |ctx| {
            let xm = DMatrixView::from_slice(ctx.inputs[0].data(), cin, pixels);
            let wm = DMatrixView::from_slice(ctx.inputs[1].data(), cout, cin);
            let g = ctx.grad.data();
            let gm = DMatrixView::from_slice(g, cout, pixels);
            let gx = ctx.needs[0].then(|| {
                let mut gx = vec![0.0; pixels * cin];
                DMatrixViewMut::from_slice(&mut gx, cin, pixels).gemm(1.0, &wm.transpose(), &gm, 0.0);
                Tensor::from_parts(vec![h, w, cin], gx)
            });
            let gw = ctx.needs[1].then(|| {
                let mut gw = vec![0.0; cin * cout];
                DMatrixViewMut::from_slice(&mut gw, cout, cin).gemm(1.0, &gm, &xm.transpose(), 0.0);
                Tensor::from_parts(vec![cin, cout], gw)
            });
            let gb = ctx.needs[2].then(|| {
                let mut gb = vec![0.0; cout];
                for gp in g.chunks_exact(cout) {
                    for (b, v) in gb.iter_mut().zip(gp) {
                        *b += v;
                    }
                }
                Tensor::from_parts(vec![cout], gb)
            });
            vec![gx, gw, gb]
        })
    }

    /// Same-size 3x3 cross-correlation with one cell of zero padding.
    /// `weight` is `[3, 3, cin, cout]`, indexed `[dy, dx, ci, co]`.
    pub fn conv3x3(&self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let (h, w, cin) = xv.dims3()?;
        let (ky, kx, wi, cout) = match wv.shape() {
            &[a, b, c, d] => (a, b, c, d),
            s => return Err(Error::shape(format!("conv3x3 weight {s:?}"))),
        };
        if ky != 3 || kx != 3 || wi != cin || bv.shape() != [cout] {
            return Err(Error::shape(format!(
                "conv3x3: input channels {cin}, weight {:?}, bias {:?}",
                wv.shape(),
                bv.shape()
            )));
        }
        let taps = move |i: usize, j: usize| {
            (0..3).flat_map(move |dy| (0..3).map(move |dx| (dy, dx))).filter_map(move |(dy, dx)| {
                let (si, sj) = ((i + dy).checked_sub(1)?, (j + dx).checked_sub(1)?);
                (si < h && sj < w).then_some((dy * 3 + dx, si * w + sj))
            })
        };
        let (xd, wd) = (xv.data(), wv.data());
        let mut out = vec![0.0; h * w * cout];
        for i in 0..h {
            for j in 0..w {
                let p = i * w + j;
                let o = &mut out[p * cout..(p + 1) * cout];
                o.copy_from_slice(bv.data());
                for (tap, src) in taps(i, j) {
                    for ci in 0..cin {
                        let xval = xd[src * cin + ci];
                        let wrow = &wd[(tap * cin + ci) * cout..(tap * cin + ci + 1) * cout];
                        for (ov, wval) in o.iter_mut().zip(wrow) {
                            *ov += xval * wval;
                        }
                    }
                }
            }
        }
        let value = Tensor::from_parts(vec![h, w, cout], out);
        self.push_op("conv3x3", value, &[x, weight, bias], move |ctx| {
            let (xd, wd) = (ctx.inputs[0].data(), ctx.inputs[1].data());
            let g = ctx.grad.data();
            let mut gx = ctx.needs[0].then(|| vec![0.0; h * w * cin]);
            let mut gw = ctx.needs[1].then(|| vec![0.0; 9 * cin * cout]);
            for i in 0..h {
                for j in 0..w {
                    let p = i * w + j;
                    let gp = &g[p * cout..(p + 1) * cout];
                    for (tap, src) in taps(i, j) {
                        for ci in 0..cin {
                            let base = (tap * cin + ci) * cout;
                            if let Some(gx) = gx.as_mut() {
                                let wrow = &wd[base..base + cout];
                                gx[src * cin + ci] +=
                                    gp.iter().zip(wrow).map(|(a, b)| a * b).sum::<f64>();
                            }
                            if let Some(gw) = gw.as_mut() {
                                let xval = xd[src * cin + ci];
                                for (gwv, gv) in gw[base..base + cout].iter_mut().zip(gp) {
                                    *gwv += xval * gv;
                                }
                            }
                        }
                    }
                }
            }
            let gb = ctx.needs[2].then(|| {
                let mut gb = vec![0.0; cout];
                for gp in g.chunks_exact(cout) {
                    for (b, v) in gb.iter_mut().zip(gp) {
                        *b += v;
                    }
                }
                Tensor::from_parts(vec![cout], gb)
            });
            vec![
                gx.map(|d| Tensor::from_parts(vec![h, w, cin], d)),
                gw.map(|d| Tensor::from_parts(vec![3, 3, cin, cout], d)),
                gb,
            ]
        })
    }

    /// Nearest-neighbour resampling of an `[h, w, c]` map to `[h2, w2, c]`,
    /// taking source row `floor(i * h / h2)` and column `floor(j * w / w2)`.
    pub fn nearest_resize(&self, x: Var, h2: usize, w2: usize) -> Result<Var> {
        let xv = self.value(x);
        let (h, w, c) = xv.dims3()?;
        if h2 == 0 || w2 == 0 {
            return Err(Error::shape("nearest_resize to a zero extent"));
        }
        let src: Vec<usize> = (0..h2)
            .flat_map(|i| (0..w2).map(move |j| (i * h / h2) * w + j * w / w2))
            .collect();
        let mut out = vec![0.0; h2 * w2 * c];
        for (p, &s) in src.iter().enumerate() {
            out[p * c..(p + 1) * c].copy_from_slice(&xv.data()[s * c..(s + 1) * c]);
        }
        let value = Tensor::from_parts(vec![h2, w2, c], out);
        self.push_op("nearest_resize", value, &[x], move |ctx| {
            let mut gx = vec![0.0; h * w * c];
            let g = ctx.grad.data();
            for (p, &s) in src.iter().enumerate() {
                for k in 0..c {
                    gx[s * c + k] += g[p * c + k];
                }
            }
            vec![Some(Tensor::from_parts(vec![h, w, c], gx))]
        })
    }

    /// Dense layer `x [n_in] . weight [n_in, n_out] + bias [n_out]`.
    pub fn linear(&self, x: Var, weight: Var, bias: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(weight), self.value(bias));
        let n_in = xv.len();
        let (wi, n_out) = wv.dims2()?;
        if xv.rank() != 1 || wi != n_in || bv.shape() != [n_out] {
            return Err(Error::shape(format!(
                "linear: input {:?}, weight {:?}, bias {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let mut out = bv.data().to_vec();
        for (i, &xval) in xv.data().iter().enumerate() {
            for (o, wval) in out.iter_mut().zip(&wv.data()[i * n_out..(i + 1) * n_out]) {
                *o += xval * wval;
            }
        }
        let value = Tensor::from_parts(vec![n_out], out);
        self.push_op("linear", value, &[x, weight, bias], move |ctx| {
            let (xd, wd, g) = (ctx.inputs[0].data(), ctx.inputs[1].data(), ctx.grad.data());
            let gx = ctx.needs[0].then(|| {
                let d = (0..n_in)
                    .map(|i| wd[i * n_out..(i + 1) * n_out].iter().zip(g).map(|(a, b)| a * b).sum())
                    .collect();
                Tensor::from_parts(vec![n_in], d)
            });
            let gw = ctx.needs[1].then(|| {
                let mut d = vec![0.0; n_in * n_out];
                for (i, &xval) in xd.iter().enumerate() {
                    for (dv, gv) in d[i * n_out..(i + 1) * n_out].iter_mut().zip(g) {
                        *dv = xval * gv;
                    }
                }
                Tensor::from_parts(vec![n_in, n_out], d)
            });
            let gb = ctx.needs[2].then(|| ctx.grad.clone());
            vec![gx, gw, gb]
        })
    }

    /// Forward 2D DFT of a real `[h, w, c]` field. The complex result is
    /// returned interleaved as `[h, w, c, 2]`.
    pub fn fft2(&self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let spectrum = super::fft::fft2(&xv)?;
        self.push_op("fft2", spectrum.to_interleaved(), &[x], |ctx| {
            // adjoint of the unnormalized forward DFT is the unnormalized
            // inverse; the input is real so only the real part survives
            let g = ComplexTensor::from_interleaved(ctx.grad).expect("interleaved grad");
            let back = fft2_complex(&g, true).expect("rank-3 grad");
            let d = back.data().iter().map(|z| z.re).collect();
            vec![Some(Tensor::from_parts(ctx.inputs[0].shape().to_vec(), d))]
        })
    }

    /// Inverse 2D DFT of an interleaved `[h, w, c, 2]` Hermitian spectrum to
    /// a real `[h, w, c]` field.
    pub fn ifft2(&self, spectrum: Var) -> Result<Var> {
        let z = ComplexTensor::from_interleaved(&self.value(spectrum))?;
        let (h, w, _) = z.dims3()?;
        let value = ifft2(&z)?;
        let scale = 1.0 / (h * w) as f64;
        self.push_op("ifft2", value, &[spectrum], move |ctx| {
            let g = ComplexTensor::from_parts(
                ctx.grad.shape().to_vec(),
                ctx.grad.data().iter().map(|&v| num_complex::Complex64::new(v, 0.0)).collect(),
            );
            let mut back = fft2_complex(&g, false).expect("rank-3 grad");
            for z in back.data_mut() {
                *z *= scale;
            }
            vec![Some(back.to_interleaved())]
        })
    }

    /// Mean absolute difference. The subgradient of `|.|` at zero is zero.
    pub fn l1_loss(&self, pred: Var, target: Var) -> Result<Var> {
        let shape = same_shape(self, pred, target, "l1_loss")?;
        let (p, t) = (self.value(pred), self.value(target));
        let n = p.len();
        if n == 0 {
            return Err(Error::shape("l1_loss of empty tensors"));
        }
        let diff: Vec<f64> = p.data().iter().zip(t.data()).map(|(a, b)| a - b).collect();
        let loss = diff.iter().map(|d| d.abs()).sum::<f64>() / n as f64;
        self.push_op("l1_loss", Tensor::scalar(loss), &[pred, target], move |ctx| {
            let g = ctx.grad.data()[0] / n as f64;
            let sign: Vec<f64> = diff
                .iter()
                .map(|&d| if d > 0.0 { g } else if d < 0.0 { -g } else { 0.0 })
                .collect();
            let gp = ctx.needs[0].then(|| Tensor::from_parts(shape.clone(), sign.clone()));
            let gt = ctx.needs[1]
                .then(|| Tensor::from_parts(shape.clone(), sign.iter().map(|v| -v).collect()));
            vec![gp, gt]
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::tensor::grad_check;

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::seeded(seed);
        Tensor::from_fn(shape, |_| rng::uniform(&mut r, -1.0, 1.0))
    }

    /// Weighted sum with fixed random weights, so gradients are not uniform.
    fn probe(tape: &Tape, y: Var, seed: u64) -> Result<Var> {
        let w = tape.constant(random(&tape.shape(y), seed));
        let p = tape.mul(y, w)?;
        tape.sum(p)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let tape = Tape::new();
        let x = tape.leaf(random(&[3, 2], 1));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn quadratic_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[2], vec![1.0, 2.0]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, 4.0]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::new(&[1], vec![0.3]).unwrap());
        let y = tape.add(x, x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
        assert!(matches!(Tape::new().backward(Var(0)), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let tape = Tape::new();
        let x = tape.leaf(Tensor::ones(&[2]));
        let c = tape.constant(Tensor::ones(&[2]));
        let y = tape.mul(x, c).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert!(g.get(c).is_none());
        assert!(g.get(x).is_some());
    }

    #[test]
    fn gelu_reference_values() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[3], vec![0.0, 10.0, 1.0]).unwrap());
        let y = tape.value(tape.gelu(x).unwrap());
        assert_eq!(y.data()[0], 0.0);
        assert!((y.data()[1] - 10.0).abs() < 1e-6);
        // Phi(1) through an independent erf implementation
        let phi = 0.5 * (1.0 + statrs::function::erf::erf(1.0 / 2f64.sqrt()));
        assert!((y.data()[2] - phi).abs() < 1e-10);
    }

    #[test]
    fn conv1x1_identity_and_sum() {
        let tape = Tape::new();
        let x = tape.constant(random(&[3, 4, 2], 2));
        let eye = tape.constant(Tensor::new(&[2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let zero = tape.constant(Tensor::zeros(&[2]));
        let y = tape.conv1x1(x, eye, zero).unwrap();
        assert_eq!(*tape.value(y), *tape.value(x));

        let ones = tape.constant(Tensor::ones(&[2, 3, 2]));
        let w = tape.constant(Tensor::ones(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3]));
        let y = tape.conv1x1(ones, w, b).unwrap();
        assert!(tape.value(y).data().iter().all(|&v| v == 2.0));
    }

    #[test]
    fn conv1x1_matches_per_pixel_matvec() {
        let (x, w, b) = (random(&[4, 4, 3], 3), random(&[3, 5], 4), random(&[5], 5));
        let tape = Tape::new();
        let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
        let y = tape.value(tape.conv1x1(xv, wv, bv).unwrap());
        for i in 0..4 {
            for j in 0..4 {
                for co in 0..5 {
                    let mut acc = b.data()[co];
                    for ci in 0..3 {
                        acc += x.at3(i, j, ci) * w.at2(ci, co);
                    }
                    assert!((y.at3(i, j, co) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn conv1x1_channel_mismatch() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::zeros(&[2, 2, 3]));
        let w = tape.constant(Tensor::zeros(&[2, 2]));
        let b = tape.constant(Tensor::zeros(&[2]));
        assert!(matches!(tape.conv1x1(x, w, b), Err(Error::Shape(_))));
    }

    #[test]
    fn conv3x3_identity_and_padding_count() {
        let tape = Tape::new();
        let x = tape.constant(random(&[5, 6, 2], 6));
        let mut k = Tensor::zeros(&[3, 3, 2, 2]);
        for c in 0..2 {
            k.data_mut()[((3 + 1) * 2 + c) * 2 + c] = 1.0;
        }
        let k = tape.constant(k);
        let b = tape.constant(Tensor::zeros(&[2]));
        let y = tape.conv3x3(x, k, b).unwrap();
        assert_eq!(*tape.value(y), *tape.value(x));

        let ones = tape.constant(Tensor::ones(&[4, 4, 1]));
        let k = tape.constant(Tensor::ones(&[3, 3, 1, 1]));
        let b = tape.constant(Tensor::zeros(&[1]));
        let y = tape.value(tape.conv3x3(ones, k, b).unwrap());
        assert_eq!(y.at3(1, 1, 0), 9.0);
        assert_eq!(y.at3(0, 0, 0), 4.0);
        assert_eq!(y.at3(0, 2, 0), 6.0);
    }

    #[test]
    fn conv3x3_matches_sliding_window() {
        let (x, k, b) = (random(&[5, 5, 2], 7), random(&[3, 3, 2, 3], 8), random(&[3], 9));
        let tape = Tape::new();
        let (xv, kv, bv) = (tape.constant(x.clone()), tape.constant(k.clone()), tape.constant(b.clone()));
        let y = tape.value(tape.conv3x3(xv, kv, bv).unwrap());
        for i in 0..5i64 {
            for j in 0..5i64 {
                for co in 0..3 {
                    let mut acc = b.data()[co];
                    for dy in 0..3i64 {
                        for dx in 0..3i64 {
                            let (si, sj) = (i + dy - 1, j + dx - 1);
                            if !(0..5).contains(&si) || !(0..5).contains(&sj) {
                                continue;
                            }
                            for ci in 0..2 {
                                let widx = ((dy * 3 + dx) as usize * 2 + ci) * 3 + co;
                                acc += x.at3(si as usize, sj as usize, ci) * k.data()[widx];
                            }
                        }
                    }
                    assert!((y.at3(i as usize, j as usize, co) - acc).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn nearest_resize_cases() {
        let tape = Tape::new();
        let x = tape.constant(Tensor::new(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape.value(tape.nearest_resize(x, 4, 4).unwrap());
        let want = [1., 1., 2., 2., 1., 1., 2., 2., 3., 3., 4., 4., 3., 3., 4., 4.];
        assert_eq!(y.data(), &want);

        let same = tape.value(tape.nearest_resize(x, 2, 2).unwrap());
        assert_eq!(*same, *tape.value(x));

        let src = random(&[3, 3, 1], 10);
        let x = tape.constant(src.clone());
        let y = tape.value(tape.nearest_resize(x, 5, 5).unwrap());
        // floor(i * 3 / 5) for i = 0..5
        let table = [0, 0, 1, 1, 2];
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(y.at3(i, j, 0), src.at3(table[i], table[j], 0));
            }
        }
        assert!(tape.nearest_resize(x, 0, 3).is_err());
    }

    #[test]
    fn linear_cases() {
        let tape = Tape::new();
        let x = tape.constant(random(&[3], 11));
        let eye = tape.constant(Tensor::from_fn(&[3, 3], |k| if k % 4 == 0 { 1.0 } else { 0.0 }));
        let zb = tape.constant(Tensor::zeros(&[3]));
        assert_eq!(*tape.value(tape.linear(x, eye, zb).unwrap()), *tape.value(x));

        let zw = tape.constant(Tensor::zeros(&[3, 2]));
        let b = tape.constant(Tensor::new(&[2], vec![0.5, -1.5]).unwrap());
        assert_eq!(tape.value(tape.linear(x, zw, b).unwrap()).data(), &[0.5, -1.5]);

        let (xs, ws, bs) = (random(&[4], 12), random(&[4, 3], 13), random(&[3], 14));
        let y = tape
            .value(tape.linear(tape.constant(xs.clone()), tape.constant(ws.clone()), tape.constant(bs.clone())).unwrap());
        for o in 0..3 {
            let mut acc = bs.data()[o];
            for i in 0..4 {
                acc += xs.data()[i] * ws.at2(i, o);
            }
            assert!((y.data()[o] - acc).abs() < 1e-10);
        }
    }

    #[test]
    fn l1_loss_values() {
        let tape = Tape::new();
        let u = tape.constant(random(&[4, 4], 15));
        assert_eq!(tape.value(tape.l1_loss(u, u).unwrap()).data(), &[0.0]);
        let shifted = tape.add_scalar(u, -0.25).unwrap();
        let l = tape.value(tape.l1_loss(shifted, u).unwrap()).data()[0];
        assert!((l - 0.25).abs() < 1e-12);
    }

    #[test]
    fn gradients_of_every_op() {
        let checks: Vec<(&str, Box<dyn Fn(&Tape, Var) -> Result<Var>>, Vec<usize>)> = vec![
            ("gelu", Box::new(|t: &Tape, x| probe(t, t.gelu(x)?, 1)), vec![3, 4]),
            (
                "mul",
                Box::new(|t: &Tape, x| {
                    let y = t.mul(x, x)?;
                    probe(t, y, 2)
                }),
                vec![5],
            ),
            (
                "conv1x1",
                Box::new(|t: &Tape, x| {
                    let w = t.constant(random(&[3, 2], 3));
                    let b = t.constant(random(&[2], 4));
                    probe(t, t.conv1x1(x, w, b)?, 5)
                }),
                vec![3, 3, 3],
            ),
            (
                "conv3x3",
                Box::new(|t: &Tape, x| {
                    let w = t.constant(random(&[3, 3, 2, 2], 6));
                    let b = t.constant(random(&[2], 7));
                    probe(t, t.conv3x3(x, w, b)?, 8)
                }),
                vec![4, 3, 2],
            ),
            (
                "nearest_resize",
                Box::new(|t: &Tape, x| probe(t, t.nearest_resize(x, 5, 7)?, 9)),
                vec![3, 3, 2],
            ),
            (
                "linear",
                Box::new(|t: &Tape, x| {
                    let w = t.constant(random(&[4, 3], 10));
                    let b = t.constant(random(&[3], 11));
                    probe(t, t.linear(x, w, b)?, 12)
                }),
                vec![4],
            ),
            (
                "fft2",
                Box::new(|t: &Tape, x| probe(t, t.fft2(x)?, 13)),
                vec![4, 8, 2],
            ),
            (
                "ifft2",
                Box::new(|t: &Tape, x| {
                    let s = t.fft2(x)?;
                    let w = t.constant(random(&[4, 4, 1], 14));
                    let back = t.ifft2(s)?;
                    let y = t.mul(back, w)?;
                    t.sum(y)
                }),
                vec![4, 4, 1],
            ),
            (
                "l1_loss",
                Box::new(|t: &Tape, x| {
                    let target = t.constant(random(&[6], 15));
                    t.l1_loss(x, target)
                }),
                vec![6],
            ),
        ];
        for (name, f, shape) in checks {
            let x = random(&shape, 99);
            let err = grad_check(|t, v| f(t, v), &x, 1e-4).unwrap();
            assert!(err < 1e-3, "{name}: relative error {err}");
        }
    }

    #[test]
    fn gradients_wrt_weights() {
        let x = random(&[3, 3, 2], 20);
        let w = random(&[3, 3, 2, 2], 21);
        let err = grad_check(
            |t, wv| {
                let xv = t.constant(x.clone());
                let b = t.constant(Tensor::zeros(&[2]));
                probe(t, t.conv3x3(xv, wv, b)?, 22)
            },
            &w,
            1e-4,
        )
        .unwrap();
        assert!(err < 1e-3, "{err}");
    }
}
