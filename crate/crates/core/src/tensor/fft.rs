use std::f64::consts::PI;

use num_complex::Complex64;

use super::{ComplexTensor, Tensor};
use crate::error::{Error, Result};

/// Relative tolerance on the Hermitian symmetry of a spectrum handed to
/// [`ifft2`].
pub const HERMITIAN_TOL: f64 = 1e-5;
/// Relative tolerance on the imaginary residue discarded by [`ifft2`].
pub const IMAG_TOL: f64 = 1e-6;

/// Unnormalized in-place DFT: `X_k = sum_n x_n exp(-+2 pi i k n / N)`, with
/// the `+` sign when `inverse` is set. Radix-2 for power-of-two lengths,
/// direct summation otherwise.
pub fn fft_inplace(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    if n.is_power_of_two() {
        radix2(buf, inverse);
    } else {
        naive_dft(buf, inverse);
    }
}

fn radix2(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let twiddles: Vec<Complex64> = (0..n / 2)
        .map(|j| Complex64::from_polar(1.0, sign * 2.0 * PI * j as f64 / n as f64))
        .collect();
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for j in 0..half {
                let u = buf[start + j];
                let v = buf[start + j + half] * twiddles[j * stride];
                buf[start + j] = u + v;
                buf[start + j + half] = u - v;
            }
        }
        len <<= 1;
    }
}

fn naive_dft(buf: &mut [Complex64], inverse: bool) {
    let n = buf.len();
    let sign = if inverse { 1.0 } else { -1.0 };
    let input = buf.to_vec();
    for (k, out) in buf.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (m, x) in input.iter().enumerate() {
            // reduce k*m mod n first so the angle stays small and exact
            let phase = ((k * m) % n) as f64 / n as f64;
            acc += x * Complex64::from_polar(1.0, sign * 2.0 * PI * phase);
        }
        *out = acc;
    }
}

/// Unnormalized 2D transform of each channel of an `[h, w, c]` tensor.
pub fn fft2_complex(x: &ComplexTensor, inverse: bool) -> Result<ComplexTensor> {
    let (h, w, c) = x.dims3()?;
    let mut out = x.clone();
    let data = out.data_mut();
    let mut row = vec![Complex64::new(0.0, 0.0); w];
    let mut col = vec![Complex64::new(0.0, 0.0); h];
    for ch in 0..c {
        for i in 0..h {
            for j in 0..w {
                row[j] = data[(i * w + j) * c + ch];
            }
            fft_inplace(&mut row, inverse);
            for j in 0..w {
                data[(i * w + j) * c + ch] = row[j];
            }
        }
        for j in 0..w {
            for i in 0..h {
                col[i] = data[(i * w + j) * c + ch];
            }
            fft_inplace(&mut col, inverse);
            for i in 0..h {
                data[(i * w + j) * c + ch] = col[i];
            }
        }
    }
    Ok(out)
}

/// Forward 2D DFT of a real `[h, w, c]` field, per channel, without any
/// `1/(hw)` factor.
pub fn fft2(x: &Tensor) -> Result<ComplexTensor> {
    let (h, w, c) = x.dims3()?;
    if h == 0 || w == 0 {
        return Err(Error::shape("fft2 needs non-empty spatial extents"));
    }
    let z = ComplexTensor::from_parts(
        vec![h, w, c],
        x.data().iter().map(|&v| Complex64::new(v, 0.0)).collect(),
    );
    fft2_complex(&z, false)
}

/// Inverse 2D DFT with the `1/(hw)` normalization, complex result.
pub fn ifft2_complex(x: &ComplexTensor) -> Result<ComplexTensor> {
    let (h, w, _) = x.dims3()?;
    let mut out = fft2_complex(x, true)?;
    let scale = 1.0 / (h * w) as f64;
    for z in out.data_mut() {
        *z *= scale;
    }
    Ok(out)
}

/// Largest `|X[k] - conj(X[-k])|` relative to the largest coefficient.
pub fn hermitian_residue(x: &ComplexTensor) -> Result<f64> {
    let (h, w, c) = x.dims3()?;
    let scale = x.max_abs();
    if scale == 0.0 {
        return Ok(0.0);
    }
    let mut worst: f64 = 0.0;
    for i in 0..h {
        let mi = (h - i) % h;
        for j in 0..w {
            let mj = (w - j) % w;
            for ch in 0..c {
                let d = x.at3(i, j, ch) - x.at3(mi, mj, ch).conj();
                worst = worst.max(d.norm());
            }
        }
    }
    Ok(worst / scale)
}

/// Inverse 2D DFT of a Hermitian-symmetric spectrum back to a real field.
pub fn ifft2(x: &ComplexTensor) -> Result<Tensor> {
    let residue = hermitian_residue(x)?;
    if residue > HERMITIAN_TOL {
        return Err(Error::Symmetry { residue });
    }
    let z = ifft2_complex(x)?;
    let scale = z.max_abs();
    if scale > 0.0 {
        let imag = z.data().iter().fold(0.0f64, |m, v| m.max(v.im.abs())) / scale;
        if imag > IMAG_TOL {
            return Err(Error::Symmetry { residue: imag });
        }
    }
    let shape = z.shape().to_vec();
    Ok(Tensor::from_parts(shape, z.data().iter().map(|v| v.re).collect()))
}
