//! Dense row-major tensors, 2D Fourier transforms and a reverse-mode tape.
//!
//! [`Tensor`] is a plain value type. Gradient tracking lives on the [`Tape`]:
//! tensors are registered as leaves, ops append nodes, and
//! [`Tape::backward`] consumes the tape and returns the leaf gradients.

mod fft;
mod gradcheck;
mod ops;
mod special;
mod tape;

use num_complex::Complex64;

use crate::error::{Error, Result};

pub use fft::{fft2, fft2_complex, fft_inplace, hermitian_residue, ifft2, ifft2_complex};
pub use gradcheck::grad_check;
pub use ops::erf;
pub use special::{gelu_with_slope, normal_cdf_pdf};
pub use tape::{BackwardCtx, Gradients, Tape, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, rejecting count mismatches and non-finite values.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {count} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::new"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Caller guarantees `shape` and `data` agree; finiteness is only screened
    /// in debug builds.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![value; n])
    }

    pub fn scalar(value: f64) -> Self {
        Self::from_parts(vec![1], vec![value])
    }

    pub fn from_fn(shape: &[usize], f: impl FnMut(usize) -> f64) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), (0..n).map(f).collect())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(Error::Contract(format!(
                "item() on tensor of shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            &[h, w] => Ok((h, w)),
            s => Err(Error::shape(format!("expected rank-2 tensor, got {s:?}"))),
        }
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w, c] => Ok((h, w, c)),
            s => Err(Error::shape(format!("expected rank-3 tensor, got {s:?}"))),
        }
    }

    /// Value at `(i, j)` of a rank-2 tensor.
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.shape[1] + j]
    }

    /// Value at `(i, j, c)` of a rank-3 tensor.
    pub fn at3(&self, i: usize, j: usize, c: usize) -> f64 {
        self.data[(i * self.shape[1] + j) * self.shape[2] + c]
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Rounds every value through `f32`, the precision used on disk.
    pub fn round_f32(&self) -> Self {
        self.map(|v| v as f32 as f64)
    }

    /// Extracts channel `c` of a rank-3 tensor as a rank-2 tensor.
    pub fn channel(&self, c: usize) -> Result<Self> {
        let (h, w, ch) = self.dims3()?;
        if c >= ch {
            return Err(Error::shape(format!("channel {c} out of {ch}")));
        }
        let data = (0..h * w).map(|p| self.data[p * ch + c]).collect();
        Ok(Self::from_parts(vec![h, w], data))
    }

    /// Stacks rank-2 fields of identical shape as channels of a rank-3 tensor.
    pub fn stack_channels(fields: &[&Tensor]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::shape("stack of zero channels"))?;
        let (h, w) = first.dims2()?;
        for f in fields {
            if f.shape() != [h, w] {
                return Err(Error::shape(format!(
                    "channel shape {:?} differs from {:?}",
                    f.shape(),
                    [h, w]
                )));
            }
        }
        let c = fields.len();
        let mut data = vec![0.0; h * w * c];
        for (k, f) in fields.iter().enumerate() {
            for (p, v) in f.data.iter().enumerate() {
                data[p * c + k] = *v;
            }
        }
        Ok(Self::from_parts(vec![h, w, c], data))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor {
    shape: Vec<usize>,
    data: Vec<Complex64>,
}

impl ComplexTensor {
    pub fn new(shape: &[usize], data: Vec<Complex64>) -> Result<Self> {
        let count: usize = shape.iter().product();
        if count != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} holds {count} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite("ComplexTensor::new"));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<Complex64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self::from_parts(shape.to_vec(), vec![Complex64::new(0.0, 0.0); n])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match self.shape.as_slice() {
            &[h, w, c] => Ok((h, w, c)),
            s => Err(Error::shape(format!("expected rank-3 tensor, got {s:?}"))),
        }
    }

    pub fn at3(&self, i: usize, j: usize, c: usize) -> Complex64 {
        self.data[(i * self.shape[1] + j) * self.shape[2] + c]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Packs into a real tensor with a trailing `[re, im]` axis.
    pub fn to_interleaved(&self) -> Tensor {
        let mut shape = self.shape.clone();
        shape.push(2);
        let data = self.data.iter().flat_map(|z| [z.re, z.im]).collect();
        Tensor::from_parts(shape, data)
    }

    /// Inverse of [`ComplexTensor::to_interleaved`].
    pub fn from_interleaved(t: &Tensor) -> Result<Self> {
        let (last, rest) = t
            .shape()
            .split_last()
            .ok_or_else(|| Error::shape("empty shape"))?;
        if *last != 2 {
            return Err(Error::shape(format!(
                "interleaved complex needs trailing axis 2, got {:?}",
                t.shape()
            )));
        }
        let data = t
            .data()
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        Ok(Self::from_parts(rest.to_vec(), data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_count_mismatch_and_nan() {
        assert!(matches!(Tensor::new(&[2, 2], vec![0.0; 3]), Err(Error::Shape(_))));
        assert!(matches!(
            Tensor::new(&[2], vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Tensor::new(&[1], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn channel_stack_round_trip() {
        let a = Tensor::from_fn(&[2, 3], |i| i as f64);
        let b = Tensor::from_fn(&[2, 3], |i| -(i as f64));
        let s = Tensor::stack_channels(&[&a, &b]).unwrap();
        assert_eq!(s.shape(), &[2, 3, 2]);
        assert_eq!(s.channel(0).unwrap(), a);
        assert_eq!(s.channel(1).unwrap(), b);
        assert_eq!(s.at3(1, 2, 1), -5.0);
    }

    #[test]
    fn interleaved_complex_round_trip() {
        let z = ComplexTensor::new(
            &[2],
            vec![Complex64::new(1.0, -2.0), Complex64::new(0.5, 3.0)],
        )
        .unwrap();
        let t = z.to_interleaved();
        assert_eq!(t.shape(), &[2, 2]);
        assert_eq!(ComplexTensor::from_interleaved(&t).unwrap(), z);
    }
}
