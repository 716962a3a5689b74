use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Compares the tape gradient of a scalar function against central
/// differences. Returns the largest
/// `|analytic - numeric| / (|analytic| + |numeric| + 1e-8)` over the
/// coordinates of `x`.
pub fn grad_check<F>(f: F, x: &Tensor, step: f64) -> Result<f64>
where
    F: Fn(&Tape, Var) -> Result<Var>,
{
    let tape = Tape::new();
    let xv = tape.leaf(x.clone());
    let loss = f(&tape, xv)?;
    let analytic = match tape.backward(loss)?.take(xv) {
        Some(g) => g,
        None => Tensor::zeros(x.shape()),
    };

    let eval = |p: &Tensor| -> Result<f64> {
        let tape = Tape::new();
        let v = tape.constant(p.clone());
        let out = f(&tape, v)?;
        tape.value(out).item()
    };

    let mut worst: f64 = 0.0;
    let mut probe = x.clone();
    for k in 0..x.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + step;
        let plus = eval(&probe)?;
        probe.data_mut()[k] = orig - step;
        let minus = eval(&probe)?;
        probe.data_mut()[k] = orig;
        let numeric = (plus - minus) / (2.0 * step);
        let a = analytic.data()[k];
        if !numeric.is_finite() {
            return Err(Error::NonFinite("grad_check"));
        }
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs() + 1e-8));
    }
    Ok(worst)
}
