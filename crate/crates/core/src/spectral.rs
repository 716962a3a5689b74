//! Fourier layers and the assembled reconstruction model.
//!
//! The spectral convolution keeps `2 k1` rows (`0..k1` and `h-k1..h`) and the
//! first `k2` columns of the half spectrum. Complex weights are stored as a
//! real tensor `[2, k1, k2, d_out, d_in, 2]`: block, row, column, output
//! channel, input channel, `[re, im]`. Mirrored columns are implied by
//! Hermitian symmetry, so the inverse transform is taken as
//! `Re(sum_k c_k Y_k e^{+i theta})` with `c_k = 2` for columns that have a
//! distinct mirror and `1` for column 0 and the Nyquist column.

use std::f64::consts::PI;

use indexmap::IndexMap;
use num_complex::Complex64;

use crate::checkpoint::Checkpoint;
use crate::embed::{self, EmbeddingConfig, GridSpec, ObservationSet};
use crate::error::{Error, Result};
use crate::params::{uniform_init, ParamSet, ParamVars};
use crate::rng::{self, Rng64};
use crate::tensor::{ComplexTensor, Tape, Tensor, Var};

/// Largest `(k1, k2)` a `h x w` grid accommodates: every row and every column
/// of the half spectrum.
pub fn full_modes(h: usize, w: usize) -> (usize, usize) {
    (h / 2, w / 2 + 1)
}

/// Checks that `(k1, k2)` retained modes fit on a `h x w` grid without the
/// two row blocks overlapping.
pub fn check_modes(h: usize, w: usize, k1: usize, k2: usize) -> Result<()> {
    let (m1, m2) = full_modes(h, w);
    if k1 == 0 || k2 == 0 || k1 > m1 || k2 > m2 {
        return Err(Error::Modes(format!(
            "modes ({k1}, {k2}) do not fit a {h}x{w} grid (limits 1..={m1}, 1..={m2})"
        )));
    }
    Ok(())
}

/// Low-pass filter of a full spectrum. A coefficient survives when it lies in
/// the retained block (rows `0..k1` and `h-k1..h`, columns `0..k2`) or is the
/// conjugate mirror of one that does, so a Hermitian input stays Hermitian.
pub fn truncate_modes(x: &ComplexTensor, k1: usize, k2: usize) -> Result<ComplexTensor> {
    let (h, w, c) = x.dims3()?;
    if k1 > h || k2 > w {
        return Err(Error::Modes(format!(
            "modes ({k1}, {k2}) exceed the {h}x{w} spectrum"
        )));
    }
    let in_block = |i: usize, j: usize| (i < k1 || i + k1 >= h) && j < k2;
    let mut out = x.clone();
    for i in 0..h {
        for j in 0..w {
            if !(in_block(i, j) || in_block((h - i) % h, (w - j) % w)) {
                for z in &mut out.data_mut()[(i * w + j) * c..(i * w + j + 1) * c] {
                    *z = Complex64::new(0.0, 0.0);
                }
            }
        }
    }
    Ok(out)
}

/// Twiddle tables for the pruned transforms of one `(h, w, k1, k2)` setting.
struct Plan {
    h: usize,
    w: usize,
    k2: usize,
    rows: usize,
    // [k2][w]
    row_cos: Vec<f64>,
    row_sin: Vec<f64>,
    // [2 k1][h]
    col_cos: Vec<f64>,
    col_sin: Vec<f64>,
    // column multiplicity of the half spectrum
    weight: Vec<f64>,
}

impl Plan {
    fn new(h: usize, w: usize, k1: usize, k2: usize) -> Self {
        let table = |freqs: &[usize], n: usize| {
            let mut cos = Vec::with_capacity(freqs.len() * n);
            let mut sin = Vec::with_capacity(freqs.len() * n);
            for &f in freqs {
                for t in 0..n {
                    let a = 2.0 * PI * ((f * t) % n) as f64 / n as f64;
                    cos.push(a.cos());
                    sin.push(a.sin());
                }
            }
            (cos, sin)
        };
        let cols: Vec<usize> = (0..k2).collect();
        let rows: Vec<usize> = (0..k1).chain(h - k1..h).collect();
        let (row_cos, row_sin) = table(&cols, w);
        let (col_cos, col_sin) = table(&rows, h);
        let weight = cols
            .iter()
            .map(|&q| if q == 0 || 2 * q == w { 1.0 } else { 2.0 })
            .collect();
        Self {
            h,
            w,
            k2,
            rows: rows.len(),
            row_cos,
            row_sin,
            col_cos,
            col_sin,
            weight,
        }
    }

    /// `[h][w][c]` real -> `[h][k2][c]` complex, `sum_j x e^{-i theta}`.
    fn row_forward(&self, x: &[f64], c: usize) -> (Vec<f64>, Vec<f64>) {
        let (h, w, k2) = (self.h, self.w, self.k2);
        let mut re = vec![0.0; h * k2 * c];
        let mut im = vec![0.0; h * k2 * c];
        for i in 0..h {
            for j in 0..w {
                let xr = &x[(i * w + j) * c..(i * w + j + 1) * c];
                for q in 0..k2 {
                    let (cs, sn) = (self.row_cos[q * w + j], self.row_sin[q * w + j]);
                    let o = (i * k2 + q) * c;
                    for ((a, b), &v) in re[o..o + c].iter_mut().zip(&mut im[o..o + c]).zip(xr) {
                        *a += v * cs;
                        *b -= v * sn;
                    }
                }
            }
        }
        (re, im)
    }

    /// `[h][k2][c]` complex -> `[h][w][c]` real,
    /// `scale * sum_q coef_q Re(z e^{+i theta})`.
    fn row_inverse_real(&self, re: &[f64], im: &[f64], c: usize, scale: f64, weighted: bool) -> Vec<f64> {
        let (h, w, k2) = (self.h, self.w, self.k2);
        let mut out = vec![0.0; h * w * c];
        for i in 0..h {
            for q in 0..k2 {
                let s = if weighted { scale * self.weight[q] } else { scale };
                let o = (i * k2 + q) * c;
                let (zr, zi) = (&re[o..o + c], &im[o..o + c]);
                for j in 0..w {
                    let cs = s * self.row_cos[q * w + j];
                    let sn = s * self.row_sin[q * w + j];
                    let dst = &mut out[(i * w + j) * c..(i * w + j + 1) * c];
                    for ((d, &a), &b) in dst.iter_mut().zip(zr).zip(zi) {
                        *d += a * cs - b * sn;
                    }
                }
            }
        }
        out
    }

    /// Column transform between `[h][k2][c]` and the retained rows
    /// `[2 k1][k2][c]`. `forward` applies `e^{-i theta}` from the grid to the
    /// rows; otherwise `e^{+i theta}` from the rows back to the grid.
    fn column(&self, re: &[f64], im: &[f64], c: usize, forward: bool) -> (Vec<f64>, Vec<f64>) {
        let (h, k2, rows) = (self.h, self.k2, self.rows);
        let plane = k2 * c;
        let (n_out, n_in) = if forward { (rows, h) } else { (h, rows) };
        let mut or = vec![0.0; n_out * plane];
        let mut oi = vec![0.0; n_out * plane];
        for a in 0..n_out {
            for b in 0..n_in {
                let (r, i) = if forward { (a, b) } else { (b, a) };
                let cs = self.col_cos[r * h + i];
                let sn = if forward { -self.col_sin[r * h + i] } else { self.col_sin[r * h + i] };
                let (sr, si) = (&re[b * plane..(b + 1) * plane], &im[b * plane..(b + 1) * plane]);
                let dr = &mut or[a * plane..(a + 1) * plane];
                let di = &mut oi[a * plane..(a + 1) * plane];
                for k in 0..plane {
                    dr[k] += sr[k] * cs - si[k] * sn;
                    di[k] += si[k] * cs + sr[k] * sn;
                }
            }
        }
        (or, oi)
    }
}

fn weight_dims(r: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match r.shape() {
        &[2, k1, k2, d_out, d_in, 2] => Ok((k1, k2, d_out, d_in)),
        s => Err(Error::shape(format!(
            "spectral weight must be [2, k1, k2, d_out, d_in, 2], got {s:?}"
        ))),
    }
}

/// Spectral convolution `ifft2(R . truncate(fft2(v)))` with per-mode channel
/// mixing, computed with pruned DFTs over the retained modes only.
pub fn spectral_conv(tape: &Tape, v: Var, r: Var) -> Result<Var> {
    let (vv, rv) = (tape.value(v), tape.value(r));
    let (h, w, cin) = vv.dims3()?;
    let (k1, k2, cout, din) = weight_dims(&rv)?;
    if din != cin {
        return Err(Error::shape(format!(
            "spectral_conv: input has {cin} channels, weight expects {din}"
        )));
    }
    check_modes(h, w, k1, k2)?;
    let plan = Plan::new(h, w, k1, k2);
    let rows = plan.rows;
    let (ar, ai) = plan.row_forward(vv.data(), cin);
    let (xr, xi) = plan.column(&ar, &ai, cin, true);
    let rd = rv.data();
    let modes = rows * k2;
    let mut yr = vec![0.0; modes * cout];
    let mut yi = vec![0.0; modes * cout];
    for m in 0..modes {
        let (sxr, sxi) = (&xr[m * cin..(m + 1) * cin], &xi[m * cin..(m + 1) * cin]);
        for o in 0..cout {
            let wr = &rd[(m * cout + o) * cin * 2..(m * cout + o + 1) * cin * 2];
            let (mut accr, mut acci) = (0.0, 0.0);
            for c in 0..cin {
                let (a, b) = (wr[2 * c], wr[2 * c + 1]);
                accr += a * sxr[c] - b * sxi[c];
                acci += a * sxi[c] + b * sxr[c];
            }
            yr[m * cout + o] = accr;
            yi[m * cout + o] = acci;
        }
    }
    let (br, bi) = plan.column(&yr, &yi, cout, false);
    let scale = 1.0 / (h * w) as f64;
    let out = plan.row_inverse_real(&br, &bi, cout, scale, true);
    let value = Tensor::new(&[h, w, cout], out)?;
    tape.push_op("spectral_conv", value, &[v, r], move |ctx| {
        let rd = ctx.inputs[1].data();
        let (mut gr, mut gi) = plan.row_forward(ctx.grad.data(), cout);
        for (q_block, (a, b)) in gr.chunks_exact_mut(cout).zip(gi.chunks_exact_mut(cout)).enumerate() {
            let s = scale * plan.weight[q_block % k2];
            a.iter_mut().for_each(|x| *x *= s);
            b.iter_mut().for_each(|x| *x *= s);
        }
        let (gyr, gyi) = plan.column(&gr, &gi, cout, true);
        let grad_r = ctx.needs[1].then(|| {
            let mut g = vec![0.0; rd.len()];
            for m in 0..modes {
                for o in 0..cout {
                    let (pr, pi) = (gyr[m * cout + o], gyi[m * cout + o]);
                    let base = (m * cout + o) * cin * 2;
                    for c in 0..cin {
                        let (a, b) = (xr[m * cin + c], xi[m * cin + c]);
                        g[base + 2 * c] = pr * a + pi * b;
                        g[base + 2 * c + 1] = pi * a - pr * b;
                    }
                }
            }
            Tensor::from_parts(ctx.inputs[1].shape().to_vec(), g)
        });
        let grad_v = ctx.needs[0].then(|| {
            let mut gxr = vec![0.0; modes * cin];
            let mut gxi = vec![0.0; modes * cin];
            for m in 0..modes {
                for o in 0..cout {
                    let (pr, pi) = (gyr[m * cout + o], gyi[m * cout + o]);
                    let wr = &rd[(m * cout + o) * cin * 2..(m * cout + o + 1) * cin * 2];
                    let (dr, di) = (&mut gxr[m * cin..(m + 1) * cin], &mut gxi[m * cin..(m + 1) * cin]);
                    for c in 0..cin {
                        let (a, b) = (wr[2 * c], wr[2 * c + 1]);
                        dr[c] += a * pr + b * pi;
                        di[c] += a * pi - b * pr;
                    }
                }
            }
            let (gar, gai) = plan.column(&gxr, &gxi, cin, false);
            let gv = plan.row_inverse_real(&gar, &gai, cin, 1.0, false);
            Tensor::from_parts(vec![h, w, cin], gv)
        });
        vec![grad_v, grad_r]
    })
}

/// Tape handles of one Fourier layer.
#[derive(Clone, Copy, Debug)]
pub struct FourierLayerVars {
    pub r: Var,
    pub w: Var,
    pub b: Var,
}

/// `gelu(conv1x1(v; W, b) + spectral_conv(v; R))`.
pub fn fourier_layer(tape: &Tape, v: Var, p: FourierLayerVars) -> Result<Var> {
    let local = tape.conv1x1(v, p.w, p.b)?;
    let global = spectral_conv(tape, v, p.r)?;
    let sum = tape.add(local, global)?;
    tape.gelu(sum)
}

/// Architecture of a reconstruction model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub embedding: EmbeddingConfig,
    /// Number of Fourier layers `T`.
    pub layers: usize,
    /// Channel width `d_v`; equals the embedding's `n_e`.
    pub width: usize,
    pub modes: (usize, usize),
    /// Hidden width of the pointwise projection head.
    pub proj_hidden: usize,
}

pub const DEFAULT_LAYERS: usize = 4;
pub const DEFAULT_WIDTH: usize = 32;
pub const DEFAULT_MODES: (usize, usize) = (12, 12);

impl ModelConfig {
    /// Projection head defaults to `4 * width`.
    pub fn new(embedding: EmbeddingConfig, layers: usize, width: usize, modes: (usize, usize)) -> Result<Self> {
        let cfg = Self {
            embedding,
            layers,
            width,
            modes,
            proj_hidden: 4 * width,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.embedding.grid
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.width == 0 || self.proj_hidden == 0 {
            return Err(Error::Config("layers, width and projection width must be >= 1".into()));
        }
        if self.embedding.n_e != self.width {
            return Err(Error::Config(format!(
                "embedding emits {} channels but the model width is {}",
                self.embedding.n_e, self.width
            )));
        }
        self.embedding.validate()?;
        let (h, w) = self.embedding.output_shape();
        check_modes(h, w, self.modes.0, self.modes.1)
    }

    pub fn layer_names(t: usize) -> [String; 3] {
        [format!("layer{t}.r"), format!("layer{t}.w"), format!("layer{t}.b")]
    }

    /// Names of the parameters holding complex values.
    pub fn complex_params(&self) -> Vec<String> {
        (0..self.layers).map(|t| format!("layer{t}.r")).collect()
    }

    pub fn init_params(&self, seed: u64) -> ParamSet {
        let mut rng = rng::seeded(seed);
        let mut params = ParamSet::new();
        self.embedding.init_params(&mut rng, &mut params);
        let d = self.width;
        let (k1, k2) = self.modes;
        for t in 0..self.layers {
            let [rn, wn, bn] = Self::layer_names(t);
            params.insert(rn, disc_init(&mut rng, &[2, k1, k2, d, d], 1.0 / d as f64));
            let scale = 1.0 / (d as f64).sqrt();
            params.insert(wn, uniform_init(&mut rng, &[d, d], 1.0).map(|x| x * scale));
            params.insert(bn, Tensor::zeros(&[d]));
        }
        let p = self.proj_hidden;
        params.insert("proj.fc1.w", uniform_init(&mut rng, &[d, p], 1.0 / (d as f64).sqrt()));
        params.insert("proj.fc1.b", Tensor::zeros(&[p]));
        params.insert("proj.fc2.w", uniform_init(&mut rng, &[p, 1], 1.0 / (p as f64).sqrt()));
        params.insert("proj.fc2.b", Tensor::zeros(&[1]));
        params
    }

    /// Key-value form stored in checkpoint headers.
    pub fn to_meta(&self, meta: &mut IndexMap<String, String>) {
        self.embedding.to_meta(meta);
        meta.insert("model.layers".into(), self.layers.to_string());
        meta.insert("model.width".into(), self.width.to_string());
        meta.insert("model.modes".into(), format!("{}x{}", self.modes.0, self.modes.1));
        meta.insert("model.proj_hidden".into(), self.proj_hidden.to_string());
    }

    pub fn from_meta(meta: &IndexMap<String, String>) -> Result<Self> {
        let cfg = Self {
            embedding: EmbeddingConfig::from_meta(meta)?,
            layers: embed::meta_parse(meta, "model.layers")?,
            width: embed::meta_parse(meta, "model.width")?,
            modes: embed::parse_pair(embed::meta_str(meta, "model.modes")?)?,
            proj_hidden: embed::meta_parse(meta, "model.proj_hidden")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Complex entries uniform in a disc of the given radius, interleaved.
fn disc_init(rng: &mut Rng64, complex_shape: &[usize], radius: f64) -> Tensor {
    let n: usize = complex_shape.iter().product();
    let mut data = Vec::with_capacity(2 * n);
    for _ in 0..n {
        let rho = radius * rng::uniform(rng, 0.0, 1.0).sqrt();
        let phi = rng::uniform(rng, 0.0, 2.0 * PI);
        data.push(rho * phi.cos());
        data.push(rho * phi.sin());
    }
    let mut shape = complex_shape.to_vec();
    shape.push(2);
    Tensor::from_parts(shape, data)
}

/// Fourier layers followed by the pointwise projection head, applied to an
/// embedded `[h, w, d_v]` map. Returns the `[h, w]` field.
pub fn operator_forward(tape: &Tape, v0: Var, cfg: &ModelConfig, vars: &ParamVars) -> Result<Var> {
    let mut v = v0;
    for t in 0..cfg.layers {
        let [rn, wn, bn] = ModelConfig::layer_names(t);
        let p = FourierLayerVars {
            r: vars.get(&rn)?,
            w: vars.get(&wn)?,
            b: vars.get(&bn)?,
        };
        v = fourier_layer(tape, v, p)?;
    }
    let hidden = tape.conv1x1(v, vars.get("proj.fc1.w")?, vars.get("proj.fc1.b")?)?;
    let hidden = tape.gelu(hidden)?;
    let out = tape.conv1x1(hidden, vars.get("proj.fc2.w")?, vars.get("proj.fc2.b")?)?;
    let shape = tape.shape(out);
    tape.reshape(out, &shape[..2])
}

/// Reconstructed field on the model's own grid, `[n_y, n_x]`.
pub fn recfno_forward(tape: &Tape, obs: &ObservationSet, cfg: &ModelConfig, vars: &ParamVars) -> Result<Var> {
    superres_forward(tape, obs, cfg, vars, 1)
}

/// Reconstruction on a grid `scale` times finer along each axis, with the
/// same parameters. Mask and Voronoi embeddings re-snap the sensors on the
/// fine grid; the MLP embedding resizes its final map to the fine shape.
pub fn superres_forward(
    tape: &Tape,
    obs: &ObservationSet,
    cfg: &ModelConfig,
    vars: &ParamVars,
    scale: usize,
) -> Result<Var> {
    let grid = cfg.grid().scaled(scale)?;
    check_modes(grid.n_y, grid.n_x, cfg.modes.0, cfg.modes.1)?;
    let v0 = embed::embed(tape, obs, &cfg.embedding, vars, &grid)?;
    operator_forward(tape, v0, cfg, vars)
}

/// Inference without gradient tracking.
pub fn predict(cfg: &ModelConfig, params: &ParamSet, obs: &ObservationSet, scale: usize) -> Result<Tensor> {
    let tape = Tape::new();
    let vars = params.register(&tape, false);
    let out = superres_forward(&tape, obs, cfg, &vars, scale)?;
    Ok((*tape.value(out)).clone())
}

/// A model configuration with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RecFno {
    pub cfg: ModelConfig,
    pub params: ParamSet,
}

impl RecFno {
    pub fn init(cfg: ModelConfig, seed: u64) -> Self {
        let params = cfg.init_params(seed);
        Self { cfg, params }
    }

    pub fn predict(&self, obs: &ObservationSet, scale: usize) -> Result<Tensor> {
        predict(&self.cfg, &self.params, obs, scale)
    }

    /// Checkpoint carrying the configuration, any extra metadata, and the
    /// parameters.
    pub fn to_checkpoint(&self, extra: &IndexMap<String, String>) -> Checkpoint {
        let mut meta = IndexMap::new();
        meta.insert("kind".to_string(), "recfno".to_string());
        self.cfg.to_meta(&mut meta);
        for (k, v) in extra {
            meta.insert(k.clone(), v.clone());
        }
        Checkpoint::new(meta, self.params.clone(), self.cfg.complex_params())
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.meta("kind")? != "recfno" {
            return Err(Error::Config(format!("checkpoint holds a '{}' model", ckpt.meta("kind")?)));
        }
        let cfg = ModelConfig::from_meta(&ckpt.meta)?;
        let expected = cfg.init_params(0);
        for (name, t) in expected.iter() {
            let got = ckpt.params.get(name)?;
            if got.shape() != t.shape() {
                return Err(Error::Config(format!(
                    "parameter {name}: checkpoint shape {:?}, config expects {:?}",
                    got.shape(),
                    t.shape()
                )));
            }
        }
        Ok(Self {
            cfg,
            params: ckpt.params.clone(),
        })
    }
}
