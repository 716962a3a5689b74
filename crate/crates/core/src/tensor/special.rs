//! Standard normal CDF and density evaluated in fixed-width blocks, so the
//! elementwise GELU loops vectorize.
//!
//! `|v| <= 2.5`: `Phi(v) = 1/2 + v P(v^2)`. Beyond: `Phi(-|v|) = phi(v) Q(1/|v|)`
//! with `Q` the Mills ratio, fitted for `|v| <= 40`; further out `phi`
//! underflows. `P` and `Q` are Chebyshev series accurate to
//! about 1e-17.

use std::f64::consts::LOG2_E;

const SPLIT: f64 = 2.5;
const U_MIN: f64 = 1.0 / 40.0;
const U_MAX: f64 = 1.0 / SPLIT;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

const CENTRAL: [f64; 17] = [
    0.279_205_533_558_735_03,
    -0.097_608_978_490_209_609,
    0.018_591_387_859_970_553,
    -0.003_052_125_995_256_994_3,
    0.000_426_815_227_858_205_17,
    -5.145_788_668_184_026_5e-5,
    5.427_673_469_661_641_8e-6,
    -5.076_424_332_694_944e-7,
    4.258_995_381_491_539_4e-8,
    -3.236_889_248_518_004_4e-9,
    2.247_227_269_831_817_8e-10,
    -1.435_378_495_686_039_1e-11,
    8.487_091_533_903_267e-13,
    -4.670_308_501_131_531_8e-14,
    2.403_022_727_212_477_8e-15,
    -1.160_877_432_361_721e-16,
    5.284_693_848_523_858_6e-18,
];

const TAIL: [f64; 25] = [
    0.19666576617765205,
    0.16513153537238517,
    -0.007175276967063346,
    -0.00048165029545750967,
    0.00013557738439396849,
    -9.988974049252863e-06,
    -1.2586527577153354e-06,
    4.613658148481758e-07,
    -5.273884798081136e-08,
    -3.4527287823544876e-09,
    2.5539115387695657e-09,
    -4.702136413616062e-10,
    1.5292409242503572e-11,
    1.5698607699967894e-11,
    -4.888313671637996e-12,
    6.358257474249953e-13,
    5.3014348685123045e-14,
    -4.774663439730416e-14,
    1.1835216526654718e-14,
    -1.1372124592616707e-15,
    -2.9399308783081775e-16,
    1.6212706837307888e-16,
    -3.718039420732557e-17,
    2.9356461525721554e-18,
    1.2825309993075529e-18,
];

/// Lanes evaluated together; wide enough for the compiler to keep every
/// step in vector registers.
pub const LANES: usize = 16;

type Lanes = [f64; LANES];

#[inline(always)]
fn map(f: impl Fn(usize) -> f64) -> Lanes {
    let mut out = [0.0; LANES];
    for (l, o) in out.iter_mut().enumerate() {
        *o = f(l);
    }
    out
}

#[inline(always)]
fn clenshaw<const N: usize>(c: &[f64; N], t: &Lanes) -> Lanes {
    let mut b1 = [0.0; LANES];
    let mut b2 = [0.0; LANES];
    for k in (1..N).rev() {
        for l in 0..LANES {
            let b0 = (2.0 * t[l]).mul_add(b1[l], c[k] - b2[l]);
            b2[l] = b1[l];
            b1[l] = b0;
        }
    }
    map(|l| t[l].mul_add(b1[l], c[0] - b2[l]))
}

/// `e^y` for `y <= 0`, flushed to zero below -708.
#[inline(always)]
fn exp_neg(y: &Lanes) -> Lanes {
    const LN2_HI: f64 = 0.693_147_180_369_123_8;
    const LN2_LO: f64 = 1.908_214_929_270_587_7e-10;
    // 1/k! for k = 0..=13; |r| <= ln 2 / 2 leaves a remainder below 2e-17
    const INV_FACT: [f64; 14] = [
        1.0,
        1.0,
        0.5,
        1.0 / 6.0,
        1.0 / 24.0,
        1.0 / 120.0,
        1.0 / 720.0,
        1.0 / 5040.0,
        1.0 / 40_320.0,
        1.0 / 362_880.0,
        1.0 / 3_628_800.0,
        1.0 / 39_916_800.0,
        1.0 / 479_001_600.0,
        1.0 / 6_227_020_800.0,
    ];
    let yc = map(|l| y[l].max(-708.0));
    let n = map(|l| yc[l].mul_add(LOG2_E, 0.5).floor());
    let r = map(|l| (-n[l]).mul_add(LN2_LO, (-n[l]).mul_add(LN2_HI, yc[l])));
    let mut p = [INV_FACT[13]; LANES];
    for k in (0..13).rev() {
        for l in 0..LANES {
            p[l] = p[l].mul_add(r[l], INV_FACT[k]);
        }
    }
    map(|l| {
        let e = p[l] * f64::from_bits(((n[l] as i64 + 1023) as u64) << 52);
        if y[l] < -708.0 {
            0.0
        } else {
            e
        }
    })
}

/// `(Phi(v), phi(v))` of the standard normal distribution for a block of
/// lanes.
#[inline(always)]
pub fn normal_cdf_pdf_lanes(v: &Lanes) -> (Lanes, Lanes) {
    let pdf = exp_neg(&map(|l| -0.5 * v[l] * v[l]));
    let pdf = map(|l| INV_SQRT_2PI * pdf[l]);
    let inner = v.iter().all(|x| x.abs() <= SPLIT);
    let outer = v.iter().all(|x| x.abs() > SPLIT);
    let central = if outer {
        [0.0; LANES]
    } else {
        let t = map(|l| (v[l] * v[l]).min(SPLIT * SPLIT).mul_add(2.0 / (SPLIT * SPLIT), -1.0));
        clenshaw(&CENTRAL, &t)
    };
    let q = if inner {
        [0.0; LANES]
    } else {
        let u = map(|l| (1.0 / v[l].abs()).clamp(U_MIN, U_MAX));
        let t = map(|l| u[l].mul_add(2.0 / (U_MAX - U_MIN), -(U_MIN + U_MAX) / (U_MAX - U_MIN)));
        clenshaw(&TAIL, &t)
    };
    let cdf = map(|l| {
        let tail = pdf[l] * q[l];
        let outer = if v[l] > 0.0 { 1.0 - tail } else { tail };
        if v[l].abs() <= SPLIT {
            v[l].mul_add(central[l], 0.5)
        } else {
            outer
        }
    });
    (cdf, pdf)
}

/// Scalar convenience wrapper around [`normal_cdf_pdf_lanes`].
pub fn normal_cdf_pdf(v: f64) -> (f64, f64) {
    let (c, p) = normal_cdf_pdf_lanes(&[v; LANES]);
    (c[0], p[0])
}

/// GELU values and slopes, `out = v Phi(v)`, `slope = Phi(v) + v phi(v)`.
pub fn gelu_with_slope(x: &[f64], out: &mut [f64], slope: &mut [f64]) {
    let mut start = 0;
    while start < x.len() {
        let end = (start + LANES).min(x.len());
        let mut v = [0.0; LANES];
        v[..end - start].copy_from_slice(&x[start..end]);
        let (c, p) = normal_cdf_pdf_lanes(&v);
        for l in 0..end - start {
            out[start + l] = v[l] * c[l];
            slope[start + l] = c[l] + v[l] * p[l];
        }
        start = end;
    }
}
