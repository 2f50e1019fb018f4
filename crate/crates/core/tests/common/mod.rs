//! Independent numerical oracles shared by the integration tests.
#![allow(dead_code)]

use swfdr_core::model::{MixtureParams, Observation};
use swfdr_core::simulate::{simulate_observations, CensoringScheme, SimConfig};

// 15-point Kronrod nodes and weights, with the embedded 7-point Gauss weights.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XK[i];
        let s = f(c - dx) + f(c + dx);
        k += WK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]` to relative
/// accuracy about `rel_tol`. Each subinterval gets an error budget in
/// proportion to its width, floored at roundoff level.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, density: f64, depth: u32) -> f64 {
        let (v, err) = gk15(f, a, b);
        if err <= (density * (b - a)).max(50.0 * f64::EPSILON * v.abs()) || depth == 0 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, density, depth - 1) + rec(f, m, b, density, depth - 1)
    }
    if b <= a {
        return 0.0;
    }
    const PIECES: usize = 16;
    let h = (b - a) / PIECES as f64;
    let edge = |i: usize| if i == PIECES { b } else { a + h * i as f64 };
    let rough: f64 = (0..PIECES).map(|i| gk15(&f, edge(i), edge(i + 1)).0).sum();
    let density = rel_tol * rough.abs().max(f64::MIN_POSITIVE) / (b - a);
    (0..PIECES).map(|i| rec(&f, edge(i), edge(i + 1), density, 30)).sum()
}

/// `int_0^x t^(a-1) (1-t)^(b-1) dt` for `x <= 1/2`. For `a < 1` the
/// substitution `t = u^(1/a)` removes the singularity at 0.
fn lower_piece(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if a >= 1.0 {
        return integrate(|t| t.powf(a - 1.0) * (1.0 - t).powf(b - 1.0), 0.0, x, 1e-14);
    }
    let top = x.powf(a);
    integrate(|u| (1.0 - u.powf(1.0 / a)).powf(b - 1.0) / a, 0.0, top, 1e-14)
}

/// Regularized incomplete Beta function from quadrature only, with no use of
/// the Gamma function.
pub fn incbeta_quadrature(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let left_half = lower_piece(0.5, a, b);
    let right_half = lower_piece(0.5, b, a);
    let total = left_half + right_half;
    if x <= 0.5 {
        lower_piece(x, a, b) / total
    } else {
        (total - lower_piece(1.0 - x, b, a)) / total
    }
}

/// `ln Gamma(x)` from the Stirling series after shifting `x` above 20.
pub fn ln_gamma_stirling(x: f64) -> f64 {
    let mut shift = 0.0;
    let mut z = x;
    while z < 20.0 {
        shift += z.ln();
        z += 1.0;
    }
    let z2 = z * z;
    let series = 1.0 / (12.0 * z) - 1.0 / (360.0 * z * z2) + 1.0 / (1260.0 * z * z2 * z2)
        - 1.0 / (1680.0 * z * z2 * z2 * z2)
        + 1.0 / (1188.0 * z * z2 * z2 * z2 * z2);
    (z - 0.5) * z.ln() - z + 0.5 * (2.0 * std::f64::consts::PI).ln() + series - shift
}

/// Beta density on `(0, 1)` with the normalizer from quadrature.
pub fn beta_pdf_quadrature(p: f64, a: f64, b: f64) -> f64 {
    let total = lower_piece(0.5, a, b) + lower_piece(0.5, b, a);
    p.powf(a - 1.0) * (1.0 - p).powf(b - 1.0) / total
}

/// Mean of `Beta(a, b)` truncated to `(0, alpha]`, by quadrature.
pub fn trunc_beta_mean(a: f64, b: f64, alpha: f64) -> f64 {
    // int t * t^(a-1)(1-t)^(b-1) = lower piece with a+1
    lower_piece(alpha, a + 1.0, b) / lower_piece(alpha, a, b)
}

/// Intercept and slope by ordinary least squares.
pub fn ols(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

pub fn params(pi0: f64, a: f64, b: f64) -> MixtureParams {
    MixtureParams::with_default_alpha(pi0, a, b).unwrap()
}

pub fn simulate(n: usize, pi0: f64, a: f64, b: f64, censor: f64, round: f64, seed: u64) -> Vec<Observation> {
    let cfg = SimConfig {
        n,
        true_params: params(pi0, a, b),
        censor_frac: censor,
        round_frac: round,
        seed,
        censoring: CensoringScheme::SmallestCovering,
    };
    simulate_observations(&cfg)
        .unwrap()
        .into_iter()
        .map(|d| d.observation)
        .collect()
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_statistic(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
