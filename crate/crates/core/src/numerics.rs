//! Beta-family special functions used by the mixture model.
//!
//! The regularized incomplete Beta function is evaluated with the modified
//! Lentz continued fraction, switching to the complementary fraction above
//! `(a + 1) / (a + b + 2)`. Log-space variants are provided because the
//! truncation mass `I_alpha(a, b)` underflows for large `a`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower clamp for shapes on optimizer-facing paths.
pub const SHAPE_MIN: f64 = 1e-4;
/// Upper clamp for shapes on optimizer-facing paths.
pub const SHAPE_MAX: f64 = 1e4;

const CF_TOL: f64 = 1e-14;
const CF_MAX_TERMS: usize = 300;
const CF_TINY: f64 = 1e-300;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Shape parameters `(a, b)` of a Beta distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaShape {
    a: f64,
    b: f64,
}

impl BetaShape {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::domain("a", a, "(0, inf)"));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::domain("b", b, "(0, inf)"));
        }
        Ok(BetaShape { a, b })
    }

    /// Builds a shape with both parameters forced into `[SHAPE_MIN, SHAPE_MAX]`.
    /// NaN maps to the lower clamp.
    pub fn clamped(a: f64, b: f64) -> Self {
        BetaShape {
            a: clamp_shape(a),
            b: clamp_shape(b),
        }
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `ln B(a, b)`.
    pub fn ln_beta(&self) -> f64 {
        ln_beta(self.a, self.b)
    }
}

fn clamp_shape(v: f64) -> f64 {
    if v.is_nan() {
        SHAPE_MIN
    } else {
        v.clamp(SHAPE_MIN, SHAPE_MAX)
    }
}

/// Natural log of the Gamma function for `x > 0` (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return std::f64::consts::PI.ln() - (std::f64::consts::PI * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS_COEFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// `ln B(a, b) = ln Γ(a) + ln Γ(b) − ln Γ(a + b)`.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Continued fraction for `I_x(a, b)` (modified Lentz). Converges quickly for
/// `x < (a + 1) / (a + b + 2)`.
fn incbeta_cf(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < CF_TINY {
        d = CF_TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=CF_MAX_TERMS {
        let m = m as f64;
        let m2 = 2.0 * m;

        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        h *= d * c;

        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < CF_TINY {
            d = CF_TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < CF_TINY {
            c = CF_TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < CF_TOL {
            break;
        }
    }
    h
}

/// Regularized incomplete Beta split into `(lower, upper)` tails where
/// `lower + upper = 1`. Exactly one of them is computed directly and the
/// other by subtraction, so the smaller tail keeps full relative precision.
/// Also returns `ln(lower)`.
fn incbeta_tails(x: f64, a: f64, b: f64, ln_b: f64) -> (f64, f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0, f64::NEG_INFINITY);
    }
    if x >= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let ln_front = a * x.ln() + b * (-x).ln_1p() - ln_b;
    if x < (a + 1.0) / (a + b + 2.0) {
        let ln_lower = ln_front + (incbeta_cf(a, b, x) / a).ln();
        let lower = ln_lower.exp();
        (lower, 1.0 - lower, ln_lower)
    } else {
        let upper = (ln_front + (incbeta_cf(b, a, 1.0 - x) / b).ln()).exp().min(1.0);
        let lower = 1.0 - upper;
        (lower, upper, (-upper).ln_1p())
    }
}

/// `ln I_x(a, b)` given a precomputed `ln B(a, b)`. No domain checks.
pub(crate) fn ln_incbeta_unchecked(x: f64, a: f64, b: f64, ln_b: f64) -> f64 {
    incbeta_tails(x, a, b, ln_b).2
}

fn check_open_unit(name: &'static str, p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(name, p, "(0, 1)"))
    }
}

fn check_closed_unit(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::domain(name, p, "[0, 1]"))
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain("alpha", alpha, "(0, 1)"))
    }
}

/// Log density of `Beta(a, b)` at `p ∈ (0, 1)`.
pub fn beta_log_pdf(p: f64, shape: BetaShape) -> Result<f64> {
    check_open_unit("p", p)?;
    Ok((shape.a - 1.0) * p.ln() + (shape.b - 1.0) * (-p).ln_1p() - shape.ln_beta())
}

/// Regularized incomplete Beta function `I_p(a, b)` for `p ∈ [0, 1]`.
pub fn beta_cdf(p: f64, shape: BetaShape) -> Result<f64> {
    check_closed_unit("p", p)?;
    Ok(incbeta_tails(p, shape.a, shape.b, shape.ln_beta()).0)
}

/// `ln I_p(a, b)`; stays finite where `I_p` itself underflows.
pub fn beta_ln_cdf(p: f64, shape: BetaShape) -> Result<f64> {
    check_closed_unit("p", p)?;
    Ok(ln_incbeta_unchecked(p, shape.a, shape.b, shape.ln_beta()))
}

/// Log density of `Beta(a, b)` truncated to `(0, alpha]`.
pub fn trunc_beta_log_pdf(p: f64, shape: BetaShape, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(p > 0.0 && p <= alpha) {
        return Err(Error::domain("p", p, "(0, alpha]"));
    }
    Ok(TruncatedBeta::new(shape, alpha).ln_pdf(p))
}

/// CDF of `Beta(a, b)` truncated to `(0, alpha]`, evaluated at `c ∈ [0, alpha]`.
pub fn trunc_beta_cdf(c: f64, shape: BetaShape, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(0.0..=alpha).contains(&c) {
        return Err(Error::domain("c", c, "[0, alpha]"));
    }
    Ok(TruncatedBeta::new(shape, alpha).cdf(c))
}

/// Density of `U(0, alpha)` on `(0, alpha]`.
pub fn trunc_uniform_pdf(p: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(p > 0.0 && p <= alpha) {
        return Err(Error::domain("p", p, "(0, alpha]"));
    }
    Ok(1.0 / alpha)
}

/// CDF of `U(0, alpha)` on `[0, alpha]`.
pub fn trunc_uniform_cdf(p: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(0.0..=alpha).contains(&p) {
        return Err(Error::domain("p", p, "[0, alpha]"));
    }
    Ok(p / alpha)
}

/// A Beta distribution truncated to `(0, alpha]` with its normalizing
/// constants cached. Inputs are trusted; callers validate.
#[derive(Debug, Clone, Copy)]
pub struct TruncatedBeta {
    shape: BetaShape,
    alpha: f64,
    ln_b: f64,
    ln_mass: f64,
}

impl TruncatedBeta {
    pub fn new(shape: BetaShape, alpha: f64) -> Self {
        let ln_b = shape.ln_beta();
        let ln_mass = ln_incbeta_unchecked(alpha, shape.a, shape.b, ln_b);
        TruncatedBeta {
            shape,
            alpha,
            ln_b,
            ln_mass,
        }
    }

    pub fn shape(&self) -> BetaShape {
        self.shape
    }

    /// `ln I_alpha(a, b)`, the log of the untruncated mass below `alpha`.
    pub fn ln_mass(&self) -> f64 {
        self.ln_mass
    }

    /// `ln B(a, b) + ln I_alpha(a, b)`: the log normalizer of the truncated density.
    pub fn ln_normalizer(&self) -> f64 {
        self.ln_b + self.ln_mass
    }

    pub fn ln_pdf(&self, p: f64) -> f64 {
        self.ln_pdf_from_logs(p.ln(), (-p).ln_1p())
    }

    /// Log density from precomputed `ln p` and `ln(1 − p)`.
    #[inline]
    pub fn ln_pdf_from_logs(&self, ln_p: f64, ln_1mp: f64) -> f64 {
        (self.shape.a - 1.0) * ln_p + (self.shape.b - 1.0) * ln_1mp - self.ln_normalizer()
    }

    pub fn cdf(&self, c: f64) -> f64 {
        if c >= self.alpha {
            return 1.0;
        }
        if c <= 0.0 {
            return 0.0;
        }
        let ln_c = ln_incbeta_unchecked(c, self.shape.a, self.shape.b, self.ln_b);
        (ln_c - self.ln_mass).exp().min(1.0)
    }

    pub fn ln_cdf(&self, c: f64) -> f64 {
        if c >= self.alpha {
            return 0.0;
        }
        if c <= 0.0 {
            return f64::NEG_INFINITY;
        }
        (ln_incbeta_unchecked(c, self.shape.a, self.shape.b, self.ln_b) - self.ln_mass).min(0.0)
    }
}
