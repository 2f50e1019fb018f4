//! The uniform / truncated-Beta mixture for significant P-values and its
//! observed-data likelihood over exact, censored and rounded reports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_alpha, BetaShape, TruncatedBeta};

pub const DEFAULT_ALPHA: f64 = 0.05;

/// Number of rounding bins.
pub const N_BINS: usize = 6;

/// Edges of the rounding intervals `[0, .005), [.005, .015), …, [.045, .05]`.
/// The upper edge of the last bin is the model's `alpha`.
const BIN_EDGES: [f64; N_BINS + 1] = [0.0, 0.005, 0.015, 0.025, 0.035, 0.045, 0.05];

/// Parameters of the mixture `pi0 U(0, alpha) + (1 − pi0) tBeta(a, b; alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pi0: f64,
    shape: BetaShape,
    alpha: f64,
}

impl MixtureParams {
    pub fn new(pi0: f64, shape: BetaShape, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&pi0) {
            return Err(Error::domain("pi0", pi0, "[0, 1]"));
        }
        check_alpha(alpha)?;
        Ok(MixtureParams { pi0, shape, alpha })
    }

    /// Parameters at the default threshold `alpha = 0.05`.
    pub fn with_default_alpha(pi0: f64, a: f64, b: f64) -> Result<Self> {
        Self::new(pi0, BetaShape::new(a, b)?, DEFAULT_ALPHA)
    }

    pub fn pi0(&self) -> f64 {
        self.pi0
    }

    pub fn shape(&self) -> BetaShape {
        self.shape
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub(crate) fn with_pi0(self, pi0: f64) -> Self {
        MixtureParams { pi0, ..self }
    }

    pub(crate) fn with_shape(self, shape: BetaShape) -> Self {
        MixtureParams { shape, ..self }
    }
}

/// Index of a rounding bin, i.e. the reported round value `0.01 * index`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RoundBin(u8);

impl RoundBin {
    pub fn new(index: usize) -> Result<Self> {
        if index < N_BINS {
            Ok(RoundBin(index as u8))
        } else {
            Err(Error::InvalidBin(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The printed round value this bin stands for.
    pub fn reported_value(self) -> f64 {
        [0.0, 0.01, 0.02, 0.03, 0.04, 0.05][self.index()]
    }

    /// Bin containing an exact P-value in `[0, 0.05]`.
    pub fn containing(p: f64) -> Option<Self> {
        if !(0.0..=BIN_EDGES[N_BINS]).contains(&p) {
            return None;
        }
        let idx = BIN_EDGES[1..N_BINS].iter().take_while(|&&edge| p >= edge).count();
        Some(RoundBin(idx as u8))
    }

    pub fn all() -> impl Iterator<Item = RoundBin> {
        (0..N_BINS as u8).map(RoundBin)
    }
}

/// The six rounding intervals partitioning `[0, alpha]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundingBins {
    edges: [f64; N_BINS + 1],
}

impl RoundingBins {
    /// Rounding intervals for threshold `alpha`. The last interval needs
    /// `alpha > 0.045`.
    pub fn for_alpha(alpha: f64) -> Result<Self> {
        if !(alpha > BIN_EDGES[N_BINS - 1] && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "rounded observations need alpha in (0.045, 1), got {alpha}"
            )));
        }
        let mut edges = BIN_EDGES;
        edges[N_BINS] = alpha;
        Ok(RoundingBins { edges })
    }

    /// `[lower, upper)` (closed on the right for the last bin).
    pub fn interval(&self, bin: RoundBin) -> (f64, f64) {
        (self.edges[bin.index()], self.edges[bin.index() + 1])
    }

    pub fn width(&self, bin: RoundBin) -> f64 {
        let (lo, hi) = self.interval(bin);
        hi - lo
    }
}

impl Default for RoundingBins {
    fn default() -> Self {
        RoundingBins { edges: BIN_EDGES }
    }
}

/// One model-ready datum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Observation {
    /// Reported exactly, `p ∈ (0, alpha]`.
    Exact { p: f64 },
    /// Reported as `P < bound` or `P ≤ bound`. `strict` is provenance only.
    Censored { bound: f64, strict: bool },
    /// Reported at a round value and treated as a draw over its rounding bin.
    Rounded { bin: RoundBin },
}

impl Observation {
    pub fn exact(p: f64) -> Self {
        Observation::Exact { p }
    }

    pub fn censored(bound: f64) -> Self {
        Observation::Censored { bound, strict: true }
    }

    pub fn rounded(bin: usize) -> Result<Self> {
        Ok(Observation::Rounded {
            bin: RoundBin::new(bin)?,
        })
    }

    /// Checks the value against `(0, alpha]`.
    pub fn validate(&self, alpha: f64) -> Result<()> {
        match *self {
            Observation::Exact { p } if !(p > 0.0 && p <= alpha) => Err(Error::domain("exact p", p, "(0, alpha]")),
            Observation::Censored { bound, .. } if !(bound > 0.0 && bound <= alpha) => {
                Err(Error::domain("censoring bound", bound, "(0, alpha]"))
            }
            Observation::Rounded { bin } if bin.index() >= N_BINS => Err(Error::InvalidBin(bin.index())),
            _ => Ok(()),
        }
    }

    /// A censored report at the threshold carries no information.
    pub fn is_uninformative(&self, alpha: f64) -> bool {
        matches!(*self, Observation::Censored { bound, .. } if bound >= alpha)
    }
}

fn check_in_support(p: f64, params: &MixtureParams) -> Result<()> {
    if p > 0.0 && p <= params.alpha {
        Ok(())
    } else {
        Err(Error::domain("p", p, "(0, alpha]"))
    }
}

fn check_in_cdf_domain(c: f64, params: &MixtureParams) -> Result<()> {
    if (0.0..=params.alpha).contains(&c) {
        Ok(())
    } else {
        Err(Error::domain("c", c, "[0, alpha]"))
    }
}

/// Mixture evaluator with the truncated-Beta constants cached for one
/// parameter value.
#[derive(Debug, Clone, Copy)]
pub struct Mixture {
    params: MixtureParams,
    alt: TruncatedBeta,
}

impl Mixture {
    pub fn new(params: MixtureParams) -> Self {
        Mixture {
            params,
            alt: TruncatedBeta::new(params.shape, params.alpha),
        }
    }

    pub fn params(&self) -> &MixtureParams {
        &self.params
    }

    pub fn alternative(&self) -> &TruncatedBeta {
        &self.alt
    }

    /// Null and alternative density contributions at `p`, already weighted
    /// by `pi0` and `1 − pi0`.
    #[inline]
    pub fn pdf_parts(&self, ln_p: f64, ln_1mp: f64) -> (f64, f64) {
        let null = self.params.pi0 / self.params.alpha;
        let alt = (1.0 - self.params.pi0) * self.alt.ln_pdf_from_logs(ln_p, ln_1mp).exp();
        (null, alt)
    }

    pub fn pdf(&self, p: f64) -> f64 {
        let (null, alt) = self.pdf_parts(p.ln(), (-p).ln_1p());
        null + alt
    }

    /// Null and alternative parts of the mixture CDF at `c`.
    pub fn cdf_parts(&self, c: f64) -> (f64, f64) {
        let null = self.params.pi0 * (c / self.params.alpha).min(1.0);
        let alt = (1.0 - self.params.pi0) * self.alt.cdf(c);
        (null, alt)
    }

    pub fn cdf(&self, c: f64) -> f64 {
        if c >= self.params.alpha {
            return 1.0;
        }
        let (null, alt) = self.cdf_parts(c);
        null + alt
    }

    /// Null and alternative parts of a rounding bin's probability.
    pub fn bin_parts(&self, bins: &RoundingBins, bin: RoundBin) -> (f64, f64) {
        let (lo, hi) = bins.interval(bin);
        let null = self.params.pi0 * (hi - lo) / self.params.alpha;
        let alt = (1.0 - self.params.pi0) * (self.alt.cdf(hi) - self.alt.cdf(lo)).max(0.0);
        (null, alt)
    }

    pub fn bin_probability(&self, bins: &RoundingBins, bin: RoundBin) -> f64 {
        let (null, alt) = self.bin_parts(bins, bin);
        null + alt
    }
}

/// Mixture density at `p ∈ (0, alpha]`.
pub fn mixture_pdf(p: f64, params: &MixtureParams) -> Result<f64> {
    check_in_support(p, params)?;
    Ok(Mixture::new(*params).pdf(p))
}

/// Mixture CDF at `c ∈ [0, alpha]`. Exactly 1 at `c = alpha`.
pub fn mixture_cdf(c: f64, params: &MixtureParams) -> Result<f64> {
    check_in_cdf_domain(c, params)?;
    Ok(Mixture::new(*params).cdf(c))
}

/// Probability that a P-value falls in rounding bin `bin`.
pub fn bin_probability(bin: usize, params: &MixtureParams) -> Result<f64> {
    let bin = RoundBin::new(bin)?;
    let bins = RoundingBins::for_alpha(params.alpha)?;
    Ok(Mixture::new(*params).bin_probability(&bins, bin))
}

/// Observed-data log-likelihood. Each exact report contributes the log
/// density, each censored report the log CDF at its bound and each rounded
/// report the log probability of its bin.
///
/// The uniform component has full support on `(0, alpha]`, so the result is
/// finite whenever `pi0 > 0`. With `pi0 = 0` it can be `-inf` only if the
/// truncated Beta puts no mass where an observation lies.
pub fn log_likelihood(observations: &[Observation], params: &MixtureParams) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    let mix = Mixture::new(*params);
    let mut bins = None;
    let mut total = 0.0;
    for obs in observations {
        obs.validate(params.alpha)?;
        total += match *obs {
            Observation::Exact { p } => mix.pdf(p).ln(),
            Observation::Censored { bound, .. } => mix.cdf(bound).ln(),
            Observation::Rounded { bin } => {
                let bins = match bins {
                    Some(b) => b,
                    None => *bins.insert(RoundingBins::for_alpha(params.alpha)?),
                };
                mix.bin_probability(&bins, bin).ln()
            }
        };
    }
    Ok(total)
}
