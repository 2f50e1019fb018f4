//! Synthetic reported P-values drawn from the mixture, with configurable
//! censoring and rounding, plus the theoretical false-positive fraction
//! implied by a prior, significance level and power.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{MixtureParams, Observation, RoundBin, RoundingBins};
use crate::numerics::TruncatedBeta;
use crate::rng::indexed_rng;

/// Bounds used for censored reports.
pub const CENSOR_THRESHOLDS: [f64; 3] = [0.001, 0.01, 0.05];

/// How a report selected for censoring picks its bound.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CensoringScheme {
    /// A bound is drawn uniformly from [`CENSOR_THRESHOLDS`] without looking
    /// at the value. The report is censored if the value lies at or below the
    /// bound and exact otherwise. Censoring is independent of the P-value,
    /// which is what the censored likelihood term assumes.
    Independent,
    /// The smallest threshold at or above the value is reported. A bound then
    /// also reveals that the value exceeds the next smaller threshold, so the
    /// censored likelihood term is misspecified for these data.
    #[default]
    SmallestCovering,
}

/// Below this acceptance rate rejection sampling is replaced by inversion.
const MIN_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub true_params: MixtureParams,
    pub censor_frac: f64,
    pub round_frac: f64,
    pub seed: u64,
    #[serde(default)]
    pub censoring: CensoringScheme,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidParameter("n must be at least 1".into()));
        }
        for (name, v) in [("censor_frac", self.censor_frac), ("round_frac", self.round_frac)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::domain(name, v, "[0, 1]"));
            }
        }
        if self.censor_frac + self.round_frac > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "censor_frac + round_frac = {} exceeds 1",
                self.censor_frac + self.round_frac
            )));
        }
        if self.round_frac > 0.0 {
            RoundingBins::for_alpha(self.true_params.alpha())?;
        }
        Ok(())
    }
}

/// One simulated report together with the hidden truth behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulatedDatum {
    pub observation: Observation,
    pub hidden_p: f64,
    pub is_null: bool,
}

/// Sampler for `Beta(a, b)` truncated to `(0, alpha]`.
#[derive(Debug, Clone)]
pub struct TruncatedBetaSampler {
    alpha: f64,
    dist: TruncatedBeta,
    beta: Option<Beta<f64>>,
}

impl TruncatedBetaSampler {
    pub fn new(params: &MixtureParams) -> Result<Self> {
        let shape = params.shape();
        let dist = TruncatedBeta::new(shape, params.alpha());
        let beta = if dist.ln_mass().exp() >= MIN_ACCEPTANCE {
            Some(Beta::new(shape.a(), shape.b()).map_err(|e| Error::InvalidParameter(format!("beta sampler: {e}")))?)
        } else {
            None
        };
        Ok(TruncatedBetaSampler {
            alpha: params.alpha(),
            dist,
            beta,
        })
    }

    /// True when draws come from rejection rather than inversion.
    pub fn uses_rejection(&self) -> bool {
        self.beta.is_some()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.beta {
            Some(beta) => loop {
                let p = beta.sample(rng);
                if p > 0.0 && p <= self.alpha {
                    return p;
                }
            },
            None => self.invert(rng.random::<f64>()),
        }
    }

    /// Bisection on `ln p` for `cdf(p) = u`.
    fn invert(&self, u: f64) -> f64 {
        let mut lo = f64::MIN_POSITIVE.ln();
        let mut hi = self.alpha.ln();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.dist.cdf(mid.exp()) < u {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        hi.exp().min(self.alpha)
    }
}

fn thresholds(alpha: f64) -> Vec<f64> {
    let mut t: Vec<f64> = CENSOR_THRESHOLDS.iter().copied().filter(|&t| t < alpha).collect();
    t.push(alpha);
    t
}

/// Draws `n` reports. Each picks the null component with probability `pi0`
/// and draws its P-value. It is then rounded with probability `round_frac`
/// or selected for censoring with probability `censor_frac`; see
/// [`CensoringScheme`] for how the bound is chosen. Everything else is
/// reported exactly.
pub fn simulate_observations(config: &SimConfig) -> Result<Vec<SimulatedDatum>> {
    config.validate()?;
    let mut rng: ChaCha8Rng = indexed_rng(config.seed, 0);
    simulate_with(config, &mut rng)
}

pub fn simulate_with<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Vec<SimulatedDatum>> {
    config.validate()?;
    let params = &config.true_params;
    let alpha = params.alpha();
    let sampler = TruncatedBetaSampler::new(params)?;
    let bounds = thresholds(alpha);
    let out = (0..config.n)
        .map(|_| {
            let is_null = rng.random::<f64>() < params.pi0();
            let p = if is_null {
                alpha * (1.0 - rng.random::<f64>())
            } else {
                sampler.sample(rng)
            };
            let u: f64 = rng.random();
            let observation = if u < config.round_frac {
                Observation::Rounded {
                    bin: RoundBin::containing(p).expect("p lies in (0, alpha]"),
                }
            } else if u < config.round_frac + config.censor_frac {
                let bound = match config.censoring {
                    CensoringScheme::Independent => bounds[rng.random_range(0..bounds.len())],
                    CensoringScheme::SmallestCovering => {
                        *bounds.iter().find(|&&t| t >= p).expect("alpha bounds every p")
                    }
                };
                if p <= bound {
                    Observation::Censored { bound, strict: true }
                } else {
                    Observation::Exact { p }
                }
            } else {
                Observation::Exact { p }
            };
            SimulatedDatum {
                observation,
                hidden_p: p,
                is_null,
            }
        })
        .collect();
    Ok(out)
}

/// Just the observations of a simulation.
pub fn observations_of(data: &[SimulatedDatum]) -> Vec<Observation> {
    data.iter().map(|d| d.observation).collect()
}

/// Inputs to the theoretical false-positive calculation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalInputs {
    /// Pre-study probability that a tested hypothesis is true.
    pub prior_true: f64,
    /// Significance threshold.
    pub alpha_level: f64,
    /// Probability that a true hypothesis is called significant.
    pub power: f64,
}

/// Fraction of significant results that are false positives:
/// `(1 − prior)·alpha / ((1 − prior)·alpha + prior·power)`.
pub fn theoretical_swfdr(inputs: &TheoreticalInputs) -> Result<f64> {
    for (name, v) in [
        ("prior_true", inputs.prior_true),
        ("alpha_level", inputs.alpha_level),
        ("power", inputs.power),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::domain(name, v, "[0, 1]"));
        }
    }
    let false_sig = (1.0 - inputs.prior_true) * inputs.alpha_level;
    let true_sig = inputs.prior_true * inputs.power;
    let total = false_sig + true_sig;
    if total <= 0.0 {
        return Err(Error::Degenerate("no hypothesis is ever called significant".into()));
    }
    Ok(false_sig / total)
}
