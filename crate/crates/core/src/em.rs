//! EM estimation of `(pi0, a, b)` from exact, censored and rounded reports,
//! and bootstrap standard errors for `pi0`.
//!
//! The E-step gives each observation its posterior probability of coming
//! from the uniform (null) component. The M-step sets `pi0` to the mean
//! weight and improves `(a, b)` with Nelder–Mead over `(ln a, ln b)`. A
//! candidate shape is kept only if it does not lower the weighted
//! alternative objective, so the observed log-likelihood never decreases.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mixture, MixtureParams, Observation, RoundBin, RoundingBins, N_BINS};
use crate::numerics::{BetaShape, TruncatedBeta};
use crate::optim::NelderMead;
use crate::rng::indexed_rng;

/// Fewer observations than this make the estimate meaningless.
pub const MIN_OBSERVATIONS: usize = 10;

/// Fitted shapes closer than this to `(1, 1)` leave `pi0` unidentifiable.
pub const IDENTIFIABILITY_MARGIN: f64 = 0.05;

/// A truncated alternative whose CDF stays this close to the uniform CDF on
/// `(0, alpha]` is also flagged, whatever its shape parameters.
pub const UNIFORM_CDF_DISTANCE: f64 = 0.05;

const M_STEP_MAX_EVALS: usize = 500;
const M_STEP_SIMPLEX_STEP: f64 = 0.1;
const MAX_SKIP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iters: usize,
    /// Stop when the observed log-likelihood changes by less than this.
    pub loglik_tol: f64,
    /// Nelder–Mead tolerance on `(ln a, ln b)`.
    pub m_step_tol: f64,
    pub init: MixtureParams,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iters: 10_000,
            loglik_tol: 1e-8,
            m_step_tol: 1e-6,
            init: MixtureParams::with_default_alpha(0.5, 1.0, 10.0).expect("valid default"),
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.loglik_tol.is_nan() || self.loglik_tol <= 0.0 || self.m_step_tol.is_nan() || self.m_step_tol <= 0.0 {
            return Err(Error::InvalidParameter("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn with_init(self, init: MixtureParams) -> Self {
        EmConfig { init, ..self }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmResult {
    pub params: MixtureParams,
    /// Log-likelihood at the starting parameters.
    pub initial_loglik: f64,
    /// Log-likelihood after each iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the fitted alternative is close to uniform on `(0, alpha]`,
    /// so `pi0` is poorly identified.
    pub near_uniform_alternative: bool,
}

impl EmResult {
    pub fn loglik(&self) -> f64 {
        self.loglik_trace.last().copied().unwrap_or(self.initial_loglik)
    }

    pub fn pi0(&self) -> f64 {
        self.params.pi0()
    }
}

/// Observations collapsed to what the likelihood depends on: exact values
/// (with cached logs), distinct censoring bounds with counts, and bin counts.
#[derive(Debug, Clone)]
struct Data {
    alpha: f64,
    exact_logs: Vec<(f64, f64)>,
    censored: Vec<(f64, usize)>,
    rounded: [usize; N_BINS],
    bins: RoundingBins,
    n: usize,
}

impl Data {
    /// Uninformative reports (censored at `alpha`) contribute zero to the
    /// likelihood and are dropped; the maximizer is unchanged.
    fn new(observations: &[Observation], alpha: f64) -> Result<Self> {
        let mut exact_logs = Vec::new();
        let mut censored: BTreeMap<u64, usize> = BTreeMap::new();
        let mut rounded = [0usize; N_BINS];
        for obs in observations {
            obs.validate(alpha)?;
            if obs.is_uninformative(alpha) {
                continue;
            }
            match *obs {
                Observation::Exact { p } => exact_logs.push((p.ln(), (-p).ln_1p())),
                // positive finite floats order like their bit patterns
                Observation::Censored { bound, .. } => *censored.entry(bound.to_bits()).or_default() += 1,
                Observation::Rounded { bin } => rounded[bin.index()] += 1,
            }
        }
        let bins = if rounded.iter().any(|&c| c > 0) {
            RoundingBins::for_alpha(alpha)?
        } else {
            RoundingBins::default()
        };
        let censored: Vec<(f64, usize)> = censored
            .into_iter()
            .map(|(bits, count)| (f64::from_bits(bits), count))
            .collect();
        let n = exact_logs.len() + censored.iter().map(|c| c.1).sum::<usize>() + rounded.iter().sum::<usize>();
        Ok(Data {
            alpha,
            exact_logs,
            censored,
            rounded,
            bins,
            n,
        })
    }
}

/// Posterior null weights, one per group of [`Data`].
#[derive(Debug, Clone)]
struct GroupWeights {
    exact: Vec<f64>,
    censored: Vec<f64>,
    rounded: [f64; N_BINS],
}

fn ratio(null: f64, total: f64) -> f64 {
    if total > 0.0 {
        (null / total).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// E-step on grouped data; also returns the observed log-likelihood at `params`.
fn expectation(data: &Data, params: &MixtureParams) -> (f64, GroupWeights) {
    let mix = Mixture::new(*params);
    let mut loglik = 0.0;

    let exact = data
        .exact_logs
        .iter()
        .map(|&(ln_p, ln_1mp)| {
            let (null, alt) = mix.pdf_parts(ln_p, ln_1mp);
            loglik += (null + alt).ln();
            ratio(null, null + alt)
        })
        .collect();

    let censored = data
        .censored
        .iter()
        .map(|&(bound, count)| {
            let (null, alt) = mix.cdf_parts(bound);
            loglik += count as f64 * (null + alt).ln();
            ratio(null, null + alt)
        })
        .collect();

    let mut rounded = [0.0; N_BINS];
    for bin in RoundBin::all() {
        let count = data.rounded[bin.index()];
        if count == 0 {
            continue;
        }
        let (null, alt) = mix.bin_parts(&data.bins, bin);
        loglik += count as f64 * (null + alt).ln();
        rounded[bin.index()] = ratio(null, null + alt);
    }

    (
        loglik,
        GroupWeights {
            exact,
            censored,
            rounded,
        },
    )
}

/// Weighted sufficient statistics of the alternative component.
#[derive(Debug, Clone)]
struct AltStats {
    alpha: f64,
    exact_weight: f64,
    sum_ln_p: f64,
    sum_ln_1mp: f64,
    censored: Vec<(f64, f64)>,
    rounded: [f64; N_BINS],
    bins: RoundingBins,
}

impl AltStats {
    fn total_weight(&self) -> f64 {
        self.exact_weight + self.censored.iter().map(|c| c.1).sum::<f64>() + self.rounded.iter().sum::<f64>()
    }

    /// `Σ (1 − w_i) ℓ_i(a, b)` for the truncated-Beta component.
    fn objective(&self, shape: BetaShape) -> f64 {
        let alt = TruncatedBeta::new(shape, self.alpha);
        let mut total = 0.0;
        if self.exact_weight > 0.0 {
            total += (shape.a() - 1.0) * self.sum_ln_p + (shape.b() - 1.0) * self.sum_ln_1mp
                - self.exact_weight * alt.ln_normalizer();
        }
        for &(bound, w) in &self.censored {
            if w > 0.0 {
                total += w * alt.ln_cdf(bound);
            }
        }
        for bin in RoundBin::all() {
            let w = self.rounded[bin.index()];
            if w > 0.0 {
                let (lo, hi) = self.bins.interval(bin);
                total += w * (alt.cdf(hi) - alt.cdf(lo)).ln();
            }
        }
        total
    }
}

fn alt_stats(data: &Data, weights: &GroupWeights) -> AltStats {
    let mut exact_weight = 0.0;
    let mut sum_ln_p = 0.0;
    let mut sum_ln_1mp = 0.0;
    for (&(ln_p, ln_1mp), &w) in data.exact_logs.iter().zip(&weights.exact) {
        let v = 1.0 - w;
        exact_weight += v;
        sum_ln_p += v * ln_p;
        sum_ln_1mp += v * ln_1mp;
    }
    let censored = data
        .censored
        .iter()
        .zip(&weights.censored)
        .map(|(&(bound, count), &w)| (bound, count as f64 * (1.0 - w)))
        .collect();
    let rounded = std::array::from_fn(|k| data.rounded[k] as f64 * (1.0 - weights.rounded[k]));
    AltStats {
        alpha: data.alpha,
        exact_weight,
        sum_ln_p,
        sum_ln_1mp,
        censored,
        rounded,
        bins: data.bins,
    }
}

/// Improves the alternative shape, never returning one with a lower objective
/// than `current`.
fn maximize_shape(stats: &AltStats, current: BetaShape, m_step_tol: f64) -> BetaShape {
    if stats.total_weight() <= 1e-12 {
        return current;
    }
    let current = BetaShape::clamped(current.a(), current.b());
    let base = stats.objective(current);
    let nm = NelderMead {
        step: M_STEP_SIMPLEX_STEP,
        xtol: m_step_tol,
        max_evals: M_STEP_MAX_EVALS,
    };
    let best = nm.minimize(&[current.a().ln(), current.b().ln()], |x| {
        -stats.objective(BetaShape::clamped(x[0].exp(), x[1].exp()))
    });
    let candidate = BetaShape::clamped(best.x[0].exp(), best.x[1].exp());
    let value = -best.value;
    if value.is_finite() && (value >= base || !base.is_finite()) {
        candidate
    } else {
        current
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn ungroup(data_obs: &[Observation], data: &Data, gw: &GroupWeights, params: &MixtureParams) -> Vec<f64> {
    let mut exact_iter = gw.exact.iter();
    data_obs
        .iter()
        .map(|obs| {
            if obs.is_uninformative(data.alpha) {
                return params.pi0();
            }
            match *obs {
                Observation::Exact { .. } => *exact_iter.next().expect("one weight per exact value"),
                Observation::Censored { bound, .. } => {
                    let idx = data
                        .censored
                        .binary_search_by(|c| c.0.total_cmp(&bound))
                        .expect("bound was grouped");
                    gw.censored[idx]
                }
                Observation::Rounded { bin } => gw.rounded[bin.index()],
            }
        })
        .collect()
}

/// Posterior probability that each observation came from the null component.
pub fn e_step(observations: &[Observation], params: &MixtureParams) -> Result<Vec<f64>> {
    let data = Data::new(observations, params.alpha())?;
    let (_, gw) = expectation(&data, params);
    Ok(ungroup(observations, &data, &gw, params))
}

/// One M-step: `pi0` is the mean weight and `(a, b)` is improved from the
/// shape of `current` on the weighted alternative log-likelihood.
pub fn m_step(
    observations: &[Observation],
    weights: &[f64],
    current: &MixtureParams,
    config: &EmConfig,
) -> Result<MixtureParams> {
    if observations.is_empty() {
        return Err(Error::EmptyInput("observations"));
    }
    if weights.len() != observations.len() {
        return Err(Error::InvalidParameter(format!(
            "{} weights for {} observations",
            weights.len(),
            observations.len()
        )));
    }
    if let Some(&w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::domain("weight", w, "[0, 1]"));
    }
    let alpha = current.alpha();
    let mut exact_weight = 0.0;
    let mut sum_ln_p = 0.0;
    let mut sum_ln_1mp = 0.0;
    let mut censored: BTreeMap<u64, f64> = BTreeMap::new();
    let mut rounded = [0.0; N_BINS];
    let mut any_rounded = false;
    for (obs, &w) in observations.iter().zip(weights) {
        obs.validate(alpha)?;
        if obs.is_uninformative(alpha) {
            continue;
        }
        let v = 1.0 - w;
        match *obs {
            Observation::Exact { p } => {
                exact_weight += v;
                sum_ln_p += v * p.ln();
                sum_ln_1mp += v * (-p).ln_1p();
            }
            Observation::Censored { bound, .. } => *censored.entry(bound.to_bits()).or_default() += v,
            Observation::Rounded { bin } => {
                any_rounded = true;
                rounded[bin.index()] += v;
            }
        }
    }
    let stats = AltStats {
        alpha,
        exact_weight,
        sum_ln_p,
        sum_ln_1mp,
        censored: censored.into_iter().map(|(b, w)| (f64::from_bits(b), w)).collect(),
        rounded,
        bins: if any_rounded {
            RoundingBins::for_alpha(alpha)?
        } else {
            RoundingBins::default()
        },
    };
    let shape = maximize_shape(&stats, current.shape(), config.m_step_tol);
    Ok(current.with_pi0(mean(weights).clamp(0.0, 1.0)).with_shape(shape))
}

fn near_uniform(shape: BetaShape, alpha: f64) -> bool {
    if (shape.a() - 1.0).abs() < IDENTIFIABILITY_MARGIN && (shape.b() - 1.0).abs() < IDENTIFIABILITY_MARGIN {
        return true;
    }
    let dist = TruncatedBeta::new(shape, alpha);
    let grid = 200;
    (1..grid).all(|i| {
        let u = i as f64 / grid as f64;
        (dist.cdf(u * alpha) - u).abs() < UNIFORM_CDF_DISTANCE
    })
}

/// Fits the mixture by (generalized) EM.
pub fn run_em(observations: &[Observation], config: &EmConfig) -> Result<EmResult> {
    config.validate()?;
    let alpha = config.init.alpha();
    if !observations.is_empty() && observations.iter().all(|o| o.is_uninformative(alpha)) {
        return Err(Error::Uninformative);
    }
    if observations.len() < MIN_OBSERVATIONS {
        return Err(Error::TooFewObservations {
            found: observations.len(),
            required: MIN_OBSERVATIONS,
        });
    }
    let data = Data::new(observations, alpha)?;
    let n = data.n as f64;

    let mut params = config.init;
    let (mut loglik, mut weights) = expectation(&data, &params);
    if !loglik.is_finite() {
        return Err(Error::NumericalFailure {
            message: format!("log-likelihood at the starting point is {loglik}"),
            trace: Vec::new(),
        });
    }
    let initial_loglik = loglik;
    let mut trace = Vec::new();
    let mut converged = false;

    for _ in 0..config.max_iters {
        let stats = alt_stats(&data, &weights);
        let null_total = weights.exact.iter().sum::<f64>()
            + data
                .censored
                .iter()
                .zip(&weights.censored)
                .map(|(c, w)| c.1 as f64 * w)
                .sum::<f64>()
            + (0..N_BINS)
                .map(|k| data.rounded[k] as f64 * weights.rounded[k])
                .sum::<f64>();
        let shape = maximize_shape(&stats, params.shape(), config.m_step_tol);
        params = params.with_pi0((null_total / n).clamp(0.0, 1.0)).with_shape(shape);

        let (next, next_weights) = expectation(&data, &params);
        if !next.is_finite() {
            return Err(Error::NumericalFailure {
                message: format!("log-likelihood became {next}"),
                trace,
            });
        }
        trace.push(next);
        let change = (next - loglik).abs();
        loglik = next;
        weights = next_weights;
        if change < config.loglik_tol {
            converged = true;
            break;
        }
    }

    Ok(EmResult {
        near_uniform_alternative: near_uniform(params.shape(), params.alpha()),
        params,
        initial_loglik,
        iterations: trace.len(),
        loglik_trace: trace,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// `pi0` fitted on the full data.
    pub point: f64,
    /// Sample standard deviation of the resample estimates.
    pub sd: f64,
    pub resample_estimates: Vec<f64>,
    /// Number of resamples requested.
    pub resamples: usize,
    /// Resamples whose fit failed.
    pub skipped: usize,
    pub seed: u64,
}

/// Sample standard deviation (n − 1 denominator).
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Nonparametric bootstrap of `pi0`. Fits the full data first.
pub fn bootstrap_sd(
    observations: &[Observation],
    resamples: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<BootstrapResult> {
    let full = run_em(observations, config)?;
    bootstrap_from_fit(observations, &full, resamples, seed, config)
}

/// Nonparametric bootstrap around an existing full-data fit. Resample `i`
/// draws from its own stream `(seed, i)`, so the result does not depend on
/// how many threads run the refits.
pub fn bootstrap_from_fit(
    observations: &[Observation],
    full: &EmResult,
    resamples: usize,
    seed: u64,
    config: &EmConfig,
) -> Result<BootstrapResult> {
    if resamples < 2 {
        return Err(Error::InvalidParameter(format!(
            "bootstrap needs at least 2 resamples, got {resamples}"
        )));
    }
    let n = observations.len();
    let refit = config.with_init(full.params);
    let fits: Vec<Option<f64>> = (0..resamples)
        .into_par_iter()
        .map(|i| {
            let mut rng = indexed_rng(seed, i as u64);
            let sample: Vec<Observation> = (0..n).map(|_| observations[rng.random_range(0..n)]).collect();
            run_em(&sample, &refit).ok().map(|r| r.pi0())
        })
        .collect();

    let estimates: Vec<f64> = fits.iter().flatten().copied().collect();
    let skipped = resamples - estimates.len();
    if skipped as f64 > MAX_SKIP_FRACTION * resamples as f64 || estimates.len() < 2 {
        return Err(Error::BootstrapSkips {
            skipped,
            total: resamples,
        });
    }
    Ok(BootstrapResult {
        point: full.pi0(),
        sd: sample_sd(&estimates),
        resample_estimates: estimates,
        resamples,
        skipped,
        seed,
    })
}
