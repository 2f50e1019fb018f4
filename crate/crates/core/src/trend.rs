//! Per-stratum (journal by year) estimates of `pi0` and random-intercept
//! linear mixed models of those estimates against year or submission count.
//!
//! The mixed model is `y = b0 + b1 x + u_journal + e` with
//! `u ~ N(0, s_u^2)` and `e ~ N(0, s^2)`. It is fitted by REML, profiled over
//! the variance ratio `lambda = s_u^2 / s^2`. For fixed `lambda` the fixed
//! effects and `s^2` have closed forms, because each journal's covariance
//! block `I + lambda 11'` has an explicit inverse.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::em::{bootstrap_from_fit, run_em, EmConfig};
use crate::error::{Error, Result};
use crate::model::Observation;
use crate::rng::stream_seed;

pub const DEFAULT_MIN_STRATUM_SIZE: usize = 30;

const LOG_LAMBDA_MIN: f64 = -18.420_680_743_952_367; // ln 1e-8
const LOG_LAMBDA_MAX: f64 = 18.420_680_743_952_367;
const GOLDEN_TOL: f64 = 1e-10;
const SCAN_POINTS: usize = 401;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StratumKey {
    pub journal: String,
    pub year: i32,
}

impl StratumKey {
    pub fn new(journal: impl Into<String>, year: i32) -> Self {
        StratumKey {
            journal: journal.into(),
            year,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumEstimate {
    pub journal: String,
    pub year: i32,
    pub pi0_hat: f64,
    /// Bootstrap standard deviation, when requested.
    pub sd: Option<f64>,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStratum {
    pub journal: String,
    pub year: i32,
    pub n_obs: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StratumReport {
    pub estimates: Vec<StratumEstimate>,
    pub skipped: Vec<SkippedStratum>,
}

#[derive(Debug, Clone)]
pub struct StratumOptions {
    pub min_size: usize,
    pub em: EmConfig,
    /// Bootstrap resamples per stratum; `None` skips the standard deviation.
    pub bootstrap: Option<usize>,
    pub seed: u64,
}

impl Default for StratumOptions {
    fn default() -> Self {
        StratumOptions {
            min_size: DEFAULT_MIN_STRATUM_SIZE,
            em: EmConfig::default(),
            bootstrap: None,
            seed: 0,
        }
    }
}

/// Groups observations by stratum. Keys come back sorted.
pub fn group_by_stratum<I>(items: I) -> BTreeMap<StratumKey, Vec<Observation>>
where
    I: IntoIterator<Item = (StratumKey, Observation)>,
{
    let mut groups: BTreeMap<StratumKey, Vec<Observation>> = BTreeMap::new();
    for (key, obs) in items {
        groups.entry(key).or_default().push(obs);
    }
    groups
}

/// One EM fit per stratum. Strata below `min_size`, or whose data carry no
/// information, are skipped and listed in the report. Numerical failures
/// abort the whole call.
pub fn estimate_by_stratum(
    groups: &BTreeMap<StratumKey, Vec<Observation>>,
    options: &StratumOptions,
) -> Result<StratumReport> {
    let min_size = options.min_size.max(1);
    let fits: Vec<(&StratumKey, usize, Result<StratumEstimate>)> = groups
        .par_iter()
        .map(|(key, obs)| {
            let n = obs.len();
            if n < min_size {
                return (
                    key,
                    n,
                    Err(Error::TooFewObservations {
                        found: n,
                        required: min_size,
                    }),
                );
            }
            (key, n, fit_stratum(key, obs, options))
        })
        .collect();

    let mut report = StratumReport::default();
    for (key, n_obs, fit) in fits {
        match fit {
            Ok(est) => report.estimates.push(est),
            Err(e) if e.is_numerical() => return Err(e),
            Err(e) => report.skipped.push(SkippedStratum {
                journal: key.journal.clone(),
                year: key.year,
                n_obs,
                reason: e.to_string(),
            }),
        }
    }
    if report.estimates.is_empty() && !groups.is_empty() {
        return Err(Error::AllStrataUndersized { min_size });
    }
    Ok(report)
}

fn fit_stratum(key: &StratumKey, obs: &[Observation], options: &StratumOptions) -> Result<StratumEstimate> {
    let fit = run_em(obs, &options.em)?;
    let sd = match options.bootstrap {
        Some(b) => {
            let seed = stream_seed(options.seed, &format!("stratum/{}/{}", key.journal, key.year));
            Some(bootstrap_from_fit(obs, &fit, b, seed, &options.em)?.sd)
        }
        None => None,
    };
    Ok(StratumEstimate {
        journal: key.journal.clone(),
        year: key.year,
        pi0_hat: fit.pi0(),
        sd,
        n_obs: obs.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Predictor {
    Year,
    Submissions,
}

impl std::str::FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "year" => Ok(Predictor::Year),
            "submissions" => Ok(Predictor::Submissions),
            other => Err(Error::InvalidParameter(format!(
                "unknown predictor {other:?} (expected year or submissions)"
            ))),
        }
    }
}

/// Submission counts keyed by journal and year.
pub type SubmissionTable = HashMap<(String, i32), f64>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub intercept: f64,
    pub slope: f64,
    pub slope_se: f64,
    pub slope_pvalue: f64,
    /// Journal random-intercept variance.
    pub var_random: f64,
    pub var_resid: f64,
    /// `var_random / var_resid` at the optimum.
    pub lambda: f64,
    pub reml_objective: f64,
    pub n_points: usize,
    pub n_groups: usize,
}

/// Fits the trend of stratum estimates against the chosen predictor, with a
/// random intercept per journal.
pub fn fit_mixed_model(
    estimates: &[StratumEstimate],
    predictor: Predictor,
    submissions: Option<&SubmissionTable>,
) -> Result<TrendFit> {
    let x: Vec<f64> = match predictor {
        Predictor::Year => estimates.iter().map(|e| f64::from(e.year)).collect(),
        Predictor::Submissions => {
            let empty = SubmissionTable::new();
            let table = submissions.unwrap_or(&empty);
            let mut missing = Vec::new();
            let mut x = Vec::with_capacity(estimates.len());
            for e in estimates {
                match table.get(&(e.journal.clone(), e.year)) {
                    Some(&v) => x.push(v),
                    None => missing.push((e.journal.clone(), e.year)),
                }
            }
            if !missing.is_empty() {
                missing.sort();
                missing.dedup();
                return Err(Error::MissingPredictor(missing));
            }
            x
        }
    };
    let y: Vec<f64> = estimates.iter().map(|e| e.pi0_hat).collect();
    let groups: Vec<&str> = estimates.iter().map(|e| e.journal.as_str()).collect();
    Panel::new(&groups, &x, &y)?.fit()
}

/// Per-group sufficient statistics on the centered predictor.
#[derive(Debug, Clone, Copy)]
struct Group {
    n: f64,
    sx: f64,
    sy: f64,
}

/// Data for a random-intercept regression.
#[derive(Debug, Clone)]
pub struct Panel {
    groups: Vec<Group>,
    n: usize,
    x_mean: f64,
    sxx: f64,
    sxy: f64,
    syy: f64,
}

/// Closed-form GLS solution for one value of `lambda`.
#[derive(Debug, Clone, Copy)]
struct Gls {
    beta: [f64; 2],
    /// Inverse of `X' H^-1 X`.
    cov_unscaled: [[f64; 2]; 2],
    sigma2: f64,
    objective: f64,
}

impl Panel {
    /// `groups[i]` labels the group of point `i`.
    pub fn new<G: Ord + Clone>(groups: &[G], x: &[f64], y: &[f64]) -> Result<Self> {
        let n = x.len();
        if groups.len() != n || y.len() != n {
            return Err(Error::InvalidParameter(format!(
                "panel lengths differ: {} groups, {} x, {} y",
                groups.len(),
                n,
                y.len()
            )));
        }
        if n < 3 {
            return Err(Error::TooFewObservations { found: n, required: 3 });
        }
        for (name, v) in x.iter().map(|v| ("x", v)).chain(y.iter().map(|v| ("y", v))) {
            if !v.is_finite() {
                return Err(Error::domain(name, *v, "finite values"));
            }
        }
        let x_mean = x.iter().sum::<f64>() / n as f64;
        let spread = x.iter().map(|v| (v - x_mean).abs()).fold(0.0, f64::max);
        if spread <= 1e-12 * x_mean.abs().max(1.0) {
            return Err(Error::SingularDesign("all predictor values are equal".into()));
        }
        let mut by_group: BTreeMap<G, Group> = BTreeMap::new();
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for ((g, &xi), &yi) in groups.iter().zip(x).zip(y) {
            let xc = xi - x_mean;
            let e = by_group.entry(g.clone()).or_insert(Group {
                n: 0.0,
                sx: 0.0,
                sy: 0.0,
            });
            e.n += 1.0;
            e.sx += xc;
            e.sy += yi;
            sxx += xc * xc;
            sxy += xc * yi;
            syy += yi * yi;
        }
        Ok(Panel {
            groups: by_group.into_values().collect(),
            n,
            x_mean,
            sxx,
            sxy,
            syy,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    fn gls(&self, lambda: f64) -> Result<Gls> {
        let p = 2.0;
        let sy_total: f64 = self.groups.iter().map(|g| g.sy).sum();
        let mut a = [[self.n as f64, 0.0], [0.0, self.sxx]];
        let mut b = [sy_total, self.sxy];
        let mut yhy = self.syy;
        let mut log_det_h = 0.0;
        for g in &self.groups {
            let c = lambda / (1.0 + g.n * lambda);
            let s = [g.n, g.sx];
            for i in 0..2 {
                for j in 0..2 {
                    a[i][j] -= c * s[i] * s[j];
                }
                b[i] -= c * s[i] * g.sy;
            }
            yhy -= c * g.sy * g.sy;
            log_det_h += (g.n * lambda).ln_1p();
        }
        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
        if !det.is_finite() || det <= 0.0 {
            return Err(Error::SingularDesign(format!(
                "X'H^-1X is not positive definite at lambda = {lambda}"
            )));
        }
        let inv = [[a[1][1] / det, -a[0][1] / det], [-a[1][0] / det, a[0][0] / det]];
        let beta = [inv[0][0] * b[0] + inv[0][1] * b[1], inv[1][0] * b[0] + inv[1][1] * b[1]];
        let rss = yhy - (beta[0] * b[0] + beta[1] * b[1]);
        let dof = self.n as f64 - p;
        let sigma2 = rss / dof;
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "residual variance {sigma2} at lambda = {lambda}"
            )));
        }
        let objective = -0.5 * (dof * sigma2.ln() + log_det_h + det.ln());
        Ok(Gls {
            beta,
            cov_unscaled: inv,
            sigma2,
            objective,
        })
    }

    /// Profiled REML log-likelihood (up to a constant) at `lambda >= 0`.
    pub fn reml_objective(&self, lambda: f64) -> Result<f64> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::domain("lambda", lambda, "[0, inf)"));
        }
        Ok(self.gls(lambda)?.objective)
    }

    /// REML fit. `lambda` is searched on a log grid over `[1e-8, 1e8]` and
    /// refined by golden section; `lambda = 0` is also considered. With a
    /// single group the random intercept is not identified and the fit is
    /// ordinary least squares.
    pub fn fit(&self) -> Result<TrendFit> {
        let lambda = if self.groups.len() < 2 {
            0.0
        } else {
            self.optimize_lambda()?
        };
        let gls = self.gls(lambda)?;
        let slope = gls.beta[1];
        let slope_se = (gls.sigma2 * gls.cov_unscaled[1][1]).sqrt();
        let z = slope / slope_se;
        let slope_pvalue = erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0);
        Ok(TrendFit {
            intercept: gls.beta[0] - slope * self.x_mean,
            slope,
            slope_se,
            slope_pvalue,
            var_random: lambda * gls.sigma2,
            var_resid: gls.sigma2,
            lambda,
            reml_objective: gls.objective,
            n_points: self.n,
            n_groups: self.groups.len(),
        })
    }

    fn optimize_lambda(&self) -> Result<f64> {
        let f = |t: f64| self.gls(t.exp()).map(|g| g.objective);
        let step = (LOG_LAMBDA_MAX - LOG_LAMBDA_MIN) / (SCAN_POINTS - 1) as f64;
        let mut best = (0usize, f64::NEG_INFINITY);
        for i in 0..SCAN_POINTS {
            let v = f(LOG_LAMBDA_MIN + step * i as f64)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        let mut lo = LOG_LAMBDA_MIN + step * best.0.saturating_sub(1) as f64;
        let mut hi = (LOG_LAMBDA_MIN + step * (best.0 + 1) as f64).min(LOG_LAMBDA_MAX);
        let ratio = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = hi - ratio * (hi - lo);
        let mut d = lo + ratio * (hi - lo);
        let (mut fc, mut fd) = (f(c)?, f(d)?);
        while hi - lo > GOLDEN_TOL {
            if fc >= fd {
                hi = d;
                d = c;
                fd = fc;
                c = hi - ratio * (hi - lo);
                fc = f(c)?;
            } else {
                lo = c;
                c = d;
                fc = fd;
                d = lo + ratio * (hi - lo);
                fd = f(d)?;
            }
        }
        let mut candidates = vec![
            (0.0, self.gls(0.0)?.objective),
            ((LOG_LAMBDA_MIN + step * best.0 as f64).exp(), best.1),
        ];
        let mid = 0.5 * (lo + hi);
        candidates.push((mid.exp(), f(mid)?));
        let (lambda, _) = candidates
            .into_iter()
            .fold((0.0, f64::NEG_INFINITY), |acc, c| if c.1 > acc.1 { c } else { acc });
        Ok(lambda)
    }
}
