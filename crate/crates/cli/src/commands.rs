use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::Serialize;
use swfdr_core::em::{bootstrap_from_fit, run_em, EmConfig};
use swfdr_core::io::{self, TableKind, SCHEMA_VERSION};
use swfdr_core::model::{Observation, DEFAULT_ALPHA};
use swfdr_core::parser::{classify, ingest_corpus, Classified, CorpusDiagnostics, PValueRecord};
use swfdr_core::rng::stream_seed;
use swfdr_core::simulate::{simulate_observations, CensoringScheme, SimConfig, TheoreticalInputs};
use swfdr_core::trend::{
    estimate_by_stratum, fit_mixed_model, group_by_stratum, Predictor, SkippedStratum, StratumEstimate, StratumKey,
    StratumOptions, TrendFit,
};
use swfdr_core::{theoretical_swfdr, MixtureParams};

use crate::output::{RunManifest, Staging};
use crate::{Censoring, CliError, EstimateArgs, ExtractArgs, PpvArgs, SimulateArgs, TrendArgs};

const HIST_BINS: usize = 20;
const HIST_WIDTH: f64 = 0.0025;

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::io(path, e))
}

fn config_json<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).unwrap_or(serde_json::Value::Null)
}

fn set_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::usage(e.to_string()))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ExtractDiagnostics {
    schema_version: u32,
    malformed_lines: Vec<usize>,
    #[serde(flatten)]
    corpus: CorpusDiagnostics,
}

pub fn extract(args: &ExtractArgs) -> Result<(), CliError> {
    let docs = io::read_jsonl(BufReader::new(open(&args.input)?))?;
    let malformed_lines: Vec<usize> = docs
        .iter()
        .filter_map(|d| match d {
            Err(swfdr_core::Error::Malformed { line, .. }) => Some(*line),
            _ => None,
        })
        .collect();
    let corpus = ingest_corpus(docs, DEFAULT_ALPHA);
    let records: Vec<PValueRecord> = corpus.entries.iter().map(|e| e.record.clone()).collect();
    let diagnostics_path = args
        .diagnostics
        .clone()
        .unwrap_or_else(|| args.output.with_extension("diagnostics.json"));

    let mut staging = Staging::new();
    staging.write(&args.output, |w| Ok(io::write_records(w, &records)?))?;
    staging.write_json(
        &diagnostics_path,
        &ExtractDiagnostics {
            schema_version: SCHEMA_VERSION,
            malformed_lines,
            corpus: corpus.diagnostics,
        },
    )?;
    RunManifest::new("extract", &[&args.input], None, config_json(args))?.finish(staging, &args.output)
}

#[derive(Default, Serialize)]
struct ClassCounts {
    records: usize,
    exact: usize,
    censored: usize,
    rounded: usize,
    excluded: usize,
}

fn classify_records(records: &[PValueRecord]) -> (Vec<(StratumKey, Observation)>, ClassCounts) {
    let mut counts = ClassCounts {
        records: records.len(),
        ..ClassCounts::default()
    };
    let mut out = Vec::new();
    for r in records {
        match classify(r, DEFAULT_ALPHA) {
            Classified::Observation(obs) => {
                match obs {
                    Observation::Exact { .. } => counts.exact += 1,
                    Observation::Censored { .. } => counts.censored += 1,
                    Observation::Rounded { .. } => counts.rounded += 1,
                }
                out.push((StratumKey::new(r.journal.clone(), r.year), obs));
            }
            Classified::Excluded(_) => counts.excluded += 1,
        }
    }
    (out, counts)
}

#[derive(Serialize)]
struct BootstrapSummary {
    resamples: usize,
    skipped: usize,
    seed: u64,
}

#[derive(Serialize)]
struct StrataSummary {
    min_stratum: usize,
    estimates: Vec<StratumEstimate>,
    skipped: Vec<SkippedStratum>,
}

#[derive(Serialize)]
struct EstimateOutput {
    schema_version: u32,
    alpha: f64,
    counts: ClassCounts,
    pi0: f64,
    sd: Option<f64>,
    a: f64,
    b: f64,
    loglik: f64,
    initial_loglik: f64,
    iterations: usize,
    converged: bool,
    near_uniform_alternative: bool,
    bootstrap: Option<BootstrapSummary>,
    strata: Option<StrataSummary>,
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    set_threads(args.threads)?;
    let records = io::read_records(BufReader::new(open(&args.input)?))?;
    let (keyed, counts) = classify_records(&records);
    let observations: Vec<Observation> = keyed.iter().map(|(_, o)| *o).collect();
    let config = EmConfig::default();
    let fit = run_em(&observations, &config)?;

    let bootstrap = if args.bootstrap > 0 {
        let seed = stream_seed(args.seed, "bootstrap");
        Some(bootstrap_from_fit(&observations, &fit, args.bootstrap, seed, &config)?)
    } else {
        None
    };

    let strata = match args.by {
        Some(_) => {
            let options = StratumOptions {
                min_size: args.min_stratum,
                em: config,
                bootstrap: (args.bootstrap > 0).then_some(args.bootstrap),
                seed: stream_seed(args.seed, "strata"),
            };
            let report = estimate_by_stratum(&group_by_stratum(keyed), &options)?;
            Some(StrataSummary {
                min_stratum: args.min_stratum,
                estimates: report.estimates,
                skipped: report.skipped,
            })
        }
        None => None,
    };

    let shape = fit.params.shape();
    let out = EstimateOutput {
        schema_version: SCHEMA_VERSION,
        alpha: fit.params.alpha(),
        counts,
        pi0: fit.pi0(),
        sd: bootstrap.as_ref().map(|b| b.sd),
        a: shape.a(),
        b: shape.b(),
        loglik: fit.loglik(),
        initial_loglik: fit.initial_loglik,
        iterations: fit.iterations,
        converged: fit.converged,
        near_uniform_alternative: fit.near_uniform_alternative,
        bootstrap: bootstrap.as_ref().map(|b| BootstrapSummary {
            resamples: b.resamples,
            skipped: b.skipped,
            seed: b.seed,
        }),
        strata,
    };

    let mut staging = Staging::new();
    staging.write_json(&args.output, &out)?;
    if let (Some(path), Some(strata)) = (&args.strata_output, &out.strata) {
        staging.write(path, |w| Ok(io::write_strata(w, &strata.estimates)?))?;
    }
    if let Some(path) = &args.emit_hist {
        staging.write(path, |w| {
            write_histogram(w, &records).map_err(|e| CliError::io(path, e))
        })?;
    }
    RunManifest::new("estimate", &[&args.input], Some(args.seed), config_json(args))?.finish(staging, &args.output)
}

/// Reported values in `(0, alpha]` binned by width 0.0025, split by report
/// kind. Bins are closed on the right; rounded reports of 0 go to the first.
fn write_histogram(w: &mut dyn Write, records: &[PValueRecord]) -> std::io::Result<()> {
    let mut bins = [[0usize; 3]; HIST_BINS];
    for r in records {
        let kind = match classify(r, DEFAULT_ALPHA) {
            Classified::Observation(Observation::Exact { .. }) => 0,
            Classified::Observation(Observation::Censored { .. }) => 1,
            Classified::Observation(Observation::Rounded { .. }) => 2,
            Classified::Excluded(_) => continue,
        };
        let idx = ((r.value / HIST_WIDTH).ceil() as usize).clamp(1, HIST_BINS) - 1;
        bins[idx][kind] += 1;
    }
    writeln!(w, "bin_lower,bin_upper,exact,censored,rounded")?;
    for (i, c) in bins.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            round_edge(i as f64 * HIST_WIDTH),
            round_edge((i + 1) as f64 * HIST_WIDTH),
            c[0],
            c[1],
            c[2]
        )?;
    }
    Ok(())
}

fn round_edge(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig {
        n: args.n,
        true_params: MixtureParams::with_default_alpha(args.pi0, args.a, args.b)?,
        censor_frac: args.censor_frac,
        round_frac: args.round_frac,
        seed: args.seed,
        censoring: match args.censoring {
            Censoring::SmallestCovering => CensoringScheme::SmallestCovering,
            Censoring::Independent => CensoringScheme::Independent,
        },
    };
    let data = simulate_observations(&config)?;
    let width = data.len().to_string().len();
    let doc_id = |i: usize| format!("sim-{:0width$}", i + 1);
    let records: Vec<PValueRecord> = data
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let (comparison, value, raw_span) = match d.observation {
                Observation::Exact { p } => (swfdr_core::Comparison::Equals, p, format!("P = {p}")),
                Observation::Censored { bound, .. } => (swfdr_core::Comparison::Less, bound, format!("P < {bound}")),
                Observation::Rounded { bin } => {
                    let v = bin.reported_value();
                    (swfdr_core::Comparison::Equals, v, format!("P = {v:.2}"))
                }
            };
            PValueRecord {
                doc_id: doc_id(i),
                journal: args.journal.clone(),
                year: args.year,
                comparison,
                value,
                raw_span,
            }
        })
        .collect();

    let mut staging = Staging::new();
    staging.write(&args.output, |w| Ok(io::write_records(w, &records)?))?;
    if let Some(path) = &args.truth {
        staging.write(path, |w| {
            let mut body = String::from("doc_id,hidden_p,is_null\n");
            for (i, d) in data.iter().enumerate() {
                body.push_str(&format!("{},{},{}\n", doc_id(i), d.hidden_p, d.is_null));
            }
            w.write_all(body.as_bytes()).map_err(|e| CliError::io(path, e))
        })?;
    }
    RunManifest::new("simulate", &[], Some(args.seed), config_json(args))?.finish(staging, &args.output)
}

#[derive(Serialize)]
struct TrendOutput {
    schema_version: u32,
    predictor: Predictor,
    /// Reference distribution of the slope Wald statistic.
    reference: &'static str,
    fit: TrendFit,
    strata_used: usize,
    skipped_strata: Vec<SkippedStratum>,
}

fn first_line(path: &Path) -> Result<String, CliError> {
    let mut line = String::new();
    BufReader::new(open(path)?)
        .read_line(&mut line)
        .map_err(|e| CliError::io(path, e))?;
    Ok(line.trim_start_matches('\u{feff}').to_string())
}

pub fn trend(args: &TrendArgs) -> Result<(), CliError> {
    set_threads(args.threads)?;
    let predictor: Predictor = args.predictor.parse()?;
    let (estimates, skipped) = match io::detect_table(&first_line(&args.input)?) {
        Some(TableKind::Strata) => (io::read_strata(BufReader::new(open(&args.input)?))?, Vec::new()),
        Some(TableKind::Records) => {
            let records = io::read_records(BufReader::new(open(&args.input)?))?;
            let (keyed, _) = classify_records(&records);
            let options = StratumOptions {
                min_size: args.min_stratum,
                em: EmConfig::default(),
                bootstrap: (args.bootstrap > 0).then_some(args.bootstrap),
                seed: stream_seed(args.seed, "strata"),
            };
            let report = estimate_by_stratum(&group_by_stratum(keyed), &options)?;
            (report.estimates, report.skipped)
        }
        None => {
            return Err(CliError::data(format!(
                "{}: header is neither a records table ({}) nor a strata table ({})",
                args.input.display(),
                io::RECORD_HEADER.join(","),
                io::STRATUM_HEADER.join(",")
            )))
        }
    };
    let submissions = match &args.submissions {
        Some(path) => Some(io::read_submissions(BufReader::new(open(path)?))?),
        None if predictor == Predictor::Submissions => {
            return Err(CliError::usage("--predictor submissions needs --submissions"))
        }
        None => None,
    };
    let fit = fit_mixed_model(&estimates, predictor, submissions.as_ref())?;
    let out = TrendOutput {
        schema_version: SCHEMA_VERSION,
        predictor,
        reference: "normal",
        fit,
        strata_used: estimates.len(),
        skipped_strata: skipped,
    };

    let mut staging = Staging::new();
    staging.write_json(&args.output, &out)?;
    if let Some(path) = &args.plot_data {
        staging.write(path, |w| Ok(io::write_strata(w, &estimates)?))?;
    }
    let mut inputs: Vec<&Path> = vec![&args.input];
    if let Some(p) = &args.submissions {
        inputs.push(p);
    }
    RunManifest::new("trend", &inputs, Some(args.seed), config_json(args))?.finish(staging, &args.output)
}

#[derive(Serialize)]
struct PpvOutput {
    schema_version: u32,
    prior: f64,
    alpha: f64,
    power: f64,
    swfdr: f64,
}

pub fn ppv(args: &PpvArgs) -> Result<(), CliError> {
    let swfdr = theoretical_swfdr(&TheoreticalInputs {
        prior_true: args.prior,
        alpha_level: args.alpha,
        power: args.power,
    })?;
    let out = PpvOutput {
        schema_version: SCHEMA_VERSION,
        prior: args.prior,
        alpha: args.alpha,
        power: args.power,
        swfdr,
    };
    let text = serde_json::to_string_pretty(&out).map_err(|e| CliError::data(e.to_string()))?;
    if let Some(path) = &args.output {
        let mut staging = Staging::new();
        staging.write_json(path, &out)?;
        RunManifest::new("ppv", &[], None, config_json(args))?.finish(staging, path)?;
    }
    println!("{text}");
    Ok(())
}
