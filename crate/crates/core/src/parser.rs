//! Extraction of reported P-values from abstract text and their
//! classification into exact, censored and rounded observations.
//!
//! A report is `P` (either case) followed by one of `=`, `<`, `<=`, `≤`, `⩽`
//! and a number, with or without spaces. Numbers may use `·` as the decimal
//! mark and may carry an exponent written as `1.3e-4`, `1.3×10-4`,
//! `1.3x10^-4`, `1.3 x 10-4`, `1.3×10⁻⁴`, or a bare `10-4`.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, RoundBin, DEFAULT_ALPHA};

pub const MIN_YEAR: i32 = 1900;
pub const MAX_YEAR: i32 = 2100;

/// Scale factor that makes the median absolute deviation consistent with
/// the standard deviation under normality.
const MAD_SCALE: f64 = 1.4826;

static PHRASE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bp\s*(<=|≤|⩽|=|<)\s*").expect("phrase pattern"));

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(concat!(
        r"^(?:",
        // bare power of ten: 10-4, 10^-4, 10⁻⁴
        r"10(?:\s*\^\s*(?P<pow_a>[-−–+]?\d+)|(?P<pow_b>[-−–]\d+)|(?P<pow_c>[⁻⁺]?[⁰¹²³⁴⁵⁶⁷⁸⁹]+))",
        r"|",
        r"(?P<mant>\d+(?:[.·]\d+)?|[.·]\d+)",
        r"(?:",
        r"\s*[eE](?P<exp_e>[-−–+]?\d+)",
        r"|\s*[×xX]\s*10\s*(?:\^\s*)?(?P<exp_t>[-−–+]?\d+)",
        r"|\s*[×xX]\s*10(?P<exp_s>[⁻⁺]?[⁰¹²³⁴⁵⁶⁷⁸⁹]+)",
        r")?",
        r")"
    ))
    .expect("number pattern")
});

/// The comparison printed between `P` and the number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    Equals,
    Less,
    Leq,
}

impl Comparison {
    pub fn as_str(self) -> &'static str {
        match self {
            Comparison::Equals => "equals",
            Comparison::Less => "less",
            Comparison::Leq => "leq",
        }
    }

    fn from_symbol(symbol: &str) -> Self {
        match symbol {
            "=" => Comparison::Equals,
            "<" => Comparison::Less,
            _ => Comparison::Leq,
        }
    }
}

impl std::str::FromStr for Comparison {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equals" => Ok(Comparison::Equals),
            "less" => Ok(Comparison::Less),
            "leq" => Ok(Comparison::Leq),
            other => Err(Error::InvalidParameter(format!("unknown comparison {other:?}"))),
        }
    }
}

/// One abstract with its source metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractDoc {
    pub id: String,
    pub journal: String,
    pub year: i32,
    pub text: String,
}

impl AbstractDoc {
    pub fn new(id: impl Into<String>, journal: impl Into<String>, year: i32, text: impl Into<String>) -> Result<Self> {
        let doc = AbstractDoc {
            id: id.into(),
            journal: journal.into(),
            year,
            text: text.into(),
        };
        doc.validate()?;
        Ok(doc)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::InvalidParameter("document id is empty".into()));
        }
        if !(MIN_YEAR..=MAX_YEAR).contains(&self.year) {
            return Err(Error::InvalidParameter(format!(
                "year {} outside [{MIN_YEAR}, {MAX_YEAR}]",
                self.year
            )));
        }
        Ok(())
    }
}

/// One extracted P-value report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PValueRecord {
    pub doc_id: String,
    pub journal: String,
    pub year: i32,
    pub comparison: Comparison,
    pub value: f64,
    /// The matched text, verbatim.
    pub raw_span: String,
}

/// A parsed numeric token and how it was printed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericToken {
    pub value: f64,
    /// Decimal places after dropping trailing zeros; `None` for exponent forms.
    pub decimals: Option<usize>,
    /// Length in bytes of the matched text.
    pub len: usize,
}

fn superscript_digits(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '⁻' => '-',
            '⁺' => '+',
            '⁰' => '0',
            '¹' => '1',
            '²' => '2',
            '³' => '3',
            '⁴' => '4',
            '⁵' => '5',
            '⁶' => '6',
            '⁷' => '7',
            '⁸' => '8',
            '⁹' => '9',
            other => other,
        })
        .collect()
}

fn normalize_exponent(s: &str) -> String {
    superscript_digits(s).replace(['−', '–'], "-")
}

/// Parses the number at the start of `text`.
pub fn parse_number(text: &str) -> Option<NumericToken> {
    let caps = NUMBER.captures(text)?;
    let len = caps.get(0)?.end();
    let bare_power = ["pow_a", "pow_b", "pow_c"].iter().find_map(|g| caps.name(g));
    if let Some(exp) = bare_power {
        let value: f64 = format!("1e{}", normalize_exponent(exp.as_str())).parse().ok()?;
        return Some(NumericToken {
            value,
            decimals: None,
            len,
        });
    }
    let mantissa = caps.name("mant")?.as_str().replace('·', ".");
    let exponent = ["exp_e", "exp_t", "exp_s"].iter().find_map(|g| caps.name(g));
    let (value, decimals) = match exponent {
        Some(exp) => {
            let v: f64 = format!("{mantissa}e{}", normalize_exponent(exp.as_str()))
                .parse()
                .ok()?;
            (v, None)
        }
        None => {
            let v: f64 = mantissa.parse().ok()?;
            let decimals = mantissa
                .split_once('.')
                .map(|(_, frac)| frac.trim_end_matches('0').len())
                .unwrap_or(0);
            (v, Some(decimals))
        }
    };
    value.is_finite().then_some(NumericToken { value, decimals, len })
}

/// Result of scanning one document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Extraction {
    pub records: Vec<PValueRecord>,
    /// Comparison phrases not followed by a parseable number.
    pub unparseable: usize,
}

/// Scans a document for P-value reports, in document order.
pub fn extract_with_diagnostics(doc: &AbstractDoc) -> Extraction {
    let mut out = Extraction::default();
    let text = doc.text.as_str();
    let mut pos = 0;
    while let Some(caps) = PHRASE.captures_at(text, pos) {
        let phrase = caps.get(0).expect("whole match");
        let symbol = caps.get(1).expect("symbol group").as_str();
        match parse_number(&text[phrase.end()..]) {
            Some(token) => {
                let end = phrase.end() + token.len;
                out.records.push(PValueRecord {
                    doc_id: doc.id.clone(),
                    journal: doc.journal.clone(),
                    year: doc.year,
                    comparison: Comparison::from_symbol(symbol),
                    value: token.value,
                    raw_span: text[phrase.start()..end].to_string(),
                });
                pos = end;
            }
            None => {
                out.unparseable += 1;
                pos = phrase.end();
            }
        }
    }
    out
}

/// All P-value reports in a document, in document order.
pub fn extract_pvalues(doc: &AbstractDoc) -> Vec<PValueRecord> {
    extract_with_diagnostics(doc).records
}

/// Why a record does not enter the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExclusionReason {
    AboveThreshold,
    NonpositiveBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classified {
    Observation(Observation),
    Excluded(ExclusionReason),
}

impl Classified {
    pub fn observation(&self) -> Option<Observation> {
        match self {
            Classified::Observation(o) => Some(*o),
            Classified::Excluded(_) => None,
        }
    }
}

/// Recovers how the value was printed, from the raw span when possible.
fn printed_token(record: &PValueRecord) -> NumericToken {
    if let Some(m) = PHRASE.find(&record.raw_span) {
        if let Some(tok) = parse_number(&record.raw_span[m.end()..]) {
            if tok.value == record.value {
                return tok;
            }
        }
    }
    let shortest = format!("{}", record.value);
    parse_number(&shortest).unwrap_or(NumericToken {
        value: record.value,
        decimals: None,
        len: 0,
    })
}

/// Round reported values with at most two printed decimals map to their bin.
fn round_bin(token: &NumericToken) -> Option<RoundBin> {
    let decimals = token.decimals?;
    if decimals > 2 {
        return None;
    }
    let hundredths = token.value * 100.0;
    let k = hundredths.round();
    if (hundredths - k).abs() > 1e-9 || !(0.0..=5.0).contains(&k) {
        return None;
    }
    RoundBin::new(k as usize).ok()
}

/// Maps a record to the observation it contributes, or to the reason it is
/// left out.
pub fn classify(record: &PValueRecord, alpha: f64) -> Classified {
    let v = record.value;
    match record.comparison {
        Comparison::Less | Comparison::Leq => {
            if v <= 0.0 {
                Classified::Excluded(ExclusionReason::NonpositiveBound)
            } else if v > alpha {
                Classified::Excluded(ExclusionReason::AboveThreshold)
            } else {
                Classified::Observation(Observation::Censored {
                    bound: v,
                    strict: record.comparison == Comparison::Less,
                })
            }
        }
        Comparison::Equals => {
            let rounded = if alpha >= DEFAULT_ALPHA {
                round_bin(&printed_token(record))
            } else {
                None
            };
            if let Some(bin) = rounded {
                Classified::Observation(Observation::Rounded { bin })
            } else if v > alpha {
                Classified::Excluded(ExclusionReason::AboveThreshold)
            } else if v <= 0.0 {
                Classified::Excluded(ExclusionReason::NonpositiveBound)
            } else {
                Classified::Observation(Observation::Exact { p: v })
            }
        }
    }
}

/// Counts for one journal or one year.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroupCounts {
    pub documents: usize,
    pub documents_with_pvalues: usize,
    pub records: usize,
    pub records_at_or_below_alpha: usize,
    pub fraction_at_or_below_alpha: Option<f64>,
}

impl GroupCounts {
    fn finish(&mut self) {
        self.fraction_at_or_below_alpha =
            (self.records > 0).then(|| self.records_at_or_below_alpha as f64 / self.records as f64);
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusDiagnostics {
    pub documents: usize,
    pub malformed_documents: usize,
    pub documents_with_pvalues: usize,
    pub records: usize,
    pub unparseable: usize,
    pub exact: usize,
    pub censored: usize,
    pub rounded: usize,
    pub excluded_above_threshold: usize,
    pub excluded_nonpositive: usize,
    pub fraction_at_or_below_alpha: Option<f64>,
    /// Median number of reports among documents with at least one.
    pub median_pvalues_per_reporting_doc: Option<f64>,
    /// Scaled median absolute deviation of the same counts.
    pub mad_pvalues_per_reporting_doc: Option<f64>,
    pub by_journal: BTreeMap<String, GroupCounts>,
    pub by_year: BTreeMap<i32, GroupCounts>,
}

/// An extracted record with its classification.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedRecord {
    pub record: PValueRecord,
    pub classified: Classified,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    pub entries: Vec<ClassifiedRecord>,
    pub diagnostics: CorpusDiagnostics,
}

impl Corpus {
    pub fn observations(&self) -> Vec<Observation> {
        self.entries.iter().filter_map(|e| e.classified.observation()).collect()
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2]),
        _ => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Extracts and classifies every document. Malformed documents are counted
/// and skipped. Output is ordered by document id, then by position within
/// the document.
pub fn ingest_corpus<I>(docs: I, alpha: f64) -> Corpus
where
    I: IntoIterator<Item = Result<AbstractDoc>>,
{
    let mut diag = CorpusDiagnostics::default();
    let mut valid = Vec::new();
    for doc in docs {
        match doc.and_then(|d| d.validate().map(|_| d)) {
            Ok(d) => valid.push(d),
            Err(_) => diag.malformed_documents += 1,
        }
    }
    diag.documents = valid.len();

    let extractions: Vec<Extraction> = valid.par_iter().map(extract_with_diagnostics).collect();

    let mut per_doc_counts = Vec::new();
    for (doc, ex) in valid.iter().zip(&extractions) {
        let journal = diag.by_journal.entry(doc.journal.clone()).or_default();
        journal.documents += 1;
        let year = diag.by_year.entry(doc.year).or_default();
        year.documents += 1;
        diag.unparseable += ex.unparseable;
        if ex.records.is_empty() {
            continue;
        }
        per_doc_counts.push(ex.records.len() as f64);
        let at_or_below = ex.records.iter().filter(|r| r.value <= alpha).count();
        for group in [
            diag.by_journal.get_mut(&doc.journal).expect("inserted above"),
            diag.by_year.get_mut(&doc.year).expect("inserted above"),
        ] {
            group.documents_with_pvalues += 1;
            group.records += ex.records.len();
            group.records_at_or_below_alpha += at_or_below;
        }
    }
    diag.by_journal.values_mut().for_each(GroupCounts::finish);
    diag.by_year.values_mut().for_each(GroupCounts::finish);

    let mut entries: Vec<ClassifiedRecord> = extractions
        .into_iter()
        .flat_map(|ex| ex.records)
        .map(|record| {
            let classified = classify(&record, alpha);
            ClassifiedRecord { record, classified }
        })
        .collect();
    entries.sort_by(|x, y| x.record.doc_id.cmp(&y.record.doc_id));

    diag.documents_with_pvalues = per_doc_counts.len();
    diag.records = entries.len();
    let mut at_or_below = 0;
    for e in &entries {
        if e.record.value <= alpha {
            at_or_below += 1;
        }
        match e.classified {
            Classified::Observation(Observation::Exact { .. }) => diag.exact += 1,
            Classified::Observation(Observation::Censored { .. }) => diag.censored += 1,
            Classified::Observation(Observation::Rounded { .. }) => diag.rounded += 1,
            Classified::Excluded(ExclusionReason::AboveThreshold) => diag.excluded_above_threshold += 1,
            Classified::Excluded(ExclusionReason::NonpositiveBound) => diag.excluded_nonpositive += 1,
        }
    }
    diag.fraction_at_or_below_alpha = (diag.records > 0).then(|| at_or_below as f64 / diag.records as f64);

    per_doc_counts.sort_by(f64::total_cmp);
    diag.median_pvalues_per_reporting_doc = median(&per_doc_counts);
    if let Some(m) = diag.median_pvalues_per_reporting_doc {
        let mut dev: Vec<f64> = per_doc_counts.iter().map(|c| (c - m).abs()).collect();
        dev.sort_by(f64::total_cmp);
        diag.mad_pvalues_per_reporting_doc = median(&dev).map(|d| MAD_SCALE * d);
    }

    Corpus {
        entries,
        diagnostics: diag,
    }
}
