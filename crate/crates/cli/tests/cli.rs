use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn swfdr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_swfdr"))
        .args(args)
        .env_remove("SWFDR_SEED")
        .output()
        .expect("run swfdr")
}

fn ok(args: &[&str]) -> Output {
    let out = swfdr(args);
    assert!(
        out.status.success(),
        "swfdr {args:?}: {}\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn fixture() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures/abstracts.jsonl")
        .to_str()
        .unwrap()
        .to_string()
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, body: &str) -> String {
        fs::write(self.path(name), body).unwrap();
        self.arg(name)
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_slice(&fs::read(self.path(name)).unwrap()).unwrap()
    }
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(swfdr(&["--help"]).status.code(), Some(0));
    assert_eq!(swfdr(&["estimate", "--help"]).status.code(), Some(0));
    assert_eq!(swfdr(&[]).status.code(), Some(1));
    assert_eq!(swfdr(&["estimate"]).status.code(), Some(1));
    assert_eq!(
        swfdr(&["estimate", "-i", "x", "-o", "y", "--by", "year"]).status.code(),
        Some(1)
    );
}

#[test]
fn extract_empty_corpus() {
    let d = Dir::new();
    let input = d.write("empty.jsonl", "");
    ok(&["extract", "-i", &input, "-o", &d.arg("r.csv")]);
    assert_eq!(
        fs::read_to_string(d.path("r.csv")).unwrap().trim(),
        "doc_id,journal,year,comparison,value,raw_span"
    );
    let diag = d.json("r.diagnostics.json");
    assert_eq!(diag["documents"], 0);
    assert_eq!(diag["records"], 0);
    assert!(d.path("r.csv.manifest.json").exists());
}

#[test]
fn extract_fixture_is_complete_and_reproducible() {
    let d = Dir::new();
    ok(&["extract", "-i", &fixture(), "-o", &d.arg("a.csv")]);
    ok(&["extract", "-i", &fixture(), "-o", &d.arg("b.csv")]);
    let a = fs::read(d.path("a.csv")).unwrap();
    assert_eq!(a, fs::read(d.path("b.csv")).unwrap());
    let rows = String::from_utf8(a).unwrap().lines().count() - 1;
    assert!(rows >= 21, "{rows}");

    let manifest = d.json("a.csv.manifest.json");
    assert_eq!(manifest["subcommand"], "extract");
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn malformed_lines_are_reported() {
    let d = Dir::new();
    let input = d.write(
        "c.jsonl",
        "{\"id\":\"a\",\"journal\":\"J\",\"year\":2001,\"text\":\"P = 0.01\"}\nnot json\n",
    );
    ok(&[
        "extract",
        "-i",
        &input,
        "-o",
        &d.arg("r.csv"),
        "--diagnostics",
        &d.arg("diag.json"),
    ]);
    assert_eq!(d.json("diag.json")["malformed_lines"], serde_json::json!([2]));
}

#[test]
fn estimate_is_deterministic_across_thread_counts() {
    let d = Dir::new();
    ok(&[
        "simulate",
        "--n",
        "800",
        "--pi0",
        "0.3",
        "--censor-frac",
        "0.2",
        "--round-frac",
        "0.2",
        "--seed",
        "3",
        "-o",
        &d.arg("sim.csv"),
        "--truth",
        &d.arg("truth.csv"),
    ]);
    for (name, threads) in [("one.json", "1"), ("four.json", "4")] {
        ok(&[
            "estimate",
            "-i",
            &d.arg("sim.csv"),
            "-o",
            &d.arg(name),
            "--bootstrap",
            "8",
            "--seed",
            "2",
            "--threads",
            threads,
        ]);
    }
    assert_eq!(
        fs::read(d.path("one.json")).unwrap(),
        fs::read(d.path("four.json")).unwrap()
    );

    let est = d.json("one.json");
    let pi0 = est["pi0"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&pi0));
    assert!(est["sd"].as_f64().unwrap() > 0.0);
    assert_eq!(est["counts"]["records"], 800);
    assert_eq!(est["bootstrap"]["resamples"], 8);
    assert_eq!(fs::read_to_string(d.path("truth.csv")).unwrap().lines().count(), 801);
}

#[test]
fn seed_can_come_from_the_environment() {
    let d = Dir::new();
    let run = |name: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_swfdr"));
        cmd.args(["simulate", "--n", "50", "--pi0", "0.5", "-o", &d.arg(name)]);
        match seed {
            Some(s) => cmd.env("SWFDR_SEED", s),
            None => cmd.env_remove("SWFDR_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        fs::read(d.path(name)).unwrap()
    };
    assert_eq!(run("a.csv", Some("12")), run("b.csv", Some("12")));
    assert_ne!(run("c.csv", Some("12")), run("d.csv", None));
}

#[test]
fn uninformative_corpus_is_a_data_error() {
    let d = Dir::new();
    let mut body = String::from("doc_id,journal,year,comparison,value,raw_span\n");
    for i in 0..40 {
        body.push_str(&format!("d{i},J,2001,less,0.05,P<0.05\n"));
    }
    let input = d.write("r.csv", &body);
    let out = swfdr(&["estimate", "-i", &input, "-o", &d.arg("e.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.path("e.json").exists());
    assert!(!d.path("e.json.manifest.json").exists());
}

#[test]
fn failed_run_leaves_no_partial_outputs() {
    let d = Dir::new();
    let out = swfdr(&[
        "estimate",
        "-i",
        &d.arg("missing.csv"),
        "-o",
        &d.arg("e.json"),
        "--emit-hist",
        &d.arg("h.csv"),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(fs::read_dir(d.0.path()).unwrap().count(), 0);
}

#[test]
fn estimate_by_stratum_writes_strata_table() {
    let d = Dir::new();
    ok(&[
        "simulate",
        "--n",
        "300",
        "--pi0",
        "0.2",
        "--journal",
        "A",
        "--year",
        "2001",
        "--seed",
        "1",
        "-o",
        &d.arg("a.csv"),
    ]);
    ok(&[
        "simulate",
        "--n",
        "20",
        "--pi0",
        "0.2",
        "--journal",
        "B",
        "--year",
        "2001",
        "--seed",
        "2",
        "-o",
        &d.arg("b.csv"),
    ]);
    let a = fs::read_to_string(d.path("a.csv")).unwrap();
    let b = fs::read_to_string(d.path("b.csv")).unwrap();
    let b = b
        .lines()
        .skip(1)
        .map(|l| l.replacen("sim-", "simb-", 1) + "\n")
        .collect::<String>();
    let input = d.write("all.csv", &(a + &b));
    ok(&[
        "estimate",
        "-i",
        &input,
        "-o",
        &d.arg("e.json"),
        "--by",
        "journal,year",
        "--strata-output",
        &d.arg("s.csv"),
        "--emit-hist",
        &d.arg("h.csv"),
    ]);
    let strata = fs::read_to_string(d.path("s.csv")).unwrap();
    let lines: Vec<&str> = strata.lines().collect();
    assert_eq!(lines[0], "journal,year,pi0_hat,sd,n_obs");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("A,2001,"));
    assert_eq!(d.json("e.json")["strata"]["skipped"][0]["journal"], "B");

    let hist = fs::read_to_string(d.path("h.csv")).unwrap();
    assert_eq!(hist.lines().count(), 21);
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(2).map(|c| c.parse::<usize>().unwrap()).sum::<usize>())
        .sum();
    assert_eq!(total, 320);
}

fn strata_csv(rows: &[(&str, i32, f64)]) -> String {
    let mut s = String::from("journal,year,pi0_hat,sd,n_obs\n");
    for (j, y, p) in rows {
        s.push_str(&format!("{j},{y},{p},,100\n"));
    }
    s
}

#[test]
fn single_journal_trend_is_ols() {
    let d = Dir::new();
    let rows: Vec<(&str, i32, f64)> = (0..8)
        .map(|t| ("J", 2000 + t, 0.1 + 0.01 * t as f64 + 0.003 * (t as f64).sin()))
        .collect();
    let input = d.write("s.csv", &strata_csv(&rows));
    ok(&[
        "trend",
        "-i",
        &input,
        "-o",
        &d.arg("t.json"),
        "--plot-data",
        &d.arg("plot.csv"),
    ]);
    let fit = &d.json("t.json")["fit"];

    let x: Vec<f64> = rows.iter().map(|r| r.1 as f64).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let mx = x.iter().sum::<f64>() / 8.0;
    let my = y.iter().sum::<f64>() / 8.0;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    assert!((fit["slope"].as_f64().unwrap() - sxy / sxx).abs() < 1e-9);
    assert_eq!(fit["var_random"].as_f64().unwrap(), 0.0);
    assert_eq!(fs::read_to_string(d.path("plot.csv")).unwrap().lines().count(), 9);
}

#[test]
fn submissions_predictor_needs_every_pair() {
    let d = Dir::new();
    let input = d.write(
        "s.csv",
        &strata_csv(&[("A", 2000, 0.1), ("A", 2001, 0.2), ("B", 2000, 0.15), ("B", 2001, 0.3)]),
    );
    let usage = swfdr(&[
        "trend",
        "-i",
        &input,
        "-o",
        &d.arg("t.json"),
        "--predictor",
        "submissions",
    ]);
    assert_eq!(usage.status.code(), Some(1));

    let subs = d.write("sub.csv", "journal,year,submissions\nA,2000,10\nA,2001,20\nB,2000,12\n");
    let out = swfdr(&[
        "trend",
        "-i",
        &input,
        "-o",
        &d.arg("t.json"),
        "--predictor",
        "submissions",
        "--submissions",
        &subs,
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("(B, 2001)"));
    assert!(!d.path("t.json").exists());

    let subs = d.write(
        "sub2.csv",
        "journal,year,submissions\nA,2000,10\nA,2001,20\nB,2000,12\nB,2001,30\n",
    );
    ok(&[
        "trend",
        "-i",
        &input,
        "-o",
        &d.arg("t.json"),
        "--predictor",
        "submissions",
        "--submissions",
        &subs,
    ]);
    assert_eq!(d.json("t.json")["predictor"], "submissions");
}

#[test]
fn trend_from_records_stratifies_first() {
    let d = Dir::new();
    let mut body = String::new();
    for (k, (j, y)) in [("A", "2001"), ("A", "2002"), ("B", "2001")].iter().enumerate() {
        let name = format!("{k}.csv");
        ok(&[
            "simulate",
            "--n",
            "200",
            "--pi0",
            "0.3",
            "--journal",
            j,
            "--year",
            y,
            "--seed",
            &k.to_string(),
            "-o",
            &d.arg(&name),
        ]);
        let text = fs::read_to_string(d.path(&name)).unwrap();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && k > 0 {
                continue;
            }
            body.push_str(&line.replacen("sim-", &format!("s{k}-"), 1));
            body.push('\n');
        }
    }
    let input = d.write("records.csv", &body);
    ok(&["trend", "-i", &input, "-o", &d.arg("t.json")]);
    let t = d.json("t.json");
    assert_eq!(t["strata_used"], 3);
    assert_eq!(t["fit"]["n_groups"], 2);
}

#[test]
fn ppv_matches_low_prior_example() {
    let out = ok(&["ppv", "--prior", "0.01"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["swfdr"].as_f64().unwrap() - 0.861).abs() <= 0.001);

    let d = Dir::new();
    ok(&["ppv", "--prior", "0.5", "--power", "0.8", "-o", &d.arg("p.json")]);
    assert!((d.json("p.json")["swfdr"].as_f64().unwrap() - 0.025 / 0.425).abs() < 1e-15);
    assert!(d.path("p.json.manifest.json").exists());

    assert_eq!(swfdr(&["ppv", "--prior", "1.5"]).status.code(), Some(2));
}
