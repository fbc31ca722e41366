use std::path::Path;
use std::process::Command;

use proptest::prelude::*;

use crgen_cli::config::{FamilyArg, List};
use crgen_cli::{run, ExperimentConfig, EXIT_CONFIG, EXIT_OK, EXIT_REFUSED};
use crgen_core::bounds::{nu_correlated, CrBoundQuery};
use crgen_core::gaussian_tails::{mills_ratio, orthant_probability, q_tail};

fn argv(args: &[&str]) -> Vec<String> {
    std::iter::once("crgen").chain(args.iter().copied()).map(String::from).collect()
}

fn crgen(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_crgen")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap(), String::from_utf8(out.stderr).unwrap())
}

fn read_csv(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

/// CSV text with the timing column removed.
fn without_wallclock(path: &Path) -> String {
    let mut rd = csv::Reader::from_path(path).unwrap();
    let headers = rd.headers().unwrap().clone();
    let skip = headers.iter().position(|h| h == "wallclock_secs").unwrap();
    let keep = |r: &csv::StringRecord| r.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, f)| f).collect::<Vec<_>>().join(",");
    let mut text = keep(&headers);
    for r in rd.records() {
        text.push('\n');
        text.push_str(&keep(&r.unwrap()));
    }
    text
}

#[test]
fn simulate_example_reports_interval() {
    let (code, out, err) = crgen(&["simulate", "--source", "dsbs", "--rho", "0.5", "--k", "8", "--codebook", "dual-bch", "--zero-comm", "--trials", "100000", "--seed", "7"]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    let r = &v["report"];
    let (p, lo, hi) = (r["agreement"].as_f64().unwrap(), r["ci_low"].as_f64().unwrap(), r["ci_high"].as_f64().unwrap());
    assert!(lo <= p && p <= hi && hi - lo < 0.01);
    assert_eq!(r["key_bits"], 8);
    assert_eq!(r["comm_bits"], 0);
    assert_eq!(v["digest"].as_str().unwrap().len(), 64);
}

#[test]
fn tails_example_matches_library() {
    let (code, out, _) = crgen(&["tails", "--grid-t", "0:5:0.1", "--rho", "0.5", "--phi", "0.7"]);
    assert_eq!(code, 0);
    let mut rd = csv::Reader::from_reader(out.as_bytes());
    assert_eq!(rd.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "q", "lambda", "l", "digest"]);
    let rows: Vec<csv::StringRecord> = rd.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 51);
    for row in rows {
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        let t = f(0);
        assert_eq!(f(1), q_tail(t).unwrap());
        assert_eq!(f(2), mills_ratio(t).unwrap());
        assert_eq!(f(3), orthant_probability(t, 0.7, 0.5).unwrap());
    }
}

#[test]
fn bounds_example_prints_single_value() {
    let (code, out, _) = crgen(&["bounds", "--nu", "--eps", "0.25", "--eps-prime", "0.01", "--alpha", "1", "--k", "100"]);
    assert_eq!(code, 0);
    let want = nu_correlated(&CrBoundQuery::new(0.25, 0.01, 1.0, 100).unwrap()).unwrap();
    assert_eq!(out.trim().parse::<f64>().unwrap(), want);
}

#[test]
fn bounds_grid_marks_out_of_regime_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nu.csv");
    let code = run(argv(&["bounds", "--nu", "--eps", "0.01,0.25", "--eps-prime", "0.05", "--alpha", "1", "--k", "100", "--output", path.to_str().unwrap()]));
    assert_eq!(code, 0);
    let rows = read_csv(&path);
    assert_eq!(rows.len(), 2);
    assert_eq!(&rows[0][6], "out-of-regime");
    assert_eq!(&rows[1][6], "ok");
}

#[test]
fn exit_codes() {
    assert_eq!(run(argv(&["simulate", "--no-such-flag"])), EXIT_CONFIG);
    assert_eq!(run(argv(&[])), EXIT_CONFIG);
    assert_eq!(run(argv(&["explode"])), EXIT_CONFIG);
    assert_eq!(run(argv(&["simulate", "--k", "6", "--rho", "1.5"])), EXIT_CONFIG);
    assert_eq!(run(argv(&["simulate", "--k", "6", "--source", "dsbs"])), EXIT_CONFIG);
    assert_eq!(run(argv(&["tails"])), EXIT_CONFIG);
    assert_eq!(run(argv(&["simulate", "--config", "/nonexistent/crgen.cfg"])), EXIT_CONFIG);
    assert_eq!(run(argv(&["bounds", "--nu", "--eps", "0.01", "--eps-prime", "0.3", "--alpha", "0.1", "--k", "100"])), EXIT_REFUSED);
    assert_eq!(run(argv(&["simulate", "--k", "14", "--zero-comm", "--trials", "50"])), EXIT_REFUSED);
    assert_eq!(run(argv(&["sweep", "--ks", "4:7", "--trials", "40", "--allow-rare"])), EXIT_OK);
    let (code, out, _) = crgen(&["--help"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.contains("simulate"));
}

#[test]
fn max_k_guard_can_be_lifted() {
    let (code, _, err) = crgen(&["simulate", "--k", "23", "--trials", "1"]);
    assert_eq!(code, EXIT_REFUSED, "{err}");
    assert!(err.contains("CRGEN_MAX_K"));
    let out = Command::new(env!("CARGO_BIN_EXE_crgen")).args(["simulate", "--k", "23", "--trials", "2", "--allow-rare"]).env("CRGEN_MAX_K", "23").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_OK));
}

#[test]
fn config_file_reproduces_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    std::fs::write(&cfg, "# grid\ncommand=sweep\nfamilies=basis,tao\nks=4:6\nrhos=0.5,0.7\ntrials=3000\nseed=11\nallow-rare=true\n").unwrap();
    let outputs: Vec<_> = [("a.csv", "1"), ("b.csv", "3"), ("c.csv", "1")]
        .iter()
        .map(|(name, w)| {
            let path = dir.path().join(name);
            let code = run(argv(&["--config", cfg.to_str().unwrap(), "--workers", w, "--output", path.to_str().unwrap()]));
            assert_eq!(code, 0);
            path
        })
        .collect();
    let a = without_wallclock(&outputs[0]);
    assert_eq!(a, without_wallclock(&outputs[1]));
    assert_eq!(a, without_wallclock(&outputs[2]));
    let rows = read_csv(&outputs[0]);
    assert_eq!(rows.len(), 2 * 3 * 2);
    let digests: std::collections::HashSet<&str> = rows.iter().map(|r| r.get(r.len() - 1).unwrap()).collect();
    assert_eq!(digests.len(), 1);
    let manifest = std::fs::read_to_string(dir.path().join("a.csv.cfg")).unwrap();
    assert!(manifest.contains(digests.iter().next().unwrap()));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tails.cfg");
    std::fs::write(&cfg, "command=tails\nrho=0.3\nphi=0.9\ngrid-t=1,2\n").unwrap();
    let base = ExperimentConfig::from_argv(&argv(&["--config", cfg.to_str().unwrap()])).unwrap();
    assert_eq!((base.rho, base.phi), (0.3, Some(0.9)));
    let over = ExperimentConfig::from_argv(&argv(&["--config", cfg.to_str().unwrap(), "--rho", "0.6", "bounds"])).unwrap();
    assert_eq!(over.rho, 0.6);
    assert_eq!(over.command, Some(crgen_cli::config::Command::Bounds));
    assert_ne!(base.digest(), over.digest());
}

#[test]
fn manifest_reloads_to_same_experiment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim.json");
    let args = ["simulate", "--k", "6", "--codebook", "tao", "--p", "11", "--delta", "0.2", "--trials", "2000", "--seed", "5", "--output", out.to_str().unwrap()];
    assert_eq!(run(argv(&args)), 0);
    let first = std::fs::read_to_string(&out).unwrap();
    let manifest = dir.path().join("sim.json.cfg");
    let reloaded = ExperimentConfig::from_kv(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(reloaded, ExperimentConfig::from_argv(&argv(&args)).unwrap());
    assert_eq!(run(argv(&["--config", manifest.to_str().unwrap()])), 0);
    let strip = |s: &str| {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v["report"]["wallclock_secs"] = 0.into();
        v
    };
    assert_eq!(strip(&first), strip(&std::fs::read_to_string(&out).unwrap()));
}

#[test]
fn trace_has_one_line_per_trial() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = dir.path().join("sim.json");
    let code = run(argv(&["simulate", "--k", "5", "--trials", "700", "--trace", trace.to_str().unwrap(), "--output", out.to_str().unwrap()]));
    assert_eq!(code, 0);
    let lines: Vec<serde_json::Value> = std::fs::read_to_string(&trace).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 700);
    let agreed = lines.iter().filter(|l| l["agreed"] == true).count() as u64;
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["report"]["successes"].as_u64().unwrap(), agreed);
}

#[test]
fn sketch_reads_vectors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("uv.txt");
    std::fs::write(&path, "1 0 0 0\n0.8 0.6 0 0\n").unwrap();
    let (code, out, _) = crgen(&["sketch", "--vectors", path.to_str().unwrap(), "--r", "0.5", "--s", "-0.5", "--rho", "1", "--seed", "3"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["decision"], "yes");
    assert_eq!(v["bits_communicated"].as_u64().unwrap(), 2 * v["t"].as_u64().unwrap());
    std::fs::write(&path, "1 0\n").unwrap();
    assert_eq!(crgen(&["sketch", "--vectors", path.to_str().unwrap()]).0, EXIT_CONFIG);
}

#[test]
fn sketch_generated_instances() {
    let (code, out, _) = crgen(&["sketch", "--inner", "0.7,-0.7", "--r", "0.5", "--s", "-0.5", "--rho", "1", "--instances", "40", "--dim", "16"]);
    assert_eq!(code, 0);
    let rows: Vec<serde_json::Value> = out.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["expected"], "yes");
    assert_eq!(rows[1]["expected"], "no");
    for r in rows {
        assert!(r["correct_fraction"].as_f64().unwrap() >= 0.9, "{r}");
    }
}

#[test]
fn lsh_outputs() {
    let (code, out, _) = crgen(&["lsh", "--grid-rho", "0.1:0.9:0.2"]);
    assert_eq!(code, 0);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_reader(out.as_bytes()).records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        let ratio: f64 = r[3].parse().unwrap();
        assert!(ratio > 1.0 && ratio < 1.0 / std::f64::consts::LN_2);
    }
    let (code, out, _) = crgen(&["lsh", "--p1", "0.5", "--p2", "0.25"]);
    assert_eq!(code, 0);
    assert!(out.contains("0.5,0.25,0.5,"));
    assert_eq!(crgen(&["lsh", "--p1", "0.2", "--p2", "0.5"]).0, EXIT_CONFIG);
}

#[test]
fn dual_bch_field_choice() {
    assert_eq!(crgen_cli::commands::dual_bch_degree_for(8, 2, 4.0).unwrap(), 10);
    for k in 1..=12 {
        let m = crgen_cli::commands::dual_bch_degree_for(k, 2, 4.0).unwrap();
        assert!(crgen_core::codebooks::dual_bch_codebook(m, 2, 4.0).unwrap().key_bits() >= k);
    }
}

fn family() -> impl Strategy<Value = FamilyArg> {
    prop_oneof![Just(FamilyArg::Basis), Just(FamilyArg::Tao), Just(FamilyArg::DualBch)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn config_round_trips(
        rho in -1.0f64..1.0,
        delta in 0.0f64..1.0,
        zero_comm in any::<bool>(),
        codebook in family(),
        k in proptest::option::of(1u32..30),
        trials in any::<u64>(),
        seed in any::<u64>(),
        ks in proptest::option::of(proptest::collection::vec(0u32..40, 1..5)),
        rhos in proptest::option::of(proptest::collection::vec(-1.0f64..1.0, 1..5)),
        families in proptest::option::of(proptest::collection::vec(family(), 1..4)),
        eps in proptest::option::of(proptest::collection::vec(0.0f64..0.5, 1..4)),
        p1 in proptest::option::of(0.0f64..1.0),
        s in -1.0f64..1.0,
    ) {
        let mut cfg = ExperimentConfig::from_kv("").unwrap();
        cfg.rho = rho;
        cfg.delta = delta;
        cfg.zero_comm = zero_comm;
        cfg.codebook = codebook;
        cfg.k = k;
        cfg.trials = trials;
        cfg.seed = seed;
        cfg.ks = ks.map(List);
        cfg.rhos = rhos.map(List);
        cfg.families = families.map(List);
        cfg.eps = eps.map(List);
        cfg.p1 = p1;
        cfg.s = s;
        let text = cfg.to_kv();
        let back = ExperimentConfig::from_kv(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.digest(), cfg.digest());
    }
}
