use std::process::Command;

use essfm_cli::runner::{run_experiment, ExperimentResult};
use essfm_cli::spec::{parse_spec, ExperimentSpec, Scenario};
use essfm_core::train::coefficients_from_text;

const BIN: &str = env!("CARGO_BIN_EXE_essfm");

const B2B: &str = "back_to_back = true\nnum_symbols = 4096\nskip_symbols = 1000\ntrain_samples = 4096\n\
                   launch_powers_dbm = -1, 1\nnum_blocks = 2\n";

/// Two short spans: cheap enough for tests, nonlinear enough to train.
const SHORT_LINK: &str = "num_spans = 2\nnum_symbols = 4096\nskip_symbols = 1000\ntrain_samples = 2048\n\
                          n_coeffs = 4\nfft_size = 1024\noverlap = 128\nforward_steps_per_span = 10\n\
                          variants = ffe, ssfm:2, essfm:1\nlaunch_powers_dbm = 4\nnum_blocks = 2\n";

#[test]
fn back_to_back_sweep_is_error_free() {
    let spec = parse_spec(B2B).unwrap();
    let ExperimentResult::Ber(rows) = run_experiment(&spec, Some(1)).unwrap() else {
        panic!("BER rows expected");
    };
    assert_eq!(rows.len(), 2 * spec.variants.len() * 2);
    for r in &rows {
        let m = r.outcome.as_ref().unwrap();
        assert_eq!(m.ber, 0.0, "{r:?}");
        assert!(m.bits_counted > 10_000);
    }
}

#[test]
fn rows_follow_power_variant_seed_order() {
    let spec = parse_spec(B2B).unwrap();
    let ExperimentResult::Ber(rows) = run_experiment(&spec, Some(2)).unwrap() else {
        panic!("BER rows expected");
    };
    let keys: Vec<_> = rows.iter().map(|r| (r.power_dbm, r.variant, r.seed)).collect();
    let mut expected = Vec::new();
    for &p in &spec.launch_powers_dbm {
        for &v in &spec.variants {
            for &s in &spec.seeds {
                expected.push((p, v, s));
            }
        }
    }
    assert_eq!(keys, expected);
}

#[test]
fn csv_is_identical_across_pool_sizes() {
    let spec = parse_spec(SHORT_LINK).unwrap();
    let a = run_experiment(&spec, Some(1)).unwrap().to_csv();
    let b = run_experiment(&spec, Some(3)).unwrap().to_csv();
    assert_eq!(a, b);
    assert!(a.starts_with("# format_version=1\nscenario,algorithm,"));
    assert!(!a.contains("failed"), "{a}");
}

#[test]
fn training_scenario_reports_improvement() {
    let spec = ExperimentSpec {
        scenario: Scenario::TrainCoeffs,
        ..parse_spec(SHORT_LINK).unwrap()
    };
    let ExperimentResult::Train(rows) = run_experiment(&spec, None).unwrap() else {
        panic!("training rows expected");
    };
    assert_eq!(rows.len(), 2);
    for r in rows {
        let t = r.outcome.unwrap();
        assert_eq!(t.coeffs.nc(), 4);
        assert!(t.final_mse <= t.initial_mse);
    }
}

#[test]
fn binary_writes_csv_and_reports_success() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("b2b.spec");
    let out = dir.path().join("b2b.csv");
    std::fs::write(&spec, B2B).unwrap();
    let run = Command::new(BIN)
        .args(["sweep", "--jobs", "1", "--seed", "7", "--spec"])
        .arg(&spec)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let seeds: Vec<&str> = csv
        .lines()
        .skip(2)
        .map(|l| l.split(',').nth(10).unwrap())
        .collect();
    assert!(seeds.iter().all(|s| *s == "7" || *s == "8"), "{seeds:?}");
}

#[test]
fn binary_exit_code_flags_failed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("b2b.spec");
    std::fs::write(&spec, B2B).unwrap();
    // Aliased 4th-power estimate: the receiver never locks.
    let output = Command::new(BIN)
        .args(["sweep", "--spec"])
        .arg(&spec)
        .env("ESSFM_FREQUENCY_OFFSET_HZ", "5e9")
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(
        stdout.lines().skip(2).all(|l| l.contains(",failed: ")),
        "{stdout}"
    );
    assert!(String::from_utf8(output.stderr)
        .unwrap()
        .contains("row(s) failed"));
}

#[test]
fn binary_rejects_bad_spec_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.spec");
    std::fs::write(&spec, "num_spans = 2\nnum_span = 3\n").unwrap();
    let output = Command::new(BIN)
        .args(["run", "--spec"])
        .arg(&spec)
        .output()
        .unwrap();
    assert!(!output.status.success());
    let err = String::from_utf8(output.stderr).unwrap();
    assert!(err.contains("line 2") && err.contains("num_span"), "{err}");
}

#[test]
fn trained_coefficients_feed_a_later_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let spec_path = dir.path().join("link.spec");
    let coeffs = dir.path().join("c.txt");
    std::fs::write(&spec_path, SHORT_LINK).unwrap();
    let run = Command::new(BIN)
        .args(["train", "--jobs", "1", "--spec"])
        .arg(&spec_path)
        .arg("--out")
        .arg(dir.path().join("train.csv"))
        .arg("--coeffs-out")
        .arg(&coeffs)
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let c = coefficients_from_text(&std::fs::read_to_string(&coeffs).unwrap()).unwrap();
    assert_eq!(c.nc(), 4);

    let spec = ExperimentSpec {
        coeffs_file: Some(coeffs),
        ..parse_spec(SHORT_LINK).unwrap()
    };
    let ExperimentResult::Ber(rows) = run_experiment(&spec, Some(1)).unwrap() else {
        panic!("BER rows expected");
    };
    assert!(rows.iter().all(|r| r.outcome.is_ok()));
}

#[test]
fn cost_subcommand_defaults_to_inset_table() {
    let output = Command::new(BIN).arg("cost").output().unwrap();
    assert!(output.status.success());
    let csv = String::from_utf8(output.stdout).unwrap();
    let labels: Vec<(&str, &str)> = csv
        .lines()
        .skip(2)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0], f[4])
        })
        .collect();
    assert_eq!(
        labels,
        [("FFE", "1"), ("ESSFM", "1"), ("SSFM", "16"), ("SSFM", "20")]
    );
}
