//! Black-box checks of the command-line interface: exit codes, artifact
//! determinism, the full pipeline, and a serve/agent loopback session.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::Instant;

fn mpkit() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mpkit"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().unwrap();
    assert!(
        output.status.success(),
        "command {:?} failed:\n{}",
        cmd,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Kills the child process if a panic unwinds past the test body.
struct KillOnDrop(Child);

impl Drop for KillOnDrop {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

#[test]
fn help_exits_zero_and_documents_the_surface() {
    let output = run_ok(mpkit().arg("--help"));
    let text = String::from_utf8(output.stdout).unwrap();
    for subcommand in
        ["synth", "train", "select", "obfuscate", "attack", "evaluate", "sweep", "serve", "agent", "drop-stats"]
    {
        assert!(text.contains(subcommand), "--help does not mention {subcommand}");
    }
    let synth_help = run_ok(mpkit().args(["synth", "--help"]));
    let text = String::from_utf8(synth_help.stdout).unwrap();
    for flag in ["--users", "--items", "--seed", "--out-ratings", "--out-labels", "--paired"] {
        assert!(text.contains(flag), "synth --help does not mention {flag}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let unknown = mpkit().args(["synth", "--bogus"]).output().unwrap();
    assert_eq!(unknown.status.code(), Some(1), "unknown flag should exit 1");
    let no_subcommand = mpkit().output().unwrap();
    assert_eq!(no_subcommand.status.code(), Some(1), "missing subcommand should exit 1");
}

#[test]
fn missing_input_file_exits_two_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no_such_ratings.csv");
    let output = mpkit()
        .args(["train", "--ratings"])
        .arg(&missing)
        .args(["--labels"])
        .arg(dir.path().join("no_such_labels.csv"))
        .args(["--out"])
        .arg(dir.path().join("model.json"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2), "data error should exit 2");
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(
        stderr.contains("no_such_ratings.csv"),
        "error message does not name the missing path: {stderr}"
    );
}

#[test]
fn synth_is_byte_identical_across_runs_of_the_same_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |n: usize| {
        let ratings = dir.path().join(format!("r{n}.csv"));
        let labels = dir.path().join(format!("l{n}.csv"));
        (ratings, labels)
    };
    for n in [1, 2] {
        let (ratings, labels) = args(n);
        run_ok(
            mpkit()
                .args(["synth", "--users", "60", "--items", "10", "--dim", "3", "--seed", "7"])
                .arg("--out-ratings")
                .arg(&ratings)
                .arg("--out-labels")
                .arg(&labels),
        );
    }
    let (r1, l1) = args(1);
    let (r2, l2) = args(2);
    assert_eq!(std::fs::read(&r1).unwrap(), std::fs::read(&r2).unwrap());
    assert_eq!(std::fs::read(&l1).unwrap(), std::fs::read(&l2).unwrap());

    let (r3, l3) = args(3);
    run_ok(
        mpkit()
            .args(["synth", "--users", "60", "--items", "10", "--dim", "3", "--seed", "8"])
            .arg("--out-ratings")
            .arg(&r3)
            .arg("--out-labels")
            .arg(&l3),
    );
    assert_ne!(
        std::fs::read(&r1).unwrap(),
        std::fs::read(&r3).unwrap(),
        "a different seed should change the ratings"
    );
}

#[test]
fn pipeline_runs_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let labels = dir.path().join("labels.csv");
    let model = dir.path().join("model.json");
    let feedback = dir.path().join("feedback.ndjson");
    let scores = dir.path().join("scores.csv");

    run_ok(
        mpkit()
            .args(["synth", "--config"])
            .arg(fixtures().join("synth_config.json"))
            .args(["--seed", "7"])
            .arg("--out-ratings")
            .arg(&ratings)
            .arg("--out-labels")
            .arg(&labels),
    );

    let train = run_ok(
        mpkit()
            .args(["train", "--ratings"])
            .arg(&ratings)
            .arg("--labels")
            .arg(&labels)
            .args(["--dim", "3", "--epochs", "8", "--seed", "1", "--out"])
            .arg(&model),
    );
    assert!(String::from_utf8(train.stdout).unwrap().contains("trained"));

    let select = run_ok(mpkit().args(["select", "--model"]).arg(&model).args(["--budget", "3"]));
    let selection: serde_json::Value =
        serde_json::from_slice(&select.stdout).expect("select emits JSON on stdout");
    assert_eq!(selection["selected"].as_array().unwrap().len(), 3);
    assert!(selection["objective"].as_f64().unwrap().is_finite());
    assert!(!selection["seed_set"].as_array().unwrap().is_empty());

    run_ok(
        mpkit()
            .args(["obfuscate", "--ratings"])
            .arg(&ratings)
            .arg("--labels")
            .arg(&labels)
            .arg("--model")
            .arg(&model)
            .args(["--scheme", "MPSS", "--seed", "3", "--out"])
            .arg(&feedback),
    );
    let feedback_text = std::fs::read_to_string(&feedback).unwrap();
    let mut n_lines = 0usize;
    for line in feedback_text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        let mut keys: Vec<&str> =
            value.as_object().unwrap().keys().map(|s| s.as_str()).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["revealed", "user_id", "values"], "feedback lines must be label-free");
        n_lines += 1;
    }
    assert_eq!(n_lines, 240, "one feedback line per labeled user");

    let attack = run_ok(
        mpkit()
            .args(["attack", "--ratings"])
            .arg(&ratings)
            .arg("--labels")
            .arg(&labels)
            .arg("--model")
            .arg(&model)
            .arg("--feedback")
            .arg(&feedback)
            .args(["--attacker", "LSE", "--test-labels"])
            .arg(&labels)
            .arg("--out")
            .arg(&scores),
    );
    let stdout = String::from_utf8(attack.stdout).unwrap();
    let auc: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("auc: "))
        .expect("attack with --test-labels prints the AUC")
        .trim()
        .parse()
        .unwrap();
    assert!((0.0..=1.0).contains(&auc), "AUC {auc} outside [0, 1]");
    let scores_text = std::fs::read_to_string(&scores).unwrap();
    assert!(scores_text.starts_with("user_id,score,label"));

    let drop_stats = run_ok(
        mpkit()
            .args(["drop-stats", "--ratings"])
            .arg(&ratings)
            .arg("--labels")
            .arg(&labels)
            .arg("--model")
            .arg(&model)
            .args(["--seed", "4"]),
    );
    let stats: serde_json::Value = serde_json::from_slice(&drop_stats.stdout).unwrap();
    assert!(stats["n_users"].as_u64().unwrap() > 0);
    let mean = stats["mean"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mean));
    assert!(!stats["quantiles"].as_array().unwrap().is_empty());
}

#[test]
fn evaluate_finishes_on_the_bundled_fixture_within_a_minute() {
    let dir = tempfile::tempdir().unwrap();
    let out_json = dir.path().join("report.json");
    let out_csv = dir.path().join("report.csv");
    let start = Instant::now();
    run_ok(
        mpkit()
            .args(["evaluate", "--ratings"])
            .arg(fixtures().join("ratings.csv"))
            .arg("--labels")
            .arg(fixtures().join("labels.csv"))
            .arg("--config")
            .arg(fixtures().join("eval_config.json"))
            .arg("--out-json")
            .arg(&out_json)
            .arg("--out-csv")
            .arg(&out_csv),
    );
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "evaluate took {elapsed:.1}s on the bundled fixture");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_json).unwrap()).unwrap();
    let schemes = report["schemes"].as_array().unwrap();
    assert_eq!(schemes.len(), 3);
    let csv_text = std::fs::read_to_string(&out_csv).unwrap();
    assert!(csv_text.starts_with("fold,scheme,attacker,auc,rmse"));
    // 3 folds x 3 schemes x 1 attacker plus the header.
    assert_eq!(csv_text.lines().count(), 1 + 9);
}

#[test]
fn sweep_writes_one_curve_point_per_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let out_csv = dir.path().join("curve.csv");
    run_ok(
        mpkit()
            .args(["sweep", "--ratings"])
            .arg(fixtures().join("ratings.csv"))
            .arg("--labels")
            .arg(fixtures().join("labels.csv"))
            .arg("--config")
            .arg(fixtures().join("eval_config.json"))
            .args(["--scheme", "MP", "--alphas", "0,0.5,1", "--master-seed", "11"])
            .arg("--out-csv")
            .arg(&out_csv),
    );
    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,auc_lse,rmse"));
    let points: Vec<&str> = lines.collect();
    assert_eq!(points.len(), 3, "one row per alpha");
    for row in points {
        let fields: Vec<f64> = row.split(',').map(|f| f.parse().unwrap()).collect();
        assert_eq!(fields.len(), 3);
        assert!(fields.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn serve_and_agent_complete_a_loopback_session() {
    let dir = tempfile::tempdir().unwrap();
    let ratings = dir.path().join("ratings.csv");
    let labels = dir.path().join("labels.csv");
    let model = dir.path().join("model.json");
    run_ok(
        mpkit()
            .args(["synth", "--users", "40", "--items", "8", "--dim", "2", "--sigma", "0.3"])
            .args(["--seed", "5"])
            .arg("--out-ratings")
            .arg(&ratings)
            .arg("--out-labels")
            .arg(&labels),
    );
    run_ok(
        mpkit()
            .args(["train", "--ratings"])
            .arg(&ratings)
            .arg("--labels")
            .arg(&labels)
            .args(["--dim", "2", "--epochs", "5", "--seed", "2", "--out"])
            .arg(&model),
    );

    let child = mpkit()
        .args(["serve", "--model"])
        .arg(&model)
        .args(["--listen", "127.0.0.1:0", "--max-sessions", "1"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut serve = KillOnDrop(child);
    let mut first_line = String::new();
    BufReader::new(serve.0.stdout.as_mut().unwrap()).read_line(&mut first_line).unwrap();
    let addr = first_line
        .trim()
        .strip_prefix("listening on ")
        .expect("serve announces its bound address")
        .to_string();

    let agent = run_ok(
        mpkit()
            .args(["agent", "--ratings"])
            .arg(&ratings)
            .args(["--user", "1", "--label", "+1", "--connect", &addr, "--seed", "5"]),
    );
    let reply: serde_json::Value = serde_json::from_slice(&agent.stdout).unwrap();
    assert_eq!(reply["user_id"].as_u64(), Some(1));
    let x_hat = reply["x_hat"].as_array().unwrap();
    assert_eq!(x_hat.len(), 2, "estimate has the model's latent dimension");
    assert!(x_hat.iter().all(|v| v.as_f64().unwrap().is_finite()));

    let status = serve.0.wait().unwrap();
    assert!(status.success(), "serve should exit cleanly after --max-sessions");
}
