//! End-to-end checks of the command-line interface: exit codes, artifact
//! layout, manifest re-runs, and the learning pipeline over real files.

use ptdlp::energy::RbmModel;
use ptdlp::harness::write_idx_images;
use std::path::Path;
use std::process::Command;

fn ptdlp_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ptdlp"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

const SMALL_MOG: &str = r#"
kind = "synthetic-mog"

[model]
components = 4
variance = 0.15

[sampler]
algorithm = "pt-dmala"
betas = [1.0, 0.5, 0.2]
alpha = 0.2

[run]
steps = 800
burn_in = 100
seeds = [0]

[metrics]
reference_samples = 1500
mmd_features = 256

[output]
directory = "out"
"#;

#[test]
fn run_writes_artifacts_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("mog.toml");
    write(&config, SMALL_MOG);
    let out_a = dir.path().join("a");
    let status = ptdlp_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_a)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for name in ["manifest.json", "metrics.csv", "trace_pt-dmala_seed0.csv"] {
        assert!(out_a.join(name).exists(), "{name} missing");
    }
    // header row of the trace matches the documented schema
    let trace = std::fs::read_to_string(out_a.join("trace_pt-dmala_seed0.csv")).unwrap();
    assert!(trace.starts_with("step,energy,state,swaps\n"));
    let metrics = std::fs::read_to_string(out_a.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("metric,value,n_samples,seed,params\n"));

    // manifest re-run into a fresh directory is byte-identical
    let out_b = dir.path().join("b");
    let status = ptdlp_bin()
        .args(["run", "--manifest"])
        .arg(out_a.join("manifest.json"))
        .arg("--out")
        .arg(&out_b)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for entry in std::fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        assert_eq!(
            std::fs::read(out_a.join(&name)).unwrap(),
            std::fs::read(out_b.join(&name)).unwrap(),
            "{name:?} differs"
        );
    }

    // report summarizes the artifacts and verifies the config hash
    let output = ptdlp_bin()
        .args(["report", "--out"])
        .arg(&out_a)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert!(stdout.contains("verified"));
    assert!(stdout.contains("synthetic-mog"));
}

#[test]
fn validation_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    write(&config, &SMALL_MOG.replace("alpha = 0.2", "alpha = -1.0"));
    let output = ptdlp_bin()
        .args(["run", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8(output.stderr).unwrap();
    assert!(stderr.contains("alpha"), "{stderr}");

    // unknown key is also a validation failure
    let config2 = dir.path().join("bad2.toml");
    write(
        &config2,
        &SMALL_MOG.replace("burn_in = 100", "burn_in = 100\nbogus = 1"),
    );
    let output = ptdlp_bin()
        .args(["run", "--config"])
        .arg(&config2)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("missing_rbm.toml");
    write(
        &config,
        r#"
kind = "rbm-sample"

[model]
rbm_file = "does_not_exist.json"

[sampler]
algorithm = "pt-dmala"
betas = [1.0, 0.5]
alpha = 0.2

[run]
steps = 10
seeds = [0]

[output]
directory = "out"
"#,
    );
    let out = dir.path().join("out");
    let status = ptdlp_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(3));
}

#[test]
fn tune_subcommand_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("tune.toml");
    let mut text = SMALL_MOG.to_string();
    text.push_str(
        r#"
[tuning]
pilot_steps = 300
max_rounds = 3
initial_chains = 3
"#,
    );
    write(&config, &text);
    let out = dir.path().join("tuned");
    let status = ptdlp_bin()
        .args(["tune", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .arg("--seed")
        .arg("5")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(out.join("tuner_report.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert!(json["k_star"].as_u64().unwrap() >= 2);
    assert!(json["rounds"].as_array().unwrap().len() >= 1);
    assert_eq!(json["schedule"]["betas"][0].as_f64().unwrap(), 1.0);
}

#[test]
fn oracle_subcommand_reports_passing_checks() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("oracle.toml");
    write(
        &config,
        r#"
kind = "oracle-suite"

[model]
dim = 2
instances = 2

[sampler]
algorithm = "pt-dmala"
betas = [1.0, 0.5]
alpha = 0.5

[run]
steps = 10
seeds = [0]

[output]
directory = "out"
"#,
    );
    let out = dir.path().join("oracle");
    let status = ptdlp_bin()
        .args(["oracle", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report = std::fs::read_to_string(out.join("oracle_report.csv")).unwrap();
    assert!(report.starts_with("check,instance,model,k,value,threshold,pass\n"));
    assert!(report.lines().skip(1).all(|l| l.ends_with("true")));
    // detailed-balance rows are present and under threshold
    assert!(report.contains("detailed_balance"));
}

#[test]
fn rbm_sample_with_mode_initialization() {
    let dir = tempfile::tempdir().unwrap();
    // tiny RBM and a 2x2-image dataset whose best item seeds the chains
    let rbm = RbmModel::new(
        2,
        4,
        vec![0.8, 0.8, -0.8, -0.8, -0.8, -0.8, 0.8, 0.8],
        vec![-0.5, -0.5],
        vec![0.1, 0.1, -0.1, -0.1],
    )
    .unwrap();
    let rbm_path = dir.path().join("rbm.json");
    rbm.save(&rbm_path).unwrap();
    let idx_path = dir.path().join("init.idx");
    std::fs::write(
        &idx_path,
        write_idx_images(&[(2, 2, vec![255, 255, 0, 0]), (2, 2, vec![0, 0, 255, 255])]),
    )
    .unwrap();

    let config = dir.path().join("sample.toml");
    write(
        &config,
        &format!(
            r#"
kind = "rbm-sample"

[model]
rbm_file = "{}"
dataset = "{}"

[sampler]
algorithm = "pt-dmala"
betas = [1.0, 0.4]
alpha = 0.3

[run]
steps = 600
burn_in = 50
seeds = [2]

[metrics]
reference_samples = 1000
mmd_features = 256

[output]
directory = "out"
"#,
            rbm_path.display(),
            idx_path.display()
        ),
    );
    let out = dir.path().join("sampled");
    let status = ptdlp_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.contains("pt-dmala/mmd"));
    assert!(metrics.contains("dmala/mmd"), "baseline rows missing");
    // both traces exist and start from the mode-initialized state
    let trace = std::fs::read_to_string(out.join("trace_pt-dmala_seed2.csv")).unwrap();
    assert!(trace.starts_with("step,energy,state,swaps\n"));
}

#[test]
fn rbm_learn_pipeline_over_real_files() {
    let dir = tempfile::tempdir().unwrap();
    // a tiny 3x3 dataset: two prototype patterns repeated
    let on = 200u8;
    let images: Vec<(usize, usize, Vec<u8>)> = (0..40)
        .map(|i| {
            let mut pixels = vec![0u8; 9];
            if i % 2 == 0 {
                for p in 0..5 {
                    pixels[p] = on;
                }
            } else {
                for p in 4..9 {
                    pixels[p] = on;
                }
            }
            (3, 3, pixels)
        })
        .collect();
    let idx_path = dir.path().join("digits.idx");
    std::fs::write(&idx_path, write_idx_images(&images)).unwrap();

    let config = dir.path().join("learn.toml");
    write(
        &config,
        &format!(
            r#"
kind = "rbm-learn"

[model]
dataset = "{}"
n_hidden = 4

[sampler]
algorithm = "dmala"
alpha = 0.3

[run]
steps = 1
seeds = [11]

[learn]
epochs = 6
batch_size = 10
learning_rate = 0.02
pcd_chains = 8
pcd_steps = 3
eval_every = 2

[output]
directory = "out"
"#,
            idx_path.display()
        ),
    );
    let out = dir.path().join("learned");
    let status = ptdlp_bin()
        .args(["run", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));

    // checkpoint holds a loadable RBM of the right shape
    let checkpoint: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("checkpoint.json")).unwrap())
            .unwrap();
    let rbm: RbmModel = serde_json::from_value(checkpoint["rbm"].clone()).unwrap();
    assert_eq!(rbm.n_visible, 9);
    assert_eq!(rbm.n_hidden, 4);

    // the exact log-likelihood column improves from first to last evaluation
    let log = std::fs::read_to_string(out.join("training_log.csv")).unwrap();
    let values: Vec<f64> = log
        .lines()
        .skip(1)
        .filter(|l| l.contains("exact_log_likelihood"))
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert!(values.len() >= 3, "{log}");
    assert!(
        values.last().unwrap() > values.first().unwrap(),
        "{values:?}"
    );
}
