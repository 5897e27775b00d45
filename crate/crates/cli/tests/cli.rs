use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"
seed = 5
[dataset]
system = "lorenz63"
steps = 120
n_traj = 2
[models]
labels = ["MLP", "ESN"]
seeds = 2
[models.base]
epochs = 2
latent_dim = 3
width = 8
input_len = 6
horizon = 6
reservoir_size = 16
[alignment]
n_samples = 80
n_anchors = 10
[ablation]
ks = [2, 4]
repeats = 3
random_k = 4
[perturbation]
noise = [0.0, 0.1]
input_lens = [4]
seeds = 1
[stitching]
labels = ["MLP"]
seeds = 2
anchors = 5
"#;

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latent-atlas"))
        .current_dir(dir)
        .env_remove("LATENT_ATLAS_OUT")
        .args(args)
        .output()
        .expect("binary runs")
}

fn setup(config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("exp.toml"), config).unwrap();
    dir
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, rel: &str) -> String {
    fs::read_to_string(dir.join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

#[test]
fn pipeline_is_byte_identical_across_runs_and_worker_counts() {
    let dir = setup(TINY);
    ok(cli(
        dir.path(),
        &[
            "--config",
            "exp.toml",
            "--out",
            "a",
            "--workers",
            "1",
            "all",
        ],
    ));
    ok(cli(
        dir.path(),
        &[
            "--config",
            "exp.toml",
            "--out",
            "b",
            "--workers",
            "3",
            "all",
        ],
    ));
    for rel in [
        "train/test_metrics.csv",
        "align/alignment.csv",
        "align/heatmap.json",
        "ablate/ablation.csv",
        "perturb/runs.csv",
        "stitch/table.csv",
        "stitch/pairs.csv",
        "probe/probe.csv",
        "checkpoints/MLP_seed5.json",
    ] {
        assert_eq!(
            read(&dir.path().join("a"), rel),
            read(&dir.path().join("b"), rel),
            "{rel}"
        );
    }
    let report: serde_json::Value =
        serde_json::from_str(&read(&dir.path().join("a"), "report.json")).unwrap();
    assert_eq!(report["manifests"].as_object().unwrap().len(), 7);
}

#[test]
fn alignment_table_is_symmetric_with_unit_self_pairs() {
    let dir = setup(TINY);
    ok(cli(
        dir.path(),
        &["--config", "exp.toml", "--out", "o", "align"],
    ));
    let csv = read(dir.path(), "o/align/alignment.csv");
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(
        &header[..5],
        ["model_a", "model_b", "family_a", "family_b", "cosine"]
    );
    assert_eq!(&header[header.len() - 2..], ["config_hash", "run_seed"]);
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 25);
    let cos = |a: &str, b: &str| -> f64 {
        rows.iter().find(|r| r[0] == a && r[1] == b).unwrap()[4]
            .parse()
            .unwrap()
    };
    for a in ["True System", "MLP#5", "MLP#6", "ESN#5", "ESN#6"] {
        assert_eq!(cos(a, a), 1.0);
        for b in ["True System", "MLP#5", "ESN#6"] {
            assert_eq!(cos(a, b), cos(b, a));
        }
    }
    let c = cos("MLP#5", "MLP#6");
    assert!(c > 0.0 && c <= 1.0, "{c}");

    let heat: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "o/align/heatmap.json")).unwrap();
    assert_eq!(heat["instances"][0], "True System");
    let m = &heat["metrics"]["cosine"]["instances"];
    for i in 0..5 {
        assert_eq!(m[i][i], 1.0);
    }
    assert_eq!(
        heat["families"],
        serde_json::json!(["True System", "MLP", "ESN"])
    );
}

#[test]
fn unknown_config_key_exits_with_1() {
    let dir = setup("seed = 1\n[models]\nlabels = [\"MLP\"]\nsurprise = 3\n");
    let out = cli(
        dir.path(),
        &["--config", "exp.toml", "--out", "o", "generate"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("surprise"));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn invalid_inputs_exit_with_1() {
    let dir = setup("[models]\nlabels = [\"XYZ\"]\n");
    assert_eq!(
        cli(dir.path(), &["--config", "exp.toml", "train"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        cli(dir.path(), &["generate", "--system", "nonsense"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        cli(dir.path(), &["generate", "--system", "pod_wake"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(cli(dir.path(), &["no-such-command"]).status.code(), Some(1));
    assert_eq!(
        cli(dir.path(), &["report", "missing"]).status.code(),
        Some(1)
    );
}

#[test]
fn printed_config_round_trips() {
    let dir = setup(TINY);
    let out = ok(cli(
        dir.path(),
        &["--config", "exp.toml", "--seed", "9", "config"],
    ));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seed = 9"));
    fs::write(dir.path().join("again.toml"), &text).unwrap();
    let again = ok(cli(dir.path(), &["--config", "again.toml", "config"]));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);
}

#[test]
fn reruns_reuse_checkpoints_and_env_sets_the_output_root() {
    let dir = setup(TINY);
    let run = |args: &[&str]| {
        let out = Command::new(env!("CARGO_BIN_EXE_latent-atlas"))
            .current_dir(dir.path())
            .env("LATENT_ATLAS_OUT", "from-env")
            .args(args)
            .output()
            .unwrap();
        ok(out)
    };
    run(&[
        "--config", "exp.toml", "train", "--models", "MLP", "--seeds", "1",
    ]);
    let ck = dir.path().join("from-env/checkpoints/MLP_seed5.json");
    let first = fs::metadata(&ck).unwrap().modified().unwrap();
    run(&[
        "--config", "exp.toml", "train", "--models", "MLP", "--seeds", "1",
    ]);
    assert_eq!(fs::metadata(&ck).unwrap().modified().unwrap(), first);
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "from-env/manifests/train.json")).unwrap();
    let files: Vec<&str> = manifest["files"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["path"].as_str().unwrap())
        .collect();
    assert!(files.contains(&"checkpoints/MLP_seed5.json"));
    assert!(files.contains(&"train/test_metrics.csv"));

    run(&[
        "--config", "exp.toml", "train", "--models", "MLP", "--seeds", "1", "--epochs", "3",
    ]);
    assert_ne!(fs::metadata(&ck).unwrap().modified().unwrap(), first);
}
