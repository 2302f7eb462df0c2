//! End-to-end checks of the `genrt` binary: every subcommand, the CSV and
//! manifest round trips, and the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_genrt"))
}

fn tiny_config(dir: &Path) -> std::path::PathBuf {
    let cfg = serde_json::json!({
        "dataset": {
            "domains": [
                {"name": "a", "generator": "two_moons", "rotation": 0.0,
                 "noise_sigma": 0.1, "n_train": 48, "n_test": 24},
                {"name": "b", "generator": "two_moons", "rotation": 30.0,
                 "noise_sigma": 0.1, "n_train": 48, "n_test": 24}
            ],
            "target": "b"
        },
        "hidden": [8],
        "feature_dim": 4,
        "flow_blocks": 2,
        "flow_hidden": 8,
        "epochs": 4,
        "warmup_epochs": 2,
        "batch_size": 16,
        "seeds": [0]
    });
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    path
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn cli_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());

    // synth twice: artifacts exist and are byte-identical
    let synth1 = tmp.path().join("synth1");
    let synth2 = tmp.path().join("synth2");
    for out in [&synth1, &synth2] {
        ok(&bin().args(["synth", "--config"]).arg(&cfg).arg("--out").arg(out).output().unwrap());
    }
    let csv1 = std::fs::read(synth1.join("datasets.csv")).unwrap();
    assert_eq!(csv1, std::fs::read(synth2.join("datasets.csv")).unwrap());
    assert!(synth1.join("data_manifest.json").exists());

    // train from config
    let run = tmp.path().join("run");
    ok(&bin().args(["train", "--config"]).arg(&cfg).arg("--out").arg(&run).output().unwrap());
    let seed0 = run.join("seed_0");
    for f in ["metrics.csv", "net.bin", "flow_c0.bin", "flow_c1.bin", "manifest.json", "summary.json"] {
        assert!(seed0.join(f).exists(), "missing {f}");
    }

    // train from the recorded manifest: metrics reproduce byte for byte
    let replay = tmp.path().join("replay");
    ok(&bin()
        .args(["train", "--manifest"])
        .arg(seed0.join("manifest.json"))
        .arg("--out")
        .arg(&replay)
        .output()
        .unwrap());
    assert_eq!(
        std::fs::read(seed0.join("metrics.csv")).unwrap(),
        std::fs::read(replay.join("metrics.csv")).unwrap()
    );

    // eval on the run's own target split and on an explicit CSV
    let out = bin().args(["eval", "--run"]).arg(&seed0).output().unwrap();
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("accuracy"));
    let out = bin()
        .args(["eval", "--run"])
        .arg(&seed0)
        .arg("--data")
        .arg(synth1.join("datasets.csv"))
        .output()
        .unwrap();
    ok(&out);

    // plot and report
    ok(&bin().args(["plot", "--run"]).arg(&seed0).output().unwrap());
    let svg = std::fs::read_to_string(seed0.join("features.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let out = bin().args(["report", "--run"]).arg(&seed0).output().unwrap();
    ok(&out);
}

#[test]
fn cli_ablate_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tiny_config(tmp.path());
    let matrix = tmp.path().join("matrix.json");
    std::fs::write(
        &matrix,
        serde_json::to_vec(&serde_json::json!([
            {"name": "plain", "overrides": {"mix_mode": "none", "lambda": 0}},
            {"name": "full", "overrides": {}}
        ]))
        .unwrap(),
    )
    .unwrap();
    let out_dir = tmp.path().join("ablate");
    ok(&bin()
        .args(["ablate", "--config"])
        .arg(&cfg)
        .arg("--matrix")
        .arg(&matrix)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap());
    let table = std::fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    assert!(table.starts_with("variant,seed,"));
    assert_eq!(table.lines().count(), 3, "header plus one row per variant-seed");
    assert!(out_dir.join("ablation.json").exists());

    let sweep_dir = tmp.path().join("sweep");
    ok(&bin()
        .args(["sweep", "--config"])
        .arg(&cfg)
        .args(["--values", "0,0.5"])
        .arg("--out")
        .arg(&sweep_dir)
        .output()
        .unwrap());
    for f in ["sweep.csv", "sweep.json", "sweep.svg"] {
        assert!(sweep_dir.join(f).exists(), "missing {f}");
    }
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();

    // invalid hyperparameter → configuration error, exit 2
    let bad = tmp.path().join("bad.json");
    std::fs::write(
        &bad,
        serde_json::to_vec(&serde_json::json!({
            "dataset": {
                "domains": [
                    {"name": "a", "generator": "two_moons", "rotation": 0.0,
                     "n_train": 16, "n_test": 8},
                    {"name": "b", "generator": "two_moons", "rotation": 30.0,
                     "n_train": 16, "n_test": 8}
                ],
                "target": "b"
            },
            "tau": 1.5
        }))
        .unwrap(),
    )
    .unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&bad)
        .arg("--out")
        .arg(tmp.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // unknown config key → exit 2 before any run starts
    let unknown = tmp.path().join("unknown.json");
    std::fs::write(&unknown, br#"{"not_a_field": 1}"#).unwrap();
    let out = bin()
        .args(["train", "--config"])
        .arg(&unknown)
        .arg("--out")
        .arg(tmp.path().join("y"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // missing run directory → I/O problem, non-zero exit
    let out = bin()
        .args(["eval", "--run"])
        .arg(tmp.path().join("nope"))
        .output()
        .unwrap();
    assert_ne!(out.status.code(), Some(0));
}
