use std::path::Path;
use std::process::Command;

use pdgmm::metrics::CSV_HEADER;
use pdgmm::pipeline::Preset;
use pdgmm::Exec;
use pdgmm_cli::commands::{evaluate, generate, run_all, train};
use pdgmm_cli::grid::SUMMARY_HEADER;
use pdgmm_cli::{grid, Axis, CliError, ExperimentConfig};

fn small(preset: Preset) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(preset);
    c.samples = 1500;
    c.eval_samples = 800;
    c.stage1.hidden = vec![4, 4];
    c.stage1.batch_size = 128;
    c.stage1.iterations = 25;
    c.stage1.log_every = 7;
    c.stage2.batch_size = 128;
    c.stage2.iterations = 40;
    c.stage2.log_every = 9;
    c
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn pdgmm_bin(args: &[&str], out: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pdgmm")).args(args).arg("--out").arg(out).output().unwrap()
}

#[test]
fn generation_is_byte_reproducible() {
    let cfg = small(Preset::Desk);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let la = generate(&cfg, a.path(), Exec::Parallel).unwrap();
    let lb = generate(&cfg, b.path(), Exec::Sequential).unwrap();
    for f in ["dataset.bin", "truth.json", "manifest.json"] {
        assert_eq!(read(&la.data.join(f)), read(&lb.data.join(f)), "{f}");
    }
}

#[test]
fn manifest_counts_edges_of_the_default_graph() {
    let cfg = small(Preset::Paper);
    assert_eq!((cfg.n, cfg.k), (10, 1));
    let dir = tempfile::tempdir().unwrap();
    let layout = generate(&cfg, dir.path(), Exec::Parallel).unwrap();
    let m: serde_json::Value = serde_json::from_slice(&read(&layout.manifest())).unwrap();
    assert_eq!(m["edges"], 10);
    assert_eq!(m["components"], 50);
    assert_eq!(m["config-hash"], cfg.data_hash().as_str());
}

#[test]
fn oracle_encoder_scores_perfectly() {
    let cfg = small(Preset::Desk);
    let dir = tempfile::tempdir().unwrap();
    let r = evaluate(&cfg, dir.path(), true, Exec::Parallel).unwrap();
    assert!((r.mcc_stage2.unwrap() - 1.0).abs() < 1e-6);
    assert!((r.mcc_stage1 - 1.0).abs() < 1e-6);
    assert!((r.r2_stage1 - 1.0).abs() < 1e-6);
}

#[test]
fn exit_codes_from_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let out = pdgmm_bin(&["evaluate", "--preset", "desk", "--samples", "500", "--eval-samples", "300"], dir.path());
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let out = pdgmm_bin(&["generate", "--n", "1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = pdgmm_bin(&["train", "--stage", "1", "--preset", "desk"], dir.path());
    assert_eq!(out.status.code(), Some(4));
    let out = pdgmm_bin(&["evaluate", "--oracle", "--preset", "desk", "--samples", "500", "--eval-samples", "300"], dir.path());
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
}

#[test]
fn evaluate_refuses_a_checkpoint_from_another_configuration() {
    let a = small(Preset::Desk);
    let b = ExperimentConfig { stage1: pdgmm::pipeline::Stage1Config { iterations: 26, ..a.stage1.clone() }, ..a.clone() };
    assert_eq!(a.data_hash(), b.data_hash());
    let dir = tempfile::tempdir().unwrap();
    generate(&a, dir.path(), Exec::Parallel).unwrap();
    let ckpt = train(&a, dir.path(), 1).unwrap();
    let target = b.layout(dir.path()).checkpoint(1);
    std::fs::create_dir_all(target.parent().unwrap()).unwrap();
    std::fs::copy(ckpt, &target).unwrap();
    let err = evaluate(&b, dir.path(), false, Exec::Parallel).unwrap_err();
    assert!(matches!(err, CliError::HashMismatch { .. }), "{err}");
    assert_eq!(err.exit_code(), 4);
    assert!(matches!(train(&b, dir.path(), 2), Err(CliError::HashMismatch { .. })));
}

#[test]
fn single_cell_grid_equals_a_direct_run() {
    let cfg = small(Preset::Desk);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let direct = run_all(&cfg, a.path(), Exec::Parallel).unwrap();
    let g = grid(&cfg, Axis::Delta, &["0".into()], &[cfg.seed], 1, b.path()).unwrap();
    assert_eq!(g.failures(), 0);
    assert_eq!(g.runs[0].outcome.as_ref().unwrap(), &direct);
}

#[test]
fn grid_outputs_are_deterministic_and_schema_stable() {
    let cfg = small(Preset::Desk);
    let values = vec!["0".to_string(), "30".to_string()];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ga = grid(&cfg, Axis::Theta, &values, &[0, 1], 1, a.path()).unwrap();
    let gb = grid(&cfg, Axis::Theta, &values, &[0, 1], 2, b.path()).unwrap();
    for f in ["runs.csv", "summary.csv", "failures.csv"] {
        assert_eq!(read(&ga.dir.join(f)), read(&gb.dir.join(f)), "{f}");
    }
    let summary = String::from_utf8(read(&ga.dir.join("summary.csv"))).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines.len(), 3);
    let width = SUMMARY_HEADER.split(',').count();
    assert!(lines.iter().all(|l| l.split(',').count() == width));
    let runs = String::from_utf8(read(&ga.dir.join("runs.csv"))).unwrap();
    assert_eq!(runs.lines().next(), Some(CSV_HEADER));
    assert_eq!(runs.lines().count(), 5);

    let report = cfg.layout(a.path()).stage2.join("metrics.csv");
    let text = String::from_utf8(read(&report)).unwrap();
    assert_eq!(text.lines().next(), Some(CSV_HEADER));
    assert!(cfg.layout(a.path()).stage2.join("corr-stage2.csv").exists());
}

#[test]
fn training_logs_have_increasing_steps() {
    let cfg = small(Preset::Desk);
    let dir = tempfile::tempdir().unwrap();
    run_all(&cfg, dir.path(), Exec::Parallel).unwrap();
    for stage in [1, 2] {
        let text = String::from_utf8(read(&cfg.layout(dir.path()).log(stage))).unwrap();
        let steps: Vec<u64> = text
            .lines()
            .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["step"].as_u64().unwrap())
            .collect();
        assert!(steps.len() > 2);
        assert!(steps.windows(2).all(|w| w[0] < w[1]), "stage {stage}: {steps:?}");
    }
}

#[test]
fn divergence_saves_the_last_finite_state_and_the_grid_continues() {
    let mut cfg = small(Preset::Desk);
    cfg.stage1.lr = 1e300;
    let dir = tempfile::tempdir().unwrap();
    let err = run_all(&cfg, dir.path(), Exec::Parallel).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    let saved = cfg.layout(dir.path()).partial_checkpoint(1);
    assert!(saved.exists());
    let c = pdgmm::nn::Checkpoint::load(&saved).unwrap();
    assert_eq!(c.manifest.kind, "stage1-partial");

    let g = grid(&cfg, Axis::Delta, &["0".into(), "1".into()], &[0], 1, dir.path()).unwrap();
    assert_eq!(g.failures(), 2);
    let failures = String::from_utf8(read(&g.dir.join("failures.csv"))).unwrap();
    assert_eq!(failures.lines().count(), 3);
}
