//! Acceptance criteria at the default configuration, one PASS/FAIL line per
//! criterion. Runs every suite, so this takes tens of minutes on one core.
//! `HOROLAB_ACCEPTANCE_CONFIG` points the statistical part at another config.

use std::fs;
use std::path::{Path, PathBuf};

use horo_cli::suites::Verdict;
use horo_cli::{run, Options, RunOutcome, Status, SUITES};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run_config(suites: &[&str], config: PathBuf, out: &Path) -> RunOutcome {
    let opts = Options { config, out: Some(out.to_path_buf()), threads: None, dry_run: false, seed_override: None };
    run(suites, &opts)
}

fn verdicts<'a>(outcome: &'a RunOutcome, prefix: &str) -> Vec<&'a Verdict> {
    outcome.reports.iter().flat_map(|r| &r.verdicts).filter(|v| v.experiment.starts_with(prefix)).collect()
}

struct Line {
    id: usize,
    title: &'static str,
    status: Status,
    detail: String,
}

fn criterion(id: usize, title: &'static str, vs: &[&Verdict], seconds: f64) -> Line {
    let status = if vs.is_empty() { Status::Error } else { vs.iter().map(|v| v.status).max().unwrap() };
    let mut detail: Vec<String> =
        vs.iter().map(|v| format!("{} {}={:.4} [{}]", v.status.label(), v.experiment, v.value, v.bound)).collect();
    detail.push(format!("{seconds:.0} s"));
    Line { id, title, status, detail: detail.join("; ") }
}

fn stage_seconds(outcome: &RunOutcome, name: &str) -> f64 {
    outcome.reports.iter().filter(|r| r.name == name).map(|r| r.seconds).sum()
}

fn csv_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().unwrap();
    let config = std::env::var_os("HOROLAB_ACCEPTANCE_CONFIG")
        .map(PathBuf::from)
        .unwrap_or_else(|| configs().join("default.conf"));
    let main = run_config(&SUITES, config, &tmp.path().join("default"));
    let flat = run_config(&["identities"], configs().join("degenerate.conf"), &tmp.path().join("degenerate"));

    // criterion 7 on the smoke config: the determinism contract does not
    // depend on ensemble sizes, and two default runs would double the cost
    let (a, b) = (tmp.path().join("smoke_a"), tmp.path().join("smoke_b"));
    run_config(&SUITES, configs().join("smoke.conf"), &a);
    run_config(&SUITES, configs().join("smoke.conf"), &b);
    let (first, second) = (csv_bytes(&a), csv_bytes(&b));
    let identical = !first.is_empty() && first == second;

    let identities: Vec<&Verdict> = verdicts(&main, "identity_");
    let lines = vec![
        criterion(1, "identity suite", &identities, stage_seconds(&main, "identities")),
        criterion(2, "degenerations", &verdicts(&flat, "identity_degenerate_"), stage_seconds(&flat, "identities")),
        criterion(3, "equidistribution", &verdicts(&main, "equidist_"), stage_seconds(&main, "equidist")),
        criterion(4, "mixing", &verdicts(&main, "mixing_"), stage_seconds(&main, "mixing")),
        criterion(5, "twisted integrals", &verdicts(&main, "twisted_"), stage_seconds(&main, "twisted")),
        criterion(
            6,
            "spectral local dimension",
            &[verdicts(&main, "local_dimension_xi1"), verdicts(&main, "rescaling_")].concat(),
            stage_seconds(&main, "spectrum"),
        ),
        Line {
            id: 7,
            title: "reproducibility",
            status: if identical { Status::Pass } else { Status::Fail },
            detail: format!("{} CSV files byte-identical across two runs: {identical}", first.len()),
        },
    ];

    println!();
    for l in &lines {
        println!("{} criterion {} ({}): {}", if l.status == Status::Pass { "PASS" } else { "FAIL" }, l.id, l.title, l.detail);
    }
    let failed: Vec<usize> = lines.iter().filter(|l| l.status != Status::Pass).map(|l| l.id).collect();
    assert!(failed.is_empty(), "criteria not met: {failed:?}");
}
