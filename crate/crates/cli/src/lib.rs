//! Experiment runner: reads a config, runs suites on a sized worker pool and
//! writes CSV series, `fits.csv`, `identities.csv`, `plot.gp` and
//! `manifest.txt` from the coordinating thread.

pub mod config;
pub mod output;
pub mod suites;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use config::ExperimentConfig;
use horo_core::statistics::ExponentFit;
use output::{gnuplot_script, sha256_hex, Cell, Table};
pub use suites::{Context, Status, SuiteReport, SUITES};

pub const DEFAULT_OUT: &str = "horolab-out";

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub dry_run: bool,
    pub seed_override: Option<u64>,
}

/// Outcome of a run; `out` is `None` when nothing was written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub status: Status,
    pub out: Option<PathBuf>,
    pub reports: Vec<SuiteReport>,
}

fn fail(message: String) -> RunOutcome {
    eprintln!("error: {message}");
    RunOutcome { status: Status::Error, out: None, reports: Vec::new() }
}

pub fn load_config(opts: &Options) -> Result<ExperimentConfig, String> {
    let text = fs::read_to_string(&opts.config).map_err(|e| format!("{}: {e}", opts.config.display()))?;
    let cfg = ExperimentConfig::from_text(&text).map_err(|e| format!("{}: {e}", opts.config.display()))?;
    Ok(match opts.seed_override {
        Some(seed) => cfg.with_seed(seed),
        None => cfg,
    })
}

fn plan(cfg: &ExperimentConfig, suite: &str) -> String {
    match suite {
        "identities" => {
            let p = &cfg.identities;
            let degenerate = if cfg.epsilon == 0.0 { ", degenerations" } else { "" };
            format!(
                "{} coboundary arcs with t <= {}, {} finite-difference points, mixing formula at ensemble {}{degenerate}",
                p.arcs, p.t_max, p.fd_points, p.mixing_ensemble
            )
        }
        "equidist" => {
            let p = &cfg.equidist;
            format!("Birkhoff integrals, ensemble {}, T = 2^(k/2) for k in {}..={}", p.ensemble, p.k_min, p.k_max)
        }
        "mixing" => {
            let p = &cfg.mixing;
            format!(
                "correlations at ensemble {} up to t = 2^({}/2), coboundary at ensemble {} up to t = 2^({}/4), {} arc samples for k in {}..={}",
                p.ensemble, p.k_max, p.coboundary_ensemble, p.coboundary_k_max, p.arc_samples, p.arc_k_min, p.arc_k_max
            )
        }
        "twisted" => {
            let p = &cfg.twisted;
            format!("twisted integrals at xi = {}, ensemble {}, k in {}..={}", p.xi, p.ensemble, p.k_min, p.k_max)
        }
        _ => {
            let p = &cfg.spectrum;
            format!(
                "autocorrelation at ensemble {} on [0, {}] step {}, local dimension at xi = {:?} ensemble {}",
                p.ensemble, p.t_max, p.dt, p.xi, p.ld_ensemble
            )
        }
    }
}

/// Creates `dir` if needed and checks that files can be written there.
fn prepare_dir(dir: &Path) -> Result<(), String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let probe = dir.join(".horolab-write-probe");
    fs::write(&probe, b"").map_err(|e| format!("cannot write to {}: {e}", dir.display()))?;
    fs::remove_file(&probe).map_err(|e| format!("cannot write to {}: {e}", dir.display()))
}

fn fits_table(reports: &[SuiteReport]) -> Table {
    let mut t = Table::new(
        "fits.csv",
        &["experiment", "slope", "halfwidth", "bound", "pass", "t_min", "t_max", "points", "noise_floor"],
    );
    for row in reports.iter().flat_map(|r| &r.fits) {
        let get = |g: fn(&ExponentFit) -> f64| Cell::Real(row.fit.as_ref().map_or(f64::NAN, g));
        t.push(vec![
            row.experiment.as_str().into(),
            get(|f| f.slope),
            get(|f| f.halfwidth),
            row.bound.describe().into(),
            row.status.label().to_lowercase().into(),
            get(|f| f.t_min),
            get(|f| f.t_max),
            Cell::Int(row.fit.map_or(0, |f| f.used as i64)),
            get(|f| f.noise_floor),
        ]);
    }
    t
}

fn manifest(cfg: &ExperimentConfig, threads: usize, reports: &[SuiteReport], files: &[(String, String)], status: Status) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "# horolab run manifest");
    let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "config_sha256 = {}", sha256_hex(cfg.text.as_bytes()));
    let _ = writeln!(m, "seed = {}", cfg.seed);
    let _ = writeln!(m, "threads = {threads}");
    for r in reports {
        let _ = writeln!(m, "stage.{}.seconds = {:.3}", r.name, r.seconds);
    }
    for v in reports.iter().flat_map(|r| &r.verdicts) {
        let _ = writeln!(m, "verdict.{} = {} value={:.6e} bound=\"{}\"", v.experiment, v.status.label(), v.value, v.bound);
    }
    let mut hasher = String::from(&cfg.text);
    for (name, body) in files {
        let _ = writeln!(m, "file.{name}.sha256 = {}", sha256_hex(body.as_bytes()));
        hasher.push_str(name);
        hasher.push_str(body);
    }
    let _ = writeln!(m, "manifest_sha256 = {}", sha256_hex(hasher.as_bytes()));
    let _ = writeln!(m, "status = {}", status.label());
    m
}

/// Runs the named suites and writes their outputs. Progress and verdicts
/// go to stdout, errors to stderr.
pub fn run(suite_names: &[&str], opts: &Options) -> RunOutcome {
    let cfg = match load_config(opts) {
        Ok(cfg) => cfg,
        Err(e) => return fail(e),
    };
    let out = opts.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    if opts.dry_run {
        println!("dry run: nothing is written");
        println!("config: {} (seed {})", opts.config.display(), cfg.seed);
        println!("output directory: {}", out.display());
        for (i, s) in suite_names.iter().enumerate() {
            println!("stage {}: {s}: {}", i + 1, plan(&cfg, s));
        }
        return RunOutcome { status: Status::Pass, out: None, reports: Vec::new() };
    }
    if let Err(e) = prepare_dir(&out) {
        return fail(e);
    }
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(opts.threads.unwrap_or(0)).build() {
        Ok(pool) => pool,
        Err(e) => return fail(format!("cannot start the worker pool: {e}")),
    };
    let threads = pool.current_num_threads();

    let ctx = match pool.install(|| Context::new(cfg.clone())) {
        Ok(ctx) => ctx,
        Err(e) => return fail(format!("{}: {e}", opts.config.display())),
    };
    let mut reports = Vec::new();
    let mut status = Status::Pass;
    for name in suite_names {
        println!("running {name} ...");
        match pool.install(|| ctx.run(name)) {
            Ok(report) => {
                for v in &report.verdicts {
                    println!("{:<12} {:<34} {:>14.6e}  {}", v.status.label(), v.experiment, v.value, v.bound);
                }
                println!("{name} finished in {:.1} s", report.seconds);
                status = status.max(report.status());
                reports.push(report);
            }
            Err(e) => {
                println!("{:<12} {name}: {e}", Status::Fail.label());
                status = status.max(Status::Fail);
            }
        }
    }

    let mut tables: Vec<Table> = reports.iter().flat_map(|r| r.tables.iter().cloned()).collect();
    if reports.iter().any(|r| !r.fits.is_empty()) {
        tables.push(fits_table(&reports));
    }
    let series: Vec<&Table> = tables.iter().filter(|t| t.name != "identities.csv" && t.name != "fits.csv").collect();
    let mut files: Vec<(String, String)> = tables.iter().map(|t| (t.name.clone(), t.render())).collect();
    files.sort();
    let mut writes = files.clone();
    if !series.is_empty() {
        writes.push(("plot.gp".into(), gnuplot_script(&series)));
    }
    writes.push(("manifest.txt".into(), manifest(&cfg, threads, &reports, &files, status)));
    for (name, body) in &writes {
        if let Err(e) = fs::write(out.join(name), body) {
            eprintln!("error: cannot write {}: {e}", out.join(name).display());
            status = Status::Error;
        }
    }
    println!("{} files written to {}", writes.len(), out.display());
    println!("overall: {}", status.label());
    RunOutcome { status, out: Some(out), reports }
}
