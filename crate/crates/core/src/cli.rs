//! Command-line driver.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical abort
//! (blow-up, stability guard, singular solve), 4 decay certification
//! refused or hypotheses not met.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::config::{admissibility_report, derive_params, expand_sweep, DecayGate, RunConfig};
use crate::diagnostics::{certify, fitted_decay_rate, l2_balance_residual, lyapunov_series, steklov_check};
use crate::dynamics::{ModeField, Simulation};
use crate::error::Error;
use crate::initdata::{make_initial, modal_norm_sq};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_ABORT: i32 = 3;
pub const EXIT_REFUSED: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "kawahara", version, about = "Spectral-Galerkin Kawahara solver on a half-strip")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate and write the ledger, certificate and manifest.
    Run { config: PathBuf },
    /// Print the admissibility report without running.
    Check { config: PathBuf },
    /// Run and write reconstructed fields at the given times.
    Snapshot {
        config: PathBuf,
        /// Comma-separated output times.
        #[arg(long, value_delimiter = ',', required = true)]
        times: Vec<f64>,
    },
    /// Run every cell of a config whose values list `;`-separated alternatives.
    Sweep { config: PathBuf },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Courant { .. } | Error::BlowUp { .. } | Error::SingularSystem { .. } => EXIT_ABORT,
        Error::CertificationRefused(_) => EXIT_REFUSED,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Run { config } => with_config(&config, |cfg| execute(cfg, &[]).code),
        Command::Check { config } => with_config(&config, cmd_check),
        Command::Snapshot { config, times } => with_config(&config, |cfg| execute(cfg, &times).code),
        Command::Sweep { config } => cmd_sweep(&config),
    }
}

fn with_config(path: &Path, f: impl FnOnce(&RunConfig) -> i32) -> i32 {
    match RunConfig::load(path) {
        Ok(cfg) => f(&cfg),
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            EXIT_CONFIG
        }
    }
}

fn cmd_check(cfg: &RunConfig) -> i32 {
    let sim = match Simulation::new(&cfg.solver) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let m = &sim.model;
    let u0 = match make_initial(&cfg.ic, &m.basis, &m.grid, &m.ops) {
        Ok(u) => u,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let norm = modal_norm_sq(&u0.g, &m.grid);
    let report = match admissibility_report(&cfg.solver, norm) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_code(&e);
        }
    };
    let derived = derive_params(&cfg.solver).expect("validated config");
    println!("||u0||^2 = {norm:.6e}");
    for entry in &report {
        println!("[{}] {} (margin {:.6e})", if entry.pass { "ok" } else { "FAIL" }, entry.condition, entry.margin);
    }
    match derived.decay {
        DecayGate::Admissible { theorem, chi, smallness_threshold } => {
            println!("{}: chi = {chi:.6}, smallness threshold = {smallness_threshold:.6}", theorem.label());
        }
        DecayGate::Refused { theorem, .. } => println!("{}: not applicable", theorem.label()),
    }
    if report.iter().all(|e| e.pass) {
        println!("decay-admissible");
        EXIT_OK
    } else {
        println!("not decay-admissible");
        EXIT_REFUSED
    }
}

/// Result of one pipeline execution.
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
}

fn sha256_hex(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    }))
}

/// `u(x, y)` as text: `#` header lines, then one row per x-index with `ny` values.
pub fn write_snapshot(path: &Path, field: &Array2<f64>, x_max: f64, width: f64, t: f64) -> std::io::Result<()> {
    let (nx, ny) = field.dim();
    let mut s = String::new();
    let _ = writeln!(s, "# nx {nx}");
    let _ = writeln!(s, "# ny {ny}");
    let _ = writeln!(s, "# x_max {x_max:?}");
    let _ = writeln!(s, "# L {width:?}");
    let _ = writeln!(s, "# t {t:?}");
    for row in field.outer_iter() {
        let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        s.push_str(&vals.join(" "));
        s.push('\n');
    }
    fs::write(path, s)
}

/// Reads a file written by [`write_snapshot`]: `(x_max, L, t, field)`.
pub fn read_snapshot(path: &Path) -> crate::Result<(f64, f64, f64, Array2<f64>)> {
    let text = fs::read_to_string(path)?;
    let mut head = std::collections::HashMap::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let bad = |msg: String| Error::Parse { line: n + 1, msg };
        if let Some(h) = line.strip_prefix('#') {
            let mut it = h.split_whitespace();
            if let (Some(k), Some(v)) = (it.next(), it.next()) {
                head.insert(k.to_string(), v.parse::<f64>().map_err(|e| bad(e.to_string()))?);
            }
        } else if !line.trim().is_empty() {
            rows.push(line.split_whitespace().map(|v| v.parse::<f64>()).collect::<Result<_, _>>().map_err(|e| bad(e.to_string()))?);
        }
    }
    let get = |k: &str| head.get(k).copied().ok_or_else(|| Error::Parse { line: 0, msg: format!("snapshot header lacks `{k}`") });
    let (nx, ny) = (get("nx")? as usize, get("ny")? as usize);
    if rows.len() != nx || rows.iter().any(|r| r.len() != ny) {
        return Err(Error::Parse { line: 0, msg: "snapshot shape disagrees with header".into() });
    }
    let field = Array2::from_shape_fn((nx, ny), |(i, m)| rows[i][m]);
    Ok((get("x_max")?, get("L")?, get("t")?, field))
}

struct Manifest {
    echo: String,
    derived: String,
    status: String,
    abort_time: Option<f64>,
    files: Vec<PathBuf>,
}

fn write_manifest(dir: &Path, m: &Manifest, started: Instant) -> std::io::Result<PathBuf> {
    let mut s = String::new();
    let _ = writeln!(s, "# run manifest");
    let _ = writeln!(s, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "status = {}", m.status);
    if let Some(t) = m.abort_time {
        let _ = writeln!(s, "abort_time = {t:?}");
    }
    let _ = writeln!(s, "wall_clock_s = {:.3}", started.elapsed().as_secs_f64());
    s.push_str("\n[config]\n");
    s.push_str(&m.echo);
    s.push_str("\n[derived]\n");
    s.push_str(&m.derived);
    s.push_str("\n[files]\n");
    for f in &m.files {
        let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let _ = writeln!(s, "{name} = sha256:{}", sha256_hex(f)?);
    }
    let path = dir.join("manifest.txt");
    fs::write(&path, s)?;
    Ok(path)
}

fn derived_text(cfg: &RunConfig, norm: Option<f64>) -> String {
    let mut s = String::new();
    if let Ok(d) = derive_params(&cfg.solver) {
        let _ = writeln!(s, "a = {:?}", d.a);
        if let Some(d2) = d.delta_sq {
            let _ = writeln!(s, "delta_sq = {d2:?}");
        }
        let lam: Vec<String> = d.lambda.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "lambda = {}", lam.join(","));
        match d.decay {
            DecayGate::Admissible { theorem, chi, smallness_threshold } => {
                let _ = writeln!(s, "theorem = {}", theorem.label());
                let _ = writeln!(s, "chi = {chi:?}");
                let _ = writeln!(s, "smallness_threshold = {smallness_threshold:?}");
            }
            DecayGate::Refused { theorem, failed } => {
                let f: Vec<String> = failed.iter().map(|c| c.to_string()).collect();
                let _ = writeln!(s, "theorem = {} (refused: {})", theorem.label(), f.join("; "));
            }
        }
    }
    let _ = writeln!(s, "h = {:?}", cfg.solver.x_max / (cfg.solver.nx - 1) as f64);
    let _ = writeln!(s, "n_steps = {}", cfg.solver.n_steps());
    if let Some(n) = norm {
        let _ = writeln!(s, "u0_norm_sq = {n:?}");
    }
    s
}

fn summary_text(ledger: &crate::diagnostics::EnergyLedger, width: f64) -> String {
    let mut s = String::new();
    let bal = l2_balance_residual(ledger, true);
    let st = steklov_check(ledger, width);
    let ly = lyapunov_series(ledger);
    let _ = writeln!(s, "l2_balance_max_relative = {:?}", bal.max_relative);
    let _ = writeln!(s, "steklov_worst_ratio = {:?}", st.worst_ratio);
    let _ = writeln!(s, "steklov_bound = {:?}", st.bound);
    let _ = writeln!(s, "steklov_pass = {}", st.pass);
    let _ = writeln!(s, "lyapunov_max_increase = {:?}", ly.max_increase);
    let _ = writeln!(s, "lyapunov_pass = {}", ly.pass);
    let _ = writeln!(s, "fitted_decay_rate = {:?}", fitted_decay_rate(ledger));
    s
}

/// config -> initial data -> integration -> diagnostics -> files.
pub fn execute(cfg: &RunConfig, snapshot_times: &[f64]) -> Outcome {
    let started = Instant::now();
    let fail = |e: &Error| {
        eprintln!("error: {e}");
        Outcome { code: exit_code(e), files: Vec::new() }
    };
    let t_end = cfg.solver.n_steps() as f64 * cfg.solver.dt;
    if let Some(&t) = snapshot_times.iter().find(|&&t| t < 0.0 || t > t_end + 0.5 * cfg.solver.dt) {
        return fail(&Error::Config(format!("snapshot time {t} lies outside [0, {t_end}]")));
    }
    let sim = match Simulation::new(&cfg.solver) {
        Ok(s) => s,
        Err(e) => return fail(&e),
    };
    let m = &sim.model;
    let u0 = match make_initial(&cfg.ic, &m.basis, &m.grid, &m.ops) {
        Ok(u) => u,
        Err(e) => return fail(&e),
    };
    let dir = &cfg.out_dir;
    if let Err(e) = fs::create_dir_all(dir) {
        return fail(&e.into());
    }
    let y = m.basis.uniform_y_grid(cfg.snapshot_ny.max(2));
    let dt = cfg.solver.dt;
    let mut snaps: Vec<(f64, ModeField)> = Vec::new();
    let mut observer = |s: &ModeField| {
        for &t in snapshot_times {
            if (s.t - t).abs() <= 0.5 * dt && !snaps.iter().any(|(ts, _)| *ts == t) {
                snaps.push((t, s.clone()));
            }
        }
    };
    let report = match sim.run_observed(&u0, None, &mut observer) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };

    let mut files = Vec::new();
    let mut io_result = || -> std::io::Result<(i32, String, Option<f64>)> {
        let ledger_path = dir.join("ledger.csv");
        report.ledger.write_csv(&ledger_path).map_err(to_io)?;
        files.push(ledger_path);
        for (i, (t, s)) in snaps.iter().enumerate() {
            let path = dir.join(format!("snapshot_{i:03}.txt"));
            let u = m.basis.reconstruct(s.g.view(), &y);
            write_snapshot(&path, &u, m.grid.x_max(), m.basis.width(), s.t)?;
            println!("snapshot t = {t} -> {}", path.display());
            files.push(path);
        }
        let summary = dir.join("summary.txt");
        fs::write(&summary, summary_text(&report.ledger, m.basis.width()))?;
        files.push(summary);
        if let Some(e) = &report.abort {
            eprintln!("run aborted: {e}");
            return Ok((exit_code(e), format!("aborted: {e}"), e.abort_time()));
        }
        let cert_path = dir.join("certificate.txt");
        let (code, status) = match certify(&report.ledger, &cfg.solver) {
            Ok(c) => {
                fs::write(&cert_path, c.to_text())?;
                println!("{}", c.to_text().lines().next().unwrap_or(""));
                (EXIT_OK, format!("completed; certificate {}", c.verdict()))
            }
            Err(e) => {
                let text = format!(
                    "Decay certificate: REFUSED\n  reason: {e}\n  (informational ledger written)\n\n[certificate]\nverdict=REFUSED\n"
                );
                fs::write(&cert_path, text)?;
                println!("certificate refused: {e}");
                (exit_code(&e), format!("completed; certificate refused: {e}"))
            }
        };
        files.push(cert_path);
        Ok((code, status, None))
    };
    let (code, status, abort_time) = match io_result() {
        Ok(r) => r,
        Err(e) => (EXIT_CONFIG, format!("output error: {e}"), None),
    };
    let manifest = Manifest {
        echo: cfg.echo(),
        derived: derived_text(cfg, Some(modal_norm_sq(&u0.g, &m.grid))),
        status,
        abort_time,
        files: files.clone(),
    };
    match write_manifest(dir, &manifest, started) {
        Ok(p) => files.push(p),
        Err(e) => {
            eprintln!("error: cannot write manifest: {e}");
            return Outcome { code: EXIT_CONFIG, files };
        }
    }
    Outcome { code, files }
}

fn to_io(e: Error) -> std::io::Error {
    match e {
        Error::Io(e) => e,
        other => std::io::Error::other(other.to_string()),
    }
}

fn cmd_sweep(path: &Path) -> i32 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let cells = match expand_sweep(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_CONFIG;
        }
    };
    let base_dir = cells.first().map(|(_, c)| c.out_dir.clone()).unwrap_or_default();
    let mut table = String::from("cell,exit_code,fitted_rate,chi\n");
    let mut first_failure = EXIT_OK;
    for (label, mut cfg) in cells {
        if let Some(p) = cfg.ic.samples.as_mut() {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        cfg.out_dir = base_dir.join(&label);
        println!("== {label}");
        let out = execute(&cfg, &[]);
        let ledger = crate::diagnostics::EnergyLedger::read_csv(&cfg.out_dir.join("ledger.csv")).ok();
        let rate = ledger.as_ref().map_or(f64::NAN, fitted_decay_rate);
        let chi = derive_params(&cfg.solver).ok().and_then(|d| d.chi()).unwrap_or(f64::NAN);
        let _ = writeln!(table, "{label},{},{rate:?},{chi:?}", out.code);
        if first_failure == EXIT_OK {
            first_failure = out.code;
        }
    }
    if fs::create_dir_all(&base_dir).and_then(|_| fs::write(base_dir.join("sweep.csv"), table)).is_err() {
        eprintln!("error: cannot write sweep summary");
        return EXIT_CONFIG;
    }
    first_failure
}
