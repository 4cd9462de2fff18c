//! End-to-end acceptance checks. Runs every criterion in sequence, prints one
//! `PASS`/`FAIL` line per criterion and exits non-zero if any failed.

use std::f64::consts::{FRAC_PI_2, PI};
use std::time::Instant;

use kawahara_strip::basis::TransverseBasis;
use kawahara_strip::config::{delta_squared, derive_params, SolverConfig};
use kawahara_strip::diagnostics::{
    certify, fitted_decay_rate, l2_balance_residual, lyapunov_series, steklov_check, EnergyLedger,
};
use kawahara_strip::dynamics::{step, Model, ModeField, Simulation, StepperState};
use kawahara_strip::grid::sbp_norm;
use kawahara_strip::initdata::{make_initial, Family, InitialDatumSpec};
use kawahara_strip::oracle::{field_norm, linear_expm_reference, quad_coupling, solve_2d_fd, FdConfig};
use ndarray::Array2;

struct Verdict {
    id: u8,
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Ledgers of every run, kept for the Steklov sweep.
#[derive(Default)]
struct Runs {
    ledgers: Vec<(String, f64, EnergyLedger)>,
}

impl Runs {
    fn run(&mut self, label: &str, cfg: &SolverConfig, spec: &InitialDatumSpec) -> EnergyLedger {
        let sim = Simulation::new(cfg).expect("valid configuration");
        let m = &sim.model;
        let u0 = make_initial(spec, &m.basis, &m.grid, &m.ops).expect("valid datum");
        let rep = sim.run(&u0).expect("run setup");
        assert!(rep.abort.is_none(), "{label} aborted: {:?}", rep.abort);
        self.ledgers.push((label.to_string(), cfg.width, rep.ledger.clone()));
        rep.ledger
    }
}

fn mode_one(norm_sq: f64) -> InitialDatumSpec {
    InitialDatumSpec { target_norm_sq: Some(norm_sq), center: 8.0, ..Default::default() }
}

fn coupling_fidelity() -> Verdict {
    let mut worst = 0.0f64;
    let mut nonzero_even = 0usize;
    for width in [1.0, 2.0, PI] {
        let basis = TransverseBasis::new(width, 16).unwrap();
        for k in 1..=16 {
            for l in 1..=16 {
                for j in 1..=16 {
                    let a = basis.coupling_entry(k, l, j).unwrap();
                    if (k + l + j) % 2 == 0 {
                        nonzero_even += usize::from(a != 0.0);
                    } else {
                        worst = worst.max((a - quad_coupling(k, l, j, width)).abs());
                    }
                }
            }
        }
    }
    Verdict {
        id: 1,
        name: "coupling tensor vs quadrature",
        pass: worst <= 1e-10 && nonzero_even == 0,
        detail: format!("max |closed - quad| = {worst:.2e}, nonzero even-parity entries = {nonzero_even}"),
    }
}

fn balance_config(nx: usize, dt: f64, nonlinear: bool) -> SolverConfig {
    SolverConfig {
        alpha: 1,
        width: FRAC_PI_2,
        weight_exponent: 0.3,
        n_modes: 8,
        nx,
        x_max: 40.0,
        dt,
        t_final: 10.0,
        diag_stride: (0.1 / dt).round() as usize,
        nonlinear,
        ..Default::default()
    }
}

fn energy_balance(runs: &mut Runs) -> Verdict {
    let spec = InitialDatumSpec {
        family: Family::MultimodeBump,
        modes: vec![1, 2],
        target_norm_sq: Some(0.05),
        center: 8.0,
        ..Default::default()
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for nonlinear in [false, true] {
        let tag = if nonlinear { "nonlinear" } else { "linear" };
        let fine = l2_balance_residual(&runs.run(&format!("balance {tag} fine"), &balance_config(2048, 1e-3, nonlinear), &spec), true);
        let coarse = l2_balance_residual(&runs.run(&format!("balance {tag} coarse"), &balance_config(1024, 2e-3, nonlinear), &spec), true);
        let slope = (coarse.max_relative / fine.max_relative).log2();
        pass &= fine.max_relative <= 1e-3 && (slope - 2.0).abs() <= 0.3;
        parts.push(format!("{tag}: max|r|/|u0|^2 = {:.2e}, slope = {slope:.2}", fine.max_relative));
    }
    Verdict { id: 2, name: "L2 energy balance", pass, detail: parts.join("; ") }
}

fn certificate_config(alpha: u8, width: f64, k: f64, t_final: f64) -> SolverConfig {
    SolverConfig {
        alpha,
        width,
        weight_exponent: k,
        n_modes: 8,
        nx: 2048,
        x_max: 40.0,
        dt: 1e-3,
        t_final,
        diag_stride: 100,
        ..Default::default()
    }
}

fn transport_certificate(runs: &mut Runs) -> (Verdict, EnergyLedger) {
    let cfg = certificate_config(1, FRAC_PI_2, 0.3, 20.0);
    let derived = derive_params(&cfg).unwrap();
    let chi = derived.chi().unwrap_or(f64::NAN);
    let threshold = derived.smallness_threshold().unwrap_or(f64::NAN);
    let ledger = runs.run("transport certificate", &cfg, &mode_one(0.2));
    let cert = certify(&ledger, &cfg).unwrap();
    let constants = (chi - 0.22743).abs() < 5e-6 && (threshold - 0.421875).abs() < 1e-12;
    let v = Verdict {
        id: 4,
        name: "decay certificate, alpha = 1",
        pass: cert.pass && constants,
        detail: format!(
            "chi = {chi:.6}, threshold = {threshold:.6}, worst ratio = {:.6}, fitted rate = {:.4}",
            cert.worst_ratio, cert.fitted_rate
        ),
    };
    (v, ledger)
}

fn dispersive_certificate(runs: &mut Runs) -> Verdict {
    let cfg = certificate_config(0, 2.0, 0.4, 30.0);
    let derived = derive_params(&cfg).unwrap();
    let chi = derived.chi().unwrap_or(f64::NAN);
    let threshold = derived.smallness_threshold().unwrap_or(f64::NAN);
    let ledger = runs.run("dispersive certificate", &cfg, &mode_one(0.17));
    let cert = certify(&ledger, &cfg).unwrap();
    let constants = (chi - 0.133612).abs() < 5e-6 && (threshold - 0.346979).abs() < 1e-6;
    Verdict {
        id: 5,
        name: "decay certificate, alpha = 0",
        pass: cert.pass && constants,
        detail: format!(
            "chi = {chi:.6}, threshold = {threshold:.6}, worst ratio = {:.6}, fitted rate = {:.4}",
            cert.worst_ratio, cert.fitted_rate
        ),
    }
}

fn steklov(runs: &mut Runs) -> Verdict {
    // A linear run with one retained mode never leaves the first eigenspace.
    let single = SolverConfig {
        n_modes: 1,
        nonlinear: false,
        t_final: 2.0,
        ..certificate_config(1, FRAC_PI_2, 0.3, 2.0)
    };
    let saturated = runs.run("single mode", &single, &mode_one(0.2));
    let mut failures = Vec::new();
    let mut samples = 0;
    for (label, width, ledger) in &runs.ledgers {
        samples += ledger.len();
        let rep = steklov_check(ledger, *width);
        if !rep.pass {
            failures.push(format!("{label} ({:.3e} > {:.3e})", rep.worst_ratio, rep.bound));
        }
    }
    let sat = steklov_check(&saturated, FRAC_PI_2);
    let gap = saturated
        .records()
        .iter()
        .filter(|r| r.w_uy > 0.0)
        .map(|r| (r.steklov_ratio / sat.bound - 1.0).abs())
        .fold(0.0f64, f64::max);
    Verdict {
        id: 3,
        name: "Steklov inequality",
        pass: failures.is_empty() && gap <= 1e-12,
        detail: format!(
            "{} runs, {samples} samples, violations: [{}], single-mode |ratio/bound - 1| = {gap:.1e}",
            runs.ledgers.len(),
            failures.join(", ")
        ),
    }
}

fn lyapunov(ledger: &EnergyLedger) -> Verdict {
    let rep = lyapunov_series(ledger);
    Verdict {
        id: 6,
        name: "Lyapunov monotonicity",
        pass: rep.pass,
        detail: format!("max increase = {:.2e}, tolerance = {:.2e}", rep.max_increase, rep.tolerance),
    }
}

fn oracle_equivalence() -> Verdict {
    let (width, x_max, nxo, nyo, t_final) = (16.0, 24.0, 256usize, 64usize, 1.0);
    let psi = |y: f64| {
        (PI * y / width).sin() + 0.3 * (5.0 * PI * y / width).sin() + 0.03 * (9.0 * PI * y / width).sin()
    };
    let phi = |x: f64| 0.3 * (x / 6.0).powi(2) * (-((x - 6.0) / 1.5f64).powi(2)).exp();
    let fd = FdConfig {
        alpha: 1.0,
        width,
        x_max,
        nx: nxo,
        ny: nyo,
        dt: 1e-3,
        t_final,
        nonlinear: true,
        sponge_width: 0.0,
        sponge_strength: 0.0,
        blowup_factor: 1e3,
    };
    let xo: Vec<f64> = (0..nxo).map(|i| x_max * i as f64 / (nxo - 1) as f64).collect();
    let yo: Vec<f64> = (0..nyo).map(|k| width * k as f64 / (nyo - 1) as f64).collect();
    let u0 = Array2::from_shape_fn((nxo, nyo), |(i, k)| phi(xo[i]) * psi(yo[k]));
    let reference = solve_2d_fd(&fd, &u0, None, &[t_final]).unwrap().pop().unwrap();
    let quad = sbp_norm(2, nxo, x_max / (nxo - 1) as f64).unwrap();
    let ref_norm = field_norm(&reference.u, &quad, width);

    let stride = 8;
    let nx = stride * (nxo - 1) + 1;
    let mut rel = Vec::new();
    for n in [4usize, 8, 16] {
        let cfg = SolverConfig {
            alpha: 1,
            width,
            n_modes: n,
            nx,
            x_max,
            sponge_width: 0.0,
            dt: 1e-3,
            t_final,
            diag_stride: 1000,
            weight_exponent: 0.1,
            ..Default::default()
        };
        let sim = Simulation::new(&cfg).unwrap();
        let m = &sim.model;
        let y = m.basis.uniform_y_grid(1025);
        let field = Array2::from_shape_fn((nx, y.len()), |(i, k)| phi(m.grid.x[i]) * psi(y[k]));
        let mut g = m.basis.project_initial(field.view(), &y, &m.grid.quad).unwrap().modes;
        for mut row in g.outer_iter_mut() {
            m.ops.project(row.as_slice_mut().unwrap());
        }
        let fin = sim.run(&ModeField { t: 0.0, g }).unwrap().into_result().unwrap().1;
        let coarse = Array2::from_shape_fn((n, nxo), |(j, i)| fin.g[(j, stride * i)]);
        let diff = m.basis.reconstruct(coarse.view(), &reference.y) - &reference.u;
        rel.push(field_norm(&diff, &quad, width) / ref_norm);
    }
    Verdict {
        id: 7,
        name: "Galerkin vs finite-difference oracle",
        pass: rel[1] <= 5e-2 && rel[2] < rel[1] && rel[1] < rel[0],
        detail: format!("relative L2 difference N=4: {:.3e}, N=8: {:.3e}, N=16: {:.3e}", rel[0], rel[1], rel[2]),
    }
}

fn propagator_fidelity() -> Verdict {
    let cfg = SolverConfig {
        n_modes: 1,
        nx: 128,
        x_max: 20.0,
        sponge_width: 0.0,
        nonlinear: false,
        dt: 1e-4,
        t_final: 1.0,
        ..Default::default()
    };
    let m = Model::new(&cfg).unwrap();
    let u0 = make_initial(&mode_one(1.0), &m.basis, &m.grid, &m.ops).unwrap();
    let g0 = u0.g.row(0).to_vec();
    let times = [0.1, 0.25, 0.5, 0.75, 1.0];
    let refs: Vec<Vec<f64>> =
        times.iter().map(|&t| linear_expm_reference(&m.ops, m.shift(0), &m.grid.sponge, &g0, t).unwrap()).collect();
    let mut errors = Vec::new();
    for dt in [2e-4, 1e-4] {
        let mut stepper = StepperState::new(&m, dt).unwrap();
        let mut state = u0.clone();
        let mut worst = 0.0f64;
        let steps = (1.0 / dt).round() as usize;
        for n in 1..=steps {
            state = step(&m, &state, &mut stepper).unwrap();
            let t = n as f64 * dt;
            for (_, r) in times.iter().zip(&refs).filter(|(&s, _)| (t - s).abs() < dt / 2.0) {
                let d: Vec<f64> = state.g.row(0).iter().zip(r).map(|(a, b)| a - b).collect();
                worst = worst.max(m.grid.inner(&d, &d).sqrt());
            }
        }
        errors.push(worst);
    }
    let order = (errors[0] / errors[1]).log2();
    Verdict {
        id: 8,
        name: "linear propagator vs matrix exponential",
        pass: errors[1] <= 1e-6 && (order - 2.0).abs() <= 0.3,
        detail: format!("max error dt=2e-4: {:.3e}, dt=1e-4: {:.3e}, observed order {order:.2}", errors[0], errors[1]),
    }
}

fn critical_width(runs: &mut Runs) -> Verdict {
    let mut rows = Vec::new();
    for width in [FRAC_PI_2, 0.9 * PI, 0.99 * PI] {
        let k = 0.5 * (0.6f64).min(4.0 * delta_squared(width) / 9.0).sqrt();
        let cfg = certificate_config(1, width, k, 20.0);
        let chi = derive_params(&cfg).unwrap().chi().unwrap_or(f64::NAN);
        let ledger = runs.run(&format!("width {width:.4}"), &cfg, &mode_one(1e-5));
        rows.push((width, k, chi, fitted_decay_rate(&ledger)));
    }
    let positive = rows.iter().all(|r| r.3 > 0.0);
    let decreasing = rows.windows(2).all(|w| w[1].2 < w[0].2);
    let detail = rows
        .iter()
        .map(|(l, k, chi, rate)| format!("L={l:.4} k={k:.4} chi={chi:.3e} rate={rate:.4}"))
        .collect::<Vec<_>>()
        .join("; ");
    Verdict { id: 9, name: "critical-width sweep", pass: positive && decreasing, detail }
}

fn main() {
    let start = Instant::now();
    let mut runs = Runs::default();
    let mut verdicts = vec![coupling_fidelity()];
    verdicts.push(energy_balance(&mut runs));
    let (transport, transport_ledger) = transport_certificate(&mut runs);
    verdicts.push(transport);
    verdicts.push(dispersive_certificate(&mut runs));
    verdicts.push(lyapunov(&transport_ledger));
    verdicts.push(oracle_equivalence());
    verdicts.push(propagator_fidelity());
    verdicts.push(critical_width(&mut runs));
    verdicts.push(steklov(&mut runs));
    verdicts.sort_by_key(|v| v.id);

    println!();
    for v in &verdicts {
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {} [{tag}] {}: {}", v.id, v.name, v.detail);
    }
    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} passed, {failed} failed ({:.0?})", verdicts.len() - failed, start.elapsed());
    if failed > 0 {
        std::process::exit(1);
    }
}
