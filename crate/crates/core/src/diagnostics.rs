//! Norms, boundary traces, functionals and residuals tracked along a run,
//! and the exponential decay certificate.
//!
//! All quantities are computed from the modal representation. y-derivatives
//! are spectral (`||u_y||^2 = sum_j lambda_j ||g_j||^2`), x-derivatives use
//! the SBP operators, and the cubic integral is contracted exactly with the
//! coupling tensor, `int u^3 = sum a_{klj} int g_k g_l g_j dx`.
//!
//! The accumulated trace `int_0^t int_0^L u_xx(0, y, s)^2 dy ds` is
//! integrated with the trapezoid rule over every time step, not only over
//! the sampled ones.

use std::fmt::Write as _;
use std::path::Path;

use crate::config::{admissibility_report, derive_params, CheckEntry, DecayTheorem, DerivedParams, SolverConfig};
use crate::dynamics::{quadratic_products, Model, ModeField};
use crate::error::{Error, Result};

/// Certificate tolerance on the bound ratio.
pub const CERT_TOLERANCE: f64 = 1e-2;
/// Relative slack of the Steklov check.
pub const STEKLOV_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerRecord {
    pub t: f64,
    /// `||u||^2`.
    pub l2: f64,
    /// `(e^{kx}, u^2)`.
    pub w_l2: f64,
    /// `(e^{kx}, u_x^2)`.
    pub w_ux: f64,
    /// `(e^{kx}, u_y^2)`.
    pub w_uy: f64,
    /// `(e^{kx}, u_xx^2)`.
    pub w_uxx: f64,
    /// `||grad u||^2`.
    pub grad_sq: f64,
    /// `||u_xx||^2`.
    pub uxx_sq: f64,
    /// `int_0^L u_xx(0, y)^2 dy`.
    pub trace: f64,
    pub trace_accum: f64,
    /// `int u^3`.
    pub cubic: f64,
    /// `||u_xx||^2 + ||grad u||^2 - int u^3 / 3`.
    pub lyapunov: f64,
    /// `(e^{kx}, u^2) / (e^{kx}, u_y^2)`; NaN for a zero field.
    pub steklov_ratio: f64,
    /// `||u||^2 + trace_accum - ||u0||^2`.
    pub l2_residual: f64,
    /// `(e^{kx}, u^2)(t) e^{chi t} / (e^{kx}, u0^2)`; NaN without a certified `chi`.
    pub decay_ratio: f64,
    /// `(e^{kx}, u_t^2)` by a backward difference over the last step; NaN at `t = 0`.
    pub w_ut: f64,
    /// Energy removed by the sponge, `2 int_0^t (sigma u, u) ds`.
    pub sponge_loss: f64,
}

/// CSV column order.
pub const COLUMNS: [&str; 17] = [
    "t",
    "l2",
    "w_l2",
    "w_ux",
    "w_uy",
    "w_uxx",
    "grad_sq",
    "uxx_sq",
    "trace",
    "trace_accum",
    "cubic",
    "lyapunov",
    "steklov_ratio",
    "l2_residual",
    "decay_ratio",
    "w_ut",
    "sponge_loss",
];

impl LedgerRecord {
    fn values(&self) -> [f64; 17] {
        [
            self.t,
            self.l2,
            self.w_l2,
            self.w_ux,
            self.w_uy,
            self.w_uxx,
            self.grad_sq,
            self.uxx_sq,
            self.trace,
            self.trace_accum,
            self.cubic,
            self.lyapunov,
            self.steklov_ratio,
            self.l2_residual,
            self.decay_ratio,
            self.w_ut,
            self.sponge_loss,
        ]
    }

    fn from_values(v: &[f64]) -> Self {
        LedgerRecord {
            t: v[0],
            l2: v[1],
            w_l2: v[2],
            w_ux: v[3],
            w_uy: v[4],
            w_uxx: v[5],
            grad_sq: v[6],
            uxx_sq: v[7],
            trace: v[8],
            trace_accum: v[9],
            cubic: v[10],
            lyapunov: v[11],
            steklov_ratio: v[12],
            l2_residual: v[13],
            decay_ratio: v[14],
            w_ut: v[15],
            sponge_loss: v[16],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    records: Vec<LedgerRecord>,
}

impl EnergyLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; times must increase strictly.
    pub fn push(&mut self, r: LedgerRecord) {
        if let Some(last) = self.records.last() {
            assert!(r.t > last.t, "ledger times must increase: {} after {}", r.t, last.t);
        }
        self.records.push(r);
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first(&self) -> Option<&LedgerRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&LedgerRecord> {
        self.records.last()
    }

    /// CSV with a header row; values printed in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = COLUMNS.join(",");
        s.push('\n');
        for r in &self.records {
            let row: Vec<String> = r.values().iter().map(|v| format!("{v:?}")).collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header.split(',').map(str::trim).ne(COLUMNS.iter().copied()) {
            return Err(Error::Parse { line: 1, msg: "ledger header does not match the column schema".into() });
        }
        let mut ledger = EnergyLedger::new();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { line: n + 2, msg: e.to_string() })?;
            if v.len() != COLUMNS.len() {
                return Err(Error::Parse { line: n + 2, msg: format!("expected {} fields, got {}", COLUMNS.len(), v.len()) });
            }
            ledger.records.push(LedgerRecord::from_values(&v));
        }
        Ok(ledger)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// Running integrals carried between samples.
#[derive(Clone, Debug)]
pub struct Accumulator {
    pub l2_initial: f64,
    pub w_l2_initial: f64,
    pub l2_current: f64,
    trace_last: f64,
    pub trace_accum: f64,
    sponge_last: f64,
    pub sponge_loss: f64,
}

/// Read-only view of a model used for sampling.
pub struct DiagContext<'a> {
    pub model: &'a Model,
    pub chi: Option<f64>,
}

impl<'a> DiagContext<'a> {
    pub fn new(model: &'a Model, chi: Option<f64>) -> Self {
        DiagContext { model, chi }
    }

    pub fn l2(&self, state: &ModeField) -> f64 {
        let grid = &self.model.grid;
        state.g.outer_iter().map(|r| grid.inner(r.as_slice().unwrap(), r.as_slice().unwrap())).sum()
    }

    /// `sum_j (D^2 g_j)(0)^2`.
    pub fn trace(&self, state: &ModeField) -> f64 {
        state.g.outer_iter().map(|r| self.model.ops.at_left(2, r.as_slice().unwrap()).powi(2)).sum()
    }

    fn sponge_rate(&self, state: &ModeField) -> f64 {
        let grid = &self.model.grid;
        let mut s = 0.0;
        for r in state.g.outer_iter() {
            for i in 0..grid.len() {
                s += grid.quad[i] * grid.sponge[i] * r[i] * r[i];
            }
        }
        2.0 * s
    }

    pub fn accumulator(&self, u0: &ModeField) -> Accumulator {
        let l2 = self.l2(u0);
        let w = u0.g.outer_iter().map(|r| self.model.grid.weighted_inner(r.as_slice().unwrap(), r.as_slice().unwrap())).sum();
        Accumulator {
            l2_initial: l2,
            w_l2_initial: w,
            l2_current: l2,
            trace_last: self.trace(u0),
            trace_accum: 0.0,
            sponge_last: self.sponge_rate(u0),
            sponge_loss: 0.0,
        }
    }

    pub fn sample(&self, state: &ModeField, acc: &Accumulator, prev: Option<&ModeField>) -> LedgerRecord {
        let m = self.model;
        let grid = &m.grid;
        let nx = grid.len();
        let mut d1 = vec![0.0; nx];
        let mut d2 = vec![0.0; nx];
        let mut r = LedgerRecord {
            t: state.t,
            l2: 0.0,
            w_l2: 0.0,
            w_ux: 0.0,
            w_uy: 0.0,
            w_uxx: 0.0,
            grad_sq: 0.0,
            uxx_sq: 0.0,
            trace: 0.0,
            trace_accum: acc.trace_accum,
            cubic: 0.0,
            lyapunov: 0.0,
            steklov_ratio: 0.0,
            l2_residual: 0.0,
            decay_ratio: f64::NAN,
            w_ut: f64::NAN,
            sponge_loss: acc.sponge_loss,
        };
        for (j, row) in state.g.outer_iter().enumerate() {
            let g = row.as_slice().unwrap();
            let lam = m.basis.lambda[j];
            m.ops.apply(1, g, &mut d1);
            m.ops.apply(2, g, &mut d2);
            let gg = grid.inner(g, g);
            let wgg = grid.weighted_inner(g, g);
            r.l2 += gg;
            r.w_l2 += wgg;
            r.w_uy += lam * wgg;
            r.w_ux += grid.weighted_inner(&d1, &d1);
            r.w_uxx += grid.weighted_inner(&d2, &d2);
            r.grad_sq += grid.inner(&d1, &d1) + lam * gg;
            r.uxx_sq += grid.inner(&d2, &d2);
            r.trace += d2[0].powi(2);
        }
        let p = quadratic_products(state.g.view(), &m.basis);
        r.cubic = state
            .g
            .outer_iter()
            .zip(p.outer_iter())
            .map(|(g, p)| grid.inner(g.as_slice().unwrap(), p.as_slice().unwrap()))
            .sum();
        r.lyapunov = r.uxx_sq + r.grad_sq - r.cubic / 3.0;
        r.steklov_ratio = if r.w_uy == 0.0 && r.w_l2 == 0.0 { f64::NAN } else { r.w_l2 / r.w_uy };
        r.l2_residual = r.l2 + acc.trace_accum - acc.l2_initial;
        if let Some(chi) = self.chi {
            r.decay_ratio = if acc.w_l2_initial == 0.0 { 0.0 } else { r.w_l2 * (chi * r.t).exp() / acc.w_l2_initial };
        }
        if let Some(prev) = prev {
            let dt = state.t - prev.t;
            let diff = (&state.g - &prev.g) / dt;
            r.w_ut = diff.outer_iter().map(|d| grid.weighted_inner(d.as_slice().unwrap(), d.as_slice().unwrap())).sum();
        }
        r
    }
}

impl Accumulator {
    /// Trapezoid update over one step `prev -> next`.
    pub fn advance(&mut self, ctx: &DiagContext, next: &ModeField, dt: f64) {
        let tr = ctx.trace(next);
        self.trace_accum += 0.5 * dt * (self.trace_last + tr);
        self.trace_last = tr;
        let sp = ctx.sponge_rate(next);
        self.sponge_loss += 0.5 * dt * (self.sponge_last + sp);
        self.sponge_last = sp;
        self.l2_current = ctx.l2(next);
    }
}

/// Residual series of the L2 balance.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceReport {
    pub residual: Vec<f64>,
    /// `max |r| / ||u0||^2`; zero for zero data.
    pub max_relative: f64,
}

/// `r(t) = ||u||^2(t) + [trace_accum(t)] - ||u0||^2`; the bracket is dropped
/// when `include_trace` is false.
pub fn l2_balance_residual(ledger: &EnergyLedger, include_trace: bool) -> BalanceReport {
    let recs = ledger.records();
    let l2_0 = recs.first().map_or(0.0, |r| r.l2);
    let residual: Vec<f64> = recs
        .iter()
        .map(|r| r.l2 + if include_trace { r.trace_accum } else { 0.0 } - l2_0)
        .collect();
    let worst = residual.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let max_relative = if l2_0 > 0.0 { worst / l2_0 } else { 0.0 };
    BalanceReport { residual, max_relative }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SteklovReport {
    pub bound: f64,
    /// Largest sampled ratio; NaN when no sample had `u_y != 0`.
    pub worst_ratio: f64,
    pub pass: bool,
}

/// Every sampled `(e^{kx},u^2) / (e^{kx},u_y^2)` against `L^2 / pi^2`.
pub fn steklov_check(ledger: &EnergyLedger, width: f64) -> SteklovReport {
    let bound = width * width / (std::f64::consts::PI * std::f64::consts::PI);
    let worst = ledger
        .records()
        .iter()
        .filter(|r| r.w_uy > 0.0)
        .map(|r| r.steklov_ratio)
        .fold(f64::NAN, f64::max);
    let pass = worst.is_nan() || worst <= bound * (1.0 + STEKLOV_TOLERANCE);
    SteklovReport { bound, worst_ratio: worst, pass }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LyapunovReport {
    /// `max_i E(t_{i+1}) - E(t_i)`; `-inf` for a single sample.
    pub max_increase: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn lyapunov_series(ledger: &EnergyLedger) -> LyapunovReport {
    let recs = ledger.records();
    let e0 = recs.first().map_or(0.0, |r| r.lyapunov);
    let tolerance = 1e-6 * (1.0 + e0.abs());
    let max_increase = recs.windows(2).map(|w| w[1].lyapunov - w[0].lyapunov).fold(f64::NEG_INFINITY, f64::max);
    LyapunovReport { max_increase, tolerance, pass: !(max_increase > tolerance) }
}

/// Least-squares decay rate `-d/dt log (e^{kx}, u^2)` over samples with a
/// positive weighted norm; NaN with fewer than two such samples.
pub fn fitted_decay_rate(ledger: &EnergyLedger) -> f64 {
    let pts: Vec<(f64, f64)> = ledger.records().iter().filter(|r| r.w_l2 > 0.0).map(|r| (r.t, r.w_l2.ln())).collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let tm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ym = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - tm) * (p.1 - ym)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - tm).powi(2)).sum();
    if sxx == 0.0 {
        return f64::NAN;
    }
    -sxy / sxx
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayCertificate {
    pub theorem: DecayTheorem,
    pub checklist: Vec<CheckEntry>,
    pub chi: f64,
    /// `(e^{kx}, u0^2)`.
    pub initial_weighted: f64,
    /// `(t, ratio)` per sample.
    pub ratios: Vec<(f64, f64)>,
    pub flags: Vec<bool>,
    pub worst_ratio: f64,
    pub fitted_rate: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Checks `(e^{kx},u^2)(t) <= e^{-chi t} (e^{kx},u0^2)` at every sample.
/// Refuses when any hypothesis of the decay result fails for this datum.
pub fn decay_certificate(ledger: &EnergyLedger, derived: &DerivedParams, cfg: &SolverConfig) -> Result<DecayCertificate> {
    let first = ledger.first().ok_or_else(|| Error::CertificationRefused("empty ledger".into()))?;
    let (chi, _) = derived.require_decay()?;
    let checklist = admissibility_report(cfg, first.l2)?;
    let failed: Vec<String> = checklist.iter().filter(|c| !c.pass).map(|c| format!("{} (margin {:.3e})", c.condition, c.margin)).collect();
    if !failed.is_empty() {
        return Err(Error::CertificationRefused(failed.join("; ")));
    }
    let w0 = first.w_l2;
    let ratios: Vec<(f64, f64)> = ledger
        .records()
        .iter()
        .map(|r| (r.t, if w0 == 0.0 { 0.0 } else { r.w_l2 * (chi * r.t).exp() / w0 }))
        .collect();
    let flags: Vec<bool> = ratios.iter().map(|&(_, q)| q <= 1.0 + CERT_TOLERANCE).collect();
    let worst_ratio = ratios.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(DecayCertificate {
        theorem: derived_theorem(cfg),
        checklist,
        chi,
        initial_weighted: w0,
        pass: flags.iter().all(|&f| f),
        ratios,
        flags,
        worst_ratio,
        fitted_rate: fitted_decay_rate(ledger),
        tolerance: CERT_TOLERANCE,
    })
}

fn derived_theorem(cfg: &SolverConfig) -> DecayTheorem {
    DecayTheorem::for_alpha(cfg.alpha)
}

impl DecayCertificate {
    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }

    /// Human-readable block followed by a `key=value` section.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "Decay certificate: {}", self.verdict());
        let _ = writeln!(s, "  result applied : {}", self.theorem.label());
        let _ = writeln!(s, "  chi            : {:.6}", self.chi);
        let _ = writeln!(s, "  (e^kx, u0^2)   : {:.6e}", self.initial_weighted);
        let _ = writeln!(s, "  worst ratio    : {:.6} (limit 1 + {:e})", self.worst_ratio, self.tolerance);
        let _ = writeln!(s, "  fitted rate    : {:.6}", self.fitted_rate);
        let _ = writeln!(s, "  samples        : {} ({} within bound)", self.flags.len(), self.flags.iter().filter(|&&f| f).count());
        let _ = writeln!(s, "  hypotheses:");
        for c in &self.checklist {
            let _ = writeln!(s, "    [{}] {} (margin {:.6e})", if c.pass { "ok" } else { "FAIL" }, c.condition, c.margin);
        }
        s.push('\n');
        s.push_str("[certificate]\n");
        let _ = writeln!(s, "verdict={}", self.verdict());
        let _ = writeln!(s, "theorem={}", self.theorem.label());
        let _ = writeln!(s, "chi={:?}", self.chi);
        let _ = writeln!(s, "initial_weighted={:?}", self.initial_weighted);
        let _ = writeln!(s, "worst_ratio={:?}", self.worst_ratio);
        let _ = writeln!(s, "fitted_rate={:?}", self.fitted_rate);
        let _ = writeln!(s, "tolerance={:?}", self.tolerance);
        let _ = writeln!(s, "samples={}", self.flags.len());
        let _ = writeln!(s, "violations={}", self.flags.iter().filter(|&&f| !f).count());
        s
    }
}

/// Convenience wrapper deriving the parameters from `cfg`.
pub fn certify(ledger: &EnergyLedger, cfg: &SolverConfig) -> Result<DecayCertificate> {
    decay_certificate(ledger, &derive_params(cfg)?, cfg)
}
