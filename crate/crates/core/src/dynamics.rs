//! Modal right-hand side and IMEX time stepping.
//!
//! Each mode obeys
//!
//! ```text
//! g_j' = Lambda_j g_j - N_j(g),   Lambda_j = D^5 - D^3 + (lambda_j - alpha) D - sigma,
//! ```
//!
//! where `N_j` is the projection of `u u_x` onto `omega_j`. The linear part
//! is advanced with Crank-Nicolson, the nonlinear part with second-order
//! Adams-Bashforth (a Heun step starts the scheme). Both are confined to
//! the constrained subspace through the saddle-point solve of
//! [`DerivativeOperators::implicit_system`].
//!
//! The nonlinear term uses the skew-symmetric split
//! `u u_x = (u u_x + (u^2)_x) / 3`, for which `sum_j <g_j, N_j>_H = 0`
//! holds exactly on the grid.

use ndarray::{Array2, ArrayView2, Axis, Zip};
use rayon::prelude::*;

use crate::basis::TransverseBasis;
use crate::config::{derive_params, SolverConfig};
use crate::diagnostics::{DiagContext, EnergyLedger};
use crate::error::{Error, Result};
use crate::grid::{build_grid, ConstrainedSystem, DerivativeOperators, HalfLineGrid};

/// Largest admissible `max|u| dt / h` for the explicit nonlinear term.
pub const COURANT_LIMIT: f64 = 0.5;

#[derive(Clone, Debug, PartialEq)]
pub struct ModeField {
    pub t: f64,
    /// `N x nx`; row `j` is `g_{j+1}` on the grid.
    pub g: Array2<f64>,
}

impl ModeField {
    pub fn zeros(n_modes: usize, nx: usize) -> Self {
        ModeField { t: 0.0, g: Array2::zeros((n_modes, nx)) }
    }

    pub fn is_finite(&self) -> bool {
        self.g.iter().all(|v| v.is_finite())
    }

    pub fn n_modes(&self) -> usize {
        self.g.nrows()
    }
}

/// `N_j = (sum a_{lmj} g_l D g_m + D sum a_{lmj} g_l g_m) / 3` for every mode.
pub fn nonlinear_tendency(g: ArrayView2<f64>, basis: &TransverseBasis, ops: &DerivativeOperators) -> Array2<f64> {
    let (n, nx) = g.dim();
    let mut dg = Array2::zeros((n, nx));
    Zip::from(dg.rows_mut()).and(g.rows()).par_for_each(|mut d, row| {
        ops.apply(1, row.as_slice().unwrap(), d.as_slice_mut().unwrap());
    });
    let mut out = Array2::zeros((n, nx));
    let tensor = basis.coupling();
    out.axis_iter_mut(Axis(0)).into_par_iter().enumerate().for_each(|(j, mut row)| {
        let mut prod = vec![0.0; nx];
        let mut adv = vec![0.0; nx];
        for term in tensor.terms_for(j) {
            let gl = g.row(term.l);
            let gm = g.row(term.m);
            let dm = dg.row(term.m);
            let a = term.value;
            for i in 0..nx {
                prod[i] += a * gl[i] * gm[i];
                adv[i] += a * gl[i] * dm[i];
            }
        }
        let out_row = row.as_slice_mut().unwrap();
        ops.apply(1, &prod, out_row);
        for i in 0..nx {
            out_row[i] = (out_row[i] + adv[i]) / 3.0;
        }
    });
    out
}

/// `sum_{l,m} a_{lmj} g_l g_m` for every mode, used for the cubic integral.
pub fn quadratic_products(g: ArrayView2<f64>, basis: &TransverseBasis) -> Array2<f64> {
    let (n, nx) = g.dim();
    let mut out = Array2::zeros((n, nx));
    for (j, mut row) in out.outer_iter_mut().enumerate() {
        for term in basis.coupling().terms_for(j) {
            let (gl, gm) = (g.row(term.l), g.row(term.m));
            for i in 0..nx {
                row[i] += term.value * gl[i] * gm[i];
            }
        }
    }
    out
}

/// Everything that stays fixed during a run.
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: SolverConfig,
    pub basis: TransverseBasis,
    pub grid: HalfLineGrid,
    pub ops: DerivativeOperators,
}

impl Model {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = TransverseBasis::new(cfg.width, cfg.n_modes)?;
        let grid = build_grid(cfg)?;
        let ops = DerivativeOperators::new(&grid, cfg.order)?;
        Ok(Model { cfg: cfg.clone(), basis, grid, ops })
    }

    /// Shift `lambda_j - alpha` multiplying `D` in `Lambda_j` (0-based `j`).
    pub fn shift(&self, j: usize) -> f64 {
        self.basis.lambda[j] - self.cfg.alpha as f64
    }

    /// Tendency `Lambda_j g_j - N_j(g)` before projection onto the
    /// boundary constraints.
    pub fn rhs(&self, state: &ModeField) -> Array2<f64> {
        let nx = self.grid.len();
        let mut out = if self.cfg.nonlinear {
            -nonlinear_tendency(state.g.view(), &self.basis, &self.ops)
        } else {
            Array2::zeros(state.g.raw_dim())
        };
        Zip::indexed(out.rows_mut()).and(state.g.rows()).par_for_each(|j, mut o, g| {
            let mut lin = vec![0.0; nx];
            let mut scratch = vec![0.0; nx];
            self.ops.apply_linear(self.shift(j), &self.grid.sponge, g.as_slice().unwrap(), &mut lin, &mut scratch);
            for (a, b) in o.iter_mut().zip(&lin) {
                *a += b;
            }
        });
        out
    }

    /// `max |u|` bound `sqrt(2/L) max_x sum_j |g_j(x)|`.
    pub fn sup_bound(&self, g: ArrayView2<f64>) -> f64 {
        let mut s = vec![0.0; self.grid.len()];
        for row in g.outer_iter() {
            for (a, v) in s.iter_mut().zip(row) {
                *a += v.abs();
            }
        }
        self.basis.norm_const * s.iter().fold(0.0f64, |a, &v| a.max(v))
    }
}

/// Factorized implicit operators for one `dt`, plus the Adams-Bashforth history.
pub struct StepperState {
    pub dt: f64,
    systems: Vec<ConstrainedSystem>,
    prev_explicit: Option<Array2<f64>>,
}

impl StepperState {
    pub fn new(model: &Model, dt: f64) -> Result<Self> {
        let systems = (0..model.basis.n_modes())
            .into_par_iter()
            .map(|j| {
                model
                    .ops
                    .implicit_system(model.shift(j), &model.grid.sponge, 0.5 * dt)
                    .map_err(|p| Error::SingularSystem { mode: j + 1, row: p.row, pivot: p.pivot })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(StepperState { dt, systems, prev_explicit: None })
    }

    /// Forgets the multistep history (the next step restarts with Heun).
    pub fn reset(&mut self) {
        self.prev_explicit = None;
    }
}

/// Explicit forcing added to the tendency, `f(t, out)` with `out` zeroed.
pub type Forcing<'a> = &'a (dyn Fn(f64, &mut Array2<f64>) + Sync);

fn explicit_part(model: &Model, g: ArrayView2<f64>, t: f64, forcing: Option<Forcing>) -> Array2<f64> {
    let mut e = if model.cfg.nonlinear {
        -nonlinear_tendency(g, &model.basis, &model.ops)
    } else {
        Array2::zeros(g.raw_dim())
    };
    if let Some(f) = forcing {
        let mut extra = Array2::zeros(g.raw_dim());
        f(t, &mut extra);
        e += &extra;
    }
    e
}

/// Solves `(I - dt/2 Lambda) g_new = g + dt/2 Lambda g + dt e` on the constraints.
fn implicit_solve(model: &Model, stepper: &StepperState, g: ArrayView2<f64>, e: ArrayView2<f64>) -> Array2<f64> {
    let nx = model.grid.len();
    let dt = stepper.dt;
    let mut out = Array2::zeros(g.raw_dim());
    Zip::indexed(out.rows_mut()).and(g.rows()).and(e.rows()).par_for_each(|j, mut o, gj, ej| {
        let gj = gj.as_slice().unwrap();
        let mut rhs = vec![0.0; nx];
        let mut scratch = vec![0.0; nx];
        model.ops.apply_linear(model.shift(j), &model.grid.sponge, gj, &mut rhs, &mut scratch);
        for i in 0..nx {
            rhs[i] = gj[i] + 0.5 * dt * rhs[i] + dt * ej[i];
        }
        let mut work = Vec::new();
        stepper.systems[j].solve(&rhs, o.as_slice_mut().unwrap(), &mut work);
    });
    out
}

/// One IMEX step. Fails on the explicit stability guard or non-finite values.
pub fn step(model: &Model, state: &ModeField, stepper: &mut StepperState) -> Result<ModeField> {
    step_forced(model, state, stepper, None)
}

pub fn step_forced(model: &Model, state: &ModeField, stepper: &mut StepperState, forcing: Option<Forcing>) -> Result<ModeField> {
    let dt = stepper.dt;
    let t = state.t;
    if model.cfg.nonlinear {
        let courant = model.sup_bound(state.g.view()) * dt / model.grid.h;
        if courant > COURANT_LIMIT {
            return Err(Error::Courant { t, courant, limit: COURANT_LIMIT });
        }
    }
    let e_now = explicit_part(model, state.g.view(), t, forcing);
    let g_new = match stepper.prev_explicit.take() {
        Some(e_prev) => {
            let e = 1.5 * &e_now - 0.5 * &e_prev;
            implicit_solve(model, stepper, state.g.view(), e.view())
        }
        None => {
            let pred = implicit_solve(model, stepper, state.g.view(), e_now.view());
            let e_pred = explicit_part(model, pred.view(), t + dt, forcing);
            let e = 0.5 * (&e_now + &e_pred);
            implicit_solve(model, stepper, state.g.view(), e.view())
        }
    };
    stepper.prev_explicit = Some(e_now);
    let next = ModeField { t: t + dt, g: g_new };
    if !next.is_finite() {
        return Err(Error::BlowUp { t: next.t, reason: "non-finite modal values".into() });
    }
    Ok(next)
}

/// Outcome of [`Simulation::run`]; `abort` holds the failure of a run that
/// stopped early, with the ledger covering the samples taken before it.
#[derive(Debug)]
pub struct RunReport {
    pub ledger: EnergyLedger,
    pub final_state: ModeField,
    pub abort: Option<Error>,
}

impl RunReport {
    pub fn into_result(self) -> Result<(EnergyLedger, ModeField)> {
        match self.abort {
            Some(e) => Err(e),
            None => Ok((self.ledger, self.final_state)),
        }
    }
}

/// A configured model ready to integrate.
pub struct Simulation {
    pub model: Model,
    /// Decay rate used for the ledger's bound ratio, when certified.
    pub chi: Option<f64>,
}

impl Simulation {
    pub fn new(cfg: &SolverConfig) -> Result<Self> {
        let model = Model::new(cfg)?;
        let chi = derive_params(cfg)?.chi();
        Ok(Simulation { model, chi })
    }

    pub fn run(&self, u0: &ModeField) -> Result<RunReport> {
        self.run_observed(u0, None, &mut |_| {})
    }

    /// Integrates to `t_final`, sampling diagnostics every `diag_stride`
    /// steps and at the end. `observer` sees every state, including the
    /// initial one.
    pub fn run_observed(&self, u0: &ModeField, forcing: Option<Forcing>, observer: &mut dyn FnMut(&ModeField)) -> Result<RunReport> {
        let model = &self.model;
        let cfg = &model.cfg;
        if u0.g.dim() != (model.basis.n_modes(), model.grid.len()) {
            return Err(Error::Config(format!(
                "initial field is {:?}, model expects ({}, {})",
                u0.g.dim(),
                model.basis.n_modes(),
                model.grid.len()
            )));
        }
        let mut stepper = StepperState::new(model, cfg.dt)?;
        let ctx = DiagContext::new(model, self.chi);
        let mut ledger = EnergyLedger::new();
        let mut acc = ctx.accumulator(u0);
        ledger.push(ctx.sample(u0, &acc, None));
        observer(u0);
        let n_steps = cfg.n_steps();
        let cap = cfg.blowup_factor * acc.l2_initial;
        let mut state = u0.clone();
        for n in 1..=n_steps {
            let next = match step_forced(model, &state, &mut stepper, forcing) {
                Ok(s) => s,
                Err(e) => return Ok(RunReport { ledger, final_state: state, abort: Some(e) }),
            };
            let next = ModeField { t: n as f64 * cfg.dt, g: next.g };
            acc.advance(&ctx, &next, cfg.dt);
            if acc.l2_initial > 0.0 && acc.l2_current > cap {
                let reason = format!(
                    "||u||^2 = {:.3e} exceeds {} x ||u0||^2 = {:.3e}",
                    acc.l2_current, cfg.blowup_factor, cap
                );
                ledger.push(ctx.sample(&next, &acc, Some(&state)));
                return Ok(RunReport { ledger, final_state: next.clone(), abort: Some(Error::BlowUp { t: next.t, reason }) });
            }
            observer(&next);
            if n % cfg.diag_stride == 0 || n == n_steps {
                ledger.push(ctx.sample(&next, &acc, Some(&state)));
            }
            state = next;
        }
        Ok(RunReport { ledger, final_state: state, abort: None })
    }
}
