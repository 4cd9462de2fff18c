//! Independent reference computations for tests.
//!
//! * adaptive Gauss-Kronrod quadrature and the coupling integrals;
//! * closed-form derivatives of `x^p exp(-((x - c)/w)^2)`;
//! * exact-in-time propagation of a linear mode with a dense matrix
//!   exponential;
//! * a direct 2D finite-difference solver on the truncated strip: second-order
//!   SBP differences in x and the second-order central Laplacian in y, solved
//!   by diagonalizing the y-Laplacian with discrete sine vectors.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{DerivativeOperators, HalfLineGrid};

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Gauss weights for `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let s = f(c - h * XGK[i]) + f(c + h * XGK[i]);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

fn adapt(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (k, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return k;
    }
    let m = 0.5 * (a + b);
    adapt(f, a, m, 0.5 * tol, depth - 1) + adapt(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive 7-15 Gauss-Kronrod quadrature of `f` over `[a, b]` to absolute
/// tolerance `tol`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adapt(&f, a, b, tol, 40)
}

/// `int_0^L omega_k omega_l omega_j dy` by quadrature (1-based indices).
pub fn quad_coupling(k: usize, l: usize, j: usize, width: f64) -> f64 {
    let c = (2.0 / width).powf(1.5);
    let w = std::f64::consts::PI / width;
    let f = |y: f64| c * (k as f64 * w * y).sin() * (l as f64 * w * y).sin() * (j as f64 * w * y).sin();
    // one panel per half-period of the fastest factor keeps each piece smooth
    let panels = k + l + j;
    let tol = 1e-13 / panels as f64;
    (0..panels)
        .map(|p| integrate(f, width * p as f64 / panels as f64, width * (p + 1) as f64 / panels as f64, tol))
        .sum()
}

/// `amp x^p exp(-((x - c) / w)^2)` with exact derivatives of any order.
#[derive(Clone, Copy, Debug)]
pub struct PolyGaussian {
    pub p: u32,
    pub center: f64,
    pub width: f64,
    pub amp: f64,
}

fn hermite(n: u32, s: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, 2.0 * s);
    if n == 0 {
        return h0;
    }
    for k in 1..n {
        let h2 = 2.0 * s * h1 - 2.0 * k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl PolyGaussian {
    pub fn new(p: u32, center: f64, width: f64) -> Self {
        PolyGaussian { p, center, width, amp: 1.0 }
    }

    pub fn scaled(self, amp: f64) -> Self {
        PolyGaussian { amp, ..self }
    }

    /// `d^n f / dx^n` at `x`, by Leibniz' rule with Hermite polynomials.
    pub fn derivative(&self, n: u32, x: f64) -> f64 {
        let s = (x - self.center) / self.width;
        let e = (-s * s).exp();
        let mut sum = 0.0;
        for i in 0..=n.min(self.p) {
            let falling: f64 = (0..i).map(|q| (self.p - q) as f64).product();
            let poly = falling * x.powi((self.p - i) as i32);
            let m = n - i;
            let gauss = if m % 2 == 0 { 1.0 } else { -1.0 } * hermite(m, s) * e / self.width.powi(m as i32);
            sum += binomial(n, i) * poly * gauss;
        }
        self.amp * sum
    }
}

/// Dense `P Lambda` with `Lambda = D^5 - D^3 + shift D - sponge` and `P` the
/// constraint projection.
pub fn projected_linear_matrix(ops: &DerivativeOperators, shift: f64, sponge: &[f64]) -> DMatrix<f64> {
    let n = ops.len();
    let mut a = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    let mut col = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for i in 0..n {
        e[i] = 1.0;
        ops.apply_linear(shift, sponge, &e, &mut col, &mut scratch);
        ops.project(&mut col);
        for (r, v) in col.iter().enumerate() {
            a[(r, i)] = *v;
        }
        e[i] = 0.0;
    }
    a
}

/// `exp(t P Lambda) g0` for a single linear mode on at most 256 points.
pub fn linear_expm_reference(ops: &DerivativeOperators, shift: f64, sponge: &[f64], g0: &[f64], t: f64) -> Result<Vec<f64>> {
    let n = ops.len();
    if n > 256 {
        return Err(Error::Oracle(format!("dense propagator limited to 256 points, got {n}")));
    }
    if t == 0.0 {
        return Ok(g0.to_vec());
    }
    let a = projected_linear_matrix(ops, shift, sponge) * t;
    let e = a.exp();
    if e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Oracle("matrix exponential overflowed".into()));
    }
    let out = e * DVector::from_column_slice(g0);
    Ok(out.iter().copied().collect())
}

/// Parameters of the finite-difference reference solver.
#[derive(Clone, Debug, PartialEq)]
pub struct FdConfig {
    pub alpha: f64,
    pub width: f64,
    pub x_max: f64,
    pub nx: usize,
    /// y-points including both walls.
    pub ny: usize,
    pub dt: f64,
    pub t_final: f64,
    pub nonlinear: bool,
    pub sponge_width: f64,
    pub sponge_strength: f64,
    pub blowup_factor: f64,
}

/// Field on the tensor grid; rows are x, columns y (walls included).
#[derive(Clone, Debug)]
pub struct Oracle2DField {
    pub t: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: Array2<f64>,
}

/// Physical-space forcing `f(t, x, y, out)`, `out` is `nx x ny`.
pub type FdForcing<'a> = &'a dyn Fn(f64, &[f64], &[f64], &mut Array2<f64>);

struct FdSolver<'a> {
    cfg: &'a FdConfig,
    grid: HalfLineGrid,
    ops: DerivativeOperators,
    y: Vec<f64>,
    /// `sin(pi (r+1)(m+1) / (ny-1))`, symmetric.
    sines: Vec<Vec<f64>>,
    /// Eigenvalues of `-d_yy` (central differences).
    mu: Vec<f64>,
}

impl FdSolver<'_> {
    fn interior(&self) -> usize {
        self.cfg.ny - 2
    }

    /// Coefficients (`M x nx`) to physical field (`nx x ny`).
    fn to_physical(&self, v: &Array2<f64>) -> Array2<f64> {
        let (nx, ny, m) = (self.grid.len(), self.cfg.ny, self.interior());
        let mut u = Array2::zeros((nx, ny));
        for k in 0..m {
            for r in 0..m {
                let s = self.sines[k][r];
                for i in 1..nx {
                    u[(i, k + 1)] += s * v[(r, i)];
                }
            }
        }
        u
    }

    /// Physical field (interior columns) to coefficients.
    fn to_coeffs(&self, u: &Array2<f64>) -> Array2<f64> {
        let (nx, m) = (self.grid.len(), self.interior());
        let scale = 2.0 / (self.cfg.ny - 1) as f64;
        let mut v = Array2::zeros((m, nx));
        for r in 0..m {
            for k in 0..m {
                let s = scale * self.sines[k][r];
                for i in 0..nx {
                    v[(r, i)] += s * u[(i, k + 1)];
                }
            }
        }
        v
    }

    fn explicit(&self, v: &Array2<f64>, t: f64, forcing: Option<FdForcing>) -> Array2<f64> {
        let (nx, ny) = (self.grid.len(), self.cfg.ny);
        let mut f = Array2::zeros((nx, ny));
        if self.cfg.nonlinear {
            let u = self.to_physical(v);
            let mut col = vec![0.0; nx];
            let mut sq = vec![0.0; nx];
            let mut du = vec![0.0; nx];
            let mut dsq = vec![0.0; nx];
            for k in 1..ny - 1 {
                for i in 0..nx {
                    col[i] = u[(i, k)];
                    sq[i] = col[i] * col[i];
                }
                self.ops.apply(1, &col, &mut du);
                self.ops.apply(1, &sq, &mut dsq);
                for i in 0..nx {
                    f[(i, k)] = -(col[i] * du[i] + dsq[i]) / 3.0;
                }
            }
        }
        if let Some(force) = forcing {
            let mut extra = Array2::zeros((nx, ny));
            force(t, &self.grid.x, &self.y, &mut extra);
            f += &extra;
        }
        self.to_coeffs(&f)
    }

    fn norm_sq(&self, v: &Array2<f64>) -> f64 {
        // Parseval for the discrete sine vectors: sum_m h_y |u_m|^2 = L/2 sum_r |v_r|^2
        let half = 0.5 * self.cfg.width;
        v.outer_iter().map(|r| half * self.grid.inner(r.as_slice().unwrap(), r.as_slice().unwrap())).sum()
    }
}

/// Runs the reference solver from the physical datum `u0` (`nx x ny`) and
/// returns the fields at the requested `save_times` (each within half a
/// step of a time level).
pub fn solve_2d_fd(cfg: &FdConfig, u0: &Array2<f64>, forcing: Option<FdForcing>, save_times: &[f64]) -> Result<Vec<Oracle2DField>> {
    if cfg.nx > 1024 || cfg.ny > 256 {
        return Err(Error::Oracle(format!("grid {}x{} too large for the reference solver", cfg.nx, cfg.ny)));
    }
    if cfg.ny < 4 {
        return Err(Error::Oracle("need at least two interior y-points".into()));
    }
    if u0.dim() != (cfg.nx, cfg.ny) {
        return Err(Error::Oracle(format!("datum is {:?}, grid is ({}, {})", u0.dim(), cfg.nx, cfg.ny)));
    }
    if let Some(&t) = save_times.iter().find(|&&t| t > cfg.t_final + 0.5 * cfg.dt || t < 0.0) {
        return Err(Error::Oracle(format!("save time {t} outside [0, {}]", cfg.t_final)));
    }
    let grid = HalfLineGrid::new(cfg.x_max, cfg.nx, 0.0, cfg.sponge_width, cfg.sponge_strength, 2, false)?;
    let ops = DerivativeOperators::with_order(cfg.nx, grid.h, 2)?;
    let ny = cfg.ny;
    let hy = cfg.width / (ny - 1) as f64;
    let y: Vec<f64> = (0..ny).map(|k| if k + 1 == ny { cfg.width } else { k as f64 * hy }).collect();
    let m = ny - 2;
    let sines: Vec<Vec<f64>> = (0..m)
        .map(|k| (0..m).map(|r| (std::f64::consts::PI * ((r + 1) * (k + 1)) as f64 / (ny - 1) as f64).sin()).collect())
        .collect();
    let mu: Vec<f64> = (0..m)
        .map(|r| 4.0 / (hy * hy) * (std::f64::consts::PI * (r + 1) as f64 / (2.0 * (ny - 1) as f64)).sin().powi(2))
        .collect();
    let solver = FdSolver { cfg, grid, ops, y, sines, mu };

    let mut v = solver.to_coeffs(u0);
    for mut row in v.outer_iter_mut() {
        solver.ops.project(row.as_slice_mut().unwrap());
    }
    let nx = cfg.nx;
    let systems = (0..m)
        .map(|r| {
            solver
                .ops
                .implicit_system(solver.mu[r] - cfg.alpha, &solver.grid.sponge, 0.5 * cfg.dt)
                .map_err(|p| Error::SingularSystem { mode: r + 1, row: p.row, pivot: p.pivot })
        })
        .collect::<Result<Vec<_>>>()?;

    let n_steps = (cfg.t_final / cfg.dt).round() as usize;
    let norm0 = solver.norm_sq(&v);
    let mut out = Vec::new();
    let save = |v: &Array2<f64>, t: f64, out: &mut Vec<Oracle2DField>| {
        for &ts in save_times {
            if (ts - t).abs() <= 0.5 * cfg.dt {
                let mut u = solver.to_physical(v);
                u.row_mut(0).fill(0.0);
                out.push(Oracle2DField { t, x: solver.grid.x.clone(), y: solver.y.clone(), u });
            }
        }
    };
    save(&v, 0.0, &mut out);
    let mut prev: Option<Array2<f64>> = None;
    let mut rhs = vec![0.0; nx];
    let mut lin = vec![0.0; nx];
    let mut scratch = vec![0.0; nx];
    let mut work = Vec::new();
    let solve = |v: &Array2<f64>, e: &Array2<f64>, rhs: &mut Vec<f64>, lin: &mut Vec<f64>, scratch: &mut Vec<f64>, work: &mut Vec<f64>| {
        let mut next = Array2::zeros((m, nx));
        for r in 0..m {
            let vr = v.row(r);
            let vr = vr.as_slice().unwrap();
            solver.ops.apply_linear(solver.mu[r] - cfg.alpha, &solver.grid.sponge, vr, lin, scratch);
            for i in 0..nx {
                rhs[i] = vr[i] + 0.5 * cfg.dt * lin[i] + cfg.dt * e[(r, i)];
            }
            systems[r].solve(rhs, next.row_mut(r).as_slice_mut().unwrap(), work);
        }
        next
    };
    for n in 0..n_steps {
        let t = n as f64 * cfg.dt;
        let e_now = solver.explicit(&v, t, forcing);
        let next = match prev.take() {
            Some(e_prev) => {
                let e = 1.5 * &e_now - 0.5 * &e_prev;
                solve(&v, &e, &mut rhs, &mut lin, &mut scratch, &mut work)
            }
            None => {
                let pred = solve(&v, &e_now, &mut rhs, &mut lin, &mut scratch, &mut work);
                let e = 0.5 * (&e_now + &solver.explicit(&pred, t + cfg.dt, forcing));
                solve(&v, &e, &mut rhs, &mut lin, &mut scratch, &mut work)
            }
        };
        prev = Some(e_now);
        v = next;
        let t_new = (n + 1) as f64 * cfg.dt;
        let norm = solver.norm_sq(&v);
        if !norm.is_finite() || (norm0 > 0.0 && norm > cfg.blowup_factor * norm0) {
            return Err(Error::BlowUp { t: t_new, reason: format!("reference solver norm {norm:e}") });
        }
        save(&v, t_new, &mut out);
    }
    Ok(out)
}

/// Discrete L2 norm of a tensor-grid field (SBP weights in x, trapezoid in y).
pub fn field_norm(u: &Array2<f64>, x_quad: &[f64], width: f64) -> f64 {
    let ny = u.ncols();
    let hy = width / (ny - 1) as f64;
    let mut s = 0.0;
    for (i, row) in u.outer_iter().enumerate() {
        let mut r = 0.0;
        for (k, v) in row.iter().enumerate() {
            let w = if k == 0 || k + 1 == ny { 0.5 * hy } else { hy };
            r += w * v * v;
        }
        s += x_quad[i] * r;
    }
    s.sqrt()
}
