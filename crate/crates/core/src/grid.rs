//! Truncated half-line grid, summation-by-parts derivative operators and
//! weighted quadrature.
//!
//! The x-derivatives are powers `D^m` of one diagonal-norm SBP first
//! derivative `D = H^{-1} Q`, `Q + Q^T = diag(-1, 0, .., 0, 1)`. Interior rows
//! are central stencils; the boundary blocks are the classical 4-2 and 6-3
//! closures. Boundary conditions are not built into `D`: they are imposed as
//! linear constraints `C g = 0`,
//!
//! ```text
//! x = 0     : g = 0, (D g) = 0
//! x = x_max : g = 0, (D g) = 0, (D^2 g) = 0
//! ```
//!
//! and the dynamics is projected H-orthogonally onto the constrained subspace.
//! Summation by parts then gives, for every constrained `g`,
//! `<g, (D^5 - D^3 + c D) g>_H = -(D^2 g)_0^2 / 2`: the discrete operator
//! loses energy only through the left boundary trace.

use nalgebra::{DMatrix, DVector};

use crate::banded::{BandLu, BandMatrix};
use crate::config::SolverConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct HalfLineGrid {
    /// `x_i = i h`, `i = 0..nx`.
    pub x: Vec<f64>,
    pub h: f64,
    /// Sponge damping `sigma(x) >= 0`, zero left of `x_max - sponge_width`.
    pub sponge: Vec<f64>,
    /// `e^{k x_i}`.
    pub weight: Vec<f64>,
    /// Quadrature weights (the SBP norm) for the configured operator order.
    pub quad: Vec<f64>,
    /// Weighted norms sum over `i < norm_end`.
    pub norm_end: usize,
    pub k: f64,
    pub order: usize,
}

/// C^2 ramp from 0 to 1 on `[0, 1]`.
fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * s * (10.0 - 15.0 * s + 6.0 * s * s)
}

impl HalfLineGrid {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        x_max: f64,
        nx: usize,
        k: f64,
        sponge_width: f64,
        sponge_strength: f64,
        order: usize,
        exclude_sponge: bool,
    ) -> Result<Self> {
        if nx < 32 {
            return Err(Error::Grid(format!("nx = {nx} is below the minimum of 32")));
        }
        if !(x_max > 0.0) {
            return Err(Error::Grid(format!("x_max must be positive, got {x_max}")));
        }
        let h = x_max / (nx - 1) as f64;
        let x: Vec<f64> = (0..nx).map(|i| if i + 1 == nx { x_max } else { i as f64 * h }).collect();
        let start = x_max - sponge_width;
        let sponge = x
            .iter()
            .map(|&v| if sponge_width > 0.0 && v > start { sponge_strength * smoothstep((v - start) / sponge_width) } else { 0.0 })
            .collect();
        let weight = x.iter().map(|&v| (k * v).exp()).collect();
        let quad = sbp_norm(order, nx, h)?;
        let norm_end = if exclude_sponge && sponge_width > 0.0 {
            x.iter().position(|&v| v > start).unwrap_or(nx)
        } else {
            nx
        };
        Ok(HalfLineGrid { x, h, sponge, weight, quad, norm_end, k, order })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_max(&self) -> f64 {
        *self.x.last().unwrap()
    }

    /// `int_0^{x_max} f g dx` over the full grid.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.quad.iter().zip(f).zip(g).map(|((q, a), b)| q * (a * b)).sum()
    }

    /// `int e^{kx} f g dx` over the norm region (sponge excluded when configured).
    pub fn weighted_inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weighted_inner_to(f, g, self.norm_end)
    }

    /// `int e^{kx} f g dx` over the whole truncated half-line.
    pub fn weighted_inner_full(&self, f: &[f64], g: &[f64]) -> f64 {
        self.weighted_inner_to(f, g, self.len())
    }

    fn weighted_inner_to(&self, f: &[f64], g: &[f64], end: usize) -> f64 {
        let mut s = 0.0;
        for i in 0..end {
            s += (self.quad[i] * self.weight[i]) * (f[i] * g[i]);
        }
        s
    }
}

pub fn build_grid(cfg: &SolverConfig) -> Result<HalfLineGrid> {
    HalfLineGrid::new(
        cfg.x_max,
        cfg.nx,
        cfg.weight_exponent,
        cfg.sponge_width,
        cfg.sponge_strength,
        cfg.order,
        cfg.exclude_sponge,
    )
}

/// Free function form of [`HalfLineGrid::weighted_inner`].
pub fn weighted_inner(f: &[f64], g: &[f64], grid: &HalfLineGrid) -> f64 {
    grid.weighted_inner(f, g)
}

struct SbpClosure {
    norm: &'static [f64],
    /// Boundary rows of `h D`.
    rows: Vec<Vec<f64>>,
    /// Right half of the antisymmetric interior stencil of `h D`.
    stencil: &'static [f64],
}

// 6-3 closure: entries of Q (= h H D) with the free parameter set to 0.70127127127127.
const Q63: [[f64; 9]; 6] = [
    [-0.5, 0.6424441107774428, -0.04471085669001827, -0.14230292792793556, 0.033012908742080495, 0.011556765098430493, 0.0, 0.0, 0.0],
    [-0.6424441107774428, 0.0, 0.3994025275275148, 0.35985621037706916, -0.09609296796798704, -0.020721659159154075, 0.0, 0.0, 0.0],
    [0.04471085669001827, -0.3994025275275148, 0.0, 0.38044085752416545, -0.01437218468465926, -0.01137700200200963, 0.0, 0.0, 0.0],
    [0.14230292792793556, -0.35985621037706916, -0.38044085752416545, 0.0, 0.6453901818485025, -0.06406270854187013, 1.0 / 60.0, 0.0, 0.0],
    [-0.033012908742080495, 0.09609296796798704, 0.01437218468465926, -0.6453901818485025, 0.0, 0.70127127127127, -0.15, 1.0 / 60.0, 0.0],
    [-0.011556765098430493, 0.020721659159154075, 0.01137700200200963, 0.06406270854187013, -0.70127127127127, 0.0, 0.75, -0.15, 1.0 / 60.0],
];

const NORM2: [f64; 1] = [0.5];
const NORM4: [f64; 4] = [17.0 / 48.0, 59.0 / 48.0, 43.0 / 48.0, 49.0 / 48.0];
const NORM6: [f64; 6] = [
    13649.0 / 43200.0,
    12013.0 / 8640.0,
    2711.0 / 4320.0,
    5359.0 / 4320.0,
    7877.0 / 8640.0,
    43801.0 / 43200.0,
];

fn closure(order: usize) -> Result<SbpClosure> {
    match order {
        2 => Ok(SbpClosure { norm: &NORM2, rows: vec![vec![-1.0, 1.0]], stencil: &[0.5] }),
        4 => Ok(SbpClosure {
            norm: &NORM4,
            rows: vec![
                vec![-24.0 / 17.0, 59.0 / 34.0, -4.0 / 17.0, -3.0 / 34.0, 0.0, 0.0],
                vec![-0.5, 0.0, 0.5, 0.0, 0.0, 0.0],
                vec![4.0 / 43.0, -59.0 / 86.0, 0.0, 59.0 / 86.0, -4.0 / 43.0, 0.0],
                vec![3.0 / 98.0, 0.0, -59.0 / 98.0, 0.0, 32.0 / 49.0, -4.0 / 49.0],
            ],
            stencil: &[2.0 / 3.0, -1.0 / 12.0],
        }),
        6 => Ok(SbpClosure {
            norm: &NORM6,
            rows: Q63.iter().zip(NORM6.iter()).map(|(r, w)| r.iter().map(|q| q / w).collect()).collect(),
            stencil: &[0.75, -0.15, 1.0 / 60.0],
        }),
        _ => Err(Error::Grid(format!("interior order must be 4 or 6, got {order}"))),
    }
}

/// Diagonal SBP norm (quadrature weights) of the given order.
pub fn sbp_norm(order: usize, n: usize, h: f64) -> Result<Vec<f64>> {
    let c = closure(order)?;
    let b = c.norm.len();
    if n < 2 * b + 2 {
        return Err(Error::Grid(format!("{n} points cannot hold two order-{order} closures")));
    }
    let mut w = vec![h; n];
    for (i, &v) in c.norm.iter().enumerate() {
        w[i] = v * h;
        w[n - 1 - i] = v * h;
    }
    Ok(w)
}

/// SBP first-derivative operator of the given interior order (2, 4 or 6).
pub fn sbp_first_derivative(order: usize, n: usize, h: f64) -> Result<BandMatrix> {
    let c = closure(order)?;
    let b = c.rows.len();
    let width = c.rows[0].len();
    if n < 2 * width + 2 {
        return Err(Error::Grid(format!("{n} points cannot hold two order-{order} closures")));
    }
    let r = c.stencil.len();
    let mut t = Vec::new();
    for (i, row) in c.rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 {
                t.push((i, j, v / h));
                t.push((n - 1 - i, n - 1 - j, -v / h));
            }
        }
    }
    for i in b..n - b {
        for (s, &v) in c.stencil.iter().enumerate() {
            t.push((i, i + s + 1, v / h));
            t.push((i, i - s - 1, -v / h));
        }
    }
    debug_assert!(r <= b);
    Ok(BandMatrix::from_triplets(n, &t))
}

/// Sparse row of the constraint matrix.
type SparseRow = Vec<(usize, f64)>;

/// Derivative operators `D^1 .. D^5` plus the boundary constraints and the
/// H-orthogonal projection onto the constrained subspace.
#[derive(Clone, Debug)]
pub struct DerivativeOperators {
    pub order: usize,
    n: usize,
    d: Vec<BandMatrix>,
    quad: Vec<f64>,
    /// Two left rows, then three right rows, each scaled to unit max-norm.
    constraints: Vec<SparseRow>,
    /// `(C H^{-1} C^T)^{-1}`.
    gram_inv: DMatrix<f64>,
}

pub const LEFT_CONSTRAINTS: usize = 2;
pub const RIGHT_CONSTRAINTS: usize = 3;

fn sparse_row(m: &BandMatrix, i: usize) -> SparseRow {
    let row: SparseRow = m.row(i).filter(|&(_, v)| v != 0.0).collect();
    let s = row.iter().fold(0.0f64, |a, &(_, v)| a.max(v.abs()));
    row.into_iter().map(|(j, v)| (j, v / s)).collect()
}

impl DerivativeOperators {
    /// Operators of interior order 4 or 6 on `grid`.
    pub fn new(grid: &HalfLineGrid, interior_order: usize) -> Result<Self> {
        if interior_order != 4 && interior_order != 6 {
            return Err(Error::Grid(format!("interior order must be 4 or 6, got {interior_order}")));
        }
        Self::with_order(grid.len(), grid.h, interior_order)
    }

    /// Any supported SBP order, including the second-order one.
    pub(crate) fn with_order(n: usize, h: f64, order: usize) -> Result<Self> {
        let d1 = sbp_first_derivative(order, n, h)?;
        let mut d = vec![d1.clone()];
        for _ in 1..5 {
            let next = d.last().unwrap().mul(&d1);
            d.push(next);
        }
        let quad = sbp_norm(order, n, h)?;
        let constraints = vec![
            vec![(0, 1.0)],
            sparse_row(&d[0], 0),
            vec![(n - 1, 1.0)],
            sparse_row(&d[0], n - 1),
            sparse_row(&d[1], n - 1),
        ];
        let nc = constraints.len();
        let mut gram = DMatrix::zeros(nc, nc);
        for a in 0..nc {
            for b in 0..nc {
                let mut s = 0.0;
                for &(i, va) in &constraints[a] {
                    if let Some(&(_, vb)) = constraints[b].iter().find(|&&(j, _)| j == i) {
                        s += va * vb / quad[i];
                    }
                }
                gram[(a, b)] = s;
            }
        }
        let gram_inv = gram
            .try_inverse()
            .ok_or_else(|| Error::Grid("boundary constraints are linearly dependent; grid too small".into()))?;
        Ok(DerivativeOperators { order, n, d, quad, constraints, gram_inv })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `D^m`, `m = 1..=5`.
    pub fn d(&self, m: usize) -> &BandMatrix {
        &self.d[m - 1]
    }

    pub fn apply(&self, m: usize, f: &[f64], out: &mut [f64]) {
        self.d[m - 1].matvec_into(f, out);
    }

    pub fn quad(&self) -> &[f64] {
        &self.quad
    }

    /// `(D^m f)` at `x = 0`.
    pub fn at_left(&self, m: usize, f: &[f64]) -> f64 {
        self.d[m - 1].row(0).map(|(j, v)| v * f[j]).sum()
    }

    /// Constraint residuals `C g` (unit-scaled rows).
    pub fn constraint_residual(&self, g: &[f64]) -> Vec<f64> {
        self.constraints.iter().map(|row| row.iter().map(|&(j, v)| v * g[j]).sum()).collect()
    }

    /// H-orthogonal projection onto `{C g = 0}`, in place.
    pub fn project(&self, g: &mut [f64]) {
        let r = DVector::from_vec(self.constraint_residual(g));
        let mu = &self.gram_inv * r;
        for (row, m) in self.constraints.iter().zip(mu.iter()) {
            for &(j, v) in row {
                g[j] -= v * m / self.quad[j];
            }
        }
    }

    /// Banded `D^5 - D^3 + shift D - diag(sponge)`.
    pub fn linear_operator(&self, shift: f64, sponge: &[f64]) -> BandMatrix {
        let m = self.d[4].combine(1.0, &self.d[2], -1.0).combine(1.0, &self.d[0], shift);
        m.combine(1.0, &BandMatrix::diagonal(sponge), -1.0)
    }

    /// `out = (D^5 - D^3 + shift D - sponge) g`, using `scratch` of length n.
    pub fn apply_linear(&self, shift: f64, sponge: &[f64], g: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.d[4].matvec_into(g, out);
        self.d[2].matvec_into(g, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o -= s;
        }
        self.d[0].matvec_into(g, scratch);
        for i in 0..self.n {
            out[i] += shift * scratch[i] - sponge[i] * g[i];
        }
    }

    /// Factorizes the constrained implicit system
    ///
    /// ```text
    /// (I - theta_dt Lambda) g + H^{-1} C^T mu = b,    C g = 0,
    /// ```
    ///
    /// with `Lambda = D^5 - D^3 + shift D - sponge`. The multipliers are
    /// ordered next to the boundary they act on, which keeps the system
    /// banded.
    pub fn implicit_system(&self, shift: f64, sponge: &[f64], theta_dt: f64) -> std::result::Result<ConstrainedSystem, crate::banded::SingularPivot> {
        let n = self.n;
        let lam = self.linear_operator(shift, sponge);
        let left = LEFT_CONSTRAINTS;
        let mut t = Vec::new();
        for i in 0..n {
            for (j, v) in lam.row(i) {
                let mut a = -theta_dt * v;
                if i == j {
                    a += 1.0;
                }
                if a != 0.0 {
                    t.push((i + left, j + left, a));
                }
            }
        }
        for (c, row) in self.constraints.iter().enumerate() {
            let slot = if c < left { c } else { n + c };
            let colscale = row.iter().fold(0.0f64, |a, &(j, v)| a.max((v / self.quad[j]).abs()));
            for &(j, v) in row {
                t.push((slot, j + left, v));
                t.push((j + left, slot, v / self.quad[j] / colscale));
            }
        }
        let m = BandMatrix::from_triplets(n + self.constraints.len(), &t);
        Ok(ConstrainedSystem { n, lu: m.lu()? })
    }
}

pub fn build_operators(grid: &HalfLineGrid, interior_order: usize) -> Result<DerivativeOperators> {
    DerivativeOperators::new(grid, interior_order)
}

/// Factorized constrained implicit system, see
/// [`DerivativeOperators::implicit_system`].
#[derive(Clone, Debug)]
pub struct ConstrainedSystem {
    n: usize,
    lu: BandLu,
}

impl ConstrainedSystem {
    /// Solves for `g` given `b`; `work` must have length `n + 5`.
    pub fn solve(&self, b: &[f64], g: &mut [f64], work: &mut Vec<f64>) {
        let left = LEFT_CONSTRAINTS;
        work.clear();
        work.resize(self.lu.dim(), 0.0);
        work[left..left + self.n].copy_from_slice(b);
        self.lu.solve_in_place(work);
        g.copy_from_slice(&work[left..left + self.n]);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::PolyGaussian;

    fn grid(x_max: f64, nx: usize, k: f64) -> HalfLineGrid {
        HalfLineGrid::new(x_max, nx, k, 0.0, 0.0, 4, true).unwrap()
    }

    #[test]
    fn grid_examples() {
        let g = grid(40.0, 2001, 0.3);
        assert!((g.h - 0.02).abs() < 1e-15);
        assert_eq!(g.x[0], 0.0);
        assert_eq!(g.x[2000], 40.0);
        assert!(g.sponge.iter().all(|&s| s == 0.0));
        assert_eq!(g.weight[0], 1.0);
        assert!((g.weight[2000] - 162754.791419).abs() < 1e-5);
        assert!(HalfLineGrid::new(1.0, 31, 0.1, 0.0, 0.0, 4, true).is_err());
    }

    #[test]
    fn sponge_is_smooth_and_monotone() {
        let g = HalfLineGrid::new(40.0, 801, 0.3, 8.0, 2.0, 4, true).unwrap();
        let start = g.x.iter().position(|&x| x > 32.0).unwrap();
        assert_eq!(g.norm_end, start);
        assert!(g.sponge[..start].iter().all(|&s| s == 0.0));
        for w in g.sponge.windows(2) {
            assert!(w[1] >= w[0]);
        }
        assert!((g.sponge[800] - 2.0).abs() < 1e-12);
        // second differences bounded by the continuum bound max|sigma''| h^2 = 2 * 5.78 / 64 * h^2
        let bound = 2.0 * 5.8 / 64.0 * g.h * g.h * 1.01;
        for w in g.sponge.windows(3) {
            assert!((w[2] - 2.0 * w[1] + w[0]).abs() <= bound);
        }
    }

    #[test]
    fn sbp_property_holds() {
        for order in [2, 4, 6] {
            let n = 40;
            let h = 0.1;
            let d = sbp_first_derivative(order, n, h).unwrap().to_dense();
            let w = sbp_norm(order, n, h).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let q = w[i] * d[i][j] + w[j] * d[j][i];
                    let b = if i == j && i == 0 {
                        -1.0
                    } else if i == j && i == n - 1 {
                        1.0
                    } else {
                        0.0
                    };
                    assert!((q - b).abs() < 1e-13, "order {order} ({i},{j}): {q}");
                }
            }
        }
    }

    #[test]
    fn interior_polynomial_exactness() {
        let nx = 80;
        let g = grid(8.0, nx, 0.1);
        for order in [4, 6] {
            let ops = DerivativeOperators::new(&g, order).unwrap();
            let pad = 6 * 5 + 10;
            for m in 1..=5 {
                for p in 0..=(order + m - 1) {
                    let f: Vec<f64> = g.x.iter().map(|&x| (x - 4.0).powi(p as i32)).collect();
                    let mut out = vec![0.0; nx];
                    ops.apply(m, &f, &mut out);
                    for i in pad..nx - pad {
                        let x = g.x[i] - 4.0;
                        let exact = if p < m {
                            0.0
                        } else {
                            (p - m + 1..=p).map(|q| q as f64).product::<f64>() * x.powi((p - m) as i32)
                        };
                        assert!((out[i] - exact).abs() < 1e-6 * (1.0 + exact.abs()), "order {order} m {m} p {p}: {} vs {exact}", out[i]);
                    }
                }
            }
        }
    }

    #[test]
    fn d3_of_constant_vanishes() {
        let g = grid(10.0, 101, 0.1);
        let ops = DerivativeOperators::new(&g, 4).unwrap();
        let f = vec![3.5; 101];
        let mut out = vec![0.0; 101];
        ops.apply(3, &f, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-9));
    }

    fn max_err(nx: usize, order: usize, m: usize, f: &PolyGaussian) -> f64 {
        let g = grid(20.0, nx, 0.1);
        let ops = DerivativeOperators::new(&g, order).unwrap();
        let v: Vec<f64> = g.x.iter().map(|&x| f.derivative(0, x)).collect();
        let mut out = vec![0.0; nx];
        ops.apply(m, &v, &mut out);
        g.x.iter().zip(&out).map(|(&x, o)| (o - f.derivative(m as u32, x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn derivative_convergence_orders() {
        let f = PolyGaussian::new(0, 10.0, 1.0);
        for order in [4, 6] {
            for m in [1, 3, 5] {
                let e1 = max_err(401, order, m, &f);
                let e2 = max_err(801, order, m, &f);
                let slope = (e1 / e2).log2();
                assert!((slope - order as f64).abs() < 0.3, "order {order} m {m}: slope {slope} ({e1}, {e2})");
            }
        }
    }

    #[test]
    fn sine_derivative_error_is_small() {
        let g = grid(2.0 * std::f64::consts::PI, 1001, 0.1);
        let ops = DerivativeOperators::new(&g, 4).unwrap();
        let f: Vec<f64> = g.x.iter().map(|x| x.sin()).collect();
        let mut out = vec![0.0; 1001];
        ops.apply(1, &f, &mut out);
        let e = (4..997).map(|i| (out[i] - g.x[i].cos()).abs()).fold(0.0, f64::max);
        assert!(e < 0.2 * g.h.powi(4), "{e}");
    }

    #[test]
    fn fifth_derivative_of_polynomial_window() {
        let f = PolyGaussian::new(6, 8.0, 1.5);
        let nx = 1601;
        let g = grid(20.0, nx, 0.1);
        let ops = DerivativeOperators::new(&g, 4).unwrap();
        let v: Vec<f64> = g.x.iter().map(|&x| f.derivative(0, x)).collect();
        let mut out = vec![0.0; nx];
        ops.apply(5, &v, &mut out);
        let scale = g.x.iter().map(|&x| f.derivative(5, x).abs()).fold(0.0, f64::max);
        let err = g.x.iter().zip(&out).map(|(&x, o)| (o - f.derivative(5, x)).abs()).fold(0.0, f64::max);
        assert!(err < 1e-4 * scale, "err {err} scale {scale}");
    }

    #[test]
    fn weighted_inner_examples() {
        let g = grid(40.0, 2001, 1.0);
        let f: Vec<f64> = g.x.iter().map(|&x| (-x).exp()).collect();
        assert!((g.weighted_inner(&f, &f) - 1.0).abs() < 1e-8);
        let z = vec![0.0; 2001];
        assert_eq!(g.weighted_inner(&z, &z), 0.0);

        let g0 = grid(40.0, 2001, 0.0);
        let a: Vec<f64> = g0.x.iter().map(|&x| (x * 0.3).sin() * (-(x - 9.0) * (x - 9.0) / 4.0).exp()).collect();
        let b: Vec<f64> = g0.x.iter().map(|&x| (x * 1.1).cos() * (-(x - 11.0) * (x - 11.0) / 9.0).exp()).collect();
        assert!((g0.weighted_inner(&a, &b) - g0.inner(&a, &b)).abs() < 1e-14);
        assert_eq!(g0.weighted_inner(&a, &b), g0.weighted_inner(&b, &a));
    }

    #[test]
    fn projected_operator_dissipates_through_left_trace() {
        for order in [4, 6] {
            let g = grid(12.0, 121, 0.1);
            let ops = DerivativeOperators::new(&g, order).unwrap();
            let mut v: Vec<f64> = g.x.iter().map(|&x| (x * 1.3).sin() + 0.1 * x * (x - 12.0)).collect();
            ops.project(&mut v);
            assert!(ops.constraint_residual(&v).iter().all(|r| r.abs() < 1e-12));
            let sponge = vec![0.0; 121];
            let mut lv = vec![0.0; 121];
            let mut s = vec![0.0; 121];
            ops.apply_linear(2.7, &sponge, &v, &mut lv, &mut s);
            let energy = ops.quad().iter().zip(&v).zip(&lv).map(|((q, a), b)| q * a * b).sum::<f64>();
            let trace = ops.at_left(2, &v);
            let scale = lv.iter().map(|x| x.abs()).fold(0.0, f64::max) * 12.0;
            assert!((energy + 0.5 * trace * trace).abs() < 1e-12 * scale, "order {order}: {energy} vs {}", -0.5 * trace * trace);
        }
    }

    #[test]
    fn constrained_solve_stays_on_constraints() {
        let g = grid(12.0, 121, 0.1);
        let ops = DerivativeOperators::new(&g, 4).unwrap();
        let sys = ops.implicit_system(3.0, &g.sponge, 0.01).unwrap();
        let b: Vec<f64> = g.x.iter().map(|&x| (x * 0.5).sin()).collect();
        let mut out = vec![0.0; 121];
        let mut work = Vec::new();
        sys.solve(&b, &mut out, &mut work);
        assert!(ops.constraint_residual(&out).iter().all(|r| r.abs() < 1e-10));
    }
}
