//! Transverse Dirichlet eigenbasis `omega_j(y) = sqrt(2/L) sin(j pi y / L)` on
//! `(0, L)` and the triple-product coupling tensor of the Galerkin system.

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

/// One nonzero `a_{lmj}` with its indices (0-based), as used by the
/// nonlinear contraction `sum_{l,m} a_{lmj} g_l g_m'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplingTerm {
    pub l: usize,
    pub m: usize,
    pub j: usize,
    pub value: f64,
}

/// Fully symmetric, parity-sparse coupling tensor.
///
/// Independent entries are stored once, keyed on the sorted triple
/// `k <= l <= j`; [`CouplingTensor::terms_for`] exposes every ordered
/// nonzero `(l, m)` pair for a given `j`.
#[derive(Clone, Debug)]
pub struct CouplingTensor {
    n: usize,
    keys: Vec<(u16, u16, u16)>,
    values: Vec<f64>,
    by_mode: Vec<Vec<CouplingTerm>>,
}

/// `int_0^L sin(n pi y / L) dy` divided by `L`, for signed `n`.
fn sine_mean(n: i64) -> f64 {
    if n.rem_euclid(2) == 0 {
        0.0
    } else {
        2.0 / (n as f64 * PI)
    }
}

/// Closed form of `int_0^L omega_k omega_l omega_j dy` (1-based indices) via
/// `sin A sin B sin C = [sin(A+B-C) + sin(B+C-A) + sin(C+A-B) - sin(A+B+C)] / 4`.
pub fn triple_product(width: f64, k: usize, l: usize, j: usize) -> f64 {
    let (k, l, j) = (k as i64, l as i64, j as i64);
    if (k + l + j) % 2 == 0 {
        return 0.0;
    }
    let s = sine_mean(k + l - j) + sine_mean(l + j - k) + sine_mean(j + k - l) - sine_mean(k + l + j);
    (2.0 / width).powf(1.5) * width / 4.0 * s
}

impl CouplingTensor {
    fn build(width: f64, n: usize) -> Self {
        let mut keys = Vec::new();
        let mut values = Vec::new();
        for k in 1..=n {
            for l in k..=n {
                for j in l..=n {
                    let v = triple_product(width, k, l, j);
                    if v != 0.0 {
                        keys.push((k as u16, l as u16, j as u16));
                        values.push(v);
                    }
                }
            }
        }
        let mut t = CouplingTensor { n, keys, values, by_mode: vec![Vec::new(); n] };
        for j in 0..n {
            let mut terms = Vec::new();
            for l in 0..n {
                for m in 0..n {
                    let v = t.lookup(l + 1, m + 1, j + 1);
                    if v != 0.0 {
                        terms.push(CouplingTerm { l, m, j, value: v });
                    }
                }
            }
            t.by_mode[j] = terms;
        }
        t
    }

    fn lookup(&self, k: usize, l: usize, j: usize) -> f64 {
        let mut idx = [k, l, j];
        idx.sort_unstable();
        let key = (idx[0] as u16, idx[1] as u16, idx[2] as u16);
        match self.keys.binary_search(&key) {
            Ok(p) => self.values[p],
            Err(_) => 0.0,
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n
    }

    /// Number of stored independent nonzeros.
    pub fn stored(&self) -> usize {
        self.values.len()
    }

    pub fn terms_for(&self, j: usize) -> &[CouplingTerm] {
        &self.by_mode[j]
    }
}

#[derive(Clone, Debug)]
pub struct TransverseBasis {
    width: f64,
    n_modes: usize,
    /// `lambda_j = (j pi / L)^2`, ascending.
    pub lambda: Vec<f64>,
    /// `sqrt(2 / L)`.
    pub norm_const: f64,
    coupling: CouplingTensor,
}

/// Result of [`TransverseBasis::project_initial`].
#[derive(Clone, Debug)]
pub struct Projection {
    /// `N x nx` modal profiles `u_{0j}(x)`.
    pub modes: Array2<f64>,
    /// L2 norm over the strip of `u0 - sum_j omega_j u_{0j}`.
    pub residual_l2: f64,
}

impl TransverseBasis {
    pub fn new(width: f64, n_modes: usize) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::Config(format!("strip width must be positive, got {width}")));
        }
        if n_modes == 0 {
            return Err(Error::Config("basis needs at least one mode".into()));
        }
        let lambda = (1..=n_modes).map(|j| (j as f64 * PI / width).powi(2)).collect();
        let coupling = CouplingTensor::build(width, n_modes);
        let basis = TransverseBasis { width, n_modes, lambda, norm_const: (2.0 / width).sqrt(), coupling };
        if cfg!(debug_assertions) && n_modes <= 12 {
            basis.debug_check_coupling();
        }
        Ok(basis)
    }

    fn debug_check_coupling(&self) {
        let n = self.n_modes;
        for k in 1..=n {
            for l in k..=n {
                for j in l..=n {
                    let q = crate::oracle::quad_coupling(k, l, j, self.width);
                    let c = self.coupling.lookup(k, l, j);
                    debug_assert!((q - c).abs() < 1e-9, "coupling ({k},{l},{j}): closed {c} vs quad {q}");
                }
            }
        }
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn coupling(&self) -> &CouplingTensor {
        &self.coupling
    }

    /// `omega_j(y)` for 1-based `j`; exactly zero on `y = 0` and `y = L`.
    pub fn eval(&self, j: usize, y: f64) -> f64 {
        if y <= 0.0 || y >= self.width {
            return 0.0;
        }
        self.norm_const * (j as f64 * PI * y / self.width).sin()
    }

    /// `a_{klj}` for 1-based indices.
    pub fn coupling_entry(&self, k: usize, l: usize, j: usize) -> Result<f64> {
        let n = self.n_modes;
        if [k, l, j].iter().any(|&i| i == 0 || i > n) {
            return Err(Error::IndexOutOfRange(k, l, j, n));
        }
        Ok(self.coupling.lookup(k, l, j))
    }

    /// Uniform y-grid `y_m = m L / (ny - 1)` including both walls.
    pub fn uniform_y_grid(&self, ny: usize) -> Vec<f64> {
        let h = self.width / (ny - 1) as f64;
        (0..ny).map(|m| if m + 1 == ny { self.width } else { m as f64 * h }).collect()
    }

    fn check_y_grid(&self, y: &[f64]) -> Result<f64> {
        let required = 4 * self.n_modes;
        if y.len() < required {
            return Err(Error::UnderResolved { points: y.len(), required });
        }
        let h = self.width / (y.len() - 1) as f64;
        let uniform = y.iter().enumerate().all(|(m, &v)| (v - m as f64 * h).abs() <= 1e-12 * self.width);
        if !uniform {
            return Err(Error::Grid("y-quadrature grid must be uniform on [0, L] including both walls".into()));
        }
        Ok(h)
    }

    /// `u_{0j}(x) = int_0^L u0(x, y) omega_j(y) dy` for samples `u0[(i, m)]` on
    /// `x_i` times a uniform y-grid. The y-rule is the trapezoid rule, which
    /// is exact for products of sines below the grid Nyquist limit.
    /// `x_weights` are the x-quadrature weights used for the residual norm.
    pub fn project_initial(&self, u0: ArrayView2<f64>, y: &[f64], x_weights: &[f64]) -> Result<Projection> {
        let (nx, ny) = u0.dim();
        if ny != y.len() {
            return Err(Error::Grid(format!("field has {ny} y-samples but grid has {}", y.len())));
        }
        if nx != x_weights.len() {
            return Err(Error::Grid(format!("field has {nx} x-samples but {} x-weights", x_weights.len())));
        }
        let hy = self.check_y_grid(y)?;
        let n = self.n_modes;
        let table: Vec<Vec<f64>> = (1..=n).map(|j| y.iter().map(|&v| self.eval(j, v)).collect()).collect();
        let wy: Vec<f64> = (0..ny).map(|m| if m == 0 || m + 1 == ny { 0.5 * hy } else { hy }).collect();
        let mut modes = Array2::zeros((n, nx));
        let mut residual = 0.0;
        for i in 0..nx {
            let row = u0.row(i);
            for (j, w) in table.iter().enumerate() {
                modes[(j, i)] = row.iter().zip(w).zip(&wy).map(|((u, o), q)| u * o * q).sum();
            }
            let mut r = 0.0;
            for m in 0..ny {
                let rec: f64 = (0..n).map(|j| table[j][m] * modes[(j, i)]).sum();
                r += wy[m] * (row[m] - rec).powi(2);
            }
            residual += x_weights[i] * r;
        }
        Ok(Projection { modes, residual_l2: residual.sqrt() })
    }

    /// `u(x_i, y_m) = sum_j omega_j(y_m) g_j(x_i)`; rows are x, columns y.
    pub fn reconstruct(&self, g: ArrayView2<f64>, y: &[f64]) -> Array2<f64> {
        let (n, nx) = g.dim();
        assert!(n <= self.n_modes, "field has {n} modes, basis has {}", self.n_modes);
        let table: Vec<Vec<f64>> = (1..=n).map(|j| y.iter().map(|&v| self.eval(j, v)).collect()).collect();
        let mut u = Array2::zeros((nx, y.len()));
        for i in 0..nx {
            for (m, _) in y.iter().enumerate() {
                u[(i, m)] = (0..n).map(|j| table[j][m] * g[(j, i)]).sum();
            }
        }
        u
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    #[test]
    fn eigenvalues() {
        let b = TransverseBasis::new(PI, 3).unwrap();
        assert!((b.lambda[0] - 1.0).abs() < 1e-14);
        assert!((b.lambda[1] - 4.0).abs() < 1e-14);
        assert!((b.lambda[2] - 9.0).abs() < 1e-14);
        let b = TransverseBasis::new(2.0, 1).unwrap();
        assert!((b.lambda[0] - 2.467401).abs() < 1e-6);
    }

    #[test]
    fn coupling_examples() {
        let b = TransverseBasis::new(PI, 3).unwrap();
        let scale = (2.0 / PI).powf(1.5);
        let a111 = b.coupling_entry(1, 1, 1).unwrap();
        assert!((a111 - scale * 4.0 / 3.0).abs() < 1e-14);
        assert!((a111 - 0.677265).abs() < 1e-6);
        assert_eq!(b.coupling_entry(1, 1, 2).unwrap(), 0.0);
        assert_eq!(b.coupling_entry(1, 2, 3).unwrap(), 0.0);
        let a113 = b.coupling_entry(1, 1, 3).unwrap();
        assert!((a113 - scale * (-4.0 / 15.0)).abs() < 1e-14);
        assert!((a113 + 0.135453).abs() < 1e-6);
        assert!(matches!(b.coupling_entry(0, 1, 1), Err(Error::IndexOutOfRange(..))));
        assert!(matches!(b.coupling_entry(1, 4, 1), Err(Error::IndexOutOfRange(..))));
    }

    #[test]
    fn walls_are_exact_zeros() {
        let b = TransverseBasis::new(1.3, 6).unwrap();
        for j in 1..=6 {
            assert_eq!(b.eval(j, 0.0), 0.0);
            assert_eq!(b.eval(j, 1.3), 0.0);
        }
    }

    #[test]
    fn discrete_orthonormality() {
        let b = TransverseBasis::new(2.0, 8).unwrap();
        let y = b.uniform_y_grid(65);
        let h = 2.0 / 64.0;
        for j in 1..=8 {
            for m in 1..=8 {
                let s: f64 = y.iter().map(|&v| b.eval(j, v) * b.eval(m, v)).sum::<f64>() * h;
                let want = if j == m { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12, "({j},{m}) -> {s}");
            }
        }
    }

    fn separable(b: &TransverseBasis, modes: &[(usize, Array1<f64>)], y: &[f64]) -> Array2<f64> {
        let nx = modes[0].1.len();
        let mut u = Array2::zeros((nx, y.len()));
        for (j, phi) in modes {
            for i in 0..nx {
                for (m, &yy) in y.iter().enumerate() {
                    u[(i, m)] += (*j as f64 * PI * yy / b.width()).sin() * phi[i];
                }
            }
        }
        u
    }

    #[test]
    fn projection_of_single_and_double_modes() {
        let width = 1.7;
        let b = TransverseBasis::new(width, 5).unwrap();
        let y = b.uniform_y_grid(41);
        let x: Array1<f64> = Array1::linspace(0.0, 5.0, 30);
        let w = vec![5.0 / 29.0; 30];
        let phi = x.mapv(|v| v * v * (-(v - 2.0) * (v - 2.0)).exp());
        let psi = x.mapv(|v| (v * 0.7).sin());
        let amp = (width / 2.0).sqrt();

        let p = b.project_initial(separable(&b, &[(1, phi.clone())], &y).view(), &y, &w).unwrap();
        for i in 0..30 {
            assert!((p.modes[(0, i)] - amp * phi[i]).abs() < 1e-12);
            for j in 1..5 {
                assert!(p.modes[(j, i)].abs() < 1e-12);
            }
        }
        assert!(p.residual_l2 < 1e-12);

        let u = separable(&b, &[(2, phi.clone()), (3, psi.clone())], &y);
        let p = b.project_initial(u.view(), &y, &w).unwrap();
        for i in 0..30 {
            assert!(p.modes[(0, i)].abs() < 1e-12);
            assert!((p.modes[(1, i)] - amp * phi[i]).abs() < 1e-12);
            assert!((p.modes[(2, i)] - amp * psi[i]).abs() < 1e-12);
            assert!(p.modes[(3, i)].abs() < 1e-12);
        }

        let z = b.project_initial(Array2::zeros((30, 41)).view(), &y, &w).unwrap();
        assert!(z.modes.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn under_resolved_projection_rejected() {
        let b = TransverseBasis::new(1.0, 8).unwrap();
        let y = b.uniform_y_grid(20);
        let r = b.project_initial(Array2::zeros((4, 20)).view(), &y, &[1.0; 4]);
        assert!(matches!(r, Err(Error::UnderResolved { points: 20, required: 32 })));
    }

    #[test]
    fn reconstruct_single_mode() {
        let width = 2.5;
        let b = TransverseBasis::new(width, 3).unwrap();
        let y = b.uniform_y_grid(13);
        let mut g = Array2::zeros((3, 4));
        for i in 0..4 {
            g[(0, i)] = 1.0 + i as f64;
        }
        let u = b.reconstruct(g.view(), &y);
        for i in 0..4 {
            assert_eq!(u[(i, 0)], 0.0);
            assert_eq!(u[(i, 12)], 0.0);
            for (m, &yy) in y.iter().enumerate() {
                let want = (2.0 / width).sqrt() * (PI * yy / width).sin() * (1.0 + i as f64);
                assert!((u[(i, m)] - want).abs() < 1e-14);
            }
        }
        let z = b.reconstruct(Array2::zeros((3, 4)).view(), &y);
        assert!(z.iter().all(|&v| v == 0.0));
    }
}
