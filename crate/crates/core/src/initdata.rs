//! Initial data compatible with the boundary conditions, and the weighted
//! regularity functional `J_w`.
//!
//! The x-profile is `phi(x) = A (x / x_c)^2 exp(-((x - x_c) / w)^2)`, so
//! `phi(0) = phi'(0) = 0` holds analytically. Generated profiles are then
//! projected onto the discrete boundary constraints, which moves them by a
//! rounding-level amount at `x = 0` and by the Gaussian tail at `x_max`.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::basis::TransverseBasis;
use crate::dynamics::ModeField;
use crate::error::{Error, Result};
use crate::grid::{DerivativeOperators, HalfLineGrid};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Family {
    /// `u0 = sum_j c_j omega_j(y) phi(x)`.
    #[default]
    SeparableBump,
    /// Each listed mode gets its own window, centred `w` further right than
    /// the previous one, so `u0` does not factor.
    MultimodeBump,
    /// Profiles read from a text table.
    CustomSamples,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::SeparableBump => "separable-bump",
            Family::MultimodeBump => "multimode-bump",
            Family::CustomSamples => "custom-samples",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialDatumSpec {
    pub family: Family,
    /// 1-based mode numbers.
    pub modes: Vec<usize>,
    /// Per-mode weights; empty means all ones.
    pub weights: Vec<f64>,
    pub amplitude: f64,
    pub center: f64,
    pub width: f64,
    /// Rescale so that `||u0||^2` equals this value.
    pub target_norm_sq: Option<f64>,
    /// Table for [`Family::CustomSamples`]: whitespace-separated columns
    /// `x v_1 .. v_M`, one value column per listed mode.
    pub samples: Option<PathBuf>,
}

impl Default for InitialDatumSpec {
    fn default() -> Self {
        Self {
            family: Family::SeparableBump,
            modes: vec![1],
            weights: Vec::new(),
            amplitude: 1.0,
            center: 8.0,
            width: 2.0,
            target_norm_sq: None,
            samples: None,
        }
    }
}

impl InitialDatumSpec {
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.modes.is_empty() {
            return bad("ic.modes must list at least one mode".into());
        }
        for (i, &m) in self.modes.iter().enumerate() {
            if m == 0 || m > n_modes {
                return bad(format!("ic.modes entry {m} outside 1..={n_modes}"));
            }
            if self.modes[..i].contains(&m) {
                return bad(format!("ic.modes lists mode {m} twice"));
            }
        }
        if !self.weights.is_empty() && self.weights.len() != self.modes.len() {
            return bad(format!("ic.weights has {} entries for {} modes", self.weights.len(), self.modes.len()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) || !self.amplitude.is_finite() {
            return bad("ic.amplitude and ic.weights must be finite".into());
        }
        if !(self.center > 0.0 && self.center.is_finite()) {
            return bad(format!("ic.center must be positive, got {}", self.center));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad(format!("ic.width must be positive, got {}", self.width));
        }
        if let Some(t) = self.target_norm_sq {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("ic.target_norm_sq must be nonnegative, got {t}"));
            }
        }
        if self.family == Family::CustomSamples && self.samples.is_none() {
            return bad("ic.family = custom-samples needs ic.samples".into());
        }
        Ok(())
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.get(i).copied().unwrap_or(1.0)
    }
}

/// The window `A (x/x_c)^2 exp(-((x - x_c)/w)^2)`.
pub fn bump(x: f64, amplitude: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    amplitude * (x / center).powi(2) * (-s * s).exp()
}

fn read_table(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let s = line.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        let row: Vec<f64> = s
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::InitialData(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if row.len() != columns + 1 {
            return Err(Error::InitialData(format!(
                "{}:{}: expected {} columns, found {}",
                path.display(),
                n + 1,
                columns + 1,
                row.len()
            )));
        }
        rows.push(row);
    }
    if rows.len() < 2 {
        return Err(Error::InitialData(format!("{}: need at least two samples", path.display())));
    }
    if rows.windows(2).any(|w| w[1][0] <= w[0][0]) {
        return Err(Error::InitialData(format!("{}: x column must increase strictly", path.display())));
    }
    Ok(rows)
}

/// Piecewise-linear interpolation of column `c`, zero outside the table.
fn interpolate(rows: &[Vec<f64>], c: usize, x: f64) -> f64 {
    if x < rows[0][0] || x > rows[rows.len() - 1][0] {
        return 0.0;
    }
    let i = rows.partition_point(|r| r[0] <= x).clamp(1, rows.len() - 1);
    let (a, b) = (&rows[i - 1], &rows[i]);
    let s = (x - a[0]) / (b[0] - a[0]);
    a[c] + s * (b[c] - a[c])
}

/// `||u||^2 = sum_j ||g_j||^2` over the whole grid.
pub fn modal_norm_sq(g: &Array2<f64>, grid: &HalfLineGrid) -> f64 {
    g.outer_iter().map(|r| grid.inner(r.as_slice().unwrap(), r.as_slice().unwrap())).sum()
}

/// Builds the datum at `t = 0`.
pub fn make_initial(
    spec: &InitialDatumSpec,
    basis: &TransverseBasis,
    grid: &HalfLineGrid,
    ops: &DerivativeOperators,
) -> Result<ModeField> {
    spec.validate(basis.n_modes())?;
    let nx = grid.len();
    let mut g = Array2::zeros((basis.n_modes(), nx));
    let table = match spec.family {
        Family::CustomSamples => Some(read_table(spec.samples.as_deref().unwrap(), spec.modes.len())?),
        _ => None,
    };
    for (r, &mode) in spec.modes.iter().enumerate() {
        let c = spec.weight(r);
        let center = match spec.family {
            Family::MultimodeBump => spec.center + r as f64 * spec.width,
            _ => spec.center,
        };
        let mut row = g.row_mut(mode - 1);
        for (i, &x) in grid.x.iter().enumerate() {
            row[i] = match &table {
                Some(t) => spec.amplitude * c * interpolate(t, r + 1, x),
                None => c * bump(x, spec.amplitude, center, spec.width),
            };
        }
    }
    for mut row in g.outer_iter_mut() {
        ops.project(row.as_slice_mut().unwrap());
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InitialData("datum has non-finite samples".into()));
    }
    let total = modal_norm_sq(&g, grid);
    if grid.sponge.iter().any(|&s| s > 0.0) && total > 0.0 {
        let start = grid.sponge.iter().position(|&s| s > 0.0).unwrap();
        let mut inside = 0.0;
        for row in g.outer_iter() {
            inside += (start..nx).map(|i| grid.quad[i] * row[i] * row[i]).sum::<f64>();
        }
        if inside > 1e-8 * total {
            return Err(Error::InitialData(format!(
                "{:.3e} of the datum's mass lies in the sponge layer (limit 1e-8); move it left or enlarge x_max",
                inside / total
            )));
        }
    }
    if let Some(target) = spec.target_norm_sq {
        if total == 0.0 {
            if target > 0.0 {
                return Err(Error::InitialData("cannot rescale a zero datum to a positive norm".into()));
            }
        } else {
            g *= (target / total).sqrt();
        }
    }
    Ok(ModeField { t: 0.0, g })
}

/// Separable datum `u0 = phi(x) sum_j c_j omega_j(y)`.
pub fn make_separable(
    spec: &InitialDatumSpec,
    basis: &TransverseBasis,
    grid: &HalfLineGrid,
    ops: &DerivativeOperators,
) -> Result<ModeField> {
    let spec = InitialDatumSpec { family: Family::SeparableBump, ..spec.clone() };
    make_initial(&spec, basis, grid, ops)
}

/// Weighted functional
/// `J_w = int e^{kx} (u0^2 + |grad u0|^2 + u0_yy^2 + u0_xx^2 + (d^5_x u0 + Lap u0_x)^2)`,
/// with y-derivatives taken spectrally.
pub fn compute_jw(u0: &ModeField, basis: &TransverseBasis, grid: &HalfLineGrid, ops: &DerivativeOperators) -> Result<f64> {
    let nx = grid.len();
    let mut d1 = vec![0.0; nx];
    let mut d2 = vec![0.0; nx];
    let mut d3 = vec![0.0; nx];
    let mut d5 = vec![0.0; nx];
    let mut total = 0.0;
    for (j, row) in u0.g.outer_iter().enumerate() {
        let g = row.as_slice().unwrap();
        let lam = basis.lambda[j];
        ops.apply(1, g, &mut d1);
        ops.apply(2, g, &mut d2);
        ops.apply(3, g, &mut d3);
        ops.apply(5, g, &mut d5);
        let top: Vec<f64> = (0..nx).map(|i| d5[i] + d3[i] - lam * d1[i]).collect();
        let g2 = grid.weighted_inner(g, g);
        total += g2 * (1.0 + lam + lam * lam)
            + grid.weighted_inner(&d1, &d1)
            + grid.weighted_inner(&d2, &d2)
            + grid.weighted_inner(&top, &top);
    }
    if !total.is_finite() {
        return Err(Error::InitialData("J_w is not finite; the datum does not decay against e^{kx}".into()));
    }
    Ok(total)
}
