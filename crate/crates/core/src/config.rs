//! Problem and discretization parameters, derived constants and the
//! admissibility gates of the existence and decay results.
//!
//! Two gates are kept apart:
//!
//! * existence needs only `3 - 5k^2 > 0` (the dissipation margin `a` is
//!   positive);
//! * decay certification adds a bound on `k` and a smallness condition on
//!   `||u0||^2`, and for `alpha = 1` also requires `L < pi`.

use std::f64::consts::PI;
use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::initdata::{Family, InitialDatumSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Transport switch, 0 or 1.
    pub alpha: u8,
    /// Strip width `L`.
    pub width: f64,
    /// Exponent `k` of the weight `e^{kx}`.
    pub weight_exponent: f64,
    /// Galerkin truncation `N`.
    pub n_modes: usize,
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_final: f64,
    pub sponge_width: f64,
    pub sponge_strength: f64,
    pub diag_stride: usize,
    /// Interior order of the x-derivative operators (4 or 6).
    pub order: usize,
    /// Disables the quadratic term when false.
    pub nonlinear: bool,
    /// Abort when `||u||^2` exceeds this multiple of `||u0||^2`.
    pub blowup_factor: f64,
    /// Restrict weighted norms to `x <= x_max - sponge_width`.
    pub exclude_sponge: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            alpha: 1,
            width: PI / 2.0,
            weight_exponent: 0.3,
            n_modes: 8,
            x_max: 40.0,
            nx: 2048,
            dt: 1e-3,
            t_final: 1.0,
            sponge_width: 8.0,
            sponge_strength: 2.0,
            diag_stride: 10,
            order: 4,
            nonlinear: true,
            blowup_factor: 1e3,
            exclude_sponge: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.alpha > 1 {
            return bad(format!("alpha must be 0 or 1, got {}", self.alpha));
        }
        if !(self.width > 0.0 && self.width.is_finite()) {
            return bad(format!("strip width L must be positive, got {}", self.width));
        }
        if !(self.weight_exponent > 0.0 && self.weight_exponent.is_finite()) {
            return bad(format!("weight exponent k must be positive, got {}", self.weight_exponent));
        }
        if self.n_modes == 0 {
            return bad("n_modes must be at least 1".into());
        }
        if !(self.x_max > 0.0 && self.x_max.is_finite()) {
            return bad(format!("x_max must be positive, got {}", self.x_max));
        }
        if self.nx < 32 {
            return bad(format!("nx = {} is below the minimum of 32", self.nx));
        }
        if self.nx < 16 * self.n_modes {
            return bad(format!(
                "nx = {} under-resolves {} modes (need nx >= 16 * n_modes = {})",
                self.nx,
                self.n_modes,
                16 * self.n_modes
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!("t_final must be nonnegative, got {}", self.t_final));
        }
        if !(self.sponge_width >= 0.0) || self.sponge_width >= self.x_max / 2.0 {
            return bad(format!(
                "sponge_width = {} must lie in [0, x_max/2) = [0, {})",
                self.sponge_width,
                self.x_max / 2.0
            ));
        }
        if !(self.sponge_strength >= 0.0) {
            return bad(format!("sponge_strength must be nonnegative, got {}", self.sponge_strength));
        }
        if self.diag_stride == 0 {
            return bad("diag_stride must be at least 1".into());
        }
        if self.order != 4 && self.order != 6 {
            return bad(format!("order must be 4 or 6, got {}", self.order));
        }
        if !(self.blowup_factor > 1.0) {
            return bad(format!("blowup_factor must exceed 1, got {}", self.blowup_factor));
        }
        Ok(())
    }

    /// Number of time steps; the run ends at `n_steps * dt`.
    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Dissipation margin `3 - 5k^2`.
    pub fn dissipation_margin(&self) -> f64 {
        3.0 - 5.0 * self.weight_exponent * self.weight_exponent
    }
}

/// Which decay result applies, selected by `alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayTheorem {
    /// `alpha = 1`: `chi = k (delta^2 + k^4)`, needs `L < pi`.
    WithTransport,
    /// `alpha = 0`: `chi = k (pi^2 / (8 L^2) + k^4)`, any finite `L`.
    WithoutTransport,
}

impl DecayTheorem {
    pub fn for_alpha(alpha: u8) -> Self {
        if alpha == 1 {
            DecayTheorem::WithTransport
        } else {
            DecayTheorem::WithoutTransport
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            DecayTheorem::WithTransport => "transport (alpha=1)",
            DecayTheorem::WithoutTransport => "no-transport (alpha=0)",
        }
    }
}

/// A hypothesis of the decay results.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    /// `3 - 5k^2 > 0`.
    DissipationMargin,
    /// `L < pi` (alpha = 1 only).
    SubcriticalWidth,
    /// `k^2 < min(3/5, 4 delta^2 / 9)` or `k^2 < min(3/5, pi^2 / (5 L^2))`.
    WeightBound,
    /// `||u0||^2` below the smallness threshold.
    Smallness,
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Condition::DissipationMargin => "dissipation margin 3-5k^2 > 0",
            Condition::SubcriticalWidth => "subcritical width L < pi",
            Condition::WeightBound => "weight bound on k^2",
            Condition::Smallness => "smallness of ||u0||^2",
        })
    }
}

/// Outcome of the decay gate for given `(alpha, L, k)`.
#[derive(Clone, Debug, PartialEq)]
pub enum DecayGate {
    Admissible { theorem: DecayTheorem, chi: f64, smallness_threshold: f64 },
    Refused { theorem: DecayTheorem, failed: Vec<Condition> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedParams {
    /// `a = (3 - 5k^2) / 2`; may be nonpositive, see [`DerivedParams::existence_admissible`].
    pub a: f64,
    /// `delta^2 = (pi^2 - L^2) / (4 L^2)`, for `alpha = 1` only.
    pub delta_sq: Option<f64>,
    /// `lambda_j = (j pi / L)^2`, `j = 1..=N`.
    pub lambda: Vec<f64>,
    pub decay: DecayGate,
}

impl DerivedParams {
    pub fn existence_admissible(&self) -> bool {
        self.a > 0.0
    }

    pub fn chi(&self) -> Option<f64> {
        match self.decay {
            DecayGate::Admissible { chi, .. } => Some(chi),
            DecayGate::Refused { .. } => None,
        }
    }

    pub fn smallness_threshold(&self) -> Option<f64> {
        match self.decay {
            DecayGate::Admissible { smallness_threshold, .. } => Some(smallness_threshold),
            DecayGate::Refused { .. } => None,
        }
    }

    /// The decay rate and threshold, or an error naming the failed gates.
    /// A nonpositive dissipation margin is a configuration error.
    pub fn require_decay(&self) -> Result<(f64, f64)> {
        match &self.decay {
            DecayGate::Admissible { chi, smallness_threshold, .. } => Ok((*chi, *smallness_threshold)),
            DecayGate::Refused { failed, .. } => {
                if failed.contains(&Condition::DissipationMargin) {
                    return Err(Error::Config(format!(
                        "3 - 5k^2 = {} is not positive; weighted estimates are unavailable",
                        2.0 * self.a
                    )));
                }
                let names: Vec<String> = failed.iter().map(|c| c.to_string()).collect();
                Err(Error::CertificationRefused(names.join("; ")))
            }
        }
    }
}

/// `delta^2 = (pi^2 - L^2) / (4 L^2)`.
pub fn delta_squared(width: f64) -> f64 {
    (PI * PI - width * width) / (4.0 * width * width)
}

fn weight_bound(theorem: DecayTheorem, width: f64) -> f64 {
    match theorem {
        DecayTheorem::WithTransport => (3.0 / 5.0f64).min(4.0 * delta_squared(width) / 9.0),
        DecayTheorem::WithoutTransport => (3.0 / 5.0f64).min(PI * PI / (5.0 * width * width)),
    }
}

fn threshold(theorem: DecayTheorem, width: f64, a: f64) -> f64 {
    match theorem {
        DecayTheorem::WithTransport => {
            let d2 = delta_squared(width);
            4.5 * d2 * (1.0 / 8.0f64).min(a / 2.0).min(d2 / 4.0)
        }
        DecayTheorem::WithoutTransport => {
            9.0 * PI * PI / (16.0 * width * width) * (1.0 / 4.0f64).min(a / 2.0)
        }
    }
}

fn rate(theorem: DecayTheorem, width: f64, k: f64) -> f64 {
    let k4 = k.powi(4);
    match theorem {
        DecayTheorem::WithTransport => k * (delta_squared(width) + k4),
        DecayTheorem::WithoutTransport => k * (PI * PI / (8.0 * width * width) + k4),
    }
}

/// Derived constants. Fails only for nonpositive `L` or `k`; inadmissible
/// decay hypotheses are reported through [`DecayGate::Refused`].
pub fn derive_params(cfg: &SolverConfig) -> Result<DerivedParams> {
    let (width, k) = (cfg.width, cfg.weight_exponent);
    if !(width > 0.0) {
        return Err(Error::Config(format!("strip width L must be positive, got {width}")));
    }
    if !(k > 0.0) {
        return Err(Error::Config(format!("weight exponent k must be positive, got {k}")));
    }
    let a = cfg.dissipation_margin() / 2.0;
    let theorem = DecayTheorem::for_alpha(cfg.alpha);
    let delta_sq = (cfg.alpha == 1).then(|| delta_squared(width));
    let lambda = (1..=cfg.n_modes).map(|j| (j as f64 * PI / width).powi(2)).collect();

    let mut failed = Vec::new();
    if a <= 0.0 {
        failed.push(Condition::DissipationMargin);
    }
    if theorem == DecayTheorem::WithTransport && width >= PI {
        failed.push(Condition::SubcriticalWidth);
    }
    if k * k >= weight_bound(theorem, width) {
        failed.push(Condition::WeightBound);
    }
    let decay = if failed.is_empty() {
        DecayGate::Admissible {
            theorem,
            chi: rate(theorem, width, k),
            smallness_threshold: threshold(theorem, width, a),
        }
    } else {
        DecayGate::Refused { theorem, failed }
    };
    Ok(DerivedParams { a, delta_sq, lambda, decay })
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckEntry {
    pub condition: Condition,
    pub pass: bool,
    /// `bound - value`; positive when the hypothesis holds with room.
    pub margin: f64,
}

/// One entry per hypothesis of the applicable decay result.
pub fn admissibility_report(cfg: &SolverConfig, u0_norm_sq: f64) -> Result<Vec<CheckEntry>> {
    let d = derive_params(cfg)?;
    let theorem = DecayTheorem::for_alpha(cfg.alpha);
    let k2 = cfg.weight_exponent.powi(2);
    let mut out = vec![CheckEntry {
        condition: Condition::DissipationMargin,
        pass: d.a > 0.0,
        margin: 2.0 * d.a,
    }];
    if theorem == DecayTheorem::WithTransport {
        let m = PI - cfg.width;
        out.push(CheckEntry { condition: Condition::SubcriticalWidth, pass: m > 0.0, margin: m });
    }
    let m = weight_bound(theorem, cfg.width) - k2;
    out.push(CheckEntry { condition: Condition::WeightBound, pass: m > 0.0, margin: m });
    let m = threshold(theorem, cfg.width, d.a) - u0_norm_sq;
    out.push(CheckEntry { condition: Condition::Smallness, pass: m >= 0.0, margin: m });
    Ok(out)
}

/// Everything read from a configuration file.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub ic: InitialDatumSpec,
    pub out_dir: PathBuf,
    /// y-points for reconstructed snapshots.
    pub snapshot_ny: usize,
}

const KEYS: &[&str] = &[
    "alpha",
    "L",
    "k",
    "n_modes",
    "x_max",
    "nx",
    "dt",
    "t_final",
    "sponge_width",
    "sponge_strength",
    "diag_stride",
    "order",
    "nonlinear",
    "blowup_factor",
    "exclude_sponge",
    "ic.family",
    "ic.modes",
    "ic.weights",
    "ic.amplitude",
    "ic.center",
    "ic.width",
    "ic.target_norm_sq",
    "ic.samples",
    "out.dir",
    "snapshot.ny",
];

const REQUIRED: &[&str] = &["alpha", "L", "k", "n_modes", "x_max", "nx", "dt", "t_final"];

/// A raw `key = value` entry with its source line.
#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Splits INI-style text into entries. `#` and `;` at line start begin
/// comments; `[section]` headers prefix the keys that follow
/// (`[ic]` + `modes = 1` is `ic.modes`).
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut out: Vec<Entry> = Vec::new();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() || s.starts_with(';') {
            continue;
        }
        if let Some(rest) = s.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Parse { line, msg: format!("malformed section header `{s}`") })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Parse { line, msg: format!("expected `key = value`, got `{s}`") })?;
        let k = k.trim();
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Parse { line, msg: format!("unknown key `{key}`") });
        }
        if out.iter().any(|e| e.key == key) {
            return Err(Error::Parse { line, msg: format!("duplicate key `{key}`") });
        }
        out.push(Entry { key, value: v.trim().to_string(), line });
    }
    Ok(out)
}

fn num<T: std::str::FromStr>(e: &Entry) -> Result<T> {
    e.value
        .parse::<T>()
        .map_err(|_| Error::Parse { line: e.line, msg: format!("`{}` is not a valid number for `{}`", e.value, e.key) })
}

fn flag(e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::Parse { line: e.line, msg: format!("`{}` expects 0 or 1", e.key) }),
    }
}

fn list<T: std::str::FromStr>(e: &Entry) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Parse { line: e.line, msg: format!("bad list item `{s}` in `{}`", e.key) })
        })
        .collect()
}

impl RunConfig {
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        for req in REQUIRED {
            if !entries.iter().any(|e| e.key == *req) {
                return Err(Error::Config(format!("missing required key `{req}`")));
            }
        }
        let mut s = SolverConfig { n_modes: 1, ..SolverConfig::default() };
        s.sponge_width = 0.0;
        s.sponge_strength = 0.0;
        s.diag_stride = 1;
        let mut ic = InitialDatumSpec::default();
        let mut center = None;
        let mut out_dir = PathBuf::from("out");
        let mut snapshot_ny = None;
        for e in entries {
            match e.key.as_str() {
                "alpha" => s.alpha = num(e)?,
                "L" => s.width = num(e)?,
                "k" => s.weight_exponent = num(e)?,
                "n_modes" => s.n_modes = num(e)?,
                "x_max" => s.x_max = num(e)?,
                "nx" => s.nx = num(e)?,
                "dt" => s.dt = num(e)?,
                "t_final" => s.t_final = num(e)?,
                "sponge_width" => s.sponge_width = num(e)?,
                "sponge_strength" => s.sponge_strength = num(e)?,
                "diag_stride" => s.diag_stride = num(e)?,
                "order" => s.order = num(e)?,
                "nonlinear" => s.nonlinear = flag(e)?,
                "blowup_factor" => s.blowup_factor = num(e)?,
                "exclude_sponge" => s.exclude_sponge = flag(e)?,
                "ic.family" => {
                    ic.family = match e.value.as_str() {
                        "separable-bump" => Family::SeparableBump,
                        "multimode-bump" => Family::MultimodeBump,
                        "custom-samples" => Family::CustomSamples,
                        other => {
                            return Err(Error::Parse { line: e.line, msg: format!("unknown ic.family `{other}`") })
                        }
                    }
                }
                "ic.modes" => ic.modes = list(e)?,
                "ic.weights" => ic.weights = list(e)?,
                "ic.amplitude" => ic.amplitude = num(e)?,
                "ic.center" => center = Some(num(e)?),
                "ic.width" => ic.width = num(e)?,
                "ic.target_norm_sq" => ic.target_norm_sq = Some(num(e)?),
                "ic.samples" => ic.samples = Some(PathBuf::from(&e.value)),
                "out.dir" => out_dir = PathBuf::from(&e.value),
                "snapshot.ny" => snapshot_ny = Some(num(e)?),
                _ => unreachable!("key list and match arms disagree on `{}`", e.key),
            }
        }
        ic.center = center.unwrap_or(s.x_max / 5.0);
        s.validate()?;
        ic.validate(s.n_modes)?;
        let snapshot_ny = snapshot_ny.unwrap_or(4 * s.n_modes + 1);
        Ok(RunConfig { solver: s, ic, out_dir, snapshot_ny })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(&parse_entries(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::parse(&text)?;
        cfg.resolve_relative(path);
        Ok(cfg)
    }

    /// Interprets a relative sample-table path against the config file's directory.
    fn resolve_relative(&mut self, config_path: &std::path::Path) {
        if let (Some(p), Some(dir)) = (&self.ic.samples, config_path.parent()) {
            if p.is_relative() {
                self.ic.samples = Some(dir.join(p));
            }
        }
    }

    /// Resolved parameters as `key = value` lines, in the file's own syntax.
    pub fn echo(&self) -> String {
        let s = &self.solver;
        let ic = &self.ic;
        let join = |v: &[String]| v.join(",");
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        kv("alpha", s.alpha.to_string());
        kv("L", format!("{:?}", s.width));
        kv("k", format!("{:?}", s.weight_exponent));
        kv("n_modes", s.n_modes.to_string());
        kv("x_max", format!("{:?}", s.x_max));
        kv("nx", s.nx.to_string());
        kv("dt", format!("{:?}", s.dt));
        kv("t_final", format!("{:?}", s.t_final));
        kv("sponge_width", format!("{:?}", s.sponge_width));
        kv("sponge_strength", format!("{:?}", s.sponge_strength));
        kv("diag_stride", s.diag_stride.to_string());
        kv("order", s.order.to_string());
        kv("nonlinear", (s.nonlinear as u8).to_string());
        kv("blowup_factor", format!("{:?}", s.blowup_factor));
        kv("exclude_sponge", (s.exclude_sponge as u8).to_string());
        kv("ic.family", ic.family.name().to_string());
        kv("ic.modes", join(&ic.modes.iter().map(|m| m.to_string()).collect::<Vec<_>>()));
        if !ic.weights.is_empty() {
            kv("ic.weights", join(&ic.weights.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>()));
        }
        kv("ic.amplitude", format!("{:?}", ic.amplitude));
        kv("ic.center", format!("{:?}", ic.center));
        kv("ic.width", format!("{:?}", ic.width));
        if let Some(t) = ic.target_norm_sq {
            kv("ic.target_norm_sq", format!("{t:?}"));
        }
        if let Some(p) = &ic.samples {
            kv("ic.samples", p.display().to_string());
        }
        kv("out.dir", self.out_dir.display().to_string());
        kv("snapshot.ny", self.snapshot_ny.to_string());
        out
    }
}

/// Expands a sweep file: any value holding `;`-separated alternatives is
/// swept, and the cartesian product of all alternatives is returned in
/// row-major order (first swept key varies slowest). Each cell gets a label
/// such as `L=1.5_k=0.3`.
pub fn expand_sweep(text: &str) -> Result<Vec<(String, RunConfig)>> {
    let entries = parse_entries(text)?;
    let axes: Vec<(usize, Vec<String>)> = entries
        .iter()
        .enumerate()
        .filter(|(_, e)| e.value.contains(';'))
        .map(|(i, e)| (i, e.value.split(';').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()))
        .collect();
    let total: usize = axes.iter().map(|(_, v)| v.len()).product();
    let mut cells = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut cell = entries.clone();
        let mut picks = vec![0; axes.len()];
        for (a, (_, vals)) in axes.iter().enumerate().rev() {
            picks[a] = flat % vals.len();
            flat /= vals.len();
        }
        let mut label = Vec::new();
        for ((idx, vals), &p) in axes.iter().zip(&picks) {
            cell[*idx].value = vals[p].clone();
            label.push(format!("{}={}", cell[*idx].key, vals[p]));
        }
        let label = if label.is_empty() { "cell".to_string() } else { label.join("_") };
        cells.push((label, RunConfig::from_entries(&cell)?));
    }
    Ok(cells)
}
