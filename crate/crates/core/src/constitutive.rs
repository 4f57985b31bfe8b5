//! Fluid and medium properties and the nonlinear constitutive laws.
//!
//! A layer carries one capillary-pressure/saturation law `S(p_c)` and one
//! relative-permeability curve per phase. Relative permeabilities are
//! functions of the phase's own saturation (`S` for the wetting phase,
//! `1 - S` for the nonwetting phase) and are floored at a positive
//! `mobility_floor`, so every phase mobility is bounded away from zero.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Overshoot of a saturation outside `[0, 1]` accepted (and clamped) before
/// it is reported as a domain error.
pub const SATURATION_SLACK: f64 = 1e-12;

/// Default floor for relative permeabilities.
pub const DEFAULT_MOBILITY_FLOOR: f64 = 1e-3;

/// Default capillary-pressure interval on which constants are certified.
pub const DEFAULT_PC_RANGE: (f64, f64) = (-10.0, 10.0);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Phase {
    Wetting,
    Nonwetting,
}

impl Phase {
    pub const ALL: [Phase; 2] = [Phase::Wetting, Phase::Nonwetting];

    pub fn index(self) -> usize {
        match self {
            Phase::Wetting => 0,
            Phase::Nonwetting => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Phase::Wetting => "w",
            Phase::Nonwetting => "g",
        }
    }

    /// `(-1)^{δ_{α,w}}`: the sign the saturation increment carries on the
    /// right-hand side of the linearised phase equation.
    pub fn storage_sign(self) -> f64 {
        match self {
            Phase::Wetting => -1.0,
            Phase::Nonwetting => 1.0,
        }
    }

    /// The saturation a relative permeability of this phase is evaluated at.
    pub fn own_saturation(self, wetting_saturation: f64) -> f64 {
        match self {
            Phase::Wetting => wetting_saturation,
            Phase::Nonwetting => 1.0 - wetting_saturation,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseParams {
    pub phase: Phase,
    /// Pa·s
    pub viscosity: f64,
    /// kg/m³
    pub density: f64,
}

impl PhaseParams {
    pub fn new(phase: Phase, viscosity: f64, density: f64) -> Result<Self> {
        if !(viscosity > 0.0 && viscosity.is_finite()) {
            return Err(Error::domain(format!(
                "{phase} viscosity must be positive, got {viscosity}"
            )));
        }
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::domain(format!(
                "{phase} density must be positive, got {density}"
            )));
        }
        Ok(Self {
            phase,
            viscosity,
            density,
        })
    }
}

/// The wetting/nonwetting pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Phases {
    pub wetting: PhaseParams,
    pub nonwetting: PhaseParams,
}

impl Phases {
    pub fn new(wetting: PhaseParams, nonwetting: PhaseParams) -> Result<Self> {
        if wetting.phase != Phase::Wetting || nonwetting.phase != Phase::Nonwetting {
            return Err(Error::domain("phase pair must be (wetting, nonwetting)"));
        }
        Ok(Self {
            wetting,
            nonwetting,
        })
    }

    pub fn get(&self, phase: Phase) -> &PhaseParams {
        match phase {
            Phase::Wetting => &self.wetting,
            Phase::Nonwetting => &self.nonwetting,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurveFamily {
    LinearTest,
    QuadraticClamped,
    BrooksCoreyRegularized,
    VanGenuchtenClamped,
    Tabulated,
}

impl CurveFamily {
    pub fn name(self) -> &'static str {
        match self {
            CurveFamily::LinearTest => "linear_test",
            CurveFamily::QuadraticClamped => "quadratic_clamped",
            CurveFamily::BrooksCoreyRegularized => "brooks_corey_regularized",
            CurveFamily::VanGenuchtenClamped => "van_genuchten_clamped",
            CurveFamily::Tabulated => "tabulated",
        }
    }
}

impl fmt::Display for CurveFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurveFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "linear_test" => CurveFamily::LinearTest,
            "quadratic_clamped" => CurveFamily::QuadraticClamped,
            "brooks_corey_regularized" => CurveFamily::BrooksCoreyRegularized,
            "van_genuchten_clamped" => CurveFamily::VanGenuchtenClamped,
            "tabulated" => CurveFamily::Tabulated,
            other => return Err(Error::config(format!("unknown curve family `{other}`"))),
        })
    }
}

/// Piecewise-linear table with strictly increasing abscissae. Evaluation
/// extrapolates by the end values.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Table {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() || x.len() < 2 {
            return Err(Error::config("table needs at least two (x, y) rows"));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::config("table contains non-finite values"));
        }
        if let Some(i) = x.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::config(format!(
                "table first column must be strictly increasing (row {})",
                i + 2
            )));
        }
        Ok(Self { x, y })
    }

    /// Parses two whitespace- or comma-separated columns; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            let bad = || Error::ConfigLine {
                line: lineno + 1,
                message: format!("expected two numeric columns, got `{line}`"),
            };
            if cols.len() != 2 {
                return Err(bad());
            }
            x.push(cols[0].parse::<f64>().map_err(|_| bad())?);
            y.push(cols[1].parse::<f64>().map_err(|_| bad())?);
        }
        Self::new(x, y)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        if t <= self.x[0] {
            return self.y[0];
        }
        if t >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let k = self.x.partition_point(|&v| v <= t) - 1;
        let w = (t - self.x[k]) / (self.x[k + 1] - self.x[k]);
        self.y[k] + w * (self.y[k + 1] - self.y[k])
    }

    pub fn max_slope(&self) -> f64 {
        self.x
            .windows(2)
            .zip(self.y.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    fn is_nonincreasing(&self) -> bool {
        self.y.windows(2).all(|w| w[1] <= w[0])
    }
}

/// A constitutive curve: a family, its parameter list and the floor applied
/// when the curve is used as a relative permeability.
///
/// Parameter layout by family (saturation law | relative permeability):
///
/// | family | `S(p_c)` | `k(s)` |
/// |---|---|---|
/// | `linear_test` | `[s0, slope]`: `clamp(s0 - slope·p_c, 0, 1)` | `[a, b]`: `clamp(a + b·s, 0, 1)` |
/// | `quadratic_clamped` | `[a]`: `(1 - a·p_c)²` on `[0, 1/a]`, 1 below, 0 above | `[]`: `s²` |
/// | `brooks_corey_regularized` | `[p_d, θ]`: `(p_c/p_d)^-θ` above `p_d`, 1 below | `[θ]` |
/// | `van_genuchten_clamped` | `[α, n, p_min]` with `p_c` clamped to `≥ p_min` | `[n, s_clamp]` |
/// | `tabulated` | table `(p_c, S)` | table `(s, k)` |
#[derive(Clone, Debug, PartialEq)]
pub struct CurveSpec {
    pub family: CurveFamily,
    pub parameters: Vec<f64>,
    pub mobility_floor: f64,
    pub table: Option<Arc<Table>>,
}

impl CurveSpec {
    pub fn new(family: CurveFamily, parameters: Vec<f64>) -> Result<Self> {
        let spec = Self {
            family,
            parameters,
            mobility_floor: DEFAULT_MOBILITY_FLOOR,
            table: None,
        };
        spec.check_arity()?;
        Ok(spec)
    }

    pub fn tabulated(table: Table) -> Self {
        Self {
            family: CurveFamily::Tabulated,
            parameters: Vec::new(),
            mobility_floor: DEFAULT_MOBILITY_FLOOR,
            table: Some(Arc::new(table)),
        }
    }

    pub fn linear_test(a: f64, b: f64) -> Self {
        Self::new(CurveFamily::LinearTest, vec![a, b]).expect("two parameters")
    }

    pub fn quadratic_clamped(parameters: Vec<f64>) -> Result<Self> {
        Self::new(CurveFamily::QuadraticClamped, parameters)
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.mobility_floor = floor;
        self
    }

    fn p(&self, i: usize) -> f64 {
        self.parameters[i]
    }

    fn check_arity(&self) -> Result<()> {
        let ok = match self.family {
            CurveFamily::LinearTest => self.parameters.len() == 2,
            CurveFamily::QuadraticClamped => self.parameters.len() <= 1,
            CurveFamily::BrooksCoreyRegularized => matches!(self.parameters.len(), 1 | 2),
            CurveFamily::VanGenuchtenClamped => matches!(self.parameters.len(), 2 | 3),
            CurveFamily::Tabulated => true,
        };
        if !ok || self.parameters.iter().any(|p| !p.is_finite()) {
            return Err(Error::config(format!(
                "bad parameter list {:?} for `{}`",
                self.parameters, self.family
            )));
        }
        Ok(())
    }

    fn table(&self) -> Result<&Table> {
        self.table
            .as_deref()
            .ok_or_else(|| Error::config("tabulated curve without table data"))
    }

    /// Checks this spec can serve as a saturation law.
    pub fn validate_saturation_law(&self) -> Result<()> {
        let bad = |why: &str| Err(Error::config(format!("`{}` saturation law: {why}", self.family)));
        match self.family {
            CurveFamily::LinearTest => {
                if self.parameters.len() != 2 {
                    return bad("expected [s0, slope]");
                }
                if self.p(1) <= 0.0 {
                    return bad("slope must be positive");
                }
            }
            CurveFamily::QuadraticClamped => {
                if self.parameters.len() != 1 || self.p(0) <= 0.0 {
                    return bad("expected [a] with a > 0");
                }
            }
            CurveFamily::BrooksCoreyRegularized => {
                if self.parameters.len() != 2 || self.p(0) <= 0.0 || self.p(1) <= 0.0 {
                    return bad("expected [entry_pressure, theta], both positive");
                }
            }
            CurveFamily::VanGenuchtenClamped => {
                if self.parameters.len() != 3 || self.p(0) <= 0.0 || self.p(1) <= 1.0 {
                    return bad("expected [alpha, n, pc_min] with alpha > 0 and n > 1");
                }
            }
            CurveFamily::Tabulated => {
                let t = self.table()?;
                if !t.is_nonincreasing() {
                    return bad("tabulated saturation must be nonincreasing in p_c");
                }
                if t.y.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("tabulated saturation must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// Checks this spec can serve as a relative permeability.
    pub fn validate_relperm(&self) -> Result<()> {
        let bad = |why: &str| {
            Err(Error::config(format!(
                "`{}` relative permeability: {why}",
                self.family
            )))
        };
        if !(self.mobility_floor > 0.0 && self.mobility_floor <= 1.0) {
            return bad("mobility floor must lie in (0, 1]");
        }
        match self.family {
            CurveFamily::LinearTest => {
                if self.parameters.len() != 2 || self.p(1) < 0.0 {
                    return bad("expected [intercept, slope] with slope >= 0");
                }
            }
            CurveFamily::QuadraticClamped => {
                if !self.parameters.is_empty() {
                    return bad("takes no parameters");
                }
            }
            CurveFamily::BrooksCoreyRegularized => {
                if self.parameters.len() != 1 || self.p(0) <= 0.0 {
                    return bad("expected [theta] with theta > 0");
                }
            }
            CurveFamily::VanGenuchtenClamped => {
                if self.parameters.len() != 2 || self.p(0) <= 1.0 || !(0.0..1.0).contains(&self.p(1))
                {
                    return bad("expected [n, s_clamp] with n > 1 and 0 <= s_clamp < 1");
                }
            }
            CurveFamily::Tabulated => {
                let t = self.table()?;
                if t.y.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return bad("tabulated values must lie in [0, 1]");
                }
            }
        }
        Ok(())
    }

    /// `S(p_c)` for a saturation-law curve.
    pub fn saturation_at(&self, pc: f64) -> f64 {
        match self.family {
            CurveFamily::LinearTest => (self.p(0) - self.p(1) * pc).clamp(0.0, 1.0),
            CurveFamily::QuadraticClamped => {
                let a = self.p(0);
                if pc <= 0.0 {
                    1.0
                } else if pc >= 1.0 / a {
                    0.0
                } else {
                    let u = 1.0 - a * pc;
                    u * u
                }
            }
            CurveFamily::BrooksCoreyRegularized => {
                let (pd, theta) = (self.p(0), self.p(1));
                if pc <= pd {
                    1.0
                } else {
                    (pc / pd).powf(-theta)
                }
            }
            CurveFamily::VanGenuchtenClamped => {
                let (alpha, n, pmin) = (self.p(0), self.p(1), self.p(2));
                let m = 1.0 - 1.0 / n;
                let p = pc.max(pmin).max(0.0);
                (1.0 + (alpha * p).powf(n)).powf(-m)
            }
            CurveFamily::Tabulated => self.table.as_ref().map_or(f64::NAN, |t| t.eval(pc)),
        }
    }

    /// Unfloored relative permeability of `phase` at its own saturation `s`.
    pub fn relperm_raw(&self, phase: Phase, s: f64) -> f64 {
        let s = s.clamp(0.0, 1.0);
        match self.family {
            CurveFamily::LinearTest => (self.p(0) + self.p(1) * s).clamp(0.0, 1.0),
            CurveFamily::QuadraticClamped => s * s,
            CurveFamily::BrooksCoreyRegularized => {
                let theta = self.p(0);
                match phase {
                    Phase::Wetting => s.powf((2.0 + 3.0 * theta) / theta),
                    Phase::Nonwetting => s * s * (1.0 - (1.0 - s).powf((2.0 + theta) / theta)),
                }
            }
            CurveFamily::VanGenuchtenClamped => {
                let (n, clamp) = (self.p(0), self.p(1));
                let m = 1.0 - 1.0 / n;
                match phase {
                    Phase::Wetting => {
                        let s = s.min(1.0 - clamp);
                        let inner = 1.0 - (1.0 - s.powf(1.0 / m)).powf(m);
                        s.sqrt() * inner * inner
                    }
                    Phase::Nonwetting => {
                        let s = s.max(clamp);
                        s.sqrt() * (1.0 - (1.0 - s).powf(1.0 / m)).powf(2.0 * m)
                    }
                }
            }
            CurveFamily::Tabulated => self.table.as_ref().map_or(f64::NAN, |t| t.eval(s)),
        }
    }

    /// Relative permeability with the mobility floor applied.
    pub fn relperm(&self, phase: Phase, s: f64) -> f64 {
        self.relperm_raw(phase, s).max(self.mobility_floor)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub porosity: f64,
    /// m²
    pub intrinsic_permeability: f64,
    pub relperm_w: CurveSpec,
    pub relperm_g: CurveSpec,
    pub saturation_law: CurveSpec,
}

impl LayerParams {
    pub fn new(
        porosity: f64,
        intrinsic_permeability: f64,
        saturation_law: CurveSpec,
        relperm_w: CurveSpec,
        relperm_g: CurveSpec,
    ) -> Result<Self> {
        if !(porosity > 0.0 && porosity <= 1.0) {
            return Err(Error::domain(format!("porosity must lie in (0, 1], got {porosity}")));
        }
        if !(intrinsic_permeability > 0.0 && intrinsic_permeability.is_finite()) {
            return Err(Error::domain(format!(
                "intrinsic permeability must be positive, got {intrinsic_permeability}"
            )));
        }
        saturation_law.validate_saturation_law()?;
        relperm_w.validate_relperm()?;
        relperm_g.validate_relperm()?;
        Ok(Self {
            porosity,
            intrinsic_permeability,
            relperm_w,
            relperm_g,
            saturation_law,
        })
    }

    pub fn relperm_curve(&self, phase: Phase) -> &CurveSpec {
        match phase {
            Phase::Wetting => &self.relperm_w,
            Phase::Nonwetting => &self.relperm_g,
        }
    }

    /// Saturation as a function of capillary pressure, no input checks.
    #[inline]
    pub fn saturation_pc(&self, pc: f64) -> f64 {
        self.saturation_law.saturation_at(pc)
    }

    /// Phase mobility `k_i·k_α(s)/μ_α` for an in-range wetting saturation.
    #[inline]
    pub fn mobility_unchecked(&self, phase: &PhaseParams, wetting_saturation: f64) -> f64 {
        let s = phase.phase.own_saturation(wetting_saturation.clamp(0.0, 1.0));
        self.intrinsic_permeability / phase.viscosity * self.relperm_curve(phase.phase).relperm(phase.phase, s)
    }
}

/// `S_l(p_g - p_w)`.
pub fn saturation(layer: &LayerParams, p_g: f64, p_w: f64) -> Result<f64> {
    if !p_g.is_finite() || !p_w.is_finite() {
        return Err(Error::domain(format!(
            "non-finite pressures (p_g = {p_g}, p_w = {p_w})"
        )));
    }
    Ok(layer.saturation_pc(p_g - p_w))
}

/// `(k_i/μ_α)·k_α(s)` with `s = S` for the wetting and `1 - S` for the
/// nonwetting phase; never below `(k_i/μ_α)·mobility_floor`.
pub fn mobility(phase: &PhaseParams, layer: &LayerParams, s: f64) -> Result<f64> {
    if !s.is_finite() || s < -SATURATION_SLACK || s > 1.0 + SATURATION_SLACK {
        return Err(Error::domain(format!("saturation {s} outside [0, 1]")));
    }
    Ok(layer.mobility_unchecked(phase, s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularityConstants {
    /// Lipschitz constant of `Φ·S(p_c)`.
    pub lipschitz_s: f64,
    /// Lipschitz constant of the wetting mobility with respect to `Φ·S`.
    pub lipschitz_kw: f64,
    pub lipschitz_kg: f64,
    /// `m`: lower bound of both phase mobilities.
    pub mobility_lower: f64,
    /// `M_k`: upper bound of both phase mobilities.
    pub mobility_upper: f64,
}

impl RegularityConstants {
    pub fn lipschitz_k(&self, phase: Phase) -> f64 {
        match phase {
            Phase::Wetting => self.lipschitz_kw,
            Phase::Nonwetting => self.lipschitz_kg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.lipschitz_s,
            self.lipschitz_kw,
            self.lipschitz_kg,
            self.mobility_lower,
            self.mobility_upper,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite
            || self.lipschitz_s <= 0.0
            || self.lipschitz_kw < 0.0
            || self.lipschitz_kg < 0.0
            || self.mobility_lower <= 0.0
            || self.mobility_lower > self.mobility_upper
        {
            return Err(Error::domain(format!("invalid regularity constants {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyOptions {
    /// Number of sampling intervals for families without a closed-form constant.
    pub samples: usize,
    /// Multiplicative margin applied to sampled estimates.
    pub margin: f64,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            samples: 4096,
            margin: 1.01,
        }
    }
}

/// Maximum difference quotient of `f` on a uniform grid of `n` intervals.
pub fn max_difference_quotient(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut prev = f(a);
    let mut best = 0.0f64;
    for i in 1..=n {
        let x = if i == n { b } else { a + i as f64 * h };
        let v = f(x);
        best = best.max(((v - prev) / h).abs());
        prev = v;
    }
    best
}

/// Sampled Lipschitz estimate. Refines the grid fourfold and rejects the
/// curve when the quotient keeps growing, the signature of an unbounded
/// derivative.
fn sampled_lipschitz(
    family: CurveFamily,
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    opts: &CertifyOptions,
) -> Result<f64> {
    let coarse = max_difference_quotient(&f, a, b, opts.samples);
    let fine = max_difference_quotient(&f, a, b, 4 * opts.samples);
    if !fine.is_finite() || fine > 1.5 * coarse + 1e-12 {
        return Err(Error::Certification {
            family: family.name().to_string(),
            reason: format!(
                "difference quotients grow under refinement ({coarse:.3e} -> {fine:.3e}); curve is not Lipschitz on [{a}, {b}]"
            ),
        });
    }
    Ok(fine * opts.margin)
}

fn saturation_lipschitz(law: &CurveSpec, range: (f64, f64), opts: &CertifyOptions) -> Result<f64> {
    Ok(match law.family {
        CurveFamily::LinearTest => law.p(1).abs(),
        CurveFamily::QuadraticClamped => 2.0 * law.p(0),
        CurveFamily::BrooksCoreyRegularized => law.p(1) / law.p(0),
        CurveFamily::Tabulated => law.table()?.max_slope(),
        CurveFamily::VanGenuchtenClamped => {
            sampled_lipschitz(law.family, |pc| law.saturation_at(pc), range.0, range.1, opts)?
        }
    })
}

fn relperm_lipschitz(curve: &CurveSpec, phase: Phase, opts: &CertifyOptions) -> Result<f64> {
    Ok(match curve.family {
        CurveFamily::LinearTest => curve.p(1).abs(),
        CurveFamily::QuadraticClamped => 2.0,
        CurveFamily::BrooksCoreyRegularized if phase == Phase::Wetting => (2.0 + 3.0 * curve.p(0)) / curve.p(0),
        CurveFamily::Tabulated => curve.table()?.max_slope(),
        CurveFamily::VanGenuchtenClamped if curve.p(1) <= 0.0 => {
            return Err(Error::Certification {
                family: curve.family.name().to_string(),
                reason: format!(
                    "{phase}-phase Mualem curve has unbounded slope at the end of [0, 1]; set s_clamp > 0"
                ),
            })
        }
        _ => sampled_lipschitz(
            curve.family,
            |s| curve.relperm(phase, s),
            0.0,
            1.0,
            opts,
        )?,
    })
}

/// Regularity constants of one layer valid on `pc_range`.
///
/// Constants refer to the porosity-weighted saturation `Φ·S` that enters the
/// storage term: `L_S` is scaled by `Φ` and the mobility constants by `1/Φ`.
/// Mobility constants include the `k_i/μ_α` factor.
pub fn certify_constants(
    layer: &LayerParams,
    phases: &Phases,
    pc_range: (f64, f64),
    opts: &CertifyOptions,
) -> Result<RegularityConstants> {
    let (a, b) = pc_range;
    if !(a.is_finite() && b.is_finite() && a < b) {
        return Err(Error::domain(format!("invalid p_c range [{a}, {b}]")));
    }
    let phi = layer.porosity;
    let ls = saturation_lipschitz(&layer.saturation_law, pc_range, opts)?;
    if ls <= 0.0 {
        return Err(Error::Certification {
            family: layer.saturation_law.family.name().to_string(),
            reason: "saturation law is constant; L_S must be positive".into(),
        });
    }
    let mut lk = [0.0; 2];
    let mut lower = f64::INFINITY;
    let mut upper = 0.0f64;
    for phase in Phase::ALL {
        let params = phases.get(phase);
        let curve = layer.relperm_curve(phase);
        let scale = layer.intrinsic_permeability / params.viscosity;
        lk[phase.index()] = scale * relperm_lipschitz(curve, phase, opts)? / phi;
        lower = lower.min(scale * curve.mobility_floor);
        let n = opts.samples;
        let peak = (0..=n)
            .map(|i| curve.relperm(phase, i as f64 / n as f64))
            .fold(curve.mobility_floor, f64::max);
        upper = upper.max(scale * peak);
    }
    let constants = RegularityConstants {
        lipschitz_s: phi * ls,
        lipschitz_kw: lk[0],
        lipschitz_kg: lk[1],
        mobility_lower: lower,
        mobility_upper: upper,
    };
    constants.validate()?;
    Ok(constants)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn phases(mu_w: f64, mu_g: f64) -> Phases {
        Phases::new(
            PhaseParams::new(Phase::Wetting, mu_w, 1000.0).unwrap(),
            PhaseParams::new(Phase::Nonwetting, mu_g, 1.2).unwrap(),
        )
        .unwrap()
    }

    fn layer(sat: CurveSpec, kw: CurveSpec, kg: CurveSpec) -> LayerParams {
        LayerParams::new(1.0, 1.0, sat, kw, kg).unwrap()
    }

    #[test]
    fn linear_test_saturation() {
        let l = layer(
            CurveSpec::linear_test(1.0, 0.1),
            CurveSpec::linear_test(0.0, 1.0),
            CurveSpec::linear_test(0.0, 1.0),
        );
        assert_relative_eq!(saturation(&l, 2.0, 1.0).unwrap(), 0.9, epsilon = 1e-15);
        assert_eq!(saturation(&l, 3.5, 3.5).unwrap(), l.saturation_pc(0.0));
        assert!(saturation(&l, f64::NAN, 0.0).is_err());
        assert!(saturation(&l, 0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn van_genuchten_against_high_precision_value() {
        let law = CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![0.8, 1.6, 0.05]).unwrap();
        // 40-digit evaluation of (1 + (0.8·1.5)^1.6)^(-0.375)
        assert_relative_eq!(law.saturation_at(1.5), 0.727_165_242_347_200_3, epsilon = 1e-14);
        // clamped below p_min
        assert_eq!(law.saturation_at(-3.0), law.saturation_at(0.05));
    }

    #[test]
    fn quadratic_mobility_and_floor() {
        let kw = CurveSpec::quadratic_clamped(vec![]).unwrap().with_floor(0.01);
        let l = layer(
            CurveSpec::linear_test(1.0, 0.1),
            kw.clone(),
            kw,
        );
        let p = phases(1.0, 1.0);
        assert_relative_eq!(mobility(&p.wetting, &l, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(mobility(&p.wetting, &l, 0.0).unwrap(), 0.01, epsilon = 1e-15);
        assert!(mobility(&p.wetting, &l, 1.0 + 1e-13).is_ok());
        assert!(mobility(&p.wetting, &l, 1.0 + 1e-9).is_err());
        assert!(mobility(&p.wetting, &l, -1e-9).is_err());
    }

    #[test]
    fn brooks_corey_against_high_precision_value() {
        let bc = CurveSpec::new(CurveFamily::BrooksCoreyRegularized, vec![1.5]).unwrap();
        let l = LayerParams::new(
            0.4,
            2.0,
            CurveSpec::new(CurveFamily::BrooksCoreyRegularized, vec![0.5, 1.5]).unwrap(),
            bc.clone(),
            bc,
        )
        .unwrap();
        let p = Phases::new(
            PhaseParams::new(Phase::Wetting, 0.5, 1000.0).unwrap(),
            PhaseParams::new(Phase::Nonwetting, 2.0, 1.0).unwrap(),
        )
        .unwrap();
        assert_relative_eq!(
            mobility(&p.wetting, &l, 0.7).unwrap(),
            0.852_743_003_273_593_7,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            mobility(&p.nonwetting, &l, 0.7).unwrap(),
            0.050_843_433_523_151_31,
            epsilon = 1e-14
        );
    }

    #[test]
    fn closed_form_constants() {
        let p = phases(1.0, 1.0);
        let l = layer(
            CurveSpec::linear_test(1.0, 0.1),
            CurveSpec::quadratic_clamped(vec![]).unwrap(),
            CurveSpec::quadratic_clamped(vec![]).unwrap(),
        );
        let c = certify_constants(&l, &p, DEFAULT_PC_RANGE, &CertifyOptions::default()).unwrap();
        assert_eq!(c.lipschitz_s, 0.1);
        assert_eq!(c.lipschitz_kw, 2.0);
        assert_eq!(c.lipschitz_kg, 2.0);
        assert_eq!(c.mobility_lower, DEFAULT_MOBILITY_FLOOR);
        assert_relative_eq!(c.mobility_upper, 1.0);
    }

    #[test]
    fn porosity_scaling_of_constants() {
        let p = phases(2.0, 4.0);
        let l = LayerParams::new(
            0.5,
            8.0,
            CurveSpec::linear_test(1.0, 0.2),
            CurveSpec::linear_test(0.0, 1.0).with_floor(0.1),
            CurveSpec::linear_test(0.0, 1.0).with_floor(0.1),
        )
        .unwrap();
        let c = certify_constants(&l, &p, DEFAULT_PC_RANGE, &CertifyOptions::default()).unwrap();
        assert_relative_eq!(c.lipschitz_s, 0.1);
        assert_relative_eq!(c.lipschitz_kw, 4.0 / 0.5);
        assert_relative_eq!(c.lipschitz_kg, 2.0 / 0.5);
        assert_relative_eq!(c.mobility_lower, 0.2);
        assert_relative_eq!(c.mobility_upper, 4.0);
    }

    #[test]
    fn sampled_van_genuchten_constant_matches_fine_grid() {
        let p = phases(1.0, 1.0);
        let l = layer(
            CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![0.8, 1.6, 0.05]).unwrap(),
            CurveSpec::linear_test(0.0, 1.0),
            CurveSpec::linear_test(0.0, 1.0),
        );
        let c = certify_constants(&l, &p, DEFAULT_PC_RANGE, &CertifyOptions::default()).unwrap();
        // maximum difference quotient on 2·10⁶ intervals of [-10, 10]
        let fine = 0.214_455_284_730_519_2;
        assert!((c.lipschitz_s - fine).abs() <= 0.05 * fine, "{} vs {fine}", c.lipschitz_s);
        assert!(c.lipschitz_s >= fine);
    }

    #[test]
    fn unclamped_mualem_is_rejected() {
        let p = phases(1.0, 1.0);
        let vg = CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![1.6, 0.0]).unwrap();
        let l = layer(CurveSpec::linear_test(1.0, 0.1), vg.clone(), vg);
        match certify_constants(&l, &p, DEFAULT_PC_RANGE, &CertifyOptions::default()) {
            Err(Error::Certification { family, .. }) => assert_eq!(family, "van_genuchten_clamped"),
            other => panic!("expected certification error, got {other:?}"),
        }
        // the sampling detector flags it on its own as well
        let raw = CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![1.6, 0.0]).unwrap();
        let err = sampled_lipschitz(
            raw.family,
            |s| raw.relperm(Phase::Wetting, s),
            0.0,
            1.0,
            &CertifyOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn clamped_mualem_certifies() {
        let p = phases(1.0, 1.0);
        let vg = CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![1.6, 0.05]).unwrap();
        let l = layer(
            CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![0.8, 1.6, 0.05]).unwrap(),
            vg.clone(),
            vg,
        );
        let c = certify_constants(&l, &p, DEFAULT_PC_RANGE, &CertifyOptions::default()).unwrap();
        for phase in Phase::ALL {
            let fine = max_difference_quotient(|s| l.relperm_curve(phase).relperm(phase, s), 0.0, 1.0, 1 << 20);
            assert!(c.lipschitz_k(phase) >= fine, "{phase}: {} < {fine}", c.lipschitz_k(phase));
        }
    }

    #[test]
    fn tabulated_parsing_and_eval() {
        let t = Table::parse("# pc S\n0 1\n1, 0.5\n3 0.1\n").unwrap();
        assert_eq!(t.eval(-1.0), 1.0);
        assert_relative_eq!(t.eval(0.5), 0.75);
        assert_relative_eq!(t.eval(2.0), 0.3);
        assert_eq!(t.eval(10.0), 0.1);
        assert_relative_eq!(t.max_slope(), 0.5);
        assert!(Table::parse("0 1\n0 0.5\n").is_err());
        match Table::parse("0 1\nfoo 2\n") {
            Err(Error::ConfigLine { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let law = CurveSpec::tabulated(t);
        law.validate_saturation_law().unwrap();
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(PhaseParams::new(Phase::Wetting, 0.0, 1.0).is_err());
        assert!(PhaseParams::new(Phase::Wetting, 1.0, -1.0).is_err());
        assert!(LayerParams::new(
            0.0,
            1.0,
            CurveSpec::linear_test(1.0, 0.1),
            CurveSpec::linear_test(0.0, 1.0),
            CurveSpec::linear_test(0.0, 1.0)
        )
        .is_err());
        assert!(CurveSpec::linear_test(0.0, 1.0)
            .with_floor(0.0)
            .validate_relperm()
            .is_err());
        assert!("cubic".parse::<CurveFamily>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn laws() -> Vec<CurveSpec> {
            vec![
                CurveSpec::linear_test(0.5, 0.1),
                CurveSpec::quadratic_clamped(vec![0.2]).unwrap(),
                CurveSpec::new(CurveFamily::BrooksCoreyRegularized, vec![0.5, 2.0]).unwrap(),
                CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![0.8, 1.6, 0.05]).unwrap(),
            ]
        }

        fn relperms() -> Vec<CurveSpec> {
            vec![
                CurveSpec::linear_test(0.0, 1.0),
                CurveSpec::quadratic_clamped(vec![]).unwrap(),
                CurveSpec::new(CurveFamily::BrooksCoreyRegularized, vec![2.0]).unwrap(),
                CurveSpec::new(CurveFamily::VanGenuchtenClamped, vec![1.6, 0.05]).unwrap(),
            ]
        }

        proptest! {
            #[test]
            fn saturation_nonincreasing(i in 0usize..4, a in -10.0f64..10.0, d in 0.0f64..5.0) {
                let law = &laws()[i];
                let (lo, hi) = (law.saturation_at(a), law.saturation_at(a + d));
                prop_assert!(hi <= lo + 1e-15);
                prop_assert!((0.0..=1.0).contains(&lo));
            }

            #[test]
            fn relperm_monotone_in_wetting_saturation(i in 0usize..4, s in 0.0f64..1.0, d in 0.0f64..0.5) {
                let c = &relperms()[i];
                let t = (s + d).min(1.0);
                let w = |x: f64| c.relperm(Phase::Wetting, x);
                let g = |x: f64| c.relperm(Phase::Nonwetting, 1.0 - x);
                prop_assert!(w(t) >= w(s) - 1e-15);
                prop_assert!(g(t) <= g(s) + 1e-15);
                prop_assert!((0.0..=1.0).contains(&w(s)));
            }

            #[test]
            fn mobility_floor_holds(i in 0usize..4, s in 0.0f64..=1.0, ki in 0.01f64..10.0, mu in 0.1f64..10.0) {
                let c = relperms()[i].clone().with_floor(1e-3);
                let l = LayerParams::new(0.3, ki, CurveSpec::linear_test(0.5, 0.1), c.clone(), c).unwrap();
                for phase in Phase::ALL {
                    let p = PhaseParams::new(phase, mu, 1.0).unwrap();
                    prop_assert!(mobility(&p, &l, s).unwrap() >= ki / mu * 1e-3 * (1.0 - 1e-15));
                }
            }

            #[test]
            fn certified_constants_dominate_quotients(i in 0usize..4, j in 0usize..4, a in -10.0f64..9.9, d in 1e-6f64..0.1) {
                let p = phases(1.0, 1.0);
                let l = layer(laws()[i].clone(), relperms()[j].clone(), relperms()[j].clone());
                let c = certify_constants(&l, &p, DEFAULT_PC_RANGE, &CertifyOptions::default()).unwrap();
                let b = (a + d).min(10.0);
                let q = (l.saturation_pc(b) - l.saturation_pc(a)).abs() / (b - a);
                prop_assert!(q <= c.lipschitz_s * (1.0 + 1e-9));
                let s0 = (a + 10.0) / 20.0;
                let s1 = (s0 + d).min(1.0);
                if s1 > s0 {
                    for phase in Phase::ALL {
                        let curve = l.relperm_curve(phase);
                        let q = (curve.relperm(phase, s1) - curve.relperm(phase, s0)).abs() / (s1 - s0);
                        prop_assert!(q <= c.lipschitz_k(phase) * (1.0 + 1e-9));
                    }
                }
            }
        }
    }
}
