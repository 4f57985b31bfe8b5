//! Scenario files: flat, sectioned `key = value` text.
//!
//! Every semantic error is reported against the line that carries the
//! offending value (or the section header, for a missing key).

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::constitutive::{
    certify_constants, CertifyOptions, CurveFamily, CurveSpec, LayerParams, Phase, PhaseParams, Phases,
    RegularityConstants, Table, DEFAULT_MOBILITY_FLOOR, DEFAULT_PC_RANGE,
};
use crate::dd_solver::{GInitMode, SchemeParams};
use crate::mesh::{build_mesh, PairingMode, Subdomain};
use crate::problem::{Discretization, MassMode, Model, Problem, ScalarField, SourceSpec};
use crate::timestepper::{gradient_estimate, suggest_L, SimulationSettings, TimeGrid};
use crate::verification::make_manufactured;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Section {
    pub line: usize,
    pub entries: BTreeMap<String, Entry>,
}

/// Raw parse of an INI-style file. `#` and `;` start comments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Ini {
    pub sections: BTreeMap<String, Section>,
}

fn line_err(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigLine {
        line,
        message: message.into(),
    }
}

impl Ini {
    pub fn parse(text: &str) -> Result<Self> {
        let mut ini = Ini::default();
        let mut current: Option<String> = None;
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split(['#', ';']).next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            if let Some(rest) = body.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| line_err(line, "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(line_err(line, "empty section name"));
                }
                if ini.sections.contains_key(name) {
                    return Err(line_err(line, format!("duplicate section [{name}]")));
                }
                ini.sections.insert(
                    name.to_string(),
                    Section {
                        line,
                        entries: BTreeMap::new(),
                    },
                );
                current = Some(name.to_string());
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| line_err(line, format!("expected `key = value`, got `{body}`")))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(line_err(line, "empty key"));
            }
            let name = current
                .as_ref()
                .ok_or_else(|| line_err(line, format!("key `{key}` outside any section")))?;
            let section = ini.sections.get_mut(name).expect("section exists");
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if section.entries.insert(key.to_string(), entry).is_some() {
                return Err(line_err(line, format!("duplicate key `{key}` in [{name}]")));
            }
        }
        Ok(ini)
    }
}

/// Typed access to one section; tracks which keys were consumed so that
/// unknown keys can be rejected.
struct Reader<'a> {
    name: &'a str,
    section: Option<&'a Section>,
    used: Vec<&'a str>,
}

impl<'a> Reader<'a> {
    fn new(ini: &'a Ini, name: &'a str) -> Self {
        Self {
            name,
            section: ini.sections.get(name),
            used: Vec::new(),
        }
    }

    fn header_line(&self) -> usize {
        self.section.map_or(0, |s| s.line)
    }

    fn raw(&mut self, key: &'a str) -> Option<&'a Entry> {
        self.used.push(key);
        self.section.and_then(|s| s.entries.get(key))
    }

    fn required(&mut self, key: &'a str) -> Result<&'a Entry> {
        let line = self.header_line();
        let name = self.name;
        self.raw(key).ok_or_else(|| {
            if line == 0 {
                Error::config(format!("missing section [{name}] (needed for `{key}`)"))
            } else {
                line_err(line, format!("missing key `{key}` in [{name}]"))
            }
        })
    }

    fn parse_entry<T: FromStr>(&self, key: &str, e: &Entry) -> Result<T> {
        e.value
            .parse()
            .map_err(|_| line_err(e.line, format!("{}.{key}: cannot parse `{}`", self.name, e.value)))
    }

    fn get<T: FromStr>(&mut self, key: &'a str) -> Result<T> {
        let e = self.required(key)?;
        self.parse_entry(key, e)
    }

    fn get_or<T: FromStr>(&mut self, key: &'a str, default: T) -> Result<T> {
        match self.raw(key) {
            Some(e) => self.parse_entry(key, e),
            None => Ok(default),
        }
    }

    fn positive(&mut self, key: &'a str, default: Option<f64>) -> Result<f64> {
        let (v, line) = match (self.raw(key), default) {
            (Some(e), _) => (self.parse_entry::<f64>(key, e)?, e.line),
            (None, Some(d)) => return Ok(d),
            (None, None) => return Err(self.required(key).unwrap_err()),
        };
        if !(v > 0.0 && v.is_finite()) {
            return Err(line_err(line, format!("{}.{key} must be positive, got {v}", self.name)));
        }
        Ok(v)
    }

    fn numbers(&self, key: &str, e: &Entry) -> Result<Vec<f64>> {
        e.value
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| line_err(e.line, format!("{}.{key}: `{t}` is not a number", self.name)))
            })
            .collect()
    }

    fn finish(&self) -> Result<()> {
        if let Some(s) = self.section {
            for (key, e) in &s.entries {
                if !self.used.contains(&key.as_str()) {
                    return Err(line_err(e.line, format!("unknown key `{key}` in [{}]", self.name)));
                }
            }
        }
        Ok(())
    }
}

/// Closed-form initial, boundary and source expressions.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldExpr {
    Zero,
    Constant(f64),
    /// `a·sin(πx/lx)·sin(πy/ly)`
    Bump(f64),
    /// `a + b·x`
    LinearX(f64, f64),
    /// `a + b·y`
    LinearY(f64, f64),
}

impl FieldExpr {
    fn parse(text: &str, line: usize, key: &str) -> Result<Self> {
        let mut parts = text.split_whitespace();
        let head = parts.next().unwrap_or("");
        let args: Vec<f64> = parts
            .map(|t| t.parse().map_err(|_| line_err(line, format!("{key}: `{t}` is not a number"))))
            .collect::<Result<_>>()?;
        let want = |n: usize| -> Result<()> {
            if args.len() == n {
                Ok(())
            } else {
                Err(line_err(line, format!("{key}: `{head}` takes {n} argument(s), got {}", args.len())))
            }
        };
        Ok(match head {
            "zero" => {
                want(0)?;
                FieldExpr::Zero
            }
            "constant" => {
                want(1)?;
                FieldExpr::Constant(args[0])
            }
            "bump" => {
                want(1)?;
                FieldExpr::Bump(args[0])
            }
            "linear_x" => {
                want(2)?;
                FieldExpr::LinearX(args[0], args[1])
            }
            "linear_y" => {
                want(2)?;
                FieldExpr::LinearY(args[0], args[1])
            }
            other => {
                return Err(line_err(
                    line,
                    format!("{key}: unknown expression `{other}` (zero, constant, bump, linear_x, linear_y)"),
                ))
            }
        })
    }

    pub fn field(&self, lx: f64, ly: f64) -> ScalarField {
        match *self {
            FieldExpr::Zero => ScalarField::Zero,
            FieldExpr::Constant(c) => ScalarField::Constant(c),
            FieldExpr::Bump(a) => ScalarField::function(move |x, y, _| a * (PI * x / lx).sin() * (PI * y / ly).sin()),
            FieldExpr::LinearX(a, b) => ScalarField::function(move |x, _, _| a + b * x),
            FieldExpr::LinearY(a, b) => ScalarField::function(move |_, y, _| a + b * y),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
    pub split_index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LChoice {
    Auto,
    /// `[phase][subdomain]`
    Values([[f64; 2]; 2]),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientBound {
    /// 1.5 × the discrete gradient of the initial data (plus 10⁻³).
    Auto,
    Value(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchemeConfig {
    pub l: LChoice,
    pub lambda: [f64; 2],
    pub tol: f64,
    pub max_iter: usize,
    pub g_init: GInitMode,
    pub override_admissibility: bool,
    pub gradient_bound: GradientBound,
    pub monitor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemData {
    /// A catalog case supplies model, sources, boundary and initial data.
    Case(String),
    Fields {
        initial: [FieldExpr; 2],
        boundary: [FieldExpr; 2],
        source: [FieldExpr; 2],
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
    pub vtk: bool,
    /// Record wall-clock seconds in the convergence log; off keeps outputs
    /// bitwise reproducible.
    pub timing: bool,
    pub verbosity: Option<String>,
}

/// Fully validated scenario.
#[derive(Clone, Debug)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    pub model: Model,
    pub pc_range: [(f64, f64); 2],
    pub t_final: f64,
    pub steps: usize,
    pub scheme: SchemeConfig,
    pub discretization: Discretization,
    pub problem: ProblemData,
    pub output: OutputConfig,
    /// Source text, echoed into the run manifest.
    pub text: String,
}

fn parse_bool(r: &Reader, key: &str, e: &Entry) -> Result<bool> {
    match e.value.as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        v => Err(line_err(e.line, format!("{}.{key}: expected a boolean, got `{v}`", r.name))),
    }
}

fn bool_or<'a>(r: &mut Reader<'a>, key: &'a str, default: bool) -> Result<bool> {
    match r.raw(key) {
        Some(e) => parse_bool(r, key, e),
        None => Ok(default),
    }
}

fn phase_params(ini: &Ini, name: &'static str, phase: Phase) -> Result<PhaseParams> {
    let mut r = Reader::new(ini, name);
    let mu_line = r.raw("viscosity").map_or(r.header_line(), |e| e.line);
    let mu = r.positive("viscosity", None)?;
    let rho: f64 = r.get_or("density", 0.0)?;
    r.finish()?;
    PhaseParams::new(phase, mu, rho).map_err(|e| line_err(mu_line, e.to_string()))
}

fn curve(r: &Reader, key: &str, e: &Entry, base: &Path, floor: f64) -> Result<CurveSpec> {
    let mut parts = e.value.split_whitespace();
    let family: CurveFamily = parts
        .next()
        .unwrap_or("")
        .parse()
        .map_err(|err: Error| line_err(e.line, format!("{}.{key}: {err}", r.name)))?;
    let spec = if family == CurveFamily::Tabulated {
        let file = parts
            .next()
            .ok_or_else(|| line_err(e.line, format!("{}.{key}: tabulated curve needs a file path", r.name)))?;
        let path = base.join(file);
        let table = Table::load(&path)
            .map_err(|err| line_err(e.line, format!("{}.{key}: {}: {err}", r.name, path.display())))?;
        CurveSpec::tabulated(table)
    } else {
        let params: Vec<f64> = parts
            .map(|t| t.parse().map_err(|_| line_err(e.line, format!("{}.{key}: `{t}` is not a number", r.name))))
            .collect::<Result<_>>()?;
        CurveSpec::new(family, params).map_err(|err| line_err(e.line, format!("{}.{key}: {err}", r.name)))?
    };
    Ok(spec.with_floor(floor))
}

fn layer(ini: &Ini, name: &'static str, base: &Path) -> Result<(LayerParams, (f64, f64))> {
    let mut r = Reader::new(ini, name);
    let porosity_line = r.raw("porosity").map_or(r.header_line(), |e| e.line);
    let porosity: f64 = r.get_or("porosity", 1.0)?;
    let k_i = r.positive("permeability", None)?;
    let floor = r.positive("mobility_floor", Some(DEFAULT_MOBILITY_FLOOR))?;
    let sat_entry = r.required("saturation")?;
    let sat = curve(&r, "saturation", sat_entry, base, floor)?;
    let kw_entry = r.required("relperm_w")?;
    let kw = curve(&r, "relperm_w", kw_entry, base, floor)?;
    let kg_entry = r.required("relperm_g")?;
    let kg = curve(&r, "relperm_g", kg_entry, base, floor)?;
    let range = match r.raw("pc_range") {
        Some(e) => {
            let v = r.numbers("pc_range", e)?;
            if v.len() != 2 || !(v[0] < v[1]) || !v.iter().all(|x| x.is_finite()) {
                return Err(line_err(e.line, format!("{name}.pc_range must be two finite values a < b")));
            }
            (v[0], v[1])
        }
        None => DEFAULT_PC_RANGE,
    };
    r.finish()?;
    let params = LayerParams::new(porosity, k_i, sat, kw, kg).map_err(|e| line_err(porosity_line, e.to_string()))?;
    Ok((params, range))
}

impl ScenarioConfig {
    /// Parses `text`; relative table paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::parse(text)?;
        const KNOWN: [&str; 11] = [
            "geometry",
            "phase.wetting",
            "phase.nonwetting",
            "layer.1",
            "layer.2",
            "physics",
            "time",
            "scheme",
            "problem",
            "output",
            "discretization",
        ];
        for (name, s) in &ini.sections {
            if !KNOWN.contains(&name.as_str()) {
                return Err(line_err(s.line, format!("unknown section [{name}]")));
            }
        }

        let mut r = Reader::new(&ini, "problem");
        let case = r.raw("case").map(|e| (e.value.clone(), e.line));
        let problem = match &case {
            Some((id, line)) => {
                make_manufactured(id).map_err(|e| line_err(*line, e.to_string()))?;
                ProblemData::Case(id.clone())
            }
            None => {
                let mut expr = |key: &'static str, default: Option<FieldExpr>| -> Result<FieldExpr> {
                    match r.raw(key) {
                        Some(e) => FieldExpr::parse(&e.value, e.line, key),
                        None => default.map_or_else(|| Err(r.required(key).unwrap_err()), Ok),
                    }
                };
                let initial = [expr("initial_w", None)?, expr("initial_g", None)?];
                let boundary = [expr("boundary_w", Some(FieldExpr::Zero))?, expr("boundary_g", Some(FieldExpr::Zero))?];
                let source = [expr("source_w", Some(FieldExpr::Zero))?, expr("source_g", Some(FieldExpr::Zero))?];
                ProblemData::Fields {
                    initial,
                    boundary,
                    source,
                }
            }
        };
        r.finish()?;
        let manufactured = match &problem {
            ProblemData::Case(id) => Some(make_manufactured(id)?),
            ProblemData::Fields { .. } => None,
        };

        let mut r = Reader::new(&ini, "geometry");
        let nx_line = r.raw("nx").map_or(r.header_line(), |e| e.line);
        let ny_line = r.raw("ny").map_or(r.header_line(), |e| e.line);
        let (lx, ly) = match &manufactured {
            Some(c) => (c.lx, c.ly),
            None => (r.positive("lx", None)?, r.positive("ly", None)?),
        };
        let nx: usize = r.get("nx")?;
        let ny: usize = r.get("ny")?;
        if nx == 0 {
            return Err(line_err(nx_line, "geometry.nx must be at least 2, got 0"));
        }
        if ny == 0 {
            return Err(line_err(ny_line, "geometry.ny must be at least 1, got 0"));
        }
        let split_line = r.raw("split_index").map_or(nx_line, |e| e.line);
        let split_index: usize = r.get_or("split_index", nx / 2)?;
        r.finish()?;
        build_mesh(lx, ly, nx, ny, split_index).map_err(|e| line_err(split_line, e.to_string()))?;
        let geometry = Geometry {
            lx,
            ly,
            nx,
            ny,
            split_index,
        };

        let (model, pc_range) = match &manufactured {
            Some(c) => (c.model.clone(), [DEFAULT_PC_RANGE; 2]),
            None => {
                let base = base.to_path_buf();
                let w = phase_params(&ini, "phase.wetting", Phase::Wetting)?;
                let g = phase_params(&ini, "phase.nonwetting", Phase::Nonwetting)?;
                let phases = Phases::new(w, g)?;
                let (l1, r1) = layer(&ini, "layer.1", &base)?;
                let (l2, r2) = layer(&ini, "layer.2", &base)?;
                let mut r = Reader::new(&ini, "physics");
                let gravity: f64 = r.get_or("gravity", 9.81)?;
                r.finish()?;
                (
                    Model {
                        layers: [l1, l2],
                        phases,
                        gravity,
                    },
                    [r1, r2],
                )
            }
        };

        let mut r = Reader::new(&ini, "time");
        let t_final = match &manufactured {
            Some(c) => r.positive("T", Some(c.t_final))?,
            None => r.positive("T", None)?,
        };
        let n_line = r.raw("N").map_or(r.header_line(), |e| e.line);
        let steps: usize = r.get("N")?;
        if steps == 0 {
            return Err(line_err(n_line, "time.N must be at least 1"));
        }
        r.finish()?;

        let mut r = Reader::new(&ini, "scheme");
        let l = match r.raw("L") {
            None => LChoice::Auto,
            Some(e) if e.value == "auto" => LChoice::Auto,
            Some(e) => {
                let v = r.numbers("L", e)?;
                if !v.iter().all(|&x| x > 0.0 && x.is_finite()) {
                    return Err(line_err(e.line, "scheme.L values must be positive"));
                }
                match v.len() {
                    1 => LChoice::Values([[v[0]; 2]; 2]),
                    4 => LChoice::Values([[v[0], v[1]], [v[2], v[3]]]),
                    n => {
                        return Err(line_err(
                            e.line,
                            format!("scheme.L takes `auto`, one value or four (w,1 w,2 g,1 g,2), got {n}"),
                        ))
                    }
                }
            }
        };
        let lambda = match r.raw("lambda") {
            None => [1.0; 2],
            Some(e) => {
                let v = r.numbers("lambda", e)?;
                if !v.iter().all(|&x| x > 0.0 && x.is_finite()) {
                    return Err(line_err(e.line, "scheme.lambda values must be positive"));
                }
                match v.len() {
                    1 => [v[0]; 2],
                    2 => [v[0], v[1]],
                    n => return Err(line_err(e.line, format!("scheme.lambda takes one or two values, got {n}"))),
                }
            }
        };
        let tol = r.positive("tol", Some(1e-10))?;
        let max_iter: usize = r.get_or("max_iter", 500)?;
        let g_init = match r.raw("g_init") {
            Some(e) => e.value.parse().map_err(|err: Error| line_err(e.line, err.to_string()))?,
            None => GInitMode::default(),
        };
        let override_admissibility = bool_or(&mut r, "override_admissibility", false)?;
        let gradient_bound = match r.raw("M") {
            None => GradientBound::Auto,
            Some(e) if e.value == "auto" => GradientBound::Auto,
            Some(e) => {
                let v: f64 = r.parse_entry("M", e)?;
                if !(v > 0.0 && v.is_finite()) {
                    return Err(line_err(e.line, format!("scheme.M must be positive, got {v}")));
                }
                GradientBound::Value(v)
            }
        };
        let monitor = bool_or(&mut r, "monitor", false)?;
        r.finish()?;
        let scheme = SchemeConfig {
            l,
            lambda,
            tol,
            max_iter,
            g_init,
            override_admissibility,
            gradient_bound,
            monitor,
        };

        let mut r = Reader::new(&ini, "discretization");
        let mass = match r.raw("mass").map(|e| (e.value.as_str(), e.line)) {
            None | Some(("lumped", _)) => MassMode::Lumped,
            Some(("consistent", _)) => MassMode::Consistent,
            Some((v, line)) => return Err(line_err(line, format!("discretization.mass: expected lumped|consistent, got `{v}`"))),
        };
        let pairing = match r.raw("interface_pairing").map(|e| (e.value.as_str(), e.line)) {
            None | Some(("lumped", _)) => PairingMode::Lumped,
            Some(("consistent", _)) => PairingMode::Consistent,
            Some((v, line)) => {
                return Err(line_err(
                    line,
                    format!("discretization.interface_pairing: expected lumped|consistent, got `{v}`"),
                ))
            }
        };
        let parallel = bool_or(&mut r, "parallel", true)?;
        r.finish()?;

        let mut r = Reader::new(&ini, "output");
        let directory = r.raw("directory").map(|e| PathBuf::from(&e.value));
        let vtk = match r.raw("formats") {
            None => false,
            Some(e) => {
                let mut vtk = false;
                for f in e.value.split([',', ' ']).filter(|s| !s.is_empty()) {
                    match f {
                        "csv" => {}
                        "vtk" => vtk = true,
                        other => return Err(line_err(e.line, format!("output.formats: unknown format `{other}` (csv, vtk)"))),
                    }
                }
                vtk
            }
        };
        let timing = bool_or(&mut r, "timing", false)?;
        let verbosity = match r.raw("verbosity") {
            None => None,
            Some(e) => match e.value.as_str() {
                "off" | "error" | "warn" | "info" | "debug" | "trace" => Some(e.value.clone()),
                v => return Err(line_err(e.line, format!("output.verbosity: unknown level `{v}`"))),
            },
        };
        r.finish()?;

        Ok(ScenarioConfig {
            geometry,
            model,
            pc_range,
            t_final,
            steps,
            scheme,
            discretization: Discretization { mass, pairing, parallel },
            problem,
            output: OutputConfig {
                directory,
                vtk,
                timing,
                verbosity,
            },
            text: text.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    pub fn build_problem(&self) -> Result<Problem> {
        let g = &self.geometry;
        let mesh = build_mesh(g.lx, g.ly, g.nx, g.ny, g.split_index)?;
        Ok(match &self.problem {
            ProblemData::Case(id) => {
                let case = make_manufactured(id)?;
                Problem::new(mesh, case.model.clone(), case.sources.clone(), self.discretization)
                    .with_boundary(case.exact[0].clone(), case.exact[1].clone())
                    .with_initial(case.exact[0].clone(), case.exact[1].clone())
            }
            ProblemData::Fields {
                initial,
                boundary,
                source,
            } => {
                let f = |e: &FieldExpr| e.field(g.lx, g.ly);
                Problem::new(
                    mesh,
                    self.model.clone(),
                    SourceSpec::uniform(f(&source[0]), f(&source[1])),
                    self.discretization,
                )
                .with_boundary(f(&boundary[0]), f(&boundary[1]))
                .with_initial(f(&initial[0]), f(&initial[1]))
            }
        })
    }

    pub fn certify(&self) -> Result<[RegularityConstants; 2]> {
        let opts = CertifyOptions::default();
        let c1 = certify_constants(self.model.layer(Subdomain::One), &self.model.phases, self.pc_range[0], &opts)?;
        let c2 = certify_constants(self.model.layer(Subdomain::Two), &self.model.phases, self.pc_range[1], &opts)?;
        Ok([c1, c2])
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.t_final, self.steps)
    }

    /// Resolves `auto` choices against the certified constants and the
    /// initial data.
    pub fn settings(&self, problem: &Problem, constants: [RegularityConstants; 2]) -> Result<SimulationSettings> {
        let grid = self.grid()?;
        let l = match self.scheme.l {
            LChoice::Auto => suggest_L(&constants),
            LChoice::Values(v) => v,
        };
        let gradient_bound = match self.scheme.gradient_bound {
            GradientBound::Value(m) => m,
            GradientBound::Auto => 1.5 * gradient_estimate(problem, &problem.initial_states()) + 1e-3,
        };
        Ok(SimulationSettings {
            params: SchemeParams {
                l,
                lambda: self.scheme.lambda,
                tol: self.scheme.tol,
                max_iter: self.scheme.max_iter,
                tau: grid.tau,
            },
            grid,
            g_init: self.scheme.g_init,
            gradient_bound,
            constants,
            override_admissibility: self.scheme.override_admissibility,
            monitor: self.scheme.monitor,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = "\
[geometry]
lx = 2
ly = 1
nx = 8
ny = 4

[phase.wetting]
viscosity = 1
density = 1

[phase.nonwetting]
viscosity = 1
density = 0.8

[layer.1]
permeability = 0.1
saturation = linear_test 0.5 0.1
relperm_w = linear_test 0 1
relperm_g = linear_test 0 1
mobility_floor = 0.1

[layer.2]
permeability = 1
saturation = linear_test 0.5 0.1
relperm_w = linear_test 0 1
relperm_g = linear_test 0 1
mobility_floor = 0.1

[time]
T = 0.01
N = 2

[problem]
initial_w = bump 1
initial_g = bump 1.5
";

    fn parse(text: &str) -> Result<ScenarioConfig> {
        ScenarioConfig::parse(text, Path::new("."))
    }

    fn line_of(e: &Error) -> usize {
        match e {
            Error::ConfigLine { line, .. } => *line,
            other => panic!("expected a line-numbered error, got {other}"),
        }
    }

    #[test]
    fn base_parses_with_defaults() {
        let c = parse(BASE).unwrap();
        assert_eq!(c.geometry.split_index, 4);
        assert_eq!(c.scheme.l, LChoice::Auto);
        assert_eq!(c.scheme.lambda, [1.0, 1.0]);
        assert_eq!(c.model.gravity, 9.81);
        assert!(!c.output.vtk && !c.output.timing);
        assert_eq!(c.grid().unwrap().tau, 0.005);
    }

    #[test]
    fn comments_and_blank_lines() {
        let ini = Ini::parse("# c\n[a]\n  x = 1 ; trailing\n\n").unwrap();
        assert_eq!(ini.sections["a"].entries["x"], Entry { value: "1".into(), line: 3 });
    }

    #[test]
    fn nx_zero_names_field_and_line() {
        let text = BASE.replace("nx = 8", "nx = 0");
        let e = parse(&text).unwrap_err();
        assert_eq!(line_of(&e), 4);
        assert!(e.to_string().contains("geometry.nx"), "{e}");
    }

    #[test]
    fn unknown_key_and_section_rejected() {
        let e = parse(&BASE.replace("ly = 1", "ly = 1\nlz = 3")).unwrap_err();
        assert_eq!(line_of(&e), 4);
        assert!(e.to_string().contains("lz"));
        let e = parse(&format!("{BASE}\n[extra]\n")).unwrap_err();
        assert!(e.to_string().contains("extra"));
    }

    #[test]
    fn bad_number_points_at_line() {
        let e = parse(&BASE.replace("permeability = 0.1", "permeability = abc")).unwrap_err();
        assert_eq!(line_of(&e), 16);
    }

    #[test]
    fn missing_key_cites_section_header() {
        let e = parse(&BASE.replace("N = 2\n", "")).unwrap_err();
        assert_eq!(line_of(&e), 29);
        assert!(e.to_string().contains("`N`"));
    }

    #[test]
    fn l_values() {
        let c = parse(&format!("{BASE}\n[scheme]\nL = 1 2 3 4\nlambda = 0.5 2\n")).unwrap();
        assert_eq!(c.scheme.l, LChoice::Values([[1.0, 2.0], [3.0, 4.0]]));
        assert_eq!(c.scheme.lambda, [0.5, 2.0]);
        let e = parse(&format!("{BASE}\n[scheme]\nL = 1 2\n")).unwrap_err();
        assert!(e.to_string().contains("four"));
        let e = parse(&format!("{BASE}\n[scheme]\nL = -1\n")).unwrap_err();
        assert!(e.to_string().contains("positive"));
    }

    #[test]
    fn auto_l_resolves_to_twice_ls() {
        let c = parse(BASE).unwrap();
        let p = c.build_problem().unwrap();
        let constants = c.certify().unwrap();
        let s = c.settings(&p, constants).unwrap();
        assert_eq!(s.params.l, [[2.0 * constants[0].lipschitz_s, 2.0 * constants[1].lipschitz_s]; 2]);
        assert!(s.gradient_bound > 0.0);
    }

    #[test]
    fn invalid_curve_reports_line() {
        let e = parse(&BASE.replacen("relperm_w = linear_test 0 1", "relperm_w = cubic 1", 1)).unwrap_err();
        assert_eq!(line_of(&e), 18);
        let e = parse(&BASE.replacen("saturation = linear_test 0.5 0.1", "saturation = linear_test 0.5", 1)).unwrap_err();
        assert_eq!(line_of(&e), 17);
    }

    #[test]
    fn tabulated_curve_loads_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.txt"), "-1 1\n0 0.5\n1 0.3\n").unwrap();
        let text = BASE.replacen("saturation = linear_test 0.5 0.1", "saturation = tabulated s.txt", 1);
        let c = ScenarioConfig::parse(&text, dir.path()).unwrap();
        assert_eq!(c.model.layers[0].saturation_law.family, CurveFamily::Tabulated);
        let e = parse(&text).unwrap_err();
        assert_eq!(line_of(&e), 17);
    }

    #[test]
    fn case_selection_overrides_model() {
        let text = "[geometry]\nnx = 4\nny = 4\n[time]\nN = 2\n[problem]\ncase = constant\n";
        let c = parse(text).unwrap();
        assert_eq!(c.problem, ProblemData::Case("constant".into()));
        assert_eq!(c.t_final, make_manufactured("constant").unwrap().t_final);
        assert_eq!(c.model.gravity, 0.0);
        let e = parse(&text.replace("constant", "nonesuch")).unwrap_err();
        assert_eq!(line_of(&e), 7);
    }

    #[test]
    fn field_expressions() {
        assert_eq!(FieldExpr::parse("linear_x 1 2", 1, "k").unwrap(), FieldExpr::LinearX(1.0, 2.0));
        assert!(FieldExpr::parse("bump", 1, "k").is_err());
        assert!(FieldExpr::parse("wave 1", 1, "k").is_err());
        let f = FieldExpr::Bump(2.0).field(2.0, 1.0);
        assert!((f.eval(0, [1.0, 0.5], 0.0) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn duplicate_and_outside_keys() {
        assert_eq!(line_of(&Ini::parse("x = 1").unwrap_err()), 1);
        assert_eq!(line_of(&Ini::parse("[a]\nx = 1\nx = 2").unwrap_err()), 3);
        assert_eq!(line_of(&Ini::parse("[a]\n[a]").unwrap_err()), 2);
        assert_eq!(line_of(&Ini::parse("[a\n").unwrap_err()), 1);
    }
}
