//! Command implementations behind the `ldd` binary.
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | I/O or other runtime failure |
//! | 2 | configuration error (bad file, unknown case, uncertifiable curve) |
//! | 3 | scheme parameters not admissible (and no override) |
//! | 4 | L-scheme did not converge or diverged |
//! | 5 | reference (monolithic) solver failed |
//! | 6 | verification threshold not met |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn, LevelFilter};

use crate::config::ScenarioConfig;
use crate::mesh::Subdomain;
use crate::output;
use crate::timestepper::{check_admissibility, run_simulation, suggest_L, FailureKind};
use crate::verification::{run_verification, VerificationSummary, VerifyOptions};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitCode {
    Success = 0,
    Runtime = 1,
    Config = 2,
    Admissibility = 3,
    NonConvergence = 4,
    Oracle = 5,
    Verification = 6,
}

impl ExitCode {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn of(err: &Error) -> Self {
        match err {
            Error::Config(_) | Error::ConfigLine { .. } | Error::Certification { .. } | Error::Catalog(_) => {
                ExitCode::Config
            }
            Error::Admissibility(_) | Error::NoAdmissibleStep { .. } => ExitCode::Admissibility,
            Error::NonConvergence { .. } | Error::Diverged { .. } => ExitCode::NonConvergence,
            Error::Oracle(_) => ExitCode::Oracle,
            _ => ExitCode::Runtime,
        }
    }
}

/// A failed command: exit code plus the message for standard error.
#[derive(Debug)]
pub struct Failure {
    pub code: ExitCode,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: ExitCode::of(&e),
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

/// Applies the scenario's verbosity unless the environment already chose one.
fn apply_verbosity(cfg: &ScenarioConfig, env_var: &str) {
    if std::env::var_os(env_var).is_some() {
        return;
    }
    if let Some(level) = cfg.output.verbosity.as_deref().and_then(|v| v.parse::<LevelFilter>().ok()) {
        log::set_max_level(level);
    }
}

pub const LOG_ENV: &str = "LDD_LOG";

#[derive(Debug)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub field_files: usize,
}

pub fn cmd_run(config_path: &Path, out_dir: Option<&Path>) -> CmdResult<RunSummary> {
    let start = Instant::now();
    let cfg = ScenarioConfig::load(config_path)?;
    apply_verbosity(&cfg, LOG_ENV);
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.directory.clone())
        .ok_or_else(|| Failure {
            code: ExitCode::Config,
            message: "no output directory: pass --out or set [output] directory".into(),
        })?;
    let problem = cfg.build_problem()?;
    let constants = cfg.certify()?;
    let settings = cfg.settings(&problem, constants)?;
    let report = check_admissibility(&constants, &settings.params, settings.gradient_bound)?;

    fs::create_dir_all(&out_dir)?;
    output::write(&out_dir, "manifest.txt", &output::manifest_text(&cfg.text, &settings, &report))?;
    output::write(
        &out_dir,
        "admissibility.txt",
        &output::admissibility_text(&report, &constants, &settings.params.l),
    )?;
    if !report.passed() && !settings.override_admissibility {
        return Err(Failure {
            code: ExitCode::Admissibility,
            message: format!("{}; admissibility check failed: {}", remedy(&report), report.summary()),
        });
    }

    let traj = run_simulation(&problem, &settings)?;
    for (n, states) in traj.states.iter().enumerate() {
        output::write_fields_csv(&out_dir.join(output::field_file_name(n, "csv")), &problem, states)?;
        if cfg.output.vtk {
            output::write_fields_vtk(&out_dir.join(output::field_file_name(n, "vtk")), &problem, states, traj.times[n])?;
        }
    }
    // a failed step's iterations are logged too
    let mut reports = traj.reports.clone();
    reports.extend(traj.failure.as_ref().and_then(|f| f.report.clone()));
    output::write(&out_dir, "convergence.csv", &output::convergence_csv(&reports, cfg.output.timing))?;
    let seconds = cfg.output.timing.then(|| start.elapsed().as_secs_f64());
    output::write(&out_dir, "summary.txt", &output::summary_text(&traj, seconds))?;
    info!("wrote {} field levels to {}", traj.states.len(), out_dir.display());

    if let Some(f) = &traj.failure {
        return Err(Failure {
            code: match f.kind {
                FailureKind::NonConvergence | FailureKind::Diverged => ExitCode::NonConvergence,
                FailureKind::Other => ExitCode::Runtime,
            },
            message: format!("time step {}: {}", f.time_step, f.message),
        });
    }
    Ok(RunSummary {
        out_dir,
        field_files: traj.states.len(),
    })
}

fn remedy(report: &crate::timestepper::AdmissibilityReport) -> String {
    if report.layers.iter().any(|l| !l.parameter_pass) {
        "increase L".into()
    } else {
        match report.tau_max {
            Some(t) => format!("reduce the time step below tau_max = {t} (raise N) or increase L"),
            None => "increase L".into(),
        }
    }
}

/// Admissibility report, `τ_max` and the suggested `L`; no simulation.
/// Returns the printed text.
pub fn cmd_check(config_path: &Path) -> CmdResult<String> {
    let cfg = ScenarioConfig::load(config_path)?;
    apply_verbosity(&cfg, LOG_ENV);
    let problem = cfg.build_problem()?;
    let constants = cfg.certify()?;
    let settings = cfg.settings(&problem, constants)?;
    let report = check_admissibility(&constants, &settings.params, settings.gradient_bound)?;
    let suggested = suggest_L(&constants);
    let mut out = String::new();
    writeln!(out, "tau = {}  M = {}", report.tau, report.m_used).unwrap();
    for sub in Subdomain::ALL {
        let c = &constants[sub.index()];
        let l = &report.layers[sub.index()];
        let i = sub.index();
        writeln!(
            out,
            "layer {}: L_S = {}  L_kw = {}  L_kg = {}  m = {}",
            sub.number(),
            c.lipschitz_s,
            c.lipschitz_kw,
            c.lipschitz_kg,
            c.mobility_lower
        )
        .unwrap();
        writeln!(
            out,
            "  L = (w {}, g {})  1/L_S - sum 1/(2L) = {} [{}]  C = {} [{}]",
            settings.params.l[0][i],
            settings.params.l[1][i],
            l.parameter_value,
            if l.parameter_pass { "pass" } else { "FAIL" },
            l.c_value,
            if l.time_step_pass { "pass" } else { "FAIL" },
        )
        .unwrap();
        writeln!(out, "  suggested L = {}", suggested[0][i]).unwrap();
    }
    match report.tau_max {
        Some(t) => writeln!(out, "tau_max = {t}").unwrap(),
        None => writeln!(out, "tau_max = none").unwrap(),
    }
    writeln!(out, "admissible = {}", report.passed()).unwrap();
    if !report.passed() {
        writeln!(out, "hint: {}", remedy(&report)).unwrap();
        return Err(Failure {
            code: ExitCode::Admissibility,
            message: out,
        });
    }
    Ok(out)
}

/// Runs the refinement study, writes `verify_<case>.csv` into `out_dir`
/// and fails with code 6 when any check misses its threshold.
pub fn cmd_verify(
    case_id: &str,
    levels: &[usize],
    opts: &VerifyOptions,
    out_dir: &Path,
) -> CmdResult<(VerificationSummary, String)> {
    let summary = run_verification(case_id, levels, opts)?;
    fs::create_dir_all(out_dir)?;
    let file = format!("verify_{}.csv", case_id.replace(' ', "_"));
    output::write(out_dir, &file, &output::verification_csv(&summary))?;
    let mut text = String::new();
    for lv in &summary.levels {
        writeln!(
            text,
            "level {:>3}: h = {:.4e} tau = {:.4e}  L2 = ({:.3e}, {:.3e})  oracle difference = ({:.2e}, {:.2e})  max iterations {}",
            lv.level,
            lv.h,
            lv.tau,
            lv.errors.l2[0],
            lv.errors.l2[1],
            lv.oracle_difference[0],
            lv.oracle_difference[1],
            lv.max_iterations
        )
        .unwrap();
    }
    writeln!(text, "L2 orders: w {:.3?}  g {:.3?}", summary.orders[0], summary.orders[1]).unwrap();
    for c in &summary.checks {
        writeln!(
            text,
            "[{}] {} = {:e} ({})",
            if c.pass { "pass" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        )
        .unwrap();
    }
    if !summary.passed() {
        warn!("verification of `{case_id}` failed");
        return Err(Failure {
            code: ExitCode::Verification,
            message: text,
        });
    }
    Ok((summary, text))
}

/// Parses `8,16,32`.
pub fn parse_levels(s: &str) -> Result<Vec<usize>, String> {
    let levels: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| format!("invalid level `{t}`")))
        .collect::<Result<_, _>>()?;
    if levels.is_empty() {
        return Err("no levels given".into());
    }
    Ok(levels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_code_mapping() {
        assert_eq!(ExitCode::of(&Error::config("x")), ExitCode::Config);
        assert_eq!(ExitCode::of(&Error::Catalog("x".into())), ExitCode::Config);
        assert_eq!(ExitCode::of(&Error::Oracle("x".into())), ExitCode::Oracle);
        assert_eq!(
            ExitCode::of(&Error::NoAdmissibleStep { layer: 1, value: -1.0 }),
            ExitCode::Admissibility
        );
        assert_eq!(ExitCode::Verification.code(), 6);
    }

    #[test]
    fn levels() {
        assert_eq!(parse_levels("8,16, 32").unwrap(), vec![8, 16, 32]);
        assert!(parse_levels("8,x").is_err());
    }
}
