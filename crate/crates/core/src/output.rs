//! File writers. Floats are printed in shortest round-trip form, so equal
//! runs give byte-identical files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::constitutive::{Phase, RegularityConstants};
use crate::dd_solver::IterationReport;
use crate::mesh::Subdomain;
use crate::problem::{Problem, SubdomainState};
use crate::timestepper::{AdmissibilityReport, SimulationSettings, SolutionTrajectory};
use crate::verification::VerificationSummary;
use crate::Result;

pub const VERSION: &str = concat!("ldd ", env!("CARGO_PKG_VERSION"));

/// Global nodal `(p_w, p_g, S)`. Interface pressures are the two-sided
/// mean; the saturation there is the mean of the two layers' values.
pub fn nodal_fields(problem: &Problem, states: &[SubdomainState; 2]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (global, _) = problem.merge(states);
    let n = problem.mesh.nodes.len();
    let mut s = vec![0.0; n];
    let mut count = vec![0u8; n];
    for sub in Subdomain::ALL {
        let layer = problem.model.layer(sub);
        let st = &states[sub.index()];
        for (l, &g) in problem.patch(sub).nodes.iter().enumerate() {
            s[g] += layer.saturation_pc(st.p_g[l] - st.p_w[l]);
            count[g] += 1;
        }
    }
    for (v, c) in s.iter_mut().zip(&count) {
        *v /= f64::from(*c);
    }
    (global.p_w, global.p_g, s)
}

pub fn field_file_name(step: usize, ext: &str) -> String {
    format!("fields_{step:04}.{ext}")
}

pub fn write_fields_csv(path: &Path, problem: &Problem, states: &[SubdomainState; 2]) -> Result<()> {
    let (p_w, p_g, s) = nodal_fields(problem, states);
    let mut out = String::from("node_id,x,y,p_w,p_g,S\n");
    for (i, xy) in problem.mesh.nodes.iter().enumerate() {
        writeln!(out, "{i},{},{},{},{},{}", xy[0], xy[1], p_w[i], p_g[i], s[i]).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

/// Legacy ASCII unstructured grid, triangles as cell type 5.
pub fn write_fields_vtk(path: &Path, problem: &Problem, states: &[SubdomainState; 2], time: f64) -> Result<()> {
    let mesh = &problem.mesh;
    let (p_w, p_g, s) = nodal_fields(problem, states);
    let mut out = String::new();
    writeln!(out, "# vtk DataFile Version 3.0\ntwo-phase fields t = {time}\nASCII\nDATASET UNSTRUCTURED_GRID").unwrap();
    writeln!(out, "POINTS {} double", mesh.nodes.len()).unwrap();
    for p in &mesh.nodes {
        writeln!(out, "{} {} 0", p[0], p[1]).unwrap();
    }
    let nt = mesh.triangles.len();
    writeln!(out, "CELLS {nt} {}", 4 * nt).unwrap();
    for t in &mesh.triangles {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2]).unwrap();
    }
    writeln!(out, "CELL_TYPES {nt}").unwrap();
    for _ in 0..nt {
        out.push_str("5\n");
    }
    writeln!(out, "CELL_DATA {nt}\nSCALARS layer int 1\nLOOKUP_TABLE default").unwrap();
    for sub in &mesh.triangle_subdomain {
        writeln!(out, "{}", sub.number()).unwrap();
    }
    writeln!(out, "POINT_DATA {}", mesh.nodes.len()).unwrap();
    for (name, v) in [("p_w", &p_w), ("p_g", &p_g), ("S", &s)] {
        writeln!(out, "SCALARS {name} double 1\nLOOKUP_TABLE default").unwrap();
        for x in v.iter() {
            writeln!(out, "{x}").unwrap();
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// One row per (step, iteration, phase, subdomain). Without `timing` the
/// seconds column is written as 0.
pub fn convergence_csv(reports: &[IterationReport], timing: bool) -> String {
    let mut out = String::from("time_step,iteration,phase,subdomain,increment_norm,g_update_norm,monitor_E,seconds\n");
    for r in reports {
        for rec in &r.records {
            for phase in Phase::ALL {
                for sub in Subdomain::ALL {
                    let monitor = rec.monitor.map_or(String::new(), |m| m.to_string());
                    let secs = if timing { rec.seconds } else { 0.0 };
                    writeln!(
                        out,
                        "{},{},{},{},{},{},{monitor},{secs}",
                        r.time_step,
                        rec.iteration,
                        phase.name(),
                        sub.number(),
                        rec.increment[phase.index()][sub.index()],
                        rec.g_update[phase.index()][sub.index()],
                    )
                    .unwrap();
                }
            }
        }
    }
    out
}

/// Key-value rendering of the admissibility check.
pub fn admissibility_text(
    report: &AdmissibilityReport,
    constants: &[RegularityConstants; 2],
    l: &[[f64; 2]; 2],
) -> String {
    let mut out = String::new();
    writeln!(out, "tau = {}", report.tau).unwrap();
    writeln!(out, "M = {}", report.m_used).unwrap();
    match report.tau_max {
        Some(t) => writeln!(out, "tau_max = {t}").unwrap(),
        None => writeln!(out, "tau_max = none").unwrap(),
    }
    for sub in Subdomain::ALL {
        let k = sub.number();
        let c = &constants[sub.index()];
        let lay = &report.layers[sub.index()];
        writeln!(out, "layer{k}.L_S = {}", c.lipschitz_s).unwrap();
        writeln!(out, "layer{k}.L_kw = {}", c.lipschitz_kw).unwrap();
        writeln!(out, "layer{k}.L_kg = {}", c.lipschitz_kg).unwrap();
        writeln!(out, "layer{k}.m = {}", c.mobility_lower).unwrap();
        writeln!(out, "layer{k}.L_w = {}", l[0][sub.index()]).unwrap();
        writeln!(out, "layer{k}.L_g = {}", l[1][sub.index()]).unwrap();
        writeln!(out, "layer{k}.parameter_condition = {}", lay.parameter_value).unwrap();
        writeln!(out, "layer{k}.parameter_pass = {}", lay.parameter_pass).unwrap();
        writeln!(out, "layer{k}.growth = {}", lay.growth).unwrap();
        writeln!(out, "layer{k}.C = {}", lay.c_value).unwrap();
        writeln!(out, "layer{k}.time_step_pass = {}", lay.time_step_pass).unwrap();
    }
    writeln!(out, "passed = {}", report.passed()).unwrap();
    out
}

/// Resolved inputs of a run; written before any field output.
pub fn manifest_text(config_text: &str, settings: &SimulationSettings, report: &AdmissibilityReport) -> String {
    let p = &settings.params;
    let mut out = String::new();
    writeln!(out, "version = {VERSION}").unwrap();
    writeln!(out, "steps = {}", settings.grid.steps).unwrap();
    writeln!(out, "T = {}", settings.grid.t_final).unwrap();
    writeln!(out, "tau = {}", settings.grid.tau).unwrap();
    writeln!(out, "L = {} {} {} {}", p.l[0][0], p.l[0][1], p.l[1][0], p.l[1][1]).unwrap();
    writeln!(out, "lambda = {} {}", p.lambda[0], p.lambda[1]).unwrap();
    writeln!(out, "tol = {}", p.tol).unwrap();
    writeln!(out, "max_iter = {}", p.max_iter).unwrap();
    writeln!(out, "g_init = {:?}", settings.g_init).unwrap();
    writeln!(out, "override_admissibility = {}", settings.override_admissibility).unwrap();
    writeln!(out, "\n# certified constants and admissibility").unwrap();
    out.push_str(&admissibility_text(report, &settings.constants, &p.l));
    writeln!(out, "\n# configuration echo").unwrap();
    for line in config_text.lines() {
        writeln!(out, "| {line}").unwrap();
    }
    out
}

/// Outcome and wall-clock time; written last.
pub fn summary_text(traj: &SolutionTrajectory, seconds: Option<f64>) -> String {
    let mut out = String::new();
    writeln!(out, "completed = {}", traj.completed()).unwrap();
    writeln!(out, "steps_done = {}", traj.reports.len()).unwrap();
    let iters: Vec<String> = traj.reports.iter().map(|r| r.iterations_used.to_string()).collect();
    writeln!(out, "iterations = {}", iters.join(" ")).unwrap();
    let cf: Vec<String> = traj
        .reports
        .iter()
        .map(|r| r.contraction_factor.map_or("-".into(), |c| c.to_string()))
        .collect();
    writeln!(out, "contraction_factors = {}", cf.join(" ")).unwrap();
    let grads: Vec<String> = traj.gradient_estimates.iter().map(|g| g.to_string()).collect();
    writeln!(out, "gradient_estimates = {}", grads.join(" ")).unwrap();
    if let Some(f) = &traj.failure {
        writeln!(out, "failure_step = {}", f.time_step).unwrap();
        writeln!(out, "failure = {:?}: {}", f.kind, f.message).unwrap();
    }
    if let Some(s) = seconds {
        writeln!(out, "wall_clock_seconds = {s}").unwrap();
    }
    out
}

/// `case,h,tau,L2_w,L2_g,H1_w,H1_g,jump,flux_mismatch,order_estimates`;
/// the last column holds the L2 orders against the previous level.
pub fn verification_csv(summary: &VerificationSummary) -> String {
    let mut out = String::from("case,h,tau,L2_w,L2_g,H1_w,H1_g,jump,flux_mismatch,order_estimates\n");
    for (k, lv) in summary.levels.iter().enumerate() {
        let e = &lv.errors;
        let orders = if k == 0 {
            String::new()
        } else {
            format!("w={} g={}", summary.orders[0][k - 1], summary.orders[1][k - 1])
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{orders}",
            summary.case, lv.h, lv.tau, e.l2[0], e.l2[1], e.h1[0], e.h1[1], e.jump, e.flux_mismatch
        )
        .unwrap();
    }
    out
}

pub fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constitutive::{CurveSpec, LayerParams, PhaseParams, Phases};
    use crate::dd_solver::IterationRecord;
    use crate::mesh::build_mesh;
    use crate::problem::{Discretization, Model, ScalarField, SourceSpec};

    fn problem() -> Problem {
        let layer = |k| {
            LayerParams::new(
                1.0,
                k,
                CurveSpec::linear_test(0.5, 0.1),
                CurveSpec::linear_test(0.0, 1.0),
                CurveSpec::linear_test(0.0, 1.0),
            )
            .unwrap()
        };
        let model = Model {
            layers: [layer(0.1), layer(1.0)],
            phases: Phases::new(
                PhaseParams::new(Phase::Wetting, 1.0, 1.0).unwrap(),
                PhaseParams::new(Phase::Nonwetting, 1.0, 0.8).unwrap(),
            )
            .unwrap(),
            gravity: 0.0,
        };
        Problem::new(build_mesh(2.0, 1.0, 4, 2, 2).unwrap(), model, SourceSpec::zero(), Discretization::default())
            .with_initial(ScalarField::function(|x, _, _| x), ScalarField::Constant(1.0))
    }

    #[test]
    fn fields_csv_shape() {
        let p = problem();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(field_file_name(0, "csv"));
        write_fields_csv(&path, &p, &p.initial_states()).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "node_id,x,y,p_w,p_g,S");
        assert_eq!(lines.len(), 1 + 15);
        // node 2 sits on the interface at x = 1: p_c = 0 → S = 0.5
        assert_eq!(lines[3], "2,1,0,1,1,0.5");
    }

    #[test]
    fn vtk_counts() {
        let p = problem();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.vtk");
        write_fields_vtk(&path, &p, &p.initial_states(), 0.0).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.contains("POINTS 15 double"));
        assert!(text.contains("CELLS 16 64"));
        assert_eq!(text.lines().filter(|l| *l == "5").count(), 16);
    }

    #[test]
    fn convergence_rows_and_timing_toggle() {
        let report = IterationReport {
            time_step: 1,
            iterations_used: 1,
            converged: true,
            records: vec![IterationRecord {
                iteration: 1,
                increment: [[1.0, 2.0], [3.0, 4.0]],
                g_update: [[0.5; 2]; 2],
                monitor: None,
                reference_error: None,
                seconds: 0.123,
            }],
            initial_monitor: None,
            contraction_factor: None,
        };
        let csv = convergence_csv(std::slice::from_ref(&report), false);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,1,w,2,2,0.5,,0");
        assert!(convergence_csv(&[report], true).contains(",0.123"));
    }
}
