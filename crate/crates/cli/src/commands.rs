use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use riskshare::improve::{build_improvement_problem, default_grid_step, default_radius};
use riskshare::maxcorr::default_reference_law;
use riskshare::{
    build_split_grid, comonotonicity_gap, counterexample_family, dominates, is_comonotone_pairwise, max_correlation,
    minimize_q, sharing_law, solve_improvement_lp, BallConfig, DiscreteMeasure, JointLaw, QConfig,
    StrictlyConvexProfile,
};
use serde_json::json;

use crate::input::{batch_files, load};
use crate::output::{counterexample_csv, quantile_table, versioned, write_file, Outcome};
use crate::{Command, Format, GridArgs, Source};

pub enum Printed {
    Report(Outcome),
    Text { text: String, summary: String, code: u8 },
}

pub fn run(command: Command) -> Result<Printed> {
    match command {
        Command::CheckDominance { mu, nu, tol } => {
            let mu: DiscreteMeasure = load(&mu, "measure")?;
            let nu: DiscreteMeasure = load(&nu, "measure")?;
            let v = dominates(&mu, &nu, tol)?;
            let summary = format!(
                "dominates: {} (strict: {}, worst violation {:e})",
                yes(v.dominates),
                yes(v.strict),
                v.worst_violation
            );
            let report = json!({ "dominates": v.dominates, "strict": v.strict, "worst_violation": v.worst_violation });
            Ok(Printed::Report(Outcome::new(&report, v.dominates, summary)?))
        }
        Command::ComonotoneCheck { source, tol } => per_allocation(&source, |path| {
            let g: JointLaw = load(path, "joint law")?;
            let comonotone = is_comonotone_pairwise(&g, tol)?;
            Outcome::new(&json!({ "comonotone": comonotone }), comonotone, format!("comonotone: {}", yes(comonotone)))
        }),
        Command::Maxcorr { x, mu } => {
            let x: DiscreteMeasure = load(&x, "measure")?;
            let mu: DiscreteMeasure = load(&mu, "measure")?;
            let r = max_correlation(&x, &mu)?;
            let summary = format!("maximal correlation {}", r.value);
            Ok(Printed::Report(Outcome::new(&json!({ "value": r.value }), true, summary)?))
        }
        Command::ComonotoneGap { source, mu, radius, tol } => {
            let reference: Option<DiscreteMeasure> = mu.as_deref().map(|p| load(p, "measure")).transpose()?;
            per_allocation(&source, |path| {
                let g: JointLaw = load(path, "joint law")?;
                let mu = match &reference {
                    Some(m) => m.clone(),
                    None => {
                        default_reference_law(&BallConfig::new(radius.unwrap_or_else(|| default_radius(&g)), g.dim())?)
                    }
                };
                let r = comonotonicity_gap(&g, &mu, tol)?;
                let summary = format!(
                    "gap {:e}: {}",
                    r.gap,
                    if r.comonotone_at_tol { "consistent with comonotonicity" } else { "not comonotone" }
                );
                Outcome::new(&r, r.comonotone_at_tol, summary)
            })
        }
        Command::Share { psi, m0, radius } => {
            let psi: StrictlyConvexProfile = load(&psi, "cost profile")?;
            let m0: DiscreteMeasure = load(&m0, "measure")?;
            let ball = BallConfig::new(radius, psi.dim())?;
            let law = sharing_law(&psi, &m0, &ball)?;
            let summary = format!("split {} aggregate atoms among {} agents", m0.len(), psi.agents());
            Ok(Printed::Report(Outcome::new(&law, true, summary)?))
        }
        Command::Improve { source, grid, emit_csv, dump_lp } => per_allocation(&source, |path| {
            let g: JointLaw = load(path, "joint law")?;
            let setup = Setup::resolve(&g, &grid)?;
            if let Some(out) = &dump_lp {
                setup.dump_lp(&g, out)?;
            }
            let report = setup.solve(&g, grid.tol)?;
            if let Some(out) = &emit_csv {
                write_file(out, &quantile_table(&[("input", &g), ("improved", &report.improved)]))?;
            }
            let summary = format!(
                "statistic {:e} at h = {}, R = {}: {}",
                report.statistic,
                setup.h,
                setup.ball.radius,
                verdict(report.comonotone_at_tol)
            );
            Outcome::new(&report, report.comonotone_at_tol, summary)
        }),
        Command::Stat { source, grid, sweep, emit_csv, dump_lp } => per_allocation(&source, |path| {
            let g: JointLaw = load(path, "joint law")?;
            let setup = Setup::resolve(&g, &grid)?;
            if let Some(out) = &dump_lp {
                setup.dump_lp(&g, out)?;
            }
            let report = setup.solve(&g, grid.tol)?;
            let mut curve = vec![(setup.h, report.statistic)];
            for k in 1..=sweep {
                let h = setup.h / f64::powi(2.0, k as i32);
                let grid_k = build_split_grid(&g, h, &setup.ball)?;
                curve.push((h, solve_improvement_lp(&g, &grid_k, &setup.eps, grid.tol)?.statistic));
            }
            if let Some(out) = &emit_csv {
                let mut csv = String::from("grid_step,statistic\n");
                for (h, s) in &curve {
                    csv.push_str(&format!("{h},{s}\n"));
                }
                write_file(out, &csv)?;
            }
            let mut body = json!({
                "statistic": report.statistic,
                "comonotone_at_tol": report.comonotone_at_tol,
                "grid_step": setup.h,
                "radius": setup.ball.radius,
            });
            if sweep > 0 {
                body["sweep"] = curve.iter().map(|(h, s)| json!({ "grid_step": h, "statistic": s })).collect();
            }
            let summary = format!("statistic {:e}: {}", report.statistic, verdict(report.comonotone_at_tol));
            Outcome::new(&body, report.comonotone_at_tol, summary)
        }),
        Command::Qdescent { source, grid, max_iters, j_tol, emit_csv } => per_allocation(&source, |path| {
            let g: JointLaw = load(path, "joint law")?;
            let setup = Setup::resolve(&g, &grid)?;
            let statistic = setup.solve(&g, grid.tol)?.statistic;
            let config = QConfig { max_iters, target: Some(statistic), tolerance: j_tol, ..QConfig::default() };
            let state = minimize_q(&g, &setup.eps, &setup.ball, &config)?;
            if let Some(out) = &emit_csv {
                let mut csv = String::from("step,j\n");
                for (k, j) in state.history.iter().enumerate() {
                    csv.push_str(&format!("{k},{j}\n"));
                }
                write_file(out, &csv)?;
            }
            let body = json!({
                "j_final": state.j,
                "iterations": state.iterations,
                "sandwich_gap": state.j - statistic,
                "statistic": statistic,
                "cap_reached": state.cap_reached,
            });
            let summary = format!(
                "J = {:e} after {} iterations (statistic {:e}, gap {:e})",
                state.j,
                state.iterations,
                statistic,
                state.j - statistic
            );
            Outcome::new(&body, true, summary)
        }),
        Command::Counterexample { n, eps, format } => {
            let r = counterexample_family(n, eps)?;
            let summary = format!("n = {n}: |T1| = {}, det(M1 + M1') = {}", r.t1_norm, r.det_sum);
            match format {
                Format::Csv => Ok(Printed::Text { text: counterexample_csv(&r), summary, code: 0 }),
                Format::Json => Ok(Printed::Report(Outcome::new(&r, true, summary)?)),
            }
        }
    }
}

/// Resolved grid parameters of the improvement program.
struct Setup {
    eps: Vec<f64>,
    ball: BallConfig,
    h: f64,
}

impl Setup {
    fn resolve(g: &JointLaw, args: &GridArgs) -> Result<Self> {
        let eps = args.eps.clone().unwrap_or_else(|| vec![1.0; g.agents()]);
        let radius = args.radius.unwrap_or_else(|| default_radius(g));
        let h = args.grid_step.unwrap_or_else(|| default_grid_step(g, radius));
        Ok(Setup { eps, ball: BallConfig::new(radius, g.dim())?, h })
    }

    fn solve(&self, g: &JointLaw, tol: f64) -> Result<riskshare::EfficiencyReport> {
        let grid = build_split_grid(g, self.h, &self.ball)?;
        Ok(solve_improvement_lp(g, &grid, &self.eps, tol)?)
    }

    fn dump_lp(&self, g: &JointLaw, out: &Path) -> Result<()> {
        let grid = build_split_grid(g, self.h, &self.ball)?;
        let problem = build_improvement_problem(g, &grid, &self.eps)?;
        write_file(out, &problem.lp.to_csv())
    }
}

/// Runs `f` on the single allocation, or on every file of the batch
/// directory in parallel. Batch reports list files in name order; the exit
/// status is the worst per-file status.
fn per_allocation<F>(source: &Source, f: F) -> Result<Printed>
where
    F: Fn(&Path) -> Result<Outcome> + Sync,
{
    let Some(dir) = &source.batch else {
        let path = source.alloc.as_deref().context("an allocation file or --batch is required")?;
        return Ok(Printed::Report(f(path)?));
    };
    let files = batch_files(dir)?;
    let results: Vec<(String, u8, serde_json::Value)> = files
        .par_iter()
        .map(|path| {
            let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            match f(path) {
                Ok(o) => (name, o.exit_code(), o.report),
                Err(e) => (name, 2, json!({ "error": format!("{e:#}") })),
            }
        })
        .collect();
    let code = results.iter().map(|r| r.1).max().unwrap_or(0);
    let entries: Vec<serde_json::Value> = results
        .iter()
        .map(|(file, code, report)| json!({ "file": file, "exit_code": code, "report": report }))
        .collect();
    let failed = results.iter().filter(|r| r.1 == 2).count();
    let negative = results.iter().filter(|r| r.1 == 1).count();
    let summary = format!("{} files: {negative} negative, {failed} errors", results.len());
    let report = versioned(&json!({ "results": entries }))?;
    Ok(Printed::Report(Outcome { report, affirmative: code == 0, summary }).with_code(code))
}

impl Printed {
    /// Batch runs can exit with 2 while still printing a full report.
    fn with_code(self, code: u8) -> Self {
        match self {
            Printed::Report(o) if code == 2 => {
                let text = serde_json::to_string_pretty(&o.report).expect("reports serialize") + "\n";
                Printed::Text { text, summary: o.summary, code }
            }
            other => other,
        }
    }
}

fn yes(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

fn verdict(comonotone: bool) -> &'static str {
    if comonotone {
        "consistent with comonotonicity at tol"
    } else {
        "improvable"
    }
}
