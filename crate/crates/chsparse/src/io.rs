//! CSV and gnuplot-profile writers. Formats are fixed and versioned through
//! a leading comment line; floats are printed with 17 significant digits so
//! identical runs produce byte-identical files.

use crate::adjoint::AdjointTrajectory;
use crate::optimizer::{IterationRecord, SweepTable};
use crate::problem::Control;
use crate::state::StateTrajectory;
use crate::verify::SuiteReport;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn writer(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// (time_index, cell_index, phi, mu, w) rows, every `stride`-th level.
pub fn write_trajectory_csv(
    path: &Path,
    traj: &StateTrajectory,
    stride: usize,
    header_notes: &[String],
) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=trajectory v1")?;
    for note in header_notes {
        writeln!(w, "# {note}")?;
    }
    writeln!(w, "time_index,cell_index,phi,mu,w")?;
    let stride = stride.max(1);
    let last = traj.phi.len() - 1;
    for k in 0..traj.phi.len() {
        if k % stride != 0 && k != last {
            continue;
        }
        for i in 0..traj.phi[k].len() {
            writeln!(
                w,
                "{k},{i},{},{},{}",
                fmt(traj.phi[k][i]),
                fmt(traj.mu[k][i]),
                fmt(traj.w[k][i])
            )?;
        }
    }
    Ok(())
}

/// (time_index, cell_index, u) rows over the control slices.
pub fn write_control_csv(path: &Path, u: &Control) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=control v1")?;
    writeln!(w, "time_index,cell_index,u")?;
    for (n, slice) in u.slices.iter().enumerate() {
        for i in 0..slice.len() {
            writeln!(w, "{n},{i},{}", fmt(slice[i]))?;
        }
    }
    Ok(())
}

/// (time_index, cell_index, p, q, r) rows, every `stride`-th level.
pub fn write_adjoint_csv(path: &Path, adj: &AdjointTrajectory, stride: usize) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=adjoint v1")?;
    writeln!(w, "time_index,cell_index,p,q,r")?;
    let stride = stride.max(1);
    let last = adj.r.len() - 1;
    for k in 0..adj.r.len() {
        if k % stride != 0 && k != last {
            continue;
        }
        for i in 0..adj.r[k].len() {
            writeln!(
                w,
                "{k},{i},{},{},{}",
                fmt(adj.p[k][i]),
                fmt(adj.q[k][i]),
                fmt(adj.r[k][i])
            )?;
        }
    }
    Ok(())
}

pub fn write_iterations_csv(path: &Path, records: &[IterationRecord]) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=iterations v1")?;
    writeln!(w, "iter,j_total,j_smooth,g_l1,stat_res,alpha,backtracks")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.iter,
            fmt(r.j_total),
            fmt(r.j_smooth),
            fmt(r.g_l1),
            fmt(r.stat_res),
            fmt(r.alpha),
            r.backtracks
        )?;
    }
    Ok(())
}

/// One row per optimization run.
pub struct SparsityRow {
    pub kappa: f64,
    pub zero_fraction: f64,
    pub violations_a: Option<usize>,
    pub violations_b: Option<usize>,
    pub j_total: f64,
    pub norm_u_l1: f64,
}

pub fn write_sparsity_csv(path: &Path, rows: &[SparsityRow]) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=sparsity v1")?;
    writeln!(w, "kappa,zero_fraction,violations_a,violations_b,j_total,norm_u_l1")?;
    for r in rows {
        let va = r.violations_a.map_or("skipped".to_string(), |v| v.to_string());
        let vb = r.violations_b.map_or("skipped".to_string(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{va},{vb},{},{}",
            fmt(r.kappa),
            fmt(r.zero_fraction),
            fmt(r.j_total),
            fmt(r.norm_u_l1)
        )?;
    }
    Ok(())
}

pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=sweep v1")?;
    writeln!(
        w,
        "kappa,converged,iterations,j_total,stat_res,zero_fraction,violations_a,violations_b,norm_u_l1,annihilated"
    )?;
    for r in &table.rows {
        let va = r.sparsity.violations_a.map_or("skipped".to_string(), |v| v.to_string());
        let vb = r.sparsity.violations_b.map_or("skipped".to_string(), |v| v.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{va},{vb},{},{}",
            fmt(r.kappa),
            r.converged,
            r.iterations,
            fmt(r.cost.j_total),
            fmt(r.stat_res),
            fmt(r.sparsity.zero_fraction),
            fmt(r.norm_u_l1),
            r.annihilated
        )?;
    }
    Ok(())
}

pub fn write_suite_csv(path: &Path, report: &SuiteReport) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# schema=suite_report v1 seed={}", report.seed)?;
    writeln!(w, "suite,status,details")?;
    for e in &report.entries {
        let status = if e.skipped {
            "skipped"
        } else if e.passed {
            "pass"
        } else {
            "fail"
        };
        writeln!(w, "{},{status},\"{}\"", e.name, e.details.replace('"', "'"))?;
    }
    Ok(())
}

pub fn suite_text_summary(report: &SuiteReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("verification suites (seed {})\n", report.seed));
    for e in &report.entries {
        let status = if e.skipped {
            "SKIP"
        } else if e.passed {
            "PASS"
        } else {
            "FAIL"
        };
        out.push_str(&format!("  [{status}] {:<24} {}\n", e.name, e.details));
    }
    out.push_str(if report.all_passed() { "all suites passed\n" } else { "SUITE FAILURES\n" });
    out
}

/// Two-column gnuplot profile.
pub fn write_profile(path: &Path, xs: &[f64], ys: &[f64]) -> std::io::Result<()> {
    let mut w = writer(path)?;
    writeln!(w, "# x value")?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(w, "{} {}", fmt(*x), fmt(*y))?;
    }
    Ok(())
}
