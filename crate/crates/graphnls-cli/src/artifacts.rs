//! CSV and plot-data emission.  All series files are plain text with LF line
//! endings and floats printed as fixed-width `%.17e`, which round-trips f64
//! exactly; identical runs therefore produce bit-identical files.  Plot files
//! are raw two-column `x y` text so any plotting tool can consume them.

use std::path::Path;

use graphnls::{GraphFunction, OmegaStarScan, Trajectory};

use crate::CliError;

/// Full-precision scientific formatting used in every emitted series.
pub fn fmt_f(x: f64) -> String {
    format!("{x:.17e}")
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))
}

/// Writes `<stem>.csv` (x plus real/imaginary columns per edge) and one
/// two-column `<stem>_edge<k>.dat` of |u| per edge.  The eliminated Dirichlet
/// endpoint is emitted as an explicit zero row so plots close at the edge
/// ends.  Returns the file names written.
pub fn write_profile(
    dir: &Path,
    stem: &str,
    u: &GraphFunction,
) -> Result<Vec<String>, CliError> {
    let grid = u.grid();
    let n_edges = grid.n_edges();
    let m = grid.cells_per_edge();

    let mut csv = String::from("x");
    for e in 0..n_edges {
        csv.push_str(&format!(", edge{e}_re, edge{e}_im"));
    }
    csv.push('\n');
    for j in 0..=m {
        csv.push_str(&fmt_f(grid.node_x(j)));
        for e in 0..n_edges {
            let v = if j < m {
                u.node_value(e, j)
            } else {
                num_complex::Complex64::new(0.0, 0.0)
            };
            csv.push_str(", ");
            csv.push_str(&fmt_f(v.re));
            csv.push_str(", ");
            csv.push_str(&fmt_f(v.im));
        }
        csv.push('\n');
    }
    let csv_name = format!("{stem}.csv");
    write_text(dir, &csv_name, &csv)?;

    let mut names = vec![csv_name];
    for e in 0..n_edges {
        let mut dat = String::new();
        for j in 0..=m {
            let v = if j < m {
                u.node_value(e, j).norm()
            } else {
                0.0
            };
            dat.push_str(&fmt_f(grid.node_x(j)));
            dat.push(' ');
            dat.push_str(&fmt_f(v));
            dat.push('\n');
        }
        let name = format!("{stem}_edge{e}.dat");
        write_text(dir, &name, &dat)?;
        names.push(name);
    }
    Ok(names)
}

/// Streams the monitor series as `trajectory.csv` with the fixed column set
/// `t, E, Q, f, fprime, P, dist, theta`; monitors the run did not track are
/// written as `NaN` so the schema never changes shape.  Also emits one
/// two-column `.dat` per available monitor.  Returns the file names written.
pub fn write_trajectory(dir: &Path, traj: &Trajectory) -> Result<Vec<String>, CliError> {
    let n = traj.times.len();
    let pick = |series: &Option<Vec<f64>>, i: usize| -> f64 {
        series.as_ref().map(|s| s[i]).unwrap_or(f64::NAN)
    };

    let mut csv = String::from("t, E, Q, f, fprime, P, dist, theta\n");
    for i in 0..n {
        let row = [
            traj.times[i],
            traj.energy[i],
            traj.charge[i],
            traj.f[i],
            traj.fprime[i],
            pick(&traj.pohozaev, i),
            pick(&traj.dist, i),
            pick(&traj.theta, i),
        ];
        let mut line = String::new();
        for (k, x) in row.iter().enumerate() {
            if k > 0 {
                line.push_str(", ");
            }
            line.push_str(&fmt_f(*x));
        }
        csv.push_str(&line);
        csv.push('\n');
    }
    write_text(dir, "trajectory.csv", &csv)?;
    let mut names = vec!["trajectory.csv".to_string()];

    let mut two_col = |name: &str, series: &[f64]| -> Result<(), CliError> {
        let mut dat = String::new();
        for (t, y) in traj.times.iter().zip(series) {
            dat.push_str(&fmt_f(*t));
            dat.push(' ');
            dat.push_str(&fmt_f(*y));
            dat.push('\n');
        }
        write_text(dir, name, &dat)?;
        names.push(name.to_string());
        Ok(())
    };
    two_col("energy.dat", &traj.energy)?;
    two_col("charge.dat", &traj.charge)?;
    two_col("f.dat", &traj.f)?;
    two_col("fprime.dat", &traj.fprime)?;
    if let Some(p) = &traj.pohozaev {
        two_col("pohozaev.dat", p)?;
    }
    if let Some(d) = &traj.dist {
        two_col("dist.dat", d)?;
    }
    if let Some(th) = &traj.theta {
        two_col("theta.dat", th)?;
    }
    Ok(names)
}

/// Writes the frequency scan as `scan.csv` plus a two-column `scan.dat` of
/// the slope-criterion gap against omega (the curve whose sign change the
/// bisection refines).  Returns the file names written.
pub fn write_scan(dir: &Path, scan: &OmegaStarScan) -> Result<Vec<String>, CliError> {
    let mut csv = String::from("omega, lhs, lhs_minus_rhs, residual\n");
    let mut dat = String::new();
    for row in &scan.rows {
        csv.push_str(&format!(
            "{}, {}, {}, {}\n",
            fmt_f(row.omega),
            fmt_f(row.lhs),
            fmt_f(row.lhs_minus_rhs),
            fmt_f(row.residual)
        ));
        dat.push_str(&fmt_f(row.omega));
        dat.push(' ');
        dat.push_str(&fmt_f(row.lhs_minus_rhs));
        dat.push('\n');
    }
    write_text(dir, "scan.csv", &csv)?;
    write_text(dir, "scan.dat", &dat)?;
    Ok(vec!["scan.csv".to_string(), "scan.dat".to_string()])
}
