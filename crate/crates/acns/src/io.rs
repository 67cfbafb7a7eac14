//! On-disk artifacts: CSV time series, JSON reports, run manifests, and
//! the column schema emitted alongside outputs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! repeated runs with identical inputs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::{EnergyTrace, Trajectory};
use crate::error::{Error, Result};

pub const TRACE_HEADER: &str =
    "t,e,e_tilde,y_sq,v_sq,mu_sq,lambda_ctrl,b_ctrl,f_tilde,g_weight,ito_residual";

/// Energy/monitor columns of one path.
pub fn trace_csv(trace: &EnergyTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            r.e,
            r.e_tilde,
            r.y_sq,
            r.v_sq,
            r.mu_sq,
            r.lambda_ctrl,
            r.b_ctrl,
            r.f_tilde,
            r.g_weight,
            r.ito_residual
        );
    }
    s
}

/// Modal coefficients of one path: `t, c0, c1, ...`.
pub fn states_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map(|s| s.len()).unwrap_or(0);
    let mut s = String::from("t");
    for i in 0..n {
        let _ = write!(s, ",c{i}");
    }
    s.push('\n');
    for (t, state) in traj.times.iter().zip(&traj.states) {
        let _ = write!(s, "{t}");
        for v in state.iter() {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

/// Parse a modal-coefficient CSV back into times and states.
pub fn parse_states_csv(text: &str) -> Result<(Vec<f64>, Vec<nalgebra::DVector<f64>>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, "empty CSV")))?;
    let ncols = header.split(',').count();
    if ncols < 2 || !header.starts_with("t,") {
        return Err(Error::Config(format!("unexpected trajectory CSV header: {header}")));
    }
    let mut times = Vec::new();
    let mut states = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|e| Error::Config(format!("CSV line {}: {e}", lineno + 2)))
            })
            .collect::<Result<_>>()?;
        if vals.len() != ncols {
            return Err(Error::Config(format!(
                "CSV line {}: expected {} columns, got {}",
                lineno + 2,
                ncols,
                vals.len()
            )));
        }
        times.push(vals[0]);
        states.push(nalgebra::DVector::from_vec(vals[1..].to_vec()));
    }
    Ok((times, states))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize {}: {e}", path.display())))?;
    write_text(path, &(text + "\n"))
}

/// Everything needed to replay the run bit-exactly.
#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub version: &'static str,
    pub master_seed: u64,
    pub paths: usize,
    pub config_toml: &'a str,
}

pub fn manifest(master_seed: u64, paths: usize, config_toml: &str) -> Manifest<'_> {
    Manifest {
        version: env!("CARGO_PKG_VERSION"),
        master_seed,
        paths,
        config_toml,
    }
}

/// Human-readable description of every CSV column, written once per
/// output directory.
pub fn schema_text() -> String {
    let mut s = String::new();
    s.push_str("trace_<k>.csv columns:\n");
    for (name, desc) in [
        ("t", "grid time"),
        ("e", "energy: |u|^2 + |grad phi|^2 + int F(phi)"),
        ("e_tilde", "balance energy: |u|^2 + |grad phi|^2 + 2 int F(phi)"),
        ("y_sq", "state norm |u|^2 + |grad phi|^2"),
        ("v_sq", "dissipation norm ||u||^2 + |A phi|^2"),
        ("mu_sq", "squared L2 norm of the projected chemical potential"),
        ("lambda_ctrl", "boundary-data norm squared plus one"),
        ("b_ctrl", "boundary-data norm fourth power plus one"),
        ("f_tilde", "damping-rate ledger of the energy estimate"),
        ("g_weight", "exponential damping weight"),
        ("ito_residual", "running defect of the discrete energy balance"),
    ] {
        let _ = writeln!(s, "  {name}: {desc}");
    }
    s.push_str("path_<k>.csv columns:\n  t: grid time\n  c<i>: coefficient of eigenmode i (merged velocity/phase spectrum)\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::TraceRow;
    use nalgebra::DVector;

    fn tiny_trajectory() -> Trajectory {
        Trajectory {
            times: vec![0.0, 0.5],
            states: vec![
                DVector::from_vec(vec![1.0, -0.25]),
                DVector::from_vec(vec![0.125, 3.0e-17]),
            ],
            trace: EnergyTrace {
                rows: vec![TraceRow {
                    t: 0.0,
                    e: 1.0,
                    e_tilde: 2.0,
                    y_sq: 1.0,
                    v_sq: 0.5,
                    mu_sq: 0.0,
                    lambda_ctrl: 1.0,
                    b_ctrl: 1.0,
                    f_tilde: 1.0,
                    g_weight: 1.0,
                    ito_residual: 0.0,
                }],
            },
        }
    }

    #[test]
    fn states_round_trip_exactly() {
        let traj = tiny_trajectory();
        let text = states_csv(&traj);
        let (times, states) = parse_states_csv(&text).unwrap();
        assert_eq!(times, traj.times);
        for (a, b) in states.iter().zip(&traj.states) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
        // Identical input, identical bytes.
        assert_eq!(text, states_csv(&traj));
    }

    #[test]
    fn trace_csv_has_documented_columns() {
        let traj = tiny_trajectory();
        let text = trace_csv(&traj.trace);
        assert!(text.starts_with(TRACE_HEADER));
        assert_eq!(text.lines().count(), 2);
        let schema = schema_text();
        for col in TRACE_HEADER.split(',') {
            assert!(schema.contains(col), "schema missing column {col}");
        }
    }

    #[test]
    fn parse_rejects_malformed_input() {
        assert!(parse_states_csv("").is_err());
        assert!(parse_states_csv("x,c0\n1,2\n").is_err());
        assert!(parse_states_csv("t,c0\n1,2,3\n").is_err());
        assert!(parse_states_csv("t,c0\n1,abc\n").is_err());
    }

    #[test]
    fn writers_create_directories() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/run/report.json");
        write_json(&path, &serde_json::json!({"ok": true})).unwrap();
        assert!(path.exists());
    }
}
