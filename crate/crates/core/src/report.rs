//! Trajectory CSV files and the metrics summary derived from them.
//!
//! Columns: `t`, `x[j.i]`, `xdot{l}[j.i]` for `l = 1..n−1`, `y[j.i]`,
//! `ne_residual`, `consensus_err`, `est_err`. Indices in labels are 1-based;
//! for `q > 1` a third index names the component, e.g. `x[2.1.3]`.
//! Numbers use shortest round-trip scientific notation, so reading a file
//! back reproduces every value bit for bit.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{cluster_y_sum, distance, rate_fit, RateFit, Trajectory, TrajectoryShape};

/// Final Nash residual and intra-cluster spread at or below this count as converged.
pub const CONVERGED_RESIDUAL: f64 = 1e-3;
/// Largest allowed `|x − z*|` entry for a converged verdict.
pub const CONVERGED_DECISION_ERROR: f64 = 1e-2;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed trajectory file: {0}")]
    Format(String),
}

/// Column-oriented view of a trajectory, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryTable {
    pub shape: TrajectoryShape,
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// `derivs[sample][level − 1]`
    pub derivs: Vec<Vec<Vec<f64>>>,
    pub y: Vec<Vec<f64>>,
    pub ne_residual: Vec<f64>,
    pub consensus_err: Vec<f64>,
    pub est_err: Vec<f64>,
}

impl TrajectoryTable {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let n = traj.shape.order_n;
        Self {
            shape: traj.shape.clone(),
            times: traj.times.clone(),
            x: traj.states.iter().map(|s| s.x().to_vec()).collect(),
            derivs: traj
                .states
                .iter()
                .map(|s| (1..n).map(|l| s.deriv(l).to_vec()).collect())
                .collect(),
            y: traj.states.iter().map(|s| s.y().to_vec()).collect(),
            ne_residual: traj.metrics.iter().map(|m| m.ne_residual).collect(),
            consensus_err: traj.metrics.iter().map(|m| m.consensus_err).collect(),
            est_err: traj.metrics.iter().map(|m| m.est_err).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn player_labels(shape: &TrajectoryShape, prefix: &str) -> Vec<String> {
    let mut out = Vec::new();
    for (j, &size) in shape.cluster_sizes.iter().enumerate() {
        for i in 0..size {
            if shape.q == 1 {
                out.push(format!("{prefix}[{}.{}]", j + 1, i + 1));
            } else {
                for c in 0..shape.q {
                    out.push(format!("{prefix}[{}.{}.{}]", j + 1, i + 1, c + 1));
                }
            }
        }
    }
    out
}

pub fn csv_header(shape: &TrajectoryShape) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend(player_labels(shape, "x"));
    for l in 1..shape.order_n {
        h.extend(player_labels(shape, &format!("xdot{l}")));
    }
    h.extend(player_labels(shape, "y"));
    h.extend(["ne_residual", "consensus_err", "est_err"].map(String::from));
    h
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

pub fn write_csv<W: Write>(table: &TrajectoryTable, out: W) -> Result<(), CsvError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(&table.shape))?;
    let mut row = Vec::new();
    for s in 0..table.len() {
        row.clear();
        row.push(fmt(table.times[s]));
        row.extend(table.x[s].iter().map(|&v| fmt(v)));
        for level in &table.derivs[s] {
            row.extend(level.iter().map(|&v| fmt(v)));
        }
        row.extend(table.y[s].iter().map(|&v| fmt(v)));
        row.push(fmt(table.ne_residual[s]));
        row.push(fmt(table.consensus_err[s]));
        row.push(fmt(table.est_err[s]));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Recovers `(prefix, cluster, player)` from a label like `xdot2[3.1]`.
fn parse_label(label: &str) -> Option<(&str, Vec<usize>)> {
    let open = label.find('[')?;
    let inner = label[open + 1..].strip_suffix(']')?;
    let idx: Option<Vec<usize>> = inner.split('.').map(|p| p.parse().ok()).collect();
    Some((&label[..open], idx?))
}

fn shape_from_header(header: &csv::StringRecord) -> Result<TrajectoryShape, CsvError> {
    let mut sizes: Vec<usize> = Vec::new();
    let mut q = 1;
    let mut order_n = 1;
    for label in header.iter() {
        let Some((prefix, idx)) = parse_label(label) else { continue };
        if prefix == "x" {
            let (j, i) = (idx[0], idx.get(1).copied().unwrap_or(0));
            if j == 0 || i == 0 {
                return Err(CsvError::Format(format!("bad column label `{label}`")));
            }
            if sizes.len() < j {
                sizes.resize(j, 0);
            }
            sizes[j - 1] = sizes[j - 1].max(i);
            if let Some(&c) = idx.get(2) {
                q = q.max(c);
            }
        } else if let Some(level) = prefix.strip_prefix("xdot") {
            let level: usize = level
                .parse()
                .map_err(|_| CsvError::Format(format!("bad derivative column `{label}`")))?;
            order_n = order_n.max(level + 1);
        }
    }
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(CsvError::Format("no decision columns found".into()));
    }
    let shape = TrajectoryShape { q, order_n, cluster_sizes: sizes };
    let want = csv_header(&shape);
    if header.iter().ne(want.iter().map(String::as_str)) {
        return Err(CsvError::Format("column layout does not match the trajectory contract".into()));
    }
    Ok(shape)
}

pub fn read_csv<R: Read>(input: R) -> Result<TrajectoryTable, CsvError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let shape = shape_from_header(&header)?;
    let d = shape.dim();
    let mut table = TrajectoryTable {
        shape: shape.clone(),
        times: Vec::new(),
        x: Vec::new(),
        derivs: Vec::new(),
        y: Vec::new(),
        ne_residual: Vec::new(),
        consensus_err: Vec::new(),
        est_err: Vec::new(),
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| CsvError::Format(format!("row {}: {e}", line + 2)))?;
        let mut it = vals.into_iter();
        let mut take = |k: usize| -> Vec<f64> { it.by_ref().take(k).collect() };
        table.times.push(take(1)[0]);
        table.x.push(take(d));
        table.derivs.push((1..shape.order_n).map(|_| take(d)).collect());
        table.y.push(take(d));
        let tail = take(3);
        table.ne_residual.push(tail[0]);
        table.consensus_err.push(tail[1]);
        table.est_err.push(tail[2]);
    }
    if table.is_empty() {
        return Err(CsvError::Format("no samples".into()));
    }
    Ok(table)
}

/// Metrics derived from a trajectory; reproducible from its CSV alone
/// (plus the reference equilibrium when distance metrics are wanted).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub samples: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub ne_residual_initial: f64,
    pub ne_residual_final: f64,
    pub ne_residual_min: f64,
    pub consensus_err_final: f64,
    pub est_err_final: f64,
    /// Largest `‖Σ_i y_i^j‖` over every sample and cluster.
    pub max_cluster_y_sum: f64,
    pub final_x: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
    /// Largest `|x_i − x*_i|` at the last sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_decision_error: Option<f64>,
    /// Fit of `ln‖x(t) − x*‖` over the middle third of the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_fit: Option<RateFit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl TrajectorySummary {
    pub fn from_table(table: &TrajectoryTable, reference: Option<&[f64]>) -> Self {
        let last = table.len() - 1;
        let sizes = &table.shape.cluster_sizes;
        let max_cluster_y_sum = table
            .y
            .iter()
            .map(|y| cluster_y_sum(sizes, table.shape.q, y))
            .fold(0.0, f64::max);
        let t_start = table.times[0];
        let t_end = table.times[last];
        let mut s = Self {
            samples: table.len(),
            t_start,
            t_end,
            ne_residual_initial: table.ne_residual[0],
            ne_residual_final: table.ne_residual[last],
            ne_residual_min: table.ne_residual.iter().copied().fold(f64::INFINITY, f64::min),
            consensus_err_final: table.consensus_err[last],
            est_err_final: table.est_err[last],
            max_cluster_y_sum,
            final_x: table.x[last].clone(),
            reference: None,
            final_decision_error: None,
            rate_fit: None,
            converged: None,
        };
        if let Some(r) = reference {
            let err = table.x[last].iter().zip(r).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let errors: Vec<f64> = table.x.iter().map(|x| distance(x, r)).collect();
            let span = t_end - t_start;
            let window = (t_start + span / 3.0, t_start + 2.0 * span / 3.0);
            s.rate_fit = rate_fit(&table.times, &errors, window).ok();
            s.converged = Some(
                s.ne_residual_final <= CONVERGED_RESIDUAL
                    && s.consensus_err_final <= CONVERGED_RESIDUAL
                    && err <= CONVERGED_DECISION_ERROR,
            );
            s.final_decision_error = Some(err);
            s.reference = Some(r.to_vec());
        }
        s
    }

    /// Largest absolute difference over every numeric field both summaries carry.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let scalars = |s: &Self| {
            let mut v = vec![
                s.t_start,
                s.t_end,
                s.ne_residual_initial,
                s.ne_residual_final,
                s.ne_residual_min,
                s.consensus_err_final,
                s.est_err_final,
                s.max_cluster_y_sum,
                s.final_decision_error.unwrap_or(0.0),
            ];
            if let Some(f) = s.rate_fit {
                v.extend([f.rate, f.r_squared]);
            }
            v.extend(&s.final_x);
            v
        };
        let (a, b) = (scalars(self), scalars(other));
        if a.len() != b.len() || self.samples != other.samples {
            return f64::INFINITY;
        }
        a.iter().zip(&b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let shape = TrajectoryShape { q: 1, order_n: 3, cluster_sizes: vec![2, 1] };
        let h = csv_header(&shape);
        assert_eq!(
            h,
            [
                "t", "x[1.1]", "x[1.2]", "x[2.1]", "xdot1[1.1]", "xdot1[1.2]", "xdot1[2.1]", "xdot2[1.1]", "xdot2[1.2]",
                "xdot2[2.1]", "y[1.1]", "y[1.2]", "y[2.1]", "ne_residual", "consensus_err", "est_err"
            ]
        );
        let rec = csv::StringRecord::from(h);
        assert_eq!(shape_from_header(&rec).unwrap(), shape);
    }

    #[test]
    fn vector_decisions_header() {
        let shape = TrajectoryShape { q: 2, order_n: 1, cluster_sizes: vec![1, 2] };
        let h = csv_header(&shape);
        assert_eq!(&h[1..3], ["x[1.1.1]", "x[1.1.2]"]);
        assert_eq!(shape_from_header(&csv::StringRecord::from(h)).unwrap(), shape);
    }

    #[test]
    fn rejects_foreign_header() {
        let rec = csv::StringRecord::from(vec!["t", "a", "b"]);
        assert!(shape_from_header(&rec).is_err());
    }
}
