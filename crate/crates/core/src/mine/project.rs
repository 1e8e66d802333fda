//! Two-dimensional PCA projection for inspecting mined negatives.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::ensemble::csv_err;
use crate::error::{Error, Result};

/// Projects `points` onto their top two principal components.
///
/// Each component's sign is fixed so that its largest-magnitude loading is
/// positive (first such index on ties). Components with no variance map to
/// zero, so a set of identical points lands on the origin.
pub fn project_2d(points: &[(String, Vec<f64>)]) -> Result<Vec<(String, f64, f64)>> {
    if points.len() < 2 {
        return Err(Error::invalid("projection needs at least two points"));
    }
    let dim = points[0].1.len();
    if let Some((_, v)) = points.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: v.len(),
        });
    }
    let n = points.len();
    let mut mean = vec![0.0; dim];
    for (_, v) in points {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, dim, |i, j| points[i].1[j] - mean[j]);
    let scale = centered.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    if scale == 0.0 || dim == 0 {
        return Ok(points.iter().map(|(id, _)| (id.clone(), 0.0, 0.0)).collect());
    }

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .total_cmp(&svd.singular_values[a])
            .then(a.cmp(&b))
    });
    let top = svd.singular_values[order[0]];

    let mut axes: Vec<Option<Vec<f64>>> = Vec::with_capacity(2);
    for slot in 0..2 {
        let axis = order.get(slot).and_then(|&r| {
            if svd.singular_values[r] <= 1e-10 * top {
                return None;
            }
            let mut loading: Vec<f64> = v_t.row(r).iter().copied().collect();
            let lead = loading.iter().enumerate().fold((0, 0.0f64), |best, (i, &x)| {
                if x.abs() > best.1.abs() + 1e-12 {
                    (i, x)
                } else {
                    best
                }
            });
            if lead.1 < 0.0 {
                loading.iter_mut().for_each(|x| *x = -*x);
            }
            Some(loading)
        });
        axes.push(axis);
    }

    Ok((0..n)
        .map(|i| {
            let coord = |axis: &Option<Vec<f64>>| {
                axis.as_ref()
                    .map(|a| centered.row(i).iter().zip(a).map(|(x, y)| x * y).sum())
                    .unwrap_or(0.0)
            };
            (points[i].0.clone(), coord(&axes[0]), coord(&axes[1]))
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointRole {
    Query,
    Positive,
    HardNegative,
    Candidate,
}

impl PointRole {
    pub fn as_str(self) -> &'static str {
        match self {
            PointRole::Query => "query",
            PointRole::Positive => "positive",
            PointRole::HardNegative => "hard_negative",
            PointRole::Candidate => "candidate",
        }
    }
}

/// Writes `id,role,x,y` rows.
pub fn write_scatter_csv<W: Write>(rows: &[(String, PointRole, f64, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["id", "role", "x", "y"]).map_err(csv_err)?;
    for (id, role, x, y) in rows {
        w.write_record([id.as_str(), role.as_str(), &x.to_string(), &y.to_string()])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::invalid(e.to_string()))
}
