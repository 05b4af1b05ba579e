use serde::{Deserialize, Serialize};

use super::train::format_real;
use crate::autodiff::Tolerance;
use crate::error::Result;
use crate::layers::{Model, PointCloud};

/// Finite-difference agreement for one named parameter array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCheck {
    pub group: String,
    pub count: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn rel_error(a: f64, n: f64, tol: Tolerance) -> f64 {
    let diff = (a - n).abs();
    if diff <= tol.atol {
        0.0
    } else {
        diff / a.abs().max(n.abs())
    }
}

/// Tape gradients of the energy against central differences, per parameter
/// array, plus a `positions` row for the coordinates.
pub fn parameter_gradcheck(model: &Model, pc: &PointCloud, step: f64, tol: Tolerance) -> Result<Vec<GroupCheck>> {
    let (_, forces, grad) = model.energy_forces_gradient(pc)?;
    let theta = model.flat_params();
    let mut probe = model.clone();
    let mut out = Vec::new();
    let mut k = 0;
    for (name, (r, c)) in model.param_shapes() {
        let mut worst = 0.0f64;
        for _ in 0..r * c {
            let mut t = theta.clone();
            t[k] = theta[k] + step;
            probe.set_flat_params(&t)?;
            let ep = probe.energy(pc)?;
            t[k] = theta[k] - step;
            probe.set_flat_params(&t)?;
            let em = probe.energy(pc)?;
            worst = worst.max(rel_error(grad[k], (ep - em) / (2.0 * step), tol));
            k += 1;
        }
        out.push(GroupCheck { group: name, count: r * c, max_rel_error: worst, passed: worst <= tol.rtol });
    }
    let mut worst = 0.0f64;
    for i in 0..pc.len() {
        for d in 0..3 {
            let mut p = pc.positions().clone();
            p[[i, d]] += step;
            let ep = model.energy(&pc.with_positions(p.clone())?)?;
            p[[i, d]] -= 2.0 * step;
            let em = model.energy(&pc.with_positions(p)?)?;
            worst = worst.max(rel_error(-forces[[i, d]], (ep - em) / (2.0 * step), tol));
        }
    }
    out.push(GroupCheck { group: "positions".into(), count: 3 * pc.len(), max_rel_error: worst, passed: worst <= tol.rtol });
    Ok(out)
}

/// `group,count,max_rel_error,passed` rows.
pub fn gradcheck_csv(rows: &[GroupCheck]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["group", "count", "max_rel_error", "passed"]).map_err(super::train::csv_err)?;
    for r in rows {
        w.write_record([r.group.clone(), r.count.to_string(), format_real(r.max_rel_error), r.passed.to_string()])
            .map_err(super::train::csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| crate::Error::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}
