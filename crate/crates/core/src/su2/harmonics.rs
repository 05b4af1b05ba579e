//! Complex spherical harmonics with Condon-Shortley phase and their
//! Cartesian Jacobians.

use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::irrep::IrrepVector;
use crate::spin::Spin;

/// Vectors shorter than this have no direction.
pub const ZERO_VECTOR_THRESHOLD: f64 = 1e-12;

/// `Y^l_m(x / |x|)` for `m = -l..l` together with `∂Y^l_m / ∂x_k`.
///
/// Uses the regular solid harmonics `r^l Y^l_m = N_lm Q^m_l(z, r²) (x + iy)^m`
/// where `Q` obeys the homogenised associated-Legendre recurrence; negative `m`
/// follow from `Y^l_{-m} = (-1)^m conj(Y^l_m)`.
pub fn harmonic_with_jacobian(x: [f64; 3], l: u32) -> Result<(Vec<Complex64>, Vec<[Complex64; 3]>)> {
    let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
    let r = r2.sqrt();
    if r < ZERO_VECTOR_THRESHOLD {
        return Err(Error::ZeroVector(r));
    }
    let l_us = l as usize;
    let li = l as i32;
    let z = x[2];
    let xy = Complex64::new(x[0], x[1]);
    let rl = r.powi(li);

    let mut values = vec![Complex64::new(0.0, 0.0); 2 * l_us + 1];
    let mut jac = vec![[Complex64::new(0.0, 0.0); 3]; 2 * l_us + 1];

    for m in 0..=li {
        // Q^m_m = (-1)^m (2m-1)!!, then climb in degree up to l.
        let mut q_prev2 = (0.0, [0.0; 3]);
        let double_fact: f64 = (1..=m).map(|k| (2 * k - 1) as f64).product();
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        let mut q_prev = (sign * double_fact, [0.0; 3]);
        for deg in (m + 1)..=li {
            let a = (2 * deg - 1) as f64;
            let b = (deg + m - 1) as f64;
            let inv = 1.0 / (deg - m) as f64;
            let val = (a * z * q_prev.0 - b * r2 * q_prev2.0) * inv;
            let mut grad = [0.0; 3];
            for k in 0..3 {
                let dz = if k == 2 { q_prev.0 } else { 0.0 };
                grad[k] = (a * (dz + z * q_prev.1[k]) - b * (2.0 * x[k] * q_prev2.0 + r2 * q_prev2.1[k])) * inv;
            }
            q_prev2 = q_prev;
            q_prev = (val, grad);
        }
        let (q, dq) = q_prev;

        let norm = ((2 * li + 1) as f64 / (4.0 * PI) * ratio_factorial(li - m, li + m)).sqrt();
        let pm = xy.powi(m);
        let dpm = if m == 0 { Complex64::new(0.0, 0.0) } else { xy.powi(m - 1) * m as f64 };
        let dp = [dpm, dpm * Complex64::i(), Complex64::new(0.0, 0.0)];

        let solid = pm * q * norm;
        let y = solid / rl;
        let mut dy = [Complex64::new(0.0, 0.0); 3];
        for k in 0..3 {
            let dsolid = (pm * dq[k] + dp[k] * q) * norm;
            dy[k] = dsolid / rl - solid * (li as f64 * x[k] / (rl * r2));
        }
        let pos = l_us + m as usize;
        values[pos] = y;
        jac[pos] = dy;
        if m > 0 {
            let neg = l_us - m as usize;
            let s = if m % 2 == 0 { 1.0 } else { -1.0 };
            values[neg] = y.conj() * s;
            jac[neg] = dy.map(|d| d.conj() * s);
        }
    }
    Ok((values, jac))
}

fn ratio_factorial(num: i32, den: i32) -> f64 {
    // num! / den! with den >= num
    (num + 1..=den).fold(1.0, |acc, k| acc / k as f64)
}

/// Unit-channel spherical harmonics `Y^j(x̂)` for integer `j = 0..=j_max`.
pub fn spherical_harmonics(x: [f64; 3], j_max: Spin) -> Result<Vec<IrrepVector>> {
    if !j_max.is_integer() {
        return Err(Error::InvalidSpin(format!("spherical harmonics need integer spin, got {j_max}")));
    }
    (0..=j_max.twice() / 2)
        .map(|l| {
            let (values, _) = harmonic_with_jacobian(x, l)?;
            let data = Array2::from_shape_vec((values.len(), 1), values).expect("column shape");
            IrrepVector::new(Spin::integer(l), data)
        })
        .collect()
}
