//! Wigner little-d and D matrices, rows and columns ordered `m = -j..j`.

use ndarray::Array2;
use num_complex::Complex64;

use super::rotation::Rotation;
use crate::spin::Spin;

fn factorial(n: i32) -> f64 {
    debug_assert!(n >= 0);
    (2..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `d^j_{m'm}(β)` via the explicit factorial sum; entry `[m', m]`.
pub fn wigner_small_d(j: Spin, beta: f64) -> Array2<f64> {
    let tj = j.twice() as i32;
    let dim = j.dim();
    let (s, c) = (0.5 * beta).sin_cos();
    let mut d = Array2::zeros((dim, dim));
    for (row, mp) in j.magnetic().enumerate() {
        for (col, m) in j.magnetic().enumerate() {
            let (mp, m) = (mp.twice(), m.twice());
            // integer-valued j±m, j±m'
            let jpm = (tj + m) / 2;
            let jmm = (tj - m) / 2;
            let jpmp = (tj + mp) / 2;
            let jmmp = (tj - mp) / 2;
            let diff = (mp - m) / 2;
            let pref = (factorial(jpmp) * factorial(jmmp) * factorial(jpm) * factorial(jmm)).sqrt();
            let k_min = 0.max(-diff);
            let k_max = jpm.min(jmmp);
            let mut sum = 0.0;
            for k in k_min..=k_max {
                let sign = if (diff + k) % 2 == 0 { 1.0 } else { -1.0 };
                let denom = factorial(jpm - k) * factorial(k) * factorial(diff + k) * factorial(jmmp - k);
                let cos_pow = tj - 2 * k - diff;
                let sin_pow = 2 * k + diff;
                sum += sign * c.powi(cos_pow) * s.powi(sin_pow) / denom;
            }
            d[[row, col]] = pref * sum;
        }
    }
    d
}

/// Matrix of a rotation acting on spin-`j` components.
#[derive(Clone, Debug)]
pub struct WignerD {
    pub j: Spin,
    pub matrix: Array2<Complex64>,
}

impl WignerD {
    /// `D · x` for a `(2j+1) × channels` block.
    pub fn apply(&self, x: &Array2<Complex64>) -> Array2<Complex64> {
        self.matrix.dot(x)
    }

    pub fn dim(&self) -> usize {
        self.j.dim()
    }
}

/// `D^j_{m'm}(g) = e^{i m' α} d^j_{m'm}(β) e^{i m γ}`.
///
/// This is the complex conjugate of the textbook `e^{-i m' α} d e^{-i m γ}`,
/// chosen so that spherical harmonics satisfy `Y(R x) = D(R) Y(x)` for the
/// active rotation `R = Rz(α) Ry(β) Rz(γ)`. For half-integer `j` the Euler
/// angles are read as an SU(2) element, see [`Rotation`].
pub fn wigner_d(j: Spin, g: &Rotation) -> WignerD {
    let small = wigner_small_d(j, g.beta);
    let dim = j.dim();
    let mut matrix = Array2::zeros((dim, dim));
    for (row, mp) in j.magnetic().enumerate() {
        let left = Complex64::from_polar(1.0, mp.as_f64() * g.alpha);
        for (col, m) in j.magnetic().enumerate() {
            let right = Complex64::from_polar(1.0, m.as_f64() * g.gamma);
            matrix[[row, col]] = left * small[[row, col]] * right;
        }
    }
    WignerD { j, matrix }
}
