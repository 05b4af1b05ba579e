//! Clebsch-Gordan coefficients (Condon-Shortley phase) and dense CG tensors.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock, RwLock};

use ndarray::Array2;
use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::spin::{admissible, MagneticIndex, Spin};

fn factorial(n: i64) -> BigInt {
    (2..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// `⟨ja ma; jb mb | jc mc⟩` by Racah's closed-form sum.
///
/// The sum and the prefactor are evaluated exactly over big rationals; only
/// the final square root is taken in double precision. Returns zero for any
/// selection-rule violation or inadmissible triple.
pub fn cg_coefficient(
    ja: Spin,
    ma: MagneticIndex,
    jb: Spin,
    mb: MagneticIndex,
    jc: Spin,
    mc: MagneticIndex,
) -> f64 {
    if !(ja.contains(ma) && jb.contains(mb) && jc.contains(mc)) {
        return 0.0;
    }
    if ma.twice() + mb.twice() != mc.twice() || !admissible(ja, jb, jc) {
        return 0.0;
    }
    let (a, b, c) = (ja.twice() as i64, jb.twice() as i64, jc.twice() as i64);
    let (am, bm, cm) = (ma.twice() as i64, mb.twice() as i64, mc.twice() as i64);
    // All of these are integers once admissibility and m-parity hold.
    let h = |x: i64| x / 2;
    let abc = h(a + b - c);
    let amb = h(a - am);
    let bpm = h(b + bm);
    let c_b_ma = h(c - b + am);
    let c_a_mb = h(c - a - bm);

    let k_min = 0.max(-c_b_ma).max(-c_a_mb);
    let k_max = abc.min(amb).min(bpm);

    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let denom = factorial(k)
            * factorial(abc - k)
            * factorial(amb - k)
            * factorial(bpm - k)
            * factorial(c_b_ma + k)
            * factorial(c_a_mb + k);
        let term = BigRational::new(BigInt::one(), denom);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return 0.0;
    }

    let triangle = BigRational::new(
        factorial(h(c + a - b)) * factorial(h(c - a + b)) * factorial(abc),
        factorial(h(a + b + c) + 1),
    );
    let magnetic = factorial(h(c + cm))
        * factorial(h(c - cm))
        * factorial(amb)
        * factorial(h(a + am))
        * factorial(h(b - bm))
        * factorial(bpm);
    let squared = BigRational::from_integer(BigInt::from(c + 1) * magnetic)
        * triangle
        * &sum
        * &sum;
    let magnitude = squared.to_f64().unwrap_or(f64::NAN).sqrt();
    if sum.is_negative() {
        -magnitude
    } else {
        magnitude
    }
}

/// Dense `(2ja+1) × (2jb+1) × (2jc+1)` array of CG coefficients.
#[derive(Clone, Debug)]
pub struct CgTensor {
    ja: Spin,
    jb: Spin,
    jc: Spin,
    coeffs: Vec<f64>,
    // (ma, mb, mc, value) row indices of the nonzero entries.
    nonzeros: Vec<(usize, usize, usize, f64)>,
}

impl CgTensor {
    pub fn new(ja: Spin, jb: Spin, jc: Spin) -> Result<CgTensor> {
        if !admissible(ja, jb, jc) {
            return Err(Error::InadmissibleTriple(ja, jb, jc));
        }
        let (da, db, dc) = (ja.dim(), jb.dim(), jc.dim());
        let mut coeffs = vec![0.0; da * db * dc];
        let mut nonzeros = Vec::new();
        for (ia, ma) in ja.magnetic().enumerate() {
            for (ib, mb) in jb.magnetic().enumerate() {
                let mc = MagneticIndex::from_twice(ma.twice() + mb.twice());
                if !jc.contains(mc) {
                    continue;
                }
                let ic = jc.index_of(mc);
                let v = cg_coefficient(ja, ma, jb, mb, jc, mc);
                coeffs[(ia * db + ib) * dc + ic] = v;
                if v != 0.0 {
                    nonzeros.push((ia, ib, ic, v));
                }
            }
        }
        Ok(CgTensor { ja, jb, jc, coeffs, nonzeros })
    }

    pub fn spins(&self) -> (Spin, Spin, Spin) {
        (self.ja, self.jb, self.jc)
    }

    /// Entry at row indices (not magnetic numbers) `(ia, ib, ic)`.
    pub fn get(&self, ia: usize, ib: usize, ic: usize) -> f64 {
        self.coeffs[(ia * self.jb.dim() + ib) * self.jc.dim() + ic]
    }

    pub fn nonzeros(&self) -> &[(usize, usize, usize, f64)] {
        &self.nonzeros
    }

    /// The tensor reshaped to a `(da·db) × dc` matrix, row index `ia·db + ib`.
    pub fn as_matrix(&self) -> Array2<f64> {
        let rows = self.ja.dim() * self.jb.dim();
        Array2::from_shape_vec((rows, self.jc.dim()), self.coeffs.clone())
            .expect("coefficient buffer has the tensor's shape")
    }

    /// Channel-wise CG product `out[mc, t] = Σ C[ma, mb, mc] a[ma, t] b[mb, t]`.
    ///
    /// Both operands are `(2j+1) × channels`; a single-channel operand
    /// broadcasts against the other.
    pub fn product(&self, a: &Array2<Complex64>, b: &Array2<Complex64>) -> Result<Array2<Complex64>> {
        let channels = broadcast_channels(a.ncols(), b.ncols())?;
        self.check_rows(a.nrows(), b.nrows())?;
        let mut out = Array2::zeros((self.jc.dim(), channels));
        let (sa, sb) = (a.ncols() > 1, b.ncols() > 1);
        for &(ia, ib, ic, v) in &self.nonzeros {
            for t in 0..channels {
                let x = a[[ia, if sa { t } else { 0 }]] * b[[ib, if sb { t } else { 0 }]];
                out[[ic, t]] += x * v;
            }
        }
        Ok(out)
    }

    /// Adjoint of [`CgTensor::product`] with respect to `a`, given the other
    /// operand `b` and output cotangent `out_bar` (conjugate convention).
    pub fn product_adjoint_left(
        &self,
        a_cols: usize,
        b: &Array2<Complex64>,
        out_bar: &Array2<Complex64>,
    ) -> Array2<Complex64> {
        let channels = out_bar.ncols();
        let mut grad = Array2::zeros((self.ja.dim(), a_cols));
        let sb = b.ncols() > 1;
        for &(ia, ib, ic, v) in &self.nonzeros {
            for t in 0..channels {
                let g = b[[ib, if sb { t } else { 0 }]].conj() * out_bar[[ic, t]] * v;
                grad[[ia, if a_cols > 1 { t } else { 0 }]] += g;
            }
        }
        grad
    }

    /// Adjoint of [`CgTensor::product`] with respect to `b`.
    pub fn product_adjoint_right(
        &self,
        a: &Array2<Complex64>,
        b_cols: usize,
        out_bar: &Array2<Complex64>,
    ) -> Array2<Complex64> {
        let channels = out_bar.ncols();
        let mut grad = Array2::zeros((self.jb.dim(), b_cols));
        let sa = a.ncols() > 1;
        for &(ia, ib, ic, v) in &self.nonzeros {
            for t in 0..channels {
                let g = a[[ia, if sa { t } else { 0 }]].conj() * out_bar[[ic, t]] * v;
                grad[[ib, if b_cols > 1 { t } else { 0 }]] += g;
            }
        }
        grad
    }

    fn check_rows(&self, ra: usize, rb: usize) -> Result<()> {
        if ra != self.ja.dim() {
            return Err(Error::ShapeMismatch(format!(
                "left operand has {ra} rows, spin {} needs {}",
                self.ja,
                self.ja.dim()
            )));
        }
        if rb != self.jb.dim() {
            return Err(Error::ShapeMismatch(format!(
                "right operand has {rb} rows, spin {} needs {}",
                self.jb,
                self.jb.dim()
            )));
        }
        Ok(())
    }
}

pub(crate) fn broadcast_channels(a: usize, b: usize) -> Result<usize> {
    if a == b || b == 1 {
        Ok(a)
    } else if a == 1 {
        Ok(b)
    } else {
        Err(Error::ChannelMismatch { expected: a, found: b })
    }
}

/// Build (or fetch from the process-wide cache) the CG tensor for a triple.
pub fn cg_tensor(ja: Spin, jb: Spin, jc: Spin) -> Result<Arc<CgTensor>> {
    static CACHE: OnceLock<RwLock<HashMap<(u32, u32, u32), Arc<CgTensor>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (ja.twice(), jb.twice(), jc.twice());
    if let Some(t) = cache.read().expect("cg cache poisoned").get(&key) {
        return Ok(Arc::clone(t));
    }
    let tensor = Arc::new(CgTensor::new(ja, jb, jc)?);
    let mut w = cache.write().expect("cg cache poisoned");
    Ok(Arc::clone(w.entry(key).or_insert(tensor)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(twice: i32) -> MagneticIndex {
        MagneticIndex::from_twice(twice)
    }

    #[test]
    fn singlet_coefficient() {
        let v = cg_coefficient(Spin::HALF, m(1), Spin::HALF, m(-1), Spin::ZERO, m(0));
        assert!((v - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        let w = cg_coefficient(Spin::HALF, m(-1), Spin::HALF, m(1), Spin::ZERO, m(0));
        assert!((w + std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn spin_two_from_vectors() {
        let v = cg_coefficient(Spin::ONE, m(2), Spin::ONE, m(-2), Spin::integer(2), m(0));
        assert!((v - 1.0 / 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn trivial_irrep_is_identity() {
        for tj in 0..9u32 {
            let j = Spin::from_twice(tj);
            for mj in j.magnetic() {
                let v = cg_coefficient(j, mj, Spin::ZERO, m(0), j, mj);
                assert!((v - 1.0).abs() < 1e-15, "j={j} m={mj:?} -> {v}");
            }
        }
    }

    #[test]
    fn selection_rules_give_zero() {
        assert_eq!(cg_coefficient(Spin::ONE, m(2), Spin::ONE, m(0), Spin::integer(2), m(0)), 0.0);
        assert_eq!(cg_coefficient(Spin::ONE, m(0), Spin::ONE, m(0), Spin::integer(3), m(0)), 0.0);
        // m outside its spin
        assert_eq!(cg_coefficient(Spin::HALF, m(3), Spin::HALF, m(-1), Spin::ONE, m(2)), 0.0);
    }

    #[test]
    fn tensor_shapes_and_errors() {
        let t = CgTensor::new(Spin::ZERO, Spin::ZERO, Spin::ZERO).unwrap();
        assert_eq!(t.as_matrix().shape(), &[1, 1]);
        assert_eq!(t.get(0, 0, 0), 1.0);
        assert_eq!(
            CgTensor::new(Spin::ONE, Spin::ONE, Spin::integer(3)).unwrap_err(),
            Error::InadmissibleTriple(Spin::ONE, Spin::ONE, Spin::integer(3))
        );
        let half = CgTensor::new(Spin::HALF, Spin::HALF, Spin::ONE).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        for &(_, _, _, v) in half.nonzeros() {
            assert!((v - 1.0).abs() < 1e-15 || (v.abs() - s).abs() < 1e-15);
        }
    }

    #[test]
    fn cache_returns_shared_tensor() {
        let a = cg_tensor(Spin::ONE, Spin::ONE, Spin::ONE).unwrap();
        let b = cg_tensor(Spin::ONE, Spin::ONE, Spin::ONE).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
