//! Irrep-valued features: single-spin blocks and their direct sums.

use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::spin::Spin;
use crate::su2::{wigner_d, Rotation};

/// A `(2j+1) × τ` block of components for one spin, `τ` channels wide.
#[derive(Clone, Debug, PartialEq)]
pub struct IrrepVector {
    spin: Spin,
    data: Array2<Complex64>,
}

impl IrrepVector {
    pub fn new(spin: Spin, data: Array2<Complex64>) -> Result<IrrepVector> {
        if data.nrows() != spin.dim() {
            return Err(Error::ShapeMismatch(format!(
                "spin {spin} needs {} rows, got {}",
                spin.dim(),
                data.nrows()
            )));
        }
        if data.ncols() == 0 {
            return Err(Error::ShapeMismatch("irrep vector needs at least one channel".into()));
        }
        Ok(IrrepVector { spin, data })
    }

    pub fn zeros(spin: Spin, channels: usize) -> IrrepVector {
        IrrepVector { spin, data: Array2::zeros((spin.dim(), channels)) }
    }

    /// Entries with i.i.d. standard normal real and imaginary parts.
    pub fn random<R: Rng + ?Sized>(spin: Spin, channels: usize, rng: &mut R) -> IrrepVector {
        let data = Array2::from_shape_simple_fn((spin.dim(), channels), || {
            Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        IrrepVector { spin, data }
    }

    pub fn spin(&self) -> Spin {
        self.spin
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Array2<Complex64> {
        &self.data
    }

    pub fn into_data(self) -> Array2<Complex64> {
        self.data
    }

    pub fn rotated(&self, g: &Rotation) -> IrrepVector {
        IrrepVector { spin: self.spin, data: wigner_d(self.spin, g).apply(&self.data) }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Frobenius distance to `other`; shapes must agree.
    pub fn distance(&self, other: &IrrepVector) -> f64 {
        assert_eq!(self.data.dim(), other.data.dim());
        (&self.data - &other.data).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> IrrepVector {
        IrrepVector { spin: self.spin, data: self.data.mapv(|z| z * s) }
    }

    pub fn add(&self, other: &IrrepVector) -> Result<IrrepVector> {
        if self.spin != other.spin {
            return Err(Error::SpinMismatch { expected: self.spin, found: other.spin });
        }
        if self.channels() != other.channels() {
            return Err(Error::ChannelMismatch { expected: self.channels(), found: other.channels() });
        }
        Ok(IrrepVector { spin: self.spin, data: &self.data + &other.data })
    }
}

/// A direct sum of irrep blocks sharing one channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct Activation {
    channels: usize,
    parts: BTreeMap<Spin, IrrepVector>,
}

impl Activation {
    pub fn new(channels: usize) -> Activation {
        Activation { channels, parts: BTreeMap::new() }
    }

    pub fn from_parts(channels: usize, parts: impl IntoIterator<Item = IrrepVector>) -> Result<Activation> {
        let mut a = Activation::new(channels);
        for p in parts {
            a.insert(p)?;
        }
        Ok(a)
    }

    pub fn random<R: Rng + ?Sized>(spins: &[Spin], channels: usize, rng: &mut R) -> Activation {
        let mut a = Activation::new(channels);
        for &s in spins {
            a.parts.insert(s, IrrepVector::random(s, channels, rng));
        }
        a
    }

    /// Adds a part; a second part for an existing spin is an error.
    pub fn insert(&mut self, part: IrrepVector) -> Result<()> {
        if part.channels() != self.channels {
            return Err(Error::ChannelMismatch { expected: self.channels, found: part.channels() });
        }
        if self.parts.contains_key(&part.spin) {
            return Err(Error::ShapeMismatch(format!("activation already has a spin {} part", part.spin)));
        }
        self.parts.insert(part.spin, part);
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn get(&self, spin: Spin) -> Option<&IrrepVector> {
        self.parts.get(&spin)
    }

    pub fn spins(&self) -> Vec<Spin> {
        self.parts.keys().copied().collect()
    }

    pub fn parts(&self) -> impl Iterator<Item = &IrrepVector> {
        self.parts.values()
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn rotated(&self, g: &Rotation) -> Activation {
        Activation {
            channels: self.channels,
            parts: self.parts.iter().map(|(s, p)| (*s, p.rotated(g))).collect(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.parts.values().map(|p| p.norm().powi(2)).sum::<f64>().sqrt()
    }

    /// Distance over the union of spins; a missing part counts as zero.
    pub fn distance(&self, other: &Activation) -> f64 {
        let mut total = 0.0;
        for (s, p) in &self.parts {
            total += match other.parts.get(s) {
                Some(q) => p.distance(q).powi(2),
                None => p.norm().powi(2),
            };
        }
        for (s, q) in &other.parts {
            if !self.parts.contains_key(s) {
                total += q.norm().powi(2);
            }
        }
        total.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_checks() {
        assert!(IrrepVector::new(Spin::ONE, Array2::zeros((2, 1))).is_err());
        assert!(IrrepVector::new(Spin::ONE, Array2::zeros((3, 0))).is_err());
        let mut a = Activation::new(2);
        a.insert(IrrepVector::zeros(Spin::ONE, 2)).unwrap();
        assert!(a.insert(IrrepVector::zeros(Spin::ONE, 2)).is_err());
        assert!(matches!(
            a.insert(IrrepVector::zeros(Spin::ZERO, 3)),
            Err(Error::ChannelMismatch { .. })
        ));
    }

    #[test]
    fn rotation_preserves_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Activation::random(&[Spin::ZERO, Spin::HALF, Spin::ONE, Spin::integer(2)], 3, &mut rng);
        let g = crate::su2::haar_rotation(5);
        assert!((a.rotated(&g).norm() - a.norm()).abs() < 1e-12);
        assert!(a.distance(&a) == 0.0);
    }
}
