//! Rotations as ZYZ Euler angles backed by unit quaternions.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Unit quaternion `(w, x, y, z)`.
pub type Quaternion = [f64; 4];

pub type Matrix3 = [[f64; 3]; 3];

fn quat_mul(p: Quaternion, q: Quaternion) -> Quaternion {
    let [pw, px, py, pz] = p;
    let [qw, qx, qy, qz] = q;
    [
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ]
}

/// A rotation `R = Rz(alpha) · Ry(beta) · Rz(gamma)` acting actively on vectors.
///
/// `alpha` and `gamma` are not reduced modulo 2π: together with `beta` they
/// identify an SU(2) element, which matters for half-integer spins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    /// The quaternion this rotation was built from, if any.
    pub source: Option<Quaternion>,
}

impl Rotation {
    pub fn identity() -> Rotation {
        Rotation { alpha: 0.0, beta: 0.0, gamma: 0.0, source: None }
    }

    pub fn from_euler(alpha: f64, beta: f64, gamma: f64) -> Rotation {
        assert!((0.0..=std::f64::consts::PI).contains(&beta), "beta must lie in [0, π]");
        Rotation { alpha, beta, gamma, source: None }
    }

    /// Euler angles whose SU(2) element reproduces `q` exactly, not `-q`.
    pub fn from_quaternion(q: Quaternion) -> Rotation {
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        let [w, x, y, z] = q.map(|v| v / n);
        let cos_half = (w * w + z * z).sqrt();
        let sin_half = (x * x + y * y).sqrt();
        let beta = 2.0 * sin_half.atan2(cos_half);
        let sum = z.atan2(w);
        let diff = (-x).atan2(y);
        Rotation {
            alpha: sum + diff,
            beta,
            gamma: sum - diff,
            source: Some([w, x, y, z]),
        }
    }

    /// Quaternion `qz(alpha) · qy(beta) · qz(gamma)`.
    pub fn quaternion(&self) -> Quaternion {
        let (s, c) = (0.5 * self.beta).sin_cos();
        let (ss, cs) = (0.5 * (self.alpha + self.gamma)).sin_cos();
        let (sd, cd) = (0.5 * (self.alpha - self.gamma)).sin_cos();
        [c * cs, -s * sd, s * cd, c * ss]
    }

    pub fn matrix(&self) -> Matrix3 {
        let [w, x, y, z] = self.quaternion();
        [
            [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
            [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
            [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
        ]
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Rotation) -> Rotation {
        Rotation::from_quaternion(quat_mul(self.quaternion(), other.quaternion()))
    }

    pub fn inverse(&self) -> Rotation {
        let [w, x, y, z] = self.quaternion();
        Rotation::from_quaternion([w, -x, -y, -z])
    }

    pub fn apply(&self, v: [f64; 3]) -> [f64; 3] {
        let r = self.matrix();
        let mut out = [0.0; 3];
        for (i, row) in r.iter().enumerate() {
            out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
        }
        out
    }
}

/// Haar-uniform rotation drawn from `rng` via a normalized Gaussian 4-vector.
pub fn haar_rotation_from<R: Rng + ?Sized>(rng: &mut R) -> Rotation {
    loop {
        let q: Quaternion = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        if q.iter().map(|v| v * v).sum::<f64>() > 1e-12 {
            return Rotation::from_quaternion(q);
        }
    }
}

/// Deterministic Haar-uniform rotation for a seed.
pub fn haar_rotation(seed: u64) -> Rotation {
    haar_rotation_from(&mut ChaCha8Rng::seed_from_u64(seed))
}
