//! Spin labels and magnetic indices, stored doubled so half-integers stay exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An SU(2) irrep label `j`, stored as `2j`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Spin(u32);

impl Spin {
    pub const ZERO: Spin = Spin(0);
    pub const HALF: Spin = Spin(1);
    pub const ONE: Spin = Spin(2);

    pub const fn from_twice(twice_j: u32) -> Spin {
        Spin(twice_j)
    }

    pub const fn integer(j: u32) -> Spin {
        Spin(2 * j)
    }

    pub const fn twice(self) -> u32 {
        self.0
    }

    /// `2j + 1`.
    pub const fn dim(self) -> usize {
        self.0 as usize + 1
    }

    pub const fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Magnetic indices `-j, -j+1, ..., j` in ascending order.
    pub fn magnetic(self) -> impl Iterator<Item = MagneticIndex> {
        let tj = self.0 as i32;
        (0..=self.0 as i32).map(move |k| MagneticIndex(2 * k - tj))
    }

    /// Row index of `m` in the ascending `-j..j` ordering.
    pub fn index_of(self, m: MagneticIndex) -> usize {
        ((m.0 + self.0 as i32) / 2) as usize
    }

    pub fn contains(self, m: MagneticIndex) -> bool {
        m.0.unsigned_abs() <= self.0 && (m.0 + self.0 as i32) % 2 == 0
    }
}

impl fmt::Display for Spin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl FromStr for Spin {
    type Err = Error;

    /// Accepts integers (`2`), decimals (`0.5`, `1.5`) and rationals (`3/2`).
    fn from_str(s: &str) -> Result<Spin> {
        let s = s.trim();
        let bad = || Error::InvalidSpin(s.to_string());
        let twice = if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: i64 = q.trim().parse().map_err(|_| bad())?;
            if q <= 0 || (2 * p) % q != 0 {
                return Err(bad());
            }
            2 * p / q
        } else {
            let v: f64 = s.parse().map_err(|_| bad())?;
            let twice = (2.0 * v).round();
            if !v.is_finite() || (2.0 * v - twice).abs() > 1e-9 {
                return Err(bad());
            }
            twice as i64
        };
        if twice < 0 {
            return Err(bad());
        }
        Ok(Spin(twice as u32))
    }
}

/// A magnetic quantum number `m`, stored as `2m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MagneticIndex(i32);

impl MagneticIndex {
    pub const fn from_twice(twice_m: i32) -> MagneticIndex {
        MagneticIndex(twice_m)
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

/// Triangle rule plus integrality of `ja + jb + jc`.
pub fn admissible(ja: Spin, jb: Spin, jc: Spin) -> bool {
    let (a, b, c) = (ja.0, jb.0, jc.0);
    a.abs_diff(b) <= c && c <= a + b && (a + b + c) % 2 == 0
}

/// All `jc` admissible with `ja` and `jb`, ascending.
pub fn coupled_spins(ja: Spin, jb: Spin) -> impl Iterator<Item = Spin> {
    let lo = ja.0.abs_diff(jb.0);
    let hi = ja.0 + jb.0;
    (lo..=hi).step_by(2).map(Spin)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!("0.5".parse::<Spin>().unwrap(), Spin::HALF);
        assert_eq!("1/2".parse::<Spin>().unwrap(), Spin::HALF);
        assert_eq!("3".parse::<Spin>().unwrap(), Spin::integer(3));
        assert_eq!("6/4".parse::<Spin>().unwrap(), Spin::from_twice(3));
        assert!("0.3".parse::<Spin>().is_err());
        assert!("-1".parse::<Spin>().is_err());
        assert!("1/3".parse::<Spin>().is_err());
    }

    #[test]
    fn display_round_trips() {
        for tj in 0..9 {
            let s = Spin::from_twice(tj);
            assert_eq!(s.to_string().parse::<Spin>().unwrap(), s);
        }
    }

    #[test]
    fn magnetic_ordering() {
        let ms: Vec<i32> = Spin::from_twice(3).magnetic().map(|m| m.twice()).collect();
        assert_eq!(ms, vec![-3, -1, 1, 3]);
        let j = Spin::integer(2);
        for (k, m) in j.magnetic().enumerate() {
            assert_eq!(j.index_of(m), k);
            assert!(j.contains(m));
        }
        assert!(!j.contains(MagneticIndex::from_twice(1)));
        assert!(!j.contains(MagneticIndex::from_twice(6)));
    }

    #[test]
    fn admissibility() {
        assert!(admissible(Spin::HALF, Spin::HALF, Spin::ZERO));
        assert!(admissible(Spin::ONE, Spin::ONE, Spin::integer(2)));
        assert!(!admissible(Spin::ONE, Spin::ONE, Spin::integer(3)));
        assert!(!admissible(Spin::HALF, Spin::ONE, Spin::ONE));
        let cs: Vec<u32> = coupled_spins(Spin::ONE, Spin::from_twice(3)).map(Spin::twice).collect();
        assert_eq!(cs, vec![1, 3, 5]);
    }
}
