use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layers::PointCloud;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Morse,
    MorseAngular,
}

/// Pairwise Morse energy `D[(1 - e^{-a(r - r_e)})² - 1]`, optionally plus
/// `λ Σ_j Σ_{i<k} s(r_ji) s(r_jk) (cos θ_ijk - c0)²` with a Gaussian
/// weight `s(r) = exp(-r² / 2σ²)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Potential {
    pub kind: PotentialKind,
    pub depth: f64,
    pub stiffness: f64,
    pub equilibrium: f64,
    pub angular_strength: f64,
    pub angular_width: f64,
    pub angular_cos0: f64,
}

impl Potential {
    pub fn new(kind: PotentialKind) -> Potential {
        Potential {
            kind,
            depth: 1.0,
            stiffness: 1.5,
            equilibrium: 1.1,
            angular_strength: 0.5,
            angular_width: 1.2,
            angular_cos0: -0.5,
        }
    }

    /// Energy and analytic forces `-∂E/∂x`.
    pub fn energy_and_forces(&self, positions: &Array2<f64>) -> (f64, Array2<f64>) {
        let n = positions.nrows();
        let p = |i: usize| [positions[[i, 0]], positions[[i, 1]], positions[[i, 2]]];
        let mut energy = 0.0;
        let mut grad = Array2::<f64>::zeros((n, 3));
        for i in 0..n {
            for j in i + 1..n {
                let d = sub(p(j), p(i));
                let r = norm(d);
                let e = (-self.stiffness * (r - self.equilibrium)).exp();
                energy += self.depth * ((1.0 - e).powi(2) - 1.0);
                let dv = 2.0 * self.depth * self.stiffness * (1.0 - e) * e;
                for k in 0..3 {
                    grad[[j, k]] += dv * d[k] / r;
                    grad[[i, k]] -= dv * d[k] / r;
                }
            }
        }
        if self.kind == PotentialKind::MorseAngular {
            let s2 = self.angular_width * self.angular_width;
            let weight = |r: f64| {
                let s = (-0.5 * r * r / s2).exp();
                (s, -r / s2 * s)
            };
            for j in 0..n {
                for i in 0..n {
                    for k in i + 1..n {
                        if i == j || k == j {
                            continue;
                        }
                        let u = sub(p(i), p(j));
                        let v = sub(p(k), p(j));
                        let (ru, rv) = (norm(u), norm(v));
                        let c = dot(u, v) / (ru * rv);
                        let (su, dsu) = weight(ru);
                        let (sv, dsv) = weight(rv);
                        let dc = c - self.angular_cos0;
                        let lam = self.angular_strength;
                        energy += lam * su * sv * dc * dc;
                        for q in 0..3 {
                            let dc_du = v[q] / (ru * rv) - c * u[q] / (ru * ru);
                            let dc_dv = u[q] / (ru * rv) - c * v[q] / (rv * rv);
                            let gu = lam * (dsu * u[q] / ru * sv * dc * dc + su * sv * 2.0 * dc * dc_du);
                            let gv = lam * (dsv * v[q] / rv * su * dc * dc + su * sv * 2.0 * dc * dc_dv);
                            grad[[i, q]] += gu;
                            grad[[k, q]] += gv;
                            grad[[j, q]] -= gu + gv;
                        }
                    }
                }
            }
        }
        (energy, -grad)
    }

    pub fn energy(&self, positions: &Array2<f64>) -> f64 {
        self.energy_and_forces(positions).0
    }

    /// Largest `|F - F_fd|` against central differences with step `h`.
    pub fn force_check(&self, positions: &Array2<f64>, h: f64) -> f64 {
        let (_, f) = self.energy_and_forces(positions);
        let mut worst = 0.0f64;
        let mut p = positions.clone();
        for i in 0..p.nrows() {
            for k in 0..3 {
                let orig = p[[i, k]];
                p[[i, k]] = orig + h;
                let ep = self.energy(&p);
                p[[i, k]] = orig - h;
                let em = self.energy(&p);
                p[[i, k]] = orig;
                worst = worst.max((f[[i, k]] + (ep - em) / (2.0 * h)).abs());
            }
        }
        worst
    }
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub cloud: PointCloud,
    pub energy: f64,
    pub forces: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Units {
    pub length: String,
    pub energy: String,
}

/// One line of a dataset file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub positions: Vec<[f64; 3]>,
    pub species: Vec<usize>,
    pub energy: f64,
    pub forces: Vec<[f64; 3]>,
    pub units: Units,
}

fn rows(a: &Array2<f64>) -> Vec<[f64; 3]> {
    a.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
}

fn from_rows(v: &[[f64; 3]]) -> Array2<f64> {
    Array2::from_shape_fn((v.len(), 3), |(i, k)| v[i][k])
}

impl Sample {
    pub fn to_record(&self) -> SampleRecord {
        SampleRecord {
            positions: rows(self.cloud.positions()),
            species: self.cloud.species().to_vec(),
            energy: self.energy,
            forces: rows(&self.forces),
            units: Units { length: "length".into(), energy: "energy".into() },
        }
    }

    pub fn from_record(r: &SampleRecord) -> Result<Sample> {
        if r.forces.len() != r.positions.len() {
            return Err(Error::ShapeMismatch("forces and positions differ in length".into()));
        }
        Ok(Sample {
            cloud: PointCloud::new(from_rows(&r.positions), r.species.clone())?,
            energy: r.energy,
            forces: from_rows(&r.forces),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub n_samples: usize,
    pub n_atoms: usize,
    pub kind: PotentialKind,
    pub seed: u64,
    pub box_size: f64,
    pub min_separation: f64,
    /// Placement attempts per atom before giving up.
    pub max_attempts: usize,
}

impl DatasetConfig {
    pub fn new(n_samples: usize, n_atoms: usize, kind: PotentialKind, seed: u64) -> DatasetConfig {
        DatasetConfig {
            n_samples,
            n_atoms,
            kind,
            seed,
            box_size: 1.3 * (n_atoms as f64).cbrt(),
            min_separation: 0.85,
            max_attempts: 10_000,
        }
    }
}

/// Force agreement demanded of every generated sample.
pub const GENERATION_FORCE_TOLERANCE: f64 = 1e-8;

/// Uniform positions in a cube with minimum-separation rejection; labels
/// from the analytic potential, checked against finite differences.
pub fn generate_dataset(cfg: &DatasetConfig) -> Result<Vec<Sample>> {
    if cfg.n_atoms < 2 {
        return Err(Error::Config("datasets need at least two atoms".into()));
    }
    let pot = Potential::new(cfg.kind);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let mut pts: Vec<[f64; 3]> = Vec::with_capacity(cfg.n_atoms);
        while pts.len() < cfg.n_atoms {
            let mut placed = false;
            for _ in 0..cfg.max_attempts {
                let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..cfg.box_size));
                if pts.iter().all(|q| norm(sub(c, *q)) >= cfg.min_separation) {
                    pts.push(c);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::RejectionFailure(cfg.max_attempts));
            }
        }
        let positions = from_rows(&pts);
        let (energy, forces) = pot.energy_and_forces(&positions);
        let err = pot.force_check(&positions, 1e-5);
        let scale = forces.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if err > GENERATION_FORCE_TOLERANCE * scale {
            return Err(Error::Config(format!("generated forces disagree with finite differences by {err:e}")));
        }
        out.push(Sample { cloud: PointCloud::new(positions, vec![0; cfg.n_atoms])?, energy, forces });
    }
    Ok(out)
}

pub fn write_jsonl<W: Write>(samples: &[Sample], mut w: W) -> Result<()> {
    for s in samples {
        serde_json::to_writer(&mut w, &s.to_record())?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<Sample>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(Sample::from_record(&serde_json::from_str(&line)?)?);
    }
    Ok(out)
}

/// Hex SHA-256 of the JSONL serialization.
pub fn dataset_hash(samples: &[Sample]) -> String {
    let mut buf = Vec::new();
    write_jsonl(samples, &mut buf).expect("in-memory write");
    let digest = Sha256::digest(&buf);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
