use std::collections::BTreeMap;

use ndarray::Array2;
use num_complex::Complex64;

use crate::autodiff::{radial_basis_with_derivative, Tape, Var};
use crate::error::{Error, Result};
use crate::irrep::{Activation, IrrepVector};
use crate::spin::Spin;
use crate::su2::{spherical_harmonics, Rotation};

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Array2<f64>,
    species: Vec<usize>,
}

impl PointCloud {
    pub fn new(positions: Array2<f64>, species: Vec<usize>) -> Result<PointCloud> {
        if positions.nrows() == 0 || positions.ncols() != 3 {
            return Err(Error::ShapeMismatch(format!("positions must be N × 3 with N ≥ 1, got {:?}", positions.dim())));
        }
        if species.len() != positions.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} species for {} atoms",
                species.len(),
                positions.nrows()
            )));
        }
        Ok(PointCloud { positions: positions.as_standard_layout().to_owned(), species })
    }

    pub fn len(&self) -> usize {
        self.species.len()
    }

    pub fn is_empty(&self) -> bool {
        self.species.is_empty()
    }

    pub fn positions(&self) -> &Array2<f64> {
        &self.positions
    }

    pub fn species(&self) -> &[usize] {
        &self.species
    }

    pub fn position(&self, i: usize) -> [f64; 3] {
        [self.positions[[i, 0]], self.positions[[i, 1]], self.positions[[i, 2]]]
    }

    /// `x_ij = positions[j] - positions[i]`.
    pub fn displacement(&self, i: usize, j: usize) -> [f64; 3] {
        let (a, b) = (self.position(i), self.position(j));
        [b[0] - a[0], b[1] - a[1], b[2] - a[2]]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let d = self.displacement(i, j);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }

    pub fn with_positions(&self, positions: Array2<f64>) -> Result<PointCloud> {
        PointCloud::new(positions, self.species.clone())
    }

    pub fn rotated(&self, g: &Rotation) -> PointCloud {
        let mut p = self.positions.clone();
        for i in 0..self.len() {
            let r = g.apply(self.position(i));
            for k in 0..3 {
                p[[i, k]] = r[k];
            }
        }
        PointCloud { positions: p, species: self.species.clone() }
    }

    pub fn translated(&self, t: [f64; 3]) -> PointCloud {
        let mut p = self.positions.clone();
        for mut row in p.rows_mut() {
            for k in 0..3 {
                row[k] += t[k];
            }
        }
        PointCloud { positions: p, species: self.species.clone() }
    }

    /// Atom `n` of the result is atom `perm[n]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> PointCloud {
        let mut p = Array2::zeros(self.positions.dim());
        for (n, &o) in perm.iter().enumerate() {
            p.row_mut(n).assign(&self.positions.row(o));
        }
        PointCloud { positions: p, species: perm.iter().map(|&o| self.species[o]).collect() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Neighborhood {
    pub cutoff: f64,
    lists: Vec<Vec<usize>>,
}

impl Neighborhood {
    pub fn neighbors(&self, o: usize) -> &[usize] {
        &self.lists[o]
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.lists.iter().enumerate().flat_map(|(o, l)| l.iter().map(move |&i| (o, i)))
    }
}

/// All pairs within `cutoff`, brute force; lists sorted ascending.
pub fn build_neighborhood(pc: &PointCloud, cutoff: f64) -> Neighborhood {
    assert!(cutoff > 0.0, "cutoff must be positive");
    let n = pc.len();
    let mut lists = vec![Vec::new(); n];
    for o in 0..n {
        for i in 0..n {
            if i != o && pc.distance(o, i) <= cutoff {
                lists[o].push(i);
            }
        }
    }
    Neighborhood { cutoff, lists }
}

/// Unprojected edge features `Φ[m, c] = Y^j_m(x̂) · RBF_c(|x|)` for every
/// neighbor pair, spins `0..=j_max`, `radial_channels` channels.
pub fn edge_features(
    pc: &PointCloud,
    nbr: &Neighborhood,
    j_max: Spin,
    radial_channels: usize,
) -> Result<BTreeMap<(usize, usize), Activation>> {
    let mut out = BTreeMap::new();
    for (o, i) in nbr.edges() {
        let x = pc.displacement(o, i);
        let ys = spherical_harmonics(x, j_max)?;
        let r = pc.distance(o, i);
        let (rbf, _) = radial_basis_with_derivative(r, radial_channels, nbr.cutoff);
        let mut a = Activation::new(radial_channels);
        for y in ys {
            let col = y.data().column(0).to_owned();
            let data = Array2::from_shape_fn((y.spin().dim(), radial_channels), |(m, c)| col[m] * rbf[c]);
            a.insert(IrrepVector::new(y.spin(), data)?)?;
        }
        out.insert((o, i), a);
    }
    Ok(out)
}

/// Per-edge tape nodes shared by all layers of one forward pass.
#[derive(Clone, Debug)]
pub struct EdgeNodes {
    /// `Y^l`, complex `(2l+1) × 1`, for `l = 0..=j_max`.
    pub harmonics: Vec<Var>,
    /// Radial basis times envelope, real `1 × radial_channels`.
    pub radial: Var,
    /// Cutoff envelope, real `1 × 1`.
    pub envelope: Var,
}

#[derive(Clone, Debug)]
pub struct TapeGeometry {
    pub neighborhood: Neighborhood,
    pub j_max: Spin,
    pub edges: BTreeMap<(usize, usize), EdgeNodes>,
}

impl TapeGeometry {
    pub fn edge(&self, o: usize, i: usize) -> &EdgeNodes {
        &self.edges[&(o, i)]
    }
}

/// Records displacements, harmonics and radial features for each edge.
pub fn record_geometry(
    tape: &mut Tape,
    positions: Var,
    nbr: &Neighborhood,
    j_max: Spin,
    radial_channels: usize,
) -> Result<TapeGeometry> {
    if !j_max.is_integer() {
        return Err(Error::InvalidSpin(format!("j_max must be an integer spin, got {j_max}")));
    }
    let mut edges = BTreeMap::new();
    for (o, i) in nbr.edges() {
        let d = tape.displacement(positions, o, i)?;
        let harmonics = (0..=j_max.twice() / 2).map(|l| tape.spherical_harmonic(d, l)).collect::<Result<_>>()?;
        let radial = tape.radial_basis(d, radial_channels, nbr.cutoff)?;
        let envelope = tape.envelope(d, nbr.cutoff)?;
        edges.insert((o, i), EdgeNodes { harmonics, radial, envelope });
    }
    Ok(TapeGeometry { neighborhood: nbr.clone(), j_max, edges })
}

/// Zero complex block used for empty sums.
pub(crate) fn zeros(tape: &mut Tape, spin: Spin, channels: usize) -> Var {
    tape.leaf_complex(Array2::<Complex64>::zeros((spin.dim(), channels)))
}
