use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;

use super::geometry::EdgeNodes;
use super::params::{Bound, ParamSet};
use crate::autodiff::{Tape, Var};
use crate::block::TapeActivation;
use crate::error::{Error, Result};
use crate::irrep::{Activation, IrrepVector};
use crate::spin::{admissible, Spin};
use crate::su2::cg_tensor;

/// For each output spin `jc ≤ j_max`, the `(ja, jb)` pairs feeding it in
/// lexicographic order.
pub fn nonlinearity_terms(left: &[Spin], right: &[Spin], j_max: Spin) -> BTreeMap<Spin, Vec<(Spin, Spin)>> {
    let mut out: BTreeMap<Spin, Vec<(Spin, Spin)>> = BTreeMap::new();
    let mut left = left.to_vec();
    let mut right = right.to_vec();
    left.sort();
    right.sort();
    for &ja in &left {
        for &jb in &right {
            for tc in 0..=j_max.twice() {
                let jc = Spin::from_twice(tc);
                if admissible(ja, jb, jc) {
                    out.entry(jc).or_default().push((ja, jb));
                }
            }
        }
    }
    out
}

fn broadcast(a: usize, b: usize) -> Result<usize> {
    match (a, b) {
        _ if a == b => Ok(a),
        (1, n) | (n, 1) => Ok(n),
        _ => Err(Error::ChannelMismatch { expected: a, found: b }),
    }
}

/// Channel-wise CG products of every spin pair, concatenated per output
/// spin. A unit-channel operand broadcasts.
pub fn cg_nonlinearity_on_tape(
    tape: &mut Tape,
    f: &TapeActivation,
    g: &TapeActivation,
    j_max: Spin,
) -> Result<BTreeMap<Spin, Var>> {
    broadcast(f.channels, g.channels)?;
    let fs: Vec<Spin> = f.parts.keys().copied().collect();
    let gs: Vec<Spin> = g.parts.keys().copied().collect();
    let mut out = BTreeMap::new();
    for (jc, pairs) in nonlinearity_terms(&fs, &gs, j_max) {
        let mut blocks = Vec::with_capacity(pairs.len());
        for (ja, jb) in pairs {
            let cg = cg_tensor(ja, jb, jc)?;
            blocks.push(tape.cg_product(&cg, f.parts[&ja], g.parts[&jb])?);
        }
        let v = if blocks.len() == 1 { blocks[0] } else { tape.concat_channels(&blocks)? };
        out.insert(jc, v);
    }
    Ok(out)
}

pub fn cg_nonlinearity(f: &Activation, g: &Activation, j_max: Spin) -> Result<BTreeMap<Spin, IrrepVector>> {
    let mut tape = Tape::new();
    let tf = TapeActivation::leaf(&mut tape, f);
    let tg = TapeActivation::leaf(&mut tape, g);
    let out = cg_nonlinearity_on_tape(&mut tape, &tf, &tg, j_max)?;
    out.into_iter().map(|(s, v)| Ok((s, IrrepVector::new(s, tape.complex(v).clone())?))).collect()
}

/// Shapes of the gate perceptron.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateShape {
    pub channels: usize,
    pub radial: usize,
    pub hidden: usize,
}

impl GateShape {
    pub fn inputs(&self) -> usize {
        4 * self.channels + self.radial
    }

    pub fn init<R: Rng + ?Sized>(&self, params: &mut ParamSet, prefix: &str, rng: &mut R) {
        params.push_uniform(format!("{prefix}.w1"), (self.inputs(), self.hidden), None, rng);
        params.push(format!("{prefix}.b1"), Array2::zeros((1, self.hidden)));
        params.push_uniform(format!("{prefix}.w2"), (self.hidden, self.channels), None, rng);
        params.push(format!("{prefix}.b2"), Array2::zeros((1, self.channels)));
    }
}

/// `g_ij = fc(r_ij) · (tanh(x W1 + b1) W2 + b2)` on the invariant row
/// `x = [Re, Im of F_i⁰, Re, Im of F_j⁰, RBF(r_ij)]`; real `1 × τ`.
pub fn gate_on_tape(tape: &mut Tape, p: &Bound, prefix: &str, fi0: Var, fj0: Var, edge: &EdgeNodes) -> Result<Var> {
    let a = tape.split_complex(fi0)?;
    let b = tape.split_complex(fj0)?;
    let x = tape.concat_channels(&[a, b, edge.radial])?;
    let h = tape.matmul(x, p.var(&format!("{prefix}.w1")))?;
    let h = tape.add_bias(h, p.var(&format!("{prefix}.b1")))?;
    let h = tape.tanh(h)?;
    let o = tape.matmul(h, p.var(&format!("{prefix}.w2")))?;
    let o = tape.add_bias(o, p.var(&format!("{prefix}.b2")))?;
    tape.mul_scalar(o, edge.envelope)
}

/// Plain evaluation of the gate for one edge.
pub fn invariant_gate(
    params: &ParamSet,
    prefix: &str,
    fi: &Activation,
    fj: &Activation,
    radial: &[f64],
    envelope: f64,
) -> Result<Vec<f64>> {
    let zero = Spin::ZERO;
    let (pi, pj) = match (fi.get(zero), fj.get(zero)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::SpinMismatch { expected: zero, found: fi.spins().first().copied().unwrap_or(zero) }),
    };
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let a = tape.leaf_complex(pi.data().clone());
    let b = tape.leaf_complex(pj.data().clone());
    let radial = tape.leaf_real(Array2::from_shape_vec((1, radial.len()), radial.to_vec()).expect("row"));
    let envelope = tape.leaf_real(Array2::from_elem((1, 1), envelope));
    let edge = EdgeNodes { harmonics: Vec::new(), radial, envelope };
    let g = gate_on_tape(&mut tape, &bound, prefix, a, b, &edge)?;
    Ok(tape.real(g).iter().copied().collect())
}
