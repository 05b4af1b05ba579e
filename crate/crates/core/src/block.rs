//! Fusion blocks: a collection of diagrams applied to the same inputs,
//! aggregated over multisets, concatenated along channels and mixed.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::diagram::{DiagramJson, FusionDiagram, FusionTree};
use crate::error::{Error, Result};
use crate::irrep::{Activation, IrrepVector};
use crate::spin::Spin;
use crate::su2::{cg_tensor, haar_rotation_from, wigner_d};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationKind {
    Sum,
}

/// Real weights `τ̃ × τ_out` acting on the channel axis of complex data.
#[derive(Clone, Debug, PartialEq)]
pub struct MixingMatrix {
    pub weights: Array2<f64>,
}

impl MixingMatrix {
    /// Entries uniform in `[-s, s]`, `s = rows^{-1/2}`.
    pub fn random<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> MixingMatrix {
        let s = (rows as f64).powf(-0.5);
        MixingMatrix { weights: Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-s..=s)) }
    }

    pub fn identity(n: usize) -> MixingMatrix {
        MixingMatrix { weights: Array2::eye(n) }
    }

    pub fn rows(&self) -> usize {
        self.weights.nrows()
    }

    pub fn cols(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusionBlockConfig {
    diagrams: Vec<FusionDiagram>,
    aggregation: AggregationKind,
    channels: usize,
    mixing: MixingMatrix,
    seed: Option<u64>,
    aggregated_slots: Vec<usize>,
}

impl FusionBlockConfig {
    pub fn new(diagrams: Vec<FusionDiagram>, channels: usize, mixing: MixingMatrix) -> Result<FusionBlockConfig> {
        let first = diagrams.first().ok_or(Error::EmptyDiagramSet)?;
        let (arity, root) = (first.arity(), first.root());
        for d in &diagrams {
            if let Some(v) = d.validate().first() {
                return Err(Error::InvalidDiagram(v.to_string()));
            }
            if d.arity() != arity {
                return Err(Error::ShapeMismatch(format!("diagram arities {} and {}", arity, d.arity())));
            }
            if d.root() != root {
                return Err(Error::SpinMismatch { expected: root, found: d.root() });
            }
        }
        if channels == 0 {
            return Err(Error::Config("channel count must be positive".into()));
        }
        let rows = diagrams.len() * channels;
        if mixing.rows() != rows {
            return Err(Error::ChannelMismatch { expected: rows, found: mixing.rows() });
        }
        Ok(FusionBlockConfig {
            diagrams,
            aggregation: AggregationKind::Sum,
            channels,
            mixing,
            seed: None,
            aggregated_slots: Vec::new(),
        })
    }

    pub fn with_random_mixing(
        diagrams: Vec<FusionDiagram>,
        channels: usize,
        out_channels: usize,
        seed: u64,
    ) -> Result<FusionBlockConfig> {
        let rows = diagrams.len() * channels;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cfg = FusionBlockConfig::new(diagrams, channels, MixingMatrix::random(rows, out_channels, &mut rng))?;
        cfg.seed = Some(seed);
        Ok(cfg)
    }

    pub fn with_identity_mixing(diagrams: Vec<FusionDiagram>, channels: usize) -> Result<FusionBlockConfig> {
        let rows = diagrams.len() * channels;
        FusionBlockConfig::new(diagrams, channels, MixingMatrix::identity(rows))
    }

    /// Slots that receive multisets in `block check`.
    pub fn with_aggregated_slots(mut self, slots: Vec<usize>) -> Result<FusionBlockConfig> {
        if let Some(&s) = slots.iter().find(|&&s| s >= self.arity()) {
            return Err(Error::Config(format!("aggregated slot {s} out of range")));
        }
        self.aggregated_slots = slots;
        Ok(self)
    }

    pub fn diagrams(&self) -> &[FusionDiagram] {
        &self.diagrams
    }

    pub fn aggregation(&self) -> AggregationKind {
        self.aggregation
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn set_mixing(&mut self, mixing: MixingMatrix) -> Result<()> {
        if mixing.rows() != self.mixing.rows() {
            return Err(Error::ChannelMismatch { expected: self.mixing.rows(), found: mixing.rows() });
        }
        self.mixing = mixing;
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        self.mixing.cols()
    }

    pub fn arity(&self) -> usize {
        self.diagrams[0].arity()
    }

    pub fn root(&self) -> Spin {
        self.diagrams[0].root()
    }

    pub fn aggregated_slots(&self) -> &[usize] {
        &self.aggregated_slots
    }

    /// Spins each slot must provide, over all diagrams.
    pub fn slot_spins(&self) -> Vec<BTreeSet<Spin>> {
        let mut out = vec![BTreeSet::new(); self.arity()];
        for d in &self.diagrams {
            for l in d.leaves() {
                out[l.slot].insert(l.spin);
            }
        }
        out
    }
}

/// Channel count after concatenation and before mixing.
pub fn output_channel_count(cfg: &FusionBlockConfig) -> usize {
    cfg.diagrams.len() * cfg.channels
}

/// Input for one leaf slot.
#[derive(Clone, Debug)]
pub enum SlotInput<'a> {
    Single(&'a Activation),
    Multiset(Vec<&'a Activation>),
}

/// An activation whose parts live on a tape.
#[derive(Clone, Debug, Default)]
pub struct TapeActivation {
    pub channels: usize,
    pub parts: BTreeMap<Spin, Var>,
}

impl TapeActivation {
    pub fn leaf(tape: &mut Tape, a: &Activation) -> TapeActivation {
        let parts = a.parts().map(|p| (p.spin(), tape.leaf_complex(p.data().clone()))).collect();
        TapeActivation { channels: a.channels(), parts }
    }

    pub fn get(&self, spin: Spin) -> Option<Var> {
        self.parts.get(&spin).copied()
    }

    /// Reads the node values back into a plain activation.
    pub fn value(&self, tape: &Tape) -> Result<Activation> {
        Activation::from_parts(
            self.channels,
            self.parts.iter().map(|(&s, &v)| IrrepVector::new(s, tape.complex(v).clone()).expect("tape shape")),
        )
    }
}

#[derive(Clone, Debug)]
pub enum TapeSlot<'a> {
    Single(&'a TapeActivation),
    Multiset(Vec<&'a TapeActivation>),
}

/// The diagram's contraction recorded on a tape; `inputs[slot]` feeds the
/// leaf with that slot.
pub fn contract_on_tape(d: &FusionDiagram, tape: &mut Tape, inputs: &[Var]) -> Result<Var> {
    fn eval(d: &FusionDiagram, node: &FusionTree, tape: &mut Tape, inputs: &[Var], root: bool) -> Result<(Spin, Var)> {
        match node {
            FusionTree::Leaf(slot) => Ok((d.leaf_spin(*slot).expect("validated"), inputs[*slot])),
            FusionTree::Node { left, right, spin } => {
                let (ls, lv) = eval(d, left, tape, inputs, false)?;
                let (rs, rv) = eval(d, right, tape, inputs, false)?;
                let own = if root { d.root() } else { spin.expect("validated") };
                let cg = cg_tensor(ls, rs, own)?;
                Ok((own, tape.cg_product(&cg, lv, rv)?))
            }
        }
    }
    Ok(eval(d, d.tree(), tape, inputs, true)?.1)
}

/// Concatenated, aggregated diagram outputs `(2J+1) × |Q|τ` before mixing.
pub fn concatenated_on_tape(cfg: &FusionBlockConfig, tape: &mut Tape, inputs: &[TapeSlot]) -> Result<Var> {
    if inputs.len() != cfg.arity() {
        return Err(Error::ShapeMismatch(format!("block has {} slots, got {}", cfg.arity(), inputs.len())));
    }
    // Aggregated slots are zipped: term k draws element k of every multiset.
    let mut terms: Option<usize> = None;
    for slot in inputs {
        let acts: Vec<&TapeActivation> = match slot {
            TapeSlot::Single(a) => vec![a],
            TapeSlot::Multiset(v) => {
                match terms {
                    Some(n) if n != v.len() => {
                        return Err(Error::ShapeMismatch(format!("multiset sizes {n} and {}", v.len())))
                    }
                    _ => terms = Some(v.len()),
                }
                v.clone()
            }
        };
        for a in acts {
            if a.channels != cfg.channels {
                return Err(Error::ChannelMismatch { expected: cfg.channels, found: a.channels });
            }
        }
    }
    let terms = terms.unwrap_or(1);
    let pick = |slot: &TapeSlot, k: usize, spin: Spin| -> Result<Var> {
        let a = match slot {
            TapeSlot::Single(a) => *a,
            TapeSlot::Multiset(v) => v[k],
        };
        a.get(spin).ok_or_else(|| {
            let found = a.parts.keys().next().copied().unwrap_or(spin);
            Error::SpinMismatch { expected: spin, found }
        })
    };

    let mut per_diagram = Vec::with_capacity(cfg.diagrams.len());
    for d in &cfg.diagrams {
        let mut outs = Vec::with_capacity(terms);
        for k in 0..terms {
            let leaves = (0..d.arity())
                .map(|s| pick(&inputs[s], k, d.leaf_spin(s).expect("validated")))
                .collect::<Result<Vec<_>>>()?;
            outs.push(contract_on_tape(d, tape, &leaves)?);
        }
        per_diagram.push(if outs.is_empty() {
            tape.leaf_complex(Array2::zeros((cfg.root().dim(), cfg.channels)))
        } else {
            tape.sum(&outs)?
        });
    }
    tape.concat_channels(&per_diagram)
}

/// Full block on a tape with the mixing weights supplied as a node.
pub fn apply_on_tape(cfg: &FusionBlockConfig, tape: &mut Tape, inputs: &[TapeSlot], mixing: Var) -> Result<Var> {
    let cat = concatenated_on_tape(cfg, tape, inputs)?;
    tape.mix(cat, mixing)
}

fn with_leaves<T>(
    tape: &mut Tape,
    inputs: &[SlotInput],
    f: impl FnOnce(&mut Tape, &[TapeSlot]) -> Result<T>,
) -> Result<T> {
    let lifted: Vec<Vec<TapeActivation>> = inputs
        .iter()
        .map(|s| match s {
            SlotInput::Single(a) => vec![TapeActivation::leaf(tape, a)],
            SlotInput::Multiset(v) => v.iter().map(|a| TapeActivation::leaf(tape, a)).collect(),
        })
        .collect();
    let slots: Vec<TapeSlot> = inputs
        .iter()
        .zip(&lifted)
        .map(|(s, l)| match s {
            SlotInput::Single(_) => TapeSlot::Single(&l[0]),
            SlotInput::Multiset(_) => TapeSlot::Multiset(l.iter().collect()),
        })
        .collect();
    f(tape, &slots)
}

/// Concatenated diagram outputs before mixing.
pub fn concatenated(cfg: &FusionBlockConfig, inputs: &[SlotInput]) -> Result<IrrepVector> {
    let mut tape = Tape::new();
    let out = with_leaves(&mut tape, inputs, |t, s| concatenated_on_tape(cfg, t, s))?;
    IrrepVector::new(cfg.root(), tape.complex(out).clone())
}

/// Aggregate per diagram, concatenate, mix.
pub fn apply(cfg: &FusionBlockConfig, inputs: &[SlotInput]) -> Result<IrrepVector> {
    let mut tape = Tape::new();
    let w = tape.leaf_real(cfg.mixing.weights.clone());
    let out = with_leaves(&mut tape, inputs, |t, s| apply_on_tape(cfg, t, s, w))?;
    IrrepVector::new(cfg.root(), tape.complex(out).clone())
}

// ---------------------------------------------------------------------------
// Property checks

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockCheckReport {
    pub trials: usize,
    pub max_equivariance_residual: f64,
    pub max_permutation_residual: f64,
}

fn scaled_residual(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    let scale = a.iter().chain(b.iter()).map(|z| z.norm()).fold(1.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
}

fn as_inputs<'a>(cfg: &FusionBlockConfig, data: &'a [Vec<Activation>], order: &[usize]) -> Vec<SlotInput<'a>> {
    data.iter()
        .enumerate()
        .map(|(s, v)| {
            if cfg.aggregated_slots.contains(&s) {
                SlotInput::Multiset(order.iter().map(|&k| &v[k]).collect())
            } else {
                SlotInput::Single(&v[0])
            }
        })
        .collect()
}

/// Random-input equivariance and permutation checks. Aggregated slots get
/// multisets of `multiset_size` activations; residuals are max-entry
/// differences relative to `max(1, largest entry)`.
pub fn check_block(cfg: &FusionBlockConfig, trials: usize, multiset_size: usize, seed: u64) -> Result<BlockCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spins: Vec<Vec<Spin>> = cfg.slot_spins().into_iter().map(|s| s.into_iter().collect()).collect();
    let mut report = BlockCheckReport { trials, max_equivariance_residual: 0.0, max_permutation_residual: 0.0 };
    for _ in 0..trials {
        let data: Vec<Vec<Activation>> = (0..cfg.arity())
            .map(|s| {
                let n = if cfg.aggregated_slots.contains(&s) { multiset_size } else { 1 };
                (0..n).map(|_| Activation::random(&spins[s], cfg.channels, &mut rng)).collect()
            })
            .collect();
        let canonical: Vec<usize> = (0..multiset_size).collect();
        let out = apply(cfg, &as_inputs(cfg, &data, &canonical))?;

        let g = haar_rotation_from(&mut rng);
        let rotated: Vec<Vec<Activation>> = data.iter().map(|v| v.iter().map(|a| a.rotated(&g)).collect()).collect();
        let out_rot = apply(cfg, &as_inputs(cfg, &rotated, &canonical))?;
        let expect = wigner_d(cfg.root(), &g).apply(out.data());
        report.max_equivariance_residual = report.max_equivariance_residual.max(scaled_residual(&expect, out_rot.data()));

        if !cfg.aggregated_slots.is_empty() {
            let mut perm = canonical.clone();
            perm.shuffle(&mut rng);
            let out_perm = apply(cfg, &as_inputs(cfg, &data, &perm))?;
            report.max_permutation_residual =
                report.max_permutation_residual.max(scaled_residual(out.data(), out_perm.data()));
        }
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// JSON

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockJson {
    pub diagrams: Vec<DiagramJson>,
    pub aggregation: AggregationKind,
    pub channels: usize,
    pub out_channels: usize,
    pub seed: u64,
    /// Row-major `(|Q|·channels) × out_channels`; drawn from `seed` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixing: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aggregated_slots: Vec<usize>,
}

impl BlockJson {
    pub fn to_config(&self) -> Result<FusionBlockConfig> {
        let diagrams = self.diagrams.iter().map(DiagramJson::to_diagram).collect::<Result<Vec<_>>>()?;
        let mut cfg = match &self.mixing {
            None => FusionBlockConfig::with_random_mixing(diagrams, self.channels, self.out_channels, self.seed)?,
            Some(rows) => {
                let r = rows.len();
                if rows.iter().any(|row| row.len() != self.out_channels) {
                    return Err(Error::Config(format!("mixing rows must have {} entries", self.out_channels)));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                let w = Array2::from_shape_vec((r, self.out_channels), flat).expect("checked shape");
                let mut cfg = FusionBlockConfig::new(diagrams, self.channels, MixingMatrix { weights: w })?;
                cfg.seed = Some(self.seed);
                cfg
            }
        };
        cfg = cfg.with_aggregated_slots(self.aggregated_slots.clone())?;
        Ok(cfg)
    }

    pub fn from_config(cfg: &FusionBlockConfig) -> BlockJson {
        BlockJson {
            diagrams: cfg.diagrams.iter().map(DiagramJson::from).collect(),
            aggregation: cfg.aggregation,
            channels: cfg.channels,
            out_channels: cfg.out_channels(),
            seed: cfg.seed.unwrap_or(0),
            mixing: Some(cfg.mixing.weights.rows().into_iter().map(|r| r.to_vec()).collect()),
            aggregated_slots: cfg.aggregated_slots.clone(),
        }
    }
}

impl FusionBlockConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&BlockJson::from_config(self)).expect("block serializes")
    }

    pub fn from_json(s: &str) -> Result<FusionBlockConfig> {
        serde_json::from_str::<BlockJson>(s)?.to_config()
    }
}
