use std::collections::BTreeMap;

use rand::Rng;

use super::geometry::{record_geometry, zeros, Neighborhood, PointCloud, TapeGeometry};
use super::ops::{cg_nonlinearity_on_tape, gate_on_tape, nonlinearity_terms, GateShape};
use super::params::{Bound, ParamSet};
use crate::autodiff::{Tape, Var};
use crate::block::{concatenated_on_tape, FusionBlockConfig, MixingMatrix, TapeActivation, TapeSlot};
use crate::diagram::FusionDiagram;
use crate::error::{Error, Result};
use crate::irrep::Activation;
use crate::spin::{admissible, Spin};

/// Channel widths feeding one output spin.
#[derive(Clone, Debug, PartialEq)]
pub struct CofdPlan {
    pub one_body: bool,
    pub self_pairs: Vec<(Spin, Spin)>,
    pub edge_pairs: Vec<(Spin, Spin)>,
    pub fusion: Option<FusionBlockConfig>,
}

impl CofdPlan {
    /// Width of the concatenated one- and two-body terms.
    pub fn base_channels(&self, channels: usize) -> usize {
        channels * (usize::from(self.one_body) + self.self_pairs.len() + self.edge_pairs.len())
    }
}

/// One CoFD layer: the baseline one-body, self-product and gated edge
/// terms plus a three-leaf fusion block over (atom i, atom j, edge).
#[derive(Clone, Debug)]
pub struct CofdLayer {
    pub in_spins: Vec<Spin>,
    pub j_max: Spin,
    pub channels: usize,
    pub radial: usize,
    pub gate: GateShape,
    pub plans: BTreeMap<Spin, CofdPlan>,
    pub params: ParamSet,
}

/// All `((a ⊗ b) → k) ⊗ c → root` left combs for atom spins `a, b`, edge
/// spin `c ≤ j_max` and `k ≤ j_max`.
pub fn cofd_fusion_diagrams(in_spins: &[Spin], j_max: Spin, root: Spin) -> Vec<FusionDiagram> {
    let mut out = Vec::new();
    let edge: Vec<Spin> = (0..=j_max.twice() / 2).map(Spin::integer).collect();
    for &a in in_spins {
        for &b in in_spins {
            for &c in &edge {
                for tk in 0..=j_max.twice() {
                    let k = Spin::from_twice(tk);
                    if admissible(a, b, k) && admissible(k, c, root) {
                        out.push(FusionDiagram::left_comb(&[a, b, c], &[k], root).expect("admissible"));
                    }
                }
            }
        }
    }
    out
}

impl CofdLayer {
    pub fn new<R: Rng + ?Sized>(
        in_spins: &[Spin],
        channels: usize,
        j_max: Spin,
        radial: usize,
        gate_hidden: usize,
        with_fusion: bool,
        rng: &mut R,
    ) -> Result<CofdLayer> {
        if !j_max.is_integer() || in_spins.iter().any(|s| !s.is_integer()) {
            return Err(Error::InvalidSpin("CoFD layers use integer spins".into()));
        }
        if !in_spins.contains(&Spin::ZERO) {
            return Err(Error::Config("CoFD input needs a spin-0 part for the gate".into()));
        }
        let mut in_spins = in_spins.to_vec();
        in_spins.sort();
        in_spins.dedup();
        let harmonics: Vec<Spin> = (0..=j_max.twice() / 2).map(Spin::integer).collect();
        let self_terms = nonlinearity_terms(&in_spins, &in_spins, j_max);
        let edge_terms = nonlinearity_terms(&harmonics, &in_spins, j_max);

        let gate = GateShape { channels, radial, hidden: gate_hidden };
        let mut params = ParamSet::new();
        gate.init(&mut params, "gate", rng);
        if with_fusion {
            for &l in &harmonics {
                params.push_uniform(format!("edge.l{l}"), (radial, channels), None, rng);
            }
        }

        let mut plans = BTreeMap::new();
        for &l in &harmonics {
            let fusion = if with_fusion {
                let ds = cofd_fusion_diagrams(&in_spins, j_max, l);
                if ds.is_empty() {
                    None
                } else {
                    let rows = ds.len() * channels;
                    let mixing = MixingMatrix::random(rows, channels, rng);
                    Some(FusionBlockConfig::new(ds, channels, mixing)?)
                }
            } else {
                None
            };
            let plan = CofdPlan {
                one_body: in_spins.contains(&l),
                self_pairs: self_terms.get(&l).cloned().unwrap_or_default(),
                edge_pairs: edge_terms.get(&l).cloned().unwrap_or_default(),
                fusion,
            };
            let base = plan.base_channels(channels);
            if base == 0 && plan.fusion.is_none() {
                continue;
            }
            // W^vertex split into the rows acting on the baseline terms and the
            // rows acting on the fusion term; fan-in counts both.
            let fan_in = base + if plan.fusion.is_some() { channels } else { 0 };
            if base > 0 {
                params.push_uniform(format!("vertex.l{l}"), (base, channels), Some(fan_in), rng);
            }
            if let Some(cfg) = &plan.fusion {
                params.push(format!("fusion.l{l}"), cfg.mixing().weights.clone());
                params.push_uniform(format!("vertex_fusion.l{l}"), (channels, channels), Some(fan_in), rng);
            }
            plans.insert(l, plan);
        }
        Ok(CofdLayer { in_spins, j_max, channels, radial, gate, plans, params })
    }

    pub fn out_spins(&self) -> Vec<Spin> {
        self.plans.keys().copied().collect()
    }

    pub fn has_fusion(&self) -> bool {
        self.plans.values().any(|p| p.fusion.is_some())
    }

    /// Output activations per atom, recorded on the tape.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &Bound,
        geom: &TapeGeometry,
        inputs: &[TapeActivation],
        include_fusion: bool,
    ) -> Result<Vec<TapeActivation>> {
        let nbr = &geom.neighborhood;
        let tau = self.channels;
        for a in inputs {
            if a.channels != tau {
                return Err(Error::ChannelMismatch { expected: tau, found: a.channels });
            }
            if a.parts.keys().copied().collect::<Vec<_>>() != self.in_spins {
                return Err(Error::ShapeMismatch("input spins differ from the layer's".into()));
            }
        }
        let use_fusion = include_fusion && self.has_fusion();
        let mut projected: BTreeMap<(usize, usize), TapeActivation> = BTreeMap::new();
        if use_fusion {
            for (&(o, i), e) in &geom.edges {
                let mut parts = BTreeMap::new();
                for (l, &y) in e.harmonics.iter().enumerate() {
                    let spin = Spin::integer(l as u32);
                    let w = tape.matmul(e.radial, p.var(&format!("edge.l{spin}")))?;
                    parts.insert(spin, tape.mix(y, w)?);
                }
                projected.insert((o, i), TapeActivation { channels: tau, parts });
            }
        }

        let mut outputs = Vec::with_capacity(inputs.len());
        for (i, fi) in inputs.iter().enumerate() {
            let self_prod = cg_nonlinearity_on_tape(tape, fi, fi, self.j_max)?;

            // Σ_j (Y(x_ij) ⊗ F_j) g_ij, with the gate applied to F_j first.
            let mut edge_sum: BTreeMap<Spin, Vec<Var>> = BTreeMap::new();
            for &j in nbr.neighbors(i) {
                let e = geom.edge(i, j);
                let fj = &inputs[j];
                let g = gate_on_tape(tape, p, "gate", fi.parts[&Spin::ZERO], fj.parts[&Spin::ZERO], e)?;
                let mut gated = TapeActivation { channels: tau, parts: BTreeMap::new() };
                for (&s, &v) in &fj.parts {
                    gated.parts.insert(s, tape.scale_channels(v, g)?);
                }
                let y = TapeActivation {
                    channels: 1,
                    parts: e.harmonics.iter().enumerate().map(|(l, &v)| (Spin::integer(l as u32), v)).collect(),
                };
                for (s, v) in cg_nonlinearity_on_tape(tape, &y, &gated, self.j_max)? {
                    edge_sum.entry(s).or_default().push(v);
                }
            }

            let mut parts = BTreeMap::new();
            for (&l, plan) in &self.plans {
                let mut out_terms = Vec::new();
                let base = plan.base_channels(tau);
                if base > 0 {
                    let mut blocks = Vec::new();
                    if plan.one_body {
                        blocks.push(fi.parts[&l]);
                    }
                    if !plan.self_pairs.is_empty() {
                        blocks.push(self_prod[&l]);
                    }
                    if !plan.edge_pairs.is_empty() {
                        blocks.push(match edge_sum.get(&l) {
                            Some(vs) => tape.sum(vs)?,
                            None => zeros(tape, l, plan.edge_pairs.len() * tau),
                        });
                    }
                    let cat = tape.concat_channels(&blocks)?;
                    out_terms.push(tape.mix(cat, p.var(&format!("vertex.l{l}")))?);
                }
                if let (true, Some(cfg)) = (use_fusion, &plan.fusion) {
                    let nb = nbr.neighbors(i);
                    let slots = [
                        TapeSlot::Single(fi),
                        TapeSlot::Multiset(nb.iter().map(|&j| &inputs[j]).collect()),
                        TapeSlot::Multiset(nb.iter().map(|&j| &projected[&(i, j)]).collect()),
                    ];
                    let cat = concatenated_on_tape(cfg, tape, &slots)?;
                    let fused = tape.mix(cat, p.var(&format!("fusion.l{l}")))?;
                    out_terms.push(tape.mix(fused, p.var(&format!("vertex_fusion.l{l}")))?);
                }
                let v = if out_terms.len() == 1 { out_terms[0] } else { tape.sum(&out_terms)? };
                parts.insert(l, v);
            }
            outputs.push(TapeActivation { channels: tau, parts });
        }
        Ok(outputs)
    }

    /// Sets every fusion-block mixing matrix to zero.
    pub fn zero_fusion_mixing(&mut self) {
        let names: Vec<String> =
            self.params.iter().map(|(n, _)| n.to_string()).filter(|n| n.starts_with("fusion.")).collect();
        for n in names {
            self.params.get_mut(&n).expect("listed").fill(0.0);
        }
    }
}

/// Plain evaluation of one CoFD layer on given activations and positions.
pub fn cofd_layer(
    layer: &CofdLayer,
    inputs: &[Activation],
    pc: &PointCloud,
    nbr: &Neighborhood,
    include_fusion: bool,
) -> Result<Vec<Activation>> {
    let mut tape = Tape::new();
    let bound = layer.params.bind(&mut tape);
    let positions = tape.leaf_real(pc.positions().clone());
    let geom = record_geometry(&mut tape, positions, nbr, layer.j_max, layer.radial)?;
    let acts: Vec<TapeActivation> = inputs.iter().map(|a| TapeActivation::leaf(&mut tape, a)).collect();
    let out = layer.forward(&mut tape, &bound, &geom, &acts, include_fusion)?;
    out.iter().map(|a| a.value(&tape)).collect()
}
