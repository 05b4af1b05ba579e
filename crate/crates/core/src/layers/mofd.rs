use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::geometry::{record_geometry, Neighborhood, PointCloud, TapeGeometry};
use super::params::{Bound, ParamSet};
use crate::autodiff::{Tape, Var};
use crate::block::{concatenated_on_tape, output_channel_count, FusionBlockConfig, TapeActivation, TapeSlot};
use crate::diagram::FusionDiagram;
use crate::error::{Error, Result};
use crate::irrep::Activation;
use crate::spin::{admissible, Spin};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    Sparse,
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSchedule {
    pub mode: ScheduleMode,
    pub internal_spins: Vec<Spin>,
    /// Ordered tuples of internal spins; only used in dense mode.
    pub dense_tuples: Vec<Vec<Spin>>,
}

/// All permutations of `items` in lexicographic order of positions.
fn permutations<T: Clone>(items: &[T]) -> Vec<Vec<T>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut tail in permutations(&rest) {
            tail.insert(0, head.clone());
            out.push(tail);
        }
    }
    out
}

impl SpinSchedule {
    pub fn sparse(internal_spins: &[Spin]) -> Result<SpinSchedule> {
        if internal_spins.is_empty() {
            return Err(Error::EmptySchedule);
        }
        Ok(SpinSchedule { mode: ScheduleMode::Sparse, internal_spins: internal_spins.to_vec(), dense_tuples: Vec::new() })
    }

    /// Every single choice, then every permutation of the full sequence;
    /// repeated tuples are kept once.
    pub fn dense(internal_spins: &[Spin]) -> Result<SpinSchedule> {
        if internal_spins.is_empty() {
            return Err(Error::EmptySchedule);
        }
        let mut tuples: Vec<Vec<Spin>> = Vec::new();
        let singles = internal_spins.iter().map(|&k| vec![k]);
        for t in singles.chain(permutations(internal_spins)) {
            if !tuples.contains(&t) {
                tuples.push(t);
            }
        }
        SpinSchedule::dense_with(internal_spins, tuples)
    }

    pub fn dense_with(internal_spins: &[Spin], tuples: Vec<Vec<Spin>>) -> Result<SpinSchedule> {
        if internal_spins.is_empty() || tuples.is_empty() || tuples.iter().any(Vec::is_empty) {
            return Err(Error::EmptySchedule);
        }
        if let Some(k) = tuples.iter().flatten().find(|k| !internal_spins.contains(k)) {
            return Err(Error::Config(format!("tuple spin {k} is not in the internal-spin sequence")));
        }
        Ok(SpinSchedule { mode: ScheduleMode::Dense, internal_spins: internal_spins.to_vec(), dense_tuples: tuples })
    }
}

/// Left combs `((a ⊗ c) → k) ⊗ b → root` over slot 0 spins `a`, edge spins
/// `c` and neighbor spins `b`.
pub fn mofd_diagrams(center: &[Spin], edge: &[Spin], neighbor: &[Spin], k: Spin, root: Spin) -> Vec<FusionDiagram> {
    let mut out = Vec::new();
    for &a in center {
        for &c in edge {
            if !admissible(a, c, k) {
                continue;
            }
            for &b in neighbor {
                if admissible(k, b, root) {
                    out.push(FusionDiagram::left_comb(&[a, c, b], &[k], root).expect("admissible"));
                }
            }
        }
    }
    out
}

/// Per-output-spin fusion blocks for one internal spin, with identity
/// (non-trainable) mixing.
fn blocks_for(center: &[Spin], edge: &[Spin], neighbor: &[Spin], k: Spin, j_max: Spin, tau: usize) -> Result<BTreeMap<Spin, FusionBlockConfig>> {
    let mut out = BTreeMap::new();
    for tj in (0..=j_max.twice()).step_by(2) {
        let root = Spin::from_twice(tj);
        let ds = mofd_diagrams(center, edge, neighbor, k, root);
        if !ds.is_empty() {
            out.insert(root, FusionBlockConfig::with_identity_mixing(ds, tau)?);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub enum MofdPlan {
    /// `blocks[α][J]`; concatenated over α and mixed once per `J`.
    Sparse { blocks: Vec<BTreeMap<Spin, FusionBlockConfig>> },
    /// `tuples[t][q][J]`; each level mixes back to `τ` channels.
    Dense { tuples: Vec<Vec<BTreeMap<Spin, FusionBlockConfig>>> },
}

#[derive(Clone, Debug)]
pub struct MofdLayer {
    pub in_spins: Vec<Spin>,
    pub j_max: Spin,
    pub channels: usize,
    pub radial: usize,
    pub schedule: SpinSchedule,
    pub plan: MofdPlan,
    out_spins: Vec<Spin>,
    pub params: ParamSet,
}

impl MofdLayer {
    pub fn new<R: Rng + ?Sized>(
        in_spins: &[Spin],
        channels: usize,
        j_max: Spin,
        radial: usize,
        schedule: &SpinSchedule,
        rng: &mut R,
    ) -> Result<MofdLayer> {
        if !j_max.is_integer() || in_spins.iter().chain(&schedule.internal_spins).any(|s| !s.is_integer()) {
            return Err(Error::InvalidSpin("MoFD layers use integer spins".into()));
        }
        if schedule.internal_spins.is_empty() {
            return Err(Error::EmptySchedule);
        }
        let in_spins: Vec<Spin> = in_spins.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let edge: Vec<Spin> = (0..=j_max.twice() / 2).map(Spin::integer).collect();
        let mut params = ParamSet::new();
        for &l in &edge {
            params.push_uniform(format!("edge.l{l}"), (radial, channels), None, rng);
        }

        let (plan, out_spins) = match schedule.mode {
            ScheduleMode::Sparse => {
                let blocks = schedule
                    .internal_spins
                    .iter()
                    .map(|&k| blocks_for(&in_spins, &edge, &in_spins, k, j_max, channels))
                    .collect::<Result<Vec<_>>>()?;
                let out: BTreeSet<Spin> = blocks.iter().flat_map(|b| b.keys().copied()).collect();
                for &root in &out {
                    let rows: usize = blocks.iter().filter_map(|b| b.get(&root)).map(output_channel_count).sum();
                    params.push_uniform(format!("mix.J{root}"), (rows, channels), None, rng);
                }
                (MofdPlan::Sparse { blocks }, out)
            }
            ScheduleMode::Dense => {
                let mut tuples = Vec::new();
                let mut out = BTreeSet::new();
                for (t, tuple) in schedule.dense_tuples.iter().enumerate() {
                    let mut levels = Vec::new();
                    let mut center = in_spins.clone();
                    for (q, &k) in tuple.iter().enumerate() {
                        let level = blocks_for(&center, &edge, &in_spins, k, j_max, channels)?;
                        for (root, cfg) in &level {
                            params.push_uniform(format!("t{t}.q{q}.J{root}"), (output_channel_count(cfg), channels), None, rng);
                        }
                        center = level.keys().copied().collect();
                        levels.push(level);
                    }
                    out.extend(center);
                    tuples.push(levels);
                }
                (MofdPlan::Dense { tuples }, out)
            }
        };
        if out_spins.is_empty() {
            return Err(Error::Config("schedule yields no admissible fusion diagrams".into()));
        }
        Ok(MofdLayer {
            in_spins,
            j_max,
            channels,
            radial,
            schedule: schedule.clone(),
            plan,
            out_spins: out_spins.into_iter().collect(),
            params,
        })
    }

    pub fn out_spins(&self) -> &[Spin] {
        &self.out_spins
    }

    /// Names of the parameters belonging to the final mixing stage.
    pub fn final_mixing_names(&self) -> Vec<String> {
        self.params.iter().map(|(n, _)| n.to_string()).filter(|n| !n.starts_with("edge.")).collect()
    }

    pub fn forward(&self, tape: &mut Tape, p: &Bound, geom: &TapeGeometry, inputs: &[TapeActivation]) -> Result<Vec<TapeActivation>> {
        let tau = self.channels;
        for a in inputs {
            if a.channels != tau {
                return Err(Error::ChannelMismatch { expected: tau, found: a.channels });
            }
            if a.parts.keys().copied().collect::<Vec<_>>() != self.in_spins {
                return Err(Error::ShapeMismatch("input spins differ from the layer's".into()));
            }
        }
        let nbr = &geom.neighborhood;
        let mut edges: BTreeMap<(usize, usize), TapeActivation> = BTreeMap::new();
        for (&(o, i), e) in &geom.edges {
            let mut parts = BTreeMap::new();
            for (l, &y) in e.harmonics.iter().enumerate() {
                let spin = Spin::integer(l as u32);
                let w = tape.matmul(e.radial, p.var(&format!("edge.l{spin}")))?;
                parts.insert(spin, tape.mix(y, w)?);
            }
            edges.insert((o, i), TapeActivation { channels: tau, parts });
        }

        let mut outputs = Vec::with_capacity(inputs.len());
        for (o, psi_o) in inputs.iter().enumerate() {
            let nb = nbr.neighbors(o);
            let edge_set: Vec<&TapeActivation> = nb.iter().map(|&i| &edges[&(o, i)]).collect();
            let neighbor_set: Vec<&TapeActivation> = nb.iter().map(|&i| &inputs[i]).collect();
            let fuse = |tape: &mut Tape, center: &TapeActivation, cfg: &FusionBlockConfig| -> Result<Var> {
                let slots = [
                    TapeSlot::Single(center),
                    TapeSlot::Multiset(edge_set.clone()),
                    TapeSlot::Multiset(neighbor_set.clone()),
                ];
                concatenated_on_tape(cfg, tape, &slots)
            };
            let mut parts = BTreeMap::new();
            match &self.plan {
                MofdPlan::Sparse { blocks } => {
                    for &root in &self.out_spins {
                        let mut cats = Vec::new();
                        for b in blocks {
                            if let Some(cfg) = b.get(&root) {
                                cats.push(fuse(tape, psi_o, cfg)?);
                            }
                        }
                        let cat = if cats.len() == 1 { cats[0] } else { tape.concat_channels(&cats)? };
                        parts.insert(root, tape.mix(cat, p.var(&format!("mix.J{root}")))?);
                    }
                }
                MofdPlan::Dense { tuples } => {
                    let mut sums: BTreeMap<Spin, Vec<Var>> = BTreeMap::new();
                    for (t, levels) in tuples.iter().enumerate() {
                        let mut h = psi_o.clone();
                        for (q, level) in levels.iter().enumerate() {
                            let mut next = TapeActivation { channels: tau, parts: BTreeMap::new() };
                            for (&root, cfg) in level {
                                let cat = fuse(tape, &h, cfg)?;
                                next.parts.insert(root, tape.mix(cat, p.var(&format!("t{t}.q{q}.J{root}")))?);
                            }
                            h = next;
                        }
                        for (s, v) in h.parts {
                            sums.entry(s).or_default().push(v);
                        }
                    }
                    for (s, vs) in sums {
                        let v = if vs.len() == 1 { vs[0] } else { tape.sum(&vs)? };
                        parts.insert(s, v);
                    }
                }
            }
            outputs.push(TapeActivation { channels: tau, parts });
        }
        Ok(outputs)
    }
}

/// Plain evaluation of one MoFD update for every atom.
pub fn mofd_update(layer: &MofdLayer, inputs: &[Activation], pc: &PointCloud, nbr: &Neighborhood) -> Result<Vec<Activation>> {
    let mut tape = Tape::new();
    let bound = layer.params.bind(&mut tape);
    let positions = tape.leaf_real(pc.positions().clone());
    let geom = record_geometry(&mut tape, positions, nbr, layer.j_max, layer.radial)?;
    let acts: Vec<TapeActivation> = inputs.iter().map(|a| TapeActivation::leaf(&mut tape, a)).collect();
    let out = layer.forward(&mut tape, &bound, &geom, &acts)?;
    out.iter().map(|a| a.value(&tape)).collect()
}
