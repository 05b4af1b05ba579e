use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cofd::CofdLayer;
use super::geometry::{build_neighborhood, record_geometry, PointCloud};
use super::mofd::{MofdLayer, ScheduleMode, SpinSchedule};
use super::params::{Bound, ParamSet};
use crate::autodiff::{Gradients, Tape, Var};
use crate::block::TapeActivation;
use crate::error::{Error, Result};
use crate::spin::Spin;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Cofd,
    Mofd,
}

fn default_j_max() -> u32 {
    3
}
fn default_schedule() -> ScheduleMode {
    ScheduleMode::Sparse
}
fn default_internal() -> Vec<u32> {
    vec![0, 1, 2]
}
fn default_eight() -> usize {
    8
}
fn default_readout() -> usize {
    16
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}

/// Model hyperparameters. Spins (`j_max`, internal spins) are integers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub layers: usize,
    pub channels: usize,
    #[serde(default = "default_j_max")]
    pub j_max: u32,
    pub cutoff: f64,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleMode,
    #[serde(default = "default_internal")]
    pub internal_spins: Vec<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense_tuples: Option<Vec<Vec<u32>>>,
    #[serde(default = "default_eight")]
    pub radial_channels: usize,
    #[serde(default = "default_eight")]
    pub gate_hidden: usize,
    #[serde(default = "default_readout")]
    pub readout_hidden: usize,
    #[serde(default = "default_one")]
    pub species: usize,
    /// CoFD only: include the fusion-block term.
    #[serde(default = "default_true")]
    pub fusion: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ModelConfig {
    pub fn from_json(s: &str) -> Result<ModelConfig> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn spin_schedule(&self) -> Result<SpinSchedule> {
        let ks: Vec<Spin> = self.internal_spins.iter().map(|&k| Spin::integer(k)).collect();
        match (self.schedule, &self.dense_tuples) {
            (ScheduleMode::Sparse, _) => SpinSchedule::sparse(&ks),
            (ScheduleMode::Dense, None) => SpinSchedule::dense(&ks),
            (ScheduleMode::Dense, Some(t)) => {
                SpinSchedule::dense_with(&ks, t.iter().map(|v| v.iter().map(|&k| Spin::integer(k)).collect()).collect())
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Layer {
    Cofd(CofdLayer),
    Mofd(MofdLayer),
}

impl Layer {
    pub fn params(&self) -> &ParamSet {
        match self {
            Layer::Cofd(l) => &l.params,
            Layer::Mofd(l) => &l.params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        match self {
            Layer::Cofd(l) => &mut l.params,
            Layer::Mofd(l) => &mut l.params,
        }
    }

    pub fn out_spins(&self) -> Vec<Spin> {
        match self {
            Layer::Cofd(l) => l.out_spins(),
            Layer::Mofd(l) => l.out_spins().to_vec(),
        }
    }
}

/// Species embedding, interaction layers, invariant readout summed over atoms.
#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub embed: ParamSet,
    pub layers: Vec<Layer>,
    pub readout: ParamSet,
}

/// Energy with its tape and the nodes needed for gradients.
pub struct TapeEnergy {
    pub tape: Tape,
    pub energy: Var,
    pub positions: Var,
    pub bound: Vec<Bound>,
}

impl Model {
    pub fn new(config: &ModelConfig) -> Result<Model> {
        let c = config;
        if c.layers == 0 || c.channels == 0 || c.species == 0 || c.radial_channels == 0 {
            return Err(Error::Config("layers, channels, species and radial_channels must be positive".into()));
        }
        if !(c.cutoff > 0.0) {
            return Err(Error::Config("cutoff must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
        let j_max = Spin::integer(c.j_max);
        let mut embed = ParamSet::new();
        embed.push_uniform("embed", (c.species, c.channels), None, &mut rng);

        let mut spins = vec![Spin::ZERO];
        let mut layers = Vec::with_capacity(c.layers);
        for _ in 0..c.layers {
            let layer = match c.architecture {
                Architecture::Cofd => Layer::Cofd(CofdLayer::new(
                    &spins,
                    c.channels,
                    j_max,
                    c.radial_channels,
                    c.gate_hidden,
                    c.fusion,
                    &mut rng,
                )?),
                Architecture::Mofd => Layer::Mofd(MofdLayer::new(
                    &spins,
                    c.channels,
                    j_max,
                    c.radial_channels,
                    &c.spin_schedule()?,
                    &mut rng,
                )?),
            };
            spins = layer.out_spins();
            layers.push(layer);
        }
        if !spins.contains(&Spin::ZERO) {
            return Err(Error::Config("the last layer has no spin-0 output for the readout".into()));
        }
        let mut readout = ParamSet::new();
        readout.push_uniform("w1", (2 * c.channels, c.readout_hidden), None, &mut rng);
        readout.push("b1", Array2::zeros((1, c.readout_hidden)));
        readout.push_uniform("w2", (c.readout_hidden, 1), None, &mut rng);
        readout.push("b2", Array2::zeros((1, 1)));
        Ok(Model { config: config.clone(), embed, layers, readout })
    }

    /// Parameter sets in binding order: embedding, layers, readout.
    pub fn param_sets(&self) -> Vec<&ParamSet> {
        let mut v = vec![&self.embed];
        v.extend(self.layers.iter().map(Layer::params));
        v.push(&self.readout);
        v
    }

    fn param_sets_mut(&mut self) -> Vec<&mut ParamSet> {
        let mut v = vec![&mut self.embed];
        v.extend(self.layers.iter_mut().map(Layer::params_mut));
        v.push(&mut self.readout);
        v
    }

    fn set_prefix(i: usize, n_sets: usize) -> String {
        if i == 0 {
            "embed".into()
        } else if i + 1 == n_sets {
            "readout".into()
        } else {
            format!("layer{}", i - 1)
        }
    }

    /// `(full name, shape)` of every parameter array, in flattening order.
    pub fn param_shapes(&self) -> Vec<(String, (usize, usize))> {
        let sets = self.param_sets();
        let n = sets.len();
        let mut out = Vec::new();
        for (i, s) in sets.iter().enumerate() {
            let prefix = Model::set_prefix(i, n);
            for (name, v) in s.iter() {
                let full = if i == 0 { prefix.clone() } else { format!("{prefix}.{name}") };
                out.push((full, v.dim()));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_sets().iter().map(|s| s.count()).sum()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.param_sets().iter().flat_map(|s| s.values().iter().flat_map(|v| v.iter().copied())).collect()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::ShapeMismatch(format!("{} values for {} parameters", flat.len(), self.param_count())));
        }
        let mut k = 0;
        for s in self.param_sets_mut() {
            for v in s.values_mut() {
                for x in v.iter_mut() {
                    *x = flat[k];
                    k += 1;
                }
            }
        }
        Ok(())
    }

    /// Records the full energy evaluation.
    pub fn record(&self, pc: &PointCloud) -> Result<TapeEnergy> {
        let c = &self.config;
        if let Some(&s) = pc.species().iter().find(|&&s| s >= c.species) {
            return Err(Error::Config(format!("species {s} outside 0..{}", c.species)));
        }
        let mut tape = Tape::new();
        let bound: Vec<Bound> = self.param_sets().iter().map(|s| s.bind(&mut tape)).collect();
        let positions = tape.leaf_real(pc.positions().clone());
        let nbr = build_neighborhood(pc, c.cutoff);
        let geom = record_geometry(&mut tape, positions, &nbr, Spin::integer(c.j_max), c.radial_channels)?;

        let table = bound[0].var("embed");
        let mut acts = Vec::with_capacity(pc.len());
        for &s in pc.species() {
            let mut one_hot = Array2::zeros((1, c.species));
            one_hot[[0, s]] = 1.0;
            let oh = tape.leaf_real(one_hot);
            let row = tape.matmul(oh, table)?;
            let z = tape.to_complex(row)?;
            let mut a = TapeActivation { channels: c.channels, ..Default::default() };
            a.parts.insert(Spin::ZERO, z);
            acts.push(a);
        }
        for (n, layer) in self.layers.iter().enumerate() {
            let p = &bound[n + 1];
            acts = match layer {
                Layer::Cofd(l) => l.forward(&mut tape, p, &geom, &acts, true)?,
                Layer::Mofd(l) => l.forward(&mut tape, p, &geom, &acts)?,
            };
        }
        let r = bound.last().expect("readout");
        let mut atom_energies = Vec::with_capacity(acts.len());
        for a in &acts {
            let x = tape.split_complex(a.parts[&Spin::ZERO])?;
            let h = tape.matmul(x, r.var("w1"))?;
            let h = tape.add_bias(h, r.var("b1"))?;
            let h = tape.tanh(h)?;
            let e = tape.matmul(h, r.var("w2"))?;
            atom_energies.push(tape.add_bias(e, r.var("b2"))?);
        }
        let energy = tape.sum(&atom_energies)?;
        Ok(TapeEnergy { tape, energy, positions, bound })
    }

    pub fn energy(&self, pc: &PointCloud) -> Result<f64> {
        let t = self.record(pc)?;
        Ok(t.tape.real(t.energy)[[0, 0]])
    }

    /// Energy and forces `-∂E/∂x`.
    pub fn energy_and_forces(&self, pc: &PointCloud) -> Result<(f64, Array2<f64>)> {
        let (e, f, _) = self.energy_forces_gradient(pc)?;
        Ok((e, f))
    }

    /// Energy, forces and `∂E/∂θ` flattened in parameter order.
    pub fn energy_forces_gradient(&self, pc: &PointCloud) -> Result<(f64, Array2<f64>, Vec<f64>)> {
        let t = self.record(pc)?;
        let grads = t.tape.backward(t.energy)?;
        let forces = -grads.real_or_zeros(t.positions, pc.positions().dim());
        let flat = self.flatten_gradients(&t, &grads);
        Ok((t.tape.real(t.energy)[[0, 0]], forces, flat))
    }

    fn flatten_gradients(&self, t: &TapeEnergy, grads: &Gradients) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (set, b) in self.param_sets().iter().zip(&t.bound) {
            for (v, &var) in set.values().iter().zip(&b.vars) {
                out.extend(grads.real_or_zeros(var, v.dim()).iter().copied());
            }
        }
        out
    }

    /// CSV lines `parameter,rows,cols,count` followed by a total.
    pub fn describe(&self) -> String {
        let mut s = String::from("parameter,rows,cols,count\n");
        for (name, (r, c)) in self.param_shapes() {
            s.push_str(&format!("{name},{r},{c},{}\n", r * c));
        }
        s.push_str(&format!("total,,,{}\n", self.param_count()));
        s
    }
}
