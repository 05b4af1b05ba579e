#![allow(dead_code)]

use std::collections::HashMap;

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fusion_core::block::{FusionBlockConfig, SlotInput};
use fusion_core::layers::PointCloud;
use fusion_core::{enumerate_internal, Activation, FusionDiagram, FusionTree, IrrepVector, Leaf, Spin, TreeShape};

/// Coupled states `|J M⟩` of `ja ⊗ jb` built independently of the Racah sum:
/// the highest weight of each `J` is Gram-Schmidt orthogonalized against the
/// higher multiplets at the same `M` (positive `ma = ja` component), then
/// lowered with `J- = Ja- + Jb-`. Keys are `(2J, 2M)`; vectors are indexed by
/// `ia * db + ib` with ascending `m`.
pub fn lowering_oracle(tja: u32, tjb: u32) -> HashMap<(u32, i32), Vec<f64>> {
    let (da, db) = (tja as usize + 1, tjb as usize + 1);
    let (ja, jb) = (tja as i32, tjb as i32);
    let index = |tma: i32, tmb: i32| ((tma + ja) / 2) as usize * db + ((tmb + jb) / 2) as usize;
    // ⟨m-1| J- |m⟩ in twice units
    let lower_coef = |tj: i32, tm: i32| (((tj * (tj + 2) - tm * (tm - 2)) as f64) / 4.0).sqrt();
    let mut states: HashMap<(u32, i32), Vec<f64>> = HashMap::new();
    let mut tj = ja + jb;
    while tj >= (ja - jb).abs() {
        let mut v = vec![0.0; da * db];
        v[index(ja, tj - ja)] = 1.0;
        // two Gram-Schmidt passes
        for _ in 0..2 {
            let mut higher = tj + 2;
            while higher <= ja + jb {
                let u = &states[&(higher as u32, tj)];
                let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
                for (x, y) in v.iter_mut().zip(u) {
                    *x -= dot * y;
                }
                higher += 2;
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        states.insert((tj as u32, tj), v.clone());
        let mut tm = tj;
        while tm > -tj {
            let mut w = vec![0.0; da * db];
            for tma in (-ja..=ja).step_by(2) {
                for tmb in (-jb..=jb).step_by(2) {
                    let c = v[index(tma, tmb)];
                    if c == 0.0 {
                        continue;
                    }
                    if tma > -ja {
                        w[index(tma - 2, tmb)] += c * lower_coef(ja, tma);
                    }
                    if tmb > -jb {
                        w[index(tma, tmb - 2)] += c * lower_coef(jb, tmb);
                    }
                }
            }
            // the exact norm is lower_coef(tj, tm); renormalizing keeps drift down
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            debug_assert!((norm - lower_coef(tj, tm)).abs() < 1e-9);
            w.iter_mut().for_each(|x| *x /= norm);
            tm -= 2;
            states.insert((tj as u32, tm), w.clone());
            v = w;
        }
        tj -= 2;
    }
    states
}

pub fn kron_c(a: &Array2<Complex64>, b: &Array2<Complex64>) -> Array2<Complex64> {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    Array2::from_shape_fn((ar * br, ac * bc), |(i, j)| a[[i / br, j / bc]] * b[[i % br, j % bc]])
}

pub fn max_abs(a: &Array2<Complex64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn to_complex(a: &Array2<f64>) -> Array2<Complex64> {
    a.mapv(|x| Complex64::new(x, 0.0))
}

/// All spins with `2j ≤ max_twice`.
pub fn spins_up_to(max_twice: u32) -> Vec<Spin> {
    (0..=max_twice).map(Spin::from_twice).collect()
}

/// Uniform positions in a cube, rejecting pairs closer than `min_sep`.
pub fn random_cloud(n: usize, box_len: f64, min_sep: f64, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pts: Vec<[f64; 3]> = Vec::new();
    while pts.len() < n {
        let c: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..box_len));
        if pts.iter().all(|q| (0..3).map(|k| (c[k] - q[k]).powi(2)).sum::<f64>().sqrt() >= min_sep) {
            pts.push(c);
        }
    }
    PointCloud::new(Array2::from_shape_fn((n, 3), |(i, k)| pts[i][k]), vec![0; n]).unwrap()
}

pub fn random_acts(n: usize, spins: &[Spin], tau: usize, seed: u64) -> Vec<Activation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| Activation::random(spins, tau, &mut rng)).collect()
}

/// Largest per-atom, per-spin relative residual.
pub fn acts_residual(a: &[Activation], b: &[Activation]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            x.parts()
                .map(|p| {
                    let q = y.get(p.spin()).expect("same spins");
                    p.distance(q) / p.norm().max(1e-12)
                })
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// A random binary tree over `slots`; internal spin labels are placeholders.
pub fn random_tree<R: Rng>(slots: &[usize], rng: &mut R) -> FusionTree {
    if slots.len() == 1 {
        return FusionTree::Leaf(slots[0]);
    }
    let cut = rng.random_range(1..slots.len());
    FusionTree::node(random_tree(&slots[..cut], rng), random_tree(&slots[cut..], rng), Some(Spin::ZERO))
}

/// A random admissible diagram with `2..=max_leaves` leaves, leaf spins with
/// `2j ≤ max_twice`, a random tree shape and random slot placement.
pub fn random_diagram<R: Rng>(rng: &mut R, max_leaves: usize, max_twice: u32) -> FusionDiagram {
    loop {
        let n = rng.random_range(2..=max_leaves);
        let spins: Vec<Spin> = (0..n).map(|_| Spin::from_twice(rng.random_range(0..=max_twice))).collect();
        let mut slots: Vec<usize> = (0..n).collect();
        slots.shuffle(rng);
        let tree = random_tree(&slots, rng);
        let total: u32 = spins.iter().map(|s| s.twice()).sum();
        let roots: Vec<u32> = (total % 2..=total.min(max_twice)).step_by(2).collect();
        let root = Spin::from_twice(*roots.choose(rng).expect("parity leaves a root"));
        let options = enumerate_internal(&spins, root, &TreeShape::Custom(tree.clone()));
        if let Some(ks) = options.choose(rng) {
            let leaves = spins.iter().enumerate().map(|(slot, &spin)| Leaf { slot, spin }).collect();
            return FusionDiagram::new(leaves, tree.with_internal_spins(ks), root);
        }
    }
}

pub fn random_inputs<R: Rng>(d: &FusionDiagram, channels: usize, rng: &mut R) -> Vec<IrrepVector> {
    d.slot_spins().iter().map(|&s| IrrepVector::random(s, channels, rng)).collect()
}

/// A random block: a seed diagram, some of its internal-spin siblings and
/// possibly other diagrams of the same arity and root, random aggregated
/// slots and random mixing.
pub fn random_block<R: Rng>(rng: &mut R, max_leaves: usize, max_twice: u32) -> FusionBlockConfig {
    let d0 = random_diagram(rng, max_leaves, max_twice);
    let shape = TreeShape::Custom(d0.tree().clone());
    let mut diagrams = vec![d0.clone()];
    for ks in enumerate_internal(&d0.slot_spins(), d0.root(), &shape) {
        let d = FusionDiagram::new(d0.leaves().to_vec(), d0.tree().with_internal_spins(&ks), d0.root());
        if d != d0 && rng.random_bool(0.5) {
            diagrams.push(d);
        }
    }
    for _ in 0..20 {
        let d = random_diagram(rng, max_leaves, max_twice);
        if d.arity() == d0.arity() && d.root() == d0.root() && diagrams.len() < 5 {
            diagrams.push(d);
        }
    }
    let channels = rng.random_range(1..=3);
    let out = rng.random_range(1..=3);
    let aggregated: Vec<usize> = (0..d0.arity()).filter(|_| rng.random_bool(0.5)).collect();
    FusionBlockConfig::with_random_mixing(diagrams, channels, out, rng.random())
        .unwrap()
        .with_aggregated_slots(aggregated)
        .unwrap()
}

/// Per-slot activations: `multiset` elements at aggregated slots, one elsewhere.
pub fn block_data<R: Rng>(cfg: &FusionBlockConfig, multiset: usize, rng: &mut R) -> Vec<Vec<Activation>> {
    cfg.slot_spins()
        .iter()
        .enumerate()
        .map(|(s, spins)| {
            let spins: Vec<Spin> = spins.iter().copied().collect();
            let n = if cfg.aggregated_slots().contains(&s) { multiset } else { 1 };
            (0..n).map(|_| Activation::random(&spins, cfg.channels(), rng)).collect()
        })
        .collect()
}

/// Slot inputs with aggregated elements taken in `order`.
pub fn block_inputs<'a>(cfg: &FusionBlockConfig, data: &'a [Vec<Activation>], order: &[usize]) -> Vec<SlotInput<'a>> {
    data.iter()
        .enumerate()
        .map(|(s, v)| {
            if cfg.aggregated_slots().contains(&s) {
                SlotInput::Multiset(order.iter().map(|&i| &v[i]).collect())
            } else {
                SlotInput::Single(&v[0])
            }
        })
        .collect()
}

pub fn scaled_residual(a: &Array2<Complex64>, b: &Array2<Complex64>) -> f64 {
    max_abs_diff(a, b) / max_abs(a).max(max_abs(b)).max(1.0)
}
