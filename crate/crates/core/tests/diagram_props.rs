mod common;

use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;
use fusion_core::diagram::DiagramJson;
use fusion_core::su2::{haar_rotation, spherical_harmonics};
use fusion_core::{enumerate_internal, FusionDiagram, IrrepVector, Leaf, Spin, TreeShape};

/// `dense_mapᵀ` applied to the slot-ordered Kronecker product of the inputs,
/// one channel at a time.
fn via_dense_map(d: &FusionDiagram, inputs: &[IrrepVector]) -> Array2<Complex64> {
    let map = to_complex(&d.dense_map().unwrap());
    let channels = inputs[0].channels();
    let mut out = Array2::zeros((d.root().dim(), channels));
    for c in 0..channels {
        let mut flat = Array2::from_elem((1, 1), Complex64::new(1.0, 0.0));
        for x in inputs {
            let col = x.data().column(c).to_owned().insert_axis(ndarray::Axis(1));
            flat = kron_c(&flat, &col);
        }
        out.column_mut(c).assign(&map.t().dot(&flat).column(0));
    }
    out
}

fn contract(d: &FusionDiagram, inputs: &[IrrepVector]) -> IrrepVector {
    d.contract(&inputs.iter().collect::<Vec<_>>()).unwrap()
}

/// Multiplicity of `J` from weight counting alone: states with `M = J`
/// minus states with `M = J + 1` in the full product.
fn weight_multiplicity(spins: &[Spin], root: Spin) -> usize {
    let mut counts = std::collections::HashMap::<i32, usize>::new();
    counts.insert(0, 1);
    for s in spins {
        let mut next = std::collections::HashMap::new();
        for (&tm, &c) in &counts {
            for m in s.magnetic() {
                *next.entry(tm + m.twice()).or_insert(0) += c;
            }
        }
        counts = next;
    }
    let at = |tm: i32| counts.get(&tm).copied().unwrap_or(0);
    let tj = root.twice() as i32;
    at(tj) - at(tj + 2)
}

#[test]
fn validation_examples() {
    let one = Spin::ONE;
    let d = FusionDiagram::new(
        (0..3).map(|slot| Leaf { slot, spin: one }).collect(),
        fusion_core::FusionTree::left_comb(3, &[one]),
        Spin::integer(3),
    );
    let v = d.validate();
    assert_eq!(v.len(), 1, "{v:?}");
    assert_eq!(v[0].path, "root");
}

#[test]
fn enumeration_examples() {
    let ks = enumerate_internal(&[Spin::ONE; 3], Spin::ONE, &TreeShape::LeftComb);
    assert_eq!(ks, vec![vec![Spin::ZERO], vec![Spin::ONE], vec![Spin::integer(2)]]);
    assert!(enumerate_internal(&[Spin::HALF; 3], Spin::ZERO, &TreeShape::LeftComb).is_empty());
}

#[test]
fn enumeration_count_matches_weight_counting() {
    for spins in [
        vec![1, 1, 1],
        vec![2, 2, 2],
        vec![2, 2, 2, 2],
        vec![1, 2, 3],
        vec![4, 2, 2, 1],
        vec![3, 3, 3, 3],
    ] {
        let spins: Vec<Spin> = spins.into_iter().map(Spin::from_twice).collect();
        let total: u32 = spins.iter().map(|s| s.twice()).sum();
        for root in (total % 2..=total).step_by(2).map(Spin::from_twice) {
            let expect = weight_multiplicity(&spins, root);
            assert_eq!(enumerate_internal(&spins, root, &TreeShape::LeftComb).len(), expect, "{spins:?} → {root}");
        }
    }
}

#[test]
fn vector_pairing_is_a_scaled_norm() {
    let d = FusionDiagram::left_comb(&[Spin::ONE, Spin::ONE], &[], Spin::ZERO).unwrap();
    let g = haar_rotation(5);
    for x in [[0.3, -1.0, 0.4], [1.0, 2.0, -0.5]] {
        let e = spherical_harmonics(x, Spin::ONE).unwrap().remove(1);
        let s = contract(&d, &[e.clone(), e.clone()]).data()[[0, 0]];
        let n2 = e.norm().powi(2);
        // ⟨1 m; 1 -m | 0 0⟩ = (-1)^{1-m}/√3 and Y_{-m} = (-1)^m Y_m*
        assert!((s - Complex64::new(-n2 / 3f64.sqrt(), 0.0)).norm() < 1e-14);
        let er = e.rotated(&g);
        let sr = contract(&d, &[er.clone(), er]).data()[[0, 0]];
        assert!((sr - s).norm() < 1e-14);
    }
}

#[test]
fn distinct_internal_spins_are_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..40 {
        let d = random_diagram(&mut rng, 4, 4);
        let spins = d.slot_spins();
        let shape = TreeShape::Custom(d.tree().clone());
        let maps: Vec<Array2<f64>> = enumerate_internal(&spins, d.root(), &shape)
            .iter()
            .map(|ks| FusionDiagram::new(d.leaves().to_vec(), d.tree().with_internal_spins(ks), d.root()).dense_map().unwrap())
            .collect();
        for (i, a) in maps.iter().enumerate() {
            for (k, b) in maps.iter().enumerate() {
                let g = a.t().dot(b);
                let expect = if i == k { Array2::<f64>::eye(d.root().dim()) } else { Array2::zeros(g.dim()) };
                let off = (&g - &expect).iter().fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(off <= 1e-12, "{off:e}");
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn contract_equals_dense_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_diagram(&mut rng, 4, 6);
        let inputs = random_inputs(&d, 2, &mut rng);
        let a = contract(&d, &inputs);
        prop_assert!(max_abs_diff(a.data(), &via_dense_map(&d, &inputs)) <= 1e-12);
    }

    #[test]
    fn contract_is_equivariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_diagram(&mut rng, 4, 6);
        let g = haar_rotation(seed ^ 0x5eed);
        let inputs = random_inputs(&d, 2, &mut rng);
        let rotated: Vec<IrrepVector> = inputs.iter().map(|x| x.rotated(&g)).collect();
        let lhs = contract(&d, &rotated);
        let rhs = contract(&d, &inputs).rotated(&g);
        prop_assert!(lhs.distance(&rhs) / rhs.norm().max(1.0) <= 1e-12);
    }

    #[test]
    fn contract_is_multilinear(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_diagram(&mut rng, 4, 4);
        let x = random_inputs(&d, 2, &mut rng);
        let y = random_inputs(&d, 2, &mut rng);
        let slot = (seed % d.arity() as u64) as usize;
        let mut mixed = x.clone();
        mixed[slot] = x[slot].scaled(a).add(&y[slot].scaled(b)).unwrap();
        let mut other = x.clone();
        other[slot] = y[slot].clone();
        let lhs = contract(&d, &mixed);
        let rhs = contract(&d, &x).scaled(a).add(&contract(&d, &other).scaled(b)).unwrap();
        prop_assert!(lhs.distance(&rhs) / rhs.norm().max(1.0) <= 1e-12);
    }

    #[test]
    fn dense_map_columns_are_orthonormal(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_diagram(&mut rng, 4, 4);
        let m = d.dense_map().unwrap();
        let g = m.t().dot(&m) - Array2::<f64>::eye(d.root().dim());
        prop_assert!(g.iter().all(|v| v.abs() <= 1e-12));
    }

    #[test]
    fn enumerated_assignments_validate(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_diagram(&mut rng, 4, 4);
        let shape = TreeShape::Custom(d.tree().clone());
        for ks in enumerate_internal(&d.slot_spins(), d.root(), &shape) {
            let e = FusionDiagram::new(d.leaves().to_vec(), d.tree().with_internal_spins(&ks), d.root());
            prop_assert!(e.validate().is_empty());
        }
    }

    #[test]
    fn json_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_diagram(&mut rng, 4, 6);
        let back = FusionDiagram::from_json(&d.to_json()).unwrap();
        prop_assert_eq!(&back, &d);
        let raw: DiagramJson = serde_json::from_str(&d.to_json()).unwrap();
        prop_assert_eq!(raw.leaves.len(), d.arity());
    }
}
