use std::rc::Rc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::spin::Spin;
use crate::su2::cg_tensor;

fn rand_real(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn rand_complex(rows: usize, cols: usize, seed: u64) -> Array2<Complex64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((rows, cols), || {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// A complex node depending on every entry of the real variable `x`.
fn complexify(tape: &mut Tape, x: Var, rows: usize, seed: u64) -> Result<Var> {
    let k = tape.real(x).nrows();
    let m = tape.leaf_complex(rand_complex(rows, k, seed));
    tape.mix(m, x)
}

/// Random real linear functional of any node.
fn project(tape: &mut Tape, y: Var, seed: u64) -> Result<Var> {
    let y = match tape.value(y) {
        Value::Complex(_) => tape.split_complex(y)?,
        Value::Real(_) => y,
    };
    let (r, c) = tape.value(y).shape();
    let w = tape.leaf_real(rand_real(r, c, seed));
    let p = tape.mul(y, w)?;
    tape.sum_all(p)
}

fn check(f: impl Fn(&mut Tape, Var) -> Result<Var>, point: Array2<f64>) -> GradCheckReport {
    let report = gradcheck(f, &point, 1e-5, Tolerance::default()).unwrap();
    assert!(report.passed, "max rel {} at {:?}", report.max_rel_error, report.worst_index);
    report
}

#[test]
fn elementwise_and_linear_ops() {
    check(
        |t, x| {
            let y = t.tanh(x)?;
            let z = t.mul(y, x)?;
            let z = t.scale(z, -1.5);
            let w = t.add(z, x)?;
            project(t, w, 1)
        },
        rand_real(3, 4, 10),
    );
    check(
        |t, x| {
            let w = t.leaf_real(rand_real(4, 2, 2));
            let b = t.leaf_real(rand_real(1, 2, 3));
            let y = t.matmul(x, w)?;
            let y = t.add_bias(y, b)?;
            project(t, y, 4)
        },
        rand_real(3, 4, 11),
    );
    // gradient through the weights, then the bias
    check(
        |t, w| {
            let x = t.leaf_real(rand_real(2, 3, 5));
            let y = t.matmul(x, w)?;
            let y = t.tanh(y)?;
            project(t, y, 6)
        },
        rand_real(3, 2, 12),
    );
    check(
        |t, b| {
            let x = t.leaf_real(rand_real(3, 2, 7));
            let y = t.add_bias(x, b)?;
            let y = t.tanh(y)?;
            project(t, y, 8)
        },
        rand_real(1, 2, 13),
    );
}

#[test]
fn complex_ops() {
    check(
        |t, x| {
            let z = complexify(t, x, 3, 20)?;
            let w = t.leaf_real(rand_real(2, 4, 21));
            let y = t.mix(z, w)?;
            let g = t.leaf_real(rand_real(1, 4, 22));
            let y = t.scale_channels(y, g)?;
            let y2 = t.mul(y, y)?;
            project(t, y2, 23)
        },
        rand_real(2, 2, 24),
    );
    // mixing weights and gates as the variable
    check(
        |t, w| {
            let z = t.leaf_complex(rand_complex(3, 2, 30));
            let y = t.mix(z, w)?;
            project(t, y, 31)
        },
        rand_real(2, 5, 32),
    );
    check(
        |t, g| {
            let z = t.leaf_complex(rand_complex(3, 4, 33));
            let y = t.scale_channels(z, g)?;
            project(t, y, 34)
        },
        rand_real(1, 4, 35),
    );
    check(
        |t, x| {
            let z = t.to_complex(x)?;
            let zs = complexify(t, x, 2, 36)?;
            let c = t.concat_channels(&[zs, zs])?;
            let s = t.sum_all(x)?;
            let c = t.mul_scalar(c, s)?;
            let d = t.mul_scalar(z, s)?;
            let a = project(t, c, 37)?;
            let b = project(t, d, 38)?;
            t.add(a, b)
        },
        rand_real(2, 2, 39),
    );
}

#[test]
fn cg_product_both_operands() {
    for (ja, jb, jc) in [(2, 2, 2), (1, 1, 2), (2, 1, 1), (3, 3, 4), (4, 2, 2)] {
        let cg = cg_tensor(Spin::from_twice(ja), Spin::from_twice(jb), Spin::from_twice(jc)).unwrap();
        let (da, db) = (ja as usize + 1, jb as usize + 1);
        check(
            |t, x| {
                let a = complexify(t, x, da, 40)?;
                let b = complexify(t, x, db, 41)?;
                let y = t.cg_product(&cg, a, b)?;
                project(t, y, 42)
            },
            rand_real(2, 3, 43),
        );
        // unit-channel broadcast on the left
        check(
            |t, x| {
                let a = t.leaf_complex(rand_complex(da, 1, 44));
                let a = t.mix(a, x)?;
                let b = t.leaf_complex(rand_complex(db, 3, 45));
                let y = t.cg_product(&cg, a, b)?;
                project(t, y, 46)
            },
            rand_real(1, 1, 47),
        );
    }
}

#[test]
fn geometric_ops() {
    let pos = rand_real(3, 3, 50);
    for l in 0..=3 {
        check(
            |t, p| {
                let d = t.displacement(p, 0, 2)?;
                let y = t.spherical_harmonic(d, l)?;
                project(t, y, 51)
            },
            pos.clone(),
        );
    }
    check(
        |t, p| {
            let d = t.displacement(p, 1, 0)?;
            let r = t.radial_basis(d, 8, 3.0)?;
            let e = t.envelope(d, 3.0)?;
            let r = t.mul_scalar(r, e)?;
            project(t, r, 52)
        },
        pos,
    );
}

#[test]
fn envelope_vanishes_at_cutoff() {
    let (f, df) = envelope_with_derivative(2.5, 2.5);
    assert_eq!((f, df), (0.0, 0.0));
    let (v, _) = radial_basis_with_derivative(2.5, 8, 2.5);
    assert!(v.iter().all(|&x| x == 0.0));
    let (f, df) = envelope_with_derivative(2.5 - 1e-9, 2.5);
    assert!(f < 1e-15 && df.abs() < 1e-8);
}

#[test]
fn fan_out_accumulates() {
    let mut t = Tape::new();
    let x = t.leaf(Value::scalar(3.0));
    let a = t.mul(x, x).unwrap();
    let b = t.mul(a, x).unwrap();
    let g = t.backward(b).unwrap();
    assert_eq!(g.get(x).unwrap().as_real().unwrap()[[0, 0]], 27.0);
    // ids of recorded nodes increase in recording order
    assert!(x.id() < a.id() && a.id() < b.id());
}

#[test]
fn seed_must_be_scalar() {
    let mut t = Tape::new();
    let x = t.leaf_real(Array2::zeros((2, 1)));
    assert!(matches!(t.backward(x), Err(Error::NonScalarSeed((2, 1)))));
    let z = t.leaf_complex(Array2::zeros((1, 1)));
    assert!(matches!(t.backward(z), Err(Error::NonScalarSeed((1, 1)))));
}

struct Square {
    broken: bool,
}

impl Primitive for Square {
    fn forward(&self, inputs: &[&Value]) -> Result<Value> {
        Ok(Value::Real(inputs[0].as_real().unwrap().mapv(|v| v * v)))
    }

    fn vjp(&self, inputs: &[&Value], _output: &Value, adjoint: &Value, _wrt: usize) -> Value {
        let x = inputs[0].as_real().unwrap();
        let factor = if self.broken { 2.2 } else { 2.0 };
        Value::Real(adjoint.as_real().unwrap() * &x.mapv(|v| factor * v))
    }
}

#[test]
fn custom_primitives() {
    let mut t = Tape::new();
    let x = t.leaf_real(Array2::ones((1, 1)));
    assert!(matches!(
        t.record(Op::Custom("square".into()), &[x]),
        Err(Error::UnregisteredPrimitive(_))
    ));

    let run = |broken: bool| {
        gradcheck(
            move |t, x| {
                t.register("square", Rc::new(Square { broken }));
                let y = t.record(Op::Custom("square".into()), &[x])?;
                project(t, y, 60)
            },
            &rand_real(2, 3, 61),
            1e-5,
            Tolerance::default(),
        )
        .unwrap()
    };
    assert!(run(false).passed);
    let bad = run(true);
    assert!(!bad.passed);
    assert!(bad.max_rel_error > 0.05);
    assert!(bad.worst_index.is_some());
}

#[test]
fn record_dispatch_matches_methods() {
    let mut t = Tape::new();
    let a = t.leaf_real(rand_real(2, 2, 70));
    let b = t.leaf_real(rand_real(2, 2, 71));
    let via_record = t.record(Op::Add, &[a, b]).unwrap();
    let direct = t.add(a, b).unwrap();
    assert_eq!(t.value(via_record), t.value(direct));
    assert!(t.record(Op::Add, &[a]).is_err());
}
