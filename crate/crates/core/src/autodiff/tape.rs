use std::collections::HashMap;
use std::rc::Rc;
use std::sync::Arc;

use ndarray::{s, Array2, Axis};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::su2::harmonics::harmonic_with_jacobian;
use crate::su2::CgTensor;

/// A node value: every array is 2-D, scalars are `1 × 1` real arrays.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Real(Array2<f64>),
    Complex(Array2<Complex64>),
}

impl Value {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            Value::Real(a) => a.dim(),
            Value::Complex(a) => a.dim(),
        }
    }

    pub fn scalar(v: f64) -> Value {
        Value::Real(Array2::from_elem((1, 1), v))
    }

    pub fn as_real(&self) -> Option<&Array2<f64>> {
        match self {
            Value::Real(a) => Some(a),
            Value::Complex(_) => None,
        }
    }

    pub fn as_complex(&self) -> Option<&Array2<Complex64>> {
        match self {
            Value::Complex(a) => Some(a),
            Value::Real(_) => None,
        }
    }

    fn zeros_like(&self) -> Value {
        match self {
            Value::Real(a) => Value::Real(Array2::zeros(a.dim())),
            Value::Complex(a) => Value::Complex(Array2::zeros(a.dim())),
        }
    }

    fn accumulate(&mut self, other: &Value) {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) => *a += b,
            (Value::Complex(a), Value::Complex(b)) => *a += b,
            _ => panic!("adjoint kind mismatch"),
        }
    }
}

fn real(v: &Value) -> &Array2<f64> {
    v.as_real().expect("real operand")
}

fn complex(v: &Value) -> &Array2<Complex64> {
    v.as_complex().expect("complex operand")
}

type Vjp = Box<dyn Fn(&Value) -> Value>;

struct Node {
    value: Rc<Value>,
    parents: Vec<(usize, Vjp)>,
}

/// Handle to a recorded node.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// A user-supplied primitive recorded through [`Tape::record`].
pub trait Primitive {
    fn forward(&self, inputs: &[&Value]) -> Result<Value>;
    /// Cotangent for input `wrt` under the conjugate convention.
    fn vjp(&self, inputs: &[&Value], output: &Value, adjoint: &Value, wrt: usize) -> Value;
}

/// The registered operations that [`Tape::record`] understands.
#[derive(Clone)]
pub enum Op {
    Add,
    Sum,
    Mul,
    Scale(f64),
    MulScalar,
    ConcatChannels,
    Mix,
    MatMul,
    AddBias,
    Tanh,
    ToComplex,
    SplitComplex,
    ScaleChannels,
    SumAll,
    CgProduct(Arc<CgTensor>),
    Displacement { from: usize, to: usize },
    SphericalHarmonic { l: u32 },
    RadialBasis { count: usize, cutoff: f64 },
    Envelope { cutoff: f64 },
    Custom(String),
}

/// Record of one forward evaluation for reverse-mode differentiation.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    registry: HashMap<String, Rc<dyn Primitive>>,
}

/// Adjoints keyed by node id.
pub struct Gradients {
    adjoints: Vec<Option<Value>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Value> {
        self.adjoints.get(v.0).and_then(Option::as_ref)
    }

    /// Real adjoint of `v`, or zeros of `shape` when `v` did not influence the seed.
    pub fn real_or_zeros(&self, v: Var, shape: (usize, usize)) -> Array2<f64> {
        match self.get(v) {
            Some(Value::Real(a)) => a.clone(),
            Some(Value::Complex(_)) => panic!("complex adjoint for a real node"),
            None => Array2::zeros(shape),
        }
    }
}

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Value {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> &Array2<f64> {
        real(self.value(v))
    }

    pub fn complex(&self, v: Var) -> &Array2<Complex64> {
        complex(self.value(v))
    }

    pub fn register(&mut self, name: &str, p: Rc<dyn Primitive>) {
        self.registry.insert(name.to_string(), p);
    }

    fn push(&mut self, value: Value, parents: Vec<(usize, Vjp)>) -> Var {
        self.nodes.push(Node { value: Rc::new(value), parents });
        Var(self.nodes.len() - 1)
    }

    fn shared(&self, v: Var) -> Rc<Value> {
        Rc::clone(&self.nodes[v.0].value)
    }

    pub fn leaf(&mut self, value: Value) -> Var {
        self.push(value, Vec::new())
    }

    pub fn leaf_real(&mut self, a: Array2<f64>) -> Var {
        self.leaf(Value::Real(a))
    }

    pub fn leaf_complex(&mut self, a: Array2<Complex64>) -> Var {
        self.leaf(Value::Complex(a))
    }

    /// Dispatches a registered primitive by name.
    pub fn record(&mut self, op: Op, inputs: &[Var]) -> Result<Var> {
        let arity = |n: usize| {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::ShapeMismatch(format!("operation expects {n} inputs, got {}", inputs.len())))
            }
        };
        match op {
            Op::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            Op::Sum => self.sum(inputs),
            Op::Mul => {
                arity(2)?;
                self.mul(inputs[0], inputs[1])
            }
            Op::Scale(c) => {
                arity(1)?;
                Ok(self.scale(inputs[0], c))
            }
            Op::MulScalar => {
                arity(2)?;
                self.mul_scalar(inputs[0], inputs[1])
            }
            Op::ConcatChannels => self.concat_channels(inputs),
            Op::Mix => {
                arity(2)?;
                self.mix(inputs[0], inputs[1])
            }
            Op::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            Op::AddBias => {
                arity(2)?;
                self.add_bias(inputs[0], inputs[1])
            }
            Op::Tanh => {
                arity(1)?;
                self.tanh(inputs[0])
            }
            Op::ToComplex => {
                arity(1)?;
                self.to_complex(inputs[0])
            }
            Op::SplitComplex => {
                arity(1)?;
                self.split_complex(inputs[0])
            }
            Op::ScaleChannels => {
                arity(2)?;
                self.scale_channels(inputs[0], inputs[1])
            }
            Op::SumAll => {
                arity(1)?;
                self.sum_all(inputs[0])
            }
            Op::CgProduct(cg) => {
                arity(2)?;
                self.cg_product(&cg, inputs[0], inputs[1])
            }
            Op::Displacement { from, to } => {
                arity(1)?;
                self.displacement(inputs[0], from, to)
            }
            Op::SphericalHarmonic { l } => {
                arity(1)?;
                self.spherical_harmonic(inputs[0], l)
            }
            Op::RadialBasis { count, cutoff } => {
                arity(1)?;
                self.radial_basis(inputs[0], count, cutoff)
            }
            Op::Envelope { cutoff } => {
                arity(1)?;
                self.envelope(inputs[0], cutoff)
            }
            Op::Custom(name) => self.custom(&name, inputs),
        }
    }

    fn custom(&mut self, name: &str, inputs: &[Var]) -> Result<Var> {
        let prim = self
            .registry
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnregisteredPrimitive(name.to_string()))?;
        let vals: Vec<Rc<Value>> = inputs.iter().map(|&v| self.shared(v)).collect();
        let out = {
            let refs: Vec<&Value> = vals.iter().map(|v| v.as_ref()).collect();
            prim.forward(&refs)?
        };
        let out_rc = Rc::new(out.clone());
        let parents = inputs
            .iter()
            .enumerate()
            .map(|(wrt, &v)| {
                let prim = Rc::clone(&prim);
                let vals = vals.clone();
                let out_rc = Rc::clone(&out_rc);
                let f: Vjp = Box::new(move |adj| {
                    let refs: Vec<&Value> = vals.iter().map(|v| v.as_ref()).collect();
                    prim.vjp(&refs, &out_rc, adj, wrt)
                });
                (v.0, f)
            })
            .collect();
        Ok(self.push(out, parents))
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::ShapeMismatch(format!("{sa:?} vs {sb:?}")));
        }
        match (self.value(a), self.value(b)) {
            (Value::Real(_), Value::Real(_)) | (Value::Complex(_), Value::Complex(_)) => Ok(()),
            _ => Err(Error::ShapeMismatch("cannot mix real and complex operands".into())),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.sum(&[a, b])
    }

    /// Sum aggregation over any number of same-shaped nodes, in the given order.
    pub fn sum(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::ShapeMismatch("sum of nothing".into()))?;
        for &x in &xs[1..] {
            self.same_shape(first, x)?;
        }
        let mut acc = self.value(first).clone();
        for &x in &xs[1..] {
            acc.accumulate(self.value(x));
        }
        let parents = xs.iter().map(|&x| (x.0, Box::new(|adj: &Value| adj.clone()) as Vjp)).collect();
        Ok(self.push(acc, parents))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        let (va, vb) = (self.shared(a), self.shared(b));
        let out = match (va.as_ref(), vb.as_ref()) {
            (Value::Real(x), Value::Real(y)) => Value::Real(x * y),
            (Value::Complex(x), Value::Complex(y)) => Value::Complex(x * y),
            _ => unreachable!(),
        };
        let grad = |other: Rc<Value>| -> Vjp {
            Box::new(move |adj| match (adj, other.as_ref()) {
                (Value::Real(g), Value::Real(o)) => Value::Real(g * o),
                (Value::Complex(g), Value::Complex(o)) => Value::Complex(g * &o.mapv(|z| z.conj())),
                _ => unreachable!(),
            })
        };
        Ok(self.push(out, vec![(a.0, grad(vb)), (b.0, grad(va))]))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = match self.value(x) {
            Value::Real(a) => Value::Real(a * c),
            Value::Complex(a) => Value::Complex(a.mapv(|z| z * c)),
        };
        let f: Vjp = Box::new(move |adj| match adj {
            Value::Real(g) => Value::Real(g * c),
            Value::Complex(g) => Value::Complex(g.mapv(|z| z * c)),
        });
        self.push(out, vec![(x.0, f)])
    }

    /// `x · s` for a real `1 × 1` node `s`.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var> {
        let sv = match self.value(s) {
            Value::Real(a) if a.dim() == (1, 1) => a[[0, 0]],
            other => return Err(Error::ShapeMismatch(format!("scalar factor has shape {:?}", other.shape()))),
        };
        let xv = self.shared(x);
        let out = match xv.as_ref() {
            Value::Real(a) => Value::Real(a * sv),
            Value::Complex(a) => Value::Complex(a.mapv(|z| z * sv)),
        };
        let dx: Vjp = Box::new(move |adj| match adj {
            Value::Real(g) => Value::Real(g * sv),
            Value::Complex(g) => Value::Complex(g.mapv(|z| z * sv)),
        });
        let ds: Vjp = Box::new(move |adj| {
            let v = match (adj, xv.as_ref()) {
                (Value::Real(g), Value::Real(a)) => (g * a).sum(),
                (Value::Complex(g), Value::Complex(a)) => a.iter().zip(g).map(|(x, g)| (x.conj() * g).re).sum(),
                _ => unreachable!(),
            };
            Value::scalar(v)
        });
        Ok(self.push(out, vec![(x.0, dx), (s.0, ds)]))
    }

    /// Column-wise concatenation (the channel axis).
    pub fn concat_channels(&mut self, xs: &[Var]) -> Result<Var> {
        let first = *xs.first().ok_or_else(|| Error::ShapeMismatch("concat of nothing".into()))?;
        let rows = self.value(first).shape().0;
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let (r, c) = self.value(x).shape();
            if r != rows {
                return Err(Error::ShapeMismatch(format!("concat rows {r} vs {rows}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let out = match self.value(first) {
            Value::Real(_) => {
                let mut o = Array2::zeros((rows, total));
                let mut c0 = 0;
                for (&x, &w) in xs.iter().zip(&widths) {
                    let a = self.value(x).as_real().ok_or_else(|| Error::ShapeMismatch("mixed concat".into()))?;
                    o.slice_mut(s![.., c0..c0 + w]).assign(a);
                    c0 += w;
                }
                Value::Real(o)
            }
            Value::Complex(_) => {
                let mut o = Array2::zeros((rows, total));
                let mut c0 = 0;
                for (&x, &w) in xs.iter().zip(&widths) {
                    let a = self.value(x).as_complex().ok_or_else(|| Error::ShapeMismatch("mixed concat".into()))?;
                    o.slice_mut(s![.., c0..c0 + w]).assign(a);
                    c0 += w;
                }
                Value::Complex(o)
            }
        };
        let mut parents = Vec::with_capacity(xs.len());
        let mut c0 = 0;
        for (&x, &w) in xs.iter().zip(&widths) {
            let start = c0;
            let f: Vjp = Box::new(move |adj| match adj {
                Value::Real(g) => Value::Real(g.slice(s![.., start..start + w]).to_owned()),
                Value::Complex(g) => Value::Complex(g.slice(s![.., start..start + w]).to_owned()),
            });
            parents.push((x.0, f));
            c0 += w;
        }
        Ok(self.push(out, parents))
    }

    /// Channel mixing `x · w` of complex data by real weights.
    pub fn mix(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.shared(x), self.shared(w));
        let (xa, wa) = match (xv.as_ref(), wv.as_ref()) {
            (Value::Complex(a), Value::Real(b)) => (a, b),
            _ => return Err(Error::ShapeMismatch("mix expects complex data and real weights".into())),
        };
        if xa.ncols() != wa.nrows() {
            return Err(Error::ChannelMismatch { expected: wa.nrows(), found: xa.ncols() });
        }
        let out = Value::Complex(xa.dot(&wa.mapv(|v| Complex64::new(v, 0.0))));
        let w2 = Rc::clone(&wv);
        let dx: Vjp = Box::new(move |adj| {
            let wt = real(&w2).t().mapv(|v| Complex64::new(v, 0.0));
            Value::Complex(complex(adj).dot(&wt))
        });
        let x2 = Rc::clone(&xv);
        let dw: Vjp = Box::new(move |adj| {
            let xh = complex(&x2).t().mapv(|z| z.conj());
            Value::Real(xh.dot(complex(adj)).mapv(|z| z.re))
        });
        Ok(self.push(out, vec![(x.0, dx), (w.0, dw)]))
    }

    /// Real matrix product.
    pub fn matmul(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.shared(x), self.shared(w));
        let (xa, wa) = match (xv.as_ref(), wv.as_ref()) {
            (Value::Real(a), Value::Real(b)) => (a, b),
            _ => return Err(Error::ShapeMismatch("matmul expects real operands".into())),
        };
        if xa.ncols() != wa.nrows() {
            return Err(Error::ShapeMismatch(format!("matmul {:?} · {:?}", xa.dim(), wa.dim())));
        }
        let out = Value::Real(xa.dot(wa));
        let w2 = Rc::clone(&wv);
        let dx: Vjp = Box::new(move |adj| Value::Real(real(adj).dot(&real(&w2).t())));
        let x2 = Rc::clone(&xv);
        let dw: Vjp = Box::new(move |adj| Value::Real(real(&x2).t().dot(real(adj))));
        Ok(self.push(out, vec![(x.0, dx), (w.0, dw)]))
    }

    /// `x + b` with a `1 × m` bias broadcast over rows.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xa, ba) = match (self.value(x), self.value(b)) {
            (Value::Real(a), Value::Real(b)) => (a, b),
            _ => return Err(Error::ShapeMismatch("add_bias expects real operands".into())),
        };
        if ba.nrows() != 1 || ba.ncols() != xa.ncols() {
            return Err(Error::ShapeMismatch(format!("bias {:?} for {:?}", ba.dim(), xa.dim())));
        }
        let out = Value::Real(xa + ba);
        let dx: Vjp = Box::new(|adj| adj.clone());
        let db: Vjp = Box::new(|adj| Value::Real(real(adj).sum_axis(Axis(0)).insert_axis(Axis(0))));
        Ok(self.push(out, vec![(x.0, dx), (b.0, db)]))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        let y = self
            .value(x)
            .as_real()
            .ok_or_else(|| Error::ShapeMismatch("tanh expects a real operand".into()))?
            .mapv(f64::tanh);
        let y2 = Rc::new(y.clone());
        let dx: Vjp = Box::new(move |adj| Value::Real(real(adj) * &y2.mapv(|t| 1.0 - t * t)));
        Ok(self.push(Value::Real(y), vec![(x.0, dx)]))
    }

    pub fn to_complex(&mut self, x: Var) -> Result<Var> {
        let a = self
            .value(x)
            .as_real()
            .ok_or_else(|| Error::ShapeMismatch("to_complex expects a real operand".into()))?;
        let out = Value::Complex(a.mapv(|v| Complex64::new(v, 0.0)));
        let dx: Vjp = Box::new(|adj| Value::Real(complex(adj).mapv(|z| z.re)));
        Ok(self.push(out, vec![(x.0, dx)]))
    }

    /// Flattens a complex `r × m` node to a real `1 × 2rm` row: real parts
    /// then imaginary parts, each row-major.
    pub fn split_complex(&mut self, x: Var) -> Result<Var> {
        let a = self
            .value(x)
            .as_complex()
            .ok_or_else(|| Error::ShapeMismatch("split_complex expects a complex operand".into()))?;
        let (r, m) = a.dim();
        let n = r * m;
        let mut out = Array2::zeros((1, 2 * n));
        for (k, z) in a.iter().enumerate() {
            out[[0, k]] = z.re;
            out[[0, n + k]] = z.im;
        }
        let dx: Vjp = Box::new(move |adj| {
            let g = real(adj);
            Value::Complex(Array2::from_shape_fn((r, m), |(i, j)| {
                let k = i * m + j;
                Complex64::new(g[[0, k]], g[[0, n + k]])
            }))
        });
        Ok(self.push(Value::Real(out), vec![(x.0, dx)]))
    }

    /// `out[i, t] = x[i, t] · g[0, t]` for complex `x` and a real `1 × m` gate.
    pub fn scale_channels(&mut self, x: Var, g: Var) -> Result<Var> {
        let (xv, gv) = (self.shared(x), self.shared(g));
        let (xa, ga) = match (xv.as_ref(), gv.as_ref()) {
            (Value::Complex(a), Value::Real(b)) => (a, b),
            _ => return Err(Error::ShapeMismatch("scale_channels expects complex data and a real gate".into())),
        };
        if ga.nrows() != 1 || ga.ncols() != xa.ncols() {
            return Err(Error::ChannelMismatch { expected: xa.ncols(), found: ga.ncols() });
        }
        let gc = ga.mapv(|v| Complex64::new(v, 0.0));
        let out = Value::Complex(xa * &gc);
        let dx: Vjp = Box::new(move |adj| Value::Complex(complex(adj) * &gc));
        let dg: Vjp = Box::new(move |adj| {
            let a = complex(&xv);
            let prod = a.mapv(|z| z.conj()) * complex(adj);
            Value::Real(prod.mapv(|z| z.re).sum_axis(Axis(0)).insert_axis(Axis(0)))
        });
        Ok(self.push(out, vec![(x.0, dx), (g.0, dg)]))
    }

    /// Sum of all entries of a real node, as a `1 × 1` scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let a = self
            .value(x)
            .as_real()
            .ok_or_else(|| Error::ShapeMismatch("sum_all expects a real operand".into()))?;
        let shape = a.dim();
        let out = Value::scalar(a.sum());
        let dx: Vjp = Box::new(move |adj| Value::Real(Array2::from_elem(shape, real(adj)[[0, 0]])));
        Ok(self.push(out, vec![(x.0, dx)]))
    }

    /// Channel-wise CG product with a constant tensor; gradients reach only
    /// the two operands.
    pub fn cg_product(&mut self, cg: &Arc<CgTensor>, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.shared(a), self.shared(b));
        let (aa, ba) = match (av.as_ref(), bv.as_ref()) {
            (Value::Complex(x), Value::Complex(y)) => (x, y),
            _ => return Err(Error::ShapeMismatch("cg_product expects complex operands".into())),
        };
        let out = Value::Complex(cg.product(aa, ba)?);
        let (a_cols, b_cols) = (aa.ncols(), ba.ncols());
        let (cg1, b1) = (Arc::clone(cg), Rc::clone(&bv));
        let da: Vjp = Box::new(move |adj| Value::Complex(cg1.product_adjoint_left(a_cols, complex(&b1), complex(adj))));
        let (cg2, a2) = (Arc::clone(cg), Rc::clone(&av));
        let db: Vjp =
            Box::new(move |adj| Value::Complex(cg2.product_adjoint_right(complex(&a2), b_cols, complex(adj))));
        Ok(self.push(out, vec![(a.0, da), (b.0, db)]))
    }

    /// `positions[to] - positions[from]` as a real `1 × 3` row.
    pub fn displacement(&mut self, positions: Var, from: usize, to: usize) -> Result<Var> {
        let p = self
            .value(positions)
            .as_real()
            .ok_or_else(|| Error::ShapeMismatch("positions must be real".into()))?;
        if p.ncols() != 3 || from >= p.nrows() || to >= p.nrows() {
            return Err(Error::ShapeMismatch(format!("displacement {from}->{to} in {:?}", p.dim())));
        }
        let shape = p.dim();
        let out = (&p.row(to) - &p.row(from)).insert_axis(Axis(0));
        let dp: Vjp = Box::new(move |adj| {
            let g = real(adj);
            let mut o = Array2::zeros(shape);
            for k in 0..3 {
                o[[to, k]] += g[[0, k]];
                o[[from, k]] -= g[[0, k]];
            }
            Value::Real(o)
        });
        Ok(self.push(Value::Real(out), vec![(positions.0, dp)]))
    }

    fn vector3(&self, v: Var) -> Result<[f64; 3]> {
        match self.value(v) {
            Value::Real(a) if a.dim() == (1, 3) => Ok([a[[0, 0]], a[[0, 1]], a[[0, 2]]]),
            other => Err(Error::ShapeMismatch(format!("expected a real 1×3 vector, got {:?}", other.shape()))),
        }
    }

    /// `Y^l(x̂)` as a complex `(2l+1) × 1` column with its analytic Jacobian.
    pub fn spherical_harmonic(&mut self, x: Var, l: u32) -> Result<Var> {
        let xv = self.vector3(x)?;
        let (values, jac) = harmonic_with_jacobian(xv, l)?;
        let out = Array2::from_shape_vec((values.len(), 1), values).expect("column");
        let dx: Vjp = Box::new(move |adj| {
            let g = complex(adj);
            let mut o = Array2::zeros((1, 3));
            for (m, row) in jac.iter().enumerate() {
                for k in 0..3 {
                    o[[0, k]] += (row[k].conj() * g[[m, 0]]).re;
                }
            }
            Value::Real(o)
        });
        Ok(self.push(Value::Complex(out), vec![(x.0, dx)]))
    }

    /// Gaussian radial basis times the cosine cutoff envelope, `1 × count`.
    pub fn radial_basis(&mut self, x: Var, count: usize, cutoff: f64) -> Result<Var> {
        let xv = self.vector3(x)?;
        let r = norm3(xv);
        let (vals, dvals) = radial_basis_with_derivative(r, count, cutoff);
        let out = Array2::from_shape_vec((1, count), vals).expect("row");
        let dx: Vjp = Box::new(move |adj| {
            let g = real(adj);
            let dr: f64 = (0..count).map(|c| g[[0, c]] * dvals[c]).sum();
            Value::Real(Array2::from_shape_fn((1, 3), |(_, k)| dr * xv[k] / r))
        });
        Ok(self.push(Value::Real(out), vec![(x.0, dx)]))
    }

    /// Cosine cutoff envelope of `|x|`, `1 × 1`.
    pub fn envelope(&mut self, x: Var, cutoff: f64) -> Result<Var> {
        let xv = self.vector3(x)?;
        let r = norm3(xv);
        let (f, df) = envelope_with_derivative(r, cutoff);
        let dx: Vjp = Box::new(move |adj| {
            let g = real(adj)[[0, 0]];
            Value::Real(Array2::from_shape_fn((1, 3), |(_, k)| g * df * xv[k] / r))
        });
        Ok(self.push(Value::scalar(f), vec![(x.0, dx)]))
    }

    /// Reverse accumulation from a real scalar seed, visiting nodes in
    /// strictly decreasing id order.
    pub fn backward(&self, seed: Var) -> Result<Gradients> {
        match self.value(seed) {
            Value::Real(a) if a.dim() == (1, 1) => {}
            other => return Err(Error::NonScalarSeed(other.shape())),
        }
        let mut adjoints: Vec<Option<Value>> = vec![None; seed.0 + 1];
        adjoints[seed.0] = Some(Value::scalar(1.0));
        for id in (0..=seed.0).rev() {
            let Some(adj) = adjoints[id].take() else { continue };
            for (pid, vjp) in &self.nodes[id].parents {
                let contrib = vjp(&adj);
                match &mut adjoints[*pid] {
                    Some(acc) => acc.accumulate(&contrib),
                    slot @ None => {
                        let mut z = self.nodes[*pid].value.zeros_like();
                        z.accumulate(&contrib);
                        *slot = Some(z);
                    }
                }
            }
            adjoints[id] = Some(adj);
        }
        Ok(Gradients { adjoints })
    }
}

fn norm3(x: [f64; 3]) -> f64 {
    (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()
}

/// `0.5 (cos(π r / r_c) + 1)` inside the cutoff, zero outside, and its derivative.
pub fn envelope_with_derivative(r: f64, cutoff: f64) -> (f64, f64) {
    if r >= cutoff {
        return (0.0, 0.0);
    }
    let t = std::f64::consts::PI * r / cutoff;
    (0.5 * (t.cos() + 1.0), -0.5 * std::f64::consts::PI / cutoff * t.sin())
}

/// Gaussians centred at `c · r_c / n` for `c = 1..=n`, width equal to the
/// spacing, each multiplied by the cutoff envelope; with `d/dr`.
pub fn radial_basis_with_derivative(r: f64, count: usize, cutoff: f64) -> (Vec<f64>, Vec<f64>) {
    let spacing = cutoff / count as f64;
    let (f, df) = envelope_with_derivative(r, cutoff);
    let mut vals = Vec::with_capacity(count);
    let mut dvals = Vec::with_capacity(count);
    for c in 0..count {
        let mu = (c + 1) as f64 * spacing;
        let u = (r - mu) / spacing;
        let g = (-0.5 * u * u).exp();
        let dg = -u / spacing * g;
        vals.push(g * f);
        dvals.push(dg * f + g * df);
    }
    (vals, dvals)
}
