use std::collections::HashMap;

use ndarray::Array2;
use rand::Rng;

use crate::autodiff::{Tape, Var};

/// Ordered named real arrays; order fixes flattening and tape binding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    values: Vec<Array2<f64>>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> ParamSet {
        ParamSet::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: Array2<f64>) -> usize {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.names.len());
        self.names.push(name);
        self.values.push(value);
        self.names.len() - 1
    }

    /// Uniform in `[-s, s]` with `s = rows^{-1/2}` unless `fan_in` is given.
    pub fn push_uniform<R: Rng + ?Sized>(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize),
        fan_in: Option<usize>,
        rng: &mut R,
    ) -> usize {
        let s = (fan_in.unwrap_or(shape.0).max(1) as f64).powf(-0.5);
        let v = Array2::from_shape_simple_fn(shape, || rng.random_range(-s..=s));
        self.push(name, v)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.index_of(name).map(|i| &self.values[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.index_of(name).map(move |i| &mut self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn values(&self) -> &[Array2<f64>] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.values
    }

    /// Total number of scalars.
    pub fn count(&self) -> usize {
        self.values.iter().map(|v| v.len()).sum()
    }

    /// Records every array as a tape leaf, in order.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound { vars: self.values.iter().map(|v| tape.leaf_real(v.clone())).collect(), index: self.index.clone() }
    }
}

/// Tape leaves for a [`ParamSet`], looked up by name.
#[derive(Clone, Debug)]
pub struct Bound {
    pub vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        self.vars[*self.index.get(name).unwrap_or_else(|| panic!("unknown parameter {name}"))]
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }
}
