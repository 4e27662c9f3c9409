//! Named trainable arrays.

use indexmap::IndexMap;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{AlignError, Result};
use crate::kg::fnv1a;
use crate::tape::{Tape, Var};

/// Insertion-ordered map of parameter name to array. Vectors are stored as
/// `1×d` (biases) or `d×1` (attention vectors).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    arrays: IndexMap<String, Array2<f64>>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Array2<f64>) {
        self.arrays.insert(name.into(), value);
    }

    /// Registers a Glorot-uniform matrix seeded by `seed` and the name.
    pub fn insert_glorot(&mut self, name: &str, rows: usize, cols: usize, seed: u64) {
        let bound = (6.0 / (rows + cols) as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(name));
        let value = Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..bound));
        self.insert(name, value);
    }

    pub fn insert_zeros(&mut self, name: &str, rows: usize, cols: usize) {
        self.insert(name, Array2::zeros((rows, cols)));
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.arrays.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        self.arrays.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.arrays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arrays.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Array2<f64>)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Array2<f64>)> {
        self.arrays.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.arrays.values().map(Array2::len).sum()
    }

    /// Errors unless `name` exists with exactly `shape`.
    pub fn expect_shape(&self, name: &str, shape: (usize, usize)) -> Result<()> {
        match self.arrays.get(name) {
            Some(a) if a.dim() == shape => Ok(()),
            Some(a) => Err(AlignError::Shape {
                op: "parameter",
                detail: format!("{name} has shape {:?}, expected {shape:?}", a.dim()),
            }),
            None => Err(AlignError::Shape {
                op: "parameter",
                detail: format!("{name} is not registered"),
            }),
        }
    }

    /// Places every array on `tape` as a leaf.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let vars = self
            .arrays
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect();
        BoundParams { vars }
    }
}

/// Tape handles for a [`ParameterStore`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    /// # Panics
    /// If `name` was not registered.
    pub fn var(&self, name: &str) -> Var {
        match self.vars.get(name) {
            Some(v) => *v,
            None => panic!("parameter {name} is not bound"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}
