use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::Mat;
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named trainable matrices in registration order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Mat>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Mat) -> ParamId {
        assert!(self.id(name).is_none(), "duplicate parameter `{name}`");
        self.names.push(name.to_string());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    /// Uniform in `[-bound, bound]`.
    pub fn add_uniform(&mut self, name: &str, rows: usize, cols: usize, bound: f64, rng: &mut Rng) -> ParamId {
        let data = (0..rows * cols).map(|_| rng.range(-bound, bound)).collect();
        self.add(name, Mat::from_vec(rows, cols, data))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn get(&self, id: ParamId) -> &Mat {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Mat {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Mat)> {
        self.names.iter().map(|n| n.as_str()).zip(&self.values)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }
}

/// Per-parameter gradients; `None` where the loss does not depend on it.
#[derive(Clone, Debug)]
pub struct Grads(pub(crate) Vec<Option<Mat>>);

impl Grads {
    pub fn get(&self, id: ParamId) -> Option<&Mat> {
        self.0.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.0.iter().flatten().map(|g| g.sum_squares()).sum())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|g| g.is_finite())
    }
}
