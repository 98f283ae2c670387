//! Named trainable arrays with a stable enumeration order.

use std::collections::HashMap;
use std::ops::Index;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::autograd::{Tape, Var};
use crate::tensor::{Shape, Tensor};

/// Position of a parameter inside its [`ParameterStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub name: String,
    /// Logical shape: `[c]` for vectors, `[out, in, kh, kw]` for kernels.
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

impl Parameter {
    pub fn numel(&self) -> usize {
        self.values.len()
    }

    /// The 4-D layout used in computation: vectors become `[1, c, 1, 1]`.
    pub fn tensor_shape(&self) -> Shape {
        match self.shape[..] {
            [c] => Shape::new(1, c, 1, 1),
            [a, b, c, d] => Shape::new(a, b, c, d),
            _ => unreachable!("parameters are rank 1 or rank 4"),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.tensor_shape(), self.values.clone()).expect("parameter shape")
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StoreError {
    #[error("duplicate parameter name {0:?}")]
    Duplicate(String),
    #[error("parameter {name:?} must be rank 1 or 4 with non-zero dims, got {shape:?}")]
    BadShape { name: String, shape: Vec<usize> },
}

/// Ordered collection of uniquely named parameters. Weight-shared modules
/// register their arrays once and reference them by [`ParamId`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterStore {
    params: Vec<Parameter>,
    index: HashMap<String, usize>,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<ParamId, StoreError> {
        let name = name.into();
        if !(shape.len() == 1 || shape.len() == 4) || shape.contains(&0) {
            return Err(StoreError::BadShape { name, shape });
        }
        assert_eq!(shape.iter().product::<usize>(), values.len(), "values for {name}");
        if self.index.contains_key(&name) {
            return Err(StoreError::Duplicate(name));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter { name, shape, values });
        Ok(ParamId(self.params.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(Parameter::numel).sum()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn by_name(&self, name: &str) -> Option<&Parameter> {
        self.id(name).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Sets every parameter to `value`.
    pub fn fill(&mut self, value: f64) {
        for p in &mut self.params {
            p.values.fill(value);
        }
    }

    /// Rounds every value to the nearest `f32`, the precision of weight files.
    pub fn round_to_f32(&mut self) {
        for p in &mut self.params {
            for v in &mut p.values {
                *v = *v as f32 as f64;
            }
        }
    }

    /// Materializes every parameter on `tape`, as differentiable leaves when
    /// the tape records.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundParams<'t> {
        BoundParams {
            vars: self.params.iter().map(|p| tape.leaf(p.to_tensor())).collect(),
        }
    }
}

/// Parameters of one store placed on a tape, indexed by [`ParamId`].
pub struct BoundParams<'t> {
    vars: Vec<Var<'t>>,
}

impl<'t> BoundParams<'t> {
    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }
}

impl<'t> Index<ParamId> for BoundParams<'t> {
    type Output = Var<'t>;

    fn index(&self, id: ParamId) -> &Var<'t> {
        &self.vars[id.0]
    }
}

/// Registers parameters with their initial values.
///
/// Convolution kernels use Kaiming-uniform fan-in initialization with bound
/// `1 / sqrt(fan_in)`; samples are drawn as `f32` so a freshly built store
/// survives a weight-file round trip bit for bit.
pub struct ParamRegistry {
    store: ParameterStore,
    rng: ChaCha8Rng,
}

impl ParamRegistry {
    pub fn new(seed: u64) -> Self {
        Self {
            store: ParameterStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn finish(self) -> ParameterStore {
        self.store
    }

    pub fn store(&self) -> &ParameterStore {
        &self.store
    }

    fn add(&mut self, name: String, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        self.store
            .add(name, shape, values)
            .unwrap_or_else(|e| panic!("model layout bug: {e}"))
    }

    pub fn constant(&mut self, name: impl Into<String>, shape: Vec<usize>, value: f64) -> ParamId {
        let n = shape.iter().product();
        self.add(name.into(), shape, vec![value; n])
    }

    pub fn explicit(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> ParamId {
        self.add(name.into(), shape, values)
    }

    /// `[out, in_per_group, k, k]` kernel with Kaiming-uniform values.
    pub fn kaiming(&mut self, name: impl Into<String>, out: usize, in_per_group: usize, k: usize) -> ParamId {
        let fan_in = (in_per_group * k * k) as f32;
        let bound = 1.0 / fan_in.sqrt();
        let values = (0..out * in_per_group * k * k)
            .map(|_| self.rng.gen_range(-bound..bound) as f64)
            .collect();
        self.add(name.into(), vec![out, in_per_group, k, k], values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParameterStore::new();
        s.add("a", vec![2], vec![0.0; 2]).unwrap();
        assert_eq!(s.add("a", vec![1], vec![0.0]), Err(StoreError::Duplicate("a".into())));
        assert!(matches!(s.add("b", vec![2, 2], vec![0.0; 4]), Err(StoreError::BadShape { .. })));
    }

    #[test]
    fn kaiming_values_are_f32_exact_and_bounded() {
        let mut r = ParamRegistry::new(7);
        let id = r.kaiming("w", 4, 3, 3);
        let store = r.finish();
        let p = store.get(id);
        let bound = 1.0 / 27f64.sqrt();
        assert!(p.values.iter().all(|&v| v.abs() <= bound + 1e-7 && v == v as f32 as f64));
        assert_eq!(p.tensor_shape(), Shape::new(4, 3, 3, 3));
    }
}
