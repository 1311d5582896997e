use std::collections::BTreeMap;

use rand::Rng;

use crate::autograd::{Grads, Tensor, Var};
use crate::{Error, Result};

/// Named trainable tensors, iterated in name order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    tensors: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.tensors.insert(name.into(), tensor);
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.tensors.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total scalar count.
    pub fn num_values(&self) -> usize {
        self.tensors.values().map(Tensor::numel).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.values().all(Tensor::all_finite)
    }

    /// Expose every tensor to a graph, as trainable leaves or as constants.
    pub fn bind(&self, trainable: bool) -> Bound {
        let make = if trainable { Var::leaf } else { Var::constant };
        Bound {
            vars: self
                .tensors
                .iter()
                .map(|(k, t)| (k.clone(), make(t.clone())))
                .collect(),
        }
    }

    /// Verify that `other` has exactly the same names and shapes.
    pub fn check_layout(&self, other: &ParamSet) -> Result<()> {
        for (name, t) in &self.tensors {
            match other.get(name) {
                None => return Err(Error::Config(format!("missing parameter `{name}`"))),
                Some(o) if o.shape() != t.shape() => {
                    return Err(Error::Config(format!(
                        "parameter `{name}` has shape {:?}, expected {:?}",
                        o.shape(),
                        t.shape()
                    )))
                }
                _ => {}
            }
        }
        if let Some(extra) = other.tensors.keys().find(|k| !self.tensors.contains_key(*k)) {
            return Err(Error::Config(format!("unexpected parameter `{extra}`")));
        }
        Ok(())
    }

    /// Parameters whose name starts with `prefix`.
    pub fn subset(&self, prefix: &str) -> ParamSet {
        ParamSet {
            tensors: self
                .tensors
                .iter()
                .filter(|(k, _)| k.starts_with(prefix))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn extend(&mut self, other: ParamSet) {
        self.tensors.extend(other.tensors);
    }
}

/// Parameters bound into one graph.
#[derive(Clone, Debug)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Bind existing graph variables by name.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    /// Panics when the name is unknown; layouts are validated on load.
    pub fn get(&self, name: &str) -> &Var {
        self.vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` is not bound"))
    }

    /// Gradient for every bound parameter (zeros where unused).
    pub fn grads(&self, grads: &Grads) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, v)| (k.clone(), grads.get_or_zeros(v)))
            .collect()
    }
}

/// Deterministic initialisers.
pub(crate) struct Init<'a, R: Rng> {
    pub rng: &'a mut R,
    pub params: ParamSet,
}

impl<'a, R: Rng> Init<'a, R> {
    pub fn new(rng: &'a mut R) -> Self {
        Self {
            rng,
            params: ParamSet::new(),
        }
    }

    /// Uniform in `±1/√fan_in`, fan-in being the product of all but the
    /// leading axis.
    pub fn weight(&mut self, name: String, shape: &[usize]) {
        let fan_in: usize = shape[1..].iter().product::<usize>().max(1);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..bound)).collect();
        self.params.insert(name, Tensor::new(shape.to_vec(), data));
    }

    #[cfg(test)]
    pub fn normal(&mut self, name: String, shape: &[usize], std: f64) {
        use rand_distr::{Distribution, StandardNormal};
        let n = shape.iter().product();
        let data = (0..n)
            .map(|_| {
                let v: f64 = StandardNormal.sample(self.rng);
                v * std
            })
            .collect();
        self.params.insert(name, Tensor::new(shape.to_vec(), data));
    }

    pub fn zeros(&mut self, name: String, shape: &[usize]) {
        self.params.insert(name, Tensor::zeros(shape));
    }

    pub fn value(&mut self, name: String, value: f64) {
        self.params.insert(name, Tensor::new(vec![1], vec![value]));
    }

    /// Weight plus zero bias for a `[out, in, k]` convolution.
    pub fn conv(&mut self, prefix: &str, out: usize, input: usize, k: usize, bias: bool) {
        self.weight(format!("{prefix}.weight"), &[out, input, k]);
        if bias {
            self.zeros(format!("{prefix}.bias"), &[out]);
        }
    }

    pub fn lstm(&mut self, prefix: &str, input: usize, hidden: usize) {
        let bound = 1.0 / (hidden as f64).sqrt();
        for (name, cols) in [("w_ih", input), ("w_hh", hidden)] {
            let data = (0..4 * hidden * cols)
                .map(|_| self.rng.random_range(-bound..bound))
                .collect();
            self.params
                .insert(format!("{prefix}.{name}"), Tensor::new(vec![4 * hidden, cols], data));
        }
        // forget-gate bias starts at one
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        self.params.insert(format!("{prefix}.bias"), Tensor::new(vec![4 * hidden], b));
    }
}
