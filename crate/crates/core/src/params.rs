//! Named, ordered parameter tensors and their registration on a tape.

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::rng::{self, Rng64};
use crate::tensor::{Gradients, Tape, Tensor, Var};

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    entries: IndexMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.entries.insert(name.into(), value);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor> {
        self.entries
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Tensor::len).sum()
    }

    /// Every value rounded through `f32`, i.e. exactly what a checkpoint
    /// stores.
    pub fn round_f32(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), v.round_f32()))
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            entries: self
                .entries
                .iter()
                .map(|(k, v)| (k.clone(), Tensor::zeros(v.shape())))
                .collect(),
        }
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v.map(&f))).collect(),
        }
    }

    /// Registers every tensor on `tape`, as trainable leaves or constants.
    pub fn register(&self, tape: &Tape, trainable: bool) -> ParamVars {
        let vars = self
            .entries
            .iter()
            .map(|(k, v)| {
                let var = if trainable {
                    tape.leaf(v.clone())
                } else {
                    tape.constant(v.clone())
                };
                (k.clone(), var)
            })
            .collect();
        ParamVars { vars }
    }
}

/// Tape handles of a registered [`ParamSet`].
pub struct ParamVars {
    vars: IndexMap<String, Var>,
}

impl ParamVars {
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Self {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Config(format!("missing parameter {name}")))
    }

    /// Collects gradients in parameter order; unreached parameters get zeros.
    pub fn gradients(&self, grads: &mut Gradients, like: &ParamSet) -> Result<ParamSet> {
        let mut out = ParamSet::new();
        for (name, value) in like.iter() {
            let g = grads
                .take(self.get(name)?)
                .unwrap_or_else(|| Tensor::zeros(value.shape()));
            out.insert(name, g);
        }
        Ok(out)
    }
}

/// `U(-bound, bound)` entries.
pub fn uniform_init(rng: &mut Rng64, shape: &[usize], bound: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng::uniform(rng, -bound, bound))
}
