//! Named parameter storage with optimizer group tags and freeze flags.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt;

use ndarray::IxDyn;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autograd::{Gradients, Graph, Tensor, Var};

/// Learning-rate group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroupTag {
    /// Weights of the image and text encoders that a pre-trained checkpoint
    /// would supply.
    Pretrained,
    /// Modules introduced for the video task (temporal heads, classifiers).
    New,
}

impl ParamGroupTag {
    pub fn as_str(self) -> &'static str {
        match self {
            ParamGroupTag::Pretrained => "pretrained",
            ParamGroupTag::New => "new",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "pretrained" => Some(ParamGroupTag::Pretrained),
            "new" => Some(ParamGroupTag::New),
            _ => None,
        }
    }
}

impl fmt::Display for ParamGroupTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which part of the model a parameter lives in. Freezing works per
/// component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Component {
    TextEncoder,
    VisionEncoder,
    TemporalHead,
    Temperature,
    Classifier,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub tag: ParamGroupTag,
    pub component: Component,
    pub frozen: bool,
}

/// Rounds every entry to the nearest `f32`. Stored parameters are always
/// `f32`-representable so that checkpoints round-trip exactly.
pub fn round_to_f32(t: &mut Tensor) {
    t.mapv_inplace(|v| v as f32 as f64);
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(
        &mut self,
        name: impl Into<String>,
        mut value: Tensor,
        tag: ParamGroupTag,
        component: Component,
    ) -> ParamId {
        let name = name.into();
        assert!(
            !self.index.contains_key(&name),
            "duplicate parameter name {name}"
        );
        round_to_f32(&mut value);
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Param {
            name,
            value,
            tag,
            component,
            frozen: false,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied().map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Freezes every parameter of the given component.
    pub fn freeze_component(&mut self, component: Component) {
        for p in self.params.iter_mut().filter(|p| p.component == component) {
            p.frozen = true;
        }
    }

    pub fn set_tag(&mut self, component: Component, tag: ParamGroupTag) {
        for p in self.params.iter_mut().filter(|p| p.component == component) {
            p.tag = tag;
        }
    }
}

/// Initialisers. All draw from the supplied RNG so model construction is
/// reproducible from a seed.
pub fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("valid std");
    Tensor::from_shape_fn(IxDyn(shape), |_| dist.sample(rng))
}

pub fn zeros(shape: &[usize]) -> Tensor {
    Tensor::zeros(IxDyn(shape))
}

pub fn ones(shape: &[usize]) -> Tensor {
    Tensor::ones(IxDyn(shape))
}

/// Binds a [`ParamStore`] to a [`Graph`] for one forward pass. Each
/// parameter becomes a leaf the first time it is used; frozen parameters
/// become constants so no gradient is computed for them.
pub struct ParamScope<'g, 's> {
    graph: &'g Graph,
    store: &'s ParamStore,
    bound: RefCell<Vec<Option<Var<'g>>>>,
}

impl<'g, 's> ParamScope<'g, 's> {
    pub fn new(graph: &'g Graph, store: &'s ParamStore) -> Self {
        Self {
            graph,
            store,
            bound: RefCell::new(vec![None; store.len()]),
        }
    }

    pub fn graph(&self) -> &'g Graph {
        self.graph
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn param(&self, id: ParamId) -> Var<'g> {
        if let Some(v) = self.bound.borrow()[id.0] {
            return v;
        }
        let p = &self.store.params[id.0];
        let var = if p.frozen {
            self.graph.constant(p.value.clone())
        } else {
            self.graph.leaf(p.value.clone())
        };
        self.bound.borrow_mut()[id.0] = Some(var);
        var
    }

    pub fn constant(&self, value: Tensor) -> Var<'g> {
        self.graph.constant(value)
    }

    /// Parameter gradients after a backward pass. Unused and frozen
    /// parameters get `None`.
    pub fn collect(&self, grads: &mut Gradients) -> Vec<Option<Tensor>> {
        self.bound
            .borrow()
            .iter()
            .map(|slot| slot.and_then(|v| grads.take(v)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn stored_values_are_f32_representable() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store = ParamStore::new();
        let id = store.add(
            "w",
            normal(&[4, 4], 1.0, &mut rng),
            ParamGroupTag::New,
            Component::Classifier,
        );
        assert!(store
            .get(id)
            .value
            .iter()
            .all(|&v| v == v as f32 as f64));
    }

    #[test]
    fn frozen_params_bind_as_constants() {
        let mut store = ParamStore::new();
        let a = store.add("a", ones(&[2]), ParamGroupTag::Pretrained, Component::TextEncoder);
        let b = store.add("b", ones(&[2]), ParamGroupTag::New, Component::TemporalHead);
        store.freeze_component(Component::TextEncoder);
        let graph = Graph::new();
        let scope = ParamScope::new(&graph, &store);
        let y = scope.param(a).mul(scope.param(b)).sum();
        let mut grads = graph.backward(y);
        let collected = scope.collect(&mut grads);
        assert!(collected[a.index()].is_none());
        assert_eq!(collected[b.index()].as_ref().unwrap().sum(), 2.0);
    }

    #[test]
    #[should_panic(expected = "duplicate parameter")]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::new();
        store.add("x", zeros(&[1]), ParamGroupTag::New, Component::Classifier);
        store.add("x", zeros(&[1]), ParamGroupTag::New, Component::Classifier);
    }
}
