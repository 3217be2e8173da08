//! Adaptive moment estimation with decoupled weight decay and two
//! learning-rate groups.

use crate::autograd::Tensor;
use crate::config::OptimizerConfig;
use crate::params::{round_to_f32, ParamGroupTag, ParamStore};

/// Only matrices and higher-rank tensors decay; biases, norm gains and the
/// temperature do not.
pub fn decays(value: &Tensor) -> bool {
    value.ndim() >= 2
}

#[derive(Clone, Debug, Default)]
pub struct AdamW {
    first: Vec<Option<Tensor>>,
    second: Vec<Option<Tensor>>,
    steps: u64,
}

impl AdamW {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            first: vec![None; store.len()],
            second: vec![None; store.len()],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update. `grads` is indexed like the store; frozen
    /// parameters and `None` entries are left untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: Vec<Option<Tensor>>, lr: (f64, f64), cfg: &OptimizerConfig) {
        self.steps += 1;
        let t = self.steps as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for ((param, grad), (m, v)) in store
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            let Some(g) = grad else { continue };
            if param.frozen {
                continue;
            }
            let lr = match param.tag {
                ParamGroupTag::Pretrained => lr.0,
                ParamGroupTag::New => lr.1,
            };
            let m = m.get_or_insert_with(|| Tensor::zeros(g.raw_dim()));
            let v = v.get_or_insert_with(|| Tensor::zeros(g.raw_dim()));
            m.zip_mut_with(&g, |m, &g| *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g);
            v.zip_mut_with(&g, |v, &g| *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g);
            let decay = if decays(&param.value) { cfg.weight_decay } else { 0.0 };
            ndarray::Zip::from(&mut param.value).and(&*m).and(&*v).for_each(|p, &m, &v| {
                let update = (m / bias1) / ((v / bias2).sqrt() + cfg.eps);
                *p -= lr * (update + decay * *p);
            });
            round_to_f32(&mut param.value);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ones, zeros, Component};

    #[test]
    fn group_learning_rates_apply_per_tag() {
        let mut store = ParamStore::new();
        let a = store.add("pre", zeros(&[3, 2]), ParamGroupTag::Pretrained, Component::VisionEncoder);
        let b = store.add("new", zeros(&[3, 2]), ParamGroupTag::New, Component::TemporalHead);
        let cfg = OptimizerConfig::default();
        let mut opt = AdamW::new(&store);
        let grads = vec![Some(ones(&[3, 2])), Some(ones(&[3, 2]))];
        opt.step(&mut store, grads, (cfg.base_lr_pretrained, cfg.base_lr_new), &cfg);
        let da = store.get(a).value[[0, 0]];
        let db = store.get(b).value[[0, 0]];
        assert!((db / da - 10.0).abs() < 1e-6, "{da} {db}");
        assert!((da + 5e-6).abs() < 1e-12);
    }

    #[test]
    fn frozen_and_gradless_params_unchanged() {
        let mut store = ParamStore::new();
        let a = store.add("a", ones(&[2, 2]), ParamGroupTag::New, Component::TextEncoder);
        let b = store.add("b", ones(&[2]), ParamGroupTag::New, Component::Classifier);
        store.freeze_component(Component::TextEncoder);
        let cfg = OptimizerConfig::default();
        let mut opt = AdamW::new(&store);
        opt.step(&mut store, vec![Some(ones(&[2, 2])), None], (1.0, 1.0), &cfg);
        assert_eq!(store.get(a).value, ones(&[2, 2]));
        assert_eq!(store.get(b).value, ones(&[2]));
    }

    #[test]
    fn decay_shrinks_matrices_only() {
        let mut store = ParamStore::new();
        let w = store.add("w", ones(&[2, 2]), ParamGroupTag::New, Component::Classifier);
        let bias = store.add("b", ones(&[2]), ParamGroupTag::New, Component::Classifier);
        let cfg = OptimizerConfig {
            weight_decay: 0.5,
            ..OptimizerConfig::default()
        };
        let mut opt = AdamW::new(&store);
        opt.step(&mut store, vec![Some(zeros(&[2, 2])), Some(zeros(&[2]))], (0.1, 0.1), &cfg);
        assert!((store.get(w).value[[0, 0]] - 0.95).abs() < 1e-7);
        assert_eq!(store.get(bias).value[[0]], 1.0);
    }
}
