//! Parameter update rules, selectable by name.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::named::{Gradients, NamedTensors};
use super::tensor::{Scalar, Tensor};
use super::NnError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerHyper {
    /// Registered rule name, `sgd` or `adam` out of the box.
    pub kind: String,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerHyper {
    fn default() -> Self {
        Self {
            kind: "adam".into(),
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl OptimizerHyper {
    pub fn sgd(lr: f64) -> Self {
        Self {
            kind: "sgd".into(),
            lr,
            ..Self::default()
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self {
            kind: "adam".into(),
            lr,
            ..Self::default()
        }
    }
}

/// Per-parameter optimizer memory.
#[derive(Clone, Debug, Default)]
pub struct OptState<T: Scalar = f32> {
    pub step: u64,
    pub first_moment: Option<NamedTensors<T>>,
    pub second_moment: Option<NamedTensors<T>>,
}

/// One parameter update rule.
pub trait UpdateRule<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Updates `param` in place. `slot` is the index of the parameter in the
    /// optimizer state; `state.step` has already been incremented.
    fn apply(
        &self,
        hyper: &OptimizerHyper,
        state: &mut OptState<T>,
        slot: usize,
        param: &mut Tensor<T>,
        grad: &Tensor<T>,
    );

    /// Allocates whatever moments the rule needs.
    fn init_state(&self, _params: &NamedTensors<T>, _state: &mut OptState<T>) {}
}

pub struct Sgd;

impl<T: Scalar> UpdateRule<T> for Sgd {
    fn name(&self) -> &'static str {
        "sgd"
    }

    fn apply(
        &self,
        hyper: &OptimizerHyper,
        _: &mut OptState<T>,
        _: usize,
        param: &mut Tensor<T>,
        grad: &Tensor<T>,
    ) {
        let lr = T::from_f64(hyper.lr);
        let wd = T::from_f64(hyper.weight_decay);
        for (w, &g) in param.data_mut().iter_mut().zip(grad.data()) {
            *w = *w - lr * (g + wd * *w);
        }
    }
}

/// Adam with bias-corrected moment estimates.
pub struct Adam;

impl<T: Scalar> UpdateRule<T> for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn init_state(&self, params: &NamedTensors<T>, state: &mut OptState<T>) {
        if state.first_moment.is_none() {
            state.first_moment = Some(params.zeros_like());
            state.second_moment = Some(params.zeros_like());
        }
    }

    fn apply(
        &self,
        hyper: &OptimizerHyper,
        state: &mut OptState<T>,
        slot: usize,
        param: &mut Tensor<T>,
        grad: &Tensor<T>,
    ) {
        let (b1, b2) = (hyper.beta1, hyper.beta2);
        let t = state.step as i32;
        let c1 = T::from_f64(1.0 - b1.powi(t));
        let c2 = T::from_f64(1.0 - b2.powi(t));
        let (lr, eps, wd) = (
            T::from_f64(hyper.lr),
            T::from_f64(hyper.eps),
            T::from_f64(hyper.weight_decay),
        );
        let (b1, b2) = (T::from_f64(b1), T::from_f64(b2));
        let m = state
            .first_moment
            .as_mut()
            .expect("adam state initialised")
            .tensor_mut(slot);
        let v = state
            .second_moment
            .as_mut()
            .expect("adam state initialised")
            .tensor_mut(slot);
        for (((w, &g), m), v) in param
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.data_mut().iter_mut())
            .zip(v.data_mut().iter_mut())
        {
            let g = g + wd * *w;
            *m = b1 * *m + (T::one() - b1) * g;
            *v = b2 * *v + (T::one() - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

/// Name -> update rule lookup.
pub struct OptimizerRegistry<T: Scalar> {
    rules: BTreeMap<&'static str, Arc<dyn UpdateRule<T>>>,
}

impl<T: Scalar> Default for OptimizerRegistry<T> {
    fn default() -> Self {
        let mut reg = Self {
            rules: BTreeMap::new(),
        };
        reg.register(Arc::new(Sgd));
        reg.register(Arc::new(Adam));
        reg
    }
}

impl<T: Scalar> OptimizerRegistry<T> {
    pub fn register(&mut self, rule: Arc<dyn UpdateRule<T>>) {
        self.rules.insert(rule.name(), rule);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn UpdateRule<T>>, NnError> {
        self.rules
            .get(name)
            .cloned()
            .ok_or_else(|| NnError::UnknownOptimizer(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.rules.keys().copied().collect()
    }
}

/// Applies one update to every parameter. Rejects the whole step, leaving
/// parameters and state untouched, if any gradient is non-finite.
pub fn optimizer_step<T: Scalar>(
    registry: &OptimizerRegistry<T>,
    params: &mut NamedTensors<T>,
    grads: &Gradients<T>,
    state: &mut OptState<T>,
    hyper: &OptimizerHyper,
) -> Result<(), NnError> {
    params.check_matches(grads)?;
    if let Some((name, _)) = grads.iter().find(|(_, g)| !g.all_finite()) {
        return Err(NnError::NonFinite(format!("gradient of `{name}`")));
    }
    let rule = registry.get(&hyper.kind)?;
    rule.init_state(params, state);
    for moments in [&state.first_moment, &state.second_moment]
        .into_iter()
        .flatten()
    {
        params.check_matches(moments)?;
    }
    state.step += 1;
    for slot in 0..params.len() {
        rule.apply(
            hyper,
            state,
            slot,
            params.tensor_mut(slot),
            grads.tensor(slot),
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(v: f64) -> NamedTensors<f64> {
        let mut p = NamedTensors::new();
        p.push("w", Tensor::new(&[1], vec![v]).unwrap());
        p
    }

    #[test]
    fn sgd_step() {
        let reg = OptimizerRegistry::default();
        let mut p = single(1.0);
        let mut st = OptState::default();
        optimizer_step(
            &reg,
            &mut p,
            &single(1.0),
            &mut st,
            &OptimizerHyper::sgd(0.1),
        )
        .unwrap();
        assert!((p.tensor(0).data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_sgd_params() {
        let reg = OptimizerRegistry::default();
        let mut p = single(3.0);
        let mut st = OptState::default();
        optimizer_step(
            &reg,
            &mut p,
            &single(0.0),
            &mut st,
            &OptimizerHyper::sgd(0.5),
        )
        .unwrap();
        assert_eq!(p.tensor(0).data()[0], 3.0);
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps) ~ lr * sign(g)
        let reg = OptimizerRegistry::default();
        for g in [1.0, 1e-3, 250.0, -4.0] {
            let mut p = single(0.5);
            let mut st = OptState::default();
            let mut hyper = OptimizerHyper::adam(0.01);
            hyper.eps = 1e-12;
            optimizer_step(&reg, &mut p, &single(g), &mut st, &hyper).unwrap();
            let moved = p.tensor(0).data()[0] - 0.5;
            assert!(
                (moved + 0.01 * g.signum()).abs() < 1e-8,
                "g={g} moved={moved}"
            );
        }
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let reg = OptimizerRegistry::default();
        let mut p = single(1.0);
        let mut st = OptState::default();
        let err = optimizer_step(
            &reg,
            &mut p,
            &single(f64::NAN),
            &mut st,
            &OptimizerHyper::sgd(0.1),
        )
        .unwrap_err();
        assert!(matches!(err, NnError::NonFinite(_)));
        assert_eq!(p.tensor(0).data()[0], 1.0);
        assert_eq!(st.step, 0);
    }

    #[test]
    fn unknown_rule_rejected() {
        let reg = OptimizerRegistry::<f64>::default();
        assert_eq!(reg.names(), vec!["adam", "sgd"]);
        let mut hyper = OptimizerHyper::sgd(0.1);
        hyper.kind = "lbfgs".into();
        let err = optimizer_step(
            &reg,
            &mut single(1.0),
            &single(1.0),
            &mut OptState::default(),
            &hyper,
        );
        assert!(matches!(err, Err(NnError::UnknownOptimizer(_))));
    }

    #[test]
    fn deterministic_given_identical_inputs() {
        let reg = OptimizerRegistry::default();
        let run = || {
            let mut p = single(0.3);
            let mut st = OptState::default();
            for i in 0..5 {
                optimizer_step(
                    &reg,
                    &mut p,
                    &single(0.1 * i as f64 - 0.2),
                    &mut st,
                    &OptimizerHyper::adam(0.05),
                )
                .unwrap();
            }
            p.tensor(0).data()[0]
        };
        assert_eq!(run().to_bits(), run().to_bits());
    }
}
