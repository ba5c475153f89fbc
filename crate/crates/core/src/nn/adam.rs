//! Adam with global-norm gradient clipping and a step-wise halving
//! learning-rate schedule.

use super::gradcheck::HasParams;
use super::tensor::{Scalar, Tensor};
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct AdamState<T = f32> {
    pub step_count: u64,
    /// Base learning rate; the effective rate per step comes from
    /// [`scheduled_lr`] or an explicit override.
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Global gradient-norm ceiling; `f64::INFINITY` disables clipping.
    pub clip_norm: f64,
    first_moment: HashMap<String, Tensor<T>>,
    second_moment: HashMap<String, Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(learning_rate: f64, clip_norm: f64) -> Self {
        AdamState {
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            clip_norm,
            first_moment: HashMap::new(),
            second_moment: HashMap::new(),
        }
    }

    /// Applies one update: clip the stacked gradient to `clip_norm`, then
    /// the bias-corrected Adam rule at the given effective learning rate.
    pub fn step<M: HasParams<T>>(&mut self, model: &mut M, grads: &[(String, Tensor<T>)], lr: f64) {
        self.step_count += 1;
        let t = self.step_count as i32;

        let mut sq_sum = 0.0f64;
        for (_, g) in grads {
            for x in g.data() {
                let v = x.as_f64();
                sq_sum += v * v;
            }
        }
        let norm = sq_sum.sqrt();
        let clip_scale = if norm > self.clip_norm {
            self.clip_norm / norm
        } else {
            1.0
        };

        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        let b1 = T::from_f64(self.beta1);
        let b2 = T::from_f64(self.beta2);
        let one_minus_b1 = T::from_f64(1.0 - self.beta1);
        let one_minus_b2 = T::from_f64(1.0 - self.beta2);
        let scale = T::from_f64(clip_scale);
        let eps = T::from_f64(self.epsilon);
        let step_size = T::from_f64(lr / bias1);
        let bias2_sqrt = T::from_f64(bias2.sqrt());

        let mut deltas: HashMap<String, Tensor<T>> = HashMap::with_capacity(grads.len());
        for (name, grad) in grads {
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(grad.shape()));
            let mut delta = Tensor::zeros(grad.shape());
            for i in 0..grad.numel() {
                let g = grad.data()[i] * scale;
                let mi = b1 * m.data()[i] + one_minus_b1 * g;
                let vi = b2 * v.data()[i] + one_minus_b2 * g * g;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                // theta -= lr/bias1 * m / (sqrt(v)/sqrt(bias2) + eps')
                // expressed as lr/bias1 * m * sqrt(bias2) / (sqrt(v) + eps*sqrt(bias2))
                delta.data_mut()[i] = step_size * mi * bias2_sqrt / (vi.sqrt() + eps * bias2_sqrt);
            }
            deltas.insert(name.clone(), delta);
        }

        model.visit_params_mut(&mut |name: String, param: &mut Tensor<T>| {
            if let Some(delta) = deltas.get(&name) {
                for (p, d) in param.data_mut().iter_mut().zip(delta.data()) {
                    *p -= *d;
                }
            }
        });
    }

    pub fn moment_tensors(&self) -> (&HashMap<String, Tensor<T>>, &HashMap<String, Tensor<T>>) {
        (&self.first_moment, &self.second_moment)
    }

    pub fn set_moments(
        &mut self,
        first: HashMap<String, Tensor<T>>,
        second: HashMap<String, Tensor<T>>,
    ) {
        self.first_moment = first;
        self.second_moment = second;
    }
}

/// Learning-rate schedule: flat through the first epoch, then halved at
/// every subsequent half-epoch boundary.
pub fn scheduled_lr(base: f64, progress_epochs: f64) -> f64 {
    if progress_epochs < 1.0 {
        base
    } else {
        let halvings = ((progress_epochs - 1.0) / 0.5).floor() as i32 + 1;
        base * 0.5f64.powi(halvings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct OneParam {
        value: Tensor<f64>,
    }

    impl HasParams<f64> for OneParam {
        fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<f64>)) {
            f("p".into(), &self.value);
        }
        fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<f64>)) {
            f("p".into(), &mut self.value);
        }
    }

    #[test]
    fn first_step_with_unit_gradient_moves_by_lr() {
        // bias-corrected Adam with g=1: m_hat = 1, v_hat = 1, so the first
        // step is -lr/(1 + eps) ~ -lr.
        let mut model = OneParam {
            value: Tensor::scalar(0.0),
        };
        let mut opt = AdamState::<f64>::new(0.1, f64::INFINITY);
        let grads = vec![("p".to_string(), Tensor::scalar(1.0))];
        opt.step(&mut model, &grads, 0.1);
        assert!((model.value.item() + 0.1).abs() < 1e-6, "moved to {}", model.value.item());
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut model = OneParam {
            value: Tensor::scalar(0.37),
        };
        let mut opt = AdamState::<f64>::new(0.1, 5.0);
        let grads = vec![("p".to_string(), Tensor::scalar(0.0))];
        opt.step(&mut model, &grads, 0.1);
        assert_eq!(model.value.item(), 0.37);
        assert_eq!(opt.step_count, 1);
    }

    #[test]
    fn zero_learning_rate_means_no_update() {
        let mut model = OneParam {
            value: Tensor::scalar(0.37),
        };
        let mut opt = AdamState::<f64>::new(0.0, 5.0);
        let grads = vec![("p".to_string(), Tensor::scalar(2.5))];
        opt.step(&mut model, &grads, 0.0);
        assert_eq!(model.value.item(), 0.37);
    }

    #[test]
    fn gradient_is_clipped_to_global_norm() {
        // gradient norm 100, clip 5 -> applied gradient has norm 5
        struct TwoParams {
            a: Tensor<f64>,
            b: Tensor<f64>,
        }
        impl HasParams<f64> for TwoParams {
            fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<f64>)) {
                f("a".into(), &self.a);
                f("b".into(), &self.b);
            }
            fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<f64>)) {
                f("a".into(), &mut self.a);
                f("b".into(), &mut self.b);
            }
        }
        let mut model = TwoParams {
            a: Tensor::scalar(0.0),
            b: Tensor::scalar(0.0),
        };
        let mut opt = AdamState::<f64>::new(1.0, 5.0);
        // norm = sqrt(60^2 + 80^2) = 100
        let grads = vec![
            ("a".to_string(), Tensor::scalar(60.0)),
            ("b".to_string(), Tensor::scalar(80.0)),
        ];
        // recover the clipped gradient from the first moment: m = 0.1 * g_clipped
        opt.step(&mut model, &grads, 1.0);
        let (first, _) = opt.moment_tensors();
        let ga = first["a"].item() / 0.1;
        let gb = first["b"].item() / 0.1;
        let norm = (ga * ga + gb * gb).sqrt();
        assert!((norm - 5.0).abs() < 1e-6, "clipped norm = {norm}");
        assert!((ga - 3.0).abs() < 1e-6);
        assert!((gb - 4.0).abs() < 1e-6);
    }

    #[test]
    fn schedule_halves_after_first_epoch() {
        assert_eq!(scheduled_lr(1e-3, 0.0), 1e-3);
        assert_eq!(scheduled_lr(1e-3, 0.99), 1e-3);
        assert_eq!(scheduled_lr(1e-3, 1.0), 5e-4);
        assert_eq!(scheduled_lr(1e-3, 1.49), 5e-4);
        assert_eq!(scheduled_lr(1e-3, 1.5), 2.5e-4);
    }
}
