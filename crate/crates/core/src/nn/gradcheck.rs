//! Central finite-difference gradient verification.
//!
//! The checker only ever calls the forward pass, so it stays independent
//! of the reverse-mode code it validates. Run it at f64: the perturbation
//! step sits far below f32 forward noise.

use super::tensor::{Scalar, Tensor};
use std::collections::HashMap;

/// Anything exposing its trainable tensors by stable names.
pub trait HasParams<T: Scalar> {
    fn visit_params(&self, f: &mut dyn FnMut(String, &Tensor<T>));
    fn visit_params_mut(&mut self, f: &mut dyn FnMut(String, &mut Tensor<T>));

    fn param_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit_params(&mut |name, _| names.push(name));
        names
    }

    fn clone_params(&self) -> HashMap<String, Tensor<T>> {
        let mut out = HashMap::new();
        self.visit_params(&mut |name, t| {
            out.insert(name, t.clone());
        });
        out
    }
}

#[derive(Debug)]
pub struct GradMismatch {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

fn poke<M: HasParams<f64>>(model: &mut M, name: &str, index: usize, delta: f64) {
    model.visit_params_mut(&mut |n, t| {
        if n == name {
            t.data_mut()[index] += delta;
        }
    });
}

/// Compares analytic gradients against central differences for every
/// element of every parameter. `analytic` may omit parameters the loss
/// does not touch; those are treated as zero.
///
/// An element fails when |a - n| > abs_tol + rel_tol * max(|a|, |n|).
pub fn check_gradients<M: HasParams<f64>>(
    model: &mut M,
    loss_fn: &mut dyn FnMut(&M) -> f64,
    analytic: &HashMap<String, Tensor<f64>>,
    step: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Vec<GradMismatch> {
    let mut sizes = Vec::new();
    model.visit_params(&mut |name, t| sizes.push((name, t.numel())));

    let mut failures = Vec::new();
    for (name, numel) in sizes {
        for index in 0..numel {
            poke(model, &name, index, step);
            let up = loss_fn(model);
            poke(model, &name, index, -2.0 * step);
            let down = loss_fn(model);
            poke(model, &name, index, step);

            let numeric = (up - down) / (2.0 * step);
            let a = analytic
                .get(&name)
                .map(|t| t.data()[index])
                .unwrap_or(0.0);
            if (a - numeric).abs() > abs_tol + rel_tol * a.abs().max(numeric.abs()) {
                failures.push(GradMismatch {
                    name: name.clone(),
                    index,
                    analytic: a,
                    numeric,
                });
            }
        }
    }
    failures
}
