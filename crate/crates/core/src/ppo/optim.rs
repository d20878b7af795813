//! First-order optimizers over [`PolicyNet`] parameters.

use super::net::PolicyNet;
use crate::scalar::Scalar;

pub trait Optimizer<T: Scalar> {
    /// Moves `params` against `grad`.
    fn step(&mut self, params: &mut PolicyNet<T>, grad: &PolicyNet<T>);
}

#[derive(Debug, Clone)]
pub struct Sgd<T> {
    pub lr: T,
}

impl<T: Scalar> Optimizer<T> for Sgd<T> {
    fn step(&mut self, params: &mut PolicyNet<T>, grad: &PolicyNet<T>) {
        for (p, g) in params.tensors_mut().into_iter().zip(grad.tensors()) {
            for (p, g) in p.iter_mut().zip(g) {
                *p = *p - self.lr * *g;
            }
        }
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: PolicyNet<T>,
    v: PolicyNet<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: T, shape: &PolicyNet<T>) -> Self {
        Self {
            lr,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: shape.zeros_like(),
            v: shape.zeros_like(),
            t: 0,
        }
    }
}

impl<T: Scalar> Optimizer<T> for Adam<T> {
    fn step(&mut self, params: &mut PolicyNet<T>, grad: &PolicyNet<T>) {
        self.t += 1;
        let one = T::one();
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let step = self.lr * c2.sqrt() / c1;
        let eps_hat = self.eps * c2.sqrt();
        let tensors = params
            .tensors_mut()
            .into_iter()
            .zip(grad.tensors())
            .zip(self.m.tensors_mut().into_iter().zip(self.v.tensors_mut()));
        for ((p, g), (m, v)) in tensors {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (one - b1) * g[i];
                v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
                p[i] = p[i] - step * m[i] / (v[i].sqrt() + eps_hat);
            }
        }
    }
}

/// Either optimizer behind one type.
#[derive(Debug, Clone)]
pub enum AnyOptimizer<T: Scalar> {
    Sgd(Sgd<T>),
    Adam(Adam<T>),
}

impl<T: Scalar> Optimizer<T> for AnyOptimizer<T> {
    fn step(&mut self, params: &mut PolicyNet<T>, grad: &PolicyNet<T>) {
        match self {
            AnyOptimizer::Sgd(o) => o.step(params, grad),
            AnyOptimizer::Adam(o) => o.step(params, grad),
        }
    }
}
