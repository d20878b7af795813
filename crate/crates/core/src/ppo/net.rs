//! Two-layer tanh MLP with a squashed action-mean head and a value head.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Policy and value network parameters.
///
/// Also used as the gradient container: a gradient has exactly the shape of
/// the parameters it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyNet<T: Scalar = f32> {
    pub w1: Array2<T>,
    pub b1: Array1<T>,
    pub w2: Array2<T>,
    pub b2: Array1<T>,
    pub w_mu: Array1<T>,
    pub b_mu: Array1<T>,
    pub w_v: Array1<T>,
    pub b_v: Array1<T>,
}

/// Activations kept from a batched forward pass for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T: Scalar> {
    pub h1: Array2<T>,
    pub h2: Array2<T>,
    /// Squashed action means.
    pub mu: Array1<T>,
    pub value: Array1<T>,
}

fn xavier<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Array2<T> {
    let bound = gain * (6.0 / (rows + cols) as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Array2::from_shape_simple_fn((rows, cols), || T::lit(dist.sample(rng)))
}

impl<T: Scalar> PolicyNet<T> {
    /// All-zero network: outputs `mu = 0`, `V = 0` for every input.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w1: Array2::zeros((hidden, input)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, hidden)),
            b2: Array1::zeros(hidden),
            w_mu: Array1::zeros(hidden),
            b_mu: Array1::zeros(1),
            w_v: Array1::zeros(hidden),
            b_v: Array1::zeros(1),
        }
    }

    /// Xavier-uniform hidden layers, a near-zero action head and zero biases.
    pub fn init<R: Rng + ?Sized>(input: usize, hidden: usize, rng: &mut R) -> Self {
        let w1 = xavier(hidden, input, 1.0, rng);
        let w2 = xavier(hidden, hidden, 1.0, rng);
        let w_mu = xavier::<T, _>(1, hidden, 0.01, rng).index_axis_move(Axis(0), 0);
        let w_v = xavier::<T, _>(1, hidden, 1.0, rng).index_axis_move(Axis(0), 0);
        Self {
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(hidden),
            w_mu,
            b_mu: Array1::zeros(1),
            w_v,
            b_v: Array1::zeros(1),
        }
    }

    pub fn input_len(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_len(&self) -> usize {
        self.w1.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameter tensors in a fixed order, flattened.
    pub fn tensors(&self) -> [&[T]; 8] {
        fn s<T>(a: Option<&[T]>) -> &[T] {
            a.expect("standard layout")
        }
        [
            s(self.w1.as_slice()),
            s(self.b1.as_slice()),
            s(self.w2.as_slice()),
            s(self.b2.as_slice()),
            s(self.w_mu.as_slice()),
            s(self.b_mu.as_slice()),
            s(self.w_v.as_slice()),
            s(self.b_v.as_slice()),
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut [T]; 8] {
        [
            self.w1.as_slice_mut().expect("standard layout"),
            self.b1.as_slice_mut().expect("standard layout"),
            self.w2.as_slice_mut().expect("standard layout"),
            self.b2.as_slice_mut().expect("standard layout"),
            self.w_mu.as_slice_mut().expect("standard layout"),
            self.b_mu.as_slice_mut().expect("standard layout"),
            self.w_v.as_slice_mut().expect("standard layout"),
            self.b_v.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_len(), self.hidden_len())
    }

    pub fn squared_norm(&self) -> T {
        self.tensors().iter().flat_map(|t| t.iter()).map(|v| *v * *v).sum()
    }

    pub fn scale(&mut self, factor: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v = *v * factor);
        }
    }

    /// Converts every parameter to another scalar type.
    pub fn cast<U: Scalar>(&self) -> PolicyNet<U> {
        let c1 = |a: &Array1<T>| a.mapv(|v| U::lit(v.as_f64()));
        let c2 = |a: &Array2<T>| a.mapv(|v| U::lit(v.as_f64()));
        PolicyNet {
            w1: c2(&self.w1),
            b1: c1(&self.b1),
            w2: c2(&self.w2),
            b2: c1(&self.b2),
            w_mu: c1(&self.w_mu),
            b_mu: c1(&self.b_mu),
            w_v: c1(&self.w_v),
            b_v: c1(&self.b_v),
        }
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.input_len() {
            return Err(Error::Contract(format!(
                "observation of length {len} fed to a network expecting {}",
                self.input_len()
            )));
        }
        Ok(())
    }

    /// Action mean in `[-1, 1]` and state value for one input vector.
    pub fn forward(&self, x: &[T]) -> Result<(T, T)> {
        self.check_input(x.len())?;
        let x = ArrayView1::from(x);
        let h1 = (self.w1.dot(&x) + &self.b1).mapv_into(T::tanh);
        let h2 = (self.w2.dot(&h1) + &self.b2).mapv_into(T::tanh);
        let mu = (self.w_mu.dot(&h2) + self.b_mu[0]).tanh();
        let value = self.w_v.dot(&h2) + self.b_v[0];
        Ok((mu, value))
    }

    /// Forward pass over a batch laid out one input per row.
    pub fn forward_batch(&self, x: &Array2<T>) -> Result<ForwardCache<T>> {
        self.check_input(x.ncols())?;
        let h1 = (x.dot(&self.w1.t()) + &self.b1).mapv_into(T::tanh);
        let h2 = (h1.dot(&self.w2.t()) + &self.b2).mapv_into(T::tanh);
        let mu = (h2.dot(&self.w_mu) + self.b_mu[0]).mapv_into(T::tanh);
        let value = h2.dot(&self.w_v) + self.b_v[0];
        Ok(ForwardCache { h1, h2, mu, value })
    }

    /// Gradient of a loss given its derivatives w.r.t. the pre-squash action
    /// mean and the value output, per batch row.
    pub fn backward(&self, x: &Array2<T>, cache: &ForwardCache<T>, d_mu_pre: &Array1<T>, d_value: &Array1<T>) -> PolicyNet<T> {
        let one = T::one();
        let h2 = &cache.h2;
        let h1 = &cache.h1;
        let g_w_mu = h2.t().dot(d_mu_pre);
        let g_w_v = h2.t().dot(d_value);
        let g_b_mu = Array1::from_elem(1, d_mu_pre.sum());
        let g_b_v = Array1::from_elem(1, d_value.sum());

        let d_mu_col = d_mu_pre.view().insert_axis(Axis(1));
        let d_v_col = d_value.view().insert_axis(Axis(1));
        let mut d_z2 = &d_mu_col * &self.w_mu.view().insert_axis(Axis(0)) + &d_v_col * &self.w_v.view().insert_axis(Axis(0));
        d_z2.zip_mut_with(h2, |d, h| *d = *d * (one - *h * *h));
        let g_w2 = d_z2.t().dot(h1);
        let g_b2 = d_z2.sum_axis(Axis(0));

        let mut d_z1 = d_z2.dot(&self.w2);
        d_z1.zip_mut_with(h1, |d, h| *d = *d * (one - *h * *h));
        let g_w1 = d_z1.t().dot(x);
        let g_b1 = d_z1.sum_axis(Axis(0));

        PolicyNet {
            w1: g_w1,
            b1: g_b1,
            w2: g_w2,
            b2: g_b2,
            w_mu: g_w_mu,
            b_mu: g_b_mu,
            w_v: g_w_v,
            b_v: g_b_v,
        }
    }
}
