//! Planted-defect wrapper: conjugates the emission continuation.
//!
//! On the real axis conjugation is the identity, so the real model is
//! untouched; off the axis the emission becomes anti-analytic in η. The
//! analyticity diagnostics must catch this.

use super::{ModelFamily, ObsSpace, Observation};
use crate::error::Result;
use crate::measures::{BoxBounds, GridSpace, ParameterPoint};
use crate::scalar::{Cplx, Real};
use rand::RngCore;
use std::sync::Arc;

pub struct ConjugateEmission<T> {
    inner: Arc<dyn ModelFamily<T>>,
}

impl<T: Real> ConjugateEmission<T> {
    pub fn new(inner: Arc<dyn ModelFamily<T>>) -> Arc<Self> {
        Arc::new(Self { inner })
    }
}

impl<T: Real> ModelFamily<T> for ConjugateEmission<T> {
    fn name(&self) -> &str {
        "conjugate-emission-defect"
    }

    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }

    fn param_box(&self) -> &BoxBounds<T> {
        self.inner.param_box()
    }

    fn delta_model(&self) -> T {
        self.inner.delta_model()
    }

    fn state_space(&self) -> &Arc<GridSpace<T>> {
        self.inner.state_space()
    }

    fn obs_space(&self) -> &ObsSpace<T> {
        self.inner.obs_space()
    }

    fn transition_density(
        &self,
        eta: &ParameterPoint<T>,
        x_next: &[T],
        x: &[T],
    ) -> Result<Cplx<T>> {
        self.inner.transition_density(eta, x_next, x)
    }

    fn observation_density(
        &self,
        eta: &ParameterPoint<T>,
        y: &Observation<T>,
        x: &[T],
    ) -> Result<Cplx<T>> {
        Ok(self.inner.observation_density(eta, y, x)?.conj())
    }

    fn transition_row(&self, eta: &ParameterPoint<T>, x_index: usize) -> Result<Vec<Cplx<T>>> {
        self.inner.transition_row(eta, x_index)
    }

    fn envelope(&self, eta: &ParameterPoint<T>, y: &Observation<T>) -> Cplx<T> {
        self.inner.envelope(eta, y)
    }

    fn log_envelope_bound(&self, y: &Observation<T>) -> T {
        self.inner.log_envelope_bound(y)
    }

    fn sample_transition(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<T>> {
        self.inner.sample_transition(theta, x, rng)
    }

    fn sample_observation(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Observation<T>> {
        self.inner.sample_observation(theta, x, rng)
    }
}
