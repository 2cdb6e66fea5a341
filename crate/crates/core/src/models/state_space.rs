//! Truncated nonlinear state-space family:
//! `X' = A(θ,X) + B(θ,X)·V`, `Y = C(θ,X) + D(θ,X)·W` with standard
//! Gaussian noise, truncated to compact boxes.
//!
//! Coefficient maps are polynomials in `(θ, x)` with `B`, `D` diagonal and
//! positive on the declared parameter box, so the complex continuation is
//! the same polynomial arithmetic over complex θ. Truncated densities are
//! renormalized by grid quadrature, exactly matching what the filter
//! integrates.

use super::{sample_std_normal, validate_continuation, ModelFamily, ObsSpace, Observation,
            REJECTION_BUDGET};
use crate::error::{HmmError, Result};
use crate::measures::{BoxBounds, GridSpace, ParameterPoint};
use crate::scalar::{cone, creal, czero, real, Cplx, Real};
use rand::RngCore;
use std::sync::Arc;

/// One monomial `coef · Πθ_k^{a_k} · Πx_k^{b_k}`.
#[derive(Debug, Clone)]
pub struct PolyTerm<T> {
    pub coef: T,
    pub theta_pows: Vec<u32>,
    pub x_pows: Vec<u32>,
}

/// Polynomial in `(θ, x)`.
#[derive(Debug, Clone)]
pub struct Poly<T> {
    pub terms: Vec<PolyTerm<T>>,
}

impl<T: Real> Poly<T> {
    pub fn constant(c: T) -> Self {
        Self {
            terms: vec![PolyTerm {
                coef: c,
                theta_pows: vec![],
                x_pows: vec![],
            }],
        }
    }

    /// Evaluates at complex θ and real x.
    pub fn eval(&self, eta: &ParameterPoint<T>, x: &[T]) -> Cplx<T> {
        let mut acc = czero();
        for t in &self.terms {
            let mut term = creal(t.coef);
            for (k, &p) in t.theta_pows.iter().enumerate() {
                for _ in 0..p {
                    term = term * eta.coord(k);
                }
            }
            for (k, &p) in t.x_pows.iter().enumerate() {
                for _ in 0..p {
                    term = term * creal::<T>(x[k]);
                }
            }
            acc = acc + term;
        }
        acc
    }
}

#[derive(Debug)]
pub struct TruncatedStateSpaceModel<T> {
    space: Arc<GridSpace<T>>,
    obs: ObsSpace<T>,
    /// Drift map, one polynomial per state coordinate.
    a_map: Vec<Poly<T>>,
    /// Diagonal of the state noise gain.
    b_diag: Vec<Poly<T>>,
    c_map: Vec<Poly<T>>,
    d_diag: Vec<Poly<T>>,
    param_box: BoxBounds<T>,
    delta: T,
    /// Constant envelope: on compact boxes `|r̂|` is bounded.
    c_phi: T,
    psi_const: T,
}

/// Complex standard normal density along one axis: `exp(−z²/2)/√(2π)`.
fn gauss1<T: Real>(z: Cplx<T>) -> Cplx<T> {
    let half = creal::<T>(real::<T>(0.5));
    let norm = real::<T>((2.0 * std::f64::consts::PI).sqrt());
    (-(z * z) * half).exp() / creal::<T>(norm)
}

impl<T: Real> TruncatedStateSpaceModel<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_bounds: BoxBounds<T>,
        state_resolution: &[usize],
        obs_bounds: BoxBounds<T>,
        obs_resolution: &[usize],
        a_map: Vec<Poly<T>>,
        b_diag: Vec<Poly<T>>,
        c_map: Vec<Poly<T>>,
        d_diag: Vec<Poly<T>>,
        param_box: BoxBounds<T>,
        delta: T,
    ) -> Result<Arc<Self>> {
        let dx = state_bounds.dim();
        let dy = obs_bounds.dim();
        if a_map.len() != dx || b_diag.len() != dx || c_map.len() != dy || d_diag.len() != dy {
            return Err(HmmError::InvalidModel(
                "coefficient maps must match state/observation dimensions".into(),
            ));
        }
        if delta <= T::zero() || delta >= T::one() {
            return Err(HmmError::InvalidModel("delta_model must be in (0,1)".into()));
        }
        let space = GridSpace::uniform(state_bounds, state_resolution)?;
        let obs_grid = GridSpace::uniform(obs_bounds, obs_resolution)?;
        let mut model = Self {
            space,
            obs: ObsSpace::Continuous { grid: obs_grid },
            a_map,
            b_diag,
            c_map,
            d_diag,
            param_box,
            delta,
            c_phi: T::one(),
            psi_const: T::one(),
        };

        // B, D must stay invertible: positive real diagonal on the box,
        // real part bounded away from zero over the sampled vicinity.
        let samples = super::continuation_samples(&model.param_box, model.delta, 16);
        let floor = real::<T>(1e-6);
        for eta in &samples {
            for xi in (0..model.space.len()).step_by(model.space.len().div_ceil(16)) {
                let x = model.space.point(xi).to_vec();
                for b in model.b_diag.iter().chain(&model.d_diag) {
                    let v = b.eval(eta, &x);
                    if v.re < floor {
                        return Err(HmmError::InvalidModel(
                            "noise gain not positive-definite over the parameter vicinity"
                                .into(),
                        ));
                    }
                }
            }
        }

        let nodes: Vec<(Observation<T>, T)> = (0..model.obs.quadrature_len())
            .map(|i| model.obs.quadrature_node(i))
            .collect();
        let max_ratio = validate_continuation(&model, &nodes, &|_y: &Observation<T>| T::one())?;
        model.c_phi = (max_ratio * real::<T>(1.05)).max(real::<T>(1e-12));
        model.psi_const = T::one() + model.c_phi.ln().abs();
        Ok(Arc::new(model))
    }

    /// Raw (untruncated, unnormalized) transition value and the per-`x`
    /// quadrature normalizer share this kernel evaluation.
    fn trans_raw(&self, eta: &ParameterPoint<T>, x_next: &[T], x: &[T]) -> Cplx<T> {
        let mut dens = cone();
        for k in 0..self.space.dim() {
            let a = self.a_map[k].eval(eta, x);
            let b = self.b_diag[k].eval(eta, x);
            let z = (creal::<T>(x_next[k]) - a) / b;
            dens = dens * gauss1(z) / b;
        }
        dens
    }

    fn obs_raw(&self, eta: &ParameterPoint<T>, y: &[T], x: &[T]) -> Cplx<T> {
        let mut dens = cone();
        for k in 0..y.len() {
            let c = self.c_map[k].eval(eta, x);
            let d = self.d_diag[k].eval(eta, x);
            let z = (creal::<T>(y[k]) - c) / d;
            dens = dens * gauss1(z) / d;
        }
        dens
    }

    fn trans_normalizer(&self, eta: &ParameterPoint<T>, x: &[T]) -> Result<Cplx<T>> {
        let mut acc = czero();
        for g in 0..self.space.len() {
            acc = acc
                + self.trans_raw(eta, self.space.point(g), x)
                    * creal::<T>(self.space.weight(g));
        }
        if acc.norm() < real::<T>(1e-12) {
            return Err(HmmError::ContinuationDomain(
                "truncated transition normalizer vanished".into(),
            ));
        }
        Ok(acc)
    }

    fn obs_normalizer(&self, eta: &ParameterPoint<T>, x: &[T]) -> Result<Cplx<T>> {
        let ObsSpace::Continuous { grid } = &self.obs else {
            unreachable!()
        };
        let mut acc = czero();
        for g in 0..grid.len() {
            acc = acc + self.obs_raw(eta, grid.point(g), x) * creal::<T>(grid.weight(g));
        }
        if acc.norm() < real::<T>(1e-12) {
            return Err(HmmError::ContinuationDomain(
                "truncated observation normalizer vanished".into(),
            ));
        }
        Ok(acc)
    }
}

impl<T: Real> ModelFamily<T> for TruncatedStateSpaceModel<T> {
    fn name(&self) -> &str {
        "state-space"
    }

    fn param_dim(&self) -> usize {
        self.param_box.dim()
    }

    fn param_box(&self) -> &BoxBounds<T> {
        &self.param_box
    }

    fn delta_model(&self) -> T {
        self.delta
    }

    fn state_space(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    fn obs_space(&self) -> &ObsSpace<T> {
        &self.obs
    }

    fn transition_density(
        &self,
        eta: &ParameterPoint<T>,
        x_next: &[T],
        x: &[T],
    ) -> Result<Cplx<T>> {
        self.check_continuation(eta)?;
        if !self.space.bounds().contains(x_next) {
            return Err(HmmError::OutOfBounds {
                point: x_next.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        Ok(self.trans_raw(eta, x_next, x) / self.trans_normalizer(eta, x)?)
    }

    fn observation_density(
        &self,
        eta: &ParameterPoint<T>,
        y: &Observation<T>,
        x: &[T],
    ) -> Result<Cplx<T>> {
        self.check_continuation(eta)?;
        let Observation::Point(p) = y else {
            return Err(HmmError::InvalidArgument(
                "state-space model expects point observations".into(),
            ));
        };
        let ObsSpace::Continuous { grid } = &self.obs else {
            unreachable!()
        };
        if !grid.bounds().contains(p) {
            return Err(HmmError::OutOfBounds {
                point: p.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        Ok(self.obs_raw(eta, p, x) / self.obs_normalizer(eta, x)?)
    }

    fn transition_row(&self, eta: &ParameterPoint<T>, x_index: usize) -> Result<Vec<Cplx<T>>> {
        self.check_continuation(eta)?;
        let x = self.space.point(x_index).to_vec();
        let norm = self.trans_normalizer(eta, &x)?;
        Ok((0..self.space.len())
            .map(|g| self.trans_raw(eta, self.space.point(g), &x) / norm)
            .collect())
    }

    fn envelope(&self, _eta: &ParameterPoint<T>, _y: &Observation<T>) -> Cplx<T> {
        creal(self.c_phi)
    }

    fn log_envelope_bound(&self, _y: &Observation<T>) -> T {
        self.psi_const
    }

    fn sample_transition(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<T>> {
        let dx = self.space.dim();
        let a: Vec<T> = (0..dx).map(|k| self.a_map[k].eval(theta, x).re).collect();
        let b: Vec<T> = (0..dx).map(|k| self.b_diag[k].eval(theta, x).re).collect();
        let bounds = self.space.bounds();
        for _ in 0..REJECTION_BUDGET {
            let draw: Vec<T> = (0..dx)
                .map(|k| a[k] + b[k] * sample_std_normal::<T>(rng))
                .collect();
            if bounds.contains(&draw) {
                return Ok(draw);
            }
        }
        Err(HmmError::RejectionBudget {
            attempts: REJECTION_BUDGET,
        })
    }

    fn sample_observation(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Observation<T>> {
        let ObsSpace::Continuous { grid } = &self.obs else {
            unreachable!()
        };
        let dy = grid.dim();
        let c: Vec<T> = (0..dy).map(|k| self.c_map[k].eval(theta, x).re).collect();
        let d: Vec<T> = (0..dy).map(|k| self.d_diag[k].eval(theta, x).re).collect();
        let bounds = grid.bounds();
        for _ in 0..REJECTION_BUDGET {
            let draw: Vec<T> = (0..dy)
                .map(|k| c[k] + d[k] * sample_std_normal::<T>(rng))
                .collect();
            if bounds.contains(&draw) {
                return Ok(Observation::Point(draw));
            }
        }
        Err(HmmError::RejectionBudget {
            attempts: REJECTION_BUDGET,
        })
    }
}
