//! Mixture-of-densities family: `p(x'|x) = Σ_i a^i(θ,x) v_i(x')` and
//! `q(y|x) = Σ_j b^j(θ,x) w_j(y)`.
//!
//! Components are Gaussians restricted to the compact boxes and normalized
//! by the same grid quadrature the filter uses, so densities integrate to
//! one exactly as seen by the filter. Weights are softmax of affine
//! functions of `(θ, x)`, which keeps them positive, summing to one, and
//! entire in θ.

use super::{
    sample_categorical, sample_std_normal, softmax, validate_continuation, ModelFamily, ObsSpace,
    Observation, REJECTION_BUDGET,
};
use crate::error::{HmmError, Result};
use crate::measures::{BoxBounds, GridSpace, ParameterPoint};
use crate::scalar::{creal, pairwise_sum, real, Cplx, Real};
use rand::RngCore;
use std::sync::Arc;

/// Isotropic-per-axis Gaussian bump used as a mixture component.
#[derive(Debug, Clone)]
pub struct GaussianComponent<T> {
    pub mean: Vec<T>,
    pub sd: Vec<T>,
}

impl<T: Real> GaussianComponent<T> {
    /// Unnormalized value `exp(−Σ ((u−m)/s)²/2)`.
    fn raw(&self, u: &[T]) -> T {
        let mut acc = T::zero();
        for k in 0..self.mean.len() {
            let z = (u[k] - self.mean[k]) / self.sd[k];
            acc = acc + z * z;
        }
        (-acc / real::<T>(2.0)).exp()
    }
}

/// Affine logit `c + g·θ + h·x` feeding the weight softmax.
#[derive(Debug, Clone)]
pub struct WeightAffine<T> {
    pub constant: T,
    pub theta_coefs: Vec<T>,
    pub x_coefs: Vec<T>,
}

impl<T: Real> WeightAffine<T> {
    fn eval(&self, eta: &ParameterPoint<T>, x: &[T]) -> Cplx<T> {
        let mut acc = creal(self.constant);
        for (k, &g) in self.theta_coefs.iter().enumerate() {
            acc = acc + eta.coord(k) * creal::<T>(g);
        }
        for (k, &h) in self.x_coefs.iter().enumerate() {
            acc = acc + creal::<T>(h * x[k]);
        }
        acc
    }
}

#[derive(Debug)]
pub struct MixtureModel<T> {
    space: Arc<GridSpace<T>>,
    obs: ObsSpace<T>,
    components_x: Vec<GaussianComponent<T>>,
    components_y: Vec<GaussianComponent<T>>,
    /// Quadrature normalizers: `v_i = raw_i / norm_x[i]` on the state grid.
    norm_x: Vec<T>,
    norm_y: Vec<T>,
    a_affine: Vec<WeightAffine<T>>,
    b_affine: Vec<WeightAffine<T>>,
    param_box: BoxBounds<T>,
    delta: T,
    /// Envelope constant: `φ(y) = c_phi · Σ_j w_j(y)`.
    c_phi: T,
    /// Log-envelope scale: `ψ(y) = c_psi · (1 + Σ_j |ln w_j(y)|)`.
    c_psi: T,
}

impl<T: Real> MixtureModel<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        state_bounds: BoxBounds<T>,
        state_resolution: &[usize],
        obs_bounds: BoxBounds<T>,
        obs_resolution: &[usize],
        components_x: Vec<GaussianComponent<T>>,
        components_y: Vec<GaussianComponent<T>>,
        a_affine: Vec<WeightAffine<T>>,
        b_affine: Vec<WeightAffine<T>>,
        param_box: BoxBounds<T>,
        delta: T,
    ) -> Result<Arc<Self>> {
        if components_x.len() != a_affine.len() || components_y.len() != b_affine.len() {
            return Err(HmmError::InvalidModel(
                "one weight logit per mixture component required".into(),
            ));
        }
        if components_x.is_empty() || components_y.is_empty() {
            return Err(HmmError::InvalidModel("empty mixture".into()));
        }
        let d = param_box.dim();
        let dx = state_bounds.dim();
        let dy = obs_bounds.dim();
        for c in &components_x {
            if c.mean.len() != dx || c.sd.len() != dx || c.sd.iter().any(|s| *s <= T::zero()) {
                return Err(HmmError::InvalidModel("bad state component".into()));
            }
        }
        for c in &components_y {
            if c.mean.len() != dy || c.sd.len() != dy || c.sd.iter().any(|s| *s <= T::zero()) {
                return Err(HmmError::InvalidModel("bad observation component".into()));
            }
        }
        for a in a_affine.iter().chain(&b_affine) {
            if a.theta_coefs.len() != d {
                return Err(HmmError::InvalidModel(
                    "weight logit θ-coefficients must match param dim".into(),
                ));
            }
        }
        if a_affine.iter().any(|a| a.x_coefs.len() != dx)
            || b_affine.iter().any(|b| b.x_coefs.len() != dx)
        {
            return Err(HmmError::InvalidModel(
                "weight logit x-coefficients must match state dim".into(),
            ));
        }
        if delta <= T::zero() || delta >= T::one() {
            return Err(HmmError::InvalidModel("delta_model must be in (0,1)".into()));
        }
        let space = GridSpace::uniform(state_bounds, state_resolution)?;
        let obs_grid = GridSpace::uniform(obs_bounds, obs_resolution)?;

        let quad = |grid: &GridSpace<T>, c: &GaussianComponent<T>| {
            let vals: Vec<T> = (0..grid.len())
                .map(|i| c.raw(grid.point(i)) * grid.weight(i))
                .collect();
            pairwise_sum(&vals)
        };
        let norm_x: Vec<T> = components_x.iter().map(|c| quad(&space, c)).collect();
        let norm_y: Vec<T> = components_y.iter().map(|c| quad(&obs_grid, c)).collect();
        if norm_x.iter().chain(&norm_y).any(|n| !(*n > T::zero())) {
            return Err(HmmError::InvalidModel(
                "component mass vanishes on the truncation box".into(),
            ));
        }

        let mut model = Self {
            space,
            obs: ObsSpace::Continuous { grid: obs_grid },
            components_x,
            components_y,
            norm_x,
            norm_y,
            a_affine,
            b_affine,
            param_box,
            delta,
            c_phi: T::one(),
            c_psi: T::one(),
        };

        let nodes: Vec<(Observation<T>, T)> = (0..model.obs.quadrature_len())
            .map(|i| model.obs.quadrature_node(i))
            .collect();
        let w_sum = |model: &Self, y: &Observation<T>| -> T {
            let p = match y {
                Observation::Point(p) => p.clone(),
                Observation::Symbol(_) => return T::zero(),
            };
            let vals: Vec<T> = model
                .components_y
                .iter()
                .zip(&model.norm_y)
                .map(|(c, &z)| c.raw(&p) / z)
                .collect();
            pairwise_sum(&vals)
        };
        let m_ref = &model;
        let max_ratio =
            validate_continuation(m_ref, &nodes, &|y: &Observation<T>| w_sum(m_ref, y))?;
        model.c_phi = (max_ratio * real::<T>(1.05)).max(real::<T>(1e-12));

        // c_psi makes ψ dominate |ln φ| on the observation grid
        let mut c_psi = T::one();
        for (y, _) in &nodes {
            let ws = w_sum(&model, y);
            let phi = model.c_phi * ws;
            let denom = T::one() + model.sum_abs_log_w(y);
            let need = phi.ln().abs() / denom;
            if need > c_psi {
                c_psi = need;
            }
        }
        model.c_psi = c_psi * real::<T>(1.05);
        Ok(Arc::new(model))
    }

    fn sum_abs_log_w(&self, y: &Observation<T>) -> T {
        let p = match y {
            Observation::Point(p) => p,
            Observation::Symbol(_) => return T::zero(),
        };
        let vals: Vec<T> = self
            .components_y
            .iter()
            .zip(&self.norm_y)
            .map(|(c, &z)| (c.raw(p) / z).ln().abs())
            .collect();
        pairwise_sum(&vals)
    }

    fn weights_at(
        &self,
        affines: &[WeightAffine<T>],
        eta: &ParameterPoint<T>,
        x: &[T],
    ) -> Vec<Cplx<T>> {
        let logits: Vec<Cplx<T>> = affines.iter().map(|a| a.eval(eta, x)).collect();
        softmax(&logits)
    }

    fn obs_point<'a>(&self, y: &'a Observation<T>) -> Result<&'a [T]> {
        match y {
            Observation::Point(p) => {
                let ObsSpace::Continuous { grid } = &self.obs else {
                    unreachable!()
                };
                if !grid.bounds().contains(p) {
                    return Err(HmmError::OutOfBounds {
                        point: p.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                    });
                }
                Ok(p)
            }
            Observation::Symbol(_) => Err(HmmError::InvalidArgument(
                "mixture model expects point observations".into(),
            )),
        }
    }
}

impl<T: Real> ModelFamily<T> for MixtureModel<T> {
    fn name(&self) -> &str {
        "mixture"
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
        if !self.space.bounds().contains(x_next) || !self.space.bounds().contains(x) {
            return Err(HmmError::OutOfBounds {
                point: x_next.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        let a = self.weights_at(&self.a_affine, eta, x);
        let mut acc = crate::scalar::czero();
        for (i, comp) in self.components_x.iter().enumerate() {
            acc = acc + a[i] * creal::<T>(comp.raw(x_next) / self.norm_x[i]);
        }
        Ok(acc)
    }

    fn observation_density(
        &self,
        eta: &ParameterPoint<T>,
        y: &Observation<T>,
        x: &[T],
    ) -> Result<Cplx<T>> {
        self.check_continuation(eta)?;
        let p = self.obs_point(y)?;
        let b = self.weights_at(&self.b_affine, eta, x);
        let mut acc = crate::scalar::czero();
        for (j, comp) in self.components_y.iter().enumerate() {
            acc = acc + b[j] * creal::<T>(comp.raw(p) / self.norm_y[j]);
        }
        Ok(acc)
    }

    fn transition_row(&self, eta: &ParameterPoint<T>, x_index: usize) -> Result<Vec<Cplx<T>>> {
        self.check_continuation(eta)?;
        let x = self.space.point(x_index).to_vec();
        let a = self.weights_at(&self.a_affine, eta, &x);
        Ok((0..self.space.len())
            .map(|g| {
                let xn = self.space.point(g);
                let mut acc = crate::scalar::czero();
                for (i, comp) in self.components_x.iter().enumerate() {
                    acc = acc + a[i] * creal::<T>(comp.raw(xn) / self.norm_x[i]);
                }
                acc
            })
            .collect())
    }

    fn envelope(&self, _eta: &ParameterPoint<T>, y: &Observation<T>) -> Cplx<T> {
        let sum = match y {
            Observation::Point(p) => {
                let vals: Vec<T> = self
                    .components_y
                    .iter()
                    .zip(&self.norm_y)
                    .map(|(c, &z)| c.raw(p) / z)
                    .collect();
                pairwise_sum(&vals)
            }
            Observation::Symbol(_) => T::one(),
        };
        creal(self.c_phi * sum)
    }

    fn log_envelope_bound(&self, y: &Observation<T>) -> T {
        self.c_psi * (T::one() + self.sum_abs_log_w(y))
    }

    fn sample_transition(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<T>> {
        let a: Vec<T> = self
            .weights_at(&self.a_affine, theta, x)
            .iter()
            .map(|c| c.re)
            .collect();
        let i = sample_categorical(&a, rng);
        let comp = &self.components_x[i];
        let bounds = self.space.bounds();
        for _ in 0..REJECTION_BUDGET {
            let draw: Vec<T> = (0..bounds.dim())
                .map(|k| comp.mean[k] + comp.sd[k] * sample_std_normal::<T>(rng))
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
        let b: Vec<T> = self
            .weights_at(&self.b_affine, theta, x)
            .iter()
            .map(|c| c.re)
            .collect();
        let j = sample_categorical(&b, rng);
        let comp = &self.components_y[j];
        let ObsSpace::Continuous { grid } = &self.obs else {
            unreachable!()
        };
        let bounds = grid.bounds();
        for _ in 0..REJECTION_BUDGET {
            let draw: Vec<T> = (0..bounds.dim())
                .map(|k| comp.mean[k] + comp.sd[k] * sample_std_normal::<T>(rng))
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn transition_rows_integrate_to_one() {
        let m = fixtures::mixture_fixture::<f64>();
        let theta = fixtures::mixture_theta::<f64>();
        let space = m.state_space().clone();
        for xi in (0..space.len()).step_by(7) {
            let row = m.transition_row(&theta, xi).unwrap();
            let mass: f64 = row
                .iter()
                .enumerate()
                .map(|(g, c)| c.re * space.weight(g))
                .sum();
            assert!((mass - 1.0).abs() < 1e-8, "row {xi} mass {mass}");
        }
    }

    #[test]
    fn emission_integrates_to_one() {
        let m = fixtures::mixture_fixture::<f64>();
        let theta = fixtures::mixture_theta::<f64>();
        let obs = m.obs_space().clone();
        let x = m.state_space().point(3).to_vec();
        let mut mass = 0.0;
        for i in 0..obs.quadrature_len() {
            let (y, w) = obs.quadrature_node(i);
            mass += m.observation_density(&theta, &y, &x).unwrap().re * w;
        }
        assert!((mass - 1.0).abs() < 1e-8);
    }

    #[test]
    fn single_component_mixture_ignores_parameter() {
        let bounds = BoxBounds::new(vec![-1.0], vec![1.0]).unwrap();
        let obs_bounds = BoxBounds::new(vec![-2.0], vec![2.0]).unwrap();
        let m = MixtureModel::new(
            bounds,
            &[16],
            obs_bounds,
            &[16],
            vec![GaussianComponent {
                mean: vec![0.0],
                sd: vec![0.8],
            }],
            vec![GaussianComponent {
                mean: vec![0.1],
                sd: vec![0.9],
            }],
            vec![WeightAffine {
                constant: 0.0,
                theta_coefs: vec![0.7],
                x_coefs: vec![0.3],
            }],
            vec![WeightAffine {
                constant: 0.0,
                theta_coefs: vec![-0.4],
                x_coefs: vec![0.0],
            }],
            BoxBounds::new(vec![-0.5], vec![0.5]).unwrap(),
            0.2,
        )
        .unwrap();
        let y = Observation::Point(vec![0.4]);
        let t1 = ParameterPoint::real_point(&[-0.3]);
        let t2 = ParameterPoint::real_point(&[0.4]);
        let r1 = m.joint_density(&t1, &y, &[0.2], &[-0.2]).unwrap();
        let r2 = m.joint_density(&t2, &y, &[0.2], &[-0.2]).unwrap();
        assert!((r1 - r2).norm() < 1e-14);
    }

    #[test]
    fn envelope_dominates_on_random_tuples() {
        let m = fixtures::mixture_fixture::<f64>();
        let theta = fixtures::mixture_theta::<f64>();
        let delta = m.delta_model();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let bounds = m.state_space().bounds().clone();
        let obs_bounds = match m.obs_space() {
            ObsSpace::Continuous { grid } => grid.bounds().clone(),
            _ => unreachable!(),
        };
        let mut uni = |lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng);
        for _ in 0..10_000 {
            let x = vec![uni(bounds.lower[0], bounds.upper[0])];
            let xn = vec![uni(bounds.lower[0], bounds.upper[0])];
            let y = Observation::Point(vec![uni(obs_bounds.lower[0], obs_bounds.upper[0])]);
            let im = [uni(-delta, delta), uni(-delta, delta)];
            let eta = ParameterPoint::complex_point(&theta.re(), &im).unwrap();
            let r = m.joint_density(&eta, &y, &xn, &x).unwrap();
            let env = m.envelope(&eta, &y);
            assert!(
                r.norm() <= env.norm() * (1.0 + 1e-12),
                "violation: |r| {} > |phi| {}",
                r.norm(),
                env.norm()
            );
        }
    }

    #[test]
    fn normalization_over_random_parameters() {
        let m = fixtures::mixture_fixture::<f64>();
        let bx = m.param_box().clone();
        let space = m.state_space().clone();
        let obs = m.obs_space().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        for _ in 0..20 {
            let theta = ParameterPoint::real_point(&[
                bx.lower[0] + (bx.upper[0] - bx.lower[0]) * rand::Rng::random::<f64>(&mut rng),
                bx.lower[1] + (bx.upper[1] - bx.lower[1]) * rand::Rng::random::<f64>(&mut rng),
            ]);
            for xi in 0..space.len() {
                let row = m.transition_row(&theta, xi).unwrap();
                let mass: f64 = row
                    .iter()
                    .enumerate()
                    .map(|(g, c)| c.re * space.weight(g))
                    .sum();
                assert!((mass - 1.0).abs() < 1e-6, "p row {xi} mass {mass}");
            }
            for xi in (0..space.len()).step_by(11) {
                let x = space.point(xi).to_vec();
                let mut mass = 0.0;
                for i in 0..obs.quadrature_len() {
                    let (y, w) = obs.quadrature_node(i);
                    mass += m.observation_density(&theta, &y, &x).unwrap().re * w;
                }
                assert!((mass - 1.0).abs() < 1e-6, "q at {xi} mass {mass}");
            }
        }
    }

    #[test]
    fn analyticity_consistency_hundred_tuples() {
        // complex step (h = 1e-20) vs central finite difference on the
        // joint density, each real coordinate, 100 random tuples
        let m = fixtures::mixture_fixture::<f64>();
        let theta = fixtures::mixture_theta::<f64>();
        let bounds = m.state_space().bounds().clone();
        let obs_bounds = match m.obs_space() {
            ObsSpace::Continuous { grid } => grid.bounds().clone(),
            _ => unreachable!(),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let mut uni = |lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng);
        for _ in 0..100 {
            let x = vec![uni(bounds.lower[0], bounds.upper[0])];
            let xn = vec![uni(bounds.lower[0], bounds.upper[0])];
            let y = Observation::Point(vec![uni(obs_bounds.lower[0], obs_bounds.upper[0])]);
            let f =
                |p: &ParameterPoint<f64>| m.joint_density(p, &y, &xn, &x).unwrap();
            for k in 0..2 {
                let h = 1e-20;
                let cs = f(&theta.shifted(k, num_complex::Complex::new(0.0, h))).im / h;
                let step = 1e-6;
                let fd = (f(&theta.shifted(k, num_complex::Complex::new(step, 0.0))).re
                    - f(&theta.shifted(k, num_complex::Complex::new(-step, 0.0))).re)
                    / (2.0 * step);
                assert!(
                    (cs - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "coord {k}: cs {cs} fd {fd}"
                );
            }
        }
    }

    #[test]
    fn truncated_draws_stay_in_box() {
        let m = fixtures::mixture_fixture::<f64>();
        let theta = fixtures::mixture_theta::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bounds = m.state_space().bounds().clone();
        let mut x = vec![0.0];
        for _ in 0..5_000 {
            let (xn, y) = m.sample_step(&theta, &x, &mut rng).unwrap();
            assert!(bounds.contains(&xn));
            assert!(m.obs_space().contains(&y));
            x = xn;
        }
    }
}
