//! Numerical analyticity verification.
//!
//! The probes act on scalar evaluators `η ↦ f(η)`. For rate functions the
//! evaluator freezes a set of observation paths up front (common random
//! numbers), which makes the empirical `l_n` a deterministic, analytic
//! function of η — a finite sum of filter log-normalizers — so the checks
//! are exact rather than statistical:
//!
//! * complex-step gradients `Im f(θ + ih e_k)/h`, immune to subtractive
//!   cancellation, cross-checked against central differences;
//! * Taylor coefficients by trapezoid quadrature of the Cauchy integral on
//!   a circle inside the validated vicinity, exponentially accurate;
//! * Cauchy–Riemann residuals `|∂f/∂(re) + i ∂f/∂(im)|`, zero for analytic
//!   maps and order one for planted anti-analytic defects.

use crate::error::{HmmError, Result};
use crate::measures::{GridMeasure, ParameterPoint};
use crate::models::{ModelFamily, Observation};
use crate::rates::{path_log_likelihood, TrueModel};
use crate::rng::{stream, TAG_OBS_PATH};
use crate::scalar::{czero, pairwise_sum_cplx, real, Cplx, Real};
use serde::Serialize;
use std::sync::Arc;

/// Gradient of `f` at a real point via the complex step `Im f(θ+ih e_k)/h`.
pub fn complex_step_grad<T, F>(f: F, theta: &ParameterPoint<T>, h: Option<T>) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&ParameterPoint<T>) -> Result<Cplx<T>>,
{
    let h = h.unwrap_or_else(|| real::<T>(1e-20));
    (0..theta.dim())
        .map(|k| {
            let shifted = theta.shifted(k, Cplx::new(T::zero(), h));
            Ok(f(&shifted)?.im / h)
        })
        .collect()
}

/// Central-difference gradient, the independent cross-check.
pub fn central_diff_grad<T, F>(f: F, theta: &ParameterPoint<T>, step: T) -> Result<Vec<T>>
where
    T: Real,
    F: Fn(&ParameterPoint<T>) -> Result<Cplx<T>>,
{
    (0..theta.dim())
        .map(|k| {
            let up = f(&theta.shifted(k, Cplx::new(step, T::zero())))?.re;
            let dn = f(&theta.shifted(k, Cplx::new(-step, T::zero())))?.re;
            Ok((up - dn) / (step + step))
        })
        .collect()
}

/// Circle probe for Cauchy-integral Taylor extraction.
#[derive(Debug, Clone)]
pub struct TaylorProbe<T> {
    pub center: ParameterPoint<T>,
    /// Unit vector in parameter space.
    pub direction: Vec<T>,
    pub radius: T,
    pub num_nodes: usize,
    /// Extracted coefficients `c_0..c_K` (filled by [`cauchy_coeffs`]).
    pub coefficients: Vec<Cplx<T>>,
    /// Raw circle Fourier modes `c_k·radius^k`; reconstruction uses these
    /// to avoid amplifying roundoff at high order.
    raw: Vec<Cplx<T>>,
}

impl<T: Real> TaylorProbe<T> {
    pub fn new(
        center: ParameterPoint<T>,
        direction: Vec<T>,
        radius: T,
        num_nodes: usize,
    ) -> Result<Self> {
        if !center.is_real() {
            return Err(HmmError::InvalidArgument("probe center must be real".into()));
        }
        if direction.len() != center.dim() {
            return Err(HmmError::InvalidArgument(
                "probe direction dimension mismatch".into(),
            ));
        }
        let norm = direction
            .iter()
            .fold(T::zero(), |a, &d| a + d * d)
            .sqrt();
        if !(norm > T::zero()) || radius <= T::zero() || num_nodes < 4 {
            return Err(HmmError::InvalidArgument("degenerate probe".into()));
        }
        let direction = direction.iter().map(|&d| d / norm).collect();
        Ok(Self {
            center,
            direction,
            radius,
            num_nodes,
            coefficients: Vec::new(),
            raw: Vec::new(),
        })
    }

    /// Parameter point `center + z·direction` for complex scalar `z`.
    pub fn at(&self, z: Cplx<T>) -> ParameterPoint<T> {
        let coords = (0..self.center.dim())
            .map(|k| self.center.coord(k) + z * crate::scalar::creal::<T>(self.direction[k]))
            .collect();
        ParameterPoint::from_coords(coords)
    }

    /// Evaluates the truncated series at scalar offset `z` (|z| should be
    /// inside the probe circle).
    pub fn reconstruct(&self, z: Cplx<T>) -> Cplx<T> {
        // Horner in the scaled variable z/r keeps every term bounded by
        // the raw mode size
        let ratio = z / Cplx::new(self.radius, T::zero());
        let mut acc = czero::<T>();
        for raw in self.raw.iter().rev() {
            acc = acc * ratio + raw;
        }
        acc
    }
}

/// Taylor coefficients `c_0..c_K` of `f` on the probe circle via the
/// trapezoid rule (exact for analytic `f` up to aliasing at order
/// `num_nodes − K`).
pub fn cauchy_coeffs<T, F>(f: F, probe: &mut TaylorProbe<T>, order: usize) -> Result<()>
where
    T: Real,
    F: Fn(&ParameterPoint<T>) -> Result<Cplx<T>>,
{
    if 2 * order >= probe.num_nodes {
        return Err(HmmError::InvalidArgument(format!(
            "order {order} aliases with {} circle nodes",
            probe.num_nodes
        )));
    }
    let n = probe.num_nodes;
    let two_pi = real::<T>(2.0 * std::f64::consts::PI);
    let values: Vec<Cplx<T>> = (0..n)
        .map(|j| {
            let phi = two_pi * real::<T>(j as f64) / real::<T>(n as f64);
            let z = Cplx::from_polar(probe.radius, phi);
            f(&probe.at(z))
        })
        .collect::<Result<_>>()?;
    let mut raw = Vec::with_capacity(order + 1);
    let mut coeffs = Vec::with_capacity(order + 1);
    let mut r_pow = T::one();
    for k in 0..=order {
        let terms: Vec<Cplx<T>> = (0..n)
            .map(|j| {
                let phi = two_pi * real::<T>((j * k % n) as f64) / real::<T>(n as f64);
                values[j] * Cplx::from_polar(T::one(), -phi)
            })
            .collect();
        let mode = pairwise_sum_cplx(&terms) / real::<T>(n as f64);
        raw.push(mode);
        coeffs.push(mode / r_pow);
        r_pow = r_pow * probe.radius;
    }
    probe.raw = raw;
    probe.coefficients = coeffs;
    Ok(())
}

/// Conjugate-derivative magnitude `|∂f/∂(re η_k) + i·∂f/∂(im η_k)|` by
/// central differences; zero (to truncation) for analytic `f`.
pub fn cauchy_riemann_residual<T, F>(
    f: F,
    eta: &ParameterPoint<T>,
    coord: usize,
    h: Option<T>,
) -> Result<T>
where
    T: Real,
    F: Fn(&ParameterPoint<T>) -> Result<Cplx<T>>,
{
    let h = h.unwrap_or_else(|| real::<T>(1e-6));
    let two_h = Cplx::new(h + h, T::zero());
    let d_re = (f(&eta.shifted(coord, Cplx::new(h, T::zero())))?
        - f(&eta.shifted(coord, Cplx::new(-h, T::zero())))?)
        / two_h;
    let d_im = (f(&eta.shifted(coord, Cplx::new(T::zero(), h)))?
        - f(&eta.shifted(coord, Cplx::new(T::zero(), -h)))?)
        / two_h;
    Ok((d_re + Cplx::new(T::zero(), T::one()) * d_im).norm())
}

/// Observation paths frozen once so that rate evaluators become
/// deterministic analytic functions of the parameter.
pub struct FrozenPaths<T> {
    paths: Vec<Vec<Observation<T>>>,
    init: GridMeasure<T>,
}

impl<T: Real> FrozenPaths<T> {
    pub fn sample(
        data: &TrueModel<T>,
        init: GridMeasure<T>,
        num_paths: usize,
        n_max: usize,
        seed: u64,
    ) -> Result<Self> {
        let paths = (0..num_paths)
            .map(|i| {
                let mut rng = stream(seed, TAG_OBS_PATH, i as u64);
                data.sample_observations(n_max, &mut rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { paths, init })
    }

    pub fn num_paths(&self) -> usize {
        self.paths.len()
    }

    /// Empirical `l_n(η)` on the frozen paths: the mean of per-path
    /// `(1/n)·log q̂ⁿ`.
    pub fn loglik(
        &self,
        model: &dyn ModelFamily<T>,
        eta: &ParameterPoint<T>,
        n: usize,
    ) -> Result<Cplx<T>> {
        let vals: Vec<Cplx<T>> = self
            .paths
            .iter()
            .map(|ys| {
                Ok(path_log_likelihood(model, eta, &self.init, &ys[..n])?
                    / real::<T>(n as f64))
            })
            .collect::<Result<_>>()?;
        Ok(pairwise_sum_cplx(&vals) / real::<T>(vals.len() as f64))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub observed: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl CheckResult {
    fn new<T: Real>(name: impl Into<String>, observed: T, tolerance: T) -> Self {
        let observed = observed.to_f64().unwrap_or(f64::NAN);
        let tolerance = tolerance.to_f64().unwrap_or(f64::NAN);
        Self {
            name: name.into(),
            observed,
            tolerance,
            passed: observed.is_finite() && observed <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyticityReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    /// First Taylor coefficient (directional rate gradient) per horizon.
    pub c1_by_horizon: Vec<(usize, f64)>,
}

/// Probe configuration for [`analyticity_report`].
#[derive(Debug, Clone)]
pub struct ProbeSettings<T> {
    /// Circle radius; default `δ_model/2`.
    pub radius: Option<T>,
    /// Taylor order `K`; the circle carries `4K` nodes.
    pub order: usize,
    /// Probe direction; default: normalized all-ones.
    pub direction: Option<Vec<T>>,
    pub grad_tol: T,
    pub cr_tol: T,
    pub taylor_tol: T,
}

impl<T: Real> Default for ProbeSettings<T> {
    fn default() -> Self {
        Self {
            radius: None,
            order: 32,
            direction: None,
            grad_tol: real::<T>(1e-5),
            cr_tol: real::<T>(1e-6),
            taylor_tol: real::<T>(1e-8),
        }
    }
}

impl<T: Real> ProbeSettings<T> {
    pub fn scaled(mut self, scale: T) -> Self {
        self.grad_tol = self.grad_tol * scale;
        self.cr_tol = self.cr_tol * scale;
        self.taylor_tol = self.taylor_tol * scale;
        self
    }
}

/// Bundled analyticity verification of the frozen-path `l_n` evaluator:
/// complex-step vs central-difference gradients, Cauchy–Riemann residuals
/// at 8 points on two radii per coordinate, Taylor extraction with
/// reconstruction at half radius, and the stability of `c₁` across
/// horizons.
pub fn analyticity_report<T: Real>(
    model: &Arc<dyn ModelFamily<T>>,
    theta: &ParameterPoint<T>,
    horizons: &[usize],
    num_paths: usize,
    settings: &ProbeSettings<T>,
    seed: u64,
) -> Result<AnalyticityReport> {
    if horizons.is_empty() {
        return Err(HmmError::InvalidArgument("need at least one horizon".into()));
    }
    let n_max = *horizons.last().unwrap();
    let init = GridMeasure::uniform(model.state_space().clone());
    let data = TrueModel::new(model.clone(), theta.clone(), init.clone())?;
    let frozen = FrozenPaths::sample(&data, init, num_paths, n_max, seed)?;

    let delta = model.delta_model();
    let radius = settings.radius.unwrap_or(delta / real::<T>(2.0));
    if radius >= delta {
        return Err(HmmError::InvalidArgument(
            "probe radius must stay inside the validated vicinity".into(),
        ));
    }
    let d = theta.dim();
    let direction = settings
        .direction
        .clone()
        .unwrap_or_else(|| vec![T::one(); d]);

    let f_at = |n: usize| {
        let model = model.clone();
        let frozen = &frozen;
        move |eta: &ParameterPoint<T>| frozen.loglik(model.as_ref(), eta, n)
    };
    let f_top = f_at(n_max);
    let f_center = f_top(theta)?;
    let scale = T::one() + f_center.norm();

    let mut checks = Vec::new();

    // complex-step vs central-difference gradient
    let cs = complex_step_grad(&f_top, theta, None)?;
    let fd = central_diff_grad(&f_top, theta, real::<T>(1e-4))?;
    let mut worst = T::zero();
    for k in 0..d {
        let rel = (cs[k] - fd[k]).abs() / (T::one() + fd[k].abs());
        if rel > worst {
            worst = rel;
        }
    }
    checks.push(CheckResult::new("gradient_agreement", worst, settings.grad_tol));

    // Cauchy–Riemann residuals: 4 angles × 2 radii per coordinate
    let mut worst_cr = T::zero();
    let radii = [radius / real::<T>(2.0), radius * real::<T>(0.9)];
    for k in 0..d {
        for &rho in &radii {
            for j in 0..4 {
                let phi = real::<T>(std::f64::consts::FRAC_PI_2 * j as f64
                    + std::f64::consts::FRAC_PI_4);
                let eta = theta.shifted(k, Cplx::from_polar(rho, phi));
                let res = cauchy_riemann_residual(&f_top, &eta, k, None)?;
                let normalized = res / scale;
                if normalized > worst_cr {
                    worst_cr = normalized;
                }
            }
        }
    }
    checks.push(CheckResult::new(
        "cauchy_riemann_residual",
        worst_cr,
        settings.cr_tol,
    ));

    // Taylor extraction on the top horizon
    let mut probe = TaylorProbe::new(
        theta.clone(),
        direction.clone(),
        radius,
        4 * settings.order,
    )?;
    cauchy_coeffs(&f_top, &mut probe, settings.order)?;

    let c0_err = (probe.coefficients[0] - f_center).norm() / scale;
    checks.push(CheckResult::new("c0_matches_direct", c0_err, real::<T>(1e-10)));

    let mut worst_rec = T::zero();
    let half = radius / real::<T>(2.0);
    for j in 0..4 {
        let phi = real::<T>(2.0 * std::f64::consts::PI * j as f64 / 4.0 + 0.3);
        let z = Cplx::from_polar(half, phi);
        let direct = f_top(&probe.at(z))?;
        let series = probe.reconstruct(z);
        let err = (direct - series).norm() / scale;
        if err > worst_rec {
            worst_rec = err;
        }
    }
    checks.push(CheckResult::new(
        "taylor_reconstruction",
        worst_rec,
        settings.taylor_tol,
    ));

    // directional gradient (c₁) across horizons
    let mut c1_by_horizon = Vec::with_capacity(horizons.len());
    for &n in horizons {
        let f_n = f_at(n);
        let mut p = TaylorProbe::new(theta.clone(), direction.clone(), radius, 16)?;
        cauchy_coeffs(&f_n, &mut p, 2)?;
        c1_by_horizon.push((n, p.coefficients[1].re.to_f64().unwrap_or(f64::NAN)));
    }

    let passed = checks.iter().all(|c| c.passed);
    Ok(AnalyticityReport {
        passed,
        checks,
        c1_by_horizon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::models::ConjugateEmission;

    type C = Cplx<f64>;

    #[test]
    fn complex_step_exact_on_square() {
        let theta = ParameterPoint::real_point(&[3.0]);
        let g = complex_step_grad(
            |p: &ParameterPoint<f64>| Ok(p.coord(0) * p.coord(0)),
            &theta,
            None,
        )
        .unwrap();
        assert_eq!(g[0], 6.0);
    }

    #[test]
    fn complex_step_on_exponential() {
        let theta = ParameterPoint::real_point(&[0.0, 0.0]);
        let f = |p: &ParameterPoint<f64>| Ok((p.coord(0) + p.coord(1) * C::new(2.0, 0.0)).exp());
        let g = complex_step_grad(f, &theta, None).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn cauchy_coeffs_recover_exponential_series() {
        let center = ParameterPoint::real_point(&[0.0, 0.0]);
        let f = |p: &ParameterPoint<f64>| Ok(p.coord(0).exp());
        let mut probe = TaylorProbe::new(center, vec![1.0, 0.0], 0.5, 64).unwrap();
        cauchy_coeffs(f, &mut probe, 6).unwrap();
        let mut fact = 1.0;
        for (k, c) in probe.coefficients.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            assert!(
                (c - C::new(1.0 / fact, 0.0)).norm() < 1e-10,
                "c_{k} = {c:?}"
            );
        }
    }

    #[test]
    fn cauchy_coeffs_vanish_beyond_polynomial_degree() {
        let center = ParameterPoint::real_point(&[0.0]);
        let f = |p: &ParameterPoint<f64>| {
            let z = p.coord(0);
            Ok(C::new(2.0, 0.0) + z * C::new(-1.0, 0.0) + z * z * C::new(0.5, 0.0))
        };
        let mut probe = TaylorProbe::new(center, vec![1.0], 0.7, 64).unwrap();
        cauchy_coeffs(f, &mut probe, 6).unwrap();
        for k in 3..=6 {
            assert!(probe.coefficients[k].norm() < 1e-12, "c_{k} nonzero");
        }
    }

    #[test]
    fn cauchy_coeffs_converged_in_node_count() {
        let center = ParameterPoint::real_point(&[0.0]);
        let f = |p: &ParameterPoint<f64>| Ok((p.coord(0) * C::new(0.9, 0.0)).exp());
        let order = 6;
        let mut probe_a = TaylorProbe::new(center.clone(), vec![1.0], 0.5, 4 * order).unwrap();
        let mut probe_b = TaylorProbe::new(center, vec![1.0], 0.5, 8 * order).unwrap();
        cauchy_coeffs(f, &mut probe_a, order).unwrap();
        cauchy_coeffs(f, &mut probe_b, order).unwrap();
        for k in 0..=order {
            assert!(
                (probe_a.coefficients[k] - probe_b.coefficients[k]).norm() < 1e-9,
                "node-count dependence at k={k}"
            );
        }
    }

    #[test]
    fn aliasing_order_rejected() {
        let center = ParameterPoint::real_point(&[0.0]);
        let mut probe = TaylorProbe::new(center, vec![1.0], 0.5, 16).unwrap();
        let f = |p: &ParameterPoint<f64>| Ok(p.coord(0).exp());
        assert!(cauchy_coeffs(f, &mut probe, 8).is_err());
    }

    #[test]
    fn cauchy_riemann_zero_for_analytic_two_for_conjugate() {
        let eta = ParameterPoint::complex_point(&[0.3], &[0.2]).unwrap();
        let sq = |p: &ParameterPoint<f64>| Ok(p.coord(0) * p.coord(0));
        let res = cauchy_riemann_residual(sq, &eta, 0, None).unwrap();
        assert!(res <= 1e-8, "analytic residual {res}");

        let conj = |p: &ParameterPoint<f64>| Ok(p.coord(0).conj());
        let res = cauchy_riemann_residual(conj, &eta, 0, None).unwrap();
        assert!((res - 2.0).abs() <= 1e-8, "conjugate residual {res}");
    }

    #[test]
    fn frozen_path_log_likelihood_is_analytic() {
        let model: Arc<dyn ModelFamily<f64>> = fixtures::finite_fixture::<f64>();
        let theta = fixtures::finite_theta::<f64>();
        let init = GridMeasure::uniform(model.state_space().clone());
        let data = TrueModel::new(model.clone(), theta.clone(), init.clone()).unwrap();
        let frozen = FrozenPaths::sample(&data, init, 4, 16, 77).unwrap();
        let f = |eta: &ParameterPoint<f64>| frozen.loglik(model.as_ref(), eta, 16);
        let val = f(&theta).unwrap();
        let eta = ParameterPoint::complex_point(&theta.re(), &[0.02, 0.01]).unwrap();
        let res = cauchy_riemann_residual(f, &eta, 0, None).unwrap();
        assert!(
            res <= 1e-6 * (1.0 + val.norm()),
            "path-sum residual {res}"
        );
    }

    #[test]
    fn fixed_path_gradients_agree_to_one_em_six() {
        // module invariant: complex step vs central difference on the
        // fixed-path log-likelihood, several real parameters
        let model: Arc<dyn ModelFamily<f64>> = fixtures::finite_fixture::<f64>();
        let init = GridMeasure::uniform(model.state_space().clone());
        for (i, re) in [[0.0, 0.0], [0.1, -0.1], [-0.15, 0.05], [0.05, 0.12], [-0.1, -0.1]]
            .iter()
            .enumerate()
        {
            let theta = ParameterPoint::real_point(re);
            let data = TrueModel::new(model.clone(), theta.clone(), init.clone()).unwrap();
            let frozen = FrozenPaths::sample(&data, init.clone(), 1, 16, 100 + i as u64).unwrap();
            let f = |eta: &ParameterPoint<f64>| frozen.loglik(model.as_ref(), eta, 16);
            let cs = complex_step_grad(&f, &theta, None).unwrap();
            let fd = central_diff_grad(&f, &theta, 1e-4).unwrap();
            for k in 0..2 {
                assert!(
                    (cs[k] - fd[k]).abs() <= 1e-6 * (1.0 + fd[k].abs()),
                    "θ {re:?} coord {k}: cs {} fd {}",
                    cs[k],
                    fd[k]
                );
            }
        }
    }

    #[test]
    fn report_passes_on_finite_fixture() {
        let model: Arc<dyn ModelFamily<f64>> = fixtures::finite_fixture::<f64>();
        let theta = fixtures::finite_theta::<f64>();
        let report = analyticity_report(
            &model,
            &theta,
            &[8, 16],
            8,
            &ProbeSettings::default(),
            2024,
        )
        .unwrap();
        assert!(report.passed, "checks: {:?}", report.checks);
        assert_eq!(report.c1_by_horizon.len(), 2);
    }

    #[test]
    fn report_fails_on_conjugated_emission() {
        let base: Arc<dyn ModelFamily<f64>> = fixtures::finite_fixture::<f64>();
        let broken: Arc<dyn ModelFamily<f64>> = ConjugateEmission::new(base);
        let theta = fixtures::finite_theta::<f64>();
        let report = analyticity_report(
            &broken,
            &theta,
            &[8],
            4,
            &ProbeSettings::default(),
            2024,
        )
        .unwrap();
        assert!(!report.passed);
        let cr = report
            .checks
            .iter()
            .find(|c| c.name == "cauchy_riemann_residual")
            .unwrap();
        assert!(!cr.passed, "defect must be caught by the CR check");
    }
}
