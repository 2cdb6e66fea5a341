//! Entropy and log-likelihood rate estimators.
//!
//! `h_n(θ,λ) = −E[(1/n) log q^n_θ(Y_{1:n}|λ)]` with the expectation over
//! the model's own observation law; `l_n(θ,λ)` scores data from a separate
//! true model. Expectations are Monte Carlo over trajectories, each with
//! its own counter-derived random stream, reduced pairwise in fixed index
//! order so results are independent of thread scheduling. Horizons share
//! trajectories through Φ prefix sums; the limit is obtained from a
//! `value_n ≈ limit + c/n` least-squares fit, the decay shape the theory
//! provides.

use crate::error::{HmmError, Result};
use crate::filter::{filter_path_recording, FilterPass, FilterState};
use crate::measures::{GridMeasure, ParameterPoint};
use crate::models::{FiniteModel, ModelFamily, Observation};
use crate::rng::{stream, TAG_TRAJECTORY};
use crate::scalar::{linear_fit, mean_stderr, pairwise_sum, real, Cplx, Real};
use rand::{Rng, RngCore};
use rayon::prelude::*;
use std::sync::Arc;

/// One rate estimate at a finite horizon.
#[derive(Debug, Clone)]
pub struct RateEstimate<T> {
    pub horizon: usize,
    /// Real for real parameters; complex when probing a continuation.
    pub value: Cplx<T>,
    /// Monte Carlo standard error (of the real part).
    pub stderr: T,
    pub num_traj: usize,
    pub aborted: usize,
    /// `(limit, c)` from a `limit + c/n` fit, when one was attached.
    pub extrapolated_limit: Option<(T, T)>,
}

/// A data-generating chain: a family member at a fixed real parameter.
#[derive(Clone)]
pub struct TrueModel<T> {
    pub model: Arc<dyn ModelFamily<T>>,
    pub theta: ParameterPoint<T>,
    pub init: GridMeasure<T>,
}

impl<T: Real> TrueModel<T> {
    pub fn new(
        model: Arc<dyn ModelFamily<T>>,
        theta: ParameterPoint<T>,
        init: GridMeasure<T>,
    ) -> Result<Self> {
        if !theta.is_real() {
            return Err(HmmError::InvalidArgument(
                "true model parameter must be real".into(),
            ));
        }
        if !init.is_probability(real::<T>(1e-9)) {
            return Err(HmmError::InvalidArgument(
                "true model initialization must be a probability measure".into(),
            ));
        }
        Ok(Self { model, theta, init })
    }

    /// Draws `X₀ ~ init` by inverse CDF over the grid masses.
    pub fn sample_initial_state(&self, rng: &mut dyn RngCore) -> Vec<T> {
        let space = self.init.space();
        let u = real::<T>(rng.random::<f64>());
        let mut acc = T::zero();
        let mut idx = space.len() - 1;
        for i in 0..space.len() {
            acc = acc + self.init.density()[i].re * space.weight(i);
            if u < acc {
                idx = i;
                break;
            }
        }
        space.point(idx).to_vec()
    }

    /// Samples an observation path `Y_{1:n}`.
    pub fn sample_observations(
        &self,
        n: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<Observation<T>>> {
        let mut x = self.sample_initial_state(rng);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let (xn, y) = self.model.sample_step(&self.theta, &x, rng)?;
            ys.push(y);
            x = xn;
        }
        Ok(ys)
    }
}

/// Per-horizon values of `(1/n)·Σ_{k≤n} Φ_k` along shared trajectories.
fn per_horizon_values<T: Real>(
    data: &TrueModel<T>,
    score_model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    horizons: &[usize],
    num_traj: usize,
    seed: u64,
) -> Result<Vec<Vec<Option<Cplx<T>>>>> {
    if horizons.is_empty() || num_traj == 0 {
        return Err(HmmError::InvalidArgument(
            "need at least one horizon and one trajectory".into(),
        ));
    }
    if horizons.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HmmError::InvalidArgument(
            "horizons must be strictly increasing".into(),
        ));
    }
    let n_max = *horizons.last().unwrap();
    // per trajectory: per-horizon value, None when the filter aborted
    let rows: Vec<Option<Vec<Cplx<T>>>> = (0..num_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, TAG_TRAJECTORY, i as u64);
            let ys = match data.sample_observations(n_max, &mut rng) {
                Ok(ys) => ys,
                Err(_) => return None,
            };
            let (_, phis) = match filter_path_recording(score_model, eta, init, &ys) {
                Ok(r) => r,
                Err(_) => return None,
            };
            let mut vals = Vec::with_capacity(horizons.len());
            let mut acc = Cplx::new(T::zero(), T::zero());
            let mut k = 0usize;
            for (step, phi) in phis.iter().enumerate() {
                acc = acc + *phi;
                if step + 1 == horizons[k] {
                    vals.push(acc / real::<T>(horizons[k] as f64));
                    k += 1;
                    if k == horizons.len() {
                        break;
                    }
                }
            }
            Some(vals)
        })
        .collect();

    let aborted = rows.iter().filter(|r| r.is_none()).count();
    if aborted * 100 > num_traj {
        return Err(HmmError::Estimation(format!(
            "{aborted} of {num_traj} trajectories aborted (> 1%)"
        )));
    }
    let mut out = vec![Vec::with_capacity(num_traj); horizons.len()];
    for row in rows {
        match row {
            Some(vals) => {
                for (h, v) in vals.into_iter().enumerate() {
                    out[h].push(Some(v));
                }
            }
            None => {
                for col in out.iter_mut() {
                    col.push(None);
                }
            }
        }
    }
    Ok(out)
}

fn summarize<T: Real>(
    horizon: usize,
    sign: T,
    vals: &[Option<Cplx<T>>],
) -> RateEstimate<T> {
    let kept: Vec<Cplx<T>> = vals.iter().flatten().copied().collect();
    let re: Vec<T> = kept.iter().map(|c| c.re * sign).collect();
    let im: Vec<T> = kept.iter().map(|c| c.im * sign).collect();
    let (mean_re, se) = mean_stderr(&re);
    let mean_im = pairwise_sum(&im) / real::<T>(re.len().max(1) as f64);
    RateEstimate {
        horizon,
        value: Cplx::new(mean_re, mean_im),
        stderr: se,
        num_traj: kept.len(),
        aborted: vals.len() - kept.len(),
        extrapolated_limit: None,
    }
}

/// Monte Carlo estimate of the average entropy `h_n(θ,λ)` at several
/// horizons sharing trajectories.
pub fn estimate_entropy_horizons<T: Real>(
    model: &Arc<dyn ModelFamily<T>>,
    theta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    horizons: &[usize],
    num_traj: usize,
    seed: u64,
) -> Result<Vec<RateEstimate<T>>> {
    if !theta.is_real() {
        return Err(HmmError::InvalidArgument(
            "entropy estimation needs a real parameter".into(),
        ));
    }
    let data = TrueModel::new(model.clone(), theta.clone(), init.clone())?;
    let values = per_horizon_values(&data, model.as_ref(), theta, init, horizons, num_traj, seed)?;
    Ok(horizons
        .iter()
        .zip(&values)
        .map(|(&n, vals)| summarize(n, -T::one(), vals))
        .collect())
}

/// `h_n(θ,λ)` at a single horizon.
pub fn estimate_entropy<T: Real>(
    model: &Arc<dyn ModelFamily<T>>,
    theta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    n: usize,
    num_traj: usize,
    seed: u64,
) -> Result<RateEstimate<T>> {
    Ok(estimate_entropy_horizons(model, theta, init, &[n], num_traj, seed)?.remove(0))
}

/// Expected average log-likelihood `l_n(η,λ)` of data from `true_model`
/// scored under `(model, η)`; complex η supported for analyticity probes.
pub fn estimate_loglik_horizons<T: Real>(
    true_model: &TrueModel<T>,
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    horizons: &[usize],
    num_traj: usize,
    seed: u64,
) -> Result<Vec<RateEstimate<T>>> {
    let values = per_horizon_values(true_model, model, eta, init, horizons, num_traj, seed)?;
    Ok(horizons
        .iter()
        .zip(&values)
        .map(|(&n, vals)| summarize(n, T::one(), vals))
        .collect())
}

pub fn estimate_loglik<T: Real>(
    true_model: &TrueModel<T>,
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    n: usize,
    num_traj: usize,
    seed: u64,
) -> Result<RateEstimate<T>> {
    Ok(
        estimate_loglik_horizons(true_model, model, eta, init, &[n], num_traj, seed)?
            .remove(0),
    )
}

const ENUMERATION_BUDGET: f64 = 1e7;

/// Exact `h_n` for a finite model by enumerating every observation word
/// and running the forward recursion; feasible while `Mⁿ ≤ 10⁷`.
pub fn exact_entropy<T: Real>(
    model: &FiniteModel<T>,
    theta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    n: usize,
) -> Result<T> {
    let m = model.symbols();
    let states = model.states();
    if (m as f64).powi(n as i32) > ENUMERATION_BUDGET {
        return Err(HmmError::BudgetExceeded(format!(
            "{m}^{n} observation words exceed the enumeration budget"
        )));
    }
    if n == 0 {
        return Err(HmmError::InvalidArgument("horizon must be positive".into()));
    }
    let p = model.transition_matrix(theta)?;
    let q = model.emission_matrix(theta)?;
    let lambda: Vec<T> = (0..states).map(|x| init.density()[x].re).collect();

    // depth-first over observation words, carrying the forward vector
    fn recurse<T: Real>(
        p: &[Vec<Cplx<T>>],
        q: &[Vec<Cplx<T>>],
        alpha: &[T],
        depth: usize,
        acc: &mut T,
    ) {
        let states = alpha.len();
        let m = q[0].len();
        for y in 0..m {
            let mut next = vec![T::zero(); states];
            for (to, nx) in next.iter_mut().enumerate() {
                let mut s = T::zero();
                for (from, &a) in alpha.iter().enumerate() {
                    s = s + p[from][to].re * a;
                }
                *nx = q[to][y].re * s;
            }
            if depth == 1 {
                let prob: T = next.iter().fold(T::zero(), |a, &b| a + b);
                if prob > T::zero() {
                    *acc = *acc + prob * prob.ln();
                }
            } else {
                recurse(p, q, &next, depth - 1, acc);
            }
        }
    }

    let mut acc = T::zero();
    recurse(&p, &q, &lambda, n, &mut acc);
    Ok(-acc / real::<T>(n as f64))
}

/// Least-squares fit `value_n = limit + c/n`; returns `(limit, c, rms
/// residual)`. Needs at least three horizons.
pub fn extrapolate<T: Real>(points: &[(usize, T)]) -> Result<(T, T, T)> {
    if points.len() < 3 {
        return Err(HmmError::InvalidArgument(
            "extrapolation needs at least 3 horizons".into(),
        ));
    }
    let xs: Vec<T> = points
        .iter()
        .map(|&(n, _)| T::one() / real::<T>(n as f64))
        .collect();
    let ys: Vec<T> = points.iter().map(|&(_, v)| v).collect();
    let (limit, c, residual) = linear_fit(&xs, &ys);
    Ok((limit, c, residual))
}

/// Attaches an extrapolated limit to a set of estimates at increasing
/// horizons (in place on the last one) and returns `(limit, c, residual)`.
pub fn extrapolate_estimates<T: Real>(
    estimates: &mut [RateEstimate<T>],
) -> Result<(T, T, T)> {
    let pts: Vec<(usize, T)> = estimates
        .iter()
        .map(|e| (e.horizon, e.value.re))
        .collect();
    let (limit, c, residual) = extrapolate(&pts)?;
    if let Some(last) = estimates.last_mut() {
        last.extrapolated_limit = Some((limit, c));
    }
    Ok((limit, c, residual))
}

/// Sensitivity of `l_n` to the filter initialization, under common random
/// numbers: both initializations score the same observation paths.
#[derive(Debug, Clone)]
pub struct LambdaIndependenceReport<T> {
    /// Per horizon: `(n, |l_n(λ') − l_n(λ'')|, combined stderr)`.
    pub gaps: Vec<(usize, T, T)>,
    /// Fitted decay exponent of the gaps in `n` (positive ≈ 1 means 1/n).
    pub decay_exponent: Option<T>,
    pub limit_a: (T, T, T),
    pub limit_b: (T, T, T),
    /// `|limit_a − limit_b|`.
    pub limit_gap: T,
}

/// Compares `l_n(θ, λ')` and `l_n(θ, λ'')` on shared data from
/// `true_model`, fits the gap decay, and extrapolates both limits.
pub fn lambda_independence<T: Real>(
    model: &Arc<dyn ModelFamily<T>>,
    theta: &ParameterPoint<T>,
    true_model: &TrueModel<T>,
    init_a: &GridMeasure<T>,
    init_b: &GridMeasure<T>,
    horizons: &[usize],
    num_traj: usize,
    seed: u64,
) -> Result<LambdaIndependenceReport<T>> {
    let mut est_a = estimate_loglik_horizons(
        true_model,
        model.as_ref(),
        theta,
        init_a,
        horizons,
        num_traj,
        seed,
    )?;
    let mut est_b = estimate_loglik_horizons(
        true_model,
        model.as_ref(),
        theta,
        init_b,
        horizons,
        num_traj,
        seed,
    )?;
    let gaps: Vec<(usize, T, T)> = est_a
        .iter()
        .zip(&est_b)
        .map(|(a, b)| {
            let se = (a.stderr * a.stderr + b.stderr * b.stderr).sqrt();
            (a.horizon, (a.value.re - b.value.re).abs(), se)
        })
        .collect();

    let floor = real::<T>(1e-14);
    let usable: Vec<(T, T)> = gaps
        .iter()
        .filter(|(_, g, _)| *g > floor)
        .map(|&(n, g, _)| (real::<T>(n as f64).ln(), g.ln()))
        .collect();
    let decay_exponent = if usable.len() >= 3 {
        let xs: Vec<T> = usable.iter().map(|p| p.0).collect();
        let ys: Vec<T> = usable.iter().map(|p| p.1).collect();
        let (_, slope, _) = linear_fit(&xs, &ys);
        Some(-slope)
    } else {
        None
    };

    let limit_a = extrapolate_estimates(&mut est_a)?;
    let limit_b = extrapolate_estimates(&mut est_b)?;
    let limit_gap = (limit_a.0 - limit_b.0).abs();
    Ok(LambdaIndependenceReport {
        gaps,
        decay_exponent,
        limit_a,
        limit_b,
        limit_gap,
    })
}

/// Runs the filter once on a frozen path and returns the Φ-sum; the
/// building block the analyticity probes evaluate at complex parameters.
pub fn path_log_likelihood<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    ys: &[Observation<T>],
) -> Result<Cplx<T>> {
    let pass = FilterPass::new(model, eta)?;
    let mut state = FilterState::init(init.clone());
    for y in ys {
        pass.step(&mut state, y)?;
    }
    Ok(state.log_normalizer_sum)
}
