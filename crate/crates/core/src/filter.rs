//! The optimal filter and its complex-parameter continuation.
//!
//! One filter step maps a (complex) measure ξ through the unnormalized
//! update `R(B|ξ) = ∫∫ 1_B(x') r̃(y,x'|x) μ(dx') ξ(dx)`, takes the
//! log-normalizer `Φ = log R(X|ξ)` on the principal branch, and normalizes
//! `F = R / R(X|ξ)`. The running Φ-sum over a path is exactly the
//! log-density of the observations under the model, which is what the
//! rate estimators consume.
//!
//! `r̃` is the mass-normalized continuation `r̂/ŝ`; for real parameters
//! (and for every family built here, whose densities are quadrature
//! normalized) `ŝ ≡ 1` and `r̃ = r̂`.

use crate::error::{HmmError, Result};
use crate::measures::{GridMeasure, GridSpace, ParameterPoint};
use crate::models::{ModelFamily, ObsSpace, Observation};
use crate::scalar::{cone, creal, czero, pairwise_sum_cplx, real, Cplx, Real};
use std::sync::Arc;

/// Filter trajectory state: current measure, accumulated Φ-sum, step
/// count, and how many steps had a non-positive real normalizer (the
/// regime where the principal branch is no longer trustworthy).
#[derive(Debug, Clone)]
pub struct FilterState<T> {
    pub measure: GridMeasure<T>,
    pub log_normalizer_sum: Cplx<T>,
    pub steps: usize,
    pub branch_warnings: usize,
}

impl<T: Real> FilterState<T> {
    pub fn init(measure: GridMeasure<T>) -> Self {
        Self {
            measure,
            log_normalizer_sum: czero(),
            steps: 0,
            branch_warnings: 0,
        }
    }
}

/// Per-(model, parameter) tables: transition matrix, mass normalizers
/// `1/ŝ(x)`, and (for finite alphabets) all emission columns.
pub struct FilterPass<'m, T> {
    model: &'m dyn ModelFamily<T>,
    eta: ParameterPoint<T>,
    space: Arc<GridSpace<T>>,
    /// `trans[to * n + from] = p̂(x_to | x_from)`.
    trans: Vec<Cplx<T>>,
    /// `1/ŝ(x_from)`.
    s_inv: Vec<Cplx<T>>,
    /// Emission columns per symbol when the alphabet is finite.
    emission_cache: Option<Vec<Vec<Cplx<T>>>>,
}

impl<'m, T: Real> FilterPass<'m, T> {
    pub fn new(model: &'m dyn ModelFamily<T>, eta: &ParameterPoint<T>) -> Result<Self> {
        model.check_continuation(eta)?;
        let space = model.state_space().clone();
        let n = space.len();
        let obs = model.obs_space();

        // qint(x) = ∫ q̂(y|x) ν(dy) by the observation quadrature
        let mut qint = vec![czero::<T>(); n];
        for i in 0..obs.quadrature_len() {
            let (y, w) = obs.quadrature_node(i);
            let col = model.emission_column(eta, &y)?;
            for g in 0..n {
                qint[g] = qint[g] + col[g] * creal::<T>(w);
            }
        }

        let mut trans = vec![czero::<T>(); n * n];
        let mut s_inv = vec![cone::<T>(); n];
        let half = real::<T>(0.5);
        for from in 0..n {
            let row = model.transition_row(eta, from)?;
            // ŝ(x) = Σ_x'' p̂(x''|x)·w_x''·qint(x'')
            let terms: Vec<Cplx<T>> = (0..n)
                .map(|g| row[g] * creal::<T>(space.weight(g)) * qint[g])
                .collect();
            let s = pairwise_sum_cplx(&terms);
            if s.norm() < half {
                return Err(HmmError::ContinuationDomain(format!(
                    "|ŝ(x)| = {:?} < 1/2 at grid index {from}; continuation out of regime",
                    s.norm().to_f64()
                )));
            }
            s_inv[from] = cone::<T>() / s;
            for to in 0..n {
                trans[to * n + from] = row[to];
            }
        }

        let emission_cache = match obs {
            ObsSpace::Finite { symbols } => {
                let mut cols = Vec::with_capacity(*symbols);
                for s in 0..*symbols {
                    cols.push(model.emission_column(eta, &Observation::Symbol(s))?);
                }
                Some(cols)
            }
            ObsSpace::Continuous { .. } => None,
        };

        Ok(Self {
            model,
            eta: eta.clone(),
            space,
            trans,
            s_inv,
            emission_cache,
        })
    }

    pub fn space(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    fn emission(&self, y: &Observation<T>) -> Result<Vec<Cplx<T>>> {
        if let (Some(cache), Some(sym)) = (&self.emission_cache, y.as_symbol()) {
            if sym < cache.len() {
                return Ok(cache[sym].clone());
            }
        }
        self.model.emission_column(&self.eta, y)
    }

    /// Unnormalized update: density `R(x') = q̂(y|x')·Σ_x p̂(x'|x)·ξ(x)·w_x/ŝ(x)`.
    pub fn update_unnormalized(
        &self,
        xi: &GridMeasure<T>,
        y: &Observation<T>,
    ) -> Result<GridMeasure<T>> {
        let n = self.space.len();
        if xi.space().len() != n {
            return Err(HmmError::SpaceMismatch(
                "filter input measure lives on a different grid".into(),
            ));
        }
        let emission = self.emission(y)?;
        let t: Vec<Cplx<T>> = (0..n)
            .map(|from| xi.density()[from] * creal::<T>(self.space.weight(from)) * self.s_inv[from])
            .collect();
        let mut density = vec![czero::<T>(); n];
        for to in 0..n {
            let row = &self.trans[to * n..(to + 1) * n];
            let mut acc = czero::<T>();
            for from in 0..n {
                acc = acc + row[from] * t[from];
            }
            density[to] = emission[to] * acc;
        }
        GridMeasure::from_density(self.space.clone(), density)
    }

    /// One normalized step; returns the Φ increment and whether the
    /// normalizer's real part was non-positive.
    pub fn step(&self, state: &mut FilterState<T>, y: &Observation<T>) -> Result<Cplx<T>> {
        let r = self.update_unnormalized(&state.measure, y)?;
        let mass = r.total_mass();
        let floor = real::<T>(1e-300).max(T::min_positive_value());
        if mass.norm() < floor {
            return Err(HmmError::NormalizerUnderflow {
                magnitude: mass.norm().to_f64().unwrap_or(0.0),
            });
        }
        if mass.re <= T::zero() {
            state.branch_warnings += 1;
        }
        let phi = mass.ln();
        state.measure = r.scale(cone::<T>() / mass);
        state.log_normalizer_sum = state.log_normalizer_sum + phi;
        state.steps += 1;
        Ok(phi)
    }
}

/// Grid transcription of the unnormalized filter update `R`.
pub fn update_unnormalized<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    xi: &GridMeasure<T>,
    y: &Observation<T>,
) -> Result<GridMeasure<T>> {
    FilterPass::new(model, eta)?.update_unnormalized(xi, y)
}

/// Principal-branch log of the update's total mass; for a real parameter
/// and probability ξ this is the one-step predictive log-density.
pub fn log_normalizer<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    xi: &GridMeasure<T>,
    y: &Observation<T>,
) -> Result<Cplx<T>> {
    let mut state = FilterState::init(xi.clone());
    let pass = FilterPass::new(model, eta)?;
    pass.step(&mut state, y)
}

/// One normalized filter step from ξ.
pub fn update<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    xi: &GridMeasure<T>,
    y: &Observation<T>,
) -> Result<FilterState<T>> {
    let pass = FilterPass::new(model, eta)?;
    let mut state = FilterState::init(xi.clone());
    pass.step(&mut state, y)?;
    Ok(state)
}

/// Runs the filter along a whole observation path. The final Φ-sum equals
/// the log-density of `y_1..y_n` under the (continued) model started at λ.
pub fn filter_path<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    ys: &[Observation<T>],
) -> Result<FilterState<T>> {
    let pass = FilterPass::new(model, eta)?;
    let mut state = FilterState::init(init.clone());
    for y in ys {
        pass.step(&mut state, y)?;
    }
    Ok(state)
}

/// As [`filter_path`], also returning the per-step Φ increments (the
/// additive decomposition of the path log-density).
pub fn filter_path_recording<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    ys: &[Observation<T>],
) -> Result<(FilterState<T>, Vec<Cplx<T>>)> {
    let pass = FilterPass::new(model, eta)?;
    let mut state = FilterState::init(init.clone());
    let mut phis = Vec::with_capacity(ys.len());
    for y in ys {
        phis.push(pass.step(&mut state, y)?);
    }
    Ok((state, phis))
}

/// Splits the path at `k` and measures how far the two-stage filter is
/// from the single-stage one: returns the TV deviation of the states and
/// the Φ-sum mismatch. Both vanish in exact arithmetic.
pub fn compose_check<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    init: &GridMeasure<T>,
    ys: &[Observation<T>],
    k: usize,
) -> Result<(T, T)> {
    if k > ys.len() {
        return Err(HmmError::InvalidArgument(format!(
            "split {k} beyond path length {}",
            ys.len()
        )));
    }
    let full = filter_path(model, eta, init, ys)?;
    let head = filter_path(model, eta, init, &ys[..k])?;
    let tail = filter_path(model, eta, &head.measure, &ys[k..])?;
    let tv = full.measure.tv_distance(&tail.measure)?;
    let phi_gap = (full.log_normalizer_sum
        - (head.log_normalizer_sum + tail.log_normalizer_sum))
        .norm();
    Ok((tv, phi_gap))
}
