//! Parameterized hidden Markov model families.
//!
//! Every family exposes a transition density `p(x'|x)`, an observation
//! density `q(y|x)`, their product `r(y,x'|x)`, and a complex-parameter
//! continuation of all three. Real parameters are evaluated through the
//! same complex code path (imaginary parts stay exactly zero), so the
//! continuation agrees with the real model bit for bit on the real axis.

mod defect;
mod finite;
mod mixture;
mod state_space;

pub use defect::ConjugateEmission;
pub use finite::FiniteModel;
pub use mixture::{GaussianComponent, MixtureModel, WeightAffine};
pub use state_space::{Poly, PolyTerm, TruncatedStateSpaceModel};

use crate::error::{HmmError, Result};
use crate::measures::{BoxBounds, GridSpace, ParameterPoint};
use crate::scalar::{creal, real, Cplx, Real};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// One observation: a symbol index for finite alphabets, a point in the
/// observation box otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Observation<T> {
    Symbol(usize),
    Point(Vec<T>),
}

impl<T: Real> Observation<T> {
    pub fn as_symbol(&self) -> Option<usize> {
        match self {
            Observation::Symbol(s) => Some(*s),
            Observation::Point(_) => None,
        }
    }
}

/// Observation-space descriptor. Continuous spaces carry the quadrature
/// grid used to normalize densities over the truncation box.
#[derive(Debug, Clone)]
pub enum ObsSpace<T> {
    Finite { symbols: usize },
    Continuous { grid: Arc<GridSpace<T>> },
}

impl<T: Real> ObsSpace<T> {
    /// Number of quadrature nodes (symbols or grid points).
    pub fn quadrature_len(&self) -> usize {
        match self {
            ObsSpace::Finite { symbols } => *symbols,
            ObsSpace::Continuous { grid } => grid.len(),
        }
    }

    pub fn quadrature_node(&self, i: usize) -> (Observation<T>, T) {
        match self {
            ObsSpace::Finite { .. } => (Observation::Symbol(i), T::one()),
            ObsSpace::Continuous { grid } => {
                (Observation::Point(grid.point(i).to_vec()), grid.weight(i))
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        matches!(self, ObsSpace::Finite { .. })
    }

    pub fn contains(&self, y: &Observation<T>) -> bool {
        match (self, y) {
            (ObsSpace::Finite { symbols }, Observation::Symbol(s)) => s < symbols,
            (ObsSpace::Continuous { grid }, Observation::Point(p)) => {
                grid.bounds().contains(p)
            }
            _ => false,
        }
    }
}

/// Attempt cap for rejection samplers on truncated laws.
pub const REJECTION_BUDGET: u64 = 1_000_000;

/// Contract every model family implements.
///
/// Densities take a complex parameter; passing a real point recovers the
/// real model. Implementations check the parameter against the declared
/// continuation vicinity and return a continuation-domain error outside it.
pub trait ModelFamily<T: Real>: Send + Sync {
    fn name(&self) -> &str;

    fn param_dim(&self) -> usize;

    /// Compact parameter box `Θ`.
    fn param_box(&self) -> &BoxBounds<T>;

    /// Validated half-width of the continuation vicinity (`‖im η‖∞` bound).
    fn delta_model(&self) -> T;

    fn state_space(&self) -> &Arc<GridSpace<T>>;

    fn obs_space(&self) -> &ObsSpace<T>;

    /// Continued transition density `p̂_η(x'|x)`.
    fn transition_density(
        &self,
        eta: &ParameterPoint<T>,
        x_next: &[T],
        x: &[T],
    ) -> Result<Cplx<T>>;

    /// Continued observation density `q̂_η(y|x)`.
    fn observation_density(
        &self,
        eta: &ParameterPoint<T>,
        y: &Observation<T>,
        x: &[T],
    ) -> Result<Cplx<T>>;

    /// Dominating function `φ_η(y)` with `|r̂_η(y,x'|x)| ≤ |φ_η(y)|`;
    /// never zero. The families here declare η-independent envelopes.
    fn envelope(&self, eta: &ParameterPoint<T>, y: &Observation<T>) -> Cplx<T>;

    /// Declared bound `ψ(y) ≥ |log |φ(y)||`, used by the integrability and
    /// ergodicity checkers.
    fn log_envelope_bound(&self, y: &Observation<T>) -> T;

    /// Draws `x' ~ p_θ(·|x)` for a real parameter.
    fn sample_transition(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<T>>;

    /// Draws `y ~ q_θ(·|x)` for a real parameter.
    fn sample_observation(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Observation<T>>;

    /// Full transition row `p̂_η(x'_g|x_i)` over the state grid. Families
    /// with per-row normalizers override this to share the normalizer.
    fn transition_row(&self, eta: &ParameterPoint<T>, x_index: usize) -> Result<Vec<Cplx<T>>> {
        let space = self.state_space().clone();
        let x = space.point(x_index).to_vec();
        (0..space.len())
            .map(|g| self.transition_density(eta, space.point(g), &x))
            .collect()
    }

    /// Emission values `q̂_η(y|x_g)` over the state grid.
    fn emission_column(&self, eta: &ParameterPoint<T>, y: &Observation<T>) -> Result<Vec<Cplx<T>>> {
        let space = self.state_space().clone();
        (0..space.len())
            .map(|g| self.observation_density(eta, y, space.point(g)))
            .collect()
    }

    /// Joint density `r̂_η(y,x'|x) = q̂_η(y|x')·p̂_η(x'|x)`.
    fn joint_density(
        &self,
        eta: &ParameterPoint<T>,
        y: &Observation<T>,
        x_next: &[T],
        x: &[T],
    ) -> Result<Cplx<T>> {
        let q = self.observation_density(eta, y, x_next)?;
        let p = self.transition_density(eta, x_next, x)?;
        Ok(q * p)
    }

    /// One model step: `x' ~ p_θ(·|x)`, then `y ~ q_θ(·|x')`.
    fn sample_step(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<(Vec<T>, Observation<T>)> {
        let x_next = self.sample_transition(theta, x, rng)?;
        let y = self.sample_observation(theta, &x_next, rng)?;
        Ok((x_next, y))
    }

    /// Rejects parameters outside the validated continuation vicinity:
    /// real part within the parameter box inflated by `δ`, `‖im‖∞ ≤ δ`.
    fn check_continuation(&self, eta: &ParameterPoint<T>) -> Result<()> {
        let d = self.param_dim();
        if eta.dim() != d {
            return Err(HmmError::ContinuationDomain(format!(
                "parameter dimension {} (model has {})",
                eta.dim(),
                d
            )));
        }
        let delta = self.delta_model();
        let eps = real::<T>(1e-12);
        let bx = self.param_box();
        for k in 0..d {
            let c = eta.coord(k);
            if c.re < bx.lower[k] - delta - eps || c.re > bx.upper[k] + delta + eps {
                return Err(HmmError::ContinuationDomain(format!(
                    "re(eta_{k}) = {:?} outside box",
                    c.re.to_f64()
                )));
            }
            if c.im.abs() > delta + eps {
                return Err(HmmError::ContinuationDomain(format!(
                    "|im(eta_{k})| = {:?} exceeds delta_model",
                    c.im.abs().to_f64()
                )));
            }
        }
        Ok(())
    }
}

/// Softmax of complex logits. Shifting by the max real part keeps the
/// exponentials in range; the ratio is unchanged.
pub(crate) fn softmax<T: Real>(logits: &[Cplx<T>]) -> Vec<Cplx<T>> {
    let shift = logits
        .iter()
        .filter(|l| l.re.is_finite())
        .fold(T::neg_infinity(), |m, l| m.max(l.re));
    let shift = if shift.is_finite() { shift } else { T::zero() };
    let exps: Vec<Cplx<T>> = logits
        .iter()
        .map(|l| Cplx::new(l.re - shift, l.im).exp())
        .collect();
    let total = exps.iter().fold(crate::scalar::czero(), |a, b| a + b);
    exps.iter().map(|e| e / total).collect()
}

/// Evaluates an affine form `c + g·θ` with complex θ.
pub(crate) fn affine_in_param<T: Real>(c: T, coefs: &[T], eta: &ParameterPoint<T>) -> Cplx<T> {
    let mut acc = creal(c);
    for (k, &g) in coefs.iter().enumerate() {
        acc = acc + eta.coord(k) * creal::<T>(g);
    }
    acc
}

/// Inverse-CDF draw from nonnegative weights (need not be normalized).
pub(crate) fn sample_categorical<T: Real>(weights: &[T], rng: &mut dyn RngCore) -> usize {
    let total: T = weights.iter().fold(T::zero(), |a, &b| a + b);
    let u = real::<T>(rng.random::<f64>()) * total;
    let mut acc = T::zero();
    for (i, &w) in weights.iter().enumerate() {
        acc = acc + w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Standard normal draw converted into the working scalar type.
pub(crate) fn sample_std_normal<T: Real>(rng: &mut dyn RngCore) -> T {
    let v: f64 = rng.sample(rand_distr::StandardNormal);
    real::<T>(v)
}

/// Fixed-seed parameter samples covering the continuation vicinity:
/// box center, box corners (capped), and seeded random points with the
/// imaginary part pushed to `±δ` on at least one coordinate.
///
/// Model validation must not depend on any user seed, so the stream here
/// is a constant of the crate.
pub(crate) fn continuation_samples<T: Real>(
    bx: &BoxBounds<T>,
    delta: T,
    n_random: usize,
) -> Vec<ParameterPoint<T>> {
    let d = bx.dim();
    let mut out = Vec::new();
    let center: Vec<T> = (0..d)
        .map(|k| (bx.lower[k] + bx.upper[k]) / real::<T>(2.0))
        .collect();
    out.push(ParameterPoint::real_point(&center));
    if d <= 4 {
        for mask in 0..(1usize << d) {
            let re: Vec<T> = (0..d)
                .map(|k| {
                    if mask >> k & 1 == 1 {
                        bx.upper[k]
                    } else {
                        bx.lower[k]
                    }
                })
                .collect();
            let im: Vec<T> = (0..d)
                .map(|k| if mask >> k & 1 == 1 { delta } else { -delta })
                .collect();
            out.push(ParameterPoint::complex_point(&re, &im).unwrap());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x484d4d5f56414c31);
    for _ in 0..n_random {
        let re: Vec<T> = (0..d)
            .map(|k| {
                let u = real::<T>(rng.random::<f64>());
                bx.lower[k] + (bx.upper[k] - bx.lower[k]) * u
            })
            .collect();
        let mut im: Vec<T> = (0..d)
            .map(|_| {
                let u = real::<T>(rng.random::<f64>() * 2.0 - 1.0);
                delta * u
            })
            .collect();
        let pin = rng.random_range(0..d);
        im[pin] = if rng.random::<bool>() { delta } else { -delta };
        out.push(ParameterPoint::complex_point(&re, &im).unwrap());
    }
    out
}

/// Shared construction-time validation: over sampled vicinity parameters,
/// real parts of `p̂` and `q̂` must stay bounded away from zero relative to
/// the real-axis values. Returns the observed maximum of `|r̂_η|/ref(y)`
/// for the caller's envelope constant, where `ref` is the caller-supplied
/// per-observation reference scale.
pub(crate) fn validate_continuation<T: Real, M: ModelFamily<T> + ?Sized>(
    model: &M,
    obs_nodes: &[(Observation<T>, T)],
    envelope_ref: &dyn Fn(&Observation<T>) -> T,
) -> Result<T> {
    let space = model.state_space().clone();
    let n = space.len();
    let samples = continuation_samples(model.param_box(), model.delta_model(), 16);
    let row_stride = n.div_ceil(8);
    let obs_stride = obs_nodes.len().div_ceil(8);
    let quarter = real::<T>(0.25);
    // entries far below the row/column peak carry no integral weight;
    // only the bulk must keep a positive real part
    let rel_floor = real::<T>(1e-4);
    let mut max_ratio = T::zero();
    for eta in &samples {
        let theta = ParameterPoint::real_point(&eta.re());
        let rows: Vec<(usize, Vec<Cplx<T>>, Vec<Cplx<T>>)> = (0..n)
            .step_by(row_stride)
            .map(|xi| {
                Ok((
                    xi,
                    model.transition_row(eta, xi)?,
                    model.transition_row(&theta, xi)?,
                ))
            })
            .collect::<Result<_>>()?;
        for (_, row, row_re) in &rows {
            let peak = row_re.iter().fold(T::zero(), |m, v| m.max(v.re));
            for g in 0..n {
                let p_real = row_re[g].re;
                if p_real > rel_floor * peak && row[g].re < quarter * p_real {
                    return Err(HmmError::InvalidModel(
                        "continuation check failed: Re p̂ dropped below 0.25×p at a sampled η; \
                         reduce delta_model"
                            .into(),
                    ));
                }
            }
        }
        for node in obs_nodes.iter().step_by(obs_stride) {
            let y = &node.0;
            let col = model.emission_column(eta, y)?;
            let col_re = model.emission_column(&theta, y)?;
            let peak = col_re.iter().fold(T::zero(), |m, v| m.max(v.re));
            for g in 0..n {
                let q_real = col_re[g].re;
                if q_real > rel_floor * peak && col[g].re < quarter * q_real {
                    return Err(HmmError::InvalidModel(
                        "continuation check failed: Re q̂ dropped below 0.25×q at a sampled η; \
                         reduce delta_model"
                            .into(),
                    ));
                }
            }
            let scale = envelope_ref(y);
            if scale > T::zero() {
                for (_, row, _) in &rows {
                    for g in 0..n {
                        let r = (col[g] * row[g]).norm() / scale;
                        if r > max_ratio {
                            max_ratio = r;
                        }
                    }
                }
            }
        }
    }
    Ok(max_ratio)
}
