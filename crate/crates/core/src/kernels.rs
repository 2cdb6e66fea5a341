//! Joint-chain kernels on `Z = Y × X` and their ergodicity diagnostics.
//!
//! The joint kernel moves probability (or complex) mass as
//! `S(z, d z') ∝ r̃(y', x'|x) ν(dy') μ(dx')`: the next pair depends on the
//! current one only through its x-part. Continuous observation spaces are
//! quantized to a finite symbol set here — only here — because `S` is
//! needed as an explicit operator solely for ergodicity diagnostics.
//! Rows are normalized by the quantized mass `ŝ(x)`, so they sum to one
//! exactly, for complex parameters too.

use crate::error::{HmmError, Result};
use crate::measures::{GridSpace, ParameterPoint};
use crate::models::{ModelFamily, ObsSpace, Observation};
use crate::scalar::{cone, creal, czero, linear_fit, pairwise_sum_cplx, real, Cplx, Real};
use rayon::prelude::*;
use std::sync::Arc;

/// Mass vector over a discretized space (point masses, not densities).
pub type Mass<T> = Vec<Cplx<T>>;

fn tv<T: Real>(mass: &[Cplx<T>]) -> T {
    mass.iter().fold(T::zero(), |a, m| a + m.norm())
}

fn total<T: Real>(mass: &[Cplx<T>]) -> Cplx<T> {
    pairwise_sum_cplx(mass)
}

/// A discrete Markov-type operator that mass vectors can be pushed through.
pub trait MarkovOperator<T: Real>: Sync {
    fn dim(&self) -> usize;

    fn apply(&self, mass: &[Cplx<T>]) -> Mass<T>;

    /// Representative point-mass starts for sup-over-z diagnostics
    /// (starts that provably share a trajectory appear once).
    fn start_reps(&self) -> Vec<usize>;
}

/// Default number of quantization bins per observation dimension.
pub const DEFAULT_OBS_BINS: usize = 32;

/// Discretized joint kernel `S_η` on `Z = Y × X`.
///
/// Index layout: `z = y_index * n_x + x_index`.
pub struct JointKernel<T> {
    n_x: usize,
    n_y: usize,
    /// `rows[x]` is the mass distribution over `z'` out of any `z` with
    /// x-part `x` (length `n_y·n_x`).
    rows: Vec<Mass<T>>,
    /// Quantized observation nodes (for reporting).
    obs_nodes: Vec<Observation<T>>,
    state_space: Arc<GridSpace<T>>,
}

impl<T: Real> JointKernel<T> {
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_y(&self) -> usize {
        self.n_y
    }

    pub fn state_space(&self) -> &Arc<GridSpace<T>> {
        &self.state_space
    }

    pub fn obs_nodes(&self) -> &[Observation<T>] {
        &self.obs_nodes
    }

    /// Full transition row out of `z` (depends only on the x-part of `z`).
    pub fn row(&self, z: usize) -> &[Cplx<T>] {
        &self.rows[z % self.n_x]
    }

    pub fn uniform_mass(&self) -> Mass<T> {
        let n = self.dim();
        vec![creal(T::one() / real::<T>(n as f64)); n]
    }

    pub fn dirac_mass(&self, z: usize) -> Mass<T> {
        let mut m = vec![czero(); self.dim()];
        m[z] = cone();
        m
    }

    /// `n`-fold application of the kernel to a mass vector on `Z`.
    pub fn iterate(&self, zeta: &Mass<T>, n: usize) -> Mass<T> {
        let mut m = zeta.clone();
        for _ in 0..n {
            m = self.apply(&m);
        }
        m
    }
}

impl<T: Real> MarkovOperator<T> for JointKernel<T> {
    fn dim(&self) -> usize {
        self.n_x * self.n_y
    }

    fn apply(&self, mass: &[Cplx<T>]) -> Mass<T> {
        // marginalize the y-part first: rows depend on x only
        let mut x_mass = vec![czero::<T>(); self.n_x];
        for y in 0..self.n_y {
            let base = y * self.n_x;
            for x in 0..self.n_x {
                x_mass[x] = x_mass[x] + mass[base + x];
            }
        }
        let mut out = vec![czero::<T>(); self.dim()];
        for x in 0..self.n_x {
            let w = x_mass[x];
            if w.norm() == T::zero() {
                continue;
            }
            let row = &self.rows[x];
            for (o, r) in out.iter_mut().zip(row) {
                *o = *o + *r * w;
            }
        }
        out
    }

    fn start_reps(&self) -> Vec<usize> {
        // one y-slice suffices: S(z,·) ignores the y-coordinate
        let stride = self.n_x.div_ceil(16).max(1);
        (0..self.n_x).step_by(stride).collect()
    }
}

/// Builds the joint kernel for `(model, η)`. Continuous observation spaces
/// are quantized to `obs_bins` midpoints per dimension (`None` picks the
/// default of 32).
pub fn build_joint_kernel<T: Real>(
    model: &dyn ModelFamily<T>,
    eta: &ParameterPoint<T>,
    obs_bins: Option<usize>,
) -> Result<JointKernel<T>> {
    model.check_continuation(eta)?;
    let space = model.state_space().clone();
    let n_x = space.len();

    // quantized observation nodes with ν-weights
    let (obs_nodes, obs_weights): (Vec<Observation<T>>, Vec<T>) = match model.obs_space() {
        ObsSpace::Finite { symbols } => (
            (0..*symbols).map(Observation::Symbol).collect(),
            vec![T::one(); *symbols],
        ),
        ObsSpace::Continuous { grid } => {
            let bins = obs_bins.unwrap_or(DEFAULT_OBS_BINS);
            let res = vec![bins; grid.dim()];
            let quant = GridSpace::uniform(grid.bounds().clone(), &res)?;
            let nodes = (0..quant.len())
                .map(|i| Observation::Point(quant.point(i).to_vec()))
                .collect();
            let weights = (0..quant.len()).map(|i| quant.weight(i)).collect();
            (nodes, weights)
        }
    };
    let n_y = obs_nodes.len();

    // emission values on the quantized nodes: emit[b][x']
    let mut emit = Vec::with_capacity(n_y);
    for y in &obs_nodes {
        emit.push(model.emission_column(eta, y)?);
    }
    // per-state observation mass under the quantized ν
    let qq: Vec<Cplx<T>> = (0..n_x)
        .map(|g| {
            let terms: Vec<Cplx<T>> = (0..n_y)
                .map(|b| emit[b][g] * creal::<T>(obs_weights[b]))
                .collect();
            pairwise_sum_cplx(&terms)
        })
        .collect();

    let half = real::<T>(0.5);
    let rows = (0..n_x)
        .into_par_iter()
        .map(|x| {
            let p_row = model.transition_row(eta, x)?;
            let terms: Vec<Cplx<T>> = (0..n_x)
                .map(|g| p_row[g] * creal::<T>(space.weight(g)) * qq[g])
                .collect();
            let s = pairwise_sum_cplx(&terms);
            if s.norm() < half {
                return Err(HmmError::ContinuationDomain(format!(
                    "|ŝ(x)| = {:?} < 1/2 at grid index {x}",
                    s.norm().to_f64()
                )));
            }
            let s_inv = cone::<T>() / s;
            let mut row = vec![czero::<T>(); n_y * n_x];
            for b in 0..n_y {
                let wb = creal::<T>(obs_weights[b]);
                for g in 0..n_x {
                    row[b * n_x + g] =
                        emit[b][g] * p_row[g] * creal::<T>(space.weight(g)) * wb * s_inv;
                }
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(JointKernel {
        n_x,
        n_y,
        rows,
        obs_nodes,
        state_space: space,
    })
}

/// Row-stochastic kernel of the hidden state chain alone (real parameter).
pub struct StateKernel<T> {
    n: usize,
    rows: Vec<Mass<T>>,
}

impl<T: Real> StateKernel<T> {
    pub fn rows(&self) -> &[Mass<T>] {
        &self.rows
    }
}

pub fn build_state_kernel<T: Real>(
    model: &dyn ModelFamily<T>,
    theta: &ParameterPoint<T>,
) -> Result<StateKernel<T>> {
    let space = model.state_space().clone();
    let n = space.len();
    let mut rows = Vec::with_capacity(n);
    for x in 0..n {
        let p_row = model.transition_row(theta, x)?;
        rows.push(
            (0..n)
                .map(|g| p_row[g] * creal::<T>(space.weight(g)))
                .collect(),
        );
    }
    Ok(StateKernel { n, rows })
}

impl<T: Real> MarkovOperator<T> for StateKernel<T> {
    fn dim(&self) -> usize {
        self.n
    }

    fn apply(&self, mass: &[Cplx<T>]) -> Mass<T> {
        let mut out = vec![czero::<T>(); self.n];
        for x in 0..self.n {
            let w = mass[x];
            if w.norm() == T::zero() {
                continue;
            }
            for (o, r) in out.iter_mut().zip(&self.rows[x]) {
                *o = *o + *r * w;
            }
        }
        out
    }

    fn start_reps(&self) -> Vec<usize> {
        let stride = self.n.div_ceil(16).max(1);
        (0..self.n).step_by(stride).collect()
    }
}

/// Outcome of the power-iteration diagnostics.
#[derive(Debug, Clone)]
pub struct ErgodicityReport<T> {
    pub converged: bool,
    pub iterations: usize,
    /// Fixed-point mass vector (complex in general, total mass 1).
    pub invariant: Mass<T>,
    pub invariant_total_mass: Cplx<T>,
    /// Fitted geometric rate, `None` when the gap history is at the
    /// floating-point floor ("forgotten immediately").
    pub rate: Option<T>,
    /// `sup_z ‖S^n δ_z − σ‖` for n = 1..=logged.
    pub sup_history: Vec<T>,
}

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITER: usize = 10_000;
const RATE_LOG_ITER: usize = 60;
const RATE_FIT_TAIL: usize = 10;
const RATE_FLOOR: f64 = 1e-13;

/// Power iteration from the uniform mass until the TV change drops below
/// `1e-12`, then a geometric-rate fit on `sup_z ‖S^n δ_z − σ‖` over the
/// last 10 of 60 logged iterates.
pub fn invariant_distribution<T: Real, K: MarkovOperator<T>>(op: &K) -> ErgodicityReport<T> {
    let n = op.dim();
    let mut current: Mass<T> = vec![creal(T::one() / real::<T>(n as f64)); n];
    let tol = real::<T>(POWER_TOL);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=POWER_MAX_ITER {
        let next = op.apply(&current);
        let diff: Vec<Cplx<T>> = next
            .iter()
            .zip(&current)
            .map(|(a, b)| *a - *b)
            .collect();
        let change = tv(&diff);
        current = next;
        iterations = it;
        if change < tol {
            converged = true;
            break;
        }
    }
    let invariant = current;
    let invariant_total_mass = total(&invariant);

    // sup over representative point-mass starts, advanced jointly
    let reps = op.start_reps();
    let mut states: Vec<Mass<T>> = reps
        .iter()
        .map(|&z| {
            let mut m = vec![czero::<T>(); n];
            m[z] = cone();
            m
        })
        .collect();
    let mut sup_history = Vec::with_capacity(RATE_LOG_ITER);
    for _ in 0..RATE_LOG_ITER {
        let mut sup = T::zero();
        for st in states.iter_mut() {
            *st = op.apply(st);
            let diff: Vec<Cplx<T>> = st
                .iter()
                .zip(&invariant)
                .map(|(a, b)| *a - *b)
                .collect();
            let d = tv(&diff);
            if d > sup {
                sup = d;
            }
        }
        sup_history.push(sup);
    }

    let floor = real::<T>(RATE_FLOOR);
    let usable: Vec<(T, T)> = sup_history
        .iter()
        .enumerate()
        .rev()
        .take(RATE_FIT_TAIL)
        .filter(|(_, d)| **d > floor)
        .map(|(i, d)| (real::<T>((i + 1) as f64), d.ln()))
        .collect();
    let rate = if usable.len() >= 3 {
        let xs: Vec<T> = usable.iter().map(|p| p.0).collect();
        let ys: Vec<T> = usable.iter().map(|p| p.1).collect();
        let (_, slope, _) = linear_fit(&xs, &ys);
        Some(slope.exp())
    } else {
        None
    };

    ErgodicityReport {
        converged,
        iterations,
        invariant,
        invariant_total_mass,
        rate,
        sup_history,
    }
}

/// TV norm of a mass vector (public for diagnostics and tests).
pub fn mass_tv<T: Real>(mass: &[Cplx<T>]) -> T {
    tv(mass)
}

/// Total mass of a mass vector.
pub fn mass_total<T: Real>(mass: &[Cplx<T>]) -> Cplx<T> {
    total(mass)
}
