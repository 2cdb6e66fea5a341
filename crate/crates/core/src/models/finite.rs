//! Finite-state, finite-alphabet family.
//!
//! Transition and emission rows are softmax of affine functions of θ, so
//! they are entire in the parameter and the complex continuation is the
//! same formula evaluated at complex θ. A model built from plain
//! probability matrices uses logits `ln p` with zero θ-coupling and
//! reproduces the matrices exactly.

use super::{
    affine_in_param, sample_categorical, softmax, validate_continuation, ModelFamily, ObsSpace,
    Observation,
};
use crate::error::{HmmError, Result};
use crate::measures::{BoxBounds, GridSpace, ParameterPoint};
use crate::scalar::{creal, real, Cplx, Real};
use rand::RngCore;
use std::sync::Arc;

#[derive(Debug)]
pub struct FiniteModel<T> {
    states: usize,
    symbols: usize,
    /// `trans_logits[x][x']` base logit; row softmax gives `p(x'|x)`.
    trans_logits: Vec<Vec<T>>,
    /// `trans_coupling[x][x'][k]` multiplies `θ_k`.
    trans_coupling: Vec<Vec<Vec<T>>>,
    emit_logits: Vec<Vec<T>>,
    emit_coupling: Vec<Vec<Vec<T>>>,
    param_box: BoxBounds<T>,
    delta: T,
    space: Arc<GridSpace<T>>,
    obs: ObsSpace<T>,
    /// Envelope `φ(y)` per symbol (constant in η).
    phi: Vec<T>,
    /// Declared bound `ψ(y) ≥ |log φ(y)|` per symbol.
    psi: Vec<T>,
}

impl<T: Real> FiniteModel<T> {
    pub fn new(
        trans_logits: Vec<Vec<T>>,
        trans_coupling: Vec<Vec<Vec<T>>>,
        emit_logits: Vec<Vec<T>>,
        emit_coupling: Vec<Vec<Vec<T>>>,
        param_box: BoxBounds<T>,
        delta: T,
    ) -> Result<Arc<Self>> {
        let states = trans_logits.len();
        let symbols = emit_logits.first().map_or(0, |r| r.len());
        if states == 0 || symbols == 0 {
            return Err(HmmError::InvalidModel("empty state or symbol set".into()));
        }
        if trans_logits.iter().any(|r| r.len() != states)
            || emit_logits.len() != states
            || emit_logits.iter().any(|r| r.len() != symbols)
        {
            return Err(HmmError::InvalidModel("ragged logit matrices".into()));
        }
        let d = param_box.dim();
        let coupling_ok = |c: &Vec<Vec<Vec<T>>>, cols: usize| {
            c.len() == states
                && c.iter()
                    .all(|r| r.len() == cols && r.iter().all(|e| e.len() == d))
        };
        if !coupling_ok(&trans_coupling, states) || !coupling_ok(&emit_coupling, symbols) {
            return Err(HmmError::InvalidModel(
                "coupling tensors must be states×cols×d".into(),
            ));
        }
        if delta <= T::zero() || delta >= T::one() {
            return Err(HmmError::InvalidModel("delta_model must be in (0,1)".into()));
        }
        let mut model = Self {
            states,
            symbols,
            trans_logits,
            trans_coupling,
            emit_logits,
            emit_coupling,
            param_box,
            delta,
            space: GridSpace::finite(states)?,
            obs: ObsSpace::Finite { symbols },
            phi: vec![T::one(); symbols],
            psi: vec![T::one(); symbols],
        };
        // reference emission column sums at the box center fix the envelope shape
        let center: Vec<T> = (0..d)
            .map(|k| (model.param_box.lower[k] + model.param_box.upper[k]) / real::<T>(2.0))
            .collect();
        let theta_ref = ParameterPoint::real_point(&center);
        let mut ref_sums = vec![T::zero(); symbols];
        for y in 0..symbols {
            for x in 0..states {
                ref_sums[y] = ref_sums[y]
                    + model
                        .observation_density(&theta_ref, &Observation::Symbol(y), &[real::<T>(
                            x as f64,
                        )])?
                        .re;
            }
        }
        if ref_sums.iter().any(|s| !(*s > T::zero())) {
            return Err(HmmError::InvalidModel(
                "emission column sums must be positive".into(),
            ));
        }
        let nodes: Vec<(Observation<T>, T)> = (0..symbols)
            .map(|y| (Observation::Symbol(y), T::one()))
            .collect();
        let sums = ref_sums.clone();
        let max_ratio = validate_continuation(&model, &nodes, &|y: &Observation<T>| {
            sums[y.as_symbol().unwrap()]
        })?;
        let margin = real::<T>(1.05);
        let c_phi = (max_ratio * margin).max(real::<T>(1e-12));
        model.phi = ref_sums.iter().map(|&s| c_phi * s).collect();
        model.psi = model.phi.iter().map(|&p| T::one() + p.ln().abs()).collect();
        Ok(Arc::new(model))
    }

    /// Builds the family from row-stochastic matrices with the given
    /// θ-couplings; the base matrices are reproduced at θ = box center = 0.
    pub fn from_probs(
        trans: Vec<Vec<T>>,
        emit: Vec<Vec<T>>,
        trans_coupling: Vec<Vec<Vec<T>>>,
        emit_coupling: Vec<Vec<Vec<T>>>,
        param_box: BoxBounds<T>,
        delta: T,
    ) -> Result<Arc<Self>> {
        let tol = real::<T>(1e-9).max(T::epsilon() * real::<T>(64.0));
        let check_rows = |m: &Vec<Vec<T>>, what: &str| -> Result<()> {
            for row in m {
                if row.iter().any(|p| *p < T::zero()) {
                    return Err(HmmError::InvalidModel(format!("negative {what} entry")));
                }
                let s: T = row.iter().fold(T::zero(), |a, &b| a + b);
                if (s - T::one()).abs() > tol {
                    return Err(HmmError::InvalidModel(format!(
                        "{what} row does not sum to 1"
                    )));
                }
            }
            Ok(())
        };
        check_rows(&trans, "transition")?;
        check_rows(&emit, "emission")?;
        let logit = |m: Vec<Vec<T>>| -> Vec<Vec<T>> {
            m.into_iter()
                .map(|row| row.into_iter().map(|p| p.ln()).collect())
                .collect()
        };
        Self::new(
            logit(trans),
            trans_coupling,
            logit(emit),
            emit_coupling,
            param_box,
            delta,
        )
    }

    /// Plain matrices, no θ-dependence, one dummy parameter.
    pub fn from_matrices(trans: Vec<Vec<T>>, emit: Vec<Vec<T>>) -> Result<Arc<Self>> {
        let n = trans.len();
        let m = emit.first().map_or(0, |r| r.len());
        let zero3 = |rows: usize, cols: usize| vec![vec![vec![T::zero()]; cols]; rows];
        Self::from_probs(
            trans,
            emit,
            zero3(n, n),
            zero3(n, m),
            BoxBounds::new(vec![real::<T>(-0.1)], vec![real::<T>(0.1)])?,
            real::<T>(0.05),
        )
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn symbols(&self) -> usize {
        self.symbols
    }

    fn state_index(&self, x: &[T]) -> Result<usize> {
        let idx = x[0].to_f64().unwrap_or(-1.0).round();
        if idx < 0.0 || idx >= self.states as f64 {
            return Err(HmmError::OutOfBounds {
                point: x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        Ok(idx as usize)
    }

    fn row_probs(
        &self,
        logits: &[T],
        coupling: &[Vec<T>],
        eta: &ParameterPoint<T>,
    ) -> Vec<Cplx<T>> {
        let l: Vec<Cplx<T>> = logits
            .iter()
            .zip(coupling)
            .map(|(&c, g)| affine_in_param(c, g, eta))
            .collect();
        softmax(&l)
    }

    /// Complex transition matrix, `[x][x']`.
    pub fn transition_matrix(&self, eta: &ParameterPoint<T>) -> Result<Vec<Vec<Cplx<T>>>> {
        self.check_continuation(eta)?;
        Ok((0..self.states)
            .map(|x| self.row_probs(&self.trans_logits[x], &self.trans_coupling[x], eta))
            .collect())
    }

    /// Complex emission matrix, `[x][y]`.
    pub fn emission_matrix(&self, eta: &ParameterPoint<T>) -> Result<Vec<Vec<Cplx<T>>>> {
        self.check_continuation(eta)?;
        Ok((0..self.states)
            .map(|x| self.row_probs(&self.emit_logits[x], &self.emit_coupling[x], eta))
            .collect())
    }
}

impl<T: Real> ModelFamily<T> for FiniteModel<T> {
    fn name(&self) -> &str {
        "finite"
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
        let from = self.state_index(x)?;
        let to = self.state_index(x_next)?;
        Ok(self.row_probs(&self.trans_logits[from], &self.trans_coupling[from], eta)[to])
    }

    fn observation_density(
        &self,
        eta: &ParameterPoint<T>,
        y: &Observation<T>,
        x: &[T],
    ) -> Result<Cplx<T>> {
        self.check_continuation(eta)?;
        let sym = y.as_symbol().ok_or_else(|| {
            HmmError::InvalidArgument("finite model expects symbol observations".into())
        })?;
        if sym >= self.symbols {
            return Err(HmmError::OutOfBounds {
                point: vec![sym as f64],
            });
        }
        let from = self.state_index(x)?;
        Ok(self.row_probs(&self.emit_logits[from], &self.emit_coupling[from], eta)[sym])
    }

    fn transition_row(&self, eta: &ParameterPoint<T>, x_index: usize) -> Result<Vec<Cplx<T>>> {
        self.check_continuation(eta)?;
        if x_index >= self.states {
            return Err(HmmError::OutOfBounds {
                point: vec![x_index as f64],
            });
        }
        Ok(self.row_probs(&self.trans_logits[x_index], &self.trans_coupling[x_index], eta))
    }

    fn envelope(&self, _eta: &ParameterPoint<T>, y: &Observation<T>) -> Cplx<T> {
        match y.as_symbol() {
            Some(s) if s < self.symbols => creal(self.phi[s]),
            _ => creal(T::one()),
        }
    }

    fn log_envelope_bound(&self, y: &Observation<T>) -> T {
        match y.as_symbol() {
            Some(s) if s < self.symbols => self.psi[s],
            _ => T::one(),
        }
    }

    fn sample_transition(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Vec<T>> {
        let from = self.state_index(x)?;
        let probs: Vec<T> = self
            .row_probs(&self.trans_logits[from], &self.trans_coupling[from], theta)
            .iter()
            .map(|c| c.re)
            .collect();
        let to = sample_categorical(&probs, rng);
        Ok(vec![real::<T>(to as f64)])
    }

    fn sample_observation(
        &self,
        theta: &ParameterPoint<T>,
        x: &[T],
        rng: &mut dyn RngCore,
    ) -> Result<Observation<T>> {
        let from = self.state_index(x)?;
        let probs: Vec<T> = self
            .row_probs(&self.emit_logits[from], &self.emit_coupling[from], theta)
            .iter()
            .map(|c| c.re)
            .collect();
        Ok(Observation::Symbol(sample_categorical(&probs, rng)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matrices_reproduced_exactly_enough() {
        let m = FiniteModel::<f64>::from_matrices(
            vec![vec![0.9, 0.1], vec![0.1, 0.9]],
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        )
        .unwrap();
        let theta = ParameterPoint::real_point(&[0.0]);
        let p = m.transition_matrix(&theta).unwrap();
        assert!((p[0][0].re - 0.9).abs() < 1e-14);
        assert!((p[1][0].re - 0.1).abs() < 1e-14);
        assert_eq!(p[0][0].im, 0.0);
        let q = m.emission_matrix(&theta).unwrap();
        assert!((q[1][1].re - 0.8).abs() < 1e-14);
    }

    #[test]
    fn joint_density_is_a_product() {
        // p = 0.7, q = 0.9 → r = 0.63
        let m = FiniteModel::<f64>::from_matrices(
            vec![vec![0.7, 0.3], vec![0.4, 0.6]],
            vec![vec![0.9, 0.1], vec![0.5, 0.5]],
        )
        .unwrap();
        let theta = ParameterPoint::real_point(&[0.0]);
        let r = m
            .joint_density(&theta, &Observation::Symbol(0), &[0.0], &[0.0])
            .unwrap();
        assert!((r.re - 0.63).abs() < 1e-12);
        assert_eq!(r.im, 0.0);
    }

    #[test]
    fn deterministic_row_forces_next_state() {
        let m = FiniteModel::<f64>::from_matrices(
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        )
        .unwrap();
        let theta = ParameterPoint::real_point(&[0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x = m.sample_transition(&theta, &[0.0], &mut rng).unwrap();
            assert_eq!(x[0], 1.0);
        }
    }

    #[test]
    fn empirical_frequencies_match_row() {
        // multinomial oracle: 4 standard errors on each cell
        let m = fixtures::finite_fixture::<f64>();
        let theta = fixtures::finite_theta::<f64>();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let p = m.transition_matrix(&theta).unwrap();
        let trials = 100_000usize;
        let mut counts = [0usize; 2];
        for _ in 0..trials {
            let x = m.sample_transition(&theta, &[0.0], &mut rng).unwrap();
            counts[x[0] as usize] += 1;
        }
        for j in 0..2 {
            let p0 = p[0][j].re;
            let se = (p0 * (1.0 - p0) / trials as f64).sqrt();
            let freq = counts[j] as f64 / trials as f64;
            assert!(
                (freq - p0).abs() <= 4.0 * se,
                "cell {j}: freq {freq} vs p {p0} (se {se})"
            );
        }
    }

    #[test]
    fn envelope_dominates_and_is_real_positive() {
        let m = fixtures::finite_fixture::<f64>();
        let theta = fixtures::finite_theta::<f64>();
        let eta = ParameterPoint::complex_point(&theta.re(), &[0.02, -0.02]).unwrap();
        for y in 0..m.symbols() {
            let obs = Observation::Symbol(y);
            let env = m.envelope(&eta, &obs);
            assert!(env.re > 0.0);
            assert_eq!(env.im, 0.0);
            for x in 0..m.states() {
                for xn in 0..m.states() {
                    let r = m
                        .joint_density(&eta, &obs, &[xn as f64], &[x as f64])
                        .unwrap();
                    assert!(r.norm() <= env.norm() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn complex_step_matches_finite_difference_hundred_tuples() {
        let m = fixtures::finite_fixture::<f64>();
        let bx = m.param_box().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(112);
        let mut uni =
            |lo: f64, hi: f64| lo + (hi - lo) * rand::Rng::random::<f64>(&mut rng);
        for _ in 0..100 {
            let theta = ParameterPoint::real_point(&[
                uni(bx.lower[0], bx.upper[0]),
                uni(bx.lower[1], bx.upper[1]),
            ]);
            let x = [f64::from(uni(0.0, 1.0) > 0.5)];
            let xn = [f64::from(uni(0.0, 1.0) > 0.5)];
            let obs = Observation::Symbol(usize::from(uni(0.0, 1.0) > 0.5));
            let f = |p: &ParameterPoint<f64>| m.joint_density(p, &obs, &xn, &x).unwrap();
            for k in 0..2 {
                let h = 1e-20;
                let cs = f(&theta.shifted(k, Cplx::new(0.0, h))).im / h;
                let step = 1e-6;
                let fd = (f(&theta.shifted(k, Cplx::new(step, 0.0))).re
                    - f(&theta.shifted(k, Cplx::new(-step, 0.0))).re)
                    / (2.0 * step);
                assert!(
                    (cs - fd).abs() <= 1e-6 * (1.0 + fd.abs()),
                    "coord {k}: cs {cs} fd {fd}"
                );
            }
        }
    }

    #[test]
    fn grid_path_reduction_is_exact() {
        // the finite family lives on a one-point-per-state grid, so the
        // generic grid evaluation must equal the matrix-entry product bit
        // for bit
        let m = fixtures::finite_fixture::<f64>();
        let theta = ParameterPoint::real_point(&[0.07, -0.03]);
        let p = m.transition_matrix(&theta).unwrap();
        let q = m.emission_matrix(&theta).unwrap();
        for x in 0..2 {
            for xn in 0..2 {
                for y in 0..2 {
                    let via_grid = m
                        .joint_density(
                            &theta,
                            &Observation::Symbol(y),
                            &[xn as f64],
                            &[x as f64],
                        )
                        .unwrap();
                    let via_matrices = q[xn][y] * p[x][xn];
                    assert_eq!(via_grid, via_matrices);
                }
            }
        }
    }

    #[test]
    fn continuation_domain_rejected() {
        let m = fixtures::finite_fixture::<f64>();
        let eta = ParameterPoint::complex_point(&[0.0, 0.0], &[0.5, 0.0]).unwrap();
        assert!(matches!(
            m.joint_density(&eta, &Observation::Symbol(0), &[0.0], &[0.0]),
            Err(HmmError::ContinuationDomain(_))
        ));
    }

    #[test]
    fn rows_sum_to_one_for_complex_eta() {
        let m = fixtures::finite_fixture::<f64>();
        let theta = fixtures::finite_theta::<f64>();
        let eta = ParameterPoint::complex_point(&theta.re(), &[0.03, 0.01]).unwrap();
        let p = m.transition_matrix(&eta).unwrap();
        for row in &p {
            let s: Cplx<f64> = row.iter().sum();
            assert!((s - Cplx::new(1.0, 0.0)).norm() < 1e-12);
        }
    }
}
