//! Built-in model fixtures used by the self-test suite and the test
//! harnesses. Coefficients are implementation-chosen; nothing here is
//! canonical beyond satisfying the mixing and analyticity requirements.

use crate::measures::{BoxBounds, ParameterPoint};
use crate::models::{
    FiniteModel, GaussianComponent, MixtureModel, Poly, PolyTerm, TruncatedStateSpaceModel,
    WeightAffine,
};
use crate::scalar::{real, Real};
use std::sync::Arc;

/// Two-state, two-symbol chain with a two-dimensional parameter.
///
/// At θ = (0,0) the matrices are exactly
/// `P = [[0.9,0.1],[0.1,0.9]]`, `Q = [[0.9,0.1],[0.2,0.8]]`;
/// θ₁ tilts the transition rows, θ₂ the emission rows.
pub fn finite_fixture<T: Real>() -> Arc<FiniteModel<T>> {
    let r = real::<T>;
    let trans = vec![vec![r(0.9), r(0.1)], vec![r(0.1), r(0.9)]];
    let emit = vec![vec![r(0.9), r(0.1)], vec![r(0.2), r(0.8)]];
    let trans_coupling = vec![
        vec![vec![r(1.0), r(0.0)], vec![r(-1.0), r(0.0)]],
        vec![vec![r(-1.0), r(0.0)], vec![r(1.0), r(0.0)]],
    ];
    let emit_coupling = vec![
        vec![vec![r(0.0), r(1.0)], vec![r(0.0), r(-1.0)]],
        vec![vec![r(0.0), r(-1.0)], vec![r(0.0), r(1.0)]],
    ];
    let param_box = BoxBounds::new(vec![r(-0.2), r(-0.2)], vec![r(0.2), r(0.2)]).unwrap();
    FiniteModel::from_probs(trans, emit, trans_coupling, emit_coupling, param_box, r(0.1))
        .unwrap()
}

pub fn finite_theta<T: Real>() -> ParameterPoint<T> {
    ParameterPoint::real_point(&[T::zero(), T::zero()])
}

/// Uniform, state-independent emission over `m` symbols: the observation
/// process is i.i.d. uniform whatever the transition does.
pub fn iid_uniform_fixture<T: Real>(m: usize) -> Arc<FiniteModel<T>> {
    let r = real::<T>;
    let trans = vec![vec![r(0.7), r(0.3)], vec![r(0.4), r(0.6)]];
    let u = r(1.0 / m as f64);
    let emit = vec![vec![u; m]; 2];
    FiniteModel::from_matrices(trans, emit).unwrap()
}

/// Transition rows independent of the current state: the filter forgets
/// its initialization in a single step.
pub fn one_step_forgetting_fixture<T: Real>() -> Arc<FiniteModel<T>> {
    let r = real::<T>;
    let trans = vec![vec![r(0.6), r(0.4)], vec![r(0.6), r(0.4)]];
    let emit = vec![vec![r(0.8), r(0.2)], vec![r(0.3), r(0.7)]];
    FiniteModel::from_matrices(trans, emit).unwrap()
}

/// One-dimensional two-component mixture on X = [−1,1], Y = [−2,2].
pub fn mixture_fixture<T: Real>() -> Arc<MixtureModel<T>> {
    let r = real::<T>;
    MixtureModel::new(
        BoxBounds::new(vec![r(-1.0)], vec![r(1.0)]).unwrap(),
        &[48],
        BoxBounds::new(vec![r(-2.0)], vec![r(2.0)]).unwrap(),
        &[48],
        vec![
            GaussianComponent {
                mean: vec![r(-0.4)],
                sd: vec![r(0.6)],
            },
            GaussianComponent {
                mean: vec![r(0.4)],
                sd: vec![r(0.6)],
            },
        ],
        vec![
            GaussianComponent {
                mean: vec![r(-0.5)],
                sd: vec![r(0.7)],
            },
            GaussianComponent {
                mean: vec![r(0.5)],
                sd: vec![r(0.7)],
            },
        ],
        vec![
            WeightAffine {
                constant: r(0.0),
                theta_coefs: vec![r(1.0), r(0.0)],
                x_coefs: vec![r(0.5)],
            },
            WeightAffine {
                constant: r(0.0),
                theta_coefs: vec![r(-1.0), r(0.0)],
                x_coefs: vec![r(-0.5)],
            },
        ],
        vec![
            WeightAffine {
                constant: r(0.0),
                theta_coefs: vec![r(0.0), r(1.0)],
                x_coefs: vec![r(1.0)],
            },
            WeightAffine {
                constant: r(0.0),
                theta_coefs: vec![r(0.0), r(-1.0)],
                x_coefs: vec![r(-1.0)],
            },
        ],
        BoxBounds::new(vec![r(-0.5), r(-0.5)], vec![r(0.5), r(0.5)]).unwrap(),
        r(0.15),
    )
    .unwrap()
}

pub fn mixture_theta<T: Real>() -> ParameterPoint<T> {
    ParameterPoint::real_point(&[real::<T>(0.1), real::<T>(-0.1)])
}

/// Mean-reverting scalar state with noisy linear observation:
/// `X' = θ₁·X + θ₂·V`, `Y = X + 0.6·W`, truncated to X = [−3,3],
/// Y = [−4,4].
pub fn state_space_fixture<T: Real>() -> Arc<TruncatedStateSpaceModel<T>> {
    let r = real::<T>;
    let lin_theta = |k: usize| Poly {
        terms: vec![PolyTerm {
            coef: r(1.0),
            theta_pows: if k == 0 { vec![1, 0] } else { vec![0, 1] },
            x_pows: vec![if k == 0 { 1 } else { 0 }],
        }],
    };
    TruncatedStateSpaceModel::new(
        BoxBounds::new(vec![r(-3.0)], vec![r(3.0)]).unwrap(),
        &[48],
        BoxBounds::new(vec![r(-4.0)], vec![r(4.0)]).unwrap(),
        &[48],
        vec![lin_theta(0)], // A = θ₁·x
        vec![lin_theta(1)], // B = θ₂
        vec![Poly {
            terms: vec![PolyTerm {
                coef: r(1.0),
                theta_pows: vec![0, 0],
                x_pows: vec![1],
            }],
        }], // C = x
        vec![Poly::constant(r(0.6))], // D = 0.6
        BoxBounds::new(vec![r(0.55), r(0.4)], vec![r(0.85), r(0.7)]).unwrap(),
        // Gaussian tails rotate phase fast in the z² exponent, so the
        // validated vicinity is narrow for this family
        r(0.01),
    )
    .unwrap()
}

pub fn state_space_theta<T: Real>() -> ParameterPoint<T> {
    ParameterPoint::real_point(&[real::<T>(0.7), real::<T>(0.5)])
}
