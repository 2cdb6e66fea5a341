//! Discretized compact state spaces and complex measures on them.
//!
//! A [`GridSpace`] is a tensor-product midpoint grid over an axis-aligned
//! box; quadrature weights are cell volumes, so the weights sum to the
//! reference-measure mass of the box. A [`GridMeasure`] stores a complex
//! density with respect to that reference measure; probability measures,
//! filter states and their complex continuations all share this one
//! representation.

use crate::error::{HmmError, Result};
use crate::scalar::{czero, creal, pairwise_sum, pairwise_sum_cplx, real, Cplx, Real};
use std::sync::Arc;

/// Axis-aligned box in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxBounds<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> BoxBounds<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(HmmError::InvalidArgument(
                "box bounds need matching, non-empty lower/upper".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(l, u)| *l >= *u) {
            return Err(HmmError::InvalidArgument(
                "box bounds need lower < upper on every axis".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(xi, (l, u))| *xi >= *l && *xi <= *u)
    }

    /// Volume of the box (mass of Lebesgue reference measure).
    pub fn volume(&self) -> T {
        self.lower
            .iter()
            .zip(&self.upper)
            .fold(T::one(), |acc, (l, u)| acc * (*u - *l))
    }
}

/// Midpoint-rule discretization of a compact box, or a finite state alphabet.
#[derive(Debug)]
pub struct GridSpace<T> {
    dim: usize,
    /// Flattened point coordinates, `dim` entries per point.
    coords: Vec<T>,
    weights: Vec<T>,
    bounds: BoxBounds<T>,
    /// Finite alphabets carry unit weights and integer-coded points.
    finite: bool,
}

impl<T: Real> GridSpace<T> {
    /// Uniform tensor-product grid with `resolution[k]` cells per axis;
    /// points sit at cell midpoints and weights are cell volumes.
    pub fn uniform(bounds: BoxBounds<T>, resolution: &[usize]) -> Result<Arc<Self>> {
        let dim = bounds.dim();
        if resolution.len() != dim || resolution.iter().any(|&r| r == 0) {
            return Err(HmmError::InvalidArgument(
                "grid resolution must be positive on every axis".into(),
            ));
        }
        let total: usize = resolution.iter().product();
        let steps: Vec<T> = (0..dim)
            .map(|k| (bounds.upper[k] - bounds.lower[k]) / real::<T>(resolution[k] as f64))
            .collect();
        let cell = steps.iter().fold(T::one(), |acc, &s| acc * s);
        let mut coords = Vec::with_capacity(total * dim);
        let mut index = vec![0usize; dim];
        for _ in 0..total {
            for k in 0..dim {
                let mid = real::<T>(index[k] as f64 + 0.5);
                coords.push(bounds.lower[k] + steps[k] * mid);
            }
            // odometer increment, last axis fastest
            for k in (0..dim).rev() {
                index[k] += 1;
                if index[k] < resolution[k] {
                    break;
                }
                index[k] = 0;
            }
        }
        Ok(Arc::new(Self {
            dim,
            coords,
            weights: vec![cell; total],
            bounds,
            finite: false,
        }))
    }

    /// Finite alphabet `{0, …, n−1}` with unit reference weights.
    pub fn finite(n: usize) -> Result<Arc<Self>> {
        if n == 0 {
            return Err(HmmError::InvalidArgument("empty alphabet".into()));
        }
        let bounds = BoxBounds::new(vec![real::<T>(-0.5)], vec![real::<T>(n as f64 - 0.5)])?;
        Ok(Arc::new(Self {
            dim: 1,
            coords: (0..n).map(|i| real::<T>(i as f64)).collect(),
            weights: vec![T::one(); n],
            bounds,
            finite: true,
        }))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_finite_alphabet(&self) -> bool {
        self.finite
    }

    pub fn bounds(&self) -> &BoxBounds<T> {
        &self.bounds
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn weight(&self, i: usize) -> T {
        self.weights[i]
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Total reference mass `‖μ‖` (sum of quadrature weights).
    pub fn total_weight(&self) -> T {
        pairwise_sum(&self.weights)
    }

    /// Index of the grid point nearest to `x`; ties break to the lower index.
    pub fn nearest(&self, x: &[T]) -> Result<usize> {
        if !self.bounds.contains(x) {
            return Err(HmmError::OutOfBounds {
                point: x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
            });
        }
        let mut best = 0usize;
        let mut best_d = T::infinity();
        for i in 0..self.len() {
            let p = self.point(i);
            let mut d = T::zero();
            for k in 0..self.dim {
                let e = p[k] - x[k];
                d = d + e * e;
            }
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok(best)
    }

    fn compatible(&self, other: &Self) -> bool {
        std::ptr::eq(self, other) || (self.len() == other.len() && self.dim == other.dim)
    }
}

/// Complex measure on a [`GridSpace`], stored as a density against the
/// reference measure.
#[derive(Debug, Clone)]
pub struct GridMeasure<T> {
    space: Arc<GridSpace<T>>,
    density: Vec<Cplx<T>>,
}

impl<T: Real> GridMeasure<T> {
    pub fn from_density(space: Arc<GridSpace<T>>, density: Vec<Cplx<T>>) -> Result<Self> {
        if density.len() != space.len() {
            return Err(HmmError::SpaceMismatch(format!(
                "density length {} vs grid size {}",
                density.len(),
                space.len()
            )));
        }
        Ok(Self { space, density })
    }

    /// Zero measure.
    pub fn zero(space: Arc<GridSpace<T>>) -> Self {
        let n = space.len();
        Self {
            space,
            density: vec![czero(); n],
        }
    }

    /// Uniform probability measure (constant density `1/‖μ‖`).
    pub fn uniform(space: Arc<GridSpace<T>>) -> Self {
        let c = creal(T::one() / space.total_weight());
        let n = space.len();
        Self {
            space,
            density: vec![c; n],
        }
    }

    /// Probability measure concentrated at the grid point nearest `x`.
    pub fn dirac(space: Arc<GridSpace<T>>, x: &[T]) -> Result<Self> {
        let i = space.nearest(x)?;
        let mut density = vec![czero(); space.len()];
        density[i] = creal(T::one() / space.weight(i));
        Ok(Self { space, density })
    }

    /// Probability measure from nonnegative point masses (weights need not
    /// be normalized; they are here).
    pub fn from_masses(space: Arc<GridSpace<T>>, masses: &[T]) -> Result<Self> {
        if masses.len() != space.len() {
            return Err(HmmError::SpaceMismatch("mass vector length".into()));
        }
        if masses.iter().any(|m| *m < T::zero()) {
            return Err(HmmError::InvalidArgument("negative mass".into()));
        }
        let total = pairwise_sum(masses);
        if total <= T::zero() {
            return Err(HmmError::InvalidArgument("zero total mass".into()));
        }
        let density = masses
            .iter()
            .enumerate()
            .map(|(i, &m)| creal(m / (total * space.weight(i))))
            .collect();
        Ok(Self { space, density })
    }

    pub fn space(&self) -> &Arc<GridSpace<T>> {
        &self.space
    }

    pub fn density(&self) -> &[Cplx<T>] {
        &self.density
    }

    pub fn density_mut(&mut self) -> &mut [Cplx<T>] {
        &mut self.density
    }

    /// Total variation norm `Σ_i |density_i| · w_i`.
    pub fn tv_norm(&self) -> T {
        let terms: Vec<T> = self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| d.norm() * self.space.weight(i))
            .collect();
        pairwise_sum(&terms)
    }

    /// Total mass `Σ_i density_i · w_i` (complex in general).
    pub fn total_mass(&self) -> Cplx<T> {
        let terms: Vec<Cplx<T>> = self
            .density
            .iter()
            .enumerate()
            .map(|(i, d)| d * creal::<T>(self.space.weight(i)))
            .collect();
        pairwise_sum_cplx(&terms)
    }

    /// Whether this is numerically a probability measure: real nonnegative
    /// density with unit mass.
    pub fn is_probability(&self, tol: T) -> bool {
        self.density
            .iter()
            .all(|d| d.im == T::zero() && d.re >= -tol)
            && (self.total_mass().re - T::one()).abs() <= tol
    }

    pub fn scale(&self, c: Cplx<T>) -> Self {
        Self {
            space: self.space.clone(),
            density: self.density.iter().map(|d| d * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            density: self
                .density
                .iter()
                .zip(&other.density)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_space(other)?;
        Ok(Self {
            space: self.space.clone(),
            density: self
                .density
                .iter()
                .zip(&other.density)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    /// TV distance to another measure on the same space.
    pub fn tv_distance(&self, other: &Self) -> Result<T> {
        Ok(self.sub(other)?.tv_norm())
    }

    fn check_space(&self, other: &Self) -> Result<()> {
        if !self.space.compatible(&other.space) {
            return Err(HmmError::SpaceMismatch(
                "binary operation on measures over different spaces".into(),
            ));
        }
        Ok(())
    }
}

/// A `d`-dimensional model parameter, real or complex.
///
/// Real parameters (`θ ∈ Θ`) are the `im = 0` special case of complex
/// continuation points (`η`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterPoint<T> {
    coords: Vec<Cplx<T>>,
}

impl<T: Real> ParameterPoint<T> {
    pub fn real_point(re: &[T]) -> Self {
        Self {
            coords: re.iter().map(|&x| creal(x)).collect(),
        }
    }

    pub fn complex_point(re: &[T], im: &[T]) -> Result<Self> {
        if re.len() != im.len() {
            return Err(HmmError::InvalidArgument(
                "re/im dimension mismatch".into(),
            ));
        }
        Ok(Self {
            coords: re
                .iter()
                .zip(im)
                .map(|(&r, &i)| Cplx::new(r, i))
                .collect(),
        })
    }

    pub fn from_coords(coords: Vec<Cplx<T>>) -> Self {
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Cplx<T>] {
        &self.coords
    }

    pub fn coord(&self, k: usize) -> Cplx<T> {
        self.coords[k]
    }

    pub fn re(&self) -> Vec<T> {
        self.coords.iter().map(|c| c.re).collect()
    }

    pub fn im(&self) -> Vec<T> {
        self.coords.iter().map(|c| c.im).collect()
    }

    pub fn is_real(&self) -> bool {
        self.coords.iter().all(|c| c.im == T::zero())
    }

    /// Largest `|im|` over coordinates.
    pub fn im_inf_norm(&self) -> T {
        self.coords
            .iter()
            .fold(T::zero(), |m, c| m.max(c.im.abs()))
    }

    /// Returns this point shifted by `step` along coordinate `k`.
    pub fn shifted(&self, k: usize, step: Cplx<T>) -> Self {
        let mut coords = self.coords.clone();
        coords[k] = coords[k] + step;
        Self { coords }
    }
}
