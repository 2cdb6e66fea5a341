//! Scalar abstraction: the numeric core is generic over the real base type.

use num_complex::Complex;
use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::{Product, Sum};

/// Real scalar type the toolkit is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum<Self>
    + Product<Self>
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into the working scalar type.
#[inline]
pub fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 constant must convert to the scalar type")
}

/// Complex value over the working scalar type.
pub type Cplx<T> = Complex<T>;

/// Complex zero.
#[inline]
pub fn czero<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::zero())
}

/// Complex one.
#[inline]
pub fn cone<T: Real>() -> Cplx<T> {
    Complex::new(T::one(), T::zero())
}

/// Embeds a real scalar as a complex number.
#[inline]
pub fn creal<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}

/// Sums a slice pairwise in fixed index order.
///
/// The reduction tree depends only on the slice length, so results are
/// identical no matter how the inputs were produced (thread count included).
pub fn pairwise_sum<T: Real>(xs: &[T]) -> T {
    match xs.len() {
        0 => T::zero(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Pairwise sum for complex slices, same fixed reduction tree.
pub fn pairwise_sum_cplx<T: Real>(xs: &[Cplx<T>]) -> Cplx<T> {
    match xs.len() {
        0 => czero(),
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum_cplx(&xs[..mid]) + pairwise_sum_cplx(&xs[mid..])
        }
    }
}

/// Mean and standard error of a sample, pairwise-summed for determinism.
pub fn mean_stderr<T: Real>(xs: &[T]) -> (T, T) {
    let n = xs.len();
    if n == 0 {
        return (T::zero(), T::zero());
    }
    let nt = real::<T>(n as f64);
    let mean = pairwise_sum(xs) / nt;
    if n == 1 {
        return (mean, T::zero());
    }
    let sq: Vec<T> = xs.iter().map(|&x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&sq) / real::<T>((n - 1) as f64);
    (mean, (var / nt).sqrt())
}

/// Ordinary least squares for `y ≈ a + b·x`; returns `(a, b, rms residual)`.
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> (T, T, T) {
    assert_eq!(xs.len(), ys.len());
    let n = real::<T>(xs.len() as f64);
    let sx = pairwise_sum(xs);
    let sy = pairwise_sum(ys);
    let sxx: Vec<T> = xs.iter().map(|&x| x * x).collect();
    let sxy: Vec<T> = xs.iter().zip(ys).map(|(&x, &y)| x * y).collect();
    let sxx = pairwise_sum(&sxx);
    let sxy = pairwise_sum(&sxy);
    let denom = n * sxx - sx * sx;
    let b = if denom == T::zero() {
        T::zero()
    } else {
        (n * sxy - sx * sy) / denom
    };
    let a = (sy - b * sx) / n;
    let res: Vec<T> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let e = y - (a + b * x);
            e * e
        })
        .collect();
    let rms = (pairwise_sum(&res) / n).sqrt();
    (a, b, rms)
}
