//! Scalar abstraction shared by every numerical module.
//!
//! All algorithms are written against [`Scalar`], which is implemented for
//! `f32` and `f64`. Complex quantities use `Complex<T>` on top of it.

use std::fmt::{Debug, Display};

use nalgebra::{Complex, DMatrix, DVector, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal or configuration value into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// `exp(j theta)`.
#[inline]
pub fn cis<T: Scalar>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// Angle of `z` in `(-pi, pi]`.
#[inline]
pub fn arg<T: Scalar>(z: Complex<T>) -> T {
    z.im.atan2(z.re)
}

#[inline]
pub fn from_f64<T: Scalar>(z: Complex<f64>) -> Complex<T> {
    Complex::new(T::lit(z.re), T::lit(z.im))
}

/// Squared Frobenius norm of a complex matrix.
pub fn fro_sq<T: Scalar>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Real inner product `Re tr(X^H Y)`.
pub fn re_inner<T: Scalar>(x: &CMatrix<T>, y: &CMatrix<T>) -> T {
    x.iter()
        .zip(y.iter())
        .fold(T::zero(), |acc, (a, b)| acc + (a.conj() * b).re)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

pub fn dbw_to_watts(dbw: f64) -> f64 {
    db_to_linear(dbw)
}
