//! Third-order memoryless nonlinear power amplifier: instantaneous gain,
//! Bussgang linear gain, distortion autocorrelation and PA power draw.

use nalgebra::{Complex, DVector};

use crate::error::{Error, Result};
use crate::precoder::DigitalPrecoder;
use crate::scalar::{CMatrix, Scalar};

/// Odd-order polynomial PA `x = beta1 u + beta3 |u|^2 u` together with its
/// saturation power and peak efficiency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpaModel<T: Scalar> {
    beta1: Complex<T>,
    beta3: Complex<T>,
    p_max: T,
    xi_max: T,
}

impl<T: Scalar> NpaModel<T> {
    pub fn new(beta1: Complex<T>, beta3: Complex<T>, p_max: T, xi_max: T) -> Result<Self> {
        if !(p_max > T::zero()) {
            return Err(Error::Domain(format!("P_max must be positive, got {p_max}")));
        }
        if !(xi_max > T::zero() && xi_max <= T::one()) {
            return Err(Error::Domain(format!("xi_max must lie in (0, 1], got {xi_max}")));
        }
        Ok(Self {
            beta1,
            beta3,
            p_max,
            xi_max,
        })
    }

    /// Builds the model from the odd coefficients `[beta1, beta3, beta5, ...]`.
    /// Only the third-order model is supported; any nonzero coefficient past
    /// `beta3` is rejected.
    pub fn from_odd_coefficients(coeffs: &[Complex<T>], p_max: T, xi_max: T) -> Result<Self> {
        let beta1 = coeffs
            .first()
            .copied()
            .ok_or_else(|| Error::Config("at least beta1 is required".into()))?;
        let beta3 = coeffs.get(1).copied().unwrap_or_else(Complex::default);
        if let Some(pos) = coeffs[2.min(coeffs.len())..]
            .iter()
            .position(|c| *c != Complex::default())
        {
            return Err(Error::Config(format!(
                "only third-order PA models are supported, got nonzero beta{}",
                2 * (pos + 2) + 1
            )));
        }
        Self::new(beta1, beta3, p_max, xi_max)
    }

    pub fn beta1(&self) -> Complex<T> {
        self.beta1
    }

    pub fn beta3(&self) -> Complex<T> {
        self.beta3
    }

    pub fn p_max(&self) -> T {
        self.p_max
    }

    pub fn xi_max(&self) -> T {
        self.xi_max
    }

    /// Same amplifier with the cubic term removed, i.e. what a design that
    /// assumes linear PAs believes the hardware to be.
    pub fn linearized(&self) -> Self {
        Self {
            beta3: Complex::default(),
            ..*self
        }
    }

    /// `rho = beta1 + beta3 |u|^2`.
    pub fn instantaneous_gain(&self, u: Complex<T>) -> Complex<T> {
        self.beta1 + self.beta3 * u.norm_sqr()
    }

    /// PA output for one input sample.
    pub fn amplify(&self, u: Complex<T>) -> Complex<T> {
        self.instantaneous_gain(u) * u
    }

    /// Diagonal of the Bussgang gain `beta1 I + 2 beta3 diag(U)`.
    pub fn bussgang_gain(&self, cov: &SignalCovariance<T>) -> DiagonalGain<T> {
        DiagonalGain(self.bussgang_from_powers(&cov.epsilon))
    }

    pub(crate) fn bussgang_from_powers(&self, powers: &[T]) -> DVector<Complex<T>> {
        let two = T::lit(2.0);
        DVector::from_iterator(
            powers.len(),
            powers.iter().map(|&p| self.beta1 + self.beta3 * (two * p)),
        )
    }

    /// Distortion autocorrelation `2 |beta3|^2 U ∘ U ∘ U^T`.
    pub fn distortion_autocorr(&self, cov: &SignalCovariance<T>) -> CMatrix<T> {
        let scale = T::lit(2.0) * self.beta3.norm_sqr();
        let u = &cov.u;
        CMatrix::from_fn(u.nrows(), u.ncols(), |m, n| {
            let umn = u[(m, n)];
            umn * umn.norm_sqr() * scale
        })
    }

    /// `|beta1|^2 p + 4 Re(beta1 beta3^*) p^2 + 6 |beta3|^2 p^3`.
    pub fn radiated_power_of(&self, p: T) -> T {
        let (c1, c2, c3) = self.radiated_coefficients();
        p * (c1 + p * (c2 + p * c3))
    }

    /// Derivative of [`Self::radiated_power_of`] with respect to `p`.
    pub fn radiated_power_slope(&self, p: T) -> T {
        let (c1, c2, c3) = self.radiated_coefficients();
        c1 + p * (T::lit(2.0) * c2 + T::lit(3.0) * c3 * p)
    }

    fn radiated_coefficients(&self) -> (T, T, T) {
        let cross = (self.beta1 * self.beta3.conj()).re;
        (
            self.beta1.norm_sqr(),
            T::lit(4.0) * cross,
            T::lit(6.0) * self.beta3.norm_sqr(),
        )
    }

    /// Per-antenna radiated power `E|x_n|^2`.
    pub fn radiated_power(&self, b: &DigitalPrecoder<T>) -> Vec<T> {
        b.antenna_powers()
            .into_iter()
            .map(|p| self.radiated_power_of(p))
            .collect()
    }

    /// `sqrt(P_max) / xi_max`, the factor mapping `sqrt(P_rad)` to drawn power.
    pub fn supply_factor(&self) -> T {
        self.p_max.sqrt() / self.xi_max
    }

    /// Total PA power draw `sum_n sqrt(P_max) / xi_max * sqrt(P_rad,n)`.
    pub fn pa_power(&self, b: &DigitalPrecoder<T>) -> Result<T> {
        self.pa_power_from_antenna_powers(&b.antenna_powers())
    }

    pub(crate) fn pa_power_from_antenna_powers(&self, powers: &[T]) -> Result<T> {
        let mut total = T::zero();
        for (n, &p) in powers.iter().enumerate() {
            let prad = self.radiated_power_of(p);
            if prad < T::zero() {
                return Err(Error::NegativeRadiatedPower {
                    antenna: n,
                    value: prad.as_f64(),
                });
            }
            total += prad.sqrt();
        }
        Ok(total * self.supply_factor())
    }
}

/// Diagonal matrix stored as its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGain<T: Scalar>(pub DVector<Complex<T>>);

impl<T: Scalar> DiagonalGain<T> {
    pub fn diagonal(&self) -> &DVector<Complex<T>> {
        &self.0
    }

    pub fn to_matrix(&self) -> CMatrix<T> {
        CMatrix::from_diagonal(&self.0)
    }
}

/// Input covariance `U = B B^H` of the PA array and its diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalCovariance<T: Scalar> {
    pub u: CMatrix<T>,
    pub epsilon: Vec<T>,
}

impl<T: Scalar> SignalCovariance<T> {
    pub fn from_precoder(b: &DigitalPrecoder<T>) -> Self {
        let m = b.matrix();
        let u = m * m.adjoint();
        let epsilon = (0..u.nrows()).map(|n| u[(n, n)].re).collect();
        Self { u, epsilon }
    }
}
