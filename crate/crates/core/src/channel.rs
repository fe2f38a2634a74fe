//! UPA array responses and Rician channel statistics for single-antenna
//! user terminals.

use nalgebra::Complex;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::scalar::{cis, CVector, Scalar};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 2.998e8;
/// Boltzmann constant in J/K.
pub const BOLTZMANN: f64 = 1.38e-23;

/// Uniform planar array with half-wavelength spacing on both axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayGeometry {
    nx: usize,
    ny: usize,
}

impl ArrayGeometry {
    pub fn new(nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::Domain(format!(
                "array dimensions must be positive, got {nx}x{ny}"
            )));
        }
        Ok(Self { nx, ny })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    /// Total number of antenna elements.
    pub fn nt(&self) -> usize {
        self.nx * self.ny
    }
}

/// Statistical CSI of one user terminal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserChannelStats<T> {
    pub space_angle_x: T,
    pub space_angle_y: T,
    /// Average channel power, linear.
    pub avg_power: T,
    /// Rician factor, linear.
    pub rician_factor: T,
}

impl<T: Scalar> UserChannelStats<T> {
    pub fn new(space_angle_x: T, space_angle_y: T, avg_power: T, rician_factor: T) -> Result<Self> {
        check_angle(space_angle_x)?;
        check_angle(space_angle_y)?;
        if !(avg_power >= T::zero()) {
            return Err(Error::Domain(format!("average power must be >= 0, got {avg_power}")));
        }
        if !(rician_factor >= T::zero()) {
            return Err(Error::Domain(format!(
                "Rician factor must be >= 0, got {rician_factor}"
            )));
        }
        Ok(Self {
            space_angle_x,
            space_angle_y,
            avg_power,
            rician_factor,
        })
    }

    /// Array response towards this user.
    pub fn steering(&self, geometry: &ArrayGeometry) -> CVector<T> {
        upa_response(geometry, self.space_angle_x, self.space_angle_y)
            .expect("angles validated on construction")
    }

    /// Draws one channel realization `h = g v`.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        geometry: &ArrayGeometry,
        rng: &mut R,
    ) -> ChannelRealization<T> {
        let gain = sample_gain(self, rng);
        ChannelRealization {
            h: self.steering(geometry) * gain,
            gain,
        }
    }
}

/// One instantaneous channel vector and the scalar gain that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Scalar> {
    pub h: CVector<T>,
    pub gain: Complex<T>,
}

fn check_angle<T: Scalar>(theta: T) -> Result<()> {
    if theta >= -T::one() && theta < T::one() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "space angle must lie in [-1, 1), got {theta}"
        )))
    }
}

fn axis_response<T: Scalar>(n: usize, theta: T) -> Vec<Complex<T>> {
    let scale = T::one() / T::lit(n as f64).sqrt();
    (0..n)
        .map(|m| cis(-T::pi() * T::lit(m as f64) * theta) * scale)
        .collect()
}

/// UPA response `v_x(theta_x) ⊗ v_y(theta_y)`, unit norm.
pub fn upa_response<T: Scalar>(
    geometry: &ArrayGeometry,
    space_angle_x: T,
    space_angle_y: T,
) -> Result<CVector<T>> {
    check_angle(space_angle_x)?;
    check_angle(space_angle_y)?;
    let vx = axis_response(geometry.nx, space_angle_x);
    let vy = axis_response(geometry.ny, space_angle_y);
    Ok(CVector::from_iterator(
        geometry.nt(),
        vx.iter().flat_map(|a| vy.iter().map(move |b| *a * *b)),
    ))
}

/// Free-space channel power `G_sat G_ut N_t (c / (4 pi f_c d_0))^2`.
pub fn channel_power(g_sat: f64, g_ut: f64, nt: usize, fc_hz: f64, d0_m: f64) -> f64 {
    let ratio = SPEED_OF_LIGHT / (4.0 * std::f64::consts::PI * fc_hz * d0_m);
    g_sat * g_ut * nt as f64 * ratio * ratio
}

/// Thermal noise power `k_B B_w T_n` in watts.
pub fn noise_power(bandwidth_hz: f64, noise_temp_k: f64) -> f64 {
    BOLTZMANN * bandwidth_hz * noise_temp_k
}

/// Draws a Rician gain with `E|g|^2 = avg_power`. The LOS phase is uniform
/// in `[0, 2 pi)` per draw.
pub fn sample_gain<T: Scalar, R: Rng + ?Sized>(
    stats: &UserChannelStats<T>,
    rng: &mut R,
) -> Complex<T> {
    let gamma = stats.avg_power.as_f64();
    let kappa = stats.rician_factor.as_f64();
    let (los_amp, nlos_amp) = if kappa.is_infinite() {
        (gamma.sqrt(), 0.0)
    } else {
        (
            (gamma * kappa / (1.0 + kappa)).sqrt(),
            (gamma / (1.0 + kappa)).sqrt(),
        )
    };
    let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let z = Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    let g = Complex::from_polar(los_amp, phase) + z * nlos_amp;
    Complex::new(T::lit(g.re), T::lit(g.im))
}

/// Draws `k` users with i.i.d. uniform space angles in `[-1, 1)` and a common
/// average power and Rician factor.
pub fn draw_users<T: Scalar, R: Rng + ?Sized>(
    k: usize,
    avg_power: T,
    rician_factor: T,
    rng: &mut R,
) -> Vec<UserChannelStats<T>> {
    (0..k)
        .map(|_| {
            let ax = rng.random_range(-1.0..1.0);
            let ay = rng.random_range(-1.0..1.0);
            UserChannelStats::new(T::lit(ax), T::lit(ay), avg_power, rician_factor)
                .expect("uniform draws lie in [-1, 1)")
        })
        .collect()
}
