//! SINR terms, the Jensen upper bound on the ergodic rate, a Monte Carlo
//! ergodic-rate estimator and the energy-efficiency objective.

use nalgebra::Complex;
use rand::Rng;

use crate::channel::{sample_gain, ArrayGeometry, UserChannelStats};
use crate::error::{Error, Result};
use crate::npa::{NpaModel, SignalCovariance};
use crate::power::{total_power, ArchitectureSpec, ComponentPowers};
use crate::precoder::DigitalPrecoder;
use crate::scalar::{CMatrix, CVector, Scalar};

/// Everything about the link that stays fixed while the precoder changes.
#[derive(Debug, Clone)]
pub struct LinkContext<T: Scalar> {
    pub geometry: ArrayGeometry,
    pub users: Vec<UserChannelStats<T>>,
    /// Steering vectors `v_k` as columns (N_t x K).
    pub steering: CMatrix<T>,
    pub npa: NpaModel<T>,
    /// Noise power in watts.
    pub n0: T,
    /// System bandwidth in Hz.
    pub bandwidth: T,
}

impl<T: Scalar> LinkContext<T> {
    pub fn new(
        geometry: ArrayGeometry,
        users: Vec<UserChannelStats<T>>,
        npa: NpaModel<T>,
        n0: T,
        bandwidth: T,
    ) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::Domain("at least one user is required".into()));
        }
        if users.len() > geometry.nt() {
            return Err(Error::Dimension(format!(
                "K = {} users exceed N_t = {} antennas",
                users.len(),
                geometry.nt()
            )));
        }
        if !(n0 > T::zero()) {
            return Err(Error::Domain(format!("noise power must be positive, got {n0}")));
        }
        if !(bandwidth > T::zero()) {
            return Err(Error::Domain(format!("bandwidth must be positive, got {bandwidth}")));
        }
        let mut steering = CMatrix::zeros(geometry.nt(), users.len());
        for (k, u) in users.iter().enumerate() {
            steering.set_column(k, &u.steering(&geometry));
        }
        Ok(Self {
            geometry,
            users,
            steering,
            npa,
            n0,
            bandwidth,
        })
    }

    pub fn nt(&self) -> usize {
        self.geometry.nt()
    }

    pub fn k(&self) -> usize {
        self.users.len()
    }

    pub fn steering_vector(&self, k: usize) -> CVector<T> {
        self.steering.column(k).into_owned()
    }

    /// Same link seen through a different amplifier model.
    pub fn with_npa(&self, npa: NpaModel<T>) -> Self {
        Self {
            npa,
            ..self.clone()
        }
    }

    pub(crate) fn check(&self, b: &DigitalPrecoder<T>) -> Result<()> {
        if b.nt() != self.nt() || b.k() != self.k() {
            return Err(Error::Dimension(format!(
                "precoder is {}x{}, link expects {}x{}",
                b.nt(),
                b.k(),
                self.nt(),
                self.k()
            )));
        }
        Ok(())
    }
}

/// Per-user decomposition of the bounded rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateBreakdown<T> {
    pub signal: T,
    pub interference: T,
    pub distortion: T,
    pub noise: T,
    /// Bits/s/Hz.
    pub rate_bound: T,
}

/// Intermediate quantities shared by the bound and its gradient.
pub(crate) struct RateTerms<T: Scalar> {
    pub powers: Vec<T>,
    pub gbar: Vec<Complex<T>>,
    pub cov: SignalCovariance<T>,
    /// `a[(k, l)] = v_k^H Gbar b_l`.
    pub a: CMatrix<T>,
    pub f: Vec<T>,
    pub gi: Vec<T>,
    pub gd: Vec<T>,
}

impl<T: Scalar> RateTerms<T> {
    pub fn new(ctx: &LinkContext<T>, b: &DigitalPrecoder<T>) -> Self {
        let cov = SignalCovariance::from_precoder(b);
        let powers = cov.epsilon.clone();
        let gbar: Vec<_> = ctx.npa.bussgang_from_powers(&powers).iter().copied().collect();
        let bm = b.matrix();
        let gb = CMatrix::from_fn(bm.nrows(), bm.ncols(), |n, l| gbar[n] * bm[(n, l)]);
        let a = ctx.steering.adjoint() * gb;
        let d = ctx.npa.distortion_autocorr(&cov);
        let k = ctx.k();
        let mut f = Vec::with_capacity(k);
        let mut gi = Vec::with_capacity(k);
        let mut gd = Vec::with_capacity(k);
        for kk in 0..k {
            let gamma = ctx.users[kk].avg_power;
            f.push(gamma * a[(kk, kk)].norm_sqr());
            let interf = (0..k)
                .filter(|&l| l != kk)
                .fold(T::zero(), |acc, l| acc + a[(kk, l)].norm_sqr());
            gi.push(gamma * interf);
            let v = ctx.steering.column(kk);
            let quad = (v.adjoint() * &d * v)[(0, 0)].re;
            gd.push(gamma * quad);
        }
        Self {
            powers,
            gbar,
            cov,
            a,
            f,
            gi,
            gd,
        }
    }

    pub fn effective_noise(&self, k: usize, n0: T) -> T {
        self.gi[k] + self.gd[k] + n0
    }

    pub fn sum_rate(&self, n0: T) -> T {
        (0..self.f.len()).fold(T::zero(), |acc, k| {
            acc + bounded_rate(self.f[k], self.effective_noise(k, n0))
        })
    }
}

fn bounded_rate<T: Scalar>(signal: T, noise: T) -> T {
    (T::one() + signal / noise).log2()
}

/// Jensen upper bound on each user's ergodic rate.
pub fn rate_upper_bound<T: Scalar>(
    ctx: &LinkContext<T>,
    b: &DigitalPrecoder<T>,
) -> Result<Vec<RateBreakdown<T>>> {
    ctx.check(b)?;
    let t = RateTerms::new(ctx, b);
    Ok((0..ctx.k())
        .map(|k| RateBreakdown {
            signal: t.f[k],
            interference: t.gi[k],
            distortion: t.gd[k],
            noise: ctx.n0,
            rate_bound: bounded_rate(t.f[k], t.effective_noise(k, ctx.n0)),
        })
        .collect())
}

/// Sum of the bounded rates, bits/s/Hz.
pub fn sum_rate_bound<T: Scalar>(ctx: &LinkContext<T>, b: &DigitalPrecoder<T>) -> Result<T> {
    ctx.check(b)?;
    Ok(RateTerms::new(ctx, b).sum_rate(ctx.n0))
}

/// Monte Carlo estimate of one user's ergodic rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateEstimate<T> {
    pub mean: T,
    pub std_err: T,
}

/// Averages `log2(1 + SINR_k)` over `n_samples` Rician draws of each user's
/// gain. The Bussgang gain and distortion covariance are ensemble quantities
/// of `B` and stay fixed across draws.
pub fn ergodic_rate_mc<T: Scalar, R: Rng + ?Sized>(
    ctx: &LinkContext<T>,
    b: &DigitalPrecoder<T>,
    n_samples: usize,
    rng: &mut R,
) -> Result<Vec<RateEstimate<T>>> {
    ctx.check(b)?;
    if n_samples == 0 {
        return Err(Error::Domain("need at least one Monte Carlo sample".into()));
    }
    let t = RateTerms::new(ctx, b);
    let n0 = ctx.n0.as_f64();
    let mut out = Vec::with_capacity(ctx.k());
    for (k, user) in ctx.users.iter().enumerate() {
        let gamma = user.avg_power.as_f64();
        // per unit |g|^2
        let (sig, rest) = if gamma > 0.0 {
            (t.f[k].as_f64() / gamma, (t.gi[k] + t.gd[k]).as_f64() / gamma)
        } else {
            (0.0, 0.0)
        };
        let (mut s1, mut s2) = (0.0f64, 0.0f64);
        for _ in 0..n_samples {
            let g2 = sample_gain(user, rng).norm_sqr().as_f64();
            let r = (1.0 + g2 * sig / (g2 * rest + n0)).log2();
            s1 += r;
            s2 += r * r;
        }
        let n = n_samples as f64;
        let mean = s1 / n;
        let var = if n_samples > 1 {
            ((s2 - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        out.push(RateEstimate {
            mean: T::lit(mean),
            std_err: T::lit((var / n).sqrt()),
        });
    }
    Ok(out)
}

/// `EE = B_w * sum_k Rbar_k / P_total`, bits per joule.
pub fn energy_efficiency<T: Scalar>(
    ctx: &LinkContext<T>,
    b: &DigitalPrecoder<T>,
    spec: &ArchitectureSpec,
    comps: &ComponentPowers<T>,
) -> Result<T> {
    let rate = sum_rate_bound(ctx, b)?;
    let p = total_power(spec, comps, &ctx.npa, b)?;
    Ok(ctx.bandwidth * rate / p)
}
