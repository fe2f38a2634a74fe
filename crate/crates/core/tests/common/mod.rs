#![allow(dead_code)]

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use trps_precoding::channel::{channel_power, draw_users, noise_power};
use trps_precoding::scalar::{db_to_linear, dbm_to_watts};
use trps_precoding::{ArrayGeometry, CMatrix, DigitalPrecoder, LinkContext, NpaModel};

pub fn amp() -> NpaModel<f64> {
    NpaModel::new(
        Complex::new(2.96, 0.0),
        Complex::from_polar(0.1418, -2.816),
        dbm_to_watts(6.0),
        0.3,
    )
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn crandn<R: Rng>(rng: &mut R) -> Complex<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> CMatrix<f64> {
    CMatrix::from_fn(rows, cols, |_, _| crandn(rng) * scale)
}

pub fn random_precoder<R: Rng>(rng: &mut R, nt: usize, k: usize, scale: f64) -> DigitalPrecoder<f64> {
    DigitalPrecoder::new(random_matrix(rng, nt, k, scale)).unwrap()
}

/// Link with the reference amplifier, a 30 dBi terminal gain and Ku-band
/// geostationary path loss.
pub fn link(nx: usize, ny: usize, k: usize, kappa_db: f64, seed: u64) -> LinkContext<f64> {
    let geometry = ArrayGeometry::new(nx, ny).unwrap();
    let gamma = channel_power(1.0, 1e3, geometry.nt(), 11.45e9, 1e6);
    let mut r = rng(seed);
    let users = draw_users(k, gamma, db_to_linear(kappa_db), &mut r);
    LinkContext::new(geometry, users, amp(), noise_power(0.25e9, 300.0), 0.25e9).unwrap()
}

/// Factorizations of `nt` into an `nx x ny` array.
pub fn geometry_for(nt: usize) -> (usize, usize) {
    match nt {
        4 => (2, 2),
        8 => (2, 4),
        16 => (4, 4),
        n => (1, n),
    }
}

/// Monte Carlo moments of the amplified signal for `u = B s`, `s ~ CN(0, I)`:
/// per-antenna `E{x_n u_n^*} / E{|u_n|^2}` and the distortion covariance
/// `E{d d^H}` with `d = x - Gbar u` for the supplied diagonal `gbar`.
pub struct AmpMoments {
    pub gain: Vec<Complex<f64>>,
    pub distortion: CMatrix<f64>,
}

pub fn amp_moments<R: Rng>(
    npa: &NpaModel<f64>,
    b: &DigitalPrecoder<f64>,
    gbar: &[Complex<f64>],
    samples: usize,
    rng: &mut R,
) -> AmpMoments {
    let bm = b.matrix();
    let (nt, k) = (bm.nrows(), bm.ncols());
    let mut xu = vec![Complex::new(0.0, 0.0); nt];
    let mut uu = vec![0.0; nt];
    let mut dd = CMatrix::<f64>::zeros(nt, nt);
    let mut s = nalgebra::DVector::<Complex<f64>>::zeros(k);
    let mut d = vec![Complex::new(0.0, 0.0); nt];
    for _ in 0..samples {
        for v in s.iter_mut() {
            *v = crandn(rng);
        }
        let u = bm * &s;
        for n in 0..nt {
            let x = npa.amplify(u[n]);
            xu[n] += x * u[n].conj();
            uu[n] += u[n].norm_sqr();
            d[n] = x - gbar[n] * u[n];
        }
        for m in 0..nt {
            for n in m..nt {
                dd[(m, n)] += d[m] * d[n].conj();
            }
        }
    }
    let inv = 1.0 / samples as f64;
    for m in 0..nt {
        for n in m..nt {
            dd[(m, n)] *= inv;
            dd[(n, m)] = dd[(m, n)].conj();
        }
    }
    AmpMoments {
        gain: xu.iter().zip(&uu).map(|(a, &p)| a / p).collect(),
        distortion: dd,
    }
}

/// `B = V W` for a `V` whose nonzero phases come from the network's own
/// alphabets with the network's set sizes (per chain when fully connected),
/// and a Gaussian `W` with `mt` columns.
pub fn representable_b<R: Rng>(rng: &mut R, net: &trps_precoding::TrpsNetwork<f64>) -> DigitalPrecoder<f64> {
    use rand::seq::SliceRandom;
    use trps_precoding::hybrid::Connection;
    let (nt, mt) = (net.nt, net.mt);
    let ng = nt / mt;
    let mut low = vec![false; nt * mt];
    match net.arch {
        Connection::FullyConnected => {
            for (j, &count) in net.low_budgets.iter().enumerate() {
                let mut rows: Vec<usize> = (0..nt).collect();
                rows.shuffle(rng);
                for &i in &rows[..count] {
                    low[i + j * nt] = true;
                }
            }
        }
        Connection::PartiallyConnected => {
            let mut rows: Vec<usize> = (0..nt).collect();
            rows.shuffle(rng);
            for &i in &rows[..net.n_low] {
                low[i + (i / ng) * nt] = true;
            }
        }
    }
    let v = CMatrix::from_fn(nt, mt, |i, j| {
        if net.arch == Connection::PartiallyConnected && i / ng != j {
            return Complex::new(0.0, 0.0);
        }
        let set = if low[i + j * nt] { &net.q_low } else { &net.q_high };
        let m = rng.random_range(0..set.values().len());
        Complex::from_polar(1.0, set.values()[m])
    });
    let w = random_matrix(rng, mt, mt, 0.3);
    DigitalPrecoder::new(v * w).unwrap()
}
