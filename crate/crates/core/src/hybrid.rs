//! Factorization of a fully digital precoder `B` into a quantized analog
//! network `V` and a digital precoder `W`.
//!
//! Both connection patterns use the same greedy scheme: start from an
//! unquantized MM solution, then repeatedly pick the unfrozen analog entry
//! whose phase is closest to the active phase set, snap it, freeze it, and
//! re-optimize the remaining entries. Low-resolution entries are placed
//! first; whatever is left becomes high resolution.

use nalgebra::linalg::SymmetricEigen;
use nalgebra::Complex;

use crate::bisect::bisect_scale;
use crate::error::{Error, Result};
use crate::npa::NpaModel;
use crate::power::{ArchitectureKind, ArchitectureSpec};
use crate::precoder::DigitalPrecoder;
use crate::scalar::{arg, cis, fro_sq, CMatrix, CVector, Scalar};

/// Uniform phase alphabet of a `bits`-bit shifter:
/// `{2 pi m / 2^r + pi / 2^r : m = 0 .. 2^r - 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSet<T> {
    bits: u32,
    values: Vec<T>,
}

impl<T: Scalar> PhaseSet<T> {
    pub fn new(bits: u32) -> Result<Self> {
        if bits == 0 || bits > 16 {
            return Err(Error::Domain(format!(
                "phase-shifter resolution must be 1..=16 bits, got {bits}"
            )));
        }
        let count = 1usize << bits;
        let spacing = T::two_pi() / T::lit(count as f64);
        let offset = T::pi() / T::lit(count as f64);
        let values = (0..count)
            .map(|m| spacing * T::lit(m as f64) + offset)
            .collect();
        Ok(Self { bits, values })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn spacing(&self) -> T {
        T::two_pi() / T::lit(self.values.len() as f64)
    }

    /// Nearest alphabet index to `angle` and the wrap-around distance.
    /// Ties go to the lower index.
    pub fn nearest(&self, angle: T) -> (usize, T) {
        let mut best = (0, T::max_value().unwrap());
        for (m, &psi) in self.values.iter().enumerate() {
            let d = angular_distance(angle, psi);
            if d < best.1 {
                best = (m, d);
            }
        }
        best
    }
}

/// `min(|a - b|, 2 pi - |a - b|)` after reducing the difference mod `2 pi`.
pub fn angular_distance<T: Scalar>(a: T, b: T) -> T {
    let two_pi = T::two_pi();
    let mut d = (a - b) % two_pi;
    if d < T::zero() {
        d += two_pi;
    }
    d.min(two_pi - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Connection {
    FullyConnected,
    PartiallyConnected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    High,
    Low,
}

/// Twin-resolution phase-shifting network. The index sets start empty and
/// are filled by the decomposition.
///
/// Flat indices are `i + j * nt` for the `(i, j)` entry of a fully connected
/// `V` and the antenna index `i` for a partially connected one.
#[derive(Debug, Clone, PartialEq)]
pub struct TrpsNetwork<T> {
    pub arch: Connection,
    pub nt: usize,
    pub mt: usize,
    pub q_high: PhaseSet<T>,
    pub q_low: PhaseSet<T>,
    /// Target number of high-resolution shifters.
    pub n_high: usize,
    /// Target number of low-resolution shifters.
    pub n_low: usize,
    /// Low-resolution shifters per RF chain (fully connected only).
    pub low_budgets: Vec<usize>,
    pub s_high: Vec<usize>,
    pub s_low: Vec<usize>,
}

impl<T: Scalar> TrpsNetwork<T> {
    pub fn new(
        arch: Connection,
        nt: usize,
        mt: usize,
        r_high: u32,
        r_low: u32,
        n_high: usize,
        n_low: usize,
    ) -> Result<Self> {
        if mt == 0 || mt > nt {
            return Err(Error::Domain(format!("need 1 <= M_t <= N_t, got {mt} / {nt}")));
        }
        let total = match arch {
            Connection::FullyConnected => nt * mt,
            Connection::PartiallyConnected => {
                if nt % mt != 0 {
                    return Err(Error::Domain(format!(
                        "partially connected network needs N_t divisible by M_t, got {nt} / {mt}"
                    )));
                }
                nt
            }
        };
        if n_high + n_low != total {
            return Err(Error::Domain(format!(
                "N_H + N_L must equal {total}, got {n_high} + {n_low}"
            )));
        }
        let low_budgets = match arch {
            Connection::FullyConnected => even_split(n_low, mt),
            Connection::PartiallyConnected => Vec::new(),
        };
        Ok(Self {
            arch,
            nt,
            mt,
            q_high: PhaseSet::new(r_high)?,
            q_low: PhaseSet::new(r_low)?,
            n_high,
            n_low,
            low_budgets,
            s_high: Vec::new(),
            s_low: Vec::new(),
        })
    }

    /// Network matching a hybrid architecture spec.
    pub fn from_spec(spec: &ArchitectureSpec, r_high: u32, r_low: u32) -> Result<Self> {
        spec.validate()?;
        let arch = match spec.kind {
            k if k.is_fully_connected() => Connection::FullyConnected,
            k if k.is_partially_connected() => Connection::PartiallyConnected,
            ArchitectureKind::FullyDigital => {
                return Err(Error::Domain("fully digital transmitter has no analog network".into()))
            }
            _ => unreachable!(),
        };
        Self::new(arch, spec.nt, spec.mt, r_high, r_low, spec.n_high, spec.n_low)
    }

    /// Replaces the even per-chain split of low-resolution shifters.
    pub fn with_low_budgets(mut self, budgets: Vec<usize>) -> Result<Self> {
        if self.arch != Connection::FullyConnected {
            return Err(Error::Config("per-chain budgets apply to fully connected networks".into()));
        }
        if budgets.len() != self.mt
            || budgets.iter().sum::<usize>() != self.n_low
            || budgets.iter().any(|&b| b > self.nt)
        {
            return Err(Error::Config(format!(
                "per-chain budgets {budgets:?} must have {} entries, each <= {}, summing to {}",
                self.mt, self.nt, self.n_low
            )));
        }
        self.low_budgets = budgets;
        Ok(self)
    }

    pub fn group_size(&self) -> usize {
        self.nt / self.mt
    }

    fn phase_set(&self, r: Resolution) -> &PhaseSet<T> {
        match r {
            Resolution::High => &self.q_high,
            Resolution::Low => &self.q_low,
        }
    }

    /// Checks that `h` satisfies the network: unit-modulus nonzeros in the
    /// right pattern, every nonzero snapped bit-exactly to its assigned
    /// alphabet, and index sets of the configured sizes.
    pub fn verify(&self, h: &HybridPrecoder<T>) -> Result<()> {
        let v = &h.v;
        if v.nrows() != self.nt || v.ncols() != self.mt {
            return Err(Error::Dimension("analog precoder has the wrong shape".into()));
        }
        if self.s_low.len() != self.n_low || self.s_high.len() != self.n_high {
            return Err(Error::Domain("index sets do not match N_L / N_H".into()));
        }
        let mut seen = vec![false; self.nt * self.mt];
        for a in &h.assignments {
            let set = self.phase_set(a.resolution);
            let want = cis(set.values[a.index]);
            if v[(a.row, a.col)] != want {
                return Err(Error::Domain(format!(
                    "entry ({}, {}) is not the assigned phase",
                    a.row, a.col
                )));
            }
            let flat = self.flat_index(a.row, a.col);
            let listed = match a.resolution {
                Resolution::High => self.s_high.contains(&flat),
                Resolution::Low => self.s_low.contains(&flat),
            };
            if !listed {
                return Err(Error::Domain(format!("index {flat} missing from its set")));
            }
            seen[a.row + a.col * self.nt] = true;
        }
        for j in 0..self.mt {
            for i in 0..self.nt {
                let active = self.is_active(i, j);
                if active != seen[i + j * self.nt] {
                    return Err(Error::Domain(format!("entry ({i}, {j}) has the wrong support")));
                }
                if !active && v[(i, j)] != Complex::default() {
                    return Err(Error::Domain(format!("entry ({i}, {j}) must be zero")));
                }
            }
        }
        Ok(())
    }

    fn is_active(&self, i: usize, j: usize) -> bool {
        match self.arch {
            Connection::FullyConnected => true,
            Connection::PartiallyConnected => i / self.group_size() == j,
        }
    }

    fn flat_index(&self, i: usize, j: usize) -> usize {
        match self.arch {
            Connection::FullyConnected => i + j * self.nt,
            Connection::PartiallyConnected => i,
        }
    }
}

fn even_split(total: usize, parts: usize) -> Vec<usize> {
    let base = total / parts;
    let extra = total % parts;
    (0..parts).map(|j| base + usize::from(j < extra)).collect()
}

/// Which alphabet entry a quantized analog coefficient was snapped to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseAssignment {
    pub row: usize,
    pub col: usize,
    pub resolution: Resolution,
    pub index: usize,
}

/// `B ≈ V W`: analog `V` (N_t x M_t) and digital `W` (M_t x K).
#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder<T: Scalar> {
    pub v: CMatrix<T>,
    pub w: CMatrix<T>,
    pub assignments: Vec<PhaseAssignment>,
}

impl<T: Scalar> HybridPrecoder<T> {
    pub fn product(&self) -> Result<DigitalPrecoder<T>> {
        DigitalPrecoder::new(&self.v * &self.w)
    }
}

/// Decomposition output with its diagnostics.
#[derive(Debug, Clone)]
pub struct HybridDesign<T: Scalar> {
    pub precoder: HybridPrecoder<T>,
    /// Network with `s_high` / `s_low` filled in.
    pub network: TrpsNetwork<T>,
    /// `||B - V W_bar||_F` after normalization.
    pub residual: T,
    /// Squared residual `||B - V W||_F^2` along each MM run; the first
    /// entry of every run is the value right after a quantization step.
    pub residual_runs: Vec<Vec<T>>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions<T> {
    /// Absolute stopping level on `||B - V W||_F^2`; `None` means
    /// `1e-6 ||B||_F^2`.
    pub tol: Option<T>,
    pub max_iters: usize,
    /// An MM run also stops once one iteration lowers the squared residual
    /// by less than this fraction of its current value.
    pub stall_rel: T,
    /// Starting points tried, in order, for the unquantized fully connected
    /// solution. The first one that reaches `tol` wins; otherwise the one
    /// with the lowest residual is kept.
    pub starts: usize,
    /// Phase-update rounds after each partially connected quantization.
    pub mm_rounds: usize,
    /// Relative tolerance of the final power renormalization.
    pub normalize_rel_tol: T,
}

impl<T: Scalar> Default for DecomposeOptions<T> {
    fn default() -> Self {
        Self {
            tol: None,
            max_iters: 200,
            stall_rel: T::lit(1e-4),
            starts: 4,
            mm_rounds: 50,
            normalize_rel_tol: T::lit(1e-10),
        }
    }
}

/// Least-squares digital precoder `(V^H V)^{-1} V^H B`.
pub fn least_squares_digital<T: Scalar>(
    v: &CMatrix<T>,
    b: &CMatrix<T>,
    warnings: &mut Vec<String>,
) -> CMatrix<T> {
    let gram = v.adjoint() * v;
    let rhs = v.adjoint() * b;
    if let Some(ch) = gram.clone().cholesky() {
        return ch.solve(&rhs);
    }
    warnings.push("singular V^H V, regularized with 1e-12 I".into());
    let n = gram.nrows();
    let reg = gram + CMatrix::identity(n, n) * Complex::from(T::lit(1e-12));
    match reg.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => CMatrix::zeros(v.ncols(), b.ncols()),
    }
}

/// One MM pass for a fully connected `V`: `W <- LS(V)`, then every unfrozen
/// `V[n,k] <- exp(-j arg C[k,n])` with
/// `C = W B^H - (W W^H - lambda_max I) V^H`. Returns the new `V` and the
/// `W` used to build it.
pub fn mm_update_fully<T: Scalar>(
    b: &CMatrix<T>,
    v: &CMatrix<T>,
    frozen: &[bool],
    warnings: &mut Vec<String>,
) -> (CMatrix<T>, CMatrix<T>) {
    let w = least_squares_digital(v, b, warnings);
    (mm_phase_step(b, v, &w, frozen), w)
}

fn mm_phase_step<T: Scalar>(
    b: &CMatrix<T>,
    v: &CMatrix<T>,
    w: &CMatrix<T>,
    frozen: &[bool],
) -> CMatrix<T> {
    let s = w * w.adjoint();
    let lambda = SymmetricEigen::new(s.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(T::zero(), |a, x| a.max(x));
    let mt = s.nrows();
    let shifted = s - CMatrix::identity(mt, mt) * Complex::from(lambda);
    let c = w * b.adjoint() - shifted * v.adjoint();
    let nt = v.nrows();
    let mut v_new = v.clone();
    for k in 0..v.ncols() {
        for n in 0..nt {
            if !frozen[n + k * nt] {
                v_new[(n, k)] = cis(-arg(c[(k, n)]));
            }
        }
    }
    v_new
}

/// Picks the candidate closest to `set`; returns `(position in candidates,
/// alphabet index)`. Ties go to the earliest candidate.
pub fn quantize_next<T: Scalar>(
    angles: impl Iterator<Item = T>,
    set: &PhaseSet<T>,
) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize, T)> = None;
    for (pos, a) in angles.enumerate() {
        let (m, d) = set.nearest(a);
        if best.is_none_or(|(_, _, bd)| d < bd) {
            best = Some((pos, m, d));
        }
    }
    best.map(|(pos, m, _)| (pos, m))
}

/// Candidate common rotations of a block none of whose entries is frozen
/// yet. Rotating a whole column of `V` (or a partially connected block)
/// costs nothing because `W` absorbs it. Each candidate snaps one entry
/// onto `Q_H` or `Q_L`; `cost` is the summed squared distance of all
/// entries to `Q_H ∪ Q_L` and `low` counts entries landing on `Q_L`.
struct RotationFit<T> {
    theta: T,
    cost: T,
    low: usize,
}

fn snap_tol<T: Scalar>() -> T {
    T::lit(1e3) * T::default_epsilon()
}

fn grid_cost<T: Scalar>(angles: &[T], theta: T, q_high: &PhaseSet<T>, q_low: &PhaseSet<T>) -> (T, usize) {
    let tol = snap_tol::<T>();
    angles.iter().fold((T::zero(), 0), |(acc, low), &b| {
        let dl = q_low.nearest(b + theta).1;
        let d = q_high.nearest(b + theta).1.min(dl);
        (acc + d * d, low + usize::from(dl < tol))
    })
}

fn rotation_fits<T: Scalar>(angles: &[T], q_high: &PhaseSet<T>, q_low: &PhaseSet<T>) -> Vec<RotationFit<T>> {
    let mut fits = Vec::with_capacity(2 * angles.len());
    for &a in angles {
        for set in [q_low, q_high] {
            let (m, _) = set.nearest(a);
            let theta = set.values()[m] - a;
            let (cost, low) = grid_cost(angles, theta, q_high, q_low);
            fits.push(RotationFit { theta, cost, low });
        }
    }
    fits
}

fn is_exact<T: Scalar>(cost: T, len: usize) -> bool {
    let tol = snap_tol::<T>();
    cost <= tol * tol * T::lit(len as f64)
}

/// Lowest-cost rotation. When the block fits the grid exactly in more than
/// one way, an exact fit with `want_low` entries on `Q_L` is preferred.
fn grid_rotation<T: Scalar>(
    angles: &[T],
    q_high: &PhaseSet<T>,
    q_low: &PhaseSet<T>,
    want_low: Option<usize>,
) -> T {
    let fits = rotation_fits(angles, q_high, q_low);
    let by_cost = |a: &&RotationFit<T>, c: &&RotationFit<T>| {
        a.cost.partial_cmp(&c.cost).unwrap_or(std::cmp::Ordering::Equal)
    };
    want_low
        .and_then(|w| {
            fits.iter()
                .filter(|f| f.low == w && is_exact(f.cost, angles.len()))
                .min_by(by_cost)
        })
        .or_else(|| fits.iter().min_by(by_cost))
        .map_or(T::zero(), |f| f.theta)
}

/// Rotations for several blocks at once. If every block fits the grid
/// exactly, picks one exact fit per block so that the `Q_L` counts add up to
/// `total_low`; otherwise (or if no such choice exists) each block takes its
/// lowest-cost rotation.
fn joint_grid_rotation<T: Scalar>(
    blocks: &[Vec<T>],
    q_high: &PhaseSet<T>,
    q_low: &PhaseSet<T>,
    total_low: usize,
) -> Vec<T> {
    let fallback = || blocks.iter().map(|a| grid_rotation(a, q_high, q_low, None)).collect();
    let mut options: Vec<Vec<(usize, T)>> = Vec::with_capacity(blocks.len());
    for angles in blocks {
        let mut opts: Vec<(usize, T)> = Vec::new();
        for f in rotation_fits(angles, q_high, q_low) {
            if is_exact(f.cost, angles.len()) && opts.iter().all(|o| o.0 != f.low) {
                opts.push((f.low, f.theta));
            }
        }
        if opts.is_empty() {
            return fallback();
        }
        options.push(opts);
    }
    fn search<T: Copy>(options: &[Vec<(usize, T)>], left: usize, chosen: &mut Vec<T>) -> bool {
        let Some((first, rest)) = options.split_first() else {
            return left == 0;
        };
        for &(low, theta) in first {
            if low <= left {
                chosen.push(theta);
                if search(rest, left - low, chosen) {
                    return true;
                }
                chosen.pop();
            }
        }
        false
    }
    let mut chosen = Vec::with_capacity(blocks.len());
    if search(&options, total_low, &mut chosen) {
        chosen
    } else {
        fallback()
    }
}

pub fn mm_run_fully<T: Scalar>(
    b: &CMatrix<T>,
    v: &mut CMatrix<T>,
    frozen: &[bool],
    tol: T,
    opts: &DecomposeOptions<T>,
    warnings: &mut Vec<String>,
) -> (CMatrix<T>, Vec<T>) {
    let mut w = least_squares_digital(v, b, warnings);
    let mut r = fro_sq(&(b - &*v * &w));
    let mut trace = vec![r];
    if frozen.iter().all(|&f| f) {
        return (w, trace);
    }
    for _ in 0..opts.max_iters {
        if r < tol {
            break;
        }
        let v_new = mm_phase_step(b, v, &w, frozen);
        let w_new = least_squares_digital(&v_new, b, warnings);
        let r_new = fro_sq(&(b - &v_new * &w_new));
        trace.push(r_new);
        *v = v_new;
        w = w_new;
        let gain = r - r_new;
        r = r_new;
        if gain <= opts.stall_rel * r {
            break;
        }
    }
    (w, trace)
}

fn unit_phase<T: Scalar>(z: Complex<T>) -> Complex<T> {
    if z == Complex::default() {
        Complex::from(T::one())
    } else {
        cis(arg(z))
    }
}

fn dft_entry<T: Scalar>(n: usize, j: usize, nt: usize) -> Complex<T> {
    cis(-T::two_pi() * T::lit(((n * j) % nt) as f64) / T::lit(nt as f64))
}

/// Looks for unit-modulus vectors close to the column space of `B` by
/// alternating projection from `tries` seeded starts, then keeps the `mt`
/// best that are pairwise distinct up to a common phase. Missing columns
/// are DFT columns.
fn span_analog<T: Scalar>(b: &CMatrix<T>, mt: usize, tries: usize, iters: usize) -> CMatrix<T> {
    use rand::{Rng, SeedableRng};
    let nt = b.nrows();
    let q = b.clone().qr().q();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed_5a);
    let mut found: Vec<(T, CVector<T>)> = Vec::with_capacity(tries);
    for _ in 0..tries {
        let x = CVector::<T>::from_fn(q.ncols(), |_, _| {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            Complex::new(T::lit(re), T::lit(im))
        });
        let mut v = (&q * x).map(unit_phase);
        let mut miss = T::zero();
        for _ in 0..iters {
            let p = &q * (q.adjoint() * &v);
            miss = (&v - &p).norm_squared();
            v = p.map(unit_phase);
        }
        found.push((miss, v));
    }
    found.sort_by(|a, c| a.0.partial_cmp(&c.0).unwrap_or(std::cmp::Ordering::Equal));
    let n = T::lit(nt as f64);
    let mut cols: Vec<CVector<T>> = Vec::with_capacity(mt);
    for (_, v) in found {
        if cols.len() == mt {
            break;
        }
        if cols.iter().all(|c| nalgebra::ComplexField::abs(c.dotc(&v)) < T::lit(0.99) * n) {
            cols.push(v);
        }
    }
    CMatrix::from_fn(nt, mt, |r, j| match cols.get(j) {
        Some(c) => c[r],
        None => dft_entry(r, j, nt),
    })
}

/// Unquantized starting points for a fully connected `V`, in order:
/// unit-modulus vectors fitted to the column space of `B`, phases of the
/// leading left singular vectors of `B`, phases of the columns of `B`,
/// then pseudo-random mixtures of the columns of `B` from a fixed seed.
/// Columns beyond the rank of `B` are DFT columns.
pub fn initial_analogs<T: Scalar>(b: &CMatrix<T>, mt: usize, count: usize) -> Vec<CMatrix<T>> {
    use rand::{Rng, SeedableRng};
    let nt = b.nrows();
    let svd = b.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &c| {
        svd.singular_values[c]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut out = Vec::with_capacity(count.max(1));
    out.push(span_analog(b, mt, 8 * mt, 200));
    if count >= 2 {
        out.push(CMatrix::from_fn(nt, mt, |n, j| match order.get(j) {
            Some(&c) => unit_phase(u[(n, c)]),
            None => dft_entry(n, j, nt),
        }));
    }
    if count >= 3 {
        out.push(CMatrix::from_fn(nt, mt, |n, j| {
            if j < b.ncols() {
                unit_phase(b[(n, j)])
            } else {
                dft_entry(n, j, nt)
            }
        }));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
    for _ in 3..count {
        let mix = CMatrix::<T>::from_fn(b.ncols(), mt, |_, _| {
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            Complex::new(T::lit(re), T::lit(im))
        });
        out.push((b * mix).map(unit_phase));
    }
    out
}

fn default_tol<T: Scalar>(b: &CMatrix<T>, opts: &DecomposeOptions<T>) -> T {
    opts.tol.unwrap_or_else(|| T::lit(1e-6) * fro_sq(b))
}

/// Fully connected twin-resolution decomposition.
pub fn decompose_fully<T: Scalar>(
    b: &DigitalPrecoder<T>,
    network: &TrpsNetwork<T>,
    npa: &NpaModel<T>,
    opts: &DecomposeOptions<T>,
) -> Result<HybridDesign<T>> {
    if network.arch != Connection::FullyConnected {
        return Err(Error::Domain("decompose_fully needs a fully connected network".into()));
    }
    if b.nt() != network.nt {
        return Err(Error::Dimension(format!(
            "precoder has {} rows, network has {} antennas",
            b.nt(),
            network.nt
        )));
    }
    let bm = b.matrix();
    let (nt, mt) = (network.nt, network.mt);
    let tol = default_tol(bm, opts);
    let mut warnings = Vec::new();
    let mut runs = Vec::new();
    let mut net = network.clone();
    net.s_high.clear();
    net.s_low.clear();
    let mut frozen = vec![false; nt * mt];
    let mut assignments = Vec::with_capacity(nt * mt);

    let mut best: Option<(CMatrix<T>, CMatrix<T>, Vec<T>)> = None;
    for mut v0 in initial_analogs(bm, mt, opts.starts) {
        let (w0, trace) = mm_run_fully(bm, &mut v0, &frozen, tol, opts, &mut warnings);
        let r = *trace.last().expect("trace holds the starting residual");
        if best.as_ref().is_none_or(|(_, _, t)| r < *t.last().unwrap()) {
            best = Some((v0, w0, trace));
        }
        if r < tol {
            break;
        }
    }
    let (mut v, mut w, trace) = best.expect("at least one starting point");
    runs.push(trace);

    let high_budgets: Vec<usize> = net.low_budgets.iter().map(|&l| nt - l).collect();
    let low_budgets = net.low_budgets.clone();
    for (resolution, budgets) in [(Resolution::Low, low_budgets), (Resolution::High, high_budgets)] {
        for (k, &count) in budgets.iter().enumerate() {
            for _ in 0..count {
                let candidates: Vec<usize> = (0..nt).filter(|&n| !frozen[n + k * nt]).collect();
                let set = net.phase_set(resolution);
                if candidates.len() == nt {
                    let angles: Vec<T> = (0..nt).map(|n| arg(v[(n, k)])).collect();
                    let rot = cis(grid_rotation(&angles, &net.q_high, &net.q_low, Some(net.low_budgets[k])));
                    for n in 0..nt {
                        v[(n, k)] *= rot;
                    }
                }
                let (pos, m) = quantize_next(candidates.iter().map(|&n| arg(v[(n, k)])), set)
                    .ok_or_else(|| Error::Domain(format!("RF chain {k} has no free entries")))?;
                let n = candidates[pos];
                v[(n, k)] = cis(set.values()[m]);
                let flat = n + k * nt;
                frozen[flat] = true;
                match resolution {
                    Resolution::Low => net.s_low.push(flat),
                    Resolution::High => net.s_high.push(flat),
                }
                assignments.push(PhaseAssignment {
                    row: n,
                    col: k,
                    resolution,
                    index: m,
                });
                let (w_new, trace) =
                    mm_run_fully(bm, &mut v, &frozen, tol, opts, &mut warnings);
                w = w_new;
                runs.push(trace);
            }
        }
    }
    finish(bm, v, w, assignments, net, runs, warnings, npa, opts)
}

/// `sum_j Re(p_j^H D_j p_j)` over the blocks of `C = B B^H`.
fn partial_objective<T: Scalar>(c: &CMatrix<T>, r: &[Complex<T>], ng: usize) -> T {
    let mut total = T::zero();
    for (j, block) in r.chunks(ng).enumerate() {
        let off = j * ng;
        for (a, pa) in block.iter().enumerate() {
            for (bb, pb) in block.iter().enumerate() {
                total += (pa.conj() * c[(off + a, off + bb)] * pb).re;
            }
        }
    }
    total
}

/// One block phase update: `[p_j]_k <- exp(j arg [D_j p_j]_k)` on unfrozen
/// entries, all blocks at once.
pub fn partial_phase_update<T: Scalar>(
    c: &CMatrix<T>,
    r: &[Complex<T>],
    frozen: &[bool],
    ng: usize,
) -> Vec<Complex<T>> {
    let mut out = r.to_vec();
    for (j, block) in r.chunks(ng).enumerate() {
        let off = j * ng;
        for a in 0..ng {
            if frozen[off + a] {
                continue;
            }
            let mut acc = Complex::default();
            for (bb, pb) in block.iter().enumerate() {
                acc += c[(off + a, off + bb)] * pb;
            }
            if acc != Complex::default() {
                out[off + a] = cis(arg(acc));
            }
        }
    }
    out
}

fn block_analog<T: Scalar>(r: &[Complex<T>], mt: usize) -> CMatrix<T> {
    let ng = r.len() / mt;
    CMatrix::from_fn(r.len(), mt, |i, j| if i / ng == j { r[i] } else { Complex::default() })
}

fn partial_run<T: Scalar>(
    bm: &CMatrix<T>,
    c: &CMatrix<T>,
    r: &mut Vec<Complex<T>>,
    frozen: &[bool],
    mt: usize,
    rounds: usize,
    tol: Option<T>,
) -> Vec<T> {
    let ng = r.len() / mt;
    let b2 = fro_sq(bm);
    let ngt = T::lit(ng as f64);
    let residual = |obj: T| (b2 - obj / ngt).max(T::zero());
    let mut obj = partial_objective(c, r, ng);
    let mut trace = vec![residual(obj)];
    for _ in 0..rounds {
        let next = partial_phase_update(c, r, frozen, ng);
        let obj_new = partial_objective(c, &next, ng);
        *r = next;
        let gain = obj_new - obj;
        obj = obj_new;
        trace.push(residual(obj));
        if let Some(t) = tol {
            if trace.last().copied().unwrap() < t || gain <= t * T::lit(1e-3) {
                break;
            }
        }
    }
    trace
}

/// Partially connected twin-resolution decomposition.
pub fn decompose_partially<T: Scalar>(
    b: &DigitalPrecoder<T>,
    network: &TrpsNetwork<T>,
    npa: &NpaModel<T>,
    opts: &DecomposeOptions<T>,
) -> Result<HybridDesign<T>> {
    if network.arch != Connection::PartiallyConnected {
        return Err(Error::Domain("decompose_partially needs a partially connected network".into()));
    }
    let (nt, mt) = (network.nt, network.mt);
    if nt % mt != 0 {
        return Err(Error::Domain(format!("N_t = {nt} is not divisible by M_t = {mt}")));
    }
    if b.nt() != nt {
        return Err(Error::Dimension(format!(
            "precoder has {} rows, network has {nt} antennas",
            b.nt()
        )));
    }
    let bm = b.matrix();
    let ng = nt / mt;
    let c = bm * bm.adjoint();
    let tol = default_tol(bm, opts);
    let mut net = network.clone();
    net.s_high.clear();
    net.s_low.clear();
    let mut runs = Vec::new();
    let mut frozen = vec![false; nt];
    let mut assignments = Vec::with_capacity(nt);

    // align each block with its strongest antenna
    let mut r: Vec<Complex<T>> = vec![Complex::from(T::one()); nt];
    for j in 0..mt {
        let off = j * ng;
        let strongest = (0..ng)
            .max_by(|&a, &bb| {
                c[(off + a, off + a)]
                    .re
                    .partial_cmp(&c[(off + bb, off + bb)].re)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(0);
        for a in 0..ng {
            let z = c[(off + a, off + strongest)];
            if z != Complex::default() {
                r[off + a] = cis(arg(z));
            }
        }
    }
    runs.push(partial_run(bm, &c, &mut r, &frozen, mt, opts.max_iters, Some(tol)));

    for (resolution, count) in [(Resolution::Low, net.n_low), (Resolution::High, net.n_high)] {
        for _ in 0..count {
            let set = net.phase_set(resolution);
            if frozen.iter().all(|&f| !f) {
                let blocks: Vec<Vec<T>> = r.chunks(ng).map(|p| p.iter().map(|&z| arg(z)).collect()).collect();
                let thetas = joint_grid_rotation(&blocks, &net.q_high, &net.q_low, net.n_low);
                for (p, theta) in r.chunks_mut(ng).zip(thetas) {
                    let rot = cis(theta);
                    p.iter_mut().for_each(|z| *z *= rot);
                }
            } else {
                for j in 0..mt {
                    let block = j * ng..(j + 1) * ng;
                    if frozen[block.clone()].iter().any(|&f| f) {
                        continue;
                    }
                    let angles: Vec<T> = r[block.clone()].iter().map(|&z| arg(z)).collect();
                    if is_exact(grid_cost(&angles, T::zero(), &net.q_high, &net.q_low).0, ng) {
                        continue;
                    }
                    let rot = cis(grid_rotation(&angles, &net.q_high, &net.q_low, None));
                    for z in &mut r[block] {
                        *z *= rot;
                    }
                }
            }
            let candidates: Vec<usize> = (0..nt).filter(|&i| !frozen[i]).collect();
            let (pos, m) = quantize_next(candidates.iter().map(|&i| arg(r[i])), set)
                .ok_or_else(|| Error::Domain("no free analog entries left".into()))?;
            let i = candidates[pos];
            r[i] = cis(set.values()[m]);
            frozen[i] = true;
            match resolution {
                Resolution::Low => net.s_low.push(i),
                Resolution::High => net.s_high.push(i),
            }
            assignments.push(PhaseAssignment {
                row: i,
                col: i / ng,
                resolution,
                index: m,
            });
            runs.push(partial_run(bm, &c, &mut r, &frozen, mt, opts.mm_rounds, None));
        }
    }
    let v = block_analog(&r, mt);
    let mut warnings = Vec::new();
    let w = least_squares_digital(&v, bm, &mut warnings);
    finish(bm, v, w, assignments, net, runs, warnings, npa, opts)
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Scalar>(
    bm: &CMatrix<T>,
    v: CMatrix<T>,
    w: CMatrix<T>,
    assignments: Vec<PhaseAssignment>,
    network: TrpsNetwork<T>,
    residual_runs: Vec<Vec<T>>,
    warnings: Vec<String>,
    npa: &NpaModel<T>,
    opts: &DecomposeOptions<T>,
) -> Result<HybridDesign<T>> {
    let target = npa.pa_power(&DigitalPrecoder::new(bm.clone())?)?;
    let w_bar = normalize_digital(&v, &w, npa, target, opts.normalize_rel_tol * target)?;
    let residual = fro_sq(&(bm - &v * &w_bar)).sqrt();
    Ok(HybridDesign {
        precoder: HybridPrecoder {
            v,
            w: w_bar,
            assignments,
        },
        network,
        residual,
        residual_runs,
        warnings,
    })
}

/// Scales `W` by `mu > 0` so that `P_PA(V mu W) = target` to within `tol`.
pub fn normalize_digital<T: Scalar>(
    v: &CMatrix<T>,
    w: &CMatrix<T>,
    npa: &NpaModel<T>,
    target: T,
    tol: T,
) -> Result<CMatrix<T>> {
    let b = DigitalPrecoder::new(v * w)?;
    let powers = b.antenna_powers();
    if powers.iter().all(|&p| p == T::zero()) {
        return Err(Error::Domain("V W is zero; nothing to normalize".into()));
    }
    if !(target > T::zero()) {
        return Err(Error::Domain(format!("target PA power must be positive, got {target}")));
    }
    let mu = bisect_scale(T::one(), target, tol, |mu: T| {
        let m2 = mu * mu;
        let scaled: Vec<T> = powers.iter().map(|&p| p * m2).collect();
        npa.pa_power_from_antenna_powers(&scaled)
    })?;
    Ok(w.map(|z| z * mu))
}

/// Decomposes `b` for the given architecture; dispatches on the connection.
pub fn decompose<T: Scalar>(
    b: &DigitalPrecoder<T>,
    network: &TrpsNetwork<T>,
    npa: &NpaModel<T>,
    opts: &DecomposeOptions<T>,
) -> Result<HybridDesign<T>> {
    match network.arch {
        Connection::FullyConnected => decompose_fully(b, network, npa, opts),
        Connection::PartiallyConnected => decompose_partially(b, network, npa, opts),
    }
}
