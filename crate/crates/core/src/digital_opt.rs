//! Energy-efficiency maximization over the fully digital precoder:
//! Dinkelbach's parametric iteration with an inner projected gradient
//! ascent, plus the analytic (Wirtinger) gradients it needs.
//!
//! Gradients are taken with respect to `B^*`. For a real objective `F`,
//! `F(B + D) ≈ F(B) + 2 Re tr(grad^H D)`.

use nalgebra::Complex;

use crate::bisect::{bisect_bracketed, bisect_scale};
use crate::error::{Error, Result};
use crate::npa::NpaModel;
use crate::power::{transmitter_power, ArchitectureSpec, ComponentPowers};
use crate::precoder::DigitalPrecoder;
use crate::rate::{LinkContext, RateTerms};
use crate::scalar::{fro_sq, re_inner, CMatrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig<T> {
    /// Outer stopping threshold on `F(B_i, eta_i)`.
    pub epsilon: T,
    /// Projected ascent steps per Dinkelbach iteration.
    pub inner_iters: usize,
    pub max_outer_iters: usize,
    /// First trial step, relative to `||B||_F / ||grad||_F`.
    pub initial_step: T,
    /// Lower bound on `zeta / sigma`; must exceed 2.
    pub rss_rsc_ratio_floor: T,
    pub max_backtracks: usize,
    /// Absolute tolerance (W) of the projection bisection.
    pub bisection_tol: T,
    /// PA power budget `P` in watts.
    pub power_budget: T,
}

impl<T: Scalar> SolverConfig<T> {
    /// Defaults scaled to the link: `epsilon = 1e-3 * B_w * K`,
    /// bisection tolerance `1e-9 * P`.
    pub fn for_link(ctx: &LinkContext<T>, power_budget: T) -> Self {
        Self {
            epsilon: T::lit(1e-3) * ctx.bandwidth * T::lit(ctx.k() as f64),
            inner_iters: 20,
            max_outer_iters: 10,
            initial_step: T::one(),
            rss_rsc_ratio_floor: T::lit(2.5),
            max_backtracks: 50,
            bisection_tol: T::lit(1e-9) * power_budget,
            power_budget,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) {
            return Err(Error::Config("epsilon must be positive".into()));
        }
        if self.inner_iters == 0 || self.max_outer_iters == 0 {
            return Err(Error::Config("iteration counts must be at least 1".into()));
        }
        if !(self.initial_step > T::zero()) {
            return Err(Error::Config("initial step must be positive".into()));
        }
        if !(self.rss_rsc_ratio_floor > T::lit(2.0)) {
            return Err(Error::Config("zeta/sigma ratio floor must exceed 2".into()));
        }
        if !(self.bisection_tol > T::zero()) {
            return Err(Error::Config("bisection tolerance must be positive".into()));
        }
        if !(self.power_budget > T::zero()) {
            return Err(Error::Config("power budget must be positive".into()));
        }
        Ok(())
    }
}

/// The EE problem for one transmitter architecture.
#[derive(Debug, Clone, Copy)]
pub struct EeProblem<'a, T: Scalar> {
    pub link: &'a LinkContext<T>,
    pub spec: &'a ArchitectureSpec,
    pub comps: &'a ComponentPowers<T>,
}

/// Objective, rate and power evaluated at one precoder.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation<T> {
    pub sum_rate: T,
    pub pa_power: T,
    pub total_power: T,
    pub ee: T,
}

impl<'a, T: Scalar> EeProblem<'a, T> {
    pub fn new(
        link: &'a LinkContext<T>,
        spec: &'a ArchitectureSpec,
        comps: &'a ComponentPowers<T>,
    ) -> Result<Self> {
        spec.validate_users(link.k())?;
        if spec.nt != link.nt() {
            return Err(Error::Dimension(format!(
                "architecture has N_t = {}, link has N_t = {}",
                spec.nt,
                link.nt()
            )));
        }
        Ok(Self { link, spec, comps })
    }

    pub fn static_power(&self) -> Result<T> {
        transmitter_power(self.spec, self.comps)
    }

    pub fn evaluate(&self, b: &DigitalPrecoder<T>) -> Result<Evaluation<T>> {
        self.link.check(b)?;
        let terms = RateTerms::new(self.link, b);
        let sum_rate = terms.sum_rate(self.link.n0);
        let pa_power = self.link.npa.pa_power_from_antenna_powers(&terms.powers)?;
        let total_power = pa_power + self.static_power()?;
        Ok(Evaluation {
            sum_rate,
            pa_power,
            total_power,
            ee: self.link.bandwidth * sum_rate / total_power,
        })
    }

    /// `F(B, eta) = B_w sum_k Rbar_k - eta P_total`.
    pub fn objective_f(&self, b: &DigitalPrecoder<T>, eta: T) -> Result<T> {
        let e = self.evaluate(b)?;
        Ok(self.link.bandwidth * e.sum_rate - eta * e.total_power)
    }

    /// `d F / d B^*`.
    pub fn gradient(&self, b: &DigitalPrecoder<T>, eta: T) -> Result<CMatrix<T>> {
        let gr = grad_rate(self.link, b)?;
        let gp = grad_power(&self.link.npa, b)?;
        Ok(gr * Complex::from(self.link.bandwidth) - gp * Complex::from(eta))
    }
}

/// `sum_k d Rbar_k / d B^*` (bits/s/Hz per unit of `B`).
pub fn grad_rate<T: Scalar>(ctx: &LinkContext<T>, b: &DigitalPrecoder<T>) -> Result<CMatrix<T>> {
    ctx.check(b)?;
    let terms = RateTerms::new(ctx, b);
    let bm = b.matrix();
    let (nt, kk) = (bm.nrows(), bm.ncols());
    let beta3 = ctx.npa.beta3();
    let log2e = T::lit(std::f64::consts::LOG2_E);
    let four = T::lit(4.0);
    let u = &terms.cov.u;
    // |U|^2 and U ∘ U, both entrywise
    let u_abs2 = u.map(|z| Complex::from(z.norm_sqr()));
    let u_sq = u.map(|z| z * z);
    let dist_scale = T::lit(2.0) * beta3.norm_sqr();

    let mut grad = CMatrix::zeros(nt, kk);
    for k in 0..kk {
        let gamma = ctx.users[k].avg_power;
        let f = terms.f[k];
        let g = terms.effective_noise(k, ctx.n0);
        if gamma == T::zero() {
            continue;
        }
        let cf = log2e / (g + f);
        let cg = log2e * f / (g * (g + f));
        let v = ctx.steering.column(k);
        // w = Gbar^H v_k, so that T_k b_j = w a_{k,j}
        let w: Vec<Complex<T>> = (0..nt).map(|n| terms.gbar[n].conj() * v[n]).collect();
        // q^{(k,l)}_i = 4 Re(beta3 conj(a_kl) conj(v_i) b_il): the diagonal of Q_{k,l}
        let q = |l: usize, i: usize| -> T {
            four * (beta3 * terms.a[(k, l)].conj() * v[i].conj() * bm[(i, l)]).re
        };
        let q_own: Vec<T> = (0..nt).map(|i| q(k, i)).collect();
        let q_other: Vec<T> = (0..nt)
            .map(|i| (0..kk).filter(|&l| l != k).fold(T::zero(), |acc, l| acc + q(l, i)))
            .collect();
        let dist = if dist_scale > T::zero() {
            let xc = CMatrix::from_fn(nt, kk, |n, j| v[n].conj() * bm[(n, j)]);
            let xv = CMatrix::from_fn(nt, kk, |n, j| v[n] * bm[(n, j)]);
            let m1 = &u_abs2 * xc;
            let m2 = &u_sq * xv;
            Some(CMatrix::from_fn(nt, kk, |i, j| {
                (v[i] * m1[(i, j)] * T::lit(2.0) + v[i].conj() * m2[(i, j)]) * (dist_scale * gamma)
            }))
        } else {
            None
        };
        for j in 0..kk {
            for i in 0..nt {
                let bij = bm[(i, j)];
                let mut df = bij * q_own[i];
                let mut dg = bij * q_other[i];
                if j == k {
                    df += w[i] * terms.a[(k, k)];
                } else {
                    dg += w[i] * terms.a[(k, j)];
                }
                df *= gamma;
                dg *= gamma;
                if let Some(d) = &dist {
                    dg += d[(i, j)];
                }
                grad[(i, j)] += df * cf - dg * cg;
            }
        }
    }
    Ok(grad)
}

/// `d P_PA / d B^*`. Rows with zero input power get a zero gradient.
pub fn grad_power<T: Scalar>(npa: &NpaModel<T>, b: &DigitalPrecoder<T>) -> Result<CMatrix<T>> {
    let powers = b.antenna_powers();
    let c = npa.supply_factor() / T::lit(2.0);
    let mut scale = Vec::with_capacity(powers.len());
    for (n, &p) in powers.iter().enumerate() {
        if p == T::zero() {
            scale.push(T::zero());
            continue;
        }
        let prad = npa.radiated_power_of(p);
        if !(prad > T::zero()) {
            return Err(Error::NegativeRadiatedPower {
                antenna: n,
                value: prad.as_f64(),
            });
        }
        scale.push(c / prad.sqrt() * npa.radiated_power_slope(p));
    }
    let bm = b.matrix();
    Ok(CMatrix::from_fn(bm.nrows(), bm.ncols(), |n, k| bm[(n, k)] * scale[n]))
}

/// Projects onto `{B : P_PA(B) <= P}` by scaling: returns `B_hat` when it is
/// feasible, otherwise `alpha B_hat` with `P_PA(alpha B_hat) = P` to within
/// `tol`.
pub fn project_power<T: Scalar>(
    b_hat: &DigitalPrecoder<T>,
    npa: &NpaModel<T>,
    budget: T,
    tol: T,
) -> Result<DigitalPrecoder<T>> {
    let powers = b_hat.antenna_powers();
    let pa_at = |alpha: T| {
        let a2 = alpha * alpha;
        let scaled: Vec<T> = powers.iter().map(|&p| p * a2).collect();
        npa.pa_power_from_antenna_powers(&scaled)
    };
    if pa_at(T::one())? <= budget {
        return Ok(b_hat.clone());
    }
    let alpha = bisect_bracketed(T::zero(), T::one(), budget, tol, pa_at)?;
    Ok(b_hat.scaled(alpha))
}

/// Scales `b` so that `P_PA = target`.
pub fn scale_to_pa_power<T: Scalar>(
    b: &DigitalPrecoder<T>,
    npa: &NpaModel<T>,
    target: T,
    tol: T,
) -> Result<DigitalPrecoder<T>> {
    let powers = b.antenna_powers();
    if powers.iter().all(|&p| p == T::zero()) {
        return Err(Error::Domain("cannot rescale an all-zero precoder".into()));
    }
    let alpha = bisect_scale(T::one(), target, tol, |alpha: T| {
        let a2 = alpha * alpha;
        let scaled: Vec<T> = powers.iter().map(|&p| p * a2).collect();
        npa.pa_power_from_antenna_powers(&scaled)
    })?;
    Ok(b.scaled(alpha))
}

/// Matched-filter start: `b_k ∝ v_k`, scaled so that `P_PA = P`.
pub fn initial_precoder<T: Scalar>(
    ctx: &LinkContext<T>,
    config: &SolverConfig<T>,
) -> Result<DigitalPrecoder<T>> {
    let b = DigitalPrecoder::new(ctx.steering.clone())?;
    scale_to_pa_power(&b, &ctx.npa, config.power_budget, config.bisection_tol)
}

/// One accepted (or rejected) ascent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerRecord<T> {
    pub outer: usize,
    pub inner: usize,
    pub f: T,
    pub ee: T,
    pub eta: T,
    pub pa_power: T,
    /// Accepted step `mu = 1 / zeta`; zero when backtracking failed.
    pub step: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord<T> {
    pub outer: usize,
    pub eta: T,
    /// `F(B_i, eta_i)` after the inner ascent.
    pub f: T,
    pub ee: T,
    pub pa_power: T,
    pub sum_rate: T,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DinkelbachTrace<T> {
    pub outer: Vec<OuterRecord<T>>,
    pub inner: Vec<InnerRecord<T>>,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl<T: Scalar> DinkelbachTrace<T> {
    pub fn outer_iterations(&self) -> usize {
        self.outer.len()
    }

    pub fn ee_sequence(&self) -> Vec<T> {
        self.outer.iter().map(|r| r.ee).collect()
    }
}

/// Runs `config.inner_iters` projected ascent steps on `F(., eta)`.
///
/// Each step tries `mu`, halving it until the sign-corrected smoothness
/// bound `F(B+) - F(B) >= <grad_R, D> - zeta/2 ||D||^2` holds with
/// `zeta = 1/mu`, `grad_R = 2 grad` the real gradient and `D = B+ - B`, and
/// `F` does not decrease. `sigma = zeta / ratio_floor` is recorded only.
pub fn inner_ascent<T: Scalar>(
    problem: &EeProblem<'_, T>,
    b0: &DigitalPrecoder<T>,
    eta: T,
    config: &SolverConfig<T>,
    outer: usize,
    trace: &mut DinkelbachTrace<T>,
) -> Result<DigitalPrecoder<T>> {
    let npa = &problem.link.npa;
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let mut b = b0.clone();
    let mut f_cur = problem.objective_f(&b, eta)?;
    let mut mu: Option<T> = None;
    let mut prev: Option<(CMatrix<T>, CMatrix<T>)> = None;
    for j in 1..=config.inner_iters {
        let grad = problem.gradient(&b, eta)?;
        let gnorm2 = fro_sq(&grad);
        if gnorm2 == T::zero() {
            break;
        }
        // Barzilai-Borwein trial step from the last accepted move, falling
        // back to twice the last accepted step.
        let bb = prev.as_ref().and_then(|(pb, pg)| {
            let s = b.matrix() - pb;
            let curv = -re_inner(&s, &(&grad - pg));
            (curv > T::zero()).then(|| fro_sq(&s) / curv)
        });
        let mut step = match (bb, mu) {
            (Some(t), Some(m)) => t.max(m),
            (None, Some(m)) => m * two,
            (_, None) => {
                let bnorm = b.fro_norm_sq().sqrt();
                let scale = if bnorm > T::zero() { bnorm } else { T::one() };
                config.initial_step * scale / gnorm2.sqrt()
            }
        };
        let mut accepted = None;
        for _ in 0..=config.max_backtracks {
            let trial = DigitalPrecoder::new(b.matrix() + &grad * Complex::from(step))?;
            let candidate = project_power(&trial, npa, config.power_budget, config.bisection_tol)?;
            let delta = candidate.matrix() - b.matrix();
            let f_new = problem.objective_f(&candidate, eta)?;
            let zeta = T::one() / step;
            let bound = two * re_inner(&grad, &delta) - half * zeta * fro_sq(&delta);
            if f_new - f_cur >= bound && f_new >= f_cur {
                accepted = Some((candidate, f_new));
                break;
            }
            step *= half;
        }
        let e = match accepted {
            Some((candidate, f_new)) => {
                prev = Some((b.matrix().clone(), grad.clone()));
                b = candidate;
                f_cur = f_new;
                mu = Some(step);
                problem.evaluate(&b)?
            }
            None => {
                trace.warnings.push(format!(
                    "outer {outer} inner {j}: backtracking exhausted, zero step taken"
                ));
                step = T::zero();
                problem.evaluate(&b)?
            }
        };
        trace.inner.push(InnerRecord {
            outer,
            inner: j,
            f: f_cur,
            ee: e.ee,
            eta,
            pa_power: e.pa_power,
            step,
        });
        if step == T::zero() {
            break;
        }
    }
    Ok(b)
}

/// Dinkelbach iteration: ascend `F(., eta_i)`, then set
/// `eta_{i+1} = B_w R(B_i) / P_total(B_i)`, until `F(B_i, eta_i) <= epsilon`.
pub fn dinkelbach_solve<T: Scalar>(
    problem: &EeProblem<'_, T>,
    b_init: &DigitalPrecoder<T>,
    config: &SolverConfig<T>,
) -> Result<(DigitalPrecoder<T>, DinkelbachTrace<T>)> {
    config.validate()?;
    problem.link.check(b_init)?;
    let mut trace = DinkelbachTrace::default();
    let mut b = b_init.clone();
    let mut eta = T::zero();
    let mut best: Option<(T, DigitalPrecoder<T>)> = None;
    for i in 0..config.max_outer_iters {
        b = inner_ascent(problem, &b, eta, config, i, &mut trace)?;
        let e = problem.evaluate(&b)?;
        let f = problem.link.bandwidth * e.sum_rate - eta * e.total_power;
        trace.outer.push(OuterRecord {
            outer: i,
            eta,
            f,
            ee: e.ee,
            pa_power: e.pa_power,
            sum_rate: e.sum_rate,
        });
        if best.as_ref().is_none_or(|(ee, _)| e.ee > *ee) {
            best = Some((e.ee, b.clone()));
        }
        eta = e.ee;
        if f <= config.epsilon {
            trace.converged = true;
            break;
        }
    }
    if !trace.converged {
        trace.warnings.push(format!(
            "Dinkelbach did not reach epsilon within {} outer iterations",
            config.max_outer_iters
        ));
    }
    let b = best.map(|(_, b)| b).unwrap_or(b);
    Ok((b, trace))
}
