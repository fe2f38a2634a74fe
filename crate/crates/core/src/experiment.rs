//! Scenario-driven sweeps: load a scenario file, run the digital solver and
//! the hybrid decomposition at every sweep point, and write the results as
//! CSV plus a matplotlib script that plots them.
//!
//! Scenario files are flat TOML (`key = value`, one per line). Every key is
//! optional; see [`Scenario`] for names, units and defaults.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use nalgebra::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{channel_power, draw_users, noise_power, ArrayGeometry};
use crate::digital_opt::{dinkelbach_solve, initial_precoder, DinkelbachTrace, EeProblem, SolverConfig};
use crate::error::{Error, Result};
use crate::hybrid::{decompose, DecomposeOptions, TrpsNetwork};
use crate::npa::NpaModel;
use crate::precoder::DigitalPrecoder;
use crate::power::{
    total_power, transmitter_power, ArchitectureKind, ArchitectureSpec, ComponentPowers,
    ShifterPowerTable,
};
use crate::rate::{ergodic_rate_mc, sum_rate_bound, LinkContext};
use crate::scalar::{db_to_linear, dbm_to_watts, dbw_to_watts};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepKind {
    /// PA power budget in dBW.
    PowerBudget,
    /// Fraction of high-resolution shifters.
    HiRatio,
    /// Number of RF chains.
    RfChains,
}

impl SweepKind {
    pub fn name(self) -> &'static str {
        match self {
            SweepKind::PowerBudget => "power-budget",
            SweepKind::HiRatio => "hi-ratio",
            SweepKind::RfChains => "rf-chains",
        }
    }
}

/// Experiment description. Units: Hz, m, K, dB/dBi/dBm/dBW as named, mW for
/// component powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub nx: usize,
    pub ny: usize,
    pub k: usize,
    pub rician_factor_db: f64,
    pub fc_hz: f64,
    pub d0_m: f64,
    pub bw_hz: f64,
    pub noise_temp_k: f64,
    pub g_sat_dbi: f64,
    pub g_ut_dbi: f64,

    pub beta1_mag: f64,
    pub beta1_phase: f64,
    pub beta3_mag: f64,
    pub beta3_phase: f64,
    pub p_max_dbm: f64,
    pub xi_max: f64,

    /// Extra shifter powers beyond the built-in 2-bit/4-bit table, as
    /// `[bits, mW]` pairs.
    pub shifter_power_mw: Vec<(u32, f64)>,
    pub p_rfc_mw: f64,
    pub p_lo_mw: f64,
    pub p_bb_mw: f64,
    pub p_sw_mw: f64,
    pub r_high: u32,
    pub r_low: u32,

    pub architectures: Vec<String>,
    pub mt: usize,
    pub hi_ratio: f64,
    pub power_budget_dbw: f64,

    pub inner_iters: usize,
    pub max_outer_iters: usize,
    /// Outer tolerance relative to `B_w K`.
    pub epsilon_rel: f64,
    pub mm_max_iters: usize,
    pub mm_rounds: usize,

    pub sweep: SweepKind,
    pub sweep_values: Vec<f64>,
    /// Independent channel draws per sweep point.
    pub trials: usize,
    pub seed: u64,
    /// Monte Carlo samples per row; 0 disables the estimate.
    pub mc_samples: usize,
    /// Also run the design that assumes a linear amplifier.
    pub linear_baseline: bool,
    /// Write per-iteration solver and MM traces to `<name>_trace.csv`.
    pub write_trace: bool,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            nx: 8,
            ny: 8,
            k: 4,
            rician_factor_db: 18.0,
            fc_hz: 11.45e9,
            d0_m: 1e6,
            bw_hz: 0.25e9,
            noise_temp_k: 300.0,
            g_sat_dbi: 0.0,
            g_ut_dbi: 0.0,
            beta1_mag: 2.96,
            beta1_phase: 0.0,
            beta3_mag: 0.1418,
            beta3_phase: -2.816,
            p_max_dbm: 6.0,
            xi_max: 0.3,
            shifter_power_mw: Vec::new(),
            p_rfc_mw: 338.0,
            p_lo_mw: 5.0,
            p_bb_mw: 200.0,
            p_sw_mw: 1.0,
            r_high: 4,
            r_low: 2,
            architectures: vec!["fc-trps".into()],
            mt: 4,
            hi_ratio: 0.5,
            power_budget_dbw: 22.0,
            inner_iters: 20,
            max_outer_iters: 10,
            epsilon_rel: 1e-3,
            mm_max_iters: 200,
            mm_rounds: 50,
            sweep: SweepKind::PowerBudget,
            sweep_values: vec![22.0],
            trials: 1,
            seed: 1,
            mc_samples: 0,
            linear_baseline: false,
            write_trace: false,
        }
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Switches to the full-size array: 12 x 12 antennas, 9 users, 9 RF chains.
    pub fn paper_scale(mut self) -> Self {
        self.nx = 12;
        self.ny = 12;
        self.k = 9;
        self.mt = 9;
        if self.sweep == SweepKind::RfChains {
            self.sweep_values.retain(|&m| m >= 9.0);
        }
        self
    }

    pub fn architectures(&self) -> Result<Vec<ArchitectureKind>> {
        self.architectures.iter().map(|s| s.parse()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("fc_hz", self.fc_hz),
            ("d0_m", self.d0_m),
            ("bw_hz", self.bw_hz),
            ("noise_temp_k", self.noise_temp_k),
            ("xi_max", self.xi_max),
            ("epsilon_rel", self.epsilon_rel),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.xi_max > 1.0 {
            return Err(Error::Config("xi_max must not exceed 1".into()));
        }
        if self.nx == 0 || self.ny == 0 || self.k == 0 || self.mt == 0 || self.trials == 0 {
            return Err(Error::Config("nx, ny, k, mt and trials must be at least 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values is empty".into()));
        }
        if self.architectures.is_empty() {
            return Err(Error::Config("no architectures listed".into()));
        }
        self.architectures()?;
        for &v in &self.sweep_values {
            let ok = match self.sweep {
                SweepKind::PowerBudget => v.is_finite(),
                SweepKind::HiRatio => (0.0..=1.0).contains(&v),
                SweepKind::RfChains => v >= 1.0 && v.fract() == 0.0,
            };
            if !ok {
                return Err(Error::Config(format!(
                    "sweep value {v} is invalid for a {} sweep",
                    self.sweep.name()
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.hi_ratio) {
            return Err(Error::Config("hi_ratio must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn npa(&self) -> Result<NpaModel<f64>> {
        NpaModel::new(
            Complex::from_polar(self.beta1_mag, self.beta1_phase),
            Complex::from_polar(self.beta3_mag, self.beta3_phase),
            dbm_to_watts(self.p_max_dbm),
            self.xi_max,
        )
    }

    pub fn component_powers(&self) -> Result<ComponentPowers<f64>> {
        let mut table = ShifterPowerTable::default();
        for &(bits, mw) in &self.shifter_power_mw {
            table.insert(bits, mw * 1e-3);
        }
        ComponentPowers::with_shifters(
            &table,
            self.r_high,
            self.r_low,
            self.p_rfc_mw * 1e-3,
            self.p_lo_mw * 1e-3,
            self.p_bb_mw * 1e-3,
            self.p_sw_mw * 1e-3,
        )
    }

    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::new(self.nx, self.ny)
    }

    /// Per-user average channel power `gamma`.
    pub fn avg_power(&self) -> f64 {
        channel_power(
            db_to_linear(self.g_sat_dbi),
            db_to_linear(self.g_ut_dbi),
            self.nx * self.ny,
            self.fc_hz,
            self.d0_m,
        )
    }

    /// Link for channel draw `trial`; the draw does not depend on the sweep
    /// point so every curve sees the same users.
    pub fn link(&self, trial: usize) -> Result<LinkContext<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, &[0, trial as u64]));
        let users = draw_users(
            self.k,
            self.avg_power(),
            db_to_linear(self.rician_factor_db),
            &mut rng,
        );
        LinkContext::new(
            self.geometry()?,
            users,
            self.npa()?,
            noise_power(self.bw_hz, self.noise_temp_k),
            self.bw_hz,
        )
    }
}

/// SplitMix64-style mixing of a master seed with a path of indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut z = master;
    for &p in path {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(p.wrapping_mul(0xD1B5_4A32_D192_ED69));
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Optimized with the true amplifier model.
    Nonlinear,
    /// Optimized assuming a linear amplifier, evaluated with the true one.
    Linear,
}

/// One CSV row. Powers in W, EE in bit/J, rates in bit/s/Hz, time in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub architecture: String,
    pub design: Design,
    pub sweep: SweepKind,
    pub sweep_value: f64,
    pub trial: usize,
    pub ee: f64,
    pub sum_rate_bound: f64,
    pub mc_sum_rate: Option<f64>,
    pub mc_std_err: Option<f64>,
    pub p_pa: f64,
    pub p_t: f64,
    pub residual: Option<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    pub wall_time_s: f64,
    pub status: String,
}

/// Column order of the CSV output.
pub const CSV_COLUMNS: [&str; 16] = [
    "architecture",
    "design",
    "sweep",
    "sweep_value",
    "trial",
    "ee",
    "sum_rate_bound",
    "mc_sum_rate",
    "mc_std_err",
    "p_pa",
    "p_t",
    "residual",
    "outer_iterations",
    "converged",
    "wall_time_s",
    "status",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceStage {
    /// One projected ascent step (`outer`, `inner` index the step).
    Inner,
    /// End of a Dinkelbach iteration.
    Outer,
    /// One MM iteration of the decomposition (`outer` is the run, `inner`
    /// the iteration within it).
    Mm,
}

/// One line of the trace CSV. Fields that do not apply to a stage are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub architecture: String,
    pub design: Design,
    pub sweep_value: f64,
    pub trial: usize,
    pub stage: TraceStage,
    pub outer: usize,
    pub inner: usize,
    pub f: f64,
    pub ee: f64,
    pub eta: f64,
    pub p_pa: f64,
    pub step: f64,
    /// Squared residual `||B - V W||_F^2` for MM rows.
    pub residual_sq: f64,
}

pub const TRACE_COLUMNS: [&str; 13] = [
    "architecture",
    "design",
    "sweep_value",
    "trial",
    "stage",
    "outer",
    "inner",
    "f",
    "ee",
    "eta",
    "p_pa",
    "step",
    "residual_sq",
];

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Forces a Monte Carlo estimate on every row (at least 1e4 samples).
    pub mc_validate: bool,
    /// Zeroes the wall-time column so output bytes depend only on the seed.
    pub zero_timing: bool,
}

#[derive(Debug, Clone, Copy)]
struct Job {
    arch: ArchitectureKind,
    design: Design,
    value_index: usize,
    value: f64,
    trial: usize,
}

/// Runs every (architecture, design, sweep value, trial) combination in
/// parallel. Rows come back ordered by architecture, design, sweep value and
/// trial; a failing point yields a row whose `status` holds the error.
pub fn run_scenario(scenario: &Scenario, opts: RunOptions) -> Result<Vec<ResultRow>> {
    Ok(run_scenario_traced(scenario, opts)?.0)
}

/// [`run_scenario`] that also returns the solver traces of every point, in
/// the same order as the rows.
pub fn run_scenario_traced(
    scenario: &Scenario,
    opts: RunOptions,
) -> Result<(Vec<ResultRow>, Vec<TraceRow>)> {
    scenario.validate()?;
    let archs = scenario.architectures()?;
    let mut designs = vec![Design::Nonlinear];
    if scenario.linear_baseline {
        designs.push(Design::Linear);
    }
    let mut jobs = Vec::new();
    for &arch in &archs {
        for &design in &designs {
            for (value_index, &value) in scenario.sweep_values.iter().enumerate() {
                for trial in 0..scenario.trials {
                    jobs.push(Job {
                        arch,
                        design,
                        value_index,
                        value,
                        trial,
                    });
                }
            }
        }
    }
    let links: Vec<LinkContext<f64>> = (0..scenario.trials)
        .map(|t| scenario.link(t))
        .collect::<Result<_>>()?;
    let comps = scenario.component_powers()?;
    let results: Vec<(ResultRow, Vec<TraceRow>)> = jobs
        .par_iter()
        .map(|job| {
            let start = Instant::now();
            let outcome = run_point(scenario, &links[job.trial], &comps, job, opts);
            let wall = if opts.zero_timing {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            };
            match outcome {
                Ok((mut row, trace)) => {
                    row.wall_time_s = wall;
                    (row, trace)
                }
                Err(e) => (ResultRow {
                    architecture: job.arch.name().into(),
                    design: job.design,
                    sweep: scenario.sweep,
                    sweep_value: job.value,
                    trial: job.trial,
                    ee: f64::NAN,
                    sum_rate_bound: f64::NAN,
                    mc_sum_rate: None,
                    mc_std_err: None,
                    p_pa: f64::NAN,
                    p_t: f64::NAN,
                    residual: None,
                    outer_iterations: 0,
                    converged: false,
                    wall_time_s: wall,
                    status: format!("error:{}: {e}", e.code()),
                }, Vec::new()),
            }
        })
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for (row, trace) in results {
        rows.push(row);
        traces.extend(trace);
    }
    Ok((rows, traces))
}

/// Output of the digital design stage of one sweep point.
#[derive(Debug, Clone)]
pub struct SolvedPoint {
    pub spec: ArchitectureSpec,
    /// Link the design was optimized for (linearized amplifier for
    /// [`Design::Linear`]).
    pub design_link: LinkContext<f64>,
    pub config: SolverConfig<f64>,
    pub precoder: DigitalPrecoder<f64>,
    pub trace: DinkelbachTrace<f64>,
}

/// Runs the fully digital EE solver for one point of a scenario sweep.
pub fn solve_point(
    scenario: &Scenario,
    true_link: &LinkContext<f64>,
    comps: &ComponentPowers<f64>,
    arch: ArchitectureKind,
    design: Design,
    value: f64,
) -> Result<SolvedPoint> {
    let mut mt = scenario.mt;
    let mut hi_ratio = scenario.hi_ratio;
    let mut budget_dbw = scenario.power_budget_dbw;
    match scenario.sweep {
        SweepKind::PowerBudget => budget_dbw = value,
        SweepKind::HiRatio => hi_ratio = value,
        SweepKind::RfChains => mt = value as usize,
    }
    let spec = ArchitectureSpec::with_ratio(arch, true_link.nt(), mt, hi_ratio)?;
    let design_link = match design {
        Design::Nonlinear => true_link.clone(),
        Design::Linear => true_link.with_npa(true_link.npa.linearized()),
    };
    let budget = dbw_to_watts(budget_dbw);
    let mut config = SolverConfig::for_link(&design_link, budget);
    config.inner_iters = scenario.inner_iters;
    config.max_outer_iters = scenario.max_outer_iters;
    config.epsilon = scenario.epsilon_rel * scenario.bw_hz * scenario.k as f64;

    let problem = EeProblem::new(&design_link, &spec, comps)?;
    let b0 = initial_precoder(&design_link, &config)?;
    let (precoder, trace) = dinkelbach_solve(&problem, &b0, &config)?;
    Ok(SolvedPoint {
        spec,
        design_link,
        config,
        precoder,
        trace,
    })
}

fn run_point(
    scenario: &Scenario,
    true_link: &LinkContext<f64>,
    comps: &ComponentPowers<f64>,
    job: &Job,
    opts: RunOptions,
) -> Result<(ResultRow, Vec<TraceRow>)> {
    let SolvedPoint {
        spec,
        design_link,
        precoder: b,
        trace,
        ..
    } = solve_point(scenario, true_link, comps, job.arch, job.design, job.value)?;

    let trace_row = |stage, outer, inner| TraceRow {
        architecture: job.arch.name().into(),
        design: job.design,
        sweep_value: job.value,
        trial: job.trial,
        stage,
        outer,
        inner,
        f: f64::NAN,
        ee: f64::NAN,
        eta: f64::NAN,
        p_pa: f64::NAN,
        step: f64::NAN,
        residual_sq: f64::NAN,
    };
    let mut trace_rows = Vec::new();
    if scenario.write_trace {
        for r in &trace.inner {
            trace_rows.push(TraceRow {
                f: r.f,
                ee: r.ee,
                eta: r.eta,
                p_pa: r.pa_power,
                step: r.step,
                ..trace_row(TraceStage::Inner, r.outer, r.inner)
            });
        }
        for r in &trace.outer {
            trace_rows.push(TraceRow {
                f: r.f,
                ee: r.ee,
                eta: r.eta,
                p_pa: r.pa_power,
                ..trace_row(TraceStage::Outer, r.outer, 0)
            });
        }
    }

    let (precoder, residual) = if spec.kind.is_hybrid() {
        let network = TrpsNetwork::from_spec(&spec, scenario.r_high, scenario.r_low)?;
        let dopts = DecomposeOptions {
            max_iters: scenario.mm_max_iters,
            mm_rounds: scenario.mm_rounds,
            ..DecomposeOptions::default()
        };
        let design = decompose(&b, &network, &design_link.npa, &dopts)?;
        design.network.verify(&design.precoder)?;
        if scenario.write_trace {
            for (run, values) in design.residual_runs.iter().enumerate() {
                for (it, &r) in values.iter().enumerate() {
                    trace_rows.push(TraceRow {
                        residual_sq: r,
                        ..trace_row(TraceStage::Mm, run, it)
                    });
                }
            }
        }
        (design.precoder.product()?, Some(design.residual))
    } else {
        (b, None)
    };

    let sum_rate = sum_rate_bound(true_link, &precoder)?;
    let p_total = total_power(&spec, comps, &true_link.npa, &precoder)?;
    let p_t = transmitter_power(&spec, comps)?;
    let mc_n = if opts.mc_validate {
        scenario.mc_samples.max(10_000)
    } else {
        scenario.mc_samples
    };
    let (mc_sum_rate, mc_std_err) = if mc_n > 0 {
        let seed = derive_seed(
            scenario.seed,
            &[1, job.arch as u64, job.design as u64, job.value_index as u64, job.trial as u64],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let est = ergodic_rate_mc(true_link, &precoder, mc_n, &mut rng)?;
        let mean: f64 = est.iter().map(|e| e.mean).sum();
        let se = est.iter().map(|e| e.std_err * e.std_err).sum::<f64>().sqrt();
        (Some(mean), Some(se))
    } else {
        (None, None)
    };
    let row = ResultRow {
        architecture: job.arch.name().into(),
        design: job.design,
        sweep: scenario.sweep,
        sweep_value: job.value,
        trial: job.trial,
        ee: scenario.bw_hz * sum_rate / p_total,
        sum_rate_bound: sum_rate,
        mc_sum_rate,
        mc_std_err,
        p_pa: p_total - p_t,
        p_t,
        residual,
        outer_iterations: trace.outer_iterations(),
        converged: trace.converged,
        wall_time_s: 0.0,
        status: "ok".into(),
    };
    Ok((row, trace_rows))
}

fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".into()
    } else {
        format!("{x:.16e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// First line of every CSV file: column units.
pub const CSV_UNITS_COMMENT: &str = "# units: sweep_value dBW|ratio|count, ee bit/J, sum_rate_bound/mc_sum_rate/mc_std_err bit/s/Hz, p_pa/p_t W, residual Frobenius norm, wall_time_s s";

/// Writes rows as CSV: a `#` units line, the header, then one row per line
/// with floats at 17 significant digits.
pub fn write_csv<W: std::io::Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "{CSV_UNITS_COMMENT}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.architecture.clone(),
            design_name(r.design).into(),
            r.sweep.name().into(),
            fmt_f64(r.sweep_value),
            r.trial.to_string(),
            fmt_f64(r.ee),
            fmt_f64(r.sum_rate_bound),
            fmt_opt(r.mc_sum_rate),
            fmt_opt(r.mc_std_err),
            fmt_f64(r.p_pa),
            fmt_f64(r.p_t),
            fmt_opt(r.residual),
            r.outer_iterations.to_string(),
            r.converged.to_string(),
            fmt_f64(r.wall_time_s),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn design_name(d: Design) -> &'static str {
    match d {
        Design::Nonlinear => "nonlinear",
        Design::Linear => "linear",
    }
}

/// Writes trace rows as CSV with the same float formatting as the results.
pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.architecture.clone(),
            design_name(r.design).into(),
            fmt_f64(r.sweep_value),
            r.trial.to_string(),
            match r.stage {
                TraceStage::Inner => "inner".into(),
                TraceStage::Outer => "outer".into(),
                TraceStage::Mm => "mm".into(),
            },
            r.outer.to_string(),
            r.inner.to_string(),
            fmt_f64(r.f),
            fmt_f64(r.ee),
            fmt_f64(r.eta),
            fmt_f64(r.p_pa),
            fmt_f64(r.step),
            fmt_f64(r.residual_sq),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let file = fs::File::create(path)?;
    write_csv(rows, std::io::BufWriter::new(file))
}

/// Parses a file written by [`write_csv`].
pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(input);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(CSV_COLUMNS) {
        return Err(Error::Config(format!("unexpected CSV header {headers:?}")));
    }
    rdr.deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

/// Writes a standalone matplotlib script that reads `csv_name` (relative to
/// the script's directory) and plots mean EE against the sweep value, one
/// curve per architecture and design.
pub fn emit_plot_script(rows: &[ResultRow], csv_name: &str, path: &Path) -> Result<()> {
    let (sweep, xlabel) = match rows.first().map(|r| r.sweep) {
        Some(SweepKind::PowerBudget) | None => ("power-budget", "Power budget P (dBW)"),
        Some(SweepKind::HiRatio) => ("hi-ratio", "High-resolution ratio"),
        Some(SweepKind::RfChains) => ("rf-chains", "RF chains M_t"),
    };
    let mut s = String::new();
    let _ = writeln!(s, "#!/usr/bin/env python3");
    let _ = writeln!(s, "# Plots EE versus the {sweep} sweep in {csv_name}.");
    let _ = writeln!(s, "import csv");
    let _ = writeln!(s, "import os");
    let _ = writeln!(s, "from collections import defaultdict");
    let _ = writeln!(s);
    let _ = writeln!(s, "import matplotlib");
    let _ = writeln!(s, "matplotlib.use(\"Agg\")");
    let _ = writeln!(s, "import matplotlib.pyplot as plt");
    let _ = writeln!(s);
    let _ = writeln!(s, "here = os.path.dirname(os.path.abspath(__file__))");
    let _ = writeln!(s, "curves = defaultdict(lambda: defaultdict(list))");
    let _ = writeln!(s, "with open(os.path.join(here, {csv_name:?})) as f:");
    let _ = writeln!(s, "    lines = (line for line in f if not line.startswith(\"#\"))");
    let _ = writeln!(s, "    for row in csv.DictReader(lines):");
    let _ = writeln!(s, "        if row[\"status\"] != \"ok\":");
    let _ = writeln!(s, "            continue");
    let _ = writeln!(s, "        key = row[\"architecture\"] + \" (\" + row[\"design\"] + \")\"");
    let _ = writeln!(s, "        curves[key][float(row[\"sweep_value\"])].append(float(row[\"ee\"]))");
    let _ = writeln!(s);
    let _ = writeln!(s, "fig, ax = plt.subplots()");
    let _ = writeln!(s, "for key in sorted(curves):");
    let _ = writeln!(s, "    xs = sorted(curves[key])");
    let _ = writeln!(s, "    ys = [sum(curves[key][x]) / len(curves[key][x]) / 1e6 for x in xs]");
    let _ = writeln!(s, "    ax.plot(xs, ys, marker=\"o\", label=key)");
    let _ = writeln!(s, "ax.set_xlabel({xlabel:?})");
    let _ = writeln!(s, "ax.set_ylabel(\"EE (Mbit/J)\")");
    let _ = writeln!(s, "ax.grid(True)");
    let _ = writeln!(s, "if curves:");
    let _ = writeln!(s, "    ax.legend()");
    let _ = writeln!(
        s,
        "fig.savefig(os.path.join(here, {:?}), dpi=150, bbox_inches=\"tight\")",
        format!("{}.png", csv_name.trim_end_matches(".csv"))
    );
    fs::write(path, s)?;
    Ok(())
}

/// Runs a scenario and writes `<name>.csv` and `<name>_plot.py` into `out`,
/// plus `<name>_trace.csv` when the scenario asks for traces.
pub fn run_to_dir(scenario: &Scenario, out: &Path, opts: RunOptions) -> Result<Vec<ResultRow>> {
    let (rows, traces) = run_scenario_traced(scenario, opts)?;
    fs::create_dir_all(out)?;
    let csv_name = format!("{}.csv", scenario.name);
    emit_csv(&rows, &out.join(&csv_name))?;
    if scenario.write_trace {
        let file = fs::File::create(out.join(format!("{}_trace.csv", scenario.name)))?;
        write_trace_csv(&traces, std::io::BufWriter::new(file))?;
    }
    emit_plot_script(&rows, &csv_name, &out.join(format!("{}_plot.py", scenario.name)))?;
    Ok(rows)
}

