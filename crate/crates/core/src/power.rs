//! Static transmitter power models for hybrid and fully digital
//! transmitters, plus the total `P_PA + P_t`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::npa::NpaModel;
use crate::precoder::DigitalPrecoder;
use crate::scalar::Scalar;

/// Per-component power draw in watts. `p_rfc` is the whole RF chain
/// (DAC, mixer, LPF and baseband amplifier together).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentPowers<T> {
    pub p_lps: T,
    pub p_hps: T,
    pub p_rfc: T,
    pub p_lo: T,
    pub p_bb: T,
    pub p_sw: T,
}

impl<T: Scalar> ComponentPowers<T> {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("p_lps", self.p_lps),
            ("p_hps", self.p_hps),
            ("p_rfc", self.p_rfc),
            ("p_lo", self.p_lo),
            ("p_bb", self.p_bb),
            ("p_sw", self.p_sw),
        ];
        for (name, v) in fields {
            if !(v >= T::zero()) {
                return Err(Error::Domain(format!("{name} must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Resolves shifter powers for the given resolutions from `table`;
    /// the remaining components take the supplied values.
    pub fn with_shifters(
        table: &ShifterPowerTable,
        r_high: u32,
        r_low: u32,
        p_rfc: T,
        p_lo: T,
        p_bb: T,
        p_sw: T,
    ) -> Result<Self> {
        let p = Self {
            p_lps: T::lit(table.lookup(r_low)?),
            p_hps: T::lit(table.lookup(r_high)?),
            p_rfc,
            p_lo,
            p_bb,
            p_sw,
        };
        p.validate()?;
        Ok(p)
    }

    /// Reference hardware: 4-bit 20 mW and 2-bit 10 mW shifters, 338 mW RF
    /// chain, 5 mW LO, 200 mW baseband, 1 mW switch.
    pub fn reference() -> Self {
        Self {
            p_lps: T::lit(10e-3),
            p_hps: T::lit(20e-3),
            p_rfc: T::lit(338e-3),
            p_lo: T::lit(5e-3),
            p_bb: T::lit(200e-3),
            p_sw: T::lit(1e-3),
        }
    }
}

/// Phase-shifter power (W) keyed by resolution in bits.
#[derive(Debug, Clone, PartialEq)]
pub struct ShifterPowerTable(BTreeMap<u32, f64>);

impl Default for ShifterPowerTable {
    fn default() -> Self {
        Self(BTreeMap::from([(2, 10e-3), (4, 20e-3)]))
    }
}

impl ShifterPowerTable {
    pub fn insert(&mut self, bits: u32, watts: f64) {
        self.0.insert(bits, watts);
    }

    pub fn lookup(&self, bits: u32) -> Result<f64> {
        self.0.get(&bits).copied().ok_or_else(|| {
            Error::Config(format!(
                "no phase-shifter power configured for {bits}-bit resolution"
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ArchitectureKind {
    FullyConnectedTrps,
    PartiallyConnectedTrps,
    FullyDigital,
    FullyConnectedHrps,
    FullyConnectedLrps,
    PartiallyConnectedHrps,
    PartiallyConnectedLrps,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 7] = [
        ArchitectureKind::FullyConnectedTrps,
        ArchitectureKind::PartiallyConnectedTrps,
        ArchitectureKind::FullyDigital,
        ArchitectureKind::FullyConnectedHrps,
        ArchitectureKind::FullyConnectedLrps,
        ArchitectureKind::PartiallyConnectedHrps,
        ArchitectureKind::PartiallyConnectedLrps,
    ];

    pub fn is_fully_connected(self) -> bool {
        matches!(
            self,
            Self::FullyConnectedTrps | Self::FullyConnectedHrps | Self::FullyConnectedLrps
        )
    }

    pub fn is_partially_connected(self) -> bool {
        matches!(
            self,
            Self::PartiallyConnectedTrps | Self::PartiallyConnectedHrps | Self::PartiallyConnectedLrps
        )
    }

    pub fn is_trps(self) -> bool {
        matches!(self, Self::FullyConnectedTrps | Self::PartiallyConnectedTrps)
    }

    pub fn is_hybrid(self) -> bool {
        self != Self::FullyDigital
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::FullyConnectedTrps => "fc-trps",
            Self::PartiallyConnectedTrps => "pc-trps",
            Self::FullyDigital => "digital",
            Self::FullyConnectedHrps => "fc-hrps",
            Self::FullyConnectedLrps => "fc-lrps",
            Self::PartiallyConnectedHrps => "pc-hrps",
            Self::PartiallyConnectedLrps => "pc-lrps",
        }
    }
}

impl fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown architecture '{s}'")))
    }
}

/// Transmitter layout: antenna and RF-chain counts plus how many phase
/// shifters are high (`n_high`) and low (`n_low`) resolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    pub nt: usize,
    pub mt: usize,
    pub n_high: usize,
    pub n_low: usize,
}

impl ArchitectureSpec {
    pub fn new(
        kind: ArchitectureKind,
        nt: usize,
        mt: usize,
        n_high: usize,
        n_low: usize,
    ) -> Result<Self> {
        let spec = Self {
            kind,
            nt,
            mt,
            n_high,
            n_low,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Builds a spec whose high-resolution fraction is `hi_ratio` (rounded to
    /// the nearest shifter). Single-resolution kinds ignore the ratio and the
    /// fully digital kind forces `mt = nt`.
    pub fn with_ratio(kind: ArchitectureKind, nt: usize, mt: usize, hi_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&hi_ratio) {
            return Err(Error::Domain(format!(
                "high-resolution ratio must lie in [0, 1], got {hi_ratio}"
            )));
        }
        let mt = if kind == ArchitectureKind::FullyDigital { nt } else { mt };
        let total = Self::shifter_count(kind, nt, mt);
        let n_high = match kind {
            ArchitectureKind::FullyConnectedTrps | ArchitectureKind::PartiallyConnectedTrps => {
                (hi_ratio * total as f64).round() as usize
            }
            ArchitectureKind::FullyConnectedHrps | ArchitectureKind::PartiallyConnectedHrps => total,
            _ => 0,
        };
        Self::new(kind, nt, mt, n_high, total - n_high)
    }

    fn shifter_count(kind: ArchitectureKind, nt: usize, mt: usize) -> usize {
        if kind.is_fully_connected() {
            nt * mt
        } else if kind.is_partially_connected() {
            nt
        } else {
            0
        }
    }

    /// Number of phase shifters in the analog network.
    pub fn shifters(&self) -> usize {
        Self::shifter_count(self.kind, self.nt, self.mt)
    }

    /// Active switches: `nt * mt` fully connected, `nt` partially connected.
    /// Only twin-resolution networks carry a switching fabric.
    pub fn active_switches(&self) -> usize {
        match self.kind {
            ArchitectureKind::FullyConnectedTrps => self.nt * self.mt,
            ArchitectureKind::PartiallyConnectedTrps => self.nt,
            _ => 0,
        }
    }

    /// Antennas per RF chain for partially connected networks.
    pub fn group_size(&self) -> usize {
        self.nt / self.mt
    }

    /// Fraction of high-resolution shifters.
    pub fn hi_ratio(&self) -> f64 {
        let total = self.n_high + self.n_low;
        if total == 0 {
            0.0
        } else {
            self.n_high as f64 / total as f64
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 || self.mt == 0 || self.mt > self.nt {
            return Err(Error::Domain(format!(
                "need 1 <= M_t <= N_t, got M_t = {}, N_t = {}",
                self.mt, self.nt
            )));
        }
        if self.kind.is_partially_connected() && self.nt % self.mt != 0 {
            return Err(Error::Domain(format!(
                "partially connected network needs N_t divisible by M_t, got {} / {}",
                self.nt, self.mt
            )));
        }
        if self.kind == ArchitectureKind::FullyDigital && self.mt != self.nt {
            return Err(Error::Domain("fully digital transmitter needs M_t = N_t".into()));
        }
        let total = self.shifters();
        let (want_high, want_low) = match self.kind {
            ArchitectureKind::FullyConnectedTrps | ArchitectureKind::PartiallyConnectedTrps => {
                if self.n_high + self.n_low != total {
                    return Err(Error::Domain(format!(
                        "N_H + N_L must equal {total}, got {} + {}",
                        self.n_high, self.n_low
                    )));
                }
                return Ok(());
            }
            ArchitectureKind::FullyConnectedHrps | ArchitectureKind::PartiallyConnectedHrps => {
                (total, 0)
            }
            ArchitectureKind::FullyConnectedLrps | ArchitectureKind::PartiallyConnectedLrps => {
                (0, total)
            }
            ArchitectureKind::FullyDigital => (0, 0),
        };
        if (self.n_high, self.n_low) != (want_high, want_low) {
            return Err(Error::Domain(format!(
                "{} needs N_H = {want_high}, N_L = {want_low}, got {} and {}",
                self.kind, self.n_high, self.n_low
            )));
        }
        Ok(())
    }

    /// Checks the spec against the number of served users.
    pub fn validate_users(&self, k: usize) -> Result<()> {
        self.validate()?;
        if k > self.mt {
            return Err(Error::Domain(format!(
                "need K <= M_t, got K = {k}, M_t = {}",
                self.mt
            )));
        }
        Ok(())
    }
}

/// Static transmitter power `P_t`.
pub fn transmitter_power<T: Scalar>(spec: &ArchitectureSpec, comps: &ComponentPowers<T>) -> Result<T> {
    spec.validate()?;
    comps.validate()?;
    let n = |x: usize| T::lit(x as f64);
    let common = n(spec.mt) * comps.p_rfc + comps.p_lo + comps.p_bb;
    let p = match spec.kind {
        ArchitectureKind::FullyDigital => n(spec.nt) * comps.p_rfc + comps.p_lo + comps.p_bb,
        _ => {
            n(spec.n_low) * comps.p_lps
                + n(spec.n_high) * comps.p_hps
                + common
                + n(spec.active_switches()) * comps.p_sw
        }
    };
    Ok(p)
}

/// `P_total = P_PA(B) + P_t`.
pub fn total_power<T: Scalar>(
    spec: &ArchitectureSpec,
    comps: &ComponentPowers<T>,
    npa: &NpaModel<T>,
    b: &DigitalPrecoder<T>,
) -> Result<T> {
    Ok(npa.pa_power(b)? + transmitter_power(spec, comps)?)
}
