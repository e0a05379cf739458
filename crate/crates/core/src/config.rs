//! JSON scenario and count-table inputs.
//!
//! Shares are read as exact decimals so that `N * rho_si` can be checked for
//! integrality without binary floating point getting in the way.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::maxent::SimplexSlab;
use crate::model::{MaxEntPrior, Mechanism, PopulationSpec};
use crate::sampler::TestingOutcome;

const MAX_SCALE: u32 = 18;

/// Non-negative decimal `digits / 10^scale`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decimal {
    digits: u128,
    scale: u32,
}

impl Decimal {
    pub fn to_f64(self) -> f64 {
        self.to_string().parse().expect("decimal text is a valid float")
    }

    /// `n * self` when it is a whole number.
    pub fn times_integer(self, n: u64) -> Option<u64> {
        let scaled = (n as u128).checked_mul(self.digits)?;
        let unit = 10u128.pow(self.scale);
        (scaled % unit == 0).then(|| (scaled / unit) as u64)
    }

    fn rescale(self, scale: u32) -> u128 {
        self.digits * 10u128.pow(scale - self.scale)
    }

    /// Exact sum of a set of decimals, returned as `(digits, scale)`.
    fn sum(values: &[Decimal]) -> (u128, u32) {
        let scale = values.iter().map(|d| d.scale).max().unwrap_or(0);
        (values.iter().map(|d| d.rescale(scale)).sum(), scale)
    }
}

impl FromStr for Decimal {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("'{text}' is not a plain non-negative decimal"));
        let t = text.trim();
        let (int, frac) = match t.split_once('.') {
            Some((i, f)) => (i, f),
            None => (t, ""),
        };
        if int.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        let scale = frac.len() as u32;
        if scale > MAX_SCALE {
            return Err(Error::InvalidArgument(format!("'{text}' has more than {MAX_SCALE} decimals")));
        }
        let digits = format!("{int}{frac}");
        let digits = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| bad())? };
        Ok(Self { digits, scale })
    }
}

impl fmt::Display for Decimal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = 10u128.pow(self.scale);
        let int = self.digits / unit;
        if self.scale == 0 {
            write!(f, "{int}")
        } else {
            let frac = self.digits % unit;
            write!(f, "{int}.{frac:0width$}", width = self.scale as usize)
        }
    }
}

impl Serialize for Decimal {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Decimal {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Number(serde_json::Number),
        }
        let text = match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s,
            Raw::Number(n) => n.to_string(),
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Population shares and testing probabilities, independent of `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationDesign {
    /// `shares[s] = [rho_s0, rho_s1]`.
    pub shares: Vec<[Decimal; 2]>,
    /// `testing[s] = [pi_s0, pi_s1]`.
    pub testing: Vec<[Decimal; 2]>,
}

impl PopulationDesign {
    pub fn validate(&self) -> Result<()> {
        if self.shares.is_empty() || self.shares.len() != self.testing.len() {
            return Err(Error::InvalidPopulation(format!(
                "{} share rows and {} testing rows",
                self.shares.len(),
                self.testing.len()
            )));
        }
        let flat: Vec<Decimal> = self.shares.iter().flatten().copied().collect();
        let (sum, scale) = Decimal::sum(&flat);
        if sum != 10u128.pow(scale) {
            return Err(Error::InvalidPopulation(format!(
                "shares sum to {}, not 1",
                Decimal { digits: sum, scale }
            )));
        }
        Ok(())
    }

    /// The exact population of size `n`.
    pub fn at(&self, n: u64) -> Result<PopulationSpec> {
        self.validate()?;
        let mut sizes = Vec::with_capacity(self.shares.len());
        for (s, row) in self.shares.iter().enumerate() {
            let mut out = [0u64; 2];
            for (i, share) in row.iter().enumerate() {
                out[i] = share.times_integer(n).ok_or(Error::NonIntegerStratum {
                    stratum: s,
                    status: i,
                    size: n as f64 * share.to_f64(),
                })?;
            }
            sizes.push(out);
        }
        let testing = self.testing.iter().map(|r| [r[0].to_f64(), r[1].to_f64()]).collect();
        PopulationSpec::from_sizes(sizes, testing)
    }

    pub fn stratum_shares(&self) -> Vec<f64> {
        self.shares
            .iter()
            .map(|r| {
                let (digits, scale) = Decimal::sum(r);
                Decimal { digits, scale }.to_f64()
            })
            .collect()
    }
}

/// Mechanism as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MechanismConfig {
    Mcar,
    /// Shares default to the population's own class shares.
    Mar {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        stratum_shares: Option<Vec<Decimal>>,
    },
    /// Without bounds the two-class data-driven interval is used.
    #[serde(rename = "maxent")]
    MaxEnt {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lower: Option<Vec<Decimal>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        upper: Option<Vec<Decimal>>,
        #[serde(default = "default_samples")]
        samples: u64,
        #[serde(default)]
        seed: u64,
    },
}

fn default_samples() -> u64 {
    100_000
}

impl MechanismConfig {
    /// Resolves to a [`Mechanism`], with MAR shares taken from
    /// `population_shares` when not given.
    pub fn resolve(&self, population_shares: Option<&[f64]>) -> Result<Mechanism> {
        let to_f64 = |v: &[Decimal]| v.iter().map(|d| d.to_f64()).collect::<Vec<_>>();
        let mech = match self {
            MechanismConfig::Mcar => Mechanism::Mcar,
            MechanismConfig::Mar { stratum_shares } => {
                let shares = match (stratum_shares, population_shares) {
                    (Some(s), _) => to_f64(s),
                    (None, Some(p)) => p.to_vec(),
                    (None, None) => {
                        return Err(Error::InvalidMechanism("MAR needs stratum_shares".into()))
                    }
                };
                Mechanism::Mar { stratum_shares: shares }
            }
            MechanismConfig::MaxEnt { lower, upper, samples, seed } => match (lower, upper) {
                (None, None) => Mechanism::MaxEnt(MaxEntPrior::Interval),
                (Some(a), Some(b)) => Mechanism::MaxEnt(MaxEntPrior::Slab {
                    slab: SimplexSlab::new(to_f64(a), to_f64(b))?,
                    samples: *samples,
                    seed: *seed,
                }),
                _ => {
                    return Err(Error::InvalidMechanism(
                        "maxent needs both lower and upper bounds, or neither".into(),
                    ))
                }
            },
        };
        mech.validate()?;
        Ok(mech)
    }
}

/// One simulation scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    pub population: PopulationDesign,
    pub mechanism: MechanismConfig,
    pub n_grid: Vec<u64>,
    pub replicates: u64,
    pub alpha: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.label.is_empty()
            || !self.label.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(Error::InvalidArgument(format!(
                "label '{}' must be non-empty and use only [A-Za-z0-9._-]",
                self.label
            )));
        }
        if self.replicates == 0 {
            return Err(Error::InvalidArgument("replicates must be at least 1".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::InvalidArgument("n_grid must not be empty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        let mech = self.mechanism()?;
        for &n in &self.n_grid {
            let spec = self.population.at(n)?;
            mech.validate_for(&spec)?;
        }
        Ok(())
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        self.mechanism.resolve(Some(&self.population.stratum_shares()))
    }

    pub fn spec_at(&self, n: u64) -> Result<PopulationSpec> {
        self.population.at(n)
    }
}

/// A real count table for one-shot estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CountTableInput {
    /// Population size `N`.
    pub n: u64,
    /// `counts[s] = [N_Ts0, N_Ts1]`.
    pub counts: Vec<[u64; 2]>,
    pub mechanism: MechanismConfig,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.05
}

impl CountTableInput {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("input: {e}")))
    }

    pub fn outcome(&self) -> Result<TestingOutcome> {
        TestingOutcome::new(self.n, self.counts.clone())
    }

    pub fn mechanism(&self) -> Result<Mechanism> {
        let mech = self.mechanism.resolve(None)?;
        let classes = self.counts.len();
        let ok = match &mech {
            Mechanism::Mcar => true,
            Mechanism::Mar { stratum_shares } => stratum_shares.len() == classes,
            Mechanism::MaxEnt(MaxEntPrior::Interval) => classes == 2,
            Mechanism::MaxEnt(MaxEntPrior::Slab { slab, .. }) => slab.strata() == classes,
        };
        if !ok {
            return Err(Error::InvalidMechanism(format!(
                "mechanism does not fit a table with {classes} symptom classes"
            )));
        }
        Ok(mech)
    }
}
