//! Logical scenario: per-parameter distributions, their frozen bins, and
//! the mapping between bin indices and concrete scenarios.

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sampling distribution of one scenario parameter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Distribution {
    /// Continuous uniform on `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// Gaussian, not truncated.
    Normal { mean: f64, std: f64 },
    /// Distinct integer presets drawn without replacement from `lo..=hi`.
    Preset { lo: u32, hi: u32 },
}

/// One row of the parameter table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParameterEntry", into = "ParameterEntry")]
pub struct ParameterSpec {
    pub name: String,
    pub distribution: Distribution,
    pub sample_count: usize,
}

/// Config-file form of a [`ParameterSpec`]: `{ name, dist, params, samples }`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParameterEntry {
    name: String,
    dist: String,
    params: Vec<f64>,
    samples: usize,
}

impl TryFrom<ParameterEntry> for ParameterSpec {
    type Error = Error;

    fn try_from(e: ParameterEntry) -> Result<Self> {
        let field = |f: &str| format!("parameters.{}.{f}", e.name);
        if e.params.len() != 2 {
            return Err(Error::config(
                field("params"),
                format!("expected 2 values, got {}", e.params.len()),
            ));
        }
        let (p0, p1) = (e.params[0], e.params[1]);
        let distribution = match e.dist.as_str() {
            "uniform" => Distribution::Uniform { lo: p0, hi: p1 },
            "normal" => Distribution::Normal { mean: p0, std: p1 },
            "preset" => {
                let as_preset = |v: f64| -> Result<u32> {
                    if v.fract() == 0.0 && v >= 0.0 && v <= u32::MAX as f64 {
                        Ok(v as u32)
                    } else {
                        Err(Error::config(field("params"), "preset bounds must be non-negative integers"))
                    }
                };
                Distribution::Preset { lo: as_preset(p0)?, hi: as_preset(p1)? }
            }
            other => {
                return Err(Error::config(
                    field("dist"),
                    format!("unknown distribution `{other}` (expected uniform, normal or preset)"),
                ))
            }
        };
        let spec = ParameterSpec {
            name: e.name,
            distribution,
            sample_count: e.samples,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl From<ParameterSpec> for ParameterEntry {
    fn from(s: ParameterSpec) -> Self {
        let (dist, params) = match s.distribution {
            Distribution::Uniform { lo, hi } => ("uniform", vec![lo, hi]),
            Distribution::Normal { mean, std } => ("normal", vec![mean, std]),
            Distribution::Preset { lo, hi } => ("preset", vec![lo as f64, hi as f64]),
        };
        ParameterEntry {
            name: s.name,
            dist: dist.to_owned(),
            params,
            samples: s.sample_count,
        }
    }
}

impl ParameterSpec {
    pub fn uniform(name: &str, lo: f64, hi: f64, samples: usize) -> Self {
        Self {
            name: name.to_owned(),
            distribution: Distribution::Uniform { lo, hi },
            sample_count: samples,
        }
    }

    pub fn normal(name: &str, mean: f64, std: f64, samples: usize) -> Self {
        Self {
            name: name.to_owned(),
            distribution: Distribution::Normal { mean, std },
            sample_count: samples,
        }
    }

    pub fn preset(name: &str, lo: u32, hi: u32, samples: usize) -> Self {
        Self {
            name: name.to_owned(),
            distribution: Distribution::Preset { lo, hi },
            sample_count: samples,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("parameters.{}.{f}", self.name);
        if self.sample_count == 0 {
            return Err(Error::config(field("samples"), "sample count must be at least 1"));
        }
        match self.distribution {
            Distribution::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::config(field("params"), format!("uniform requires lo < hi, got [{lo}, {hi}]")));
                }
            }
            Distribution::Normal { mean, std } => {
                if !(mean.is_finite() && std.is_finite() && std > 0.0) {
                    return Err(Error::config(field("params"), format!("normal requires std > 0, got {std}")));
                }
            }
            Distribution::Preset { lo, hi } => {
                if lo > hi {
                    return Err(Error::config(field("params"), format!("preset requires lo <= hi, got [{lo}, {hi}]")));
                }
                let available = (hi - lo) as usize + 1;
                if self.sample_count > available {
                    return Err(Error::config(
                        field("samples"),
                        format!("{} presets requested but only {available} exist", self.sample_count),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// The five-parameter pedestrian-crossing table in its reference configuration.
pub fn reference_parameters() -> Vec<ParameterSpec> {
    vec![
        ParameterSpec::uniform("ego_offset_pos", 1.0, 10.0, 10),
        ParameterSpec::uniform("ped_accel", 0.0, 0.1, 10),
        ParameterSpec::normal("ped_vel", 1.46, 0.24, 25),
        ParameterSpec::uniform("ped_offset_pos", 3.0, 4.5, 4),
        ParameterSpec::preset("weather", 0, 14, 10),
    ]
}

/// Draws `spec.sample_count` values from the parameter's distribution, sorted ascending.
pub fn discretize<T: Scalar, R: Rng + ?Sized>(spec: &ParameterSpec, rng: &mut R) -> Result<Vec<T>> {
    spec.validate()?;
    let n = spec.sample_count;
    let mut values: Vec<f64> = match spec.distribution {
        Distribution::Uniform { lo, hi } => {
            let d = Uniform::new(lo, hi);
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Distribution::Normal { mean, std } => {
            let d = Normal::new(mean, std).map_err(|e| Error::config(format!("parameters.{}.params", spec.name), e.to_string()))?;
            (0..n).map(|_| d.sample(rng)).collect()
        }
        Distribution::Preset { lo, hi } => {
            let available = (hi - lo) as usize + 1;
            sample_indices(rng, available, n)
                .into_iter()
                .map(|i| (lo as usize + i) as f64)
                .collect()
        }
    };
    values.sort_by(f64::total_cmp);
    Ok(values.into_iter().map(T::lit).collect())
}

/// A concrete scenario: one bin index and the corresponding value per parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcreteScenario<T> {
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

/// The discretized search space. Bins are generated once and never resampled.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSpace<T> {
    specs: Vec<ParameterSpec>,
    bins: Vec<Vec<T>>,
    seed: u64,
}

impl<T: Scalar> ParameterSpace<T> {
    pub fn generate(specs: Vec<ParameterSpec>, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::config("parameters", "at least one parameter is required"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bins = specs
            .iter()
            .map(|s| discretize(s, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { specs, bins, seed })
    }

    /// Rebuilds a space from previously exported bins.
    pub fn from_bins(specs: Vec<ParameterSpec>, bins: Vec<Vec<T>>, seed: u64) -> Result<Self> {
        if specs.len() != bins.len() {
            return Err(Error::Validation(format!(
                "{} parameter specs but {} bin lists",
                specs.len(),
                bins.len()
            )));
        }
        for (spec, b) in specs.iter().zip(&bins) {
            spec.validate()?;
            if b.len() != spec.sample_count {
                return Err(Error::Validation(format!(
                    "parameter `{}` expects {} bins, found {}",
                    spec.name,
                    spec.sample_count,
                    b.len()
                )));
            }
            if b.windows(2).any(|w| w[0] > w[1]) {
                return Err(Error::Validation(format!("bins of `{}` are not sorted", spec.name)));
            }
        }
        Ok(Self { specs, bins, seed })
    }

    pub fn specs(&self) -> &[ParameterSpec] {
        &self.specs
    }

    pub fn bins(&self) -> &[Vec<T>] {
        &self.bins
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Bin count of every parameter.
    pub fn bin_counts(&self) -> Vec<usize> {
        self.bins.iter().map(Vec::len).collect()
    }

    /// Number of distinct concrete scenarios.
    pub fn cardinality(&self) -> u128 {
        self.bins.iter().map(|b| b.len() as u128).product()
    }

    pub fn decode(&self, indices: &[usize]) -> Result<ConcreteScenario<T>> {
        if indices.len() != self.len() {
            return Err(Error::Validation(format!(
                "scenario has {} indices, space has {} parameters",
                indices.len(),
                self.len()
            )));
        }
        let values = indices
            .iter()
            .zip(self.specs.iter().zip(&self.bins))
            .map(|(&i, (spec, bins))| {
                bins.get(i).copied().ok_or_else(|| Error::Bounds {
                    parameter: spec.name.clone(),
                    index: i,
                    len: bins.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConcreteScenario {
            indices: indices.to_vec(),
            values,
        })
    }

    /// Inverse of [`decode`](Self::decode): every value must equal one of its parameter's bins.
    pub fn encode(&self, values: &[T]) -> Result<Vec<usize>> {
        if values.len() != self.len() {
            return Err(Error::Validation(format!(
                "scenario has {} values, space has {} parameters",
                values.len(),
                self.len()
            )));
        }
        values
            .iter()
            .zip(self.specs.iter().zip(&self.bins))
            .map(|(v, (spec, bins))| {
                bins.iter().position(|b| b == v).ok_or_else(|| {
                    Error::Validation(format!("value {v} is not a bin of parameter `{}`", spec.name))
                })
            })
            .collect()
    }

    /// Uniform draw over the discrete index grid.
    pub fn random_scenario<R: Rng + ?Sized>(&self, rng: &mut R) -> ConcreteScenario<T> {
        let indices: Vec<usize> = self.bins.iter().map(|b| rng.gen_range(0..b.len())).collect();
        let values = indices.iter().zip(&self.bins).map(|(&i, b)| b[i]).collect();
        ConcreteScenario { indices, values }
    }

    /// Iterates every index vector of the grid in row-major order.
    pub fn all_indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        let counts = self.bin_counts();
        let total: usize = counts.iter().product();
        (0..total).map(move |mut flat| {
            let mut idx = vec![0; counts.len()];
            for k in (0..counts.len()).rev() {
                idx[k] = flat % counts[k];
                flat /= counts[k];
            }
            idx
        })
    }

    /// Stable 64-bit FNV-1a digest of parameter names and bin values.
    pub fn fingerprint(&self) -> u64 {
        const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
        const PRIME: u64 = 0x0100_0000_01b3;
        let mut h = OFFSET;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for (spec, bins) in self.specs.iter().zip(&self.bins) {
            feed(spec.name.as_bytes());
            feed(&(bins.len() as u64).to_le_bytes());
            for v in bins {
                feed(&v.as_f64().to_bits().to_le_bytes());
            }
        }
        h
    }
}
