use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::alphabet::AlphabetParams;
use crate::decoder::{AmbiguityPolicy, DecodeOptions};
use crate::error::{Error, Result};
use crate::hypothesis::{default_thresholds, TestThresholds};
use crate::measurement::{ceil_log2, MeasurementSystem, NoiseModel, Scheme};

/// JSON has no infinity literal, so SNR lists accept numbers and `"inf"`.
pub(crate) mod snr_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Snr {
        Number(f64),
        Text(String),
    }

    pub fn parse(text: &str) -> Option<f64> {
        match text.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "noiseless" => Some(f64::INFINITY),
            other => other.parse::<f64>().ok().filter(|v| v.is_finite()),
        }
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let out: Vec<Snr> = values
            .iter()
            .map(|&v| if v.is_infinite() { Snr::Text("inf".into()) } else { Snr::Number(v) })
            .collect();
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<Snr>::deserialize(d)?;
        raw.into_iter()
            .map(|v| match v {
                Snr::Number(x) => Ok(x),
                Snr::Text(t) => parse(&t).ok_or_else(|| serde::de::Error::custom(format!("bad SNR value {t:?}"))),
            })
            .collect()
    }
}

/// Knobs of one Monte Carlo experiment. Unset sizes follow the defaults
/// `P = 5 log n`, `Q = 2 log^2 n`, `M = 8 K` with `log = ceil(log2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scheme: Scheme,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: Option<usize>,
    #[serde(rename = "Q")]
    pub q: Option<usize>,
    pub d: usize,
    #[serde(rename = "M")]
    pub bins: Option<usize>,
    #[serde(rename = "L_m")]
    pub magnitude_levels: usize,
    #[serde(rename = "L_p")]
    pub phase_levels: usize,
    pub epsilon: f64,
    #[serde(with = "snr_list")]
    pub snr_db: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub t0: Option<f64>,
    pub t1: Option<f64>,
    pub max_iterations: usize,
    pub ambiguity: AmbiguityPolicy,
    /// When false every timing column is written as zero, making output
    /// byte-stable across runs.
    pub record_timing: bool,
    /// Worker threads for trials; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            scheme: Scheme::Sublinear,
            n: 1 << 12,
            k: 20,
            p: None,
            q: None,
            d: 15,
            bins: None,
            magnitude_levels: 3,
            phase_levels: 6,
            epsilon: 1.0,
            snr_db: vec![f64::INFINITY],
            trials: 100,
            seed: 0,
            t0: None,
            t1: None,
            max_iterations: DecodeOptions::default().max_iterations,
            ambiguity: AmbiguityPolicy::default(),
            record_timing: true,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        Ok(config)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn log_n(&self) -> usize {
        ceil_log2(self.n.max(2))
    }

    /// Test rows per bin.
    pub fn p(&self) -> usize {
        self.p.unwrap_or(5 * self.log_n())
    }

    /// Index rows per group; 0 for the almost-linear scheme.
    pub fn q(&self) -> usize {
        match self.scheme {
            Scheme::AlmostLinear => 0,
            Scheme::Sublinear => self.q.unwrap_or(2 * self.log_n().pow(2)),
        }
    }

    /// Number of index groups; 0 for the almost-linear scheme.
    pub fn r(&self) -> usize {
        match self.scheme {
            Scheme::AlmostLinear => 0,
            Scheme::Sublinear => self.log_n(),
        }
    }

    /// Bin count; `8 K`, raised to `d` so the graph exists.
    pub fn bins(&self) -> usize {
        self.bins.unwrap_or((8 * self.k).max(self.d))
    }

    /// Total measurements `M P` or `M (P + Q R)`.
    pub fn total_measurements(&self) -> usize {
        self.bins() * (self.p() + self.q() * self.r())
    }

    pub fn alphabet(&self) -> Result<AlphabetParams> {
        AlphabetParams::new(self.magnitude_levels, self.phase_levels, self.epsilon)
    }

    pub fn decode_options(&self) -> DecodeOptions {
        DecodeOptions {
            max_iterations: self.max_iterations,
            ambiguity: self.ambiguity,
            restrict_pending: false,
            expected_sparsity: Some(self.k),
        }
    }

    /// Overrides where given, the default policy otherwise.
    pub fn thresholds(&self, alphabet: &AlphabetParams, noise: &NoiseModel) -> Result<TestThresholds> {
        let defaults = default_thresholds(alphabet, noise);
        TestThresholds::new(self.t0.unwrap_or(defaults.t0), self.t1.unwrap_or(defaults.t1))
    }

    pub fn system(&self, test_seed: u64, index_seed: u64) -> Result<MeasurementSystem> {
        match self.scheme {
            Scheme::AlmostLinear => MeasurementSystem::almost_linear(self.p(), self.n, test_seed),
            Scheme::Sublinear => MeasurementSystem::sublinear(self.p(), self.q(), self.n, test_seed, index_seed),
        }
    }

    /// Field-level checks; every message names the offending field.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::param(msg));
        if self.n < 2 {
            return fail(format!("n: must be at least 2, got {}", self.n));
        }
        if self.k > self.n {
            return fail(format!("K: {} exceeds n = {}", self.k, self.n));
        }
        if self.p() == 0 {
            return fail("P: must be positive".into());
        }
        if self.scheme == Scheme::Sublinear && self.q() == 0 {
            return fail("Q: must be positive for the sublinear scheme".into());
        }
        if self.d == 0 {
            return fail("d: must be positive".into());
        }
        if self.d > self.bins() {
            return fail(format!("d: {} exceeds M = {}", self.d, self.bins()));
        }
        if self.max_iterations == 0 {
            return fail("max_iterations: must be at least 1".into());
        }
        if self.snr_db.is_empty() {
            return fail("snr_db: at least one SNR is required".into());
        }
        if let Some(bad) = self.snr_db.iter().find(|v| v.is_nan() || **v == f64::NEG_INFINITY) {
            return fail(format!("snr_db: invalid value {bad}"));
        }
        if self.k == 0 && self.snr_db.iter().any(|v| v.is_finite()) {
            return fail("snr_db: a finite SNR is undefined for K = 0".into());
        }
        if self.threads == Some(0) {
            return fail("threads: must be positive".into());
        }
        self.alphabet().map_err(|e| Error::param(format!("alphabet: {e}")))?;
        for (name, t) in [("t0", self.t0), ("t1", self.t1)] {
            if let Some(t) = t {
                if !(t.is_finite() && t > 0.0) {
                    return fail(format!("{name}: must be a positive finite number, got {t}"));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_experimental_protocol() {
        let c = ExperimentConfig {
            n: 1 << 20,
            k: 50,
            ..ExperimentConfig::default()
        };
        assert_eq!((c.p(), c.q(), c.r(), c.d, c.bins()), (100, 800, 20, 15, 400));
        assert_eq!((c.magnitude_levels, c.phase_levels, c.epsilon), (3, 6, 1.0));
        assert_eq!(c.total_measurements(), 400 * (100 + 800 * 20));
        let al = ExperimentConfig {
            scheme: Scheme::AlmostLinear,
            ..c
        };
        assert_eq!(al.total_measurements(), 400 * 100);
        assert_eq!((al.q(), al.r()), (0, 0));
    }

    #[test]
    fn json_round_trip_with_infinite_snr() {
        let c = ExperimentConfig {
            snr_db: vec![8.0, f64::INFINITY],
            ..ExperimentConfig::default()
        };
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"inf\""));
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), c);
        let partial = ExperimentConfig::from_json(r#"{"n": 1024, "K": 10, "snr_db": [20, "inf"]}"#).unwrap();
        assert_eq!(partial.n, 1024);
        assert_eq!(partial.snr_db, vec![20.0, f64::INFINITY]);
        assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn validation_names_fields() {
        let bad = ExperimentConfig {
            d: 500,
            bins: Some(100),
            ..ExperimentConfig::default()
        };
        let msg = bad.validate().unwrap_err().to_string();
        assert!(msg.contains("d:"), "{msg}");
        let bad = ExperimentConfig {
            k: 0,
            snr_db: vec![10.0],
            ..ExperimentConfig::default()
        };
        assert!(bad.validate().unwrap_err().to_string().contains("snr_db"));
        assert!(ExperimentConfig::default().validate().is_ok());
    }
}
