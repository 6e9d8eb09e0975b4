//! Energy and index tests.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabet::AlphabetParams;
use crate::error::{Error, Result};
use crate::measurement::{quadratic_map_residual, NoiseModel, RestrictedRows};

/// Thresholds for the energy test (`t0`) and the index test (`t1`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestThresholds {
    pub t0: f64,
    pub t1: f64,
}

impl TestThresholds {
    pub fn new(t0: f64, t1: f64) -> Result<Self> {
        for (name, t) in [("t0", t0), ("t1", t1)] {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::param(format!("{name} must be a positive finite number, got {t}")));
            }
        }
        Ok(TestThresholds { t0, t1 })
    }

    /// Check `t1 < eps^2 / 2` and `t0 > E|w|`.
    pub fn validate_for(&self, alphabet: &AlphabetParams, noise: &NoiseModel) -> Result<()> {
        let half = alphabet.epsilon.powi(2) / 2.0;
        if self.t1 >= half {
            return Err(Error::param(format!("t1 = {} must lie below eps^2/2 = {half}", self.t1)));
        }
        if self.t0 <= noise.mean_abs() {
            return Err(Error::param(format!(
                "t0 = {} must exceed the mean noise magnitude {}",
                self.t0,
                noise.mean_abs()
            )));
        }
        Ok(())
    }
}

/// `t1 = eps^2/4` and `t0 = sigma sqrt(2/pi) + eps^2/4`.
pub fn default_thresholds(alphabet: &AlphabetParams, noise: &NoiseModel) -> TestThresholds {
    let quarter = alphabet.epsilon.powi(2) / 4.0;
    TestThresholds {
        t0: noise.mean_abs() + quarter,
        t1: quarter,
    }
}

/// Mean absolute misfit `(1/P) sum_i |y_i - |field_i|^2|`.
#[inline]
pub(crate) fn l1_misfit(y: &[f64], field: &[Complex64]) -> f64 {
    debug_assert_eq!(y.len(), field.len());
    let total: f64 = y.iter().zip(field).map(|(&yi, f)| (yi - f.norm_sqr()).abs()).sum();
    total / y.len() as f64
}

/// `(1/P) ||y0 - A(x x^H)||_1`.
pub fn energy_statistic(y0: &[f64], rows: &RestrictedRows, hypothesis: &[(usize, Complex64)]) -> Result<f64> {
    let residual = quadratic_map_residual(y0, rows, hypothesis)?;
    Ok(residual.iter().map(|r| r.abs()).sum::<f64>() / residual.len() as f64)
}

/// Accept `hypothesis` when its energy statistic is below `t0`.
pub fn energy_test(y0: &[f64], rows: &RestrictedRows, hypothesis: &[(usize, Complex64)], t0: f64) -> Result<bool> {
    Ok(energy_statistic(y0, rows, hypothesis)? < t0)
}

/// Signed mean of one residual index group.
pub fn index_statistic(group: &[f64]) -> f64 {
    if group.is_empty() {
        return 0.0;
    }
    group.iter().sum::<f64>() / group.len() as f64
}

/// Bit 0 when `|mean| < t1`, bit 1 otherwise.
pub fn index_test(group: &[f64], t1: f64) -> bool {
    index_statistic(group).abs() >= t1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IndexDecode {
    Index(usize),
    /// The bits spell `value` with `value + 1 > n`.
    OutOfRange(usize),
}

/// Read `bits` most significant first and map value `v` to ball `v + 1`.
pub fn decode_index_bits(bits: &[bool], n: usize) -> IndexDecode {
    let value = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    if value >= n {
        IndexDecode::OutOfRange(value)
    } else {
        IndexDecode::Index(value + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::sample_test_matrix;
    use proptest::prelude::*;

    fn unit() -> AlphabetParams {
        AlphabetParams::new(3, 6, 1.0).unwrap()
    }

    #[test]
    fn default_threshold_examples() {
        let t = default_thresholds(&unit(), &NoiseModel::noiseless());
        assert_eq!((t.t0, t.t1), (0.25, 0.25));
        let t = default_thresholds(&unit(), &NoiseModel::gaussian(1.0).unwrap());
        assert!((t.t0 - 1.0479).abs() < 1e-4, "{}", t.t0);
        let t = default_thresholds(&AlphabetParams::new(3, 6, 2.0).unwrap(), &NoiseModel::noiseless());
        assert_eq!(t.t1, 1.0);
        assert!(t.validate_for(&AlphabetParams::new(3, 6, 2.0).unwrap(), &NoiseModel::noiseless()).is_ok());
    }

    #[test]
    fn threshold_validation() {
        assert!(TestThresholds::new(0.0, 0.1).is_err());
        assert!(TestThresholds::new(0.1, f64::NAN).is_err());
        let t = TestThresholds::new(0.3, 0.5).unwrap();
        assert!(t.validate_for(&unit(), &NoiseModel::noiseless()).is_err());
        let t = TestThresholds::new(0.3, 0.2).unwrap();
        assert!(t.validate_for(&unit(), &NoiseModel::gaussian(1.0).unwrap()).is_err());
    }

    #[test]
    fn index_examples() {
        assert!(!index_test(&[0.0; 8], 0.25));
        assert!(index_test(&[1.0; 8], 0.25));
        assert!(index_test(&[-1.0; 8], 0.25));
        // Signed mean, not mean of magnitudes.
        assert!(!index_test(&[1.0, -1.0, 1.0, -1.0], 0.25));
        assert_eq!(decode_index_bits(&[true, false], 4), IndexDecode::Index(3));
        assert_eq!(decode_index_bits(&[false, false, false], 5), IndexDecode::Index(1));
        assert_eq!(decode_index_bits(&[true, true, true], 5), IndexDecode::OutOfRange(7));
        assert_eq!(decode_index_bits(&[true, false, false], 5), IndexDecode::Index(5));
    }

    #[test]
    fn true_hypothesis_has_zero_statistic() {
        let a = sample_test_matrix(60, 3, 1).unwrap();
        let rows = a.restrict(&[1, 3]);
        let x = [(1, unit().value(2, 3)), (3, unit().value(1, 6))];
        let y: Vec<f64> = rows.field(&x).unwrap().iter().map(|f| f.norm_sqr()).collect();
        assert!(energy_statistic(&y, &rows, &x).unwrap() < 1e-12);
        assert!(energy_test(&y, &rows, &x, 0.25).unwrap());
    }

    /// Lower tail `P(Bin(trials, 1/2) <= k)`.
    fn binomial_half_cdf(trials: u64, k: u64) -> f64 {
        let mut term = 0.5f64.powi(trials as i32);
        let mut total = term;
        for j in 1..=k {
            term *= (trials - j + 1) as f64 / j as f64;
            total += term;
        }
        total
    }

    #[test]
    fn wrong_singleton_rejects_at_binomial_rate() {
        // x = e1, hypothesis e2: each term |a1|^2 - |a2|^2 is nonzero with
        // probability 1/2, so a false accept needs fewer than 15 of 60.
        let bound = binomial_half_cdf(60, 14);
        assert!(bound < 5e-5, "{bound}");
        let trials = 10_000;
        let mut accepts = 0;
        for seed in 0..trials {
            let a = sample_test_matrix(60, 2, seed).unwrap();
            let rows = a.restrict(&[1, 2]);
            let y: Vec<f64> = rows.column(1).unwrap().iter().map(|z| z.norm_sqr()).collect();
            let stat = energy_statistic(&y, &rows, &[(2, Complex64::new(1.0, 0.0))]).unwrap();
            accepts += (stat < 0.25) as usize;
        }
        // Expected count is below 0.5; allow a generous Poisson margin.
        assert!(accepts <= 4, "{accepts} false accepts");
    }

    #[test]
    fn zeroton_noise_only_accepts_empty_hypothesis() {
        use rand::Rng;
        use rand_distr::StandardNormal;
        let noise = NoiseModel::gaussian(0.5).unwrap();
        let t0 = default_thresholds(&unit(), &noise).t0;
        let a = sample_test_matrix(200, 1, 0).unwrap();
        let rows = a.restrict(&[]);
        let mut rng = crate::rng::stream_rng(4, 0);
        let mut accepts = 0;
        for _ in 0..200 {
            let y: Vec<f64> = (0..200).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
            accepts += energy_test(&y, &rows, &[], t0).unwrap() as usize;
        }
        assert_eq!(accepts, 200);
    }

    proptest! {
        #[test]
        fn energy_test_is_monotone_in_t0(seed in any::<u64>(), t0 in 0.01f64..3.0, dt in 0.0f64..2.0, u in 1usize..=3, v in 1usize..=6) {
            let a = sample_test_matrix(30, 2, seed).unwrap();
            let rows = a.restrict(&[1, 2]);
            let y: Vec<f64> = rows.column(1).unwrap().iter().map(|z| 1.3 * z.norm_sqr()).collect();
            let h = [(2, unit().value(u, v))];
            if energy_test(&y, &rows, &h, t0).unwrap() {
                prop_assert!(energy_test(&y, &rows, &h, t0 + dt).unwrap());
            }
        }

        #[test]
        fn index_test_is_monotone_in_t1(group in proptest::collection::vec(-3.0f64..3.0, 1..20), t1 in 0.01f64..2.0, dt in 0.0f64..2.0) {
            if !index_test(&group, t1) {
                prop_assert!(!index_test(&group, t1 + dt));
            }
        }

        #[test]
        fn energy_statistic_is_phase_invariant(seed in any::<u64>(), theta in 0.0f64..std::f64::consts::TAU) {
            let a = sample_test_matrix(40, 3, seed).unwrap();
            let rows = a.restrict(&[1, 2, 3]);
            let y: Vec<f64> = rows.column(3).unwrap().iter().map(|z| 2.0 * z.norm_sqr()).collect();
            let h = [(1, unit().value(1, 2)), (2, unit().value(3, 5))];
            let rot = Complex64::from_polar(1.0, theta);
            let hr: Vec<_> = h.iter().map(|&(b, z)| (b, z * rot)).collect();
            let s = energy_statistic(&y, &rows, &h).unwrap();
            let sr = energy_statistic(&y, &rows, &hr).unwrap();
            prop_assert!((s - sr).abs() < 1e-12);
            prop_assert_eq!(s < 0.25, sr < 0.25);
        }
    }
}
