//! Per-bin measurement design and noisy quadratic measurements.
//!
//! Every bin draws its own `A0` and `F0`, seeded from master seeds by bin
//! number. Matrices are never stored densely. Column `l` is regenerated on
//! demand from its own ChaCha stream, so a bin only ever touches the columns
//! of balls it needs and a persisted [`MeasurementSet`] records seeds instead
//! of matrices.
//!
//! A measurement row `r` acting on a bin signal `x` yields `|r . x|^2`; the
//! conjugation convention of the row does not matter for the distributions
//! used here.

use std::f64::consts::{FRAC_2_PI, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::alphabet::{AlphabetParams, QuantizedSignal};
use crate::code_graph::CodeGraph;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream_rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    AlmostLinear,
    Sublinear,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::AlmostLinear => "almost_linear",
            Scheme::Sublinear => "sublinear",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "almost_linear" | "almost-linear" => Ok(Scheme::AlmostLinear),
            "sublinear" => Ok(Scheme::Sublinear),
            other => Err(Error::param(format!("unknown scheme {other:?}"))),
        }
    }
}

/// `ceil(log2 n)` for `n >= 2`.
pub fn ceil_log2(n: usize) -> usize {
    debug_assert!(n >= 2);
    ((n - 1).ilog2() + 1) as usize
}

/// The `P x n` test matrix: i.i.d. entries, zero with probability 1/2 and a
/// uniform unit phasor otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TestMatrix {
    rows: usize,
    n: usize,
    seed: u64,
}

pub fn sample_test_matrix(rows: usize, n: usize, seed: u64) -> Result<TestMatrix> {
    if rows == 0 {
        return Err(Error::param("test matrix needs P >= 1 rows"));
    }
    if n == 0 {
        return Err(Error::param("test matrix needs n >= 1 columns"));
    }
    Ok(TestMatrix { rows, n, seed })
}

impl TestMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Column of `ball` (1-based), length `P`.
    pub fn column(&self, ball: usize) -> Vec<Complex64> {
        debug_assert!(ball >= 1 && ball <= self.n);
        let mut rng = stream_rng(self.seed, ball as u64);
        (0..self.rows)
            .map(|_| {
                if rng.random::<bool>() {
                    Complex64::from_polar(1.0, rng.random_range(0.0..TAU))
                } else {
                    Complex64::default()
                }
            })
            .collect()
    }

    /// Dense row-major copy; only sensible for small `n`.
    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        let columns: Vec<_> = (1..=self.n).map(|l| self.column(l)).collect();
        (0..self.rows)
            .map(|i| columns.iter().map(|c| c[i]).collect())
            .collect()
    }

    pub fn restrict(&self, balls: &[usize]) -> RestrictedRows {
        RestrictedRows {
            rows: self.rows,
            support: balls.to_vec(),
            columns: balls.iter().map(|&b| self.column(b)).collect(),
        }
    }
}

/// `R x n` matrix whose column `i` is the big-endian binary form of `i - 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BinaryIndexMatrix {
    n: usize,
    bits: usize,
}

pub fn binary_rep_matrix(n: usize) -> Result<BinaryIndexMatrix> {
    if n < 2 {
        return Err(Error::param(format!("binary index matrix needs n >= 2, got {n}")));
    }
    Ok(BinaryIndexMatrix { n, bits: ceil_log2(n) })
}

impl BinaryIndexMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    /// `R = ceil(log2 n)`.
    pub fn bits(&self) -> usize {
        self.bits
    }

    /// Entry `B[row][ball]`; `row` 1 is the most significant bit.
    pub fn bit(&self, row: usize, ball: usize) -> bool {
        debug_assert!(row >= 1 && row <= self.bits);
        ((ball - 1) >> (self.bits - row)) & 1 == 1
    }

    pub fn column(&self, ball: usize) -> Vec<bool> {
        (1..=self.bits).map(|row| self.bit(row, ball)).collect()
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        (1..=self.bits)
            .map(|row| (1..=self.n).map(|ball| self.bit(row, ball) as u8).collect())
            .collect()
    }
}

/// `F0` (`Q x n`, unit-modulus entries) and its masks `F_j = F0 diag(b_j)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IndexMatrixFamily {
    rows: usize,
    seed: u64,
    binary: BinaryIndexMatrix,
}

pub fn sample_index_matrices(rows: usize, n: usize, seed: u64) -> Result<IndexMatrixFamily> {
    if rows == 0 {
        return Err(Error::param("index matrices need Q >= 1 rows"));
    }
    Ok(IndexMatrixFamily {
        rows,
        seed,
        binary: binary_rep_matrix(n)?,
    })
}

impl IndexMatrixFamily {
    /// `Q`.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// `R`, the number of masked index matrices.
    pub fn groups(&self) -> usize {
        self.binary.bits()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn binary(&self) -> &BinaryIndexMatrix {
        &self.binary
    }

    /// Column of `F0` for `ball`, length `Q`.
    pub fn f0_column(&self, ball: usize) -> Vec<Complex64> {
        let mut rng = stream_rng(self.seed, ball as u64);
        (0..self.rows)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..TAU)))
            .collect()
    }

    /// Column of `F_group` for `ball`: the `F0` column, or zeros where the bit is clear.
    pub fn masked_column(&self, group: usize, ball: usize) -> Vec<Complex64> {
        if self.binary.bit(group, ball) {
            self.f0_column(ball)
        } else {
            vec![Complex64::default(); self.rows]
        }
    }

    pub fn restrict_group(&self, group: usize, balls: &[usize]) -> RestrictedRows {
        RestrictedRows {
            rows: self.rows,
            support: balls.to_vec(),
            columns: balls.iter().map(|&b| self.masked_column(group, b)).collect(),
        }
    }
}

/// Matrix rows restricted to a handful of columns.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedRows {
    rows: usize,
    support: Vec<usize>,
    columns: Vec<Vec<Complex64>>,
}

impl RestrictedRows {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn column(&self, ball: usize) -> Option<&[Complex64]> {
        self.support.iter().position(|&b| b == ball).map(|k| self.columns[k].as_slice())
    }

    /// `r_i . x` for every row `i`.
    pub fn field(&self, hypothesis: &[(usize, Complex64)]) -> Result<Vec<Complex64>> {
        let mut field = vec![Complex64::default(); self.rows];
        for &(ball, coef) in hypothesis {
            let column = self
                .column(ball)
                .ok_or_else(|| Error::param(format!("hypothesis ball {ball} outside the supplied rows")))?;
            add_scaled(&mut field, column, coef);
        }
        Ok(field)
    }
}

#[inline]
pub(crate) fn add_scaled(field: &mut [Complex64], column: &[Complex64], coef: Complex64) {
    for (f, &c) in field.iter_mut().zip(column) {
        *f += c * coef;
    }
}

/// `y - A(x x^H)` evaluated row by row as `y_i - |r_i . x|^2`.
pub fn quadratic_map_residual(
    y: &[f64],
    rows: &RestrictedRows,
    hypothesis: &[(usize, Complex64)],
) -> Result<Vec<f64>> {
    if y.len() != rows.rows() {
        return Err(Error::param(format!("{} measurements for {} rows", y.len(), rows.rows())));
    }
    let field = rows.field(hypothesis)?;
    Ok(y.iter().zip(&field).map(|(&yi, f)| yi - f.norm_sqr()).collect())
}

/// Additive measurement noise. Only zero-mean Gaussian noise is modeled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
#[non_exhaustive]
pub enum NoiseModel {
    Gaussian { sigma: f64 },
}

impl NoiseModel {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::param(format!("noise sigma must be finite and nonnegative, got {sigma}")));
        }
        Ok(NoiseModel::Gaussian { sigma })
    }

    pub fn noiseless() -> Self {
        NoiseModel::Gaussian { sigma: 0.0 }
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma,
        }
    }

    /// `E|w|`.
    pub fn mean_abs(&self) -> f64 {
        match *self {
            NoiseModel::Gaussian { sigma } => sigma * FRAC_2_PI.sqrt(),
        }
    }

    pub fn variance(&self) -> f64 {
        self.sigma().powi(2)
    }

    fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match *self {
            NoiseModel::Gaussian { sigma } => {
                for w in out {
                    let z: f64 = rng.sample(StandardNormal);
                    *w = sigma * z;
                }
            }
        }
    }
}

/// Measurements of one bin. Noise vectors are kept for SNR accounting only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinMeasurements {
    pub y0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub index: Vec<Vec<f64>>,
    pub w0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w_index: Vec<Vec<f64>>,
}

impl BinMeasurements {
    fn values(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let test = self.y0.iter().copied().zip(self.w0.iter().copied());
        let index = self
            .index
            .iter()
            .zip(&self.w_index)
            .flat_map(|(y, w)| y.iter().copied().zip(w.iter().copied()));
        test.chain(index)
    }

    pub fn len(&self) -> usize {
        self.y0.len() + self.index.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn apply_noise(&mut self, noise: &NoiseModel, seed: u64, bin: usize) {
        for (y, w) in self.y0.iter_mut().zip(self.w0.iter_mut()) {
            *y -= *w;
        }
        for (ys, ws) in self.index.iter_mut().zip(self.w_index.iter_mut()) {
            for (y, w) in ys.iter_mut().zip(ws.iter_mut()) {
                *y -= *w;
            }
        }
        if noise.sigma() == 0.0 {
            self.w0.iter_mut().for_each(|w| *w = 0.0);
            self.w_index.iter_mut().flatten().for_each(|w| *w = 0.0);
            return;
        }
        let mut rng = stream_rng(seed, bin as u64);
        noise.fill(&mut rng, &mut self.w0);
        for ws in &mut self.w_index {
            noise.fill(&mut rng, ws);
        }
        for (y, w) in self.y0.iter_mut().zip(&self.w0) {
            *y += *w;
        }
        for (ys, ws) in self.index.iter_mut().zip(&self.w_index) {
            for (y, w) in ys.iter_mut().zip(ws) {
                *y += *w;
            }
        }
    }
}

/// Master test matrix plus, for the sublinear scheme, the master index
/// family. Every bin measures with its own independent draw, see
/// [`MeasurementSystem::for_bin`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasurementSystem {
    pub test: TestMatrix,
    pub index: Option<IndexMatrixFamily>,
}

impl MeasurementSystem {
    pub fn almost_linear(p: usize, n: usize, test_seed: u64) -> Result<Self> {
        Ok(MeasurementSystem {
            test: sample_test_matrix(p, n, test_seed)?,
            index: None,
        })
    }

    pub fn sublinear(p: usize, q: usize, n: usize, test_seed: u64, index_seed: u64) -> Result<Self> {
        Ok(MeasurementSystem {
            test: sample_test_matrix(p, n, test_seed)?,
            index: Some(sample_index_matrices(q, n, index_seed)?),
        })
    }

    /// Matrices of `bin`: same shapes, seeds derived from the master seeds.
    pub fn for_bin(&self, bin: usize) -> MeasurementSystem {
        MeasurementSystem {
            test: TestMatrix {
                seed: derive_seed(self.test.seed, bin as u64),
                ..self.test
            },
            index: self.index.map(|f| IndexMatrixFamily {
                seed: derive_seed(f.seed, bin as u64),
                ..f
            }),
        }
    }

    pub fn scheme(&self) -> Scheme {
        if self.index.is_some() {
            Scheme::Sublinear
        } else {
            Scheme::AlmostLinear
        }
    }

    pub fn n(&self) -> usize {
        self.test.n()
    }

    /// Measurements per bin: `P` or `P + Q R`.
    pub fn per_bin(&self) -> usize {
        self.test.rows() + self.index.map_or(0, |f| f.rows() * f.groups())
    }

    /// Total measurement count `m` over `bins` bins.
    pub fn total_measurements(&self, bins: usize) -> usize {
        bins * self.per_bin()
    }
}

/// All measurements of one instance, with the seeds needed to regenerate the
/// matrices. Bins are stored in order `1..=M`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub scheme: Scheme,
    pub n: usize,
    pub alphabet: AlphabetParams,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub test_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_seed: Option<u64>,
    pub noise: NoiseModel,
    pub noise_seed: u64,
    pub bins: Vec<BinMeasurements>,
}

impl MeasurementSet {
    /// Regenerate the matrices this set was measured with.
    pub fn system(&self) -> Result<MeasurementSystem> {
        match (self.scheme, self.index_seed) {
            (Scheme::AlmostLinear, _) => MeasurementSystem::almost_linear(self.p, self.n, self.test_seed),
            (Scheme::Sublinear, Some(seed)) => MeasurementSystem::sublinear(self.p, self.q, self.n, self.test_seed, seed),
            (Scheme::Sublinear, None) => Err(Error::param("sublinear measurement set lacks an index seed")),
        }
    }

    pub fn bin(&self, bin: usize) -> &BinMeasurements {
        &self.bins[bin - 1]
    }

    pub fn total_measurements(&self) -> usize {
        self.bins.iter().map(BinMeasurements::len).sum()
    }

    /// `sum ||y_j - w_j||^2` over all bins and groups.
    pub fn clean_energy(&self) -> f64 {
        self.bins
            .iter()
            .flat_map(BinMeasurements::values)
            .map(|(y, w)| (y - w).powi(2))
            .sum()
    }

    pub fn noise_energy(&self) -> f64 {
        self.bins
            .iter()
            .flat_map(BinMeasurements::values)
            .map(|(_, w)| w * w)
            .sum()
    }

    /// Same clean measurements with fresh noise from `noise`, stream per bin.
    pub fn with_noise(&self, noise: NoiseModel, noise_seed: u64) -> MeasurementSet {
        let mut out = self.clone();
        out.noise = noise;
        out.noise_seed = noise_seed;
        for (k, bin) in out.bins.iter_mut().enumerate() {
            bin.apply_noise(&noise, noise_seed, k + 1);
        }
        out
    }
}

/// Noisy measurements of a single bin.
pub fn measure_bin(
    signal: &QuantizedSignal,
    graph: &CodeGraph,
    bin: usize,
    system: &MeasurementSystem,
    noise: &NoiseModel,
    noise_seed: u64,
) -> Result<BinMeasurements> {
    if bin == 0 || bin > graph.bins() {
        return Err(Error::param(format!("bin {bin} outside [1, {}]", graph.bins())));
    }
    let active: Vec<(usize, Complex64)> = signal.iter().filter(|&(ball, _)| graph.contains(bin, ball)).collect();
    let system = system.for_bin(bin);

    let p = system.test.rows();
    let mut field = vec![Complex64::default(); p];
    for &(ball, x) in &active {
        add_scaled(&mut field, &system.test.column(ball), x);
    }
    let y0: Vec<f64> = field.iter().map(|f| f.norm_sqr()).collect();

    let mut index = Vec::new();
    if let Some(family) = &system.index {
        let q = family.rows();
        let columns: Vec<_> = active.iter().map(|&(ball, x)| (ball, x, family.f0_column(ball))).collect();
        for group in 1..=family.groups() {
            let mut field = vec![Complex64::default(); q];
            for (ball, x, column) in &columns {
                if family.binary().bit(group, *ball) {
                    add_scaled(&mut field, column, *x);
                }
            }
            index.push(field.iter().map(|f| f.norm_sqr()).collect::<Vec<f64>>());
        }
    }

    let mut out = BinMeasurements {
        w0: vec![0.0; y0.len()],
        w_index: index.iter().map(|g| vec![0.0; g.len()]).collect(),
        y0,
        index,
    };
    out.apply_noise(noise, noise_seed, bin);
    Ok(out)
}

/// Measure every bin of the instance.
pub fn measure_all(
    signal: &QuantizedSignal,
    graph: &CodeGraph,
    system: &MeasurementSystem,
    noise: &NoiseModel,
    noise_seed: u64,
) -> Result<MeasurementSet> {
    if signal.n() != graph.n() || signal.n() != system.n() {
        return Err(Error::param(format!(
            "dimension mismatch: signal {}, graph {}, matrices {}",
            signal.n(),
            graph.n(),
            system.n()
        )));
    }
    let bins = (1..=graph.bins())
        .map(|bin| measure_bin(signal, graph, bin, system, noise, noise_seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(MeasurementSet {
        scheme: system.scheme(),
        n: signal.n(),
        alphabet: *signal.alphabet(),
        p: system.test.rows(),
        q: system.index.map_or(0, |f| f.rows()),
        r: system.index.map_or(0, |f| f.groups()),
        test_seed: system.test.seed(),
        index_seed: system.index.map(|f| f.seed()),
        noise: *noise,
        noise_seed,
        bins,
    })
}

/// Noise level whose expected energy `m sigma^2` hits `target_snr_db` for a
/// clean measurement energy `energy`.
pub fn sigma_for_energy(target_snr_db: f64, energy: f64, m: usize) -> Result<f64> {
    if target_snr_db == f64::INFINITY {
        return Ok(0.0);
    }
    if m == 0 {
        return Err(Error::param("SNR calibration needs at least one measurement"));
    }
    if target_snr_db.is_nan() {
        return Err(Error::param("target SNR is NaN"));
    }
    if energy <= 0.0 {
        return Err(Error::UndefinedSnr);
    }
    Ok((energy / (m as f64 * 10f64.powf(target_snr_db / 10.0))).sqrt())
}

/// [`sigma_for_energy`] applied to the clean part of `noiseless`.
pub fn sigma_for_snr(target_snr_db: f64, noiseless: &MeasurementSet) -> Result<f64> {
    sigma_for_energy(target_snr_db, noiseless.clean_energy(), noiseless.total_measurements())
}

/// Realized SNR in dB; `+inf` when the recorded noise is identically zero.
pub fn snr_of(measurements: &MeasurementSet) -> f64 {
    let noise = measurements.noise_energy();
    if noise == 0.0 {
        return f64::INFINITY;
    }
    10.0 * (measurements.clean_energy() / noise).log10()
}
