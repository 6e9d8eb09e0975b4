use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alphabet::{random_sparse_signal, QuantizedSignal};
use crate::code_graph::CodeGraph;
use crate::decoder::decode;
use crate::error::Result;
use crate::measurement::{measure_all, sigma_for_snr, snr_of, MeasurementSet, MeasurementSystem, NoiseModel, Scheme};
use crate::rng::{stream_rng, TrialSeeds};

use super::config::ExperimentConfig;

/// Timed regions shorter than this are repeated.
const MIN_TIMED: Duration = Duration::from_millis(1);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub scheme: Scheme,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub bins: usize,
    pub snr_db_target: f64,
    pub realized_snr_db: f64,
    pub sigma: f64,
    pub full_success: bool,
    pub fraction_recovered: f64,
    pub decode_ms: f64,
    pub measure_ms: f64,
    pub tests_performed: usize,
    pub total_measurements: usize,
}

/// One randomly drawn problem instance, before noise.
#[derive(Clone, Debug)]
pub struct TrialInstance {
    pub seeds: TrialSeeds,
    pub signal: QuantizedSignal,
    pub graph: CodeGraph,
    pub system: MeasurementSystem,
    pub clean: MeasurementSet,
    pub measure_ms: f64,
}

/// Mean wall time per call of `f`, repeating until at least [`MIN_TIMED`].
fn timed<T>(mut f: impl FnMut() -> Result<T>) -> Result<(T, f64)> {
    let start = Instant::now();
    let mut out = f()?;
    let mut reps = 1u32;
    while start.elapsed() < MIN_TIMED {
        out = f()?;
        reps += 1;
    }
    Ok((out, start.elapsed().as_secs_f64() * 1e3 / reps as f64))
}

/// Draw signal, graph and matrices for `trial` and take noiseless measurements.
pub fn draw_instance(config: &ExperimentConfig, trial: usize) -> Result<TrialInstance> {
    let seeds = TrialSeeds::derive(config.seed, trial as u64);
    let alphabet = config.alphabet()?;
    let signal = random_sparse_signal(config.n, config.k, alphabet, &mut stream_rng(seeds.signal, 0))?;
    let graph = CodeGraph::generate(config.n, config.bins(), config.d, &mut stream_rng(seeds.graph, 0))?;
    let system = config.system(seeds.test_matrix, seeds.index_matrix)?;
    let (clean, measure_ms) =
        timed(|| measure_all(&signal, &graph, &system, &NoiseModel::noiseless(), seeds.noise))?;
    Ok(TrialInstance {
        seeds,
        signal,
        graph,
        system,
        clean,
        measure_ms,
    })
}

/// Noise, decode and score one instance at every configured SNR.
///
/// All SNR points share the instance and the noise stream, so they differ
/// only by the noise scale.
pub fn run_trial(config: &ExperimentConfig, trial: usize) -> Result<Vec<TrialRecord>> {
    let instance = draw_instance(config, trial)?;
    let alphabet = config.alphabet()?;
    let options = config.decode_options();
    let mut records = Vec::with_capacity(config.snr_db.len());
    for &snr in &config.snr_db {
        let sigma = sigma_for_snr(snr, &instance.clean)?;
        let noise = NoiseModel::gaussian(sigma)?;
        let (noisy, noise_ms) = timed(|| Ok(instance.clean.with_noise(noise, instance.seeds.noise)))?;
        let thresholds = config.thresholds(&alphabet, &noise)?;
        let (mut result, decode_ms) = timed(|| {
            decode(config.scheme, &noisy, &instance.graph, &instance.system, &thresholds, &options)
        })?;
        result.score_against(&instance.signal)?;
        let (decode_ms, measure_ms) = if config.record_timing {
            (decode_ms, instance.measure_ms + noise_ms)
        } else {
            (0.0, 0.0)
        };
        records.push(TrialRecord {
            trial,
            scheme: config.scheme,
            n: config.n,
            k: config.k,
            p: config.p(),
            q: config.q(),
            r: config.r(),
            d: config.d,
            bins: config.bins(),
            snr_db_target: snr,
            realized_snr_db: snr_of(&noisy),
            sigma,
            full_success: result.full_success,
            fraction_recovered: result.fraction_recovered,
            decode_ms,
            measure_ms,
            tests_performed: result.tests,
            total_measurements: noisy.total_measurements(),
        });
    }
    Ok(records)
}

/// Aggregate over the trials of one `(config, SNR)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scheme: Scheme,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "P")]
    pub p: usize,
    #[serde(rename = "Q")]
    pub q: usize,
    #[serde(rename = "R")]
    pub r: usize,
    pub d: usize,
    #[serde(rename = "M")]
    pub bins: usize,
    #[serde(rename = "L_m")]
    pub magnitude_levels: usize,
    #[serde(rename = "L_p")]
    pub phase_levels: usize,
    pub epsilon: f64,
    pub snr_db_target: f64,
    pub snr_db_realized_mean: f64,
    pub trials: usize,
    pub success_rate: f64,
    pub mean_fraction_recovered: f64,
    pub mean_decode_ms: f64,
    pub mean_measure_ms: f64,
    pub total_measurements: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    /// Sorted by trial, then by position in the SNR list.
    pub records: Vec<TrialRecord>,
    /// One row per SNR, in configuration order.
    pub summary: Vec<CellSummary>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

pub fn summarize(config: &ExperimentConfig, records: &[TrialRecord]) -> Vec<CellSummary> {
    config
        .snr_db
        .iter()
        .enumerate()
        .map(|(slot, &snr)| {
            let cell: Vec<&TrialRecord> = records.iter().skip(slot).step_by(config.snr_db.len()).collect();
            CellSummary {
                scheme: config.scheme,
                n: config.n,
                k: config.k,
                p: config.p(),
                q: config.q(),
                r: config.r(),
                d: config.d,
                bins: config.bins(),
                magnitude_levels: config.magnitude_levels,
                phase_levels: config.phase_levels,
                epsilon: config.epsilon,
                snr_db_target: snr,
                snr_db_realized_mean: mean(cell.iter().map(|r| r.realized_snr_db)),
                trials: cell.len(),
                success_rate: mean(cell.iter().map(|r| r.full_success as u8 as f64)),
                mean_fraction_recovered: mean(cell.iter().map(|r| r.fraction_recovered)),
                mean_decode_ms: mean(cell.iter().map(|r| r.decode_ms)),
                mean_measure_ms: mean(cell.iter().map(|r| r.measure_ms)),
                total_measurements: config.total_measurements(),
                seed: config.seed,
            }
        })
        .collect()
}

/// Run every trial of `config` and aggregate per SNR.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let work = || -> Result<Vec<Vec<TrialRecord>>> {
        (0..config.trials).into_par_iter().map(|t| run_trial(config, t)).collect()
    };
    let per_trial = match config.threads {
        Some(1) => (0..config.trials).map(|t| run_trial(config, t)).collect::<Result<Vec<_>>>()?,
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| crate::error::Error::param(format!("threads: {e}")))?
            .install(work)?,
        None => work()?,
    };
    let records: Vec<TrialRecord> = per_trial.into_iter().flatten().collect();
    let summary = summarize(config, &records);
    Ok(ExperimentOutput { records, summary })
}

/// Cross product over `n`, `K` and `Q / log^2 n`; empty axes keep the base value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub base: ExperimentConfig,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default, rename = "K")]
    pub k: Vec<usize>,
    #[serde(default)]
    pub q_multipliers: Vec<f64>,
}

impl SweepGrid {
    pub fn cells(&self) -> Vec<ExperimentConfig> {
        let ns = if self.n.is_empty() { vec![self.base.n] } else { self.n.clone() };
        let ks = if self.k.is_empty() { vec![self.base.k] } else { self.k.clone() };
        let mut out = Vec::new();
        for &n in &ns {
            for &k in &ks {
                let cell = ExperimentConfig {
                    n,
                    k,
                    ..self.base.clone()
                };
                if self.q_multipliers.is_empty() {
                    out.push(cell);
                    continue;
                }
                let log = crate::measurement::ceil_log2(n.max(2)) as f64;
                for &mult in &self.q_multipliers {
                    out.push(ExperimentConfig {
                        q: Some((mult * log * log).round() as usize),
                        ..cell.clone()
                    });
                }
            }
        }
        out
    }
}

/// Run every grid cell; rows are in grid order, SNR innermost.
pub fn sweep(grid: &SweepGrid) -> Result<Vec<CellSummary>> {
    let cells = grid.cells();
    for cell in &cells {
        cell.validate()?;
    }
    let mut rows = Vec::new();
    for cell in &cells {
        rows.extend(run_experiment(cell)?.summary);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(scheme: Scheme) -> ExperimentConfig {
        ExperimentConfig {
            scheme,
            n: 256,
            k: 4,
            trials: 6,
            seed: 3,
            snr_db: vec![f64::INFINITY, 30.0],
            record_timing: false,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn zero_trials_yield_no_records() {
        let c = ExperimentConfig {
            trials: 0,
            ..small(Scheme::Sublinear)
        };
        let out = run_experiment(&c).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.summary.len(), 2);
        assert_eq!(out.summary[0].trials, 0);
    }

    #[test]
    fn measurement_counts_follow_closed_forms() {
        for scheme in [Scheme::AlmostLinear, Scheme::Sublinear] {
            let c = small(scheme);
            let out = run_experiment(&c).unwrap();
            let expected = match scheme {
                Scheme::AlmostLinear => c.bins() * c.p(),
                Scheme::Sublinear => c.bins() * (c.p() + c.q() * c.r()),
            };
            assert!(out.records.iter().all(|r| r.total_measurements == expected));
            assert_eq!(out.summary[0].total_measurements, expected);
        }
    }

    #[test]
    fn runs_are_reproducible_and_thread_independent() {
        let c = small(Scheme::Sublinear);
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&ExperimentConfig {
            threads: Some(1),
            ..c.clone()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.iter().map(|r| r.trial).collect::<Vec<_>>(), vec![0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5]);
    }

    #[test]
    fn noiseless_cells_report_infinite_snr() {
        let out = run_experiment(&small(Scheme::AlmostLinear)).unwrap();
        assert_eq!(out.summary[0].snr_db_realized_mean, f64::INFINITY);
        assert!((out.summary[1].snr_db_realized_mean - 30.0).abs() < 1.5);
    }

    #[test]
    fn single_cell_sweep_matches_experiment() {
        let c = small(Scheme::Sublinear);
        let grid = SweepGrid {
            base: c.clone(),
            n: vec![],
            k: vec![],
            q_multipliers: vec![],
        };
        assert_eq!(sweep(&grid).unwrap(), run_experiment(&c).unwrap().summary);
    }

    #[test]
    fn grid_cells_cover_the_cross_product() {
        let grid = SweepGrid {
            base: small(Scheme::Sublinear),
            n: vec![256, 1024],
            k: vec![2, 4, 8],
            q_multipliers: vec![1.0, 1.5, 2.0],
        };
        let cells = grid.cells();
        assert_eq!(cells.len(), 18);
        assert_eq!(cells[0].q(), 64);
        assert_eq!(cells[1].q(), 96);
        assert_eq!(cells.last().unwrap().q(), 200);
    }
}
