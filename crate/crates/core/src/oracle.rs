//! Exhaustive decoder for tiny instances.
//!
//! Every signal with at most `k_max` nonzeros on the alphabet grid is scored
//! by its mean l1 misfit against the noiseless predictions of the test
//! measurements `y0`. Only one representative per global phase class is
//! visited: the lowest-index entry has phase level 1.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabet::QuantizedSignal;
use crate::code_graph::CodeGraph;
use crate::error::{Error, Result};
use crate::hypothesis::l1_misfit;
use crate::measurement::{add_scaled, MeasurementSet, MeasurementSystem};

/// Largest hypothesis space the oracle will enumerate.
pub const MAX_HYPOTHESES: f64 = 1e7;

/// Residual gap below which two hypotheses count as tied.
pub const UNIQUE_GAP: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub best: QuantizedSignal,
    /// Mean over bins of the per-bin mean l1 misfit.
    pub residual: f64,
    /// The runner-up is worse by more than [`UNIQUE_GAP`].
    pub unique: bool,
    pub hypotheses: usize,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `sum_{k <= k_max} C(n, k) (L_m L_p)^k`.
pub fn hypothesis_space(n: usize, levels: usize, k_max: usize) -> f64 {
    (0..=k_max.min(n)).map(|k| binomial(n, k) * (levels as f64).powi(k as i32)).sum()
}

/// Advance `combo` to the next `k`-subset of `1..=n` in lexicographic order.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - (k - 1 - i) {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct Scorer<'a> {
    set: &'a MeasurementSet,
    graph: &'a CodeGraph,
    /// Test columns per bin, indexed like `graph.balls_in(bin)`.
    columns: Vec<Vec<Vec<Complex64>>>,
    /// Misfit of each bin under the zero signal, index 0 unused.
    baseline: Vec<f64>,
    baseline_total: f64,
}

impl Scorer<'_> {
    fn score(&self, entries: &[(usize, Complex64)], touched: &[usize]) -> f64 {
        let mut total = self.baseline_total;
        for &bin in touched {
            let y = &self.set.bin(bin).y0;
            let mut field = vec![Complex64::default(); y.len()];
            let balls = self.graph.balls_in(bin);
            for &(ball, x) in entries {
                if let Ok(slot) = balls.binary_search(&ball) {
                    add_scaled(&mut field, &self.columns[bin][slot], x);
                }
            }
            total += l1_misfit(y, &field) - self.baseline[bin];
        }
        total / self.graph.bins() as f64
    }
}

/// Exhaustive minimum-misfit search over signals with at most `k_max` nonzeros.
pub fn brute_force_decode(
    set: &MeasurementSet,
    graph: &CodeGraph,
    system: &MeasurementSystem,
    k_max: usize,
) -> Result<OracleResult> {
    let n = set.n;
    let alphabet = set.alphabet;
    if graph.n() != n || system.n() != n || set.bins.len() != graph.bins() {
        return Err(Error::param("measurements, graph and matrices disagree on n or M"));
    }
    let space = hypothesis_space(n, alphabet.nonzero_len(), k_max);
    if space > MAX_HYPOTHESES {
        return Err(Error::param(format!(
            "oracle search space {space:.3e} exceeds {MAX_HYPOTHESES:.0e}"
        )));
    }

    let columns: Vec<Vec<Vec<Complex64>>> = (0..=graph.bins())
        .map(|bin| {
            if bin == 0 {
                return Vec::new();
            }
            let test = system.for_bin(bin).test;
            graph.balls_in(bin).iter().map(|&b| test.column(b)).collect()
        })
        .collect();
    let baseline: Vec<f64> = std::iter::once(0.0)
        .chain(set.bins.iter().map(|b| b.y0.iter().map(|v| v.abs()).sum::<f64>() / b.y0.len() as f64))
        .collect();
    let scorer = Scorer {
        set,
        graph,
        columns,
        baseline_total: baseline.iter().sum(),
        baseline,
    };

    let (lm, lp) = (alphabet.magnitude_levels, alphabet.phase_levels);
    let mut best_levels: Vec<(usize, usize, usize)> = Vec::new();
    let mut best = scorer.score(&[], &[]);
    let mut runner_up = f64::INFINITY;
    let mut hypotheses = 1usize;

    for k in 1..=k_max.min(n) {
        let mut support: Vec<usize> = (1..=k).collect();
        loop {
            let mut touched: Vec<usize> = support.iter().flat_map(|&b| graph.bins_of(b).iter().copied()).collect();
            touched.sort_unstable();
            touched.dedup();
            // Level assignments in lexicographic order; the first ball keeps phase 1.
            let per_ball = lm * lp;
            let count = lm * per_ball.pow(k as u32 - 1);
            let mut digits = vec![(1usize, 1usize); k];
            for t in 0..count {
                let mut rest = t;
                for i in (1..k).rev() {
                    let d = rest % per_ball;
                    rest /= per_ball;
                    digits[i] = (d / lp + 1, d % lp + 1);
                }
                digits[0] = (rest + 1, 1);
                let entries: Vec<(usize, Complex64)> = support
                    .iter()
                    .zip(&digits)
                    .map(|(&b, &(u, v))| (b, alphabet.value(u, v)))
                    .collect();
                let score = scorer.score(&entries, &touched);
                hypotheses += 1;
                if score < best {
                    runner_up = best;
                    best = score;
                    best_levels = support.iter().zip(&digits).map(|(&b, &(u, v))| (b, u, v)).collect();
                } else if score < runner_up {
                    runner_up = score;
                }
            }
            if !next_combination(&mut support, n) {
                break;
            }
        }
    }

    Ok(OracleResult {
        best: QuantizedSignal::from_levels(n, alphabet, best_levels)?.canonical(),
        residual: best.max(0.0),
        unique: runner_up - best > UNIQUE_GAP,
        hypotheses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alphabet::{equal_up_to_global_phase, random_sparse_signal, AlphabetParams};
    use crate::measurement::{measure_all, NoiseModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn combinations_are_lexicographic() {
        let mut c = vec![1, 2];
        let mut all = vec![c.clone()];
        while next_combination(&mut c, 4) {
            all.push(c.clone());
        }
        assert_eq!(all, vec![vec![1, 2], vec![1, 3], vec![1, 4], vec![2, 3], vec![2, 4], vec![3, 4]]);
    }

    #[test]
    fn visits_one_representative_per_phase_class() {
        let alphabet = AlphabetParams::new(2, 4, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let graph = CodeGraph::generate(5, 4, 2, &mut rng).unwrap();
        let system = MeasurementSystem::almost_linear(10, 5, 0).unwrap();
        let truth = QuantizedSignal::zero(5, alphabet).unwrap();
        let set = measure_all(&truth, &graph, &system, &NoiseModel::noiseless(), 0).unwrap();
        let r = brute_force_decode(&set, &graph, &system, 2).unwrap();
        // 1 + 5 * 2 + C(5,2) * 2 * 8
        assert_eq!(r.hypotheses, 1 + 10 + 160);
        assert_eq!(hypothesis_space(5, 8, 2), 1.0 + 40.0 + 640.0);
    }

    #[test]
    fn single_sparse_instance_is_recovered_exactly() {
        let alphabet = AlphabetParams::new(3, 6, 1.0).unwrap();
        let graph = CodeGraph::generate(4, 3, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let system = MeasurementSystem::almost_linear(20, 4, 1).unwrap();
        let truth = QuantizedSignal::from_levels(4, alphabet, [(3, 2, 5)]).unwrap();
        let set = measure_all(&truth, &graph, &system, &NoiseModel::noiseless(), 0).unwrap();
        let r = brute_force_decode(&set, &graph, &system, 1).unwrap();
        assert!(r.residual < 1e-12);
        assert!(r.unique);
        assert!(equal_up_to_global_phase(&r.best, &truth, 1e-9).unwrap());
    }

    #[test]
    fn two_sparse_instances_match_truth() {
        // Two balls that never share a bin have an unidentifiable relative
        // phase; every other instance must be recovered exactly.
        let alphabet = AlphabetParams::new(2, 4, 1.0).unwrap();
        let mut identifiable = 0;
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let truth = random_sparse_signal(16, 2, alphabet, &mut rng).unwrap();
            let graph = CodeGraph::generate(16, 16, 3, &mut rng).unwrap();
            let system = MeasurementSystem::almost_linear(20, 16, seed).unwrap();
            let set = measure_all(&truth, &graph, &system, &NoiseModel::noiseless(), 0).unwrap();
            let r = brute_force_decode(&set, &graph, &system, 2).unwrap();
            assert!(r.residual < 1e-12);
            let support: Vec<usize> = truth.support().collect();
            let shared = graph.bins_of(support[0]).iter().any(|b| graph.contains(*b, support[1]));
            assert_eq!(r.unique, shared, "seed {seed}");
            if shared {
                identifiable += 1;
                assert!(equal_up_to_global_phase(&r.best, &truth, 1e-9).unwrap(), "seed {seed}");
            }
        }
        assert!(identifiable >= 5);
    }

    #[test]
    fn zero_measurements_give_zero_signal() {
        let alphabet = AlphabetParams::new(2, 4, 1.0).unwrap();
        let graph = CodeGraph::generate(8, 4, 2, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        let system = MeasurementSystem::almost_linear(12, 8, 2).unwrap();
        let truth = QuantizedSignal::zero(8, alphabet).unwrap();
        let set = measure_all(&truth, &graph, &system, &NoiseModel::noiseless(), 0).unwrap();
        let r = brute_force_decode(&set, &graph, &system, 2).unwrap();
        assert_eq!(r.best.sparsity(), 0);
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn oversized_search_is_refused() {
        let alphabet = AlphabetParams::new(3, 6, 1.0).unwrap();
        let graph = CodeGraph::generate(1000, 10, 2, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let system = MeasurementSystem::almost_linear(5, 1000, 3).unwrap();
        let truth = QuantizedSignal::zero(1000, alphabet).unwrap();
        let set = measure_all(&truth, &graph, &system, &NoiseModel::noiseless(), 0).unwrap();
        assert!(matches!(brute_force_decode(&set, &graph, &system, 3), Err(Error::Parameter(_))));
    }
}
