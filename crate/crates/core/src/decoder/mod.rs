//! Ball-coloring decoder.
//!
//! Stage 1 finds singleton bins. Stage 2 resolves relative phases on strong
//! doubletons and colors the largest connected component of the resulting
//! phase graph. Later stages peel resolvable multitons until a pass colors
//! nothing new or the stage budget runs out. Within a stage every bin is
//! evaluated against the state at the start of the stage; claims are merged
//! afterwards by majority vote.

mod bin_ops;
mod phase_graph;

use std::collections::{BTreeMap, BTreeSet};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::alphabet::{equal_up_to_global_phase, QuantizedSignal, PHASE_TOLERANCE};
use crate::code_graph::CodeGraph;
use crate::error::{Error, Result};
use crate::hypothesis::TestThresholds;
use crate::measurement::{MeasurementSet, MeasurementSystem, Scheme};

pub use bin_ops::{BinOutcome, BinTester, TestCounts};
pub use phase_graph::{color_largest_component, Coloring, PhaseEdge};

/// What to do when a bin step accepts more than one hypothesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbiguityPolicy {
    /// Act only on a unique accept.
    #[default]
    Unique,
    /// Take the accepted hypothesis with the smallest statistic; exact ties
    /// still yield no action.
    BestFit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeOptions {
    /// Upper bound on stages, counting singleton detection and phase
    /// resolution as the first two.
    pub max_iterations: usize,
    pub ambiguity: AmbiguityPolicy,
    /// Restrict detected-but-uncolored singletons to their known magnitude
    /// during multiton resolution.
    pub restrict_pending: bool,
    /// Known sparsity, used only for `fraction_recovered` and `full_success`
    /// when no ground truth is supplied.
    pub expected_sparsity: Option<usize>,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions {
            max_iterations: 100,
            ambiguity: AmbiguityPolicy::default(),
            restrict_pending: false,
            expected_sparsity: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DecodeDiagnostics {
    pub energy_tests: usize,
    pub index_tests: usize,
    /// Final per-bin energy tests of the assembled signal; not in `tests`.
    pub verification_tests: usize,
    pub singletons_found: usize,
    /// Balls claimed by several bins with a tied magnitude vote.
    pub claim_conflicts: usize,
    /// Multiton claims dropped because they broke a bin already complete.
    pub claims_rejected: usize,
    pub ambiguous_steps: usize,
    pub strong_doubletons: usize,
    pub edges_dropped: usize,
    pub component_size: usize,
    pub stages_executed: usize,
    pub bins_complete: usize,
    /// Every bin accepted the assembled signal.
    pub self_certified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub recovered: QuantizedSignal,
    pub fraction_recovered: f64,
    pub full_success: bool,
    /// Index of the last stage that changed the decoder state, at least 1.
    pub iterations: usize,
    /// Energy plus index tests spent on decoding.
    pub tests: usize,
    pub diagnostics: DecodeDiagnostics,
}

impl DecodeResult {
    /// Replace the self-assessed outcome with one scored against `truth`.
    ///
    /// `fraction_recovered` counts truth entries matched after the best grid
    /// rotation of the recovered signal.
    pub fn score_against(&mut self, truth: &QuantizedSignal) -> Result<()> {
        self.full_success = equal_up_to_global_phase(&self.recovered, truth, PHASE_TOLERANCE)?;
        let k = truth.sparsity();
        if k == 0 {
            self.fraction_recovered = if self.recovered.sparsity() == 0 { 1.0 } else { 0.0 };
            return Ok(());
        }
        let lp = truth.alphabet().phase_levels;
        let mut votes = vec![0usize; lp];
        for index in truth.support() {
            if let (Some((ut, vt)), Some((ur, vr))) = (truth.levels(index), self.recovered.levels(index)) {
                if ut == ur {
                    votes[(vt + lp - vr) % lp] += 1;
                }
            }
        }
        let matched = votes.into_iter().max().unwrap_or(0);
        self.fraction_recovered = matched as f64 / k as f64;
        Ok(())
    }
}

/// Per-bin colored count and evaluation bookkeeping.
struct ColorState {
    /// Ball to `(u, v)`.
    colored: BTreeMap<usize, (usize, usize)>,
    colored_in_bin: Vec<usize>,
    evaluated_at: Vec<Option<usize>>,
    complete: Vec<bool>,
}

impl ColorState {
    fn new(bins: usize) -> Self {
        ColorState {
            colored: BTreeMap::new(),
            colored_in_bin: vec![0; bins + 1],
            evaluated_at: vec![None; bins + 1],
            complete: vec![false; bins + 1],
        }
    }

    fn color(&mut self, graph: &CodeGraph, ball: usize, levels: (usize, usize)) {
        if self.colored.insert(ball, levels).is_none() {
            for &bin in graph.bins_of(ball) {
                self.colored_in_bin[bin] += 1;
            }
        }
    }

    /// Bins touching a colored ball, ascending.
    fn touched_bins(&self, graph: &CodeGraph) -> BTreeSet<usize> {
        self.colored.keys().flat_map(|&b| graph.bins_of(b).iter().copied()).collect()
    }
}

/// Majority vote per ball; ties leave the ball out.
fn merge_claims<T: Copy + Ord>(claims: BTreeMap<usize, Vec<T>>, conflicts: &mut usize) -> BTreeMap<usize, T> {
    let mut out = BTreeMap::new();
    for (ball, values) in claims {
        let mut tally: BTreeMap<T, usize> = BTreeMap::new();
        for v in values {
            *tally.entry(v).or_default() += 1;
        }
        let top = tally.values().copied().max().unwrap_or(0);
        let mut leaders = tally.into_iter().filter(|&(_, c)| c == top);
        match (leaders.next(), leaders.next()) {
            (Some((value, _)), None) => {
                out.insert(ball, value);
            }
            _ => *conflicts += 1,
        }
    }
    out
}

fn check_inputs(scheme: Scheme, set: &MeasurementSet, graph: &CodeGraph, system: &MeasurementSystem) -> Result<()> {
    if set.scheme != scheme || system.scheme() != scheme {
        return Err(Error::param(format!(
            "scheme {scheme} requested, measurements are {} and matrices are {}",
            set.scheme,
            system.scheme()
        )));
    }
    if set.n != graph.n() || set.n != system.n() {
        return Err(Error::param(format!(
            "dimension mismatch: measurements n = {}, graph n = {}, matrices n = {}",
            set.n,
            graph.n(),
            system.n()
        )));
    }
    if set.bins.len() != graph.bins() {
        return Err(Error::param(format!(
            "{} measured bins but the graph has {}",
            set.bins.len(),
            graph.bins()
        )));
    }
    set.alphabet.validate()?;
    let p = system.test.rows();
    let (q, r) = system.index.map_or((0, 0), |f| (f.rows(), f.groups()));
    for (k, bin) in set.bins.iter().enumerate() {
        let shape_ok = bin.y0.len() == p && bin.index.len() == r && bin.index.iter().all(|g| g.len() == q);
        if !shape_ok {
            return Err(Error::param(format!("bin {} does not match P = {p}, Q = {q}, R = {r}", k + 1)));
        }
    }
    Ok(())
}

/// Decode `set` with the `scheme` front-end.
pub fn decode(
    scheme: Scheme,
    set: &MeasurementSet,
    graph: &CodeGraph,
    system: &MeasurementSystem,
    thresholds: &TestThresholds,
    options: &DecodeOptions,
) -> Result<DecodeResult> {
    check_inputs(scheme, set, graph, system)?;
    if options.max_iterations == 0 {
        return Err(Error::param("max_iterations must be at least 1"));
    }
    let alphabet = set.alphabet;
    let bins = graph.bins();
    let mut tester = BinTester::new(set, system, graph, *thresholds, options.ambiguity);
    let mut diag = DecodeDiagnostics::default();
    let mut state = ColorState::new(bins);
    let mut last_productive = 1;
    let mut stage = 1;

    let mut claims: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for bin in 1..=bins {
        let outcome = match scheme {
            Scheme::AlmostLinear => tester.detect_singleton_almost_linear(bin),
            Scheme::Sublinear => tester.detect_singleton_sublinear(bin),
        };
        if let BinOutcome::Ball(ball, u, _) = outcome {
            claims.entry(ball).or_default().push(u);
        }
    }
    let found = merge_claims(claims, &mut diag.claim_conflicts);
    diag.singletons_found = found.len();

    if !found.is_empty() && options.max_iterations >= 2 {
        stage = 2;
        let mut per_bin: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &ball in found.keys() {
            for &bin in graph.bins_of(ball) {
                per_bin.entry(bin).or_default().push(ball);
            }
        }
        let mut edges = Vec::new();
        for (&bin, balls) in &per_bin {
            if let [a, b] = balls[..] {
                if let Some(v) = tester.resolve_strong_doubleton(bin, (a, found[&a]), (b, found[&b])) {
                    edges.push(PhaseEdge { a, b, shift: v - 1 });
                }
            }
        }
        diag.strong_doubletons = edges.len();
        let nodes: BTreeSet<usize> = found.keys().copied().collect();
        let coloring = color_largest_component(&nodes, &edges, alphabet.phase_levels);
        diag.edges_dropped = coloring.dropped_edges;
        diag.component_size = coloring.phases.len();
        for (&ball, &phase) in &coloring.phases {
            state.color(graph, ball, (found[&ball], phase + 1));
        }
        last_productive = 2;

        while stage < options.max_iterations {
            stage += 1;
            let value_of = |levels: (usize, usize)| alphabet.value(levels.0, levels.1);
            let mut claims: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
            for bin in state.touched_bins(graph) {
                let count = state.colored_in_bin[bin];
                if state.complete[bin] || state.evaluated_at[bin] == Some(count) {
                    continue;
                }
                state.evaluated_at[bin] = Some(count);
                let colored: Vec<(usize, Complex64)> = match scheme {
                    Scheme::AlmostLinear => graph
                        .balls_in(bin)
                        .iter()
                        .filter_map(|b| state.colored.get(b).map(|&l| (*b, value_of(l))))
                        .collect(),
                    Scheme::Sublinear => state
                        .colored
                        .iter()
                        .filter(|(&b, _)| graph.contains(bin, b))
                        .map(|(&b, &l)| (b, value_of(l)))
                        .collect(),
                };
                let is_colored = |b: usize| state.colored.contains_key(&b);
                let pending = |b: usize| if options.restrict_pending { found.get(&b).copied() } else { None };
                let outcome = match scheme {
                    Scheme::AlmostLinear => tester.resolve_multiton_almost_linear(bin, &colored, is_colored, pending),
                    Scheme::Sublinear => tester.resolve_multiton_sublinear(bin, &colored, is_colored, pending),
                };
                match outcome {
                    BinOutcome::Complete => {
                        state.complete[bin] = true;
                        diag.bins_complete += 1;
                    }
                    BinOutcome::Ball(ball, u, v) => claims.entry(ball).or_default().push((u, v)),
                    BinOutcome::Nothing | BinOutcome::Ambiguous => {}
                }
            }
            let merged = merge_claims(claims, &mut diag.claim_conflicts);
            // A claim must not break any bin already certified complete.
            let mut accepted = Vec::new();
            for (ball, levels) in merged {
                let mut consistent = true;
                for &bin in graph.bins_of(ball) {
                    if !state.complete[bin] {
                        continue;
                    }
                    let mut hypothesis: Vec<(usize, Complex64)> = state
                        .colored
                        .iter()
                        .filter(|(&b, _)| graph.contains(bin, b))
                        .map(|(&b, &l)| (b, value_of(l)))
                        .collect();
                    hypothesis.push((ball, value_of(levels)));
                    tester.counts.energy += 1;
                    if tester.bin_statistic(bin, &hypothesis) >= tester.t0() {
                        consistent = false;
                        break;
                    }
                }
                if consistent {
                    accepted.push((ball, levels));
                } else {
                    diag.claims_rejected += 1;
                }
            }
            if accepted.is_empty() {
                break;
            }
            for (ball, levels) in accepted {
                state.color(graph, ball, levels);
            }
            last_productive = stage;
            if options.expected_sparsity.is_some_and(|k| state.colored.len() >= k) {
                break;
            }
        }
    }
    diag.stages_executed = stage;

    let recovered =
        QuantizedSignal::from_levels(set.n, alphabet, state.colored.iter().map(|(&b, &(u, v))| (b, u, v)))?.canonical();

    // Self-certification: every bin must accept the assembled signal.
    let mut certified = true;
    for bin in 1..=bins {
        let hypothesis: Vec<(usize, Complex64)> = match scheme {
            Scheme::AlmostLinear => graph
                .balls_in(bin)
                .iter()
                .filter_map(|&b| recovered.get(b).map(|z| (b, z)))
                .collect(),
            Scheme::Sublinear => recovered.iter().filter(|&(b, _)| graph.contains(bin, b)).collect(),
        };
        diag.verification_tests += 1;
        if tester.bin_statistic(bin, &hypothesis) >= tester.t0() {
            certified = false;
        }
    }
    diag.self_certified = certified;

    let counts = tester.counts;
    diag.energy_tests = counts.energy;
    diag.index_tests = counts.index;
    diag.ambiguous_steps = counts.ambiguous;

    let colored = recovered.sparsity();
    let (fraction_recovered, full_success) = match options.expected_sparsity {
        Some(0) => (if colored == 0 { 1.0 } else { 0.0 }, certified && colored == 0),
        Some(k) => ((colored as f64 / k as f64).min(1.0), certified && colored == k),
        None => {
            let known = found.keys().chain(state.colored.keys()).collect::<BTreeSet<_>>().len();
            let fraction = if known == 0 { 1.0 } else { colored as f64 / known as f64 };
            (fraction, certified)
        }
    };

    Ok(DecodeResult {
        recovered,
        fraction_recovered,
        full_success,
        iterations: last_productive.max(1),
        tests: counts.energy + counts.index,
        diagnostics: diag,
    })
}
