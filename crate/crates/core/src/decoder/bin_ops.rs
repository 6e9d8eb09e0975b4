//! Per-bin guess-and-check primitives shared by both decoder front-ends.

use std::collections::HashMap;
use std::rc::Rc;

use num_complex::Complex64;

use crate::alphabet::AlphabetParams;
use crate::code_graph::CodeGraph;
use crate::hypothesis::{decode_index_bits, l1_misfit, IndexDecode, TestThresholds};
use crate::measurement::{add_scaled, MeasurementSet, MeasurementSystem};

use super::AmbiguityPolicy;

/// Result of scanning one bin for a single new ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOutcome {
    /// No hypothesis accepted.
    Nothing,
    /// More than one hypothesis accepted and the policy declined to choose.
    Ambiguous,
    /// The colored part alone explains the bin.
    Complete,
    /// `(ball, u, v)`; `v` is 1 for a fresh singleton.
    Ball(usize, usize, usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TestCounts {
    pub energy: usize,
    pub index: usize,
    pub ambiguous: usize,
}

/// Keeps the accepted hypothesis with the smallest statistic.
struct Selection<H> {
    accepted: usize,
    best: Option<(f64, H)>,
    tied: bool,
}

impl<H: Copy> Selection<H> {
    fn new() -> Self {
        Selection {
            accepted: 0,
            best: None,
            tied: false,
        }
    }

    fn offer(&mut self, statistic: f64, t0: f64, hypothesis: H) {
        if statistic >= t0 {
            return;
        }
        self.accepted += 1;
        match &self.best {
            Some((s, _)) if statistic > *s => {}
            Some((s, _)) if statistic == *s => self.tied = true,
            _ => {
                self.best = Some((statistic, hypothesis));
                self.tied = false;
            }
        }
    }

    fn finish(self, policy: AmbiguityPolicy, counts: &mut TestCounts) -> Option<Option<H>> {
        let picked = match (self.accepted, policy) {
            (0, _) => return Some(None),
            (1, _) => self.best.map(|(_, h)| h),
            (_, AmbiguityPolicy::Unique) => None,
            (_, AmbiguityPolicy::BestFit) if self.tied => None,
            (_, AmbiguityPolicy::BestFit) => self.best.map(|(_, h)| h),
        };
        match picked {
            Some(h) => Some(Some(h)),
            None => {
                counts.ambiguous += 1;
                None
            }
        }
    }
}

/// Residual bookkeeping for a bin against its colored part `x_c`.
struct ColoredField {
    bin: usize,
    /// `A0 x_c`, one entry per test row.
    field: Vec<Complex64>,
    /// `y0 - |A0 x_c|^2`.
    residual: Vec<f64>,
    /// `sum |residual|`.
    total: f64,
}

/// Energy and index tests on individual bins, with cached matrix columns.
pub struct BinTester<'a> {
    set: &'a MeasurementSet,
    system: &'a MeasurementSystem,
    graph: &'a CodeGraph,
    alphabet: AlphabetParams,
    thresholds: TestThresholds,
    policy: AmbiguityPolicy,
    /// Per-bin matrices and their columns, keyed by bin and `(bin, ball)`.
    bin_systems: HashMap<usize, MeasurementSystem>,
    test_columns: HashMap<(usize, usize), Rc<[Complex64]>>,
    index_columns: HashMap<(usize, usize), Rc<[Complex64]>>,
    pub counts: TestCounts,
}

impl<'a> BinTester<'a> {
    pub fn new(
        set: &'a MeasurementSet,
        system: &'a MeasurementSystem,
        graph: &'a CodeGraph,
        thresholds: TestThresholds,
        policy: AmbiguityPolicy,
    ) -> Self {
        BinTester {
            set,
            system,
            graph,
            alphabet: set.alphabet,
            thresholds,
            policy,
            bin_systems: HashMap::new(),
            test_columns: HashMap::new(),
            index_columns: HashMap::new(),
            counts: TestCounts::default(),
        }
    }

    fn bin_system(&mut self, bin: usize) -> MeasurementSystem {
        let system = self.system;
        *self.bin_systems.entry(bin).or_insert_with(|| system.for_bin(bin))
    }

    fn test_column(&mut self, bin: usize, ball: usize) -> Rc<[Complex64]> {
        if let Some(column) = self.test_columns.get(&(bin, ball)) {
            return column.clone();
        }
        let column: Rc<[Complex64]> = self.bin_system(bin).test.column(ball).into();
        self.test_columns.insert((bin, ball), column.clone());
        column
    }

    fn index_column(&mut self, bin: usize, ball: usize) -> Rc<[Complex64]> {
        if let Some(column) = self.index_columns.get(&(bin, ball)) {
            return column.clone();
        }
        let family = self.bin_system(bin).index.expect("index columns exist only for the sublinear scheme");
        let column: Rc<[Complex64]> = family.f0_column(ball).into();
        self.index_columns.insert((bin, ball), column.clone());
        column
    }

    fn colored_field(&mut self, bin: usize, colored: &[(usize, Complex64)]) -> ColoredField {
        let y = &self.set.bin(bin).y0;
        let mut field = vec![Complex64::default(); y.len()];
        for &(ball, x) in colored {
            let column = self.test_column(bin, ball);
            add_scaled(&mut field, &column, x);
        }
        let residual: Vec<f64> = y.iter().zip(&field).map(|(&yi, f)| yi - f.norm_sqr()).collect();
        let total = residual.iter().map(|r| r.abs()).sum();
        ColoredField { bin, field, residual, total }
    }

    /// Offer `x_c + z e_ball` for every `z` in `values`, using the expansion
    /// `|f + z a|^2 = |f|^2 + |z|^2 + 2 Re(conj(f) a z)` on rows where `|a| = 1`.
    fn offer_extensions(
        &mut self,
        base: &ColoredField,
        ball: usize,
        values: impl Iterator<Item = (usize, usize)>,
        selection: &mut Selection<BinOutcome>,
    ) {
        let column = self.test_column(base.bin, ball);
        let p = base.residual.len() as f64;
        let mut rest = base.total;
        let mut rows: Vec<(f64, Complex64)> = Vec::with_capacity(column.len());
        for ((&a, f), &r) in column.iter().zip(&base.field).zip(&base.residual) {
            if a != Complex64::default() {
                rest -= r.abs();
                rows.push((r, f.conj() * a));
            }
        }
        for (u, v) in values {
            let z = self.alphabet.value(u, v);
            let z2 = z.norm_sqr();
            let mut sum = rest;
            for &(r, h) in &rows {
                sum += (r - z2 - 2.0 * (h.re * z.re - h.im * z.im)).abs();
            }
            self.counts.energy += 1;
            selection.offer(sum / p, self.thresholds.t0, BinOutcome::Ball(ball, u, v));
        }
    }

    fn conclude(&mut self, selection: Selection<BinOutcome>) -> BinOutcome {
        match selection.finish(self.policy, &mut self.counts) {
            Some(Some(h)) => h,
            Some(None) => BinOutcome::Nothing,
            None => BinOutcome::Ambiguous,
        }
    }

    fn magnitudes(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.alphabet.magnitude_levels
    }

    /// Offer `x_c` itself as `outcome`.
    fn offer_base(&mut self, base: &ColoredField, outcome: BinOutcome, selection: &mut Selection<BinOutcome>) {
        self.counts.energy += 1;
        selection.offer(base.total / base.residual.len() as f64, self.thresholds.t0, outcome);
    }

    /// Test `u eps e_j` for every ball `j` of the bin and every magnitude,
    /// against the zeroton hypothesis.
    pub fn detect_singleton_almost_linear(&mut self, bin: usize) -> BinOutcome {
        let base = self.colored_field(bin, &[]);
        let mut selection = Selection::new();
        self.offer_base(&base, BinOutcome::Nothing, &mut selection);
        let graph = self.graph;
        for &ball in graph.balls_in(bin) {
            let us = self.magnitudes();
            self.offer_extensions(&base, ball, us.map(|u| (u, 1)), &mut selection);
        }
        self.conclude(selection)
    }

    /// Read the index of the single uncolored ball from the index groups.
    ///
    /// Returns `None` when the bits fall outside `[n]`, name a ball not hashed
    /// to this bin, or name a colored ball.
    pub fn find_index_sublinear(
        &mut self,
        bin: usize,
        colored: &[(usize, Complex64)],
        is_colored: impl Fn(usize) -> bool,
    ) -> Option<usize> {
        let family = *self.system.index.as_ref().expect("sublinear scheme");
        let columns: Vec<(usize, Complex64, Rc<[Complex64]>)> =
            colored.iter().map(|&(ball, x)| (ball, x, self.index_column(bin, ball))).collect();
        let groups = &self.set.bin(bin).index;
        let mut bits = Vec::with_capacity(groups.len());
        let mut field = vec![Complex64::default(); family.rows()];
        for (j, group) in groups.iter().enumerate() {
            field.iter_mut().for_each(|f| *f = Complex64::default());
            for (ball, x, column) in &columns {
                if family.binary().bit(j + 1, *ball) {
                    add_scaled(&mut field, column, *x);
                }
            }
            let mean = group.iter().zip(&field).map(|(&y, f)| y - f.norm_sqr()).sum::<f64>() / group.len() as f64;
            self.counts.index += 1;
            bits.push(mean.abs() >= self.thresholds.t1);
        }
        match decode_index_bits(&bits, self.set.n) {
            IndexDecode::Index(ball) if self.graph.contains(bin, ball) && !is_colored(ball) => Some(ball),
            _ => None,
        }
    }

    /// Index search followed by magnitude tests in increasing `u`, against
    /// the zeroton hypothesis. A zeroton reads all-zero bits, naming ball 1.
    pub fn detect_singleton_sublinear(&mut self, bin: usize) -> BinOutcome {
        let Some(ball) = self.find_index_sublinear(bin, &[], |_| false) else {
            return BinOutcome::Nothing;
        };
        let base = self.colored_field(bin, &[]);
        let mut selection = Selection::new();
        self.offer_base(&base, BinOutcome::Nothing, &mut selection);
        let us = self.magnitudes();
        self.offer_extensions(&base, ball, us.map(|u| (u, 1)), &mut selection);
        self.conclude(selection)
    }

    /// Relative phase level of `b` against `a` (at phase level 1) in a bin
    /// holding exactly these two detected singletons.
    pub fn resolve_strong_doubleton(&mut self, bin: usize, a: (usize, usize), b: (usize, usize)) -> Option<usize> {
        let lp = self.alphabet.phase_levels;
        if lp == 1 {
            return Some(1);
        }
        let anchor = [(a.0, self.alphabet.value(a.1, 1))];
        let base = self.colored_field(bin, &anchor);
        let mut selection = Selection::new();
        self.offer_extensions(&base, b.0, (1..=lp).map(|v| (b.1, v)), &mut selection);
        match self.conclude(selection) {
            BinOutcome::Ball(_, _, v) => Some(v),
            _ => None,
        }
    }

    /// Guess-and-check over every uncolored ball of the bin, every magnitude
    /// and every phase, plus the hypothesis that `x_c` already explains the bin.
    ///
    /// `pending` restricts a ball to a known magnitude.
    pub fn resolve_multiton_almost_linear(
        &mut self,
        bin: usize,
        colored: &[(usize, Complex64)],
        is_colored: impl Fn(usize) -> bool,
        pending: impl Fn(usize) -> Option<usize>,
    ) -> BinOutcome {
        let base = self.colored_field(bin, colored);
        let mut selection = Selection::new();
        self.offer_base(&base, BinOutcome::Complete, &mut selection);
        let graph = self.graph;
        for &ball in graph.balls_in(bin) {
            if is_colored(ball) {
                continue;
            }
            let candidates = self.candidates(pending(ball));
            self.offer_extensions(&base, ball, candidates.into_iter(), &mut selection);
        }
        self.conclude(selection)
    }

    /// Index search against `x_c`, then `L_m L_p` energy tests on the found
    /// ball, plus the hypothesis that `x_c` already explains the bin. An
    /// explained bin reads all-zero index bits, which name ball 1, so the
    /// complete hypothesis competes with every extension.
    pub fn resolve_multiton_sublinear(
        &mut self,
        bin: usize,
        colored: &[(usize, Complex64)],
        is_colored: impl Fn(usize) -> bool,
        pending: impl Fn(usize) -> Option<usize>,
    ) -> BinOutcome {
        let found = self.find_index_sublinear(bin, colored, is_colored);
        let base = self.colored_field(bin, colored);
        let mut selection = Selection::new();
        self.offer_base(&base, BinOutcome::Complete, &mut selection);
        if let Some(ball) = found {
            let candidates = self.candidates(pending(ball));
            self.offer_extensions(&base, ball, candidates.into_iter(), &mut selection);
        }
        self.conclude(selection)
    }

    fn candidates(&self, known: Option<usize>) -> Vec<(usize, usize)> {
        let lp = self.alphabet.phase_levels;
        match known {
            Some(u) => (1..=lp).map(|v| (u, v)).collect(),
            None => self.magnitudes().flat_map(|u| (1..=lp).map(move |v| (u, v))).collect(),
        }
    }

    /// Energy statistic of `hypothesis` on the bin, for final verification.
    pub fn bin_statistic(&mut self, bin: usize, hypothesis: &[(usize, Complex64)]) -> f64 {
        let y = &self.set.bin(bin).y0;
        let mut field = vec![Complex64::default(); y.len()];
        for &(ball, x) in hypothesis {
            let column = self.test_column(bin, ball);
            add_scaled(&mut field, &column, x);
        }
        l1_misfit(y, &field)
    }

    pub fn t0(&self) -> f64 {
        self.thresholds.t0
    }

    #[cfg(test)]
    pub(crate) fn extension_statistic(&mut self, bin: usize, colored: &[(usize, Complex64)], ball: usize, u: usize, v: usize) -> f64 {
        let base = self.colored_field(bin, colored);
        let saved = self.thresholds.t0;
        self.thresholds.t0 = f64::INFINITY;
        let mut selection = Selection::new();
        self.offer_extensions(&base, ball, std::iter::once((u, v)), &mut selection);
        self.thresholds.t0 = saved;
        selection.best.expect("one hypothesis offered").0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn select(stats: &[f64], policy: AmbiguityPolicy) -> (Option<Option<usize>>, usize) {
        let mut selection = Selection::new();
        for (h, &s) in stats.iter().enumerate() {
            selection.offer(s, 1.0, h);
        }
        let mut counts = TestCounts::default();
        (selection.finish(policy, &mut counts), counts.ambiguous)
    }

    #[test]
    fn ambiguity_policies() {
        use AmbiguityPolicy::{BestFit, Unique};
        assert_eq!(select(&[2.0, 3.0], Unique), (Some(None), 0));
        assert_eq!(select(&[2.0, 0.5, 3.0], Unique), (Some(Some(1)), 0));
        assert_eq!(select(&[0.7, 0.5], Unique), (None, 1));
        assert_eq!(select(&[0.7, 0.5, 0.9], BestFit), (Some(Some(1)), 0));
        assert_eq!(select(&[0.5, 0.5], BestFit), (None, 1));
        // A strictly better late offer clears an earlier tie.
        assert_eq!(select(&[0.5, 0.5, 0.25], BestFit), (Some(Some(2)), 0));
        // The threshold is strict.
        assert_eq!(select(&[1.0], Unique), (Some(None), 0));
    }
}
