//! The d-left-regular balls-and-bins graph (code matrix `H`).

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bipartite graph assigning each of `n` balls to `d` distinct bins out of `M`.
///
/// Both adjacency directions are stored sorted and 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphJson", into = "GraphJson")]
pub struct CodeGraph {
    n: usize,
    bins: usize,
    degree: usize,
    ball_to_bins: Vec<Vec<usize>>,
    bin_to_balls: Vec<Vec<usize>>,
}

impl CodeGraph {
    /// Each ball independently picks a uniform `d`-subset of the `M` bins.
    pub fn generate<R: Rng + ?Sized>(n: usize, bins: usize, degree: usize, rng: &mut R) -> Result<Self> {
        check_dims(n, bins, degree)?;
        // Partial Fisher-Yates over a scratch permutation, undone after each
        // ball so the draw costs O(d).
        let mut perm: Vec<usize> = (1..=bins).collect();
        let mut swaps = Vec::with_capacity(degree);
        let mut ball_to_bins = Vec::with_capacity(n);
        for _ in 0..n {
            swaps.clear();
            for i in 0..degree {
                let j = rng.random_range(i..bins);
                perm.swap(i, j);
                swaps.push(j);
            }
            let mut chosen = perm[..degree].to_vec();
            chosen.sort_unstable();
            ball_to_bins.push(chosen);
            for (i, &j) in swaps.iter().enumerate().rev() {
                perm.swap(i, j);
            }
        }
        Ok(Self::assemble(n, bins, degree, ball_to_bins))
    }

    /// Build from explicit per-ball bin lists (1-based).
    pub fn from_ball_to_bins(n: usize, bins: usize, degree: usize, ball_to_bins: Vec<Vec<usize>>) -> Result<Self> {
        check_dims(n, bins, degree)?;
        if ball_to_bins.len() != n {
            return Err(Error::param(format!(
                "expected {n} ball adjacency lists, got {}",
                ball_to_bins.len()
            )));
        }
        let mut sorted = Vec::with_capacity(n);
        for (ball, list) in ball_to_bins.into_iter().enumerate() {
            let set: BTreeSet<usize> = list.iter().copied().collect();
            if set.len() != degree || list.len() != degree {
                return Err(Error::param(format!("ball {} must have exactly {degree} distinct bins", ball + 1)));
            }
            if set.iter().any(|&b| b == 0 || b > bins) {
                return Err(Error::param(format!("ball {} has a bin outside [1, {bins}]", ball + 1)));
            }
            sorted.push(set.into_iter().collect());
        }
        Ok(Self::assemble(n, bins, degree, sorted))
    }

    fn assemble(n: usize, bins: usize, degree: usize, ball_to_bins: Vec<Vec<usize>>) -> Self {
        let bin_to_balls = transpose(bins, &ball_to_bins);
        CodeGraph {
            n,
            bins,
            degree,
            ball_to_bins,
            bin_to_balls,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of bins `M`.
    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Sorted bins of `ball` (1-based).
    pub fn bins_of(&self, ball: usize) -> &[usize] {
        &self.ball_to_bins[ball - 1]
    }

    /// Sorted balls in `bin` (1-based).
    pub fn balls_in(&self, bin: usize) -> &[usize] {
        &self.bin_to_balls[bin - 1]
    }

    /// Membership test in O(d), independent of bin occupancy.
    pub fn contains(&self, bin: usize, ball: usize) -> bool {
        ball >= 1 && ball <= self.n && self.bins_of(ball).binary_search(&bin).is_ok()
    }

    /// Dense 0/1 row `h_bin` of the code matrix.
    pub fn code_row(&self, bin: usize) -> Vec<u8> {
        let mut row = vec![0u8; self.n];
        for &ball in self.balls_in(bin) {
            row[ball - 1] = 1;
        }
        row
    }

    pub fn ball_to_bins(&self) -> &[Vec<usize>] {
        &self.ball_to_bins
    }

    pub fn bin_to_balls(&self) -> &[Vec<usize>] {
        &self.bin_to_balls
    }
}

fn check_dims(n: usize, bins: usize, degree: usize) -> Result<()> {
    if n == 0 || bins == 0 || degree == 0 {
        return Err(Error::param("n, M and d must all be positive"));
    }
    if degree > bins {
        return Err(Error::param(format!("left degree d = {degree} exceeds bin count M = {bins}")));
    }
    Ok(())
}

fn transpose(bins: usize, ball_to_bins: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut bin_to_balls = vec![Vec::new(); bins];
    for (ball, list) in ball_to_bins.iter().enumerate() {
        for &bin in list {
            bin_to_balls[bin - 1].push(ball + 1);
        }
    }
    bin_to_balls
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    n: usize,
    #[serde(rename = "M")]
    bins: usize,
    d: usize,
    ball_to_bins: Vec<Vec<usize>>,
}

impl TryFrom<GraphJson> for CodeGraph {
    type Error = Error;

    fn try_from(json: GraphJson) -> Result<Self> {
        CodeGraph::from_ball_to_bins(json.n, json.bins, json.d, json.ball_to_bins)
    }
}

impl From<CodeGraph> for GraphJson {
    fn from(graph: CodeGraph) -> Self {
        GraphJson {
            n: graph.n,
            bins: graph.bins,
            d: graph.degree,
            ball_to_bins: graph.ball_to_bins,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinKind {
    Zeroton,
    Singleton(usize),
    Doubleton(usize, usize),
    /// Three or more active balls.
    Multiton(usize),
}

/// Ground-truth view of one bin: its active balls and the uncolored subset.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinClass {
    pub active: Vec<usize>,
    pub uncolored_active: Vec<usize>,
}

impl BinClass {
    pub fn kind(&self) -> BinKind {
        match self.active.as_slice() {
            [] => BinKind::Zeroton,
            [a] => BinKind::Singleton(*a),
            [a, b] => BinKind::Doubleton(*a, *b),
            more => BinKind::Multiton(more.len()),
        }
    }

    /// `T`, the number of active balls.
    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// `T_s`, the number of active balls not yet colored.
    pub fn uncolored_count(&self) -> usize {
        self.uncolored_active.len()
    }
}

/// Classify `bin` against a known active set. Test and oracle use only.
///
/// Panics if `bin` is outside `1..=M`.
pub fn classify_bin(graph: &CodeGraph, bin: usize, active: &BTreeSet<usize>, colored: &BTreeSet<usize>) -> BinClass {
    assert!(bin >= 1 && bin <= graph.bins(), "bin {bin} outside [1, {}]", graph.bins());
    let active: Vec<usize> = graph.balls_in(bin).iter().copied().filter(|b| active.contains(b)).collect();
    let uncolored_active = active.iter().copied().filter(|b| !colored.contains(b)).collect();
    BinClass {
        active,
        uncolored_active,
    }
}
