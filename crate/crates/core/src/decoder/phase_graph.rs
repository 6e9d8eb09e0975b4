//! Relative-phase graph over detected singletons.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// `phase(b) - phase(a) = shift (mod L_p)`, with `a < b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct PhaseEdge {
    pub a: usize,
    pub b: usize,
    pub shift: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Coloring {
    /// Ball to phase offset in `0..L_p`, root at 0.
    pub phases: BTreeMap<usize, usize>,
    pub dropped_edges: usize,
}

/// Color the largest connected component by breadth-first propagation.
///
/// Ties between components go to the one holding the smallest ball; the BFS
/// root is the component's smallest ball. A non-tree edge whose shift
/// disagrees with the assigned phases is dropped.
pub fn color_largest_component(nodes: &BTreeSet<usize>, edges: &[PhaseEdge], phase_levels: usize) -> Coloring {
    let mut adjacency: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    let mut sorted: Vec<PhaseEdge> = edges
        .iter()
        .copied()
        .filter(|e| nodes.contains(&e.a) && nodes.contains(&e.b) && e.a != e.b)
        .collect();
    sorted.sort();
    for (k, e) in sorted.iter().enumerate() {
        adjacency.entry(e.a).or_default().push((e.b, k));
        adjacency.entry(e.b).or_default().push((e.a, k));
    }

    let mut seen = BTreeSet::new();
    let mut best: Option<Vec<usize>> = None;
    for &start in nodes {
        if !seen.insert(start) {
            continue;
        }
        let mut component = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(node) = queue.pop_front() {
            for &(next, _) in adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
                if seen.insert(next) {
                    component.push(next);
                    queue.push_back(next);
                }
            }
        }
        if best.as_ref().is_none_or(|b| component.len() > b.len()) {
            best = Some(component);
        }
    }

    let mut phases = BTreeMap::new();
    let mut dropped_edges = 0;
    let Some(component) = best else {
        return Coloring { phases, dropped_edges };
    };
    let root = *component.iter().min().expect("components are nonempty");
    let mut used = vec![false; sorted.len()];
    phases.insert(root, 0);
    let mut queue = VecDeque::from([root]);
    while let Some(node) = queue.pop_front() {
        let here = phases[&node];
        for &(next, k) in adjacency.get(&node).map(Vec::as_slice).unwrap_or(&[]) {
            if used[k] {
                continue;
            }
            used[k] = true;
            let e = sorted[k];
            let implied = if node == e.a {
                (here + e.shift) % phase_levels
            } else {
                (here + phase_levels - e.shift % phase_levels) % phase_levels
            };
            match phases.get(&next) {
                None => {
                    phases.insert(next, implied);
                    queue.push_back(next);
                }
                Some(&p) if p != implied => dropped_edges += 1,
                Some(_) => {}
            }
        }
    }
    Coloring { phases, dropped_edges }
}
