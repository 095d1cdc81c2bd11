//! Effective distances on a travel network.
//!
//! A directed edge with transition probability p gets length 1 - ln p, so
//! lengths are at least 1 and shrink toward it as travel gets likelier.
//! Distances are shortest-path sums over the directed graph, then
//! symmetrized by averaging the two directions. The result feeds the
//! embedding pipeline as an ordinary dissimilarity matrix.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::model::types::{DissimilarityData, PairMask};

/// Directed travel graph with per-edge transition probabilities.
///
/// Probabilities lie in (0, 1], self-edges are rejected, and each node's
/// outgoing probabilities sum to at most 1 (within rounding).
#[derive(Clone, Debug)]
pub struct TravelNetwork {
    labels: Vec<String>,
    /// adjacency[from] = (to, probability), insertion order
    adjacency: Vec<Vec<(usize, f64)>>,
}

impl TravelNetwork {
    pub fn new(labels: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = labels.len();
        if n == 0 {
            return Err(Error::invalid_input("travel network has no nodes"));
        }
        for (idx, label) in labels.iter().enumerate() {
            if label.is_empty() {
                return Err(Error::invalid_input(format!("node {idx} has an empty label")));
            }
            if labels[..idx].contains(label) {
                return Err(Error::invalid_input(format!(
                    "duplicate node label {label:?}"
                )));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        let mut out_sum = vec![0.0f64; n];
        for &(from, to, p) in edges {
            if from >= n || to >= n {
                return Err(Error::invalid_argument(format!(
                    "edge ({from}, {to}) is out of range for {n} nodes"
                )));
            }
            if from == to {
                return Err(Error::invalid_input(format!(
                    "self-edge on node {:?}",
                    labels[from]
                )));
            }
            if !p.is_finite() || p <= 0.0 || p > 1.0 {
                return Err(Error::invalid_input(format!(
                    "edge {:?} -> {:?} has probability {p}, expected a value in (0, 1]",
                    labels[from], labels[to]
                )));
            }
            if adjacency[from].iter().any(|&(t, _)| t == to) {
                return Err(Error::invalid_input(format!(
                    "duplicate edge {:?} -> {:?}",
                    labels[from], labels[to]
                )));
            }
            adjacency[from].push((to, p));
            out_sum[from] += p;
        }
        for (idx, &sum) in out_sum.iter().enumerate() {
            // small slack for sums like ten 0.1 edges
            if sum > 1.0 + 1e-9 {
                return Err(Error::invalid_input(format!(
                    "outgoing probabilities of node {:?} sum to {sum}",
                    labels[idx]
                )));
            }
        }
        Ok(TravelNetwork { labels, adjacency })
    }

    /// Builds from (from-label, to-label, probability) triples; nodes are
    /// numbered by first appearance.
    pub fn from_labeled_edges(edges: &[(String, String, f64)]) -> Result<Self> {
        let mut labels: Vec<String> = Vec::new();
        let index_of = |labels: &mut Vec<String>, name: &str| -> usize {
            match labels.iter().position(|l| l == name) {
                Some(idx) => idx,
                None => {
                    labels.push(name.to_string());
                    labels.len() - 1
                }
            }
        };
        let mut indexed = Vec::with_capacity(edges.len());
        for (from, to, p) in edges {
            let a = index_of(&mut labels, from);
            let b = index_of(&mut labels, to);
            indexed.push((a, b, *p));
        }
        TravelNetwork::new(labels, &indexed)
    }

    pub fn n_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn node_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Directed shortest-path distances from `source` on 1 - ln p edge
    /// lengths. Unreachable nodes stay at infinity.
    fn shortest_from(&self, source: usize) -> Vec<f64> {
        #[derive(PartialEq)]
        struct Entry {
            dist: f64,
            node: usize,
        }
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> Ordering {
                // min-heap on finite distances; ties broken by node index
                other
                    .dist
                    .partial_cmp(&self.dist)
                    .unwrap()
                    .then(other.node.cmp(&self.node))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        let n = self.labels.len();
        let mut dist = vec![f64::INFINITY; n];
        dist[source] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(Entry {
            dist: 0.0,
            node: source,
        });
        while let Some(Entry { dist: d, node }) = heap.pop() {
            if d > dist[node] {
                continue;
            }
            for &(next, p) in &self.adjacency[node] {
                let cand = d + (1.0 - p.ln());
                if cand < dist[next] {
                    dist[next] = cand;
                    heap.push(Entry {
                        dist: cand,
                        node: next,
                    });
                }
            }
        }
        dist
    }
}

/// All-pairs effective distances: shortest paths on 1 - ln p lengths in each
/// direction, averaged into a symmetric matrix with every pair observed.
///
/// Any ordered pair without a connecting path makes the distance undefined;
/// those pairs are collected and reported in one error.
pub fn effective_distance(network: &TravelNetwork) -> Result<DissimilarityData> {
    let n = network.n_nodes();
    let rows: Vec<Vec<f64>> = (0..n).map(|s| network.shortest_from(s)).collect();

    let mut disconnected = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && !rows[a][b].is_finite() {
                disconnected.push((a, b));
            }
        }
    }
    if !disconnected.is_empty() {
        let shown = disconnected
            .iter()
            .take(8)
            .map(|&(a, b)| format!("{:?} -> {:?}", network.labels()[a], network.labels()[b]))
            .collect::<Vec<_>>()
            .join(", ");
        let suffix = if disconnected.len() > 8 {
            format!(" and {} more", disconnected.len() - 8)
        } else {
            String::new()
        };
        return Err(Error::invalid_input(format!(
            "network has no path for {} ordered pair(s): {shown}{suffix}",
            disconnected.len()
        )));
    }

    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..a {
            let d = 0.5 * (rows[a][b] + rows[b][a]);
            values[a * n + b] = d;
            values[b * n + a] = d;
        }
    }
    DissimilarityData::new(n, values, PairMask::all_observed(n))
}

/// Collapses node-level distances to group-level ones: the distance between
/// two groups is the minimum over member pairs. Group pairs with no observed
/// member pair stay unobserved.
///
/// `assignment[node]` gives the group index; all of `0..n_groups` must be
/// used.
pub fn aggregate_to_groups(
    distances: &DissimilarityData,
    assignment: &[usize],
    n_groups: usize,
) -> Result<DissimilarityData> {
    let n = distances.n();
    if assignment.len() != n {
        return Err(Error::invalid_argument(format!(
            "{} group assignments for {n} nodes",
            assignment.len()
        )));
    }
    if n_groups == 0 {
        return Err(Error::invalid_argument("group count must be positive"));
    }
    let mut member_count = vec![0usize; n_groups];
    for (node, &g) in assignment.iter().enumerate() {
        if g >= n_groups {
            return Err(Error::invalid_argument(format!(
                "node {node} assigned to group {g}, but there are {n_groups} groups"
            )));
        }
        member_count[g] += 1;
    }
    if let Some(empty) = member_count.iter().position(|&c| c == 0) {
        return Err(Error::invalid_input(format!("group {empty} has no members")));
    }

    let mut best = vec![f64::INFINITY; n_groups * n_groups];
    for (i, j) in distances.mask().observed_pairs() {
        let (g, h) = (assignment[i], assignment[j]);
        if g == h {
            continue;
        }
        let y = distances.value(i, j);
        let slot = &mut best[g * n_groups + h];
        if y < *slot {
            *slot = y;
            best[h * n_groups + g] = y;
        }
    }

    let mut values = vec![0.0; n_groups * n_groups];
    let mut mask = PairMask::none_observed(n_groups);
    for g in 0..n_groups {
        for h in 0..g {
            let y = best[g * n_groups + h];
            if y.is_finite() {
                values[g * n_groups + h] = y;
                values[h * n_groups + g] = y;
                mask.set(g, h, true);
            }
        }
    }
    DissimilarityData::new(n_groups, values, mask)
}
