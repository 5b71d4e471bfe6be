//! Network topologies: uniform connected random graphs and
//! preferential-attachment (scale-free) graphs.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use super::BenchError;
use crate::stream::{stream, Purpose};

pub type EdgeList = Vec<(usize, usize)>;

fn normalize(edges: BTreeSet<(usize, usize)>) -> EdgeList {
    edges.into_iter().collect()
}

fn max_edges(n: usize) -> usize {
    n * (n - 1) / 2
}

/// Connected simple graph with exactly `m` edges: a random spanning tree
/// first, then uniformly chosen extra edges.
pub fn gen_random_graph(n: usize, m: usize, seed: u64) -> Result<EdgeList, BenchError> {
    if n < 2 {
        return Err(BenchError::InvalidParameters(format!("need at least 2 nodes, got {n}")));
    }
    if m < n - 1 {
        return Err(BenchError::InvalidParameters(format!(
            "{m} edges cannot connect {n} nodes"
        )));
    }
    if m > max_edges(n) {
        return Err(BenchError::InvalidParameters(format!(
            "{m} edges exceed the {} possible on {n} nodes",
            max_edges(n)
        )));
    }
    let mut rng = stream(seed, Purpose::Graph, 0, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut edges = BTreeSet::new();
    for i in 1..n {
        let j = rng.gen_range(0..i);
        let (a, b) = (order[i], order[j]);
        edges.insert((a.min(b), a.max(b)));
    }
    let mut rest: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|e| !edges.contains(e))
        .collect();
    rest.shuffle(&mut rng);
    edges.extend(rest.into_iter().take(m - (n - 1)));
    Ok(normalize(edges))
}

/// Preferential-attachment growth. Each arriving node attaches to
/// `round(m/n)` existing nodes chosen proportionally to degree (fewer when
/// the remaining edge budget requires it); leftover edges are then added
/// from the highest-degree nodes.
pub fn gen_scale_free(n: usize, m: usize, seed: u64) -> Result<EdgeList, BenchError> {
    if n < 3 {
        return Err(BenchError::InvalidParameters(format!("need at least 3 nodes, got {n}")));
    }
    if m < n - 1 || m > max_edges(n) {
        return Err(BenchError::InvalidParameters(format!(
            "{m} edges is infeasible for a connected graph on {n} nodes"
        )));
    }
    let mut rng = stream(seed, Purpose::Graph, 1, 0);
    let k = ((m as f64 / n as f64).round() as usize).clamp(1, n - 1);
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    let add = |adj: &mut Vec<BTreeSet<usize>>, a: usize, b: usize| {
        adj[a].insert(b);
        adj[b].insert(a);
    };
    // Seed core: a star over the first k+1 nodes.
    for leaf in 1..=k {
        add(&mut adj, 0, leaf);
    }
    let mut used = k;
    for node in k + 1..n {
        let future = n - node - 1;
        let budget = m - used - future;
        let want = k.min(budget).max(1).min(node);
        let mut chosen = BTreeSet::new();
        while chosen.len() < want {
            let total: usize = (0..node).filter(|c| !chosen.contains(c)).map(|c| adj[c].len()).sum();
            let mut pick = rng.gen_range(0..total);
            for c in (0..node).filter(|c| !chosen.contains(c)) {
                if pick < adj[c].len() {
                    chosen.insert(c);
                    break;
                }
                pick -= adj[c].len();
            }
        }
        for c in chosen {
            add(&mut adj, node, c);
        }
        used += want;
    }
    while used < m {
        let hub = (0..n)
            .filter(|&v| adj[v].len() < n - 1)
            .max_by_key(|&v| (adj[v].len(), std::cmp::Reverse(v)))
            .expect("m is below the complete-graph bound");
        let candidates: Vec<usize> = (0..n).filter(|&v| v != hub && !adj[hub].contains(&v)).collect();
        let total: usize = candidates.iter().map(|&c| adj[c].len()).sum();
        let mut pick = rng.gen_range(0..total);
        let mut target = candidates[0];
        for &c in &candidates {
            if pick < adj[c].len() {
                target = c;
                break;
            }
            pick -= adj[c].len();
        }
        add(&mut adj, hub, target);
        used += 1;
    }
    let edges = adj
        .iter()
        .enumerate()
        .flat_map(|(a, ns)| ns.iter().filter(move |&&b| a < b).map(move |&b| (a, b)))
        .collect();
    Ok(normalize(edges))
}

pub fn is_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    if n == 0 {
        return true;
    }
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in edges {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

pub fn degrees(n: usize, edges: &[(usize, usize)]) -> Vec<usize> {
    let mut deg = vec![0; n];
    for &(a, b) in edges {
        deg[a] += 1;
        deg[b] += 1;
    }
    deg
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simple(edges: &[(usize, usize)]) -> bool {
        let set: BTreeSet<_> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        set.len() == edges.len() && edges.iter().all(|&(a, b)| a != b)
    }

    #[test]
    fn random_graph_examples() {
        assert_eq!(gen_random_graph(2, 1, 3).unwrap(), vec![(0, 1)]);
        let g = gen_random_graph(10, 23, 0).unwrap();
        assert_eq!(g.len(), 23);
        assert!(simple(&g));
        assert!(is_connected(10, &g));
        assert!(gen_random_graph(10, 8, 0).is_err());
        assert!(gen_random_graph(4, 7, 0).is_err());
    }

    #[test]
    fn scale_free_examples() {
        let g = gen_scale_free(50, 120, 0).unwrap();
        assert_eq!(g.len(), 120);
        assert!(simple(&g) && is_connected(50, &g));
        let g = gen_scale_free(3, 2, 4).unwrap();
        assert_eq!(g.len(), 2);
        assert!(is_connected(3, &g));
        assert!(gen_scale_free(2, 1, 0).is_err());
        assert!(gen_scale_free(10, 5, 0).is_err());
    }

    #[test]
    fn scale_free_has_heavier_hubs_than_random() {
        let wins = (0..10)
            .filter(|&s| {
                let sf = gen_scale_free(50, 120, s).unwrap();
                let rg = gen_random_graph(50, 120, s).unwrap();
                let max = |g: &EdgeList| degrees(50, g).into_iter().max().unwrap();
                max(&sf) > max(&rg)
            })
            .count();
        assert!(wins >= 8, "scale-free max degree larger in only {wins}/10 seeds");
    }

    proptest! {
        #[test]
        fn generated_graphs_are_connected_and_simple(n in 3usize..30, extra in 0usize..40, seed in 0u64..1000) {
            let m = (n - 1 + extra).min(n * (n - 1) / 2);
            for g in [gen_random_graph(n, m, seed).unwrap(), gen_scale_free(n, m, seed).unwrap()] {
                prop_assert_eq!(g.len(), m);
                prop_assert!(simple(&g));
                prop_assert!(is_connected(n, &g));
                prop_assert_eq!(degrees(n, &g).iter().sum::<usize>(), 2 * m);
            }
        }

        #[test]
        fn generation_is_deterministic(seed in 0u64..1000) {
            prop_assert_eq!(gen_random_graph(12, 20, seed).unwrap(), gen_random_graph(12, 20, seed).unwrap());
            prop_assert_eq!(gen_scale_free(12, 20, seed).unwrap(), gen_scale_free(12, 20, seed).unwrap());
        }
    }
}
