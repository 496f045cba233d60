//! Helpers shared by the integration suites. The path routines here are
//! deliberately naive recursive enumerations, independent of the algebra
//! they are used to check.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random weighted DAG on `dim` nodes under a shuffled topological order,
/// child-row convention: entry (i, j) is the weight of edge j -> i.
/// Magnitudes are uniform on [0.1, 2] with random signs.
pub fn random_dag(rng: &mut ChaCha8Rng, dim: usize, density: f64) -> Array2<f64> {
    let mut order: Vec<usize> = (0..dim).collect();
    order.shuffle(rng);
    let mut w = Array2::zeros((dim, dim));
    for a in 1..dim {
        for b in 0..a {
            if rng.random::<f64>() < density {
                let magnitude = rng.random_range(0.1..=2.0);
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                w[[order[a], order[b]]] = sign * magnitude;
            }
        }
    }
    w
}

fn children(w: &Array2<f64>, v: usize) -> Vec<usize> {
    (0..w.nrows()).filter(|&u| w[[u, v]] != 0.0).collect()
}

/// Max over simple directed paths q1 -> q2 of the minimum |edge weight|
/// along the path; zero when no path exists.
pub fn dfs_max_min(w: &Array2<f64>, q1: usize, q2: usize) -> f64 {
    fn walk(w: &Array2<f64>, v: usize, goal: usize, floor: f64, seen: &mut Vec<bool>, best: &mut f64) {
        if v == goal {
            *best = best.max(floor);
            return;
        }
        seen[v] = true;
        for u in children(w, v) {
            if !seen[u] {
                walk(w, u, goal, floor.min(w[[u, v]].abs()), seen, best);
            }
        }
        seen[v] = false;
    }
    let mut best = 0.0;
    let mut seen = vec![false; w.nrows()];
    for u in children(w, q1) {
        walk(w, u, q2, w[[u, q1]].abs(), &mut seen, &mut best);
    }
    best
}

/// Edges lying on at least one simple directed path q1 -> q2, as
/// (child, parent) pairs.
pub fn dfs_path_edges(support: &Array2<f64>, q1: usize, q2: usize) -> BTreeSet<(usize, usize)> {
    fn walk(
        w: &Array2<f64>,
        v: usize,
        goal: usize,
        trail: &mut Vec<(usize, usize)>,
        seen: &mut Vec<bool>,
        found: &mut BTreeSet<(usize, usize)>,
    ) {
        if v == goal {
            found.extend(trail.iter().copied());
            return;
        }
        seen[v] = true;
        for u in children(w, v) {
            if !seen[u] {
                trail.push((u, v));
                walk(w, u, goal, trail, seen, found);
                trail.pop();
            }
        }
        seen[v] = false;
    }
    let mut found = BTreeSet::new();
    let mut trail = Vec::new();
    let mut seen = vec![false; support.nrows()];
    walk(support, q1, q2, &mut trail, &mut seen, &mut found);
    found
}
