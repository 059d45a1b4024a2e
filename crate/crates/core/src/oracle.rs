//! Slow, direct reference implementations used to cross-check the fast
//! paths. Nothing here shares code with the stages it checks.

use std::collections::VecDeque;

use crate::clustering::{Adjacency, PhotonEvent};
use crate::event_io::PixelHit;

fn linked(a: &PixelHit, b: &PixelHit, window_ticks: u64, adjacency: Adjacency) -> bool {
    let dx = (a.x as i32 - b.x as i32).abs();
    let dy = (a.y as i32 - b.y as i32).abs();
    let near = match adjacency {
        Adjacency::Four => dx + dy <= 1,
        Adjacency::Eight => dx.max(dy) <= 1,
    };
    near && a.toa_ticks.abs_diff(b.toa_ticks) <= window_ticks
}

/// Connected components by breadth-first search over every hit pair.
/// Hits need not be sorted. Components are ascending index lists, ordered by
/// their smallest index.
pub fn brute_force_clusters(
    hits: &[PixelHit],
    window_ticks: u64,
    adjacency: Adjacency,
) -> Vec<Vec<usize>> {
    let n = hits.len();
    let mut label = vec![usize::MAX; n];
    let mut groups = Vec::new();
    for start in 0..n {
        if label[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        label[start] = id;
        let mut members = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for j in 0..n {
                if label[j] == usize::MAX && linked(&hits[i], &hits[j], window_ticks, adjacency) {
                    label[j] = id;
                    members.push(j);
                    queue.push_back(j);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    groups
}

/// Greedy closest-first pairing from the full list of signal×idler pairs,
/// sorted by `(|Δt|, idler, signal)` and accepted while both ends are free.
/// Returned in signal order.
pub fn brute_force_matching(signal_t: &[f64], idler_t: &[f64]) -> Vec<(usize, usize)> {
    let mut all: Vec<(f64, usize, usize)> = Vec::with_capacity(signal_t.len() * idler_t.len());
    for (i, &ts) in signal_t.iter().enumerate() {
        for (j, &ti) in idler_t.iter().enumerate() {
            all.push(((ts - ti).abs(), j, i));
        }
    }
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut signal_used = vec![false; signal_t.len()];
    let mut idler_used = vec![false; idler_t.len()];
    let mut out = Vec::new();
    for (_, j, i) in all {
        if !signal_used[i] && !idler_used[j] {
            signal_used[i] = true;
            idler_used[j] = true;
            out.push((i, j));
        }
    }
    out.sort_unstable();
    out
}

/// Counts per bin by testing every value against every bin's edges, with
/// underflow and overflow. Edges are `lo + i·(hi − lo)/n`.
pub fn naive_histogram(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> (Vec<u64>, u64, u64) {
    let edge = |i: usize| lo + i as f64 * ((hi - lo) / n_bins as f64);
    let mut counts = vec![0u64; n_bins];
    let (mut under, mut over) = (0, 0);
    for &v in values {
        if v < lo {
            under += 1;
            continue;
        }
        match (0..n_bins).find(|&i| v >= edge(i) && (v < edge(i + 1) || i + 1 == n_bins) && v < hi)
        {
            Some(i) => counts[i] += 1,
            None => over += 1,
        }
    }
    (counts, under, over)
}

/// Order-free fingerprint of a photon list: exact bit patterns, sorted.
pub fn photon_multiset(photons: &[PhotonEvent]) -> Vec<(u64, u64, u64, u64, u32)> {
    let mut keys: Vec<_> = photons
        .iter()
        .map(|p| {
            (
                p.t_ns.to_bits(),
                p.cx.to_bits(),
                p.cy.to_bits(),
                p.tot_sum,
                p.n_pixels,
            )
        })
        .collect();
    keys.sort_unstable();
    keys
}
