//! Greedy 1-opt local search on the spin formulation.
//!
//! Flipping α changes the cut by ΔC = Σ_{r ∈ D(α)} (σ_α Q(r) − 1), so gains
//! only need the ray charges, kept up to date incrementally. Everything is
//! integer arithmetic.

use std::time::Instant;

use rand::Rng as _;

use crate::analysis;
use crate::exec::Execution;
use crate::model::{RunReport, TomographyInstance};
use crate::seed;

/// Cut gain from flipping `node`, given current ray charges.
pub fn flip_gain(instance: &TomographyInstance, sigma: &[i8], charges: &[i64], node: usize) -> i64 {
    let s = i64::from(sigma[node]);
    instance
        .rays()
        .rays_of(node)
        .iter()
        .map(|&r| s * charges[r] - 1)
        .sum()
}

/// Best-improvement descent from `sigma`; ties go to the lowest index.
/// Returns the number of flips taken.
pub fn descend(instance: &TomographyInstance, sigma: &mut [i8]) -> u64 {
    let mut charges = analysis::residuals(instance, sigma);
    let mut flips = 0;
    loop {
        let mut best = (0i64, usize::MAX);
        for node in 0..sigma.len() {
            let gain = flip_gain(instance, sigma, &charges, node);
            if gain > best.0 {
                best = (gain, node);
            }
        }
        if best.1 == usize::MAX {
            return flips;
        }
        let node = best.1;
        let s = i64::from(sigma[node]);
        for &r in instance.rays().rays_of(node) {
            charges[r] -= 2 * s;
        }
        sigma[node] = -sigma[node];
        flips += 1;
    }
}

/// One restart from a uniform random σ drawn from `seed`.
pub fn local_search_1opt(instance: &TomographyInstance, seed: u64) -> RunReport {
    let mut rng = seed::rng(seed);
    let sigma: Vec<i8> = (0..instance.node_count())
        .map(|_| if rng.gen_bool(0.5) { 1 } else { -1 })
        .collect();
    local_search_from(instance, sigma)
}

pub fn local_search_from(instance: &TomographyInstance, mut sigma: Vec<i8>) -> RunReport {
    let start = Instant::now();
    let flips = descend(instance, &mut sigma);
    let residuals = analysis::residuals(instance, &sigma);
    RunReport {
        solved: residuals.iter().all(|&q| q == 0),
        agitations_used: 0,
        stage_cuts: vec![analysis::cut_value(instance, &sigma)],
        final_sigma: sigma,
        residuals,
        cut_trace: None,
        steps: flips,
        elapsed: start.elapsed(),
        failure: None,
    }
}

/// Number of solved restarts out of `restarts`; restart `i` uses seed
/// `derive(seed, [i])`.
pub fn count_successes(instance: &TomographyInstance, restarts: usize, seed: u64, exec: Execution) -> usize {
    exec.map(restarts, |i| {
        local_search_1opt(instance, seed::derive(seed, &[i as u64])).solved
    })
    .into_iter()
    .filter(|&s| s)
    .count()
}

/// Fraction of restarts ending in a solution.
pub fn sample_local_search(instance: &TomographyInstance, restarts: usize, seed: u64) -> f64 {
    assert!(restarts >= 1, "need at least one restart");
    count_successes(instance, restarts, seed, Execution::default()) as f64 / restarts as f64
}
