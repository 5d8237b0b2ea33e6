//! Permutation test on the Jensen-Shannon divergence of two categorical
//! distributions.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Hypergeometric};
use rayon::prelude::*;

use super::{jsd_unchecked, EffectKind, EffectSize, TestResult};
use crate::error::{Error, Result};

/// Float slack when comparing permuted statistics against the observed one,
/// so that exact ties are counted despite rounding.
const TIE_SLACK: f64 = 1e-12;

fn normalize(counts: &[u64]) -> Vec<f64> {
    let total: u64 = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / total as f64).collect()
}

fn jsd_of_counts(a: &[u64], b: &[u64]) -> f64 {
    jsd_unchecked(&normalize(a), &normalize(b))
}

/// Iteration `i` draws from its own ChaCha stream, so the outcome does not
/// depend on how iterations are spread over threads.
fn iteration_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64);
    rng
}

fn result(observed: f64, hits: usize, n_perm: usize, n_a: u64, n_b: u64) -> TestResult {
    TestResult {
        test_name: "permutation_jsd".into(),
        statistic: observed,
        p_value: ((1 + hits) as f64 / (1 + n_perm) as f64).min(1.0),
        effect_size: EffectSize {
            kind: EffectKind::Jsd,
            value: observed,
        },
        n_a,
        n_b,
        df: None,
    }
}

/// Event-level permutation test on per-category counts of two groups.
///
/// Shuffling pooled events into groups of the original sizes only matters
/// through the resulting category counts, so each permutation draws group
/// A's counts from the multivariate hypergeometric distribution directly.
pub fn permutation_test_jsd(
    counts_a: &[u64],
    counts_b: &[u64],
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    if counts_a.len() != counts_b.len() {
        return Err(Error::InvalidInput("count vectors differ in length".into()));
    }
    let (na, nb): (u64, u64) = (counts_a.iter().sum(), counts_b.iter().sum());
    if na == 0 || nb == 0 {
        return Err(Error::InvalidInput(
            "permutation test needs events in both groups".into(),
        ));
    }
    let observed = jsd_of_counts(counts_a, counts_b);
    let pooled: Vec<u64> = counts_a.iter().zip(counts_b).map(|(x, y)| x + y).collect();
    let total = na + nb;
    let hits = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = iteration_rng(seed, i);
            let mut left = total;
            let mut to_draw = na;
            let mut perm_a = Vec::with_capacity(pooled.len());
            for &k in &pooled {
                let x = if to_draw == 0 || k == 0 {
                    0
                } else if to_draw == left {
                    k
                } else {
                    Hypergeometric::new(left, k, to_draw)
                        .expect("valid urn")
                        .sample(&mut rng)
                };
                perm_a.push(x);
                left -= k;
                to_draw -= x;
            }
            let perm_b: Vec<u64> = pooled.iter().zip(&perm_a).map(|(p, a)| p - a).collect();
            usize::from(jsd_of_counts(&perm_a, &perm_b) >= observed - TIE_SLACK)
        })
        .sum();
    Ok(result(observed, hits, n_perm, na, nb))
}

/// Convenience wrapper over raw category labels, one per event.
pub fn permutation_test_jsd_events<T: Ord + Clone>(
    a: &[T],
    b: &[T],
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    let mut index: BTreeMap<T, usize> = BTreeMap::new();
    for label in a.iter().chain(b) {
        let next = index.len();
        index.entry(label.clone()).or_insert(next);
    }
    let count = |xs: &[T]| {
        let mut c = vec![0u64; index.len()];
        for x in xs {
            c[index[x]] += 1;
        }
        c
    };
    permutation_test_jsd(&count(a), &count(b), n_perm, seed)
}

/// Unit-level variant: whole units (for instance users, each with a count
/// vector) are shuffled between groups rather than single events.
pub fn permutation_test_jsd_units(
    units_a: &[Vec<u64>],
    units_b: &[Vec<u64>],
    n_perm: usize,
    seed: u64,
) -> Result<TestResult> {
    let width = units_a.first().or(units_b.first()).map_or(0, Vec::len);
    if units_a.iter().chain(units_b).any(|u| u.len() != width) {
        return Err(Error::InvalidInput(
            "unit count vectors differ in length".into(),
        ));
    }
    let sum = |units: &mut dyn Iterator<Item = &Vec<u64>>| {
        let mut c = vec![0u64; width];
        for u in units {
            for (ci, ui) in c.iter_mut().zip(u) {
                *ci += ui;
            }
        }
        c
    };
    let (ca, cb) = (sum(&mut units_a.iter()), sum(&mut units_b.iter()));
    let (na, nb): (u64, u64) = (ca.iter().sum(), cb.iter().sum());
    if na == 0 || nb == 0 {
        return Err(Error::InvalidInput(
            "permutation test needs events in both groups".into(),
        ));
    }
    let observed = jsd_of_counts(&ca, &cb);
    let pooled: Vec<&Vec<u64>> = units_a.iter().chain(units_b).collect();
    let hits = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = iteration_rng(seed, i);
            let mut order: Vec<usize> = (0..pooled.len()).collect();
            order.shuffle(&mut rng);
            let (left, right) = order.split_at(units_a.len());
            let pa = sum(&mut left.iter().map(|&j| pooled[j]));
            let pb = sum(&mut right.iter().map(|&j| pooled[j]));
            if pa.iter().sum::<u64>() == 0 || pb.iter().sum::<u64>() == 0 {
                // An empty side has no distribution; count it as extreme.
                return 1;
            }
            usize::from(jsd_of_counts(&pa, &pb) >= observed - TIE_SLACK)
        })
        .sum();
    Ok(result(observed, hits, n_perm, na, nb))
}
