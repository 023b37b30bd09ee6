//! Groups similar composition patterns and turns each group into a
//! probabilistic composition pattern with per-service involvement
//! probabilities.
//!
//! Similarity is Jaccard over the service sets of the patterns and a
//! cluster center is the set of services shared by all of its members.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cpminer::{CompositionPattern, Instance};
use crate::error::{Error, Result};

pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl ClusterOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, seed, max_iter: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternCluster {
    /// Indices into the clustered pattern list.
    pub members: Vec<usize>,
    pub center: BTreeSet<String>,
    pub total_instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub clusters: Vec<PatternCluster>,
    /// Objective after each accepted iteration, starting with the seeded
    /// assignment.
    pub objective: Vec<f64>,
    pub converged: bool,
}

impl Clustering {
    pub fn final_objective(&self) -> f64 {
        self.objective.last().copied().unwrap_or(0.0)
    }
}

struct State {
    assignment: Vec<usize>,
    centers: Vec<BTreeSet<String>>,
    objective: f64,
}

fn distance(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    1.0 - jaccard(a, b)
}

/// Farthest-first seeds, starting from a random item.
fn seed_centers(sets: &[BTreeSet<String>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = sets.len();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut nearest: Vec<f64> = sets.iter().map(|s| distance(s, &sets[chosen[0]])).collect();
    while chosen.len() < k {
        let mut best: Option<(usize, f64)> = None;
        for (i, &d) in nearest.iter().enumerate() {
            if chosen.contains(&i) {
                continue;
            }
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (next, _) = best.expect("k <= n");
        chosen.push(next);
        for (i, s) in sets.iter().enumerate() {
            nearest[i] = nearest[i].min(distance(s, &sets[next]));
        }
    }
    chosen
}

/// Nearest center per item (lowest index on ties), then re-seeds every
/// empty cluster with the item farthest from its center.
fn assign(sets: &[BTreeSet<String>], centers: &[BTreeSet<String>]) -> Vec<usize> {
    let mut assignment: Vec<usize> = sets
        .iter()
        .map(|s| {
            let mut best = 0;
            let mut best_sim = f64::NEG_INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let sim = jaccard(s, center);
                if sim > best_sim {
                    best = c;
                    best_sim = sim;
                }
            }
            best
        })
        .collect();
    for empty in 0..centers.len() {
        let mut sizes = vec![0usize; centers.len()];
        for &a in &assignment {
            sizes[a] += 1;
        }
        if sizes[empty] > 0 {
            continue;
        }
        let mut far: Option<(usize, f64)> = None;
        for (i, s) in sets.iter().enumerate() {
            if sizes[assignment[i]] < 2 {
                continue;
            }
            let d = distance(s, &centers[assignment[i]]);
            if far.is_none_or(|(_, fd)| d > fd) {
                far = Some((i, d));
            }
        }
        if let Some((i, _)) = far {
            assignment[i] = empty;
        }
    }
    assignment
}

/// Shared services of the members, or the medoid's services when the
/// members share nothing.
fn center_of(sets: &[BTreeSet<String>], members: &[usize]) -> BTreeSet<String> {
    let Some((&first, rest)) = members.split_first() else {
        return BTreeSet::new();
    };
    let mut shared = sets[first].clone();
    for &m in rest {
        shared = shared.intersection(&sets[m]).cloned().collect();
    }
    if !shared.is_empty() {
        return shared;
    }
    let medoid = members
        .iter()
        .map(|&m| {
            let total: f64 = members.iter().map(|&o| distance(&sets[m], &sets[o])).sum();
            (m, total)
        })
        .fold(None, |best: Option<(usize, f64)>, (m, t)| match best {
            Some((_, bt)) if bt <= t => best,
            _ => Some((m, t)),
        })
        .map(|(m, _)| m)
        .expect("nonempty members");
    sets[medoid].clone()
}

fn members_of(assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); k];
    for (i, &c) in assignment.iter().enumerate() {
        members[c].push(i);
    }
    members
}

fn evaluate(sets: &[BTreeSet<String>], assignment: Vec<usize>, k: usize) -> State {
    let centers: Vec<BTreeSet<String>> = members_of(&assignment, k)
        .iter()
        .map(|m| center_of(sets, m))
        .collect();
    let objective = assignment
        .iter()
        .enumerate()
        .map(|(i, &c)| distance(&sets[i], &centers[c]))
        .sum();
    State {
        assignment,
        centers,
        objective,
    }
}

/// Sum over items of `1 - jaccard(item, center of its cluster)`.
pub fn objective(sets: &[BTreeSet<String>], clusters: &[PatternCluster]) -> f64 {
    clusters
        .iter()
        .flat_map(|c| c.members.iter().map(move |&m| distance(&sets[m], &c.center)))
        .sum()
}

/// K-means style clustering of service sets.
///
/// Alternates nearest-center assignment with shared-service center updates.
/// A step that would raise the objective is rejected and ends the search,
/// so the recorded objective never increases.
pub fn cluster_sets(sets: &[BTreeSet<String>], weights: &[usize], opts: &ClusterOptions) -> Result<Clustering> {
    let n = sets.len();
    if opts.k == 0 {
        return Err(Error::config("cluster count K must be at least 1"));
    }
    if opts.k > n {
        return Err(Error::config(format!(
            "cluster count K = {} exceeds the number of patterns ({n})",
            opts.k
        )));
    }
    if weights.len() != n {
        return Err(Error::Invariant("one weight per clustered item".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let seeds = seed_centers(sets, opts.k, &mut rng);
    let seed_centers: Vec<BTreeSet<String>> = seeds.iter().map(|&i| sets[i].clone()).collect();
    let mut state = evaluate(sets, assign(sets, &seed_centers), opts.k);
    let mut history = vec![state.objective];
    let mut converged = false;
    for _ in 0..opts.max_iter {
        let next = evaluate(sets, assign(sets, &state.centers), opts.k);
        if next.assignment == state.assignment {
            converged = true;
            break;
        }
        if next.objective > state.objective + 1e-12 {
            converged = true;
            break;
        }
        history.push(next.objective);
        state = next;
    }
    let clusters = members_of(&state.assignment, opts.k)
        .into_iter()
        .zip(state.centers)
        .map(|(members, center)| PatternCluster {
            total_instances: members.iter().map(|&m| weights[m]).sum(),
            members,
            center,
        })
        .collect();
    Ok(Clustering {
        clusters,
        objective: history,
        converged,
    })
}

/// Clusters patterns by their service sets; cluster weights are supports.
pub fn cluster(patterns: &[CompositionPattern], opts: &ClusterOptions) -> Result<Clustering> {
    let sets: Vec<BTreeSet<String>> = patterns.iter().map(|p| p.services()).collect();
    let weights: Vec<usize> = patterns.iter().map(|p| p.support).collect();
    cluster_sets(&sets, &weights, opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Involvement {
    pub event: String,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticCompositionPattern {
    /// Sorted by service id.
    pub entries: Vec<Involvement>,
    pub total_instances: usize,
}

impl ProbabilisticCompositionPattern {
    pub fn probability(&self, event: &str) -> f64 {
        self.entries
            .iter()
            .find(|e| e.event == event)
            .map_or(0.0, |e| e.p)
    }

    pub fn events_at_least(&self, threshold: f64) -> BTreeSet<String> {
        self.entries
            .iter()
            .filter(|e| e.p >= threshold)
            .map(|e| e.event.clone())
            .collect()
    }
}

/// Fraction of the cluster's composition instances that involve each
/// service.
pub fn to_probabilistic(
    cluster: &PatternCluster,
    patterns: &[CompositionPattern],
) -> Result<ProbabilisticCompositionPattern> {
    if cluster.members.is_empty() {
        return Err(Error::Invariant("cannot summarize an empty cluster".into()));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut total = 0usize;
    for &m in &cluster.members {
        for inst in &patterns[m].instances {
            total += 1;
            let services: BTreeSet<&str> = inst.events.iter().map(|e| e.service.as_str()).collect();
            for s in services {
                *counts.entry(s.to_string()).or_default() += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::Invariant("cluster has no supporting instances".into()));
    }
    Ok(ProbabilisticCompositionPattern {
        entries: counts
            .into_iter()
            .map(|(event, c)| Involvement {
                event,
                p: c as f64 / total as f64,
            })
            .collect(),
        total_instances: total,
    })
}

/// All composition instances of the cluster's members.
pub fn cluster_instances<'a>(cluster: &PatternCluster, patterns: &'a [CompositionPattern]) -> Vec<&'a Instance> {
    cluster
        .members
        .iter()
        .flat_map(|&m| patterns[m].instances.iter())
        .collect()
}
