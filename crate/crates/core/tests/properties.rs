mod common;

use std::collections::{BTreeMap, BTreeSet};

use activity_miner::cluster::{cluster_sets, jaccard, ClusterOptions};
use activity_miner::convenience::{saving_efforts, saving_time, WaitTable};
use activity_miner::cpminer::{contains, is_well_formed, mine, support, Instance, InstanceEvent, MinerOptions};
use activity_miner::event::{canonical_endpoints, EndpointSymbol};
use activity_miner::periodic::{
    lower_median, median_optimality_check, representative_intervals, InstanceTime, PeriodicOptions,
};
use activity_miner::quality::{filter_quality, instance_temporal_proximity, EventProbabilityTable, QualityThresholds};
use activity_miner::relations::{build_matrix, classify, AllenRelation, InstanceSpan};
use activity_miner::synth::{generate, ActivitySpec, OptionalService};
use common::*;
use proptest::prelude::*;

fn instance(spans: &[(i64, i64)]) -> Instance {
    Instance {
        sid: 0,
        events: spans
            .iter()
            .enumerate()
            .map(|(i, &(s, e))| InstanceEvent {
                service: format!("s{i}"),
                start: s,
                end: e,
                coord: None,
                region: "r".into(),
            })
            .collect(),
    }
}

fn arb_spans(n: usize) -> impl Strategy<Value = Vec<(i64, i64)>> {
    prop::collection::vec((0i64..200, 0i64..60).prop_map(|(s, d)| (s, s + d)), 1..=n)
}

/// Whether the union of the intervals is one connected piece.
fn connected(spans: &[(i64, i64)]) -> bool {
    let mut v = spans.to_vec();
    v.sort_unstable();
    let mut reach = v[0].1;
    for &(s, e) in &v[1..] {
        if s > reach {
            return false;
        }
        reach = reach.max(e);
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mining_matches_exhaustive_enumeration(db in arb_database(5, 6, 4), minsup in 1usize..4) {
        let minsup = minsup.max(1 + db.len() / 3);
        let mined = mine(&db, &MinerOptions::new(minsup)).unwrap();
        let got: BTreeMap<Vec<EndpointSymbol>, usize> = mined.iter().map(|p| (p.seq.clone(), p.support)).collect();
        prop_assert_eq!(got.len(), mined.len());
        prop_assert_eq!(got, brute_force_patterns(&db, minsup, 20));
    }

    #[test]
    fn mined_patterns_are_well_formed_with_matching_instances(db in arb_database(6, 8, 5)) {
        for p in mine(&db, &MinerOptions::new(2)).unwrap() {
            prop_assert!(is_well_formed(&p.seq));
            prop_assert_eq!(p.instances.len(), p.support);
            let sids: BTreeSet<u32> = p.instances.iter().map(|i| i.sid).collect();
            prop_assert_eq!(sids.len(), p.support);
            for inst in &p.instances {
                prop_assert_eq!(inst.events.len() * 2, p.seq.len());
                let seq = db.sequences.iter().find(|s| s.sid == inst.sid).unwrap();
                let symbols: Vec<EndpointSymbol> = canonical_endpoints(seq).into_iter().map(|e| e.symbol).collect();
                prop_assert!(contains(&symbols, &p.seq));
            }
        }
    }

    #[test]
    fn support_is_anti_monotone(db in arb_database(6, 8, 5)) {
        for p in mine(&db, &MinerOptions::new(2)).unwrap() {
            // Dropping any one event (its first start and matching end) keeps
            // a well-formed sub-pattern that is at least as frequent.
            for k in 0..p.seq.len() {
                if !p.seq[k].is_start() {
                    continue;
                }
                let svc = &p.seq[k].service;
                let mut depth = 0;
                let mut end_at = None;
                for (i, s) in p.seq.iter().enumerate().skip(k) {
                    if &s.service == svc {
                        if s.is_start() { depth += 1 } else { depth -= 1 }
                        if depth == 0 { end_at = Some(i); break; }
                    }
                }
                let Some(e) = end_at else { continue };
                let sub: Vec<EndpointSymbol> = p.seq.iter().enumerate().filter(|(i, _)| *i != k && *i != e).map(|(_, s)| s.clone()).collect();
                if sub.is_empty() {
                    continue;
                }
                prop_assert!(support(&db, &sub) >= p.support);
            }
        }
    }

    #[test]
    fn higher_minsup_gives_subset(db in arb_database(6, 8, 5), lo in 1usize..3, step in 1usize..3) {
        let a: BTreeSet<_> = mine(&db, &MinerOptions::new(lo.max(2))).unwrap().into_iter().map(|p| p.seq).collect();
        let b: BTreeSet<_> = mine(&db, &MinerOptions::new(lo.max(2) + step)).unwrap().into_iter().map(|p| p.seq).collect();
        prop_assert!(b.is_subset(&a));
    }

    #[test]
    fn temporal_proximity_bounded(spans in arb_spans(6)) {
        let t = instance_temporal_proximity(&instance(&spans));
        prop_assert!(t > 0.0 || spans.iter().all(|(s, e)| s == e));
        prop_assert!(t <= 1.0 + 1e-12);
        if connected(&spans) && spans.iter().any(|(s, e)| s != e) {
            prop_assert!(t >= 1.0 / spans.len() as f64 - 1e-12);
        }
    }

    #[test]
    fn temporal_proximity_matches_riemann_sum(spans in arb_spans(5)) {
        let lo = spans.iter().map(|s| s.0).min().unwrap();
        let hi = spans.iter().map(|s| s.1).max().unwrap();
        prop_assume!(hi > lo);
        // Count active services on each unit step of the span.
        let mut area = 0i64;
        for t in lo..hi {
            area += spans.iter().filter(|&&(s, e)| s <= t && t < e).count() as i64;
        }
        let expect = area as f64 / ((hi - lo) as f64 * spans.len() as f64);
        prop_assert!((instance_temporal_proximity(&instance(&spans)) - expect).abs() < 1e-12);
    }

    #[test]
    fn temporal_proximity_translation_invariant(spans in arb_spans(5), shift in -10_000i64..10_000) {
        let moved: Vec<(i64, i64)> = spans.iter().map(|&(s, e)| (s + shift, e + shift)).collect();
        prop_assert_eq!(
            instance_temporal_proximity(&instance(&spans)),
            instance_temporal_proximity(&instance(&moved))
        );
    }

    #[test]
    fn jaccard_is_a_similarity(
        a in prop::collection::btree_set(0u8..8, 0..6),
        b in prop::collection::btree_set(0u8..8, 0..6),
        c in prop::collection::btree_set(0u8..8, 0..6),
    ) {
        let j = jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, jaccard(&b, &a));
        prop_assert_eq!(jaccard(&a, &a), 1.0);
        let d = |x: &BTreeSet<u8>, y: &BTreeSet<u8>| 1.0 - jaccard(x, y);
        prop_assert!(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12);
    }

    #[test]
    fn clustering_objective_never_increases(
        sets in prop::collection::vec(prop::collection::btree_set(0u8..10, 1..5), 2..12),
        k in 1usize..4,
        seed in 0u64..50,
    ) {
        let sets: Vec<BTreeSet<String>> = sets.into_iter().map(|s| s.into_iter().map(|x| x.to_string()).collect()).collect();
        let k = k.min(sets.len());
        let weights = vec![1; sets.len()];
        let c = cluster_sets(&sets, &weights, &ClusterOptions::new(k, seed)).unwrap();
        for w in c.objective.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12);
        }
        prop_assert_eq!(c.clusters.len(), k);
        let mut members: Vec<usize> = c.clusters.iter().flat_map(|x| x.members.clone()).collect();
        members.sort_unstable();
        prop_assert_eq!(members, (0..sets.len()).collect::<Vec<_>>());
        prop_assert!(c.clusters.iter().all(|x| !x.members.is_empty()));
        prop_assert_eq!(&c, &cluster_sets(&sets, &weights, &ClusterOptions::new(k, seed)).unwrap());
    }

    #[test]
    fn stricter_filter_keeps_subset(db in arb_database(6, 8, 4), sig in 0.0f64..3.0, pro in 0.0f64..1.0) {
        let patterns = mine(&db, &MinerOptions::new(2)).unwrap();
        let table = EventProbabilityTable::from_db(&db);
        let base = QualityThresholds { minsig: sig, minpro: pro, ..Default::default() };
        let strict = QualityThresholds { minsig: sig + 0.5, minpro: pro + 0.1, ..Default::default() };
        let (a, ra) = filter_quality(patterns.clone(), &table, &base).unwrap();
        let (b, rb) = filter_quality(patterns, &table, &strict).unwrap();
        prop_assert!(rb.kept <= ra.kept);
        let a: BTreeSet<_> = a.into_iter().map(|p| p.pattern.seq).collect();
        prop_assert!(b.into_iter().all(|p| a.contains(&p.pattern.seq)));
    }

    #[test]
    fn representative_interval_is_median_optimal(
        group in prop::collection::vec((400i64..500, 10i64..60), 1..15),
    ) {
        let times: Vec<InstanceTime> = group.iter().map(|&(s, d)| InstanceTime::new(s, s + d, "r")).collect();
        let opts = PeriodicOptions { tolerance: 10_000, min_probability: 0.0 };
        let ivs = representative_intervals(&times, &opts);
        prop_assert_eq!(ivs.iter().map(|i| i.num).sum::<usize>(), times.len());
        for iv in &ivs {
            let members: Vec<&InstanceTime> = times.iter().filter(|t| t.start <= iv.end && t.end >= iv.start).collect();
            prop_assert!(!members.is_empty());
            prop_assert!(iv.probability <= 1.0);
            prop_assert_eq!(iv.tnum, times.len());
        }
        if ivs.len() == 1 {
            let starts: Vec<i64> = times.iter().map(|t| t.start).collect();
            let ends: Vec<i64> = times.iter().map(|t| t.end).collect();
            prop_assert_eq!((ivs[0].start, ivs[0].end), (lower_median(&starts), lower_median(&ends)));
            prop_assert!(median_optimality_check(&starts, &ends, (ivs[0].start, ivs[0].end)));
        }
    }

    #[test]
    fn representative_intervals_shift_with_time(
        group in prop::collection::vec((300i64..400, 10i64..90), 1..10),
        shift in 0i64..600,
    ) {
        let opts = PeriodicOptions::default();
        let base: Vec<InstanceTime> = group.iter().map(|&(s, d)| InstanceTime::new(s, s + d, "r")).collect();
        let moved: Vec<InstanceTime> = group.iter().map(|&(s, d)| InstanceTime::new(s + shift, s + shift + d, "r")).collect();
        let a = representative_intervals(&base, &opts);
        let b = representative_intervals(&moved, &opts);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!((x.start + shift, x.end + shift), (y.start, y.end));
            prop_assert_eq!(x.probability, y.probability);
        }
    }

    #[test]
    fn classify_total(a in 0i64..20, la in 0i64..10, b in 0i64..20, lb in 0i64..10) {
        let (i, j) = ((a, a + la), (b, b + lb));
        let c = classify(i, j);
        let (x, y) = if c.swapped { (j, i) } else { (i, j) };
        prop_assert!(c.relation.holds(x, y));
    }

    #[test]
    fn matrix_matches_definition(
        raw in prop::collection::vec(prop::collection::vec((0u32..4, 0i64..50, 0i64..20), 0..8), 1..5),
    ) {
        let inst: Vec<Vec<InstanceSpan>> = raw.iter().map(|v| v.iter().map(|&(sid, s, d)| InstanceSpan { sid, start: s, end: s + d }).collect()).collect();
        let m = build_matrix(&inst);
        let oracle = brute_force_matrix(&inst);
        for i in 0..inst.len() {
            for j in 0..inst.len() {
                let cell = m.cell(i, j);
                prop_assert!((cell.tran_pro - oracle[i][j]).abs() < 1e-12);
                let sum: f64 = cell.relations.values().sum();
                prop_assert!((sum - cell.tran_pro).abs() < 1e-9);
                prop_assert!(cell.tran_pro <= 1.0);
            }
        }
    }

    #[test]
    fn convenience_bounds(
        predicted in prop::collection::btree_set(0u8..8, 0..8),
        actual in prop::collection::btree_set(0u8..8, 1..8),
        waits in prop::collection::vec(0.0f64..5.0, 8),
    ) {
        let p: BTreeSet<String> = predicted.iter().map(|x| x.to_string()).collect();
        let a: BTreeSet<String> = actual.iter().map(|x| x.to_string()).collect();
        let e = saving_efforts(&p, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&e));
        let mut more = p.clone();
        more.extend(a.iter().take(1).cloned());
        prop_assert!(saving_efforts(&more, &a).unwrap() >= e);

        let table = WaitTable::new(waits.iter().enumerate().map(|(i, w)| (i.to_string(), *w)).collect()).unwrap();
        let correct: BTreeSet<String> = p.intersection(&a).cloned().collect();
        let (left, right): (BTreeSet<String>, BTreeSet<String>) = correct.iter().cloned().partition(|s| s.as_str() < "4");
        let total = saving_time(&correct, &table);
        prop_assert!(total >= 0.0);
        prop_assert!((total - saving_time(&left, &table) - saving_time(&right, &table)).abs() < 1e-9);
    }

    #[test]
    fn synth_reproducible(seed in 0u64..1000, jitter in 0i64..30, opt in 0.0f64..1.0) {
        let mut a = ActivitySpec::fixed("a", "r", &["x", "y"], 600, 30);
        a.jitter = jitter;
        a.probability = 0.8;
        a.optional.push(OptionalService { service: "z".into(), probability: opt });
        let one = generate(&[a.clone()], 10, seed).unwrap();
        prop_assert_eq!(&one, &generate(&[a], 10, seed).unwrap());
        for t in &one.1 {
            prop_assert!(t.services.starts_with(&["x".to_string(), "y".to_string()]));
        }
    }
}

#[test]
fn thirteen_endpoint_configurations_classify_once() {
    // All qualitatively distinct orderings of two nondegenerate intervals.
    let configs = [
        ((0, 1), (2, 3)),
        ((0, 2), (2, 3)),
        ((0, 2), (1, 3)),
        ((0, 3), (0, 3)),
        ((0, 1), (0, 3)),
        ((1, 3), (0, 3)),
        ((1, 2), (0, 3)),
        ((2, 3), (0, 1)),
        ((2, 3), (0, 2)),
        ((1, 3), (0, 2)),
        ((0, 3), (0, 1)),
        ((0, 3), (1, 3)),
        ((0, 3), (1, 2)),
    ];
    let mut seen = BTreeSet::new();
    for (i, j) in configs {
        let direct: Vec<AllenRelation> = AllenRelation::ALL.into_iter().filter(|r| r.holds(i, j)).collect();
        let reverse: Vec<AllenRelation> = AllenRelation::ALL.into_iter().filter(|r| r.holds(j, i)).collect();
        let c = classify(i, j);
        if direct.is_empty() {
            assert_eq!(reverse, vec![c.relation], "{i:?} {j:?}");
            assert!(c.swapped);
        } else {
            assert_eq!(direct, vec![c.relation], "{i:?} {j:?}");
            assert!(!c.swapped);
        }
        seen.insert((c.relation, c.swapped));
    }
    assert_eq!(seen.len(), 13);
}
