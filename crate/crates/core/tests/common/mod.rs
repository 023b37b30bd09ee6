#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use activity_miner::cpminer::support;
use activity_miner::event::{EndpointSymbol, EventDatabase, EventSequence, ServiceEvent};
use activity_miner::relations::InstanceSpan;
use proptest::prelude::*;

pub const SERVICES: [&str; 5] = ["a", "b", "c", "d", "e"];

/// Random databases: up to `max_seqs` sequences of up to `max_events`
/// events over the first `services` names.
pub fn arb_database(max_seqs: usize, max_events: usize, services: usize) -> impl Strategy<Value = EventDatabase> {
    let event = (0..services, 0i64..40, 0i64..12);
    prop::collection::vec(prop::collection::vec(event, 1..=max_events), 1..=max_seqs).prop_map(|seqs| {
        EventDatabase::new(
            seqs.into_iter()
                .enumerate()
                .map(|(sid, evs)| {
                    EventSequence::new(
                        sid as u32,
                        evs.into_iter()
                            .map(|(s, start, d)| ServiceEvent::new(SERVICES[s], start, start + d, "r").unwrap())
                            .collect(),
                    )
                })
                .collect(),
        )
        .unwrap()
    })
}

/// Every well-formed endpoint sequence with support at least `minsup`,
/// found by depth-first extension over the whole alphabet and checked
/// with plain subsequence containment.
pub fn brute_force_patterns(db: &EventDatabase, minsup: usize, max_len: usize) -> BTreeMap<Vec<EndpointSymbol>, usize> {
    let services: BTreeSet<String> = db.events().map(|e| e.service.clone()).collect();
    let alphabet: Vec<EndpointSymbol> = services
        .iter()
        .flat_map(|s| [EndpointSymbol::start(s.as_str()), EndpointSymbol::end(s.as_str())])
        .collect();
    let mut out = BTreeMap::new();
    let mut prefix = Vec::new();
    let mut open: BTreeMap<String, usize> = BTreeMap::new();
    dfs(db, minsup, max_len, &alphabet, &mut prefix, &mut open, &mut out);
    out
}

fn dfs(
    db: &EventDatabase,
    minsup: usize,
    max_len: usize,
    alphabet: &[EndpointSymbol],
    prefix: &mut Vec<EndpointSymbol>,
    open: &mut BTreeMap<String, usize>,
    out: &mut BTreeMap<Vec<EndpointSymbol>, usize>,
) {
    if prefix.len() >= max_len {
        return;
    }
    for sym in alphabet {
        let count = open.get(&sym.service).copied().unwrap_or(0);
        if !sym.is_start() && count == 0 {
            continue;
        }
        prefix.push(sym.clone());
        let sup = support(db, prefix);
        if sup >= minsup {
            let next = if sym.is_start() { count + 1 } else { count - 1 };
            open.insert(sym.service.clone(), next);
            if open.values().all(|&c| c == 0) {
                out.insert(prefix.clone(), sup);
            }
            dfs(db, minsup, max_len, alphabet, prefix, open, out);
            open.insert(sym.service.clone(), count);
        }
        prefix.pop();
    }
}

/// Transition matrix computed cell by cell from the definition.
pub fn brute_force_matrix(instances: &[Vec<InstanceSpan>]) -> Vec<Vec<f64>> {
    let n = instances.len();
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            if i == j || instances[i].is_empty() {
                continue;
            }
            let hits = instances[i]
                .iter()
                .filter(|src| instances[j].iter().any(|t| t.sid == src.sid && t.start >= src.start))
                .count();
            m[i][j] = hits as f64 / instances[i].len() as f64;
        }
    }
    m
}

pub fn sym(s: &str) -> EndpointSymbol {
    s.parse().unwrap()
}

pub fn syms(text: &str) -> Vec<EndpointSymbol> {
    text.split_whitespace().map(sym).collect()
}

/// A sequence whose endpoints occur in exactly the given order, one time
/// unit of 10 seconds apart.
pub fn sequence_from_symbols(sid: u32, text: &str, region: &str) -> EventSequence {
    let mut open: BTreeMap<String, Vec<i64>> = BTreeMap::new();
    let mut events = Vec::new();
    for (i, s) in syms(text).into_iter().enumerate() {
        let t = 10 * i as i64;
        if s.is_start() {
            open.entry(s.service.clone()).or_default().push(t);
        } else {
            let starts = open.get_mut(&s.service).expect("end after start");
            let st = starts.remove(0);
            events.push(ServiceEvent::new(s.service.as_str(), st, t, region).unwrap());
        }
    }
    EventSequence::new(sid, events)
}

/// Endpoint rows of the worked mining example.
pub const WORKED_EXAMPLE_ROWS: [&str; 3] = [
    "A+ A- B+ C+ D+ C- B- D- E+ F+ F- E-",
    "A+ A- B+ M+ C+ C- B- K+ M- K- E+ F+ F- E-",
    "A+ A- B+ C+ C- B- G+ G- F+ F-",
];

pub fn worked_example_database() -> EventDatabase {
    EventDatabase::new(
        WORKED_EXAMPLE_ROWS
            .iter()
            .enumerate()
            .map(|(i, r)| sequence_from_symbols(i as u32, r, "home"))
            .collect(),
    )
    .unwrap()
}
