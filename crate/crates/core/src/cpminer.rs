//! Frequent composition-pattern discovery by pattern growth over endpoint
//! sequences.
//!
//! Patterns grow one endpoint symbol at a time through projected databases.
//! An end symbol may only be appended while its service has an open start
//! in the prefix, and only patterns without open starts are reported, so
//! interleavings such as `<A+ A- B+ C+ C- B->` are found with their own
//! support.

use std::collections::{BTreeMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{Coord, EndpointSymbol, EventDatabase, Polarity, Timestamp};

pub const DEFAULT_MAX_LEN: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinerOptions {
    pub minsup: usize,
    /// Longest pattern, in endpoints.
    pub max_len: usize,
}

impl MinerOptions {
    pub fn new(minsup: usize) -> Self {
        Self {
            minsup,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

/// One matched service inside a composition instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceEvent {
    pub service: String,
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<Coord>,
    pub region: String,
}

/// A concrete occurrence of a pattern in one sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub sid: u32,
    /// Matched services ordered by start time.
    pub events: Vec<InstanceEvent>,
}

impl Instance {
    /// `[earliest start, latest end]` of the matched events.
    pub fn interval(&self) -> (Timestamp, Timestamp) {
        let start = self.events.iter().map(|e| e.start).min().unwrap_or(0);
        let end = self.events.iter().map(|e| e.end).max().unwrap_or(0);
        (start, end)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompositionPattern {
    pub seq: Vec<EndpointSymbol>,
    pub support: usize,
    pub region: String,
    pub instances: Vec<Instance>,
}

impl CompositionPattern {
    /// Distinct services mentioned by the pattern.
    pub fn services(&self) -> std::collections::BTreeSet<String> {
        self.seq.iter().map(|s| s.service.clone()).collect()
    }

    pub fn service_count(&self) -> usize {
        self.seq.iter().filter(|s| s.is_start()).count()
    }
}

/// True iff `needle` is an order-preserving subsequence of `haystack`.
pub fn contains(haystack: &[EndpointSymbol], needle: &[EndpointSymbol]) -> bool {
    let mut it = haystack.iter();
    needle.iter().all(|n| it.any(|h| h == n))
}

/// Every start is closed by a later end of the same service, and no end
/// appears without an open start.
pub fn is_well_formed(seq: &[EndpointSymbol]) -> bool {
    let mut open: BTreeMap<&str, usize> = BTreeMap::new();
    for s in seq {
        let c = open.entry(s.service.as_str()).or_default();
        match s.polarity {
            Polarity::Start => *c += 1,
            Polarity::End => {
                if *c == 0 {
                    return false;
                }
                *c -= 1;
            }
        }
    }
    open.values().all(|&c| c == 0)
}

/// Number of sequences whose endpoint list contains `seq`.
pub fn support(db: &EventDatabase, seq: &[EndpointSymbol]) -> usize {
    db.sequences
        .iter()
        .filter(|s| {
            let symbols: Vec<EndpointSymbol> = s.endpoints().into_iter().map(|e| e.symbol).collect();
            contains(&symbols, seq)
        })
        .count()
}

#[derive(Clone, Debug)]
struct EncodedEndpoint {
    code: u32,
    time: Timestamp,
    event: usize,
}

/// Symbol-coded view of a database, shared by all projections.
///
/// Services are numbered in lexicographic order and a symbol's code is
/// `2 * service + polarity`, so code order equals symbol order.
#[derive(Clone, Debug)]
pub struct SequenceIndex<'a> {
    db: &'a EventDatabase,
    services: Vec<String>,
    codes: Vec<Vec<u32>>,
    endpoints: Vec<Vec<EncodedEndpoint>>,
}

impl<'a> SequenceIndex<'a> {
    pub fn new(db: &'a EventDatabase) -> Self {
        let mut services: Vec<String> = db.events().map(|e| e.service.clone()).collect();
        services.sort();
        services.dedup();
        let lookup: BTreeMap<&str, u32> = services
            .iter()
            .enumerate()
            .map(|(i, s)| (s.as_str(), i as u32))
            .collect();
        let mut codes = Vec::with_capacity(db.len());
        let mut endpoints = Vec::with_capacity(db.len());
        for seq in &db.sequences {
            let eps: Vec<EncodedEndpoint> = seq
                .endpoints()
                .into_iter()
                .map(|ep| EncodedEndpoint {
                    code: lookup[ep.symbol.service.as_str()] * 2
                        + u32::from(ep.symbol.polarity == Polarity::End),
                    time: ep.time,
                    event: ep.event,
                })
                .collect();
            codes.push(eps.iter().map(|e| e.code).collect());
            endpoints.push(eps);
        }
        Self {
            db,
            services,
            codes,
            endpoints,
        }
    }

    fn code_count(&self) -> usize {
        self.services.len() * 2
    }

    fn encode(&self, symbol: &EndpointSymbol) -> Option<u32> {
        let idx = self.services.binary_search(&symbol.service).ok()? as u32;
        Some(idx * 2 + u32::from(symbol.polarity == Polarity::End))
    }

    fn decode(&self, code: u32) -> EndpointSymbol {
        let service = self.services[(code / 2) as usize].clone();
        if code.is_multiple_of(2) {
            EndpointSymbol::start(service)
        } else {
            EndpointSymbol::end(service)
        }
    }

    /// The projection with an empty prefix: every sequence, from its start.
    pub fn root(&self) -> ProjectedDatabase<'_, 'a> {
        ProjectedDatabase {
            index: self,
            prefix: Vec::new(),
            open: vec![0; self.services.len()],
            suffixes: (0..self.codes.len()).map(|i| (i, 0)).collect(),
        }
    }

    /// Leftmost match positions of `pattern` in sequence `seq_idx`.
    fn leftmost_match(&self, seq_idx: usize, pattern: &[u32]) -> Option<Vec<usize>> {
        let codes = &self.codes[seq_idx];
        let mut pos = 0;
        let mut out = Vec::with_capacity(pattern.len());
        for &c in pattern {
            let found = codes[pos..].iter().position(|&x| x == c)? + pos;
            out.push(found);
            pos = found + 1;
        }
        Some(out)
    }

    fn instance(&self, seq_idx: usize, pattern: &[u32]) -> Instance {
        let positions = self
            .leftmost_match(seq_idx, pattern)
            .expect("supporting sequence contains the pattern");
        let seq = &self.db.sequences[seq_idx];
        let eps = &self.endpoints[seq_idx];
        let mut open: BTreeMap<u32, VecDeque<usize>> = BTreeMap::new();
        let mut events = Vec::new();
        for &p in &positions {
            let ep = &eps[p];
            let service = ep.code / 2;
            if ep.code.is_multiple_of(2) {
                open.entry(service).or_default().push_back(p);
            } else {
                let sp = open
                    .get_mut(&service)
                    .and_then(|q| q.pop_front())
                    .expect("well-formed pattern");
                let start_ep = &eps[sp];
                let src = &seq.events[start_ep.event];
                events.push(InstanceEvent {
                    service: self.services[service as usize].clone(),
                    start: start_ep.time,
                    end: ep.time,
                    coord: src.start_coord,
                    region: src.region.clone(),
                });
            }
        }
        events.sort_by(|a, b| (a.start, a.end, &a.service).cmp(&(b.start, b.end, &b.service)));
        Instance {
            sid: seq.sid,
            events,
        }
    }
}

/// Suffixes of the sequences that contain `prefix`, each starting right
/// after the leftmost match of the prefix.
#[derive(Clone, Debug)]
pub struct ProjectedDatabase<'i, 'a> {
    index: &'i SequenceIndex<'a>,
    prefix: Vec<u32>,
    /// Open starts per service in the prefix.
    open: Vec<u16>,
    suffixes: Vec<(usize, usize)>,
}

impl<'i, 'a> ProjectedDatabase<'i, 'a> {
    pub fn prefix(&self) -> Vec<EndpointSymbol> {
        self.prefix.iter().map(|&c| self.index.decode(c)).collect()
    }

    pub fn len(&self) -> usize {
        self.suffixes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.suffixes.is_empty()
    }

    /// `(sid, remaining symbols)` per suffix.
    pub fn suffixes(&self) -> Vec<(u32, Vec<EndpointSymbol>)> {
        self.suffixes
            .iter()
            .map(|&(s, pos)| {
                (
                    self.index.db.sequences[s].sid,
                    self.index.codes[s][pos..]
                        .iter()
                        .map(|&c| self.index.decode(c))
                        .collect(),
                )
            })
            .collect()
    }

    /// Services with open starts in the prefix, with their counts.
    pub fn pending(&self) -> BTreeMap<String, usize> {
        self.open
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (self.index.services[i].clone(), c as usize))
            .collect()
    }

    /// Advances each suffix past the first occurrence of `symbol`; suffixes
    /// without one are dropped. A symbol unknown to the database yields an
    /// empty projection.
    pub fn project(&self, symbol: &EndpointSymbol) -> ProjectedDatabase<'i, 'a> {
        match self.index.encode(symbol) {
            Some(code) => self.project_code(code),
            None => ProjectedDatabase {
                index: self.index,
                prefix: self.prefix.clone(),
                open: self.open.clone(),
                suffixes: Vec::new(),
            },
        }
    }

    fn project_code(&self, code: u32) -> ProjectedDatabase<'i, 'a> {
        let suffixes = self
            .suffixes
            .iter()
            .filter_map(|&(s, pos)| {
                let codes = &self.index.codes[s];
                codes[pos..]
                    .iter()
                    .position(|&c| c == code)
                    .map(|off| (s, pos + off + 1))
            })
            .collect();
        let mut prefix = self.prefix.clone();
        prefix.push(code);
        let mut open = self.open.clone();
        let svc = (code / 2) as usize;
        if code.is_multiple_of(2) {
            open[svc] += 1;
        } else {
            open[svc] = open[svc].saturating_sub(1);
        }
        ProjectedDatabase {
            index: self.index,
            prefix,
            open,
            suffixes,
        }
    }

    /// Number of suffixes containing each code at least once.
    fn local_counts(&self) -> Vec<usize> {
        let n = self.index.code_count();
        let mut counts = vec![0usize; n];
        let mut stamp = vec![usize::MAX; n];
        for (k, &(s, pos)) in self.suffixes.iter().enumerate() {
            for &c in &self.index.codes[s][pos..] {
                let c = c as usize;
                if stamp[c] != k {
                    stamp[c] = k;
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    fn open_total(&self) -> usize {
        self.open.iter().map(|&c| c as usize).sum()
    }

    /// Codes that may extend the prefix and are frequent in this projection.
    fn extensions(&self, opts: &MinerOptions) -> Vec<u32> {
        let counts = self.local_counts();
        let len = self.prefix.len() + 1;
        let open_total = self.open_total();
        (0..counts.len() as u32)
            .filter(|&code| {
                if counts[code as usize] < opts.minsup {
                    return false;
                }
                let is_end = code % 2 == 1;
                if is_end && self.open[(code / 2) as usize] == 0 {
                    return false;
                }
                let new_open = if is_end { open_total - 1 } else { open_total + 1 };
                len + new_open <= opts.max_len
            })
            .collect()
    }

    fn grow(&self, opts: &MinerOptions, out: &mut Vec<(Vec<u32>, Vec<usize>)>) {
        for code in self.extensions(opts) {
            let next = self.project_code(code);
            if next.open_total() == 0 {
                out.push((next.prefix.clone(), next.suffixes.iter().map(|&(s, _)| s).collect()));
            }
            if next.prefix.len() < opts.max_len {
                next.grow(opts, out);
            }
        }
    }
}

/// Mines every well-formed endpoint pattern with support `>= minsup`.
///
/// Output is sorted by symbol sequence. The pattern's region is the single
/// region of the database's events, or `*` when the database mixes regions.
pub fn mine(db: &EventDatabase, opts: &MinerOptions) -> Result<Vec<CompositionPattern>> {
    if opts.minsup < 1 {
        return Err(Error::config("minsup must be at least 1"));
    }
    if opts.max_len < 2 {
        return Err(Error::config("max pattern length must be at least 2"));
    }
    let regions = db.regions();
    let region = match regions.as_slice() {
        [only] => only.clone(),
        _ => "*".to_string(),
    };
    let index = SequenceIndex::new(db);
    let root = index.root();
    let firsts: Vec<u32> = root
        .extensions(opts)
        .into_iter()
        .filter(|c| c % 2 == 0)
        .collect();
    let mut found: Vec<(Vec<u32>, Vec<usize>)> = firsts
        .par_iter()
        .map(|&code| {
            let mut out = Vec::new();
            let next = root.project_code(code);
            next.grow(opts, &mut out);
            out
        })
        .flatten()
        .collect();
    found.sort_by(|a, b| a.0.cmp(&b.0));

    let patterns = found
        .par_iter()
        .map(|(codes, seqs)| {
            let instances: Vec<Instance> = seqs.iter().map(|&s| index.instance(s, codes)).collect();
            CompositionPattern {
                seq: codes.iter().map(|&c| index.decode(c)).collect(),
                support: seqs.len(),
                region: region.clone(),
                instances,
            }
        })
        .collect();
    Ok(patterns)
}
