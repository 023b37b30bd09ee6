//! Representative time-of-day intervals, locations and occurrence
//! probabilities for probabilistic patterns.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cluster::ProbabilisticCompositionPattern;
use crate::cpminer::Instance;
use crate::event::{format_hhmm, minute_of_day, MINUTES_PER_DAY};

/// Time of one instance on the time-of-day axis, in minutes. `end` is
/// `start + duration` and may exceed 1440 when the instance crosses
/// midnight.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceTime {
    pub start: i64,
    pub end: i64,
    pub region: String,
}

impl InstanceTime {
    pub fn new(start: i64, end: i64, region: impl Into<String>) -> Self {
        Self {
            start,
            end,
            region: region.into(),
        }
    }

    /// Time-of-day view of a composition instance; region is the majority
    /// region of its events.
    pub fn of_instance(inst: &Instance) -> Self {
        let (s, e) = inst.interval();
        let start = minute_of_day(s);
        let duration = (e - s) / 60;
        Self {
            start,
            end: start + duration,
            region: majority(inst.events.iter().map(|e| e.region.as_str())).unwrap_or_default(),
        }
    }
}

/// Most frequent label, ties broken lexicographically.
pub(crate) fn majority<'a>(labels: impl Iterator<Item = &'a str>) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    counts
        .into_iter()
        .fold(None, |best: Option<(&str, usize)>, (l, c)| match best {
            Some((_, bc)) if bc >= c => best,
            _ => Some((l, c)),
        })
        .map(|(l, _)| l.to_string())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepresentativeInterval {
    /// Minutes of day, in `[0, 1440)`.
    pub start: i64,
    /// Minutes of day, unwrapped: may exceed 1440.
    pub end: i64,
    pub location: String,
    pub probability: f64,
    pub tolerance: i64,
    pub num: usize,
    pub tnum: usize,
}

impl RepresentativeInterval {
    pub fn start_hhmm(&self) -> String {
        format_hhmm(self.start)
    }

    pub fn end_hhmm(&self) -> String {
        format_hhmm(self.end)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicOptions {
    /// Largest dissimilarity, in minutes, for an instance to count as
    /// occurring around an interval.
    pub tolerance: i64,
    pub min_probability: f64,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        Self {
            tolerance: 120,
            min_probability: 0.25,
        }
    }
}

pub fn interval_dissimilarity(a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - b.0).abs() + (a.1 - b.1).abs()
}

/// Lower median of a nonempty slice.
pub fn lower_median(values: &[i64]) -> i64 {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[(v.len() - 1) / 2]
}

/// Total dissimilarity of `candidate` to every `(start, end)` pair.
pub fn total_dissimilarity(candidate: (i64, i64), starts: &[i64], ends: &[i64]) -> i64 {
    starts.iter().map(|s| (candidate.0 - s).abs()).sum::<i64>()
        + ends.iter().map(|e| (candidate.1 - e).abs()).sum::<i64>()
}

/// True iff no `(start, end)` from the observed starts and ends has a
/// strictly smaller total dissimilarity than `chosen`.
pub fn median_optimality_check(starts: &[i64], ends: &[i64], chosen: (i64, i64)) -> bool {
    let best = total_dissimilarity(chosen, starts, ends);
    starts
        .iter()
        .all(|&s| ends.iter().all(|&e| total_dissimilarity((s, e), starts, ends) >= best))
}

/// A point inside the largest uncovered gap of the 24h circle, or 0 if the
/// instances cover the whole day.
fn cut_point(instances: &[InstanceTime]) -> i64 {
    let mut pieces: Vec<(i64, i64)> = Vec::new();
    for inst in instances {
        let len = inst.end - inst.start;
        if len >= MINUTES_PER_DAY {
            return 0;
        }
        let s = inst.start.rem_euclid(MINUTES_PER_DAY);
        let e = s + len;
        if e > MINUTES_PER_DAY {
            pieces.push((s, MINUTES_PER_DAY));
            pieces.push((0, e - MINUTES_PER_DAY));
        } else {
            pieces.push((s, e));
        }
    }
    if pieces.is_empty() {
        return 0;
    }
    pieces.sort_unstable();
    let mut merged: Vec<(i64, i64)> = Vec::new();
    for (s, e) in pieces {
        match merged.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => merged.push((s, e)),
        }
    }
    let mut best: Option<(i64, i64)> = None;
    for (i, &(_, end)) in merged.iter().enumerate() {
        let next_start = if i + 1 < merged.len() {
            merged[i + 1].0
        } else {
            merged[0].0 + MINUTES_PER_DAY
        };
        let gap = next_start - end;
        if gap > 0 && best.is_none_or(|(_, g)| gap > g) {
            best = Some((end, gap));
        }
    }
    match best {
        Some((end, gap)) => (end + gap / 2).rem_euclid(MINUTES_PER_DAY),
        None => 0,
    }
}

/// Groups instances by transitive overlap on the time-of-day axis and
/// summarizes each group by its median start and median end.
///
/// The axis is cut inside the largest empty gap, so groups that span
/// midnight stay whole. Each group's probability is the share of all
/// instances (TNum) that belong to it and lie within `tolerance` of the
/// representative interval. Groups below `min_probability` are dropped.
pub fn representative_intervals(instances: &[InstanceTime], opts: &PeriodicOptions) -> Vec<RepresentativeInterval> {
    let tnum = instances.len();
    if tnum == 0 {
        return Vec::new();
    }
    let cut = cut_point(instances);
    let mut rotated: Vec<(i64, i64, &str)> = instances
        .iter()
        .map(|inst| {
            let s = (inst.start - cut).rem_euclid(MINUTES_PER_DAY);
            (s, s + (inst.end - inst.start), inst.region.as_str())
        })
        .collect();
    rotated.sort_unstable();

    let mut groups: Vec<Vec<(i64, i64, &str)>> = Vec::new();
    let mut reach = i64::MIN;
    for r in rotated {
        if groups.is_empty() || r.0 > reach {
            groups.push(Vec::new());
            reach = r.1;
        } else {
            reach = reach.max(r.1);
        }
        groups.last_mut().expect("group pushed").push(r);
    }

    let mut out: Vec<RepresentativeInterval> = groups
        .into_iter()
        .filter_map(|group| {
            let starts: Vec<i64> = group.iter().map(|g| g.0).collect();
            let ends: Vec<i64> = group.iter().map(|g| g.1).collect();
            let ts = lower_median(&starts);
            let te = lower_median(&ends);
            let num = group
                .iter()
                .filter(|g| interval_dissimilarity((ts, te), (g.0, g.1)) <= opts.tolerance)
                .count();
            let probability = num as f64 / tnum as f64;
            if probability < opts.min_probability {
                return None;
            }
            let start = (ts + cut).rem_euclid(MINUTES_PER_DAY);
            Some(RepresentativeInterval {
                start,
                end: start + (te - ts),
                location: majority(group.iter().map(|g| g.2)).unwrap_or_default(),
                probability,
                tolerance: opts.tolerance,
                num,
                tnum,
            })
        })
        .collect();
    out.sort_by_key(|iv| (iv.start, iv.end));
    out
}

/// A probabilistic pattern with its periodic features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicPattern {
    pub id: usize,
    pub base: ProbabilisticCompositionPattern,
    /// Sorted by start.
    pub intervals: Vec<RepresentativeInterval>,
    /// Majority region over all instances.
    pub region: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl PeriodicPattern {
    pub fn build(
        id: usize,
        base: ProbabilisticCompositionPattern,
        instances: &[&Instance],
        opts: &PeriodicOptions,
    ) -> Self {
        let times: Vec<InstanceTime> = instances.iter().map(|i| InstanceTime::of_instance(i)).collect();
        Self {
            id,
            base,
            intervals: representative_intervals(&times, opts),
            region: majority(times.iter().map(|t| t.region.as_str())).unwrap_or_default(),
            label: None,
        }
    }

    pub fn best_interval(&self) -> Option<&RepresentativeInterval> {
        self.intervals.iter().fold(None, |best, iv| match best {
            Some(b) if b.probability >= iv.probability => Some(b),
            _ => Some(iv),
        })
    }
}
