//! Pattern quality: statistical significance against region event
//! frequencies, and spatio-temporal proximity of the supporting instances.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cpminer::{CompositionPattern, Instance};
use crate::error::{Error, Result};
use crate::event::{format_symbols, EndpointSymbol, EventDatabase};

pub const DEFAULT_RESOLUTION: f64 = 1.0;

/// Empirical event-type probabilities of one region.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionTable {
    pub probabilities: BTreeMap<String, f64>,
    /// Number of events in the region.
    pub total_events: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventProbabilityTable {
    pub regions: BTreeMap<String, RegionTable>,
}

impl EventProbabilityTable {
    /// Counts each event once (its start) per region.
    pub fn from_db(db: &EventDatabase) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for e in db.events() {
            *counts
                .entry(e.region.clone())
                .or_default()
                .entry(e.service.clone())
                .or_default() += 1;
        }
        let regions = counts
            .into_iter()
            .map(|(region, per_service)| {
                let total: usize = per_service.values().sum();
                let probabilities = per_service
                    .into_iter()
                    .map(|(s, c)| (s, c as f64 / total as f64))
                    .collect();
                (
                    region,
                    RegionTable {
                        probabilities,
                        total_events: total,
                    },
                )
            })
            .collect();
        Self { regions }
    }
}

/// `P(Seq) * |DB_r|`, where `P(Seq)` multiplies the probabilities of the
/// start symbols only.
pub fn expected_support(seq: &[EndpointSymbol], table: &EventProbabilityTable, region: &str) -> Result<f64> {
    let unknown = |symbol: &EndpointSymbol| Error::UnknownEventType {
        symbol: symbol.to_string(),
        region: region.to_string(),
    };
    let Some(rt) = table.regions.get(region) else {
        return match seq.first() {
            Some(s) => Err(unknown(s)),
            None => Ok(0.0),
        };
    };
    let mut p = 1.0;
    for s in seq.iter().filter(|s| s.is_start()) {
        p *= rt.probabilities.get(&s.service).ok_or_else(|| unknown(s))?;
    }
    Ok(p * rt.total_events as f64)
}

/// `(sup - expect) / sqrt(expect)`.
pub fn significance(pattern: &CompositionPattern, table: &EventProbabilityTable) -> Result<f64> {
    let expect = expected_support(&pattern.seq, table, &pattern.region)?;
    z_score(pattern.support as f64, expect).ok_or_else(|| Error::ZeroExpectation(format_symbols(&pattern.seq)))
}

pub(crate) fn z_score(support: f64, expect: f64) -> Option<f64> {
    (expect > 0.0).then(|| (support - expect) / expect.sqrt())
}

/// Sum of `1 / max(manhattan, resolution)` over consecutive services of the
/// instance, ordered by start time. Zero for a single service.
pub fn instance_spatial_proximity(instance: &Instance, resolution: f64) -> Result<f64> {
    let coords = instance
        .events
        .iter()
        .map(|e| {
            e.coord
                .ok_or_else(|| Error::Inapplicable(format!("service `{}` has no coordinates", e.service)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(coords
        .windows(2)
        .map(|w| 1.0 / w[0].manhattan(&w[1]).max(resolution))
        .sum())
}

pub fn spatial_proximity(pattern: &CompositionPattern, resolution: f64) -> Result<f64> {
    mean(
        pattern
            .instances
            .iter()
            .map(|i| instance_spatial_proximity(i, resolution))
            .collect::<Result<Vec<_>>>()?,
    )
}

/// Integrated service coverage over the instance span, divided by
/// `span * n`. An instance whose span is a single point scores 1.
pub fn instance_temporal_proximity(instance: &Instance) -> f64 {
    let n = instance.events.len();
    if n == 0 {
        return 0.0;
    }
    let (t1, t2) = instance.interval();
    if t2 == t1 {
        return 1.0;
    }
    let covered: i64 = instance.events.iter().map(|e| e.end - e.start).sum();
    covered as f64 / ((t2 - t1) as f64 * n as f64)
}

pub fn temporal_proximity(pattern: &CompositionPattern) -> f64 {
    mean(pattern.instances.iter().map(instance_temporal_proximity).collect()).unwrap_or(0.0)
}

fn mean(values: Vec<f64>) -> Result<f64> {
    if values.is_empty() {
        return Ok(0.0);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Weights of the spatial and temporal terms; they must sum to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProximityWeights {
    pub spatial: f64,
    pub temporal: f64,
}

impl Default for ProximityWeights {
    fn default() -> Self {
        Self {
            spatial: 0.0,
            temporal: 1.0,
        }
    }
}

impl ProximityWeights {
    pub fn new(spatial: f64, temporal: f64) -> Result<Self> {
        let w = Self { spatial, temporal };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |w: f64| (0.0..=1.0).contains(&w);
        if !ok(self.spatial) || !ok(self.temporal) || (self.spatial + self.temporal - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "proximity weights must lie in [0, 1] and sum to 1, got ({}, {})",
                self.spatial, self.temporal
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityScore {
    pub significance: f64,
    pub spatial_proximity: f64,
    pub temporal_proximity: f64,
    /// `w1 * spatial + w2 * temporal`.
    pub combined: f64,
}

/// Scores one pattern. Spatial proximity is only required when its weight
/// is nonzero; otherwise it is reported as 0 when coordinates are missing.
pub fn score(
    pattern: &CompositionPattern,
    table: &EventProbabilityTable,
    weights: ProximityWeights,
    resolution: f64,
) -> Result<QualityScore> {
    let significance = significance(pattern, table)?;
    let spatial = match spatial_proximity(pattern, resolution) {
        Ok(v) => v,
        Err(e @ Error::Inapplicable(_)) if weights.spatial > 0.0 => return Err(e),
        Err(Error::Inapplicable(_)) => 0.0,
        Err(e) => return Err(e),
    };
    let temporal = temporal_proximity(pattern);
    Ok(QualityScore {
        significance,
        spatial_proximity: spatial,
        temporal_proximity: temporal,
        combined: weights.spatial * spatial + weights.temporal * temporal,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QualityThresholds {
    pub minsig: f64,
    pub minpro: f64,
    pub weights: ProximityWeights,
    /// Smallest distance used in the inverse-distance terms.
    pub resolution: f64,
}

impl Default for QualityThresholds {
    fn default() -> Self {
        Self {
            minsig: 0.01,
            minpro: 0.39,
            weights: ProximityWeights::default(),
            resolution: DEFAULT_RESOLUTION,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredPattern {
    pub pattern: CompositionPattern,
    pub score: QualityScore,
}

/// Counts from one filtering pass. The two `below_*` counts are
/// independent of each other.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub below_minsig: usize,
    pub below_minpro: usize,
    pub kept: usize,
}

/// Keeps patterns with `significance >= minsig` and `combined >= minpro`.
pub fn filter_quality(
    patterns: Vec<CompositionPattern>,
    table: &EventProbabilityTable,
    thresholds: &QualityThresholds,
) -> Result<(Vec<ScoredPattern>, FilterReport)> {
    thresholds.weights.validate()?;
    let scores: Vec<QualityScore> = patterns
        .par_iter()
        .map(|p| score(p, table, thresholds.weights, thresholds.resolution))
        .collect::<Result<_>>()?;
    let mut report = FilterReport {
        input: patterns.len(),
        ..Default::default()
    };
    let mut kept = Vec::new();
    for (pattern, score) in patterns.into_iter().zip(scores) {
        let sig_ok = score.significance >= thresholds.minsig;
        let pro_ok = score.combined >= thresholds.minpro;
        report.below_minsig += usize::from(!sig_ok);
        report.below_minpro += usize::from(!pro_ok);
        if sig_ok && pro_ok {
            kept.push(ScoredPattern { pattern, score });
        }
    }
    report.kept = kept.len();
    Ok((kept, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpminer::InstanceEvent;
    use crate::event::{Coord, ServiceEvent, EventSequence};

    fn ie(service: &str, start: i64, end: i64) -> InstanceEvent {
        InstanceEvent {
            service: service.into(),
            start,
            end,
            coord: None,
            region: "r".into(),
        }
    }

    fn hm(h: i64, m: i64) -> i64 {
        h * 3600 + m * 60
    }

    fn table(region: &str, probs: &[(&str, f64)], total: usize) -> EventProbabilityTable {
        let mut t = EventProbabilityTable::default();
        t.regions.insert(
            region.into(),
            RegionTable {
                probabilities: probs.iter().map(|(s, p)| (s.to_string(), *p)).collect(),
                total_events: total,
            },
        );
        t
    }

    fn syms(s: &str) -> Vec<EndpointSymbol> {
        s.split_whitespace().map(|t| t.parse().unwrap()).collect()
    }

    #[test]
    fn expected_support_single_factor() {
        let t = table("k", &[("a", 0.5)], 10);
        assert_eq!(expected_support(&syms("a+ a-"), &t, "k").unwrap(), 5.0);
    }

    #[test]
    fn expected_support_two_factors() {
        let t = table("k", &[("a", 0.5), ("b", 0.2)], 100);
        let e = expected_support(&syms("a+ b+ b- a-"), &t, "k").unwrap();
        assert!((e - 10.0).abs() < 1e-12);
    }

    #[test]
    fn end_symbols_add_no_factor() {
        let t = table("k", &[("a", 0.3)], 7);
        assert_eq!(
            expected_support(&syms("a+ a-"), &t, "k").unwrap(),
            expected_support(&syms("a+"), &t, "k").unwrap()
        );
    }

    #[test]
    fn unknown_event_type_is_named() {
        let t = table("k", &[("a", 1.0)], 3);
        match expected_support(&syms("q+ q-"), &t, "k") {
            Err(Error::UnknownEventType { symbol, .. }) => assert_eq!(symbol, "q+"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn z_score_cases() {
        assert_eq!(z_score(4.0, 4.0), Some(0.0));
        assert_eq!(z_score(9.0, 4.0), Some(2.5));
        assert_eq!(z_score(1.0, 0.0), None);
    }

    #[test]
    fn significance_zero_expectation_errors() {
        let t = table("k", &[("a", 0.0)], 3);
        let p = CompositionPattern {
            seq: syms("a+ a-"),
            support: 1,
            region: "k".into(),
            instances: vec![],
        };
        assert!(matches!(significance(&p, &t), Err(Error::ZeroExpectation(_))));
    }

    #[test]
    fn table_probabilities_sum_to_one() {
        let seq = EventSequence::new(
            0,
            vec![
                ServiceEvent::new("a", 0, 1, "k").unwrap(),
                ServiceEvent::new("b", 0, 1, "k").unwrap(),
                ServiceEvent::new("a", 2, 3, "k").unwrap(),
                ServiceEvent::new("c", 0, 1, "bath").unwrap(),
            ],
        );
        let t = EventProbabilityTable::from_db(&EventDatabase::new(vec![seq]).unwrap());
        for rt in t.regions.values() {
            let sum: f64 = rt.probabilities.values().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
        assert_eq!(t.regions["k"].total_events, 3);
        assert!((t.regions["k"].probabilities["a"] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn temporal_stove_and_washer() {
        let inst = Instance {
            sid: 0,
            events: vec![ie("stove", hm(18, 0), hm(19, 0)), ie("washer", hm(18, 40), hm(19, 20))],
        };
        assert_eq!(instance_temporal_proximity(&inst), 0.625);
    }

    #[test]
    fn temporal_identical_intervals_is_one() {
        let inst = Instance {
            sid: 0,
            events: vec![ie("stove", hm(18, 0), hm(19, 0)), ie("fan", hm(18, 0), hm(19, 0))],
        };
        assert_eq!(instance_temporal_proximity(&inst), 1.0);
    }

    #[test]
    fn temporal_single_service_is_one() {
        let inst = Instance {
            sid: 0,
            events: vec![ie("a", 5, 50)],
        };
        assert_eq!(instance_temporal_proximity(&inst), 1.0);
    }

    #[test]
    fn temporal_point_span_is_one() {
        let inst = Instance {
            sid: 0,
            events: vec![ie("a", 5, 5), ie("b", 5, 5)],
        };
        assert_eq!(instance_temporal_proximity(&inst), 1.0);
    }

    #[test]
    fn spatial_two_locations() {
        let mut a = ie("a", 0, 1);
        a.coord = Some(Coord::new(1.0, 2.0));
        let mut b = ie("b", 1, 2);
        b.coord = Some(Coord::new(2.0, 4.0));
        let inst = Instance {
            sid: 0,
            events: vec![a, b],
        };
        let v = instance_spatial_proximity(&inst, 1.0).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-12);
        assert!((v - 0.33).abs() <= 0.005);
    }

    #[test]
    fn spatial_zero_distance_uses_resolution() {
        let events: Vec<_> = ["a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut e = ie(s, i as i64, i as i64 + 1);
                e.coord = Some(Coord::new(3.0, 3.0));
                e
            })
            .collect();
        let inst = Instance { sid: 0, events };
        assert_eq!(instance_spatial_proximity(&inst, 1.0).unwrap(), 2.0);
    }

    #[test]
    fn spatial_single_service_is_zero() {
        let mut a = ie("a", 0, 1);
        a.coord = Some(Coord::new(1.0, 2.0));
        let inst = Instance {
            sid: 0,
            events: vec![a],
        };
        assert_eq!(instance_spatial_proximity(&inst, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn spatial_without_coordinates_is_inapplicable() {
        let inst = Instance {
            sid: 0,
            events: vec![ie("a", 0, 1), ie("b", 0, 1)],
        };
        assert!(matches!(instance_spatial_proximity(&inst, 1.0), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(ProximityWeights::new(0.3, 0.7).is_ok());
        assert!(ProximityWeights::new(0.3, 0.3).is_err());
        assert!(ProximityWeights::new(-0.5, 1.5).is_err());
    }

    #[test]
    fn score_requires_coordinates_when_spatial_weighted() {
        let t = table("r", &[("a", 0.5), ("b", 0.5)], 4);
        let p = CompositionPattern {
            seq: syms("a+ b+ b- a-"),
            support: 2,
            region: "r".into(),
            instances: vec![Instance {
                sid: 0,
                events: vec![ie("a", 0, 10), ie("b", 2, 8)],
            }],
        };
        assert!(score(&p, &t, ProximityWeights::default(), 1.0).is_ok());
        let w = ProximityWeights::new(0.5, 0.5).unwrap();
        assert!(matches!(score(&p, &t, w, 1.0), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn vacuous_filter_keeps_everything() {
        let t = table("r", &[("a", 0.5), ("b", 0.5)], 4);
        let p = CompositionPattern {
            seq: syms("a+ a- b+ b-"),
            support: 1,
            region: "r".into(),
            instances: vec![Instance {
                sid: 0,
                events: vec![ie("a", 0, 1), ie("b", 100, 101)],
            }],
        };
        let th = QualityThresholds {
            minsig: f64::NEG_INFINITY,
            minpro: 0.0,
            ..Default::default()
        };
        let (kept, report) = filter_quality(vec![p], &t, &th).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(report.kept, 1);
    }
}
