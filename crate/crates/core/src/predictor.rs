//! Recognition of the ongoing activity and prediction of the next one.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{minute_of_day, IntervalRecord, ServiceEvent, Timestamp, MINUTES_PER_DAY};
use crate::periodic::{majority, PeriodicPattern, RepresentativeInterval};
use crate::relations::{AllenRelation, TemporalMatrix};

/// Weights of the structure, time and location terms of the recognition
/// score.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub structure: f64,
    pub time: f64,
    pub location: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            structure: 1.0,
            time: 1.0,
            location: 1.0,
        }
    }
}

/// Knowledge base used for prediction.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PredictionModel {
    pub patterns: Vec<PeriodicPattern>,
    pub matrix: TemporalMatrix,
    /// Sorted union of the patterns' event types.
    pub vocabulary: Vec<String>,
    #[serde(default)]
    pub weights: ScoreWeights,
}

impl PredictionModel {
    pub fn new(patterns: Vec<PeriodicPattern>, matrix: TemporalMatrix, weights: ScoreWeights) -> Result<Self> {
        if matrix.len() != patterns.len() || matrix.cells.iter().any(|row| row.len() != patterns.len()) {
            return Err(Error::Invariant(format!(
                "matrix dimension {} does not match {} patterns",
                matrix.len(),
                patterns.len()
            )));
        }
        let vocabulary: BTreeSet<String> = patterns
            .iter()
            .flat_map(|p| p.base.entries.iter().map(|e| e.event.clone()))
            .collect();
        Ok(Self {
            patterns,
            matrix,
            vocabulary: vocabulary.into_iter().collect(),
            weights,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservedEvent {
    pub service: String,
    pub start: Timestamp,
    /// `None` while the event is still ongoing.
    pub end: Option<Timestamp>,
    pub region: String,
}

impl From<&ServiceEvent> for ObservedEvent {
    fn from(e: &ServiceEvent) -> Self {
        Self {
            service: e.service.clone(),
            start: e.start,
            end: Some(e.end),
            region: e.region.clone(),
        }
    }
}

impl From<IntervalRecord> for ObservedEvent {
    fn from(r: IntervalRecord) -> Self {
        Self {
            service: r.service,
            start: r.start,
            end: r.end,
            region: r.region,
        }
    }
}

/// A partial event sequence to recognize.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub events: Vec<ObservedEvent>,
    /// First start to last known timestamp.
    pub window: (Timestamp, Timestamp),
    /// Majority region of the events.
    pub region: String,
}

impl Observation {
    /// Ongoing events are treated as ending at `now`, which defaults to the
    /// latest timestamp seen in the events.
    pub fn new(events: Vec<ObservedEvent>, now: Option<Timestamp>) -> Result<Self> {
        if events.is_empty() {
            return Err(Error::InvalidEvent("observation has no events".into()));
        }
        let first = events.iter().map(|e| e.start).min().expect("nonempty");
        let last_known = events
            .iter()
            .map(|e| e.end.unwrap_or(e.start))
            .max()
            .expect("nonempty");
        let now = now.unwrap_or(last_known).max(last_known);
        let region = majority(events.iter().map(|e| e.region.as_str())).unwrap_or_default();
        Ok(Self {
            events,
            window: (first, now),
            region,
        })
    }

    pub fn from_events(events: &[ServiceEvent]) -> Result<Self> {
        Self::new(events.iter().map(ObservedEvent::from).collect(), None)
    }

    pub fn services(&self) -> BTreeSet<String> {
        self.events.iter().map(|e| e.service.clone()).collect()
    }

    /// Window on the time-of-day axis in minutes, end unwrapped.
    fn window_minutes(&self) -> (f64, f64) {
        let start = minute_of_day(self.window.0) as f64 + (self.window.0.rem_euclid(60)) as f64 / 60.0;
        (start, start + (self.window.1 - self.window.0) as f64 / 60.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub y: f64,
    pub y_s: f64,
    pub y_t: f64,
    pub y_l: f64,
}

/// Coverage density of two intervals over their joint span.
pub fn pair_temporal_proximity(a: (f64, f64), b: (f64, f64)) -> f64 {
    let span = a.1.max(b.1) - a.0.min(b.0);
    if span <= 0.0 {
        return 1.0;
    }
    ((a.1 - a.0) + (b.1 - b.0)) / (2.0 * span)
}

fn structure_similarity(pattern: &PeriodicPattern, present: &BTreeSet<String>, vocabulary: &[String]) -> f64 {
    let mut sq = 0.0;
    for v in vocabulary {
        let p = pattern.base.probability(v);
        let x = if present.contains(v) { 1.0 } else { 0.0 };
        sq += (p - x) * (p - x);
    }
    // Observed types outside the vocabulary: pattern coordinate 0.
    sq += present
        .iter()
        .filter(|s| vocabulary.binary_search(s).is_err())
        .count() as f64;
    1.0 / (1.0 + sq.sqrt())
}

fn time_similarity(pattern: &PeriodicPattern, window: (f64, f64)) -> f64 {
    let day = MINUTES_PER_DAY as f64;
    pattern
        .intervals
        .iter()
        .flat_map(|iv| {
            [-day, 0.0, day].into_iter().map(move |shift| {
                pair_temporal_proximity((iv.start as f64, iv.end as f64), (window.0 + shift, window.1 + shift))
            })
        })
        .fold(0.0, f64::max)
}

/// Structure, time and location similarity of an observation to a
/// pattern, and their weighted sum.
pub fn score(pattern: &PeriodicPattern, obs: &Observation, vocabulary: &[String], weights: &ScoreWeights) -> ScoreBreakdown {
    let y_s = structure_similarity(pattern, &obs.services(), vocabulary);
    let y_t = time_similarity(pattern, obs.window_minutes());
    let y_l = if pattern.region == obs.region { 1.0 } else { 0.0 };
    ScoreBreakdown {
        y: weights.structure * y_s + weights.time * y_t + weights.location * y_l,
        y_s,
        y_t,
        y_l,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub id: usize,
    pub score: ScoreBreakdown,
}

/// All patterns ranked by descending score, ties by pattern id.
pub fn recognize(obs: &Observation, model: &PredictionModel) -> Vec<Ranked> {
    let mut ranked: Vec<Ranked> = model
        .patterns
        .iter()
        .enumerate()
        .map(|(id, p)| Ranked {
            id,
            score: score(p, obs, &model.vocabulary, &model.weights),
        })
        .collect();
    ranked.sort_by(|a, b| b.score.y.total_cmp(&a.score.y).then(a.id.cmp(&b.id)));
    ranked
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextActivity {
    pub id: usize,
    pub tran_pro: f64,
    pub interval: Option<RepresentativeInterval>,
    pub location: String,
    /// `tran_pro * P` of the chosen interval; 0 without an interval.
    pub confidence: f64,
    pub relation: Option<AllenRelation>,
}

fn most_probable<'a>(ivs: impl Iterator<Item = &'a RepresentativeInterval>) -> Option<&'a RepresentativeInterval> {
    ivs.fold(None, |best, iv| match best {
        Some(b) if b.probability >= iv.probability => Some(b),
        _ => Some(iv),
    })
}

/// Most likely successor of `recognized` and when and where it happens.
///
/// Returns `None` when the pattern has no outgoing transitions.
pub fn predict_next(recognized: usize, model: &PredictionModel) -> Option<NextActivity> {
    let row = model.matrix.cells.get(recognized)?;
    let (next, cell) = row
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != recognized)
        .fold(None, |best: Option<(usize, &crate::relations::MatrixCell)>, (j, c)| match best {
            Some((_, bc)) if bc.tran_pro >= c.tran_pro => best,
            _ => Some((j, c)),
        })?;
    if cell.tran_pro <= 0.0 {
        return None;
    }
    let target = &model.patterns[next];
    let after = model.patterns[recognized]
        .best_interval()
        .map(|iv| iv.end.rem_euclid(MINUTES_PER_DAY));
    let interval = after
        .and_then(|t| most_probable(target.intervals.iter().filter(|iv| iv.start >= t)))
        .or_else(|| most_probable(target.intervals.iter()))
        .cloned();
    let confidence = cell.tran_pro * interval.as_ref().map_or(0.0, |iv| iv.probability);
    Some(NextActivity {
        id: next,
        tran_pro: cell.tran_pro,
        location: interval
            .as_ref()
            .map_or_else(|| target.region.clone(), |iv| iv.location.clone()),
        interval,
        confidence,
        relation: cell.dominant_relation(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub recognized: Ranked,
    pub next: Option<NextActivity>,
}

/// Recognizes the observation and predicts what follows it.
pub fn predict(obs: &Observation, model: &PredictionModel) -> Option<Prediction> {
    let top = *recognize(obs, model).first()?;
    Some(Prediction {
        recognized: top,
        next: predict_next(top.id, model),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecognizedRecord {
    pub id: usize,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "Y_s")]
    pub y_s: f64,
    #[serde(rename = "Y_T")]
    pub y_t: f64,
    #[serde(rename = "Y_L")]
    pub y_l: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NextRecord {
    pub id: usize,
    pub start_hhmm: Option<String>,
    pub end_hhmm: Option<String>,
    pub location: String,
    pub confidence: f64,
    pub relation: Option<AllenRelation>,
}

/// Serialized form of a [`Prediction`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub recognized: RecognizedRecord,
    pub next: Option<NextRecord>,
}

impl From<&Prediction> for PredictionRecord {
    fn from(p: &Prediction) -> Self {
        let s = p.recognized.score;
        Self {
            recognized: RecognizedRecord {
                id: p.recognized.id,
                y: s.y,
                y_s: s.y_s,
                y_t: s.y_t,
                y_l: s.y_l,
            },
            next: p.next.as_ref().map(|n| NextRecord {
                id: n.id,
                start_hhmm: n.interval.as_ref().map(|iv| iv.start_hhmm()),
                end_hhmm: n.interval.as_ref().map(|iv| iv.end_hhmm()),
                location: n.location.clone(),
                confidence: n.confidence,
                relation: n.relation,
            }),
        }
    }
}
