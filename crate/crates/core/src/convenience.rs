//! Convenience of predictions measured as saved interactions and saved
//! waiting time against a recorded trace.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{day_of, EventDatabase, ServiceEvent, Timestamp};
use crate::predictor::{predict, Observation, PredictionModel};

/// Share of the actual event types that were predicted. `None` when there
/// were no actual events.
pub fn saving_efforts(predicted: &BTreeSet<String>, actual: &BTreeSet<String>) -> Option<f64> {
    if actual.is_empty() {
        return None;
    }
    Some(predicted.intersection(actual).count() as f64 / actual.len() as f64)
}

/// Sum of the waits of the correctly predicted event types.
pub fn saving_time(correct: &BTreeSet<String>, waits: &WaitTable) -> f64 {
    correct.iter().map(|s| waits.wait(s)).sum()
}

/// Waiting time in minutes per service; absent services wait 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WaitTable {
    pub waits: BTreeMap<String, f64>,
}

impl WaitTable {
    pub fn new(waits: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((s, w)) = waits.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::Config(format!("wait for {s} must be a nonnegative number, got {w}")));
        }
        Ok(Self { waits })
    }

    /// Parses `service,minutes` lines. Blank lines and `#` comments are
    /// skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut waits = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (service, minutes) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(n + 1, "expected service,minutes"))?;
            let minutes: f64 = minutes
                .trim()
                .parse()
                .map_err(|_| Error::parse(n + 1, format!("bad wait {:?}", minutes.trim())))?;
            waits.insert(service.trim().to_string(), minutes);
        }
        Self::new(waits)
    }

    pub fn wait(&self, service: &str) -> f64 {
        self.waits.get(service).copied().unwrap_or(0.0)
    }
}

/// Anything that guesses the event types of the next time segment.
pub trait NextEventPredictor: Sync {
    /// `horizon` is the segment being predicted; real predictors must not
    /// look at it.
    fn predict_events(&self, obs: &Observation, horizon: (Timestamp, Timestamp)) -> BTreeSet<String>;
}

/// Minimum involvement probability for an event type of the predicted
/// pattern to count as predicted.
pub const PREDICTED_EVENT_THRESHOLD: f64 = 0.5;

impl NextEventPredictor for PredictionModel {
    fn predict_events(&self, obs: &Observation, _horizon: (Timestamp, Timestamp)) -> BTreeSet<String> {
        predict(obs, self)
            .and_then(|p| p.next)
            .map(|n| self.patterns[n.id].base.events_at_least(PREDICTED_EVENT_THRESHOLD))
            .unwrap_or_default()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowOutcome {
    pub sid: u32,
    pub day: i64,
    /// Activity boundary the prediction was made at.
    pub at: Timestamp,
    pub predicted: usize,
    pub actual: usize,
    pub correct: usize,
    pub saving_efforts: f64,
    pub saving_time: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Mean over evaluation windows.
    pub saved_efforts: f64,
    /// Total over evaluation windows.
    pub saved_time_min: f64,
    pub windows: usize,
    pub predicted: usize,
    pub actual: usize,
    pub correct: usize,
}

impl Summary {
    fn of<'a>(windows: impl Iterator<Item = &'a WindowOutcome>) -> Self {
        let mut s = Summary::default();
        for w in windows {
            s.windows += 1;
            s.saved_efforts += w.saving_efforts;
            s.saved_time_min += w.saving_time;
            s.predicted += w.predicted;
            s.actual += w.actual;
            s.correct += w.correct;
        }
        if s.windows > 0 {
            s.saved_efforts /= s.windows as f64;
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DaySummary {
    pub day: i64,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvenienceReport {
    pub days: Vec<DaySummary>,
    pub overall: Summary,
    /// Boundaries with no actual events in the following window.
    pub skipped_windows: usize,
    pub windows: Vec<WindowOutcome>,
}

/// Ends of the busy runs of a sequence: maximal groups of transitively
/// overlapping events. The last run has no successor and is dropped.
pub fn activity_boundaries(events: &[ServiceEvent]) -> Vec<Timestamp> {
    let mut spans: Vec<(Timestamp, Timestamp)> = events.iter().map(|e| (e.start, e.end)).collect();
    spans.sort_unstable();
    let mut out = Vec::new();
    let mut run_end: Option<Timestamp> = None;
    for (s, e) in spans {
        match run_end {
            Some(end) if s <= end => run_end = Some(end.max(e)),
            Some(end) => {
                out.push(end);
                run_end = Some(e);
            }
            None => run_end = Some(e),
        }
    }
    out
}

struct Probe<'a> {
    sid: u32,
    at: Timestamp,
    observed: Vec<&'a ServiceEvent>,
    actual: BTreeSet<String>,
}

/// Slides through each sequence of `trace`; at every activity boundary the
/// events of the preceding `window_minutes` form the observation and the
/// event types starting within the next `window_minutes` are the truth.
pub fn evaluate(
    trace: &EventDatabase,
    predictor: &dyn NextEventPredictor,
    waits: &WaitTable,
    window_minutes: i64,
) -> Result<ConvenienceReport> {
    if window_minutes <= 0 {
        return Err(Error::Config(format!("window must be positive, got {window_minutes}")));
    }
    let w = window_minutes * 60;
    let mut probes = Vec::new();
    let mut skipped = 0;
    for seq in &trace.sequences {
        for at in activity_boundaries(&seq.events) {
            let actual: BTreeSet<String> = seq
                .events
                .iter()
                .filter(|e| e.start > at && e.start <= at + w)
                .map(|e| e.service.clone())
                .collect();
            if actual.is_empty() {
                skipped += 1;
                continue;
            }
            let observed = seq
                .events
                .iter()
                .filter(|e| e.start <= at && e.end > at - w)
                .collect();
            probes.push(Probe {
                sid: seq.sid,
                at,
                observed,
                actual,
            });
        }
    }

    let windows: Vec<WindowOutcome> = probes
        .par_iter()
        .map(|p| {
            let obs = Observation::new(p.observed.iter().map(|e| (*e).into()).collect(), Some(p.at))?;
            let predicted = predictor.predict_events(&obs, (p.at, p.at + w));
            let correct: BTreeSet<String> = predicted.intersection(&p.actual).cloned().collect();
            Ok(WindowOutcome {
                sid: p.sid,
                day: day_of(p.at),
                at: p.at,
                predicted: predicted.len(),
                actual: p.actual.len(),
                correct: correct.len(),
                saving_efforts: saving_efforts(&predicted, &p.actual).expect("actual nonempty"),
                saving_time: saving_time(&correct, waits),
            })
        })
        .collect::<Result<_>>()?;

    let mut by_day: BTreeMap<i64, Vec<&WindowOutcome>> = BTreeMap::new();
    for o in &windows {
        by_day.entry(o.day).or_default().push(o);
    }
    let days = by_day
        .into_iter()
        .map(|(day, ws)| DaySummary {
            day,
            summary: Summary::of(ws.into_iter()),
        })
        .collect();
    Ok(ConvenienceReport {
        days,
        overall: Summary::of(windows.iter()),
        skipped_windows: skipped,
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::{segment, SegmentPolicy};

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn efforts_examples() {
        assert_eq!(saving_efforts(&set(&["a", "b"]), &set(&["a", "b"])), Some(1.0));
        assert_eq!(saving_efforts(&set(&["x"]), &set(&["a"])), Some(0.0));
        assert_eq!(saving_efforts(&set(&["a", "b"]), &set(&["a", "b", "c"])), Some(2.0 / 3.0));
        assert_eq!(saving_efforts(&set(&["a"]), &set(&[])), None);
    }

    #[test]
    fn time_examples() {
        let waits = WaitTable::parse("a,5\nb,3\n# comment\n\nheater,5\n").unwrap();
        assert_eq!(saving_time(&set(&["a", "b"]), &waits), 8.0);
        assert_eq!(saving_time(&set(&[]), &waits), 0.0);
        assert_eq!(saving_time(&set(&["heater"]), &waits), 5.0);
        assert_eq!(saving_time(&set(&["unknown"]), &waits), 0.0);
    }

    #[test]
    fn negative_wait_rejected() {
        assert!(WaitTable::parse("a,-1").is_err());
        assert!(WaitTable::parse("a;1").is_err());
    }

    fn ev(s: &str, a: i64, b: i64) -> ServiceEvent {
        ServiceEvent::new(s, a * 60, b * 60, "home").unwrap()
    }

    /// Three activities a day: morning {kettle, toaster}, shower {heater},
    /// evening {tv}.
    fn script(days: i64) -> EventDatabase {
        let mut events = Vec::new();
        for d in 0..days {
            let o = d * 1440;
            events.push(ev("kettle", o + 420, o + 430));
            events.push(ev("toaster", o + 425, o + 435));
            events.push(ev("heater", o + 460, o + 480));
            events.push(ev("tv", o + 520, o + 600));
        }
        segment(&events, SegmentPolicy::ByDay)
    }

    struct Oracle<'a>(&'a EventDatabase);

    impl NextEventPredictor for Oracle<'_> {
        fn predict_events(&self, _obs: &Observation, h: (Timestamp, Timestamp)) -> BTreeSet<String> {
            self.0
                .events()
                .filter(|e| e.start > h.0 && e.start <= h.1)
                .map(|e| e.service.clone())
                .collect()
        }
    }

    struct Fixed(BTreeSet<String>);

    impl NextEventPredictor for Fixed {
        fn predict_events(&self, _: &Observation, _: (Timestamp, Timestamp)) -> BTreeSet<String> {
            self.0.clone()
        }
    }

    #[test]
    fn boundaries_between_runs() {
        let db = script(1);
        assert_eq!(activity_boundaries(&db.sequences[0].events), vec![435 * 60, 480 * 60]);
    }

    #[test]
    fn oracle_saves_everything() {
        let db = script(3);
        let waits = WaitTable::parse("heater,5\ntv,2").unwrap();
        let r = evaluate(&db, &Oracle(&db), &waits, 60).unwrap();
        assert_eq!(r.days.len(), 3);
        for d in &r.days {
            assert_eq!(d.summary.saved_efforts, 1.0);
            assert_eq!(d.summary.saved_time_min, 7.0);
        }
        assert_eq!(r.overall.saved_time_min, 21.0);
    }

    #[test]
    fn hand_computed_script() {
        // Boundary 07:15 sees heater in the next hour; boundary 08:00 sees tv.
        // Predicting {heater, kettle}: windows give 1 and 0, time 5 + 0.
        let db = script(2);
        let waits = WaitTable::parse("heater,5\ntv,2").unwrap();
        let r = evaluate(&db, &Fixed(set(&["heater", "kettle"])), &waits, 60).unwrap();
        assert_eq!(r.windows.len(), 4);
        assert_eq!(r.days[0].summary.saved_efforts, 0.5);
        assert_eq!(r.days[0].summary.saved_time_min, 5.0);
        assert_eq!(r.days[0].summary.correct, 1);
        assert_eq!(r.days[0].summary.predicted, 4);
        assert_eq!(r.overall.saved_time_min, 10.0);
    }

    #[test]
    fn empty_next_window_excluded() {
        let db = script(1);
        // With a 10-minute horizon nothing starts after either boundary.
        let r = evaluate(&db, &Fixed(set(&["tv"])), &WaitTable::default(), 10).unwrap();
        assert_eq!(r.skipped_windows, 2);
        assert!(r.days.is_empty());
        assert_eq!(r.overall.windows, 0);
    }
}
