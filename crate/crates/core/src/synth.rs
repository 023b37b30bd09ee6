//! Synthetic multi-day traces from planted activity definitions.

use std::collections::{BTreeMap, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::event::{segment, Coord, EventDatabase, SegmentPolicy, ServiceEvent, Timestamp, SECONDS_PER_DAY};
use crate::relations::AllenRelation;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionalService {
    pub service: String,
    pub probability: f64,
}

/// `relation` holds from the source activity to `activity`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Successor {
    pub activity: String,
    pub relation: AllenRelation,
    #[serde(default = "one")]
    pub probability: f64,
    /// Minutes between source end and target start for `before`.
    #[serde(default = "default_gap")]
    pub gap: [i64; 2],
}

fn one() -> f64 {
    1.0
}

fn default_gap() -> [i64; 2] {
    [5, 30]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySpec {
    pub name: String,
    pub region: String,
    pub mandatory: Vec<String>,
    #[serde(default)]
    pub optional: Vec<OptionalService>,
    /// Minutes after midnight.
    pub mean_start: i64,
    /// Start is drawn uniformly within `mean_start ± jitter` minutes.
    #[serde(default)]
    pub jitter: i64,
    /// Inclusive range in minutes.
    pub duration: [i64; 2],
    #[serde(default = "one")]
    pub probability: f64,
    #[serde(default)]
    pub successors: Vec<Successor>,
    /// Fixed location of each service.
    #[serde(default)]
    pub locations: BTreeMap<String, [f64; 2]>,
}

impl ActivitySpec {
    /// An activity with fixed time and duration that happens every day.
    pub fn fixed(name: &str, region: &str, mandatory: &[&str], start: i64, duration: i64) -> Self {
        Self {
            name: name.into(),
            region: region.into(),
            mandatory: mandatory.iter().map(|s| s.to_string()).collect(),
            optional: Vec::new(),
            mean_start: start,
            jitter: 0,
            duration: [duration, duration],
            probability: 1.0,
            successors: Vec::new(),
            locations: BTreeMap::new(),
        }
    }

    fn service_count(&self) -> usize {
        self.mandatory.len() + self.optional.len()
    }
}

/// Top-level shape of a spec file: a list of `[[activity]]` tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    #[serde(rename = "activity", default)]
    pub activities: Vec<ActivitySpec>,
}

impl SynthSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec = toml::from_str(text).map_err(|e| Error::Spec(e.to_string()))?;
        validate(&spec.activities)?;
        Ok(spec)
    }
}

/// One planted activity occurrence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub day: i64,
    pub label: String,
    pub start: Timestamp,
    pub end: Timestamp,
    pub region: String,
    pub services: Vec<String>,
}

fn prob_ok(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

pub fn validate(specs: &[ActivitySpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::Spec("no activities".into()));
    }
    let index: HashMap<&str, usize> = specs.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
    if index.len() != specs.len() {
        return Err(Error::Spec("duplicate activity names".into()));
    }
    for (i, a) in specs.iter().enumerate() {
        let bad = |m: String| Err(Error::Spec(format!("{}: {m}", a.name)));
        if a.mandatory.is_empty() {
            return bad("needs at least one mandatory service".into());
        }
        if !prob_ok(a.probability) || a.optional.iter().any(|o| !prob_ok(o.probability)) {
            return bad("probabilities must lie in [0,1]".into());
        }
        if a.jitter < 0 {
            return bad("jitter must be nonnegative".into());
        }
        let [lo, hi] = a.duration;
        if lo < 1 || hi < lo {
            return bad(format!("bad duration range [{lo}, {hi}]"));
        }
        if (lo * 60) < 2 * (a.service_count() as i64 + 1) {
            return bad("duration too short to nest all services".into());
        }
        for s in &a.successors {
            let Some(&j) = index.get(s.activity.as_str()) else {
                return bad(format!("unknown successor {}", s.activity));
            };
            if j <= i {
                return bad(format!("successor {} must be listed after its source", s.activity));
            }
            if !prob_ok(s.probability) {
                return bad("successor probability must lie in [0,1]".into());
            }
            let target = &specs[j];
            let ok = match s.relation {
                AllenRelation::Before => s.gap[0] >= 1 && s.gap[1] >= s.gap[0],
                AllenRelation::Meet | AllenRelation::Equal => true,
                AllenRelation::Overlap => lo >= 2 && target.duration[0] >= 2,
                AllenRelation::StartBy | AllenRelation::Finish => target.duration[0] > hi,
                AllenRelation::During => target.duration[0] > hi + 1,
            };
            if !ok {
                return bad(format!("relation {} to {} cannot be satisfied", s.relation, s.activity));
            }
        }
    }
    Ok(())
}

/// Target interval in minutes such that `relation` holds from `src`.
fn place(rng: &mut ChaCha8Rng, src: (i64, i64), link: &Successor, dur: [i64; 2]) -> (i64, i64) {
    let (s, e) = src;
    let len = e - s;
    let d = rng.gen_range(dur[0]..=dur[1]);
    match link.relation {
        AllenRelation::Before => {
            let g = rng.gen_range(link.gap[0]..=link.gap[1]);
            (e + g, e + g + d)
        }
        AllenRelation::Meet => (e, e + d),
        AllenRelation::Equal => (s, e),
        AllenRelation::StartBy => (s, s + d),
        AllenRelation::Finish => (e - d, e),
        AllenRelation::Overlap => {
            let u = rng.gen_range((len - d + 1).max(1)..=len - 1);
            (s + u, s + u + d)
        }
        AllenRelation::During => {
            let u = rng.gen_range(1..=d - len - 1);
            (s - u, s - u + d)
        }
    }
}

/// Generates `days` days of activity. Activities that are the target of a
/// successor link occur only through that link; the others occur daily
/// with their own probability. Within an activity the first mandatory
/// service spans the whole interval and every further service is nested
/// strictly inside the previous one.
pub fn generate(specs: &[ActivitySpec], days: u32, seed: u64) -> Result<(EventDatabase, Vec<GroundTruth>)> {
    validate(specs)?;
    if days == 0 {
        return Err(Error::Spec("days must be at least 1".into()));
    }
    let index: HashMap<&str, usize> = specs.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
    let targeted: Vec<bool> = (0..specs.len())
        .map(|i| specs.iter().any(|s| s.successors.iter().any(|l| index[l.activity.as_str()] == i)))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut truth = Vec::new();
    for day in 0..days as i64 {
        let mut pending: HashMap<usize, (i64, i64)> = HashMap::new();
        for (i, a) in specs.iter().enumerate() {
            let interval = if targeted[i] {
                pending.remove(&i)
            } else if rng.gen_bool(a.probability) {
                let start = a.mean_start + rng.gen_range(-a.jitter..=a.jitter);
                Some((start, start + rng.gen_range(a.duration[0]..=a.duration[1])))
            } else {
                None
            };
            let Some((s, e)) = interval else {
                continue;
            };
            for link in &a.successors {
                if rng.gen_bool(link.probability) {
                    let j = index[link.activity.as_str()];
                    let placed = place(&mut rng, (s, e), link, specs[j].duration);
                    pending.entry(j).or_insert(placed);
                }
            }

            let mut services: Vec<&str> = a.mandatory.iter().map(String::as_str).collect();
            for o in &a.optional {
                if rng.gen_bool(o.probability) {
                    services.push(&o.service);
                }
            }
            let base = day * SECONDS_PER_DAY;
            let (s_sec, e_sec) = (base + s * 60, base + e * 60);
            let step = (e_sec - s_sec) / (2 * (services.len() as i64 + 1));
            for (k, svc) in services.iter().enumerate() {
                let k = k as i64;
                let mut ev = ServiceEvent::new(*svc, s_sec + k * step, e_sec - k * step, a.region.as_str())?;
                if let Some(&[x, y]) = a.locations.get(*svc) {
                    ev = ev.with_coords(Coord::new(x, y), Coord::new(x, y));
                }
                events.push(ev);
            }
            truth.push(GroundTruth {
                day,
                label: a.name.clone(),
                start: s_sec,
                end: e_sec,
                region: a.region.clone(),
                services: services.iter().map(|s| s.to_string()).collect(),
            });
        }
    }
    Ok((segment(&events, SegmentPolicy::ByDay), truth))
}
