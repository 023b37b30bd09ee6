//! Service events, log ingestion, segmentation into sequences and the
//! canonical endpoint representation used by the miner.
//!
//! Timestamps are naive local seconds since 1970-01-01 00:00; no time zone
//! conversion is applied anywhere.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = i64;

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const MINUTES_PER_DAY: i64 = 1_440;

/// Minutes since local midnight of `ts`.
pub fn minute_of_day(ts: Timestamp) -> i64 {
    ts.rem_euclid(SECONDS_PER_DAY) / 60
}

/// Day index of `ts` (days since the epoch).
pub fn day_of(ts: Timestamp) -> i64 {
    ts.div_euclid(SECONDS_PER_DAY)
}

/// Formats minutes-of-day as `HH:MM`, wrapping past midnight.
pub fn format_hhmm(minutes: i64) -> String {
    let m = minutes.rem_euclid(MINUTES_PER_DAY);
    format!("{:02}:{:02}", m / 60, m % 60)
}

/// Formats a timestamp as `YYYY-MM-DDTHH:MM:SS`.
pub fn format_timestamp(ts: Timestamp) -> String {
    match chrono::DateTime::from_timestamp(ts, 0) {
        Some(dt) => dt.naive_utc().format("%Y-%m-%dT%H:%M:%S").to_string(),
        None => ts.to_string(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    pub x: f64,
    pub y: f64,
}

impl Coord {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn manhattan(&self, other: &Coord) -> f64 {
        (self.x - other.x).abs() + (self.y - other.y).abs()
    }
}

/// One interval-based usage record of a single service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ServiceEvent {
    pub service: String,
    pub start: Timestamp,
    pub end: Timestamp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_coord: Option<Coord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_coord: Option<Coord>,
    pub region: String,
}

impl ServiceEvent {
    pub fn new(
        service: impl Into<String>,
        start: Timestamp,
        end: Timestamp,
        region: impl Into<String>,
    ) -> Result<Self> {
        let event = Self {
            service: service.into(),
            start,
            end,
            start_coord: None,
            end_coord: None,
            region: region.into(),
        };
        event.validate()?;
        Ok(event)
    }

    pub fn with_coords(mut self, start: Coord, end: Coord) -> Self {
        self.start_coord = Some(start);
        self.end_coord = Some(end);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.service.is_empty() {
            return Err(Error::InvalidEvent("empty service id".into()));
        }
        if self.start > self.end {
            return Err(Error::InvalidEvent(format!(
                "{}: start {} after end {}",
                self.service, self.start, self.end
            )));
        }
        if self.region.is_empty() {
            return Err(Error::InvalidEvent(format!("{}: empty region", self.service)));
        }
        if self.start_coord.is_some() != self.end_coord.is_some() {
            return Err(Error::InvalidEvent(format!(
                "{}: start and end coordinates must both be present or both absent",
                self.service
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> i64 {
        self.end - self.start
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Start,
    End,
}

/// A start (`s+`) or end (`s-`) symbol of a service.
///
/// Ordered by service id, then start before end.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EndpointSymbol {
    pub service: String,
    pub polarity: Polarity,
}

impl EndpointSymbol {
    pub fn start(service: impl Into<String>) -> Self {
        Self {
            service: service.into(),
            polarity: Polarity::Start,
        }
    }

    pub fn end(service: impl Into<String>) -> Self {
        Self {
            service: service.into(),
            polarity: Polarity::End,
        }
    }

    pub fn is_start(&self) -> bool {
        self.polarity == Polarity::Start
    }
}

impl fmt::Display for EndpointSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = match self.polarity {
            Polarity::Start => '+',
            Polarity::End => '-',
        };
        write!(f, "{}{}", self.service, sign)
    }
}

impl std::str::FromStr for EndpointSymbol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (service, polarity) = match s.chars().last() {
            Some('+') => (&s[..s.len() - 1], Polarity::Start),
            Some('-') => (&s[..s.len() - 1], Polarity::End),
            _ => return Err(Error::parse(0, format!("bad endpoint symbol `{s}`"))),
        };
        if service.is_empty() {
            return Err(Error::parse(0, format!("bad endpoint symbol `{s}`")));
        }
        Ok(Self {
            service: service.to_string(),
            polarity,
        })
    }
}

impl Serialize for EndpointSymbol {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EndpointSymbol {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Renders a symbol sequence as `<A+ B+ B- A->`.
pub fn format_symbols(seq: &[EndpointSymbol]) -> String {
    let parts: Vec<String> = seq.iter().map(|s| s.to_string()).collect();
    format!("<{}>", parts.join(" "))
}

/// One endpoint of an event inside a sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Endpoint {
    pub symbol: EndpointSymbol,
    pub time: Timestamp,
    /// Index of the owning event in [`EventSequence::events`].
    pub event: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub sid: u32,
    pub events: Vec<ServiceEvent>,
}

impl EventSequence {
    pub fn new(sid: u32, mut events: Vec<ServiceEvent>) -> Self {
        sort_events(&mut events);
        Self { sid, events }
    }

    pub fn endpoints(&self) -> Vec<Endpoint> {
        canonical_endpoints(self)
    }
}

/// Sorts events by start, end, then service id.
pub fn sort_events(events: &mut [ServiceEvent]) {
    events.sort_by(|a, b| {
        (a.start, a.end, &a.service, &a.region).cmp(&(b.start, b.end, &b.service, &b.region))
    });
}

/// Returns the time-sorted endpoint list of a sequence.
///
/// Ties at equal timestamps put ends before starts, then order by service
/// id. The end of a zero-length event is placed after all starts at that
/// instant so that it still follows its own start.
pub fn canonical_endpoints(seq: &EventSequence) -> Vec<Endpoint> {
    let mut keyed: Vec<((Timestamp, u8, &str, usize), Endpoint)> =
        Vec::with_capacity(seq.events.len() * 2);
    for (idx, e) in seq.events.iter().enumerate() {
        keyed.push((
            (e.start, 1, e.service.as_str(), idx),
            Endpoint {
                symbol: EndpointSymbol::start(e.service.clone()),
                time: e.start,
                event: idx,
            },
        ));
        let end_class = if e.end == e.start { 2 } else { 0 };
        keyed.push((
            (e.end, end_class, e.service.as_str(), idx),
            Endpoint {
                symbol: EndpointSymbol::end(e.service.clone()),
                time: e.end,
                event: idx,
            },
        ));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.into_iter().map(|(_, ep)| ep).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EventDatabase {
    pub sequences: Vec<EventSequence>,
}

impl EventDatabase {
    pub fn new(sequences: Vec<EventSequence>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for s in &sequences {
            if !seen.insert(s.sid) {
                return Err(Error::InvalidEvent(format!("duplicate sequence id {}", s.sid)));
            }
        }
        Ok(Self { sequences })
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn event_count(&self) -> usize {
        self.sequences.iter().map(|s| s.events.len()).sum()
    }

    pub fn events(&self) -> impl Iterator<Item = &ServiceEvent> {
        self.sequences.iter().flat_map(|s| s.events.iter())
    }

    pub fn regions(&self) -> Vec<String> {
        let mut r: Vec<String> = self.events().map(|e| e.region.clone()).collect();
        r.sort();
        r.dedup();
        r
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SegmentPolicy {
    #[default]
    ByDay,
    /// New sequence when consecutive starts are more than `max_gap` seconds apart.
    ByGap { max_gap: i64 },
}

impl std::str::FromStr for SegmentPolicy {
    type Err = Error;

    /// Accepts `by_day` or `by_gap:<minutes>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "by_day" {
            return Ok(SegmentPolicy::ByDay);
        }
        if let Some(rest) = s.strip_prefix("by_gap:") {
            let minutes: i64 = rest
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad gap in segmentation policy `{s}`")))?;
            if minutes < 0 {
                return Err(Error::config("segmentation gap must be nonnegative"));
            }
            return Ok(SegmentPolicy::ByGap {
                max_gap: minutes * 60,
            });
        }
        Err(Error::config(format!("unknown segmentation policy `{s}`")))
    }
}

impl fmt::Display for SegmentPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SegmentPolicy::ByDay => write!(f, "by_day"),
            SegmentPolicy::ByGap { max_gap } => write!(f, "by_gap:{}", max_gap / 60),
        }
    }
}

/// Cuts a flat event list into sequences with sequential ids from 0.
pub fn segment(events: &[ServiceEvent], policy: SegmentPolicy) -> EventDatabase {
    let mut sorted = events.to_vec();
    sort_events(&mut sorted);
    let mut groups: Vec<Vec<ServiceEvent>> = Vec::new();
    let mut prev: Option<Timestamp> = None;
    for e in sorted {
        let split = match (prev, policy) {
            (None, _) => true,
            (Some(p), SegmentPolicy::ByDay) => day_of(p) != day_of(e.start),
            (Some(p), SegmentPolicy::ByGap { max_gap }) => e.start - p > max_gap,
        };
        prev = Some(e.start);
        if split {
            groups.push(Vec::new());
        }
        groups.last_mut().expect("group pushed").push(e);
    }
    EventDatabase {
        sequences: groups
            .into_iter()
            .enumerate()
            .map(|(i, evs)| EventSequence::new(i as u32, evs))
            .collect(),
    }
}

/// Splits the database into per-region sub-databases.
///
/// Sequence ids are kept; sequences with no events in a region are absent
/// from that region's sub-database.
pub fn partition_by_region(db: &EventDatabase) -> BTreeMap<String, EventDatabase> {
    let mut out: BTreeMap<String, EventDatabase> = BTreeMap::new();
    for seq in &db.sequences {
        let mut by_region: BTreeMap<&str, Vec<ServiceEvent>> = BTreeMap::new();
        for e in &seq.events {
            by_region.entry(e.region.as_str()).or_default().push(e.clone());
        }
        for (region, events) in by_region {
            out.entry(region.to_string())
                .or_default()
                .sequences
                .push(EventSequence::new(seq.sid, events));
        }
    }
    out
}

/// Counts of records that the CASAS reader could not pair cleanly.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CasasDiagnostics {
    /// OFF records without a pending ON.
    pub skipped_off: usize,
    /// ON records closed by a later ON of the same sensor or by end of day.
    pub auto_closed: usize,
}

impl fmt::Display for CasasDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{{skipped_off: {}, auto_closed: {}}}",
            self.skipped_off, self.auto_closed
        )
    }
}

/// Region assignment for CASAS sensors, which carry no location.
#[derive(Clone, Debug)]
pub struct CasasOptions {
    pub regions: HashMap<String, String>,
    pub default_region: String,
}

impl Default for CasasOptions {
    fn default() -> Self {
        Self {
            regions: HashMap::new(),
            default_region: "home".to_string(),
        }
    }
}

impl CasasOptions {
    fn region_of(&self, sensor: &str) -> String {
        self.regions
            .get(sensor)
            .cloned()
            .unwrap_or_else(|| self.default_region.clone())
    }
}

/// Reads `DATE TIME SENSOR STATE` lines and pairs ON/OFF per sensor.
///
/// An ON that is followed by another ON of the same sensor (or by nothing)
/// is closed at the earlier of that next ON and the end of its day.
/// Trailing fields after STATE (activity annotations) are ignored.
pub fn parse_casas(text: &str, opts: &CasasOptions) -> Result<(Vec<ServiceEvent>, CasasDiagnostics)> {
    let mut diag = CasasDiagnostics::default();
    let mut pending: BTreeMap<String, Timestamp> = BTreeMap::new();
    let mut events = Vec::new();

    let close_unmatched = |sensor: &str, start: Timestamp, next_on: Option<Timestamp>| {
        let end_of_day = (day_of(start) + 1) * SECONDS_PER_DAY - 1;
        let end = next_on.map_or(end_of_day, |t| t.min(end_of_day));
        ServiceEvent {
            service: sensor.to_string(),
            start,
            end: end.max(start),
            start_coord: None,
            end_coord: None,
            region: opts.region_of(sensor),
        }
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 4 {
            return Err(Error::parse(
                lineno,
                format!("expected `DATE TIME SENSOR STATE`, got `{line}`"),
            ));
        }
        let ts = parse_date_time(fields[0], fields[1])
            .ok_or_else(|| Error::parse(lineno, format!("bad timestamp `{} {}`", fields[0], fields[1])))?;
        let sensor = fields[2];
        let on = match fields[3].to_ascii_uppercase().as_str() {
            "ON" | "OPEN" => true,
            "OFF" | "CLOSE" => false,
            other => return Err(Error::parse(lineno, format!("unknown state `{other}`"))),
        };
        if on {
            if let Some(prev) = pending.insert(sensor.to_string(), ts) {
                events.push(close_unmatched(sensor, prev, Some(ts)));
                diag.auto_closed += 1;
            }
        } else {
            match pending.remove(sensor) {
                Some(start) if start <= ts => events.push(ServiceEvent {
                    service: sensor.to_string(),
                    start,
                    end: ts,
                    start_coord: None,
                    end_coord: None,
                    region: opts.region_of(sensor),
                }),
                Some(start) => {
                    // OFF earlier than its ON: treat the ON as unmatched.
                    events.push(close_unmatched(sensor, start, None));
                    diag.auto_closed += 1;
                    diag.skipped_off += 1;
                }
                None => diag.skipped_off += 1,
            }
        }
    }
    for (sensor, start) in pending {
        events.push(close_unmatched(&sensor, start, None));
        diag.auto_closed += 1;
    }
    sort_events(&mut events);
    Ok((events, diag))
}

/// One line of the interval format; `end` is `None` for an ongoing event.
#[derive(Clone, Debug, PartialEq)]
pub struct IntervalRecord {
    pub service: String,
    pub start: Timestamp,
    pub end: Option<Timestamp>,
    pub region: String,
    pub coord: Option<Coord>,
}

fn parse_interval_line(line: &str, lineno: usize, allow_open: bool) -> Result<IntervalRecord> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 4 && fields.len() != 6 {
        return Err(Error::parse(
            lineno,
            format!("expected `id,start,end,region[,x,y]`, got `{line}`"),
        ));
    }
    let service = fields[0];
    if service.is_empty() {
        return Err(Error::parse(lineno, "empty service id"));
    }
    let start = parse_time_field(fields[1])
        .ok_or_else(|| Error::parse(lineno, format!("bad start time `{}`", fields[1])))?;
    let end = if allow_open && (fields[2].is_empty() || fields[2] == "-") {
        None
    } else {
        let end = parse_time_field(fields[2])
            .ok_or_else(|| Error::parse(lineno, format!("bad end time `{}`", fields[2])))?;
        if end < start {
            return Err(Error::parse(
                lineno,
                format!("end `{}` precedes start `{}`", fields[2], fields[1]),
            ));
        }
        Some(end)
    };
    let region = fields[3];
    if region.is_empty() {
        return Err(Error::parse(lineno, "empty region"));
    }
    let coord = if fields.len() == 6 {
        let x: f64 = fields[4]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad x coordinate `{}`", fields[4])))?;
        let y: f64 = fields[5]
            .parse()
            .map_err(|_| Error::parse(lineno, format!("bad y coordinate `{}`", fields[5])))?;
        Some(Coord::new(x, y))
    } else {
        None
    };
    Ok(IntervalRecord {
        service: service.to_string(),
        start,
        end,
        region: region.to_string(),
        coord,
    })
}

/// Reads interval-format records, allowing an empty or `-` end field.
pub fn parse_interval_records(text: &str, allow_open: bool) -> Result<Vec<IntervalRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_interval_line(line, idx + 1, allow_open)?);
    }
    Ok(out)
}

/// Reads `id,start,end,region[,x,y]` lines, one event per line.
///
/// Times are `HH:MM[:SS]` (placed on day 0) or full ISO timestamps.
pub fn parse_interval(text: &str) -> Result<Vec<ServiceEvent>> {
    Ok(parse_interval_records(text, false)?
        .into_iter()
        .map(|r| ServiceEvent {
            service: r.service,
            start: r.start,
            end: r.end.expect("closed record"),
            start_coord: r.coord,
            end_coord: r.coord,
            region: r.region,
        })
        .collect())
}

/// Writes events in the interval format with ISO timestamps.
pub fn write_interval(events: &[ServiceEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&format!(
            "{},{},{},{}",
            e.service,
            format_timestamp(e.start),
            format_timestamp(e.end),
            e.region
        ));
        if let Some(c) = e.start_coord {
            out.push_str(&format!(",{},{}", c.x, c.y));
        }
        out.push('\n');
    }
    out
}

fn parse_clock(s: &str) -> Option<i64> {
    let parts: Vec<&str> = s.split(':').collect();
    if !(2..=3).contains(&parts.len()) {
        return None;
    }
    let h: i64 = parts[0].parse().ok()?;
    let m: i64 = parts[1].parse().ok()?;
    let sec: f64 = if parts.len() == 3 { parts[2].parse().ok()? } else { 0.0 };
    if !(0..24).contains(&h) || !(0..60).contains(&m) || !(0.0..60.0).contains(&sec) {
        return None;
    }
    Some(h * 3600 + m * 60 + sec.floor() as i64)
}

fn parse_date_time(date: &str, time: &str) -> Option<Timestamp> {
    let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    let secs = parse_clock(time)?;
    let midnight = NaiveDateTime::new(d, NaiveTime::MIN).and_utc().timestamp();
    Some(midnight + secs)
}

/// Parses `HH:MM[:SS]` or an ISO timestamp (`T` or space separated).
pub fn parse_time_field(s: &str) -> Option<Timestamp> {
    let s = s.trim();
    if let Some(secs) = parse_clock(s) {
        return Some(secs);
    }
    let (date, time) = s.split_once('T').or_else(|| s.split_once(' '))?;
    parse_date_time(date, time)
}
