//! Stage orchestration: ingest, mine, cluster, periodic, relations.
//!
//! Every stage reads the previous stage's JSON artifact from a directory and
//! writes its own artifact plus a report that embeds the resolved config.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cluster::{cluster, cluster_instances, to_probabilistic, ClusterOptions, Clustering, ProbabilisticCompositionPattern};
use crate::convenience::{evaluate, ConvenienceReport, WaitTable};
use crate::cpminer::{mine, CompositionPattern, MinerOptions, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::event::{parse_casas, parse_interval, parse_interval_records, partition_by_region, segment, CasasDiagnostics, CasasOptions, EventDatabase, SegmentPolicy, Timestamp};
use crate::periodic::{PeriodicOptions, PeriodicPattern};
use crate::predictor::{predict, Observation, ObservedEvent, PredictionModel, PredictionRecord, ScoreWeights};
use crate::quality::{filter_quality, EventProbabilityTable, ProximityWeights, QualityThresholds, DEFAULT_RESOLUTION};
use crate::relations::{build_matrix, InstanceSpan, TemporalMatrix};

pub const DATABASE: &str = "database.json";
pub const PATTERNS: &str = "patterns.json";
pub const CLUSTERS: &str = "clusters.json";
pub const PERIODIC: &str = "periodic.json";
pub const MATRIX: &str = "matrix.json";
pub const MODEL: &str = "model.json";

/// Minimum support, either a sequence count or a percentage of the
/// sequences of the region being mined.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Minsup {
    Absolute(usize),
    Percent(f64),
}

impl Minsup {
    pub fn resolve(self, sequences: usize) -> usize {
        match self {
            Minsup::Absolute(n) => n,
            Minsup::Percent(p) => ((p / 100.0 * sequences as f64 - 1e-9).ceil() as usize).max(1),
        }
    }
}

impl FromStr for Minsup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(p) = s.strip_suffix('%') {
            let p: f64 = p.trim().parse().map_err(|_| Error::config(format!("bad minsup `{s}`")))?;
            return Ok(Minsup::Percent(p));
        }
        s.parse()
            .map(Minsup::Absolute)
            .map_err(|_| Error::config(format!("bad minsup `{s}`")))
    }
}

impl fmt::Display for Minsup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Minsup::Absolute(n) => write!(f, "{n}"),
            Minsup::Percent(p) => write!(f, "{p}%"),
        }
    }
}

impl Serialize for Minsup {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Minsup {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(n) => Ok(Minsup::Absolute(n as usize)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

mod display_fromstr {
    use std::fmt::Display;
    use std::str::FromStr;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<T: Display, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(v)
    }

    pub fn deserialize<'de, T, D>(d: D) -> Result<T, D::Error>
    where
        T: FromStr,
        T::Err: Display,
        D: Deserializer<'de>,
    {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    #[default]
    Interval,
    Casas,
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "interval" => Ok(InputFormat::Interval),
            "casas" => Ok(InputFormat::Casas),
            other => Err(Error::config(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub minsup: Minsup,
    pub max_len: usize,
    pub minsig: f64,
    pub minpro: f64,
    pub w1: f64,
    pub w2: f64,
    pub resolution: f64,
    pub k: usize,
    pub max_iter: usize,
    pub zeta: i64,
    pub min_p: f64,
    #[serde(with = "display_fromstr")]
    pub segmentation: SegmentPolicy,
    pub seed: u64,
    pub y_s: f64,
    pub y_t: f64,
    pub y_l: f64,
    pub window: i64,
    pub wait_table: Option<PathBuf>,
    pub threads: Option<usize>,
    pub format: InputFormat,
    pub default_region: String,
    /// Sensor to region, for inputs without regions.
    pub regions: BTreeMap<String, String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let q = QualityThresholds::default();
        let p = PeriodicOptions::default();
        let w = ScoreWeights::default();
        Self {
            minsup: Minsup::Percent(10.0),
            max_len: DEFAULT_MAX_LEN,
            minsig: q.minsig,
            minpro: q.minpro,
            w1: q.weights.spatial,
            w2: q.weights.temporal,
            resolution: DEFAULT_RESOLUTION,
            k: 9,
            max_iter: 100,
            zeta: p.tolerance,
            min_p: p.min_probability,
            segmentation: SegmentPolicy::ByDay,
            seed: 0,
            y_s: w.structure,
            y_t: w.time,
            y_l: w.location,
            window: 60,
            wait_table: None,
            threads: None,
            format: InputFormat::Interval,
            default_region: "home".into(),
            regions: BTreeMap::new(),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("bad value `{value}` for `{key}`")))
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    /// Overrides one key. `regions` takes `sensor=region` pairs separated by
    /// commas.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "minsup" => self.minsup = value.parse()?,
            "max_len" => self.max_len = parse_value(key, value)?,
            "minsig" => self.minsig = parse_value(key, value)?,
            "minpro" => self.minpro = parse_value(key, value)?,
            "w1" => self.w1 = parse_value(key, value)?,
            "w2" => self.w2 = parse_value(key, value)?,
            "resolution" => self.resolution = parse_value(key, value)?,
            "k" => self.k = parse_value(key, value)?,
            "max_iter" => self.max_iter = parse_value(key, value)?,
            "zeta" => self.zeta = parse_value(key, value)?,
            "min_p" => self.min_p = parse_value(key, value)?,
            "segmentation" => self.segmentation = value.parse()?,
            "seed" => self.seed = parse_value(key, value)?,
            "y_s" => self.y_s = parse_value(key, value)?,
            "y_t" => self.y_t = parse_value(key, value)?,
            "y_l" => self.y_l = parse_value(key, value)?,
            "window" => self.window = parse_value(key, value)?,
            "wait_table" => self.wait_table = Some(PathBuf::from(value)),
            "threads" => self.threads = Some(parse_value(key, value)?),
            "format" => self.format = value.parse()?,
            "default_region" => self.default_region = value.to_string(),
            "regions" => {
                for pair in value.split(',').filter(|p| !p.trim().is_empty()) {
                    let (s, r) = pair
                        .split_once('=')
                        .ok_or_else(|| Error::config(format!("bad region mapping `{pair}`")))?;
                    self.regions.insert(s.trim().to_string(), r.trim().to_string());
                }
            }
            _ => return Err(Error::config(format!("unknown config key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        match self.minsup {
            Minsup::Absolute(0) => return Err(Error::config("minsup must be at least 1")),
            Minsup::Percent(p) if !(p > 0.0 && p <= 100.0) => {
                return Err(Error::config(format!("percent minsup must lie in (0,100], got {p}")))
            }
            _ => {}
        }
        self.proximity_weights()?;
        let nonneg = [
            ("minsig", self.minsig),
            ("minpro", self.minpro),
            ("resolution", self.resolution),
            ("y_s", self.y_s),
            ("y_t", self.y_t),
            ("y_l", self.y_l),
        ];
        if let Some((name, v)) = nonneg.iter().find(|(_, v)| v.is_nan() || *v < 0.0) {
            return Err(Error::config(format!("{name} must be nonnegative, got {v}")));
        }
        if self.resolution <= 0.0 {
            return Err(Error::config("resolution must be positive"));
        }
        if !(0.0..=1.0).contains(&self.min_p) {
            return Err(Error::config("min_p must lie in [0,1]"));
        }
        if self.k == 0 || self.max_len == 0 || self.max_iter == 0 {
            return Err(Error::config("k, max_len and max_iter must be positive"));
        }
        if self.zeta < 0 || self.window <= 0 {
            return Err(Error::config("zeta must be nonnegative and window positive"));
        }
        if self.threads == Some(0) {
            return Err(Error::config("threads must be positive"));
        }
        Ok(())
    }

    pub fn proximity_weights(&self) -> Result<ProximityWeights> {
        ProximityWeights::new(self.w1, self.w2)
    }

    pub fn thresholds(&self) -> Result<QualityThresholds> {
        Ok(QualityThresholds {
            minsig: self.minsig,
            minpro: self.minpro,
            weights: self.proximity_weights()?,
            resolution: self.resolution,
        })
    }

    pub fn periodic_options(&self) -> PeriodicOptions {
        PeriodicOptions {
            tolerance: self.zeta,
            min_probability: self.min_p,
        }
    }

    pub fn score_weights(&self) -> ScoreWeights {
        ScoreWeights {
            structure: self.y_s,
            time: self.y_t,
            location: self.y_l,
        }
    }

    pub fn casas_options(&self) -> CasasOptions {
        CasasOptions {
            regions: self.regions.clone().into_iter().collect(),
            default_region: self.default_region.clone(),
        }
    }
}

/// A stage report: counts plus the config that produced them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport<T> {
    pub stage: String,
    pub config: PipelineConfig,
    pub counts: T,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestCounts {
    pub events: usize,
    pub sequences: usize,
    pub regions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub casas: Option<CasasDiagnostics>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionMineCounts {
    pub sequences: usize,
    pub minsup: usize,
    pub found: usize,
    pub below_minsig: usize,
    pub below_minpro: usize,
    pub kept: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MineCounts {
    pub found: usize,
    pub below_minsig: usize,
    pub below_minpro: usize,
    pub kept: usize,
    pub regions: BTreeMap<String, RegionMineCounts>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterCounts {
    pub patterns: usize,
    pub k: usize,
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodicCounts {
    pub patterns: usize,
    pub intervals: usize,
    pub without_intervals: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationCounts {
    pub patterns: usize,
    pub transitions: usize,
    pub density: f64,
}

/// Mined patterns that passed the quality filter, in scored form.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PatternArtifact {
    pub patterns: Vec<crate::quality::ScoredPattern>,
}

impl PatternArtifact {
    pub fn plain(&self) -> Vec<CompositionPattern> {
        self.patterns.iter().map(|p| p.pattern.clone()).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClusterArtifact {
    pub clustering: Option<Clustering>,
    /// One per cluster, same order.
    pub probabilistic: Vec<ProbabilisticCompositionPattern>,
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// A directory of stage artifacts.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn read<T: DeserializeOwned>(&self, name: &str, stage: &str) -> Result<T> {
        let path = self.path(name);
        if !path.exists() {
            return Err(Error::MissingArtifact {
                artifact: name.to_string(),
                stage: stage.to_string(),
            });
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Writes all files or none: contents go to temporaries first and are
    /// renamed once every write succeeded.
    pub fn commit(&self, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
        let mut tmps = Vec::new();
        let result = (|| {
            for (name, body) in files {
                let tmp = self.path(&format!(".{name}.tmp"));
                tmps.push(tmp.clone());
                fs::write(&tmp, body)?;
            }
            let mut done = Vec::new();
            for ((name, _), tmp) in files.iter().zip(&tmps) {
                let dest = self.path(name);
                fs::rename(tmp, &dest)?;
                done.push(dest);
            }
            Ok(done)
        })();
        if result.is_err() {
            for t in &tmps {
                let _ = fs::remove_file(t);
            }
            for (name, _) in files {
                let _ = fs::remove_file(self.path(name));
            }
        }
        result
    }

    fn commit_stage<A: Serialize, C: Serialize>(
        &self,
        stage: &str,
        artifacts: &[(&str, &A)],
        report: &StageReport<C>,
    ) -> Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for (name, a) in artifacts {
            files.push((name.to_string(), to_json(a)?));
        }
        files.push((format!("{stage}_report.json"), to_json(report)?));
        self.commit(&files)
    }
}

fn report<T>(stage: &str, config: &PipelineConfig, counts: T) -> StageReport<T> {
    StageReport {
        stage: stage.to_string(),
        config: config.clone(),
        counts,
    }
}

/// Parses an input log per the configured format and segments it.
pub fn load_database(text: &str, config: &PipelineConfig) -> Result<(EventDatabase, Option<CasasDiagnostics>)> {
    let (events, diag) = match config.format {
        InputFormat::Interval => (parse_interval(text)?, None),
        InputFormat::Casas => {
            let (e, d) = parse_casas(text, &config.casas_options())?;
            (e, Some(d))
        }
    };
    Ok((segment(&events, config.segmentation), diag))
}

pub fn ingest_stage(ws: &Workspace, input: &Path, config: &PipelineConfig) -> Result<StageReport<IngestCounts>> {
    let run = || {
        let (db, casas) = load_database(&fs::read_to_string(input)?, config)?;
        let r = report(
            "ingest",
            config,
            IngestCounts {
                events: db.event_count(),
                sequences: db.len(),
                regions: db.regions(),
                casas,
            },
        );
        ws.commit_stage("ingest", &[(DATABASE, &db)], &r)?;
        Ok(r)
    };
    run().map_err(|e: Error| e.in_stage("ingest"))
}

/// Mines each region's sub-database and applies the quality filter.
pub fn mine_database(db: &EventDatabase, config: &PipelineConfig) -> Result<(PatternArtifact, MineCounts)> {
    config.validate()?;
    let table = EventProbabilityTable::from_db(db);
    let thresholds = config.thresholds()?;
    let mut counts = MineCounts::default();
    let mut kept = Vec::new();
    for (region, sub) in partition_by_region(db) {
        let minsup = config.minsup.resolve(sub.len());
        let found = mine(
            &sub,
            &MinerOptions {
                minsup,
                max_len: config.max_len,
            },
        )?;
        let n = found.len();
        let (scored, fr) = filter_quality(found, &table, &thresholds)?;
        kept.extend(scored);
        counts.found += n;
        counts.below_minsig += fr.below_minsig;
        counts.below_minpro += fr.below_minpro;
        counts.kept += fr.kept;
        counts.regions.insert(
            region,
            RegionMineCounts {
                sequences: sub.len(),
                minsup,
                found: n,
                below_minsig: fr.below_minsig,
                below_minpro: fr.below_minpro,
                kept: fr.kept,
            },
        );
    }
    Ok((PatternArtifact { patterns: kept }, counts))
}

pub fn mine_stage(ws: &Workspace, config: &PipelineConfig) -> Result<StageReport<MineCounts>> {
    let run = || {
        let db: EventDatabase = ws.read(DATABASE, "ingest")?;
        let (artifact, counts) = mine_database(&db, config)?;
        let r = report("mine", config, counts);
        ws.commit_stage("mine", &[(PATTERNS, &artifact)], &r)?;
        Ok(r)
    };
    run().map_err(|e: Error| e.in_stage("mine"))
}

/// Clusters patterns into at most `k` groups. Fewer patterns than `k`
/// lowers the cluster count to the number of patterns.
pub fn cluster_patterns(patterns: &[CompositionPattern], config: &PipelineConfig) -> Result<(ClusterArtifact, ClusterCounts)> {
    let k = config.k.min(patterns.len());
    if k == 0 {
        return Ok((ClusterArtifact::default(), ClusterCounts::default()));
    }
    let clustering = cluster(
        patterns,
        &ClusterOptions {
            k,
            seed: config.seed,
            max_iter: config.max_iter,
        },
    )?;
    let probabilistic = clustering
        .clusters
        .iter()
        .map(|c| to_probabilistic(c, patterns))
        .collect::<Result<Vec<_>>>()?;
    let counts = ClusterCounts {
        patterns: patterns.len(),
        k,
        iterations: clustering.objective.len(),
        converged: clustering.converged,
        objective: clustering.final_objective(),
    };
    Ok((
        ClusterArtifact {
            clustering: Some(clustering),
            probabilistic,
        },
        counts,
    ))
}

pub fn cluster_stage(ws: &Workspace, config: &PipelineConfig) -> Result<StageReport<ClusterCounts>> {
    let run = || {
        config.validate()?;
        let patterns: PatternArtifact = ws.read(PATTERNS, "mine")?;
        let (artifact, counts) = cluster_patterns(&patterns.plain(), config)?;
        let r = report("cluster", config, counts);
        ws.commit_stage("cluster", &[(CLUSTERS, &artifact)], &r)?;
        Ok(r)
    };
    run().map_err(|e: Error| e.in_stage("cluster"))
}

pub fn periodic_patterns(
    patterns: &[CompositionPattern],
    clusters: &ClusterArtifact,
    config: &PipelineConfig,
) -> Result<(Vec<PeriodicPattern>, PeriodicCounts)> {
    let opts = config.periodic_options();
    let Some(clustering) = &clusters.clustering else {
        return Ok((Vec::new(), PeriodicCounts::default()));
    };
    if clustering.clusters.len() != clusters.probabilistic.len() {
        return Err(Error::Invariant("cluster artifact is inconsistent".into()));
    }
    let out: Vec<PeriodicPattern> = clustering
        .clusters
        .iter()
        .zip(&clusters.probabilistic)
        .enumerate()
        .map(|(id, (c, base))| PeriodicPattern::build(id, base.clone(), &cluster_instances(c, patterns), &opts))
        .collect();
    let counts = PeriodicCounts {
        patterns: out.len(),
        intervals: out.iter().map(|p| p.intervals.len()).sum(),
        without_intervals: out.iter().filter(|p| p.intervals.is_empty()).count(),
    };
    Ok((out, counts))
}

pub fn periodic_stage(ws: &Workspace, config: &PipelineConfig) -> Result<StageReport<PeriodicCounts>> {
    let run = || {
        config.validate()?;
        let patterns: PatternArtifact = ws.read(PATTERNS, "mine")?;
        let clusters: ClusterArtifact = ws.read(CLUSTERS, "cluster")?;
        let (periodic, counts) = periodic_patterns(&patterns.plain(), &clusters, config)?;
        let r = report("periodic", config, counts);
        ws.commit_stage("periodic", &[(PERIODIC, &periodic)], &r)?;
        Ok(r)
    };
    run().map_err(|e: Error| e.in_stage("periodic"))
}

/// Distinct instance spans of each cluster, in cluster order.
pub fn cluster_spans(patterns: &[CompositionPattern], clusters: &ClusterArtifact) -> Vec<Vec<InstanceSpan>> {
    let Some(clustering) = &clusters.clustering else {
        return Vec::new();
    };
    clustering
        .clusters
        .iter()
        .map(|c| {
            let mut spans: Vec<(u32, Timestamp, Timestamp)> = cluster_instances(c, patterns)
                .into_iter()
                .map(|i| {
                    let (start, end) = i.interval();
                    (i.sid, start, end)
                })
                .collect();
            spans.sort_unstable();
            spans.dedup();
            spans
                .into_iter()
                .map(|(sid, start, end)| InstanceSpan { sid, start, end })
                .collect()
        })
        .collect()
}

pub fn build_model(
    patterns: &[CompositionPattern],
    clusters: &ClusterArtifact,
    periodic: Vec<PeriodicPattern>,
    config: &PipelineConfig,
) -> Result<(PredictionModel, RelationCounts)> {
    let matrix: TemporalMatrix = build_matrix(&cluster_spans(patterns, clusters));
    let counts = RelationCounts {
        patterns: periodic.len(),
        transitions: matrix.cells.iter().flatten().filter(|c| c.tran_pro > 0.0).count(),
        density: matrix.density(),
    };
    Ok((PredictionModel::new(periodic, matrix, config.score_weights())?, counts))
}

pub fn relations_stage(ws: &Workspace, config: &PipelineConfig) -> Result<StageReport<RelationCounts>> {
    let run = || {
        config.validate()?;
        let patterns: PatternArtifact = ws.read(PATTERNS, "mine")?;
        let clusters: ClusterArtifact = ws.read(CLUSTERS, "cluster")?;
        let periodic: Vec<PeriodicPattern> = ws.read(PERIODIC, "periodic")?;
        let (model, counts) = build_model(&patterns.plain(), &clusters, periodic, config)?;
        let r = report("relations", config, counts);
        let files = vec![
            (MATRIX.to_string(), to_json(&model.matrix)?),
            (MODEL.to_string(), to_json(&model)?),
            ("relations_report.json".to_string(), to_json(&r)?),
        ];
        ws.commit(&files)?;
        Ok(r)
    };
    run().map_err(|e: Error| e.in_stage("relations"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub ingest: IngestCounts,
    pub mine: MineCounts,
    pub cluster: ClusterCounts,
    pub periodic: PeriodicCounts,
    pub relations: RelationCounts,
}

/// Runs every stage in order. On failure the artifacts written by this
/// run are removed.
pub fn run_pipeline(ws: &Workspace, input: &Path, config: &PipelineConfig) -> Result<RunReport> {
    config.validate()?;
    let result = (|| {
        Ok(RunReport {
            ingest: ingest_stage(ws, input, config)?.counts,
            mine: mine_stage(ws, config)?.counts,
            cluster: cluster_stage(ws, config)?.counts,
            periodic: periodic_stage(ws, config)?.counts,
            relations: relations_stage(ws, config)?.counts,
        })
    })();
    if result.is_err() {
        for stage in ["ingest", "mine", "cluster", "periodic", "relations"] {
            let _ = fs::remove_file(ws.path(&format!("{stage}_report.json")));
        }
        for name in [DATABASE, PATTERNS, CLUSTERS, PERIODIC, MATRIX, MODEL] {
            let _ = fs::remove_file(ws.path(name));
        }
    }
    result
}

/// In-memory equivalent of [`run_pipeline`] on a database.
pub fn model_from_database(db: &EventDatabase, config: &PipelineConfig) -> Result<(PredictionModel, RunReport)> {
    let (patterns, mine_counts) = mine_database(db, config).map_err(|e| e.in_stage("mine"))?;
    let plain = patterns.plain();
    let (clusters, cluster_counts) = cluster_patterns(&plain, config).map_err(|e| e.in_stage("cluster"))?;
    let (periodic, periodic_counts) = periodic_patterns(&plain, &clusters, config).map_err(|e| e.in_stage("periodic"))?;
    let (model, relation_counts) = build_model(&plain, &clusters, periodic, config).map_err(|e| e.in_stage("relations"))?;
    Ok((
        model,
        RunReport {
            ingest: IngestCounts {
                events: db.event_count(),
                sequences: db.len(),
                regions: db.regions(),
                casas: None,
            },
            mine: mine_counts,
            cluster: cluster_counts,
            periodic: periodic_counts,
            relations: relation_counts,
        },
    ))
}

pub fn load_model(ws: &Workspace) -> Result<PredictionModel> {
    ws.read(MODEL, "relations")
}

/// Reads an observation in interval format; open ends run until `now`.
pub fn load_observation(text: &str, now: Option<Timestamp>) -> Result<Observation> {
    let records = parse_interval_records(text, true)?;
    Observation::new(records.into_iter().map(ObservedEvent::from).collect(), now)
}

pub fn predict_observation(model: &PredictionModel, obs: &Observation) -> Option<PredictionRecord> {
    predict(obs, model).as_ref().map(PredictionRecord::from)
}

pub fn load_wait_table(config: &PipelineConfig) -> Result<WaitTable> {
    match &config.wait_table {
        Some(path) => WaitTable::parse(&fs::read_to_string(path)?),
        None => Ok(WaitTable::default()),
    }
}

pub fn evaluate_trace(model: &PredictionModel, trace_text: &str, config: &PipelineConfig) -> Result<ConvenienceReport> {
    let (trace, _) = load_database(trace_text, config)?;
    evaluate(&trace, model, &load_wait_table(config)?, config.window)
}
