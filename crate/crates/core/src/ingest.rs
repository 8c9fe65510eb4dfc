//! Input parsing and score alignment.
//!
//! Raw score rows are read from a delimited file, benchmark and model
//! registries from JSON arrays. Alignment then runs, in order: cost-metric
//! inversion, headroom normalization of open-ended metrics, snapshot
//! clustering into benchmark families, and construction of the
//! [`ScoreMatrix`]. The participation filter is applied later, per pipeline
//! run, because robustness protocols remove models before filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Divisor applied to the observed maximum of an open-ended metric; the
/// observed maximum lands on 80.
pub const HEADROOM_BUFFER: f64 = 1.25;

/// Benchmarks need at least this many distinct (base-variant) models.
pub const MIN_PARTICIPATION: usize = 3;

pub const SCORES_HEADER: [&str; 6] = [
    "model_id",
    "benchmark_id",
    "score_raw",
    "metric_kind",
    "eval_date",
    "variant",
];

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {msg}")]
    Malformed {
        source_name: String,
        line: u64,
        msg: String,
    },
    #[error("{source_name}:{line}: unknown {kind} id `{id}`")]
    UnknownId {
        source_name: String,
        line: u64,
        kind: &'static str,
        id: String,
    },
    #[error("{source_name}:{line}: duplicate score for ({model}, {benchmark}, {variant})")]
    Duplicate {
        source_name: String,
        line: u64,
        model: String,
        benchmark: String,
        variant: Variant,
    },
    #[error("duplicate {kind} id `{id}` in registry")]
    DuplicateRegistryId { kind: &'static str, id: String },
    #[error("benchmark `{0}` has cost-oriented scores but no cost_bound")]
    MissingCostBound(String),
    #[error("open-ended benchmark `{0}` has no positive score to anchor normalization")]
    DegenerateOpenEnded(String),
    #[error("headroom normalization expects one open-ended benchmark, got {0}")]
    MixedOpenEndedInput(String),
    #[error("score {score} for ({model}, {benchmark}) is outside [0, 100] after alignment")]
    ScoreOutOfRange {
        model: String,
        benchmark: String,
        score: f64,
    },
    #[error("no benchmark has at least {MIN_PARTICIPATION} participating models; nothing to audit")]
    EmptyAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Reward,
    Cost,
    OpenEnded,
}

impl std::str::FromStr for MetricKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "reward" => Ok(Self::Reward),
            "cost" => Ok(Self::Cost),
            "open_ended" => Ok(Self::OpenEnded),
            other => Err(format!(
                "metric_kind `{other}` is not one of reward, cost, open_ended"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Base,
    Augmented,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::Base => "base",
            Variant::Augmented => "augmented",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "" | "base" => Ok(Self::Base),
            "augmented" => Ok(Self::Augmented),
            other => Err(format!("variant `{other}` is not one of base, augmented")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawScoreRecord {
    pub model_id: String,
    pub benchmark_id: String,
    pub score_raw: f64,
    pub metric_kind: MetricKind,
    pub eval_date: NaiveDate,
    pub variant: Variant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkMeta {
    pub id: String,
    pub release_date: NaiveDate,
    pub domain: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub github_repo: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hf_dataset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub id: String,
    pub vendor: String,
    pub release_date: NaiveDate,
}

pub type BenchmarkRegistry = BTreeMap<String, BenchmarkMeta>;
pub type ModelRegistry = BTreeMap<String, ModelMeta>;

/// Output of [`parse_inputs`].
#[derive(Debug, Clone)]
pub struct ParsedInputs {
    pub records: Vec<RawScoreRecord>,
    pub benchmarks: BenchmarkRegistry,
    pub models: ModelRegistry,
    pub warnings: Vec<String>,
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_inputs(
    scores_path: &Path,
    benchmarks_path: &Path,
    models_path: &Path,
) -> Result<ParsedInputs, IngestError> {
    let benchmarks = parse_benchmarks(
        &read_file(benchmarks_path)?,
        &benchmarks_path.display().to_string(),
    )?;
    let models = parse_models(&read_file(models_path)?, &models_path.display().to_string())?;
    let scores_text = read_file(scores_path)?;
    let records = parse_scores(
        scores_text.as_bytes(),
        &scores_path.display().to_string(),
        &benchmarks,
        &models,
    )?;
    let warnings = date_warnings(&records, &benchmarks, &models);
    Ok(ParsedInputs {
        records,
        benchmarks,
        models,
        warnings,
    })
}

fn parse_registry<T: for<'de> Deserialize<'de>>(
    text: &str,
    source_name: &str,
) -> Result<Vec<T>, IngestError> {
    serde_json::from_str(text).map_err(|e| IngestError::Malformed {
        source_name: source_name.to_string(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

pub fn parse_benchmarks(text: &str, source_name: &str) -> Result<BenchmarkRegistry, IngestError> {
    let mut out = BenchmarkRegistry::new();
    for b in parse_registry::<BenchmarkMeta>(text, source_name)? {
        if b.id.trim().is_empty() {
            return Err(IngestError::Malformed {
                source_name: source_name.to_string(),
                line: 0,
                msg: "benchmark with empty id".into(),
            });
        }
        if let Some(id) = out.insert(b.id.clone(), b).map(|old| old.id) {
            return Err(IngestError::DuplicateRegistryId {
                kind: "benchmark",
                id,
            });
        }
    }
    Ok(out)
}

pub fn parse_models(text: &str, source_name: &str) -> Result<ModelRegistry, IngestError> {
    let mut out = ModelRegistry::new();
    for m in parse_registry::<ModelMeta>(text, source_name)? {
        if m.id.trim().is_empty() {
            return Err(IngestError::Malformed {
                source_name: source_name.to_string(),
                line: 0,
                msg: "model with empty id".into(),
            });
        }
        if let Some(id) = out.insert(m.id.clone(), m).map(|old| old.id) {
            return Err(IngestError::DuplicateRegistryId { kind: "model", id });
        }
    }
    Ok(out)
}

/// Parse the scores table, checking every row against the registries.
pub fn parse_scores<R: std::io::Read>(
    reader: R,
    source_name: &str,
    benchmarks: &BenchmarkRegistry,
    models: &ModelRegistry,
) -> Result<Vec<RawScoreRecord>, IngestError> {
    let malformed = |line: u64, msg: String| IngestError::Malformed {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| malformed(1, e.to_string()))?.clone();
    let header: Vec<&str> = header.iter().collect();
    if header.len() < 5 || header[..5] != SCORES_HEADER[..5] || (header.len() > 5 && header[5] != "variant") {
        return Err(malformed(
            1,
            format!("expected header `{}`", SCORES_HEADER.join(",")),
        ));
    }

    let mut seen = BTreeSet::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            malformed(line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() < 5 || row.len() > 6 {
            return Err(malformed(line, format!("expected 5 or 6 fields, got {}", row.len())));
        }
        let model_id = row[0].to_string();
        let benchmark_id = row[1].to_string();
        if model_id.is_empty() || benchmark_id.is_empty() {
            return Err(malformed(line, "empty model_id or benchmark_id".into()));
        }
        let score_raw: f64 = row[2]
            .parse()
            .map_err(|_| malformed(line, format!("score_raw `{}` is not a number", &row[2])))?;
        if !score_raw.is_finite() {
            return Err(malformed(line, format!("score_raw `{}` is not finite", &row[2])));
        }
        let metric_kind: MetricKind = row[3].parse().map_err(|e| malformed(line, e))?;
        let eval_date = NaiveDate::parse_from_str(&row[4], "%Y-%m-%d")
            .map_err(|e| malformed(line, format!("eval_date `{}`: {e}", &row[4])))?;
        let variant: Variant = row.get(5).unwrap_or("").parse().map_err(|e| malformed(line, e))?;

        if !models.contains_key(&model_id) {
            return Err(IngestError::UnknownId {
                source_name: source_name.to_string(),
                line,
                kind: "model",
                id: model_id,
            });
        }
        if !benchmarks.contains_key(&benchmark_id) {
            return Err(IngestError::UnknownId {
                source_name: source_name.to_string(),
                line,
                kind: "benchmark",
                id: benchmark_id,
            });
        }
        if !seen.insert((model_id.clone(), benchmark_id.clone(), variant)) {
            return Err(IngestError::Duplicate {
                source_name: source_name.to_string(),
                line,
                model: model_id,
                benchmark: benchmark_id,
                variant,
            });
        }
        records.push(RawScoreRecord {
            model_id,
            benchmark_id,
            score_raw,
            metric_kind,
            eval_date,
            variant,
        });
    }
    Ok(records)
}

fn date_warnings(
    records: &[RawScoreRecord],
    benchmarks: &BenchmarkRegistry,
    models: &ModelRegistry,
) -> Vec<String> {
    let mut out = BTreeSet::new();
    for r in records {
        if let Some(b) = benchmarks.get(&r.benchmark_id) {
            if r.eval_date < b.release_date {
                out.insert(format!(
                    "({}, {}) evaluated {} before benchmark release {}",
                    r.model_id, r.benchmark_id, r.eval_date, b.release_date
                ));
            }
        }
        if let Some(m) = models.get(&r.model_id) {
            if r.eval_date < m.release_date {
                out.insert(format!(
                    "({}, {}) evaluated {} before model release {}",
                    r.model_id, r.benchmark_id, r.eval_date, m.release_date
                ));
            }
        }
    }
    out.into_iter().collect()
}

/// Replace cost scores by `U - score` using each benchmark's configured
/// `cost_bound`, re-tagging them as rewards.
pub fn invert_cost_metrics(
    records: Vec<RawScoreRecord>,
    benchmarks: &BenchmarkRegistry,
) -> Result<Vec<RawScoreRecord>, IngestError> {
    records
        .into_iter()
        .map(|mut r| {
            if r.metric_kind == MetricKind::Cost {
                let bound = benchmarks
                    .get(&r.benchmark_id)
                    .and_then(|b| b.cost_bound)
                    .ok_or_else(|| IngestError::MissingCostBound(r.benchmark_id.clone()))?;
                r.score_raw = bound - r.score_raw;
                r.metric_kind = MetricKind::Reward;
            }
            Ok(r)
        })
        .collect()
}

/// Headroom-buffer normalization for one open-ended benchmark:
/// `raw / (1.25 * max_observed) * 100`.
pub fn headroom_normalize(records: &[RawScoreRecord]) -> Result<Vec<RawScoreRecord>, IngestError> {
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    if let Some(other) = records
        .iter()
        .find(|r| r.benchmark_id != first.benchmark_id || r.metric_kind != MetricKind::OpenEnded)
    {
        return Err(IngestError::MixedOpenEndedInput(other.benchmark_id.clone()));
    }
    let max_observed = records
        .iter()
        .map(|r| r.score_raw)
        .fold(f64::NEG_INFINITY, f64::max);
    if max_observed <= 0.0 {
        return Err(IngestError::DegenerateOpenEnded(first.benchmark_id.clone()));
    }
    Ok(records
        .iter()
        .map(|r| RawScoreRecord {
            score_raw: r.score_raw / (HEADROOM_BUFFER * max_observed) * 100.0,
            metric_kind: MetricKind::Reward,
            ..r.clone()
        })
        .collect())
}

/// Apply [`headroom_normalize`] to every open-ended benchmark, leaving other
/// records untouched. Output order follows input order.
pub fn normalize_open_ended(
    records: Vec<RawScoreRecord>,
) -> Result<Vec<RawScoreRecord>, IngestError> {
    let mut groups: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        if r.metric_kind == MetricKind::OpenEnded {
            groups.entry(r.benchmark_id.clone()).or_default().push(i);
        }
    }
    let mut records = records;
    for idx in groups.values() {
        let group: Vec<RawScoreRecord> = idx.iter().map(|&i| records[i].clone()).collect();
        for (&i, r) in idx.iter().zip(headroom_normalize(&group)?) {
            records[i] = r;
        }
    }
    Ok(records)
}

/// A same-date collision resolved during snapshot clustering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapshotTie {
    pub family_id: String,
    pub model_id: String,
    pub variant: Variant,
    pub eval_date: NaiveDate,
    pub kept_snapshot: String,
    pub discarded_snapshots: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Clustered {
    pub records: Vec<RawScoreRecord>,
    pub benchmarks: BenchmarkRegistry,
    pub ties: Vec<SnapshotTie>,
}

/// Merge time-bound snapshots into their family cluster.
///
/// Each benchmark belongs to the cluster `family_id.unwrap_or(id)`. Within a
/// cluster a model keeps, per variant, the score from its latest-dated
/// snapshot; equal dates resolve to the lexicographically last snapshot id.
/// The cluster takes the earliest member release date; other metadata comes
/// from the earliest member that provides it.
pub fn cluster_snapshots(records: Vec<RawScoreRecord>, benchmarks: &BenchmarkRegistry) -> Clustered {
    let cluster_of = |id: &str| -> String {
        benchmarks
            .get(id)
            .and_then(|b| b.family_id.clone())
            .unwrap_or_else(|| id.to_string())
    };

    let mut members: BTreeMap<String, Vec<&BenchmarkMeta>> = BTreeMap::new();
    for b in benchmarks.values() {
        members.entry(cluster_of(&b.id)).or_default().push(b);
    }
    let mut merged = BenchmarkRegistry::new();
    for (cluster, mut list) in members {
        list.sort_by(|a, b| a.release_date.cmp(&b.release_date).then(a.id.cmp(&b.id)));
        let first_with = |f: fn(&BenchmarkMeta) -> Option<String>| list.iter().find_map(|b| f(b));
        let meta = BenchmarkMeta {
            id: cluster.clone(),
            release_date: list[0].release_date,
            domain: list[0].domain.clone(),
            family_id: list[0].family_id.clone(),
            github_repo: first_with(|b| b.github_repo.clone()),
            hf_dataset: first_with(|b| b.hf_dataset.clone()),
            cost_bound: list.iter().find_map(|b| b.cost_bound),
        };
        merged.insert(cluster, meta);
    }

    // (cluster, model, variant) -> candidates in input order
    let mut buckets: BTreeMap<(String, String, Variant), Vec<RawScoreRecord>> = BTreeMap::new();
    for r in records {
        let key = (cluster_of(&r.benchmark_id), r.model_id.clone(), r.variant);
        buckets.entry(key).or_default().push(r);
    }
    let mut out = Vec::new();
    let mut ties = Vec::new();
    for ((cluster, model, variant), mut cands) in buckets {
        cands.sort_by(|a, b| {
            a.eval_date
                .cmp(&b.eval_date)
                .then_with(|| a.benchmark_id.cmp(&b.benchmark_id))
        });
        let mut kept = cands.pop().expect("bucket is non-empty");
        let same_day: Vec<String> = cands
            .iter()
            .filter(|c| c.eval_date == kept.eval_date)
            .map(|c| c.benchmark_id.clone())
            .collect();
        if !same_day.is_empty() {
            ties.push(SnapshotTie {
                family_id: cluster.clone(),
                model_id: model,
                variant,
                eval_date: kept.eval_date,
                kept_snapshot: kept.benchmark_id.clone(),
                discarded_snapshots: same_day,
            });
        }
        kept.benchmark_id = cluster;
        out.push(kept);
    }
    Clustered {
        records: out,
        benchmarks: merged,
        ties,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub score: f64,
    pub eval_date: NaiveDate,
}

/// Per (model, benchmark) scores, at most one per variant.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub base: Option<Observation>,
    pub augmented: Option<Observation>,
}

impl Cell {
    fn slot(&mut self, v: Variant) -> &mut Option<Observation> {
        match v {
            Variant::Base => &mut self.base,
            Variant::Augmented => &mut self.augmented,
        }
    }
}

/// Sparse benchmark × model table of aligned scores on `[0, 100]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreMatrix {
    cells: BTreeMap<String, BTreeMap<String, Cell>>,
}

impl ScoreMatrix {
    /// Build from aligned records. Scores must lie in `[0, 100]` and each
    /// (model, benchmark, variant) may appear once.
    pub fn from_records(records: &[RawScoreRecord]) -> Result<Self, IngestError> {
        let mut m = ScoreMatrix::default();
        for r in records {
            if !(0.0..=100.0).contains(&r.score_raw) {
                return Err(IngestError::ScoreOutOfRange {
                    model: r.model_id.clone(),
                    benchmark: r.benchmark_id.clone(),
                    score: r.score_raw,
                });
            }
            let slot = m
                .cells
                .entry(r.benchmark_id.clone())
                .or_default()
                .entry(r.model_id.clone())
                .or_default()
                .slot(r.variant);
            if slot.is_some() {
                return Err(IngestError::Duplicate {
                    source_name: "aligned records".into(),
                    line: 0,
                    model: r.model_id.clone(),
                    benchmark: r.benchmark_id.clone(),
                    variant: r.variant,
                });
            }
            *slot = Some(Observation {
                score: r.score_raw,
                eval_date: r.eval_date,
            });
        }
        Ok(m)
    }

    pub fn insert(&mut self, model: &str, benchmark: &str, variant: Variant, obs: Observation) {
        *self
            .cells
            .entry(benchmark.to_string())
            .or_default()
            .entry(model.to_string())
            .or_default()
            .slot(variant) = Some(obs);
    }

    pub fn benchmark_ids(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn benchmark_count(&self) -> usize {
        self.cells.len()
    }

    pub fn model_ids(&self) -> BTreeSet<&str> {
        self.cells
            .values()
            .flat_map(|row| row.keys().map(String::as_str))
            .collect()
    }

    pub fn row(&self, benchmark: &str) -> Option<&BTreeMap<String, Cell>> {
        self.cells.get(benchmark)
    }

    pub fn rows(&self) -> impl Iterator<Item = (&str, &BTreeMap<String, Cell>)> {
        self.cells.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn entry_count(&self) -> usize {
        self.cells
            .values()
            .flat_map(|row| row.values())
            .map(|c| c.base.is_some() as usize + c.augmented.is_some() as usize)
            .sum()
    }

    /// Drop every entry of the named models; emptied benchmarks disappear.
    pub fn without_models(&self, drop: &BTreeSet<String>) -> ScoreMatrix {
        let cells = self
            .cells
            .iter()
            .filter_map(|(b, row)| {
                let row: BTreeMap<String, Cell> = row
                    .iter()
                    .filter(|(m, _)| !drop.contains(*m))
                    .map(|(m, c)| (m.clone(), *c))
                    .collect();
                (!row.is_empty()).then(|| (b.clone(), row))
            })
            .collect();
        ScoreMatrix { cells }
    }

    /// Keep only the named benchmarks.
    pub fn restrict_benchmarks(&self, keep: &BTreeSet<String>) -> ScoreMatrix {
        ScoreMatrix {
            cells: self
                .cells
                .iter()
                .filter(|(b, _)| keep.contains(*b))
                .map(|(b, r)| (b.clone(), r.clone()))
                .collect(),
        }
    }

    /// Rewrite every score in deterministic (benchmark, model, base-then-
    /// augmented) order.
    pub fn map_scores(&self, mut f: impl FnMut(f64) -> f64) -> ScoreMatrix {
        let mut out = self.clone();
        for row in out.cells.values_mut() {
            for cell in row.values_mut() {
                for obs in [&mut cell.base, &mut cell.augmented].into_iter().flatten() {
                    obs.score = f(obs.score);
                }
            }
        }
        out
    }

    fn base_participants(&self, benchmark: &str) -> usize {
        self.cells
            .get(benchmark)
            .map(|row| row.values().filter(|c| c.base.is_some()).count())
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Discrimination,
    Saturation,
}

/// benchmark -> model -> observation, one score per pair.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatrixView {
    pub rows: BTreeMap<String, BTreeMap<String, Observation>>,
}

impl MatrixView {
    pub fn scores(&self, benchmark: &str) -> Vec<f64> {
        self.rows
            .get(benchmark)
            .map(|r| r.values().map(|o| o.score).collect())
            .unwrap_or_default()
    }
}

/// The discrimination view keeps base-variant scores only; the saturation
/// view keeps the best score across variants.
pub fn select_variant(matrix: &ScoreMatrix, axis: Axis) -> MatrixView {
    let rows = matrix
        .cells
        .iter()
        .map(|(b, row)| {
            let picked = row
                .iter()
                .filter_map(|(m, cell)| {
                    let obs = match axis {
                        Axis::Discrimination => cell.base,
                        Axis::Saturation => match (cell.base, cell.augmented) {
                            (Some(a), Some(b)) => Some(if b.score > a.score { b } else { a }),
                            (a, b) => a.or(b),
                        },
                    };
                    obs.map(|o| (m.clone(), o))
                })
                .collect();
            (b.clone(), picked)
        })
        .collect();
    MatrixView { rows }
}

/// Drop benchmarks with fewer than [`MIN_PARTICIPATION`] base-variant
/// models. Removing a benchmark never removes a model's other entries, so a
/// single pass reaches the fixpoint.
pub fn apply_participation_filter(
    matrix: &ScoreMatrix,
) -> Result<(ScoreMatrix, Vec<String>), IngestError> {
    let (keep, dropped): (Vec<&String>, Vec<&String>) = matrix
        .cells
        .keys()
        .partition(|b| matrix.base_participants(b) >= MIN_PARTICIPATION);
    if keep.is_empty() {
        return Err(IngestError::EmptyAudit);
    }
    let keep: BTreeSet<String> = keep.into_iter().cloned().collect();
    Ok((
        matrix.restrict_benchmarks(&keep),
        dropped.into_iter().cloned().collect(),
    ))
}

/// Aligned, validated inputs ready for a pipeline run.
#[derive(Debug, Clone)]
pub struct AlignedInputs {
    pub matrix: ScoreMatrix,
    pub benchmarks: BenchmarkRegistry,
    pub models: ModelRegistry,
    pub snapshot_ties: Vec<SnapshotTie>,
    pub warnings: Vec<String>,
}

/// Inversion, headroom normalization, clustering and matrix construction.
pub fn align(parsed: ParsedInputs) -> Result<AlignedInputs, IngestError> {
    let records = invert_cost_metrics(parsed.records, &parsed.benchmarks)?;
    let records = normalize_open_ended(records)?;
    let clustered = cluster_snapshots(records, &parsed.benchmarks);
    let matrix = ScoreMatrix::from_records(&clustered.records)?;
    Ok(AlignedInputs {
        matrix,
        benchmarks: clustered.benchmarks,
        models: parsed.models,
        snapshot_ties: clustered.ties,
        warnings: parsed.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bench(id: &str, family: Option<&str>, release: &str) -> BenchmarkMeta {
        BenchmarkMeta {
            id: id.into(),
            release_date: d(release),
            domain: "reasoning".into(),
            family_id: family.map(String::from),
            github_repo: None,
            hf_dataset: None,
            cost_bound: None,
        }
    }

    fn rec(m: &str, b: &str, s: f64, kind: MetricKind, date: &str, v: Variant) -> RawScoreRecord {
        RawScoreRecord {
            model_id: m.into(),
            benchmark_id: b.into(),
            score_raw: s,
            metric_kind: kind,
            eval_date: d(date),
            variant: v,
        }
    }

    fn registries() -> (BenchmarkRegistry, ModelRegistry) {
        let b = parse_benchmarks(
            r#"[{"id":"B1","release_date":"2024-01-01","domain":"math"},
                {"id":"B2","release_date":"2024-02-01","domain":"code","cost_bound":100}]"#,
            "benchmarks.json",
        )
        .unwrap();
        let m = parse_models(
            r#"[{"id":"A","vendor":"v","release_date":"2025-01-01"},
                {"id":"B","vendor":"v","release_date":"2025-02-01"}]"#,
            "models.json",
        )
        .unwrap();
        (b, m)
    }

    #[test]
    fn parse_well_formed_rows() {
        let (b, m) = registries();
        let csv = "model_id,benchmark_id,score_raw,metric_kind,eval_date,variant\n\
                   A,B1,50,reward,2025-03-01,base\n\
                   B,B1,60,reward,2025-03-01,\n\
                   A,B2,30,cost,2025-03-01,augmented\n";
        let recs = parse_scores(csv.as_bytes(), "scores.csv", &b, &m).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[1].variant, Variant::Base);
        assert_eq!(recs[2].metric_kind, MetricKind::Cost);
    }

    #[test]
    fn five_column_header_defaults_variant() {
        let (b, m) = registries();
        let csv = "model_id,benchmark_id,score_raw,metric_kind,eval_date\nA,B1,50,reward,2025-03-01\n";
        let recs = parse_scores(csv.as_bytes(), "s.csv", &b, &m).unwrap();
        assert_eq!(recs[0].variant, Variant::Base);
    }

    #[test]
    fn bad_score_names_line() {
        let (b, m) = registries();
        let csv = "model_id,benchmark_id,score_raw,metric_kind,eval_date,variant\n\
                   A,B1,50,reward,2025-03-01,base\n\
                   B,B1,abc,reward,2025-03-01,base\n";
        match parse_scores(csv.as_bytes(), "scores.csv", &b, &m) {
            Err(IngestError::Malformed { line, msg, .. }) => {
                assert_eq!(line, 3);
                assert!(msg.contains("abc"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_model_is_referential_error() {
        let (b, m) = registries();
        let csv = "model_id,benchmark_id,score_raw,metric_kind,eval_date,variant\nX,B1,1,reward,2025-03-01,base\n";
        match parse_scores(csv.as_bytes(), "scores.csv", &b, &m) {
            Err(IngestError::UnknownId { kind, id, line, .. }) => {
                assert_eq!((kind, id.as_str(), line), ("model", "X", 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_triplet_rejected() {
        let (b, m) = registries();
        let csv = "model_id,benchmark_id,score_raw,metric_kind,eval_date,variant\n\
                   A,B1,1,reward,2025-03-01,base\nA,B1,2,reward,2025-04-01,\n";
        assert!(matches!(
            parse_scores(csv.as_bytes(), "s.csv", &b, &m),
            Err(IngestError::Duplicate { line: 3, .. })
        ));
    }

    #[test]
    fn bad_header_and_dates() {
        let (b, m) = registries();
        let csv = "model,benchmark,score\nA,B1,1\n";
        assert!(matches!(
            parse_scores(csv.as_bytes(), "s.csv", &b, &m),
            Err(IngestError::Malformed { line: 1, .. })
        ));
        let csv = "model_id,benchmark_id,score_raw,metric_kind,eval_date,variant\nA,B1,1,reward,2025-13-01,base\n";
        assert!(matches!(
            parse_scores(csv.as_bytes(), "s.csv", &b, &m),
            Err(IngestError::Malformed { line: 2, .. })
        ));
    }

    #[test]
    fn registry_duplicates_rejected() {
        let err = parse_models(
            r#"[{"id":"A","vendor":"v","release_date":"2025-01-01"},{"id":"A","vendor":"w","release_date":"2025-01-02"}]"#,
            "m.json",
        )
        .unwrap_err();
        assert!(matches!(err, IngestError::DuplicateRegistryId { kind: "model", .. }));
    }

    #[test]
    fn cost_inversion() {
        let (b, _) = registries();
        let recs = vec![
            rec("A", "B2", 30.0, MetricKind::Cost, "2025-03-01", Variant::Base),
            rec("B", "B2", 0.0, MetricKind::Cost, "2025-03-01", Variant::Base),
            rec("A", "B1", 55.0, MetricKind::Reward, "2025-03-01", Variant::Base),
        ];
        let out = invert_cost_metrics(recs, &b).unwrap();
        assert_eq!(out[0].score_raw, 70.0);
        assert_eq!(out[0].metric_kind, MetricKind::Reward);
        assert_eq!(out[1].score_raw, 100.0);
        assert_eq!(out[2].score_raw, 55.0);

        let missing = vec![rec("A", "B1", 3.0, MetricKind::Cost, "2025-03-01", Variant::Base)];
        assert!(matches!(
            invert_cost_metrics(missing, &b),
            Err(IngestError::MissingCostBound(id)) if id == "B1"
        ));
    }

    #[test]
    fn headroom_examples() {
        let recs: Vec<_> = [64.0, 32.0, 0.0]
            .iter()
            .map(|&s| rec("A", "OE", s, MetricKind::OpenEnded, "2025-01-01", Variant::Base))
            .collect();
        let out = headroom_normalize(&recs).unwrap();
        assert_eq!(out[0].score_raw, 80.0);
        assert_eq!(out[1].score_raw, 40.0);
        assert_eq!(out[2].score_raw, 0.0);

        let zero = vec![rec("A", "OE", 0.0, MetricKind::OpenEnded, "2025-01-01", Variant::Base)];
        assert!(matches!(headroom_normalize(&zero), Err(IngestError::DegenerateOpenEnded(_))));

        let mixed = vec![
            rec("A", "OE", 1.0, MetricKind::OpenEnded, "2025-01-01", Variant::Base),
            rec("A", "OX", 1.0, MetricKind::OpenEnded, "2025-01-01", Variant::Base),
        ];
        assert!(headroom_normalize(&mixed).is_err());
    }

    proptest! {
        #[test]
        fn headroom_scale_invariant(raw in prop::collection::vec(0.0f64..1000.0, 1..20), c in 0.01f64..100.0) {
            prop_assume!(raw.iter().cloned().fold(0.0, f64::max) > 1e-6);
            let a: Vec<_> = raw.iter().map(|&s| rec("A", "OE", s, MetricKind::OpenEnded, "2025-01-01", Variant::Base)).collect();
            let b: Vec<_> = raw.iter().map(|&s| rec("A", "OE", s * c, MetricKind::OpenEnded, "2025-01-01", Variant::Base)).collect();
            let na = headroom_normalize(&a).unwrap();
            let nb = headroom_normalize(&b).unwrap();
            for (x, y) in na.iter().zip(&nb) {
                prop_assert!((x.score_raw - y.score_raw).abs() < 1e-9);
                prop_assert!((0.0..=80.0 + 1e-9).contains(&x.score_raw));
            }
        }
    }

    #[test]
    fn clustering_keeps_latest_snapshot() {
        let mut reg = BenchmarkRegistry::new();
        reg.insert("lcb-v5".into(), bench("lcb-v5", Some("lcb"), "2024-09-01"));
        reg.insert("lcb-v6".into(), bench("lcb-v6", Some("lcb"), "2025-01-01"));
        let recs = vec![
            rec("A", "lcb-v5", 40.0, MetricKind::Reward, "2025-01-15", Variant::Base),
            rec("A", "lcb-v6", 45.0, MetricKind::Reward, "2025-06-15", Variant::Base),
        ];
        let out = cluster_snapshots(recs, &reg);
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].score_raw, 45.0);
        assert_eq!(out.records[0].benchmark_id, "lcb");
        assert_eq!(out.benchmarks["lcb"].release_date, d("2024-09-01"));
        assert!(out.ties.is_empty());
    }

    #[test]
    fn clustering_disjoint_snapshots_and_ties() {
        let mut reg = BenchmarkRegistry::new();
        reg.insert("s1".into(), bench("s1", Some("fam"), "2024-09-01"));
        reg.insert("s2".into(), bench("s2", Some("fam"), "2024-10-01"));
        let recs = vec![
            rec("A", "s1", 10.0, MetricKind::Reward, "2025-01-01", Variant::Base),
            rec("B", "s2", 20.0, MetricKind::Reward, "2025-01-01", Variant::Base),
            rec("C", "s1", 30.0, MetricKind::Reward, "2025-02-01", Variant::Base),
            rec("C", "s2", 35.0, MetricKind::Reward, "2025-02-01", Variant::Base),
        ];
        let out = cluster_snapshots(recs, &reg);
        let scores: BTreeMap<_, _> = out
            .records
            .iter()
            .map(|r| (r.model_id.as_str(), (r.benchmark_id.as_str(), r.score_raw)))
            .collect();
        assert_eq!(scores["A"], ("fam", 10.0));
        assert_eq!(scores["B"], ("fam", 20.0));
        assert_eq!(scores["C"], ("fam", 35.0));
        assert_eq!(out.ties.len(), 1);
        assert_eq!(out.ties[0].kept_snapshot, "s2");
        assert_eq!(out.ties[0].discarded_snapshots, vec!["s1".to_string()]);
    }

    #[test]
    fn clustering_without_families_is_identity() {
        let (b, _) = registries();
        let recs = vec![
            rec("A", "B1", 10.0, MetricKind::Reward, "2025-01-01", Variant::Base),
            rec("B", "B2", 20.0, MetricKind::Reward, "2025-01-01", Variant::Augmented),
        ];
        let out = cluster_snapshots(recs.clone(), &b);
        assert_eq!(out.records, recs);
        assert_eq!(out.benchmarks, b);
    }

    fn obs(score: f64) -> Observation {
        Observation {
            score,
            eval_date: d("2025-01-01"),
        }
    }

    #[test]
    fn variant_selection_policy() {
        let mut m = ScoreMatrix::default();
        m.insert("M", "B", Variant::Base, obs(40.0));
        m.insert("M", "B", Variant::Augmented, obs(55.0));
        m.insert("N", "B", Variant::Augmented, obs(55.0));
        m.insert("O", "B", Variant::Base, obs(30.0));
        let disc = select_variant(&m, Axis::Discrimination);
        let sat = select_variant(&m, Axis::Saturation);
        assert_eq!(disc.rows["B"]["M"].score, 40.0);
        assert_eq!(sat.rows["B"]["M"].score, 55.0);
        assert!(!disc.rows["B"].contains_key("N"));
        assert_eq!(sat.rows["B"]["N"].score, 55.0);
        assert_eq!(disc.rows["B"]["O"], sat.rows["B"]["O"]);
    }

    #[test]
    fn base_only_views_coincide() {
        let mut m = ScoreMatrix::default();
        for (i, s) in [10.0, 20.0, 30.0].iter().enumerate() {
            m.insert(&format!("m{i}"), "B", Variant::Base, obs(*s));
        }
        assert_eq!(select_variant(&m, Axis::Discrimination), select_variant(&m, Axis::Saturation));
    }

    #[test]
    fn participation_filter() {
        let mut m = ScoreMatrix::default();
        for i in 0..3 {
            m.insert(&format!("m{i}"), "three", Variant::Base, obs(10.0 * i as f64));
        }
        for i in 0..2 {
            m.insert(&format!("m{i}"), "two", Variant::Base, obs(10.0));
        }
        let (kept, dropped) = apply_participation_filter(&m).unwrap();
        assert_eq!(kept.benchmark_ids().collect::<Vec<_>>(), vec!["three"]);
        assert_eq!(dropped, vec!["two".to_string()]);
        // one pass is already the fixpoint
        let (again, dropped_again) = apply_participation_filter(&kept).unwrap();
        assert_eq!(again, kept);
        assert!(dropped_again.is_empty());

        let only_two = m.restrict_benchmarks(&["two".to_string()].into());
        assert!(matches!(apply_participation_filter(&only_two), Err(IngestError::EmptyAudit)));
    }

    #[test]
    fn out_of_range_scores_rejected() {
        let recs = vec![rec("A", "B1", 101.0, MetricKind::Reward, "2025-01-01", Variant::Base)];
        assert!(matches!(
            ScoreMatrix::from_records(&recs),
            Err(IngestError::ScoreOutOfRange { .. })
        ));
    }
}
