//! Impact pillar: industry adoption and community heat, fused with
//! coefficient-of-variation weights.
//!
//! Time differences are measured in months of `30.4375` days. Adoption decays
//! each participant's capability with a 6-month half-life; community signals
//! decay with the benchmark's age on a 2.5-year half-life.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CapabilityProfile;
use crate::ingest::{BenchmarkRegistry, MatrixView, ModelRegistry};
use crate::stats::{self, StatsError, StdMode};

/// Adoption decay rate per month (6-month half-life).
pub const LAMBDA_ADOPTION: f64 = 0.1155;
/// Community decay rate per month (30-month half-life).
pub const LAMBDA_COMMUNITY: f64 = 0.0231;
pub const DAYS_PER_MONTH: f64 = 30.4375;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpactError {
    #[error("benchmark `{0}`: no model in the roster was released on or after its publication")]
    NoEligibleModels(String),
    #[error("negative elapsed time {0} months")]
    NegativeElapsed(f64),
    #[error("unknown {kind} `{id}` in metadata lookup")]
    MissingMeta { kind: &'static str, id: String },
    #[error("benchmark `{0}` has no calibration profile")]
    MissingProfile(String),
    #[error("neither adoption nor community heat varies across benchmarks")]
    NoSignal,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

pub fn months_between(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / DAYS_PER_MONTH
}

/// Snapshot of public engagement for one benchmark. A platform whose counts
/// could not be fetched is absent (`None`), never zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunitySnapshot {
    pub benchmark_id: String,
    pub gh_stars: Option<u64>,
    pub gh_forks: Option<u64>,
    pub hf_likes: Option<u64>,
    pub hf_downloads: Option<u64>,
    pub fetched_at: NaiveDate,
    /// Which download counter the dataset hub reported.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hf_downloads_window: Option<String>,
    #[serde(default)]
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl CommunitySnapshot {
    pub fn empty(benchmark_id: &str, fetched_at: NaiveDate) -> Self {
        Self {
            benchmark_id: benchmark_id.to_string(),
            gh_stars: None,
            gh_forks: None,
            hf_likes: None,
            hf_downloads: None,
            fetched_at,
            hf_downloads_window: None,
            partial: false,
            notes: Vec::new(),
        }
    }

    pub fn gh_total(&self) -> Option<u64> {
        Some(self.gh_stars? + self.gh_forks?)
    }

    pub fn hf_total(&self) -> Option<u64> {
        Some(self.hf_likes? + self.hf_downloads?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFile {
    pub fetched_at: NaiveDate,
    pub snapshots: Vec<CommunitySnapshot>,
}

impl SnapshotFile {
    pub fn by_benchmark(&self) -> BTreeMap<&str, &CommunitySnapshot> {
        self.snapshots
            .iter()
            .map(|s| (s.benchmark_id.as_str(), s))
            .collect()
    }
}

/// `sum(theta * exp(-lambda1 * dt)) / n_eligible` over `(theta, dt months)`.
pub fn industry_adoption_raw(participants: &[(f64, f64)], n_eligible: usize) -> Result<f64, ImpactError> {
    if n_eligible == 0 {
        return Err(ImpactError::NoEligibleModels(String::new()));
    }
    let mut sum = 0.0;
    for &(theta, dt) in participants {
        if dt < 0.0 {
            return Err(ImpactError::NegativeElapsed(dt));
        }
        sum += theta * (-LAMBDA_ADOPTION * dt).exp();
    }
    Ok(sum / n_eligible as f64)
}

/// `Norm(sqrt(I_raw))` across benchmarks.
pub fn n_usage(i_raw_all: &[f64]) -> Result<Vec<f64>, StatsError> {
    let roots: Vec<f64> = i_raw_all.iter().map(|v| v.max(0.0).sqrt()).collect();
    stats::minmax_norm(&roots)
}

/// Log-compressed, age-decayed signal for each platform that is present.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommunitySignal {
    pub gh: Option<f64>,
    pub hf: Option<f64>,
}

pub fn community_signal(snapshot: &CommunitySnapshot, age_months: f64) -> CommunitySignal {
    let decay = (-LAMBDA_COMMUNITY * age_months.max(0.0)).exp();
    let compress = |total: u64| (total as f64 * decay).ln_1p();
    CommunitySignal {
        gh: snapshot.gh_total().map(compress),
        hf: snapshot.hf_total().map(compress),
    }
}

fn norm_present(values: &[Option<f64>]) -> Result<Vec<f64>, StatsError> {
    let present: Vec<f64> = values.iter().flatten().copied().collect();
    if present.is_empty() {
        return Ok(vec![0.0; values.len()]);
    }
    let mut normed = stats::minmax_norm(&present)?.into_iter();
    Ok(values
        .iter()
        .map(|v| match v {
            Some(_) => normed.next().expect("one normalized value per present entry"),
            None => 0.0,
        })
        .collect())
}

/// Community heat per benchmark: mean of the two per-platform normalized
/// signals, an absent platform contributing 0.
pub fn community_heat(signals: &[CommunitySignal]) -> Result<Vec<f64>, StatsError> {
    let gh = norm_present(&signals.iter().map(|s| s.gh).collect::<Vec<_>>())?;
    let hf = norm_present(&signals.iter().map(|s| s.hf).collect::<Vec<_>>())?;
    Ok(gh.iter().zip(&hf).map(|(g, h)| (g + h) / 2.0).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvWeights {
    pub w_usage: f64,
    pub w_comm: f64,
}

fn coefficient_of_variation(xs: &[f64]) -> Result<f64, StatsError> {
    let mu = stats::mean(xs)?;
    if mu == 0.0 {
        return Ok(0.0);
    }
    Ok(stats::std_dev(xs, StdMode::Population)? / mu)
}

/// CV-weighted fusion with population moments. A zero-mean column has CV 0.
pub fn fuse_cv(n_usage_all: &[f64], s_comm_all: &[f64]) -> Result<(Vec<f64>, CvWeights), ImpactError> {
    if n_usage_all.len() != s_comm_all.len() {
        return Err(StatsError::LengthMismatch(n_usage_all.len(), s_comm_all.len()).into());
    }
    if n_usage_all.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: n_usage_all.len(),
        }
        .into());
    }
    let cv_u = coefficient_of_variation(n_usage_all)?;
    let cv_c = coefficient_of_variation(s_comm_all)?;
    let total = cv_u + cv_c;
    if total <= 0.0 {
        return Err(ImpactError::NoSignal);
    }
    let w = CvWeights {
        w_usage: cv_u / total,
        w_comm: cv_c / total,
    };
    let fused = n_usage_all
        .iter()
        .zip(s_comm_all)
        .map(|(u, c)| w.w_usage * u + w.w_comm * c)
        .collect();
    Ok((fused, w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpactBreakdown {
    pub i_raw: f64,
    pub n_usage: f64,
    pub s_comm: f64,
    pub cv_weights: CvWeights,
    pub s_imp: f64,
    pub n_eligible: usize,
    pub community: CommunitySignal,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub missing_platforms: Vec<String>,
}

/// Raw adoption for one benchmark.
///
/// The roster is every model present in the (filtered) matrix. A model is
/// eligible when released on or after the benchmark; only eligible
/// participants enter the decayed sum. Elapsed time runs from model release
/// to `as_of`, floored at zero.
pub fn adoption_for_benchmark(
    benchmark: &str,
    participants: &[&str],
    roster: &[&str],
    profile: &CapabilityProfile,
    benchmarks: &BenchmarkRegistry,
    models: &ModelRegistry,
    as_of: NaiveDate,
) -> Result<(f64, usize), ImpactError> {
    let meta = |id: &str| {
        models.get(id).ok_or_else(|| ImpactError::MissingMeta {
            kind: "model",
            id: id.to_string(),
        })
    };
    let released = benchmarks
        .get(benchmark)
        .ok_or_else(|| ImpactError::MissingMeta {
            kind: "benchmark",
            id: benchmark.to_string(),
        })?
        .release_date;
    let mut n_eligible = 0;
    for m in roster {
        if meta(m)?.release_date >= released {
            n_eligible += 1;
        }
    }
    let mut pairs = Vec::with_capacity(participants.len());
    for m in participants {
        let md = meta(m)?;
        if md.release_date < released {
            continue;
        }
        let theta = profile.theta.get(*m).copied().unwrap_or(0.0);
        pairs.push((theta, months_between(md.release_date, as_of).max(0.0)));
    }
    let i_raw = industry_adoption_raw(&pairs, n_eligible).map_err(|e| match e {
        ImpactError::NoEligibleModels(_) => ImpactError::NoEligibleModels(benchmark.to_string()),
        other => other,
    })?;
    Ok((i_raw, n_eligible))
}

/// Impact breakdown for every benchmark of `view`.
pub fn assess_impact(
    view: &MatrixView,
    profiles: &BTreeMap<String, CapabilityProfile>,
    benchmarks: &BenchmarkRegistry,
    models: &ModelRegistry,
    snapshot: &SnapshotFile,
    as_of: NaiveDate,
) -> Result<BTreeMap<String, ImpactBreakdown>, ImpactError> {
    let roster: Vec<&str> = {
        let mut set: Vec<&str> = view
            .rows
            .values()
            .flat_map(|r| r.keys().map(String::as_str))
            .collect();
        set.sort_unstable();
        set.dedup();
        set
    };
    let snaps = snapshot.by_benchmark();
    let ids: Vec<&String> = view.rows.keys().collect();
    let mut raws = Vec::with_capacity(ids.len());
    let mut eligible = Vec::with_capacity(ids.len());
    let mut signals = Vec::with_capacity(ids.len());
    for id in &ids {
        let profile = profiles
            .get(*id)
            .ok_or_else(|| ImpactError::MissingProfile((*id).clone()))?;
        let participants: Vec<&str> = view.rows[*id].keys().map(String::as_str).collect();
        let (raw, n) = adoption_for_benchmark(id, &participants, &roster, profile, benchmarks, models, as_of)?;
        raws.push(raw);
        eligible.push(n);
        let age = months_between(benchmarks[*id].release_date, as_of);
        signals.push(match snaps.get(id.as_str()) {
            Some(s) => community_signal(s, age),
            None => CommunitySignal { gh: None, hf: None },
        });
    }
    let usage = n_usage(&raws)?;
    let comm = community_heat(&signals)?;
    let (fused, weights) = fuse_cv(&usage, &comm)?;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let mut missing = Vec::new();
            if signals[i].gh.is_none() {
                missing.push("github".to_string());
            }
            if signals[i].hf.is_none() {
                missing.push("huggingface".to_string());
            }
            let b = ImpactBreakdown {
                i_raw: raws[i],
                n_usage: usage[i],
                s_comm: comm[i],
                cv_weights: weights,
                s_imp: fused[i],
                n_eligible: eligible[i],
                community: signals[i],
                missing_platforms: missing,
            };
            (id.clone(), b)
        })
        .collect())
}
