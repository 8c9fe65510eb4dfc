//! End-to-end audit: participation filter, calibration, the three pillars,
//! CRITIC and ranking. Every error carries the module it came from.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{
    self, AggregationError, CriticWeights, Pillar, PillarScores, PillarTable, Ranking, WeightingMode,
};
use crate::calibration::{self, AbsentPolicy, CalibrationError, CapabilityProfile};
use crate::discrimination::{self, DiscriminationBreakdown, DiscriminationError, DEFAULT_DELTA_FRAC};
use crate::impact::{self, ImpactBreakdown, ImpactError, SnapshotFile};
use crate::ingest::{
    self, AlignedInputs, Axis, BenchmarkRegistry, IngestError, ModelRegistry, ScoreMatrix,
};
use crate::robustness::{orthogonality_check, Orthogonality};
use crate::saturation::{self, SaturationBreakdown, SaturationError, SaturationParams, TrendDump};
use crate::stats::StatsError;

pub const MAX_DELTA_FRAC: f64 = 0.2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("[dataset_ingest] {0}")]
    Ingest(#[from] IngestError),
    #[error("[calibration] {0}")]
    Calibration(#[from] CalibrationError),
    #[error("[discrimination] {0}")]
    Discrimination(#[from] DiscriminationError),
    #[error("[saturation] {0}")]
    Saturation(#[from] SaturationError),
    #[error("[impact] {0}")]
    Impact(#[from] ImpactError),
    #[error("[aggregation] {0}")]
    Aggregation(#[from] AggregationError),
    #[error("[robustness] {0}")]
    Stats(#[from] StatsError),
    #[error("[config] {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineOptions {
    pub delta_frac: f64,
    /// Reference date for elapsed-time decays; defaults to the latest eval date.
    pub as_of: Option<NaiveDate>,
    pub absent_policy: AbsentPolicy,
    pub saturation: SaturationParams,
    pub weighting: WeightingMode,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            delta_frac: DEFAULT_DELTA_FRAC,
            as_of: None,
            absent_policy: AbsentPolicy::Error,
            saturation: SaturationParams::STANDARD,
            weighting: WeightingMode::Critic,
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.delta_frac > 0.0 && self.delta_frac <= MAX_DELTA_FRAC) {
            return Err(PipelineError::Config(format!(
                "delta fraction {} outside (0, {MAX_DELTA_FRAC}]",
                self.delta_frac
            )));
        }
        let s = self.saturation;
        if !(s.window_days >= 0.0 && (0.0..=1.0).contains(&s.static_weight)) {
            return Err(PipelineError::Config(format!(
                "saturation window {} / static weight {} out of range",
                s.window_days, s.static_weight
            )));
        }
        Ok(())
    }

    /// "BHI" only under the fixed saturation constants.
    pub fn metric_name(&self) -> String {
        if self.saturation.is_standard() {
            "BHI".to_string()
        } else {
            format!(
                "BHI-custom(window={}d,static={})",
                self.saturation.window_days, self.saturation.static_weight
            )
        }
    }
}

/// Borrowed inputs of one pipeline run. `matrix` is aligned but not yet
/// filtered.
#[derive(Debug, Clone, Copy)]
pub struct PipelineInputs<'a> {
    pub matrix: &'a ScoreMatrix,
    pub benchmarks: &'a BenchmarkRegistry,
    pub models: &'a ModelRegistry,
    pub snapshot: &'a SnapshotFile,
}

impl<'a> PipelineInputs<'a> {
    pub fn new(aligned: &'a AlignedInputs, snapshot: &'a SnapshotFile) -> Self {
        Self {
            matrix: &aligned.matrix,
            benchmarks: &aligned.benchmarks,
            models: &aligned.models,
            snapshot,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub benchmark_id: String,
    pub rank: usize,
    pub bhi: f64,
    pub bhi_ew: f64,
    pub tied: bool,
    pub n_models: usize,
    pub discrimination: DiscriminationBreakdown,
    pub saturation: SaturationBreakdown,
    pub impact: ImpactBreakdown,
}

impl BenchmarkReport {
    pub fn pillars(&self) -> PillarScores {
        PillarScores {
            s_disc: self.discrimination.s_disc,
            s_as: self.saturation.s_as,
            s_imp: self.impact.s_imp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Composite over min-max normalized pillars with the same CRITIC weights.
    pub normalized_composition: BTreeMap<String, f64>,
    pub orthogonality: Orthogonality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub metric: String,
    pub as_of: NaiveDate,
    pub delta_frac: f64,
    pub weighting_mode: WeightingMode,
    pub critic: CriticWeights,
    /// Weights actually applied to rank (CRITIC or 1/3 each).
    pub weights: [f64; 3],
    pub saturation_params: SaturationParams,
    /// Best first.
    pub benchmarks: Vec<BenchmarkReport>,
    pub dropped_benchmarks: Vec<String>,
    pub diagnostics: Diagnostics,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trends: BTreeMap<String, TrendDump>,
    #[serde(skip)]
    pub profiles: BTreeMap<String, CapabilityProfile>,
}

impl HealthReport {
    pub fn ids(&self) -> Vec<String> {
        self.benchmarks.iter().map(|b| b.benchmark_id.clone()).collect()
    }

    pub fn pillar_table(&self) -> PillarTable {
        PillarTable {
            ids: self.ids(),
            rows: self.benchmarks.iter().map(BenchmarkReport::pillars).collect(),
        }
    }

    pub fn ranking(&self, mode: WeightingMode) -> Ranking {
        let ids = self.ids();
        let scores: Vec<f64> = self
            .benchmarks
            .iter()
            .map(|b| match mode {
                WeightingMode::Critic => b.bhi_critic(&self.critic),
                WeightingMode::Equal => b.bhi_ew,
            })
            .collect();
        aggregation::rank_benchmarks(&ids, &scores)
    }

    pub fn get(&self, id: &str) -> Option<&BenchmarkReport> {
        self.benchmarks.iter().find(|b| b.benchmark_id == id)
    }
}

impl BenchmarkReport {
    /// Composite under `critic`, whatever mode the report was ranked in.
    pub fn bhi_critic(&self, critic: &CriticWeights) -> f64 {
        let p = self.pillars();
        critic
            .pillars
            .iter()
            .zip(&critic.weights)
            .map(|(&q, w)| w * p.get(q))
            .sum()
    }
}

fn latest_eval_date(matrix: &ScoreMatrix) -> Option<NaiveDate> {
    matrix
        .rows()
        .flat_map(|(_, row)| row.values())
        .flat_map(|c| [c.base, c.augmented])
        .flatten()
        .map(|o| o.eval_date)
        .max()
}

pub fn run_pipeline(inputs: PipelineInputs<'_>, opts: &PipelineOptions) -> Result<HealthReport, PipelineError> {
    opts.validate()?;
    let (matrix, dropped) = ingest::apply_participation_filter(inputs.matrix)?;
    let as_of = match opts.as_of {
        Some(d) => d,
        None => latest_eval_date(&matrix).ok_or(IngestError::EmptyAudit)?,
    };
    let base = ingest::select_variant(&matrix, Axis::Discrimination);
    let sat_view = ingest::select_variant(&matrix, Axis::Saturation);

    let profiles = calibration::calibrate_all(&base, &sat_view, opts.absent_policy)?;
    let disc = discrimination::discriminate(&base, opts.delta_frac)?;
    let sat = saturation::saturate(&sat_view, &profiles, opts.saturation)?;
    let imp = impact::assess_impact(
        &sat_view,
        &profiles,
        inputs.benchmarks,
        inputs.models,
        inputs.snapshot,
        as_of,
    )?;

    let pillars: BTreeMap<String, PillarScores> = sat_view
        .rows
        .keys()
        .map(|b| {
            let row = PillarScores {
                s_disc: disc[b].s_disc,
                s_as: sat[b].breakdown.s_as,
                s_imp: imp[b].s_imp,
            };
            (b.clone(), row)
        })
        .collect();
    let table = PillarTable::from_map(&pillars);
    let critic = aggregation::critic_weights(&table)?;
    let critic_w = [critic.weights[0], critic.weights[1], critic.weights[2]];
    let bhi = aggregation::compose_bhi(&table, critic_w);
    let bhi_ew = aggregation::equal_weight_bhi(&table);
    let weights = match opts.weighting {
        WeightingMode::Critic => critic_w,
        WeightingMode::Equal => [1.0 / 3.0; 3],
    };
    let ranked_on = match opts.weighting {
        WeightingMode::Critic => &bhi,
        WeightingMode::Equal => &bhi_ew,
    };
    let ranking = aggregation::rank_benchmarks(&table.ids, ranked_on);

    let normalized = normalized_composition(&table, critic_w)?;
    let orthogonality = orthogonality_check(&table)?;

    let mut warnings = Vec::new();
    for b in &dropped {
        warnings.push(format!("benchmark `{b}` dropped: fewer than {} base-variant models", ingest::MIN_PARTICIPATION));
    }
    let snaps = inputs.snapshot.by_benchmark();
    for b in &table.ids {
        if !snaps.contains_key(b.as_str()) {
            warnings.push(format!("benchmark `{b}` has no community snapshot; both platforms treated as absent"));
        }
        if sat[b].breakdown.dyn_fallback {
            warnings.push(format!("benchmark `{b}`: dynamic projection fell back to the static score"));
        }
    }
    for b in &ranking.tied {
        warnings.push(format!("benchmark `{b}` ties another on the ranking score; order is lexicographic"));
    }

    let index: BTreeMap<&str, usize> = table.ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let benchmarks = ranking
        .order
        .iter()
        .map(|id| {
            let i = index[id.as_str()];
            BenchmarkReport {
                benchmark_id: id.clone(),
                rank: ranking.rank[id],
                bhi: ranked_on[i],
                bhi_ew: bhi_ew[i],
                tied: ranking.tied.contains(id),
                n_models: sat_view.rows[id].len(),
                discrimination: disc[id],
                saturation: sat[id].breakdown,
                impact: imp[id].clone(),
            }
        })
        .collect();

    Ok(HealthReport {
        metric: opts.metric_name(),
        as_of,
        delta_frac: opts.delta_frac,
        weighting_mode: opts.weighting,
        critic,
        weights,
        saturation_params: opts.saturation,
        benchmarks,
        dropped_benchmarks: dropped,
        diagnostics: Diagnostics {
            normalized_composition: normalized,
            orthogonality,
        },
        warnings,
        trends: sat.into_iter().map(|(b, r)| (b, r.trend)).collect(),
        profiles,
    })
}

fn normalized_composition(table: &PillarTable, w: [f64; 3]) -> Result<BTreeMap<String, f64>, StatsError> {
    let cols: Vec<Vec<f64>> = Pillar::ALL
        .iter()
        .map(|&p| crate::stats::minmax_norm(&table.column(p)))
        .collect::<Result<_, _>>()?;
    Ok(table
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), w[0] * cols[0][i] + w[1] * cols[1][i] + w[2] * cols[2][i]))
        .collect())
}
