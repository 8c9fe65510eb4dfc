//! Anti-Saturation pillar: remaining headroom now (static, capability
//! weighted) and after a 30-day linear extrapolation (dynamic).

use std::collections::BTreeMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calibration::CapabilityProfile;
use crate::ingest::MatrixView;
use crate::stats::{self, StatsError, TrendFit};

pub const PROJECTION_WINDOW_DAYS: f64 = 30.0;
pub const STATIC_WEIGHT: f64 = 0.8;
pub const DYNAMIC_WEIGHT: f64 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SaturationError {
    #[error("benchmark `{0}`: capability weights sum to zero")]
    NoCalibratedParticipants(String),
    #[error("benchmark `{0}` has no calibration profile")]
    MissingProfile(String),
    #[error("score and capability vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

/// Projection window and fusion weights. Only [`SaturationParams::STANDARD`]
/// produces the standard index; anything else is reported under a different
/// metric name.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    pub window_days: f64,
    pub static_weight: f64,
}

impl SaturationParams {
    pub const STANDARD: SaturationParams = SaturationParams {
        window_days: PROJECTION_WINDOW_DAYS,
        static_weight: STATIC_WEIGHT,
    };

    pub fn is_standard(&self) -> bool {
        *self == Self::STANDARD
    }
}

impl Default for SaturationParams {
    fn default() -> Self {
        Self::STANDARD
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendDump {
    pub origin: NaiveDate,
    pub fit: Option<TrendFit>,
    pub points: Vec<(NaiveDate, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationBreakdown {
    pub s_sta: f64,
    pub slope_k: Option<f64>,
    pub mean_score: f64,
    pub s_dyn: f64,
    pub s_as: f64,
    pub dyn_fallback: bool,
}

/// `1 - sum(score * theta) / sum(theta)` with scores on `[0, 1]`.
pub fn static_resistance(scores01: &[f64], theta: &[f64]) -> Result<f64, SaturationError> {
    if scores01.len() != theta.len() {
        return Err(SaturationError::LengthMismatch(scores01.len(), theta.len()));
    }
    stats::Series::new(scores01.to_vec())?;
    stats::Series::new(theta.to_vec())?;
    let weight: f64 = theta.iter().sum();
    if weight <= 0.0 {
        return Err(SaturationError::NoCalibratedParticipants(String::new()));
    }
    let weighted: f64 = scores01.iter().zip(theta).map(|(s, t)| s * t).sum();
    Ok(1.0 - weighted / weight)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicProjection {
    pub s_dyn: f64,
    pub fit: Option<TrendFit>,
    pub mean_score: f64,
    pub fallback: bool,
}

/// OLS trend over `(days since earliest date, score)` projected
/// `window_days` ahead from the plain mean score. A negative slope, or fewer
/// than two distinct dates, falls back to `s_sta`.
pub fn dynamic_projection(
    dated_scores01: &[(NaiveDate, f64)],
    s_sta: f64,
    window_days: f64,
) -> Result<DynamicProjection, SaturationError> {
    let scores: Vec<f64> = dated_scores01.iter().map(|p| p.1).collect();
    let mean_score = stats::mean(&scores)?;
    let fallback = |fit| DynamicProjection {
        s_dyn: s_sta,
        fit,
        mean_score,
        fallback: true,
    };
    let Some(origin) = dated_scores01.iter().map(|p| p.0).min() else {
        return Ok(fallback(None));
    };
    let points: Vec<(f64, f64)> = dated_scores01
        .iter()
        .map(|(d, s)| ((*d - origin).num_days() as f64, *s))
        .collect();
    let fit = match stats::ols_fit(&points) {
        Ok(fit) => fit,
        Err(StatsError::Constant(_)) | Err(StatsError::TooShort { .. }) => {
            return Ok(fallback(None))
        }
        Err(e) => return Err(e.into()),
    };
    if fit.slope_k < 0.0 {
        return Ok(fallback(Some(fit)));
    }
    Ok(DynamicProjection {
        s_dyn: (1.0 - (mean_score + window_days * fit.slope_k)).max(0.0),
        fit: Some(fit),
        mean_score,
        fallback: false,
    })
}

/// `0.8 * s_sta + 0.2 * s_dyn` under the standard parameters.
pub fn anti_saturation(s_sta: f64, s_dyn: f64, params: SaturationParams) -> f64 {
    params.static_weight * s_sta + (1.0 - params.static_weight) * s_dyn
}

#[derive(Debug, Clone, PartialEq)]
pub struct SaturationResult {
    pub breakdown: SaturationBreakdown,
    pub trend: TrendDump,
}

/// Anti-saturation for every benchmark of the saturation view.
pub fn saturate(
    view: &MatrixView,
    profiles: &BTreeMap<String, CapabilityProfile>,
    params: SaturationParams,
) -> Result<BTreeMap<String, SaturationResult>, SaturationError> {
    let mut out = BTreeMap::new();
    for (b, row) in &view.rows {
        let profile = profiles
            .get(b)
            .ok_or_else(|| SaturationError::MissingProfile(b.clone()))?;
        let mut scores = Vec::with_capacity(row.len());
        let mut theta = Vec::with_capacity(row.len());
        let mut dated = Vec::with_capacity(row.len());
        for (m, obs) in row {
            let s = obs.score / 100.0;
            scores.push(s);
            theta.push(profile.theta.get(m).copied().unwrap_or(0.0));
            dated.push((obs.eval_date, s));
        }
        let s_sta = static_resistance(&scores, &theta).map_err(|e| match e {
            SaturationError::NoCalibratedParticipants(_) => {
                SaturationError::NoCalibratedParticipants(b.clone())
            }
            other => other,
        })?;
        let dynamic = dynamic_projection(&dated, s_sta, params.window_days)?;
        let origin = dated.iter().map(|p| p.0).min().expect("row is non-empty");
        dated.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        out.insert(
            b.clone(),
            SaturationResult {
                breakdown: SaturationBreakdown {
                    s_sta,
                    slope_k: dynamic.fit.map(|f| f.slope_k),
                    mean_score: dynamic.mean_score,
                    s_dyn: dynamic.s_dyn,
                    s_as: anti_saturation(s_sta, dynamic.s_dyn, params),
                    dyn_fallback: dynamic.fallback,
                },
                trend: TrendDump {
                    origin,
                    fit: dynamic.fit,
                    points: dated,
                },
            },
        );
    }
    Ok(out)
}
