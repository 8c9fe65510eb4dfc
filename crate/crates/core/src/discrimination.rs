//! Capability Discrimination pillar.
//!
//! Two per-benchmark indicators, fused across the benchmark set:
//!
//! * EDR, the share of model pairs whose score gap strictly exceeds an
//!   adaptive threshold `delta = delta_frac * (max - min)`;
//! * RCV, the 10–90 percentile spread divided by the fixed scale 100.
//!
//! Both are min-max normalized over benchmarks and combined with weights
//! proportional to the population standard deviation of each normalized
//! column (SDM).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::MatrixView;
use crate::stats::{self, StatsError, StdMode};

pub const DEFAULT_DELTA_FRAC: f64 = 0.02;

/// Thresholds swept by the sensitivity analysis, as fractions of range.
pub const DEFAULT_DELTA_SWEEP: [f64; 8] = [0.005, 0.01, 0.015, 0.02, 0.025, 0.03, 0.04, 0.05];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiscriminationError {
    #[error("benchmark `{benchmark}`: {source}")]
    Indicator {
        benchmark: String,
        #[source]
        source: StatsError,
    },
    #[error("indicator columns: {0}")]
    Columns(#[from] StatsError),
    #[error("neither EDR nor RCV varies across benchmarks; no discriminative signal")]
    NoSignal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdmWeights {
    pub w_edr: f64,
    pub w_rcv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminationBreakdown {
    pub edr: f64,
    pub rcv: f64,
    pub edr_norm: f64,
    pub rcv_norm: f64,
    pub sdm_weights: SdmWeights,
    pub s_disc: f64,
    pub delta_used: f64,
}

/// Effective differentiation ratio over all `N(N-1)/2` unordered pairs.
pub fn edr(scores: &[f64], delta_frac: f64) -> Result<f64, StatsError> {
    if scores.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: scores.len(),
        });
    }
    let mut sorted = stats::Series::new(scores.to_vec())?.into_inner();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let delta = delta_frac * (sorted[n - 1] - sorted[0]);

    // For ascending values, `sorted[j] - sorted[i]` grows with j and the first
    // exceeding index never moves left as i advances.
    let mut exceeding = 0usize;
    let mut j = 0usize;
    for i in 0..n {
        j = j.max(i + 1);
        while j < n && sorted[j] - sorted[i] <= delta {
            j += 1;
        }
        exceeding += n - j;
    }
    Ok(exceeding as f64 / (n * (n - 1) / 2) as f64)
}

/// Robust coefficient of variation: `(P90 - P10) / 100`.
pub fn rcv(scores: &[f64]) -> Result<f64, StatsError> {
    Ok((stats::percentile(scores, 0.9)? - stats::percentile(scores, 0.1)?) / 100.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdmFusion {
    pub edr_norm: Vec<f64>,
    pub rcv_norm: Vec<f64>,
    pub weights: SdmWeights,
    pub s_disc: Vec<f64>,
}

/// SDM fusion of the two indicator columns (same benchmark order).
pub fn fuse_sdm(edr_all: &[f64], rcv_all: &[f64]) -> Result<SdmFusion, DiscriminationError> {
    if edr_all.len() != rcv_all.len() {
        return Err(StatsError::LengthMismatch(edr_all.len(), rcv_all.len()).into());
    }
    if edr_all.len() < 2 {
        return Err(StatsError::TooShort {
            needed: 2,
            got: edr_all.len(),
        }
        .into());
    }
    let edr_norm = stats::minmax_norm(edr_all)?;
    let rcv_norm = stats::minmax_norm(rcv_all)?;
    let sigma_edr = stats::std_dev(&edr_norm, StdMode::Population)?;
    let sigma_rcv = stats::std_dev(&rcv_norm, StdMode::Population)?;
    let total = sigma_edr + sigma_rcv;
    if total <= 0.0 {
        return Err(DiscriminationError::NoSignal);
    }
    let weights = SdmWeights {
        w_edr: sigma_edr / total,
        w_rcv: sigma_rcv / total,
    };
    let s_disc = edr_norm
        .iter()
        .zip(&rcv_norm)
        .map(|(e, r)| weights.w_edr * e + weights.w_rcv * r)
        .collect();
    Ok(SdmFusion {
        edr_norm,
        rcv_norm,
        weights,
        s_disc,
    })
}

/// Discrimination breakdown for every benchmark of the view.
pub fn discriminate(
    view: &MatrixView,
    delta_frac: f64,
) -> Result<BTreeMap<String, DiscriminationBreakdown>, DiscriminationError> {
    let mut ids = Vec::with_capacity(view.rows.len());
    let mut edrs = Vec::with_capacity(view.rows.len());
    let mut rcvs = Vec::with_capacity(view.rows.len());
    for id in view.rows.keys() {
        let scores = view.scores(id);
        let wrap = |source| DiscriminationError::Indicator {
            benchmark: id.clone(),
            source,
        };
        edrs.push(edr(&scores, delta_frac).map_err(wrap)?);
        rcvs.push(rcv(&scores).map_err(wrap)?);
        ids.push(id.clone());
    }
    let fused = fuse_sdm(&edrs, &rcvs)?;
    Ok(ids
        .into_iter()
        .enumerate()
        .map(|(i, id)| {
            let b = DiscriminationBreakdown {
                edr: edrs[i],
                rcv: rcvs[i],
                edr_norm: fused.edr_norm[i],
                rcv_norm: fused.rcv_norm[i],
                sdm_weights: fused.weights,
                s_disc: fused.s_disc[i],
                delta_used: delta_frac,
            };
            (id, b)
        })
        .collect())
}
