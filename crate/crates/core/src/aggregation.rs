//! CRITIC weighting, BHI composition, the equal-weight baseline and ranking.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{self, StatsError, StdMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pillar {
    #[serde(rename = "s_disc")]
    Discrimination,
    #[serde(rename = "s_as")]
    AntiSaturation,
    #[serde(rename = "s_imp")]
    Impact,
}

impl Pillar {
    pub const ALL: [Pillar; 3] = [Pillar::Discrimination, Pillar::AntiSaturation, Pillar::Impact];

    pub fn label(self) -> &'static str {
        match self {
            Pillar::Discrimination => "S_Disc",
            Pillar::AntiSaturation => "S_AS",
            Pillar::Impact => "S_Imp",
        }
    }
}

impl fmt::Display for Pillar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    #[default]
    Critic,
    Equal,
}

impl std::str::FromStr for WeightingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "critic" => Ok(Self::Critic),
            "equal" | "ew" => Ok(Self::Equal),
            other => Err(format!("unknown weighting mode `{other}` (expected critic|equal)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AggregationError {
    #[error("pillar {0} is constant across benchmarks; CRITIC weight undefined")]
    DeadPillar(Pillar),
    #[error("CRITIC needs at least 3 benchmarks, got {0}")]
    TooFewBenchmarks(usize),
    #[error("CRITIC needs at least 2 pillar columns, got {0}")]
    TooFewPillars(usize),
    #[error("pillar columns are perfectly correlated; no conflict information")]
    NoConflict,
    #[error(transparent)]
    Stats(#[from] StatsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PillarScores {
    pub s_disc: f64,
    pub s_as: f64,
    pub s_imp: f64,
}

impl PillarScores {
    pub fn get(&self, p: Pillar) -> f64 {
        match p {
            Pillar::Discrimination => self.s_disc,
            Pillar::AntiSaturation => self.s_as,
            Pillar::Impact => self.s_imp,
        }
    }
}

/// Benchmarks in a fixed order with their three pillar scores.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PillarTable {
    pub ids: Vec<String>,
    pub rows: Vec<PillarScores>,
}

impl PillarTable {
    pub fn from_map(map: &BTreeMap<String, PillarScores>) -> Self {
        Self {
            ids: map.keys().cloned().collect(),
            rows: map.values().copied().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn column(&self, p: Pillar) -> Vec<f64> {
        self.rows.iter().map(|r| r.get(p)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticWeights {
    pub pillars: Vec<Pillar>,
    pub sigma: Vec<f64>,
    pub corr: Vec<Vec<f64>>,
    pub conflict_r: Vec<f64>,
    pub info_c: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CriticWeights {
    pub fn weight(&self, p: Pillar) -> Option<f64> {
        self.pillars.iter().position(|&q| q == p).map(|i| self.weights[i])
    }

    /// Uniform weights over `pillars`, for the equal-weight baseline.
    pub fn equal(pillars: &[Pillar]) -> Vec<f64> {
        vec![1.0 / pillars.len() as f64; pillars.len()]
    }
}

/// CRITIC over an arbitrary subset of pillar columns.
pub fn critic_over(table: &PillarTable, pillars: &[Pillar]) -> Result<CriticWeights, AggregationError> {
    if pillars.len() < 2 {
        return Err(AggregationError::TooFewPillars(pillars.len()));
    }
    if table.len() < 3 {
        return Err(AggregationError::TooFewBenchmarks(table.len()));
    }
    let mut normed = Vec::with_capacity(pillars.len());
    for &p in pillars {
        let col = table.column(p);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi == lo {
            return Err(AggregationError::DeadPillar(p));
        }
        normed.push(stats::minmax_norm(&col)?);
    }
    let k = pillars.len();
    let sigma: Vec<f64> = normed
        .iter()
        .map(|c| stats::std_dev(c, StdMode::Sample))
        .collect::<Result<_, _>>()?;
    let mut corr = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in (i + 1)..k {
            let r = stats::pearson(&normed[i], &normed[j])?;
            corr[i][j] = r;
            corr[j][i] = r;
        }
    }
    let conflict_r: Vec<f64> = corr.iter().map(|row| row.iter().map(|r| 1.0 - r).sum()).collect();
    let info_c: Vec<f64> = sigma.iter().zip(&conflict_r).map(|(s, r)| s * r).collect();
    let total: f64 = info_c.iter().sum();
    if total <= 0.0 {
        return Err(AggregationError::NoConflict);
    }
    let weights = info_c.iter().map(|c| c / total).collect();
    Ok(CriticWeights {
        pillars: pillars.to_vec(),
        sigma,
        corr,
        conflict_r,
        info_c,
        weights,
    })
}

pub fn critic_weights(table: &PillarTable) -> Result<CriticWeights, AggregationError> {
    critic_over(table, &Pillar::ALL)
}

/// Weighted sum of the raw pillar values.
pub fn compose(table: &PillarTable, pillars: &[Pillar], weights: &[f64]) -> Vec<f64> {
    table
        .rows
        .iter()
        .map(|row| pillars.iter().zip(weights).map(|(&p, w)| w * row.get(p)).sum())
        .collect()
}

pub fn compose_bhi(table: &PillarTable, weights: [f64; 3]) -> Vec<f64> {
    compose(table, &Pillar::ALL, &weights)
}

pub fn equal_weight_bhi(table: &PillarTable) -> Vec<f64> {
    table
        .rows
        .iter()
        .map(|r| (r.s_disc + r.s_as + r.s_imp) / 3.0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    /// Benchmark ids, best first.
    pub order: Vec<String>,
    /// 1-based rank per benchmark.
    pub rank: BTreeMap<String, usize>,
    /// Benchmarks whose score equals another's; their order is lexicographic.
    pub tied: Vec<String>,
}

impl Ranking {
    /// Ranks as f64 in the order of `ids`, for rank correlation.
    pub fn ranks_of(&self, ids: &[String]) -> Vec<f64> {
        ids.iter().map(|id| self.rank[id] as f64).collect()
    }
}

/// Descending by score; equal scores fall back to benchmark id and are flagged.
pub fn rank_benchmarks(ids: &[String], scores: &[f64]) -> Ranking {
    let mut idx: Vec<usize> = (0..ids.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then_with(|| ids[a].cmp(&ids[b])));
    let mut tied = Vec::new();
    for w in idx.windows(2) {
        if scores[w[0]] == scores[w[1]] {
            for &i in w {
                if !tied.contains(&ids[i]) {
                    tied.push(ids[i].clone());
                }
            }
        }
    }
    tied.sort();
    Ranking {
        order: idx.iter().map(|&i| ids[i].clone()).collect(),
        rank: idx.iter().enumerate().map(|(r, &i)| (ids[i].clone(), r + 1)).collect(),
        tied,
    }
}
