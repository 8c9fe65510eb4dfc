//! Stress protocols: model dropout, score noise, leave-one-pillar-out, the
//! delta sweep, and the pillar orthogonality check.
//!
//! Stochastic protocols run every (setting, iteration) task with its own
//! seed derived from the run seed, so results do not depend on scheduling.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aggregation::{self, AggregationError, Pillar, PillarTable, WeightingMode};
use crate::discrimination::{DEFAULT_DELTA_FRAC, DEFAULT_DELTA_SWEEP};
use crate::pipeline::{run_pipeline, HealthReport, PipelineError, PipelineInputs, PipelineOptions};
use crate::stats::{self, SeededRng, StatsError, StdMode};

pub const ORTHOGONALITY_THRESHOLD: f64 = 0.30;
pub const DEFAULT_ITERS: usize = 100;
pub const DEFAULT_ETAS: [f64; 6] = [0.05, 0.10, 0.15, 0.20, 0.40, 0.60];
pub const DEFAULT_SIGMAS: [f64; 5] = [0.01, 0.05, 0.10, 0.15, 0.20];
/// Fewer surviving benchmarks than this fails the iteration.
pub const MIN_SURVIVING: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orthogonality {
    pub pillars: Vec<Pillar>,
    pub corr: Vec<Vec<f64>>,
    pub threshold: f64,
    /// Pairs with |r| at or above the threshold.
    pub flagged: Vec<(Pillar, Pillar, f64)>,
}

pub fn orthogonality_check(table: &PillarTable) -> Result<Orthogonality, StatsError> {
    let cols: Vec<Vec<f64>> = Pillar::ALL.iter().map(|&p| table.column(p)).collect();
    let mut corr = vec![vec![1.0; 3]; 3];
    let mut flagged = Vec::new();
    for i in 0..3 {
        for j in (i + 1)..3 {
            let r = stats::pearson(&cols[i], &cols[j])?;
            corr[i][j] = r;
            corr[j][i] = r;
            if r.abs() >= ORTHOGONALITY_THRESHOLD {
                flagged.push((Pillar::ALL[i], Pillar::ALL[j], r));
            }
        }
    }
    Ok(Orthogonality {
        pillars: Pillar::ALL.to_vec(),
        corr,
        threshold: ORTHOGONALITY_THRESHOLD,
        flagged,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Dropout,
    Noise,
    Loo,
    DeltaSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrStats {
    pub spearman_mean: f64,
    pub spearman_std: f64,
    pub kendall_mean: f64,
    pub kendall_std: f64,
}

impl CorrStats {
    fn from_samples(rho: &[f64], tau: &[f64]) -> Option<Self> {
        if rho.is_empty() {
            return None;
        }
        let mean = |v: &[f64]| stats::mean(v).expect("non-empty");
        let sd = |v: &[f64]| stats::std_dev(v, StdMode::Population).expect("non-empty");
        Some(Self {
            spearman_mean: mean(rho),
            spearman_std: sd(rho),
            kendall_mean: mean(tau),
            kendall_std: sd(tau),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingSummary {
    /// eta for dropout, sigma for noise.
    pub value: f64,
    pub critic: Option<CorrStats>,
    pub equal: Option<CorrStats>,
    pub completed: usize,
    pub failed: usize,
    /// Failure reason -> count.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub failures: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_clamp_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models_removed: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LooScenario {
    pub dropped: Pillar,
    pub weights: Vec<(Pillar, f64)>,
    pub spearman: f64,
    pub kendall: f64,
    pub max_rank_shift: usize,
    pub spearman_ew: f64,
    pub max_rank_shift_ew: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaPoint {
    pub delta_frac: f64,
    pub spearman: f64,
    pub kendall: f64,
    pub spearman_ew: f64,
    pub w_disc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessSummary {
    pub protocol: Protocol,
    pub iterations: usize,
    pub seed: u64,
    pub weighting_mode: WeightingMode,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub settings: Vec<SettingSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scenarios: Vec<LooScenario>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<DeltaPoint>,
}

/// Per-mode correlation of an iteration against the baseline, restricted to
/// the benchmarks both reports share.
fn correlate(baseline: &HealthReport, run: &HealthReport) -> Result<[(f64, f64); 2], StatsError> {
    let mut out = [(0.0, 0.0); 2];
    for (slot, mode) in [WeightingMode::Critic, WeightingMode::Equal].into_iter().enumerate() {
        let score = |r: &HealthReport, id: &str| {
            let b = r.get(id).expect("id taken from the report");
            match mode {
                WeightingMode::Critic => b.bhi_critic(&r.critic),
                WeightingMode::Equal => b.bhi_ew,
            }
        };
        let shared: Vec<&str> = run
            .benchmarks
            .iter()
            .map(|b| b.benchmark_id.as_str())
            .filter(|id| baseline.get(id).is_some())
            .collect();
        let x: Vec<f64> = shared.iter().map(|id| score(baseline, id)).collect();
        let y: Vec<f64> = shared.iter().map(|id| score(run, id)).collect();
        out[slot] = (stats::spearman(&x, &y)?, stats::kendall(&x, &y)?);
    }
    Ok(out)
}

enum Outcome {
    Done { corr: [(f64, f64); 2], clamp_rate: Option<f64> },
    Failed(String),
}

fn classify(err: &PipelineError) -> String {
    let text = err.to_string();
    // keep the module tag and the error kind, drop ids so failures aggregate
    match text.find(']') {
        Some(end) => text[..=end].to_string() + &err_kind(err),
        None => text,
    }
}

fn err_kind(err: &PipelineError) -> String {
    let dbg = format!("{err:?}");
    let inner = dbg.split_once('(').map(|(_, rest)| rest).unwrap_or(&dbg);
    let kind: String = inner.chars().take_while(|c| c.is_alphanumeric()).collect();
    format!(" {kind}")
}

fn finish(baseline: &HealthReport, result: Result<HealthReport, PipelineError>, clamp_rate: Option<f64>) -> Outcome {
    match result {
        Ok(run) if run.benchmarks.len() < MIN_SURVIVING => Outcome::Failed("fewer than 3 surviving benchmarks".into()),
        Ok(run) => match correlate(baseline, &run) {
            Ok(corr) => Outcome::Done { corr, clamp_rate },
            Err(e) => Outcome::Failed(format!("[robustness] {e}")),
        },
        Err(e) => Outcome::Failed(classify(&e)),
    }
}

fn summarize(value: f64, outcomes: &[Outcome]) -> SettingSummary {
    let mut rho = [Vec::new(), Vec::new()];
    let mut tau = [Vec::new(), Vec::new()];
    let mut clamps = Vec::new();
    let mut failures = BTreeMap::new();
    for o in outcomes {
        match o {
            Outcome::Done { corr, clamp_rate } => {
                for k in 0..2 {
                    rho[k].push(corr[k].0);
                    tau[k].push(corr[k].1);
                }
                clamps.extend(clamp_rate);
            }
            Outcome::Failed(reason) => *failures.entry(reason.clone()).or_insert(0) += 1,
        }
    }
    SettingSummary {
        value,
        critic: CorrStats::from_samples(&rho[0], &tau[0]),
        equal: CorrStats::from_samples(&rho[1], &tau[1]),
        completed: rho[0].len(),
        failed: outcomes.len() - rho[0].len(),
        failures,
        mean_clamp_rate: stats::mean(&clamps).ok(),
        models_removed: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StochasticConfig {
    pub iters: usize,
    pub seed: u64,
}

impl Default for StochasticConfig {
    fn default() -> Self {
        Self {
            iters: DEFAULT_ITERS,
            seed: 42,
        }
    }
}

/// `ceil(eta * n)`, tolerant of representation error in `eta * n`.
pub fn models_to_drop(eta: f64, n: usize) -> usize {
    let raw = eta * n as f64;
    let nearest = raw.round();
    let k = if (raw - nearest).abs() < 1e-9 { nearest } else { raw.ceil() };
    (k.max(0.0) as usize).min(n)
}

fn run_tasks<F>(n_settings: usize, cfg: StochasticConfig, task: F) -> Vec<Vec<Outcome>>
where
    F: Fn(usize, &mut SeededRng) -> Outcome + Sync,
{
    let flat: Vec<Outcome> = (0..n_settings * cfg.iters)
        .into_par_iter()
        .map(|t| {
            let mut rng = SeededRng::new(stats::derive_seed(cfg.seed, t as u64));
            task(t / cfg.iters, &mut rng)
        })
        .collect();
    let mut grouped: Vec<Vec<Outcome>> = (0..n_settings).map(|_| Vec::with_capacity(cfg.iters)).collect();
    for (t, o) in flat.into_iter().enumerate() {
        grouped[t / cfg.iters.max(1)].push(o);
    }
    grouped
}

pub fn dropout_protocol(
    inputs: PipelineInputs<'_>,
    opts: &PipelineOptions,
    etas: &[f64],
    cfg: StochasticConfig,
) -> Result<RobustnessSummary, PipelineError> {
    let baseline = run_pipeline(inputs, opts)?;
    let models: Vec<String> = inputs.matrix.model_ids().into_iter().map(String::from).collect();
    let drops: Vec<usize> = etas.iter().map(|&e| models_to_drop(e, models.len())).collect();
    let grouped = run_tasks(etas.len(), cfg, |setting, rng| {
        let k = drops[setting];
        if k == 0 {
            return finish(&baseline, Ok(baseline.clone()), None);
        }
        let gone: BTreeSet<String> = rng.subset(models.len(), k).into_iter().map(|i| models[i].clone()).collect();
        let matrix = inputs.matrix.without_models(&gone);
        let run = run_pipeline(PipelineInputs { matrix: &matrix, ..inputs }, opts);
        finish(&baseline, run, None)
    });
    let settings = grouped
        .iter()
        .zip(etas)
        .zip(&drops)
        .map(|((o, &eta), &k)| SettingSummary {
            models_removed: Some(k),
            ..summarize(eta, o)
        })
        .collect();
    Ok(RobustnessSummary {
        protocol: Protocol::Dropout,
        iterations: cfg.iters,
        seed: cfg.seed,
        weighting_mode: opts.weighting,
        settings,
        scenarios: vec![],
        sweep: vec![],
    })
}

pub fn noise_protocol(
    inputs: PipelineInputs<'_>,
    opts: &PipelineOptions,
    sigmas: &[f64],
    cfg: StochasticConfig,
) -> Result<RobustnessSummary, PipelineError> {
    let baseline = run_pipeline(inputs, opts)?;
    let grouped = run_tasks(sigmas.len(), cfg, |setting, rng| {
        let sigma = sigmas[setting];
        if sigma == 0.0 {
            return finish(&baseline, Ok(baseline.clone()), Some(0.0));
        }
        let (mut total, mut clamped) = (0usize, 0usize);
        // perturb on the unit scale: s/100 + sigma*z, clamped to [0, 1]
        let matrix = inputs.matrix.map_scores(|s| {
            let v = s / 100.0 + sigma * rng.standard_normal();
            total += 1;
            if !(0.0..=1.0).contains(&v) {
                clamped += 1;
            }
            v.clamp(0.0, 1.0) * 100.0
        });
        let rate = clamped as f64 / total.max(1) as f64;
        let run = run_pipeline(PipelineInputs { matrix: &matrix, ..inputs }, opts);
        finish(&baseline, run, Some(rate))
    });
    let settings = grouped.iter().zip(sigmas).map(|(o, &s)| summarize(s, o)).collect();
    Ok(RobustnessSummary {
        protocol: Protocol::Noise,
        iterations: cfg.iters,
        seed: cfg.seed,
        weighting_mode: opts.weighting,
        settings,
        scenarios: vec![],
        sweep: vec![],
    })
}

fn max_shift(a: &aggregation::Ranking, b: &aggregation::Ranking) -> usize {
    a.rank.iter().map(|(id, &r)| r.abs_diff(b.rank[id])).max().unwrap_or(0)
}

/// Leave-one-pillar-out on an already computed pillar table.
pub fn loo_ablation(table: &PillarTable) -> Result<Vec<LooScenario>, PipelineError> {
    let full = aggregation::critic_weights(table)?;
    let full_bhi = aggregation::compose(table, &full.pillars, &full.weights);
    let full_rank = aggregation::rank_benchmarks(&table.ids, &full_bhi);
    let full_ew = aggregation::equal_weight_bhi(table);
    let full_ew_rank = aggregation::rank_benchmarks(&table.ids, &full_ew);
    let mut out = Vec::with_capacity(3);
    for dropped in Pillar::ALL {
        let keep: Vec<Pillar> = Pillar::ALL.into_iter().filter(|&p| p != dropped).collect();
        // perfectly correlated survivors carry no conflict; any weighting ranks
        // them identically, so fall back to equal weights and say so
        let (weights, note) = match aggregation::critic_over(table, &keep) {
            Ok(w) => (w.weights, None),
            Err(AggregationError::NoConflict) => (vec![0.5, 0.5], Some("no conflict between remaining pillars; equal weights".to_string())),
            Err(e) => return Err(e.into()),
        };
        let bhi = aggregation::compose(table, &keep, &weights);
        let rank = aggregation::rank_benchmarks(&table.ids, &bhi);
        let ew = aggregation::compose(table, &keep, &[0.5, 0.5]);
        let ew_rank = aggregation::rank_benchmarks(&table.ids, &ew);
        out.push(LooScenario {
            dropped,
            weights: keep.iter().copied().zip(weights.iter().copied()).collect(),
            note,
            spearman: stats::spearman(&full_bhi, &bhi)?,
            kendall: stats::kendall(&full_bhi, &bhi)?,
            max_rank_shift: max_shift(&full_rank, &rank),
            spearman_ew: stats::spearman(&full_ew, &ew)?,
            max_rank_shift_ew: max_shift(&full_ew_rank, &ew_rank),
        });
    }
    Ok(out)
}

pub fn loo_protocol(inputs: PipelineInputs<'_>, opts: &PipelineOptions) -> Result<RobustnessSummary, PipelineError> {
    let report = run_pipeline(inputs, opts)?;
    Ok(RobustnessSummary {
        protocol: Protocol::Loo,
        iterations: 1,
        seed: 0,
        weighting_mode: opts.weighting,
        settings: vec![],
        scenarios: loo_ablation(&report.pillar_table())?,
        sweep: vec![],
    })
}

/// Full recomputation for each delta, correlated with the default-delta run.
pub fn delta_sweep(
    inputs: PipelineInputs<'_>,
    opts: &PipelineOptions,
    deltas: &[f64],
) -> Result<RobustnessSummary, PipelineError> {
    let reference = run_pipeline(
        inputs,
        &PipelineOptions {
            delta_frac: DEFAULT_DELTA_FRAC,
            ..*opts
        },
    )?;
    let runs: Vec<Result<HealthReport, PipelineError>> = deltas
        .par_iter()
        .map(|&d| run_pipeline(inputs, &PipelineOptions { delta_frac: d, ..*opts }))
        .collect();
    let mut sweep = Vec::with_capacity(deltas.len());
    for (&d, run) in deltas.iter().zip(runs) {
        let run = run?;
        let [(rho, tau), (rho_ew, _)] = correlate(&reference, &run)?;
        sweep.push(DeltaPoint {
            delta_frac: d,
            spearman: rho,
            kendall: tau,
            spearman_ew: rho_ew,
            w_disc: run.critic.weight(Pillar::Discrimination).unwrap_or(0.0),
        });
    }
    Ok(RobustnessSummary {
        protocol: Protocol::DeltaSweep,
        iterations: 1,
        seed: 0,
        weighting_mode: opts.weighting,
        settings: vec![],
        scenarios: vec![],
        sweep,
    })
}

pub fn default_delta_sweep() -> Vec<f64> {
    DEFAULT_DELTA_SWEEP.to_vec()
}
