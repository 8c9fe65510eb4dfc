//! Seeded synthetic datasets for tests, benchmarks of the tool itself, and
//! the committed example fixture.
//!
//! Scores follow a logistic curve in (model ability - benchmark difficulty)
//! with per-benchmark slope, plus Gaussian jitter, rounded to two decimals so
//! files round-trip exactly.

use std::path::Path;

use chrono::{Duration, NaiveDate};

use crate::impact::{CommunitySnapshot, SnapshotFile};
use crate::ingest::{
    self, AlignedInputs, BenchmarkMeta, IngestError, MetricKind, ModelMeta, ParsedInputs, RawScoreRecord, Variant,
};
use crate::stats::SeededRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub benchmarks: usize,
    pub models: usize,
    /// Probability that a model is evaluated on a benchmark.
    pub density: f64,
    /// Extra benchmarks with only two models; the participation filter drops them.
    pub sparse_benchmarks: usize,
    /// Share of evaluated cells that also get an augmented-variant score.
    pub augmented_rate: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// 106 benchmarks x 91 models.
    pub const PERFORMANCE: SyntheticSpec = SyntheticSpec {
        benchmarks: 106,
        models: 91,
        density: 0.55,
        sparse_benchmarks: 0,
        augmented_rate: 0.05,
        seed: 20_240_601,
    };

    /// 12 benchmarks x 20 models, plus two that get filtered out.
    pub const ROBUSTNESS: SyntheticSpec = SyntheticSpec {
        benchmarks: 12,
        models: 20,
        density: 0.8,
        sparse_benchmarks: 2,
        augmented_rate: 0.1,
        seed: 7,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub benchmarks: Vec<BenchmarkMeta>,
    pub models: Vec<ModelMeta>,
    pub records: Vec<RawScoreRecord>,
    pub snapshot: SnapshotFile,
}

const EPOCH: (i32, u32, u32) = (2023, 1, 1);
pub const SNAPSHOT_DATE: (i32, u32, u32) = (2025, 12, 1);

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(EPOCH.0, EPOCH.1, EPOCH.2).expect("valid date")
}

fn snapshot_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(SNAPSHOT_DATE.0, SNAPSHOT_DATE.1, SNAPSHOT_DATE.2).expect("valid date")
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticDataset {
    let mut rng = SeededRng::new(spec.seed);
    let span_days = (snapshot_date() - epoch()).num_days();

    // models released across the span; later models tend to be stronger
    let mut models = Vec::with_capacity(spec.models);
    let mut ability = Vec::with_capacity(spec.models);
    for i in 0..spec.models {
        let frac = (i as f64 + rng.uniform()) / spec.models as f64;
        let release = epoch() + Duration::days((frac * (span_days as f64 - 120.0)) as i64);
        models.push(ModelMeta {
            id: format!("model-{i:03}"),
            vendor: format!("vendor-{}", i % 7),
            release_date: release,
        });
        ability.push(2.5 * frac + 0.8 * rng.standard_normal());
    }

    let total = spec.benchmarks + spec.sparse_benchmarks;
    let mut benchmarks = Vec::with_capacity(total);
    let mut records = Vec::new();
    let mut snapshots = Vec::with_capacity(total);
    for b in 0..total {
        let id = format!("bench-{b:03}");
        let release = epoch() + Duration::days((rng.uniform() * span_days as f64 * 0.6) as i64);
        let difficulty = -1.0 + 3.5 * rng.uniform();
        let slope = 0.6 + 1.8 * rng.uniform();
        let ceiling = 70.0 + 30.0 * rng.uniform();
        let has_gh = rng.uniform() < 0.85;
        let has_hf = rng.uniform() < 0.6;
        benchmarks.push(BenchmarkMeta {
            id: id.clone(),
            release_date: release,
            domain: ["math", "code", "knowledge", "agents", "reasoning"][b % 5].to_string(),
            family_id: None,
            github_repo: has_gh.then(|| format!("synthetic/{id}")),
            hf_dataset: has_hf.then(|| format!("synthetic/{id}")),
            cost_bound: None,
        });

        let participants: Vec<usize> = if b >= spec.benchmarks {
            rng.subset(spec.models, 2)
        } else {
            let mut p: Vec<usize> = (0..spec.models).filter(|_| rng.uniform() < spec.density).collect();
            if p.len() < 4 {
                p = rng.subset(spec.models, 4.min(spec.models));
            }
            p
        };
        for m in participants {
            let base = ceiling * logistic(slope * (ability[m] - difficulty)) + 2.0 * rng.standard_normal();
            let base = round2(base.clamp(0.0, 100.0));
            let lag = 5 + (rng.uniform() * 200.0) as i64;
            let eval_date = (models[m].release_date.max(release) + Duration::days(lag)).min(snapshot_date());
            records.push(RawScoreRecord {
                model_id: models[m].id.clone(),
                benchmark_id: id.clone(),
                score_raw: base,
                metric_kind: MetricKind::Reward,
                eval_date,
                variant: Variant::Base,
            });
            if rng.uniform() < spec.augmented_rate {
                records.push(RawScoreRecord {
                    score_raw: round2((base + 3.0 + 5.0 * rng.uniform()).min(100.0)),
                    variant: Variant::Augmented,
                    ..records.last().expect("just pushed").clone()
                });
            }
        }

        let heat = (8.0 * rng.uniform()).exp();
        let mut snap = CommunitySnapshot::empty(&id, snapshot_date());
        if has_gh {
            snap.gh_stars = Some(heat.round() as u64);
            snap.gh_forks = Some((heat * 0.15 * rng.uniform()).round() as u64);
        }
        if has_hf {
            snap.hf_likes = Some((heat * 0.05 * rng.uniform()).round() as u64);
            snap.hf_downloads = Some((heat * 20.0 * rng.uniform()).round() as u64);
            snap.hf_downloads_window = Some("last_30_days".into());
        }
        snapshots.push(snap);
    }

    SyntheticDataset {
        benchmarks,
        models,
        records,
        snapshot: SnapshotFile {
            fetched_at: snapshot_date(),
            snapshots,
        },
    }
}

/// Ten benchmarks whose within-benchmark score gaps are either zero or wider
/// than 5% of the range, except one pair per benchmark placed between 1% and
/// 4%, so EDR moves a little across the sweep and the ranking should not.
pub fn well_separated(seed: u64) -> SyntheticDataset {
    let mut rng = SeededRng::new(seed);
    let n_models = 16;
    let mut ds = generate(&SyntheticSpec {
        benchmarks: 10,
        models: n_models,
        density: 1.0,
        sparse_benchmarks: 0,
        augmented_rate: 0.0,
        seed,
    });
    let mut by_bench: std::collections::BTreeMap<String, Vec<usize>> = Default::default();
    for (i, r) in ds.records.iter().enumerate() {
        by_bench.entry(r.benchmark_id.clone()).or_default().push(i);
    }
    for (b, idx) in by_bench.values().enumerate() {
        let lo = 5.0 + 20.0 * rng.uniform();
        let hi = lo + 30.0 + 50.0 * rng.uniform();
        // tie structure differs strongly between benchmarks, so EDR spreads
        let levels = 3 + b;
        let step = (hi - lo) / (levels - 1) as f64;
        let near_gap = (0.01 + 0.03 * rng.uniform()) * (hi - lo);
        for (k, &i) in idx.iter().enumerate() {
            let level = k % levels;
            let mut s = lo + step * level as f64;
            if k == idx.len() - 1 {
                // one near-threshold pair against the lowest level
                s = lo + near_gap;
            }
            ds.records[i].score_raw = round2(s);
        }
    }
    ds
}

impl SyntheticDataset {
    pub fn scores_csv(&self) -> String {
        let mut out = ingest::SCORES_HEADER.join(",");
        out.push('\n');
        for r in &self.records {
            let kind = match r.metric_kind {
                MetricKind::Reward => "reward",
                MetricKind::Cost => "cost",
                MetricKind::OpenEnded => "open_ended",
            };
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.model_id, r.benchmark_id, r.score_raw, kind, r.eval_date, r.variant
            ));
        }
        out
    }

    pub fn benchmarks_json(&self) -> String {
        serde_json::to_string_pretty(&self.benchmarks).expect("serializable") + "\n"
    }

    pub fn models_json(&self) -> String {
        serde_json::to_string_pretty(&self.models).expect("serializable") + "\n"
    }

    pub fn snapshot_json(&self) -> String {
        serde_json::to_string_pretty(&self.snapshot).expect("serializable") + "\n"
    }

    /// Writes `scores.csv`, `benchmarks.json`, `models.json`, `snapshot.json`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("scores.csv"), self.scores_csv())?;
        std::fs::write(dir.join("benchmarks.json"), self.benchmarks_json())?;
        std::fs::write(dir.join("models.json"), self.models_json())?;
        std::fs::write(dir.join("snapshot.json"), self.snapshot_json())
    }

    /// The dataset pushed through the same alignment as file inputs.
    pub fn aligned(&self) -> Result<AlignedInputs, IngestError> {
        ingest::align(ParsedInputs {
            records: self.records.clone(),
            benchmarks: self.benchmarks.iter().map(|b| (b.id.clone(), b.clone())).collect(),
            models: self.models.iter().map(|m| (m.id.clone(), m.clone())).collect(),
            warnings: Vec::new(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(generate(&SyntheticSpec::ROBUSTNESS), generate(&SyntheticSpec::ROBUSTNESS));
        let other = SyntheticSpec { seed: 8, ..SyntheticSpec::ROBUSTNESS };
        assert_ne!(generate(&SyntheticSpec::ROBUSTNESS).records, generate(&other).records);
    }

    #[test]
    fn files_round_trip() {
        let ds = generate(&SyntheticSpec::ROBUSTNESS);
        let benchmarks = ingest::parse_benchmarks(&ds.benchmarks_json(), "b").unwrap();
        let models = ingest::parse_models(&ds.models_json(), "m").unwrap();
        let records = ingest::parse_scores(ds.scores_csv().as_bytes(), "s", &benchmarks, &models).unwrap();
        assert_eq!(records, ds.records);
        let snap: SnapshotFile = serde_json::from_str(&ds.snapshot_json()).unwrap();
        assert_eq!(snap, ds.snapshot);
    }

    #[test]
    fn sparse_benchmarks_are_filtered() {
        let aligned = generate(&SyntheticSpec::ROBUSTNESS).aligned().unwrap();
        let (m, dropped) = ingest::apply_participation_filter(&aligned.matrix).unwrap();
        assert_eq!(dropped, ["bench-012", "bench-013"]);
        assert_eq!(m.benchmark_count(), 12);
    }
}
