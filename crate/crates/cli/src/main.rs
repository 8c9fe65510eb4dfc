mod args;

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use bhi_core::aggregation;
use bhi_core::components::{self, ComponentRow};
use bhi_core::impact::SnapshotFile;
use bhi_core::ingest::{self, AlignedInputs};
use bhi_core::pipeline::{run_pipeline, PipelineInputs, PipelineOptions};
use bhi_core::report::{self, OutputFormat, PlotKind, Provenance, TableRow};
use bhi_core::robustness::{self, StochasticConfig};
use bhi_core::saturation::SaturationParams;
use bhi_core::synthetic::{self, SyntheticSpec};
use bhi_fetch::FetchConfig;
use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use args::{AuditArgs, Cli, Command, DataArgs, FetchArgs, FixtureArgs, Mode, PlotArgs, Preset, RobustnessArgs, SweepArgs};

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_env("BHI_LOG"))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Audit(a) => audit(a),
        Command::Fetch(a) => fetch(a),
        Command::Robustness(a) => robustness_cmd(a),
        Command::SweepDelta(a) => sweep(a),
        Command::PlotData(a) => plot(a),
        Command::GenerateFixture(a) => generate_fixture(a),
    }
}

/// Keys a `--config` file may carry. Relative paths resolve against the
/// file's directory.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    iters: Option<usize>,
    etas: Option<Vec<f64>>,
    sigmas: Option<Vec<f64>>,
    deltas: Option<Vec<f64>>,
    scores: Option<PathBuf>,
    benchmarks: Option<PathBuf>,
    models: Option<PathBuf>,
    snapshot: Option<PathBuf>,
    as_of: Option<chrono::NaiveDate>,
    delta: Option<f64>,
    weighting: Option<String>,
    absent_models: Option<String>,
    saturation_window: Option<f64>,
    static_weight: Option<f64>,
}

fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("[cli_report] reading config {}", path.display()))?;
    let mut cfg: FileConfig =
        serde_json::from_str(&text).with_context(|| format!("[cli_report] parsing config {}", path.display()))?;
    let dir = path.parent().unwrap_or(Path::new(""));
    for p in [
        &mut cfg.scores,
        &mut cfg.benchmarks,
        &mut cfg.models,
        &mut cfg.snapshot,
    ]
    .into_iter()
    .flatten()
    {
        if p.is_relative() {
            *p = dir.join(&*p);
        }
    }
    Ok(cfg)
}

fn file_data(f: &FileConfig) -> Result<DataArgs> {
    Ok(DataArgs {
        scores: f.scores.clone(),
        benchmarks: f.benchmarks.clone(),
        models: f.models.clone(),
        snapshot: f.snapshot.clone(),
        as_of: f.as_of,
        delta: f.delta,
        weighting: f.weighting.as_deref().map(|s| s.parse()).transpose().map_err(|e: String| anyhow!("[cli_report] config: {e}"))?,
        absent_models: f
            .absent_models
            .as_deref()
            .map(|s| s.parse())
            .transpose()
            .map_err(|e: String| anyhow!("[cli_report] config: {e}"))?,
        saturation_window: f.saturation_window,
        static_weight: f.static_weight,
    })
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("[dataset_ingest] reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Parsed, aligned inputs plus everything needed for provenance.
struct Loaded {
    aligned: AlignedInputs,
    snapshot: SnapshotFile,
    opts: PipelineOptions,
    data: DataArgs,
    digests: BTreeMap<String, String>,
}

fn require<'a>(p: &'a Option<PathBuf>, flag: &str, module: &str) -> Result<&'a PathBuf> {
    p.as_ref()
        .ok_or_else(|| anyhow!("[{module}] missing input: pass --{flag} <path> (or set `{flag}` in --config)"))
}

fn load(data: DataArgs) -> Result<Loaded> {
    let scores = require(&data.scores, "scores", "dataset_ingest")?;
    let benchmarks = require(&data.benchmarks, "benchmarks", "dataset_ingest")?;
    let models = require(&data.models, "models", "dataset_ingest")?;
    let snapshot_path = require(&data.snapshot, "snapshot", "impact")?;

    let parsed = ingest::parse_inputs(scores, benchmarks, models).map_err(|e| anyhow!("[dataset_ingest] {e}"))?;
    for w in &parsed.warnings {
        eprintln!("warning: {w}");
    }
    let aligned = ingest::align(parsed).map_err(|e| anyhow!("[dataset_ingest] {e}"))?;
    let snap_text = fs::read_to_string(snapshot_path)
        .with_context(|| format!("[impact] reading snapshot {} (--snapshot)", snapshot_path.display()))?;
    let snapshot: SnapshotFile = serde_json::from_str(&snap_text)
        .with_context(|| format!("[impact] parsing snapshot {} (--snapshot)", snapshot_path.display()))?;

    let mut digests = BTreeMap::new();
    digests.insert("scores".into(), sha256_file(scores)?);
    digests.insert("benchmarks".into(), sha256_file(benchmarks)?);
    digests.insert("models".into(), sha256_file(models)?);
    digests.insert("snapshot".into(), sha256_file(snapshot_path)?);

    let defaults = PipelineOptions::default();
    let opts = PipelineOptions {
        delta_frac: data.delta.unwrap_or(defaults.delta_frac),
        as_of: data.as_of,
        absent_policy: data.absent_models.unwrap_or_default(),
        saturation: SaturationParams {
            window_days: data.saturation_window.unwrap_or(SaturationParams::STANDARD.window_days),
            static_weight: data.static_weight.unwrap_or(SaturationParams::STANDARD.static_weight),
        },
        weighting: data.weighting.unwrap_or_default(),
    };
    opts.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(Loaded {
        aligned,
        snapshot,
        opts,
        data,
        digests,
    })
}

impl Loaded {
    fn inputs(&self) -> PipelineInputs<'_> {
        PipelineInputs::new(&self.aligned, &self.snapshot)
    }

    fn provenance(&self, command: &str, extra: serde_json::Value, seed: Option<u64>) -> Provenance {
        let mut config = serde_json::json!({ "data": self.data, "options": self.opts });
        if let (Some(obj), serde_json::Value::Object(more)) = (config.as_object_mut(), extra) {
            obj.extend(more);
        }
        Provenance {
            tool: "bhi".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            inputs: self.digests.clone(),
            seed,
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("[cli_report] creating {}", dir.display()))?;
            }
            fs::write(p, text).with_context(|| format!("[cli_report] writing {}", p.display()))
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn audit(a: AuditArgs) -> Result<()> {
    if let Some(path) = &a.components {
        return audit_components(path, a.weights.as_deref(), a.output.format, a.output.out.as_deref());
    }
    let file = load_config(a.config.as_deref())?;
    let loaded = load(a.data.or(file_data(&file)?))?;
    let report = run_pipeline(loaded.inputs(), &loaded.opts).map_err(|e| anyhow!("{e}"))?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let prov = loaded.provenance("audit", serde_json::json!({}), None);
    let text = match a.output.format {
        OutputFormat::Json => report::to_json(&report, &prov),
        OutputFormat::Csv => report::to_csv(&report, &prov),
        OutputFormat::Markdown => report::to_markdown(&report, &prov),
    };
    if let Some(path) = &a.dump_calibration {
        emit(Some(path), &report::to_json(&serde_json::json!({ "profiles": report.profiles }), &prov))?;
    }
    emit(a.output.out.as_deref(), &text)
}

#[derive(Serialize)]
struct ComponentCheck<'a> {
    benchmark: &'a str,
    reported_rank: usize,
    rank: usize,
    reported_s_as: f64,
    recomputed_s_as: f64,
    reported_bhi: f64,
    bhi: f64,
}

#[derive(Serialize)]
struct ComponentReport<'a> {
    weights: [f64; 3],
    weights_source: &'a str,
    rows: Vec<ComponentCheck<'a>>,
}

fn audit_components(path: &Path, weights: Option<&[f64]>, format: OutputFormat, out: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("[aggregation] reading {}", path.display()))?;
    let rows: Vec<ComponentRow> =
        components::parse_components(&text, &path.display().to_string()).map_err(|e| anyhow!("[aggregation] {e}"))?;
    let table = components::component_table(&rows);
    let (w, source) = match weights {
        Some(w) => {
            if w.len() != 3 {
                bail!("[aggregation] --weights takes three values (S_Disc,S_AS,S_Imp), got {}", w.len());
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > 1e-3 || w.iter().any(|x| *x < 0.0) {
                bail!("[aggregation] --weights must be non-negative and sum to 1 (got {sum})");
            }
            ([w[0], w[1], w[2]], "fixed")
        }
        None => {
            let c = aggregation::critic_weights(&table).map_err(|e| anyhow!("[aggregation] {e}"))?;
            ([c.weights[0], c.weights[1], c.weights[2]], "critic")
        }
    };
    let bhi = aggregation::compose_bhi(&table, w);
    let ranking = aggregation::rank_benchmarks(&table.ids, &bhi);
    let prov = Provenance {
        tool: "bhi".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: "audit --components".into(),
        config: serde_json::json!({ "components": path, "weights": w, "weights_source": source }),
        inputs: [("components".to_string(), sha256_file(path)?)].into(),
        seed: None,
    };
    let text = match format {
        OutputFormat::Markdown => report::components_markdown(&TableRow::from_components(&rows, &bhi, &ranking.rank), w, &prov),
        OutputFormat::Json | OutputFormat::Csv => {
            let checks: Vec<ComponentCheck> = rows
                .iter()
                .zip(&bhi)
                .map(|(r, &b)| ComponentCheck {
                    benchmark: &r.benchmark,
                    reported_rank: r.rank,
                    rank: ranking.rank[&r.benchmark],
                    reported_s_as: r.s_as,
                    recomputed_s_as: r.recomputed_s_as(),
                    reported_bhi: r.bhi,
                    bhi: b,
                })
                .collect();
            if format == OutputFormat::Json {
                report::to_json(&ComponentReport { weights: w, weights_source: source, rows: checks }, &prov)
            } else {
                let mut s = String::from("benchmark,reported_rank,rank,reported_s_as,recomputed_s_as,reported_bhi,bhi\n");
                for c in checks {
                    s.push_str(&format!(
                        "\"{}\",{},{},{},{},{},{}\n",
                        c.benchmark.replace('"', "\"\""),
                        c.reported_rank,
                        c.rank,
                        c.reported_s_as,
                        c.recomputed_s_as,
                        c.reported_bhi,
                        c.bhi
                    ));
                }
                s
            }
        }
    };
    emit(out, &text)
}

fn fetch(a: FetchArgs) -> Result<()> {
    let text = fs::read_to_string(&a.benchmarks).with_context(|| format!("[impact] reading {}", a.benchmarks.display()))?;
    let registry = ingest::parse_benchmarks(&text, &a.benchmarks.display().to_string()).map_err(|e| anyhow!("[impact] {e}"))?;
    let fetched_at = a.fetched_at.unwrap_or_else(|| chrono::Utc::now().date_naive());
    let mut cfg = FetchConfig::new(fetched_at).with_env_tokens();
    cfg.timeout = Duration::from_secs(a.timeout);
    cfg.concurrency = a.concurrency;
    cfg.github_api = a.github_api;
    cfg.hf_api = a.hf_api;
    let outcome = bhi_fetch::fetch_community(&registry, cfg).map_err(|e| anyhow!("[impact] {e}"))?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    emit(Some(&a.out), &bhi_fetch::snapshot_json(&outcome.snapshot))
}

fn write_summary(summary: &robustness::RobustnessSummary, prov: &Provenance, format: OutputFormat, out: Option<&Path>) -> Result<()> {
    let text = match format {
        OutputFormat::Json => report::to_json(summary, prov),
        OutputFormat::Markdown => report::robustness_markdown(summary, prov),
        OutputFormat::Csv => bail!("[cli_report] robustness summaries support json or markdown"),
    };
    emit(out, &text)
}

fn robustness_cmd(a: RobustnessArgs) -> Result<()> {
    let file = load_config(a.config.as_deref())?;
    let data = a.data.or(file_data(&file)?);
    let cfg = StochasticConfig {
        iters: a.stochastic.iters.or(file.iters).unwrap_or(robustness::DEFAULT_ITERS),
        seed: a.stochastic.seed.or(file.seed).unwrap_or(42),
    };
    let etas = a.etas.or(file.etas).unwrap_or_else(|| robustness::DEFAULT_ETAS.to_vec());
    let sigmas = a.sigmas.or(file.sigmas).unwrap_or_else(|| robustness::DEFAULT_SIGMAS.to_vec());
    let deltas = a.deltas.or(file.deltas).unwrap_or_else(robustness::default_delta_sweep);
    let loaded = load(data)?;
    let (summary, extra, seed) = match a.mode {
        Mode::Dropout => (
            robustness::dropout_protocol(loaded.inputs(), &loaded.opts, &etas, cfg),
            serde_json::json!({ "mode": a.mode, "etas": etas, "iters": cfg.iters }),
            Some(cfg.seed),
        ),
        Mode::Noise => (
            robustness::noise_protocol(loaded.inputs(), &loaded.opts, &sigmas, cfg),
            serde_json::json!({ "mode": a.mode, "sigmas": sigmas, "iters": cfg.iters }),
            Some(cfg.seed),
        ),
        Mode::Loo => (robustness::loo_protocol(loaded.inputs(), &loaded.opts), serde_json::json!({ "mode": a.mode }), None),
        Mode::Delta => (
            robustness::delta_sweep(loaded.inputs(), &loaded.opts, &deltas),
            serde_json::json!({ "mode": a.mode, "deltas": deltas }),
            None,
        ),
    };
    let summary = summary.map_err(|e| anyhow!("{e}"))?;
    let prov = loaded.provenance("robustness", extra, seed);
    write_summary(&summary, &prov, a.output.format, a.output.out.as_deref())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let file = load_config(a.config.as_deref())?;
    let data = a.data.or(file_data(&file)?);
    let deltas = a.deltas.or(file.deltas).unwrap_or_else(robustness::default_delta_sweep);
    let loaded = load(data)?;
    let summary = robustness::delta_sweep(loaded.inputs(), &loaded.opts, &deltas).map_err(|e| anyhow!("{e}"))?;
    let prov = loaded.provenance("sweep-delta", serde_json::json!({ "deltas": deltas }), None);
    write_summary(&summary, &prov, a.output.format, a.output.out.as_deref())
}

fn plot(a: PlotArgs) -> Result<()> {
    let file = load_config(a.config.as_deref())?;
    let data = a.data.or(file_data(&file)?);
    let deltas = a.deltas.or(file.deltas).unwrap_or_else(robustness::default_delta_sweep);
    let loaded = load(data)?;
    let data = match a.kind {
        PlotKind::RankingBar | PlotKind::TrendLines => {
            let report = run_pipeline(loaded.inputs(), &loaded.opts).map_err(|e| anyhow!("{e}"))?;
            if a.kind == PlotKind::RankingBar {
                report::ranking_bar(&report, a.top)
            } else {
                report::trend_lines(&report)
            }
        }
        PlotKind::SensitivityCurve => {
            let s = robustness::delta_sweep(loaded.inputs(), &loaded.opts, &deltas).map_err(|e| anyhow!("{e}"))?;
            report::sensitivity_curve(&s)
        }
    };
    let prov = loaded.provenance("plot-data", serde_json::json!({ "kind": a.kind, "top": a.top }), None);
    emit(a.out.as_deref(), &report::to_json(&data, &prov))
}

fn generate_fixture(a: FixtureArgs) -> Result<()> {
    let ds = match a.preset {
        Preset::Robustness => synthetic::generate(&SyntheticSpec {
            seed: a.seed.unwrap_or(SyntheticSpec::ROBUSTNESS.seed),
            ..SyntheticSpec::ROBUSTNESS
        }),
        Preset::Performance => synthetic::generate(&SyntheticSpec {
            seed: a.seed.unwrap_or(SyntheticSpec::PERFORMANCE.seed),
            ..SyntheticSpec::PERFORMANCE
        }),
        Preset::Separated => synthetic::well_separated(a.seed.unwrap_or(3)),
    };
    ds.write_to(&a.out).with_context(|| format!("[cli_report] writing fixture to {}", a.out.display()))
}
