//! Report emission. Machine formats keep full precision; Markdown rounds to
//! four decimals in the familiar "S_Disc (RCV, EDR) | S_AS (S_Sta, S_Dyn) |
//! S_Imp (N_Usage, N_Comm) | BHI" layout.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::components::ComponentRow;
use crate::pipeline::HealthReport;
use crate::robustness::RobustnessSummary;
use crate::saturation::TrendDump;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Json,
    Csv,
    Markdown,
}

impl std::str::FromStr for OutputFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(format!("unknown format `{other}` (expected json|csv|markdown)")),
        }
    }
}

/// Where every emitted number came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: serde_json::Value,
    /// Input label -> sha256 of the file content.
    pub inputs: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

pub fn to_json<T: Serialize>(body: &T, prov: &Provenance) -> String {
    let mut s = serde_json::to_string_pretty(&Envelope { provenance: prov, body }).expect("report is serializable");
    s.push('\n');
    s
}

pub const CSV_COLUMNS: [&str; 22] = [
    "rank",
    "benchmark_id",
    "bhi",
    "bhi_ew",
    "tied",
    "n_models",
    "s_disc",
    "rcv",
    "edr",
    "rcv_norm",
    "edr_norm",
    "s_as",
    "s_sta",
    "s_dyn",
    "slope_k",
    "dyn_fallback",
    "s_imp",
    "n_usage",
    "s_comm",
    "i_raw",
    "n_eligible",
    "missing_platforms",
];

fn provenance_comments(prov: &Provenance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# tool: {} {}", prov.tool, prov.version);
    let _ = writeln!(out, "# command: {}", prov.command);
    let _ = writeln!(out, "# config: {}", serde_json::to_string(&prov.config).expect("json"));
    for (name, digest) in &prov.inputs {
        let _ = writeln!(out, "# input {name}: sha256:{digest}");
    }
    if let Some(seed) = prov.seed {
        let _ = writeln!(out, "# seed: {seed}");
    }
    out
}

/// One row per benchmark, best first. Provenance rides along as `#` lines.
pub fn to_csv(report: &HealthReport, prov: &Provenance) -> String {
    let mut out = provenance_comments(prov);
    let _ = writeln!(out, "# metric: {} weighting: {:?} as_of: {}", report.metric, report.weighting_mode, report.as_of);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).expect("in-memory write");
    for b in &report.benchmarks {
        let d = &b.discrimination;
        let s = &b.saturation;
        let i = &b.impact;
        w.write_record([
            b.rank.to_string(),
            b.benchmark_id.clone(),
            b.bhi.to_string(),
            b.bhi_ew.to_string(),
            b.tied.to_string(),
            b.n_models.to_string(),
            d.s_disc.to_string(),
            d.rcv.to_string(),
            d.edr.to_string(),
            d.rcv_norm.to_string(),
            d.edr_norm.to_string(),
            s.s_as.to_string(),
            s.s_sta.to_string(),
            s.s_dyn.to_string(),
            s.slope_k.map(|k| k.to_string()).unwrap_or_default(),
            s.dyn_fallback.to_string(),
            i.s_imp.to_string(),
            i.n_usage.to_string(),
            i.s_comm.to_string(),
            i.i_raw.to_string(),
            i.n_eligible.to_string(),
            i.missing_platforms.join(";"),
        ])
        .expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("flush")).expect("utf8"));
    out
}

/// A row of the human table; shared by full audits and component tables.
#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub rank: usize,
    pub name: String,
    pub s_disc: f64,
    pub rcv: f64,
    pub edr: f64,
    pub s_as: f64,
    pub s_sta: f64,
    pub s_dyn: f64,
    pub s_imp: f64,
    pub n_usage: f64,
    pub n_comm: f64,
    pub bhi: f64,
}

impl TableRow {
    pub fn from_report(report: &HealthReport) -> Vec<TableRow> {
        report
            .benchmarks
            .iter()
            .map(|b| TableRow {
                rank: b.rank,
                name: b.benchmark_id.clone(),
                s_disc: b.discrimination.s_disc,
                rcv: b.discrimination.rcv,
                edr: b.discrimination.edr,
                s_as: b.saturation.s_as,
                s_sta: b.saturation.s_sta,
                s_dyn: b.saturation.s_dyn,
                s_imp: b.impact.s_imp,
                n_usage: b.impact.n_usage,
                n_comm: b.impact.s_comm,
                bhi: b.bhi,
            })
            .collect()
    }

    pub fn from_components(rows: &[ComponentRow], bhi: &[f64], ranks: &BTreeMap<String, usize>) -> Vec<TableRow> {
        let mut out: Vec<TableRow> = rows
            .iter()
            .zip(bhi)
            .map(|(r, &bhi)| TableRow {
                rank: ranks[&r.benchmark],
                name: r.benchmark.clone(),
                s_disc: r.s_disc,
                rcv: r.rcv,
                edr: r.edr,
                s_as: r.s_as,
                s_sta: r.s_sta,
                s_dyn: r.s_dyn,
                s_imp: r.s_imp,
                n_usage: r.n_usage,
                n_comm: r.n_comm,
                bhi,
            })
            .collect();
        out.sort_by_key(|r| r.rank);
        out
    }
}

pub fn markdown_table(rows: &[TableRow]) -> String {
    let mut out = String::from(
        "| Rank | Benchmark | S_Disc (RCV, EDR) | S_AS (S_Sta, S_Dyn) | S_Imp (N_Usage, N_Comm) | BHI |\n\
         |---:|---|---|---|---|---:|\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "| {} | {} | {:.4} ({:.4}, {:.4}) | {:.4} ({:.4}, {:.4}) | {:.4} ({:.4}, {:.4}) | {:.4} |",
            r.rank, r.name, r.s_disc, r.rcv, r.edr, r.s_as, r.s_sta, r.s_dyn, r.s_imp, r.n_usage, r.n_comm, r.bhi
        );
    }
    out
}

fn provenance_markdown(prov: &Provenance) -> String {
    let mut out = String::from("## Provenance\n\n");
    let _ = writeln!(out, "- tool: {} {}", prov.tool, prov.version);
    let _ = writeln!(out, "- command: `{}`", prov.command);
    let _ = writeln!(out, "- config: `{}`", serde_json::to_string(&prov.config).expect("json"));
    for (name, digest) in &prov.inputs {
        let _ = writeln!(out, "- input {name}: sha256:{digest}");
    }
    if let Some(seed) = prov.seed {
        let _ = writeln!(out, "- seed: {seed}");
    }
    out
}

pub fn to_markdown(report: &HealthReport, prov: &Provenance) -> String {
    let mut out = format!("# {} audit ({})\n\n", report.metric, report.as_of);
    let w = &report.weights;
    let _ = writeln!(
        out,
        "Weighting: {:?}. Weights S_Disc {:.4}, S_AS {:.4}, S_Imp {:.4}.\n",
        report.weighting_mode, w[0], w[1], w[2]
    );
    out.push_str(&markdown_table(&TableRow::from_report(report)));
    if !report.dropped_benchmarks.is_empty() {
        let _ = writeln!(out, "\nDropped by participation filter: {}", report.dropped_benchmarks.join(", "));
    }
    if !report.warnings.is_empty() {
        out.push_str("\n## Warnings\n\n");
        for wmsg in &report.warnings {
            let _ = writeln!(out, "- {wmsg}");
        }
    }
    out.push('\n');
    out.push_str(&provenance_markdown(prov));
    out
}

pub fn components_markdown(rows: &[TableRow], weights: [f64; 3], prov: &Provenance) -> String {
    let mut out = String::from("# Component-level composition\n\n");
    let _ = writeln!(
        out,
        "Weights S_Disc {:.4}, S_AS {:.4}, S_Imp {:.4}.\n",
        weights[0], weights[1], weights[2]
    );
    out.push_str(&markdown_table(rows));
    out.push('\n');
    out.push_str(&provenance_markdown(prov));
    out
}

pub fn robustness_markdown(summary: &RobustnessSummary, prov: &Provenance) -> String {
    let mut out = format!("# Robustness: {:?}\n\n", summary.protocol);
    if !summary.settings.is_empty() {
        out.push_str("| Value | CRITIC rho | CRITIC tau | EW rho | EW tau | Completed | Failed |\n|---:|---|---|---|---|---:|---:|\n");
        for s in &summary.settings {
            let cell = |c: &Option<crate::robustness::CorrStats>, rho: bool| match c {
                Some(c) if rho => format!("{:.4} ± {:.4}", c.spearman_mean, c.spearman_std),
                Some(c) => format!("{:.4} ± {:.4}", c.kendall_mean, c.kendall_std),
                None => "n/a".into(),
            };
            let _ = writeln!(
                out,
                "| {:.2} | {} | {} | {} | {} | {} | {} |",
                s.value,
                cell(&s.critic, true),
                cell(&s.critic, false),
                cell(&s.equal, true),
                cell(&s.equal, false),
                s.completed,
                s.failed
            );
        }
    }
    if !summary.scenarios.is_empty() {
        out.push_str("| Dropped | rho | tau | Max rank shift | EW rho | EW max shift |\n|---|---|---|---:|---|---:|\n");
        for s in &summary.scenarios {
            let _ = writeln!(
                out,
                "| {} | {:.4} | {:.4} | {} | {:.4} | {} |",
                s.dropped, s.spearman, s.kendall, s.max_rank_shift, s.spearman_ew, s.max_rank_shift_ew
            );
        }
    }
    if !summary.sweep.is_empty() {
        out.push_str("| delta | rho | tau | EW rho | w_Disc |\n|---:|---|---|---|---|\n");
        for p in &summary.sweep {
            let _ = writeln!(
                out,
                "| {:.1}% | {:.4} | {:.4} | {:.4} | {:.4} |",
                p.delta_frac * 100.0,
                p.spearman,
                p.kendall,
                p.spearman_ew,
                p.w_disc
            );
        }
    }
    out.push('\n');
    out.push_str(&provenance_markdown(prov));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    RankingBar,
    TrendLines,
    SensitivityCurve,
}

impl std::str::FromStr for PlotKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ranking_bar" => Ok(Self::RankingBar),
            "trend_lines" => Ok(Self::TrendLines),
            "sensitivity_curve" => Ok(Self::SensitivityCurve),
            other => Err(format!(
                "unknown plot kind `{other}` (expected ranking_bar|trend_lines|sensitivity_curve)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarPoint {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendPoint {
    pub date: NaiveDate,
    pub score: f64,
    pub fitted: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendLine {
    pub benchmark_id: String,
    pub slope_k: Option<f64>,
    pub intercept_d: Option<f64>,
    pub origin: NaiveDate,
    pub points: Vec<TrendPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint {
    pub delta_frac: f64,
    pub spearman: f64,
    pub w_disc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "series", rename_all = "snake_case")]
pub enum PlotData {
    RankingBar(Vec<BarPoint>),
    TrendLines(Vec<TrendLine>),
    SensitivityCurve(Vec<SensitivityPoint>),
}

/// Top `k` benchmarks (all when `None`), descending by ranking score.
pub fn ranking_bar(report: &HealthReport, k: Option<usize>) -> PlotData {
    let n = k.unwrap_or(report.benchmarks.len());
    PlotData::RankingBar(
        report
            .benchmarks
            .iter()
            .take(n)
            .map(|b| BarPoint {
                label: b.benchmark_id.clone(),
                value: b.bhi,
            })
            .collect(),
    )
}

pub fn trend_line(benchmark_id: &str, dump: &TrendDump) -> TrendLine {
    TrendLine {
        benchmark_id: benchmark_id.to_string(),
        slope_k: dump.fit.map(|f| f.slope_k),
        intercept_d: dump.fit.map(|f| f.intercept_d),
        origin: dump.origin,
        points: dump
            .points
            .iter()
            .map(|&(date, score)| TrendPoint {
                date,
                score,
                fitted: dump.fit.map(|f| f.predict((date - dump.origin).num_days() as f64)),
            })
            .collect(),
    }
}

pub fn trend_lines(report: &HealthReport) -> PlotData {
    PlotData::TrendLines(report.trends.iter().map(|(b, d)| trend_line(b, d)).collect())
}

pub fn sensitivity_curve(sweep: &RobustnessSummary) -> PlotData {
    PlotData::SensitivityCurve(
        sweep
            .sweep
            .iter()
            .map(|p| SensitivityPoint {
                delta_frac: p.delta_frac,
                spearman: p.spearman,
                w_disc: p.w_disc,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::TrendFit;

    fn prov() -> Provenance {
        Provenance {
            tool: "bhi".into(),
            version: "0.0.0".into(),
            command: "audit".into(),
            config: serde_json::json!({"delta": 0.02}),
            inputs: [("scores".to_string(), "ab".repeat(32))].into(),
            seed: None,
        }
    }

    #[test]
    fn markdown_row_layout() {
        let row = TableRow {
            rank: 1,
            name: "HLE".into(),
            s_disc: 0.6469,
            rcv: 0.2598,
            edr: 0.9001,
            s_as: 0.7107,
            s_sta: 0.7097,
            s_dyn: 0.7150,
            s_imp: 0.6435,
            n_usage: 0.6112,
            n_comm: 0.7155,
            bhi: 0.66861,
        };
        let md = markdown_table(&[row]);
        assert!(md.contains("| 1 | HLE | 0.6469 (0.2598, 0.9001) | 0.7107 (0.7097, 0.7150) | 0.6435 (0.6112, 0.7155) | 0.6686 |"));
        assert!(components_markdown(&[], [0.3, 0.4, 0.3], &prov()).contains("sha256:abab"));
    }

    #[test]
    fn trend_points_carry_refit_values() {
        let origin = NaiveDate::from_ymd_opt(2025, 1, 1).unwrap();
        let dump = TrendDump {
            origin,
            fit: Some(TrendFit { slope_k: 0.01, intercept_d: 0.2 }),
            points: vec![(origin, 0.21), (origin + chrono::Duration::days(10), 0.29)],
        };
        let line = trend_line("b", &dump);
        assert_eq!(line.points[0].fitted, Some(0.2));
        assert!((line.points[1].fitted.unwrap() - 0.3).abs() < 1e-12);
        let flat = TrendDump { fit: None, ..dump };
        assert_eq!(trend_line("b", &flat).points[1].fitted, None);
    }

    #[test]
    fn format_parsing() {
        assert_eq!("md".parse::<OutputFormat>(), Ok(OutputFormat::Markdown));
        assert!("xml".parse::<OutputFormat>().is_err());
        assert!("pie".parse::<PlotKind>().is_err());
    }
}
