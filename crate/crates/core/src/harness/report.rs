//! Aggregation of run records into benchmark tables and cost-curve plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::Archetype;
use super::metrics::{metrics, MetricsSummary};
use super::record::{load_run_log, RunRecord};
use super::HarnessError;
use crate::benchgen::BenchmarkKind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(xs: &[f64]) -> MeanStd {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TableRow {
    pub benchmark: BenchmarkKind,
    pub archetype: Archetype,
    pub adapter: String,
    pub runs: usize,
    pub failed: usize,
    pub truncated: usize,
    pub cost: MeanStd,
    pub anytime: MeanStd,
    pub satisfaction: MeanStd,
    pub anytime_satisfaction: MeanStd,
    pub queries_per_agent: MeanStd,
    /// Mean anytime cost per iteration over the runs in this row.
    #[serde(skip)]
    pub curve: Vec<f64>,
}

/// One row per (archetype, adapter) pair, averaged over instances.
pub fn aggregate(records: &[RunRecord]) -> Result<Vec<TableRow>, HarnessError> {
    let Some(first) = records.first() else {
        return Err(HarnessError::Data("no run records to aggregate".into()));
    };
    let kind = first.config.benchmark;
    if let Some(r) = records.iter().find(|r| r.config.benchmark != kind) {
        return Err(HarnessError::Data(format!(
            "mixed benchmark kinds: {} and {}",
            kind.as_str(),
            r.config.benchmark.as_str()
        )));
    }
    let mut groups: BTreeMap<(Archetype, String), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.config.archetype, r.adapter.clone())).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|((archetype, adapter), runs)| {
            let ok: Vec<&RunRecord> = runs.iter().copied().filter(|r| !r.failed()).collect();
            let ms: Vec<MetricsSummary> = ok.iter().map(|r| metrics(r)).collect::<Result<_, _>>()?;
            let col = |f: fn(&MetricsSummary) -> f64| {
                if ms.is_empty() {
                    MeanStd { mean: f64::NAN, std: f64::NAN }
                } else {
                    MeanStd::of(&ms.iter().map(f).collect::<Vec<_>>())
                }
            };
            let len = ok.iter().map(|r| r.iterations.len()).min().unwrap_or(0);
            let curve = (0..len)
                .map(|t| ok.iter().map(|r| r.iterations[t].anytime as f64).sum::<f64>() / ok.len() as f64)
                .collect();
            Ok(TableRow {
                benchmark: kind,
                archetype,
                adapter,
                runs: runs.len(),
                failed: runs.len() - ok.len(),
                truncated: ok.iter().filter(|r| r.status == super::RunStatus::Truncated).count(),
                cost: col(|m| m.cost),
                anytime: col(|m| m.anytime),
                satisfaction: col(|m| 100.0 * m.satisfaction),
                anytime_satisfaction: col(|m| 100.0 * m.anytime_satisfaction),
                queries_per_agent: col(|m| m.queries_per_agent),
                curve,
            })
        })
        .collect()
}

fn cell(m: MeanStd) -> String {
    format!("{:.1} ± {:.1}", m.mean, m.std)
}

/// Aligned plain-text table.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Agent", "Adapter", "Runs", "Cost", "Anytime", "Sat. %", "Anytime Sat. %", "Queries/agent"];
    let body: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            let mut runs = r.runs.to_string();
            if r.failed > 0 {
                let _ = write!(runs, " ({} failed)", r.failed);
            }
            if r.truncated > 0 {
                let _ = write!(runs, " ({} truncated)", r.truncated);
            }
            [
                r.archetype.as_str().to_string(),
                r.adapter.clone(),
                runs,
                cell(r.cost),
                cell(r.anytime),
                cell(r.satisfaction),
                cell(r.anytime_satisfaction),
                format!("{:.1}", r.queries_per_agent.mean),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let fmt_row = |cells: Vec<&str>| -> String {
        let parts: Vec<String> = cells
            .iter()
            .zip(&widths)
            .map(|(c, &w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = String::new();
    if let Some(r) = rows.first() {
        let _ = writeln!(out, "Benchmark: {}", r.benchmark.as_str());
    }
    out.push_str(&fmt_row(header.to_vec()));
    out.push('\n');
    out.push_str(&widths.iter().map(|&w| "-".repeat(w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in &body {
        out.push_str(&fmt_row(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn render_csv(rows: &[TableRow]) -> String {
    let mut out = String::from(
        "benchmark,archetype,adapter,runs,failed,truncated,cost_mean,cost_std,anytime_mean,anytime_std,\
sat_mean,sat_std,anytime_sat_mean,anytime_sat_std,queries_per_agent\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},\"{}\",{},{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
            r.benchmark.as_str(),
            r.archetype.as_str(),
            r.adapter.replace('"', "\"\""),
            r.runs,
            r.failed,
            r.truncated,
            r.cost.mean,
            r.cost.std,
            r.anytime.mean,
            r.anytime.std,
            r.satisfaction.mean,
            r.satisfaction.std,
            r.anytime_satisfaction.mean,
            r.anytime_satisfaction.std,
            r.queries_per_agent.mean
        );
    }
    out
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Mean anytime-cost curve of every row as an SVG line chart.
pub fn render_curves_svg(rows: &[TableRow]) -> String {
    let (w, h, left, right, top, bottom) = (640.0, 400.0, 60.0, 180.0, 30.0, 40.0);
    let (pw, ph) = (w - left - right, h - top - bottom);
    let max_t = rows.iter().map(|r| r.curve.len().saturating_sub(1)).max().unwrap_or(1).max(1) as f64;
    let max_c = rows.iter().flat_map(|r| r.curve.iter().copied()).fold(1.0, f64::max);
    let x = |t: f64| left + pw * t / max_t;
    let y = |c: f64| top + ph * (1.0 - c / max_c);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let bench = rows.first().map_or("", |r| r.benchmark.as_str());
    let _ = writeln!(s, r#"<text x="{left}" y="18" font-size="14">Anytime cost ({bench})</text>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{left},{top} V{:.1} H{:.1}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for k in 0..=4 {
        let c = max_c * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end">{c:.0}</text>"#, left - 4.0, y(c) + 3.0);
        let t = max_t * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10" text-anchor="middle">{t:.0}</text>"#, x(t), top + ph + 14.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">iteration</text>"#, left + pw / 2.0, h - 6.0);
    for (i, r) in rows.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = r.curve.iter().enumerate().map(|(t, &c)| format!("{:.1},{:.1}", x(t as f64), y(c))).collect();
        let label = format!("{} {}", r.archetype.as_str(), r.adapter).replace('&', "&amp;").replace('<', "&lt;");
        let _ = writeln!(
            s,
            r#"<polyline class="curve" data-label="{label}" points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = top + 14.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, w - right + 10.0, w - right + 30.0);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" font-size="10">{label}</text>"#, w - right + 34.0, ly + 3.0);
    }
    s.push_str("</svg>\n");
    s
}

/// Every run log (`*.jsonl`) under `dir`, in file-name order.
pub fn load_records(dir: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let mut paths: Vec<PathBuf> = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| HarnessError::io(&d, e))? {
            let p = entry.map_err(|e| HarnessError::io(&d, e))?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "jsonl") {
                paths.push(p);
            }
        }
    }
    paths.sort();
    paths.iter().map(|p| load_run_log(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{run_experiment, RunConfig};

    #[test]
    fn identical_records_have_zero_spread() {
        let rec = run_experiment(&RunConfig { iterations: Some(20), ..RunConfig::default() }).unwrap();
        let rows = aggregate(&vec![rec.clone(); 10]).unwrap();
        assert_eq!(rows.len(), 1);
        let m = metrics(&rec).unwrap();
        assert_eq!(rows[0].cost, MeanStd { mean: m.cost, std: 0.0 });
        assert_eq!(rows[0].runs, 10);
    }

    #[test]
    fn one_row_per_pair_and_stable_rendering() {
        let mut recs = Vec::new();
        for arch in [Archetype::DsaOracle, Archetype::Random, Archetype::FmcDsa] {
            for seed in 0..3 {
                let c = RunConfig { archetype: arch, instance_seed: seed, iterations: Some(10), ..RunConfig::default() };
                recs.push(run_experiment(&c).unwrap());
            }
        }
        let rows = aggregate(&recs).unwrap();
        assert_eq!(rows.len(), 3);
        let text = render_table(&rows);
        assert_eq!(text.lines().count(), 3 + 3);
        assert_eq!(text, render_table(&aggregate(&recs).unwrap()));
        assert_eq!(render_csv(&rows).lines().count(), 4);
        let svg = render_curves_svg(&rows);
        let doc = roxmltree::Document::parse(&svg).unwrap();
        assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("curve")).count(), 3);
    }

    #[test]
    fn mixed_benchmarks_are_rejected() {
        let a = run_experiment(&RunConfig { iterations: Some(5), ..RunConfig::default() }).unwrap();
        let b = run_experiment(&RunConfig {
            benchmark: BenchmarkKind::Vldgc,
            iterations: Some(5),
            ..RunConfig::default()
        })
        .unwrap();
        assert!(aggregate(&[a, b]).is_err());
        assert!(aggregate(&[]).is_err());
    }
}
