//! Preference charts. Higher magnitude means more preferred.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChartKind {
    Bar,
    Line,
    Histogram,
}

impl ChartKind {
    pub const ALL: [ChartKind; 3] = [ChartKind::Bar, ChartKind::Line, ChartKind::Histogram];

    pub fn as_str(self) -> &'static str {
        match self {
            ChartKind::Bar => "bar",
            ChartKind::Line => "line",
            ChartKind::Histogram => "histogram",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub label: String,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawChart", into = "RawChart")]
pub struct ChartSpec {
    kind: ChartKind,
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<SeriesEntry>,
}

#[derive(Serialize, Deserialize)]
struct RawChart {
    kind: ChartKind,
    title: String,
    x_label: String,
    y_label: String,
    series: Vec<SeriesEntry>,
}

impl TryFrom<RawChart> for ChartSpec {
    type Error = BenchError;
    fn try_from(r: RawChart) -> Result<Self, BenchError> {
        ChartSpec::new(r.kind, r.title, r.x_label, r.y_label, r.series)
    }
}

impl From<ChartSpec> for RawChart {
    fn from(c: ChartSpec) -> Self {
        RawChart { kind: c.kind, title: c.title, x_label: c.x_label, y_label: c.y_label, series: c.series }
    }
}

impl ChartSpec {
    pub fn new(
        kind: ChartKind,
        title: impl Into<String>,
        x_label: impl Into<String>,
        y_label: impl Into<String>,
        series: Vec<SeriesEntry>,
    ) -> Result<ChartSpec, BenchError> {
        if series.is_empty() {
            return Err(BenchError::Chart("chart has no series entries".into()));
        }
        for (i, e) in series.iter().enumerate() {
            if !e.magnitude.is_finite() || e.magnitude < 0.0 {
                return Err(BenchError::Chart(format!("bad magnitude {} for {}", e.magnitude, e.label)));
            }
            if series[..i].iter().any(|p| p.magnitude == e.magnitude) {
                return Err(BenchError::Chart(format!("magnitude {} is repeated", e.magnitude)));
            }
        }
        Ok(ChartSpec { kind, title: title.into(), x_label: x_label.into(), y_label: y_label.into(), series })
    }

    pub fn kind(&self) -> ChartKind {
        self.kind
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn series(&self) -> &[SeriesEntry] {
        &self.series
    }

    /// Rank of each entry in series order: the number of larger magnitudes.
    pub fn decode_ranks(&self) -> Vec<usize> {
        self.series
            .iter()
            .map(|e| self.series.iter().filter(|o| o.magnitude > e.magnitude).count())
            .collect()
    }

    /// Labels from most to least preferred.
    pub fn preference_order(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.series.len()).collect();
        idx.sort_by(|&a, &b| self.series[b].magnitude.total_cmp(&self.series[a].magnitude));
        idx.into_iter().map(|i| self.series[i].label.as_str()).collect()
    }

    /// Plain-text data table used when a model cannot take images.
    pub fn data_table(&self) -> String {
        let mut out = format!("{} chart \"{}\" ({} vs {}):\n", self.kind.as_str(), self.title, self.x_label, self.y_label);
        for e in &self.series {
            let _ = writeln!(out, "  {}: {:.1}", e.label, e.magnitude);
        }
        out
    }
}

/// Chart whose magnitudes induce exactly `ranks` (0 = most preferred).
/// Magnitudes are integers spaced by random gaps of 1..=4.
pub fn chart_from_ranks(
    kind: ChartKind,
    title: &str,
    labels: &[String],
    ranks: &[usize],
    rng: &mut impl Rng,
) -> Result<ChartSpec, BenchError> {
    let d = ranks.len();
    if labels.len() != d {
        return Err(BenchError::Chart("label and rank counts differ".into()));
    }
    // levels[k] is the magnitude for rank d-1-k.
    let mut levels = Vec::with_capacity(d);
    let mut level = rng.gen_range(1..=3) as f64;
    for _ in 0..d {
        levels.push(level);
        level += rng.gen_range(1..=4) as f64;
    }
    let series = labels
        .iter()
        .zip(ranks)
        .map(|(label, &r)| SeriesEntry { label: label.clone(), magnitude: levels[d - 1 - r] })
        .collect();
    let y = match kind {
        ChartKind::Histogram => "votes",
        _ => "preference score",
    };
    ChartSpec::new(kind, title, "option", y, series)
}

const WIDTH: f64 = 480.0;
const HEIGHT: f64 = 320.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Standalone SVG document with one `<g class="entry">` group per series entry.
pub fn render_chart(spec: &ChartSpec) -> String {
    let max = spec.series.iter().map(|e| e.magnitude).fold(0.0, f64::max).max(1.0);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let n = spec.series.len() as f64;
    let slot = plot_w / n;
    let base = TOP + plot_h;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" data-kind="{}">"#,
        spec.kind.as_str()
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text class="title" x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black"><line x1="{LEFT}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}"/><line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{base:.1}"/></g>"#,
        WIDTH - RIGHT
    );
    let _ = writeln!(
        s,
        r#"<text class="x-label" x="{:.1}" y="{:.1}" text-anchor="middle" font-size="12">{}</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 10.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text class="y-label" x="16" y="{:.1}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0,
        escape(&spec.y_label)
    );
    let points: Vec<(f64, f64)> = spec
        .series
        .iter()
        .enumerate()
        .map(|(i, e)| (LEFT + slot * (i as f64 + 0.5), base - plot_h * e.magnitude / max))
        .collect();
    if spec.kind == ChartKind::Line {
        let path: Vec<String> = points.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
        let _ = writeln!(s, r#"<polyline class="trend" fill="none" stroke="steelblue" points="{}"/>"#, path.join(" "));
    }
    for (e, &(x, y)) in spec.series.iter().zip(&points) {
        let _ = writeln!(
            s,
            r#"<g class="entry" data-label="{}" data-value="{:.1}">"#,
            escape(&e.label),
            e.magnitude
        );
        match spec.kind {
            ChartKind::Bar | ChartKind::Histogram => {
                let w = if spec.kind == ChartKind::Bar { slot * 0.6 } else { slot };
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{y:.1}" width="{w:.1}" height="{:.1}" fill="steelblue" stroke="black"/>"#,
                    x - w / 2.0,
                    base - y
                );
            }
            ChartKind::Line => {
                let _ = writeln!(s, r#"<circle cx="{x:.1}" cy="{y:.1}" r="4" fill="steelblue"/>"#);
            }
        }
        let _ = writeln!(
            s,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-size="11">{}</text>"#,
            base + 16.0,
            escape(&e.label)
        );
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::{stream, Purpose};

    fn entries(pairs: &[(&str, f64)]) -> Vec<SeriesEntry> {
        pairs.iter().map(|&(l, m)| SeriesEntry { label: l.into(), magnitude: m }).collect()
    }

    #[test]
    fn bar_chart_decodes_by_magnitude() {
        let spec = ChartSpec::new(
            ChartKind::Bar,
            "t",
            "x",
            "y",
            entries(&[("R", 7.0), ("G", 3.0), ("B", 9.0), ("Y", 1.0)]),
        )
        .unwrap();
        assert_eq!(spec.preference_order(), vec!["B", "R", "G", "Y"]);
        assert_eq!(spec.decode_ranks(), vec![1, 2, 0, 3]);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(ChartSpec::new(ChartKind::Bar, "t", "x", "y", vec![]).is_err());
        assert!(ChartSpec::new(ChartKind::Bar, "t", "x", "y", entries(&[("a", 2.0), ("b", 2.0)])).is_err());
    }

    #[test]
    fn generated_charts_decode_to_ranks() {
        let labels: Vec<String> = ["Red", "Green", "Blue", "Yellow", "Pink"].iter().map(|s| s.to_string()).collect();
        let ranks = vec![3, 0, 4, 1, 2];
        for kind in ChartKind::ALL {
            for seed in 0..50 {
                let mut rng = stream(seed, Purpose::Chart, 0, 0);
                let spec = chart_from_ranks(kind, "prefs", &labels, &ranks, &mut rng).unwrap();
                assert_eq!(spec.decode_ranks(), ranks);
            }
        }
    }

    #[test]
    fn render_is_well_formed_and_deterministic() {
        let spec = ChartSpec::new(
            ChartKind::Line,
            "A & B <prefs>",
            "x",
            "y",
            entries(&[("R", 7.0), ("G", 3.0), ("B", 9.0)]),
        )
        .unwrap();
        let svg = render_chart(&spec);
        assert_eq!(svg, render_chart(&spec));
        let doc = roxmltree::Document::parse(&svg).unwrap();
        let groups: Vec<_> = doc
            .descendants()
            .filter(|n| n.attribute("class") == Some("entry"))
            .collect();
        assert_eq!(groups.len(), 3);
        assert_eq!(groups[2].attribute("data-label"), Some("B"));
        assert_eq!(groups[2].attribute("data-value"), Some("9.0"));
    }

    #[test]
    fn serde_round_trip_validates() {
        let spec = ChartSpec::new(ChartKind::Histogram, "t", "x", "y", entries(&[("a", 1.0), ("b", 4.0)])).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ChartSpec>(&json).unwrap(), spec);
        let bad = json.replace("4.0", "1.0");
        assert!(serde_json::from_str::<ChartSpec>(&bad).is_err());
    }
}
