//! Output documents: JSON reports, histogram tables and SVG panels.
//!
//! Every document carries a [`RunManifest`]. JSON reports hold it under the
//! `manifest` key; CSV files repeat it as a leading `#` comment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::uniformity::BotSeries;

/// Enough information to regenerate an output file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub subcommand: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub config: Value,
    pub root_seed: u64,
    pub rng: String,
    pub timestamp: String,
}

impl RunManifest {
    /// The manifest as a single `# manifest: {...}` comment line.
    pub fn comment_line(&self) -> String {
        format!(
            "# manifest: {}",
            serde_json::to_string(self).expect("manifest serializes")
        )
    }

    /// Recovers a manifest from a JSON report, a JSON-lines dataset or a CSV
    /// file carrying a manifest comment.
    pub fn extract(text: &str) -> Option<RunManifest> {
        if let Ok(v) = serde_json::from_str::<Value>(text) {
            return serde_json::from_value(v.get("manifest")?.clone()).ok();
        }
        text.lines()
            .find_map(|line| match line.strip_prefix("# manifest: ") {
                Some(body) => serde_json::from_str(body).ok(),
                None => {
                    let v: Value = serde_json::from_str(line).ok()?;
                    serde_json::from_value(v.get("manifest")?.clone()).ok()
                }
            })
    }
}

/// `{variant: {values?, d, p_value, histogram}}`.
pub fn series_json(series: &[BotSeries], emit_values: bool) -> Value {
    let mut map = Map::new();
    for s in series {
        let mut entry = Map::new();
        if emit_values {
            entry.insert("values".into(), json!(s.values));
        }
        entry.insert("d".into(), json!(s.d_stat));
        entry.insert("p_value".into(), json!(s.p_value.value()));
        entry.insert("histogram".into(), json!(s.histogram));
        map.insert(s.variant.name().into(), Value::Object(entry));
    }
    Value::Object(map)
}

/// The full report document `{manifest, config, series, ...extra}`.
pub fn report_json(
    manifest: &RunManifest,
    config: &impl Serialize,
    series: &[BotSeries],
    emit_values: bool,
    extra: Option<(&str, Value)>,
) -> Value {
    let mut doc = Map::new();
    doc.insert("manifest".into(), json!(manifest));
    doc.insert("config".into(), json!(config));
    doc.insert("series".into(), series_json(series, emit_values));
    if let Some((key, value)) = extra {
        doc.insert(key.into(), value);
    }
    Value::Object(doc)
}

/// Rows of `variant,bin_lower,bin_upper,count`, one per bin.
pub fn histogram_csv(manifest: &RunManifest, series: &[BotSeries]) -> String {
    let mut out = manifest.comment_line();
    out.push_str("\nvariant,bin_lower,bin_upper,count\n");
    for s in series {
        let bins = s.histogram.len();
        for (j, c) in s.histogram.iter().enumerate() {
            let lo = j as f64 / bins as f64;
            let hi = (j + 1) as f64 / bins as f64;
            writeln!(out, "{},{lo},{hi},{c}", s.variant).expect("writing to a String");
        }
    }
    out
}

/// Side-by-side density histograms with the uniform level as a dashed line.
pub fn histogram_svg(series: &[BotSeries]) -> String {
    const W: f64 = 240.0;
    const H: f64 = 180.0;
    const PAD: f64 = 24.0;
    let ymax = series
        .iter()
        .flat_map(|s| {
            let n = s.len().max(1) as f64;
            let bins = s.histogram.len() as f64;
            s.histogram.iter().map(move |&c| c as f64 * bins / n)
        })
        .fold(1.5_f64, f64::max)
        * 1.05;
    let width = W * series.len().max(1) as f64;
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{H}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    for (i, s) in series.iter().enumerate() {
        let x0 = i as f64 * W + PAD;
        let plot_w = W - 2.0 * PAD;
        let plot_h = H - 2.0 * PAD;
        let base = H - PAD;
        let bins = s.histogram.len();
        let n = s.len().max(1) as f64;
        let bar_w = plot_w / bins as f64;
        writeln!(
            svg,
            "  <text x=\"{:.1}\" y=\"{:.1}\">{} (D = {:.3})</text>",
            x0,
            PAD - 8.0,
            s.variant,
            s.d_stat
        )
        .unwrap();
        for (j, &c) in s.histogram.iter().enumerate() {
            let density = c as f64 * bins as f64 / n;
            let h = density / ymax * plot_h;
            writeln!(
                svg,
                "  <rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" \
                 fill=\"#8da0cb\" stroke=\"#3b4a6b\" stroke-width=\"0.5\"/>",
                x0 + j as f64 * bar_w,
                base - h,
                bar_w,
                h
            )
            .unwrap();
        }
        let y1 = base - plot_h / ymax;
        writeln!(
            svg,
            "  <line x1=\"{x0:.2}\" y1=\"{y1:.2}\" x2=\"{:.2}\" y2=\"{y1:.2}\" \
             stroke=\"#d95f02\" stroke-dasharray=\"4 3\"/>",
            x0 + plot_w
        )
        .unwrap();
        writeln!(
            svg,
            "  <line x1=\"{x0:.2}\" y1=\"{base:.2}\" x2=\"{:.2}\" y2=\"{base:.2}\" stroke=\"black\"/>",
            x0 + plot_w
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    svg
}
