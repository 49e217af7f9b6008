//! Charts and text summaries rendered from a campaign report directory.
//! SVG is written directly; every chart is a plain line or bar primitive
//! over the logged numbers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::engine::files;
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 300.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 7] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1",
];

/// `rounds.csv` parsed into named numeric columns (state kept as text).
#[derive(Clone, Debug, Default)]
pub struct RoundsTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RoundsTable {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<String> = lines
            .next()
            .ok_or_else(|| Error::Config("rounds.csv has no header".into()))?
            .split(',')
            .map(String::from)
            .collect();
        let rows: Vec<Vec<String>> = lines
            .map(|l| l.split(',').map(String::from).collect())
            .collect();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != header.len()) {
            return Err(Error::Config(format!(
                "rounds.csv row {} has {} columns, header has {}",
                i + 1,
                r.len(),
                header.len()
            )));
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn text(&self, name: &str) -> Vec<String> {
        match self.column(name) {
            Some(c) => self.rows.iter().map(|r| r[c].clone()).collect(),
            None => Vec::new(),
        }
    }

    pub fn numbers(&self, name: &str) -> Vec<f64> {
        self.text(name)
            .iter()
            .map(|v| v.parse().unwrap_or(f64::NAN))
            .collect()
    }

    pub fn num_objectives(&self) -> usize {
        self.header.iter().filter(|h| h.starts_with("avg_")).count()
    }
}

/// Percentage of rounds per combination mask, keyed by mask.
pub fn combination_shares(table: &RoundsTable) -> BTreeMap<u32, f64> {
    let masks = table.text("combo_mask");
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for m in &masks {
        if let Ok(m) = m.parse() {
            *counts.entry(m).or_default() += 1;
        }
    }
    let total = masks.len().max(1) as f64;
    counts
        .into_iter()
        .map(|(m, c)| (m, 100.0 * c as f64 / total))
        .collect()
}

/// Share of energy assignments made while exploring, per round.
pub fn exploration_shares(table: &RoundsTable) -> Vec<f64> {
    table
        .numbers("exploration_assignments")
        .iter()
        .zip(table.numbers("assignments"))
        .map(|(e, a)| if a > 0.0 { 100.0 * e / a } else { 0.0 })
        .collect()
}

fn svg_open(title: &str, height: f64) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{MARGIN}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(values: &[f64], lo: f64, hi: f64, color: &str, label: &str) -> String {
    let n = values.len();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let points: Vec<String> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .map(|(i, v)| {
            let x = MARGIN + plot_w * (i as f64 + 0.5) / n.max(1) as f64;
            let y = HEIGHT - MARGIN - plot_h * (v - lo) / span;
            format!("{x:.2},{y:.2}")
        })
        .collect();
    format!(
        r#"<polyline class="series" data-label="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        escape(label),
        points.join(" ")
    )
}

/// Per-objective value lines, each normalized to its own maximum, over
/// background bands coloured by the round's combination.
pub fn objectives_chart(table: &RoundsTable, names: &[String]) -> String {
    let rounds = table.rows.len();
    let mut svg = svg_open("Objective values per round (normalized) and selected combination", HEIGHT);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let band_w = plot_w / rounds.max(1) as f64;
    for (i, m) in table.text("combo_mask").iter().enumerate() {
        let mask: usize = m.parse().unwrap_or(1);
        let _ = writeln!(
            svg,
            r#"<rect class="band" data-mask="{mask}" x="{:.2}" y="{MARGIN}" width="{band_w:.2}" height="{}" fill="{}" fill-opacity="0.15"/>"#,
            MARGIN + band_w * i as f64,
            HEIGHT - 2.0 * MARGIN,
            PALETTE[(mask + PALETTE.len() - 1) % PALETTE.len()]
        );
    }
    let series = if rounds == 0 { 0 } else { table.num_objectives() };
    for i in 0..series {
        let values = table.numbers(&format!("avg_{i}"));
        let hi = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        let label = names.get(i).cloned().unwrap_or_else(|| format!("objective {i}"));
        let _ = writeln!(svg, "{}", polyline(&values, 0.0, hi, PALETTE[i % PALETTE.len()], &label));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Bar chart of combination shares in percent.
pub fn shares_chart(shares: &BTreeMap<u32, f64>, labels: &BTreeMap<u32, String>) -> String {
    let mut svg = svg_open("Selected objective combinations (% of rounds)", HEIGHT);
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let slot = plot_w / shares.len().max(1) as f64;
    for (k, (mask, pct)) in shares.iter().enumerate() {
        let h = plot_h * pct / 100.0;
        let x = MARGIN + slot * k as f64 + slot * 0.1;
        let label = labels.get(mask).cloned().unwrap_or_else(|| mask.to_string());
        let _ = writeln!(
            svg,
            r#"<rect class="bar" data-mask="{mask}" data-value="{pct}" x="{x:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
            HEIGHT - MARGIN - h,
            slot * 0.8,
            PALETTE[(*mask as usize + PALETTE.len() - 1) % PALETTE.len()]
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-family="sans-serif" font-size="10">{} {pct:.1}%</text>"#,
            HEIGHT - MARGIN + 14.0,
            escape(&label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Exploration share of energy assignments per round, in percent.
pub fn state_chart(shares: &[f64]) -> String {
    let mut svg = svg_open("Exploration share of energy assignments per round (%)", HEIGHT);
    if !shares.is_empty() {
        let _ = writeln!(svg, "{}", polyline(shares, 0.0, 100.0, PALETTE[0], "exploration"));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Operator credit totals per combination, from `credits.json`.
pub fn operators_chart(credits: &serde_json::Value) -> String {
    let mut totals: BTreeMap<String, u64> = BTreeMap::new();
    if let Some(by_mask) = credits.as_object() {
        for entry in by_mask.values() {
            if let Some(ops) = entry.get("operators").and_then(|o| o.as_object()) {
                for (name, n) in ops {
                    *totals.entry(name.clone()).or_default() += n.as_u64().unwrap_or(0);
                }
            }
        }
    }
    let sum: u64 = totals.values().sum();
    let shares: BTreeMap<u32, f64> = totals
        .values()
        .enumerate()
        .map(|(i, n)| (i as u32 + 1, if sum == 0 { 0.0 } else { 100.0 * *n as f64 / sum as f64 }))
        .collect();
    let labels: BTreeMap<u32, String> = totals
        .keys()
        .enumerate()
        .map(|(i, k)| (i as u32 + 1, k.clone()))
        .collect();
    shares_chart(&shares, &labels).replacen(
        "Selected objective combinations (% of rounds)",
        "Credited mutation operators (% of credits)",
        1,
    )
}

fn combo_label(mask: u32, names: &[String]) -> String {
    names
        .iter()
        .enumerate()
        .filter(|(i, _)| mask & (1 << i) != 0)
        .map(|(_, n)| n.as_str())
        .collect::<Vec<_>>()
        .join("/")
}

/// Renders all charts plus `summary.txt` into `out`; returns the summary.
pub fn render(dir: &Path, out: &Path) -> Result<String> {
    let rounds_path = dir.join(files::ROUNDS);
    let text = fs::read_to_string(&rounds_path).map_err(|e| Error::io(&rounds_path, e))?;
    let table = RoundsTable::parse(&text)?;
    let names: Vec<String> = ["speed", "stack", "cmp"]
        .iter()
        .take(table.num_objectives())
        .map(|s| s.to_string())
        .collect();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;

    let shares = combination_shares(&table);
    let labels: BTreeMap<u32, String> = shares.keys().map(|m| (*m, combo_label(*m, &names))).collect();
    let explore = exploration_shares(&table);
    let credits: serde_json::Value = fs::read_to_string(dir.join(files::CREDITS))
        .ok()
        .and_then(|t| serde_json::from_str(&t).ok())
        .unwrap_or(serde_json::Value::Null);

    let charts = [
        ("objectives.svg", objectives_chart(&table, &names)),
        ("combinations.svg", shares_chart(&shares, &labels)),
        ("states.svg", state_chart(&explore)),
        ("operators.svg", operators_chart(&credits)),
    ];
    for (name, svg) in charts {
        let path = out.join(name);
        fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    }

    let mut summary = String::new();
    let _ = writeln!(summary, "rounds: {}", table.rows.len());
    if let Some(last) = table.rows.last() {
        for (i, name) in names.iter().enumerate() {
            if let Some(c) = table.column(&format!("cum_{i}")) {
                let _ = writeln!(summary, "mean {name}: {}", last[c]);
            }
        }
        for col in ["cumulative_execs", "pool_size", "good_seed_fraction"] {
            if let Some(c) = table.column(col) {
                let _ = writeln!(summary, "{col}: {}", last[c]);
            }
        }
    }
    let nic_execs: f64 = table.numbers("nic_execs").iter().sum();
    let total: f64 = table.numbers("execs").iter().sum();
    if total > 0.0 {
        let _ = writeln!(summary, "nic share: {:.2}%", 100.0 * nic_execs / total);
    }
    for (mask, pct) in &shares {
        let _ = writeln!(summary, "combination {}: {pct:.1}%", labels[mask]);
    }
    if !explore.is_empty() {
        let mean = explore.iter().sum::<f64>() / explore.len() as f64;
        let _ = writeln!(summary, "exploration share: {mean:.1}%");
    }
    let path = out.join("summary.txt");
    fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    Ok(summary)
}
