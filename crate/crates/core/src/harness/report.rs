use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{defense_order, ExperimentConfig, ResultRow};
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

pub fn write_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(HEADER)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

const HEADER: [&str; 13] = [
    "dataset",
    "attack",
    "rate",
    "defense",
    "fold",
    "seed",
    "error_rate",
    "n_support",
    "comm_points_up",
    "comm_points_down",
    "gamma_star_pos",
    "gamma_star_neg",
    "error",
];

/// Writes the results CSV (fixed header order, header only when empty).
pub fn emit_csv(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, BufWriter::new(File::create(path)?))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_csv(File::open(path)?)
}

pub fn read_csv<R: Read>(r: R) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(r);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != HEADER {
        return Err(Error::validation(format!(
            "unexpected results header: {}",
            header.join(",")
        )));
    }
    reader.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Per-row wall-clock times, kept apart from the deterministic results.
pub fn emit_timings(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    out.write_record([
        "dataset",
        "attack",
        "rate",
        "defense",
        "fold",
        "seed",
        "runtime_seconds",
    ])?;
    for r in rows {
        out.write_record([
            r.dataset.clone(),
            r.attack.clone(),
            r.rate.to_string(),
            r.defense.clone(),
            r.fold.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.runtime_seconds),
        ])?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub dataset: String,
    pub attack: String,
    pub defense: String,
    /// Mean over successful rows; absent when every row failed.
    pub mean_error: Option<f64>,
    pub rows: usize,
    pub failed: usize,
    /// Lowest mean error for its (dataset, attack).
    pub best: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSummary {
    pub dataset: String,
    pub attack: String,
    pub defense: String,
    pub rate: f64,
    pub mean_error: Option<f64>,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub overall: Vec<SummaryRow>,
    pub per_rate: Vec<RateSummary>,
}

type Key = (String, String, (bool, usize), String);

fn key(r: &ResultRow) -> Key {
    (
        r.dataset.clone(),
        r.attack.clone(),
        defense_order(&r.defense),
        r.defense.clone(),
    )
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Mean error per (dataset, attack, defense) pooled over rates, folds and
/// seeds, plus per-rate means.
pub fn summarize(rows: &[ResultRow]) -> Result<Summary> {
    if rows.is_empty() {
        return Err(Error::validation("nothing to summarize"));
    }
    let mut pooled: BTreeMap<Key, (Vec<f64>, usize, usize)> = BTreeMap::new();
    let mut by_rate: BTreeMap<(Key, u64), (f64, Vec<f64>, usize)> = BTreeMap::new();
    for r in rows {
        let k = key(r);
        let p = pooled.entry(k.clone()).or_default();
        p.1 += 1;
        // rates are non-negative, so the bit pattern sorts like the value
        let q = by_rate.entry((k, r.rate.to_bits())).or_insert((r.rate, Vec::new(), 0));
        q.2 += 1;
        match r.error_rate {
            Some(e) if !r.failed() => {
                p.0.push(e);
                q.1.push(e);
            }
            _ => p.2 += 1,
        }
    }
    let mut overall: Vec<SummaryRow> = pooled
        .into_iter()
        .map(|((dataset, attack, _, defense), (errs, n, failed))| SummaryRow {
            dataset,
            attack,
            defense,
            mean_error: mean(&errs),
            rows: n,
            failed,
            best: false,
        })
        .collect();
    let mut best: BTreeMap<(String, String), (f64, usize)> = BTreeMap::new();
    for (i, s) in overall.iter().enumerate() {
        if let Some(m) = s.mean_error {
            let e = best.entry((s.dataset.clone(), s.attack.clone())).or_insert((m, i));
            if m < e.0 {
                *e = (m, i);
            }
        }
    }
    for (_, i) in best.into_values() {
        overall[i].best = true;
    }
    let per_rate = by_rate
        .into_iter()
        .map(|(((dataset, attack, _, defense), _), (rate, errs, n))| RateSummary {
            dataset,
            attack,
            defense,
            rate,
            mean_error: mean(&errs),
            rows: n,
        })
        .collect();
    Ok(Summary { overall, per_rate })
}

pub fn emit_summary_csv(summary: &Summary, path: impl AsRef<Path>) -> Result<()> {
    let mut out = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    for r in &summary.overall {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Error-rate-versus-attack-rate line chart, one line per defense.
pub fn emit_plot(summary: &Summary, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, render_svg(summary))?;
    Ok(())
}

pub(crate) fn render_svg(summary: &Summary) -> String {
    let (w, h) = (720.0, 440.0);
    let (left, right, top, bottom) = (70.0, 190.0, 40.0, 60.0);
    let pw = w - left - right;
    let ph = h - top - bottom;

    let mut series: BTreeMap<(String, String, (bool, usize), String), Vec<(f64, f64)>> = BTreeMap::new();
    for r in &summary.per_rate {
        if let Some(e) = r.mean_error {
            series
                .entry((
                    r.dataset.clone(),
                    r.attack.clone(),
                    defense_order(&r.defense),
                    r.defense.clone(),
                ))
                .or_default()
                .push((r.rate, e));
        }
    }
    let pairs: std::collections::BTreeSet<(&str, &str)> = series.keys().map(|k| (k.0.as_str(), k.1.as_str())).collect();
    let single = pairs.len() <= 1;
    let xs = series.values().flatten().map(|p| p.0);
    let x_max = xs.clone().fold(0.0f64, f64::max).max(1e-9);
    let y_top = series.values().flatten().map(|p| p.1).fold(0.0f64, f64::max);
    let y_max = ((y_top / 0.05).ceil() * 0.05).max(0.05);
    let sx = |x: f64| left + pw * x / x_max;
    let sy = |y: f64| top + ph * (1.0 - y / y_max);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let title = if single {
        pairs
            .iter()
            .next()
            .map_or_else(String::new, |(d, a)| format!("{d} / {a}"))
    } else {
        "error rate by attack rate".to_string()
    };
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        left + pw / 2.0,
        escape(&title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{left},{top} V{} H{}" fill="none" stroke="black"/>"#,
        top + ph,
        left + pw
    );
    for i in 0..=5 {
        let y = y_max * i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" x2="{}" y1="{py}" y2="{py}" stroke="#ddd"/><text x="{}" y="{}" text-anchor="end">{:.2}</text>"##,
            left + pw,
            left - 6.0,
            sy(y) + 4.0,
            y,
            py = sy(y)
        );
    }
    let mut ticks: Vec<f64> = series.values().flatten().map(|p| p.0).collect();
    ticks.sort_by(f64::total_cmp);
    ticks.dedup();
    for x in ticks {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            top + ph + 18.0,
            (x * 1e6).round() / 1e6
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">attack rate</text>"#,
        left + pw / 2.0,
        h - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{}) rotate(-90)" text-anchor="middle">mean test error</text>"#,
        top + ph / 2.0
    );
    for (i, (k, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = pts.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            d.join(" ")
        );
        for &(x, y) in &pts {
            let _ = writeln!(
                svg,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                sx(x),
                sy(y)
            );
        }
        let name = if single {
            k.3.clone()
        } else {
            format!("{}/{}/{}", k.0, k.1, k.3)
        };
        let ly = top + 10.0 + 18.0 * i as f64;
        let lx = left + pw + 16.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx}" x2="{}" y1="{ly}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Resolved configuration plus the conventions the run depends on.
pub fn metadata(cfg: &ExperimentConfig) -> serde_json::Value {
    serde_json::json!({
        "crate": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "conventions": {
            "standardization": if cfg.standardize {
                "z-score fitted on the clean training fold (sample std, floor 1e-12), applied to the test fold"
            } else {
                "none"
            },
            "lid_minibatch": "one random mini-batch per sample and per class conditioning",
            "weight_fit": "per class",
            "clip_quantile": cfg.defense.clip_quantile,
            "self_sim_rate": cfg.defense.self_sim_rate,
            "cell_seed": "derive_seed(seed, [fold, rate bits])",
            "dsvm_validation": "attacked training fold",
            "pa_validation": "clean training fold",
            "runtime": "timings.csv",
        },
    })
}
