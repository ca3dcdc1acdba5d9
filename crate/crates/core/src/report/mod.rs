//! Static SVG figures and their tabular exports.

mod svg;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use svg::{escape, num, Svg};

use crate::cluster::Dendrogram;
use crate::corpus::write_atomic;
use crate::dimensions::DimensionScores;
use crate::error::{Error, Result};
use crate::generate::sha256_hex;
use crate::scalar::{mean, Scalar};
use crate::stats::{bootstrap_means, doc_of, percentile, BenchmarkResult, BootstrapConfig};

pub const REPORT_FORMAT: &str = "styloshift-report/1";
pub const DEFAULT_COLOR_CAP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rgb(pub u8, pub u8, pub u8);

impl Rgb {
    pub fn hex(self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.0, self.1, self.2)
    }

    fn lerp(self, to: Rgb, t: f64) -> Rgb {
        let c = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * t).round() as u8;
        Rgb(c(self.0, to.0), c(self.1, to.1), c(self.2, to.2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Palette {
    #[default]
    RedGreen,
    /// Orange–blue, distinguishable with red–green colour blindness.
    ColorBlind,
}

/// Endpoints of a diverging ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ramp {
    pub negative: Rgb,
    pub neutral: Rgb,
    pub positive: Rgb,
}

impl Palette {
    pub fn ramp(self) -> Ramp {
        match self {
            Palette::RedGreen => Ramp {
                negative: Rgb(215, 48, 39),
                neutral: Rgb(247, 247, 247),
                positive: Rgb(26, 152, 80),
            },
            Palette::ColorBlind => Ramp {
                negative: Rgb(179, 88, 6),
                neutral: Rgb(247, 247, 247),
                positive: Rgb(33, 102, 172),
            },
        }
    }
}

/// Linear in `value / cap`, symmetric about zero and clipped at `±cap`.
pub fn ramp_color(value: f64, cap: f64, palette: Palette) -> Rgb {
    let r = palette.ramp();
    let t = if value.is_nan() { 0.0 } else { (value / cap).clamp(-1.0, 1.0) };
    if t >= 0.0 {
        r.neutral.lerp(r.positive, t)
    } else {
        r.neutral.lerp(r.negative, -t)
    }
}

const GENRE_COLORS: [&str; 8] = [
    "#0072b2", "#e69f00", "#009e73", "#cc79a7", "#56b4e9", "#d55e00", "#f0e442", "#000000",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Heatmap,
    Ranking,
    ScatterGrid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSpec {
    pub kind: ReportKind,
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    /// Saturation is reached at this many baseline standard errors.
    #[serde(default = "default_cap")]
    pub color_cap_multiplier: f64,
    #[serde(default)]
    pub palette: Palette,
    /// Overrides for genre colours; other genres get stable defaults.
    #[serde(default)]
    pub genre_palette: BTreeMap<String, String>,
    pub output_path: PathBuf,
}

fn default_cap() -> f64 {
    DEFAULT_COLOR_CAP
}

impl ReportSpec {
    pub fn new(kind: ReportKind, output_path: impl Into<PathBuf>) -> Self {
        ReportSpec {
            kind,
            inputs: Vec::new(),
            color_cap_multiplier: DEFAULT_COLOR_CAP,
            palette: Palette::default(),
            genre_palette: BTreeMap::new(),
            output_path: output_path.into(),
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.color_cap_multiplier > 0.0 && self.color_cap_multiplier.is_finite()) {
            return Err(Error::Config(format!(
                "color_cap_multiplier must be positive, got {}",
                self.color_cap_multiplier
            )));
        }
        Ok(())
    }

    /// Colour for each genre: explicit entries first, then defaults in
    /// sorted genre order.
    pub fn genre_colors<'a>(&self, genres: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, String> {
        let genres: BTreeSet<&str> = genres.into_iter().collect();
        let mut next = 0;
        genres
            .into_iter()
            .map(|g| {
                let color = self.genre_palette.get(g).cloned().unwrap_or_else(|| {
                    let c = GENRE_COLORS[next % GENRE_COLORS.len()];
                    next += 1;
                    c.to_string()
                });
                (g.to_string(), color)
            })
            .collect()
    }
}

fn f<T: Scalar>(x: T) -> f64 {
    x.as_f64()
}

// ---------------------------------------------------------------------------
// Heatmap

/// Rows in dendrogram order, followed by any results the dendrogram does not
/// cover, by config id.
fn heatmap_rows<'a, T: Scalar>(
    results: &'a [BenchmarkResult<T>],
    dendro: Option<&Dendrogram<T>>,
) -> Result<Vec<&'a BenchmarkResult<T>>> {
    let by_id: BTreeMap<&str, &BenchmarkResult<T>> = results.iter().map(|r| (r.config_id.as_str(), r)).collect();
    if by_id.len() != results.len() {
        return Err(Error::Precondition("duplicate config id among results".into()));
    }
    let mut rows = Vec::with_capacity(results.len());
    let mut used = BTreeSet::new();
    if let Some(d) = dendro {
        for label in d.ordered_labels() {
            let r = by_id
                .get(label)
                .ok_or_else(|| Error::Precondition(format!("dendrogram leaf {label} has no result")))?;
            rows.push(*r);
            used.insert(label);
        }
    }
    rows.extend(by_id.iter().filter(|(k, _)| !used.contains(*k)).map(|(_, r)| *r));
    Ok(rows)
}

fn check_dims<T>(results: &[BenchmarkResult<T>], dim_labels: &[String]) -> Result<()> {
    for r in results {
        if r.b.len() != dim_labels.len() {
            return Err(Error::DimensionMismatch {
                expected: dim_labels.len(),
                got: r.b.len(),
            });
        }
    }
    Ok(())
}

const CELL_W: f64 = 64.0;
const CELL_H: f64 = 22.0;
const DENDRO_W: f64 = 120.0;
const LABEL_W: f64 = 170.0;
const TOP: f64 = 60.0;

pub fn render_heatmap<T: Scalar>(
    results: &[BenchmarkResult<T>],
    dendro: Option<&Dendrogram<T>>,
    dim_labels: &[String],
    spec: &ReportSpec,
) -> Result<String> {
    spec.check()?;
    check_dims(results, dim_labels)?;
    let rows = heatmap_rows(results, dendro)?;
    let cap = spec.color_cap_multiplier;
    let grid_x = DENDRO_W + LABEL_W;
    let width = grid_x + CELL_W * dim_labels.len() as f64 + 20.0;
    let height = TOP + CELL_H * rows.len() as f64 + 70.0;
    let mut svg = Svg::new(width, height);

    for (d, label) in dim_labels.iter().enumerate() {
        svg.text(
            grid_x + CELL_W * (d as f64 + 0.5),
            TOP - 10.0,
            label,
            r#"text-anchor="middle" font-weight="bold""#,
        );
    }
    for (row, r) in rows.iter().enumerate() {
        let y = TOP + CELL_H * row as f64;
        svg.text(grid_x - 6.0, y + CELL_H * 0.68, &r.config_id, r#"text-anchor="end""#);
        for (d, &b) in r.b.iter().enumerate() {
            let b = f(b);
            let sig = r.significant.get(d).copied().unwrap_or(false);
            let fill = ramp_color(b, cap, spec.palette).hex();
            let stroke = if sig {
                r##"stroke="#000000" stroke-width="2.5""##
            } else {
                r##"stroke="#ffffff" stroke-width="0.5""##
            };
            let x = grid_x + CELL_W * d as f64;
            svg.rect(
                x,
                y,
                CELL_W,
                CELL_H,
                &format!(
                    r#"fill="{fill}" {stroke} data-config="{}" data-dim="{}" data-b="{}" data-significant="{sig}""#,
                    escape(&r.config_id),
                    escape(&dim_labels[d]),
                    num(b)
                ),
            );
            let weight = if sig { r#" font-weight="bold""# } else { "" };
            svg.text(
                x + CELL_W / 2.0,
                y + CELL_H * 0.68,
                &format!("{b:.1}"),
                &format!(r#"text-anchor="middle"{weight}"#),
            );
        }
    }
    if let Some(d) = dendro {
        draw_dendrogram(&mut svg, d, &rows.iter().map(|r| r.config_id.as_str()).collect::<Vec<_>>());
    }

    // Colour key.
    let key_y = TOP + CELL_H * rows.len() as f64 + 25.0;
    let steps = 20;
    let key_w = 200.0;
    for s in 0..steps {
        let v = -cap + 2.0 * cap * (s as f64 + 0.5) / steps as f64;
        svg.rect(
            grid_x + key_w * s as f64 / steps as f64,
            key_y,
            key_w / steps as f64,
            12.0,
            &format!(r#"fill="{}""#, ramp_color(v, cap, spec.palette).hex()),
        );
    }
    for (frac, v) in [(0.0, -cap), (0.5, 0.0), (1.0, cap)] {
        svg.text(grid_x + key_w * frac, key_y + 26.0, &num(v), r#"text-anchor="middle""#);
    }
    svg.text(grid_x + key_w + 10.0, key_y + 10.0, "normalized shift (baseline SE)", "");
    Ok(svg.finish())
}

fn draw_dendrogram<T: Scalar>(svg: &mut Svg, d: &Dendrogram<T>, row_labels: &[&str]) {
    let n = d.leaves.len();
    if d.merges.is_empty() {
        return;
    }
    let max_h = d.merges.iter().map(|m| f(m.height)).fold(0.0, f64::max);
    let scale = if max_h > 0.0 { (DENDRO_W - 20.0) / max_h } else { 0.0 };
    let right = DENDRO_W - 5.0;
    let mut pos: Vec<(f64, f64)> = Vec::with_capacity(n + d.merges.len());
    for leaf in &d.leaves {
        let row = row_labels.iter().position(|l| l == leaf).unwrap_or(0);
        pos.push((right, TOP + CELL_H * (row as f64 + 0.5)));
    }
    svg.open_group(r##"stroke="#444444" stroke-width="1" fill="none""##);
    for m in &d.merges {
        let (xa, ya) = pos[m.a];
        let (xb, yb) = pos[m.b];
        let x = right - f(m.height) * scale;
        svg.line(xa, ya, x, ya, "");
        svg.line(xb, yb, x, yb, "");
        svg.line(x, ya, x, yb, "");
        pos.push((x, (ya + yb) / 2.0));
    }
    svg.close_group();
}

pub fn heatmap_table<T: Scalar>(
    results: &[BenchmarkResult<T>],
    dendro: Option<&Dendrogram<T>>,
    dim_labels: &[String],
    spec: &ReportSpec,
) -> Result<String> {
    check_dims(results, dim_labels)?;
    let rows = heatmap_rows(results, dendro)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "config_id", "dimension", "b", "b_ci_low", "b_ci_high", "p_value", "significant", "color",
    ])
    .expect("in-memory csv");
    for r in rows {
        for (d, label) in dim_labels.iter().enumerate() {
            let b = f(r.b[d]);
            w.write_record([
                r.config_id.clone(),
                label.clone(),
                num(b),
                num(f(r.b_ci_low[d])),
                num(f(r.b_ci_high[d])),
                format!("{:.6}", f(r.p_values[d])),
                r.significant[d].to_string(),
                ramp_color(b, spec.color_cap_multiplier, spec.palette).hex(),
            ])
            .expect("in-memory csv");
        }
    }
    Ok(String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"))
}

// ---------------------------------------------------------------------------
// Ranking

/// Ascending by `B`, ties by config id.
pub fn ranking_order<T: Scalar>(results: &[BenchmarkResult<T>]) -> Vec<&BenchmarkResult<T>> {
    let mut rows: Vec<&BenchmarkResult<T>> = results.iter().collect();
    rows.sort_by(|a, b| {
        f(a.big_b)
            .total_cmp(&f(b.big_b))
            .then_with(|| a.config_id.cmp(&b.config_id))
    });
    rows
}

const BAR_H: f64 = 18.0;
const PLOT_W: f64 = 420.0;

pub fn render_ranking<T: Scalar>(results: &[BenchmarkResult<T>], spec: &ReportSpec) -> Result<String> {
    spec.check()?;
    if results.is_empty() {
        return Err(Error::TooFewSamples { needed: 1, got: 0 });
    }
    let rows = ranking_order(results);
    let max = rows
        .iter()
        .map(|r| f(r.big_b).max(f(r.big_b_ci.1)))
        .fold(0.0, f64::max);
    let scale = if max > 0.0 { PLOT_W / max } else { 0.0 };
    let x0 = LABEL_W;
    let top = 20.0;
    let height = top + (BAR_H + 6.0) * rows.len() as f64 + 50.0;
    let mut svg = Svg::new(x0 + PLOT_W + 40.0, height);
    for (k, r) in rows.iter().enumerate() {
        let y = top + (BAR_H + 6.0) * k as f64;
        let (b, lo, hi) = (f(r.big_b), f(r.big_b_ci.0), f(r.big_b_ci.1));
        svg.text(x0 - 6.0, y + BAR_H * 0.7, &r.config_id, r#"text-anchor="end""#);
        svg.rect(
            x0,
            y,
            b * scale,
            BAR_H,
            &format!(
                r##"fill="#7f9fbf" data-config="{}" data-B="{}" data-ci-low="{}" data-ci-high="{}""##,
                escape(&r.config_id),
                num(b),
                num(lo),
                num(hi)
            ),
        );
        let ym = y + BAR_H / 2.0;
        svg.open_group(r##"stroke="#000000" stroke-width="1.2" class="whisker""##);
        svg.line(x0 + lo * scale, ym, x0 + hi * scale, ym, "");
        svg.line(x0 + lo * scale, ym - 4.0, x0 + lo * scale, ym + 4.0, "");
        svg.line(x0 + hi * scale, ym - 4.0, x0 + hi * scale, ym + 4.0, "");
        svg.close_group();
    }
    let axis_y = top + (BAR_H + 6.0) * rows.len() as f64 + 4.0;
    svg.line(x0, axis_y, x0 + PLOT_W, axis_y, r##"stroke="#000000""##);
    for t in axis_ticks(0.0, max) {
        let x = x0 + t * scale;
        svg.line(x, axis_y, x, axis_y + 4.0, r##"stroke="#000000""##);
        svg.text(x, axis_y + 16.0, &num(t), r#"text-anchor="middle""#);
    }
    svg.text(x0 + PLOT_W / 2.0, axis_y + 34.0, "normalized shift length B", r#"text-anchor="middle""#);
    Ok(svg.finish())
}

pub fn ranking_table<T: Scalar>(results: &[BenchmarkResult<T>]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["rank", "config_id", "B", "B_ci_low", "B_ci_high"]).expect("in-memory csv");
    for (k, r) in ranking_order(results).into_iter().enumerate() {
        w.write_record([
            (k + 1).to_string(),
            r.config_id.clone(),
            num(f(r.big_b)),
            num(f(r.big_b_ci.0)),
            num(f(r.big_b_ci.1)),
        ])
        .expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

/// Round-number ticks covering `[lo, hi]`.
fn axis_ticks(lo: f64, hi: f64) -> Vec<f64> {
    if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
        return vec![lo];
    }
    let raw = (hi - lo) / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .into_iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + step * 1e-9 {
        out.push(if t.abs() < step * 1e-9 { 0.0 } else { t });
        t += step;
    }
    out
}

// ---------------------------------------------------------------------------
// Scatter

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterPoint {
    pub doc_id: String,
    pub genre: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftSummary {
    pub dimension: String,
    pub n: usize,
    pub mean_shift: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Pair reference and comparison scores by document. `genres` maps doc id to
/// genre; unknown documents are labelled `unknown`.
pub fn pair_scores<T: Scalar>(
    reference: &[DimensionScores<T>],
    comparison: &[DimensionScores<T>],
    genres: &BTreeMap<String, String>,
) -> Result<Vec<ScatterPoint>> {
    let index = |set: &[DimensionScores<T>]| -> Result<BTreeMap<String, Vec<f64>>> {
        let mut m = BTreeMap::new();
        for s in set {
            if m.insert(doc_of(&s.chunk_id).to_string(), s.v.iter().map(|&x| f(x)).collect()).is_some() {
                return Err(Error::Precondition(format!("document {} scored twice", doc_of(&s.chunk_id))));
            }
        }
        Ok(m)
    };
    let xs = index(reference)?;
    let mut ys = index(comparison)?;
    let mut out = Vec::with_capacity(xs.len());
    for (doc, x) in xs {
        let y = ys.remove(&doc).ok_or_else(|| Error::UnpairedChunk(doc.clone()))?;
        if y.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        out.push(ScatterPoint {
            genre: genres.get(&doc).cloned().unwrap_or_else(|| "unknown".into()),
            doc_id: doc,
            x,
            y,
        });
    }
    if let Some(doc) = ys.into_keys().next() {
        return Err(Error::UnpairedChunk(doc));
    }
    Ok(out)
}

/// Mean of `y - x` per dimension with a percentile bootstrap interval.
pub fn shift_summary(points: &[ScatterPoint], dim_labels: &[String], boot: &BootstrapConfig) -> Vec<ShiftSummary> {
    dim_labels
        .iter()
        .enumerate()
        .map(|(d, label)| {
            let diffs: Vec<f64> = points.iter().map(|p| p.y[d] - p.x[d]).collect();
            let m = mean(&diffs).unwrap_or(f64::NAN);
            let (lo, hi) = if diffs.len() < 2 {
                (m, m)
            } else {
                let draws = bootstrap_means(&diffs, boot.iters, boot.seed);
                (percentile(&draws, 0.025).min(m), percentile(&draws, 0.975).max(m))
            };
            ShiftSummary {
                dimension: label.clone(),
                n: diffs.len(),
                mean_shift: m,
                ci_low: lo,
                ci_high: hi,
            }
        })
        .collect()
}

const PANEL: f64 = 220.0;
const PANEL_GAP: f64 = 50.0;

#[allow(clippy::too_many_arguments)]
pub fn render_scatter<T: Scalar>(
    reference: &[DimensionScores<T>],
    comparison: &[DimensionScores<T>],
    genres: &BTreeMap<String, String>,
    dim_labels: &[String],
    axis_labels: (&str, &str),
    spec: &ReportSpec,
    boot: &BootstrapConfig,
) -> Result<String> {
    spec.check()?;
    let points = pair_scores(reference, comparison, genres)?;
    if let Some(p) = points.iter().find(|p| p.x.len() != dim_labels.len()) {
        return Err(Error::DimensionMismatch {
            expected: dim_labels.len(),
            got: p.x.len(),
        });
    }
    let summary = shift_summary(&points, dim_labels, boot);
    let colors = spec.genre_colors(points.iter().map(|p| p.genre.as_str()));

    let cols = dim_labels.len().clamp(1, 3);
    let panel_rows = dim_labels.len().div_ceil(cols);
    let width = PANEL_GAP + (PANEL + PANEL_GAP) * cols as f64 + 120.0;
    let height = PANEL_GAP + (PANEL + PANEL_GAP) * panel_rows as f64;
    let mut svg = Svg::new(width, height);

    for (d, label) in dim_labels.iter().enumerate() {
        let px = PANEL_GAP + (PANEL + PANEL_GAP) * (d % cols) as f64;
        let py = PANEL_GAP + (PANEL + PANEL_GAP) * (d / cols) as f64;
        let s = &summary[d];
        // Square panel with equal axes so the identity line is the diagonal.
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for p in &points {
            lo = lo.min(p.x[d]).min(p.y[d]);
            hi = hi.max(p.x[d]).max(p.y[d]);
        }
        if !lo.is_finite() {
            (lo, hi) = (-1.0, 1.0);
        }
        let pad = ((hi - lo) * 0.05).max(0.5);
        let (lo, hi) = (lo - pad, hi + pad);
        let sx = |v: f64| px + (v - lo) / (hi - lo) * PANEL;
        let sy = |v: f64| py + PANEL - (v - lo) / (hi - lo) * PANEL;

        svg.open_group(&format!(r#"class="panel" data-dim="{}""#, escape(label)));
        svg.rect(px, py, PANEL, PANEL, r##"fill="none" stroke="#000000""##);
        svg.text(px + PANEL / 2.0, py - 8.0, label, r#"text-anchor="middle" font-weight="bold""#);
        svg.text(px + PANEL / 2.0, py + PANEL + 28.0, axis_labels.0, r#"text-anchor="middle""#);
        svg.text(
            px - 28.0,
            py + PANEL / 2.0,
            axis_labels.1,
            &format!(r#"text-anchor="middle" transform="rotate(-90 {} {})""#, num(px - 28.0), num(py + PANEL / 2.0)),
        );
        for t in axis_ticks(lo, hi) {
            svg.text(sx(t), py + PANEL + 13.0, &num(t), r#"text-anchor="middle" font-size="9""#);
            svg.text(px - 4.0, sy(t) + 3.0, &num(t), r#"text-anchor="end" font-size="9""#);
        }

        // Shift band: y = x + c for c in the interval, clipped to the panel.
        let band = clip_band(lo, hi, s.ci_low, s.ci_high);
        if !band.is_empty() {
            let pts: Vec<(f64, f64)> = band.iter().map(|&(x, y)| (sx(x), sy(y))).collect();
            svg.polygon(
                &pts,
                &format!(
                    r##"fill="#999999" fill-opacity="0.25" stroke="none" class="shift-ci" data-ci-low="{}" data-ci-high="{}""##,
                    num(s.ci_low),
                    num(s.ci_high)
                ),
            );
        }
        svg.line(sx(lo), sy(lo), sx(hi), sy(hi), r##"stroke="#000000" stroke-dasharray="4 3" class="identity""##);
        if let Some(((x1, y1), (x2, y2))) = clip_line(lo, hi, s.mean_shift) {
            svg.line(
                sx(x1),
                sy(y1),
                sx(x2),
                sy(y2),
                &format!(r##"stroke="#c00000" stroke-width="1.5" class="mean-shift" data-shift="{}""##, num(s.mean_shift)),
            );
        }
        for p in &points {
            svg.circle(
                sx(p.x[d]),
                sy(p.y[d]),
                2.5,
                &format!(
                    r#"fill="{}" fill-opacity="0.8" data-doc="{}" data-x="{}" data-y="{}""#,
                    colors[&p.genre],
                    escape(&p.doc_id),
                    num(p.x[d]),
                    num(p.y[d])
                ),
            );
        }
        svg.close_group();
    }

    let lx = PANEL_GAP + (PANEL + PANEL_GAP) * cols as f64;
    svg.open_group(r#"class="legend""#);
    for (k, (genre, color)) in colors.iter().enumerate() {
        let y = PANEL_GAP + 16.0 * k as f64;
        svg.circle(lx, y, 4.0, &format!(r#"fill="{color}" data-genre="{}""#, escape(genre)));
        svg.text(lx + 8.0, y + 4.0, genre, "");
    }
    svg.close_group();
    Ok(svg.finish())
}

/// Segment of `y = x + c` inside the square `[lo, hi]²`.
fn clip_line(lo: f64, hi: f64, c: f64) -> Option<((f64, f64), (f64, f64))> {
    let x1 = lo.max(lo - c);
    let x2 = hi.min(hi - c);
    (x1 < x2 && c.is_finite()).then_some(((x1, x1 + c), (x2, x2 + c)))
}

/// Polygon between `y = x + c_lo` and `y = x + c_hi`, clipped to the square.
fn clip_band(lo: f64, hi: f64, c_lo: f64, c_hi: f64) -> Vec<(f64, f64)> {
    let (Some(a), Some(b)) = (
        clip_line(lo, hi, c_lo.clamp(lo - hi, hi - lo)),
        clip_line(lo, hi, c_hi.clamp(lo - hi, hi - lo)),
    ) else {
        return Vec::new();
    };
    let mut pts = vec![a.0, a.1];
    // Walk the square's corners that lie between the two lines.
    for corner in [(hi, hi), (lo, hi), (lo, lo), (hi, lo)] {
        let c = corner.1 - corner.0;
        if c > c_lo && c < c_hi && !pts.contains(&corner) {
            pts.push(corner);
        }
    }
    pts.push(b.1);
    pts.push(b.0);
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |(sx, sy), p| (sx + p.0, sy + p.1));
    let (cx, cy) = (cx / pts.len() as f64, cy / pts.len() as f64);
    pts.sort_by(|p, q| (p.1 - cy).atan2(p.0 - cx).total_cmp(&(q.1 - cy).atan2(q.0 - cx)));
    pts.dedup();
    pts
}

pub fn scatter_tables(points: &[ScatterPoint], summary: &[ShiftSummary], dim_labels: &[String]) -> (String, String) {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["doc_id", "genre", "dimension", "x", "y"]).expect("in-memory csv");
    for p in points {
        for (d, label) in dim_labels.iter().enumerate() {
            w.write_record([p.doc_id.clone(), p.genre.clone(), label.clone(), num(p.x[d]), num(p.y[d])])
                .expect("in-memory csv");
        }
    }
    let points_csv = String::from_utf8(w.into_inner().expect("flush")).expect("utf-8");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dimension", "n", "mean_shift", "ci_low", "ci_high"]).expect("in-memory csv");
    for s in summary {
        w.write_record([s.dimension.clone(), s.n.to_string(), num(s.mean_shift), num(s.ci_low), num(s.ci_high)])
            .expect("in-memory csv");
    }
    (points_csv, String::from_utf8(w.into_inner().expect("flush")).expect("utf-8"))
}

// ---------------------------------------------------------------------------
// Manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub kind: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportManifest {
    pub format: String,
    pub color_cap_multiplier: f64,
    pub palette: Palette,
    pub ramp: Ramp,
    pub artifacts: Vec<Artifact>,
}

impl ReportManifest {
    pub fn new(cap: f64, palette: Palette) -> Self {
        ReportManifest {
            format: REPORT_FORMAT.to_string(),
            color_cap_multiplier: cap,
            palette,
            ramp: palette.ramp(),
            artifacts: Vec::new(),
        }
    }

    /// Write `content` to `dir/name` and record it.
    pub fn emit(&mut self, dir: &Path, name: &str, kind: &str, content: &str) -> Result<()> {
        write_atomic(&dir.join(name), content.as_bytes())?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            kind: kind.to_string(),
            sha256: sha256_hex(content.as_bytes()),
        });
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("manifest serializes");
        write_atomic(&dir.join("report-manifest.json"), json.as_bytes())
    }
}
