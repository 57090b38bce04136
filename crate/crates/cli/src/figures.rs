//! Diagnostic figures as standalone SVG documents.

use std::fmt::Write;

use idm_fpr::aggregate::{CountDistribution, FprQuantileRow};
use idm_fpr::datamodel::{Dataset, ObservationRecord, Sex};
use idm_fpr::linkfit::FittedSurface;
use idm_fpr::montecarlo::FprDrawMatrix;
use idm_fpr::surfaces::SurfaceSet;

use crate::run::OutputFile;

/// Upper bound on the number of individual draws drawn in the fan chart.
pub const MAX_SPAGHETTI: usize = 500;
pub const FIGURE_DIR: &str = "figures";

const PANEL_W: f64 = 440.0;
const PANEL_H: f64 = 330.0;
const MARGIN_L: f64 = 68.0;
const MARGIN_R: f64 = 16.0;
const MARGIN_T: f64 = 28.0;
const MARGIN_B: f64 = 46.0;
const HEADER_H: f64 = 34.0;
const LEGEND_H: f64 = 26.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone)]
pub enum Mark {
    Line(Vec<(f64, f64)>),
    Points(Vec<(f64, f64)>),
    /// `(x, lower, upper)` filled between the bounds.
    Band(Vec<(f64, f64, f64)>),
    /// `(x0, x1, height)` histogram bars from zero.
    Bars(Vec<(f64, f64, f64)>),
}

#[derive(Debug, Clone)]
pub struct Series {
    pub mark: Mark,
    pub color: &'static str,
    pub class: &'static str,
    pub opacity: f64,
    pub width: f64,
}

impl Series {
    pub fn new(mark: Mark, color: &'static str, class: &'static str) -> Self {
        Self { mark, color, class, opacity: 1.0, width: 1.6 }
    }

    fn opacity(mut self, o: f64) -> Self {
        self.opacity = o;
        self
    }

    fn width(mut self, w: f64) -> Self {
        self.width = w;
        self
    }

    fn xs_ys(&self) -> Vec<(f64, f64)> {
        match &self.mark {
            Mark::Line(p) | Mark::Points(p) => p.clone(),
            Mark::Band(b) => b.iter().flat_map(|&(x, lo, hi)| [(x, lo), (x, hi)]).collect(),
            Mark::Bars(b) => b.iter().flat_map(|&(x0, x1, h)| [(x0, 0.0), (x1, h)]).collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_y: bool,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (!log || *v > 0.0)) {
            let v = if log { v.log10() } else { v };
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        let span = hi - lo;
        let pad = if span > 0.0 { 0.04 * span } else { 0.5 * lo.abs().max(1e-3) };
        Self { lo: lo - pad, hi: hi + pad, log }
    }

    fn unit(&self, v: f64) -> f64 {
        let v = if self.log { v.max(f64::MIN_POSITIVE).log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        if self.log && self.hi - self.lo >= 1.0 {
            let step = ((self.hi - self.lo) / 6.0).ceil().max(1.0);
            let first = (self.lo / step).ceil() as i32;
            let last = (self.hi / step).floor() as i32;
            return (first..=last).map(|k| 10f64.powf(f64::from(k) * step)).collect();
        }
        let (lo, hi) = if self.log { (10f64.powf(self.lo), 10f64.powf(self.hi)) } else { (self.lo, self.hi) };
        let raw = (hi - lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
        let first = (lo / step).ceil() as i64;
        let last = (hi / step).floor() as i64;
        (first..=last).map(|k| k as f64 * step).collect()
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e5).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.6}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    x: Axis,
    y: Axis,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        self.x0 + self.x.unit(x) * self.w
    }

    fn py(&self, y: f64) -> f64 {
        self.y0 + (1.0 - self.y.unit(y)) * self.h
    }
}

fn render_panel(out: &mut String, p: &Panel, left: f64, top: f64) {
    let pts: Vec<(f64, f64)> = p.series.iter().flat_map(Series::xs_ys).collect();
    let f = Frame {
        x0: left + MARGIN_L,
        y0: top + MARGIN_T,
        w: PANEL_W - MARGIN_L - MARGIN_R,
        h: PANEL_H - MARGIN_T - MARGIN_B,
        x: Axis::fit(pts.iter().map(|q| q.0), false),
        y: Axis::fit(pts.iter().map(|q| q.1), p.log_y),
    };
    let _ = writeln!(out, r#"<g class="panel">"#);
    let _ = writeln!(
        out,
        r##"<rect class="plot-area" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#ffffff" stroke="#444444"/>"##,
        f.x0, f.y0, f.w, f.h
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="14">{}</text>"#,
        f.x0 + f.w / 2.0,
        top + MARGIN_T - 10.0,
        escape(&p.title)
    );
    for t in f.x.ticks() {
        let x = f.px(t);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#444444"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"##,
            f.y0 + f.h,
            f.y0 + f.h + 5.0,
            f.y0 + f.h + 18.0,
            fmt_tick(t)
        );
    }
    for t in f.y.ticks() {
        let y = f.py(t);
        let _ = writeln!(
            out,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#444444"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"##,
            f.x0 - 5.0,
            f.x0,
            f.x0 - 8.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        f.x0 + f.w / 2.0,
        f.y0 + f.h + 36.0,
        escape(&p.x_label)
    );
    let (lx, ly) = (left + 16.0, f.y0 + f.h / 2.0);
    let _ = writeln!(
        out,
        r#"<text x="{lx:.2}" y="{ly:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {lx:.2} {ly:.2})">{}</text>"#,
        escape(&p.y_label)
    );
    for s in &p.series {
        render_series(out, s, &f);
    }
    let _ = writeln!(out, "</g>");
}

fn render_series(out: &mut String, s: &Series, f: &Frame) {
    let path = |pts: &mut dyn Iterator<Item = (f64, f64)>| {
        pts.map(|(x, y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect::<Vec<_>>().join(" ")
    };
    match &s.mark {
        Mark::Line(p) if p.len() >= 2 => {
            let _ = writeln!(
                out,
                r#"<polyline class="{}" points="{}" fill="none" stroke="{}" stroke-width="{}" stroke-opacity="{}"/>"#,
                s.class,
                path(&mut p.iter().copied()),
                s.color,
                s.width,
                s.opacity
            );
        }
        Mark::Line(_) => {}
        Mark::Points(p) => {
            for &(x, y) in p {
                let _ = writeln!(
                    out,
                    r#"<circle class="{}" cx="{:.2}" cy="{:.2}" r="2.6" fill="{}" fill-opacity="{}"/>"#,
                    s.class,
                    f.px(x),
                    f.py(y),
                    s.color,
                    s.opacity
                );
            }
        }
        Mark::Band(b) if !b.is_empty() => {
            let mut pts = b.iter().map(|&(x, _, hi)| (x, hi)).chain(b.iter().rev().map(|&(x, lo, _)| (x, lo)));
            let _ = writeln!(
                out,
                r#"<polygon class="{}" points="{}" fill="{}" fill-opacity="{}" stroke="none"/>"#,
                s.class,
                path(&mut pts),
                s.color,
                s.opacity
            );
        }
        Mark::Band(_) => {}
        Mark::Bars(b) => {
            for &(x0, x1, h) in b {
                let (px0, px1, ptop, pbase) = (f.px(x0), f.px(x1), f.py(h), f.py(0.0));
                let _ = writeln!(
                    out,
                    r##"<rect class="{}" x="{px0:.2}" y="{ptop:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="{}" stroke="#ffffff" stroke-width="0.5"/>"##,
                    s.class,
                    (px1 - px0).max(0.0),
                    (pbase - ptop).max(0.0),
                    s.color,
                    s.opacity
                );
            }
        }
    }
}

/// Lays the panels out side by side under a title with an optional legend.
pub fn render(title: &str, panels: &[Panel], legend: &[(String, &'static str)]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let height = HEADER_H + PANEL_H + LEGEND_H;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r##"<rect width="{width}" height="{height}" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="16" font-weight="bold">{}</text>"#,
        width / 2.0,
        escape(title)
    );
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, PANEL_W * i as f64, HEADER_H);
    }
    let mut x = MARGIN_L;
    let y = HEADER_H + PANEL_H + 12.0;
    for (label, color) in legend {
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{:.2}" width="14" height="8" fill="{color}"/><text x="{:.2}" y="{:.2}" font-size="11">{}</text>"#,
            y - 7.0,
            x + 18.0,
            y + 1.0,
            escape(label)
        );
        x += 30.0 + 6.5 * label.chars().count() as f64;
    }
    out.push_str("</svg>\n");
    out
}

fn plot_ages() -> Vec<f64> {
    (0..=200).map(|k| 0.5 * f64::from(k)).collect()
}

fn curve(ages: &[f64], f: impl Fn(f64) -> f64) -> Vec<(f64, f64)> {
    ages.iter().map(|&a| (a, f(a))).filter(|p| p.1.is_finite()).collect()
}

fn years(records: &[ObservationRecord]) -> Vec<Option<i32>> {
    let mut y: Vec<Option<i32>> = records.iter().map(|r| r.year).collect();
    y.sort_unstable();
    y.dedup();
    y
}

struct SurfaceFigure<'a> {
    title: &'a str,
    y_label: &'a str,
    records: &'a [ObservationRecord],
    surface: &'a FittedSurface<f64>,
    age_of: fn(&ObservationRecord) -> f64,
    age_range: (f64, f64),
    log_y: bool,
    /// Fit ignores calendar time: draw one line at the survey midpoint.
    pooled: bool,
}

/// Observed points, coloured by year, against the fitted surface.
fn surface_figure(fig: &SurfaceFigure<'_>, mid: f64) -> String {
    let mut ys = years(fig.records);
    if ys.is_empty() {
        ys.push(None);
    }
    let ages: Vec<f64> = plot_ages().into_iter().filter(|a| (fig.age_range.0..=fig.age_range.1).contains(a)).collect();
    let color = |i: usize| PALETTE[i % PALETTE.len()];
    let mut legend: Vec<(String, &'static str)> = ys
        .iter()
        .enumerate()
        .map(|(i, y)| (y.map_or_else(|| "observed".to_string(), |y| y.to_string()), color(i)))
        .collect();
    if fig.pooled {
        legend.push(("fit".to_string(), "#000000"));
    }
    let panels: Vec<Panel> = Sex::ALL
        .iter()
        .map(|&sex| {
            let mut series = Vec::new();
            let line = |year: f64| curve(&ages, |a| fig.surface.eval(year, a, sex));
            for (i, &y) in ys.iter().enumerate() {
                let pts: Vec<(f64, f64)> = fig
                    .records
                    .iter()
                    .filter(|r| r.sex == sex && r.year == y && (!fig.log_y || r.value > 0.0))
                    .map(|r| ((fig.age_of)(r), r.value))
                    .collect();
                series.push(Series::new(Mark::Points(pts), color(i), "observed").opacity(0.8));
                if !fig.pooled {
                    let year = y.map_or(mid, f64::from);
                    series.push(Series::new(Mark::Line(line(year)), color(i), "fitted"));
                }
            }
            if fig.pooled {
                series.push(Series::new(Mark::Line(line(mid)), "#000000", "fitted"));
            }
            Panel {
                title: sex.to_string(),
                x_label: "age (years)".into(),
                y_label: fig.y_label.into(),
                log_y: fig.log_y,
                series,
            }
        })
        .collect();
    render(fig.title, &panels, &legend)
}

/// Draw indices of the spaghetti subsample: evenly spaced over all draws,
/// independent of anything but the number of draws.
pub fn spaghetti_draws(n_draws: usize) -> Vec<usize> {
    if n_draws <= MAX_SPAGHETTI {
        return (0..n_draws).collect();
    }
    (0..MAX_SPAGHETTI).map(|i| i * n_draws / MAX_SPAGHETTI).collect()
}

pub fn fpr_fan(m: &FprDrawMatrix, quantiles: &[FprQuantileRow]) -> String {
    let per_mille = 1000.0;
    let panels: Vec<Panel> = Sex::ALL
        .iter()
        .map(|&sex| {
            let rows: Vec<&FprQuantileRow> = quantiles.iter().filter(|r| r.sex == sex && r.n > 0).collect();
            let mut series = Vec::new();
            for k in spaghetti_draws(m.n_draws()) {
                let line: Option<Vec<(f64, f64)>> =
                    m.ages.iter().enumerate().map(|(j, &a)| m.fpr(k, sex, j).map(|x| (a, x * per_mille))).collect();
                if let Some(line) = line {
                    series.push(Series::new(Mark::Line(line), "#7f7f7f", "spaghetti").opacity(0.12).width(0.6));
                }
            }
            let band = rows.iter().map(|r| (r.age, r.q025 * per_mille, r.q975 * per_mille)).collect();
            series.push(Series::new(Mark::Band(band), PALETTE[0], "band").opacity(0.25));
            let median = rows.iter().map(|r| (r.age, r.q50 * per_mille)).collect();
            series.push(Series::new(Mark::Line(median), PALETTE[1], "median").width(2.2));
            Panel {
                title: sex.to_string(),
                x_label: "age (years)".into(),
                y_label: "false-positive ratio (per mille)".into(),
                log_y: false,
                series,
            }
        })
        .collect();
    let legend = vec![
        ("median".to_string(), PALETTE[1]),
        ("2.5-97.5% band".to_string(), PALETTE[0]),
        (format!("individual draws (up to {MAX_SPAGHETTI})"), "#7f7f7f"),
    ];
    render("False-positive ratio by age", &panels, &legend)
}

/// Equal-width histogram bins over the sample range.
pub fn histogram(samples: &[f64], bins: usize) -> Vec<(f64, f64, f64)> {
    let finite: Vec<f64> = samples.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5 * lo.abs().max(1.0) * 1e-3, hi + 0.5 * hi.abs().max(1.0) * 1e-3) };
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in finite {
        let b = (((v - lo) / w) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts.iter().enumerate().map(|(i, &c)| (lo + w * i as f64, lo + w * (i + 1) as f64, c as f64)).collect()
}

pub fn counts(c: &CountDistribution) -> String {
    let groups: [(&str, &[f64]); 3] = [("male", &c.male), ("female", &c.female), ("total", &c.total)];
    let panels: Vec<Panel> = groups
        .iter()
        .enumerate()
        .map(|(i, (name, v))| {
            let thousands: Vec<f64> = v.iter().map(|x| x / 1e3).collect();
            Panel {
                title: format!("{name} (n = {})", v.len()),
                x_label: "false positives (thousands)".into(),
                y_label: "draws".into(),
                log_y: false,
                series: vec![Series::new(Mark::Bars(histogram(&thousands, 40)), PALETTE[i], "bar").opacity(0.85)],
            }
        })
        .collect();
    render("Falsely diagnosed people", &panels, &[])
}

/// All six figures, under `figures/`.
pub fn all(
    d: &Dataset,
    s: &SurfaceSet,
    m: &FprDrawMatrix,
    quantiles: &[FprQuantileRow],
    c: &CountDistribution,
) -> Vec<OutputFile> {
    let mid = s.survey.midpoint();
    let reps: fn(&ObservationRecord) -> f64 = ObservationRecord::representative_age;
    let surface = |title, y_label, records, surface, age_of, age_range, log_y, pooled| {
        surface_figure(&SurfaceFigure { title, y_label, records, surface, age_of, age_range, log_y, pooled }, mid)
    };
    let figs = [
        (
            "prevalence.svg",
            surface("Observed prevalence", "prevalence", &d.prevalence, &s.prevalence, reps, (0.0, 100.0), false, false),
        ),
        (
            "incidence.svg",
            surface("Observed incidence", "incidence rate (per person-year)", &d.incidence, &s.incidence, reps, (0.0, 100.0), false, false),
        ),
        (
            "mrr.svg",
            surface("Mortality rate ratio", "mortality rate ratio", &d.mrr, &s.mrr, |r| r.age_lo, (20.0, 95.0), false, true),
        ),
        (
            "mortality.svg",
            surface("General mortality", "mortality rate (log scale)", &d.mortality, &s.mortality, reps, (15.0, 100.0), true, true),
        ),
        ("fpr_fan.svg", fpr_fan(m, quantiles)),
        ("counts.svg", counts(c)),
    ];
    figs.into_iter().map(|(name, svg)| OutputFile::new(format!("{FIGURE_DIR}/{name}"), svg)).collect()
}
