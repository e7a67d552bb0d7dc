//! Minimal SVG line chart for an efficiency path: ζ as a solid line, band
//! limits dashed, an optional dotted vertical event marker. Singular dates
//! break the lines.

use std::fmt::Write as _;

use chrono::{Datelike, NaiveDate};

use crate::efficiency::EfficiencyPath;
use crate::market_data::ISO_DATE;

#[derive(Debug, Clone)]
pub struct PlotOptions {
    pub width: f64,
    pub height: f64,
    pub title: String,
    pub event_date: Option<NaiveDate>,
    pub event_label: Option<String>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        Self {
            width: 900.0,
            height: 420.0,
            title: "Joint degree of market efficiency".into(),
            event_date: None,
            event_label: None,
        }
    }
}

const MARGIN_L: f64 = 60.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 36.0;
const MARGIN_B: f64 = 40.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// "Nice" tick step covering `span` in roughly `target` intervals.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Polyline segments between missing values, as SVG path data.
fn path_data(points: impl Iterator<Item = Option<(f64, f64)>>) -> String {
    let mut d = String::new();
    let mut pen_down = false;
    for p in points {
        match p {
            Some((x, y)) => {
                let _ = write!(d, "{}{x:.2},{y:.2} ", if pen_down { "L" } else { "M" });
                pen_down = true;
            }
            None => pen_down = false,
        }
    }
    d.trim_end().to_string()
}

pub fn render_svg(path: &EfficiencyPath, opts: &PlotOptions) -> String {
    let (w, h) = (opts.width, opts.height);
    let plot_w = w - MARGIN_L - MARGIN_R;
    let plot_h = h - MARGIN_T - MARGIN_B;
    let n = path.dates.len();

    let series: Vec<&[Option<f64>]> = std::iter::once(path.zeta.as_slice())
        .chain(path.band_low.as_deref())
        .chain(path.band_high.as_deref())
        .collect();
    let finite = series.iter().flat_map(|s| s.iter().flatten()).copied().filter(|v| v.is_finite());
    let (mut lo, mut hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    lo = lo.min(0.0);
    if hi - lo < 1e-12 {
        hi = lo + 1.0;
    }
    let step = tick_step(hi - lo, 5.0);
    hi = (hi / step).ceil() * step;

    let x_of = |t: usize| MARGIN_L + if n > 1 { plot_w * t as f64 / (n - 1) as f64 } else { plot_w / 2.0 };
    let y_of = |v: f64| MARGIN_T + plot_h * (1.0 - (v - lo) / (hi - lo));
    let line = |vals: &[Option<f64>]| {
        path_data(vals.iter().enumerate().map(|(t, v)| v.filter(|x| x.is_finite()).map(|x| (x_of(t), y_of(x)))))
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(&opts.title)
    );

    // y axis with gridlines
    let mut v = lo;
    while v <= hi + step * 1e-9 {
        let y = y_of(v);
        let _ = writeln!(
            s,
            r##"<line x1="{MARGIN_L}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#e0e0e0"/>"##,
            MARGIN_L + plot_w
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            MARGIN_L - 6.0,
            y + 4.0,
            trim_number(v, step)
        );
        v += step;
    }

    // x axis: one label per calendar year when the range allows, else ends only.
    if n > 0 {
        let mut ticks: Vec<usize> = Vec::new();
        for t in 1..n {
            if path.dates[t].year() != path.dates[t - 1].year() {
                ticks.push(t);
            }
        }
        if ticks.len() > 12 || ticks.is_empty() {
            ticks = vec![0, n - 1];
        }
        for t in ticks {
            let x = x_of(t);
            let label = if path.dates.len() > 1 && path.dates[t].ordinal() <= 7 {
                path.dates[t].year().to_string()
            } else {
                path.dates[t].format(ISO_DATE).to_string()
            };
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/>"##,
                MARGIN_T + plot_h,
                MARGIN_T + plot_h + 4.0
            );
            let _ = writeln!(
                s,
                r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{label}</text>"#,
                MARGIN_T + plot_h + 16.0
            );
        }
    }
    let _ = writeln!(
        s,
        r##"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{plot_w:.2}" height="{plot_h:.2}" fill="none" stroke="#000"/>"##
    );

    for band in [&path.band_low, &path.band_high].into_iter().flatten() {
        let _ = writeln!(
            s,
            r##"<path d="{}" fill="none" stroke="#d62728" stroke-width="1" stroke-dasharray="6,4"/>"##,
            line(band)
        );
    }
    let _ = writeln!(
        s,
        r##"<path d="{}" fill="none" stroke="#000" stroke-width="1.2"/>"##,
        line(&path.zeta)
    );

    if let (Some(event), Some(first), Some(last)) = (opts.event_date, path.dates.first(), path.dates.last()) {
        if event >= *first && event <= *last {
            let t = path.dates.partition_point(|d| *d < event);
            let x = x_of(t);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{MARGIN_T}" x2="{x:.2}" y2="{:.2}" stroke="#1f77b4" stroke-width="1.5" stroke-dasharray="2,3"/>"##,
                MARGIN_T + plot_h
            );
            if let Some(label) = &opts.event_label {
                let _ = writeln!(
                    s,
                    r##"<text x="{:.2}" y="{:.2}" fill="#1f77b4">{}</text>"##,
                    x + 4.0,
                    MARGIN_T + 12.0,
                    escape(label)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn trim_number(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize };
    format!("{v:.decimals$}")
}
