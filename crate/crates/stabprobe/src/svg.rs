//! Minimal SVG plots: line plots with ±1 std bars, and a heatmap of
//! `log10` cell means with frontier markers and a hatched iso-band.
//!
//! Output is a pure function of the input values.

use std::fmt::Write as _;

use stabprobe_core::experiment::{Experiment, GridResult};

const W: f64 = 640.0;
const PANEL_H: f64 = 260.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
/// Decades shown by the heatmap color scale; smaller means share the
/// bottom color.
const LOG_RANGE: f64 = 6.0;

fn header(out: &mut String, w: f64, h: f64, title: &str) {
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    )
    .unwrap();
    writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#).unwrap();
    writeln!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        w / 2.0,
        escape(title)
    )
    .unwrap();
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

pub struct Series<'a> {
    pub label: &'a str,
    pub mean: &'a [f64],
    pub std: &'a [f64],
}

/// One stacked panel per series, sharing the x values.
pub fn line_plot(title: &str, x_label: &str, xs: &[f64], series: &[Series<'_>]) -> String {
    let h = TOP + series.len() as f64 * (PANEL_H + BOTTOM);
    let mut out = String::new();
    header(&mut out, W, h, title);

    let (x_lo, x_hi) = bounds(xs.iter().copied());
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let (x_lo, x_span) = (x_lo - 0.05 * x_span, 1.1 * x_span);
    let plot_w = W - LEFT - RIGHT;

    for (k, s) in series.iter().enumerate() {
        let y0 = TOP + k as f64 * (PANEL_H + BOTTOM);
        let (lo, hi) = bounds(s.mean.iter().zip(s.std).flat_map(|(m, d)| [m - d, m + d]));
        let lo = lo.min(0.0);
        let span = if hi > lo { 1.08 * (hi - lo) } else { 1.0 };
        let px = |x: f64| LEFT + (x - x_lo) / x_span * plot_w;
        let py = |y: f64| y0 + PANEL_H - (y - lo) / span * PANEL_H;

        writeln!(out, r#"<g class="panel">"#).unwrap();
        writeln!(
            out,
            r#"<rect x="{LEFT}" y="{y0}" width="{plot_w}" height="{PANEL_H}" fill="none" stroke="black"/>"#
        )
        .unwrap();
        for i in 0..=4 {
            let v = lo + span * i as f64 / 4.0;
            let y = py(v);
            writeln!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                tick_label(v)
            )
            .unwrap();
        }
        for &x in xs {
            writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                px(x),
                y0 + PANEL_H + 16.0,
                tick_label(x)
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + plot_w / 2.0,
            y0 + PANEL_H + 34.0,
            escape(x_label)
        )
        .unwrap();
        writeln!(
            out,
            r#"<text transform="translate(16 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
            y0 + PANEL_H / 2.0,
            escape(s.label)
        )
        .unwrap();

        let points: Vec<String> = xs
            .iter()
            .zip(s.mean)
            .map(|(&x, &m)| format!("{:.2},{:.2}", px(x), py(m)))
            .collect();
        writeln!(
            out,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            points.join(" ")
        )
        .unwrap();
        for ((&x, &m), &d) in xs.iter().zip(s.mean).zip(s.std) {
            let (cx, top, bot) = (px(x), py(m + d), py(m - d));
            writeln!(
                out,
                r##"<line x1="{cx:.2}" y1="{top:.2}" x2="{cx:.2}" y2="{bot:.2}" stroke="#1f77b4"/><line x1="{:.2}" y1="{top:.2}" x2="{:.2}" y2="{top:.2}" stroke="#1f77b4"/><line x1="{:.2}" y1="{bot:.2}" x2="{:.2}" y2="{bot:.2}" stroke="#1f77b4"/><circle cx="{cx:.2}" cy="{:.2}" r="3.5" fill="#1f77b4"/>"##,
                cx - 5.0,
                cx + 5.0,
                cx - 5.0,
                cx + 5.0,
                py(m)
            )
            .unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

/// Five-stop sequential palette, `t` in `[0, 1]`.
fn color(t: f64) -> String {
    const STOPS: [(f64, f64, f64); 5] = [
        (68.0, 1.0, 84.0),
        (59.0, 82.0, 139.0),
        (33.0, 145.0, 140.0),
        (94.0, 201.0, 98.0),
        (253.0, 231.0, 37.0),
    ];
    let t = if t.is_finite() {
        t.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos = t * (STOPS.len() - 1) as f64;
    let i = (pos.floor() as usize).min(STOPS.len() - 2);
    let f = pos - i as f64;
    let lerp = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    let (a, b) = (STOPS[i], STOPS[i + 1]);
    format!(
        "#{:02x}{:02x}{:02x}",
        lerp(a.0, b.0),
        lerp(a.1, b.1),
        lerp(a.2, b.2)
    )
}

/// Rows are shapes `p`, columns the inner grid. Colors map `log10(mean)`;
/// frontier cells are joined by a polyline with markers, and iso-band cells
/// are hatched.
pub fn heatmap(
    title: &str,
    inner_label: &str,
    ps: &[f64],
    inner: &[usize],
    means: &[f64],
    frontier: &[(f64, Option<usize>)],
    in_band: Option<&[bool]>,
) -> String {
    let (rows, cols) = (ps.len(), inner.len());
    let cell_w = ((W - LEFT - 110.0) / cols.max(1) as f64).min(80.0);
    let cell_h = (PANEL_H / rows.max(1) as f64).min(60.0);
    let grid_w = cell_w * cols as f64;
    let grid_h = cell_h * rows as f64;
    let h = TOP + grid_h + BOTTOM + 10.0;
    let mut out = String::new();
    header(&mut out, W, h, title);
    out.push_str(
        r#"<defs><pattern id="hatch" width="6" height="6" patternUnits="userSpaceOnUse" patternTransform="rotate(45)"><line x1="0" y1="0" x2="0" y2="6" stroke="white" stroke-width="2"/></pattern></defs>
"#,
    );

    let logs: Vec<f64> = means
        .iter()
        .map(|m| {
            if *m > 0.0 {
                m.log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let (lo, hi) = bounds(logs.iter().copied());
    let (lo, hi) = if lo.is_finite() {
        (lo.max(hi - LOG_RANGE), hi)
    } else {
        (0.0, 1.0)
    };
    let span = if hi > lo { hi - lo } else { 1.0 };
    let x_of = |c: usize| LEFT + c as f64 * cell_w;
    // first shape at the bottom
    let y_of = |r: usize| TOP + (rows - 1 - r) as f64 * cell_h;

    for (r, p) in ps.iter().enumerate().take(rows) {
        for (c, q) in inner.iter().enumerate().take(cols) {
            let k = r * cols + c;
            let (x, y) = (x_of(c), y_of(r));
            writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="{}"><title>p={} {inner_label}={} mean={}</title></rect>"#,
                color((logs[k] - lo) / span),
                p,
                q,
                means[k]
            )
            .unwrap();
            if in_band.is_some_and(|b| b[k]) {
                writeln!(
                    out,
                    r#"<rect class="iso-band" x="{x:.2}" y="{y:.2}" width="{cell_w:.2}" height="{cell_h:.2}" fill="url(#hatch)" stroke="white"/>"#
                )
                .unwrap();
            }
        }
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y_of(r) + cell_h / 2.0 + 4.0,
            tick_label(*p)
        )
        .unwrap();
    }
    for (c, g) in inner.iter().enumerate() {
        writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{g}</text>"#,
            x_of(c) + cell_w / 2.0,
            TOP + grid_h + 16.0
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text><text transform="translate(20 {:.2}) rotate(-90)" text-anchor="middle">p</text>"#,
        LEFT + grid_w / 2.0,
        TOP + grid_h + 36.0,
        escape(inner_label),
        TOP + grid_h / 2.0
    )
    .unwrap();

    let marks: Vec<(f64, f64)> = frontier
        .iter()
        .filter_map(|(p, f)| {
            let r = ps.iter().position(|q| q == p)?;
            let c = inner.iter().position(|g| Some(*g) == *f)?;
            Some((x_of(c) + cell_w / 2.0, y_of(r) + cell_h / 2.0))
        })
        .collect();
    if !marks.is_empty() {
        let pts: Vec<String> = marks
            .iter()
            .map(|(x, y)| format!("{x:.2},{y:.2}"))
            .collect();
        writeln!(
            out,
            r#"<polyline class="frontier" points="{}" fill="none" stroke="red" stroke-width="2"/>"#,
            pts.join(" ")
        )
        .unwrap();
        for (x, y) in &marks {
            writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="red" stroke="white"/>"#
            )
            .unwrap();
        }
    }

    let bar_x = LEFT + grid_w + 30.0;
    for i in 0..20 {
        let t = 1.0 - i as f64 / 19.0;
        writeln!(
            out,
            r#"<rect x="{bar_x:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            TOP + grid_h * i as f64 / 20.0,
            grid_h / 20.0 + 0.5,
            color(t)
        )
        .unwrap();
    }
    writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}">{}</text><text x="{:.2}" y="{:.2}">&#8804; {}</text><text x="{:.2}" y="{:.2}">log10</text>"#,
        bar_x + 20.0,
        TOP + 10.0,
        tick_label(hi),
        bar_x + 20.0,
        TOP + grid_h,
        tick_label(lo),
        bar_x,
        TOP - 6.0
    )
    .unwrap();
    out.push_str("</svg>\n");
    out
}

/// Plot for an experiment result.
pub fn render(r: &GridResult) -> String {
    let title = format!("{} probe", r.experiment.name());
    match r.experiment {
        Experiment::Hos | Experiment::Sos => {
            let xs: Vec<f64> = r
                .cells
                .iter()
                .map(|c| c.p().unwrap_or_else(|| c.count().unwrap_or(0) as f64))
                .collect();
            let means = r.means();
            let stds: Vec<f64> = r.summaries.iter().map(|s| s.probe_std).collect();
            let api_mean: Option<Vec<f64>> = r.summaries.iter().map(|s| s.api_mean).collect();
            let api_std: Option<Vec<f64>> = r.summaries.iter().map(|s| s.api_std).collect();
            let mut series = vec![Series {
                label: "probe",
                mean: &means,
                std: &stds,
            }];
            if let (Some(m), Some(s)) = (&api_mean, &api_std) {
                series.push(Series {
                    label: "API",
                    mean: m,
                    std: s,
                });
            }
            let x_label = if r.experiment == Experiment::Hos {
                "p"
            } else {
                "L"
            };
            line_plot(&title, x_label, &xs, &series)
        }
        Experiment::TradeoffSos | Experiment::TradeoffHos => {
            let mut ps: Vec<f64> = Vec::new();
            let mut inner: Vec<usize> = Vec::new();
            for c in &r.cells {
                let p = c.p().unwrap_or(f64::NAN);
                if !ps.contains(&p) {
                    ps.push(p);
                }
                let k = c.count().unwrap_or(0);
                if !inner.contains(&k) {
                    inner.push(k);
                }
            }
            let inner_label = if r.experiment == Experiment::TradeoffHos {
                "K"
            } else {
                "L"
            };
            heatmap(
                &title,
                inner_label,
                &ps,
                &inner,
                &r.means(),
                &r.frontier,
                r.in_band.as_deref(),
            )
        }
    }
}
