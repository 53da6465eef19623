//! Minimal SVG line charts: raw and smoothed curves, dashed baseline lines,
//! and one horizontal bar per learning-progress threshold under the plot.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const PLOT_HEIGHT: f64 = 280.0;
const BAR_HEIGHT: f64 = 14.0;
const BAR_GAP: f64 = 6.0;
const TICKS: usize = 5;
const PALETTE: [&str; 6] = ["#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

pub struct Threshold {
    pub label: String,
    /// First step reaching the threshold; `None` draws no bar.
    pub step: Option<u64>,
}

pub struct BaselineMark {
    pub label: String,
    pub value: f64,
}

pub struct Chart<'a> {
    pub title: &'a str,
    pub raw: &'a [(u64, f64)],
    pub smoothed: &'a [(u64, f64)],
    pub thresholds: Vec<Threshold>,
    pub baselines: Vec<BaselineMark>,
}

pub fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

struct Scale {
    x0: u64,
    x1: u64,
    y0: f64,
    y1: f64,
}

impl Scale {
    fn x(&self, step: u64) -> f64 {
        let span = (self.x1 - self.x0).max(1) as f64;
        LEFT + (WIDTH - LEFT - RIGHT) * (step - self.x0) as f64 / span
    }

    fn y(&self, v: f64) -> f64 {
        TOP + PLOT_HEIGHT * (1.0 - (v - self.y0) / (self.y1 - self.y0))
    }
}

fn polyline(out: &mut String, scale: &Scale, points: &[(u64, f64)], style: &str) {
    let coords: Vec<String> = points
        .iter()
        .map(|&(s, v)| format!("{:.2},{:.2}", scale.x(s), scale.y(v)))
        .collect();
    writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, coords.join(" ")).expect("string write");
}

/// Render a chart. The y axis spans `[0, 1]`, widened to cover every value.
pub fn line_chart(c: &Chart) -> String {
    let values = c
        .raw
        .iter()
        .chain(c.smoothed)
        .map(|p| p.1)
        .chain(c.baselines.iter().map(|b| b.value));
    let (lo, hi) = values.fold((0.0f64, 1.0f64), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let steps = c.raw.iter().map(|p| p.0);
    let scale = Scale {
        x0: steps.clone().min().unwrap_or(0),
        x1: steps.max().unwrap_or(1),
        y0: lo,
        y1: if hi > lo { hi } else { lo + 1.0 },
    };
    let bars_top = TOP + PLOT_HEIGHT + 40.0;
    let height = bars_top + c.thresholds.len() as f64 * (BAR_HEIGHT + BAR_GAP) + 20.0;
    let (plot_right, plot_bottom) = (WIDTH - RIGHT, TOP + PLOT_HEIGHT);

    let mut s = String::new();
    let w = &mut s;
    writeln!(w, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#).unwrap();
    writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    writeln!(
        w,
        r#"<text x="{}" y="22" font-size="14" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(c.title)
    )
    .unwrap();
    writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{PLOT_HEIGHT}" fill="none" stroke="black"/>"#,
        plot_right - LEFT
    )
    .unwrap();
    for i in 0..=TICKS {
        let v = scale.y0 + (scale.y1 - scale.y0) * i as f64 / TICKS as f64;
        let y = scale.y(v);
        writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{y:.2}" x2="{plot_right}" y2="{y:.2}" stroke="#eeeeee"/>"##
        )
        .unwrap();
        writeln!(
            w,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.2}</text>"#,
            LEFT - 6.0,
            y + 4.0
        )
        .unwrap();
        let step = scale.x0 + (scale.x1 - scale.x0) * i as u64 / TICKS as u64;
        let x = scale.x(step);
        writeln!(
            w,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{step}</text>"#,
            plot_bottom + 16.0
        )
        .unwrap();
    }
    writeln!(
        w,
        r#"<text x="{}" y="{}" text-anchor="middle">parameter updates</text>"#,
        (LEFT + plot_right) / 2.0,
        plot_bottom + 32.0
    )
    .unwrap();

    for (i, b) in c.baselines.iter().enumerate() {
        let (y, color) = (scale.y(b.value), PALETTE[i % PALETTE.len()]);
        writeln!(
            w,
            r#"<line x1="{LEFT}" y1="{y:.2}" x2="{plot_right}" y2="{y:.2}" stroke="{color}" stroke-dasharray="6,4"/>"#
        )
        .unwrap();
        writeln!(
            w,
            r#"<text x="{}" y="{:.2}" fill="{color}">{}</text>"#,
            plot_right + 6.0,
            y + 4.0,
            escape(&b.label)
        )
        .unwrap();
    }
    polyline(w, &scale, c.raw, r##"stroke="#9ecae1" stroke-width="1.5""##);
    polyline(w, &scale, c.smoothed, r##"stroke="#1f77b4" stroke-width="2.5""##);
    let legend = [("#9ecae1", "raw"), ("#1f77b4", "smoothed")];
    for (i, (color, label)) in legend.iter().enumerate() {
        let y = TOP + 12.0 + 16.0 * i as f64;
        writeln!(
            w,
            r#"<line x1="{}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2.5"/>"#,
            LEFT + 8.0,
            LEFT + 28.0
        )
        .unwrap();
        writeln!(w, r#"<text x="{}" y="{}">{label}</text>"#, LEFT + 32.0, y + 4.0).unwrap();
    }

    for (i, t) in c.thresholds.iter().enumerate() {
        let y = bars_top + i as f64 * (BAR_HEIGHT + BAR_GAP);
        writeln!(
            w,
            r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + BAR_HEIGHT - 3.0,
            escape(&t.label)
        )
        .unwrap();
        match t.step {
            Some(step) => {
                let x = scale.x(step);
                writeln!(
                    w,
                    r##"<rect x="{LEFT}" y="{y:.2}" width="{:.2}" height="{BAR_HEIGHT}" fill="#ff7f0e"/>"##,
                    x - LEFT
                )
                .unwrap();
                writeln!(
                    w,
                    r#"<text x="{:.2}" y="{:.2}">{step}</text>"#,
                    x + 4.0,
                    y + BAR_HEIGHT - 3.0
                )
                .unwrap();
            }
            None => {
                writeln!(
                    w,
                    r#"<text x="{}" y="{:.2}">undefined</text>"#,
                    LEFT + 4.0,
                    y + BAR_HEIGHT - 3.0
                )
                .unwrap();
            }
        }
    }
    writeln!(w, "</svg>").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_has_curves_bars_and_dashed_baselines() {
        let raw = [(0, 0.1), (100, 0.8), (200, 1.0)];
        let chart = Chart {
            title: "a<b",
            raw: &raw,
            smoothed: &[(0, 0.1), (100, 0.45), (200, 0.725)],
            thresholds: vec![
                Threshold {
                    label: "LP-90%".into(),
                    step: Some(200),
                },
                Threshold {
                    label: "LP-97%".into(),
                    step: None,
                },
            ],
            baselines: vec![BaselineMark {
                label: "random guess".into(),
                value: 0.5,
            }],
        };
        let svg = line_chart(&chart);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 1);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.contains("undefined"));
        // The LP-90% bar spans the whole plot width because step 200 is the last step.
        assert!(svg.contains(&format!(r#"width="{:.2}""#, WIDTH - LEFT - RIGHT)));
    }

    #[test]
    fn single_point_series_renders() {
        let raw = [(0, 0.0)];
        let svg = line_chart(&Chart {
            title: "t",
            raw: &raw,
            smoothed: &raw,
            thresholds: vec![],
            baselines: vec![],
        });
        assert!(!svg.contains("NaN"));
    }
}
