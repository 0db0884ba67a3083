//! SVG charts rendered from CSV outputs only.
//!
//! Every number is printed with fixed precision and series are drawn in a
//! fixed order, so plotting unchanged CSVs yields identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::sim::metrics::read_metrics_csv;
use crate::sim::sweep::{read_attackers_csv, read_scaling_csv};

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let pts = series.iter().flat_map(|s| s.points.iter()).filter(|p| p.0.is_finite() && p.1.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    y0 = y0.min(0.0);
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    (x0, x1, y0, y1)
}

impl LineChart {
    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = bounds(&self.series);
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut out = header(&self.title);
        axes(&mut out, &self.x_label, &self.y_label);
        for i in 0..=4 {
            let fx = x0 + (x1 - x0) * i as f64 / 4.0;
            let fy = y0 + (y1 - y0) * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                sx(fx),
                TOP + ph + 16.0,
                tick(fx)
            );
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                sy(fy) + 4.0,
                tick(fy)
            );
        }
        for (i, s) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                pts.join(" ")
            );
            legend(&mut out, i, color, &s.label);
        }
        out.push_str("</svg>\n");
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BarChart {
    pub title: String,
    pub y_label: String,
    /// Category labels along the x axis.
    pub groups: Vec<String>,
    /// One entry per bar series; `values[g]` is the bar in group `g`.
    pub series: Vec<(String, Vec<Option<f64>>)>,
}

impl BarChart {
    pub fn to_svg(&self) -> String {
        let max = self
            .series
            .iter()
            .flat_map(|s| s.1.iter().flatten())
            .copied()
            .filter(|v| v.is_finite())
            .fold(0.0f64, f64::max);
        let y1 = if max > 0.0 { max } else { 1.0 };
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sy = |y: f64| TOP + ph - y / y1 * ph;
        let gw = pw / self.groups.len().max(1) as f64;
        let bw = gw * 0.8 / self.series.len().max(1) as f64;

        let mut out = header(&self.title);
        axes(&mut out, "", &self.y_label);
        for i in 0..=4 {
            let fy = y1 * i as f64 / 4.0;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 6.0,
                sy(fy) + 4.0,
                tick(fy)
            );
        }
        for (g, name) in self.groups.iter().enumerate() {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                LEFT + gw * (g as f64 + 0.5),
                TOP + ph + 16.0,
                escape(name)
            );
        }
        for (i, (label, values)) in self.series.iter().enumerate() {
            let color = COLORS[i % COLORS.len()];
            for (g, v) in values.iter().enumerate() {
                let x = LEFT + gw * g as f64 + gw * 0.1 + bw * i as f64;
                match v.filter(|v| v.is_finite()) {
                    Some(v) => {
                        let _ = writeln!(
                            out,
                            r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                            x,
                            sy(v),
                            bw,
                            TOP + ph - sy(v)
                        );
                    }
                    None => {
                        let _ = writeln!(
                            out,
                            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" fill="{color}">n/c</text>"#,
                            x + bw / 2.0,
                            TOP + ph - 4.0
                        );
                    }
                }
            }
            legend(&mut out, i, color, label);
        }
        out.push_str("</svg>\n");
        out
    }
}

fn header(title: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        (W - RIGHT + LEFT) / 2.0,
        escape(title)
    );
    out
}

fn axes(out: &mut String, x_label: &str, y_label: &str) {
    let (x_end, y_end) = (W - RIGHT, H - BOTTOM);
    let _ = writeln!(
        out,
        r#"<path d="M{LEFT} {TOP} V{y_end} H{x_end}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (LEFT + x_end) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        (TOP + y_end) / 2.0,
        (TOP + y_end) / 2.0,
        escape(y_label)
    );
}

fn legend(out: &mut String, i: usize, color: &str, label: &str) {
    let y = TOP + 10.0 + 18.0 * i as f64;
    let x = W - RIGHT + 12.0;
    let _ = writeln!(
        out,
        r#"<rect x="{x:.2}" y="{:.2}" width="12" height="4" fill="{color}"/>"#,
        y - 4.0
    );
    let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, x + 18.0, y + 2.0, escape(label));
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

/// Label for a metrics file: its parent directory name, else its stem.
fn run_label(path: &Path) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .or_else(|| path.file_stem())
        .map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
}

/// Loss against simulated time, one line per metrics CSV.
pub fn loss_chart(metrics: &[&Path]) -> Result<LineChart> {
    let mut series = Vec::new();
    for path in metrics {
        let rows = read_metrics_csv(path)?;
        series.push(Series {
            label: run_label(path),
            points: rows.iter().map(|r| (r.sim_time_ms / 1000.0, r.loss)).collect(),
        });
    }
    Ok(LineChart {
        title: "Loss over time".into(),
        x_label: "simulated time (s)".into(),
        y_label: "loss".into(),
        series,
    })
}

/// Mean per-round delay of each miner role against network size.
pub fn scaling_chart(scaling_csv: &Path) -> Result<LineChart> {
    let points = read_scaling_csv(scaling_csv)?;
    let mut by_size: BTreeMap<u32, (f64, f64, usize)> = BTreeMap::new();
    for p in &points {
        let e = by_size.entry(p.workers).or_default();
        e.0 += p.mon_busy_mean_ms;
        e.1 += p.fl_delay_mean_ms;
        e.2 += 1;
    }
    let mean = |f: fn(&(f64, f64, usize)) -> f64| {
        by_size
            .iter()
            .map(|(w, e)| (*w as f64, f(e) / e.2 as f64))
            .collect::<Vec<_>>()
    };
    Ok(LineChart {
        title: "Per-round delay by network size".into(),
        x_label: "workers".into(),
        y_label: "delay (ms)".into(),
        series: vec![
            Series {
                label: "minersMON busy".into(),
                points: mean(|e| e.0),
            },
            Series {
                label: "minersFL delay".into(),
                points: mean(|e| e.1),
            },
        ],
    })
}

/// Mean convergence time per mode and attacker count. Groups where any seed
/// failed to converge are shown as `n/c`.
pub fn attackers_chart(attackers_csv: &Path) -> Result<BarChart> {
    let points = read_attackers_csv(attackers_csv)?;
    let mut counts: Vec<u32> = points.iter().map(|p| p.attackers).collect();
    counts.sort_unstable();
    counts.dedup();
    let mut modes = Vec::new();
    for p in &points {
        if !modes.contains(&p.mode) {
            modes.push(p.mode);
        }
    }
    let series = modes
        .iter()
        .map(|&mode| {
            let values = counts
                .iter()
                .map(|&k| {
                    let times: Option<Vec<f64>> = points
                        .iter()
                        .filter(|p| p.mode == mode && p.attackers == k)
                        .map(|p| p.convergence_time_ms)
                        .collect();
                    times.filter(|t| !t.is_empty()).map(|t| t.iter().sum::<f64>() / t.len() as f64 / 1000.0)
                })
                .collect();
            (mode.to_string(), values)
        })
        .collect();
    Ok(BarChart {
        title: "Convergence time by number of attackers".into(),
        y_label: "convergence time (s)".into(),
        groups: counts.iter().map(|k| format!("{k} attacker{}", if *k == 1 { "" } else { "s" })).collect(),
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_stable_and_well_formed() {
        let c = LineChart {
            title: "t <x>".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            series: vec![Series {
                label: "a".into(),
                points: vec![(0.0, 1.0), (1.0, 0.5), (2.0, f64::NAN)],
            }],
        };
        let a = c.to_svg();
        assert_eq!(a, c.to_svg());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("t &lt;x&gt;"));
        assert!(!a.contains("NaN"));
    }

    #[test]
    fn bar_chart_marks_missing_values() {
        let c = BarChart {
            title: "b".into(),
            y_label: "s".into(),
            groups: vec!["1".into(), "2".into()],
            series: vec![("m".into(), vec![Some(3.0), None])],
        };
        let svg = c.to_svg();
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("n/c"));
    }
}
