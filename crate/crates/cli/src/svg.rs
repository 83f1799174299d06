//! Minimal SVG 1.1 line chart: one mean curve plus a shaded band per series.

use std::fmt::Write;

use crate::commands::CurveSet;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
/// Points drawn per curve at most.
const MAX_POINTS: usize = 500;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f",
];

struct Axes {
    horizon: usize,
    y_max: f64,
    log_x: bool,
}

impl Axes {
    fn x(&self, t: usize) -> f64 {
        let frac = if self.horizon <= 1 {
            0.0
        } else if self.log_x {
            (t as f64).ln() / (self.horizon as f64).ln()
        } else {
            (t - 1) as f64 / (self.horizon - 1) as f64
        };
        LEFT + frac * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, value: f64) -> f64 {
        let frac = (value / self.y_max).clamp(0.0, 1.0);
        HEIGHT - BOTTOM - frac * (HEIGHT - TOP - BOTTOM)
    }
}

/// Steps to draw: a thinned, always-increasing subset of `1..=horizon` that
/// includes both endpoints.
fn sample_steps(horizon: usize, log_x: bool) -> Vec<usize> {
    if horizon <= MAX_POINTS {
        return (1..=horizon).collect();
    }
    let mut steps: Vec<usize> = (0..MAX_POINTS)
        .map(|i| {
            let f = i as f64 / (MAX_POINTS - 1) as f64;
            let t = if log_x {
                (horizon as f64).powf(f)
            } else {
                1.0 + f * (horizon - 1) as f64
            };
            (t.round() as usize).clamp(1, horizon)
        })
        .collect();
    steps.dedup();
    steps
}

fn nice_ceiling(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= v {
            return m * mag;
        }
    }
    10.0 * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

pub fn render(sets: &[CurveSet], title: &str, log_x: bool) -> String {
    let horizon = sets.iter().map(|s| s.curves.horizon()).max().unwrap_or(1);
    let top = sets
        .iter()
        .flat_map(|s| (1..=s.curves.horizon()).map(move |t| s.curves.ci_high(t)))
        .fold(0.0, f64::max);
    let axes = Axes {
        horizon,
        y_max: nice_ceiling(top),
        log_x,
    };
    let steps = sample_steps(horizon, log_x);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<?xml version="1.0" encoding="UTF-8"?>
<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
        escape(title)
    );

    // Axes and ticks.
    let (x0, x1) = (LEFT, WIDTH - RIGHT);
    let (y0, y1) = (HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        out,
        r#"<path d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" stroke="black" fill="none"/>"#
    );
    for i in 0..=5 {
        let v = axes.y_max * i as f64 / 5.0;
        let y = axes.y(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            x0,
            x0 - 6.0,
            y + 4.0,
            format_tick(v)
        );
    }
    for t in x_ticks(horizon, log_x) {
        let x = axes.x(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{t}</text>"#,
            y0 + 5.0,
            y0 + 18.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">t{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0,
        if log_x { " (log scale)" } else { "" }
    );
    let _ = writeln!(
        out,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">mean cumulative regret</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );

    for (i, set) in sets.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let c = &set.curves;
        let pts: Vec<usize> = steps
            .iter()
            .copied()
            .filter(|&t| t <= c.horizon())
            .collect();
        let mut band = String::new();
        for &t in &pts {
            let _ = write!(band, "{:.1},{:.1} ", axes.x(t), axes.y(c.ci_high(t)));
        }
        for &t in pts.iter().rev() {
            let _ = write!(band, "{:.1},{:.1} ", axes.x(t), axes.y(c.ci_low(t)));
        }
        let _ = writeln!(
            out,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let mut line = String::new();
        for &t in &pts {
            let _ = write!(line, "{:.1},{:.1} ", axes.x(t), axes.y(c.mean[t - 1]));
        }
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.trim_end()
        );
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            out,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            x1 + 15.0,
            x1 + 40.0,
            x1 + 46.0,
            ly + 4.0,
            escape(&set.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn x_ticks(horizon: usize, log_x: bool) -> Vec<usize> {
    if log_x {
        let mut ticks = vec![1];
        let mut t = 10;
        while t <= horizon {
            ticks.push(t);
            t *= 10;
        }
        ticks
    } else {
        let step = nice_ceiling(horizon as f64 / 5.0).max(1.0) as usize;
        let mut ticks = vec![1];
        ticks.extend((1..).map(|i| i * step).take_while(|&t| t <= horizon));
        ticks
    }
}

fn format_tick(v: f64) -> String {
    if v >= 100.0 || v == v.trunc() {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}
