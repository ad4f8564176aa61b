//! Self-contained SVG plots: log-log decay curves with a fitted line,
//! level bar charts, and convergence curves. No external assets; identical
//! inputs produce identical bytes.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 55.0;

const SERIES_COLORS: [&str; 6] = [
    "#4878a8", "#b05050", "#509060", "#a08030", "#7858a0", "#508890",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Index into the fixed color palette; `None` draws thin gray.
    pub color: Option<usize>,
    pub dashed: bool,
}

#[derive(Debug, Clone)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub series: Vec<Series>,
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e4 || a < 1e-3 {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

fn map(v: f64, scale: Scale, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    let (v, lo, hi) = match scale {
        Scale::Linear => (v, lo, hi),
        Scale::Log => (v.max(1e-300).log10(), lo.max(1e-300).log10(), hi.max(1e-300).log10()),
    };
    if (hi - lo).abs() < 1e-300 {
        return 0.5 * (out_lo + out_hi);
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

fn ticks(scale: Scale, lo: f64, hi: f64) -> Vec<f64> {
    match scale {
        Scale::Log => {
            let d0 = lo.max(1e-300).log10().floor() as i32;
            let d1 = hi.max(1e-300).log10().ceil() as i32;
            (d0..=d1).map(|d| 10f64.powi(d)).collect()
        }
        Scale::Linear => {
            let n = 5;
            (0..=n)
                .map(|k| lo + (hi - lo) * k as f64 / n as f64)
                .collect()
        }
    }
}

impl LinePlot {
    pub fn render(&self) -> String {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                let ok = match (self.x_scale, self.y_scale) {
                    (Scale::Log, _) if x <= 0.0 => false,
                    (_, Scale::Log) if y <= 0.0 => false,
                    _ => true,
                };
                if ok && x.is_finite() && y.is_finite() {
                    pts.push((x, y));
                }
            }
        }
        let (x_lo, x_hi) = pts
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &(x, _)| (lo.min(x), hi.max(x)));
        let (y_lo, y_hi) = pts
            .iter()
            .fold((f64::MAX, f64::MIN), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
        let (x_lo, x_hi) = if pts.is_empty() { (0.0, 1.0) } else { (x_lo, x_hi) };
        let (y_lo, y_hi) = if pts.is_empty() { (0.0, 1.0) } else { (y_lo, y_hi) };

        let px = |x: f64| map(x, self.x_scale, x_lo, x_hi, MARGIN_L, WIDTH - MARGIN_R);
        let py = |y: f64| map(y, self.y_scale, y_lo, y_hi, HEIGHT - MARGIN_B, MARGIN_T);

        let mut svg = String::new();
        let _ = write!(
            svg,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
             viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
             <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
        );
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"15\" \
             text-anchor=\"middle\">{}</text>\n",
            WIDTH / 2.0,
            self.title
        );
        // axes
        let _ = write!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{MARGIN_T}\" x2=\"{MARGIN_L}\" y2=\"{:.1}\" \
             stroke=\"black\"/>\n<line x1=\"{MARGIN_L}\" y1=\"{0:.1}\" x2=\"{1:.1}\" \
             y2=\"{0:.1}\" stroke=\"black\"/>\n",
            HEIGHT - MARGIN_B,
            WIDTH - MARGIN_R
        );
        for t in ticks(self.x_scale, x_lo, x_hi) {
            if t < x_lo * 0.999 || t > x_hi * 1.001 {
                continue;
            }
            let x = px(t);
            let _ = write!(
                svg,
                "<line x1=\"{x:.1}\" y1=\"{0:.1}\" x2=\"{x:.1}\" y2=\"{1:.1}\" stroke=\"#cccccc\"/>\n\
                 <text x=\"{x:.1}\" y=\"{2:.1}\" font-family=\"monospace\" font-size=\"11\" \
                 text-anchor=\"middle\">{3}</text>\n",
                HEIGHT - MARGIN_B,
                MARGIN_T,
                HEIGHT - MARGIN_B + 18.0,
                fmt_tick(t)
            );
        }
        for t in ticks(self.y_scale, y_lo, y_hi) {
            if t < y_lo * 0.999 || t > y_hi * 1.001 {
                continue;
            }
            let y = py(t);
            let _ = write!(
                svg,
                "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{0:.1}\" y2=\"{y:.1}\" stroke=\"#cccccc\"/>\n\
                 <text x=\"{1:.1}\" y=\"{2:.1}\" font-family=\"monospace\" font-size=\"11\" \
                 text-anchor=\"end\">{3}</text>\n",
                WIDTH - MARGIN_R,
                MARGIN_L - 6.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = write!(
            svg,
            "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">{}</text>\n",
            (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
            HEIGHT - 12.0,
            self.x_label
        );
        let _ = write!(
            svg,
            "<text x=\"16\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\" transform=\"rotate(-90 16 {:.1})\">{}</text>\n",
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
            self.y_label
        );
        // series
        for s in &self.series {
            let coords: Vec<String> = s
                .points
                .iter()
                .filter(|&&(x, y)| {
                    x.is_finite()
                        && y.is_finite()
                        && (self.x_scale != Scale::Log || x > 0.0)
                        && (self.y_scale != Scale::Log || y > 0.0)
                })
                .map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y)))
                .collect();
            if coords.is_empty() {
                continue;
            }
            let (stroke, width) = match s.color {
                Some(c) => (SERIES_COLORS[c % SERIES_COLORS.len()], 1.6),
                None => ("#bbbbbb", 0.8),
            };
            let dash = if s.dashed { " stroke-dasharray=\"6 4\"" } else { "" };
            let _ = write!(
                svg,
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{stroke}\" \
                 stroke-width=\"{width}\"{dash}/>\n",
                coords.join(" ")
            );
        }
        // legend for labeled series
        let mut ly = MARGIN_T + 8.0;
        for s in self.series.iter().filter(|s| !s.label.is_empty()) {
            let stroke = match s.color {
                Some(c) => SERIES_COLORS[c % SERIES_COLORS.len()],
                None => "#bbbbbb",
            };
            let _ = write!(
                svg,
                "<line x1=\"{0:.1}\" y1=\"{ly:.1}\" x2=\"{1:.1}\" y2=\"{ly:.1}\" \
                 stroke=\"{stroke}\" stroke-width=\"2\"/>\n\
                 <text x=\"{2:.1}\" y=\"{3:.1}\" font-family=\"monospace\" \
                 font-size=\"11\">{4}</text>\n",
                WIDTH - MARGIN_R - 150.0,
                WIDTH - MARGIN_R - 125.0,
                WIDTH - MARGIN_R - 118.0,
                ly + 4.0,
                s.label
            );
            ly += 16.0;
        }
        svg.push_str("</svg>\n");
        svg
    }
}

/// Grouped bar chart (two bars per level) on a log y-axis.
pub fn render_gain_bars(
    title: &str,
    levels: &[usize],
    raw: &[f64],
    smoothed: &[f64],
) -> String {
    let mut svg = String::new();
    let _ = write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"monospace\" font-size=\"15\" \
         text-anchor=\"middle\">{title}</text>\n",
        WIDTH / 2.0
    );
    let all_max = raw
        .iter()
        .chain(smoothed.iter())
        .cloned()
        .fold(1e-300f64, f64::max);
    let all_min = raw
        .iter()
        .chain(smoothed.iter())
        .cloned()
        .filter(|&v| v > 0.0)
        .fold(all_max, f64::min);
    let y_lo = (all_min / 2.0).max(1e-300);
    let y_hi = all_max * 1.5;
    let py = |v: f64| map(v, Scale::Log, y_lo, y_hi, HEIGHT - MARGIN_B, MARGIN_T);
    let base = HEIGHT - MARGIN_B;
    let nl = levels.len().max(1) as f64;
    let group_w = (WIDTH - MARGIN_L - MARGIN_R) / nl;
    let bar_w = group_w * 0.32;
    for t in ticks(Scale::Log, y_lo, y_hi) {
        let y = py(t);
        let _ = write!(
            svg,
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{0:.1}\" y2=\"{y:.1}\" stroke=\"#dddddd\"/>\n\
             <text x=\"{1:.1}\" y=\"{2:.1}\" font-family=\"monospace\" font-size=\"11\" \
             text-anchor=\"end\">{3}</text>\n",
            WIDTH - MARGIN_R,
            MARGIN_L - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    for (k, &level) in levels.iter().enumerate() {
        let cx = MARGIN_L + group_w * (k as f64 + 0.5);
        for (which, (vals, color)) in
            [(raw, SERIES_COLORS[0]), (smoothed, SERIES_COLORS[2])].iter().enumerate()
        {
            let Some(&v) = vals.get(k) else { continue };
            if v <= 0.0 {
                continue;
            }
            let x = cx - bar_w + which as f64 * bar_w;
            let y = py(v);
            let _ = write!(
                svg,
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{:.1}\" \
                 fill=\"{color}\"/>\n",
                base - y
            );
        }
        let _ = write!(
            svg,
            "<text x=\"{cx:.1}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"12\" \
             text-anchor=\"middle\">{level}</text>\n",
            base + 18.0
        );
    }
    let _ = write!(
        svg,
        "<text x=\"{MARGIN_L}\" y=\"{:.1}\" font-family=\"monospace\" font-size=\"11\">\
         raw gain (blue) / smoothed (green), per refinement level</text>\n",
        MARGIN_T - 6.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_plot() -> LinePlot {
        let times: Vec<f64> = (1..50).map(|k| 1e-3 * k as f64).collect();
        let mk = |c: f64| -> Vec<(f64, f64)> {
            times.iter().map(|&t| (t, c * t.powf(-0.25))).collect()
        };
        LinePlot {
            title: "decay".into(),
            x_label: "t".into(),
            y_label: "trace".into(),
            x_scale: Scale::Log,
            y_scale: Scale::Log,
            series: vec![
                Series {
                    label: String::new(),
                    points: mk(0.9),
                    color: None,
                    dashed: false,
                },
                Series {
                    label: String::new(),
                    points: mk(1.1),
                    color: None,
                    dashed: false,
                },
                Series {
                    label: "fit".into(),
                    points: mk(1.2),
                    color: Some(1),
                    dashed: true,
                },
            ],
        }
    }

    #[test]
    fn decay_plot_has_one_polyline_per_series() {
        let svg = decay_plot().render();
        let count = svg.matches("<polyline").count();
        assert_eq!(count, 3);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(!svg.contains("http://") || svg.contains("xmlns"), "no external refs");
    }

    #[test]
    fn identical_inputs_render_identical_bytes() {
        let a = decay_plot().render();
        let b = decay_plot().render();
        assert_eq!(a, b);
        let bars = render_gain_bars("gains", &[16, 32], &[1.0, 2.0], &[1.0, 1.02]);
        let bars2 = render_gain_bars("gains", &[16, 32], &[1.0, 2.0], &[1.0, 1.02]);
        assert_eq!(bars, bars2);
        assert!(bars.matches("<rect").count() >= 4);
    }
}
