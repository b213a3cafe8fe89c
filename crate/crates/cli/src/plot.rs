//! Standalone SVG line plots. The plotted table is embedded in a comment so
//! the figure can be regenerated from the file alone.

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stroke {
    Solid,
    Dashed,
    Dotted,
}

impl Stroke {
    fn dasharray(self) -> &'static str {
        match self {
            Stroke::Solid => "",
            Stroke::Dashed => " stroke-dasharray=\"8 4\"",
            Stroke::Dotted => " stroke-dasharray=\"2 3\"",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Stroke::Solid => "solid",
            Stroke::Dashed => "dashed",
            Stroke::Dotted => "dotted",
        }
    }
}

pub struct Series {
    pub name: String,
    pub values: Vec<Option<f64>>,
    pub stroke: Stroke,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 3] = ["#1f4e79", "#a23b2a", "#3b7a3b"];

/// Line plot of several series over a shared x axis. Missing values break
/// the line. Returns `None` when nothing is finite.
pub fn line_plot(title: &str, x_label: &str, y_label: &str, x: &[f64], series: &[Series]) -> Option<String> {
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().flatten().copied())
        .filter(|v| v.is_finite())
        .collect();
    if x.is_empty() || finite.is_empty() {
        return None;
    }
    let (x0, x1) = (x[0], x[x.len() - 1]);
    let mut y0 = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let mut y1 = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let span_x = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |v: f64| MARGIN + (v - x0) / span_x * (WIDTH - 2.0 * MARGIN);
    let py = |v: f64| HEIGHT - MARGIN - (v - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    )
    .unwrap();
    svg.push_str("<!-- data\nx");
    for s in series {
        write!(svg, ",{}", s.name).unwrap();
    }
    svg.push('\n');
    for (i, xv) in x.iter().enumerate() {
        write!(svg, "{xv}").unwrap();
        for s in series {
            match s.values.get(i).copied().flatten() {
                Some(v) => write!(svg, ",{v}").unwrap(),
                None => svg.push_str(",NA"),
            }
        }
        svg.push('\n');
    }
    svg.push_str("-->\n");
    writeln!(svg, "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>").unwrap();
    writeln!(
        svg,
        "<text x=\"{}\" y=\"28\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    )
    .unwrap();
    writeln!(
        svg,
        "<path d=\"M{m} {t} L{m} {b} L{r} {b}\" fill=\"none\" stroke=\"black\"/>",
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    )
    .unwrap();
    for (v, anchor_y) in [(y0, py(y0)), (y1, py(y1))] {
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            MARGIN - 6.0,
            anchor_y + 4.0,
            short(v)
        )
        .unwrap();
    }
    for (v, anchor_x) in [(x0, px(x0)), (x1, px(x1))] {
        writeln!(
            svg,
            "<text x=\"{anchor_x:.1}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            HEIGHT - MARGIN + 16.0,
            short(v)
        )
        .unwrap();
    }
    writeln!(
        svg,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    )
    .unwrap();
    writeln!(
        svg,
        "<text x=\"18\" y=\"{}\" transform=\"rotate(-90 18 {})\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    )
    .unwrap();

    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = String::new();
        let mut pen_down = false;
        for (i, v) in s.values.iter().enumerate().take(x.len()) {
            match v {
                Some(v) if v.is_finite() => {
                    write!(d, "{}{:.2} {:.2} ", if pen_down { "L" } else { "M" }, px(x[i]), py(*v)).unwrap();
                    pen_down = true;
                }
                _ => pen_down = false,
            }
        }
        writeln!(
            svg,
            "<path d=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"{}/>",
            d.trim_end(),
            s.stroke.dasharray()
        )
        .unwrap();
        let ly = MARGIN + 16.0 * k as f64;
        let lx = WIDTH - MARGIN - 170.0;
        writeln!(
            svg,
            "<line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"1.5\"{}/>",
            lx + 24.0,
            s.stroke.dasharray()
        )
        .unwrap();
        writeln!(
            svg,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{} ({})</text>",
            lx + 30.0,
            ly + 4.0,
            escape(&s.name),
            s.stroke.label()
        )
        .unwrap();
    }
    svg.push_str("</svg>\n");
    Some(svg)
}

fn short(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
