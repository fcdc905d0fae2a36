//! Minimal dependency-free SVG rendering for quick looks at run products.
//!
//! The `.dat` files written next to these are the real plotting inputs;
//! these pictures are only meant to be opened in a browser.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mark {
    Line(f64),
    Dots(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub color: &'static str,
    pub mark: Mark,
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn fit<'a>(points: impl Iterator<Item = &'a (f64, f64)>) -> Self {
        let mut f = Frame {
            x0: f64::INFINITY,
            x1: f64::NEG_INFINITY,
            y0: f64::INFINITY,
            y1: f64::NEG_INFINITY,
        };
        for &(x, y) in points.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            f.x0 = f.x0.min(x);
            f.x1 = f.x1.max(x);
            f.y0 = f.y0.min(y);
            f.y1 = f.y1.max(y);
        }
        if !f.x0.is_finite() {
            return Frame {
                x0: 0.0,
                x1: 1.0,
                y0: 0.0,
                y1: 1.0,
            };
        }
        if f.x1 <= f.x0 {
            f.x1 = f.x0 + 1.0;
        }
        if f.y1 <= f.y0 {
            f.y1 = f.y0 + 1.0;
        }
        f
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn header(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">{}</text>",
        WIDTH / 2.0,
        escape(title)
    );
    s
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        "<rect x=\"{l}\" y=\"{t}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>",
        r - l,
        b - t
    );
    let _ = writeln!(
        s,
        "<text x=\"{l}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        b + 16.0,
        tick(f.x0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{r}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        b + 16.0,
        tick(f.x1)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
        l - 4.0,
        b,
        tick(f.y0)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{}</text>",
        l - 4.0,
        t + 10.0,
        tick(f.y1)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>",
        WIDTH / 2.0,
        HEIGHT - 18.0,
        escape(xlabel)
    );
    let _ = writeln!(
        s,
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>",
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{:.3}", v)
            .trim_end_matches('0')
            .trim_end_matches('.')
            .to_string()
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Lines and scatter series on shared axes. Non-finite points are skipped
/// and break lines.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let frame = Frame::fit(series.iter().flat_map(|s| s.points.iter()));
    let mut s = header(title);
    axes(&mut s, &frame, xlabel, ylabel);
    for (k, ser) in series.iter().enumerate() {
        match ser.mark {
            Mark::Line(width) => {
                for run in ser.points.split(|(x, y)| !(x.is_finite() && y.is_finite())) {
                    if run.len() < 2 {
                        continue;
                    }
                    let pts: Vec<String> = run
                        .iter()
                        .map(|&(x, y)| format!("{:.1},{:.1}", frame.px(x), frame.py(y)))
                        .collect();
                    let _ = writeln!(
                        s,
                        "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"{width}\" points=\"{}\"/>",
                        ser.color,
                        pts.join(" ")
                    );
                }
            }
            Mark::Dots(radius) => {
                for &(x, y) in ser
                    .points
                    .iter()
                    .filter(|(x, y)| x.is_finite() && y.is_finite())
                {
                    let _ = writeln!(
                        s,
                        "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"{radius}\" fill=\"{}\"/>",
                        frame.px(x),
                        frame.py(y),
                        ser.color
                    );
                }
            }
        }
        if !ser.label.is_empty() {
            let y = MARGIN + 16.0 + 16.0 * k as f64;
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{y}\" text-anchor=\"end\" fill=\"{}\">{}</text>",
                WIDTH - MARGIN - 8.0,
                ser.color,
                escape(&ser.label)
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// One bar per rank, with the flat expectation as a dashed line.
pub fn bar_chart(title: &str, counts: &[u64]) -> String {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len().max(1) as f64;
    let top = counts.iter().copied().max().unwrap_or(0) as f64;
    let frame = Frame::fit([(0.0, 0.0), (counts.len() as f64, top.max(expected) * 1.05)].iter());
    let mut s = header(title);
    axes(&mut s, &frame, "rank", "count");
    let w = frame.px(1.0) - frame.px(0.0);
    for (i, &c) in counts.iter().enumerate() {
        let y = frame.py(c as f64);
        let _ = writeln!(
            s,
            "<rect x=\"{:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"steelblue\"/>",
            frame.px(i as f64) + 0.1 * w,
            0.8 * w,
            frame.py(0.0) - y
        );
    }
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN}\" x2=\"{}\" y1=\"{1:.1}\" y2=\"{1:.1}\" stroke=\"black\" stroke-dasharray=\"4 3\"/>",
        WIDTH - MARGIN,
        frame.py(expected)
    );
    s.push_str("</svg>\n");
    s
}

/// A field `rows[t][x]` as a diverging colour map, averaged down to at most
/// `max_rows × max_cols` cells.
pub fn heatmap(
    title: &str,
    xlabel: &str,
    ylabel: &str,
    extent: [f64; 4],
    rows: &[Vec<f64>],
    max_rows: usize,
    max_cols: usize,
) -> String {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    let out_r = nr.min(max_rows).max(1);
    let out_c = nc.min(max_cols).max(1);
    let mut cells = vec![vec![0.0; out_c]; out_r];
    let mut counts = vec![vec![0usize; out_c]; out_r];
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let (a, b) = (i * out_r / nr.max(1), j * out_c / nc.max(1));
            cells[a][b] += v;
            counts[a][b] += 1;
        }
    }
    let mut scale: f64 = 0.0;
    for (crow, nrow) in cells.iter_mut().zip(&counts) {
        for (c, &n) in crow.iter_mut().zip(nrow) {
            *c /= n.max(1) as f64;
            scale = scale.max(c.abs());
        }
    }
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let frame = Frame {
        x0: extent[0],
        x1: extent[1],
        y0: extent[2],
        y1: extent[3],
    };
    let mut s = header(title);
    let cw = (WIDTH - 2.0 * MARGIN) / out_c as f64;
    let ch = (HEIGHT - 2.0 * MARGIN) / out_r as f64;
    for (a, crow) in cells.iter().enumerate() {
        for (b, &v) in crow.iter().enumerate() {
            let _ = writeln!(
                s,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"{}\"/>",
                MARGIN + b as f64 * cw,
                HEIGHT - MARGIN - (a + 1) as f64 * ch,
                cw + 0.3,
                ch + 0.3,
                diverging(v / scale)
            );
        }
    }
    axes(&mut s, &frame, xlabel, ylabel);
    s.push_str("</svg>\n");
    s
}

/// Blue for −1, white for 0, red for +1.
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let fade = |c: f64| (255.0 * (1.0 - v.abs()) + c * v.abs()).round() as u8;
    if v >= 0.0 {
        format!("#{:02x}{:02x}{:02x}", fade(178.0), fade(24.0), fade(43.0))
    } else {
        format!("#{:02x}{:02x}{:02x}", fade(33.0), fade(102.0), fade(172.0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colour_map_endpoints() {
        assert_eq!(diverging(0.0), "#ffffff");
        assert_eq!(diverging(1.0), "#b2182b");
        assert_eq!(diverging(-5.0), "#2166ac");
    }

    #[test]
    fn charts_are_well_formed() {
        let s = line_chart(
            "a < b",
            "t",
            "y",
            &[Series {
                label: "x".into(),
                points: vec![(0.0, 1.0), (1.0, f64::NAN), (2.0, 3.0), (3.0, 4.0)],
                color: "black",
                mark: Mark::Line(1.0),
            }],
        );
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a &lt; b"));
        // the NaN splits the series; the lone first point draws nothing
        assert_eq!(s.matches("<polyline").count(), 1);

        let b = bar_chart("ranks", &[1, 2, 3]);
        assert_eq!(b.matches("fill=\"steelblue\"").count(), 3);

        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| (0..30).map(|j| (i * j) as f64).collect())
            .collect();
        let h = heatmap("u", "x", "t", [0.0, 1.0, 0.0, 1.0], &rows, 5, 6);
        assert_eq!(h.matches("<rect x=").count(), 30 + 1);
    }
}
