//! Static SVG rendering of data products. Output is a pure function of the
//! table and its sidecar.

use std::fmt::Write;

use super::products::{PlotKind, ProductMeta, Table};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const RIGHT: f64 = 24.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn fmt(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" {
        "0.00".into()
    } else {
        s
    }
}

fn tick_label(v: f64) -> String {
    let a = v.abs();
    let s = if a != 0.0 && !(1e-3..1e5).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    };
    if s.contains('.') && !s.contains('e') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[derive(Clone, Copy)]
struct Scale {
    lo: f64,
    hi: f64,
    a: f64,
    b: f64,
}

impl Scale {
    fn new(values: impl Iterator<Item = f64>, a: f64, b: f64) -> Self {
        let (mut lo, mut hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        Self { lo, hi, a, b }
    }

    fn map(&self, v: f64) -> f64 {
        self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * f64::from(i) / 4.0).collect()
    }
}

struct Canvas {
    out: String,
}

impl Canvas {
    fn new(meta: &ProductMeta) -> Self {
        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#,
            w = WIDTH,
            h = HEIGHT
        );
        let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            fmt(WIDTH / 2.0),
            escape(&meta.title)
        );
        Self { out }
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64, stroke: &str) {
        let _ = writeln!(
            self.out,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{stroke}"/>"#,
            fmt(x1),
            fmt(y1),
            fmt(x2),
            fmt(y2)
        );
    }

    fn text(&mut self, x: f64, y: f64, anchor: &str, s: &str) {
        let _ = writeln!(
            self.out,
            r#"<text x="{}" y="{}" text-anchor="{anchor}">{}</text>"#,
            fmt(x),
            fmt(y),
            escape(s)
        );
    }

    fn x_axis(&mut self, sx: &Scale, y: f64, label: &str) {
        self.line(sx.a, y, sx.b, y, "black");
        for t in sx.ticks() {
            let x = sx.map(t);
            self.line(x, y, x, y + 4.0, "black");
            self.text(x, y + 16.0, "middle", &tick_label(t));
        }
        self.text((sx.a + sx.b) / 2.0, HEIGHT - 12.0, "middle", label);
    }

    fn y_axis(&mut self, sy: &Scale, x: f64, label: &str) {
        self.line(x, sy.a, x, sy.b, "black");
        for t in sy.ticks() {
            let y = sy.map(t);
            self.line(x - 4.0, y, x, y, "black");
            self.text(x - 6.0, y + 4.0, "end", &tick_label(t));
        }
        let _ = writeln!(
            self.out,
            r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
            fmt((sy.a + sy.b) / 2.0),
            fmt((sy.a + sy.b) / 2.0),
            escape(label)
        );
    }

    fn finish(mut self) -> String {
        self.out.push_str("</svg>\n");
        self.out
    }
}

fn color_ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(30.0, 214.0), lerp(136.0, 39.0), lerp(229.0, 40.0))
}

fn heat(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

fn xform(log_x: bool) -> impl Fn(f64) -> f64 {
    move |v| if log_x { (1.0 + v.max(0.0)).log10() } else { v }
}

fn bar(meta: &ProductMeta, t: &Table) -> Result<String> {
    let labels: Vec<&str> = {
        let j = t.column(&meta.plot.x)?;
        t.rows.iter().map(|r| r[j].as_str()).collect()
    };
    let values: Vec<f64> = t.numbers(&meta.plot.y)?.into_iter().map(|v| v.unwrap_or(0.0)).collect();
    let left = 150.0;
    let sx = Scale::new(values.iter().copied().chain([0.0]), left, WIDTH - RIGHT);
    let mut c = Canvas::new(meta);
    let band = (HEIGHT - TOP - BOTTOM) / values.len().max(1) as f64;
    for (i, (label, v)) in labels.iter().zip(&values).enumerate() {
        let y = TOP + band * i as f64;
        let (x0, x1) = (sx.map(0.0), sx.map(*v));
        let _ = writeln!(
            c.out,
            r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
            fmt(x0.min(x1)),
            fmt(y + band * 0.1),
            fmt((x1 - x0).abs()),
            fmt(band * 0.8),
            PALETTE[0]
        );
        c.text(left - 6.0, y + band / 2.0 + 4.0, "end", label);
    }
    c.x_axis(&sx, HEIGHT - BOTTOM, &meta.x_label);
    c.line(sx.map(0.0), TOP, sx.map(0.0), HEIGHT - BOTTOM, "#888888");
    Ok(c.finish())
}

fn points(meta: &ProductMeta, t: &Table) -> Result<Vec<(f64, f64, usize)>> {
    let f = xform(meta.plot.log_x);
    let xs = t.numbers(&meta.plot.x)?;
    let ys = t.numbers(&meta.plot.y)?;
    let series: Vec<usize> = match &meta.plot.series {
        None => vec![0; t.rows.len()],
        Some(col) => {
            let j = t.column(col)?;
            let mut names: Vec<&str> = Vec::new();
            t.rows
                .iter()
                .map(|r| match names.iter().position(|n| *n == r[j]) {
                    Some(i) => i,
                    None => {
                        names.push(&r[j]);
                        names.len() - 1
                    }
                })
                .collect()
        }
    };
    Ok(xs
        .into_iter()
        .zip(ys)
        .zip(series)
        .filter_map(|((x, y), s)| Some((f(x?), y?, s)))
        .collect())
}

fn xy(meta: &ProductMeta, t: &Table) -> Result<String> {
    let pts = points(meta, t)?;
    let left = 70.0;
    let sx = Scale::new(pts.iter().map(|p| p.0), left, WIDTH - RIGHT);
    let sy = Scale::new(pts.iter().map(|p| p.1), HEIGHT - BOTTOM, TOP);
    let mut c = Canvas::new(meta);
    match meta.plot.kind {
        PlotKind::Line => {
            let n_series = pts.iter().map(|p| p.2 + 1).max().unwrap_or(0);
            for s in 0..n_series {
                let path: Vec<String> = pts
                    .iter()
                    .filter(|p| p.2 == s)
                    .map(|p| format!("{},{}", fmt(sx.map(p.0)), fmt(sy.map(p.1))))
                    .collect();
                let _ = writeln!(
                    c.out,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5" points="{}"/>"#,
                    PALETTE[s % PALETTE.len()],
                    path.join(" ")
                );
            }
        }
        _ => {
            let colors: Vec<Option<f64>> = match &meta.plot.color {
                Some(col) => t.numbers(col)?,
                None => vec![None; t.rows.len()],
            };
            let f = xform(meta.plot.log_x);
            let xs = t.numbers(&meta.plot.x)?;
            let ys = t.numbers(&meta.plot.y)?;
            for ((x, y), col) in xs.into_iter().zip(ys).zip(colors) {
                let (Some(x), Some(y)) = (x, y) else { continue };
                let fill = match (&meta.plot.color, col) {
                    (Some(_), Some(v)) => color_ramp(v),
                    (Some(_), None) => "#999999".into(),
                    (None, _) => PALETTE[0].into(),
                };
                let _ = writeln!(
                    c.out,
                    r#"<circle cx="{}" cy="{}" r="2.5" fill="{fill}" fill-opacity="0.7"/>"#,
                    fmt(sx.map(f(x))),
                    fmt(sy.map(y))
                );
            }
        }
    }
    let x_label = if meta.plot.log_x {
        format!("log10(1 + {})", meta.x_label)
    } else {
        meta.x_label.clone()
    };
    c.x_axis(&sx, HEIGHT - BOTTOM, &x_label);
    c.y_axis(&sy, left, &meta.y_label);
    Ok(c.finish())
}

fn heatmap(meta: &ProductMeta, t: &Table) -> Result<String> {
    let label_col = t.column(&meta.plot.x)?;
    let cols: Vec<usize> = (0..t.header.len()).filter(|&j| j != label_col).collect();
    let cells: Vec<Vec<f64>> = t
        .rows
        .iter()
        .map(|r| {
            cols.iter()
                .map(|&j| {
                    let s = r[j].trim();
                    if s.is_empty() {
                        Ok(0.0)
                    } else {
                        s.parse().map_err(|_| Error::Data(format!("heatmap cell `{s}` is not a number")))
                    }
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let max = cells.iter().flatten().copied().fold(0.0, f64::max);
    let left = 110.0;
    let cw = (WIDTH - RIGHT - left) / cols.len().max(1) as f64;
    let rh = (HEIGHT - TOP - BOTTOM) / t.rows.len().max(1) as f64;
    let mut c = Canvas::new(meta);
    for (i, row) in cells.iter().enumerate() {
        let y = TOP + rh * i as f64;
        for (k, v) in row.iter().enumerate() {
            let _ = writeln!(
                c.out,
                r#"<rect x="{}" y="{}" width="{}" height="{}" fill="{}"/>"#,
                fmt(left + cw * k as f64),
                fmt(y),
                fmt(cw),
                fmt(rh),
                heat(if max > 0.0 { v / max } else { 0.0 })
            );
        }
        c.text(left - 6.0, y + rh / 2.0 + 4.0, "end", &t.rows[i][label_col]);
    }
    let step = (cols.len() / 8).max(1);
    for (k, &j) in cols.iter().enumerate().step_by(step) {
        c.text(left + cw * (k as f64 + 0.5), HEIGHT - BOTTOM + 16.0, "middle", &t.header[j]);
    }
    c.text((left + WIDTH - RIGHT) / 2.0, HEIGHT - 12.0, "middle", &meta.x_label);
    Ok(c.finish())
}

/// Renders a product to SVG text.
pub fn render(table: &Table, meta: &ProductMeta) -> Result<String> {
    match meta.plot.kind {
        PlotKind::Bar => bar(meta, table),
        PlotKind::Scatter | PlotKind::Line => xy(meta, table),
        PlotKind::Heatmap => heatmap(meta, table),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::products::PlotSpec;
    use serde_json::Value;

    fn meta(kind: PlotKind) -> ProductMeta {
        ProductMeta {
            product: "t".into(),
            title: "A & B".into(),
            x_label: "x".into(),
            y_label: "y".into(),
            plot: PlotSpec::new(kind, "x", "y"),
            metadata: Value::Null,
        }
    }

    fn table() -> Table {
        let mut t = Table::new(&["x", "y"]);
        t.push(vec!["1".into(), "2".into()]);
        t.push(vec!["3".into(), "".into()]);
        t.push(vec!["5".into(), "-1".into()]);
        t
    }

    #[test]
    fn line_plot_golden() {
        let svg = render(&table(), &meta(PlotKind::Line)).unwrap();
        let expected = concat!(
            r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="70.00,40.00 696.00,384.00"/>"##,
            "\n"
        );
        assert!(svg.contains(expected), "{svg}");
        assert!(svg.contains("A &amp; B"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn rendering_is_pure() {
        for kind in [PlotKind::Bar, PlotKind::Scatter, PlotKind::Line, PlotKind::Heatmap] {
            let a = render(&table(), &meta(kind)).unwrap();
            let b = render(&table(), &meta(kind)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_column_is_data_error() {
        let mut m = meta(PlotKind::Scatter);
        m.plot.y = "nope".into();
        assert_eq!(render(&table(), &m).unwrap_err().exit_code(), 3);
    }
}
