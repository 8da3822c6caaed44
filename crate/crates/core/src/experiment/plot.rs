//! Line charts of results CSV columns as standalone SVG.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 200.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// Mean of `y` per `x` for one series value.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    /// `(x, mean y, sample count)`, ascending in `x`.
    pub points: Vec<(f64, f64, usize)>,
}

/// Groups `csv_text` by the `series` column and averages `y` at each `x`.
/// Series keep first-seen order.
pub fn aggregate(csv_text: &str, x: &str, y: &str, series: &str) -> Result<Vec<Series>> {
    let mut rdr = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let col = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidInput(format!(
                "unknown column {name:?}; available: {}",
                headers.iter().collect::<Vec<_>>().join(", ")
            ))
        })
    };
    let (xi, yi, si) = (col(x)?, col(y)?, col(series)?);
    let mut order: Vec<String> = Vec::new();
    let mut acc: BTreeMap<String, BTreeMap<u64, (f64, f64, usize)>> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let num = |i: usize, name: &str| -> Result<f64> {
            let v = rec.get(i).unwrap_or("");
            let parsed: f64 = v
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: column {name} value {v:?} is not a number", line + 2)))?;
            if !parsed.is_finite() {
                return Err(Error::Parse(format!("row {}: column {name} is not finite", line + 2)));
            }
            Ok(parsed)
        };
        let xv = num(xi, x)?;
        let yv = num(yi, y)?;
        let s = rec.get(si).unwrap_or("").to_string();
        if !acc.contains_key(&s) {
            order.push(s.clone());
        }
        // Total order on finite floats via their bit pattern, offset so
        // negative values sort first.
        let key = xv.to_bits() ^ if xv.is_sign_negative() { u64::MAX } else { 1 << 63 };
        let e = acc.entry(s).or_default().entry(key).or_insert((xv, 0.0, 0));
        e.1 += yv;
        e.2 += 1;
    }
    if order.is_empty() {
        return Err(Error::InvalidInput("results file has no data rows".into()));
    }
    Ok(order
        .into_iter()
        .map(|name| {
            let points = acc[&name].values().map(|&(x, sum, n)| (x, sum / n as f64, n)).collect();
            Series { name, points }
        })
        .collect())
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders the aggregated series; byte-identical for identical input.
pub fn render_svg(series: &[Series], x_label: &str, y_label: &str) -> String {
    let (x0, x1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.0)));
    let (y0, y1) = bounds(series.iter().flat_map(|s| s.points.iter().map(|p| p.1)));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            px(xv),
            TOP + ph + 18.0,
            fmt_tick(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            py(yv) + 4.0,
            fmt_tick(yv)
        );
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}" stroke="#dddddd"/>"##,
            py(yv),
            LEFT + pw
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0:.2}" text-anchor="middle" transform="rotate(-90 16 {0:.2})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        for p in &ser.points {
            let _ = writeln!(
                s,
                r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                px(p.0),
                py(p.1)
            );
        }
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let counts: Vec<String> = ser.points.iter().map(|p| p.2.to_string()).collect();
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}">{} (n={})</text>"#,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.name),
            counts.join(",")
        );
    }
    s.push_str("</svg>\n");
    s
}

fn fmt_tick(v: f64) -> String {
    let r = (v * 1000.0).round() / 1000.0;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

/// Reads `results`, renders and writes `out`. Nothing is written on error.
pub fn plot(results: &Path, x: &str, y: &str, series: &str, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(results).map_err(|e| Error::io(results, e))?;
    let agg = aggregate(&text, x, y, series)?;
    std::fs::write(out, render_svg(&agg, x, y)).map_err(|e| Error::io(out, e))
}
