//! Hand-rolled SVG rendering of accuracy against normalized complexity.

use std::fmt::Write;
use std::path::Path;

use kernel_analysis::kernel::CURVE_CSV_HEADER;
use kernel_analysis::protocol::ENVELOPE_CSV_HEADER;

pub struct Series {
    pub name: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `(min, max)` per point when the file carries an envelope.
    pub band: Option<(Vec<f64>, Vec<f64>)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 24.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn read_series(path: &Path) -> Result<Series, String> {
    let fail = |m: String| format!("{}: {m}", path.display());
    let mut reader = csv::Reader::from_path(path).map_err(|e| fail(e.to_string()))?;
    let header = reader
        .headers()
        .map_err(|e| fail(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    let (x_col, y_col, band_cols) = if header == CURVE_CSV_HEADER {
        (1, 3, None)
    } else if header == ENVELOPE_CSV_HEADER {
        (0, 1, Some((2, 3)))
    } else {
        return Err(fail(format!(
            "unrecognized header {header:?}; expected {CURVE_CSV_HEADER:?} or {ENVELOPE_CSV_HEADER:?}"
        )));
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut series = Series {
        name,
        x: Vec::new(),
        y: Vec::new(),
        band: band_cols.map(|_| (Vec::new(), Vec::new())),
    };
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let value = |c: usize| -> Result<f64, String> {
            let text = record.get(c).unwrap_or("");
            match text.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(fail(format!("line {}: bad value {text:?}", i + 2))),
            }
        };
        series.x.push(value(x_col)?);
        series.y.push(value(y_col)?);
        if let (Some((lo, hi)), Some(band)) = (band_cols, series.band.as_mut()) {
            band.0.push(value(lo)?);
            band.1.push(value(hi)?);
        }
    }
    if series.x.is_empty() {
        return Err(fail("no data rows".into()));
    }
    Ok(series)
}

fn px(x: f64) -> f64 {
    LEFT + x.clamp(0.0, 1.0) * (WIDTH - LEFT - RIGHT)
}

fn py(y: f64) -> f64 {
    HEIGHT - BOTTOM - y.clamp(0.0, 1.0) * (HEIGHT - TOP - BOTTOM)
}

fn points(xs: &[f64], ys: &[f64]) -> String {
    xs.iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

pub fn render_svg(series: &[Series], title: Option<&str>) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    if let Some(title) = title {
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
    }

    // axes and ticks
    let _ = writeln!(
        svg,
        r#"<g stroke="black" stroke-width="1"><line x1="{0}" y1="{1}" x2="{2}" y2="{1}"/><line x1="{0}" y1="{1}" x2="{0}" y2="{3}"/></g>"#,
        px(0.0),
        py(0.0),
        px(1.0),
        py(1.0)
    );
    for i in 0..=5 {
        let v = i as f64 / 5.0;
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{v:.1}</text><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"#,
            px(v),
            py(0.0) + 16.0,
            px(0.0) - 6.0,
            py(v) + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">complexity d/D</text>"#,
        (px(0.0) + px(1.0)) / 2.0,
        HEIGHT - 16.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18,{:.2}) rotate(-90)" text-anchor="middle">accuracy 1 - e(d)</text>"#,
        (py(0.0) + py(1.0)) / 2.0
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if let Some((lo, hi)) = &s.band {
            let mut xs: Vec<f64> = s.x.clone();
            let mut ys: Vec<f64> = lo.clone();
            xs.extend(s.x.iter().rev());
            ys.extend(hi.iter().rev());
            let _ = writeln!(
                svg,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                points(&xs, &ys)
            );
        }
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            points(&s.x, &s.y)
        );
        let ly = TOP + 8.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            px(0.62),
            px(0.62) + 18.0,
            px(0.62) + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
