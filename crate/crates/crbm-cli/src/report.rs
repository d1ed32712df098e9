//! CSV and SVG emission.  Every CSV starts with a schema-version line and a
//! timestamp line; everything after those two lines is a pure function of
//! the data, which is what the determinism contract is checked against.

use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub const CSV_SCHEMA: &str = "# crbm-csv v1";

pub fn fmt_num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.12e}")
    }
}

pub fn fmt_int(x: usize) -> String {
    format!("{x}")
}

fn quote(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

pub fn write_csv(path: &Path, columns: &[&str], rows: &[Vec<String>]) -> Result<(), String> {
    let mut out = String::new();
    out.push_str(CSV_SCHEMA);
    out.push('\n');
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    out.push_str(&format!("# generated: unix {stamp}\n"));
    out.push_str(&columns.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        assert_eq!(row.len(), columns.len(), "row width mismatch");
        out.push_str(&row.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| format!("creating {dir:?}: {e}"))?;
        }
    }
    fs::write(path, out).map_err(|e| format!("writing {path:?}: {e}"))
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 480.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 20.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// One polyline per series; the y axis is always log10, the x axis is
/// linear.  Non-positive or non-finite y values are dropped.
pub fn write_svg_log_plot(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(String, Vec<(f64, f64)>)],
) -> Result<(), String> {
    let pts: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, s)| s.iter().copied())
        .filter(|&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
        .collect();
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" \
         viewBox=\"0 0 {PLOT_W} {PLOT_H}\" font-family=\"monospace\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        PLOT_W / 2.0,
        title
    ));
    if pts.is_empty() {
        svg.push_str("<text x=\"320\" y=\"240\" text-anchor=\"middle\">no data</text>\n</svg>\n");
        return write_file(path, &svg);
    }
    let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut ly_min, mut ly_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in &pts {
        x_min = x_min.min(x);
        x_max = x_max.max(x);
        ly_min = ly_min.min(y.log10());
        ly_max = ly_max.max(y.log10());
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    ly_min = ly_min.floor();
    ly_max = ly_max.ceil();
    if ly_max == ly_min {
        ly_max = ly_min + 1.0;
    }
    let x_px = |x: f64| MARGIN_L + (x - x_min) / (x_max - x_min) * (PLOT_W - MARGIN_L - MARGIN_R);
    let y_px =
        |y: f64| PLOT_H - MARGIN_B - (y.log10() - ly_min) / (ly_max - ly_min) * (PLOT_H - MARGIN_T - MARGIN_B);

    // frame
    svg.push_str(&format!(
        "<rect x=\"{MARGIN_L}\" y=\"{MARGIN_T}\" width=\"{}\" height=\"{}\" \
         fill=\"none\" stroke=\"black\"/>\n",
        PLOT_W - MARGIN_L - MARGIN_R,
        PLOT_H - MARGIN_T - MARGIN_B
    ));
    // y ticks at integer decades (at most ~10 labels)
    let decades = (ly_max - ly_min) as i64;
    let stride = (decades as f64 / 8.0).ceil().max(1.0) as i64;
    let mut dec = ly_min as i64;
    while dec <= ly_max as i64 {
        let y = y_px(10f64.powi(dec as i32));
        svg.push_str(&format!(
            "<line x1=\"{MARGIN_L}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" \
             stroke=\"#cccccc\"/>\n",
            PLOT_W - MARGIN_R
        ));
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{dec}</text>\n",
            MARGIN_L - 6.0,
            y + 4.0
        ));
        dec += stride;
    }
    // x ticks, five evenly spaced
    for i in 0..=4 {
        let x = x_min + (x_max - x_min) * i as f64 / 4.0;
        let px = x_px(x);
        svg.push_str(&format!(
            "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            PLOT_H - MARGIN_B,
            PLOT_H - MARGIN_B + 5.0
        ));
        svg.push_str(&format!(
            "<text x=\"{px:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{x:.3}</text>\n",
            PLOT_H - MARGIN_B + 18.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
        PLOT_W / 2.0,
        PLOT_H - 12.0,
        x_label
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {})\">{}</text>\n",
        PLOT_H / 2.0,
        PLOT_H / 2.0,
        y_label
    ));
    // series
    for (k, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path_pts: Vec<String> = s
            .iter()
            .filter(|&&(x, y)| x.is_finite() && y.is_finite() && y > 0.0)
            .map(|&(x, y)| format!("{:.1},{:.1}", x_px(x), y_px(y)))
            .collect();
        if path_pts.len() > 1 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
                path_pts.join(" ")
            ));
        }
        for p in &path_pts {
            let (px, py) = p.split_once(',').unwrap();
            svg.push_str(&format!(
                "<circle cx=\"{px}\" cy=\"{py}\" r=\"2.2\" fill=\"{color}\"/>\n"
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{color}\">{}</text>\n",
            MARGIN_L + 10.0,
            MARGIN_T + 16.0 + 15.0 * k as f64,
            name
        ));
    }
    svg.push_str("</svg>\n");
    write_file(path, &svg)
}

fn write_file(path: &Path, text: &str) -> Result<(), String> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| format!("creating {dir:?}: {e}"))?;
        }
    }
    fs::write(path, text).map_err(|e| format!("writing {path:?}: {e}"))
}

/// The CSV content with the timestamp line removed; two runs of the same
/// configuration must agree on this byte-for-byte.
#[cfg(test)]
pub fn strip_timestamp(csv: &str) -> String {
    csv.lines()
        .filter(|l| !l.starts_with("# generated:"))
        .collect::<Vec<_>>()
        .join("\n")
}
