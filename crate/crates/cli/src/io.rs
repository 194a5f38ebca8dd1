//! CSV and SVG writers, and the trajectory reader.

use std::fmt::Write as _;
use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use seis_core::solver::{MonitorEvent, MonitorKind, Snapshot};
use seis_core::Trajectory;

pub const TRAJECTORY_HEADER: [&str; 7] = [
    "t",
    "h",
    "h_prime",
    "sup_S",
    "sup_E",
    "sup_I",
    "total_EI_weighted",
];

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn monitor_name(kind: MonitorKind) -> &'static str {
    match kind {
        MonitorKind::UniformBound => "uniform_bound",
        MonitorKind::NegativeSpeed => "negative_speed",
        MonitorKind::NegativeField => "negative_field",
        MonitorKind::FrontRetreat => "front_retreat",
        MonitorKind::FarFieldTooClose => "far_field_too_close",
    }
}

/// Writes a header and numeric rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|&x| fmt_f64(x)))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory(path: &Path, traj: &Trajectory) -> Result<()> {
    let rows: Vec<Vec<f64>> = (0..traj.len())
        .map(|k| {
            vec![
                traj.times[k],
                traj.h[k],
                traj.h_prime[k],
                traj.sup_s[k],
                traj.sup_e[k],
                traj.sup_i[k],
                traj.total_ei_weighted[k],
            ]
        })
        .collect();
    write_table(path, &TRAJECTORY_HEADER, &rows)
}

/// Reads a file written by [`write_trajectory`] back into the time series
/// of a [`Trajectory`]; snapshots and monitor events are left empty.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header = r.headers()?.clone();
    if header.iter().ne(TRAJECTORY_HEADER) {
        bail!("{}: unexpected header {:?}", path.display(), header);
    }
    let mut traj = Trajectory::default();
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let vals: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .with_context(|| format!("{}: bad number on data row {}", path.display(), k + 1))?;
        if vals.len() != TRAJECTORY_HEADER.len() {
            bail!("{}: data row {} has {} columns", path.display(), k + 1, vals.len());
        }
        traj.times.push(vals[0]);
        traj.h.push(vals[1]);
        traj.h_prime.push(vals[2]);
        traj.sup_s.push(vals[3]);
        traj.sup_e.push(vals[4]);
        traj.sup_i.push(vals[5]);
        traj.total_ei_weighted.push(vals[6]);
    }
    Ok(traj)
}

/// Long format: one row per (snapshot, node).
pub fn write_fields(path: &Path, snapshots: &[Snapshot]) -> Result<()> {
    let rows: Vec<Vec<f64>> = snapshots
        .iter()
        .flat_map(|s| (0..s.r.len()).map(move |j| vec![s.t, s.h, s.r[j], s.s[j], s.e[j], s.i[j]]))
        .collect();
    write_table(path, &["t", "h", "r", "S", "E", "I"], &rows)
}

pub fn write_monitors(path: &Path, events: &[MonitorEvent]) -> Result<()> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    w.write_record(["t", "kind", "value", "bound"])?;
    for e in events {
        w.write_record([
            fmt_f64(e.t),
            monitor_name(e.kind).to_string(),
            fmt_f64(e.value),
            fmt_f64(e.bound),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// One named polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
}

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Minimal line plot: frame, axis extents and one polyline per series.
pub fn svg_plot(title: &str, series: &[Series]) -> String {
    let (w, h, pad) = (640.0, 400.0, 48.0);
    let finite = |v: &&f64| v.is_finite();
    let xs = series.iter().flat_map(|s| s.x.iter().filter(finite));
    let ys = series.iter().flat_map(|s| s.y.iter().filter(finite));
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut y0, mut y1) =
        ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(y0 < y1) {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let xspan = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |x: f64| pad + (x - x0) / xspan * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{pad}" y="{pad}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - 2.0 * pad,
        h - 2.0 * pad
    );
    let _ = writeln!(out, r#"<text x="{pad}" y="28" font-size="14">{}</text>"#, escape(title));
    let _ = writeln!(
        out,
        r#"<text x="{pad}" y="{}" font-size="11">{x0:.4} .. {x1:.4}</text>"#,
        h - 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}" font-size="11">{y0:.4e} .. {y1:.4e}</text>"#,
        pad - 4.0
    );
    for (k, s) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let points: Vec<String> = s
            .x
            .iter()
            .zip(s.y)
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|(&x, &y)| format!("{:.3},{:.3}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{color}">{}</text>"#,
            w - pad - 120.0,
            pad + 16.0 * (k + 1) as f64,
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(x);
            assert_eq!(s.parse::<f64>().unwrap(), x, "{s}");
            let mantissa = s.split('e').next().unwrap();
            assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17);
        }
    }

    #[test]
    fn svg_has_one_polyline_per_series() {
        let x = [0.0, 1.0, 2.0];
        let svg = svg_plot(
            "a<b",
            &[
                Series { label: "one", x: &x, y: &[1.0, 2.0, 3.0] },
                Series { label: "two", x: &x, y: &[0.0, 0.0, f64::NAN] },
            ],
        );
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_series_does_not_divide_by_zero() {
        let svg = svg_plot("flat", &[Series { label: "c", x: &[1.0], y: &[2.0] }]);
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }
}
