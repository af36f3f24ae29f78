//! Trace CSV files and SVG convergence plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::solvers::{ConvergenceTrace, OuterRecord, TraceRecord};

const BASE_HEADER: [&str; 5] = ["iter", "rel_err", "res_err", "raw_residual", "wall_ns"];
const OUTER_HEADER: [&str; 3] = ["outer_rel_err", "outer_res_err", "outer_raw_residual"];

/// Twelve significant digits.
fn fmt_value(v: f64) -> String {
    format!("{v:.11e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_value).unwrap_or_default()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::io(path, std::io::Error::other(e))
}

/// Writes `iter,rel_err,res_err,raw_residual,wall_ns`, followed by the
/// outer-system columns when any record carries them. Missing errors are
/// left blank. An empty trace is rejected before the file is created.
pub fn write_trace_csv(trace: &ConvergenceTrace, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if trace.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "refusing to write empty trace `{}` to {}",
            trace.label,
            path.display()
        )));
    }
    let factorized = trace.records().iter().any(|r| r.outer.is_some());
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut header: Vec<&str> = BASE_HEADER.to_vec();
    if factorized {
        header.extend(OUTER_HEADER);
    }
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in trace.records() {
        let mut row = vec![
            r.iter.to_string(),
            fmt_opt(r.rel_err),
            fmt_opt(r.res_err),
            fmt_value(r.raw_residual),
            r.wall_ns.to_string(),
        ];
        if factorized {
            let o = r.outer;
            row.push(fmt_opt(o.and_then(|o| o.rel_err)));
            row.push(fmt_opt(o.and_then(|o| o.res_err)));
            row.push(fmt_opt(o.map(|o| o.raw_residual)));
        }
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a file produced by [`write_trace_csv`]. The label is the file stem.
pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<ConvergenceTrace> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols: Vec<&str> = header.iter().collect();
    let factorized = cols.len() == BASE_HEADER.len() + OUTER_HEADER.len();
    if cols[..BASE_HEADER.len().min(cols.len())] != BASE_HEADER[..]
        || (factorized && cols[BASE_HEADER.len()..] != OUTER_HEADER[..])
        || !(cols.len() == BASE_HEADER.len() || factorized)
    {
        return Err(Error::Parse(format!("{}: unexpected header {cols:?}", path.display())));
    }
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut trace = ConvergenceTrace::new(label);
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| Error::Parse(format!("{}: row {}: bad {what}", path.display(), line + 1));
        let opt = |i: usize| -> Result<Option<f64>> {
            let s = rec.get(i).unwrap_or("");
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(cols[i]))
            }
        };
        let iter = rec[0].parse().map_err(|_| bad("iter"))?;
        let raw_residual = opt(3)?.ok_or_else(|| bad("raw_residual"))?;
        let wall_ns = rec[4].parse().map_err(|_| bad("wall_ns"))?;
        let outer = if factorized {
            match (opt(5)?, opt(6)?, opt(7)?) {
                (rel_err, res_err, Some(raw_residual)) => Some(OuterRecord {
                    rel_err,
                    res_err,
                    raw_residual,
                }),
                (None, None, None) => None,
                _ => return Err(bad("outer_raw_residual")),
            }
        } else {
            None
        };
        trace.push(TraceRecord {
            iter,
            rel_err: opt(1)?,
            res_err: opt(2)?,
            raw_residual,
            wall_ns,
            outer,
        })?;
    }
    Ok(trace)
}

/// Quantity drawn from each trace record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    RelErr,
    ResErr,
    RawResidual,
    OuterRelErr,
    OuterResErr,
}

impl Metric {
    pub fn value(self, r: &TraceRecord) -> Option<f64> {
        match self {
            Metric::RelErr => r.rel_err,
            Metric::ResErr => r.res_err,
            Metric::RawResidual => Some(r.raw_residual),
            Metric::OuterRelErr => r.outer.and_then(|o| o.rel_err),
            Metric::OuterResErr => r.outer.and_then(|o| o.res_err),
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::RelErr => "relative error",
            Metric::ResErr => "residual error",
            Metric::RawResidual => "raw residual",
            Metric::OuterRelErr => "outer relative error",
            Metric::OuterResErr => "outer residual error",
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders `log10(metric)` against the iteration count, one polyline per
/// trace, with a legend. Non-positive or missing values are skipped.
pub fn render_plot_svg(traces: &[&ConvergenceTrace], metric: Metric) -> String {
    const W: f64 = 720.0;
    const H: f64 = 480.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let series: Vec<Vec<(f64, f64)>> = traces
        .iter()
        .map(|t| {
            t.records()
                .iter()
                .filter_map(|r| {
                    metric
                        .value(r)
                        .filter(|v| *v > 0.0)
                        .map(|v| (r.iter as f64, v.log10()))
                })
                .collect()
        })
        .collect();
    let x_max = traces
        .iter()
        .filter_map(|t| t.last().map(|r| r.iter))
        .max()
        .unwrap_or(1)
        .max(1) as f64;
    let (mut y_lo, mut y_hi) = series
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    if !y_lo.is_finite() {
        (y_lo, y_hi) = (-1.0, 1.0);
    }
    y_lo = y_lo.floor();
    y_hi = y_hi.ceil();
    if y_hi <= y_lo {
        y_hi = y_lo + 1.0;
    }
    let px = |x: f64| LEFT + x / x_max * (W - LEFT - RIGHT);
    let py = |y: f64| TOP + (y_hi - y) / (y_hi - y_lo) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        xml_escape(metric.title())
    );
    let (x0, x1, y0, y1) = (px(0.0), px(x_max), py(y_lo), py(y_hi));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1} {y1:.1} V{y0:.1} H{x1:.1}" fill="none" stroke="black"/>"#
    );
    let step = ((y_hi - y_lo) / 10.0).ceil().max(1.0);
    let mut d = y_lo;
    while d <= y_hi {
        let y = py(d);
        let _ = writeln!(
            s,
            r##"<line x1="{x0:.1}" y1="{y:.1}" x2="{x1:.1}" y2="{y:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">1e{d}</text>"##,
            x0 - 6.0,
            y + 4.0
        );
        d += step;
    }
    for i in 0..=5 {
        let it = x_max * i as f64 / 5.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            px(it),
            y0 + 18.0,
            it.round()
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">iteration</text>"#,
        (x0 + x1) / 2.0,
        H - 10.0
    );
    for (i, (pts, t)) in series.iter().zip(traces).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = pts
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        let ly = TOP + 8.0 + 16.0 * i as f64;
        let lx = x1 - 200.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            xml_escape(&t.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn write_plot_svg(traces: &[&ConvergenceTrace], metric: Metric, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_plot_svg(traces, metric)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(label: &str, n: usize, outer: bool) -> ConvergenceTrace {
        let mut t = ConvergenceTrace::new(label);
        for k in 0..n {
            let v = 0.5f64.powi(k as i32) / 3.0;
            t.push(TraceRecord {
                iter: k * 10,
                rel_err: (k > 0).then_some(v),
                res_err: Some(v * 7.0),
                raw_residual: v + 1e-3,
                wall_ns: 0,
                outer: outer.then_some(OuterRecord {
                    rel_err: Some(v * 2.0),
                    res_err: None,
                    raw_residual: v,
                }),
            })
            .unwrap();
        }
        t
    }

    #[test]
    fn three_points_give_four_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_trace_csv(&trace("t", 3, false), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(text.lines().next().unwrap(), "iter,rel_err,res_err,raw_residual,wall_ns");
        assert!(text.lines().nth(1).unwrap().starts_with("0,,"));
    }

    #[test]
    fn empty_trace_creates_no_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        assert!(write_trace_csv(&ConvergenceTrace::new("e"), &path).is_err());
        assert!(!path.exists());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        for outer in [false, true] {
            let t = trace("rt", 6, outer);
            let path = dir.path().join("rt.csv");
            write_trace_csv(&t, &path).unwrap();
            let back = read_trace_csv(&path).unwrap();
            assert_eq!(back.len(), t.len());
            let close = |a: Option<f64>, b: Option<f64>| match (a, b) {
                (Some(a), Some(b)) => (a - b).abs() <= 1e-11 * b.abs(),
                (None, None) => true,
                _ => false,
            };
            for (a, b) in back.records().iter().zip(t.records()) {
                assert_eq!(a.iter, b.iter);
                assert!(close(a.rel_err, b.rel_err));
                assert!(close(a.res_err, b.res_err));
                assert!(close(Some(a.raw_residual), Some(b.raw_residual)));
                assert_eq!(a.outer.is_some(), b.outer.is_some());
                if let (Some(x), Some(y)) = (a.outer, b.outer) {
                    assert!(close(x.rel_err, y.rel_err));
                    assert!(close(x.res_err, y.res_err));
                }
            }
        }
    }

    #[test]
    fn svg_has_one_polyline_per_trace() {
        let a = trace("a", 5, false);
        let b = trace("b <&>", 5, false);
        let svg = render_plot_svg(&[&a, &b], Metric::RelErr);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b &lt;&amp;&gt;"));
        assert!(svg.starts_with("<svg"));
    }
}
