//! Static SVG line charts: PR and ROC curves, beat overlays, loss traces.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::metrics::Evaluation;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 130.0, 40.0, 50.0); // left, right, top, bottom
const PALETTE: [&str; 8] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
    pub color: Option<&'static str>,
}

pub struct Chart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Fixed axis ranges; otherwise fitted to the data.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

impl Chart {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Chart {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            x_range: None,
            y_range: None,
        }
    }

    pub fn line(mut self, name: &str, points: Vec<(f64, f64)>) -> Self {
        self.series.push(Series { name: name.into(), points, color: None });
        self
    }

    pub fn render(&self) -> String {
        let (ml, mr, mt, mb) = MARGIN;
        let (pw, ph) = (WIDTH - ml - mr, HEIGHT - mt - mb);
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        let (x0, x1) = self.x_range.unwrap_or_else(|| extent(all().map(|p| p.0)));
        let (y0, y1) = self.y_range.unwrap_or_else(|| extent(all().map(|p| p.1)));
        let sx = |x: f64| ml + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| mt + ph - (y - y0) / (y1 - y0) * ph;

        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="15">{}</text>"#, ml + pw / 2.0, escape(&self.title));
        let _ = writeln!(svg, r##"<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(svg, r##"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="#333"/>"##, mt + ph, mt + ph + 5.0);
            let _ = writeln!(svg, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, mt + ph + 18.0, tick(xv));
            let _ = writeln!(svg, r##"<line x1="{:.1}" y1="{py:.1}" x2="{ml}" y2="{py:.1}" stroke="#333"/>"##, ml - 5.0);
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ml - 8.0, py + 4.0, tick(yv));
        }
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, ml + pw / 2.0, HEIGHT - 12.0, escape(&self.x_label));
        let _ = writeln!(
            svg,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            mt + ph / 2.0,
            mt + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, s) in self.series.iter().enumerate() {
            let color = s.color.unwrap_or(PALETTE[i % PALETTE.len()]);
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                .collect();
            let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
            let ly = mt + 10.0 + 18.0 * i as f64;
            let lx = ml + pw + 12.0;
            let _ = writeln!(svg, r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#, lx + 18.0);
            let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{}</text>"#, lx + 24.0, ly + 4.0, escape(&s.name));
        }
        svg.push_str("</svg>\n");
        svg
    }
}

fn tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn write(dir: &Path, name: &str, chart: &Chart) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, chart.render()).map_err(|e| Error::file(&path, e.to_string()))?;
    Ok(path)
}

/// Names of the files [`write_report_plots`] and [`write_trace_plot`] produce.
pub fn file_names(eval: &Evaluation, traces: &[String]) -> Vec<String> {
    let mut names = vec!["pr.svg".to_string(), "roc.svg".to_string()];
    names.extend(eval.curves.iter().map(|c| format!("overlay_{}.svg", c.case_id)));
    names.extend(traces.iter().map(|t| trace_file_name(t)));
    names
}

fn trace_file_name(trace: &str) -> String {
    let stem = trace.trim_end_matches(".csv").trim_end_matches(".trace");
    format!("trace_{stem}.svg")
}

/// PR and ROC curves of every scenario, and one overlay per case of a few
/// beats over the template.
pub fn write_report_plots(eval: &Evaluation, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e.to_string()))?;
    let mut pr = Chart::new("Precision-recall", "recall", "precision");
    let mut roc = Chart::new("ROC", "false positive rate", "true positive rate");
    pr.x_range = Some((0.0, 1.0));
    pr.y_range = Some((0.0, 1.0));
    roc.x_range = Some((0.0, 1.0));
    roc.y_range = Some((0.0, 1.0));
    for c in &eval.curves {
        pr = pr.line(&c.case_id, c.pr.iter().map(|p| (p.recall, p.precision)).collect());
        roc = roc.line(&c.case_id, c.roc.clone());
    }
    let mut out = vec![write(dir, "pr.svg", &pr)?, write(dir, "roc.svg", &roc)?];
    let template: Vec<(f64, f64)> = eval.template_samples.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect();
    for c in &eval.curves {
        let mut chart = Chart::new(&format!("Beats of {} over the template", c.case_id), "sample", "amplitude");
        chart.y_range = Some((-1.05, 1.05));
        for (k, beat) in c.examples.iter().enumerate() {
            chart = chart.line(&format!("beat {k}"), beat.iter().enumerate().map(|(i, &v)| (i as f64, v)).collect());
        }
        chart.series.push(Series { name: "template".into(), points: template.clone(), color: Some("#000000") });
        out.push(write(dir, &format!("overlay_{}.svg", c.case_id), &chart)?);
    }
    Ok(out)
}

/// Plots every numeric column of a trace CSV against its `step` column.
pub fn write_trace_plot(csv_text: &str, name: &str, dir: &Path) -> Result<PathBuf> {
    let mut reader = csv::Reader::from_reader(csv_text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::file(name, e.to_string()))?.clone();
    let step_col = headers.iter().position(|h| h == "step").ok_or_else(|| Error::file(name, "trace has no `step` column"))?;
    let mut columns: Vec<(String, Vec<(f64, f64)>)> =
        headers.iter().enumerate().filter(|&(i, _)| i != step_col).map(|(_, h)| (h.to_string(), Vec::new())).collect();
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| Error::Format { row: row + 2, msg: format!("{name}: {e}") })?;
        let step: f64 = rec[step_col].parse().map_err(|_| Error::Format { row: row + 2, msg: format!("{name}: bad step") })?;
        let others = rec.iter().enumerate().filter(|&(i, _)| i != step_col).map(|(_, v)| v);
        for (col, v) in columns.iter_mut().zip(others) {
            if let Ok(v) = v.parse::<f64>() {
                col.1.push((step, v));
            }
        }
    }
    let mut chart = Chart::new(&format!("Training trace {name}"), "step", "value");
    for (h, pts) in columns.into_iter().filter(|(_, p)| !p.is_empty()) {
        chart = chart.line(&h, pts);
    }
    write(dir, &trace_file_name(name), &chart)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_maps_points_into_the_plot_area() {
        let mut c = Chart::new("t", "x", "y").line("a", vec![(0.0, 0.0), (1.0, 1.0)]);
        c.x_range = Some((0.0, 1.0));
        c.y_range = Some((0.0, 1.0));
        let svg = c.render();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        // lower-left and upper-right corners of the plot area
        assert!(svg.contains(r#"points="60.00,370.00 510.00,40.00""#), "{svg}");
    }

    #[test]
    fn text_is_escaped_and_nonfinite_points_dropped() {
        let svg = Chart::new("a<b & c", "x", "y").line("s", vec![(0.0, f64::NAN), (1.0, 2.0), (2.0, 3.0)]).render();
        assert!(svg.contains("a&lt;b &amp; c"));
        assert_eq!(svg.matches("points=").count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn trace_plot_skips_text_columns() {
        let dir = tempfile::tempdir().unwrap();
        let csv = "step,objective,loss,t_mean\n1,simple,0.5,3\n2,simple,0.25,4\n";
        let path = write_trace_plot(csv, "ddpm_00.trace.csv", dir.path()).unwrap();
        assert_eq!(path.file_name().unwrap(), "trace_ddpm_00.svg");
        let svg = fs::read_to_string(path).unwrap();
        assert!(svg.contains(">loss<") && svg.contains(">t_mean<") && !svg.contains(">objective<"));
        assert!(write_trace_plot("a,b\n1,2\n", "x.csv", dir.path()).is_err());
    }

    #[test]
    fn ticks_are_compact() {
        assert_eq!(tick(0.5), "0.5");
        assert_eq!(tick(1.0), "1");
        assert_eq!(tick(0.0), "0");
        assert_eq!(tick(25000.0), "2.5e4");
    }
}
