use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::metrics::mean_std;
use crate::model::RssVector;
use crate::pfm::PfmKind;

/// Pixel length of a bar at |value| = 1.
pub const BAR_SCALE: f64 = 200.0;

const LABEL_WIDTH: f64 = 140.0;
const ROW: f64 = 28.0;
const BAR_HEIGHT: f64 = 18.0;
const TOP: f64 = 36.0;
const POSITIVE: &str = "#2e9d3a";
const NEGATIVE: &str = "#d23a2f";

fn axis_x() -> f64 {
    LABEL_WIDTH + BAR_SCALE + 10.0
}

fn width() -> f64 {
    axis_x() + BAR_SCALE + 70.0
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Horizontal bar anchored at the axis; positive values go right in green.
fn bar(out: &mut String, label: &str, value: f64, y: f64) {
    let v = value.clamp(-1.0, 1.0);
    let len = v.abs() * BAR_SCALE;
    let (x, fill) = if v >= 0.0 {
        (axis_x(), POSITIVE)
    } else {
        (axis_x() - len, NEGATIVE)
    };
    let _ = writeln!(
        out,
        r#"  <rect class="bar" data-pfm="{}" data-value="{value:.6}" x="{x:.3}" y="{y:.3}" width="{len:.3}" height="{BAR_HEIGHT}" fill="{fill}"/>"#,
        escape(label),
    );
}

fn row_label(out: &mut String, label: &str, value: f64, y: f64) {
    let ty = y + BAR_HEIGHT * 0.75;
    let _ = writeln!(
        out,
        r#"  <text x="{:.3}" y="{ty:.3}" font-size="12" text-anchor="end">{}</text>"#,
        LABEL_WIDTH - 6.0,
        escape(label)
    );
    let _ = writeln!(
        out,
        r#"  <text x="{:.3}" y="{ty:.3}" font-size="11" fill="gray">{value:+.3}</text>"#,
        axis_x() + BAR_SCALE + 8.0
    );
}

fn document(height: f64, body: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w:.0}\" height=\"{height:.0}\" viewBox=\"0 0 {w:.0} {height:.0}\">\n  <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{body}</svg>\n",
        w = width()
    )
}

fn axis(out: &mut String, top: f64, bottom: f64) {
    let _ = writeln!(
        out,
        r#"  <line class="axis" x1="{x:.3}" y1="{top:.3}" x2="{x:.3}" y2="{bottom:.3}" stroke="black" stroke-width="1"/>"#,
        x = axis_x()
    );
}

fn side_captions(out: &mut String, y: f64, negative: &str, positive: &str) {
    let _ = writeln!(
        out,
        r#"  <text x="{:.3}" y="{y:.3}" font-size="12" text-anchor="middle" fill="{NEGATIVE}">{}</text>"#,
        axis_x() - BAR_SCALE / 2.0,
        escape(negative)
    );
    let _ = writeln!(
        out,
        r#"  <text x="{:.3}" y="{y:.3}" font-size="12" text-anchor="middle" fill="{POSITIVE}">{}</text>"#,
        axis_x() + BAR_SCALE / 2.0,
        escape(positive)
    );
}

/// One bar per feature map; the captions name the class each side favours.
pub fn render_local_chart(rss: &RssVector, class_names: (&str, &str)) -> String {
    let mut body = String::new();
    side_captions(&mut body, 20.0, class_names.0, class_names.1);
    let bottom = TOP + ROW * rss.values.len() as f64;
    axis(&mut body, TOP - 4.0, bottom);
    for (i, (&v, kind)) in rss.values.iter().zip(&rss.labels).enumerate() {
        let y = TOP + ROW * i as f64;
        bar(&mut body, kind.display_name(), v, y);
        row_label(&mut body, kind.display_name(), v, y);
    }
    document(bottom + 12.0, &body)
}

/// Mean and population standard deviation of the scores of one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassRssStats {
    pub class_name: String,
    pub samples: usize,
    pub labels: Vec<PfmKind>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

/// Groups per-sample scores `(class, values)` by class.
pub fn rss_statistics(
    samples: &[(usize, Vec<f64>)],
    class_names: &[String],
    labels: &[PfmKind],
) -> Result<Vec<ClassRssStats>> {
    if samples.is_empty() {
        return Err(Error::contract("no samples to summarise"));
    }
    if let Some((_, v)) = samples.iter().find(|(_, v)| v.len() != labels.len()) {
        return Err(Error::dim(format!(
            "sample has {} scores, expected {}",
            v.len(),
            labels.len()
        )));
    }
    let mut out = Vec::new();
    for (class, name) in class_names.iter().enumerate() {
        let rows: Vec<&Vec<f64>> = samples.iter().filter(|(c, _)| *c == class).map(|(_, v)| v).collect();
        if rows.is_empty() {
            continue;
        }
        let (means, stds) = (0..labels.len())
            .map(|k| mean_std(&rows.iter().map(|r| r[k]).collect::<Vec<_>>()))
            .unzip();
        out.push(ClassRssStats {
            class_name: name.clone(),
            samples: rows.len(),
            labels: labels.to_vec(),
            means,
            stds,
        });
    }
    Ok(out)
}

/// Tab-separated table, one row per class and feature map.
pub fn stats_table(stats: &[ClassRssStats]) -> String {
    let mut out = String::from("class\tpfm\tn\tmean\tstd\n");
    for s in stats {
        for ((kind, m), sd) in s.labels.iter().zip(&s.means).zip(&s.stds) {
            let _ = writeln!(out, "{}\t{}\t{}\t{m:.6}\t{sd:.6}", s.class_name, kind.slug(), s.samples);
        }
    }
    out
}

/// Per-class panels of mean bars with ±1 std whiskers.
pub fn render_global_chart(stats: &[ClassRssStats]) -> Result<String> {
    if stats.is_empty() || stats.iter().all(|s| s.means.is_empty()) {
        return Err(Error::contract("global chart needs at least one class with scores"));
    }
    let mut body = String::new();
    let mut y = 20.0;
    for s in stats {
        let _ = writeln!(
            body,
            r#"  <text class="panel" x="8" y="{y:.3}" font-size="13" font-weight="bold">{} (n = {})</text>"#,
            escape(&s.class_name),
            s.samples
        );
        let top = y + 12.0;
        let bottom = top + ROW * s.means.len() as f64;
        axis(&mut body, top - 4.0, bottom);
        for (i, ((kind, &m), &sd)) in s.labels.iter().zip(&s.means).zip(&s.stds).enumerate() {
            let ry = top + ROW * i as f64;
            bar(&mut body, kind.display_name(), m, ry);
            let cy = ry + BAR_HEIGHT / 2.0;
            let x1 = axis_x() + BAR_SCALE * (m - sd).clamp(-1.0, 1.0);
            let x2 = axis_x() + BAR_SCALE * (m + sd).clamp(-1.0, 1.0);
            let _ = writeln!(
                body,
                r#"  <line class="whisker" data-std="{sd:.6}" x1="{x1:.3}" y1="{cy:.3}" x2="{x2:.3}" y2="{cy:.3}" stroke="black" stroke-width="1.5"/>"#
            );
            row_label(&mut body, kind.display_name(), m, ry);
        }
        y = bottom + 24.0;
    }
    Ok(document(y, &body))
}
