//! Report files: metrics JSON, confusion and attention tables as CSV plus SVG heatmaps.
//! Output bytes depend only on the inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{AttentionSummary, RunAggregate};

pub const REPORT_FORMAT: &str = "famseq-report-v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Headline {
    pub accuracy: String,
    pub macro_f1: String,
    pub balanced_accuracy: String,
}

/// Everything needed to re-render the figures. Saved as `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format: String,
    pub title: String,
    pub class_names: Vec<String>,
    pub family_names: Vec<String>,
    pub headline: Headline,
    pub aggregate: RunAggregate,
    pub attention: Option<AttentionSummary>,
}

impl ReportBundle {
    pub fn new(
        title: &str,
        class_names: Vec<String>,
        family_names: Vec<String>,
        aggregate: RunAggregate,
        attention: Option<AttentionSummary>,
    ) -> Self {
        let headline = Headline {
            accuracy: aggregate.accuracy.display(),
            macro_f1: aggregate.macro_f1.display(),
            balanced_accuracy: aggregate.balanced_accuracy.display(),
        };
        ReportBundle {
            format: REPORT_FORMAT.into(),
            title: title.into(),
            class_names,
            family_names,
            headline,
            aggregate,
            attention,
        }
    }
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// White at 0, deep blue at 1.
fn shade(v: f64) -> String {
    let v = v.clamp(0.0, 1.0);
    let r = (247.0 - 239.0 * v).round() as u8;
    let g = (251.0 - 203.0 * v).round() as u8;
    let b = (255.0 - 148.0 * v).round() as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn text_color(v: f64) -> &'static str {
    if v > 0.55 {
        "#ffffff"
    } else {
        "#000000"
    }
}

const CELL: usize = 44;
const LEFT: usize = 110;
const TOP: usize = 60;

pub fn confusion_csv(names: &[String], confusion: &[Vec<usize>]) -> String {
    let mut out = String::from("true\\pred");
    for n in names {
        out.push(',');
        out.push_str(n);
    }
    out.push('\n');
    for (n, row) in names.iter().zip(confusion) {
        out.push_str(n);
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Row-normalized colors, raw counts annotated in every cell.
pub fn confusion_svg(title: &str, names: &[String], confusion: &[Vec<usize>]) -> String {
    let k = names.len();
    let (w, h) = (LEFT + k * CELL + 20, TOP + k * CELL + 40);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#, xml_escape(title));
    for (j, n) in names.iter().enumerate() {
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            LEFT + j * CELL + CELL / 2,
            TOP - 8,
            xml_escape(n)
        );
    }
    for (i, row) in confusion.iter().enumerate() {
        let total: usize = row.iter().sum();
        let y = TOP + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6,
            y + CELL / 2 + 4,
            xml_escape(&names[i])
        );
        for (j, &v) in row.iter().enumerate() {
            let frac = if total == 0 { 0.0 } else { v as f64 / total as f64 };
            let x = LEFT + j * CELL;
            let _ = writeln!(
                s,
                r##"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"/>"##,
                shade(frac)
            );
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle" fill="{}">{v}</text>"#,
                x + CELL / 2,
                y + CELL / 2 + 4,
                text_color(frac)
            );
        }
    }
    let _ = writeln!(s, r#"<text x="{LEFT}" y="{}">rows: true class, columns: predicted</text>"#, TOP + k * CELL + 24);
    s.push_str("</svg>\n");
    s
}

pub fn attention_csv(summary: &AttentionSummary, families: &[String]) -> String {
    let mut out = String::from("class,count");
    for f in families {
        out.push(',');
        out.push_str(f);
    }
    out.push('\n');
    for ((name, row), n) in summary.class_names.iter().zip(&summary.mean).zip(&summary.counts) {
        let _ = write!(out, "{name},{n}");
        match row {
            Some(r) => r.iter().for_each(|v| {
                let _ = write!(out, ",{v:.6}");
            }),
            None => families.iter().for_each(|_| out.push(',')),
        }
        out.push('\n');
    }
    out
}

/// One row per class, one column per family; colors scaled to the largest mean weight.
pub fn attention_svg(title: &str, summary: &AttentionSummary, families: &[String]) -> String {
    let k = summary.class_names.len();
    let cols = families.len();
    let max = summary
        .mean
        .iter()
        .flatten()
        .flatten()
        .copied()
        .fold(0.0_f64, f64::max)
        .max(1e-12);
    let top = TOP + 90;
    let (w, h) = (LEFT + cols * CELL + 20, top + k * CELL + 40);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<text x="{LEFT}" y="20" font-size="14">{}</text>"#, xml_escape(title));
    for (j, f) in families.iter().enumerate() {
        let x = LEFT + j * CELL + CELL / 2;
        let _ = writeln!(
            s,
            r#"<text x="{x}" y="{}" transform="rotate(-60 {x} {})">{}</text>"#,
            top - 6,
            top - 6,
            xml_escape(f)
        );
    }
    for (i, (name, row)) in summary.class_names.iter().zip(&summary.mean).enumerate() {
        let y = top + i * CELL;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            LEFT - 6,
            y + CELL / 2 + 4,
            xml_escape(name)
        );
        for j in 0..cols {
            let x = LEFT + j * CELL;
            match row {
                Some(r) => {
                    let v = r[j] / max;
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#cccccc"/>"##,
                        shade(v)
                    );
                    let _ = writeln!(
                        s,
                        r#"<text x="{}" y="{}" text-anchor="middle" fill="{}">{:.2}</text>"#,
                        x + CELL / 2,
                        y + CELL / 2 + 4,
                        text_color(v),
                        r[j]
                    );
                }
                None => {
                    let _ = writeln!(
                        s,
                        r##"<rect class="cell absent" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#eeeeee" stroke="#cccccc"/>"##
                    );
                }
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

fn write_file(path: PathBuf, content: &str) -> Result<PathBuf> {
    std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Write `metrics.json`, `confusion.csv`, `confusion.svg` and, when present, `attention.csv`
/// and `attention.svg` into `out_dir`. Returns the written paths.
pub fn render_reports(bundle: &ReportBundle, out_dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics = out_dir.join("metrics.json");
    crate::io::write_json(&metrics, bundle)?;
    let confusion = bundle.aggregate.pooled_confusion();
    let mut written = vec![
        metrics,
        write_file(out_dir.join("confusion.csv"), &confusion_csv(&bundle.class_names, &confusion))?,
        write_file(out_dir.join("confusion.svg"), &confusion_svg(&bundle.title, &bundle.class_names, &confusion))?,
    ];
    if let Some(att) = &bundle.attention {
        written.push(write_file(out_dir.join("attention.csv"), &attention_csv(att, &bundle.family_names))?);
        written.push(write_file(
            out_dir.join("attention.svg"),
            &attention_svg(&bundle.title, att, &bundle.family_names),
        )?);
    }
    Ok(written)
}
