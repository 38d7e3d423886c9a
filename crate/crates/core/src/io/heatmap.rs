//! SVG heatmaps with a blue/white/red palette centred on 1.0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub title: String,
    pub row_label: String,
    pub col_label: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    /// `values[r][c]`; `None` marks a skipped cell.
    pub values: Vec<Vec<Option<f64>>>,
}

impl Heatmap {
    fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.cols.is_empty() {
            return Err(Error::Report(format!("heatmap '{}' has an empty grid", self.title)));
        }
        if self.values.len() != self.rows.len() || self.values.iter().any(|r| r.len() != self.cols.len()) {
            return Err(Error::Report(format!("heatmap '{}': values do not match the axes", self.title)));
        }
        Ok(())
    }
}

const CELL: f64 = 64.0;
const MARGIN_LEFT: f64 = 90.0;
const MARGIN_TOP: f64 = 50.0;
const PANEL_GAP: f64 = 40.0;

/// Ratio -> fill. log2 scale clamped at 4x either way: below 1 blue, above red.
fn color(v: f64) -> String {
    let t = (v.max(1e-12).log2() / 2.0).clamp(-1.0, 1.0);
    let fade = |x: f64| (255.0 * (1.0 - x.abs())).round() as u8;
    let (r, g, b) = if t < 0.0 {
        (fade(t), fade(t), 255)
    } else {
        (255, fade(t), fade(t))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

pub fn render_heatmaps(panels: &[Heatmap]) -> Result<String> {
    if panels.is_empty() {
        return Err(Error::Report("no heatmap panels".into()));
    }
    for p in panels {
        p.validate()?;
    }
    let panel_w = |p: &Heatmap| MARGIN_LEFT + CELL * p.cols.len() as f64;
    let width: f64 = panels.iter().map(panel_w).sum::<f64>() + PANEL_GAP * (panels.len() as f64 + 1.0);
    let height = panels.iter().map(|p| MARGIN_TOP + CELL * p.rows.len() as f64 + 50.0).fold(0.0, f64::max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    s.push_str(concat!(
        r#"<defs><pattern id="hatch" width="8" height="8" patternUnits="userSpaceOnUse" patternTransform="rotate(45)">"#,
        r##"<rect width="8" height="8" fill="#eeeeee"/><line x1="0" y1="0" x2="0" y2="8" stroke="#888888" stroke-width="3"/>"##,
        "</pattern></defs>\n"
    ));
    let mut x0 = PANEL_GAP;
    for p in panels {
        let _ = writeln!(s, r#"<g class="panel">"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="20" font-weight="bold">{}</text>"#,
            x0 + MARGIN_LEFT,
            escape(&p.title)
        );
        for (ri, row) in p.rows.iter().enumerate() {
            let y = MARGIN_TOP + CELL * ri as f64;
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
                x0 + MARGIN_LEFT - 6.0,
                y + CELL / 2.0 + 4.0,
                escape(row)
            );
            for (ci, v) in p.values[ri].iter().enumerate() {
                let x = x0 + MARGIN_LEFT + CELL * ci as f64;
                match v {
                    Some(v) => {
                        let _ = writeln!(
                            s,
                            r##"<rect class="cell" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="{}" stroke="#ffffff"/>"##,
                            color(*v)
                        );
                        let _ = writeln!(
                            s,
                            r#"<text class="label" x="{}" y="{}" text-anchor="middle">{v:.2}</text>"#,
                            x + CELL / 2.0,
                            y + CELL / 2.0 + 4.0
                        );
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            r##"<rect class="cell skipped" x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="url(#hatch)" stroke="#ffffff"/>"##
                        );
                    }
                }
            }
        }
        let base = MARGIN_TOP + CELL * p.rows.len() as f64;
        for (ci, col) in p.cols.iter().enumerate() {
            let _ = writeln!(
                s,
                r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
                x0 + MARGIN_LEFT + CELL * (ci as f64 + 0.5),
                base + 16.0,
                escape(col)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
            x0 + MARGIN_LEFT + CELL * p.cols.len() as f64 / 2.0,
            base + 36.0,
            escape(&p.col_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#,
            x0 + MARGIN_LEFT - 6.0,
            MARGIN_TOP - 8.0,
            escape(&p.row_label)
        );
        s.push_str("</g>\n");
        x0 += panel_w(p) + PANEL_GAP;
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Render and write; nothing is written if rendering fails.
pub fn write_heatmaps(panels: &[Heatmap], path: &Path) -> Result<()> {
    let svg = render_heatmaps(panels)?;
    fs::write(path, svg)?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(values: Vec<Vec<Option<f64>>>) -> Heatmap {
        Heatmap {
            title: "t".into(),
            row_label: "C".into(),
            col_label: "res".into(),
            rows: (0..values.len()).map(|i| format!("r{i}")).collect(),
            cols: (0..values[0].len()).map(|i| format!("c{i}")).collect(),
            values,
        }
    }

    #[test]
    fn two_by_two_contract() {
        let svg = render_heatmaps(&[grid(vec![vec![Some(0.5), Some(1.0)], vec![Some(1.5), None]])]).unwrap();
        assert_eq!(svg.matches(r#"class="cell""#).count(), 3);
        assert_eq!(svg.matches(r#"class="cell skipped""#).count(), 1);
        for label in [">0.50<", ">1.00<", ">1.50<"] {
            assert!(svg.contains(label), "{label}");
        }
        assert!(svg.contains(r##"fill="#ffffff""##));
    }

    #[test]
    fn palette_sides() {
        assert_eq!(color(1.0), "#ffffff");
        let red = |c: &str| c.starts_with("#ff") && c != "#ffffff";
        assert!(red(&color(4.67)));
        assert!(color(0.5).ends_with("ff") && !red(&color(0.5)));
    }

    #[test]
    fn empty_grid_writes_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.svg");
        let empty = Heatmap {
            title: "e".into(),
            row_label: String::new(),
            col_label: String::new(),
            rows: vec![],
            cols: vec![],
            values: vec![],
        };
        assert!(write_heatmaps(&[empty], &p).is_err());
        assert!(!p.exists());
        assert!(write_heatmaps(&[], &p).is_err());
    }
}
